use nibm_core::distributions::{
    argmax_marginal, argmax_tail, gue_log_survival, joint_density_grid, loe_cdf, max_cdf, JointDensity, Precision,
};
use nibm_core::numerics::adaptive_gauss_legendre;
use nibm_core::ModelKind;

#[test]
fn joint_density_has_unit_mass() {
    for model in ModelKind::ALL {
        for n in [2, 4] {
            let mass = JointDensity::new(model, n).unwrap().total_mass().unwrap();
            assert!((mass - 1.0).abs() < 1e-5, "{model:?} N={n}: {mass}");
        }
    }
    let mass = JointDensity::new(ModelKind::BB, 10).unwrap().total_mass().unwrap();
    assert!((mass - 1.0).abs() < 1e-5);
}

#[test]
fn argmax_marginal_integrates_to_one() {
    let ev = JointDensity::new(ModelKind::BE, 3).unwrap();
    let mass = adaptive_gauss_legendre(|t| ev.argmax_marginal(t).unwrap(), 1e-3, 1.0 - 1e-3, 1e-12, 1e-9).unwrap();
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    let a = argmax_marginal(ModelKind::BE, 3, 0.3).unwrap();
    let b = argmax_marginal(ModelKind::BE, 3, 0.7).unwrap();
    assert!((a - b).abs() < 1e-8 * a);
}

#[test]
fn max_density_is_derivative_of_cdf() {
    for model in ModelKind::ALL {
        let ev = JointDensity::new(model, 3).unwrap();
        let centre = model.center(3);
        for m in [centre - 0.5, centre, centre + 0.4] {
            let h = 1e-4;
            let fd = (max_cdf(model, 3, m + h).unwrap() - max_cdf(model, 3, m - h).unwrap()) / (2.0 * h);
            let got = ev.max_density(m).unwrap();
            assert!((got - fd).abs() < 1e-6, "{model:?} m={m}: {got} vs {fd}");
        }
    }
}

#[test]
fn argmax_tails_are_a_survival_function() {
    assert!((argmax_tail(ModelKind::BB, 3, 1e-7).unwrap() - 1.0).abs() < 1e-6);
    let ev = JointDensity::new(ModelKind::RBB, 3).unwrap();
    let eps: Vec<f64> = (1..10).map(|i| 0.05 * i as f64).collect();
    let tails = ev.argmax_tails(&eps).unwrap();
    assert!(tails.windows(2).all(|w| w[1] <= w[0]), "{tails:?}");
    assert!(tails.iter().all(|&p| (0.0..=1.0).contains(&p)));
}

#[test]
fn bridge_grid_peaks_on_the_midline() {
    // The contour-plot grid at N = 6.
    let m_grid: Vec<f64> = (0..25).map(|i| 1.6 + 0.07 * i as f64).collect();
    let t_grid: Vec<f64> = (5..=95).map(|i| i as f64 / 100.0).collect();
    let g = joint_density_grid(ModelKind::BB, 6, &m_grid, &t_grid, Precision::Auto).unwrap();
    let (_, j) = g.argmax();
    assert!((g.t_grid[j] - 0.5).abs() < 1e-12);
    assert!(g.normalization_defect < 1e-5);
    assert_eq!(g.negative_points, 0);
    for row in &g.values {
        for (a, b) in row.iter().zip(row.iter().rev()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300));
        }
    }
}

#[test]
fn random_matrix_edges() {
    for n in [20, 50, 100] {
        let nf = n as f64;
        let mut prev = 1.0;
        for k in 0..=3 {
            let delta = k as f64 * nf.powf(-2.0 / 3.0);
            let v = loe_cdf(n, 4.0 * nf * (1.0 - delta)).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-3, "N={n}: {prev}");
    }
    for (n, t) in [(50, 0.3), (100, 0.2), (200, 0.5)] {
        let nf = n as f64;
        let ls = gue_log_survival(n, (2.0 * nf).sqrt() * (1.0 + t)).unwrap();
        let ratio = -ls / (8.0 * 2f64.sqrt() / 3.0 * nf * t.powf(1.5));
        assert!((0.75..=1.35).contains(&ratio), "N={n} t={t}: {ratio}");
    }
}
