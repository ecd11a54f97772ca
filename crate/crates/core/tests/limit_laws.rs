use nibm_core::limit::{convergence_report, convergence_report_with, EdgeScaling, LimitSlice, DEFAULT_ORDER};
use nibm_core::numerics::adaptive_gauss_legendre;
use nibm_core::ModelKind;

#[test]
fn limit_density_has_unit_mass() {
    let total = adaptive_gauss_legendre(
        |r| {
            let s = LimitSlice::new(r, 2 * DEFAULT_ORDER).unwrap();
            2.0 * adaptive_gauss_legendre(|t| s.density(t).unwrap(), 0.0, 5.0, 1e-9, 1e-8).unwrap()
        },
        -8.0,
        6.0,
        1e-9,
        1e-8,
    )
    .unwrap();
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}

#[test]
fn bridge_cdf_approaches_goe() {
    let r_grid: Vec<f64> = (0..=40).map(|i| -4.0 + 0.15 * i as f64).collect();
    let report = convergence_report(ModelKind::BB, &[10, 20, 40], &r_grid, &[-1.0, 0.0, 1.0]).unwrap();
    let devs: Vec<f64> = report.rows.iter().map(|r| r.cdf_sup_deviation).collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
    assert!(devs[2] < 0.05);
    let limit = report.rows.last().unwrap();
    assert_eq!(limit.label, "inf");
    assert_eq!(limit.density_sup_deviation, 0.0);
    assert_eq!(limit.cdf_sup_deviation, 0.0);
}

#[test]
fn miscentred_reflected_bridges_do_not_converge() {
    let r_grid: Vec<f64> = (0..=20).map(|i| -4.0 + 0.3 * i as f64).collect();
    let right = convergence_report(ModelKind::RBB, &[20], &r_grid, &[]).unwrap();
    assert!(right.rows[0].cdf_sup_deviation < 0.2);
    let wrong = EdgeScaling { centre_factor: 1.0, ..EdgeScaling::for_model(ModelKind::RBB) };
    let bad = convergence_report_with(ModelKind::RBB, wrong, &[20], &r_grid, &[], DEFAULT_ORDER).unwrap();
    assert!(bad.rows[0].cdf_sup_deviation > 0.5, "{}", bad.rows[0].cdf_sup_deviation);
}
