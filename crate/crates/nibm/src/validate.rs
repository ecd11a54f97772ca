//! Invariant suites run by `nibm validate`. Each check becomes one row
//! `name, passed, value, threshold`; a check passes when `value < threshold`.

use clap::ValueEnum;
use nibm_core::distributions::{gue_log_survival, max_cdf, JointDensity};
use nibm_core::hermite::hermite_kernel_identity_residual;
use nibm_core::limit::{airy_convolution, f_goe_doubled, LimitSlice, DEFAULT_ORDER, MAX_DEFECT};
use nibm_core::{airy::ai, ModelKind};

use crate::error::Result;
use crate::montecarlo::{ecdf_ks, parallel_samples, sample_single_path_max, sample_wishart_max, PathKind};
use crate::output::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Seconds: closed forms, symmetries and small Monte-Carlo checks.
    Quick,
    /// Minutes: adds normalization at larger N and heavier sampling.
    Full,
}

struct Check {
    name: String,
    value: f64,
    threshold: f64,
}

fn check(name: impl Into<String>, value: f64, threshold: f64) -> Check {
    Check { name: name.into(), value, threshold }
}

fn sup(iter: impl IntoIterator<Item = Result<f64>>) -> Result<f64> {
    iter.into_iter().try_fold(0.0f64, |acc, v| Ok(acc.max(v?)))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn single_path_cdf(model: ModelKind, m: f64) -> f64 {
    let q = |k: f64| (-2.0 * k * k * m * m).exp();
    match model {
        ModelKind::BB => 1.0 - q(1.0),
        ModelKind::RBB => 1.0 + 2.0 * (1..60).map(|k| if k % 2 == 1 { -q(k as f64) } else { q(k as f64) }).sum::<f64>(),
        ModelKind::BE => 1.0 - 2.0 * (1..60).map(|k| (4.0 * (k * k) as f64 * m * m - 1.0) * q(k as f64)).sum::<f64>(),
    }
}

fn closed_forms() -> Result<Vec<Check>> {
    ModelKind::ALL
        .iter()
        .map(|&model| {
            let dev = sup((0..40).map(|i| {
                let m = 0.3 + 2.7 * i as f64 / 39.0;
                Ok((max_cdf(model, 1, m)? - single_path_cdf(model, m)).abs())
            }))?;
            Ok(check(format!("single_path_cdf_{}", model.as_str()), dev, 1e-9))
        })
        .collect()
}

fn density_checks(model: ModelKind, n: usize, with_mass: bool) -> Result<Vec<Check>> {
    let ev = JointDensity::new(model, n)?;
    let c = model.center(n);
    let ms = [c - 0.5, c, c + 0.4];
    let ts = [0.12, 0.3, 0.45];
    let mut sym = 0.0f64;
    let mut forms = 0.0f64;
    for &m in &ms {
        let s = ev.slice(m)?;
        for &t in &ts {
            let f = s.density(t)?;
            sym = sym.max(rel(f, s.density(1.0 - t)?));
            forms = forms.max(rel(f, s.density_det_difference(t)?));
        }
    }
    let h = 1e-4;
    let marginal = sup(ms.iter().map(|&m| {
        let fd = (max_cdf(model, n, m + h)? - max_cdf(model, n, m - h)?) / (2.0 * h);
        Ok((ev.max_density(m)? - fd).abs())
    }))?;
    let tag = format!("{}_n{n}", model.as_str());
    let mut out = vec![
        check(format!("density_symmetry_{tag}"), sym, 1e-9),
        check(format!("density_forms_{tag}"), forms, 1e-9),
        check(format!("marginal_vs_cdf_derivative_{tag}"), marginal, 1e-6),
    ];
    if with_mass {
        out.push(check(format!("normalization_{tag}"), (ev.total_mass()? - 1.0).abs(), 1e-5));
    }
    Ok(out)
}

fn identity_checks() -> Result<Vec<Check>> {
    let mut hermite = sup([
        hermite_kernel_identity_residual(5, 0.0, 0.3, -0.7).map_err(Into::into),
        hermite_kernel_identity_residual(8, 0.4, 1.0, 2.0).map_err(Into::into),
    ])?;
    for n in [1usize, 2, 3, 5, 8, 13, 21, 34, 55, 89] {
        for i in 0..10 {
            let x = -3.0 * (2.0 * n as f64).sqrt() * (1.0 - i as f64 / 4.5);
            hermite = hermite.max(hermite_kernel_identity_residual(n, 0.0, x, x)?);
        }
    }
    let conv = sup([(-2.0, 1.0), (0.0, 0.0), (1.5, -0.5), (3.0, 2.0)].map(|(a, b): (f64, f64)| {
        Ok((airy_convolution(a, b)? - 2f64.powf(-1.0 / 3.0) * ai(2f64.powf(-1.0 / 3.0) * (a + b))).abs())
    }))?;
    Ok(vec![check("hermite_kernel_identity", hermite, 1e-8), check("airy_convolution", conv, 1e-9)])
}

fn limit_checks(full: bool) -> Result<Vec<Check>> {
    let defect = sup([-4.0, -2.0, 0.0, 2.0].map(|m| Ok(f_goe_doubled(m, DEFAULT_ORDER)?.defect)))?;
    let goe0 = (f_goe_doubled(0.0, DEFAULT_ORDER)?.value - 0.8319080662).abs();
    let slice = LimitSlice::new(-0.5, 2 * DEFAULT_ORDER)?;
    let sym = sup([0.2, 0.7, 1.5].map(|t| Ok(rel(slice.density(t)?, slice.density(-t)?))))?;
    let mut out = vec![
        check("goe_order_doubling_defect", defect, MAX_DEFECT),
        check("goe_at_zero", goe0, 1e-8),
        check("limit_density_symmetry", sym, 1e-9),
    ];
    if full {
        let r = -0.5;
        let k = 4f64.powf(1.0 / 3.0);
        let h = 1e-3;
        let goe = |x: f64| Ok::<_, crate::CliError>(f_goe_doubled(x, DEFAULT_ORDER)?.value);
        let deriv = (goe(k * (r + h))? - goe(k * (r - h))?) / (2.0 * h);
        out.push(check("limit_time_marginal", (slice.time_marginal(1e-10)? - deriv).abs(), 1e-5));
    }
    Ok(out)
}

fn gue_envelope() -> Result<Check> {
    // inside the regime N t^{3/2} >= 10 where the envelope is sharp
    let n = 120usize;
    let t = 0.3f64;
    let s = (2.0 * n as f64).sqrt() * (1.0 + t);
    let ratio = -gue_log_survival(n, s)? / (8.0 * 2f64.sqrt() / 3.0 * n as f64 * t.powf(1.5));
    Ok(check("gue_tail_envelope_deviation", (ratio - 1.05).abs(), 0.3))
}

fn monte_carlo(seed: u64, full: bool) -> Result<Vec<Check>> {
    let samples = if full { 20_000 } else { 4_000 };
    let mut out = Vec::new();
    for n in if full { vec![1, 2, 4, 6] } else { vec![1, 3] } {
        let xs = parallel_samples(samples, seed, |rng| sample_wishart_max(n, rng))?;
        let law = nibm_core::distributions::MaxLaw::new(ModelKind::BB, n)?;
        let ks = ecdf_ks(&xs, |x| law.cdf(0.5 * x.sqrt()).unwrap_or(f64::NAN));
        out.push(check(format!("wishart_ks_n{n}"), ks, 1.63 / (samples as f64).sqrt() * 1.5));
    }
    let paths = if full { 20_000 } else { 2_000 };
    for (kind, model) in [(PathKind::Bridge, ModelKind::BB), (PathKind::Reflected, ModelKind::RBB)] {
        let xs = parallel_samples(paths, seed, |rng| sample_single_path_max(kind, 10, rng).map(|p| p.0))?;
        let ks = ecdf_ks(&xs, |m| single_path_cdf(model, m));
        // grid maxima sit below the continuum maximum by about 0.58 sqrt(h)
        let bias = 0.58 * 2f64.powf(-5.0) * 2.0;
        out.push(check(format!("single_path_ks_{}", model.as_str()), ks, 1.63 / (paths as f64).sqrt() * 1.5 + bias));
    }
    Ok(out)
}

/// Runs a suite; failing checks are rows with `passed = false`, not errors.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Table> {
    let full = suite == Suite::Full;
    let mut checks = closed_forms()?;
    checks.extend(density_checks(ModelKind::BB, 3, true)?);
    checks.extend(density_checks(ModelKind::BE, 2, true)?);
    checks.extend(density_checks(ModelKind::RBB, 2, true)?);
    if full {
        for model in ModelKind::ALL {
            checks.extend(density_checks(model, 6, true)?);
        }
        checks.extend(density_checks(ModelKind::BB, 10, true)?);
    }
    checks.extend(identity_checks()?);
    checks.extend(limit_checks(full)?);
    checks.push(gue_envelope()?);
    checks.extend(monte_carlo(seed, full)?);

    let mut table = Table::new(&["name", "passed", "value", "threshold"]);
    for c in checks {
        let passed = c.value < c.threshold;
        table.push(vec![c.name.into(), passed.into(), c.value.into(), c.threshold.into()]);
    }
    Ok(table)
}
