//! Hermite-basis matrices of the reflected projections `K rho K` for the three
//! path ensembles, the GUE spectral projection, and the rank-one vectors that
//! turn the max law into the joint (max, argmax) density.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::hermite::{self, OverlapRule};
use crate::numerics::{ScaledReal, SquareMatrix};

/// Below this barrier the BE/RBB reflection series needs more than `10^4`
/// terms; the CDF there is zero to double precision anyway.
pub const BARRIER_MIN: f64 = 1e-3;
/// Cap on reflection-series terms.
pub const MAX_SERIES_TERMS: usize = 10_000;

/// The three ensembles: non-intersecting Brownian bridges, Brownian
/// excursions (absorbing wall at 0) and reflected bridges (reflecting wall).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    BB,
    BE,
    RBB,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::BB, ModelKind::BE, ModelKind::RBB];

    /// Hermite index of basis position `j`: `j` for BB, `2j+1` for BE,
    /// `2j` for RBB.
    pub fn index(self, j: usize) -> usize {
        match self {
            ModelKind::BB => j,
            ModelKind::BE => 2 * j + 1,
            ModelKind::RBB => 2 * j,
        }
    }

    pub fn indices(self, n_paths: usize) -> Vec<usize> {
        (0..n_paths).map(|j| self.index(j)).collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::BB => "bb",
            ModelKind::BE => "be",
            ModelKind::RBB => "rbb",
        }
    }

    /// Centre of the max fluctuation window: `sqrt(N)` for bridges and
    /// `sqrt(2N)` for the half-line ensembles.
    pub fn center(self, n_paths: usize) -> f64 {
        match self {
            ModelKind::BB => (n_paths as f64).sqrt(),
            _ => (2.0 * n_paths as f64).sqrt(),
        }
    }

    // Reflection coefficients c_k of rho = sum_k c_k rho_{k barrier}.
    fn series_coefficient(self, k: usize) -> f64 {
        match self {
            ModelKind::BB => {
                if k == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::BE => 2.0,
            ModelKind::RBB => {
                if k % 2 == 1 {
                    2.0
                } else {
                    -2.0
                }
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bb" => Ok(ModelKind::BB),
            "be" => Ok(ModelKind::BE),
            "rbb" => Ok(ModelKind::RBB),
            other => Err(invalid(format!("unknown model '{other}' (expected bb, be or rbb)"))),
        }
    }
}

/// `N x N` Hermite-basis matrix of a finite-rank operator.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub model: ModelKind,
    pub n_paths: usize,
    /// Reflection barrier in the `sqrt(2)`-scaled height coordinate (or the
    /// cut point `s` for a GUE projection).
    pub barrier: f64,
    pub entries: SquareMatrix,
    pub truncation_terms: usize,
}

/// Reusable builder: holds the quadrature rule for one `(model, N)` pair.
#[derive(Clone, Debug)]
pub struct OperatorBuilder {
    model: ModelKind,
    n_paths: usize,
    indices: Vec<usize>,
    rule: OverlapRule,
}

impl OperatorBuilder {
    pub fn new(model: ModelKind, n_paths: usize) -> Result<Self> {
        if n_paths == 0 || n_paths > 500 {
            return Err(invalid(format!("N must be in 1..=500, got {n_paths}")));
        }
        let indices = model.indices(n_paths);
        let rule = OverlapRule::new(*indices.last().unwrap())?;
        Ok(OperatorBuilder { model, n_paths, indices, rule })
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `sum_k c_k <phi_a, rho_{k barrier} phi_b>` over the basis.
    pub fn build(&self, barrier: f64, tol: f64) -> Result<OperatorMatrix> {
        if !(barrier > 0.0) || !barrier.is_finite() {
            return Err(invalid(format!("barrier must be positive, got {barrier}")));
        }
        if !(tol >= 1e-16) {
            return Err(invalid(format!("tol must be at least 1e-16, got {tol}")));
        }
        if self.model != ModelKind::BB && barrier <= BARRIER_MIN {
            return Err(Error::SeriesTooSlow(format!(
                "{} reflection series at barrier {barrier} <= {BARRIER_MIN}",
                self.model
            )));
        }
        let dim = self.n_paths;
        let idx_max = *self.indices.last().unwrap() as f64;
        let turning = (2.0 * idx_max + 1.0).sqrt();
        let mut acc = vec![0.0; dim * dim];
        let mut terms = 0;
        for k in 1..=MAX_SERIES_TERMS {
            let c = k as f64 * barrier;
            let coef = self.model.series_coefficient(k);
            let block = self.rule.block(&self.indices, c);
            let mut term_max = 0.0f64;
            for (a, b) in acc.iter_mut().zip(&block) {
                *a += coef * b;
                term_max = term_max.max((coef * b).abs());
            }
            terms = k;
            if self.model == ModelKind::BB {
                break;
            }
            // Once the reflection centre is past the turning point of every
            // basis function the terms fall off like e^{-c^2}, faster than
            // geometrically, so a term ten times below tol ends the series.
            if c > turning && term_max < 0.1 * tol {
                break;
            }
            if k == MAX_SERIES_TERMS {
                return Err(Error::SeriesTooSlow(format!(
                    "{} reflection series did not reach tol {tol} within {MAX_SERIES_TERMS} terms at barrier {barrier}",
                    self.model
                )));
            }
        }
        Ok(OperatorMatrix {
            model: self.model,
            n_paths: dim,
            barrier,
            entries: SquareMatrix::from_row_major(dim, acc)?,
            truncation_terms: terms,
        })
    }
}

/// Matrix of `K rho K` for the given model at a reflection barrier
/// (in the `sqrt(2)`-scaled coordinate).
pub fn build_operator(model: ModelKind, n_paths: usize, barrier: f64, tol: f64) -> Result<OperatorMatrix> {
    OperatorBuilder::new(model, n_paths)?.build(barrier, tol)
}

/// `[int_s^inf phi_n phi_k]_{n,k<N}`, the GUE projection restricted to `(s, inf)`.
pub fn build_gue_projection(n_paths: usize, s: f64) -> Result<OperatorMatrix> {
    if n_paths == 0 || n_paths > 500 {
        return Err(invalid(format!("N must be in 1..=500, got {n_paths}")));
    }
    if s.is_nan() {
        return Err(invalid("cut point must not be NaN"));
    }
    Ok(OperatorMatrix {
        model: ModelKind::BB,
        n_paths,
        barrier: s,
        entries: hermite::projection_matrix(n_paths, s),
        truncation_terms: 1,
    })
}

/// The two coefficient vectors of the rank-one perturbation, in the
/// original `(m, t)` coordinates: `u_j = psi_{m,t}(idx_j)`,
/// `v_j = psi_{m,1-t}(idx_j)`.
#[derive(Clone, Debug)]
pub struct PsiPair {
    pub model: ModelKind,
    pub n_paths: usize,
    pub barrier_m: f64,
    pub time_t: f64,
    pub u: Vec<ScaledReal>,
    pub v: Vec<ScaledReal>,
    /// `tau = log(t/(1-t)) / 2`; `u_j` carries a factor `e^{-idx_j tau}`
    /// and `v_j` a factor `e^{idx_j tau}`.
    pub balance_tau: f64,
    /// Largest number of reflection-series terms used by either vector.
    pub series_terms: usize,
}

impl PsiPair {
    /// `g(t) = 1/sqrt(2 t (1-t))`.
    pub fn g(&self) -> f64 {
        g_of(self.time_t)
    }
}

pub fn g_of(t: f64) -> f64 {
    1.0 / (2.0 * t * (1.0 - t)).sqrt()
}

/// Hatted time `tau = log(t/(1-t)) / 2`.
pub fn hatted_time(t: f64) -> f64 {
    0.5 * (t / (1.0 - t)).ln()
}

/// Builds `psi_{m,t}` and `psi_{m,1-t}` on the model's index set.
///
/// Computed in hatted form, `psi_{m,t} = 2^{3/4} cosh(tau) psihat_{r,tau}` with
/// `r = sqrt(2) m`, where
/// `psihat_{r,tau}(n) = sqrt(2 cosh tau) e^{-n tau} [phi_n'(a) + r sinh(tau) phi_n(a)]`,
/// `a = r cosh tau`, and for BE/RBB the doubled base term plus the series
/// `2 sqrt(2 cosh tau) e^{-n tau} sum_k s_k e^{k(k+1) r^2 sinh(2 tau)}
///  [phi_n'((2k+1)a) + (2k+1) r sinh(tau) phi_n((2k+1)a)]`
/// with `s_k = 1` (BE) or `(-1)^k` (RBB).
pub fn build_psi_pair(model: ModelKind, n_paths: usize, m: f64, t: f64, tol: f64) -> Result<PsiPair> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid(format!("t must lie in (0,1), got {t}")));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(invalid(format!("m must be positive, got {m}")));
    }
    if n_paths == 0 || n_paths > 500 {
        return Err(invalid(format!("N must be in 1..=500, got {n_paths}")));
    }
    let tau = hatted_time(t);
    let r = 2f64.sqrt() * m;
    let indices = model.indices(n_paths);
    let (u, terms_u) = psi_hat_vector(model, &indices, r, tau, tol)?;
    let (v, terms_v) = psi_hat_vector(model, &indices, r, -tau, tol)?;
    let scale = 2f64.powf(0.75) * tau.cosh();
    Ok(PsiPair {
        model,
        n_paths,
        barrier_m: m,
        time_t: t,
        u: u.into_iter().map(|x| x.mul_f64(scale)).collect(),
        v: v.into_iter().map(|x| x.mul_f64(scale)).collect(),
        balance_tau: tau,
        series_terms: terms_u.max(terms_v),
    })
}

/// `psihat_{r,tau}(idx)` for every index, in scaled form. Returns the vector
/// and the number of series terms used.
pub fn psi_hat_vector(
    model: ModelKind,
    indices: &[usize],
    r: f64,
    tau: f64,
    tol: f64,
) -> Result<(Vec<ScaledReal>, usize)> {
    psi_hat_vector_with_magnitude(model, indices, r, tau, tol).map(|p| (p.values, p.terms))
}

/// `psihat` together with the sum of the absolute values of everything
/// that was added to form it, the scale of its rounding error.
#[derive(Clone, Debug)]
pub struct PsiHat {
    pub values: Vec<ScaledReal>,
    pub magnitudes: Vec<ScaledReal>,
    pub terms: usize,
}

pub fn psi_hat_vector_with_magnitude(
    model: ModelKind,
    indices: &[usize],
    r: f64,
    tau: f64,
    tol: f64,
) -> Result<PsiHat> {
    let idx_max = *indices.last().unwrap();
    let ch = tau.cosh();
    let sh = tau.sinh();
    let a = r * ch;
    let prefactor = (2.0 * ch).sqrt();
    // bracket_k(n) = phi_n'(y) + (2k+1) r sinh(tau) phi_n(y), y = (2k+1) a,
    // with phi_n' from the ladder relation.
    let bracket = |k: usize| -> Vec<(ScaledReal, ScaledReal)> {
        let odd = (2 * k + 1) as f64;
        let y = odd * a;
        let vals = hermite::phi_all_scaled(idx_max + 2, y);
        indices
            .iter()
            .map(|&n| {
                let nf = n as f64;
                let below = if n == 0 { ScaledReal::ZERO } else { vals[n - 1].mul_f64((nf / 2.0).sqrt()) };
                let above = vals[n + 1].mul_f64(((nf + 1.0) / 2.0).sqrt());
                let own = vals[n].mul_f64(odd * r * sh);
                (below - above + own, below.abs() + above.abs() + own.abs())
            })
            .collect()
    };
    let base_weight = if model == ModelKind::BB { 1.0 } else { 2.0 };
    let (mut sums, mut mags): (Vec<ScaledReal>, Vec<ScaledReal>) =
        bracket(0).into_iter().map(|(b, m)| (b.mul_f64(base_weight), m.mul_f64(base_weight))).unzip();
    let mut terms = 0;
    if model != ModelKind::BB {
        let turning = (2.0 * idx_max as f64 + 1.0).sqrt() + 1.0;
        let log_tol = tol.ln();
        for k in 1..=MAX_SERIES_TERMS {
            let kf = k as f64;
            let growth = kf * (kf + 1.0) * r * r * (2.0 * tau).sinh();
            let sign = if model == ModelKind::RBB && k % 2 == 1 { -2.0 } else { 2.0 };
            let mut term_max = f64::NEG_INFINITY;
            let sum_max = sums.iter().map(|x| x.log_mag()).fold(f64::NEG_INFINITY, f64::max);
            for ((s, m), (b, bm)) in sums.iter_mut().zip(mags.iter_mut()).zip(bracket(k)) {
                let x = b.scale_exp(growth).mul_f64(sign);
                term_max = term_max.max(x.log_mag());
                *s = *s + x;
                *m = *m + bm.scale_exp(growth).mul_f64(2.0);
            }
            terms = k;
            // Past the turning point phi_n decays like a Gaussian in k, so a
            // negligible term bounds the rest of the series.
            let y = (2.0 * kf + 1.0) * a;
            let negligible = term_max == f64::NEG_INFINITY || term_max - sum_max.max(-700.0) < log_tol;
            if y > turning && negligible {
                break;
            }
            if k == MAX_SERIES_TERMS {
                return Err(Error::SeriesTooSlow(format!(
                    "psi series at r={r}, tau={tau} did not converge within {MAX_SERIES_TERMS} terms"
                )));
            }
        }
    }
    let finish = |xs: Vec<ScaledReal>| -> Vec<ScaledReal> {
        indices.iter().zip(xs).map(|(&n, s)| s.mul_f64(prefactor).scale_exp(-(n as f64) * tau)).collect()
    };
    Ok(PsiHat { values: finish(sums), magnitudes: finish(mags), terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::overlap_reflect;
    use crate::numerics::{det_lu, sym_eigen};

    #[test]
    fn index_maps() {
        assert_eq!(ModelKind::BB.indices(3), vec![0, 1, 2]);
        assert_eq!(ModelKind::BE.indices(3), vec![1, 3, 5]);
        assert_eq!(ModelKind::RBB.indices(3), vec![0, 2, 4]);
        assert_eq!("RBB".parse::<ModelKind>().unwrap(), ModelKind::RBB);
        assert!("xx".parse::<ModelKind>().is_err());
    }

    #[test]
    fn single_bridge_operator() {
        for c in [0.3, 1.0, 2.2] {
            let op = build_operator(ModelKind::BB, 1, c, 1e-15).unwrap();
            assert!((op.entries.get(0, 0) - (-c * c).exp()).abs() < 1e-15);
            let det = det_lu(&op.entries.identity_minus());
            assert!((det - (1.0 - (-c * c).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn single_excursion_operator() {
        for c in [0.4, 1.0, 1.7] {
            let op = build_operator(ModelKind::BE, 1, c, 1e-16).unwrap();
            let mut want = 0.0;
            for k in 1..200 {
                let kc = k as f64 * c;
                want += 2.0 * 2.0 * (-kc * kc).exp() * (kc * kc - 0.5);
            }
            assert!((op.entries.get(0, 0) - want).abs() < 1e-14, "c={c}");
            // Oracle entries from independently computed overlaps.
            assert!((overlap_reflect(1, 1, c).unwrap() - 2.0 * (-c * c).exp() * (c * c - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn parity_limit_at_tiny_barrier() {
        // Off-diagonal entries are O(barrier): the (0,1) entry is exactly
        // sqrt(2) c e^{-c^2}.
        let c = 1e-6;
        let op = build_operator(ModelKind::BB, 3, c, 1e-15).unwrap();
        let e01 = 2f64.sqrt() * c * (-c * c).exp();
        assert!((op.entries.get(0, 1) - e01).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i != j {
                    0.0
                } else if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                let slope = (2.0 * i.max(j) as f64).sqrt();
                assert!((op.entries.get(i, j) - want).abs() <= slope * c * (1.0 + 1e-6) + 1e-11);
            }
        }
    }

    #[test]
    fn barrier_validation() {
        assert!(matches!(build_operator(ModelKind::BB, 2, 0.0, 1e-12), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_operator(ModelKind::BE, 2, 5e-4, 1e-12), Err(Error::SeriesTooSlow(_))));
        assert!(matches!(build_operator(ModelKind::RBB, 2, -1.0, 1e-12), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn operators_are_symmetric() {
        for model in ModelKind::ALL {
            for &barrier in &[0.05, 0.6, 2.0, 5.0] {
                let op = build_operator(model, 7, barrier, 1e-15).unwrap();
                assert!(op.entries.asymmetry() < 1e-12);
                let (vals, _) = sym_eigen(&op.entries).unwrap();
                let radius = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if model == ModelKind::BB {
                    // Projection, reflection, projection.
                    assert!(radius <= 1.0 + 1e-10, "{barrier} radius {radius}");
                }
                let det = det_lu(&op.entries.identity_minus());
                assert!((-1e-12..=1.0 + 1e-12).contains(&det), "{model} {barrier} det {det}");
            }
        }
    }

    #[test]
    fn series_operators_are_not_contractions() {
        // The wall images sum to an unbounded operator; K rho K can have
        // eigenvalues below -1 while det(I - K rho K) stays a probability.
        let op = build_operator(ModelKind::BE, 7, 2.0, 1e-15).unwrap();
        let (vals, _) = sym_eigen(&op.entries).unwrap();
        assert!(vals[0] < -1.0);
    }

    #[test]
    fn determinant_monotone_in_barrier() {
        for model in ModelKind::ALL {
            let mut last = -1.0;
            for i in 1..=100 {
                let barrier = 0.15 * i as f64;
                let op = build_operator(model, 4, barrier, 1e-15).unwrap();
                let det = det_lu(&op.entries.identity_minus());
                assert!(det >= last - 1e-13, "{model} barrier {barrier}");
                last = det;
            }
            assert!((last - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_doubling() {
        for model in [ModelKind::BE, ModelKind::RBB] {
            let tol = 1e-12;
            let op = build_operator(model, 5, 0.2, tol).unwrap();
            let builder = OperatorBuilder::new(model, 5).unwrap();
            // Re-sum with twice the number of terms directly.
            let idx = builder.indices().to_vec();
            let rule = OverlapRule::new(*idx.last().unwrap()).unwrap();
            let mut acc = [0.0; 25];
            for k in 1..=2 * op.truncation_terms {
                let block = rule.block(&idx, k as f64 * 0.2);
                let coef = model.series_coefficient(k);
                for (a, b) in acc.iter_mut().zip(&block) {
                    *a += coef * b;
                }
            }
            for (a, b) in acc.iter().zip(op.entries.entries()) {
                assert!((a - b).abs() < tol);
            }
        }
    }

    #[test]
    fn gue_projection_examples() {
        let p = build_gue_projection(1, 0.0).unwrap();
        assert!((p.entries.get(0, 0) - 0.5).abs() < 1e-15);
        let p = build_gue_projection(6, -40.0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p.entries.get(i, j) - want).abs() < 1e-12);
            }
        }
        let p = build_gue_projection(2, 1.0).unwrap();
        let rule = crate::numerics::gauss_legendre(200, 1.0, 15.0).unwrap();
        let brute = rule.integrate(|x| {
            let v = hermite::phi_all(2, x);
            v[0] * v[0] + v[1] * v[1]
        });
        assert!((p.entries.trace() - brute).abs() < 1e-11);
    }

    #[test]
    fn psi_symmetric_time() {
        let p = build_psi_pair(ModelKind::BB, 5, 1.7, 0.5, 1e-15).unwrap();
        for (a, b) in p.u.iter().zip(&p.v) {
            assert!((a.to_f64() - b.to_f64()).abs() <= 1e-15 * a.to_f64().abs());
        }
    }

    #[test]
    fn psi_single_bridge_direct_formula() {
        for &(m, t) in &[(0.8, 0.3), (1.4, 0.5), (0.5, 0.9)] {
            let p = build_psi_pair(ModelKind::BB, 1, m, t, 1e-15).unwrap();
            let g = g_of(t);
            let x = m * g;
            let phi0 = core::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
            let want = 2f64.sqrt() * g.powf(1.5) * (2.0 * t - 2.0) * x * phi0;
            assert!((p.u[0].to_f64() - want).abs() < 1e-13 * want.abs(), "{m} {t}");
        }
    }

    #[test]
    fn psi_swap_symmetry() {
        for model in ModelKind::ALL {
            let a = build_psi_pair(model, 6, 1.3, 0.27, 1e-16).unwrap();
            let b = build_psi_pair(model, 6, 1.3, 0.73, 1e-16).unwrap();
            for j in 0..6 {
                let (x, y) = (a.u[j].to_f64(), b.v[j].to_f64());
                assert!((x - y).abs() <= 1e-12 * x.abs(), "{model} {j}: {x} {y}");
                let (x, y) = (a.v[j].to_f64(), b.u[j].to_f64());
                assert!((x - y).abs() <= 1e-12 * x.abs());
            }
        }
    }

    #[test]
    fn reflected_corrections_negligible_far_out() {
        let t = 0.4;
        let m = 8.0 / g_of(t);
        let rbb = build_psi_pair(ModelKind::RBB, 1, m, t, 1e-20).unwrap();
        let bb = build_psi_pair(ModelKind::BB, 1, m, t, 1e-20).unwrap();
        let want = 2.0 * bb.u[0].to_f64();
        assert!((rbb.u[0].to_f64() - want).abs() < 1e-12 * want.abs());
    }
}
