//! Finite-N laws: the max CDFs, the joint (max, argmax) density, argmax
//! marginals and tails, and the LOE and GUE CDFs they are tied to.
//!
//! Densities are evaluated in the hatted coordinates `r = sqrt(2) m`,
//! `tau = log(t/(1-t)) / 2`, where
//! `f(m, t) dm dt = fhat(r, tau) dr dtau` and
//! `fhat(r, tau) = det(I - M_r) vhat^T (I - M_r)^{-1} uhat` with
//! `uhat = psihat_{r,tau}`, `vhat = psihat_{r,-tau}`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::kernels::{
    build_gue_projection, hatted_time, psi_hat_vector_with_magnitude, ModelKind, OperatorBuilder, BARRIER_MIN,
};
use crate::numerics::{
    adaptive_gauss_legendre, adaptive_gauss_legendre_vec, sym_eigen, DoubleDouble, Lu, ScaledReal, SquareMatrix,
};

/// Reflection-series tolerance used by every law in this module.
pub const SERIES_TOL: f64 = 1e-15;
pub const MAX_PATHS_CDF: usize = 300;
pub const MAX_PATHS_DENSITY: usize = 200;
/// Largest `N |tau|` accepted in plain double precision.
pub const PLAIN_WINDOW: f64 = 40.0;
/// Largest `N |tau|` accepted with paired-limb arithmetic.
pub const EXTENDED_WINDOW: f64 = 600.0;
/// Balancing range `e^{idx_max |tau|}` above which `Auto` switches to paired limbs.
pub const DYNAMIC_RANGE_LIMIT: f64 = 1e14;
/// Negative densities above this are rounding noise and are clipped to 0.
pub const CLIP_FLOOR: f64 = -1e-12;

/// Validity thresholds and upper rate of the argmax small-deviation envelope
/// `P(|T_N - 1/2| > eps) <= c e^{-(32/3) N eps^3 + O(N^{2/3})}`.
pub const EPSILON_1: f64 = 0.16;
pub const EPSILON_2: f64 = 0.38;
pub const UPPER_RATE: f64 = 32.0 / 3.0;

const RADIAL_REL_TOL: f64 = 1e-10;
const TIME_REL_TOL: f64 = 1e-11;
const BOUNDARY_RATIO: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    /// Paired limbs only when the balancing range exceeds `DYNAMIC_RANGE_LIMIT`.
    #[default]
    Auto,
    Plain,
    Extended,
}

fn check_paths(n_paths: usize, cap: usize) -> Result<()> {
    if n_paths == 0 || n_paths > cap {
        return Err(invalid(format!("N must be in 1..={cap}, got {n_paths}")));
    }
    Ok(())
}

/// `P(M_N <= m)` for repeated evaluation at one `(model, N)`.
#[derive(Clone, Debug)]
pub struct MaxLaw {
    builder: OperatorBuilder,
    tol: f64,
}

impl MaxLaw {
    pub fn new(model: ModelKind, n_paths: usize) -> Result<Self> {
        check_paths(n_paths, MAX_PATHS_CDF)?;
        Ok(MaxLaw { builder: OperatorBuilder::new(model, n_paths)?, tol: SERIES_TOL })
    }

    /// Reflection-series tolerance, `SERIES_TOL` by default.
    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(1e-16..=1e-4).contains(&tol) {
            return Err(invalid(format!("series tolerance must lie in [1e-16, 1e-4], got {tol}")));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn model(&self) -> ModelKind {
        self.builder.model()
    }

    pub fn n_paths(&self) -> usize {
        self.builder.n_paths()
    }

    pub fn cdf(&self, m: f64) -> Result<f64> {
        if m.is_nan() {
            return Err(invalid("m must not be NaN"));
        }
        if m <= 0.0 {
            return Ok(0.0);
        }
        self.det_at_barrier(2f64.sqrt() * m)
    }

    /// `det(I - M)` at a barrier in the scaled coordinate.
    pub fn det_at_barrier(&self, barrier: f64) -> Result<f64> {
        if barrier == f64::INFINITY {
            return Ok(1.0);
        }
        match self.builder.build(barrier, self.tol) {
            Ok(op) => Ok(op.entries.identity_minus().det()),
            // The CDF is below double resolution where the series stalls.
            Err(Error::SeriesTooSlow(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    }
}

trait Det {
    fn det(&self) -> f64;
}

impl Det for SquareMatrix {
    fn det(&self) -> f64 {
        crate::numerics::det_lu(self)
    }
}

/// `P(M_N <= m)`; zero for `m <= 0`.
pub fn max_cdf(model: ModelKind, n_paths: usize, m: f64) -> Result<f64> {
    MaxLaw::new(model, n_paths)?.cdf(m)
}

/// `F_{LOE,N}(x)`, the law of the largest LOE eigenvalue, via
/// `F_{LOE,N}(2 b^2) = det(I - M_b)` for the bridge operator at barrier `b`.
pub fn loe_cdf(n_paths: usize, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    MaxLaw::new(ModelKind::BB, n_paths)?.det_at_barrier((0.5 * x).sqrt())
}

/// `P(lambda_max <= s)` for the `N x N` GUE with density `~ e^{-tr H^2}`.
pub fn gue_cdf(n_paths: usize, s: f64) -> Result<f64> {
    check_paths(n_paths, MAX_PATHS_CDF)?;
    Ok(build_gue_projection(n_paths, s)?.entries.identity_minus().det())
}

/// `log P(lambda_max > s)`, accurate deep in the upper tail where
/// `1 - gue_cdf` is lost to cancellation: `1 - prod(1 - mu_i)` over the
/// eigenvalues of the projection.
pub fn gue_log_survival(n_paths: usize, s: f64) -> Result<f64> {
    check_paths(n_paths, MAX_PATHS_CDF)?;
    let op = build_gue_projection(n_paths, s)?;
    let (mu, _) = sym_eigen(&op.entries)?;
    let log_cdf: f64 = mu.iter().map(|&x| (-x.clamp(0.0, 1.0)).ln_1p()).sum();
    Ok((-(log_cdf.exp_m1())).ln())
}

/// Joint (max, argmax) density evaluator for one `(model, N)`.
#[derive(Clone, Debug)]
pub struct JointDensity {
    builder: OperatorBuilder,
    precision: Precision,
}

impl JointDensity {
    pub fn new(model: ModelKind, n_paths: usize) -> Result<Self> {
        check_paths(n_paths, MAX_PATHS_DENSITY)?;
        Ok(JointDensity { builder: OperatorBuilder::new(model, n_paths)?, precision: Precision::Auto })
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn model(&self) -> ModelKind {
        self.builder.model()
    }

    pub fn n_paths(&self) -> usize {
        self.builder.n_paths()
    }

    /// Largest `|tau|` this evaluator will accept.
    pub fn tau_window(&self) -> f64 {
        let w = match self.precision {
            Precision::Plain => PLAIN_WINDOW,
            _ => EXTENDED_WINDOW,
        };
        w / self.n_paths() as f64
    }

    /// Everything that depends on the height only.
    pub fn slice_hat(&self, r: f64) -> Result<HeightSlice<'_>> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(invalid(format!("height must be positive, got {r}")));
        }
        if self.model() != ModelKind::BB && r <= BARRIER_MIN {
            return Ok(HeightSlice { ev: self, r, a: None });
        }
        let a = self.builder.build(r, SERIES_TOL)?.entries.identity_minus();
        let ext: Vec<DoubleDouble> = a.entries().iter().map(|&x| DoubleDouble::from_f64(x)).collect();
        let det_plain = Lu::factor(a.dim(), a.entries().to_vec()).det();
        let det_ext = Lu::factor(a.dim(), ext).det();
        Ok(HeightSlice { ev: self, r, a: Some(Factored { a, det_plain, det_ext }) })
    }

    pub fn slice(&self, m: f64) -> Result<HeightSlice<'_>> {
        self.slice_hat(2f64.sqrt() * m)
    }

    /// `f_N(m, t)` by the balanced trace form.
    pub fn density(&self, m: f64, t: f64) -> Result<f64> {
        self.slice(m)?.density(t)
    }

    /// `f_N(m, t)` as `det(I - M + Psi) - det(I - M)` in paired-limb arithmetic.
    pub fn density_det_difference(&self, m: f64, t: f64) -> Result<f64> {
        self.slice(m)?.density_det_difference(t)
    }

    /// `P(T_N in dt) / dt`.
    pub fn argmax_marginal(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let tau = hatted_time(t);
        let [v] = self.integrate_heights(|s| {
            let (v, e) = s.density_hat_with_noise(tau)?;
            Ok(([v], [e]))
        })?;
        Ok(2.0 * tau.cosh().powi(2) * v)
    }

    /// `P(M_N in dm) / dm`, marginalizing the joint density over time.
    pub fn max_density(&self, m: f64) -> Result<f64> {
        let s = self.slice(m)?;
        Ok(2.0 * 2f64.sqrt() * s.tau_suffix_integrals(&[0.0])?[0])
    }

    /// Total mass of the joint density.
    pub fn total_mass(&self) -> Result<f64> {
        let [v] = self.integrate_heights(|s| {
            let (v, e) = s.tau_suffix_integrals_with_error(&[0.0])?;
            Ok(([v[0]], [e[0]]))
        })?;
        Ok(2.0 * v)
    }

    /// `P(|T_N - 1/2| > eps)` for each `eps`.
    pub fn argmax_tails(&self, epsilons: &[f64]) -> Result<Vec<f64>> {
        for &e in epsilons {
            if !(e > 0.0 && e < 0.5) {
                return Err(invalid(format!("epsilon must lie in (0, 1/2), got {e}")));
            }
        }
        let mut order: Vec<usize> = (0..epsilons.len()).collect();
        order.sort_by(|&a, &b| epsilons[a].total_cmp(&epsilons[b]));
        let cuts: Vec<f64> = order.iter().map(|&i| hatted_time(0.5 + epsilons[i])).collect();
        let sorted = self.integrate_heights_vec(cuts.len(), |s| s.tau_suffix_integrals_with_error(&cuts))?;
        let mut out = vec![0.0; epsilons.len()];
        for (k, &i) in order.iter().enumerate() {
            out[i] = (2.0 * sorted[k]).clamp(0.0, 1.0);
        }
        Ok(out)
    }

    fn integrate_heights<const D: usize>(
        &self,
        g: impl Fn(&HeightSlice<'_>) -> Result<([f64; D], [f64; D])>,
    ) -> Result<[f64; D]> {
        let v = self.integrate_heights_vec(D, |s| g(s).map(|(a, e)| (a.to_vec(), e.to_vec())))?;
        let mut out = [0.0; D];
        out.copy_from_slice(&v);
        Ok(out)
    }

    /// `int g(slice_hat(r)) dr` componentwise over a window around the
    /// bulk of the max, grown until the integrand at both ends is below
    /// `1e-14` of its peak. Evaluations are shared between components.
    fn integrate_heights_vec(
        &self,
        dim: usize,
        g: impl Fn(&HeightSlice<'_>) -> Result<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Vec<f64>> {
        let n = self.n_paths() as f64;
        let centre = 2f64.sqrt() * self.model().center(self.n_paths());
        let half = 2f64.sqrt() * 6.0 * n.powf(-1.0 / 6.0);
        let mut cache: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        // Largest absolute uncertainty of any slice value seen so far.
        let noise = RefCell::new(vec![0.0f64; dim]);
        let mut eval = |r: f64| -> Result<Vec<f64>> {
            if r <= 0.0 {
                return Ok(vec![0.0; dim]);
            }
            if let Some(v) = cache.get(&r.to_bits()) {
                return Ok(v.clone());
            }
            let (v, e) = g(&self.slice_hat(r)?)?;
            for (n, e) in noise.borrow_mut().iter_mut().zip(&e) {
                *n = n.max(*e);
            }
            cache.insert(r.to_bits(), v.clone());
            Ok(v)
        };
        // Near r = 0 the BE/RBB series get long and every law is negligible,
        // so the lower end starts away from 0 and approaches it geometrically.
        let mut lo = (centre - half).max(0.1 * centre);
        let mut hi = centre + half;
        let mut peak = vec![0.0f64; dim];
        for i in 0..=16 {
            let v = eval(lo + (hi - lo) * i as f64 / 16.0)?;
            for (p, x) in peak.iter_mut().zip(&v) {
                *p = p.max(x.abs());
            }
        }
        let above = |v: &[f64], peak: &mut [f64]| -> bool {
            let mut any = false;
            for (p, x) in peak.iter_mut().zip(v) {
                *p = p.max(x.abs());
            }
            for (p, x) in peak.iter().zip(v) {
                any |= x.abs() > BOUNDARY_RATIO * p;
            }
            any
        };
        while lo > 1e-12 && above(&eval(lo)?, &mut peak) {
            lo = (lo - 0.5 * half).max(0.5 * lo);
        }
        let mut grown = 0;
        while above(&eval(hi)?, &mut peak) {
            hi += 0.5 * half;
            grown += 1;
            if grown > 400 {
                return Err(Error::Quadrature("height window failed to close".into()));
            }
        }
        // No component can be integrated more accurately than its values
        // are known; the window scan has seen the bulk of the uncertainties.
        let abs_tol: Vec<f64> = noise.borrow().iter().map(|e| 4.0 * e * (hi - lo)).collect();
        let mut err = None;
        let out = adaptive_gauss_legendre_vec(
            dim,
            |r| match eval(r) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    vec![0.0; dim]
                }
            },
            lo,
            hi,
            &abs_tol,
            RADIAL_REL_TOL,
        );
        if let Some(e) = err {
            return Err(e);
        }
        out
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid(format!("t must lie in (0,1), got {t}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Factored {
    a: SquareMatrix,
    det_plain: f64,
    det_ext: DoubleDouble,
}

/// The joint density at one height, for any number of times.
#[derive(Clone, Debug)]
pub struct HeightSlice<'a> {
    ev: &'a JointDensity,
    r: f64,
    /// `None` below the BE/RBB barrier floor, where everything vanishes.
    a: Option<Factored>,
}

/// Balanced rank-one data: `p_j = uhat_j 2^{k_j}`, `q_j = vhat_j 2^{-k_j}`,
/// normalized so that `max|p| = max|q| = 1`, with the removed scale kept apart.
struct Balanced {
    shift: Vec<i64>,
    p: Vec<f64>,
    q: Vec<f64>,
    /// Rounding scales of `p` and `q` (sums of absolute contributions).
    p_mag: Vec<f64>,
    q_mag: Vec<f64>,
    scale: ScaledReal,
}

impl HeightSlice<'_> {
    pub fn height(&self) -> f64 {
        self.r / 2f64.sqrt()
    }

    pub fn det(&self) -> f64 {
        self.a.as_ref().map_or(0.0, |f| f.det_plain)
    }

    fn extended_needed(&self, tau: f64) -> Result<bool> {
        let n = self.ev.n_paths() as f64;
        let window = n * tau.abs();
        let idx_max = self.ev.model().index(self.ev.n_paths() - 1) as f64;
        match self.ev.precision {
            Precision::Plain if window > PLAIN_WINDOW => Err(Error::Precision(format!(
                "N|tau| = {window:.3} exceeds the plain window {PLAIN_WINDOW}; use extended precision"
            ))),
            Precision::Plain => Ok(false),
            _ if window > EXTENDED_WINDOW => {
                Err(Error::Precision(format!("N|tau| = {window:.3} exceeds the extended window {EXTENDED_WINDOW}")))
            }
            Precision::Extended => Ok(true),
            Precision::Auto => Ok(idx_max * tau.abs() > DYNAMIC_RANGE_LIMIT.ln()),
        }
    }

    fn balanced(&self, tau: f64) -> Result<Balanced> {
        let model = self.ev.model();
        let indices = self.ev.builder.indices();
        let u = psi_hat_vector_with_magnitude(model, indices, self.r, tau, SERIES_TOL)?;
        let v = psi_hat_vector_with_magnitude(model, indices, self.r, -tau, SERIES_TOL)?;
        let half = 0.5 * tau / core::f64::consts::LN_2;
        let shift: Vec<i64> = indices.iter().map(|&n| (n as f64 * half).round() as i64).collect();
        let scaled = |xs: &[ScaledReal], sign: i64| -> Vec<ScaledReal> {
            xs.iter().zip(&shift).map(|(x, &k)| x.scale_pow2(sign * k)).collect()
        };
        let p = scaled(&u.values, 1);
        let q = scaled(&v.values, -1);
        let top =
            |xs: &[ScaledReal]| xs.iter().filter(|x| !x.is_zero()).map(|x| x.mantissa_exponent().1).max().unwrap_or(0);
        let (ep, eq) = (top(&p), top(&q));
        let p_mag = scaled(&u.magnitudes, 1).iter().map(|x| x.scale_pow2(-ep).to_f64()).collect();
        let q_mag = scaled(&v.magnitudes, -1).iter().map(|x| x.scale_pow2(-eq).to_f64()).collect();
        Ok(Balanced {
            shift,
            p: p.iter().map(|x| x.scale_pow2(-ep).to_f64()).collect(),
            q: q.iter().map(|x| x.scale_pow2(-eq).to_f64()).collect(),
            p_mag,
            q_mag,
            // The half-line vectors as written each carry a factor 2 where the
            // rank-one kernel needs sqrt(2): without the 1/2 the density
            // integrates to 2 and is twice the derivative of the max CDF.
            scale: ScaledReal::from_mantissa_exponent(0.5, ep + eq + 1 - i64::from(model != ModelKind::BB)),
        })
    }

    /// `C = D A D^{-1}`, `D = diag(2^{k_j})`; exact in binary arithmetic.
    fn conjugated(a: &SquareMatrix, shift: &[i64]) -> Vec<f64> {
        let n = a.dim();
        let mut c = a.entries().to_vec();
        for j in 0..n {
            for l in 0..n {
                let e = (shift[j] - shift[l]) as i32;
                c[j * n + l] = ldexp(c[j * n + l], e);
            }
        }
        c
    }

    /// `fhat(r, tau)` by the trace form.
    pub fn density_hat(&self, tau: f64) -> Result<f64> {
        Ok(self.density_hat_with_noise(tau)?.0)
    }

    /// `fhat(r, tau)` and an estimate of its absolute error.
    ///
    /// The operator entries carry double-precision rounding whatever the
    /// solve precision; a perturbation `dA` moves the value by
    /// `det * y^T dC x` with `x = C^{-1} p`, `y = C^{-T} q`, bounded by
    /// `eps |A| (sum_j |y_j| 2^{k_j}) (sum_l |x_l| 2^{-k_l})`; cancellation
    /// inside the vectors adds `det (y^T dp + dq^T x)`.
    pub fn density_hat_with_noise(&self, tau: f64) -> Result<(f64, f64)> {
        let Some(f) = &self.a else { return Ok((0.0, 0.0)) };
        if !tau.is_finite() {
            return Err(invalid("tau must be finite"));
        }
        let extended = self.extended_needed(tau)?;
        let b = self.balanced(tau)?;
        let n = f.a.dim();
        let c = Self::conjugated(&f.a, &b.shift);
        let solved = if extended {
            let c: Vec<DoubleDouble> = c.into_iter().map(DoubleDouble::from_f64).collect();
            let p: Vec<DoubleDouble> = b.p.iter().map(|&x| DoubleDouble::from_f64(x)).collect();
            let q: Vec<DoubleDouble> = b.q.iter().map(|&x| DoubleDouble::from_f64(x)).collect();
            let lu = Lu::factor(n, c);
            lu.solve(&p).and_then(|x| Ok((x, lu.solve_transpose(&q)?))).map(|(x, y)| {
                let mut s = DoubleDouble::ZERO;
                for (&qj, &xj) in b.q.iter().zip(&x) {
                    s += xj.mul_f64(qj);
                }
                let x: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
                let y: Vec<f64> = y.iter().map(|v| v.to_f64()).collect();
                ((s * f.det_ext).to_f64(), x, y)
            })
        } else {
            let lu = Lu::factor(n, c);
            lu.solve(&b.p).and_then(|x| Ok((x, lu.solve_transpose(&b.q)?))).map(|(x, y)| {
                let s: f64 = b.q.iter().zip(&x).map(|(a, b)| a * b).sum();
                (s * f.det_plain, x, y)
            })
        };
        let (value, x, y) = match solved {
            Ok(v) => v,
            // A pivot below 1e-300 means det(I - M) underflows: no mass here.
            Err(Error::SingularMatrix { .. }) => return Ok((0.0, 0.0)),
            Err(e) => return Err(e),
        };
        let left: f64 = y.iter().zip(&b.shift).map(|(v, &k)| v.abs() * ldexp(1.0, k as i32)).sum();
        let right: f64 = x.iter().zip(&b.shift).map(|(v, &k)| v.abs() * ldexp(1.0, -k as i32)).sum();
        let from_a = 4.0 * n as f64 * f.a.max_abs().max(1.0) * left * right;
        let from_psi: f64 = y.iter().zip(&b.p_mag).chain(x.iter().zip(&b.q_mag)).map(|(a, m)| a.abs() * m).sum();
        let bound = f64::EPSILON * f.det_plain.abs() * (from_a + 8.0 * from_psi);
        let noise = b.scale.mul_f64(bound).to_f64();
        Ok((clip(b.scale.mul_f64(value).to_f64()), noise))
    }

    /// `fhat(r, tau)` as `det(C + p q^T) - det(C)`, always in paired limbs.
    pub fn density_hat_det_difference(&self, tau: f64) -> Result<f64> {
        let Some(f) = &self.a else { return Ok(0.0) };
        self.extended_needed(tau)?;
        let b = self.balanced(tau)?;
        let n = f.a.dim();
        let c = Self::conjugated(&f.a, &b.shift);
        let mut perturbed: Vec<DoubleDouble> = c.iter().map(|&x| DoubleDouble::from_f64(x)).collect();
        for j in 0..n {
            for l in 0..n {
                perturbed[j * n + l] += DoubleDouble::product_of(b.p[j], b.q[l]);
            }
        }
        let diff = Lu::factor(n, perturbed).det() - f.det_ext;
        Ok(clip(b.scale.mul_f64(diff.to_f64()).to_f64()))
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let tau = hatted_time(t);
        Ok(jacobian(tau) * self.density_hat(tau)?)
    }

    pub fn density_det_difference(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let tau = hatted_time(t);
        Ok(jacobian(tau) * self.density_hat_det_difference(tau)?)
    }

    /// `int_{c_i}^inf fhat(r, tau) dtau` for ascending non-negative cuts.
    ///
    /// Past the last cut the integral is extended in panels of width
    /// `~N^{-1/3}` (the time fluctuation scale) until a panel adds less than
    /// `1e-15` of the running total while the integrand is decaying.
    pub fn tau_suffix_integrals(&self, cuts: &[f64]) -> Result<Vec<f64>> {
        Ok(self.tau_suffix_integrals_with_error(cuts)?.0)
    }

    /// [`Self::tau_suffix_integrals`] with the absolute tolerance each
    /// value was computed to.
    pub fn tau_suffix_integrals_with_error(&self, cuts: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.a.is_none() {
            return Ok((vec![0.0; cuts.len()], vec![0.0; cuts.len()]));
        }
        if cuts.windows(2).any(|w| w[0] > w[1]) || cuts.first().is_some_and(|&c| c < 0.0) {
            return Err(invalid("cuts must be ascending and non-negative"));
        }
        let mut err = None;
        let mut integrate = |a: f64, b: f64| -> Result<(f64, f64)> {
            // Rounding noise of the integrand sets an absolute floor; without
            // it panels where the density is pure noise never converge.
            let mut noise = 0.0f64;
            for i in 0..=4 {
                noise = noise.max(self.density_hat_with_noise(a + (b - a) * i as f64 / 4.0)?.1);
            }
            let abs_tol = 4.0 * noise * (b - a);
            let v = adaptive_gauss_legendre(
                |tau| match self.density_hat(tau) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                a,
                b,
                abs_tol,
                TIME_REL_TOL,
            )?;
            match err.take() {
                Some(e) => Err(e),
                None => Ok((v, abs_tol.max(TIME_REL_TOL * v.abs()))),
            }
        };
        let mut between = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            between.push(integrate(w[0], w[1])?);
        }
        let step = 0.5 * (self.ev.n_paths() as f64).powf(-1.0 / 3.0);
        let window = self.ev.tau_window();
        let mut a = *cuts.last().unwrap_or(&0.0);
        let mut last = self.density_hat(a)?;
        let mut beyond = 0.0;
        let mut beyond_err = 0.0;
        loop {
            let b = (a + step).min(window);
            let (piece, piece_err) = integrate(a, b)?;
            beyond += piece;
            beyond_err += piece_err;
            let (end, noise) = self.density_hat_with_noise(b)?;
            let settled = end <= last && piece.abs() <= 1e-15 * beyond.abs();
            if settled || end.abs() <= 4.0 * noise {
                break;
            }
            if b >= window {
                return Err(Error::Precision(format!(
                    "joint density at r={} still non-negligible at the tau window edge {window}",
                    self.r
                )));
            }
            a = b;
            last = end;
        }
        let mut out = vec![0.0; cuts.len()];
        let mut out_err = vec![0.0; cuts.len()];
        let (mut acc, mut acc_err) = (beyond, beyond_err);
        for i in (0..cuts.len()).rev() {
            if i + 1 < cuts.len() {
                acc += between[i].0;
                acc_err += between[i].1;
            }
            out[i] = acc;
            out_err[i] = acc_err;
        }
        Ok((out, out_err))
    }
}

/// `dtau/dt` times the `r`-to-`m` Jacobian: `f(m,t) = 2^{3/2} cosh^2(tau) fhat`.
fn jacobian(tau: f64) -> f64 {
    2.0 * 2f64.sqrt() * tau.cosh().powi(2)
}

pub(crate) fn clip(x: f64) -> f64 {
    if (CLIP_FLOOR..0.0).contains(&x) {
        0.0
    } else {
        x
    }
}

fn ldexp(x: f64, e: i32) -> f64 {
    // Two steps keep 2^e representable for |e| up to ~2000.
    let h = e / 2;
    x * 2f64.powi(h) * 2f64.powi(e - h)
}

/// `f_N(m, t)` for a single point.
pub fn joint_density(model: ModelKind, n_paths: usize, m: f64, t: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(invalid(format!("m must be positive, got {m}")));
    }
    JointDensity::new(model, n_paths)?.density(m, t)
}

pub fn argmax_marginal(model: ModelKind, n_paths: usize, t: f64) -> Result<f64> {
    JointDensity::new(model, n_paths)?.argmax_marginal(t)
}

/// `P(|T_N - 1/2| > eps)`.
pub fn argmax_tail(model: ModelKind, n_paths: usize, epsilon: f64) -> Result<f64> {
    Ok(JointDensity::new(model, n_paths)?.argmax_tails(&[epsilon])?[0])
}

/// Joint density on a rectangular grid.
#[derive(Clone, Debug)]
pub struct JointDensityGrid {
    pub model: ModelKind,
    pub n_paths: usize,
    pub m_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Row-major, one row per `m`.
    pub values: Vec<Vec<f64>>,
    /// `|1 - int int f|`.
    pub normalization_defect: f64,
    /// Points whose value fell below `CLIP_FLOOR`.
    pub negative_points: usize,
}

impl JointDensityGrid {
    /// Grid point `(i, j)` of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.values[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }
}

/// One grid row; grids parallelize over rows.
pub fn joint_density_row(ev: &JointDensity, m: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    let slice = ev.slice(m)?;
    t_grid.iter().map(|&t| slice.density(t)).collect()
}

fn check_grid(name: &str, g: &[f64], lo: f64, hi: f64) -> Result<()> {
    if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) || g[0] <= lo || g[g.len() - 1] >= hi {
        return Err(invalid(format!("{name} grid must be ascending inside ({lo}, {hi})")));
    }
    Ok(())
}

pub fn joint_density_grid(
    model: ModelKind,
    n_paths: usize,
    m_grid: &[f64],
    t_grid: &[f64],
    precision: Precision,
) -> Result<JointDensityGrid> {
    check_grid("m", m_grid, 0.0, f64::INFINITY)?;
    check_grid("t", t_grid, 0.0, 1.0)?;
    let ev = JointDensity::new(model, n_paths)?.with_precision(precision);
    let values: Vec<Vec<f64>> = m_grid.iter().map(|&m| joint_density_row(&ev, m, t_grid)).collect::<Result<_>>()?;
    let mass = ev.total_mass()?;
    Ok(assemble_grid(model, n_paths, m_grid, t_grid, values, mass))
}

pub fn assemble_grid(
    model: ModelKind,
    n_paths: usize,
    m_grid: &[f64],
    t_grid: &[f64],
    values: Vec<Vec<f64>>,
    total_mass: f64,
) -> JointDensityGrid {
    let negative_points = values.iter().flatten().filter(|&&v| v < CLIP_FLOOR).count();
    JointDensityGrid {
        model,
        n_paths,
        m_grid: m_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        values,
        normalization_defect: (1.0 - total_mass).abs(),
        negative_points,
    }
}

/// Argmax small-deviation probabilities against the cubic envelope.
#[derive(Clone, Debug)]
pub struct TailEnvelopeReport {
    pub n_paths: usize,
    pub epsilons: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Least-squares slope of `log(-log P)` against `log eps`.
    pub cubic_fit_slope: f64,
    /// `-log P / (N eps^3)` per eps.
    pub envelope_rate: Vec<f64>,
    /// Where `envelope_rate` exceeds `(32/3)(1 + 3 N^{-1/3})`.
    pub flagged: Vec<bool>,
}

pub fn tail_envelope_report(n_paths: usize, epsilons: &[f64]) -> Result<TailEnvelopeReport> {
    tail_envelope_report_with(&JointDensity::new(ModelKind::BB, n_paths)?, epsilons)
}

pub fn tail_envelope_report_with(ev: &JointDensity, epsilons: &[f64]) -> Result<TailEnvelopeReport> {
    if let Some(&e) = epsilons.iter().find(|&&e| !(e > 0.0 && e < EPSILON_2)) {
        return Err(invalid(format!("epsilon must lie in (0, {EPSILON_2}), got {e}")));
    }
    let probabilities = ev.argmax_tails(epsilons)?;
    Ok(envelope_from_probabilities(ev.n_paths(), epsilons, probabilities))
}

/// Envelope diagnostics for already computed tails, with no restriction on
/// the range of `eps`.
pub fn envelope_from_probabilities(n_paths: usize, epsilons: &[f64], probabilities: Vec<f64>) -> TailEnvelopeReport {
    let n = n_paths as f64;
    let envelope_rate: Vec<f64> =
        epsilons.iter().zip(&probabilities).map(|(&e, &p)| -p.ln() / (n * e.powi(3))).collect();
    let limit = UPPER_RATE * (1.0 + 3.0 * n.powf(-1.0 / 3.0));
    let flagged = envelope_rate.iter().map(|&r| r > limit).collect();
    let pts: Vec<(f64, f64)> = epsilons.iter().zip(&probabilities).map(|(&e, &p)| (e.ln(), (-p.ln()).ln())).collect();
    TailEnvelopeReport {
        n_paths,
        epsilons: epsilons.to_vec(),
        probabilities,
        cubic_fit_slope: least_squares_slope(&pts),
        envelope_rate,
        flagged,
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
