//! N -> infinity limits: the GOE Tracy–Widom law, the joint density of the
//! maximum and argmax of the Airy2 process minus a parabola, and the
//! comparison of finite-N laws with them.
//!
//! Both limits are Fredholm determinants on `(0, inf)` discretized by the
//! Nyström method on a mapped Gauss–Legendre rule:
//!
//! * `F_GOE(m) = det(I - B_m)`, `B_m(x, y) = Ai(x + y + m)`;
//! * the joint density uses the reduced kernel
//!   `A_r(x, y) = 2^{-1/3} Ai(2^{-1/3}(x + y) + 2^{2/3} r)`, whose determinant
//!   is `F_GOE(4^{1/3} r) = P(M <= r)`, and the rank-one pair
//!   `psi_{r,+-t}(x) = 2 e^{+-x t} [+-t Ai(x + r + t^2) + Ai'(x + r + t^2)]`:
//!   `f(r, t) = det(I - A_r) <psi_{r,-t}, (I - A_r)^{-1} psi_{r,t}>`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::airy::{ai, airy_unchecked};
use crate::distributions::{clip, JointDensity, MaxLaw};
use crate::error::{invalid, Error, Result};
use crate::kernels::ModelKind;
use crate::numerics::{adaptive_gauss_legendre, gauss_legendre, mapped_rule, Lu, QuadratureRule, SquareMatrix};

pub const DEFAULT_ORDER: usize = 40;
pub const MAX_ORDER: usize = 400;
/// Doubling defects above this are reported as non-convergence.
pub const MAX_DEFECT: f64 = 1e-6;
/// Arguments beyond which `Ai` is below `1e-24` and the kernels are cut off.
const AIRY_REACH: f64 = 22.0;

const CBRT2: f64 = 1.259_921_049_894_873_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelId {
    /// `Ai(x + y + m)`.
    GoeBm,
    /// `2^{-1/3} Ai(2^{-1/3}(x + y) + 2^{2/3} r)`.
    LimitJointCore,
}

impl KernelId {
    pub fn eval(self, shift: f64, x: f64, y: f64) -> f64 {
        match self {
            KernelId::GoeBm => ai(x + y + shift),
            KernelId::LimitJointCore => ai((x + y) / CBRT2 + CBRT2 * CBRT2 * shift) / CBRT2,
        }
    }

    /// Length of `(0, inf)` on which the kernel is not negligible.
    fn reach(self, shift: f64) -> f64 {
        match self {
            KernelId::GoeBm => (AIRY_REACH - shift).max(2.0),
            KernelId::LimitJointCore => (CBRT2 * (AIRY_REACH - CBRT2 * CBRT2 * shift)).max(2.0),
        }
    }
}

/// Nyström discretization `sqrt(w_i w_j) K(x_i, x_j)` of a kernel on `(0, inf)`.
#[derive(Clone, Debug)]
pub struct FredholmGrid {
    pub rule: QuadratureRule,
    pub kernel_id: KernelId,
    pub shift: f64,
    /// Entries carry the symmetric `sqrt(w_i w_j)` weighting.
    pub symmetrized: bool,
    matrix: SquareMatrix,
}

impl FredholmGrid {
    pub fn new(kernel_id: KernelId, shift: f64, order: usize, reach: f64) -> Result<Self> {
        if order == 0 || order > 2 * MAX_ORDER {
            return Err(invalid(format!("quadrature order must be in 1..={MAX_ORDER}, got {order}")));
        }
        // Half the mapped nodes land in [0, L].
        let rule = mapped_rule(order, 0.5 * reach)?;
        let sw: Vec<f64> = rule.weights.iter().map(|w| w.sqrt()).collect();
        let mut matrix = SquareMatrix::zeros(order);
        for i in 0..order {
            for j in 0..=i {
                let v = sw[i] * sw[j] * kernel_id.eval(shift, rule.nodes[i], rule.nodes[j]);
                matrix.set(i, j, v);
                matrix.set(j, i, v);
            }
        }
        Ok(FredholmGrid { rule, kernel_id, shift, symmetrized: true, matrix })
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    /// `I - K` as an LU factorization.
    pub fn factor(&self) -> Lu<f64> {
        Lu::factor(self.matrix.dim(), self.matrix.identity_minus().entries().to_vec())
    }

    pub fn fredholm_det(&self) -> f64 {
        self.factor().det()
    }

    fn sqrt_weights(&self) -> Vec<f64> {
        self.rule.weights.iter().map(|w| w.sqrt()).collect()
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(invalid(format!("quadrature order must be in 1..={MAX_ORDER}, got {order}")));
    }
    Ok(())
}

/// A value computed at `order` and `2 * order`; `value` is the latter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Doubled {
    pub value: f64,
    pub defect: f64,
    pub order: usize,
}

fn doubled(order: usize, mut f: impl FnMut(usize) -> Result<f64>, what: &str) -> Result<Doubled> {
    check_order(order)?;
    let coarse = f(order)?;
    let value = f(2 * order)?;
    let defect = (value - coarse).abs();
    if !(defect <= MAX_DEFECT) {
        return Err(Error::Quadrature(format!(
            "{what}: order doubling {order} -> {} changed the result by {defect:e}",
            2 * order
        )));
    }
    Ok(Doubled { value, defect, order: 2 * order })
}

fn check_goe_argument(m: f64) -> Result<()> {
    if !(-15.0..=15.0).contains(&m) {
        return Err(invalid(format!("F_GOE argument must lie in [-15, 15], got {m}")));
    }
    Ok(())
}

/// `F_GOE(m) = det(I - B_m)` on `L^2(0, inf)`, at orders `order` and `2 order`.
pub fn f_goe_doubled(m: f64, order: usize) -> Result<Doubled> {
    check_goe_argument(m)?;
    let reach = KernelId::GoeBm.reach(m);
    doubled(order, |q| Ok(FredholmGrid::new(KernelId::GoeBm, m, q, reach)?.fredholm_det()), "F_GOE")
}

pub fn f_goe(m: f64, order: usize) -> Result<f64> {
    f_goe_doubled(m, order).map(|d| d.value)
}

/// `F_GOE(m)` recomputed from the reduced joint-density kernel at
/// `r = 4^{-1/3} m`, with a plain Gauss–Legendre rule on a truncated interval.
pub fn f_goe_reduced(m: f64, order: usize) -> Result<f64> {
    check_goe_argument(m)?;
    check_order(order)?;
    let r = m / (CBRT2 * CBRT2);
    let end = KernelId::LimitJointCore.reach(r);
    let rule = gauss_legendre(order, 0.0, end)?;
    let sw: Vec<f64> = rule.weights.iter().map(|w| w.sqrt()).collect();
    let a = SquareMatrix::from_fn(order, |i, j| {
        -sw[i] * sw[j] * KernelId::LimitJointCore.eval(r, rule.nodes[i], rule.nodes[j]) + if i == j { 1.0 } else { 0.0 }
    });
    Ok(Lu::factor(order, a.entries().to_vec()).det())
}

/// `psi_{r,t}(x) = 2 e^{x t} [t Ai(x + r + t^2) + Ai'(x + r + t^2)]`.
pub fn limit_psi(r: f64, t: f64, x: f64) -> f64 {
    let v = airy_unchecked(x + r + t * t);
    let bracket = 2.0 * (t * v.ai + v.ai_prime);
    // In logs: far out e^{x t} overflows while the bracket underflows.
    bracket.signum() * (x * t + bracket.abs().ln()).exp()
}

fn check_limit_point(r: f64, t: f64) -> Result<()> {
    if !(-10.0..=10.0).contains(&r) {
        return Err(invalid(format!("limit density needs -10 <= r <= 10, got {r}")));
    }
    if !(t.abs() <= 6.0) {
        return Err(invalid(format!("limit density needs |t| <= 6, got {t}")));
    }
    Ok(())
}

/// The limiting joint density at one height `r`, factored once for many `t`.
#[derive(Clone, Debug)]
pub struct LimitSlice {
    grid: FredholmGrid,
    sw: Vec<f64>,
    lu: Lu<f64>,
    det: f64,
}

impl LimitSlice {
    pub fn new(r: f64, order: usize) -> Result<Self> {
        if !(-10.0..=10.0).contains(&r) {
            return Err(invalid(format!("limit density needs -10 <= r <= 10, got {r}")));
        }
        if order == 0 || order > 2 * MAX_ORDER {
            return Err(invalid(format!("quadrature order {order} out of range")));
        }
        // The rank-one vectors live on x + r + t^2 < AIRY_REACH as well.
        let reach = KernelId::LimitJointCore.reach(r).max(AIRY_REACH - r);
        let grid = FredholmGrid::new(KernelId::LimitJointCore, r, order, reach)?;
        let sw = grid.sqrt_weights();
        let lu = grid.factor();
        let det = lu.det();
        Ok(LimitSlice { grid, sw, lu, det })
    }

    pub fn r(&self) -> f64 {
        self.grid.shift
    }

    /// `P(M <= r) = F_GOE(4^{1/3} r)` at this discretization.
    pub fn det(&self) -> f64 {
        self.det
    }

    fn psi(&self, t: f64) -> Vec<f64> {
        let r = self.r();
        self.grid.rule.nodes.iter().zip(&self.sw).map(|(&x, &s)| s * limit_psi(r, t, x)).collect()
    }

    /// Trace form `det(I - A) <psi_{-t}, (I - A)^{-1} psi_t>`.
    pub fn density(&self, t: f64) -> Result<f64> {
        check_limit_point(self.r(), t)?;
        let u = self.psi(t);
        let v = self.psi(-t);
        let x = self.lu.solve(&u)?;
        Ok(clip(self.det * v.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()))
    }

    /// `det(I - A + psi_t psi_{-t}^T) - det(I - A)`.
    pub fn density_det_difference(&self, t: f64) -> Result<f64> {
        check_limit_point(self.r(), t)?;
        let u = self.psi(t);
        let v = self.psi(-t);
        let n = u.len();
        let mut a = self.grid.matrix.identity_minus();
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, a.get(i, j) + u[i] * v[j]);
            }
        }
        Ok(Lu::factor(n, a.entries().to_vec()).det() - self.det)
    }

    /// `int f(r, t) dt` over `|t| <= 6`.
    pub fn time_marginal(&self, tol: f64) -> Result<f64> {
        let mut err = None;
        let mut f = |t: f64| match self.density(t) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        };
        // The density is even in t.
        let half = adaptive_gauss_legendre(&mut f, 0.0, 6.0, tol, tol)?;
        match err {
            Some(e) => Err(e),
            None => Ok(2.0 * half),
        }
    }
}

/// The limiting joint density `f(r, t)` of the maximum and argmax.
pub fn limit_joint_density(r: f64, t: f64, order: usize) -> Result<f64> {
    check_limit_point(r, t)?;
    check_order(order)?;
    LimitSlice::new(r, order)?.density(t)
}

pub fn limit_joint_density_doubled(r: f64, t: f64, order: usize) -> Result<Doubled> {
    check_limit_point(r, t)?;
    doubled(order, |q| LimitSlice::new(r, q)?.density(t), "limit joint density")
}

/// `int Ai(a + l) Ai(b - l) dl` by quadrature over the window where both
/// factors are non-negligible; equals `2^{-1/3} Ai(2^{-1/3}(a + b))`.
pub fn airy_convolution(a: f64, b: f64) -> Result<f64> {
    let lo = b - AIRY_REACH;
    let hi = AIRY_REACH - a;
    if lo >= hi {
        return Ok(0.0);
    }
    adaptive_gauss_legendre(|l| ai(a + l) * ai(b - l), lo, hi, 1e-15, 1e-13)
}

/// `K_Ai(x, y) = int_0^inf Ai(x + l) Ai(y + l) dl`.
pub fn airy_kernel(x: f64, y: f64) -> f64 {
    let (vx, vy) = (airy_unchecked(x), airy_unchecked(y));
    if (x - y).abs() < 1e-6 {
        // K(z, z) = Ai'(z)^2 - z Ai(z)^2 at the midpoint, off by O((x - y)^2).
        let z = 0.5 * (x + y);
        let v = airy_unchecked(z);
        return v.ai_prime * v.ai_prime - z * v.ai * v.ai;
    }
    (vx.ai * vy.ai_prime - vx.ai_prime * vy.ai) / (x - y)
}

/// Affine edge scaling `M = c sqrt(N) + r / (a N^{1/6})`,
/// `T = 1/2 + t / (b N^{1/3})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeScaling {
    pub centre_factor: f64,
    pub height_factor: f64,
    pub time_factor: f64,
}

impl EdgeScaling {
    pub fn for_model(model: ModelKind) -> Self {
        match model {
            ModelKind::BB => EdgeScaling { centre_factor: 1.0, height_factor: 2.0, time_factor: 2.0 },
            _ => EdgeScaling {
                centre_factor: core::f64::consts::SQRT_2,
                height_factor: 2f64.powf(7.0 / 6.0),
                time_factor: 2f64.powf(4.0 / 3.0),
            },
        }
    }

    pub fn height(&self, n_paths: usize, r: f64) -> f64 {
        let n = n_paths as f64;
        self.centre_factor * n.sqrt() + r / (self.height_factor * n.powf(1.0 / 6.0))
    }

    pub fn time(&self, n_paths: usize, t: f64) -> f64 {
        0.5 + t / (self.time_factor * (n_paths as f64).powf(1.0 / 3.0))
    }

    /// `dM dT / (dr dt)`.
    pub fn jacobian(&self, n_paths: usize) -> f64 {
        1.0 / (self.height_factor * self.time_factor * (n_paths as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    /// `N`, or `"inf"` for the limit itself.
    pub label: String,
    pub n_paths: Option<usize>,
    pub density_sup_deviation: f64,
    pub cdf_sup_deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub model: ModelKind,
    pub scaling: EdgeScaling,
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

pub fn convergence_report(
    model: ModelKind,
    n_list: &[usize],
    r_grid: &[f64],
    t_grid: &[f64],
) -> Result<ConvergenceReport> {
    convergence_report_with(model, EdgeScaling::for_model(model), n_list, r_grid, t_grid, DEFAULT_ORDER)
}

/// [`convergence_report`] under an arbitrary scaling, e.g. a deliberately
/// wrong one as a negative control.
pub fn convergence_report_with(
    model: ModelKind,
    scaling: EdgeScaling,
    n_list: &[usize],
    r_grid: &[f64],
    t_grid: &[f64],
    order: usize,
) -> Result<ConvergenceReport> {
    if r_grid.is_empty() {
        return Err(invalid("convergence report needs a non-empty r grid"));
    }
    let mut limit_cdf = Vec::with_capacity(r_grid.len());
    let mut limit_density = Vec::with_capacity(r_grid.len());
    let mut cache: BTreeMap<u64, LimitSlice> = BTreeMap::new();
    for &r in r_grid {
        let slice = match cache.get(&r.to_bits()) {
            Some(s) => s.clone(),
            None => {
                let s = LimitSlice::new(r, 2 * order)?;
                cache.insert(r.to_bits(), s.clone());
                s
            }
        };
        limit_cdf.push(f_goe(CBRT2 * CBRT2 * r, order)?);
        let row: Result<Vec<f64>> = t_grid.iter().map(|&t| slice.density(t)).collect();
        limit_density.push(row?);
    }
    let mut rows = Vec::with_capacity(n_list.len() + 1);
    for &n in n_list {
        let law = MaxLaw::new(model, n)?;
        let ev = if t_grid.is_empty() { None } else { Some(JointDensity::new(model, n)?) };
        let jac = scaling.jacobian(n);
        let mut cdf_dev = 0.0f64;
        let mut density_dev = 0.0f64;
        for (i, &r) in r_grid.iter().enumerate() {
            let m = scaling.height(n, r);
            cdf_dev = cdf_dev.max((law.cdf(m)? - limit_cdf[i]).abs());
            if let Some(ev) = &ev {
                let slice = ev.slice(m)?;
                for (j, &t) in t_grid.iter().enumerate() {
                    let time = scaling.time(n, t);
                    if !(time > 0.0 && time < 1.0) {
                        return Err(invalid(format!("t = {t} maps outside (0, 1) at N = {n}")));
                    }
                    let v = jac * slice.density(time)?;
                    density_dev = density_dev.max((v - limit_density[i][j]).abs());
                }
            }
        }
        rows.push(ConvergenceRow {
            label: format!("{n}"),
            n_paths: Some(n),
            density_sup_deviation: density_dev,
            cdf_sup_deviation: cdf_dev,
        });
    }
    rows.push(ConvergenceRow {
        label: "inf".into(),
        n_paths: None,
        density_sup_deviation: 0.0,
        cdf_sup_deviation: 0.0,
    });
    Ok(ConvergenceReport { model, scaling, r_grid: r_grid.to_vec(), t_grid: t_grid.to_vec(), rows })
}
