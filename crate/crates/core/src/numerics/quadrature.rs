use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::linalg::tridiagonal_eigen;
use crate::error::{invalid, Error, Result};

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

/// Largest Gauss–Hermite order accepted. Reflection overlaps between Hermite
/// functions of index up to 1000 need order 1001.
pub const MAX_HERMITE_ORDER: usize = 2048;
pub const MAX_LEGENDRE_ORDER: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Weight `e^{-x^2}` on the real line.
    GaussHermite,
    /// Unit weight on a finite interval.
    GaussLegendre,
    /// Gauss–Legendre on (0,1) pushed to (0,inf) by `x = L u / (1 - u)`.
    GaussLegendreMapped,
}

/// Nodes and weights of an interpolatory rule.
///
/// For Gauss–Hermite rules `scaled_weights[i] = weights[i] * e^{x_i^2}`, which
/// stays representable when the raw weights underflow (orders above ~280).
/// For the other kinds the two vectors coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub scaled_weights: Vec<f64>,
    pub order: usize,
    pub map_scale: Option<f64>,
}

impl QuadratureRule {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| if w == 0.0 { 0.0 } else { w * f(x) }).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Hermite rule for the weight `e^{-x^2}`.
///
/// Nodes come from the Jacobi matrix eigenvalues; weights from the
/// Christoffel function `1 / sum_k p_k(x_i)^2`, evaluated with running
/// rescaling so large orders neither overflow nor lose the tiny weights.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_HERMITE_ORDER {
        return Err(invalid(format!("Gauss-Hermite order must be in 1..={MAX_HERMITE_ORDER}, got {order}")));
    }
    let diag = alloc::vec![0.0; order];
    let off: Vec<f64> = (1..order).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let (mut nodes, _) = tridiagonal_eigen(&diag, &off, 0);
    // Enforce exact symmetry of the node set.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    for x in nodes.iter_mut() {
        *x = polish_hermite_node(order, *x);
    }
    let mut weights = Vec::with_capacity(order);
    let mut scaled = Vec::with_capacity(order);
    for &x in &nodes {
        let log_sum = log_christoffel_sum(order, x);
        weights.push((-log_sum).exp());
        scaled.push((x * x - log_sum).exp());
    }
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
        let s = 0.5 * (scaled[i] + scaled[j]);
        scaled[i] = s;
        scaled[j] = s;
    }
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussHermite,
        nodes,
        weights,
        scaled_weights: scaled,
        order,
        map_scale: None,
    })
}

// Normalized Hermite polynomial p_n and its derivative at x, both divided by
// a common positive factor (returned as a log) to stay in range.
fn hermite_poly_scaled(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    let mut log_scale = 0.0;
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            log_scale += 150.0 * core::f64::consts::LN_10;
        }
    }
    // p_n' = sqrt(2n) p_{n-1}
    (cur, (2.0 * n as f64).sqrt() * prev, log_scale)
}

fn polish_hermite_node(order: usize, x: f64) -> f64 {
    let (p, dp, _) = hermite_poly_scaled(order, x);
    if dp == 0.0 || !dp.is_finite() {
        return x;
    }
    let step = p / dp;
    // Only accept a correction at the rounding level.
    if step.abs() < 1e-10 * (1.0 + x.abs()) {
        x - step
    } else {
        x
    }
}

// log of sum_{k<order} p_k(x)^2.
fn log_christoffel_sum(order: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    let mut sum = cur * cur;
    let mut log_scale = 0.0; // sum is stored in units of e^{2 log_scale}
    for k in 0..order - 1 {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        sum += cur * cur;
        if cur.abs() > 1e100 {
            prev *= 1e-100;
            cur *= 1e-100;
            sum *= 1e-200;
            log_scale += 100.0 * core::f64::consts::LN_10;
        }
    }
    sum.ln() + 2.0 * log_scale
}

/// Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_HERMITE_ORDER {
        return Err(invalid(format!("Gauss-Legendre order {order} out of range")));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(invalid("Gauss-Legendre interval must be finite with a < b"));
    }
    let (t, w) = legendre_reference(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let nodes: Vec<f64> = t.iter().map(|&u| mid + half * u).collect();
    let weights: Vec<f64> = w.iter().map(|&v| half * v).collect();
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussLegendre,
        nodes,
        scaled_weights: weights.clone(),
        weights,
        order,
        map_scale: None,
    })
}

/// Gauss–Legendre on (0,1) mapped to (0,inf) through `x = L u / (1 - u)`.
/// The weights include the Jacobian `L / (1 - u)^2`.
pub fn gauss_legendre_mapped(order: usize, map_scale: f64) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_LEGENDRE_ORDER {
        return Err(invalid(format!("mapped Gauss-Legendre order must be in 1..={MAX_LEGENDRE_ORDER}, got {order}")));
    }
    mapped_rule(order, map_scale)
}

/// [`gauss_legendre_mapped`] without the public order cap, for the doubled
/// orders of the Fredholm determinants.
pub(crate) fn mapped_rule(order: usize, map_scale: f64) -> Result<QuadratureRule> {
    if order == 0 || order > 2 * MAX_LEGENDRE_ORDER {
        return Err(invalid(format!("mapped Gauss-Legendre order {order} out of range")));
    }
    if !(map_scale.is_finite() && map_scale > 0.0) {
        return Err(invalid("map_scale must be positive and finite"));
    }
    let (t, w) = legendre_reference(order);
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for (&ti, &wi) in t.iter().zip(&w) {
        let u = 0.5 * (ti + 1.0);
        let one_minus = 0.5 * (1.0 - ti);
        nodes.push(map_scale * u / one_minus);
        weights.push(0.5 * wi * map_scale / (one_minus * one_minus));
    }
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussLegendreMapped,
        nodes,
        scaled_weights: weights.clone(),
        weights,
        order,
        map_scale: Some(map_scale),
    })
}

// Nodes (ascending) and weights on [-1, 1]. Jacobi eigenvalues seed one
// Newton step on the Legendre recurrence, and weights use 2/((1-x^2) P_n'^2).
fn legendre_reference(order: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = alloc::vec![0.0; order];
    let off: Vec<f64> = (1..order)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (seeds, _) = tridiagonal_eigen(&diag, &off, 0);
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for x0 in seeds {
        let mut x = x0;
        for _ in 0..2 {
            let (p, dp) = legendre_eval(order, x);
            x -= p / dp;
        }
        let (_, dp) = legendre_eval(order, x);
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

const PANEL_ORDER: usize = 15;
const MAX_PANELS: usize = 1 << 14;
// Panels are accepted once the estimate change is below this fraction of
// sum |w f|: integrands computed by long recurrences carry relative noise of
// a few hundred ulps, which no refinement removes.
const NOISE_FLOOR: f64 = 1024.0 * f64::EPSILON;

/// Adaptive bisection with a fixed Gauss–Legendre panel rule.
///
/// A panel is accepted when its estimate agrees with the sum over its two
/// halves to within its share of `max(abs_tol, rel_tol * |total|)`, or
/// when the change is at the rounding level of the panel.
pub fn adaptive_gauss_legendre(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid("adaptive quadrature needs a finite interval"));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return adaptive_gauss_legendre(f, b, a, abs_tol, rel_tol).map(|v| -v);
    }
    let (t, w) = legendre_reference(PANEL_ORDER);
    // Returns the panel estimate and the sum of |w f| (the rounding scale).
    let mut panel = |lo: f64, hi: f64| -> (f64, f64) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut sum = 0.0;
        let mut abs = 0.0;
        for (&u, &wt) in t.iter().zip(&w) {
            let v = wt * f(mid + half * u);
            sum += v;
            abs += v.abs();
        }
        (sum * half, abs * half)
    };
    let width = b - a;
    let mut stack: Vec<(f64, f64, f64)> = Vec::new();
    let (whole, _) = panel(a, b);
    stack.push((a, b, whole));
    let mut total = 0.0;
    let mut scale = whole.abs();
    let mut evaluated = 1;
    while let Some((lo, hi, est)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, left_abs) = panel(lo, mid);
        let (right, right_abs) = panel(mid, hi);
        evaluated += 2;
        let refined = left + right;
        if !refined.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        scale = scale.max(refined.abs());
        let budget = (abs_tol.max(rel_tol * scale) * (hi - lo) / width).max(NOISE_FLOOR * (left_abs + right_abs));
        if (refined - est).abs() <= budget || (hi - lo) < 1e-13 * width {
            total += refined;
        } else if evaluated > MAX_PANELS {
            return Err(Error::Quadrature(format!("panel budget exhausted on [{a}, {b}] near {mid}")));
        } else {
            stack.push((mid, hi, right));
            stack.push((lo, mid, left));
        }
    }
    Ok(total)
}

/// Componentwise [`adaptive_gauss_legendre`] for a vector integrand whose
/// components share evaluations; a panel is split while any component is
/// unconverged. `abs_tol` holds one absolute tolerance per component.
pub fn adaptive_gauss_legendre_vec(
    dim: usize,
    mut f: impl FnMut(f64) -> Vec<f64>,
    a: f64,
    b: f64,
    abs_tol: &[f64],
    rel_tol: f64,
) -> Result<Vec<f64>> {
    if abs_tol.len() != dim {
        return Err(invalid("one absolute tolerance per component is required"));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid("adaptive quadrature needs a finite interval"));
    }
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    if a > b {
        return adaptive_gauss_legendre_vec(dim, f, b, a, abs_tol, rel_tol)
            .map(|v| v.into_iter().map(|x| -x).collect());
    }
    let (t, w) = legendre_reference(PANEL_ORDER);
    let mut panel = |lo: f64, hi: f64| -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut sum = vec![0.0; dim];
        let mut abs = vec![0.0; dim];
        for (&u, &wt) in t.iter().zip(&w) {
            let v = f(mid + half * u);
            for k in 0..dim {
                sum[k] += wt * v[k];
                abs[k] += (wt * v[k]).abs();
            }
        }
        for k in 0..dim {
            sum[k] *= half;
            abs[k] *= half;
        }
        (sum, abs)
    };
    let width = b - a;
    let (whole, _) = panel(a, b);
    let mut scale: Vec<f64> = whole.iter().map(|x| x.abs()).collect();
    let mut stack = vec![(a, b, whole)];
    let mut total = vec![0.0; dim];
    let mut evaluated = 1;
    while let Some((lo, hi, est)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, left_abs) = panel(lo, mid);
        let (right, right_abs) = panel(mid, hi);
        evaluated += 2;
        let mut converged = true;
        let mut refined = vec![0.0; dim];
        for k in 0..dim {
            refined[k] = left[k] + right[k];
            if !refined[k].is_finite() {
                return Err(Error::Quadrature(format!("non-finite integrand on [{lo}, {hi}]")));
            }
            scale[k] = scale[k].max(refined[k].abs());
            let budget = (abs_tol[k].max(rel_tol * scale[k]) * (hi - lo) / width)
                .max(NOISE_FLOOR * (left_abs[k] + right_abs[k]));
            converged &= (refined[k] - est[k]).abs() <= budget;
        }
        if converged || (hi - lo) < 1e-13 * width {
            for k in 0..dim {
                total[k] += refined[k];
            }
        } else if evaluated > MAX_PANELS {
            return Err(Error::Quadrature(format!("panel budget exhausted on [{a}, {b}] near {mid}")));
        } else {
            stack.push((mid, hi, right));
            stack.push((lo, mid, left));
        }
    }
    Ok(total)
}
