//! Hermite functions `phi_n(x) = e^{-x^2/2} p_n(x)` with `p_n` the orthonormal
//! Hermite polynomials, and the Gaussian overlap integrals built from them.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Result;
use crate::numerics::{adaptive_gauss_legendre, gauss_hermite, QuadratureRule, ScaledReal, SquareMatrix};

/// Largest index accepted by the evaluators.
pub const MAX_INDEX: usize = 2000;

const RESCALE_UP: f64 = 3.273_390_607_896_141_9e150; // 2^500
const RESCALE_BITS: i64 = 500;

/// Value and derivative of one Hermite function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermiteEval {
    pub n: usize,
    pub x: f64,
    pub value: ScaledReal,
    pub derivative: ScaledReal,
}

/// Runs the upward three-term recurrence for `phi_0 .. phi_{count-1}` at `x`
/// and hands each value to `visit` as `(k, mantissa, exp2)` with
/// `phi_k = mantissa * 2^exp2`. The Gaussian factor is folded into the
/// starting value and a shared binary exponent absorbs any growth.
fn recur(count: usize, x: f64, mut visit: impl FnMut(usize, f64, i64)) {
    if count == 0 {
        return;
    }
    let start = ScaledReal::exp(-0.5 * x * x).mul_f64(PI.powf(-0.25));
    let (m0, mut e) = start.mantissa_exponent();
    let mut prev = 0.0;
    let mut cur = m0;
    visit(0, cur, e);
    for k in 0..count - 1 {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_UP {
            prev /= RESCALE_UP;
            cur /= RESCALE_UP;
            e += RESCALE_BITS;
        } else if cur.abs() < 1.0 / RESCALE_UP && prev.abs() < 1.0 / RESCALE_UP {
            prev *= RESCALE_UP;
            cur *= RESCALE_UP;
            e -= RESCALE_BITS;
        }
        visit(k + 1, cur, e);
    }
}

/// `phi_0(x) .. phi_{count-1}(x)` in scaled form.
pub fn phi_all_scaled(count: usize, x: f64) -> Vec<ScaledReal> {
    let mut out = Vec::with_capacity(count);
    recur(count, x, |_, m, e| out.push(ScaledReal::from_mantissa_exponent(m, e)));
    out
}

/// `phi_0(x) .. phi_{count-1}(x)` as plain floats; values below the `f64`
/// range flush to zero.
pub fn phi_all(count: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; count];
    phi_all_into(x, &mut out);
    out
}

/// Fills `out[k] = phi_k(x)`.
pub fn phi_all_into(x: f64, out: &mut [f64]) {
    recur(out.len(), x, |k, m, e| {
        out[k] = if e == 0 { m } else { ScaledReal::from_mantissa_exponent(m, e).to_f64() };
    });
}

pub fn phi(n: usize, x: f64) -> ScaledReal {
    let mut last = ScaledReal::ZERO;
    recur(n + 1, x, |k, m, e| {
        if k == n {
            last = ScaledReal::from_mantissa_exponent(m, e);
        }
    });
    last
}

/// Derivative through the ladder relation
/// `phi_n' = sqrt(n/2) phi_{n-1} - sqrt((n+1)/2) phi_{n+1}`.
pub fn phi_prime(n: usize, x: f64) -> ScaledReal {
    evaluate(n, x).derivative
}

pub fn evaluate(n: usize, x: f64) -> HermiteEval {
    let vals = phi_all_scaled(n + 2, x);
    let below = if n == 0 { ScaledReal::ZERO } else { vals[n - 1].mul_f64((n as f64 / 2.0).sqrt()) };
    let above = vals[n + 1].mul_f64(((n as f64 + 1.0) / 2.0).sqrt());
    HermiteEval { n, x, value: vals[n], derivative: below - above }
}

/// Derivatives of `phi_0 .. phi_{count-1}` from values of `phi_0 .. phi_count`.
pub fn ladder_derivatives(values: &[f64], count: usize) -> Vec<f64> {
    assert!(values.len() > count);
    (0..count)
        .map(|n| {
            let nf = n as f64;
            let below = if n == 0 { 0.0 } else { (nf / 2.0).sqrt() * values[n - 1] };
            below - ((nf + 1.0) / 2.0).sqrt() * values[n + 1]
        })
        .collect()
}

/// Gauss–Hermite rule shared by reflection overlaps with indices up to
/// `max_index`; the rule of order `max_index + 1` is exact for every pair.
#[derive(Clone, Debug)]
pub struct OverlapRule {
    rule: QuadratureRule,
    max_index: usize,
}

impl OverlapRule {
    pub fn new(max_index: usize) -> Result<Self> {
        Ok(OverlapRule { rule: gauss_hermite(max_index + 1)?, max_index })
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    /// Row-major `|indices|^2` block of `int phi_a(x) phi_b(2c - x) dx`,
    /// symmetrized.
    ///
    /// With `x = c + u` the integrand is `e^{-c^2} e^{-u^2} p_a(c+u) p_b(c-u)`,
    /// evaluated as `w_i e^{u_i^2} phi_a(c+u_i) phi_b(c-u_i)`.
    pub fn block(&self, indices: &[usize], c: f64) -> Vec<f64> {
        let count = self.max_index + 1;
        assert!(indices.iter().all(|&i| i <= self.max_index));
        let q = self.rule.order;
        let dim = indices.len();
        let mut plus = vec![0.0; q * dim];
        let mut minus = vec![0.0; q * dim];
        let mut scratch = vec![0.0; count];
        for i in 0..q {
            let u = self.rule.nodes[i];
            let w = self.rule.scaled_weights[i];
            phi_all_into(c + u, &mut scratch);
            for (a, &idx) in indices.iter().enumerate() {
                plus[i * dim + a] = w * scratch[idx];
            }
            phi_all_into(c - u, &mut scratch);
            for (a, &idx) in indices.iter().enumerate() {
                minus[i * dim + a] = scratch[idx];
            }
        }
        let mut out = vec![0.0; dim * dim];
        for i in 0..q {
            let p = &plus[i * dim..(i + 1) * dim];
            let m = &minus[i * dim..(i + 1) * dim];
            for a in 0..dim {
                let pa = p[a];
                if pa == 0.0 {
                    continue;
                }
                let row = &mut out[a * dim..(a + 1) * dim];
                for (o, &mb) in row.iter_mut().zip(m) {
                    *o += pa * mb;
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                let s = 0.5 * (out[a * dim + b] + out[b * dim + a]);
                out[a * dim + b] = s;
                out[b * dim + a] = s;
            }
        }
        out
    }
}

/// `int phi_n(x) phi_k(2c - x) dx`, the matrix element of reflection about `c`.
pub fn overlap_reflect(n: usize, k: usize, c: f64) -> Result<f64> {
    let rule = gauss_hermite((n + k) / 2 + 1)?;
    let count = n.max(k) + 1;
    let mut plus = vec![0.0; count];
    let mut minus = vec![0.0; count];
    let mut total = 0.0;
    for (&u, &w) in rule.nodes.iter().zip(&rule.scaled_weights) {
        phi_all_into(c + u, &mut plus);
        phi_all_into(c - u, &mut minus);
        total += w * plus[n] * minus[k];
    }
    Ok(total)
}

/// `int_s^inf phi_n phi_k dx`.
///
/// Off the diagonal the oscillator equation `phi_n'' = (x^2 - 2n - 1) phi_n`
/// turns the integral into a boundary Wronskian:
/// `-(phi_n phi_k' - phi_n' phi_k)(s) / (2(n - k))`.
pub fn gue_projection_entry(n: usize, k: usize, s: f64) -> f64 {
    if n == k {
        return tail_mass(n, s);
    }
    let vals = phi_all(n.max(k) + 2, s);
    let ders = ladder_derivatives(&vals, n.max(k) + 1);
    projection_offdiag(n, k, &vals, &ders)
}

pub(crate) fn projection_offdiag(n: usize, k: usize, vals: &[f64], ders: &[f64]) -> f64 {
    let w = vals[n] * ders[k] - ders[n] * vals[k];
    -w / (2.0 * (n as f64 - k as f64))
}

/// `int_s^inf phi_n(x)^2 dx` by unit-width adaptive Gauss–Legendre panels,
/// stopping past the turning point once panels drop below `1e-18` of the
/// accumulated mass. Negative `s` uses `1 - int_{|s|}^inf`.
pub fn tail_mass(n: usize, s: f64) -> f64 {
    if s < 0.0 {
        return 1.0 - tail_mass(n, -s);
    }
    let turning = (2.0 * n as f64 + 1.0).sqrt();
    let mut total = 0.0;
    let mut lo = s;
    let mut buf = vec![0.0; n + 1];
    loop {
        let hi = lo + 1.0;
        let panel = adaptive_gauss_legendre(
            |x| {
                phi_all_into(x, &mut buf);
                buf[n] * buf[n]
            },
            lo,
            hi,
            0.0,
            1e-15,
        )
        .unwrap_or(0.0);
        total += panel;
        if lo > turning && (panel <= 1e-18 * total || panel == 0.0) {
            break;
        }
        lo = hi;
    }
    total
}

/// Self-test of the integral representation of the weighted Hermite kernel:
/// returns
/// `| sum_{n<N} e^{tn} phi_n(x) phi_n(y) - sqrt(N/2) e^{t(N-1/2)}
///    int_0^inf e^{-s((x+y)z + c z^2)} [phi_N(x+cz) phi_{N-1}(y+cz)
///    + phi_{N-1}(x+cz) phi_N(y+cz)] dz |`
/// with `s = sinh(t/2)`, `c = cosh(t/2)`.
pub fn hermite_kernel_identity_residual(n_paths: usize, t: f64, x: f64, y: f64) -> Result<f64> {
    let n = n_paths;
    let px = phi_all(n + 1, x);
    let py = phi_all(n + 1, y);
    let lhs: f64 = (0..n).map(|k| (t * k as f64).exp() * px[k] * py[k]).sum();
    let sh = (0.5 * t).sinh();
    let ch = (0.5 * t).cosh();
    let reach = (2.0 * n as f64 + 1.0).sqrt() + x.abs().max(y.abs()) + 12.0;
    let upper = reach / ch;
    let mut bx = vec![0.0; n + 1];
    let mut by = vec![0.0; n + 1];
    let integral = adaptive_gauss_legendre(
        |z| {
            phi_all_into(x + ch * z, &mut bx);
            phi_all_into(y + ch * z, &mut by);
            let damp = (-sh * ((x + y) * z + ch * z * z)).exp();
            damp * (bx[n] * by[n - 1] + bx[n - 1] * by[n])
        },
        0.0,
        upper,
        1e-16,
        1e-14,
    )?;
    let rhs = (n as f64 / 2.0).sqrt() * (t * (n as f64 - 0.5)).exp() * integral;
    Ok((lhs - rhs).abs())
}

/// Dense matrix `[int_s^inf phi_n phi_k]_{n,k<N}`.
pub fn projection_matrix(n_paths: usize, s: f64) -> SquareMatrix {
    let vals = phi_all(n_paths + 1, s);
    let ders = ladder_derivatives(&vals, n_paths);
    let mut m = SquareMatrix::zeros(n_paths);
    for a in 0..n_paths {
        m.set(a, a, tail_mass(a, s));
        for b in 0..a {
            let v = projection_offdiag(a, b, &vals, &ders);
            m.set(a, b, v);
            m.set(b, a, v);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gauss_legendre_mapped;

    // 200-digit values of phi_n(x) from H_n(x) e^{-x^2/2} / sqrt(2^n n! sqrt(pi)).
    const REFERENCE: &[(usize, f64, f64)] = &[
        (10, 20.0, 1.6892404198170961232e-76),
        (100, 30.0, 9.0248027944377369456e-114),
        (500, 50.0, 3.6465246129907240715e-198),
        (3, -35.0, -3.6684596995614745702e-262),
        (0, 0.5, 0.662865966442479529),
        (1, -1.25, -0.60791796636050480773),
        (2, 3.0, 0.1003047008028663253),
        (5, 1.3, -0.39939146281375076567),
        (10, -2.7, -0.24422753828996502664),
        (17, 6.5, 0.082011028479787088248),
        (30, 0.1, -0.20275585002094415673),
        (45, 9.4, 0.38803361776700859352),
        (60, -11.2, 0.18394143002366708527),
        (100, 3.3, -0.15516042700936417925),
        (100, 15.0, 0.012191742134520659204),
        (150, -17.9, 0.036626554916119918641),
        (200, 0.77, -0.1707908576024949084),
        (250, 25.0, 5.4037903079192045102e-10),
        (300, -4.1, 0.14329609192482679646),
        (500, 31.0, -0.098623215306475185497),
        (700, 12.5, 0.12603228151364720973),
        (1000, -40.0, 0.17225052073279226983),
        (1500, 2.2, 0.048328493821574829226),
        (2000, 65.0, 2.9110829800106279494e-9),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for &(n, x, want) in REFERENCE {
            let got = phi(n, x);
            let rel = ((got.to_f64() - want) / want).abs();
            assert!(rel < 1e-11, "phi_{n}({x}) = {:?}, want {want}, rel {rel}", got.to_f64());
        }
    }

    #[test]
    fn small_index_values() {
        assert!((phi(0, 0.0).to_f64() - PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(phi(1, 0.0).to_f64(), 0.0);
        let want = -1.0 / (2f64.sqrt() * PI.powf(0.25));
        assert!((phi(2, 0.0).to_f64() - want).abs() < 1e-15);
    }

    #[test]
    fn derivative_values() {
        assert_eq!(phi_prime(0, 0.0).to_f64(), 0.0);
        let want = 2f64.sqrt() * PI.powf(-0.25);
        assert!((phi_prime(1, 0.0).to_f64() - want).abs() < 1e-15);
        let h = 1e-5;
        let fd = (phi(5, 1.3 + h).to_f64() - phi(5, 1.3 - h).to_f64()) / (2.0 * h);
        assert!((phi_prime(5, 1.3).to_f64() - fd).abs() < 1e-8);
    }

    #[test]
    fn parity() {
        for n in [0usize, 1, 2, 7, 40, 333] {
            for x in [0.3, 2.5, 11.0, 40.0] {
                let a = phi(n, x);
                let b = phi(n, -x);
                let expect_sign = if n % 2 == 0 { a.sign() } else { -a.sign() };
                assert_eq!(b.sign(), expect_sign);
                if !a.is_zero() {
                    assert!(((b.log_mag() - a.log_mag()).abs()) < 1e-13);
                }
            }
        }
    }

    #[test]
    fn oscillator_equation_residual() {
        // phi'' from a central difference of the ladder derivative.
        let h = 1e-5;
        for n in 0..=12usize {
            for i in 0..=40 {
                let x = -10.0 + 0.5 * i as f64;
                let d2 = (phi_prime(n, x + h).to_f64() - phi_prime(n, x - h).to_f64()) / (2.0 * h);
                let resid = d2 + (2.0 * n as f64 + 1.0 - x * x) * phi(n, x).to_f64();
                assert!(resid.abs() < 1e-8, "n={n} x={x} resid={resid}");
            }
        }
    }

    #[test]
    fn orthonormality_by_quadrature() {
        for n in 0..=60usize {
            for k in 0..=n {
                let rule = gauss_hermite(n + k + 1).unwrap();
                let mut total = 0.0;
                for (&x, &w) in rule.nodes.iter().zip(&rule.scaled_weights) {
                    let v = phi_all(n + 1, x);
                    total += w * v[n] * v[k];
                }
                let want = if n == k { 1.0 } else { 0.0 };
                assert!((total - want).abs() < 1e-12, "n={n} k={k} got {total}");
            }
        }
    }

    #[test]
    fn uniform_bound() {
        let mut buf = vec![0.0; 201];
        for i in 0..=6000 {
            let x = -30.0 + 0.01 * i as f64;
            phi_all_into(x, &mut buf);
            assert!(buf[1..].iter().all(|v| v.abs() <= 0.8), "x={x}");
        }
    }

    #[test]
    fn reflection_examples() {
        assert!((overlap_reflect(3, 3, 0.0).unwrap() + 1.0).abs() < 1e-14);
        assert!(overlap_reflect(2, 3, 0.0).unwrap().abs() < 1e-14);
        let e = (-1f64).exp();
        assert!((overlap_reflect(0, 0, 1.0).unwrap() - e).abs() < 1e-15);
        assert!((overlap_reflect(1, 1, 1.0).unwrap() - e).abs() < 1e-15);
        for c in [0.2, 0.9, 2.5] {
            let want = 2.0 * (-c * c).exp() * (c * c - 0.5);
            assert!((overlap_reflect(1, 1, c).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn reflection_symmetries() {
        for &(n, k) in &[(0usize, 5usize), (3, 8), (12, 13), (40, 71)] {
            for c in [0.1, 0.7, 1.9, 4.0] {
                let a = overlap_reflect(n, k, c).unwrap();
                let b = overlap_reflect(k, n, c).unwrap();
                assert!((a - b).abs() <= 1e-15, "({n},{k},{c}): {a} vs {b}");
                let r = overlap_reflect(n, k, -c).unwrap();
                let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
                assert!((a - sign * r).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn block_matches_single_overlaps() {
        let rule = OverlapRule::new(9).unwrap();
        let idx = [1usize, 3, 5, 7, 9];
        let block = rule.block(&idx, 0.8);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let single = overlap_reflect(i, j, 0.8).unwrap();
                assert!((block[a * 5 + b] - single).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn projection_examples() {
        assert!((gue_projection_entry(0, 0, -40.0) - 1.0).abs() < 1e-14);
        assert!((gue_projection_entry(0, 0, 0.0) - 0.5).abs() < 1e-15);
        let rule = gauss_legendre_mapped(200, 1.0).unwrap();
        let brute = rule.integrate(|x| phi(0, x).to_f64() * phi(1, x).to_f64());
        let got = gue_projection_entry(0, 1, 0.0);
        assert!(got > 0.0);
        assert!((got - brute).abs() < 1e-12, "{got} vs {brute}");
    }

    #[test]
    fn projection_offdiagonal_against_quadrature() {
        for &(n, k, s) in &[(3usize, 1usize, 0.7), (10, 4, -1.2), (25, 24, 5.0)] {
            let brute = adaptive_gauss_legendre(|x| phi(n, x).to_f64() * phi(k, x).to_f64(), s, s + 30.0, 1e-17, 1e-14)
                .unwrap();
            assert!((gue_projection_entry(n, k, s) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_identity_examples() {
        assert!(hermite_kernel_identity_residual(5, 0.0, 0.3, -0.7).unwrap() < 1e-9);
        assert!(hermite_kernel_identity_residual(8, 0.4, 1.0, 2.0).unwrap() < 1e-8);
        assert!(hermite_kernel_identity_residual(1, 0.0, 0.0, 0.0).unwrap() < 1e-12);
    }

    #[test]
    fn christoffel_darboux_grid() {
        for n in [1usize, 2, 3, 5, 8, 13, 21, 34, 55, 89] {
            for i in 0..10 {
                let x = -3.0 * (2.0 * n as f64).sqrt() * (1.0 - i as f64 / 4.5);
                let r = hermite_kernel_identity_residual(n, 0.0, x, x).unwrap();
                assert!(r < 1e-9, "N={n} x={x} residual {r}");
            }
        }
    }
}
