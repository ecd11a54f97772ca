//! The Airy function `Ai` and its derivative on the real line.
//!
//! Maclaurin series in paired-limb arithmetic on `[-12, 9]`, where the
//! cancellation between the two series costs at most `e^{2 zeta}` with
//! `zeta = (2/3)|x|^{3/2}`; the large-argument asymptotic expansions outside,
//! where their smallest term is below `e^{-2 zeta} < 1e-15`.

use alloc::format;
use core::f64::consts::{FRAC_PI_4, PI};

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::numerics::DoubleDouble;

pub const SERIES_LOWER: f64 = -12.0;
pub const SERIES_UPPER: f64 = 9.0;
pub const DOMAIN_LOWER: f64 = -60.0;
pub const DOMAIN_UPPER: f64 = 200.0;
/// Values below this magnitude are flagged as underflow-scale.
pub const UNDERFLOW_SCALE: f64 = 1e-200;

// Ai(0) and -Ai'(0) as paired limbs.
const AI0: DoubleDouble = DoubleDouble { hi: 0.3550280538878172, lo: 2.05233632436212e-17 };
const MINUS_AIP0: DoubleDouble = DoubleDouble { hi: 0.2588194037928068, lo: -2.522243111610832e-17 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AiryValue {
    pub x: f64,
    pub ai: f64,
    pub ai_prime: f64,
    /// `|Ai(x)|` is below `UNDERFLOW_SCALE` (possibly flushed to zero).
    pub underflow: bool,
}

/// `Ai(x)` and `Ai'(x)` for `-60 <= x <= 200`.
pub fn airy(x: f64) -> Result<AiryValue> {
    if !(DOMAIN_LOWER..=DOMAIN_UPPER).contains(&x) {
        return Err(invalid(format!("Airy argument {x} outside [{DOMAIN_LOWER}, {DOMAIN_UPPER}]")));
    }
    Ok(airy_unchecked(x))
}

/// `airy` without the domain check; beyond 200 the values are zero and
/// flagged, below -60 the asymptotic expansion only gets better.
pub fn airy_unchecked(x: f64) -> AiryValue {
    let (ai, ai_prime) = if x > SERIES_UPPER {
        asymptotic_positive(x)
    } else if x < SERIES_LOWER {
        asymptotic_negative(-x)
    } else {
        maclaurin(x)
    };
    AiryValue { x, ai, ai_prime, underflow: ai.abs() < UNDERFLOW_SCALE && x > 0.0 }
}

pub fn ai(x: f64) -> f64 {
    airy_unchecked(x).ai
}

pub fn ai_prime(x: f64) -> f64 {
    airy_unchecked(x).ai_prime
}

/// `Ai = Ai(0) f - (-Ai'(0)) g` with
/// `f = sum 3^k (1/3)_k x^{3k} / (3k)!` and `g = sum 3^k (2/3)_k x^{3k+1} / (3k+1)!`.
fn maclaurin(x: f64) -> (f64, f64) {
    let xd = DoubleDouble::from_f64(x);
    let x3 = xd * xd * xd;
    let mut f = DoubleDouble::ONE;
    let mut g = xd;
    let mut fp = DoubleDouble::ZERO;
    let mut gp = DoubleDouble::ONE;
    let mut tf = DoubleDouble::ONE;
    let mut tg = xd;
    let mut tfp = DoubleDouble::from_f64(0.5) * xd * xd;
    let mut tgp = DoubleDouble::ONE;
    fp += tfp;
    for k in 1..200 {
        let kf = k as f64;
        tf = tf * x3 / DoubleDouble::from_f64((3.0 * kf - 1.0) * (3.0 * kf));
        tg = tg * x3 / DoubleDouble::from_f64((3.0 * kf) * (3.0 * kf + 1.0));
        tgp = tgp * x3 / DoubleDouble::from_f64((3.0 * kf - 2.0) * (3.0 * kf));
        if k >= 2 {
            tfp = tfp * x3 / DoubleDouble::from_f64((3.0 * kf - 1.0) * (3.0 * kf - 3.0));
            fp += tfp;
        }
        f += tf;
        g += tg;
        gp += tgp;
        let small = |t: DoubleDouble, s: DoubleDouble| t.hi.abs() <= 1e-34 * s.hi.abs().max(1e-300);
        if k > 3 && small(tf, f) && small(tg, g) && small(tfp, fp) && small(tgp, gp) {
            break;
        }
    }
    let ai = AI0 * f - MINUS_AIP0 * g;
    let aip = AI0 * fp - MINUS_AIP0 * gp;
    (ai.to_f64(), aip.to_f64())
}

/// Coefficients `u_k` of the large-argument expansion and `v_k` of its
/// derivative: `u_k = (6k-5)(6k-3)(6k-1) u_{k-1} / (216 k (2k-1))`,
/// `v_k = -(6k+1)/(6k-1) u_k`.
fn uv(k: usize, u_prev: f64) -> (f64, f64) {
    let kf = k as f64;
    let u = u_prev * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / (216.0 * kf * (2.0 * kf - 1.0));
    (u, -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u)
}

/// `Ai(x) ~ e^{-zeta} / (2 sqrt(pi) x^{1/4}) sum (-1)^k u_k zeta^{-k}`, summed
/// up to the smallest term.
fn asymptotic_positive(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x * x.sqrt();
    let (mut su, mut sv) = (1.0, 1.0);
    let mut u = 1.0;
    let mut last = f64::INFINITY;
    let mut zk = 1.0;
    for k in 1..60 {
        let (uk, vk) = uv(k, u);
        u = uk;
        zk /= -zeta;
        let term = (uk * zk).abs();
        if term >= last {
            break;
        }
        last = term;
        su += uk * zk;
        sv += vk * zk;
        if term < 1e-17 * su.abs() {
            break;
        }
    }
    let q = x.powf(0.25);
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    (e / q * su, -e * q * sv)
}

/// `Ai(-z) ~ [cos(zeta - pi/4) sum (-1)^k u_{2k} zeta^{-2k}
///           + sin(zeta - pi/4) sum (-1)^k u_{2k+1} zeta^{-2k-1}] / (sqrt(pi) z^{1/4})`.
fn asymptotic_negative(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z * z.sqrt();
    // Even- and odd-indexed partial sums with alternating signs.
    let (mut ue, mut uo, mut ve, mut vo) = (1.0, 0.0, 1.0, 0.0);
    let mut u = 1.0;
    let mut last = f64::INFINITY;
    let mut zk = 1.0;
    for k in 1..80 {
        let (uk, vk) = uv(k, u);
        u = uk;
        zk /= zeta;
        let term = (uk * zk).abs();
        if term >= last {
            break;
        }
        last = term;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            ue += sign * uk * zk;
            ve += sign * vk * zk;
        } else {
            uo += sign * uk * zk;
            vo += sign * vk * zk;
        }
        if term < 1e-17 {
            break;
        }
    }
    let (s, c) = (zeta - FRAC_PI_4).sin_cos();
    let q = z.powf(0.25);
    let root_pi = PI.sqrt();
    let ai = (c * ue + s * uo) / (root_pi * q);
    let aip = q * (s * ve - c * vo) / root_pi;
    (ai, aip)
}

#[cfg(test)]
mod tests {
    use super::*;

    // 20-digit reference values.
    const REFERENCE: &[(f64, f64, f64)] = &[
        (-50.0, -0.16188142361232092392, 0.96898983727674908714),
        (-20.0, -0.17640612707798468959, 0.8928628567364712384),
        (-12.5, -0.27627456138116024823, -0.41933133041950516441),
        (-9.0, -0.022133721547341403674, -0.97566398092633159471),
        (-5.0, 0.35076100902411431979, 0.32719281855444313679),
        (-1.0, 0.5355608832923521188, -0.010160567116645209395),
        (0.0, 0.35502805388781723926, -0.25881940379280679841),
        (0.5, 0.23169360648083348977, -0.22491053266468389314),
        (1.0, 0.13529241631288141552, -0.15914744129679321279),
        (3.0, 0.0065911393574607191443, -0.011912976705951318474),
        (5.0, 0.00010834442813607441735, -0.000247413890868462476),
        (8.9, 3.3420610425186999076e-9, -1.0062109921836912133e-8),
        (9.1, 1.8242282535640280405e-9, -5.5520373443859194353e-9),
        (15.0, 2.164962520737992299e-18, -8.4205679540177727661e-18),
        (30.0, 3.2082175915504955711e-49, -1.7598765814327259821e-48),
        (100.0, 2.6344821520881844896e-291, -2.6351403616044099336e-290),
    ];

    #[test]
    fn reference_values() {
        for &(x, a, ap) in REFERENCE {
            let v = airy(x).unwrap();
            // Near a zero of Ai the relative error is measured against |Ai'|.
            let tol_a = 1e-12 * a.abs().max(if x < 0.0 { ap.abs() } else { 0.0 });
            let tol_ap = 1e-12 * ap.abs().max(if x < 0.0 { a.abs() } else { 0.0 });
            assert!((v.ai - a).abs() <= tol_a, "Ai({x}) = {} vs {a}", v.ai);
            assert!((v.ai_prime - ap).abs() <= tol_ap, "Ai'({x}) = {} vs {ap}", v.ai_prime);
        }
    }

    #[test]
    fn origin_values() {
        let v = airy(0.0).unwrap();
        assert!((v.ai - 0.3550281).abs() < 1e-7);
        assert!((v.ai_prime + 0.2588194).abs() < 1e-7);
    }

    #[test]
    fn regimes_agree_across_both_switch_points() {
        for &x in &[SERIES_UPPER, SERIES_LOWER] {
            for d in [-0.5, -0.1, 0.0, 0.1, 0.5] {
                let y = x + d;
                let s = maclaurin(y);
                let a = if x > 0.0 { asymptotic_positive(y) } else { asymptotic_negative(-y) };
                let scale = s.0.abs().max(s.1.abs());
                assert!((s.0 - a.0).abs() < 1e-13 * scale, "{y}: {s:?} {a:?}");
                assert!((s.1 - a.1).abs() < 1e-13 * scale, "{y}: {s:?} {a:?}");
            }
        }
    }

    #[test]
    fn ode_residual() {
        // Five-point central stencil.
        let h = 4e-3;
        for &x in &[-5.0, -1.0, 0.0, 1.0, 5.0] {
            let second = (-ai(x + 2.0 * h) + 16.0 * ai(x + h) - 30.0 * ai(x) + 16.0 * ai(x - h) - ai(x - 2.0 * h))
                / (12.0 * h * h);
            assert!((second - x * ai(x)).abs() < 1e-8, "{x}");
        }
        for i in 0..=160 {
            let x = -8.0 + 0.1 * i as f64;
            let second = (-ai_prime(x + 2.0 * h) + 8.0 * ai_prime(x + h) - 8.0 * ai_prime(x - h)
                + ai_prime(x - 2.0 * h))
                / (12.0 * h);
            assert!((second - x * ai(x)).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn positive_and_decreasing_on_the_right() {
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let v = airy(i as f64 * 0.25).unwrap();
            assert!(v.ai > 0.0 && v.ai < prev);
            prev = v.ai;
        }
    }

    #[test]
    fn underflow_flag_and_domain() {
        let v = airy(100.0).unwrap();
        assert!(v.ai < 1e-200 && v.underflow);
        assert!(!airy(10.0).unwrap().underflow);
        assert_eq!(airy(200.0).unwrap().ai, 0.0);
        assert!(airy(-60.5).is_err());
        assert!(airy(200.5).is_err());
    }
}
