use core::cmp::Ordering;
use core::ops::{Add, Div, Mul, Neg, Sub};

// Redundant (but harmless) when another crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

/// A real number stored as a normalized binary mantissa and an unbounded
/// integer exponent.
///
/// Products and quotients never overflow or underflow, and conversion from
/// `f64` is exact. `log_mag` is derived on demand. Used wherever Hermite
/// functions or the `e^{n tau}` balancing factors would leave the `f64` range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledReal {
    // Zero, or 0.5 <= |mant| < 1.
    mant: f64,
    exp2: i64,
}

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

// Splits a finite nonzero x into (f, e) with x = f 2^e and 0.5 <= |f| < 1.
fn frexp(x: f64) -> (f64, i64) {
    let mut x = x;
    let mut shift = 0i64;
    let mut bits = x.to_bits();
    if (bits >> 52) & 0x7ff == 0 {
        x *= 18_446_744_073_709_551_616.0; // 2^64, lifts subnormals
        shift = -64;
        bits = x.to_bits();
    }
    let field = ((bits >> 52) & 0x7ff) as i64;
    let f = f64::from_bits((bits & !(0x7ff << 52)) | (1022u64 << 52));
    (f, field - 1022 + shift)
}

// x * 2^e without intermediate overflow.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    if x == 0.0 {
        return x;
    }
    e = e.clamp(-2200, 2200);
    while e > 1000 {
        x *= f64::from_bits(2023u64 << 52);
        e -= 1000;
    }
    while e < -1000 {
        x *= f64::from_bits(23u64 << 52);
        e += 1000;
    }
    x * f64::from_bits(((e + 1023) as u64) << 52)
}

impl ScaledReal {
    pub const ZERO: ScaledReal = ScaledReal { mant: 0.0, exp2: 0 };
    pub const ONE: ScaledReal = ScaledReal { mant: 0.5, exp2: 1 };

    fn normalized(mant: f64, exp2: i64) -> Self {
        if mant == 0.0 || !mant.is_finite() {
            return ScaledReal { mant: if mant == 0.0 { 0.0 } else { mant }, exp2: if mant == 0.0 { 0 } else { exp2 } };
        }
        let (f, e) = frexp(mant);
        ScaledReal { mant: f, exp2: exp2 + e }
    }

    pub fn from_f64(x: f64) -> Self {
        Self::normalized(x, 0)
    }

    /// `mant * 2^exp2` for any finite `mant`.
    pub fn from_mantissa_exponent(mant: f64, exp2: i64) -> Self {
        Self::normalized(mant, exp2)
    }

    /// `(mant, exp2)` with `self = mant * 2^exp2` and `0.5 <= |mant| < 1`
    /// (both zero for zero).
    pub fn mantissa_exponent(self) -> (f64, i64) {
        (self.mant, self.exp2)
    }

    /// Builds `sign * exp(log_mag)`. A zero sign yields zero.
    pub fn from_parts(sign: i8, log_mag: f64) -> Self {
        match sign.signum() {
            0 => Self::ZERO,
            1 => Self::exp(log_mag),
            _ => -Self::exp(log_mag),
        }
    }

    /// `exp(x)` without overflow.
    pub fn exp(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        if !x.is_finite() {
            return ScaledReal { mant: f64::INFINITY, exp2: 0 };
        }
        let k = (x / core::f64::consts::LN_2).round();
        let r = (x - k * LN2_HI) - k * LN2_LO;
        Self::normalized(r.exp(), k as i64)
    }

    pub fn sign(self) -> i8 {
        if self.mant > 0.0 {
            1
        } else if self.mant < 0.0 {
            -1
        } else {
            0
        }
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn log_mag(self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.abs().ln() + self.exp2 as f64 * core::f64::consts::LN_2
        }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }

    pub fn to_f64(self) -> f64 {
        ldexp(self.mant, self.exp2)
    }

    pub fn abs(self) -> Self {
        ScaledReal { mant: self.mant.abs(), exp2: self.exp2 }
    }

    /// Multiplies by `exp(shift)`.
    pub fn scale_exp(self, shift: f64) -> Self {
        if self.is_zero() {
            self
        } else {
            self * Self::exp(shift)
        }
    }

    /// Multiplies by `2^k` exactly.
    pub fn scale_pow2(self, k: i64) -> Self {
        if self.is_zero() {
            self
        } else {
            ScaledReal { mant: self.mant, exp2: self.exp2 + k }
        }
    }

    pub fn mul_f64(self, x: f64) -> Self {
        self * ScaledReal::from_f64(x)
    }

    /// Compares magnitudes.
    pub fn cmp_abs(self, other: Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self
                .exp2
                .cmp(&other.exp2)
                .then(self.mant.abs().partial_cmp(&other.mant.abs()).unwrap_or(Ordering::Equal)),
        }
    }
}

impl Default for ScaledReal {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<f64> for ScaledReal {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Neg for ScaledReal {
    type Output = Self;
    fn neg(self) -> Self {
        ScaledReal { mant: -self.mant, exp2: self.exp2 }
    }
}

impl Mul for ScaledReal {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        Self::normalized(self.mant * rhs.mant, self.exp2 + rhs.exp2)
    }
}

impl Div for ScaledReal {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        if self.is_zero() {
            return Self::ZERO;
        }
        if rhs.is_zero() {
            return ScaledReal { mant: self.mant * f64::INFINITY, exp2: 0 };
        }
        Self::normalized(self.mant / rhs.mant, self.exp2 - rhs.exp2)
    }
}

impl Add for ScaledReal {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp2 >= rhs.exp2 { (self, rhs) } else { (rhs, self) };
        let gap = big.exp2 - small.exp2;
        if gap > 64 {
            return big;
        }
        Self::normalized(big.mant + ldexp(small.mant, -gap), big.exp2)
    }
}

impl Sub for ScaledReal {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl core::iter::Sum for ScaledReal {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl core::iter::Product for ScaledReal {
    fn product<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ONE, |a, b| a * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_sign() {
        assert!(ScaledReal::from_f64(0.0).is_zero());
        assert_eq!(ScaledReal::from_f64(-2.5).sign(), -1);
        assert_eq!(ScaledReal::from_f64(-2.5).to_f64(), -2.5);
        assert_eq!((ScaledReal::from_f64(3.0) - ScaledReal::from_f64(3.0)).to_f64(), 0.0);
    }

    #[test]
    fn long_products_stay_in_range() {
        // 10^4 factors of magnitude e^{+-50}, alternating sign pattern.
        let mut acc = ScaledReal::ONE;
        let mut log_sum = 0.0;
        let mut sign = 1i8;
        for i in 0..10_000 {
            let e = if i % 3 == 0 { -50.0 } else { 50.0 };
            let s = if i % 7 == 0 { -1 } else { 1 };
            acc = acc * ScaledReal::from_parts(s, e);
            log_sum += e;
            sign *= s;
        }
        // The binary exponent is exact; only the mantissa product rounds.
        assert!((acc.log_mag() - log_sum).abs() <= 1e-15 * log_sum.abs());
        assert_eq!(acc.sign(), sign);
        assert!(acc.log_mag().is_finite());
    }

    #[test]
    fn extreme_magnitudes() {
        let big = ScaledReal::exp(5000.0);
        assert!((big.log_mag() - 5000.0).abs() < 1e-12);
        let tiny = ScaledReal::exp(-5000.0);
        assert!(((big * tiny).to_f64() - 1.0).abs() < 1e-12);
        assert_eq!(tiny.to_f64(), 0.0);
        assert_eq!(ScaledReal::from_f64(f64::MIN_POSITIVE / 8.0).to_f64(), f64::MIN_POSITIVE / 8.0);
        assert_eq!(ScaledReal::ONE.to_f64(), 1.0);
        assert_eq!((big + big).log_mag(), big.log_mag() + core::f64::consts::LN_2);
    }

    proptest! {
        #[test]
        fn round_trip(x in -1e300f64..1e300) {
            let y = ScaledReal::from_f64(x).to_f64();
            prop_assert!((y - x).abs() <= 1e-15 * x.abs());
        }

        #[test]
        fn product_rule(a in -1e100f64..1e100, b in -1e100f64..1e100) {
            let p = ScaledReal::from_f64(a) * ScaledReal::from_f64(b);
            let sa = ScaledReal::from_f64(a);
            let sb = ScaledReal::from_f64(b);
            if a != 0.0 && b != 0.0 {
                let want = sa.log_mag() + sb.log_mag();
                prop_assert!((p.log_mag() - want).abs() <= 4e-16 * (1.0 + want.abs()));
                prop_assert_eq!(p.sign(), sa.sign() * sb.sign());
            } else {
                prop_assert!(p.is_zero());
            }
        }

        #[test]
        fn sums_match_f64(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let s = (ScaledReal::from_f64(a) + ScaledReal::from_f64(b)).to_f64();
            prop_assert_eq!(s, a + b);
        }
    }
}
