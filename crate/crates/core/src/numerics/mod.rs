//! Scalar arithmetic for quantities spanning magnitudes like `e^{±cN}`.
//!
//! [`HpScalar`] wraps an MPFR float with a configurable binary precision. The MPFR exponent
//! range (about `2^{±2^30}`) makes overflow a non-issue for every quantity in this crate, so
//! products, ratios and sums of huge or tiny values are carried directly; the log-magnitude is
//! available on demand. Exact rational arithmetic is provided by [`rug::Rational`]; generic code
//! is written against the [`Scalar`] trait so that the same solver runs on either.

pub mod quad;
pub mod special;

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Rational};

use crate::error::{Error, Result};

/// Binary precision in bits.
pub type Precision = u32;

/// Default working precision.
pub const DEFAULT_PRECISION: Precision = 256;

/// Arbitrary-precision binary float.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct HpScalar(Float);

impl HpScalar {
    pub fn from_float(f: Float) -> Self {
        HpScalar(f)
    }

    pub fn zero(prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, 0))
    }

    pub fn one(prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, 1))
    }

    pub fn from_f64(x: f64, prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, x))
    }

    pub fn from_int(x: i64, prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, x))
    }

    pub fn from_rational(r: &Rational, prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, r))
    }

    /// `e^{log_value}`.
    pub fn from_ln(log_value: &HpScalar) -> Self {
        log_value.exp()
    }

    pub fn pi(prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, Constant::Pi))
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    pub fn into_float(self) -> Float {
        self.0
    }

    pub fn prec(&self) -> Precision {
        self.0.prec()
    }

    /// Same value rounded to `prec` bits.
    pub fn with_prec(&self, prec: Precision) -> Self {
        HpScalar(Float::with_val(prec, &self.0))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.cmp0() == Some(Ordering::Greater)
    }

    pub fn is_negative(&self) -> bool {
        self.0.cmp0() == Some(Ordering::Less)
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn abs(&self) -> Self {
        HpScalar(Float::with_val(self.prec(), self.0.abs_ref()))
    }

    pub fn ln(&self) -> Self {
        HpScalar(Float::with_val(self.prec(), self.0.ln_ref()))
    }

    pub fn exp(&self) -> Self {
        HpScalar(Float::with_val(self.prec(), self.0.exp_ref()))
    }

    pub fn sqrt(&self) -> Self {
        HpScalar(Float::with_val(self.prec(), self.0.sqrt_ref()))
    }

    pub fn powi(&self, k: i64) -> Self {
        let k = i32::try_from(k).expect("exponent fits in i32");
        HpScalar(Float::with_val(self.prec(), (&self.0).pow(k)))
    }

    pub fn powf(&self, e: &HpScalar) -> Self {
        HpScalar(Float::with_val(self.prec().max(e.prec()), (&self.0).pow(&e.0)))
    }

    pub fn recip(&self) -> Self {
        HpScalar(Float::with_val(self.prec(), self.0.recip_ref()))
    }

    /// `ln|x|`, the log-magnitude of the value.
    pub fn log_magnitude(&self) -> Self {
        self.abs().ln()
    }

    /// `log10|x|` as a double (finite for every nonzero value, whatever its size).
    pub fn log10(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let ln = self.log_magnitude();
        ln.to_f64() / std::f64::consts::LN_10
    }

    /// `ln|x|` as a double.
    pub fn ln_f64(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.log_magnitude().to_f64()
    }

    pub fn max(&self, other: &HpScalar) -> HpScalar {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// Number of significant decimal digits needed for an exact round trip at `prec` bits.
    pub fn roundtrip_digits(prec: Precision) -> usize {
        (f64::from(prec) * std::f64::consts::LOG10_2).ceil() as usize + 1
    }

    /// Decimal serialization: sign, mantissa `d.ddd…`, base-10 exponent, e.g. `-1.25e-3`.
    /// Enough digits are written that [`HpScalar::from_decimal`] at the same precision
    /// recovers the value exactly.
    pub fn to_decimal(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let digits = Self::roundtrip_digits(self.prec());
        let raw = self.0.to_string_radix(10, Some(digits));
        normalize_decimal(&raw)
    }

    /// Decimal string with a fixed number of significant digits (for human-facing output).
    pub fn to_decimal_digits(&self, digits: usize) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        normalize_decimal(&self.0.to_string_radix(10, Some(digits.max(1))))
    }

    pub fn from_decimal(s: &str, prec: Precision) -> Result<Self> {
        let parsed = Float::parse(s.trim()).map_err(|e| Error::Parse(format!("{s:?}: {e}")))?;
        Ok(HpScalar(Float::with_val(prec, parsed)))
    }

    /// Exact rational value of the float.
    pub fn to_rational(&self) -> Option<Rational> {
        self.0.to_rational()
    }
}

fn normalize_decimal(raw: &str) -> String {
    // MPFR writes `1.2345e10`, `-1.2345e-10` or, for small exponents, sometimes no exponent.
    let (mant, exp) = match raw.find(['e', 'E', '@']) {
        Some(i) => (&raw[..i], raw[i + 1..].parse::<i64>().unwrap_or(0)),
        None => (raw, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    let mut digits: String = int_part.chars().chain(frac_part.chars()).collect();
    let mut exp10 = exp + int_part.len() as i64 - 1;
    let lead = digits.chars().take_while(|&c| c == '0').count();
    if lead == digits.len() {
        return "0".to_string();
    }
    digits.drain(..lead);
    exp10 -= lead as i64;
    let (first, rest) = digits.split_at(1);
    let sign = if neg { "-" } else { "" };
    if rest.is_empty() {
        format!("{sign}{first}e{exp10}")
    } else {
        format!("{sign}{first}.{rest}e{exp10}")
    }
}

impl fmt::Debug for HpScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_digits(20))
    }
}

impl fmt::Display for HpScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(d) => write!(f, "{}", self.to_decimal_digits(d)),
            None => write!(f, "{}", self.to_decimal()),
        }
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl<'a> $trait<&'a HpScalar> for &'a HpScalar {
            type Output = HpScalar;
            fn $method(self, rhs: &'a HpScalar) -> HpScalar {
                let prec = self.prec().max(rhs.prec());
                HpScalar(Float::with_val(prec, $trait::$method(&self.0, &rhs.0)))
            }
        }
        impl $trait<HpScalar> for HpScalar {
            type Output = HpScalar;
            fn $method(self, rhs: HpScalar) -> HpScalar {
                $trait::$method(&self, &rhs)
            }
        }
        impl<'a> $trait<&'a HpScalar> for HpScalar {
            type Output = HpScalar;
            fn $method(self, rhs: &'a HpScalar) -> HpScalar {
                $trait::$method(&self, rhs)
            }
        }
        impl<'a> $trait<HpScalar> for &'a HpScalar {
            type Output = HpScalar;
            fn $method(self, rhs: HpScalar) -> HpScalar {
                $trait::$method(self, &rhs)
            }
        }
        impl $trait<f64> for &HpScalar {
            type Output = HpScalar;
            fn $method(self, rhs: f64) -> HpScalar {
                HpScalar(Float::with_val(self.prec(), $trait::$method(&self.0, rhs)))
            }
        }
        impl $trait<f64> for HpScalar {
            type Output = HpScalar;
            fn $method(self, rhs: f64) -> HpScalar {
                $trait::$method(&self, rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for HpScalar {
    type Output = HpScalar;
    fn neg(self) -> HpScalar {
        HpScalar(-self.0)
    }
}

impl Neg for &HpScalar {
    type Output = HpScalar;
    fn neg(self) -> HpScalar {
        HpScalar(Float::with_val(self.prec(), -&self.0))
    }
}

impl std::iter::Sum for HpScalar {
    fn sum<I: Iterator<Item = HpScalar>>(mut iter: I) -> HpScalar {
        let first = iter.next().unwrap_or_else(|| HpScalar::zero(DEFAULT_PRECISION));
        iter.fold(first, |acc, x| acc + x)
    }
}

/// Relative difference `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: &HpScalar, b: &HpScalar) -> f64 {
    let scale = a.abs().max(&b.abs());
    if scale.is_zero() {
        return 0.0;
    }
    ((a - b).abs() / scale).to_f64()
}

/// Field operations shared by the exact (rational) and high-precision (float) code paths.
pub trait Scalar: Clone + fmt::Debug + PartialOrd + Send + Sync + 'static {
    /// Construction context: the precision for floats, nothing for rationals.
    type Ctx: Copy + fmt::Debug + Send + Sync;

    fn ctx(&self) -> Self::Ctx;
    fn from_rational(r: &Rational, ctx: Self::Ctx) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn to_f64(&self) -> f64;
    fn to_hp(&self, prec: Precision) -> HpScalar;
    /// Whether arithmetic is exact; exact fields compare residuals against zero.
    fn is_exact() -> bool;
    /// Working precision of a float, `None` for exact values.
    fn precision_bits(&self) -> Option<Precision>;

    fn from_i64(v: i64, ctx: Self::Ctx) -> Self {
        Self::from_rational(&Rational::from(v), ctx)
    }
    fn zero(ctx: Self::Ctx) -> Self {
        Self::from_i64(0, ctx)
    }
    fn one(ctx: Self::Ctx) -> Self {
        Self::from_i64(1, ctx)
    }
    fn neg(&self) -> Self {
        Self::zero(self.ctx()).sub(self)
    }
    fn is_positive(&self) -> bool {
        !self.is_zero() && !self.is_negative()
    }
    fn abs(&self) -> Self {
        if self.is_negative() {
            self.neg()
        } else {
            self.clone()
        }
    }
}

impl Scalar for HpScalar {
    type Ctx = Precision;

    fn ctx(&self) -> Precision {
        self.prec()
    }
    fn from_rational(r: &Rational, ctx: Precision) -> Self {
        HpScalar::from_rational(r, ctx)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn is_zero(&self) -> bool {
        HpScalar::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        HpScalar::is_negative(self)
    }
    fn to_f64(&self) -> f64 {
        HpScalar::to_f64(self)
    }
    fn to_hp(&self, prec: Precision) -> HpScalar {
        self.with_prec(prec)
    }
    fn is_exact() -> bool {
        false
    }
    fn precision_bits(&self) -> Option<Precision> {
        Some(self.prec())
    }
    fn from_i64(v: i64, ctx: Precision) -> Self {
        HpScalar::from_int(v, ctx)
    }
}

impl Scalar for Rational {
    type Ctx = ();

    fn ctx(&self) {}
    fn from_rational(r: &Rational, _: ()) -> Self {
        r.clone()
    }
    fn add(&self, other: &Self) -> Self {
        Rational::from(self + other)
    }
    fn sub(&self, other: &Self) -> Self {
        Rational::from(self - other)
    }
    fn mul(&self, other: &Self) -> Self {
        Rational::from(self * other)
    }
    fn div(&self, other: &Self) -> Self {
        assert!(!other.is_zero(), "rational division by zero");
        Rational::from(self / other)
    }
    fn is_zero(&self) -> bool {
        self.cmp0() == Ordering::Equal
    }
    fn is_negative(&self) -> bool {
        self.cmp0() == Ordering::Less
    }
    fn to_f64(&self) -> f64 {
        Rational::to_f64(self)
    }
    fn to_hp(&self, prec: Precision) -> HpScalar {
        HpScalar::from_rational(self, prec)
    }
    fn is_exact() -> bool {
        true
    }
    fn precision_bits(&self) -> Option<Precision> {
        None
    }
}

/// Binary arithmetic operation selector for [`scalar_arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Result of [`scalar_arith`]; `cancellation` is set when an addition or subtraction lost
/// more than half of the working precision.
#[derive(Debug, Clone)]
pub struct ArithResult {
    pub value: HpScalar,
    pub cancellation: bool,
}

pub fn scalar_arith(a: &HpScalar, b: &HpScalar, op: ArithOp) -> Result<ArithResult> {
    let value = match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => {
            if b.is_zero() {
                return Err(Error::DivisionByZero);
            }
            a / b
        }
    };
    let cancellation = match op {
        ArithOp::Add | ArithOp::Sub => {
            let scale = a.abs().max(&b.abs());
            if scale.is_zero() {
                false
            } else {
                let prec = value.prec();
                let threshold = &scale * HpScalar::from_int(2, prec).powi(-(i64::from(prec) / 2));
                value.abs() <= threshold
            }
        }
        ArithOp::Mul | ArithOp::Div => false,
    };
    Ok(ArithResult { value, cancellation })
}

/// Adaptive precision: start at `base_bits`, double until two consecutive runs agree to
/// `target_rel_tol`, give up past `max_bits`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionPolicy {
    pub base_bits: Precision,
    pub target_rel_tol: f64,
    pub max_bits: Precision,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy { base_bits: DEFAULT_PRECISION, target_rel_tol: 1e-20, max_bits: 1 << 15 }
    }
}

impl PrecisionPolicy {
    pub fn new(base_bits: Precision, target_rel_tol: f64) -> Result<Self> {
        let p = PrecisionPolicy { base_bits, target_rel_tol, ..Default::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_bits < 64 {
            return Err(Error::InvalidParams(format!("base_bits {} < 64", self.base_bits)));
        }
        if !(self.target_rel_tol > 0.0 && self.target_rel_tol <= 1e-6) {
            return Err(Error::InvalidParams(format!("target_rel_tol {} outside (0, 1e-6]", self.target_rel_tol)));
        }
        if self.max_bits < self.base_bits {
            return Err(Error::InvalidParams("max_bits < base_bits".into()));
        }
        Ok(())
    }

    /// Runs `compute` at increasing precision until the probe values of two consecutive runs
    /// agree. `compute` may itself reject a precision (e.g. on a failed residual check) by
    /// returning `Ok(None)`; that forces another doubling.
    pub fn escalate<T>(
        &self,
        mut compute: impl FnMut(Precision) -> Result<Option<T>>,
        probe: impl Fn(&T) -> Vec<HpScalar>,
    ) -> Result<(T, Precision)> {
        self.validate()?;
        let mut bits = self.base_bits;
        let mut prev: Option<Vec<HpScalar>> = None;
        let mut last_change = f64::INFINITY;
        while bits <= self.max_bits {
            if let Some(value) = compute(bits)? {
                let current = probe(&value);
                if let Some(prev) = &prev {
                    last_change = prev.iter().zip(&current).map(|(a, b)| rel_diff(a, b)).fold(0.0, f64::max);
                    if last_change <= self.target_rel_tol {
                        return Ok((value, bits));
                    }
                }
                prev = Some(current);
            } else {
                prev = None;
            }
            bits = bits.saturating_mul(2);
        }
        Err(Error::PrecisionExhausted { bits: self.max_bits, rel_change: last_change })
    }
}

/// Exact binomial coefficient as a float, `C(n, k)`; zero when `k > n`.
pub fn binomial(n: u64, k: u64, prec: Precision) -> HpScalar {
    if k > n {
        return HpScalar::zero(prec);
    }
    let value = rug::Integer::from(rug::Integer::binomial_u(n as u32, k as u32));
    HpScalar(Float::with_val(prec, &value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_of_huge_values_adds_ln2_to_log_magnitude() {
        let x = HpScalar::from_int(500, 256).exp();
        let r = scalar_arith(&x, &x, ArithOp::Add).unwrap();
        let expected = HpScalar::from_int(500, 256) + HpScalar::from_int(2, 256).ln();
        assert!(rel_diff(&r.value.log_magnitude(), &expected) < 1e-70);
        assert!(!r.cancellation);
    }

    #[test]
    fn sub_of_equal_values_flags_cancellation() {
        let x = HpScalar::from_f64(0.3, 256);
        let r = scalar_arith(&x, &x, ArithOp::Sub).unwrap();
        assert!(r.value.is_zero());
        assert!(r.cancellation);
        let y = HpScalar::from_f64(0.1, 256);
        assert!(!scalar_arith(&x, &y, ArithOp::Sub).unwrap().cancellation);
    }

    #[test]
    fn div_of_tiny_values_is_one() {
        let x = HpScalar::from_int(-400, 256).exp();
        let r = scalar_arith(&x, &x, ArithOp::Div).unwrap();
        assert_eq!(r.value, HpScalar::one(256));
        assert_eq!(scalar_arith(&x, &HpScalar::zero(256), ArithOp::Div).unwrap_err(), Error::DivisionByZero);
    }

    #[test]
    fn huge_magnitudes_do_not_overflow() {
        let x = HpScalar::from_int(100_000, 128).exp();
        assert!(x.is_finite());
        assert!((x.ln_f64() - 100_000.0).abs() < 1e-9);
        let tiny = x.recip();
        assert!(tiny.is_positive());
        assert!((tiny.log10() + 100_000.0 / std::f64::consts::LN_10).abs() < 1e-9);
    }

    #[test]
    fn decimal_roundtrip_is_exact() {
        for prec in [64u32, 256, 1000] {
            for v in [1.0 / 3.0, -2.5e-300, 7.0, 1e300] {
                let x = HpScalar::from_f64(v, prec).powi(3) / HpScalar::from_int(7, prec);
                let s = x.to_decimal();
                let y = HpScalar::from_decimal(&s, prec).unwrap();
                assert_eq!(x, y, "{s}");
            }
        }
        assert_eq!(HpScalar::from_int(2, 64).to_decimal_digits(3), "2.00e0");
        assert_eq!(HpScalar::from_f64(-0.015625, 64).to_decimal_digits(3), "-1.56e-2");
        assert_eq!(HpScalar::zero(64).to_decimal(), "0");
    }

    #[test]
    fn policy_validation() {
        assert!(PrecisionPolicy::new(32, 1e-20).is_err());
        assert!(PrecisionPolicy::new(128, 1e-3).is_err());
        assert!(PrecisionPolicy::new(128, 1e-10).is_ok());
    }

    #[test]
    fn escalation_stops_when_runs_agree() {
        let policy = PrecisionPolicy::new(64, 1e-30).unwrap();
        let (value, bits) = policy
            .escalate(|p| Ok(Some(HpScalar::from_int(1, p) / HpScalar::from_int(3, p))), |v| vec![v.clone()])
            .unwrap();
        assert!(bits >= 128);
        assert!(rel_diff(&value, &(HpScalar::one(512) / HpScalar::from_int(3, 512))) < 1e-30);
    }

    #[test]
    fn binomial_matches_small_cases() {
        assert_eq!(binomial(5, 2, 64).to_f64(), 10.0);
        assert!(binomial(3, 4, 64).is_zero());
        assert_eq!(binomial(800, 0, 64).to_f64(), 1.0);
    }
}
