//! Wide binary floating point values used as the exactness oracle.
//!
//! A [`WideReal`] wraps an MPFR float. Every arithmetic operator rounds to
//! nearest at the larger of the two operand precisions, so as long as values
//! are created at the oracle precision `P` the whole computation stays at `P`
//! bits. The `exact_*` methods instead size the result so that no rounding
//! happens at all; they are used for partial sums and for the exact result of
//! an emulated operation.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Hard ceiling for the precision of an exact sum or product.
pub const MAX_EXACT_BITS: u32 = 1 << 16;

/// Environment variable overriding the oracle precision rule.
pub const ORACLE_BITS_ENV: &str = "FPSUM_ORACLE_BITS";

/// Oracle precision for a run of `n` operands in a format with
/// `precision_bits` significand bits: `4p + ceil(log2 n) + 32`.
///
/// `FPSUM_ORACLE_BITS` overrides the rule, but never below the rule's floor
/// of `2p + 8` bits, which is what error extraction needs to stay meaningful.
pub fn oracle_bits(precision_bits: u32, n: usize) -> u32 {
    let rule = default_oracle_bits(precision_bits, n);
    match std::env::var(ORACLE_BITS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u32>().ok())
    {
        Some(bits) => bits.max(2 * precision_bits + 8),
        None => rule,
    }
}

/// The precision rule without the environment override.
pub fn default_oracle_bits(precision_bits: u32, n: usize) -> u32 {
    let log_n = usize::BITS - n.max(1).saturating_sub(1).leading_zeros();
    4 * precision_bits + log_n + 32
}

#[derive(Clone, PartialEq, PartialOrd)]
pub struct WideReal(Float);

impl WideReal {
    pub fn zero(prec: u32) -> Self {
        WideReal(Float::new(prec))
    }

    pub fn one(prec: u32) -> Self {
        WideReal(Float::with_val(prec, 1))
    }

    /// Exact when `prec >= 53`.
    pub fn from_f64(prec: u32, v: f64) -> Self {
        WideReal(Float::with_val(prec, v))
    }

    pub fn from_i64(prec: u32, v: i64) -> Self {
        WideReal(Float::with_val(prec.max(64), v)).with_prec(prec)
    }

    /// `2^exp`, exact at any precision.
    pub fn pow2(prec: u32, exp: i32) -> Self {
        let mut f = Float::with_val(prec, 1);
        f <<= exp;
        WideReal(f)
    }

    pub fn from_float(f: Float) -> Self {
        WideReal(f)
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    pub fn into_float(self) -> Float {
        self.0
    }

    pub fn prec(&self) -> u32 {
        self.0.prec()
    }

    /// Re-round to `prec` bits (nearest).
    pub fn with_prec(&self, prec: u32) -> Self {
        WideReal(Float::with_val(prec, &self.0))
    }

    /// Round to `bits` significant bits in the given direction, returning the
    /// direction the rounding went.
    pub fn round_bits(&self, bits: u32, round: Round) -> (Self, Ordering) {
        let (f, dir) = Float::with_val_round(bits, &self.0, round);
        (WideReal(f), dir)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_sign_negative(&self) -> bool {
        self.0.is_sign_negative() && !self.0.is_zero()
    }

    /// Binary exponent `e` with `self = m * 2^e`, `0.5 <= |m| < 1`.
    pub fn exponent(&self) -> Option<i32> {
        self.0.get_exp()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn abs(&self) -> Self {
        WideReal(self.0.clone().abs())
    }

    pub fn sqrt(&self) -> Self {
        WideReal(self.0.clone().sqrt())
    }

    pub fn ln(&self) -> Self {
        WideReal(self.0.clone().ln())
    }

    pub fn exp(&self) -> Self {
        WideReal(self.0.clone().exp())
    }

    pub fn square(&self) -> Self {
        WideReal(self.0.clone().square())
    }

    /// Multiply by `2^exp` (exact).
    pub fn scale2(&self, exp: i32) -> Self {
        let mut f = self.0.clone();
        f <<= exp;
        WideReal(f)
    }

    /// Integer power by repeated squaring at the value's precision.
    pub fn powi(&self, k: u32) -> Self {
        WideReal(Float::with_val(self.prec(), Pow::pow(&self.0, k)))
    }

    pub fn max<'a>(&'a self, other: &'a Self) -> &'a Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Quotient rounded to the larger operand precision.
    pub fn div(&self, other: &WideReal) -> WideReal {
        let prec = self.prec().max(other.prec());
        WideReal(Float::with_val(prec, &self.0 / &other.0))
    }

    /// `self + other` without rounding (capped at [`MAX_EXACT_BITS`]).
    pub fn exact_add(&self, other: &WideReal) -> WideReal {
        let prec = exact_sum_bits(&self.0, &other.0);
        WideReal(Float::with_val(prec, &self.0 + &other.0))
    }

    /// `self - other` without rounding (capped at [`MAX_EXACT_BITS`]).
    pub fn exact_sub(&self, other: &WideReal) -> WideReal {
        let prec = exact_sum_bits(&self.0, &other.0);
        WideReal(Float::with_val(prec, &self.0 - &other.0))
    }

    /// `self * other` without rounding.
    pub fn exact_mul(&self, other: &WideReal) -> WideReal {
        let prec = (self.prec() + other.prec()).min(MAX_EXACT_BITS);
        WideReal(Float::with_val(prec, &self.0 * &other.0))
    }

    /// Sum of all items, exact.
    pub fn exact_total<'a, I>(prec: u32, items: I) -> WideReal
    where
        I: IntoIterator<Item = &'a WideReal>,
    {
        items
            .into_iter()
            .fold(WideReal::zero(prec), |acc, x| acc.exact_add(x))
    }

    /// Exact hexadecimal rendering, e.g. `-1.8@1` for -24.
    pub fn to_hex(&self) -> String {
        let mut s = self.0.to_string_radix(16, None);
        if self.0.is_finite() && !s.contains('@') {
            s.push_str("@0");
        }
        s
    }

    /// Parse the output of [`WideReal::to_hex`], or a decimal literal, or a
    /// C-style hex float (`0x1.8p3`). Hex inputs are parsed exactly.
    pub fn parse(text: &str, min_prec: u32) -> Option<WideReal> {
        let t = text.trim();
        if t.is_empty() {
            return None;
        }
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let lower = body.to_ascii_lowercase();
        let value = if let Some(hex) = lower.strip_prefix("0x") {
            parse_c_hex(hex, min_prec)?
        } else if lower.contains('@') {
            let digits = lower.chars().filter(|c| c.is_ascii_hexdigit()).count() as u32;
            let prec = min_prec.max(4 * digits + 8);
            Float::with_val(prec, Float::parse_radix(&lower, 16).ok()?)
        } else {
            let parsed = Float::parse(&lower).ok()?;
            Float::with_val(min_prec.max(256), parsed)
        };
        if !value.is_finite() {
            return None;
        }
        Some(WideReal(if neg { -value } else { value }))
    }
}

fn parse_c_hex(hex: &str, min_prec: u32) -> Option<Float> {
    let (mantissa, exp) = match hex.split_once('p') {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (hex, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits: String = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    let prec = min_prec.max(4 * digits.len() as u32 + 8);
    let int = Float::with_val(prec, Float::parse_radix(&digits, 16).ok()?);
    let shift = exp.checked_sub(4 * frac_part.len() as i32)?;
    let mut value = int;
    value <<= shift;
    Some(value)
}

/// Precision that makes `a ± b` exact.
fn exact_sum_bits(a: &Float, b: &Float) -> u32 {
    let base = a.prec().max(b.prec());
    match (a.get_exp(), b.get_exp()) {
        (Some(ea), Some(eb)) => {
            let lsb = (ea as i64 - a.prec() as i64).min(eb as i64 - b.prec() as i64);
            let msb = ea.max(eb) as i64 + 1;
            let needed = (msb - lsb + 1).clamp(1, MAX_EXACT_BITS as i64) as u32;
            needed.max(base)
        }
        _ => base,
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&WideReal> for &WideReal {
            type Output = WideReal;
            fn $method(self, rhs: &WideReal) -> WideReal {
                let prec = self.0.prec().max(rhs.0.prec());
                WideReal(Float::with_val(prec, &self.0 $op &rhs.0))
            }
        }
        impl $trait<WideReal> for WideReal {
            type Output = WideReal;
            fn $method(self, rhs: WideReal) -> WideReal {
                &self $op &rhs
            }
        }
        impl $trait<&WideReal> for WideReal {
            type Output = WideReal;
            fn $method(self, rhs: &WideReal) -> WideReal {
                &self $op rhs
            }
        }
        impl $trait<WideReal> for &WideReal {
            type Output = WideReal;
            fn $method(self, rhs: WideReal) -> WideReal {
                self $op &rhs
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for WideReal {
    type Output = WideReal;
    fn neg(self) -> WideReal {
        WideReal(-self.0)
    }
}

impl Neg for &WideReal {
    type Output = WideReal;
    fn neg(self) -> WideReal {
        WideReal(-self.0.clone())
    }
}

impl fmt::Debug for WideReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.0.to_f64())
    }
}

impl fmt::Display for WideReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.to_f64())
    }
}

impl Serialize for WideReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for WideReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        WideReal::parse(&text, 64)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid wide real `{text}`")))
    }
}
