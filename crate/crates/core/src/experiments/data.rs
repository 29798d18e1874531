//! Input generators and the shift rule.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, RangeError, Result};
use crate::fpmodel::{round, FpFormat, RoundingMode};
use crate::wide::WideReal;

/// Bits used to hold a generated value before it is rounded into the format.
pub(crate) const DRAW_BITS: u32 = 128;

/// Where summands come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataGen {
    /// `m + uniform[0, 1]`.
    UniformShifted { m: f64 },
    /// `normal(0, 1)`.
    Normal,
}

impl DataGen {
    /// `n` summands from stream 0 of `seed`.
    pub fn generate(&self, n: usize, seed: u64, fmt: &FpFormat) -> Result<Vec<WideReal>> {
        self.generate_stream(n, seed, 0, fmt)
    }

    /// `n` summands from an independent stream of `seed`.
    pub fn generate_stream(&self, n: usize, seed: u64, stream: u64, fmt: &FpFormat) -> Result<Vec<WideReal>> {
        let mut rng = data_rng(seed, stream);
        match *self {
            DataGen::UniformShifted { m } => {
                if !(m >= 0.0 && m.is_finite()) {
                    return Err(Error::InvalidParameter(format!("shift m must be finite and >= 0, got {m}")));
                }
                let m = WideReal::from_f64(DRAW_BITS, m);
                draw_rounded(n, fmt, || m.exact_add(&WideReal::from_f64(DRAW_BITS, rng.random::<f64>())))
            }
            DataGen::Normal => draw_rounded(n, fmt, || {
                WideReal::from_f64(DRAW_BITS, rng.sample::<f64, _>(StandardNormal))
            }),
        }
    }
}

impl fmt::Display for DataGen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataGen::UniformShifted { m } => write!(f, "uniform:{m}"),
            DataGen::Normal => f.write_str("normal"),
        }
    }
}

/// Accepts `normal`, `uniform` (m = 0) and `uniform:<m>`.
impl FromStr for DataGen {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "normal" => Ok(DataGen::Normal),
            None if s == "uniform" => Ok(DataGen::UniformShifted { m: 0.0 }),
            Some(("uniform", m)) => m
                .parse::<f64>()
                .ok()
                .filter(|m| *m >= 0.0 && m.is_finite())
                .map(|m| DataGen::UniformShifted { m })
                .ok_or_else(|| Error::InvalidParameter(format!("bad uniform shift `{m}`"))),
            _ => Err(Error::InvalidParameter(format!("unknown data generator `{s}`"))),
        }
    }
}

pub(crate) fn data_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Round draws into `fmt`. Draws that would land in the subnormal range are
/// redrawn, since the algorithms reject subnormal results.
pub(crate) fn draw_rounded(n: usize, fmt: &FpFormat, mut draw: impl FnMut() -> WideReal) -> Result<Vec<WideReal>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        match round(&draw(), fmt, RoundingMode::NearestEven, DRAW_BITS) {
            Ok(r) => out.push(r.value),
            Err(Error::Range(RangeError::Underflow { .. })) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `x_k = m + uniform[0,1]`, rounded into `fmt`.
pub fn gen_uniform_shifted(m: f64, n: usize, seed: u64, fmt: &FpFormat) -> Result<Vec<WideReal>> {
    DataGen::UniformShifted { m }.generate(n, seed, fmt)
}

/// `x_k = normal(0,1)`, rounded into `fmt`.
pub fn gen_normal(n: usize, seed: u64, fmt: &FpFormat) -> Result<Vec<WideReal>> {
    DataGen::Normal.generate(n, seed, fmt)
}

/// `c = (min x + max x)/2`, rounded to nearest in `fmt`.
pub fn choose_shift(x: &[WideReal], fmt: &FpFormat) -> Result<WideReal> {
    let first = x.first().ok_or(Error::EmptyInput)?;
    let (mut lo, mut hi) = (first, first);
    for v in x {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let mid = lo.exact_add(hi).scale2(-1);
    let bits = mid.prec().max(DRAW_BITS);
    match round(&mid, fmt, RoundingMode::NearestEven, bits) {
        Ok(r) => Ok(r.value),
        // the midpoint of two machine numbers can only underflow when both
        // are tiny; zero is then as good a shift as any
        Err(Error::Range(RangeError::Underflow { .. })) => Ok(WideReal::zero(bits)),
        Err(e) => Err(e),
    }
}
