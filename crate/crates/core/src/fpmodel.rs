//! Emulated reduced-precision arithmetic with exact roundoff extraction.
//!
//! Every emulated operation computes the exact result of `a op b`, rounds it
//! into the target [`FpFormat`] and records the relative roundoff
//! `delta = fl(a op b) / (a op b) - 1` under a [`Label`]. Rounding is either
//! round-to-nearest-even or stochastic rounding "by nearness" (round away from
//! the lower neighbour with probability proportional to the remainder).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rug::float::Round;
use serde::{Deserialize, Serialize};

use crate::error::{Error, RangeError, Result};
use crate::wide::WideReal;

/// A binary floating point format with `precision_bits` significand bits
/// (implicit bit included) and normal exponents `emin..=emax`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FpFormat {
    name: String,
    precision_bits: u32,
    emin: i32,
    emax: i32,
}

impl FpFormat {
    pub fn binary16() -> Self {
        Self::named("binary16", 11, -14, 15)
    }

    pub fn binary32() -> Self {
        Self::named("binary32", 24, -126, 127)
    }

    pub fn binary64() -> Self {
        Self::named("binary64", 53, -1022, 1023)
    }

    pub fn custom(precision_bits: u32, emin: i32, emax: i32) -> Result<Self> {
        if precision_bits < 2 {
            return Err(Error::InvalidFormat(format!(
                "precision must be at least 2 bits, got {precision_bits}"
            )));
        }
        if emin >= emax {
            return Err(Error::InvalidFormat(format!(
                "emin ({emin}) must be below emax ({emax})"
            )));
        }
        Ok(Self {
            name: format!("custom:p={precision_bits},emin={emin},emax={emax}"),
            precision_bits,
            emin,
            emax,
        })
    }

    fn named(name: &str, precision_bits: u32, emin: i32, emax: i32) -> Self {
        Self {
            name: name.to_string(),
            precision_bits,
            emin,
            emax,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn emin(&self) -> i32 {
        self.emin
    }

    pub fn emax(&self) -> i32 {
        self.emax
    }

    /// `u = 2^-p`.
    pub fn unit_roundoff(&self, prec: u32) -> WideReal {
        WideReal::pow2(prec, -(self.precision_bits as i32))
    }

    /// Unit roundoff as an `f64` (exact for every supported format).
    pub fn unit_roundoff_f64(&self) -> f64 {
        2f64.powi(-(self.precision_bits as i32))
    }

    /// `(1 - 2^-p) * 2^(emax+1)`.
    pub fn max_finite(&self, prec: u32) -> WideReal {
        let top = WideReal::pow2(prec.max(self.precision_bits + 1), self.emax + 1);
        let gap = WideReal::pow2(prec, self.emax + 1 - self.precision_bits as i32);
        top.exact_sub(&gap)
    }

    /// `2^emin`.
    pub fn min_normal(&self, prec: u32) -> WideReal {
        WideReal::pow2(prec, self.emin)
    }

    /// Whether `x` is a finite value of this format (subnormals included).
    pub fn is_representable(&self, x: &WideReal) -> bool {
        if x.is_zero() {
            return true;
        }
        if !x.is_finite() {
            return false;
        }
        let exp = match x.exponent() {
            Some(e) => e - 1,
            None => return false,
        };
        if exp > self.emax {
            return false;
        }
        if exp < self.emin {
            // subnormal range: must be a multiple of the smallest subnormal
            let quantum_exp = self.emin - self.precision_bits as i32 + 1;
            return x.scale2(-quantum_exp).is_integer();
        }
        let (rounded, dir) = x.round_bits(self.precision_bits, Round::Nearest);
        dir == Ordering::Equal && rounded == *x
    }
}

impl fmt::Display for FpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for FpFormat {
    type Err = Error;

    /// Accepts `binary16`, `binary32`, `binary64` and
    /// `custom:p=<bits>,emin=<e>,emax=<e>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "binary16" => Ok(Self::binary16()),
            "binary32" => Ok(Self::binary32()),
            "binary64" => Ok(Self::binary64()),
            other => {
                let spec = other
                    .strip_prefix("custom:")
                    .ok_or_else(|| Error::InvalidFormat(format!("unknown format `{other}`")))?;
                let (mut p, mut emin, mut emax) = (None, None, None);
                for part in spec.split(',') {
                    let (key, value) = part.split_once('=').ok_or_else(|| {
                        Error::InvalidFormat(format!("malformed field `{part}` in `{other}`"))
                    })?;
                    let bad = || Error::InvalidFormat(format!("bad value `{value}` in `{other}`"));
                    match key.trim() {
                        "p" => p = Some(value.trim().parse::<u32>().map_err(|_| bad())?),
                        "emin" => emin = Some(value.trim().parse::<i32>().map_err(|_| bad())?),
                        "emax" => emax = Some(value.trim().parse::<i32>().map_err(|_| bad())?),
                        k => {
                            return Err(Error::InvalidFormat(format!(
                                "unknown field `{k}` in `{other}`"
                            )))
                        }
                    }
                }
                match (p, emin, emax) {
                    (Some(p), Some(emin), Some(emax)) => Self::custom(p, emin, emax),
                    _ => Err(Error::InvalidFormat(format!(
                        "`{other}` needs p, emin and emax"
                    ))),
                }
            }
        }
    }
}

impl TryFrom<String> for FpFormat {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FpFormat> for String {
    fn from(f: FpFormat) -> String {
        f.name
    }
}

/// Identifies a reproducible stochastic rounding stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    NearestEven,
    StochasticNearness(StreamId),
}

impl RoundingMode {
    pub fn stochastic(seed: u64, stream: u64) -> Self {
        RoundingMode::StochasticNearness(StreamId { seed, stream })
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, RoundingMode::StochasticNearness(_))
    }

    /// Bound on `|delta|` for this mode in units of `u` (1 or 2).
    pub fn roundoff_multiplier(&self) -> u32 {
        match self {
            RoundingMode::NearestEven => 1,
            RoundingMode::StochasticNearness(_) => 2,
        }
    }
}

/// Counter-based uniform source: draw `i` depends only on the stream id and
/// `i`, never on how many draws were consumed before.
#[derive(Clone, Debug)]
pub struct CounterRng {
    rng: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(id.seed);
        rng.set_stream(id.stream);
        Self { rng }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform_at(&mut self, index: u64) -> f64 {
        let pos = 2 * index as u128;
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundoffKind {
    /// Summation roundoffs; the `s_k - s_{k-1}` step in compensated summation.
    Delta,
    /// Running-sum roundoff in compensated summation.
    Sigma,
    /// Correction roundoff `x_k - c_{k-1}` in compensated summation.
    Eta,
    /// Compensation roundoff in compensated summation.
    Beta,
    /// Centering (and uncentering) roundoffs in shifted summation.
    Epsilon,
}

impl RoundoffKind {
    pub const ALL: [RoundoffKind; 5] = [
        RoundoffKind::Delta,
        RoundoffKind::Sigma,
        RoundoffKind::Eta,
        RoundoffKind::Beta,
        RoundoffKind::Epsilon,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            RoundoffKind::Delta => "delta",
            RoundoffKind::Sigma => "sigma",
            RoundoffKind::Eta => "eta",
            RoundoffKind::Beta => "beta",
            RoundoffKind::Epsilon => "epsilon",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub kind: RoundoffKind,
    pub index: usize,
}

impl Label {
    pub fn new(kind: RoundoffKind, index: usize) -> Self {
        Self { kind, index }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind.symbol(), self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roundoff {
    pub label: Label,
    pub value: WideReal,
}

/// Roundoffs of one run in execution order, with O(1) lookup by label.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundoffLog {
    entries: Vec<Roundoff>,
    slots: [Vec<u32>; 5],
}

impl RoundoffLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: Label, value: WideReal) {
        let slots = &mut self.slots[label.kind.slot()];
        if slots.len() <= label.index {
            slots.resize(label.index + 1, 0);
        }
        self.entries.push(Roundoff { label, value });
        slots[label.index] = self.entries.len() as u32;
    }

    pub fn get(&self, kind: RoundoffKind, index: usize) -> Option<&WideReal> {
        let pos = *self.slots[kind.slot()].get(index)?;
        (pos > 0).then(|| &self.entries[pos as usize - 1].value)
    }

    pub fn entries(&self) -> &[Roundoff] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest `|delta|` over all entries.
    pub fn max_abs(&self) -> Option<WideReal> {
        self.entries
            .iter()
            .map(|r| r.value.abs())
            .reduce(|a, b| if b > a { b } else { a })
    }
}

impl Serialize for RoundoffLog {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RoundoffLog {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<Roundoff>::deserialize(d)?;
        let mut log = RoundoffLog::new();
        for r in entries {
            log.push(r.label, r.value);
        }
        Ok(log)
    }
}

/// Result of rounding one exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct Rounded {
    pub value: WideReal,
    pub delta: WideReal,
}

/// Emulated arithmetic in one format and rounding mode.
///
/// Operations are numbered in call order; stochastic draws are indexed by
/// that number, so a run is reproducible from its [`StreamId`] alone.
#[derive(Clone, Debug)]
pub struct Emulator {
    fmt: FpFormat,
    mode: RoundingMode,
    prec: u32,
    rng: Option<CounterRng>,
    ops: u64,
}

impl Emulator {
    pub fn new(fmt: FpFormat, mode: RoundingMode, oracle_bits: u32) -> Self {
        let rng = match mode {
            RoundingMode::NearestEven => None,
            RoundingMode::StochasticNearness(id) => Some(CounterRng::new(id)),
        };
        Self {
            fmt,
            mode,
            prec: oracle_bits,
            rng,
            ops: 0,
        }
    }

    pub fn format(&self) -> &FpFormat {
        &self.fmt
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    pub fn oracle_bits(&self) -> u32 {
        self.prec
    }

    pub fn operations(&self) -> u64 {
        self.ops
    }

    /// Round an exact value into the format.
    pub fn round(&mut self, x: &WideReal) -> Result<Rounded> {
        let index = self.ops;
        self.ops += 1;
        round_indexed(x, &self.fmt, self.prec, self.rng.as_mut(), index)
    }

    fn record(&mut self, exact: WideReal, log: &mut RoundoffLog, label: Label) -> Result<WideReal> {
        let Rounded { value, delta } = self.round(&exact)?;
        log.push(label, delta);
        Ok(value)
    }

    fn check_operand(&self, v: &WideReal) -> Result<()> {
        if self.fmt.is_representable(v) {
            Ok(())
        } else {
            Err(Error::NotRepresentable {
                value: v.to_f64(),
                format: self.fmt.name().to_string(),
            })
        }
    }

    /// `fl(a + b)`, logging its roundoff under `label`.
    pub fn add(
        &mut self,
        a: &WideReal,
        b: &WideReal,
        log: &mut RoundoffLog,
        label: Label,
    ) -> Result<WideReal> {
        self.check_operand(a)?;
        self.check_operand(b)?;
        self.record(a.exact_add(b), log, label)
    }

    /// `fl(a - b)`, logging its roundoff under `label`.
    pub fn sub(
        &mut self,
        a: &WideReal,
        b: &WideReal,
        log: &mut RoundoffLog,
        label: Label,
    ) -> Result<WideReal> {
        self.check_operand(a)?;
        self.check_operand(b)?;
        self.record(a.exact_sub(b), log, label)
    }

    /// `fl(a * b)`, logging its roundoff under `label`.
    pub fn mul(
        &mut self,
        a: &WideReal,
        b: &WideReal,
        log: &mut RoundoffLog,
        label: Label,
    ) -> Result<WideReal> {
        self.check_operand(a)?;
        self.check_operand(b)?;
        self.record(a.exact_mul(b), log, label)
    }

    /// `fl(count * b)` with `count` taken as an exact integer, so the product
    /// carries a single roundoff even when `count` is not a machine number.
    pub fn scale_by_count(
        &mut self,
        count: usize,
        b: &WideReal,
        log: &mut RoundoffLog,
        label: Label,
    ) -> Result<WideReal> {
        self.check_operand(b)?;
        let count = WideReal::from_i64(64, count as i64);
        self.record(count.exact_mul(b), log, label)
    }
}

/// Round `x` into `fmt` (stateless form: stochastic draws use operation
/// index 0 of the mode's stream).
pub fn round(x: &WideReal, fmt: &FpFormat, mode: RoundingMode, oracle_bits: u32) -> Result<Rounded> {
    let mut rng = match mode {
        RoundingMode::NearestEven => None,
        RoundingMode::StochasticNearness(id) => Some(CounterRng::new(id)),
    };
    round_indexed(x, fmt, oracle_bits, rng.as_mut(), 0)
}

fn round_indexed(
    x: &WideReal,
    fmt: &FpFormat,
    prec: u32,
    rng: Option<&mut CounterRng>,
    index: u64,
) -> Result<Rounded> {
    if !x.is_finite() {
        return Err(Error::Range(RangeError::Overflow {
            value: x.to_f64(),
            format: fmt.name().to_string(),
        }));
    }
    if x.is_zero() {
        return Ok(Rounded {
            value: WideReal::zero(prec),
            delta: WideReal::zero(prec),
        });
    }
    let p = fmt.precision_bits();
    let tiny = x.exponent().is_some_and(|e| e - 1 < fmt.emin());
    if tiny {
        // Exact subnormal results satisfy the model with delta = 0; anything
        // that would need gradual underflow rounding is outside it.
        if fmt.is_representable(x) {
            return Ok(Rounded {
                value: x.with_prec(prec.max(x.prec())),
                delta: WideReal::zero(prec),
            });
        }
        return Err(Error::Range(RangeError::Underflow {
            value: x.to_f64(),
            format: fmt.name().to_string(),
        }));
    }
    let value = match rng {
        None => x.round_bits(p, Round::Nearest).0,
        Some(rng) => {
            let (down, dir) = x.round_bits(p, Round::Down);
            if dir == Ordering::Equal {
                down
            } else {
                let (up, _) = x.round_bits(p, Round::Up);
                let frac = x.exact_sub(&down).div(&up.exact_sub(&down)).to_f64();
                if rng.uniform_at(index) < frac {
                    up
                } else {
                    down
                }
            }
        }
    };
    let value = value.with_prec(prec.max(p));
    if value.abs() > fmt.max_finite(prec) {
        return Err(Error::Range(RangeError::Overflow {
            value: x.to_f64(),
            format: fmt.name().to_string(),
        }));
    }
    let delta = value.exact_sub(x).div(x).with_prec(prec);
    Ok(Rounded { value, delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 96;

    fn w(v: f64) -> WideReal {
        WideReal::from_f64(P, v)
    }

    #[test]
    fn unit_roundoffs() {
        assert_eq!(FpFormat::binary64().unit_roundoff(P).to_f64(), 2f64.powi(-53));
        assert_eq!(FpFormat::binary16().unit_roundoff(P).to_f64(), 2f64.powi(-11));
        assert_eq!(FpFormat::binary32().unit_roundoff(P).to_f64(), 2f64.powi(-24));
        assert!((FpFormat::binary64().unit_roundoff_f64() - 1.11e-16).abs() < 1e-18);
        assert!((FpFormat::binary16().unit_roundoff_f64() - 4.88e-4).abs() < 1e-6);
    }

    #[test]
    fn format_names_parse() {
        assert_eq!("binary16".parse::<FpFormat>().unwrap(), FpFormat::binary16());
        let c: FpFormat = "custom:p=12,emin=-14,emax=15".parse().unwrap();
        assert_eq!(c.precision_bits(), 12);
        assert_eq!(c.name(), "custom:p=12,emin=-14,emax=15");
        assert!("custom:p=1,emin=-3,emax=3".parse::<FpFormat>().is_err());
        assert!("custom:p=8,emin=3,emax=3".parse::<FpFormat>().is_err());
        assert!("custom:p=8".parse::<FpFormat>().is_err());
        assert!("binary128".parse::<FpFormat>().is_err());
    }

    #[test]
    fn binary16_limits() {
        let f = FpFormat::binary16();
        assert_eq!(f.max_finite(P).to_f64(), 65504.0);
        assert_eq!(f.min_normal(P).to_f64(), 2f64.powi(-14));
        assert!(f.is_representable(&w(2048.0)));
        assert!(!f.is_representable(&w(2049.0)));
        assert!(f.is_representable(&w(2050.0)));
        assert!(f.is_representable(&w(2f64.powi(-24))));
        assert!(!f.is_representable(&w(3.0 * 2f64.powi(-26))));
        assert!(!f.is_representable(&w(65536.0)));
    }

    #[test]
    fn round_representable_is_identity() {
        let r = round(&w(1.0), &FpFormat::binary16(), RoundingMode::NearestEven, P).unwrap();
        assert_eq!(r.value.to_f64(), 1.0);
        assert!(r.delta.is_zero());
    }

    #[test]
    fn round_2049_nearest_even() {
        let r = round(&w(2049.0), &FpFormat::binary16(), RoundingMode::NearestEven, P).unwrap();
        assert_eq!(r.value.to_f64(), 2048.0);
        let expected = WideReal::from_f64(P, -1.0).div(&w(2049.0));
        assert_eq!(r.delta, expected);
    }

    #[test]
    fn round_2049_stochastic_is_unbiased() {
        let fmt = FpFormat::binary16();
        let mut emu = Emulator::new(fmt.clone(), RoundingMode::stochastic(11, 0), P);
        let x = w(2049.0);
        let draws = 100_000;
        let (mut ups, mut mean) = (0u32, 0.0f64);
        for _ in 0..draws {
            let r = emu.round(&x).unwrap();
            let v = r.value.to_f64();
            assert!(v == 2048.0 || v == 2050.0);
            if v == 2050.0 {
                ups += 1;
            }
            mean += r.delta.to_f64();
        }
        mean /= draws as f64;
        let frac = ups as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.01, "P(up) = {frac}");
        assert!(mean.abs() < 3e-3, "mean delta {mean}");
    }

    #[test]
    fn overflow_and_underflow_are_errors() {
        let fmt = FpFormat::binary16();
        let err = round(&w(65520.0), &fmt, RoundingMode::NearestEven, P).unwrap_err();
        assert!(matches!(err, Error::Range(RangeError::Overflow { .. })));
        // exactly representable subnormal passes with delta 0
        let r = round(&w(2f64.powi(-20)), &fmt, RoundingMode::NearestEven, P).unwrap();
        assert!(r.delta.is_zero());
        let err = round(&w(2f64.powi(-26)), &fmt, RoundingMode::NearestEven, P).unwrap_err();
        assert!(matches!(err, Error::Range(RangeError::Underflow { .. })));
    }

    #[test]
    fn basic_operations() {
        let fmt = FpFormat::binary16();
        let mut emu = Emulator::new(fmt, RoundingMode::NearestEven, P);
        let mut log = RoundoffLog::new();
        let d = |k| Label::new(RoundoffKind::Delta, k);
        assert_eq!(emu.add(&w(1.0), &w(1.0), &mut log, d(2)).unwrap().to_f64(), 2.0);
        assert!(log.get(RoundoffKind::Delta, 2).unwrap().is_zero());
        assert_eq!(emu.add(&w(2048.0), &w(1.0), &mut log, d(3)).unwrap().to_f64(), 2048.0);
        assert_eq!(
            log.get(RoundoffKind::Delta, 3).unwrap(),
            &WideReal::from_f64(P, -1.0).div(&w(2049.0))
        );
        assert!(emu.add(&w(0.0), &w(0.0), &mut log, d(4)).unwrap().is_zero());
        assert!(log.get(RoundoffKind::Delta, 4).unwrap().is_zero());
        let x = emu.sub(&w(0.75), &w(0.0), &mut log, d(5)).unwrap();
        assert_eq!(x.to_f64(), 0.75);
        assert_eq!(emu.mul(&w(3.0), &w(0.5), &mut log, d(6)).unwrap().to_f64(), 1.5);
        assert!(log.get(RoundoffKind::Delta, 6).unwrap().is_zero());
        assert_eq!(emu.sub(&w(2050.0), &w(2048.0), &mut log, d(7)).unwrap().to_f64(), 2.0);
        assert!(log.get(RoundoffKind::Delta, 7).unwrap().is_zero());
        assert!(log.get(RoundoffKind::Delta, 1).is_none());
        assert!(emu.add(&w(2049.0), &w(1.0), &mut log, d(8)).is_err());
    }

    #[test]
    fn counter_rng_is_position_addressed() {
        let id = StreamId { seed: 5, stream: 3 };
        let mut a = CounterRng::new(id);
        let seq: Vec<f64> = (0..10).map(|i| a.uniform_at(i)).collect();
        let mut b = CounterRng::new(id);
        assert_eq!(b.uniform_at(7), seq[7]);
        assert_eq!(b.uniform_at(2), seq[2]);
        assert_eq!(b.uniform_at(3), seq[3]);
        let mut other = CounterRng::new(StreamId { seed: 5, stream: 4 });
        assert_ne!(other.uniform_at(7), seq[7]);
    }
}
