use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fpsum::fpmodel::round;
use fpsum::{FpFormat, RoundingMode, WideReal};

/// Precision used to hold parsed literals before the representability check.
const PARSE_BITS: u32 = 256;

pub fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// One literal per line (first CSV field). Blank lines and `#` comments are
/// skipped, as is a non-numeric header line. Values must be numbers of `fmt`.
pub fn parse_values(text: &str, fmt: &FpFormat) -> Result<Vec<WideReal>> {
    let mut out = Vec::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        let Some(v) = WideReal::parse(field, PARSE_BITS) else {
            if is_first && field.starts_with(|c: char| c.is_ascii_alphabetic()) {
                continue;
            }
            bail!("line {}: `{field}` is not a finite number", i + 1);
        };
        out.push(machine_number(v, fmt).with_context(|| format!("line {}", i + 1))?);
    }
    if out.is_empty() {
        bail!("no input values");
    }
    Ok(out)
}

fn machine_number(v: WideReal, fmt: &FpFormat) -> Result<WideReal> {
    if !fmt.is_representable(&v) {
        bail!("{} is not a {fmt} number; give the exact value, e.g. as a hex float", v.to_f64());
    }
    Ok(v)
}

pub fn parse_shift(text: &str, x: &[WideReal], fmt: &FpFormat) -> Result<WideReal> {
    if text == "auto" {
        return Ok(fpsum::experiments::choose_shift(x, fmt)?);
    }
    let v = WideReal::parse(text, PARSE_BITS).with_context(|| format!("bad shift `{text}`"))?;
    machine_number(v, fmt).context("--shift")
}

/// Shortest decimal form of an `f64`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Shortest decimal that reads back as `v` in `fmt` under round to nearest.
pub fn fmt_num(v: &WideReal, fmt: &FpFormat) -> String {
    let f = v.to_f64();
    if v.is_zero() || !fmt.is_representable(v) {
        return num(f);
    }
    for digits in 0..17 {
        let s = format!("{f:.digits$e}");
        let back = WideReal::parse(&s, PARSE_BITS)
            .and_then(|w| round(&w, fmt, RoundingMode::NearestEven, PARSE_BITS).ok());
        if back.is_some_and(|b| b.value == *v) {
            return tidy(&s);
        }
    }
    num(f)
}

/// Exact hex form without trailing zero digits, e.g. `7fe.e@0`.
pub fn hex(v: &WideReal) -> String {
    let full = v.to_hex();
    match full.split_once('@') {
        Some((m, e)) if m.contains('.') => {
            let m = m.trim_end_matches('0').trim_end_matches('.');
            format!("{m}@{e}")
        }
        _ => full,
    }
}

/// `1.5e2` -> `150`, keeping exponent form only for very large or small values.
fn tidy(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(f) => num(f),
        Err(_) => s.to_string(),
    }
}
