//! The three summation algorithms, run under emulated arithmetic with every
//! roundoff logged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpmodel::{Emulator, FpFormat, Label, RoundingMode, RoundoffKind, RoundoffLog};
use crate::sumtree::{sequential_tree, Child, SumTree};
use crate::wide::{oracle_bits, WideReal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    General,
    Shifted,
    Compensated,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::General => "general",
            Algorithm::Shifted => "shifted",
            Algorithm::Compensated => "compensated",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" | "plain" => Ok(Algorithm::General),
            "shifted" => Ok(Algorithm::Shifted),
            "compensated" => Ok(Algorithm::Compensated),
            other => Err(Error::InvalidParameter(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Extra state of a shifted run. Vectors are indexed by `k`; entry 0 is unused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub c: WideReal,
    /// Exact `y_k = x_k - c` for `k = 1..=n`, and `y_{n+1} = nc`.
    pub y_exact: Vec<WideReal>,
    /// Computed `fl(x_k - c)` for `k = 1..=n`, and `fl(n*c)` at `n+1`.
    pub y_computed: Vec<WideReal>,
}

/// Extra state of a compensated run. Vectors are indexed by `k = 1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensatedRecord {
    /// Computed corrections `c_k`, with `c_1 = 0`.
    pub c: Vec<WideReal>,
    /// Computed `y_k = fl(x_k - c_{k-1})`; entry 1 is zero.
    pub y: Vec<WideReal>,
}

/// Everything recorded about one run.
///
/// `computed[k]` and `exact[k]` are the computed and exact partial sums at
/// step `k`. For general and compensated runs these are `ŝ_k`/`s_k` for
/// `k = 1..=n` (with `s_1 = x_1`). For shifted runs they are the centred
/// partial sums `t̂_k`/`t_k` for `k = 1..=n+1`, where `t_1 = y_1` and
/// `t_{n+1} = s_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub fmt: FpFormat,
    pub mode: RoundingMode,
    pub oracle_bits: u32,
    pub tree: Option<SumTree>,
    pub inputs: Vec<WideReal>,
    pub computed: Vec<WideReal>,
    pub exact: Vec<WideReal>,
    pub roundoffs: RoundoffLog,
    pub shift: Option<ShiftRecord>,
    pub compensated: Option<CompensatedRecord>,
    pub result: WideReal,
    pub exact_sum: WideReal,
    pub error: WideReal,
}

impl RunTrace {
    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    /// `e_k = computed_k - exact_k`, exact.
    pub fn error_at(&self, k: usize) -> WideReal {
        self.computed[k].exact_sub(&self.exact[k])
    }

    /// Roundoff value, zero when the label was never logged.
    pub fn roundoff(&self, kind: RoundoffKind, k: usize) -> WideReal {
        self.roundoffs
            .get(kind, k)
            .cloned()
            .unwrap_or_else(|| WideReal::zero(self.oracle_bits))
    }

    /// `|ŝ_n - s_n| / |s_n|` as `f64`, `None` when the exact sum is zero.
    pub fn relative_error(&self) -> Option<f64> {
        if self.exact_sum.is_zero() {
            None
        } else {
            Some(self.error.abs().div(&self.exact_sum.abs()).to_f64())
        }
    }

    /// `Σ|x_i|`, exact.
    pub fn abs_input_sum(&self) -> WideReal {
        let abs: Vec<WideReal> = self.inputs.iter().map(WideReal::abs).collect();
        WideReal::exact_total(self.oracle_bits, &abs)
    }

    /// A copy whose logged roundoffs of the given kinds are replaced by zero.
    /// Computed values are left alone, so only expressions that read the
    /// roundoffs (not the computed sums) stay meaningful.
    pub fn with_roundoffs_zeroed(&self, kinds: &[RoundoffKind]) -> RunTrace {
        let mut log = RoundoffLog::new();
        for r in self.roundoffs.entries() {
            let value = if kinds.contains(&r.label.kind) {
                WideReal::zero(self.oracle_bits)
            } else {
                r.value.clone()
            };
            log.push(r.label, value);
        }
        RunTrace {
            roundoffs: log,
            ..self.clone()
        }
    }
}

fn prepare_inputs(x: &[WideReal], fmt: &FpFormat, prec: u32) -> Result<Vec<WideReal>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    x.iter()
        .map(|v| {
            if fmt.is_representable(v) {
                Ok(v.with_prec(prec.max(v.prec())))
            } else {
                Err(Error::NotRepresentable {
                    value: v.to_f64(),
                    format: fmt.name().to_string(),
                })
            }
        })
        .collect()
}

fn delta(k: usize) -> Label {
    Label::new(RoundoffKind::Delta, k)
}

/// Run the tree's additions on `leaves`, returning computed node values
/// indexed by node (entry 1 holds leaf 1, entry 0 zero).
fn run_tree(
    emu: &mut Emulator,
    tree: &SumTree,
    leaves: &[WideReal],
    log: &mut RoundoffLog,
) -> Result<Vec<WideReal>> {
    let prec = emu.oracle_bits();
    let n = tree.n();
    let mut out = Vec::with_capacity(n + 1);
    out.push(WideReal::zero(prec));
    out.push(leaves[0].clone());
    log.push(delta(1), WideReal::zero(prec));
    for node in tree.nodes() {
        let value = {
            let get = |c: Child| match c {
                Child::Leaf(i) => &leaves[i - 1],
                Child::Node(j) => &out[j],
            };
            let (a, b) = (get(node.left).clone(), get(node.right).clone());
            emu.add(&a, &b, log, delta(node.id))?
        };
        out.push(value);
    }
    Ok(out)
}

fn root(values: &[WideReal], n: usize) -> WideReal {
    values[n.max(1)].clone()
}

/// General summation along `tree`.
pub fn general_sum(
    tree: &SumTree,
    x: &[WideReal],
    fmt: &FpFormat,
    mode: RoundingMode,
) -> Result<RunTrace> {
    let n = x.len();
    if tree.n() != n {
        return Err(Error::InvalidParameter(format!(
            "tree has {} leaves but {n} inputs were given",
            tree.n()
        )));
    }
    let prec = oracle_bits(fmt.precision_bits(), n);
    let inputs = prepare_inputs(x, fmt, prec)?;
    let mut emu = Emulator::new(fmt.clone(), mode, prec);
    let mut log = RoundoffLog::new();
    let computed = run_tree(&mut emu, tree, &inputs, &mut log)?;
    let exact = tree.exact_partial_sums(&inputs)?;
    let result = root(&computed, n);
    let exact_sum = root(&exact, n);
    let error = result.exact_sub(&exact_sum);
    Ok(RunTrace {
        algorithm: Algorithm::General,
        fmt: fmt.clone(),
        mode,
        oracle_bits: prec,
        tree: Some(tree.clone()),
        inputs,
        computed,
        exact,
        roundoffs: log,
        shift: None,
        compensated: None,
        result,
        exact_sum,
        error,
    })
}

/// Shifted summation: centre every input by `c`, sum the centred values
/// along `tree`, then add back `fl(n*c)`.
pub fn shifted_sum(
    tree: &SumTree,
    x: &[WideReal],
    c: &WideReal,
    fmt: &FpFormat,
    mode: RoundingMode,
) -> Result<RunTrace> {
    let n = x.len();
    if tree.n() != n {
        return Err(Error::InvalidParameter(format!(
            "tree has {} leaves but {n} inputs were given",
            tree.n()
        )));
    }
    let prec = oracle_bits(fmt.precision_bits(), 2 * n + 1);
    let inputs = prepare_inputs(x, fmt, prec)?;
    let c = prepare_inputs(std::slice::from_ref(c), fmt, prec)?.remove(0);
    let mut emu = Emulator::new(fmt.clone(), mode, prec);
    let mut log = RoundoffLog::new();

    let eps = |k| Label::new(RoundoffKind::Epsilon, k);
    let mut y_computed = vec![WideReal::zero(prec)];
    let mut y_exact = vec![WideReal::zero(prec)];
    for (i, xi) in inputs.iter().enumerate() {
        y_computed.push(emu.sub(xi, &c, &mut log, eps(i + 1))?);
        y_exact.push(xi.exact_sub(&c));
    }
    let mut computed = run_tree(&mut emu, tree, &y_computed[1..], &mut log)?;
    let mut exact = tree.exact_partial_sums(&y_exact[1..])?;

    let nc = emu.scale_by_count(n, &c, &mut log, eps(n + 1))?;
    let t_n = root(&computed, n);
    let total = emu.add(&t_n, &nc, &mut log, delta(n + 1))?;

    let nc_exact = WideReal::from_i64(64, n as i64).exact_mul(&c);
    y_computed.push(nc);
    y_exact.push(nc_exact);
    let exact_sum = WideReal::exact_total(prec, &inputs);
    computed.push(total.clone());
    exact.push(exact_sum.clone());
    let error = total.exact_sub(&exact_sum);
    Ok(RunTrace {
        algorithm: Algorithm::Shifted,
        fmt: fmt.clone(),
        mode,
        oracle_bits: prec,
        tree: Some(tree.clone()),
        inputs,
        computed,
        exact,
        roundoffs: log,
        shift: Some(ShiftRecord {
            c,
            y_exact,
            y_computed,
        }),
        compensated: None,
        result: total,
        exact_sum,
        error,
    })
}

/// Compensated (Kahan) summation in input order.
pub fn compensated_sum(x: &[WideReal], fmt: &FpFormat, mode: RoundingMode) -> Result<RunTrace> {
    let n = x.len();
    let prec = oracle_bits(fmt.precision_bits(), n);
    let inputs = prepare_inputs(x, fmt, prec)?;
    let mut emu = Emulator::new(fmt.clone(), mode, prec);
    let mut log = RoundoffLog::new();
    let zero = WideReal::zero(prec);

    let label = |kind, k| Label::new(kind, k);
    let mut s = vec![zero.clone(), inputs[0].clone()];
    let mut c = vec![zero.clone(), zero.clone()];
    let mut y = vec![zero.clone(), zero.clone()];
    for k in 2..=n {
        let yk = emu.sub(&inputs[k - 1], &c[k - 1], &mut log, label(RoundoffKind::Eta, k))?;
        let sk = emu.add(&s[k - 1], &yk, &mut log, label(RoundoffKind::Sigma, k))?;
        let d = emu.sub(&sk, &s[k - 1], &mut log, label(RoundoffKind::Delta, k))?;
        let ck = emu.sub(&d, &yk, &mut log, label(RoundoffKind::Beta, k))?;
        s.push(sk);
        c.push(ck);
        y.push(yk);
    }
    let tree = sequential_tree(n)?;
    let exact = tree.exact_partial_sums(&inputs)?;
    let result = s[n].clone();
    let exact_sum = exact[n].clone();
    let error = result.exact_sub(&exact_sum);
    Ok(RunTrace {
        algorithm: Algorithm::Compensated,
        fmt: fmt.clone(),
        mode,
        oracle_bits: prec,
        tree: None,
        inputs,
        computed: s,
        exact,
        roundoffs: log,
        shift: None,
        compensated: Some(CompensatedRecord { c, y }),
        result,
        exact_sum,
        error,
    })
}

/// Exact sum of `x` (independent of order).
pub fn exact_sum(x: &[WideReal]) -> WideReal {
    let prec = x.iter().map(WideReal::prec).max().unwrap_or(64);
    WideReal::exact_total(prec, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sumtree::pairwise_tree;

    fn ws(v: &[f64]) -> Vec<WideReal> {
        v.iter().map(|&a| WideReal::from_f64(64, a)).collect()
    }

    const NE: RoundingMode = RoundingMode::NearestEven;

    #[test]
    fn single_input_has_no_error() {
        let fmt = FpFormat::binary16();
        let t = general_sum(&sequential_tree(1).unwrap(), &ws(&[1.0]), &fmt, NE).unwrap();
        assert!(t.error.is_zero());
        assert_eq!(t.result.to_f64(), 1.0);
        let c = compensated_sum(&ws(&[3.5]), &fmt, NE).unwrap();
        assert!(c.error.is_zero());
        assert!(c.roundoffs.is_empty());
    }

    #[test]
    fn general_binary16_examples() {
        let fmt = FpFormat::binary16();
        let t = general_sum(&sequential_tree(3).unwrap(), &ws(&[2048.0, 1.0, 1.0]), &fmt, NE)
            .unwrap();
        assert_eq!(t.result.to_f64(), 2048.0);
        assert_eq!(t.exact_sum.to_f64(), 2050.0);
        assert_eq!(t.error.to_f64(), -2.0);
        assert!(t.roundoffs.get(RoundoffKind::Delta, 1).unwrap().is_zero());

        let p = general_sum(
            &pairwise_tree(4).unwrap(),
            &ws(&[2048.0, 1.0, 1.0, 1.0]),
            &fmt,
            NE,
        )
        .unwrap();
        assert_eq!(p.result.to_f64(), 2050.0);
        assert_eq!(p.exact_sum.to_f64(), 2051.0);
        assert_eq!(p.error.to_f64(), -1.0);
    }

    #[test]
    fn compensated_binary16_example() {
        let fmt = FpFormat::binary16();
        let t = compensated_sum(&ws(&[2048.0, 1.0, 1.0]), &fmt, NE).unwrap();
        let rec = t.compensated.as_ref().unwrap();
        assert_eq!(t.computed[2].to_f64(), 2048.0);
        assert_eq!(rec.c[2].to_f64(), -1.0);
        assert_eq!(rec.y[3].to_f64(), 2.0);
        assert_eq!(t.result.to_f64(), 2050.0);
        assert!(t.error.is_zero());
        assert!(t.roundoffs.get(RoundoffKind::Eta, 2).unwrap().is_zero());
    }

    #[test]
    fn shift_by_zero_matches_general() {
        let fmt = FpFormat::binary16();
        let x = ws(&[1000.0, 3.0, 0.125, 700.0, 9.5]);
        let tree = pairwise_tree(5).unwrap();
        let g = general_sum(&tree, &x, &fmt, NE).unwrap();
        let s = shifted_sum(&tree, &x, &WideReal::zero(64), &fmt, NE).unwrap();
        assert_eq!(s.result, g.result);
        for k in 2..=5 {
            assert_eq!(
                s.roundoffs.get(RoundoffKind::Delta, k),
                g.roundoffs.get(RoundoffKind::Delta, k)
            );
        }
        for k in 1..=6 {
            assert!(s.roundoff(RoundoffKind::Epsilon, k).is_zero());
        }
    }

    #[test]
    fn shifted_single_input() {
        let fmt = FpFormat::binary16();
        let t = shifted_sum(
            &sequential_tree(1).unwrap(),
            &ws(&[2049.0 + 1.0]),
            &WideReal::from_f64(64, 2048.0),
            &fmt,
            NE,
        )
        .unwrap();
        assert_eq!(t.computed.len(), 3);
        assert!(t.error.is_zero());
        let d = t.roundoff(RoundoffKind::Delta, 2);
        assert!(d.is_zero());
    }

    #[test]
    fn rejects_unrepresentable_inputs() {
        let fmt = FpFormat::binary16();
        let err = general_sum(&sequential_tree(2).unwrap(), &ws(&[2049.0, 1.0]), &fmt, NE);
        assert!(matches!(err, Err(Error::NotRepresentable { .. })));
        let err = shifted_sum(
            &sequential_tree(2).unwrap(),
            &ws(&[2048.0, 1.0]),
            &WideReal::from_f64(64, 0.1),
            &fmt,
            NE,
        );
        assert!(err.is_err());
    }

    #[test]
    fn exact_sum_basics() {
        assert!(exact_sum(&ws(&[1.0, -1.0])).is_zero());
        assert_eq!(exact_sum(&ws(&[2048.0, 1.0, 1.0])).to_f64(), 2050.0);
    }

    #[test]
    fn trace_json_round_trip() {
        let fmt = FpFormat::binary16();
        let t = compensated_sum(&ws(&[2048.0, 1.0, 1.0, 0.25]), &fmt, RoundingMode::stochastic(1, 2))
            .unwrap();
        let text = serde_json::to_string(&t).unwrap();
        let back: RunTrace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
    }
}
