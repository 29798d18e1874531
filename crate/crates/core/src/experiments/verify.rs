//! Residual suite: every exact error expression and identity against the
//! measured error of seeded runs.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{choose_shift, data_rng, draw_rounded, DRAW_BITS};
use super::ModeChoice;
use crate::algorithms::{compensated_sum, general_sum, shifted_sum, RunTrace};
use crate::error::{Error, Result};
use crate::expressions::{
    comp_expr_first_verbatim, comp_expr_second_verbatim, comp_first_order, comp_second_order,
    compensated_identities, exact_expressions, general_first_order, ExpressionResult,
};
use crate::fpmodel::FpFormat;
use crate::sumtree::TreeKind;
use crate::wide::WideReal;

/// Residual tolerance relative to `Σ|x|`, as a power of two.
pub const TOLERANCE_EXP: i32 = -40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub fmt: FpFormat,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub trees: Vec<TreeKind>,
    pub mode: ModeChoice,
    /// Also report the verbatim printed variants and the truncated
    /// expansions (never counted as failures).
    pub diagnostics: bool,
}

impl VerifyConfig {
    pub fn new(fmt: FpFormat, ns: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            fmt,
            ns,
            trials,
            seed,
            trees: vec![TreeKind::Sequential, TreeKind::Pairwise, TreeKind::Random],
            mode: ModeChoice::Nearest,
            diagnostics: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// An exact error expression.
    Exact,
    /// An intermediate identity (largest residual over its steps).
    Identity,
    /// Not expected to match to oracle accuracy.
    Diagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub expression_id: String,
    pub n: usize,
    pub fmt: String,
    pub seed: u64,
    /// `|expression - measured error|`.
    pub residual: f64,
    /// `2^-40 Σ|x|`.
    pub tolerance: f64,
    pub pass: bool,
    pub tree: String,
    pub trial: usize,
    pub kind: RowKind,
}

/// Seeded inputs for one trial. Trials rotate through three shapes so that
/// the suite sees cancellation, clustering and a wide exponent range.
pub fn trial_inputs(fmt: &FpFormat, n: usize, seed: u64, stream: u64) -> Result<Vec<WideReal>> {
    let mut rng = data_rng(seed, stream);
    let scale = rng.random_range(-3..=3);
    match stream % 3 {
        0 => draw_rounded(n, fmt, || {
            WideReal::from_f64(DRAW_BITS, rng.sample::<f64, _>(StandardNormal)).scale2(scale)
        }),
        1 => {
            let m = rng.random_range(1.0..8.0);
            draw_rounded(n, fmt, || WideReal::from_f64(DRAW_BITS, m + rng.random::<f64>()).scale2(scale))
        }
        _ => draw_rounded(n, fmt, || {
            let e = rng.random_range(-8..=2);
            WideReal::from_f64(DRAW_BITS, rng.random_range(-1.0..1.0)).scale2(e)
        }),
    }
}

struct Ctx<'a> {
    fmt: &'a FpFormat,
    n: usize,
    seed: u64,
    trial: usize,
    tolerance: WideReal,
}

impl Ctx<'_> {
    fn row(&self, id: &str, tree: &str, residual: &WideReal, kind: RowKind) -> VerifyRow {
        let residual = residual.abs();
        VerifyRow {
            expression_id: id.to_string(),
            n: self.n,
            fmt: self.fmt.name().to_string(),
            seed: self.seed,
            residual: residual.to_f64(),
            tolerance: self.tolerance.to_f64(),
            pass: residual <= self.tolerance,
            tree: tree.to_string(),
            trial: self.trial,
            kind,
        }
    }

    fn push(&self, out: &mut Vec<VerifyRow>, r: ExpressionResult, tree: &str, kind: RowKind) {
        out.push(self.row(r.id, tree, &r.residual, kind));
    }
}

fn trial_rows(cfg: &VerifyConfig, n: usize, trial: usize) -> Result<Vec<VerifyRow>> {
    let stream = (n as u64) << 32 | trial as u64;
    let x = trial_inputs(&cfg.fmt, n, cfg.seed, stream)?;
    let abs: Vec<WideReal> = x.iter().map(WideReal::abs).collect();
    let ctx = Ctx {
        fmt: &cfg.fmt,
        n,
        seed: cfg.seed,
        trial,
        tolerance: WideReal::exact_total(DRAW_BITS, &abs).scale2(TOLERANCE_EXP),
    };
    let mode = |k: u64| cfg.mode.mode(cfg.seed, stream.wrapping_mul(8) + k);
    let mut out = Vec::new();
    let exact = |out: &mut Vec<VerifyRow>, trace: &RunTrace, tree: &str| -> Result<()> {
        for r in exact_expressions(trace)? {
            ctx.push(out, r, tree, RowKind::Exact);
        }
        Ok(())
    };
    let c = choose_shift(&x, &cfg.fmt)?;
    for (i, kind) in cfg.trees.iter().enumerate() {
        let tree = kind.build(n, stream)?;
        let name = kind.name();
        let g = general_sum(&tree, &x, &cfg.fmt, mode(2 * i as u64))?;
        exact(&mut out, &g, name)?;
        if cfg.diagnostics {
            ctx.push(&mut out, general_first_order(&g)?, name, RowKind::Diagnostic);
        }
        let s = shifted_sum(&tree, &x, &c, &cfg.fmt, mode(2 * i as u64 + 1))?;
        exact(&mut out, &s, name)?;
    }
    let comp = compensated_sum(&x, &cfg.fmt, mode(7))?;
    exact(&mut out, &comp, "sequential")?;
    let mut worst: Vec<(&'static str, WideReal)> = Vec::new();
    for check in compensated_identities(&comp)? {
        match worst.iter_mut().find(|(id, _)| *id == check.id) {
            Some((_, w)) => {
                if check.residual.abs() > *w {
                    *w = check.residual.abs();
                }
            }
            None => worst.push((check.id, check.residual.abs())),
        }
    }
    for (id, r) in worst {
        out.push(ctx.row(&format!("identity_{id}"), "sequential", &r, RowKind::Identity));
    }
    if cfg.diagnostics {
        if n >= 2 {
            ctx.push(&mut out, comp_expr_first_verbatim(&comp)?, "sequential", RowKind::Diagnostic);
        }
        if n >= 3 {
            ctx.push(&mut out, comp_expr_second_verbatim(&comp)?, "sequential", RowKind::Diagnostic);
        }
        ctx.push(&mut out, comp_first_order(&comp)?, "sequential", RowKind::Diagnostic);
        ctx.push(&mut out, comp_second_order(&comp)?, "sequential", RowKind::Diagnostic);
    }
    Ok(out)
}

/// Rows in `(n, trial)` order, independent of the worker count.
pub fn run_verify(cfg: &VerifyConfig) -> Result<Vec<VerifyRow>> {
    if cfg.ns.iter().any(|&n| n == 0) || cfg.trials == 0 {
        return Err(Error::InvalidParameter("verify needs n >= 1 and trials >= 1".into()));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .ns
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let chunks: Vec<Vec<VerifyRow>> = jobs
        .par_iter()
        .map(|&(n, t)| trial_rows(cfg, n, t))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Whether every non-diagnostic row passed.
pub fn all_pass(rows: &[VerifyRow]) -> bool {
    rows.iter().all(|r| r.pass || r.kind == RowKind::Diagnostic)
}

pub fn write_verify_csv<W: Write>(rows: &[VerifyRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
