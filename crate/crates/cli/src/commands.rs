use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use fpsum::bounds::{
    comp_first_order_bound, comp_prob_bound, comp_second_order_det_bound, det_bound_general,
    effective_unit_roundoff, prob_bound_first_order, prob_bound_model1, prob_bound_model2,
    relative_bound_compensated, relative_bound_shifted, shifted_gen_prob_bound, shifted_seq_det_bound,
    shifted_seq_prob_bound, tree_partial_sums, BoundReport, Order, RoundoffModel,
};
use fpsum::experiments::coverage::{children_error_coverage, write_coverage_csv, CoverageConfig, CoverageRow};
use fpsum::experiments::verify::{all_pass, write_verify_csv, RowKind, TOLERANCE_EXP};
use fpsum::experiments::{render_svg, run_coverage, run_figure, run_verify, write_rows_csv, ExperimentConfig, VerifyConfig, VerifyRow};
use fpsum::expressions::{compensated_identities, exact_expressions};
use fpsum::{compensated_sum, general_sum, shifted_sum, Algorithm, RunTrace, TreeKind, WideReal};

use crate::args::{BoundsArgs, CoverageArgs, ExperimentArgs, SumArgs, VerifyArgs};
use crate::input::{fmt_num, hex, num, parse_shift, parse_values, read_text};

/// What the process should report: everything ran and every check passed,
/// or a check failed.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    CheckFailed,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(algo: Algorithm, tree: TreeKind, shift: &str, seed: u64, fmt: &fpsum::FpFormat, mode: fpsum::RoundingMode, x: &[WideReal]) -> Result<RunTrace> {
    Ok(match algo {
        Algorithm::General => general_sum(&tree.build(x.len(), seed)?, x, fmt, mode)?,
        Algorithm::Shifted => {
            let c = parse_shift(shift, x, fmt)?;
            shifted_sum(&tree.build(x.len(), seed)?, x, &c, fmt, mode)?
        }
        Algorithm::Compensated => {
            if tree != TreeKind::Sequential {
                bail!("compensated summation is sequential only");
            }
            compensated_sum(x, fmt, mode)?
        }
    })
}

pub fn sum(a: &SumArgs) -> Result<Outcome> {
    let x = parse_values(&read_text(&a.input)?, &a.fmt)?;
    let trace = run(a.algo, a.tree, &a.shift, a.seed, &a.fmt, a.mode.mode(a.seed, 0), &x)?;
    println!("n               {}", x.len());
    if let Some(rec) = &trace.shift {
        println!("shift           {}", fmt_num(&rec.c, &a.fmt));
    }
    println!("computed        {}", fmt_num(&trace.result, &a.fmt));
    println!("exact           {}  (hex {})", num(trace.exact_sum.to_f64()), hex(&trace.exact_sum));
    println!("error           {}  (hex {})", num(trace.error.to_f64()), hex(&trace.error));
    match trace.relative_error() {
        Some(r) => println!("relative_error  {}", num(r)),
        None => println!("relative_error  undefined (exact sum is zero)"),
    }
    if let Some(out) = &a.out {
        let mut w = create(out)?;
        serde_json::to_writer_pretty(&mut w, &trace)?;
        w.flush()?;
    }
    Ok(Outcome::Passed)
}

fn trace_rows(trace: &RunTrace, seed: u64) -> Result<Vec<VerifyRow>> {
    let tolerance = trace.abs_input_sum().scale2(TOLERANCE_EXP);
    let tree = trace.tree.as_ref().map_or("sequential", |t| if t.is_sequential() { "sequential" } else { "custom" });
    let row = |id: String, residual: &WideReal, kind| VerifyRow {
        expression_id: id,
        n: trace.n(),
        fmt: trace.fmt.name().to_string(),
        seed,
        residual: residual.abs().to_f64(),
        tolerance: tolerance.to_f64(),
        pass: residual.abs() <= tolerance,
        tree: tree.to_string(),
        trial: 0,
        kind,
    };
    let mut rows: Vec<VerifyRow> = exact_expressions(trace)?
        .into_iter()
        .map(|r| row(r.id.to_string(), &r.residual, RowKind::Exact))
        .collect();
    if trace.algorithm == Algorithm::Compensated {
        for c in compensated_identities(trace)? {
            rows.push(row(format!("identity_{}_k{}", c.id, c.k), &c.residual, RowKind::Identity));
        }
    }
    Ok(rows)
}

/// Worst residual per `(expression_id, n)`, in first-seen order.
fn summarize(rows: &[VerifyRow]) -> Vec<VerifyRow> {
    let mut out: Vec<VerifyRow> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s.expression_id == r.expression_id && s.n == r.n) {
            Some(s) => {
                let pass = s.pass && r.pass;
                if r.residual / r.tolerance > s.residual / s.tolerance {
                    *s = r.clone();
                }
                s.pass = pass;
            }
            None => out.push(r.clone()),
        }
    }
    out
}

pub fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let rows = match &a.input {
        Some(path) => {
            let trace: RunTrace = serde_json::from_str(&read_text(path)?)
                .with_context(|| format!("{} is not a run trace", path.display()))?;
            trace_rows(&trace, a.seed)?
        }
        None => {
            let mut cfg = VerifyConfig::new(a.fmt.clone(), a.n.clone(), a.trials, a.seed);
            if !a.tree.is_empty() {
                cfg.trees = a.tree.clone();
            }
            cfg.mode = a.mode;
            cfg.diagnostics = a.diagnostics;
            run_verify(&cfg)?
        }
    };
    if let Some(out) = &a.out {
        write_verify_csv(&rows, create(out)?)?;
    }
    println!("expression_id,n,fmt,seed,residual,tolerance,pass,kind");
    for s in summarize(&rows) {
        let kind = match s.kind {
            RowKind::Exact => "exact",
            RowKind::Identity => "identity",
            RowKind::Diagnostic => "diagnostic",
        };
        println!(
            "{},{},{},{},{},{},{},{kind}",
            s.expression_id, s.n, s.fmt, s.seed, num(s.residual), num(s.tolerance), s.pass
        );
    }
    Ok(if all_pass(&rows) { Outcome::Passed } else { Outcome::CheckFailed })
}

fn relative_row(id: &'static str, v: fpsum::Result<WideReal>, delta: f64) -> Result<Option<BoundReport>> {
    match v {
        Ok(value) => {
            let mut c = std::collections::BTreeMap::new();
            c.insert("value".to_string(), value.to_f64());
            c.insert("failure_budget".to_string(), delta);
            Ok(Some(BoundReport { id, value: Some(value), constituents: c, valid: true }))
        }
        Err(fpsum::Error::ZeroSum) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn bound_reports(a: &BoundsArgs, x: &[WideReal]) -> Result<Vec<BoundReport>> {
    let n = x.len();
    let tree = a.tree.build(n, a.seed)?;
    let u = effective_unit_roundoff(&a.fmt, a.mode.mode(a.seed, 0));
    let s = tree_partial_sums(&tree, x)?;
    let h = tree.height();
    let c = parse_shift(&a.shift, x, &a.fmt)?;
    let (d, e) = (a.delta, a.eta);
    let mut out = vec![
        det_bound_general(x, &tree, &u, None)?,
        prob_bound_first_order(&s, &u, d)?,
        prob_bound_model1(&s, h, n, &u, d, e)?,
        prob_bound_model2(&s, h, n, &u, d, e)?,
    ];
    if tree.is_sequential() {
        out.push(shifted_seq_det_bound(x, &c, &u)?);
        out.push(shifted_seq_prob_bound(x, &c, &u, d)?);
    }
    out.push(shifted_gen_prob_bound(x, &c, &tree, &u, d, e, RoundoffModel::Independent)?);
    out.push(shifted_gen_prob_bound(x, &c, &tree, &u, d, e, RoundoffModel::MeanIndependent)?);
    if tree.is_sequential() {
        out.push(comp_first_order_bound(x, &u)?);
        out.push(comp_second_order_det_bound(x, &u)?);
        out.push(comp_prob_bound(x, &u, d, Order::First)?);
        out.push(comp_prob_bound(x, &u, d, Order::Second)?);
        out.extend(relative_row("shifted_relative", relative_bound_shifted(x, &c, &u, d), d)?);
        out.extend(relative_row("compensated_relative", relative_bound_compensated(x, &u, d), d)?);
    }
    Ok(out)
}

pub fn bounds(a: &BoundsArgs) -> Result<Outcome> {
    let x = parse_values(&read_text(&a.input)?, &a.fmt)?;
    let reports = bound_reports(a, &x)?;
    let width = reports.iter().map(|r| r.id.len()).max().unwrap_or(0);
    println!("{:width$}  {:>24}  {:>5}  budget", "bound_id", "value", "valid");
    for r in &reports {
        let value = r.value_f64().map_or("-".to_string(), num);
        let budget = r.constituents.get("failure_budget").map_or("0".to_string(), |b| num(*b));
        println!("{:width$}  {value:>24}  {:>5}  {budget}", r.id, r.valid);
    }
    if let Some(out) = &a.out {
        let mut w = create(out)?;
        writeln!(w, "bound_id,value,valid,constituents")?;
        for r in &reports {
            let parts: Vec<String> = r.constituents.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect();
            let value = r.value_f64().map_or(String::new(), num);
            writeln!(w, "{},{value},{},{}", r.id, r.valid, parts.join(";"))?;
        }
        w.flush()?;
    }
    Ok(Outcome::Passed)
}

pub fn resolve_experiment(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .with_context(|| format!("{} is not an experiment config", path.display()))?,
        None => ExperimentConfig::preset(a.figure.context("--figure is required")?),
    };
    if let (Some(fig), Some(_)) = (a.figure, &a.config) {
        cfg.figure = fig;
    }
    if let Some(f) = &a.fmt {
        cfg.fmt = f.clone();
    }
    if !a.algo.is_empty() {
        cfg.algorithms = a.algo.clone();
    }
    if let Some(d) = a.data {
        cfg.data = d;
    }
    if let Some(g) = a.grid {
        cfg.grid = g;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.delta {
        cfg.delta_fail = d;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
    if a.svg.is_some() {
        cfg.svg = a.svg.clone();
    }
    if cfg.svg.is_none() {
        cfg.svg = cfg.out.as_ref().map(|p| p.with_extension("svg"));
    }
    Ok(cfg)
}

pub fn experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rows = run_figure(cfg)?;
    if cfg.out.is_none() {
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf)?;
        print!("{}", String::from_utf8(buf)?);
        if let Some(svg) = &cfg.svg {
            std::fs::write(svg, render_svg(&rows))?;
        }
        return Ok(Outcome::Passed);
    }
    println!("algorithm,points,median_rel_error,max_rel_error,bound_holds");
    for alg in &cfg.algorithms {
        let mine: Vec<_> = rows.iter().filter(|r| r.algorithm == alg.name()).collect();
        let mut errs: Vec<f64> = mine.iter().map(|r| r.rel_error).filter(|e| e.is_finite()).collect();
        errs.sort_by(f64::total_cmp);
        let median = errs.get(errs.len() / 2).copied().unwrap_or(f64::NAN);
        let max = errs.last().copied().unwrap_or(f64::NAN);
        let bounded: Vec<_> = mine.iter().filter_map(|r| r.bound_value.map(|b| r.rel_error <= b)).collect();
        let holds = if bounded.is_empty() {
            "-".to_string()
        } else {
            format!("{}/{}", bounded.iter().filter(|h| **h).count(), bounded.len())
        };
        println!("{},{},{},{},{holds}", alg.name(), mine.len(), num(median), num(max));
    }
    Ok(Outcome::Passed)
}

/// A probabilistic row passes when its hold rate is within 0.01 of its
/// target; a deterministic row must hold in every trial.
pub fn coverage_ok(r: &CoverageRow) -> bool {
    if r.target >= 1.0 {
        r.hold_count == r.trials
    } else {
        r.hold_rate() >= r.target - 0.01
    }
}

pub fn coverage(a: &CoverageArgs) -> Result<Outcome> {
    let mut cfg = CoverageConfig::new(a.fmt.clone(), a.n, a.tree, a.trials, a.seed);
    cfg.data = a.data;
    cfg.delta_fail = a.delta;
    cfg.eta_fail = a.eta;
    cfg.mode = a.mode;
    cfg.fresh_data = a.fresh_data;
    let mut rows = run_coverage(&cfg)?;
    if a.children {
        rows.push(children_error_coverage(&cfg)?);
    }
    if let Some(out) = &a.out {
        write_coverage_csv(&rows, create(out)?)?;
    }
    println!("bound_id,trials,hold_count,target,hold_rate,ok");
    for r in &rows {
        println!(
            "{},{},{},{},{},{}",
            r.bound_id, r.trials, r.hold_count, num(r.target), num(r.hold_rate()), coverage_ok(r)
        );
    }
    Ok(if rows.iter().all(coverage_ok) { Outcome::Passed } else { Outcome::CheckFailed })
}
