//! A priori error bounds for the three algorithms.
//!
//! Bounds only look at the inputs, exact partial sums, the tree shape, the
//! unit roundoff and the failure probabilities; they never read a run's
//! realized roundoffs. Under stochastic rounding callers pass `2u` (see
//! [`effective_unit_roundoff`]).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fpmodel::{FpFormat, RoundingMode};
use crate::sumtree::{Child, SumTree};
use crate::wide::WideReal;

/// Working precision of bound evaluation.
pub const BOUND_BITS: u32 = 192;

/// Constant in front of the `u³ n Σ|x|` slack allowed on top of second
/// order compensated bounds.
pub const CUBIC_SLACK: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub id: &'static str,
    /// `None` when a precondition of the bound fails.
    pub value: Option<WideReal>,
    pub constituents: BTreeMap<String, f64>,
    pub valid: bool,
}

impl BoundReport {
    fn new(id: &'static str) -> Self {
        Self {
            id,
            value: None,
            constituents: BTreeMap::new(),
            valid: true,
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.constituents.insert(key.to_string(), v);
        self
    }

    fn set(&mut self, key: &str, v: f64) {
        self.constituents.insert(key.to_string(), v);
    }

    fn finish(mut self, value: WideReal) -> Self {
        self.set("value", value.to_f64());
        self.value = Some(value);
        self
    }

    fn invalid(mut self) -> Self {
        self.valid = false;
        self.value = None;
        self
    }

    /// Whether the bound is valid and at least `|error|`.
    pub fn holds(&self, error: &WideReal) -> bool {
        match &self.value {
            Some(v) => error.abs() <= *v,
            None => false,
        }
    }

    pub fn value_f64(&self) -> Option<f64> {
        self.value.as_ref().map(WideReal::to_f64)
    }
}

/// `u` for round-to-nearest, `2u` for stochastic rounding.
pub fn effective_unit_roundoff(fmt: &FpFormat, mode: RoundingMode) -> WideReal {
    fmt.unit_roundoff(BOUND_BITS)
        .scale2(if mode.is_stochastic() { 1 } else { 0 })
}

fn w(v: f64) -> WideReal {
    WideReal::from_f64(BOUND_BITS, v)
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// `√(2 ln(2/δ))`.
pub fn azuma_multiplier(delta_fail: f64) -> Result<WideReal> {
    check_probability("delta", delta_fail)?;
    Ok((w(2.0).div(&w(delta_fail)).ln() * w(2.0)).sqrt())
}

/// `(Σ c_k²)^{1/2} √(2 ln(2/δ))`.
pub fn azuma_radius(c: &[WideReal], delta_fail: f64) -> Result<WideReal> {
    Ok(sum_squares(c).sqrt() * azuma_multiplier(delta_fail)?)
}

/// `√(2 ln(2m/η))` for a union bound over `m` events.
pub fn union_lambda(events: usize, eta_fail: f64) -> Result<WideReal> {
    check_probability("eta", eta_fail)?;
    let arg = w(2.0 * events as f64).div(&w(eta_fail));
    Ok((arg.ln() * w(2.0)).sqrt())
}

fn sum_squares(v: &[WideReal]) -> WideReal {
    v.iter().fold(WideReal::zero(BOUND_BITS), |acc, x| acc + x.exact_mul(x))
}

fn sum_abs(v: &[WideReal]) -> WideReal {
    v.iter().fold(WideReal::zero(BOUND_BITS), |acc, x| acc + x.abs())
}

fn max_abs(v: &[WideReal]) -> WideReal {
    v.iter()
        .map(WideReal::abs)
        .fold(WideReal::zero(BOUND_BITS), |acc, x| if x > acc { x } else { acc })
}

/// Partial sums `s_2..s_n` of a tree (empty for `n = 1`).
pub fn tree_partial_sums(tree: &SumTree, x: &[WideReal]) -> Result<Vec<WideReal>> {
    let s = tree.exact_partial_sums(x)?;
    Ok(s.into_iter().skip(2).collect())
}

/// Sequential partial sums `s_1..s_n` with `s_1 = x_1`.
fn sequential_sums(x: &[WideReal]) -> Vec<WideReal> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = WideReal::zero(BOUND_BITS);
    for v in x {
        acc = acc.exact_add(v);
        out.push(acc.clone());
    }
    out
}

/// `u(1+u)^h Σ_{k=2}^n |s_k|` over the tree's partial sums.
///
/// Also reports `aggregate = u(1+u)^h h Σ|x_k|` (valid for `hu < 1`), the
/// printed variant `h²u²/(1-hu) Σ|x_k|` as `aggregate_printed`, and, when
/// computed partial sums are supplied, `u Σ|ŝ_k|` as `computed_sums`.
pub fn det_bound_general(
    x: &[WideReal],
    tree: &SumTree,
    u: &WideReal,
    computed: Option<&[WideReal]>,
) -> Result<BoundReport> {
    let s = tree_partial_sums(tree, x)?;
    let h = tree.height();
    let one = WideReal::one(BOUND_BITS);
    let growth = (&one + u).powi(h as u32);
    let abs_s = sum_abs(&s);
    let norm1 = sum_abs(x);
    let value = u * &growth * &abs_s;
    let hu = u * &w(h as f64);
    let mut r = BoundReport::new("general_det")
        .with("u", u.to_f64())
        .with("h", h as f64)
        .with("n", x.len() as f64)
        .with("sum_abs_partial", abs_s.to_f64())
        .with("norm1", norm1.to_f64());
    if hu < one {
        let aggregate = u * &growth * &w(h as f64) * &norm1;
        let printed = hu.square().div(&(&one - &hu)) * &norm1;
        r.set("aggregate", aggregate.to_f64());
        r.set("aggregate_printed", printed.to_f64());
    }
    r.set("aggregate_valid", if hu < one { 1.0 } else { 0.0 });
    if let Some(hat) = computed {
        let total = hat.iter().fold(WideReal::zero(BOUND_BITS), |acc, v| acc + v.abs());
        r.set("computed_sums", (u * &total).to_f64());
    }
    Ok(r.finish(value))
}

/// `u (Σ s_k²)^{1/2} √(2 ln(2/δ))`, valid to first order.
pub fn prob_bound_first_order(
    partial_sums: &[WideReal],
    u: &WideReal,
    delta_fail: f64,
) -> Result<BoundReport> {
    let mult = azuma_multiplier(delta_fail)?;
    let sq = sum_squares(partial_sums);
    let value = u * &sq.sqrt() * &mult;
    Ok(BoundReport::new("general_first_order_prob")
        .with("u", u.to_f64())
        .with("delta_fail", delta_fail)
        .with("failure_budget", delta_fail)
        .with("sum_sq_partial", sq.to_f64())
        .with("azuma", mult.to_f64())
        .finish(value))
}

/// `u exp(λ√h u) (Σ s_k²)^{1/2} √(2 ln(2/δ))`, `λ = √(2 ln(2n/η))`, for
/// independent roundoffs.
pub fn prob_bound_model1(
    partial_sums: &[WideReal],
    h: usize,
    n: usize,
    u: &WideReal,
    delta_fail: f64,
    eta_fail: f64,
) -> Result<BoundReport> {
    let mult = azuma_multiplier(delta_fail)?;
    let lambda = union_lambda(n, eta_fail)?;
    let z = &lambda * &w(h as f64).sqrt() * u;
    let sq = sum_squares(partial_sums);
    let value = u * &z.exp() * &sq.sqrt() * &mult;
    Ok(BoundReport::new("general_model1")
        .with("u", u.to_f64())
        .with("h", h as f64)
        .with("n", n as f64)
        .with("lambda", lambda.to_f64())
        .with("lambda_sqrt_h_u", z.to_f64())
        .with("delta_fail", delta_fail)
        .with("eta_fail", eta_fail)
        .with("failure_budget", delta_fail + eta_fail)
        .with("sum_sq_partial", sq.to_f64())
        .with("azuma", mult.to_f64())
        .finish(value))
}

/// `u/(1 - λ√h u) (Σ s_k²)^{1/2} √(2 ln(2/δ))` for mean-independent
/// roundoffs; invalid unless `λ√h u < 1`.
pub fn prob_bound_model2(
    partial_sums: &[WideReal],
    h: usize,
    n: usize,
    u: &WideReal,
    delta_fail: f64,
    eta_fail: f64,
) -> Result<BoundReport> {
    let mult = azuma_multiplier(delta_fail)?;
    let lambda = union_lambda(n, eta_fail)?;
    let z = &lambda * &w(h as f64).sqrt() * u;
    let sq = sum_squares(partial_sums);
    let one = WideReal::one(BOUND_BITS);
    let r = BoundReport::new("general_model2")
        .with("u", u.to_f64())
        .with("h", h as f64)
        .with("n", n as f64)
        .with("lambda", lambda.to_f64())
        .with("lambda_sqrt_h_u", z.to_f64())
        .with("delta_fail", delta_fail)
        .with("eta_fail", eta_fail)
        .with("failure_budget", delta_fail + eta_fail)
        .with("sum_sq_partial", sq.to_f64())
        .with("azuma", mult.to_f64());
    if z >= one {
        return Ok(r.invalid());
    }
    let value = u.div(&(&one - &z)) * &sq.sqrt() * &mult;
    Ok(r.finish(value))
}

/// Per-node bounds `λu/(1 - λ√h u) (Σ_{j≺k} s_j²)^{1/2}` on the children
/// errors `f_k`, indexed by node (entries 0 and 1 are zero). `None` when
/// `λ√h u ≥ 1`.
pub fn children_error_bounds(
    tree: &SumTree,
    x: &[WideReal],
    u: &WideReal,
    eta_fail: f64,
) -> Result<Option<Vec<WideReal>>> {
    let n = tree.n();
    let s = tree.exact_partial_sums(x)?;
    let lambda = union_lambda(n, eta_fail)?;
    let z = &lambda * &w(tree.height() as f64).sqrt() * u;
    let one = WideReal::one(BOUND_BITS);
    if z >= one {
        return Ok(None);
    }
    let factor = (&lambda * u).div(&(&one - &z));
    // below[k] = Σ_{j≺k} s_j²
    let mut below = vec![WideReal::zero(BOUND_BITS); n + 1];
    for node in tree.nodes() {
        let mut acc = WideReal::zero(BOUND_BITS);
        for c in [node.left, node.right] {
            if let Child::Node(j) = c {
                acc = acc + &below[j] + s[j].exact_mul(&s[j]);
            }
        }
        below[node.id] = acc;
    }
    Ok(Some(below.into_iter().map(|b| &factor * &b.sqrt()).collect()))
}

/// Terms `|s_k - kc| + |x_k - c|` for `k = 1..=n` followed by the
/// uncentering term `|s_n| + |nc|`.
fn shifted_terms(x: &[WideReal], c: &WideReal) -> Vec<WideReal> {
    let s = sequential_sums(x);
    let n = x.len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 1..=n {
        let kc = w(k as f64) * c;
        out.push(s[k - 1].exact_sub(&kc).abs() + x[k - 1].exact_sub(c).abs());
    }
    let nc = w(n as f64) * c;
    out.push(s[n - 1].abs() + nc.abs());
    out
}

/// `u(1+u)^n (Σ_{k=2}^n |s_k - kc| + Σ_{k=1}^n |x_k - c| + |s| + |nc|)` for
/// shifted sequential summation.
pub fn shifted_seq_det_bound(x: &[WideReal], c: &WideReal, u: &WideReal) -> Result<BoundReport> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len();
    let s = sequential_sums(x);
    let mut total = WideReal::zero(BOUND_BITS);
    for k in 2..=n {
        total = total + s[k - 1].exact_sub(&(w(k as f64) * c)).abs();
    }
    for v in x {
        total = total + v.exact_sub(c).abs();
    }
    total = total + s[n - 1].abs() + (w(n as f64) * c).abs();
    let one = WideReal::one(BOUND_BITS);
    let value = u * &(&one + u).powi(n as u32) * &total;
    Ok(BoundReport::new("shifted_seq_det")
        .with("u", u.to_f64())
        .with("n", n as f64)
        .with("c", c.to_f64())
        .with("bracket", total.to_f64())
        .finish(value))
}

/// `max_k(|s_k - kc| + |x_k - c|) √(u γ_{2(n+2)}/2) √(2 ln(2/δ))` with
/// `γ_m = (1+u)^m - 1`; the maximum includes the uncentering term
/// `|s_n| + |nc|`. The small-`n` form `√(n+2) u` replaces the middle factor
/// in the `simplified` constituent.
pub fn shifted_seq_prob_bound(
    x: &[WideReal],
    c: &WideReal,
    u: &WideReal,
    delta_fail: f64,
) -> Result<BoundReport> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len();
    let mult = azuma_multiplier(delta_fail)?;
    let max_term = max_abs(&shifted_terms(x, c));
    let one = WideReal::one(BOUND_BITS);
    let gamma = (&one + u).powi(2 * (n as u32 + 2)) - &one;
    let growth = (u * &gamma).div(&w(2.0)).sqrt();
    let value = &max_term * &growth * &mult;
    let simple = w((n + 2) as f64).sqrt() * u;
    Ok(BoundReport::new("shifted_seq_prob")
        .with("u", u.to_f64())
        .with("n", n as f64)
        .with("c", c.to_f64())
        .with("max_term", max_term.to_f64())
        .with("gamma", gamma.to_f64())
        .with("growth", growth.to_f64())
        .with("growth_simplified", simple.to_f64())
        .with("simplified", (&max_term * &simple * &mult).to_f64())
        .with("delta_fail", delta_fail)
        .with("failure_budget", delta_fail)
        .with("azuma", mult.to_f64())
        .finish(value))
}

/// Which roundoff model a general-tree probabilistic bound assumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RoundoffModel {
    /// Independent roundoffs.
    Independent,
    /// Mean-independent roundoffs.
    MeanIndependent,
}

/// Shifted general summation:
/// `u·g·(s_n² + Σ_{k=2}^n t_k² + Σ_{k=1}^n y_k²)^{1/2} √(2 ln(2/δ))` with
/// `g = exp(λ√(h+2)u)` (independent) or `1/(1 - λ√(h+2)u)`
/// (mean-independent), `λ = √(2 ln(2(2n+1)/η))`.
pub fn shifted_gen_prob_bound(
    x: &[WideReal],
    c: &WideReal,
    tree: &SumTree,
    u: &WideReal,
    delta_fail: f64,
    eta_fail: f64,
    model: RoundoffModel,
) -> Result<BoundReport> {
    let n = x.len();
    let mult = azuma_multiplier(delta_fail)?;
    let lambda = union_lambda(2 * n + 1, eta_fail)?;
    let h2 = tree.height() + 2;
    let z = &lambda * &w(h2 as f64).sqrt() * u;
    let y: Vec<WideReal> = x.iter().map(|v| v.exact_sub(c)).collect();
    let t = tree_partial_sums(tree, &y)?;
    let s_n = x.iter().fold(WideReal::zero(BOUND_BITS), |acc, v| acc.exact_add(v));
    let radicand = s_n.exact_mul(&s_n) + sum_squares(&t) + sum_squares(&y);
    let one = WideReal::one(BOUND_BITS);
    let id = match model {
        RoundoffModel::Independent => "shifted_gen_model1",
        RoundoffModel::MeanIndependent => "shifted_gen_model2",
    };
    let r = BoundReport::new(id)
        .with("u", u.to_f64())
        .with("n", n as f64)
        .with("nodes", (2 * n + 1) as f64)
        .with("h_plus_2", h2 as f64)
        .with("lambda", lambda.to_f64())
        .with("lambda_sqrt_h_u", z.to_f64())
        .with("c", c.to_f64())
        .with("radicand", radicand.to_f64())
        .with("delta_fail", delta_fail)
        .with("eta_fail", eta_fail)
        .with("failure_budget", delta_fail + eta_fail)
        .with("azuma", mult.to_f64());
    let growth = match model {
        RoundoffModel::Independent => z.exp(),
        RoundoffModel::MeanIndependent => {
            if z >= one {
                return Ok(r.invalid());
            }
            one.div(&(&one - &z))
        }
    };
    let value = u * &growth * &radicand.sqrt() * &mult;
    Ok(r.finish(value))
}

/// `3u Σ|x|` (first order).
pub fn comp_first_order_bound(x: &[WideReal], u: &WideReal) -> Result<BoundReport> {
    let norm1 = sum_abs(x);
    let value = w(3.0) * u * &norm1;
    Ok(BoundReport::new("comp_first_order_det")
        .with("u", u.to_f64())
        .with("norm1", norm1.to_f64())
        .finish(value))
}

/// `(3u + 4nu²) Σ|x|` (second order). The `cubic_slack` constituent holds
/// `100 u³ n Σ|x|`, the allowance used for the omitted third order terms.
pub fn comp_second_order_det_bound(x: &[WideReal], u: &WideReal) -> Result<BoundReport> {
    let n = x.len();
    let norm1 = sum_abs(x);
    let nn = w(n as f64);
    let value = (w(3.0) * u + w(4.0) * &nn * &u.square()) * &norm1;
    let slack = cubic_slack(n, u, &norm1);
    Ok(BoundReport::new("comp_second_order_det")
        .with("u", u.to_f64())
        .with("n", n as f64)
        .with("norm1", norm1.to_f64())
        .with("cubic_slack", slack.to_f64())
        .finish(value))
}

/// `100 u³ n Σ|x|`.
pub fn cubic_slack(n: usize, u: &WideReal, norm1: &WideReal) -> WideReal {
    w(CUBIC_SLACK) * &u.powi(3) * &w(n as f64) * norm1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Order {
    First,
    Second,
}

/// Probabilistic compensated summation bounds.
///
/// Second order: `u(2(1+3u)‖x‖₂ + (s_n² + 16u² Σ_{k=1}^{n-1} s_k²)^{1/2}) √(2 ln(2/δ))`,
/// with the `‖x‖₁` relaxation `u(2(1+3u)‖x‖₂ + √(1+16(n-2)u²)‖x‖₁)·√(2 ln(2/δ))`
/// as the `relaxed` constituent.
/// First order: `u(2‖x‖₂ + |s_n|) √(2 ln(2/δ))`.
pub fn comp_prob_bound(
    x: &[WideReal],
    u: &WideReal,
    delta_fail: f64,
    order: Order,
) -> Result<BoundReport> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len();
    let mult = azuma_multiplier(delta_fail)?;
    let s = sequential_sums(x);
    let s_n = s[n - 1].clone();
    let norm2 = sum_squares(x).sqrt();
    let norm1 = sum_abs(x);
    let one = WideReal::one(BOUND_BITS);
    match order {
        Order::First => {
            let value = u * &(w(2.0) * &norm2 + s_n.abs()) * &mult;
            Ok(BoundReport::new("comp_prob_first_order")
                .with("u", u.to_f64())
                .with("norm2", norm2.to_f64())
                .with("abs_sum", s_n.abs().to_f64())
                .with("delta_fail", delta_fail)
                .with("failure_budget", delta_fail)
                .with("azuma", mult.to_f64())
                .finish(value))
        }
        Order::Second => {
            let head = w(2.0) * &(&one + &(w(3.0) * u)) * &norm2;
            let tail = (s_n.exact_mul(&s_n) + w(16.0) * &u.square() * &sum_squares(&s[..n - 1])).sqrt();
            let value = u * &(&head + &tail) * &mult;
            let spread = w(16.0) * &w(n as f64 - 2.0) * &u.square();
            let relaxed = u * &(&head + &((&one + &spread).abs().sqrt() * &norm1)) * &mult;
            Ok(BoundReport::new("comp_prob_second_order")
                .with("u", u.to_f64())
                .with("n", n as f64)
                .with("norm1", norm1.to_f64())
                .with("norm2", norm2.to_f64())
                .with("tail", tail.to_f64())
                .with("relaxed", relaxed.to_f64())
                .with("delta_fail", delta_fail)
                .with("failure_budget", delta_fail)
                .with("azuma", mult.to_f64())
                .finish(value))
        }
    }
}

/// Relative bound for shifted sequential summation:
/// `u √(n+2) max_k(|s_k - kc| + |x_k - c|)/|s_n| √(2 ln(2/δ))`, with the
/// same uncentering term as [`shifted_seq_prob_bound`].
pub fn relative_bound_shifted(
    x: &[WideReal],
    c: &WideReal,
    u: &WideReal,
    delta_fail: f64,
) -> Result<WideReal> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s_n = x.iter().fold(WideReal::zero(BOUND_BITS), |acc, v| acc.exact_add(v));
    if s_n.is_zero() {
        return Err(Error::ZeroSum);
    }
    let mult = azuma_multiplier(delta_fail)?;
    let max_term = max_abs(&shifted_terms(x, c));
    let n = x.len();
    Ok(u * &w((n + 2) as f64).sqrt() * &max_term.div(&s_n.abs()) * &mult)
}

/// Relative first order bound for compensated summation:
/// `u (2‖x‖₂ + |s_n|)/|s_n| √(2 ln(2/δ))`.
pub fn relative_bound_compensated(x: &[WideReal], u: &WideReal, delta_fail: f64) -> Result<WideReal> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s_n = x.iter().fold(WideReal::zero(BOUND_BITS), |acc, v| acc.exact_add(v));
    if s_n.is_zero() {
        return Err(Error::ZeroSum);
    }
    let mult = azuma_multiplier(delta_fail)?;
    let norm2 = sum_squares(x).sqrt();
    Ok(u * &(w(2.0) * &norm2 + s_n.abs()).div(&s_n.abs()) * &mult)
}
