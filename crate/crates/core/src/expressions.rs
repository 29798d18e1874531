//! Exact and truncated error expressions evaluated from a run's logged
//! roundoffs and exact partial sums.
//!
//! Every expression is evaluated in oracle precision from the roundoff log;
//! computed floating point values are read only where an expression itself
//! refers to them (the corrections `ĉ_j` and the intermediate errors `e_j`).
//! A reconstruction is compared with the measured error through `residual`.

use serde::Serialize;

use crate::algorithms::{Algorithm, RunTrace};
use crate::error::{Error, Result};
use crate::fpmodel::RoundoffKind::{self, Beta, Delta, Epsilon, Eta, Sigma};
use crate::sumtree::Child;
use crate::wide::WideReal;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpressionResult {
    pub id: &'static str,
    pub value: WideReal,
    /// `value - e_n`, exact.
    pub residual: WideReal,
}

impl ExpressionResult {
    fn new(id: &'static str, value: WideReal, trace: &RunTrace) -> Self {
        let residual = value.exact_sub(&trace.error);
        Self {
            id,
            value,
            residual,
        }
    }
}

/// A named identity `lhs = rhs` checked at step `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub id: &'static str,
    pub k: usize,
    pub residual: WideReal,
}

/// Intermediate series of the second compensated expression, indexed by `k`.
#[derive(Clone, Debug)]
pub struct SecondExpressionSeries {
    pub x: Vec<WideReal>,
    pub theta: Vec<WideReal>,
    pub e: Vec<WideReal>,
}

struct Ctx<'a> {
    t: &'a RunTrace,
    prec: u32,
}

impl<'a> Ctx<'a> {
    fn new(t: &'a RunTrace) -> Self {
        Self {
            t,
            prec: t.oracle_bits,
        }
    }

    fn r(&self, kind: RoundoffKind, k: usize) -> WideReal {
        self.t.roundoff(kind, k)
    }

    fn one_plus(&self, kind: RoundoffKind, k: usize) -> WideReal {
        self.one() + self.r(kind, k)
    }

    fn one(&self) -> WideReal {
        WideReal::one(self.prec)
    }

    fn zero(&self) -> WideReal {
        WideReal::zero(self.prec)
    }

    fn x(&self, k: usize) -> &WideReal {
        &self.t.inputs[k - 1]
    }

    fn s(&self, k: usize) -> &WideReal {
        &self.t.exact[k]
    }
}

fn expect(trace: &RunTrace, algorithm: Algorithm, what: &str) -> Result<()> {
    if trace.algorithm == algorithm {
        Ok(())
    } else {
        Err(Error::TraceMismatch(format!(
            "{what} needs a {} run, got {}",
            algorithm.name(),
            trace.algorithm.name()
        )))
    }
}

/// Sum over nodes of `s_k δ_k` times the product of `(1 + δ_j)` over the
/// strict ancestors `j` of `k`.
pub fn general_explicit(trace: &RunTrace) -> Result<ExpressionResult> {
    expect(trace, Algorithm::General, "general_explicit")?;
    let tree = trace
        .tree
        .as_ref()
        .ok_or_else(|| Error::TraceMismatch("general run without a tree".into()))?;
    let c = Ctx::new(trace);
    let n = trace.n();
    // growth[k] = product of (1 + δ_j) over ancestors j of k, filled top-down
    let mut growth = vec![c.one(); n + 1];
    let mut total = c.zero();
    for k in (2..=n).rev() {
        if let Some(p) = tree.parent(k)? {
            growth[k] = &growth[p] * &c.one_plus(Delta, p);
        }
        total = total + c.s(k) * &c.r(Delta, k) * &growth[k];
    }
    Ok(ExpressionResult::new("general_explicit", total, trace))
}

/// Children-error recursion: `f_k = Σ_{j≺k} (s_j + f_j) δ_j` and
/// `e_k = f_k + (s_k + f_k) δ_k`. Returns the result and `f_k` by node
/// (entries 0 and 1 are zero).
pub fn general_recursive(trace: &RunTrace) -> Result<(ExpressionResult, Vec<WideReal>)> {
    expect(trace, Algorithm::General, "general_recursive")?;
    let tree = trace
        .tree
        .as_ref()
        .ok_or_else(|| Error::TraceMismatch("general run without a tree".into()))?;
    let c = Ctx::new(trace);
    let n = trace.n();
    let mut f = vec![c.zero(); n + 1];
    // below[k] = Σ_{j⪯k} (s_j + f_j) δ_j
    let mut below = vec![c.zero(); n + 1];
    for node in tree.nodes() {
        let k = node.id;
        let mut fk = c.zero();
        for child in [node.left, node.right] {
            if let Child::Node(j) = child {
                fk = fk + &below[j];
            }
        }
        below[k] = &fk + &((c.s(k) + &fk) * &c.r(Delta, k));
        f[k] = fk;
    }
    let value = if n == 1 { c.zero() } else { below[n].clone() };
    Ok((ExpressionResult::new("general_recursive", value, trace), f))
}

/// `Σ s_k δ_k`.
pub fn general_first_order(trace: &RunTrace) -> Result<ExpressionResult> {
    expect(trace, Algorithm::General, "general_first_order")?;
    let c = Ctx::new(trace);
    let total = (2..=trace.n()).fold(c.zero(), |acc, k| acc + c.s(k) * &c.r(Delta, k));
    Ok(ExpressionResult::new("general_first_order", total, trace))
}

/// Summation part plus centering part of a shifted sequential run:
/// `Σ_{k=2}^{n+1} t_k δ_k Π_{ℓ>k}(1+δ_ℓ) + Σ_{k=1}^{n+1} y_k ε_k Π_{ℓ≥k}(1+δ_ℓ)`.
pub fn shifted_sequential_exact(trace: &RunTrace) -> Result<ExpressionResult> {
    expect(trace, Algorithm::Shifted, "shifted_sequential_exact")?;
    if !trace.tree.as_ref().is_some_and(|t| t.is_sequential()) {
        return Err(Error::TraceMismatch(
            "shifted_sequential_exact needs a sequential tree".into(),
        ));
    }
    let shift = trace
        .shift
        .as_ref()
        .ok_or_else(|| Error::TraceMismatch("shifted run without shift record".into()))?;
    let c = Ctx::new(trace);
    let n = trace.n();
    let mut after = c.one(); // Π_{ℓ=k+1}^{n+1} (1+δ_ℓ)
    let mut total = c.zero();
    for k in (1..=n + 1).rev() {
        let d = c.r(Delta, k);
        if k >= 2 {
            total = total + &trace.exact[k] * &d * &after;
        }
        after = after * (c.one() + &d);
        total = total + &shift.y_exact[k] * &c.r(Epsilon, k) * &after;
    }
    Ok(ExpressionResult::new("shifted_sequential_exact", total, trace))
}

type Mat = [[WideReal; 2]; 2];

fn mat_vec(m: &Mat, v: &[WideReal; 2]) -> [WideReal; 2] {
    [
        &m[0][0] * &v[0] + &m[0][1] * &v[1],
        &m[1][0] * &v[0] + &m[1][1] * &v[1],
    ]
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let e = |i: usize, j: usize| &a[i][0] * &b[0][j] + &a[i][1] * &b[1][j];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

/// Step matrix of the compensated error recursion.
fn step_matrix(c: &Ctx, k: usize) -> Mat {
    let (sig, eta, del, bet) = (c.r(Sigma, k), c.r(Eta, k), c.r(Delta, k), c.r(Beta, k));
    let one = c.one();
    let gamma = (&one + &sig) * (&one + &del);
    let psi = (&one + &del) * (&one + &bet);
    [
        [&one + &sig, -((&one + &eta) * (&one + &sig))],
        [&sig * &psi, (&one + &eta) * (&one - &gamma) * (&one + &bet)],
    ]
}

/// The matrix whose entries are all of the order of a roundoff.
fn small_matrix(c: &Ctx, k: usize) -> Mat {
    let (sig, eta, del, bet) = (c.r(Sigma, k), c.r(Eta, k), c.r(Delta, k), c.r(Beta, k));
    let one = c.one();
    let gamma = (&one + &sig) * (&one + &del);
    let psi = (&one + &del) * (&one + &bet);
    [
        [sig.clone(), &eta * &(&one + &sig)],
        [&sig * &psi, (&one + &bet) * (&del + &(&eta * &(gamma - &one)))],
    ]
}

/// Runs `[e_k; ĉ_k] = P_k [e_{k-1}; ĉ_{k-1}] + P_k [s_{k-1}; -x_k] + [-s_k; 0]`
/// from `e_1 = ĉ_1 = 0`. Returns the result and the pairs `(e_k, ĉ_k)` by step.
pub fn comp_matrix_recursion(
    trace: &RunTrace,
) -> Result<(ExpressionResult, Vec<(WideReal, WideReal)>)> {
    expect(trace, Algorithm::Compensated, "comp_matrix_recursion")?;
    let c = Ctx::new(trace);
    let n = trace.n();
    let mut out = vec![(c.zero(), c.zero()); 2];
    for k in 2..=n {
        let p = step_matrix(&c, k);
        let (e_prev, c_prev) = &out[k - 1];
        let v = [e_prev + c.s(k - 1), c_prev - c.x(k)];
        let [e, corr] = mat_vec(&p, &v);
        out.push((e - c.s(k), corr));
    }
    let value = out[n.max(1)].0.clone();
    Ok((ExpressionResult::new("comp_matrix_recursion", value, trace), out))
}

/// `Σ_{j=2}^{n-1} (P_n ⋯ P_{j+1}) P̃_j [s_j; x_j] + P̃_n [s_n; x_n]`,
/// accumulated from the last step backwards.
pub fn comp_explicit(trace: &RunTrace) -> Result<ExpressionResult> {
    expect(trace, Algorithm::Compensated, "comp_explicit")?;
    let c = Ctx::new(trace);
    let n = trace.n();
    if n < 2 {
        return Ok(ExpressionResult::new("comp_explicit", c.zero(), trace));
    }
    let [mut e, _] = mat_vec(&small_matrix(&c, n), &[c.s(n).clone(), c.x(n).clone()]);
    let mut prefix: Mat = [[c.one(), c.zero()], [c.zero(), c.one()]];
    for j in (2..n).rev() {
        prefix = mat_mul(&prefix, &step_matrix(&c, j + 1));
        let m = mat_mul(&prefix, &small_matrix(&c, j));
        let [ej, _] = mat_vec(&m, &[c.s(j).clone(), c.x(j).clone()]);
        e = e + ej;
    }
    Ok(ExpressionResult::new("comp_explicit", e, trace))
}

fn comp_record(trace: &RunTrace) -> Result<&crate::algorithms::CompensatedRecord> {
    trace
        .compensated
        .as_ref()
        .ok_or_else(|| Error::TraceMismatch("compensated run without its record".into()))
}

fn comp_first_with_start(
    trace: &RunTrace,
    id: &'static str,
    start: usize,
) -> Result<ExpressionResult> {
    expect(trace, Algorithm::Compensated, id)?;
    let rec = comp_record(trace)?;
    let c = Ctx::new(trace);
    let n = trace.n();
    if n < 2 {
        return Err(Error::TraceMismatch(format!("{id} needs n >= 2")));
    }
    // walk j downwards keeping Π_{k=j+1}^{n} (1+σ_k)
    let mut after = c.one();
    let mut total = c.s(n) * &c.r(Sigma, n);
    for j in (2..=n).rev() {
        let upto = &after * &c.one_plus(Sigma, j);
        if j >= start {
            total = total + c.x(j) * &c.r(Eta, j) * &upto;
        }
        if j <= n - 1 {
            let a = &rec.c[j] * &c.one_plus(Eta, j + 1);
            total = total + (c.s(j) * &c.r(Sigma, j) - a) * &after;
        }
        after = upto;
    }
    Ok(ExpressionResult::new(id, total, trace))
}

/// `s_nσ_n + Σ_{j=2}^n x_jη_j Π_{k=j}^n(1+σ_k) + Σ_{j=2}^{n-1}(s_jσ_j - ĉ_j(1+η_{j+1})) Π_{k=j+1}^n(1+σ_k)`.
///
/// The `x_jη_j` sum is taken from `j = 2` (`η_2 = 0`, so this equals
/// starting at 3); [`comp_expr_first_verbatim`] starts it at 4.
pub fn comp_expr_first(trace: &RunTrace) -> Result<ExpressionResult> {
    comp_first_with_start(trace, "comp_expr_first", 2)
}

/// Same as [`comp_expr_first`] with the `x_jη_j` sum starting at `j = 4`.
/// It drops `x_3η_3(1+σ_3)⋯(1+σ_n)` and is kept as a diagnostic.
pub fn comp_expr_first_verbatim(trace: &RunTrace) -> Result<ExpressionResult> {
    comp_first_with_start(trace, "comp_expr_first_verbatim", 4)
}

/// `X_k`, `Θ_k` and `E_k` for `k = 2..=n-1` (other entries zero).
pub fn comp_second_series(trace: &RunTrace) -> Result<SecondExpressionSeries> {
    expect(trace, Algorithm::Compensated, "comp_second_series")?;
    let c = Ctx::new(trace);
    let n = trace.n();
    let len = n.max(2) + 1;
    let mut xs = vec![c.zero(); len];
    let mut theta = vec![c.zero(); len];
    let mut es = vec![c.zero(); len];
    for k in 2..n {
        let carry = c.one_plus(Beta, k) * c.one_plus(Eta, k + 1);
        theta[k] = c.one() - c.one_plus(Delta, k) * &carry;
        let local = c.x(k) * &(c.r(Eta, k) - c.r(Delta, k));
        xs[k] = (&xs[k - 1] + &local) * &carry;
        let ek = trace.error_at(k);
        es[k] = if k == 2 {
            &ek * &theta[k]
        } else {
            let prev = trace.error_at(k - 1) * &c.r(Delta, k) + &es[k - 1];
            &ek * &theta[k] + prev * &carry
        };
    }
    Ok(SecondExpressionSeries {
        x: xs,
        theta,
        e: es,
    })
}

fn comp_second_with(trace: &RunTrace, id: &'static str, beta_on_last: bool) -> Result<ExpressionResult> {
    expect(trace, Algorithm::Compensated, id)?;
    let n = trace.n();
    if n < 3 {
        return Err(Error::TraceMismatch(format!("{id} needs n >= 3")));
    }
    let series = comp_second_series(trace)?;
    let c = Ctx::new(trace);
    let mut last = c.x(n) * &c.r(Eta, n);
    if beta_on_last {
        last = last * c.one_plus(Beta, n);
    }
    let inner = &series.e[n - 1] + &series.x[n - 1] + &last;
    let value = c.s(n) * &c.r(Sigma, n) + inner * c.one_plus(Sigma, n);
    Ok(ExpressionResult::new(id, value, trace))
}

/// `s_nσ_n + (E_{n-1} + X_{n-1} + x_nη_n)(1+σ_n)`.
pub fn comp_expr_second(trace: &RunTrace) -> Result<ExpressionResult> {
    comp_second_with(trace, "comp_expr_second", false)
}

/// As [`comp_expr_second`] but with the last summand written
/// `x_nη_n(1+β_n)`. `β_n` never reaches `ŝ_n`, so this differs from the
/// measured error by `x_nη_nβ_n(1+σ_n)`; kept as a diagnostic.
pub fn comp_expr_second_verbatim(trace: &RunTrace) -> Result<ExpressionResult> {
    comp_second_with(trace, "comp_expr_second_verbatim", true)
}

/// `s_nσ_n + x_nη_n + Σ_{j=2}^{n-1} x_j(η_j - δ_j)`, exact up to `O(u²)`.
pub fn comp_first_order(trace: &RunTrace) -> Result<ExpressionResult> {
    expect(trace, Algorithm::Compensated, "comp_first_order")?;
    let c = Ctx::new(trace);
    let n = trace.n();
    if n < 2 {
        return Ok(ExpressionResult::new("comp_first_order", c.zero(), trace));
    }
    let mut total = c.s(n) * &c.r(Sigma, n) + c.x(n) * &c.r(Eta, n);
    for j in 2..n {
        total = total + c.x(j) * &(c.r(Eta, j) - c.r(Delta, j));
    }
    Ok(ExpressionResult::new("comp_first_order", total, trace))
}

/// Second order truncation with `μ_k = η_k - δ_k` and `μ_n = η_n`:
/// `s_nσ_n + (1+σ_n)Σ x_kμ_k - Σ s_kσ_k(μ_{k+1}+δ_k+β_k) - Σ x_kδ_k(μ_{k+1}+β_k+η_k)`.
pub fn comp_second_order(trace: &RunTrace) -> Result<ExpressionResult> {
    expect(trace, Algorithm::Compensated, "comp_second_order")?;
    let c = Ctx::new(trace);
    let n = trace.n();
    if n < 2 {
        return Ok(ExpressionResult::new("comp_second_order", c.zero(), trace));
    }
    let mu = |k: usize| {
        if k == n {
            c.r(Eta, n)
        } else {
            c.r(Eta, k) - c.r(Delta, k)
        }
    };
    let mut linear = c.zero();
    for k in 2..=n {
        linear = linear + c.x(k) * &mu(k);
    }
    let mut total = c.s(n) * &c.r(Sigma, n) + c.one_plus(Sigma, n) * linear;
    for k in 2..n {
        let next = mu(k + 1);
        let a = c.s(k) * &c.r(Sigma, k) * &(&next + &c.r(Delta, k) + c.r(Beta, k));
        let b = c.x(k) * &c.r(Delta, k) * &(&next + &c.r(Beta, k) + c.r(Eta, k));
        total = total - a - b;
    }
    Ok(ExpressionResult::new("comp_second_order", total, trace))
}

/// Identities from the derivation of the two compensated expressions.
///
/// With `a_j = ĉ_j(1+η_{j+1})` and `b_j = s_jσ_j`:
/// * `first_e2`: `e_2 = b_2`;
/// * `first_step` at `k = 3, 4`: `e_k = (e_{k-1} - a_{k-1})(1+σ_k) + x_kη_k(1+σ_k) + b_k`;
/// * `first_e3_short` (only when `η_3 = 0`): `e_3 = (b_2 - a_2)(1+σ_3) + b_3`;
/// * `second_step` for `k = 2..=n-1`: `e_k - a_k = E_k + X_k`.
pub fn compensated_identities(trace: &RunTrace) -> Result<Vec<IdentityCheck>> {
    expect(trace, Algorithm::Compensated, "compensated_identities")?;
    let rec = comp_record(trace)?;
    let c = Ctx::new(trace);
    let n = trace.n();
    let mut out = Vec::new();
    if n < 2 {
        return Ok(out);
    }
    let a = |j: usize| &rec.c[j] * &c.one_plus(Eta, j + 1);
    let b = |j: usize| c.s(j) * &c.r(Sigma, j);
    let e = |k: usize| trace.error_at(k);
    out.push(IdentityCheck {
        id: "first_e2",
        k: 2,
        residual: e(2) - b(2),
    });
    for k in 3..=n.min(4) {
        let rhs = (e(k - 1) - a(k - 1)) * c.one_plus(Sigma, k)
            + c.x(k) * &c.r(Eta, k) * &c.one_plus(Sigma, k)
            + b(k);
        out.push(IdentityCheck {
            id: "first_step",
            k,
            residual: e(k) - rhs,
        });
    }
    if n >= 3 && c.r(Eta, 3).is_zero() {
        let rhs = (b(2) - a(2)) * c.one_plus(Sigma, 3) + b(3);
        out.push(IdentityCheck {
            id: "first_e3_short",
            k: 3,
            residual: e(3) - rhs,
        });
    }
    let series = comp_second_series(trace)?;
    for k in 2..n {
        out.push(IdentityCheck {
            id: "second_step",
            k,
            residual: e(k) - a(k) - &series.e[k] - &series.x[k],
        });
    }
    Ok(out)
}

/// All exact expressions applicable to the trace (diagnostic variants
/// excluded).
pub fn exact_expressions(trace: &RunTrace) -> Result<Vec<ExpressionResult>> {
    Ok(match trace.algorithm {
        Algorithm::General => vec![general_explicit(trace)?, general_recursive(trace)?.0],
        Algorithm::Shifted => {
            if trace.tree.as_ref().is_some_and(|t| t.is_sequential()) {
                vec![shifted_sequential_exact(trace)?]
            } else {
                Vec::new()
            }
        }
        Algorithm::Compensated => {
            let mut v = vec![comp_matrix_recursion(trace)?.0, comp_explicit(trace)?];
            if trace.n() >= 2 {
                v.push(comp_expr_first(trace)?);
            }
            if trace.n() >= 3 {
                v.push(comp_expr_second(trace)?);
            }
            v
        }
    })
}

/// The product form `Σ_{k=2}^n s_k d_k Π_{ℓ=k+1}^n (1+d_ℓ)` of a sequential
/// sum whose step roundoffs are `d_k` (entries indexed by `k`).
pub fn sequential_product_form(s: &[WideReal], d: &[WideReal], prec: u32) -> WideReal {
    let n = s.len() - 1;
    let one = WideReal::one(prec);
    let mut after = one.clone();
    let mut total = WideReal::zero(prec);
    for k in (2..=n).rev() {
        total = total + &s[k] * &d[k] * &after;
        after = after * (&one + &d[k]);
    }
    total
}
