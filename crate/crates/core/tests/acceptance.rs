//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. CSV artifacts land in the cargo target tmp dir.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use fpsum::bounds::{
    comp_second_order_det_bound, cubic_slack, det_bound_general, effective_unit_roundoff,
    shifted_seq_det_bound, BOUND_BITS,
};
use fpsum::experiments::coverage::write_coverage_csv;
use fpsum::experiments::figure::{COMPENSATED_BOUND_ID, SHIFTED_BOUND_ID};
use fpsum::experiments::verify::{trial_inputs, write_verify_csv, RowKind};
use fpsum::experiments::{
    children_error_coverage, choose_shift, run_coverage, run_figure, run_verify, write_rows_csv,
    CoverageConfig, DataGen, ExperimentConfig, FigureId, Grid, ResultRow,
    VerifyConfig, VerifyRow,
};
use fpsum::expressions::{comp_first_order, comp_second_order};
use fpsum::{
    compensated_sum, general_sum, sequential_tree, shifted_sum, FpFormat, RoundingMode, TreeKind,
    WideReal,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn artifacts() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("artifact dir");
    dir
}

fn save(name: &str, bytes: &[u8]) {
    std::fs::write(artifacts().join(name), bytes).expect("write artifact");
}

fn verify_csv(rows: &[VerifyRow]) -> Vec<u8> {
    let mut b = Vec::new();
    write_verify_csv(rows, &mut b).unwrap();
    b
}

fn figure_csv(rows: &[ResultRow]) -> Vec<u8> {
    let mut b = Vec::new();
    write_rows_csv(rows, &mut b).unwrap();
    b
}

fn coverage_csv(rows: &[fpsum::experiments::CoverageRow]) -> Vec<u8> {
    let mut b = Vec::new();
    write_coverage_csv(rows, &mut b).unwrap();
    b
}

fn verify_config() -> VerifyConfig {
    VerifyConfig::new(FpFormat::binary16(), vec![2, 3, 4, 5, 8, 32, 64], 1000, SEED)
}

fn summarize(rows: &[VerifyRow], kind: RowKind) -> (bool, String) {
    let mut per: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.kind == kind) {
        let e = per.entry(&r.expression_id).or_insert((0, 0, 0.0));
        e.0 += 1;
        e.1 += usize::from(r.pass);
        if r.tolerance > 0.0 {
            e.2 = e.2.max(r.residual / r.tolerance);
        }
    }
    let ok = per.values().all(|(t, p, _)| t == p) && !per.is_empty();
    let detail = per
        .iter()
        .map(|(id, (t, p, worst))| format!("{id} {p}/{t} worst {worst:.1e}·tol"))
        .collect::<Vec<_>>()
        .join("; ");
    (ok, detail)
}

fn criterion_1_2(rows: &[VerifyRow]) -> (Outcome, Outcome) {
    let (ok1, d1) = summarize(rows, RowKind::Exact);
    let (ok2, d2) = summarize(rows, RowKind::Identity);
    (outcome(ok1, d1), outcome(ok2, d2))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        f64::NAN
    } else {
        v[v.len() / 2]
    }
}

/// First and second order truncations of compensated summation, binary16 and
/// the same draws rounded to 12 bits.
fn criterion_3() -> Outcome {
    let f11 = FpFormat::binary16();
    let f12 = FpFormat::custom(12, f11.emin(), f11.emax()).unwrap();
    let u = f11.unit_roundoff(BOUND_BITS);
    let mut violations = 0usize;
    let mut cases = 0usize;
    let (mut worst1, mut worst2) = (0f64, 0f64);
    let (mut a1, mut b1, mut a2, mut b2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &n in &[2usize, 3, 4, 5, 8, 16, 32, 64, 128, 256] {
        for t in 0..300u64 {
            let stream = (n as u64) << 32 | t;
            let x = trial_inputs(&f11, n, SEED + 2, stream).unwrap();
            let xb = trial_inputs(&f12, n, SEED + 2, stream).unwrap();
            let run = |fmt: &FpFormat, x: &[WideReal]| {
                let tr = compensated_sum(x, fmt, RoundingMode::NearestEven).unwrap();
                let scale = tr.abs_input_sum() * WideReal::from_i64(64, n as i64);
                let r1 = comp_first_order(&tr).unwrap().residual.abs();
                let r2 = comp_second_order(&tr).unwrap().residual.abs();
                (r1, r2, scale)
            };
            let (r1, r2, scale) = run(&f11, &x);
            let (q1, q2, scale_b) = run(&f12, &xb);
            cases += 1;
            let lim1 = WideReal::from_f64(64, 50.0) * u.square() * &scale;
            let lim2 = WideReal::from_f64(64, 100.0) * u.powi(3) * &scale;
            if r1 > lim1 || r2 > lim2 {
                violations += 1;
            }
            if !scale.is_zero() {
                worst1 = worst1.max(r1.div(&(u.square() * &scale)).to_f64());
                worst2 = worst2.max(r2.div(&(u.powi(3) * &scale)).to_f64());
            }
            let norm = |r: &WideReal, s: &WideReal| if s.is_zero() { 0.0 } else { r.div(s).to_f64() };
            if !(r1.is_zero() && q1.is_zero()) {
                a1.push(norm(&r1, &scale));
                b1.push(norm(&q1, &scale_b));
            }
            if !(r2.is_zero() && q2.is_zero()) {
                a2.push(norm(&r2, &scale));
                b2.push(norm(&q2, &scale_b));
            }
        }
    }
    let ratio1 = median(a1) / median(b1);
    let ratio2 = median(a2) / median(b2);
    let ok = violations == 0 && (2.5..=6.0).contains(&ratio1) && (5.0..=12.0).contains(&ratio2);
    outcome(
        ok,
        format!(
            "{cases} cases, {violations} violations, worst first {worst1:.3}·u²nΣ|x| (limit 50), \
             worst second {worst2:.3}·u³nΣ|x| (limit 100), median ratio p→p+1: first {ratio1:.2} \
             (window [2.5,6]), second {ratio2:.2} (window [5,12])"
        ),
    )
}

/// Deterministic bounds on NearestEven fuzz cases; returns the outcome and a
/// CSV-ish digest for the rerun check.
fn criterion_4(cases: usize) -> (Outcome, Vec<u8>) {
    let fmt = FpFormat::binary16();
    let u = effective_unit_roundoff(&fmt, RoundingMode::NearestEven);
    let kinds = [TreeKind::Sequential, TreeKind::Pairwise, TreeKind::Random];
    let mut fails: BTreeMap<&str, usize> = BTreeMap::new();
    let mut digest = Vec::new();
    for i in 0..cases as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
        rng.set_stream(i);
        let n = rng.random_range(1..=256usize);
        let kind = kinds[i as usize % 3];
        let x = trial_inputs(&fmt, n, SEED + 4, i).unwrap();
        let tree = kind.build(n, i).unwrap();
        let g = general_sum(&tree, &x, &fmt, RoundingMode::NearestEven).unwrap();
        let bg = det_bound_general(&x, &tree, &u, None).unwrap();
        let c = choose_shift(&x, &fmt).unwrap();
        let s = shifted_sum(&sequential_tree(n).unwrap(), &x, &c, &fmt, RoundingMode::NearestEven).unwrap();
        let bs = shifted_seq_det_bound(&x, &c, &u).unwrap();
        let k = compensated_sum(&x, &fmt, RoundingMode::NearestEven).unwrap();
        let bk = comp_second_order_det_bound(&x, &u).unwrap();
        let slack = cubic_slack(n, &u, &k.abs_input_sum());
        let bk_total = bk.value.clone().unwrap() + slack;
        let checks = [
            ("general_det", bg.holds(&g.error)),
            ("shifted_seq_det", bs.holds(&s.error)),
            ("comp_second_order_det", k.error.abs() <= bk_total),
        ];
        for (id, ok) in checks {
            if !ok {
                *fails.entry(id).or_default() += 1;
            }
        }
        digest.extend_from_slice(
            format!("{i},{n},{},{},{},{}\n", kind.name(), g.error.to_hex(), s.error.to_hex(), k.error.to_hex()).as_bytes(),
        );
    }
    let ok = fails.is_empty();
    (outcome(ok, format!("{cases} cases x 3 bounds, failures {fails:?}")), digest)
}

const PROBABILISTIC: [&str; 8] = [
    "general_first_order_prob",
    "general_model1",
    "general_model2",
    "shifted_seq_prob",
    "shifted_gen_model2",
    "shifted_gen_model1",
    "comp_prob_second_order",
    "comp_prob_first_order",
];

fn coverage_configs(trials: usize) -> Vec<CoverageConfig> {
    let mut out = Vec::new();
    for n in [256, 1024] {
        for tree in [TreeKind::Sequential, TreeKind::Pairwise] {
            out.push(CoverageConfig::new(FpFormat::binary16(), n, tree, trials, SEED));
        }
    }
    out
}

fn criterion_5() -> (Outcome, Vec<u8>) {
    let threshold = 1.0 - (0.005 + 0.005) - 0.01;
    let mut rows = Vec::new();
    for cfg in coverage_configs(10_000) {
        rows.extend(run_coverage(&cfg).unwrap());
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut bad = Vec::new();
    let mut worst = 1.0f64;
    for r in rows.iter().filter(|r| PROBABILISTIC.contains(&r.bound_id.as_str())) {
        *seen.entry(PROBABILISTIC.iter().find(|id| **id == r.bound_id).unwrap()).or_default() += 1;
        worst = worst.min(r.hold_rate());
        if r.hold_rate() < threshold {
            bad.push(format!("{} n={} {} {:.4}", r.bound_id, r.n, r.tree, r.hold_rate()));
        }
    }
    let complete = PROBABILISTIC.iter().all(|id| seen.contains_key(id));
    let csv = coverage_csv(&rows);
    (
        outcome(
            bad.is_empty() && complete,
            format!(
                "{} bound/config rows, lowest hold rate {worst:.4} (threshold {threshold:.2}), below threshold: {bad:?}",
                seen.values().sum::<usize>()
            ),
        ),
        csv,
    )
}

struct Panels {
    fig1_left: Vec<ResultRow>,
    fig1_right: Vec<ResultRow>,
    fig2_left: Vec<ResultRow>,
    fig2_right: Vec<ResultRow>,
    fig3_left: Vec<ResultRow>,
    fig3_right: Vec<ResultRow>,
}

fn panel_config(figure: FigureId, data: Option<DataGen>, algorithms: Option<Vec<fpsum::algorithms::Algorithm>>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(figure);
    cfg.seed = SEED;
    if let Some(d) = data {
        cfg.data = d;
    }
    if let Some(a) = algorithms {
        cfg.algorithms = a;
    }
    cfg
}

fn panel_configs() -> Vec<(&'static str, ExperimentConfig)> {
    use fpsum::algorithms::Algorithm::Compensated;
    vec![
        ("fig1_left", panel_config(FigureId::Fig1, None, None)),
        ("fig1_right", panel_config(FigureId::Fig1, Some(DataGen::Normal), None)),
        // plain and shifted on these data are already covered by fig1
        ("fig2_left", panel_config(FigureId::Fig2, None, Some(vec![Compensated]))),
        ("fig2_right", panel_config(FigureId::Fig2, Some(DataGen::Normal), Some(vec![Compensated]))),
        ("fig3_left", panel_config(FigureId::Fig3, None, None)),
        ("fig3_right", panel_config(FigureId::Fig3, Some(DataGen::Normal), None)),
    ]
}

fn run_panels() -> Panels {
    let mut out: BTreeMap<&str, Vec<ResultRow>> = BTreeMap::new();
    for (name, cfg) in panel_configs() {
        let rows = run_figure(&cfg).unwrap();
        save(&format!("{name}.csv"), &figure_csv(&rows));
        save(&format!("{name}.svg"), fpsum::experiments::render_svg(&rows).as_bytes());
        out.insert(name, rows);
    }
    let mut take = |k: &str| out.remove(k).unwrap();
    Panels {
        fig1_left: take("fig1_left"),
        fig1_right: take("fig1_right"),
        fig2_left: take("fig2_left"),
        fig2_right: take("fig2_right"),
        fig3_left: take("fig3_left"),
        fig3_right: take("fig3_right"),
    }
}

fn by_n<'a>(rows: &'a [ResultRow], algorithm: &str) -> BTreeMap<usize, &'a ResultRow> {
    rows.iter().filter(|r| r.algorithm == algorithm).map(|r| (r.n, r)).collect()
}

/// Fraction of grid points where shifted has strictly smaller relative error.
fn shifted_wins(rows: &[ResultRow]) -> (usize, usize) {
    let plain = by_n(rows, "general");
    let shifted = by_n(rows, "shifted");
    let wins = plain.iter().filter(|(n, p)| shifted[n].rel_error < p.rel_error).count();
    (wins, plain.len())
}

fn bound_stats(rows: &[ResultRow], algorithm: &str, bound_id: &str) -> (usize, usize, f64) {
    let mut held = 0;
    let mut total = 0;
    let mut ratios = Vec::new();
    for r in rows.iter().filter(|r| r.algorithm == algorithm && r.bound_id.as_deref() == Some(bound_id)) {
        let b = r.bound_value.unwrap_or(f64::NAN);
        if r.rel_error.is_nan() || b.is_nan() {
            continue;
        }
        total += 1;
        held += usize::from(b >= r.rel_error);
        if r.rel_error > 0.0 {
            ratios.push(b / r.rel_error);
        }
    }
    (held, total, median(ratios))
}

fn criterion_6(p: &Panels) -> Vec<(&'static str, Outcome)> {
    let mut out = Vec::new();

    let (w, t) = shifted_wins(&p.fig1_left);
    out.push(("6a", outcome(w * 10 >= t * 9, format!("shifted beats plain at {w}/{t} points, m=1e4 (need >= 90%)"))));

    let (w, t) = shifted_wins(&p.fig1_right);
    out.push((
        "6b",
        outcome((t - w) * 2 >= t, format!("shifted does not beat plain at {}/{t} points, normal data (need >= 50%)", t - w)),
    ));

    let mut detail = Vec::new();
    let mut ok = true;
    for (name, rows) in [
        ("fig2_left", &p.fig2_left),
        ("fig2_right", &p.fig2_right),
        ("fig3_left", &p.fig3_left),
        ("fig3_right", &p.fig3_right),
    ] {
        let u = rows[0].fmt.parse::<FpFormat>().unwrap().unit_roundoff_f64();
        let comp = by_n(rows, "compensated");
        let over: Vec<(usize, f64)> = comp
            .values()
            .filter(|r| !(r.rel_error <= 10.0 * u))
            .map(|r| (r.n, r.rel_error / u))
            .collect();
        let worst = comp.values().map(|r| r.rel_error / u).fold(0.0, f64::max);
        let beyond = comp.keys().filter(|&&n| n as f64 > 1.0 / u).count();
        ok &= over.is_empty();
        detail.push(format!(
            "{name}: max {worst:.3}u over {} points ({beyond} with n > 1/u), above 10u at {:?}",
            comp.len(),
            over.iter().map(|(n, r)| format!("n={n}:{r:.0}u")).collect::<Vec<_>>()
        ));
    }
    out.push(("6c", outcome(ok, detail.join("; "))));

    let mut detail = Vec::new();
    let mut ok = true;
    for (name, rows) in [("fig3_left", &p.fig3_left), ("fig3_right", &p.fig3_right)] {
        let (held, total, med) = bound_stats(rows, "compensated", COMPENSATED_BOUND_ID);
        ok &= held * 100 >= total * 95 && med <= 100.0;
        detail.push(format!("{name}: bound holds at {held}/{total}, median bound/error {med:.1}"));
    }
    out.push(("6d", outcome(ok, detail.join("; "))));

    let mut detail = Vec::new();
    let mut ok = true;
    for (name, rows) in [("fig1_left", &p.fig1_left), ("fig1_right", &p.fig1_right)] {
        let (held, total, med) = bound_stats(rows, "shifted", SHIFTED_BOUND_ID);
        ok &= held * 100 >= total * 95;
        detail.push(format!("{name}: bound holds at {held}/{total}, median bound/error {med:.1}"));
    }
    out.push(("6e", outcome(ok, detail.join("; "))));
    out
}

fn criterion_7() -> (Outcome, Vec<u8>) {
    let mut cfg = CoverageConfig::new(FpFormat::binary16(), 256, TreeKind::Pairwise, 10_000, SEED);
    cfg.eta_fail = 0.01;
    let row = children_error_coverage(&cfg).unwrap();
    let rate = row.hold_rate();
    let csv = coverage_csv(std::slice::from_ref(&row));
    (outcome(rate >= 0.99, format!("all-node hold rate {rate:.4} over {} trials (need >= 0.99)", row.trials)), csv)
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap().install(f)
}

/// Reruns: the cheap suites at full scale, the figure-1 sweep and the
/// coverage study at reduced scale, each under a different worker count.
fn criterion_8(first: &BTreeMap<&'static str, Vec<u8>>) -> Outcome {
    let mut mismatched = Vec::new();
    let mut checked = Vec::new();
    let mut compare = |name: &'static str, a: &[u8], b: &[u8]| {
        checked.push(name);
        if a != b {
            mismatched.push(name);
        }
    };
    let v = with_jobs(3, || verify_csv(&run_verify(&verify_config()).unwrap()));
    compare("verify", &first["verify"], &v);
    let (_, d) = with_jobs(2, || criterion_4(10_000));
    compare("deterministic", &first["deterministic"], &d);
    let (_, kids) = with_jobs(3, criterion_7);
    compare("children", &first["children"], &kids);
    for (name, cfg) in panel_configs() {
        if name.starts_with("fig1") {
            continue;
        }
        let rows = with_jobs(2, || run_figure(&cfg).unwrap());
        compare(name, &std::fs::read(artifacts().join(format!("{name}.csv"))).unwrap(), &figure_csv(&rows));
    }
    for (name, data) in [("fig1_left_small", None), ("fig1_right_small", Some(DataGen::Normal))] {
        let mut cfg = panel_config(FigureId::Fig1, data, None);
        cfg.grid = Grid::new(10, 1000, 20_000).unwrap();
        let a = with_jobs(1, || figure_csv(&run_figure(&cfg).unwrap()));
        let b = with_jobs(3, || figure_csv(&run_figure(&cfg).unwrap()));
        compare(name, &a, &b);
    }
    let small = |jobs| {
        with_jobs(jobs, || {
            let mut rows = Vec::new();
            for cfg in coverage_configs(300) {
                rows.extend(run_coverage(&cfg).unwrap());
            }
            coverage_csv(&rows)
        })
    };
    compare("coverage_small", &small(1), &small(3));
    outcome(mismatched.is_empty(), format!("compared {checked:?}; mismatched {mismatched:?}"))
}

fn main() {
    let mut results: Vec<(String, Outcome, f64)> = Vec::new();
    let mut csvs: BTreeMap<&'static str, Vec<u8>> = BTreeMap::new();
    let mut record = |id: &str, o: Outcome, started: Instant| {
        let secs = started.elapsed().as_secs_f64();
        println!("{} criterion {id} ({secs:.1}s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id.to_string(), o, secs));
    };

    let t = Instant::now();
    let rows = run_verify(&verify_config()).unwrap();
    let bytes = verify_csv(&rows);
    save("verify.csv", &bytes);
    csvs.insert("verify", bytes);
    let (c1, c2) = criterion_1_2(&rows);
    let elapsed = t.elapsed().as_secs_f64();
    record("1", outcome(c1.pass && elapsed < 120.0, format!("{} [{elapsed:.0}s, target < 120s]", c1.detail)), t);
    record("2", c2, t);

    let t = Instant::now();
    record("3", criterion_3(), t);

    let t = Instant::now();
    let (c4, digest) = criterion_4(10_000);
    save("deterministic.csv", &digest);
    csvs.insert("deterministic", digest);
    record("4", c4, t);

    let t = Instant::now();
    let (c5, bytes) = criterion_5();
    save("coverage.csv", &bytes);
    let elapsed = t.elapsed().as_secs_f64();
    record("5", outcome(c5.pass && elapsed < 600.0, format!("{} [{elapsed:.0}s, target < 600s]", c5.detail)), t);

    let t = Instant::now();
    let panels = run_panels();
    for (id, o) in criterion_6(&panels) {
        record(id, o, t);
    }

    let t = Instant::now();
    let (c7, bytes) = criterion_7();
    save("children.csv", &bytes);
    csvs.insert("children", bytes);
    record("7", c7, t);

    let t = Instant::now();
    record("8", criterion_8(&csvs), t);

    let failed: Vec<&str> = results.iter().filter(|(_, o, _)| !o.pass).map(|(id, _, _)| id.as_str()).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}; artifacts in {}",
        results.len() - failed.len(),
        failed.len(),
        failed,
        artifacts().display()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
