use fpsum::bounds::{
    comp_second_order_det_bound, cubic_slack, det_bound_general, shifted_seq_det_bound,
    tree_partial_sums, BOUND_BITS,
};
use fpsum::experiments::choose_shift;
use fpsum::expressions::{exact_expressions, general_explicit};
use fpsum::fpmodel::round;
use fpsum::{
    compensated_sum, general_sum, shifted_sum, FpFormat, RoundingMode, RunTrace, TreeKind, WideReal,
};
use proptest::prelude::*;

fn w(v: f64) -> WideReal {
    WideReal::from_f64(64, v)
}

fn to_format(v: &[f64], fmt: &FpFormat) -> Vec<WideReal> {
    v.iter()
        .map(|x| round(&w(*x), fmt, RoundingMode::NearestEven, 64).unwrap().value)
        .collect()
}

/// Values whose rounding into binary16 stays in the normal range and whose
/// sums of up to 40 terms cannot overflow.
fn half_values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-1000.0f64..1000.0), (0.01f64..1.0), (-1.0f64..-0.01)]
            .prop_filter("normal", |v| v.abs() > 1e-3),
        1..max_len,
    )
}

fn tree_kind() -> impl Strategy<Value = TreeKind> {
    prop_oneof![Just(TreeKind::Sequential), Just(TreeKind::Pairwise), Just(TreeKind::Random)]
}

fn mode() -> impl Strategy<Value = RoundingMode> {
    prop_oneof![
        Just(RoundingMode::NearestEven),
        (any::<u64>(), any::<u64>()).prop_map(|(s, t)| RoundingMode::stochastic(s, t)),
    ]
}

fn norm1(x: &[WideReal]) -> WideReal {
    let abs: Vec<WideReal> = x.iter().map(WideReal::abs).collect();
    WideReal::exact_total(BOUND_BITS, &abs)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn roundoff_is_within_unit_roundoff(v in -6.0e4f64..6.0e4, bits in 0u32..40, m in mode()) {
        prop_assume!(v.abs() > 1e-4);
        let fmt = FpFormat::binary16();
        // perturb below the binary16 grid
        let x = w(v).exact_add(&WideReal::pow2(64, -30).exact_mul(&w(bits as f64)));
        let r = round(&x, &fmt, m, 128).unwrap();
        prop_assert!(fmt.is_representable(&r.value));
        let u = fmt.unit_roundoff(64).scale2(m.roundoff_multiplier() as i32 - 1);
        prop_assert!(r.delta.abs() <= u);
        // the rounded value is one of the two neighbours
        let gap = r.value.exact_sub(&x).abs();
        let ulp = WideReal::pow2(64, x.exponent().unwrap() - fmt.precision_bits() as i32);
        prop_assert!(gap < ulp);
        if m == RoundingMode::NearestEven {
            prop_assert!(gap <= ulp.scale2(-1));
        }
    }

    #[test]
    fn hex_form_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite()), k in -60i32..60) {
        let x = w(v).scale2(k).exact_add(&w(1.0 / 3.0));
        prop_assume!(x.is_finite());
        let back = WideReal::parse(&x.to_hex(), 64).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn partial_sums_are_dominated_by_height(v in half_values(60), kind in tree_kind(), seed in any::<u64>()) {
        let fmt = FpFormat::binary16();
        let x = to_format(&v, &fmt);
        let tree = kind.build(x.len(), seed).unwrap();
        let s = tree_partial_sums(&tree, &x).unwrap();
        let total = norm1(&s);
        let h = WideReal::from_i64(64, tree.height() as i64);
        prop_assert!(total <= h.exact_mul(&norm1(&x)));
    }

    #[test]
    fn runs_are_reproducible_and_serialize(v in half_values(30), kind in tree_kind(), m in mode(), seed in any::<u64>()) {
        let fmt = FpFormat::binary16();
        let x = to_format(&v, &fmt);
        let tree = kind.build(x.len(), seed).unwrap();
        let a = general_sum(&tree, &x, &fmt, m).unwrap();
        let b = general_sum(&tree, &x, &fmt, m).unwrap();
        prop_assert_eq!(&a, &b);
        let back: RunTrace = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn exact_expressions_match_measured_error(v in half_values(40), kind in tree_kind(), m in mode(), seed in any::<u64>()) {
        let fmt = FpFormat::binary16();
        let x = to_format(&v, &fmt);
        let tol = norm1(&x).scale2(-40);
        let tree = kind.build(x.len(), seed).unwrap();
        let c = choose_shift(&x, &fmt).unwrap();
        let runs = [
            general_sum(&tree, &x, &fmt, m).unwrap(),
            shifted_sum(&tree, &x, &c, &fmt, m).unwrap(),
            compensated_sum(&x, &fmt, m).unwrap(),
        ];
        for t in &runs {
            for r in exact_expressions(t).unwrap() {
                prop_assert!(r.residual.abs() <= tol, "{}", r.id);
            }
        }
    }

    #[test]
    fn deterministic_bounds_hold_under_nearest(v in half_values(40), kind in tree_kind(), seed in any::<u64>()) {
        let fmt = FpFormat::binary16();
        let x = to_format(&v, &fmt);
        let u = fmt.unit_roundoff(BOUND_BITS);
        let tree = kind.build(x.len(), seed).unwrap();
        let g = general_sum(&tree, &x, &fmt, RoundingMode::NearestEven).unwrap();
        prop_assert!(det_bound_general(&x, &tree, &u, None).unwrap().holds(&g.error));
        let c = choose_shift(&x, &fmt).unwrap();
        let seq = TreeKind::Sequential.build(x.len(), 0).unwrap();
        let s = shifted_sum(&seq, &x, &c, &fmt, RoundingMode::NearestEven).unwrap();
        prop_assert!(shifted_seq_det_bound(&x, &c, &u).unwrap().holds(&s.error));
        let k = compensated_sum(&x, &fmt, RoundingMode::NearestEven).unwrap();
        let det = comp_second_order_det_bound(&x, &u).unwrap().value.unwrap();
        let limit = det + cubic_slack(x.len(), &u, &norm1(&x));
        prop_assert!(k.error.abs() <= limit);
    }

    #[test]
    fn power_of_two_scaling_scales_errors(v in prop::collection::vec(-1.0e3f64..1.0e3, 1..50), k in -20i32..20, kind in tree_kind(), seed in any::<u64>()) {
        let fmt = FpFormat::binary32();
        let x = to_format(&v, &fmt);
        let y: Vec<WideReal> = x.iter().map(|v| v.scale2(k)).collect();
        let tree = kind.build(x.len(), seed).unwrap();
        let ex = general_sum(&tree, &x, &fmt, RoundingMode::NearestEven).unwrap();
        let ey = general_sum(&tree, &y, &fmt, RoundingMode::NearestEven).unwrap();
        prop_assert_eq!(ey.error, ex.error.scale2(k));
        let u = fmt.unit_roundoff(BOUND_BITS);
        let bx = det_bound_general(&x, &tree, &u, None).unwrap().value.unwrap();
        let by = det_bound_general(&y, &tree, &u, None).unwrap().value.unwrap();
        prop_assert_eq!(by, bx.scale2(k));
        let cx = compensated_sum(&x, &fmt, RoundingMode::NearestEven).unwrap();
        let cy = compensated_sum(&y, &fmt, RoundingMode::NearestEven).unwrap();
        prop_assert_eq!(cy.error, cx.error.scale2(k));
    }
}

#[test]
fn small_integers_sum_exactly() {
    let fmt = FpFormat::binary64();
    let x: Vec<WideReal> = (1..=500).map(|i| w(((i * 37) % 101) as f64 - 50.0)).collect();
    for kind in [TreeKind::Sequential, TreeKind::Pairwise, TreeKind::Random] {
        let t = general_sum(&kind.build(x.len(), 4).unwrap(), &x, &fmt, RoundingMode::NearestEven).unwrap();
        assert!(t.error.is_zero());
        assert!(general_explicit(&t).unwrap().value.is_zero());
    }
    assert!(compensated_sum(&x, &fmt, RoundingMode::NearestEven).unwrap().error.is_zero());
}
