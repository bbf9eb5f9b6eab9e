use btsnet_core::rf::{compare_pathways, parse_stack, rf_rows, rf_trace, write_comparison_csv, write_rf_csv, RF_CSV_HEADER};
use btsnet_core::{analytic_rf, empirical_rf, LayerSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Span of original-frame indices that reach one output, found by expanding
/// index sets backwards through each layer along one axis.
fn index_set_span(stack: &[LayerSpec], axis: usize) -> usize {
    let mut set = std::collections::BTreeSet::from([0usize]);
    for layer in stack.iter().rev() {
        let (k, s, d) = (layer.kernel[axis], layer.stride[axis], layer.dilation[axis]);
        set = set.iter().flat_map(|&o| (0..k).map(move |j| o * s + j * d)).collect();
        let q = if axis == 0 { layer.input_sampling_rate.unwrap_or(1) } else { 1 };
        set = set.iter().map(|&i| i * q).collect();
    }
    set.last().unwrap() - set.first().unwrap() + 1
}

fn random_stack(rng: &mut ChaCha8Rng, with_sampling: bool) -> Vec<LayerSpec> {
    let depth = rng.random_range(1..=4);
    (0..depth)
        .map(|i| {
            let mut l = LayerSpec::new(
                [0; 3].map(|_| rng.random_range(1..=3)),
                [0; 3].map(|_| rng.random_range(1..=2)),
                [0; 3].map(|_| rng.random_range(1..=3)),
            );
            if with_sampling && i == 0 && rng.random_bool(0.5) {
                l.input_sampling_rate = Some(rng.random_range(2..=4));
            }
            l
        })
        .collect()
}

#[test]
fn analytic_matches_empirical_and_index_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let stack = random_stack(&mut rng, case % 3 == 0);
        let a = analytic_rf(&stack).unwrap();
        let probe = a.rf_original.map(|r| 2 * r + 3);
        let e = empirical_rf(&stack, probe).unwrap();
        assert_eq!(a.rf_original, e, "case {case}: {stack:?}");
        for axis in 0..3 {
            assert_eq!(a.rf_original[axis], index_set_span(&stack, axis), "case {case} axis {axis}");
        }
    }
}

#[test]
fn known_stacks() {
    let three = LayerSpec::new([3; 3], [1; 3], [1; 3]);
    assert_eq!(analytic_rf(&[three.clone(), three.clone()]).unwrap().rf, [5; 3]);
    let dilated = LayerSpec::new([3; 3], [1; 3], [4, 1, 1]);
    assert_eq!(analytic_rf(&[dilated]).unwrap().rf, [9, 3, 3]);
    let strided = LayerSpec::new([3; 3], [2; 3], [1; 3]);
    let s = analytic_rf(&[strided, three]).unwrap();
    assert_eq!((s.rf, s.jump), ([7; 3], [2; 3]));
}

#[test]
fn sampling_rate_scales_temporal_units() {
    let mut l = LayerSpec::new([3; 3], [1; 3], [1; 3]);
    l.input_sampling_rate = Some(4);
    let s = analytic_rf(&[l]).unwrap();
    assert_eq!(s.rf, [3; 3]);
    assert_eq!(s.rf_original, [9, 3, 3]);
    assert_eq!(s.jump, [4, 1, 1]);
}

#[test]
fn csv_and_json_round() {
    let stack = parse_stack(r#"[{"kernel":[3,3,3]},{"kernel":[3,1,1],"dilation":[4,1,1],"stride":[1,2,2]}]"#).unwrap();
    assert_eq!(stack.len(), 2);
    let rows = rf_rows(&stack).unwrap();
    assert_eq!(rows.len(), 6);
    let mut buf = Vec::new();
    write_rf_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), RF_CSV_HEADER);
    assert!(text.lines().any(|l| l == "t,1,11,1,11"), "{text}");

    let cmp = compare_pathways(&stack, &stack[..1]).unwrap();
    let mut buf = Vec::new();
    write_comparison_csv(&mut buf, &cmp).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("a,")).count(), 6);
    assert_eq!(text.lines().filter(|l| l.starts_with("b,")).count(), 3);
    assert!(parse_stack("[]").is_err() || analytic_rf(&parse_stack("[]").unwrap()).is_err());
    assert!(parse_stack(r#"[{"kernel":[0,1,1]}]"#).is_err());
}

proptest! {
    #[test]
    fn rf_grows_monotonically(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = random_stack(&mut rng, true);
        let trace = rf_trace(&stack).unwrap();
        for w in trace.windows(2) {
            for a in 0..3 {
                prop_assert!(w[1].rf[a] >= w[0].rf[a]);
                prop_assert!(w[1].rf_original[a] >= w[0].rf_original[a]);
                prop_assert!(w[1].jump[a] >= w[0].jump[a]);
            }
        }
    }

    #[test]
    fn larger_dilation_never_shrinks_rf(seed in 0u64..10_000, extra in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = random_stack(&mut rng, false);
        let mut wider = stack.clone();
        wider[0].dilation[0] += extra;
        prop_assert!(analytic_rf(&wider).unwrap().rf[0] >= analytic_rf(&stack).unwrap().rf[0]);
    }
}
