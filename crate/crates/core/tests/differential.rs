mod common;

use bnnsim::bitpack::WordWidth;
use bnnsim::differential::first_mismatch;
use bnnsim::engine::{run_inference, Fault, HardwareConfig, RunOptions};
use bnnsim::model::LayerKind;
use bnnsim::reference::ref_infer;

fn opts(skip: bool) -> RunOptions {
    RunOptions {
        pool_skipping: skip,
        record_intermediates: true,
        ..Default::default()
    }
}

#[test]
fn engine_matches_oracle_on_random_cases() {
    for seed in 0..150 {
        let (net, input) = common::random_case(seed);
        let oracle = ref_infer::<i64>(&net, &input).unwrap();
        for m in WordWidth::ALL {
            for n in [1, 3, 8] {
                for skip in [false, true] {
                    let hw = HardwareConfig::new(m, n, 1e8).unwrap();
                    let r = run_inference(&net, &input, &hw, &opts(skip)).unwrap();
                    if let Some(mm) = first_mismatch(&r, &oracle) {
                        panic!("seed {seed}, m={m}, n={n}, skip={skip}: {mm}");
                    }
                }
            }
        }
    }
}

#[test]
fn oracle_accumulator_width_does_not_matter() {
    for seed in 0..100 {
        let (net, input) = common::random_case(seed);
        let wide = ref_infer::<i64>(&net, &input).unwrap();
        let narrow = ref_infer::<i32>(&net, &input).unwrap();
        assert_eq!(wide.class_id, narrow.class_id);
        assert_eq!(wide.intermediates, narrow.intermediates);
        let widened: Vec<i64> = narrow.logits.iter().map(|&x| x as i64).collect();
        assert_eq!(wide.logits, widened);
    }
}

#[test]
fn random_cases_cover_every_layer_kind() {
    let mut seen = std::collections::HashSet::new();
    for seed in 0..150 {
        let (net, _) = common::random_case(seed);
        seen.extend(net.layers.iter().map(|l| l.kind));
    }
    for kind in [
        LayerKind::ConvFirst,
        LayerKind::ConvBin,
        LayerKind::FcBin,
        LayerKind::FcLast16,
        LayerKind::MaxPool,
    ] {
        assert!(seen.contains(&kind), "{kind} never generated");
    }
}

#[test]
fn parallel_lanes_are_deterministic() {
    for seed in 0..40 {
        let (net, input) = common::random_case(seed);
        let hw = HardwareConfig::new(WordWidth::W64, 8, 1e8).unwrap();
        let serial = run_inference(&net, &input, &hw, &opts(true)).unwrap();
        let parallel = run_inference(
            &net,
            &input,
            &hw,
            &RunOptions {
                parallel_lanes: true,
                ..opts(true)
            },
        )
        .unwrap();
        assert_eq!(serial, parallel, "seed {seed}");
    }
}

#[test]
fn harness_catches_unmasked_tail() {
    // The faulty popcount counts padding lanes, so some random case with a
    // fan-in that is not a word multiple must disagree with the oracle.
    let mut caught = 0;
    for seed in 0..60 {
        let (net, input) = common::random_case(seed);
        let oracle = ref_infer::<i64>(&net, &input).unwrap();
        let hw = HardwareConfig::new(WordWidth::W128, 4, 1e8).unwrap();
        let r = run_inference(
            &net,
            &input,
            &hw,
            &RunOptions {
                fault: Some(Fault::UnmaskedTail),
                ..opts(false)
            },
        )
        .unwrap();
        caught += first_mismatch(&r, &oracle).is_some() as usize;
    }
    assert!(caught > 10, "only {caught} of 60 faulty runs detected");
}

#[test]
fn skipping_changes_no_output() {
    for seed in 0..100 {
        let (net, input) = common::random_case(seed);
        let hw = HardwareConfig::new(WordWidth::W32, 4, 1e8).unwrap();
        let on = run_inference(&net, &input, &hw, &opts(true)).unwrap();
        let off = run_inference(&net, &input, &hw, &opts(false)).unwrap();
        assert_eq!(on.logits, off.logits);
        assert_eq!(on.class_id, off.class_id);
        assert_eq!(on.counters.nominal_ops, off.counters.nominal_ops);
        assert_eq!(off.counters.skipped_ops, 0);
        for (a, b) in on.intermediates.unwrap().iter().zip(off.intermediates.unwrap()) {
            match &a.dont_care {
                None => assert_eq!(a.tensor, b.tensor),
                Some(mask) => {
                    for i in 0..mask.len() {
                        if !mask.get(i) {
                            assert_eq!(a.tensor.data().get(i), b.tensor.data().get(i));
                        }
                    }
                }
            }
        }
    }
}
