mod common;

use std::collections::HashSet;

use cswap::config::RunConfig;
use cswap::coupling::{build_groups, verify_mask_prune_equivalence};
use cswap::data::{
    build_manifold, parse_idx, select_segmentation_subset, synth_blobs, synth_segmentation, SegSelectionConfig,
};
use cswap::fixtures;
use cswap::pruners::{omp, random_pruner, PruneSchedule};
use cswap::ModelGraph;
use proptest::prelude::*;

fn arb_mlp() -> impl Strategy<Value = ModelGraph> {
    (prop::collection::vec(1usize..6, 2..5), any::<u64>())
        .prop_map(|(dims, seed)| fixtures::mlp("arb", &dims, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn masking_equals_pruning(model in arb_mlp(), seed in any::<u64>()) {
        let inputs = common::random_inputs(&model, 10, seed);
        for g in build_groups(&model).unwrap() {
            let prunable = g.layers().all(|l| model.node(l).unwrap().out_channels > 1);
            if prunable {
                prop_assert!(verify_mask_prune_equivalence(&model, &g, &inputs).unwrap() <= 1e-5);
            }
        }
    }

    #[test]
    fn data_free_schedules_are_complete(model in arb_mlp(), seed in any::<u64>()) {
        let groups: HashSet<_> = build_groups(&model).unwrap().into_iter().collect();
        for s in [omp(&model).unwrap(), random_pruner(&model, seed).unwrap()] {
            let listed: Vec<_> = s.groups().chain(s.withheld.iter().map(|w| &w.group)).cloned().collect();
            prop_assert_eq!(listed.len(), groups.len());
            prop_assert_eq!(listed.into_iter().collect::<HashSet<_>>(), groups.clone());
            let back = PruneSchedule::from_json(&s.to_json()).unwrap();
            prop_assert_eq!(back, s);
        }
    }

    #[test]
    fn manifolds_are_balanced(classes in 1usize..6, per_class in 1usize..20, take in 1usize..20, seed in any::<u64>()) {
        let data = synth_blobs(classes, per_class, 1.0, seed).unwrap();
        match build_manifold(&data, take, seed) {
            Ok(m) => {
                prop_assert!(take <= per_class);
                prop_assert!(m.sizes().iter().all(|&s| s == take));
                prop_assert_eq!(m.len(), take * classes);
                prop_assert_eq!(m, build_manifold(&data, take, seed).unwrap());
            }
            Err(cswap::Error::Shortfall { required, .. }) => {
                prop_assert!(take > per_class);
                prop_assert_eq!(required, take);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn selection_covers_every_class(classes in 2usize..6, n in 1usize..6, seed in any::<u64>()) {
        let data = synth_segmentation(classes, 60, 6, seed).unwrap();
        let cfg = SegSelectionConfig::for_classes(classes, n, seed);
        if let Ok(sel) = select_segmentation_subset(&data, &cfg) {
            let unique: HashSet<_> = sel.indices.iter().collect();
            prop_assert_eq!(unique.len(), sel.indices.len());
            let chosen = data.subset(&sel.indices);
            for (k, members) in chosen.class_members().iter().enumerate() {
                prop_assert!(members.len() >= n, "class {} in {} images", k, members.len());
                prop_assert_eq!(members.len(), sel.class_counts[k]);
            }
        } else {
            let available = data.class_members().iter().map(|m| m.len()).min().unwrap();
            prop_assert!(available < n);
        }
    }

    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_idx(&bytes);
        let _ = ModelGraph::from_parts(&bytes, &bytes);
        let text = String::from_utf8_lossy(&bytes);
        let _ = RunConfig::parse(&text);
        let _ = PruneSchedule::from_json(&text);
        let _ = cswap::causal::parse_results_csv(&text, 0.05);
    }
}
