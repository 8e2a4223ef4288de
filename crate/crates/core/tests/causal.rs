mod common;

use cswap::causal::*;
use cswap::coupling::{Coupling, InterventionMask, MaskedModel};
use cswap::data::{build_manifold, synth_blobs, synth_segmentation, Dataset, Manifold, Sample, TaskKind};
use cswap::fixtures;
use cswap::{ModelGraph, Tensor};
use rand::{Rng, SeedableRng};

/// A labelled manifold of random inputs for any classifier fixture.
fn random_manifold(model: &ModelGraph, per_class: usize, seed: u64) -> Manifold {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let len: usize = model.input_shape().iter().product();
    let samples = (0..per_class * model.num_classes())
        .map(|i| {
            let x = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            Sample::labelled(Tensor::new(model.input_shape().to_vec(), x).unwrap(), i % model.num_classes())
        })
        .collect();
    build_manifold(&Dataset::new("random", model.num_classes(), samples), per_class, seed).unwrap()
}

#[test]
fn null_intervention_is_neutral_everywhere() {
    let models = [
        fixtures::blob_mlp_untrained(1),
        common::blob().model.clone(),
        fixtures::residual_mlp(1),
        fixtures::stacked_residual_mlp(1),
        fixtures::small_convnet(1),
        fixtures::conv_flatten_net(1),
        fixtures::residual_convnet(1),
    ];
    for model in models {
        let man = random_manifold(&model, 8, 3);
        let coupling = Coupling::build(&model).unwrap();
        let base = score(&model, &man).unwrap();
        let g = MaskedModel::new(&model).with_mask(&coupling, &InterventionMask::default()).unwrap();
        for group in coupling.groups() {
            let same = score(g.graph(), &man).unwrap();
            let r = analyze(group.anchor, &base, &same, &man, &SignificanceConfig::default()).unwrap();
            assert_eq!(r.xi, 0.0, "{} {}", model.name(), group.anchor);
            assert_eq!(r.category, Category::Neutral);
        }
    }
}

#[test]
fn segmentation_null_intervention() {
    let model = fixtures::segmenter(4, 8, 4, 2);
    let data = synth_segmentation(4, 30, 8, 5).unwrap();
    let man = Manifold::from_segmentation(&data, &(0..30).collect::<Vec<_>>(), 5);
    assert_eq!(man.task, TaskKind::Segmentation);
    let s = score(&model, &man).unwrap();
    assert_eq!(s.kind, ScoreKind::MeanIou);
    assert!(s.values.iter().all(|v| (0.0..=1.0).contains(v)));
    let r = analyze(cswap::NeuronId::new(1, 0), &s, &s, &man, &SignificanceConfig::default()).unwrap();
    assert_eq!((r.xi, r.category), (0.0, Category::Neutral));
}

#[test]
fn scoring_rejects_mismatched_manifolds() {
    let data = synth_blobs(4, 10, 1.0, 1).unwrap();
    let man = build_manifold(&data, 4, 1).unwrap();
    assert!(score(&common::blob().model, &man).is_err());
}

#[test]
fn significant_harm_is_critical() {
    let model = &common::blob().model;
    let man = common::blob_manifold(64);
    let base = score(model, &man).unwrap();
    // zeroing the whole output layer's input collapses predictions to the bias
    let coupling = Coupling::build(model).unwrap();
    let mut mask = InterventionMask::default();
    for g in coupling.groups().iter().filter(|g| g.anchor.layer == 3) {
        mask.merge(&coupling.group_mask(model, g).unwrap());
    }
    let hit = score(MaskedModel::new(model).with_mask(&coupling, &mask).unwrap().graph(), &man).unwrap();
    let r = analyze(cswap::NeuronId::new(3, 0), &base, &hit, &man, &SignificanceConfig::default()).unwrap();
    assert!(r.xi < 0.0);
    assert_eq!(r.category, Category::Critical);
    let g = analyze(
        cswap::NeuronId::new(3, 0),
        &base,
        &hit,
        &man,
        &SignificanceConfig { mode: SignificanceMode::GeneralInference, ..Default::default() },
    )
    .unwrap();
    assert_eq!(g.per_class_p.len(), 3);
    assert!(g.per_class_p.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn csv_matches_results() {
    let out = cswap::pruners::cswap(
        &common::blob().model,
        &common::blob_manifold(32),
        &cswap::pruners::PrunerConfig { samples_per_class: 32, ..Default::default() },
    )
    .unwrap();
    let text = results_csv(&out.results, 0.05);
    assert_eq!(text.lines().count(), out.results.len() + 1);
    assert_eq!(parse_results_csv(&text, 0.05).unwrap(), out.results);
}
