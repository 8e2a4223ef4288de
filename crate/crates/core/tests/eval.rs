mod common;

use common::{blob, blob_manifold};
use cswap::causal::{parse_results_csv, results_csv, Category};
use cswap::data::{Dataset, Sample};
use cswap::eval::*;
use cswap::fixtures;
use cswap::pruners::{cswap, omp, random_pruner, PruneSchedule, PrunerConfig};
use cswap::{LayerNode, ModelGraph, Tensor};

fn config() -> PrunerConfig {
    PrunerConfig { samples_per_class: 32, seed: 1, ..Default::default() }
}

#[test]
fn grid_of_zero_is_the_unpruned_metric() {
    let fx = blob();
    let s = random_pruner(&fx.model, 1).unwrap();
    let c = evaluate_schedule(&fx.model, &s, &fx.test, &[0.0]).unwrap();
    assert_eq!(c.points.len(), 1);
    assert_eq!(c.points[0].metric.to_bits(), accuracy(&fx.model, &fx.test).unwrap().to_bits());
    assert!(sauce(&c).is_err());
}

#[test]
fn first_point_is_bit_exact_for_every_method() {
    let fx = blob();
    let base = accuracy(&fx.model, &fx.test).unwrap();
    let out = cswap(&fx.model, &blob_manifold(32), &config()).unwrap();
    for s in [out.schedule, omp(&fx.model).unwrap(), random_pruner(&fx.model, 3).unwrap()] {
        let c = evaluate_schedule(&fx.model, &s, &fx.test, &default_grid()).unwrap();
        assert_eq!(c.points[0].metric.to_bits(), base.to_bits());
        assert_eq!(c.points[0].removed, 0);
        assert!(c.points.windows(2).all(|w| w[0].removed <= w[1].removed && w[0].achieved <= w[1].achieved));
        assert!(c.points.iter().all(|p| p.achieved <= p.fraction + 1e-12));
    }
}

/// A wide layer where half the channels have all-zero weights in and out.
fn padded_model() -> (ModelGraph, PruneSchedule) {
    let (i, h, c) = (2, 8, 3);
    let mut w1 = vec![0.0f32; h * i];
    let mut w2 = vec![0.0f32; c * h];
    for j in 0..4 {
        w1[j * i] = 1.0 + j as f32;
        w1[j * i + 1] = -(j as f32);
        for k in 0..c {
            w2[k * h + j] = ((k + j) % 3) as f32 - 1.0;
        }
    }
    let nodes = vec![
        LayerNode::dense(1, Tensor::new(vec![h, i], w1).unwrap(), Some(Tensor::zeros(vec![h])), vec![]),
        LayerNode::op(2, cswap::LayerKind::ReLU, vec![1]),
        LayerNode::dense(3, Tensor::new(vec![c, h], w2).unwrap(), Some(Tensor::zeros(vec![c])), vec![2]),
    ];
    let model = ModelGraph::new("padded", vec![i], c, nodes).unwrap();
    let mut s = omp(&model).unwrap();
    s.entries.truncate(4);
    assert!(s.entries.iter().all(|e| e.score == 0.0));
    (model, s)
}

#[test]
fn zero_channel_schedule_gives_a_flat_curve() {
    let (model, s) = padded_model();
    let data = cswap::data::synth_blobs(3, 50, 1.0, 2).unwrap();
    let c = evaluate_schedule(&model, &s, &data, &uniform_grid(40)).unwrap();
    let base = c.points[0].metric;
    assert!(c.points.iter().all(|p| (p.metric - base).abs() <= 1e-6));
    assert_eq!(c.points.last().unwrap().removed, 4);
}

#[test]
fn random_schedule_ends_lower() {
    let fx = blob();
    for seed in 0..3 {
        let c =
            evaluate_schedule(&fx.model, &random_pruner(&fx.model, seed).unwrap(), &fx.test, &default_grid()).unwrap();
        assert!(c.points.last().unwrap().metric <= c.points[0].metric);
        let s = sauce(&c).unwrap();
        let hi = c.points.iter().map(|p| p.metric).fold(0.0, f64::max);
        assert!((0.0..=hi).contains(&s) && hi <= 100.0);
    }
}

#[test]
fn grid_refinement_moves_sauce_little() {
    let fx = blob();
    let s = cswap(&fx.model, &blob_manifold(32), &config()).unwrap().schedule;
    let coarse = sauce(&evaluate_schedule(&fx.model, &s, &fx.test, &uniform_grid(10)).unwrap()).unwrap();
    let fine = sauce(&evaluate_schedule(&fx.model, &s, &fx.test, &uniform_grid(20)).unwrap()).unwrap();
    assert!((coarse - fine).abs() <= 2.0, "{coarse} vs {fine}");
}

#[test]
fn bad_grids_and_empty_sets_are_rejected() {
    let fx = blob();
    let s = random_pruner(&fx.model, 1).unwrap();
    assert!(evaluate_schedule(&fx.model, &s, &fx.test, &[0.5, 1.0]).is_err());
    assert!(evaluate_schedule(&fx.model, &s, &fx.test, &[0.0, 0.5, 0.5]).is_err());
    assert!(evaluate_schedule(&fx.model, &s, &Dataset::new("empty", 3, vec![]), &[0.0]).is_err());
}

#[test]
fn accuracy_examples() {
    let w = Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap();
    let model = ModelGraph::new("sign", vec![1], 2, vec![LayerNode::dense(1, w, None, vec![])]).unwrap();
    let x = |v: f32, y| Sample::labelled(Tensor::from_vec(vec![v]), y);
    let data = |s| Dataset::new("d", 2, s);
    assert_eq!(accuracy(&model, &data(vec![x(1.0, 0), x(-1.0, 1)])).unwrap(), 100.0);
    assert_eq!(accuracy(&model, &data(vec![x(1.0, 1), x(-1.0, 0)])).unwrap(), 0.0);
    assert_eq!(accuracy(&model, &data(vec![x(1.0, 0), x(2.0, 0), x(-3.0, 1), x(4.0, 1)])).unwrap(), 75.0);
}

#[test]
fn distribution_matches_the_exported_csv() {
    let out = cswap(&blob().model, &blob_manifold(32), &config()).unwrap();
    let direct = category_distribution(&out.results).unwrap();
    let parsed = parse_results_csv(&results_csv(&out.results, 0.05), 0.05).unwrap();
    let again = category_distribution(&parsed).unwrap();
    assert_eq!(direct, again);
    for c in Category::ALL {
        let n = parsed.iter().filter(|r| r.category == c).count();
        assert!((direct.get(c) - 100.0 * n as f64 / parsed.len() as f64).abs() < 1e-12);
    }
    assert!((direct.neutral + direct.critical + direct.detrimental - 100.0).abs() < 1e-9);
}

#[test]
fn compression_correlation_examples() {
    // a single Dense layer feeding the output: one hidden producer
    let single = fixtures::mlp("single", &[4, 6, 3], 2).unwrap();
    let s = random_pruner(&single, 4).unwrap();
    assert_eq!(compression_correlation(&s, &single).unwrap(), Some(1.0));

    let s = cswap(&blob().model, &blob_manifold(32), &config()).unwrap().schedule;
    let r = compression_correlation(&s, &blob().model).unwrap().unwrap();
    assert!(r >= 0.9, "r = {r}");

    // nothing prunable: every prefix is the empty one
    let lone = fixtures::mlp("lone", &[4, 3], 2).unwrap();
    let s = omp(&lone).unwrap();
    assert!(s.is_empty());
    assert_eq!(compression_correlation(&s, &lone).unwrap(), None);
}

#[test]
fn aggregate_over_seeds_stays_in_range() {
    let fx = blob();
    let curves: Vec<(u64, PruningCurve)> = (0..5)
        .map(|s| {
            (s, evaluate_schedule(&fx.model, &random_pruner(&fx.model, s).unwrap(), &fx.test, &default_grid()).unwrap())
        })
        .collect();
    let a = aggregate(&curves).unwrap();
    assert_eq!(a.seeds, vec![0, 1, 2, 3, 4]);
    assert!((0.0..=100.0).contains(&a.mean));
    assert!(a.std >= 0.0);
    assert_eq!(a.std_kind, "population");
}

#[test]
fn csv_and_svg_outputs() {
    let fx = blob();
    let c = evaluate_schedule(&fx.model, &random_pruner(&fx.model, 1).unwrap(), &fx.test, &uniform_grid(4)).unwrap();
    let csv = curve_csv(&c, 7);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,"));
    let svg = curves_svg(&[("seed 7".into(), &c)], c.baseline());
    assert!(svg.contains("<polyline") && svg.contains("stroke-dasharray"));
}

#[test]
fn segmentation_metric() {
    let fx = fixtures::trained_segmenter(2).unwrap();
    let m = mean_iou_percent(&fx.model, &fx.test).unwrap();
    assert!((0.0..=100.0).contains(&m));
    let c = evaluate_schedule(&fx.model, &random_pruner(&fx.model, 1).unwrap(), &fx.test, &uniform_grid(4)).unwrap();
    assert_eq!(c.metric, MetricKind::MeanIou);
    assert_eq!(c.points[0].metric.to_bits(), m.to_bits());
}
