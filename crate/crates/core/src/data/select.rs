//! Two-phase relaxed greedy image selection for segmentation manifolds.
//!
//! Phase one repeatedly walks the images in a fresh random order and keeps
//! an image when the number of still-needed classes it shows exceeds a
//! threshold; the threshold drops by one after every pass. Phase two drops
//! images that only show classes already covered more than `n` times.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTwo {
    /// Counters are decremented on removal, so coverage is never broken.
    Guarded,
    /// Counters stay frozen at their phase-one values, so coverage may drop
    /// below `n`.
    Unguarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegSelectionConfig {
    pub samples_per_class: usize,
    pub coverage_threshold: usize,
    pub seed: u64,
    pub phase_two: PhaseTwo,
}

impl Default for SegSelectionConfig {
    fn default() -> Self {
        SegSelectionConfig { samples_per_class: 128, coverage_threshold: 15, seed: 0, phase_two: PhaseTwo::Guarded }
    }
}

impl SegSelectionConfig {
    /// Threshold scaled to `ceil(0.8 · C)`.
    pub fn for_classes(num_classes: usize, samples_per_class: usize, seed: u64) -> Self {
        SegSelectionConfig {
            samples_per_class,
            coverage_threshold: (num_classes * 4).div_ceil(5).max(1),
            seed,
            phase_two: PhaseTwo::Guarded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected image indices in selection order.
    pub indices: Vec<usize>,
    /// Number of selected images showing each class.
    pub class_counts: Vec<usize>,
    pub phase_one_len: usize,
    /// Passes taken by phase one (final value of the relaxation counter).
    pub passes: usize,
}

pub fn select_segmentation_subset(dataset: &Dataset, config: &SegSelectionConfig) -> Result<Selection> {
    let n = config.samples_per_class;
    let threshold = config.coverage_threshold;
    if n == 0 || threshold == 0 {
        return Err(Error::InvalidArgument("samples_per_class and coverage_threshold must be ≥ 1".into()));
    }
    let c = dataset.num_classes;
    let presence: Vec<Vec<bool>> = dataset.samples.iter().map(|s| s.classes_present(c)).collect();
    for (class, members) in dataset.class_members().iter().enumerate() {
        if members.len() < n {
            return Err(Error::Shortfall { class, available: members.len(), required: n });
        }
    }

    let mut rng = substream(config.seed, Stream::Shuffle);
    let mut counts = vec![0usize; c];
    let mut chosen = vec![false; dataset.len()];
    let mut selected = Vec::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut delta = 0usize;
    while let Some(short) = counts.iter().position(|&k| k < n) {
        if delta > threshold {
            return Err(Error::SelectionStalled { delta, class: short, count: counts[short], required: n });
        }
        order.shuffle(&mut rng);
        for &i in &order {
            if chosen[i] {
                continue;
            }
            let missing = presence[i].iter().zip(&counts).filter(|(&p, &k)| p && k < n).count();
            if missing as isize > threshold as isize - delta as isize {
                chosen[i] = true;
                selected.push(i);
                for (k, &p) in presence[i].iter().enumerate() {
                    if p {
                        counts[k] += 1;
                    }
                }
            }
        }
        delta += 1;
    }
    let phase_one_len = selected.len();

    let frozen = counts.clone();
    let mut kept = Vec::with_capacity(selected.len());
    for &i in &selected {
        let reference = match config.phase_two {
            PhaseTwo::Guarded => &counts,
            PhaseTwo::Unguarded => &frozen,
        };
        let only_majority = presence[i].iter().zip(reference).all(|(&p, &k)| !p || k > n);
        if only_majority {
            for (k, &p) in presence[i].iter().enumerate() {
                if p {
                    counts[k] -= 1;
                }
            }
        } else {
            kept.push(i);
        }
    }
    Ok(Selection { indices: kept, class_counts: counts, phase_one_len, passes: delta })
}
