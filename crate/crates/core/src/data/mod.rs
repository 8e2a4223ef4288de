//! Datasets, analysis manifolds and sample selection.

mod idx;
mod io;
mod manifold;
mod select;
mod synth;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use idx::{load_idx, load_idx_dataset, parse_idx, IdxArray, IdxType};
pub use io::{decode_dataset, load_dataset, save_dataset};
pub use manifold::{build_manifold, Manifold};
pub use select::{select_segmentation_subset, PhaseTwo, SegSelectionConfig, Selection};
pub use synth::{synth_blobs, synth_segmentation, SEG_PALETTE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Label(usize),
    /// Class id per pixel, row-major.
    Mask(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub target: Target,
}

impl Sample {
    pub fn labelled(input: Tensor, label: usize) -> Self {
        Sample { input, target: Target::Label(label) }
    }

    /// Which classes this sample contains: its label, or every class in its mask.
    pub fn classes_present(&self, num_classes: usize) -> Vec<bool> {
        let mut present = vec![false; num_classes];
        match &self.target {
            Target::Label(y) => {
                if let Some(p) = present.get_mut(*y) {
                    *p = true;
                }
            }
            Target::Mask(m) => {
                for &k in m {
                    if let Some(p) = present.get_mut(k as usize) {
                        *p = true;
                    }
                }
            }
        }
        present
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Segmentation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, num_classes: usize, samples: Vec<Sample>) -> Self {
        Dataset { name: name.into(), num_classes, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Segmentation if any sample carries a mask.
    pub fn task(&self) -> TaskKind {
        if self.samples.iter().any(|s| matches!(s.target, Target::Mask(_))) {
            TaskKind::Segmentation
        } else {
            TaskKind::Classification
        }
    }

    /// For each class, indices of the samples that contain it.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            for (k, present) in s.classes_present(self.num_classes).into_iter().enumerate() {
                if present {
                    members[k].push(i);
                }
            }
        }
        members
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            num_classes: self.num_classes,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}
