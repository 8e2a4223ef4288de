use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

use super::{Dataset, Sample, TaskKind};

/// Class-partitioned analysis set.
///
/// `samples` holds each distinct sample once; `class_members[k]` lists the
/// samples that make up `S_k`. In classification every sample belongs to
/// exactly one class; a segmentation image belongs to every class it shows.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub num_classes: usize,
    pub task: TaskKind,
    pub samples: Vec<Sample>,
    pub class_members: Vec<Vec<usize>>,
    pub seed: u64,
}

impl Manifold {
    /// Sizes `M_k` of the class subsets.
    pub fn sizes(&self) -> Vec<usize> {
        self.class_members.iter().map(Vec::len).collect()
    }

    /// Number of distinct samples `M`.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Wraps an already-selected segmentation subset.
    pub fn from_segmentation(dataset: &Dataset, indices: &[usize], seed: u64) -> Manifold {
        let subset = dataset.subset(indices);
        let class_members = subset.class_members();
        Manifold {
            num_classes: dataset.num_classes,
            task: TaskKind::Segmentation,
            samples: subset.samples,
            class_members,
            seed,
        }
    }
}

/// Draws exactly `per_class` samples of every class without replacement.
pub fn build_manifold(dataset: &Dataset, per_class: usize, seed: u64) -> Result<Manifold> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("samples per class must be positive".into()));
    }
    if dataset.task() != TaskKind::Classification {
        return Err(Error::InvalidArgument(
            "balanced manifolds need a labelled dataset; use image selection for segmentation".into(),
        ));
    }
    let mut rng = substream(seed, Stream::Manifold);
    let mut samples = Vec::with_capacity(per_class * dataset.num_classes);
    let mut class_members = Vec::with_capacity(dataset.num_classes);
    for (class, mut members) in dataset.class_members().into_iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::Shortfall { class, available: members.len(), required: per_class });
        }
        members.shuffle(&mut rng);
        let start = samples.len();
        samples.extend(members[..per_class].iter().map(|&i| dataset.samples[i].clone()));
        class_members.push((start..samples.len()).collect());
    }
    Ok(Manifold { num_classes: dataset.num_classes, task: TaskKind::Classification, samples, class_members, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, Target};

    #[test]
    fn full_class_is_taken_verbatim() {
        let ds = synth_blobs(3, 6, 0.5, 1).unwrap();
        let m = build_manifold(&ds, 6, 3).unwrap();
        assert_eq!(m.sizes(), vec![6, 6, 6]);
        for k in 0..3 {
            let mut got: Vec<Vec<f32>> =
                m.class_members[k].iter().map(|&i| m.samples[i].input.data().to_vec()).collect();
            let mut want: Vec<Vec<f32>> =
                ds.samples[k * 6..(k + 1) * 6].iter().map(|s| s.input.data().to_vec()).collect();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got, want);
            assert!(m.class_members[k].iter().all(|&i| m.samples[i].target == Target::Label(k)));
        }
    }

    #[test]
    fn one_per_class_and_seed_sensitivity() {
        let ds = synth_blobs(4, 50, 0.5, 1).unwrap();
        assert_eq!(build_manifold(&ds, 1, 0).unwrap().len(), 4);
        let a = build_manifold(&ds, 10, 1).unwrap();
        let b = build_manifold(&ds, 10, 2).unwrap();
        assert_eq!(a, build_manifold(&ds, 10, 1).unwrap());
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn shortfall_names_the_class() {
        let mut ds = synth_blobs(3, 5, 0.5, 1).unwrap();
        ds.samples.retain(|s| s.target != Target::Label(1) || s.input.data()[0] > 100.0);
        match build_manifold(&ds, 4, 0) {
            Err(Error::Shortfall { class: 1, available: 0, required: 4 }) => {}
            other => panic!("{other:?}"),
        }
    }
}
