use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::tensor::Tensor;

use super::{Dataset, Sample, Target};

/// Gaussian clusters centred on a circle of radius 3 in the plane.
pub fn synth_blobs(num_classes: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument("blobs need at least one class".into()));
    }
    let noise =
        Normal::new(0.0, spread).map_err(|e| Error::InvalidArgument(format!("invalid spread {spread}: {e}")))?;
    let mut rng = substream(seed, Stream::Data);
    let mut samples = Vec::with_capacity(num_classes * per_class);
    for k in 0..num_classes {
        let angle = 2.0 * PI * k as f64 / num_classes as f64;
        let (cx, cy) = (3.0 * angle.cos(), 3.0 * angle.sin());
        for _ in 0..per_class {
            let x = (cx + noise.sample(&mut rng)) as f32;
            let y = (cy + noise.sample(&mut rng)) as f32;
            samples.push(Sample::labelled(Tensor::from_vec(vec![x, y]), k));
        }
    }
    Ok(Dataset::new(format!("blobs{num_classes}"), num_classes, samples))
}

/// RGB colour of each class in synthetic segmentation images.
pub const SEG_PALETTE: [[f32; 3]; 8] = [
    [0.1, 0.1, 0.1],
    [0.9, 0.1, 0.1],
    [0.1, 0.9, 0.1],
    [0.1, 0.1, 0.9],
    [0.9, 0.9, 0.1],
    [0.9, 0.1, 0.9],
    [0.1, 0.9, 0.9],
    [0.9, 0.9, 0.9],
];

/// Images of coloured axis-aligned rectangles on a class-0 background.
///
/// Foreground class `k` is drawn with weight `1/k`, so higher classes are
/// rarer and class presence is deliberately uneven.
pub fn synth_segmentation(num_classes: usize, count: usize, size: usize, seed: u64) -> Result<Dataset> {
    if !(2..=SEG_PALETTE.len()).contains(&num_classes) {
        return Err(Error::InvalidArgument(format!(
            "segmentation fixtures support 2..={} classes, got {num_classes}",
            SEG_PALETTE.len()
        )));
    }
    if size < 4 {
        return Err(Error::InvalidArgument("segmentation images must be at least 4×4".into()));
    }
    let mut rng = substream(seed, Stream::Data);
    let weights: Vec<f64> = (1..num_classes).map(|k| 1.0 / k as f64).collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    let noise = Normal::new(0.0, 0.05).expect("valid");
    let area = size * size;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut mask = vec![0u8; area];
        let rects = rng.random_range(1..=3);
        for _ in 0..rects {
            let class = pick.sample(&mut rng) + 1;
            let h = rng.random_range(2..=size / 2);
            let w = rng.random_range(2..=size / 2);
            let top = rng.random_range(0..=size - h);
            let left = rng.random_range(0..=size - w);
            for y in top..top + h {
                for x in left..left + w {
                    mask[y * size + x] = class as u8;
                }
            }
        }
        let mut img = vec![0f32; 3 * area];
        for (p, &k) in mask.iter().enumerate() {
            for (ch, &base) in SEG_PALETTE[k as usize].iter().enumerate() {
                img[ch * area + p] = base + noise.sample(&mut rng) as f32;
            }
        }
        samples.push(Sample { input: Tensor::new(vec![3, size, size], img)?, target: Target::Mask(mask) });
    }
    Ok(Dataset::new(format!("seg{num_classes}"), num_classes, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_sits_on_centres() {
        let ds = synth_blobs(4, 3, 0.0, 9).unwrap();
        for s in &ds.samples {
            let Target::Label(k) = s.target else { panic!() };
            let a = 2.0 * PI * k as f64 / 4.0;
            assert_eq!(s.input.data(), &[(3.0 * a.cos()) as f32, (3.0 * a.sin()) as f32]);
        }
    }

    #[test]
    fn seeded_generators_are_deterministic() {
        assert_eq!(synth_blobs(3, 10, 0.5, 4).unwrap(), synth_blobs(3, 10, 0.5, 4).unwrap());
        assert_ne!(synth_blobs(3, 10, 0.5, 4).unwrap(), synth_blobs(3, 10, 0.5, 5).unwrap());
        assert_eq!(synth_segmentation(5, 7, 8, 4).unwrap(), synth_segmentation(5, 7, 8, 4).unwrap());
        assert!(synth_segmentation(5, 0, 8, 4).unwrap().is_empty());
    }

    #[test]
    fn class_presence_is_uneven() {
        let ds = synth_segmentation(5, 200, 8, 3).unwrap();
        let counts: Vec<usize> = ds.class_members().iter().map(Vec::len).collect();
        let max = *counts.iter().max().unwrap();
        let min = *counts.iter().min().unwrap();
        assert!(min > 0, "{counts:?}");
        // the rarest class shows up in well under half as many images as the most common one
        assert!(min * 2 < max, "{counts:?}");
    }
}
