//! Dataset export: a JSON manifest (targets inline) plus a blob of
//! little-endian `f32` inputs, following the model file convention.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::{atomic_write, f32s_to_le, le_to_f32s, read};

use super::{Dataset, Sample, Target};

const DATASET_FORMAT: &str = "cswap-dataset";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    name: String,
    num_classes: usize,
    input_shape: Vec<usize>,
    blob: String,
    blob_floats: usize,
    crc32: u32,
    targets: Vec<Target>,
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let input_shape = ds.samples.first().map(|s| s.input.shape().to_vec()).unwrap_or_default();
    if ds.samples.iter().any(|s| s.input.shape() != input_shape.as_slice()) {
        return Err(Error::InvalidArgument("dataset inputs have mixed shapes".into()));
    }
    let mut blob = Vec::new();
    for s in &ds.samples {
        f32s_to_le(s.input.data().iter().copied(), &mut blob);
    }
    let blob_path = path.with_extension("bin");
    let manifest = Manifest {
        format: DATASET_FORMAT.into(),
        version: 1,
        name: ds.name.clone(),
        num_classes: ds.num_classes,
        input_shape,
        blob: blob_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        blob_floats: blob.len() / 4,
        crc32: crc32fast::hash(&blob),
        targets: ds.samples.iter().map(|s| s.target.clone()).collect(),
    };
    atomic_write(&blob_path, &blob)?;
    atomic_write(path, serde_json::to_string(&manifest).expect("serializes").as_bytes())
}

fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    let m: Manifest = serde_json::from_slice(bytes).map_err(|e| Error::format("dataset manifest", e.to_string()))?;
    if m.format != DATASET_FORMAT || m.version != 1 {
        return Err(Error::format("dataset manifest", format!("unsupported format {} v{}", m.format, m.version)));
    }
    if m.blob.contains('/') || m.blob.contains('\\') {
        return Err(Error::format("dataset manifest", "blob must be a plain file name"));
    }
    Ok(m)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let m = parse_manifest(&read(path)?)?;
    let blob = read(&path.parent().unwrap_or(Path::new(".")).join(&m.blob))?;
    decode(m, &blob)
}

/// Decodes an in-memory manifest and blob pair.
pub fn decode_dataset(manifest: &[u8], blob: &[u8]) -> Result<Dataset> {
    decode(parse_manifest(manifest)?, blob)
}

fn decode(m: Manifest, blob: &[u8]) -> Result<Dataset> {
    if blob.len() != m.blob_floats.saturating_mul(4) {
        return Err(Error::format("dataset blob", "blob length disagrees with manifest"));
    }
    let actual = crc32fast::hash(blob);
    if actual != m.crc32 {
        return Err(Error::Checksum { expected: m.crc32, actual });
    }
    let per: usize = m.input_shape.iter().product();
    if per.checked_mul(m.targets.len()) != Some(m.blob_floats) {
        return Err(Error::format("dataset manifest", "target count disagrees with blob size"));
    }
    let mut samples = Vec::with_capacity(m.targets.len());
    for (i, target) in m.targets.into_iter().enumerate() {
        let data = le_to_f32s(blob, i * per, per, "dataset blob")?;
        let input =
            Tensor::new(m.input_shape.clone(), data).map_err(|e| Error::format("dataset manifest", e.to_string()))?;
        match &target {
            Target::Label(y) if *y >= m.num_classes => {
                return Err(Error::format("dataset manifest", format!("label {y} out of range")))
            }
            Target::Mask(mask) if mask.iter().any(|&k| k as usize >= m.num_classes) => {
                return Err(Error::format("dataset manifest", "mask class out of range"))
            }
            _ => {}
        }
        samples.push(Sample { input, target });
    }
    Ok(Dataset::new(m.name, m.num_classes, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, synth_segmentation};

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for ds in [synth_blobs(3, 5, 0.5, 1).unwrap(), synth_segmentation(4, 6, 8, 2).unwrap()] {
            let p = dir.path().join(format!("{}.json", ds.name));
            save_dataset(&ds, &p).unwrap();
            assert_eq!(load_dataset(&p).unwrap(), ds);
        }
    }
}
