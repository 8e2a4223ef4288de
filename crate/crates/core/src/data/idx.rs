//! IDX binary format (the MNIST container).
//!
//! Layout: two zero bytes, a type code, a dimension count, then one
//! big-endian `u32` per dimension, then the payload in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::read;

use super::{Dataset, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxType {
    U8,
    I8,
    I16,
    I32,
    F32,
    F64,
}

impl IdxType {
    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0x08 => IdxType::U8,
            0x09 => IdxType::I8,
            0x0B => IdxType::I16,
            0x0C => IdxType::I32,
            0x0D => IdxType::F32,
            0x0E => IdxType::F64,
            _ => return None,
        })
    }

    fn width(self) -> usize {
        match self {
            IdxType::U8 | IdxType::I8 => 1,
            IdxType::I16 => 2,
            IdxType::I32 | IdxType::F32 => 4,
            IdxType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dtype: IdxType,
    pub dims: Vec<usize>,
    /// Values widened to `f64`, unnormalized.
    pub values: Vec<f64>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let bad = |reason: String| Error::format("IDX file", reason);
    if bytes.len() < 4 {
        return Err(bad(format!("header needs 4 bytes, file has {}", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad(format!("bad magic {:02x}{:02x}", bytes[0], bytes[1])));
    }
    let dtype = IdxType::from_code(bytes[2]).ok_or_else(|| bad(format!("unknown type code 0x{:02x}", bytes[2])))?;
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(bad("zero dimensions".into()));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(bad(format!("truncated header: {ndims} dimensions need {header} bytes")));
    }
    let dims: Vec<usize> =
        bytes[4..header].chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad(format!("dimensions {dims:?} overflow")))?;
    let payload = &bytes[header..];
    let need = count.checked_mul(dtype.width()).ok_or_else(|| bad("payload size overflows".into()))?;
    if payload.len() < need {
        return Err(bad(format!("truncated payload: need {need} bytes, have {}", payload.len())));
    }
    if payload.len() > need {
        return Err(bad(format!("{} trailing bytes after payload", payload.len() - need)));
    }
    let w = dtype.width();
    let values = payload
        .chunks_exact(w)
        .map(|c| match dtype {
            IdxType::U8 => f64::from(c[0]),
            IdxType::I8 => f64::from(c[0] as i8),
            IdxType::I16 => f64::from(i16::from_be_bytes([c[0], c[1]])),
            IdxType::I32 => f64::from(i32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            IdxType::F32 => f64::from(f32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            IdxType::F64 => f64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]),
        })
        .collect();
    Ok(IdxArray { dtype, dims, values })
}

/// Loads an unsigned-byte image file as tensors with pixels scaled to `[0, 1]`.
///
/// The first dimension indexes images; each image becomes a `1 × rows × cols`
/// tensor (or a flat vector when the file is 2-D).
pub fn load_idx(path: &Path) -> Result<Vec<Tensor>> {
    images_from_idx(&parse_idx(&read(path)?)?)
}

pub(crate) fn images_from_idx(arr: &IdxArray) -> Result<Vec<Tensor>> {
    if arr.dtype != IdxType::U8 {
        return Err(Error::format("IDX file", "image files must hold unsigned bytes"));
    }
    let count = arr.dims[0];
    let shape: Vec<usize> = match arr.dims[1..] {
        [] => vec![1],
        [n] => vec![n],
        [r, c] => vec![1, r, c],
        [ch, r, c] => vec![ch, r, c],
        _ => return Err(Error::format("IDX file", format!("unsupported image rank {}", arr.dims.len()))),
    };
    let per: usize = shape.iter().product();
    if count == 0 {
        return Ok(Vec::new());
    }
    if per == 0 {
        return Err(Error::format("IDX file", "images have a zero dimension"));
    }
    Ok(arr
        .values
        .chunks_exact(per)
        .map(|px| Tensor::new(shape.clone(), px.iter().map(|&v| (v / 255.0) as f32).collect()).expect("shape"))
        .collect())
}

/// Pairs an image file with a label file into a classification dataset.
pub fn load_idx_dataset(images: &Path, labels: &Path, num_classes: usize) -> Result<Dataset> {
    let imgs = load_idx(images)?;
    let lab = parse_idx(&read(labels)?)?;
    if lab.dims.len() != 1 || lab.dtype != IdxType::U8 {
        return Err(Error::format("IDX labels", "label files must be 1-D unsigned bytes"));
    }
    if lab.values.len() != imgs.len() {
        return Err(Error::LengthMismatch { left: imgs.len(), right: lab.values.len() });
    }
    let mut samples = Vec::with_capacity(imgs.len());
    for (img, &y) in imgs.into_iter().zip(&lab.values) {
        let y = y as usize;
        if y >= num_classes {
            return Err(Error::format("IDX labels", format!("label {y} outside [0, {num_classes})")));
        }
        samples.push(Sample::labelled(img, y));
    }
    let name = images.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset::new(name, num_classes, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dims: &[u32]) -> Vec<u8> {
        let mut b = vec![0, 0, 0x08, dims.len() as u8];
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b
    }

    #[test]
    fn four_two_by_two_images() {
        let mut b = header(&[4, 2, 2]);
        let px: Vec<u8> = vec![0, 255, 51, 102, 1, 2, 3, 4, 255, 255, 255, 255, 0, 0, 0, 128];
        b.extend_from_slice(&px);
        let arr = parse_idx(&b).unwrap();
        assert_eq!(arr.dims, vec![4, 2, 2]);
        let imgs = images_from_idx(&arr).unwrap();
        assert_eq!(imgs.len(), 4);
        assert_eq!(imgs[0].shape(), &[1, 2, 2]);
        assert_eq!(imgs[0].data(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(imgs[3].data()[3], (128.0f64 / 255.0) as f32);
    }

    #[test]
    fn empty_count_is_empty_dataset() {
        let arr = parse_idx(&header(&[0, 28, 28])).unwrap();
        assert!(images_from_idx(&arr).unwrap().is_empty());
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let mut b = header(&[1, 2]);
        b.extend_from_slice(&[1, 2]);
        let mut bad = b.clone();
        bad[1] = 8;
        assert!(matches!(parse_idx(&bad), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&b[..b.len() - 1]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&b[..6]), Err(Error::Format { .. })));
        assert!(parse_idx(&b).is_ok());
    }

    #[test]
    fn label_files_round_trip_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut imgs = header(&[3, 1, 2]);
        imgs.extend_from_slice(&[0, 255, 255, 0, 10, 20]);
        let mut labs = header(&[3]);
        labs.extend_from_slice(&[2, 0, 1]);
        std::fs::write(dir.path().join("i.idx"), imgs).unwrap();
        std::fs::write(dir.path().join("l.idx"), labs).unwrap();
        let ds = load_idx_dataset(&dir.path().join("i.idx"), &dir.path().join("l.idx"), 3).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.samples[0].target, super::super::Target::Label(2));
        assert!(load_idx_dataset(&dir.path().join("i.idx"), &dir.path().join("l.idx"), 2).is_err());
    }
}
