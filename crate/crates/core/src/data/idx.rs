//! IDX (MNIST-style) files: big-endian header, unsigned-byte payload.

use std::fs;
use std::path::Path;

use super::synth::generate_digits;
use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{Stream, StreamRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A decoded unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Format("file shorter than the magic number".into()));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 || bytes[3] == 0 {
        return Err(Error::Format(format!("bad magic 0x{magic:08x}; expected unsigned-byte IDX")));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Length(format!("header needs {header} bytes, file has {}", bytes.len())));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let payload: usize = dims.iter().product();
    let available = bytes.len() - header;
    if available < payload {
        return Err(Error::Length(format!("payload needs {payload} bytes, found {available}")));
    }
    Ok(IdxArray { magic, dims, data: bytes[header..header + payload].to_vec() })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?)
}

fn encode(magic: u32, dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Loads an image file and its label file. Pixels are scaled to `[0, 1]`.
pub fn load_idx<T: Scalar>(images: &Path, labels: &Path) -> Result<Dataset<T>> {
    let img = read_idx(images)?;
    if img.magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("{} is not a 3-d image file", images.display())));
    }
    let lab = read_idx(labels)?;
    if lab.magic != LABELS_MAGIC {
        return Err(Error::Format(format!("{} is not a 1-d label file", labels.display())));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(Error::Dimension(format!("{} images but {} labels", img.dims[0], lab.dims[0])));
    }
    let scale = T::of(255.0);
    let pixels = img.data.iter().map(|&b| T::of(f64::from(b)) / scale).collect();
    let inputs = Tensor::from_parts(img.dims.clone(), pixels)?;
    let classes = lab.data.iter().copied().max().map_or(2, |m| (m as usize + 1).max(2));
    let targets = Tensor::vector(lab.data.iter().map(|&b| T::of(f64::from(b))).collect());
    Dataset::new(inputs, targets, Some(classes.max(10)))
}

/// Writes images (values in `[0, 1]`, rounded to 1/255 steps).
pub fn write_idx_images<T: Scalar>(path: &Path, dataset: &Dataset<T>) -> Result<()> {
    let mut dims = vec![dataset.len()];
    dims.extend_from_slice(dataset.feature_shape());
    if dims.len() != 3 {
        return Err(Error::Dimension(format!("image IDX needs [n, rows, cols], got {dims:?}")));
    }
    let data: Vec<u8> =
        dataset.inputs().data().iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    fs::write(path, encode(IMAGES_MAGIC, &dims, &data))?;
    Ok(())
}

pub fn write_idx_labels<T: Scalar>(path: &Path, dataset: &Dataset<T>) -> Result<()> {
    let labels = dataset.labels()?;
    if let Some(&big) = labels.iter().find(|&&l| l > 255) {
        return Err(Error::Invalid(format!("label {big} does not fit in a byte")));
    }
    let data: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    fs::write(path, encode(LABELS_MAGIC, &[labels.len()], &data))?;
    Ok(())
}

/// Train/test digit sets from `dir`.
///
/// Standard MNIST file names are used when present (truncated to the
/// requested sizes); otherwise synthetic digits for `seed` are generated and
/// cached in `dir` as IDX files.
pub fn load_or_generate_digits<T: Scalar>(
    dir: &Path,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let mnist =
        ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];
    if mnist.iter().all(|f| dir.join(f).exists()) {
        let train: Dataset<T> = load_idx(&dir.join(mnist[0]), &dir.join(mnist[1]))?;
        let test: Dataset<T> = load_idx(&dir.join(mnist[2]), &dir.join(mnist[3]))?;
        let take = |d: &Dataset<T>, n: usize| d.subset(&(0..n.min(d.len())).collect::<Vec<_>>());
        return Ok((take(&train, n_train)?, take(&test, n_test)?));
    }

    let stem = |split: &str, kind: &str, n: usize| format!("synth-digits-s{seed}-{split}{n}-{kind}");
    let paths = [
        dir.join(stem("train", "images-idx3-ubyte", n_train)),
        dir.join(stem("train", "labels-idx1-ubyte", n_train)),
        dir.join(stem("test", "images-idx3-ubyte", n_test)),
        dir.join(stem("test", "labels-idx1-ubyte", n_test)),
    ];
    if paths.iter().all(|p| p.exists()) {
        return Ok((load_idx(&paths[0], &paths[1])?, load_idx(&paths[2], &paths[3])?));
    }
    let train = generate_digits(n_train, &mut StreamRng::substream(seed, Stream::Data, 0))?;
    let test = generate_digits(n_test, &mut StreamRng::substream(seed, Stream::Holdout, 0))?;
    fs::create_dir_all(dir)?;
    write_idx_images(&paths[0], &train)?;
    write_idx_labels(&paths[1], &train)?;
    write_idx_images(&paths[2], &test)?;
    write_idx_labels(&paths[3], &test)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut pixels = vec![0u8; 2 * 28 * 28];
        pixels[0] = 255;
        pixels[28 * 28 + 5] = 51;
        encode(IMAGES_MAGIC, &[2, 28, 28], &pixels)
    }

    #[test]
    fn parses_two_image_fixture() {
        let a = parse_idx(&fixture()).unwrap();
        assert_eq!(a.dims, vec![2, 28, 28]);
        assert_eq!(a.data[0], 255);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = fixture();
        bytes[2] = 0x0d; // float payload
        assert!(matches!(parse_idx(&bytes), Err(Error::Format(_))));
        bytes[2] = 0x08;
        bytes[0] = 1;
        assert!(matches!(parse_idx(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let bytes = fixture();
        assert!(matches!(parse_idx(&bytes[..bytes.len() - 1]), Err(Error::Length(_))));
        assert!(matches!(parse_idx(&bytes[..10]), Err(Error::Length(_))));
    }

    #[test]
    fn load_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        fs::write(&ip, fixture()).unwrap();
        fs::write(&lp, encode(LABELS_MAGIC, &[2], &[3, 7])).unwrap();
        let d: Dataset<f64> = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.inputs().shape(), &[2, 28, 28]);
        assert_eq!(d.example(0)[0], 1.0);
        assert_eq!(d.example(1)[5], 0.2);
        assert_eq!(d.labels().unwrap(), vec![3, 7]);
        // swapped files are rejected by magic
        assert!(matches!(load_idx::<f64>(&lp, &ip), Err(Error::Format(_))));
    }
}
