//! Dataset readers: MNIST IDX, CIFAR-10 binary batches and JSON images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Image;

/// An image with its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: usize,
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset,
            message: "truncated header".into(),
        })
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {found:#010x}, expected {magic:#010x}"),
        });
    }
    Ok(())
}

fn expect_len(bytes: &[u8], needed: usize) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("truncated data: expected {needed} bytes"),
        });
    }
    Ok(())
}

/// Images of an IDX3 file, scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    expect_magic(bytes, IDX_IMAGES)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    expect_len(bytes, 16 + count * size)?;
    bytes[16..16 + count * size]
        .chunks(size.max(1))
        .take(count)
        .map(|px| Image::new(rows, cols, 1, px.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    expect_magic(bytes, IDX_LABELS)?;
    let count = read_u32(bytes, 4)? as usize;
    expect_len(bytes, 8 + count)?;
    Ok(bytes[8..8 + count].iter().map(|&b| b as usize).collect())
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::shape("label count", images.len(), labels.len()));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(image, label)| Sample { image, label })
        .collect())
}

const CIFAR_RECORD: usize = 3073;

/// Records of one label byte followed by 1024 red, 1024 green and 1024 blue
/// bytes, each plane row-major.
pub fn parse_cifar10_bin(bytes: &[u8]) -> Result<Vec<Sample>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format {
            offset: bytes.len() - bytes.len() % CIFAR_RECORD,
            message: format!("size {} is not a multiple of {CIFAR_RECORD}", bytes.len()),
        });
    }
    bytes
        .chunks(CIFAR_RECORD)
        .map(|rec| {
            let planes = &rec[1..];
            let pixels = (0..1024)
                .flat_map(|p| (0..3).map(move |ch| planes[ch * 1024 + p] as f64 / 255.0))
                .collect();
            Ok(Sample {
                image: Image::new(32, 32, 3, pixels)?,
                label: rec[0] as usize,
            })
        })
        .collect()
}

pub fn load_cifar10_bin(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    parse_cifar10_bin(&std::fs::read(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JsonImage {
    height: usize,
    width: usize,
    channels: usize,
    #[serde(default)]
    label: Option<usize>,
    pixels: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonImages {
    Many { images: Vec<JsonImage> },
    One(JsonImage),
}

/// Either `{"images": [...]}` or a single image object; a missing label
/// reads as 0.
pub fn parse_json_images(text: &str) -> Result<Vec<Sample>> {
    let parsed: JsonImages = serde_json::from_str(text)?;
    let list = match parsed {
        JsonImages::Many { images } => images,
        JsonImages::One(img) => vec![img],
    };
    list.into_iter()
        .map(|j| {
            Ok(Sample {
                image: Image::new(j.height, j.width, j.channels, j.pixels)?,
                label: j.label.unwrap_or(0),
            })
        })
        .collect()
}

pub fn load_json_images(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    parse_json_images(&std::fs::read_to_string(path)?)
}

pub fn images_to_json(samples: &[Sample]) -> Result<String> {
    let images = samples
        .iter()
        .map(|s| JsonImage {
            height: s.image.height(),
            width: s.image.width(),
            channels: s.image.channels(),
            label: Some(s.label),
            pixels: s.image.pixels().to_vec(),
        })
        .collect();
    Ok(serde_json::to_string(&JsonImages::Many { images })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IDX_IMAGES, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn idx_scaling() {
        let bytes = idx_images(1, 1, 2, &[255, 0]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!(imgs[0].pixels(), &[1.0, 0.0]);
    }

    #[test]
    fn idx_errors_carry_offsets() {
        let mut bytes = idx_images(2, 1, 2, &[1, 2, 3]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Format { offset: 19, .. })
        ));
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            parse_idx_labels(&[0, 0, 8]),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn cifar_record_layout() {
        let mut rec = vec![9u8];
        rec.extend((0..3072).map(|i| (i / 1024) as u8 * 100));
        let s = parse_cifar10_bin(&rec).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].label, 9);
        assert_eq!(s[0].image.get(0, 0, 1), 100.0 / 255.0);
        assert!(matches!(parse_cifar10_bin(&rec[..100]), Err(Error::Format { .. })));
    }

    #[test]
    fn json_single_and_many() {
        let one = r#"{"height":1,"width":2,"channels":1,"pixels":[0.1,0.2]}"#;
        let s = parse_json_images(one).unwrap();
        assert_eq!((s.len(), s[0].label), (1, 0));
        let many = images_to_json(&s).unwrap();
        assert_eq!(parse_json_images(&many).unwrap(), s);
    }
}
