//! IDX files (the MNIST distribution format): big-endian header, u8 payload.

use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw u8 images as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    /// Images scaled to [0, 1].
    pub fn to_images(&self) -> Vec<Image> {
        let n = self.rows * self.cols;
        self.pixels
            .chunks_exact(n)
            .map(|c| Image {
                height: self.rows,
                width: self.cols,
                pixels: c.iter().map(|&p| p as f64 / 255.0).collect(),
            })
            .collect()
    }
}

fn format_err(what: &str, offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        what: what.to_string(),
        offset: offset as u64,
        msg: msg.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_err(what, bytes.len(), "truncated header"))
}

pub fn parse_idx_images(bytes: &[u8], what: &str) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(what, 0, format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let n = read_u32(bytes, 4, what)? as usize;
    let rows = read_u32(bytes, 8, what)? as usize;
    let cols = read_u32(bytes, 12, what)? as usize;
    let expected = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(format_err(what, bytes.len(), format!("truncated payload: {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(format_err(what, 16 + expected, "trailing bytes"));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], what: &str) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != LABELS_MAGIC {
        return Err(format_err(what, 0, format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let n = read_u32(bytes, 4, what)? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(format_err(what, bytes.len(), format!("truncated payload: {} of {n} labels", payload.len())));
    }
    if payload.len() > n {
        return Err(format_err(what, 8 + n, "trailing bytes"));
    }
    Ok(payload.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    parse_idx_images(&std::fs::read(path)?, &path.display().to_string())
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&std::fs::read(path)?, &path.display().to_string())
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    std::fs::write(path, encode_idx_images(images))?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    std::fs::write(path, encode_idx_labels(labels))?;
    Ok(())
}

/// Loads images scaled to [0, 1], optionally keeping only those whose
/// companion label equals `filter.1`.
pub fn load_idx_images(images: &Path, filter: Option<(&Path, u8)>) -> Result<Vec<Image>> {
    let raw = read_idx_images(images)?;
    let all = raw.to_images();
    match filter {
        None => Ok(all),
        Some((labels_path, label)) => {
            let labels = read_idx_labels(labels_path)?;
            if labels.len() != all.len() {
                return Err(Error::shape("idx labels vs images", labels.len(), all.len()));
            }
            Ok(all.into_iter().zip(labels).filter(|(_, l)| *l == label).map(|(img, _)| img).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_fields_are_big_endian() {
        let imgs = IdxImages {
            rows: 2,
            cols: 3,
            pixels: (0..12).collect(),
        };
        let bytes = encode_idx_images(&imgs);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 2]);
        assert_eq!(parse_idx_images(&bytes, "mem").unwrap(), imgs);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let labels = encode_idx_labels(&[1, 7, 7]);
        let err = parse_idx_images(&labels, "mem").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
        let imgs = encode_idx_images(&IdxImages {
            rows: 2,
            cols: 2,
            pixels: vec![9; 8],
        });
        let err = parse_idx_images(&imgs[..imgs.len() - 1], "mem").unwrap_err();
        assert!(matches!(err, Error::Format { offset, .. } if offset == imgs.len() as u64 - 1));
        assert!(parse_idx_labels(&labels[..9], "mem").is_err());
    }

    #[test]
    fn label_filter_keeps_matching_images() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("labels");
        write_idx_images(
            &ip,
            &IdxImages {
                rows: 1,
                cols: 2,
                pixels: vec![0, 255, 10, 20, 255, 0],
            },
        )
        .unwrap();
        write_idx_labels(&lp, &[7, 3, 7]).unwrap();
        let sevens = load_idx_images(&ip, Some((&lp, 7))).unwrap();
        assert_eq!(sevens.len(), 2);
        assert_eq!(sevens[0].pixels, vec![0.0, 1.0]);
        assert_eq!(sevens[1].pixels, vec![1.0, 0.0]);
        assert_eq!(load_idx_images(&ip, None).unwrap().len(), 3);
    }

    proptest! {
        #[test]
        fn image_round_trip(rows in 1usize..6, cols in 1usize..6, n in 0usize..5, seed in any::<u8>()) {
            let pixels: Vec<u8> = (0..rows * cols * n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let imgs = IdxImages { rows, cols, pixels };
            prop_assert_eq!(parse_idx_images(&encode_idx_images(&imgs), "mem").unwrap(), imgs);
        }
    }
}
