//! On-disk frame stacks: a directory holding `frames.bin` (little-endian
//! f64, frame-major) and a `manifest.txt` of `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::video::VideoSequence;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const FRAMES_FILE: &str = "frames.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";
const FORMAT: &str = "nslab-frames";
const VERSION: u32 = 1;

fn f64s_to_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn le_to_f64s(bytes: &[u8], what: &Path) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format {
            what: what.display().to_string(),
            offset: (bytes.len() - bytes.len() % 8) as u64,
            msg: "length is not a multiple of 8".into(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub(crate) fn parse_manifest(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn field<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, path: &Path) -> Result<T> {
    m.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Format {
        what: path.display().to_string(),
        offset: 0,
        msg: format!("missing or invalid `{key}`"),
    })
}

fn write_stack(dir: &Path, kind: &str, height: usize, width: usize, period: f64, data: &[f64]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let count = data.len() / (height * width);
    let manifest = format!(
        "format={FORMAT}\nversion={VERSION}\nkind={kind}\nheight={height}\nwidth={width}\ncount={count}\nperiod={period}\n"
    );
    fs::write(dir.join(FRAMES_FILE), f64s_to_le(data))?;
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

fn read_stack(dir: &Path, kind: &str) -> Result<(usize, usize, f64, Vec<f64>)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let frames_path = dir.join(FRAMES_FILE);
    let missing: Vec<_> = [&manifest_path, &frames_path].into_iter().filter(|p| !p.exists()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingInput(missing));
    }
    let m = parse_manifest(&fs::read_to_string(&manifest_path)?);
    if m.get("format").map(String::as_str) != Some(FORMAT) || m.get("kind").map(String::as_str) != Some(kind) {
        return Err(Error::Format {
            what: manifest_path.display().to_string(),
            offset: 0,
            msg: format!("not a {FORMAT} {kind} manifest"),
        });
    }
    let version: u32 = field(&m, "version", &manifest_path)?;
    if version != VERSION {
        return Err(Error::Format {
            what: manifest_path.display().to_string(),
            offset: 0,
            msg: format!("unsupported version {version}"),
        });
    }
    let height: usize = field(&m, "height", &manifest_path)?;
    let width: usize = field(&m, "width", &manifest_path)?;
    let count: usize = field(&m, "count", &manifest_path)?;
    let period: f64 = field(&m, "period", &manifest_path)?;
    let data = le_to_f64s(&fs::read(&frames_path)?, &frames_path)?;
    if data.len() != count * height * width {
        return Err(Error::Format {
            what: frames_path.display().to_string(),
            offset: (data.len() * 8) as u64,
            msg: format!("expected {count} frames of {height}x{width}"),
        });
    }
    Ok((height, width, period, data))
}

pub fn write_video(dir: &Path, video: &VideoSequence) -> Result<()> {
    write_stack(dir, "video", video.height, video.width, video.period, video.data())
}

pub fn read_video(dir: &Path) -> Result<VideoSequence> {
    let (h, w, period, data) = read_stack(dir, "video")?;
    VideoSequence::new(h, w, data, period)
}

/// Stores an `(n, 1, h, w)` image set.
pub fn write_image_set(dir: &Path, images: &Tensor4) -> Result<()> {
    if images.channels() != 1 {
        return Err(Error::shape("write_image_set", images.dims(), "one channel"));
    }
    write_stack(dir, "imageset", images.height(), images.width(), 1.0, images.data())
}

pub fn read_image_set(dir: &Path) -> Result<Tensor4> {
    let (h, w, _, data) = read_stack(dir, "imageset")?;
    let n = data.len() / (h * w);
    Tensor4::from_vec([n, 1, h, w], data)
}
