//! `gen-data`: training / validation image sets and test videos.

use std::path::Path;

use nslab::rng::derive_labeled;
use nslab::synth::idx::load_idx_images;
use nslab::synth::store::{read_image_set, read_video, write_image_set, write_video};
use nslab::synth::{
    digit_seven_template, generate_ellipsoid_dataset, generate_light_path_video, generate_noise_trajectory_video,
    generate_rotation_dataset, random_light_path, EllipsoidSpec, Image, VideoSequence,
};
use nslab::{Result, Tensor4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataConfig, DatasetKind, ExperimentConfig};
use crate::layout::Layout;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub train_images: usize,
    pub val_images: usize,
    pub videos: usize,
    pub frames_per_video: Vec<usize>,
}

fn templates(data: &DataConfig) -> Result<Vec<Image>> {
    let mut images = match &data.idx_images {
        Some(path) => load_idx_images(path, data.idx_labels.as_deref().map(|l| (l, data.digit)))?,
        None => (0..data.templates as u64).map(|v| digit_seven_template(28, v)).collect(),
    };
    if data.templates > 0 {
        images.truncate(data.templates);
    }
    if images.is_empty() {
        return Err(nslab::Error::Config("no template images selected".into()));
    }
    Ok(images)
}

fn make_videos(cfg: &ExperimentConfig, templates: Option<&[Image]>) -> Result<Vec<VideoSequence>> {
    let seed = cfg.seed;
    (0..cfg.data.videos)
        .map(|v| match templates {
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_labeled(seed, "video", v as u64));
                let path = random_light_path(&mut rng, cfg.data.step);
                generate_light_path_video(&path, &EllipsoidSpec::default())
            }
            Some(t) => {
                let pick = derive_labeled(seed, "noise-template", v as u64) % t.len() as u64;
                generate_noise_trajectory_video(&t[pick as usize], derive_labeled(seed, "noise-video", v as u64))
            }
        })
        .collect()
}

/// Writes every dataset artifact. Reruns with the same config overwrite
/// the files with identical bytes.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<GenSummary> {
    let layout = Layout::new(&cfg.out);
    let seed = cfg.seed;
    let (train, val, videos): (Tensor4, Tensor4, Vec<VideoSequence>) = match cfg.data.kind {
        DatasetKind::Ellipsoid => {
            let spec = EllipsoidSpec::default();
            let train = generate_ellipsoid_dataset(cfg.data.train_images, derive_labeled(seed, "train-images", 0), &spec)?;
            let val = generate_ellipsoid_dataset(cfg.data.val_images, derive_labeled(seed, "val-images", 0), &spec)?;
            (train.images, val.images, make_videos(cfg, None)?)
        }
        DatasetKind::MnistRotation => {
            let t = templates(&cfg.data)?;
            let d = &cfg.data;
            let train = generate_rotation_dataset(&t, d.angles, d.max_degrees, derive_labeled(seed, "rotation-train", 0))?;
            let val = generate_rotation_dataset(&t, d.val_angles, d.max_degrees, derive_labeled(seed, "rotation-val", 0))?;
            (train, val, make_videos(cfg, Some(&t))?)
        }
    };
    write_image_set(&layout.train_set(), &train)?;
    write_image_set(&layout.val_set(), &val)?;
    for (v, video) in videos.iter().enumerate() {
        write_video(&layout.video(v), video)?;
    }
    Ok(GenSummary {
        train_images: train.batch(),
        val_images: val.batch(),
        videos: videos.len(),
        frames_per_video: videos.iter().map(|v| v.frame_count()).collect(),
    })
}

pub fn load_sets(layout: &Layout) -> Result<(Tensor4, Tensor4)> {
    Ok((read_image_set(&layout.train_set())?, read_image_set(&layout.val_set())?))
}

pub fn load_videos(cfg: &ExperimentConfig) -> Result<Vec<VideoSequence>> {
    let layout = Layout::new(&cfg.out);
    let missing: Vec<_> = (0..cfg.data.videos).map(|v| layout.video(v)).filter(|p| !p.join("manifest.txt").exists()).collect();
    if !missing.is_empty() {
        return Err(nslab::Error::MissingInput(missing));
    }
    (0..cfg.data.videos).map(|v| read_video(&layout.video(v))).collect()
}

pub(crate) fn video_files(dir: &Path) -> [std::path::PathBuf; 2] {
    [dir.join("frames.bin"), dir.join("manifest.txt")]
}
