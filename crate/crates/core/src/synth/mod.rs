//! Smooth synthetic inputs: shaded ellipsoid frames under a moving point
//! light, rotated digit images and linear noise-trajectory videos.

pub mod ellipsoid;
pub mod idx;
pub mod rotate;
pub mod store;
pub mod template;
pub mod video;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub use ellipsoid::{generate_ellipsoid_dataset, render_ellipsoid_frame, EllipsoidSpec, LightDataset};
pub use rotate::{generate_rotation_dataset, rotate_image};
pub use template::digit_seven_template;
pub use video::{
    generate_light_path_video, generate_noise_trajectory_video, noise_alpha, random_light_path, LightPath, VideoSequence,
};

/// Single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Image { height, width, pixels }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Packs equally sized images into an `(n, 1, h, w)` tensor.
pub fn images_to_tensor(images: &[Image]) -> Result<Tensor4> {
    let first = images.first().ok_or(Error::Empty("images_to_tensor"))?;
    let mut data = Vec::with_capacity(images.len() * first.pixels.len());
    for img in images {
        if (img.height, img.width) != (first.height, first.width) {
            return Err(Error::shape("images_to_tensor", (first.height, first.width), (img.height, img.width)));
        }
        data.extend_from_slice(&img.pixels);
    }
    Tensor4::from_vec([images.len(), 1, first.height, first.width], data)
}

/// Splits a single-channel tensor back into images.
pub fn tensor_to_images(t: &Tensor4) -> Result<Vec<Image>> {
    if t.channels() != 1 {
        return Err(Error::shape("tensor_to_images", t.dims(), "one channel"));
    }
    Ok((0..t.batch())
        .map(|n| Image {
            height: t.height(),
            width: t.width(),
            pixels: t.item(n).to_vec(),
        })
        .collect())
}
