use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Image;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

fn sample_bilinear(img: &Image, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= img.height as f64 || c >= img.width as f64 {
            0.0
        } else {
            img.get(r as usize, c as usize)
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
    let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotates counter-clockwise by `degrees` about the image center with
/// bilinear interpolation; samples falling outside the image read as 0.
pub fn rotate_image(img: &Image, degrees: f64) -> Image {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    Image::from_fn(img.height, img.width, |r, c| {
        let dy = r as f64 - cy;
        let dx = c as f64 - cx;
        // inverse map from output pixel to source position
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        sample_bilinear(img, sy, sx)
    })
}

/// Each template rotated by `per_template` angles drawn iid uniform on
/// (−max_degrees, max_degrees); images are ordered template-major.
pub fn generate_rotation_dataset(templates: &[Image], per_template: usize, max_degrees: f64, seed: u64) -> Result<Tensor4> {
    if templates.is_empty() || per_template == 0 {
        return Err(Error::Empty("generate_rotation_dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(templates.len() * per_template);
    for tpl in templates {
        for _ in 0..per_template {
            let angle = rng.gen_range(-max_degrees..max_degrees);
            images.push(rotate_image(tpl, angle));
        }
    }
    super::images_to_tensor(&images)
}
