use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Image;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Height of the point light above the ground plane.
pub const LIGHT_HEIGHT: f64 = 20.0;

/// Upper half ellipsoid seen orthographically from above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub resolution: usize,
    /// Pixels cover `[-half_width, half_width]²` in world units.
    pub half_width: f64,
}

impl Default for EllipsoidSpec {
    fn default() -> Self {
        EllipsoidSpec {
            a: 2.5,
            b: 4.0,
            c: 1.0,
            resolution: 28,
            half_width: 4.5,
        }
    }
}

impl EllipsoidSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.c > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "ellipsoid semi-axes must be positive, got ({}, {}, {})",
                self.a, self.b, self.c
            )));
        }
        if self.resolution == 0 || !(self.half_width > 0.0) {
            return Err(Error::InvalidSpec("ellipsoid image window must be non-empty".into()));
        }
        Ok(())
    }

    /// World coordinates of a pixel center; rows run from +y down to -y.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let step = 2.0 * self.half_width / self.resolution as f64;
        let x = -self.half_width + (col as f64 + 0.5) * step;
        let y = self.half_width - (row as f64 + 0.5) * step;
        (x, y)
    }

    /// Diffuse intensity `max(v·n, 0)` at the surface point above `(x, y)`,
    /// or 0 off the footprint.
    pub fn shade(&self, x: f64, y: f64, light: [f64; 3]) -> f64 {
        let (a2, b2, c2) = (self.a * self.a, self.b * self.b, self.c * self.c);
        let q = x * x / a2 + y * y / b2;
        if q > 1.0 {
            return 0.0;
        }
        let z = self.c * (1.0 - q).max(0.0).sqrt();
        let n = normalize([x / a2, y / b2, z / c2]);
        let v = normalize([light[0] - x, light[1] - y, light[2] - z]);
        (v[0] * n[0] + v[1] * n[1] + v[2] * n[2]).clamp(0.0, 1.0)
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}

pub fn render_ellipsoid_frame(light: [f64; 3], spec: &EllipsoidSpec) -> Result<Image> {
    spec.validate()?;
    if !(light[2] > 0.0) {
        return Err(Error::InvalidSpec(format!("light must be above the plane, z = {}", light[2])));
    }
    let r = spec.resolution;
    Ok(Image::from_fn(r, r, |row, col| {
        let (x, y) = spec.pixel_center(row, col);
        spec.shade(x, y, light)
    }))
}

#[derive(Debug, Clone)]
pub struct LightDataset {
    /// `(n, 1, R, R)` frames.
    pub images: Tensor4,
    pub lights: Vec<[f64; 3]>,
}

/// `n` frames lit from `(x, y, 20)` with `x, y` iid uniform on (−10, 10).
pub fn generate_ellipsoid_dataset(n: usize, seed: u64, spec: &EllipsoidSpec) -> Result<LightDataset> {
    if n == 0 {
        return Err(Error::Empty("generate_ellipsoid_dataset"));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lights: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), LIGHT_HEIGHT])
        .collect();
    let r = spec.resolution;
    let mut data = Vec::with_capacity(n * r * r);
    for light in &lights {
        data.extend(render_ellipsoid_frame(*light, spec)?.pixels);
    }
    Ok(LightDataset {
        images: Tensor4::from_vec([n, 1, r, r], data)?,
        lights,
    })
}
