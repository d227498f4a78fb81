use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ellipsoid::{render_ellipsoid_frame, EllipsoidSpec, LIGHT_HEIGHT};
use super::Image;
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Equally sized single-channel frames sampled at a uniform period.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub height: usize,
    pub width: usize,
    /// Frame-major pixel data, `frames × height × width`.
    data: Vec<f64>,
    pub period: f64,
}

impl VideoSequence {
    pub fn new(height: usize, width: usize, data: Vec<f64>, period: f64) -> Result<Self> {
        if height * width == 0 || data.len() % (height * width) != 0 {
            return Err(Error::shape("VideoSequence::new", (height, width), data.len()));
        }
        if !(period > 0.0) {
            return Err(Error::InvalidSpec(format!("frame period must be positive, got {period}")));
        }
        Ok(VideoSequence {
            height,
            width,
            data,
            period,
        })
    }

    pub fn from_frames(frames: &[Image], period: f64) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("VideoSequence::from_frames"))?;
        let mut data = Vec::with_capacity(frames.len() * first.pixels.len());
        for f in frames {
            if (f.height, f.width) != (first.height, first.width) {
                return Err(Error::shape("VideoSequence::from_frames", (first.height, first.width), (f.height, f.width)));
            }
            data.extend_from_slice(&f.pixels);
        }
        Self::new(first.height, first.width, data, period)
    }

    /// Interprets an `(n, 1, h, w)` tensor as n frames.
    pub fn from_tensor(t: &Tensor4, period: f64) -> Result<Self> {
        if t.channels() != 1 {
            return Err(Error::shape("VideoSequence::from_tensor", t.dims(), "one channel"));
        }
        Self::new(t.height(), t.width(), t.data().to_vec(), period)
    }

    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec([self.frame_count(), 1, self.height, self.width], self.data.clone()).expect("consistent dims")
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / (self.height * self.width)
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Time series of one pixel.
    pub fn pixel_series(&self, row: usize, col: usize) -> Vec<f64> {
        let n = self.height * self.width;
        let off = row * self.width + col;
        (0..self.frame_count()).map(|t| self.data[t * n + off]).collect()
    }
}

/// Straight light path at constant height, sampled every `step` world units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightPath {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub step: f64,
}

impl LightPath {
    pub fn length(&self) -> f64 {
        let dx = self.end[0] - self.start[0];
        let dy = self.end[1] - self.start[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Number of uniformly spaced samples `start + k·step·dir` that stay on
    /// the path, `floor(L / step) + 1`.
    pub fn frame_count(&self) -> usize {
        // tolerance so exact multiples are not lost to rounding
        (self.length() / self.step + 1e-9).floor() as usize + 1
    }

    pub fn positions(&self) -> Result<Vec<[f64; 3]>> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidSpec(format!("light step must be positive, got {}", self.step)));
        }
        let len = self.length();
        if len == 0.0 {
            return Err(Error::InvalidSpec("zero-length light path".into()));
        }
        let dir = [(self.end[0] - self.start[0]) / len, (self.end[1] - self.start[1]) / len];
        Ok((0..self.frame_count())
            .map(|k| {
                let d = k as f64 * self.step;
                [self.start[0] + d * dir[0], self.start[1] + d * dir[1], LIGHT_HEIGHT]
            })
            .collect())
    }
}

impl Default for LightPath {
    fn default() -> Self {
        LightPath {
            start: [-9.0, -9.0],
            end: [9.0, 9.0],
            step: 0.1,
        }
    }
}

/// Start and end drawn iid uniform on (−10, 10)².
pub fn random_light_path<R: Rng>(rng: &mut R, step: f64) -> LightPath {
    LightPath {
        start: [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)],
        end: [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)],
        step,
    }
}

/// Renders one frame per light position along `path`. The time step between
/// frames is 1.
pub fn generate_light_path_video(path: &LightPath, spec: &EllipsoidSpec) -> Result<VideoSequence> {
    let frames = path
        .positions()?
        .into_iter()
        .map(|light| render_ellipsoid_frame(light, spec))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::from_frames(&frames, 1.0)
}

/// `α(t) = 10⁻²·(0.02·t − 1)`.
pub fn noise_alpha(t: usize) -> f64 {
    1e-2 * (0.02 * t as f64 - 1.0)
}

pub const NOISE_VIDEO_FRAMES: usize = 100;

/// `I(t) = I₀ + α(t)·I_e` for t = 1..100 with `I_e` iid standard normal.
/// Frames are not clamped, so every pixel stays exactly affine in t.
pub fn generate_noise_trajectory_video(template: &Image, seed: u64) -> Result<VideoSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..template.pixels.len()).map(|_| rng.sample(StandardNormal)).collect();
    noise_trajectory_with(template, &noise)
}

pub(crate) fn noise_trajectory_with(template: &Image, noise: &[f64]) -> Result<VideoSequence> {
    if noise.len() != template.pixels.len() {
        return Err(Error::shape("noise trajectory", template.pixels.len(), noise.len()));
    }
    let mut data = Vec::with_capacity(NOISE_VIDEO_FRAMES * noise.len());
    for t in 1..=NOISE_VIDEO_FRAMES {
        let alpha = noise_alpha(t);
        data.extend(template.pixels.iter().zip(noise).map(|(i0, e)| i0 + alpha * e));
    }
    VideoSequence::new(template.height, template.width, data, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_path_frame_count() {
        let path = LightPath::default();
        // sqrt(18² + 18²) / 0.1 = 254.56...
        assert_eq!(path.frame_count(), 255);
        let halved = LightPath { step: 0.05, ..path };
        assert_eq!(halved.frame_count(), 510);
        assert_eq!(halved.frame_count(), 2 * path.frame_count());
    }

    #[test]
    fn positions_are_uniformly_spaced() {
        let pos = LightPath::default().positions().unwrap();
        for w in pos.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            assert!((d - 0.1).abs() < 1e-12);
        }
        assert_eq!(pos[0], [-9.0, -9.0, 20.0]);
    }

    #[test]
    fn zero_length_path_is_an_error() {
        let path = LightPath {
            start: [1.0, 1.0],
            end: [1.0, 1.0],
            step: 0.1,
        };
        assert!(generate_light_path_video(&path, &EllipsoidSpec::default()).is_err());
        let bad_step = LightPath { step: 0.0, ..Default::default() };
        assert!(bad_step.positions().is_err());
    }

    #[test]
    fn light_video_frames_are_in_unit_range() {
        let path = LightPath {
            start: [-2.0, 0.0],
            end: [2.0, 1.0],
            step: 0.5,
        };
        let video = generate_light_path_video(&path, &EllipsoidSpec::default()).unwrap();
        assert_eq!(video.frame_count(), path.frame_count());
        assert!(video.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn noise_alpha_endpoints() {
        assert!((noise_alpha(1) + 0.0098).abs() < 1e-15);
        assert!((noise_alpha(100) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_gives_constant_video() {
        let template = Image::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 16.0);
        let video = noise_trajectory_with(&template, &[0.0; 16]).unwrap();
        assert_eq!(video.frame_count(), 100);
        for t in 0..100 {
            assert_eq!(video.frame(t), template.pixels.as_slice());
        }
    }

    #[test]
    fn noise_video_is_affine_in_time() {
        let template = Image::from_fn(6, 6, |r, c| ((r + c) as f64 / 12.0).sin().abs());
        let video = generate_noise_trajectory_video(&template, 9).unwrap();
        assert_eq!(video.frame_count(), 100);
        for r in 0..6 {
            for c in 0..6 {
                let s = video.pixel_series(r, c);
                for w in s.windows(3) {
                    assert!((w[0] + w[2] - 2.0 * w[1]).abs() < 1e-15);
                }
            }
        }
    }
}
