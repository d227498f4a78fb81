use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Image;

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let t = ((wx * vx + wy * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Procedural stand-in for an MNIST "7": a top bar and a diagonal stroke
/// with anti-aliased edges. `variant` jitters stroke placement and width.
pub fn digit_seven_template(size: usize, variant: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(variant);
    let s = size as f64;
    let mut jitter = |amount: f64| rng.gen_range(-amount..amount) * s;
    let top_left = (0.25 * s + jitter(0.04), 0.24 * s + jitter(0.03));
    let top_right = (0.74 * s + jitter(0.04), 0.22 * s + jitter(0.03));
    let foot = (0.42 * s + jitter(0.06), 0.80 * s + jitter(0.03));
    let half_width = (0.055 + rng.gen_range(0.0..0.02)) * s;
    let soft = 0.04 * s;
    Image::from_fn(size, size, |r, c| {
        let p = (c as f64 + 0.5, r as f64 + 0.5);
        let d = segment_distance(p, top_left, top_right).min(segment_distance(p, top_right, foot));
        // smoothstep falloff over `soft` pixels outside the stroke core
        let u = ((d - half_width) / soft).clamp(0.0, 1.0);
        1.0 - u * u * (3.0 - 2.0 * u)
    })
}
