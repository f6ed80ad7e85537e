//! Synthetic training pairs.
//!
//! The clean image is a smooth color field built from a few low-frequency
//! sinusoids per channel. The degraded copy applies a global color cast
//! (per-channel gamma and gain, a brightness offset) followed by a radial
//! vignette. The cast is a pure color mapping; the vignette depends on
//! position.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const WAVES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDistortion {
    pub gamma: [f64; 3],
    pub gain: [f64; 3],
    pub brightness: f64,
    /// Gain at the corners is `1 − vignette`; falloff is quadratic in the
    /// normalized radius.
    pub vignette: f64,
}

impl SyntheticDistortion {
    pub fn identity() -> Self {
        Self {
            gamma: [1.0; 3],
            gain: [1.0; 3],
            brightness: 0.0,
            vignette: 0.0,
        }
    }

    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            gamma: [(); 3].map(|_| rng.gen_range(0.85..1.15)),
            gain: [(); 3].map(|_| rng.gen_range(0.9..1.1)),
            brightness: rng.gen_range(-0.05..0.05),
            vignette: rng.gen_range(0.05..0.12),
        }
    }

    /// Degrades a 3×H×W image; the result is clamped to `[0, 1]`.
    pub fn apply(&self, clean: &Tensor) -> Result<Tensor> {
        let (c, h, w) = clean.chw()?;
        if c != 3 {
            return Err(Error::shape("synthetic", format!("expects 3 channels, got {c}")));
        }
        let mut out = clean.clone();
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let r_max2 = (cy * cy + cx * cx).max(1e-12);
        for ch in 0..3 {
            let plane = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let v = &mut plane[y * w + x];
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    let falloff = 1.0 - self.vignette * (dy * dy + dx * dx) / r_max2;
                    let cast = self.gain[ch] * (*v as f64).powf(self.gamma[ch]) + self.brightness;
                    *v = (cast * falloff).clamp(0.0, 1.0) as f32;
                }
            }
        }
        Ok(out)
    }
}

/// Smooth field with values inside `[0.1, 0.9]`.
pub fn smooth_field<R: Rng>(rng: &mut R, h: usize, w: usize) -> Tensor {
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        let waves: Vec<[f64; 4]> = (0..WAVES)
            .map(|_| {
                [
                    rng.gen_range(0.05..0.4 / WAVES as f64),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(0.0..TAU),
                ]
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
                let s: f64 = waves
                    .iter()
                    .map(|&[a, fx, fy, phase]| a * (TAU * (fx * u + fy * v) + phase).sin())
                    .sum();
                data.push((0.5 + s) as f32);
            }
        }
    }
    Tensor::new([3, h, w], data).expect("field size")
}

/// `(degraded, clean)` at `h×w`, fully determined by `seed`.
pub fn make_synthetic_pair(seed: u64, h: usize, w: usize) -> Result<(Tensor, Tensor)> {
    if h < 8 || w < 8 {
        return Err(Error::size("make_synthetic_pair", format!("needs at least 8×8, got {h}×{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = smooth_field(&mut rng, h, w);
    let degraded = SyntheticDistortion::sample(&mut rng).apply(&clean)?;
    Ok((degraded, clean))
}

/// `count` pairs with seeds `seed, seed + 1, …`.
pub fn synthetic_dataset(count: usize, seed: u64, h: usize, w: usize) -> Result<Vec<(Tensor, Tensor)>> {
    (0..count as u64)
        .map(|i| make_synthetic_pair(seed.wrapping_add(i), h, w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_distortion_is_exact() {
        let clean = smooth_field(&mut ChaCha8Rng::seed_from_u64(3), 16, 12);
        assert_eq!(SyntheticDistortion::identity().apply(&clean).unwrap(), clean);
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_synthetic_pair(11, 20, 24).unwrap(), make_synthetic_pair(11, 20, 24).unwrap());
        assert_ne!(make_synthetic_pair(11, 20, 24).unwrap(), make_synthetic_pair(12, 20, 24).unwrap());
    }

    #[test]
    fn clean_field_range() {
        for seed in 0..20 {
            let (deg, clean) = make_synthetic_pair(seed, 16, 16).unwrap();
            assert!(clean.data().iter().all(|v| (0.1..=0.9).contains(v)));
            assert!(deg.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rejects_tiny() {
        assert!(make_synthetic_pair(0, 7, 8).is_err());
    }
}
