//! Seeded synthetic test scenes.

use super::ImageBuffer;
use crate::nn::SeededRng;
use std::f64::consts::TAU;

/// A smooth scene with a little sensor-like noise: a few low-frequency
/// plane waves plus two soft blobs, scaled into `[24, 232]`, then Gaussian
/// noise of standard deviation `noise_sigma` gray levels. Deterministic in
/// all arguments; `width` and `height` must be at least 8.
pub fn synthetic_scene(width: usize, height: usize, seed: u64, noise_sigma: f64) -> ImageBuffer {
    let mut rng = SeededRng::new(seed);
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            let angle = rng.uniform() * TAU;
            let freq = 0.5 + 1.5 * rng.uniform();
            [
                angle.cos() * freq,
                angle.sin() * freq,
                rng.uniform() * TAU,
                0.5 + rng.uniform(),
            ]
        })
        .collect();
    let blobs: Vec<[f64; 4]> = (0..2)
        .map(|_| {
            [
                rng.uniform(),
                rng.uniform(),
                0.1 + 0.2 * rng.uniform(),
                rng.symmetric(2.0),
            ]
        })
        .collect();
    let field: Vec<f64> = (0..width * height)
        .map(|i| {
            let u = (i % width) as f64 / width as f64;
            let v = (i / width) as f64 / height as f64;
            let w: f64 = waves
                .iter()
                .map(|w| w[3] * (TAU * (w[0] * u + w[1] * v) + w[2]).cos())
                .sum();
            let b: f64 = blobs
                .iter()
                .map(|b| {
                    b[3] * (-((u - b[0]).powi(2) + (v - b[1]).powi(2)) / (2.0 * b[2] * b[2])).exp()
                })
                .sum();
            w + b
        })
        .collect();
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let pixels = field
        .iter()
        .map(|&f| {
            let base = 24.0 + 208.0 * (f - lo) / span;
            let noisy = if noise_sigma > 0.0 {
                base + noise_sigma * rng.normal()
            } else {
                base
            };
            noisy.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageBuffer::new(width, height, pixels).expect("scene sides are at least 8")
}
