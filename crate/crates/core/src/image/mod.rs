//! 8-bit grayscale images: storage, PGM I/O, tensor conversion, fidelity
//! metrics and the average-hash fingerprint used for database dispatch.

mod hash;
mod metrics;
mod pgm;
mod synth;

pub use hash::{fingerprint, hamming, Fingerprint};
pub use metrics::{mse, psnr, ssim, Psnr};
pub use pgm::{read_pgm, write_pgm};
pub use synth::synthetic_scene;

use crate::nn::Tensor;

/// Smallest accepted side length; fingerprinting reduces to an 8x8 grid.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ImageError {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} pixels, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported depth: maxval {0} exceeds 255")]
    UnsupportedDepth(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("image {width}x{height} is smaller than the 8x8 minimum")]
    TooSmall { width: usize, height: usize },
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    /// Bits per pixel. Only 8-bit images are supported.
    pub const DEPTH: u32 = 8;

    /// Builds an image, enforcing the 8x8 minimum.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(ImageError::TooSmall { width, height });
        }
        Self::new_unchecked_size(width, height, pixels)
    }

    /// Builds an image of any non-zero size. PGM reading and the metrics
    /// accept tiny images; only fingerprinting and SSIM need 8x8.
    pub fn new_unchecked_size(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ShapeMismatch(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(ImageError::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Maps pixels to `[-1, 1]` as a `[1, H, W]` tensor.
pub fn normalize(img: &ImageBuffer) -> Tensor {
    let data = img
        .pixels
        .iter()
        .map(|&p| (p as f64 / 127.5 - 1.0) as f32)
        .collect();
    Tensor::new(vec![1, img.height, img.width], data).expect("pixel count matches shape")
}

/// Inverse of [`normalize`]. Accepts `[1, H, W]` or a single-sample
/// `[1, 1, H, W]` batch.
pub fn denormalize(t: &Tensor) -> Result<ImageBuffer, ImageError> {
    let (h, w) = match t.shape() {
        [1, h, w] | [1, 1, h, w] => (*h, *w),
        other => {
            return Err(ImageError::ShapeMismatch(format!(
                "expected a 1xHxW tensor, got {other:?}"
            )))
        }
    };
    let pixels = t
        .data()
        .iter()
        .map(|&v| {
            let v = (v as f64).clamp(-1.0, 1.0);
            ((v + 1.0) * 127.5).round() as u8
        })
        .collect();
    ImageBuffer::new_unchecked_size(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_endpoints() {
        let img = ImageBuffer::new_unchecked_size(3, 1, vec![0, 255, 127]).unwrap();
        let t = normalize(&img);
        assert_eq!(t.shape(), &[1, 1, 3]);
        assert_eq!(t.data()[0], -1.0);
        assert_eq!(t.data()[1], 1.0);
        // 127 / 127.5 - 1 = -0.0039215686...
        assert!((t.data()[2] as f64 + 0.003_921_568_6).abs() < 1e-7);
    }

    #[test]
    fn denormalize_clamps() {
        let t = Tensor::new(vec![1, 1, 3], vec![-1.0, 1.7, -3.0]).unwrap();
        let img = denormalize(&t).unwrap();
        assert_eq!(img.pixels(), &[0, 255, 0]);
    }

    #[test]
    fn normalize_round_trips_every_pixel_value() {
        let pixels: Vec<u8> = (0..=255).collect();
        let img = ImageBuffer::new(16, 16, pixels).unwrap();
        assert_eq!(denormalize(&normalize(&img)).unwrap(), img);
    }

    #[test]
    fn denormalize_rejects_multichannel() {
        let t = Tensor::zeros(vec![2, 4, 4]);
        assert!(matches!(denormalize(&t), Err(ImageError::ShapeMismatch(_))));
    }

    #[test]
    fn constructor_invariants() {
        assert!(matches!(
            ImageBuffer::new(4, 8, vec![0; 32]),
            Err(ImageError::TooSmall { .. })
        ));
        assert!(matches!(
            ImageBuffer::new(8, 8, vec![0; 63]),
            Err(ImageError::ShapeMismatch(_))
        ));
    }
}
