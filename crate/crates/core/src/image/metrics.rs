use super::{ImageBuffer, ImageError, MIN_SIDE};
use std::fmt;

const PEAK: f64 = 255.0;
const C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);
const WINDOW: usize = 8;

/// Peak signal-to-noise ratio in dB; identical images are `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.4}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    let sum: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    Ok(sum as f64 / a.pixels().len() as f64)
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<Psnr, ImageError> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m))
}

pub(crate) fn psnr_from_mse(m: f64) -> Psnr {
    if m == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(10.0 * (PEAK * PEAK / m).log10())
    }
}

/// Mean SSIM over non-overlapping 8x8 windows. Rows and columns that do
/// not fill a whole window are ignored.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(ImageError::TooSmall {
            width: w,
            height: h,
        });
    }
    let n = (WINDOW * WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for wy in (0..=h - WINDOW).step_by(WINDOW) {
        for wx in (0..=w - WINDOW).step_by(WINDOW) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in wy..wy + WINDOW {
                for x in wx..wx + WINDOW {
                    let p = a.get(x, y) as f64;
                    let q = b.get(x, y) as f64;
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, pixels: Vec<u8>) -> ImageBuffer {
        ImageBuffer::new_unchecked_size(w, h, pixels).unwrap()
    }

    fn textured(seed: u64) -> ImageBuffer {
        let mut s = seed;
        ImageBuffer::from_fn(64, 64, |x, y| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            ((x * 3 + y * 2) as u64 + (s % 21)) as u8
        })
        .unwrap()
    }

    #[test]
    fn mse_cases() {
        let a = img(2, 2, vec![7, 8, 9, 10]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(
            mse(&img(2, 1, vec![0, 0]), &img(2, 1, vec![255, 255])).unwrap(),
            65025.0
        );
        assert_eq!(
            mse(&img(2, 1, vec![0, 10]), &img(2, 1, vec![10, 0])).unwrap(),
            100.0
        );
        assert!(matches!(
            mse(&img(2, 1, vec![0, 0]), &img(1, 2, vec![0, 0])),
            Err(ImageError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn psnr_cases() {
        let a = img(2, 1, vec![0, 0]);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
        assert_eq!(
            psnr(&a, &img(2, 1, vec![255, 255])).unwrap(),
            Psnr::Finite(0.0)
        );
        // 10 * log10(65025 / 650.25) = 10 * log10(100) = 20
        assert!((psnr_from_mse(650.25).db() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = textured(3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_constant_extremes() {
        let a = ImageBuffer::filled(8, 8, 0).unwrap();
        let b = ImageBuffer::filled(8, 8, 255).unwrap();
        // Zero variance: SSIM collapses to C1 / (255^2 + C1).
        let expected = C1 / (PEAK * PEAK + C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!(got < 1e-3);
    }

    #[test]
    fn ssim_single_pixel_flip() {
        let a = textured(11);
        let mut b = a.clone();
        b.pixels_mut()[64 * 20 + 20] ^= 0x80;
        let s = ssim(&a, &b).unwrap();
        assert!(s > 0.9 && s < 1.0, "ssim {s}");
    }

    #[test]
    fn ssim_too_small() {
        let a = img(4, 4, vec![0; 16]);
        assert!(matches!(ssim(&a, &a), Err(ImageError::TooSmall { .. })));
    }
}
