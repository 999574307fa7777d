//! Classical steganalysis, used to contrast protocol covers with a
//! sequential-LSB embedding baseline.
//!
//! Only two attacks are implemented: the pairs-of-values chi-square test
//! and an LSB-plane monobit test. Resistance to these says nothing about
//! other detectors.

use crate::image::ImageBuffer;
use crate::modeldb::ModelDatabase;
use crate::nn::SeededRng;
use crate::protocol::{hide, ProtocolError};
use statrs::function::{erf::erfc, gamma::gamma_ur};
use std::fmt::{self, Write as _};

/// Fewest pixels either attack accepts.
pub const MIN_PIXELS: usize = 64;
/// Chi-square p-values above this are flagged.
pub const CHI_SQUARE_THRESHOLD: f64 = 0.95;
/// Monobit p-values above this are flagged, when the chi-square test agrees.
pub const MONOBIT_THRESHOLD: f64 = 0.99;

pub const CHI_SQUARE: &str = "chi_square";
pub const MONOBIT: &str = "lsb_monobit";

#[derive(Debug, thiserror::Error)]
pub enum StegError {
    #[error("image has {pixels} pixels, attacks need at least {MIN_PIXELS}")]
    TooSmall { pixels: usize },
    #[error("payload of {bits} bits exceeds the carrier's {capacity} pixels")]
    PayloadTooLarge { bits: usize, capacity: usize },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    Suspicious,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Clean => "clean",
            Verdict::Suspicious => "suspicious",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub attack: &'static str,
    pub statistic: f64,
    pub p_value: f64,
    pub verdict: Verdict,
    pub threshold: f64,
    /// Human-readable decision rule.
    pub rule: &'static str,
}

/// Writes payload bits, most significant first, into the least significant
/// bits of the first `8 * payload.len()` pixels in raster order.
pub fn lsb_embed(carrier: &ImageBuffer, payload: &[u8]) -> Result<ImageBuffer, StegError> {
    let capacity = carrier.pixels().len();
    let bits = payload.len() * 8;
    if bits > capacity {
        return Err(StegError::PayloadTooLarge { bits, capacity });
    }
    let mut out = carrier.clone();
    for (i, px) in out.pixels_mut()[..bits].iter_mut().enumerate() {
        let bit = (payload[i / 8] >> (7 - i % 8)) & 1;
        *px = (*px & !1) | bit;
    }
    Ok(out)
}

/// Reads `len` bytes back out of the LSB plane.
pub fn lsb_extract(img: &ImageBuffer, len: usize) -> Result<Vec<u8>, StegError> {
    let capacity = img.pixels().len();
    if len * 8 > capacity {
        return Err(StegError::PayloadTooLarge {
            bits: len * 8,
            capacity,
        });
    }
    Ok(img.pixels()[..len * 8]
        .chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &p| (acc << 1) | (p & 1)))
        .collect())
}

/// Random payload filling every whole byte of LSB capacity.
pub fn full_capacity_payload(img: &ImageBuffer, seed: u64) -> Vec<u8> {
    let mut rng = SeededRng::new(seed);
    (0..img.pixels().len() / 8)
        .map(|_| (rng.next_u64() >> 56) as u8)
        .collect()
}

fn check_size(img: &ImageBuffer) -> Result<(), StegError> {
    let pixels = img.pixels().len();
    if pixels < MIN_PIXELS {
        Err(StegError::TooSmall { pixels })
    } else {
        Ok(())
    }
}

/// Pairs-of-values statistic over a 256-bin histogram and its degrees of
/// freedom: `sum (h[2k] - e_k)^2 / e_k` with `e_k = (h[2k] + h[2k+1]) / 2`
/// over pairs with `e_k > 0`, and `max(used_pairs - 1, 1)`.
pub fn chi_square_statistic(histogram: &[u64; 256]) -> (f64, usize) {
    let mut stat = 0.0;
    let mut used = 0;
    for k in 0..128 {
        let e = (histogram[2 * k] + histogram[2 * k + 1]) as f64 / 2.0;
        if e > 0.0 {
            stat += (histogram[2 * k] as f64 - e).powi(2) / e;
            used += 1;
        }
    }
    (stat, used.max(2) - 1)
}

/// Upper tail of the chi-square distribution, `P(X >= stat)`.
pub fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if stat <= 0.0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, stat / 2.0).clamp(0.0, 1.0)
    }
}

pub fn histogram(img: &ImageBuffer) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in img.pixels() {
        h[p as usize] += 1;
    }
    h
}

/// Westfeld-Pfitzmann chi-square attack. A high p-value means the value
/// pairs are suspiciously equalized, as sequential LSB replacement leaves
/// them.
pub fn chi_square_attack(img: &ImageBuffer) -> Result<AttackReport, StegError> {
    check_size(img)?;
    let (statistic, df) = chi_square_statistic(&histogram(img));
    let p_value = chi_square_sf(statistic, df);
    Ok(AttackReport {
        attack: CHI_SQUARE,
        statistic,
        p_value,
        verdict: if p_value > CHI_SQUARE_THRESHOLD {
            Verdict::Suspicious
        } else {
            Verdict::Clean
        },
        threshold: CHI_SQUARE_THRESHOLD,
        rule: "suspicious if p > 0.95",
    })
}

/// Balance of the LSB plane, `z = (2 ones - n) / sqrt(n)` with a two-sided
/// normal p-value. Flags only a near-perfectly balanced plane on an image
/// the chi-square test also flags.
pub fn lsb_monobit_test(img: &ImageBuffer) -> Result<AttackReport, StegError> {
    check_size(img)?;
    let n = img.pixels().len() as f64;
    let ones = img.pixels().iter().filter(|&&p| p & 1 == 1).count() as f64;
    let z = (2.0 * ones - n) / n.sqrt();
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    let suspicious =
        p_value > MONOBIT_THRESHOLD && chi_square_attack(img)?.verdict == Verdict::Suspicious;
    Ok(AttackReport {
        attack: MONOBIT,
        statistic: z,
        p_value,
        verdict: if suspicious {
            Verdict::Suspicious
        } else {
            Verdict::Clean
        },
        threshold: MONOBIT_THRESHOLD,
        rule: "suspicious if p > 0.99 and the chi-square verdict is suspicious",
    })
}

/// Where a benchmarked image came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Cover,
    Lsb,
    Natural,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Cover => "cover",
            Source::Lsb => "lsb",
            Source::Natural => "natural",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub image_id: String,
    pub source: Source,
    pub report: AttackReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchSummary {
    /// Sorted by image id, then attack.
    pub rows: Vec<BenchRow>,
}

impl BenchSummary {
    /// Fraction of `source` images flagged by `attack`, `None` if there are
    /// no such images.
    pub fn detection_rate(&self, source: Source, attack: &str) -> Option<f64> {
        let hits: Vec<bool> = self
            .rows
            .iter()
            .filter(|r| r.source == source && r.report.attack == attack)
            .map(|r| r.report.verdict == Verdict::Suspicious)
            .collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }

    pub fn count(&self, source: Source, attack: &str) -> usize {
        self.rows
            .iter()
            .filter(|r| r.source == source && r.report.attack == attack)
            .count()
    }

    pub const HEADER: &'static str = "image_id\tsource\tattack\tstatistic\tp_value\tverdict\n";

    /// Tab-separated report, preceded by `#` comment lines stating scope and
    /// aggregate rates.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "# classical steganalysis only: chi-square pairs-of-values and LSB monobit; \
             other detectors are not covered\n",
        );
        for source in [Source::Cover, Source::Lsb, Source::Natural] {
            for attack in [CHI_SQUARE, MONOBIT] {
                if let Some(rate) = self.detection_rate(source, attack) {
                    let _ = writeln!(
                        out,
                        "# detection_rate source={source} attack={attack} n={} rate={rate:.4}",
                        self.count(source, attack)
                    );
                }
            }
        }
        out.push_str(Self::HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
                r.image_id,
                r.source,
                r.report.attack,
                r.report.statistic,
                r.report.p_value,
                r.report.verdict
            );
        }
        out
    }
}

/// One benchmark case: a registered secret and a natural reference image.
#[derive(Clone, Debug)]
pub struct BenchPair {
    pub id: String,
    pub secret: ImageBuffer,
    pub natural: ImageBuffer,
}

/// Runs both attacks on, per pair, (a) the protocol cover emitted for the
/// secret, (b) that cover with a full-capacity random LSB payload, once per
/// seed, and (c) the natural reference.
pub fn bench_contrast(
    db: &ModelDatabase,
    pairs: &[BenchPair],
    payload_seeds: &[u64],
) -> Result<BenchSummary, StegError> {
    let mut images: Vec<(String, Source, ImageBuffer)> = Vec::new();
    for pair in pairs {
        let cover = hide(db, &pair.secret)?.cover;
        for &seed in payload_seeds {
            let stego = lsb_embed(&cover, &full_capacity_payload(&cover, seed))?;
            images.push((format!("{}/lsb-{seed}", pair.id), Source::Lsb, stego));
        }
        images.push((format!("{}/cover", pair.id), Source::Cover, cover));
        images.push((
            format!("{}/natural", pair.id),
            Source::Natural,
            pair.natural.clone(),
        ));
    }
    images.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rows = Vec::with_capacity(images.len() * 2);
    for (image_id, source, img) in images {
        for report in [chi_square_attack(&img)?, lsb_monobit_test(&img)?] {
            rows.push(BenchRow {
                image_id: image_id.clone(),
                source,
                report,
            });
        }
    }
    Ok(BenchSummary { rows })
}
