use super::ImageBuffer;
use std::fmt;
use std::str::FromStr;

const GRID: usize = 8;

/// 64-bit average hash. Cell 0 (top-left of the 8x8 reduction) is the most
/// significant bit, so the hex form reads in raster order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    pub fn bit(&self, cell: usize) -> bool {
        (self.0 >> (63 - cell)) & 1 == 1
    }

    pub fn weight(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn to_hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Fingerprint {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 {
            // Force a ParseIntError for wrong-length input.
            return u64::from_str_radix("", 16).map(Fingerprint);
        }
        u64::from_str_radix(s, 16).map(Fingerprint)
    }
}

/// Average hash: block-mean reduction to 8x8, then one bit per cell set iff
/// the cell mean is strictly greater than the mean of all cells.
///
/// Images narrower or shorter than 8 pixels are not valid `ImageBuffer`s
/// for hashing; the reduction then repeats pixels across cells.
pub fn fingerprint(img: &ImageBuffer) -> Fingerprint {
    let (w, h) = (img.width(), img.height());
    let mut cells = [0f64; GRID * GRID];
    for (cy, row) in cells.chunks_mut(GRID).enumerate() {
        let (y0, y1) = span(cy, h);
        for (cx, cell) in row.iter_mut().enumerate() {
            let (x0, x1) = span(cx, w);
            let mut sum = 0u64;
            for y in y0..y1 {
                sum += img.pixels()[y * w + x0..y * w + x1]
                    .iter()
                    .map(|&p| p as u64)
                    .sum::<u64>();
            }
            *cell = sum as f64 / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    let bits = cells
        .iter()
        .fold(0u64, |acc, &c| (acc << 1) | u64::from(c > mean));
    Fingerprint(bits)
}

fn span(cell: usize, extent: usize) -> (usize, usize) {
    let start = cell * extent / GRID;
    let end = ((cell + 1) * extent / GRID).max(start + 1);
    (start.min(extent - 1), end.min(extent))
}

pub fn hamming(a: Fingerprint, b: Fingerprint) -> u32 {
    (a.0 ^ b.0).count_ones()
}
