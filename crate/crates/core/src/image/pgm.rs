use super::{ImageBuffer, ImageError};

/// Parses a binary (P5) or plain (P2) PGM with maxval at most 255.
///
/// Sample values are kept as stored; images with maxval below 255 are not
/// rescaled. Trailing bytes after the raster are ignored.
pub fn read_pgm(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(ImageError::MalformedHeader("magic is not P5 or P2".into())),
    };
    cur.pos = 2;
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(ImageError::MalformedHeader("maxval is zero".into()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedDepth(maxval));
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;

    let pixels = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        match cur.peek() {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(ImageError::MalformedHeader(
                    "missing whitespace after maxval".into(),
                ))
            }
        }
        let rest = &bytes[cur.pos..];
        if rest.len() < expected {
            return Err(ImageError::TruncatedPayload {
                expected,
                found: rest.len(),
            });
        }
        rest[..expected].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(expected);
        for found in 0..expected {
            cur.skip_separators();
            if cur.peek().is_none() {
                return Err(ImageError::TruncatedPayload { expected, found });
            }
            let v = cur.number("sample")?;
            pixels.push(v as u8);
            if v > maxval {
                return Err(ImageError::MalformedHeader(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
        }
        pixels
    };
    if binary {
        if let Some(&v) = pixels.iter().find(|&&v| u32::from(v) > maxval) {
            return Err(ImageError::MalformedHeader(format!(
                "sample {v} exceeds maxval {maxval}"
            )));
        }
    }
    ImageBuffer::new_unchecked_size(width as usize, height as usize, pixels)
}

/// Serializes as binary P5 with maxval 255: `P5\n<w> <h>\n255\n` + raster.
pub fn write_pgm(img: &ImageBuffer) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_separators(&mut self) {
        while let Some(b) = self.peek() {
            if b == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn header_number(&mut self, what: &str) -> Result<u32, ImageError> {
        match self.peek() {
            Some(b) if b.is_ascii_whitespace() || b == b'#' => {}
            _ => {
                return Err(ImageError::MalformedHeader(format!(
                    "expected whitespace before {what}"
                )))
            }
        }
        self.skip_separators();
        self.number(what)
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("{what} out of range")))
    }
}
