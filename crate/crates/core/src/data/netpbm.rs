//! Binary PGM (`P5`) and PPM (`P6`) reading and writing.

use std::path::Path;

use crate::error::{Error, Result};

/// Raw 8- or 16-bit image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (graymap) or 3 (pixmap).
    pub channels: usize,
    /// 255 or 65535.
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image extents {width}x{height} must be positive")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("{channels} channels; expected 1 or 3")));
        }
        if maxval != 255 && maxval != 65535 {
            return Err(Error::InvalidArgument(format!("maxval {maxval}; expected 255 or 65535")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "{} samples for a {width}x{height}x{channels} image",
                samples.len()
            )));
        }
        if samples.iter().any(|&s| s > maxval) {
            return Err(Error::InvalidArgument(format!("sample exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval,
            samples,
        })
    }

    pub fn sample(&self, row: usize, col: usize, channel: usize) -> u16 {
        self.samples[(row * self.width + col) * self.channels + channel]
    }

    fn bytes_per_sample(&self) -> usize {
        if self.maxval > 255 {
            2
        } else {
            1
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.reserve(self.samples.len() * self.bytes_per_sample());
        if self.bytes_per_sample() == 2 {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut p = HeaderParser { bytes, pos: 0 };
        let channels = match bytes.get(..2) {
            Some(b"P5") => 1,
            Some(b"P6") => 3,
            _ => return Err(p.error("expected magic P5 or P6")),
        };
        p.pos = 2;
        let (width, _) = p.number("width")?;
        let (height, _) = p.number("height")?;
        let (maxval, maxval_at) = p.number("maxval")?;
        if maxval != 255 && maxval != 65535 {
            return Err(Error::Format {
                what: "netpbm",
                offset: maxval_at,
                reason: format!("maxval {maxval} unsupported; expected 255 or 65535"),
            });
        }
        if width == 0 || height == 0 {
            return Err(p.error("zero image extent"));
        }
        match bytes.get(p.pos) {
            Some(b) if b.is_ascii_whitespace() => p.pos += 1,
            _ => return Err(p.error("expected a single whitespace byte after maxval")),
        }
        let wide = maxval > 255;
        let count = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| p.error("image extents overflow"))?;
        let need = count * if wide { 2 } else { 1 };
        let payload = &bytes[p.pos..];
        if payload.len() < need {
            return Err(Error::Format {
                what: "netpbm",
                offset: bytes.len(),
                reason: format!("truncated payload: {need} bytes expected from offset {}, {} present", p.pos, payload.len()),
            });
        }
        let samples = if wide {
            payload[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            payload[..need].iter().map(|&b| b as u16).collect()
        };
        let image = Self {
            width,
            height,
            channels,
            maxval: maxval as u16,
            samples,
        };
        if let Some(i) = image.samples.iter().position(|&s| s > image.maxval) {
            return Err(Error::Format {
                what: "netpbm",
                offset: p.pos + i * 2,
                reason: format!("sample exceeds maxval {maxval}"),
            });
        }
        Ok(image)
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderParser<'_> {
    fn error(&self, reason: &str) -> Error {
        Error::Format {
            what: "netpbm",
            offset: self.pos,
            reason: reason.to_string(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Parses a decimal field, returning it with its starting offset.
    fn number(&mut self, field: &str) -> Result<(usize, usize)> {
        let before = self.pos;
        self.skip_space_and_comments();
        if self.pos == before {
            return Err(self.error(&format!("expected whitespace before {field}")));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(&format!("expected decimal {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| Error::Format {
                what: "netpbm",
                offset: start,
                reason: format!("{field} out of range"),
            })
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Image::decode(&bytes).map_err(|e| match e {
        Error::Format { what, offset, reason } => Error::Format {
            what,
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, image.encode()).map_err(|e| Error::io(path, e))
}
