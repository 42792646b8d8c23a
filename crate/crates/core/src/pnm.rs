//! Binary netpbm images (P5 grayscale, P6 RGB) with 8-bit samples.

use crate::model::ImageBuffer;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PnmError {
    #[error("unsupported magic {0:?}; expected P5 or P6")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("only maxval 255 is supported, got {0}")]
    BadMaxval(u32),
    #[error("pixel data has {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
}

/// 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Pixmap {
    pub fn new(width: u32, height: u32, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0; width as usize * height as usize * channels],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width as usize + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width as usize + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Encode as P5/P6. Each `comments` entry becomes a `# ...` header line.
    pub fn encode(&self, comments: &[&str]) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n");
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&format!("{} {}\n255\n", self.width, self.height));
        let mut bytes = out.into_bytes();
        bytes.extend_from_slice(&self.data);
        bytes
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PnmError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(PnmError::BadHeader("unexpected end of header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(PnmError::BadMagic(other.to_owned())),
        };
        let num = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| PnmError::BadHeader(format!("not a number: {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(PnmError::BadMaxval(maxval));
        }
        let expected = width as usize * height as usize * channels;
        let data = bytes.get(pos..).unwrap_or(&[]);
        if data.len() < expected {
            return Err(PnmError::Truncated {
                got: data.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data: data[..expected].to_vec(),
        })
    }

    /// Samples scaled to `[0, 1]`.
    pub fn to_image_buffer(&self) -> ImageBuffer {
        ImageBuffer::new(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    /// Quantize a `[0, 1]` buffer with 1 or 3 channels.
    pub fn from_image_buffer(buf: &ImageBuffer) -> Self {
        Self {
            width: buf.width,
            height: buf.height,
            channels: buf.channels,
            data: buf
                .data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }
}
