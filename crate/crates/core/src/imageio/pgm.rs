//! Binary PGM (P5, maxval 255).

use std::fs;
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail(format!("expected {what}"));
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).expect("ascii digits");
        match text.parse() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.fail(format!("{what} out of range"))
            }
        }
    }
}

/// Decodes a P5 image from memory.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { data, pos: 0 };
    match data.get(..2) {
        Some(b"P5") => cur.pos = 2,
        Some(m) if m[0] == b'P' => {
            return cur.fail(format!(
                "unsupported netpbm variant {:?}, only binary P5 is accepted",
                String::from_utf8_lossy(m)
            ))
        }
        _ => return cur.fail("missing P5 magic"),
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        cur.pos = maxval_at;
        return cur.fail(format!("maxval must be 255, got {maxval}"));
    }
    if width == 0 || height == 0 {
        return cur.fail("image dimensions must be positive");
    }
    match data.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return cur.fail("expected single whitespace after maxval"),
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format { offset: cur.pos, message: "dimensions overflow".into() })?;
    let payload = &data[cur.pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::from_raw(height, width, payload[..expected].to_vec())
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let raw = image.to_raw_bytes();
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(&raw);
    out
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let data = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    decode_pgm(&data).map_err(|e| e.at_path(path))
}

/// Writes `image` as P5; normalized images are clamped to `[0, 1]` and rounded.
pub fn save_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(image)).map_err(|e| Error::from(e).at_path(path))
}
