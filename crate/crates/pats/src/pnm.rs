//! Binary PGM (P5) and PPM (P6) images, 8 or 16 bits per sample.

use std::fs;
use std::path::Path;

use pats_core::Image;

use crate::error::{Error, Result};

/// An image padded for the matcher, with the size it had on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedImage {
    pub image: Image,
    /// Width and height before padding.
    pub original_size: (usize, usize),
}

/// Reads an image and zero-pads it to a multiple of `multiple` at the right
/// and bottom.
pub fn load_image(path: &Path, multiple: usize) -> Result<LoadedImage> {
    let image = read_image(path)?;
    let original_size = (image.width(), image.height());
    Ok(LoadedImage {
        image: image.pad_to_multiple(multiple.max(1)),
        original_size,
    })
}

/// Reads a P5/P6 file (or PNG when built with the `png` feature) with
/// samples scaled to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        return read_png(path, &bytes);
    }
    decode(path, &bytes)
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(self.path, start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(self.path, start, format!("{what} out of range")))
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format(path, 0, "unsupported format (expected P5 or P6)")),
    };
    let mut cur = Cursor { path, bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(path, 2, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(path, cur.pos, "missing whitespace after header"));
    }
    let start = cur.pos + 1;
    let wide = maxval > 255;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(path, 2, "image too large"))?;
    let need = count * if wide { 2 } else { 1 };
    let available = bytes.len() - start;
    if available < need {
        return Err(Error::format(
            path,
            bytes.len(),
            format!("truncated pixel data: expected {need} bytes, found {available}"),
        ));
    }
    let raster = &bytes[start..start + need];
    let mut data = Vec::with_capacity(count);
    for k in 0..count {
        let v = if wide {
            u16::from_be_bytes([raster[2 * k], raster[2 * k + 1]]) as usize
        } else {
            raster[k] as usize
        };
        if v > maxval {
            let at = start + if wide { 2 * k } else { k };
            return Err(Error::format(path, at, format!("sample {v} exceeds maxval {maxval}")));
        }
        data.push(v as f64 / maxval as f64);
    }
    Ok(Image::new(width, height, channels, data)?)
}

#[cfg(feature = "png")]
fn read_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::data(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::data(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (channels, stride) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 4),
        png::ColorType::Indexed => return Err(Error::data(path, "indexed PNG is not supported")),
    };
    let wide = info.bit_depth == png::BitDepth::Sixteen;
    let bytes_per = if wide { 2 } else { 1 };
    if !matches!(info.bit_depth, png::BitDepth::Eight | png::BitDepth::Sixteen) {
        return Err(Error::data(path, "PNG bit depth must be 8 or 16"));
    }
    let mut data = Vec::with_capacity(w * h * channels);
    for px in buf[..info.buffer_size()].chunks_exact(stride * bytes_per) {
        for c in 0..channels {
            let v = if wide {
                u16::from_be_bytes([px[2 * c], px[2 * c + 1]]) as f64 / 65535.0
            } else {
                px[c] as f64 / 255.0
            };
            data.push(v);
        }
    }
    Ok(Image::new(w, h, channels, data)?)
}

#[cfg(not(feature = "png"))]
fn read_png(path: &Path, _bytes: &[u8]) -> Result<Image> {
    Err(Error::format(path, 0, "PNG input needs the `png` feature"))
}

/// Encodes as P5 (one channel) or P6 (three channels) with the given
/// maxval (255 or 65535).
pub fn encode(image: &Image, maxval: u16) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", image.width(), image.height()).into_bytes();
    let m = maxval as f64;
    for &v in image.data() {
        let q = (v * m).round().clamp(0.0, m) as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

pub fn write_image(image: &Image, path: &Path, maxval: u16) -> Result<()> {
    fs::write(path, encode(image, maxval)).map_err(|e| Error::io(path, e))
}
