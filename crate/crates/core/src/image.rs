//! Binary PGM (P5) and PPM (P6) images with 8-bit samples.

use std::path::Path;

use crate::error::ImageError;
use crate::tensor::Tensor;

/// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn parse(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut pos = 0;
        let magic = token(bytes, &mut pos)?;
        let channels = match magic {
            b"P5" => 1,
            b"P6" => 3,
            b"P2" | b"P3" => return Err(ImageError::Unsupported("plain-text netpbm".into())),
            _ => return Err(ImageError::Malformed("not a binary PGM/PPM file".into())),
        };
        let width = number(bytes, &mut pos, "width")?;
        let height = number(bytes, &mut pos, "height")?;
        let maxval = number(bytes, &mut pos, "maxval")?;
        if maxval != 255 {
            return Err(ImageError::Unsupported(format!("maxval {maxval}, only 255 is supported")));
        }
        if width == 0 || height == 0 {
            return Err(ImageError::Malformed(format!("empty image {width}x{height}")));
        }
        // exactly one whitespace byte separates the header from the samples
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(ImageError::Malformed("missing whitespace after header".into()));
        }
        pos += 1;
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| ImageError::Malformed("image dimensions overflow".into()))?;
        let data = &bytes[pos..];
        if data.len() != n {
            return Err(ImageError::Malformed(format!("expected {n} sample bytes, found {}", data.len())));
        }
        Ok(Self { width, height, channels, data: data.to_vec() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| ImageError::Io { path: path.to_owned(), msg: e.to_string() })?;
        Self::parse(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| ImageError::Io { path: path.to_owned(), msg: e.to_string() })
    }

    /// `[channels, H, W]` with samples divided by 255.
    pub fn to_tensor(&self) -> Tensor {
        let (c, hw) = (self.channels, self.width * self.height);
        Tensor::new(
            &[c, self.height, self.width],
            (0..c * hw).map(|i| self.data[(i % hw) * c + i / hw] as f64 / 255.0).collect(),
        )
        .expect("length matches")
    }

    /// Inverse of [`to_tensor`](Self::to_tensor): `round(v * 255)` clamped to
    /// `0..=255`. `t` must be `[1,H,W]` or `[3,H,W]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self, ImageError> {
        let (c, h, w) = match *t.shape() {
            [c @ (1 | 3), h, w] => (c, h, w),
            ref s => return Err(ImageError::Unsupported(format!("tensor shape {s:?} is not [1|3,H,W]"))),
        };
        let hw = h * w;
        let mut data = vec![0u8; c * hw];
        for (i, &v) in t.data().iter().enumerate() {
            let q = if v.is_nan() { 0.0 } else { (v * 255.0).round().clamp(0.0, 255.0) };
            data[(i % hw) * c + i / hw] = q as u8;
        }
        Ok(Self { width: w, height: h, channels: c, data })
    }
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], ImageError> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::Malformed("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize, ImageError> {
    let t = token(bytes, pos)?;
    std::str::from_utf8(t)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::Malformed(format!("bad {what} {:?}", String::from_utf8_lossy(t))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = Image { width: 3, height: 2, channels: 3, data: (0..18).map(|i| i * 14).collect() };
        let back = Image::parse(&img.to_bytes()).unwrap();
        assert_eq!(back, img);
        assert_eq!(Image::from_tensor(&img.to_tensor()).unwrap(), img);
    }

    #[test]
    fn tensor_layout_is_planar() {
        let img = Image { width: 2, height: 1, channels: 3, data: vec![255, 0, 0, 0, 255, 0] };
        let t = img.to_tensor();
        assert_eq!(t.shape(), [3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments_and_errors() {
        let ok = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        assert_eq!(Image::parse(ok).unwrap().data, [0, 255]);
        assert!(matches!(Image::parse(b"P5\n2 1\n255\n\x00"), Err(ImageError::Malformed(_))));
        assert!(matches!(Image::parse(b"P5\n2 1\n65535\n"), Err(ImageError::Unsupported(_))));
        assert!(matches!(Image::parse(b"JUNK"), Err(ImageError::Malformed(_))));
    }

    #[test]
    fn quantization_rounds_and_clamps() {
        let t = Tensor::new(&[1, 1, 4], vec![-0.5, 0.5, 1.5, f64::NAN]).unwrap();
        assert_eq!(Image::from_tensor(&t).unwrap().data, [0, 128, 255, 0]);
    }
}
