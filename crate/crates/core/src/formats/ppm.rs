//! Binary PPM (P6) codec; other formats are decoded through the `image` crate.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    /// maxval 255
    #[default]
    Eight,
    /// maxval 65535, big-endian samples
    Sixteen,
}

fn img_err(msg: impl Into<String>) -> Error {
    Error::Image(msg.into())
}

/// Skips whitespace and `#` comments, then reads one ASCII integer token.
fn header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(img_err(format!("malformed PPM header at byte offset {}", start)));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| img_err(format!("PPM header value out of range at byte offset {}", start)))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(img_err("not a binary PPM: expected magic P6"));
    }
    let mut pos = 2;
    let width = header_int(bytes, &mut pos)?;
    let height = header_int(bytes, &mut pos)?;
    let maxval = header_int(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(img_err("PPM has zero size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(img_err(format!("PPM maxval {} out of range", maxval)));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(img_err("PPM header must end with one whitespace byte"));
    }
    pos += 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| img_err("PPM dimensions overflow"))?;
    let needed = count
        .checked_mul(sample)
        .ok_or_else(|| img_err("PPM dimensions overflow"))?;
    let data = &bytes[pos..];
    if data.len() < needed {
        return Err(img_err(format!(
            "truncated pixel data at byte offset {}: need {} bytes, have {}",
            pos + data.len(),
            needed,
            data.len()
        )));
    }
    let scale = maxval as f64;
    let pixels = if sample == 1 {
        data[..needed].iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        data[..needed]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect()
    };
    ImageBuffer::from_pixels(width, height, pixels)
}

pub fn encode_ppm(img: &ImageBuffer, depth: BitDepth) -> Vec<u8> {
    let maxval: u32 = match depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    let mut out = format!("P6\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    let quantize = |v: f64| -> u32 {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * maxval as f64).round() as u32
    };
    for &v in &img.pixels {
        let q = quantize(v);
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend((q as u16).to_be_bytes()),
        }
    }
    out
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        return decode_ppm(&bytes);
    }
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        return decode_ppm(&bytes);
    }
    let decoded = image::load_from_memory(&bytes)
        .map_err(|e| img_err(format!("{}: {}", path.display(), e)))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    let pixels = decoded.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    ImageBuffer::from_pixels(w as usize, h as usize, pixels)
}

/// Encoder chosen by extension: `png`, `jpg`/`jpeg`, anything else 8-bit PPM.
pub fn write_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let format = match ext.as_str() {
        "png" => image::ImageFormat::Png,
        "jpg" | "jpeg" => image::ImageFormat::Jpeg,
        _ => return write_image_with_depth(img, path, BitDepth::Eight),
    };
    let raw: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| (if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) } * 255.0).round() as u8)
        .collect();
    let rgb = image::RgbImage::from_raw(img.width as u32, img.height as u32, raw)
        .ok_or_else(|| img_err(format!("{}: buffer size mismatch", path.display())))?;
    let mut bytes = std::io::Cursor::new(Vec::new());
    rgb.write_to(&mut bytes, format)
        .map_err(|e| img_err(format!("{}: {}", path.display(), e)))?;
    write_atomic(path, &bytes.into_inner())
}

pub fn write_image_with_depth(img: &ImageBuffer, path: &Path, depth: BitDepth) -> Result<()> {
    write_atomic(path, &encode_ppm(img, depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_pixel_file() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 0, 255]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 0.0]);
        assert_eq!(img.get(1, 0), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn png_by_extension_round_trips_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let mut img = ImageBuffer::new(5, 3);
        img.set(2, 1, [1.0, 0.5, 0.2]);
        write_image(&img, &path).unwrap();
        assert!(std::fs::read(&path).unwrap().starts_with(b"\x89PNG"));
        let back = read_image(&path).unwrap();
        assert_eq!(back.get(2, 1), [1.0, 128.0 / 255.0, 51.0 / 255.0]);
        assert_eq!(back.get(0, 0), [0.0; 3]);
    }

    #[test]
    fn black_round_trip_is_byte_identical() {
        let img = ImageBuffer::new(4, 4);
        let bytes = encode_ppm(&img, BitDepth::Eight);
        assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap(), BitDepth::Eight), bytes);
    }

    #[test]
    fn truncated_data_reports_offset() {
        let mut bytes = b"P6 10 10 255\n".to_vec();
        bytes.extend(std::iter::repeat(7u8).take(150));
        let err = decode_ppm(&bytes).unwrap_err().to_string();
        assert!(err.contains("truncated pixel data at byte offset 163"), "{}", err);
    }

    #[test]
    fn wrong_magic() {
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0\n").is_err());
    }

    #[test]
    fn header_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n# depth\n255\n".to_vec();
        bytes.extend([0, 128, 255]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.get(0, 0)[2], 1.0);
    }

    #[test]
    fn sixteen_bit_is_near_lossless() {
        let img = ImageBuffer::from_pixels(1, 1, vec![0.123456789, 0.5, 1.0]).unwrap();
        let back = decode_ppm(&encode_ppm(&img, BitDepth::Sixteen)).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn quantized_round_trip_is_lossless(
            w in 1usize..6, h in 1usize..6, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bytes: Vec<u8> = (0..3 * w * h).map(|_| rng.gen()).collect();
            let mut file = format!("P6\n{} {}\n255\n", w, h).into_bytes();
            file.extend(&bytes);
            let img = decode_ppm(&file).unwrap();
            prop_assert_eq!(encode_ppm(&img, BitDepth::Eight), file);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_ppm(&bytes);
            let mut prefixed = b"P6 3 2 255\n".to_vec();
            prefixed.extend(&bytes);
            let _ = decode_ppm(&prefixed);
        }
    }
}
