//! Linear RGB image buffers shared by the renderer, metrics, and codecs.

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]` (renders may exceed 1 when
/// the background does).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` interleaved channels.
    pub pixels: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::Image(format!(
                "{}x{} image needs {} channel values, got {}",
                width,
                height,
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Box-filter downscale by an integer factor; trailing partial blocks are dropped.
    pub fn downscale(&self, factor: usize) -> ImageBuffer {
        if factor <= 1 {
            return self.clone();
        }
        let w = (self.width / factor).max(1);
        let h = (self.height / factor).max(1);
        let mut out = ImageBuffer::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                let mut count = 0.0;
                for sy in y * factor..((y + 1) * factor).min(self.height) {
                    for sx in x * factor..((x + 1) * factor).min(self.width) {
                        let p = self.get(sx, sy);
                        for c in 0..3 {
                            acc[c] += p[c];
                        }
                        count += 1.0;
                    }
                }
                out.set(x, y, acc.map(|v| v / count));
            }
        }
        out
    }
}
