//! 8/16-bit grayscale raster with PNG/TIFF reading, PNG writing and
//! deterministic resampling.
//!
//! Sampling uses the centered-pixel convention: destination pixel dx maps to
//! source coordinate (dx + 0.5)·(src/dst) − 0.5, with edge clamping.
//! Interpolated intensities round half away from zero.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType as PngFilter, PngEncoder};
use image::{DynamicImage, ImageBuffer, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrayError {
    #[error("empty image: width and height must be positive")]
    EmptyImage,
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("crop ({x},{y}) size {w}x{h} exceeds image {img_w}x{img_h}")]
    CropOutOfBounds { x: u32, y: u32, w: u32, h: u32, img_w: u32, img_h: u32 },
    #[error("cannot read {path}")]
    Read { path: PathBuf, source: image::ImageError },
    #[error("cannot write {path}")]
    Write { path: PathBuf, source: image::ImageError },
    #[error("{path}: unsupported pixel format {format}, expected 8- or 16-bit grayscale")]
    UnsupportedFormat { path: PathBuf, format: String },
}

/// Row-major intensity data at its native bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pixels {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    Bilinear,
    Nearest,
}

/// Grayscale image; the pixel buffer always holds exactly width·height values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Pixels,
}

impl GrayImage {
    pub fn from_u8(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, GrayError> {
        Self::validated(width, height, pixels.len())?;
        Ok(Self { width, height, pixels: Pixels::U8(pixels) })
    }

    pub fn from_u16(width: u32, height: u32, pixels: Vec<u16>) -> Result<Self, GrayError> {
        Self::validated(width, height, pixels.len())?;
        Ok(Self { width, height, pixels: Pixels::U16(pixels) })
    }

    fn validated(width: u32, height: u32, len: usize) -> Result<(), GrayError> {
        if width == 0 || height == 0 {
            return Err(GrayError::EmptyImage);
        }
        let expected = width as usize * height as usize;
        if len != expected {
            return Err(GrayError::BufferSize { expected, got: len });
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn bit_depth(&self) -> u8 {
        match self.pixels {
            Pixels::U8(_) => 8,
            Pixels::U16(_) => 16,
        }
    }

    /// Largest representable intensity at this bit depth.
    pub fn max_intensity(&self) -> u16 {
        match self.pixels {
            Pixels::U8(_) => u8::MAX as u16,
            Pixels::U16(_) => u16::MAX,
        }
    }

    /// Intensity at (x, y), widened to u16. Panics out of bounds.
    pub fn get(&self, x: u32, y: u32) -> u16 {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) out of bounds");
        let idx = y as usize * self.width as usize + x as usize;
        match &self.pixels {
            Pixels::U8(p) => p[idx] as u16,
            Pixels::U16(p) => p[idx],
        }
    }

    /// Intensity histogram with one bin per representable level
    /// (256 or 65536 bins).
    pub fn histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.max_intensity() as usize + 1];
        match &self.pixels {
            Pixels::U8(p) => {
                for &v in p {
                    hist[v as usize] += 1;
                }
            }
            Pixels::U16(p) => {
                for &v in p {
                    hist[v as usize] += 1;
                }
            }
        }
        hist
    }

    /// Sub-image copy at the native bit depth.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<GrayImage, GrayError> {
        if w == 0 || h == 0 {
            return Err(GrayError::EmptyImage);
        }
        if x.checked_add(w).map_or(true, |r| r > self.width)
            || y.checked_add(h).map_or(true, |b| b > self.height)
        {
            return Err(GrayError::CropOutOfBounds {
                x,
                y,
                w,
                h,
                img_w: self.width,
                img_h: self.height,
            });
        }
        fn copy_rows<T: Copy>(src: &[T], stride: usize, x: u32, y: u32, w: u32, h: u32) -> Vec<T> {
            let mut out = Vec::with_capacity(w as usize * h as usize);
            for row in y..y + h {
                let start = row as usize * stride + x as usize;
                out.extend_from_slice(&src[start..start + w as usize]);
            }
            out
        }
        let stride = self.width as usize;
        let pixels = match &self.pixels {
            Pixels::U8(p) => Pixels::U8(copy_rows(p, stride, x, y, w, h)),
            Pixels::U16(p) => Pixels::U16(copy_rows(p, stride, x, y, w, h)),
        };
        Ok(GrayImage { width: w, height: h, pixels })
    }

    /// Resample to (dst_w, dst_h) at the native bit depth.
    pub fn resize(&self, dst_w: u32, dst_h: u32, mode: Resample) -> Result<GrayImage, GrayError> {
        if dst_w == 0 || dst_h == 0 {
            return Err(GrayError::EmptyImage);
        }
        let (sw, sh) = (self.width, self.height);
        let pixels = match &self.pixels {
            Pixels::U8(p) => Pixels::U8(resize_plane(p, sw, sh, dst_w, dst_h, mode, |v| {
                v.round().clamp(0.0, u8::MAX as f64) as u8
            })),
            Pixels::U16(p) => Pixels::U16(resize_plane(p, sw, sh, dst_w, dst_h, mode, |v| {
                v.round().clamp(0.0, u16::MAX as f64) as u16
            })),
        };
        Ok(GrayImage { width: dst_w, height: dst_h, pixels })
    }

    /// Decode a PNG or TIFF file; 8/16-bit single-channel only.
    pub fn load(path: &Path) -> Result<GrayImage, GrayError> {
        let img = image::open(path).map_err(|source| GrayError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        match img {
            DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                GrayImage::from_u8(w, h, buf.into_raw())
            }
            DynamicImage::ImageLuma16(buf) => {
                let (w, h) = buf.dimensions();
                GrayImage::from_u16(w, h, buf.into_raw())
            }
            other => Err(GrayError::UnsupportedFormat {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            }),
        }
    }

    /// Encode as PNG at the native bit depth. Output bytes are deterministic
    /// for a given image.
    pub fn save_png(&self, path: &Path) -> Result<(), GrayError> {
        let file = File::create(path).map_err(|e| GrayError::Write {
            path: path.to_path_buf(),
            source: image::ImageError::IoError(e),
        })?;
        let encoder =
            PngEncoder::new_with_quality(BufWriter::new(file), CompressionType::Fast, PngFilter::Adaptive);
        let dynamic = match &self.pixels {
            Pixels::U8(p) => DynamicImage::ImageLuma8(
                ImageBuffer::<Luma<u8>, _>::from_raw(self.width, self.height, p.clone())
                    .expect("buffer length is validated at construction"),
            ),
            Pixels::U16(p) => DynamicImage::ImageLuma16(
                ImageBuffer::<Luma<u16>, _>::from_raw(self.width, self.height, p.clone())
                    .expect("buffer length is validated at construction"),
            ),
        };
        dynamic.write_with_encoder(encoder).map_err(|source| GrayError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn resize_plane<T: Copy + Into<f64>>(
    src: &[T],
    sw: u32,
    sh: u32,
    dw: u32,
    dh: u32,
    mode: Resample,
    quantize: impl Fn(f64) -> T,
) -> Vec<T> {
    let rx = sw as f64 / dw as f64;
    let ry = sh as f64 / dh as f64;
    let at = |x: i64, y: i64| -> f64 {
        let xc = x.clamp(0, sw as i64 - 1) as usize;
        let yc = y.clamp(0, sh as i64 - 1) as usize;
        src[yc * sw as usize + xc].into()
    };
    let mut out = Vec::with_capacity(dw as usize * dh as usize);
    for dy in 0..dh {
        for dx in 0..dw {
            match mode {
                Resample::Nearest => {
                    let sx = ((dx as f64 + 0.5) * rx).floor() as i64;
                    let sy = ((dy as f64 + 0.5) * ry).floor() as i64;
                    out.push(quantize(at(sx, sy)));
                }
                Resample::Bilinear => {
                    let sx = (dx as f64 + 0.5) * rx - 0.5;
                    let sy = (dy as f64 + 0.5) * ry - 0.5;
                    let x0 = sx.floor();
                    let y0 = sy.floor();
                    let fx = sx - x0;
                    let fy = sy - y0;
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
                    let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
                    out.push(quantize(top * (1.0 - fy) + bot * fy));
                }
            }
        }
    }
    out
}
