//! PNG I/O. 8- and 16-bit, RGB and grayscale; nothing else.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{ImageGray, ImageRgb};

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    reader.decode().map_err(|source| Error::ImageDecode {
        path: path.to_path_buf(),
        source,
    })
}

/// Load an RGB image, scaling samples to `[0, 1]`. Grayscale files are
/// broadcast to three channels; alpha is dropped.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let dynimg = open(path)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let mut out = ImageRgb::new(w, h)?;
    match dynimg {
        DynamicImage::ImageRgb8(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                for c in 0..3 {
                    out.channel_mut(c)[i] = p.0[c] as f64 / 255.0;
                }
            }
        }
        DynamicImage::ImageRgba8(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                for c in 0..3 {
                    out.channel_mut(c)[i] = p.0[c] as f64 / 255.0;
                }
            }
        }
        DynamicImage::ImageRgb16(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                for c in 0..3 {
                    out.channel_mut(c)[i] = p.0[c] as f64 / 65535.0;
                }
            }
        }
        DynamicImage::ImageRgba16(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                for c in 0..3 {
                    out.channel_mut(c)[i] = p.0[c] as f64 / 65535.0;
                }
            }
        }
        DynamicImage::ImageLuma8(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                let v = p.0[0] as f64 / 255.0;
                for c in 0..3 {
                    out.channel_mut(c)[i] = v;
                }
            }
        }
        DynamicImage::ImageLuma16(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                let v = p.0[0] as f64 / 65535.0;
                for c in 0..3 {
                    out.channel_mut(c)[i] = v;
                }
            }
        }
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                detail: format!("unsupported color type {:?}", other.color()),
            })
        }
    }
    Ok(out)
}

/// Load a grayscale image (mask or luma plane), scaled to `[0, 1]`.
pub fn load_gray(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    let dynimg = open(path)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let mut out = ImageGray::new(w, h)?;
    match dynimg {
        DynamicImage::ImageLuma8(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                out.data_mut()[i] = p.0[0] as f64 / 255.0;
            }
        }
        DynamicImage::ImageLumaA8(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                out.data_mut()[i] = p.0[0] as f64 / 255.0;
            }
        }
        DynamicImage::ImageLuma16(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                out.data_mut()[i] = p.0[0] as f64 / 65535.0;
            }
        }
        DynamicImage::ImageLumaA16(buf) => {
            for (i, p) in buf.pixels().enumerate() {
                out.data_mut()[i] = p.0[0] as f64 / 65535.0;
            }
        }
        other => {
            return Err(Error::UnsupportedImage {
                path: path.to_path_buf(),
                detail: format!("expected grayscale PNG, got color type {:?}", other.color()),
            })
        }
    }
    Ok(out)
}

/// Write a label raster as 8-bit grayscale with raw code values.
pub fn save_labels(
    width: usize,
    height: usize,
    codes: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_fn(width as u32, height as u32, |x, y| {
        image::Luma([codes[y as usize * width + x as usize]])
    });
    buf.save(path).map_err(|source| Error::ImageEncode {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a label raster: an 8-bit grayscale PNG whose raw sample values are
/// the integer label codes (no scaling).
pub fn load_labels(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let dynimg = open(path)?;
    match dynimg {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok((w, h, buf.into_raw()))
        }
        other => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            detail: format!(
                "label rasters must be 8-bit grayscale, got {:?}",
                other.color()
            ),
        }),
    }
}

#[inline]
fn q8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
fn q16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn save_rgb(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let p = img.pixel(x as usize, y as usize);
        Rgb([q8(p[0]), q8(p[1]), q8(p[2])])
    });
    buf.save(path).map_err(|source| Error::ImageEncode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_rgb_u16(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let p = img.pixel(x as usize, y as usize);
        Rgb([q16(p[0]), q16(p[1]), q16(p[2])])
    });
    buf.save(path).map_err(|source| Error::ImageEncode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_gray(img: &ImageGray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Luma([q8(img.get(x as usize, y as usize))])
    });
    buf.save(path).map_err(|source| Error::ImageEncode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_gray_u16(img: &ImageGray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Luma([q16(img.get(x as usize, y as usize))])
    });
    buf.save(path).map_err(|source| Error::ImageEncode {
        path: path.to_path_buf(),
        source,
    })
}
