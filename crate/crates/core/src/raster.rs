//! Raster types shared by every stage.
//!
//! 8-bit colour images are plain [`image::RgbImage`]s. Real-valued single
//! channel data (feature maps, rarity and conspicuity maps) use [`RealRaster`].

use image::{GrayImage, Luma, RgbImage};

use crate::error::{Error, Result};

/// Row-major single-channel raster of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealRaster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RealRaster {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Rec. 709 luma of an RGB image, scaled to `[0, 1]`.
    pub fn luminance(image: &RgbImage) -> Self {
        let (w, h) = image.dimensions();
        Self::from_fn(w as usize, h as usize, |x, y| {
            let p = image.get_pixel(x as u32, y as u32).0;
            (0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64) / 255.0
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Min-max normalisation to `[0, 1]`; a constant raster becomes all zeros.
    pub fn normalized(&self) -> Self {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let data = if span > 0.0 && span.is_finite() {
            self.data.iter().map(|&v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Bilinear resampling with pixel-centre alignment and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let tx = fx - x0 as f64;
            let ty = fy - y0 as f64;
            let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
            let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
            top * (1.0 - ty) + bottom * ty
        })
    }

    /// Quantises a `[0, 1]` raster to an 8-bit grayscale image.
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([quantize(self.get(x as usize, y as usize) * 255.0)])
        })
    }
}

/// Rounds half away from zero and clamps to `[0, 255]`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

/// Splits an RGB image into three real channel planes in `[0, 1]`.
pub fn rgb_planes(image: &RgbImage) -> [RealRaster; 3] {
    let (w, h) = (image.width() as usize, image.height() as usize);
    std::array::from_fn(|c| {
        RealRaster::from_fn(w, h, |x, y| {
            image.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0
        })
    })
}

/// Bilinear resize of an 8-bit RGB image, quantised once.
pub fn resize_rgb(image: &RgbImage, width: u32, height: u32) -> RgbImage {
    if image.dimensions() == (width, height) {
        return image.clone();
    }
    let planes = rgb_planes(image).map(|p| p.resize_bilinear(width as usize, height as usize));
    RgbImage::from_fn(width, height, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb(std::array::from_fn(|c| quantize(planes[c].get(x, y) * 255.0)))
    })
}

pub(crate) fn check_same_dims(a: (u32, u32), b: (u32, u32), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        assert_eq!(quantize(127.5), 128);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(24.0000001), 24);
    }

    #[test]
    fn constant_raster_normalizes_to_zero() {
        let r = RealRaster::filled(3, 2, 7.5).normalized();
        assert!(r.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resize_of_constant_is_constant() {
        let r = RealRaster::filled(5, 7, 0.25).resize_bilinear(13, 3);
        assert!(r.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
