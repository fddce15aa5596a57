//! Tiered weighted mask and its multiplicative fusion with ROIs.
//!
//! The mask assigns `w_high` to the two taillight corner boxes and the brake
//! light band, `ω′` to a ring around each of them and `ω` elsewhere. The ROI
//! is then scaled pixel-wise: `out = M · in`.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_same_dims, quantize};

/// Tier geometry as fractions of the ROI width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskGeometry {
    /// Width of each taillight box, anchored at the left/right edge.
    pub corner_width: f64,
    /// Height of each taillight box, anchored at the bottom edge.
    pub corner_height: f64,
    /// Width of the brake band, centred horizontally.
    pub brake_width: f64,
    /// Height of the brake band, anchored at the top edge.
    pub brake_height: f64,
    /// Thickness of the transition ring around every high-weight box.
    pub ring: f64,
}

impl Default for MaskGeometry {
    fn default() -> Self {
        Self {
            corner_width: 0.22,
            corner_height: 0.45,
            brake_width: 0.30,
            brake_height: 0.20,
            ring: 0.05,
        }
    }
}

impl MaskGeometry {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("corner_width", self.corner_width),
            ("corner_height", self.corner_height),
            ("brake_width", self.brake_width),
            ("brake_height", self.brake_height),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("mask {name} = {v} outside (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.ring) {
            return Err(Error::Config(format!("mask ring = {} outside [0, 1]", self.ring)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let g: Self = toml::from_str(text).map_err(|e| Error::Config(format!("mask geometry: {e}")))?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// High-weight boxes `(u0, v0, u1, v1)` in unit coordinates.
    pub fn high_boxes(&self) -> [(f64, f64, f64, f64); 3] {
        let b0 = 0.5 - self.brake_width / 2.0;
        [
            (0.0, 1.0 - self.corner_height, self.corner_width, 1.0),
            (1.0 - self.corner_width, 1.0 - self.corner_height, 1.0, 1.0),
            (b0, 0.0, b0 + self.brake_width, self.brake_height),
        ]
    }
}

/// Tier weights `ω < ω′ < w_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TierWeights {
    pub omega: f64,
    pub omega_prime: f64,
    pub high: f64,
}

impl Default for TierWeights {
    fn default() -> Self {
        Self {
            omega: 0.12,
            omega_prime: 0.14,
            high: 1.0,
        }
    }
}

impl TierWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.omega, self.omega_prime, self.high]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
            && self.omega < self.omega_prime
            && self.omega_prime < self.high;
        if !ok {
            return Err(Error::Config(format!(
                "mask weights must satisfy 0 <= ω < ω′ < w_high, got {}, {}, {}",
                self.omega, self.omega_prime, self.high
            )));
        }
        Ok(())
    }

    /// Parses `ω,ω′,w_high`.
    pub fn parse_triplet(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad weight list `{s}`")))?;
        let [omega, omega_prime, high] = v[..] else {
            return Err(Error::Config(format!("expected three weights, got `{s}`")));
        };
        let w = Self {
            omega,
            omega_prime,
            high,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Remainder,
    Transition,
    High,
}

/// Per-pixel tier assignment with the corresponding weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMask {
    width: u32,
    height: u32,
    tiers: Vec<Tier>,
    weights: TierWeights,
}

impl WeightedMask {
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn tier(&self, x: u32, y: u32) -> Tier {
        self.tiers[(y * self.width + x) as usize]
    }

    pub fn weight(&self, x: u32, y: u32) -> f64 {
        self.weight_of(self.tier(x, y))
    }

    pub fn weight_of(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Remainder => self.weights.omega,
            Tier::Transition => self.weights.omega_prime,
            Tier::High => self.weights.high,
        }
    }

    pub fn weights(&self) -> TierWeights {
        self.weights
    }

    /// Pixel counts `(remainder, transition, high)`.
    pub fn tier_counts(&self) -> (usize, usize, usize) {
        self.tiers.iter().fold((0, 0, 0), |(r, t, h), tier| match tier {
            Tier::Remainder => (r + 1, t, h),
            Tier::Transition => (r, t + 1, h),
            Tier::High => (r, t, h + 1),
        })
    }

    /// The mask as an 8-bit grayscale image, weight × 255.
    pub fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([quantize(self.weight(x, y) * 255.0)])
        })
    }
}

/// Rasterises the tiers, testing each pixel centre against the boxes.
pub fn build_weighted_mask(
    roi_w: u32,
    roi_h: u32,
    geometry: &MaskGeometry,
    weights: TierWeights,
) -> Result<WeightedMask> {
    geometry.validate()?;
    weights.validate()?;
    if roi_w == 0 || roi_h == 0 {
        return Err(Error::InvalidInput("empty ROI".into()));
    }
    let boxes = geometry.high_boxes();
    let ring = geometry.ring;
    let inside = |u: f64, v: f64, b: &(f64, f64, f64, f64), pad: f64| {
        u >= b.0 - pad && u < b.2 + pad && v >= b.1 - pad && v < b.3 + pad
    };
    let mut tiers = Vec::with_capacity((roi_w * roi_h) as usize);
    for y in 0..roi_h {
        let v = (y as f64 + 0.5) / roi_h as f64;
        for x in 0..roi_w {
            let u = (x as f64 + 0.5) / roi_w as f64;
            let tier = if boxes.iter().any(|b| inside(u, v, b, 0.0)) {
                Tier::High
            } else if boxes.iter().any(|b| inside(u, v, b, ring)) {
                Tier::Transition
            } else {
                Tier::Remainder
            };
            tiers.push(tier);
        }
    }
    let mask = WeightedMask {
        width: roi_w,
        height: roi_h,
        tiers,
        weights,
    };
    if mask.tier_counts().2 == 0 {
        return Err(Error::Config(format!(
            "mask geometry leaves no high-weight pixel on a {roi_w}x{roi_h} ROI"
        )));
    }
    Ok(mask)
}

/// `out(x, y, c) = M(x, y) · in(x, y, c)`, quantised once.
pub fn fuse_mask(roi: &RgbImage, mask: &WeightedMask) -> Result<RgbImage> {
    check_same_dims(roi.dimensions(), mask.dimensions(), "weighted mask")?;
    let mut out = roi.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let m = mask.weight(x, y);
        *px = Rgb(px.0.map(|v| quantize(m * v as f64)));
    }
    Ok(out)
}
