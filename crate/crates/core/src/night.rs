//! Pixel-wise day→night translation.
//!
//! Foreground (vehicle) and background (road) pixels are colour-graded with
//! separate [`AdjustmentParams`]. Each control is a percentage `p` and acts on
//! normalised channels `v ∈ [0, 1]`; all intermediate math is `f64` and the
//! result is clamped and rounded once at the end.
//!
//! | control      | effect                                                         |
//! |--------------|----------------------------------------------------------------|
//! | exposure     | linear-light RGB × 2^(p/100)                                    |
//! | contrast     | (v − 0.5)(1 + p/100) + 0.5                                     |
//! | brightness   | v + p/100                                                      |
//! | highlights   | v × (1 + p/100 · w_hi(L)), w_hi rises cosine-smoothly on L ∈ [0.5, 1] |
//! | shadows      | v × (1 + p/100 · w_lo(L)), w_lo falls cosine-smoothly on L ∈ [0, 0.5] |
//! | temperature  | R + p/100 · 30/255, B − p/100 · 30/255                          |
//! | tint         | G − p/100 · 30/255                                             |
//! | hue_set_to   | HSL hue overwritten with the given degrees                     |
//! | saturation   | HSL S × (1 + p/100)                                            |
//! | gamma_{r,g,b}| v^(1 / (1 + p/100)) per channel                                |
//!
//! `L` is Rec. 709 luma of the current value. The HSL stage clips its input
//! to `[0, 1]` since HSL is undefined outside the unit cube.

use std::fmt;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::dataset::BoundingBox;
use crate::error::{Error, Result};
use crate::raster::{check_same_dims, quantize};

/// Photo-editor style colour controls, as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustmentParams {
    pub contrast: f64,
    pub brightness: f64,
    pub exposure: f64,
    pub highlights: f64,
    pub shadows: f64,
    pub saturation: f64,
    pub temperature: f64,
    pub tint: f64,
    /// Absolute HSL hue set-point in degrees, `[0, 360)`.
    pub hue_set_to: Option<f64>,
    pub gamma_r: f64,
    pub gamma_g: f64,
    pub gamma_b: f64,
}

impl Default for AdjustmentParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AdjustmentParams {
    pub const IDENTITY: AdjustmentParams = AdjustmentParams {
        contrast: 0.0,
        brightness: 0.0,
        exposure: 0.0,
        highlights: 0.0,
        shadows: 0.0,
        saturation: 0.0,
        temperature: 0.0,
        tint: 0.0,
        hue_set_to: None,
        gamma_r: 0.0,
        gamma_g: 0.0,
        gamma_b: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let pct = [
            self.contrast,
            self.brightness,
            self.exposure,
            self.highlights,
            self.shadows,
            self.saturation,
            self.temperature,
            self.tint,
            self.gamma_r,
            self.gamma_g,
            self.gamma_b,
        ];
        if pct.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("adjustment percentages must be finite".into()));
        }
        if [self.gamma_r, self.gamma_g, self.gamma_b]
            .iter()
            .any(|&g| g <= -100.0)
        {
            return Err(Error::Config("gamma percentages must exceed -100".into()));
        }
        if let Some(h) = self.hue_set_to {
            if !(0.0..360.0).contains(&h) {
                return Err(Error::Config(format!("hue set-point {h} outside [0, 360)")));
            }
        }
        Ok(())
    }
}

/// Foreground and background parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NightParamPair {
    pub foreground: AdjustmentParams,
    pub background: AdjustmentParams,
}

impl Default for NightParamPair {
    fn default() -> Self {
        default_night_params()
    }
}

/// The published night grading settings.
pub fn default_night_params() -> NightParamPair {
    NightParamPair {
        foreground: AdjustmentParams {
            contrast: 29.0,
            brightness: -56.0,
            exposure: 44.0,
            highlights: 18.0,
            shadows: -55.0,
            saturation: 13.0,
            temperature: 6.0,
            tint: 8.0,
            hue_set_to: Some(0.0),
            gamma_r: 10.0,
            gamma_g: 1.0,
            gamma_b: 1.0,
        },
        background: AdjustmentParams {
            contrast: 31.0,
            brightness: -71.0,
            exposure: -37.0,
            highlights: -72.0,
            shadows: -5.0,
            saturation: -18.0,
            temperature: -56.0,
            tint: 3.0,
            hue_set_to: Some(0.0),
            gamma_r: 10.0,
            gamma_g: 4.0,
            gamma_b: -23.0,
        },
    }
}

impl NightParamPair {
    /// Reads a TOML override file with optional `[foreground]` and
    /// `[background]` tables; missing keys keep the published defaults.
    pub fn from_override_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Overrides {
            #[serde(default)]
            foreground: toml::Table,
            #[serde(default)]
            background: toml::Table,
        }
        let o: Overrides =
            toml::from_str(text).map_err(|e| Error::Config(format!("night params: {e}")))?;
        let base = default_night_params();
        let merge = |base: AdjustmentParams, table: toml::Table| -> Result<AdjustmentParams> {
            let mut full = toml::Table::try_from(base)
                .map_err(|e| Error::Config(e.to_string()))?;
            for (k, v) in table {
                let v = match v {
                    toml::Value::Integer(i) => toml::Value::Float(i as f64),
                    other => other,
                };
                full.insert(k, v);
            }
            let p: AdjustmentParams = full
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("night params: {e}")))?;
            p.validate()?;
            Ok(p)
        };
        Ok(Self {
            foreground: merge(base.foreground, o.foreground)?,
            background: merge(base.background, o.background)?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_override_str(&text)
    }
}

/// Adjustment stages in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Exposure,
    Contrast,
    Brightness,
    Highlights,
    Shadows,
    WhiteBalance,
    HueSaturation,
    Gamma,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub const STAGE_ORDER: [Stage; 8] = [
    Stage::Exposure,
    Stage::Contrast,
    Stage::Brightness,
    Stage::Highlights,
    Stage::Shadows,
    Stage::WhiteBalance,
    Stage::HueSaturation,
    Stage::Gamma,
];

const WHITE_BALANCE_SPAN: f64 = 30.0 / 255.0;

fn srgb_to_linear(v: f64) -> f64 {
    let a = v.abs();
    let l = if a <= 0.04045 {
        a / 12.92
    } else {
        ((a + 0.055) / 1.055).powf(2.4)
    };
    l.copysign(v)
}

fn linear_to_srgb(v: f64) -> f64 {
    let a = v.abs();
    let s = if a <= 0.0031308 {
        a * 12.92
    } else {
        1.055 * a.powf(1.0 / 2.4) - 0.055
    };
    s.copysign(v)
}

fn luma(c: &[f64; 3]) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

fn highlight_weight(l: f64) -> f64 {
    if l <= 0.5 {
        0.0
    } else if l >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (l - 0.5) / 0.5).cos())
    }
}

fn shadow_weight(l: f64) -> f64 {
    if l <= 0.0 {
        1.0
    } else if l >= 0.5 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * l / 0.5).cos())
    }
}

/// RGB in `[0, 1]` to HSL with hue in degrees.
pub fn rgb_to_hsl(c: [f64; 3]) -> [f64; 3] {
    let max = c[0].max(c[1]).max(c[2]);
    let min = c[0].min(c[1]).min(c[2]);
    let l = (max + min) / 2.0;
    let d = max - min;
    if d == 0.0 {
        return [0.0, 0.0, l];
    }
    let s = d / (1.0 - (2.0 * l - 1.0).abs());
    let h = if max == c[0] {
        60.0 * ((c[1] - c[2]) / d).rem_euclid(6.0)
    } else if max == c[1] {
        60.0 * ((c[2] - c[0]) / d + 2.0)
    } else {
        60.0 * ((c[0] - c[1]) / d + 4.0)
    };
    [h, s, l]
}

pub fn hsl_to_rgb(hsl: [f64; 3]) -> [f64; 3] {
    let [h, s, l] = hsl;
    let chroma = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = chroma * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = l - chroma / 2.0;
    [r + m, g + m, b + m]
}

fn apply_stage(stage: Stage, c: &mut [f64; 3], p: &AdjustmentParams) {
    match stage {
        Stage::Exposure => {
            if p.exposure != 0.0 {
                let gain = (p.exposure / 100.0).exp2();
                for v in c.iter_mut() {
                    *v = linear_to_srgb(srgb_to_linear(*v) * gain);
                }
            }
        }
        Stage::Contrast => {
            let k = 1.0 + p.contrast / 100.0;
            for v in c.iter_mut() {
                *v = (*v - 0.5) * k + 0.5;
            }
        }
        Stage::Brightness => {
            for v in c.iter_mut() {
                *v += p.brightness / 100.0;
            }
        }
        Stage::Highlights => {
            let g = 1.0 + p.highlights / 100.0 * highlight_weight(luma(c));
            for v in c.iter_mut() {
                *v *= g;
            }
        }
        Stage::Shadows => {
            let g = 1.0 + p.shadows / 100.0 * shadow_weight(luma(c));
            for v in c.iter_mut() {
                *v *= g;
            }
        }
        Stage::WhiteBalance => {
            c[0] += p.temperature / 100.0 * WHITE_BALANCE_SPAN;
            c[2] -= p.temperature / 100.0 * WHITE_BALANCE_SPAN;
            c[1] -= p.tint / 100.0 * WHITE_BALANCE_SPAN;
        }
        Stage::HueSaturation => {
            if p.hue_set_to.is_none() && p.saturation == 0.0 {
                return;
            }
            let clipped = c.map(|v| v.clamp(0.0, 1.0));
            let mut hsl = rgb_to_hsl(clipped);
            if let Some(h) = p.hue_set_to {
                hsl[0] = h;
            }
            hsl[1] *= 1.0 + p.saturation / 100.0;
            *c = hsl_to_rgb(hsl);
        }
        Stage::Gamma => {
            let g = [p.gamma_r, p.gamma_g, p.gamma_b];
            for (v, g) in c.iter_mut().zip(g) {
                let e = 1.0 / (1.0 + g / 100.0);
                *v = v.abs().powf(e).copysign(*v);
            }
        }
    }
}

/// Runs the stages of `order` on a normalised colour, without quantising.
pub fn adjust_normalized(mut c: [f64; 3], params: &AdjustmentParams, order: &[Stage]) -> [f64; 3] {
    for &stage in order {
        apply_stage(stage, &mut c, params);
    }
    c
}

/// Grades one 8-bit pixel with [`STAGE_ORDER`].
pub fn apply_adjustments(pixel: [u8; 3], params: &AdjustmentParams) -> [u8; 3] {
    apply_adjustments_ordered(pixel, params, &STAGE_ORDER)
}

pub fn apply_adjustments_ordered(pixel: [u8; 3], params: &AdjustmentParams, order: &[Stage]) -> [u8; 3] {
    let c = adjust_normalized(pixel.map(|v| v as f64 / 255.0), params, order);
    c.map(|v| quantize(v * 255.0))
}

/// Per-pixel foreground flags; `true` marks the vehicle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl RegionMask {
    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
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

    /// Foreground = pixels with a nonzero value in a grayscale mask image.
    pub fn from_gray(image: &image::GrayImage) -> Self {
        Self::from_fn(image.width(), image.height(), |x, y| image.get_pixel(x, y).0[0] > 0)
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Foreground mask covering the denormalised, clamped box.
///
/// A box that clamps to zero area yields an all-background mask and logs a
/// warning.
pub fn mask_from_box(bbox: &BoundingBox, width: u32, height: u32) -> RegionMask {
    let rect = bbox.to_pixels(width, height);
    if rect.is_empty() {
        log::warn!("foreground box has zero area after clamping; mask is all background");
    }
    RegionMask::from_fn(width, height, |x, y| rect.contains(x, y))
}

/// Grades every pixel with the parameter set of its region.
pub fn day_to_night(image: &RgbImage, mask: &RegionMask, params: &NightParamPair) -> Result<RgbImage> {
    check_same_dims(image.dimensions(), mask.dimensions(), "region mask")?;
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let p = if mask.get(x, y) {
            &params.foreground
        } else {
            &params.background
        };
        *px = Rgb(apply_adjustments(px.0, p));
    }
    Ok(out)
}
