//! Synthetic rear-view ROIs with one lamp pattern per behaviour class.
//!
//! Lamps sit where the default attention mask expects them: one blob in each
//! bottom corner and a brake band centred along the top edge.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedFrame, BehaviorClass, BoundingBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyRoiSpec {
    pub width: u32,
    pub height: u32,
    pub body: [u8; 3],
    pub bright_red: [u8; 3],
    pub dim_red: [u8; 3],
    pub amber: [u8; 3],
    pub band_lit: [u8; 3],
    pub band_off: [u8; 3],
    /// Scales every random perturbation; 0 renders the class templates.
    pub jitter: f64,
}

impl Default for ToyRoiSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            body: [70, 72, 80],
            bright_red: [235, 35, 30],
            dim_red: [125, 25, 25],
            amber: [250, 165, 25],
            band_lit: [240, 45, 35],
            band_off: [55, 30, 30],
            jitter: 1.0,
        }
    }
}

/// Lamp colours of one class: left corner, right corner, brake band.
impl ToyRoiSpec {
    pub fn lamp_colors(&self, class: BehaviorClass) -> [[u8; 3]; 3] {
        match class {
            BehaviorClass::Braking => [self.bright_red, self.bright_red, self.band_lit],
            BehaviorClass::Running => [self.dim_red, self.dim_red, self.band_off],
            BehaviorClass::LeftTurn => [self.amber, self.dim_red, self.band_off],
            BehaviorClass::RightTurn => [self.dim_red, self.amber, self.band_off],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config(format!(
                "toy canvas {}x{} is smaller than 8x8",
                self.width, self.height
            )));
        }
        if !(self.jitter.is_finite() && (0.0..=4.0).contains(&self.jitter)) {
            return Err(Error::Config(format!("toy jitter {} outside [0, 4]", self.jitter)));
        }
        Ok(())
    }

    /// Renders one sample; `rng` supplies the jitter.
    pub fn render(&self, class: BehaviorClass, rng: &mut impl Rng) -> RgbImage {
        let (w, h) = (self.width as f64, self.height as f64);
        let j = self.jitter;
        let mut u = |scale: f64| if j == 0.0 { 0.0 } else { rng.gen_range(-1.0..1.0) * scale * j };
        let body: Vec<f64> = self.body.iter().map(|&c| c as f64 + u(20.0)).collect();
        let gain = 1.0 + u(0.15);
        let dx = u(0.03) * w;
        let dy = u(0.03) * h;
        let [left, right, band] = self.lamp_colors(class);
        // Ellipses (cx, cy, rx, ry) in pixels.
        let lamps = [
            (0.11 * w + dx, 0.78 * h + dy, 0.08 * w, 0.13 * h, left),
            (0.89 * w + dx, 0.78 * h + dy, 0.08 * w, 0.13 * h, right),
            (0.50 * w + dx, 0.10 * h + dy, 0.13 * w, 0.06 * h, band),
        ];
        let noise_amp = 10.0 * j;
        let mut img = RgbImage::new(self.width, self.height);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut c = [body[0], body[1], body[2]];
            for (cx, cy, rx, ry, col) in lamps {
                let r = ((fx - cx) / rx).powi(2) + ((fy - cy) / ry).powi(2);
                if r <= 1.0 {
                    c = col.map(|v| v as f64 * gain);
                }
            }
            let noise = if noise_amp == 0.0 {
                0.0
            } else {
                rng.gen_range(-noise_amp..=noise_amp)
            };
            *px = Rgb(c.map(|v| (v + noise).round().clamp(0.0, 255.0) as u8));
        }
        img
    }
}

/// `n_per_class` frames per class, interleaved by class, each with a box
/// covering the whole canvas.
pub fn generate_toy_dataset(spec: &ToyRoiSpec, n_per_class: usize, seed: u64) -> Result<Vec<AnnotatedFrame>> {
    if n_per_class == 0 {
        return Err(Error::Config("toy dataset needs at least one sample per class".into()));
    }
    spec.validate()?;
    let full = BoundingBox::new(0.5, 0.5, 1.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n_per_class * BehaviorClass::COUNT);
    for i in 0..n_per_class {
        for class in BehaviorClass::ALL {
            frames.push(AnnotatedFrame {
                image: spec.render(class, &mut rng),
                bbox: full,
                label: class,
                source_id: format!("toy_{i:04}_{}", class.name()),
            });
        }
    }
    Ok(frames)
}
