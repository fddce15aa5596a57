//! Corruption algorithms.
//!
//! All operations work on normalised `f64` channels and quantise once.
//!
//! * `rain_blur`: motion blur along a near-vertical random streak angle, then
//!   a brightness lift.
//! * `snow`: a sparse flake layer (Bernoulli noise) smeared by motion blur and
//!   added on top of a whitening veil.
//! * `fog`: diamond-square plasma haze added and renormalised against the
//!   image maximum.
//! * `alpha_blend`: a shifted ghost copy (camera shake) mixed with the image
//!   under a semi-transparent gray veil.
//! * `frosted_glass_blur`: random pixel swaps within a radius followed by a
//!   small box blur.
//! * `lens_defect`: dark soft blobs and thin scratches at random positions.
//! * `jpeg`: a real JPEG encode/decode round trip.
//! * `zoom_blur`: average of progressively centre-scaled copies.
//! * `frost`: blend with one of the bundled procedural frost textures.
//! * `contrast`: scaling about the global mean.
//! * `rain_drop`: elliptical drops showing an inverted, blurred view of
//!   the scene with a darker rim.
//! * `shot_noise`: Poisson photon counts with rate `v·λ`, divided by `λ`.
//! * `pixelate`: block means written back over each block.

use std::f64::consts::PI;

use image::codecs::jpeg::JpegEncoder;
use image::RgbImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::texture::{frost_textures, plasma};
use super::{CorruptionKind, CorruptionSpec};
use crate::error::{Error, Result};
use crate::raster::quantize;

/// Interleaved RGB in `[0, 1]`.
#[derive(Clone)]
pub(crate) struct Planar {
    pub w: usize,
    pub h: usize,
    pub data: Vec<[f64; 3]>,
}

impl Planar {
    pub fn from_rgb(img: &RgbImage) -> Self {
        Self {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img
                .pixels()
                .map(|p| p.0.map(|v| v as f64 / 255.0))
                .collect(),
        }
    }

    pub fn to_rgb(&self) -> RgbImage {
        let raw: Vec<u8> = self
            .data
            .iter()
            .flat_map(|c| c.map(|v| quantize(v * 255.0)))
            .collect();
        RgbImage::from_raw(self.w as u32, self.h as u32, raw).expect("buffer size")
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.w + x]
    }

    #[inline]
    fn clamped(&self, x: i64, y: i64) -> [f64; 3] {
        let x = x.clamp(0, self.w as i64 - 1) as usize;
        let y = y.clamp(0, self.h as i64 - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample at pixel coordinates, clamped at the border.
    fn sample(&self, fx: f64, fy: f64) -> [f64; 3] {
        let fx = fx.clamp(0.0, (self.w - 1) as f64);
        let fy = fy.clamp(0.0, (self.h - 1) as f64);
        let (x0, y0) = (fx.floor() as i64, fy.floor() as i64);
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let a = self.clamped(x0, y0);
        let b = self.clamped(x0 + 1, y0);
        let c = self.clamped(x0, y0 + 1);
        let d = self.clamped(x0 + 1, y0 + 1);
        std::array::from_fn(|i| {
            let top = a[i] * (1.0 - tx) + b[i] * tx;
            let bottom = c[i] * (1.0 - tx) + d[i] * tx;
            top * (1.0 - ty) + bottom * ty
        })
    }

    fn map(&mut self, f: impl Fn([f64; 3]) -> [f64; 3]) {
        for c in &mut self.data {
            *c = f(*c);
        }
    }
}

/// Separable box blur with edge replication.
pub(crate) fn box_blur(img: &Planar, radius: usize) -> Planar {
    if radius == 0 {
        return img.clone();
    }
    let r = radius as i64;
    let n = (2 * r + 1) as f64;
    let pass = |src: &Planar, horizontal: bool| -> Planar {
        let mut out = src.clone();
        for y in 0..src.h {
            for x in 0..src.w {
                let mut acc = [0.0; 3];
                for k in -r..=r {
                    let p = if horizontal {
                        src.clamped(x as i64 + k, y as i64)
                    } else {
                        src.clamped(x as i64, y as i64 + k)
                    };
                    for i in 0..3 {
                        acc[i] += p[i];
                    }
                }
                out.data[y * src.w + x] = acc.map(|v| v / n);
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Averages `length`-pixel line samples centred on each pixel.
fn motion_blur(img: &Planar, length: f64, angle: f64) -> Planar {
    let taps = (length.ceil() as usize + 1).max(2);
    let (dx, dy) = (angle.cos(), angle.sin());
    let offsets: Vec<f64> = (0..taps)
        .map(|i| -length / 2.0 + length * i as f64 / (taps - 1) as f64)
        .collect();
    let mut out = img.clone();
    for y in 0..img.h {
        for x in 0..img.w {
            let mut acc = [0.0; 3];
            for &t in &offsets {
                let p = img.sample(x as f64 + t * dx, y as f64 + t * dy);
                for i in 0..3 {
                    acc[i] += p[i];
                }
            }
            out.data[y * img.w + x] = acc.map(|v| v / taps as f64);
        }
    }
    out
}

fn luma(c: [f64; 3]) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

pub(crate) fn apply(image: &RgbImage, spec: &CorruptionSpec) -> Result<RgbImage> {
    let mut rng = spec.rng();
    let img = Planar::from_rgb(image);
    let out = match spec.kind {
        CorruptionKind::RainBlur => rain_blur(&img, spec, &mut rng),
        CorruptionKind::Snow => snow(&img, spec, &mut rng),
        CorruptionKind::Fog => fog(&img, spec, &mut rng),
        CorruptionKind::AlphaBlend => alpha_blend(&img, spec, &mut rng),
        CorruptionKind::FrostedGlassBlur => frosted_glass(&img, spec, &mut rng),
        CorruptionKind::LensDefect => lens_defect(&img, spec, &mut rng),
        CorruptionKind::Jpeg => return jpeg(image, spec.param("quality")),
        CorruptionKind::ZoomBlur => zoom_blur(&img, spec),
        CorruptionKind::Frost => frost(&img, spec, &mut rng),
        CorruptionKind::Contrast => contrast(&img, spec.param("factor")),
        CorruptionKind::RainDrop => rain_drop(&img, spec, &mut rng),
        CorruptionKind::ShotNoise => shot_noise(&img, spec.param("photons"), &mut rng)?,
        CorruptionKind::Pixelate => pixelate(&img, spec.param("block_size")),
    };
    Ok(out.to_rgb())
}

fn longest_side(img: &Planar) -> f64 {
    img.w.max(img.h) as f64
}

fn rain_blur(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let angle = PI / 2.0 + rng.gen_range(-PI / 9.0..PI / 9.0);
    let length = spec.param("streak_length") * longest_side(img);
    let lift = spec.param("lift");
    let mut out = motion_blur(img, length, angle);
    out.map(|c| c.map(|v| v + lift));
    out
}

fn snow(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let density = spec.param("flake_density");
    let veil = spec.param("veil");
    let mut flakes = Planar {
        w: img.w,
        h: img.h,
        data: vec![[0.0; 3]; img.w * img.h],
    };
    for c in &mut flakes.data {
        if rng.gen::<f64>() < density {
            *c = [1.0; 3];
        }
    }
    let angle = rng.gen_range(PI / 3.0..2.0 * PI / 3.0);
    let flakes = motion_blur(&flakes, spec.param("streak_length") * longest_side(img), angle);
    let mut out = img.clone();
    for (c, f) in out.data.iter_mut().zip(&flakes.data) {
        let white = luma(*c) * 1.5 + 0.5;
        *c = std::array::from_fn(|i| {
            let base = c[i] * (1.0 - veil) + veil * c[i].max(white);
            base + 2.0 * f[i]
        });
    }
    out
}

fn fog(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let strength = spec.param("strength");
    let haze = plasma(img.w.max(img.h), spec.param("decay"), rng);
    let vmax = img
        .data
        .iter()
        .flat_map(|c| c.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1.0 / 255.0);
    let mut out = img.clone();
    for y in 0..img.h {
        for x in 0..img.w {
            let f = strength * haze.get(x, y);
            let c = &mut out.data[y * img.w + x];
            *c = c.map(|v| (v + f) * vmax / (vmax + strength));
        }
    }
    out
}

fn alpha_blend(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let alpha = spec.param("alpha");
    let shift = spec.param("ghost_shift") * longest_side(img);
    let theta = rng.gen_range(0.0..2.0 * PI);
    let (dx, dy) = (shift * theta.cos(), shift * theta.sin());
    let mut out = img.clone();
    for y in 0..img.h {
        for x in 0..img.w {
            let ghost = img.sample(x as f64 - dx, y as f64 - dy);
            let v = img.at(x, y);
            out.data[y * img.w + x] =
                std::array::from_fn(|i| (1.0 - alpha) * 0.5 * (v[i] + ghost[i]) + alpha * 0.5);
        }
    }
    out
}

fn frosted_glass(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let r = spec.param("swap_radius").round().max(0.0) as i64;
    let iterations = spec.param("iterations").round().max(0.0) as usize;
    let mut out = img.clone();
    let (w, h) = (img.w as i64, img.h as i64);
    if r > 0 {
        for _ in 0..iterations {
            for y in (r..h - r).rev() {
                for x in (r..w - r).rev() {
                    let dx = rng.gen_range(-r..r);
                    let dy = rng.gen_range(-r..r);
                    let a = (y * w + x) as usize;
                    let b = ((y + dy) * w + (x + dx)) as usize;
                    out.data.swap(a, b);
                }
            }
        }
    }
    box_blur(&out, spec.param("blur_radius").round().max(0.0) as usize)
}

fn lens_defect(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let (w, h) = (img.w as f64, img.h as f64);
    let opacity = spec.param("opacity");
    let mut gain = vec![1.0f64; img.w * img.h];
    for _ in 0..spec.param("blobs").round() as usize {
        let cx = rng.gen_range(0.0..w);
        let cy = rng.gen_range(0.0..h);
        let r = spec.param("blob_radius") * w.min(h) * rng.gen_range(0.7..1.3);
        for y in 0..img.h {
            for x in 0..img.w {
                let d2 = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)) / (r * r);
                if d2 < 1.0 {
                    gain[y * img.w + x] *= 1.0 - opacity * (1.0 - d2);
                }
            }
        }
    }
    for _ in 0..spec.param("scratches").round() as usize {
        let x0 = rng.gen_range(0.0..w);
        let y0 = rng.gen_range(0.0..h);
        let theta = rng.gen_range(0.0..PI);
        let len = rng.gen_range(0.3..0.8) * w.max(h);
        let (ux, uy) = (theta.cos(), theta.sin());
        for y in 0..img.h {
            for x in 0..img.w {
                let (px, py) = (x as f64 + 0.5 - x0, y as f64 + 0.5 - y0);
                let t = px * ux + py * uy;
                let dist = (px * uy - py * ux).abs();
                if (0.0..=len).contains(&t) && dist < 0.75 {
                    gain[y * img.w + x] *= 1.0 - 0.8 * opacity;
                }
            }
        }
    }
    let mut out = img.clone();
    for (c, g) in out.data.iter_mut().zip(gain) {
        *c = c.map(|v| v * g);
    }
    out
}

fn jpeg(image: &RgbImage, quality: f64) -> Result<RgbImage> {
    let q = quality.round().clamp(1.0, 100.0) as u8;
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, q).encode_image(image)?;
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)?;
    let out = decoded.to_rgb8();
    if out.dimensions() != image.dimensions() {
        return Err(Error::Numeric("jpeg round trip changed dimensions".into()));
    }
    Ok(out)
}

fn zoom_blur(img: &Planar, spec: &CorruptionSpec) -> Planar {
    let max_zoom = spec.param("max_zoom");
    let step = spec.param("step");
    let (cx, cy) = ((img.w as f64 - 1.0) / 2.0, (img.h as f64 - 1.0) / 2.0);
    let mut acc: Vec<[f64; 3]> = img.data.clone();
    let mut copies = 1usize;
    if step > 0.0 {
        let mut i = 1;
        loop {
            let z = 1.0 + step * i as f64;
            if z > max_zoom + 1e-9 {
                break;
            }
            for y in 0..img.h {
                for x in 0..img.w {
                    let p = img.sample(cx + (x as f64 - cx) / z, cy + (y as f64 - cy) / z);
                    let a = &mut acc[y * img.w + x];
                    for k in 0..3 {
                        a[k] += p[k];
                    }
                }
            }
            copies += 1;
            i += 1;
        }
    }
    Planar {
        w: img.w,
        h: img.h,
        data: acc.into_iter().map(|c| c.map(|v| v / copies as f64)).collect(),
    }
}

fn frost(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let textures = frost_textures();
    let tex = &textures[rng.gen_range(0..textures.len())];
    let ox = rng.gen_range(0..tex.size);
    let oy = rng.gen_range(0..tex.size);
    let (iw, fw) = (spec.param("image_weight"), spec.param("frost_weight"));
    let mut out = img.clone();
    for y in 0..img.h {
        for x in 0..img.w {
            let f = tex.get((x + ox) % tex.size, (y + oy) % tex.size);
            let c = &mut out.data[y * img.w + x];
            *c = std::array::from_fn(|i| iw * c[i] + fw * f[i]);
        }
    }
    out
}

fn contrast(img: &Planar, factor: f64) -> Planar {
    let n = (img.data.len() * 3) as f64;
    let mean = img.data.iter().flat_map(|c| c.iter()).sum::<f64>() / n;
    let mut out = img.clone();
    out.map(|c| c.map(|v| (v - mean) * factor + mean));
    out
}

fn rain_drop(img: &Planar, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Planar {
    let blurred = box_blur(img, spec.param("blur_radius").round().max(0.0) as usize);
    let (w, h) = (img.w as f64, img.h as f64);
    let mut out = img.clone();
    for _ in 0..spec.param("drops").round() as usize {
        let cx = rng.gen_range(0.0..w);
        let cy = rng.gen_range(0.0..h);
        let rx = spec.param("drop_radius") * w.min(h) * rng.gen_range(0.7..1.2);
        let ry = rx * rng.gen_range(1.0..1.4);
        let x_lo = (cx - rx).floor().max(0.0) as usize;
        let x_hi = ((cx + rx).ceil() as usize).min(img.w);
        let y_lo = (cy - ry).floor().max(0.0) as usize;
        let y_hi = ((cy + ry).ceil() as usize).min(img.h);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let q = (dx / rx).powi(2) + (dy / ry).powi(2);
                if q >= 1.0 {
                    continue;
                }
                let seen = blurred.sample(cx - 0.6 * dx - 0.5, cy - 0.6 * dy - 0.5);
                let rim = if q > 0.75 { 0.7 } else { 1.0 };
                out.data[y * img.w + x] = seen.map(|v| (0.9 * v + 0.1) * rim);
            }
        }
    }
    out
}

fn shot_noise(img: &Planar, photons: f64, rng: &mut ChaCha8Rng) -> Result<Planar> {
    if photons <= 0.0 {
        return Err(Error::Config("shot_noise: photons must be positive".into()));
    }
    let mut out = img.clone();
    for c in &mut out.data {
        for v in c.iter_mut() {
            let rate = *v * photons;
            *v = if rate > 0.0 {
                let dist = Poisson::new(rate).map_err(|e| Error::Numeric(e.to_string()))?;
                let k: f64 = dist.sample(rng);
                k / photons
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

fn pixelate(img: &Planar, block: f64) -> Planar {
    let b = (block.round() as usize).max(1);
    let mut out = img.clone();
    for by in (0..img.h).step_by(b) {
        for bx in (0..img.w).step_by(b) {
            let (x1, y1) = ((bx + b).min(img.w), (by + b).min(img.h));
            let mut acc = [0.0; 3];
            for y in by..y1 {
                for x in bx..x1 {
                    let p = img.at(x, y);
                    for i in 0..3 {
                        acc[i] += p[i];
                    }
                }
            }
            let n = ((x1 - bx) * (y1 - by)) as f64;
            let mean = acc.map(|v| v / n);
            for y in by..y1 {
                for x in bx..x1 {
                    out.data[y * img.w + x] = mean;
                }
            }
        }
    }
    out
}
