//! Frozen synthetic reference images for calibrating and checking the
//! severity tables.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE_SEED: u64 = 0x7a11_1197;

/// `count` deterministic scenes: a two-colour gradient with rectangles and
/// discs on top, loosely resembling a vehicle rear against the road.
pub fn reference_images(count: usize, width: u32, height: u32) -> Vec<RgbImage> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(REFERENCE_SEED);
            rng.set_stream(i as u64);
            scene(&mut rng, width, height)
        })
        .collect()
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
}

fn scene(rng: &mut ChaCha8Rng, width: u32, height: u32) -> RgbImage {
    let (top, bottom) = (color(rng), color(rng));
    let mut canvas: Vec<[f64; 3]> = (0..height)
        .flat_map(|y| {
            let t = if height > 1 { y as f64 / (height - 1) as f64 } else { 0.0 };
            let row: [f64; 3] = std::array::from_fn(|c| top[c] * (1.0 - t) + bottom[c] * t);
            std::iter::repeat(row).take(width as usize)
        })
        .collect();
    let (w, h) = (width as f64, height as f64);
    for _ in 0..rng.gen_range(2..5) {
        let c = color(rng);
        let x0 = rng.gen_range(0.0..w * 0.8);
        let y0 = rng.gen_range(0.0..h * 0.8);
        let x1 = x0 + rng.gen_range(0.1..0.5) * w;
        let y1 = y0 + rng.gen_range(0.1..0.5) * h;
        paint(&mut canvas, width, height, c, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1);
    }
    for _ in 0..rng.gen_range(1..4) {
        let c = color(rng);
        let (cx, cy) = (rng.gen_range(0.0..w), rng.gen_range(0.0..h));
        let r = rng.gen_range(0.05..0.2) * w.min(h);
        paint(&mut canvas, width, height, c, |x, y| {
            (x - cx).powi(2) + (y - cy).powi(2) < r * r
        });
    }
    RgbImage::from_fn(width, height, |x, y| {
        let c = canvas[(y * width + x) as usize];
        Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}

fn paint(
    canvas: &mut [[f64; 3]],
    width: u32,
    height: u32,
    color: [f64; 3],
    inside: impl Fn(f64, f64) -> bool,
) {
    for y in 0..height {
        for x in 0..width {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                canvas[(y * width + x) as usize] = color;
            }
        }
    }
}
