//! Procedural textures: plasma haze and the bundled frost set.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::RealRaster;

/// Diamond-square fractal on the smallest `2^k + 1` grid covering `min_size`,
/// normalised to `[0, 1]`. `decay` scales the displacement at each level.
pub(crate) fn plasma(min_size: usize, decay: f64, rng: &mut ChaCha8Rng) -> RealRaster {
    let mut n = 1usize;
    while n + 1 < min_size.max(2) {
        n *= 2;
    }
    let size = n + 1;
    let mut g = RealRaster::new(size, size);
    let mut amp = 1.0;
    let mut step = n;
    while step > 1 {
        let half = step / 2;
        // Diamond step: centres of squares.
        for y in (half..size).step_by(step) {
            for x in (half..size).step_by(step) {
                let avg = (g.get(x - half, y - half)
                    + g.get(x + half, y - half)
                    + g.get(x - half, y + half)
                    + g.get(x + half, y + half))
                    / 4.0;
                g.set(x, y, avg + amp * rng.gen_range(-1.0..1.0));
            }
        }
        // Square step: edge midpoints.
        for y in (0..size).step_by(half) {
            let x_start = if (y / half) % 2 == 0 { half } else { 0 };
            for x in (x_start..size).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if x >= half {
                    sum += g.get(x - half, y);
                    count += 1.0;
                }
                if x + half < size {
                    sum += g.get(x + half, y);
                    count += 1.0;
                }
                if y >= half {
                    sum += g.get(x, y - half);
                    count += 1.0;
                }
                if y + half < size {
                    sum += g.get(x, y + half);
                    count += 1.0;
                }
                g.set(x, y, sum / count + amp * rng.gen_range(-1.0..1.0));
            }
        }
        step = half;
        amp *= decay;
    }
    g.normalized()
}

/// Square, tileable-by-wrap RGB texture.
pub(crate) struct Texture {
    pub size: usize,
    data: Vec<[f64; 3]>,
}

impl Texture {
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.size + x]
    }
}

const FROST_SIZE: usize = 128;
const FROST_SEEDS: [u64; 3] = [0x0f05_7001, 0x0f05_7002, 0x0f05_7003];

/// Three frost textures, generated once from fixed seeds.
pub(crate) fn frost_textures() -> &'static [Texture] {
    static TEXTURES: OnceLock<Vec<Texture>> = OnceLock::new();
    TEXTURES.get_or_init(|| FROST_SEEDS.iter().map(|&s| frost_texture(s)).collect())
}

/// Branching ice crystals grown by random walks over a faint plasma ground.
fn frost_texture(seed: u64) -> Texture {
    let n = FROST_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground = plasma(n, 0.55, &mut rng);
    let mut ice = vec![0.0f64; n * n];
    let deposit = |x: f64, y: f64, v: f64, ice: &mut Vec<f64>| {
        let xi = (x.rem_euclid(n as f64)) as usize % n;
        let yi = (y.rem_euclid(n as f64)) as usize % n;
        ice[yi * n + xi] += v;
    };
    for _ in 0..40 {
        let mut stack = vec![(
            rng.gen_range(0.0..n as f64),
            rng.gen_range(0.0..n as f64),
            rng.gen_range(0.0..std::f64::consts::TAU),
            1.0f64,
        )];
        while let Some((mut x, mut y, mut theta, strength)) = stack.pop() {
            let steps = (rng.gen_range(8.0..24.0) * strength) as usize;
            for _ in 0..steps {
                deposit(x, y, 0.5 * strength, &mut ice);
                theta += rng.gen_range(-0.25..0.25);
                x += theta.cos();
                y += theta.sin();
                if strength > 0.3 && rng.gen::<f64>() < 0.08 {
                    let turn = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    stack.push((x, y, theta + turn * rng.gen_range(0.6..1.2), strength * 0.6));
                }
            }
        }
    }
    // One 3×3 smoothing pass with wrap-around.
    let mut smooth = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut s = 0.0;
            for dy in [n - 1, 0, 1] {
                for dx in [n - 1, 0, 1] {
                    s += ice[((y + dy) % n) * n + (x + dx) % n];
                }
            }
            smooth[y * n + x] = s / 9.0;
        }
    }
    let peak = smooth.iter().copied().fold(0.0f64, f64::max).max(1e-12);
    let tint = [0.86, 0.93, 1.0];
    let data = (0..n * n)
        .map(|i| {
            let v = (0.35 * ground.as_slice()[(i / n) * (n + 1) + i % n] + (smooth[i] / peak).sqrt())
                .min(1.0);
            tint.map(|t| t * v)
        })
        .collect();
    Texture { size: n, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plasma_is_normalized_and_seeded() {
        let a = plasma(40, 0.6, &mut ChaCha8Rng::seed_from_u64(3));
        let b = plasma(40, 0.6, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.dims(), (65, 65));
        let (lo, hi) = a.min_max();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn frost_textures_are_bright_and_bounded() {
        for t in frost_textures() {
            let mean = t.data.iter().map(|c| c[2]).sum::<f64>() / t.data.len() as f64;
            assert!(mean > 0.1 && mean < 1.0, "{mean}");
            assert!(t.data.iter().all(|c| c.iter().all(|v| (0.0..=1.0).contains(v))));
        }
    }
}
