//! Fixed 3×3 filter bank used as the level-1 feature extractor.

use std::f64::consts::PI;

use image::RgbImage;

use super::rarity::{conspicuity_from_stacks, ConspicuityMap, FeatureMapStack};
use crate::error::{Error, Result};
use crate::raster::RealRaster;

/// Row-major 3×3 kernel, applied as a correlation.
pub type Kernel3 = [[f64; 3]; 3];

pub const IDENTITY_KERNEL: Kernel3 = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
pub const SOBEL_X: Kernel3 = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
pub const SOBEL_Y: Kernel3 = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

fn combine(parts: &[(f64, &Kernel3)]) -> Kernel3 {
    let mut k = [[0.0; 3]; 3];
    for (w, src) in parts {
        for r in 0..3 {
            for c in 0..3 {
                k[r][c] += w * src[r][c];
            }
        }
    }
    k
}

/// The 64-kernel default bank.
///
/// * 16 first-derivative kernels, Sobel steered to angles `i·π/8`;
/// * 16 second-derivative (line) kernels steered to angles `i·π/16`;
/// * 16 centre-surround kernels, on- and off-centre at 8 surround gains;
/// * 8 saddle kernels (steered `∂²/∂x∂y`) and 8 smoothing kernels.
pub fn default_filter_bank() -> Vec<Kernel3> {
    const LXX: Kernel3 = [[0.25, -0.5, 0.25], [0.5, -1.0, 0.5], [0.25, -0.5, 0.25]];
    const LYY: Kernel3 = [[0.25, 0.5, 0.25], [-0.5, -1.0, -0.5], [0.25, 0.5, 0.25]];
    const LXY: Kernel3 = [[0.25, 0.0, -0.25], [0.0, 0.0, 0.0], [-0.25, 0.0, 0.25]];

    let mut bank = Vec::with_capacity(64);
    for i in 0..16 {
        let t = i as f64 * PI / 8.0;
        bank.push(combine(&[(t.cos(), &SOBEL_X), (t.sin(), &SOBEL_Y)]));
    }
    for i in 0..16 {
        let t = i as f64 * PI / 16.0;
        let (c, s) = (t.cos(), t.sin());
        bank.push(combine(&[(c * c, &LXX), (2.0 * s * c, &LXY), (s * s, &LYY)]));
    }
    for i in 0..8 {
        let gain = 0.25 * (i + 1) as f64;
        let mut on = [[-gain / 8.0; 3]; 3];
        on[1][1] = 1.0;
        let off = on.map(|row| row.map(|v| -v));
        bank.push(on);
        bank.push(off);
    }
    for i in 0..8 {
        let t = i as f64 * PI / 8.0;
        bank.push(combine(&[((2.0 * t).cos(), &LXY), ((2.0 * t).sin() / 2.0, &LXX), (-(2.0 * t).sin() / 2.0, &LYY)]));
    }
    let ninth = 1.0 / 9.0;
    let smoothing: [Kernel3; 8] = [
        IDENTITY_KERNEL,
        [[ninth; 3]; 3],
        [[1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0], [2.0 / 16.0, 4.0 / 16.0, 2.0 / 16.0], [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0]],
        [[0.0; 3], [1.0 / 3.0; 3], [0.0; 3]],
        [[0.0, 1.0 / 3.0, 0.0]; 3],
        [[1.0 / 3.0, 0.0, 0.0], [0.0, 1.0 / 3.0, 0.0], [0.0, 0.0, 1.0 / 3.0]],
        [[0.0, 0.0, 1.0 / 3.0], [0.0, 1.0 / 3.0, 0.0], [1.0 / 3.0, 0.0, 0.0]],
        [[0.0, 0.2, 0.0], [0.2, 0.2, 0.2], [0.0, 0.2, 0.0]],
    ];
    bank.extend(smoothing);
    bank
}

/// Same-size correlation with edge replication.
pub fn correlate3(image: &RealRaster, k: &Kernel3) -> RealRaster {
    let (w, h) = image.dims();
    RealRaster::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (r, row) in k.iter().enumerate() {
            let yy = (y as i64 + r as i64 - 1).clamp(0, h as i64 - 1) as usize;
            for (c, &kv) in row.iter().enumerate() {
                let xx = (x as i64 + c as i64 - 1).clamp(0, w as i64 - 1) as usize;
                acc += kv * image.get(xx, yy);
            }
        }
        acc
    })
}

/// One feature map per kernel.
pub fn filter_bank_maps(image: &RealRaster, bank: &[Kernel3]) -> Result<FeatureMapStack> {
    if bank.is_empty() {
        return Err(Error::InvalidInput("empty filter bank".into()));
    }
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    FeatureMapStack::new(bank.iter().map(|k| correlate3(image, k)).collect(), 1)
}

/// Red-green opponent channel `(R − G)/2 + 1/2` in `[0, 1]`.
pub fn red_green_opponent(image: &RgbImage) -> RealRaster {
    let (w, h) = image.dimensions();
    RealRaster::from_fn(w as usize, h as usize, |x, y| {
        let p = image.get_pixel(x as u32, y as u32).0;
        (p[0] as f64 - p[1] as f64) / 510.0 + 0.5
    })
}

/// Conspicuity from the two default streams: the bank over luminance and
/// over the red-green opponent channel, fused with `stream_weights`.
pub fn default_conspicuity(image: &RgbImage, stream_weights: [f64; 2], bins: usize) -> Result<ConspicuityMap> {
    let bank = default_filter_bank();
    let luminance = filter_bank_maps(&RealRaster::luminance(image), &bank)?;
    let opponent = filter_bank_maps(&red_green_opponent(image), &bank)?;
    conspicuity_from_stacks(&[luminance, opponent], &stream_weights, bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_has_64_distinct_kernels() {
        let bank = default_filter_bank();
        assert_eq!(bank.len(), 64);
        for i in 0..bank.len() {
            for j in i + 1..bank.len() {
                let same = bank[i]
                    .iter()
                    .flatten()
                    .zip(bank[j].iter().flatten())
                    .all(|(a, b)| (a - b).abs() < 1e-12);
                assert!(!same, "kernels {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn identity_kernel_is_identity() {
        let img = RealRaster::from_fn(6, 4, |x, y| (x * 10 + y) as f64);
        let maps = filter_bank_maps(&img, &[IDENTITY_KERNEL]).unwrap();
        assert_eq!(maps.maps[0], img);
    }

    #[test]
    fn sobel_peaks_on_the_edge_column() {
        // Columns 0,0,½,1,1: by hand, responses are 0,2,4,2,0 on every row.
        let row = [0.0, 0.0, 0.5, 1.0, 1.0];
        let img = RealRaster::from_fn(5, 5, |x, _| row[x]);
        let out = filter_bank_maps(&img, &[SOBEL_X]).unwrap().maps.remove(0);
        for y in 0..5 {
            let got: Vec<f64> = (0..5).map(|x| out.get(x, y)).collect();
            assert_eq!(got, vec![0.0, 2.0, 4.0, 2.0, 0.0]);
        }
    }

    #[test]
    fn empty_bank_is_rejected() {
        assert!(filter_bank_maps(&RealRaster::new(2, 2), &[]).is_err());
    }

    #[test]
    fn default_bank_yields_64_maps() {
        let img = RealRaster::from_fn(9, 7, |x, y| ((x ^ y) & 3) as f64);
        let stack = filter_bank_maps(&img, &default_filter_bank()).unwrap();
        assert_eq!(stack.len(), 64);
        assert_eq!(stack.dims(), Some((9, 7)));
    }
}
