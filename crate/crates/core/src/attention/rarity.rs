//! Per-feature data rarity and conspicuity fusion.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{check_same_dims, quantize, RealRaster};

/// Default histogram resolution for rarity.
pub const DEFAULT_BINS: usize = 16;

/// Bin index of `v` in `bins` equal bins spanning `[lo, hi]`.
#[inline]
fn bin_of(v: f64, lo: f64, span: f64, bins: usize) -> usize {
    if span <= 0.0 {
        return 0;
    }
    (((v - lo) / span * bins as f64) as usize).min(bins - 1)
}

/// Self-information `−log2 p(bin)` of every pixel, before normalisation.
///
/// The histogram spans the map's own value range.
pub fn rarity_raw(map: &RealRaster, bins: usize) -> RealRaster {
    let bins = bins.max(2);
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    let mut hist = vec![0usize; bins];
    for &v in map.as_slice() {
        hist[bin_of(v, lo, span, bins)] += 1;
    }
    let n = map.as_slice().len() as f64;
    let info: Vec<f64> = hist
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { -(c as f64 / n).log2() })
        .collect();
    let (w, h) = map.dims();
    let data = map
        .as_slice()
        .iter()
        .map(|&v| info[bin_of(v, lo, span, bins)])
        .collect();
    RealRaster::from_vec(w, h, data).expect("same size")
}

/// Rarity normalised to `[0, 1]`; maps whose rarity is uniform become zero.
pub fn rarity_map(map: &RealRaster, bins: usize) -> RealRaster {
    rarity_raw(map, bins).normalized()
}

/// A stack of equally sized feature maps from one extraction level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapStack {
    pub maps: Vec<RealRaster>,
    pub level: u32,
}

impl FeatureMapStack {
    pub fn new(maps: Vec<RealRaster>, level: u32) -> Result<Self> {
        if let Some(first) = maps.first() {
            if maps.iter().any(|m| m.dims() != first.dims()) {
                return Err(Error::DimensionMismatch("feature maps differ in size".into()));
            }
        }
        Ok(Self { maps, level })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.maps.first().map(RealRaster::dims)
    }
}

/// Normalised single-channel saliency in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConspicuityMap(pub RealRaster);

impl ConspicuityMap {
    pub fn raster(&self) -> &RealRaster {
        &self.0
    }
}

fn check_weights(weights: &[f64], count: usize) -> Result<()> {
    if weights.len() != count {
        return Err(Error::DimensionMismatch(format!(
            "{} fusion weights for {count} maps",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("fusion weights must be nonnegative".into()));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidInput("fusion weights must not all be zero".into()));
    }
    Ok(())
}

/// Weighted mean of the per-map rarity maps, renormalised to `[0, 1]`.
pub fn conspicuity_from_stack(
    stack: &FeatureMapStack,
    fusion_weights: &[f64],
    bins: usize,
) -> Result<ConspicuityMap> {
    check_weights(fusion_weights, stack.len())?;
    let (w, h) = stack
        .dims()
        .ok_or_else(|| Error::InvalidInput("empty feature stack".into()))?;
    let total: f64 = fusion_weights.iter().sum();
    let mut acc = RealRaster::new(w, h);
    for (map, &wt) in stack.maps.iter().zip(fusion_weights) {
        if wt == 0.0 {
            continue;
        }
        let r = rarity_map(map, bins);
        for (a, v) in acc.as_mut_slice().iter_mut().zip(r.as_slice()) {
            *a += wt / total * v;
        }
    }
    Ok(ConspicuityMap(acc.normalized()))
}

/// Fuses several stacks: each stack yields a conspicuity map, and those are
/// combined with `stack_weights` and renormalised.
pub fn conspicuity_from_stacks(
    stacks: &[FeatureMapStack],
    stack_weights: &[f64],
    bins: usize,
) -> Result<ConspicuityMap> {
    check_weights(stack_weights, stacks.len())?;
    let maps = stacks
        .iter()
        .map(|s| conspicuity_from_stack(s, &vec![1.0; s.len()], bins))
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = maps[0].0.dims();
    let total: f64 = stack_weights.iter().sum();
    let mut acc = RealRaster::new(w, h);
    for (m, &wt) in maps.iter().zip(stack_weights) {
        if m.0.dims() != (w, h) {
            return Err(Error::DimensionMismatch("stacks differ in size".into()));
        }
        for (a, v) in acc.as_mut_slice().iter_mut().zip(m.0.as_slice()) {
            *a += wt / total * v;
        }
    }
    Ok(ConspicuityMap(acc.normalized()))
}

/// `(1 − α)·image + α·255·c`, with `c` bilinearly resampled to the image.
pub fn merge_with_raw(image: &RgbImage, c: &ConspicuityMap, alpha: f64) -> Result<RgbImage> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("merge alpha {alpha} outside [0,1]")));
    }
    let (w, h) = image.dimensions();
    let c = c.0.resize_bilinear(w as usize, h as usize);
    check_same_dims(
        (c.width() as u32, c.height() as u32),
        (w, h),
        "conspicuity map",
    )?;
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let s = c.get(x as usize, y as usize) * 255.0;
        let p = image.get_pixel(x, y).0;
        Rgb(p.map(|v| quantize((1.0 - alpha) * v as f64 + alpha * s)))
    }))
}
