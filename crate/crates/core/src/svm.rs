//! Crammer-Singer multiclass linear SVM.
//!
//! Minimises
//!
//! ```text
//! ½ Σ_i ‖w_i‖² + (c/n) Σ_m ξ_m,
//! ξ_m = max_y ( M·Δ(y_m, y) + x_m·w_y − x_m·w_{y_m} ),   Δ = [y ≠ y_m]
//! ```
//!
//! with margin scale `M` (default 100). There are no bias terms; a constant
//! feature can be appended with [`SvmConfig::append_bias`].
//!
//! The solver is projected stochastic subgradient descent on the objective
//! divided by `c` (regulariser `λ = 1/c`): step `η_t = c/t`, update
//! `W ← (1 − 1/t)·W − η_t·∂ξ`, then projection onto the ball
//! `‖W‖ ≤ √(2Mc)`, which contains the optimum. Samples are visited in a
//! seeded shuffle each epoch. The reported weights are a `t`-weighted
//! running average of the iterates; at every epoch boundary the average is
//! scored on the full objective and kept only if it beats the best so far
//! (starting from `W = 0`), so the recorded objective never increases.
//!
//! Features are z-scored with training statistics unless
//! [`SvmConfig::standardize`] is off. Prediction takes the arg-max score,
//! lowest class id on ties.
//!
//! # File format
//!
//! ```text
//! TLSV  version u32 = 1, flags u32 (bit 0: bias feature appended,
//!       bit 1: standardised), k u32, d u32, margin_scale f64, c f64,
//!       W k × d' f64 row-major (d' = d + 1 with the bias flag, else d),
//!       mean d × f64, scale d × f64
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{check_finite, read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::pca::FeatureMatrix;

pub const SVM_MAGIC: &[u8; 4] = b"TLSV";
const SVM_VERSION: u32 = 1;
const FLAG_BIAS: u32 = 1;
const FLAG_STANDARDIZED: u32 = 2;

/// Margin scale of the hinge.
pub const DEFAULT_MARGIN_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub margin_scale: f64,
    pub standardize: bool,
    pub append_bias: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 60,
            seed: 0,
            margin_scale: DEFAULT_MARGIN_SCALE,
            standardize: true,
            append_bias: false,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config(format!("svm c must be positive, got {}", self.c)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("svm epochs must be at least 1".into()));
        }
        if !(self.margin_scale.is_finite() && self.margin_scale > 0.0) {
            return Err(Error::Config(format!(
                "margin scale must be positive, got {}",
                self.margin_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    k: usize,
    d: usize,
    /// `k × dim()` row-major, acting on prepared features.
    w: Vec<f64>,
    c: f64,
    margin_scale: f64,
    bias: bool,
    standardized: bool,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

/// Objective of the kept snapshot after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Objective of `W = 0`.
    pub initial: f64,
    pub epoch_objectives: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Slack and the maximising class for one prepared sample.
fn hinge(w: &[f64], dim: usize, x: &[f64], y: usize, margin: f64) -> (f64, usize) {
    let own = dot(&w[y * dim..(y + 1) * dim], x);
    let mut best = (0.0, y);
    for (c, row) in w.chunks_exact(dim).enumerate() {
        if c == y {
            continue;
        }
        let v = margin + dot(row, x) - own;
        if v > best.0 {
            best = (v, c);
        }
    }
    best
}

fn objective_raw(w: &[f64], dim: usize, xs: &[Vec<f64>], ys: &[usize], c: f64, margin: f64) -> f64 {
    let reg = 0.5 * dot(w, w);
    let slack: f64 = xs.iter().zip(ys).map(|(x, &y)| hinge(w, dim, x, y, margin).0).sum();
    reg + c / xs.len() as f64 * slack
}

impl SvmModel {
    /// A model with explicit weights on raw features (no standardisation,
    /// no bias). `w` is `k × d` row-major.
    pub fn from_weights(k: usize, d: usize, w: Vec<f64>, c: f64, margin_scale: f64) -> Result<Self> {
        if w.len() != k * d {
            return Err(Error::DimensionMismatch(format!("{} weights for {k}×{d}", w.len())));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite SVM weight".into()));
        }
        Ok(Self {
            k,
            d,
            w,
            c,
            margin_scale,
            bias: false,
            standardized: false,
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        })
    }

    /// Fits on `x` (one sample per row) with class ids `labels` in `0..k`.
    pub fn fit(x: &FeatureMatrix, labels: &[usize], k: usize, cfg: &SvmConfig) -> Result<(Self, FitTrace)> {
        cfg.validate()?;
        let (n, d) = (x.rows(), x.cols());
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!("{} labels for {n} samples", labels.len())));
        }
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("empty training set".into()));
        }
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {k}")));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::InvalidInput(format!("label {bad} outside 0..{k}")));
        }
        if let Some(missing) = (0..k).find(|c| !labels.contains(c)) {
            return Err(Error::InvalidInput(format!("class {missing} has no training samples")));
        }

        let (mean, scale) = if cfg.standardize {
            let mut mean = vec![0.0; d];
            for r in x.iter_rows() {
                mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; d];
            for r in x.iter_rows() {
                var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2));
            }
            let scale = var
                .iter()
                .map(|s| {
                    let sd = (s / n as f64).sqrt();
                    if sd > 1e-12 {
                        sd
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, scale)
        } else {
            (vec![0.0; d], vec![1.0; d])
        };
        let mut model = Self {
            k,
            d,
            w: Vec::new(),
            c: cfg.c,
            margin_scale: cfg.margin_scale,
            bias: cfg.append_bias,
            standardized: cfg.standardize,
            mean,
            scale,
        };
        let dim = model.dim();
        model.w = vec![0.0; k * dim];
        let xs: Vec<Vec<f64>> = x.iter_rows().map(|r| model.prepare(r)).collect();
        let (c, margin) = (cfg.c, cfg.margin_scale);
        let radius = (2.0 * margin * c).sqrt();

        let mut w = vec![0.0; k * dim];
        let mut avg = vec![0.0; k * dim];
        let mut best = vec![0.0; k * dim];
        let initial = objective_raw(&best, dim, &xs, labels, c, margin);
        let mut best_obj = initial;
        let mut trace = Vec::with_capacity(cfg.epochs);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut t = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &m in &order {
                t += 1;
                let eta = c / t as f64;
                let decay = 1.0 - 1.0 / t as f64;
                let (xm, ym) = (&xs[m], labels[m]);
                let (loss, arg) = hinge(&w, dim, xm, ym, margin);
                w.iter_mut().for_each(|v| *v *= decay);
                if loss > 0.0 {
                    for (j, xj) in xm.iter().enumerate() {
                        w[arg * dim + j] -= eta * xj;
                        w[ym * dim + j] += eta * xj;
                    }
                }
                let norm = dot(&w, &w).sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
                let rho = 2.0 / (t as f64 + 1.0);
                avg.iter_mut().zip(&w).for_each(|(a, v)| *a += rho * (v - *a));
            }
            let obj = objective_raw(&avg, dim, &xs, labels, c, margin);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from_slice(&avg);
            }
            trace.push(best_obj);
        }
        if best.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("SVM weights diverged".into()));
        }
        model.w = best;
        Ok((
            model,
            FitTrace {
                initial,
                epoch_objectives: trace,
            },
        ))
    }

    /// Width of a prepared feature vector.
    fn dim(&self) -> usize {
        self.d + usize::from(self.bias)
    }

    /// Standardise and append the bias feature.
    fn prepare(&self, x: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        if self.bias {
            v.push(1.0);
        }
        v
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for SVM input {}",
                x.len(),
                self.d
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite SVM input".into()));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn margin_scale(&self) -> f64 {
        self.margin_scale
    }

    /// `k × d'` weights on prepared features.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// The same model with `W` multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        let mut m = self.clone();
        m.w.iter_mut().for_each(|v| *v *= a);
        m
    }

    /// `x·w_i` for every class, after standardisation.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let v = self.prepare(x);
        Ok(self.w.chunks_exact(self.dim()).map(|row| dot(row, &v)).collect())
    }

    /// Arg-max class; the lowest id wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let s = self.decision_scores(x)?;
        let mut best = 0;
        for (i, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    /// Per-sample slacks `ξ_m` at the current weights.
    pub fn slacks(&self, x: &FeatureMatrix, labels: &[usize]) -> Result<Vec<f64>> {
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch("labels and samples differ in count".into()));
        }
        x.iter_rows()
            .zip(labels)
            .map(|(r, &y)| {
                self.check_input(r)?;
                if y >= self.k {
                    return Err(Error::InvalidInput(format!("label {y} outside 0..{}", self.k)));
                }
                Ok(hinge(&self.w, self.dim(), &self.prepare(r), y, self.margin_scale).0)
            })
            .collect()
    }

    /// `½ Σ‖w_i‖² + (c/n) Σ ξ_m`.
    pub fn objective(&self, x: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
        let xi = self.slacks(x, labels)?;
        if xi.is_empty() {
            return Err(Error::InvalidInput("empty set".into()));
        }
        Ok(0.5 * dot(&self.w, &self.w) + self.c / xi.len() as f64 * xi.iter().sum::<f64>())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let flags = if self.bias { FLAG_BIAS } else { 0 } | if self.standardized { FLAG_STANDARDIZED } else { 0 };
        let mut w = Writer::new(SVM_MAGIC);
        w.u32(SVM_VERSION)
            .u32(flags)
            .u32(self.k as u32)
            .u32(self.d as u32)
            .f64(self.margin_scale)
            .f64(self.c)
            .f64s(&self.w)
            .f64s(&self.mean)
            .f64s(&self.scale);
        write_file(path.as_ref(), &w.finish())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_file(path)?;
        let mut r = Reader::new(path, &buf, SVM_MAGIC)?;
        let version = r.u32()?;
        if version != SVM_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let flags = r.u32()?;
        if flags & !(FLAG_BIAS | FLAG_STANDARDIZED) != 0 {
            return Err(r.err(format!("unknown flags {flags:#x}")));
        }
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let margin_scale = r.f64()?;
        let c = r.f64()?;
        let bias = flags & FLAG_BIAS != 0;
        let dim = d + usize::from(bias);
        let w = r.f64s(k.checked_mul(dim).ok_or_else(|| r.err("size overflow"))?)?;
        let mean = r.f64s(d)?;
        let scale = r.f64s(d)?;
        r.finish()?;
        for part in [&w, &mean, &scale] {
            check_finite(path, part)?;
        }
        if scale.iter().any(|&s| s <= 0.0) || !(c > 0.0) || !(margin_scale > 0.0) {
            return Err(Error::format(path, "invalid SVM parameters"));
        }
        Ok(Self {
            k,
            d,
            w,
            c,
            margin_scale,
            bias,
            standardized: flags & FLAG_STANDARDIZED != 0,
            mean,
            scale,
        })
    }
}
