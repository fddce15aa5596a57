//! Thirteen image corruptions at three severities.
//!
//! Seven kinds are used to augment training data; the other six are held out
//! as robustness benchmarks. Each [`CorruptionSpec`] resolves its numeric
//! parameters from the frozen [`severity_params`] table, and stochastic kinds
//! draw only from a ChaCha stream keyed by `(seed, kind)`, so identical specs
//! produce identical bytes.
//!
//! The algorithms live in [`ops`]; see the module docs there for a short
//! description of each.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Provenance, RoiImage};
use crate::error::{Error, Result};

pub mod ops;
pub mod reference;
mod texture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CorruptionKind {
    RainBlur,
    Snow,
    Fog,
    AlphaBlend,
    FrostedGlassBlur,
    LensDefect,
    Jpeg,
    ZoomBlur,
    Frost,
    Contrast,
    RainDrop,
    ShotNoise,
    Pixelate,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 13] = [
        CorruptionKind::RainBlur,
        CorruptionKind::Snow,
        CorruptionKind::Fog,
        CorruptionKind::AlphaBlend,
        CorruptionKind::FrostedGlassBlur,
        CorruptionKind::LensDefect,
        CorruptionKind::Jpeg,
        CorruptionKind::ZoomBlur,
        CorruptionKind::Frost,
        CorruptionKind::Contrast,
        CorruptionKind::RainDrop,
        CorruptionKind::ShotNoise,
        CorruptionKind::Pixelate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::RainBlur => "rain_blur",
            CorruptionKind::Snow => "snow",
            CorruptionKind::Fog => "fog",
            CorruptionKind::AlphaBlend => "alpha_blend",
            CorruptionKind::FrostedGlassBlur => "frosted_glass_blur",
            CorruptionKind::LensDefect => "lens_defect",
            CorruptionKind::Jpeg => "jpeg",
            CorruptionKind::ZoomBlur => "zoom_blur",
            CorruptionKind::Frost => "frost",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::RainDrop => "rain_drop",
            CorruptionKind::ShotNoise => "shot_noise",
            CorruptionKind::Pixelate => "pixelate",
        }
    }

    pub fn partition(self) -> Partition {
        match self {
            CorruptionKind::RainBlur
            | CorruptionKind::Snow
            | CorruptionKind::Fog
            | CorruptionKind::AlphaBlend
            | CorruptionKind::FrostedGlassBlur
            | CorruptionKind::LensDefect
            | CorruptionKind::Jpeg => Partition::Train,
            _ => Partition::Test,
        }
    }

    /// Whether the kind consumes the spec's seed.
    pub fn is_stochastic(self) -> bool {
        !matches!(
            self,
            CorruptionKind::Jpeg
                | CorruptionKind::ZoomBlur
                | CorruptionKind::Contrast
                | CorruptionKind::Pixelate
        )
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownCorruption(s.to_string()))
    }
}

/// Kinds of one partition, in table order.
pub fn corruption_partition(partition: Partition) -> Vec<CorruptionKind> {
    CorruptionKind::ALL
        .into_iter()
        .filter(|k| k.partition() == partition)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Severe];

    pub fn name(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown severity `{s}`")))
    }
}

/// `(parameter, [mild, moderate, severe])` rows per kind.
type SeverityRow = (&'static str, [f64; 3]);

fn severity_table(kind: CorruptionKind) -> &'static [SeverityRow] {
    match kind {
        CorruptionKind::RainBlur => &[
            ("streak_length", [0.04, 0.08, 0.14]),
            ("lift", [0.03, 0.06, 0.10]),
        ],
        CorruptionKind::Snow => &[
            ("flake_density", [0.02, 0.05, 0.09]),
            ("streak_length", [0.03, 0.05, 0.08]),
            ("veil", [0.10, 0.25, 0.40]),
        ],
        CorruptionKind::Fog => &[("strength", [0.4, 0.9, 1.6]), ("decay", [0.65, 0.6, 0.55])],
        CorruptionKind::AlphaBlend => &[
            ("alpha", [0.15, 0.30, 0.45]),
            ("ghost_shift", [0.02, 0.04, 0.07]),
        ],
        CorruptionKind::FrostedGlassBlur => &[
            ("swap_radius", [1.0, 2.0, 4.0]),
            ("iterations", [1.0, 2.0, 2.0]),
            ("blur_radius", [1.0, 1.0, 1.0]),
        ],
        CorruptionKind::LensDefect => &[
            ("blobs", [3.0, 6.0, 10.0]),
            ("blob_radius", [0.07, 0.10, 0.13]),
            ("opacity", [0.45, 0.6, 0.75]),
            ("scratches", [1.0, 2.0, 4.0]),
        ],
        CorruptionKind::Jpeg => &[("quality", [25.0, 12.0, 7.0])],
        CorruptionKind::ZoomBlur => &[("max_zoom", [1.06, 1.14, 1.26]), ("step", [0.01, 0.02, 0.02])],
        CorruptionKind::Frost => &[
            ("image_weight", [0.9, 0.75, 0.6]),
            ("frost_weight", [0.35, 0.55, 0.75]),
        ],
        CorruptionKind::Contrast => &[("factor", [0.5, 0.3, 0.15])],
        CorruptionKind::RainDrop => &[
            ("drops", [4.0, 8.0, 14.0]),
            ("drop_radius", [0.08, 0.11, 0.14]),
            ("blur_radius", [1.0, 2.0, 3.0]),
        ],
        CorruptionKind::ShotNoise => &[("photons", [60.0, 25.0, 10.0])],
        CorruptionKind::Pixelate => &[("block_size", [4.0, 8.0, 16.0])],
    }
}

/// Frozen parameter values for `(kind, level)`.
pub fn severity_params(kind: CorruptionKind, level: Severity) -> BTreeMap<String, f64> {
    severity_table(kind)
        .iter()
        .map(|(name, values)| (name.to_string(), values[level.index()]))
        .collect()
}

/// A fully resolved corruption request.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: Severity, seed: u64) -> Self {
        Self {
            kind,
            severity,
            seed,
            params: severity_params(kind, severity),
        }
    }

    /// Overrides one table entry; used to probe values outside the table.
    pub fn with_param(mut self, name: &str, value: f64) -> Result<Self> {
        match self.params.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(self)
            }
            None => Err(Error::Config(format!(
                "{} has no parameter `{name}`",
                self.kind
            ))),
        }
    }

    pub(crate) fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    /// Generator for this spec: ChaCha8 seeded by `seed`, stream = kind.
    pub(crate) fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.kind as u64 + 1);
        rng
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::Corrupted {
            kind: self.kind,
            severity: self.severity,
            seed: self.seed,
        }
    }

    /// `<stem>__<kind>__<severity>__<seed>.png`
    pub fn file_name(&self, stem: &str) -> String {
        format!("{stem}__{}__{}__{}.png", self.kind, self.severity, self.seed)
    }
}

/// Applies the corruption; output has the input's dimensions.
pub fn apply_corruption(image: &RgbImage, spec: &CorruptionSpec) -> Result<RoiImage> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::InvalidInput("cannot corrupt an empty image".into()));
    }
    for (name, _) in severity_table(spec.kind) {
        if !spec.params.get(*name).is_some_and(|v| v.is_finite()) {
            return Err(Error::Config(format!(
                "{}: parameter `{name}` missing or non-finite",
                spec.kind
            )));
        }
    }
    let out = ops::apply(image, spec)?;
    debug_assert_eq!(out.dimensions(), image.dimensions());
    Ok(RoiImage {
        image: out,
        provenance: spec.provenance(),
    })
}

/// Parses `train`, `test`, `all` or a comma-separated list of kind names.
pub fn parse_kind_list(s: &str) -> Result<Vec<CorruptionKind>> {
    match s.trim() {
        "train" => Ok(corruption_partition(Partition::Train)),
        "test" => Ok(corruption_partition(Partition::Test)),
        "all" => Ok(CorruptionKind::ALL.to_vec()),
        list => list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect(),
    }
}

/// Parses a severity name or `all`.
pub fn parse_severity_list(s: &str) -> Result<Vec<Severity>> {
    match s.trim() {
        "all" => Ok(Severity::ALL.to_vec()),
        list => list.split(',').map(str::parse).collect(),
    }
}

/// Mean Euclidean distance between two equally sized images, over all bytes.
pub fn l2_distance(a: &RgbImage, b: &RgbImage) -> f64 {
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn partition_matches_published_split() {
        let train: Vec<_> = corruption_partition(Partition::Train)
            .into_iter()
            .map(CorruptionKind::name)
            .collect();
        assert_eq!(
            train,
            ["rain_blur", "snow", "fog", "alpha_blend", "frosted_glass_blur", "lens_defect", "jpeg"]
        );
        let test: Vec<_> = corruption_partition(Partition::Test)
            .into_iter()
            .map(CorruptionKind::name)
            .collect();
        assert_eq!(test, ["zoom_blur", "frost", "contrast", "rain_drop", "shot_noise", "pixelate"]);
    }

    #[test]
    fn table_entries() {
        assert_eq!(severity_params(CorruptionKind::Pixelate, Severity::Mild)["block_size"], 4.0);
        assert_eq!(severity_params(CorruptionKind::Pixelate, Severity::Severe)["block_size"], 16.0);
        assert_eq!(severity_params(CorruptionKind::Jpeg, Severity::Mild)["quality"], 25.0);
        assert_eq!(severity_params(CorruptionKind::Jpeg, Severity::Severe)["quality"], 7.0);
        let fog = |s| severity_params(CorruptionKind::Fog, s)["strength"];
        assert!(fog(Severity::Mild) < fog(Severity::Moderate));
        assert!(fog(Severity::Moderate) < fog(Severity::Severe));
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(matches!(
            "hail".parse::<CorruptionKind>(),
            Err(Error::UnknownCorruption(_))
        ));
        assert!(parse_kind_list("fog,hail").is_err());
        assert_eq!(parse_kind_list("fog, jpeg").unwrap().len(), 2);
    }

    #[test]
    fn pixelate_with_unit_blocks_is_identity() {
        let img = reference::reference_images(1, 20, 14).remove(0);
        let spec = CorruptionSpec::new(CorruptionKind::Pixelate, Severity::Mild, 0)
            .with_param("block_size", 1.0)
            .unwrap();
        assert_eq!(apply_corruption(&img, &spec).unwrap().image, img);
    }

    #[test]
    fn contrast_fixes_constant_images() {
        for s in Severity::ALL {
            let spec = CorruptionSpec::new(CorruptionKind::Contrast, s, 5);
            let out = apply_corruption(&RgbImage::from_pixel(17, 9, Rgb([128; 3])), &spec).unwrap();
            assert!(out.image.pixels().all(|p| p.0 == [128; 3]));
        }
    }

    #[test]
    fn shot_noise_preserves_mean() {
        let img = RgbImage::from_pixel(100, 100, Rgb([128; 3]));
        for s in Severity::ALL {
            let out = apply_corruption(&img, &CorruptionSpec::new(CorruptionKind::ShotNoise, s, 9))
                .unwrap();
            let mean = out.image.as_raw().iter().map(|&v| v as f64).sum::<f64>()
                / out.image.as_raw().len() as f64;
            assert!((mean - 128.0).abs() / 128.0 < 0.02, "{s}: {mean}");
        }
    }

    #[test]
    fn every_kind_is_deterministic_and_shape_preserving() {
        let img = reference::reference_images(1, 23, 17).remove(0);
        for kind in CorruptionKind::ALL {
            for s in Severity::ALL {
                let spec = CorruptionSpec::new(kind, s, 42);
                let a = apply_corruption(&img, &spec).unwrap();
                let b = apply_corruption(&img, &spec).unwrap();
                assert_eq!(a.image.dimensions(), img.dimensions(), "{kind}");
                assert_eq!(a, b, "{kind} {s}");
                assert_eq!(a.provenance, spec.provenance());
            }
        }
    }

    #[test]
    fn seed_only_matters_for_stochastic_kinds() {
        let img = reference::reference_images(1, 24, 24).remove(0);
        for kind in CorruptionKind::ALL {
            let a = apply_corruption(&img, &CorruptionSpec::new(kind, Severity::Severe, 1)).unwrap();
            let b = apply_corruption(&img, &CorruptionSpec::new(kind, Severity::Severe, 2)).unwrap();
            assert_eq!(a.image == b.image, !kind.is_stochastic(), "{kind}");
        }
    }

    #[test]
    fn empty_image_is_rejected() {
        let spec = CorruptionSpec::new(CorruptionKind::Fog, Severity::Mild, 0);
        assert!(apply_corruption(&RgbImage::new(0, 5), &spec).is_err());
    }

    #[test]
    fn file_names_encode_provenance() {
        let spec = CorruptionSpec::new(CorruptionKind::RainDrop, Severity::Moderate, 17);
        assert_eq!(spec.file_name("car01"), "car01__rain_drop__moderate__17.png");
    }
}
