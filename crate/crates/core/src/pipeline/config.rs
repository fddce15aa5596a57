//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::{MaskGeometry, TierWeights, DEFAULT_BINS};
use crate::corruption::{CorruptionKind, Partition, Severity};
use crate::dataset::SplitRatios;
use crate::error::{Error, Result};
use crate::features::{NetworkSpec, Tap};
use crate::night::NightParamPair;
use crate::svm::SvmConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSection,
    pub night: NightSection,
    pub corruption: CorruptionSection,
    pub attention: AttentionSection,
    pub features: FeatureSection,
    pub pca: PcaSection,
    pub svm: SvmSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset directory in the `images/` + `labels/` layout.
    pub root: PathBuf,
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self {
            root: PathBuf::from("data"),
            train: r.train,
            validation: r.validation,
            test: r.test,
            seed: 0,
        }
    }
}

impl DataSection {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NightSection {
    /// Adds a night-graded copy of every training frame.
    pub enabled: bool,
    /// Override file for the grading parameters; empty keeps the defaults.
    pub params: PathBuf,
}

impl NightSection {
    pub fn resolve(&self) -> Result<NightParamPair> {
        if self.params.as_os_str().is_empty() {
            Ok(NightParamPair::default())
        } else {
            NightParamPair::from_file(&self.params)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSection {
    /// Adds corrupted copies of every training ROI.
    pub enabled: bool,
    /// Kind names, or `["train"]` for the whole training partition.
    pub kinds: Vec<String>,
    pub severities: Vec<String>,
    /// Corrupted copies per training ROI; each draws its kind and severity.
    pub copies: usize,
    pub seed: u64,
}

impl Default for CorruptionSection {
    fn default() -> Self {
        Self {
            enabled: false,
            kinds: vec!["train".into()],
            severities: Severity::ALL.iter().map(|s| s.name().to_string()).collect(),
            copies: 1,
            seed: 0,
        }
    }
}

impl CorruptionSection {
    pub fn resolved_kinds(&self) -> Result<Vec<CorruptionKind>> {
        let mut out = Vec::new();
        for k in &self.kinds {
            for kind in crate::corruption::parse_kind_list(k)? {
                if !out.contains(&kind) {
                    out.push(kind);
                }
            }
        }
        Ok(out)
    }

    pub fn resolved_severities(&self) -> Result<Vec<Severity>> {
        let mut out = Vec::new();
        for s in &self.severities {
            for sev in crate::corruption::parse_severity_list(s)? {
                if !out.contains(&sev) {
                    out.push(sev);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionSection {
    /// Blend the conspicuity map into every ROI.
    pub conspicuity: bool,
    pub alpha: f64,
    /// Luminance and red-green stream weights.
    pub stream_weights: [f64; 2],
    pub bins: usize,
    /// Multiply every ROI by the tiered weight mask.
    pub mask: bool,
    pub geometry: MaskGeometry,
    pub weights: TierWeights,
}

impl Default for AttentionSection {
    fn default() -> Self {
        Self {
            conspicuity: false,
            alpha: 0.5,
            stream_weights: [1.0, 1.0],
            bins: DEFAULT_BINS,
            mask: false,
            geometry: MaskGeometry::default(),
            weights: TierWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub tap: Tap,
    /// Convolution widths are divided by this; 1 is the full network.
    pub width_divisor: usize,
    /// Seed for the random weights when `weights` is empty.
    pub seed: u64,
    /// TLWT weight file; empty means seeded random weights.
    pub weights: PathBuf,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            tap: Tap::Fc1,
            width_divisor: 1,
            seed: 0,
            weights: PathBuf::new(),
        }
    }
}

impl FeatureSection {
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        if self.width_divisor == 1 {
            Ok(NetworkSpec::vgg16())
        } else {
            NetworkSpec::vgg16_narrow(self.width_divisor)
                .map_err(|e| Error::Config(format!("features.width_divisor: {e}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub enabled: bool,
    pub components: usize,
    /// Fit on training, validation and test rows together instead of
    /// training rows only. Labels are never used either way.
    pub fit_all_splits: bool,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self {
            enabled: true,
            components: crate::pca::DEFAULT_COMPONENTS,
            fit_all_splits: false,
        }
    }
}

/// Solver settings plus the validation grid for `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub margin_scale: f64,
    pub standardize: bool,
    pub append_bias: bool,
    /// Candidates tried on the validation split; empty uses `c` as given.
    pub c_grid: Vec<f64>,
}

impl Default for SvmSection {
    fn default() -> Self {
        let s = SvmConfig::default();
        Self {
            c: s.c,
            epochs: s.epochs,
            seed: s.seed,
            margin_scale: s.margin_scale,
            standardize: s.standardize,
            append_bias: s.append_bias,
            c_grid: vec![1.0, 10.0, 100.0, 1000.0],
        }
    }
}

impl SvmSection {
    pub fn solver(&self) -> SvmConfig {
        SvmConfig {
            c: self.c,
            epochs: self.epochs,
            seed: self.seed,
            margin_scale: self.margin_scale,
            standardize: self.standardize,
            append_bias: self.append_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.data.root,
            &mut self.night.params,
            &mut self.features.weights,
            &mut self.output.dir,
        ] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    /// Checks values only; paths are checked by [`PipelineConfig::check_paths`].
    pub fn validate(&self) -> Result<()> {
        self.data.ratios().validate()?;
        if self.data.train <= 0.0 || self.data.validation <= 0.0 || self.data.test <= 0.0 {
            return Err(Error::Config("every split needs a positive ratio".into()));
        }
        let c = &self.corruption;
        let kinds = c.resolved_kinds()?;
        let severities = c.resolved_severities()?;
        if c.enabled {
            if kinds.is_empty() || severities.is_empty() || c.copies == 0 {
                return Err(Error::Config(
                    "corruption enabled with no kinds, severities or copies".into(),
                ));
            }
        }
        if let Some(k) = kinds.iter().find(|k| k.partition() != Partition::Train) {
            return Err(Error::Config(format!(
                "corruption kind `{k}` belongs to the test partition and cannot be used in training"
            )));
        }
        let a = &self.attention;
        if !(0.0..=1.0).contains(&a.alpha) {
            return Err(Error::Config(format!("attention.alpha = {} outside [0, 1]", a.alpha)));
        }
        if a.bins < 2 {
            return Err(Error::Config("attention.bins must be at least 2".into()));
        }
        if a.stream_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || a.stream_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("attention.stream_weights must be nonnegative, not all zero".into()));
        }
        a.geometry.validate()?;
        a.weights.validate()?;
        self.features.network_spec()?;
        if self.pca.enabled && self.pca.components == 0 {
            return Err(Error::Config("pca.components must be at least 1".into()));
        }
        self.svm.solver().validate()?;
        if let Some(c) = self.svm.c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Config(format!("svm.c_grid entry {c} is not positive")));
        }
        Ok(())
    }

    /// Every referenced input path must exist.
    pub fn check_paths(&self) -> Result<()> {
        let mut inputs = vec![("data.root", &self.data.root)];
        if self.night.enabled && !self.night.params.as_os_str().is_empty() {
            inputs.push(("night.params", &self.night.params));
        }
        if !self.features.weights.as_os_str().is_empty() {
            inputs.push(("features.weights", &self.features.weights));
        }
        for (key, p) in inputs {
            if !p.exists() {
                return Err(Error::Config(format!("{key}: {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
