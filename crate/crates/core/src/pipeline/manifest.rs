//! The run manifest: what was run, how long it took and what it wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::{overall_report_named, ConfusionMatrix, MetricsReport};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PCA_FILE: &str = "pca.tlpc";
pub const SVM_FILE: &str = "svm.tlsv";
pub const REPORT_FILE: &str = "report.txt";
pub const SPLITS_FILE: &str = "splits.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Validation accuracy of one `c` candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub c: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub train_frames: usize,
    pub validation: usize,
    pub test: usize,
    pub night: usize,
    pub corrupted: usize,
    /// Training rows after augmentation.
    pub train_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    /// Digest of the feature network's weights.
    pub weights_digest: String,
    pub feature_dim: usize,
    pub counts: SampleCounts,
    pub candidates: Vec<CandidateScore>,
    pub selected_c: f64,
    pub class_names: Vec<String>,
    /// Test confusion matrix, rows predicted.
    pub confusion: Vec<Vec<u64>>,
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<StageTiming>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::features::hex(&Sha256::digest(&bytes)))
}

impl RunManifest {
    /// The test report rebuilt from the stored confusion matrix.
    pub fn report(&self) -> Result<MetricsReport> {
        overall_report_named(&ConfusionMatrix::from_rows(&self.confusion)?, &self.class_names)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest always serialises")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::binio::write_file(&dir.join(MANIFEST_FILE), self.to_toml_string().as_bytes())
    }

    /// Reads `dir/manifest.toml` and recomputes every artifact digest.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        m.verify(dir)?;
        Ok(m)
    }

    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let p = dir.join(&a.file);
            let got = file_digest(&p)?;
            if got != a.sha256 {
                return Err(Error::format(
                    &p,
                    format!("digest {got} does not match manifest {}", a.sha256),
                ));
            }
        }
        Ok(())
    }

    /// Copy with timings removed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Vec::new(),
            ..self.clone()
        }
    }
}
