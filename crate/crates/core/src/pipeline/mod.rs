//! End-to-end orchestration.
//!
//! Stage order: ingest, split, augment (training frames only), attention,
//! features, PCA, SVM, evaluation. PCA and the SVM see training rows only;
//! the validation split picks `c`; the test split is scored once.

mod config;
mod labels;
mod manifest;
mod toy;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{
    AttentionSection, CorruptionSection, DataSection, FeatureSection, NightSection, OutputSection,
    PcaSection, PipelineConfig, SvmSection,
};
pub use labels::{align_labels, format_labels, parse_labels, read_labels, write_labels};
pub use manifest::{
    file_digest, Artifact, CandidateScore, RunManifest, SampleCounts, StageTiming, MANIFEST_FILE,
    PCA_FILE, REPORT_FILE, SPLITS_FILE, SVM_FILE,
};
pub use toy::{generate_toy_dataset, ToyRoiSpec};

use crate::attention::{build_weighted_mask, default_conspicuity, fuse_mask, merge_with_raw};
use crate::corruption::{apply_corruption, CorruptionSpec, Partition};
use crate::dataset::{
    crop_roi, load_dataset_dir, split_dataset_dir, AnnotatedFrame, BehaviorClass, BoundingBox,
    Provenance,
};
use crate::error::{Error, Result};
use crate::features::{
    build_network_for, extract_features, load_weights, NetworkSpec, NetworkWeights,
};
use crate::metrics::{
    confusion_matrix, default_class_names, overall_report_named, robustness_drop, MetricsReport,
    RobustnessDrop,
};
use crate::night::{day_to_night, mask_from_box};
use crate::pca::{FeatureMatrix, PcaModel};
use crate::svm::SvmModel;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "TAILLIGHT_THREADS";

/// Worker count from `TAILLIGHT_THREADS`, else the available parallelism.
pub fn worker_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a pool sized by [`worker_threads`].
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads()?)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(f)
}

/// One sample moving through the stages: the full frame and its box until
/// the attention stage, the cropped ROI afterwards.
#[derive(Debug, Clone)]
struct Sample {
    id: String,
    image: RgbImage,
    bbox: BoundingBox,
    label: usize,
    provenance: Provenance,
}

impl Sample {
    fn frame(&self) -> AnnotatedFrame {
        AnnotatedFrame {
            image: self.image.clone(),
            bbox: self.bbox,
            label: BehaviorClass::from_id(self.label).expect("labels come from frames"),
            source_id: self.id.clone(),
        }
    }
}

fn samples_of(frames: &[AnnotatedFrame]) -> Vec<Sample> {
    frames
        .iter()
        .map(|f| Sample {
            id: f.source_id.clone(),
            image: f.image.clone(),
            bbox: f.bbox,
            label: f.label.id(),
            provenance: Provenance::Clean,
        })
        .collect()
}

/// Night-graded copies of the training frames.
fn night_copies(clean: &[Sample], night: &NightSection) -> Result<Vec<Sample>> {
    let params = night.resolve()?;
    clean
        .par_iter()
        .map(|s| {
            let mask = mask_from_box(&s.bbox, s.image.width(), s.image.height());
            Ok(Sample {
                id: format!("{}__night", s.id),
                image: day_to_night(&s.image, &mask, &params)?,
                provenance: Provenance::NightSynth,
                ..s.clone()
            })
        })
        .collect()
}

/// `copies` corrupted versions of each clean frame, corrupting the ROI in
/// place. Copy `j` of frame `i` draws kind, severity and seed from
/// ChaCha8(seed) on stream `i · copies + j`.
fn corrupted_copies(clean: &[Sample], plan: &CorruptionSection) -> Result<Vec<Sample>> {
    let kinds = plan.resolved_kinds()?;
    let severities = plan.resolved_severities()?;
    let jobs: Vec<(usize, usize)> = (0..clean.len())
        .flat_map(|i| (0..plan.copies).map(move |j| (i, j)))
        .collect();
    jobs.par_iter()
        .map(|&(i, j)| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream((i * plan.copies + j) as u64);
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let severity = severities[rng.gen_range(0..severities.len())];
            let spec = CorruptionSpec::new(kind, severity, rng.gen());
            let src = &clean[i];
            let roi = apply_corruption(&crop_roi(&src.frame())?.image, &spec)?;
            let rect = src.bbox.to_pixels(src.image.width(), src.image.height());
            let mut image = src.image.clone();
            image::imageops::replace(&mut image, &roi.image, rect.x as i64, rect.y as i64);
            Ok(Sample {
                id: format!("{}__{kind}__{severity}__{}", src.id, spec.seed),
                image,
                provenance: roi.provenance,
                ..src.clone()
            })
        })
        .collect()
}

/// Every training provenance must be clean, night or a train-partition kind.
fn check_training_hygiene(samples: &[Sample]) -> Result<()> {
    for s in samples {
        if let Provenance::Corrupted { kind, .. } = s.provenance {
            if kind.partition() != Partition::Train {
                return Err(Error::InvalidInput(format!(
                    "{}: test-partition corruption `{kind}` in training data",
                    s.id
                )));
            }
        }
    }
    Ok(())
}

/// Conspicuity blend on the full frame, crop, then weighted-mask fusion on
/// the ROI; each attention step only when enabled.
pub fn attend_frame(frame: &AnnotatedFrame, a: &AttentionSection) -> Result<RgbImage> {
    let roi = if a.conspicuity {
        let c = default_conspicuity(&frame.image, a.stream_weights, a.bins)?;
        let merged = AnnotatedFrame {
            image: merge_with_raw(&frame.image, &c, a.alpha)?,
            ..frame.clone()
        };
        crop_roi(&merged)?.image
    } else {
        crop_roi(frame)?.image
    };
    if !a.mask {
        return Ok(roi);
    }
    let m = build_weighted_mask(roi.width(), roi.height(), &a.geometry, a.weights)?;
    fuse_mask(&roi, &m)
}

fn attend(samples: &mut [Sample], a: &AttentionSection) -> Result<()> {
    samples.par_iter_mut().try_for_each(|s| {
        s.image = attend_frame(&s.frame(), a)?;
        Ok(())
    })
}

/// The network named by the feature settings: loaded from file, or seeded
/// random weights.
pub fn feature_network(f: &FeatureSection) -> Result<(NetworkSpec, NetworkWeights)> {
    let spec = f.network_spec()?;
    if f.weights.as_os_str().is_empty() {
        return Ok((spec.clone(), build_network_for(&spec, f.seed)));
    }
    let weights = load_weights(&f.weights)?;
    if weights.spec() != spec {
        return Err(Error::Config(format!(
            "{}: weight file does not match features.width_divisor = {}",
            f.weights.display(),
            f.width_divisor
        )));
    }
    Ok((spec, weights))
}

fn feature_matrix(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    samples: &[Sample],
    f: &FeatureSection,
) -> Result<FeatureMatrix> {
    let images: Vec<RgbImage> = samples.iter().map(|s| s.image.clone()).collect();
    let rows = extract_features(spec, weights, &images, f.tap)?
        .into_iter()
        .map(|v| v.values)
        .collect();
    FeatureMatrix::from_rows(samples.iter().map(|s| s.id.clone()).collect(), rows)
}

fn labels_of(samples: &[Sample]) -> Vec<usize> {
    samples.iter().map(|s| s.label).collect()
}

fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len().max(1) as f64
}

struct Timer {
    timings: Vec<StageTiming>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    /// Runs one stage, tagging errors with its name.
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let out = f().map_err(|e| e.in_stage(name))?;
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: (now - self.start).as_secs_f64(),
        });
        self.start = now;
        log::info!("stage {name} done");
        Ok(out)
    }
}

/// Runs every stage and writes `pca.tlpc` (when PCA is on), `svm.tlsv`,
/// `report.txt`, `splits.txt` and `manifest.toml` into the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    cfg.check_paths().map_err(|e| e.in_stage("config"))?;
    with_worker_pool(|| run_stages(cfg))
}

fn run_stages(cfg: &PipelineConfig) -> Result<RunManifest> {
    let out = &cfg.output.dir;
    let mut t = Timer::new();

    let dir = t.stage("ingest", || load_dataset_dir(&cfg.data.root))?;
    let split = t.stage("split", || {
        let split = split_dataset_dir(dir, cfg.data.ratios(), cfg.data.seed)?;
        if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
            return Err(Error::InvalidInput(format!(
                "split left an empty part ({} train, {} validation, {} test)",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            )));
        }
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut text = String::new();
        for (part, frames) in [
            ("train", &split.train),
            ("validation", &split.validation),
            ("test", &split.test),
        ] {
            for f in frames.iter() {
                text.push_str(&format!("{} {part}\n", f.source_id));
            }
        }
        crate::binio::write_file(&out.join(SPLITS_FILE), text.as_bytes())?;
        Ok(split)
    })?;

    let mut counts = SampleCounts {
        train_frames: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
        ..SampleCounts::default()
    };
    let (mut train, mut validation, mut test) = t.stage("augment", || {
        let clean = samples_of(&split.train);
        let mut train = clean.clone();
        if cfg.night.enabled {
            let night = night_copies(&clean, &cfg.night)?;
            counts.night = night.len();
            train.extend(night);
        }
        if cfg.corruption.enabled {
            let corrupted = corrupted_copies(&clean, &cfg.corruption)?;
            counts.corrupted = corrupted.len();
            train.extend(corrupted);
        }
        check_training_hygiene(&train)?;
        counts.train_rows = train.len();
        Ok((train, samples_of(&split.validation), samples_of(&split.test)))
    })?;
    drop(split);

    t.stage("attention", || {
        attend(&mut train, &cfg.attention)?;
        attend(&mut validation, &cfg.attention)?;
        attend(&mut test, &cfg.attention)
    })?;

    let (weights_digest, x_train, x_val, x_test) = t.stage("features", || {
        let (spec, weights) = feature_network(&cfg.features)?;
        let digest = weights.digest();
        Ok((
            digest,
            feature_matrix(&spec, &weights, &train, &cfg.features)?,
            feature_matrix(&spec, &weights, &validation, &cfg.features)?,
            feature_matrix(&spec, &weights, &test, &cfg.features)?,
        ))
    })?;
    let feature_dim = x_train.cols();
    let y_train = labels_of(&train);
    let y_val = labels_of(&validation);
    let y_test = labels_of(&test);
    drop((train, validation, test));

    let (x_train, x_val, x_test) = t.stage("pca", || {
        if !cfg.pca.enabled {
            return Ok((x_train, x_val, x_test));
        }
        let fit_rows = if cfg.pca.fit_all_splits {
            let mut ids = x_train.ids().to_vec();
            let mut data = x_train.as_slice().to_vec();
            for m in [&x_val, &x_test] {
                ids.extend_from_slice(m.ids());
                data.extend_from_slice(m.as_slice());
            }
            FeatureMatrix::new(ids, x_train.cols(), data)?
        } else {
            x_train.clone()
        };
        let k = cfg.pca.components;
        let limit = (fit_rows.rows() - 1).min(fit_rows.cols());
        if k > limit {
            return Err(Error::Config(format!(
                "pca.components = {k} exceeds min(fitting rows − 1, feature dim) = {limit}"
            )));
        }
        let pca = PcaModel::fit(&fit_rows, k)?;
        pca.save(out.join(PCA_FILE))?;
        Ok((
            pca.transform_matrix(&x_train)?,
            pca.transform_matrix(&x_val)?,
            pca.transform_matrix(&x_test)?,
        ))
    })?;

    let k = BehaviorClass::COUNT;
    let (svm, candidates) = t.stage("svm", || {
        let grid = if cfg.svm.c_grid.is_empty() {
            vec![cfg.svm.c]
        } else {
            cfg.svm.c_grid.clone()
        };
        let mut best: Option<(SvmModel, f64)> = None;
        let mut candidates = Vec::with_capacity(grid.len());
        for c in grid {
            let solver = crate::svm::SvmConfig { c, ..cfg.svm.solver() };
            let (model, _) = SvmModel::fit(&x_train, &y_train, k, &solver)?;
            let acc = accuracy(&model.predict_matrix(&x_val)?, &y_val);
            log::info!("c = {c}: validation accuracy {acc:.4}");
            candidates.push(CandidateScore {
                c,
                validation_accuracy: acc,
            });
            if best.as_ref().map_or(true, |(_, b)| acc > *b) {
                best = Some((model, acc));
            }
        }
        let (model, _) = best.expect("grid is never empty");
        model.save(out.join(SVM_FILE))?;
        Ok((model, candidates))
    })?;

    let report = t.stage("eval", || {
        let preds = svm.predict_matrix(&x_test)?;
        let cm = confusion_matrix(&preds, &y_test, k)?;
        let report = overall_report_named(&cm, &default_class_names(k))?;
        crate::binio::write_file(&out.join(REPORT_FILE), report.to_text().as_bytes())?;
        Ok(report)
    })?;

    let mut files = vec![SVM_FILE, REPORT_FILE, SPLITS_FILE];
    if cfg.pca.enabled {
        files.insert(0, PCA_FILE);
    }
    let artifacts = files
        .into_iter()
        .map(|f| {
            Ok(Artifact {
                file: f.to_string(),
                sha256: file_digest(&out.join(f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        config: cfg.clone(),
        weights_digest,
        feature_dim,
        counts,
        selected_c: svm.c(),
        candidates,
        class_names: report.per_class.iter().map(|r| r.name.clone()).collect(),
        confusion: report.confusion.rows(),
        artifacts,
        timings: t.timings,
    };
    manifest.save(out).map_err(|e| e.in_stage("manifest"))?;
    Ok(manifest)
}

/// Scores a saved run on an external dataset without refitting anything.
/// Every frame in the directory is evaluated; split overrides are ignored.
pub fn evaluate_domain_shift(model_dir: &Path, dataset: &Path) -> Result<MetricsReport> {
    with_worker_pool(|| {
        let manifest = RunManifest::load(model_dir).map_err(|e| e.in_stage("load"))?;
        let cfg = &manifest.config;
        let svm = SvmModel::load(model_dir.join(SVM_FILE)).map_err(|e| e.in_stage("load"))?;
        if svm.classes() != BehaviorClass::COUNT || manifest.class_names.len() != svm.classes() {
            return Err(Error::InvalidInput(format!(
                "label set mismatch: model has {} classes, datasets have {}",
                svm.classes(),
                BehaviorClass::COUNT
            ))
            .in_stage("load"));
        }
        let pca = if cfg.pca.enabled {
            Some(PcaModel::load(model_dir.join(PCA_FILE)).map_err(|e| e.in_stage("load"))?)
        } else {
            None
        };
        let frames = load_dataset_dir(dataset).map_err(|e| e.in_stage("ingest"))?.frames;
        let mut samples = samples_of(&frames);
        attend(&mut samples, &cfg.attention).map_err(|e| e.in_stage("attention"))?;
        let x = (|| {
            let (spec, weights) = feature_network(&cfg.features)?;
            if weights.digest() != manifest.weights_digest {
                return Err(Error::InvalidInput(
                    "feature network differs from the one the model was trained on".into(),
                ));
            }
            feature_matrix(&spec, &weights, &samples, &cfg.features)
        })()
        .map_err(|e| e.in_stage("features"))?;
        let x = match &pca {
            Some(p) => p.transform_matrix(&x).map_err(|e| e.in_stage("pca"))?,
            None => x,
        };
        (|| {
            let preds = svm.predict_matrix(&x)?;
            let cm = confusion_matrix(&preds, &labels_of(&samples), svm.classes())?;
            overall_report_named(&cm, &manifest.class_names)
        })()
        .map_err(|e| e.in_stage("eval"))
    })
}

/// What an ablation switches off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    CorruptionOff,
    TapFc2,
    PcaOff,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 3] = [AblationAxis::CorruptionOff, AblationAxis::TapFc2, AblationAxis::PcaOff];

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::CorruptionOff => "corruption_off",
            AblationAxis::TapFc2 => "tap_fc2",
            AblationAxis::PcaOff => "pca_off",
        }
    }

    /// The ablated copy of `base`; fails when `base` already has the axis off.
    pub fn apply(self, base: &PipelineConfig) -> Result<PipelineConfig> {
        let mut cfg = base.clone();
        match self {
            AblationAxis::CorruptionOff if base.corruption.enabled => cfg.corruption.enabled = false,
            AblationAxis::TapFc2 if base.features.tap == crate::features::Tap::Fc1 => {
                cfg.features.tap = crate::features::Tap::Fc2
            }
            AblationAxis::PcaOff if base.pca.enabled => cfg.pca.enabled = false,
            _ => {
                return Err(Error::Config(format!(
                    "ablation `{self}` changes nothing for this config"
                )))
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown ablation axis `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub axis: AblationAxis,
    pub base: RunManifest,
    pub ablated: RunManifest,
    /// `base − ablated`.
    pub drop: RobustnessDrop,
}

impl AblationOutcome {
    pub fn to_text(&self) -> Result<String> {
        let mut s = format!("axis: {}\n", self.axis);
        for (tag, m) in [("base", &self.base), ("ablated", &self.ablated)] {
            let o = m.report()?.overall;
            s.push_str(&format!(
                "{tag}.accuracy: {:.6}\n{tag}.kappa: {:.6}\n",
                o.accuracy, o.kappa
            ));
        }
        s.push_str(&self.drop.to_text());
        Ok(s)
    }
}

/// Runs `base` into `<output>/base` and the ablated config into
/// `<output>/ablated`, sharing every seed.
pub fn ablate(base: &PipelineConfig, axis: AblationAxis) -> Result<AblationOutcome> {
    let mut ablated = axis.apply(base).map_err(|e| e.in_stage("config"))?;
    let mut base = base.clone();
    let root = base.output.dir.clone();
    base.output.dir = root.join("base");
    ablated.output.dir = root.join("ablated");
    let b = run_pipeline(&base)?;
    let a = run_pipeline(&ablated)?;
    let drop = robustness_drop(&b.report()?.overall, &a.report()?.overall);
    Ok(AblationOutcome {
        axis,
        base: b,
        ablated: a,
        drop,
    })
}
