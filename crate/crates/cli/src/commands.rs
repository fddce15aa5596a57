use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use taillight::attention::{
    build_weighted_mask, default_conspicuity, fuse_mask, merge_with_raw, MaskGeometry, TierWeights,
};
use taillight::corruption::{apply_corruption, parse_kind_list, parse_severity_list, CorruptionSpec};
use taillight::dataset::{
    crop_roi, list_images, load_dataset_dir, load_rgb, parse_label_file, save_rgb,
    split_dataset_dir, write_dataset_dir, BehaviorClass, SplitRatios,
};
use taillight::features::{
    build_network_for, extract_features, load_weights, save_weights, NetworkSpec, Tap,
};
use taillight::metrics::{confusion_matrix, overall_report};
use taillight::night::{day_to_night, mask_from_box, NightParamPair};
use taillight::pca::{FeatureMatrix, PcaModel};
use taillight::pipeline::{
    ablate, align_labels, evaluate_domain_shift, format_labels, generate_toy_dataset, read_labels,
    run_pipeline, with_worker_pool, write_labels, AblationAxis, PipelineConfig, ToyRoiSpec,
};
use taillight::svm::{SvmConfig, SvmModel};
use taillight::{Error, Result};

use super::*;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => run(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::ShiftEval(a) => shift_eval(a),
        other => with_worker_pool(|| match other {
            Command::Ingest(a) => ingest(a),
            Command::Day2night(a) => day2night(a),
            Command::Corrupt(a) => corrupt(a),
            Command::Conspicuity(a) => conspicuity(a),
            Command::Maskfuse(a) => maskfuse(a),
            Command::Extract(a) => extract(a),
            Command::FitPca(a) => fit_pca(a),
            Command::FitSvm(a) => fit_svm(a),
            Command::Predict(a) => predict(a),
            Command::Eval(a) => eval(a),
            Command::Toygen(a) => toygen(a),
            Command::Run(_) | Command::Ablate(_) | Command::ShiftEval(_) => unreachable!(),
        }),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Every image in `dir`, sorted by file name.
fn images_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let images = list_images(dir)?;
    if images.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no images found", dir.display())));
    }
    Ok(images)
}

/// Loads every image of `dir` and maps it in parallel, writing whatever the
/// closure returns under `output`.
fn map_images(
    input: &Path,
    output: &Path,
    f: impl Fn(&str, &image::RgbImage) -> Result<Vec<(String, image::DynamicImage)>> + Sync,
) -> Result<usize> {
    let paths = images_in(input)?;
    fs::create_dir_all(output).map_err(|e| Error::InvalidInput(format!("{}: {e}", output.display())))?;
    let written: Vec<usize> = paths
        .par_iter()
        .map(|p| {
            let img = load_rgb(p)?;
            let outs = f(&stem(p), &img)?;
            for (name, out) in &outs {
                out.save(output.join(name))?;
            }
            Ok(outs.len())
        })
        .collect::<Result<_>>()?;
    Ok(written.iter().sum())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let ratios = SplitRatios {
        train: a.train,
        validation: a.validation,
        test: a.test,
    };
    ratios.validate()?;
    let split = split_dataset_dir(load_dataset_dir(&a.dataset)?, ratios, a.seed)?;
    for (part, frames) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        let dir = a.output.join(part);
        let rows = frames
            .par_iter()
            .map(|f| {
                save_rgb(&crop_roi(f)?.image, &dir.join(format!("{}.png", f.source_id)))?;
                Ok((f.source_id.clone(), f.label.id()))
            })
            .collect::<Result<Vec<_>>>()?;
        write_labels(&dir.join("labels.txt"), &rows)?;
        println!("{part}: {}", frames.len());
    }
    Ok(())
}

fn day2night(a: Day2NightArgs) -> Result<()> {
    let params = match &a.params {
        Some(p) => NightParamPair::from_file(p)?,
        None => NightParamPair::default(),
    };
    let n = map_images(&a.input, &a.output, |stem, img| {
        let label = a.labels.join(format!("{stem}.txt"));
        let text = fs::read_to_string(&label)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", label.display())))?;
        let ann = parse_label_file(&text, img.width(), img.height())?;
        let mask = mask_from_box(&ann.bbox, img.width(), img.height());
        Ok(vec![(format!("{stem}.png"), day_to_night(img, &mask, &params)?.into())])
    })?;
    println!("wrote {n} images");
    Ok(())
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    let kinds = parse_kind_list(&a.kinds)?;
    let severities = parse_severity_list(&a.severity)?;
    let n = map_images(&a.input, &a.output, |stem, img| {
        let mut outs = Vec::new();
        for &kind in &kinds {
            for &severity in &severities {
                let spec = CorruptionSpec::new(kind, severity, a.seed);
                outs.push((spec.file_name(stem), apply_corruption(img, &spec)?.image.into()));
            }
        }
        Ok(outs)
    })?;
    println!("wrote {n} images");
    Ok(())
}

fn parse_pair(s: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad weight pair `{s}`")))?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err(Error::Config(format!("expected two weights, got `{s}`"))),
    }
}

fn conspicuity(a: ConspicuityArgs) -> Result<()> {
    let streams = parse_pair(&a.streams)?;
    let n = map_images(&a.input, &a.output, |stem, img| {
        let c = default_conspicuity(img, streams, a.bins)?;
        Ok(vec![
            (format!("{stem}.png"), merge_with_raw(img, &c, a.alpha)?.into()),
            (format!("{stem}__conspicuity.png"), c.raster().to_gray_image().into()),
        ])
    })?;
    println!("wrote {n} images");
    Ok(())
}

fn maskfuse(a: MaskfuseArgs) -> Result<()> {
    let geometry = match &a.geometry {
        Some(p) => MaskGeometry::from_file(p)?,
        None => MaskGeometry::default(),
    };
    let weights = TierWeights::parse_triplet(&a.weights)?;
    let n = map_images(&a.input, &a.output, |stem, img| {
        let mask = build_weighted_mask(img.width(), img.height(), &geometry, weights)?;
        let mut outs = vec![(format!("{stem}.png"), fuse_mask(img, &mask)?.into())];
        if a.save_mask {
            outs.push((format!("{stem}__mask.png"), mask.to_gray_image().into()));
        }
        Ok(outs)
    })?;
    println!("wrote {n} images");
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let tap: Tap = a.tap.parse()?;
    let (spec, weights) = match a.weights.strip_prefix("random:") {
        Some(seed) => {
            let seed = seed
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed in `{}`", a.weights)))?;
            let spec = if a.width_divisor == 1 {
                NetworkSpec::vgg16()
            } else {
                NetworkSpec::vgg16_narrow(a.width_divisor).map_err(|e| Error::Config(e.to_string()))?
            };
            let w = build_network_for(&spec, seed);
            (spec, w)
        }
        None => {
            let w = load_weights(&a.weights)?;
            (w.spec(), w)
        }
    };
    if let Some(p) = &a.save_weights {
        save_weights(p, &weights)?;
    }
    let dataset = a.input.join("images").is_dir() && a.input.join("labels").is_dir();
    let (ids, images, labels) = if dataset {
        let frames = load_dataset_dir(&a.input)?.frames;
        let rois = frames.par_iter().map(|f| Ok(crop_roi(f)?.image)).collect::<Result<Vec<_>>>()?;
        let labels: Vec<(String, usize)> =
            frames.iter().map(|f| (f.source_id.clone(), f.label.id())).collect();
        (frames.into_iter().map(|f| f.source_id).collect(), rois, Some(labels))
    } else {
        let paths = images_in(&a.input)?;
        let images = paths.par_iter().map(|p| load_rgb(p)).collect::<Result<Vec<_>>>()?;
        (paths.iter().map(|p| stem(p)).collect::<Vec<_>>(), images, None)
    };
    let rows = extract_features(&spec, &weights, &images, tap)?
        .into_iter()
        .map(|v| v.values)
        .collect();
    let m = FeatureMatrix::from_rows(ids, rows)?;
    m.save(&a.out)?;
    if let Some(labels) = labels {
        let path = a.labels_out.clone().unwrap_or_else(|| {
            let mut s = a.out.clone().into_os_string();
            s.push(".labels.txt");
            PathBuf::from(s)
        });
        write_labels(&path, &labels)?;
    }
    println!("{} rows x {} features ({tap}, weights {})", m.rows(), m.cols(), weights.provenance);
    Ok(())
}

fn fit_pca(a: FitPcaArgs) -> Result<()> {
    let x = FeatureMatrix::load(&a.features)?;
    let pca = PcaModel::fit(&x, a.k)?;
    pca.save(&a.out)?;
    if let Some(p) = &a.transformed {
        pca.transform_matrix(&x)?.save(p)?;
    }
    let kept: f64 = pca.explained_variance_ratio().iter().sum();
    println!("{} -> {} dims, explained variance {kept:.6}", pca.input_dim(), pca.output_dim());
    Ok(())
}

fn project(features: &Path, pca: Option<&Path>) -> Result<FeatureMatrix> {
    let x = FeatureMatrix::load(features)?;
    match pca {
        Some(p) => PcaModel::load(p)?.transform_matrix(&x),
        None => Ok(x),
    }
}

fn class_count(labels: &[usize]) -> usize {
    labels.iter().map(|l| l + 1).max().unwrap_or(0).max(BehaviorClass::COUNT)
}

fn fit_svm(a: FitSvmArgs) -> Result<()> {
    let x = project(&a.features, a.pca.as_deref())?;
    let y = align_labels(x.ids(), &read_labels(&a.labels)?)?;
    let cfg = SvmConfig {
        c: a.c,
        epochs: a.epochs,
        seed: a.seed,
        margin_scale: a.margin_scale,
        standardize: !a.no_standardize,
        append_bias: a.bias,
    };
    cfg.validate()?;
    let (model, trace) = SvmModel::fit(&x, &y, class_count(&y), &cfg)?;
    model.save(&a.out)?;
    let preds = model.predict_matrix(&x)?;
    let hits = preds.iter().zip(&y).filter(|(p, l)| p == l).count();
    println!(
        "objective {:.6} (initial {:.6}), training accuracy {:.6}",
        trace.epoch_objectives.last().copied().unwrap_or(trace.initial),
        trace.initial,
        hits as f64 / y.len() as f64
    );
    Ok(())
}

fn predictions(m: &ModelInputs) -> Result<(FeatureMatrix, Vec<usize>, usize)> {
    let x = project(&m.features, m.pca.as_deref())?;
    let svm = SvmModel::load(&m.svm)?;
    let preds = svm.predict_matrix(&x)?;
    Ok((x, preds, svm.classes()))
}

fn predict(a: PredictArgs) -> Result<()> {
    let (x, preds, _) = predictions(&a.model)?;
    let rows: Vec<(String, usize)> = x.ids().iter().cloned().zip(preds).collect();
    match &a.out {
        Some(p) => write_labels(p, &rows),
        None => {
            print!("{}", format_labels(&rows));
            Ok(())
        }
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let truth = read_labels(&a.labels)?;
    let (preds, labels, k) = match (&a.predictions, &a.features, &a.svm) {
        (Some(p), _, _) => {
            let predicted = read_labels(p)?;
            let ids: Vec<String> = truth.iter().map(|(id, _)| id.clone()).collect();
            let preds = align_labels(&ids, &predicted)?;
            let labels: Vec<usize> = truth.iter().map(|(_, l)| *l).collect();
            let k = class_count(&labels).max(class_count(&preds));
            (preds, labels, k)
        }
        (None, Some(features), Some(svm)) => {
            let m = ModelInputs {
                features: features.clone(),
                pca: a.pca.clone(),
                svm: svm.clone(),
            };
            let (x, preds, k) = predictions(&m)?;
            let labels = align_labels(x.ids(), &truth)?;
            if let Some(l) = labels.iter().find(|&&l| l >= k) {
                return Err(Error::InvalidInput(format!("label {l} outside the model's {k} classes")));
            }
            (preds, labels, k)
        }
        _ => return Err(Error::Config("eval needs --predictions or --features with --svm".into())),
    };
    let report = overall_report(&confusion_matrix(&preds, &labels, k)?)?;
    if a.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn load_config(path: Option<&Path>, output: Option<PathBuf>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(o) = output {
        cfg.output.dir = o;
    }
    Ok(cfg)
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), a.output)?;
    if a.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let manifest = run_pipeline(&cfg)?;
    print!("{}", manifest.report()?.to_text());
    println!("selected_c: {}", manifest.selected_c);
    println!("output: {}", cfg.output.dir.display());
    Ok(())
}

fn ablate_cmd(a: AblateArgs) -> Result<()> {
    let cfg = load_config(Some(&a.config), a.output)?;
    let axis: AblationAxis = a.axis.parse()?;
    print!("{}", ablate(&cfg, axis)?.to_text()?);
    Ok(())
}

fn toygen(a: ToygenArgs) -> Result<()> {
    let spec = ToyRoiSpec {
        width: a.width,
        height: a.height,
        jitter: a.jitter,
        ..ToyRoiSpec::default()
    };
    let frames = generate_toy_dataset(&spec, a.per_class, a.seed)?;
    write_dataset_dir(&a.out, &frames)?;
    println!("wrote {} frames", frames.len());
    Ok(())
}

fn shift_eval(a: ShiftEvalArgs) -> Result<()> {
    let report = evaluate_domain_shift(&a.model, &a.dataset)?;
    if a.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}
