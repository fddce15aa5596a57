//! Frames, YOLO-format annotations, ROI cropping and dataset splits.
//!
//! A dataset directory holds `images/` and `labels/` trees whose files are
//! paired by stem. Every label file carries exactly one line
//! `class cx cy w h` with coordinates normalised to the image size.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corruption::{CorruptionKind, Severity};
use crate::error::{Error, Result};

/// The four taillight-signal behaviours, in their fixed id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BehaviorClass {
    Braking = 0,
    Running = 1,
    LeftTurn = 2,
    RightTurn = 3,
}

impl BehaviorClass {
    pub const ALL: [BehaviorClass; 4] = [
        BehaviorClass::Braking,
        BehaviorClass::Running,
        BehaviorClass::LeftTurn,
        BehaviorClass::RightTurn,
    ];
    pub const COUNT: usize = 4;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::Braking => "braking",
            BehaviorClass::Running => "running",
            BehaviorClass::LeftTurn => "left_turn",
            BehaviorClass::RightTurn => "right_turn",
        }
    }
}

impl fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(id) = s.parse::<usize>() {
            return Self::from_id(id)
                .ok_or_else(|| Error::InvalidInput(format!("class id {id} out of range")));
        }
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown class `{s}`")))
    }
}

/// YOLO box: centre and size normalised to the image dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Integer pixel rectangle `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

impl BoundingBox {
    pub const FULL: BoundingBox = BoundingBox {
        cx: 0.5,
        cy: 0.5,
        w: 1.0,
        h: 1.0,
    };

    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let in_unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !(in_unit(cx) && in_unit(cy) && in_unit(w) && in_unit(h)) {
            return Err(Error::InvalidInput(format!(
                "coordinate outside [0,1] in ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidInput("box width and height must be positive".into()));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Denormalises to pixels, clamping the box to the raster.
    ///
    /// Edges are rounded half away from zero, so `(0.5, 0.5, 0.2, 0.1)` on a
    /// 100×100 image covers columns 40..60 and rows 45..55.
    pub fn to_pixels(&self, image_w: u32, image_h: u32) -> PixelRect {
        let (iw, ih) = (image_w as f64, image_h as f64);
        let edge = |v: f64, max: f64| (v * max).round().clamp(0.0, max) as u32;
        let x0 = edge(self.cx - self.w / 2.0, iw);
        let x1 = edge(self.cx + self.w / 2.0, iw);
        let y0 = edge(self.cy - self.h / 2.0, ih);
        let y1 = edge(self.cy + self.h / 2.0, ih);
        PixelRect {
            x: x0,
            y: y0,
            width: x1.saturating_sub(x0),
            height: y1.saturating_sub(y0),
        }
    }
}

/// One parsed annotation line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub class: BehaviorClass,
    pub bbox: BoundingBox,
    pub pixels: PixelRect,
}

/// Parses a single `class cx cy w h` line against an image of the given size.
pub fn parse_annotation(line: &str, image_w: u32, image_h: u32) -> Result<Annotation> {
    parse_annotation_at(line, 1, image_w, image_h)
}

fn parse_annotation_at(line: &str, line_no: usize, image_w: u32, image_h: u32) -> Result<Annotation> {
    let fail = |reason: String| Error::Annotation {
        line: line_no,
        reason,
    };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(fail(format!("expected 5 fields, found {}", tokens.len())));
    }
    let class_id: i64 = tokens[0]
        .parse()
        .map_err(|_| fail(format!("non-numeric class id `{}`", tokens[0])))?;
    let class = usize::try_from(class_id)
        .ok()
        .and_then(BehaviorClass::from_id)
        .ok_or_else(|| fail(format!("class id out of range: {class_id}")))?;
    let mut coords = [0.0; 4];
    for (slot, tok) in coords.iter_mut().zip(&tokens[1..]) {
        *slot = tok
            .parse::<f64>()
            .map_err(|_| fail(format!("non-numeric field `{tok}`")))?;
    }
    let [cx, cy, w, h] = coords;
    let bbox = BoundingBox::new(cx, cy, w, h).map_err(|e| fail(e.to_string()))?;
    Ok(Annotation {
        class,
        bbox,
        pixels: bbox.to_pixels(image_w, image_h),
    })
}

/// Inverse of [`parse_annotation`]; floats use the shortest exact form.
pub fn format_annotation(class: BehaviorClass, bbox: &BoundingBox) -> String {
    format!("{} {} {} {} {}", class.id(), bbox.cx, bbox.cy, bbox.w, bbox.h)
}

/// Parses a label file holding exactly one box. Blank lines are ignored.
pub fn parse_label_file(text: &str, image_w: u32, image_h: u32) -> Result<Annotation> {
    let mut found = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if found.is_some() {
            return Err(Error::Annotation {
                line: i + 1,
                reason: "multiple boxes in one frame are not supported".into(),
            });
        }
        found = Some(parse_annotation_at(line, i + 1, image_w, image_h)?);
    }
    found.ok_or(Error::Annotation {
        line: 0,
        reason: "empty label file".into(),
    })
}

/// One image with its single taillight box and behaviour label.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedFrame {
    pub image: RgbImage,
    pub bbox: BoundingBox,
    pub label: BehaviorClass,
    pub source_id: String,
}

/// Where an ROI raster came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Clean,
    NightSynth,
    Corrupted {
        kind: CorruptionKind,
        severity: Severity,
        seed: u64,
    },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Clean => f.write_str("clean"),
            Provenance::NightSynth => f.write_str("night"),
            Provenance::Corrupted {
                kind,
                severity,
                seed,
            } => write!(f, "{kind}__{severity}__{seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiImage {
    pub image: RgbImage,
    pub provenance: Provenance,
}

/// Crops the frame to its clamped box. Fails when the box is degenerate.
pub fn crop_roi(frame: &AnnotatedFrame) -> Result<RoiImage> {
    let rect = frame.bbox.to_pixels(frame.image.width(), frame.image.height());
    if rect.is_empty() {
        return Err(Error::DegenerateBox(format!(
            "{}: box covers {}x{} pixels after clamping",
            frame.source_id, rect.width, rect.height
        )));
    }
    let image = image::imageops::crop_imm(&frame.image, rect.x, rect.y, rect.width, rect.height)
        .to_image();
    Ok(RoiImage {
        image,
        provenance: Provenance::Clean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(SplitPart::Train),
            "validation" | "val" => Ok(SplitPart::Validation),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

/// Train/validation/test partition of a frame set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<AnnotatedFrame>,
    pub validation: Vec<AnnotatedFrame>,
    pub test: Vec<AnnotatedFrame>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.60,
            validation: 0.15,
            test: 0.25,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("split ratios must be finite and nonnegative".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Stratified, seeded split.
///
/// Overall part sizes are `round(ratio · n)` (test takes the remainder); each
/// part is apportioned across classes by largest remainder, so every class
/// stays within one sample of its proportional share. Within a part, frames
/// keep their input order.
pub fn split_dataset(
    frames: Vec<AnnotatedFrame>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    ratios.validate()?;
    let assignment = stratified_assignment(
        &frames.iter().map(|f| f.label.id()).collect::<Vec<_>>(),
        ratios,
        seed,
    );
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (frame, part) in frames.into_iter().zip(assignment) {
        match part {
            SplitPart::Train => split.train.push(frame),
            SplitPart::Validation => split.validation.push(frame),
            SplitPart::Test => split.test.push(frame),
        }
    }
    Ok(split)
}

/// Assigns each input index (by its class id) to a split part.
pub(crate) fn stratified_assignment(labels: &[usize], ratios: SplitRatios, seed: u64) -> Vec<SplitPart> {
    let n = labels.len();
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();

    let n_train = ((ratios.train * n as f64).round() as usize).min(n);
    let n_val = ((ratios.validation * n as f64).round() as usize).min(n - n_train);
    let train = apportion(&counts, ratios.train, n_train, &vec![0; n_classes]);
    let val = apportion(&counts, ratios.validation, n_val, &train);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![SplitPart::Test; n];
    for (c, idx) in members.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        for &i in &idx[..train[c]] {
            out[i] = SplitPart::Train;
        }
        for &i in &idx[train[c]..train[c] + val[c]] {
            out[i] = SplitPart::Validation;
        }
    }
    out
}

/// Largest-remainder apportionment of `total` samples across classes, never
/// exceeding what `taken` leaves available in a class.
fn apportion(counts: &[usize], ratio: f64, total: usize, taken: &[usize]) -> Vec<usize> {
    let ideal: Vec<f64> = counts.iter().map(|&c| c as f64 * ratio).collect();
    let mut alloc: Vec<usize> = ideal
        .iter()
        .zip(counts.iter().zip(taken))
        .map(|(&v, (&c, &t))| (v.floor() as usize).min(c - t))
        .collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(alloc.iter().sum());
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if alloc[c] + taken[c] < counts[c] {
                alloc[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Loads an image as 8-bit RGB; grayscale is promoted by channel replication.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    Ok(img.to_rgb8())
}

/// Saves an RGB image; the encoder is chosen from the extension.
pub fn save_rgb(image: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    image.save(path)?;
    Ok(())
}

/// Lists image files of a directory sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// A dataset directory loaded into memory.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub frames: Vec<AnnotatedFrame>,
    /// Stem → split overrides read from `splits.txt`.
    pub overrides: BTreeMap<String, SplitPart>,
}

/// Name of the optional override manifest at the dataset root.
pub const SPLIT_MANIFEST: &str = "splits.txt";

/// Reads `root/images/*` with the matching `root/labels/<stem>.txt`.
pub fn load_dataset_dir(root: &Path) -> Result<DatasetDir> {
    let images = list_images(&root.join("images"))?;
    if images.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no images found",
            root.join("images").display()
        )));
    }
    let mut frames = Vec::with_capacity(images.len());
    for path in images {
        let image = load_rgb(&path)?;
        let stem = stem(&path);
        let label_path = root.join("labels").join(format!("{stem}.txt"));
        let text = fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
        let ann = parse_label_file(&text, image.width(), image.height())
            .map_err(|e| Error::format(&label_path, e.to_string()))?;
        frames.push(AnnotatedFrame {
            image,
            bbox: ann.bbox,
            label: ann.class,
            source_id: stem,
        });
    }
    let manifest = root.join(SPLIT_MANIFEST);
    let overrides = if manifest.exists() {
        parse_split_manifest(
            &fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?,
        )
        .map_err(|e| Error::format(&manifest, e.to_string()))?
    } else {
        BTreeMap::new()
    };
    Ok(DatasetDir { frames, overrides })
}

/// Parses `stem split` lines; `#` starts a comment.
pub fn parse_split_manifest(text: &str) -> Result<BTreeMap<String, SplitPart>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(stem), Some(part), None) => {
                out.insert(stem.to_string(), part.parse()?);
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected `stem split`",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Splits a loaded directory, honouring manifest overrides first and
/// stratifying the rest.
pub fn split_dataset_dir(dir: DatasetDir, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    let (pinned, free): (Vec<_>, Vec<_>) = dir
        .frames
        .into_iter()
        .partition(|f| dir.overrides.contains_key(&f.source_id));
    let mut split = if free.is_empty() {
        DatasetSplit {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            seed,
        }
    } else {
        split_dataset(free, ratios, seed)?
    };
    for frame in pinned {
        match dir.overrides[&frame.source_id] {
            SplitPart::Train => split.train.push(frame),
            SplitPart::Validation => split.validation.push(frame),
            SplitPart::Test => split.test.push(frame),
        }
    }
    Ok(split)
}

/// Writes frames in the `images/` + `labels/` layout as PNG.
pub fn write_dataset_dir(root: &Path, frames: &[AnnotatedFrame]) -> Result<()> {
    for frame in frames {
        save_rgb(
            &frame.image,
            &root.join("images").join(format!("{}.png", frame.source_id)),
        )?;
        let label = root.join("labels").join(format!("{}.txt", frame.source_id));
        crate::binio::write_file(
            &label,
            format!("{}\n", format_annotation(frame.label, &frame.bbox)).as_bytes(),
        )?;
    }
    Ok(())
}
