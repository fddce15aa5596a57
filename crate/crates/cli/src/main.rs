//! `taillight` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "taillight", version, about = "Taillight-signal behaviour classification toolkit")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset directory and write cropped ROIs per split.
    Ingest(IngestArgs),
    /// Night-grade every image using its box as the foreground.
    Day2night(Day2NightArgs),
    /// Write corrupted copies of every image.
    Corrupt(CorruptArgs),
    /// Blend each image with its conspicuity map and save the map beside it.
    Conspicuity(ConspicuityArgs),
    /// Multiply each ROI by the tiered weight mask.
    Maskfuse(MaskfuseArgs),
    /// Run the feature network over images and write a feature matrix.
    Extract(ExtractArgs),
    /// Fit PCA to a feature matrix.
    FitPca(FitPcaArgs),
    /// Fit the multiclass SVM.
    FitSvm(FitSvmArgs),
    /// Predict a label for every feature row.
    Predict(PredictArgs),
    /// Score predictions against labels.
    Eval(EvalArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
    /// Run a base config and one ablated variant and report the drop.
    Ablate(AblateArgs),
    /// Generate the synthetic toy-ROI dataset.
    Toygen(ToygenArgs),
    /// Score a trained run on an external dataset without refitting.
    ShiftEval(ShiftEvalArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset directory with images/ and labels/.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.60)]
    train: f64,
    #[arg(long, default_value_t = 0.15)]
    validation: f64,
    #[arg(long, default_value_t = 0.25)]
    test: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Day2NightArgs {
    #[arg(long)]
    input: PathBuf,
    /// Directory of `<stem>.txt` annotation files.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// TOML file overriding individual grading parameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated kind names, `train`, `test` or `all`.
    #[arg(long, default_value = "train")]
    kinds: String,
    /// mild, moderate, severe or all.
    #[arg(long, default_value = "all")]
    severity: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConspicuityArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Luminance and red-green stream weights.
    #[arg(long, default_value = "1,1")]
    streams: String,
    #[arg(long, default_value_t = taillight::attention::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Args)]
struct MaskfuseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// TOML file of tier geometry fractions.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// `ω,ω′,w_high`.
    #[arg(long, default_value = "0.12,0.14,1.0")]
    weights: String,
    /// Also write each mask as a grayscale PNG.
    #[arg(long)]
    save_mask: bool,
}

#[derive(Args)]
struct ExtractArgs {
    /// A dataset directory (images/ + labels/) or a directory of ROI images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "fc1")]
    tap: String,
    /// A TLWT weight file or `random:SEED`.
    #[arg(long, default_value = "random:0")]
    weights: String,
    /// Divide every convolution width by this (1, 2, 4, 8, 16, 32 or 64).
    #[arg(long, default_value_t = 1)]
    width_divisor: usize,
    #[arg(long)]
    out: PathBuf,
    /// Labels file for dataset inputs; defaults to `<out>.labels.txt`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Also write the weights used as a TLWT file.
    #[arg(long)]
    save_weights: Option<PathBuf>,
}

#[derive(Args)]
struct FitPcaArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = taillight::pca::DEFAULT_COMPONENTS)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the projected matrix.
    #[arg(long)]
    transformed: Option<PathBuf>,
}

#[derive(Args)]
struct FitSvmArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Project the features with this PCA model first.
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = taillight::svm::DEFAULT_MARGIN_SCALE)]
    margin_scale: f64,
    /// Fit on raw features instead of z-scored ones.
    #[arg(long)]
    no_standardize: bool,
    /// Append a constant bias feature.
    #[arg(long)]
    bias: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelInputs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long)]
    svm: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelInputs,
    /// Write `id label` lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    labels: PathBuf,
    /// An `id label` predictions file, instead of running a model.
    #[arg(long, conflicts_with_all = ["features", "pca", "svm"])]
    predictions: Option<PathBuf>,
    #[arg(long, requires = "svm")]
    features: Option<PathBuf>,
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long, requires = "features")]
    svm: Option<PathBuf>,
    /// Comma-separated output instead of the text report.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    /// corruption_off, tap_fc2 or pca_off.
    #[arg(long)]
    axis: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ToygenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 48)]
    height: u32,
}

#[derive(Args)]
struct ShiftEvalArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
