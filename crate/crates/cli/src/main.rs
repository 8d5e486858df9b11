//! `polsar`: simulate scenes, compute distance tables, train and apply
//! region classifiers, and run repeated experiments.

mod commands;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "polsar", version, about = "Region-based PolSAR classification with stochastic distances")]
struct Cli {
    /// More logging (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate phantom scenes and write raster, segmentation, labels and manifest.
    Simulate(SimulateArgs),
    /// Pairwise distance matrix between class models.
    Distances(DistancesArgs),
    /// Train an SVM at a fixed (C, gamma) and save it as JSON.
    Train(TrainArgs),
    /// Classify every region of a scene.
    Classify(ClassifyArgs),
    /// Score every (C, gamma) cell and report the best.
    GridSearch(GridSearchArgs),
    /// Accuracy and kappa of a map against reference labels.
    Evaluate(EvaluateArgs),
    /// Classify repeated simulated scenes with every method and distance.
    #[command(alias = "benchmark")]
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone)]
pub struct SceneArgs {
    /// Covariance raster (PCOV).
    #[arg(long)]
    pub raster: PathBuf,
    /// Segmentation (PSEG).
    #[arg(long)]
    pub seg: PathBuf,
    /// Labels CSV (region_id,class_id,role).
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Args, Clone)]
pub struct DistanceArgs {
    /// bhattacharyya, kl, renyi, hellinger, chi-square (or B, K, R, H, C).
    #[arg(long, default_value = "hellinger")]
    pub kind: String,
    /// Renyi order in (0, 1).
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum StrategyArg {
    Oaa,
    Oao,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Msdc,
    Svm,
}

#[derive(Args, Clone)]
pub struct GridArgs {
    /// Penalties: comma list or start:stop:step.
    #[arg(long)]
    pub penalty_grid: Option<String>,
    /// Kernel gammas: comma list or start:stop:step.
    #[arg(long)]
    pub gamma_grid: Option<String>,
    /// Tune on the test regions and report accuracy on them too. Without
    /// this flag a seeded half of the test regions is held out for tuning.
    #[arg(long)]
    pub paper_protocol: bool,
    /// Seed for the held-out split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone)]
pub struct SceneSpecArgs {
    /// Perturbation strength.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Looks of the simulated pixels.
    #[arg(long)]
    pub looks: Option<u32>,
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Segments per block.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Training segments per block.
    #[arg(long)]
    pub trained_per_block: Option<usize>,
    /// 512-pixel blocks, 44 segments, 11 trained.
    #[arg(long)]
    pub full_scale: bool,
    /// Class manifest JSON with six classes (defaults to the bundled ones).
    #[arg(long)]
    pub classes: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub images: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub spec: SceneSpecArgs,
}

#[derive(Args)]
pub struct DistancesArgs {
    #[command(flatten)]
    pub distance: DistanceArgs,
    /// Looks for manifest classes (scene inputs use the raster's looks).
    #[arg(long)]
    pub looks: Option<f64>,
    /// Class manifest JSON (defaults to the bundled classes).
    #[arg(long, conflicts_with_all = ["raster", "seg", "labels"])]
    pub classes: Option<PathBuf>,
    /// Estimate class models from a scene instead.
    #[arg(long, requires_all = ["seg", "labels"])]
    pub raster: Option<PathBuf>,
    #[arg(long)]
    pub seg: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Fit the looks of the bundled classes to the published Hellinger table.
    #[arg(long, conflicts_with_all = ["looks", "classes", "raster"])]
    pub calibrate: bool,
    /// Candidate looks for --calibrate.
    #[arg(long, default_value = "3,9,16")]
    pub candidates: String,
    /// CSV output (stdout if neither --out nor --json is given).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub distance: DistanceArgs,
    #[arg(long, value_enum, default_value = "oao")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 10.0)]
    pub penalty: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value = "msdc")]
    pub method: MethodArg,
    #[command(flatten)]
    pub distance: DistanceArgs,
    #[arg(long, value_enum, default_value = "oao")]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Apply a saved model instead of training.
    #[arg(long, conflicts_with_all = ["penalty_grid", "gamma_grid"])]
    pub model: Option<PathBuf>,
    /// Map CSV (region_id,class_id,status).
    #[arg(long)]
    pub out: PathBuf,
    /// Indexed PNG render of the map.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Report JSON (stdout otherwise).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridSearchArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub distance: DistanceArgs,
    #[arg(long, value_enum, default_value = "oao")]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Per-cell CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Best model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Report JSON (stdout otherwise).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Map CSV.
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Segmentation, for a pixel-level confusion matrix.
    #[arg(long)]
    pub seg: Option<PathBuf>,
    /// Keep one pixel in this many along each axis.
    #[arg(long, default_value_t = 3)]
    pub pixel_step: usize,
    /// Report JSON (stdout otherwise).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 10)]
    pub images: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub spec: SceneSpecArgs,
    /// Comma list of msdc, svm-oaa, svm-oao.
    #[arg(long, default_value = "msdc,svm-oaa,svm-oao")]
    pub methods: String,
    /// Comma list of distances.
    #[arg(long, default_value = "B,K,R,H")]
    pub kinds: String,
    /// Renyi order for R.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma list of six-class, three-class.
    #[arg(long, default_value = "six-class,three-class")]
    pub scenarios: String,
    #[arg(long)]
    pub penalty_grid: Option<String>,
    #[arg(long)]
    pub gamma_grid: Option<String>,
    /// Tune on the test regions (held-out half otherwise).
    #[arg(long)]
    pub paper_protocol: bool,
    /// Paired t tests across images.
    #[arg(long)]
    pub paired: bool,
    /// Writes rows.csv and report.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("POLSAR_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("POLSAR_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("POLSAR_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = init_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Distances(a) => commands::distances(a),
        Command::Train(a) => commands::train(a),
        Command::Classify(a) => commands::classify(a),
        Command::GridSearch(a) => commands::grid_search(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Experiment(a) => commands::experiment(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
