use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::GrayImage;

use did::did::{XLandmarkSpec, YLandmarkSpec};
use did::experiment::{self, ExperimentRow, RotationSweep, WarpSweep};
use did::signal::{load_image, load_image_resized, save_image, MaskKind};
use did::warp::{apply_warp, random_warp_field};
use did::{DidConfig, DidError, KernelSpec, SampledSignal};

#[derive(Parser)]
#[command(
    name = "did",
    version,
    about = "Diffeomorphism-invariant dissimilarity between images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute DID(f, g) with f as the reference image.
    Compute(ComputeArgs),
    /// Apply a random smooth warp to an image.
    Warp(WarpArgs),
    /// Run one of the invariance experiments and emit CSV.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// DID and RMSE between an image and random warps of it.
    Warping(WarpingArgs),
    /// DID and RMSE between a patch and rotations of it, plus random patch pairs.
    Rotation(RotationArgs),
    /// DID of warped images across regularization values.
    Regularization(RegularizationArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    Blackman,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum LandmarksXArg {
    Grid,
    Random,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum LandmarksYArg {
    Cube,
    Random,
    Observed,
    Full,
}

#[derive(Args, Clone)]
struct DidArgs {
    /// Regularization; a positive number or `auto` for N^(-1/4).
    #[arg(long)]
    lambda: Option<String>,
    /// Number of input-domain landmarks.
    #[arg(long, default_value_t = 100)]
    mx: usize,
    /// Number of output-domain landmarks (a perfect cube for `cube`).
    #[arg(long, default_value_t = 4096)]
    my: usize,
    /// Gaussian bandwidth on pixel coordinates.
    #[arg(long, default_value_t = 1.0 / 6.0)]
    sigma_x: f64,
    /// Laplace decay rate on colors.
    #[arg(long, default_value_t = 5.0)]
    a_y: f64,
    #[arg(long, value_enum, default_value_t = MaskArg::Blackman)]
    mask: MaskArg,
    #[arg(long, value_enum, default_value_t = LandmarksXArg::Grid)]
    landmarks_x: LandmarksXArg,
    #[arg(long, value_enum, default_value_t = LandmarksYArg::Cube)]
    landmarks_y: LandmarksYArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normalize colors with ImageNet channel statistics.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    #[arg(long, default_value_t = 1e-10)]
    power_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    power_max_iter: usize,
}

impl DidArgs {
    fn config(&self, default_lambda: f64) -> Result<DidConfig, DidError> {
        let lambda = match self.lambda.as_deref() {
            None => Some(default_lambda),
            Some("auto") => None,
            Some(s) => Some(s.parse::<f64>().map_err(|_| {
                DidError::InvalidArgument(format!("--lambda expects a number or `auto`, got {s}"))
            })?),
        };
        let config = DidConfig {
            lambda,
            kernel_x: KernelSpec::gaussian(self.sigma_x)?,
            kernel_y: KernelSpec::laplace(self.a_y)?,
            landmarks_x: match self.landmarks_x {
                LandmarksXArg::Grid => XLandmarkSpec::Grid(self.mx),
                LandmarksXArg::Random => XLandmarkSpec::Random(self.mx),
                LandmarksXArg::Full => XLandmarkSpec::Full,
            },
            landmarks_y: match self.landmarks_y {
                LandmarksYArg::Cube => YLandmarkSpec::Cube(self.my),
                LandmarksYArg::Random => YLandmarkSpec::Random(self.my),
                LandmarksYArg::Observed => YLandmarkSpec::Observed(self.my),
                LandmarksYArg::Full => YLandmarkSpec::Full,
            },
            color_box: None,
            mask: match self.mask {
                MaskArg::Blackman => MaskKind::Blackman,
                MaskArg::Uniform => MaskKind::Uniform,
            },
            power_tol: self.power_tol,
            power_max_iter: self.power_max_iter,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct ComputeArgs {
    /// Reference image f.
    image_f: PathBuf,
    /// Target image g.
    image_g: PathBuf,
    #[command(flatten)]
    did: DidArgs,
    /// Resample both images to SIZE x SIZE before comparing.
    #[arg(long)]
    size: Option<usize>,
    /// Directory for h.png (over f) and q.png (over g) witness heatmaps.
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Zero out normalized witness values below this level.
    #[arg(long)]
    witness_threshold: Option<f64>,
}

#[derive(Args)]
struct WarpArgs {
    image: PathBuf,
    #[arg(long)]
    temperature: f64,
    #[arg(long, default_value_t = experiment::DEFAULT_CUTOFF)]
    cutoff: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Resample to SIZE x SIZE first.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct CommonExperimentArgs {
    image: PathBuf,
    /// Label written to the image_id column (defaults to the file stem).
    #[arg(long)]
    image_id: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    did: DidArgs,
}

#[derive(Args)]
struct WarpingArgs {
    #[command(flatten)]
    common: CommonExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = experiment::DEFAULT_TEMPERATURES)]
    temps: Vec<f64>,
    #[arg(long, default_value_t = experiment::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = experiment::DEFAULT_CUTOFF)]
    cutoff: usize,
    /// Images are resampled to SIZE x SIZE.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Args)]
struct RotationArgs {
    #[command(flatten)]
    common: CommonExperimentArgs,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    #[arg(long, value_delimiter = ',', default_values_t = experiment::DEFAULT_ANGLES)]
    angles: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    random_pairs: usize,
    /// Resample the scene to SIZE x SIZE first; kept at native size when absent.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct RegularizationArgs {
    #[command(flatten)]
    common: CommonExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-3, 1e-2, 1e-1, 1.0])]
    temps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = experiment::DEFAULT_LAMBDAS)]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = experiment::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = experiment::DEFAULT_CUTOFF)]
    cutoff: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
}

fn load(path: &Path, normalize: bool, size: Option<usize>) -> Result<SampledSignal, DidError> {
    match size {
        Some(s) => load_image_resized(path, normalize, s, s),
        None => load_image(path, normalize),
    }
}

fn image_id(common: &CommonExperimentArgs) -> String {
    common.image_id.clone().unwrap_or_else(|| {
        common
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    })
}

fn emit_rows(rows: &[ExperimentRow], out: Option<&Path>) -> Result<(), DidError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|source| DidError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            experiment::write_csv(rows, BufWriter::new(file))
        }
        None => experiment::write_csv(rows, io::stdout().lock()),
    }
}

/// Six significant digits.
fn format_value(v: f64) -> String {
    format!("{v:.5e}")
}

fn write_heatmap(
    values: &[f64],
    shape: Option<(usize, usize)>,
    threshold: Option<f64>,
    path: &Path,
) -> Result<(), DidError> {
    let (h, w) = shape.ok_or_else(|| {
        DidError::InvalidArgument("witness heatmaps need grid-structured images".into())
    })?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = GrayImage::new(w as u32, h as u32);
    for (k, px) in img.pixels_mut().enumerate() {
        let mut t = (values[k] - lo) / span;
        if let Some(th) = threshold {
            if t < th {
                t = 0.0;
            }
        }
        px.0[0] = (t.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DidError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn run(cli: Cli) -> Result<(), DidError> {
    match cli.command {
        Command::Compute(args) => {
            let config = args.did.config(1e-2)?;
            let f = load(&args.image_f, args.did.normalize, args.size)?;
            let g = load(&args.image_g, args.did.normalize, args.size)?;
            let result = did::did(&f, &g, &config)?;
            if let Some(dir) = &args.witness {
                std::fs::create_dir_all(dir).map_err(|source| DidError::Io {
                    path: dir.clone(),
                    source,
                })?;
                write_heatmap(
                    result.h_sampled.as_slice(),
                    f.shape(),
                    args.witness_threshold,
                    &dir.join("h.png"),
                )?;
                write_heatmap(
                    result.q_sampled.as_slice(),
                    g.shape(),
                    args.witness_threshold,
                    &dir.join("q.png"),
                )?;
            }
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{}", format_value(result.value)).map_err(|source| DidError::Io {
                path: "<stdout>".into(),
                source,
            })
        }
        Command::Warp(args) => {
            let img = load(&args.image, false, args.size)?;
            let (h, w) = img.shape().expect("images are grids");
            let field = random_warp_field(h, w, args.temperature, args.cutoff, args.seed)?;
            save_image(&apply_warp(&img, &field)?, &args.out)
        }
        Command::Experiment(ExperimentCommand::Warping(args)) => {
            let c = &args.common;
            let config = c.did.config(1e-2)?;
            let img = load(&c.image, c.did.normalize, Some(args.size))?;
            let sweep = WarpSweep {
                temperatures: args.temps.clone(),
                repeats: args.repeats,
                cutoff: args.cutoff,
                seed: c.did.seed,
            };
            let rows = experiment::warping(&img, &image_id(c), &sweep, &config)?;
            emit_rows(&rows, c.out.as_deref())
        }
        Command::Experiment(ExperimentCommand::Rotation(args)) => {
            let c = &args.common;
            let config = c.did.config(experiment::ROTATION_LAMBDA)?;
            let img = load(&c.image, c.did.normalize, args.size)?;
            let sweep = RotationSweep {
                patch_size: args.patch_size,
                angles: args.angles.clone(),
                random_pairs: args.random_pairs,
                seed: c.did.seed,
            };
            let rows = experiment::rotation(&img, &image_id(c), &sweep, &config)?;
            emit_rows(&rows, c.out.as_deref())
        }
        Command::Experiment(ExperimentCommand::Regularization(args)) => {
            let c = &args.common;
            let config = c.did.config(1e-2)?;
            let img = load(&c.image, c.did.normalize, Some(args.size))?;
            let sweep = WarpSweep {
                temperatures: args.temps.clone(),
                repeats: args.repeats,
                cutoff: args.cutoff,
                seed: c.did.seed,
            };
            let rows =
                experiment::regularization(&img, &image_id(c), &sweep, &args.lambdas, &config)?;
            emit_rows(&rows, c.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                DidError::Io { .. } | DidError::Format { .. } | DidError::InvalidArgument(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
