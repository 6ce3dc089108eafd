//! Command-line surface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fpo_core::analysis;
use fpo_core::grad::AdamConfig;
use fpo_core::scene::{standard_scene, RigConfig};
use fpo_core::{Encoding, EncodingConfig, RenderParams, TimeSignal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{self, Dataset, Split};
use crate::parallel::Variant;
use crate::pipeline::{self, BuildConfig};
use crate::train::{self, FinetuneConfig};
use crate::{eval, format, imageio, parallel, service};

#[derive(Parser, Debug)]
#[command(name = "fpo", version, about = "Fourier PlenOctree toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic scenes and datasets.
    #[command(subcommand)]
    Scene(SceneCmd),
    /// Per-frame trees.
    #[command(subcommand)]
    Frames(FramesCmd),
    /// Fourier PlenOctrees.
    #[command(subcommand)]
    Fpo(FpoCmd),
    /// Truncation and transfer-function sweeps.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Run the render service.
    Serve(ServeArgs),
}

#[derive(Subcommand, Debug)]
enum SceneCmd {
    /// Render a posed dataset of a scene with the reference renderer.
    Gen(SceneGenArgs),
}

#[derive(Args, Debug)]
struct SceneGenArgs {
    /// Built-in scene name (pulse, orbit, fade) or a scene JSON file.
    #[arg(long)]
    scene: String,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 125)]
    views: usize,
    /// Resolution as WxH.
    #[arg(long, default_value = "128x128")]
    res: String,
    /// Focal length in pixels; defaults to 1.25 x width.
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long, default_value_t = 3.2)]
    radius: f64,
    /// Every N-th view is held out for testing.
    #[arg(long, default_value_t = 5)]
    holdout: usize,
    /// Reference ray-marching step; defaults to 1/8 voxel at depth 6.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum FramesCmd {
    /// Sample the dataset's scene into one tree per frame.
    Build(FramesBuildArgs),
}

#[derive(Args, Debug)]
struct FramesBuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 6)]
    depth: u32,
    /// SH coefficients per channel (1, 4 or 9).
    #[arg(long, default_value_t = 9)]
    sh: usize,
    #[arg(long, default_value_t = 2)]
    supersample: usize,
    #[arg(long, default_value_t = fpo_core::octree::DEFAULT_OCCUPANCY_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum FpoCmd {
    Compress(CompressArgs),
    Render(RenderArgs),
    Finetune(FinetuneArgs),
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value_t = 31)]
    ksigma: usize,
    #[arg(long, default_value_t = 5)]
    kz: usize,
    #[arg(long, default_value = "log+comp")]
    encoding: Encoding,
    /// Duplicate the first and last frame before compressing.
    #[arg(long)]
    pad_endpoints: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    fpo: PathBuf,
    /// Camera JSON: {world_from_camera, focal, width, height}.
    #[arg(long)]
    pose: PathBuf,
    /// Time step of the tree, in `0..T` as reported by the file header.
    #[arg(long)]
    time: usize,
    #[arg(long, default_value = "as-loaded")]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    fpo: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Learning rate of the SH coefficients; defaults to --lr.
    #[arg(long)]
    lr_sh: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    fpo: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value = "as-loaded")]
    variant: Variant,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCmd {
    /// Peak ratio and reconstruction error per component count.
    Falloff(AnalyzeArgs),
    /// Errors with and without the logarithmic encoding, before and after the
    /// transfer function.
    Transfer(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Text file of samples.
    #[arg(long, conflicts_with_all = ["scene", "spiky"])]
    signal: Option<PathBuf>,
    /// Built-in scene whose densest leaf supplies the series.
    #[arg(long, conflicts_with = "spiky")]
    scene: Option<String>,
    /// Random spiky series from this seed.
    #[arg(long)]
    spiky: Option<u64>,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 6)]
    depth: u32,
    /// Peak index; defaults to the global maximum.
    #[arg(long)]
    peak: Option<usize>,
    /// Comma-separated component counts; defaults to every odd count.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    fpo: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

/// Parses arguments and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            bail!("{}", line.trim_start_matches("error: "));
        }
    };
    match cli.command {
        Command::Scene(SceneCmd::Gen(a)) => scene_gen(a),
        Command::Frames(FramesCmd::Build(a)) => frames_build(a),
        Command::Fpo(FpoCmd::Compress(a)) => compress(a),
        Command::Fpo(FpoCmd::Render(a)) => render(a),
        Command::Fpo(FpoCmd::Finetune(a)) => finetune(a),
        Command::Fpo(FpoCmd::Eval(a)) => evaluate(a),
        Command::Analyze(AnalyzeCmd::Falloff(a)) => analyze(a, false),
        Command::Analyze(AnalyzeCmd::Transfer(a)) => analyze(a, true),
        Command::Serve(a) => serve(a),
    }
}

fn parse_res(s: &str) -> Result<(u32, u32)> {
    let (w, h) = s.split_once(['x', 'X']).with_context(|| format!("resolution '{s}' is not WxH"))?;
    let w: u32 = w.parse().with_context(|| format!("bad width in '{s}'"))?;
    let h: u32 = h.parse().with_context(|| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 {
        bail!("resolution must be positive");
    }
    Ok((w, h))
}

fn scene_gen(a: SceneGenArgs) -> Result<()> {
    let mut scene = if Path::new(&a.scene).is_file() {
        dataset::read_scene(Path::new(&a.scene))?
    } else {
        standard_scene(&a.scene, a.frames.unwrap_or(20)).with_context(|| format!("unknown scene '{}' (expected pulse, orbit, fade or a JSON file)", a.scene))?
    };
    if let Some(t) = a.frames {
        scene.frames = t;
    }
    let (width, height) = parse_res(&a.res)?;
    let rig = RigConfig { views: a.views, radius: a.radius, width, height, focal: a.focal.unwrap_or(1.25 * width as f64), holdout: a.holdout };
    let step = a.step.unwrap_or(scene.bounds.voxel_size(6) / 8.0);
    Dataset::generate(&a.out, &scene, &rig, step)?;
    Ok(())
}

fn frames_build(a: FramesBuildArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let voxel = ds.info.scene.bounds.voxel_size(a.depth);
    if ds.info.step > voxel / 8.0 + 1e-12 {
        bail!("dataset reference step {} is coarser than 1/8 voxel ({}) at depth {}", ds.info.step, voxel / 8.0, a.depth);
    }
    let cfg = BuildConfig { depth: a.depth, sh_count: a.sh, supersample: a.supersample, threshold: a.threshold };
    let trees = pipeline::build_frames(&ds.info.scene, &cfg)?;
    pipeline::save_frames(&a.out, &trees)
}

fn compress(a: CompressArgs) -> Result<()> {
    let trees = pipeline::load_frames(&a.frames)?;
    let cfg = EncodingConfig::new(a.encoding, a.ksigma, a.kz);
    let fpo = pipeline::compress(&trees, &cfg, a.pad_endpoints)?;
    format::save_fpo(&a.out, &fpo).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn load(path: &Path) -> Result<fpo_core::FourierPlenOctree> {
    format::load_fpo(path).with_context(|| format!("loading {}", path.display()))
}

fn render(a: RenderArgs) -> Result<()> {
    let fpo = load(&a.fpo)?;
    let pose = dataset::read_pose(&a.pose)?;
    if a.time >= fpo.frames() {
        bail!("time {} out of range (T = {})", a.time, fpo.frames());
    }
    let req = service::FrameRequest {
        request_id: 0,
        world_from_camera: pose.world_from_camera,
        focal: pose.focal,
        width: pose.width,
        height: pose.height,
        time_step: a.time as u32,
        variant: a.variant,
        quality: service::Quality::Png,
    };
    service::validate_request(&fpo, &req)?;
    let cam = pose.camera()?;
    let (img, stats) = parallel::render_variant(&fpo, a.variant, &cam, a.time, &RenderParams::default());
    imageio::save_image(&a.out, &img)?;
    if let Some(p) = a.stats {
        dataset::write_json(&p, &stats)?;
    }
    Ok(())
}

fn finetune(a: FinetuneArgs) -> Result<()> {
    let mut fpo = load(&a.fpo)?;
    let ds = Dataset::load(&a.dataset)?;
    if ds.frames() != fpo.content_frames() {
        bail!("dataset has {} frames, tree covers {}", ds.frames(), fpo.content_frames());
    }
    let train_views = ds.load_split(Split::Train)?;
    let val_views = ds.load_split(Split::Test)?;
    let cfg = FinetuneConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig { lr_sigma: a.lr, lr_sh: a.lr_sh.unwrap_or(a.lr), ..AdamConfig::default() },
        seed: a.seed,
        ..FinetuneConfig::default()
    };
    let params = RenderParams { background: ds.info.scene.background, ..RenderParams::default() };
    let mut log = String::from(train::CSV_HEADER);
    log.push('\n');
    let records = train::finetune(&mut fpo, &train_views, &val_views, &cfg, &params, |r| {
        eprintln!("epoch {} loss {:.6e} val_psnr {:.3} ({:.1}s)", r.epoch, r.train_loss, r.val_psnr, r.wall_s);
    })?;
    format::save_fpo(&a.out, &fpo).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = a.log {
        for r in &records {
            log.push_str(&train::csv_row(r));
            log.push('\n');
        }
        fs::write(&p, log).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let fpo = load(&a.fpo)?;
    let ds = Dataset::load(&a.dataset)?;
    let views = ds.load_split(a.split)?;
    let params = RenderParams { background: ds.info.scene.background, ..RenderParams::default() };
    let report = eval::evaluate(&fpo, &views, a.variant, &params)?;
    fs::write(&a.out, report.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn analysis_signal(a: &AnalyzeArgs) -> Result<TimeSignal> {
    if let Some(p) = &a.signal {
        return pipeline::read_signal(p);
    }
    if let Some(name) = &a.scene {
        let scene = standard_scene(name, a.frames).with_context(|| format!("unknown scene '{name}'"))?;
        let trees = pipeline::build_frames(&scene, &BuildConfig { depth: a.depth, sh_count: 1, ..BuildConfig::default() })?;
        return pipeline::densest_leaf_series(&trees);
    }
    if let Some(seed) = a.spiky {
        return Ok(pipeline::spiky_signal(&mut ChaCha8Rng::seed_from_u64(seed), a.frames));
    }
    bail!("one of --signal, --scene or --spiky is required")
}

fn analyze(a: AnalyzeArgs, transfer: bool) -> Result<()> {
    let signal = analysis_signal(&a)?;
    let ks = if a.ks.is_empty() { (1..=fpo_core::signal::max_components(signal.frames())).step_by(2).collect() } else { a.ks.clone() };
    let rows = if transfer {
        analysis::transfer_sweep(&signal, &ks, a.delta)?
    } else {
        analysis::peak_falloff_sweep(&signal, a.peak, &ks, a.delta)?
    };
    fs::write(&a.out, analysis::to_csv(&rows)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let fpo = Arc::new(load(&a.fpo)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let (listener, addr) = service::bind(a.port).await?;
        eprintln!("serving on http://{addr}");
        service::serve(listener, fpo).await
    })
}
