//! The `flowlut` command line.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 2 for usage errors, 1 for anything else. Data
//! and reports go to standard output; diagnostics go to standard error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchOptions, BenchStage};
use crate::error::{Error, Result};
use crate::gradcheck::{self, Group};
use crate::imageio;
use crate::lut;
use crate::pipeline::{
    count_params, load_checkpoint, save_checkpoint, synthetic_dataset, FlowLut, OptimizerState, PipelineConfig,
    Preset, Resolution, Trainer,
};
use crate::tensor::Tensor;

#[derive(Debug, Parser)]
#[command(name = "flowlut", version, about = "Photo enhancement with a 3D-LUT ensemble and residual refinement")]
pub struct Cli {
    /// Worker threads for pixel-parallel stages [default: logical processors]
    #[arg(long, global = true, env = "FLOWLUT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance one image
    Enhance(EnhanceArgs),
    /// Train on paired images or synthetic pairs
    Train(TrainArgs),
    /// Time the inference stages and report parameter and FLOP counts
    Bench(BenchArgs),
    /// Compare analytic gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// Write one LUT of the bank as a .cube file
    ExportCube(ExportCubeArgs),
    /// Print configuration, parameter counts and LUT names
    Info(InfoArgs),
}

/// Model configuration for commands that build a fresh model. Precedence:
/// flags, then `--config`, then the preset.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Base configuration
    #[arg(long, default_value = "full")]
    pub preset: Preset,
    /// Plain-text `key = value` file applied over the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of LUTs in the bank
    #[arg(long)]
    pub num_luts: Option<usize>,
    /// Refinement steps K
    #[arg(long)]
    pub flow_steps: Option<usize>,
    /// Refinement resolution, `WIDTHxHEIGHT` or `native`
    #[arg(long, value_parser = parse_processing)]
    pub processing_resolution: Option<Processing>,
    /// Start every LUT as the identity instead of the prior bank
    #[arg(long)]
    pub no_specialized_init: bool,
    /// Initialization and shuffling seed
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::preset(self.preset);
        if let Some(path) = &self.config {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        if let Some(n) = self.num_luts {
            cfg.num_luts = n;
        }
        if let Some(k) = self.flow_steps {
            cfg.flow_steps = k;
        }
        if let Some(Processing(p)) = self.processing_resolution {
            cfg.processing_resolution = p;
        }
        if self.no_specialized_init {
            cfg.specialized_init = false;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parsed `--processing-resolution`; `None` inside means native.
#[derive(Clone, Copy, Debug)]
pub struct Processing(pub Option<Resolution>);

fn parse_processing(s: &str) -> std::result::Result<Processing, String> {
    if s == "native" {
        return Ok(Processing(None));
    }
    s.parse().map(|r| Processing(Some(r)))
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output image; `.ppm` or `.png`
    #[arg(long)]
    pub output: PathBuf,
    /// Trained model; without it a fresh model is built from the config flags
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Override the number of refinement steps K
    #[arg(long)]
    pub flow_steps: Option<usize>,
    /// Override the refinement resolution, `WIDTHxHEIGHT` or `native`
    #[arg(long, value_parser = parse_processing)]
    pub processing_resolution: Option<Processing>,
    /// Write the image after every refinement step into this directory
    #[arg(long)]
    pub dump_steps: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of `<name>_in.{png,ppm}` / `<name>_gt.{png,ppm}` pairs
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate this many synthetic pairs instead of reading `--data`
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Side length of synthetic images
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step loss CSV [default: <out>.loss.csv]
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
    /// Timed iterations per stage, after 3 warmups
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    /// all, lut, flow or weights
    #[arg(long, default_value = "all")]
    pub stage: String,
    /// Print CSV instead of the text report
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted error per coordinate
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Random instances per group
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Restrict to these groups (repeatable)
    #[arg(long)]
    pub group: Vec<String>,
    /// Scale one group's analytic gradients by 1.01 (self-test of the checker)
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportCubeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub lut_index: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = io::stdout();
    match execute(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

/// Executes a parsed command, writing data to `out`. Returns the exit code
/// for outcomes that are not errors (a failed gradient check is 1).
pub fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> Result<i32> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Io(io::Error::new(io::ErrorKind::Other, e.to_string())))?;
    pool.install(|| match cli.command {
        Command::Enhance(a) => enhance(a).map(|()| 0),
        Command::Train(a) => train(a, out).map(|()| 0),
        Command::Bench(a) => bench_cmd(a, out).map(|()| 0),
        Command::Gradcheck(a) => gradcheck_cmd(a, out),
        Command::ExportCube(a) => export_cube(a).map(|()| 0),
        Command::Info(a) => info(a, out).map(|()| 0),
    })
}

fn model_from(checkpoint: Option<&Path>, config: &ConfigArgs) -> Result<FlowLut> {
    match checkpoint {
        Some(path) => Ok(load_checkpoint(path)?.0),
        None => FlowLut::new(config.resolve()?),
    }
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let mut model = match &a.checkpoint {
        Some(path) => load_checkpoint(path)?.0,
        None => {
            let mut cfg = PipelineConfig::preset(a.preset);
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            FlowLut::new(cfg)?
        }
    };
    if let Some(k) = a.flow_steps {
        model.config.flow_steps = k;
    }
    if let Some(Processing(p)) = a.processing_resolution {
        model.config.processing_resolution = p;
    }
    model.config.validate()?;
    if imageio::ImageFormat::from_path(&a.output).is_none() {
        return Err(Error::Usage(format!("{}: output extension must be .ppm or .png", a.output.display())));
    }
    let image = imageio::load_image(&a.input)?;
    let (output, trace) = model.enhance_traced(&image)?;
    if let Some(dir) = &a.dump_steps {
        std::fs::create_dir_all(dir)?;
        let ext = a.output.extension().and_then(|e| e.to_str()).unwrap_or("png");
        for (k, step) in trace.steps.iter().enumerate() {
            let path = dir.join(format!("step_{:02}.{ext}", k + 1));
            imageio::save_image(&step.image.map(|v| v.clamp(0.0, 1.0)), &path)?;
            eprintln!(
                "step {}: residual rms {:.6e}, mean |flow| {:.6e} -> {}",
                k + 1,
                step.residual_rms,
                step.mean_abs_flow,
                path.display()
            );
        }
    }
    imageio::save_image(&output, &a.output)
}

/// Reads `<name>_in.*` / `<name>_gt.*` pairs from `dir`, sorted by name.
/// Any file that matches the naming scheme but has no partner is an error
/// listing every orphan.
pub fn load_paired_dir(dir: &Path) -> Result<Vec<(Tensor, Tensor)>> {
    let mut inputs: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut targets: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"));
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
            continue;
        };
        if !ext_ok {
            continue;
        }
        if let Some(name) = stem.strip_suffix("_in") {
            inputs.insert(name.to_owned(), path);
        } else if let Some(name) = stem.strip_suffix("_gt") {
            targets.insert(name.to_owned(), path);
        }
    }
    let orphans: Vec<String> = inputs
        .iter()
        .filter(|(k, _)| !targets.contains_key(*k))
        .chain(targets.iter().filter(|(k, _)| !inputs.contains_key(*k)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Training(format!("unpaired files:\n  {}", orphans.join("\n  "))));
    }
    if inputs.is_empty() {
        return Err(Error::Training(format!("{}: no `<name>_in` / `<name>_gt` pairs", dir.display())));
    }
    let mut pairs = Vec::with_capacity(inputs.len());
    for (name, input) in &inputs {
        let x = imageio::load_image(input)?;
        let y = imageio::load_image(&targets[name])?;
        if x.shape() != y.shape() {
            return Err(Error::Training(format!(
                "pair `{name}`: input {:?} and target {:?} differ in size",
                x.shape(),
                y.shape()
            )));
        }
        pairs.push((x, y));
    }
    Ok(pairs)
}

fn train(a: TrainArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(wd) = a.weight_decay {
        cfg.weight_decay = wd;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    cfg.validate()?;
    let data = match (&a.data, a.synthetic) {
        (Some(dir), _) => load_paired_dir(dir)?,
        (None, Some(n)) => {
            if n == 0 {
                return Err(Error::Usage("--synthetic needs at least one pair".into()));
            }
            synthetic_dataset(n, cfg.seed, a.size, a.size)?
        }
        (None, None) => return Err(Error::Usage("one of --data or --synthetic is required".into())),
    };
    let mut model = FlowLut::new(cfg)?;
    let mut state = OptimizerState::new(model.tensors());
    let trainer = Trainer::from_config(&model);
    let mut print_err = None;
    let curve = trainer.train(&mut model, &mut state, &data, |epoch, loss| {
        if print_err.is_none() {
            print_err = writeln!(out, "epoch {} loss {loss:.6e}", epoch + 1).err();
        }
    })?;
    if let Some(e) = print_err {
        return Err(e.into());
    }
    save_checkpoint(&model, &state, &a.out)?;
    let csv_path = a.loss_csv.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    curve.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    eprintln!("wrote {} and {}", a.out.display(), csv_path.display());
    Ok(())
}

fn bench_cmd(a: BenchArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let stage: BenchStage = a.stage.parse()?;
    let mut model = model_from(a.checkpoint.as_deref(), &a.config)?;
    if a.checkpoint.is_some() {
        if let Some(Processing(p)) = a.config.processing_resolution {
            model.config.processing_resolution = p;
        }
    }
    let opts = BenchOptions {
        width: a.width,
        height: a.height,
        iters: a.iters,
        stage,
        seed: model.config.seed,
    };
    let report = bench::run(&model, &opts)?;
    if a.csv {
        report.write_csv(out)?;
    } else {
        writeln!(out, "{report}")?;
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs, out: &mut (dyn Write + Send)) -> Result<i32> {
    let group = |name: &str| {
        Group::from_name(name).ok_or_else(|| {
            let all: Vec<_> = Group::ALL.iter().map(|g| g.name()).collect();
            Error::Usage(format!("unknown group `{name}` (one of {})", all.join(", ")))
        })
    };
    if !(a.tolerance >= 0.0) {
        return Err(Error::Usage("--tolerance must be non-negative".into()));
    }
    if a.seeds == 0 {
        return Err(Error::Usage("--seeds must be at least 1".into()));
    }
    let groups = if a.group.is_empty() {
        Group::ALL.to_vec()
    } else {
        a.group.iter().map(|g| group(g)).collect::<Result<_>>()?
    };
    let opts = gradcheck::Options {
        seed: a.seed,
        seeds: a.seeds,
        tolerance: a.tolerance,
        groups,
        corrupt: a.corrupt.as_deref().map(group).transpose()?,
        ..gradcheck::Options::default()
    };
    let report = gradcheck::run(&opts)?;
    writeln!(out, "group          instances  checked  skipped  worst error")?;
    for g in &report.groups {
        writeln!(
            out,
            "{:<14} {:>9} {:>8} {:>8}  {:.3e}  {}",
            g.group.name(),
            g.instances,
            g.checked,
            g.skipped,
            g.worst_error(),
            if g.passed() { "ok" } else { "FAIL" }
        )?;
    }
    if report.passed() {
        return Ok(0);
    }
    for g in report.groups.iter().filter(|g| !g.passed()) {
        eprintln!("{}: {} coordinates above {:e}", g.group.name(), g.failures.len(), report.tolerance);
        for s in g.failures.iter().take(20) {
            eprintln!("  {}: {s}", g.group.name());
        }
        if g.failures.len() > 20 {
            eprintln!("  {}: ... {} more", g.group.name(), g.failures.len() - 20);
        }
    }
    Ok(1)
}

fn export_cube(a: ExportCubeArgs) -> Result<()> {
    let model = model_from(a.checkpoint.as_deref(), &a.config)?;
    let n = model.bank.len();
    let lut = model
        .bank
        .luts()
        .get(a.lut_index)
        .ok_or_else(|| Error::Usage(format!("--lut-index {} out of range (bank has {n} LUTs)", a.lut_index)))?;
    lut::export_cube(lut, &a.out)?;
    eprintln!("wrote LUT {} ({}) to {}", a.lut_index, model.bank.names()[a.lut_index], a.out.display());
    Ok(())
}

fn info(a: InfoArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let model = model_from(a.checkpoint.as_deref(), &a.config)?;
    write!(out, "{}", model.config.to_text())?;
    writeln!(out, "{}", count_params(&model))?;
    for (i, name) in model.bank.names().iter().enumerate() {
        writeln!(out, "lut {i} {name}")?;
    }
    Ok(())
}
