use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use labelsynth::grid::{Adjacency, GridGeometry};
use labelsynth::palette::ClassPalette;
use labelsynth::pipeline::{run_batch, strip_dir, write_synthetic_backgrounds, RunConfig};
use labelsynth::scene::{parse_scene_spec, SceneSpec};
use labelsynth::synth::{CostModel, SearchMode, SynthConfig};
use labelsynth::verify::verify_output;

#[derive(Parser)]
#[command(name = "labelsynth", version, about = "Synthesize laryngeal label maps with constrained objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labelled images from a directory of backgrounds.
    Generate(GenerateArgs),
    /// Check an emitted image against its metadata.
    Verify(VerifyArgs),
    /// Remove pathology, intubation and tool classes from label images.
    Strip(StripArgs),
    /// Write procedural background label maps.
    Background(BackgroundArgs),
    /// Parse a scene file and print its canonical form.
    Scene {
        file: PathBuf,
    },
}

#[derive(Args)]
struct PaletteArg {
    /// Class palette file; the built-in palette when omitted.
    #[arg(long, env = "LABELSYNTH_PALETTE")]
    palette: Option<PathBuf>,
}

impl PaletteArg {
    fn load(&self) -> Result<ClassPalette> {
        match &self.palette {
            Some(p) => ClassPalette::load(p).with_context(|| format!("loading palette {}", p.display())),
            None => Ok(ClassPalette::default()),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dataset group template (1-5).
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    group: Option<u8>,
    /// Scene description file.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    palette: PaletteArg,
    /// Search every pivot pair exactly, whatever the region size.
    #[arg(long)]
    exhaustive: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 64)]
    block_dim: usize,
    #[arg(long, default_value_t = 8)]
    sub_dim: usize,
    /// Attempts per object.
    #[arg(long, default_value_t = 32)]
    retries: usize,
    /// Use 4-neighbourhood sub-block adjacency instead of 8.
    #[arg(long)]
    four_adjacency: bool,
    /// Also penalize non-adjacent sub-blocks sharing a column.
    #[arg(long)]
    column_penalty: bool,
    /// Accept background pixels within this distance of a palette color.
    #[arg(long)]
    snap: Option<u8>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[command(flatten)]
    palette: PaletteArg,
    /// Original background, enabling an exact diff check.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StripArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    palette: PaletteArg,
    #[arg(long)]
    snap: Option<u8>,
}

#[derive(Args)]
struct BackgroundArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[command(flatten)]
    palette: PaletteArg,
}

fn load_scene(args: &GenerateArgs) -> Result<SceneSpec> {
    if let Some(path) = &args.scene {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return parse_scene_spec(&text).map_err(|d| anyhow::anyhow!("{}:{d}", path.display()));
    }
    let group = args.group.expect("clap requires --group or --scene");
    SceneSpec::for_group(group).map_err(|_| anyhow::anyhow!("group must be between 1 and 5, got {group}"))
}

fn generate(args: GenerateArgs) -> Result<u8> {
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    let mut cfg = RunConfig::new(&args.input, &args.out, load_scene(&args)?);
    cfg.count = args.count;
    cfg.master_seed = args.seed;
    cfg.palette = args.palette.load()?;
    cfg.block_dim = args.block_dim;
    cfg.sub_dim = args.sub_dim;
    cfg.jobs = args.jobs;
    cfg.snap = args.snap;
    cfg.synth = SynthConfig {
        mode: if args.exhaustive { SearchMode::Exhaustive } else { SearchMode::Heuristic },
        adjacency: if args.four_adjacency { Adjacency::Four } else { Adjacency::Eight },
        cost: CostModel { column_penalty: args.column_penalty },
        retries: args.retries,
        ..SynthConfig::default()
    };
    let summary = run_batch(&cfg)?;
    for f in &summary.failures {
        eprintln!("image {:04} failed at {}: {}", f.image, f.stage, f.message);
    }
    println!("{} of {} images generated in {}", summary.succeeded, summary.requested, args.out.display());
    Ok(summary.exit_code() as u8)
}

fn verify(args: VerifyArgs) -> Result<u8> {
    let palette = args.palette.load()?;
    let report = verify_output(&args.image, &args.meta, &palette, args.background.as_deref())?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        for (name, check) in report.checks() {
            println!("{:<18} {}", name, if check.passed() { "pass" } else { "FAIL" });
            for f in &check.failures {
                println!("    {f}");
            }
        }
        println!("changed cells: {}", report.diff_cells);
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn strip(args: StripArgs) -> Result<u8> {
    let n = strip_dir(&args.input, &args.out, &args.palette.load()?, args.snap)?;
    println!("stripped {n} image(s) into {}", args.out.display());
    Ok(0)
}

fn background(args: BackgroundArgs) -> Result<u8> {
    let block = if args.size.is_multiple_of(64) { 64 } else { args.size };
    let geometry = GridGeometry::new(args.size, args.size, block, 1).context("invalid --size")?;
    let written = write_synthetic_backgrounds(&args.out, args.count, &geometry, args.seed, &args.palette.load()?)?;
    println!("wrote {} background(s) to {}", written.len(), args.out.display());
    Ok(0)
}

fn print_scene(file: &Path) -> Result<u8> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    match parse_scene_spec(&text) {
        Ok(spec) => {
            // a closed pipe (e.g. `| head`) is not an error
            match write!(std::io::stdout(), "{spec}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(0),
            }
        }
        Err(d) => {
            eprintln!("{}:{d}", file.display());
            Ok(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Verify(a) => verify(a),
        Command::Strip(a) => strip(a),
        Command::Background(a) => background(a),
        Command::Scene { file } => print_scene(&file),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
