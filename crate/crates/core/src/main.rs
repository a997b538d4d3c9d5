use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mbtrack::mbfs::read_all;
use mbtrack::overlay::render_overlays;
use mbtrack::pipeline::{read_jsonl, run_tracker, write_jsonl, TrackerConfig};
use mbtrack::psmf::PsmfConfig;
use mbtrack::refine::RefineConfig;
use mbtrack::synth::{synthesize, GroundTruthRecord, SceneScript};

#[derive(Parser)]
#[command(name = "mbtrack", version, about = "Compressed-domain multi-object tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene script into a feature stream and ground truth.
    Synth(SynthArgs),
    /// Track objects in a feature stream.
    Track(TrackArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Overrides the script's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    events: Option<PathBuf>,
    /// Occurrence threshold; defaults to psi · ln 2.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, default_value_t = 25)]
    epsilon: u8,
    #[arg(long, default_value_t = PsmfConfig::DEFAULT_PSI)]
    psi: u32,
    #[arg(long, default_value_t = 16)]
    min_area: u32,
    #[arg(long, default_value_t = 1)]
    morph_radius: u32,
    /// Retire real objects unseen for this many P-frames.
    #[arg(long)]
    stale_limit: Option<u32>,
    #[arg(long)]
    no_spatial_filter: bool,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    overlay: Option<PathBuf>,
    #[arg(long)]
    full_decode: bool,
    #[arg(long)]
    live: bool,
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.script).with_context(|| format!("reading {}", a.script.display()))?;
    let mut script = SceneScript::from_toml(&text)?;
    if let Some(seed) = a.seed {
        script.noise.rng_seed = seed;
    }
    let syn = synthesize(&script)?;
    std::fs::write(&a.out, syn.to_bytes()?).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(gt) = &a.gt {
        write_jsonl(BufWriter::new(File::create(gt)?), &syn.ground_truth)?;
    }
    Ok(())
}

fn track(a: TrackArgs) -> anyhow::Result<()> {
    let config = TrackerConfig {
        psmf: PsmfConfig {
            psi: a.psi,
            omega: a.omega.unwrap_or_else(|| PsmfConfig::default_omega(a.psi)),
            enable_spatial_filter: !a.no_spatial_filter,
            stale_limit: a.stale_limit,
        },
        refine: RefineConfig {
            epsilon: a.epsilon,
            min_component_area: a.min_area,
            morph_radius: a.morph_radius,
            ..RefineConfig::default()
        },
        full_decode: a.full_decode,
        live: a.live,
    };
    let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let truth: Option<Vec<GroundTruthRecord>> = match &a.gt {
        Some(p) => Some(read_jsonl(BufReader::new(File::open(p).with_context(|| format!("reading {}", p.display()))?))?),
        None => None,
    };
    let out = run_tracker(&bytes[..], &config, truth.as_deref())?;
    write_jsonl(BufWriter::new(File::create(&a.out)?), &out.records)?;
    if let Some(p) = &a.events {
        write_jsonl(BufWriter::new(File::create(p)?), &out.events)?;
    }
    if let Some(p) = &a.metrics {
        serde_json::to_writer_pretty(BufWriter::new(File::create(p)?), &out.metrics)?;
    }
    if let Some(dir) = &a.overlay {
        let (_, background, frames) = read_all(&bytes[..])?;
        let background = match background {
            Some(bg) => bg,
            None => match frames.first().and_then(|f| f.intra()) {
                Some(p) => mbtrack::intra::decode_full(p)?,
                None => anyhow::bail!("stream has neither a background nor a leading I-frame"),
            },
        };
        render_overlays(frames, &background, &out.records, dir)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Track(a) => track(a),
    }
}
