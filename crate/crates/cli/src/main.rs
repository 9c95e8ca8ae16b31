//! `normcarve`: synthetic data, denoiser training, dual normal-map generation, carving and refinement.
//!
//! Configuration is a TOML file (`--config`) overridden by `NORMCARVE_<SECTION>__<KEY>`
//! environment variables, e.g. `NORMCARVE_CARVE__TOTAL_ITERATIONS=400`, then by the flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use normcarve::mesh::{read_obj, BodyPose};
use normcarve::pipeline::{self, EvalReference, PipelineConfig};
use normcarve::raster::NormalMap;

#[derive(Parser, Debug)]
#[command(name = "normcarve", version, about)]
struct Cli {
    /// Pipeline config (TOML); defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config and the environment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory for every artifact.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct SubjectArg {
    /// Use the proxy of this cached dataset example instead of the config pose.
    #[arg(long)]
    subject: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic training set into the dataset directory.
    SynthData,
    /// Train the denoiser on the cached dataset and write a checkpoint.
    Train,
    /// Sample front/back maps for the proxy condition.
    Generate(SubjectArg),
    /// Carve the proxy against a front/back pair.
    Carve {
        #[arg(long)]
        front: PathBuf,
        #[arg(long)]
        back: PathBuf,
        #[command(flatten)]
        subject: SubjectArg,
    },
    /// Resample ring views of a mesh and carve again.
    Refine {
        #[arg(long)]
        mesh: PathBuf,
        #[command(flatten)]
        subject: SubjectArg,
    },
    /// Complete the back map of a given front map.
    Guided {
        #[arg(long)]
        front: PathBuf,
        #[command(flatten)]
        subject: SubjectArg,
    },
    /// Render a mesh over the configured view ring.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        /// Output directory; defaults to `<out>/<outputs>/render`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Compare a mesh against a reference mesh or a directory of ring renders.
    Eval {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, conflicts_with = "reference_dir")]
        reference_mesh: Option<PathBuf>,
        /// Directory holding `view_XX.nmap` files for every ring view.
        #[arg(long)]
        reference_dir: Option<PathBuf>,
    },
    /// Run every stage in order and write a manifest of hashes.
    E2e,
}

fn read_map(path: &Path) -> Result<NormalMap<f64>> {
    let map = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => NormalMap::read_png16(path),
        _ => NormalMap::read_nmap(path),
    };
    map.with_context(|| format!("reading {}", path.display()))
}

fn pose(cfg: &PipelineConfig, out: &Path, arg: &SubjectArg) -> Result<BodyPose<f64>> {
    Ok(match arg.subject {
        Some(i) => pipeline::dataset_subject(cfg, out, i)?.pose,
        None => cfg.proxy.pose,
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.seed()?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::SynthData => {
            let data = pipeline::cmd_synth_data(&cfg, out)?;
            println!("{} examples in {}", data.examples.len(), cfg.dataset_dir(out).display());
        }
        Command::Train => {
            let t = pipeline::cmd_train(&cfg, out)?;
            println!(
                "loss {} -> {} over {} epochs; checkpoint {}",
                t.losses.first().copied().unwrap_or(f32::NAN),
                t.losses.last().copied().unwrap_or(f32::NAN),
                t.losses.len(),
                cfg.checkpoint_path(out).display()
            );
        }
        Command::Generate(s) => {
            pipeline::cmd_generate(&cfg, out, &pose(&cfg, out, s)?)?;
            println!("maps in {}", cfg.outputs_dir(out).join("generate").display());
        }
        Command::Carve { front, back, subject } => {
            let mesh = pipeline::cmd_carve(&cfg, out, &read_map(front)?, &read_map(back)?, &pose(&cfg, out, subject)?)?;
            println!("{} vertices, mesh in {}", mesh.num_vertices(), cfg.outputs_dir(out).join("carve").display());
        }
        Command::Refine { mesh, subject } => {
            let m = read_obj(mesh).with_context(|| format!("reading {}", mesh.display()))?;
            let r = pipeline::cmd_refine(&cfg, out, &m, &pose(&cfg, out, subject)?)?;
            println!("{} vertices, mesh in {}", r.mesh.num_vertices(), cfg.outputs_dir(out).join("refine").display());
        }
        Command::Guided { front, subject } => {
            pipeline::cmd_guided(&cfg, out, &read_map(front)?, &pose(&cfg, out, subject)?)?;
            println!("maps in {}", cfg.outputs_dir(out).join("guided").display());
        }
        Command::Render { mesh, dir } => {
            let m = read_obj(mesh).with_context(|| format!("reading {}", mesh.display()))?;
            let dir = dir.clone().unwrap_or_else(|| cfg.outputs_dir(out).join("render"));
            let maps = pipeline::cmd_render(&cfg, &m, &dir)?;
            println!("{} views in {}", maps.len(), dir.display());
        }
        Command::Eval { mesh, reference_mesh, reference_dir } => {
            let m = read_obj(mesh).with_context(|| format!("reading {}", mesh.display()))?;
            let cams = cfg.ring()?;
            let report = match (reference_mesh, reference_dir) {
                (Some(r), _) => {
                    let refm = read_obj(r).with_context(|| format!("reading {}", r.display()))?;
                    pipeline::cmd_eval(&m, &EvalReference::Mesh(&refm), &cams)?
                }
                (None, Some(d)) => {
                    let maps = (0..cams.len())
                        .map(|i| read_map(&d.join(format!("view_{i:02}.nmap"))))
                        .collect::<Result<Vec<_>>>()?;
                    pipeline::cmd_eval(&m, &EvalReference::Renders(&maps), &cams)?
                }
                (None, None) => bail!("eval needs --reference-mesh or --reference-dir"),
            };
            let dir = cfg.outputs_dir(out).join("eval");
            std::fs::create_dir_all(&dir)?;
            report.write(&dir.join("report.txt"))?;
            print!("{}", report.to_text());
        }
        Command::E2e => {
            let s = pipeline::cmd_e2e(&cfg, out)?;
            print!("{}", std::fs::read_to_string(out.join("summary.txt"))?);
            println!("manifest: {} artifacts", s.manifest.lines().count());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
