use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depthsweep::ablation::{run_ablation, Axis};
use depthsweep::config::ExperimentConfig;
use depthsweep::maps::{DepthKind, ScalarMap};
use depthsweep::metrics::{evaluate, EvalOptions, DDAD_CAP, KITTI_CAP};
use depthsweep::pfm::{export_depth, export_pfm, import_depth};
use depthsweep::pipeline::{build_scene, build_trajectory, camera, run_pipeline};
use depthsweep::scene_sim::make_sequence;
use depthsweep::{Error, Result};

/// Plane-sweep depth around a monocular prior, on synthetic scenes.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (`key = value` lines). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Render the trajectory's images and ground-truth depth as PFM.
    Render,
    /// Run the pipeline once and write depths, uncertainty, metrics.csv and summary.json.
    Sweep,
    /// Score a predicted depth PFM against a ground-truth PFM.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// `kitti`, `ddad` or a depth in meters.
        #[arg(long, default_value = "kitti")]
        cap: String,
        /// Skip median scaling.
        #[arg(long)]
        no_median_scale: bool,
    },
    /// Sweep one axis and write `ablation_<axis>.csv`.
    Ablate {
        /// bins, strategy, beta, fusion or all.
        #[arg(long, default_value = "all")]
        axis: String,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn render(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let scene = build_scene(&config);
    let frames = make_sequence(&scene, &build_trajectory(&config)?, &camera(&config)?)?;
    create_dir(&common.out)?;
    for (i, f) in frames.iter().enumerate() {
        let gray = ScalarMap::new(f.image.width, f.image.height, f.image.gray())?;
        export_pfm(&gray, &common.out.join(format!("frame_{i:03}_image.pfm")))?;
        export_depth(&f.depth_gt, &common.out.join(format!("frame_{i:03}_gt.pfm")))?;
    }
    println!("rendered {} frames to {}", frames.len(), common.out.display());
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let record = run_pipeline(&config, Some(&common.out))?;
    for f in &record.frames {
        match (&f.metrics, &f.diagnostic) {
            (Some(m), _) => println!(
                "frame {:3}  fraction {:.4}  abs_rel mono {:.4}  mvs {:.4}  fused {:.4}",
                f.index,
                f.fraction.unwrap_or(f64::NAN),
                m.mono.abs_rel,
                m.mvs.abs_rel,
                m.fused.abs_rel
            ),
            (None, Some(d)) => println!("frame {:3}  failed: {d}", f.index),
            (None, None) => {}
        }
    }
    println!("config {}  wall clock {:.3} s", record.config_hash, record.wall_clock.as_secs_f64());
    let failed: Vec<&str> = record.frames.iter().filter_map(|f| f.diagnostic.as_deref()).collect();
    if !failed.is_empty() {
        return Err(Error::Diagnostic(format!("{} frame(s) failed: {}", failed.len(), failed.join("; "))));
    }
    Ok(())
}

fn eval(pred: &Path, gt: &Path, cap: &str, no_median_scale: bool) -> Result<()> {
    let cap = match cap {
        "kitti" => KITTI_CAP,
        "ddad" => DDAD_CAP,
        other => other
            .parse()
            .map_err(|_| Error::Config(format!("cap: cannot parse {other:?}")))?,
    };
    let options = EvalOptions {
        median_scale: !no_median_scale,
        cap,
    };
    let report = evaluate(
        &import_depth(pred, DepthKind::Fused)?,
        &import_depth(gt, DepthKind::GroundTruth)?,
        None,
        &options,
    )?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn ablate(common: &Common, axis: &str) -> Result<()> {
    let config = load_config(common)?;
    let axes = if axis == "all" {
        Axis::ALL.to_vec()
    } else {
        vec![axis.parse()?]
    };
    create_dir(&common.out)?;
    for axis in axes {
        let table = run_ablation(&config, axis)?;
        let path = common.out.join(format!("ablation_{}.csv", axis.as_str()));
        write_file(&path, &table.to_csv()?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.common.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.jobs)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Render => render(&cli.common),
        Command::Sweep => sweep(&cli.common),
        Command::Eval {
            pred,
            gt,
            cap,
            no_median_scale,
        } => eval(pred, gt, cap, *no_median_scale),
        Command::Ablate { axis } => ablate(&cli.common, axis),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
