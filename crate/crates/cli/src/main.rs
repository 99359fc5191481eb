use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edl_core::pipeline::{run, Command, PipelineConfig, PipelineError};

/// Self-labeling of eating events from heart-rate responses, plus event
/// knowledge graph export.
#[derive(Parser)]
#[command(name = "edl", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the raw lifelog files.
    #[arg(short, long, global = true)]
    input_dir: Option<PathBuf>,
    /// Output directory (overrides EDL_OUT_DIR and the config file).
    #[arg(short, long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set knn=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and align lifelog files, apply noise filters.
    Ingest,
    /// Extract structural features of every accepted sample set.
    Features,
    /// Rank feature subsets by mean silhouette.
    Select,
    /// Spectral clustering for each K with modularity scores.
    Sweep,
    /// Final clustering with heaviness levels.
    Cluster {
        /// spectral, gn or kmeans.
        #[arg(long)]
        clusterer: Option<String>,
    },
    /// Representative foods per heaviness level.
    Levels,
    /// Girvan-Newman and K-means (elbow) baselines.
    Baseline,
    /// Event knowledge graphs and the missing-aspect report.
    Ekg {
        /// triples-json or edge-list.
        #[arg(long)]
        format: Option<String>,
    },
    /// Heatmap matrix and Q-vs-K plot.
    Report,
    /// Generate a synthetic lifelog with planted food classes.
    Synth {
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        noise_std: Option<f64>,
        /// Fraction of episodes receiving a data-quality defect.
        #[arg(long)]
        noise_rate: Option<f64>,
    },
    /// Every stage from ingest to report.
    Pipeline,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn load_config(common: &Common, cmd: &Cmd) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    }
    .apply_env();
    let mut sets: Vec<(String, String)> = Vec::new();
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        sets.push((k.trim().to_string(), v.trim().to_string()));
    }
    match cmd {
        Cmd::Cluster { clusterer: Some(c) } => sets.push(("clusterer".into(), quote(c))),
        Cmd::Ekg { format: Some(f) } => sets.push(("graph_format".into(), quote(f))),
        Cmd::Synth { n_per_class, noise_std, noise_rate } => {
            if let Some(n) = n_per_class {
                sets.push(("synth_n_per_class".into(), n.to_string()));
            }
            if let Some(s) = noise_std {
                sets.push(("synth_noise_std".into(), format!("{s:?}")));
            }
            if let Some(r) = noise_rate {
                sets.push(("synth_noise_rate".into(), format!("{r:?}")));
            }
        }
        _ => {}
    }
    if let Some(seed) = common.seed {
        sets.push(("seed".into(), seed.to_string()));
    }
    for (k, v) in sets {
        cfg = cfg.with_override(&k, &v)?;
    }
    if let Some(dir) = &common.input_dir {
        cfg.input_dir = dir.clone();
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn command_of(cmd: &Cmd) -> Option<Command> {
    Some(match cmd {
        Cmd::Ingest => Command::Ingest,
        Cmd::Features => Command::Features,
        Cmd::Select => Command::Select,
        Cmd::Sweep => Command::Sweep,
        Cmd::Cluster { .. } => Command::Cluster,
        Cmd::Levels => Command::Levels,
        Cmd::Baseline => Command::Baseline,
        Cmd::Ekg { .. } => Command::Ekg,
        Cmd::Report => Command::Report,
        Cmd::Synth { .. } => Command::Synth,
        Cmd::Pipeline => Command::Pipeline,
        Cmd::ShowConfig => return None,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.common, &cli.command).and_then(|cfg| match command_of(&cli.command) {
        Some(command) => run(command, &cfg).map(|summary| {
            for file in summary.files {
                println!("{}", cfg.out_dir.join(file).display());
            }
        }),
        None => toml::to_string(&cfg)
            .map(|s| print!("{s}"))
            .map_err(|e| PipelineError::Config(e.to_string())),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
