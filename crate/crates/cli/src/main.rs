use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use scenemine_cli::query_args::build_query;
use scenemine_cli::{router, AppState};
use scenemine_core::eval::summary_text;
use scenemine_core::index::{import_released_gold, import_released_index, IndexStore};
use scenemine_core::inventory::{read_detections, read_manifest, ObjectInventory};
use scenemine_core::pipeline::{run_eval, run_mine, select_keyframes, simulate, PipelineConfig, RunOptions};

#[derive(Parser)]
#[command(name = "scenemine", version, about = "Mine structured driving scenarios from camera logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(short, long, env = "SCENEMINE_CONFIG")]
    config: PathBuf,
}

#[derive(clap::Args)]
struct IndexSource {
    #[arg(short, long, env = "SCENEMINE_CONFIG", conflicts_with = "index")]
    config: Option<PathBuf>,
    /// Index file; alternative to --config.
    #[arg(long)]
    index: Option<PathBuf>,
}

impl IndexSource {
    fn path(&self) -> anyhow::Result<PathBuf> {
        match (&self.index, &self.config) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(c)) => Ok(PipelineConfig::load(c)?.paths.index),
            (None, None) => anyhow::bail!("pass --config or --index"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate the manifest and detections and preview inventories.
    Ingest {
        #[command(flatten)]
        config: ConfigArg,
        /// Print the rendered inventory of every selected keyframe.
        #[arg(long)]
        show: bool,
    },
    /// Run scouts, consensus and verification over unindexed keyframes.
    Mine {
        #[command(flatten)]
        config: ConfigArg,
        /// Stop after this many new records.
        #[arg(long)]
        max_frames: Option<usize>,
        /// Stamp records with a fixed RFC 3339 time (reproducible output).
        #[arg(long)]
        fixed_timestamp: Option<DateTime<Utc>>,
    },
    /// Score the index against the gold set and write report files.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        /// Report directory (defaults to the configured one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter indexed frames.
    Query {
        #[command(flatten)]
        source: IndexSource,
        /// field=value[,value...]; repeatable.
        #[arg(long = "field", value_name = "FIELD=VALUES")]
        fields: Vec<String>,
        /// Required tag; repeatable.
        #[arg(long = "tag")]
        tags: Vec<String>,
        #[arg(long)]
        risk_min: Option<i64>,
        #[arg(long)]
        risk_max: Option<i64>,
        /// Case-insensitive description substring.
        #[arg(long)]
        text: Option<String>,
        /// Emit full records as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Print index statistics as JSON.
    Stats {
        #[command(flatten)]
        source: IndexSource,
    },
    /// Serve the curation API.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Import a published index and/or gold set into the configured paths.
    ImportReleased {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        index_src: Option<PathBuf>,
        #[arg(long)]
        gold_src: Option<PathBuf>,
    },
    /// Write a synthetic dataset and a mock-mode config for it.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 5)]
        frames_per_scene: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        hallucination_rate: f64,
    },
}

fn mock_config(seed: u64, hallucination_rate: f64) -> String {
    let mut text = format!(
        r#"# Mock-mode run over simulated data. Swap endpoint_url for real
# OpenAI-compatible servers to run live models.
seed = {seed}
tau_recall = 0.15
n_candidates = 3
keyframes_per_scene = 3
mock_noise = {{ hallucination_rate = {hallucination_rate}, omission_rate = 0.1, risk_jitter_sd = 1.0 }}

[weights]
alpha = 2.0
beta = 3.0
gamma = 10.0

[paths]
manifest = "manifest.jsonl"
detections = "detections.jsonl"
truth = "truth.jsonl"
gold = "gold.jsonl"
index = "out/index.jsonl"

[judge]
mode = "llm"
invention_rate = 0.2

[judge.endpoint]
name = "judge"
endpoint_url = "mock://judge"
model_id = "synthetic-judge"
role = "judge"
"#
    );
    for name in ["scout-a", "scout-b", "scout-c"] {
        text.push_str(&format!("\n[[scouts]]\nname = \"{name}\"\nendpoint_url = \"mock://{name}\"\nmodel_id = \"synthetic\"\n"));
    }
    text
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn ingest(config: &PipelineConfig, show: bool) -> anyhow::Result<()> {
    let manifest = read_manifest(&config.paths.manifest)?;
    let detections = read_detections(&config.paths.detections)?;
    let selected = select_keyframes(&manifest, config.keyframes_per_scene);
    let scenes: std::collections::BTreeSet<&str> = manifest.iter().map(|f| f.scene_id.as_str()).collect();
    let mut empty = 0;
    for frame in &selected {
        let inv = ObjectInventory::build(&frame.frame_id, &detections, config.tau_recall)?;
        empty += usize::from(inv.is_empty());
        if show {
            println!("{}\n{}\n", frame.frame_id, inv.rendered_text);
        }
    }
    println!(
        "{} frames in {} scenes, {} detections; {} keyframes selected ({} with no detections above tau {})",
        manifest.len(),
        scenes.len(),
        detections.len(),
        selected.len(),
        empty,
        config.tau_recall
    );
    Ok(())
}

fn load(config: &Path) -> anyhow::Result<PipelineConfig> {
    PipelineConfig::load(config).with_context(|| format!("loading {}", config.display()))
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { config, show } => ingest(&load(&config.config)?, show),
        Command::Mine { config, max_frames, fixed_timestamp } => {
            let config = load(&config.config)?;
            let options = RunOptions { max_new_frames: max_frames, fixed_timestamp };
            let summary = run_mine(&config, &options).await?;
            print_json(&summary)
        }
        Command::Eval { config, out } => {
            let mut config = load(&config.config)?;
            if let Some(dir) = out {
                config.paths.report_dir = Some(dir);
            }
            let report = run_eval(&config)?;
            print!("{}", summary_text(&report));
            println!("report written to {}", config.paths.report_path().display());
            Ok(())
        }
        Command::Query { source, fields, tags, risk_min, risk_max, text, json } => {
            let query = build_query(&fields, &tags, risk_min, risk_max, text)?;
            let store = IndexStore::open(&source.path()?)?;
            let hits = store.query(&query)?;
            let mut out = std::io::stdout().lock();
            for r in &hits {
                if json {
                    writeln!(out, "{}", serde_json::to_string(r)?)?;
                } else {
                    writeln!(out, "{}\trisk {}\t{}", r.frame_id, r.dna.risk(), r.dna.description)?;
                }
            }
            eprintln!("{} of {} records match", hits.len(), store.len());
            Ok(())
        }
        Command::Stats { source } => print_json(&IndexStore::open(&source.path()?)?.stats()),
        Command::Serve { config, addr } => {
            let config = load(&config.config)?;
            let state = Arc::new(AppState::from_config(&config)?);
            let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
            tracing::info!(%addr, "serving");
            axum::serve(listener, router(state)).with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
            Ok(())
        }
        Command::ImportReleased { config, index_src, gold_src } => {
            anyhow::ensure!(index_src.is_some() || gold_src.is_some(), "pass --index-src and/or --gold-src");
            let config = load(&config.config)?;
            let mut out = BTreeMap::new();
            if let Some(src) = index_src {
                if let Some(dir) = config.paths.index.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                let mut store = IndexStore::open(&config.paths.index)?;
                out.insert("index", import_released_index(&src, &mut store)?);
            }
            if let Some(src) = gold_src {
                out.insert("gold", import_released_gold(&src, &config.paths.gold)?);
            }
            print_json(&out)
        }
        Command::Simulate { out, scenes, frames_per_scene, seed, hallucination_rate } => {
            let data = simulate::simulate(scenes, frames_per_scene, seed);
            let paths = data.write_to(&out)?;
            let config_path = out.join("run.toml");
            std::fs::write(&config_path, mock_config(seed, hallucination_rate))?;
            PipelineConfig::load(&config_path)?;
            println!(
                "wrote {} frames to {}; truth at {}; config at {}",
                data.manifest.len(),
                paths.manifest.display(),
                paths.truth.display(),
                config_path.display()
            );
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => std::process::ExitCode::SUCCESS,
        // Downstream closed the pipe (e.g. `| head`).
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            std::process::ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
