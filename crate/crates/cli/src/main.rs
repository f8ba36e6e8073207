use std::fs;
use std::path::{Path, PathBuf};

use advocate_core::analyze::{aggregate, format_csv, format_table, load_sessions, transcript_metrics, INFERENCE_NOTE};
use advocate_core::config::ServiceConfig;
use advocate_core::server::{serve, Clock, Hub, HubSettings};
use advocate_core::sim::{simulate_personas, simulate_script, PersonaSet, Script};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "advocate", version, about = "Group discussion with an LLM devil's advocate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chat server.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `listen` from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Run one full session with scripted or persona clients.
    Simulate {
        #[arg(long, conflicts_with = "personas", required_unless_present = "personas")]
        script: Option<PathBuf>,
        #[arg(long)]
        personas: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Descriptive statistics and transcript metrics over session directories.
    Analyze {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-session transcript metrics as JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig> {
    match path {
        Some(p) => ServiceConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(ServiceConfig::default()),
    }
}

fn write_out(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn run_serve(config: Option<PathBuf>, listen: Option<String>) -> Result<()> {
    let cfg = load_config(config.as_deref())?;
    let addr = listen.unwrap_or_else(|| cfg.listen.clone());
    let static_dir = cfg.static_dir.clone();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let hub = Hub::new(HubSettings::from_config(&cfg, Clock::System)?);
        serve(hub, &addr, static_dir).await?;
        anyhow::Ok(())
    })
}

fn run_simulate(script: Option<PathBuf>, personas: Option<PathBuf>, config: Option<PathBuf>, seed: u64, out: PathBuf) -> Result<()> {
    let cfg = load_config(config.as_deref())?;
    fs::create_dir_all(&out)?;
    let outcome = match (script, personas) {
        (Some(path), None) => {
            let script = Script::load(&path).with_context(|| format!("loading script {}", path.display()))?;
            simulate_script(&script, &cfg, seed, &out)?
        }
        (None, Some(path)) => {
            let set = PersonaSet::load(&path).with_context(|| format!("loading personas {}", path.display()))?;
            simulate_personas(&set, &cfg, seed, &out)?
        }
        _ => bail!("pass exactly one of --script or --personas"),
    };
    println!("session {} -> {}", outcome.session_id, outcome.session_dir.display());
    for room in &outcome.snapshot.rooms {
        println!("  {:<14} {} messages", room.room_id.as_str(), room.messages.len());
    }
    Ok(())
}

fn run_analyze(sessions: Vec<PathBuf>, format: Format, out: PathBuf, metrics: Option<PathBuf>) -> Result<()> {
    let data = load_sessions(&sessions)?;
    let stats = aggregate(&data)?;
    let body = match format {
        Format::Csv => format_csv(&stats),
        Format::Table => format!("{}\n{INFERENCE_NOTE}\n", format_table(&stats)),
    };
    write_out(&out, &body)?;
    let reports = data.iter().map(transcript_metrics).collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        let agents: usize = r.rooms.iter().map(|m| m.agent).sum();
        println!(
            "{}: {} rooms, {} agent messages, cadence conformant: {}, pipeline failures: {}",
            r.session_id,
            r.rooms.len(),
            agents,
            r.cadence_conformant(),
            r.pipeline_failures
        );
    }
    if let Some(path) = metrics {
        write_out(&path, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    eprintln!("{INFERENCE_NOTE}");
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config, listen } => run_serve(config, listen),
        Command::Simulate { script, personas, config, seed, out } => run_simulate(script, personas, config, seed, out),
        Command::Analyze { sessions, format, out, metrics } => run_analyze(sessions, format, out, metrics),
    }
}
