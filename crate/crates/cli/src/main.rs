//! Command-line front end for the workflow-search engine.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use supernet_core::explain::ReportFormat;
use supernet_core::harness::{
    backend_from_config, default_generator, from_jsonl, from_ndjson, gen_tasks, to_jsonl, to_ndjson,
    DomainSpec, Engine, EngineSnapshot, RunConfig, TaskGenSpec,
};

#[derive(Parser)]
#[command(name = "supernet", version, about = "Query-conditioned multi-agent workflow search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides mirroring the run-config keys.
#[derive(Args, Clone, Default)]
struct ConfigOverrides {
    /// Path to a JSON run config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_layers: Option<usize>,
    #[arg(long)]
    tau_elim: Option<f64>,
    #[arg(long)]
    alpha_fb: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma_fb: Option<f64>,
    #[arg(long)]
    beta_load: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    fusion_threshold: Option<f64>,
    #[arg(long)]
    eta_reward: Option<f64>,
    #[arg(long)]
    early_exit_threshold: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    disable_lifecycle: bool,
    #[arg(long)]
    disable_feedback: bool,
    #[arg(long)]
    disable_dynamic_cost: bool,
    #[arg(long)]
    disable_early_exit: bool,
}

impl ConfigOverrides {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
        }
        set!(max_layers);
        set!(tau_elim);
        set!(alpha_fb);
        set!(mu);
        set!(gamma_fb);
        set!(beta_load);
        set!(window);
        set!(fusion_threshold);
        set!(eta_reward);
        set!(early_exit_threshold);
        set!(feature_dim);
        set!(master_seed);
        if self.threads.is_some() {
            config.threads = self.threads;
        }
        config.ablation.disable_lifecycle |= self.disable_lifecycle;
        config.ablation.disable_feedback |= self.disable_feedback;
        config.ablation.disable_dynamic_cost |= self.disable_dynamic_cost;
        config.ablation.disable_early_exit |= self.disable_early_exit;
        config.validate()?;
        if let Some(n) = config.threads {
            supernet_core::par::configure_threads(n);
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the online search loop over a task stream.
    Search {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Task stream (one JSON task per line).
        #[arg(long)]
        tasks: PathBuf,
        /// Directory for events.ndjson, snapshot.json, and metrics.json.
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Evaluate a snapshot over a task stream without learning.
    Eval {
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        /// Evaluation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the metrics JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain one logged query: decision trace, counterfactuals, attention.
    Explain {
        /// Event log from a search run.
        #[arg(long)]
        log: PathBuf,
        /// Query id to explain.
        query_id: String,
        /// Monte Carlo samples per counterfactual.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `text` or `structured`.
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Replay an event log and verify its snapshots.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Where to write the reconstructed snapshot.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic task stream.
    GenTasks {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.5)]
        mean_complexity: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        /// Domain spec `name:weight:tag1+tag2`; repeatable.
        #[arg(long = "domain", value_name = "NAME:WEIGHT:TAGS")]
        domains: Vec<String>,
        /// Comma-separated tier names.
        #[arg(long, default_value = "standard")]
        tiers: String,
    },
}

fn parse_domain(raw: &str) -> Result<DomainSpec> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        bail!("domain spec '{raw}' must be name:weight:tag1+tag2");
    }
    Ok(DomainSpec {
        name: parts[0].to_string(),
        weight: parts[1].parse().with_context(|| format!("weight in '{raw}'"))?,
        required_tags: parts[2].split('+').filter(|t| !t.is_empty()).map(String::from).collect(),
    })
}

fn read_snapshot(path: &Path) -> Result<EngineSnapshot> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Search { overrides, tasks, out_dir } => {
            let config = overrides.load()?;
            let text = std::fs::read_to_string(&tasks).with_context(|| format!("reading {}", tasks.display()))?;
            let stream = from_jsonl(&text)?;
            let backend = backend_from_config(&config);
            let generator = default_generator();
            let mut engine = Engine::new(config)?;
            let outcome = engine.run_search(&stream, backend.as_ref(), generator.as_ref())?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("events.ndjson"), to_ndjson(&outcome.events))?;
            std::fs::write(
                out_dir.join("snapshot.json"),
                serde_json::to_string_pretty(&outcome.snapshot)?,
            )?;
            let metrics = serde_json::to_string_pretty(&outcome.metrics)?;
            std::fs::write(out_dir.join("metrics.json"), &metrics)?;
            println!("{metrics}");
            Ok(())
        }
        Command::Eval { overrides, snapshot, tasks, seed, out } => {
            let config = overrides.load()?;
            let snap = read_snapshot(&snapshot)?;
            let text = std::fs::read_to_string(&tasks).with_context(|| format!("reading {}", tasks.display()))?;
            let stream = from_jsonl(&text)?;
            let backend = backend_from_config(&config);
            let outcome = Engine::run_eval(&config, &snap, &stream, backend.as_ref(), seed)?;
            let metrics = serde_json::to_string_pretty(&outcome.metrics)?;
            match out {
                Some(path) => std::fs::write(path, &metrics)?,
                None => println!("{metrics}"),
            }
            Ok(())
        }
        Command::Explain { log, query_id, samples, seed, format } => {
            let format = match format.as_str() {
                "text" => ReportFormat::Text,
                "structured" => ReportFormat::Structured,
                other => bail!("unknown format '{other}' (expected text or structured)"),
            };
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let entries = from_ndjson(&text)?;
            let report = Engine::explain_query(&entries, &query_id, samples, seed, format)?;
            println!("{report}");
            Ok(())
        }
        Command::Replay { log, out } => {
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let entries = from_ndjson(&text)?;
            let snapshot = Engine::replay(&entries)?;
            println!(
                "replayed {} events: {} queries, pool size {}, clock {:.3}s",
                entries.len(),
                snapshot.queries,
                snapshot.supernet.active_pool().len(),
                snapshot.clock
            );
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&snapshot)?)?;
            }
            Ok(())
        }
        Command::GenTasks { out, count, seed, mean_complexity, spread, domains, tiers } => {
            let domains = if domains.is_empty() {
                vec![
                    DomainSpec {
                        name: "math".into(),
                        weight: 0.5,
                        required_tags: vec!["cot".into()],
                    },
                    DomainSpec {
                        name: "code".into(),
                        weight: 0.5,
                        required_tags: vec!["refine".into()],
                    },
                ]
            } else {
                domains.iter().map(|d| parse_domain(d)).collect::<Result<_>>()?
            };
            let spec = TaskGenSpec {
                count,
                seed,
                mean_complexity,
                complexity_spread: spread,
                domains,
                tiers: tiers.split(',').map(String::from).collect(),
                extra_factors: vec![],
            };
            let stream = gen_tasks(&spec)?;
            std::fs::write(&out, to_jsonl(&stream))?;
            println!("wrote {} tasks to {}", stream.len(), out.display());
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
