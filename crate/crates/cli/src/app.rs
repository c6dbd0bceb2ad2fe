//! Command-line surface and run orchestration.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand};
use tracing::{error, info};

use crate::config::{resolve_workers, PipelineConfig, WORKERS_ENV};
use crate::stages::{self, Context, EvalInput, Result};
use crate::summary::RunSummary;

#[derive(Debug, Parser)]
#[command(name = "corpusqc", version, about = "Quality control for multilingual text corpora")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Pipeline config file (TOML).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; overrides CORPUSQC_WORKERS and the config.
    #[arg(short, long, global = true)]
    pub workers: Option<usize>,
    /// Root for run directories; overrides the config.
    #[arg(short, long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Name of the run directory (default: derived from the clock).
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Ingest the configured sources, clean and deduplicate them.
    Normalize,
    /// Fit ratio models and check pairs.
    Validate {
        /// JSONL records to validate instead of the configured sources.
        #[arg(long)]
        input: Vec<PathBuf>,
    },
    /// Replay a review event log and write an audit.
    ReviewReplay {
        #[arg(long)]
        log: PathBuf,
        /// Seed segment ids, one per line.
        #[arg(long)]
        seeds: PathBuf,
        /// Stop at the first invalid event.
        #[arg(long)]
        strict: bool,
    },
    /// Per-language resource manifest with tiers, tables and charts.
    Manifest {
        /// Inventory TSV (language, tokens in millions, audio hours).
        #[arg(long)]
        inventory: Option<PathBuf>,
        /// JSONL records to count tokens from when no inventory is given.
        #[arg(long)]
        input: Vec<PathBuf>,
    },
    /// Score a system's output against references.
    Eval {
        /// System name recorded in the report.
        #[arg(long)]
        system: String,
        /// Language of the next --hyp/--ref pair; repeat per language.
        #[arg(long = "lang", required = true)]
        langs: Vec<String>,
        /// Hypothesis file, one segment per line.
        #[arg(long = "hyp", required = true)]
        hyps: Vec<PathBuf>,
        /// Reference file aligned with the hypothesis file.
        #[arg(long = "ref", required = true)]
        refs: Vec<PathBuf>,
    },
    /// Compare evaluation reports against a baseline system.
    Compare {
        #[arg(long)]
        baseline: String,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Build language-ID profiles from LANG=FILE text samples.
    Profile {
        #[arg(required = true, value_parser = parse_lang_file)]
        inputs: Vec<(String, PathBuf)>,
    },
    /// normalize, then validate, then manifest.
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Normalize => "normalize",
            Command::Validate { .. } => "validate",
            Command::ReviewReplay { .. } => "review-replay",
            Command::Manifest { .. } => "manifest",
            Command::Eval { .. } => "eval",
            Command::Compare { .. } => "compare",
            Command::Profile { .. } => "profile",
            Command::Pipeline => "pipeline",
        }
    }
}

fn parse_lang_file(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((l, p)) if !l.is_empty() && !p.is_empty() => Ok((l.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected LANG=FILE, got `{s}`")),
    }
}

fn default_run_id() -> String {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    format!("run-{}-{:03}", now.as_secs(), now.subsec_millis())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.global.verbose);
    match run(&cli) {
        Ok(summary) => {
            info!(run = %summary.run_id, "done");
            0
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command. The run summary is written even when a stage fails
/// after the run directory exists.
pub fn run(cli: &Cli) -> Result<RunSummary> {
    let g = &cli.global;
    let config = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let env = std::env::var(WORKERS_ENV).ok();
    let workers = resolve_workers(g.workers, env.as_deref(), config.workers)?;
    let root = g
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let run_id = g.run_id.clone().unwrap_or_else(default_run_id);
    let out_dir = root.join(&run_id);
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| anyhow!("starting worker pool: {e}"))?;
    let mut ctx = Context {
        summary: RunSummary::new(cli.command.name(), &run_id, workers),
        config,
        out_dir,
        pool,
    };
    info!(command = cli.command.name(), workers, dir = %ctx.out_dir.display(), "run");
    let outcome = dispatch(&mut ctx, &cli.command);
    if let Err(e) = &outcome {
        ctx.summary.fail(e.to_string());
    }
    ctx.summary.finish();
    write_summary(&ctx.summary, &ctx.out_dir)?;
    outcome.map(|_| ctx.summary)
}

fn write_summary(summary: &RunSummary, dir: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).context("serializing run summary")?;
    text.push('\n');
    let path = dir.join("run_summary.json");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn tally(ctx: &mut Context) {
    let s = &mut ctx.summary;
    let Some(first) = s.stages.first() else { return };
    s.ingested = first.input;
    s.malformed = s.stages.iter().map(|st| st.malformed).sum();
    s.rejected = s.stages.iter().map(|st| st.rejected).sum();
    s.accepted = s.stages.last().map_or(0, |st| st.accepted);
}

fn dispatch(ctx: &mut Context, command: &Command) -> Result<()> {
    match command {
        Command::Normalize => {
            stages::normalize(ctx)?;
            tally(ctx);
        }
        Command::Validate { input } => {
            let records = if input.is_empty() {
                stages::ingest_only(ctx)?
            } else {
                load_records(ctx, input)?
            };
            stages::validate(ctx, records)?;
            tally(ctx);
        }
        Command::ReviewReplay { log, seeds, strict } => {
            let result = stages::review_replay(ctx, log, seeds, *strict);
            tally(ctx);
            result?;
        }
        Command::Manifest { inventory, input } => {
            let inventory = inventory.clone().or_else(|| ctx.config.manifest.inventory.clone());
            let records = match (&inventory, input.is_empty()) {
                (Some(_), _) => Vec::new(),
                (None, false) => stages::read_record_files(input)?.0,
                (None, true) => {
                    return Err(anyhow!("manifest needs --inventory, [manifest].inventory or --input").into());
                }
            };
            stages::manifest(ctx, inventory.as_deref(), &records)?;
        }
        Command::Eval {
            system,
            langs,
            hyps,
            refs,
        } => {
            if langs.len() != hyps.len() || langs.len() != refs.len() {
                return Err(anyhow!(
                    "--lang, --hyp and --ref must be given the same number of times ({}, {}, {})",
                    langs.len(),
                    hyps.len(),
                    refs.len()
                )
                .into());
            }
            let inputs: Vec<EvalInput> = langs
                .iter()
                .zip(hyps)
                .zip(refs)
                .map(|((l, h), r)| EvalInput {
                    language: l.clone(),
                    hyp: h.clone(),
                    reference: r.clone(),
                })
                .collect();
            let report = stages::eval(ctx, system, &inputs)?;
            for (lang, s) in &report.per_language {
                println!("{lang:<16} BLEU {:>7.2}  chrF++ {:>7.2}  TER {:>7.2}", s.bleu, s.chrf_pp, s.ter);
            }
        }
        Command::Compare { baseline, reports } => {
            let table = stages::compare(ctx, reports, baseline)?;
            print!("{table}");
        }
        Command::Profile { inputs } => stages::profile(ctx, inputs)?,
        Command::Pipeline => {
            let records = stages::normalize(ctx)?;
            let accepted = stages::validate(ctx, records)?;
            tally(ctx);
            let inventory = ctx.config.manifest.inventory.clone();
            stages::manifest(ctx, inventory.as_deref(), &accepted)?;
        }
    }
    Ok(())
}

fn load_records(ctx: &mut Context, paths: &[PathBuf]) -> Result<Vec<corpusqc_core::corpus::DatasetRecord>> {
    let (records, malformed) = stages::read_record_files(paths)?;
    let mut stage = crate::summary::StageSummary::new("read");
    stage.input = records.len() + malformed.len();
    stage.accepted = records.len();
    stage.malformed = malformed.len();
    ctx.summary.stages.push(stage);
    Ok(records)
}
