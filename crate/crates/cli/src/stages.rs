//! Pipeline stages. Each stage reads its inputs, writes its artifacts into
//! the run directory and returns a [`StageSummary`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use corpusqc_core::corpus::{
    build_manifest, ingest_source, manifest_inputs_from_records, read_manifest_tsv, CorpusError, DatasetRecord,
    Deduper, MalformedLine, SourceDescriptor, SourceFormat,
};
use corpusqc_core::langproc::{apply_ruleset, build_profile, compile_ruleset, read_profiles, shipped_ruleset,
    write_profiles, LanguageProfile, ProfileConfig, RuleSet, SHIPPED_RULESETS};
use corpusqc_core::metrics::{build_comparison, score_segments, EvalReport};
use corpusqc_core::normalize::{decode_slice, GeneralNormalizer};
use corpusqc_core::review::{read_events, replay_log, ReplayMode};
use corpusqc_core::statval::{
    char_ratio, fit_ratio_model, select_sample, validate_pair, LanguagePair, ModelFile, RatioModel, Reason,
    StatError, ValidationVerdict,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use tracing::{info, warn};

use crate::config::{ConfigError, NormalizationConfig, PipelineConfig};
use crate::summary::{timed, RunSummary, StageSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Input(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Everything a stage needs: settings, where to write, and the worker pool.
pub struct Context {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub pool: rayon::ThreadPool,
    pub summary: RunSummary,
}

impl Context {
    fn path(&mut self, name: &str) -> PathBuf {
        if !self.summary.artifacts.iter().any(|a| a == name) {
            self.summary.artifacts.push(name.to_string());
        }
        self.out_dir.join(name)
    }

    fn write_jsonl<'a, T: Serialize + 'a>(&mut self, name: &str, items: impl IntoIterator<Item = &'a T>) -> Result<usize> {
        let path = self.path(name);
        let mut out = BufWriter::new(create(&path)?);
        let mut n = 0;
        for item in items {
            serde_json::to_writer(&mut out, item).context("serializing")?;
            out.write_all(b"\n").with_context(|| format!("writing {}", path.display()))?;
            n += 1;
        }
        out.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(n)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).context("serializing")?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn push_stage(&mut self, stage: StageSummary) {
        info!(
            stage = %stage.name,
            input = stage.input,
            accepted = stage.accepted,
            rejected = stage.rejected,
            malformed = stage.malformed,
            seconds = stage.seconds,
            "stage done"
        );
        self.summary.stages.push(stage);
    }
}

fn create(path: &Path) -> Result<File> {
    Ok(File::create(path).with_context(|| format!("creating {}", path.display()))?)
}

/// General cleaning followed by the language's rule set, if any.
pub struct Normalizer {
    general: GeneralNormalizer,
    rules: BTreeMap<String, RuleSet>,
}

impl Normalizer {
    pub fn from_config(cfg: &NormalizationConfig) -> Result<Self> {
        let mut rules = BTreeMap::new();
        if cfg.shipped_rules {
            for (lang, _) in SHIPPED_RULESETS {
                if let Some(rs) = shipped_ruleset(lang) {
                    rules.insert(lang.to_string(), rs);
                }
            }
        }
        for (lang, path) in &cfg.rulesets {
            let mut rs = compile_ruleset(path)
                .map_err(|e| ConfigError::invalid(format!("normalization.rulesets.{lang}"), e.to_string()))?;
            rs.language = lang.clone();
            for issue in rs.lint() {
                warn!(language = %lang, ?issue, "rule set lint");
            }
            rules.insert(lang.clone(), rs);
        }
        Ok(Normalizer {
            general: GeneralNormalizer::new(cfg.general()),
            rules,
        })
    }

    pub fn text(&self, text: &str, lang: &str) -> String {
        let clean = self.general.clean(text).text;
        match self.rules.get(lang) {
            Some(rs) => {
                let out = apply_ruleset(&clean, rs);
                if out == clean {
                    out
                } else {
                    self.general.clean(&out).text
                }
            }
            None => clean,
        }
    }

    pub fn record(&self, mut rec: DatasetRecord) -> DatasetRecord {
        rec.src_text = self.text(&rec.src_text, &rec.src_lang);
        if let (Some(t), Some(lang)) = (&rec.tgt_text, &rec.tgt_lang) {
            rec.tgt_text = Some(self.text(t, lang));
        }
        rec
    }
}

fn read_sources(sources: &[SourceDescriptor], cfg: &NormalizationConfig) -> Result<(Vec<DatasetRecord>, Vec<MalformedLine>)> {
    if sources.is_empty() {
        return Err(ConfigError::invalid("sources", "no input sources configured").into());
    }
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for src in sources {
        let reader = ingest_source(src, cfg.decode_policy).map_err(|e| match e {
            CorpusError::MissingFile(p) => anyhow!("missing input file {}", p.display()),
            other => anyhow!(other),
        })?;
        for item in reader {
            match item {
                Ok(r) => records.push(r),
                Err(m) => malformed.push(m),
            }
        }
    }
    Ok((records, malformed))
}

/// Reads JSONL records (e.g. an earlier run's output).
pub fn read_record_files(paths: &[PathBuf]) -> Result<(Vec<DatasetRecord>, Vec<MalformedLine>)> {
    let sources: Vec<SourceDescriptor> = paths
        .iter()
        .map(|p| SourceDescriptor {
            path: p.clone(),
            format: SourceFormat::Jsonl,
            src_lang: String::new(),
            tgt_lang: None,
            encoding: None,
        })
        .collect();
    read_sources(&sources, &NormalizationConfig::default())
}

/// Reads the configured sources without cleaning them.
pub fn ingest_only(ctx: &mut Context) -> Result<Vec<DatasetRecord>> {
    let mut stage = StageSummary::new("read");
    let sources = ctx.config.sources.clone();
    let cfg = ctx.config.normalization.clone();
    let (records, malformed) = timed(&mut stage, |stage| -> Result<_> {
        let (records, malformed) = read_sources(&sources, &cfg)?;
        stage.input = records.len() + malformed.len();
        stage.accepted = records.len();
        stage.malformed = malformed.len();
        Ok((records, malformed))
    })?;
    ctx.write_jsonl("malformed.jsonl", &malformed)?;
    ctx.push_stage(stage);
    Ok(records)
}

/// Ingest, clean, deduplicate. Writes `normalized.jsonl` and `malformed.jsonl`.
pub fn normalize(ctx: &mut Context) -> Result<Vec<DatasetRecord>> {
    let mut stage = StageSummary::new("normalize");
    let cfg = ctx.config.normalization.clone();
    let normalizer = Normalizer::from_config(&cfg)?;
    let sources = ctx.config.sources.clone();
    let pool = &ctx.pool;
    let (kept, malformed, report) = timed(&mut stage, |stage| -> Result<_> {
        let (records, malformed) = read_sources(&sources, &cfg)?;
        stage.input = records.len() + malformed.len();
        stage.malformed = malformed.len();
        let cleaned: Vec<DatasetRecord> =
            pool.install(|| records.into_par_iter().map(|r| normalizer.record(r)).collect());
        let (kept, report) = if cfg.dedup {
            let mut d = Deduper::new();
            let kept: Vec<_> = cleaned.into_iter().filter(|r| d.admit(r)).collect();
            (kept, Some(d.into_report()))
        } else {
            (cleaned, None)
        };
        stage.accepted = kept.len();
        stage.rejected = report.as_ref().map_or(0, |r| r.dropped);
        Ok((kept, malformed, report))
    })?;
    if let Some(report) = report {
        stage.detail("duplicates", report.dropped);
        stage.detail("dedup_per_origin", &report.per_origin);
    }
    ctx.write_jsonl("normalized.jsonl", &kept)?;
    ctx.write_jsonl("malformed.jsonl", &malformed)?;
    ctx.push_stage(stage);
    Ok(kept)
}

#[derive(Serialize)]
struct ModelSummary {
    pair: String,
    n: usize,
    mean: f64,
    stddev: f64,
    q1: f64,
    q3: f64,
    k: f64,
    fence_lo: f64,
    fence_hi: f64,
    degenerate: bool,
}

/// Fits per-pair ratio models and checks every bitext record. Monolingual
/// records pass through unchecked.
pub fn validate(ctx: &mut Context, records: Vec<DatasetRecord>) -> Result<Vec<DatasetRecord>> {
    let mut stage = StageSummary::new("validate");
    let cfg = ctx.config.validation.clone();
    let profiles: Option<Vec<LanguageProfile>> = match (&ctx.config.profiles, cfg.langid_gate) {
        (Some(path), true) => {
            let f = File::open(path).with_context(|| format!("opening profiles {}", path.display()))?;
            Some(read_profiles(BufReader::new(f)).map_err(|e| anyhow!("reading {}: {e}", path.display()))?)
        }
        _ => None,
    };
    let pool = &ctx.pool;
    let (accepted, rejected, models, unmodeled, verdicts) = timed(&mut stage, |stage| {
        stage.input = records.len();
        let pairs: Vec<_> = pool.install(|| records.par_iter().map(|r| r.as_pair()).collect());
        let mut ratios: BTreeMap<LanguagePair, Vec<f64>> = BTreeMap::new();
        for p in pairs.iter().flatten() {
            if let Ok(r) = char_ratio(p) {
                if r.is_finite() {
                    ratios.entry(p.language_pair()).or_default().push(r);
                }
            }
        }
        let fitted: Vec<(LanguagePair, std::result::Result<RatioModel, StatError>)> = pool.install(|| {
            ratios
                .into_par_iter()
                .map(|(lp, rs)| {
                    let sample = select_sample(&rs, &cfg);
                    let m = fit_ratio_model(lp.clone(), &sample, &cfg);
                    (lp, m)
                })
                .collect()
        });
        let mut models = BTreeMap::new();
        let mut unmodeled = BTreeMap::new();
        for (lp, m) in fitted {
            match m {
                Ok(m) => {
                    models.insert(lp, m);
                }
                Err(e) => {
                    unmodeled.insert(lp.to_string(), e.to_string());
                }
            }
        }
        let verdicts: Vec<Option<ValidationVerdict>> = pool.install(|| {
            pairs
                .par_iter()
                .map(|p| {
                    p.as_ref().map(|p| {
                        validate_pair(p, models.get(&p.language_pair()), &cfg, profiles.as_deref())
                    })
                })
                .collect()
        });
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for (mut rec, v) in records.into_iter().zip(verdicts.iter().cloned()) {
            let ok = v.as_ref().is_none_or(|v| v.accepted);
            rec.verdict = v;
            if ok {
                accepted.push(rec);
            } else {
                rejected.push(rec);
            }
        }
        stage.accepted = accepted.len();
        stage.rejected = rejected.len();
        (accepted, rejected, models, unmodeled, verdicts)
    });

    let mut reasons: BTreeMap<Reason, usize> = BTreeMap::new();
    for v in verdicts.iter().flatten() {
        for r in &v.reasons {
            *reasons.entry(*r).or_default() += 1;
        }
    }
    stage.detail("monolingual", verdicts.iter().filter(|v| v.is_none()).count());
    stage.detail("reasons", &reasons);
    stage.detail("unmodeled_pairs", &unmodeled);
    let model_summaries: Vec<ModelSummary> = models
        .values()
        .map(|m| ModelSummary {
            pair: m.pair.to_string(),
            n: m.n,
            mean: m.mean,
            stddev: m.stddev,
            q1: m.q1,
            q3: m.q3,
            k: m.k,
            fence_lo: m.fence_lo,
            fence_hi: m.fence_hi,
            degenerate: m.degenerate,
        })
        .collect();
    stage.detail("models", &model_summaries);

    ctx.write_json(
        "models.json",
        &ModelFile {
            config: cfg,
            models: models.into_values().collect(),
        },
    )?;
    ctx.write_jsonl("verdicts.jsonl", verdicts.iter().flatten())?;
    ctx.write_jsonl("accepted.jsonl", &accepted)?;
    ctx.write_jsonl("rejected.jsonl", &rejected)?;
    ctx.push_stage(stage);
    Ok(accepted)
}

/// Builds the resource manifest from the configured inventory, or else from
/// token counts of `records`.
pub fn manifest(ctx: &mut Context, inventory: Option<&Path>, records: &[DatasetRecord]) -> Result<()> {
    let mut stage = StageSummary::new("manifest");
    let manifest = timed(&mut stage, |stage| -> Result<_> {
        let inputs = match inventory {
            Some(path) => {
                let f = File::open(path).with_context(|| format!("opening inventory {}", path.display()))?;
                read_manifest_tsv(BufReader::new(f)).map_err(|e| anyhow!("{}: {e}", path.display()))?
            }
            None => manifest_inputs_from_records(records),
        };
        stage.input = inputs.len();
        let m = build_manifest(&inputs).map_err(|e| anyhow!(e))?;
        stage.accepted = m.entries.len();
        Ok(m)
    })?;
    stage.detail("tokens_millions", manifest.totals.tokens_millions);
    stage.detail("audio_hours", manifest.totals.audio_hours);
    stage.detail("disparity_ratio", manifest.disparity_ratio);
    ctx.write_json("manifest.json", &manifest)?;
    let mut table = manifest.to_table();
    table.push('\n');
    for (tier, langs) in manifest.text_tier_groups() {
        table.push_str(&format!("text tier {tier}: {}\n", langs.join(", ")));
    }
    for (tier, langs) in manifest.audio_tier_groups() {
        table.push_str(&format!("audio {tier:?}: {}\n", langs.join(", ")));
    }
    ctx.write_text("manifest.txt", &table)?;
    ctx.write_text("manifest_tokens.svg", &manifest.tokens_svg())?;
    ctx.write_text("manifest_hours.svg", &manifest.hours_svg())?;
    ctx.push_stage(stage);
    Ok(())
}

pub fn review_replay(ctx: &mut Context, log: &Path, seeds: &Path, strict: bool) -> Result<()> {
    let mut stage = StageSummary::new("review-replay");
    let seed_ids: BTreeSet<String> = read_lines(seeds)?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let f = File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let events = read_events(BufReader::new(f)).map_err(|e| anyhow!("{}: {e}", log.display()))?;
    let mode = if strict { ReplayMode::Strict } else { ReplayMode::Lenient };
    let thresholds = ctx.config.review;
    let result = timed(&mut stage, |stage| {
        stage.input = events.len();
        replay_log(&events, &seed_ids, thresholds, mode)
    });
    let (state, report) = match result {
        Ok(v) => v,
        Err(failure) => {
            stage.errors.push(format!("event {}: {}", failure.seq, failure.error));
            stage.detail("failure", &failure);
            ctx.push_stage(stage);
            return Err(anyhow!("review log rejected at seq {}: {}", failure.seq, failure.error).into());
        }
    };
    stage.accepted = report.applied;
    stage.rejected = report.failures.len();
    stage.detail("status_counts", &report.status_counts);
    stage.detail("max_depth", report.max_depth);
    ctx.write_json("audit.json", &report)?;
    ctx.write_text("audit.txt", &report.to_table())?;
    ctx.write_jsonl("contributions.jsonl", state.contributions().values())?;
    ctx.push_stage(stage);
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = decode_slice(&bytes, None, corpusqc_core::normalize::DecodePolicy::Replace).map_err(|e| anyhow!(e))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub struct EvalInput {
    pub language: String,
    pub hyp: PathBuf,
    pub reference: PathBuf,
}

pub fn eval(ctx: &mut Context, system: &str, inputs: &[EvalInput]) -> Result<EvalReport> {
    let mut stage = StageSummary::new("eval");
    let normalizer = Normalizer::from_config(&ctx.config.normalization)?;
    let metric_cfg = ctx.config.metrics.clone();
    let pool = &ctx.pool;
    let report = timed(&mut stage, |stage| -> Result<_> {
        let mut per_language = BTreeMap::new();
        for inp in inputs {
            let hyps = read_lines(&inp.hyp)?;
            let refs = read_lines(&inp.reference)?;
            stage.input += hyps.len();
            let (hyps, refs): (Vec<String>, Vec<String>) = pool.install(|| {
                (
                    hyps.par_iter().map(|h| normalizer.text(h, &inp.language)).collect(),
                    refs.par_iter().map(|r| normalizer.text(r, &inp.language)).collect(),
                )
            });
            let scores = pool
                .install(|| score_segments(&hyps, &refs, &metric_cfg))
                .map_err(|e| anyhow!("{}: {e}", inp.language))?;
            stage.accepted += hyps.len();
            per_language.insert(inp.language.clone(), scores);
        }
        Ok(EvalReport {
            system: system.to_string(),
            per_language,
            config: metric_cfg.clone(),
        })
    })?;
    let name = format!("eval_{}.json", file_safe(system));
    ctx.write_json(&name, &report)?;
    ctx.push_stage(stage);
    Ok(report)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn compare(ctx: &mut Context, reports: &[PathBuf], baseline: &str) -> Result<String> {
    let mut stage = StageSummary::new("compare");
    let mut loaded = Vec::new();
    for p in reports {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        loaded.push(r);
    }
    stage.input = loaded.len();
    let table = timed(&mut stage, |_| build_comparison(&loaded, baseline)).map_err(|e| anyhow!(e))?;
    stage.accepted = loaded.len();
    ctx.write_json("comparison.json", &table)?;
    let text = table.to_table();
    ctx.write_text("comparison.txt", &text)?;
    ctx.push_stage(stage);
    Ok(text)
}

/// Builds language-ID profiles from `(language, text file)` inputs.
pub fn profile(ctx: &mut Context, inputs: &[(String, PathBuf)]) -> Result<()> {
    let mut stage = StageSummary::new("profile");
    let pool = &ctx.pool;
    let profiles = timed(&mut stage, |stage| -> Result<_> {
        let mut by_lang: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (lang, path) in inputs {
            let lines = read_lines(path)?;
            stage.input += lines.len();
            by_lang.entry(lang).or_default().extend(lines);
        }
        let cfg = ProfileConfig::default();
        let mut out = Vec::new();
        for (lang, lines) in by_lang {
            let p = pool
                .install(|| build_profile(&lines, lang, &cfg))
                .map_err(|e| anyhow!("{lang}: {e}"))?;
            out.push(p);
        }
        stage.accepted = stage.input;
        Ok(out)
    })?;
    let path = ctx.path("profiles.jsonl");
    let mut out = BufWriter::new(create(&path)?);
    write_profiles(&mut out, &profiles).map_err(|e| anyhow!(e))?;
    out.flush().context("writing profiles")?;
    ctx.push_stage(stage);
    Ok(())
}
