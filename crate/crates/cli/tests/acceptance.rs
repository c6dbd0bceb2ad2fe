//! End-to-end acceptance checks. Run with `cargo test --test acceptance`.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use corpusqc_core::corpus::{
    build_manifest, classify_audio_tier, classify_text_tier, read_manifest_tsv, AudioTier, REFERENCE_INVENTORY_TSV,
};
use corpusqc_core::langproc::{apply_ruleset, shipped_ruleset, SHIPPED_RULESETS};
use corpusqc_core::metrics::{bleu_corpus, chrf_pp, ter, BleuConfig, ChrfConfig, TerConfig};
use corpusqc_core::normalize::{
    normalize_unicode, standardize_symbols, strip_markup, GeneralConfig, GeneralNormalizer,
};
use corpusqc_core::review::{status_of, Status};
use corpusqc_core::statval::{fit_kde, fit_ratio_model, LanguagePair, ValidationConfig};
use rand::rngs::Xoshiro256PlusPlus;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_corpusqc");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("inventory totals", c1_totals),
        ("tier fidelity", c2_tiers),
        ("disparity ratio", c3_disparity),
        ("review state machine", c4_review),
        ("metric oracles", c5_metrics),
        ("statistical filter efficacy", c6_filter),
        ("kde correctness", c7_kde),
        ("determinism across workers", c8_determinism),
        ("normalization idempotence", c9_idempotence),
        ("throughput", c10_throughput),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn c1_totals() -> Outcome {
    let t = Instant::now();
    let rows = read_manifest_tsv(REFERENCE_INVENTORY_TSV.as_bytes()).map_err(|e| e.to_string())?;
    let m = build_manifest(&rows).map_err(|e| e.to_string())?;
    let _ = m.to_table();
    let secs = t.elapsed().as_secs_f64();
    let tok_err = (m.totals.tokens_millions - 19_012.02).abs() / 19_012.02;
    let hrs_err = (m.totals.audio_hours - 12_628.0).abs() / 12_628.0;
    ensure(tok_err <= 5e-4, format!("tokens {} off by {tok_err:.2e}", m.totals.tokens_millions))?;
    ensure(hrs_err <= 5e-4, format!("hours {} off by {hrs_err:.2e}", m.totals.audio_hours))?;
    ensure(secs < 1.0, format!("took {secs:.3}s"))?;
    Ok(format!(
        "tokens {:.2}M ({:.4}%), audio {:.2}h ({:.4}%), {:.1}ms",
        m.totals.tokens_millions,
        tok_err * 100.0,
        m.totals.audio_hours,
        hrs_err * 100.0,
        secs * 1e3
    ))
}

fn c2_tiers() -> Outcome {
    let rows = read_manifest_tsv(REFERENCE_INVENTORY_TSV.as_bytes()).map_err(|e| e.to_string())?;
    let by_name: BTreeMap<&str, (f64, Option<f64>)> =
        rows.iter().map(|r| (r.language.as_str(), (r.tokens_millions, r.audio_hours))).collect();
    let text: [(&str, u8); 12] = [
        ("Amharic", 1),
        ("Arabic", 1),
        ("Yoruba", 1),
        ("Afrikaans", 1),
        ("Hausa", 2),
        ("Tigrinya", 2),
        ("Malagasy", 3),
        ("Somali", 3),
        ("Swahili", 3),
        ("Xhosa", 3),
        ("Bambara", 4),
        ("Luganda", 4),
    ];
    let audio: [(&str, AudioTier); 8] = [
        ("Kinyarwanda", AudioTier::High),
        ("Luganda", AudioTier::High),
        ("Swahili", AudioTier::High),
        ("Arabic", AudioTier::High),
        ("Malagasy", AudioTier::Moderate),
        ("Twi", AudioTier::Moderate),
        ("Bemba", AudioTier::Moderate),
        ("Ewe", AudioTier::Moderate),
    ];
    let mut mismatches = Vec::new();
    for (lang, want) in text {
        let (tokens, _) = by_name.get(lang).ok_or(format!("{lang} missing"))?;
        let got = classify_text_tier(*tokens).map_err(|e| e.to_string())?;
        if got != want {
            mismatches.push(format!("{lang} text {got} != {want}"));
        }
    }
    for (lang, want) in audio {
        let (_, hours) = by_name.get(lang).ok_or(format!("{lang} missing"))?;
        let got = classify_audio_tier(hours.unwrap_or(0.0)).map_err(|e| e.to_string())?;
        if got != want {
            mismatches.push(format!("{lang} audio {got:?} != {want:?}"));
        }
    }
    ensure(mismatches.is_empty(), mismatches.join("; "))?;
    Ok(format!("{} assignments, 0 mismatches", text.len() + audio.len()))
}

fn c3_disparity() -> Outcome {
    let rows = read_manifest_tsv(REFERENCE_INVENTORY_TSV.as_bytes()).map_err(|e| e.to_string())?;
    let m = build_manifest(&rows).map_err(|e| e.to_string())?;
    let d = m.disparity_ratio.ok_or("no disparity ratio")?;
    // oracle: largest over smallest positive token count, taken from the rows directly
    let tokens: Vec<f64> = rows.iter().map(|r| r.tokens_millions).filter(|&t| t > 0.0).collect();
    let max = tokens.iter().cloned().fold(f64::MIN, f64::max);
    let min = tokens.iter().cloned().fold(f64::MAX, f64::min);
    ensure((d - max / min).abs() < 1e-6, format!("{d} != {max}/{min}"))?;
    ensure((d - 147_247.5).abs() < 1e-6, format!("{d} != 147247.5"))?;
    let rel = (d - 147_000.0).abs() / 147_000.0;
    ensure(rel <= 2e-3, format!("{d} is {rel:.2e} from 147000"))?;
    Ok(format!("{d:.1} ({:.3}% from 147,000)", rel * 100.0))
}

fn c4_review() -> Outcome {
    let oracle = |u: u32, d: u32| {
        if d >= 3 {
            Status::Rejected
        } else if u >= 6 && d <= 2 {
            Status::Verified
        } else {
            Status::Pending
        }
    };
    let mut matched = 0;
    let mut cases = 0;
    for u in 0..=20 {
        for d in 0..=10 {
            cases += 1;
            if status_of(u, d) == oracle(u, d) {
                matched += 1;
            }
            if u < 20 {
                ensure(status_of(u + 1, d) >= status_of(u, d), format!("upvote lowered status at u={u} d={d}"))?;
            }
            if d < 10 {
                ensure(status_of(u, d + 1) <= status_of(u, d), format!("downvote raised status at u={u} d={d}"))?;
            }
        }
    }
    ensure(matched == cases && cases == 231, format!("{matched}/{cases}"))?;
    Ok(format!("{matched}/{cases} grid cases, monotone"))
}

fn levenshtein(a: &[&str], b: &[&str]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Best TER with at most one block shift, by trying every shift.
fn one_shift_ter(hyp: &[&str], rf: &[&str]) -> f64 {
    let mut best = levenshtein(hyp, rf);
    for start in 0..hyp.len() {
        for end in start + 1..=hyp.len() {
            let block = &hyp[start..end];
            let rest: Vec<&str> = hyp[..start].iter().chain(&hyp[end..]).cloned().collect();
            for at in 0..=rest.len() {
                let mut moved = rest[..at].to_vec();
                moved.extend_from_slice(block);
                moved.extend_from_slice(&rest[at..]);
                if moved != hyp {
                    best = best.min(1 + levenshtein(&moved, rf));
                }
            }
        }
    }
    100.0 * best as f64 / rf.len() as f64
}

fn c5_metrics() -> Outcome {
    let err = |e: corpusqc_core::metrics::MetricError| e.to_string();
    let (bc, cc, tc) = (BleuConfig::default(), ChrfConfig::default(), TerConfig::default());

    let corpus = [
        "the quick brown fox jumps over the lazy dog",
        "ọmọ náà lọ sí ọjà",
        "a b c d e f g",
    ];
    let b = bleu_corpus(&corpus, &corpus, &bc).map_err(err)?;
    let c = chrf_pp(&corpus, &corpus, &cc).map_err(err)?;
    for s in corpus {
        ensure(ter(s, s, &tc).map_err(err)? == 0.0, format!("TER identity on {s}"))?;
    }
    ensure(b == 100.0 && c == 100.0, format!("identity BLEU {b} chrF {c}"))?;

    let hyp = ["the cat sat on mat"];
    let rf = ["the cat sat on the mat"];
    let bleu = bleu_corpus(&hyp, &rf, &bc).map_err(err)?;
    let bleu_oracle = 100.0 * (1.0f64 - 6.0 / 5.0).exp() * (1.0 * 3.0 / 4.0 * 2.0 / 3.0 * 1.0 / 2.0f64).powf(0.25);
    ensure((bleu - bleu_oracle).abs() < 0.01 && (bleu - 57.89).abs() < 0.01, format!("BLEU {bleu}"))?;

    let two = ChrfConfig {
        char_order: 2,
        word_order: 0,
        ..ChrfConfig::default()
    };
    let chrf = chrf_pp(&["abc"], &["abd"], &two).map_err(err)?;
    let chrf_oracle = 100.0 * (2.0 / 3.0 + 1.0 / 2.0) / 2.0;
    ensure((chrf - chrf_oracle).abs() < 0.01 && (chrf - 58.33).abs() < 0.01, format!("chrF {chrf}"))?;

    let t = ter("b c d a", "a b c d", &tc).map_err(err)?;
    let t_oracle = one_shift_ter(&["b", "c", "d", "a"], &["a", "b", "c", "d"]);
    ensure((t - t_oracle).abs() < 0.01 && (t - 25.0).abs() < 0.01, format!("TER {t} oracle {t_oracle}"))?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let vocab = ["a", "b", "c", "d", "e", "f", "g"];
    let no_shift = TerConfig {
        shifts: false,
        ..tc.clone()
    };
    let mut worse = 0;
    for _ in 0..1000 {
        let mut sent = |max: usize| {
            let n = rng.random_range(1..=max);
            (0..n).map(|_| vocab[rng.random_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
        };
        let (h, r) = (sent(12), sent(12));
        let with = ter(&h, &r, &tc).map_err(err)?;
        let without = ter(&h, &r, &no_shift).map_err(err)?;
        let (hw, rw): (Vec<&str>, Vec<&str>) = (h.split_whitespace().collect(), r.split_whitespace().collect());
        let dp = 100.0 * levenshtein(&hw, &rw) as f64 / rw.len() as f64;
        ensure((without - dp).abs() < 1e-9, format!("no-shift TER {without} != DP {dp} for {h:?} / {r:?}"))?;
        if with > without + 1e-9 {
            worse += 1;
        }
    }
    ensure(worse == 0, format!("{worse}/1000 pairs scored worse with shifts"))?;

    let hyps: Vec<String> = (0..40).map(|i| format!("word{} sat on the mat {}", i % 7, i % 3)).collect();
    let refs: Vec<String> = (0..40).map(|i| format!("word{} sat on a mat {}", i % 5, i % 3)).collect();
    let base = bleu_corpus(&hyps, &refs, &bc).map_err(err)?;
    let mut idx: Vec<usize> = (0..hyps.len()).collect();
    for _ in 0..100 {
        idx.shuffle(&mut rng);
        let h: Vec<&str> = idx.iter().map(|&i| hyps[i].as_str()).collect();
        let r: Vec<&str> = idx.iter().map(|&i| refs[i].as_str()).collect();
        let s = bleu_corpus(&h, &r, &bc).map_err(err)?;
        ensure(s == base, format!("shuffled BLEU {s} != {base}"))?;
    }
    Ok(format!(
        "identity (100, 100, 0); BLEU {bleu:.2}, chrF {chrf:.2}, TER {t:.2}; 0/1000 shift regressions; 100 shuffles invariant"
    ))
}

const SRC_ALPHABET: &[u8] = b"abcdefghijklm";
const TGT_ALPHABET: &[char] = &['n', 'p', 'r', 's', 't', 'u', 'w', 'y', 'ẹ', 'ọ', 'ṣ', 'á', 'à'];

fn words_of_len(rng: &mut Xoshiro256PlusPlus, len: usize, alphabet: &[char]) -> String {
    let mut out = String::new();
    let mut n = 0;
    while n < len {
        if n > 0 && n + 1 < len && rng.random_range(0..6) == 0 {
            out.push(' ');
        } else {
            out.push(alphabet[rng.random_range(0..alphabet.len())]);
        }
        n += 1;
    }
    out
}

/// Source text of exactly `len` characters, unique per `id`.
fn source_text(rng: &mut Xoshiro256PlusPlus, id: usize, len: usize) -> String {
    let mut tag = String::new();
    let mut v = id;
    loop {
        tag.push(SRC_ALPHABET[v % 13] as char);
        v /= 13;
        if v == 0 {
            break;
        }
    }
    tag.push(' ');
    let letters: Vec<char> = SRC_ALPHABET.iter().map(|&b| b as char).collect();
    let rest = len.saturating_sub(tag.chars().count());
    tag + &words_of_len(rng, rest, &letters)
}

struct Synthetic {
    lines: Vec<(String, String, String, bool)>,
}

/// Clean pairs with ratio ~ N(1, 0.1) and outliers with ratio ~ N(3, 0.3),
/// shuffled together. Source and target alphabets are disjoint.
fn synthetic(seed: u64, clean: usize, outliers: usize) -> Synthetic {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let good = Normal::new(1.0, 0.1).unwrap();
    let bad = Normal::new(3.0, 0.3).unwrap();
    let mut lines = Vec::with_capacity(clean + outliers);
    for i in 0..clean + outliers {
        let is_outlier = i >= clean;
        let ratio: f64 = if is_outlier { bad.sample(&mut rng) } else { good.sample(&mut rng) };
        let src_len = 60;
        let tgt_len = (ratio * src_len as f64).round().max(1.0) as usize;
        let src = source_text(&mut rng, i, src_len);
        let tgt = words_of_len(&mut rng, tgt_len, TGT_ALPHABET);
        let id = if is_outlier { format!("o{i}") } else { format!("c{i}") };
        lines.push((id, src, tgt, is_outlier));
    }
    lines.shuffle(&mut rng);
    Synthetic { lines }
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .current_dir(dir)
        .env_remove("CORPUSQC_WORKERS")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("corpusqc {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Expected rejection rates from an independent simulation of the filter:
/// raw sample quartiles, population sd, the linear k rule, Tukey fences and
/// the z bound, applied to fresh draws quantized like the corpus lengths.
fn filter_oracle(seed: u64, cfg: &ValidationConfig) -> (f64, f64) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let good = Normal::new(1.0, 0.1).unwrap();
    let bad = Normal::new(3.0, 0.3).unwrap();
    let q = |r: f64| (r * 60.0).round().max(1.0) / 60.0;
    let mut mix: Vec<f64> = (0..10_500)
        .map(|i| q(if i < 10_000 { good.sample(&mut rng) } else { bad.sample(&mut rng) }))
        .collect();
    mix.shuffle(&mut rng);
    mix.truncate(cfg.sample_size);
    let n = mix.len() as f64;
    let mean = mix.iter().sum::<f64>() / n;
    let sd = (mix.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    mix.sort_by(f64::total_cmp);
    let quart = |p: f64| {
        let h = p * (n - 1.0);
        let lo = h.floor() as usize;
        mix[lo] + (h - lo as f64) * (mix[(lo + 1).min(mix.len() - 1)] - mix[lo])
    };
    let (q1, q3) = (quart(0.25), quart(0.75));
    let cv = sd / mean;
    let k = cfg.k_min + (cfg.k_max - cfg.k_min) * (cv / cfg.cv_ref).min(1.0);
    let (lo, hi) = (q1 - k * (q3 - q1), q3 + k * (q3 - q1));
    let rejected = |r: f64| r < lo || r > hi || ((r - mean) / sd).abs() > cfg.z_max;
    let trials = 200_000;
    let fp = (0..trials).filter(|_| rejected(q(good.sample(&mut rng)))).count() as f64 / trials as f64;
    let catch = (0..trials).filter(|_| rejected(q(bad.sample(&mut rng)))).count() as f64 / trials as f64;
    (fp, catch)
}

fn c6_filter() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let data = synthetic(2024, 10_000, 500);
    let mut jsonl = String::new();
    for (id, src, tgt, _) in &data.lines {
        let rec = serde_json::json!({
            "id": id, "src_lang": "en", "tgt_lang": "yo",
            "src_text": src, "tgt_text": tgt, "origin": "synthetic",
        });
        writeln!(jsonl, "{rec}").unwrap();
    }
    fs::write(dir.join("pairs.jsonl"), jsonl).map_err(|e| e.to_string())?;
    let t = Instant::now();
    run_cli(dir, &["-w", "1", "--run-id", "v", "validate", "--input", "pairs.jsonl"])?;
    let secs = t.elapsed().as_secs_f64();

    let rejected: BTreeSet<String> = fs::read_to_string(dir.join("runs/v/rejected.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    let caught = data.lines.iter().filter(|l| l.3 && rejected.contains(&l.0)).count();
    let false_pos = data.lines.iter().filter(|l| !l.3 && rejected.contains(&l.0)).count();
    let catch_rate = caught as f64 / 500.0;
    let fp_rate = false_pos as f64 / 10_000.0;
    let (fp_expected, catch_expected) = filter_oracle(77, &ValidationConfig::default());

    ensure(catch_rate >= 0.95, format!("caught {caught}/500"))?;
    ensure(fp_rate <= 0.02, format!("{false_pos}/10000 clean pairs rejected"))?;
    ensure(
        (catch_rate - catch_expected).abs() <= 0.02 && (fp_rate - fp_expected).abs() <= 0.01,
        format!("rates ({catch_rate}, {fp_rate}) far from oracle ({catch_expected}, {fp_expected})"),
    )?;
    ensure(secs < 30.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "caught {:.1}% (oracle {:.1}%), false positives {:.2}% (oracle {:.2}%), {secs:.1}s on 1 worker",
        catch_rate * 100.0,
        catch_expected * 100.0,
        fp_rate * 100.0,
        fp_expected * 100.0
    ))
}

fn c7_kde() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let sample: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let kde = fit_kde(&sample).ok_or("degenerate sample")?;
    let h = kde.bandwidth();
    let (lo, hi) = (kde.min() - 10.0 * h, kde.max() + 10.0 * h);
    let steps = 40_000;
    let dx = (hi - lo) / steps as f64;
    let mut area = 0.5 * (kde.density(lo) + kde.density(hi));
    for i in 1..steps {
        area += kde.density(lo + dx * i as f64);
    }
    area *= dx;
    ensure((area - 1.0).abs() <= 1e-3, format!("integral {area}"))?;
    let m = fit_ratio_model(LanguagePair::new("x", "y"), &sample, &ValidationConfig::default())
        .map_err(|e| e.to_string())?;
    let q = 0.674_489_750_196_081_7;
    ensure((m.q1 + q).abs() <= 0.05 && (m.q3 - q).abs() <= 0.05, format!("quartiles {} {}", m.q1, m.q3))?;
    Ok(format!("integral {area:.6}, quartiles {:.4} / {:.4}", m.q1, m.q3))
}

fn write_pipeline_corpus(dir: &Path, pairs: usize) -> Result<(), String> {
    let data = synthetic(99, pairs - pairs / 50, pairs / 50);
    let mut tsv = String::with_capacity(pairs * 140);
    for (i, (_, src, tgt, _)) in data.lines.iter().enumerate() {
        match i % 997 {
            // a little markup and entities for the cleaner
            1 => writeln!(tsv, "<p>{src}</p>\t{tgt} &amp;").unwrap(),
            // repeated pair
            2 if i > 2 => {
                let (_, s, t, _) = &data.lines[i - 1];
                writeln!(tsv, "{s}\t{t}").unwrap();
            }
            _ => writeln!(tsv, "{src}\t{tgt}").unwrap(),
        }
    }
    tsv.push_str("one column only\n");
    fs::write(dir.join("pairs.tsv"), tsv).map_err(|e| e.to_string())?;
    fs::write(
        dir.join("pipeline.toml"),
        "[[sources]]\npath = \"pairs.tsv\"\nformat = \"tsv2\"\nsrc_lang = \"en\"\ntgt_lang = \"yo\"\n",
    )
    .map_err(|e| e.to_string())
}

fn c8_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    write_pipeline_corpus(dir, 100_000)?;
    for w in ["1", "4", "8"] {
        run_cli(dir, &["-c", "pipeline.toml", "-w", w, "--run-id", &format!("w{w}"), "pipeline"])?;
    }
    let summary = read_json(&dir.join("runs/w1/run_summary.json"))?;
    let artifacts: Vec<String> = summary["artifacts"]
        .as_array()
        .ok_or("no artifact list")?
        .iter()
        .filter_map(|a| a.as_str().map(str::to_string))
        .collect();
    ensure(artifacts.len() >= 5, format!("only {} artifacts", artifacts.len()))?;
    let mut bytes = 0;
    for name in &artifacts {
        let one = fs::read(dir.join("runs/w1").join(name)).map_err(|e| e.to_string())?;
        for w in ["w4", "w8"] {
            let other = fs::read(dir.join("runs").join(w).join(name)).map_err(|e| e.to_string())?;
            ensure(one == other, format!("{name} differs between w1 and {w}"))?;
        }
        bytes += one.len();
    }
    for w in ["w4", "w8"] {
        let s = read_json(&dir.join("runs").join(w).join("run_summary.json"))?;
        for key in ["ingested", "accepted", "rejected", "malformed"] {
            ensure(s[key] == summary[key], format!("summary {key} differs in {w}"))?;
        }
    }
    Ok(format!(
        "{} artifacts ({} bytes) identical at 1, 4 and 8 workers; ingested {}",
        artifacts.len(),
        bytes,
        summary["ingested"]
    ))
}

fn fragment(rng: &mut Xoshiro256PlusPlus) -> String {
    const PIECES: &[&str] = &[
        "<p>", "</b>", "<a href='x'>", "<br/>", "<!-- c -->", "<", ">", "</", "<<p>>", "&amp;", "&lt;", "&gt;",
        "&#233;", "&#x1EB9;", "&bogus;", "&", ";", "&#", "&#x", "&amp;lt;", "\u{2019}", "\u{201C}", "\u{2014}",
        "\u{2026}", "\u{00A0}", "\u{200B}", "\u{FEFF}", "\u{037E}", " ", "  ", "\n", "\r\n", "\t", "ẹ", "ọ", "ṣ",
        "e\u{0329}", "o\u{0329}\u{0301}", "ƙ", "ƴ", "ɛ", "ɔ", "ε", "ͻ", "υ", "γ",
    ];
    match rng.random_range(0..11) {
        0..=3 => loop {
            if let Some(c) = char::from_u32(rng.random_range(0..0x11_0000)) {
                break c.to_string();
            }
        },
        4..=6 => char::from_u32(rng.random_range(0x300..0x370)).unwrap().to_string(),
        7..=8 => PIECES[rng.random_range(0..PIECES.len())].to_string(),
        _ => (0..rng.random_range(1..=6))
            .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
            .collect(),
    }
}

fn c9_idempotence() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    let general = GeneralNormalizer::new(GeneralConfig::default());
    let rules: Vec<_> = SHIPPED_RULESETS.iter().map(|(l, _)| shipped_ruleset(l).unwrap()).collect();
    let mut violations = Vec::new();
    let cases = 10_000;
    for _ in 0..cases {
        let n = rng.random_range(0..24);
        let s: String = (0..n).map(|_| fragment(&mut rng)).collect();
        type Op<'a> = (&'a str, &'a dyn Fn(&str) -> String);
        let ops: [Op; 4] = [
            ("strip_markup", &|x| strip_markup(x)),
            ("standardize_symbols", &|x| standardize_symbols(x)),
            ("normalize_unicode", &|x| normalize_unicode(x)),
            ("pipeline", &|x| general.clean(x).text),
        ];
        for (name, f) in ops {
            let once = f(&s);
            if f(&once) != once {
                violations.push(format!("{name} on {s:?}"));
            }
        }
        let cleaned = general.clean(&s).text;
        for r in &rules {
            let once = apply_ruleset(&cleaned, r);
            if apply_ruleset(&once, r) != once {
                violations.push(format!("ruleset on {s:?}"));
            }
        }
    }
    ensure(
        violations.is_empty(),
        format!("{} violations, first {}", violations.len(), violations.first().cloned().unwrap_or_default()),
    )?;
    Ok(format!("{cases} strings x {} ops, 0 violations", 4 + rules.len()))
}

fn c10_throughput() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    write_pipeline_corpus(dir, 100_000)?;
    run_cli(dir, &["-c", "pipeline.toml", "-w", "1", "--run-id", "t", "pipeline"])?;
    let s = read_json(&dir.join("runs/t/run_summary.json"))?;
    let stages = s["stages"].as_array().ok_or("no stages")?;
    let secs_of = |name: &str| stages.iter().find(|st| st["name"] == name).and_then(|st| st["seconds"].as_f64());
    let secs = secs_of("normalize").ok_or("no normalize stage")? + secs_of("validate").ok_or("no validate stage")?;
    let pairs = s["ingested"].as_f64().ok_or("no ingested count")?;
    let per_min = pairs / secs * 60.0;
    ensure(per_min >= 100_000.0, format!("{per_min:.0} pairs/min"))?;
    Ok(format!("{pairs} pairs in {secs:.2}s on 1 worker = {per_min:.0} pairs/min"))
}
