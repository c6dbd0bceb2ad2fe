use std::collections::HashMap;

use corpusqc_core::langproc::{build_profile, identify_language, read_profiles, write_profiles, ProfileConfig};

const LATIN: [&str; 5] = [
    "omo naa lo si oja",
    "baba mi wa nile",
    "awon omode n sere",
    "ojo n ro loni",
    "mo fe je iresi",
];
const ETHIOPIC: [&str; 5] = ["ሰላም ነው", "እንደምን አደርክ", "ቤት ውስጥ ነኝ", "ውሃ ስጠኝ", "ነገ እንገናኝ"];

// Independent rank-order profile: padded word n-grams, most frequent first,
// ties by gram; out-of-place distance with the profile length as penalty.
fn oracle_profile(lines: &[&str], max_n: usize, keep: usize) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in lines {
        for w in line.to_lowercase().split_whitespace() {
            let padded: Vec<char> = format!(" {w} ").chars().collect();
            for n in 1..=max_n {
                for i in 0..padded.len().saturating_sub(n - 1) {
                    let g: String = padded[i..i + n].iter().collect();
                    if g.trim().is_empty() {
                        continue;
                    }
                    *counts.entry(g).or_default() += 1;
                }
            }
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(keep).map(|x| x.0).collect()
}

fn oracle_distance(text: &[String], profile: &[String]) -> u64 {
    text.iter()
        .enumerate()
        .map(|(i, g)| match profile.iter().position(|p| p == g) {
            Some(j) => (i as i64 - j as i64).unsigned_abs(),
            None => profile.len() as u64,
        })
        .sum()
}

#[test]
fn disjoint_scripts_rank_training_language_first() {
    let cfg = ProfileConfig::default();
    let a = build_profile(&LATIN, "a", &cfg).unwrap();
    let b = build_profile(&ETHIOPIC, "b", &cfg).unwrap();
    let profiles = vec![a, b];
    let oa = oracle_profile(&LATIN, 4, 300);
    let ob = oracle_profile(&ETHIOPIC, 4, 300);
    for (lines, expect) in [(&LATIN, "a"), (&ETHIOPIC, "b")] {
        for line in lines.iter() {
            let ranked = identify_language(line, &profiles, &cfg).unwrap();
            assert_eq!(ranked[0].0, expect, "{line}");
            let text = oracle_profile(&[line], 4, 300);
            let want_a = oracle_distance(&text, &oa);
            let want_b = oracle_distance(&text, &ob);
            let got: HashMap<_, _> = ranked.into_iter().collect();
            assert_eq!(got["a"], want_a);
            assert_eq!(got["b"], want_b);
        }
    }
}

#[test]
fn ranking_is_a_permutation_of_profiles() {
    let cfg = ProfileConfig::default();
    let profiles = vec![
        build_profile(&ETHIOPIC, "b", &cfg).unwrap(),
        build_profile(&LATIN, "a", &cfg).unwrap(),
    ];
    let ranked = identify_language("nothing in common ×", &profiles, &cfg).unwrap();
    let mut langs: Vec<_> = ranked.iter().map(|r| r.0.as_str()).collect();
    langs.sort();
    assert_eq!(langs, ["a", "b"]);
}

#[test]
fn profiles_round_trip_through_jsonl() {
    let cfg = ProfileConfig::default();
    let profiles = vec![build_profile(&LATIN, "a", &cfg).unwrap()];
    let mut buf = Vec::new();
    write_profiles(&mut buf, &profiles).unwrap();
    assert_eq!(read_profiles(buf.as_slice()).unwrap(), profiles);
}
