//! Replay of crowd-review vote logs.
//!
//! A contribution is a translation of a source segment. Seeds are the initial
//! segments; a contribution whose status is `Verified` becomes a valid source
//! for further translations. Status is recomputed after every vote, so
//! verification can be revoked. Eligibility is checked once, at submit time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Status {
    Rejected,
    Pending,
    Verified,
}

/// Vote thresholds, stated the way the platform states them: verification
/// needs strictly more than `min_upvotes_exclusive` upvotes and strictly fewer
/// than `max_downvotes_exclusive` downvotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_upvotes_exclusive: u32,
    pub max_downvotes_exclusive: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_upvotes_exclusive: 5,
            max_downvotes_exclusive: 3,
        }
    }
}

impl Thresholds {
    pub fn status_of(&self, upvotes: u32, downvotes: u32) -> Status {
        if downvotes >= self.max_downvotes_exclusive {
            Status::Rejected
        } else if upvotes > self.min_upvotes_exclusive {
            Status::Verified
        } else {
            Status::Pending
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.max_downvotes_exclusive == 0 {
            return Err("max_downvotes_exclusive".into());
        }
        Ok(())
    }
}

/// Status under the default thresholds: rejected at 3 downvotes, otherwise
/// verified from 6 upvotes.
pub fn status_of(upvotes: u32, downvotes: u32) -> Status {
    Thresholds::default().status_of(upvotes, downvotes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Submit,
    Upvote,
    Downvote,
}

/// One line of a review log. The submit-only fields are required on
/// `Submit` and ignored otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub contribution_id: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ReviewError {
    #[error("user {user} already voted on {contribution}")]
    DuplicateVote { user: String, contribution: String },
    #[error("user {user} cannot vote on their own contribution {contribution}")]
    SelfVote { user: String, contribution: String },
    #[error("unknown contribution {0}")]
    UnknownContribution(String),
    #[error("source {0} is not eligible")]
    IneligibleSource(String),
    #[error("event seq {seq} does not follow {last}")]
    OutOfOrder { seq: u64, last: u64 },
    #[error("contribution id {0} already exists")]
    DuplicateContribution(String),
    #[error("submit event is missing `{0}`")]
    MissingField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub id: String,
    pub source_ref: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub tgt_text: String,
    pub author: String,
    pub upvotes: u32,
    pub downvotes: u32,
    pub voters: BTreeSet<String>,
    pub status: Status,
    pub depth: u32,
    pub submitted_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewState {
    thresholds: Thresholds,
    seeds: BTreeSet<String>,
    contributions: BTreeMap<String, ContributionRecord>,
    last_seq: Option<u64>,
}

impl ReviewState {
    pub fn new<I, S>(seeds: I, thresholds: Thresholds) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ReviewState {
            thresholds,
            seeds: seeds.into_iter().map(Into::into).collect(),
            contributions: BTreeMap::new(),
            last_seq: None,
        }
    }

    pub fn seeds(&self) -> &BTreeSet<String> {
        &self.seeds
    }

    pub fn contributions(&self) -> &BTreeMap<String, ContributionRecord> {
        &self.contributions
    }

    pub fn get(&self, id: &str) -> Option<&ContributionRecord> {
        self.contributions.get(id)
    }

    fn is_eligible(&self, id: &str) -> bool {
        self.seeds.contains(id)
            || self
                .contributions
                .get(id)
                .is_some_and(|c| c.status == Status::Verified)
    }

    fn depth_of(&self, id: &str) -> u32 {
        self.contributions.get(id).map_or(0, |c| c.depth)
    }

    /// Seeds plus every currently verified contribution.
    pub fn eligible_sources(&self) -> BTreeSet<String> {
        let mut out = self.seeds.clone();
        out.extend(
            self.contributions
                .values()
                .filter(|c| c.status == Status::Verified)
                .map(|c| c.id.clone()),
        );
        out
    }

    /// Applies one event. On error the state is unchanged except that an
    /// in-order `seq` is still consumed.
    pub fn apply_event(&mut self, event: &ReviewEvent) -> Result<(), ReviewError> {
        if let Some(last) = self.last_seq {
            if event.seq <= last {
                return Err(ReviewError::OutOfOrder {
                    seq: event.seq,
                    last,
                });
            }
        }
        self.last_seq = Some(event.seq);
        match event.kind {
            EventKind::Submit => self.submit(event),
            EventKind::Upvote | EventKind::Downvote => self.vote(event),
        }
    }

    fn submit(&mut self, event: &ReviewEvent) -> Result<(), ReviewError> {
        let id = &event.contribution_id;
        if self.contributions.contains_key(id) || self.seeds.contains(id) {
            return Err(ReviewError::DuplicateContribution(id.clone()));
        }
        let source_ref = event
            .source_ref
            .clone()
            .ok_or(ReviewError::MissingField("source_ref"))?;
        let src_lang = event.src_lang.clone().ok_or(ReviewError::MissingField("src_lang"))?;
        let tgt_lang = event.tgt_lang.clone().ok_or(ReviewError::MissingField("tgt_lang"))?;
        let tgt_text = event.tgt_text.clone().ok_or(ReviewError::MissingField("tgt_text"))?;
        if !self.is_eligible(&source_ref) {
            return Err(ReviewError::IneligibleSource(source_ref));
        }
        let depth = self.depth_of(&source_ref) + 1;
        self.contributions.insert(
            id.clone(),
            ContributionRecord {
                id: id.clone(),
                source_ref,
                src_lang,
                tgt_lang,
                tgt_text,
                author: event.user.clone(),
                upvotes: 0,
                downvotes: 0,
                voters: BTreeSet::new(),
                status: self.thresholds.status_of(0, 0),
                depth,
                submitted_seq: event.seq,
            },
        );
        Ok(())
    }

    fn vote(&mut self, event: &ReviewEvent) -> Result<(), ReviewError> {
        let thresholds = self.thresholds;
        let c = self
            .contributions
            .get_mut(&event.contribution_id)
            .ok_or_else(|| ReviewError::UnknownContribution(event.contribution_id.clone()))?;
        if c.author == event.user {
            return Err(ReviewError::SelfVote {
                user: event.user.clone(),
                contribution: c.id.clone(),
            });
        }
        if !c.voters.insert(event.user.clone()) {
            return Err(ReviewError::DuplicateVote {
                user: event.user.clone(),
                contribution: c.id.clone(),
            });
        }
        match event.kind {
            EventKind::Upvote => c.upvotes += 1,
            EventKind::Downvote => c.downvotes += 1,
            EventKind::Submit => unreachable!("submit handled separately"),
        }
        c.status = thresholds.status_of(c.upvotes, c.downvotes);
        Ok(())
    }

    /// Contributions whose source was eligible at submit time but is a
    /// contribution that is no longer verified.
    pub fn tainted(&self) -> Vec<String> {
        self.contributions
            .values()
            .filter(|c| {
                self.contributions
                    .get(&c.source_ref)
                    .is_some_and(|src| src.status != Status::Verified)
            })
            .map(|c| c.id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventFailure {
    pub seq: u64,
    pub contribution_id: String,
    pub error: ReviewError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub events: usize,
    pub applied: usize,
    pub contributions: usize,
    pub status_counts: BTreeMap<Status, usize>,
    pub max_depth: u32,
    /// Contributions per derivation depth (1 = translated from a seed).
    pub depth_counts: BTreeMap<u32, usize>,
    pub eligible_sources: usize,
    pub tainted_source: Vec<String>,
    pub failures: Vec<EventFailure>,
}

impl AuditReport {
    pub fn from_state(state: &ReviewState, events: usize, failures: Vec<EventFailure>) -> Self {
        let mut status_counts: BTreeMap<Status, usize> =
            [Status::Rejected, Status::Pending, Status::Verified]
                .into_iter()
                .map(|s| (s, 0))
                .collect();
        let mut depth_counts = BTreeMap::new();
        let mut max_depth = 0;
        for c in state.contributions.values() {
            *status_counts.entry(c.status).or_insert(0) += 1;
            *depth_counts.entry(c.depth).or_insert(0) += 1;
            max_depth = max_depth.max(c.depth);
        }
        AuditReport {
            events,
            applied: events - failures.len(),
            contributions: state.contributions.len(),
            status_counts,
            max_depth,
            depth_counts,
            eligible_sources: state.eligible_sources().len(),
            tainted_source: state.tainted(),
            failures,
        }
    }

    /// Plain-text rendering for terminals and logs.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24}{:>10}", "events", self.events);
        let _ = writeln!(s, "{:<24}{:>10}", "applied", self.applied);
        let _ = writeln!(s, "{:<24}{:>10}", "failed", self.failures.len());
        let _ = writeln!(s, "{:<24}{:>10}", "contributions", self.contributions);
        for (status, n) in &self.status_counts {
            let _ = writeln!(s, "{:<24}{:>10}", format!("  {status:?}"), n);
        }
        let _ = writeln!(s, "{:<24}{:>10}", "eligible sources", self.eligible_sources);
        let _ = writeln!(s, "{:<24}{:>10}", "tainted source", self.tainted_source.len());
        let _ = writeln!(s, "{:<24}{:>10}", "max depth", self.max_depth);
        for (depth, n) in &self.depth_counts {
            let _ = writeln!(s, "{:<24}{:>10}", format!("  depth {depth}"), n);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReplayMode {
    /// Record failing events in the audit and continue.
    #[default]
    Lenient,
    /// Stop at the first failing event.
    Strict,
}

/// Replays a log from the given seeds.
pub fn replay_log<'a, I>(
    events: I,
    seeds: &BTreeSet<String>,
    thresholds: Thresholds,
    mode: ReplayMode,
) -> Result<(ReviewState, AuditReport), EventFailure>
where
    I: IntoIterator<Item = &'a ReviewEvent>,
{
    let mut state = ReviewState::new(seeds.iter().cloned(), thresholds);
    let mut failures = Vec::new();
    let mut count = 0;
    for event in events {
        count += 1;
        if let Err(error) = state.apply_event(event) {
            let failure = EventFailure {
                seq: event.seq,
                contribution_id: event.contribution_id.clone(),
                error,
            };
            if mode == ReplayMode::Strict {
                return Err(failure);
            }
            failures.push(failure);
        }
    }
    let report = AuditReport::from_state(&state, count, failures);
    Ok((state, report))
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads a JSON-lines event log.
pub fn read_events<R: BufRead>(input: R) -> Result<Vec<ReviewEvent>, LogError> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|source| LogError::Json {
            line: idx + 1,
            source,
        })?;
        out.push(ev);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn submit(seq: u64, id: &str, source: &str, user: &str) -> ReviewEvent {
        ReviewEvent {
            seq,
            kind: EventKind::Submit,
            contribution_id: id.into(),
            user: user.into(),
            source_ref: Some(source.into()),
            src_lang: Some("en".into()),
            tgt_lang: Some("yo".into()),
            tgt_text: Some(format!("text of {id}")),
        }
    }

    fn vote(seq: u64, id: &str, user: &str, up: bool) -> ReviewEvent {
        ReviewEvent {
            seq,
            kind: if up { EventKind::Upvote } else { EventKind::Downvote },
            contribution_id: id.into(),
            user: user.into(),
            source_ref: None,
            src_lang: None,
            tgt_lang: None,
            tgt_text: None,
        }
    }

    fn seeds() -> BTreeSet<String> {
        ["s1".to_string(), "s2".to_string()].into()
    }

    /// Log that verifies `id` with six upvotes starting at `seq`.
    fn verify(seq: u64, id: &str) -> Vec<ReviewEvent> {
        (0..6).map(|i| vote(seq + i, id, &format!("v{i}"), true)).collect()
    }

    #[test]
    fn status_examples() {
        assert_eq!(status_of(6, 0), Status::Verified);
        assert_eq!(status_of(6, 3), Status::Rejected);
        assert_eq!(status_of(5, 2), Status::Pending);
    }

    #[test]
    fn threshold_crossing_and_revocation() {
        let mut st = ReviewState::new(seeds(), Thresholds::default());
        st.apply_event(&submit(1, "t1", "s1", "author")).unwrap();
        for e in verify(2, "t1").iter().take(5) {
            st.apply_event(e).unwrap();
        }
        assert_eq!(st.get("t1").unwrap().status, Status::Pending);
        st.apply_event(&vote(7, "t1", "v5", true)).unwrap();
        let t1 = st.get("t1").unwrap();
        assert_eq!((t1.upvotes, t1.downvotes, t1.status), (6, 0, Status::Verified));
        st.apply_event(&vote(8, "t1", "d1", false)).unwrap();
        st.apply_event(&vote(9, "t1", "d2", false)).unwrap();
        assert_eq!(st.get("t1").unwrap().status, Status::Verified);
        st.apply_event(&vote(10, "t1", "d3", false)).unwrap();
        let t1 = st.get("t1").unwrap();
        assert_eq!((t1.upvotes, t1.downvotes, t1.status), (6, 3, Status::Rejected));
    }

    #[test]
    fn vote_errors() {
        let mut st = ReviewState::new(seeds(), Thresholds::default());
        st.apply_event(&submit(1, "t1", "s1", "author")).unwrap();
        st.apply_event(&vote(2, "t1", "u", true)).unwrap();
        assert!(matches!(
            st.apply_event(&vote(3, "t1", "u", true)),
            Err(ReviewError::DuplicateVote { .. })
        ));
        assert!(matches!(
            st.apply_event(&vote(4, "t1", "u", false)),
            Err(ReviewError::DuplicateVote { .. })
        ));
        assert!(matches!(
            st.apply_event(&vote(5, "t1", "author", true)),
            Err(ReviewError::SelfVote { .. })
        ));
        assert_eq!(
            st.apply_event(&vote(6, "nope", "u", true)),
            Err(ReviewError::UnknownContribution("nope".into()))
        );
        assert_eq!(
            st.apply_event(&vote(6, "t1", "w", true)),
            Err(ReviewError::OutOfOrder { seq: 6, last: 6 })
        );
        assert_eq!(st.get("t1").unwrap().upvotes, 1);
        assert!(matches!(
            st.apply_event(&submit(7, "t1", "s1", "x")),
            Err(ReviewError::DuplicateContribution(_))
        ));
        let mut missing = submit(8, "t9", "s1", "x");
        missing.tgt_text = None;
        assert_eq!(
            st.apply_event(&missing),
            Err(ReviewError::MissingField("tgt_text"))
        );
    }

    #[test]
    fn eligibility_examples() {
        let (st, _) = replay_log(&[], &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        assert_eq!(st.eligible_sources(), seeds());

        let mut log = vec![submit(1, "t1", "s1", "a")];
        log.extend(verify(2, "t1"));
        let (st, _) = replay_log(&log, &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        let expect: BTreeSet<String> = ["s1", "s2", "t1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(st.eligible_sources(), expect);

        log.extend((0..3).map(|i| vote(20 + i, "t1", &format!("d{i}"), false)));
        let (st, _) = replay_log(&log, &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        assert_eq!(st.eligible_sources(), seeds());
    }

    #[test]
    fn chain_depth_and_taint() {
        let mut log = vec![submit(1, "t1", "s1", "a")];
        log.extend(verify(2, "t1"));
        log.push(submit(10, "t2", "t1", "b"));
        log.extend(verify(11, "t2"));
        let (st, audit) = replay_log(&log, &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        assert_eq!(audit.max_depth, 2);
        assert_eq!(audit.depth_counts, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(st.get("t2").unwrap().depth, 2);
        assert!(audit.tainted_source.is_empty());

        log.extend((0..3).map(|i| vote(30 + i, "t1", &format!("d{i}"), false)));
        let (st, audit) = replay_log(&log, &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        assert_eq!(audit.tainted_source, vec!["t2".to_string()]);
        assert_eq!(st.get("t2").unwrap().status, Status::Verified);
    }

    #[test]
    fn premature_submit_is_recorded() {
        let mut log = vec![submit(1, "t1", "s1", "a"), submit(2, "t2", "t1", "b")];
        log.extend(verify(3, "t1"));
        let (st, audit) = replay_log(&log, &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        assert_eq!(audit.failures.len(), 1);
        assert_eq!(audit.failures[0].error, ReviewError::IneligibleSource("t1".into()));
        assert!(st.get("t2").is_none());
        let strict = replay_log(&log, &seeds(), Thresholds::default(), ReplayMode::Strict);
        assert_eq!(strict.unwrap_err().seq, 2);
    }

    #[test]
    fn empty_log_audit() {
        let (_, audit) = replay_log(&[], &seeds(), Thresholds::default(), ReplayMode::Lenient).unwrap();
        assert_eq!(audit.contributions, 0);
        assert_eq!(audit.eligible_sources, 2);
        assert_eq!(audit.max_depth, 0);
        assert!(audit.to_table().contains("contributions"));
    }

    #[test]
    fn event_log_format() {
        let text = r#"{"seq":1,"kind":"Submit","contribution_id":"t1","user":"a","source_ref":"s1","src_lang":"en","tgt_lang":"yo","tgt_text":"ọmọ"}

{"seq":2,"kind":"Upvote","contribution_id":"t1","user":"b"}
"#;
        let events = read_events(text.as_bytes()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].kind, EventKind::Upvote);
        let line = serde_json::to_string(&events[1]).unwrap();
        assert_eq!(line, r#"{"seq":2,"kind":"Upvote","contribution_id":"t1","user":"b"}"#);
        assert!(matches!(
            read_events("{bad".as_bytes()),
            Err(LogError::Json { line: 1, .. })
        ));
    }
}
