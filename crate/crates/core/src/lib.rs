//! Quality control for low-resource parallel corpora.
//!
//! The crate is organised as one module per processing stage:
//!
//! - [`normalize`]: general text cleaning (decoding, markup, symbols, NFC).
//! - [`langproc`]: language-specific rewrite rules and n-gram language identification.
//! - [`statval`]: statistical bitext validation (character ratios, KDE, adaptive fences, overlap).
//! - [`review`]: replay of crowd-review vote logs.
//! - [`corpus`]: ingestion, deduplication, manifests and export.
//! - [`metrics`]: BLEU, chrF++ and TER with system comparison reports.

mod entities;
pub mod mapping;

pub mod corpus;
pub mod langproc;
pub mod metrics;
pub mod normalize;
pub mod review;
pub mod statval;
