//! Language-model backends.
//!
//! Every backend is one of three kinds and exposes per-token probabilities
//! for that kind only:
//!
//! * `CLM`: log-probability of each token given its left context.
//! * `MLM`: log-probability of a token when its position is masked.
//! * `RTD`: probability that each token was replaced.
//!
//! Implementations provide the raw batched forwards (`run_*`). Callers go
//! through the checked wrappers on [`Backend`], which enforce kind safety,
//! the length limit and the forward counter.

mod align;
#[cfg(feature = "onnx")]
pub mod bundle;
pub mod fixture;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{Segment, Span, TokenizedSequence};

pub use align::{assign_segments, word_spans};
#[cfg(feature = "onnx")]
pub use bundle::{BundleBackend, BundleMeta, GoldenProbe, VerifyReport};
pub use fixture::{Fixture, FixtureBackend, FixtureEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BackendKind {
    Clm,
    Mlm,
    Rtd,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Clm => "CLM",
            BackendKind::Mlm => "MLM",
            BackendKind::Rtd => "RTD",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CLM" => Ok(BackendKind::Clm),
            "MLM" => Ok(BackendKind::Mlm),
            "RTD" => Ok(BackendKind::Rtd),
            other => Err(Error::InvalidArgument(format!("unknown backend kind `{other}`"))),
        }
    }
}

/// Counts sequence forwards. A batched execution over `k` rows counts `k`.
#[derive(Debug, Default)]
pub struct CallCounter(AtomicU64);

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forwards(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub(crate) fn add(&self, rows: usize) {
        self.0.fetch_add(rows as u64, Ordering::SeqCst);
    }
}

/// Labelled regions of a text, used to tag tokens.
pub type SegmentMap = [(Span, Segment)];

/// How sequences longer than the backend limit are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    #[default]
    Reject,
    /// Drop CONTEXT tokens from the left until the sequence fits.
    TrimContext,
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Short human-readable identifier recorded in reports.
    fn name(&self) -> String;

    fn max_len(&self) -> usize;

    fn overflow(&self) -> Overflow {
        Overflow::Reject
    }

    fn counter(&self) -> &CallCounter;

    /// Splits `text` into tokens with byte spans and special-marker flags.
    fn split(&self, text: &str) -> Result<RawTokens>;

    /// Next-token log-probabilities, `n - 1` per sequence.
    fn run_clm(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>>;

    /// Log-probability of the true token at each `(sequence, position)` with
    /// that position masked.
    fn run_mlm(&self, queries: &[(&TokenizedSequence, usize)]) -> Result<Vec<f64>>;

    /// Raw replacement probabilities, `n` per sequence.
    fn run_rtd(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>>;

    fn forwards(&self) -> u64 {
        self.counter().forwards()
    }

    /// Tokenizes `text`, tagging each token with the segment that covers the
    /// majority of its bytes. Special markers are tagged TEMPLATE.
    fn tokenize(&self, text: &str, segments: &SegmentMap) -> Result<TokenizedSequence> {
        let raw = self.split(text)?;
        let tags = assign_segments(&raw.spans, &raw.special, segments);
        let seq = TokenizedSequence::new(raw.ids, raw.texts, raw.spans, tags)?;
        fit_length(seq, self.max_len(), self.overflow())
    }

    fn clm_token_logprobs(&self, seq: &TokenizedSequence) -> Result<Vec<f64>> {
        Ok(self.clm_token_logprobs_batch(&[seq])?.pop().unwrap_or_default())
    }

    fn clm_token_logprobs_batch(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>> {
        self.ensure_kind(BackendKind::Clm)?;
        self.ensure_lengths(&seqs.iter().map(|s| s.len()).collect::<Vec<_>>())?;
        let out = self.run_clm(seqs)?;
        self.counter().add(seqs.len());
        Ok(out)
    }

    fn mlm_token_logprob(&self, seq: &TokenizedSequence, position: usize) -> Result<f64> {
        Ok(self.mlm_token_logprob_batch(&[(seq, position)])?[0])
    }

    /// One masked forward per query.
    fn mlm_token_logprob_batch(&self, queries: &[(&TokenizedSequence, usize)]) -> Result<Vec<f64>> {
        self.ensure_kind(BackendKind::Mlm)?;
        self.ensure_lengths(&queries.iter().map(|q| q.0.len()).collect::<Vec<_>>())?;
        for &(seq, i) in queries {
            if i >= seq.len() || seq.is_special(i) {
                return Err(Error::BadPosition(i));
            }
        }
        let out = self.run_mlm(queries)?;
        self.counter().add(queries.len());
        Ok(out)
    }

    fn rtd_replacement_probs(&self, seq: &TokenizedSequence) -> Result<Vec<f64>> {
        Ok(self.rtd_replacement_probs_batch(&[seq])?.pop().unwrap_or_default())
    }

    /// Replacement probabilities clamped into `[1e-12, 1 - 1e-12]`.
    fn rtd_replacement_probs_batch(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>> {
        self.ensure_kind(BackendKind::Rtd)?;
        self.ensure_lengths(&seqs.iter().map(|s| s.len()).collect::<Vec<_>>())?;
        let mut out = self.run_rtd(seqs)?;
        self.counter().add(seqs.len());
        for probs in &mut out {
            for p in probs.iter_mut() {
                *p = crate::score::clamp_prob(*p);
            }
        }
        Ok(out)
    }

    fn ensure_kind(&self, expected: BackendKind) -> Result<()> {
        let actual = self.kind();
        if actual != expected {
            return Err(Error::WrongKind { expected, actual });
        }
        Ok(())
    }

    fn ensure_lengths(&self, lengths: &[usize]) -> Result<()> {
        let max = self.max_len();
        for &len in lengths {
            if len > max {
                return Err(Error::Overlength { len, max });
            }
        }
        Ok(())
    }
}

/// Output of a backend's tokenizer before segment tagging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTokens {
    pub ids: Vec<u32>,
    pub texts: Vec<String>,
    pub spans: Vec<Span>,
    pub special: Vec<bool>,
}

fn fit_length(seq: TokenizedSequence, max: usize, overflow: Overflow) -> Result<TokenizedSequence> {
    let n = seq.len();
    if n <= max {
        return Ok(seq);
    }
    if overflow == Overflow::Reject {
        return Err(Error::Overlength { len: n, max });
    }
    let excess = n - max;
    let drop: Vec<usize> = seq
        .segments()
        .iter()
        .enumerate()
        .filter(|(i, s)| **s == Segment::Context && !seq.is_special(*i))
        .map(|(i, _)| i)
        .take(excess)
        .collect();
    if drop.len() < excess {
        return Err(Error::Overlength { len: n - drop.len(), max });
    }
    seq.without_positions(&drop)
}
