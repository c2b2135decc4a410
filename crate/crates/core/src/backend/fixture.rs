//! Deterministic lookup-table backend.
//!
//! A fixture file stores, per token sequence, the probabilities a real model
//! would have produced:
//!
//! ```json
//! {"entries": [{"tokens": ["a", "b"], "clm": [0.5], "mlm": {"0": -0.69}, "rtd": [0.9, 0.1]}]}
//! ```
//!
//! `clm` holds next-token probabilities for positions `1..n`, `mlm` maps a
//! position to the log-probability of its token when masked, and `rtd` holds
//! replacement probabilities. Text is split on word characters and single
//! punctuation marks; no special markers are added. Queries for sequences
//! that are not in the table fail instead of falling back to a default.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, CallCounter, Overflow, RawTokens};
use crate::error::{Error, Result};
use crate::score::{Span, TokenizedSequence};

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]").unwrap());

const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<BackendKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    pub entries: Vec<FixtureEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clm: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlm: Option<BTreeMap<usize, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtd: Option<Vec<f64>>,
}

impl Fixture {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Splits text the same way the fixture backend does.
    pub fn split_text(text: &str) -> Vec<String> {
        TOKEN.find_iter(text).map(|m| m.as_str().to_string()).collect()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (k, e) in self.entries.iter().enumerate() {
            let n = e.tokens.len();
            let bad = |msg: String| Error::Fixture(format!("entry {k} {:?}: {msg}", e.tokens));
            if n == 0 {
                return Err(bad("no tokens".into()));
            }
            if !seen.insert(&e.tokens) {
                return Err(bad("duplicate token sequence".into()));
            }
            let is_prob = |p: &f64| (0.0..=1.0).contains(p);
            if let Some(clm) = &e.clm {
                if clm.len() != n - 1 {
                    return Err(bad(format!("clm has {} values, expected {}", clm.len(), n - 1)));
                }
                if !clm.iter().all(is_prob) {
                    return Err(bad("clm values must be probabilities".into()));
                }
            }
            if let Some(rtd) = &e.rtd {
                if rtd.len() != n {
                    return Err(bad(format!("rtd has {} values, expected {n}", rtd.len())));
                }
                if !rtd.iter().all(is_prob) {
                    return Err(bad("rtd values must be probabilities".into()));
                }
            }
            if let Some(mlm) = &e.mlm {
                for (&pos, &lp) in mlm {
                    if pos >= n {
                        return Err(bad(format!("mlm position {pos} out of range")));
                    }
                    if lp.is_nan() || lp > 0.0 {
                        return Err(bad(format!("mlm value {lp} at {pos} is not a log-probability")));
                    }
                }
            }
        }
        Ok(())
    }
}

pub struct FixtureBackend {
    kind: BackendKind,
    max_len: usize,
    overflow: Overflow,
    vocab: HashMap<String, u32>,
    entries: HashMap<Vec<String>, FixtureEntry>,
    counter: CallCounter,
    label: String,
}

impl FixtureBackend {
    /// Builds a backend of the given kind. A `kind` recorded in the fixture
    /// must agree with the requested one.
    pub fn new(fixture: Fixture, kind: BackendKind) -> Result<Self> {
        fixture.validate()?;
        if let Some(k) = fixture.kind {
            if k != kind {
                return Err(Error::WrongKind { expected: kind, actual: k });
            }
        }
        let words: BTreeSet<&String> = fixture.entries.iter().flat_map(|e| &e.tokens).collect();
        // id 0 is reserved for tokens the table never mentions
        let vocab = words.into_iter().enumerate().map(|(i, w)| (w.clone(), i as u32 + 1)).collect();
        let max_len = fixture.max_len.unwrap_or(DEFAULT_MAX_LEN);
        let entries = fixture.entries.into_iter().map(|e| (e.tokens.clone(), e)).collect();
        Ok(FixtureBackend {
            kind,
            max_len,
            overflow: Overflow::Reject,
            vocab,
            entries,
            counter: CallCounter::new(),
            label: format!("fixture-{}", kind.to_string().to_lowercase()),
        })
    }

    pub fn load(path: impl AsRef<Path>, kind: BackendKind) -> Result<Self> {
        let path = path.as_ref();
        let mut backend = Self::new(Fixture::read(path)?, kind)?;
        if let Some(stem) = path.file_stem() {
            backend.label = format!("fixture:{}", stem.to_string_lossy());
        }
        Ok(backend)
    }

    pub fn with_overflow(mut self, overflow: Overflow) -> Self {
        self.overflow = overflow;
        self
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    fn entry(&self, seq: &TokenizedSequence) -> Result<&FixtureEntry> {
        self.entries.get(seq.token_texts()).ok_or_else(|| Error::FixtureMiss(seq.token_texts().to_vec()))
    }

    fn missing(seq: &TokenizedSequence, what: &str) -> Error {
        Error::Fixture(format!("entry {:?} has no {what} values", seq.token_texts()))
    }
}

impl Backend for FixtureBackend {
    fn kind(&self) -> BackendKind {
        self.kind
    }

    fn name(&self) -> String {
        self.label.clone()
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn overflow(&self) -> Overflow {
        self.overflow
    }

    fn counter(&self) -> &CallCounter {
        &self.counter
    }

    fn split(&self, text: &str) -> Result<RawTokens> {
        let mut raw = RawTokens::default();
        for m in TOKEN.find_iter(text) {
            raw.ids.push(self.vocab.get(m.as_str()).copied().unwrap_or(0));
            raw.texts.push(m.as_str().to_string());
            raw.spans.push(Span::new(m.start(), m.end()));
            raw.special.push(false);
        }
        if raw.ids.is_empty() {
            return Err(Error::InvalidArgument(format!("text {text:?} has no tokens")));
        }
        Ok(raw)
    }

    fn run_clm(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>> {
        seqs.iter()
            .map(|seq| {
                let probs = self.entry(seq)?.clm.as_ref().ok_or_else(|| Self::missing(seq, "clm"))?;
                Ok(probs.iter().map(|&p| crate::score::clamp_prob(p).ln()).collect())
            })
            .collect()
    }

    fn run_mlm(&self, queries: &[(&TokenizedSequence, usize)]) -> Result<Vec<f64>> {
        queries
            .iter()
            .map(|&(seq, pos)| {
                let table = self.entry(seq)?.mlm.as_ref().ok_or_else(|| Self::missing(seq, "mlm"))?;
                table
                    .get(&pos)
                    .copied()
                    .ok_or_else(|| Error::Fixture(format!("entry {:?} has no mlm value at {pos}", seq.token_texts())))
            })
            .collect()
    }

    fn run_rtd(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>> {
        seqs.iter()
            .map(|seq| {
                let probs = self.entry(seq)?.rtd.as_ref().ok_or_else(|| Self::missing(seq, "rtd"))?;
                Ok(probs.clone())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::Segment;

    fn one_span(text: &str) -> Vec<(Span, Segment)> {
        vec![(Span::new(0, text.len()), Segment::Question)]
    }

    fn backend(kind: BackendKind, entries: Vec<FixtureEntry>) -> FixtureBackend {
        FixtureBackend::new(Fixture { entries, ..Default::default() }, kind).unwrap()
    }

    fn entry(tokens: &[&str]) -> FixtureEntry {
        FixtureEntry { tokens: tokens.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    #[test]
    fn tokenize_single_segment() {
        let b = backend(BackendKind::Rtd, vec![]);
        let text = "dog is a animal .";
        let seq = b.tokenize(text, &one_span(text)).unwrap();
        assert_eq!(seq.len(), 5);
        assert!(seq.segments().iter().all(|s| *s == Segment::Question));
        assert_eq!(seq.char_spans()[3], Span::new(9, 15));
    }

    #[test]
    fn rtd_pass_through_and_counter() {
        let mut e = entry(&["a", "b"]);
        e.rtd = Some(vec![0.9, 0.1]);
        let b = backend(BackendKind::Rtd, vec![e]);
        let seq = b.tokenize("a b", &one_span("a b")).unwrap();
        let before = b.forwards();
        assert_eq!(b.rtd_replacement_probs(&seq).unwrap(), vec![0.9, 0.1]);
        assert_eq!(b.forwards() - before, 1);
    }

    #[test]
    fn rtd_outputs_are_clamped_inside_unit_interval() {
        let mut e = entry(&["a", "b"]);
        e.rtd = Some(vec![0.0, 1.0]);
        let b = backend(BackendKind::Rtd, vec![e]);
        let seq = b.tokenize("a b", &one_span("a b")).unwrap();
        let p = b.rtd_replacement_probs(&seq).unwrap();
        assert!(p.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn clm_logprobs() {
        let mut e = entry(&["x", "y", "z"]);
        e.clm = Some(vec![0.25, 0.5]);
        let mut certain = entry(&["p", "q"]);
        certain.clm = Some(vec![1.0]);
        let b = backend(BackendKind::Clm, vec![e, certain]);
        let seq = b.tokenize("x y z", &one_span("x y z")).unwrap();
        let lp = b.clm_token_logprobs(&seq).unwrap();
        assert!((lp[0] - 0.25f64.ln()).abs() < 1e-15);
        assert!((lp[1] - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(b.forwards(), 1);
        let seq = b.tokenize("p q", &one_span("p q")).unwrap();
        assert!(b.clm_token_logprobs(&seq).unwrap()[0].abs() < 1e-11);
    }

    #[test]
    fn mlm_one_forward_per_position() {
        let mut e = entry(&["x", "y"]);
        e.mlm = Some(BTreeMap::from([(0, 0.0), (1, 0.5f64.ln())]));
        let b = backend(BackendKind::Mlm, vec![e]);
        let seq = b.tokenize("x y", &one_span("x y")).unwrap();
        assert_eq!(b.mlm_token_logprob(&seq, 0).unwrap(), 0.0);
        assert!((b.mlm_token_logprob(&seq, 1).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(b.forwards(), 2);
        assert!(matches!(b.mlm_token_logprob(&seq, 2), Err(Error::BadPosition(2))));
    }

    #[test]
    fn wrong_kind_errors() {
        let mut e = entry(&["a", "b"]);
        e.rtd = Some(vec![0.5, 0.5]);
        e.clm = Some(vec![0.5]);
        let b = backend(BackendKind::Rtd, vec![e]);
        let seq = b.tokenize("a b", &one_span("a b")).unwrap();
        assert!(matches!(b.clm_token_logprobs(&seq), Err(Error::WrongKind { .. })));
        assert!(matches!(b.mlm_token_logprob(&seq, 0), Err(Error::WrongKind { .. })));
        assert_eq!(b.forwards(), 0);
    }

    #[test]
    fn lookup_miss_is_an_error() {
        let b = backend(BackendKind::Rtd, vec![]);
        let seq = b.tokenize("never seen", &one_span("never seen")).unwrap();
        assert!(matches!(b.rtd_replacement_probs(&seq), Err(Error::FixtureMiss(_))));
    }

    #[test]
    fn malformed_fixtures_rejected() {
        let mut e = entry(&["a", "b"]);
        e.rtd = Some(vec![0.5]);
        assert!(FixtureBackend::new(Fixture { entries: vec![e], ..Default::default() }, BackendKind::Rtd).is_err());
        let mut e = entry(&["a", "b"]);
        e.clm = Some(vec![1.5]);
        assert!(FixtureBackend::new(Fixture { entries: vec![e], ..Default::default() }, BackendKind::Clm).is_err());
        let dup = vec![entry(&["a"]), entry(&["a"])];
        assert!(FixtureBackend::new(Fixture { entries: dup, ..Default::default() }, BackendKind::Clm).is_err());
        let tagged = Fixture { kind: Some(BackendKind::Mlm), ..Default::default() };
        assert!(FixtureBackend::new(tagged, BackendKind::Rtd).is_err());
        assert!(serde_json::from_str::<Fixture>("{\"entries\": 3}").is_err());
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.json");
        let mut e = entry(&["the", "cat", "sat"]);
        e.rtd = Some(vec![0.125, 0.3, 0.875]);
        e.mlm = Some(BTreeMap::from([(1, -0.25)]));
        let fx = Fixture { entries: vec![e], ..Default::default() };
        fx.write(&path).unwrap();
        assert_eq!(Fixture::read(&path).unwrap(), fx);
        let b = FixtureBackend::load(&path, BackendKind::Rtd).unwrap();
        let seq = b.tokenize("the cat sat", &one_span("the cat sat")).unwrap();
        assert_eq!(b.rtd_replacement_probs(&seq).unwrap(), vec![0.125, 0.3, 0.875]);
    }

    #[test]
    fn repeated_queries_are_bitwise_identical() {
        let mut e = entry(&["a", "b"]);
        e.rtd = Some(vec![0.3, 0.7]);
        let b = backend(BackendKind::Rtd, vec![e]);
        let seq = b.tokenize("a b", &one_span("a b")).unwrap();
        let x = b.rtd_replacement_probs(&seq).unwrap();
        let y = b.rtd_replacement_probs(&seq).unwrap();
        assert_eq!(
            x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
