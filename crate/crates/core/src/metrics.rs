//! Sentence metrics and token-weight construction.
//!
//! * `PPL_CLM`: mean of `-log p(wᵢ | w₁..wᵢ₋₁)`, lower is better.
//! * `PPL_MLM`: mean of `-log p(wᵢ | everything but wᵢ)`, lower is better.
//! * `NRC`: mean of `-log p_replaced(wᵢ)` from a replaced-token detector,
//!   higher is better.
//!
//! All three are weighted means over per-token scores, so target
//! restriction, stop-word removal and concept boosting are all expressed as
//! [`TokenWeights`].

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{word_spans, Backend, BackendKind};
use crate::corpus::{render_candidate, Rendered};
use crate::error::{Error, Result};
use crate::score::{clamp_prob, CandidateScore, Orientation, ScoreVector, Segment, TokenWeights, TokenizedSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricKind {
    PplClm,
    PplMlm,
    Nrc,
}

impl MetricKind {
    pub fn backend_kind(self) -> BackendKind {
        match self {
            MetricKind::PplClm => BackendKind::Clm,
            MetricKind::PplMlm => BackendKind::Mlm,
            MetricKind::Nrc => BackendKind::Rtd,
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            MetricKind::PplClm | MetricKind::PplMlm => Orientation::LowerBetter,
            MetricKind::Nrc => Orientation::HigherBetter,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            MetricKind::PplClm => "ppl-clm",
            MetricKind::PplMlm => "ppl-mlm",
            MetricKind::Nrc => "nrc",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::PplClm => "PPL_CLM",
            MetricKind::PplMlm => "PPL_MLM",
            MetricKind::Nrc => "NRC",
        })
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ppl-clm" => Ok(MetricKind::PplClm),
            "ppl-mlm" => Ok(MetricKind::PplMlm),
            "nrc" => Ok(MetricKind::Nrc),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// How the discriminator output is read when forming NRC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtdReading {
    /// The head emits P(replaced); NRC = mean(-log P(replaced)), higher wins.
    #[default]
    Replaced,
    /// Alternative reading: score with P(original) = 1 - P(replaced), so the
    /// mean negative log is lower for intact text and lower wins.
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Target {
    Q,
    A,
    Qa,
}

impl Target {
    pub fn includes(self, seg: Segment) -> bool {
        matches!((self, seg), (Target::Q | Target::Qa, Segment::Question) | (Target::A | Target::Qa, Segment::Answer))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Q => "Q",
            Target::A => "A",
            Target::Qa => "QA",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q" => Ok(Target::Q),
            "a" => Ok(Target::A),
            "qa" => Ok(Target::Qa),
            other => Err(Error::InvalidArgument(format!("unknown target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPolicy {
    pub target: Target,
    pub stopword_removal: bool,
    pub concept_delta_w: f64,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        WeightPolicy { target: Target::Qa, stopword_removal: false, concept_delta_w: 0.0 }
    }
}

impl WeightPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.concept_delta_w.is_finite() && self.concept_delta_w >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "concept weight boost must be >= 0, got {}",
                self.concept_delta_w
            )));
        }
        Ok(())
    }

    /// Boosts above 1.0 are allowed but fall outside the usual sweep range.
    pub fn is_out_of_sweep_range(&self) -> bool {
        self.concept_delta_w > 1.0
    }
}

/// Case-insensitive whole-word stop list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

/// Articles and pronouns, one lowercase word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en_v1.txt");

impl StopWords {
    pub fn parse(text: &str) -> Self {
        StopWords(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

fn check_weights(n: usize, weights: &TokenWeights) -> Result<()> {
    if weights.len() != n {
        return Err(Error::LengthMismatch { what: "weights", got: weights.len(), expected: n });
    }
    if !weights.has_target() {
        return Err(Error::EmptyTarget);
    }
    Ok(())
}

/// Causal perplexity. `weights` has one entry per predicted position, i.e.
/// `n - 1` for an `n`-token sequence; the first token is never scored.
pub fn ppl_clm(seq: &TokenizedSequence, backend: &dyn Backend, weights: &TokenWeights) -> Result<CandidateScore> {
    backend.ensure_kind(BackendKind::Clm)?;
    check_weights(seq.len().saturating_sub(1), weights)?;
    let logprobs = backend.clm_token_logprobs(seq)?;
    clm_score(&logprobs, weights.clone())
}

pub(crate) fn clm_score(logprobs: &[f64], weights: TokenWeights) -> Result<CandidateScore> {
    let values = logprobs.iter().map(|lp| -lp).collect();
    CandidateScore::new(0, ScoreVector::new(values, Orientation::LowerBetter)?, weights)
}

/// Masked-LM pseudo-perplexity. Only positions with positive weight are
/// masked and queried, one forward each; the rest get a zero breakdown entry.
pub fn ppl_mlm(seq: &TokenizedSequence, backend: &dyn Backend, weights: &TokenWeights) -> Result<CandidateScore> {
    backend.ensure_kind(BackendKind::Mlm)?;
    check_weights(seq.len(), weights)?;
    let positions = mlm_positions(seq, weights)?;
    let queries: Vec<_> = positions.iter().map(|&i| (seq, i)).collect();
    let logprobs = backend.mlm_token_logprob_batch(&queries)?;
    mlm_score(seq.len(), &positions, &logprobs, weights.clone())
}

pub(crate) fn mlm_positions(seq: &TokenizedSequence, weights: &TokenWeights) -> Result<Vec<usize>> {
    let positions: Vec<usize> = (0..seq.len()).filter(|&i| weights.as_slice()[i] > 0.0).collect();
    if let Some(&i) = positions.iter().find(|&&i| seq.is_special(i)) {
        return Err(Error::BadPosition(i));
    }
    Ok(positions)
}

pub(crate) fn mlm_score(
    n: usize,
    positions: &[usize],
    logprobs: &[f64],
    weights: TokenWeights,
) -> Result<CandidateScore> {
    let mut values = vec![0.0; n];
    for (&i, lp) in positions.iter().zip(logprobs) {
        values[i] = -lp;
    }
    CandidateScore::new(0, ScoreVector::new(values, Orientation::LowerBetter)?, weights)
}

/// Non-Replacement Confidence: weighted mean of `-log p_replaced`.
pub fn nrc(seq: &TokenizedSequence, backend: &dyn Backend, weights: &TokenWeights) -> Result<CandidateScore> {
    nrc_with(seq, backend, weights, RtdReading::Replaced)
}

pub fn nrc_with(
    seq: &TokenizedSequence,
    backend: &dyn Backend,
    weights: &TokenWeights,
    reading: RtdReading,
) -> Result<CandidateScore> {
    backend.ensure_kind(BackendKind::Rtd)?;
    check_weights(seq.len(), weights)?;
    let probs = backend.rtd_replacement_probs(seq)?;
    nrc_score(&probs, weights.clone(), reading)
}

pub(crate) fn nrc_score(replaced: &[f64], weights: TokenWeights, reading: RtdReading) -> Result<CandidateScore> {
    let (values, orientation) = match reading {
        RtdReading::Replaced => (replaced.iter().map(|&p| -clamp_prob(p).ln()).collect(), Orientation::HigherBetter),
        RtdReading::Original => {
            (replaced.iter().map(|&p| -clamp_prob(1.0 - p).ln()).collect(), Orientation::LowerBetter)
        }
    };
    CandidateScore::new(0, ScoreVector::new(values, orientation)?, weights)
}

/// Outcome of weight construction beyond the weights themselves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WeightNotes {
    /// A concept boost was requested but the candidate has no concept span.
    pub concept_missing: bool,
}

/// Builds per-token weights for `seq`, which must have been tokenized from
/// `rendered.text`.
///
/// Tokens outside the target segments get 0 (CONTEXT and TEMPLATE are never
/// targets). With stop-word removal, tokens whose word is a stop word get 0.
/// Tokens overlapping the concept span are multiplied by `1 + ΔW`.
pub fn build_weights(
    seq: &TokenizedSequence,
    rendered: &Rendered,
    policy: &WeightPolicy,
    stopwords: &StopWords,
) -> Result<(TokenWeights, WeightNotes)> {
    policy.validate()?;
    let mut notes = WeightNotes::default();
    let words = if policy.stopword_removal { word_spans(&rendered.text) } else { Vec::new() };
    let concept = if policy.concept_delta_w > 0.0 {
        if rendered.concept.is_none() {
            notes.concept_missing = true;
        }
        rendered.concept
    } else {
        None
    };

    let weights = seq
        .segments()
        .iter()
        .zip(seq.char_spans())
        .enumerate()
        .map(|(i, (&seg, span))| {
            if seq.is_special(i) || !policy.target.includes(seg) {
                return 0.0;
            }
            if policy.stopword_removal {
                if let Some(word) = words.iter().find(|w| w.overlap(span) > 0) {
                    if stopwords.contains(&rendered.text[word.start..word.end]) {
                        return 0.0;
                    }
                }
            }
            match concept {
                Some(c) if c.overlap(span) > 0 => 1.0 + policy.concept_delta_w,
                _ => 1.0,
            }
        })
        .collect();
    let weights = TokenWeights::new(weights)?;
    if !weights.has_target() {
        return Err(Error::EmptyTarget);
    }
    Ok((weights, notes))
}

/// Everything needed to turn candidate texts into scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    pub metric: MetricKind,
    pub policy: WeightPolicy,
    pub stopwords: StopWords,
    pub rtd_reading: RtdReading,
}

impl Scorer {
    pub fn new(metric: MetricKind, policy: WeightPolicy) -> Self {
        Scorer { metric, policy, stopwords: StopWords::default(), rtd_reading: RtdReading::default() }
    }

    pub fn orientation(&self) -> Orientation {
        match (self.metric, self.rtd_reading) {
            (MetricKind::Nrc, RtdReading::Original) => Orientation::LowerBetter,
            (m, _) => m.orientation(),
        }
    }

    /// Rejects metric/backend/target combinations that cannot be scored.
    pub fn check(&self, backend: &dyn Backend) -> Result<()> {
        self.policy.validate()?;
        let expected = self.metric.backend_kind();
        if backend.kind() != expected {
            return Err(Error::WrongKind { expected, actual: backend.kind() });
        }
        if self.metric == MetricKind::PplClm && self.policy.target == Target::Q {
            // A left-to-right model scores the question before seeing the
            // answer, so every candidate would tie.
            return Err(Error::Unsupported("Q-only target unsupported for CLM".into()));
        }
        Ok(())
    }
}

/// A candidate ready for the backend.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub seq: TokenizedSequence,
    pub weights: TokenWeights,
    pub notes: WeightNotes,
}

pub(crate) fn prepare(rendered: &Rendered, scorer: &Scorer, backend: &dyn Backend) -> Result<Prepared> {
    let seq = backend.tokenize(&rendered.text, &rendered.segments)?;
    let (mut weights, notes) = build_weights(&seq, rendered, &scorer.policy, &scorer.stopwords)?;
    if scorer.metric == MetricKind::PplClm {
        // Position 0 has no prediction.
        weights = TokenWeights::new(weights.as_slice()[1..].to_vec())?;
        if !weights.has_target() {
            return Err(Error::EmptyTarget);
        }
    }
    Ok(Prepared { seq, weights, notes })
}

/// Renders, tokenizes, weights and scores one answer choice.
pub fn score_candidate(
    instance: &crate::corpus::Instance,
    choice_index: usize,
    scorer: &Scorer,
    backend: &dyn Backend,
) -> Result<CandidateScore> {
    scorer.check(backend)?;
    let rendered = render_candidate(instance, choice_index)?;
    let prepared = prepare(&rendered, scorer, backend)?;
    let mut score = score_prepared(&[prepared], scorer, backend, usize::MAX)?.pop().expect("one candidate in, one out");
    score.choice_index = choice_index;
    Ok(score)
}

/// Scores prepared candidates with batched backend calls of at most
/// `batch` rows.
pub(crate) fn score_prepared(
    prepared: &[Prepared],
    scorer: &Scorer,
    backend: &dyn Backend,
    batch: usize,
) -> Result<Vec<CandidateScore>> {
    let batch = batch.max(1);
    let seqs: Vec<&TokenizedSequence> = prepared.iter().map(|p| &p.seq).collect();
    let mut out = Vec::with_capacity(prepared.len());
    match scorer.metric {
        MetricKind::PplClm => {
            let mut logprobs = Vec::with_capacity(seqs.len());
            for chunk in seqs.chunks(batch) {
                logprobs.extend(backend.clm_token_logprobs_batch(chunk)?);
            }
            for (p, lp) in prepared.iter().zip(&logprobs) {
                out.push(clm_score(lp, p.weights.clone())?);
            }
        }
        MetricKind::PplMlm => {
            let positions: Vec<Vec<usize>> =
                prepared.iter().map(|p| mlm_positions(&p.seq, &p.weights)).collect::<Result<_>>()?;
            let queries: Vec<(&TokenizedSequence, usize)> =
                prepared.iter().zip(&positions).flat_map(|(p, pos)| pos.iter().map(move |&i| (&p.seq, i))).collect();
            let mut logprobs = Vec::with_capacity(queries.len());
            for chunk in queries.chunks(batch) {
                logprobs.extend(backend.mlm_token_logprob_batch(chunk)?);
            }
            let mut offset = 0;
            for (p, pos) in prepared.iter().zip(&positions) {
                let lp = &logprobs[offset..offset + pos.len()];
                offset += pos.len();
                out.push(mlm_score(p.seq.len(), pos, lp, p.weights.clone())?);
            }
        }
        MetricKind::Nrc => {
            let mut probs = Vec::with_capacity(seqs.len());
            for chunk in seqs.chunks(batch) {
                probs.extend(backend.rtd_replacement_probs_batch(chunk)?);
            }
            for (p, pr) in prepared.iter().zip(&probs) {
                out.push(nrc_score(pr, p.weights.clone(), scorer.rtd_reading)?);
            }
        }
    }
    Ok(out)
}
