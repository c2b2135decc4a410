//! Shared domain types and the score-aggregation arithmetic every metric
//! reduces to.
//!
//! A sentence score is a weighted mean of per-token scores. Uniform weights
//! give the plain mean over the sequence; zero weights drop tokens from the
//! target while keeping them as conditioning context.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp bound applied to every probability before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Clamps a probability into `[1e-12, 1 - 1e-12]` so that its log is finite.
pub fn clamp_prob(p: f64) -> f64 {
    if p.is_nan() {
        return PROB_FLOOR;
    }
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Role a token plays in a rendered candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Segment {
    Context,
    Question,
    Answer,
    Template,
}

/// Half-open byte range `[start, end)` into some source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of bytes shared with `other`.
    pub fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn shift(&self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }
}

/// A tokenized candidate text with per-token alignment back to the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    token_ids: Vec<u32>,
    token_texts: Vec<String>,
    char_spans: Vec<Span>,
    segments: Vec<Segment>,
}

impl TokenizedSequence {
    pub fn new(
        token_ids: Vec<u32>,
        token_texts: Vec<String>,
        char_spans: Vec<Span>,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        let n = token_ids.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty token sequence".into()));
        }
        for (what, got) in
            [("token_texts", token_texts.len()), ("char_spans", char_spans.len()), ("segments", segments.len())]
        {
            if got != n {
                return Err(Error::LengthMismatch { what, got, expected: n });
            }
        }
        for pair in char_spans.windows(2) {
            if pair[1].start < pair[0].end || pair[0].start > pair[0].end {
                return Err(Error::InvalidArgument(format!(
                    "character spans overlap or go backwards: {:?} then {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(TokenizedSequence { token_ids, token_texts, char_spans, segments })
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn token_texts(&self) -> &[String] {
        &self.token_texts
    }

    pub fn char_spans(&self) -> &[Span] {
        &self.char_spans
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Indices of tokens that are not special markers.
    pub fn content_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.is_special(i))
    }

    /// Special markers are template tokens that cover no source text.
    pub fn is_special(&self, i: usize) -> bool {
        self.segments[i] == Segment::Template && self.char_spans[i].is_empty()
    }

    /// Drops the tokens at the given (sorted, unique) positions.
    pub(crate) fn without_positions(&self, drop: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|i| drop.binary_search(i).is_err()).collect();
        TokenizedSequence::new(
            keep.iter().map(|&i| self.token_ids[i]).collect(),
            keep.iter().map(|&i| self.token_texts[i].clone()).collect(),
            keep.iter().map(|&i| self.char_spans[i]).collect(),
            keep.iter().map(|&i| self.segments[i]).collect(),
        )
    }
}

/// Whether a larger aggregate means a better candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::LowerBetter => Orientation::HigherBetter,
            Orientation::HigherBetter => Orientation::LowerBetter,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::LowerBetter => a < b,
            Orientation::HigherBetter => a > b,
        }
    }
}

/// Per-token scores in natural-log units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub orientation: Orientation,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, orientation: Orientation) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite token score {v}")));
        }
        Ok(ScoreVector { values, orientation })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Nonnegative aggregation weights, one per scored token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenWeights(Vec<f64>);

impl TokenWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid token weight {w}")));
        }
        Ok(TokenWeights(weights))
    }

    pub fn uniform(n: usize) -> Self {
        TokenWeights(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn has_target(&self) -> bool {
        self.0.iter().any(|w| *w > 0.0)
    }

    pub fn positive_count(&self) -> usize {
        self.0.iter().filter(|w| **w > 0.0).count()
    }
}

/// Weighted mean `Σ wᵢ·sᵢ / Σ wᵢ`.
pub fn aggregate(scores: &ScoreVector, weights: &TokenWeights) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(Error::LengthMismatch { what: "weights", got: weights.len(), expected: scores.len() });
    }
    let total = weights.total();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::EmptyTarget);
    }
    let num: f64 = scores.values.iter().zip(weights.as_slice()).map(|(s, w)| s * w).sum();
    Ok(num / total)
}

/// Score of one answer choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub choice_index: usize,
    pub aggregate: f64,
    pub breakdown: ScoreVector,
    pub weights: TokenWeights,
}

impl CandidateScore {
    pub fn new(choice_index: usize, breakdown: ScoreVector, weights: TokenWeights) -> Result<Self> {
        let aggregate = aggregate(&breakdown, &weights)?;
        Ok(CandidateScore { choice_index, aggregate, breakdown, weights })
    }

    pub fn orientation(&self) -> Orientation {
        self.breakdown.orientation
    }
}

/// Index of the best aggregate; ties go to the lowest index.
pub fn select_index(aggregates: &[f64], orientation: Orientation) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &a) in aggregates.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if orientation.better(a, aggregates[b]) => best = Some(i),
            _ => {}
        }
    }
    best.ok_or(Error::NoCandidates)
}

/// 1-based rank of `gold` under the same ordering and tie rule as
/// [`select_index`].
pub fn rank_index(aggregates: &[f64], gold: usize, orientation: Orientation) -> Result<usize> {
    if aggregates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let g = *aggregates.get(gold).ok_or_else(|| {
        Error::InvalidArgument(format!("gold index {gold} out of range for {} candidates", aggregates.len()))
    })?;
    let ahead =
        aggregates.iter().enumerate().filter(|&(i, &a)| orientation.better(a, g) || (a == g && i < gold)).count();
    Ok(ahead + 1)
}

fn shared_orientation(candidates: &[CandidateScore], orientation: Orientation) -> Result<()> {
    if let Some(c) = candidates.iter().find(|c| c.orientation() != orientation) {
        return Err(Error::InvalidArgument(format!(
            "candidate {} has orientation {:?}, expected {:?}",
            c.choice_index,
            c.orientation(),
            orientation
        )));
    }
    Ok(())
}

/// Picks the winning candidate and returns its choice index.
pub fn select(candidates: &[CandidateScore], orientation: Orientation) -> Result<usize> {
    shared_orientation(candidates, orientation)?;
    let aggs: Vec<f64> = candidates.iter().map(|c| c.aggregate).collect();
    let i = select_index(&aggs, orientation)?;
    Ok(candidates[i].choice_index)
}

/// Rank of the gold choice among `candidates` (1 = gold wins).
pub fn rank_of_gold(candidates: &[CandidateScore], gold: usize, orientation: Orientation) -> Result<usize> {
    shared_orientation(candidates, orientation)?;
    let pos = candidates.iter().position(|c| c.choice_index == gold).ok_or_else(|| {
        if candidates.is_empty() {
            Error::NoCandidates
        } else {
            Error::InvalidArgument(format!("gold choice {gold} not among candidates"))
        }
    })?;
    let aggs: Vec<f64> = candidates.iter().map(|c| c.aggregate).collect();
    rank_index(&aggs, pos, orientation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector::new(v.to_vec(), Orientation::LowerBetter).unwrap()
    }

    fn w(v: &[f64]) -> TokenWeights {
        TokenWeights::new(v.to_vec()).unwrap()
    }

    fn cands(aggs: &[f64], o: Orientation) -> Vec<CandidateScore> {
        aggs.iter()
            .enumerate()
            .map(|(i, &a)| CandidateScore {
                choice_index: i,
                aggregate: a,
                breakdown: ScoreVector::new(vec![a], o).unwrap(),
                weights: TokenWeights::uniform(1),
            })
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&sv(&[0.0, 0.0, 0.0]), &w(&[1.0, 1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(aggregate(&sv(&[1.0, 2.0, 3.0]), &w(&[1.0, 2.0, 1.0])).unwrap(), 2.0);
        assert_eq!(aggregate(&sv(&[1.0, 2.0, 3.0]), &w(&[0.0, 1.0, 1.0])).unwrap(), 2.5);
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate(&sv(&[1.0, 2.0]), &w(&[1.0])), Err(Error::LengthMismatch { .. })));
        assert!(matches!(aggregate(&sv(&[1.0, 2.0]), &w(&[0.0, 0.0])), Err(Error::EmptyTarget)));
        assert!(TokenWeights::new(vec![-1.0]).is_err());
        assert!(ScoreVector::new(vec![f64::INFINITY], Orientation::LowerBetter).is_err());
    }

    #[test]
    fn select_examples() {
        let lo = Orientation::LowerBetter;
        let hi = Orientation::HigherBetter;
        assert_eq!(select(&cands(&[1.2, 0.8], lo), lo).unwrap(), 1);
        assert_eq!(select(&cands(&[1.2, 0.8], hi), hi).unwrap(), 0);
        assert_eq!(select(&cands(&[0.5, 0.5], lo), lo).unwrap(), 0);
        assert_eq!(select(&cands(&[0.5, 0.5], hi), hi).unwrap(), 0);
        assert!(matches!(select(&[], lo), Err(Error::NoCandidates)));
        assert!(select(&cands(&[1.0, 2.0], lo), hi).is_err());
    }

    #[test]
    fn rank_examples() {
        let lo = Orientation::LowerBetter;
        let hi = Orientation::HigherBetter;
        assert_eq!(rank_of_gold(&cands(&[0.9, 0.2, 0.5], hi), 0, hi).unwrap(), 1);
        assert_eq!(rank_of_gold(&cands(&[0.9, 0.2, 0.5], hi), 1, hi).unwrap(), 3);
        assert_eq!(rank_of_gold(&cands(&[0.3, 0.3], lo), 1, lo).unwrap(), 2);
        assert!(matches!(rank_of_gold(&[], 0, lo), Err(Error::NoCandidates)));
        assert!(rank_of_gold(&cands(&[0.3, 0.3], lo), 5, lo).is_err());
    }

    #[test]
    fn clamping_keeps_logs_finite() {
        assert!(clamp_prob(0.0).ln().is_finite());
        assert!(clamp_prob(1.0).ln().is_finite());
        assert!((1.0 - clamp_prob(1.0)).ln().is_finite());
        assert_eq!(clamp_prob(0.5), 0.5);
    }

    #[test]
    fn sequence_invariants() {
        let ok = TokenizedSequence::new(
            vec![1, 2],
            vec!["a".into(), "b".into()],
            vec![Span::new(0, 1), Span::new(2, 3)],
            vec![Segment::Question, Segment::Answer],
        );
        assert!(ok.is_ok());
        let overlapping = TokenizedSequence::new(
            vec![1, 2],
            vec!["a".into(), "b".into()],
            vec![Span::new(0, 2), Span::new(1, 3)],
            vec![Segment::Question, Segment::Answer],
        );
        assert!(overlapping.is_err());
        let short = TokenizedSequence::new(vec![1], vec![], vec![Span::new(0, 1)], vec![Segment::Question]);
        assert!(matches!(short, Err(Error::LengthMismatch { .. })));
        assert!(TokenizedSequence::new(vec![], vec![], vec![], vec![]).is_err());
    }

    fn vec_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40)
            .prop_flat_map(|n| (prop::collection::vec(-50.0f64..50.0, n), prop::collection::vec(0.01f64..10.0, n)))
    }

    proptest! {
        #[test]
        fn uniform_weights_give_arithmetic_mean(v in prop::collection::vec(-50.0f64..50.0, 1..64)) {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let agg = aggregate(&sv(&v), &TokenWeights::uniform(v.len())).unwrap();
            prop_assert!((agg - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        }

        #[test]
        fn aggregate_ignores_weight_scale((v, ws) in vec_and_weights(), k in 0.001f64..1000.0) {
            let a = aggregate(&sv(&v), &w(&ws)).unwrap();
            let scaled: Vec<f64> = ws.iter().map(|x| x * k).collect();
            let b = aggregate(&sv(&v), &w(&scaled)).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn select_is_affine_invariant(
            aggs in prop::collection::vec(-10.0f64..10.0, 1..8),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
            higher in any::<bool>(),
        ) {
            let o = if higher { Orientation::HigherBetter } else { Orientation::LowerBetter };
            let base = select_index(&aggs, o).unwrap();
            let shifted: Vec<f64> = aggs.iter().map(|a| a + shift).collect();
            let scaled: Vec<f64> = aggs.iter().map(|a| a * scale).collect();
            // Rounding can create or break exact ties; only compare when the
            // winner is strictly separated.
            let margin = aggs.iter().enumerate().filter(|(i, _)| *i != base)
                .map(|(_, a)| (a - aggs[base]).abs()).fold(f64::INFINITY, f64::min);
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(select_index(&shifted, o).unwrap(), base);
            prop_assert_eq!(select_index(&scaled, o).unwrap(), base);
        }

        #[test]
        fn rank_one_iff_selected(
            aggs in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 1.5]), 1..6),
            gold_seed in any::<usize>(),
            higher in any::<bool>(),
        ) {
            let o = if higher { Orientation::HigherBetter } else { Orientation::LowerBetter };
            let gold = gold_seed % aggs.len();
            let c = cands(&aggs, o);
            let rank = rank_of_gold(&c, gold, o).unwrap();
            prop_assert_eq!(rank == 1, select(&c, o).unwrap() == gold);
            prop_assert!(rank >= 1 && rank <= aggs.len());
        }
    }
}
