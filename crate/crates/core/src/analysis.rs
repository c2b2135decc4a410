//! Post-hoc analyses: synonym-aggregated confidence, word-level question
//! differences between gold and non-gold attachments, and how those
//! differences depend on word frequency.
//!
//! A word's score is the mean of its sub-token scores (`log p` for masked
//! LMs, `-log p_replaced` for discriminators); the contribution of a
//! question word is its score with the gold choice attached minus its score
//! with the other choice attached.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{word_spans, Backend, BackendKind};
use crate::corpus::{render_candidate, Instance, Rendered};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::metrics::MetricKind;
use crate::score::Span;

/// Allowed deviation of a distribution's total mass from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymSet {
    anchor: String,
    members: BTreeSet<String>,
}

impl SynonymSet {
    /// The anchor is always a member.
    pub fn new(anchor: impl Into<String>, others: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let anchor = anchor.into();
        let mut members: BTreeSet<String> = others.into_iter().map(Into::into).collect();
        members.insert(anchor.clone());
        SynonymSet { anchor, members }
    }

    pub fn anchor(&self) -> &str {
        &self.anchor
    }

    pub fn members(&self) -> &BTreeSet<String> {
        &self.members
    }

    pub fn insert(&mut self, word: impl Into<String>) {
        self.members.insert(word.into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymConfidence {
    pub value: f64,
    /// Members absent from the distribution; they contribute 0.
    pub missing: Vec<String>,
}

/// Checks that `dist` is a probability distribution.
pub fn check_distribution(dist: &BTreeMap<String, f64>) -> Result<()> {
    if let Some((w, p)) = dist.iter().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidArgument(format!("probability of `{w}` is {p}")));
    }
    let total: f64 = dist.values().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidArgument(format!("distribution sums to {total}, expected 1")));
    }
    Ok(())
}

/// Mass of the synonym set under a next-word distribution for one context.
pub fn synonym_confidence(dist: &BTreeMap<String, f64>, syn: &SynonymSet) -> Result<SynonymConfidence> {
    check_distribution(dist)?;
    let mut value = 0.0;
    let mut missing = Vec::new();
    for w in &syn.members {
        match dist.get(w) {
            Some(p) => value += p,
            None => missing.push(w.clone()),
        }
    }
    Ok(SynonymConfidence { value: value.min(1.0), missing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSample {
    pub instance: String,
    /// Lowercased question word.
    pub word: String,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl HistogramBin {
    pub fn center(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffDistribution {
    pub metric: MetricKind,
    pub bin_width: f64,
    pub samples: Vec<DiffSample>,
    pub histogram: Vec<HistogramBin>,
    /// Mean of the raw samples, 0 when there are none.
    pub mean: f64,
    /// Question words with no scored sub-token (trimmed or special only).
    pub skipped_words: usize,
}

fn check_bidirectional(backend: &dyn Backend, metric: MetricKind) -> Result<()> {
    if metric == MetricKind::PplClm || backend.kind() == BackendKind::Clm {
        return Err(Error::Unsupported("question differences need a bidirectional metric (MLM or RTD)".into()));
    }
    backend.ensure_kind(metric.backend_kind())
}

/// Word spans of the question in `rendered.text` coordinates.
fn question_words(rendered: &Rendered) -> Vec<Span> {
    let q = rendered.question;
    word_spans(&rendered.text[q.start..q.end]).into_iter().map(|s| s.shift(q.start)).collect()
}

/// Per-word scores of the question words; `None` where no token covers the word.
fn word_scores(rendered: &Rendered, backend: &dyn Backend, metric: MetricKind) -> Result<Vec<Option<f64>>> {
    let seq = backend.tokenize(&rendered.text, &rendered.segments)?;
    let words = question_words(rendered);
    let covering =
        |w: &Span| -> Vec<usize> { seq.content_positions().filter(|&i| seq.char_spans()[i].overlap(w) > 0).collect() };
    let wanted: BTreeSet<usize> = words.iter().flat_map(covering).collect();
    let mut token_score: BTreeMap<usize, f64> = BTreeMap::new();
    match metric {
        MetricKind::PplMlm => {
            let queries: Vec<_> = wanted.iter().map(|&i| (&seq, i)).collect();
            let lp = backend.mlm_token_logprob_batch(&queries)?;
            token_score.extend(wanted.iter().copied().zip(lp));
        }
        MetricKind::Nrc => {
            let probs = backend.rtd_replacement_probs(&seq)?;
            token_score.extend(wanted.iter().map(|&i| (i, -probs[i].ln())));
        }
        MetricKind::PplClm => unreachable!("rejected by check_bidirectional"),
    }
    Ok(words
        .iter()
        .map(|w| {
            let pos = covering(w);
            (!pos.is_empty()).then(|| pos.iter().map(|i| token_score[i]).sum::<f64>() / pos.len() as f64)
        })
        .collect())
}

fn bin(samples: &[f64], width: f64) -> Vec<HistogramBin> {
    if samples.is_empty() {
        return Vec::new();
    }
    let index = |x: f64| (x / width).floor() as i64;
    let lo = samples.iter().map(|&x| index(x)).min().unwrap();
    let hi = samples.iter().map(|&x| index(x)).max().unwrap();
    let mut bins: Vec<HistogramBin> =
        (lo..=hi).map(|k| HistogramBin { lower: k as f64 * width, upper: (k + 1) as f64 * width, count: 0 }).collect();
    for &x in samples {
        bins[(index(x) - lo) as usize].count += 1;
    }
    bins
}

/// Word-level question score differences over two-choice instances.
pub fn question_diff_distribution(
    instances: &[Instance],
    backend: &dyn Backend,
    metric: MetricKind,
    bin_width: f64,
) -> Result<DiffDistribution> {
    check_bidirectional(backend, metric)?;
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width {bin_width} must be positive")));
    }
    let mut samples = Vec::new();
    let mut skipped_words = 0;
    for inst in instances {
        inst.validate()?;
        if inst.choices.len() != 2 {
            return Err(Error::InvalidInstance {
                id: inst.id.clone(),
                reason: format!("needs 2 choices, has {}", inst.choices.len()),
            });
        }
        let gold = render_candidate(inst, inst.gold)?;
        let other = render_candidate(inst, 1 - inst.gold)?;
        let (gs, os) = (word_scores(&gold, backend, metric)?, word_scores(&other, backend, metric)?);
        for ((span, g), o) in question_words(&gold).iter().zip(gs).zip(os) {
            match (g, o) {
                (Some(g), Some(o)) => samples.push(DiffSample {
                    instance: inst.id.clone(),
                    word: gold.text[span.start..span.end].to_lowercase(),
                    diff: g - o,
                }),
                _ => skipped_words += 1,
            }
        }
    }
    let values: Vec<f64> = samples.iter().map(|s| s.diff).collect();
    let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
    Ok(DiffDistribution { metric, bin_width, histogram: bin(&values, bin_width), samples, mean, skipped_words })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordContribution {
    pub word: String,
    pub frequency: usize,
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBucket {
    /// Plotted frequency: the exact count, or the range midpoint.
    pub x: usize,
    pub lower: usize,
    /// Inclusive upper bound; `None` for the overflow bucket.
    pub upper: Option<usize>,
    /// Distinct words in the bucket.
    pub words: usize,
    /// Contribution samples from those words.
    pub samples: usize,
    pub mean_contribution: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCurve {
    /// Counts 1 to 9, then 10-19, 20-29, 30-39 and 40-49.
    pub buckets: Vec<FrequencyBucket>,
    /// Words seen 50 times or more; not part of the curve.
    pub overflow: FrequencyBucket,
    pub words: Vec<WordContribution>,
}

impl FrequencyCurve {
    pub fn vocabulary_size(&self) -> usize {
        self.words.len()
    }

    pub fn bucket(&self, x: usize) -> Option<&FrequencyBucket> {
        self.buckets.iter().find(|b| b.x == x)
    }
}

fn bucket_bounds() -> Vec<(usize, usize, Option<usize>)> {
    let mut b: Vec<_> = (1..=9).map(|k| (k, k, Some(k))).collect();
    b.extend((1..=4).map(|t| (t * 10 + 5, t * 10, Some(t * 10 + 9))));
    b
}

/// Word counts over question and choice text, lowercased.
pub fn word_frequencies(instances: &[Instance]) -> BTreeMap<String, usize> {
    let mut freq = BTreeMap::new();
    for inst in instances {
        for text in std::iter::once(&inst.question).chain(&inst.choices) {
            for s in word_spans(text) {
                *freq.entry(text[s.start..s.end].to_lowercase()).or_insert(0) += 1;
            }
        }
    }
    freq
}

/// Groups existing difference samples by the frequency of their word.
pub fn frequency_contribution_from(instances: &[Instance], diffs: &DiffDistribution) -> FrequencyCurve {
    let freq = word_frequencies(instances);
    let mut contributions: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &diffs.samples {
        contributions.entry(s.word.as_str()).or_default().push(s.diff);
    }
    let words: Vec<WordContribution> = freq
        .iter()
        .map(|(w, &f)| WordContribution {
            word: w.clone(),
            frequency: f,
            contributions: contributions.get(w.as_str()).cloned().unwrap_or_default(),
        })
        .collect();
    let make = |x: usize, lower: usize, upper: Option<usize>| {
        let members: Vec<&WordContribution> =
            words.iter().filter(|w| w.frequency >= lower && upper.is_none_or(|u| w.frequency <= u)).collect();
        let all: Vec<f64> = members.iter().flat_map(|w| w.contributions.iter().copied()).collect();
        FrequencyBucket {
            x,
            lower,
            upper,
            words: members.len(),
            samples: all.len(),
            mean_contribution: (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64),
        }
    };
    FrequencyCurve {
        buckets: bucket_bounds().into_iter().map(|(x, l, u)| make(x, l, u)).collect(),
        overflow: make(50, 50, None),
        words,
    }
}

/// Frequency buckets of question-word contributions.
pub fn frequency_contribution(
    instances: &[Instance],
    backend: &dyn Backend,
    metric: MetricKind,
) -> Result<FrequencyCurve> {
    let diffs = question_diff_distribution(instances, backend, metric, 0.5)?;
    Ok(frequency_contribution_from(instances, &diffs))
}

/// Data for one figure.
#[derive(Debug, Clone, Copy)]
pub enum PlotData<'a> {
    Ranks(&'a EvalReport),
    Differences(&'a DiffDistribution),
    Frequency(&'a FrequencyCurve),
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the CSV series for one figure into `dir`. Floats use the shortest
/// representation that parses back to the same value.
pub fn emit_plot_data(data: PlotData<'_>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match data {
        PlotData::Ranks(report) => {
            let rows: Vec<Vec<String>> = report
                .rank_histogram
                .iter()
                .enumerate()
                .map(|(i, c)| vec![(i + 1).to_string(), c.to_string()])
                .collect();
            let path = dir.join("ranks.csv");
            write_csv(&path, &["rank", "count"], &rows)?;
            written.push(path);
        }
        PlotData::Differences(d) => {
            let rows: Vec<Vec<String>> =
                d.histogram.iter().map(|b| vec![b.center().to_string(), b.count.to_string()]).collect();
            let path = dir.join("diff_hist.csv");
            write_csv(&path, &["x", "y"], &rows)?;
            written.push(path);
            let path = dir.join("diff_mean.csv");
            write_csv(&path, &["x", "count"], &[vec![d.mean.to_string(), d.samples.len().to_string()]])?;
            written.push(path);
            let rows: Vec<Vec<String>> =
                d.samples.iter().map(|s| vec![s.instance.clone(), s.word.clone(), s.diff.to_string()]).collect();
            let path = dir.join("diff_samples.csv");
            write_csv(&path, &["instance", "word", "diff"], &rows)?;
            written.push(path);
        }
        PlotData::Frequency(f) => {
            let rows: Vec<Vec<String>> = f
                .buckets
                .iter()
                .filter_map(|b| {
                    b.mean_contribution.map(|m| vec![b.x.to_string(), m.to_string(), b.samples.to_string()])
                })
                .collect();
            let path = dir.join("freq_contrib.csv");
            write_csv(&path, &["x", "y", "count"], &rows)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Reads a numeric CSV series back (header skipped).
pub fn read_series(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.iter()
                .map(|v| v.parse::<f64>().map_err(|_| Error::schema(path, format!("`{v}` is not a number"))))
                .collect()
        })
        .collect()
}
