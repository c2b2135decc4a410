//! Dataset-level evaluation: selection accuracy, rank distributions,
//! paired significance tests and the two weighting ablations.

mod ablation;
mod report;
mod significance;
pub mod tables;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::corpus::{render_candidate, Instance};
use crate::error::{Error, Result};
use crate::metrics::{prepare, score_prepared, MetricKind, Prepared, RtdReading, Scorer, Target};
use crate::score::{rank_index, select_index, Orientation};

pub use ablation::{ablate_stopwords, sweep_delta_w, DeltaWSweep, StopwordAblation, SweepPoint, DEFAULT_DELTA_W_GRID};
pub use report::{read_report, write_report_csv, write_report_json};
pub use significance::{
    exact_p_value, monte_carlo_p_value, significance, SignificanceMethod, SignificanceResult, EXACT_LIMIT, RESAMPLES,
};

/// Warning counter keys.
pub const WARN_EMPTY_TARGET: &str = "empty_target";
pub const WARN_CONCEPT_MISSING: &str = "concept_missing";
pub const WARN_DELTA_W_OUT_OF_RANGE: &str = "delta_w_out_of_range";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Maximum rows per backend call.
    pub batch: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { workers: 1, batch: 16 }
    }
}

/// How instances are turned into correctness decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Pick the best-scoring choice.
    MultipleChoice,
    /// Score each item once; the better-scoring half is labelled true.
    BinaryMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    /// One aggregate per choice; `None` where the target was empty. Binary
    /// probes carry a single entry.
    pub aggregates: Vec<Option<f64>>,
    pub selected: Option<usize>,
    pub gold: usize,
    pub rank: usize,
    pub empty_target: bool,
}

impl InstanceRecord {
    pub fn correct(&self) -> bool {
        self.rank == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    #[serde(default)]
    pub split: Option<String>,
    pub backend: String,
    pub metric: MetricKind,
    pub target: Target,
    pub stopword_removal: bool,
    pub concept_delta_w: f64,
    pub rtd_reading: RtdReading,
    pub orientation: Orientation,
    pub protocol: Protocol,
    pub per_instance: Vec<InstanceRecord>,
    pub accuracy: f64,
    /// `rank_histogram[r - 1]` counts instances whose gold choice ranked `r`.
    pub rank_histogram: Vec<usize>,
    pub warnings: BTreeMap<String, u64>,
    /// Sequence forwards consumed by this run.
    pub forwards: u64,
}

impl EvalReport {
    pub fn len(&self) -> usize {
        self.per_instance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_instance.is_empty()
    }

    pub fn correctness(&self) -> Vec<bool> {
        self.per_instance.iter().map(InstanceRecord::correct).collect()
    }

    /// Accuracy recomputed from the per-instance records.
    pub fn recomputed_accuracy(&self) -> f64 {
        accuracy_of(&self.per_instance)
    }

    /// Share of instances at each rank.
    pub fn rank_fractions(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.rank_histogram.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn warning(&self, key: &str) -> u64 {
        self.warnings.get(key).copied().unwrap_or(0)
    }

    /// Short label like `NRC[fixture-rtd] QA`.
    pub fn label(&self) -> String {
        format!("{}[{}] {}", self.metric, self.backend, self.target)
    }
}

fn accuracy_of(records: &[InstanceRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64
}

/// One bucket per possible rank, including ranks nobody reached.
fn histogram(records: &[InstanceRecord], width: usize) -> Vec<usize> {
    let max_rank = records.iter().map(|r| r.rank).max().unwrap_or(0);
    let mut hist = vec![0; max_rank.max(width)];
    for r in records {
        hist[r.rank - 1] += 1;
    }
    hist
}

struct Scored {
    record: InstanceRecord,
    concept_missing: bool,
}

fn score_instance(inst: &Instance, scorer: &Scorer, backend: &dyn Backend, batch: usize) -> Result<Scored> {
    inst.validate()?;
    let mut prepared: Vec<Option<Prepared>> = Vec::with_capacity(inst.choices.len());
    for c in 0..inst.choices.len() {
        let rendered = render_candidate(inst, c)?;
        match prepare(&rendered, scorer, backend) {
            Ok(p) => prepared.push(Some(p)),
            Err(Error::EmptyTarget) => prepared.push(None),
            Err(e) => return Err(e),
        }
    }
    let concept_missing = prepared.iter().flatten().any(|p| p.notes.concept_missing);
    let ready: Vec<Prepared> = prepared.iter().flatten().cloned().collect();
    let mut scores = score_prepared(&ready, scorer, backend, batch)?.into_iter();
    let aggregates: Vec<Option<f64>> = prepared
        .iter()
        .map(|p| p.as_ref().map(|_| scores.next().expect("one score per prepared candidate").aggregate))
        .collect();

    let n = inst.choices.len();
    let record = if aggregates.iter().any(Option::is_none) {
        InstanceRecord { id: inst.id.clone(), aggregates, selected: None, gold: inst.gold, rank: n, empty_target: true }
    } else {
        let values: Vec<f64> = aggregates.iter().map(|a| a.unwrap()).collect();
        let orientation = scorer.orientation();
        InstanceRecord {
            id: inst.id.clone(),
            selected: Some(select_index(&values, orientation)?),
            rank: rank_index(&values, inst.gold, orientation)?,
            aggregates,
            gold: inst.gold,
            empty_target: false,
        }
    };
    Ok(Scored { record, concept_missing })
}

/// Scores a binary probe item: the prompt alone, one sequence per item.
fn score_probe(inst: &Instance, scorer: &Scorer, backend: &dyn Backend, batch: usize) -> Result<Scored> {
    let rendered = render_candidate(inst, 0)?;
    let aggregate = match prepare(&rendered, scorer, backend) {
        Ok(p) => Some(score_prepared(&[p], scorer, backend, batch)?[0].aggregate),
        Err(Error::EmptyTarget) => None,
        Err(e) => return Err(e),
    };
    Ok(Scored {
        record: InstanceRecord {
            id: inst.id.clone(),
            aggregates: vec![aggregate],
            selected: None,
            gold: inst.gold,
            rank: 2,
            empty_target: aggregate.is_none(),
        },
        concept_missing: false,
    })
}

/// Labels the better-scoring half of the probes as true (choice 1).
fn decide_median(records: &mut [InstanceRecord], orientation: Orientation) {
    let mut order: Vec<usize> = (0..records.len()).filter(|&i| records[i].aggregates[0].is_some()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (records[a].aggregates[0].unwrap(), records[b].aggregates[0].unwrap());
        let ord = match orientation {
            Orientation::HigherBetter => y.total_cmp(&x),
            Orientation::LowerBetter => x.total_cmp(&y),
        };
        ord.then(a.cmp(&b))
    });
    let positives = records.len() / 2;
    for (k, &i) in order.iter().enumerate() {
        let label = usize::from(k < positives);
        records[i].selected = Some(label);
        records[i].rank = if label == records[i].gold { 1 } else { 2 };
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `scorer` over every instance and assembles a report in source order.
///
/// Instances where any candidate has an empty target are counted wrong and
/// flagged. Items of the `conceptnet` dataset are binary probes and use the
/// median protocol.
pub fn evaluate(
    instances: &[Instance],
    backend: &dyn Backend,
    scorer: &Scorer,
    options: EvalOptions,
) -> Result<EvalReport> {
    scorer.check(backend)?;
    if options.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let protocol = match instances.first() {
        Some(i) if i.dataset == "conceptnet" => Protocol::BinaryMedian,
        _ => Protocol::MultipleChoice,
    };
    if let Some(other) = instances.iter().find(|i| i.dataset != instances[0].dataset) {
        return Err(Error::InvalidArgument(format!(
            "mixed datasets `{}` and `{}` in one run",
            instances[0].dataset, other.dataset
        )));
    }

    let before = backend.forwards();
    let scored: Vec<Scored> = with_pool(options.workers, || {
        instances
            .par_iter()
            .map(|inst| match protocol {
                Protocol::MultipleChoice => score_instance(inst, scorer, backend, options.batch),
                Protocol::BinaryMedian => score_probe(inst, scorer, backend, options.batch),
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let forwards = backend.forwards() - before;

    let mut warnings = BTreeMap::new();
    let empty = scored.iter().filter(|s| s.record.empty_target).count() as u64;
    let concept = scored.iter().filter(|s| s.concept_missing).count() as u64;
    if empty > 0 {
        warnings.insert(WARN_EMPTY_TARGET.to_string(), empty);
    }
    if concept > 0 {
        warnings.insert(WARN_CONCEPT_MISSING.to_string(), concept);
    }
    if scorer.policy.is_out_of_sweep_range() {
        warnings.insert(WARN_DELTA_W_OUT_OF_RANGE.to_string(), 1);
    }

    let mut records: Vec<InstanceRecord> = scored.into_iter().map(|s| s.record).collect();
    let width = match protocol {
        Protocol::BinaryMedian => 2,
        Protocol::MultipleChoice => instances.iter().map(|i| i.choices.len()).max().unwrap_or(0),
    };
    if protocol == Protocol::BinaryMedian {
        decide_median(&mut records, scorer.orientation());
    }

    Ok(EvalReport {
        dataset: instances.first().map(|i| i.dataset.clone()).unwrap_or_default(),
        split: None,
        backend: backend.name(),
        metric: scorer.metric,
        target: scorer.policy.target,
        stopword_removal: scorer.policy.stopword_removal,
        concept_delta_w: scorer.policy.concept_delta_w,
        rtd_reading: scorer.rtd_reading,
        orientation: scorer.orientation(),
        protocol,
        accuracy: accuracy_of(&records),
        rank_histogram: histogram(&records, width),
        per_instance: records,
        warnings,
        forwards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendKind, Fixture, FixtureBackend, FixtureEntry};
    use crate::metrics::WeightPolicy;

    fn item(id: &str, q: &str, choices: &[&str], gold: usize) -> Instance {
        Instance {
            id: id.into(),
            dataset: "csqa".into(),
            context: None,
            question: q.into(),
            choices: choices.iter().map(|s| s.to_string()).collect(),
            gold,
            concept: None,
            asks_for: None,
        }
    }

    fn entry(text: &str, rtd: Vec<f64>) -> FixtureEntry {
        FixtureEntry { tokens: Fixture::split_text(text), rtd: Some(rtd), ..Default::default() }
    }

    /// Four 2-choice items where the gold candidate has the higher NRC.
    fn binary_setup() -> (Vec<Instance>, FixtureBackend) {
        let mut instances = Vec::new();
        let mut entries = Vec::new();
        for k in 0..4 {
            let q = format!("q{k} ?");
            let gold = k % 2;
            instances.push(item(&format!("i{k}"), &q, &["yes", "no"], gold));
            for (c, ans) in ["yes", "no"].iter().enumerate() {
                let p = if c == gold { 0.1 } else { 0.6 };
                entries.push(entry(&format!("{q} {ans}"), vec![0.3, 0.3, p]));
            }
        }
        let fx = Fixture { entries, ..Default::default() };
        (instances, FixtureBackend::new(fx, BackendKind::Rtd).unwrap())
    }

    #[test]
    fn aligned_metric_scores_perfectly() {
        let (instances, backend) = binary_setup();
        let scorer = Scorer::new(MetricKind::Nrc, WeightPolicy::default());
        let r = evaluate(&instances, &backend, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.rank_histogram, vec![4, 0]);
        assert_eq!(r.forwards, 8);
        assert_eq!(r.recomputed_accuracy(), r.accuracy);
    }

    #[test]
    fn inverted_orientation_scores_zero_on_binary_items() {
        let (instances, backend) = binary_setup();
        let scorer = Scorer::new(MetricKind::Nrc, WeightPolicy::default());
        let r = evaluate(&instances, &backend, &scorer, EvalOptions::default()).unwrap();
        let flipped = scorer.orientation().flipped();
        let correct = r
            .per_instance
            .iter()
            .filter(|rec| {
                let aggs: Vec<f64> = rec.aggregates.iter().map(|a| a.unwrap()).collect();
                rank_index(&aggs, rec.gold, flipped).unwrap() == 1
            })
            .count();
        assert_eq!(correct, 0);
    }

    #[test]
    fn original_reading_agrees_on_single_token_differences() {
        // Both readings are monotone in P(replaced) token by token, so a
        // one-token difference is decided the same way.
        let (instances, backend) = binary_setup();
        let mut scorer = Scorer::new(MetricKind::Nrc, WeightPolicy::default());
        scorer.rtd_reading = RtdReading::Original;
        let r = evaluate(&instances, &backend, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.orientation, Orientation::LowerBetter);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn three_choice_histogram_matches_enumeration() {
        // NRC per candidate = -ln p of the single answer token (question
        // tokens weighted out with target A).
        let specs: [(usize, [f64; 3]); 4] = [
            (0, [0.1, 0.5, 0.9]), // gold best: rank 1
            (1, [0.1, 0.5, 0.9]), // rank 2
            (2, [0.1, 0.5, 0.9]), // rank 3
            (2, [0.5, 0.9, 0.1]), // rank 1
        ];
        let mut instances = Vec::new();
        let mut entries = Vec::new();
        for (k, (gold, probs)) in specs.iter().enumerate() {
            let q = format!("q{k}");
            instances.push(item(&format!("i{k}"), &q, &["a", "b", "c"], *gold));
            for (c, ans) in ["a", "b", "c"].iter().enumerate() {
                entries.push(entry(&format!("{q} {ans}"), vec![0.5, probs[c]]));
            }
        }
        let backend = FixtureBackend::new(Fixture { entries, ..Default::default() }, BackendKind::Rtd).unwrap();
        let scorer = Scorer::new(MetricKind::Nrc, WeightPolicy { target: Target::A, ..Default::default() });
        let r = evaluate(&instances, &backend, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.rank_histogram, vec![2, 1, 1]);
        assert_eq!(r.accuracy, 0.5);
        let ranks: Vec<usize> = r.per_instance.iter().map(|p| p.rank).collect();
        assert_eq!(ranks, vec![1, 2, 3, 1]);
    }

    #[test]
    fn empty_targets_count_as_wrong() {
        let instances = vec![item("e", "who ?", &["it", "dog"], 0)];
        let backend = FixtureBackend::new(
            Fixture { entries: vec![entry("who ? dog", vec![0.5, 0.5, 0.5])], ..Default::default() },
            BackendKind::Rtd,
        )
        .unwrap();
        let scorer = Scorer::new(
            MetricKind::Nrc,
            WeightPolicy { target: Target::A, stopword_removal: true, concept_delta_w: 0.0 },
        );
        let r = evaluate(&instances, &backend, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert!(r.per_instance[0].empty_target);
        assert_eq!(r.per_instance[0].aggregates[0], None);
        assert!(r.per_instance[0].aggregates[1].is_some());
        assert_eq!(r.warning(WARN_EMPTY_TARGET), 1);
        assert_eq!(r.rank_histogram.iter().sum::<usize>(), 1);
    }

    #[test]
    fn rejects_bad_configurations() {
        let (instances, backend) = binary_setup();
        let clm = Scorer::new(MetricKind::PplClm, WeightPolicy::default());
        assert!(matches!(evaluate(&instances, &backend, &clm, EvalOptions::default()), Err(Error::WrongKind { .. })));
        let scorer = Scorer::new(MetricKind::Nrc, WeightPolicy::default());
        assert!(evaluate(&instances, &backend, &scorer, EvalOptions { workers: 1, batch: 0 }).is_err());
    }

    #[test]
    fn median_protocol_for_probes() {
        let prompts =
            ["dog is a animal .", "car is made of cheese .", "bird is able to fly .", "rock is able to sing ."];
        let labels = [1, 0, 1, 0];
        let probs = [0.1, 0.7, 0.2, 0.8];
        let instances: Vec<Instance> = prompts
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(k, (p, l))| Instance {
                dataset: "conceptnet".into(),
                ..item(&format!("c{k}"), p, &["false", "true"], l)
            })
            .collect();
        let entries = prompts
            .iter()
            .zip(probs)
            .map(|(p, pr)| {
                let n = Fixture::split_text(p).len();
                entry(p, vec![pr; n])
            })
            .collect();
        let backend = FixtureBackend::new(Fixture { entries, ..Default::default() }, BackendKind::Rtd).unwrap();
        let scorer = Scorer::new(MetricKind::Nrc, WeightPolicy::default());
        let r = evaluate(&instances, &backend, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.protocol, Protocol::BinaryMedian);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.forwards, 4);
        let selected: Vec<_> = r.per_instance.iter().map(|p| p.selected.unwrap()).collect();
        assert_eq!(selected, vec![1, 0, 1, 0]);
    }
}
