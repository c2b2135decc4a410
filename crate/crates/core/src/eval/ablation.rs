use serde::{Deserialize, Serialize};

use super::{evaluate, significance, EvalOptions, EvalReport, SignificanceResult};
use crate::backend::Backend;
use crate::corpus::Instance;
use crate::error::Result;
use crate::metrics::Scorer;

/// ΔW values of the question-concept weighting sweep.
pub const DEFAULT_DELTA_W_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Significance level used to flag ablation gains.
const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopwordAblation {
    pub base: EvalReport,
    pub removed: EvalReport,
    /// Accuracy with removal minus accuracy without.
    pub delta: f64,
    pub significance: SignificanceResult,
}

impl StopwordAblation {
    /// `acc (delta)` in percentage points, e.g. `52.3 (0.5)`.
    pub fn cell(&self) -> String {
        super::tables::value_delta(self.removed.accuracy, self.delta)
    }

    /// Removal helped and the gain is significant.
    pub fn significant_gain(&self) -> bool {
        self.delta > 0.0 && self.significance.significant
    }
}

/// Evaluates with stop-word removal off and on.
pub fn ablate_stopwords(
    instances: &[Instance],
    backend: &dyn Backend,
    base: &Scorer,
    options: EvalOptions,
    seed: u64,
) -> Result<StopwordAblation> {
    let mut off = base.clone();
    off.policy.stopword_removal = false;
    let mut on = base.clone();
    on.policy.stopword_removal = true;
    let base = evaluate(instances, backend, &off, options)?;
    let removed = evaluate(instances, backend, &on, options)?;
    let significance = significance(&removed, &base, ALPHA, seed)?;
    Ok(StopwordAblation { delta: removed.accuracy - base.accuracy, base, removed, significance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta_w: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaWSweep {
    pub points: Vec<SweepPoint>,
}

impl DeltaWSweep {
    pub fn accuracies(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.delta_w, p.report.accuracy)).collect()
    }
}

/// One evaluation per ΔW value, all other settings taken from `base`.
pub fn sweep_delta_w(
    instances: &[Instance],
    backend: &dyn Backend,
    base: &Scorer,
    grid: &[f64],
    options: EvalOptions,
) -> Result<DeltaWSweep> {
    let points = grid
        .iter()
        .map(|&delta_w| {
            let mut scorer = base.clone();
            scorer.policy.concept_delta_w = delta_w;
            Ok(SweepPoint { delta_w, report: evaluate(instances, backend, &scorer, options)? })
        })
        .collect::<Result<_>>()?;
    Ok(DeltaWSweep { points })
}
