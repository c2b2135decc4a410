//! ONNX model bundles executed with tract.
//!
//! A bundle directory holds `graph.onnx`, a `tokenizer.json` in the
//! Hugging Face format, `meta.json` and optionally `golden.json`. The graph
//! takes `[batch, seq]` int64 inputs named `input_ids`, and optionally
//! `attention_mask` and `token_type_ids`, and returns its head as output 0:
//! `[batch, seq, vocab]` logits for CLM and MLM, `[batch, seq]` or
//! `[batch, seq, 1]` replacement logits for RTD.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokenizers::Tokenizer;
use tract_onnx::prelude::*;

use super::{Backend, BackendKind, CallCounter, Overflow, RawTokens};
use crate::error::{Error, Result};
use crate::score::{Span, TokenizedSequence};

pub const GOLDEN_TOLERANCE: f64 = 1e-4;

const GRAPH: &str = "graph.onnx";
const TOKENIZER: &str = "tokenizer.json";
const META: &str = "meta.json";
const GOLDEN: &str = "golden.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub kind: BackendKind,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Named special ids. `pad` is required; MLM bundles also need `mask`.
    pub special_ids: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

impl BundleMeta {
    fn special(&self, name: &str) -> Result<u32> {
        self.special_ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::Bundle(format!("meta.json has no `{name}` in special_ids")))
    }
}

/// Probe sentence with the outputs the exporting framework produced for it.
///
/// `expected` holds, per kind: the `n - 1` next-token log-probabilities
/// (CLM), the masked log-probability of every non-special token in order
/// (MLM), or the `n` replacement probabilities (RTD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenProbe {
    pub probe_text: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<Vec<u32>>,
    pub expected: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    GOLDEN_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub compared: usize,
    /// Why the comparison could not be made, if it could not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict}: {} values, max |deviation| {:.3e} (tolerance {:.0e})",
            self.compared, self.max_abs_deviation, self.tolerance
        )?;
        if let Some(p) = &self.problem {
            write!(f, "; {p}")?;
        }
        Ok(())
    }
}

type Plan = Arc<TypedRunnableModel>;

/// Sequence lengths are padded up to a multiple of this when plans are
/// compiled per shape, to bound the number of distinct plans.
const LEN_STEP: usize = 8;

enum Plans {
    Symbolic(Plan),
    PerShape { graph: Box<InferenceModel>, cache: Mutex<HashMap<(usize, usize), Plan>> },
}

impl Plans {
    fn plan(&self, batch: usize, len: usize, meta: &BundleMeta) -> Result<Plan> {
        match self {
            Plans::Symbolic(p) => Ok(p.clone()),
            Plans::PerShape { graph, cache } => {
                let mut cache = cache.lock().unwrap_or_else(|e| e.into_inner());
                if let Some(p) = cache.get(&(batch, len)) {
                    return Ok(p.clone());
                }
                let typed = with_input_shape((**graph).clone(), [TDim::from(batch), TDim::from(len)])
                    .and_then(|m| m.into_optimized())
                    .map_err(bundle_err("cannot optimize graph"))?;
                check_head(&typed, meta)?;
                let plan = typed.into_runnable().map_err(bundle_err("cannot plan graph"))?;
                cache.insert((batch, len), plan.clone());
                Ok(plan)
            }
        }
    }
}

fn with_input_shape(mut graph: InferenceModel, dims: [TDim; 2]) -> TractResult<InferenceModel> {
    for slot in 0..graph.input_outlets()?.len() {
        graph = graph.with_input_fact(slot, i64::fact(ShapeFact::from(&dims[..])).into())?;
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Input {
    Ids,
    Mask,
    TypeIds,
}

pub struct BundleBackend {
    dir: PathBuf,
    meta: BundleMeta,
    tokenizer: Tokenizer,
    plans: Plans,
    inputs: Vec<Input>,
    pad: u32,
    mask: Option<u32>,
    overflow: Overflow,
    counter: CallCounter,
}

fn bundle_err(context: &str) -> impl Fn(TractError) -> Error + '_ {
    move |e| Error::Bundle(format!("{context}: {e:#}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
}

impl BundleBackend {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta: BundleMeta = read_json(&dir.join(META))?;
        if meta.vocab_size == 0 || meta.max_len == 0 {
            return Err(Error::Bundle("vocab_size and max_len must be positive".into()));
        }
        let pad = meta.special("pad")?;
        let mask = match meta.kind {
            BackendKind::Mlm => Some(meta.special("mask")?),
            _ => meta.special_ids.get("mask").copied(),
        };
        let tokenizer = Tokenizer::from_file(dir.join(TOKENIZER))
            .map_err(|e| Error::Bundle(format!("{}: {e}", dir.join(TOKENIZER).display())))?;
        let (plans, inputs) = Self::compile(&dir.join(GRAPH), &meta)?;
        Ok(BundleBackend {
            dir,
            meta,
            tokenizer,
            plans,
            inputs,
            pad,
            mask,
            overflow: Overflow::Reject,
            counter: CallCounter::new(),
        })
    }

    pub fn with_overflow(mut self, overflow: Overflow) -> Self {
        self.overflow = overflow;
        self
    }

    pub fn meta(&self) -> &BundleMeta {
        &self.meta
    }

    fn compile(path: &Path, meta: &BundleMeta) -> Result<(Plans, Vec<Input>)> {
        if !path.exists() {
            return Err(Error::Bundle(format!("missing {}", path.display())));
        }
        let graph = tract_onnx::onnx().model_for_path(path).map_err(bundle_err("cannot read graph"))?;
        let mut inputs = Vec::new();
        for outlet in graph.input_outlets().map_err(bundle_err("graph inputs"))? {
            inputs.push(match graph.node(outlet.node).name.as_str() {
                "input_ids" => Input::Ids,
                "attention_mask" => Input::Mask,
                "token_type_ids" => Input::TypeIds,
                other => return Err(Error::Bundle(format!("unsupported graph input `{other}`"))),
            });
        }
        if !inputs.contains(&Input::Ids) {
            return Err(Error::Bundle("graph has no `input_ids` input".into()));
        }
        let (b, s) = (TDim::from(graph.sym("B")), TDim::from(graph.sym("S")));
        let symbolic = with_input_shape(graph.clone(), [b, s]).and_then(|m| m.into_optimized());
        let plans = match symbolic {
            Ok(typed) => {
                check_head(&typed, meta)?;
                Plans::Symbolic(typed.into_runnable().map_err(bundle_err("cannot plan graph"))?)
            }
            // Some exported attention blocks defeat symbolic shape
            // inference; those run on plans specialised per batch shape.
            Err(_) => {
                let plans = Plans::PerShape { graph: Box::new(graph), cache: Mutex::new(HashMap::new()) };
                plans.plan(1, LEN_STEP.min(meta.max_len), meta)?;
                plans
            }
        };
        Ok((plans, inputs))
    }

    /// Runs one padded batch and returns output 0 as `[rows, len, width]`.
    fn forward(&self, rows: &[Vec<u32>]) -> Result<Head> {
        let longest = rows.iter().map(Vec::len).max().unwrap_or(0);
        let len = match self.plans {
            Plans::Symbolic(_) => longest,
            Plans::PerShape { .. } => longest.div_ceil(LEN_STEP) * LEN_STEP,
        }
        .min(self.meta.max_len)
        .max(longest);
        let b = rows.len();
        let mut ids = vec![i64::from(self.pad); b * len];
        let mut mask = vec![0i64; b * len];
        for (r, row) in rows.iter().enumerate() {
            for (i, &t) in row.iter().enumerate() {
                ids[r * len + i] = i64::from(t);
                mask[r * len + i] = 1;
            }
        }
        let zeros = vec![0i64; b * len];
        let feed: TVec<TValue> = self
            .inputs
            .iter()
            .map(|input| {
                let data = match input {
                    Input::Ids => &ids,
                    Input::Mask => &mask,
                    Input::TypeIds => &zeros,
                };
                Tensor::from_shape(&[b, len], data).map(|t| t.into())
            })
            .collect::<TractResult<_>>()
            .map_err(bundle_err("inputs"))?;
        let plan = self.plans.plan(b, len, &self.meta)?;
        let out = plan.run(feed).map_err(bundle_err("graph execution"))?;
        let head = out[0].cast_to::<f32>().map_err(bundle_err("graph output"))?;
        let shape = head.shape().to_vec();
        let width = match (self.meta.kind, shape.as_slice()) {
            (BackendKind::Rtd, [rb, rl]) if (*rb, *rl) == (b, len) => 1,
            (_, [rb, rl, w]) if (*rb, *rl) == (b, len) => *w,
            _ => return Err(Error::Bundle(format!("output shape {shape:?} for a {b}x{len} batch"))),
        };
        let values = head.to_plain_array_view::<f32>().map_err(bundle_err("graph output"))?.iter().copied().collect();
        Ok(Head { values, len, width })
    }

    /// Checks the bundle against its golden probe.
    pub fn verify(&self) -> Result<VerifyReport> {
        let path = self.dir.join(GOLDEN);
        if !path.exists() {
            return Err(Error::Bundle(format!("no golden record at {}", path.display())));
        }
        let golden: GoldenProbe = read_json(&path)?;
        let mut report = VerifyReport {
            passed: false,
            max_abs_deviation: f64::INFINITY,
            tolerance: golden.tolerance,
            compared: 0,
            problem: None,
        };
        if golden.kind != self.meta.kind {
            report.problem = Some(format!("golden record is for {}, bundle is {}", golden.kind, self.meta.kind));
            return Ok(report);
        }
        let raw = self.split(&golden.probe_text)?;
        if let Some(ids) = &golden.token_ids {
            if ids != &raw.ids {
                report.problem = Some(format!("tokenizer produced {:?}, golden has {ids:?}", raw.ids));
                return Ok(report);
            }
        }
        let seq = TokenizedSequence::new(
            raw.ids.clone(),
            raw.texts,
            raw.spans,
            vec![crate::score::Segment::Question; raw.ids.len()],
        )?;
        let actual = match self.meta.kind {
            BackendKind::Clm => self.run_clm(&[&seq])?.remove(0),
            BackendKind::Rtd => self.run_rtd(&[&seq])?.remove(0),
            BackendKind::Mlm => {
                let queries: Vec<(&TokenizedSequence, usize)> =
                    (0..seq.len()).filter(|&i| !raw.special[i]).map(|i| (&seq, i)).collect();
                self.run_mlm(&queries)?
            }
        };
        if actual.len() != golden.expected.len() {
            report.problem = Some(format!("{} values produced, golden has {}", actual.len(), golden.expected.len()));
            return Ok(report);
        }
        report.compared = actual.len();
        report.max_abs_deviation = actual.iter().zip(&golden.expected).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        report.passed = report.max_abs_deviation <= golden.tolerance;
        Ok(report)
    }
}

struct Head {
    values: Vec<f32>,
    len: usize,
    width: usize,
}

impl Head {
    fn row(&self, r: usize, i: usize) -> &[f32] {
        let start = (r * self.len + i) * self.width;
        &self.values[start..start + self.width]
    }
}

fn check_head(model: &TypedModel, meta: &BundleMeta) -> Result<()> {
    let fact = model.output_fact(0).map_err(bundle_err("graph output"))?;
    let dims: Vec<Option<i64>> = fact.shape.iter().map(|d| d.to_i64().ok()).collect();
    let ok = match meta.kind {
        BackendKind::Clm | BackendKind::Mlm => dims.len() == 3 && dims[2] == Some(meta.vocab_size as i64),
        BackendKind::Rtd => dims.len() == 2 || (dims.len() == 3 && dims[2] == Some(1)),
    };
    if !ok {
        return Err(Error::Bundle(format!(
            "{} bundle with vocab_size {} has output shape {:?}",
            meta.kind, meta.vocab_size, fact.shape
        )));
    }
    Ok(())
}

/// `log softmax(logits)[target]`, accumulated in f64.
fn log_softmax_at(logits: &[f32], target: u32) -> Result<f64> {
    let t = target as usize;
    if t >= logits.len() {
        return Err(Error::Bundle(format!("token id {t} outside a vocabulary of {}", logits.len())));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(f64::from(x)));
    let sum: f64 = logits.iter().map(|&x| (f64::from(x) - max).exp()).sum();
    Ok(f64::from(logits[t]) - max - sum.ln())
}

fn sigmoid(x: f32) -> f64 {
    1.0 / (1.0 + (-f64::from(x)).exp())
}

impl Backend for BundleBackend {
    fn kind(&self) -> BackendKind {
        self.meta.kind
    }

    fn name(&self) -> String {
        match &self.meta.model_id {
            Some(id) => id.clone(),
            None => format!("bundle:{}", self.dir.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()),
        }
    }

    fn max_len(&self) -> usize {
        self.meta.max_len
    }

    fn overflow(&self) -> Overflow {
        self.overflow
    }

    fn counter(&self) -> &CallCounter {
        &self.counter
    }

    fn split(&self, text: &str) -> Result<RawTokens> {
        let enc = self.tokenizer.encode(text, true).map_err(|e| Error::Bundle(format!("tokenizer: {e}")))?;
        let special: Vec<bool> = enc.get_special_tokens_mask().iter().map(|&m| m != 0).collect();
        // Special markers report (0, 0) wherever they sit; pin them as empty
        // spans at the previous token's end so spans stay ordered.
        let mut end = 0;
        let spans = enc
            .get_offsets()
            .iter()
            .zip(&special)
            .map(|(&(s, e), &sp)| {
                if sp {
                    Span::new(end, end)
                } else {
                    end = e;
                    Span::new(s, e)
                }
            })
            .collect();
        let raw = RawTokens { ids: enc.get_ids().to_vec(), texts: enc.get_tokens().to_vec(), spans, special };
        if raw.ids.is_empty() {
            return Err(Error::InvalidArgument(format!("text {text:?} has no tokens")));
        }
        Ok(raw)
    }

    fn run_clm(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<Vec<u32>> = seqs.iter().map(|s| s.token_ids().to_vec()).collect();
        let head = self.forward(&rows)?;
        rows.iter()
            .enumerate()
            .map(|(r, ids)| (0..ids.len() - 1).map(|i| log_softmax_at(head.row(r, i), ids[i + 1])).collect())
            .collect()
    }

    fn run_mlm(&self, queries: &[(&TokenizedSequence, usize)]) -> Result<Vec<f64>> {
        let mask = self.mask.ok_or_else(|| Error::Bundle("no mask id".into()))?;
        let rows: Vec<Vec<u32>> = queries
            .iter()
            .map(|&(seq, pos)| {
                let mut ids = seq.token_ids().to_vec();
                ids[pos] = mask;
                ids
            })
            .collect();
        let head = self.forward(&rows)?;
        queries
            .iter()
            .enumerate()
            .map(|(r, &(seq, pos))| log_softmax_at(head.row(r, pos), seq.token_ids()[pos]))
            .collect()
    }

    fn run_rtd(&self, seqs: &[&TokenizedSequence]) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<Vec<u32>> = seqs.iter().map(|s| s.token_ids().to_vec()).collect();
        let head = self.forward(&rows)?;
        Ok(rows
            .iter()
            .enumerate()
            .map(|(r, ids)| (0..ids.len()).map(|i| sigmoid(head.row(r, i)[0])).collect())
            .collect())
    }
}
