//! Instances, prompt rendering and dataset loading.

mod datasets;
mod prompts;
mod stats;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{Segment, Span};

pub use datasets::{load_dataset, DatasetName, LoadWarnings, LoadedDataset};
pub use prompts::{
    copa_unrender, render_candidate, render_conceptnet, render_copa, render_qa, render_semeval_b, KnowledgeTuple,
    Relation, Rendered,
};
pub use stats::{descriptor, validate_stats, DatasetDescriptor, StatsReport};

/// Whether a COPA item asks for the cause or the effect of its premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsksFor {
    Cause,
    Effect,
}

/// One multiple-choice item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub dataset: String,
    #[serde(default)]
    pub context: Option<String>,
    pub question: String,
    pub choices: Vec<String>,
    pub gold: usize,
    /// Byte span of the annotated concept phrase inside `question`.
    #[serde(default)]
    pub concept: Option<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asks_for: Option<AsksFor>,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidInstance { id: self.id.clone(), reason };
        if self.choices.len() < 2 {
            return Err(bad(format!("needs at least 2 choices, has {}", self.choices.len())));
        }
        if self.gold >= self.choices.len() {
            return Err(bad(format!("gold {} out of range", self.gold)));
        }
        if let Some(c) = self.concept {
            if c.start > c.end
                || c.end > self.question.len()
                || !self.question.is_char_boundary(c.start)
                || !self.question.is_char_boundary(c.end)
            {
                return Err(bad(format!("concept span {c:?} outside the question")));
            }
        }
        Ok(())
    }

    /// Locates `phrase` in the question by case-insensitive substring match.
    pub fn locate_concept(question: &str, phrase: &str) -> Option<Span> {
        let phrase = phrase.trim();
        if phrase.is_empty() {
            return None;
        }
        let hay = question.to_lowercase();
        let needle = phrase.to_lowercase();
        // Lowercasing can change byte lengths outside ASCII; only trust the
        // match when offsets still line up.
        if hay.len() != question.len() {
            return question.find(phrase).map(|s| Span::new(s, s + phrase.len()));
        }
        hay.find(&needle).map(|s| Span::new(s, s + needle.len()))
    }
}

/// Reads a normalized instance file: one JSON object per line.
pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance =
            serde_json::from_str(&line).map_err(|e| Error::schema(path, format!("line {}: {e}", lineno + 1)))?;
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for inst in instances {
        serde_json::to_writer(&mut buf, inst)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Segment labels in a rendered text, for building segment maps.
pub(crate) struct Builder {
    text: String,
    segments: Vec<(Span, Segment)>,
}

impl Builder {
    pub fn new() -> Self {
        Builder { text: String::new(), segments: Vec::new() }
    }

    pub fn push(&mut self, part: &str, seg: Segment) -> Span {
        let start = self.text.len();
        self.text.push_str(part);
        let span = Span::new(start, self.text.len());
        if !span.is_empty() {
            self.segments.push((span, seg));
        }
        span
    }

    pub fn finish(self) -> (String, Vec<(Span, Segment)>) {
        (self.text, self.segments)
    }
}
