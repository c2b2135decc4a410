use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AsksFor, Builder, Instance};
use crate::error::{Error, Result};
use crate::score::{Segment, Span};

/// ConceptNet relations that have a natural-language prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    IsA,
    CapableOf,
    NotCapableOf,
    UsedFor,
    MadeOf,
    PartOf,
    HasAttribute,
    HasA,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::IsA,
        Relation::CapableOf,
        Relation::NotCapableOf,
        Relation::UsedFor,
        Relation::MadeOf,
        Relation::PartOf,
        Relation::HasAttribute,
        Relation::HasA,
    ];

    /// Prompt pattern with `A` and `B` slots.
    pub fn pattern(self) -> &'static str {
        match self {
            Relation::IsA => "A is a B .",
            Relation::CapableOf => "A is able to B .",
            Relation::NotCapableOf => "A is unable to B .",
            Relation::UsedFor => "A is used to B .",
            Relation::MadeOf => "A is made of B .",
            Relation::PartOf => "A is part of B .",
            Relation::HasAttribute => "A is very B .",
            Relation::HasA => "A has a B .",
        }
    }

    /// The pattern between the two slots.
    fn infix(self) -> &'static str {
        let p = self.pattern();
        &p[1..p.len() - 3]
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::IsA => "IsA",
            Relation::CapableOf => "CapableOf",
            Relation::NotCapableOf => "NotCapableOf",
            Relation::UsedFor => "UsedFor",
            Relation::MadeOf => "MadeOf",
            Relation::PartOf => "PartOf",
            Relation::HasAttribute => "HasAttribute",
            Relation::HasA => "HasA",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Unsupported(format!("relation `{s}` has no prompt template")))
    }
}

/// A (left term, relation, right term) triple with its truth label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTuple {
    pub left_term: String,
    pub relation: Relation,
    pub right_term: String,
    pub label: bool,
}

impl KnowledgeTuple {
    /// Fails with `Unsupported` for relations without a template.
    pub fn parse(left: &str, relation: &str, right: &str, label: bool) -> Result<Self> {
        Ok(KnowledgeTuple {
            left_term: left.trim().to_string(),
            relation: relation.parse()?,
            right_term: right.trim().to_string(),
            label,
        })
    }
}

/// Literal slot substitution, e.g. `(dog, IsA, animal)` gives
/// `"dog is a animal ."`.
pub fn render_conceptnet(tuple: &KnowledgeTuple) -> String {
    format!("{}{}{} .", tuple.left_term, tuple.relation.infix(), tuple.right_term)
}

/// `"A" is not true because B.`
pub fn render_semeval_b(statement: &str, reason: &str) -> Result<String> {
    Ok(semeval_b(statement, reason)?.text)
}

fn semeval_b(statement: &str, reason: &str) -> Result<Rendered> {
    if statement.trim().is_empty() || reason.trim().is_empty() {
        return Err(Error::InvalidArgument("statement and reason must be nonempty".into()));
    }
    let mut b = Builder::new();
    b.push("\"", Segment::Template);
    let question = b.push(statement, Segment::Question);
    b.push("\" is not true because ", Segment::Template);
    b.push(reason, Segment::Answer);
    b.push(".", Segment::Template);
    let (text, segments) = b.finish();
    Ok(Rendered { text, segments, question, concept: None })
}

/// A candidate text with labelled regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rendered {
    pub text: String,
    /// Regions tiling `text` in order.
    pub segments: Vec<(Span, Segment)>,
    /// Where the question landed in `text`.
    pub question: Span,
    /// Concept span in `text` coordinates.
    pub concept: Option<Span>,
}

impl Rendered {
    pub fn part(&self, seg: Segment) -> Option<&str> {
        self.segments.iter().find(|(_, s)| *s == seg).map(|(span, _)| &self.text[span.start..span.end])
    }
}

/// `[context + " "] + question + " " + choice`.
pub fn render_qa(instance: &Instance, choice_index: usize) -> Result<Rendered> {
    let choice = choice(instance, choice_index)?;
    let mut b = Builder::new();
    if let Some(ctx) = instance.context.as_deref().filter(|c| !c.is_empty()) {
        b.push(ctx, Segment::Context);
        b.push(" ", Segment::Template);
    }
    let question = b.push(&instance.question, Segment::Question);
    b.push(" ", Segment::Template);
    b.push(choice, Segment::Answer);
    let (text, segments) = b.finish();
    Ok(Rendered { text, segments, question, concept: instance.concept.map(|c| c.shift(question.start)) })
}

fn choice(instance: &Instance, i: usize) -> Result<&str> {
    instance
        .choices
        .get(i)
        .map(String::as_str)
        .ok_or_else(|| Error::InvalidInstance { id: instance.id.clone(), reason: format!("choice {i} out of range") })
}

fn connective(asks_for: AsksFor) -> &'static str {
    match asks_for {
        AsksFor::Effect => " so ",
        AsksFor::Cause => " because ",
    }
}

fn starts_with_pronoun_i(s: &str) -> bool {
    s == "I" || s.starts_with("I ") || s.starts_with("I'") || s.starts_with("I’")
}

/// `<premise> so <choice>` for effects, `<premise> because <choice>` for
/// causes. The premise loses its final period and the choice its leading
/// capital (except the pronoun "I").
pub fn render_copa(premise: &str, choice: &str, asks_for: AsksFor) -> Rendered {
    let premise = premise.strip_suffix('.').unwrap_or(premise);
    let choice = if starts_with_pronoun_i(choice) {
        choice.to_string()
    } else {
        let mut chars = choice.chars();
        chars.next().map(|c| c.to_lowercase().chain(chars).collect()).unwrap_or_default()
    };
    let mut b = Builder::new();
    let question = b.push(premise, Segment::Question);
    b.push(connective(asks_for), Segment::Template);
    b.push(&choice, Segment::Answer);
    let (text, segments) = b.finish();
    Rendered { text, segments, question, concept: None }
}

/// Recovers `(premise, choice)` from [`render_copa`] output for premises that
/// end in a period and choices that start with a capital letter.
pub fn copa_unrender(rendered: &Rendered) -> Result<(String, String)> {
    let premise = rendered
        .part(Segment::Question)
        .ok_or_else(|| Error::InvalidArgument("rendered COPA text has no premise".into()))?;
    let choice = rendered
        .part(Segment::Answer)
        .ok_or_else(|| Error::InvalidArgument("rendered COPA text has no choice".into()))?;
    let mut chars = choice.chars();
    let choice = chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default();
    Ok((format!("{premise}."), choice))
}

/// Renders choice `choice_index` of `instance` in the form its dataset uses.
pub fn render_candidate(instance: &Instance, choice_index: usize) -> Result<Rendered> {
    let answer = choice(instance, choice_index)?;
    match instance.dataset.as_str() {
        "copa" => {
            let asks_for = instance.asks_for.ok_or_else(|| Error::InvalidInstance {
                id: instance.id.clone(),
                reason: "COPA item without asks_for".into(),
            })?;
            Ok(render_copa(&instance.question, answer, asks_for))
        }
        "semeval_b" => semeval_b(&instance.question, answer),
        // Statements are scored on their own.
        "semeval_a" => {
            let mut b = Builder::new();
            b.push(answer, Segment::Answer);
            let (text, segments) = b.finish();
            Ok(Rendered { text, segments, question: Span::new(0, 0), concept: None })
        }
        // The prompt is the whole item; choices are the two labels.
        "conceptnet" => {
            let mut b = Builder::new();
            let question = b.push(&instance.question, Segment::Question);
            let (text, segments) = b.finish();
            Ok(Rendered { text, segments, question, concept: None })
        }
        _ => render_qa(instance, choice_index),
    }
}
