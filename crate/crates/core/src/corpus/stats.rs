use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DatasetName, Instance};
use crate::backend::word_spans;

/// Expected size of a published evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: DatasetName,
    pub expected_instances: usize,
    pub expected_choices: usize,
    pub has_context: bool,
}

/// Reference statistics for the question-answering sets.
pub fn descriptor(name: DatasetName) -> Option<DatasetDescriptor> {
    let (n, k, ctx) = match name {
        DatasetName::Csqa => (1140, 5, false),
        DatasetName::ArcEasy => (2376, 4, false),
        DatasetName::ArcChallenge => (1172, 4, false),
        DatasetName::Copa => (500, 2, false),
        DatasetName::Swag => (20005, 4, false),
        DatasetName::Sct => (1571, 2, true),
        DatasetName::Sqa => (3525, 3, true),
        DatasetName::Cqa => (6510, 4, true),
        _ => return None,
    };
    Some(DatasetDescriptor { name, expected_instances: n, expected_choices: k, has_context: ctx })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset: DatasetName,
    pub expected_instances: usize,
    pub found_instances: usize,
    pub expected_choices: usize,
    /// Most common number of choices per instance.
    pub modal_choices: usize,
    /// Instances whose choice count differs from the expected one.
    pub off_choice_instances: usize,
    pub with_context: usize,
    /// Mean word counts of question, answer and context.
    pub mean_question_words: f64,
    pub mean_answer_words: f64,
    pub mean_context_words: Option<f64>,
}

impl StatsReport {
    pub fn instances_match(&self) -> bool {
        self.found_instances == self.expected_instances
    }

    pub fn choices_match(&self) -> bool {
        self.modal_choices == self.expected_choices
    }

    pub fn passed(&self) -> bool {
        self.instances_match() && self.choices_match()
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "MISMATCH" };
        write!(
            f,
            "{}: instances {} (expected {}, {}), choices {} (expected {}, {}",
            self.dataset.display_name(),
            self.found_instances,
            self.expected_instances,
            mark(self.instances_match()),
            self.modal_choices,
            self.expected_choices,
            mark(self.choices_match()),
        )?;
        if self.off_choice_instances > 0 {
            write!(f, "; {} instances differ", self.off_choice_instances)?;
        }
        write!(f, "), L_Q {:.1} L_A {:.1}", self.mean_question_words, self.mean_answer_words)?;
        if let Some(c) = self.mean_context_words {
            write!(f, " L_C {c:.1}")?;
        }
        Ok(())
    }
}

fn words(s: &str) -> usize {
    word_spans(s).len()
}

/// Compares loaded instances with the reference counts. Mismatches are
/// reported, never fatal.
pub fn validate_stats(instances: &[Instance], descriptor: &DatasetDescriptor) -> StatsReport {
    let mut choice_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for inst in instances {
        *choice_counts.entry(inst.choices.len()).or_default() += 1;
    }
    // Largest count wins; ties go to the smaller choice number.
    let modal_choices =
        choice_counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k).unwrap_or(0);
    let n = instances.len().max(1) as f64;
    let total_answers: usize = instances.iter().map(|i| i.choices.len()).sum();
    let contexts: Vec<&str> = instances.iter().filter_map(|i| i.context.as_deref()).collect();
    StatsReport {
        dataset: descriptor.name,
        expected_instances: descriptor.expected_instances,
        found_instances: instances.len(),
        expected_choices: descriptor.expected_choices,
        modal_choices,
        off_choice_instances: instances.iter().filter(|i| i.choices.len() != descriptor.expected_choices).count(),
        with_context: contexts.len(),
        mean_question_words: instances.iter().map(|i| words(&i.question)).sum::<usize>() as f64 / n,
        mean_answer_words: instances.iter().flat_map(|i| &i.choices).map(|c| words(c)).sum::<usize>() as f64
            / total_answers.max(1) as f64,
        mean_context_words: (!contexts.is_empty())
            .then(|| contexts.iter().map(|c| words(c)).sum::<usize>() as f64 / contexts.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn copa_like(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                id: format!("copa-{i}"),
                dataset: "copa".into(),
                context: None,
                question: "The man broke his toe.".into(),
                choices: vec!["He limped.".into(), "He sang loudly.".into()],
                gold: 0,
                concept: None,
                asks_for: None,
            })
            .collect()
    }

    #[test]
    fn copa_counts_pass() {
        let r = validate_stats(&copa_like(500), &descriptor(DatasetName::Copa).unwrap());
        assert!(r.passed(), "{r}");
        assert_eq!(r.mean_question_words, 5.0);
        assert_eq!(r.mean_answer_words, 2.5);
        assert!(r.mean_context_words.is_none());
    }

    #[test]
    fn truncated_file_reports_mismatch() {
        let r = validate_stats(&copa_like(499), &descriptor(DatasetName::Copa).unwrap());
        assert!(!r.passed());
        assert!(!r.instances_match());
        assert!(r.choices_match());
        assert!(r.to_string().contains("MISMATCH"));
    }

    #[test]
    fn arc_challenge_descriptor() {
        let d = descriptor(DatasetName::ArcChallenge).unwrap();
        assert_eq!((d.expected_instances, d.expected_choices), (1172, 4));
        let mut items = copa_like(1172);
        for i in &mut items {
            i.choices = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        }
        items[0].choices.push("e".into());
        let r = validate_stats(&items, &d);
        assert!(r.passed());
        assert_eq!(r.off_choice_instances, 1);
    }

    #[test]
    fn table_values() {
        let expect = [
            (DatasetName::Csqa, 1140, 5),
            (DatasetName::ArcEasy, 2376, 4),
            (DatasetName::ArcChallenge, 1172, 4),
            (DatasetName::Copa, 500, 2),
            (DatasetName::Swag, 20005, 4),
            (DatasetName::Sct, 1571, 2),
            (DatasetName::Sqa, 3525, 3),
            (DatasetName::Cqa, 6510, 4),
        ];
        for (name, n, k) in expect {
            let d = descriptor(name).unwrap();
            assert_eq!((d.expected_instances, d.expected_choices), (n, k), "{name}");
        }
        assert!(descriptor(DatasetName::ConceptNet).is_none());
    }
}
