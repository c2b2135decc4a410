//! Adapters from the published dataset formats to [`Instance`] lists.
//!
//! Each loader accepts either the data file itself or the directory it was
//! unpacked into, in which case a list of known file names is tried in
//! order. Instances keep source order; nothing is reordered or deduplicated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prompts::{render_conceptnet, KnowledgeTuple};
use super::{AsksFor, Instance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    ConceptNet,
    SemevalA,
    SemevalB,
    Csqa,
    ArcEasy,
    ArcChallenge,
    Copa,
    Swag,
    Sct,
    Sqa,
    Cqa,
}

impl DatasetName {
    pub const ALL: [DatasetName; 11] = [
        DatasetName::ConceptNet,
        DatasetName::SemevalA,
        DatasetName::SemevalB,
        DatasetName::Csqa,
        DatasetName::ArcEasy,
        DatasetName::ArcChallenge,
        DatasetName::Copa,
        DatasetName::Swag,
        DatasetName::Sct,
        DatasetName::Sqa,
        DatasetName::Cqa,
    ];

    pub fn id(self) -> &'static str {
        match self {
            DatasetName::ConceptNet => "conceptnet",
            DatasetName::SemevalA => "semeval_a",
            DatasetName::SemevalB => "semeval_b",
            DatasetName::Csqa => "csqa",
            DatasetName::ArcEasy => "arc_easy",
            DatasetName::ArcChallenge => "arc_challenge",
            DatasetName::Copa => "copa",
            DatasetName::Swag => "swag",
            DatasetName::Sct => "sct",
            DatasetName::Sqa => "sqa",
            DatasetName::Cqa => "cqa",
        }
    }

    /// Name used in printed tables.
    pub fn display_name(self) -> &'static str {
        match self {
            DatasetName::ConceptNet => "ConceptNet",
            DatasetName::SemevalA => "SemEval_A",
            DatasetName::SemevalB => "SemEval_B",
            DatasetName::Csqa => "CSQA",
            DatasetName::ArcEasy => "ARC_E",
            DatasetName::ArcChallenge => "ARC_C",
            DatasetName::Copa => "COPA",
            DatasetName::Swag => "Swag",
            DatasetName::Sct => "SCT",
            DatasetName::Sqa => "SQA",
            DatasetName::Cqa => "CQA",
        }
    }

    /// Binary true/false probing instead of multiple choice.
    pub fn is_binary_probe(self) -> bool {
        self == DatasetName::ConceptNet
    }

    fn candidates(self) -> &'static [&'static str] {
        match self {
            DatasetName::ConceptNet => &["test.txt", "test.tsv"],
            DatasetName::SemevalA => &["subtaskA_test_data.csv", "subtaskA_dev_data.csv", "subtaskA_data_all.csv"],
            DatasetName::SemevalB => &["subtaskB_test_data.csv", "subtaskB_dev_data.csv", "subtaskB_data_all.csv"],
            DatasetName::Csqa => &["test_rand_split.jsonl", "dev_rand_split.jsonl"],
            DatasetName::ArcEasy => &["ARC-Easy-Test.jsonl", "ARC-Easy/ARC-Easy-Test.jsonl"],
            DatasetName::ArcChallenge => &["ARC-Challenge-Test.jsonl", "ARC-Challenge/ARC-Challenge-Test.jsonl"],
            DatasetName::Copa => &["copa-test.xml", "datasets/copa-test.xml", "copa-dev.xml"],
            DatasetName::Swag => &["val.csv", "test.csv"],
            DatasetName::Sct => &[
                "cloze_test_test__spring2016 - cloze_test_ALL_test.csv",
                "cloze_test_val__spring2016 - cloze_test_ALL_val.csv",
                "test.csv",
                "val.csv",
            ],
            DatasetName::Sqa => &["dev.jsonl", "socialiqa-train-dev/dev.jsonl"],
            DatasetName::Cqa => &["valid.jsonl", "valid.csv", "test.jsonl"],
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let found = match norm.as_str() {
            "arc_e" => Some(DatasetName::ArcEasy),
            "arc_c" => Some(DatasetName::ArcChallenge),
            "commonsenseqa" => Some(DatasetName::Csqa),
            "socialiqa" | "siqa" => Some(DatasetName::Sqa),
            "cosmosqa" => Some(DatasetName::Cqa),
            "storycloze" => Some(DatasetName::Sct),
            _ => DatasetName::ALL.into_iter().find(|d| d.id() == norm),
        };
        found.ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

/// Non-fatal events counted while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadWarnings {
    /// ConceptNet tuples skipped because their relation has no template.
    pub skipped_relations: BTreeMap<String, usize>,
    /// Concept phrases that could not be found in their question.
    pub concept_not_found: usize,
}

impl LoadWarnings {
    pub fn skipped_tuples(&self) -> usize {
        self.skipped_relations.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub name: DatasetName,
    /// Stem of the file the instances came from, e.g. `copa-test`.
    pub split: String,
    pub source: PathBuf,
    pub instances: Vec<Instance>,
    pub warnings: LoadWarnings,
}

/// Loads `name` from `path` (a data file or the directory holding it).
pub fn load_dataset(name: DatasetName, path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let file = resolve(path.as_ref(), name.candidates())?;
    let mut warnings = LoadWarnings::default();
    let instances = match name {
        DatasetName::ConceptNet => conceptnet(&file, &mut warnings)?,
        DatasetName::SemevalA => semeval_a(&file)?,
        DatasetName::SemevalB => semeval_b(&file)?,
        DatasetName::Csqa => csqa(&file, &mut warnings)?,
        DatasetName::ArcEasy | DatasetName::ArcChallenge => arc(&file, name)?,
        DatasetName::Copa => copa(&file)?,
        DatasetName::Swag => swag(&file)?,
        DatasetName::Sct => sct(&file)?,
        DatasetName::Sqa => sqa(&file)?,
        DatasetName::Cqa => cqa(&file)?,
    };
    for inst in &instances {
        inst.validate()?;
    }
    let split = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LoadedDataset { name, split, source: file, instances, warnings })
}

fn resolve(path: &Path, candidates: &[&str]) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if path.is_dir() {
        if let Some(found) = candidates.iter().map(|c| path.join(c)).find(|p| p.is_file()) {
            return Ok(found);
        }
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("none of {candidates:?} found in directory")),
        ));
    }
    Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
}

fn read(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.strip_prefix('\u{feff}').map(str::to_string).unwrap_or(text))
}

fn jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::schema(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn csv_records(path: &Path, has_headers: bool) -> Result<(Option<csv::StringRecord>, Vec<csv::StringRecord>)> {
    let text = read(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_headers).flexible(true).from_reader(text.as_bytes());
    let headers = if has_headers { Some(rdr.headers()?.clone()) } else { None };
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((headers, rows))
}

/// Column lookup by header name.
struct Columns<'a> {
    path: &'a Path,
    headers: csv::StringRecord,
}

impl<'a> Columns<'a> {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::schema(self.path, format!("missing column `{name}`")))
    }

    fn get<'r>(&self, row: &'r csv::StringRecord, name: &str) -> Result<&'r str> {
        let i = self.index(name)?;
        row.get(i).map(str::trim).ok_or_else(|| Error::schema(self.path, format!("row without column `{name}`")))
    }
}

fn letter_index(path: &Path, key: &str, labels: &[String]) -> Result<usize> {
    labels
        .iter()
        .position(|l| l == key)
        .ok_or_else(|| Error::schema(path, format!("answer key `{key}` not among labels {labels:?}")))
}

fn parse_index(path: &Path, s: &str, base: usize) -> Result<usize> {
    let v: usize = s.trim().parse().map_err(|_| Error::schema(path, format!("bad label `{s}`")))?;
    v.checked_sub(base).ok_or_else(|| Error::schema(path, format!("label `{s}` below {base}")))
}

fn conceptnet(path: &Path, warnings: &mut LoadWarnings) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::schema(path, format!("line {}: expected 4 tab-separated fields", i + 1)));
        }
        let score: f64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| Error::schema(path, format!("line {}: bad label `{}`", i + 1, cols[3])))?;
        let tuple = match KnowledgeTuple::parse(cols[1], cols[0], cols[2], score > 0.5) {
            Ok(t) => t,
            Err(Error::Unsupported(_)) => {
                *warnings.skipped_relations.entry(cols[0].trim().to_string()).or_default() += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(Instance {
            id: format!("conceptnet-{}", i + 1),
            dataset: DatasetName::ConceptNet.id().into(),
            context: None,
            question: render_conceptnet(&tuple),
            choices: vec!["false".into(), "true".into()],
            gold: usize::from(tuple.label),
            concept: None,
            asks_for: None,
        });
    }
    Ok(out)
}

/// Finds the answer file that accompanies a SemEval data file.
fn semeval_answers(data: &Path) -> Result<PathBuf> {
    let dir = data.parent().unwrap_or(Path::new("."));
    let name = data.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let task = if name.starts_with("subtaskB") { "subtaskB" } else { "subtaskA" };
    let candidates = [
        name.replace("_data", "_answers"),
        name.replace("_test_data", "_gold_answers"),
        name.replace("_dev_data", "_gold_answers"),
        format!("{task}_gold_answers.csv"),
        format!("{task}_answers_all.csv"),
    ];
    candidates
        .iter()
        .map(|c| dir.join(c))
        .find(|p| p.is_file() && p != data)
        .ok_or_else(|| Error::schema(data, format!("no answer file found next to it (tried {candidates:?})")))
}

fn semeval_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let (_, rows) = csv_records(path, false)?;
    Ok(rows
        .iter()
        .filter(|r| r.len() >= 2 && r[0].trim() != "id")
        .map(|r| (r[0].trim().to_string(), r[1].trim().to_string()))
        .collect())
}

fn semeval_a(path: &Path) -> Result<Vec<Instance>> {
    let labels = semeval_labels(&semeval_answers(path)?)?;
    let (headers, rows) = csv_records(path, true)?;
    let cols = Columns { path, headers: headers.unwrap_or_default() };
    rows.iter()
        .map(|row| {
            let id = cols.get(row, "id")?;
            let label = labels.get(id).ok_or_else(|| Error::schema(path, format!("no answer for id {id}")))?;
            // The label marks the statement against common sense; the gold
            // choice is the sensible one.
            let against = parse_index(path, label, 0)?;
            if against > 1 {
                return Err(Error::schema(path, format!("label {label} for id {id}")));
            }
            Ok(Instance {
                id: format!("semeval_a-{id}"),
                dataset: DatasetName::SemevalA.id().into(),
                context: None,
                question: String::new(),
                choices: vec![cols.get(row, "sent0")?.into(), cols.get(row, "sent1")?.into()],
                gold: 1 - against,
                concept: None,
                asks_for: None,
            })
        })
        .collect()
}

fn semeval_b(path: &Path) -> Result<Vec<Instance>> {
    let labels = semeval_labels(&semeval_answers(path)?)?;
    let (headers, rows) = csv_records(path, true)?;
    let cols = Columns { path, headers: headers.unwrap_or_default() };
    let letters = vec!["A".to_string(), "B".into(), "C".into()];
    rows.iter()
        .map(|row| {
            let id = cols.get(row, "id")?;
            let label = labels.get(id).ok_or_else(|| Error::schema(path, format!("no answer for id {id}")))?;
            Ok(Instance {
                id: format!("semeval_b-{id}"),
                dataset: DatasetName::SemevalB.id().into(),
                context: None,
                question: cols.get(row, "FalseSent")?.into(),
                choices: vec![
                    cols.get(row, "OptionA")?.into(),
                    cols.get(row, "OptionB")?.into(),
                    cols.get(row, "OptionC")?.into(),
                ],
                gold: letter_index(path, label, &letters)?,
                concept: None,
                asks_for: None,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct McChoice {
    label: String,
    text: String,
}

#[derive(Deserialize)]
struct McQuestion {
    stem: String,
    choices: Vec<McChoice>,
    #[serde(default)]
    question_concept: Option<String>,
}

#[derive(Deserialize)]
struct McRecord {
    id: String,
    question: McQuestion,
    #[serde(rename = "answerKey")]
    answer_key: Option<String>,
}

fn multiple_choice(path: &Path, dataset: DatasetName, warnings: &mut LoadWarnings) -> Result<Vec<Instance>> {
    jsonl::<McRecord>(path)?
        .into_iter()
        .map(|r| {
            let key = r
                .answer_key
                .ok_or_else(|| Error::schema(path, format!("{} has no answerKey (unlabelled split?)", r.id)))?;
            let labels: Vec<String> = r.question.choices.iter().map(|c| c.label.clone()).collect();
            let gold = letter_index(path, &key, &labels)?;
            let concept = match r.question.question_concept.as_deref() {
                Some(phrase) => {
                    let span = Instance::locate_concept(&r.question.stem, phrase);
                    if span.is_none() {
                        warnings.concept_not_found += 1;
                    }
                    span
                }
                None => None,
            };
            Ok(Instance {
                id: r.id,
                dataset: dataset.id().into(),
                context: None,
                question: r.question.stem,
                choices: r.question.choices.into_iter().map(|c| c.text).collect(),
                gold,
                concept,
                asks_for: None,
            })
        })
        .collect()
}

fn csqa(path: &Path, warnings: &mut LoadWarnings) -> Result<Vec<Instance>> {
    multiple_choice(path, DatasetName::Csqa, warnings)
}

fn arc(path: &Path, name: DatasetName) -> Result<Vec<Instance>> {
    multiple_choice(path, name, &mut LoadWarnings::default())
}

fn copa(path: &Path) -> Result<Vec<Instance>> {
    let text = read(path)?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| Error::schema(path, e.to_string()))?;
    let child_text = |node: roxmltree::Node, tag: &str| -> Result<String> {
        node.children()
            .find(|c| c.has_tag_name(tag))
            .and_then(|c| c.text())
            .map(|t| t.trim().to_string())
            .ok_or_else(|| Error::schema(path, format!("item without <{tag}>")))
    };
    doc.descendants()
        .filter(|n| n.has_tag_name("item"))
        .map(|item| {
            let attr =
                |name: &str| item.attribute(name).ok_or_else(|| Error::schema(path, format!("item without `{name}`")));
            let id = attr("id")?;
            let asks_for = match attr("asks-for")? {
                "cause" => AsksFor::Cause,
                "effect" => AsksFor::Effect,
                other => return Err(Error::schema(path, format!("asks-for `{other}`"))),
            };
            Ok(Instance {
                id: format!("copa-{id}"),
                dataset: DatasetName::Copa.id().into(),
                context: None,
                question: child_text(item, "p")?,
                choices: vec![child_text(item, "a1")?, child_text(item, "a2")?],
                gold: parse_index(path, attr("most-plausible-alternative")?, 1)?,
                concept: None,
                asks_for: Some(asks_for),
            })
        })
        .collect()
}

fn swag(path: &Path) -> Result<Vec<Instance>> {
    let (headers, rows) = csv_records(path, true)?;
    let cols = Columns { path, headers: headers.unwrap_or_default() };
    let has_startphrase = cols.index("startphrase").is_ok();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let question = if has_startphrase {
                cols.get(row, "startphrase")?.to_string()
            } else {
                format!("{} {}", cols.get(row, "sent1")?, cols.get(row, "sent2")?)
            };
            let choices =
                (0..4).map(|k| cols.get(row, &format!("ending{k}")).map(str::to_string)).collect::<Result<Vec<_>>>()?;
            Ok(Instance {
                id: format!("swag-{i}"),
                dataset: DatasetName::Swag.id().into(),
                context: None,
                question: question.trim().to_string(),
                choices,
                gold: parse_index(path, cols.get(row, "label")?, 0)?,
                concept: None,
                asks_for: None,
            })
        })
        .collect()
}

fn sct(path: &Path) -> Result<Vec<Instance>> {
    let (headers, rows) = csv_records(path, true)?;
    let cols = Columns { path, headers: headers.unwrap_or_default() };
    rows.iter()
        .map(|row| {
            let context =
                (1..=3).map(|k| cols.get(row, &format!("InputSentence{k}"))).collect::<Result<Vec<_>>>()?.join(" ");
            Ok(Instance {
                id: cols.get(row, "InputStoryid")?.to_string(),
                dataset: DatasetName::Sct.id().into(),
                context: Some(context),
                question: cols.get(row, "InputSentence4")?.into(),
                choices: vec![
                    cols.get(row, "RandomFifthSentenceQuiz1")?.into(),
                    cols.get(row, "RandomFifthSentenceQuiz2")?.into(),
                ],
                gold: parse_index(path, cols.get(row, "AnswerRightEnding")?, 1)?,
                concept: None,
                asks_for: None,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct SqaRecord {
    context: String,
    question: String,
    #[serde(rename = "answerA")]
    answer_a: String,
    #[serde(rename = "answerB")]
    answer_b: String,
    #[serde(rename = "answerC")]
    answer_c: String,
}

fn sqa(path: &Path) -> Result<Vec<Instance>> {
    let records: Vec<SqaRecord> = jsonl(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let labels_path = path.with_file_name(format!("{stem}-labels.lst"));
    let labels: Vec<String> =
        read(&labels_path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    if labels.len() != records.len() {
        return Err(Error::schema(&labels_path, format!("{} labels for {} records", labels.len(), records.len())));
    }
    records
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (r, label))| {
            Ok(Instance {
                id: format!("sqa-{i}"),
                dataset: DatasetName::Sqa.id().into(),
                context: Some(r.context),
                question: r.question,
                choices: vec![r.answer_a, r.answer_b, r.answer_c],
                gold: parse_index(&labels_path, &label, 1)?,
                concept: None,
                asks_for: None,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct CqaRecord {
    id: String,
    context: String,
    question: String,
    answer0: String,
    answer1: String,
    answer2: String,
    answer3: String,
    label: Option<serde_json::Value>,
}

fn cqa(path: &Path) -> Result<Vec<Instance>> {
    let records: Vec<CqaRecord> = if path.extension().is_some_and(|e| e == "csv") {
        let (headers, rows) = csv_records(path, true)?;
        let cols = Columns { path, headers: headers.unwrap_or_default() };
        rows.iter()
            .map(|row| {
                Ok(CqaRecord {
                    id: cols.get(row, "id")?.into(),
                    context: cols.get(row, "context")?.into(),
                    question: cols.get(row, "question")?.into(),
                    answer0: cols.get(row, "answer0")?.into(),
                    answer1: cols.get(row, "answer1")?.into(),
                    answer2: cols.get(row, "answer2")?.into(),
                    answer3: cols.get(row, "answer3")?.into(),
                    label: Some(serde_json::Value::String(cols.get(row, "label")?.into())),
                })
            })
            .collect::<Result<_>>()?
    } else {
        jsonl(path)?
    };
    records
        .into_iter()
        .map(|r| {
            let label = match &r.label {
                Some(serde_json::Value::Number(n)) => n.to_string(),
                Some(serde_json::Value::String(s)) => s.clone(),
                _ => return Err(Error::schema(path, format!("{} has no label (unlabelled split?)", r.id))),
            };
            Ok(Instance {
                id: r.id,
                dataset: DatasetName::Cqa.id().into(),
                context: Some(r.context),
                question: r.question,
                choices: vec![r.answer0, r.answer1, r.answer2, r.answer3],
                gold: parse_index(path, &label, 0)?,
                concept: None,
                asks_for: None,
            })
        })
        .collect()
}
