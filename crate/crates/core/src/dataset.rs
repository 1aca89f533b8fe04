//! Parsers that normalize the four benchmark datasets (SQuAD v1.1, MMLU,
//! Hellaswag, ARC) into a single item model, with deterministic seeded
//! subsampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in record {index}: {msg}")]
    Parse { index: usize, msg: String },
    #[error("validation error in record {index}: {msg}")]
    Validation { index: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    Squad,
    Mmlu,
    Hellaswag,
    Arc,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Squad => "squad",
            DatasetKind::Mmlu => "mmlu",
            DatasetKind::Hellaswag => "hellaswag",
            DatasetKind::Arc => "arc",
        }
    }

    pub fn parse(s: &str) -> Option<DatasetKind> {
        match s.to_lowercase().as_str() {
            "squad" => Some(DatasetKind::Squad),
            "mmlu" => Some(DatasetKind::Mmlu),
            "hellaswag" => Some(DatasetKind::Hellaswag),
            "arc" | "ai2_arc" | "ai2-arc" => Some(DatasetKind::Arc),
            _ => None,
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Gold {
    /// A multiple-choice label.
    Label(String),
    /// Acceptable free-text answers (SQuAD).
    Answers(Vec<String>),
}

/// One benchmark question in unified form. The question text includes the
/// reading passage for SQuAD and the context for Hellaswag; `choices` is
/// empty for SQuAD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchItem {
    pub dataset: DatasetKind,
    pub item_id: String,
    pub question: String,
    pub choices: Vec<(String, String)>,
    pub gold: Gold,
}

impl BenchItem {
    fn validate(&self, index: usize) -> Result<()> {
        match &self.gold {
            Gold::Label(label) => {
                if self.choices.len() < 2 || self.choices.len() > 5 {
                    return Err(DatasetError::Validation {
                        index,
                        msg: format!("{} choices outside 2..=5", self.choices.len()),
                    });
                }
                if !self.choices.iter().any(|(l, _)| l == label) {
                    return Err(DatasetError::Validation {
                        index,
                        msg: format!("answer label {label:?} not among choice labels"),
                    });
                }
            }
            Gold::Answers(answers) => {
                if answers.is_empty() {
                    return Err(DatasetError::Validation {
                        index,
                        msg: "no acceptable answer strings".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Lowercase, strip punctuation, collapse whitespace, drop English
/// articles.
pub fn normalize_text_answer(raw: &str) -> String {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

// -- SQuAD v1.1 -------------------------------------------------------------

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
}

pub fn parse_squad(text: &str) -> Result<Vec<BenchItem>> {
    let file: SquadFile = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
        index: 0,
        msg: format!("not a SQuAD v1.1 object: {e}"),
    })?;
    let mut items = Vec::new();
    let mut index = 0usize;
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let answers: Vec<String> = qa.answers.iter().map(|a| a.text.clone()).collect();
                let item = BenchItem {
                    dataset: DatasetKind::Squad,
                    item_id: qa.id,
                    question: format!("{}\n\n{}", para.context, qa.question),
                    choices: Vec::new(),
                    gold: Gold::Answers(answers),
                };
                item.validate(index)?;
                items.push(item);
                index += 1;
            }
        }
    }
    Ok(items)
}

// -- MMLU (headerless CSV: question,A,B,C,D,answer) -------------------------

const MC_LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];

pub fn parse_mmlu(text: &str) -> Result<Vec<BenchItem>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut items = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Parse {
            index,
            msg: e.to_string(),
        })?;
        if rec.len() != 6 {
            return Err(DatasetError::Parse {
                index,
                msg: format!("expected 6 fields (question,A,B,C,D,answer), got {}", rec.len()),
            });
        }
        let question = rec[0].to_string();
        let choices: Vec<(String, String)> = (0..4)
            .map(|i| (MC_LABELS[i].to_string(), rec[i + 1].to_string()))
            .collect();
        let raw_answer = rec[5].trim();
        // the public dumps use either an integer index or a letter
        let gold = if let Ok(idx) = raw_answer.parse::<usize>() {
            MC_LABELS
                .get(idx)
                .filter(|_| idx < 4)
                .map(|l| l.to_string())
                .ok_or(DatasetError::Validation {
                    index,
                    msg: format!("answer index {idx} out of range 0..=3"),
                })?
        } else if raw_answer.len() == 1 {
            raw_answer.to_uppercase()
        } else {
            return Err(DatasetError::Validation {
                index,
                msg: format!("unrecognized answer field {raw_answer:?}"),
            });
        };
        let item = BenchItem {
            dataset: DatasetKind::Mmlu,
            item_id: format!("mmlu-{index}"),
            question,
            choices,
            gold: Gold::Label(gold),
        };
        item.validate(index)?;
        items.push(item);
    }
    Ok(items)
}

// -- Hellaswag (JSONL: ctx, endings[4], label) ------------------------------

#[derive(Deserialize)]
struct HellaswagRecord {
    #[serde(default)]
    ind: Option<u64>,
    ctx: String,
    endings: Vec<String>,
    label: serde_json::Value,
}

pub fn parse_hellaswag(text: &str) -> Result<Vec<BenchItem>> {
    let mut items = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: HellaswagRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            index,
            msg: e.to_string(),
        })?;
        if rec.endings.len() != 4 {
            return Err(DatasetError::Parse {
                index,
                msg: format!("expected 4 endings, got {}", rec.endings.len()),
            });
        }
        let label_idx = match &rec.label {
            serde_json::Value::Number(n) => n.as_u64(),
            serde_json::Value::String(s) => s.parse::<u64>().ok(),
            _ => None,
        }
        .ok_or(DatasetError::Parse {
            index,
            msg: format!("label must be an integer 0-3, got {}", rec.label),
        })?;
        if label_idx > 3 {
            return Err(DatasetError::Validation {
                index,
                msg: format!("label {label_idx} out of range 0..=3"),
            });
        }
        let choices: Vec<(String, String)> = rec
            .endings
            .iter()
            .enumerate()
            .map(|(i, e)| (MC_LABELS[i].to_string(), e.clone()))
            .collect();
        let item = BenchItem {
            dataset: DatasetKind::Hellaswag,
            item_id: rec
                .ind
                .map(|i| format!("hellaswag-{i}"))
                .unwrap_or_else(|| format!("hellaswag-{index}")),
            question: format!("{}\nWhich ending fits best?", rec.ctx),
            choices,
            gold: Gold::Label(MC_LABELS[label_idx as usize].to_string()),
        };
        item.validate(index)?;
        items.push(item);
    }
    Ok(items)
}

// -- ARC (JSONL: question.stem, question.choices[], answerKey) --------------

#[derive(Deserialize)]
struct ArcRecord {
    #[serde(default)]
    id: Option<String>,
    question: ArcQuestion,
    #[serde(rename = "answerKey")]
    answer_key: String,
}

#[derive(Deserialize)]
struct ArcQuestion {
    stem: String,
    choices: Vec<ArcChoice>,
}

#[derive(Deserialize)]
struct ArcChoice {
    label: String,
    text: String,
}

pub fn parse_arc(text: &str) -> Result<Vec<BenchItem>> {
    let mut items = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArcRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            index,
            msg: e.to_string(),
        })?;
        let item = BenchItem {
            dataset: DatasetKind::Arc,
            item_id: rec.id.unwrap_or_else(|| format!("arc-{index}")),
            question: rec.question.stem,
            choices: rec
                .question
                .choices
                .iter()
                .map(|c| (c.label.clone(), c.text.clone()))
                .collect(),
            gold: Gold::Label(rec.answer_key),
        };
        item.validate(index)?;
        items.push(item);
    }
    Ok(items)
}

/// Seeded uniform subsample without replacement, order-stable: the chosen
/// items keep their file order.
pub fn subsample(items: Vec<BenchItem>, limit: usize, seed: u64) -> Vec<BenchItem> {
    if limit >= items.len() {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..items.len()).collect();
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut keep = vec![false; items.len()];
    for i in idx.into_iter().take(limit) {
        keep[i] = true;
    }
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, item)| keep[i].then_some(item))
        .collect()
}

pub fn parse_dataset(kind: DatasetKind, text: &str) -> Result<Vec<BenchItem>> {
    match kind {
        DatasetKind::Squad => parse_squad(text),
        DatasetKind::Mmlu => parse_mmlu(text),
        DatasetKind::Hellaswag => parse_hellaswag(text),
        DatasetKind::Arc => parse_arc(text),
    }
}

/// Loads and parses a dataset file, then applies the seeded subsample when
/// `limit` is below the item count.
pub fn load_dataset(
    kind: DatasetKind,
    path: &Path,
    limit: Option<usize>,
    seed: u64,
) -> Result<Vec<BenchItem>> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let items = parse_dataset(kind, &text)?;
    Ok(match limit {
        Some(l) => subsample(items, l, seed),
        None => items,
    })
}
