//! Orchestrates the three-condition benchmark: for each item x model x
//! condition, queries the model under the condition's system prompt,
//! scores the response, and appends one result line to a resumable log.
//!
//! Prompt-to-item assignment is stratified over cycle positions so every
//! phase and hormone quintile receives coverage even at small item counts.
//! The result log is append-only; reruns skip keys already present.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, BenchItem, DatasetKind, Gold};
use crate::gateway::ChatProvider;
use crate::prompt::{Condition, PromptRecord, DEFAULT_BASELINE};
use crate::rhythm::{CyclePhase, HormoneState};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("plan error: {0}")]
    Plan(String),
    #[error("dataset error: {0}")]
    Dataset(#[from] dataset::DatasetError),
    #[error("result log error: {0}")]
    Log(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub path: PathBuf,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scorer {
    Judge,
    ExactMatch,
}

/// How SQuAD-style free-text answers are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextMatchMode {
    Contains,
    Equals,
}

impl Default for TextMatchMode {
    fn default() -> Self {
        TextMatchMode::Contains
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPlan {
    pub datasets: Vec<DatasetSpec>,
    /// Conditions to run; Baseline is always included as the anchor.
    pub conditions: Vec<Condition>,
    pub baseline_text: String,
    pub seed: u64,
    pub output_path: PathBuf,
    #[serde(default)]
    pub text_match: TextMatchMode,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    4
}

impl RunPlan {
    pub fn conditions_with_baseline(&self) -> Vec<Condition> {
        let mut out = self.conditions.clone();
        if !out.contains(&Condition::Baseline) {
            out.push(Condition::Baseline);
        }
        out
    }
}

/// The judge: either the deterministic exact-match scorer or an LLM.
pub enum Judge {
    Exact,
    Llm(Arc<dyn ChatProvider>),
}

/// Runtime handles matched to the plan: model providers and the judge.
pub struct BenchContext {
    pub models: Vec<(String, Arc<dyn ChatProvider>)>,
    pub judge: Judge,
    /// Corpora keyed by condition (Baseline needs none).
    pub corpora: BTreeMap<Condition, Vec<PromptRecord>>,
}

/// One scored response under one condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub dataset: DatasetKind,
    pub item_id: String,
    pub model: String,
    pub condition: Condition,
    pub prompt_id: String,
    pub cycle_position: Option<f64>,
    pub phase: Option<CyclePhase>,
    pub hormones: Option<HormoneState>,
    pub response_text: Option<String>,
    pub score: Option<f64>,
    pub scorer: Scorer,
    pub error: Option<String>,
    pub timestamp: String,
}

impl BenchResult {
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.dataset, self.item_id, self.model, self.condition, self.prompt_id
        )
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub per_condition: BTreeMap<String, ConditionSummary>,
    pub new_results: usize,
    pub skipped_existing: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConditionSummary {
    pub n: usize,
    pub mean_score: f64,
}

/// 1.0 iff the first standalone letter A-E in the response equals the gold
/// label; SQuAD items match by normalized containment (or equality).
pub fn exact_match_score(item: &BenchItem, response: &str, mode: TextMatchMode) -> f64 {
    match &item.gold {
        Gold::Label(gold) => {
            let found = first_standalone_letter(response);
            match found {
                Some(letter) if letter.eq_ignore_ascii_case(gold) => 1.0,
                _ => 0.0,
            }
        }
        Gold::Answers(answers) => {
            let norm_resp = dataset::normalize_text_answer(response);
            let hit = answers.iter().any(|a| {
                let g = dataset::normalize_text_answer(a);
                if g.is_empty() {
                    return false;
                }
                match mode {
                    TextMatchMode::Contains => norm_resp.contains(&g),
                    TextMatchMode::Equals => norm_resp == g,
                }
            });
            if hit {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn first_standalone_letter(text: &str) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphabetic() || !('A'..='E').contains(&c.to_ascii_uppercase()) {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if prev_ok && next_ok {
            return Some(c.to_ascii_uppercase().to_string());
        }
    }
    None
}

fn judge_user_message(item: &BenchItem, response: &str) -> String {
    let gold = match &item.gold {
        Gold::Label(l) => {
            let text = item
                .choices
                .iter()
                .find(|(label, _)| label == l)
                .map(|(_, t)| t.as_str())
                .unwrap_or("");
            format!("{l} ({text})")
        }
        Gold::Answers(a) => a.join(" | "),
    };
    format!(
        "Grade the candidate answer for correctness and relevance.\n\
         Question:\n{}\n\nReference answer: {}\n\nCandidate answer: {}\n\n\
         Reply with a single decimal number between 0.0 and 1.0 and nothing else.",
        item.question, gold, response
    )
}

/// First decimal number in a string, if any.
pub fn parse_first_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                j += 1;
            }
            // trim a trailing dot ("1." -> "1")
            let mut end = j;
            if bytes[end - 1] == b'.' {
                end -= 1;
            }
            if let Ok(v) = s[start..end].parse::<f64>() {
                return Some(v);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

/// Scores through an LLM judge; out-of-range parses are clamped, an
/// unparseable reply is re-asked once.
pub fn judge_score(
    item: &BenchItem,
    response: &str,
    judge: &dyn ChatProvider,
) -> std::result::Result<f64, String> {
    let system = "You are a strict grader. Output only a single decimal number in [0.0, 1.0].";
    let user = judge_user_message(item, response);
    for attempt in 0..2 {
        match judge.chat(system, &user, 0.0) {
            Ok(completion) => {
                if let Some(v) = parse_first_number(&completion.text) {
                    return Ok(v.clamp(0.0, 1.0));
                }
                if attempt == 1 {
                    return Err(format!("unparseable judge reply: {:?}", completion.text));
                }
            }
            Err(e) => return Err(format!("judge unreachable: {e}")),
        }
    }
    unreachable!("loop returns on second attempt")
}

/// Renders a benchmark item as the user message.
pub fn render_question(item: &BenchItem) -> String {
    if item.choices.is_empty() {
        format!("{}\nAnswer concisely.", item.question)
    } else {
        let opts: Vec<String> = item
            .choices
            .iter()
            .map(|(l, t)| format!("{l}. {t}"))
            .collect();
        format!(
            "{}\n{}\nAnswer with the letter only.",
            item.question,
            opts.join("\n")
        )
    }
}

/// Deterministic prompt assignment: positions are shuffled once per
/// (plan seed, condition) and items walk that permutation round-robin;
/// among a position's records (one per context) the pick is seeded by the
/// item id.
pub fn assign_prompts<'a>(
    items: &[BenchItem],
    corpus: &'a [PromptRecord],
    condition: Condition,
    seed: u64,
) -> Result<Vec<&'a PromptRecord>> {
    if corpus.is_empty() {
        return Err(BenchError::Plan(format!(
            "empty corpus for condition {condition}"
        )));
    }
    let mut by_pos: BTreeMap<String, Vec<&PromptRecord>> = BTreeMap::new();
    for rec in corpus {
        let pos = rec
            .position
            .ok_or_else(|| BenchError::Plan(format!("corpus record {} has no position", rec.id)))?;
        by_pos.entry(format!("{pos:011.2}")).or_default().push(rec);
    }
    let mut positions: Vec<&String> = by_pos.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ hash(condition.name()));
    for i in (1..positions.len()).rev() {
        let j = rng.gen_range(0..=i);
        positions.swap(i, j);
    }
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let pos = positions[i % positions.len()];
        let records = &by_pos[pos];
        let mut item_rng = ChaCha8Rng::seed_from_u64(seed ^ hash(&item.item_id));
        out.push(records[item_rng.gen_range(0..records.len())]);
    }
    Ok(out)
}

fn hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

fn read_existing_keys(path: &Path) -> Result<HashSet<String>> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let file = std::fs::File::open(path).map_err(|e| BenchError::Log(e.to_string()))?;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::Log(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        // a half-written trailing line (crash artifact) is skipped, not fatal
        if let Ok(result) = serde_json::from_str::<BenchResult>(&line) {
            keys.insert(result.key());
        }
    }
    Ok(keys)
}

/// Truncates a crash-torn trailing line so the next append starts at a
/// clean record boundary.
fn repair_log(path: &Path) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let bytes = std::fs::read(path).map_err(|e| BenchError::Log(e.to_string()))?;
    let mut good_end = 0usize;
    let mut start = 0usize;
    while start < bytes.len() {
        let end = match bytes[start..].iter().position(|&b| b == b'\n') {
            Some(i) => start + i + 1,
            None => break, // no newline: the tail was torn mid-write
        };
        let line = &bytes[start..end - 1];
        if line.iter().all(u8::is_ascii_whitespace)
            || serde_json::from_slice::<BenchResult>(line).is_ok()
        {
            good_end = end;
        }
        start = end;
    }
    if good_end < bytes.len() {
        let f = std::fs::OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| BenchError::Log(e.to_string()))?;
        f.set_len(good_end as u64).map_err(|e| BenchError::Log(e.to_string()))?;
    }
    Ok(())
}

/// Reads a full result log.
pub fn read_results(path: &Path) -> Result<Vec<BenchResult>> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::Log(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::Log(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: BenchResult = serde_json::from_str(&line)
            .map_err(|e| BenchError::Log(format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

struct Task {
    item: BenchItem,
    model_idx: usize,
    condition: Condition,
    prompt: PromptRecord,
}

/// Runs the benchmark plan to quiescence. Per-request failures become
/// error results; only an unwritable log aborts the run.
pub fn run_benchmark(plan: &RunPlan, ctx: &BenchContext) -> Result<RunSummary> {
    if ctx.models.is_empty() {
        return Err(BenchError::Plan("no models configured".into()));
    }
    let conditions = plan.conditions_with_baseline();
    for c in &conditions {
        if *c != Condition::Baseline && !ctx.corpora.contains_key(c) {
            return Err(BenchError::Plan(format!("no corpus supplied for condition {c}")));
        }
        if *c != Condition::Baseline && ctx.corpora[c].is_empty() {
            return Err(BenchError::Plan(format!("corpus for condition {c} is empty")));
        }
    }

    repair_log(&plan.output_path)?;
    let existing = read_existing_keys(&plan.output_path)?;
    let baseline_rec = PromptRecord::baseline(if plan.baseline_text.is_empty() {
        DEFAULT_BASELINE
    } else {
        &plan.baseline_text
    });

    let mut tasks: Vec<Task> = Vec::new();
    let mut skipped = 0usize;
    for spec in &plan.datasets {
        let items = dataset::load_dataset(spec.kind, &spec.path, spec.limit, plan.seed)?;
        for condition in &conditions {
            let assigned: Vec<PromptRecord> = if *condition == Condition::Baseline {
                items.iter().map(|_| baseline_rec.clone()).collect()
            } else {
                assign_prompts(&items, &ctx.corpora[condition], *condition, plan.seed)?
                    .into_iter()
                    .cloned()
                    .collect()
            };
            for (model_idx, (model_name, _)) in ctx.models.iter().enumerate() {
                for (item, prompt) in items.iter().zip(&assigned) {
                    let key = format!(
                        "{}|{}|{}|{}|{}",
                        spec.kind, item.item_id, model_name, condition, prompt.id
                    );
                    if existing.contains(&key) {
                        skipped += 1;
                        continue;
                    }
                    tasks.push(Task {
                        item: item.clone(),
                        model_idx,
                        condition: *condition,
                        prompt: prompt.clone(),
                    });
                }
            }
        }
    }

    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&plan.output_path)
        .map_err(|e| BenchError::Log(format!("{}: {e}", plan.output_path.display())))?;

    let (tx, rx) = mpsc::channel::<BenchResult>();
    let n_tasks = tasks.len();
    let workers = plan.workers.max(1).min(n_tasks.max(1));
    let task_queue = std::sync::Mutex::new(tasks.into_iter());

    let mut results: Vec<BenchResult> = Vec::with_capacity(n_tasks);
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &task_queue;
            let models = &ctx.models;
            let judge = &ctx.judge;
            let text_match = plan.text_match;
            scope.spawn(move || loop {
                let task = match queue.lock().unwrap().next() {
                    Some(t) => t,
                    None => break,
                };
                let result = run_task(&task, models, judge, text_match);
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer: exactly one thread appends to the log
        for result in rx {
            let line = serde_json::to_string(&result)
                .map_err(|e| BenchError::Log(e.to_string()))?;
            writeln!(log, "{line}").map_err(|e| BenchError::Log(e.to_string()))?;
            results.push(result);
        }
        log.flush().map_err(|e| BenchError::Log(e.to_string()))?;
        Ok(())
    })?;

    let mut summary = RunSummary {
        new_results: results.len(),
        skipped_existing: skipped,
        ..RunSummary::default()
    };
    for r in &results {
        if r.error.is_some() {
            summary.errors += 1;
            continue;
        }
        let entry = summary
            .per_condition
            .entry(r.condition.name().to_string())
            .or_default();
        entry.n += 1;
        entry.mean_score += r.score.unwrap_or(0.0);
    }
    for c in summary.per_condition.values_mut() {
        if c.n > 0 {
            c.mean_score /= c.n as f64;
        }
    }
    Ok(summary)
}

fn run_task(
    task: &Task,
    models: &[(String, Arc<dyn ChatProvider>)],
    judge: &Judge,
    text_match: TextMatchMode,
) -> BenchResult {
    let (model_name, provider) = &models[task.model_idx];
    let question = render_question(&task.item);
    let mut result = BenchResult {
        dataset: task.item.dataset,
        item_id: task.item.item_id.clone(),
        model: model_name.clone(),
        condition: task.condition,
        prompt_id: task.prompt.id.clone(),
        cycle_position: task.prompt.position,
        phase: task.prompt.phase,
        hormones: task.prompt.hormones,
        response_text: None,
        score: None,
        scorer: match judge {
            Judge::Exact => Scorer::ExactMatch,
            Judge::Llm(_) => Scorer::Judge,
        },
        error: None,
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    match provider.chat(&task.prompt.text, &question, 0.0) {
        Ok(completion) => {
            result.response_text = Some(completion.text.clone());
            match judge {
                Judge::Exact => {
                    result.score = Some(exact_match_score(&task.item, &completion.text, text_match));
                }
                Judge::Llm(j) => match judge_score(&task.item, &completion.text, j.as_ref()) {
                    Ok(score) => result.score = Some(score),
                    Err(e) => result.error = Some(e),
                },
            }
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}
