//! Linguistic characterization of prompt corpora: TF-IDF phase keywords,
//! emotion proportions, sentiment polarity, word-length statistics, and
//! femaleness scoring.
//!
//! Lexicons are data files (NRC association format for emotions) so the
//! whole analysis runs offline; the bundled lists are small and may be
//! swapped for the full NRC file.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("lexicon parse error at line {line}: {msg}")]
    LexiconParse { line: usize, msg: String },
    #[error("remote femaleness scoring failed: {0}")]
    Remote(String),
}

pub type Result<T> = std::result::Result<T, LexiError>;

pub const EMOTIONS: [Emotion; 5] = [
    Emotion::Happy,
    Emotion::Sad,
    Emotion::Fear,
    Emotion::Anger,
    Emotion::Surprise,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Emotion {
    Happy,
    Sad,
    Fear,
    Anger,
    Surprise,
}

impl Emotion {
    /// Accepts both NRC names (joy, sadness) and the plain names.
    pub fn parse(s: &str) -> Option<Emotion> {
        match s {
            "joy" | "happy" => Some(Emotion::Happy),
            "sadness" | "sad" => Some(Emotion::Sad),
            "fear" => Some(Emotion::Fear),
            "anger" => Some(Emotion::Anger),
            "surprise" => Some(Emotion::Surprise),
            _ => None,
        }
    }
}

/// Per-record emotion proportions; components may overlap (a token can
/// match several emotions) and need not sum to 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmotionVector {
    pub happy: f64,
    pub sad: f64,
    pub fear: f64,
    pub anger: f64,
    pub surprise: f64,
}

impl EmotionVector {
    pub fn get(&self, e: Emotion) -> f64 {
        match e {
            Emotion::Happy => self.happy,
            Emotion::Sad => self.sad,
            Emotion::Fear => self.fear,
            Emotion::Anger => self.anger,
            Emotion::Surprise => self.surprise,
        }
    }

    fn set(&mut self, e: Emotion, v: f64) {
        match e {
            Emotion::Happy => self.happy = v,
            Emotion::Sad => self.sad = v,
            Emotion::Fear => self.fear = v,
            Emotion::Anger => self.anger = v,
            Emotion::Surprise => self.surprise = v,
        }
    }
}

/// Word -> set of emotions, loaded from NRC association format
/// (`word<TAB>emotion<TAB>flag`).
#[derive(Debug, Clone, Default)]
pub struct EmotionLexicon {
    map: HashMap<String, HashSet<Emotion>>,
}

impl EmotionLexicon {
    pub fn parse(text: &str) -> Result<EmotionLexicon> {
        let mut map: HashMap<String, HashSet<Emotion>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (word, emotion, flag) = match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(e), Some(f)) => (w, e, f),
                _ => {
                    return Err(LexiError::LexiconParse {
                        line: i + 1,
                        msg: format!("expected word<TAB>emotion<TAB>flag, got {line:?}"),
                    })
                }
            };
            let flag: u8 = flag.parse().map_err(|_| LexiError::LexiconParse {
                line: i + 1,
                msg: format!("flag must be 0 or 1, got {flag:?}"),
            })?;
            if flag == 0 {
                continue;
            }
            // emotions outside the five tracked ones are ignored, so the
            // full NRC file loads as-is
            if let Some(e) = Emotion::parse(emotion) {
                map.entry(word.to_lowercase()).or_default().insert(e);
            }
        }
        Ok(EmotionLexicon { map })
    }

    /// The lexicon bundled with the crate.
    pub fn bundled() -> EmotionLexicon {
        EmotionLexicon::parse(include_str!("../data/emotion_lexicon.txt"))
            .expect("bundled emotion lexicon is well-formed")
    }

    pub fn emotions_of(&self, word: &str) -> Option<&HashSet<Emotion>> {
        self.map.get(word)
    }

    pub fn words_for(&self, e: Emotion) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .map
            .iter()
            .filter(|(_, es)| es.contains(&e))
            .map(|(w, _)| w.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Word -> {+1, -1} valence list.
#[derive(Debug, Clone, Default)]
pub struct ValenceLexicon {
    map: HashMap<String, i8>,
}

impl ValenceLexicon {
    pub fn parse(text: &str) -> Result<ValenceLexicon> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (word, val) = match (parts.next(), parts.next()) {
                (Some(w), Some(v)) => (w, v),
                _ => {
                    return Err(LexiError::LexiconParse {
                        line: i + 1,
                        msg: format!("expected word<TAB>value, got {line:?}"),
                    })
                }
            };
            let val: i8 = val.parse().map_err(|_| LexiconParseErr(i + 1, val))?;
            if val != 1 && val != -1 {
                return Err(LexiconParseErr(i + 1, "value must be 1 or -1").into());
            }
            map.insert(word.to_lowercase(), val);
        }
        Ok(ValenceLexicon { map })
    }

    pub fn bundled() -> ValenceLexicon {
        ValenceLexicon::parse(include_str!("../data/valence_lexicon.txt"))
            .expect("bundled valence lexicon is well-formed")
    }

    pub fn valence_of(&self, word: &str) -> Option<i8> {
        self.map.get(word).copied()
    }
}

struct LexiconParseErr<T>(usize, T);

impl<T: std::fmt::Display> From<LexiconParseErr<T>> for LexiError {
    fn from(e: LexiconParseErr<T>) -> Self {
        LexiError::LexiconParse {
            line: e.0,
            msg: e.1.to_string(),
        }
    }
}

/// Lowercases, strips apostrophes, splits on non-alphabetic characters,
/// and keeps tokens of length >= 2.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\'', '\u{2019}'], "")
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| t.len() >= 2)
        .map(str::to_string)
        .collect()
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    use std::sync::OnceLock;
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Per-phase TF-IDF keywords over phase-level concatenated documents.
///
/// Each group's texts are concatenated into one phase-document; for term t
/// in document d among N documents, score = (count(t,d)/|d|) * ln(N/df(t)).
/// Stopwords are excluded. Returns the top-k terms per phase by score,
/// ties broken alphabetically.
pub fn tfidf_keywords(
    groups: &BTreeMap<String, Vec<String>>,
    k: usize,
) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
    if groups.len() < 2 {
        return Err(LexiError::Domain(format!(
            "tf-idf needs at least 2 phase groups, got {}",
            groups.len()
        )));
    }
    let stop = stopwords();
    let docs: BTreeMap<&String, Vec<String>> = groups
        .iter()
        .map(|(phase, texts)| {
            let tokens: Vec<String> = texts
                .iter()
                .flat_map(|t| tokenize(t))
                .filter(|t| !stop.contains(t.as_str()))
                .collect();
            (phase, tokens)
        })
        .collect();
    let n_docs = docs.len() as f64;

    let mut df: HashMap<&str, usize> = HashMap::new();
    for tokens in docs.values() {
        let uniq: HashSet<&str> = tokens.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }

    let mut out = BTreeMap::new();
    for (phase, tokens) in &docs {
        let total = tokens.len() as f64;
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut scored: Vec<(String, f64)> = counts
            .into_iter()
            .map(|(term, c)| {
                let tf = c as f64 / total;
                let idf = (n_docs / df[term] as f64).ln();
                (term.to_string(), tf * idf)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        out.insert((*phase).clone(), scored);
    }
    Ok(out)
}

/// Proportion of tokens associated with each emotion; a token mapped to
/// several emotions counts toward each.
pub fn emotion_proportions(tokens: &[String], lexicon: &EmotionLexicon) -> EmotionVector {
    let mut v = EmotionVector::default();
    if tokens.is_empty() {
        return v;
    }
    let n = tokens.len() as f64;
    for e in EMOTIONS {
        let hits = tokens
            .iter()
            .filter(|t| lexicon.emotions_of(t).map_or(false, |es| es.contains(&e)))
            .count();
        v.set(e, hits as f64 / n);
    }
    v
}

/// (positives - negatives) / (positives + negatives); 0 with no hits.
pub fn sentiment_polarity(tokens: &[String], valence: &ValenceLexicon) -> f64 {
    let mut pos = 0u32;
    let mut neg = 0u32;
    for t in tokens {
        match valence.valence_of(t) {
            Some(1) => pos += 1,
            Some(-1) => neg += 1,
            _ => {}
        }
    }
    if pos + neg == 0 {
        0.0
    } else {
        (pos as f64 - neg as f64) / (pos + neg) as f64
    }
}

/// Mean token character count; 0 for an empty list.
pub fn avg_word_length(tokens: &[String]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    tokens.iter().map(|t| t.chars().count()).sum::<usize>() as f64 / tokens.len() as f64
}

/// Femaleness scoring backend: either the built-in lexicon ratio or a
/// remote text-classification endpoint.
pub trait FemalenessBackend {
    fn score(&self, text: &str) -> Result<f64>;
}

/// f/(f+m) over counts of female-coded and male-coded tokens; 0.5 when
/// no gendered token is present.
#[derive(Debug, Clone)]
pub struct LexiconGenderBackend {
    female: HashSet<String>,
    male: HashSet<String>,
}

impl LexiconGenderBackend {
    pub fn new(female: impl IntoIterator<Item = String>, male: impl IntoIterator<Item = String>) -> Self {
        LexiconGenderBackend {
            female: female.into_iter().map(|w| w.to_lowercase()).collect(),
            male: male.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn bundled() -> Self {
        let load = |s: &str| -> Vec<String> {
            s.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect()
        };
        LexiconGenderBackend::new(
            load(include_str!("../data/female_coded.txt")),
            load(include_str!("../data/male_coded.txt")),
        )
    }
}

impl FemalenessBackend for LexiconGenderBackend {
    fn score(&self, text: &str) -> Result<f64> {
        let tokens = tokenize(text);
        let f = tokens.iter().filter(|t| self.female.contains(*t)).count() as f64;
        let m = tokens.iter().filter(|t| self.male.contains(*t)).count() as f64;
        if f + m == 0.0 {
            Ok(0.5)
        } else {
            Ok(f / (f + m))
        }
    }
}

#[derive(Debug, Serialize)]
struct ClassifyRequest<'a> {
    text: &'a str,
}

#[derive(Debug, Deserialize)]
struct LabelScore {
    label: String,
    score: f64,
}

/// Generic HTTP classification backend: POSTs `{"text": ...}` and reads a
/// JSON array of `{label, score}` pairs, returning the female-class
/// probability verbatim. Failures surface as errors; the caller decides
/// whether to fall back.
pub struct RemoteGenderBackend {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteGenderBackend {
    pub fn new(url: impl Into<String>, timeout: std::time::Duration) -> Self {
        RemoteGenderBackend {
            url: url.into(),
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("client construction cannot fail with these options"),
        }
    }
}

impl FemalenessBackend for RemoteGenderBackend {
    fn score(&self, text: &str) -> Result<f64> {
        let resp = self
            .client
            .post(&self.url)
            .json(&ClassifyRequest { text })
            .send()
            .map_err(|e| LexiError::Remote(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(LexiError::Remote(format!("HTTP {}", resp.status())));
        }
        let labels: Vec<LabelScore> = resp.json().map_err(|e| LexiError::Remote(e.to_string()))?;
        labels
            .iter()
            .find(|l| l.label.eq_ignore_ascii_case("female"))
            .map(|l| l.score)
            .ok_or_else(|| LexiError::Remote("no `female` label in response".into()))
    }
}

/// Full linguistic report for one record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiReport {
    pub emotions: EmotionVector,
    pub sentiment: f64,
    pub avg_word_length: f64,
    pub femaleness: f64,
    pub token_count: usize,
}

pub fn analyze_text(
    text: &str,
    emotions: &EmotionLexicon,
    valence: &ValenceLexicon,
    gender: &dyn FemalenessBackend,
) -> Result<LexiReport> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(LexiError::Domain("record has no analyzable tokens".into()));
    }
    Ok(LexiReport {
        emotions: emotion_proportions(&tokens, emotions),
        sentiment: sentiment_polarity(&tokens, valence),
        avg_word_length: avg_word_length(&tokens),
        femaleness: gender.score(text)?,
        token_count: tokens.len(),
    })
}

/// Header of the per-record analysis CSV.
pub const ANALYSIS_CSV_HEADER: &str =
    "id,condition,phase,happy,sad,fear,anger,surprise,sentiment,avg_word_len,femaleness,tokens";

pub fn write_analysis_row<W: std::io::Write>(
    mut w: W,
    id: &str,
    condition: &str,
    phase: &str,
    r: &LexiReport,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{id},{condition},{phase},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        r.emotions.happy,
        r.emotions.sad,
        r.emotions.fear,
        r.emotions.anger,
        r.emotions.surprise,
        r.sentiment,
        r.avg_word_length,
        r.femaleness,
        r.token_count
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Heavy, heavy silence."), vec!["heavy", "heavy", "silence"]);
        assert_eq!(tokenize("I'm ready!"), vec!["im", "ready"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("a 1 !").is_empty());
    }

    #[test]
    fn tfidf_hand_case() {
        let mut groups = BTreeMap::new();
        groups.insert("A".to_string(), vec!["heavy heavy silence".to_string()]);
        groups.insert("B".to_string(), vec!["buzzing ready".to_string()]);
        let kw = tfidf_keywords(&groups, 10).unwrap();
        let heavy = kw["A"].iter().find(|(t, _)| t == "heavy").unwrap();
        let expect = (2.0 / 3.0) * 2.0_f64.ln();
        assert!((heavy.1 - expect).abs() < 1e-9);
        assert!((heavy.1 - 0.4621).abs() < 5e-4);
    }

    #[test]
    fn tfidf_ubiquitous_term_scores_zero() {
        let mut groups = BTreeMap::new();
        groups.insert("A".to_string(), vec!["shared alpha".to_string()]);
        groups.insert("B".to_string(), vec!["shared beta".to_string()]);
        let kw = tfidf_keywords(&groups, 10).unwrap();
        let shared = kw["A"].iter().find(|(t, _)| t == "shared").unwrap();
        assert_eq!(shared.1, 0.0);
    }

    #[test]
    fn tfidf_k_truncation_and_group_minimum() {
        let mut groups = BTreeMap::new();
        groups.insert("A".to_string(), vec!["alpha beta gamma".to_string()]);
        groups.insert("B".to_string(), vec!["delta".to_string()]);
        let kw = tfidf_keywords(&groups, 100).unwrap();
        assert_eq!(kw["A"].len(), 3);
        let one = BTreeMap::from([("A".to_string(), vec!["x y".to_string()])]);
        assert!(tfidf_keywords(&one, 5).is_err());
    }

    fn tiny_lexicon() -> EmotionLexicon {
        EmotionLexicon::parse("sad\tsadness\t1\nhappy\tjoy\t1\ndread\tsadness\t1\ndread\tfear\t1\n")
            .unwrap()
    }

    #[test]
    fn emotion_direct_count() {
        let lex = tiny_lexicon();
        let tokens: Vec<String> = ["sad", "sad", "happy"].iter().map(|s| s.to_string()).collect();
        let v = emotion_proportions(&tokens, &lex);
        assert!((v.sad - 2.0 / 3.0).abs() < 1e-12);
        assert!((v.happy - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(v.fear, 0.0);
        assert_eq!(v.anger, 0.0);
    }

    #[test]
    fn emotion_multi_label_and_empty() {
        let lex = tiny_lexicon();
        let tokens = vec!["dread".to_string()];
        let v = emotion_proportions(&tokens, &lex);
        assert_eq!(v.sad, 1.0);
        assert_eq!(v.fear, 1.0);
        assert_eq!(emotion_proportions(&[], &lex), EmotionVector::default());
        let misses = vec!["table".to_string()];
        assert_eq!(emotion_proportions(&misses, &lex), EmotionVector::default());
    }

    #[test]
    fn emotion_order_invariant() {
        let lex = EmotionLexicon::bundled();
        let mut tokens = tokenize("tired heavy buzzing glad calm afraid gloom cheerful");
        let v1 = emotion_proportions(&tokens, &lex);
        tokens.reverse();
        let v2 = emotion_proportions(&tokens, &lex);
        assert_eq!(v1, v2);
    }

    #[test]
    fn sentiment_cases() {
        let val = ValenceLexicon::parse("good\t1\nbad\t-1\n").unwrap();
        let toks = |s: &str| tokenize(s);
        assert!((sentiment_polarity(&toks("good good bad"), &val) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(sentiment_polarity(&toks("table chair"), &val), 0.0);
        assert_eq!(sentiment_polarity(&toks("bad bad"), &val), -1.0);
    }

    #[test]
    fn word_length_cases() {
        let toks = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(avg_word_length(&toks(&["heavy", "silence"])), 6.0);
        assert_eq!(avg_word_length(&[]), 0.0);
        assert_eq!(avg_word_length(&toks(&["ab"])), 2.0);
    }

    #[test]
    fn avg_word_length_weighted_mean_property() {
        let a: Vec<String> = tokenize("one two three");
        let b: Vec<String> = tokenize("extraordinarily verbose");
        let ma = avg_word_length(&a);
        let mb = avg_word_length(&b);
        let combined: Vec<String> = a.iter().chain(&b).cloned().collect();
        let mc = avg_word_length(&combined);
        assert!(mc >= ma.min(mb) && mc <= ma.max(mb));
    }

    #[test]
    fn lexicon_gender_cases() {
        let backend = LexiconGenderBackend::new(
            ["she".to_string(), "her".to_string()],
            ["he".to_string(), "him".to_string()],
        );
        assert_eq!(backend.score("the table is wooden").unwrap(), 0.5);
        assert_eq!(backend.score("she loves her garden").unwrap(), 1.0);
        assert_eq!(backend.score("she met him").unwrap(), 0.5);
    }

    #[test]
    fn bundled_lexicons_load() {
        let e = EmotionLexicon::bundled();
        assert!(e.len() > 100, "bundled emotion lexicon too small: {}", e.len());
        // keywords from the tone bands must be covered so analysis can see them
        for w in ["heavy", "silence", "buzzing", "ready", "fatigue", "tired"] {
            assert!(e.emotions_of(w).is_some(), "missing {w}");
        }
        let stop = stopwords();
        assert_eq!(stop.len(), 127);
        ValenceLexicon::bundled();
        LexiconGenderBackend::bundled();
    }

    #[test]
    fn lexicon_parse_errors_carry_line() {
        let err = EmotionLexicon::parse("ok\tjoy\t1\nbroken-line\n").unwrap_err();
        match err {
            LexiError::LexiconParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
