//! Analogy suites and the 3CosAdd / 3CosMul solvers.
//!
//! A question `a : a* :: b : b*` is answered by ranking every candidate `c`:
//!
//! * 3CosAdd: `cos(c, b̂ - â + â*)` on unit-normalized vectors.
//! * 3CosMul: `s(c,b)·s(c,a*) / (s(c,a) + ε)` with `s(x,y) = (cos(x,y)+1)/2`,
//!   which keeps every factor non-negative.
//!
//! Query words are removed from the candidates unless configured otherwise,
//! and ties go to the smaller word id.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embeddings::{top_k, EmbeddingSpace, Neighbor};
use crate::scalar::{dot, Real};
use crate::vocab::WordId;

/// Ranking depth stored with every error record.
pub const DEFAULT_RECORD_DEPTH: usize = 5;

#[derive(Debug, Error)]
pub enum AnalogyError {
    #[error("suite line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown analogy categories: {}", .0.join(", "))]
    UnknownCategories(Vec<String>),
    #[error("analogy suite is empty")]
    EmptySuite,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed record on line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Morphosyntactic,
    Semantic,
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationKind::Morphosyntactic => "morphosyntactic",
            RelationKind::Semantic => "semantic",
        })
    }
}

const SEMANTIC_CATEGORIES: &[&str] = &[
    "capital-common-countries",
    "capital-world",
    "currency",
    "city-in-state",
    "family",
    "regione-capoluogo",
];

const MORPHOSYNTACTIC_CATEGORIES: &[&str] = &[
    "adjective-to-adverb",
    "opposite",
    "comparative",
    "superlative",
    "present-participle",
    "nationality-adjective",
    "past-tense",
    "plural",
    "plural-nouns",
    "plural-verbs",
    "remote-past-verbs",
    "noun-masculine-feminine-singular",
    "noun-masculine-feminine-plural",
];

fn normalize_category(name: &str) -> String {
    let lower = name.trim().to_lowercase().replace([' ', '_'], "-");
    // "gram3-comparative" -> "comparative"
    if let Some(rest) = lower.strip_prefix("gram") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit());
        if let Some(rest) = rest.strip_prefix('-') {
            return rest.to_owned();
        }
    }
    lower
}

/// Kind of a category name, from the built-in table covering the English
/// and Italian Google-style suites. Names carrying a `gramN-` prefix are
/// morphosyntactic. Qualified variants such as `plural-verbs-1st-person`
/// match their base name.
pub fn classify_category(name: &str) -> Option<RelationKind> {
    if name.trim().to_lowercase().starts_with("gram") {
        return Some(RelationKind::Morphosyntactic);
    }
    let norm = normalize_category(name);
    let matches = |known: &&str| {
        norm == *known
            || norm
                .strip_prefix(known)
                .is_some_and(|rest| rest.starts_with(['-', '(']))
    };
    // longest-match is unnecessary: no semantic name prefixes a morphosyntactic one
    if SEMANTIC_CATEGORIES.iter().any(matches) {
        Some(RelationKind::Semantic)
    } else if MORPHOSYNTACTIC_CATEGORIES.iter().any(matches) {
        Some(RelationKind::Morphosyntactic)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject categories missing from the built-in kind table.
    pub strict: bool,
    /// Kind given to unknown categories when not strict.
    pub default_kind: RelationKind,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            strict: false,
            default_kind: RelationKind::Semantic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnalogyQuestion {
    pub a: String,
    pub a_star: String,
    pub b: String,
    pub b_star: String,
    pub category: String,
    pub kind: RelationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub name: String,
    pub kind: RelationKind,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnalogySuite {
    pub questions: Vec<AnalogyQuestion>,
    /// In order of first appearance.
    pub categories: Vec<CategoryInfo>,
}

impl AnalogySuite {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Question counts as (morphosyntactic, semantic).
    pub fn kind_totals(&self) -> (usize, usize) {
        self.categories
            .iter()
            .fold((0, 0), |(m, s), c| match c.kind {
                RelationKind::Morphosyntactic => (m + c.count, s),
                RelationKind::Semantic => (m, s + c.count),
            })
    }

    /// SHA-256 over the questions in order; equal suites share it.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for q in &self.questions {
            h.update(
                format!(
                    "{}\t{} {} {} {}\n",
                    q.category, q.a, q.a_star, q.b, q.b_star
                )
                .as_bytes(),
            );
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds a suite from questions, deriving the category list.
    pub fn from_questions(questions: Vec<AnalogyQuestion>) -> Self {
        let mut categories: Vec<CategoryInfo> = Vec::new();
        let mut pos: HashMap<String, usize> = HashMap::new();
        for q in &questions {
            let i = *pos.entry(q.category.clone()).or_insert_with(|| {
                categories.push(CategoryInfo {
                    name: q.category.clone(),
                    kind: q.kind,
                    count: 0,
                });
                categories.len() - 1
            });
            categories[i].count += 1;
        }
        AnalogySuite {
            questions,
            categories,
        }
    }
}

/// Parses the Google analogy format: `: category` section headers followed
/// by lines of four whitespace-separated words. Words are lowercased.
pub fn parse_suite_from<R: BufRead>(
    reader: R,
    options: ParseOptions,
) -> Result<AnalogySuite, AnalogyError> {
    let mut questions = Vec::new();
    let mut current: Option<(String, RelationKind)> = None;
    let mut unknown: Vec<String> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(name) = text.strip_prefix(':') {
            let name = name.trim();
            if name.is_empty() {
                return Err(AnalogyError::Parse {
                    line: lineno,
                    message: "empty category name".into(),
                });
            }
            let kind = match classify_category(name) {
                Some(k) => k,
                None => {
                    if !unknown.iter().any(|u| u == name) {
                        unknown.push(name.to_owned());
                    }
                    options.default_kind
                }
            };
            current = Some((name.to_owned(), kind));
            continue;
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() != 4 {
            return Err(AnalogyError::Parse {
                line: lineno,
                message: format!("expected 4 words, found {}: {text:?}", words.len()),
            });
        }
        let Some((category, kind)) = &current else {
            return Err(AnalogyError::Parse {
                line: lineno,
                message: "question before the first `: category` line".into(),
            });
        };
        questions.push(AnalogyQuestion {
            a: words[0].to_lowercase(),
            a_star: words[1].to_lowercase(),
            b: words[2].to_lowercase(),
            b_star: words[3].to_lowercase(),
            category: category.clone(),
            kind: *kind,
        });
    }
    if options.strict && !unknown.is_empty() {
        return Err(AnalogyError::UnknownCategories(unknown));
    }
    Ok(AnalogySuite::from_questions(questions))
}

pub fn parse_suite_with(path: &Path, options: ParseOptions) -> Result<AnalogySuite, AnalogyError> {
    parse_suite_from(BufReader::new(File::open(path)?), options)
}

pub fn parse_suite(path: &Path) -> Result<AnalogySuite, AnalogyError> {
    parse_suite_with(path, ParseOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    CosAdd,
    CosMul,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CosAdd => "cosadd",
            Method::CosMul => "cosmul",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosadd" | "3cosadd" => Ok(Method::CosAdd),
            "cosmul" | "3cosmul" => Ok(Method::CosMul),
            other => Err(format!(
                "unknown method {other:?}, expected cosadd or cosmul"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    /// Only used by 3CosMul.
    pub epsilon: f64,
    pub exclude_queries: bool,
}

impl MethodConfig {
    pub const DEFAULT_EPSILON: f64 = 0.001;

    pub fn new(method: Method) -> Self {
        MethodConfig {
            method,
            epsilon: Self::DEFAULT_EPSILON,
            exclude_queries: true,
        }
    }
}

/// Outcome of one analogy query.
#[derive(Debug, Clone, PartialEq)]
pub enum Answer<T> {
    Ranked(Vec<Neighbor<T>>),
    /// At least one query word is out of vocabulary.
    NotGiven {
        missing: Vec<String>,
    },
}

impl<T> Answer<T> {
    pub fn ranked(&self) -> Option<&[Neighbor<T>]> {
        match self {
            Answer::Ranked(r) => Some(r),
            Answer::NotGiven { .. } => None,
        }
    }
}

fn lookup_all<T: Real>(
    space: &EmbeddingSpace<T>,
    words: &[&str],
) -> Result<Vec<WordId>, Vec<String>> {
    let mut missing = Vec::new();
    let ids: Vec<_> = words
        .iter()
        .filter_map(|w| {
            let id = space.id(w);
            if id.is_none() {
                missing.push(w.to_string());
            }
            id
        })
        .collect();
    if missing.is_empty() {
        Ok(ids)
    } else {
        Err(missing)
    }
}

/// Ranks candidates for `a : a_star :: b : ?` given the query ids.
pub fn rank_candidates<T: Real>(
    space: &EmbeddingSpace<T>,
    a: WordId,
    a_star: WordId,
    b: WordId,
    config: &MethodConfig,
    k: usize,
) -> Vec<(WordId, T)> {
    let excluded = |id: WordId| config.exclude_queries && (id == a || id == a_star || id == b);
    let (ua, ua_star, ub) = (
        space.unit_vector(a),
        space.unit_vector(a_star),
        space.unit_vector(b),
    );
    let ids = (0..space.len()).filter(|&id| !excluded(id));
    match config.method {
        Method::CosAdd => {
            let target: Vec<T> = ub
                .iter()
                .zip(ua)
                .zip(ua_star)
                .map(|((&b, &a), &a_star)| b - a + a_star)
                .collect();
            let tn = crate::scalar::norm(&target);
            let tn = if tn > T::zero() { tn } else { T::one() };
            let scores = ids.map(|id| (id, dot(space.unit_vector(id), &target) / tn));
            top_k(space.candidates(scores), k)
        }
        Method::CosMul => {
            let eps = T::of(config.epsilon);
            let half = T::of(0.5);
            let shifted = |c: &[T], x: &[T]| (dot(c, x) + T::one()) * half;
            let scores = ids.map(|id| {
                let c = space.unit_vector(id);
                (
                    id,
                    shifted(c, ub) * shifted(c, ua_star) / (shifted(c, ua) + eps),
                )
            });
            top_k(space.candidates(scores), k)
        }
    }
}

pub fn answer<T: Real>(
    space: &EmbeddingSpace<T>,
    a: &str,
    a_star: &str,
    b: &str,
    config: &MethodConfig,
    k: usize,
) -> Answer<T> {
    match lookup_all(space, &[a, a_star, b]) {
        Err(missing) => Answer::NotGiven { missing },
        Ok(ids) => Answer::Ranked(
            space.neighbors(rank_candidates(space, ids[0], ids[1], ids[2], config, k)),
        ),
    }
}

pub fn answer_3cosadd<T: Real>(
    space: &EmbeddingSpace<T>,
    a: &str,
    a_star: &str,
    b: &str,
    config: &MethodConfig,
    k: usize,
) -> Answer<T> {
    answer(
        space,
        a,
        a_star,
        b,
        &MethodConfig {
            method: Method::CosAdd,
            ..*config
        },
        k,
    )
}

pub fn answer_3cosmul<T: Real>(
    space: &EmbeddingSpace<T>,
    a: &str,
    a_star: &str,
    b: &str,
    config: &MethodConfig,
    k: usize,
) -> Answer<T> {
    answer(
        space,
        a,
        a_star,
        b,
        &MethodConfig {
            method: Method::CosMul,
            ..*config
        },
        k,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    pub score: f64,
}

/// An attempted question whose top-1 prediction was not `b*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    /// Position of the question in the suite.
    pub index: usize,
    pub question: AnalogyQuestion,
    pub predicted: String,
    /// Ranking at evaluation time, best first; `top[0]` is `predicted`.
    pub top: Vec<ScoredWord>,
    pub method: Method,
    pub config_id: String,
}

/// A question left unanswered because a word is out of vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotGivenRecord {
    pub index: usize,
    pub question: AnalogyQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub questions: usize,
    pub attempted: usize,
    pub correct: usize,
    pub not_given: usize,
    /// Absent when nothing was attempted.
    pub accuracy_over_attempted: Option<f64>,
    pub accuracy_over_all: f64,
}

impl Accuracy {
    fn add(&mut self, correct: bool, attempted: bool) {
        self.questions += 1;
        if attempted {
            self.attempted += 1;
            self.correct += usize::from(correct);
        } else {
            self.not_given += 1;
        }
    }

    fn finish(&mut self) {
        self.accuracy_over_attempted =
            (self.attempted > 0).then(|| self.correct as f64 / self.attempted as f64);
        self.accuracy_over_all = if self.questions > 0 {
            self.correct as f64 / self.questions as f64
        } else {
            0.0
        };
    }

    pub fn wrong(&self) -> usize {
        self.attempted - self.correct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub name: String,
    pub kind: RelationKind,
    #[serde(flatten)]
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_id: String,
    pub method: MethodConfig,
    pub suite_fingerprint: String,
    pub per_category: Vec<CategoryResult>,
    pub morphosyntactic: Accuracy,
    pub semantic: Accuracy,
    pub overall: Accuracy,
    pub not_given_questions: Vec<NotGivenRecord>,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "category\tkind\tquestions\tattempted\tcorrect\tnot_given\taccuracy_over_attempted\taccuracy_over_all\n",
        );
        let mut row = |name: &str, kind: &str, a: &Accuracy| {
            let att = a
                .accuracy_over_attempted
                .map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"));
            out.push_str(&format!(
                "{name}\t{kind}\t{}\t{}\t{}\t{}\t{att}\t{:.6}\n",
                a.questions, a.attempted, a.correct, a.not_given, a.accuracy_over_all
            ));
        };
        for c in &self.per_category {
            row(&c.name, &c.kind.to_string(), &c.accuracy);
        }
        row("TOTAL", "morphosyntactic", &self.morphosyntactic);
        row("TOTAL", "semantic", &self.semantic);
        row("TOTAL", "all", &self.overall);
        out
    }

    pub fn save_json(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()
    }

    pub fn load_json(path: &Path) -> Result<Self, AnalogyError> {
        let r = BufReader::new(File::open(path)?);
        serde_json::from_reader(r).map_err(|source| AnalogyError::Json { line: 1, source })
    }
}

pub fn write_error_records<W: Write>(records: &[ErrorRecord], out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_error_records<R: BufRead>(reader: R) -> Result<Vec<ErrorRecord>, AnalogyError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| AnalogyError::Json {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn save_error_records(records: &[ErrorRecord], path: &Path) -> io::Result<()> {
    write_error_records(records, File::create(path)?)
}

pub fn load_error_records(path: &Path) -> Result<Vec<ErrorRecord>, AnalogyError> {
    read_error_records(BufReader::new(File::open(path)?))
}

enum Outcome<T> {
    NotGiven,
    Correct,
    Wrong(Vec<(WordId, T)>),
}

/// Evaluates every question of `suite`, recording the top-`depth` ranking of
/// each wrong answer.
pub fn evaluate_with_depth<T: Real>(
    space: &EmbeddingSpace<T>,
    suite: &AnalogySuite,
    method: &MethodConfig,
    config_id: &str,
    depth: usize,
) -> Result<(EvalReport, Vec<ErrorRecord>), AnalogyError> {
    if suite.is_empty() {
        return Err(AnalogyError::EmptySuite);
    }
    let depth = depth.max(1);
    let outcomes: Vec<Outcome<T>> = suite
        .questions
        .par_iter()
        .map(|q| {
            let ids = match lookup_all(space, &[&q.a, &q.a_star, &q.b, &q.b_star]) {
                Ok(ids) => ids,
                Err(_) => return Outcome::NotGiven,
            };
            let ranked = rank_candidates(space, ids[0], ids[1], ids[2], method, depth);
            match ranked.first() {
                // every candidate excluded: nothing to answer with
                None => Outcome::NotGiven,
                Some(&(top, _)) if top == ids[3] => Outcome::Correct,
                Some(_) => Outcome::Wrong(ranked),
            }
        })
        .collect();

    let mut by_category: HashMap<&str, Accuracy> = HashMap::new();
    let mut morpho = Accuracy::default();
    let mut semantic = Accuracy::default();
    let mut overall = Accuracy::default();
    let mut errors = Vec::new();
    let mut not_given_questions = Vec::new();
    for (index, (q, outcome)) in suite.questions.iter().zip(outcomes).enumerate() {
        let (attempted, correct) = match &outcome {
            Outcome::NotGiven => (false, false),
            Outcome::Correct => (true, true),
            Outcome::Wrong(_) => (true, false),
        };
        by_category
            .entry(&q.category)
            .or_default()
            .add(correct, attempted);
        match q.kind {
            RelationKind::Morphosyntactic => morpho.add(correct, attempted),
            RelationKind::Semantic => semantic.add(correct, attempted),
        }
        overall.add(correct, attempted);
        match outcome {
            Outcome::NotGiven => not_given_questions.push(NotGivenRecord {
                index,
                question: q.clone(),
            }),
            Outcome::Correct => {}
            Outcome::Wrong(ranked) => {
                let top: Vec<ScoredWord> = ranked
                    .into_iter()
                    .map(|(id, s)| ScoredWord {
                        word: space.word(id).to_owned(),
                        score: s.as_f64(),
                    })
                    .collect();
                errors.push(ErrorRecord {
                    index,
                    question: q.clone(),
                    predicted: top[0].word.clone(),
                    top,
                    method: method.method,
                    config_id: config_id.to_owned(),
                });
            }
        }
    }

    let per_category = suite
        .categories
        .iter()
        .map(|c| {
            let mut accuracy = by_category
                .get(c.name.as_str())
                .copied()
                .unwrap_or_default();
            accuracy.finish();
            CategoryResult {
                name: c.name.clone(),
                kind: c.kind,
                accuracy,
            }
        })
        .collect();
    for a in [&mut morpho, &mut semantic, &mut overall] {
        a.finish();
    }
    Ok((
        EvalReport {
            config_id: config_id.to_owned(),
            method: *method,
            suite_fingerprint: suite.fingerprint(),
            per_category,
            morphosyntactic: morpho,
            semantic,
            overall,
            not_given_questions,
        },
        errors,
    ))
}

pub fn evaluate<T: Real>(
    space: &EmbeddingSpace<T>,
    suite: &AnalogySuite,
    method: &MethodConfig,
    config_id: &str,
) -> Result<(EvalReport, Vec<ErrorRecord>), AnalogyError> {
    evaluate_with_depth(space, suite, method, config_id, DEFAULT_RECORD_DEPTH)
}

/// Words of the suite that the space lacks; the source of not-given answers.
pub fn missing_words<'a, T: Real>(
    space: &EmbeddingSpace<T>,
    suite: &'a AnalogySuite,
) -> HashSet<&'a str> {
    suite
        .questions
        .iter()
        .flat_map(|q| [&q.a, &q.a_star, &q.b, &q.b_star])
        .filter(|w| space.id(w).is_none())
        .map(String::as_str)
        .collect()
}
