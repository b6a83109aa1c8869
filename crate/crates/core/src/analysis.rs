//! Error analysis across one or more evaluations of the same suite.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analogy::{
    read_error_records, AnalogyError, ErrorRecord, EvalReport, Method, NotGivenRecord,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("record sets come from different suites ({left} vs {right})")]
    SuiteMismatch { left: String, right: String },
    #[error("at least one record set is required")]
    NoRecordSets,
    #[error("record for question {index} stores {depth} ranks, {k} requested")]
    RankingTooShallow {
        index: usize,
        depth: usize,
        k: usize,
    },
    #[error(transparent)]
    Analogy(#[from] AnalogyError),
}

/// Everything one (config, method) evaluation left unsolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub config_id: String,
    pub method: Method,
    pub suite_fingerprint: String,
    pub question_count: usize,
    pub errors: Vec<ErrorRecord>,
    pub not_given: Vec<NotGivenRecord>,
}

impl RecordSet {
    pub fn from_eval(report: &EvalReport, errors: Vec<ErrorRecord>) -> Self {
        RecordSet {
            config_id: report.config_id.clone(),
            method: report.method.method,
            suite_fingerprint: report.suite_fingerprint.clone(),
            question_count: report.overall.questions,
            errors,
            not_given: report.not_given_questions.clone(),
        }
    }

    /// Loads `eval-<method>.json` and `errors-<method>.jsonl` from a run
    /// directory.
    pub fn load(run_dir: &Path, method: Method) -> Result<Self, AnalysisError> {
        let report = EvalReport::load_json(&run_dir.join(format!("eval-{method}.json")))?;
        let file = File::open(run_dir.join(format!("errors-{method}.jsonl")))
            .map_err(AnalogyError::from)?;
        let errors = read_error_records(BufReader::new(file))?;
        Ok(Self::from_eval(&report, errors))
    }

    fn failed_indices(&self) -> HashSet<usize> {
        self.errors
            .iter()
            .map(|r| r.index)
            .chain(self.not_given.iter().map(|r| r.index))
            .collect()
    }

    fn error_words(&self) -> BTreeSet<String> {
        self.errors
            .iter()
            .map(|r| r.question.b_star.clone())
            .collect()
    }
}

fn same_suite(a: &RecordSet, b: &RecordSet) -> Result<(), AnalysisError> {
    if a.suite_fingerprint != b.suite_fingerprint || a.question_count != b.question_count {
        return Err(AnalysisError::SuiteMismatch {
            left: a.config_id.clone(),
            right: b.config_id.clone(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub total_errors: usize,
    pub distinct_expected_words: usize,
    /// Expected word and number of wrong questions expecting it, most
    /// frequent first, ties by word.
    pub ranked_error_words: Vec<(String, usize)>,
}

impl ErrorSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "#errors\t{}\n#words\t{}\nword\terrors\n",
            self.total_errors, self.distinct_expected_words
        );
        for (w, n) in &self.ranked_error_words {
            let _ = writeln!(out, "{w}\t{n}");
        }
        out
    }
}

/// Error counts keyed by the expected word `b*`. Repeated identical
/// questions are counted separately.
pub fn summarize_errors(records: &[ErrorRecord]) -> ErrorSummary {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *freq.entry(&r.question.b_star).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> =
        freq.into_iter().map(|(w, n)| (w.to_owned(), n)).collect();
    // BTreeMap order already sorts ties by word; the sort is stable.
    ranked.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    ErrorSummary {
        total_errors: records.len(),
        distinct_expected_words: ranked.len(),
        ranked_error_words: ranked,
    }
}

/// Questions wrong or not given in `base` and answered correctly in
/// `improved`, by suite index.
pub fn solved_errors(
    base: &RecordSet,
    improved: &RecordSet,
) -> Result<BTreeSet<usize>, AnalysisError> {
    same_suite(base, improved)?;
    let still_failing = improved.failed_indices();
    Ok(base
        .failed_indices()
        .into_iter()
        .filter(|i| !still_failing.contains(i))
        .collect())
}

/// Expected words that every record set got wrong at least once.
pub fn always_wrong(sets: &[RecordSet]) -> Result<BTreeSet<String>, AnalysisError> {
    let (first, rest) = sets.split_first().ok_or(AnalysisError::NoRecordSets)?;
    for s in rest {
        same_suite(first, s)?;
    }
    let mut words = first.error_words();
    for s in rest {
        let other = s.error_words();
        words.retain(|w| other.contains(w));
    }
    Ok(words)
}

/// Expected words that stop being errors (`recovered`) or start being errors
/// (`introduced`) when moving from `base` to `changed`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ErrorWordDiff {
    pub recovered: BTreeSet<String>,
    pub introduced: BTreeSet<String>,
}

pub fn error_word_diff(
    base: &RecordSet,
    changed: &RecordSet,
) -> Result<ErrorWordDiff, AnalysisError> {
    same_suite(base, changed)?;
    let (b, c) = (base.error_words(), changed.error_words());
    Ok(ErrorWordDiff {
        recovered: b.difference(&c).cloned().collect(),
        introduced: c.difference(&b).cloned().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopkRecovery {
    pub errors: usize,
    /// Errors whose expected word sits at ranks 2..=k.
    pub recovered: usize,
    pub at_rank2: usize,
    /// `recovered / errors`; 0 when there are no errors.
    pub fraction_in_topk: f64,
    /// `at_rank2 / recovered`; absent when nothing was recovered.
    pub fraction_at_rank2: Option<f64>,
}

/// How often a wrong answer still has `b*` among the top `k` candidates.
pub fn topk_recovery(records: &[ErrorRecord], k: usize) -> Result<TopkRecovery, AnalysisError> {
    let mut recovered = 0;
    let mut at_rank2 = 0;
    for r in records {
        if r.top.len() < k {
            return Err(AnalysisError::RankingTooShallow {
                index: r.index,
                depth: r.top.len(),
                k,
            });
        }
        if let Some(pos) = r.top[..k].iter().position(|s| s.word == r.question.b_star) {
            if pos >= 1 {
                recovered += 1;
                at_rank2 += usize::from(pos == 1);
            }
        }
    }
    Ok(TopkRecovery {
        errors: records.len(),
        recovered,
        at_rank2,
        fraction_in_topk: if records.is_empty() {
            0.0
        } else {
            recovered as f64 / records.len() as f64
        },
        fraction_at_rank2: (recovered > 0).then(|| at_rank2 as f64 / recovered as f64),
    })
}
