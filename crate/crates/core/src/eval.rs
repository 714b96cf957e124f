//! Classification and reranking metrics.
//!
//! Answers are compared by exact string equality. A problem's vote counts
//! as correct when the winning answer equals the answer of any candidate
//! flagged correct.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::verifier::Verdict;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    /// `None` when there are no positives.
    pub tpr: Option<f64>,
    /// `None` when there are no negatives.
    pub tnr: Option<f64>,
}

/// Scores `(predicted, actual)` pairs, with success as the positive class.
pub fn confusion_metrics(predictions: &[(Verdict, Verdict)]) -> Result<ClassificationMetrics> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("confusion metrics need at least one prediction"));
    }
    let mut c = ConfusionCounts::default();
    for &(predicted, actual) in predictions {
        match (actual, predicted) {
            (Verdict::Success, Verdict::Success) => c.tp += 1,
            (Verdict::Success, Verdict::Failure) => c.fn_ += 1,
            (Verdict::Failure, Verdict::Failure) => c.tn += 1,
            (Verdict::Failure, Verdict::Success) => c.fp += 1,
        }
    }
    Ok(metrics_from_counts(c))
}

pub fn metrics_from_counts(c: ConfusionCounts) -> ClassificationMetrics {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    ClassificationMetrics {
        counts: c,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        tpr: ratio(c.tp, c.tp + c.fn_),
        tnr: ratio(c.tn, c.tn + c.fp),
    }
}

/// Most frequent answer; ties go to the lexicographically smallest.
pub fn majority_vote<S: AsRef<str>>(answers: &[S]) -> Result<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(a.as_ref()).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (answer, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((answer, n));
        }
    }
    best.map(|(a, _)| a.to_string())
        .ok_or(Error::EmptyInput("majority vote over no answers"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub record_id: String,
    pub answer: String,
    pub correct: bool,
    /// Rerank score, lower is better.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemCandidates {
    pub problem_id: String,
    pub candidates: Vec<ScoredCandidate>,
}

impl ProblemCandidates {
    fn correct_answers(&self) -> HashSet<&str> {
        self.candidates
            .iter()
            .filter(|c| c.correct)
            .map(|c| c.answer.as_str())
            .collect()
    }

    fn is_correct_answer(&self, answer: &str) -> bool {
        self.candidates.iter().any(|c| c.correct && c.answer == answer)
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::EmptyInput("problem without candidates"));
        }
        Ok(())
    }

    /// Candidates in rerank order: ascending score, then record id.
    pub fn ranked(&self) -> Result<Vec<&ScoredCandidate>> {
        let mut keyed = self
            .candidates
            .iter()
            .map(|c| {
                c.score
                    .map(|s| (s, c))
                    .ok_or_else(|| Error::MissingScore(c.record_id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.record_id.cmp(&b.1.record_id)));
        Ok(keyed.into_iter().map(|(_, c)| c).collect())
    }

    /// Replaces scores with 0 for correct and 1 for incorrect candidates.
    pub fn with_oracle_scores(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.candidates {
            c.score = Some(if c.correct { 0.0 } else { 1.0 });
        }
        out
    }
}

fn mean_over<F>(problems: &[ProblemCandidates], mut per_problem: F) -> Result<f64>
where
    F: FnMut(&ProblemCandidates) -> Result<f64>,
{
    if problems.is_empty() {
        return Err(Error::EmptyInput("no problems to evaluate"));
    }
    let mut total = 0.0;
    for p in problems {
        p.check_nonempty()?;
        total += per_problem(p)?;
    }
    Ok(total / problems.len() as f64)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Average single-sample accuracy, unweighted over problems.
pub fn mean_at_n(problems: &[ProblemCandidates]) -> Result<f64> {
    mean_over(problems, |p| {
        let correct = p.candidates.iter().filter(|c| c.correct).count();
        Ok(correct as f64 / p.candidates.len() as f64)
    })
}

/// Fraction of problems with at least one correct candidate.
pub fn pass_at_n(problems: &[ProblemCandidates]) -> Result<f64> {
    mean_over(problems, |p| Ok(indicator(p.candidates.iter().any(|c| c.correct))))
}

pub fn majority_at_n(problems: &[ProblemCandidates]) -> Result<f64> {
    mean_over(problems, |p| {
        let answers: Vec<&str> = p.candidates.iter().map(|c| c.answer.as_str()).collect();
        Ok(indicator(p.is_correct_answer(&majority_vote(&answers)?)))
    })
}

pub fn top_at_1(problems: &[ProblemCandidates]) -> Result<f64> {
    mean_over(problems, |p| {
        let best = p.ranked()?[0];
        Ok(indicator(p.is_correct_answer(&best.answer)))
    })
}

/// Majority vote over the `k` best-ranked candidates of each problem.
/// `k` larger than a problem's candidate count uses all of them.
pub fn top_maj_at_k(problems: &[ProblemCandidates], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::EmptyInput("top-maj needs k >= 1"));
    }
    mean_over(problems, |p| Ok(indicator(top_maj_correct(p, k)?)))
}

fn top_maj_correct(p: &ProblemCandidates, k: usize) -> Result<bool> {
    let ranked = p.ranked()?;
    let answers: Vec<&str> = ranked.iter().take(k).map(|c| c.answer.as_str()).collect();
    Ok(p.is_correct_answer(&majority_vote(&answers)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemRow {
    pub problem_id: String,
    pub candidates: usize,
    pub correct: usize,
    pub distinct_correct_answers: usize,
    pub majority_answer: String,
    pub majority_correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_correct: Option<bool>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub top_maj_correct: BTreeMap<String, bool>,
}

/// Aggregate metrics; absent fields were not computable for the input.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_at_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub majority_at_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_at_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_at_1: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub top_maj_at_k: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub problems: Vec<ProblemRow>,
}

impl EvalReport {
    pub fn with_classification(mut self, m: &ClassificationMetrics) -> Self {
        self.accuracy = Some(m.accuracy);
        self.tpr = m.tpr;
        self.tnr = m.tnr;
        self
    }

    /// Fills the voting and reranking metrics. Rerank metrics are computed
    /// only when every candidate has a score. Problems are sorted by id.
    pub fn with_ranking(mut self, problems: &[ProblemCandidates], ks: &[usize]) -> Result<Self> {
        let mut sorted: Vec<&ProblemCandidates> = problems.iter().collect();
        sorted.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
        let owned: Vec<ProblemCandidates> = sorted.iter().map(|p| (*p).clone()).collect();

        self.mean_at_n = Some(mean_at_n(&owned)?);
        self.majority_at_n = Some(majority_at_n(&owned)?);
        self.pass_at_n = Some(pass_at_n(&owned)?);

        let scored = owned
            .iter()
            .all(|p| p.candidates.iter().all(|c| c.score.is_some()));
        if scored {
            self.top_at_1 = Some(top_at_1(&owned)?);
            for &k in ks {
                self.top_maj_at_k.insert(k.to_string(), top_maj_at_k(&owned, k)?);
            }
        }

        self.problems = owned
            .iter()
            .map(|p| problem_row(p, ks, scored))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Line-per-metric text table; undefined metrics print as `n/a`.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let mut line = |name: &str, v: Option<f64>| {
            let value = v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{name:<16}{value}");
        };
        line("accuracy", self.accuracy);
        line("tpr", self.tpr);
        line("tnr", self.tnr);
        line("mean_at_n", self.mean_at_n);
        line("majority_at_n", self.majority_at_n);
        line("pass_at_n", self.pass_at_n);
        line("top_at_1", self.top_at_1);
        let mut ks: Vec<(&String, &f64)> = self.top_maj_at_k.iter().collect();
        ks.sort_by_key(|(k, _)| k.parse::<usize>().unwrap_or(usize::MAX));
        for (k, v) in ks {
            line(&format!("top_maj_at_{k}"), Some(*v));
        }
        out
    }
}

fn problem_row(p: &ProblemCandidates, ks: &[usize], scored: bool) -> Result<ProblemRow> {
    let answers: Vec<&str> = p.candidates.iter().map(|c| c.answer.as_str()).collect();
    let majority_answer = majority_vote(&answers)?;
    let mut row = ProblemRow {
        problem_id: p.problem_id.clone(),
        candidates: p.candidates.len(),
        correct: p.candidates.iter().filter(|c| c.correct).count(),
        distinct_correct_answers: p.correct_answers().len(),
        majority_correct: p.is_correct_answer(&majority_answer),
        majority_answer,
        top_answer: None,
        top_correct: None,
        top_maj_correct: BTreeMap::new(),
    };
    if scored {
        let best = p.ranked()?[0];
        row.top_correct = Some(p.is_correct_answer(&best.answer));
        row.top_answer = Some(best.answer.clone());
        for &k in ks {
            row.top_maj_correct.insert(k.to_string(), top_maj_correct(p, k)?);
        }
    }
    Ok(row)
}
