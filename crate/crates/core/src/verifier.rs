//! Nearest-centroid verification over activation deltas.
//!
//! A trajectory is summarised by `h_end - h_start`. Labeled deltas are
//! averaged into a success and a failure centroid; a new delta is judged
//! by its layer-averaged distance to each, and candidates for the same
//! problem are ranked by their distance to the success centroid.

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{self, layer_avg_distance, LayerMatrix};
use crate::store::{CentroidPair, Label, Manifest, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDelta {
    pub record_id: String,
    pub delta: LayerMatrix,
}

impl AsRef<LayerMatrix> for ActivationDelta {
    fn as_ref(&self) -> &LayerMatrix {
        &self.delta
    }
}

pub fn compute_delta(record: &TrajectoryRecord) -> Result<ActivationDelta> {
    Ok(ActivationDelta {
        record_id: record.record_id.clone(),
        delta: matrix::matrix_subtract(&record.h_end, &record.h_start)?,
    })
}

/// Labeled deltas split by class.
#[derive(Debug, Clone, Default)]
pub struct ExperienceSet {
    pub succ: Vec<ActivationDelta>,
    pub fail: Vec<ActivationDelta>,
}

impl ExperienceSet {
    /// Sorts deltas into classes; unlabeled deltas are ignored.
    pub fn from_labeled(items: impl IntoIterator<Item = (ActivationDelta, Label)>) -> Self {
        let mut set = Self::default();
        for (delta, label) in items {
            match label {
                Label::Success => set.succ.push(delta),
                Label::Failure => set.fail.push(delta),
                Label::Unlabeled => {}
            }
        }
        set
    }
}

/// Summation strategy for centroid aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Input order, single accumulator.
    #[default]
    Sequential,
    /// Fixed pairwise tree, evaluated in parallel.
    PairwiseTree,
}

pub fn build_centroids(experience: &ExperienceSet) -> Result<CentroidPair> {
    build_centroids_with(experience, Reduction::Sequential)
}

pub fn build_centroids_with(experience: &ExperienceSet, reduction: Reduction) -> Result<CentroidPair> {
    if experience.succ.is_empty() {
        return Err(Error::EmptyClass("no success deltas".into()));
    }
    if experience.fail.is_empty() {
        return Err(Error::EmptyClass("no failure deltas".into()));
    }
    let mean = |d: &[ActivationDelta]| match reduction {
        Reduction::Sequential => matrix::elementwise_mean(d),
        Reduction::PairwiseTree => matrix::elementwise_mean_pairwise(d),
    };
    let v_succ = mean(&experience.succ)?;
    let v_fail = mean(&experience.fail)?;
    v_succ.check_same_shape(&v_fail)?;
    Ok(CentroidPair {
        v_succ,
        v_fail,
        n_succ: experience.succ.len() as u64,
        n_fail: experience.fail.len() as u64,
        model_tag: String::new(),
        source_description: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Success,
    Failure,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Success => "success",
            Verdict::Failure => "failure",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierScore {
    pub d_succ: f64,
    pub d_fail: f64,
    pub predicted: Verdict,
    /// `d_fail - d_succ`; positive means closer to success.
    pub margin: f64,
}

/// Nearest-centroid decision. Equal distances predict failure.
pub fn classify(delta: &ActivationDelta, centroids: &CentroidPair) -> Result<VerifierScore> {
    let d_succ = layer_avg_distance(&delta.delta, &centroids.v_succ)?;
    let d_fail = layer_avg_distance(&delta.delta, &centroids.v_fail)?;
    let predicted = if d_succ < d_fail {
        Verdict::Success
    } else {
        Verdict::Failure
    };
    Ok(VerifierScore {
        d_succ,
        d_fail,
        predicted,
        margin: d_fail - d_succ,
    })
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub delta: ActivationDelta,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankEntry {
    pub record_id: String,
    pub answer: String,
    /// Distance to the success centroid; lower is better.
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Orders candidates by ascending distance to the success centroid, ties
/// broken by record id.
pub fn rerank(candidates: &[Candidate], centroids: &CentroidPair) -> Result<Vec<RerankEntry>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("rerank needs at least one candidate"));
    }
    let mut scored = candidates
        .iter()
        .map(|c| {
            Ok(RerankEntry {
                record_id: c.delta.record_id.clone(),
                answer: c.answer.clone(),
                score: layer_avg_distance(&c.delta.delta, &centroids.v_succ)?,
                rank: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    assign_ranks(&mut scored);
    Ok(scored)
}

/// Sorts by ascending score, then record id, and renumbers ranks from 1.
pub fn assign_ranks(entries: &mut [RerankEntry]) {
    entries.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.record_id.cmp(&b.record_id)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BalancedSample {
    /// Selected record ids, sorted.
    pub success: Vec<String>,
    pub failure: Vec<String>,
    pub warnings: Vec<String>,
}

/// Draws up to `per_class` record ids from each labeled class, uniformly
/// without replacement. A class smaller than `per_class` is taken whole and
/// a warning is recorded.
pub fn balanced_sample(manifest: &Manifest, per_class: usize, seed: u64) -> Result<BalancedSample> {
    let ids_of = |label: Label| -> Vec<&str> {
        manifest
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.record_id.as_str())
            .collect()
    };
    let succ = ids_of(Label::Success);
    let fail = ids_of(Label::Failure);
    if succ.is_empty() {
        return Err(Error::EmptyClass("manifest has no success records".into()));
    }
    if fail.is_empty() {
        return Err(Error::EmptyClass("manifest has no failure records".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut draw = |pool: Vec<&str>, label: Label| -> Vec<String> {
        let mut picked: Vec<String> = if pool.len() <= per_class {
            if pool.len() < per_class {
                warnings.push(format!(
                    "{label} class has {} records, fewer than the requested {per_class}; using all",
                    pool.len()
                ));
            }
            pool.iter().map(|s| s.to_string()).collect()
        } else {
            index::sample(&mut rng, pool.len(), per_class)
                .into_iter()
                .map(|i| pool[i].to_string())
                .collect()
        };
        picked.sort();
        picked
    };
    let success = draw(succ, Label::Success);
    let failure = draw(fail, Label::Failure);
    Ok(BalancedSample {
        success,
        failure,
        warnings,
    })
}
