//! Household selection: spectral clustering of the attention graph, a
//! stratified query of a few households per neighborhood and cluster, and a
//! semi-supervised GCN that labels everyone else as likely to accept or not.

mod classify;
mod spectral;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use classify::{classify, Classification, ClassifierConfig, SelectionGraph};
pub use spectral::{kmeans, normalized_laplacian, spectral_embed, symmetric_eigen, symmetrize};

use crate::community::{Community, HouseholdId};
use crate::error::{IlbError, Result, StageExt};
use crate::patternnet::SimilarityMatrix;
use crate::rng::{derive_seed, seeded};

/// Adds Uniform(0, b) to every entry, b = level/100 × mean(A), then rescales
/// rows back to sum 1.
pub fn inject_noise(a: &SimilarityMatrix, level_pct: f64, seed: u64) -> Result<SimilarityMatrix> {
    if !(level_pct >= 0.0) || !level_pct.is_finite() {
        return Err(IlbError::Domain(format!("noise level {level_pct}% must be non-negative")));
    }
    let bound = level_pct / 100.0 * a.mean_entry();
    if bound == 0.0 {
        return Ok(a.clone());
    }
    let mut rng = seeded(seed);
    let mut m = a.values().clone();
    for v in m.iter_mut() {
        *v += rng.random::<f64>() * bound;
    }
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    SimilarityMatrix::new(m)
}

/// Ceiling of `fraction × size`, tolerant of representation error so that
/// e.g. 0.05 × 20 gives 1.
fn stratum_quota(fraction: f64, size: usize) -> usize {
    let raw = fraction * size as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(size)
}

/// Per neighborhood and cluster, samples ⌈fraction × stratum size⌉ members.
/// Returns sorted household indices.
pub fn pick_queries(community: &Community, clusters: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if clusters.len() != community.len() {
        return Err(IlbError::Shape(format!(
            "{} cluster ids for {} households",
            clusters.len(),
            community.len()
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(IlbError::Domain(format!("query fraction {fraction} outside (0, 1]")));
    }
    let index = community.id_index();
    let mut rng = seeded(seed);
    let mut picked = Vec::new();
    for nb in &community.neighborhoods {
        let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for id in &nb.members {
            let i = index[id.as_str()];
            strata.entry(clusters[i]).or_default().push(i);
        }
        for members in strata.values() {
            let quota = stratum_quota(fraction, members.len());
            for k in index::sample(&mut rng, members.len(), quota) {
                picked.push(members[k]);
            }
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Percent of non-queried households whose prediction matches the truth.
pub fn evaluate_accuracy(predicted: &[bool], truth: &[bool], queried: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.len() != queried.len() {
        return Err(IlbError::Shape("prediction, truth and query masks differ in length".into()));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for ((p, t), q) in predicted.iter().zip(truth).zip(queried) {
        if !q {
            total += 1;
            correct += (p == t) as usize;
        }
    }
    if total == 0 {
        return Err(IlbError::UndefinedMetric("every household was queried".into()));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Number of Laplacian eigenvectors kept as node coordinates.
    pub embed_dim: usize,
    pub clusters: usize,
    pub query_fraction: f64,
    pub noise_level_pct: f64,
    pub seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            embed_dim: 2,
            clusters: 2,
            query_fraction: 0.05,
            noise_level_pct: 0.0,
            seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub ids: Vec<HouseholdId>,
    pub clusters: Vec<usize>,
    pub queried: Vec<bool>,
    pub truth: Vec<bool>,
    pub predicted: Vec<bool>,
    pub accept_probability: Vec<f64>,
    pub accuracy_pct: f64,
}

impl SelectionResult {
    pub fn queried_ids(&self) -> Vec<&HouseholdId> {
        self.ids.iter().zip(&self.queried).filter(|(_, q)| **q).map(|(id, _)| id).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["household_id", "cluster", "queried", "true_label", "predicted_label"])?;
        for i in 0..self.ids.len() {
            w.write_record([
                self.ids[i].clone(),
                self.clusters[i].to_string(),
                self.queried[i].to_string(),
                self.truth[i].to_string(),
                self.predicted[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| IlbError::io(path, e))?;
        Ok(())
    }
}

/// Spectral clustering of the (optionally noised) attention matrix.
pub fn spectral_clusters(a: &SimilarityMatrix, cfg: &SelectionConfig) -> Result<Vec<usize>> {
    let l = normalized_laplacian(&symmetrize(a))?;
    let embedding = spectral_embed(&l, cfg.embed_dim)?;
    kmeans(&embedding, cfg.clusters, derive_seed(cfg.seed, 2))
}

/// Noised matrix, spectral clusters and query mask: the stages of
/// [`select_households`] that precede classification.
pub fn prepare_selection(
    community: &Community,
    a_est: &SimilarityMatrix,
    cfg: &SelectionConfig,
) -> Result<(SimilarityMatrix, Vec<usize>, Vec<bool>)> {
    let n = community.len();
    if a_est.len() != n {
        return Err(IlbError::Shape(format!("{n} households, {} similarity rows", a_est.len())));
    }
    let a = inject_noise(a_est, cfg.noise_level_pct, derive_seed(cfg.seed, 1)).stage("noise")?;
    let clusters = spectral_clusters(&a, cfg).stage("spectral")?;
    let picked = pick_queries(community, &clusters, cfg.query_fraction, derive_seed(cfg.seed, 3)).stage("query")?;
    let mut queried = vec![false; n];
    for i in picked {
        queried[i] = true;
    }
    Ok((a, clusters, queried))
}

/// Full selection pipeline. `truth[i]` is household i's accept label, revealed
/// only for queried households.
pub fn select_households(
    community: &Community,
    a_est: &SimilarityMatrix,
    truth: &[bool],
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    let n = community.len();
    if truth.len() != n {
        return Err(IlbError::Shape(format!("{n} households, {} labels", truth.len())));
    }
    let (a, clusters, queried) = prepare_selection(community, a_est, cfg)?;
    let labeled: BTreeMap<usize, bool> = (0..n).filter(|i| queried[*i]).map(|i| (i, truth[i])).collect();
    let graph = SelectionGraph::new(community.ids(), &a)?;
    let classifier = ClassifierConfig {
        seed: derive_seed(cfg.seed, 4),
        ..cfg.classifier
    };
    let out = classify(&graph, &labeled, &classifier).stage("classify")?;
    let accuracy_pct = evaluate_accuracy(&out.labels, truth, &queried)?;
    Ok(SelectionResult {
        ids: community.ids(),
        clusters,
        queried,
        truth: truth.to_vec(),
        predicted: out.labels,
        accept_probability: out.accept_probability,
        accuracy_pct,
    })
}

/// Selection when every queried household gave the same answer: that answer
/// is extended to everyone, since the classifier has nothing to separate.
pub fn unanimous_selection(
    community: &Community,
    a_est: &SimilarityMatrix,
    truth: &[bool],
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    let n = community.len();
    if truth.len() != n {
        return Err(IlbError::Shape(format!("{n} households, {} labels", truth.len())));
    }
    let (_, clusters, queried) = prepare_selection(community, a_est, cfg)?;
    let answers: Vec<bool> = (0..n).filter(|i| queried[*i]).map(|i| truth[i]).collect();
    let label = answers[0];
    if answers.iter().any(|a| *a != label) {
        return Err(IlbError::ContractViolation("queried labels are not unanimous".into()));
    }
    let predicted = vec![label; n];
    let accuracy_pct = evaluate_accuracy(&predicted, truth, &queried)?;
    Ok(SelectionResult {
        ids: community.ids(),
        clusters,
        queried,
        truth: truth.to_vec(),
        accept_probability: vec![if label { 1.0 } else { 0.0 }; n],
        predicted,
        accuracy_pct,
    })
}

/// Reads back a file written by [`SelectionResult::write_csv`] as
/// `(id, cluster, queried, true_label, predicted_label)` rows.
pub fn read_selection_csv(path: &Path) -> Result<Vec<(HouseholdId, usize, bool, bool, bool)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: (HouseholdId, usize, bool, bool, bool) = rec.map_err(|e| IlbError::Validation {
            row: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
