use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{FrameworkConfig, RunConfig};
use super::output::{write_rows, write_text};
use crate::community::{emergency_schedule, Community, ScenarioConfig};
use crate::error::{IlbError, Result, StageExt};
use crate::metrics::{program_report, ProgramReport};
use crate::patternnet::{
    similarity_snapshot, train, write_similarity_csv, DatasetConfig, ForecastDataset, PatternModel, SimilarityMatrix,
    TrainConfig, TrainHistory,
};
use crate::rng::{derive_seed, seeded};
use crate::selector::{select_households, unanimous_selection, SelectionConfig, SelectionResult};
use crate::tariff::{accept_offer, Offer, OfferOutcome, OfferTerms};

/// Emergency days from the scenario, or `count` seeded draws when it lists none.
pub fn resolve_emergency_days(scenario: &ScenarioConfig, count: usize) -> Result<Vec<usize>> {
    if !scenario.emergency_days.is_empty() {
        return Ok(scenario.emergency_days.clone());
    }
    emergency_schedule(scenario.cycle_days, count, &mut seeded(derive_seed(scenario.rng_seed, 0)))
}

pub fn offer_terms(scenario: &ScenarioConfig, emergency_days: Vec<usize>) -> OfferTerms {
    OfferTerms {
        target_reduction_pct: scenario.target_reduction_pct,
        emergency_days,
        cycle_days: scenario.cycle_days,
    }
}

/// Offers `incentive` to each listed household and records its decision.
pub fn make_offers(community: &Community, who: &[usize], incentive: f64, terms: &OfferTerms) -> Result<Vec<OfferOutcome>> {
    who.iter()
        .map(|&i| {
            let h = &community.households[i];
            accept_offer(h, &Offer::new(h, incentive, terms)?)
        })
        .collect()
}

/// Ground-truth accept label of every household at `incentive`.
pub fn truth_labels(community: &Community, terms: &OfferTerms, incentive: f64) -> Result<Vec<bool>> {
    let all: Vec<usize> = (0..community.len()).collect();
    Ok(make_offers(community, &all, incentive, terms)?.into_iter().map(|o| o.accepted).collect())
}

/// Trained forecaster, its similarity matrix and the selection built on it.
#[derive(Debug, Clone)]
pub struct FrameworkScores {
    pub model: PatternModel,
    pub history: TrainHistory,
    pub similarity: SimilarityMatrix,
    pub selection: SelectionResult,
}

impl FrameworkScores {
    /// Household indices, most likely accepters first (ties by id).
    pub fn ranking(&self) -> Vec<usize> {
        let sel = &self.selection;
        let mut order: Vec<usize> = (0..sel.ids.len()).collect();
        order.sort_by(|&a, &b| {
            sel.accept_probability[b]
                .total_cmp(&sel.accept_probability[a])
                .then_with(|| sel.ids[a].cmp(&sel.ids[b]))
        });
        order
    }
}

/// Forecaster training and A_est only. Seeds derive from `seed`; the split
/// comes from `split`.
pub fn learn_similarity(
    community: &Community,
    framework: &FrameworkConfig,
    split: [f64; 3],
    seed: u64,
) -> Result<(PatternModel, TrainHistory, SimilarityMatrix)> {
    let dataset = DatasetConfig {
        split,
        ..framework.dataset
    };
    let data = ForecastDataset::from_community(community, &dataset).stage("dataset")?;
    let model = PatternModel::new(framework.model, derive_seed(seed, 1))?;
    let training = TrainConfig {
        seed: derive_seed(seed, 2),
        ..framework.training
    };
    let (model, history) = train(&model, &data, &training).stage("train")?;
    let similarity = similarity_snapshot(&model, &data).stage("similarity")?;
    Ok((model, history, similarity))
}

pub fn score_households(
    community: &Community,
    framework: &FrameworkConfig,
    split: [f64; 3],
    truth: &[bool],
    seed: u64,
) -> Result<FrameworkScores> {
    let (model, history, similarity) = learn_similarity(community, framework, split, seed)?;
    let selection_cfg = SelectionConfig {
        seed: derive_seed(seed, 3),
        ..framework.selection
    };
    let selection = select_with_fallback(community, &similarity, truth, &selection_cfg).stage("select")?;
    Ok(FrameworkScores {
        model,
        history,
        similarity,
        selection,
    })
}

/// [`select_households`], or [`unanimous_selection`] when every queried
/// household answered the same way.
pub fn select_with_fallback(
    community: &Community,
    similarity: &SimilarityMatrix,
    truth: &[bool],
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    match select_households(community, similarity, truth, cfg) {
        Err(IlbError::Stage { source, .. }) if matches!(*source, IlbError::DegenerateSupervision(_)) => {
            unanimous_selection(community, similarity, truth, cfg)
        }
        other => other,
    }
}

/// Whole-percent cap, rounded down so the cap is never exceeded.
pub fn participation_cap(participation_pct: f64, households: usize) -> usize {
    ((participation_pct / 100.0 * households as f64 + 1e-9).floor() as usize).min(households)
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub community: Community,
    pub emergency_days: Vec<usize>,
    pub scores: FrameworkScores,
    pub outcomes: Vec<OfferOutcome>,
    pub report: ProgramReport,
}

/// End-to-end run: learn similarity, select, make offers to predicted
/// accepters (highest scores first, up to the participation cap) at the
/// default incentive, then settle the program. `base` resolves relative
/// input paths.
pub fn run_scenario(cfg: &RunConfig, base: &Path) -> Result<ScenarioRun> {
    cfg.validate()?;
    let community = cfg.community.load(base).stage("community")?;
    let emergency_days = resolve_emergency_days(&cfg.scenario, cfg.emergency_day_count)?;
    let terms = offer_terms(&cfg.scenario, emergency_days.clone());
    let truth = truth_labels(&community, &terms, cfg.scenario.default_incentive).stage("truth")?;
    let scores = score_households(&community, &cfg.framework, cfg.scenario.split_ratios, &truth, cfg.scenario.rng_seed)?;
    let cap = participation_cap(cfg.participation_pct, community.len());
    let offered: Vec<usize> = scores
        .ranking()
        .into_iter()
        .filter(|&i| scores.selection.predicted[i])
        .take(cap)
        .collect();
    let outcomes = make_offers(&community, &offered, cfg.scenario.default_incentive, &terms).stage("offers")?;
    let report = program_report(&community, &terms, &outcomes, cfg.shortfall_pct).stage("settle")?;
    Ok(ScenarioRun {
        community,
        emergency_days,
        scores,
        outcomes,
        report,
    })
}

#[derive(Serialize)]
struct OfferRow<'a> {
    household_id: &'a str,
    incentive: f64,
    min_incentive: f64,
    accepted: bool,
    cost_baseline: f64,
    cost_ilb: f64,
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    train_mse: Option<f64>,
    validation_mse: f64,
}

pub fn write_training_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut rows = vec![EpochRow {
        epoch: 0,
        train_mse: None,
        validation_mse: history.initial_validation_mse,
    }];
    rows.extend(history.epochs.iter().map(|e| EpochRow {
        epoch: e.epoch,
        train_mse: Some(e.train_mse),
        validation_mse: e.validation_mse,
    }));
    write_rows(path, &rows)
}

impl ScenarioRun {
    /// Writes the run's tables into `dir`; returns the files written.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| IlbError::io(dir, e))?;
        let selection = dir.join("selection.csv");
        self.scores.selection.write_csv(&selection)?;
        let similarity = dir.join("similarity.csv");
        write_similarity_csv(&similarity, &self.scores.selection.ids, &self.scores.similarity)?;
        let training = dir.join("training.csv");
        write_training_csv(&training, &self.scores.history)?;
        let offers = dir.join("offers.csv");
        let rows: Vec<OfferRow> = self
            .outcomes
            .iter()
            .map(|o| OfferRow {
                household_id: &o.offer.household_id,
                incentive: o.offer.incentive,
                min_incentive: o.min_incentive,
                accepted: o.accepted,
                cost_baseline: o.cost_baseline,
                cost_ilb: o.cost_ilb,
            })
            .collect();
        write_rows(&offers, &rows)?;
        let report = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(&ReportFile {
            emergency_days: &self.emergency_days,
            selection_accuracy_pct: self.scores.selection.accuracy_pct,
            offers: self.outcomes.len(),
            report: &self.report,
        })?;
        text.push('\n');
        write_text(&report, &text)?;
        Ok(vec![selection, similarity, training, offers, report])
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    emergency_days: &'a [usize],
    selection_accuracy_pct: f64,
    offers: usize,
    #[serde(flatten)]
    report: &'a ProgramReport,
}
