use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{SweepSpec, SweepVariable};
use super::output::write_rows;
use super::scenario::{
    learn_similarity, make_offers, offer_terms, participation_cap, resolve_emergency_days, score_households,
    select_with_fallback, truth_labels,
};
use super::stats::mean_std;
use crate::community::{generate_community, Community, ScenarioConfig};
use crate::error::{IlbError, Result, StageExt};
use crate::metrics::{acceptance_rate_counts, responsiveness_cost, total_demand_reduction};
use crate::rng::derive_seed;
use crate::selector::SelectionConfig;
use crate::tariff::{cycle_consumption, emergency_reductions, rate_hike, OfferTerms};

/// One seeded community with its emergency schedule.
struct Replicate {
    seed: u64,
    community: Community,
    scenario: ScenarioConfig,
    terms: OfferTerms,
    emergency_kwh: Vec<f64>,
}

impl Replicate {
    fn new(spec: &SweepSpec, seed: u64) -> Result<Self> {
        let community = generate_community(&spec.community, derive_seed(seed, 0)).stage("community")?;
        let scenario = ScenarioConfig {
            rng_seed: seed,
            ..spec.scenario.clone()
        };
        let days = resolve_emergency_days(&scenario, spec.emergency_day_count)?;
        let terms = offer_terms(&scenario, days);
        let emergency_kwh = community
            .households
            .iter()
            .map(|h| emergency_reductions(h, &terms.emergency_days, 100.0).iter().sum())
            .collect();
        Ok(Self {
            seed,
            community,
            scenario,
            terms,
            emergency_kwh,
        })
    }

    /// Framework ranking of households, most likely accepters first.
    fn framework_ranking(&self, spec: &SweepSpec) -> Result<Vec<usize>> {
        let truth = truth_labels(&self.community, &self.terms, self.scenario.default_incentive)?;
        let scores = score_households(&self.community, &spec.framework, self.scenario.split_ratios, &truth, self.seed)?;
        Ok(scores.ranking())
    }

    fn ids(&self, who: &[usize]) -> Vec<String> {
        who.iter().map(|i| self.community.households[*i].id.clone()).collect()
    }
}

fn replicates(spec: &SweepSpec) -> impl Iterator<Item = Result<Replicate>> + '_ {
    (0..spec.repetitions).map(move |r| Replicate::new(spec, derive_seed(spec.seed, r as u64)))
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(IlbError::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    }
}

fn mismatch(what: &str, row: usize) -> IlbError {
    IlbError::ContractViolation(format!("{what} in row {row} disagrees with the per-household record"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncentiveRow {
    pub seed: u64,
    pub incentive: f64,
    pub offered: usize,
    pub accepted: usize,
    pub acceptance_rate_pct: f64,
    pub incentive_total: f64,
    pub reduction_kwh: f64,
    pub responsiveness_cost: Option<f64>,
    pub total_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncentiveDetail {
    pub seed: u64,
    pub incentive: f64,
    pub household_id: String,
    pub min_incentive: f64,
    pub accepted: bool,
    pub emergency_kwh: f64,
    pub potential_reduction_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveSweep {
    pub rows: Vec<IncentiveRow>,
    pub details: Vec<IncentiveDetail>,
}

/// Offers every household each incentive on the ladder.
pub fn sweep_incentive(spec: &SweepSpec) -> Result<IncentiveSweep> {
    spec.validate()?;
    let (mut rows, mut details) = (Vec::new(), Vec::new());
    for rep in replicates(spec) {
        let rep = rep?;
        let all: Vec<usize> = (0..rep.community.len()).collect();
        for &incentive in &spec.values {
            let outcomes = make_offers(&rep.community, &all, incentive, &rep.terms)?;
            let accepted: Vec<usize> = all.iter().copied().filter(|i| outcomes[*i].accepted).collect();
            let mut reductions = Vec::new();
            for &i in &accepted {
                reductions.extend(emergency_reductions(
                    &rep.community.households[i],
                    &rep.terms.emergency_days,
                    rep.terms.target_reduction_pct,
                ));
            }
            let paid = vec![incentive; accepted.len()];
            rows.push(IncentiveRow {
                seed: rep.seed,
                incentive,
                offered: all.len(),
                accepted: accepted.len(),
                acceptance_rate_pct: acceptance_rate_counts(accepted.len(), all.len())?,
                incentive_total: paid.iter().sum(),
                reduction_kwh: reductions.iter().sum(),
                responsiveness_cost: optional(responsiveness_cost(&paid, &reductions))?,
                total_reduction_pct: total_demand_reduction(
                    &rep.community,
                    &rep.ids(&accepted),
                    rep.terms.target_reduction_pct,
                    &rep.terms.emergency_days,
                )?,
            });
            for (i, o) in outcomes.iter().enumerate() {
                details.push(IncentiveDetail {
                    seed: rep.seed,
                    incentive,
                    household_id: o.offer.household_id.clone(),
                    min_incentive: o.min_incentive,
                    accepted: o.accepted,
                    emergency_kwh: rep.emergency_kwh[i],
                    potential_reduction_kwh: rep.emergency_kwh[i] * rep.terms.target_reduction_pct / 100.0,
                });
            }
        }
    }
    Ok(IncentiveSweep { rows, details })
}

impl IncentiveSweep {
    /// Recomputes every row from the per-household record.
    pub fn verify(&self) -> Result<()> {
        let mut groups: BTreeMap<(u64, u64), Vec<&IncentiveDetail>> = BTreeMap::new();
        for d in &self.details {
            groups.entry((d.seed, d.incentive.to_bits())).or_default().push(d);
        }
        for (k, row) in self.rows.iter().enumerate() {
            let ds = groups.get(&(row.seed, row.incentive.to_bits())).ok_or_else(|| mismatch("group", k))?;
            let acc: Vec<&&IncentiveDetail> = ds.iter().filter(|d| d.accepted).collect();
            if acc.iter().any(|d| d.min_incentive > row.incentive) {
                return Err(mismatch("acceptance decision", k));
            }
            let rate = 100.0 * acc.len() as f64 / ds.len() as f64;
            let paid = row.incentive * acc.len() as f64;
            let reduced: f64 = acc.iter().map(|d| d.potential_reduction_kwh).sum();
            let total: f64 = ds.iter().map(|d| d.emergency_kwh).sum();
            let cost = (reduced > 0.0).then(|| paid / reduced);
            if !close(rate, row.acceptance_rate_pct) {
                return Err(mismatch("acceptance rate", k));
            }
            if !close_opt(cost, row.responsiveness_cost) {
                return Err(mismatch("responsiveness cost", k));
            }
            if !close(100.0 * reduced / total, row.total_reduction_pct) {
                return Err(mismatch("total reduction", k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub seed: u64,
    /// `framework` or `top_consumers`.
    pub selection: String,
    pub participant_reduction_pct: f64,
    pub participants: usize,
    pub incentive_total: f64,
    pub reduction_kwh: f64,
    pub total_reduction_pct: f64,
    pub responsiveness_cost: Option<f64>,
    pub red_line_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionDetail {
    pub seed: u64,
    pub selection: String,
    pub household_id: String,
    pub participant: bool,
    pub incentive: f64,
    pub emergency_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSweep {
    pub rows: Vec<ReductionRow>,
    pub details: Vec<ReductionDetail>,
}

/// A fixed quarter of households (by default) all participate at the
/// scenario's default incentive while the required cut varies. The quarter
/// is chosen by the framework, and again as the largest emergency-day
/// consumers for the skewed comparison.
pub fn sweep_reduction(spec: &SweepSpec) -> Result<ReductionSweep> {
    spec.validate()?;
    let (mut rows, mut details) = (Vec::new(), Vec::new());
    for rep in replicates(spec) {
        let rep = rep?;
        let n = rep.community.len();
        let cap = participation_cap(spec.participation_pct, n);
        let framework: Vec<usize> = rep.framework_ranking(spec)?.into_iter().take(cap).collect();
        let mut by_use: Vec<usize> = (0..n).collect();
        by_use.sort_by(|&a, &b| {
            rep.emergency_kwh[b]
                .total_cmp(&rep.emergency_kwh[a])
                .then_with(|| rep.community.households[a].id.cmp(&rep.community.households[b].id))
        });
        by_use.truncate(cap);
        let incentive = rep.scenario.default_incentive;
        for (label, chosen) in [("framework", framework), ("top_consumers", by_use)] {
            let ids = rep.ids(&chosen);
            for &pct in &spec.values {
                let mut reductions = Vec::new();
                for &i in &chosen {
                    reductions.extend(emergency_reductions(&rep.community.households[i], &rep.terms.emergency_days, pct));
                }
                let paid = vec![incentive; chosen.len()];
                rows.push(ReductionRow {
                    seed: rep.seed,
                    selection: label.to_string(),
                    participant_reduction_pct: pct,
                    participants: chosen.len(),
                    incentive_total: paid.iter().sum(),
                    reduction_kwh: reductions.iter().sum(),
                    total_reduction_pct: total_demand_reduction(&rep.community, &ids, pct, &rep.terms.emergency_days)?,
                    responsiveness_cost: optional(responsiveness_cost(&paid, &reductions))?,
                    red_line_pct: spec.shortfall_pct,
                });
            }
            let mut member = vec![false; n];
            for &i in &chosen {
                member[i] = true;
            }
            for (i, h) in rep.community.households.iter().enumerate() {
                details.push(ReductionDetail {
                    seed: rep.seed,
                    selection: label.to_string(),
                    household_id: h.id.clone(),
                    participant: member[i],
                    incentive,
                    emergency_kwh: rep.emergency_kwh[i],
                });
            }
        }
    }
    Ok(ReductionSweep { rows, details })
}

impl ReductionSweep {
    pub fn verify(&self) -> Result<()> {
        let mut groups: BTreeMap<(u64, &str), Vec<&ReductionDetail>> = BTreeMap::new();
        for d in &self.details {
            groups.entry((d.seed, d.selection.as_str())).or_default().push(d);
        }
        for (k, row) in self.rows.iter().enumerate() {
            let ds = groups.get(&(row.seed, row.selection.as_str())).ok_or_else(|| mismatch("group", k))?;
            let part: Vec<&&ReductionDetail> = ds.iter().filter(|d| d.participant).collect();
            let reduced: f64 = part.iter().map(|d| d.emergency_kwh * row.participant_reduction_pct / 100.0).sum();
            let paid: f64 = part.iter().map(|d| d.incentive).sum();
            let total: f64 = ds.iter().map(|d| d.emergency_kwh).sum();
            if part.len() != row.participants || !close(paid, row.incentive_total) {
                return Err(mismatch("participants", k));
            }
            if !close(100.0 * reduced / total, row.total_reduction_pct) {
                return Err(mismatch("total reduction", k));
            }
            if !close_opt((reduced > 0.0).then(|| paid / reduced), row.responsiveness_cost) {
                return Err(mismatch("responsiveness cost", k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateHikeRow {
    pub seed: u64,
    pub participation_pct: f64,
    pub incentive: f64,
    pub participants: usize,
    pub incentive_total: f64,
    pub nonparticipant_kwh: f64,
    pub r_extra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateHikeDetail {
    pub seed: u64,
    pub household_id: String,
    /// Position in the framework ranking; the first `participants` enroll.
    pub rank: usize,
    pub cycle_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateHikeSweep {
    pub rows: Vec<RateHikeRow>,
    pub details: Vec<RateHikeDetail>,
}

/// Grid of participation share (`values`) × incentive (`secondary_values`);
/// the top-ranked households enroll and are paid in full.
pub fn sweep_rate_hike(spec: &SweepSpec) -> Result<RateHikeSweep> {
    spec.validate()?;
    let (mut rows, mut details) = (Vec::new(), Vec::new());
    for rep in replicates(spec) {
        let rep = rep?;
        let ranking = rep.framework_ranking(spec)?;
        let n = rep.community.len();
        let mut cycle_kwh = Vec::with_capacity(n);
        for h in &rep.community.households {
            cycle_kwh.push(cycle_consumption(h, rep.terms.cycle_days)?);
        }
        for &pct in &spec.values {
            let cap = participation_cap(pct, n);
            let enrolled = &ranking[..cap];
            let nonparticipant_kwh: f64 = ranking[cap..].iter().map(|i| cycle_kwh[*i]).sum();
            for &incentive in &spec.secondary_values {
                let incentives: BTreeMap<String, f64> = rep.ids(enrolled).into_iter().map(|id| (id, incentive)).collect();
                rows.push(RateHikeRow {
                    seed: rep.seed,
                    participation_pct: pct,
                    incentive,
                    participants: cap,
                    incentive_total: incentives.values().sum(),
                    nonparticipant_kwh,
                    r_extra: rate_hike(&rep.community, &incentives, rep.terms.cycle_days)?,
                });
            }
        }
        for (rank, &i) in ranking.iter().enumerate() {
            details.push(RateHikeDetail {
                seed: rep.seed,
                household_id: rep.community.households[i].id.clone(),
                rank,
                cycle_kwh: cycle_kwh[i],
            });
        }
    }
    Ok(RateHikeSweep { rows, details })
}

impl RateHikeSweep {
    pub fn verify(&self) -> Result<()> {
        for (k, row) in self.rows.iter().enumerate() {
            let ds: Vec<&RateHikeDetail> = self.details.iter().filter(|d| d.seed == row.seed).collect();
            let rest: f64 = ds.iter().filter(|d| d.rank >= row.participants).map(|d| d.cycle_kwh).sum();
            let expected = if row.participants == 0 {
                0.0
            } else {
                row.participants as f64 * row.incentive / rest
            };
            if !close(expected, row.r_extra) || !close(rest, row.nonparticipant_kwh) {
                return Err(mismatch("rate hike", k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub noise_level_pct: f64,
    pub seeds: usize,
    pub mean_accuracy_pct: f64,
    pub std_accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDetail {
    pub noise_level_pct: f64,
    pub seed: u64,
    pub queried: usize,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStudy {
    pub rows: Vec<NoiseRow>,
    pub details: Vec<NoiseDetail>,
}

/// Fixed inputs of the noise study: one community, its true labels and the
/// learned A_est.
#[derive(Debug, Clone)]
pub struct NoiseSetup {
    pub community: Community,
    pub truth: Vec<bool>,
    pub similarity: crate::patternnet::SimilarityMatrix,
}

/// Generates the community from `spec.seed` and trains the forecaster once.
pub fn noise_setup(spec: &SweepSpec) -> Result<NoiseSetup> {
    spec.validate()?;
    let community = generate_community(&spec.community, derive_seed(spec.seed, 0)).stage("community")?;
    let scenario = ScenarioConfig {
        rng_seed: spec.seed,
        ..spec.scenario.clone()
    };
    let terms = offer_terms(&scenario, resolve_emergency_days(&scenario, spec.emergency_day_count)?);
    let truth = truth_labels(&community, &terms, scenario.default_incentive)?;
    let (_, _, similarity) = learn_similarity(&community, &spec.framework, scenario.split_ratios, spec.seed)?;
    Ok(NoiseSetup {
        community,
        truth,
        similarity,
    })
}

/// Runs the selection pipeline `spec.repetitions` times per noise level.
/// Repetition r uses the same selection seed at every level.
pub fn noise_levels(setup: &NoiseSetup, spec: &SweepSpec) -> Result<NoiseStudy> {
    let (mut rows, mut details) = (Vec::new(), Vec::new());
    for &level in &spec.values {
        let mut acc = Vec::with_capacity(spec.repetitions);
        for r in 0..spec.repetitions {
            let seed = derive_seed(spec.seed, 1000 + r as u64);
            let cfg = SelectionConfig {
                seed,
                noise_level_pct: level,
                ..spec.framework.selection
            };
            let sel = select_with_fallback(&setup.community, &setup.similarity, &setup.truth, &cfg)?;
            acc.push(sel.accuracy_pct);
            details.push(NoiseDetail {
                noise_level_pct: level,
                seed,
                queried: sel.queried.iter().filter(|q| **q).count(),
                accuracy_pct: sel.accuracy_pct,
            });
        }
        let (mean, std) = mean_std(&acc);
        rows.push(NoiseRow {
            noise_level_pct: level,
            seeds: acc.len(),
            mean_accuracy_pct: mean,
            std_accuracy_pct: std,
        });
    }
    Ok(NoiseStudy { rows, details })
}

/// Selection accuracy under injected noise: [`noise_setup`] then
/// [`noise_levels`].
pub fn noise_experiment(spec: &SweepSpec) -> Result<NoiseStudy> {
    noise_levels(&noise_setup(spec)?, spec)
}

impl NoiseStudy {
    pub fn verify(&self) -> Result<()> {
        for (k, row) in self.rows.iter().enumerate() {
            let acc: Vec<f64> = self
                .details
                .iter()
                .filter(|d| d.noise_level_pct == row.noise_level_pct)
                .map(|d| d.accuracy_pct)
                .collect();
            let (m, s) = mean_std(&acc);
            if acc.len() != row.seeds || !close(m, row.mean_accuracy_pct) || !close(s, row.std_accuracy_pct) {
                return Err(mismatch("accuracy summary", k));
            }
        }
        Ok(())
    }
}

/// Output of any sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepTables {
    Incentive(IncentiveSweep),
    Reduction(ReductionSweep),
    RateHike(RateHikeSweep),
    Noise(NoiseStudy),
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTables> {
    Ok(match spec.variable {
        SweepVariable::Incentive => SweepTables::Incentive(sweep_incentive(spec)?),
        SweepVariable::ReductionPct => SweepTables::Reduction(sweep_reduction(spec)?),
        SweepVariable::ParticipationPct => SweepTables::RateHike(sweep_rate_hike(spec)?),
        SweepVariable::NoiseLevel => SweepTables::Noise(noise_experiment(spec)?),
    })
}

/// `dir/name.csv` → `dir/name_<suffix>.csv`.
pub fn companion_path(main: &Path, suffix: &str) -> PathBuf {
    let stem = main.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    main.with_file_name(format!("{stem}_{suffix}.csv"))
}

impl SweepTables {
    pub fn verify(&self) -> Result<()> {
        match self {
            Self::Incentive(t) => t.verify(),
            Self::Reduction(t) => t.verify(),
            Self::RateHike(t) => t.verify(),
            Self::Noise(t) => t.verify(),
        }
    }

    /// Writes the main table to `main` and the per-household (or per-seed)
    /// record next to it.
    pub fn write(&self, main: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = main.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| IlbError::io(dir, e))?;
        }
        let companion = match self {
            Self::Noise(_) => companion_path(main, "seeds"),
            _ => companion_path(main, "households"),
        };
        match self {
            Self::Incentive(t) => {
                write_rows(main, &t.rows)?;
                write_rows(&companion, &t.details)?;
            }
            Self::Reduction(t) => {
                write_rows(main, &t.rows)?;
                write_rows(&companion, &t.details)?;
            }
            Self::RateHike(t) => {
                write_rows(main, &t.rows)?;
                write_rows(&companion, &t.details)?;
            }
            Self::Noise(t) => {
                write_rows(main, &t.rows)?;
                write_rows(&companion, &t.details)?;
            }
        }
        Ok(vec![main.to_path_buf(), companion])
    }
}
