//! Program-level utilities: acceptance rate, responsiveness cost, total
//! demand reduction, and a greedy allocator for the incentive budget problem
//! (minimize total incentive subject to covering every emergency-day shortfall).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::community::{Community, HouseholdId};
use crate::error::{IlbError, Result};
use crate::tariff::{emergency_reductions, min_incentive, rate_hike, OfferOutcome, OfferTerms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    /// `None` when no offers were made.
    pub acceptance_rate_pct: Option<f64>,
    /// `None` when nothing was reduced.
    pub responsiveness_cost: Option<f64>,
    pub total_reduction_pct: f64,
    pub incentive_total: f64,
    pub r_extra: f64,
    /// One flag per emergency day: realized reduction covered the shortfall.
    pub shortfall_met: Vec<bool>,
}

pub fn acceptance_rate(outcomes: &[OfferOutcome]) -> Result<f64> {
    let accepted = outcomes.iter().filter(|o| o.accepted).count();
    acceptance_rate_counts(accepted, outcomes.len())
}

pub fn acceptance_rate_counts(accepted: usize, offered: usize) -> Result<f64> {
    if offered == 0 {
        return Err(IlbError::UndefinedMetric(
            "acceptance rate with no offers made".into(),
        ));
    }
    Ok(100.0 * accepted as f64 / offered as f64)
}

/// Incentive paid per kWh of emergency-day reduction. `reductions` holds one
/// ΔX entry per participant per emergency day, in any layout.
pub fn responsiveness_cost(incentives: &[f64], reductions: &[f64]) -> Result<f64> {
    let reduced: f64 = reductions.iter().sum();
    if !(reduced > 0.0) {
        return Err(IlbError::UndefinedMetric(
            "responsiveness cost with zero total reduction".into(),
        ));
    }
    Ok(incentives.iter().sum::<f64>() / reduced)
}

/// Share of all emergency-day consumption removed by the participants.
pub fn total_demand_reduction(
    community: &Community,
    participants: &[HouseholdId],
    reduction_pct: f64,
    emergency_days: &[usize],
) -> Result<f64> {
    let index = community.id_index();
    let mut chosen = HashSet::new();
    for id in participants {
        let i = index.get(id.as_str()).ok_or_else(|| {
            IlbError::ReferentialIntegrity(format!("participant {id} is not in the community"))
        })?;
        chosen.insert(*i);
    }
    let mut total = 0.0;
    let mut removed = 0.0;
    for (i, h) in community.households.iter().enumerate() {
        if let Some(d) = emergency_days.iter().find(|d| **d >= h.load.days()) {
            return Err(IlbError::Coverage {
                required: d + 1,
                available: h.load.days(),
            });
        }
        let x: f64 = emergency_days.iter().map(|&d| h.load.daily_total(d)).sum();
        total += x;
        if chosen.contains(&i) {
            removed += emergency_reductions(h, emergency_days, reduction_pct)
                .iter()
                .sum::<f64>();
        }
    }
    if !(total > 0.0) {
        return Err(IlbError::UndefinedMetric(
            "community consumes nothing on emergency days".into(),
        ));
    }
    Ok(100.0 * removed / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub participants: Vec<HouseholdId>,
    pub incentives: BTreeMap<HouseholdId, f64>,
}

impl Allocation {
    pub fn total_incentive(&self) -> f64 {
        self.incentives.values().sum()
    }
}

/// Per-household inputs of the budget problem.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: HouseholdId,
    pub cost: f64,
    /// ΔX on each emergency day, aligned with the shortfall vector.
    pub reductions: Vec<f64>,
}

pub fn candidates(community: &Community, terms: &OfferTerms) -> Result<Vec<Candidate>> {
    community
        .households
        .iter()
        .map(|h| {
            Ok(Candidate {
                id: h.id.clone(),
                cost: min_incentive(h, terms)?,
                reductions: emergency_reductions(h, &terms.emergency_days, terms.target_reduction_pct),
            })
        })
        .collect()
}

pub fn covers(selected: &[&Candidate], shortfall: &[f64]) -> bool {
    shortfall.iter().enumerate().all(|(k, need)| {
        selected.iter().map(|c| c.reductions[k]).sum::<f64>() >= *need
    })
}

/// Greedy cover of the per-day shortfalls, each participant paid exactly its
/// minimum incentive.
///
/// Households are ranked by minimum incentive per kWh of reduction on the
/// day with the largest shortfall; a second ranking rescores after every pick
/// by cost per unit of the remaining gap over all days. Along both, each
/// prefix is also tried with the single cheapest household that would finish
/// the cover, so one oversized last pick cannot dominate the bill. Every
/// candidate cover then drops selected households (most expensive first)
/// whose removal keeps every day covered, and the cheapest result wins.
pub fn allocate_budget(
    community: &Community,
    shortfall_per_day: &[f64],
    terms: &OfferTerms,
) -> Result<Allocation> {
    if shortfall_per_day.len() != terms.emergency_days.len() {
        return Err(IlbError::Shape(format!(
            "{} shortfalls for {} emergency days",
            shortfall_per_day.len(),
            terms.emergency_days.len()
        )));
    }
    let pool = candidates(community, terms)?;
    let picked = greedy_cover(&pool, shortfall_per_day, &terms.emergency_days)?;
    Ok(Allocation {
        participants: picked.iter().map(|c| c.id.clone()).collect(),
        incentives: picked.iter().map(|c| (c.id.clone(), c.cost)).collect(),
    })
}

/// Core of [`allocate_budget`] over precomputed candidates. `days` labels
/// the shortfall entries for error reporting.
pub fn greedy_cover<'a>(pool: &'a [Candidate], shortfall: &[f64], days: &[usize]) -> Result<Vec<&'a Candidate>> {
    for (k, need) in shortfall.iter().enumerate() {
        let available: f64 = pool.iter().map(|c| c.reductions[k]).sum();
        if available < *need {
            return Err(IlbError::Infeasible {
                day: days.get(k).copied().unwrap_or(k),
                required: *need,
                available,
            });
        }
    }
    if shortfall.iter().all(|s| *s <= 0.0) {
        return Ok(Vec::new());
    }
    let worst = shortfall
        .iter()
        .enumerate()
        .fold(0, |best, (k, s)| if *s > shortfall[best] { k } else { best });

    let score = |c: &Candidate| {
        let dx = c.reductions[worst];
        if dx > 0.0 {
            c.cost / dx
        } else {
            f64::INFINITY
        }
    };
    let mut order: Vec<&Candidate> = pool.iter().collect();
    order.sort_by(|a, b| score(a).total_cmp(&score(b)).then_with(|| a.id.cmp(&b.id)));

    let mut best: Option<(f64, Vec<&Candidate>)> = None;
    for spine in [order, residual_order(pool, shortfall)] {
        for cover in completions(&spine, shortfall) {
            let cover = prune(cover, shortfall);
            let cost: f64 = cover.iter().map(|c| c.cost).sum();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, cover));
            }
        }
    }
    Ok(best.map(|(_, cover)| cover).unwrap_or_default())
}

/// Order built step by step: next is the household with the lowest cost per
/// unit of still-missing reduction, each day's gap scaled by its shortfall.
fn residual_order<'a>(pool: &'a [Candidate], shortfall: &[f64]) -> Vec<&'a Candidate> {
    let mut gap = shortfall.to_vec();
    let mut left: Vec<&Candidate> = pool.iter().collect();
    let mut order = Vec::with_capacity(pool.len());
    while !left.is_empty() {
        let gain = |c: &Candidate| -> f64 {
            c.reductions
                .iter()
                .zip(&gap)
                .zip(shortfall)
                .filter(|((_, g), s)| **g > 0.0 && **s > 0.0)
                .map(|((r, g), s)| r.min(*g) / s)
                .sum()
        };
        let score = |c: &Candidate| {
            let g = gain(c);
            if g > 0.0 {
                c.cost / g
            } else {
                f64::INFINITY
            }
        };
        let (i, _) = left
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| score(a).total_cmp(&score(b)).then_with(|| a.id.cmp(&b.id)))
            .expect("nonempty");
        let c = left.swap_remove(i);
        for (g, r) in gap.iter_mut().zip(&c.reductions) {
            *g -= r;
        }
        order.push(c);
    }
    order
}

/// Covers obtained from each prefix of `order` plus the cheapest single
/// later household that finishes it, and the first covering prefix itself.
fn completions<'a>(order: &[&'a Candidate], shortfall: &[f64]) -> Vec<Vec<&'a Candidate>> {
    let mut out = Vec::new();
    let mut prefix: Vec<&Candidate> = Vec::new();
    for (p, c) in order.iter().enumerate() {
        if covers(&prefix, shortfall) {
            break;
        }
        let finisher = order[p..]
            .iter()
            .filter(|f| {
                let mut trial = prefix.clone();
                trial.push(f);
                covers(&trial, shortfall)
            })
            .min_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.id.cmp(&b.id)));
        if let Some(f) = finisher {
            let mut trial = prefix.clone();
            trial.push(f);
            out.push(trial);
        }
        prefix.push(c);
    }
    if covers(&prefix, shortfall) {
        out.push(prefix);
    }
    out
}

/// Drops households, most expensive first, while every day stays covered.
fn prune<'a>(selected: Vec<&'a Candidate>, shortfall: &[f64]) -> Vec<&'a Candidate> {
    let mut by_cost: Vec<usize> = (0..selected.len()).collect();
    by_cost.sort_by(|&a, &b| {
        selected[b]
            .cost
            .total_cmp(&selected[a].cost)
            .then_with(|| selected[b].id.cmp(&selected[a].id))
    });
    let mut keep = vec![true; selected.len()];
    for i in by_cost {
        keep[i] = false;
        let trial: Vec<&Candidate> = selected
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(c, _)| *c)
            .collect();
        if !covers(&trial, shortfall) {
            keep[i] = true;
        }
    }
    selected
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| c)
        .collect()
}

/// Settles a round of offers: accepters cut `terms.target_reduction_pct` on
/// every emergency day and are paid their offered incentive. A day's
/// shortfall is `shortfall_pct` of that day's community consumption.
pub fn program_report(
    community: &Community,
    terms: &OfferTerms,
    outcomes: &[OfferOutcome],
    shortfall_pct: f64,
) -> Result<ProgramReport> {
    let index = community.id_index();
    let mut incentives = BTreeMap::new();
    let mut paid = Vec::new();
    let mut reductions = Vec::new();
    let mut removed = vec![0.0; terms.emergency_days.len()];
    for o in outcomes.iter().filter(|o| o.accepted) {
        let i = *index.get(o.offer.household_id.as_str()).ok_or_else(|| {
            IlbError::ReferentialIntegrity(format!("offer to unknown household {}", o.offer.household_id))
        })?;
        let dx = emergency_reductions(&community.households[i], &terms.emergency_days, terms.target_reduction_pct);
        for (k, v) in dx.iter().enumerate() {
            removed[k] += v;
        }
        reductions.extend(dx);
        paid.push(o.offer.incentive);
        incentives.insert(o.offer.household_id.clone(), o.offer.incentive);
    }
    let participants: Vec<HouseholdId> = incentives.keys().cloned().collect();
    let acceptance_rate_pct = if outcomes.is_empty() {
        None
    } else {
        Some(acceptance_rate(outcomes)?)
    };
    let responsiveness_cost = match responsiveness_cost(&paid, &reductions) {
        Ok(v) => Some(v),
        Err(IlbError::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let total_reduction_pct =
        total_demand_reduction(community, &participants, terms.target_reduction_pct, &terms.emergency_days)?;
    let shortfall_met = terms
        .emergency_days
        .iter()
        .zip(&removed)
        .map(|(&d, r)| {
            let demand: f64 = community.households.iter().map(|h| h.load.daily_total(d)).sum();
            *r >= shortfall_pct / 100.0 * demand
        })
        .collect();
    Ok(ProgramReport {
        acceptance_rate_pct,
        responsiveness_cost,
        total_reduction_pct,
        incentive_total: paid.iter().sum(),
        r_extra: rate_hike(community, &incentives, terms.cycle_days)?,
        shortfall_met,
    })
}
