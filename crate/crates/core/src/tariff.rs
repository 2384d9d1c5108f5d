//! Pricing and incentive arithmetic for the ILB program.
//!
//! Sign convention: a target reduction of `i` percent is a quantity change of
//! `-i` percent, so the price change is `-i / e`, which is positive for the
//! (always negative) elasticity `e`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::community::{Community, Household, HouseholdId, LoadSeries, HOURS_PER_DAY};
use crate::error::{IlbError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub baseline_rate: f64,
    pub emergency_rate: f64,
    pub emergency_days: Vec<usize>,
    pub cycle_days: usize,
}

impl TariffSchedule {
    pub fn for_household(household: &Household, terms: &OfferTerms) -> Result<Self> {
        Ok(Self {
            baseline_rate: household.baseline_rate,
            emergency_rate: emergency_rate(
                household.baseline_rate,
                terms.target_reduction_pct,
                household.elasticity,
            )?,
            emergency_days: terms.emergency_days.clone(),
            cycle_days: terms.cycle_days,
        })
    }

    fn is_emergency(&self, day: usize) -> bool {
        self.emergency_days.contains(&day)
    }
}

/// Program terms shared by every offer in a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferTerms {
    pub target_reduction_pct: f64,
    pub emergency_days: Vec<usize>,
    pub cycle_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub household_id: HouseholdId,
    pub incentive: f64,
    pub target_reduction_pct: f64,
    pub schedule: TariffSchedule,
}

impl Offer {
    pub fn new(household: &Household, incentive: f64, terms: &OfferTerms) -> Result<Self> {
        if !(incentive >= 0.0) || !incentive.is_finite() {
            return Err(IlbError::Domain(format!("incentive {incentive} must be >= 0")));
        }
        Ok(Self {
            household_id: household.id.clone(),
            incentive,
            target_reduction_pct: terms.target_reduction_pct,
            schedule: TariffSchedule::for_household(household, terms)?,
        })
    }

    pub fn terms(&self) -> OfferTerms {
        OfferTerms {
            target_reduction_pct: self.target_reduction_pct,
            emergency_days: self.schedule.emergency_days.clone(),
            cycle_days: self.schedule.cycle_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferOutcome {
    pub offer: Offer,
    pub accepted: bool,
    pub min_incentive: f64,
    pub cost_baseline: f64,
    pub cost_ilb: f64,
}

fn check_reduction(pct: f64) -> Result<()> {
    if !(0.0..100.0).contains(&pct) {
        return Err(IlbError::Domain(format!(
            "reduction {pct}% outside [0, 100)"
        )));
    }
    Ok(())
}

/// Percent price increase that induces an `target_reduction_pct` drop in demand.
pub fn price_change_pct(target_reduction_pct: f64, elasticity: f64) -> Result<f64> {
    if !(elasticity < 0.0) || !elasticity.is_finite() {
        return Err(IlbError::Domain(format!(
            "elasticity {elasticity} must be negative"
        )));
    }
    check_reduction(target_reduction_pct)?;
    Ok(-target_reduction_pct / elasticity)
}

/// Elasticity implied by a quantity change and a price change, both in percent.
pub fn price_elasticity(quantity_change_pct: f64, price_change_pct: f64) -> Result<f64> {
    if price_change_pct == 0.0 {
        return Err(IlbError::Domain("price change must be non-zero".into()));
    }
    Ok(quantity_change_pct / price_change_pct)
}

pub fn emergency_rate(baseline_rate: f64, target_reduction_pct: f64, elasticity: f64) -> Result<f64> {
    if !(baseline_rate > 0.0) {
        return Err(IlbError::Domain(format!(
            "baseline rate {baseline_rate} must be positive"
        )));
    }
    let change = price_change_pct(target_reduction_pct, elasticity)?;
    Ok(baseline_rate * (1.0 + change / 100.0))
}

fn check_coverage(load: &LoadSeries, cycle_days: usize) -> Result<()> {
    if load.days() < cycle_days {
        return Err(IlbError::Coverage {
            required: cycle_days,
            available: load.days(),
        });
    }
    Ok(())
}

fn check_days(days: &[usize], cycle_days: usize) -> Result<()> {
    match days.iter().find(|d| **d >= cycle_days) {
        Some(d) => Err(IlbError::Domain(format!(
            "emergency day {d} outside {cycle_days}-day cycle"
        ))),
        None => Ok(()),
    }
}

/// Cost of the cycle at the baseline rate.
pub fn baseline_cost(household: &Household, cycle_days: usize) -> Result<f64> {
    check_coverage(&household.load, cycle_days)?;
    Ok((0..cycle_days)
        .map(|d| household.load.daily_total(d) * household.baseline_rate)
        .sum())
}

/// Scales every hour of each emergency day by `1 - reduction_pct / 100`.
pub fn apply_reduction(load: &LoadSeries, emergency_days: &[usize], reduction_pct: f64) -> Result<LoadSeries> {
    if !(0.0..=100.0).contains(&reduction_pct) {
        return Err(IlbError::Domain(format!(
            "reduction {reduction_pct}% outside [0, 100]"
        )));
    }
    check_days(emergency_days, load.days())?;
    let keep = 1.0 - reduction_pct / 100.0;
    let mut values = load.values().to_vec();
    for &d in emergency_days {
        for v in &mut values[d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY] {
            *v *= keep;
        }
    }
    Ok(LoadSeries::from_parts_unchecked(load.start, values))
}

/// Cost of the cycle for a participant who consumed `reduced_load`.
pub fn ilb_cost(household: &Household, offer: &Offer, reduced_load: &LoadSeries) -> Result<f64> {
    let schedule = &offer.schedule;
    check_coverage(&household.load, schedule.cycle_days)?;
    check_days(&schedule.emergency_days, schedule.cycle_days)?;
    if reduced_load.len() != household.load.len() {
        return Err(IlbError::ContractViolation(format!(
            "reduced load has {} hours, original {}",
            reduced_load.len(),
            household.load.len()
        )));
    }
    for d in 0..household.load.days() {
        if !schedule.is_emergency(d) && reduced_load.day(d) != household.load.day(d) {
            return Err(IlbError::ContractViolation(format!(
                "reduced load differs from the original on non-emergency day {d}"
            )));
        }
    }
    let mut cost = 0.0;
    for d in 0..schedule.cycle_days {
        if !schedule.is_emergency(d) {
            cost += household.load.daily_total(d) * schedule.baseline_rate;
        }
    }
    for &d in &schedule.emergency_days {
        cost += reduced_load.daily_total(d) * schedule.emergency_rate;
    }
    Ok(cost - offer.incentive)
}

/// Extra emergency-day spend of a participant over the baseline, before clamping.
fn emergency_premium(household: &Household, schedule: &TariffSchedule, reduction_pct: f64) -> Result<f64> {
    check_coverage(&household.load, schedule.cycle_days)?;
    check_days(&schedule.emergency_days, schedule.cycle_days)?;
    let keep = 1.0 - reduction_pct / 100.0;
    let mut premium = 0.0;
    for &d in &schedule.emergency_days {
        let x = household.load.daily_total(d);
        premium += x * keep * schedule.emergency_rate - x * schedule.baseline_rate;
    }
    Ok(premium)
}

/// Smallest incentive for which joining does not cost the household more.
pub fn min_incentive(household: &Household, terms: &OfferTerms) -> Result<f64> {
    let schedule = TariffSchedule::for_household(household, terms)?;
    Ok(emergency_premium(household, &schedule, terms.target_reduction_pct)?.max(0.0))
}

/// Demand reduction ΔX_d on each emergency day for a participant cutting `reduction_pct`.
pub fn emergency_reductions(household: &Household, emergency_days: &[usize], reduction_pct: f64) -> Vec<f64> {
    emergency_days
        .iter()
        .map(|&d| household.load.daily_total(d) * reduction_pct / 100.0)
        .collect()
}

/// Ground-truth behavior: the household accepts when the program does not
/// raise its bill. Ties accept.
pub fn accept_offer(household: &Household, offer: &Offer) -> Result<OfferOutcome> {
    if offer.household_id != household.id {
        return Err(IlbError::ContractViolation(format!(
            "offer for {} evaluated against {}",
            offer.household_id, household.id
        )));
    }
    let reduced = apply_reduction(
        &household.load,
        &offer.schedule.emergency_days,
        offer.target_reduction_pct,
    )?;
    let cost_baseline = baseline_cost(household, offer.schedule.cycle_days)?;
    let cost_ilb = ilb_cost(household, offer, &reduced)?;
    let premium = emergency_premium(household, &offer.schedule, offer.target_reduction_pct)?;
    Ok(OfferOutcome {
        offer: offer.clone(),
        // Same inequality as cost_ilb <= cost_baseline with the shared
        // non-emergency term cancelled, so ties are decided exactly.
        accepted: offer.incentive >= premium,
        min_incentive: premium.max(0.0),
        cost_baseline,
        cost_ilb,
    })
}

/// Total kWh a household consumes over the cycle.
pub fn cycle_consumption(household: &Household, cycle_days: usize) -> Result<f64> {
    check_coverage(&household.load, cycle_days)?;
    Ok((0..cycle_days).map(|d| household.load.daily_total(d)).sum())
}

/// Uniform surcharge on non-participants that funds the incentive pool.
pub fn rate_hike(
    community: &Community,
    incentives: &BTreeMap<HouseholdId, f64>,
    cycle_days: usize,
) -> Result<f64> {
    let index = community.id_index();
    if let Some(unknown) = incentives.keys().find(|id| !index.contains_key(id.as_str())) {
        return Err(IlbError::ReferentialIntegrity(format!(
            "participant {unknown} is not in the community"
        )));
    }
    let pool: f64 = incentives.values().sum();
    if incentives.is_empty() {
        return Ok(0.0);
    }
    let participants: HashSet<&str> = incentives.keys().map(String::as_str).collect();
    let mut kwh = 0.0;
    for h in &community.households {
        if !participants.contains(h.id.as_str()) {
            kwh += cycle_consumption(h, cycle_days)?;
        }
    }
    if !(kwh > 0.0) {
        return Err(IlbError::DegeneratePopulation(
            "non-participants consume nothing over the cycle".into(),
        ));
    }
    Ok(pool / kwh)
}
