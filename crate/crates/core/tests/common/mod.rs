#![allow(dead_code)]

use ilb::community::{default_series_start, Community, Household, LoadSeries, SocioEconomicProfile, HOURS_PER_DAY};
use ilb::metrics::Candidate;
use rand::Rng;

pub fn profile() -> SocioEconomicProfile {
    SocioEconomicProfile {
        median_income: 55_000.0,
        unemployment_pct: 5.0,
        act_score: 21.0,
        college_pct: 55.0,
        avg_temperature: 14.0,
        precipitation: 70.0,
        dwelling_size: 160.0,
    }
}

/// Household with random hourly loads, rate and elasticity.
pub fn random_household<R: Rng>(rng: &mut R, id: &str, days: usize) -> Household {
    let scale = rng.random_range(0.3..3.0);
    let values = (0..days * HOURS_PER_DAY).map(|_| scale * rng.random_range(0.0..2.0)).collect();
    Household {
        id: id.to_string(),
        neighborhood_id: "nb-1".into(),
        county: "county-1".into(),
        load: LoadSeries::new(default_series_start(), values).unwrap(),
        elasticity: rng.random_range(-0.8..-0.02),
        baseline_rate: rng.random_range(0.08..0.30),
        profile: profile(),
    }
}

pub fn random_community<R: Rng>(rng: &mut R, n: usize, days: usize) -> Community {
    let households = (0..n).map(|i| random_household(rng, &format!("h{i:03}"), days)).collect();
    Community::from_households(households).unwrap()
}

/// Exhaustive minimum-cost cover; `None` when no subset covers.
pub fn brute_force_cover(pool: &[Candidate], shortfall: &[f64]) -> Option<f64> {
    let n = pool.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let mut cost = 0.0;
        let mut got = vec![0.0; shortfall.len()];
        for (i, c) in pool.iter().enumerate() {
            if mask >> i & 1 == 1 {
                cost += c.cost;
                for (g, r) in got.iter_mut().zip(&c.reductions) {
                    *g += r;
                }
            }
        }
        if got.iter().zip(shortfall).all(|(g, s)| g >= s) && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}
