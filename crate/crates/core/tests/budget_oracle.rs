mod common;

use ilb::metrics::{allocate_budget, candidates, covers};
use ilb::rng::seeded;
use ilb::tariff::OfferTerms;
use rand::Rng;

#[test]
fn greedy_is_close_to_exhaustive_optimum() {
    let mut rng = seeded(2024);
    let mut worst: f64 = 1.0;
    let mut over = Vec::new();
    for case in 0..200 {
        let n = rng.random_range(1..=12);
        let days = rng.random_range(3..=10);
        let community = common::random_community(&mut rng, n, days);
        let k = rng.random_range(1..=days.min(3));
        let mut emergency_days = rand::seq::index::sample(&mut rng, days, k).into_vec();
        emergency_days.sort_unstable();
        let terms = OfferTerms {
            target_reduction_pct: rng.random_range(5.0..30.0),
            emergency_days,
            cycle_days: days,
        };
        let pool = candidates(&community, &terms).unwrap();
        let shortfall: Vec<f64> = (0..k)
            .map(|d| rng.random_range(0.05..0.7) * pool.iter().map(|c| c.reductions[d]).sum::<f64>())
            .collect();
        let plan = allocate_budget(&community, &shortfall, &terms).unwrap();
        let chosen: Vec<_> = pool.iter().filter(|c| plan.participants.contains(&c.id)).collect();
        assert!(covers(&chosen, &shortfall), "case {case}: shortfall not covered");
        let opt = common::brute_force_cover(&pool, &shortfall).unwrap();
        let got = plan.total_incentive();
        let ratio = if opt > 0.0 { got / opt } else if got > 0.0 { f64::INFINITY } else { 1.0 };
        worst = worst.max(ratio);
        if ratio > 1.3 {
            over.push(format!("case {case} (n={n}, days={k}): greedy {got:.4} vs optimum {opt:.4}"));
        }
    }
    println!("worst greedy/optimum ratio {worst:.4}");
    assert!(over.is_empty(), "{} instances over 1.3x:\n{}", over.len(), over.join("\n"));
}
