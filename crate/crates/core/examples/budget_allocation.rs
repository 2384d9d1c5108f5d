//! Cheapest set of participants covering a required cut on each emergency day.
use ilb::community::{generate_community, CommunitySpec};
use ilb::metrics::allocate_budget;
use ilb::tariff::{rate_hike, OfferTerms};

fn main() -> ilb::Result<()> {
    let community = generate_community(&CommunitySpec::default(), 3)?;
    let terms = OfferTerms {
        target_reduction_pct: 10.0,
        emergency_days: vec![2, 9, 23],
        cycle_days: 30,
    };
    // 2% of community demand on each emergency day.
    let shortfall: Vec<f64> = terms
        .emergency_days
        .iter()
        .map(|&d| 0.02 * community.households.iter().map(|h| h.load.daily_total(d)).sum::<f64>())
        .collect();
    let plan = allocate_budget(&community, &shortfall, &terms)?;
    println!(
        "{} of {} households enrolled for ${:.2} in total",
        plan.participants.len(),
        community.len(),
        plan.total_incentive()
    );
    println!("rate hike on everyone else: {:.5} $/kWh", rate_hike(&community, &plan.incentives, 30)?);
    Ok(())
}
