//! Emergency pricing for one household and its accept/reject decisions.
use ilb::community::{generate_community, CommunitySpec};
use ilb::tariff::{accept_offer, emergency_rate, min_incentive, price_change_pct, price_elasticity, Offer, OfferTerms};

fn main() -> ilb::Result<()> {
    println!("elasticity of a 5% drop under a 10% price rise: {}", price_elasticity(-5.0, 10.0)?);

    let community = generate_community(&CommunitySpec::default(), 7)?;
    let h = &community.households[0];
    let terms = OfferTerms {
        target_reduction_pct: 10.0,
        emergency_days: vec![4, 11, 19],
        cycle_days: 30,
    };
    println!(
        "{}: e = {:.3}, price change {:.1}%, emergency rate ${:.3}/kWh",
        h.id,
        h.elasticity,
        price_change_pct(terms.target_reduction_pct, h.elasticity)?,
        emergency_rate(h.baseline_rate, terms.target_reduction_pct, h.elasticity)?
    );
    let floor = min_incentive(h, &terms)?;
    println!("minimum incentive ${floor:.2}");
    for incentive in [0.0, floor / 2.0, floor, 100.0] {
        let o = accept_offer(h, &Offer::new(h, incentive, &terms)?)?;
        println!(
            "  offer ${incentive:>7.2}: accepted {:<5} bill {:.2} -> {:.2}",
            o.accepted, o.cost_baseline, o.cost_ilb
        );
    }
    Ok(())
}
