//! Generates a small synthetic community and writes it as CSV.
use ilb::community::{generate_community, load_community, write_community, CommunitySpec};

fn main() -> ilb::Result<()> {
    let spec = CommunitySpec {
        counties: 2,
        households_per_neighborhood: 10,
        days: 7,
        ..CommunitySpec::default()
    };
    let community = generate_community(&spec, 42)?;
    for nb in &community.neighborhoods {
        println!("{} ({}): {} households", nb.id, nb.county, nb.members.len());
    }
    let h = &community.households[0];
    println!(
        "{}: elasticity {:.3}, rate ${:.3}/kWh, day 0 uses {:.1} kWh",
        h.id,
        h.elasticity,
        h.baseline_rate,
        h.load.daily_total(0)
    );

    let dir = std::env::temp_dir().join("ilb-generate-example");
    std::fs::create_dir_all(&dir).map_err(|e| ilb::IlbError::io(&dir, e))?;
    let (hh, loads) = (dir.join("households.csv"), dir.join("loads.csv"));
    write_community(&community, &hh, &loads)?;
    let back = load_community(&hh, &loads)?;
    println!("round trip: {} households in {}", back.len(), dir.display());
    Ok(())
}
