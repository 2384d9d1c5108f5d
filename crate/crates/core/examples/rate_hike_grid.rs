//! Surcharge on non-participants over participation share and incentive.
use ilb::harness::{sweep_rate_hike, SweepSpec, SweepVariable};

fn main() -> ilb::Result<()> {
    let spec = SweepSpec {
        variable: SweepVariable::ParticipationPct,
        values: vec![0.0, 10.0, 25.0, 50.0],
        repetitions: 1,
        ..SweepSpec::default()
    };
    let out = sweep_rate_hike(&spec)?;
    out.verify()?;
    for r in &out.rows {
        println!("{:>4}% at ${:>3}: {:.2} c/kWh", r.participation_pct, r.incentive, 100.0 * r.r_extra);
    }
    Ok(())
}
