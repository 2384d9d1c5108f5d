//! Acceptance, cost and reduction across an incentive ladder.
use ilb::harness::{sweep_incentive, SweepSpec};

fn main() -> ilb::Result<()> {
    let spec = SweepSpec {
        repetitions: 2,
        ..SweepSpec::default()
    };
    let out = sweep_incentive(&spec)?;
    out.verify()?;
    println!("seed                  incentive  accept%  $/kWh    total%");
    for r in &out.rows {
        println!(
            "{:<20}  {:>9.0}  {:>7.1}  {:>7}  {:>6.2}",
            r.seed,
            r.incentive,
            r.acceptance_rate_pct,
            r.responsiveness_cost.map_or("-".into(), |c| format!("{c:.2}")),
            r.total_reduction_pct
        );
    }
    Ok(())
}
