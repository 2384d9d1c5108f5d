//! Selection accuracy as uniform noise is added to the attention matrix.
use ilb::harness::{noise_experiment, SweepSpec};

fn main() -> ilb::Result<()> {
    let mut spec = SweepSpec::noise_study();
    spec.repetitions = 4;
    spec.community.counties = 2;
    let out = noise_experiment(&spec)?;
    for r in &out.rows {
        println!("noise {:>3}%: {:.1} ± {:.1}", r.noise_level_pct, r.mean_accuracy_pct, r.std_accuracy_pct);
    }
    Ok(())
}
