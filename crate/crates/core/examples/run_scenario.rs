//! End-to-end program on a small community, written to a temp folder.
use ilb::community::CommunitySpec;
use ilb::harness::{run_scenario, CommunitySource, RunConfig};

fn main() -> ilb::Result<()> {
    let mut cfg = RunConfig {
        community: CommunitySource::Generate {
            spec: CommunitySpec {
                counties: 2,
                households_per_neighborhood: 20,
                ..CommunitySpec::default()
            },
            seed: 8,
        },
        ..RunConfig::default()
    };
    cfg.framework.training.epochs = 5;
    cfg.scenario.default_incentive = 8.0;
    let run = run_scenario(&cfg, std::path::Path::new("."))?;
    println!("emergency days {:?}", run.emergency_days);
    println!("{:#?}", run.report);
    let dir = std::env::temp_dir().join("ilb-run-example");
    for f in run.write_outputs(&dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
