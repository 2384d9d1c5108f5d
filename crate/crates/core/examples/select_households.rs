//! Spectral clustering, stratified queries and GCN labels on a planted community.
use ilb::community::{generate_community, CommunitySpec};
use ilb::harness::{learn_similarity, offer_terms, truth_labels, FrameworkConfig};
use ilb::patternnet::{DatasetConfig, PatternConfig, TrainConfig};
use ilb::selector::{select_households, SelectionConfig};
use ilb::community::ScenarioConfig;

fn main() -> ilb::Result<()> {
    let spec = CommunitySpec {
        counties: 2,
        households_per_neighborhood: 30,
        days: 14,
        planted: Some(Default::default()),
        ..CommunitySpec::default()
    };
    let community = generate_community(&spec, 2)?;
    let scenario = ScenarioConfig {
        default_incentive: 10.0,
        ..ScenarioConfig::default()
    };
    let terms = offer_terms(&scenario, vec![3, 8, 12]);
    let truth = truth_labels(&community, &terms, scenario.default_incentive)?;
    let framework = FrameworkConfig {
        dataset: DatasetConfig { stride: 4, ..DatasetConfig::default() },
        model: PatternConfig { embed_dim: 16, ..PatternConfig::default() },
        training: TrainConfig { epochs: 60, ..TrainConfig::default() },
        ..FrameworkConfig::default()
    };
    let (_, _, a) = learn_similarity(&community, &framework, scenario.split_ratios, 1)?;
    let result = select_households(&community, &a, &truth, &SelectionConfig { seed: 4, ..SelectionConfig::default() })?;
    println!(
        "{} queried, {} predicted to accept, accuracy {:.1}% on the rest",
        result.queried.iter().filter(|q| **q).count(),
        result.predicted.iter().filter(|p| **p).count(),
        result.accuracy_pct
    );
    Ok(())
}
