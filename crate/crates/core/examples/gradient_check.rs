//! Finite-difference check of the full forecaster's backward pass.
use ilb::community::{generate_community, CommunitySpec};
use ilb::patternnet::{grad_check_report, DatasetConfig, ForecastDataset, PatternConfig, PatternModel};

fn main() -> ilb::Result<()> {
    let spec = CommunitySpec {
        counties: 2,
        households_per_neighborhood: 4,
        days: 4,
        ..CommunitySpec::default()
    };
    let community = generate_community(&spec, 9)?;
    let data = ForecastDataset::from_community(&community, &DatasetConfig::default())?;
    let model = PatternModel::new(
        PatternConfig {
            embed_dim: 8,
            heads: 2,
            gcn_hidden: 8,
            ..PatternConfig::default()
        },
        3,
    )?;
    let sample = data.sample(data.train[0]);
    for eps in [1e-4, 1e-5, 1e-6] {
        let r = grad_check_report(&model, &data.socio, &sample, eps)?;
        println!(
            "eps {eps:e}: per-tensor {:.2e} ({}), worst entry {:.2e}",
            r.max_relative_error, r.worst_tensor, r.max_entry_relative_error
        );
    }
    Ok(())
}
