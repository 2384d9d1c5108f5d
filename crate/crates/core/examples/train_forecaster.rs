//! Trains the pattern network briefly and inspects its similarity matrix.
use ilb::community::{generate_community, CommunitySpec};
use ilb::patternnet::{similarity_snapshot, train, DatasetConfig, ForecastDataset, PatternConfig, PatternModel, TrainConfig};

fn main() -> ilb::Result<()> {
    let spec = CommunitySpec {
        counties: 2,
        households_per_neighborhood: 8,
        days: 14,
        ..CommunitySpec::default()
    };
    let community = generate_community(&spec, 5)?;
    let data = ForecastDataset::from_community(&community, &DatasetConfig { stride: 6, ..DatasetConfig::default() })?;
    let config = PatternConfig {
        embed_dim: 16,
        ..PatternConfig::default()
    };
    let model = PatternModel::new(config, 1)?;
    let (model, history) = train(&model, &data, &TrainConfig { epochs: 20, ..TrainConfig::default() })?;
    println!("validation mse {:.4} -> {:.4}", history.initial_validation_mse, history.final_validation_mse());
    println!(
        "A_est audit over {} forward passes: row-sum error {:.1e}, entries in [{:.4}, {:.4}]",
        history.similarity.forward_passes,
        history.similarity.max_row_sum_error,
        history.similarity.min_entry,
        history.similarity.max_entry
    );
    let a = similarity_snapshot(&model, &data)?;
    let row = a.values().row(0);
    println!("{} attends most to itself? {}", data.ids[0], row.iter().all(|v| *v <= row[0]));
    Ok(())
}
