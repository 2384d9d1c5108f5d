use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ilb::community::{generate_community, load_community, write_community, CommunitySpec, ScenarioConfig};
use ilb::harness::{
    companion_path, offer_terms, read_json, resolve_emergency_days, run_scenario, run_sweep, select_with_fallback,
    truth_labels, write_training_csv, FrameworkConfig, RunConfig, RunManifest, SweepSpec, SweepVariable,
};
use ilb::patternnet::{
    read_similarity_csv, similarity_snapshot, train, write_similarity_csv, ForecastDataset,
    PatternModel, TrainConfig,
};
use ilb::rng::derive_seed;
use ilb::selector::SelectionConfig;
use ilb::{IlbError, Result};

#[derive(Parser)]
#[command(name = "ilb", version, about = "Incentive-driven load balancing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic community as households.csv + loads.csv.
    Generate {
        /// CommunitySpec JSON; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "community")]
        out: PathBuf,
    },
    /// Train the pattern network and export A_est.
    Train {
        #[arg(long)]
        households: PathBuf,
        #[arg(long)]
        loads: PathBuf,
        /// FrameworkConfig JSON (dataset, model, training).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "train-out")]
        out: PathBuf,
    },
    /// Cluster, query and classify households from a saved A_est.
    Select {
        #[arg(long)]
        households: PathBuf,
        #[arg(long)]
        loads: PathBuf,
        #[arg(long)]
        similarity: PathBuf,
        /// ScenarioConfig JSON; its default incentive decides true labels.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// SelectionConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        emergency_days: usize,
        #[arg(long, default_value = "select-out")]
        out: PathBuf,
    },
    /// Full scenario: train, select, offer, settle.
    Run {
        /// RunConfig JSON; relative community paths resolve against its folder.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "run-out")]
        out: PathBuf,
    },
    /// Experiment sweep described by a SweepSpec JSON file.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Selection accuracy under injected attention noise.
    Noise {
        /// SweepSpec JSON; the variable is forced to noise_level.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "noise.csv")]
        out: PathBuf,
    },
}

fn optional_json<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map(read_json).transpose().map(Option::unwrap_or_default)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| IlbError::io(dir, e))
}

fn finish(manifest: &mut RunManifest, dir: &Path, files: &[PathBuf], path: &Path) -> Result<()> {
    manifest.record(dir, files)?;
    manifest.write(path)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn seeds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { spec, seed, out } => {
            let spec: CommunitySpec = optional_json(&spec)?;
            let community = generate_community(&spec, seed)?;
            create_dir(&out)?;
            let files = vec![out.join("households.csv"), out.join("loads.csv")];
            write_community(&community, &files[0], &files[1])?;
            let mut m = RunManifest::new("generate", &spec, seeds(&[("community", seed)]))?;
            finish(&mut m, &out, &files, &out.join("manifest.json"))
        }
        Command::Train {
            households,
            loads,
            config,
            seed,
            out,
        } => {
            let cfg: FrameworkConfig = optional_json(&config)?;
            cfg.validate()?;
            let community = load_community(&households, &loads)?;
            let data = ForecastDataset::from_community(&community, &cfg.dataset)?;
            let model = PatternModel::new(cfg.model, derive_seed(seed, 1))?;
            let training = TrainConfig {
                seed: derive_seed(seed, 2),
                ..cfg.training
            };
            let (model, history) = train(&model, &data, &training)?;
            let a = similarity_snapshot(&model, &data)?;
            create_dir(&out)?;
            let files = vec![out.join("model.json"), out.join("training.csv"), out.join("similarity.csv")];
            model.save(&files[0])?;
            write_training_csv(&files[1], &history)?;
            write_similarity_csv(&files[2], &data.ids, &a)?;
            println!(
                "validation mse {:.5} -> {:.5}",
                history.initial_validation_mse,
                history.final_validation_mse()
            );
            let mut m = RunManifest::new("train", &cfg, seeds(&[("train", seed)]))?;
            finish(&mut m, &out, &files, &out.join("manifest.json"))
        }
        Command::Select {
            households,
            loads,
            similarity,
            scenario,
            config,
            emergency_days,
            out,
        } => {
            let scenario: ScenarioConfig = optional_json(&scenario)?;
            scenario.validate()?;
            let cfg: SelectionConfig = optional_json(&config)?;
            let community = load_community(&households, &loads)?;
            let (ids, a) = read_similarity_csv(&similarity)?;
            if ids != community.ids() {
                return Err(IlbError::ReferentialIntegrity(
                    "similarity matrix ids differ from the community's".into(),
                ));
            }
            let terms = offer_terms(&scenario, resolve_emergency_days(&scenario, emergency_days)?);
            let truth = truth_labels(&community, &terms, scenario.default_incentive)?;
            let result = select_with_fallback(&community, &a, &truth, &cfg)?;
            create_dir(&out)?;
            let files = vec![out.join("selection.csv")];
            result.write_csv(&files[0])?;
            println!("accuracy on unqueried households: {:.2}%", result.accuracy_pct);
            let snapshot = serde_json::json!({ "scenario": scenario, "selection": cfg });
            let mut m = RunManifest::new("select", &snapshot, seeds(&[("selection", cfg.seed), ("scenario", scenario.rng_seed)]))?;
            finish(&mut m, &out, &files, &out.join("manifest.json"))
        }
        Command::Run { config, out } => {
            let cfg: RunConfig = optional_json(&config)?;
            let base = config
                .as_deref()
                .and_then(Path::parent)
                .map(Path::to_path_buf)
                .unwrap_or_default();
            let run = run_scenario(&cfg, &base)?;
            let files = run.write_outputs(&out)?;
            let r = &run.report;
            println!(
                "offers {} | acceptance {} | incentives {:.2} | reduction {:.3}% | r_extra {:.6}/kWh",
                run.outcomes.len(),
                r.acceptance_rate_pct.map_or("-".into(), |v| format!("{v:.1}%")),
                r.incentive_total,
                r.total_reduction_pct,
                r.r_extra
            );
            let mut s = vec![("scenario", cfg.scenario.rng_seed)];
            if let ilb::harness::CommunitySource::Generate { seed, .. } = &cfg.community {
                s.push(("community", *seed));
            }
            let mut m = RunManifest::new("run", &cfg, seeds(&s))?;
            finish(&mut m, &out, &files, &out.join("manifest.json"))
        }
        Command::Sweep { spec } => {
            let spec: SweepSpec = read_json(&spec)?;
            sweep(&spec, "sweep")
        }
        Command::Noise { spec, out } => {
            let mut spec = match spec {
                Some(p) => read_json(&p)?,
                None => SweepSpec {
                    output: out,
                    ..SweepSpec::noise_study()
                },
            };
            spec.variable = SweepVariable::NoiseLevel;
            sweep(&spec, "noise")
        }
    }
}

fn sweep(spec: &SweepSpec, command: &str) -> Result<()> {
    let tables = run_sweep(spec)?;
    tables.verify()?;
    let files = tables.write(&spec.output)?;
    let dir = spec.output.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut m = RunManifest::new(command, spec, seeds(&[("sweep", spec.seed)]))?;
    finish(&mut m, &dir, &files, &companion_path(&spec.output, "manifest").with_extension("json"))
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
