use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::SimilarityMatrix;
use super::model::PatternModel;
use crate::community::{normalize_features, Community, HouseholdId};
use crate::error::{IlbError, Result};
use crate::nn::gradcheck::{self, GradCheckReport};
use crate::nn::{Grads, Matrix, ParamSet, RmsProp, RmsPropConfig, Tape};
use crate::rng::seeded;

/// One forecasting example: every household's window ending just before the
/// target hour, and that hour's reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Matrix,
    pub target: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub window: usize,
    /// Hours between consecutive target hours.
    pub stride: usize,
    pub split: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            window: 24,
            stride: 1,
            split: [0.7, 0.2, 0.1],
        }
    }
}

/// Per-household z-normalized loads with a chronological train/validation/test
/// split over target hours.
#[derive(Debug, Clone)]
pub struct ForecastDataset {
    pub ids: Vec<HouseholdId>,
    /// n × T, each row z-normalized over the full series.
    pub loads: Matrix,
    /// n × socio_dim, z-normalized per column.
    pub socio: Matrix,
    pub window: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn znormalize_rows(m: &mut Matrix) {
    for mut row in m.rows_mut() {
        let mean = row.mean().unwrap_or(0.0);
        let sd = row.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0).sqrt();
        if sd > 0.0 {
            row.mapv_inplace(|v| (v - mean) / sd);
        } else {
            row.fill(0.0);
        }
    }
}

impl ForecastDataset {
    pub fn from_community(community: &Community, cfg: &DatasetConfig) -> Result<Self> {
        let hours = community.common_hours();
        let n = community.len();
        let mut loads = Array2::zeros((n, hours));
        for (i, h) in community.households.iter().enumerate() {
            loads
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&h.load.values()[..hours]));
        }
        znormalize_rows(&mut loads);
        let socio = normalize_features(community)?;
        Self::split(community.ids(), loads, socio, cfg)
    }

    /// Builds the chronological split from already-normalized arrays.
    pub fn split(ids: Vec<HouseholdId>, loads: Matrix, socio: Matrix, cfg: &DatasetConfig) -> Result<Self> {
        if cfg.window == 0 || cfg.stride == 0 {
            return Err(IlbError::InvalidSpec("window and stride must be positive".into()));
        }
        let ratios = cfg.split;
        if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(IlbError::InvalidSpec(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
        }
        let targets: Vec<usize> = (cfg.window..loads.ncols()).step_by(cfg.stride).collect();
        let total = targets.len();
        let n_train = (ratios[0] * total as f64).floor() as usize;
        let n_val = (ratios[1] * total as f64).floor() as usize;
        let train = targets[..n_train].to_vec();
        let validation = targets[n_train..n_train + n_val].to_vec();
        let test = targets[n_train + n_val..].to_vec();
        Self::new(ids, loads, socio, cfg.window, train, validation, test)
    }

    pub fn new(
        ids: Vec<HouseholdId>,
        loads: Matrix,
        socio: Matrix,
        window: usize,
        train: Vec<usize>,
        validation: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        if ids.len() != loads.nrows() || socio.nrows() != loads.nrows() {
            return Err(IlbError::Shape("ids, loads and features disagree on household count".into()));
        }
        for (name, split) in [("train", &train), ("validation", &validation)] {
            if split.is_empty() {
                return Err(IlbError::InvalidSpec(format!("{name} split is empty")));
            }
        }
        if let Some(t) = train
            .iter()
            .chain(&validation)
            .chain(&test)
            .find(|t| **t < window || **t >= loads.ncols())
        {
            return Err(IlbError::InvalidSpec(format!("target hour {t} has no full window")));
        }
        Ok(Self {
            ids,
            loads,
            socio,
            window,
            train,
            validation,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sample(&self, target_hour: usize) -> Sample {
        Sample {
            window: self.loads.slice(s![.., target_hour - self.window..target_hour]).to_owned(),
            target: self.loads.slice(s![.., target_hour..target_hour + 1]).to_owned(),
        }
    }

    /// The window covering the final `window` hours, used for the snapshot
    /// of A_est handed to the selector.
    pub fn latest_window(&self) -> Matrix {
        let t = self.loads.ncols();
        self.loads.slice(s![.., t - self.window..t]).to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: RmsPropConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: RmsPropConfig::default(),
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

/// Running bounds over every A_est produced during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAudit {
    pub forward_passes: usize,
    pub max_row_sum_error: f64,
    pub min_entry: f64,
    pub max_entry: f64,
}

impl Default for SimilarityAudit {
    fn default() -> Self {
        Self {
            forward_passes: 0,
            max_row_sum_error: 0.0,
            min_entry: f64::INFINITY,
            max_entry: f64::NEG_INFINITY,
        }
    }
}

impl SimilarityAudit {
    fn record(&mut self, a: &Matrix) {
        self.forward_passes += 1;
        for row in a.rows() {
            self.max_row_sum_error = self.max_row_sum_error.max((row.sum() - 1.0).abs());
        }
        for v in a {
            self.min_entry = self.min_entry.min(*v);
            self.max_entry = self.max_entry.max(*v);
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.forward_passes > 0 && self.max_row_sum_error <= tol && self.min_entry >= 0.0 && self.max_entry <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_validation_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub similarity: SimilarityAudit,
}

impl TrainHistory {
    pub fn final_validation_mse(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_validation_mse, |e| e.validation_mse)
    }
}

fn loss_and_grads(
    model: &PatternModel,
    params: &ParamSet,
    socio: &Matrix,
    sample: &Sample,
    audit: Option<&mut SimilarityAudit>,
) -> Result<(f64, Grads)> {
    let mut tape = Tape::new();
    let (pred, a) = model.forward_tape(&mut tape, params, &sample.window, socio)?;
    let loss = tape.mse(pred, sample.target.clone());
    if let Some(audit) = audit {
        audit.record(tape.value(a));
    }
    let value = tape.value(loss)[[0, 0]];
    let grads = tape.backward(loss, params);
    if !value.is_finite() || !grads.all_finite() {
        return Err(IlbError::Numerical("non-finite loss or gradient".into()));
    }
    Ok((value, grads))
}

fn loss_only(model: &PatternModel, params: &ParamSet, socio: &Matrix, sample: &Sample, audit: Option<&mut SimilarityAudit>) -> Result<f64> {
    let mut tape = Tape::new();
    let (pred, a) = model.forward_tape(&mut tape, params, &sample.window, socio)?;
    if let Some(audit) = audit {
        audit.record(tape.value(a));
    }
    let loss = tape.mse(pred, sample.target.clone());
    Ok(tape.value(loss)[[0, 0]])
}

/// Mean per-sample MSE over the given target hours.
pub fn evaluate(model: &PatternModel, data: &ForecastDataset, targets: &[usize]) -> Result<f64> {
    mean_loss(model, data, targets, None)
}

fn mean_loss(model: &PatternModel, data: &ForecastDataset, targets: &[usize], mut audit: Option<&mut SimilarityAudit>) -> Result<f64> {
    if targets.is_empty() {
        return Err(IlbError::InvalidSpec("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for t in targets {
        total += loss_only(model, &model.params, &data.socio, &data.sample(*t), audit.as_deref_mut())?;
    }
    Ok(total / targets.len() as f64)
}

/// Mini-batch RMSProp on next-hour MSE. The returned history starts with the
/// validation MSE of the untrained model.
pub fn train(model: &PatternModel, data: &ForecastDataset, cfg: &TrainConfig) -> Result<(PatternModel, TrainHistory)> {
    if cfg.batch_size == 0 {
        return Err(IlbError::InvalidSpec("batch size must be positive".into()));
    }
    let mut model = model.clone();
    let mut audit = SimilarityAudit::default();
    let initial_validation_mse = mean_loss(&model, data, &data.validation, Some(&mut audit))?;
    let mut opt = RmsProp::new(cfg.optimizer, &model.params);
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut losses = vec![0.0; data.train.len()];

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Grads::zeros_like(&model.params);
            for &k in batch {
                let sample = data.sample(data.train[k]);
                let (loss, g) = loss_and_grads(&model, &model.params, &data.socio, &sample, Some(&mut audit))?;
                losses[k] = loss;
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.params, &grads);
        }
        // Summed in sample order so the value does not depend on the shuffle.
        let train_mse = losses.iter().sum::<f64>() / losses.len() as f64;
        let validation_mse = mean_loss(&model, data, &data.validation, Some(&mut audit))?;
        epochs.push(EpochRecord {
            epoch,
            train_mse,
            validation_mse,
        });
    }
    Ok((
        model,
        TrainHistory {
            initial_validation_mse,
            epochs,
            similarity: audit,
        },
    ))
}

/// A_est from one forward pass over the most recent window.
pub fn similarity_snapshot(model: &PatternModel, data: &ForecastDataset) -> Result<SimilarityMatrix> {
    Ok(model.forward(&data.latest_window(), &data.socio)?.similarity)
}

/// Largest relative gap between backpropagated and central-difference
/// gradients of the sample MSE, over every parameter entry.
pub fn grad_check(model: &PatternModel, socio: &Matrix, sample: &Sample, epsilon: f64) -> Result<f64> {
    Ok(grad_check_report(model, socio, sample, epsilon)?.max_relative_error)
}

/// [`grad_check`] with the location and values of the worst entry.
pub fn grad_check_report(model: &PatternModel, socio: &Matrix, sample: &Sample, epsilon: f64) -> Result<GradCheckReport> {
    gradcheck::check_gradients(
        &model.params,
        epsilon,
        |p| loss_and_grads(model, p, socio, sample, None),
        |p| loss_only(model, p, socio, sample, None),
    )
}
