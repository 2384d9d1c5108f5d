use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{gcn_tape, AttentionParams, EncoderParams, SimilarityMatrix};
use crate::community::FEATURE_COLUMNS;
use crate::error::{IlbError, Result};
use crate::nn::{Matrix, ParamId, ParamSet, Tape, Var};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternConfig {
    /// Window length s in hours.
    pub window: usize,
    /// Embedding size M.
    pub embed_dim: usize,
    pub heads: usize,
    pub socio_dim: usize,
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            window: 24,
            embed_dim: 32,
            heads: 4,
            socio_dim: FEATURE_COLUMNS.len(),
            gcn_hidden: 32,
            gcn_layers: 2,
        }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.embed_dim == 0 || self.gcn_hidden == 0 || self.gcn_layers == 0 {
            return Err(IlbError::InvalidSpec("model sizes must be positive".into()));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(IlbError::InvalidSpec(format!(
                "embed_dim {} is not a multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct Forecast {
    /// Next-step prediction per household, n × 1.
    pub prediction: Matrix,
    pub similarity: SimilarityMatrix,
}

/// GRU + self-attention encoder, attention across households, GCN stack and a
/// linear forecasting head.
///
/// Node features are the encoder embeddings joined with the socio-economic
/// columns; the attention weights enter only as GCN edge weights, so the value
/// and output projections are trained only when used through
/// [`inter_series_attention`](super::inter_series_attention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternModel {
    pub config: PatternConfig,
    pub seed: u64,
    pub params: ParamSet,
    encoder: EncoderParams,
    attention: AttentionParams,
    gcn: Vec<ParamId>,
    head_w: ParamId,
    head_b: ParamId,
}

const CHECKPOINT_FORMAT: &str = "ilb-patternnet/1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: PatternModel,
}

impl PatternModel {
    pub fn new(config: PatternConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut params = ParamSet::default();
        let m = config.embed_dim;
        let encoder = EncoderParams::init(&mut params, 1, m, &mut rng);
        let attention = AttentionParams::init(&mut params, m, config.heads, m, &mut rng)?;
        let mut gcn = Vec::with_capacity(config.gcn_layers);
        let mut width = m + config.socio_dim;
        for l in 0..config.gcn_layers {
            gcn.push(params.add_uniform(format!("gcn{l}.w"), (width, config.gcn_hidden), width, &mut rng));
            width = config.gcn_hidden;
        }
        let head_w = params.add_uniform("head.w", (width, 1), width, &mut rng);
        let head_b = params.add_uniform("head.b", (1, 1), width, &mut rng);
        Ok(Self {
            config,
            seed,
            params,
            encoder,
            attention,
            gcn,
            head_w,
            head_b,
        })
    }

    pub fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    pub fn attention(&self) -> &AttentionParams {
        &self.attention
    }

    pub fn gcn_weights(&self) -> &[ParamId] {
        &self.gcn
    }

    pub fn head(&self) -> (ParamId, ParamId) {
        (self.head_w, self.head_b)
    }

    fn check_inputs(&self, window: &Matrix, socio: &Matrix) -> Result<()> {
        if window.nrows() == 0 {
            return Err(IlbError::Shape("no households in window".into()));
        }
        if window.ncols() != self.config.window {
            return Err(IlbError::Shape(format!(
                "window has {} steps, model expects {}",
                window.ncols(),
                self.config.window
            )));
        }
        if socio.dim() != (window.nrows(), self.config.socio_dim) {
            return Err(IlbError::Shape(format!(
                "socio-economic features {:?}, expected ({}, {})",
                socio.dim(),
                window.nrows(),
                self.config.socio_dim
            )));
        }
        Ok(())
    }

    /// Records a forward pass on `tape` and returns `(prediction, A_est)`.
    /// `window` is n × s, `socio` is n × socio_dim.
    pub fn forward_tape(&self, tape: &mut Tape, params: &ParamSet, window: &Matrix, socio: &Matrix) -> Result<(Var, Var)> {
        self.check_inputs(window, socio)?;
        let e = self.encoder.embed(tape, params, window);
        let a_est = self.attention.similarity(tape, params, e);
        let s = tape.input(socio.clone());
        let mut h = tape.concat_cols(&[e, s]);
        for w in &self.gcn {
            let w = tape.param(params, *w);
            h = gcn_tape(tape, h, a_est, w);
        }
        let hw = tape.param(params, self.head_w);
        let hb = tape.param(params, self.head_b);
        let lin = tape.matmul(h, hw);
        Ok((tape.add_row(lin, hb), a_est))
    }

    pub fn forward(&self, window: &Matrix, socio: &Matrix) -> Result<Forecast> {
        let mut tape = Tape::new();
        let (pred, a) = self.forward_tape(&mut tape, &self.params, window, socio)?;
        let prediction = tape.value(pred).clone();
        if prediction.iter().any(|v| !v.is_finite()) {
            return Err(IlbError::Numerical("non-finite forecast".into()));
        }
        Ok(Forecast {
            prediction,
            similarity: SimilarityMatrix::new(tape.value(a).clone())?,
        })
    }

    /// Zeroes the forecasting head so every prediction is 0.
    pub fn zero_head(&mut self) {
        self.params.get_mut(self.head_w).fill(0.0);
        self.params.get_mut(self.head_b).fill(0.0);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            model: self.clone(),
        };
        let file = std::fs::File::create(path).map_err(|e| IlbError::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| IlbError::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(IlbError::InvalidSpec(format!("unknown checkpoint format {}", ckpt.format)));
        }
        // Rebuild the layout from the config and make sure the stored tensors fit it.
        let fresh = Self::new(ckpt.model.config, ckpt.model.seed)?;
        let stored = &ckpt.model.params;
        if stored.len() != fresh.params.len() {
            return Err(IlbError::Shape("checkpoint parameter count mismatch".into()));
        }
        for id in fresh.params.ids() {
            if stored.name(id) != fresh.params.name(id) || stored.get(id).dim() != fresh.params.get(id).dim() {
                return Err(IlbError::Shape(format!("checkpoint tensor {} does not match", fresh.params.name(id))));
            }
        }
        if !stored.all_finite() {
            return Err(IlbError::Numerical("checkpoint holds non-finite weights".into()));
        }
        Ok(Self {
            params: ckpt.model.params,
            ..fresh
        })
    }
}

/// Writes the similarity matrix with household ids labelling rows and columns.
pub fn write_similarity_csv(path: &Path, ids: &[String], a: &SimilarityMatrix) -> Result<()> {
    if ids.len() != a.len() {
        return Err(IlbError::Shape(format!("{} ids for {} rows", ids.len(), a.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["household_id".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(a.values().rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| IlbError::io(path, e))?;
    Ok(())
}

pub fn read_similarity_csv(path: &Path) -> Result<(Vec<String>, SimilarityMatrix)> {
    let mut r = csv::Reader::from_path(path)?;
    let ids: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    let mut values = Matrix::zeros((n, n));
    let mut row = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i >= n || rec.len() != n + 1 || rec[0] != ids[i] {
            return Err(IlbError::Validation {
                row: i + 1,
                message: "row does not line up with header ids".into(),
            });
        }
        for j in 0..n {
            values[[i, j]] = rec[j + 1].parse().map_err(|_| IlbError::Validation {
                row: i + 1,
                message: format!("unparseable weight {:?}", &rec[j + 1]),
            })?;
        }
        row = i + 1;
    }
    if row != n {
        return Err(IlbError::Shape(format!("{row} rows for {n} ids")));
    }
    Ok((ids, SimilarityMatrix::new(values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn small() -> PatternConfig {
        PatternConfig {
            window: 6,
            embed_dim: 8,
            heads: 2,
            socio_dim: 3,
            gcn_hidden: 5,
            gcn_layers: 2,
        }
    }

    fn inputs(n: usize, cfg: &PatternConfig) -> (Matrix, Matrix) {
        let w = Array2::from_shape_fn((n, cfg.window), |(i, t)| ((i * 7 + t) as f64 * 0.37).sin());
        let s = Array2::from_shape_fn((n, cfg.socio_dim), |(i, j)| ((i + 2 * j) as f64 * 0.5).cos());
        (w, s)
    }

    #[test]
    fn forward_shapes_and_similarity() {
        let m = PatternModel::new(small(), 3).unwrap();
        let (w, s) = inputs(5, &m.config);
        let f = m.forward(&w, &s).unwrap();
        assert_eq!(f.prediction.dim(), (5, 1));
        assert_eq!(f.similarity.len(), 5);
        f.similarity.check(1e-12).unwrap();
    }

    #[test]
    fn zero_head_predicts_zero() {
        let mut m = PatternModel::new(small(), 3).unwrap();
        m.zero_head();
        let (w, s) = inputs(4, &m.config);
        assert!(m.forward(&w, &s).unwrap().prediction.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(PatternModel::new(small(), 11).unwrap(), PatternModel::new(small(), 11).unwrap());
        assert_ne!(PatternModel::new(small(), 11).unwrap(), PatternModel::new(small(), 12).unwrap());
    }

    #[test]
    fn bad_config_and_inputs() {
        let mut cfg = small();
        cfg.heads = 3;
        assert!(PatternModel::new(cfg, 0).is_err());
        let m = PatternModel::new(small(), 0).unwrap();
        let (w, s) = inputs(3, &m.config);
        assert!(matches!(m.forward(&w.slice(ndarray::s![.., ..4]).to_owned(), &s), Err(IlbError::Shape(_))));
        assert!(matches!(m.forward(&w, &s.slice(ndarray::s![..2, ..]).to_owned()), Err(IlbError::Shape(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = PatternModel::new(small(), 5).unwrap();
        let id = m.head().0;
        m.params.get_mut(id)[[0, 0]] = 0.123456789;
        m.save(&path).unwrap();
        let back = PatternModel::load(&path).unwrap();
        assert_eq!(back, m);
        let (w, s) = inputs(3, &m.config);
        assert_eq!(back.forward(&w, &s).unwrap().prediction, m.forward(&w, &s).unwrap().prediction);
    }

    #[test]
    fn similarity_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let m = PatternModel::new(small(), 5).unwrap();
        let (w, s) = inputs(4, &m.config);
        let a = m.forward(&w, &s).unwrap().similarity;
        let ids: Vec<String> = (0..4).map(|i| format!("h{i}")).collect();
        write_similarity_csv(&path, &ids, &a).unwrap();
        let (back_ids, back) = read_similarity_csv(&path).unwrap();
        assert_eq!(back_ids, ids);
        assert_eq!(back, a);
    }
}
