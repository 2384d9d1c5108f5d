use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::community::HouseholdId;
use crate::error::{IlbError, Result};
use crate::nn::{softmax_rows, Matrix, ParamId, ParamSet, RmsProp, RmsPropConfig, Tape};
use crate::patternnet::SimilarityMatrix;
use crate::rng::{derive_seed, seeded};

use super::spectral::symmetrize;

/// Households as nodes, symmetrized attention weights as edges and one-hot
/// node features (kept implicit: X = I).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGraph {
    pub ids: Vec<HouseholdId>,
    pub edge_weights: Matrix,
}

impl SelectionGraph {
    pub fn new(ids: Vec<HouseholdId>, a: &SimilarityMatrix) -> Result<Self> {
        if ids.len() != a.len() {
            return Err(IlbError::Shape(format!("{} ids for {} nodes", ids.len(), a.len())));
        }
        Ok(Self {
            ids,
            edge_weights: symmetrize(a),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// One-hot feature matrix.
    pub fn features(&self) -> Matrix {
        Matrix::eye(self.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub optimizer: RmsPropConfig,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 100,
            optimizer: RmsPropConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<bool>,
    /// Softmax probability of the accept class; 1 or 0 for labeled nodes.
    pub accept_probability: Vec<f64>,
}

// FNV-1a, so a node's first-layer weights follow its id rather than its row.
fn id_stream(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

struct Gcn {
    params: ParamSet,
    w1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Gcn {
    fn init(graph: &SelectionGraph, cfg: &ClassifierConfig) -> Self {
        let n = graph.len();
        let mut params = ParamSet::default();
        let bound = 1.0 / (n as f64).sqrt();
        let mut w1 = Matrix::zeros((n, cfg.hidden));
        for (i, id) in graph.ids.iter().enumerate() {
            let mut rng = seeded(derive_seed(cfg.seed, id_stream(id)));
            for v in w1.row_mut(i) {
                *v = rand::Rng::random_range(&mut rng, -bound..bound);
            }
        }
        let w1 = params.add("w1", w1);
        let mut rng = seeded(derive_seed(cfg.seed, 0));
        let w2 = params.add_uniform("w2", (cfg.hidden, 2), cfg.hidden, &mut rng);
        let b2 = params.add_zeros("b2", (1, 2));
        Self { params, w1, w2, b2 }
    }

    /// Logits n × 2 (column 1 = accept).
    fn logits(&self, tape: &mut Tape, params: &ParamSet, edges: &Matrix) -> crate::nn::Var {
        let a = tape.input(edges.clone());
        let norm = tape.gcn_norm(a);
        // X = I, so X W1 = W1.
        let w1 = tape.param(params, self.w1);
        let h = tape.matmul(norm, w1);
        let h = tape.relu(h);
        let w2 = tape.param(params, self.w2);
        let hw = tape.matmul(h, w2);
        let agg = tape.matmul(norm, hw);
        let b2 = tape.param(params, self.b2);
        tape.add_row(agg, b2)
    }
}

/// Semi-supervised two-layer GCN over the selection graph. `labeled` maps
/// node index to its known accept label; those nodes keep their labels.
pub fn classify(graph: &SelectionGraph, labeled: &BTreeMap<usize, bool>, cfg: &ClassifierConfig) -> Result<Classification> {
    let n = graph.len();
    if let Some(i) = labeled.keys().find(|i| **i >= n) {
        return Err(IlbError::Shape(format!("labeled node {i} outside graph of {n}")));
    }
    if !labeled.values().any(|v| *v) || !labeled.values().any(|v| !*v) {
        return Err(IlbError::DegenerateSupervision(format!(
            "{} labels cover only one class",
            labeled.len()
        )));
    }
    if cfg.hidden == 0 {
        return Err(IlbError::InvalidSpec("classifier hidden width must be positive".into()));
    }
    if let Some(v) = graph.edge_weights.iter().find(|v| !(**v >= 0.0)) {
        return Err(IlbError::Domain(format!("negative edge weight {v}")));
    }
    let targets: Vec<Option<usize>> = (0..n).map(|i| labeled.get(&i).map(|l| *l as usize)).collect();
    let mut model = Gcn::init(graph, cfg);
    let mut opt = RmsProp::new(cfg.optimizer, &model.params);
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let logits = model.logits(&mut tape, &model.params, &graph.edge_weights);
        let loss = tape.masked_cross_entropy(logits, targets.clone());
        let grads = tape.backward(loss, &model.params);
        if !grads.all_finite() {
            return Err(IlbError::Numerical("non-finite classifier gradient".into()));
        }
        opt.step(&mut model.params, &grads);
    }
    let mut tape = Tape::new();
    let logits = model.logits(&mut tape, &model.params, &graph.edge_weights);
    let probs = softmax_rows(tape.value(logits));
    let mut labels = Vec::with_capacity(n);
    let mut accept_probability = Vec::with_capacity(n);
    for i in 0..n {
        match labeled.get(&i) {
            Some(l) => {
                labels.push(*l);
                accept_probability.push(if *l { 1.0 } else { 0.0 });
            }
            None => {
                let p = probs[[i, 1]];
                labels.push(p > probs[[i, 0]]);
                accept_probability.push(p);
            }
        }
    }
    Ok(Classification {
        labels,
        accept_probability,
    })
}
