//! Pattern-recognition network: per-household GRU + self-attention encoder,
//! multi-head attention across households (whose averaged weights form the
//! similarity matrix A_est), socio-economic concatenation, a GCN over the
//! attention graph and a one-step load forecasting head.

pub mod layers;
mod model;
mod train;

pub use layers::{
    concat_features, gcn_layer, gru_forward, household_embedding, inter_series_attention, self_attention,
    AttentionParams, EncoderParams, GruParams, HeadParams, SelfAttentionParams, SimilarityMatrix,
};
pub use model::{read_similarity_csv, write_similarity_csv, Forecast, PatternConfig, PatternModel};
pub use train::{
    evaluate, grad_check, grad_check_report, similarity_snapshot, train, DatasetConfig, EpochRecord, ForecastDataset, Sample,
    SimilarityAudit, TrainConfig, TrainHistory,
};
