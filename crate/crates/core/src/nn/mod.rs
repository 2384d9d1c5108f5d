//! Minimal dense autodiff: tape, parameters, RMSProp and gradient checking.

pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;

pub use optim::{RmsProp, RmsPropConfig};
pub use params::{Grads, ParamId, ParamSet};
pub use tape::{gcn_normalize, softmax_rows, Matrix, Tape, Var};
