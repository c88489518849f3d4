//! Small neural networks with analytic gradients: an MLP, a four-gate LSTM,
//! min-max normalization, full-batch training, and the velocity and
//! time-offset predictors built on them.

mod fvon;
mod lstm;
mod mlp;
mod model;
mod normalize;
mod tpn;
mod train;

pub use fvon::{F2fFvon, Fallback, ItsFvon, Prediction};
pub use lstm::{LstmModel, LstmState, SeqSample};
pub use mlp::{MlpModel, Sample};
pub use model::Trainable;
pub use normalize::MinMaxNormalizer;
pub use tpn::Tpn;
pub use train::{train, Optimizer, TrainConfig, TrainReport};
