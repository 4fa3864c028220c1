//! Differentiable building blocks: tensors, dense and GRU layers, softmax,
//! reverse-mode gradients, Adam and finite-difference checking.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod store;
pub mod tensor;

pub use gradcheck::grad_check;
pub use graph::{sigmoid, softmax, Graph, Var};
pub use layers::{dense_forward, gru_step, Activation, Binding, Dense, DenseParams, Gru, GruParams};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use store::{ParamId, Parameter, ParameterStore};
pub use tensor::Tensor;

/// Probability floor applied before every logarithm in the losses.
pub const PROB_FLOOR: f64 = 1e-12;
