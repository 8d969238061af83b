pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod matrix;
pub mod normalize;
pub mod optim;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::{svd_exact, Matrix, SvdResult};
pub use normalize::{dual_norm, normalize, NormKind, NsConfig};
pub use optim::{LrSchedule, Method, Optimizer, OptimizerConfig, ParamBlock, Role};
pub use rng::Rng;
