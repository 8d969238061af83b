//! Gradient-variance estimation, the EMA variance law, the momentum rate
//! bound, and optimizer memory accounting.

mod bound;
mod ema;
mod memory;
mod variance;

pub use bound::{max_step_size, theorem_bound_rhs, TheoremParams};
pub use ema::{ema_variance_law, simulate_ema_variance, EmaEstimate};
pub use memory::{
    memory_estimate, memory_table, reference_gb, write_memory_csv, MatrixShape, MemoryMethod,
    MemoryRow, ModelShape, Source, MEMORY_CSV_HEADER,
};
pub use variance::{
    estimate_layer_variance, smooth_window, write_variance_csv, VarianceEstimate, VarianceProtocol,
};
