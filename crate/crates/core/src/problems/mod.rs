//! Desk-scale training problems with exact gradients, and the loop that
//! trains them.

mod gradcheck;
mod mlp;
mod quadratic;
mod train;

pub use gradcheck::{compare_gradients, finite_diff_check, GradCheckReport};
pub use mlp::{MlpBatch, MlpConfig, MlpModel};
pub use quadratic::{NoisyQuadratic, QuadBatch, QuadLayer};
pub use train::{
    params_digest, run_training, run_training_with, RunOptions, TraceRow, TrainTrace,
    DIVERGENCE_LOSS,
};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::optim::ParamBlock;
use crate::rng::Rng;

/// A stochastic objective over named parameter blocks.
///
/// Batches are explicit values so the same draw can be re-evaluated (finite
/// differences) or nested inside a larger one (variance estimation).
pub trait Problem: Sync {
    type Batch: Clone + Send;

    fn init_params(&self, rng: &mut Rng) -> Vec<ParamBlock>;

    /// Mini-batch size used for training steps.
    fn train_batch_size(&self) -> usize;

    fn sample_batch(&self, size: usize, rng: &mut Rng) -> Self::Batch;

    /// A batch of `size` samples that contains `batch` as its prefix.
    fn extend_batch(&self, batch: &Self::Batch, size: usize, rng: &mut Rng) -> Self::Batch;

    /// Mean loss and per-block gradients over `batch`.
    fn loss_grad(&self, params: &[ParamBlock], batch: &Self::Batch) -> Result<(f64, Vec<Matrix>)>;

    fn loss(&self, params: &[ParamBlock], batch: &Self::Batch) -> Result<f64> {
        Ok(self.loss_grad(params, batch)?.0)
    }

    /// The expected (noise-free / full-dataset) loss and gradient.
    fn full_loss_grad(&self, params: &[ParamBlock]) -> Result<(f64, Vec<Matrix>)>;
}
