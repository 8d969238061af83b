use super::Problem;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::ParamBlock;
use crate::rng::Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Per-block comparison of analytic against central-difference gradients.
///
/// The error of a block is `max_i |fd_i - g_i| / max(max_i |g_i|, max_i |fd_i|)`:
/// absolute deviation measured against the block's gradient scale, so tiny
/// entries do not blow up the ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<(String, f64)>,
    pub tolerance: f64,
    /// Entries compared per block.
    pub checked: Vec<usize>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.1).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.1 <= self.tolerance)
    }
}

/// Checks the problem's own gradient at `params` on `batch`, every entry.
pub fn finite_diff_check<P: Problem>(
    problem: &P,
    params: &[ParamBlock],
    batch: &P::Batch,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = problem.loss_grad(params, batch)?;
    compare_gradients(problem, params, batch, &grads, tolerance, None)
}

/// Compares `analytic` against finite differences of `problem.loss`.
///
/// With `sample = Some((k, rng))` only `k` random entries per block are
/// differenced (the block scale still uses every analytic entry).
pub fn compare_gradients<P: Problem>(
    problem: &P,
    params: &[ParamBlock],
    batch: &P::Batch,
    analytic: &[Matrix],
    tolerance: f64,
    mut sample: Option<(usize, &mut Rng)>,
) -> Result<GradCheckReport> {
    if analytic.len() != params.len() {
        return Err(Error::Config("one gradient per block required".into()));
    }
    let mut work = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    let mut checked = Vec::with_capacity(params.len());
    for (b, g) in analytic.iter().enumerate() {
        if g.shape() != params[b].value.shape() {
            return Err(Error::ShapeMismatch {
                op: "gradient check",
                left: g.shape(),
                right: params[b].value.shape(),
            });
        }
        let n = g.len();
        let entries: Vec<usize> = match sample.as_mut() {
            Some((k, rng)) if *k < n => (0..*k).map(|_| rng.below(n)).collect(),
            _ => (0..n).collect(),
        };
        let mut worst = 0.0f64;
        let mut fd_scale = 0.0f64;
        for &i in &entries {
            let orig = work[b].value.data()[i];
            work[b].value.data_mut()[i] = orig + FD_STEP;
            let up = problem.loss(&work, batch)?;
            work[b].value.data_mut()[i] = orig - FD_STEP;
            let down = problem.loss(&work, batch)?;
            work[b].value.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max((fd - g.data()[i]).abs());
            fd_scale = fd_scale.max(fd.abs());
        }
        let scale = g.max_abs().max(fd_scale);
        let err = if scale > 0.0 { worst / scale } else { 0.0 };
        blocks.push((params[b].name.clone(), err));
        checked.push(entries.len());
    }
    Ok(GradCheckReport {
        blocks,
        tolerance,
        checked,
    })
}
