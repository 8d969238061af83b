use std::io::Write;

use sha2::{Digest, Sha256};

use super::Problem;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{LrSchedule, Optimizer, OptimizerConfig, ParamBlock};
use crate::rng::{streams, Rng};

/// A run is stopped and flagged once the loss exceeds this (or is not finite).
pub const DIVERGENCE_LOSS: f64 = 1e8;

/// Extra per-step measurements. Both cost additional gradient evaluations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Record `‖∇_l ℓ(θᵗ)‖` of the expected objective.
    pub full_gradients: bool,
    /// Record `‖g_l − G_l‖²` where `G` is the gradient on a nested batch of
    /// this size that extends the training batch.
    pub variance_batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    /// Mini-batch loss at the parameters before the update.
    pub loss: f64,
    pub lr: f64,
    pub grad_norms: Vec<f64>,
    pub full_grad_norms: Option<Vec<f64>>,
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub block_names: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub divergent: bool,
    pub final_params: Vec<ParamBlock>,
    /// Expected-objective loss at `final_params`; NaN after divergence.
    pub final_loss: f64,
    /// SHA-256 over names, shapes and little-endian values of `final_params`.
    pub params_digest: String,
}

impl TrainTrace {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string(), "loss".to_string(), "lr".to_string()];
        h.extend(self.block_names.iter().map(|b| format!("{b}_gradnorm")));
        let first = self.rows.first();
        if first.is_some_and(|r| r.full_grad_norms.is_some()) {
            h.extend(self.block_names.iter().map(|b| format!("{b}_fullgradnorm")));
        }
        if first.is_some_and(|r| r.variance.is_some()) {
            h.extend(self.block_names.iter().map(|b| format!("{b}_variance")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), r.loss.to_string(), r.lr.to_string()];
            rec.extend(r.grad_norms.iter().map(f64::to_string));
            for extra in [&r.full_grad_norms, &r.variance].into_iter().flatten() {
                rec.extend(extra.iter().map(f64::to_string));
            }
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// `(1/T) Σ_t Σ_l ‖∇_l ℓ(θᵗ)‖²`; needs `full_gradients`.
    pub fn mean_full_grad_sq(&self) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for r in &self.rows {
            total += r
                .full_grad_norms
                .as_ref()?
                .iter()
                .map(|g| g * g)
                .sum::<f64>();
        }
        Some(total / self.rows.len() as f64)
    }

    /// Per-block variance series, one `Vec` per block.
    pub fn variance_series(&self) -> Option<Vec<Vec<f64>>> {
        let mut out = vec![Vec::with_capacity(self.rows.len()); self.block_names.len()];
        for r in &self.rows {
            for (s, v) in out.iter_mut().zip(r.variance.as_ref()?) {
                s.push(*v);
            }
        }
        Some(out)
    }
}

pub fn params_digest(params: &[ParamBlock]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.name.as_bytes());
        h.update([0u8]);
        h.update((p.value.rows() as u64).to_le_bytes());
        h.update((p.value.cols() as u64).to_le_bytes());
        for x in p.value.data() {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Trains from the seed's initialization for `steps` steps.
pub fn run_training<P: Problem>(
    problem: &P,
    config: &OptimizerConfig,
    schedule: &LrSchedule,
    steps: u64,
    seed: u64,
) -> Result<TrainTrace> {
    run_training_with(
        problem,
        config,
        schedule,
        steps,
        seed,
        &RunOptions::default(),
    )
}

pub fn run_training_with<P: Problem>(
    problem: &P,
    config: &OptimizerConfig,
    schedule: &LrSchedule,
    steps: u64,
    seed: u64,
    options: &RunOptions,
) -> Result<TrainTrace> {
    let mut params = problem.init_params(&mut Rng::with_stream(seed, streams::INIT));
    train_from(problem, config, schedule, steps, seed, options, &mut params)
}

/// Trains `params` in place; `seed` drives batch sampling.
fn train_from<P: Problem>(
    problem: &P,
    config: &OptimizerConfig,
    schedule: &LrSchedule,
    steps: u64,
    seed: u64,
    options: &RunOptions,
    params: &mut [ParamBlock],
) -> Result<TrainTrace> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    schedule.validate()?;
    if schedule.total_steps < steps {
        return Err(Error::Config(format!(
            "schedule covers {} steps, run needs {steps}",
            schedule.total_steps
        )));
    }
    let mut opt = Optimizer::new(config.clone(), params)?;
    let mut batches = Rng::with_stream(seed, streams::BATCHES);
    let mut diag = Rng::with_stream(seed, streams::DIAGNOSTICS);
    let bsz = problem.train_batch_size();

    let mut rows = Vec::with_capacity(steps as usize);
    let mut divergent = false;
    for t in 1..=steps {
        let batch = problem.sample_batch(bsz, &mut batches);
        let (loss, grads) = match problem.loss_grad(params, &batch) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                divergent = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let lr = schedule.lr_at(t)?;
        let full_grad_norms = if options.full_gradients {
            let (_, full) = problem.full_loss_grad(params)?;
            Some(full.iter().map(Matrix::frobenius_norm).collect())
        } else {
            None
        };
        let variance = match options.variance_batch {
            Some(large) => {
                let big = problem.extend_batch(&batch, large, &mut diag);
                let (_, g_big) = problem.loss_grad(params, &big)?;
                let v: Result<Vec<f64>> = grads
                    .iter()
                    .zip(&g_big)
                    .map(|(g, b)| Ok(g.sub(b)?.frobenius_norm_sq()))
                    .collect();
                Some(v?)
            }
            None => None,
        };
        rows.push(TraceRow {
            step: t,
            loss,
            lr,
            grad_norms: grads.iter().map(Matrix::frobenius_norm).collect(),
            full_grad_norms,
            variance,
        });
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            divergent = true;
            break;
        }
        opt.step(params, &grads, lr)?;
    }

    let final_loss = if divergent || params.iter().any(|p| !p.value.is_finite()) {
        f64::NAN
    } else {
        match problem.full_loss_grad(params) {
            Ok((l, _)) => l,
            Err(Error::NonFinite(_)) => f64::NAN,
            Err(e) => return Err(e),
        }
    };
    Ok(TrainTrace {
        block_names: params.iter().map(|p| p.name.clone()).collect(),
        rows,
        divergent: divergent || !final_loss.is_finite(),
        params_digest: params_digest(params),
        final_params: params.to_vec(),
        final_loss,
    })
}
