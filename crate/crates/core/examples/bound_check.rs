//! Layer-wise SGD-M on the noisy quadratic, run at the largest step sizes the
//! rate bound allows, next to the bound itself.

use scale_opt::diagnostics::{max_step_size, theorem_bound_rhs, TheoremParams};
use scale_opt::problems::{run_training_with, NoisyQuadratic, Problem, QuadLayer, RunOptions};
use scale_opt::rng::streams;
use scale_opt::{LrSchedule, OptimizerConfig, Rng};

fn main() -> scale_opt::Result<()> {
    let q = NoisyQuadratic::new(vec![
        QuadLayer::new(4, 4, 1.0, 0.1),
        QuadLayer::new(4, 4, 1.0, 0.1),
        QuadLayer::new(4, 4, 1.0, 10.0),
    ])?;
    let horizon = 2000;
    let opts = RunOptions {
        full_gradients: true,
        variance_batch: None,
    };
    for betas in [[0.5, 0.5, 0.9], [0.5, 0.5, 0.5], [0.9, 0.9, 0.9]] {
        let init = q.init_params(&mut Rng::with_stream(0, streams::INIT));
        let p = TheoremParams {
            layers: 3,
            horizon,
            gamma: q.smoothness(),
            delta1: q.full_loss_grad(&init)?.0,
            delta: 0.1,
            betas: betas.to_vec(),
            sigmas: q.layers.iter().map(|l| l.noise_sigma).collect(),
        };
        let mut cfg = OptimizerConfig::sgdm(
            1.0,
            (0..3).map(|l| (["layer0", "layer1", "layer2"][l], betas[l])),
        );
        let mut etas = Vec::new();
        for l in 0..3 {
            let eta = max_step_size(&p, l)?;
            cfg.lr_multipliers.insert(q.block_name(l), eta);
            etas.push(eta);
        }
        let trace = run_training_with(
            &q,
            &cfg,
            &LrSchedule::constant(horizon, 1.0)?,
            horizon,
            0,
            &opts,
        )?;
        println!(
            "betas {betas:?}: step sizes {:.4?}  mean |grad|^2 {:.3}  bound {:.1}",
            etas,
            trace.mean_full_grad_sq().unwrap_or(f64::NAN),
            theorem_bound_rhs(&p)?
        );
    }
    Ok(())
}
