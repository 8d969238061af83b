//! SCALE against plain SGD on a layered noisy quadratic whose last block
//! carries most of the gradient noise.

use scale_opt::problems::{run_training_with, NoisyQuadratic, QuadLayer, RunOptions};
use scale_opt::{LrSchedule, OptimizerConfig};

fn main() -> scale_opt::Result<()> {
    let q = NoisyQuadratic::new(vec![
        QuadLayer::new(8, 8, 1.0, 0.1),
        QuadLayer::new(8, 8, 2.0, 0.1),
        QuadLayer::new(8, 16, 1.0, 10.0),
    ])?;
    let steps = 500;
    let opts = RunOptions {
        full_gradients: true,
        variance_batch: None,
    };
    for cfg in [OptimizerConfig::sgd(0.2), OptimizerConfig::scale(0.05)] {
        let sched = LrSchedule::new(steps, cfg.peak_lr)?;
        let trace = run_training_with(&q, &cfg, &sched, steps, 0, &opts)?;
        println!(
            "{:<8} final loss {:.4}  mean |grad|^2 {:.4}  digest {}",
            cfg.method.label(),
            trace.final_loss,
            trace.mean_full_grad_sq().unwrap_or(f64::NAN),
            &trace.params_digest[..12]
        );
        for row in trace.rows.iter().step_by(100) {
            println!(
                "  step {:>4}  loss {:>10.4}  lr {:.4}",
                row.step, row.loss, row.lr
            );
        }
    }
    Ok(())
}
