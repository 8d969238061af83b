//! SGD, Adam and SCALE on the synthetic classification MLP, a small
//! learning-rate grid each. Pass a step count to shorten the run:
//! `cargo run --release --example train_mlp_compare -- 500`.

use rayon::prelude::*;
use scale_opt::problems::{run_training, MlpConfig, MlpModel};
use scale_opt::{LrSchedule, OptimizerConfig};

type Grid = (&'static str, fn(f64) -> OptimizerConfig, [f64; 3]);

fn main() -> scale_opt::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3000);
    let model = MlpModel::new(MlpConfig::default())?;
    let grids: [Grid; 3] = [
        ("sgd", OptimizerConfig::sgd, [1.0, 3.0, 10.0]),
        ("adam", OptimizerConfig::adam, [0.01, 0.03, 0.1]),
        ("scale", OptimizerConfig::scale, [0.01, 0.03, 0.1]),
    ];
    let jobs: Vec<(&str, f64, OptimizerConfig)> = grids
        .iter()
        .flat_map(|(name, make, lrs)| lrs.iter().map(move |&lr| (*name, lr, make(lr))))
        .collect();
    let results: Vec<(&str, f64, f64)> = jobs
        .par_iter()
        .map(|(name, lr, cfg)| {
            let sched = LrSchedule::new(steps, *lr).expect("valid schedule");
            let tr = run_training(&model, cfg, &sched, steps, 0).expect("training runs");
            (*name, *lr, tr.final_loss)
        })
        .collect();
    println!("{steps} steps, seed 0");
    for (name, lr, loss) in results {
        println!("{name:<6} lr {lr:<5} final loss {loss:.3e}");
    }
    Ok(())
}
