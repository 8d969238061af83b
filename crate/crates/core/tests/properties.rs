use std::time::Duration;

use scale_opt::cli::{cmd_bench_norms, BenchOptions};
use scale_opt::diagnostics::{
    estimate_layer_variance, max_step_size, theorem_bound_rhs, TheoremParams, VarianceProtocol,
};
use scale_opt::normalize::NormKind;
use scale_opt::problems::{
    run_training_with, MlpConfig, MlpModel, NoisyQuadratic, Problem, QuadLayer, RunOptions,
};
use scale_opt::rng::streams;
use scale_opt::{LrSchedule, OptimizerConfig, Rng};

fn three_block_quadratic() -> NoisyQuadratic {
    NoisyQuadratic::new(vec![
        QuadLayer::new(4, 4, 1.0, 0.1),
        QuadLayer::new(4, 4, 1.0, 0.1),
        QuadLayer::new(4, 4, 1.0, 10.0),
    ])
    .unwrap()
}

const FULL: RunOptions = RunOptions {
    full_gradients: true,
    variance_batch: None,
};

#[test]
fn mlp_head_has_largest_gradient_variance_at_init() {
    let m = MlpModel::new(MlpConfig::default()).unwrap();
    for seed in 0..3 {
        let params = m.init_params(&mut Rng::with_stream(seed, streams::INIT));
        let est = estimate_layer_variance(
            &m,
            &params,
            &VarianceProtocol::default(),
            &mut Rng::with_stream(seed, streams::SAMPLING),
            40,
        )
        .unwrap();
        let pick = |name: &str| est.mean[est.blocks.iter().position(|b| b == name).unwrap()];
        assert!(pick("head") > pick("hidden1"), "seed {seed}: {est:?}");
        assert!(pick("head") > pick("input"), "seed {seed}: {est:?}");
    }
}

#[test]
fn empirical_gradient_norm_sits_under_the_rate_bound() {
    let q = three_block_quadratic();
    let betas = [0.5, 0.5, 0.9];
    let horizon = 2000;
    for seed in 0..5 {
        let init = q.init_params(&mut Rng::with_stream(seed, streams::INIT));
        let p = TheoremParams {
            layers: 3,
            horizon,
            gamma: q.smoothness(),
            delta1: q.full_loss_grad(&init).unwrap().0,
            delta: 0.1,
            betas: betas.to_vec(),
            sigmas: q.layers.iter().map(|l| l.noise_sigma).collect(),
        };
        let rhs = theorem_bound_rhs(&p).unwrap();
        let mut cfg = OptimizerConfig::sgdm(
            1.0,
            [
                ("layer0", betas[0]),
                ("layer1", betas[1]),
                ("layer2", betas[2]),
            ],
        );
        for l in 0..3 {
            cfg.lr_multipliers
                .insert(q.block_name(l), max_step_size(&p, l).unwrap());
        }
        let sched = LrSchedule::constant(horizon, 1.0).unwrap();
        let trace = run_training_with(&q, &cfg, &sched, horizon, seed, &FULL).unwrap();
        let lhs = trace.mean_full_grad_sq().unwrap();
        assert!(lhs <= rhs, "seed {seed}: {lhs} > {rhs}");
    }
}

#[test]
fn momentum_on_the_noisy_block_alone_helps() {
    let q = three_block_quadratic();
    let eta = 0.5;
    let steps = 1000;
    let sched = LrSchedule::constant(steps, eta).unwrap();
    let mut wins = 0;
    for seed in 0..5 {
        let run = |b: f64| {
            let cfg = OptimizerConfig::sgdm(eta, [("layer0", 0.0), ("layer1", 0.0), ("layer2", b)]);
            run_training_with(&q, &cfg, &sched, steps, seed, &FULL)
                .unwrap()
                .mean_full_grad_sq()
                .unwrap()
        };
        if run(0.9) < run(0.0) {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn bench_median_is_stable_in_repeat_count() {
    let opts = |repeats| BenchOptions {
        dims: vec![256],
        kinds: vec![NormKind::ColumnWise],
        repeats,
        budget: Duration::from_secs(20),
        ..BenchOptions::default()
    };
    let a = cmd_bench_norms(&opts(30))
        .unwrap()
        .median(NormKind::ColumnWise, 256)
        .unwrap();
    let b = cmd_bench_norms(&opts(300))
        .unwrap()
        .median(NormKind::ColumnWise, 256)
        .unwrap();
    assert!((a - b).abs() <= 0.25 * a.max(b), "{a} vs {b}");
}
