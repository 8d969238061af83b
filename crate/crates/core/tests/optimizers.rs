use scale_opt::normalize::{normalize, NormKind, NsConfig};
use scale_opt::optim::VectorRule;
use scale_opt::problems::{run_training, MlpConfig, MlpModel, NoisyQuadratic, Problem, QuadLayer};
use scale_opt::{LrSchedule, Matrix, Method, Optimizer, OptimizerConfig, ParamBlock, Rng, Role};

fn quadratic() -> NoisyQuadratic {
    NoisyQuadratic::new(vec![
        QuadLayer::new(4, 6, 1.0, 0.5),
        QuadLayer::new(6, 6, 2.0, 0.5),
        QuadLayer::new(6, 3, 0.5, 3.0),
    ])
    .unwrap()
}

fn small_mlp() -> MlpModel {
    MlpModel::new(MlpConfig {
        input_dim: 8,
        hidden: vec![12, 10],
        classes: 20,
        batch: 16,
        samples: 200,
        ..MlpConfig::default()
    })
    .unwrap()
}

fn same_trajectory<P: Problem>(p: &P, a: &OptimizerConfig, b: &OptimizerConfig, steps: u64) {
    let sched = LrSchedule::new(steps, a.peak_lr).unwrap();
    let ta = run_training(p, a, &sched, steps, 11).unwrap();
    let tb = run_training(p, b, &sched, steps, 11).unwrap();
    assert_eq!(ta.to_csv_string().unwrap(), tb.to_csv_string().unwrap());
    assert_eq!(ta.params_digest, tb.params_digest);
}

#[test]
fn sgdm_without_momentum_is_sgd() {
    let q = quadratic();
    let zero = OptimizerConfig::sgdm(0.1, [("layer0", 0.0), ("layer1", 0.0), ("layer2", 0.0)]);
    same_trajectory(&q, &zero, &OptimizerConfig::sgd(0.1), 100);

    let m = small_mlp();
    let names: Vec<String> = m
        .init_params(&mut Rng::new(0))
        .into_iter()
        .map(|b| b.name)
        .collect();
    let zero = OptimizerConfig::sgdm(0.5, names.iter().map(|n| (n.as_str(), 0.0)));
    same_trajectory(&m, &zero, &OptimizerConfig::sgd(0.5), 100);
}

#[test]
fn scale_without_momentum_is_column_normalized_sgd() {
    let q = quadratic();
    let col = OptimizerConfig::normalized(NormKind::ColumnWise, 0.05);
    same_trajectory(
        &q,
        &OptimizerConfig::scale(0.05).with_last_beta(0.0),
        &col,
        100,
    );
    same_trajectory(
        &small_mlp(),
        &OptimizerConfig::scale(0.05).with_last_beta(0.0),
        &col,
        100,
    );
}

#[test]
fn svd_last_momentum_without_momentum_is_ns_normalized_sgd() {
    let q = quadratic();
    let svd = OptimizerConfig::new(Method::SvdLastMomentum, 0.05).with_last_beta(0.0);
    same_trajectory(
        &q,
        &svd,
        &OptimizerConfig::normalized(NormKind::SingularValueNS, 0.05),
        100,
    );
}

/// Independent last-layer-momentum loop with a pluggable normalizer.
fn reference_last_layer(
    q: &NoisyQuadratic,
    kind: NormKind,
    beta: f64,
    lr: f64,
    steps: usize,
) -> Vec<Matrix> {
    let mut params = q.init_params(&mut Rng::new(5));
    let mut rng = Rng::new(6);
    let head = params.len() - 1;
    let mut m = Matrix::zeros(params[head].value.rows(), params[head].value.cols());
    for _ in 0..steps {
        let grads = q.quadratic_grad(&params, &mut rng, 1.0).unwrap();
        for (l, g) in grads.iter().enumerate() {
            let dir = if l == head {
                m.scale_add(beta, 1.0 - beta, g).unwrap();
                normalize(kind, &m, &NsConfig::default()).unwrap()
            } else {
                normalize(kind, g, &NsConfig::default()).unwrap()
            };
            params[l].value.axpy(-lr, &dir).unwrap();
        }
    }
    params.into_iter().map(|p| p.value).collect()
}

fn library_last_layer(
    q: &NoisyQuadratic,
    method: Method,
    beta: f64,
    lr: f64,
    steps: usize,
) -> Vec<Matrix> {
    let mut params = q.init_params(&mut Rng::new(5));
    let mut rng = Rng::new(6);
    let mut opt = Optimizer::new(
        OptimizerConfig::new(method, lr).with_last_beta(beta),
        &params,
    )
    .unwrap();
    for _ in 0..steps {
        let grads = q.quadratic_grad(&params, &mut rng, 1.0).unwrap();
        opt.step(&mut params, &grads, lr).unwrap();
    }
    params.into_iter().map(|p| p.value).collect()
}

#[test]
fn scale_and_svd_variant_differ_only_in_normalizer() {
    let q = quadratic();
    for (method, kind) in [
        (Method::Scale, NormKind::ColumnWise),
        (Method::SvdLastMomentum, NormKind::SingularValueNS),
    ] {
        let lib = library_last_layer(&q, method, 0.9, 0.02, 100);
        let reference = reference_last_layer(&q, kind, 0.9, 0.02, 100);
        for (a, b) in lib.iter().zip(&reference) {
            assert_eq!(a, b, "{method:?}");
        }
    }
    let swapped = reference_last_layer(&q, NormKind::SingularValueNS, 0.9, 0.02, 100);
    let scale = library_last_layer(&q, Method::Scale, 0.9, 0.02, 100);
    assert_ne!(swapped, scale);
}

fn one_update(cfg: &OptimizerConfig, params: &[ParamBlock], grads: &[Matrix]) -> Vec<Matrix> {
    let mut after = params.to_vec();
    let mut opt = Optimizer::new(cfg.clone(), params).unwrap();
    opt.step(&mut after, grads, cfg.peak_lr).unwrap();
    after
        .iter()
        .zip(params)
        .map(|(a, b)| a.value.sub(&b.value).unwrap())
        .collect()
}

#[test]
fn updates_ignore_gradient_scale() {
    let q = quadratic();
    let params = q.init_params(&mut Rng::new(1));
    let grads = q.quadratic_grad(&params, &mut Rng::new(2), 1.0).unwrap();
    let mut configs: Vec<OptimizerConfig> = NormKind::EXACT
        .iter()
        .map(|&k| OptimizerConfig::normalized(k, 0.1))
        .collect();
    configs.push(OptimizerConfig::scale(0.1));
    for cfg in &configs {
        let base = one_update(cfg, &params, &grads);
        for c in [1e-3, 0.37, 42.0] {
            let scaled: Vec<Matrix> = grads.iter().map(|g| g.scaled(c)).collect();
            for (a, b) in base.iter().zip(one_update(cfg, &params, &scaled)) {
                assert!(
                    a.max_abs_diff(&b).unwrap() <= 1e-12,
                    "{} c={c}",
                    cfg.method.label()
                );
            }
        }
    }
}

#[test]
fn scale_column_norms_and_state_over_a_run() {
    let m = small_mlp();
    let mut params = m.init_params(&mut Rng::new(3));
    let cfg = OptimizerConfig::scale(0.02);
    let mut opt = Optimizer::new(cfg.clone(), &params).unwrap();
    let mut rng = Rng::new(4);
    for _ in 0..30 {
        let batch = m.sample_batch(16, &mut rng);
        let (_, grads) = m.loss_grad(&params, &batch).unwrap();
        let before = params.clone();
        opt.step(&mut params, &grads, 0.02).unwrap();
        for (a, b) in params.iter().zip(&before) {
            if !a.role.is_matrix() {
                continue;
            }
            for n in a.value.sub(&b.value).unwrap().column_norms() {
                assert!(
                    n.abs() <= 1e-9 || (n - 0.02).abs() <= 1e-9,
                    "{}: {n}",
                    a.name
                );
            }
        }
    }
    let stateful: Vec<&str> = opt
        .state()
        .stateful_blocks()
        .into_iter()
        .map(|i| params[i].name.as_str())
        .collect();
    assert_eq!(
        stateful,
        ["input_bias", "hidden1_bias", "head", "head_bias"]
    );

    let plain = Optimizer::new(cfg.with_vector_rule(VectorRule::SameAsMatrices), &params).unwrap();
    let only: Vec<Role> = plain
        .state()
        .stateful_blocks()
        .into_iter()
        .map(|i| params[i].role)
        .collect();
    assert_eq!(only, [Role::OutputHead]);
}

#[test]
fn scale_matches_column_sgd_under_constant_gradients() {
    let blocks = vec![
        ParamBlock::new(
            "hidden",
            Role::Hidden,
            Matrix::random_normal(3, 4, 1.0, &mut Rng::new(1)),
        ),
        ParamBlock::new(
            "head",
            Role::OutputHead,
            Matrix::random_normal(4, 2, 1.0, &mut Rng::new(2)),
        ),
    ];
    let grads = vec![
        Matrix::random_normal(3, 4, 1.0, &mut Rng::new(3)),
        Matrix::random_normal(4, 2, 1.0, &mut Rng::new(4)),
    ];
    let mut a = blocks.clone();
    let mut b = blocks.clone();
    let mut scale = Optimizer::new(OptimizerConfig::scale(0.01), &a).unwrap();
    let mut col =
        Optimizer::new(OptimizerConfig::normalized(NormKind::ColumnWise, 0.01), &b).unwrap();
    for _ in 0..50 {
        scale.step(&mut a, &grads, 0.01).unwrap();
        col.step(&mut b, &grads, 0.01).unwrap();
    }
    for (x, y) in a.iter().zip(&b) {
        assert!(x.value.max_abs_diff(&y.value).unwrap() <= 1e-12);
    }
}

#[test]
fn scale_needs_exactly_one_head() {
    let two = vec![
        ParamBlock::new("a", Role::OutputHead, Matrix::zeros(2, 2)),
        ParamBlock::new("b", Role::OutputHead, Matrix::zeros(2, 2)),
    ];
    assert!(Optimizer::new(OptimizerConfig::scale(0.1), &two).is_err());
    let none = vec![ParamBlock::new("a", Role::Hidden, Matrix::zeros(2, 2))];
    assert!(Optimizer::new(OptimizerConfig::scale(0.1), &none).is_err());
    assert!(Optimizer::new(OptimizerConfig::new(Method::SvdLastMomentum, 0.1), &none).is_err());
}
