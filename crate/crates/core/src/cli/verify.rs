use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    ema_variance_law, memory_estimate, simulate_ema_variance, MemoryMethod, ModelShape,
};
use crate::error::Result;
use crate::matrix::{svd_exact, Matrix};
use crate::normalize::{dual_norm, lmo_optimality_check, normalize, NormKind, NsConfig};
use crate::problems::{finite_diff_check, MlpConfig, MlpModel, NoisyQuadratic, Problem, QuadLayer};
use crate::rng::Rng;

/// Overrides for the verification run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub ns: NsConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            let verdict = if s.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{:<16} {verdict}  {}", s.name, s.detail)?;
        }
        Ok(())
    }
}

fn random_shape(rng: &mut Rng) -> (usize, usize) {
    (2 + rng.below(7), 2 + rng.below(7))
}

fn lmo_suite(rng: &mut Rng) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for kind in NormKind::EXACT {
        for _ in 0..25 {
            let (r, c) = random_shape(rng);
            let g = Matrix::random_normal(r, c, 1.0, rng);
            if !lmo_optimality_check(kind, &g, 400, rng)? {
                failures.push(format!("{kind} {r}x{c}"));
            }
        }
    }
    Ok(SuiteResult {
        name: "lmo_optimality",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "4 kinds x 25 matrices x 400 directions".into()
        } else {
            format!("beaten on {}", failures.join(", "))
        },
    })
}

fn duality_suite(ns: &NsConfig, rng: &mut Rng) -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for kind in NormKind::EXACT {
        for _ in 0..50 {
            let (r, c) = random_shape(rng);
            let g = Matrix::random_normal(r, c, 1.0, rng);
            let d = normalize(kind, &g, ns)?;
            worst = worst.max((g.inner(&d)? - dual_norm(kind, &g)?).abs());
        }
    }
    Ok(SuiteResult {
        name: "duality",
        passed: worst <= 1e-9,
        detail: format!("max |<g, d> - dual norm| = {worst:.2e}"),
    })
}

fn orthogonality_suite(ns: &NsConfig, rng: &mut Rng) -> Result<SuiteResult> {
    let mut exact_err = 0.0f64;
    for n in [4, 8, 16, 32] {
        let g = Matrix::random_normal(n, n, 1.0, rng);
        let d = normalize(NormKind::SingularValue, &g, ns)?;
        let gram = d.t_matmul(&d)?;
        exact_err = exact_err.max(gram.sub(&Matrix::identity(n))?.frobenius_norm());
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (r, c) in [(16, 32), (32, 16), (24, 40), (40, 24), (48, 96)] {
        let g = Matrix::random_normal(r, c, 1.0, rng);
        let d = normalize(NormKind::SingularValueNS, &g, ns)?;
        for s in svd_exact(&d)?.sigma {
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    let passed = exact_err <= 1e-8 && lo >= 0.3 && hi <= 1.5;
    Ok(SuiteResult {
        name: "orthogonality",
        passed,
        detail: format!(
            "exact ||D^T D - I|| = {exact_err:.2e}; NS singular values in [{lo:.3}, {hi:.3}]"
        ),
    })
}

fn gradient_suite(rng: &mut Rng) -> Result<SuiteResult> {
    let q = NoisyQuadratic::new(vec![
        QuadLayer::new(3, 4, 1.5, 0.0),
        QuadLayer::new(4, 2, 0.5, 0.0),
    ])?;
    let p = q.init_params(rng);
    let batch = q.sample_batch(8, rng);
    let quad = finite_diff_check(&q, &p, &batch, 1e-9)?;

    let m = MlpModel::new(MlpConfig {
        input_dim: 6,
        hidden: vec![8, 8],
        classes: 10,
        samples: 64,
        ..MlpConfig::default()
    })?;
    let mut mlp_err = 0.0f64;
    for _ in 0..3 {
        let p = m.init_params(rng);
        let batch = m.sample_batch(16, rng);
        mlp_err = mlp_err.max(finite_diff_check(&m, &p, &batch, 1e-5)?.max_error());
    }
    Ok(SuiteResult {
        name: "gradient_check",
        passed: quad.passed() && mlp_err <= 1e-5,
        detail: format!("quadratic {:.2e}, mlp {mlp_err:.2e}", quad.max_error()),
    })
}

fn ema_suite(rng: &mut Rng) -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for beta in [0.5, 0.9, 0.99] {
        let est = simulate_ema_variance(beta, 1.0, 1.0, 200, 20_000, rng)?;
        let law = ema_variance_law(beta, 1.0, 200)?;
        worst = worst.max((est.mean - law).abs() / est.std_err);
    }
    Ok(SuiteResult {
        name: "ema_law",
        passed: worst <= 3.0,
        detail: format!("largest deviation {worst:.2} standard errors"),
    })
}

fn memory_suite() -> Result<SuiteResult> {
    use MemoryMethod::*;
    let s7 = ModelShape::bundled("llama_7b")?;
    let s1 = ModelShape::bundled("llama_1b")?;
    let expect = [
        (Sgd, 13.476, 2.678),
        (Adam, 40.428, 8.034),
        (Muon, 26.952, 5.356),
        (Swan, 14.524, 3.202),
        (Scale, 13.738, 2.809),
    ];
    let mut worst = 0.0f64;
    for (m, g7, g1) in expect {
        worst = worst.max((memory_estimate(m, &s7)? as f64 / 1e9 - g7).abs());
        worst = worst.max((memory_estimate(m, &s1)? as f64 / 1e9 - g1).abs());
    }
    Ok(SuiteResult {
        name: "memory_table",
        passed: worst <= 0.01,
        detail: format!("max deviation {worst:.4} GB"),
    })
}

/// Runs every property suite; `config` may override the Newton-Schulz
/// coefficients used for the orthogonalization checks.
pub fn cmd_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    config.ns.validate()?;
    let mut rng = Rng::new(config.seed);
    let suites = vec![
        lmo_suite(&mut rng)?,
        duality_suite(&config.ns, &mut rng)?,
        orthogonality_suite(&config.ns, &mut rng)?,
        gradient_suite(&mut rng)?,
        ema_suite(&mut rng)?,
        memory_suite()?,
    ];
    Ok(VerifyReport { suites })
}
