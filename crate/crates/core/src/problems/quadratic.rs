//! Layered noisy quadratic `ℓ(θ) = Σ_l (γ_l/2)‖θ_l‖²_F` with additive
//! Gaussian gradient noise of known per-block variance.
//!
//! At the nominal batch size the noise on block `l` has `E‖ξ_l‖² = σ_l²`
//! (per-entry variance `σ_l² / entries`); a batch of size `B` scales that by
//! `nominal_batch / B`. The sampled loss `Σ (γ_l/2)‖θ_l‖² + <ξ_l, θ_l>` is
//! consistent with the sampled gradient, so finite differences agree on any
//! fixed draw.

use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{ParamBlock, Role};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadLayer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Defaults to `OutputHead` for the last layer and `Hidden` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub rows: usize,
    pub cols: usize,
    pub curvature: f64,
    pub noise_sigma: f64,
}

impl QuadLayer {
    pub fn new(rows: usize, cols: usize, curvature: f64, noise_sigma: f64) -> Self {
        Self {
            name: None,
            role: None,
            rows,
            cols,
            curvature,
            noise_sigma,
        }
    }
}

fn default_nominal_batch() -> usize {
    32
}
fn default_init_std() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyQuadratic {
    pub layers: Vec<QuadLayer>,
    /// Batch size at which block noise has squared norm `σ_l²` in expectation.
    #[serde(default = "default_nominal_batch")]
    pub nominal_batch: usize,
    /// Entries of the initial point are `N(0, init_std²)`.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadBatch {
    pub size: usize,
    pub noise: Vec<Matrix>,
}

impl NoisyQuadratic {
    pub fn new(layers: Vec<QuadLayer>) -> Result<Self> {
        let q = Self {
            layers,
            nominal_batch: default_nominal_batch(),
            init_std: default_init_std(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("quadratic needs at least one layer".into()));
        }
        if self.nominal_batch == 0 {
            return Err(Error::Config("nominal_batch must be positive".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 {
                return Err(Error::Config(format!("layer {i} has an empty shape")));
            }
            if !(l.curvature > 0.0 && l.curvature.is_finite()) {
                return Err(Error::Config(format!(
                    "layer {i} curvature must be positive"
                )));
            }
            if !(l.noise_sigma >= 0.0 && l.noise_sigma.is_finite()) {
                return Err(Error::Config(format!("layer {i} noise_sigma must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn block_name(&self, i: usize) -> String {
        self.layers[i]
            .name
            .clone()
            .unwrap_or_else(|| format!("layer{i}"))
    }

    pub fn block_role(&self, i: usize) -> Role {
        self.layers[i]
            .role
            .unwrap_or(if i + 1 == self.layers.len() {
                Role::OutputHead
            } else {
                Role::Hidden
            })
    }

    /// Global smoothness constant `γ = max_l γ_l`.
    pub fn smoothness(&self) -> f64 {
        self.layers.iter().map(|l| l.curvature).fold(0.0, f64::max)
    }

    /// Blocks holding `values` with this problem's names and roles.
    pub fn blocks_from(&self, values: Vec<Matrix>) -> Vec<ParamBlock> {
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| ParamBlock::new(self.block_name(i), self.block_role(i), v))
            .collect()
    }

    fn draw_noise(&self, variance_scale: f64, rng: &mut Rng) -> Vec<Matrix> {
        self.layers
            .iter()
            .map(|l| {
                let entries = (l.rows * l.cols) as f64;
                let std = l.noise_sigma * (variance_scale / entries).sqrt();
                if std == 0.0 {
                    Matrix::zeros(l.rows, l.cols)
                } else {
                    Matrix::random_normal(l.rows, l.cols, std, rng)
                }
            })
            .collect()
    }

    /// `γ_l θ_l + ξ_l` with `E‖ξ_l‖² = batch_variance_scale · σ_l²`.
    pub fn quadratic_grad(
        &self,
        params: &[ParamBlock],
        rng: &mut Rng,
        batch_variance_scale: f64,
    ) -> Result<Vec<Matrix>> {
        let noise = self.draw_noise(batch_variance_scale, rng);
        let mut grads = self.exact_grads(params)?;
        for (g, n) in grads.iter_mut().zip(&noise) {
            g.axpy(1.0, n)?;
        }
        Ok(grads)
    }

    fn exact_grads(&self, params: &[ParamBlock]) -> Result<Vec<Matrix>> {
        self.check(params)?;
        Ok(params
            .iter()
            .zip(&self.layers)
            .map(|(p, l)| p.value.scaled(l.curvature))
            .collect())
    }

    fn check(&self, params: &[ParamBlock]) -> Result<()> {
        if params.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} parameter blocks for {} layers",
                params.len(),
                self.layers.len()
            )));
        }
        for (p, l) in params.iter().zip(&self.layers) {
            if p.value.shape() != (l.rows, l.cols) {
                return Err(Error::ShapeMismatch {
                    op: "quadratic",
                    left: p.value.shape(),
                    right: (l.rows, l.cols),
                });
            }
        }
        Ok(())
    }

    fn deterministic_loss(&self, params: &[ParamBlock]) -> f64 {
        params
            .iter()
            .zip(&self.layers)
            .map(|(p, l)| 0.5 * l.curvature * p.value.frobenius_norm_sq())
            .sum()
    }
}

impl Problem for NoisyQuadratic {
    type Batch = QuadBatch;

    fn init_params(&self, rng: &mut Rng) -> Vec<ParamBlock> {
        let values = self
            .layers
            .iter()
            .map(|l| Matrix::random_normal(l.rows, l.cols, self.init_std, rng))
            .collect();
        self.blocks_from(values)
    }

    fn train_batch_size(&self) -> usize {
        self.nominal_batch
    }

    fn sample_batch(&self, size: usize, rng: &mut Rng) -> QuadBatch {
        let size = size.max(1);
        QuadBatch {
            size,
            noise: self.draw_noise(self.nominal_batch as f64 / size as f64, rng),
        }
    }

    fn extend_batch(&self, batch: &QuadBatch, size: usize, rng: &mut Rng) -> QuadBatch {
        if size <= batch.size {
            return batch.clone();
        }
        // Mean of the `extra` new samples, then the size-weighted average.
        let extra = size - batch.size;
        let fresh = self.draw_noise(self.nominal_batch as f64 / extra as f64, rng);
        let w_old = batch.size as f64 / size as f64;
        let w_new = extra as f64 / size as f64;
        let noise = batch
            .noise
            .iter()
            .zip(&fresh)
            .map(|(old, new)| {
                let mut n = old.scaled(w_old);
                n.axpy(w_new, new).expect("same layer shapes");
                n
            })
            .collect();
        QuadBatch { size, noise }
    }

    fn loss_grad(&self, params: &[ParamBlock], batch: &QuadBatch) -> Result<(f64, Vec<Matrix>)> {
        let mut grads = self.exact_grads(params)?;
        let mut loss = self.deterministic_loss(params);
        for ((g, n), p) in grads.iter_mut().zip(&batch.noise).zip(params) {
            g.axpy(1.0, n)?;
            loss += n.inner(&p.value)?;
        }
        Ok((loss, grads))
    }

    fn full_loss_grad(&self, params: &[ParamBlock]) -> Result<(f64, Vec<Matrix>)> {
        let grads = self.exact_grads(params)?;
        Ok((self.deterministic_loss(params), grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_block() -> NoisyQuadratic {
        NoisyQuadratic::new(vec![
            QuadLayer::new(2, 3, 1.0, 1.0),
            QuadLayer::new(3, 3, 2.0, 0.5),
            QuadLayer::new(3, 2, 0.5, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn noiseless_gradient_is_closed_form() {
        let q = NoisyQuadratic::new(vec![QuadLayer::new(3, 3, 2.0, 0.0)]).unwrap();
        let params = q.blocks_from(vec![Matrix::identity(3)]);
        let mut rng = Rng::new(1);
        let g = q.quadratic_grad(&params, &mut rng, 1.0).unwrap();
        assert_eq!(g[0], Matrix::diag(&[2.0, 2.0, 2.0]));
    }

    #[test]
    fn default_roles_and_names() {
        let q = three_block();
        let p = q.init_params(&mut Rng::new(0));
        assert_eq!(p[0].name, "layer0");
        assert_eq!(p[2].role, Role::OutputHead);
        assert_eq!(p[1].role, Role::Hidden);
        assert_eq!(q.smoothness(), 2.0);
    }

    #[test]
    fn noise_is_unbiased_and_calibrated() {
        // Monte-Carlo oracle: per-block mean within 4 standard errors of zero
        // and mean squared norm within 3 standard errors of sigma^2.
        let q = three_block();
        let zero = q.blocks_from(
            q.layers
                .iter()
                .map(|l| Matrix::zeros(l.rows, l.cols))
                .collect(),
        );
        let mut rng = Rng::new(77);
        let draws = 100_000;
        let nb = q.layers.len();
        let mut sum: Vec<Matrix> = zero.iter().map(|p| p.value.clone()).collect();
        let mut sq = vec![0.0; nb];
        let mut sq2 = vec![0.0; nb];
        for _ in 0..draws {
            let g = q.quadratic_grad(&zero, &mut rng, 1.0).unwrap();
            for l in 0..nb {
                sum[l].axpy(1.0, &g[l]).unwrap();
                let s = g[l].frobenius_norm_sq();
                sq[l] += s;
                sq2[l] += s * s;
            }
        }
        let n = draws as f64;
        for (l, layer) in q.layers.iter().enumerate() {
            let entries = (layer.rows * layer.cols) as f64;
            let entry_se = layer.noise_sigma / entries.sqrt() / n.sqrt();
            for &x in sum[l].data() {
                assert!((x / n).abs() <= 4.0 * entry_se, "mean {}", x / n);
            }
            let mean = sq[l] / n;
            let se = ((sq2[l] / n - mean * mean) / n).sqrt();
            let target = layer.noise_sigma.powi(2);
            assert!(
                (mean - target).abs() <= 3.0 * se,
                "layer {l}: {mean} vs {target}"
            );
        }
    }

    #[test]
    fn nested_batches_have_the_expected_gap() {
        // E‖g_small - g_large‖² = (1 - B_s/B_l) σ² for nested batches.
        let q = three_block();
        let params = q.init_params(&mut Rng::new(3));
        let mut rng = Rng::new(4);
        let draws = 20_000;
        let mut acc = vec![0.0; 3];
        let mut acc2 = vec![0.0; 3];
        for _ in 0..draws {
            let small = q.sample_batch(32, &mut rng);
            let large = q.extend_batch(&small, 512, &mut rng);
            let (_, gs) = q.loss_grad(&params, &small).unwrap();
            let (_, gl) = q.loss_grad(&params, &large).unwrap();
            for l in 0..3 {
                let d = gs[l].sub(&gl[l]).unwrap().frobenius_norm_sq();
                acc[l] += d;
                acc2[l] += d * d;
            }
        }
        let n = draws as f64;
        for (l, layer) in q.layers.iter().enumerate() {
            let mean = acc[l] / n;
            let se = ((acc2[l] / n - mean * mean) / n).sqrt();
            let target = (1.0 - 32.0 / 512.0) * layer.noise_sigma.powi(2);
            assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target}");
        }
    }

    #[test]
    fn validation_errors() {
        assert!(NoisyQuadratic::new(vec![]).is_err());
        assert!(NoisyQuadratic::new(vec![QuadLayer::new(2, 2, 0.0, 1.0)]).is_err());
        assert!(NoisyQuadratic::new(vec![QuadLayer::new(2, 2, 1.0, -1.0)]).is_err());
        let q = three_block();
        let wrong = vec![ParamBlock::new("x", Role::Hidden, Matrix::zeros(1, 1))];
        assert!(q.full_loss_grad(&wrong).is_err());
    }
}
