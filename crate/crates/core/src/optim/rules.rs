use super::{output_head_index, BlockState, OptState, OptimizerConfig, ParamBlock, Role};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::normalize::{normalize, sign0, NormKind};

/// `θ_l ← θ_l − η_l g_l`.
pub fn sgd_step(
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    for (b, g) in blocks.iter_mut().zip(grads) {
        let eta = cfg.block_lr(b, lr);
        b.value.axpy(-eta, g)?;
    }
    Ok(())
}

/// `θ_l ← θ_l − η_l sign(g_l)`, with `sign(0) = 0`.
pub fn sign_sgd_step(
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    for (b, g) in blocks.iter_mut().zip(grads) {
        let eta = cfg.block_lr(b, lr);
        b.value.axpy(-eta, &g.map(sign0))?;
    }
    Ok(())
}

/// Adam on every block. `state.t` must already count the current step.
pub fn adam_step(
    state: &mut OptState,
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    let t = state.t;
    for ((b, g), s) in blocks.iter_mut().zip(grads).zip(state.blocks.iter_mut()) {
        let eta = cfg.block_lr(b, lr);
        adam_block(s, &mut b.value, g, cfg, t, eta, &b.name)?;
    }
    Ok(())
}

fn adam_block(
    state: &mut BlockState,
    theta: &mut Matrix,
    g: &Matrix,
    cfg: &OptimizerConfig,
    t: u64,
    eta: f64,
    name: &str,
) -> Result<()> {
    let BlockState::AdamMoments { m, v } = state else {
        return Err(Error::Config(format!("block `{name}` has no Adam moments")));
    };
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let (c1, c2) = if cfg.bias_correction {
        let t = t.min(i32::MAX as u64) as i32;
        (1.0 - b1.powi(t), 1.0 - b2.powi(t))
    } else {
        (1.0, 1.0)
    };
    let m = m.data_mut();
    let v = v.data_mut();
    for (((th, gi), mi), vi) in theta.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        let mhat = *mi / c1;
        let vhat = *vi / c2;
        *th -= eta * mhat / (vhat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Layer-wise SGD with momentum: `m_l ← β_l m_l + (1−β_l) g_l`, `θ_l ← θ_l − η_l m_l`.
/// Blocks with `β_l = 0` keep no state and step along `g_l` directly.
pub fn sgdm_step(
    state: &mut OptState,
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    for ((b, g), s) in blocks.iter_mut().zip(grads).zip(state.blocks.iter_mut()) {
        let beta = *cfg
            .beta_per_layer
            .get(&b.name)
            .ok_or_else(|| Error::MissingBeta(b.name.clone()))?;
        let eta = cfg.block_lr(b, lr);
        match s {
            BlockState::FirstMoment { m } => {
                m.scale_add(beta, 1.0 - beta, g)?;
                b.value.axpy(-eta, m)?;
            }
            BlockState::None if beta == 0.0 => b.value.axpy(-eta, g)?,
            _ => {
                return Err(Error::Config(format!(
                    "state layout of `{}` does not match beta {beta}",
                    b.name
                )))
            }
        }
    }
    Ok(())
}

/// Steepest descent under `kind`: `θ_l ← θ_l − η_l · normalize(kind, g_l)`.
pub fn normalized_sgd_step(
    state: &mut OptState,
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    kind: NormKind,
    lr: f64,
) -> Result<()> {
    let t = state.t;
    for ((b, g), s) in blocks.iter_mut().zip(grads).zip(state.blocks.iter_mut()) {
        let eta = cfg.block_lr(b, lr);
        if cfg.adam_on_vectors(b) {
            adam_block(s, &mut b.value, g, cfg, t, eta, &b.name)?;
        } else {
            b.value.axpy(-eta, &normalize(kind, g, &cfg.ns)?)?;
        }
    }
    Ok(())
}

/// SCALE: column-wise normalized SGD with momentum kept only on the output head.
pub fn scale_step(
    state: &mut OptState,
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    beta: f64,
    lr: f64,
) -> Result<()> {
    last_layer_momentum_step(state, blocks, grads, cfg, NormKind::ColumnWise, beta, lr)
}

/// SCALE with the column-wise rule swapped for Newton-Schulz orthogonalization.
pub fn svd_last_momentum_step(
    state: &mut OptState,
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    beta: f64,
    lr: f64,
) -> Result<()> {
    last_layer_momentum_step(
        state,
        blocks,
        grads,
        cfg,
        NormKind::SingularValueNS,
        beta,
        lr,
    )
}

fn last_layer_momentum_step(
    state: &mut OptState,
    blocks: &mut [ParamBlock],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    kind: NormKind,
    beta: f64,
    lr: f64,
) -> Result<()> {
    output_head_index(blocks.iter().map(|b| &b.role))?;
    let t = state.t;
    for ((b, g), s) in blocks.iter_mut().zip(grads).zip(state.blocks.iter_mut()) {
        let eta = cfg.block_lr(b, lr);
        if cfg.adam_on_vectors(b) {
            adam_block(s, &mut b.value, g, cfg, t, eta, &b.name)?;
            continue;
        }
        let direction = if b.role == Role::OutputHead {
            let BlockState::FirstMoment { m } = s else {
                return Err(Error::Config("output head has no momentum buffer".into()));
            };
            m.scale_add(beta, 1.0 - beta, g)?;
            normalize(kind, m, &cfg.ns)?
        } else {
            normalize(kind, g, &cfg.ns)?
        };
        b.value.axpy(-eta, &direction)?;
    }
    Ok(())
}
