//! Optimizer step rules.
//!
//! Every rule consumes one mini-batch gradient per parameter block and
//! updates the blocks in place. The family covers plain SGD, Adam, sign-SGD,
//! layer-wise SGD with momentum, steepest descent under a chosen matrix norm,
//! and the two last-layer-momentum variants: SCALE (column-wise
//! normalization) and its singular-value counterpart.

mod accounting;
mod rules;
mod schedule;

pub use accounting::{state_bytes, BlockFootprint, BYTES_PER_SCALAR};
pub use rules::{
    adam_step, normalized_sgd_step, scale_step, sgd_step, sgdm_step, sign_sgd_step,
    svd_last_momentum_step,
};
pub use schedule::LrSchedule;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::normalize::{NormKind, NsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Embedding,
    Hidden,
    OutputHead,
    /// Biases and other 1-D parameters, stored as `1 x k`.
    Vector,
}

impl Role {
    pub fn is_matrix(self) -> bool {
        self != Role::Vector
    }
}

/// A named trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub role: Role,
    pub value: Matrix,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, role: Role, value: Matrix) -> Self {
        Self {
            name: name.into(),
            role,
            value,
        }
    }

    pub fn footprint(&self) -> BlockFootprint {
        BlockFootprint {
            name: self.name.clone(),
            role: self.role,
            params: self.value.len() as u64,
        }
    }
}

/// Names must be unique.
pub fn validate_blocks(blocks: &[ParamBlock]) -> Result<()> {
    let mut seen = HashSet::new();
    for b in blocks {
        if !seen.insert(b.name.as_str()) {
            return Err(Error::Config(format!("duplicate block name `{}`", b.name)));
        }
        if b.role == Role::Vector && b.value.rows() != 1 {
            return Err(Error::Config(format!(
                "vector block `{}` must be 1 x k, got {:?}",
                b.name,
                b.value.shape()
            )));
        }
    }
    Ok(())
}

/// Index of the unique `OutputHead` block.
pub fn output_head_index<'a, I>(roles: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a Role>,
{
    let heads: Vec<usize> = roles
        .into_iter()
        .enumerate()
        .filter(|(_, r)| **r == Role::OutputHead)
        .map(|(i, _)| i)
        .collect();
    match heads.as_slice() {
        [one] => Ok(*one),
        [] => Err(Error::Config("no OutputHead block".into())),
        _ => Err(Error::Config(format!(
            "{} OutputHead blocks, expected one",
            heads.len()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", try_from = "MethodSpec")]
pub enum Method {
    Sgd,
    Adam,
    SignSgd,
    #[serde(rename = "sgd_m")]
    SgdM,
    NormalizedSgd {
        norm: NormKind,
    },
    SvdLastMomentum,
    Scale,
}

/// Flat wire form of [`Method`]. Internally tagged unit variants would
/// silently accept extra keys, so parsing goes through this instead.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodSpec {
    name: String,
    #[serde(default)]
    norm: Option<NormKind>,
}

impl TryFrom<MethodSpec> for Method {
    type Error = String;

    fn try_from(s: MethodSpec) -> std::result::Result<Self, String> {
        let m = match s.name.as_str() {
            "sgd" => Method::Sgd,
            "adam" => Method::Adam,
            "sign_sgd" => Method::SignSgd,
            "sgd_m" => Method::SgdM,
            "svd_last_momentum" => Method::SvdLastMomentum,
            "scale" => Method::Scale,
            "normalized_sgd" => {
                return s
                    .norm
                    .map(|norm| Method::NormalizedSgd { norm })
                    .ok_or_else(|| "normalized_sgd needs `norm`".to_string())
            }
            other => return Err(format!("unknown method `{other}`")),
        };
        match s.norm {
            Some(_) => Err(format!(
                "`norm` is only valid for normalized_sgd, not {}",
                s.name
            )),
            None => Ok(m),
        }
    }
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Sgd => "sgd".into(),
            Method::Adam => "adam".into(),
            Method::SignSgd => "sign_sgd".into(),
            Method::SgdM => "sgd_m".into(),
            Method::NormalizedSgd { norm } => format!("normalized_sgd[{norm}]"),
            Method::SvdLastMomentum => "svd_last_momentum".into(),
            Method::Scale => "scale".into(),
        }
    }

    /// Methods whose matrix updates are LMO directions.
    pub fn is_normalized(&self) -> bool {
        matches!(
            self,
            Method::NormalizedSgd { .. } | Method::SvdLastMomentum | Method::Scale
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorRule {
    /// Vector blocks take Adam steps (with this config's betas and eps).
    #[default]
    AdamForVectors,
    SameAsMatrices,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}
fn default_last_beta() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub peak_lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Adam bias correction; off reproduces the uncorrected recursion.
    #[serde(default = "default_true")]
    pub bias_correction: bool,
    /// Per-block momentum for `SgdM`.
    #[serde(default)]
    pub beta_per_layer: BTreeMap<String, f64>,
    /// Output-head momentum for `Scale` and `SvdLastMomentum`.
    #[serde(default = "default_last_beta")]
    pub last_beta: f64,
    #[serde(default)]
    pub vector_rule: VectorRule,
    /// Multiply matrix-block rates by `sqrt(max(1, rows/cols))` in the
    /// normalized methods.
    #[serde(default)]
    pub lr_scaling: bool,
    /// Per-block rate multipliers (default 1).
    #[serde(default)]
    pub lr_multipliers: BTreeMap<String, f64>,
    #[serde(default)]
    pub ns: NsConfig,
}

impl OptimizerConfig {
    pub fn new(method: Method, peak_lr: f64) -> Self {
        Self {
            method,
            peak_lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            bias_correction: true,
            beta_per_layer: BTreeMap::new(),
            last_beta: default_last_beta(),
            vector_rule: VectorRule::default(),
            lr_scaling: false,
            lr_multipliers: BTreeMap::new(),
            ns: NsConfig::default(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(Method::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(Method::Adam, lr)
    }

    pub fn scale(lr: f64) -> Self {
        Self::new(Method::Scale, lr)
    }

    pub fn normalized(norm: NormKind, lr: f64) -> Self {
        Self::new(Method::NormalizedSgd { norm }, lr)
    }

    pub fn sgdm<'a>(lr: f64, betas: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut c = Self::new(Method::SgdM, lr);
        c.beta_per_layer = betas.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        c
    }

    pub fn with_last_beta(mut self, beta: f64) -> Self {
        self.last_beta = beta;
        self
    }

    pub fn with_vector_rule(mut self, rule: VectorRule) -> Self {
        self.vector_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if (0.0..1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {x}")))
            }
        };
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!(
                "peak_lr must be positive, got {}",
                self.peak_lr
            )));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("last_beta", self.last_beta)?;
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        for (k, &b) in &self.beta_per_layer {
            unit(&format!("beta for `{k}`"), b)?;
        }
        for (k, &m) in &self.lr_multipliers {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!(
                    "lr multiplier for `{k}` must be positive"
                )));
            }
        }
        self.ns.validate()
    }

    /// Effective rate `η_l` for one block given the scheduled `lr`.
    pub fn block_lr(&self, block: &ParamBlock, lr: f64) -> f64 {
        let mut eta = lr * self.lr_multipliers.get(&block.name).copied().unwrap_or(1.0);
        if self.lr_scaling && self.method.is_normalized() && block.role.is_matrix() {
            let (r, c) = block.value.shape();
            eta *= (r as f64 / c as f64).max(1.0).sqrt();
        }
        eta
    }

    fn adam_on_vectors(&self, block: &ParamBlock) -> bool {
        self.method.is_normalized()
            && block.role == Role::Vector
            && self.vector_rule == VectorRule::AdamForVectors
    }
}

/// Per-block persistent state.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockState {
    None,
    FirstMoment { m: Matrix },
    AdamMoments { m: Matrix, v: Matrix },
}

impl BlockState {
    pub fn stored_scalars(&self) -> u64 {
        match self {
            BlockState::None => 0,
            BlockState::FirstMoment { m } => m.len() as u64,
            BlockState::AdamMoments { m, v } => (m.len() + v.len()) as u64,
        }
    }

    pub fn is_stateful(&self) -> bool {
        !matches!(self, BlockState::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub blocks: Vec<BlockState>,
    /// Number of completed steps.
    pub t: u64,
}

impl OptState {
    /// Zero moments laid out for `config.method` over `blocks`.
    pub fn init(config: &OptimizerConfig, blocks: &[ParamBlock]) -> Result<Self> {
        let head = if matches!(config.method, Method::Scale | Method::SvdLastMomentum) {
            Some(output_head_index(blocks.iter().map(|b| &b.role))?)
        } else {
            None
        };
        let zeros = |b: &ParamBlock| Matrix::zeros(b.value.rows(), b.value.cols());
        let mut states = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            let s = match config.method {
                Method::Sgd | Method::SignSgd => BlockState::None,
                Method::Adam => BlockState::AdamMoments {
                    m: zeros(b),
                    v: zeros(b),
                },
                Method::SgdM => {
                    let beta = config
                        .beta_per_layer
                        .get(&b.name)
                        .ok_or_else(|| Error::MissingBeta(b.name.clone()))?;
                    if *beta > 0.0 {
                        BlockState::FirstMoment { m: zeros(b) }
                    } else {
                        BlockState::None
                    }
                }
                Method::NormalizedSgd { .. } | Method::Scale | Method::SvdLastMomentum => {
                    if config.adam_on_vectors(b) {
                        BlockState::AdamMoments {
                            m: zeros(b),
                            v: zeros(b),
                        }
                    } else if head == Some(i) {
                        BlockState::FirstMoment { m: zeros(b) }
                    } else {
                        BlockState::None
                    }
                }
            };
            states.push(s);
        }
        Ok(Self {
            blocks: states,
            t: 0,
        })
    }

    pub fn stored_scalars(&self) -> u64 {
        self.blocks.iter().map(BlockState::stored_scalars).sum()
    }

    /// Indices of blocks holding moment state.
    pub fn stateful_blocks(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_stateful())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-step override of the output-head momentum.
pub type BetaSchedule = Box<dyn Fn(u64) -> f64 + Send + Sync>;

/// A configured optimizer bound to one model's block layout.
pub struct Optimizer {
    config: OptimizerConfig,
    state: OptState,
    beta_schedule: Option<BetaSchedule>,
}

impl std::fmt::Debug for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Optimizer")
            .field("config", &self.config)
            .field("state", &self.state)
            .field("beta_schedule", &self.beta_schedule.is_some())
            .finish()
    }
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, blocks: &[ParamBlock]) -> Result<Self> {
        config.validate()?;
        validate_blocks(blocks)?;
        let state = OptState::init(&config, blocks)?;
        Ok(Self {
            config,
            state,
            beta_schedule: None,
        })
    }

    /// Replaces the constant `last_beta` with `beta(t)` (t is 1-based).
    pub fn with_beta_schedule(mut self, schedule: BetaSchedule) -> Self {
        self.beta_schedule = Some(schedule);
        self
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptState {
        &self.state
    }

    /// Applies one update with scheduled rate `lr`.
    pub fn step(&mut self, blocks: &mut [ParamBlock], grads: &[Matrix], lr: f64) -> Result<()> {
        check_grads(blocks, grads)?;
        if blocks.len() != self.state.blocks.len() {
            return Err(Error::Config(format!(
                "optimizer built for {} blocks, got {}",
                self.state.blocks.len(),
                blocks.len()
            )));
        }
        self.state.t += 1;
        let t = self.state.t;
        let cfg = &self.config;
        let st = &mut self.state;
        match cfg.method {
            Method::Sgd => sgd_step(blocks, grads, cfg, lr),
            Method::SignSgd => sign_sgd_step(blocks, grads, cfg, lr),
            Method::Adam => adam_step(st, blocks, grads, cfg, lr),
            Method::SgdM => sgdm_step(st, blocks, grads, cfg, lr),
            Method::NormalizedSgd { norm } => normalized_sgd_step(st, blocks, grads, cfg, norm, lr),
            Method::Scale | Method::SvdLastMomentum => {
                let beta = self
                    .beta_schedule
                    .as_ref()
                    .map(|f| f(t))
                    .unwrap_or(cfg.last_beta);
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::Config(format!(
                        "scheduled beta {beta} outside [0, 1)"
                    )));
                }
                if cfg.method == Method::Scale {
                    scale_step(st, blocks, grads, cfg, beta, lr)
                } else {
                    svd_last_momentum_step(st, blocks, grads, cfg, beta, lr)
                }
            }
        }
    }
}

pub(crate) fn check_grads(blocks: &[ParamBlock], grads: &[Matrix]) -> Result<()> {
    if blocks.len() != grads.len() {
        return Err(Error::Config(format!(
            "{} gradients for {} blocks",
            grads.len(),
            blocks.len()
        )));
    }
    for (b, g) in blocks.iter().zip(grads) {
        if b.value.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "gradient",
                left: b.value.shape(),
                right: g.shape(),
            });
        }
    }
    Ok(())
}
