use super::{output_head_index, Method, OptimizerConfig, Role, VectorRule};
use crate::error::{Error, Result};

/// BF16 accounting: every stored scalar costs two bytes.
pub const BYTES_PER_SCALAR: u64 = 2;

/// Size of one parameter block without its values, so models far larger
/// than memory can be accounted for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockFootprint {
    pub name: String,
    pub role: Role,
    pub params: u64,
}

impl BlockFootprint {
    pub fn new(name: impl Into<String>, role: Role, params: u64) -> Self {
        Self {
            name: name.into(),
            role,
            params,
        }
    }
}

/// Bytes for weights plus optimizer state under `config`.
///
/// Matches the scalars [`super::OptState::init`] actually allocates.
pub fn state_bytes(config: &OptimizerConfig, blocks: &[BlockFootprint]) -> Result<u64> {
    let params: u64 = blocks.iter().map(|b| b.params).sum();
    let vectors: u64 = blocks
        .iter()
        .filter(|b| b.role == Role::Vector)
        .map(|b| b.params)
        .sum();
    let vector_moments =
        if config.method.is_normalized() && config.vector_rule == VectorRule::AdamForVectors {
            2 * vectors
        } else {
            0
        };
    let moments = match config.method {
        Method::Sgd | Method::SignSgd => 0,
        Method::Adam => 2 * params,
        Method::SgdM => {
            let mut total = 0;
            for b in blocks {
                let beta = config
                    .beta_per_layer
                    .get(&b.name)
                    .ok_or_else(|| Error::MissingBeta(b.name.clone()))?;
                if *beta > 0.0 {
                    total += b.params;
                }
            }
            total
        }
        Method::NormalizedSgd { .. } => vector_moments,
        Method::Scale | Method::SvdLastMomentum => {
            let head = output_head_index(blocks.iter().map(|b| &b.role))?;
            blocks[head].params + vector_moments
        }
    };
    Ok(BYTES_PER_SCALAR * (params + moments))
}

#[cfg(test)]
mod tests {
    use super::super::{OptState, Optimizer, ParamBlock};
    use super::*;
    use crate::matrix::Matrix;
    use crate::normalize::NormKind;

    const GB: f64 = 1e9;

    fn llama7b() -> Vec<BlockFootprint> {
        vec![
            BlockFootprint::new("pre_last", Role::Hidden, 6_607_000_000),
            BlockFootprint::new("lm_head", Role::OutputHead, 131_000_000),
        ]
    }

    #[test]
    fn reported_7b_figures() {
        let shape = llama7b();
        let gb = |c: OptimizerConfig| state_bytes(&c, &shape).unwrap() as f64 / GB;
        assert!((gb(OptimizerConfig::sgd(1.0)) - 13.476).abs() < 1e-9);
        assert!((gb(OptimizerConfig::adam(1.0)) - 40.428).abs() < 1e-9);
        assert!((gb(OptimizerConfig::scale(1.0)) - 13.738).abs() < 1e-9);
    }

    #[test]
    fn sgdm_counts_only_momentum_blocks() {
        let shape = llama7b();
        let c = OptimizerConfig::sgdm(1.0, [("pre_last", 0.0), ("lm_head", 0.9)]);
        assert_eq!(
            state_bytes(&c, &shape).unwrap(),
            2 * (6_738_000_000 + 131_000_000)
        );
        let c = OptimizerConfig::sgdm(1.0, [("pre_last", 0.5), ("lm_head", 0.9)]);
        assert_eq!(state_bytes(&c, &shape).unwrap(), 4 * 6_738_000_000);
        let c = OptimizerConfig::sgdm(1.0, [("pre_last", 0.5)]);
        assert!(state_bytes(&c, &shape).is_err());
    }

    #[test]
    fn agrees_with_allocated_state() {
        let blocks = vec![
            ParamBlock::new("e", Role::Embedding, Matrix::zeros(3, 5)),
            ParamBlock::new("b", Role::Vector, Matrix::zeros(1, 5)),
            ParamBlock::new("h", Role::Hidden, Matrix::zeros(5, 5)),
            ParamBlock::new("head", Role::OutputHead, Matrix::zeros(5, 7)),
        ];
        let fp: Vec<BlockFootprint> = blocks.iter().map(ParamBlock::footprint).collect();
        let params: u64 = fp.iter().map(|b| b.params).sum();
        let configs = vec![
            OptimizerConfig::sgd(0.1),
            OptimizerConfig::adam(0.1),
            OptimizerConfig::scale(0.1),
            OptimizerConfig::scale(0.1).with_vector_rule(VectorRule::SameAsMatrices),
            OptimizerConfig::normalized(NormKind::RowWise, 0.1),
            OptimizerConfig::new(Method::SvdLastMomentum, 0.1),
            OptimizerConfig::sgdm(0.1, [("e", 0.0), ("b", 0.3), ("h", 0.0), ("head", 0.9)]),
        ];
        for c in configs {
            let opt = Optimizer::new(c.clone(), &blocks).unwrap();
            let state: &OptState = opt.state();
            assert_eq!(
                state_bytes(&c, &fp).unwrap(),
                BYTES_PER_SCALAR * (params + state.stored_scalars()),
                "{}",
                c.method.label()
            );
        }
    }
}
