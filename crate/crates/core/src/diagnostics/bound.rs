use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the layer-wise SGD-M rate bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremParams {
    /// Number of layers `L`.
    pub layers: usize,
    /// Horizon `T`.
    pub horizon: u64,
    /// Smoothness `γ`.
    pub gamma: f64,
    /// Initial gap `ℓ(θ¹) − ℓ*`.
    pub delta1: f64,
    /// `δ ∈ (0, 1]` with every `β_l ≤ 1 − δ`.
    pub delta: f64,
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl TheoremParams {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.horizon == 0 {
            return Err(Error::Config("layers and horizon must be positive".into()));
        }
        if self.betas.len() != self.layers || self.sigmas.len() != self.layers {
            return Err(Error::Config(format!(
                "{} layers but {} betas and {} sigmas",
                self.layers,
                self.betas.len(),
                self.sigmas.len()
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.delta1 >= 0.0 && self.delta1.is_finite()) {
            return Err(Error::Config("initial gap must be >= 0".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config("delta must lie in (0, 1]".into()));
        }
        for (l, (&b, &s)) in self.betas.iter().zip(&self.sigmas).enumerate() {
            if !(0.0..=1.0 - self.delta).contains(&b) {
                return Err(Error::Config(format!(
                    "beta of layer {l} must lie in [0, 1 - delta]"
                )));
            }
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma of layer {l} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the rate bound on `(1/T) Σ_t Σ_l E‖∇_l ℓ(θᵗ)‖²`.
///
/// A layer with `β_l = 0` and `σ_l > 0` makes the bound undefined.
pub fn theorem_bound_rhs(p: &TheoremParams) -> Result<f64> {
    p.validate()?;
    let l = p.layers as f64;
    let t = p.horizon as f64;
    let g = p.gamma;
    let d2 = p.delta * p.delta;
    let mut rhs = 2.0 * l * g.powf(1.5) * p.delta1 / (d2 * t.sqrt());
    for (layer, (&b, &s)) in p.betas.iter().zip(&p.sigmas).enumerate() {
        if s == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::BoundUndefined { layer });
        }
        let var = (1.0 - b) / (1.0 + b) * l * g.sqrt() / (4.0 * t.sqrt());
        let smooth = l * g.powf(1.5) / (2.0 * t.sqrt());
        let tail = (1.0 - b) / b.powi(3) * g * g / (4.0 * l * t);
        rhs += (var + smooth + tail) * s * s / d2;
    }
    Ok(rhs)
}

/// Largest step size for layer `layer` covered by the bound.
pub fn max_step_size(p: &TheoremParams, layer: usize) -> Result<f64> {
    p.validate()?;
    let b = *p
        .betas
        .get(layer)
        .ok_or_else(|| Error::OutOfRange(format!("layer {layer}")))?;
    let l = p.layers as f64;
    let g = p.gamma;
    let mut eta = (1.0 / (8.0 * g))
        .min((1.0 - b) / (4.0 * g))
        .min((1.0 - b) / (4.0 * g) * ((1.0 - b) / (2.0 * l)).cbrt())
        .min(1.0 / (g * p.horizon as f64).sqrt());
    if b > 0.0 {
        eta = eta.min(((1.0 - b) / b).powi(2) / (8.0 * g * l));
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(betas: Vec<f64>, sigmas: Vec<f64>) -> TheoremParams {
        TheoremParams {
            layers: betas.len(),
            horizon: 100,
            gamma: 1.0,
            delta1: 1.0,
            delta: 0.5,
            betas,
            sigmas,
        }
    }

    #[test]
    fn noiseless_bound_is_the_gap_term() {
        let p = params(vec![0.0, 0.3], vec![0.0, 0.0]);
        assert!((theorem_bound_rhs(&p).unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn independent_evaluation() {
        let p = TheoremParams {
            layers: 1,
            horizon: 10_000,
            gamma: 1.0,
            delta1: 0.0,
            delta: 0.1,
            betas: vec![0.9],
            sigmas: vec![1.0],
        };
        // (0.1/1.9)/400 + 1/200 + (0.1/0.729)/40000, all over δ² = 0.01
        let expected = (0.1 / 1.9 / 400.0 + 0.005 + 0.1 / 0.729 / 40_000.0) / 0.01;
        assert!((theorem_bound_rhs(&p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_sigma() {
        let base = params(vec![0.2, 0.4, 0.5], vec![0.1, 0.2, 0.3]);
        let r0 = theorem_bound_rhs(&base).unwrap();
        for l in 0..3 {
            let mut p = base.clone();
            p.sigmas[l] += 0.05;
            assert!(theorem_bound_rhs(&p).unwrap() > r0);
        }
    }

    #[test]
    fn zero_beta_with_noise_is_undefined() {
        let p = params(vec![0.3, 0.0], vec![1.0, 1.0]);
        assert!(matches!(
            theorem_bound_rhs(&p),
            Err(Error::BoundUndefined { layer: 1 })
        ));
        let p = params(vec![0.6], vec![1.0]);
        assert!(theorem_bound_rhs(&p).is_err(), "beta above 1 - delta");
    }

    #[test]
    fn step_size_limits() {
        let p = params(vec![0.0, 0.5], vec![0.0, 1.0]);
        assert_eq!(max_step_size(&p, 0).unwrap(), 0.1);
        // β = 0.5, L = 2: min(1/8, 1/16, 1/8, 1/8 · (1/8)^(1/3) = 1/16, 1/10)
        assert!((max_step_size(&p, 1).unwrap() - 0.0625).abs() < 1e-15);
        assert!(max_step_size(&p, 2).is_err());
    }
}
