use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::ParamBlock;
use crate::problems::Problem;
use crate::rng::Rng;

fn d_small() -> usize {
    32
}
fn d_large() -> usize {
    512
}
fn d_window() -> usize {
    50
}

/// Nested small/large batch sizes and the smoothing window for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceProtocol {
    #[serde(default = "d_small")]
    pub small_batch: usize,
    #[serde(default = "d_large")]
    pub large_batch: usize,
    #[serde(default = "d_window")]
    pub window: usize,
}

impl Default for VarianceProtocol {
    fn default() -> Self {
        Self {
            small_batch: d_small(),
            large_batch: d_large(),
            window: d_window(),
        }
    }
}

impl VarianceProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.small_batch == 0 || self.large_batch <= self.small_batch {
            return Err(Error::Config(format!(
                "need 0 < small_batch < large_batch, got {} / {}",
                self.small_batch, self.large_batch
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(())
    }

    /// `E‖g_small − g_large‖² / Var(g_small)` for nested batches of i.i.d.
    /// samples: the large batch shares the small one's noise.
    pub fn nested_bias(&self) -> f64 {
        1.0 - self.small_batch as f64 / self.large_batch as f64
    }
}

/// Per-block mean of `‖g_small − g_large‖²_F` over independent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub blocks: Vec<String>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub draws: usize,
}

impl VarianceEstimate {
    /// Block indices sorted by decreasing estimate.
    pub fn ordering(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean.len()).collect();
        idx.sort_by(|&a, &b| self.mean[b].total_cmp(&self.mean[a]));
        idx
    }
}

/// Estimates per-block gradient variance at `params`, using a large batch
/// that extends each small batch as the reference gradient.
pub fn estimate_layer_variance<P: Problem>(
    problem: &P,
    params: &[ParamBlock],
    protocol: &VarianceProtocol,
    rng: &mut Rng,
    draws: usize,
) -> Result<VarianceEstimate> {
    protocol.validate()?;
    if draws == 0 {
        return Err(Error::Config("draws must be at least 1".into()));
    }
    let nb = params.len();
    let mut sum = vec![0.0; nb];
    let mut sum_sq = vec![0.0; nb];
    for _ in 0..draws {
        let small = problem.sample_batch(protocol.small_batch, rng);
        let large = problem.extend_batch(&small, protocol.large_batch, rng);
        let (_, gs) = problem.loss_grad(params, &small)?;
        let (_, gl) = problem.loss_grad(params, &large)?;
        for (l, (a, b)) in gs.iter().zip(&gl).enumerate() {
            let d = a.sub(b)?.frobenius_norm_sq();
            sum[l] += d;
            sum_sq[l] += d * d;
        }
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = if draws > 1 {
        mean.iter()
            .zip(&sum_sq)
            .map(|(m, s2)| ((s2 / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect()
    } else {
        vec![f64::NAN; nb]
    };
    Ok(VarianceEstimate {
        blocks: params.iter().map(|p| p.name.clone()).collect(),
        mean,
        std_err,
        draws,
    })
}

/// Trailing moving average; the first `window − 1` points average what is
/// available.
pub fn smooth_window(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (i, x) in series.iter().enumerate() {
        acc += x;
        if i >= w {
            acc -= series[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Writes `step,<block>_variance...` with each column window-smoothed.
pub fn write_variance_csv<W: Write>(
    out: W,
    blocks: &[String],
    series: &[Vec<f64>],
    window: usize,
) -> Result<()> {
    let smoothed: Vec<Vec<f64>> = series.iter().map(|s| smooth_window(s, window)).collect();
    let len = smoothed.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string()];
    header.extend(blocks.iter().map(|b| format!("{b}_variance")));
    w.write_record(&header)?;
    for t in 0..len {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(smoothed.iter().map(|s| s[t].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{MlpConfig, MlpModel, NoisyQuadratic, QuadLayer};

    #[test]
    fn noiseless_problem_has_zero_variance() {
        let q = NoisyQuadratic::new(vec![
            QuadLayer::new(3, 3, 1.0, 0.0),
            QuadLayer::new(3, 2, 2.0, 0.0),
        ])
        .unwrap();
        let p = q.init_params(&mut Rng::new(0));
        let est =
            estimate_layer_variance(&q, &p, &VarianceProtocol::default(), &mut Rng::new(1), 50)
                .unwrap();
        assert!(est.mean.iter().all(|&v| v <= 1e-12));

        // one data point: every batch is the same sample repeated
        let m = MlpModel::new(MlpConfig {
            input_dim: 4,
            hidden: vec![5, 5],
            classes: 6,
            samples: 1,
            ..MlpConfig::default()
        })
        .unwrap();
        let p = m.init_params(&mut Rng::new(0));
        let est =
            estimate_layer_variance(&m, &p, &VarianceProtocol::default(), &mut Rng::new(1), 5)
                .unwrap();
        assert!(est.mean.iter().all(|&v| v <= 1e-12), "{:?}", est.mean);
    }

    #[test]
    fn quadratic_estimate_matches_nested_correction() {
        let sig = [0.5, 1.0, 3.0];
        let q = NoisyQuadratic::new(sig.iter().map(|&s| QuadLayer::new(4, 3, 1.0, s)).collect())
            .unwrap();
        let p = q.init_params(&mut Rng::new(0));
        let proto = VarianceProtocol::default();
        let est = estimate_layer_variance(&q, &p, &proto, &mut Rng::new(2), 10_000).unwrap();
        for (l, s) in sig.iter().enumerate() {
            let target = proto.nested_bias() * s * s;
            assert!(
                (est.mean[l] - target).abs() <= 3.0 * est.std_err[l],
                "{} vs {target} (se {})",
                est.mean[l],
                est.std_err[l]
            );
        }
        assert_eq!(est.ordering(), vec![2, 1, 0]);
    }

    #[test]
    fn smoothing() {
        let c = vec![2.5; 120];
        assert_eq!(smooth_window(&c, 50), c);
        let s = smooth_window(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(s, vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(smooth_window(&[1.0, 3.0], 1), vec![1.0, 3.0]);
    }

    #[test]
    fn protocol_validation() {
        assert!(VarianceProtocol::default().validate().is_ok());
        let bad = VarianceProtocol {
            small_batch: 64,
            large_batch: 64,
            window: 1,
        };
        assert!(bad.validate().is_err());
        let bad = VarianceProtocol {
            window: 0,
            ..VarianceProtocol::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variance_csv_header() {
        let mut buf = Vec::new();
        write_variance_csv(
            &mut buf,
            &["a".into(), "b".into()],
            &[vec![1.0, 1.0], vec![2.0, 4.0]],
            2,
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "step,a_variance,b_variance\n1,1,2\n2,1,3\n");
    }
}
