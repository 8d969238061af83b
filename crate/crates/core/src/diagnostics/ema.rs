use crate::error::{Error, Result};
use crate::rng::Rng;

/// Variance of `m_t = β m_{t−1} + (1−β) g_t` (with `m_0 = 0`) for i.i.d.
/// `g_t` of variance `σ²`: `(1−β)/(1+β) · (1−β^{2t}) · σ²`.
pub fn ema_variance_law(beta: f64, sigma2: f64, t: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::OutOfRange(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    if beta == 0.0 {
        return Ok(sigma2);
    }
    let decay = beta.powf(2.0 * t as f64);
    Ok((1.0 - beta) / (1.0 + beta) * (1.0 - decay) * sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub streams: usize,
}

/// Monte-Carlo `E(m_t − (1−β^t)μ)²` over independent Gaussian streams with
/// mean `mu` and variance `sigma2`.
pub fn simulate_ema_variance(
    beta: f64,
    mu: f64,
    sigma2: f64,
    t: u64,
    streams: usize,
    rng: &mut Rng,
) -> Result<EmaEstimate> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::OutOfRange(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    if streams < 2 {
        return Err(Error::Config("need at least two streams".into()));
    }
    let sigma = sigma2.sqrt();
    let center = (1.0 - beta.powf(t as f64)) * mu;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..streams {
        let mut m = 0.0;
        for _ in 0..t {
            m = beta * m + (1.0 - beta) * (mu + sigma * rng.normal());
        }
        let d = (m - center) * (m - center);
        sum += d;
        sum_sq += d * d;
    }
    let n = streams as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(EmaEstimate {
        mean,
        std_err: (var / n).sqrt(),
        streams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        for t in [1, 5, 1000] {
            assert_eq!(ema_variance_law(0.0, 2.5, t).unwrap(), 2.5);
        }
        let lim = ema_variance_law(0.9, 1.0, 100_000).unwrap();
        assert!((lim - 1.0 / 19.0).abs() < 1e-15);
        // t = 1: m_1 = (1-β) g_1
        let v = ema_variance_law(0.7, 2.0, 1).unwrap();
        assert!((v - 0.09 * 2.0).abs() < 1e-15);
        assert!(ema_variance_law(1.0, 1.0, 3).is_err());
        assert!(ema_variance_law(-0.1, 1.0, 3).is_err());
    }

    #[test]
    fn monte_carlo_agrees() {
        let mut rng = Rng::new(11);
        for beta in [0.5, 0.9] {
            let est = simulate_ema_variance(beta, 0.3, 1.5, 40, 20_000, &mut rng).unwrap();
            let law = ema_variance_law(beta, 1.5, 40).unwrap();
            assert!(
                (est.mean - law).abs() <= 3.0 * est.std_err,
                "{beta}: {} vs {law}",
                est.mean
            );
        }
    }
}
