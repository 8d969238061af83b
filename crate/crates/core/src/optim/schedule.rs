use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup to `peak`, then cosine decay to `floor_frac * peak` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub total_steps: u64,
    pub warmup_frac: f64,
    pub floor_frac: f64,
    pub peak: f64,
}

impl LrSchedule {
    pub const DEFAULT_WARMUP_FRAC: f64 = 0.10;
    pub const DEFAULT_FLOOR_FRAC: f64 = 0.10;

    pub fn new(total_steps: u64, peak: f64) -> Result<Self> {
        Self::with_fracs(
            total_steps,
            peak,
            Self::DEFAULT_WARMUP_FRAC,
            Self::DEFAULT_FLOOR_FRAC,
        )
    }

    pub fn with_fracs(
        total_steps: u64,
        peak: f64,
        warmup_frac: f64,
        floor_frac: f64,
    ) -> Result<Self> {
        let s = Self {
            total_steps,
            warmup_frac,
            floor_frac,
            peak,
        };
        s.validate()?;
        Ok(s)
    }

    /// Flat schedule at `peak` (no warmup, floor equal to peak).
    pub fn constant(total_steps: u64, peak: f64) -> Result<Self> {
        Self::with_fracs(total_steps, peak, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("schedule needs total_steps >= 1".into()));
        }
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(Error::Config(format!(
                "peak lr must be positive, got {}",
                self.peak
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config(format!(
                "warmup_frac must lie in [0, 1), got {}",
                self.warmup_frac
            )));
        }
        if !(0.0..=1.0).contains(&self.floor_frac) {
            return Err(Error::Config(format!(
                "floor_frac must lie in [0, 1], got {}",
                self.floor_frac
            )));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_frac * self.total_steps as f64).round() as u64
    }

    /// Learning rate at step `t`, `0 <= t <= total_steps`.
    pub fn lr_at(&self, t: u64) -> Result<f64> {
        if t > self.total_steps {
            return Err(Error::OutOfRange(format!(
                "step {t} beyond schedule horizon {}",
                self.total_steps
            )));
        }
        let warm = self.warmup_steps();
        if t < warm {
            return Ok(self.peak * t as f64 / warm as f64);
        }
        let span = self.total_steps - warm;
        if span == 0 {
            return Ok(self.peak);
        }
        let progress = (t - warm) as f64 / span as f64;
        let floor = self.floor_frac * self.peak;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        Ok(floor + (self.peak - floor) * cosine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let s = LrSchedule::new(1000, 1e-3).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert_eq!(s.warmup_steps(), 100);
        assert_eq!(s.lr_at(100).unwrap(), 1e-3);
        assert!((s.lr_at(1000).unwrap() - 1e-4).abs() < 1e-18);
        assert!((s.lr_at(50).unwrap() - 5e-4).abs() < 1e-18);
        assert!(s.lr_at(1001).is_err());
    }

    #[test]
    fn monotone_pieces() {
        let s = LrSchedule::new(500, 0.3).unwrap();
        let w = s.warmup_steps();
        for t in 1..=w {
            assert!(s.lr_at(t).unwrap() > s.lr_at(t - 1).unwrap());
        }
        for t in w + 1..=500 {
            assert!(s.lr_at(t).unwrap() <= s.lr_at(t - 1).unwrap());
        }
    }

    #[test]
    fn constant_schedule() {
        let s = LrSchedule::constant(10, 0.5).unwrap();
        for t in 0..=10 {
            assert_eq!(s.lr_at(t).unwrap(), 0.5);
        }
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::new(0, 1.0).is_err());
        assert!(LrSchedule::new(10, 0.0).is_err());
        assert!(LrSchedule::with_fracs(10, 1.0, 1.0, 0.1).is_err());
        assert!(LrSchedule::with_fracs(10, 1.0, 0.1, 1.5).is_err());
    }
}
