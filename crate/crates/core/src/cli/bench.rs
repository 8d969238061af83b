use std::hint::black_box;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::normalize::{normalize, NormKind, NsConfig};
use crate::rng::{streams, Rng};

pub const BENCH_CSV_HEADER: [&str; 6] = ["kind", "dim", "samples", "median_ns", "p10_ns", "p90_ns"];

/// Timed normalizations, cheapest first.
pub const BENCH_KINDS: [NormKind; 5] = [
    NormKind::Sign,
    NormKind::ColumnWise,
    NormKind::RowWise,
    NormKind::SingularValueNS,
    NormKind::SingularValue,
];

pub const MIN_DIM: usize = 256;
pub const MAX_DIM: usize = 4096;
pub const MIN_REPEATS: usize = 30;

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub dims: Vec<usize>,
    pub kinds: Vec<NormKind>,
    pub repeats: usize,
    pub warmup: usize,
    /// Per-(kind, dim) wall-clock allowance. A cell that runs out keeps the
    /// samples it has (at least one), so very slow kinds report fewer.
    pub budget: Duration,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            dims: vec![1024],
            kinds: BENCH_KINDS.to_vec(),
            repeats: MIN_REPEATS,
            warmup: 5,
            budget: Duration::from_secs(60),
            seed: 0,
        }
    }
}

impl BenchOptions {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("no dimensions given".into()));
        }
        if let Some(d) = self.dims.iter().find(|d| !(MIN_DIM..=MAX_DIM).contains(*d)) {
            return Err(Error::Config(format!(
                "dimension {d} outside {MIN_DIM}..={MAX_DIM}"
            )));
        }
        if self.repeats < MIN_REPEATS {
            return Err(Error::Config(format!(
                "repeats must be at least {MIN_REPEATS}"
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no kinds given".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: NormKind,
    pub dim: usize,
    pub samples: usize,
    pub median_ns: f64,
    pub p10_ns: f64,
    pub p90_ns: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn median(&self, kind: NormKind, dim: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.dim == dim)
            .map(|r| r.median_ns)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(BENCH_CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.kind.name().to_string(),
                r.dim.to_string(),
                r.samples.to_string(),
                format!("{:.0}", r.median_ns),
                format!("{:.0}", r.p10_ns),
                format!("{:.0}", r.p90_ns),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn time_cell(kind: NormKind, g: &Matrix, ns: &NsConfig, opts: &BenchOptions) -> Result<Vec<f64>> {
    let target = opts.warmup + opts.repeats;
    let start = Instant::now();
    let mut samples = Vec::with_capacity(target);
    while samples.len() < target && (samples.is_empty() || start.elapsed() < opts.budget) {
        let t = Instant::now();
        let d = normalize(kind, black_box(g), ns)?;
        black_box(&d);
        samples.push(t.elapsed().as_nanos() as f64);
    }
    let skip = opts.warmup.min(samples.len() - 1);
    Ok(samples.split_off(skip))
}

/// Median-of-repeats timing of each normalization on a seeded Gaussian
/// `d x d` matrix, after discarding warmup runs.
pub fn cmd_bench_norms(opts: &BenchOptions) -> Result<BenchReport> {
    opts.validate()?;
    let ns = NsConfig::default();
    let mut rows = Vec::new();
    for &dim in &opts.dims {
        let mut rng = Rng::with_stream(opts.seed, streams::SAMPLING);
        let g = Matrix::random_normal(dim, dim, 1.0, &mut rng);
        for &kind in &opts.kinds {
            let mut s = time_cell(kind, &g, &ns, opts)?;
            s.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                kind,
                dim,
                samples: s.len(),
                median_ns: median(&s),
                p10_ns: percentile(&s, 0.1),
                p90_ns: percentile(&s, 0.9),
            });
        }
    }
    Ok(BenchReport { rows })
}
