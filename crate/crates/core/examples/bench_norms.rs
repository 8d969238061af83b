//! Median timings of the five normalizations. Defaults to a quick 256/512
//! sweep; pass dimensions to override: `-- 1024 2048`.

use std::time::Duration;

use scale_opt::cli::{cmd_bench_norms, BenchOptions};

fn main() -> scale_opt::Result<()> {
    let dims: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let opts = BenchOptions {
        dims: if dims.is_empty() {
            vec![256, 512]
        } else {
            dims
        },
        budget: Duration::from_secs(10),
        ..BenchOptions::default()
    };
    let report = cmd_bench_norms(&opts)?;
    for r in &report.rows {
        println!(
            "{:<18} d={:<5} n={:<3} median {:>12.3} ms",
            r.kind.to_string(),
            r.dim,
            r.samples,
            r.median_ns / 1e6
        );
    }
    Ok(())
}
