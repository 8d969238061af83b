use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{parse_experiment, ExperimentConfig, ProblemSpec};
use super::{thread_cap, CONFIG_SCHEMA_VERSION, TRACE_CSV_VERSION};
use crate::diagnostics::{
    estimate_layer_variance, memory_table, write_memory_csv, write_variance_csv, MemoryRow,
    ModelShape, VarianceEstimate,
};
use crate::error::{Error, Result};
use crate::problems::{run_training_with, MlpModel, Problem, RunOptions, TrainTrace};
use crate::rng::{streams, Rng};

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_experiment(&text)
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// One run per seed, concurrently, results in seed-list order.
fn train_seeds<P: Problem>(
    problem: &P,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<Vec<TrainTrace>> {
    let schedule = cfg.lr_schedule()?;
    pool()?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                run_training_with(problem, &cfg.optimizer, &schedule, cfg.steps, seed, opts)
            })
            .collect()
    })
}

#[derive(Debug, Serialize)]
struct RunRecord {
    seed: u64,
    file: String,
    steps: usize,
    divergent: bool,
    final_loss: f64,
    params_digest: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_schema_version: u32,
    trace_csv_version: u32,
    config: &'a ExperimentConfig,
    runs: Vec<RunRecord>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    /// One trace per seed, in seed order.
    pub files: Vec<PathBuf>,
    pub traces: Vec<(u64, TrainTrace)>,
}

impl TrainOutcome {
    pub fn divergent_seeds(&self) -> Vec<u64> {
        self.traces
            .iter()
            .filter(|(_, t)| t.divergent)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Trains every seed and writes `trace_seed<N>.csv` plus `run.json`.
pub fn cmd_train(
    config_path: &Path,
    out: Option<&Path>,
    seeds: Option<&[u64]>,
) -> Result<TrainOutcome> {
    let mut cfg = read_config(config_path)?;
    if let Some(s) = seeds {
        cfg.seeds = s.to_vec();
        cfg.validate()?;
    }
    let opts = RunOptions {
        full_gradients: cfg.record_full_gradients,
        variance_batch: None,
    };
    let traces = match &cfg.problem {
        ProblemSpec::Quadratic(q) => train_seeds(q, &cfg, &opts)?,
        ProblemSpec::Mlp(m) => train_seeds(&MlpModel::new(m.clone())?, &cfg, &opts)?,
    };

    let dir = output_dir(&cfg, out);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for (seed, tr) in cfg.seeds.iter().zip(&traces) {
        let name = format!("trace_seed{seed}.csv");
        let path = dir.join(&name);
        tr.write_csv(fs::File::create(&path)?)?;
        files.push(path);
        runs.push(RunRecord {
            seed: *seed,
            file: name,
            steps: tr.steps(),
            divergent: tr.divergent,
            final_loss: tr.final_loss,
            params_digest: tr.params_digest.clone(),
        });
    }
    let manifest = Manifest {
        config_schema_version: CONFIG_SCHEMA_VERSION,
        trace_csv_version: TRACE_CSV_VERSION,
        config: &cfg,
        runs,
    };
    fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(TrainOutcome {
        out_dir: dir,
        files,
        traces: cfg.seeds.iter().copied().zip(traces).collect(),
    })
}

#[derive(Debug)]
pub struct MemoryOutcome {
    pub shape: ModelShape,
    pub rows: Vec<MemoryRow>,
    pub file: Option<PathBuf>,
}

/// Memory table for a shape file (or a bundled shape name such as
/// `llama_7b`); writes `memory_<name>.csv` when `out` is given.
pub fn cmd_memory(shape: &str, out: Option<&Path>) -> Result<MemoryOutcome> {
    let shape = if Path::new(shape).exists() {
        let text = fs::read_to_string(shape)?;
        ModelShape::from_json(&text).map_err(|e| Error::Config(format!("{shape}: {e}")))?
    } else {
        ModelShape::bundled(shape)?
    };
    let rows = memory_table(&shape)?;
    let file = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let name = shape.name.clone().unwrap_or_else(|| "model".into());
            let path = dir.join(format!("memory_{name}.csv"));
            write_memory_csv(fs::File::create(&path)?, &rows)?;
            Some(path)
        }
        None => None,
    };
    Ok(MemoryOutcome { shape, rows, file })
}

#[derive(Debug)]
pub struct VarianceOutcome {
    pub out_dir: PathBuf,
    /// Estimate at each seed's initialization.
    pub at_init: Vec<(u64, VarianceEstimate)>,
    pub files: Vec<PathBuf>,
}

fn variance_for<P: Problem>(
    problem: &P,
    cfg: &ExperimentConfig,
) -> Result<Vec<(VarianceEstimate, TrainTrace)>> {
    let schedule = cfg.lr_schedule()?;
    let opts = RunOptions {
        full_gradients: cfg.record_full_gradients,
        variance_batch: Some(cfg.variance.large_batch),
    };
    pool()?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let params = problem.init_params(&mut Rng::with_stream(seed, streams::INIT));
                let mut rng = Rng::with_stream(seed, streams::SAMPLING);
                let est = estimate_layer_variance(
                    problem,
                    &params,
                    &cfg.variance,
                    &mut rng,
                    cfg.variance_draws,
                )?;
                let tr =
                    run_training_with(problem, &cfg.optimizer, &schedule, cfg.steps, seed, &opts)?;
                Ok((est, tr))
            })
            .collect()
    })
}

/// Per-block gradient variance at initialization (`variance_init_seed<N>.csv`)
/// and along training, window-smoothed (`variance_trace_seed<N>.csv`).
pub fn cmd_variance(
    config_path: &Path,
    out: Option<&Path>,
    seeds: Option<&[u64]>,
) -> Result<VarianceOutcome> {
    let mut cfg = read_config(config_path)?;
    if let Some(s) = seeds {
        cfg.seeds = s.to_vec();
        cfg.validate()?;
    }
    let results = match &cfg.problem {
        ProblemSpec::Quadratic(q) => variance_for(q, &cfg)?,
        ProblemSpec::Mlp(m) => variance_for(&MlpModel::new(m.clone())?, &cfg)?,
    };
    let dir = output_dir(&cfg, out);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut at_init = Vec::new();
    for (&seed, (est, tr)) in cfg.seeds.iter().zip(results) {
        let path = dir.join(format!("variance_init_seed{seed}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["block", "variance", "std_err", "rank"])?;
        let order = est.ordering();
        for (i, b) in est.blocks.iter().enumerate() {
            let rank = order
                .iter()
                .position(|&j| j == i)
                .expect("every block ranked")
                + 1;
            w.write_record([
                b.clone(),
                est.mean[i].to_string(),
                est.std_err[i].to_string(),
                rank.to_string(),
            ])?;
        }
        w.flush()?;
        files.push(path);

        let path = dir.join(format!("variance_trace_seed{seed}.csv"));
        let series = tr.variance_series().expect("variance was recorded");
        write_variance_csv(
            fs::File::create(&path)?,
            &tr.block_names,
            &series,
            cfg.variance.window,
        )?;
        files.push(path);
        at_init.push((seed, est));
    }
    Ok(VarianceOutcome {
        out_dir: dir,
        at_init,
        files,
    })
}
