//! Small tanh MLP classifier on synthetic clustered data, trained with
//! softmax cross-entropy.

use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{ParamBlock, Role};
use crate::rng::{streams, Rng};

fn d_input() -> usize {
    32
}
fn d_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn d_classes() -> usize {
    128
}
fn d_batch() -> usize {
    32
}
fn d_samples() -> usize {
    4096
}
fn d_cluster_std() -> f64 {
    1.0
}
fn d_true() -> bool {
    true
}

/// Shape and data description. Defaults give a 32 -> 64 -> 64 -> 128 network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    #[serde(default = "d_input")]
    pub input_dim: usize,
    /// Widths of the tanh layers; needs at least two entries so that there
    /// is an input matrix, one hidden matrix and the head.
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    /// Size of the finite training set.
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub data_seed: u64,
    /// Spread of each class cluster around its unit-variance Gaussian center.
    #[serde(default = "d_cluster_std")]
    pub cluster_std: f64,
    #[serde(default = "d_true")]
    pub biases: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_dim: d_input(),
            hidden: d_hidden(),
            classes: d_classes(),
            batch: d_batch(),
            samples: d_samples(),
            data_seed: 0,
            cluster_std: d_cluster_std(),
            biases: true,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() < 2 {
            return Err(Error::Config("mlp needs at least two hidden widths".into()));
        }
        if self.input_dim == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(Error::Config(
                "mlp layer sizes must be positive (classes >= 2)".into(),
            ));
        }
        if self.batch == 0 || self.samples == 0 {
            return Err(Error::Config(
                "mlp batch and samples must be positive".into(),
            ));
        }
        if !(self.cluster_std >= 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::Config("cluster_std must be >= 0".into()));
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, input layer first.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Row indices into the model's dataset. Repeats are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpBatch {
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    config: MlpConfig,
    inputs: Matrix,
    labels: Vec<usize>,
}

impl MlpModel {
    /// Builds the dataset from `config.data_seed`.
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::with_stream(config.data_seed, streams::DATA);
        let centers = Matrix::random_normal(config.classes, config.input_dim, 1.0, &mut rng);
        let mut data = Vec::with_capacity(config.samples * config.input_dim);
        let mut labels = Vec::with_capacity(config.samples);
        for _ in 0..config.samples {
            let y = rng.below(config.classes);
            labels.push(y);
            for &c in centers.row(y) {
                data.push(c + config.cluster_std * rng.normal());
            }
        }
        let inputs = Matrix::new(config.samples, config.input_dim, data)?;
        Ok(Self {
            config,
            inputs,
            labels,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    fn layer_names(&self) -> Vec<String> {
        let n = self.config.hidden.len() + 1;
        (0..n)
            .map(|i| match i {
                0 => "input".to_string(),
                i if i + 1 == n => "head".to_string(),
                i => format!("hidden{i}"),
            })
            .collect()
    }

    fn layer_role(&self, i: usize) -> Role {
        let n = self.config.hidden.len() + 1;
        match i {
            0 => Role::Embedding,
            i if i + 1 == n => Role::OutputHead,
            _ => Role::Hidden,
        }
    }

    /// Glorot-normal weights, zero biases.
    fn init(&self, rng: &mut Rng) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        for (i, ((r, c), name)) in self
            .config
            .weight_shapes()
            .into_iter()
            .zip(self.layer_names())
            .enumerate()
        {
            let w = Matrix::random_normal(r, c, (2.0 / (r + c) as f64).sqrt(), rng);
            blocks.push(ParamBlock::new(name.clone(), self.layer_role(i), w));
            if self.config.biases {
                blocks.push(ParamBlock::new(
                    format!("{name}_bias"),
                    Role::Vector,
                    Matrix::zeros(1, c),
                ));
            }
        }
        blocks
    }

    fn check(&self, params: &[ParamBlock]) -> Result<()> {
        let per = if self.config.biases { 2 } else { 1 };
        let shapes = self.config.weight_shapes();
        if params.len() != per * shapes.len() {
            return Err(Error::Config(format!(
                "expected {} parameter blocks, got {}",
                per * shapes.len(),
                params.len()
            )));
        }
        for (i, &(r, c)) in shapes.iter().enumerate() {
            let w = &params[per * i].value;
            if w.shape() != (r, c) {
                return Err(Error::ShapeMismatch {
                    op: "mlp weight",
                    left: w.shape(),
                    right: (r, c),
                });
            }
            if per == 2 && params[2 * i + 1].value.shape() != (1, c) {
                return Err(Error::ShapeMismatch {
                    op: "mlp bias",
                    left: params[2 * i + 1].value.shape(),
                    right: (1, c),
                });
            }
        }
        Ok(())
    }

    fn gather(&self, indices: &[usize]) -> Result<Matrix> {
        let d = self.config.input_dim;
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.config.samples {
                return Err(Error::OutOfRange(format!("sample index {i}")));
            }
            data.extend_from_slice(self.inputs.row(i));
        }
        Matrix::new(indices.len(), d, data)
    }

    /// Mean cross-entropy over `batch` and the gradient of every block.
    pub fn mlp_loss_grad(
        &self,
        params: &[ParamBlock],
        batch: &MlpBatch,
    ) -> Result<(f64, Vec<Matrix>)> {
        if batch.indices.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        self.check(params)?;
        let per = if self.config.biases { 2 } else { 1 };
        let layers = self.config.weight_shapes().len();
        let n = batch.indices.len();

        let mut acts = vec![self.gather(&batch.indices)?];
        let mut logits = None;
        for l in 0..layers {
            let mut z = acts[l].matmul(&params[per * l].value)?;
            if per == 2 {
                add_row(&mut z, params[2 * l + 1].value.data());
            }
            if l + 1 < layers {
                acts.push(z.map(f64::tanh));
            } else {
                logits = Some(z);
            }
        }
        let logits = logits.expect("at least one layer");
        if !logits.is_finite() {
            return Err(Error::NonFinite("mlp forward"));
        }

        // softmax - onehot, scaled by 1/n
        let k = self.config.classes;
        let mut loss = 0.0;
        let mut delta = logits;
        for (r, y) in batch.indices.iter().map(|&i| self.labels[i]).enumerate() {
            let row = &mut delta.data_mut()[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let target = row[y];
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            loss += max + sum.ln() - target;
            for v in row.iter_mut() {
                *v /= sum * n as f64;
            }
            row[y] -= 1.0 / n as f64;
        }
        let loss = loss / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("mlp loss"));
        }

        let mut grads: Vec<Matrix> = Vec::with_capacity(params.len());
        grads.resize_with(params.len(), || Matrix::zeros(1, 1));
        for l in (0..layers).rev() {
            grads[per * l] = acts[l].t_matmul(&delta)?;
            if per == 2 {
                grads[2 * l + 1] = column_sums(&delta);
            }
            if l > 0 {
                let mut back = delta.matmul_t(&params[per * l].value)?;
                for (d, a) in back.data_mut().iter_mut().zip(acts[l].data()) {
                    *d *= 1.0 - a * a;
                }
                delta = back;
            }
        }
        Ok((loss, grads))
    }
}

fn add_row(m: &mut Matrix, row: &[f64]) {
    let c = m.cols();
    for chunk in m.data_mut().chunks_mut(c) {
        for (x, b) in chunk.iter_mut().zip(row) {
            *x += b;
        }
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let c = m.cols();
    let mut out = vec![0.0; c];
    for chunk in m.data().chunks(c) {
        for (o, x) in out.iter_mut().zip(chunk) {
            *o += x;
        }
    }
    Matrix::from_raw(1, c, out)
}

impl Problem for MlpModel {
    type Batch = MlpBatch;

    fn init_params(&self, rng: &mut Rng) -> Vec<ParamBlock> {
        self.init(rng)
    }

    fn train_batch_size(&self) -> usize {
        self.config.batch
    }

    fn sample_batch(&self, size: usize, rng: &mut Rng) -> MlpBatch {
        MlpBatch {
            indices: (0..size.max(1))
                .map(|_| rng.below(self.config.samples))
                .collect(),
        }
    }

    fn extend_batch(&self, batch: &MlpBatch, size: usize, rng: &mut Rng) -> MlpBatch {
        let mut indices = batch.indices.clone();
        while indices.len() < size {
            indices.push(rng.below(self.config.samples));
        }
        MlpBatch { indices }
    }

    fn loss_grad(&self, params: &[ParamBlock], batch: &MlpBatch) -> Result<(f64, Vec<Matrix>)> {
        self.mlp_loss_grad(params, batch)
    }

    fn full_loss_grad(&self, params: &[ParamBlock]) -> Result<(f64, Vec<Matrix>)> {
        let all = MlpBatch {
            indices: (0..self.config.samples).collect(),
        };
        self.mlp_loss_grad(params, &all)
    }
}
