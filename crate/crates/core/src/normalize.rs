//! Linear minimization oracles over four matrix-norm unit balls.
//!
//! For a gradient `G` and a norm `‖·‖`, the steepest-descent direction is
//! `argmin_{‖Δ‖ ≤ 1} <G, Δ> = -normalize(kind, G)`, and the optimal value is
//! `-dual_norm(kind, G)`.
//!
//! | kind            | ball norm              | direction            | dual norm          |
//! |-----------------|------------------------|----------------------|--------------------|
//! | `SingularValue` | spectral (`2→2`)       | `U Vᵀ`               | nuclear            |
//! | `ColumnWise`    | max column norm (`1→2`)| columns / col norms  | sum of col norms   |
//! | `RowWise`       | max row norm (`2→∞`)   | rows / row norms     | sum of row norms   |
//! | `Sign`          | max abs entry (`1→∞`)  | `sign(G)`            | sum of abs entries |
//!
//! `SingularValueNS` approximates `U Vᵀ` with a quintic Newton-Schulz iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gemm, svd_exact, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    SingularValue,
    #[serde(rename = "singular_value_ns")]
    SingularValueNS,
    ColumnWise,
    RowWise,
    Sign,
}

impl NormKind {
    pub const ALL: [NormKind; 5] = [
        NormKind::SingularValue,
        NormKind::SingularValueNS,
        NormKind::ColumnWise,
        NormKind::RowWise,
        NormKind::Sign,
    ];

    /// Kinds whose direction is the exact LMO solution.
    pub const EXACT: [NormKind; 4] = [
        NormKind::SingularValue,
        NormKind::ColumnWise,
        NormKind::RowWise,
        NormKind::Sign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::SingularValue => "singular_value",
            NormKind::SingularValueNS => "singular_value_ns",
            NormKind::ColumnWise => "column_wise",
            NormKind::RowWise => "row_wise",
            NormKind::Sign => "sign",
        }
    }

    pub fn is_exact(self) -> bool {
        self != NormKind::SingularValueNS
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Quintic Newton-Schulz iteration `X ← aX + b(XXᵀ)X + c(XXᵀ)²X`, started
/// from `G / ‖G‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsConfig {
    pub steps: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsConfig {
    /// Coefficients of the Muon reference implementation.
    pub const DEFAULT_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);
    pub const DEFAULT_STEPS: usize = 5;

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("Newton-Schulz steps must be >= 1".into()));
        }
        if ![self.a, self.b, self.c].iter().all(|x| x.is_finite()) {
            return Err(Error::Config(
                "Newton-Schulz coefficients must be finite".into(),
            ));
        }
        Ok(())
    }
}

impl Default for NsConfig {
    fn default() -> Self {
        let (a, b, c) = Self::DEFAULT_COEFFS;
        Self {
            steps: Self::DEFAULT_STEPS,
            a,
            b,
            c,
        }
    }
}

/// Entrywise sign with `sign(0) = 0`.
#[inline]
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Direction `D(G)` whose negation solves the LMO for `kind`.
///
/// Zero columns/rows map to zero under the column/row rules, and an all-zero
/// `g` maps to the zero matrix under the singular-value rules.
pub fn normalize(kind: NormKind, g: &Matrix, ns: &NsConfig) -> Result<Matrix> {
    match kind {
        NormKind::Sign => Ok(g.map(sign0)),
        NormKind::ColumnWise => Ok(normalize_columns(g)),
        NormKind::RowWise => Ok(normalize_rows(g)),
        NormKind::SingularValue => {
            if g.max_abs() == 0.0 {
                return Ok(Matrix::zeros(g.rows(), g.cols()));
            }
            Ok(svd_exact(g)?.polar())
        }
        NormKind::SingularValueNS => {
            ns.validate()?;
            Ok(newton_schulz(g, ns))
        }
    }
}

/// Column-wise normalization, the `C(·)` of the SCALE update.
pub fn normalize_columns(g: &Matrix) -> Matrix {
    let inv: Vec<f64> = g
        .column_norms()
        .into_iter()
        .map(|n| if n > 0.0 { 1.0 / n } else { 0.0 })
        .collect();
    let mut out = g.clone();
    for row in out.data_mut().chunks_exact_mut(g.cols()) {
        for (x, s) in row.iter_mut().zip(&inv) {
            *x *= s;
        }
    }
    out
}

pub fn normalize_rows(g: &Matrix) -> Matrix {
    let norms = g.row_norms();
    let mut out = g.clone();
    for (row, n) in out.data_mut().chunks_exact_mut(g.cols()).zip(norms) {
        let s = if n > 0.0 { 1.0 / n } else { 0.0 };
        for x in row {
            *x *= s;
        }
    }
    out
}

/// Approximate polar factor. Iterates on the orientation with fewer rows so
/// the Gram matrix is the smaller of `GGᵀ` and `GᵀG`.
pub fn newton_schulz(g: &Matrix, ns: &NsConfig) -> Matrix {
    let norm = g.frobenius_norm();
    if norm == 0.0 {
        return Matrix::zeros(g.rows(), g.cols());
    }
    let transposed = g.rows() > g.cols();
    let mut x = if transposed { g.transpose() } else { g.clone() };
    x.scale_in_place(1.0 / norm);

    let r = x.rows();
    let mut gram = Matrix::zeros(r, r);
    let mut poly = Matrix::zeros(r, r);
    for _ in 0..ns.steps {
        gemm(1.0, &x, false, &x, true, 0.0, &mut gram);
        poly.data_mut().copy_from_slice(gram.data());
        // poly = c * gram^2 + b * gram
        gemm(ns.c, &gram, false, &gram, false, ns.b, &mut poly);
        let mut next = x.clone();
        // next = poly * x + a * x
        gemm(1.0, &poly, false, &x, false, ns.a, &mut next);
        x = next;
    }
    if transposed {
        x.transpose()
    } else {
        x
    }
}

/// Value of the norm whose unit ball `kind` optimizes over.
pub fn primal_norm(kind: NormKind, g: &Matrix) -> Result<f64> {
    Ok(match kind {
        NormKind::Sign => g.max_abs(),
        NormKind::ColumnWise => g.column_norms().into_iter().fold(0.0, f64::max),
        NormKind::RowWise => g.row_norms().into_iter().fold(0.0, f64::max),
        NormKind::SingularValue | NormKind::SingularValueNS => {
            if g.max_abs() == 0.0 {
                0.0
            } else {
                svd_exact(g)?.sigma[0]
            }
        }
    })
}

/// Dual of [`primal_norm`]; equals `<g, normalize(kind, g)>` for exact kinds.
pub fn dual_norm(kind: NormKind, g: &Matrix) -> Result<f64> {
    Ok(match kind {
        NormKind::Sign => g.data().iter().map(|x| x.abs()).sum(),
        NormKind::ColumnWise => g.column_norms().iter().sum(),
        NormKind::RowWise => g.row_norms().iter().sum(),
        NormKind::SingularValue | NormKind::SingularValueNS => {
            if g.max_abs() == 0.0 {
                0.0
            } else {
                svd_exact(g)?.sigma.iter().sum()
            }
        }
    })
}

/// Outcome of a Monte-Carlo LMO check.
#[derive(Debug, Clone, PartialEq)]
pub struct LmoReport {
    /// `<G, -D>`, the objective at the claimed minimizer.
    pub claimed: f64,
    /// Smallest objective found among feasible samples.
    pub best_sampled: f64,
    pub trials: usize,
    /// Samples rejected because they fell outside the ball after rescaling.
    pub infeasible: usize,
}

impl LmoReport {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.claimed <= self.best_sampled + Self::TOLERANCE
    }
}

/// Draws `trials` directions inside the unit ball of `kind` and records the
/// best objective `<G, Δ'>` against `<G, -normalize(kind, G)>`.
///
/// Samples mix three regimes: Gaussian directions pushed to the boundary,
/// interior points, and perturbations of the claimed optimum (the samples
/// most likely to expose a wrong minimizer).
pub fn lmo_sample(
    kind: NormKind,
    g: &Matrix,
    trials: usize,
    ns: &NsConfig,
    rng: &mut Rng,
) -> Result<LmoReport> {
    let d = normalize(kind, g, ns)?;
    let claimed = -g.inner(&d)?;
    let (m, n) = g.shape();
    let mut best = f64::INFINITY;
    let mut infeasible = 0;
    for trial in 0..trials {
        let mut delta = match trial % 3 {
            0 | 1 => Matrix::random_normal(m, n, 1.0, rng),
            _ => {
                let mut p = d.scaled(-1.0);
                let scale = 10f64.powf(rng.uniform_range(-6.0, -1.0));
                p.axpy(scale, &Matrix::random_normal(m, n, 1.0, rng))?;
                p
            }
        };
        let nrm = primal_norm(kind, &delta)?;
        if nrm > 0.0 {
            let target = match trial % 3 {
                0 => 1.0,
                1 => rng.uniform(),
                _ => nrm.min(1.0),
            };
            delta.scale_in_place(target / nrm);
        }
        if primal_norm(kind, &delta)? > 1.0 + 1e-12 {
            infeasible += 1;
            continue;
        }
        best = best.min(g.inner(&delta)?);
    }
    Ok(LmoReport {
        claimed,
        best_sampled: best,
        trials,
        infeasible,
    })
}

/// `true` iff `-normalize(kind, g)` beats every sampled feasible direction
/// (within `1e-9`). Vacuously true for `trials == 0`.
pub fn lmo_optimality_check(
    kind: NormKind,
    g: &Matrix,
    trials: usize,
    rng: &mut Rng,
) -> Result<bool> {
    Ok(lmo_sample(kind, g, trials, &NsConfig::default(), rng)?.passed())
}
