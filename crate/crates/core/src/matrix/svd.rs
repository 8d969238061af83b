//! One-sided (Hestenes) Jacobi SVD.
//!
//! Orthogonalizes the columns of the working matrix with plane rotations
//! until every pair is orthogonal to working precision, relative to the
//! pair's norms. Relative orthogonality is what gives Jacobi its accuracy on
//! tiny singular values, which the LMO and orthogonality checks depend on.

use super::Matrix;
use crate::error::{Error, Result};

/// Sweep cap before reporting non-convergence.
pub const MAX_SWEEPS: usize = 60;

const JACOBI_TILE: usize = 16;

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m x r`, orthonormal columns.
    pub u: Matrix,
    /// Length `r`, nonnegative, descending.
    pub sigma: Vec<f64>,
    /// `r x n`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        let r = self.sigma.len();
        for row in us.data_mut().chunks_exact_mut(r) {
            for (x, s) in row.iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factor shapes")
    }

    /// `U V^T`, the polar factor.
    pub fn polar(&self) -> Matrix {
        self.u.matmul(&self.vt).expect("svd factor shapes")
    }
}

/// Thin SVD `g = U diag(sigma) V^T` with `r = min(m, n)`.
pub fn svd_exact(g: &Matrix) -> Result<SvdResult> {
    if g.rows() >= g.cols() {
        svd_tall(g)
    } else {
        let t = svd_tall(&g.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        })
    }
}

/// Requires `m >= n`.
///
/// Column-pivoted Householder QR `G P = Q R` first, then one-sided Jacobi
/// on `Rᵀ`: with pivoting the rows of `R` are graded and nearly orthogonal,
/// so Jacobi needs far fewer sweeps than on `G` itself. With `Rᵀ W = X`
/// (orthogonal columns) we get `G = (Q W) diag(‖x_j‖) (P x_j / ‖x_j‖)ᵀ`.
fn svd_tall(g: &Matrix) -> Result<SvdResult> {
    let (m, n) = g.shape();
    debug_assert!(m >= n);

    let (q, r, perm) = householder_qr(g);
    // Column j of Rᵀ is row j of R; row-major R is column-major Rᵀ.
    let mut x = r;
    let w = jacobi(&mut x, n, n)?;

    let mut norms: Vec<(usize, f64)> = x
        .chunks_exact(n)
        .map(|col| dot(col, col).sqrt())
        .enumerate()
        .collect();
    norms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    // U = Q W, with Q stored as Qᵀ (row-major n x m) and W column-major.
    let qw = Matrix::from_raw(n, m, q).t_matmul(&Matrix::from_raw(n, n, w).transpose())?;

    let mut sigma = Vec::with_capacity(n);
    let mut v_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    let mut u = vec![0.0; m * n];
    for (k, &(j, s)) in norms.iter().enumerate() {
        sigma.push(s);
        for i in 0..m {
            u[i * n + k] = qw.get(i, j);
        }
        if s > 0.0 {
            let mut row = vec![0.0; n];
            for (i, &p) in perm.iter().enumerate() {
                row[p] = x[j * n + i] / s;
            }
            v_rows.push(row);
        } else {
            v_rows.push(Vec::new());
            missing.push(k);
        }
    }
    complete_basis(&mut v_rows, &missing, n);
    Ok(SvdResult {
        u: Matrix::from_raw(m, n, u),
        sigma,
        vt: Matrix::from_raw(n, n, v_rows.concat()),
    })
}

/// Thin column-pivoted Householder QR of an `m x n` matrix (`m >= n`).
/// Returns `Q` as `n` contiguous columns of length `m`, `R` row-major
/// `n x n`, and the permutation (`perm[i]` is the original column in slot `i`).
fn householder_qr(g: &Matrix) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let (m, n) = g.shape();
    let mut a = g.transpose().into_data(); // column j at a[j*m..]
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = vec![0.0; n * n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // Largest remaining column (over rows k..) goes next.
        let mut best = (k, -1.0);
        for j in k..n {
            let c = &a[j * m + k..(j + 1) * m];
            let nj = dot(c, c);
            if nj > best.1 {
                best = (j, nj);
            }
        }
        if best.0 != k {
            let (lo, hi) = a.split_at_mut(best.0 * m);
            lo[k * m..(k + 1) * m].swap_with_slice(&mut hi[..m]);
            perm.swap(k, best.0);
            for row in 0..k {
                r.swap(row * n + k, row * n + best.0);
            }
        }
        let (head, tail) = a.split_at_mut((k + 1) * m);
        let col = &head[k * m + k..];
        let nrm = dot(col, col).sqrt();
        let mut v = col.to_vec();
        let alpha = if col[0] >= 0.0 { -nrm } else { nrm };
        v[0] -= alpha;
        let vv = dot(&v, &v);
        if nrm == 0.0 || vv == 0.0 {
            reflectors.push(Vec::new());
            for j in k..n {
                r[k * n + j] = if j == k {
                    0.0
                } else {
                    tail[(j - k - 1) * m + k]
                };
            }
            continue;
        }
        r[k * n + k] = alpha;
        for (j, cj) in tail.chunks_exact_mut(m).enumerate() {
            let seg = &mut cj[k..];
            let f = 2.0 * dot(&v, seg) / vv;
            for (e, vi) in seg.iter_mut().zip(&v) {
                *e -= f * vi;
            }
            r[k * n + k + 1 + j] = seg[0];
        }
        let scale = (2.0 / vv).sqrt();
        v.iter_mut().for_each(|e| *e *= scale);
        reflectors.push(v);
    }
    // Q = H_0 ... H_{n-1} applied to the first n unit vectors, back to front;
    // H_k leaves columns j < k untouched.
    let mut q = vec![0.0; n * m];
    for j in 0..n {
        q[j * m + j] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for cj in q.chunks_exact_mut(m).skip(k) {
            let seg = &mut cj[k..];
            let f = dot(v, seg);
            for (e, vi) in seg.iter_mut().zip(v) {
                *e -= f * vi;
            }
        }
    }
    (q, r, perm)
}

/// One-sided Jacobi on the column-major `m x n` matrix `a`, leaving its
/// columns mutually orthogonal. Returns the accumulated rotations
/// (column-major `n x n`).
fn jacobi(a: &mut [f64], m: usize, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }
    let tol = f64::EPSILON * (m as f64);
    let mut sq: Vec<f64> = vec![0.0; n];
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::SvdNoConvergence { sweeps });
        }
        sweeps += 1;
        // Squared column norms are carried through the sweep and refreshed
        // here, so each pair costs one dot product instead of three.
        for (j, col) in a.chunks_exact(m).enumerate() {
            sq[j] = dot(col, col);
        }
        let mut rotated = false;
        // Block-cyclic pair order: all pairs between two column tiles are
        // done together so the tiles stay in cache.
        for bp in (0..n).step_by(JACOBI_TILE) {
            for bq in (bp..n).step_by(JACOBI_TILE) {
                for p in bp..(bp + JACOBI_TILE).min(n) {
                    for q in bq.max(p + 1)..(bq + JACOBI_TILE).min(n) {
                        let (head, tail) = a.split_at_mut(q * m);
                        let ap = &mut head[p * m..(p + 1) * m];
                        let aq = &mut tail[..m];
                        let (alpha, beta) = (sq[p], sq[q]);
                        if alpha == 0.0 || beta == 0.0 {
                            continue;
                        }
                        let gamma = dot(ap, aq);
                        if gamma.abs() <= tol * (alpha * beta).sqrt() {
                            continue;
                        }
                        rotated = true;
                        let zeta = (beta - alpha) / (2.0 * gamma);
                        let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                        let c = 1.0 / (1.0 + t * t).sqrt();
                        let s = c * t;
                        rotate(ap, aq, c, s);
                        let (vh, vtail) = v.split_at_mut(q * n);
                        rotate(&mut vh[p * n..(p + 1) * n], &mut vtail[..n], c, s);
                        // Closed-form update; recompute when cancellation eats it.
                        let (na, nb) = (alpha - t * gamma, beta + t * gamma);
                        sq[p] = if na > 1e-3 * alpha { na } else { dot(ap, ap) };
                        sq[q] = if nb > 1e-3 * beta { nb } else { dot(aq, aq) };
                    }
                }
            }
        }
        converged = !rotated;
    }
    Ok(v)
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc
        .remainder()
        .iter()
        .zip(yc.remainder())
        .map(|(a, b)| a * b)
        .sum();
    for (a, b) in xc.zip(yc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the slots listed in `missing` with unit vectors orthogonal to every
/// other column (exactly-zero singular values leave no left vector behind).
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize], m: usize) {
    let mut candidate = 0;
    for &k in missing {
        loop {
            assert!(candidate < m, "ran out of basis candidates");
            let mut w = vec![0.0; m];
            w[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for (idx, c) in cols.iter().enumerate() {
                    if idx == k || c.is_empty() {
                        continue;
                    }
                    let d: f64 = c.iter().zip(&w).map(|(a, b)| a * b).sum();
                    for (wi, ci) in w.iter_mut().zip(c) {
                        *wi -= d * ci;
                    }
                }
            }
            let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 0.5 {
                cols[k] = w.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn orth_err_cols(u: &Matrix) -> f64 {
        let g = u.t_matmul(u).unwrap();
        g.sub(&Matrix::identity(g.rows())).unwrap().frobenius_norm()
    }

    fn check(g: &Matrix) {
        let s = svd_exact(g).unwrap();
        let r = g.rows().min(g.cols());
        assert_eq!(s.u.shape(), (g.rows(), r));
        assert_eq!(s.vt.shape(), (r, g.cols()));
        assert!(orth_err_cols(&s.u) <= 1e-10, "U not orthonormal");
        assert!(
            orth_err_cols(&s.vt.transpose()) <= 1e-10,
            "V not orthonormal"
        );
        for w in s.sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(s.sigma.iter().all(|&x| x >= 0.0));
        let err = s.reconstruct().sub(g).unwrap().frobenius_norm();
        assert!(
            err <= 1e-8 * g.frobenius_norm().max(f64::MIN_POSITIVE),
            "recon {err}"
        );
    }

    #[test]
    fn diagonal() {
        let s = svd_exact(&Matrix::diag(&[2.0, 5.0])).unwrap();
        assert!((s.sigma[0] - 5.0).abs() < 1e-14);
        assert!((s.sigma[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one() {
        let mut rng = Rng::new(3);
        let mut u = Matrix::random_normal(4, 1, 1.0, &mut rng);
        let mut v = Matrix::random_normal(1, 3, 1.0, &mut rng);
        u.scale_in_place(1.0 / u.frobenius_norm());
        v.scale_in_place(1.0 / v.frobenius_norm());
        let g = u.matmul(&v).unwrap();
        let s = svd_exact(&g).unwrap();
        assert!((s.sigma[0] - 1.0).abs() < 1e-12);
        assert!(s.sigma[1].abs() < 1e-12);
        check(&g);
    }

    #[test]
    fn zero_matrix() {
        let g = Matrix::zeros(3, 2);
        let s = svd_exact(&g).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert!(orth_err_cols(&s.u) <= 1e-12);
    }

    #[test]
    fn random_six_by_four_reconstructs() {
        let mut rng = Rng::new(8);
        check(&Matrix::random_normal(6, 4, 1.0, &mut rng));
        check(&Matrix::random_normal(4, 6, 1.0, &mut rng));
    }

    #[test]
    fn round_trip_over_many_shapes() {
        let mut rng = Rng::new(2024);
        for _ in 0..500 {
            let m = 1 + rng.below(16);
            let n = 1 + rng.below(16);
            check(&Matrix::random_normal(m, n, 1.0, &mut rng));
        }
    }

    #[test]
    fn duplicated_columns() {
        let g = Matrix::from_rows(&[[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        check(&g);
    }
}
