//! Dense eigen-decomposition of real nonsymmetric matrices.
//!
//! The real Schur form `A = Q T Qᵀ` comes from nalgebra; eigenvectors are
//! recovered by back-substitution on the quasi-triangular `T`, one diagonal
//! block at a time. Complex eigenvalues of a 2×2 block are emitted as exact
//! conjugate pairs with conjugate eigenvectors.

use nalgebra::{DMatrix, Schur};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub value: Complex64,
    /// Unit 2-norm; the largest-magnitude entry is real and positive.
    pub vector: Array1<Complex64>,
}

pub(crate) fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

/// All eigenpairs of a real square matrix, sorted by descending `|λ|`, then
/// descending real part, then descending imaginary part.
pub fn eig_real(a: &Array2<f64>) -> Result<Vec<EigenDecomposition>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("eigenproblem needs a square matrix"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("matrix has non-finite entries".into()));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let schur = Schur::try_new(to_nalgebra(a), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::SolverFailure(format!(
            "real Schur iteration did not converge (n = {n}, max |a_ij| = {scale:e})"
        ))
    })?;
    let (q, t) = schur.unpack();

    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (p, r, s, u) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half_tr = 0.5 * (p + u);
            let disc = 0.25 * (p - u) * (p - u) + r * s;
            if disc < 0.0 {
                let lambda = Complex64::new(half_tr, (-disc).sqrt());
                let v = block_eigenvector(&q, &t, i, 2, lambda);
                out.push(EigenDecomposition {
                    value: lambda.conj(),
                    vector: normalize(v.mapv(|z| z.conj())),
                });
                out.push(EigenDecomposition {
                    value: lambda,
                    vector: normalize(v),
                });
            } else {
                for lambda in [half_tr + disc.sqrt(), half_tr - disc.sqrt()] {
                    let lambda = Complex64::new(lambda, 0.0);
                    let v = block_eigenvector(&q, &t, i, 2, lambda);
                    out.push(EigenDecomposition {
                        value: lambda,
                        vector: normalize(v),
                    });
                }
            }
            i += 2;
        } else {
            let lambda = Complex64::new(t[(i, i)], 0.0);
            let v = block_eigenvector(&q, &t, i, 1, lambda);
            out.push(EigenDecomposition {
                value: lambda,
                vector: normalize(v),
            });
            i += 1;
        }
    }
    if out.iter().any(|e| !e.value.is_finite() || e.vector.iter().any(|z| !z.is_finite())) {
        return Err(Error::SolverFailure("non-finite eigenpair".into()));
    }
    sort_spectrum(&mut out);
    Ok(out)
}

pub(crate) fn sort_spectrum(pairs: &mut [EigenDecomposition]) {
    pairs.sort_by(|x, y| {
        y.value
            .norm()
            .total_cmp(&x.value.norm())
            .then(y.value.re.total_cmp(&x.value.re))
            .then(y.value.im.total_cmp(&x.value.im))
    });
}

/// Diagonal blocks of the quasi-triangular factor as `(start, size)`.
fn blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

fn block_eigenvector(
    q: &DMatrix<f64>,
    t: &DMatrix<f64>,
    start: usize,
    size: usize,
    lambda: Complex64,
) -> Array1<Complex64> {
    let n = t.nrows();
    let c = |i: usize, j: usize| Complex64::new(t[(i, j)], 0.0);
    let tiny = f64::EPSILON * t.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut y = vec![Complex64::new(0.0, 0.0); n];

    if size == 1 {
        y[start] = Complex64::new(1.0, 0.0);
    } else {
        // null vector of the 2×2 block minus λ, using the better-scaled row
        let (p, r, s, u) = (c(start, start), c(start, start + 1), c(start + 1, start), c(start + 1, start + 1));
        let v1 = (r, lambda - p);
        let v2 = (lambda - u, s);
        let (a, b) = if v1.0.norm() + v1.1.norm() >= v2.0.norm() + v2.1.norm() { v1 } else { v2 };
        y[start] = a;
        y[start + 1] = b;
    }

    let block_list = blocks(t);
    for &(bs, bsize) in block_list.iter().rev().filter(|(bs, _)| *bs < start) {
        let end = bs + bsize;
        let rhs = |row: usize| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in end..n {
                acc += c(row, j) * y[j];
            }
            -acc
        };
        if bsize == 1 {
            let mut d = c(bs, bs) - lambda;
            if d.norm() < tiny {
                d = Complex64::new(tiny, 0.0);
            }
            y[bs] = rhs(bs) / d;
        } else {
            let a11 = c(bs, bs) - lambda;
            let a12 = c(bs, bs + 1);
            let a21 = c(bs + 1, bs);
            let a22 = c(bs + 1, bs + 1) - lambda;
            let (r1, r2) = (rhs(bs), rhs(bs + 1));
            let mut det = a11 * a22 - a12 * a21;
            if det.norm() < tiny {
                det = Complex64::new(tiny, 0.0);
            }
            y[bs] = (r1 * a22 - a12 * r2) / det;
            y[bs + 1] = (a11 * r2 - a21 * r1) / det;
        }
        // rescale to avoid overflow for nearly-defective spectra
        let big = y.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if big > 1e100 {
            y.iter_mut().for_each(|z| *z /= big);
        }
    }

    let mut x = Array1::from_elem(n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, yj) in y.iter().enumerate() {
            if *yj != Complex64::new(0.0, 0.0) {
                acc += yj * q[(i, j)];
            }
        }
        x[i] = acc;
    }
    x
}

/// Scale to unit 2-norm and rotate so the largest-magnitude entry is real
/// and positive.
pub fn normalize(v: Array1<Complex64>) -> Array1<Complex64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    let (_, pivot) = v
        .iter()
        .enumerate()
        .fold((0.0, Complex64::new(1.0, 0.0)), |(best, p), (_, z)| {
            if z.norm() > best + 1e-12 * norm {
                (z.norm(), *z)
            } else {
                (best, p)
            }
        });
    let phase = pivot.conj() / pivot.norm();
    v.mapv(|z| z * phase / norm)
}
