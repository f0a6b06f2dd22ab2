//! Reference SRB densities from a large truncated Fourier-Galerkin operator.
//!
//! The operator is never materialized. One application takes a coefficient
//! matrix `W` over the real tensor modes, evaluates the series at the cached
//! preimages of a fine quadrature grid, divides by the cached Jacobian
//! determinants and projects back onto the same modes. Projection uses the
//! separable real DFT in matrix form, `Pᵀ G P / n`, which on a uniform grid
//! coincides with FFT-then-truncate.

use std::f64::consts::{SQRT_2, TAU};

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::basis::{mode_list, Mode};
use super::TransferQuadrature;
use crate::dynamics::StatePoint;
use crate::error::{Error, Result};
use crate::function_space::{FieldSample, Grid};

const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrbOptions {
    /// Real modes per coordinate; 100 spans the same space as 100 complex modes.
    pub modes_per_side: usize,
    pub quad_per_side: usize,
    pub analysis_per_side: usize,
    pub max_iter: usize,
    /// Relative eigenvalue change required for convergence.
    pub tol: f64,
}

impl Default for SrbOptions {
    fn default() -> Self {
        SrbOptions {
            modes_per_side: 100,
            quad_per_side: 400,
            analysis_per_side: 100,
            max_iter: 5000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SRBGroundTruth {
    /// Unit discrete `L¹` norm, positive mean.
    pub density: FieldSample,
    /// Series coefficients scaled consistently with `density`.
    pub coeffs: Array2<f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub options: SrbOptions,
}

impl SRBGroundTruth {
    /// Evaluate the truncated series at arbitrary torus points.
    pub fn eval_points(&self, points: &[StatePoint]) -> Result<Array1<f64>> {
        let modes = mode_list(self.options.modes_per_side)?;
        eval_series(&modes, &self.coeffs, points)
    }
}

/// Normalized values of every mode at `s`, by complex recurrence.
fn mode_row(modes: &[Mode], s: f64, out: &mut [f64]) {
    let step = Complex64::from_polar(1.0, TAU * s);
    let top = modes.iter().map(|m| m.frequency()).max().unwrap_or(0);
    let mut powers = Vec::with_capacity(top + 1);
    let mut z = Complex64::new(1.0, 0.0);
    for k in 0..=top {
        powers.push(z);
        // refresh from the exact value periodically to bound drift
        z = if (k + 1) % 16 == 0 {
            Complex64::from_polar(1.0, TAU * s * (k + 1) as f64)
        } else {
            z * step
        };
    }
    for (v, m) in out.iter_mut().zip(modes) {
        *v = match *m {
            Mode::Const => 1.0,
            Mode::Cos(k) => SQRT_2 * powers[k].re,
            Mode::Sin(k) => SQRT_2 * powers[k].im,
        };
    }
}

fn mode_table(modes: &[Mode], coords: impl Iterator<Item = f64>, n: usize) -> Array2<f64> {
    let mut t = Array2::zeros((n, modes.len()));
    for (mut row, s) in t.axis_iter_mut(Axis(0)).zip(coords) {
        mode_row(modes, s, row.as_slice_mut().expect("standard layout"));
    }
    t
}

/// `f(p) = Σ_ab W_ab m_a(x) m_b(y)` at each point.
fn eval_series(modes: &[Mode], w: &Array2<f64>, points: &[StatePoint]) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(points.len());
    out.as_slice_mut()
        .expect("contiguous")
        .par_chunks_mut(EVAL_CHUNK)
        .zip(points.par_chunks(EVAL_CHUNK))
        .try_for_each(|(dst, pts)| -> Result<()> {
            let mut xs = Vec::with_capacity(pts.len());
            let mut ys = Vec::with_capacity(pts.len());
            for p in pts {
                let (x, y) = p.as_torus().ok_or_else(|| Error::invalid("series needs torus points"))?;
                xs.push(x);
                ys.push(y);
            }
            let bx = mode_table(modes, xs.into_iter(), pts.len());
            let by = mode_table(modes, ys.into_iter(), pts.len());
            let t = bx.dot(w);
            for (i, d) in dst.iter_mut().enumerate() {
                *d = t.row(i).dot(&by.row(i));
            }
            Ok(())
        })?;
    Ok(out)
}

/// Matrix-free truncated transfer operator on real tensor Fourier modes.
pub struct GroundTruthOperator<'q> {
    quad: &'q TransferQuadrature,
    modes: Vec<Mode>,
    /// `m_q × d` mode values on the quadrature grid, one coordinate.
    projector: Array2<f64>,
}

impl<'q> GroundTruthOperator<'q> {
    pub fn new(quad: &'q TransferQuadrature, modes_per_side: usize) -> Result<Self> {
        if !quad.map.is_torus() {
            return Err(Error::invalid("ground-truth SRB needs a torus map"));
        }
        let mq = quad.grid.points_per_side();
        if mq < 2 * modes_per_side {
            return Err(Error::invalid(format!(
                "quadrature grid {mq} too coarse for {modes_per_side} modes per side"
            )));
        }
        let modes = mode_list(modes_per_side)?;
        let projector = mode_table(&modes, (0..mq).map(|i| i as f64 / mq as f64), mq);
        Ok(GroundTruthOperator { quad, modes, projector })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// One application of the truncated operator to a coefficient matrix.
    pub fn apply(&self, w: &Array2<f64>) -> Result<Array2<f64>> {
        let d = self.modes.len();
        if w.dim() != (d, d) {
            return Err(Error::invalid(format!("coefficient matrix must be {d}×{d}")));
        }
        let mut vals = eval_series(&self.modes, w, &self.quad.orbits.points)?;
        vals.iter_mut()
            .zip(&self.quad.orbits.weights)
            .for_each(|(v, wt)| *v /= wt);
        let mq = self.quad.grid.points_per_side();
        let g = vals.into_shape_with_order((mq, mq)).expect("square grid");
        let p = &self.projector;
        let out = p.t().dot(&g).dot(p) / (mq * mq) as f64;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ground-truth operator application"));
        }
        Ok(out)
    }

    /// Mass functional: the constant-mode coefficient.
    pub fn mass(w: &Array2<f64>) -> f64 {
        w[[0, 0]]
    }

    /// Leading eigenvector by power iteration from the constant density.
    pub fn leading(&self, options: &SrbOptions) -> Result<(Array2<f64>, f64, usize)> {
        let d = self.modes.len();
        let mut w = Array2::zeros((d, d));
        w[[0, 0]] = 1.0;
        let mut lambda = f64::NAN;
        let mut last_change = f64::INFINITY;
        for it in 1..=options.max_iter {
            let next = self.apply(&w)?;
            let new_lambda = frob_dot(&w, &next) / frob_dot(&w, &w);
            let norm = frob_dot(&next, &next).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroDenominator);
            }
            let sign = if next[[0, 0]] < 0.0 { -1.0 } else { 1.0 };
            let next = next * (sign / norm);
            let vec_change = (&next - &w).mapv(f64::abs).fold(0.0f64, |a, &v| a.max(v));
            let val_change = ((new_lambda - lambda) / new_lambda).abs();
            w = next;
            lambda = new_lambda;
            last_change = val_change;
            if val_change <= options.tol && vec_change <= options.tol.sqrt() * 1e-2 {
                return Ok((w, lambda, it));
            }
        }
        Err(Error::PowerIterationStall {
            iterations: options.max_iter,
            change: last_change,
        })
    }

    /// Series values on a uniform analysis grid: `P_a W P_aᵀ`, row-major.
    pub fn synthesize(&self, w: &Array2<f64>, per_side: usize) -> Array1<f64> {
        let pa = mode_table(&self.modes, (0..per_side).map(|i| i as f64 / per_side as f64), per_side);
        let s = pa.dot(w).dot(&pa.t());
        Array1::from_iter(s.iter().copied())
    }
}

fn frob_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Leading invariant density of `quad.map` on the analysis grid.
pub fn ground_truth_srb(quad: &TransferQuadrature, options: SrbOptions) -> Result<SRBGroundTruth> {
    if quad.grid.points_per_side() != options.quad_per_side {
        return Err(Error::GridMismatch {
            left: quad.grid.points_per_side(),
            right: options.quad_per_side,
        });
    }
    let op = GroundTruthOperator::new(quad, options.modes_per_side)?;
    let (w, eigenvalue, iterations) = op.leading(&options)?;
    let grid = Grid::new(2, options.analysis_per_side)?;
    let values = op.synthesize(&w, options.analysis_per_side);
    let mean: f64 = values.mean().unwrap_or(0.0);
    let l1 = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    if l1 == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let scale = mean.signum() / l1;
    let density = grid.field(values * scale)?;
    Ok(SRBGroundTruth {
        density,
        coeffs: w * scale,
        eigenvalue,
        iterations,
        options,
    })
}

/// Coefficient matrix of the constant density, for mass checks.
pub fn constant_coeffs(modes_per_side: usize) -> Array2<f64> {
    let mut w = Array2::zeros((modes_per_side, modes_per_side));
    w[[0, 0]] = 1.0;
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recurrence_matches_direct_evaluation() {
        let modes = mode_list(100).unwrap();
        let mut row = vec![0.0; 100];
        for s in [0.0, 0.1234567, 0.5, 0.987654321] {
            mode_row(&modes, s, &mut row);
            for (v, m) in row.iter().zip(&modes) {
                assert!((v - m.eval(s)).abs() < 1e-12, "{m:?} at {s}");
            }
        }
    }

    #[test]
    fn series_evaluation_matches_synthesis() {
        let modes = mode_list(6).unwrap();
        let w = Array2::from_shape_fn((6, 6), |(a, b)| ((a * 7 + b * 3) % 5) as f64 - 2.0);
        let pts = vec![StatePoint::torus(0.3, 0.9), StatePoint::torus(0.05, 0.5)];
        let vals = eval_series(&modes, &w, &pts).unwrap();
        for (p, v) in pts.iter().zip(vals.iter()) {
            let (x, y) = p.as_torus().unwrap();
            let mut naive = 0.0;
            for a in 0..6 {
                for b in 0..6 {
                    naive += w[[a, b]] * modes[a].eval(x) * modes[b].eval(y);
                }
            }
            assert!((naive - v).abs() < 1e-12);
        }
    }
}
