//! Fourier-Galerkin reference pipeline: basis construction, Galerkin
//! restriction of the true transfer operator, reference SRB densities and
//! the projection / approximation error metrics used to compare bases.

pub mod basis;
pub mod srb;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::MapDescriptor;
use crate::error::{Error, Result};
use crate::function_space::{discrete_norms, FieldSample, Grid, InverseOrbits};
use crate::spectral::eigen::to_nalgebra;
use crate::spectral::{eig_real, gram_matrix, sobolev, solve_eigenpairs, BasisMatrix};

pub use basis::{mode_list, BasisSet, FourierBasis, Mode};
pub use srb::{ground_truth_srb, GroundTruthOperator, SRBGroundTruth, SrbOptions};

/// Largest Gram condition number accepted before a solve.
pub const MAX_GRAM_CONDITION: f64 = 1e8;
const JITTER: f64 = 1e-12;
const ASSEMBLY_BLOCKS: usize = 16;

/// Uniform quadrature grid together with its cached one-step preimages and
/// Jacobian determinants. Newton inversion dominates setup, so build once
/// per map and share.
#[derive(Debug, Clone)]
pub struct TransferQuadrature {
    pub map: MapDescriptor,
    pub grid: Grid,
    pub orbits: InverseOrbits,
}

impl TransferQuadrature {
    pub fn new(map: &MapDescriptor, per_side: usize) -> Result<Self> {
        map.validate()?;
        let grid = Grid::new(map.dim(), per_side)?;
        let orbits = InverseOrbits::compute(map, &grid.points, 1)?;
        Ok(TransferQuadrature {
            map: map.clone(),
            grid,
            orbits,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinOperator {
    /// `L_B`, acting on coefficient vectors.
    pub matrix: Array2<f64>,
    /// Raw `B_kj = ⟨ℒφ_j, φ_k⟩`.
    pub stiffness: Array2<f64>,
    /// Gram matrix on the quadrature grid, when it was needed.
    pub gram: Option<Array2<f64>>,
}

/// Condition number of a symmetric matrix from its eigenvalues.
pub fn symmetric_condition(m: &Array2<f64>) -> f64 {
    let eig = SymmetricEigen::new(to_nalgebra(m));
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn checked_cholesky(m: &Array2<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let condition = symmetric_condition(m);
    if condition > MAX_GRAM_CONDITION {
        return Err(Error::IllConditionedGram { condition });
    }
    jittered_cholesky(m)
}

fn jittered_cholesky(m: &Array2<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let a = to_nalgebra(m);
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    Cholesky::new(a + DMatrix::identity(m.nrows(), m.ncols()) * (JITTER * scale))
        .ok_or_else(|| Error::SolverFailure("Gram matrix is not positive definite".into()))
}

fn solve_columns(chol: &Cholesky<f64, nalgebra::Dyn>, rhs: &Array2<f64>) -> Array2<f64> {
    let x = chol.solve(&to_nalgebra(rhs));
    Array2::from_shape_fn(rhs.dim(), |(i, j)| x[(i, j)])
}

fn solve_vector(chol: &Cholesky<f64, nalgebra::Dyn>, rhs: &Array1<f64>) -> Array1<f64> {
    let x = chol.solve(&DVector::from_iterator(rhs.len(), rhs.iter().copied()));
    Array1::from_iter(x.iter().copied())
}

/// Galerkin restriction of the transfer operator to `basis`, by quadrature
/// at the cached preimages: `B_kj = (1/n) Σ_i φ_k(x_i) φ_j(T⁻¹x_i) / w_i`.
pub fn galerkin_operator(quad: &TransferQuadrature, basis: &dyn BasisSet) -> Result<GalerkinOperator> {
    if basis.dim() != quad.map.dim() {
        return Err(Error::invalid("basis and map dimensions differ"));
    }
    let m = quad.grid.points_per_side();
    if let Some(k) = basis.max_frequency() {
        if m < 4 * k.max(1) {
            return Err(Error::invalid(format!(
                "quadrature grid {m} too coarse for basis frequency {k}"
            )));
        }
    }
    let n = quad.grid.len();
    let nb = basis.len();
    let orthonormal = basis.is_orthonormal();
    let block = n.div_ceil(ASSEMBLY_BLOCKS);
    let partials: Vec<(Array2<f64>, Option<Array2<f64>>)> = (0..n)
        .step_by(block)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| -> Result<_> {
            let end = (start + block).min(n);
            let phi = basis.eval_points(&quad.grid.points[start..end])?;
            let mut moved = basis.eval_points(&quad.orbits.points[start..end])?;
            for (mut row, w) in moved.axis_iter_mut(Axis(0)).zip(&quad.orbits.weights[start..end]) {
                row /= *w;
            }
            let b = phi.t().dot(&moved);
            let g = (!orthonormal).then(|| phi.t().dot(&phi));
            Ok((b, g))
        })
        .collect::<Result<_>>()?;
    let mut stiffness = Array2::<f64>::zeros((nb, nb));
    let mut gram = (!orthonormal).then(|| Array2::<f64>::zeros((nb, nb)));
    for (b, g) in partials {
        stiffness += &b;
        if let (Some(acc), Some(g)) = (gram.as_mut(), g) {
            *acc += &g;
        }
    }
    stiffness /= n as f64;
    if stiffness.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Galerkin matrix"));
    }
    let matrix = match gram.as_mut() {
        None => stiffness.clone(),
        Some(g) => {
            *g /= n as f64;
            let sym = (&*g + &g.t()) * 0.5;
            *g = sym;
            solve_columns(&checked_cholesky(g)?, &stiffness)
        }
    };
    Ok(GalerkinOperator {
        matrix,
        stiffness,
        gram,
    })
}

fn l1_normalize(values: Array1<f64>) -> Result<Array1<f64>> {
    let norms = discrete_norms(values.view());
    if norms.l1 == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let mean = values.mean().unwrap_or(0.0);
    let sign = if mean < 0.0 { -1.0 } else { 1.0 };
    Ok(values * (sign / norms.l1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeErrors {
    pub l2: f64,
    pub h_minus_one: f64,
}

/// Weighted real Fourier features: rows `√w_k Re f̂_k` then `√w_k Im f̂_k`.
fn h_minus_one_features(grid: &Grid, column: ArrayView1<f64>, sqrt_w: &Array1<f64>) -> Result<Array1<f64>> {
    let c = sobolev::real_fourier_coefficients(grid.spec, column)?;
    let n = c.len();
    let mut out = Array1::zeros(2 * n);
    for (k, (z, s)) in c.iter().zip(sqrt_w.iter()).enumerate() {
        out[k] = s * z.re;
        out[n + k] = s * z.im;
    }
    Ok(out)
}

/// Relative `L²` and `H⁻¹` errors of the best approximation of `mu` from
/// the span of the sampled basis, each orthogonal in its own norm.
pub fn projection_errors(mu: &FieldSample, grid: &Grid, basis: &BasisMatrix) -> Result<RelativeErrors> {
    if mu.grid != grid.spec || basis.nrows() != grid.len() {
        return Err(Error::GridMismatch {
            left: basis.nrows(),
            right: mu.len(),
        });
    }
    let n = grid.len() as f64;
    let mu_v = &mu.values;

    let chol = checked_cholesky(&gram_matrix(basis))?;
    let rhs = basis.t().dot(mu_v) / n;
    let coeffs = solve_vector(&chol, &rhs);
    let resid = mu_v - &basis.dot(&coeffs);
    let l2 = discrete_norms(resid.view()).l2 / discrete_norms(mu_v.view()).l2;

    let sqrt_w = sobolev::h_minus_one_weights(grid.spec).mapv(f64::sqrt);
    let columns: Vec<Array1<f64>> = basis
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|c| h_minus_one_features(grid, c, &sqrt_w))
        .collect::<Result<_>>()?;
    let feats = ndarray::stack(Axis(1), &columns.iter().map(|c| c.view()).collect::<Vec<_>>())
        .map_err(|e| Error::SolverFailure(e.to_string()))?;
    let target = h_minus_one_features(grid, mu_v.view(), &sqrt_w)?;
    let hgram = feats.t().dot(&feats);
    let hgram = (&hgram + &hgram.t()) * 0.5;
    let hcoeffs = solve_vector(&jittered_cholesky(&hgram)?, &feats.t().dot(&target));
    let hresid = &target - &feats.dot(&hcoeffs);
    let h_minus_one = hresid.dot(&hresid).sqrt() / target.dot(&target).sqrt();
    Ok(RelativeErrors { l2, h_minus_one })
}

/// Relative `L²` and `H⁻¹` distance between two densities on one grid.
pub fn relative_errors(reference: &FieldSample, estimate: &FieldSample) -> Result<RelativeErrors> {
    if reference.grid != estimate.grid {
        return Err(Error::GridMismatch {
            left: reference.len(),
            right: estimate.len(),
        });
    }
    let diff = &reference.values - &estimate.values;
    let l2 = discrete_norms(diff.view()).l2 / reference.norms().l2;
    let h_minus_one = sobolev::h_minus_one_norm_values(reference.grid, diff.view())?
        / sobolev::h_minus_one_norm(reference)?;
    Ok(RelativeErrors { l2, h_minus_one })
}

/// Leading eigenvector of `L_B`, synthesized on the analysis grid with unit
/// `L¹` norm and positive mean, and its leading eigenvalue.
pub fn galerkin_density(
    op: &GalerkinOperator,
    grid: &Grid,
    sampled: &BasisMatrix,
) -> Result<(FieldSample, Complex64)> {
    let pairs = eig_real(&op.matrix)?;
    let lead = pairs
        .first()
        .ok_or_else(|| Error::SolverFailure("empty Galerkin spectrum".into()))?;
    let xi = lead.vector.mapv(|z| z.re);
    let density = grid.field(l1_normalize(sampled.dot(&xi))?)?;
    Ok((density, lead.value))
}

/// Invariant density of a learned operator: the leading eigenvector of
/// `G M` with `M` the Gram matrix of `sampled`.
pub fn learned_density(latent: &Array2<f64>, grid: &Grid, sampled: &BasisMatrix) -> Result<(FieldSample, Complex64)> {
    let pairs = solve_eigenpairs(latent, &gram_matrix(sampled))?;
    let lead = pairs
        .first()
        .ok_or_else(|| Error::SolverFailure("empty learned spectrum".into()))?;
    let xi = lead.vector.mapv(|z| z.re);
    let density = grid.field(l1_normalize(sampled.dot(&xi))?)?;
    Ok((density, lead.value))
}

/// Error row for a learned basis and its own latent operator.
pub fn learned_error_row(
    label: &str,
    mu: &FieldSample,
    grid: &Grid,
    sampled: &BasisMatrix,
    latent: &Array2<f64>,
) -> Result<(ErrorRow, Complex64)> {
    let projection = projection_errors(mu, grid, sampled)?;
    let (density, value) = learned_density(latent, grid, sampled)?;
    let row = ErrorRow {
        label: label.to_string(),
        projection,
        approximation: relative_errors(mu, &density)?,
    };
    Ok((row, value))
}

/// Errors of the basis's own invariant density against the reference.
pub fn approximation_errors(
    mu: &FieldSample,
    quad: &TransferQuadrature,
    grid: &Grid,
    basis: &dyn BasisSet,
) -> Result<(RelativeErrors, FieldSample, Complex64)> {
    let op = galerkin_operator(quad, basis)?;
    let sampled = basis.sample(grid)?;
    let (density, value) = galerkin_density(&op, grid, &sampled)?;
    Ok((relative_errors(mu, &density)?, density, value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub label: String,
    pub projection: RelativeErrors,
    pub approximation: RelativeErrors,
}

/// Rows in the layout basis, L² proj, H⁻¹ proj, L² approx, H⁻¹ approx.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub const HEADER: &'static str = "basis,l2_projection,hm1_projection,l2_approximation,hm1_approximation";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                r.label, r.projection.l2, r.projection.h_minus_one, r.approximation.l2, r.approximation.h_minus_one
            ));
        }
        out
    }
}

/// Full error row for one basis against a reference density.
pub fn error_row(
    label: &str,
    mu: &FieldSample,
    quad: &TransferQuadrature,
    grid: &Grid,
    basis: &dyn BasisSet,
) -> Result<ErrorRow> {
    let sampled = basis.sample(grid)?;
    let projection = projection_errors(mu, grid, &sampled)?;
    let (approximation, _, _) = approximation_errors(mu, quad, grid, basis)?;
    Ok(ErrorRow {
        label: label.to_string(),
        projection,
        approximation,
    })
}
