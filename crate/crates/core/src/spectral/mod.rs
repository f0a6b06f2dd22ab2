//! Spectral analysis of a learned coefficient-space operator.
//!
//! With a (not necessarily orthonormal) basis sampled as the columns of an
//! `n × N` matrix `Φ`, Gram matrix `M = ΦᵀΦ/n` and latent map `G`, the
//! learned operator acts on the coefficient vector `ξ` of `Σ ξⱼ φⱼ` as
//! `ξ ↦ G M ξ`. Its eigenpairs give eigenfunctions `ψ = Φ ξ`.

pub mod eigen;
pub mod sobolev;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{MapDescriptor, StatePoint};
use crate::error::{Error, Result};
use crate::function_space::{Grid, GridSpec, InverseOrbits};

pub use eigen::{eig_real, EigenDecomposition};

/// `n × N` matrix whose columns are basis functions sampled on a grid.
pub type BasisMatrix = Array2<f64>;

const DEGENERATE_COLUMN: f64 = 1e-10;

/// `M = ΦᵀΦ / n`.
pub fn gram_matrix(basis: &BasisMatrix) -> Array2<f64> {
    let n = basis.nrows() as f64;
    let mut m = basis.t().dot(basis) / n;
    // symmetrize away rounding asymmetry from the blocked product
    let mt = m.t().to_owned();
    m = (&m + &mt) * 0.5;
    m
}

/// Divide each column by its discrete `L²` norm. Returns the normalized
/// basis and the per-column scales.
pub fn normalize_basis(basis: &BasisMatrix) -> Result<(BasisMatrix, Array1<f64>)> {
    let n = basis.nrows() as f64;
    let scales: Array1<f64> = basis
        .axis_iter(Axis(1))
        .map(|c| (c.dot(&c) / n).sqrt())
        .collect();
    if let Some((column, &norm)) = scales.iter().enumerate().find(|(_, s)| **s < DEGENERATE_COLUMN) {
        return Err(Error::DegenerateBasis { column, norm });
    }
    let mut out = basis.clone();
    for (mut col, s) in out.axis_iter_mut(Axis(1)).zip(scales.iter()) {
        col /= *s;
    }
    Ok((out, scales))
}

/// Gram matrix of the `L²`-normalized basis.
pub fn normalized_gram(basis: &BasisMatrix) -> Result<Array2<f64>> {
    let (nb, _) = normalize_basis(basis)?;
    Ok(gram_matrix(&nb))
}

/// Largest off-diagonal magnitude of a square matrix.
pub fn max_off_diagonal(m: &Array2<f64>) -> f64 {
    let mut best = 0.0f64;
    for ((i, j), v) in m.indexed_iter() {
        if i != j {
            best = best.max(v.abs());
        }
    }
    best
}

/// Eigenpairs of `G M`, sorted by descending modulus.
pub fn solve_eigenpairs(latent: &Array2<f64>, gram: &Array2<f64>) -> Result<Vec<EigenDecomposition>> {
    if latent.dim() != gram.dim() || latent.nrows() != latent.ncols() {
        return Err(Error::invalid(format!(
            "latent map {:?} and Gram matrix {:?} must be equal square shapes",
            latent.dim(),
            gram.dim()
        )));
    }
    eig_real(&latent.dot(gram))
}

/// Complex field `Σ ξⱼ φⱼ` on the basis grid.
pub fn reconstruct_eigenfunction(basis: &BasisMatrix, xi: ArrayView1<Complex64>) -> Array1<Complex64> {
    assert_eq!(basis.ncols(), xi.len(), "coefficient length must equal basis size");
    let re = basis.dot(&xi.mapv(|z| z.re));
    let im = basis.dot(&xi.mapv(|z| z.im));
    re.iter()
        .zip(im.iter())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect()
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    pub coeffs: Array1<Complex64>,
    pub field: Array1<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDiagnostics {
    pub h_minus_one: f64,
    pub l2: f64,
    /// `‖ψ‖_{H⁻¹} / ‖ψ‖_{L²}`.
    pub ratio: f64,
    /// `‖ℒψ − λψ‖₂ / ‖ψ‖₂` with `ℒ` the true transfer operator.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub pairs: Vec<EigenPair>,
    pub diagnostics: Vec<PairDiagnostics>,
}

/// Solve the eigenproblem and reconstruct every eigenfunction on the grid.
pub fn eigenpairs_with_fields(
    latent: &Array2<f64>,
    basis: &BasisMatrix,
) -> Result<Vec<EigenPair>> {
    let gram = gram_matrix(basis);
    Ok(solve_eigenpairs(latent, &gram)?
        .into_iter()
        .map(|e| EigenPair {
            value: e.value,
            field: reconstruct_eigenfunction(basis, e.vector.view()),
            coeffs: e.vector,
        })
        .collect())
}

/// Periodic (bi)linear interpolation of grid values at an arbitrary point.
pub fn interpolate_periodic(spec: GridSpec, values: ArrayView1<Complex64>, p: StatePoint) -> Complex64 {
    let m = spec.points_per_side;
    let locate = |s: f64| {
        let pos = s * m as f64;
        let i0 = pos.floor();
        let t = pos - i0;
        let i0 = (i0 as i64).rem_euclid(m as i64) as usize;
        (i0, (i0 + 1) % m, t)
    };
    match p {
        StatePoint::Angle(theta) => {
            let (i0, i1, t) = locate(theta / std::f64::consts::TAU);
            values[i0] * (1.0 - t) + values[i1] * t
        }
        StatePoint::Torus(x, y) => {
            let (i0, i1, tx) = locate(x);
            let (j0, j1, ty) = locate(y);
            let v = |i: usize, j: usize| values[i * m + j];
            (v(i0, j0) * (1.0 - ty) + v(i0, j1) * ty) * (1.0 - tx)
                + (v(i1, j0) * (1.0 - ty) + v(i1, j1) * ty) * tx
        }
    }
}

/// Heuristic `H⁻¹/L²` ratio and true-dynamics residual for every pair.
pub fn eigen_diagnostics(map: &MapDescriptor, grid: &Grid, pairs: &[EigenPair]) -> Result<SpectralReport> {
    let orbits = InverseOrbits::compute(map, &grid.points, 1)?;
    let weights = sobolev::h_minus_one_weights(grid.spec);
    let n = grid.len() as f64;
    let diagnostics = pairs
        .par_iter()
        .map(|pair| -> Result<PairDiagnostics> {
            let psi = pair.field.view();
            let l2 = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() / n).sqrt();
            let coeffs = sobolev::fourier_coefficients(grid.spec, psi)?;
            let h_minus_one = sobolev::weighted_energy(coeffs.view(), weights.view()).sqrt();
            let mut res = 0.0;
            for (i, (&q, &w)) in orbits.points.iter().zip(&orbits.weights).enumerate() {
                let transported = interpolate_periodic(grid.spec, psi, q) / w;
                res += (transported - pair.value * psi[i]).norm_sqr();
            }
            let residual = (res / n).sqrt() / l2;
            Ok(PairDiagnostics {
                h_minus_one,
                l2,
                ratio: h_minus_one / l2,
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralReport {
        pairs: pairs.to_vec(),
        diagnostics,
    })
}

/// `|⟨u, v⟩| / (‖u‖‖v‖)` for complex fields.
pub fn normalized_correlation(u: ArrayView1<Complex64>, v: ArrayView1<Complex64>) -> f64 {
    let dot: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum();
    let nu = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    dot.norm() / (nu * nv)
}

/// Agreement of a learned spectrum with the exact rotation spectrum
/// `{e^{-imα}}`, whose eigenfunctions are `e^{imθ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCheck {
    pub min_modulus: f64,
    pub max_modulus: f64,
    /// Largest distance (radians, mod 2π) from an argument to the nearest `mα`, `|m| ≤ max_mode`.
    pub max_arg_offset: f64,
    /// Correlation of the eigenfunction nearest `e^{∓iα}` with `e^{±iθ}`.
    pub corr_plus: f64,
    pub corr_minus: f64,
}

fn wrapped_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    r.min(std::f64::consts::TAU - r)
}

/// Compare eigenpairs on a circle grid against a rotation by `alpha`.
pub fn rotation_check(pairs: &[EigenPair], grid: &Grid, alpha: f64, max_mode: i64) -> Result<RotationCheck> {
    if grid.dim() != 1 {
        return Err(Error::invalid("rotation check needs a circle grid"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("no eigenpairs to check"));
    }
    let moduli: Vec<f64> = pairs.iter().map(|p| p.value.norm()).collect();
    let max_arg_offset = pairs
        .iter()
        .map(|p| {
            let arg = p.value.arg();
            (-max_mode..=max_mode)
                .map(|m| wrapped_angle(arg + m as f64 * alpha))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let corr = |m: f64| {
        let target = Complex64::from_polar(1.0, -m * alpha);
        let pair = pairs
            .iter()
            .min_by(|a, b| (a.value - target).norm().total_cmp(&(b.value - target).norm()))
            .expect("nonempty");
        let wave: Array1<Complex64> = grid
            .points
            .iter()
            .map(|p| match *p {
                StatePoint::Angle(t) => Complex64::from_polar(1.0, m * t),
                StatePoint::Torus(..) => unreachable!("circle grid"),
            })
            .collect();
        normalized_correlation(pair.field.view(), wave.view())
    };
    Ok(RotationCheck {
        min_modulus: moduli.iter().copied().fold(f64::INFINITY, f64::min),
        max_modulus: moduli.iter().copied().fold(0.0, f64::max),
        max_arg_offset,
        corr_plus: corr(1.0),
        corr_minus: corr(-1.0),
    })
}
