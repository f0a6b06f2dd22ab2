//! Discrete Fourier coefficients on uniform periodic grids and the
//! negative-order Sobolev norm `‖f‖²_{H⁻¹} = Σ_k (1 + |k|²)⁻¹ |f̂_k|²`.
//!
//! Coefficients are normalized as `f̂_k = (1/n) Σ_j f(x_j) e^{-2πi k·x_j}`, so
//! Parseval reads `‖f‖²_{L²} = Σ_k |f̂_k|²` with the grid-averaged norm.
//! Bin `b` on a side of length `m` carries integer frequency `b` for
//! `b ≤ m/2` and `b − m` above; the Nyquist bin is assigned `+m/2`.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::function_space::{FieldSample, GridSpec};

#[inline]
pub fn folded_frequency(bin: usize, m: usize) -> i64 {
    if bin <= m / 2 {
        bin as i64
    } else {
        bin as i64 - m as i64
    }
}

fn check(spec: GridSpec, len: usize) -> Result<()> {
    if spec.len() != len || spec.points_per_side < 2 {
        return Err(Error::NonUniformGrid);
    }
    Ok(())
}

/// Normalized DFT of a complex field, same row-major layout as the grid.
pub fn fourier_coefficients(spec: GridSpec, values: ArrayView1<Complex64>) -> Result<Array1<Complex64>> {
    check(spec, values.len())?;
    let m = spec.points_per_side;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let mut data: Vec<Complex64> = values.to_vec();
    match spec.dim {
        1 => fft.process(&mut data),
        _ => {
            // rows are contiguous (second coordinate), then columns
            for row in data.chunks_mut(m) {
                fft.process(row);
            }
            let mut column = vec![Complex64::new(0.0, 0.0); m];
            for j in 0..m {
                for i in 0..m {
                    column[i] = data[i * m + j];
                }
                fft.process(&mut column);
                for i in 0..m {
                    data[i * m + j] = column[i];
                }
            }
        }
    }
    let scale = 1.0 / spec.len() as f64;
    Ok(Array1::from_iter(data.into_iter().map(|z| z * scale)))
}

pub fn real_fourier_coefficients(spec: GridSpec, values: ArrayView1<f64>) -> Result<Array1<Complex64>> {
    let complex = values.mapv(|v| Complex64::new(v, 0.0));
    fourier_coefficients(spec, complex.view())
}

/// `(1 + |k|²)⁻¹` for every bin in grid layout.
pub fn h_minus_one_weights(spec: GridSpec) -> Array1<f64> {
    let m = spec.points_per_side;
    match spec.dim {
        1 => Array1::from_shape_fn(m, |b| {
            let k = folded_frequency(b, m) as f64;
            1.0 / (1.0 + k * k)
        }),
        _ => Array1::from_shape_fn(m * m, |idx| {
            let k1 = folded_frequency(idx / m, m) as f64;
            let k2 = folded_frequency(idx % m, m) as f64;
            1.0 / (1.0 + k1 * k1 + k2 * k2)
        }),
    }
}

/// `Σ_k w_k |ĉ_k|²` given already-computed coefficients.
pub fn weighted_energy(coeffs: ArrayView1<Complex64>, weights: ArrayView1<f64>) -> f64 {
    coeffs
        .iter()
        .zip(weights.iter())
        .map(|(c, w)| w * c.norm_sqr())
        .sum()
}

pub fn h_minus_one_norm(u: &FieldSample) -> Result<f64> {
    h_minus_one_norm_values(u.grid, u.values.view())
}

pub fn h_minus_one_norm_values(spec: GridSpec, values: ArrayView1<f64>) -> Result<f64> {
    let c = real_fourier_coefficients(spec, values)?;
    Ok(weighted_energy(c.view(), h_minus_one_weights(spec).view()).sqrt())
}

pub fn h_minus_one_norm_complex(spec: GridSpec, values: ArrayView1<Complex64>) -> Result<f64> {
    let c = fourier_coefficients(spec, values)?;
    Ok(weighted_energy(c.view(), h_minus_one_weights(spec).view()).sqrt())
}

/// `√(Σ |f̂_k|²)`, equal to the grid `L²` norm by Parseval.
pub fn fourier_l2_norm(u: &FieldSample) -> Result<f64> {
    let c = real_fourier_coefficients(u.grid, u.values.view())?;
    Ok(c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StatePoint;
    use crate::function_space::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    #[test]
    fn constant_has_unit_norm() {
        let grid = Grid::new(2, 8).unwrap();
        let one = FieldSample::constant(grid.spec, 1.0);
        assert!((h_minus_one_norm(&one).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_cosine_mode() {
        let grid = Grid::new(2, 16).unwrap();
        let u = grid.sample(|p| {
            let (x, _) = p.as_torus().unwrap();
            (TAU * x).cos()
        });
        assert!((h_minus_one_norm(&u).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn matches_naive_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = Grid::new(2, 4).unwrap();
        for _ in 0..10 {
            let values: Array1<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut naive = 0.0;
            for k1 in -2i64..2 {
                for k2 in -2i64..2 {
                    let mut c = Complex64::new(0.0, 0.0);
                    for (idx, p) in grid.points.iter().enumerate() {
                        let StatePoint::Torus(x, y) = *p else { unreachable!() };
                        c += values[idx]
                            * Complex64::from_polar(1.0, -TAU * (k1 as f64 * x + k2 as f64 * y));
                    }
                    c /= 16.0;
                    naive += c.norm_sqr() / (1.0 + (k1 * k1 + k2 * k2) as f64);
                }
            }
            let fast = h_minus_one_norm_values(grid.spec, values.view()).unwrap();
            assert!((fast - naive.sqrt()).abs() <= 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in [GridSpec::new(1, 100).unwrap(), GridSpec::new(2, 12).unwrap()] {
            let values: Array1<f64> = (0..spec.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u = FieldSample::new(spec, values).unwrap();
            assert!((fourier_l2_norm(&u).unwrap() - u.norms().l2).abs() < 1e-10);
        }
    }

    #[test]
    fn frequency_folding() {
        assert_eq!(folded_frequency(0, 10), 0);
        assert_eq!(folded_frequency(5, 10), 5);
        assert_eq!(folded_frequency(6, 10), -4);
        assert_eq!(folded_frequency(9, 10), -1);
    }

    #[test]
    fn rejects_inconsistent_length() {
        let spec = GridSpec::new(2, 4).unwrap();
        assert!(matches!(
            h_minus_one_norm_values(spec, Array1::zeros(15).view()),
            Err(Error::NonUniformGrid)
        ));
    }
}
