//! Real Fourier bases on the circle and the torus.

use std::f64::consts::{SQRT_2, TAU};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::dynamics::StatePoint;
use crate::error::{Error, Result};
use crate::function_space::Grid;
use crate::spectral::BasisMatrix;

/// One-dimensional real Fourier mode on the unit period, normalized to unit
/// mean square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Const,
    Cos(usize),
    Sin(usize),
}

impl Mode {
    #[inline]
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Mode::Const => 1.0,
            Mode::Cos(k) => SQRT_2 * (TAU * k as f64 * s).cos(),
            Mode::Sin(k) => SQRT_2 * (TAU * k as f64 * s).sin(),
        }
    }

    pub fn frequency(self) -> usize {
        match self {
            Mode::Const => 0,
            Mode::Cos(k) | Mode::Sin(k) => k,
        }
    }
}

/// Constant, then `cos k, sin k` pairs, then an unpaired top cosine when
/// `per_dim` is even: 18 gives pairs to order 8 plus `cos 9`.
pub fn mode_list(per_dim: usize) -> Result<Vec<Mode>> {
    if per_dim == 0 {
        return Err(Error::invalid("a Fourier basis needs at least one mode per dimension"));
    }
    let pairs = (per_dim - 1) / 2;
    let mut modes = Vec::with_capacity(per_dim);
    modes.push(Mode::Const);
    for k in 1..=pairs {
        modes.push(Mode::Cos(k));
        modes.push(Mode::Sin(k));
    }
    if per_dim % 2 == 0 {
        modes.push(Mode::Cos(pairs + 1));
    }
    Ok(modes)
}

/// Coordinates rescaled to the unit period.
pub fn unit_coordinates(p: StatePoint) -> (f64, Option<f64>) {
    match p {
        StatePoint::Angle(t) => (t / TAU, None),
        StatePoint::Torus(x, y) => (x, Some(y)),
    }
}

/// A finite set of functions that can be evaluated anywhere in state space.
pub trait BasisSet: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> usize;

    /// `n × N` matrix of basis values at the given points.
    fn eval_points(&self, points: &[StatePoint]) -> Result<Array2<f64>>;

    /// Whether the basis is discrete-orthonormal on any grid fine enough to
    /// resolve it; lets the Galerkin assembly skip the Gram solve.
    fn is_orthonormal(&self) -> bool {
        false
    }

    /// Highest Fourier frequency per coordinate, when known.
    fn max_frequency(&self) -> Option<usize> {
        None
    }

    fn sample(&self, grid: &Grid) -> Result<BasisMatrix> {
        self.eval_points(&grid.points)
    }
}

/// Tensor-product real Fourier basis; index `a·d + b` pairs x-mode `a` with
/// y-mode `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    dim: usize,
    modes: Vec<Mode>,
}

impl FourierBasis {
    pub fn new(dim: usize, per_dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!("Fourier basis dimension {dim} unsupported")));
        }
        Ok(FourierBasis {
            dim,
            modes: mode_list(per_dim)?,
        })
    }

    pub fn per_dim(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `(x-mode, y-mode)` of a tensor index; the y-mode is `Const` on the circle.
    pub fn mode_pair(&self, idx: usize) -> (Mode, Mode) {
        let d = self.modes.len();
        match self.dim {
            1 => (self.modes[idx], Mode::Const),
            _ => (self.modes[idx / d], self.modes[idx % d]),
        }
    }

    fn factor(&self, coords: impl Iterator<Item = f64>, n: usize) -> Array2<f64> {
        let d = self.modes.len();
        let mut out = Array2::zeros((n, d));
        for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(coords) {
            for (v, m) in row.iter_mut().zip(&self.modes) {
                *v = m.eval(s);
            }
        }
        out
    }
}

impl BasisSet for FourierBasis {
    fn len(&self) -> usize {
        self.modes.len().pow(self.dim as u32)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_points(&self, points: &[StatePoint]) -> Result<Array2<f64>> {
        if points.iter().any(|p| p.dim() != self.dim) {
            return Err(Error::invalid("point dimension does not match the basis"));
        }
        let n = points.len();
        let d = self.modes.len();
        let fx = self.factor(points.iter().map(|&p| unit_coordinates(p).0), n);
        if self.dim == 1 {
            return Ok(fx);
        }
        let fy = self.factor(points.iter().map(|&p| unit_coordinates(p).1.unwrap_or(0.0)), n);
        let mut out = Array2::zeros((n, d * d));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(fx.axis_iter(Axis(0)).into_par_iter().zip(fy.axis_iter(Axis(0))))
            .for_each(|(mut row, (rx, ry))| {
                for a in 0..d {
                    for b in 0..d {
                        row[a * d + b] = rx[a] * ry[b];
                    }
                }
            });
        Ok(out)
    }

    fn is_orthonormal(&self) -> bool {
        true
    }

    fn max_frequency(&self) -> Option<usize> {
        self.modes.iter().map(|m| m.frequency()).max()
    }
}
