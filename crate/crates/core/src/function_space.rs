//! Uniform grids on the circle and torus, random trigonometric polynomial
//! observables, exact transfer/Koopman action on them, and the discrete
//! `L²`/`L¹` structure used everywhere else (`⟨u, v⟩ = (1/n) Σ uᵢ vᵢ`).

use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapDescriptor, StatePoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub points_per_side: usize,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_side: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if points_per_side < 2 {
            return Err(Error::invalid("grid needs at least two points per side"));
        }
        Ok(GridSpec { dim, points_per_side })
    }

    pub fn len(&self) -> usize {
        self.points_per_side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.dim
    }
}

/// Left-endpoint uniform grid. Torus points are ordered row-major with the
/// first coordinate outer: index `i * m + j` is `(i/m, j/m)`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: GridSpec,
    pub points: Vec<StatePoint>,
    /// `n × d` ambient coordinates of the points.
    pub embedded: Array2<f64>,
}

impl Grid {
    pub fn new(dim: usize, points_per_side: usize) -> Result<Self> {
        let spec = GridSpec::new(dim, points_per_side)?;
        let m = points_per_side;
        let points: Vec<StatePoint> = match dim {
            1 => (0..m).map(|i| StatePoint::Angle(TAU * i as f64 / m as f64)).collect(),
            _ => (0..m * m)
                .map(|idx| StatePoint::Torus((idx / m) as f64 / m as f64, (idx % m) as f64 / m as f64))
                .collect(),
        };
        let embedded = embed_points(&points);
        Ok(Grid { spec, points, embedded })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points_per_side(&self) -> usize {
        self.spec.points_per_side
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn field(&self, values: Array1<f64>) -> Result<FieldSample> {
        FieldSample::new(self.spec, values)
    }

    pub fn sample(&self, f: impl Fn(StatePoint) -> f64 + Sync) -> FieldSample {
        let values: Vec<f64> = self.points.par_iter().map(|&p| f(p)).collect();
        FieldSample {
            grid: self.spec,
            values: Array1::from(values),
        }
    }
}

pub fn embed_points(points: &[StatePoint]) -> Array2<f64> {
    let d = points.first().map_or(2, |p| p.ambient_dim());
    let mut out = Array2::zeros((points.len(), d));
    for (mut row, p) in out.rows_mut().into_iter().zip(points) {
        for (dst, v) in row.iter_mut().zip(p.embed()) {
            *dst = v;
        }
    }
    out
}

/// An observable sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub values: Array1<f64>,
}

impl FieldSample {
    pub fn new(grid: GridSpec, values: Array1<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                left: grid.len(),
                right: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field sample"));
        }
        Ok(FieldSample { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        FieldSample {
            grid,
            values: Array1::from_elem(grid.len(), value),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norms(&self) -> Norms {
        discrete_norms(self.values.view())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub l1: f64,
}

/// `(1/n) Σ uᵢ vᵢ`.
pub fn inner_product(u: &FieldSample, v: &FieldSample) -> Result<f64> {
    if u.grid != v.grid || u.len() != v.len() {
        return Err(Error::GridMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(dot_mean(u.values.view(), v.values.view()))
}

#[inline]
pub fn dot_mean(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    u.dot(&v) / u.len() as f64
}

pub fn discrete_norms(u: ArrayView1<f64>) -> Norms {
    let n = u.len() as f64;
    Norms {
        l2: (u.dot(&u) / n).sqrt(),
        l1: u.iter().map(|v| v.abs()).sum::<f64>() / n,
    }
}

/// Random trigonometric polynomial of maximum order `K` in each coordinate.
///
/// The per-dimension dictionary has `2K + 1` entries: index `i ≤ K` is
/// `cos(i·s)`, index `K + k` (`1 ≤ k ≤ K`) is `sin(k·s)`, where `s = θ` on the
/// circle and `s = 2πx` on a unit-period torus coordinate. Coefficients form
/// a row-major tensor over the per-dimension indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub dim: usize,
    pub order: usize,
    pub coeffs: Vec<f64>,
}

impl TrigPoly {
    pub fn dictionary_size(dim: usize, order: usize) -> usize {
        (2 * order + 1).pow(dim as u32)
    }

    pub fn new(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid("trigonometric polynomials live in dimension 1 or 2"));
        }
        if coeffs.len() != Self::dictionary_size(dim, order) {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                Self::dictionary_size(dim, order),
                coeffs.len()
            )));
        }
        Ok(TrigPoly { dim, order, coeffs })
    }

    /// Coefficients i.i.d. uniform on `[-1, 1]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dim: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("trigonometric order must be at least 1"));
        }
        let coeffs = (0..Self::dictionary_size(dim, order))
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Self::new(dim, order, coeffs)
    }

    pub fn width(&self) -> usize {
        2 * self.order + 1
    }

    pub fn eval(&self, p: StatePoint) -> f64 {
        let w = self.width();
        match (self.dim, p) {
            (1, StatePoint::Angle(t)) => {
                let f = dictionary_row(t, self.order);
                f.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
            }
            (2, StatePoint::Torus(x, y)) => {
                let fx = dictionary_row(TAU * x, self.order);
                let fy = dictionary_row(TAU * y, self.order);
                let mut total = 0.0;
                for (i, &ax) in fx.iter().enumerate() {
                    let row = &self.coeffs[i * w..(i + 1) * w];
                    total += ax * row.iter().zip(&fy).map(|(c, b)| c * b).sum::<f64>();
                }
                total
            }
            _ => panic!("point {p:?} does not match a {}-dimensional polynomial", self.dim),
        }
    }
}

/// `[cos 0s, cos s, …, cos Ks, sin s, …, sin Ks]`.
pub fn dictionary_row(s: f64, order: usize) -> Vec<f64> {
    let mut row = vec![0.0; 2 * order + 1];
    for k in 0..=order {
        let (sn, cs) = (k as f64 * s).sin_cos();
        row[k] = cs;
        if k > 0 {
            row[order + k] = sn;
        }
    }
    row
}

/// Cached dictionary factors for a fixed set of evaluation points, so many
/// polynomials can be evaluated on the same points cheaply.
#[derive(Debug, Clone)]
pub struct TrigEvaluator {
    dim: usize,
    order: usize,
    /// `n × (2K+1)` per-dimension factors.
    factors: Vec<Array2<f64>>,
}

impl TrigEvaluator {
    pub fn new(points: &[StatePoint], order: usize) -> Self {
        let dim = points.first().map_or(1, |p| p.dim());
        let w = 2 * order + 1;
        let mut factors = vec![Array2::zeros((points.len(), w)); dim];
        for (i, p) in points.iter().enumerate() {
            let coords: Vec<f64> = match *p {
                StatePoint::Angle(t) => vec![t],
                StatePoint::Torus(x, y) => vec![TAU * x, TAU * y],
            };
            for (f, s) in factors.iter_mut().zip(coords) {
                for (dst, v) in f.row_mut(i).iter_mut().zip(dictionary_row(s, order)) {
                    *dst = v;
                }
            }
        }
        TrigEvaluator { dim, order, factors }
    }

    pub fn len(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, p: &TrigPoly) -> Array1<f64> {
        assert_eq!(p.dim, self.dim, "polynomial dimension mismatch");
        assert_eq!(p.order, self.order, "polynomial order mismatch");
        let w = p.width();
        match self.dim {
            1 => self.factors[0].dot(&ArrayView1::from(&p.coeffs[..])),
            _ => {
                let c = ndarray::ArrayView2::from_shape((w, w), &p.coeffs[..]).expect("square");
                // Σ_i fx_i (Σ_j c_ij fy_j) = rowsum(fx ∘ (fy cᵀ))
                let inner = self.factors[1].dot(&c.t());
                (&self.factors[0] * &inner).sum_axis(ndarray::Axis(1))
            }
        }
    }
}

/// Preimages `T^{-k}(xᵢ)` and weights `∏ |det DT|` for every grid point.
/// Newton inversion dominates data generation, so this is computed once per
/// (map, grid, k) and reused for every observable.
#[derive(Debug, Clone)]
pub struct InverseOrbits {
    pub k: usize,
    pub points: Vec<StatePoint>,
    pub weights: Vec<f64>,
}

impl InverseOrbits {
    pub fn compute(map: &MapDescriptor, targets: &[StatePoint], k: usize) -> Result<Self> {
        let pairs: Vec<(StatePoint, f64)> = targets
            .par_iter()
            .map(|&p| map.inverse_orbit(p, k))
            .collect::<Result<_>>()?;
        let (points, weights) = pairs.into_iter().unzip();
        Ok(InverseOrbits { k, points, weights })
    }

    /// Continue every orbit by `extra` further steps.
    pub fn extend(&self, map: &MapDescriptor, extra: usize) -> Result<Self> {
        let pairs: Vec<(StatePoint, f64)> = self
            .points
            .par_iter()
            .zip(&self.weights)
            .map(|(&p, &w)| map.inverse_orbit(p, extra).map(|(q, v)| (q, w * v)))
            .collect::<Result<_>>()?;
        let (points, weights) = pairs.into_iter().unzip();
        Ok(InverseOrbits {
            k: self.k + extra,
            points,
            weights,
        })
    }
}

/// `(ℒ^k p)(xᵢ) = p(T^{-k} xᵢ) / w(xᵢ)` on every grid point.
pub fn transfer_apply(map: &MapDescriptor, p: &TrigPoly, grid: &Grid, k: usize) -> Result<FieldSample> {
    if k == 0 {
        return Err(Error::invalid("transfer power must be at least 1"));
    }
    let orbits = InverseOrbits::compute(map, &grid.points, k)?;
    let values: Vec<f64> = orbits
        .points
        .iter()
        .zip(&orbits.weights)
        .map(|(&q, &w)| p.eval(q) / w)
        .collect();
    FieldSample::new(grid.spec, Array1::from(values))
}

/// `(𝒦 p)(xᵢ) = p(T xᵢ)`.
pub fn koopman_apply(map: &MapDescriptor, p: &TrigPoly, grid: &Grid) -> FieldSample {
    grid.sample(|x| p.eval(map.forward(x)))
}
