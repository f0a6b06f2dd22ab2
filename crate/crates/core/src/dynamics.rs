//! The three discrete-time systems: a rigid circle rotation, a nonlinear
//! perturbation of the linear cat map on the two-torus, and a smooth
//! conjugation of the perturbed cat map.
//!
//! All maps work on reduced coordinates: angles in `[0, 2π)`, torus
//! coordinates in `[0, 1)`. Inverses of the cat maps have no closed form and
//! are computed by Newton iteration on the lifted map in `ℝ²`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = -1.0;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_CONJUGACY: f64 = 0.1;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
const CONJUGACY_TOL: f64 = 1e-14;

/// Reduce `v` into the half-open interval `[0, period)`.
#[inline]
pub fn reduce(v: f64, period: f64) -> f64 {
    let r = v.rem_euclid(period);
    // rem_euclid of a tiny negative number rounds up to `period`
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed distance from `a` to `b` on a circle of the given period, in
/// `[-period/2, period/2]`.
#[inline]
pub fn periodic_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = a - b;
    d - period * (d / period).round()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatePoint {
    /// Angle on the unit circle, in `[0, 2π)`.
    Angle(f64),
    /// Point on the flat torus, each coordinate in `[0, 1)`.
    Torus(f64, f64),
}

impl StatePoint {
    pub fn angle(theta: f64) -> Self {
        StatePoint::Angle(reduce(theta, TAU))
    }

    pub fn torus(x: f64, y: f64) -> Self {
        StatePoint::Torus(reduce(x, 1.0), reduce(y, 1.0))
    }

    /// Intrinsic dimension (1 for the circle, 2 for the torus).
    pub fn dim(&self) -> usize {
        match self {
            StatePoint::Angle(_) => 1,
            StatePoint::Torus(..) => 2,
        }
    }

    /// Width of the ambient embedding.
    pub fn ambient_dim(&self) -> usize {
        2 * self.dim()
    }

    /// Embedding into Euclidean space that removes the seam of the
    /// fundamental domain: `θ ↦ (cos θ, sin θ)` and
    /// `(x, y) ↦ (cos 2πx, sin 2πx, cos 2πy, sin 2πy)`.
    pub fn embed(&self) -> Vec<f64> {
        match *self {
            StatePoint::Angle(t) => vec![t.cos(), t.sin()],
            StatePoint::Torus(x, y) => {
                let (sx, cx) = (TAU * x).sin_cos();
                let (sy, cy) = (TAU * y).sin_cos();
                vec![cx, sx, cy, sy]
            }
        }
    }

    /// Max-norm distance in the quotient metric of the domain.
    pub fn distance(&self, other: &StatePoint) -> f64 {
        match (*self, *other) {
            (StatePoint::Angle(a), StatePoint::Angle(b)) => periodic_diff(a, b, TAU).abs(),
            (StatePoint::Torus(x0, y0), StatePoint::Torus(x1, y1)) => periodic_diff(x0, x1, 1.0)
                .abs()
                .max(periodic_diff(y0, y1, 1.0).abs()),
            _ => f64::INFINITY,
        }
    }

    pub fn as_torus(&self) -> Option<(f64, f64)> {
        match *self {
            StatePoint::Torus(x, y) => Some((x, y)),
            StatePoint::Angle(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapDescriptor {
    CircleRotation { alpha: f64 },
    PerturbedCat { delta: f64 },
    ConjugatedCat { delta: f64, a: f64, b: f64 },
}

impl Default for MapDescriptor {
    fn default() -> Self {
        MapDescriptor::circle_rotation(DEFAULT_ALPHA)
    }
}

impl MapDescriptor {
    pub fn circle_rotation(alpha: f64) -> Self {
        MapDescriptor::CircleRotation { alpha }
    }

    pub fn perturbed_cat(delta: f64) -> Self {
        MapDescriptor::PerturbedCat { delta }
    }

    /// Conjugated cat map. Requires `|a|, |b| < 1/(2π)` so each component of
    /// the conjugacy is strictly monotone.
    pub fn conjugated_cat(delta: f64, a: f64, b: f64) -> Result<Self> {
        let limit = 1.0 / TAU;
        if a.abs() >= limit || b.abs() >= limit {
            return Err(Error::invalid(format!(
                "conjugacy amplitudes must satisfy |a|,|b| < 1/(2π), got a={a}, b={b}"
            )));
        }
        Ok(MapDescriptor::ConjugatedCat { delta, a, b })
    }

    pub fn default_conjugated() -> Self {
        MapDescriptor::ConjugatedCat {
            delta: DEFAULT_DELTA,
            a: DEFAULT_CONJUGACY,
            b: DEFAULT_CONJUGACY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MapDescriptor::ConjugatedCat { delta, a, b } => {
                MapDescriptor::conjugated_cat(delta, a, b).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MapDescriptor::CircleRotation { .. } => 1,
            _ => 2,
        }
    }

    pub fn is_torus(&self) -> bool {
        self.dim() == 2
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapDescriptor::CircleRotation { .. } => "circle_rotation",
            MapDescriptor::PerturbedCat { .. } => "perturbed_cat",
            MapDescriptor::ConjugatedCat { .. } => "conjugated_cat",
        }
    }

    pub fn forward(&self, p: StatePoint) -> StatePoint {
        match (*self, p) {
            (MapDescriptor::CircleRotation { alpha }, StatePoint::Angle(t)) => {
                StatePoint::angle(t + alpha)
            }
            (MapDescriptor::PerturbedCat { delta }, StatePoint::Torus(x, y)) => {
                let (u, v) = cat_lifted(delta, x, y);
                StatePoint::torus(u, v)
            }
            (MapDescriptor::ConjugatedCat { delta, a, b }, StatePoint::Torus(x, y)) => {
                let (fx, fy) = conjugacy(a, b, x, y);
                let (u, v) = cat_lifted(delta, fx, fy);
                let (gx, gy) = conjugacy_inverse(a, b, u, v);
                StatePoint::torus(gx, gy)
            }
            _ => panic!("state point {p:?} does not belong to the domain of {}", self.name()),
        }
    }

    /// Preimage of `p` under the map with the default Newton tolerance.
    pub fn inverse(&self, p: StatePoint) -> Result<StatePoint> {
        self.inverse_with_tol(p, NEWTON_TOL)
    }

    pub fn inverse_with_tol(&self, p: StatePoint, tol: f64) -> Result<StatePoint> {
        if !(tol > 0.0) {
            return Err(Error::invalid("inverse tolerance must be positive"));
        }
        match (*self, p) {
            (MapDescriptor::CircleRotation { alpha }, StatePoint::Angle(t)) => {
                Ok(StatePoint::angle(t - alpha))
            }
            (MapDescriptor::PerturbedCat { delta }, StatePoint::Torus(x, y)) => {
                let (u, v) = cat_inverse(delta, x, y, tol)?;
                Ok(StatePoint::torus(u, v))
            }
            (MapDescriptor::ConjugatedCat { delta, a, b }, StatePoint::Torus(x, y)) => {
                let (fx, fy) = conjugacy(a, b, x, y);
                let (u, v) = cat_inverse(delta, reduce(fx, 1.0), reduce(fy, 1.0), tol)?;
                let (gx, gy) = conjugacy_inverse(a, b, u, v);
                Ok(StatePoint::torus(gx, gy))
            }
            _ => panic!("state point {p:?} does not belong to the domain of {}", self.name()),
        }
    }

    /// `|det DT(p)|`.
    pub fn jacobian_det(&self, p: StatePoint) -> f64 {
        match (*self, p) {
            (MapDescriptor::CircleRotation { .. }, StatePoint::Angle(_)) => 1.0,
            (MapDescriptor::PerturbedCat { delta }, StatePoint::Torus(x, y)) => {
                cat_det(delta, x, y).abs()
            }
            (MapDescriptor::ConjugatedCat { delta, a, b }, StatePoint::Torus(x, y)) => {
                let (fx, fy) = conjugacy(a, b, x, y);
                let image = self.forward(p);
                let (tx, ty) = image.as_torus().expect("torus image");
                let num = cat_det(delta, fx, fy).abs() * conjugacy_det(a, b, x, y).abs();
                num / conjugacy_det(a, b, tx, ty).abs()
            }
            _ => panic!("state point {p:?} does not belong to the domain of {}", self.name()),
        }
    }

    /// `(T^{-k}(p), w)` with `w = ∏_{j=1..k} |det DT(T^{-j} p)|`, so that
    /// `(ℒ^k f)(p) = f(T^{-k} p) / w`.
    pub fn inverse_orbit(&self, p: StatePoint, k: usize) -> Result<(StatePoint, f64)> {
        if k == 0 {
            return Err(Error::invalid("inverse orbit length must be at least 1"));
        }
        let mut q = p;
        let mut weight = 1.0;
        for _ in 0..k {
            q = self.inverse(q)?;
            weight *= self.jacobian_det(q);
        }
        Ok((q, weight))
    }
}

/// Lifted perturbed cat map on `ℝ²` (no reduction).
#[inline]
pub fn cat_lifted(delta: f64, x: f64, y: f64) -> (f64, f64) {
    (
        2.0 * x + y + 2.0 * delta * (TAU * x).cos(),
        x + y + delta * (4.0 * PI * y + 1.0).sin(),
    )
}

/// Jacobian matrix of the lifted perturbed cat map, row-major.
#[inline]
pub fn cat_jacobian(delta: f64, x: f64, y: f64) -> [[f64; 2]; 2] {
    [
        [2.0 - 2.0 * TAU * delta * (TAU * x).sin(), 1.0],
        [1.0, 1.0 + 4.0 * PI * delta * (4.0 * PI * y + 1.0).cos()],
    ]
}

#[inline]
fn cat_det(delta: f64, x: f64, y: f64) -> f64 {
    let j = cat_jacobian(delta, x, y);
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Newton on the lifted cat map, seeded with the linear cat inverse and
/// tracking the nearest integer translate of the target.
fn cat_inverse(delta: f64, tx: f64, ty: f64, tol: f64) -> Result<(f64, f64)> {
    let mut x = tx - ty;
    let mut y = -tx + 2.0 * ty;
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let (u, v) = cat_lifted(delta, x, y);
        let ru = periodic_diff(u, tx, 1.0);
        let rv = periodic_diff(v, ty, 1.0);
        residual = ru.abs().max(rv.abs());
        if residual <= tol {
            return Ok((x, y));
        }
        let j = cat_jacobian(delta, x, y);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        x -= (j[1][1] * ru - j[0][1] * rv) / det;
        y -= (-j[1][0] * ru + j[0][0] * rv) / det;
    }
    Err(Error::NonConvergence {
        iterations: NEWTON_MAX_ITER,
        residual,
    })
}

/// Conjugacy `F(x, y) = (x − a sin 2πx, y + b sin(2πy + π/4))`, unreduced.
#[inline]
pub fn conjugacy(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    (
        x - a * (TAU * x).sin(),
        y + b * (TAU * y + PI / 4.0).sin(),
    )
}

#[inline]
pub fn conjugacy_det(a: f64, b: f64, x: f64, y: f64) -> f64 {
    (1.0 - TAU * a * (TAU * x).cos()) * (1.0 + TAU * b * (TAU * y + PI / 4.0).cos())
}

/// Componentwise inverse of the conjugacy. Each component is a strictly
/// increasing circle map, so 1D Newton from the identity seed converges.
pub fn conjugacy_inverse(a: f64, b: f64, u: f64, v: f64) -> (f64, f64) {
    let x = monotone_inverse(u, |s| s - a * (TAU * s).sin(), |s| 1.0 - TAU * a * (TAU * s).cos());
    let y = monotone_inverse(
        v,
        |s| s + b * (TAU * s + PI / 4.0).sin(),
        |s| 1.0 + TAU * b * (TAU * s + PI / 4.0).cos(),
    );
    (reduce(x, 1.0), reduce(y, 1.0))
}

fn monotone_inverse(target: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    let mut s = target;
    for _ in 0..NEWTON_MAX_ITER {
        let r = f(s) - target;
        if r.abs() <= CONJUGACY_TOL {
            break;
        }
        s -= r / df(s);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_torus(rng: &mut ChaCha8Rng) -> StatePoint {
        StatePoint::torus(rng.random(), rng.random())
    }

    fn fd_det(map: &MapDescriptor, x: f64, y: f64, h: f64) -> f64 {
        // differences of the map image taken in the quotient metric
        let img = |x: f64, y: f64| map.forward(StatePoint::torus(x, y)).as_torus().unwrap();
        let (xp, yp) = img(x + h, y);
        let (xm, ym) = img(x - h, y);
        let (xq, yq) = img(x, y + h);
        let (xr, yr) = img(x, y - h);
        let a = periodic_diff(xp, xm, 1.0) / (2.0 * h);
        let c = periodic_diff(yp, ym, 1.0) / (2.0 * h);
        let b = periodic_diff(xq, xr, 1.0) / (2.0 * h);
        let d = periodic_diff(yq, yr, 1.0) / (2.0 * h);
        (a * d - b * c).abs()
    }

    #[test]
    fn reduction_is_half_open() {
        assert_eq!(reduce(-1e-18, 1.0), 0.0);
        assert_eq!(reduce(1.0, 1.0), 0.0);
        assert!((reduce(-0.25, 1.0) - 0.75).abs() < 1e-15);
        let p = StatePoint::angle(-1e-18);
        assert_eq!(p, StatePoint::Angle(0.0));
    }

    #[test]
    fn circle_rotation_forward_and_inverse() {
        let map = MapDescriptor::circle_rotation(-1.0);
        let StatePoint::Angle(t) = map.forward(StatePoint::angle(0.0)) else {
            unreachable!()
        };
        assert!((t - (TAU - 1.0)).abs() < 1e-14);
        let StatePoint::Angle(t) = map.inverse(StatePoint::angle(1.0)).unwrap() else {
            unreachable!()
        };
        assert!((t - 2.0).abs() < 1e-14);
        assert_eq!(map.jacobian_det(StatePoint::angle(0.3)), 1.0);
    }

    #[test]
    fn linear_cat_fixed_point_and_inverse() {
        let map = MapDescriptor::perturbed_cat(0.0);
        assert_eq!(map.forward(StatePoint::torus(0.0, 0.0)), StatePoint::Torus(0.0, 0.0));
        let x = map.inverse(StatePoint::torus(0.5, 0.0)).unwrap();
        assert!(x.distance(&StatePoint::torus(0.5, 0.5)) < 1e-14);
        assert!((map.jacobian_det(StatePoint::torus(0.3, 0.7)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perturbed_cat_matches_closed_form_at_quarter_point() {
        // T(1/4, 1/2) = (1 + 2δ cos(π/2), 3/4 + δ sin(2π + 1)); sin(1) to 22 digits
        let sin1 = 0.841_470_984_807_896_506_652_5_f64;
        let map = MapDescriptor::perturbed_cat(0.01);
        let (x, y) = map.forward(StatePoint::torus(0.25, 0.5)).as_torus().unwrap();
        assert!(periodic_diff(x, 0.0, 1.0).abs() < 1e-15);
        assert!((y - (0.75 + 0.01 * sin1)).abs() < 1e-15);
    }

    #[test]
    fn round_trip_all_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let maps = [
            MapDescriptor::perturbed_cat(0.01),
            MapDescriptor::default_conjugated(),
        ];
        for map in maps {
            for _ in 0..10_000 {
                let y = random_torus(&mut rng);
                let x = map.inverse(y).unwrap();
                assert!(map.forward(x).distance(&y) <= 1e-10, "{map:?} {y:?}");
            }
        }
        let circle = MapDescriptor::circle_rotation(-1.0);
        for _ in 0..10_000 {
            let y = StatePoint::angle(rng.random::<f64>() * TAU);
            let x = circle.inverse(y).unwrap();
            assert!(circle.forward(x).distance(&y) <= 1e-10);
        }
    }

    #[test]
    fn perturbed_cat_newton_meets_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let map = MapDescriptor::perturbed_cat(0.01);
        for _ in 0..10_000 {
            let y = random_torus(&mut rng);
            let x = map.inverse(y).unwrap();
            assert!(map.forward(x).distance(&y) <= 1e-12);
        }
    }

    #[test]
    fn conjugacy_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, delta) = (0.1, 0.1, 0.01);
        let conj = MapDescriptor::default_conjugated();
        let cat = MapDescriptor::perturbed_cat(delta);
        for _ in 0..1000 {
            let z = random_torus(&mut rng);
            let (x, y) = z.as_torus().unwrap();
            let (fx, fy) = conjugacy(a, b, x, y);
            let (u, v) = cat.forward(StatePoint::torus(fx, fy)).as_torus().unwrap();
            let (gx, gy) = conjugacy_inverse(a, b, u, v);
            assert!(conj.forward(z).distance(&StatePoint::torus(gx, gy)) <= 1e-10);
        }
    }

    #[test]
    fn conjugacy_components_are_monotone() {
        let a = 0.1;
        for i in 0..10_000 {
            let x = i as f64 / 10_000.0;
            assert!(1.0 - TAU * a * (TAU * x).cos() > 0.0);
        }
        assert!(MapDescriptor::conjugated_cat(0.01, 0.2, 0.1).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for map in [
            MapDescriptor::perturbed_cat(0.01),
            MapDescriptor::default_conjugated(),
        ] {
            for _ in 0..100 {
                let (x, y) = random_torus(&mut rng).as_torus().unwrap();
                let exact = map.jacobian_det(StatePoint::torus(x, y));
                let fd = fd_det(&map, x, y, 1e-6);
                assert!(exact > 0.0);
                assert!(((exact - fd) / exact).abs() <= 1e-6, "{map:?}: {exact} vs {fd}");
            }
        }
    }

    #[test]
    fn inverse_orbit_weights() {
        let linear = MapDescriptor::perturbed_cat(0.0);
        let (p, w) = linear.inverse_orbit(StatePoint::torus(0.0, 0.0), 3).unwrap();
        assert!(p.distance(&StatePoint::torus(0.0, 0.0)) < 1e-14);
        assert!((w - 1.0).abs() < 1e-14);

        let map = MapDescriptor::perturbed_cat(0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let y = random_torus(&mut rng);
            let (p1, w1) = map.inverse_orbit(y, 1).unwrap();
            let x = map.inverse(y).unwrap();
            assert_eq!(p1, x);
            assert_eq!(w1, map.jacobian_det(x));

            // weight of T^2 equals the FD determinant of the twice-iterated map
            let (p2, w2) = map.inverse_orbit(y, 2).unwrap();
            let (x0, y0) = p2.as_torus().unwrap();
            let twice = |x: f64, y: f64| {
                map.forward(map.forward(StatePoint::torus(x, y))).as_torus().unwrap()
            };
            let h = 1e-6;
            let d = |f: (f64, f64), g: (f64, f64)| {
                (periodic_diff(f.0, g.0, 1.0) / (2.0 * h), periodic_diff(f.1, g.1, 1.0) / (2.0 * h))
            };
            let (a, c) = d(twice(x0 + h, y0), twice(x0 - h, y0));
            let (b, e) = d(twice(x0, y0 + h), twice(x0, y0 - h));
            let fd = (a * e - b * c).abs();
            assert!(((w2 - fd) / w2).abs() <= 1e-5, "{w2} vs {fd}");
        }
        assert!(map.inverse_orbit(StatePoint::torus(0.1, 0.2), 0).is_err());
    }

    #[test]
    fn embeddings_lie_on_unit_circles() {
        assert_eq!(StatePoint::angle(0.0).embed(), vec![1.0, 0.0]);
        let e = StatePoint::torus(0.0, 0.25).embed();
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
        assert!(e[2].abs() < 1e-15 && (e[3] - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let e = random_torus(&mut rng).embed();
            assert!((e[0] * e[0] + e[1] * e[1] - 1.0).abs() < 1e-15);
            assert!((e[2] * e[2] + e[3] * e[3] - 1.0).abs() < 1e-15);
        }
    }
}
