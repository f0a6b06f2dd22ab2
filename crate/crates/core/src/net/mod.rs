//! Learned-basis operator model.
//!
//! An MLP encoder maps embedded grid points to `N` basis values; a latent
//! matrix `G` acts on projection coefficients. For a batch of inputs `X`
//! (`n × B`, one function per column) and basis `Φ` (`n × N`):
//!
//! ```text
//! C = ΦᵀX / n      projection
//! A = G C          latent map
//! P = Φ A          reconstruction
//! ```
//!
//! Gradients are derived by hand. The encoder receives contributions from
//! both the projection and reconstruction uses of `Φ`.

pub mod adam;
pub mod checkpoint;

use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::StatePoint;
use crate::error::{Error, Result};
use crate::function_space::{embed_points, Grid};
use crate::galerkin::BasisSet;

pub use adam::{AdamConfig, AdamState};

/// Floating-point types the model can be trained in.
pub trait Real: Float + NumAssign + LinalgScalar + ScalarOperand + Send + Sync + Debug + Default + 'static {
    const TAG: u8;
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    const TAG: u8 = 4;
    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const TAG: u8 = 8;
    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    /// Embedding width: 2 on the circle, 4 on the torus.
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub basis_size: usize,
}

impl ArchitectureSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, basis_size: usize) -> Result<Self> {
        let spec = ArchitectureSpec {
            input_dim,
            hidden,
            basis_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.basis_size == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::invalid("architecture widths must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.basis_size);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Encoder weights and biases plus the `N × N` latent matrix.
    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum::<usize>() + self.basis_size * self.basis_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Weight of the input-reconstruction penalty; off by default.
    pub beta_p1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta1: 1.0,
            beta2: 0.0,
            beta3: 1.0,
            beta_p1: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.beta1, self.beta2, self.beta3, self.beta_p1];
        if all.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Affine layer `y = x W + b`, `W` stored as `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Every trainable tensor. Gradients and optimizer moments reuse this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub layers: Vec<Layer<F>>,
    pub latent: Array2<F>,
}

impl<F: Real> Params<F> {
    pub fn zeros_like(other: &Params<F>) -> Self {
        Params {
            layers: other
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            latent: Array2::zeros(other.latent.raw_dim()),
        }
    }

    /// Flat views of every tensor in a fixed order: per layer weight then
    /// bias, then the latent matrix.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out.push(self.latent.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.latent.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> Params<G> {
        let c2 = |a: &Array2<F>| a.mapv(|v| G::of(v.f64()));
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: c2(&l.weight),
                    bias: l.bias.mapv(|v| G::of(v.f64())),
                })
                .collect(),
            latent: c2(&self.latent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisOperatorModel<F> {
    pub arch: ArchitectureSpec,
    pub params: Params<F>,
    pub weights: LossWeights,
    /// Iterate index of the `E3` target; 0 disables that term.
    pub k: usize,
}

/// Hidden weights `N(0, 2/fan_in)`, output weights `N(0, 1/fan_in)`, zero
/// biases, identity latent map. Drawn in double precision, then cast.
pub fn init_model<F: Real, R: Rng + ?Sized>(
    arch: &ArchitectureSpec,
    weights: LossWeights,
    k: usize,
    rng: &mut R,
) -> Result<BasisOperatorModel<F>> {
    arch.validate()?;
    weights.validate()?;
    let shapes = arch.layer_shapes();
    let last = shapes.len() - 1;
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(idx, &(fan_in, fan_out))| {
            let gain = if idx == last { 1.0 } else { 2.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive variance");
            let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || F::of(normal.sample(rng)));
            Layer {
                weight,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(BasisOperatorModel {
        arch: arch.clone(),
        params: Params {
            layers,
            latent: Array2::eye(arch.basis_size),
        },
        weights,
        k,
    })
}

/// Encoder activations kept for the backward pass.
pub struct EncoderTrace<F> {
    /// Layer inputs: the embedding, then each post-ReLU hidden activation.
    inputs: Vec<Array2<F>>,
    pub basis: Array2<F>,
}

impl<F: Real> BasisOperatorModel<F> {
    pub fn basis_size(&self) -> usize {
        self.arch.basis_size
    }

    pub fn latent(&self) -> &Array2<F> {
        &self.params.latent
    }

    /// Effective weights: `E3` is dropped when `k = 0`.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.k == 0 {
            w.beta3 = 0.0;
        }
        w
    }

    /// Encoder forward pass on embedded points (`n × d`).
    pub fn encode_trace(&self, embedded: ArrayView2<F>) -> Result<EncoderTrace<F>> {
        if embedded.ncols() != self.arch.input_dim {
            return Err(Error::invalid(format!(
                "encoder expects {} inputs, got {}",
                self.arch.input_dim,
                embedded.ncols()
            )));
        }
        let last = self.params.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.params.layers.len());
        let mut x = embedded.to_owned();
        for (idx, layer) in self.params.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight);
            z += &layer.bias;
            if idx != last {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            inputs.push(std::mem::replace(&mut x, z));
        }
        Ok(EncoderTrace { inputs, basis: x })
    }

    pub fn encode_embedded(&self, embedded: ArrayView2<F>) -> Result<Array2<F>> {
        Ok(self.encode_trace(embedded)?.basis)
    }

    /// `n × N` basis sampled on the grid.
    pub fn encode_basis(&self, grid: &Grid) -> Result<Array2<F>> {
        let emb = grid.embedded.mapv(F::of);
        self.encode_embedded(emb.view())
    }

    /// Prediction `R∘G∘P` for each input column.
    pub fn forward(&self, basis: &Array2<F>, inputs: ArrayView2<F>) -> Result<Array2<F>> {
        let c = project(basis, inputs)?;
        Ok(reconstruct(basis, &latent_apply(&self.params.latent, &c)?)?)
    }
}

/// `C = ΦᵀX / n`.
pub fn project<F: Real>(basis: &Array2<F>, inputs: ArrayView2<F>) -> Result<Array2<F>> {
    if basis.nrows() != inputs.nrows() {
        return Err(Error::GridMismatch {
            left: basis.nrows(),
            right: inputs.nrows(),
        });
    }
    Ok(basis.t().dot(&inputs) / F::of(basis.nrows() as f64))
}

pub fn latent_apply<F: Real>(latent: &Array2<F>, coeffs: &Array2<F>) -> Result<Array2<F>> {
    if latent.ncols() != coeffs.nrows() {
        return Err(Error::invalid("latent map and coefficients have different sizes"));
    }
    Ok(latent.dot(coeffs))
}

pub fn reconstruct<F: Real>(basis: &Array2<F>, coeffs: &Array2<F>) -> Result<Array2<F>> {
    if basis.ncols() != coeffs.nrows() {
        return Err(Error::invalid("basis and coefficients have different sizes"));
    }
    Ok(basis.dot(coeffs))
}

/// Input, one-step and `k`-step target columns (`n × B` each).
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a, F> {
    pub inputs: ArrayView2<'a, F>,
    pub targets: ArrayView2<'a, F>,
    pub iterates: Option<ArrayView2<'a, F>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub ep1: f64,
    pub total: f64,
}

/// Mean over columns of `‖y − p‖ / ‖y‖` and, optionally, its gradient with
/// respect to `p` scaled by `weight`.
fn relative_residual<F: Real>(
    targets: ArrayView2<F>,
    predicted: &Array2<F>,
    weight: Option<F>,
) -> Result<(f64, Option<Array2<F>>)> {
    let b = targets.ncols();
    let resid = &targets - predicted;
    let mut total = 0.0;
    let mut grad = weight.map(|_| Array2::zeros(resid.raw_dim()));
    for j in 0..b {
        let y = targets.column(j);
        let ny = y.dot(&y).sqrt();
        if ny == F::zero() {
            return Err(Error::ZeroDenominator);
        }
        let r = resid.column(j);
        let nr = r.dot(&r).sqrt();
        total += (nr / ny).f64();
        if let (Some(g), Some(w)) = (grad.as_mut(), weight) {
            if nr > F::zero() {
                let scale = -w / (F::of(b as f64) * nr * ny);
                g.column_mut(j).zip_mut_with(&r, |d, &rv| *d = rv * scale);
            }
        }
    }
    Ok((total / b as f64, grad))
}

fn sparsity<F: Real>(basis: &Array2<F>) -> f64 {
    let (n, nb) = basis.dim();
    basis.iter().map(|v| v.abs().f64()).sum::<f64>() / (n * nb) as f64
}

fn check_batch<F: Real>(basis: &Array2<F>, batch: &BatchView<F>, need_iterates: bool) -> Result<()> {
    let n = basis.nrows();
    let (rows, cols) = batch.inputs.dim();
    if rows != n || batch.targets.dim() != (rows, cols) {
        return Err(Error::GridMismatch {
            left: n,
            right: batch.targets.nrows(),
        });
    }
    match batch.iterates {
        Some(it) if it.dim() != (rows, cols) => Err(Error::GridMismatch { left: n, right: it.nrows() }),
        None if need_iterates => Err(Error::invalid("k-step targets required by a positive E3 weight")),
        _ => Ok(()),
    }
}

impl<F: Real> BasisOperatorModel<F> {
    /// Loss terms on a batch, given the basis for the batch grid.
    pub fn loss_with_basis(&self, basis: &Array2<F>, batch: &BatchView<F>) -> Result<LossBreakdown> {
        Ok(self.loss_and_basis_grad(basis, batch, false)?.0)
    }

    pub fn compute_loss(&self, grid: &Grid, batch: &BatchView<F>) -> Result<LossBreakdown> {
        let basis = self.encode_basis(grid)?;
        self.loss_with_basis(&basis, batch)
    }

    /// Loss plus `∂J/∂Φ` and `∂J/∂G` when `want_grad` is set.
    #[allow(clippy::type_complexity)]
    fn loss_and_basis_grad(
        &self,
        basis: &Array2<F>,
        batch: &BatchView<F>,
        want_grad: bool,
    ) -> Result<(LossBreakdown, Option<(Array2<F>, Array2<F>)>)> {
        let w = self.effective_weights();
        check_batch(basis, batch, w.beta3 > 0.0)?;
        let n = F::of(basis.nrows() as f64);
        let g = &self.params.latent;
        let mut loss = LossBreakdown::default();
        let mut d_basis = want_grad.then(|| Array2::<F>::zeros(basis.raw_dim()));
        let mut d_latent = want_grad.then(|| Array2::<F>::zeros(g.raw_dim()));
        let grad_weight = |beta: f64| (want_grad && beta > 0.0).then(|| F::of(beta));

        // E1 through R∘G∘P
        let c = project(basis, batch.inputs)?;
        let a = g.dot(&c);
        let p = basis.dot(&a);
        let (e1, d1) = relative_residual(batch.targets, &p, grad_weight(w.beta1))?;
        loss.e1 = e1;
        if let (Some(dp), Some(db), Some(dg)) = (d1, d_basis.as_mut(), d_latent.as_mut()) {
            *db += &dp.dot(&a.t());
            let da = basis.t().dot(&dp);
            *dg += &da.dot(&c.t());
            let dc = g.t().dot(&da);
            *db += &(batch.inputs.dot(&dc.t()) / n);
        }

        // reconstruction terms through R∘P
        let mut recon = |target: ArrayView2<F>, beta: f64| -> Result<f64> {
            let c = project(basis, target)?;
            let p = basis.dot(&c);
            let (e, d) = relative_residual(target, &p, grad_weight(beta))?;
            if let (Some(dp), Some(db)) = (d, d_basis.as_mut()) {
                *db += &dp.dot(&c.t());
                let dc = basis.t().dot(&dp);
                *db += &(target.dot(&dc.t()) / n);
            }
            Ok(e)
        };
        if let Some(it) = batch.iterates {
            if self.k > 0 {
                loss.e3 = recon(it, w.beta3)?;
            }
        }
        if w.beta_p1 > 0.0 {
            loss.ep1 = recon(batch.inputs, w.beta_p1)?;
        }

        loss.e2 = sparsity(basis);
        if let Some(db) = d_basis.as_mut() {
            if w.beta2 > 0.0 {
                let scale = F::of(w.beta2 / (basis.len() as f64));
                Zip::from(db).and(basis).for_each(|d, &v| {
                    // sign(0) = 0: subgradient choice at the kink
                    let s = if v > F::zero() {
                        F::one()
                    } else if v < F::zero() {
                        -F::one()
                    } else {
                        F::zero()
                    };
                    *d = *d + s * scale;
                });
            }
        }

        loss.total = w.beta1 * loss.e1 + w.beta2 * loss.e2 + w.beta3 * loss.e3 + w.beta_p1 * loss.ep1;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((loss, d_basis.zip(d_latent)))
    }

    /// Loss and exact gradients of `J` for every parameter.
    pub fn backward(&self, embedded: ArrayView2<F>, batch: &BatchView<F>) -> Result<(LossBreakdown, Params<F>)> {
        let trace = self.encode_trace(embedded)?;
        let (loss, grads) = self.loss_and_basis_grad(&trace.basis, batch, true)?;
        let (d_basis, d_latent) = grads.expect("gradient requested");
        let grads = self.encoder_backward(&trace, d_basis, d_latent);
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        Ok((loss, grads))
    }

    fn encoder_backward(&self, trace: &EncoderTrace<F>, d_basis: Array2<F>, d_latent: Array2<F>) -> Params<F> {
        let nl = self.params.layers.len();
        let mut layers = Vec::with_capacity(nl);
        let mut dz = d_basis;
        for idx in (0..nl).rev() {
            let input = &trace.inputs[idx];
            let weight_grad = input.t().dot(&dz);
            let bias_grad = dz.sum_axis(Axis(0));
            if idx > 0 {
                let mut dx = dz.dot(&self.params.layers[idx].weight.t());
                // input is a post-ReLU activation: its positivity is the mask
                Zip::from(&mut dx).and(input).for_each(|d, &x| {
                    if x <= F::zero() {
                        *d = F::zero();
                    }
                });
                dz = dx;
            }
            layers.push(Layer {
                weight: weight_grad,
                bias: bias_grad,
            });
        }
        layers.reverse();
        Params {
            layers,
            latent: d_latent,
        }
    }

    pub fn cast<G: Real>(&self) -> BasisOperatorModel<G> {
        BasisOperatorModel {
            arch: self.arch.clone(),
            params: self.params.cast(),
            weights: self.weights,
            k: self.k,
        }
    }
}

/// Mean over columns of `‖y − ŷ‖ / ‖y‖`.
pub fn mean_relative_error<F: Real>(targets: ArrayView2<F>, predicted: &Array2<F>) -> Result<f64> {
    Ok(relative_residual(targets, predicted, None)?.0)
}

impl<F: Real> BasisSet for BasisOperatorModel<F> {
    fn len(&self) -> usize {
        self.arch.basis_size
    }

    fn dim(&self) -> usize {
        self.arch.input_dim / 2
    }

    fn eval_points(&self, points: &[StatePoint]) -> Result<Array2<f64>> {
        const CHUNK: usize = 8192;
        let mut out = Array2::zeros((points.len(), self.arch.basis_size));
        for (start, chunk) in points.chunks(CHUNK).enumerate().map(|(i, c)| (i * CHUNK, c)) {
            let emb = embed_points(chunk).mapv(F::of);
            let b = self.encode_embedded(emb.view())?;
            out.slice_mut(ndarray::s![start..start + chunk.len(), ..])
                .assign(&b.mapv(|v| v.f64()));
        }
        Ok(out)
    }
}
