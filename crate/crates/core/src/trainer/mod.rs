//! Dataset assembly, the training loop with validation-based model
//! selection, and test evaluation.

pub mod dataset;

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::MapDescriptor;
use crate::error::{Error, Result};
use crate::function_space::Grid;
use crate::net::checkpoint::{Checkpoint, RngState};
use crate::net::{
    init_model, mean_relative_error, AdamConfig, AdamState, ArchitectureSpec, BasisOperatorModel, BatchView,
    LossBreakdown, LossWeights, Real,
};

pub use dataset::{build_dataset, Dataset, Split};

/// RNG stream reserved for model initialization and shuffling.
pub const MODEL_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Maximum trigonometric order of the random input functions.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub map: MapDescriptor,
    pub grid_per_side: usize,
    pub data: DataConfig,
    pub hidden: Vec<usize>,
    pub basis_size: usize,
    #[serde(default)]
    pub weights: LossWeights,
    pub k: usize,
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_validation_every")]
    pub validation_every: usize,
    #[serde(default)]
    pub cosine_decay: bool,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    pub seed: u64,
}

fn default_validation_every() -> usize {
    50
}

fn default_precision() -> Precision {
    Precision::F32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Circle,
    PerturbedCat,
    ConjugatedCat,
}

impl TrainConfig {
    pub fn preset(experiment: Experiment, scale: Scale) -> Self {
        let circle = experiment == Experiment::Circle;
        let map = match experiment {
            Experiment::Circle => MapDescriptor::circle_rotation(crate::dynamics::DEFAULT_ALPHA),
            Experiment::PerturbedCat => MapDescriptor::perturbed_cat(crate::dynamics::DEFAULT_DELTA),
            Experiment::ConjugatedCat => MapDescriptor::default_conjugated(),
        };
        let paper_basis = match experiment {
            Experiment::Circle => 19,
            Experiment::PerturbedCat => 324,
            Experiment::ConjugatedCat => 676,
        };
        let data = if circle {
            DataConfig {
                train: 1000,
                validation: 500,
                test: 100,
                order: 9,
            }
        } else {
            DataConfig {
                train: 3000,
                validation: 500,
                test: 500,
                order: 5,
            }
        };
        let weights = LossWeights {
            beta1: 1.0,
            beta2: 0.0,
            beta3: if circle { 0.0 } else { 1.0 },
            beta_p1: 0.0,
        };
        let mut cfg = TrainConfig {
            map,
            grid_per_side: 100,
            data,
            hidden: vec![if circle { 512 } else { 2048 }; 5],
            basis_size: paper_basis,
            weights,
            k: if circle { 0 } else { 2 },
            epochs: if circle { 10_000 } else { 4_500 },
            optimizer: AdamConfig::default(),
            batch_size: if circle { None } else { Some(256) },
            validation_every: 50,
            cosine_decay: false,
            precision: Precision::F32,
            seed: 0,
        };
        if scale == Scale::Desk {
            if circle {
                cfg.hidden = vec![128; 3];
                cfg.epochs = 3000;
            } else {
                cfg.hidden = vec![256; 3];
                cfg.basis_size = 64;
                cfg.grid_per_side = 64;
                cfg.data.train = 500;
                cfg.data.validation = 100;
                cfg.data.test = 100;
                cfg.epochs = 800;
            }
        }
        cfg
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        ArchitectureSpec::new(2 * self.map.dim(), self.hidden.clone(), self.basis_size)
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.architecture()?;
        self.weights.validate()?;
        self.optimizer.validate()?;
        let d = &self.data;
        if d.train == 0 || d.validation == 0 || d.test == 0 {
            return Err(Error::invalid("every split needs at least one function"));
        }
        if d.order == 0 {
            return Err(Error::invalid("trigonometric order must be at least 1"));
        }
        if self.grid_per_side < 2 {
            return Err(Error::invalid("grid needs at least two points per side"));
        }
        if self.validation_every == 0 {
            return Err(Error::invalid("validation cadence must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.weights.beta3 > 0.0 && self.k == 0 {
            return Err(Error::invalid("a positive E3 weight needs k ≥ 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical debug rendering; changes with any field.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(format!("{self:?}").as_bytes()).into()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.map.dim(), self.grid_per_side)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub train_curve: Vec<EpochRecord>,
    /// `(epoch, mean validation E1)`; epoch 0 is the initial model.
    pub validation_curve: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub test_error: f64,
    pub wall_clock_secs: f64,
    pub parameter_count: usize,
}

impl RunReport {
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("epoch,e1,e2,e3,ep1,total,validation_e1\n");
        let mut val = self.validation_curve.iter().peekable();
        if let Some(&&(0, v)) = val.peek() {
            out.push_str(&format!("0,,,,,,{v:.9e}\n"));
            val.next();
        }
        for rec in &self.train_curve {
            let v = match val.peek() {
                Some(&&(e, v)) if e == rec.epoch => {
                    val.next();
                    format!("{v:.9e}")
                }
                _ => String::new(),
            };
            let l = rec.loss;
            out.push_str(&format!(
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{}\n",
                rec.epoch, l.e1, l.e2, l.e3, l.ep1, l.total, v
            ));
        }
        out
    }
}

#[derive(Debug)]
pub struct RunOutcome<F> {
    pub report: RunReport,
    /// Best-validation model with its optimizer state.
    pub best: Checkpoint<F>,
}

#[derive(Debug)]
pub struct TrainFailure<F> {
    pub epoch: usize,
    pub error: Error,
    /// Last validated model, when one exists.
    pub snapshot: Option<Box<Checkpoint<F>>>,
}

/// Progress notifications, e.g. for logging.
#[derive(Debug, Clone, Copy)]
pub enum Progress {
    Validation { epoch: usize, value: f64, best: f64 },
}

/// Columns of a split converted to the training precision.
pub struct SplitData<F> {
    pub inputs: Array2<F>,
    pub targets: Array2<F>,
    pub iterates: Option<Array2<F>>,
}

impl<F: Real> SplitData<F> {
    pub fn from_split(split: &Split) -> Self {
        SplitData {
            inputs: split.inputs.mapv(F::of),
            targets: split.targets.mapv(F::of),
            iterates: split.iterates.as_ref().map(|a| a.mapv(F::of)),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const EVAL_CHUNK: usize = 256;

/// Mean relative `L²` error of `R∘G∘P` over every function in a split.
pub fn evaluate<F: Real>(model: &BasisOperatorModel<F>, grid: &Grid, split: &SplitData<F>) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty split"));
    }
    let basis = model.encode_basis(grid)?;
    evaluate_with_basis(model, &basis, split.inputs.view(), split.targets.view())
}

fn evaluate_with_basis<F: Real>(
    model: &BasisOperatorModel<F>,
    basis: &Array2<F>,
    inputs: ArrayView2<F>,
    targets: ArrayView2<F>,
) -> Result<f64> {
    let total = inputs.ncols();
    let mut sum = 0.0;
    let mut start = 0;
    while start < total {
        let end = (start + EVAL_CHUNK).min(total);
        let x = inputs.slice(ndarray::s![.., start..end]);
        let y = targets.slice(ndarray::s![.., start..end]);
        let pred = model.forward(basis, x)?;
        sum += mean_relative_error(y, &pred)? * (end - start) as f64;
        start = end;
    }
    Ok(sum / total as f64)
}

/// Train from a fresh model. Deterministic for a fixed config and thread count.
pub fn train<F: Real>(
    cfg: &TrainConfig,
    data: &Dataset,
    observer: &mut dyn FnMut(Progress),
) -> std::result::Result<RunOutcome<F>, TrainFailure<F>> {
    let early = |error| TrainFailure {
        epoch: 0,
        error,
        snapshot: None,
    };
    cfg.validate().map_err(early)?;
    data.check(cfg).map_err(early)?;
    let grid = cfg.grid().map_err(early)?;
    let arch = cfg.architecture().map_err(early)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(MODEL_STREAM);
    let mut model: BasisOperatorModel<F> = init_model(&arch, cfg.weights, cfg.k, &mut rng).map_err(early)?;
    let mut adam = AdamState::new(cfg.optimizer, &model.params);
    let config_hash = cfg.hash();

    let train = SplitData::<F>::from_split(&data.train);
    let validation = SplitData::<F>::from_split(&data.validation);
    let test = SplitData::<F>::from_split(&data.test);
    let embedded = grid.embedded.mapv(F::of);
    let started = Instant::now();

    let snapshot = |model: &BasisOperatorModel<F>, adam: &AdamState<F>, rng: &ChaCha8Rng, epoch: usize, best_epoch: usize, best: f64| {
        Checkpoint {
            model: model.clone(),
            optimizer: adam.clone(),
            config_hash,
            rng: RngState::capture(rng),
            epoch: epoch as u64,
            best_epoch: best_epoch as u64,
            best_validation: best,
        }
    };

    let initial = evaluate(&model, &grid, &validation).map_err(early)?;
    let mut best = snapshot(&model, &adam, &rng, 0, 0, initial);
    let mut validation_curve = vec![(0, initial)];
    observer(Progress::Validation {
        epoch: 0,
        value: initial,
        best: initial,
    });

    let n_train = train.len();
    let batch = cfg.batch_size.unwrap_or(n_train).min(n_train);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut train_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let fail = |error, best: &Checkpoint<F>| TrainFailure {
            epoch,
            error,
            snapshot: Some(Box::new(best.clone())),
        };
        let lr_scale = if cfg.cosine_decay {
            0.5 * (1.0 + (std::f64::consts::PI * (epoch - 1) as f64 / cfg.epochs as f64).cos())
        } else {
            1.0
        };
        if batch < n_train {
            order.shuffle(&mut rng);
        }
        let mut sums = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let (xi, yi, ki);
            let view = if batch == n_train {
                BatchView {
                    inputs: train.inputs.view(),
                    targets: train.targets.view(),
                    iterates: train.iterates.as_ref().map(|a| a.view()),
                }
            } else {
                xi = train.inputs.select(Axis(1), chunk);
                yi = train.targets.select(Axis(1), chunk);
                ki = train.iterates.as_ref().map(|a| a.select(Axis(1), chunk));
                BatchView {
                    inputs: xi.view(),
                    targets: yi.view(),
                    iterates: ki.as_ref().map(|a| a.view()),
                }
            };
            let (loss, grads) = model.backward(embedded.view(), &view).map_err(|e| fail(e, &best))?;
            adam.update(&mut model.params, &grads, lr_scale).map_err(|e| fail(e, &best))?;
            if !model.params.all_finite() {
                return Err(fail(Error::NonFinite("parameters after update"), &best));
            }
            sums.e1 += loss.e1;
            sums.e2 += loss.e2;
            sums.e3 += loss.e3;
            sums.ep1 += loss.ep1;
            sums.total += loss.total;
            batches += 1;
        }
        let nb = batches as f64;
        train_curve.push(EpochRecord {
            epoch,
            loss: LossBreakdown {
                e1: sums.e1 / nb,
                e2: sums.e2 / nb,
                e3: sums.e3 / nb,
                ep1: sums.ep1 / nb,
                total: sums.total / nb,
            },
        });

        if epoch % cfg.validation_every == 0 || epoch == cfg.epochs {
            let value = evaluate(&model, &grid, &validation).map_err(|e| fail(e, &best))?;
            if !value.is_finite() {
                return Err(fail(Error::NonFinite("validation error"), &best));
            }
            validation_curve.push((epoch, value));
            if value < best.best_validation {
                best = snapshot(&model, &adam, &rng, epoch, epoch, value);
            }
            observer(Progress::Validation {
                epoch,
                value,
                best: best.best_validation,
            });
        }
    }

    let test_error = evaluate(&best.model, &grid, &test).map_err(|e| TrainFailure {
        epoch: cfg.epochs,
        error: e,
        snapshot: Some(Box::new(best.clone())),
    })?;
    let report = RunReport {
        train_curve,
        validation_curve,
        best_epoch: best.best_epoch as usize,
        best_validation: best.best_validation,
        test_error,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        parameter_count: arch.parameter_count(),
    };
    Ok(RunOutcome { report, best })
}
