//! Computations shared by the subcommands and the acceptance suite.

use std::path::Path;

use basisop::dynamics::MapDescriptor;
use basisop::function_space::Grid;
use basisop::galerkin::{
    error_row, ground_truth_srb, learned_density, ErrorRow, FourierBasis, SRBGroundTruth, SrbOptions,
    TransferQuadrature,
};
use basisop::net::checkpoint::Checkpoint;
use basisop::net::{BasisOperatorModel, Real};
use basisop::spectral::{
    eigen_diagnostics, eigenpairs_with_fields, max_off_diagonal, normalized_gram, rotation_check, BasisMatrix,
    RotationCheck, SpectralReport,
};
use basisop::trainer::{train, Dataset, Precision, Progress, RunReport, TrainConfig};
use ndarray::Array2;
use num_complex::Complex64;

use crate::CliError;

/// Reference SRB density for a torus map and the quadrature that produced it.
pub struct Truth {
    pub quad: TransferQuadrature,
    pub srb: SRBGroundTruth,
    pub grid: Grid,
}

pub fn ground_truth(map: &MapDescriptor, options: SrbOptions) -> Result<Truth, CliError> {
    if !map.is_torus() {
        return Err(CliError::Config("SRB densities are only defined here for the torus maps".into()));
    }
    let quad = TransferQuadrature::new(map, options.quad_per_side)?;
    let srb = ground_truth_srb(&quad, options)?;
    let grid = Grid::new(2, options.analysis_per_side)?;
    Ok(Truth { quad, srb, grid })
}

/// Fourier-Galerkin error row with `modes_per_dim²` tensor modes.
pub fn fourier_row(truth: &Truth, modes_per_dim: usize) -> Result<ErrorRow, CliError> {
    let basis = FourierBasis::new(2, modes_per_dim)?;
    let label = format!("fourier_{}", modes_per_dim * modes_per_dim);
    Ok(error_row(&label, &truth.srb.density, &truth.quad, &truth.grid, &basis)?)
}

/// Learned-basis error row and the leading eigenvalue of `G M`. The
/// approximation columns come from the Galerkin restriction of the transfer
/// operator to the learned basis, as for the Fourier rows.
pub fn learned_row(truth: &Truth, model: &BasisOperatorModel<f64>) -> Result<(ErrorRow, Complex64), CliError> {
    let label = format!("learned_{}", model.arch.basis_size);
    let row = error_row(&label, &truth.srb.density, &truth.quad, &truth.grid, model)?;
    let sampled = model.encode_basis(&truth.grid)?;
    let (_, value) = learned_density(&model.params.latent, &truth.grid, &sampled)?;
    Ok((row, value))
}

pub struct SpectrumAnalysis {
    pub grid: Grid,
    pub basis: BasisMatrix,
    pub report: SpectralReport,
    pub normalized_gram: Array2<f64>,
    pub max_off_diagonal: f64,
    pub rotation: Option<RotationCheck>,
}

pub fn analyze_spectrum(
    model: &BasisOperatorModel<f64>,
    map: &MapDescriptor,
    per_side: usize,
) -> Result<SpectrumAnalysis, CliError> {
    let grid = Grid::new(map.dim(), per_side)?;
    let basis = model.encode_basis(&grid)?;
    let normalized_gram = normalized_gram(&basis)?;
    let pairs = eigenpairs_with_fields(&model.params.latent, &basis)?;
    let report = eigen_diagnostics(map, &grid, &pairs)?;
    let rotation = match *map {
        MapDescriptor::CircleRotation { alpha } => {
            let max_mode = (model.arch.basis_size as i64).max(1);
            Some(rotation_check(&report.pairs, &grid, alpha, max_mode)?)
        }
        _ => None,
    };
    Ok(SpectrumAnalysis {
        max_off_diagonal: max_off_diagonal(&normalized_gram),
        grid,
        basis,
        report,
        normalized_gram,
        rotation,
    })
}

/// A finished training run, independent of the working precision.
pub struct Trained {
    pub report: RunReport,
    pub checkpoint: Vec<u8>,
    pub model: BasisOperatorModel<f64>,
}

fn train_typed<F: Real>(
    cfg: &TrainConfig,
    data: &Dataset,
    observer: &mut dyn FnMut(Progress),
    failure_dir: Option<&Path>,
) -> Result<Trained, CliError> {
    match train::<F>(cfg, data, observer) {
        Ok(out) => Ok(Trained {
            report: out.report,
            checkpoint: out.best.to_bytes(),
            model: out.best.model.cast(),
        }),
        Err(failure) => {
            let mut detail = format!("training failed at epoch {}: {}", failure.epoch, failure.error);
            if let (Some(dir), Some(snap)) = (failure_dir, failure.snapshot.as_ref()) {
                let path = dir.join("failure_snapshot.bin");
                if snap.save(&path).is_ok() {
                    detail.push_str(&format!("\nlast validated model saved to {}", path.display()));
                }
            }
            Err(match failure.error {
                basisop::Error::InvalidParameter(_) => CliError::Config(detail),
                _ => CliError::Numerical(detail),
            })
        }
    }
}

pub fn train_model(
    cfg: &TrainConfig,
    data: &Dataset,
    observer: &mut dyn FnMut(Progress),
    failure_dir: Option<&Path>,
) -> Result<Trained, CliError> {
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, data, observer, failure_dir),
        Precision::F64 => train_typed::<f64>(cfg, data, observer, failure_dir),
    }
}

/// Load a checkpoint written by `train`, checking it belongs to `cfg`.
pub fn load_model(path: &Path, cfg: &TrainConfig) -> Result<BasisOperatorModel<f64>, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let (hash, model) = match cfg.precision {
        Precision::F32 => {
            let c = Checkpoint::<f32>::from_bytes(&bytes)?;
            (c.config_hash, c.model.cast())
        }
        Precision::F64 => {
            let c = Checkpoint::<f64>::from_bytes(&bytes)?;
            (c.config_hash, c.model)
        }
    };
    if hash != cfg.hash() {
        return Err(CliError::Config(format!(
            "checkpoint {} was trained with a different configuration",
            path.display()
        )));
    }
    Ok(model)
}
