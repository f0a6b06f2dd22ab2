//! Python bindings: map evaluation, Fourier baselines and small training runs.

use std::collections::HashMap;

use basisop::dynamics::{MapDescriptor, StatePoint};
use basisop::function_space::Grid;
use basisop::galerkin::{error_row, ground_truth_srb, FourierBasis, SrbOptions, TransferQuadrature};
use basisop::spectral::{eigenpairs_with_fields, max_off_diagonal, normalized_gram};
use basisop::trainer::{build_dataset, train, Experiment, Scale, TrainConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: basisop::Error) -> PyErr {
    match e {
        basisop::Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn experiment(name: &str) -> PyResult<Experiment> {
    match name {
        "circle" => Ok(Experiment::Circle),
        "perturbed_cat" => Ok(Experiment::PerturbedCat),
        "conjugated_cat" => Ok(Experiment::ConjugatedCat),
        _ => Err(PyValueError::new_err(format!(
            "unknown experiment {name:?}; expected circle, perturbed_cat or conjugated_cat"
        ))),
    }
}

fn scale(name: &str) -> PyResult<Scale> {
    match name {
        "paper" => Ok(Scale::Paper),
        "desk" => Ok(Scale::Desk),
        _ => Err(PyValueError::new_err(format!("unknown scale {name:?}"))),
    }
}

fn map_for(name: &str) -> PyResult<MapDescriptor> {
    Ok(TrainConfig::preset(experiment(name)?, Scale::Desk).map)
}

fn to_point(map: &MapDescriptor, p: &[f64]) -> PyResult<StatePoint> {
    match (map.dim(), p) {
        (1, [t]) => Ok(StatePoint::angle(*t)),
        (2, [x, y]) => Ok(StatePoint::torus(*x, *y)),
        _ => Err(PyValueError::new_err(format!(
            "expected points with {} coordinate(s), got {}",
            map.dim(),
            p.len()
        ))),
    }
}

fn from_point(p: StatePoint) -> Vec<f64> {
    match p {
        StatePoint::Angle(t) => vec![t],
        StatePoint::Torus(x, y) => vec![x, y],
    }
}

/// Apply the experiment's map to each point.
#[pyfunction]
fn forward(name: &str, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let map = map_for(name)?;
    points
        .iter()
        .map(|p| Ok(from_point(map.forward(to_point(&map, p)?))))
        .collect()
}

/// Apply the inverse map to each point.
#[pyfunction]
fn inverse(name: &str, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let map = map_for(name)?;
    points
        .iter()
        .map(|p| Ok(from_point(map.inverse(to_point(&map, p)?).map_err(py_err)?)))
        .collect()
}

/// Main preset fields for an experiment at a given scale.
#[pyfunction]
#[pyo3(signature = (name, scale_name = "desk"))]
fn preset(name: &str, scale_name: &str) -> PyResult<HashMap<String, Vec<usize>>> {
    let cfg = TrainConfig::preset(experiment(name)?, scale(scale_name)?);
    Ok(HashMap::from([
        ("hidden".to_string(), cfg.hidden.clone()),
        ("basis_size".to_string(), vec![cfg.basis_size]),
        ("grid_per_side".to_string(), vec![cfg.grid_per_side]),
        ("epochs".to_string(), vec![cfg.epochs]),
        (
            "data".to_string(),
            vec![cfg.data.train, cfg.data.validation, cfg.data.test, cfg.data.order],
        ),
        ("k".to_string(), vec![cfg.k]),
    ]))
}

/// Fourier-Galerkin errors against a reference SRB density, in the order
/// L² projection, H⁻¹ projection, L² approximation, H⁻¹ approximation.
#[pyfunction]
#[pyo3(signature = (name, modes_per_dim, quad_per_side = 400, reference_modes = 100, analysis_per_side = 100))]
fn fourier_errors(
    py: Python<'_>,
    name: &str,
    modes_per_dim: usize,
    quad_per_side: usize,
    reference_modes: usize,
    analysis_per_side: usize,
) -> PyResult<[f64; 4]> {
    let map = map_for(name)?;
    if !map.is_torus() {
        return Err(PyValueError::new_err("SRB densities need a torus map"));
    }
    let options = SrbOptions {
        modes_per_side: reference_modes,
        quad_per_side,
        analysis_per_side,
        ..SrbOptions::default()
    };
    py.detach(|| {
        let quad = TransferQuadrature::new(&map, quad_per_side)?;
        let srb = ground_truth_srb(&quad, options)?;
        let grid = Grid::new(2, analysis_per_side)?;
        let basis = FourierBasis::new(2, modes_per_dim)?;
        let row = error_row("fourier", &srb.density, &quad, &grid, &basis)?;
        Ok([
            row.projection.l2,
            row.projection.h_minus_one,
            row.approximation.l2,
            row.approximation.h_minus_one,
        ])
    })
    .map_err(py_err)
}

/// Train a model from a preset and return its test error and spectrum.
#[pyfunction]
#[pyo3(signature = (name, scale_name = "desk", seed = 0, epochs = None, hidden = None, basis_size = None, grid_per_side = None, data = None))]
#[allow(clippy::too_many_arguments)]
fn train_spectrum(
    py: Python<'_>,
    name: &str,
    scale_name: &str,
    seed: u64,
    epochs: Option<usize>,
    hidden: Option<Vec<usize>>,
    basis_size: Option<usize>,
    grid_per_side: Option<usize>,
    data: Option<(usize, usize, usize)>,
) -> PyResult<Py<pyo3::types::PyDict>> {
    let mut cfg = TrainConfig::preset(experiment(name)?, scale(scale_name)?);
    cfg.seed = seed;
    if let Some(v) = epochs {
        cfg.epochs = v;
    }
    if let Some(v) = hidden {
        cfg.hidden = v;
    }
    if let Some(v) = basis_size {
        cfg.basis_size = v;
    }
    if let Some(v) = grid_per_side {
        cfg.grid_per_side = v;
    }
    if let Some((train_n, validation, test)) = data {
        cfg.data.train = train_n;
        cfg.data.validation = validation;
        cfg.data.test = test;
    }
    let (test_error, best_epoch, eigenvalues, off_diagonal) = py
        .detach(|| -> basisop::Result<_> {
            let dataset = build_dataset(&cfg)?;
            let outcome = train::<f32>(&cfg, &dataset, &mut |_| {}).map_err(|f| f.error)?;
            let model = outcome.best.model.cast::<f64>();
            let grid = cfg.grid()?;
            let basis = model.encode_basis(&grid)?;
            let pairs = eigenpairs_with_fields(&model.params.latent, &basis)?;
            let values: Vec<(f64, f64)> = pairs.iter().map(|p| (p.value.re, p.value.im)).collect();
            let off = max_off_diagonal(&normalized_gram(&basis)?);
            Ok((outcome.report.test_error, outcome.report.best_epoch, values, off))
        })
        .map_err(py_err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("test_error", test_error)?;
    out.set_item("best_epoch", best_epoch)?;
    out.set_item("eigenvalues", eigenvalues)?;
    out.set_item("gram_max_off_diagonal", off_diagonal)?;
    Ok(out.unbind())
}

#[pymodule]
fn basisop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(inverse, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(fourier_errors, m)?)?;
    m.add_function(wrap_pyfunction!(train_spectrum, m)?)?;
    Ok(())
}
