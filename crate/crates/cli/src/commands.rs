//! `gen-data`, `train`, `spectrum`, `srb` and `baseline`.

use std::path::Path;

use basisop::galerkin::ErrorTable;
use basisop::trainer::{build_dataset, hex, Dataset, Experiment, Progress};
use ndarray::Axis;

use crate::analysis::{analyze_spectrum, fourier_row, ground_truth, load_model, train_model, SpectrumAnalysis, Trained};
use crate::config::{experiment_name, read_config_file, resolve, scale_name, ExperimentConfig, Overrides};
use crate::manifest::Outputs;
use crate::plot;
use crate::{Cli, CliError, Command};

pub const DATA_CACHE: &str = "data.bin";
pub const CHECKPOINT: &str = "checkpoint.bin";

/// Fixed-width scientific notation; round-trips well past `f32` precision.
pub fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// RFC 4180 CSV from a header and string rows.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))
}

pub fn resolve_for(cli: &Cli, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let file = cli.config.as_deref().map(read_config_file).transpose()?;
    let overrides = Overrides {
        experiment,
        scale: cli.scale.map(Into::into),
        seed: cli.seed,
        out: cli.out.clone(),
    };
    resolve(file.as_ref(), &overrides)
}

/// Create the output directory and fill the manifest header.
pub fn open_outputs(cfg: &ExperimentConfig, command: &str) -> Result<Outputs, CliError> {
    let mut out = Outputs::create(&cfg.out)?;
    out.set("schema_version", cfg.schema_version);
    out.set("command", command);
    out.set("experiment", experiment_name(cfg.experiment));
    out.set("scale", scale_name(cfg.scale));
    out.set("seed", cfg.seed);
    out.set("threads", rayon::current_num_threads());
    out.set("config_hash", cfg.hash());
    out.write("config.toml", cfg.canonical().as_bytes())?;
    Ok(out)
}

/// Run `body`, then record its status and write the manifest whatever
/// the outcome. Numerical failures leave a diagnostic file behind.
pub fn execute(
    cfg: &ExperimentConfig,
    command: &str,
    body: impl FnOnce(&ExperimentConfig, &mut Outputs) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut out = open_outputs(cfg, command)?;
    let result = body(cfg, &mut out);
    let status = match &result {
        Ok(()) => "ok",
        Err(CliError::Config(_)) => "config_error",
        Err(CliError::Numerical(msg)) => {
            out.write("diagnostic.txt", format!("{msg}\n").as_bytes())?;
            "numerical_failure"
        }
        Err(CliError::Threshold(_)) => "threshold_miss",
    };
    out.set("status", status);
    let path = out.finish()?;
    eprintln!("manifest written to {}", path.display());
    result
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData { experiment } => {
            let cfg = resolve_for(cli, experiment.map(Into::into))?;
            execute(&cfg, "gen-data", gen_data)
        }
        Command::Train { experiment } => {
            let cfg = resolve_for(cli, experiment.map(Into::into))?;
            execute(&cfg, "train", train)
        }
        Command::Spectrum { experiment, checkpoint } => {
            let cfg = resolve_for(cli, experiment.map(Into::into))?;
            let path = checkpoint.clone().unwrap_or_else(|| cfg.out.join(CHECKPOINT));
            execute(&cfg, "spectrum", |cfg, out| spectrum(cfg, out, &path))
        }
        Command::Srb { experiment } => {
            let cfg = resolve_for(cli, experiment.map(Into::into))?;
            execute(&cfg, "srb", srb)
        }
        Command::Baseline { experiment, modes } => {
            let mut cfg = resolve_for(cli, experiment.map(Into::into))?;
            if modes.is_some() {
                cfg.baseline.modes_per_dim = *modes;
            }
            execute(&cfg, "baseline", baseline)
        }
        Command::Reproduce {
            target,
            fourier_only,
            checkpoint,
        } => crate::reproduce::reproduce(cli, *target, *fourier_only, checkpoint.as_deref()),
    }
}

pub fn splits_csv(ds: &Dataset, order: usize) -> Result<Vec<u8>, CliError> {
    let rows = [("train", &ds.train), ("validation", &ds.validation), ("test", &ds.test)]
        .into_iter()
        .map(|(name, s)| {
            vec![
                name.to_string(),
                s.len().to_string(),
                s.inputs.nrows().to_string(),
                order.to_string(),
                s.iterates.is_some().to_string(),
                hex(&s.coeff_hash()),
            ]
        });
    csv_bytes(&["split", "functions", "grid_points", "order", "iterates", "coeff_sha256"], rows)
}

fn gen_data(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ds = build_dataset(&cfg.train)?;
    out.write(DATA_CACHE, &ds.to_bytes())?;
    out.write("splits.csv", &splits_csv(&ds, cfg.train.data.order)?)?;
    out.set("dataset_sha256", hex(&ds.hash()));
    Ok(())
}

pub fn log_progress(p: Progress) {
    let Progress::Validation { epoch, value, best } = p;
    eprintln!("epoch {epoch:>6}  validation {value:.4e}  best {best:.4e}");
}

/// Train from the cached (or freshly generated) dataset in `out` and write
/// the checkpoint, curves and basis plots.
pub fn train_into(cfg: &ExperimentConfig, out: &mut Outputs, prefix: &str) -> Result<Trained, CliError> {
    let data = Dataset::load_or_build(&cfg.train, &out.path(DATA_CACHE))?;
    out.record_file(DATA_CACHE)?;
    let trained = train_model(&cfg.train, &data, &mut log_progress, Some(out.dir()))?;
    eprintln!(
        "trained in {:.1}s; best epoch {}, test error {:.4e}",
        trained.report.wall_clock_secs, trained.report.best_epoch, trained.report.test_error
    );
    write_training_artifacts(cfg, out, prefix, &trained)?;
    Ok(trained)
}

pub fn write_training_artifacts(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    prefix: &str,
    trained: &Trained,
) -> Result<(), CliError> {
    let r = &trained.report;
    out.write(&format!("{prefix}{CHECKPOINT}"), &trained.checkpoint)?;
    out.write(&format!("{prefix}curves.csv"), r.curves_csv().as_bytes())?;
    let train_curve: Vec<(f64, f64)> = r.train_curve.iter().map(|e| (e.epoch as f64, e.loss.e1)).collect();
    let val_curve: Vec<(f64, f64)> = r.validation_curve.iter().map(|&(e, v)| (e as f64, v)).collect();
    let svg = plot::line_chart(
        &[("train E1", train_curve), ("validation error", val_curve)],
        true,
        "training curves",
    );
    out.write(&format!("{prefix}curves.svg"), svg.as_bytes())?;
    let report = csv_bytes(
        &["metric", "value"],
        [
            vec!["best_epoch".into(), r.best_epoch.to_string()],
            vec!["best_validation".into(), num(r.best_validation)],
            vec!["test_error".into(), num(r.test_error)],
            vec!["parameter_count".into(), r.parameter_count.to_string()],
        ],
    )?;
    out.write(&format!("{prefix}report.csv"), &report)?;
    out.set(&format!("{prefix}metric.test_error"), num(r.test_error));
    out.set(&format!("{prefix}metric.best_epoch"), r.best_epoch);
    write_basis(cfg, out, prefix, trained)
}

const BASIS_PLOTS: usize = 4;

fn write_basis(cfg: &ExperimentConfig, out: &mut Outputs, prefix: &str, trained: &Trained) -> Result<(), CliError> {
    let grid = basisop::function_space::Grid::new(cfg.train.map.dim(), cfg.spectrum.grid_per_side)?;
    let basis = trained.model.encode_basis(&grid)?;
    let shown = basis.ncols().min(if grid.dim() == 1 { basis.ncols() } else { BASIS_PLOTS });
    let coords = point_columns(&grid);
    let mut header: Vec<String> = coord_names(grid.dim()).iter().map(|s| s.to_string()).collect();
    header.extend((0..shown).map(|j| format!("phi_{j}")));
    let rows = (0..grid.len()).map(|i| {
        let mut row: Vec<String> = coords[i].iter().map(|&c| num(c)).collect();
        row.extend((0..shown).map(|j| num(basis[[i, j]])));
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write(&format!("{prefix}basis.csv"), &csv_bytes(&header_refs, rows)?)?;
    if grid.dim() == 1 {
        let series: Vec<(String, Vec<(f64, f64)>)> = (0..shown.min(6))
            .map(|j| {
                let pts = (0..grid.len()).map(|i| (coords[i][0], basis[[i, j]])).collect();
                (format!("phi_{j}"), pts)
            })
            .collect();
        let refs: Vec<(&str, Vec<(f64, f64)>)> = series.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
        out.write(&format!("{prefix}basis.svg"), plot::line_chart(&refs, false, "learned basis").as_bytes())?;
    } else {
        let m = grid.points_per_side();
        for j in 0..shown {
            let col: Vec<f64> = basis.column(j).to_vec();
            let svg = plot::heatmap(&transpose_grid(&col, m), m, m, &format!("basis function {j}"));
            out.write(&format!("{prefix}basis_{j}.svg"), svg.as_bytes())?;
        }
    }
    Ok(())
}

fn coord_names(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["theta"]
    } else {
        &["x", "y"]
    }
}

fn point_columns(grid: &basisop::function_space::Grid) -> Vec<Vec<f64>> {
    grid.points
        .iter()
        .map(|p| match *p {
            basisop::dynamics::StatePoint::Angle(t) => vec![t],
            basisop::dynamics::StatePoint::Torus(x, y) => vec![x, y],
        })
        .collect()
}

/// Grid values are stored x-major; heatmap rows run along y.
pub fn transpose_grid(values: &[f64], m: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            t[j * m + i] = values[i * m + j];
        }
    }
    t
}

fn train(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    train_into(cfg, out, "").map(|_| ())
}

pub fn write_spectrum(out: &mut Outputs, a: &SpectrumAnalysis, functions: usize, prefix: &str) -> Result<(), CliError> {
    let rows = a.report.pairs.iter().zip(&a.report.diagnostics).enumerate().map(|(i, (p, d))| {
        vec![
            i.to_string(),
            num(p.value.re),
            num(p.value.im),
            num(p.value.norm()),
            num(p.value.arg()),
            num(d.residual),
            num(d.ratio),
        ]
    });
    out.write(
        &format!("{prefix}eigenvalues.csv"),
        &csv_bytes(&["index", "re", "im", "modulus", "argument", "residual", "hm1_over_l2"], rows)?,
    )?;
    let pts: Vec<(f64, f64)> = a.report.pairs.iter().map(|p| (p.value.re, p.value.im)).collect();
    out.write(
        &format!("{prefix}eigenvalues.svg"),
        plot::eigenvalue_scatter(&pts, "eigenvalues of G M").as_bytes(),
    )?;
    let g = &a.normalized_gram;
    let rows = g.axis_iter(Axis(0)).map(|r| r.iter().map(|&v| num(v)).collect::<Vec<_>>());
    let header: Vec<String> = (0..g.ncols()).map(|j| format!("c{j}")).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write(&format!("{prefix}gram.csv"), &csv_bytes(&header_refs, rows)?)?;
    let flat: Vec<f64> = g.iter().copied().collect();
    // rows top to bottom like a matrix
    let mut flipped = Vec::with_capacity(flat.len());
    for r in (0..g.nrows()).rev() {
        flipped.extend_from_slice(&flat[r * g.ncols()..(r + 1) * g.ncols()]);
    }
    out.write(
        &format!("{prefix}gram.svg"),
        plot::heatmap(&flipped, g.nrows(), g.ncols(), "normalized Gram matrix").as_bytes(),
    )?;

    let shown = functions.min(a.report.pairs.len());
    let coords = point_columns(&a.grid);
    let mut header: Vec<String> = coord_names(a.grid.dim()).iter().map(|s| s.to_string()).collect();
    for j in 0..shown {
        header.push(format!("psi_{j}_re"));
        header.push(format!("psi_{j}_im"));
    }
    let rows = (0..a.grid.len()).map(|i| {
        let mut row: Vec<String> = coords[i].iter().map(|&c| num(c)).collect();
        for p in &a.report.pairs[..shown] {
            row.push(num(p.field[i].re));
            row.push(num(p.field[i].im));
        }
        row
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write(&format!("{prefix}eigenfunctions.csv"), &csv_bytes(&header_refs, rows)?)?;
    if a.grid.dim() == 2 {
        let m = a.grid.points_per_side();
        for (j, p) in a.report.pairs[..shown.min(BASIS_PLOTS)].iter().enumerate() {
            let re: Vec<f64> = p.field.iter().map(|z| z.re).collect();
            let svg = plot::heatmap(&transpose_grid(&re, m), m, m, &format!("eigenfunction {j} (real part)"));
            out.write(&format!("{prefix}eigenfunction_{j}.svg"), svg.as_bytes())?;
        }
    }
    if let Some(lead) = a.report.pairs.first() {
        out.set(&format!("{prefix}metric.leading_eigenvalue"), format!("{}{:+}i", num(lead.value.re), num(lead.value.im)));
    }
    out.set(&format!("{prefix}metric.gram_max_off_diagonal"), num(a.max_off_diagonal));
    if let Some(r) = a.rotation {
        out.set(&format!("{prefix}metric.min_modulus"), num(r.min_modulus));
        out.set(&format!("{prefix}metric.max_modulus"), num(r.max_modulus));
        out.set(&format!("{prefix}metric.max_argument_offset"), num(r.max_arg_offset));
        out.set(&format!("{prefix}metric.correlation_plus"), num(r.corr_plus));
        out.set(&format!("{prefix}metric.correlation_minus"), num(r.corr_minus));
    }
    Ok(())
}

fn spectrum(cfg: &ExperimentConfig, out: &mut Outputs, checkpoint: &Path) -> Result<(), CliError> {
    let model = load_model(checkpoint, &cfg.train)?;
    let analysis = analyze_spectrum(&model, &cfg.train.map, cfg.spectrum.grid_per_side)?;
    write_spectrum(out, &analysis, cfg.spectrum.eigenfunctions, "")
}

pub fn write_density(out: &mut Outputs, name: &str, grid: &basisop::function_space::Grid, values: &[f64], title: &str) -> Result<(), CliError> {
    let coords = point_columns(grid);
    let rows = coords
        .iter()
        .zip(values)
        .map(|(c, &v)| vec![num(c[0]), num(c[1]), num(v)]);
    out.write(&format!("{name}.csv"), &csv_bytes(&["x", "y", "density"], rows)?)?;
    let m = grid.points_per_side();
    out.write(&format!("{name}.svg"), plot::heatmap(&transpose_grid(values, m), m, m, title).as_bytes())
}

fn srb(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let truth = ground_truth(&cfg.train.map, cfg.srb.into())?;
    let values: Vec<f64> = truth.srb.density.values.to_vec();
    write_density(out, "srb", &truth.grid, &values, "reference SRB density")?;
    out.set("metric.srb_eigenvalue", num(truth.srb.eigenvalue));
    out.set("metric.srb_iterations", truth.srb.iterations);
    Ok(())
}

fn baseline(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let truth = ground_truth(&cfg.train.map, cfg.srb.into())?;
    let row = fourier_row(&truth, cfg.baseline_modes())?;
    out.write("baseline.csv", ErrorTable { rows: vec![row] }.to_csv().as_bytes())?;
    out.set("metric.srb_eigenvalue", num(truth.srb.eigenvalue));
    Ok(())
}
