//! `reproduce <target>`: regenerate a published table or figure and check it
//! against the tolerance table embedded here. Misses exit with status 3.

use std::path::Path;

use basisop::galerkin::ErrorRow;
use basisop::trainer::{build_dataset, Dataset, Experiment, Scale, TrainConfig};
use num_complex::Complex64;

use crate::analysis::{analyze_spectrum, fourier_row, ground_truth, learned_row, load_model, train_model, Truth};
use crate::commands::{
    csv_bytes, execute, log_progress, num, resolve_for, train_into, write_spectrum, write_training_artifacts,
};
use crate::config::{experiment_name, ExperimentConfig};
use crate::manifest::Outputs;
use crate::plot;
use crate::{Cli, CliError, Target};

/// Fourier rows at `N = 324` and `N = 676`: L² and H⁻¹ projection, then
/// L² and H⁻¹ approximation.
pub const TABLE4_FOURIER: [f64; 4] = [2.647e-1, 1.576e-2, 2.648e-1, 1.578e-2];
pub const TABLE5_FOURIER: [f64; 4] = [2.409e-1, 1.095e-2, 2.414e-1, 1.132e-2];
pub const TABLE4_FOURIER_MODES: usize = 18;
pub const TABLE5_FOURIER_MODES: usize = 26;
pub const FOURIER_REL_TOL: f64 = 0.05;

/// Published circle test errors by sparsity weight.
pub const TABLE3: [(f64, f64); 4] = [(0.0, 3.974e-3), (0.1, 3.641e-3), (0.2, 3.958e-3), (0.6, 6.234e-3)];
pub const CIRCLE_TEST_ERROR_MAX: f64 = 1.5e-2;
/// Looser bound for the reduced desk-scale circle encoder.
pub const CIRCLE_DESK_TEST_ERROR_MAX: f64 = 5e-2;

pub const MODULUS_RANGE: (f64, f64) = (0.85, 1.05);
pub const ARGUMENT_TOL: f64 = 0.1;
pub const CORRELATION_MIN: f64 = 0.95;
pub const GRAM_OFF_DIAGONAL_MAX: f64 = 0.2;

pub const LEADING_EIGENVALUE_TOL: f64 = 0.05;
pub const PROJECTION_ADVANTAGE: f64 = 1.5;
pub const SEEDS: u64 = 3;
pub const SEEDS_REQUIRED: usize = 2;

/// One tolerance check; `value` must lie in `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Check {
            name: name.into(),
            value,
            lower,
            upper,
        }
    }

    pub fn relative(name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        let span = reference.abs() * tol;
        Check::new(name, value, reference - span, reference + span)
    }

    pub fn at_most(name: impl Into<String>, value: f64, upper: f64) -> Self {
        Check::new(name, value, f64::NEG_INFINITY, upper)
    }

    pub fn at_least(name: impl Into<String>, value: f64, lower: f64) -> Self {
        Check::new(name, value, lower, f64::INFINITY)
    }

    pub fn passed(&self) -> bool {
        self.value >= self.lower && self.value <= self.upper
    }
}

/// Write `checks.csv`, note each verdict in the manifest and turn misses
/// into a threshold error.
pub fn settle(out: &mut Outputs, checks: &[Check]) -> Result<(), CliError> {
    let rows = checks.iter().map(|c| {
        vec![
            c.name.clone(),
            num(c.value),
            num(c.lower),
            num(c.upper),
            if c.passed() { "pass" } else { "fail" }.to_string(),
        ]
    });
    out.write("checks.csv", &csv_bytes(&["check", "value", "lower", "upper", "verdict"], rows)?)?;
    for c in checks {
        out.set(&format!("check.{}", c.name), if c.passed() { "pass" } else { "fail" });
        eprintln!(
            "{:<4} {:<40} {:.6e} in [{:.6e}, {:.6e}]",
            if c.passed() { "ok" } else { "MISS" },
            c.name,
            c.value,
            c.lower,
            c.upper
        );
    }
    let misses: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{} = {:.6e} outside [{:.6e}, {:.6e}]", c.name, c.value, c.lower, c.upper))
        .collect();
    if misses.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(misses))
    }
}

pub fn error_rows_csv(rows: &[ErrorRow]) -> Result<Vec<u8>, CliError> {
    let body = rows.iter().map(|r| {
        vec![
            r.label.clone(),
            num(r.projection.l2),
            num(r.projection.h_minus_one),
            num(r.approximation.l2),
            num(r.approximation.h_minus_one),
        ]
    });
    csv_bytes(
        &["basis", "l2_projection", "hm1_projection", "l2_approximation", "hm1_approximation"],
        body,
    )
}

pub fn row_values(r: &ErrorRow) -> [f64; 4] {
    [r.projection.l2, r.projection.h_minus_one, r.approximation.l2, r.approximation.h_minus_one]
}

const ROW_FIELDS: [&str; 4] = ["l2_projection", "hm1_projection", "l2_approximation", "hm1_approximation"];

pub fn fourier_checks(prefix: &str, row: &ErrorRow, reference: &[f64; 4]) -> Vec<Check> {
    row_values(row)
        .iter()
        .zip(reference)
        .zip(ROW_FIELDS)
        .map(|((&v, &r), f)| Check::relative(format!("{prefix}_fourier_{f}"), v, r, FOURIER_REL_TOL))
        .collect()
}

fn target_experiment(target: Target) -> Option<Experiment> {
    match target {
        Target::Table1 => None,
        Target::Table3 | Target::Fig6 => Some(Experiment::Circle),
        Target::Table4 => Some(Experiment::PerturbedCat),
        Target::Table5 => Some(Experiment::ConjugatedCat),
    }
}

fn default_out(cli: &Cli, cfg: &mut ExperimentConfig, name: &str) {
    if cli.out.is_none() {
        cfg.out = Path::new("runs").join(name);
    }
}

pub fn reproduce(cli: &Cli, target: Target, fourier_only: bool, checkpoint: Option<&Path>) -> Result<(), CliError> {
    if fourier_only && !matches!(target, Target::Table4 | Target::Table5) {
        return Err(CliError::Config("--fourier-only applies to table4 and table5".into()));
    }
    let name = match target {
        Target::Table1 => "table1",
        Target::Table3 => "table3",
        Target::Table4 => "table4",
        Target::Table5 => "table5",
        Target::Fig6 => "fig6",
    };
    let experiment = target_experiment(target);
    let mut cfg = match experiment {
        Some(e) => resolve_for(cli, Some(e))?,
        // table1 spans two experiments; the config may name either
        None => match resolve_for(cli, None) {
            Ok(c) => c,
            Err(_) => resolve_for(cli, Some(Experiment::Circle))?,
        },
    };
    default_out(cli, &mut cfg, name);
    let command = format!("reproduce {name}{}", if fourier_only { " --fourier-only" } else { "" });
    execute(&cfg, &command, |cfg, out| match target {
        Target::Table1 => table1(cli, cfg, out),
        Target::Table3 => table3(cfg, out),
        Target::Table4 | Target::Table5 => anosov_table(cfg, out, target, fourier_only),
        Target::Fig6 => fig6(cfg, out, checkpoint),
    })
}

/// Published data parameters: D, K, validation, test, n.
const TABLE1: [(Experiment, [usize; 5]); 2] = [
    (Experiment::Circle, [1000, 9, 500, 100, 100]),
    (Experiment::PerturbedCat, [3000, 5, 500, 500, 10000]),
];

fn table1(cli: &Cli, cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (experiment, published) in TABLE1 {
        let mut c = resolve_for(cli, Some(experiment)).unwrap_or_else(|_| {
            let mut c = cfg.clone();
            c.train = TrainConfig::preset(experiment, cfg.scale);
            c.train.seed = cfg.seed;
            c
        });
        c.scale = cfg.scale;
        let ds = build_dataset(&c.train)?;
        let width = ds.train.coeffs.ncols();
        let order = (((width as f64).powf(1.0 / c.train.map.dim() as f64)).round() as usize - 1) / 2;
        let measured = [ds.train.len(), order, ds.validation.len(), ds.test.len(), ds.train.inputs.nrows()];
        let expected = if cfg.scale == Scale::Paper {
            published
        } else {
            let d = &c.train.data;
            [d.train, d.order, d.validation, d.test, c.train.grid()?.len()]
        };
        let label = experiment_name(experiment);
        for ((m, e), field) in measured.iter().zip(expected).zip(["train", "order", "validation", "test", "grid_points"]) {
            checks.push(Check::new(format!("{label}_{field}"), *m as f64, e as f64, e as f64));
        }
        let mut row = vec![label.to_string()];
        row.extend(measured.iter().map(|v| v.to_string()));
        row.push(ds.train.iterates.is_some().to_string());
        rows.push(row);
    }
    out.write(
        "table1.csv",
        &csv_bytes(&["example", "train", "order", "validation", "test", "grid_points", "iterates"], rows)?,
    )?;
    settle(out, &checks)
}

fn circle_threshold(scale: Scale) -> f64 {
    match scale {
        Scale::Paper => CIRCLE_TEST_ERROR_MAX,
        Scale::Desk => CIRCLE_DESK_TEST_ERROR_MAX,
    }
}

fn table3(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let data = Dataset::load_or_build(&cfg.train, &out.path(crate::commands::DATA_CACHE))?;
    out.record_file(crate::commands::DATA_CACHE)?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (beta2, published) in TABLE3 {
        let mut run = cfg.clone();
        run.train.weights.beta2 = beta2;
        eprintln!("training with beta2 = {beta2}");
        let trained = train_model(&run.train, &data, &mut log_progress, Some(out.dir()))?;
        let prefix = format!("beta2_{beta2}_");
        write_training_artifacts(&run, out, &prefix, &trained)?;
        rows.push(vec![
            format!("{beta2}"),
            num(trained.report.test_error),
            num(published),
            trained.report.best_epoch.to_string(),
        ]);
        if beta2 == 0.0 {
            checks.push(Check::at_most("test_error_beta2_0", trained.report.test_error, circle_threshold(cfg.scale)));
        }
    }
    out.write(
        "table3.csv",
        &csv_bytes(&["beta2", "test_error", "published", "best_epoch"], rows)?,
    )?;
    settle(out, &checks)
}

pub fn rotation_checks(a: &crate::analysis::SpectrumAnalysis) -> Vec<Check> {
    let r = a.rotation.expect("circle analysis");
    vec![
        Check::at_least("min_modulus", r.min_modulus, MODULUS_RANGE.0),
        Check::at_most("max_modulus", r.max_modulus, MODULUS_RANGE.1),
        Check::at_most("max_argument_offset", r.max_arg_offset, ARGUMENT_TOL),
        Check::at_least("correlation_plus", r.corr_plus, CORRELATION_MIN),
        Check::at_least("correlation_minus", r.corr_minus, CORRELATION_MIN),
        Check::at_most("gram_max_off_diagonal", a.max_off_diagonal, GRAM_OFF_DIAGONAL_MAX),
    ]
}

fn fig6(cfg: &ExperimentConfig, out: &mut Outputs, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let mut checks = Vec::new();
    let model = match checkpoint {
        Some(path) => load_model(path, &cfg.train)?,
        None => {
            let trained = train_into(cfg, out, "")?;
            checks.push(Check::at_most("test_error", trained.report.test_error, circle_threshold(cfg.scale)));
            trained.model
        }
    };
    let analysis = analyze_spectrum(&model, &cfg.train.map, cfg.spectrum.grid_per_side)?;
    write_spectrum(out, &analysis, cfg.spectrum.eigenfunctions, "")?;
    let pts: Vec<(f64, f64)> = analysis.report.pairs.iter().map(|p| (p.value.re, p.value.im)).collect();
    out.write("fig6.svg", plot::eigenvalue_scatter(&pts, "learned spectrum, circle rotation").as_bytes())?;

    // the k = ±1 eigenfunctions, phase-aligned with e^{±iθ} and scaled to unit RMS
    let alpha = match cfg.train.map {
        basisop::dynamics::MapDescriptor::CircleRotation { alpha } => alpha,
        _ => unreachable!("fig6 is a circle target"),
    };
    let thetas: Vec<f64> = analysis
        .grid
        .points
        .iter()
        .map(|p| match *p {
            basisop::dynamics::StatePoint::Angle(t) => t,
            _ => unreachable!(),
        })
        .collect();
    let mut columns = Vec::new();
    for m in [1.0f64, -1.0] {
        let target = Complex64::from_polar(1.0, -m * alpha);
        let pair = analysis
            .report
            .pairs
            .iter()
            .min_by(|a, b| (a.value - target).norm().total_cmp(&(b.value - target).norm()))
            .ok_or_else(|| CliError::Numerical("empty spectrum".into()))?;
        let inner: Complex64 = pair
            .field
            .iter()
            .zip(&thetas)
            .map(|(z, &t)| z * Complex64::from_polar(1.0, -m * t))
            .sum();
        let rms = (pair.field.iter().map(|z| z.norm_sqr()).sum::<f64>() / thetas.len() as f64).sqrt();
        let phase = if inner.norm() > 0.0 { inner.conj() / inner.norm() } else { Complex64::new(1.0, 0.0) };
        columns.push(pair.field.mapv(|z| z * phase / rms));
    }
    let rows = thetas.iter().enumerate().map(|(i, &t)| {
        vec![
            num(t),
            num(columns[0][i].re),
            num(columns[0][i].im),
            num(t.cos()),
            num(t.sin()),
            num(columns[1][i].re),
            num(columns[1][i].im),
        ]
    });
    out.write(
        "fig7_eigenfunctions.csv",
        &csv_bytes(&["theta", "plus_re", "plus_im", "cos", "sin", "minus_re", "minus_im"], rows)?,
    )?;
    let series = vec![
        ("learned k=+1 (re)", thetas.iter().zip(columns[0].iter()).map(|(&t, z)| (t, z.re)).collect()),
        ("learned k=+1 (im)", thetas.iter().zip(columns[0].iter()).map(|(&t, z)| (t, z.im)).collect()),
        ("cos", thetas.iter().map(|&t| (t, t.cos())).collect()),
        ("sin", thetas.iter().map(|&t| (t, t.sin())).collect()),
    ];
    out.write("fig7.svg", plot::line_chart(&series, false, "k = 1 eigenfunction").as_bytes())?;

    checks.extend(rotation_checks(&analysis));
    settle(out, &checks)
}

fn fourier_reference(target: Target) -> (usize, [f64; 4], &'static str) {
    match target {
        Target::Table4 => (TABLE4_FOURIER_MODES, TABLE4_FOURIER, "table4"),
        _ => (TABLE5_FOURIER_MODES, TABLE5_FOURIER, "table5"),
    }
}

/// Outcome of one learned-basis run against the reference density.
pub struct SeedResult {
    pub seed: u64,
    pub row: ErrorRow,
    pub leading: Complex64,
    pub advantage: f64,
}

impl SeedResult {
    pub fn passed(&self) -> bool {
        (self.leading - Complex64::new(1.0, 0.0)).norm() <= LEADING_EIGENVALUE_TOL && self.advantage >= PROJECTION_ADVANTAGE
    }
}

/// Train at `seed` and score the learned basis against `truth` and the
/// equal-cardinality Fourier row.
pub fn learned_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    truth: &Truth,
    fourier: &ErrorRow,
    out: Option<&mut Outputs>,
) -> Result<SeedResult, CliError> {
    let mut run = cfg.clone();
    run.seed = seed;
    run.train.seed = seed;
    let data = build_dataset(&run.train)?;
    let dir = out.as_ref().map(|o| o.dir().to_path_buf());
    let trained = train_model(&run.train, &data, &mut log_progress, dir.as_deref())?;
    if let Some(out) = out {
        write_training_artifacts(&run, out, &format!("seed_{seed}_"), &trained)?;
    }
    let (mut row, leading) = learned_row(truth, &trained.model)?;
    row.label = format!("{}_seed_{seed}", row.label);
    let advantage = fourier.projection.l2 / row.projection.l2;
    Ok(SeedResult {
        seed,
        row,
        leading,
        advantage,
    })
}

fn anosov_table(cfg: &ExperimentConfig, out: &mut Outputs, target: Target, fourier_only: bool) -> Result<(), CliError> {
    let (modes, reference, name) = fourier_reference(target);
    let truth = ground_truth(&cfg.train.map, cfg.srb.into())?;
    out.set("metric.srb_eigenvalue", num(truth.srb.eigenvalue));
    let published = fourier_row(&truth, modes)?;
    let mut checks = fourier_checks(name, &published, &reference);
    let mut rows = vec![published];
    if !fourier_only {
        let equal = fourier_row(&truth, cfg.baseline_modes())?;
        let mut seeds = Vec::new();
        for seed in cfg.seed..cfg.seed + SEEDS {
            eprintln!("training seed {seed}");
            seeds.push(learned_seed(cfg, seed, &truth, &equal, Some(out))?);
        }
        let seed_rows = seeds.iter().map(|s| {
            vec![
                s.seed.to_string(),
                num(s.leading.re),
                num(s.leading.im),
                num(s.advantage),
                if s.passed() { "pass" } else { "fail" }.to_string(),
            ]
        });
        out.write(
            "seeds.csv",
            &csv_bytes(&["seed", "leading_re", "leading_im", "l2_projection_advantage", "verdict"], seed_rows)?,
        )?;
        let passing = seeds.iter().filter(|s| s.passed()).count();
        checks.push(Check::at_least("seeds_passing", passing as f64, SEEDS_REQUIRED as f64));
        rows.push(equal);
        rows.extend(seeds.into_iter().map(|s| s.row));
    }
    out.write(&format!("{name}.csv"), &error_rows_csv(&rows)?)?;
    settle(out, &checks)
}
