//! Experiment configuration files.
//!
//! A config is TOML with a required `schema_version` and an `experiment`
//! name. Everything else is optional: the `[train]` table overlays the
//! preset for the chosen experiment and scale key by key, and the
//! `[spectrum]`, `[baseline]` and `[srb]` tables tune the analysis commands.
//! Unknown keys anywhere are rejected.
//!
//! ```toml
//! schema_version = 1
//! experiment = "perturbed_cat"   # circle | perturbed_cat | conjugated_cat
//! scale = "desk"                 # paper | desk
//! seed = 3
//!
//! [train]
//! epochs = 400
//! hidden = [256, 256]
//! data = { train = 300 }
//!
//! [baseline]
//! modes_per_dim = 8
//! ```
//!
//! Precedence, lowest first: preset, `[train]` overlay, top-level keys,
//! command-line flags.

use std::path::{Path, PathBuf};

use basisop::galerkin::SrbOptions;
use basisop::trainer::{hex, Experiment, Scale, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub experiment: Option<Experiment>,
    pub scale: Option<Scale>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub train: Option<toml::Table>,
    pub spectrum: Option<SpectrumOptions>,
    pub baseline: Option<BaselineOptions>,
    pub srb: Option<SrbSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    /// Points per side of the analysis grid.
    pub grid_per_side: usize,
    /// Number of leading eigenfunctions written out.
    pub eigenfunctions: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            grid_per_side: 100,
            eigenfunctions: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineOptions {
    /// Real Fourier modes per dimension; defaults to `√N` of the learned basis.
    pub modes_per_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrbSection {
    pub modes_per_side: usize,
    pub quad_per_side: usize,
    pub analysis_per_side: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SrbSection {
    fn default() -> Self {
        let o = SrbOptions::default();
        SrbSection {
            modes_per_side: o.modes_per_side,
            quad_per_side: o.quad_per_side,
            analysis_per_side: o.analysis_per_side,
            max_iter: o.max_iter,
            tol: o.tol,
        }
    }
}

impl From<SrbSection> for SrbOptions {
    fn from(s: SrbSection) -> Self {
        SrbOptions {
            modes_per_side: s.modes_per_side,
            quad_per_side: s.quad_per_side,
            analysis_per_side: s.analysis_per_side,
            max_iter: s.max_iter,
            tol: s.tol,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub scale: Option<Scale>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub scale: Scale,
    pub seed: u64,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub spectrum: SpectrumOptions,
    pub baseline: BaselineOptions,
    pub srb: SrbSection,
}

impl ExperimentConfig {
    /// Canonical TOML rendering of the resolved settings, minus the output
    /// directory so identical runs in different places hash alike.
    pub fn canonical(&self) -> String {
        let mut copy = self.clone();
        copy.out = PathBuf::new();
        toml::to_string(&copy).expect("resolved config is serializable")
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn baseline_modes(&self) -> usize {
        self.baseline.modes_per_dim.unwrap_or_else(|| {
            let n = self.train.basis_size as f64;
            match self.train.map.dim() {
                1 => self.train.basis_size,
                _ => n.sqrt().round() as usize,
            }
        })
    }
}

pub fn read_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ConfigFile, CliError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    Ok(file)
}

/// Overlay `patch` onto `base`, recursing into tables.
fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

pub fn resolve(file: Option<&ConfigFile>, cli: &Overrides) -> Result<ExperimentConfig, CliError> {
    let empty = ConfigFile {
        schema_version: SCHEMA_VERSION,
        ..Default::default()
    };
    let file = file.unwrap_or(&empty);
    let experiment = cli
        .experiment
        .or(file.experiment)
        .ok_or_else(|| CliError::Config("no experiment given on the command line or in the config".into()))?;
    if let (Some(a), Some(b)) = (cli.experiment, file.experiment) {
        if a != b {
            return Err(CliError::Config(format!(
                "command targets {a:?} but the config describes {b:?}"
            )));
        }
    }
    let scale = cli.scale.or(file.scale).unwrap_or(Scale::Desk);
    let mut train = TrainConfig::preset(experiment, scale);
    if let Some(patch) = &file.train {
        let mut table = toml::Table::try_from(&train).expect("preset is serializable");
        merge(&mut table, patch);
        train = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[train]: {e}")))?;
    }
    let seed = cli.seed.or(file.seed).unwrap_or(train.seed);
    train.seed = seed;
    train.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let srb = file.srb.unwrap_or_default();
    let spectrum = file.spectrum.unwrap_or_default();
    if spectrum.grid_per_side < 2 {
        return Err(CliError::Config("[spectrum] grid_per_side must be at least 2".into()));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(experiment_name(experiment)));
    Ok(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment,
        scale,
        seed,
        out,
        train,
        spectrum,
        baseline: file.baseline.unwrap_or_default(),
        srb,
    })
}

pub fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Circle => "circle",
        Experiment::PerturbedCat => "perturbed_cat",
        Experiment::ConjugatedCat => "conjugated_cat",
    }
}

pub fn scale_name(s: Scale) -> &'static str {
    match s {
        Scale::Paper => "paper",
        Scale::Desk => "desk",
    }
}
