//! Training data: random trigonometric polynomials and their images under
//! the transfer operator, sampled on the training grid.
//!
//! Each split draws from its own ChaCha8 stream of the run seed (train 1,
//! validation 2, test 3; stream 0 belongs to the model), so splits never
//! share coefficient draws and each split is reproducible on its own.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::function_space::{InverseOrbits, TrigEvaluator, TrigPoly};

const MAGIC: &[u8; 8] = b"BOPDATA\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train = 1,
    Validation = 2,
    Test = 3,
}

/// `D` functions stored column-wise (`n × D`), with their coefficients (`D × width`).
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub coeffs: Array2<f64>,
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub iterates: Option<Array2<f64>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// SHA-256 of the coefficient tensor.
    pub fn coeff_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in self.coeffs.iter() {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Hash of the config fields that determine the data.
    pub key: [u8; 32],
    pub train: Split,
    pub validation: Split,
    pub test: Split,
}

/// Fields that determine the generated data, hashed for cache validation.
fn data_key(cfg: &TrainConfig) -> [u8; 32] {
    let iterates = (cfg.k > 0).then_some(cfg.k);
    let text = format!(
        "{:?}|{}|{:?}|{:?}|{}",
        cfg.map, cfg.grid_per_side, cfg.data, iterates, cfg.seed
    );
    Sha256::digest(text.as_bytes()).into()
}

fn generate_split(cfg: &TrainConfig, kind: SplitKind, count: usize, ctx: &Context) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(kind as u64);
    let dim = cfg.map.dim();
    let order = cfg.data.order;
    let mut polys = Vec::with_capacity(count);
    while polys.len() < count {
        let p = TrigPoly::sample(&mut rng, dim, order)?;
        // a zero image has no relative error; such draws are skipped
        if p.coeffs.iter().any(|&c| c != 0.0) {
            polys.push(p);
        }
    }
    let width = TrigPoly::dictionary_size(dim, order);
    let n = ctx.grid_eval.len();
    let columns: Vec<(Array1<f64>, Array1<f64>, Option<Array1<f64>>)> = polys
        .par_iter()
        .map(|p| {
            let input = ctx.grid_eval.eval(p);
            let target = ctx.one_step.0.eval(p) / &ctx.one_step.1;
            let iterate = ctx.k_step.as_ref().map(|(ev, w)| ev.eval(p) / w);
            (input, target, iterate)
        })
        .collect();
    let mut coeffs = Array2::zeros((count, width));
    let mut inputs = Array2::zeros((n, count));
    let mut targets = Array2::zeros((n, count));
    let mut iterates = ctx.k_step.as_ref().map(|_| Array2::zeros((n, count)));
    for (j, (p, (x, y, z))) in polys.iter().zip(columns).enumerate() {
        coeffs.row_mut(j).assign(&Array1::from(p.coeffs.clone()));
        if y.dot(&y) == 0.0 || z.as_ref().is_some_and(|z| z.dot(z) == 0.0) {
            return Err(Error::ZeroDenominator);
        }
        inputs.column_mut(j).assign(&x);
        targets.column_mut(j).assign(&y);
        if let (Some(it), Some(z)) = (iterates.as_mut(), z) {
            it.column_mut(j).assign(&z);
        }
    }
    if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("generated data"));
    }
    Ok(Split {
        coeffs,
        inputs,
        targets,
        iterates,
    })
}

struct Context {
    grid_eval: TrigEvaluator,
    one_step: (TrigEvaluator, Array1<f64>),
    k_step: Option<(TrigEvaluator, Array1<f64>)>,
}

/// Generate all three splits for a config.
pub fn build_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let order = cfg.data.order;
    let one = InverseOrbits::compute(&cfg.map, &grid.points, 1)?;
    let k_step = if cfg.k > 0 {
        let orbit = if cfg.k == 1 { one.clone() } else { one.extend(&cfg.map, cfg.k - 1)? };
        Some((TrigEvaluator::new(&orbit.points, order), Array1::from(orbit.weights)))
    } else {
        None
    };
    let ctx = Context {
        grid_eval: TrigEvaluator::new(&grid.points, order),
        one_step: (TrigEvaluator::new(&one.points, order), Array1::from(one.weights.clone())),
        k_step,
    };
    Ok(Dataset {
        key: data_key(cfg),
        train: generate_split(cfg, SplitKind::Train, cfg.data.train, &ctx)?,
        validation: generate_split(cfg, SplitKind::Validation, cfg.data.validation, &ctx)?,
        test: generate_split(cfg, SplitKind::Test, cfg.data.test, &ctx)?,
    })
}

impl Dataset {
    /// Whether this dataset was generated for `cfg`.
    pub fn check(&self, cfg: &TrainConfig) -> Result<()> {
        if self.key != data_key(cfg) {
            return Err(Error::invalid("dataset was generated for a different configuration"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.key);
        for split in [&self.train, &self.validation, &self.test] {
            put_matrix(&mut out, &split.coeffs);
            put_matrix(&mut out, &split.inputs);
            put_matrix(&mut out, &split.targets);
            match &split.iterates {
                Some(it) => {
                    out.push(1);
                    put_matrix(&mut out, it);
                }
                None => out.push(0),
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 44 + 32 {
            return Err(Error::Format("dataset cache truncated".into()));
        }
        let (payload, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(Error::Format("dataset cache checksum mismatch".into()));
        }
        if &payload[..8] != MAGIC {
            return Err(Error::Format("not a dataset cache".into()));
        }
        let version = u32::from_le_bytes(payload[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset cache version {version}")));
        }
        let key: [u8; 32] = payload[12..44].try_into().expect("32 bytes");
        let mut pos = 44;
        let mut splits = Vec::with_capacity(3);
        for _ in 0..3 {
            let coeffs = get_matrix(payload, &mut pos)?;
            let inputs = get_matrix(payload, &mut pos)?;
            let targets = get_matrix(payload, &mut pos)?;
            let flag = *payload
                .get(pos)
                .ok_or_else(|| Error::Format("dataset cache truncated".into()))?;
            pos += 1;
            let iterates = match flag {
                0 => None,
                1 => Some(get_matrix(payload, &mut pos)?),
                _ => return Err(Error::Format("bad iterate flag".into())),
            };
            splits.push(Split {
                coeffs,
                inputs,
                targets,
                iterates,
            });
        }
        if pos != payload.len() {
            return Err(Error::Format("trailing bytes in dataset cache".into()));
        }
        let test = splits.pop().expect("three splits");
        let validation = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(Dataset {
            key,
            train,
            validation,
            test,
        })
    }

    /// SHA-256 of the serialized cache.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Reuse a cache at `path` when it matches `cfg`, otherwise regenerate
    /// and overwrite it.
    pub fn load_or_build(cfg: &TrainConfig, path: &Path) -> Result<Self> {
        if path.exists() {
            if let Ok(ds) = Self::load(path) {
                if ds.check(cfg).is_ok() {
                    return Ok(ds);
                }
            }
        }
        let ds = build_dataset(cfg)?;
        ds.save(path)?;
        Ok(ds)
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_matrix(buf: &[u8], pos: &mut usize) -> Result<Array2<f64>> {
    let truncated = || Error::Format("dataset cache truncated".into());
    let word = |pos: &mut usize| -> Result<u64> {
        let b = buf.get(*pos..*pos + 8).ok_or_else(truncated)?;
        *pos += 8;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    };
    let rows = word(pos)? as usize;
    let cols = word(pos)? as usize;
    let len = rows.checked_mul(cols).ok_or_else(truncated)?;
    let bytes = buf.get(*pos..*pos + len * 8).ok_or_else(truncated)?;
    *pos += len * 8;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}
