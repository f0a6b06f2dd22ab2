//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic, format version, dtype tag, config hash,
//! architecture, loss weights, `k`, epoch counters, RNG state, optimizer
//! settings and step, then three tensor groups (parameters, first and
//! second moments) and a trailing SHA-256 of everything before it.
//! Round trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{AdamConfig, AdamState, ArchitectureSpec, BasisOperatorModel, Layer, LossWeights, Params, Real};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BOPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// Position of a ChaCha8 stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub model: BasisOperatorModel<F>,
    pub optimizer: AdamState<F>,
    pub config_hash: [u8; 32],
    pub rng: RngState,
    pub epoch: u64,
    pub best_epoch: u64,
    pub best_validation: f64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn scalar<F: Real>(&mut self, v: F) {
        if F::TAG == 4 {
            self.0.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        } else {
            self.f64(v.f64());
        }
    }
    fn params<F: Real>(&mut self, p: &Params<F>) {
        let tensors = p.tensors();
        self.u64(tensors.len() as u64);
        for t in tensors {
            self.u64(t.len() as u64);
            for &v in t {
                self.scalar(v);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn scalar<F: Real>(&mut self) -> Result<F> {
        if F::TAG == 4 {
            Ok(F::of(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as f64))
        } else {
            Ok(F::of(self.f64()?))
        }
    }
    /// Fill a parameter set whose shapes are already known.
    fn params_into<F: Real>(&mut self, p: &mut Params<F>) -> Result<()> {
        let count = self.usize()?;
        let mut tensors = p.tensors_mut();
        if count != tensors.len() {
            return Err(Error::Format(format!("expected {} tensors, found {count}", tensors.len())));
        }
        for t in tensors.iter_mut() {
            let len = self.usize()?;
            if len != t.len() {
                return Err(Error::Format(format!("tensor length {len} does not match {}", t.len())));
            }
            for v in t.iter_mut() {
                *v = self.scalar()?;
            }
        }
        Ok(())
    }
}

fn empty_params<F: Real>(arch: &ArchitectureSpec) -> Params<F> {
    Params {
        layers: arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer {
                weight: Array2::zeros((i, o)),
                bias: Array1::zeros(o),
            })
            .collect(),
        latent: Array2::zeros((arch.basis_size, arch.basis_size)),
    }
}

impl<F: Real> Checkpoint<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.0.push(F::TAG);
        w.0.extend_from_slice(&self.config_hash);
        let arch = &self.model.arch;
        w.u64(arch.input_dim as u64);
        w.u64(arch.hidden.len() as u64);
        for &h in &arch.hidden {
            w.u64(h as u64);
        }
        w.u64(arch.basis_size as u64);
        let lw = self.model.weights;
        for b in [lw.beta1, lw.beta2, lw.beta3, lw.beta_p1] {
            w.f64(b);
        }
        w.u64(self.model.k as u64);
        w.u64(self.epoch);
        w.u64(self.best_epoch);
        w.f64(self.best_validation);
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        let c = self.optimizer.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            w.f64(v);
        }
        w.u64(self.optimizer.step);
        w.params(&self.model.params);
        w.params(&self.optimizer.first);
        w.params(&self.optimizer.second);
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 + MAGIC.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (payload, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(Error::Format("checkpoint checksum mismatch".into()));
        }
        let mut r = Reader { buf: payload, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let tag = r.take(1)?[0];
        if tag != F::TAG {
            return Err(Error::Format(format!("checkpoint precision tag {tag}, expected {}", F::TAG)));
        }
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let input_dim = r.usize()?;
        let depth = r.usize()?;
        if depth > 1024 {
            return Err(Error::Format("implausible encoder depth".into()));
        }
        let hidden = (0..depth).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let basis_size = r.usize()?;
        let arch = ArchitectureSpec::new(input_dim, hidden, basis_size)
            .map_err(|e| Error::Format(format!("bad architecture: {e}")))?;
        let weights = LossWeights {
            beta1: r.f64()?,
            beta2: r.f64()?,
            beta3: r.f64()?,
            beta_p1: r.f64()?,
        };
        let k = r.usize()?;
        let epoch = r.u64()?;
        let best_epoch = r.u64()?;
        let best_validation = r.f64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let config = AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        };
        let step = r.u64()?;
        let mut params = empty_params(&arch);
        r.params_into(&mut params)?;
        let mut first = empty_params(&arch);
        r.params_into(&mut first)?;
        let mut second = empty_params(&arch);
        r.params_into(&mut second)?;
        if r.pos != payload.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Checkpoint {
            model: BasisOperatorModel {
                arch,
                params,
                weights,
                k,
            },
            optimizer: AdamState {
                config,
                step,
                first,
                second,
            },
            config_hash,
            rng: RngState { seed, stream, word_pos },
            epoch,
            best_epoch,
            best_validation,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
