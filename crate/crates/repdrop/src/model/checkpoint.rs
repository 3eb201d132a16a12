//! Checkpoint file format: the magic `RPDK`, a format version, a JSON header
//! describing the configuration, step counter and RNG state, then the raw
//! little-endian f64 parameter blocks in the fixed order of
//! [`Parameters::slices`], followed by the Adam moment blocks when present.
//! Reloading reproduces forward outputs bit-identically on the same
//! platform.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::params::Parameters;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RPDK";

/// Adam first/second moments, flat in parameter order, plus the update count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }
}

/// Enough RNG state to reconstruct the training sampler exactly: the seed
/// plus the stream position (split into two u64 halves for JSON).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn fresh(seed: u64) -> Self {
        RngState { seed, word_pos_hi: 0, word_pos_lo: 0 }
    }

    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        RngState { seed, word_pos_hi: (pos >> 64) as u64, word_pos_lo: pos as u64 }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

/// A trained (or freshly initialized) model with its optimizer state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Parameters,
    pub opt: Option<AdamState>,
    pub step: u64,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    step: u64,
    rng: RngState,
    has_opt: bool,
    adam_t: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let err = |e| Error::io(path, e);

        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            rng: self.rng,
            has_opt: self.opt.is_some(),
            adam_t: self.opt.as_ref().map_or(0, |o| o.t),
        };
        let header_json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC).map_err(err)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(err)?;
        w.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(err)?;
        w.write_all(&header_json).map_err(err)?;

        for slice in self.params.slices() {
            write_f64s(&mut w, slice).map_err(err)?;
        }
        if let Some(opt) = &self.opt {
            write_f64s(&mut w, &opt.m).map_err(err)?;
            write_f64s(&mut w, &opt.v).map_err(err)?;
        }
        w.flush().map_err(err)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let err = |e| Error::io(path, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(err)?;
        if &magic != MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v).map_err(err)?;
        let version = u32::from_le_bytes(v);
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8).map_err(err)?;
        let header_len = u64::from_le_bytes(len8) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes).map_err(err)?;
        let header: Header = serde_json::from_slice(&header_bytes)?;
        header.config.validate()?;

        let mut params = Parameters::zeros(&header.config);
        for slice in params.slices_mut() {
            read_f64s(&mut r, slice).map_err(err)?;
        }
        let opt = if header.has_opt {
            let n = params.num_params();
            let mut state = AdamState::new(n);
            state.t = header.adam_t;
            read_f64s(&mut r, &mut state.m).map_err(err)?;
            read_f64s(&mut r, &mut state.v).map_err(err)?;
            Some(state)
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(err)? != 0 {
            return Err(Error::CheckpointFormat("trailing bytes after parameter blocks".into()));
        }
        Ok(Checkpoint { config: header.config, params, opt, step: header.step, rng: header.rng })
    }
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for &x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> std::io::Result<()> {
    let mut buf = vec![0u8; out.len() * 8];
    r.read_exact(&mut buf)?;
    for (i, chunk) in buf.chunks_exact(8).enumerate() {
        out[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { layers: 1, heads: 2, d_model: 8, d_ff: 16, vocab: 7, max_len: 6 }
    }

    #[test]
    fn roundtrip_reproduces_forward_bit_for_bit() {
        let cfg = tiny_cfg();
        let params = Parameters::init(&cfg, 11);
        let mut opt = AdamState::new(params.num_params());
        opt.t = 42;
        opt.m[3] = 0.5;
        let ckpt = Checkpoint {
            config: cfg.clone(),
            params,
            opt: Some(opt),
            step: 100,
            rng: RngState { seed: 9, word_pos_hi: 0, word_pos_lo: 77 },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        assert_eq!(loaded.step, 100);
        assert_eq!(loaded.rng, ckpt.rng);
        assert_eq!(loaded.opt.as_ref().unwrap().t, 42);
        assert_eq!(loaded.opt.as_ref().unwrap().m[3], 0.5);
        let ids = [1u32, 2, 3, 4];
        let a = forward(&ckpt.config, &ckpt.params, &ids, None).unwrap();
        let b = forward(&loaded.config, &loaded.params, &ids, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rng_state_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::RngCore;
        for _ in 0..13 {
            rng.next_u64();
        }
        let state = RngState::capture(5, &rng);
        let mut restored = state.restore();
        assert_eq!(rng.next_u64(), restored.next_u64());
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
