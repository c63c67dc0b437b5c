//! Binary checkpoints for factor pairs and full model states.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic "GAREC" | version u32 | kind u8 (1 factors, 2 model) | seed u64
//! factors: n u64 | m u64 | d u64 | F_U | F_I
//! model:   n | m | d | d' | hidden1 | hidden2 (u64 each)
//!          activation u8 | separate_keys u8 | freeze_factors u8
//!          rating bounds (2 x f64) | config echo (u64 len + utf-8)
//!          tensors in ModelState::tensors order
//! tensor:  u64 length | length x f64 bit patterns
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::attn::{Activation, AttentionParams, MlpLayer, MlpParams, ModelShape, ModelState};
use crate::error::{GarecError, Result};
use crate::linalg::Matrix;
use crate::nmf::FactorPair;

pub const MAGIC: &[u8; 5] = b"GAREC";
pub const VERSION: u32 = 1;
const KIND_FACTORS: u8 = 1;
const KIND_MODEL: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub freeze_factors: bool,
    /// Effective configuration, `key = value` lines.
    pub config_echo: String,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn tensor(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        for &x in xs {
            self.f64(x);
        }
    }
    fn header(&mut self, kind: u8, seed: u64) {
        self.0.extend_from_slice(MAGIC);
        self.u32(VERSION);
        self.u8(kind);
        self.u64(seed);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(GarecError::Checkpoint(format!(
                "truncated file: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| GarecError::Checkpoint("size overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let len = self.usize()?;
        if len != rows * cols {
            return Err(GarecError::dim(format!("{name} entries"), rows * cols, len));
        }
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }
    fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        Ok(self.matrix(name, 1, len)?.as_slice().to_vec())
    }
    fn header(&mut self, kind: u8) -> Result<u64> {
        let magic = self.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(GarecError::Checkpoint(format!(
                "bad magic {:?} (expected {:?}, format version {VERSION})",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(MAGIC)
            )));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(GarecError::CheckpointVersion {
                expected: VERSION,
                found: version,
            });
        }
        let found = self.u8()?;
        if found != kind {
            return Err(GarecError::Checkpoint(format!(
                "checkpoint kind {found} where {kind} was expected"
            )));
        }
        self.u64()
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(GarecError::Checkpoint(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn factors_to_bytes(fp: &FactorPair, seed: u64) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.header(KIND_FACTORS, seed);
    w.u64(fp.n_users() as u64);
    w.u64(fp.n_items() as u64);
    w.u64(fp.d() as u64);
    w.tensor(fp.user.as_slice());
    w.tensor(fp.item.as_slice());
    w.0
}

/// Returns the factors and the seed they were produced with.
pub fn factors_from_bytes(buf: &[u8]) -> Result<(FactorPair, u64)> {
    let mut r = Reader { buf, pos: 0 };
    let seed = r.header(KIND_FACTORS)?;
    let (n, m, d) = (r.usize()?, r.usize()?, r.usize()?);
    let user = r.matrix("user factors", n, d)?;
    let item = r.matrix("item factors", m, d)?;
    r.finish()?;
    Ok((FactorPair::new(user, item)?, seed))
}

pub fn save_factors(fp: &FactorPair, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, factors_to_bytes(fp, seed)).map_err(|e| GarecError::io(path, e))
}

pub fn load_factors(path: impl AsRef<Path>) -> Result<(FactorPair, u64)> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| GarecError::io(path, e))?;
    factors_from_bytes(&buf)
}

pub fn model_to_bytes(state: &ModelState, meta: &CheckpointMeta) -> Vec<u8> {
    let shape = state.shape();
    let mut w = Writer(Vec::new());
    w.header(KIND_MODEL, meta.seed);
    for v in [
        state.factors.n_users(),
        state.factors.n_items(),
        state.d(),
        shape.d_out,
        shape.hidden.0,
        shape.hidden.1,
    ] {
        w.u64(v as u64);
    }
    w.u8(shape.activation.code());
    w.u8(u8::from(shape.separate_keys));
    w.u8(u8::from(meta.freeze_factors));
    w.f64(state.rating_bounds.0);
    w.f64(state.rating_bounds.1);
    w.u64(meta.config_echo.len() as u64);
    w.0.extend_from_slice(meta.config_echo.as_bytes());
    for (_, t) in state.tensors(true) {
        w.tensor(t);
    }
    w.0
}

fn read_attn(r: &mut Reader<'_>, side: &str, d: usize, d_out: usize, separate: bool) -> Result<AttentionParams> {
    let transform = r.matrix(&format!("{side} transform"), d, d_out)?;
    let key = if separate {
        Some(r.matrix(&format!("{side} key"), d, d_out)?)
    } else {
        None
    };
    Ok(AttentionParams {
        transform,
        key,
        w_self: r.matrix(&format!("{side} w_self"), d, d_out)?,
        w_nei: r.matrix(&format!("{side} w_nei"), d_out, d_out)?,
    })
}

pub fn model_from_bytes(buf: &[u8]) -> Result<(ModelState, CheckpointMeta)> {
    let mut r = Reader { buf, pos: 0 };
    let seed = r.header(KIND_MODEL)?;
    let (n, m, d, d_out, h1, h2) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let code = r.u8()?;
    let activation = Activation::from_code(code)
        .ok_or_else(|| GarecError::Checkpoint(format!("unknown activation code {code}")))?;
    let separate = r.u8()? != 0;
    let freeze_factors = r.u8()? != 0;
    let bounds = (r.f64()?, r.f64()?);
    let echo_len = r.usize()?;
    let config_echo = String::from_utf8(r.take(echo_len)?.to_vec())
        .map_err(|_| GarecError::Checkpoint("config echo is not utf-8".into()))?;

    let user = r.matrix("user factors", n, d)?;
    let item = r.matrix("item factors", m, d)?;
    let user_attn = read_attn(&mut r, "user", d, d_out, separate)?;
    let item_attn = read_attn(&mut r, "item", d, d_out, separate)?;
    let widths = [2 * d_out, h1, h2, 1];
    let mut layers = Vec::new();
    for (k, w) in widths.windows(2).enumerate() {
        let weight = r.matrix(&format!("mlp layer {k} weight"), w[0], w[1])?;
        let bias = r.vector(&format!("mlp layer {k} bias"), w[1])?;
        layers.push(MlpLayer { weight, bias });
    }
    r.finish()?;
    let state = ModelState {
        factors: FactorPair::new(user, item)?,
        user_attn,
        item_attn,
        mlp: MlpParams { layers },
        activation,
        rating_bounds: bounds,
    };
    state.validate()?;
    Ok((
        state,
        CheckpointMeta {
            seed,
            freeze_factors,
            config_echo,
        },
    ))
}

pub fn save_checkpoint(state: &ModelState, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(state, meta)).map_err(|e| GarecError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelState, CheckpointMeta)> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| GarecError::io(path, e))?;
    model_from_bytes(&buf)
}

/// Loads and checks the latent dimensions against what the caller expects.
pub fn load_checkpoint_expecting(
    path: impl AsRef<Path>,
    d: usize,
    shape: &ModelShape,
) -> Result<(ModelState, CheckpointMeta)> {
    let (state, meta) = load_checkpoint(path)?;
    if state.d() != d {
        return Err(GarecError::dim("checkpoint latent dimension d", d, state.d()));
    }
    if state.d_out() != shape.d_out {
        return Err(GarecError::dim("checkpoint embedding dimension d'", shape.d_out, state.d_out()));
    }
    Ok((state, meta))
}
