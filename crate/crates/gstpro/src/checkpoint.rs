//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "GSTPROCK" | version u32
//! n_channels window hidden_h hidden_z fc_hidden fc_layers embed_dim: u64 each
//! solver u8 (0 euler, 1 rk4) | steps_per_unit u64 | include_time u8 | shared_temporal u8
//! normalizer: n u64, min f64 × n, max f64 × n
//! matrix count u64, then per matrix: rows u64, cols u64, f64 × rows·cols
//! ```
//!
//! Matrices follow the canonical parameter order, so a round trip is
//! bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use gstpro_core::model::{DgNcdeModel, ModelConfig, Parameters};
use gstpro_core::series::Normalizer;
use gstpro_core::solver::Solver;
use gstpro_core::Matrix;

pub const MAGIC: &[u8; 8] = b"GSTPROCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] gstpro_core::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DgNcdeModel,
    pub normalizer: Normalizer,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_usize(out: &mut Vec<u8>, v: usize) {
    put_u64(out, v as u64);
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Corrupt("size overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn flag(&mut self) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CheckpointError::Corrupt(format!("bad flag byte {v}"))),
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.model.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [cfg.n_channels, cfg.window, cfg.hidden_h, cfg.hidden_z, cfg.fc_hidden, cfg.fc_layers, cfg.embed_dim] {
            put_usize(&mut out, v);
        }
        out.push(match cfg.solver {
            Solver::Euler => 0,
            Solver::Rk4 => 1,
        });
        put_usize(&mut out, cfg.steps_per_unit);
        out.push(cfg.include_time_channel as u8);
        out.push(cfg.shared_temporal as u8);

        put_usize(&mut out, self.normalizer.n_channels());
        for &v in self.normalizer.min().iter().chain(self.normalizer.max()) {
            put_f64(&mut out, v);
        }

        let mats: Vec<&Matrix> = self.model.params().iter().collect();
        put_usize(&mut out, mats.len());
        for m in mats {
            put_usize(&mut out, m.rows());
            put_usize(&mut out, m.cols());
            for &v in m.as_slice() {
                put_f64(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes };
        if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.usize()?;
        }
        let solver = match r.u8()? {
            0 => Solver::Euler,
            1 => Solver::Rk4,
            v => return Err(CheckpointError::Corrupt(format!("unknown solver tag {v}"))),
        };
        let config = ModelConfig {
            n_channels: dims[0],
            window: dims[1],
            hidden_h: dims[2],
            hidden_z: dims[3],
            fc_hidden: dims[4],
            fc_layers: dims[5],
            embed_dim: dims[6],
            solver,
            steps_per_unit: r.usize()?,
            include_time_channel: r.flag()?,
            shared_temporal: r.flag()?,
        };
        config.validate()?;

        let n = r.usize()?;
        if n != config.n_channels {
            return Err(CheckpointError::Corrupt(format!("normalizer has {n} channels, model {}", config.n_channels)));
        }
        let min = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let max = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let normalizer = Normalizer::from_bounds(min, max)?;

        let count = r.usize()?;
        let mut mats = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let (rows, cols) = (r.usize()?, r.usize()?);
            let len = rows.checked_mul(cols).filter(|&l| l <= r.buf.len() / 8);
            let len = len.ok_or_else(|| CheckpointError::Corrupt("matrix larger than file".into()))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            mats.push(Matrix::from_vec(rows, cols, data));
        }
        if !r.buf.is_empty() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", r.buf.len())));
        }
        let params = Parameters::from_flat(&config, mats)?;
        Ok(Self { model: DgNcdeModel::from_parts(config, params)?, normalizer })
    }

    pub fn write(&self, mut w: impl Write) -> Result<(), CheckpointError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
