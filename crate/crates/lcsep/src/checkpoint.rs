//! Binary training snapshots: network, optimizer state and schedule position.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "LCSEPCKP"
//! version    u32      1
//! config     u32 length + UTF-8 TOML of the network config
//! seed       u64      run seed
//! epoch      u32      completed epochs
//! lr         f64      learning rate for the next epoch
//! adam       u64 step, f64 beta1, f64 beta2, f64 eps
//! tensors    u32 count, then per tensor:
//!            u16 name length, name, u8 ndim, u64 dims[ndim], f64 values
//! ```
//!
//! Tensors appear in parameter-layout order: every parameter tensor, then
//! `adam.m.<name>` for each, then `adam.v.<name>` for each.

use std::path::Path;

use lcsep_core::model::{Adam, Network, NetworkConfig, ParamLayout};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"LCSEPCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: Vec<f64>,
    pub adam: Adam,
    pub seed: u64,
    pub epoch: u32,
    pub lr: f64,
}

impl Checkpoint {
    pub fn network(&self) -> Result<Network> {
        Ok(Network::from_params(self.config.clone(), self.params.clone())?)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let net = self.network()?;
        if self.adam.m.len() != self.params.len() || self.adam.v.len() != self.params.len() {
            return Err(CliError::Data("optimizer moments do not match the parameter count".into()));
        }
        let toml = toml::to_string(&self.config).map_err(|e| CliError::Data(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(toml.len() as u32).to_le_bytes());
        out.extend_from_slice(toml.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.lr.to_le_bytes());
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for x in [self.adam.beta1, self.adam.beta2, self.adam.eps] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let tensors = net.layout().tensors();
        out.extend_from_slice(&(3 * tensors.len() as u32).to_le_bytes());
        for (prefix, values) in [("", &self.params), ("adam.m.", &self.adam.m), ("adam.v.", &self.adam.v)] {
            for (name, seg) in tensors {
                let name = format!("{prefix}{name}");
                out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                out.push(2);
                out.extend_from_slice(&(seg.rows as u64).to_le_bytes());
                out.extend_from_slice(&(seg.cols as u64).to_le_bytes());
                for x in seg.slice(values) {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.fail_at(0, "not a checkpoint (bad magic)"));
        }
        let at = r.pos;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail_at(at, format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let at = r.pos;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| r.fail_at(at, "config is not UTF-8"))?;
        let config: NetworkConfig = toml::from_str(text).map_err(|e| r.fail_at(at, format!("config: {e}")))?;
        config.validate().map_err(|e| r.fail_at(at, e.to_string()))?;
        let layout = ParamLayout::new(&config);
        let seed = r.u64()?;
        let epoch = r.u32()?;
        let lr = r.f64()?;
        let step = r.u64()?;
        let (beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?);
        let tensors = layout.tensors();
        let total = layout.total();
        let at = r.pos;
        let count = r.u32()? as usize;
        if count != 3 * tensors.len() {
            return Err(r.fail_at(at, format!("expected {} tensors, found {count}", 3 * tensors.len())));
        }
        let mut stores = [vec![0.0; total], vec![0.0; total], vec![0.0; total]];
        for (prefix, store) in ["", "adam.m.", "adam.v."].into_iter().zip(stores.iter_mut()) {
            for (name, seg) in tensors {
                let at = r.pos;
                let n = r.u16()? as usize;
                let found = r.take(n)?;
                let expected = format!("{prefix}{name}");
                if found != expected.as_bytes() {
                    return Err(r.fail_at(at, format!("expected tensor {expected}")));
                }
                let at = r.pos;
                let ndim = r.take(1)?[0] as usize;
                let dims = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
                if dims != [seg.rows as u64, seg.cols as u64] {
                    return Err(r.fail_at(at, format!("tensor {expected} has shape {dims:?}")));
                }
                for x in seg.slice_mut(store) {
                    *x = r.f64()?;
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(r.fail_at(r.pos, "trailing bytes"));
        }
        let [params, m, v] = stores;
        Ok(Self { config, params, adam: Adam { beta1, beta2, eps, m, v, step }, seed, epoch, lr })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail_at(&self, offset: usize, message: impl Into<String>) -> CliError {
        CliError::format(self.path, offset as u64, message)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail_at(self.bytes.len(), "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }
}
