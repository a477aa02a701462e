//! Binary model container.
//!
//! Layout (little endian): magic, version u32, hidden layer count u32 and
//! sizes u32, kl weight and flag weight f64, normalization mean and scale (18 f64 each),
//! dataset hash, config hash and tool version as length-prefixed UTF-8, parameter count
//! u64, parameters f64, then the SHA-256 of everything before it.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{VaeError, VaeModel};
use crate::dataset::{Normalization, FIELDS};

pub const MAGIC: &[u8; 8] = b"LRVAEMDL";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VaeError> {
        if self.pos + n > self.buf.len() {
            return Err(VaeError::Corrupt("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, VaeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, VaeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, VaeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, VaeError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| VaeError::Corrupt("invalid string".into()))
    }
}

impl VaeModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let hidden = self.hidden();
        out.extend_from_slice(&(hidden.len() as u32).to_le_bytes());
        for h in &hidden {
            out.extend_from_slice(&(*h as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.kl_weight.to_le_bytes());
        out.extend_from_slice(&self.flag_weight.to_le_bytes());
        for v in self.normalization.mean.iter().chain(self.normalization.scale.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in [&self.dataset_hash, &self.config_hash, &self.tool_version] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        let params = self.params();
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<VaeModel, VaeError> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(VaeError::Corrupt("file too short".into()));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(VaeError::Corrupt("bad magic".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(VaeError::Version(version));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(VaeError::Corrupt("checksum mismatch".into()));
        }
        let layers = r.u32()? as usize;
        if layers == 0 || layers > 64 {
            return Err(VaeError::Corrupt(format!("implausible layer count {layers}")));
        }
        let hidden = (0..layers)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if hidden.iter().any(|&h| h == 0 || h > 1 << 16) {
            return Err(VaeError::Corrupt("implausible layer width".into()));
        }
        let kl_weight = r.f64()?;
        let flag_weight = r.f64()?;
        let mut normalization = Normalization::identity();
        for i in 0..FIELDS {
            normalization.mean[i] = r.f64()?;
        }
        for i in 0..FIELDS {
            normalization.scale[i] = r.f64()?;
        }
        let dataset_hash = r.string()?;
        let config_hash = r.string()?;
        let tool_version = r.string()?;
        let count = r.u64()? as usize;
        let mut model = VaeModel::new(&hidden, kl_weight, normalization, 0);
        if count != model.param_count() {
            return Err(VaeError::Corrupt(format!(
                "parameter count {count} does not fit the recorded architecture"
            )));
        }
        let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != body.len() {
            return Err(VaeError::Corrupt("trailing bytes".into()));
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(VaeError::NonFinite("stored parameters"));
        }
        model.set_params(&params);
        model.flag_weight = flag_weight;
        model.dataset_hash = dataset_hash;
        model.config_hash = config_hash;
        model.tool_version = tool_version;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), VaeError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VaeModel, VaeError> {
        VaeModel::from_bytes(&fs::read(path)?)
    }

    /// Loads and requires the given hidden layer widths.
    pub fn load_expecting(path: &Path, hidden: &[usize]) -> Result<VaeModel, VaeError> {
        let m = VaeModel::load(path)?;
        if m.hidden() != hidden {
            return Err(VaeError::Architecture {
                found: m.hidden(),
                expected: hidden.to_vec(),
            });
        }
        Ok(m)
    }
}
