use std::fs;
use std::path::Path;

use super::network::{layout, ModelWeights};
use super::{AnalyzerError, HeadDims, NetworkConfig, Variant};
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FGAW";
pub const WEIGHTS_VERSION: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_list(out: &mut Vec<u8>, values: &[u8]) {
    put_u32(out, values.len());
    out.extend_from_slice(values);
}

pub fn encode_weights(weights: &ModelWeights) -> Vec<u8> {
    let c = &weights.config;
    let mut out = Vec::with_capacity(64 + weights.parameter_count() * 4);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.push(match c.variant {
        Variant::Luma => 0,
        Variant::Chroma => 1,
    });
    for v in [
        c.n_intervals,
        c.backbone_channels,
        c.residual_blocks,
        c.hidden.log2,
        c.hidden.scaling,
        c.hidden.cutoff,
        c.hidden.intervals,
    ] {
        put_u32(&mut out, v);
    }
    put_list(&mut out, &c.log2_values);
    put_list(&mut out, &c.scale_values);
    put_list(&mut out, &c.cutoff_values);
    put_u32(&mut out, weights.tensors.len());
    for (name, t) in &weights.tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_weights(weights: &ModelWeights, path: &Path) -> Result<(), AnalyzerError> {
    fs::write(path, encode_weights(weights)).map_err(|source| AnalyzerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!(
                "truncated at byte {}: needed {n} more, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ));
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, String> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn list(&mut self) -> Result<Vec<u8>, String> {
        let n = self.u32()?;
        Ok(self.take(n)?.to_vec())
    }
}

fn parse(bytes: &[u8]) -> Result<ModelWeights, String> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != WEIGHTS_MAGIC {
        return Err(format!("bad magic {magic:?}, expected \"FGAW\""));
    }
    let version = r.u8()?;
    if version != WEIGHTS_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let variant = match r.u8()? {
        0 => Variant::Luma,
        1 => Variant::Chroma,
        v => return Err(format!("unknown variant code {v}")),
    };
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.u32()?;
    }
    let config = NetworkConfig {
        variant,
        n_intervals: dims[0],
        backbone_channels: dims[1],
        residual_blocks: dims[2],
        hidden: HeadDims {
            log2: dims[3],
            scaling: dims[4],
            cutoff: dims[5],
            intervals: dims[6],
        },
        log2_values: r.list()?,
        scale_values: r.list()?,
        cutoff_values: r.list()?,
    };
    let expected = layout(&config);
    let count = r.u32()?;
    if count != expected.len() {
        return Err(format!("{count} tensors, configuration needs {}", expected.len()));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape, _) in expected {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "tensor name is not UTF-8".to_string())?;
        if name != want_name {
            return Err(format!("tensor '{name}' where '{want_name}' was expected"));
        }
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if shape != want_shape {
            return Err(format!("tensor '{name}' has shape {shape:?}, expected {want_shape:?}"));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(ModelWeights { config, tensors })
}

/// Reads weights with whatever configuration the file declares.
pub fn read_weights(path: &Path) -> Result<ModelWeights, AnalyzerError> {
    let bytes = fs::read(path).map_err(|source| AnalyzerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&bytes).map_err(|detail| AnalyzerError::BadWeights {
        path: path.to_path_buf(),
        detail,
    })
}

/// Reads weights and refuses them unless they were built for `expected`.
pub fn load_weights(path: &Path, expected: &NetworkConfig) -> Result<ModelWeights, AnalyzerError> {
    let w = read_weights(path)?;
    if &w.config != expected {
        return Err(AnalyzerError::ConfigMismatch {
            path: path.to_path_buf(),
            found: w.config.describe(),
            expected: expected.describe(),
        });
    }
    Ok(w)
}
