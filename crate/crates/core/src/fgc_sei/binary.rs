//! Byte-aligned container for [`FilmGrainParams`].
//!
//! ```text
//! "FGCS" | version u8 | model_id u8 | blending_mode_id u8 | log2_scale_factor u8
//! per component Y, Cb, Cr:
//!     present u8 (0/1)
//!     if present: interval_count u16 BE, then per interval
//!         lower u8 | upper u8 | scaling_factor u8 | cutoff_h u8 | cutoff_v u8
//! ```

use super::{validate, ComponentModel, FilmGrainParams, IntensityInterval, ValidationReport, MAX_INTERVALS};

pub const MAGIC: [u8; 4] = *b"FGCS";
pub const VERSION: u8 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodecError {
    #[error("bad magic {0:02x?}, expected \"FGCS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}, expected {VERSION}")]
    UnsupportedVersion(u8),
    #[error("truncated payload: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("field {field} out of range: {detail}")]
    OutOfRange { field: String, detail: String },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("parameters fail validation: {0}")]
    Invalid(ValidationReport),
}

/// Serializes validated parameters. The encoding is canonical: equal
/// parameters always produce identical bytes.
pub fn encode_binary(params: &FilmGrainParams) -> Result<Vec<u8>, CodecError> {
    let report = validate(params);
    if !report.is_ok() {
        return Err(CodecError::Invalid(report));
    }
    let mut out = Vec::with_capacity(8 + 3 * (3 + 16 * 5));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, params.model_id, params.blending_mode_id, params.log2_scale_factor]);
    for comp in &params.components {
        match comp {
            None => out.push(0),
            Some(model) => {
                out.push(1);
                out.extend_from_slice(&(model.intervals.len() as u16).to_be_bytes());
                for iv in &model.intervals {
                    out.extend_from_slice(&[iv.lower, iv.upper, iv.scaling_factor, iv.cutoff_h, iv.cutoff_v]);
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<FilmGrainParams, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic(magic.try_into().expect("4 bytes")));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let mut params = FilmGrainParams::new(0);
    params.model_id = r.u8()?;
    params.blending_mode_id = r.u8()?;
    params.log2_scale_factor = r.u8()?;
    for c in 0..3 {
        let present = r.u8()?;
        match present {
            0 => continue,
            1 => {}
            other => {
                return Err(CodecError::OutOfRange {
                    field: format!("SEIFGCCompModelPresentComp{c}"),
                    detail: format!("{other} is not 0 or 1"),
                })
            }
        }
        let count = u16::from_be_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        if count == 0 || count > MAX_INTERVALS {
            return Err(CodecError::OutOfRange {
                field: format!("SEIFGCNumIntensityIntervalMinus1Comp{c}"),
                detail: format!("interval count {count} outside 1-{MAX_INTERVALS}"),
            });
        }
        let mut intervals = Vec::with_capacity(count);
        for _ in 0..count {
            let f = r.take(5)?;
            intervals.push(IntensityInterval::new(f[0], f[1], f[2], f[3], f[4]));
        }
        params.components[c] = Some(ComponentModel::new(intervals));
    }
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - r.pos));
    }
    let report = validate(&params);
    if let Some(v) = report.violations.first() {
        return Err(CodecError::OutOfRange {
            field: v.path.clone(),
            detail: v.message.clone(),
        });
    }
    Ok(params)
}
