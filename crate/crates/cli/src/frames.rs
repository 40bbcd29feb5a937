use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use grainkit::fgc_sei::{decode_binary, decode_text, encode_binary, encode_text, FilmGrainParams};
use grainkit::media_io::{count_yuv420_frames, read_pnm, read_yuv420, write_pnm, write_yuv420, Frame, Pnm};

use crate::RawDims;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Gray,
    Color,
    Yuv,
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

pub fn kind_of(path: &Path) -> Result<Kind> {
    match extension(path).as_str() {
        "pgm" => Ok(Kind::Gray),
        "ppm" => Ok(Kind::Color),
        "yuv" => Ok(Kind::Yuv),
        other => bail!("{}: unsupported image extension '{other}' (expected pgm, ppm or yuv)", path.display()),
    }
}

pub fn load(path: &Path, dims: &RawDims) -> Result<(Kind, Vec<Frame>)> {
    match kind_of(path)? {
        Kind::Yuv => {
            let (Some(w), Some(h)) = (dims.width, dims.height) else {
                bail!("{}: raw .yuv input needs --width and --height", path.display());
            };
            let n = count_yuv420_frames(path, w, h)?;
            let frames = (0..n).map(|i| read_yuv420(path, w, h, i)).collect::<Result<Vec<_>, _>>()?;
            Ok((Kind::Yuv, frames))
        }
        _ => Ok(match read_pnm(path)? {
            Pnm::Gray(p) => (Kind::Gray, vec![Frame::from_luma(p)]),
            Pnm::Color(f) => (Kind::Color, vec![f]),
        }),
    }
}

pub fn save(path: &Path, frames: &[Frame]) -> Result<()> {
    match kind_of(path)? {
        Kind::Yuv => write_yuv420(path, frames)?,
        kind => {
            if frames.len() != 1 {
                bail!("{}: {} frames cannot be written as one PNM image", path.display(), frames.len());
            }
            let f = frames[0].clone();
            let img = if kind == Kind::Gray { Pnm::Gray(f.y) } else { Pnm::Color(f) };
            write_pnm(path, &img)?;
        }
    }
    Ok(())
}

pub fn read_params(path: &Path) -> Result<FilmGrainParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let params = if extension(path) == "txt" {
        let text = String::from_utf8(bytes).with_context(|| format!("{}: not UTF-8 text", path.display()))?;
        decode_text(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        decode_binary(&bytes).with_context(|| format!("decoding {}", path.display()))?
    };
    let report = params.validate();
    if !report.is_ok() {
        bail!("{}: invalid parameters: {report}", path.display());
    }
    Ok(params)
}

pub fn write_params(path: &Path, params: &FilmGrainParams) -> Result<()> {
    let bytes = if extension(path) == "txt" {
        encode_text(params).into_bytes()
    } else {
        encode_binary(params).with_context(|| format!("encoding {}", path.display()))?
    };
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
