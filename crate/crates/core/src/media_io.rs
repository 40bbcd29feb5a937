//! 8-bit planar images: raw I420 sequences and binary PGM/PPM.
//!
//! PPM files are converted to 4:2:0 with BT.709 full-range coefficients.
//! Chroma is the average of each 2×2 luma-grid neighbourhood on read and
//! replicated back on write, so colour detail below 2×2 is not preserved.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum MediaError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frame dimensions {width}x{height} must be even and non-zero")]
    OddDimensions { width: usize, height: usize },
    #[error("{path}: size {file_len} bytes is not a multiple of the {frame_len}-byte frame")]
    SizeMismatch {
        path: PathBuf,
        file_len: usize,
        frame_len: usize,
    },
    #[error("{path}: frame {index} out of range, file holds {frames} frames")]
    FrameIndex { path: PathBuf, index: usize, frames: usize },
    #[error("{path}: malformed header: {detail}")]
    MalformedHeader { path: PathBuf, detail: String },
    #[error("{path}: maxval {maxval} unsupported, only 255")]
    MaxVal { path: PathBuf, maxval: u32 },
    #[error("plane {width}x{height} needs {expected} samples, got {actual}")]
    SampleCount {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Plane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl Plane {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    pub fn from_samples(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, MediaError> {
        if samples.len() != width * height {
            return Err(MediaError::SampleCount {
                width,
                height,
                expected: width * height,
                actual: samples.len(),
            });
        }
        Ok(Self { width, height, samples })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.samples[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `w`×`h` window at (`x`, `y`); the window must lie inside.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Plane, MediaError> {
        if x + w > self.width || y + h > self.height {
            return Err(MediaError::DimMismatch(format!(
                "crop {w}x{h}+{x}+{y} exceeds plane {}x{}",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(w * h);
        for r in y..y + h {
            samples.extend_from_slice(&self.row(r)[x..x + w]);
        }
        Ok(Plane {
            width: w,
            height: h,
            samples,
        })
    }
}

/// Chroma plane size for a 4:2:0 frame of the given luma size.
pub fn chroma_dims(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(2), height.div_ceil(2))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl Frame {
    pub fn new(y: Plane, cb: Plane, cr: Plane) -> Result<Self, MediaError> {
        let (cw, ch) = chroma_dims(y.width, y.height);
        for (name, p) in [("cb", &cb), ("cr", &cr)] {
            if (p.width, p.height) != (cw, ch) {
                return Err(MediaError::DimMismatch(format!(
                    "{name} plane is {}x{}, expected {cw}x{ch} for luma {}x{}",
                    p.width, p.height, y.width, y.height
                )));
            }
        }
        Ok(Self { y, cb, cr })
    }

    /// Grey frame: luma as given, neutral chroma.
    pub fn from_luma(y: Plane) -> Self {
        let (cw, ch) = chroma_dims(y.width, y.height);
        Self {
            y,
            cb: Plane::filled(cw, ch, 128),
            cr: Plane::filled(cw, ch, 128),
        }
    }

    pub fn width(&self) -> usize {
        self.y.width
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.cb, &self.cr]
    }

    pub fn planes_mut(&mut self) -> [&mut Plane; 3] {
        [&mut self.y, &mut self.cb, &mut self.cr]
    }

    /// Crop aligned to the chroma grid; `x`, `y`, `w`, `h` must be even.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Frame, MediaError> {
        if x % 2 != 0 || y % 2 != 0 || w % 2 != 0 || h % 2 != 0 {
            return Err(MediaError::DimMismatch(format!("crop {w}x{h}+{x}+{y} not aligned to 2")));
        }
        Ok(Frame {
            y: self.y.crop(x, y, w, h)?,
            cb: self.cb.crop(x / 2, y / 2, w / 2, h / 2)?,
            cr: self.cr.crop(x / 2, y / 2, w / 2, h / 2)?,
        })
    }
}

fn check_even(width: usize, height: usize) -> Result<(), MediaError> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(MediaError::OddDimensions { width, height });
    }
    Ok(())
}

pub fn read_yuv420(path: &Path, width: usize, height: usize, frame_index: usize) -> Result<Frame, MediaError> {
    check_even(width, height)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let luma = width * height;
    let chroma = luma / 4;
    let frame_len = luma + 2 * chroma;
    if bytes.len() % frame_len != 0 {
        return Err(MediaError::SizeMismatch {
            path: path.to_path_buf(),
            file_len: bytes.len(),
            frame_len,
        });
    }
    let frames = bytes.len() / frame_len;
    if frame_index >= frames {
        return Err(MediaError::FrameIndex {
            path: path.to_path_buf(),
            index: frame_index,
            frames,
        });
    }
    let f = &bytes[frame_index * frame_len..(frame_index + 1) * frame_len];
    let (cw, ch) = (width / 2, height / 2);
    Frame::new(
        Plane::from_samples(width, height, f[..luma].to_vec())?,
        Plane::from_samples(cw, ch, f[luma..luma + chroma].to_vec())?,
        Plane::from_samples(cw, ch, f[luma + chroma..].to_vec())?,
    )
}

/// Number of frames in a raw I420 file.
pub fn count_yuv420_frames(path: &Path, width: usize, height: usize) -> Result<usize, MediaError> {
    check_even(width, height)?;
    let len = fs::metadata(path).map_err(io_err(path))?.len() as usize;
    let frame_len = width * height * 3 / 2;
    if len % frame_len != 0 {
        return Err(MediaError::SizeMismatch {
            path: path.to_path_buf(),
            file_len: len,
            frame_len,
        });
    }
    Ok(len / frame_len)
}

pub fn write_yuv420(path: &Path, frames: &[Frame]) -> Result<(), MediaError> {
    let mut out = Vec::new();
    for f in frames {
        check_even(f.width(), f.height())?;
        if let Some(first) = frames.first() {
            if (f.width(), f.height()) != (first.width(), first.height()) {
                return Err(MediaError::DimMismatch(format!(
                    "sequence mixes {}x{} and {}x{} frames",
                    first.width(),
                    first.height(),
                    f.width(),
                    f.height()
                )));
            }
        }
        for p in f.planes() {
            out.extend_from_slice(&p.samples);
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Contents of a binary PNM file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pnm {
    Gray(Plane),
    Color(Frame),
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_offset: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header, MediaError> {
    let bad = |detail: String| MediaError::MalformedHeader {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 2 || !(bytes[..2] == *b"P5" || bytes[..2] == *b"P6") {
        return Err(bad("expected P5 or P6 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(bad(format!("missing {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        fields[k] = text.parse().map_err(|_| bad(format!("{name} '{text}' too large")))?;
    }
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(bad("expected whitespace after maxval".into()));
    }
    if fields[2] != 255 {
        return Err(MediaError::MaxVal {
            path: path.to_path_buf(),
            maxval: fields[2],
        });
    }
    if fields[0] == 0 || fields[1] == 0 {
        return Err(bad("zero dimension".into()));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width: fields[0] as usize,
        height: fields[1] as usize,
        data_offset: pos + 1,
    })
}

pub fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<Pnm, MediaError> {
    let h = parse_header(path, bytes)?;
    let channels = if h.magic == *b"P5" { 1 } else { 3 };
    let need = h.width * h.height * channels;
    let data = &bytes[h.data_offset..];
    if data.len() != need {
        return Err(MediaError::MalformedHeader {
            path: path.to_path_buf(),
            detail: format!("{}x{} needs {need} data bytes, found {}", h.width, h.height, data.len()),
        });
    }
    if channels == 1 {
        Ok(Pnm::Gray(Plane::from_samples(h.width, h.height, data.to_vec())?))
    } else {
        Ok(Pnm::Color(rgb_to_frame(h.width, h.height, data)?))
    }
}

pub fn encode_pnm(data: &Pnm) -> Vec<u8> {
    match data {
        Pnm::Gray(p) => {
            let mut out = format!("P5\n{} {}\n255\n", p.width, p.height).into_bytes();
            out.extend_from_slice(&p.samples);
            out
        }
        Pnm::Color(f) => {
            let mut out = format!("P6\n{} {}\n255\n", f.width(), f.height()).into_bytes();
            out.extend_from_slice(&frame_to_rgb(f));
            out
        }
    }
}

pub fn read_pnm(path: &Path) -> Result<Pnm, MediaError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pnm(path, &bytes)
}

pub fn write_pnm(path: &Path, data: &Pnm) -> Result<(), MediaError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_pnm(data)).map_err(io_err(path))
}

const KR: f64 = 0.2126;
const KB: f64 = 0.0722;
const KG: f64 = 1.0 - KR - KB;
const CB_DIV: f64 = 2.0 * (1.0 - KB);
const CR_DIV: f64 = 2.0 * (1.0 - KR);

fn clip(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Interleaved RGB to a 4:2:0 frame.
pub fn rgb_to_frame(width: usize, height: usize, rgb: &[u8]) -> Result<Frame, MediaError> {
    if rgb.len() != width * height * 3 {
        return Err(MediaError::SampleCount {
            width,
            height,
            expected: width * height * 3,
            actual: rgb.len(),
        });
    }
    let (cw, ch) = chroma_dims(width, height);
    let mut y = vec![0u8; width * height];
    let mut cb_acc = vec![0f64; cw * ch];
    let mut cr_acc = vec![0f64; cw * ch];
    let mut count = vec![0u32; cw * ch];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        let luma = KR * r + KG * g + KB * b;
        y[i] = clip(luma);
        let c = (i / width / 2) * cw + (i % width) / 2;
        cb_acc[c] += (b - luma) / CB_DIV;
        cr_acc[c] += (r - luma) / CR_DIV;
        count[c] += 1;
    }
    let avg = |acc: Vec<f64>| -> Vec<u8> {
        acc.iter()
            .zip(&count)
            .map(|(&s, &n)| clip(s / n as f64 + 128.0))
            .collect()
    };
    Frame::new(
        Plane::from_samples(width, height, y)?,
        Plane::from_samples(cw, ch, avg(cb_acc))?,
        Plane::from_samples(cw, ch, avg(cr_acc))?,
    )
}

/// 4:2:0 frame to interleaved RGB, chroma replicated over each 2×2 block.
pub fn frame_to_rgb(frame: &Frame) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for yy in 0..h {
        for xx in 0..w {
            let luma = frame.y.get(xx, yy) as f64;
            let cb = frame.cb.get(xx / 2, yy / 2) as f64 - 128.0;
            let cr = frame.cr.get(xx / 2, yy / 2) as f64 - 128.0;
            let r = luma + CR_DIV * cr;
            let b = luma + CB_DIV * cb;
            let g = (luma - KR * r - KB * b) / KG;
            out.extend_from_slice(&[clip(r), clip(g), clip(b)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chroma_dims_round_up() {
        assert_eq!(chroma_dims(64, 64), (32, 32));
        assert_eq!(chroma_dims(5, 3), (3, 2));
    }

    #[test]
    fn grey_rgb_maps_to_neutral_chroma() {
        let f = rgb_to_frame(2, 2, &[77; 12]).unwrap();
        assert_eq!(f.y.samples(), &[77; 4]);
        assert_eq!(f.cb.samples(), &[128]);
        assert_eq!(f.cr.samples(), &[128]);
        assert_eq!(frame_to_rgb(&f), vec![77; 12]);
    }

    #[test]
    fn primaries_follow_bt709_weights() {
        let f = rgb_to_frame(2, 2, &[255, 0, 0].repeat(4)).unwrap();
        assert_eq!(f.y.get(0, 0), 54); // 0.2126 * 255 = 54.2
        assert_eq!(f.cr.get(0, 0), 255);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[3, 4]);
        let Pnm::Gray(p) = decode_pnm(Path::new("x.pgm"), &bytes).unwrap() else {
            panic!()
        };
        assert_eq!(p.samples(), &[3, 4]);
    }
}
