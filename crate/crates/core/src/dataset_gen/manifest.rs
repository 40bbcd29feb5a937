use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{io_err, load_frame, DatasetError};
use crate::fgc_sei::{decode_binary, FilmGrainParams};
use crate::media_io::Frame;

const HEADER: &str = "id\tclean\tgrainy\tparams\tparam_set\tseed\tx\ty\twidth\theight";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: usize,
    pub clean: PathBuf,
    /// relative to the manifest directory
    pub grainy: PathBuf,
    /// relative to the manifest directory
    pub params: PathBuf,
    pub param_set: usize,
    pub seed: u64,
    pub crop: CropRect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    /// directory holding `manifest.tsv`; entry paths resolve against it
    pub root: PathBuf,
    pub seed: u64,
    pub constraints: String,
    pub n_param_sets: usize,
    pub crops_per_image: usize,
    pub crop_size: usize,
    pub entries: Vec<ManifestEntry>,
}

impl ManifestEntry {
    pub fn grainy_path(&self, root: &Path) -> PathBuf {
        root.join(&self.grainy)
    }

    pub fn params_path(&self, root: &Path) -> PathBuf {
        root.join(&self.params)
    }

    pub fn load_params(&self, root: &Path) -> Result<FilmGrainParams, DatasetError> {
        let path = self.params_path(root);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        decode_binary(&bytes).map_err(|e| DatasetError::Manifest {
            path,
            line: 0,
            detail: e.to_string(),
        })
    }

    pub fn load_grainy(&self, root: &Path) -> Result<Frame, DatasetError> {
        Ok(load_frame(&self.grainy_path(root))?.0)
    }

    pub fn load_clean_crop(&self) -> Result<Frame, DatasetError> {
        let (frame, _) = load_frame(&self.clean)?;
        let c = self.crop;
        Ok(frame.crop(c.x, c.y, c.width, c.height)?)
    }
}

impl DatasetManifest {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# seed={} n_param_sets={} crops_per_image={} crop_size={} constraints: {}",
            self.seed, self.n_param_sets, self.crops_per_image, self.crop_size, self.constraints
        );
        let _ = writeln!(s, "{HEADER}");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.id,
                e.clean.display(),
                e.grainy.display(),
                e.params.display(),
                e.param_set,
                e.seed,
                e.crop.x,
                e.crop.y,
                e.crop.width,
                e.crop.height
            );
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_tsv()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root, path)
    }

    fn parse(text: &str, root: PathBuf, path: &Path) -> Result<Self, DatasetError> {
        let err = |line: usize, detail: String| DatasetError::Manifest {
            path: path.to_path_buf(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate();
        let (_, comment) = lines.next().ok_or_else(|| err(1, "empty manifest".into()))?;
        let comment = comment
            .strip_prefix("# ")
            .ok_or_else(|| err(1, "expected '# seed=...' comment line".into()))?;
        let (settings, constraints) = comment.split_once(" constraints: ").unwrap_or((comment, ""));
        let mut fields = [0u64; 4];
        for (k, name) in ["seed", "n_param_sets", "crops_per_image", "crop_size"].iter().enumerate() {
            fields[k] = settings
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(1, format!("missing or malformed {name}")))?;
        }
        match lines.next() {
            Some((_, h)) if h == HEADER => {}
            _ => return Err(err(2, format!("expected header '{HEADER}'"))),
        }
        let mut entries = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 10 {
                return Err(err(ln + 1, format!("expected 10 columns, found {}", cols.len())));
            }
            let num = |i: usize| -> Result<u64, DatasetError> {
                cols[i]
                    .parse()
                    .map_err(|_| err(ln + 1, format!("column {} '{}' is not a number", i + 1, cols[i])))
            };
            entries.push(ManifestEntry {
                id: num(0)? as usize,
                clean: PathBuf::from(cols[1]),
                grainy: PathBuf::from(cols[2]),
                params: PathBuf::from(cols[3]),
                param_set: num(4)? as usize,
                seed: num(5)?,
                crop: CropRect {
                    x: num(6)? as usize,
                    y: num(7)? as usize,
                    width: num(8)? as usize,
                    height: num(9)? as usize,
                },
            });
        }
        Ok(Self {
            root,
            seed: fields[0],
            constraints: constraints.to_string(),
            n_param_sets: fields[1] as usize,
            crops_per_image: fields[2] as usize,
            crop_size: fields[3] as usize,
            entries,
        })
    }
}
