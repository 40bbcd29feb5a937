//! Human-editable `key: value` form of [`FilmGrainParams`].
//!
//! Keys are the FGC SEI field names, with a `CompN` suffix for per-component
//! fields and an `[i]` suffix for per-interval fields. Model values are
//! written as `scaling_factor cutoff_h cutoff_v`. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    validate, ComponentModel, FilmGrainParams, IntensityInterval, CUTOFF_RANGE, LOG2_SCALE_RANGE, MAX_INTERVALS,
    NUM_MODEL_VALUES,
};

const HEADER: &str = "# film grain characteristics, frequency filtering model";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TextError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key '{0}'")]
    MissingKey(String),
    #[error("line {line}: {field} = {value} outside allowed range {bounds}")]
    Range {
        line: usize,
        field: String,
        value: i64,
        bounds: String,
    },
    #[error("parameters fail validation: {0}")]
    Invalid(String),
}

pub fn encode_text(params: &FilmGrainParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "SEIFGCModelID: {}", params.model_id);
    let _ = writeln!(s, "SEIFGCBlendingModeID: {}", params.blending_mode_id);
    let _ = writeln!(s, "SEIFGCLog2ScaleFactor: {}", params.log2_scale_factor);
    for (c, comp) in params.components.iter().enumerate() {
        let Some(model) = comp else {
            let _ = writeln!(s, "SEIFGCCompModelPresentComp{c}: 0");
            continue;
        };
        let _ = writeln!(s, "SEIFGCCompModelPresentComp{c}: 1");
        let _ = writeln!(
            s,
            "SEIFGCNumIntensityIntervalMinus1Comp{c}: {}",
            model.intervals.len().saturating_sub(1)
        );
        let _ = writeln!(
            s,
            "SEIFGCNumModelValuesMinus1Comp{c}: {}",
            model.num_model_values.saturating_sub(1)
        );
        for (i, iv) in model.intervals.iter().enumerate() {
            let _ = writeln!(s, "SEIFGCIntensityIntervalLowerBoundComp{c}[{i}]: {}", iv.lower);
            let _ = writeln!(s, "SEIFGCIntensityIntervalUpperBoundComp{c}[{i}]: {}", iv.upper);
            let _ = writeln!(
                s,
                "SEIFGCCompModelValueComp{c}[{i}]: {} {} {}",
                iv.scaling_factor, iv.cutoff_h, iv.cutoff_v
            );
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Field {
    ModelId,
    BlendingMode,
    Log2Scale,
    Present(usize),
    NumIntervalsMinus1(usize),
    NumModelValuesMinus1(usize),
    Lower(usize, usize),
    Upper(usize, usize),
    ModelValue(usize, usize),
}

struct Entry {
    line: usize,
    values: Vec<i64>,
}

fn parse_key(key: &str) -> Option<Field> {
    match key {
        "SEIFGCModelID" => return Some(Field::ModelId),
        "SEIFGCBlendingModeID" => return Some(Field::BlendingMode),
        "SEIFGCLog2ScaleFactor" => return Some(Field::Log2Scale),
        _ => {}
    }
    let (base, index) = match key.strip_suffix(']') {
        Some(k) => {
            let open = k.rfind('[')?;
            let idx: usize = k[open + 1..].parse().ok()?;
            (&k[..open], Some(idx))
        }
        None => (key, None),
    };
    let pos = base.rfind("Comp")?;
    let comp: usize = base[pos + 4..].parse().ok()?;
    if comp > 2 || base[pos + 4..].len() != 1 {
        return None;
    }
    let name = &base[..pos];
    match (name, index) {
        ("SEIFGCCompModelPresent", None) => Some(Field::Present(comp)),
        ("SEIFGCNumIntensityIntervalMinus1", None) => Some(Field::NumIntervalsMinus1(comp)),
        ("SEIFGCNumModelValuesMinus1", None) => Some(Field::NumModelValuesMinus1(comp)),
        ("SEIFGCIntensityIntervalLowerBound", Some(i)) => Some(Field::Lower(comp, i)),
        ("SEIFGCIntensityIntervalUpperBound", Some(i)) => Some(Field::Upper(comp, i)),
        ("SEIFGCCompModelValue", Some(i)) => Some(Field::ModelValue(comp, i)),
        _ => None,
    }
}

/// Whitespace-separated tokens of `s[from..]` with their byte offsets in `s`.
fn tokens(s: &str, from: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s[from..].char_indices().map(|(i, c)| (i + from, c)) {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(st)) => {
                out.push((st, &s[st..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push((st, &s[st..]));
    }
    out
}

fn range_check(line: usize, field: &str, value: i64, lo: i64, hi: i64) -> Result<u8, TextError> {
    if value < lo || value > hi {
        let bounds = if lo == hi { format!("{lo}") } else { format!("{lo}-{hi}") };
        return Err(TextError::Range {
            line,
            field: field.to_string(),
            value,
            bounds,
        });
    }
    Ok(value as u8)
}

pub fn decode_text(text: &str) -> Result<FilmGrainParams, TextError> {
    let mut entries: BTreeMap<Field, Entry> = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(colon) = content.find(':') else {
            let column = content.len() - content.trim_start().len() + 1;
            return Err(TextError::Parse {
                line,
                column,
                message: "expected 'key: value'".into(),
            });
        };
        let key = content[..colon].trim();
        let field = parse_key(key).ok_or_else(|| TextError::UnknownKey {
            line,
            key: key.to_string(),
        })?;
        let mut values = Vec::new();
        for (at, tok) in tokens(content, colon + 1) {
            let v: i64 = tok.parse().map_err(|_| TextError::Parse {
                line,
                column: at + 1,
                message: format!("'{tok}' is not an integer"),
            })?;
            values.push(v);
        }
        let expected = if matches!(field, Field::ModelValue(..)) { 3 } else { 1 };
        if values.len() != expected {
            return Err(TextError::Parse {
                line,
                column: colon + 2,
                message: format!("{key} takes {expected} value(s), found {}", values.len()),
            });
        }
        if entries.insert(field, Entry { line, values }).is_some() {
            return Err(TextError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
    }

    let get = |field: Field, name: String| entries.get(&field).ok_or(TextError::MissingKey(name));
    let scalar = |field: Field, name: &str, lo: i64, hi: i64| -> Result<u8, TextError> {
        let e = get(field, name.to_string())?;
        range_check(e.line, name, e.values[0], lo, hi)
    };

    let mut params = FilmGrainParams::new(0);
    params.model_id = scalar(Field::ModelId, "SEIFGCModelID", 0, 0)?;
    params.blending_mode_id = scalar(Field::BlendingMode, "SEIFGCBlendingModeID", 0, 0)?;
    params.log2_scale_factor = scalar(
        Field::Log2Scale,
        "SEIFGCLog2ScaleFactor",
        LOG2_SCALE_RANGE.0 as i64,
        LOG2_SCALE_RANGE.1 as i64,
    )?;

    let mut used = 3;
    for c in 0..3 {
        let present = scalar(Field::Present(c), &format!("SEIFGCCompModelPresentComp{c}"), 0, 1)?;
        used += 1;
        if present == 0 {
            continue;
        }
        let n = scalar(
            Field::NumIntervalsMinus1(c),
            &format!("SEIFGCNumIntensityIntervalMinus1Comp{c}"),
            0,
            MAX_INTERVALS as i64 - 1,
        )? as usize
            + 1;
        let nmv = scalar(
            Field::NumModelValuesMinus1(c),
            &format!("SEIFGCNumModelValuesMinus1Comp{c}"),
            NUM_MODEL_VALUES as i64 - 1,
            NUM_MODEL_VALUES as i64 - 1,
        )?;
        used += 2;
        let mut intervals = Vec::with_capacity(n);
        for i in 0..n {
            let lname = format!("SEIFGCIntensityIntervalLowerBoundComp{c}[{i}]");
            let uname = format!("SEIFGCIntensityIntervalUpperBoundComp{c}[{i}]");
            let vname = format!("SEIFGCCompModelValueComp{c}[{i}]");
            let lower = scalar(Field::Lower(c, i), &lname, 0, 255)?;
            let upper = scalar(Field::Upper(c, i), &uname, 0, 255)?;
            let e = get(Field::ModelValue(c, i), vname.clone())?;
            let scaling_factor = range_check(e.line, &format!("{vname} scaling factor"), e.values[0], 0, 255)?;
            let (clo, chi) = (CUTOFF_RANGE.0 as i64, CUTOFF_RANGE.1 as i64);
            let cutoff_h = range_check(e.line, &format!("{vname} cutoff_h"), e.values[1], clo, chi)?;
            let cutoff_v = range_check(e.line, &format!("{vname} cutoff_v"), e.values[2], clo, chi)?;
            intervals.push(IntensityInterval::new(lower, upper, scaling_factor, cutoff_h, cutoff_v));
            used += 3;
        }
        params.components[c] = Some(ComponentModel {
            intervals,
            num_model_values: nmv + 1,
        });
    }

    if used != entries.len() {
        // keys that are well formed but not referenced by the declared layout
        let extra = entries
            .iter()
            .find(|(f, _)| !is_referenced(**f, &params))
            .map(|(_, e)| e.line)
            .unwrap_or(0);
        return Err(TextError::Parse {
            line: extra,
            column: 1,
            message: "key not covered by the declared component layout".into(),
        });
    }

    let report = validate(&params);
    if !report.is_ok() {
        return Err(TextError::Invalid(report.to_string()));
    }
    Ok(params)
}

fn is_referenced(field: Field, params: &FilmGrainParams) -> bool {
    let count = |c: usize| params.components[c].as_ref().map(|m| m.intervals.len());
    match field {
        Field::ModelId | Field::BlendingMode | Field::Log2Scale | Field::Present(_) => true,
        Field::NumIntervalsMinus1(c) | Field::NumModelValuesMinus1(c) => count(c).is_some(),
        Field::Lower(c, i) | Field::Upper(c, i) | Field::ModelValue(c, i) => count(c).is_some_and(|n| i < n),
    }
}
