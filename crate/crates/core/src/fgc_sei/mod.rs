//! Film grain characteristics parameters for the frequency filtering model.
//!
//! Field names and ranges follow the FGC SEI message fields (`SEIFGC*`).
//! Only frequency filtering (`model_id` 0) with additive blending
//! (`blending_mode_id` 0) is supported.

mod binary;
mod plot;
mod text;

use std::fmt;

pub use binary::{decode_binary, encode_binary, CodecError, MAGIC, VERSION};
pub use plot::{plot_params, PlotDocument, PlotError};
pub use text::{decode_text, encode_text, TextError};

pub const MODEL_FREQUENCY_FILTERING: u8 = 0;
pub const BLENDING_ADDITIVE: u8 = 0;
pub const LOG2_SCALE_RANGE: (u8, u8) = (2, 7);
pub const CUTOFF_RANGE: (u8, u8) = (2, 14);
pub const MAX_INTERVALS: usize = 256;
/// scaling factor, horizontal cutoff, vertical cutoff
pub const NUM_MODEL_VALUES: u8 = 3;

/// Colour component carrying its own grain model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Y = 0,
    Cb = 1,
    Cr = 2,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Y, Component::Cb, Component::Cr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_luma(self) -> bool {
        self == Component::Y
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Y => "y",
            Component::Cb => "cb",
            Component::Cr => "cr",
        })
    }
}

impl std::str::FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "y" | "luma" | "0" => Ok(Component::Y),
            "cb" | "u" | "1" => Ok(Component::Cb),
            "cr" | "v" | "2" => Ok(Component::Cr),
            other => Err(format!("unknown component '{other}' (expected y, cb or cr)")),
        }
    }
}

/// One intensity range sharing a gain and a pair of cutoff frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IntensityInterval {
    pub lower: u8,
    pub upper: u8,
    pub scaling_factor: u8,
    pub cutoff_h: u8,
    pub cutoff_v: u8,
}

impl IntensityInterval {
    pub fn new(lower: u8, upper: u8, scaling_factor: u8, cutoff_h: u8, cutoff_v: u8) -> Self {
        Self {
            lower,
            upper,
            scaling_factor,
            cutoff_h,
            cutoff_v,
        }
    }

    pub fn contains(&self, intensity: u8) -> bool {
        self.lower <= intensity && intensity <= self.upper
    }
}

/// Grain model of one colour component.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ComponentModel {
    pub intervals: Vec<IntensityInterval>,
    pub num_model_values: u8,
}

impl ComponentModel {
    pub fn new(intervals: Vec<IntensityInterval>) -> Self {
        Self {
            intervals,
            num_model_values: NUM_MODEL_VALUES,
        }
    }

    /// The interval containing `intensity`, if any. Intervals are
    /// non-overlapping in a valid model so the first match is the only one.
    pub fn interval_for(&self, intensity: u8) -> Option<&IntensityInterval> {
        self.intervals.iter().find(|iv| iv.contains(intensity))
    }
}

/// A complete film grain parameter set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FilmGrainParams {
    pub model_id: u8,
    pub blending_mode_id: u8,
    pub log2_scale_factor: u8,
    /// Indexed by [`Component::index`]; `None` means the component carries no grain.
    pub components: [Option<ComponentModel>; 3],
}

impl FilmGrainParams {
    pub fn new(log2_scale_factor: u8) -> Self {
        Self {
            model_id: MODEL_FREQUENCY_FILTERING,
            blending_mode_id: BLENDING_ADDITIVE,
            log2_scale_factor,
            components: [None, None, None],
        }
    }

    pub fn with_component(mut self, component: Component, model: ComponentModel) -> Self {
        self.components[component.index()] = Some(model);
        self
    }

    pub fn component(&self, component: Component) -> Option<&ComponentModel> {
        self.components[component.index()].as_ref()
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    ModelId,
    BlendingMode,
    Log2ScaleRange,
    CutoffRange,
    LowerNotAboveUpper,
    SortedNonOverlapping,
    IntervalCount,
    NumModelValues,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::ModelId => "model-id",
            Rule::BlendingMode => "blending-mode",
            Rule::Log2ScaleRange => "log2-scale-range",
            Rule::CutoffRange => "cutoff-range",
            Rule::LowerNotAboveUpper => "lower-le-upper",
            Rule::SortedNonOverlapping => "sorted-non-overlapping",
            Rule::IntervalCount => "interval-count",
            Rule::NumModelValues => "num-model-values",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.path, self.rule.id(), self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            rule,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every range and ordering rule; violations are collected, not raised.
pub fn validate(params: &FilmGrainParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    if params.model_id != MODEL_FREQUENCY_FILTERING {
        report.push(
            "SEIFGCModelID",
            Rule::ModelId,
            format!("model {} unsupported, only frequency filtering (0)", params.model_id),
        );
    }
    if params.blending_mode_id != BLENDING_ADDITIVE {
        report.push(
            "SEIFGCBlendingModeID",
            Rule::BlendingMode,
            format!("blending mode {} unsupported, only additive (0)", params.blending_mode_id),
        );
    }
    let (lo, hi) = LOG2_SCALE_RANGE;
    if !(lo..=hi).contains(&params.log2_scale_factor) {
        report.push(
            "SEIFGCLog2ScaleFactor",
            Rule::Log2ScaleRange,
            format!("{} outside {lo}-{hi}", params.log2_scale_factor),
        );
    }
    for c in Component::ALL {
        if let Some(model) = params.component(c) {
            validate_component(c, model, &mut report);
        }
    }
    report
}

fn validate_component(c: Component, model: &ComponentModel, report: &mut ValidationReport) {
    let comp = c.index();
    if model.num_model_values != NUM_MODEL_VALUES {
        report.push(
            format!("SEIFGCNumModelValuesMinus1Comp{comp}"),
            Rule::NumModelValues,
            format!("{} model values, expected {NUM_MODEL_VALUES}", model.num_model_values),
        );
    }
    let n = model.intervals.len();
    if n == 0 || n > MAX_INTERVALS {
        report.push(
            format!("SEIFGCNumIntensityIntervalMinus1Comp{comp}"),
            Rule::IntervalCount,
            format!("{n} intervals, expected 1-{MAX_INTERVALS}"),
        );
    }
    let (clo, chi) = CUTOFF_RANGE;
    for (i, iv) in model.intervals.iter().enumerate() {
        let path = |field: &str| format!("comp{comp}.interval[{i}].{field}");
        if iv.lower > iv.upper {
            report.push(
                path("lower"),
                Rule::LowerNotAboveUpper,
                format!("lower bound {} exceeds upper bound {}", iv.lower, iv.upper),
            );
        }
        for (name, v) in [("cutoff_h", iv.cutoff_h), ("cutoff_v", iv.cutoff_v)] {
            if !(clo..=chi).contains(&v) {
                report.push(path(name), Rule::CutoffRange, format!("{v} outside {clo}-{chi}"));
            }
        }
        if i > 0 {
            let prev = &model.intervals[i - 1];
            if iv.lower <= prev.upper || iv.lower <= prev.lower {
                report.push(
                    path("lower"),
                    Rule::SortedNonOverlapping,
                    format!(
                        "interval [{}, {}] overlaps or precedes [{}, {}]",
                        iv.lower, iv.upper, prev.lower, prev.upper
                    ),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(lower: u8, upper: u8) -> FilmGrainParams {
        FilmGrainParams::new(4).with_component(
            Component::Y,
            ComponentModel::new(vec![IntensityInterval::new(lower, upper, 100, 8, 8)]),
        )
    }

    #[test]
    fn minimal_luma_params_are_valid() {
        assert!(validate(&single(0, 255)).is_ok());
    }

    #[test]
    fn inverted_bounds_are_reported() {
        let report = validate(&single(200, 100));
        assert!(!report.is_ok());
        assert_eq!(report.violations[0].rule, Rule::LowerNotAboveUpper);
    }

    #[test]
    fn every_range_rule_fires() {
        let mut p = FilmGrainParams::new(9).with_component(
            Component::Cb,
            ComponentModel {
                intervals: vec![
                    IntensityInterval::new(0, 100, 10, 1, 15),
                    IntensityInterval::new(100, 200, 10, 4, 4),
                ],
                num_model_values: 2,
            },
        );
        p.model_id = 1;
        p.blending_mode_id = 1;
        let rules: Vec<Rule> = validate(&p).violations.iter().map(|v| v.rule).collect();
        for r in [
            Rule::ModelId,
            Rule::BlendingMode,
            Rule::Log2ScaleRange,
            Rule::NumModelValues,
            Rule::CutoffRange,
            Rule::SortedNonOverlapping,
        ] {
            assert!(rules.contains(&r), "missing {r:?} in {rules:?}");
        }
        // both cutoffs are out of range
        assert_eq!(rules.iter().filter(|r| **r == Rule::CutoffRange).count(), 2);
    }

    #[test]
    fn empty_component_is_rejected() {
        let p = FilmGrainParams::new(4).with_component(Component::Cr, ComponentModel::new(vec![]));
        assert_eq!(validate(&p).violations[0].rule, Rule::IntervalCount);
    }

    #[test]
    fn params_without_components_are_valid() {
        assert!(validate(&FilmGrainParams::new(2)).is_ok());
        assert!(validate(&FilmGrainParams::new(7)).is_ok());
    }
}
