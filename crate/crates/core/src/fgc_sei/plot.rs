//! SVG rendering of one component's grain model against pixel intensity.

use std::fmt::Write as _;

use super::{Component, FilmGrainParams, CUTOFF_RANGE};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const SCALE_COLOUR: &str = "#1f4fd1";
const CUTOFF_H_COLOUR: &str = "#1a9a3a";
const CUTOFF_V_COLOUR: &str = "#7cc46a";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlotError {
    #[error("component {0} has no grain model")]
    MissingComponent(Component),
}

/// A rendered plot and a tab-separated table with one row per interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlotDocument {
    pub svg: String,
    pub table: String,
    /// x positions of the dashed separators, one per interval lower bound
    pub separators: Vec<u8>,
}

impl PlotDocument {
    /// Separators strictly inside the intensity axis.
    pub fn interior_separators(&self) -> usize {
        self.separators.iter().filter(|&&x| x > 0 && x < 255).count()
    }
}

fn x_px(v: f64) -> f64 {
    LEFT + v / 255.0 * (WIDTH - LEFT - RIGHT)
}

fn y_px(v: f64, lo: f64, hi: f64) -> f64 {
    let h = HEIGHT - TOP - BOTTOM;
    TOP + h - (v - lo) / (hi - lo) * h
}

/// Step path over the intervals; the curve holds each interval's value from
/// its lower bound to one past its upper bound and is broken across gaps.
fn step_path(points: &[(u8, u8, f64)], lo: f64, hi: f64) -> String {
    let mut d = String::new();
    let mut prev_end: Option<u16> = None;
    for &(lower, upper, v) in points {
        let y = y_px(v, lo, hi);
        let x0 = x_px(lower as f64);
        let x1 = x_px((upper as f64 + 1.0).min(255.0));
        if prev_end == Some(lower as u16) {
            let _ = write!(d, " L{x0:.2},{y:.2}");
        } else {
            let _ = write!(d, " M{x0:.2},{y:.2}");
        }
        let _ = write!(d, " L{x1:.2},{y:.2}");
        prev_end = Some(upper as u16 + 1);
    }
    d.trim_start().to_string()
}

pub fn plot_params(params: &FilmGrainParams, component: Component) -> Result<PlotDocument, PlotError> {
    let model = params.component(component).ok_or(PlotError::MissingComponent(component))?;
    let log2 = params.log2_scale_factor;
    let (clo, chi) = (CUTOFF_RANGE.0 as f64, CUTOFF_RANGE.1 as f64);
    let bottom = HEIGHT - BOTTOM;
    let right = WIDTH - RIGHT;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">Film grain model, component {component}</text>"#,
        WIDTH / 2.0
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{LEFT}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bottom}" stroke="{SCALE_COLOUR}"/><line x1="{right}" y1="{TOP}" x2="{right}" y2="{bottom}" stroke="{CUTOFF_H_COLOUR}"/></g>"#
    );
    for tick in (0..=255).step_by(32).chain(std::iter::once(255)) {
        let x = x_px(tick as f64);
        let _ = writeln!(
            svg,
            r#"<g class="x-tick"><line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.1}" stroke="black"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{tick}</text></g>"#,
            bottom + 4.0,
            bottom + 16.0
        );
    }
    for tick in (0..=255).step_by(51) {
        let y = y_px(tick as f64, 0.0, 255.0);
        let _ = writeln!(
            svg,
            r#"<text class="y-tick-scale" x="{:.1}" y="{:.2}" text-anchor="end" fill="{SCALE_COLOUR}">{tick}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for tick in (CUTOFF_RANGE.0..=CUTOFF_RANGE.1).step_by(2) {
        let y = y_px(tick as f64, clo, chi);
        let _ = writeln!(
            svg,
            r#"<text class="y-tick-cutoff" x="{:.1}" y="{:.2}" fill="{CUTOFF_H_COLOUR}">{tick}</text>"#,
            right + 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.1}" y="{:.1}" text-anchor="middle">Pixel value [0,255]</text>"#,
        (LEFT + right) / 2.0,
        HEIGHT - 8.0
    );
    let mid = (TOP + bottom) / 2.0;
    let _ = writeln!(
        svg,
        r#"<text class="y-label-scale" x="18" y="{mid:.1}" fill="{SCALE_COLOUR}" text-anchor="middle" transform="rotate(-90 18 {mid:.1})">Scaling factor [0,255] (Gain = scale * 2^-{log2})</text>"#
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label-cutoff" x="{x:.1}" y="{mid:.1}" fill="{CUTOFF_H_COLOUR}" text-anchor="middle" transform="rotate(90 {x:.1} {mid:.1})">Cut-off frequency [2,14]</text>"#,
        x = WIDTH - 18.0
    );

    let separators: Vec<u8> = model.intervals.iter().map(|iv| iv.lower).collect();
    for &s in &separators {
        let x = x_px(s as f64);
        let _ = writeln!(
            svg,
            r#"<line class="separator" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{bottom}" stroke="grey" stroke-dasharray="4 3"/>"#
        );
    }

    let scale: Vec<_> = model
        .intervals
        .iter()
        .map(|iv| (iv.lower, iv.upper, iv.scaling_factor as f64))
        .collect();
    let ch: Vec<_> = model
        .intervals
        .iter()
        .map(|iv| (iv.lower, iv.upper, iv.cutoff_h as f64))
        .collect();
    let cv: Vec<_> = model
        .intervals
        .iter()
        .map(|iv| (iv.lower, iv.upper, iv.cutoff_v as f64))
        .collect();
    let _ = writeln!(
        svg,
        r#"<path class="scaling-factor" d="{}" fill="none" stroke="{SCALE_COLOUR}" stroke-width="2"/>"#,
        step_path(&scale, 0.0, 255.0)
    );
    let _ = writeln!(
        svg,
        r#"<path class="cutoff-h" d="{}" fill="none" stroke="{CUTOFF_H_COLOUR}" stroke-width="2"/>"#,
        step_path(&ch, clo, chi)
    );
    let _ = writeln!(
        svg,
        r#"<path class="cutoff-v" d="{}" fill="none" stroke="{CUTOFF_V_COLOUR}" stroke-width="1.5"/>"#,
        step_path(&cv, clo, chi)
    );
    let lx = LEFT + 10.0;
    for (i, (label, colour)) in [
        ("scaling factor", SCALE_COLOUR),
        ("horizontal cut-off", CUTOFF_H_COLOUR),
        ("vertical cut-off", CUTOFF_V_COLOUR),
    ]
    .iter()
    .enumerate()
    {
        let y = TOP + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{y:.1}">{label}</text></g>"#,
            y - 4.0,
            lx + 18.0,
            y - 4.0,
            lx + 24.0
        );
    }
    svg.push_str("</svg>\n");

    let mut table = String::from("interval\tlower\tupper\tscaling_factor\tcutoff_h\tcutoff_v\tgain\n");
    let denom = f64::from(1u32 << log2);
    for (i, iv) in model.intervals.iter().enumerate() {
        let _ = writeln!(
            table,
            "{i}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
            iv.lower,
            iv.upper,
            iv.scaling_factor,
            iv.cutoff_h,
            iv.cutoff_v,
            iv.scaling_factor as f64 / denom
        );
    }

    Ok(PlotDocument { svg, table, separators })
}
