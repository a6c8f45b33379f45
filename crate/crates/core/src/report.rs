//! Text reports and SVG bias-factor plots.
//!
//! Plots follow the layout of a bias-factor contour figure: `rr_eu` on the
//! x-axis, `rr_ud` on the y-axis, a grayscale heatmap of B underneath, a
//! solid contour for the confidence-limit kappa, a dashed one for the
//! point-estimate kappa and a labelled marker at each equal-association
//! point. Output is a plain string with fixed-precision numbers, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;

use serde::Serialize;

use crate::contour::{contour_rr_eu, sample_contour_between, ContourCurve, ASYMPTOTE_OFFSET, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::oracle::{
    max_observed_rr, verify_bound, verify_nie_sufficiency, BoundReport, GridMaximum, SufficiencyReport, BOUND_SLACK,
};
use crate::sensitivity::{bias_factor_unchecked, Kappa};
use crate::study::{NieResult, StudyRecord};

pub const DEFAULT_HEATMAP_CELLS: usize = 60;
/// Gray level at B = 1 and at the largest B in view.
pub const SHADE_LIGHT: u8 = 0xff;
pub const SHADE_DARK: u8 = 0x50;

const PANEL_WIDTH: f64 = 520.0;
const PANEL_HEIGHT: f64 = 520.0;
const PLOT_LEFT: f64 = 70.0;
const PLOT_TOP: f64 = 50.0;
const PLOT_SIZE: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveStyle {
    /// Governing confidence limit.
    Solid,
    /// Point estimate.
    Dashed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StyledCurve {
    pub curve: ContourCurve,
    pub style: CurveStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marker {
    pub rr_eu: f64,
    pub rr_ud: f64,
    pub label: String,
    pub style: CurveStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatmapSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSpec {
    pub curves: Vec<StyledCurve>,
    pub markers: Vec<Marker>,
    pub heatmap: HeatmapSpec,
    pub title: String,
}

/// Default axis extent `max(10, 1.5 nie_point)`.
pub fn default_axis_max(result: &NieResult) -> f64 {
    (1.5 * result.nie_point).max(10.0)
}

/// Contour of `kappa` clipped to the square window `[1, axis_max]^2`, or
/// `None` when the curve does not enter the window.
///
/// Sampling starts where the curve enters through the top edge, which is
/// always above the asymptote; a fixed offset would cut the steep branch
/// short when kappa is very close to 1.
fn windowed_contour(kappa: Kappa, axis_max: f64) -> Result<Option<ContourCurve>> {
    let k = kappa.value();
    if axis_max <= k {
        return Ok(None);
    }
    let start = if k == 1.0 {
        1.0 + ASYMPTOTE_OFFSET
    } else {
        contour_rr_eu(kappa, axis_max)?
    };
    if start >= axis_max {
        return Ok(None);
    }
    sample_contour_between(kappa, DEFAULT_POINTS, start, axis_max).map(Some)
}

impl PlotSpec {
    /// Plot for one analyzed study. `axis_max` defaults to
    /// [`default_axis_max`].
    pub fn for_result(result: &NieResult, title: &str, axis_max: Option<f64>) -> Result<Self> {
        let axis_max = axis_max.unwrap_or_else(|| default_axis_max(result));
        if !axis_max.is_finite() || axis_max <= 1.0 {
            return Err(Error::Input(format!("axis maximum must exceed 1, got {axis_max}")));
        }
        let coincident = result.kappa_limit == result.kappa_point;

        let mut curves = Vec::new();
        let mut markers = Vec::new();
        let entries = [
            (result.kappa_limit, result.nie_limit, CurveStyle::Solid),
            (result.kappa_point, result.nie_point, CurveStyle::Dashed),
        ];
        for (kappa, nie, style) in entries {
            if coincident && style == CurveStyle::Dashed {
                break;
            }
            if let Some(curve) = windowed_contour(kappa, axis_max)? {
                curves.push(StyledCurve { curve, style });
            }
            let label = match (style, coincident) {
                (_, true) => format!("NIE {nie:.2} (CI limit, point)"),
                (CurveStyle::Solid, false) => format!("NIE {nie:.2} (CI limit)"),
                (CurveStyle::Dashed, false) => format!("NIE {nie:.2} (point)"),
            };
            markers.push(Marker {
                rr_eu: nie,
                rr_ud: nie,
                label,
                style,
            });
        }

        Ok(PlotSpec {
            curves,
            markers,
            heatmap: HeatmapSpec {
                x_range: (1.0, axis_max),
                y_range: (1.0, axis_max),
                cells: DEFAULT_HEATMAP_CELLS,
            },
            title: title.to_string(),
        })
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn shade(b: f64, b_max: f64) -> String {
    let t = if b_max > 1.0 {
        ((b - 1.0) / (b_max - 1.0)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let level = (SHADE_LIGHT as f64 - t * (SHADE_LIGHT - SHADE_DARK) as f64).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

fn tick_step(span: f64) -> f64 {
    for step in [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        if span / step <= 10.0 {
            return step;
        }
    }
    (span / 10.0).ceil()
}

struct Frame {
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        PLOT_LEFT + (v - self.x_range.0) / (self.x_range.1 - self.x_range.0) * PLOT_SIZE
    }

    fn y(&self, v: f64) -> f64 {
        PLOT_TOP + PLOT_SIZE - (v - self.y_range.0) / (self.y_range.1 - self.y_range.0) * PLOT_SIZE
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_range.0 && x <= self.x_range.1 && y >= self.y_range.0 && y <= self.y_range.1
    }
}

fn render_panel(out: &mut String, spec: &PlotSpec, letter: Option<char>) {
    let frame = Frame {
        x_range: spec.heatmap.x_range,
        y_range: spec.heatmap.y_range,
    };
    let title = match letter {
        Some(l) => format!("({l}) {}", spec.title),
        None => spec.title.clone(),
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="30" text-anchor="middle" font-size="15">{}</text>"#,
        PLOT_LEFT + PLOT_SIZE / 2.0,
        escape(&title)
    );

    // Heatmap cells, shaded by B at the cell centre.
    let n = spec.heatmap.cells.max(1);
    let (x0, x1) = frame.x_range;
    let (y0, y1) = frame.y_range;
    let b_max = bias_factor_unchecked(x1, y1);
    let cell = PLOT_SIZE / n as f64;
    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for j in 0..n {
        let yc = y0 + (j as f64 + 0.5) / n as f64 * (y1 - y0);
        for i in 0..n {
            let xc = x0 + (i as f64 + 0.5) / n as f64 * (x1 - x0);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                PLOT_LEFT + i as f64 * cell,
                PLOT_TOP + PLOT_SIZE - (j as f64 + 1.0) * cell,
                cell,
                cell,
                shade(bias_factor_unchecked(xc, yc), b_max)
            );
        }
    }
    let _ = writeln!(out, "</g>");

    // Frame and ticks.
    let _ = writeln!(
        out,
        r#"<rect x="{PLOT_LEFT:.2}" y="{PLOT_TOP:.2}" width="{PLOT_SIZE:.2}" height="{PLOT_SIZE:.2}" fill="none" stroke="black"/>"#
    );
    let step = tick_step(x1 - x0);
    let first = (x0 / step).ceil() as i64;
    let last = (x1 / step + 1e-9).floor() as i64;
    for t in first..=last {
        let v = t as f64 * step;
        let (px, py) = (frame.x(v), frame.y(v));
        let label = if step < 1.0 {
            format!("{v:.1}")
        } else {
            format!("{v:.0}")
        };
        let bottom = PLOT_TOP + PLOT_SIZE;
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="11">{label}</text>"#,
            bottom + 5.0,
            bottom + 18.0
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{PLOT_LEFT:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{label}</text>"#,
            PLOT_LEFT - 5.0,
            PLOT_LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">RR<tspan baseline-shift="sub" font-size="9">EU</tspan></text>"#,
        PLOT_LEFT + PLOT_SIZE / 2.0,
        PLOT_TOP + PLOT_SIZE + 40.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">RR<tspan baseline-shift="sub" font-size="9">UD</tspan></text>"#,
        PLOT_TOP + PLOT_SIZE / 2.0,
        PLOT_TOP + PLOT_SIZE / 2.0
    );

    for styled in &spec.curves {
        let mut points = String::new();
        for p in &styled.curve.points {
            if !points.is_empty() {
                points.push(' ');
            }
            let _ = write!(points, "{:.2},{:.2}", frame.x(p.rr_eu), frame.y(p.rr_ud));
        }
        let dash = match styled.style {
            CurveStyle::Solid => "",
            CurveStyle::Dashed => r#" stroke-dasharray="6 4""#,
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{points}" fill="none" stroke="black" stroke-width="2"{dash}><title>kappa = {:.4}</title></polyline>"#,
            styled.curve.kappa.value()
        );
    }

    for m in &spec.markers {
        if !frame.contains(m.rr_eu, m.rr_ud) {
            continue;
        }
        let (px, py) = (frame.x(m.rr_eu), frame.y(m.rr_ud));
        let fill = match m.style {
            CurveStyle::Solid => "black",
            CurveStyle::Dashed => "white",
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="4.5" fill="{fill}" stroke="black" stroke-width="1.5"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            px + 8.0,
            py - 8.0,
            escape(&m.label)
        );
    }
}

/// Render one or more panels into a standalone SVG document. Panels are laid
/// out two per row and lettered A, B, ... when there is more than one.
pub fn render_svg(specs: &[PlotSpec]) -> String {
    let columns = if specs.len() > 1 { 2 } else { 1 };
    let rows = specs.len().div_ceil(columns).max(1);
    let width = PANEL_WIDTH * columns as f64;
    let height = PANEL_HEIGHT * rows as f64;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        out,
        "<metadata>Shading: bias factor B = RR_UD*RR_EU/(RR_UD+RR_EU-1) at each cell centre, \
         mapped linearly to gray from #{SHADE_LIGHT:02x}{SHADE_LIGHT:02x}{SHADE_LIGHT:02x} at B = 1 \
         to #{SHADE_DARK:02x}{SHADE_DARK:02x}{SHADE_DARK:02x} at the largest B in the panel. \
         Solid curve: confidence-limit kappa contour. Dashed curve: point-estimate kappa contour.</metadata>"
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, spec) in specs.iter().enumerate() {
        let (col, row) = (i % columns, i / columns);
        let letter = (specs.len() > 1).then(|| (b'A' + (i % 26) as u8) as char);
        let _ = writeln!(
            out,
            r#"<g transform="translate({:.0} {:.0})">"#,
            col as f64 * PANEL_WIDTH,
            row as f64 * PANEL_HEIGHT
        );
        render_panel(&mut out, spec, letter);
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn fmt(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

fn flag_list(result: &NieResult) -> String {
    if result.flags.is_empty() {
        "-".to_string()
    } else {
        result
            .flags
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Multi-line report for a single study.
pub fn study_text(record: &StudyRecord, result: &NieResult, digits: usize) -> String {
    let e = &record.estimate;
    let c = &result.converted_estimate;
    let mut out = String::new();
    let _ = writeln!(out, "study:                 {}", record.study_id);
    if !record.label.is_empty() {
        let _ = writeln!(out, "label:                 {}", record.label);
    }
    let _ = writeln!(out, "direction:             {}", record.direction);
    let _ = writeln!(
        out,
        "estimate:              {} {} ({}, {}); margin {}",
        e.measure(),
        fmt(e.point(), digits),
        fmt(e.lower(), digits),
        fmt(e.upper(), digits),
        fmt(record.margin, digits)
    );
    let _ = writeln!(
        out,
        "risk-ratio scale:      {} ({}, {}); margin {}",
        fmt(c.point(), digits),
        fmt(c.lower(), digits),
        fmt(c.upper(), digits),
        fmt(result.converted_margin, digits)
    );
    let _ = writeln!(out, "governing limit:       {}", fmt(result.governing_limit, digits));
    let _ = writeln!(
        out,
        "kappa (limit):         {}",
        fmt(result.kappa_limit.value(), digits)
    );
    let _ = writeln!(out, "NIE (limit):           {}", fmt(result.nie_limit, digits));
    let _ = writeln!(
        out,
        "kappa (point):         {}",
        fmt(result.kappa_point.value(), digits)
    );
    let _ = writeln!(out, "NIE (point):           {}", fmt(result.nie_point, digits));
    let _ = writeln!(
        out,
        "non-inferiority:       {}",
        if result.non_inferiority_established {
            "established"
        } else {
            "not established"
        }
    );
    let _ = writeln!(out, "flags:                 {}", flag_list(result));
    out
}

/// Summary table with one row per study: estimate and margin as given, NIE
/// for the confidence limit and for the point estimate.
pub fn batch_text(records: &[StudyRecord], results: &[NieResult], digits: usize) -> String {
    let header = [
        "study_id",
        "estimate (95% CI); margin",
        "NIE limit",
        "NIE point",
        "non-inferior",
        "flags",
    ];
    let mut rows: Vec<[String; 6]> = Vec::with_capacity(records.len());
    for (r, res) in records.iter().zip(results) {
        let e = &r.estimate;
        rows.push([
            r.study_id.clone(),
            format!(
                "{} {} ({}, {}); {}",
                e.measure(),
                fmt(e.point(), digits),
                fmt(e.lower(), digits),
                fmt(e.upper(), digits),
                fmt(r.margin, digits)
            ),
            fmt(res.nie_limit, digits),
            fmt(res.nie_point, digits),
            if res.non_inferiority_established { "yes" } else { "no" }.to_string(),
            flag_list(res),
        ]);
    }
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| -> String {
        let padded: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    out.push_str(&line(&widths.map(|w| "-".repeat(w)).each_ref().map(String::as_str)));
    for row in &rows {
        out.push_str(&line(&row.each_ref().map(String::as_str)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessCheck {
    pub cap: f64,
    pub bias_factor: f64,
    pub grid_maximum: GridMaximum,
    pub gap: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub bound: BoundReport,
    pub grid_resolution: usize,
    pub sharpness: Vec<SharpnessCheck>,
    pub sufficiency: Vec<SufficiencyReport>,
    pub passed: bool,
}

impl VerifyReport {
    /// Random scenarios outside the bound plus grid maxima above B. Unlike
    /// `passed`, this ignores tolerance misses that a finer grid would fix.
    pub fn violation_count(&self) -> usize {
        self.bound.violations
            + self
                .sharpness
                .iter()
                .filter(|s| s.grid_maximum.max_rr > s.bias_factor + BOUND_SLACK)
                .count()
    }
}

/// Caps checked for sharpness of the bound, and the allowed gap between the
/// grid maximum and B at each.
pub const SHARPNESS_CAPS: [f64; 3] = [1.5, 2.0, 3.0];
pub const SHARPNESS_TOLERANCE: f64 = 0.01;
/// Kappa values whose contours are cross-checked against the grid search.
pub const SUFFICIENCY_KAPPAS: [f64; 4] = [1.02, 1.34, 1.63, 2.12];

/// Random bound check, sharpness at [`SHARPNESS_CAPS`] and contour
/// sufficiency at [`SUFFICIENCY_KAPPAS`].
pub fn run_verification(n_random: usize, seed: u64, grid_resolution: usize) -> Result<VerifyReport> {
    let bound = verify_bound(n_random, seed)?;
    let sharpness = SHARPNESS_CAPS
        .iter()
        .map(|&cap| {
            let grid_maximum = max_observed_rr(cap, cap, grid_resolution)?;
            let b = bias_factor_unchecked(cap, cap);
            let gap = (b - grid_maximum.max_rr).abs();
            Ok(SharpnessCheck {
                cap,
                bias_factor: b,
                grid_maximum,
                gap,
                within_tolerance: gap <= SHARPNESS_TOLERANCE && grid_maximum.max_rr <= b + BOUND_SLACK,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sufficiency = SUFFICIENCY_KAPPAS
        .iter()
        .map(|&k| verify_nie_sufficiency(Kappa::new(k)?, grid_resolution))
        .collect::<Result<Vec<_>>>()?;
    let passed = bound.violations == 0
        && sharpness.iter().all(|s| s.within_tolerance)
        && sufficiency.iter().all(|s| s.all_consistent);
    Ok(VerifyReport {
        bound,
        grid_resolution,
        sharpness,
        sufficiency,
        passed,
    })
}

pub fn verify_text(report: &VerifyReport) -> String {
    let mut out = String::new();
    let b = &report.bound;
    let _ = writeln!(out, "bound check: {} scenarios, seed {}", b.n_random, b.seed);
    let _ = writeln!(out, "  violations:   {}", b.violations);
    let _ = writeln!(out, "  worst margin: {:.3e}", b.worst.margin);
    let s = &b.worst.scenario;
    let _ = writeln!(
        out,
        "  worst scenario: P(U|E=1)={:.6} P(U|E=0)={:.6} P(D|U=1)={:.6} P(D|U=0)={:.6} rr_obs={:.6} bounds=[{:.6}, {:.6}]",
        s.p_u_given_e1,
        s.p_u_given_e0,
        s.risk_d_given_u1,
        s.risk_d_given_u0,
        b.worst.rr_obs,
        b.worst.lower_bound,
        b.worst.upper_bound
    );
    let _ = writeln!(out, "sharpness (grid resolution {}):", report.grid_resolution);
    for c in &report.sharpness {
        let _ = writeln!(
            out,
            "  caps ({:.2}, {:.2}): B = {:.4}, grid max = {:.4}, gap = {:.4} [{}]",
            c.cap,
            c.cap,
            c.bias_factor,
            c.grid_maximum.max_rr,
            c.gap,
            if c.within_tolerance { "ok" } else { "FAIL" }
        );
    }
    for s in &report.sufficiency {
        let bad = s.checks.iter().filter(|c| !c.consistent).count();
        let _ = writeln!(
            out,
            "contour sufficiency kappa {:.2}: {} points, {} inconsistent",
            s.kappa.value(),
            s.checks.len(),
            bad
        );
    }
    let _ = writeln!(out, "result: {}", if report.passed { "PASS" } else { "FAIL" });
    out
}
