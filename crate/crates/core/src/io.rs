//! Text file formats and SVG plots.
//!
//! Whitespace-separated formats skip blank lines and `#` comments. Numbers
//! are written in canonical form, scientific notation with nine significant
//! digits, so writing a parsed file reproduces it byte for byte. Angles are
//! radians unless an [`AngleUnit::Degrees`] is passed explicitly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::calibration::{CalibrationResult, Correspondence};
use crate::camera::PixelPoint;
use crate::detection::{DetectionRegion, SurfaceGrid};
use crate::error::{Error, Result};
use crate::georef::{GpsFix, OdoImuSample, Pose, ScanPoint, SensorMount, Trajectory};
use crate::harmonization::{HarmonizationReport, MetricComparison, MetricKind, RunSeries};
use crate::metrics::{Profile, SegmentMetric, TransverseProfile};

/// Canonical number formatting.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

impl AngleUnit {
    fn parse_angle(self, v: f64) -> f64 {
        match self {
            AngleUnit::Radians => v,
            AngleUnit::Degrees => v.to_radians(),
        }
    }

    fn format_angle(self, v: f64) -> f64 {
        match self {
            AngleUnit::Radians => v,
            AngleUnit::Degrees => v.to_degrees(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One data line: 1-based line number and its numeric fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub line: usize,
    pub fields: Vec<f64>,
}

/// Parses whitespace-separated numeric lines with exactly `arity` fields.
/// `source` names the input in error messages.
pub fn parse_records(text: &str, source: &str, arity: usize) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let mut fields = Vec::with_capacity(arity);
        let mut count = 0;
        for (col, token) in tokens(content) {
            count += 1;
            if count > arity {
                continue;
            }
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                path: source.to_string(),
                line,
                column: col,
                message: format!("'{token}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line,
                    column: col,
                    message: format!("'{token}' is not finite"),
                });
            }
            fields.push(v);
        }
        if count != arity {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                column: 1,
                message: format!("expected {arity} fields, found {count}"),
            });
        }
        out.push(Record { line, fields });
    }
    Ok(out)
}

/// Whitespace tokens with their 1-based character columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut col = 0;
    let mut rest = line;
    std::iter::from_fn(move || {
        let skipped = rest.len() - rest.trim_start().len();
        col += rest[..skipped].chars().count();
        rest = &rest[skipped..];
        if rest.is_empty() {
            return None;
        }
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..end];
        let start = col + 1;
        col += token.chars().count();
        rest = &rest[end..];
        Some((start, token))
    })
}

fn record_error(source: &str, line: usize, e: Error) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        column: 1,
        message: e.to_string(),
    }
}

fn write_rows<'a>(header: &str, rows: impl Iterator<Item = Vec<f64>> + 'a) -> String {
    let mut s = format!("# {header}\n");
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_num).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_correspondences(text: &str, source: &str) -> Result<Vec<Correspondence>> {
    Ok(parse_records(text, source, 5)?
        .into_iter()
        .map(|r| {
            let f = r.fields;
            Correspondence::new(Point3::new(f[0], f[1], f[2]), PixelPoint::new(f[3], f[4]))
        })
        .collect())
}

pub fn write_correspondences(corrs: &[Correspondence]) -> String {
    write_rows(
        "x y z u v",
        corrs
            .iter()
            .map(|c| vec![c.world.x, c.world.y, c.world.z, c.pixel.x, c.pixel.y]),
    )
}

pub fn parse_trajectory(text: &str, source: &str, unit: AngleUnit) -> Result<Trajectory> {
    let records = parse_records(text, source, 7)?;
    let mut poses = Vec::with_capacity(records.len());
    for r in &records {
        let f = &r.fields;
        let pose = Pose::new(
            f[0],
            Vector3::new(f[1], f[2], f[3]),
            unit.parse_angle(f[4]),
            unit.parse_angle(f[5]),
            unit.parse_angle(f[6]),
        )
        .map_err(|e| record_error(source, r.line, e))?;
        poses.push(pose);
    }
    Trajectory::new(poses).map_err(|e| Error::Parse {
        path: source.to_string(),
        line: records.first().map_or(1, |r| r.line),
        column: 1,
        message: e.to_string(),
    })
}

pub fn write_trajectory(traj: &Trajectory, unit: AngleUnit) -> String {
    write_rows(
        "time x y z yaw pitch roll",
        traj.poses().iter().map(|p| {
            vec![
                p.time,
                p.position.x,
                p.position.y,
                p.position.z,
                unit.format_angle(p.yaw),
                unit.format_angle(p.pitch),
                unit.format_angle(p.roll),
            ]
        }),
    )
}

pub fn parse_gps(text: &str, source: &str) -> Result<Vec<GpsFix>> {
    Ok(parse_records(text, source, 4)?
        .into_iter()
        .map(|r| GpsFix {
            time: r.fields[0],
            position: Vector3::new(r.fields[1], r.fields[2], r.fields[3]),
        })
        .collect())
}

pub fn write_gps(fixes: &[GpsFix]) -> String {
    write_rows(
        "time x y z",
        fixes
            .iter()
            .map(|f| vec![f.time, f.position.x, f.position.y, f.position.z]),
    )
}

/// `time distance_increment yaw_rate`; the yaw rate is per second in `unit`.
pub fn parse_odo_imu(text: &str, source: &str, unit: AngleUnit) -> Result<Vec<OdoImuSample>> {
    parse_records(text, source, 3)?
        .into_iter()
        .map(|r| {
            if r.fields[1] < 0.0 {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: r.line,
                    column: 1,
                    message: "distance increment must be non-negative".into(),
                });
            }
            Ok(OdoImuSample {
                time: r.fields[0],
                distance_increment: r.fields[1],
                yaw_rate: unit.parse_angle(r.fields[2]),
            })
        })
        .collect()
}

pub fn write_odo_imu(samples: &[OdoImuSample], unit: AngleUnit) -> String {
    write_rows(
        "time distance_increment yaw_rate",
        samples
            .iter()
            .map(|s| vec![s.time, s.distance_increment, unit.format_angle(s.yaw_rate)]),
    )
}

/// `time x y z intensity`.
pub fn parse_scan(text: &str, source: &str) -> Result<Vec<ScanPoint>> {
    parse_records(text, source, 5)?
        .into_iter()
        .map(|r| {
            let f = r.fields;
            if !(0.0..=1.0).contains(&f[4]) {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: r.line,
                    column: 1,
                    message: format!("intensity {} outside [0, 1]", f[4]),
                });
            }
            Ok(ScanPoint {
                time: f[0],
                point: Point3::new(f[1], f[2], f[3]),
                intensity: f[4],
            })
        })
        .collect()
}

pub fn write_scan(points: &[ScanPoint]) -> String {
    write_rows(
        "time x y z intensity",
        points
            .iter()
            .map(|p| vec![p.time, p.point.x, p.point.y, p.point.z, p.intensity]),
    )
}

/// One line `x y z yaw pitch roll`: scanner position and attitude in the
/// vehicle frame.
pub fn parse_mount(text: &str, source: &str, unit: AngleUnit) -> Result<SensorMount> {
    let records = parse_records(text, source, 6)?;
    let [r] = records.as_slice() else {
        return Err(Error::Parse {
            path: source.to_string(),
            line: records.get(1).map_or(1, |r| r.line),
            column: 1,
            message: format!("expected exactly one mount line, found {}", records.len()),
        });
    };
    let f = &r.fields;
    Ok(SensorMount::from_offsets(
        Vector3::new(f[0], f[1], f[2]),
        unit.parse_angle(f[3]),
        unit.parse_angle(f[4]),
        unit.parse_angle(f[5]),
    ))
}

pub fn write_mount(translation: &Vector3<f64>, yaw: f64, pitch: f64, roll: f64, unit: AngleUnit) -> String {
    write_rows(
        "x y z yaw pitch roll",
        std::iter::once(vec![
            translation.x,
            translation.y,
            translation.z,
            unit.format_angle(yaw),
            unit.format_angle(pitch),
            unit.format_angle(roll),
        ]),
    )
}

/// `chainage elevation`, uniformly spaced.
pub fn parse_profile(text: &str, source: &str) -> Result<Profile> {
    let records = parse_records(text, source, 2)?;
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.fields[0], r.fields[1])).collect();
    Profile::from_points(&points).map_err(|e| Error::Parse {
        path: source.to_string(),
        line: records.first().map_or(1, |r| r.line),
        column: 1,
        message: e.to_string(),
    })
}

pub fn write_profile(profile: &Profile) -> String {
    write_rows(
        "chainage elevation",
        profile
            .samples()
            .iter()
            .enumerate()
            .map(|(i, z)| vec![profile.chainage(i), *z]),
    )
}

/// `chainage offset elevation`; consecutive lines with equal chainage form
/// one profile.
pub fn parse_transverse(text: &str, source: &str) -> Result<Vec<TransverseProfile>> {
    let records = parse_records(text, source, 3)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let chainage = records[start].fields[0];
        let mut end = start;
        while end < records.len() && records[end].fields[0] == chainage {
            end += 1;
        }
        let group = &records[start..end];
        let tp = TransverseProfile::new(
            chainage,
            group.iter().map(|r| r.fields[1]).collect(),
            group.iter().map(|r| r.fields[2]).collect(),
        )
        .map_err(|e| record_error(source, group[0].line, e))?;
        out.push(tp);
        start = end;
    }
    Ok(out)
}

pub fn write_transverse(profiles: &[TransverseProfile]) -> String {
    write_rows(
        "chainage offset elevation",
        profiles.iter().flat_map(|tp| {
            tp.offsets()
                .iter()
                .zip(tp.elevations())
                .map(|(o, z)| vec![tp.chainage(), *o, *z])
                .collect::<Vec<_>>()
        }),
    )
}

pub const METRIC_HEADER: &str = "chainage_start,chainage_end,iri,mpd,crossfall";

/// Crossfall is left empty for segments without transverse profiles.
pub fn write_metrics_csv(segments: &[SegmentMetric]) -> String {
    let mut s = format!("{METRIC_HEADER}\n");
    for m in segments {
        let crossfall = m.crossfall.map(fmt_num).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_num(m.chainage_start),
            fmt_num(m.chainage_end),
            fmt_num(m.iri),
            fmt_num(m.mpd),
            crossfall
        );
    }
    s
}

pub fn parse_metrics_csv(text: &str, source: &str) -> Result<Vec<SegmentMetric>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, header)) if header.trim() == METRIC_HEADER => {}
        other => {
            return Err(Error::Parse {
                path: source.to_string(),
                line: other.map_or(1, |(i, _)| i + 1),
                column: 1,
                message: format!("expected header '{METRIC_HEADER}'"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                column: 1,
                message: format!("expected 5 fields, found {}", cells.len()),
            });
        }
        let mut col = 1;
        let mut values = [None; 5];
        for (k, cell) in cells.iter().enumerate() {
            let t = cell.trim();
            if !t.is_empty() {
                let v: f64 = t.parse().map_err(|_| Error::Parse {
                    path: source.to_string(),
                    line,
                    column: col,
                    message: format!("'{t}' is not a number"),
                })?;
                values[k] = Some(v);
            } else if k < 4 {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line,
                    column: col,
                    message: "missing value".into(),
                });
            }
            col += cell.chars().count() + 1;
        }
        out.push(SegmentMetric {
            chainage_start: values[0].unwrap_or_default(),
            chainage_end: values[1].unwrap_or_default(),
            iri: values[2].unwrap_or_default(),
            mpd: values[3].unwrap_or_default(),
            crossfall: values[4],
        });
    }
    Ok(out)
}

/// Splits a metric table into one series per metric, skipping metrics with
/// no values.
pub fn metrics_to_series(system_id: &str, segments: &[SegmentMetric]) -> Result<Vec<RunSeries>> {
    let mut out = Vec::new();
    for kind in MetricKind::ALL {
        let values: Vec<(f64, f64)> = segments
            .iter()
            .filter_map(|m| {
                let v = match kind {
                    MetricKind::Iri => Some(m.iri),
                    MetricKind::Mpd => Some(m.mpd),
                    MetricKind::Crossfall => m.crossfall,
                };
                v.map(|v| (m.chainage_start, v))
            })
            .collect();
        if !values.is_empty() {
            out.push(RunSeries::new(system_id, kind, values)?);
        }
    }
    Ok(out)
}

pub fn write_calibration(result: &CalibrationResult) -> String {
    let mut s = String::from("# calibration result\n");
    let p = result.projection.matrix();
    for r in 0..3 {
        let row: Vec<String> = (0..4).map(|c| fmt_num(p[(r, c)])).collect();
        let _ = writeln!(s, "projection {}", row.join(" "));
    }
    let _ = writeln!(s, "initial_rms {}", fmt_num(result.initial_rms));
    let _ = writeln!(s, "rms {}", fmt_num(result.rms_error));
    let _ = writeln!(s, "iterations {}", result.iterations);
    let _ = writeln!(s, "termination {:?}", result.termination);
    if let Some(cam) = &result.camera {
        let k = &cam.intrinsics;
        let _ = writeln!(
            s,
            "intrinsics {} {} {} {} {}",
            fmt_num(k[(0, 0)]),
            fmt_num(k[(0, 1)]),
            fmt_num(k[(0, 2)]),
            fmt_num(k[(1, 1)]),
            fmt_num(k[(1, 2)])
        );
        let d = &cam.distortion;
        let _ = writeln!(s, "distortion {} {} {}", fmt_num(d.k1), fmt_num(d.k2), fmt_num(d.k3));
        let r = cam.pose.rotation();
        for i in 0..3 {
            let _ = writeln!(s, "rotation {} {} {}", fmt_num(r[(i, 0)]), fmt_num(r[(i, 1)]), fmt_num(r[(i, 2)]));
        }
        let t = cam.pose.translation();
        let _ = writeln!(s, "translation {} {} {}", fmt_num(t.x), fmt_num(t.y), fmt_num(t.z));
    }
    s
}

pub const DETECTION_HEADER: &str = "kind,chainage_start,chainage_end,lat_start,lat_end,severity";

pub fn write_detections_csv(regions: &[DetectionRegion], grid: &SurfaceGrid) -> String {
    let mut s = format!("{DETECTION_HEADER}\n");
    for r in regions {
        let (c0, c1, l0, l1) = r.bounds(grid);
        let kind = match r.side {
            Some(side) => format!("{}_{}", r.kind.label(), format!("{side:?}").to_lowercase()),
            None => r.kind.label().to_string(),
        };
        let _ = writeln!(
            s,
            "{kind},{},{},{},{},{}",
            fmt_num(c0),
            fmt_num(c1),
            fmt_num(l0),
            fmt_num(l1),
            fmt_num(r.severity)
        );
    }
    s
}

pub const HARMONIZATION_HEADER: &str = "metric,system_a,system_b,n,r_squared,slope_ab,intercept_ab,slope_ba,intercept_ba,threshold,pass,unpaired_a,unpaired_b,aggregation";

pub fn write_harmonization_csv(report: &HarmonizationReport) -> String {
    let mut s = format!("{HARMONIZATION_HEADER}\n");
    for m in &report.metrics {
        for p in &m.pairs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                m.metric,
                p.system_a,
                p.system_b,
                p.forward.n,
                fmt_num(p.r_squared),
                fmt_num(p.forward.slope),
                fmt_num(p.forward.intercept),
                fmt_num(p.backward.slope),
                fmt_num(p.backward.intercept),
                fmt_num(m.threshold),
                if p.pass { "pass" } else { "fail" },
                p.unpaired_a,
                p.unpaired_b,
                report.aggregation
            );
        }
    }
    s
}

/// Symmetric R² matrix of one metric, systems as header and first column.
pub fn write_r2_matrix_csv(metric: &MetricComparison) -> String {
    let mut s = format!("{}", metric.metric);
    for id in &metric.systems {
        let _ = write!(s, ",{id}");
    }
    s.push('\n');
    for (id, row) in metric.systems.iter().zip(metric.r_squared_matrix()) {
        s.push_str(id);
        for v in row {
            let _ = write!(s, ",{}", fmt_num(v));
        }
        s.push('\n');
    }
    s
}

/// Minimal deterministic SVG builder.
struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="{stroke}"/>"#
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}"/>"#,
            coords.join(" ")
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#);
    }

    fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let escaped = content.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size:.0}">{escaped}</text>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Linear map of `[lo, hi]` onto `[a, b]`; a degenerate range maps to the middle.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        0.5 * (a + b)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Three stacked step plots of IRI, MPD and crossfall against chainage.
pub fn metrics_svg(segments: &[SegmentMetric], title: &str) -> String {
    let (w, panel) = (720.0, 180.0);
    let mut svg = Svg::new(w, 40.0 + 3.0 * panel);
    svg.text(10.0, 24.0, 16.0, title);
    let (c0, c1) = range(segments.iter().flat_map(|m| [m.chainage_start, m.chainage_end]));
    type Series = (&'static str, fn(&SegmentMetric) -> Option<f64>);
    let series: [Series; 3] = [
        ("IRI (m/km)", |m| Some(m.iri)),
        ("MPD (mm)", |m| Some(m.mpd)),
        ("crossfall (%)", |m| m.crossfall),
    ];
    for (k, (label, get)) in series.iter().enumerate() {
        let top = 40.0 + k as f64 * panel;
        let (x0, x1, y0, y1) = (60.0, w - 20.0, top + 20.0, top + panel - 30.0);
        svg.rect(x0, y0, x1 - x0, y1 - y0, "none", "#999");
        svg.text(x0, y0 - 5.0, 12.0, label);
        let (lo, hi) = range(segments.iter().filter_map(get));
        if lo.is_finite() {
            svg.text(5.0, y0 + 10.0, 10.0, &format!("{hi:.3}"));
            svg.text(5.0, y1, 10.0, &format!("{lo:.3}"));
            for m in segments {
                if let Some(v) = get(m) {
                    let y = scale(v, lo, hi, y1, y0);
                    svg.line(scale(m.chainage_start, c0, c1, x0, x1), y, scale(m.chainage_end, c0, c1, x0, x1), y, "#1f5fa8");
                }
            }
        }
        svg.text(x0, y1 + 15.0, 10.0, &format!("{c0:.1} m"));
        svg.text(x1 - 50.0, y1 + 15.0, 10.0, &format!("{c1:.1} m"));
    }
    svg.finish()
}

/// Elevation heatmap with region outlines and edge polylines.
pub fn detections_svg(grid: &SurfaceGrid, regions: &[DetectionRegion]) -> String {
    // At most 400 pixels per axis; each pixel shows its block's mean.
    let step_r = grid.rows().div_ceil(400).max(1);
    let step_c = grid.cols().div_ceil(400).max(1);
    let (px_r, px_c) = (grid.rows().div_ceil(step_r), grid.cols().div_ceil(step_c));
    let px = 2.0;
    let margin = 20.0;
    // Chainage runs left to right, lateral offset bottom to top.
    let mut svg = Svg::new(px_r as f64 * px + 2.0 * margin, px_c as f64 * px + 2.0 * margin);
    let mut values = vec![None; px_r * px_c];
    for (br, bc) in (0..px_r).flat_map(|r| (0..px_c).map(move |c| (r, c))) {
        let (mut sum, mut n) = (0.0, 0);
        for r in br * step_r..((br + 1) * step_r).min(grid.rows()) {
            for c in bc * step_c..((bc + 1) * step_c).min(grid.cols()) {
                if let Some(z) = grid.elevation(r, c) {
                    sum += z;
                    n += 1;
                }
            }
        }
        if n > 0 {
            values[br * px_c + bc] = Some(sum / n as f64);
        }
    }
    let (lo, hi) = range(values.iter().flatten().copied());
    let y_of = |c: f64| margin + (px_c as f64 - c) * px;
    for br in 0..px_r {
        for bc in 0..px_c {
            if let Some(v) = values[br * px_c + bc] {
                let g = scale(v, lo, hi, 30.0, 230.0).round() as u8;
                svg.rect(
                    margin + br as f64 * px,
                    y_of(bc as f64 + 1.0),
                    px,
                    px,
                    &format!("rgb({g},{g},{g})"),
                    "none",
                );
            }
        }
    }
    let cell_px = |r: usize, c: usize| (margin + (r / step_r) as f64 * px, y_of((c / step_c) as f64 + 1.0));
    let (x0, dx) = (grid.origin().0, grid.cell_size().0);
    let (y0, dy) = (grid.origin().1, grid.cell_size().1);
    for region in regions {
        let colour = match region.kind {
            crate::detection::RegionKind::Crack => "red",
            crate::detection::RegionKind::Edge => "orange",
            crate::detection::RegionKind::Marking => "deepskyblue",
        };
        if region.polyline.is_empty() {
            let (r0, r1) = range(region.cells.iter().map(|c| c.0 as f64));
            let (c0, c1) = range(region.cells.iter().map(|c| c.1 as f64));
            let (left, top) = cell_px(r0 as usize, c1 as usize);
            let (right, _) = cell_px(r1 as usize, c0 as usize);
            let (_, bottom) = cell_px(r0 as usize, c0 as usize);
            svg.rect(left, top, right - left + px, bottom - top + px, "none", colour);
        } else {
            let pts: Vec<(f64, f64)> = region
                .polyline
                .iter()
                .map(|(ch, lat)| {
                    let r = (ch - x0) / dx / step_r as f64;
                    let c = (lat - y0) / dy / step_c as f64;
                    (margin + r * px, y_of(c))
                })
                .collect();
            svg.polyline(&pts, colour);
        }
    }
    svg.finish()
}

/// Scatter of one system pair with the fitted line and R².
pub fn scatter_svg(metric: MetricKind, pair: &crate::harmonization::PairComparison) -> String {
    let size = 420.0;
    let (x0, x1, y0, y1) = (60.0, size - 20.0, 40.0, size - 50.0);
    let mut svg = Svg::new(size, size);
    svg.text(10.0, 20.0, 14.0, &format!("{metric}: {} vs {}", pair.system_b, pair.system_a));
    svg.rect(x0, y0, x1 - x0, y1 - y0, "none", "#999");
    let (lo, hi) = range(pair.pairs.iter().flat_map(|&(a, b)| [a, b]));
    for &(a, b) in &pair.pairs {
        svg.circle(scale(a, lo, hi, x0, x1), scale(b, lo, hi, y1, y0), 2.5, "#1f5fa8");
    }
    let f = &pair.forward;
    let line_at = |x: f64| f.slope * x + f.intercept;
    svg.line(
        scale(lo, lo, hi, x0, x1),
        scale(line_at(lo), lo, hi, y1, y0),
        scale(hi, lo, hi, x0, x1),
        scale(line_at(hi), lo, hi, y1, y0),
        "#c0392b",
    );
    svg.text(x0 + 10.0, y0 + 20.0, 12.0, &format!("R² = {:.3}", pair.r_squared));
    svg.text(
        x0 + 10.0,
        y0 + 36.0,
        12.0,
        &format!("y = {:.3}x + {:.3}", f.slope, f.intercept),
    );
    svg.text(x0, y1 + 20.0, 11.0, &format!("{} ({lo:.3} to {hi:.3})", pair.system_a));
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip() {
        let poses = vec![
            Pose::new(0.0, Vector3::new(1.0, 2.0, 3.0), 0.1, -0.2, 0.3).unwrap(),
            Pose::new(0.5, Vector3::new(1.5, 2.25, 3.125), 0.2, -0.1, 0.0).unwrap(),
            Pose::new(1.0, Vector3::new(2.0, 2.5, 3.25), 1.0 / 3.0, 0.0, -0.3).unwrap(),
        ];
        let traj = Trajectory::new(poses).unwrap();
        let text = write_trajectory(&traj, AngleUnit::Radians);
        let back = parse_trajectory(&text, "t.txt", AngleUnit::Radians).unwrap();
        for (a, b) in traj.poses().iter().zip(back.poses()) {
            assert!((a.position - b.position).norm() < 1e-8);
            assert!((a.yaw - b.yaw).abs() < 1e-8);
        }
        assert_eq!(write_trajectory(&back, AngleUnit::Radians), text);

        let deg = write_trajectory(&traj, AngleUnit::Degrees);
        let back = parse_trajectory(&deg, "t.txt", AngleUnit::Degrees).unwrap();
        assert!((back.poses()[2].yaw - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn wrong_field_count_cites_the_line() {
        let text = "# header\n0 1 2 3 4 5 6\n\n0 1 2 3 4\n";
        match parse_trajectory(text, "bad.txt", AngleUnit::Radians) {
            Err(Error::Parse { path, line, .. }) => assert_eq!((path.as_str(), line), ("bad.txt", 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_cites_the_column() {
        match parse_records("1 2\n3   x4\n", "p", 2) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# c\n\n  0 1 # trailing\n1 2\n   \n";
        let recs = parse_records(text, "p", 2).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].line, 3);
        assert_eq!(recs[1].fields, vec![1.0, 2.0]);
    }

    #[test]
    fn canonical_text_is_a_fixed_point() {
        let text = "# time x y z\n1.00000000e0 -2.50000000e-1 3.33333333e2 0.00000000e0\n";
        let fixes = parse_gps(text, "g").unwrap();
        assert_eq!(write_gps(&fixes), text);
    }

    #[test]
    fn metrics_csv_round_trip() {
        let segs = vec![
            SegmentMetric { chainage_start: 0.0, chainage_end: 20.0, iri: 1.25, mpd: 0.8, crossfall: Some(2.0) },
            SegmentMetric { chainage_start: 20.0, chainage_end: 40.0, iri: 2.5, mpd: 0.7, crossfall: None },
        ];
        let text = write_metrics_csv(&segs);
        assert!(text.starts_with(METRIC_HEADER));
        let back = parse_metrics_csv(&text, "m.csv").unwrap();
        assert_eq!(back, segs);
        assert_eq!(write_metrics_csv(&back), text);
        let series = metrics_to_series("a", &back).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series[2].segments().len(), 1);
        assert!(parse_metrics_csv("a,b\n", "m.csv").is_err());
    }

    #[test]
    fn profile_and_transverse_round_trip() {
        let profile = Profile::new(vec![0.0, 0.001, -0.002, 0.0005], 0.25, 10.0).unwrap();
        let back = parse_profile(&write_profile(&profile), "p").unwrap();
        assert_eq!(back.samples(), profile.samples());
        assert!((back.spacing() - 0.25).abs() < 1e-12);

        let tps = vec![
            TransverseProfile::new(1.0, vec![-1.0, 0.0, 1.0], vec![-0.02, 0.0, 0.02]).unwrap(),
            TransverseProfile::new(2.0, vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap(),
        ];
        assert_eq!(parse_transverse(&write_transverse(&tps), "t").unwrap(), tps);
    }

    #[test]
    fn scan_rejects_out_of_range_intensity() {
        assert!(parse_scan("0 1 2 3 1.5\n", "s").is_err());
        assert_eq!(parse_scan("0 1 2 3 0.5\n", "s").unwrap().len(), 1);
    }
}
