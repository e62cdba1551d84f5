//! Static SVG plots: time-space diagram, MFD and cumulative counts.
//!
//! Output is plain self-contained SVG text with no external references.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analyzer::{fmt_num, CumulativePoint, MfdPoint, Polyline};
use crate::error::{Result, SimError};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Linear map from data coordinates to the SVG plot area (y grows upwards in data).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotFrame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PlotFrame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> PlotFrame {
        let mut f = PlotFrame {
            x_min: 0.0,
            x_max: 0.0,
            y_min: 0.0,
            y_max: 0.0,
        };
        for (x, y) in points {
            f.x_max = f.x_max.max(x);
            f.y_max = f.y_max.max(y);
            f.x_min = f.x_min.min(x);
            f.y_min = f.y_min.min(y);
        }
        if f.x_max <= f.x_min {
            f.x_max = f.x_min + 1.0;
        }
        if f.y_max <= f.y_min {
            f.y_max = f.y_min + 1.0;
        }
        f
    }

    fn plot_w() -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let px = MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * Self::plot_w();
        let py =
            HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * Self::plot_h();
        (px, py)
    }

    pub fn from_px(&self, px: f64, py: f64) -> (f64, f64) {
        let x = self.x_min + (px - MARGIN_LEFT) / Self::plot_w() * (self.x_max - self.x_min);
        let y =
            self.y_min + (HEIGHT - MARGIN_BOTTOM - py) / Self::plot_h() * (self.y_max - self.y_min);
        (x, y)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(svg: &mut String, title: &str, x_label: &str, y_label: &str, frame: &PlotFrame) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0) = frame.to_px(frame.x_min, frame.y_min);
    let (x1, y1) = frame.to_px(frame.x_max, frame.y_max);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="11"><text x="{x0}" y="{}" text-anchor="start">{}</text><text x="{x1}" y="{}" text-anchor="end">{}</text><text x="{}" y="{y0}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="end">{}</text></g>"#,
        y0 + 15.0,
        fmt_num(frame.x_min),
        y0 + 15.0,
        fmt_num(frame.x_max),
        x0 - 5.0,
        fmt_num(frame.y_min),
        x0 - 5.0,
        y1 + 4.0,
        fmt_num(frame.y_max)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn points_attr(frame: &PlotFrame, pts: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (i, (x, y)) in pts.enumerate() {
        let (px, py) = frame.to_px(x, y);
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{px:.3},{py:.3}");
    }
    s
}

/// Frame used by [`tsd_svg`] for these polylines.
pub fn tsd_frame(lines: &[Polyline]) -> PlotFrame {
    PlotFrame::fit(lines.iter().flat_map(|l| l.points.iter().copied()))
}

/// Time-space diagram: time (s) across, distance (m) up, one polyline per platoon.
pub fn tsd_svg(lines: &[Polyline], title: &str) -> String {
    let frame = tsd_frame(lines);
    let mut svg = String::new();
    header(&mut svg, title, "time (s)", "distance (m)", &frame);
    let _ = writeln!(
        svg,
        r#"<g fill="none" stroke="steelblue" stroke-width="0.8">"#
    );
    for line in lines {
        let _ = writeln!(
            svg,
            r#"<polyline points="{}"/>"#,
            points_attr(&frame, line.points.iter().copied())
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

pub fn mfd_frame(points: &[MfdPoint]) -> PlotFrame {
    PlotFrame::fit(points.iter().map(|p| (p.density, p.flow)))
}

/// Density-flow scatter with the bins joined in time order.
pub fn mfd_svg(points: &[MfdPoint], title: &str) -> String {
    let frame = mfd_frame(points);
    let mut svg = String::new();
    header(&mut svg, title, "density (veh/m)", "flow (veh/s)", &frame);
    let pts: Vec<(f64, f64)> = if points.is_empty() {
        vec![(0.0, 0.0)]
    } else {
        points.iter().map(|p| (p.density, p.flow)).collect()
    };
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="gray" stroke-width="1" points="{}"/>"#,
        points_attr(&frame, pts.iter().copied())
    );
    let _ = writeln!(svg, r#"<g fill="firebrick">"#);
    for &(d, q) in &pts {
        let (px, py) = frame.to_px(d, q);
        let _ = writeln!(svg, r#"<circle cx="{px:.3}" cy="{py:.3}" r="3"/>"#);
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

/// Cumulative arrival (A) and departure (D) curves of one link.
pub fn cumulative_svg(curve: &[CumulativePoint], title: &str) -> String {
    let frame = PlotFrame::fit(curve.iter().map(|p| (p.t, p.arrivals)));
    let mut svg = String::new();
    header(&mut svg, title, "time (s)", "cumulative vehicles", &frame);
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.2" points="{}"/>"#,
        points_attr(&frame, curve.iter().map(|p| (p.t, p.arrivals)))
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="darkorange" stroke-width="1.2" points="{}"/>"#,
        points_attr(&frame, curve.iter().map(|p| (p.t, p.departures)))
    );
    svg.push_str("</svg>\n");
    svg
}

fn write(path: &Path, svg: String) -> Result<()> {
    fs::write(path, svg).map_err(|e| SimError::io(path.to_path_buf(), e))
}

pub fn render_tsd_svg(lines: &[Polyline], title: &str, out: impl AsRef<Path>) -> Result<()> {
    write(out.as_ref(), tsd_svg(lines, title))
}

pub fn render_mfd_svg(points: &[MfdPoint], title: &str, out: impl AsRef<Path>) -> Result<()> {
    write(out.as_ref(), mfd_svg(points, title))
}

pub fn render_cumulative_svg(
    curve: &[CumulativePoint],
    title: &str,
    out: impl AsRef<Path>,
) -> Result<()> {
    write(out.as_ref(), cumulative_svg(curve, title))
}
