//! Self-contained SVG charts on a fixed 800x500 canvas.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::write_atomic;
use crate::report::{BiasReport, SectionStatus};
use crate::stats::Histogram;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>, flat_pad: f64) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - flat_pad, hi + flat_pad)
    } else {
        (lo, hi)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y1 + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 24.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

impl LineChart {
    /// One `<polyline>` per non-empty series; axes are drawn with `<line>`.
    pub fn render(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let frame = Frame {
            x: range(all().map(|p| p.0), 0.5),
            y: range(all().map(|p| p.1), 1.0),
        };
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &frame, &self.x_label, &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if !s.points.is_empty() {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 10.0 + 20.0 * i as f64;
            let lx = WIDTH - RIGHT + 15.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{}" y="{:.2}">{}</text>"#,
                ly - 10.0,
                lx + 18.0,
                ly,
                esc(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

pub fn histogram_chart(title: &str, x_label: &str, h: &Histogram) -> String {
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let frame = Frame {
        x: (h.lo, h.hi),
        y: (0.0, max),
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, "count");
    for (k, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (x0, x1) = (frame.px(h.edge(k)), frame.px(h.edge(k + 1)));
        let y = frame.py(c as f64);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
            x1 - x0,
            HEIGHT - BOTTOM - y
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">underflow {} / overflow {}</text>"#,
        WIDTH - RIGHT + 15.0,
        TOP + 10.0,
        h.underflow,
        h.overflow
    );
    out.push_str("</svg>\n");
    out
}

/// Charts for every successful scorer section; returns the written files.
pub fn emit_charts(report: &BiasReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let meta = &report.metadata;
    let mut files = Vec::new();
    let mut write = |name: String, svg: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, svg.as_bytes())?;
        files.push(path);
        Ok(())
    };
    for sec in report.scorers.iter().filter(|s| s.status == SectionStatus::Ok) {
        let name = &sec.scorer.name;
        let x_label = format!("passage index (length in {})", meta.length_unit);
        let y_label = "score change from passage 1 (higher is better)";
        if !sec.passages.is_empty() {
            let chart = LineChart {
                title: format!("{name}: score change with passage length"),
                x_label: x_label.clone(),
                y_label: y_label.into(),
                series: sec
                    .passages
                    .iter()
                    .map(|s| Series {
                        label: s.language.clone(),
                        points: s.curve.points.iter().map(|p| (p.index as f64, p.mean_delta)).collect(),
                    })
                    .collect(),
            };
            write(format!("delta_{name}.svg"), chart.render())?;
        }
        if !sec.perturbations.is_empty() {
            let chart = LineChart {
                title: format!("{name}: perturbed passages"),
                x_label,
                y_label: y_label.into(),
                series: sec
                    .perturbations
                    .iter()
                    .map(|p| Series {
                        label: format!("{} {}", p.category, p.section.language),
                        points: p
                            .section
                            .curve
                            .points
                            .iter()
                            .map(|q| (q.index as f64, q.mean_delta))
                            .collect(),
                    })
                    .collect(),
            };
            write(format!("perturbation_{name}.svg"), chart.render())?;
        }
        if !sec.preferences.is_empty() {
            let chart = LineChart {
                title: format!("{name}: preference for shorter translations"),
                x_label: format!(
                    "length difference threshold (%), rel_diff = {}",
                    meta.rel_diff_convention
                ),
                y_label: format!("shorter preferred (%), {}", meta.tie_rule),
                series: sec
                    .preferences
                    .iter()
                    .map(|p| Series {
                        label: p.direction.clone(),
                        points: p
                            .results
                            .iter()
                            .filter_map(|r| r.rate.map(|rate| (r.threshold * 100.0, rate * 100.0)))
                            .collect(),
                    })
                    .collect(),
            };
            write(format!("preference_{name}.svg"), chart.render())?;
        }
        if let Some(h) = &sec.histogram {
            let svg = histogram_chart(
                &format!("{name}: passage score distribution"),
                &format!("raw score (bin width {})", h.bin_width),
                h,
            );
            write(format!("histogram_{name}.svg"), svg)?;
        }
    }
    Ok(files)
}
