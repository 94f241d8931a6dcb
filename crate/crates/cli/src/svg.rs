//! Deterministic SVG figures on a fixed 800×600 canvas. Coordinates are
//! printed with two decimals so identical inputs give identical bytes.

use std::fmt::Write;

use isofisher::specmeasure::SpectralMeasure;
use isofisher::trainlab::SweepResult;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 530.0;
/// Log-scale plots show this many decades below the maximum.
const LOG_DECADES: f64 = 4.0;
const BAR_COLOR: &str = "#4c72b0";
const THEORY_COLOR: &str = "#c44e52";

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub log_y: bool,
    /// Bars across the x range.
    pub bars: usize,
    pub measure_label: String,
    pub overlay_label: String,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            title: String::new(),
            log_y: false,
            bars: 60,
            measure_label: "empirical".into(),
            overlay_label: "theory".into(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if !title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + RIGHT) / 2.0,
            escape(title)
        );
    }
}

fn frame(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        RIGHT - LEFT,
        BOTTOM - TOP
    );
}

/// Tick label: short fixed or scientific form depending on magnitude.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn value(&self, v: f64) -> f64 {
        if self.log {
            v.max(10f64.powf(self.lo)).log10()
        } else {
            v
        }
    }

    fn frac(&self, v: f64) -> f64 {
        ((self.value(v) - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + self.frac(v) * (RIGHT - LEFT)
    }

    fn y(&self, v: f64) -> f64 {
        BOTTOM - self.frac(v) * (BOTTOM - TOP)
    }
}

fn x_ticks(out: &mut String, axis: &Axis) {
    for i in 0..=5 {
        let v = axis.lo + (axis.hi - axis.lo) * i as f64 / 5.0;
        let x = axis.x(v);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{BOTTOM:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, BOTTOM + 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            BOTTOM + 20.0,
            tick_label(v)
        );
    }
}

fn y_ticks(out: &mut String, axis: &Axis) {
    let values: Vec<f64> = if axis.log {
        let (a, b) = (axis.lo.ceil() as i64, axis.hi.floor() as i64);
        (a..=b).map(|k| 10f64.powi(k as i32)).collect()
    } else {
        (0..=5).map(|i| axis.lo + (axis.hi - axis.lo) * i as f64 / 5.0).collect()
    };
    for v in values {
        let y = axis.y(v);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
}

fn x_range(measures: &[&SpectralMeasure]) -> (f64, f64) {
    let lo = measures.iter().map(|m| m.support_min()).fold(f64::INFINITY, f64::min);
    let hi = measures.iter().map(|m| m.support_max()).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 1e-12 * hi.abs().max(1.0) {
        let half = 0.5 * hi.abs().max(1.0);
        (lo - half, hi + half)
    } else {
        (lo - 0.05 * span, hi + 0.05 * span)
    }
}

/// Histogram of `measure` as bars with its atoms as stems, and optionally a
/// second measure drawn as a density polyline with marked atom stems. A stem
/// is as tall as a bar holding the atom's mass, so bars and stems share a
/// scale.
pub fn emit_svg_histogram(measure: &SpectralMeasure, overlay: Option<&SpectralMeasure>, opts: &PlotOptions) -> String {
    let mut all = vec![measure];
    all.extend(overlay);
    let (xlo, xhi) = x_range(&all);
    let bars = opts.bars.max(1);
    let bw = (xhi - xlo) / bars as f64;

    let bar_heights: Vec<(f64, f64)> = match measure.density() {
        Some(d) => (0..bars)
            .map(|i| {
                let a = xlo + i as f64 * bw;
                (a, d.mass_between(a, a + bw) / bw)
            })
            .filter(|(_, h)| *h > 0.0)
            .collect(),
        None => vec![],
    };
    let curve: Vec<(f64, f64)> = overlay
        .and_then(|o| o.density())
        .map(|d| d.nodes().zip(d.values().iter().copied()).collect())
        .unwrap_or_default();
    let stems = |m: &SpectralMeasure| -> Vec<(f64, f64)> { m.atoms().iter().map(|&(x, w)| (x, w / bw)).collect() };
    let main_stems = stems(measure);
    let over_stems = overlay.map(stems).unwrap_or_default();

    let ymax = bar_heights
        .iter()
        .chain(&curve)
        .chain(&main_stems)
        .chain(&over_stems)
        .map(|p| p.1)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let xaxis = Axis { lo: xlo, hi: xhi, log: false };
    let yaxis = if opts.log_y {
        Axis {
            lo: ymax.log10() - LOG_DECADES,
            hi: ymax.log10(),
            log: true,
        }
    } else {
        Axis { lo: 0.0, hi: ymax, log: false }
    };

    let mut out = String::new();
    header(&mut out, &opts.title);
    let _ = writeln!(out, r#"<g id="measure" fill="{BAR_COLOR}" fill-opacity="0.6" stroke="none">"#);
    for (a, h) in &bar_heights {
        let (x0, x1) = (xaxis.x(*a), xaxis.x(a + bw));
        let y = yaxis.y(*h);
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#,
            x1 - x0,
            BOTTOM - y
        );
    }
    let _ = writeln!(out, "</g>");
    let stem_group = |out: &mut String, id: &str, color: &str, pts: &[(f64, f64)], marker: bool| {
        let _ = writeln!(out, r#"<g id="{id}" stroke="{color}" stroke-width="2" fill="{color}">"#);
        for (x, h) in pts {
            let (px, py) = (xaxis.x(*x), yaxis.y(*h));
            let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{BOTTOM:.2}" x2="{px:.2}" y2="{py:.2}"/>"#);
            if marker {
                let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4"/>"#);
            }
        }
        let _ = writeln!(out, "</g>");
    };
    stem_group(&mut out, "measure-atoms", BAR_COLOR, &main_stems, false);
    if overlay.is_some() {
        if !curve.is_empty() {
            let pts: Vec<String> = curve
                .iter()
                .map(|(x, v)| format!("{:.2},{:.2}", xaxis.x(*x), yaxis.y(*v)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline id="overlay" fill="none" stroke="{THEORY_COLOR}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        stem_group(&mut out, "overlay-atoms", THEORY_COLOR, &over_stems, true);
    }
    frame(&mut out);
    x_ticks(&mut out, &xaxis);
    y_ticks(&mut out, &yaxis);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">eigenvalue</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 45.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        if opts.log_y { "density (log)" } else { "density" }
    );

    // legend
    let lx = RIGHT - 150.0;
    let rows = if overlay.is_some() { 2.0 } else { 1.0 };
    let _ = writeln!(
        out,
        r#"<g id="legend"><rect x="{lx:.2}" y="{:.2}" width="140" height="{:.2}" fill="white" stroke="black"/>"#,
        TOP + 10.0,
        10.0 + 20.0 * rows
    );
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="14" height="10" fill="{BAR_COLOR}" fill-opacity="0.6"/><text x="{:.2}" y="{:.2}">{}</text>"#,
        lx + 8.0,
        TOP + 20.0,
        lx + 30.0,
        TOP + 29.0,
        escape(&opts.measure_label)
    );
    if overlay.is_some() {
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{THEORY_COLOR}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 8.0,
            TOP + 45.0,
            lx + 22.0,
            TOP + 45.0,
            lx + 30.0,
            TOP + 49.0,
            escape(&opts.overlay_label)
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Dark blue at 0 to yellow at 1.
fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let (a, b) = ([0x26, 0x1c, 0x5c], [0xf5, 0xe0, 0x3a]);
    let c: Vec<u8> = (0..3).map(|i| (a[i] as f64 + t * (b[i] as f64 - a[i] as f64)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Test-accuracy heatmap over depth (columns) and learning rate (rows, log
/// scale), with the `η = 2/L` line and the estimated boundary `η*`.
pub fn emit_svg_heatmap(result: &SweepResult, title: &str) -> String {
    let mut depths: Vec<usize> = result.cells.iter().map(|c| c.depth).collect();
    depths.sort_unstable();
    depths.dedup();
    let mut etas: Vec<f64> = result.cells.iter().map(|c| c.eta).collect();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let logs: Vec<f64> = etas.iter().map(|e| e.log10()).collect();
    // row k spans the midpoints to its neighbours
    let half = if logs.len() > 1 { (logs[1] - logs[0]) / 2.0 } else { 0.5 };
    let edge = |k: usize| -> (f64, f64) {
        let lo = if k == 0 { logs[0] - half } else { (logs[k - 1] + logs[k]) / 2.0 };
        let hi = if k + 1 == logs.len() { logs[k] + half } else { (logs[k] + logs[k + 1]) / 2.0 };
        (lo, hi)
    };
    let ylo = logs.first().copied().unwrap_or(0.0) - half;
    let yhi = logs.last().copied().unwrap_or(0.0) + half;
    let yaxis = Axis { lo: ylo, hi: yhi, log: false };
    let right = RIGHT - 90.0;
    let col_w = (right - LEFT) / depths.len().max(1) as f64;
    let col = |d: usize| depths.iter().position(|x| *x == d).unwrap_or(0);

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(out, r#"<defs><clipPath id="plot"><rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}"/></clipPath></defs>"#, right - LEFT, BOTTOM - TOP);
    let _ = writeln!(out, r#"<g id="cells" stroke="white" stroke-width="0.5">"#);
    for c in &result.cells {
        let k = etas.iter().position(|e| *e == c.eta).unwrap_or(0);
        let (lo, hi) = edge(k);
        let x = LEFT + col(c.depth) as f64 * col_w;
        let (y0, y1) = (yaxis.y(hi), yaxis.y(lo));
        let fill = if c.diverged { "#9a9a9a".to_string() } else { ramp(c.test_acc) };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y0:.2}" width="{col_w:.2}" height="{:.2}" fill="{fill}"><title>L={} eta={} acc={}</title></rect>"#,
            y1 - y0,
            c.depth,
            c.eta,
            c.test_acc
        );
        if c.diverged {
            let (cx, cy) = (x + col_w / 2.0, (y0 + y1) / 2.0);
            let r = ((y1 - y0) / 3.0).min(col_w / 3.0).min(5.0);
            let _ = writeln!(
                out,
                r##"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="#444" stroke-width="1"/>"##,
                cx - r,
                cy - r,
                cx + r,
                cy + r,
                cx - r,
                cy + r,
                cx + r,
                cy - r
            );
        }
    }
    let _ = writeln!(out, "</g>");

    // η = 2/L through the column centres
    let line: Vec<String> = depths
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let y = BOTTOM - (((2.0 / *d as f64).log10() - ylo) / (yhi - ylo)) * (BOTTOM - TOP);
            format!("{:.2},{:.2}", LEFT + (i as f64 + 0.5) * col_w, y)
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline id="two-over-l" clip-path="url(#plot)" fill="none" stroke="white" stroke-width="2" stroke-dasharray="6 4" points="{}"/>"#,
        line.join(" ")
    );
    let _ = writeln!(out, r##"<g id="eta-star" fill="#e8475a" stroke="black">"##);
    for b in &result.boundary {
        if let Some(e) = b.eta_star {
            let cx = LEFT + (col(b.depth) as f64 + 0.5) * col_w;
            let cy = yaxis.y(e.log10());
            let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="5"/>"#);
        }
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(
        out,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        right - LEFT,
        BOTTOM - TOP
    );
    for (i, d) in depths.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{d}</text>"#,
            LEFT + (i as f64 + 0.5) * col_w,
            BOTTOM + 20.0
        );
    }
    for k in (ylo.ceil() as i64)..=(yhi.floor() as i64) {
        let y = yaxis.y(k as f64);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            tick_label(10f64.powi(k as i32))
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">depth L</text>"#,
        (LEFT + right) / 2.0,
        BOTTOM + 45.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">learning rate (log)</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    );

    // colour bar and legend
    let bx = right + 20.0;
    let _ = writeln!(out, r#"<g id="legend">"#);
    for i in 0..20 {
        let t = i as f64 / 19.0;
        let y = BOTTOM - 200.0 + (19 - i) as f64 * 10.0;
        let _ = writeln!(out, r#"<rect x="{bx:.2}" y="{y:.2}" width="16" height="10" fill="{}"/>"#, ramp(t));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">acc 1</text>"#, bx + 20.0, BOTTOM - 192.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">acc 0</text>"#, bx + 20.0, BOTTOM - 2.0);
    let _ = writeln!(
        out,
        r#"<line x1="{bx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2" stroke-dasharray="6 4"/><text x="{bx:.2}" y="{:.2}">2/L</text>"#,
        TOP + 20.0,
        bx + 24.0,
        TOP + 20.0,
        TOP + 36.0
    );
    let _ = writeln!(
        out,
        r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="#e8475a" stroke="black"/><text x="{bx:.2}" y="{:.2}">estimated η*</text>"##,
        bx + 6.0,
        TOP + 55.0,
        TOP + 74.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{bx:.2}" y="{:.2}" width="16" height="10" fill="#9a9a9a"/><text x="{bx:.2}" y="{:.2}">diverged</text>"##,
        TOP + 90.0,
        TOP + 114.0
    );
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}
