//! Minimal native SVG plots: line charts with axes and legend, and heatmaps.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, index: usize) -> Self {
        Self { name: name.into(), points, color: PALETTE[index % PALETTE.len()].into(), dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// Horizontal band `[lo, hi]` drawn behind the series.
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub label: String,
}

#[derive(Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    pub log_y: bool,
    /// Same scale on both axes (plane trajectories).
    pub equal_aspect: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

/// Three significant digits, for grid values that are not round numbers.
fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (2 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl LinePlot {
    fn transform(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0 && y.is_finite()).then(|| y.log10())
        } else {
            y.is_finite().then_some(y)
        }
    }

    fn ranges(&self) -> ((f64, f64), (f64, f64)) {
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if let (true, Some(ty)) = (x.is_finite(), self.transform(y)) {
                    xr = (xr.0.min(x), xr.1.max(x));
                    yr = (yr.0.min(ty), yr.1.max(ty));
                }
            }
        }
        for b in &self.bands {
            for v in [b.lo, b.hi] {
                if let Some(t) = self.transform(v) {
                    yr = (yr.0.min(t), yr.1.max(t));
                }
            }
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = 0.04 * (hi - lo);
                (lo - m, hi + m)
            }
        };
        let (mut xr, mut yr) = (pad(xr), pad(yr));
        if self.equal_aspect {
            let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
            let scale = ((xr.1 - xr.0) / pw).max((yr.1 - yr.0) / ph);
            let (cx, cy) = (0.5 * (xr.0 + xr.1), 0.5 * (yr.0 + yr.1));
            xr = (cx - 0.5 * scale * pw, cx + 0.5 * scale * pw);
            yr = (cy - 0.5 * scale * ph, cy + 0.5 * scale * ph);
        }
        (xr, yr)
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.ranges();
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{:.1}" y="24" font-size="15" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(&self.title));
        for b in &self.bands {
            if let (Some(lo), Some(hi)) = (self.transform(b.lo), self.transform(b.hi)) {
                let (top, bottom) = (py(hi.min(y1)), py(lo.max(y0)));
                let _ = writeln!(
                    out,
                    r##"<rect x="{LEFT:.1}" y="{top:.1}" width="{pw:.1}" height="{:.1}" fill="#2ca02c" fill-opacity="0.12"><title>{}</title></rect>"##,
                    (bottom - top).max(0.0),
                    esc(&b.label)
                );
            }
        }
        // axes and ticks
        let _ = writeln!(out, r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#);
        for t in nice_ticks(x0, x1, 8) {
            let x = px(t);
            let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(t));
        }
        for t in nice_ticks(y0, y1, 6) {
            let y = py(t);
            let label = if self.log_y { fmt_tick(10f64.powf(t)) } else { fmt_tick(t) };
            let _ = writeln!(out, r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##, LEFT + pw);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let mut d = String::new();
            for &(x, y) in &s.points {
                if let (true, Some(ty)) = (x.is_finite(), self.transform(y)) {
                    let _ = write!(d, "{:.2},{:.2} ", px(x), py(ty));
                }
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#, s.color, d.trim_end());
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = W - RIGHT + 14.0;
            let _ = writeln!(out, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/>"#, lx + 22.0, s.color);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 28.0, ly + 4.0, esc(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}

/// One heatmap cell.
pub struct Cell {
    pub value: f64,
    pub certified: bool,
    pub diverged: Option<bool>,
}

/// Heatmap of `ρ(M)` on a `τ × ε` grid. Certified cells are green, the rest
/// red, shaded by `ρ`; a cross marks cells whose simulation diverged.
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over `ys` then `xs`.
    pub cells: Vec<Cell>,
}

impl Heatmap {
    pub fn render(&self) -> String {
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let (nx, ny) = (self.xs.len().max(1), self.ys.len().max(1));
        let (cw, ch) = (pw / nx as f64, ph / ny as f64);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{:.1}" y="24" font-size="15" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(&self.title));
        for (j, _) in self.ys.iter().enumerate() {
            for (i, _) in self.xs.iter().enumerate() {
                let Some(c) = self.cells.get(j * nx + i) else { continue };
                let x = LEFT + i as f64 * cw;
                let y = TOP + ph - (j + 1) as f64 * ch;
                // shade: darker the closer ρ is to 1
                let shade = if c.value.is_finite() { (1.0 - (c.value - 1.0).abs().min(1.0)) * 0.8 + 0.2 } else { 1.0 };
                let fill = if c.certified { "#2ca02c" } else { "#d62728" };
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{fill}" fill-opacity="{shade:.3}"><title>rho = {}</title></rect>"#,
                    c.value
                );
                if c.diverged == Some(true) {
                    let (a, b, e, f) = (x + 0.2 * cw, y + 0.2 * ch, x + 0.8 * cw, y + 0.8 * ch);
                    let _ = writeln!(out, r#"<path d="M{a:.2},{b:.2} L{e:.2},{f:.2} M{a:.2},{f:.2} L{e:.2},{b:.2}" stroke="black" stroke-width="1.5"/>"#);
                }
            }
        }
        let _ = writeln!(out, r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#);
        let every = |n: usize| n.div_ceil(8).max(1);
        for (i, v) in self.xs.iter().enumerate().step_by(every(nx)) {
            let x = LEFT + (i as f64 + 0.5) * cw;
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_sig(*v));
        }
        for (j, v) in self.ys.iter().enumerate().step_by(every(ny)) {
            let y = TOP + ph - (j as f64 + 0.5) * ch;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_sig(*v));
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        let lx = W - RIGHT + 14.0;
        for (k, (fill, label)) in [("#2ca02c", "certified"), ("#d62728", "not certified")].iter().enumerate() {
            let ly = TOP + 18.0 * k as f64;
            let _ = writeln!(out, r#"<rect x="{lx:.1}" y="{ly:.1}" width="14" height="12" fill="{fill}"/>"#);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{label}</text>"#, lx + 20.0, ly + 10.0);
        }
        let _ = writeln!(out, r#"<text x="{lx:.1}" y="{:.1}">× diverged</text>"#, TOP + 46.0);
        out.push_str("</svg>\n");
        out
    }
}
