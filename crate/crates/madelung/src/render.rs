//! Deterministic SVG figures.
//!
//! Superoscillation shading: light gray for soft, dark gray for hard
//! (hard drawn over soft). Shaded rectangles carry `class="soft"` or
//! `class="hard"` so their area can be measured from the file.

use std::fmt::Write as _;

/// Which mask pair shades a figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Shading {
    /// Soft: Q < 0; hard: K_a > E_+ − U.
    Qka,
    /// Soft: q_r < 0; hard: K_c > E_+ − U.
    Qrkc,
}

impl Shading {
    pub fn as_str(self) -> &'static str {
        match self {
            Shading::Qka => "qka",
            Shading::Qrkc => "qrkc",
        }
    }

    /// Mask column names `(soft, hard)`.
    pub fn columns(self) -> (&'static str, &'static str) {
        match self {
            Shading::Qka => ("soft_qka", "hard_qka"),
            Shading::Qrkc => ("soft_qrkc", "hard_qrkc"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FigureKind {
    /// Streamlines in (x, t) over shaded frames.
    Streamlines,
    /// Energy densities at one instant.
    Densities,
    /// K_a and Q + U at one instant, with the band limit.
    PotentialLandscape,
    /// 2D shading, flow loops and node.
    Vortex,
}

impl FigureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FigureKind::Streamlines => "streamlines",
            FigureKind::Densities => "densities",
            FigureKind::PotentialLandscape => "potential_landscape",
            FigureKind::Vortex => "vortex",
        }
    }
}

pub const SOFT_FILL: &str = "#d3d3d3";
pub const HARD_FILL: &str = "#808080";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
];

/// Shaded area in px² by class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShadeStats {
    pub soft: f64,
    pub hard: f64,
}

impl ShadeStats {
    pub fn total(&self) -> f64 {
        self.soft + self.hard
    }
}

/// Linear data → pixel map for one plot box.
#[derive(Debug, Clone, Copy)]
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

fn f2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.into()
        }
    }
}

struct Svg {
    body: String,
    stats: ShadeStats,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
             font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
             <defs><clipPath id=\"plot\"><rect x=\"{l}\" y=\"{t}\" width=\"{pw}\" height=\"{ph}\"/></clipPath></defs>\n\
             <text x=\"{cx}\" y=\"18\" text-anchor=\"middle\">{title}</text>\n",
            w = WIDTH,
            h = HEIGHT,
            l = LEFT,
            t = TOP,
            pw = WIDTH - LEFT - RIGHT,
            ph = HEIGHT - TOP - BOTTOM,
            cx = f2(WIDTH / 2.0),
            title = escape(title),
        );
        Svg {
            body,
            stats: ShadeStats::default(),
        }
    }

    fn shade(&mut self, hard: bool, x0: f64, y0: f64, x1: f64, y1: f64) {
        let (x, y) = (x0.min(x1), y0.min(y1));
        let (w, h) = ((x1 - x0).abs(), (y1 - y0).abs());
        if w <= 0.0 || h <= 0.0 {
            return;
        }
        let (class, fill) = if hard { ("hard", HARD_FILL) } else { ("soft", SOFT_FILL) };
        // measure what is written, so file and stats agree exactly
        let (xs, ys, ws, hs) = (f2(x), f2(y), f2(w), f2(h));
        let area = ws.parse::<f64>().unwrap() * hs.parse::<f64>().unwrap();
        if hard {
            self.stats.hard += area;
        } else {
            self.stats.soft += area;
        }
        let _ = writeln!(
            self.body,
            "<rect class=\"{class}\" x=\"{xs}\" y=\"{ys}\" width=\"{ws}\" height=\"{hs}\" fill=\"{fill}\"/>"
        );
    }

    fn polyline(&mut self, pts: impl Iterator<Item = (f64, f64)>, stroke: &str, width: f64) {
        let pts: Vec<String> = pts.map(|(x, y)| format!("{},{}", f2(x), f2(y))).collect();
        if pts.len() < 2 {
            return;
        }
        let _ = writeln!(
            self.body,
            "<polyline clip-path=\"url(#plot)\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\" points=\"{}\"/>",
            f2(width),
            pts.join(" ")
        );
    }

    fn marker(&mut self, x: f64, y: f64, text: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\
             <text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>",
            f2(x),
            f2(y),
            f2(x + 6.0),
            f2(y - 6.0),
            escape(text)
        );
    }

    fn axes(&mut self, fr: &Frame, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            f2(x0),
            f2(y0),
            f2(x1 - x0),
            f2(y1 - y0)
        );
        for k in 0..=4 {
            let v = fr.x.0 + (fr.x.1 - fr.x.0) * k as f64 / 4.0;
            let p = fr.px(v);
            let _ = writeln!(
                self.body,
                "<line x1=\"{p}\" y1=\"{y1}\" x2=\"{p}\" y2=\"{t}\" stroke=\"black\"/>\
                 <text x=\"{p}\" y=\"{ty}\" text-anchor=\"middle\">{}</text>",
                label(v),
                p = f2(p),
                y1 = f2(y1),
                t = f2(y1 + 5.0),
                ty = f2(y1 + 18.0),
            );
            let v = fr.y.0 + (fr.y.1 - fr.y.0) * k as f64 / 4.0;
            let p = fr.py(v);
            let _ = writeln!(
                self.body,
                "<line x1=\"{x0}\" y1=\"{p}\" x2=\"{t}\" y2=\"{p}\" stroke=\"black\"/>\
                 <text x=\"{tx}\" y=\"{p}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>",
                label(v),
                p = f2(p),
                x0 = f2(x0),
                t = f2(x0 - 5.0),
                tx = f2(x0 - 8.0),
            );
        }
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\
             <text transform=\"translate(16 {}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
            f2((x0 + x1) / 2.0),
            f2(HEIGHT - 12.0),
            escape(xlabel),
            f2((y0 + y1) / 2.0),
            escape(ylabel)
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (k, (name, colour)) in entries.iter().enumerate() {
            let y = TOP + 14.0 + 14.0 * k as f64;
            let x = WIDTH - RIGHT - 110.0;
            let _ = writeln!(
                self.body,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{colour}\" stroke-width=\"2\"/>\
                 <text x=\"{}\" y=\"{}\" dominant-baseline=\"middle\">{}</text>",
                f2(x),
                f2(y),
                f2(x + 18.0),
                f2(y),
                f2(x + 24.0),
                f2(y),
                escape(name)
            );
        }
    }

    fn finish(mut self) -> (String, ShadeStats) {
        self.body.push_str("</svg>\n");
        (self.body, self.stats)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Cell edges halfway between sample coordinates, clamped to the ends.
fn edges(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(c[0]);
    for k in 1..n {
        e.push(0.5 * (c[k - 1] + c[k]));
    }
    e.push(c[n - 1]);
    e
}

/// Runs `[a, b)` of consecutive `true` entries.
fn runs(set: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < set.len() {
        if set[k] {
            let a = k;
            while k < set.len() && set[k] {
                k += 1;
            }
            out.push((a, k));
        } else {
            k += 1;
        }
    }
    out
}

/// Shades one row of cells spanning `[y0, y1]` in pixels.
fn shade_row(svg: &mut Svg, fr: &Frame, xe: &[f64], soft: &[bool], hard: &[bool], y0: f64, y1: f64) {
    let only_soft: Vec<bool> = soft.iter().zip(hard).map(|(&s, &h)| s && !h).collect();
    for (set, is_hard) in [(&only_soft[..], false), (hard, true)] {
        for (a, b) in runs(set) {
            svg.shade(is_hard, fr.px(xe[a]), y0, fr.px(xe[b]), y1);
        }
    }
}

fn range_with_pad(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Robust range: 2nd–98th percentile, padded. Keeps node spikes from
/// flattening everything else.
fn robust_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut v: Vec<f64> = vals.filter(|v| v.is_finite()).collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    range_with_pad([at(0.02), at(0.98)].into_iter())
}

/// Streamline diagram input: masks per frame on common x samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamlineFigure {
    pub title: String,
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub soft: Vec<Vec<bool>>,
    pub hard: Vec<Vec<bool>>,
    /// `(seed quantile, [(t, x)])`.
    pub lines: Vec<(f64, Vec<(f64, f64)>)>,
    /// `(t, x)` where integration stopped near a node.
    pub halts: Vec<(f64, f64)>,
    /// `(t, x)` node events.
    pub nodes: Vec<(f64, f64)>,
}

/// x across, t up. Frame k shades the band between its neighbours' midpoints.
pub fn streamlines_svg(fig: &StreamlineFigure, x_range: Option<(f64, f64)>, t_range: Option<(f64, f64)>) -> (String, ShadeStats) {
    let t_lo = fig.times.first().copied().unwrap_or(0.0);
    let t_hi = fig.times.last().copied().unwrap_or(1.0);
    let fr = Frame {
        x: x_range.unwrap_or((fig.x[0], fig.x[fig.x.len() - 1])),
        y: t_range.unwrap_or(if t_hi > t_lo { (t_lo, t_hi) } else { (t_lo - 0.5, t_lo + 0.5) }),
    };
    let mut svg = Svg::new(&fig.title);
    let xe = edges(&fig.x);
    let te = if fig.times.len() > 1 { edges(&fig.times) } else { vec![fr.y.0, fr.y.1] };
    for k in 0..fig.times.len() {
        shade_row(&mut svg, &fr, &xe, &fig.soft[k], &fig.hard[k], fr.py(te[k]), fr.py(te[k + 1]));
    }
    for (k, (_, pts)) in fig.lines.iter().enumerate() {
        let colour = if k % 2 == 0 { "black" } else { "#333333" };
        svg.polyline(pts.iter().map(|&(t, x)| (fr.px(x), fr.py(t))), colour, 1.0);
    }
    for &(t, x) in &fig.halts {
        let _ = writeln!(
            svg.body,
            "<path d=\"M{} {}l6 6m0 -6l-6 6\" stroke=\"#d62728\" stroke-width=\"1.5\"/>",
            f2(fr.px(x) - 3.0),
            f2(fr.py(t) - 3.0)
        );
    }
    for (k, &(t, x)) in fig.nodes.iter().enumerate() {
        svg.marker(fr.px(x), fr.py(t), &format!("N{}", k + 1));
    }
    svg.axes(&fr, "x", "t");
    svg.finish()
}

/// Curves against x at one instant, over 1D shading.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveFigure {
    pub title: String,
    pub x: Vec<f64>,
    pub curves: Vec<(String, Vec<f64>)>,
    pub soft: Vec<bool>,
    pub hard: Vec<bool>,
    /// Horizontal reference lines `(label, y)`.
    pub levels: Vec<(String, f64)>,
    pub y_label: String,
}

pub fn curves_svg(fig: &CurveFigure, x_range: Option<(f64, f64)>, y_range: Option<(f64, f64)>) -> (String, ShadeStats) {
    let fr = Frame {
        x: x_range.unwrap_or((fig.x[0], fig.x[fig.x.len() - 1])),
        y: y_range.unwrap_or_else(|| {
            robust_range(
                fig.curves
                    .iter()
                    .flat_map(|(_, v)| v.iter().copied())
                    .chain(fig.levels.iter().map(|l| l.1)),
            )
        }),
    };
    let mut svg = Svg::new(&fig.title);
    let xe = edges(&fig.x);
    shade_row(&mut svg, &fr, &xe, &fig.soft, &fig.hard, fr.py(fr.y.0), fr.py(fr.y.1));
    let mut legend = Vec::new();
    for (k, (name, v)) in fig.curves.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        // break the line at undefined points
        let mut seg: Vec<(f64, f64)> = Vec::new();
        for (i, &y) in v.iter().enumerate() {
            if y.is_finite() {
                seg.push((fr.px(fig.x[i]), fr.py(y.clamp(fr.y.0 - (fr.y.1 - fr.y.0), fr.y.1 + (fr.y.1 - fr.y.0)))));
            } else if !seg.is_empty() {
                svg.polyline(seg.drain(..), colour, 1.5);
            }
        }
        svg.polyline(seg.into_iter(), colour, 1.5);
        legend.push((name.as_str(), colour));
    }
    for (name, y) in &fig.levels {
        let _ = writeln!(
            svg.body,
            "<line x1=\"{}\" y1=\"{p}\" x2=\"{}\" y2=\"{p}\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\
             <text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>",
            f2(LEFT),
            f2(WIDTH - RIGHT),
            f2(LEFT + 4.0),
            f2(fr.py(*y) - 4.0),
            escape(name),
            p = f2(fr.py(*y)),
        );
    }
    svg.legend(&legend);
    svg.axes(&fr, "x", &fig.y_label);
    svg.finish()
}

/// 2D shading on a tensor grid (row-major, x fastest), loops and nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VortexFigure {
    pub title: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub soft: Vec<bool>,
    pub hard: Vec<bool>,
    pub loops: Vec<Vec<(f64, f64)>>,
    pub nodes: Vec<(f64, f64)>,
}

pub fn vortex_svg(fig: &VortexFigure, x_range: Option<(f64, f64)>, y_range: Option<(f64, f64)>) -> (String, ShadeStats) {
    let fr = Frame {
        x: x_range.unwrap_or((fig.x[0], fig.x[fig.x.len() - 1])),
        y: y_range.unwrap_or((fig.y[0], fig.y[fig.y.len() - 1])),
    };
    let mut svg = Svg::new(&fig.title);
    let (nx, ny) = (fig.x.len(), fig.y.len());
    let xe = edges(&fig.x);
    let ye = edges(&fig.y);
    for j in 0..ny {
        let row = j * nx..(j + 1) * nx;
        shade_row(
            &mut svg,
            &fr,
            &xe,
            &fig.soft[row.clone()],
            &fig.hard[row],
            fr.py(ye[j]),
            fr.py(ye[j + 1]),
        );
    }
    for l in &fig.loops {
        svg.polyline(l.iter().map(|&(x, y)| (fr.px(x), fr.py(y))), "black", 1.0);
    }
    for (k, &(x, y)) in fig.nodes.iter().enumerate() {
        svg.marker(fr.px(x), fr.py(y), &format!("N{}", k + 1));
    }
    svg.axes(&fr, "x", "y");
    svg.finish()
}

/// Shaded area (px²) of the `soft` and `hard` rectangles in an SVG
/// written by this module.
pub fn shaded_area(svg: &str) -> ShadeStats {
    let attr = |line: &str, name: &str| -> Option<f64> {
        let key = format!(" {name}=\"");
        let start = line.find(&key)? + key.len();
        let end = start + line[start..].find('"')?;
        line[start..end].parse().ok()
    };
    let mut s = ShadeStats::default();
    for line in svg.lines() {
        let hard = line.starts_with("<rect class=\"hard\"");
        if !(hard || line.starts_with("<rect class=\"soft\"")) {
            continue;
        }
        if let (Some(w), Some(h)) = (attr(line, "width"), attr(line, "height")) {
            if hard {
                s.hard += w * h;
            } else {
                s.soft += w * h;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> StreamlineFigure {
        StreamlineFigure {
            title: "t".into(),
            x: vec![0.0, 1.0, 2.0, 3.0],
            times: vec![0.0, 1.0],
            soft: vec![vec![true, true, false, false], vec![false, true, true, false]],
            hard: vec![vec![false, true, false, false], vec![false; 4]],
            lines: vec![(0.5, vec![(0.0, 1.5), (1.0, 1.6)])],
            halts: vec![],
            nodes: vec![(0.5, 2.0)],
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(streamlines_svg(&tiny(), None, None), streamlines_svg(&tiny(), None, None));
    }

    #[test]
    fn written_rects_match_the_stats() {
        let (svg, stats) = streamlines_svg(&tiny(), None, None);
        assert_eq!(shaded_area(&svg), stats);
        assert!(stats.hard > 0.0 && stats.soft > stats.hard);
        assert!(svg.contains(SOFT_FILL) && svg.contains(HARD_FILL));
    }

    #[test]
    fn hard_cells_are_not_double_counted() {
        let mut f = tiny();
        f.soft = vec![vec![true; 4]; 2];
        f.hard = vec![vec![true; 4]; 2];
        let (_, s) = streamlines_svg(&f, None, None);
        assert_eq!(s.soft, 0.0);
        let full = (WIDTH - LEFT - RIGHT) * (HEIGHT - TOP - BOTTOM);
        assert!((s.hard - full).abs() < 1.0, "{} vs {full}", s.hard);
    }

    #[test]
    fn runs_and_edges() {
        assert_eq!(runs(&[true, true, false, true]), vec![(0, 2), (3, 4)]);
        assert_eq!(edges(&[0.0, 1.0, 3.0]), vec![0.0, 0.5, 2.0, 3.0]);
    }

    #[test]
    fn labels_are_compact() {
        assert_eq!(label(0.25), "0.25");
        assert_eq!(label(-0.0), "0");
        assert_eq!(label(12345.0), "1.23e4");
    }
}
