//! Two stacked line charts over α: the target output with dotted markers at
//! each α*, and the gradient L2 norm. Plain SVG text, no dependencies.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 30.0;

/// One dotted vertical marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub psi: f64,
    pub alpha: f64,
}

pub struct PathChart<'a> {
    pub title: String,
    pub alphas: &'a [f64],
    pub outputs: &'a [f64],
    pub grad_norms: &'a [f64],
    pub markers: Vec<Marker>,
    /// Embedded verbatim in a leading comment.
    pub config_text: String,
}

struct Panel {
    top: f64,
    lo: f64,
    hi: f64,
}

impl Panel {
    fn new(index: usize, values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() || !hi.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        };
        Self {
            top: index as f64 * (PANEL_HEIGHT + MARGIN_TOP + MARGIN_BOTTOM) + MARGIN_TOP,
            lo,
            hi,
        }
    }

    fn x(alpha: f64) -> f64 {
        MARGIN_LEFT + alpha * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL_HEIGHT * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    fn bottom(&self) -> f64 {
        self.top + PANEL_HEIGHT
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_panel(out: &mut String, panel: &Panel, alphas: &[f64], values: &[f64], class: &str, label: &str) {
    let (x0, x1) = (Panel::x(0.0), Panel::x(1.0));
    let (yt, yb) = (panel.top, panel.bottom());
    writeln!(
        out,
        r#"<g class="axes"><line x1="{x0:.2}" y1="{yb:.2}" x2="{x1:.2}" y2="{yb:.2}" stroke="black"/><line x1="{x0:.2}" y1="{yt:.2}" x2="{x0:.2}" y2="{yb:.2}" stroke="black"/></g>"#
    )
    .unwrap();
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let x = Panel::x(a);
        writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{a}</text>"#,
            yb + 14.0
        )
        .unwrap();
    }
    for v in [panel.lo, panel.hi] {
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.4}</text>"#,
            x0 - 4.0,
            panel.y(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{x0:.2}" y="{:.2}" font-size="12">{}</text>"#,
        yt - 8.0,
        escape(label)
    )
    .unwrap();
    let points: Vec<String> = alphas
        .iter()
        .zip(values)
        .map(|(a, v)| format!("{:.2},{:.2}", Panel::x(*a), panel.y(*v)))
        .collect();
    writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    )
    .unwrap();
}

pub fn render(chart: &PathChart) -> String {
    let height = 2.0 * (PANEL_HEIGHT + MARGIN_TOP + MARGIN_BOTTOM);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    )
    .unwrap();
    // "--" is not allowed inside XML comments
    writeln!(out, "<!--\n{}-->", chart.config_text.replace("--", "- -")).unwrap();
    writeln!(out, "<title>{}</title>", escape(&chart.title)).unwrap();

    let top = Panel::new(0, chart.outputs);
    draw_panel(&mut out, &top, chart.alphas, chart.outputs, "output", "F(alpha)");
    for m in &chart.markers {
        let x = Panel::x(m.alpha);
        writeln!(
            out,
            r#"<line class="alpha-star" data-psi="{}" data-alpha="{}" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="firebrick" stroke-dasharray="2,3"/>"#,
            m.psi,
            m.alpha,
            top.top,
            top.bottom()
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="firebrick">psi={}</text>"#,
            x + 3.0,
            top.top + 12.0,
            m.psi
        )
        .unwrap();
    }

    let bottom = Panel::new(1, chart.grad_norms);
    draw_panel(&mut out, &bottom, chart.alphas, chart.grad_norms, "gradient", "|grad F|_2 (alpha)");
    out.push_str("</svg>\n");
    out
}

/// `(x, y)` pairs of the polyline with the given class.
pub fn polyline_points(svg: &str, class: &str) -> Option<Vec<(f64, f64)>> {
    let start = svg.find(&format!(r#"<polyline class="{class}""#))?;
    let rest = &svg[start..];
    let p = rest.find("points=\"")? + "points=\"".len();
    let end = rest[p..].find('"')?;
    rest[p..p + end]
        .split_whitespace()
        .map(|pair| {
            let (x, y) = pair.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}
