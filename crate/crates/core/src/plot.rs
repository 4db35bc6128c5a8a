//! Minimal SVG line charts and a log-linear fit for decay curves.

use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

/// One chart panel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log10(y)`; non-positive values are skipped.
    pub log_y: bool,
    /// Keep one unit in x equal to one unit in y.
    pub equal_aspect: bool,
    pub series: Vec<Series>,
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

impl Panel {
    fn transformed(&self) -> Vec<Vec<(f64, f64)>> {
        self.series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (x, if self.log_y { y.log10() } else { y }))
                    .collect()
            })
            .collect()
    }

    fn render(&self, out: &mut String, y0: f64) {
        let data = self.transformed();
        let all: Vec<(f64, f64)> = data.iter().flatten().copied().collect();
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = all.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if all.is_empty() {
            (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
        }
        if x_hi - x_lo <= 0.0 {
            x_lo -= 0.5;
            x_hi += 0.5;
        }
        if y_hi - y_lo <= 0.0 {
            y_lo -= 0.5;
            y_hi += 0.5;
        }
        let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
        if self.equal_aspect {
            let scale = ((x_hi - x_lo) / w).max((y_hi - y_lo) / h);
            let (cx, cy) = (0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi));
            (x_lo, x_hi) = (cx - 0.5 * scale * w, cx + 0.5 * scale * w);
            (y_lo, y_hi) = (cy - 0.5 * scale * h, cy + 0.5 * scale * h);
        }
        let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * w;
        let py = |y: f64| y0 + MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * h;

        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_L}" y="{}" width="{w}" height="{h}" fill="none" stroke="gray"/>"#,
            y0 + MARGIN_T
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + 0.5 * w,
            y0 + 20.0,
            escape(&self.title)
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo));
            let y_text = if self.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{xv:.3}</text>"#,
                px(xv),
                y0 + MARGIN_T + h + 14.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{y_text}</text>"#,
                MARGIN_L - 4.0,
                py(yv) + 3.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            MARGIN_L + 0.5 * w,
            y0 + PANEL_H - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            y0 + MARGIN_T + 0.5 * h,
            y0 + MARGIN_T + 0.5 * h,
            escape(&self.y_label)
        );
        for (i, (series, pts)) in self.series.iter().zip(&data).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if !pts.is_empty() {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            let ly = y0 + MARGIN_T + 12.0 + 16.0 * i as f64;
            let lx = MARGIN_L + w + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
                lx + 18.0,
                lx + 22.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Stacks panels vertically into one SVG document.
pub fn render_svg(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        p.render(&mut out, i as f64 * PANEL_H);
    }
    out.push_str("</svg>\n");
    out
}

/// Least-squares line through `(t, ln y)`; returns `(slope, r²)`.
/// Non-positive `y` are skipped. `None` with fewer than two usable points.
pub fn log_linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, y)| *y > 0.0).map(|&(t, y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (sxx, sxy, syy) = pts.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &(x, y)| {
        (a + (x - mx).powi(2), b + (x - mx) * (y - my), c + (y - my).powi(2))
    });
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exponential_rate() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 3.0 * (-2.5 * i as f64 * 0.1).exp())).collect();
        let (slope, r2) = log_linear_fit(&pts).unwrap();
        assert!((slope + 2.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!(log_linear_fit(&[(0.0, 1.0)]).is_none());
        assert!(log_linear_fit(&[(0.0, -1.0), (1.0, 0.0)]).is_none());
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let panel = Panel {
            title: "a < b".into(),
            log_y: true,
            series: vec![Series::new("e", vec![(0.0, 1.0), (1.0, 0.1)]), Series::new("f", vec![(0.0, 2.0), (1.0, 0.0)])],
            ..Panel::default()
        };
        let svg = render_svg(&[panel.clone(), Panel { log_y: false, equal_aspect: true, ..panel }]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn empty_panel_renders() {
        let svg = render_svg(&[Panel::default()]);
        assert!(!svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }
}
