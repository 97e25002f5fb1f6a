//! Static log-log SVG of mean welfare regret against `T`.

use std::fmt::Write;

use vcg_core::fit_exponent;

use crate::harness::ExperimentSummary;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct PlotSeries {
    pub label: String,
    /// `(T, mean cumulative regret)`
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn from_summary(summary: &ExperimentSummary) -> Self {
        PlotSeries {
            label: summary.name.clone(),
            points: summary
                .aggregates
                .iter()
                .map(|a| (a.rounds as f64, a.welfare_regret.mean))
                .collect(),
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders every series on shared log-log axes; each legend entry carries
/// the fitted slope when at least three positive points exist.
pub fn render_svg(series: &[PlotSeries]) -> String {
    let positive: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|&(t, r)| t > 0.0 && r > 0.0)
        .collect();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = positive.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(t, r)| (a.min(t.log10()), b.max(t.log10()), c.min(r.log10()), d.max(r.log10())),
    );
    if positive.is_empty() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    x_lo = x_lo.floor();
    x_hi = x_hi.ceil().max(x_lo + 1.0);
    y_lo = y_lo.floor();
    y_hi = y_hi.ceil().max(y_lo + 1.0);
    let sx = |lx: f64| MARGIN + (lx - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |ly: f64| HEIGHT - MARGIN - (ly - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    for e in (x_lo as i32)..=(x_hi as i32) {
        let x = sx(e as f64);
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{bottom}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, bottom + 20.0);
    }
    for e in (y_lo as i32)..=(y_hi as i32) {
        let y = sy(e as f64);
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#, left - 8.0, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">rounds T</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">mean welfare regret</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|&&(t, r)| t > 0.0 && r > 0.0)
            .map(|&(t, r)| (sx(t.log10()), sy(r.log10())))
            .collect();
        if !pts.is_empty() {
            let d: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, (x, y))| format!("{}{x:.1} {y:.1}", if i == 0 { "M" } else { "L" }))
                .collect();
            let _ = writeln!(svg, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, d.join(" "));
            for (x, y) in &pts {
                let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{color}"/>"#);
            }
        }
        let slope = match fit_exponent(&s.points) {
            Ok(fit) => format!("slope {:.3}", fit.slope),
            Err(_) => "slope n/a".to_string(),
        };
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{} ({slope})</text>"#,
            left + 10.0,
            top + 16.0 * (k as f64 + 1.0),
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotates_slope() {
        let s = PlotSeries {
            label: "etc <a>".into(),
            points: [1e3, 1e4, 1e5].iter().map(|&t: &f64| (t, 7.0 * t.powf(2.0 / 3.0))).collect(),
        };
        let svg = render_svg(&[s]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("slope 0.667"));
        assert!(svg.contains("etc &lt;a&gt;"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = render_svg(&[PlotSeries {
            label: "none".into(),
            points: vec![(10.0, 0.0)],
        }]);
        assert!(svg.contains("slope n/a"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
