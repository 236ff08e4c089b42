use std::fmt::Write;

/// A named polyline in data coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Side-by-side line charts sharing one legend. Each panel is
/// `(title, y-axis label, series)`; series at the same index share a color.
pub fn line_chart_svg(x_label: &str, panels: &[(&str, &str, Vec<Series>)]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let legend_h = 18.0 * panels.iter().map(|p| p.2.len()).max().unwrap_or(0).div_ceil(4) as f64;
    let panel_w = WIDTH / panels.len().max(1) as f64;
    let (top, bottom, left, right) = (36.0, 48.0 + legend_h, 56.0, 16.0);

    for (pi, (title, y_label, series)) in panels.iter().enumerate() {
        let x0 = pi as f64 * panel_w + left;
        let x1 = (pi + 1) as f64 * panel_w - right;
        let (y0, y1) = (HEIGHT - bottom, top);
        let (xmin, xmax) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (ymin, ymax) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let sx = |x: f64| x0 + (x - xmin) / (xmax - xmin) * (x1 - x0);
        let sy = |y: f64| y0 - (y - ymin) / (ymax - ymin) * (y0 - y1);

        let _ = writeln!(svg, r#"<g class="panel" data-title="{}">"#, escape(title));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let fx = xmin + (xmax - xmin) * k as f64 / 4.0;
            let fy = ymin + (ymax - ymin) * k as f64 / 4.0;
            let (px, py) = (sx(fx), sy(fy));
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 4.0,
                y0 + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                py + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            y0 + 32.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({:.1},{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            x0 - 42.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
        for (si, s) in series.iter().enumerate() {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-label="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                escape(&s.label),
                PALETTE[si % PALETTE.len()],
                pts.join(" ")
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    if let Some((_, _, series)) = panels.first() {
        let _ = writeln!(svg, r#"<g class="legend">"#);
        for (si, s) in series.iter().enumerate() {
            let x = left + (si % 4) as f64 * 220.0;
            let y = HEIGHT - legend_h + (si / 4) as f64 * 18.0;
            let _ = writeln!(
                svg,
                r#"<g class="legend-entry"><line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
                x + 18.0,
                PALETTE[si % PALETTE.len()],
                x + 24.0,
                y + 4.0,
                escape(&s.label)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, n: usize) -> Series {
        Series {
            label: label.into(),
            points: (1..=n).map(|t| (t as f64, 1.0 / t as f64)).collect(),
        }
    }

    #[test]
    fn one_series_has_all_points() {
        let svg = line_chart_svg("T", &[("accuracy", "acc", vec![series("a", 30)])]);
        assert!(svg.contains(r#"viewBox="0 0 960 540""#));
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 30);
    }

    #[test]
    fn legend_lists_each_series() {
        let svg = line_chart_svg(
            "T",
            &[
                ("accuracy", "acc", vec![series("fedavg", 5), series("labelwise", 5)]),
                ("loss", "loss", vec![series("fedavg", 5), series("labelwise", 5)]),
            ],
        );
        assert_eq!(svg.matches("legend-entry").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 4);
    }

    #[test]
    fn labels_are_escaped_and_flat_series_drawn() {
        let flat = Series {
            label: "a<b".into(),
            points: vec![(0.0, 0.5), (1.0, 0.5)],
        };
        let svg = line_chart_svg("T", &[("x", "y", vec![flat])]);
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }
}
