//! Dependency-light SVG rendering: line charts for training curves and bar
//! grids for action histograms. Output is plain static markup.

use std::fmt::Write;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 64.0;
const MARGIN_BOTTOM: f64 = 56.0;

const AXIS_COLOR: &str = "#444444";
const GRID_COLOR: &str = "#e4e4e4";
const TEXT_COLOR: &str = "#222222";

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One polyline. `data_attr`, when set, is embedded verbatim as a
/// `data-points` attribute so the plotted values remain machine-checkable
/// against their source CSV.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: Option<String>,
    pub color: String,
    pub width: f64,
    pub opacity: f64,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
    pub data_attr: Option<String>,
}

fn nice_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1000.0 {
        format!("{:.0}", v)
    } else if a >= 10.0 {
        format!("{:.1}", v)
    } else {
        format!("{:.3}", v)
    }
}

/// Renders a line chart. The y range defaults to the data's span padded 5%.
pub fn line_chart(
    title: &str,
    subtitle: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_range: Option<(f64, f64)>,
) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (x_min, x_max) = span(&xs, (0.0, 1.0));
    let (mut y_min, mut y_max) = y_range.unwrap_or_else(|| span(&ys, (0.0, 1.0)));
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    } else if y_range.is_none() {
        let pad = 0.05 * (y_max - y_min);
        y_min -= pad;
        y_max += pad;
    }

    let to_x = |v: f64| {
        if x_max == x_min {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + (v - x_min) / (x_max - x_min) * plot_w
        }
    };
    let to_y = |v: f64| MARGIN_TOP + plot_h - (v - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="Helvetica, Arial, sans-serif">"#
    );
    let _ = write!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{x}" y="26" font-size="17" font-weight="bold" fill="{TEXT_COLOR}" text-anchor="middle">{t}</text>"#,
        x = WIDTH / 2.0,
        t = escape(title)
    );
    let _ = write!(
        svg,
        r##"<text x="{x}" y="46" font-size="11" fill="#666666" text-anchor="middle">{t}</text>"##,
        x = WIDTH / 2.0,
        t = escape(subtitle)
    );

    // Gridlines and ticks.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let yv = y_min + frac * (y_max - y_min);
        let y = to_y(yv);
        let _ = write!(
            svg,
            r#"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{x2}" y2="{y:.2}" stroke="{GRID_COLOR}" stroke-width="1"/>"#,
            x2 = MARGIN_LEFT + plot_w
        );
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{ty:.2}" font-size="11" fill="{TEXT_COLOR}" text-anchor="end">{v}</text>"#,
            x = MARGIN_LEFT - 8.0,
            ty = y + 4.0,
            v = nice_tick(yv)
        );

        let xv = x_min + frac * (x_max - x_min);
        let x = to_x(xv);
        let _ = write!(
            svg,
            r#"<text x="{x:.2}" y="{y}" font-size="11" fill="{TEXT_COLOR}" text-anchor="middle">{v}</text>"#,
            y = MARGIN_TOP + plot_h + 20.0,
            v = nice_tick(xv)
        );
    }
    // Axes.
    let _ = write!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{y1}" x2="{x2}" y2="{y1}" stroke="{AXIS_COLOR}" stroke-width="1.5"/>"#,
        y1 = MARGIN_TOP + plot_h,
        x2 = MARGIN_LEFT + plot_w
    );
    let _ = write!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{y2}" stroke="{AXIS_COLOR}" stroke-width="1.5"/>"#,
        y2 = MARGIN_TOP + plot_h
    );
    let _ = write!(
        svg,
        r#"<text x="{x}" y="{y}" font-size="12" fill="{TEXT_COLOR}" text-anchor="middle">{t}</text>"#,
        x = MARGIN_LEFT + plot_w / 2.0,
        y = HEIGHT - 14.0,
        t = escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{y}" font-size="12" fill="{TEXT_COLOR}" text-anchor="middle" transform="rotate(-90 18 {y})">{t}</text>"#,
        y = MARGIN_TOP + plot_h / 2.0,
        t = escape(y_label)
    );

    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let data = s
            .data_attr
            .as_ref()
            .map(|d| format!(r#" data-points="{}""#, escape(d)))
            .unwrap_or_default();
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{c}" stroke-width="{w}" stroke-opacity="{o}"{dash}{data} points="{p}"/>"#,
            c = s.color,
            w = s.width,
            o = s.opacity,
            p = pts.join(" ")
        );
    }

    // Legend (labeled series only).
    let mut ly = MARGIN_TOP + 6.0;
    for s in series.iter().filter(|s| s.label.is_some()) {
        let lx = MARGIN_LEFT + plot_w + 14.0;
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = write!(
            svg,
            r#"<line x1="{lx}" y1="{ly:.2}" x2="{x2}" y2="{ly:.2}" stroke="{c}" stroke-width="2.5"{dash}/>"#,
            x2 = lx + 26.0,
            c = s.color
        );
        let _ = write!(
            svg,
            r#"<text x="{tx}" y="{ty:.2}" font-size="11" fill="{TEXT_COLOR}">{t}</text>"#,
            tx = lx + 32.0,
            ty = ly + 4.0,
            t = escape(s.label.as_deref().unwrap_or(""))
        );
        ly += 18.0;
    }

    svg.push_str("</svg>");
    svg
}

fn span(values: &[f64], fallback: (f64, f64)) -> (f64, f64) {
    if values.is_empty() {
        return fallback;
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// One histogram panel in a small-multiples grid.
#[derive(Debug, Clone)]
pub struct BarPanel {
    pub title: String,
    pub counts: Vec<u64>,
}

/// Renders histogram panels in a grid, `cols` panels per row. Bars are
/// scaled per panel; the panel's peak count is printed in its corner.
pub fn bar_grid(title: &str, subtitle: &str, panels: &[BarPanel], cols: usize) -> String {
    let cols = cols.max(1);
    let panel_w = 230.0;
    let panel_h = 150.0;
    let gap = 18.0;
    let top = 64.0;
    let rows = panels.len().div_ceil(cols);
    let width = (panel_w + gap) * cols as f64 + gap;
    let height = top + (panel_h + gap + 22.0) * rows as f64 + gap;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}" font-family="Helvetica, Arial, sans-serif">"#
    );
    let _ = write!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{x}" y="26" font-size="17" font-weight="bold" fill="{TEXT_COLOR}" text-anchor="middle">{t}</text>"#,
        x = width / 2.0,
        t = escape(title)
    );
    let _ = write!(
        svg,
        r##"<text x="{x}" y="46" font-size="11" fill="#666666" text-anchor="middle">{t}</text>"##,
        x = width / 2.0,
        t = escape(subtitle)
    );

    for (i, panel) in panels.iter().enumerate() {
        let row = i / cols;
        let col = i % cols;
        let x0 = gap + col as f64 * (panel_w + gap);
        let y0 = top + row as f64 * (panel_h + gap + 22.0);
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{y}" font-size="12" fill="{TEXT_COLOR}" text-anchor="middle">{t}</text>"#,
            x = x0 + panel_w / 2.0,
            y = y0 + 12.0,
            t = escape(&panel.title)
        );
        let inner_y = y0 + 20.0;
        let inner_h = panel_h - 26.0;
        let _ = write!(
            svg,
            r#"<rect x="{x0}" y="{inner_y}" width="{panel_w}" height="{inner_h}" fill="none" stroke="{GRID_COLOR}"/>"#
        );
        let peak = panel.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let k = panel.counts.len().max(1);
        let bar_w = panel_w / k as f64;
        for (a, &c) in panel.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let h = (c as f64 / peak) * (inner_h - 4.0);
            let _ = write!(
                svg,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="#4878b0" data-count="{c}"/>"##,
                x = x0 + a as f64 * bar_w + 0.5,
                y = inner_y + inner_h - h,
                w = (bar_w - 1.0).max(0.5),
            );
        }
        let _ = write!(
            svg,
            r##"<text x="{x}" y="{y}" font-size="10" fill="#666666" text-anchor="end">peak {peak}</text>"##,
            x = x0 + panel_w - 4.0,
            y = inner_y + 12.0,
        );
    }
    svg.push_str("</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_embeds_data_attribute() {
        let series = [Series {
            label: Some("pg".into()),
            color: "#1f77b4".into(),
            width: 2.0,
            opacity: 1.0,
            dashed: false,
            points: vec![(0.0, 0.0), (10.0, 0.5)],
            data_attr: Some("0:0;10:0.5".into()),
        }];
        let svg = line_chart("Value", "test", "steps", "value", &series, None);
        assert!(svg.contains(r#"data-points="0:0;10:0.5""#));
        assert!(svg.contains("<polyline"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>"));
    }

    #[test]
    fn bar_grid_renders_one_rect_per_nonzero_bin() {
        let panels = [BarPanel {
            title: "pg @ 0".into(),
            counts: vec![5, 0, 3],
        }];
        let svg = bar_grid("Histograms", "", &panels, 3);
        assert_eq!(svg.matches(r##"data-count="##).count(), 2);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = line_chart("a<b", "c&d", "x", "y", &[], None);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("c&amp;d"));
    }
}
