//! Self-contained SVG figures: (z, t) heatmaps and families of line plots.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 40.0;
const PLOT_W: f64 = 540.0;
const PLOT_H: f64 = 360.0;
const MAX_COLUMNS: usize = 200;
const MAX_ROWS: usize = 240;

pub const COLORMAP_STEPS: usize = 64;

const VIRIDIS_ANCHORS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Discrete viridis-like colour for step `k` of [`COLORMAP_STEPS`].
pub fn color(k: usize) -> String {
    let s = k.min(COLORMAP_STEPS - 1) as f64 / (COLORMAP_STEPS - 1) as f64;
    let pos = s * (VIRIDIS_ANCHORS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS_ANCHORS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (VIRIDIS_ANCHORS[i], VIRIDIS_ANCHORS[i + 1]);
    let mix = |x: f64, y: f64| (x + f * (y - x)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn color_index(v: f64, lo: f64, hi: f64) -> usize {
    if hi <= lo {
        return 0;
    }
    let s = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    ((s * COLORMAP_STEPS as f64) as usize).min(COLORMAP_STEPS - 1)
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-2..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) {
    let bottom = TOP + PLOT_H;
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let px = LEFT + f * PLOT_W;
        let py = bottom - f * PLOT_H;
        let _ = writeln!(
            out,
            r#"<line x1="{px}" y1="{bottom}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 18.0,
            label(x.0 + f * (x.1 - x.0))
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py}" x2="{LEFT}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            label(y.0 + f * (y.1 - y.0))
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        bottom + 38.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0,
        escape(y_label)
    );
}

fn stride(n: usize, max: usize) -> usize {
    n.div_ceil(max).max(1)
}

/// Heatmap of `values[time][position]`: position along x, time upward.
pub fn heatmap(title: &str, xs: &[f64], times: &[f64], values: &[Vec<f64>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = range(values.iter().flatten().copied());
    let cols: Vec<usize> = (0..xs.len()).step_by(stride(xs.len(), MAX_COLUMNS)).collect();
    let rows: Vec<usize> = (0..times.len()).step_by(stride(times.len(), MAX_ROWS)).collect();
    let cw = PLOT_W / cols.len() as f64;
    let rh = PLOT_H / rows.len() as f64;

    let _ = writeln!(out, r#"<g shape-rendering="crispEdges">"#);
    for (r, &k) in rows.iter().enumerate() {
        let y = TOP + PLOT_H - (r as f64 + 1.0) * rh;
        let mut c = 0;
        while c < cols.len() {
            let idx = color_index(values[k][cols[c]], lo, hi);
            let mut end = c + 1;
            while end < cols.len() && color_index(values[k][cols[end]], lo, hi) == idx {
                end += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + c as f64 * cw,
                y,
                (end - c) as f64 * cw + 0.05,
                rh + 0.05,
                color(idx)
            );
            c = end;
        }
    }
    let _ = writeln!(out, "</g>");

    let x = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let t = (
        times.first().copied().unwrap_or(0.0),
        times.last().copied().unwrap_or(1.0),
    );
    axes(&mut out, x, t, "z [m]", "t [s]");

    let bar_x = LEFT + PLOT_W + 30.0;
    let step_h = PLOT_H / COLORMAP_STEPS as f64;
    for k in 0..COLORMAP_STEPS {
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x}" y="{:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            TOP + PLOT_H - (k as f64 + 1.0) * step_h,
            step_h + 0.05,
            color(k)
        );
    }
    for (f, v) in [(0.0, lo), (0.5, 0.5 * (lo + hi)), (1.0, hi)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}">{}</text>"#,
            bar_x + 24.0,
            TOP + PLOT_H - f * PLOT_H + 4.0,
            label(v)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One curve of a line plot.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = range(pts().map(|p| p.0));
    let (mut y0, mut y1) = range(pts().map(|p| p.1));
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| {
        if x1 > x0 {
            LEFT + (x - x0) / (x1 - x0) * PLOT_W
        } else {
            LEFT
        }
    };
    let sy = |y: f64| TOP + PLOT_H - (y - y0) / (y1 - y0) * PLOT_H;

    for (j, s) in series.iter().enumerate() {
        let k = if series.len() > 1 {
            j * (COLORMAP_STEPS * 7 / 8) / (series.len() - 1)
        } else {
            0
        };
        let c = color(k);
        let mut d = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{c}" stroke-width="2"/>"#);
        let ly = TOP + 16.0 + 18.0 * j as f64;
        let lx = LEFT + PLOT_W + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="3"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    axes(&mut out, (x0, x1), (y0, y1), x_label, y_label);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(color(0), "#440154");
        assert_eq!(color(COLORMAP_STEPS - 1), "#fde725");
        assert_eq!(color_index(5.0, 5.0, 5.0), 0);
        assert_eq!(color_index(10.0, 0.0, 10.0), COLORMAP_STEPS - 1);
    }

    #[test]
    fn heatmap_is_well_formed() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ts = vec![0.0, 1.0, 2.0];
        let values: Vec<Vec<f64>> = ts.iter().map(|t| xs.iter().map(|x| x + t).collect()).collect();
        let s = heatmap("demo <a&b>", &xs, &ts, &values);
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("demo &lt;a&amp;b&gt;"));
        assert!(s.contains("z [m]") && s.contains("t [s]"));
        assert_eq!(s, heatmap("demo <a&b>", &xs, &ts, &values));
    }

    #[test]
    fn constant_heatmap_merges_runs() {
        let xs: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let values = vec![vec![1.0; 400]; 3];
        let s = heatmap("flat", &xs, &[0.0, 1.0, 2.0], &values);
        let data_rects = s.matches("<rect").count() - 2 - COLORMAP_STEPS;
        assert_eq!(data_rects, 3);
    }

    #[test]
    fn line_plot_has_one_path_per_series() {
        let series = vec![
            Series {
                label: "a".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            },
            Series {
                label: "b".into(),
                points: vec![(0.0, 0.5), (1.0, 0.0)],
            },
        ];
        let s = line_plot("t", "x", "y", &series);
        assert_eq!(s.matches("<path").count(), 2);
    }
}
