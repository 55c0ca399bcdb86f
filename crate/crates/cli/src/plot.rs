//! SVG line chart of proxy FID against iteration.

use std::fmt::Write;
use std::path::Path;

use fisgan_core::data::read_metrics;

use crate::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One series per (variant, mode, seed) and file, in file then first-seen order.
pub fn load_series(paths: &[impl AsRef<Path>]) -> Result<Vec<Series>, CliError> {
    let mut out: Vec<Series> = Vec::new();
    for (k, path) in paths.iter().enumerate() {
        let path = path.as_ref();
        let table = read_metrics(path).map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", path.display())))?;
        let first = out.len();
        for (variant, row) in table.rows {
            let mut label = match &variant {
                Some(v) => format!("{v} {} seed {}", row.mode, row.seed),
                None => format!("{} seed {}", row.mode, row.seed),
            };
            if paths.len() > 1 {
                label = format!("{}: {label}", k + 1);
            }
            let point = (row.iteration as f64, row.proxy_fid);
            match out[first..].iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(point),
                None => out.push(Series { label, points: vec![point] }),
            }
        }
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>, floor_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if floor_zero {
        lo = lo.min(0.0);
        hi *= 1.05;
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    (lo, hi)
}

pub fn render_svg(series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = range(all().map(|p| p.0), false);
    let (y0, y1) = range(all().map(|p| p.1), true);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (xb, yb) = (TOP + ph, LEFT + pw);
    let _ = writeln!(s, r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{xb}" x2="{yb}" y2="{xb}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{xb}"/></g>"#);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(xv), xb + 16.0, fmt_tick(xv));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(yv) + 4.0, fmt_tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">proxy FID</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);

    for (k, series) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 14.0 * k as f64 + 6.0;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 16.0,
            lx + 20.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

pub fn plot(paths: &[impl AsRef<Path>], output: &Path) -> Result<usize, CliError> {
    let series = load_series(paths)?;
    std::fs::write(output, render_svg(&series))
        .map_err(|e| CliError::runtime(anyhow::anyhow!(e).context(format!("cannot write {}", output.display()))))?;
    Ok(series.len())
}
