use std::fmt::Write;
use std::path::Path;

use cointoss::io::parse_csv;

use crate::{CliError, PlotArgs};

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

pub fn run(args: &PlotArgs, out: &Path) -> Result<(), CliError> {
    let mut series = Vec::new();
    let mut x_label = String::new();
    for path in &args.inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("io", format!("cannot read {}: {e}", path.display())))?;
        let table = parse_csv(&text).ok_or_else(|| CliError::validation("csv", format!("{} is empty", path.display())))?;
        let x_name = args.x.clone().unwrap_or_else(|| table.header[0].clone());
        let xs = table
            .column(&x_name)
            .ok_or_else(|| CliError::validation("csv", format!("{} has no column `{x_name}`", path.display())))?;
        x_label = x_name.clone();
        let ys: Vec<String> = if args.y.is_empty() {
            table.header.iter().filter(|h| **h != x_name && !h.ends_with("flag")).cloned().collect()
        } else {
            args.y.iter().filter(|y| table.header.contains(y)).cloned().collect()
        };
        for y in ys {
            let col = table.column(&y).expect("header checked");
            let points: Vec<(f64, f64)> = xs
                .iter()
                .zip(&col)
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            if !points.is_empty() {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                series.push(Series { label: format!("{stem}:{y}"), points });
            }
        }
    }
    if series.is_empty() {
        return Err(CliError::validation("csv", "no plottable columns".into()));
    }
    let svg = render(&series, &x_label, args.title.as_deref().unwrap_or(""));
    std::fs::create_dir_all(out).map_err(|e| CliError::validation("io", e.to_string()))?;
    std::fs::write(out.join(&args.name), svg).map_err(|e| CliError::validation("io", e.to_string()))
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
        }
    }
    if b.1 - b.0 <= 0.0 {
        b = (b.0 - 0.5, b.1 + 0.5, b.2, b.3);
    }
    if b.3 - b.2 <= 0.0 {
        b = (b.0, b.1, b.2 - 0.5, b.3 + 0.5);
    }
    b
}

fn render(series: &[Series], x_label: &str, title: &str) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        "<path d=\"M{m} {t} L{m} {b} L{r} {b}\" stroke=\"black\" fill=\"none\"/>",
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#, sx(fx), H - MARGIN + 16.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#, MARGIN - 6.0, sy(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#, W - MARGIN - 180.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
