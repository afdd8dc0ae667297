//! Plot-ready CSV files and small SVG charts derived from a run's reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::pipeline::fmt;
use crate::CliError;

/// Errors above this are flagged in the test-error scatter.
pub const ERROR_THRESHOLD: f64 = 1e-2;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Option<Self>, CliError> {
        if !path.exists() {
            return Ok(None);
        }
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows =
            r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
        Ok(Some(Self { header, rows }))
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| CliError::Io(format!("missing column `{name}`")))
    }
}

fn num(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Writes `plots/*.csv` and `plots/*.svg` under `dir`. Returns the reports that were missing.
pub fn emit_plots(dir: &Path) -> Result<Vec<String>, CliError> {
    let rep = dir.join("reports");
    let out = dir.join("plots");
    fs::create_dir_all(&out)?;
    let mut skipped = Vec::new();

    match Table::read(&rep.join("error_vs_n.csv"))? {
        Some(t) => error_vs_n(&t, &out)?,
        None => skipped.push("error_vs_n.csv".to_string()),
    }
    match Table::read(&rep.join("errors_instant.csv"))? {
        Some(t) => test_errors(&t, &out)?,
        None => skipped.push("errors_instant.csv".to_string()),
    }
    match Table::read(&rep.join("timing_summary.csv"))? {
        Some(t) => timing_vs_n(&t, &out)?,
        None => skipped.push("timing_summary.csv".to_string()),
    }
    for s in &skipped {
        warn!("emit-plots: reports/{s} not found, skipped");
    }
    Ok(skipped)
}

type Series = Vec<(String, Vec<(f64, f64)>)>;

fn push_point(series: &mut Series, name: &str, p: (f64, f64)) {
    match series.iter_mut().find(|(n, _)| n == name) {
        Some((_, pts)) => pts.push(p),
        None => series.push((name.to_string(), vec![p])),
    }
}

fn error_vs_n(t: &Table, out: &Path) -> Result<(), CliError> {
    let (m, n, e) = (t.col("model")?, t.col("n")?, t.col("error_total")?);
    let mut w = csv::Writer::from_path(out.join("error_vs_n.csv"))?;
    w.write_record(["model", "n", "error_total"])?;
    let mut series = Series::new();
    for row in &t.rows {
        w.write_record([&row[m], &row[n], &row[e]])?;
        if let (Some(x), Some(y)) = (num(&row[n]), num(&row[e])) {
            push_point(&mut series, &row[m], (x, y));
        }
    }
    w.flush()?;
    fs::write(
        out.join("error_vs_n.svg"),
        chart("Test error vs reduced dimension", "n", "error_total", &series, &[], true),
    )?;
    Ok(())
}

fn test_errors(t: &Table, out: &Path) -> Result<(), CliError> {
    let (m, n, tc, e) = (t.col("model")?, t.col("n")?, t.col("t")?, t.col("error")?);
    let mu0 = t.col("mu0")?;
    let mu_cols: Vec<usize> =
        t.header.iter().enumerate().filter(|(_, h)| h.starts_with("mu")).map(|(i, _)| i).collect();
    let mut w = csv::Writer::from_path(out.join("test_errors.csv"))?;
    let mut header = vec!["model", "n"];
    header.extend(mu_cols.iter().map(|&i| t.header[i].as_str()));
    header.extend(["t", "error", "above_1e-2"]);
    w.write_record(&header)?;
    let mut groups: Vec<(String, Vec<(f64, f64, bool)>)> = Vec::new();
    for row in &t.rows {
        let above = num(&row[e]).map_or(String::new(), |v| (v > ERROR_THRESHOLD).to_string());
        let mut rec: Vec<&str> = vec![&row[m], &row[n]];
        rec.extend(mu_cols.iter().map(|&i| row[i].as_str()));
        rec.extend([row[tc].as_str(), row[e].as_str(), above.as_str()]);
        w.write_record(&rec)?;
        if let (Some(x), Some(y), Some(v)) = (num(&row[mu0]), num(&row[tc]), num(&row[e])) {
            let key = format!("{}_n{}", row[m], row[n]);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push((x, y, v > ERROR_THRESHOLD)),
                None => groups.push((key, vec![(x, y, v > ERROR_THRESHOLD)])),
            }
        }
    }
    w.flush()?;
    for (key, pts) in &groups {
        let title = format!("{key}: test instants with error above {ERROR_THRESHOLD:e} in red");
        fs::write(out.join(format!("test_errors_{key}.svg")), scatter(&title, "mu0", "t", pts))?;
    }
    Ok(())
}

fn timing_vs_n(t: &Table, out: &Path) -> Result<(), CliError> {
    let (k, n, mean, std) = (t.col("kind")?, t.col("n")?, t.col("mean_seconds")?, t.col("std_seconds")?);
    let mut w = csv::Writer::from_path(out.join("timing_vs_n.csv"))?;
    w.write_record(["kind", "n", "mean_seconds", "std_seconds"])?;
    let mut series = Series::new();
    let mut levels = Vec::new();
    for row in &t.rows {
        w.write_record([&row[k], &row[n], &row[mean], &row[std]])?;
        match (row[k].as_str(), num(&row[n]), num(&row[mean])) {
            ("fom", _, Some(y)) => levels.push(("fom".to_string(), y)),
            (kind, Some(x), Some(y)) => push_point(&mut series, kind, (x, y)),
            _ => {}
        }
    }
    w.flush()?;
    fs::write(out.join("timing_vs_n.svg"), chart("Online time per query", "n", "seconds", &series, &levels, true))?;
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const L: f64 = 80.0;
const R: f64 = 150.0;
const T: f64 = 40.0;
const B: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let vals: Vec<f64> =
            values.filter(|v| v.is_finite() && (!log || *v > 0.0)).map(|v| if log { v.log10() } else { v }).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else if log {
            (lo.floor(), hi.ceil())
        } else {
            (lo, hi)
        };
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let step = ((b - a) / 8).max(1);
            (a..=b).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).map(|v| (v, format!("{v:.3}"))).collect()
        }
    }
}

fn px(ax: &Axis, v: f64) -> f64 {
    L + ax.frac(v) * (W - L - R)
}

fn py(ay: &Axis, v: f64) -> f64 {
    H - B - ay.frac(v) * (H - T - B)
}

fn frame(svg: &mut String, title: &str, xlabel: &str, ylabel: &str, ax: &Axis, ay: &Axis) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ =
        writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - L - R,
        H - T - B
    );
    for (v, label) in ax.ticks() {
        let x = px(ax, v);
        let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/>"#, H - B, H - B + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{label}</text>"#, H - B + 18.0);
    }
    for (v, label) in ay.ticks() {
        let y = py(ay, v);
        let _ = writeln!(svg, r##"<line x1="{L}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#dddddd"/>"##, W - R);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, L - 6.0, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        L + (W - L - R) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        T + (H - T - B) / 2.0,
        escape(ylabel)
    );
}

fn legend(svg: &mut String, i: usize, name: &str, color: &str, dashed: bool) {
    let y = T + 10.0 + 18.0 * i as f64;
    let x = W - R + 12.0;
    let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
    let _ = writeln!(
        svg,
        r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#,
        x + 20.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(name));
}

/// Line chart; each `levels` entry is drawn as a dashed horizontal line.
fn chart(title: &str, xlabel: &str, ylabel: &str, series: &Series, levels: &[(String, f64)], log_y: bool) -> String {
    let ax = Axis::fit(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)), false);
    let ay = Axis::fit(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).chain(levels.iter().map(|l| l.1)), log_y);
    let mut svg = String::new();
    frame(&mut svg, title, xlabel, ylabel, &ax, &ay);
    let ok = |v: f64| v.is_finite() && (!log_y || v > 0.0);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = pts.iter().copied().filter(|p| ok(p.1)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(&ax, x), py(&ay, y))).collect();
        let _ =
            writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#, px(&ax, x), py(&ay, y));
        }
        legend(&mut svg, i, name, color, false);
    }
    for (j, (name, y)) in levels.iter().enumerate().filter(|(_, l)| ok(l.1)) {
        let color = PALETTE[(series.len() + j) % PALETTE.len()];
        let yy = py(&ay, *y);
        let _ = writeln!(
            svg,
            r#"<line x1="{L}" y1="{yy:.1}" x2="{}" y2="{yy:.1}" stroke="{color}" stroke-width="2" stroke-dasharray="5,3"/>"#,
            W - R
        );
        legend(&mut svg, series.len() + j, name, color, true);
    }
    svg.push_str("</svg>\n");
    svg
}

fn scatter(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64, bool)]) -> String {
    let ax = Axis::fit(pts.iter().map(|p| p.0), false);
    let ay = Axis::fit(pts.iter().map(|p| p.1), false);
    let mut svg = String::new();
    frame(&mut svg, title, xlabel, ylabel, &ax, &ay);
    for &(x, y, above) in pts {
        let color = if above { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="1.6" fill="{color}"/>"#, px(&ax, x), py(&ay, y));
    }
    legend(&mut svg, 0, &format!("> {}", fmt(ERROR_THRESHOLD)), "#d62728", false);
    legend(&mut svg, 1, &format!("<= {}", fmt(ERROR_THRESHOLD)), "#1f77b4", false);
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
