//! CSV tables, run manifests, minimal SVG plots and atomic file writes.

use crate::error::{Error, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// `x` with 12 significant digits, `%g` style (trailing zeros dropped).
pub fn fmt_sig(x: f64) -> String {
    fmt_digits(x, 12)
}

fn fmt_digits(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Numeric table with a header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name).ok_or_else(|| {
            Error::Invalid(format!("no column `{name}` (have {})", self.columns.join(", ")))
        })?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV bytes: header, comma separated, 12 significant digits, LF endings.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        if self.rows.is_empty() {
            return Err(Error::Invalid("no rows".into()));
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|x| fmt_sig(*x)))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Table> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut table = Table::new(columns);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("row {}: `{f}` is not a number", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            table.push(row);
        }
        if table.is_empty() {
            return Err(Error::Invalid("no rows".into()));
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Table> {
        let bytes = std::fs::read(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        Table::from_csv(&bytes)
    }

    /// Atomically write the CSV; returns its sha256.
    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_csv()?;
        atomic_write(path, &bytes)?;
        Ok(sha256_hex(&bytes))
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_manifest(out: &Path, manifest: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    atomic_write(&manifest_path(out), text.as_bytes())
}

pub fn read_manifest(out: &Path) -> Result<Option<Value>> {
    let path = manifest_path(out);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub x_label: String,
    pub y_label: String,
    pub title: Option<String>,
    /// Column whose value splits rows into separate polylines.
    pub group: Option<String>,
}

impl PlotSpec {
    pub fn new(x: &str, y: &str) -> Self {
        PlotSpec {
            x: x.into(),
            y: y.into(),
            x_label: x.into(),
            y_label: y.into(),
            title: None,
            group: None,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLOURS: [&str; 6] = ["#1f4e9c", "#b8322a", "#2e7d32", "#8e44ad", "#d68910", "#555555"];

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn padded_range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Polyline plot of two columns with axes and tick labels. Groups of a
/// single point are drawn as markers.
pub fn render_svg(table: &Table, spec: &PlotSpec) -> Result<String> {
    if table.is_empty() {
        return Err(Error::Invalid("no rows".into()));
    }
    let xs = table.column(&spec.x)?;
    let ys = table.column(&spec.y)?;
    let groups = match &spec.group {
        Some(g) => table.column(g)?,
        None => vec![0.0; xs.len()],
    };
    let finite: Vec<usize> = (0..xs.len()).filter(|&i| xs[i].is_finite() && ys[i].is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Invalid("no finite points to plot".into()));
    }
    let fx: Vec<f64> = finite.iter().map(|&i| xs[i]).collect();
    let fy: Vec<f64> = finite.iter().map(|&i| ys[i]).collect();
    let (x0, x1) = padded_range(&fx);
    let (y0, y1) = padded_range(&fy);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(x0, x1, 6) {
        let px = sx(t);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 19.0,
            fmt_digits(t, 4)
        );
    }
    for t in nice_ticks(y0, y1, 6) {
        let py = sy(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#,
            LEFT - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py + 4.0,
            fmt_digits(t, 4)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );
    if let Some(title) = &spec.title {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
    }
    // contiguous runs of equal group value become one polyline each
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &i in &finite {
        match runs.last_mut() {
            Some(run) if groups[run[0]] == groups[i] => run.push(i),
            _ => runs.push(vec![i]),
        }
    }
    for (n, run) in runs.iter().enumerate() {
        let colour = COLOURS[n % COLOURS.len()];
        if run.len() == 1 {
            let i = run[0];
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                sx(xs[i]),
                sy(ys[i])
            );
            continue;
        }
        let pts: Vec<String> = run.iter().map(|&i| format!("{:.2},{:.2}", sx(xs[i]), sy(ys[i]))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.95), "0.95");
        assert_eq!(fmt_sig(-0.55), "-0.55");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(123456.789), "123456.789");
        assert_eq!(fmt_sig(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig(2.0e15), "2e15");
        assert_eq!(fmt_sig(0.99999999999999), "1");
        assert_eq!(fmt_sig(-1e-300), "-1e-300");
        assert_eq!(fmt_sig(std::f64::consts::PI * 2.0), "6.28318530718");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![1.0, -2.5]);
        t.push(vec![1e-7, 3.0]);
        let bytes = t.to_csv().unwrap();
        assert_eq!(String::from_utf8(bytes.clone()).unwrap(), "a,b\n1,-2.5\n1e-7,3\n");
        assert_eq!(Table::from_csv(&bytes).unwrap(), t);
    }

    #[test]
    fn empty_table_is_an_error() {
        let t = Table::new(["a"]);
        assert!(t.to_csv().unwrap_err().to_string().contains("no rows"));
        assert!(render_svg(&t, &PlotSpec::new("a", "a")).unwrap_err().to_string().contains("no rows"));
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.csv");
        let mut t = Table::new(["t"]);
        t.push(vec![0.5]);
        t.write(&out).unwrap();
        write_manifest(&out, &serde_json::json!({"k": 1})).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "t\n0.5\n");
        assert_eq!(read_manifest(&out).unwrap().unwrap()["k"], 1);
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn single_point_plot_has_marker() {
        let mut t = Table::new(["x", "y"]);
        t.push(vec![1.0, 2.0]);
        let svg = render_svg(&t, &PlotSpec::new("x", "y")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn missing_column() {
        let mut t = Table::new(["x"]);
        t.push(vec![1.0]);
        assert!(render_svg(&t, &PlotSpec::new("x", "q1")).is_err());
    }
}
