//! Output formatting: fixed-precision CSV tables and SVG line plots.

use std::fs;
use std::path::Path;

use crate::CliError;

/// Formats like C's `%.9g`: nine significant digits, trailing zeros dropped.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A CSV table built in memory and written in one go.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Table { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn save(self, path: &Path) -> Result<(), CliError> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(path, bytes).map_err(|e| CliError::output(path, e))
    }
}

/// Reads the named columns (or the last two when unnamed) of a CSV file as
/// `(x, y)` pairs.
pub fn read_xy(path: &Path, x_col: Option<&str>, y_col: Option<&str>) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let n = headers.len();
    if n < 2 {
        return Err(CliError::Input(format!("{}: need at least two columns", path.display())));
    }
    let x = column_index(&headers, x_col, n - 2, path)?;
    let y = column_index(&headers, y_col, n - 1, path)?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if is_summary(&record) {
            continue;
        }
        points.push((parse_field(&record, x, path)?, parse_field(&record, y, path)?));
    }
    if points.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(points)
}

/// One numeric column of a CSV file, skipping the summary row.
pub fn read_series(path: &Path, col: Option<&str>) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(CliError::Input(format!("{}: empty header", path.display())));
    }
    let idx = column_index(&headers, col, headers.len() - 1, path)?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if !is_summary(&record) {
            values.push(parse_field(&record, idx, path)?);
        }
    }
    Ok(values)
}

/// Per-pair tables end with a row whose first field is `mean`.
fn is_summary(record: &csv::StringRecord) -> bool {
    record.get(0) == Some("mean")
}

fn column_index(
    headers: &csv::StringRecord,
    name: Option<&str>,
    default: usize,
    path: &Path,
) -> Result<usize, CliError> {
    match name {
        None => Ok(default),
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Input(format!("{}: no column named '{name}'", path.display()))
        }),
    }
}

fn parse_field(record: &csv::StringRecord, idx: usize, path: &Path) -> Result<f64, CliError> {
    let field = record.get(idx).unwrap_or("");
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Input(format!(
            "{}: line {}: '{field}' is not a number",
            path.display(),
            record.position().map_or(0, |p| p.line())
        ))
    })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// A standalone SVG with axes, min/max tick labels and one polyline.
pub fn render_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (x0, x1) = bounds(finite.iter().map(|p| p.0));
    let (y0, y1) = bounds(finite.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let coords: Vec<String> = finite
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{left}\" y2=\"{top}\" stroke=\"black\"/>\n"
    ));
    let text = |x: f64, y: f64, anchor: &str, s: &str| {
        format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"{anchor}\">{s}</text>\n"
        )
    };
    svg.push_str(&text(left, bottom + 16.0, "middle", &fmt_num(x0)));
    svg.push_str(&text(right, bottom + 16.0, "middle", &fmt_num(x1)));
    svg.push_str(&text(left - 6.0, bottom + 4.0, "end", &fmt_num(y0)));
    svg.push_str(&text(left - 6.0, top + 4.0, "end", &fmt_num(y1)));
    svg.push_str(&text(WIDTH / 2.0, HEIGHT - 12.0, "middle", &escape(x_label)));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    ));
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
        coords.join(" ")
    ));
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
