use std::fmt::Write as _;

/// Marker separating the header from the version stamp.
pub const STAMP_MARKER: &str = "  # dicke-dpt ";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    /// Written as `nan`.
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Missing, |v| Cell::Int(v as i64))
    }
}

/// Seventeen significant digits, so that every double round-trips.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// An in-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Header with version stamp, then one line per row, all LF-terminated.
    pub fn render(&self, version: &str) -> String {
        let mut out = self.columns.join(",");
        out.push_str(STAMP_MARKER);
        out.push_str(version);
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Float(v) => out.push_str(&format_float(*v)),
                    Cell::Int(v) => write!(out, "{v}").unwrap(),
                    Cell::Missing => out.push_str("nan"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Splits a rendered table into its column names and body, dropping the stamp.
pub fn strip_stamp(text: &str) -> (&str, &str) {
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    let columns = header.split_once(STAMP_MARKER).map_or(header, |(c, _)| c);
    (columns, body)
}
