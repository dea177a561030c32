use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use super::RasterError;

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Real(f64),
    Text(String),
    Empty,
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            // `Display` for f64 is the shortest string that parses back to the same value
            Field::Real(v) if v.is_finite() => v.to_string(),
            Field::Real(_) | Field::Empty => String::new(),
            Field::Text(s) => s.clone(),
        }
    }
}

impl From<i64> for Field {
    fn from(v: i64) -> Self {
        Field::Int(v)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v as i64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Real(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

impl<T: Into<Field>> From<Option<T>> for Field {
    fn from(v: Option<T>) -> Self {
        v.map(Into::into).unwrap_or(Field::Empty)
    }
}

/// A row that can be looked up by column name.
pub trait Record {
    fn field(&self, column: &str) -> Option<Field>;
}

impl Record for BTreeMap<String, Field> {
    fn field(&self, column: &str) -> Option<Field> {
        self.get(column).cloned()
    }
}

impl Record for HashMap<String, Field> {
    fn field(&self, column: &str) -> Option<Field> {
        self.get(column).cloned()
    }
}

/// Write `rows` as CSV with the given column order.
///
/// Output is UTF-8 with LF line endings and a header row; fields are quoted
/// only when they contain a delimiter, quote or newline.
pub fn write_table_csv<W: Write, R: Record>(
    w: W,
    rows: &[R],
    schema: &[&str],
) -> Result<(), RasterError> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(schema)?;
    let mut buf: Vec<String> = Vec::with_capacity(schema.len());
    for (i, row) in rows.iter().enumerate() {
        buf.clear();
        for col in schema {
            let f = row.field(col).ok_or_else(|| RasterError::MissingColumn {
                row: i,
                column: col.to_string(),
            })?;
            buf.push(f.render());
        }
        out.write_record(&buf)?;
    }
    out.flush()?;
    Ok(())
}
