use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// A numeric table written as CSV with a mandatory header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// `first` followed by `prefix_0, …, prefix_{n−1}`.
    pub fn indexed(first: &str, prefix: &str, n: usize) -> Self {
        let mut columns = vec![first.to_string()];
        columns.extend((0..n).map(|i| format!("{prefix}_{i}")));
        Table::new(columns)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
        let columns = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        let mut table = Table::new(columns);
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let row = record
                .iter()
                .map(|cell| cell.parse::<f64>().map_err(|e| CliError::Config(format!("{}: `{cell}`: {e}", path.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            table.push(row);
        }
        Ok(table)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    tmp.as_file().sync_all().map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_bit_exactly() {
        let mut t = Table::new(vec!["t".into(), "value".into()]);
        t.push(vec![0.1, std::f64::consts::PI]);
        t.push(vec![1.0 / 3.0, -1e-300]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_atomic(&path, t.to_csv().as_bytes()).unwrap();
        assert_eq!(Table::read(&path).unwrap(), t);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
