use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Symbolic,
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// `None` marks an empty (missing) cell.
    pub cells: Vec<Option<String>>,
}

impl RawColumn {
    /// Parsed reals; missing or unparsable cells are `None`.
    pub fn reals(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|c| c.as_deref().and_then(|s| s.trim().parse::<f64>().ok()))
            .map(|v| v.filter(|x| !x.is_nan()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    n_rows: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, hints: &HashMap<String, ColumnKind>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), hints)
}

/// Parses RFC 4180 CSV with a header row. A column is `Real` when every
/// non-empty cell parses as a number, unless `hints` says otherwise.
pub fn ingest_reader<R: Read>(reader: R, hints: &HashMap<String, ColumnKind>) -> Result<RawTable> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = r.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::Empty("CSV file has no header row".into())),
    };
    let width = header.len();
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); width];
    let mut n_rows = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: width,
                found: rec.len(),
            });
        }
        for (col, field) in cells.iter_mut().zip(rec.iter()) {
            col.push((!field.trim().is_empty()).then(|| field.to_string()));
        }
        n_rows += 1;
    }
    let columns = header
        .iter()
        .zip(cells)
        .map(|(name, cells)| {
            let kind = hints.get(name).copied().unwrap_or_else(|| infer_kind(&cells));
            RawColumn {
                name: name.to_string(),
                kind,
                cells,
            }
        })
        .collect();
    Ok(RawTable { columns, n_rows })
}

fn infer_kind(cells: &[Option<String>]) -> ColumnKind {
    let mut any = false;
    for c in cells.iter().flatten() {
        any = true;
        if c.trim().parse::<f64>().is_err() {
            return ColumnKind::Symbolic;
        }
    }
    if any {
        ColumnKind::Real
    } else {
        ColumnKind::Symbolic
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RawTable> {
        ingest_reader(s.as_bytes(), &HashMap::new())
    }

    #[test]
    fn typed_columns() {
        let t = parse("a,b\nx,1.5\ny,2.0\nx,0.5\n").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_columns(), 2);
        assert_eq!(t.columns[0].kind, ColumnKind::Symbolic);
        assert_eq!(t.columns[1].kind, ColumnKind::Real);
        assert_eq!(t.columns[1].reals(), vec![Some(1.5), Some(2.0), Some(0.5)]);
    }

    #[test]
    fn header_only() {
        let t = parse("a,b\n").unwrap();
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.n_columns(), 2);
    }

    #[test]
    fn ragged_row_is_named() {
        let err = parse("a,b\nx\n").unwrap_err();
        match err {
            Error::RaggedRow { row, expected, found } => {
                assert_eq!((row, expected, found), (1, 2, 1));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse(""), Err(Error::Empty(_))));
    }

    #[test]
    fn quoted_fields_and_missing_cells() {
        let t = parse("name,v\n\"a,b\",1\n\"say \"\"hi\"\"\",\n").unwrap();
        assert_eq!(t.columns[0].cells[0].as_deref(), Some("a,b"));
        assert_eq!(t.columns[0].cells[1].as_deref(), Some("say \"hi\""));
        assert_eq!(t.columns[1].cells[1], None);
        assert_eq!(t.columns[1].kind, ColumnKind::Real);
    }

    #[test]
    fn hints_override_inference() {
        let mut hints = HashMap::new();
        hints.insert("b".to_string(), ColumnKind::Symbolic);
        let t = ingest_reader("a,b\n1,2\n".as_bytes(), &hints).unwrap();
        assert_eq!(t.columns[0].kind, ColumnKind::Real);
        assert_eq!(t.columns[1].kind, ColumnKind::Symbolic);
    }
}
