//! Dataset representation and tabular preprocessing.
//!
//! Raw CSV tables are ingested as typed columns, encoded into integer codes per
//! feature (categorical vocabularies plus quantile bins for continuous columns),
//! and split into normal-only training rows and a held-out test set.

mod encode;
mod ingest;
mod split;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encode::{canonical_real, encode, fit_encoding, table_labels, FitOptions};
pub use ingest::{ingest_csv, ingest_reader, ColumnKind, RawColumn, RawTable};
pub use split::{split_labels, stratified_split, Split, SplitConfig};

/// Integer code of a single feature value.
pub type Code = u32;

/// Sentinel for a masked coordinate. It lies outside every feature cardinality.
pub const MASK: Code = Code::MAX;

/// Name of the label column in encoded dataset files.
pub const LABEL_COLUMN: &str = "label";

pub const ENCODING_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub cardinality: u32,
    /// Ascending bin boundaries including the outer edges (continuous only).
    #[serde(default)]
    pub bin_edges: Vec<f64>,
    /// Reserved code for unseen categories and missing cells.
    pub unknown_id: Option<Code>,
    /// Category vocabulary, in code order (categorical only).
    #[serde(default)]
    pub categories: Vec<String>,
    /// Categories are canonical renderings of real numbers.
    #[serde(default)]
    pub numeric: bool,
}

impl FeatureSpec {
    /// A categorical feature over `0..cardinality` with no unknown bucket.
    pub fn plain(name: impl Into<String>, cardinality: u32) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            cardinality,
            bin_edges: Vec::new(),
            unknown_id: None,
            categories: (0..cardinality).map(|c| c.to_string()).collect(),
            numeric: false,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len().saturating_sub(1).max(1)
    }

    /// Bin index for a real value: half-open `[e_i, e_{i+1})`, clamped at both ends.
    pub fn bin_of(&self, value: f64) -> Code {
        let above = self.bin_edges.partition_point(|&e| e <= value);
        let bin = above.saturating_sub(1).min(self.n_bins() - 1);
        bin as Code
    }

    pub fn validate(&self) -> Result<()> {
        if self.cardinality < 2 {
            return Err(Error::feature(&self.name, "cardinality must be at least 2"));
        }
        if let Some(u) = self.unknown_id {
            if u >= self.cardinality {
                return Err(Error::feature(&self.name, "unknown_id must be below cardinality"));
            }
        }
        match self.kind {
            FeatureKind::Continuous => {
                if self.bin_edges.is_empty() {
                    return Err(Error::feature(&self.name, "continuous feature without bin edges"));
                }
                if self.bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::feature(&self.name, "bin edges must be strictly ascending"));
                }
                if self.cardinality as usize != self.n_bins() + 1 {
                    return Err(Error::feature(
                        &self.name,
                        "continuous cardinality must equal bins + 1",
                    ));
                }
            }
            FeatureKind::Categorical => {
                let expected = self.categories.len() + usize::from(self.unknown_id.is_some());
                if self.cardinality as usize != expected {
                    return Err(Error::feature(
                        &self.name,
                        "categorical cardinality must equal vocabulary size plus unknown bucket",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Rows of integer codes with their feature specs and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    specs: Vec<FeatureSpec>,
    codes: Vec<Code>,
    labels: Option<Vec<u8>>,
}

impl EncodedDataset {
    /// Builds a dataset from row-major codes, checking every code against its spec.
    pub fn new(specs: Vec<FeatureSpec>, codes: Vec<Code>, labels: Option<Vec<u8>>) -> Result<Self> {
        let d = specs.len();
        if d == 0 {
            return Err(Error::Empty("dataset has no features".into()));
        }
        if codes.len() % d != 0 {
            return Err(Error::config("code buffer is not a whole number of rows"));
        }
        let n = codes.len() / d;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::config("label count differs from row count"));
            }
            if l.iter().any(|&y| y > 1) {
                return Err(Error::config("labels must be 0 or 1"));
            }
        }
        for spec in &specs {
            spec.validate()?;
        }
        for (i, row) in codes.chunks_exact(d).enumerate() {
            for (spec, &c) in specs.iter().zip(row) {
                if c >= spec.cardinality {
                    return Err(Error::feature(
                        &spec.name,
                        format!("row {i}: code {c} outside cardinality {}", spec.cardinality),
                    ));
                }
            }
        }
        Ok(EncodedDataset { specs, codes, labels })
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn n_features(&self) -> usize {
        self.specs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.codes.len() / self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Code] {
        let d = self.n_features();
        &self.codes[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Code]> {
        self.codes.chunks_exact(self.n_features())
    }

    pub fn codes(&self) -> &[Code] {
        &self.codes
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn cardinalities(&self) -> Vec<u32> {
        self.specs.iter().map(|s| s.cardinality).collect()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        let mut codes = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            codes.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        EncodedDataset {
            specs: self.specs.clone(),
            codes,
            labels,
        }
    }

    /// Rows with label 0 (all rows when unlabeled).
    pub fn normal_only(&self) -> EncodedDataset {
        match &self.labels {
            None => self.clone(),
            Some(l) => {
                let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| l[i] == 0).collect();
                self.select(&idx)
            }
        }
    }

    /// Writes the dataset as CSV: one column per feature, then `label` if present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.specs.iter().map(|s| s.name.as_str()).collect();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.extend(self.row(i).iter().map(|c| c.to_string()));
            if let Some(l) = &self.labels {
                record.push(l[i].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(file))
    }

    /// Reads an encoded CSV, checking its header and codes against `specs`.
    pub fn read_csv<R: Read>(reader: R, specs: &[FeatureSpec]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = r.headers()?.clone();
        let has_label = header.len() == specs.len() + 1 && &header[specs.len()] == LABEL_COLUMN;
        if header.len() != specs.len() + usize::from(has_label) {
            return Err(Error::config(format!(
                "encoded file has {} columns, encoding specs describe {} features",
                header.len(),
                specs.len()
            )));
        }
        for (spec, name) in specs.iter().zip(header.iter()) {
            if spec.name != name {
                return Err(Error::feature(
                    &spec.name,
                    format!("encoded file has column `{name}` where the encoding expects this feature"),
                ));
            }
        }
        let mut codes = Vec::new();
        let mut labels = has_label.then(Vec::new);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: header.len(),
                    found: rec.len(),
                });
            }
            for (spec, field) in specs.iter().zip(rec.iter()) {
                let c: Code = field.trim().parse().map_err(|_| {
                    Error::feature(&spec.name, format!("row {}: `{field}` is not a code", i + 1))
                })?;
                codes.push(c);
            }
            if let Some(l) = labels.as_mut() {
                l.push(parse_label(&rec[specs.len()], i + 1)?);
            }
        }
        EncodedDataset::new(specs.to_vec(), codes, labels)
    }

    pub fn load_csv(path: impl AsRef<Path>, specs: &[FeatureSpec]) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file), specs)
    }
}

pub(crate) fn parse_label(field: &str, row: usize) -> Result<u8> {
    match field.trim().parse::<f64>() {
        Ok(v) if v == 0.0 => Ok(0),
        Ok(v) if v == 1.0 => Ok(1),
        _ => Err(Error::config(format!("row {row}: label `{field}` is not 0 or 1"))),
    }
}

/// Versioned JSON document holding fitted encodings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingDoc {
    pub version: u32,
    #[serde(default)]
    pub label_column: Option<String>,
    pub features: Vec<FeatureSpec>,
}

impl EncodingDoc {
    pub fn new(features: Vec<FeatureSpec>, label_column: Option<String>) -> Self {
        EncodingDoc {
            version: ENCODING_VERSION,
            label_column,
            features,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: EncodingDoc = serde_json::from_reader(BufReader::new(file))?;
        if doc.version != ENCODING_VERSION {
            return Err(Error::config(format!(
                "unsupported encoding version {} (expected {ENCODING_VERSION})",
                doc.version
            )));
        }
        for f in &doc.features {
            f.validate()?;
        }
        Ok(doc)
    }
}
