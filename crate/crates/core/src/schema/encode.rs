use std::collections::{BTreeSet, HashMap};
#[cfg(test)]
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ingest::{ColumnKind, RawColumn, RawTable};
use super::{parse_label, Code, EncodedDataset, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub labels_column: Option<String>,
    pub n_bins: usize,
    /// Real columns with at most this many distinct training values are
    /// treated as categorical.
    pub low_card_threshold: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            labels_column: None,
            n_bins: 10,
            low_card_threshold: 20,
        }
    }
}

/// Canonical text of a real value, so that `1`, `1.0` and `1e0` share a category.
pub fn canonical_real(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Fits one [`FeatureSpec`] per non-label column using only rows where
/// `train_mask` is set.
pub fn fit_encoding(table: &RawTable, opts: &FitOptions, train_mask: &[bool]) -> Result<Vec<FeatureSpec>> {
    if opts.n_bins == 0 {
        return Err(Error::config("n_bins must be positive"));
    }
    if train_mask.len() != table.n_rows() {
        return Err(Error::config("train mask length differs from row count"));
    }
    if !train_mask.iter().any(|&m| m) {
        return Err(Error::Empty("no training rows to fit the encoding on".into()));
    }
    if let Some(label) = &opts.labels_column {
        if table.column(label).is_none() {
            return Err(Error::config(format!("label column `{label}` not found")));
        }
    }
    table
        .columns
        .iter()
        .filter(|c| Some(&c.name) != opts.labels_column.as_ref())
        .map(|c| fit_column(c, opts, train_mask))
        .collect()
}

fn fit_column(col: &RawColumn, opts: &FitOptions, mask: &[bool]) -> Result<FeatureSpec> {
    match col.kind {
        ColumnKind::Symbolic => {
            let vocab: BTreeSet<&str> = col
                .cells
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .filter_map(|(c, _)| c.as_deref())
                .collect();
            categorical(&col.name, vocab.into_iter().map(str::to_string).collect(), false)
        }
        ColumnKind::Real => {
            let mut values: Vec<f64> = col
                .reals()
                .into_iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .filter_map(|(v, _)| v)
                .collect();
            values.sort_by(f64::total_cmp);
            let mut distinct = values.clone();
            distinct.dedup_by(|a, b| a == b);
            if distinct.is_empty() {
                return Err(Error::feature(&col.name, "no observed values in the training rows"));
            }
            if distinct.len() <= opts.low_card_threshold {
                let vocab = distinct.iter().map(|&v| canonical_real(v)).collect();
                categorical(&col.name, vocab, true)
            } else {
                Ok(continuous(&col.name, quantile_edges(&values, opts.n_bins)))
            }
        }
    }
}

fn categorical(name: &str, categories: Vec<String>, numeric: bool) -> Result<FeatureSpec> {
    if categories.is_empty() {
        return Err(Error::feature(name, "no observed values in the training rows"));
    }
    let k = categories.len() as u32;
    Ok(FeatureSpec {
        name: name.to_string(),
        kind: FeatureKind::Categorical,
        cardinality: k + 1,
        bin_edges: Vec::new(),
        unknown_id: Some(k),
        categories,
        numeric,
    })
}

fn continuous(name: &str, edges: Vec<f64>) -> FeatureSpec {
    let bins = edges.len().saturating_sub(1).max(1) as u32;
    FeatureSpec {
        name: name.to_string(),
        kind: FeatureKind::Continuous,
        cardinality: bins + 1,
        bin_edges: edges,
        unknown_id: Some(bins),
        categories: Vec::new(),
        numeric: false,
    }
}

/// Order-statistic quantile edges of sorted values: `e_k = v[floor(k n / bins)]`
/// for interior `k`, plus min and max. Duplicate edges collapse, reducing the
/// bin count.
fn quantile_edges(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges = Vec::with_capacity(n_bins + 1);
    edges.push(sorted[0]);
    for k in 1..n_bins {
        edges.push(sorted[k * n / n_bins]);
    }
    edges.push(sorted[n - 1]);
    edges.dedup_by(|a, b| a == b);
    edges
}

impl FeatureSpec {
    fn encode_cell(&self, cell: Option<&str>, lookup: &HashMap<&str, Code>) -> Code {
        let unknown = self.unknown_id.unwrap_or(0);
        let Some(cell) = cell else { return unknown };
        match self.kind {
            FeatureKind::Continuous => match cell.trim().parse::<f64>() {
                Ok(v) if !v.is_nan() => self.bin_of(v),
                _ => unknown,
            },
            FeatureKind::Categorical => {
                let key = if self.numeric {
                    match cell.trim().parse::<f64>() {
                        Ok(v) => canonical_real(v),
                        Err(_) => return unknown,
                    }
                } else {
                    cell.to_string()
                };
                lookup.get(key.as_str()).copied().unwrap_or(unknown)
            }
        }
    }
}

/// Encodes a table with fitted specs. Unseen categories and missing cells map
/// to the feature's unknown bucket.
pub fn encode(table: &RawTable, specs: &[FeatureSpec], labels_column: Option<&str>) -> Result<EncodedDataset> {
    let n = table.n_rows();
    let d = specs.len();
    let mut codes = vec![0 as Code; n * d];
    for (j, spec) in specs.iter().enumerate() {
        let col = table
            .column(&spec.name)
            .ok_or_else(|| Error::feature(&spec.name, "column missing from input table"))?;
        let lookup: HashMap<&str, Code> = spec
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as Code))
            .collect();
        for (i, cell) in col.cells.iter().enumerate() {
            codes[i * d + j] = spec.encode_cell(cell.as_deref(), &lookup);
        }
    }
    let labels = labels_column.map(|name| table_labels(table, name)).transpose()?;
    EncodedDataset::new(specs.to_vec(), codes, labels)
}

/// Parses a 0/1 label column; blank cells are rejected.
pub fn table_labels(table: &RawTable, column: &str) -> Result<Vec<u8>> {
    let col = table
        .column(column)
        .ok_or_else(|| Error::config(format!("label column `{column}` not found")))?;
    col.cells
        .iter()
        .enumerate()
        .map(|(i, c)| parse_label(c.as_deref().unwrap_or(""), i + 1))
        .collect()
}

#[cfg(test)]
fn bin_counts(spec: &FeatureSpec, values: &[f64]) -> BTreeMap<Code, usize> {
    let mut counts = BTreeMap::new();
    for &v in values {
        *counts.entry(spec.bin_of(v)).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::super::ingest_reader;
    use super::*;
    use proptest::prelude::*;

    fn table(csv: &str) -> RawTable {
        ingest_reader(csv.as_bytes(), &HashMap::new()).unwrap()
    }

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn uniform_column_gets_ten_bins() {
        let csv: String = std::iter::once("v".to_string())
            .chain((1..=100).map(|i| i.to_string()))
            .collect::<Vec<_>>()
            .join("\n");
        let t = table(&csv);
        let specs = fit_encoding(&t, &FitOptions::default(), &all(100)).unwrap();
        assert_eq!(specs[0].kind, FeatureKind::Continuous);
        assert_eq!(specs[0].n_bins(), 10);
        assert_eq!(specs[0].cardinality, 11);
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let counts = bin_counts(&specs[0], &values);
        assert!(counts.values().all(|&c| c == 10), "{counts:?}");
    }

    #[test]
    fn symbolic_vocab_plus_unknown() {
        let t = table("c\na\nb\na\n");
        let specs = fit_encoding(&t, &FitOptions::default(), &all(3)).unwrap();
        assert_eq!(specs[0].cardinality, 3);
        assert_eq!(specs[0].unknown_id, Some(2));
    }

    #[test]
    fn low_cardinality_reals_are_categorical() {
        let t = table("v\n1\n2\n3\n4\n5\n1.0\n");
        let specs = fit_encoding(&t, &FitOptions::default(), &all(6)).unwrap();
        assert_eq!(specs[0].kind, FeatureKind::Categorical);
        assert_eq!(specs[0].cardinality, 6);
        let ds = encode(&t, &specs, None).unwrap();
        assert_eq!(ds.row(0), ds.row(5));
    }

    #[test]
    fn constant_continuous_column() {
        let t = table("v\n4\n4\n4\n");
        let opts = FitOptions {
            low_card_threshold: 0,
            ..FitOptions::default()
        };
        let specs = fit_encoding(&t, &opts, &all(3)).unwrap();
        assert_eq!(specs[0].kind, FeatureKind::Continuous);
        assert_eq!(specs[0].n_bins(), 1);
        assert_eq!(specs[0].cardinality, 2);
    }

    #[test]
    fn zero_training_rows_is_an_error() {
        let t = table("v\n1\n2\n");
        assert!(fit_encoding(&t, &FitOptions::default(), &[false, false]).is_err());
    }

    #[test]
    fn fit_uses_only_masked_rows() {
        let t = table("c\na\nb\nc\n");
        let specs = fit_encoding(&t, &FitOptions::default(), &[true, true, false]).unwrap();
        let ds = encode(&t, &specs, None).unwrap();
        // `c` was never seen during fitting.
        assert_eq!(ds.row(2)[0], specs[0].unknown_id.unwrap());
    }

    #[test]
    fn unseen_category_and_missing_cells() {
        let fit = table("c,v\na,1\nb,2\n");
        let specs = fit_encoding(&fit, &FitOptions::default(), &all(2)).unwrap();
        let test = table("c,v\nz,\n,2\n");
        let ds = encode(&test, &specs, None).unwrap();
        assert_eq!(ds.row(0), &[2, 2]);
        assert_eq!(ds.row(1), &[2, 1]);
    }

    #[test]
    fn continuous_clamps_and_missing_bucket() {
        let csv: String = std::iter::once("v".to_string())
            .chain((0..50).map(|i| format!("{}", i as f64 * 0.5)))
            .collect::<Vec<_>>()
            .join("\n");
        let specs = fit_encoding(&table(&csv), &FitOptions::default(), &all(50)).unwrap();
        let spec = &specs[0];
        let test = table("v\n-100\n1000\n\"\"\nnot-a-number\n");
        let ds = encode(&test, &specs, None).unwrap();
        assert_eq!(ds.row(0)[0], 0);
        assert_eq!(ds.row(1)[0] as usize, spec.n_bins() - 1);
        assert_eq!(ds.row(2)[0], spec.unknown_id.unwrap());
        assert_eq!(ds.row(3)[0], spec.unknown_id.unwrap());
    }

    #[test]
    fn labels_are_excluded_and_parsed() {
        let t = table("a,y\nx,0\ny,1\n");
        let opts = FitOptions {
            labels_column: Some("y".into()),
            ..FitOptions::default()
        };
        let specs = fit_encoding(&t, &opts, &all(2)).unwrap();
        assert_eq!(specs.len(), 1);
        let ds = encode(&t, &specs, Some("y")).unwrap();
        assert_eq!(ds.labels(), Some(&[0u8, 1][..]));
    }

    #[test]
    fn spec_json_roundtrip_is_bit_exact() {
        let csv: String = std::iter::once("v".to_string())
            .chain((0..64).map(|i| format!("{}", (i as f64).sqrt() / 3.0)))
            .collect::<Vec<_>>()
            .join("\n");
        let specs = fit_encoding(&table(&csv), &FitOptions::default(), &all(64)).unwrap();
        let json = serde_json::to_string(&specs).unwrap();
        let back: Vec<FeatureSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, specs);
        for (a, b) in back[0].bin_edges.iter().zip(&specs[0].bin_edges) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn quantile_bins_are_balanced(n in 20usize..400, bins in 2usize..15, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, crate::rng::Domain::Fuzz, &[]);
            let mut values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            let n = values.len();
            let bins = bins.min(n);
            let spec = continuous("v", quantile_edges(&values, bins));
            prop_assert_eq!(spec.n_bins(), bins);
            let counts = bin_counts(&spec, &values);
            for &c in counts.values() {
                prop_assert!(c >= n / bins && c <= n.div_ceil(bins), "count {} n {} bins {}", c, n, bins);
            }
        }

        #[test]
        fn encoded_codes_are_valid(
            rows in proptest::collection::vec((0u8..6, -50i32..50, proptest::option::of(0u8..3)), 1..60),
            threshold in 0usize..8,
        ) {
            let mut csv = String::from("s,r,m\n");
            for (s, r, m) in &rows {
                let m = m.map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!("k{s},{},{m}\n", *r as f64 / 4.0));
            }
            let t = table(&csv);
            let half: Vec<bool> = (0..t.n_rows()).map(|i| i % 2 == 0).collect();
            let opts = FitOptions { low_card_threshold: threshold, n_bins: 4, ..FitOptions::default() };
            let specs = match fit_encoding(&t, &opts, &half) {
                Ok(s) => s,
                // Columns with no observed training values are rejected.
                Err(_) => return Ok(()),
            };
            let a = encode(&t, &specs, None).unwrap();
            let b = encode(&t, &specs, None).unwrap();
            prop_assert_eq!(&a, &b);
            for row in a.rows() {
                for (spec, &c) in specs.iter().zip(row) {
                    prop_assert!(c < spec.cardinality);
                }
            }
        }
    }
}
