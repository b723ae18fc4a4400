//! Expression matrix ingestion, imputation, filtering and standardization.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{DcaError, Result};
use crate::format::fmt_num;
use crate::stats;

/// Genes in rows, samples in columns. Missing entries are stored as `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
    values: Array2<f64>,
    standardized: bool,
}

impl ExpressionMatrix {
    pub fn new(
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let (p, n) = values.dim();
        if gene_ids.len() != p || sample_ids.len() != n {
            return Err(DcaError::Validation(format!(
                "matrix is {p}x{n} but {} gene ids and {} sample ids were given",
                gene_ids.len(),
                sample_ids.len()
            )));
        }
        check_unique(&gene_ids, "gene")?;
        check_unique(&sample_ids, "sample")?;
        if values.iter().any(|v| v.is_infinite()) {
            return Err(DcaError::Validation(
                "matrix holds non-finite values".into(),
            ));
        }
        Ok(Self {
            gene_ids,
            sample_ids,
            values: values.as_standard_layout().into_owned(),
            standardized: false,
        })
    }

    /// Builds a matrix from row vectors with generated ids `g1..gp` and `s1..sn`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(DcaError::Validation("rows have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((p, n), flat)
            .map_err(|e| DcaError::Validation(e.to_string()))?;
        Self::new(
            (1..=p).map(|i| format!("g{i}")).collect(),
            (1..=n).map(|j| format!("s{j}")).collect(),
            values,
        )
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, gene: usize) -> &[f64] {
        let n = self.n_samples();
        &self.values.as_slice().expect("standard layout")[gene * n..(gene + 1) * n]
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn gene_index(&self, id: &str) -> Option<usize> {
        self.gene_ids.iter().position(|g| g == id)
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn is_missing(&self, gene: usize, sample: usize) -> bool {
        self.values[[gene, sample]].is_nan()
    }

    /// Marks the matrix as standardized after checking every row.
    pub fn assume_standardized(mut self) -> Result<Self> {
        for (g, id) in self.gene_ids.iter().enumerate() {
            let row = &self.values.as_slice().expect("standard layout")
                [g * self.sample_ids.len()..(g + 1) * self.sample_ids.len()];
            let m = stats::mean(row);
            let sd = stats::sample_sd(row);
            if !(m.abs() <= 1e-8 && (sd - 1.0).abs() <= 1e-8) {
                return Err(DcaError::Validation(format!(
                    "gene '{id}' is not standardized (mean {m}, sd {sd})"
                )));
            }
        }
        self.standardized = true;
        Ok(self)
    }

    fn with_rows(&self, keep: &[usize]) -> Self {
        let n = self.n_samples();
        let mut flat = Vec::with_capacity(keep.len() * n);
        for &g in keep {
            flat.extend_from_slice(self.row(g));
        }
        Self {
            gene_ids: keep.iter().map(|&g| self.gene_ids[g].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
            values: Array2::from_shape_vec((keep.len(), n), flat).expect("shape"),
            standardized: self.standardized,
        }
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(DcaError::Validation(format!("duplicate {what} id '{id}'")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: char,
    /// Tokens read as missing values. An empty field is always missing.
    pub na_tokens: Vec<String>,
    /// When false, sample ids are generated as `s1..sn`.
    pub has_header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: '\t',
            na_tokens: vec!["NA".to_string()],
            has_header: true,
        }
    }
}

pub fn load_expression(path: impl AsRef<Path>, options: &LoadOptions) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DcaError::io(path, e))?;
    read_expression(BufReader::new(file), options)
}

pub fn read_expression<R: BufRead>(reader: R, options: &LoadOptions) -> Result<ExpressionMatrix> {
    let mut sample_ids: Option<Vec<String>> = None;
    let mut gene_ids = Vec::new();
    let mut flat = Vec::new();
    let mut width = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DcaError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(options.delimiter).collect();

        if options.has_header && sample_ids.is_none() {
            if fields.len() < 2 {
                return Err(DcaError::Parse {
                    line: line_no,
                    message: "header needs a gene column and at least one sample".into(),
                });
            }
            let ids: Vec<String> = fields[1..].iter().map(|s| s.trim().to_string()).collect();
            width = ids.len();
            sample_ids = Some(ids);
            continue;
        }
        if width == 0 {
            width = fields.len().saturating_sub(1);
        }
        if fields.len() != width + 1 {
            return Err(DcaError::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", width + 1, fields.len()),
            });
        }
        gene_ids.push(fields[0].trim().to_string());
        for cell in &fields[1..] {
            let cell = cell.trim();
            if cell.is_empty() || options.na_tokens.iter().any(|t| t == cell) {
                flat.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DcaError::Parse {
                line: line_no,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DcaError::Parse {
                    line: line_no,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            flat.push(v);
        }
    }

    if gene_ids.is_empty() {
        return Err(DcaError::EmptyResult(
            "expression file has no gene rows".into(),
        ));
    }
    let sample_ids = sample_ids.unwrap_or_else(|| (1..=width).map(|j| format!("s{j}")).collect());
    let values = Array2::from_shape_vec((gene_ids.len(), width), flat)
        .map_err(|e| DcaError::Validation(e.to_string()))?;
    ExpressionMatrix::new(gene_ids, sample_ids, values)
}

/// Writes the matrix with a `gene` header cell; missing values become `NA`.
pub fn write_expression<W: Write>(
    m: &ExpressionMatrix,
    mut out: W,
    delimiter: char,
) -> std::io::Result<()> {
    let mut line = String::from("gene");
    for s in m.sample_ids() {
        line.push(delimiter);
        line.push_str(s);
    }
    writeln!(out, "{line}")?;
    for (g, id) in m.gene_ids().iter().enumerate() {
        line.clear();
        line.push_str(id);
        for &v in m.row(g) {
            line.push(delimiter);
            if v.is_nan() {
                line.push_str("NA");
            } else {
                line.push_str(&fmt_num(v));
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Diagnostic produced when imputation could not use the requested neighbour count.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputeWarning {
    pub gene: String,
    pub sample: String,
    pub requested: usize,
    pub used: usize,
}

pub const DEFAULT_KNN_K: usize = 10;

/// Nearest-neighbour imputation.
///
/// Distance between two genes is the root mean squared difference over the
/// samples observed in both. A missing value of gene `g` at sample `s` is the
/// average of sample `s` over the `k` nearest genes observed there (ties by
/// gene order). Imputed values never feed other imputations.
///
/// When no gene qualifies as a neighbour the gene's observed mean is used.
pub fn knn_impute(
    m: &ExpressionMatrix,
    k: usize,
) -> Result<(ExpressionMatrix, Vec<ImputeWarning>)> {
    if k == 0 {
        return Err(DcaError::InvalidParameter("knn k must be positive".into()));
    }
    let p = m.n_genes();
    let n = m.n_samples();
    for g in 0..p {
        if m.row(g).iter().all(|v| v.is_nan()) {
            return Err(DcaError::Imputation {
                gene: m.gene_ids[g].clone(),
            });
        }
    }
    let targets: Vec<usize> = (0..p)
        .filter(|&g| m.row(g).iter().any(|v| v.is_nan()))
        .collect();
    if targets.is_empty() {
        return Ok((m.clone(), Vec::new()));
    }

    let filled: Vec<(usize, Vec<f64>, Vec<ImputeWarning>)> = targets
        .par_iter()
        .map(|&g| {
            let row = m.row(g);
            let mut distances: Vec<(f64, usize)> = (0..p)
                .filter(|&h| h != g)
                .filter_map(|h| {
                    let other = m.row(h);
                    let (mut ss, mut shared) = (0.0, 0usize);
                    for (a, b) in row.iter().zip(other) {
                        if !a.is_nan() && !b.is_nan() {
                            ss += (a - b) * (a - b);
                            shared += 1;
                        }
                    }
                    (shared > 0).then(|| ((ss / shared as f64).sqrt(), h))
                })
                .collect();
            distances.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut out = row.to_vec();
            let mut warnings = Vec::new();
            let observed: Vec<f64> = row.iter().copied().filter(|v| !v.is_nan()).collect();
            for s in 0..n {
                if !row[s].is_nan() {
                    continue;
                }
                let neighbours: Vec<f64> = distances
                    .iter()
                    .filter_map(|&(_, h)| {
                        let v = m.values[[h, s]];
                        (!v.is_nan()).then_some(v)
                    })
                    .take(k)
                    .collect();
                if neighbours.len() < k {
                    warnings.push(ImputeWarning {
                        gene: m.gene_ids[g].clone(),
                        sample: m.sample_ids[s].clone(),
                        requested: k,
                        used: neighbours.len(),
                    });
                }
                out[s] = if neighbours.is_empty() {
                    stats::mean(&observed)
                } else {
                    stats::mean(&neighbours)
                };
            }
            (g, out, warnings)
        })
        .collect();

    let mut result = m.clone();
    let mut warnings = Vec::new();
    for (g, row, w) in filled {
        result
            .values
            .row_mut(g)
            .iter_mut()
            .zip(row)
            .for_each(|(dst, v)| *dst = v);
        warnings.extend(w);
    }
    for w in &warnings {
        log::warn!(
            "imputing {} at {} with {} of {} requested neighbours",
            w.gene,
            w.sample,
            w.used,
            w.requested
        );
    }
    Ok((result, warnings))
}

fn ensure_complete(m: &ExpressionMatrix, stage: &str) -> Result<()> {
    let missing = m.missing_count();
    if missing > 0 {
        return Err(DcaError::Validation(format!(
            "{stage} needs a complete matrix; {missing} values are missing"
        )));
    }
    Ok(())
}

/// Drops genes whose zero fraction exceeds `max_zero_fraction` or whose sample
/// variance is below `min_variance`. Survivors keep their order and values.
pub fn filter_genes(
    m: &ExpressionMatrix,
    max_zero_fraction: f64,
    min_variance: f64,
) -> Result<ExpressionMatrix> {
    if !(0.0..=1.0).contains(&max_zero_fraction) {
        return Err(DcaError::InvalidParameter(format!(
            "max zero fraction {max_zero_fraction} is outside [0, 1]"
        )));
    }
    if min_variance.is_nan() || min_variance < 0.0 {
        return Err(DcaError::InvalidParameter(format!(
            "min variance {min_variance} is negative"
        )));
    }
    ensure_complete(m, "filtering")?;
    let n = m.n_samples() as f64;
    let keep: Vec<usize> = (0..m.n_genes())
        .filter(|&g| {
            let row = m.row(g);
            let zeros = row.iter().filter(|&&v| v == 0.0).count() as f64;
            zeros / n <= max_zero_fraction && stats::sample_variance(row) >= min_variance
        })
        .collect();
    if keep.is_empty() {
        return Err(DcaError::EmptyResult(
            "every gene was removed by filtering".into(),
        ));
    }
    Ok(m.with_rows(&keep))
}

/// Rescales every gene to mean 0 and sample standard deviation 1.
pub fn standardize(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    ensure_complete(m, "standardization")?;
    if m.n_samples() < 2 {
        return Err(DcaError::Validation(
            "standardization needs at least 2 samples".into(),
        ));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..m.n_genes())
        .into_par_iter()
        .map(|g| {
            stats::standardized(m.row(g)).ok_or_else(|| DcaError::ZeroVariance {
                gene: m.gene_ids[g].clone(),
            })
        })
        .collect();
    let mut flat = Vec::with_capacity(m.values.len());
    for row in rows {
        flat.extend(row?);
    }
    Ok(ExpressionMatrix {
        gene_ids: m.gene_ids.clone(),
        sample_ids: m.sample_ids.clone(),
        values: Array2::from_shape_vec(m.values.dim(), flat).expect("shape"),
        standardized: true,
    })
}
