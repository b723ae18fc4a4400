//! Product matrix construction and dynamic component extraction.
//!
//! Row `k` of the product matrix `B` is the elementwise product of the two
//! standardized genes of pair `k`. For a standardized scouting vector `z`,
//! `B z / n` is the vector of liquid association scores of every pair, so the
//! unit vectors maximizing the summed squared scores are the leading
//! eigenvectors of `BᵀB`.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;

use crate::eigen::{fix_sign, symmetric_eigen};
use crate::error::{DcaError, Result};
use crate::format::fmt_num;
use crate::preprocess::ExpressionMatrix;
use crate::stats::{dot, standardized};
use crate::varimax::{self, varimax};

#[derive(Debug, Clone, PartialEq)]
pub struct ProductMatrix {
    pairs: Vec<(usize, usize)>,
    values: Array2<f64>,
    sample_ids: Vec<String>,
}

impl ProductMatrix {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.n_samples();
        &self.values.as_slice().expect("standard layout")[k * n..(k + 1) * n]
    }

    /// `B v` with a fixed per-row summation order.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_samples());
        (0..self.n_rows())
            .into_par_iter()
            .map(|k| dot(self.row(k), v))
            .collect()
    }

    /// `vᵀ BᵀB v`, the summed squared projections of the rows on `v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().map(|x| x * x).sum()
    }
}

/// Elementwise product `(x_1 y_1, ..., x_n y_n)`.
pub fn product_row(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

/// Stacks the elementwise products of the given gene pairs, in order.
pub fn build_product_matrix(
    m: &ExpressionMatrix,
    pairs: &[(usize, usize)],
) -> Result<ProductMatrix> {
    if !m.is_standardized() {
        return Err(DcaError::InvalidParameter(
            "product matrix expects a standardized matrix".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(DcaError::EmptyResult(
            "no pairs selected for the product matrix".into(),
        ));
    }
    let p = m.n_genes();
    let n = m.n_samples();
    if n < 2 {
        return Err(DcaError::Validation(
            "product matrix needs at least 2 samples".into(),
        ));
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= p || j >= p) {
        return Err(DcaError::InvalidParameter(format!(
            "pair ({i}, {j}) is out of range for {p} genes"
        )));
    }
    let mut flat = vec![0.0; pairs.len() * n];
    flat.par_chunks_mut(n)
        .zip(pairs.par_iter())
        .for_each(|(row, &(i, j))| {
            row.copy_from_slice(&product_row(m.row(i), m.row(j)));
        });
    Ok(ProductMatrix {
        pairs: pairs.to_vec(),
        values: Array2::from_shape_vec((pairs.len(), n), flat).expect("shape"),
        sample_ids: m.sample_ids().to_vec(),
    })
}

/// `BᵀB`. Each entry is a column dot product, so the result does not depend
/// on the thread count.
pub fn gram(b: &ProductMatrix) -> Array2<f64> {
    let n = b.n_samples();
    let columns: Vec<Vec<f64>> = (0..n).map(|c| b.values.column(c).to_vec()).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| (a..n).map(|c| dot(&columns[a], &columns[c])).collect())
        .collect();
    let mut s = Array2::zeros((n, n));
    for (a, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            s[[a, a + off]] = v;
            s[[a + off, a]] = v;
        }
    }
    s
}

/// Liquid association of `(x, y)` with scouting vector `z`:
/// `(1/n) Σ x_i y_i z̃_i` where `z̃` is `z` standardized.
pub fn la_score(x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(DcaError::InvalidParameter("vector lengths differ".into()));
    }
    let zt = standardized(z)
        .ok_or_else(|| DcaError::Degenerate("scouting vector is constant".into()))?;
    let s: f64 = x.iter().zip(y).zip(&zt).map(|((a, b), c)| a * b * c).sum();
    Ok(s / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicComponent {
    /// Unit-length sample scores.
    pub scores: Vec<f64>,
    /// `zᵀBᵀBz`.
    pub eigenvalue: f64,
    /// 1-based position after ordering.
    pub rank: usize,
    pub rotated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub k: usize,
    pub rotate: bool,
    pub rotation_max_iter: usize,
    pub rotation_tol: f64,
}

pub const DEFAULT_COMPONENTS: usize = 10;

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_COMPONENTS,
            rotate: true,
            rotation_max_iter: varimax::DEFAULT_MAX_ITER,
            rotation_tol: varimax::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub components: Vec<DynamicComponent>,
    /// Leading eigenvalues of `BᵀB`, descending (length k).
    pub eigenvalues: Vec<f64>,
    /// `trace(BᵀB)`.
    pub total_variance: f64,
    /// Varimax rotation applied to the eigenvectors, when rotated.
    pub rotation: Option<Array2<f64>>,
}

/// Relative floor under which an eigenvalue counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Leading dynamic components of `B`.
///
/// With rotation, varimax runs on the pair loadings `B V` (the eigenvectors
/// scaled by the square roots of their eigenvalues in pair space) and the
/// same rotation is applied to the unit sample-score eigenvectors, so the
/// components stay orthonormal and their summed `zᵀBᵀBz` equals the summed
/// leading eigenvalues. Rotated components are reordered by `zᵀBᵀBz`.
pub fn extract_components(b: &ProductMatrix, options: &ExtractOptions) -> Result<Extraction> {
    let n = b.n_samples();
    if options.k == 0 || options.k > n {
        return Err(DcaError::InvalidParameter(format!(
            "cannot extract {} components from {n} samples",
            options.k
        )));
    }
    let s = gram(b);
    let total_variance: f64 = (0..n).map(|i| s[[i, i]]).sum();
    let pairs = symmetric_eigen(&s)?;
    let top = pairs[0].value.max(0.0);
    let positive = pairs.iter().filter(|p| p.value > RANK_TOL * top).count();
    if options.k > positive {
        return Err(DcaError::InvalidParameter(format!(
            "requested {} components but the product matrix has only {positive} positive \
             eigenvalues; use a smaller k",
            options.k
        )));
    }
    let leading: Vec<_> = pairs.into_iter().take(options.k).collect();
    let eigenvalues: Vec<f64> = leading.iter().map(|p| p.value).collect();

    if !options.rotate || options.k == 1 {
        let components = leading
            .into_iter()
            .enumerate()
            .map(|(r, p)| DynamicComponent {
                scores: p.vector,
                eigenvalue: p.value,
                rank: r + 1,
                rotated: false,
            })
            .collect();
        return Ok(Extraction {
            components,
            eigenvalues,
            total_variance,
            rotation: None,
        });
    }

    let k = options.k;
    let basis = Array2::from_shape_fn((n, k), |(i, c)| leading[c].vector[i]);
    let columns: Vec<Vec<f64>> = (0..k).map(|c| b.mul_vec(&leading[c].vector)).collect();
    let loadings = Array2::from_shape_fn((b.n_rows(), k), |(r, c)| columns[c][r]);
    let fit = varimax(&loadings, options.rotation_max_iter, options.rotation_tol);
    let rotated_basis = basis.dot(&fit.rotation);

    let mut components: Vec<DynamicComponent> = (0..k)
        .map(|c| {
            let mut z = rotated_basis.column(c).to_vec();
            let norm = dot(&z, &z).sqrt();
            z.iter_mut().for_each(|v| *v /= norm);
            fix_sign(&mut z);
            let eigenvalue = b.quadratic_form(&z);
            DynamicComponent {
                scores: z,
                eigenvalue,
                rank: 0,
                rotated: true,
            }
        })
        .collect();
    components.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
    for (r, c) in components.iter_mut().enumerate() {
        c.rank = r + 1;
    }
    Ok(Extraction {
        components,
        eigenvalues,
        total_variance,
        rotation: Some(fit.rotation),
    })
}

/// `sample_id, dc1..dck`.
pub fn write_components<W: Write>(
    sample_ids: &[String],
    components: &[DynamicComponent],
    mut out: W,
) -> std::io::Result<()> {
    let mut header = String::from("sample_id");
    for c in components {
        header.push_str(&format!("\tdc{}", c.rank));
    }
    writeln!(out, "{header}")?;
    for (i, id) in sample_ids.iter().enumerate() {
        let mut line = id.clone();
        for c in components {
            line.push('\t');
            line.push_str(&fmt_num(c.scores[i]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Scree table: leading eigenvalues, their share of the trace, and each
/// component's `zᵀBᵀBz`.
pub fn write_eigenvalues<W: Write>(extraction: &Extraction, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "component\teigenvalue\tvariance_fraction\tcomponent_sum_sq"
    )?;
    for (r, (lambda, c)) in extraction
        .eigenvalues
        .iter()
        .zip(&extraction.components)
        .enumerate()
    {
        writeln!(
            out,
            "dc{}\t{}\t{}\t{}",
            r + 1,
            fmt_num(*lambda),
            fmt_num(lambda / extraction.total_variance),
            fmt_num(c.eigenvalue)
        )?;
    }
    out.flush()
}
