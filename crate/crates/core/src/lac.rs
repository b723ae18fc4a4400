//! Liquid association coefficients over all gene pairs.
//!
//! For standardized genes `x` and `y` the coefficient compares the
//! correlation of a transformed copy of the pair against the same transform
//! of the plain correlation:
//!
//! * squared: `r(x², y²) - r(x, y)²`
//! * absolute: `r(|x|, |y|) - |r(x, y)|`
//!
//! Independent and plainly correlated pairs score near zero (the squared
//! variant) while pairs whose correlation flips sign across samples score
//! high. [`lac_matrix`] evaluates every unordered pair with the same cost
//! profile as a correlation matrix.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DcaError, Result};
use crate::format::fmt_num;
use crate::preprocess::ExpressionMatrix;
use crate::stats::{self, centered_unit, dot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LacVariant {
    Squared,
    Absolute,
}

impl LacVariant {
    fn transform(self, v: f64) -> f64 {
        match self {
            LacVariant::Squared => v * v,
            LacVariant::Absolute => v.abs(),
        }
    }

    fn matched(self, r: f64) -> f64 {
        match self {
            LacVariant::Squared => r * r,
            LacVariant::Absolute => r.abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LacVariant::Squared => "squared",
            LacVariant::Absolute => "absolute",
        }
    }
}

impl std::str::FromStr for LacVariant {
    type Err = DcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(LacVariant::Squared),
            "absolute" => Ok(LacVariant::Absolute),
            other => Err(DcaError::InvalidParameter(format!(
                "unknown LAC variant '{other}' (expected squared or absolute)"
            ))),
        }
    }
}

/// What a [`PairScoreTable`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Lac(LacVariant),
    Correlation,
}

fn lac_scalar(x: &[f64], y: &[f64], variant: LacVariant) -> Result<f64> {
    let r = stats::pearson(x, y)?;
    let tx: Vec<f64> = x.iter().map(|&v| variant.transform(v)).collect();
    let ty: Vec<f64> = y.iter().map(|&v| variant.transform(v)).collect();
    let rt = stats::pearson(&tx, &ty).map_err(|_| {
        DcaError::Degenerate(format!("{} values of a gene are constant", variant.name()))
    })?;
    Ok(rt - variant.matched(r))
}

/// `r(x², y²) - r(x, y)²` for standardized `x` and `y`.
pub fn lac_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    lac_scalar(x, y, LacVariant::Squared)
}

/// `r(|x|, |y|) - |r(x, y)|` for standardized `x` and `y`.
pub fn lac_absolute(x: &[f64], y: &[f64]) -> Result<f64> {
    lac_scalar(x, y, LacVariant::Absolute)
}

pub fn lac(x: &[f64], y: &[f64], variant: LacVariant) -> Result<f64> {
    lac_scalar(x, y, variant)
}

/// Upper-triangular store of a pairwise statistic, row-major over `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScoreTable {
    gene_ids: Vec<String>,
    scores: Vec<f64>,
    kind: ScoreKind,
}

/// Number of unordered pairs among `p` items.
pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Offset of the first entry of row `i` in the triangle.
fn row_offset(p: usize, i: usize) -> usize {
    i * (2 * p - i - 1) / 2
}

impl PairScoreTable {
    pub fn new(gene_ids: Vec<String>, scores: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if scores.len() != pair_count(gene_ids.len()) {
            return Err(DcaError::Validation(format!(
                "{} scores do not fill the triangle of {} genes",
                scores.len(),
                gene_ids.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(DcaError::Validation("pair scores must be finite".into()));
        }
        Ok(Self {
            gene_ids,
            scores,
            kind,
        })
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        let p = self.gene_ids.len();
        assert!(i < j && j < p, "pair ({i}, {j}) outside triangle of {p}");
        row_offset(p, i) + (j - i - 1)
    }

    /// Score for the unordered pair `{i, j}`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.scores[self.index(a, b)]
    }

    /// Iterates `(i, j, score)` in lexicographic pair order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = self.gene_ids.len();
        (0..p)
            .flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
            .zip(self.scores.iter())
            .map(|((i, j), &s)| (i, j, s))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "gene_i\tgene_j\tscore")?;
        for (i, j, s) in self.iter() {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.gene_ids[i],
                self.gene_ids[j],
                fmt_num(s)
            )?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// Ordered pair selection; every pair has `i < j` and appears once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairList {
    pairs: Vec<ScoredPair>,
}

impl PairList {
    pub fn new(pairs: Vec<ScoredPair>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if p.i >= p.j {
                return Err(DcaError::Validation(format!(
                    "pair ({}, {}) must satisfy i < j",
                    p.i, p.j
                )));
            }
            if !seen.insert((p.i, p.j)) {
                return Err(DcaError::Validation(format!(
                    "duplicate pair ({}, {})",
                    p.i, p.j
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[ScoredPair] {
        &self.pairs
    }

    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.i, p.j)).collect()
    }

    pub fn write_tsv<W: Write>(&self, gene_ids: &[String], mut out: W) -> std::io::Result<()> {
        writeln!(out, "gene_i\tgene_j\tscore")?;
        for p in &self.pairs {
            writeln!(
                out,
                "{}\t{}\t{}",
                gene_ids[p.i],
                gene_ids[p.j],
                fmt_num(p.score)
            )?;
        }
        out.flush()
    }
}

const ROW_BLOCK: usize = 16;
const COL_BLOCK: usize = 256;

/// Rows of `m` centered and scaled to unit norm after applying `f`.
fn unit_rows(m: &ExpressionMatrix, f: impl Fn(f64) -> f64 + Sync, what: &str) -> Result<Vec<f64>> {
    let n = m.n_samples();
    let rows: Vec<Result<Vec<f64>>> = (0..m.n_genes())
        .into_par_iter()
        .map(|g| {
            let t: Vec<f64> = m.row(g).iter().map(|&v| f(v)).collect();
            centered_unit(&t).ok_or_else(|| {
                DcaError::Degenerate(format!("{what} of gene '{}' are constant", m.gene_ids()[g]))
            })
        })
        .collect();
    let mut flat = Vec::with_capacity(m.n_genes() * n);
    for r in rows {
        flat.extend(r?);
    }
    Ok(flat)
}

/// Fills the triangle rows `rows` of a pairwise table. Each entry is
/// `combine(<a_i, a_j>, <b_i, b_j>)` of unit rows; the block layout only
/// affects cache reuse, never the per-entry summation order.
fn fill_triangle<F>(p: usize, n: usize, a: &[f64], b: Option<&[f64]>, combine: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let mut out = vec![0.0; pair_count(p)];
    let mut chunks: Vec<(usize, usize, &mut [f64])> = Vec::new();
    let mut rest: &mut [f64] = &mut out;
    let mut start = 0;
    while start < p {
        let end = (start + ROW_BLOCK).min(p);
        let len = row_offset(p, end) - row_offset(p, start);
        let (head, tail) = rest.split_at_mut(len);
        chunks.push((start, end, head));
        rest = tail;
        start = end;
    }

    chunks.into_par_iter().for_each(|(r0, r1, block)| {
        let base = row_offset(p, r0);
        let mut jb = r0 + 1;
        while jb < p {
            let je = (jb + COL_BLOCK).min(p);
            for i in r0..r1 {
                let ai = &a[i * n..(i + 1) * n];
                let row_base = row_offset(p, i) - base;
                for j in jb.max(i + 1)..je {
                    let ra = dot(ai, &a[j * n..(j + 1) * n]);
                    let rb = match b {
                        Some(b) => dot(&b[i * n..(i + 1) * n], &b[j * n..(j + 1) * n]),
                        None => 0.0,
                    };
                    block[row_base + (j - i - 1)] = combine(ra, rb);
                }
            }
            jb = je;
        }
    });
    out
}

fn require_standardized(m: &ExpressionMatrix) -> Result<()> {
    if !m.is_standardized() {
        return Err(DcaError::InvalidParameter(
            "pairwise scoring expects a standardized matrix".into(),
        ));
    }
    if m.n_genes() < 2 {
        return Err(DcaError::Validation(
            "need at least 2 genes to form pairs".into(),
        ));
    }
    if m.n_samples() < 3 {
        return Err(DcaError::Validation(
            "need at least 3 samples for correlations".into(),
        ));
    }
    Ok(())
}

/// Liquid association coefficients for every unordered gene pair.
///
/// Runs on the current rayon pool; output is bitwise identical for any
/// thread count.
pub fn lac_matrix(m: &ExpressionMatrix, variant: LacVariant) -> Result<PairScoreTable> {
    require_standardized(m)?;
    let plain = unit_rows(m, |v| v, "values")?;
    let transformed = unit_rows(
        m,
        |v| variant.transform(v),
        &format!("{} values", variant.name()),
    )?;
    let scores = fill_triangle(
        m.n_genes(),
        m.n_samples(),
        &transformed,
        Some(&plain),
        |rt, r| rt.clamp(-1.0, 1.0) - variant.matched(r.clamp(-1.0, 1.0)),
    );
    PairScoreTable::new(m.gene_ids().to_vec(), scores, ScoreKind::Lac(variant))
}

/// Pearson correlations for every unordered gene pair.
pub fn correlation_matrix(m: &ExpressionMatrix) -> Result<PairScoreTable> {
    require_standardized(m)?;
    let plain = unit_rows(m, |v| v, "values")?;
    let scores = fill_triangle(m.n_genes(), m.n_samples(), &plain, None, |r, _| {
        r.clamp(-1.0, 1.0)
    });
    PairScoreTable::new(m.gene_ids().to_vec(), scores, ScoreKind::Correlation)
}

pub const DEFAULT_TOP_FRACTION: f64 = 0.20;

fn rank_order(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then((a.i, a.j).cmp(&(b.i, b.j)))
}

/// The `ceil(top_fraction * total)` highest-scoring pairs, best first.
/// Ties at the cutoff go to the lexicographically smaller pair.
pub fn select_top_pairs(t: &PairScoreTable, top_fraction: f64) -> Result<PairList> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(DcaError::InvalidParameter(format!(
            "top fraction {top_fraction} is outside (0, 1]"
        )));
    }
    if t.is_empty() {
        return Err(DcaError::EmptyResult("pair table is empty".into()));
    }
    let total = t.len();
    // guards against products such as 0.7 * 10 = 7.000000000000001
    let wanted = ((top_fraction * total as f64) - 1e-9).ceil().max(1.0) as usize;
    let wanted = wanted.min(total);

    let mut sorted_scores = t.scores().to_vec();
    let (_, &mut cutoff, _) =
        sorted_scores.select_nth_unstable_by(wanted - 1, |a, b| b.total_cmp(a));

    let mut picked: Vec<ScoredPair> = t
        .iter()
        .filter(|&(_, _, s)| s.total_cmp(&cutoff) == Ordering::Greater)
        .map(|(i, j, score)| ScoredPair { i, j, score })
        .collect();
    let ties = wanted - picked.len();
    picked.extend(
        t.iter()
            .filter(|&(_, _, s)| s.total_cmp(&cutoff) == Ordering::Equal)
            .take(ties)
            .map(|(i, j, score)| ScoredPair { i, j, score }),
    );
    picked.sort_by(rank_order);
    PairList::new(picked)
}
