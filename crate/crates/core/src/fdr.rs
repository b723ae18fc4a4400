//! Empirical-null local false discovery rates for liquid association scores.
//!
//! The scores of all candidate pairs against one component are modelled as a
//! two-group mixture `f = π₀ f₀ + (1 - π₀) f₁` whose null `f₀` is a split
//! normal centred on the mode of `f`. The marginal `f` is a Gaussian kernel
//! density on a fixed grid; the null scales come from where `f` drops to
//! `e^{-1/2}` of its peak on either side of the mode.

use std::f64::consts::{FRAC_2_PI, PI};
use std::io::Write;

use rayon::prelude::*;

use crate::dca::{DynamicComponent, ProductMatrix};
use crate::error::{DcaError, Result};
use crate::format::fmt_num;
use crate::stats::{self, quantile_sorted, standardized};

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_MIN_SCORES: usize = 200;
pub const DEFAULT_FDR_THRESHOLD: f64 = 0.01;

/// Floor applied to the marginal density before dividing by it.
const DENSITY_FLOOR: f64 = 1e-12;
/// Median of the standard half-normal, `Φ⁻¹(0.75)`.
const HALF_NORMAL_MEDIAN: f64 = 0.674_489_750_196_081_7;

/// A density tabulated on an evenly spaced grid, linear in between and zero
/// outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl GridDensity {
    pub fn x(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.start) / self.step;
        let last = self.values.len() - 1;
        if pos.is_nan() || pos < 0.0 || pos > last as f64 {
            return 0.0;
        }
        let k = (pos.floor() as usize).min(last - 1);
        let t = pos - k as f64;
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }
}

/// Gaussian kernel density with Silverman's bandwidth
/// `0.9 min(sd, IQR/1.34) N^{-1/5}`, on `grid_points` points spanning the data
/// padded by three bandwidths.
pub fn kernel_density(scores: &[f64], grid_points: usize) -> Result<GridDensity> {
    if grid_points < 3 {
        return Err(DcaError::InvalidParameter(
            "density grid needs at least 3 points".into(),
        ));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let sd = stats::sample_sd(&sorted);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bandwidth = 0.9 * spread * n.powf(-0.2);
    if !bandwidth.is_finite() || bandwidth <= 0.0 {
        return Err(DcaError::Degenerate("scores have no spread".into()));
    }
    let start = sorted[0] - 3.0 * bandwidth;
    let stop = sorted[sorted.len() - 1] + 3.0 * bandwidth;
    let step = (stop - start) / (grid_points - 1) as f64;
    let norm = 1.0 / (n * bandwidth * (2.0 * PI).sqrt());
    let values = (0..grid_points)
        .into_par_iter()
        .map(|k| {
            let x = start + k as f64 * step;
            // only kernels within 10 bandwidths contribute at double precision
            let lo = sorted.partition_point(|&s| s < x - 10.0 * bandwidth);
            let hi = sorted.partition_point(|&s| s <= x + 10.0 * bandwidth);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|&s| {
                    let u = (x - s) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect();
    Ok(GridDensity {
        start,
        step,
        values,
        bandwidth,
    })
}

/// Which null scale had to fall back to the half-sample quantile match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitDiagnostics {
    pub left_fallback: bool,
    pub right_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdrModel {
    pub mode: f64,
    pub sigma_left: f64,
    pub sigma_right: f64,
    pub pi0: f64,
    pub marginal: GridDensity,
    pub score_range: (f64, f64),
    pub n_scores: usize,
    pub diagnostics: FitDiagnostics,
}

/// Split-normal density with mode `mode` and side scales `left`, `right`.
pub fn split_normal_pdf(x: f64, mode: f64, left: f64, right: f64) -> f64 {
    let c = FRAC_2_PI.sqrt() / (left + right);
    let s = if x <= mode { left } else { right };
    let u = (x - mode) / s;
    c * (-0.5 * u * u).exp()
}

impl FdrModel {
    pub fn null_density(&self, x: f64) -> f64 {
        split_normal_pdf(x, self.mode, self.sigma_left, self.sigma_right)
    }

    pub fn marginal_density(&self, x: f64) -> f64 {
        self.marginal.eval(x)
    }

    /// `min(1, π₀ f₀(x) / f(x))`.
    pub fn local_fdr(&self, x: f64) -> f64 {
        let f = self.marginal_density(x).max(DENSITY_FLOOR);
        (self.pi0 * self.null_density(x) / f).clamp(0.0, 1.0)
    }
}

pub fn local_fdr(score: f64, model: &FdrModel) -> f64 {
    model.local_fdr(score)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub grid_points: usize,
    pub min_scores: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            min_scores: DEFAULT_MIN_SCORES,
        }
    }
}

/// Distance from the mode to where the density first falls to `level`,
/// walking outward; linear interpolation between grid points.
fn level_crossing(
    density: &GridDensity,
    mode_idx: usize,
    level: f64,
    leftward: bool,
) -> Option<f64> {
    let f = &density.values;
    if leftward {
        (0..mode_idx).rev().find(|&k| f[k] <= level).map(|k| {
            let t = (level - f[k]) / (f[k + 1] - f[k]);
            let x = density.x(k) + t * density.step;
            density.x(mode_idx) - x
        })
    } else {
        (mode_idx + 1..f.len()).find(|&k| f[k] <= level).map(|k| {
            let t = (f[k - 1] - level) / (f[k - 1] - f[k]);
            let x = density.x(k - 1) + t * density.step;
            x - density.x(mode_idx)
        })
    }
}

/// Scale from the median distance to the mode of the scores on one side.
fn half_sample_scale(scores: &[f64], mode: f64, leftward: bool) -> Option<f64> {
    let mut d: Vec<f64> = scores
        .iter()
        .filter(|&&s| if leftward { s <= mode } else { s > mode })
        .map(|&s| (s - mode).abs())
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let sigma = quantile_sorted(&d, 0.5) / HALF_NORMAL_MEDIAN;
    (sigma > 0.0).then_some(sigma)
}

/// Fits the split-normal empirical null to a set of scores.
pub fn fit_null(scores: &[f64], options: &FitOptions) -> Result<FdrModel> {
    if scores.len() < options.min_scores.max(2) {
        return Err(DcaError::Validation(format!(
            "{} scores are too few for a reliable null fit (need {})",
            scores.len(),
            options.min_scores
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(DcaError::Validation("scores must be finite".into()));
    }
    let marginal = kernel_density(scores, options.grid_points)?;
    let mut mode_idx = 0;
    for (k, &v) in marginal.values.iter().enumerate() {
        if v > marginal.values[mode_idx] {
            mode_idx = k;
        }
    }
    let mode = marginal.x(mode_idx);
    let peak = marginal.values[mode_idx];
    let level = peak * (-0.5f64).exp();

    let mut diagnostics = FitDiagnostics::default();
    let side = |leftward: bool, flag: &mut bool| -> Result<f64> {
        match level_crossing(&marginal, mode_idx, level, leftward) {
            Some(s) if s > 0.0 => Ok(s),
            _ => {
                *flag = true;
                half_sample_scale(scores, mode, leftward)
                    .ok_or_else(|| DcaError::Degenerate("no scores on one side of the mode".into()))
            }
        }
    };
    let mut left_flag = false;
    let mut right_flag = false;
    let sigma_left = side(true, &mut left_flag)?;
    let sigma_right = side(false, &mut right_flag)?;
    diagnostics.left_fallback = left_flag;
    diagnostics.right_fallback = right_flag;
    if diagnostics.left_fallback || diagnostics.right_fallback {
        log::warn!("null fit fell back to half-sample quantiles ({diagnostics:?})");
    }

    let f0_mode = split_normal_pdf(mode, mode, sigma_left, sigma_right);
    let pi0 = (peak / f0_mode).min(1.0);
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| {
            (a.min(s), b.max(s))
        });
    Ok(FdrModel {
        mode,
        sigma_left,
        sigma_right,
        pi0,
        marginal,
        score_range: (lo, hi),
        n_scores: scores.len(),
        diagnostics,
    })
}

/// Liquid association scores of every row of `b` against `z`, i.e. `B z̃ / n`.
pub fn pair_la_scores(b: &ProductMatrix, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != b.n_samples() {
        return Err(DcaError::InvalidParameter(format!(
            "component has {} entries but the product matrix has {} samples",
            z.len(),
            b.n_samples()
        )));
    }
    let zt = standardized(z)
        .ok_or_else(|| DcaError::Degenerate("scouting vector is constant".into()))?;
    let n = b.n_samples() as f64;
    Ok(b.mul_vec(&zt).into_iter().map(|v| v / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdrPair {
    pub i: usize,
    pub j: usize,
    pub la_score: f64,
    pub fdr: f64,
}

#[derive(Debug, Clone)]
pub struct FdrSelection {
    pub model: FdrModel,
    pub scores: Vec<f64>,
    pub selected: Vec<FdrPair>,
}

/// Pairs of `b` whose local fdr against `z` is below `threshold`, sorted by
/// ascending fdr then descending absolute score.
pub fn select_pairs_by_fdr(
    b: &ProductMatrix,
    z: &DynamicComponent,
    threshold: f64,
    options: &FitOptions,
) -> Result<FdrSelection> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DcaError::InvalidParameter(format!(
            "fdr threshold {threshold} is outside (0, 1]"
        )));
    }
    let scores = pair_la_scores(b, &z.scores)?;
    let model = fit_null(&scores, options)?;
    let mut selected: Vec<FdrPair> = scores
        .iter()
        .zip(b.pairs())
        .filter_map(|(&s, &(i, j))| {
            let fdr = model.local_fdr(s);
            (fdr < threshold).then_some(FdrPair {
                i,
                j,
                la_score: s,
                fdr,
            })
        })
        .collect();
    selected.sort_by(|a, b| {
        a.fdr
            .total_cmp(&b.fdr)
            .then(b.la_score.abs().total_cmp(&a.la_score.abs()))
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    });
    Ok(FdrSelection {
        model,
        scores,
        selected,
    })
}

pub fn write_selected<W: Write>(
    gene_ids: &[String],
    pairs: &[FdrPair],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "gene_i\tgene_j\tla_score\tfdr")?;
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            gene_ids[p.i],
            gene_ids[p.j],
            fmt_num(p.la_score),
            fmt_num(p.fdr)
        )?;
    }
    out.flush()
}
