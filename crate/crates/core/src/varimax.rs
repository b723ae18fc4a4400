//! Orthogonal varimax rotation by cyclic planar rotations.
//!
//! Each planar step rotates one pair of columns by the angle that maximizes
//! the criterion for that pair, so the criterion never decreases.

use ndarray::Array2;

use crate::eigen::fix_sign;

pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    /// `loadings * rotation`, column signs fixed.
    pub rotated: Array2<f64>,
    /// Orthogonal `k x k` rotation.
    pub rotation: Array2<f64>,
    /// Criterion before the first sweep and after each sweep.
    pub criterion_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Sum over columns of the population variance of squared loadings.
pub fn varimax_criterion(loadings: &Array2<f64>) -> f64 {
    let n = loadings.nrows() as f64;
    loadings
        .columns()
        .into_iter()
        .map(|col| {
            let sq: Vec<f64> = col.iter().map(|v| v * v).collect();
            let mean = sq.iter().sum::<f64>() / n;
            sq.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n
        })
        .sum()
}

/// Angle that maximizes the two-column criterion when rotating `(a, b)` to
/// `(a cos t + b sin t, -a sin t + b cos t)`.
fn planar_angle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut su, mut sv, mut suv, mut suu_vv) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let u = x * x - y * y;
        let v = 2.0 * x * y;
        su += u;
        sv += v;
        suu_vv += u * u - v * v;
        suv += u * v;
    }
    let num = 2.0 * suv - 2.0 * su * sv / n;
    let den = suu_vv - (su * su - sv * sv) / n;
    num.atan2(den) / 4.0
}

fn rotate_columns(m: &mut Array2<f64>, j: usize, k: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    for mut row in m.rows_mut() {
        let (x, y) = (row[j], row[k]);
        row[j] = x * c + y * s;
        row[k] = -x * s + y * c;
    }
}

/// Rotates the columns of `loadings` to maximize the varimax criterion.
///
/// Stops when a full sweep gains less than `tol` relative to the current
/// criterion or after `max_iter` sweeps. A single column is returned as is.
pub fn varimax(loadings: &Array2<f64>, max_iter: usize, tol: f64) -> VarimaxResult {
    let k = loadings.ncols();
    let mut rotated = loadings.clone();
    let mut rotation = Array2::<f64>::eye(k);
    let mut trace = vec![varimax_criterion(&rotated)];
    let mut converged = k < 2;
    let mut sweeps = 0;

    while !converged && sweeps < max_iter {
        sweeps += 1;
        for j in 0..k {
            for l in j + 1..k {
                let a: Vec<f64> = rotated.column(j).to_vec();
                let b: Vec<f64> = rotated.column(l).to_vec();
                let angle = planar_angle(&a, &b);
                if angle.abs() < 1e-15 {
                    continue;
                }
                let before = pair_criterion(&a, &b);
                rotate_columns(&mut rotated, j, l, angle);
                let after =
                    pair_criterion(&rotated.column(j).to_vec(), &rotated.column(l).to_vec());
                if after < before {
                    // numerically flat direction; undo
                    rotate_columns(&mut rotated, j, l, -angle);
                    continue;
                }
                rotate_columns(&mut rotation, j, l, angle);
            }
        }
        let current = varimax_criterion(&rotated);
        let gain = current - trace.last().copied().unwrap_or(0.0);
        trace.push(current);
        if gain <= tol * current.abs().max(f64::MIN_POSITIVE) {
            converged = true;
        }
    }

    for c in 0..k {
        let mut col = rotated.column(c).to_vec();
        let before = col.clone();
        fix_sign(&mut col);
        if col != before {
            rotated.column_mut(c).iter_mut().for_each(|v| *v = -*v);
            rotation.column_mut(c).iter_mut().for_each(|v| *v = -*v);
        }
    }

    VarimaxResult {
        rotated,
        rotation,
        criterion_trace: trace,
        sweeps,
        converged,
    }
}

fn pair_criterion(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let var_sq = |x: &[f64]| {
        let mean = x.iter().map(|v| v * v).sum::<f64>() / n;
        x.iter().map(|v| (v * v - mean).powi(2)).sum::<f64>() / n
    };
    var_sq(a) + var_sq(b)
}
