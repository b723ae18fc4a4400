//! Dense symmetric eigendecomposition with a deterministic ordering and sign.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{DcaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Relative asymmetry accepted before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Flips `v` so its largest-magnitude entry is positive (first one on ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn check_symmetric(s: &Array2<f64>) -> Result<usize> {
    let (r, c) = s.dim();
    if r != c {
        return Err(DcaError::Validation(format!(
            "matrix is {r}x{c}, not square"
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(DcaError::Validation(
            "matrix holds non-finite values".into(),
        ));
    }
    let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..r {
        for j in i + 1..r {
            if (s[[i, j]] - s[[j, i]]).abs() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(DcaError::Validation(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    s[[i, j]],
                    s[[j, i]]
                )));
            }
        }
    }
    Ok(r)
}

/// All eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eigen(s: &Array2<f64>) -> Result<Vec<EigenPair>> {
    let n = check_symmetric(s)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    // symmetrize so tiny asymmetries do not leak in
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (s[[i, j]] + s[[j, i]]));
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| DcaError::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .map(|k| {
            let mut vector: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            fix_sign(&mut vector);
            EigenPair {
                value: eig.eigenvalues[k],
                vector,
            }
        })
        .collect())
}

/// The `k` largest eigenpairs of a symmetric matrix, unit length, sign fixed.
pub fn eigendecompose(s: &Array2<f64>, k: usize) -> Result<Vec<EigenPair>> {
    let n = s.nrows();
    if k == 0 || k > n {
        return Err(DcaError::InvalidParameter(format!(
            "requested {k} eigenpairs from a {n}x{n} matrix"
        )));
    }
    let mut all = symmetric_eigen(s)?;
    all.truncate(k);
    Ok(all)
}
