//! Small numeric kernels shared by the pairwise statistics.

use crate::error::{DcaError, Result};

/// Relative sum-of-squares floor below which a vector is treated as constant.
const CONSTANT_REL_SS: f64 = 1e-24;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

/// Dot product with a fixed four-lane summation order.
///
/// The order depends only on the slice length, so results are bitwise
/// reproducible no matter which thread evaluates them.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Centers `x` and scales it to unit Euclidean norm.
///
/// Returns `None` when `x` is constant up to rounding.
pub fn centered_unit(x: &[f64]) -> Option<Vec<f64>> {
    let m = mean(x);
    let mut out: Vec<f64> = x.iter().map(|v| v - m).collect();
    let ss: f64 = out.iter().map(|v| v * v).sum();
    let raw_ss: f64 = x.iter().map(|v| v * v).sum();
    if ss.partial_cmp(&(CONSTANT_REL_SS * raw_ss)) != Some(std::cmp::Ordering::Greater) || ss == 0.0
    {
        return None;
    }
    let norm = ss.sqrt();
    out.iter_mut().for_each(|v| *v /= norm);
    Some(out)
}

/// Returns `(x - mean) / sd` using the `n - 1` denominator, or `None` for a constant vector.
pub fn standardized(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let unit = centered_unit(x)?;
    let scale = ((n - 1) as f64).sqrt();
    Some(unit.into_iter().map(|v| v * scale).collect())
}

/// Pearson sample correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(DcaError::InvalidParameter(format!(
            "vector lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(DcaError::InvalidParameter(format!(
            "pearson correlation needs at least 3 observations, got {}",
            x.len()
        )));
    }
    let ux = centered_unit(x)
        .ok_or_else(|| DcaError::Degenerate("correlation with a constant vector".into()))?;
    let uy = centered_unit(y)
        .ok_or_else(|| DcaError::Degenerate("correlation with a constant vector".into()))?;
    Ok(dot(&ux, &uy).clamp(-1.0, 1.0))
}

/// Quantile by linear interpolation between order statistics of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_hand_values() {
        assert!((pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-15);
        // covariance sum 4 over variance sums 5 and 5
        let r = pearson(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_rejects_constant_and_short_input() {
        assert!(matches!(
            pearson(&[1., 1., 1.], &[1., 2., 3.]),
            Err(DcaError::Degenerate(_))
        ));
        assert!(pearson(&[1., 2.], &[2., 1.]).is_err());
        assert!(pearson(&[1., 2., 3.], &[2., 1.]).is_err());
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
