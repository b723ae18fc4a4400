#![allow(dead_code)]

use dca_core::preprocess::{standardize, ExpressionMatrix};
use dca_core::simulate::SimRng;
use ndarray::Array2;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Two-pass textbook Pearson correlation.
pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..x.len() {
        let dx = x[k] - mx;
        let dy = y[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn naive_lac_squared(x: &[f64], y: &[f64]) -> f64 {
    let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
    let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
    let r = naive_pearson(x, y);
    naive_pearson(&x2, &y2) - r * r
}

pub fn naive_lac_absolute(x: &[f64], y: &[f64]) -> f64 {
    let xa: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let ya: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    naive_pearson(&xa, &ya) - naive_pearson(x, y).abs()
}

/// Standardized matrix of independent normal genes.
pub fn random_standardized(p: usize, n: usize, seed: u64) -> ExpressionMatrix {
    let mut rng = SimRng::new(seed);
    let rows: Vec<Vec<f64>> = (0..p).map(|_| rng.normals(n)).collect();
    standardize(&ExpressionMatrix::from_rows(&rows).unwrap()).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = SimRng::new(seed);
    Array2::from_shape_vec((rows, cols), rng.normals(rows * cols)).unwrap()
}

pub fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
    let a = random_matrix(n, n, seed);
    let t = a.t().to_owned();
    (&a + &t) * 0.5
}

/// `num / den` rounded to f64, valid far beyond the f64 exponent range of
/// the operands.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits() as i64 - num.bits() as i64 + 80;
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    q.to_f64().unwrap() * 2f64.powi(-(shift as i32))
}

/// Exact `P(X >= k)` for `X ~ Binomial(m, a / b)` in rational arithmetic.
pub fn exact_upper_tail(k: u64, m: u64, a: u64, b: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > m {
        return 0.0;
    }
    let a_big = BigUint::from(a);
    let c_big = BigUint::from(b - a);
    // walk j = m down to k so every update is an exact integer step
    let mut binom = BigUint::one();
    let mut a_pow = a_big.pow(m as u32);
    let mut c_pow = BigUint::one();
    let mut sum = BigUint::zero();
    let mut j = m;
    loop {
        sum += &binom * &a_pow * &c_pow;
        if j == k {
            break;
        }
        binom = binom * BigUint::from(j) / BigUint::from(m - j + 1);
        if a == 0 {
            break;
        }
        a_pow /= &a_big;
        c_pow *= &c_big;
        j -= 1;
    }
    ratio_to_f64(&sum, &BigUint::from(b).pow(m as u32))
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
