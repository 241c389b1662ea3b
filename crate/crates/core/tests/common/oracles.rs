//! Naive reference implementations of the evaluation metrics.

use num_complex::Complex64;

/// NMSE over interleaved `(re, im)` pairs, in complex arithmetic.
pub fn complex_nmse(est: &[f32], truth: &[f32]) -> f64 {
    let pairs = |v: &[f32]| -> Vec<Complex64> { v.chunks(2).map(|c| Complex64::new(c[0] as f64, c[1] as f64)).collect() };
    let (e, t) = (pairs(est), pairs(truth));
    let num: f64 = e.iter().zip(&t).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = t.iter().map(|b| b.norm_sqr()).sum();
    num / den
}

/// Chamfer distance from the full pairwise distance matrix.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let d: Vec<Vec<f64>> = a
        .iter()
        .map(|p| b.iter().map(|q| (0..3).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum()).collect())
        .collect();
    let row_min: f64 = d.iter().map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min)).sum::<f64>() / a.len() as f64;
    let col_min: f64 =
        (0..b.len()).map(|j| d.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).sum::<f64>() / b.len() as f64;
    row_min + col_min
}
