use crate::error::{Error, Result};
use crate::heads::PointCloud;
use crate::numerics::Tensor;

/// `||estimate - truth||^2 / ||truth||^2`.
pub fn nmse(estimate: &Tensor<f32>, truth: &Tensor<f32>) -> Result<f64> {
    nmse_slices(estimate.data(), truth.data())
}

pub fn nmse_slices(estimate: &[f32], truth: &[f32]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::shape("nmse", format!("{} vs {} elements", estimate.len(), truth.len())));
    }
    let (mut err, mut pow) = (0.0f64, 0.0f64);
    for (&e, &t) in estimate.iter().zip(truth) {
        let (e, t) = (e as f64, t as f64);
        err += (e - t) * (e - t);
        pow += t * t;
    }
    if pow == 0.0 {
        return Err(Error::Contract("nmse of a zero-power truth".into()));
    }
    Ok(err / pow)
}

/// Mean of per-sample NMSE.
pub fn nmse_batch(estimates: &[Tensor<f32>], truths: &[Tensor<f32>]) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::Contract(format!("{} estimates for {} truths", estimates.len(), truths.len())));
    }
    let mut s = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        s += nmse(e, t)?;
    }
    Ok(s / estimates.len() as f64)
}

fn nearest_mean(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut s = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            best = best.min(d);
        }
        s += best;
    }
    s / a.len() as f64
}

/// Symmetric Chamfer distance with squared Euclidean distances, mean per direction.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("chamfer distance of an empty cloud".into()));
    }
    Ok(nearest_mean(&a.points, &b.points) + nearest_mean(&b.points, &a.points))
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `logits [B, C]` whose argmax equals the label.
pub fn accuracy(logits: &Tensor<f32>, labels: &[usize]) -> Result<f64> {
    let (b, c) = logits.rows_cols();
    if logits.rank() != 2 || b != labels.len() || b == 0 || c == 0 {
        return Err(Error::shape("accuracy", format!("logits {:?} for {} labels", logits.shape(), labels.len())));
    }
    let hits = logits.data().chunks_exact(c).zip(labels).filter(|(row, &l)| argmax(row) == l).count();
    Ok(hits as f64 / b as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_identities() {
        let h = Tensor::from_fn([4, 2], |i| i as f32 - 3.5);
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert_eq!(nmse(&Tensor::zeros([4, 2]), &h).unwrap(), 1.0);
        assert!(nmse(&h, &Tensor::zeros([4, 2])).is_err());
    }

    #[test]
    fn chamfer_unit_pair() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_cases() {
        let perfect = Tensor::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(accuracy(&perfect, &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&perfect, &[1, 0]).unwrap(), 0.0);
        let tie = Tensor::new([1, 3], vec![2.0, 2.0, 1.0]).unwrap();
        assert_eq!(accuracy(&tie, &[0]).unwrap(), 1.0);
    }
}
