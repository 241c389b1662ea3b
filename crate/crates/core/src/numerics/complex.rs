//! Complex arithmetic over tensors whose trailing axis holds `[re, im]`.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn check_complex<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<()> {
    if t.shape().last() != Some(&2) {
        return Err(Error::shape(op, format!("trailing axis must be 2, shape {:?}", t.shape())));
    }
    Ok(())
}

/// Elementwise complex product.
pub fn cmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_complex(a, "cmul")?;
    a.expect_same_shape(b, "cmul")?;
    let mut out = a.clone();
    for (o, (x, y)) in out.data_mut().chunks_exact_mut(2).zip(a.data().chunks_exact(2).zip(b.data().chunks_exact(2))) {
        o[0] = x[0] * y[0] - x[1] * y[1];
        o[1] = x[0] * y[1] + x[1] * y[0];
    }
    Ok(out)
}

pub fn conj<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    check_complex(a, "conj")?;
    let mut out = a.clone();
    out.data_mut().chunks_exact_mut(2).for_each(|z| z[1] = -z[1]);
    Ok(out)
}

/// Elementwise modulus; the trailing axis is dropped.
pub fn magnitude<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    check_complex(a, "magnitude")?;
    let shape = &a.shape()[..a.rank() - 1];
    let data = a.data().chunks_exact(2).map(|z| z[0].hypot(z[1])).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Mean of `|z|^2` over all complex entries.
pub fn mean_power<T: Scalar>(a: &Tensor<T>) -> Result<f64> {
    check_complex(a, "mean_power")?;
    let n = a.len() / 2;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(a.data().iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_conjugate_and_modulus() {
        let a = Tensor::<f64>::new([2, 2], vec![1.0, 2.0, 3.0, -1.0]).unwrap();
        let b = conj(&a).unwrap();
        let p = cmul(&a, &b).unwrap();
        assert_eq!(p.data(), &[5.0, 0.0, 10.0, 0.0]);
        let m = magnitude(&a).unwrap();
        assert_eq!(m.shape(), &[2]);
        assert!((m.data()[0] - 5f64.sqrt()).abs() < 1e-15);
        assert!((mean_power(&a).unwrap() - 7.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_real_layout() {
        assert!(conj(&Tensor::<f32>::zeros([3])).is_err());
    }
}
