use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Analytic-vs-numeric comparison for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

/// Below this infinity norm a gradient counts as zero and errors are absolute.
pub const GRADIENT_FLOOR: f64 = 1e-5;

/// Relative error between two gradient tensors, normalised by the larger
/// of their infinity norms (at least [`GRADIENT_FLOOR`]).
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(GRADIENT_FLOOR)
}

/// Compare the analytic gradient of a scalar record against central
/// differences with step `step`, for every bound parameter.
pub fn finite_difference_check(g: &Graph<f64>, output: Var, step: f64, tolerance: f64) -> Result<GradCheckReport> {
    if g.value(output).len() != 1 {
        return Err(Error::Contract(format!(
            "finite-difference check needs a scalar output, got shape {:?}",
            g.value(output).shape()
        )));
    }
    let table = g.backward(output, &Tensor::scalar(1.0))?;
    let mut params: Vec<(&str, Var)> = g.bound_params().collect();
    params.sort();
    let mut report = GradCheckReport::default();
    for (name, v) in params {
        let base = g.value(v).clone();
        let analytic: Vec<f64> = match table.wrt(v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; base.len()],
        };
        let mut numeric = Vec::with_capacity(base.len());
        let mut probe = base.clone();
        for i in 0..base.len() {
            let x0 = base.data()[i];
            probe.data_mut()[i] = x0 + step;
            let fp = g.replay(output, &[(v, &probe)])?.data()[0];
            probe.data_mut()[i] = x0 - step;
            let fm = g.replay(output, &[(v, &probe)])?.data()[0];
            probe.data_mut()[i] = x0;
            numeric.push((fp - fm) / (2.0 * step));
        }
        let err = relative_error(&analytic, &numeric);
        report.params.push(ParamCheck { name: name.to_string(), max_rel_error: err, passed: err <= tolerance });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamStore;

    #[test]
    fn zero_parameter_record_passes_with_empty_report() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn([3], |i| i as f64));
        let s = g.sum(x).unwrap();
        let r = finite_difference_check(&g, s, 1e-4, 1e-6).unwrap();
        assert!(r.params.is_empty());
        assert!(r.passed());
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::zeros([2])).unwrap();
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        assert!(finite_difference_check(&g, w, 1e-4, 1e-6).is_err());
    }
}
