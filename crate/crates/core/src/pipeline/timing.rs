use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wall-clock statistics of a repeated operation, in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub iters: usize,
}

/// Run `op` `warmup` times untimed, then `iters` times timed.
pub fn timing_probe(mut op: impl FnMut() -> Result<()>, warmup: usize, iters: usize) -> Result<TimingStats> {
    if iters == 0 {
        return Err(Error::Contract("timing_probe needs at least one iteration".into()));
    }
    for _ in 0..warmup {
        op()?;
    }
    let mut ms = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        op()?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    Ok(TimingStats { median_ms: quantile(&ms, 0.5), iqr_ms: quantile(&ms, 0.75) - quantile(&ms, 0.25), iters })
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
