use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::task::{InputMode, TaskKind};
use crate::error::{Error, Result};
use crate::heads::HeadKind;

pub const CSV_HEADER: &str =
    "task,input_mode,head,snr_db,velocity_kmh,seed,metric_name,metric_value,params,train_ms_per_batch,infer_ms_per_batch";

/// One metric of one experiment cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub task: TaskKind,
    pub input_mode: InputMode,
    pub head: HeadKind,
    pub snr_db: Option<f64>,
    pub velocity_kmh: Option<f64>,
    pub seed: u64,
    pub metric_name: String,
    pub metric_value: f64,
    pub params: usize,
    pub train_ms_per_batch: Option<f64>,
    pub infer_ms_per_batch: Option<f64>,
}

impl MetricRecord {
    fn sort_key(&self) -> (TaskKind, InputMode, &'static str, u64, u64, u64, &str) {
        let f = |x: Option<f64>| x.map_or(0, |v| v.to_bits() ^ (1 << 63));
        (self.task, self.input_mode, self.head.name(), f(self.snr_db), f(self.velocity_kmh), self.seed, &self.metric_name)
    }

    fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.task.name(),
            self.input_mode.name(),
            self.head.name(),
            opt(self.snr_db),
            opt(self.velocity_kmh),
            self.seed,
            self.metric_name,
            self.metric_value,
            self.params,
            opt(self.train_ms_per_batch),
            opt(self.infer_ms_per_batch),
        )
    }
}

/// Metrics of a run plus the hash of the configuration that produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<MetricRecord>,
    pub config_hash: String,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        match self.records.iter().find(|r| !r.metric_value.is_finite()) {
            Some(r) => Err(Error::NonFinite(format!("metric {} of {} {}", r.metric_name, r.task.name(), r.input_mode.name()))),
            None => Ok(()),
        }
    }

    /// Order records canonically so assembly order does not matter.
    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    pub fn merge(&mut self, other: EvalReport) {
        self.records.extend(other.records);
    }

    /// Mean of `metric` over records passing `keep`.
    pub fn mean(&self, metric: &str, keep: impl Fn(&MetricRecord) -> bool) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter(|r| r.metric_name == metric && keep(r)).map(|r| r.metric_value).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }

    /// Write the CSV to `path` and the config hash to `path.meta`.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let meta = meta_path(path);
        std::fs::write(&meta, format!("config_hash={}\n", self.config_hash)).map_err(|e| Error::io(&meta, e))
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

/// SHA-256 of the TOML serialisation of `cfg`, hex encoded.
pub fn config_hash<C: Serialize + ?Sized>(cfg: &C) -> Result<String> {
    let text = toml::to_string(cfg).map_err(|e| Error::InvalidConfig(format!("cannot serialise config: {e}")))?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, value: f64) -> MetricRecord {
        MetricRecord {
            task: TaskKind::Estimation,
            input_mode: InputMode::Raw,
            head: HeadKind::ResCnn1d,
            snr_db: Some(-5.0),
            velocity_kmh: None,
            seed,
            metric_name: "nmse".into(),
            metric_value: value,
            params: 10,
            train_ms_per_batch: None,
            infer_ms_per_batch: Some(1.5),
        }
    }

    #[test]
    fn csv_layout() {
        let r = EvalReport { records: vec![record(1, 0.25)], config_hash: "x".into() };
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\nestimation,raw,rescnn1d,-5,,1,nmse,0.25,10,,1.5\n"));
    }

    #[test]
    fn sorting_ignores_assembly_order() {
        let mut a = EvalReport { records: vec![record(2, 0.1), record(1, 0.2)], config_hash: String::new() };
        let mut b = EvalReport { records: vec![record(1, 0.2), record(2, 0.1)], config_hash: String::new() };
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(a.mean("nmse", |_| true), Some(0.15000000000000002));
    }

    #[test]
    fn non_finite_metric_rejected() {
        assert!(EvalReport { records: vec![record(0, f64::NAN)], config_hash: String::new() }.validate().is_err());
    }
}
