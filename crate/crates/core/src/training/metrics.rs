use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;

pub const METRICS_HEADER: &str = "epoch,split,metric,value";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Per-epoch metrics in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsHistory {
    records: Vec<MetricRecord>,
}

impl MetricsHistory {
    pub fn push(&mut self, epoch: usize, split: &str, metric: &str, value: f64) {
        self.records.push(MetricRecord {
            epoch,
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, epoch: usize, split: &str, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.epoch == epoch && r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    /// Values of one series ordered by epoch.
    pub fn series(&self, split: &str, metric: &str) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| (r.epoch, r.value))
            .collect()
    }

    pub fn last_epoch(&self) -> Option<usize> {
        self.records.iter().map(|r| r.epoch).max()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.split, r.metric, format_g9(r.value));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Renders like C's `%.9g`: nine significant digits, trailing zeros
/// dropped, scientific notation outside `1e-4 ≤ |v| < 1e9`.
pub fn format_g9(v: f64) -> String {
    const DIGITS: i32 = 9;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    } else {
        trim_fraction(&format!("{:.*}", (DIGITS - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
