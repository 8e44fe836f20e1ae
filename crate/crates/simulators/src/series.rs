use serde::{Deserialize, Serialize};

/// Named summary statistics of one simulated or observed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub schema: Vec<String>,
    /// Set when a numerical guard (log of a non-positive value, zero
    /// variance) was applied.
    #[serde(default)]
    pub flagged: bool,
}

impl SummaryVector {
    pub fn new(values: Vec<f64>, schema: &[&str]) -> Self {
        debug_assert_eq!(values.len(), schema.len());
        Self {
            values,
            schema: schema.iter().map(|s| s.to_string()).collect(),
            flagged: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Population trajectory sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub dt: f64,
    /// Simulation stopped early at a hard cap; the last state was held.
    #[serde(default)]
    pub truncated: bool,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divides by `n`).
pub(crate) fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
