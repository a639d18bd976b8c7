use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and sample standard deviation of one metric over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Uses the `n − 1` denominator; zero for a single run.
    pub stddev: f64,
    /// Set when fewer than two runs make the deviation meaningless.
    pub degenerate: bool,
}

impl RunStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("no runs to summarise"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (stddev, degenerate) = if values.len() < 2 {
            (0.0, true)
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            ((ss / (n - 1.0)).sqrt(), false)
        };
        Ok(RunStats {
            values,
            mean,
            stddev,
            degenerate,
        })
    }
}
