use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Contact rates `(alpha_i, alpha_a)` used for the transition from day `t`
/// to day `t + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RateSchedule {
    Constant { alpha_i: f64, alpha_a: f64 },
    /// One entry per day; days past the end reuse the last entry.
    Daily(Vec<(f64, f64)>),
}

impl RateSchedule {
    pub fn constant(alpha_i: f64, alpha_a: f64) -> Self {
        RateSchedule::Constant { alpha_i, alpha_a }
    }

    pub fn daily(rates: Vec<(f64, f64)>) -> Result<Self> {
        if rates.is_empty() {
            return Err(invalid("schedule", "daily schedule is empty"));
        }
        if let Some((t, _)) = rates
            .iter()
            .enumerate()
            .find(|(_, (i, a))| !(*i >= 0.0 && *a >= 0.0 && i.is_finite() && a.is_finite()))
        {
            return Err(invalid("schedule", format!("day {t} has a negative or non-finite rate")));
        }
        Ok(RateSchedule::Daily(rates))
    }

    pub fn rates_at(&self, t: usize) -> (f64, f64) {
        match self {
            RateSchedule::Constant { alpha_i, alpha_a } => (*alpha_i, *alpha_a),
            RateSchedule::Daily(v) => v[t.min(v.len() - 1)],
        }
    }
}
