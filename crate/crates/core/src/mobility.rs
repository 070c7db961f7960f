//! Contact rates modulated by a normalized daily outflow covariate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, EpiError, Result};
use crate::schedule::RateSchedule;

/// Raw outflow counts and their standardized version `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutflowSeries {
    pub raw: Vec<f64>,
    pub f: Vec<f64>,
    /// Statistics used for the standardization.
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes with the population mean and standard deviation.
pub fn normalize_flow(raw: &[f64]) -> Result<OutflowSeries> {
    normalize_flow_window(raw, raw.len())
}

/// Standardizes the whole series with statistics of the first `train_len`
/// values only.
pub fn normalize_flow_window(raw: &[f64], train_len: usize) -> Result<OutflowSeries> {
    if train_len < 2 || train_len > raw.len() {
        return Err(EpiError::SeriesTooShort {
            needed: 2.max(train_len),
            got: raw.len().min(train_len),
        });
    }
    if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(invalid("outflow", format!("value {v} at position {i}")));
    }
    let (mean, std) = mean_std(&raw[..train_len]);
    if std == 0.0 {
        return Err(invalid("outflow", "constant series has zero standard deviation"));
    }
    Ok(OutflowSeries {
        raw: raw.to_vec(),
        f: raw.iter().map(|x| (x - mean) / std).collect(),
        mean,
        std,
    })
}

/// Trailing moving average; the first days average what is available.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= w {
            acc -= xs[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateForm {
    /// `alpha_phi * (1 + gamma * f)`.
    #[default]
    Linear,
    /// `alpha_phi * 2 / (1 + exp(-gamma * f))`, bounded by `2 alpha_phi`.
    Logistic,
}

impl RateForm {
    fn apply(self, base: f64, gamma: f64, f: f64) -> f64 {
        match self {
            RateForm::Linear => base * (1.0 + gamma * f),
            RateForm::Logistic => base * 2.0 / (1.0 + (-gamma * f).exp()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityRateSpec {
    /// `(alpha_i, alpha_a)` per phase of the intervention schedule.
    pub base: Vec<(f64, f64)>,
    pub gamma_i: f64,
    pub gamma_a: f64,
    pub form: RateForm,
}

impl MobilityRateSpec {
    /// Checks rates and, for the linear form, that no rate goes negative over
    /// the range of `f`.
    pub fn new(base: Vec<(f64, f64)>, gamma_i: f64, gamma_a: f64, form: RateForm, f: &OutflowSeries) -> Result<Self> {
        let spec = Self {
            base,
            gamma_i,
            gamma_a,
            form,
        };
        spec.validate(f)?;
        Ok(spec)
    }

    pub fn validate(&self, f: &OutflowSeries) -> Result<()> {
        if self.base.is_empty() {
            return Err(invalid("base", "at least one phase needed"));
        }
        for (name, g) in [("gamma_i", self.gamma_i), ("gamma_a", self.gamma_a)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid(name, format!("{g} must be nonnegative")));
            }
        }
        for &(ai, aa) in &self.base {
            if !(ai >= 0.0 && aa >= 0.0) {
                return Err(invalid("base", format!("negative base rate ({ai}, {aa})")));
            }
        }
        if self.form == RateForm::Linear {
            let fmin = f.f.iter().copied().fold(f64::INFINITY, f64::min);
            for (name, g) in [("gamma_i", self.gamma_i), ("gamma_a", self.gamma_a)] {
                if 1.0 + g * fmin < 0.0 {
                    return Err(invalid(
                        name,
                        format!("linear rate goes negative at f = {fmin} (gamma {g})"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn rates(&self, phase: usize, f: f64) -> (f64, f64) {
        let (ai, aa) = self.base[phase];
        (
            self.form.apply(ai, self.gamma_i, f),
            self.form.apply(aa, self.gamma_a, f),
        )
    }
}

/// Phase index per day from sorted breakpoints: phase `k` starts on day
/// `breakpoints[k-1]`.
pub fn phases_from_breakpoints(breakpoints: &[usize], days: usize) -> Vec<usize> {
    (0..days)
        .map(|t| breakpoints.iter().take_while(|&&b| t >= b).count())
        .collect()
}

/// Daily rates `(alpha_i(t), alpha_a(t))` from the phase of each day and the
/// standardized outflow.
pub fn contact_rate_series(spec: &MobilityRateSpec, phase_of_day: &[usize], f: &OutflowSeries) -> Result<Vec<(f64, f64)>> {
    contact_rate_series_with(phase_of_day, f, |phase, x| spec.rates(phase, x), spec.base.len())
}

/// As [`contact_rate_series`] with an arbitrary rate map `F(phase, f)`.
pub fn contact_rate_series_with<F>(
    phase_of_day: &[usize],
    f: &OutflowSeries,
    rate: F,
    phases: usize,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(usize, f64) -> (f64, f64),
{
    if phase_of_day.len() > f.f.len() {
        return Err(EpiError::SeriesTooShort {
            needed: phase_of_day.len(),
            got: f.f.len(),
        });
    }
    phase_of_day
        .iter()
        .zip(&f.f)
        .enumerate()
        .map(|(t, (&phase, &x))| {
            if phase >= phases {
                return Err(invalid("phase_of_day", format!("day {t} has unknown phase {phase}")));
            }
            let (ai, aa) = rate(phase, x);
            if !(ai >= 0.0 && aa >= 0.0) {
                return Err(invalid("rate", format!("day {t}: ({ai}, {aa})")));
            }
            Ok((ai, aa))
        })
        .collect()
}

pub fn mobility_schedule(spec: &MobilityRateSpec, phase_of_day: &[usize], f: &OutflowSeries) -> Result<RateSchedule> {
    RateSchedule::daily(contact_rate_series(spec, phase_of_day, f)?)
}
