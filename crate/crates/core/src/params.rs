//! Disease parameters, phase-duration laws and the canonical state layout.
//!
//! A state vector holds, for each timed phase `E, P, I1, A, I2` (in that
//! order), `h` counters indexed by the number of days already spent in the
//! phase, followed by a single slot for the day's new hospitalizations.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, EpiError, Result};

pub const DEFAULT_HORIZON: usize = 25;
const PMF_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    E,
    P,
    I1,
    A,
    I2,
    H,
}

impl Phase {
    /// Phases with a duration law, in state-vector block order.
    pub const TIMED: [Phase; 5] = [Phase::E, Phase::P, Phase::I1, Phase::A, Phase::I2];

    pub fn label(self) -> &'static str {
        match self {
            Phase::E => "E",
            Phase::P => "P",
            Phase::I1 => "I1",
            Phase::A => "A",
            Phase::I2 => "I2",
            Phase::H => "H",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "E" => Some(Phase::E),
            "P" => Some(Phase::P),
            "I1" => Some(Phase::I1),
            "A" => Some(Phase::A),
            "I2" => Some(Phase::I2),
            "H" => Some(Phase::H),
            _ => None,
        }
    }

    /// Block position in the state layout (H is the trailing slot).
    pub fn block(self) -> usize {
        match self {
            Phase::E => 0,
            Phase::P => 1,
            Phase::I1 => 2,
            Phase::A => 3,
            Phase::I2 => 4,
            Phase::H => 5,
        }
    }

    /// Asymptomatic-rate spreaders (prodromic and asymptomatic).
    pub fn spreads_at_asymptomatic_rate(self) -> bool {
        matches!(self, Phase::P | Phase::A)
    }

    /// Symptomatic-rate spreaders.
    pub fn spreads_at_symptomatic_rate(self) -> bool {
        matches!(self, Phase::I1 | Phase::I2)
    }

    pub fn is_infectious(self) -> bool {
        self.spreads_at_asymptomatic_rate() || self.spreads_at_symptomatic_rate()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Probability law of the number of days spent in one phase, stored densely
/// over days `1..=h` (index `d - 1` holds `p(d)`).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDurationDist {
    phase: Phase,
    pmf: Vec<f64>,
}

impl PhaseDurationDist {
    /// Builds a law from probabilities for days `1..=pmf.len()`, zero-padded
    /// to `h`.
    pub fn new(phase: Phase, pmf: Vec<f64>, h: usize) -> Result<Self> {
        let bad = |reason: String| EpiError::InvalidDistribution {
            phase: phase.to_string(),
            reason,
        };
        if phase == Phase::H {
            return Err(bad("H has no duration law".into()));
        }
        if pmf.len() > h {
            let last = pmf.iter().rposition(|&p| p > 0.0).map_or(0, |i| i + 1);
            if last > h {
                return Err(bad(format!("support reaches day {last} beyond horizon {h}")));
            }
        }
        let mut dense = vec![0.0; h];
        for (d, &p) in pmf.iter().enumerate().take(h) {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("p({}) = {p} outside [0, 1]", d + 1)));
            }
            dense[d] = p;
        }
        let total: f64 = dense.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(bad(format!("probabilities sum to {total}")));
        }
        Ok(Self { phase, pmf: dense })
    }

    /// Uniform law over the listed days.
    pub fn uniform(phase: Phase, days: &[usize], h: usize) -> Result<Self> {
        if days.is_empty() {
            return Err(EpiError::InvalidDistribution {
                phase: phase.to_string(),
                reason: "empty support".into(),
            });
        }
        let max = *days.iter().max().unwrap();
        if days.contains(&0) || max > h {
            return Err(EpiError::InvalidDistribution {
                phase: phase.to_string(),
                reason: format!("support must lie in 1..={h}"),
            });
        }
        let mut pmf = vec![0.0; max];
        let w = 1.0 / days.len() as f64;
        for &d in days {
            pmf[d - 1] += w;
        }
        // 1/3 + 1/3 + 1/3 may land one ulp away from 1
        let total: f64 = pmf.iter().sum();
        for p in &mut pmf {
            *p /= total;
        }
        Self::new(phase, pmf, h)
    }

    pub fn point_mass(phase: Phase, day: usize, h: usize) -> Result<Self> {
        Self::uniform(phase, &[day], h)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn horizon(&self) -> usize {
        self.pmf.len()
    }

    /// `p(d)` for `d >= 1`; zero outside the stored horizon.
    pub fn prob(&self, day: usize) -> f64 {
        if day == 0 || day > self.pmf.len() {
            0.0
        } else {
            self.pmf[day - 1]
        }
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Days with positive probability, ascending.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i + 1, p))
    }

    pub fn max_support(&self) -> usize {
        self.pmf.iter().rposition(|&p| p > 0.0).map_or(0, |i| i + 1)
    }

    pub fn min_support(&self) -> usize {
        self.pmf.iter().position(|&p| p > 0.0).map_or(0, |i| i + 1)
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(d, p)| d as f64 * p).sum()
    }

    /// Failure rates `r(d) = p(d) / sum_{k >= d} p(k)`, zero where the tail
    /// mass vanishes. Index `d - 1` holds `r(d)`.
    pub fn failure_rates(&self) -> Vec<f64> {
        failure_rates(self)
    }
}

pub fn failure_rates(dist: &PhaseDurationDist) -> Vec<f64> {
    let h = dist.pmf.len();
    let mut tail = vec![0.0; h + 1];
    for d in (0..h).rev() {
        tail[d] = dist.pmf[d] + tail[d + 1];
    }
    (0..h)
        .map(|d| {
            if tail[d] > 0.0 {
                (dist.pmf[d] / tail[d]).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Parameters of the single-population model.
#[derive(Clone, Debug, PartialEq)]
pub struct DiseaseParams {
    h: usize,
    durations: [PhaseDurationDist; 5],
    rates: [Vec<f64>; 5],
    /// Probability that a prodromic case turns symptomatic.
    pub p_i: f64,
    /// Probability that a phase-1 symptomatic case is hospitalized.
    pub p_h: f64,
    /// Probability of death given hospitalization.
    pub p_d: f64,
    /// Daily new exposures caused by one I1/I2 individual.
    pub alpha_i: f64,
    /// Daily new exposures caused by one A/P individual.
    pub alpha_a: f64,
}

impl DiseaseParams {
    /// `durations` must be given in `Phase::TIMED` order.
    pub fn new(
        h: usize,
        durations: [PhaseDurationDist; 5],
        p_i: f64,
        p_h: f64,
        p_d: f64,
        alpha_i: f64,
        alpha_a: f64,
    ) -> Result<Self> {
        if h == 0 {
            return Err(invalid("h", "horizon must be at least 1"));
        }
        for (dist, phase) in durations.iter().zip(Phase::TIMED) {
            if dist.phase != phase {
                return Err(invalid(
                    "durations",
                    format!("expected {phase} law, found {}", dist.phase),
                ));
            }
            if dist.horizon() != h {
                return Err(invalid(
                    "durations",
                    format!("{phase} law stored over {} days, horizon is {h}", dist.horizon()),
                ));
            }
        }
        for (name, p) in [("p_i", p_i), ("p_h", p_h), ("p_d", p_d)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("{p} outside [0, 1]")));
            }
        }
        for (name, a) in [("alpha_i", alpha_i), ("alpha_a", alpha_a)] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(invalid(name, format!("{a} must be finite and nonnegative")));
            }
        }
        let rates = [
            durations[0].failure_rates(),
            durations[1].failure_rates(),
            durations[2].failure_rates(),
            durations[3].failure_rates(),
            durations[4].failure_rates(),
        ];
        Ok(Self {
            h,
            durations,
            rates,
            p_i,
            p_h,
            p_d,
            alpha_i,
            alpha_a,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn dim(&self) -> usize {
        5 * self.h + 1
    }

    pub fn duration(&self, phase: Phase) -> &PhaseDurationDist {
        &self.durations[phase.block()]
    }

    /// Failure rates of a timed phase, index `d - 1` holds `r(d)`.
    pub fn rates(&self, phase: Phase) -> &[f64] {
        &self.rates[phase.block()]
    }

    /// Contact rate applying to individuals currently in `phase`.
    pub fn contact_rate(&self, phase: Phase) -> f64 {
        if phase.spreads_at_symptomatic_rate() {
            self.alpha_i
        } else if phase.spreads_at_asymptomatic_rate() {
            self.alpha_a
        } else {
            0.0
        }
    }

    /// Same biology with different contact rates.
    pub fn with_contact_rates(&self, alpha_i: f64, alpha_a: f64) -> Result<Self> {
        let mut out = self.clone();
        for (name, a) in [("alpha_i", alpha_i), ("alpha_a", alpha_a)] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(invalid(name, format!("{a} must be finite and nonnegative")));
            }
        }
        out.alpha_i = alpha_i;
        out.alpha_a = alpha_a;
        Ok(out)
    }

    pub fn to_config(&self) -> ParamsConfig {
        let mut durations = BTreeMap::new();
        for phase in Phase::TIMED {
            let dist = self.duration(phase);
            let pmf = dist.pmf[..dist.max_support()].to_vec();
            durations.insert(phase.label().to_string(), pmf);
        }
        ParamsConfig {
            h: self.h,
            p_i: self.p_i,
            p_h: self.p_h,
            p_d: self.p_d,
            alpha_i: self.alpha_i,
            alpha_a: self.alpha_a,
            durations,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ParamsConfig = toml::from_str(s).map_err(|e| EpiError::Config(e.to_string()))?;
        cfg.into_params()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_config()).expect("params serialize to TOML")
    }
}

/// Baseline biology: E uniform on {3,4,5}, P uniform on {1,2}, I1 uniform on
/// {5,6,7}, I2 four days, A eleven days, `p_i = 0.7`, `p_h = 0.05`,
/// `p_d = 0`. Contact rates `alpha_i = 0.4`, `alpha_a = 0.3`.
pub fn baseline_params() -> DiseaseParams {
    baseline_params_with_horizon(DEFAULT_HORIZON).expect("baseline fits the default horizon")
}

pub fn baseline_params_with_horizon(h: usize) -> Result<DiseaseParams> {
    let durations = [
        PhaseDurationDist::uniform(Phase::E, &[3, 4, 5], h)?,
        PhaseDurationDist::uniform(Phase::P, &[1, 2], h)?,
        PhaseDurationDist::uniform(Phase::I1, &[5, 6, 7], h)?,
        PhaseDurationDist::point_mass(Phase::A, 11, h)?,
        PhaseDurationDist::point_mass(Phase::I2, 4, h)?,
    ];
    DiseaseParams::new(h, durations, 0.7, 0.05, 0.0, 0.4, 0.3)
}

fn default_h() -> usize {
    DEFAULT_HORIZON
}

/// On-disk form of [`DiseaseParams`]. Duration pmfs list `p(1), p(2), ...`
/// and are zero-padded to `h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamsConfig {
    #[serde(default = "default_h")]
    pub h: usize,
    pub p_i: f64,
    pub p_h: f64,
    #[serde(default)]
    pub p_d: f64,
    pub alpha_i: f64,
    pub alpha_a: f64,
    pub durations: BTreeMap<String, Vec<f64>>,
}

impl ParamsConfig {
    pub fn into_params(self) -> Result<DiseaseParams> {
        let h = self.h;
        let get = |phase: Phase| -> Result<PhaseDurationDist> {
            let pmf = self
                .durations
                .get(phase.label())
                .ok_or_else(|| EpiError::Config(format!("missing durations.{phase}")))?;
            PhaseDurationDist::new(phase, pmf.clone(), h)
        };
        let durations = [
            get(Phase::E)?,
            get(Phase::P)?,
            get(Phase::I1)?,
            get(Phase::A)?,
            get(Phase::I2)?,
        ];
        if let Some(extra) = self
            .durations
            .keys()
            .find(|k| Phase::parse(k).is_none_or(|p| p == Phase::H))
        {
            return Err(EpiError::Config(format!("unknown duration key `{extra}`")));
        }
        DiseaseParams::new(h, durations, self.p_i, self.p_h, self.p_d, self.alpha_i, self.alpha_a)
    }
}

/// Position of `(phase, day)` in a state vector of horizon `h`. The day is
/// ignored for `H`.
pub fn state_index(phase: Phase, day: usize, h: usize) -> Result<usize> {
    if phase == Phase::H {
        return Ok(5 * h);
    }
    if day == 0 || day > h {
        return Err(EpiError::DayOutOfRange { day, h });
    }
    Ok(phase.block() * h + day - 1)
}

/// Inverse of [`state_index`]; `H` is reported with day 1.
pub fn slot_of_index(index: usize, h: usize) -> Option<(Phase, usize)> {
    if index == 5 * h {
        Some((Phase::H, 1))
    } else if index < 5 * h {
        Some((Phase::TIMED[index / h], index % h + 1))
    } else {
        None
    }
}

/// Day-indexed compartment counts in the canonical `5h + 1` layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    h: usize,
    values: Vec<T>,
}

/// Expected counts (mean-field engine).
pub type StateVector = State<f64>;
/// Integer counts (stochastic engine).
pub type CountVector = State<u64>;

impl<T: Copy + Default> State<T> {
    pub fn zeros(h: usize) -> Self {
        Self {
            h,
            values: vec![T::default(); 5 * h + 1],
        }
    }

    pub fn from_vec(h: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != 5 * h + 1 {
            return Err(EpiError::DimensionMismatch {
                expected: 5 * h + 1,
                got: values.len(),
            });
        }
        Ok(Self { h, values })
    }

    /// Single nonzero entry at `(phase, day)`.
    pub fn unit(h: usize, phase: Phase, day: usize, value: T) -> Result<Self> {
        let mut s = Self::zeros(h);
        s.values[state_index(phase, day, h)?] = value;
        Ok(s)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// Entries of one timed phase, days `1..=h`.
    pub fn block(&self, phase: Phase) -> &[T] {
        if phase == Phase::H {
            &self.values[5 * self.h..]
        } else {
            let b = phase.block() * self.h;
            &self.values[b..b + self.h]
        }
    }

    pub fn block_mut(&mut self, phase: Phase) -> &mut [T] {
        if phase == Phase::H {
            let n = 5 * self.h;
            &mut self.values[n..]
        } else {
            let b = phase.block() * self.h;
            &mut self.values[b..b + self.h]
        }
    }

    pub fn get(&self, phase: Phase, day: usize) -> Result<T> {
        Ok(self.values[state_index(phase, day, self.h)?])
    }

    pub fn hospitalized(&self) -> T {
        self.values[5 * self.h]
    }
}

impl StateVector {
    pub fn block_sum(&self, phase: Phase) -> f64 {
        self.block(phase).iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl CountVector {
    pub fn block_sum(&self, phase: Phase) -> u64 {
        self.block(phase).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn to_real(&self) -> StateVector {
        State {
            h: self.h,
            values: self.values.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

impl<T> Index<usize> for State<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T> IndexMut<usize> for State<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.values[i]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeathImmunCounters {
    pub deaths: f64,
    pub immunized: f64,
}

/// Deaths and immunizations recorded on day `t + 1` from the state on day `t`.
pub fn death_immun_update(state: &StateVector, params: &DiseaseParams) -> DeathImmunCounters {
    let x_h = state.hospitalized();
    let exits = |phase: Phase| -> f64 {
        state
            .block(phase)
            .iter()
            .zip(params.rates(phase))
            .map(|(x, r)| x * r)
            .sum()
    };
    DeathImmunCounters {
        deaths: params.p_d * x_h,
        immunized: (1.0 - params.p_d) * x_h + exits(Phase::A) + exits(Phase::I2),
    }
}
