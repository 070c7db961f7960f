//! Stochastic engine: the multi-type branching process sampled day by day.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{EpiError, Result};
use crate::params::{state_index, CountVector, DiseaseParams, Phase};
use crate::schedule::RateSchedule;

/// Generator for replication `stream` under master `seed`. Streams are
/// disjoint ChaCha keystreams, so replications can run in any order or in
/// parallel and still reproduce.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("valid poisson mean").sample(rng) as u64
    }
}

/// Per-step counts of phase exits, kept for path-wise bookkeeping checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepTally {
    /// Exits per timed phase in `Phase::TIMED` order.
    pub exits: [u64; 5],
    pub new_exposed: u64,
}

/// Samples `X(t+1)` given `X(t)`. Branch counts are complements: the
/// asymptomatic entrants are what remains of the prodromic exits after the
/// symptomatic draw, and hospitalizations what remains of the I1 exits.
pub fn step_stochastic<R: Rng + ?Sized>(
    x: &CountVector,
    params: &DiseaseParams,
    alpha_i: f64,
    alpha_a: f64,
    rng: &mut R,
) -> Result<CountVector> {
    step_stochastic_tallied(x, params, alpha_i, alpha_a, rng).map(|(s, _)| s)
}

pub fn step_stochastic_tallied<R: Rng + ?Sized>(
    x: &CountVector,
    params: &DiseaseParams,
    alpha_i: f64,
    alpha_a: f64,
    rng: &mut R,
) -> Result<(CountVector, StepTally)> {
    let h = params.h();
    if x.dim() != params.dim() {
        return Err(EpiError::DimensionMismatch {
            expected: params.dim(),
            got: x.dim(),
        });
    }
    let mut next = CountVector::zeros(h);
    let mut tally = StepTally::default();
    let xs = x.as_slice();
    let sym = x.block_sum(Phase::I1) + x.block_sum(Phase::I2);
    let asym = x.block_sum(Phase::A) + x.block_sum(Phase::P);
    {
        let ys = next.as_mut_slice();
        for phase in Phase::TIMED {
            let b = phase.block() * h;
            let r = params.rates(phase);
            let mut out = 0;
            for d in 0..h {
                let n = xs[b + d];
                if n == 0 {
                    continue;
                }
                let stay = binomial(n, 1.0 - r[d], rng);
                if d + 1 < h {
                    ys[b + d + 1] = stay;
                }
                out += n - stay;
            }
            tally.exits[phase.block()] = out;
        }
    }
    tally.new_exposed = poisson(alpha_i * sym as f64 + alpha_a * asym as f64, rng);
    let [e_out, p_out, i1_out, _, _] = tally.exits;
    let to_i1 = binomial(p_out, params.p_i, rng);
    let to_i2 = binomial(i1_out, 1.0 - params.p_h, rng);
    let ys = next.as_mut_slice();
    ys[0] = tally.new_exposed;
    ys[Phase::P.block() * h] = e_out;
    ys[Phase::I1.block() * h] = to_i1;
    ys[Phase::A.block() * h] = p_out - to_i1;
    ys[Phase::I2.block() * h] = to_i2;
    ys[5 * h] = i1_out - to_i2;
    Ok((next, tally))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticTrajectory {
    pub states: Vec<CountVector>,
    pub seed: u64,
    pub stream: u64,
}

impl StochasticTrajectory {
    pub fn hospitalized(&self) -> Vec<u64> {
        self.states.iter().map(|s| s.hospitalized()).collect()
    }
}

/// Runs `days` steps with the day-`t` rates from `schedule`, using
/// substream 0 of `seed`.
pub fn simulate_stochastic(
    x0: &CountVector,
    params: &DiseaseParams,
    schedule: &RateSchedule,
    days: usize,
    seed: u64,
) -> Result<StochasticTrajectory> {
    simulate_replication(x0, params, schedule, days, seed, 0)
}

/// Replication `stream` of a Monte Carlo study under master `seed`.
pub fn simulate_replication(
    x0: &CountVector,
    params: &DiseaseParams,
    schedule: &RateSchedule,
    days: usize,
    seed: u64,
    stream: u64,
) -> Result<StochasticTrajectory> {
    let mut rng = substream(seed, stream);
    let states = simulate_with_rng(x0, params, schedule, days, &mut rng)?;
    Ok(StochasticTrajectory { states, seed, stream })
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    x0: &CountVector,
    params: &DiseaseParams,
    schedule: &RateSchedule,
    days: usize,
    rng: &mut R,
) -> Result<Vec<CountVector>> {
    let mut states = Vec::with_capacity(days + 1);
    states.push(x0.clone());
    for t in 0..days {
        let (ai, aa) = schedule.rates_at(t);
        let next = step_stochastic(&states[t], params, ai, aa, rng)?;
        states.push(next);
    }
    Ok(states)
}

/// Covariance of the one-day child vector of a single parent, restricted to
/// the coordinates the parent can reach.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringCovariance {
    pub parent: (Phase, usize),
    /// State indices of the reachable children, ascending.
    pub coords: Vec<usize>,
    /// Dense covariance over `coords`.
    pub cov: Vec<Vec<f64>>,
}

impl OffspringCovariance {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match (self.coords.binary_search(&i), self.coords.binary_search(&j)) {
            (Ok(a), Ok(b)) => self.cov[a][b],
            _ => 0.0,
        }
    }

    /// `q += weight * S` on the full state space.
    pub fn add_scaled_to(&self, q: &mut DMatrix<f64>, weight: f64) {
        for (a, &i) in self.coords.iter().enumerate() {
            for (b, &j) in self.coords.iter().enumerate() {
                q[(i, j)] += weight * self.cov[a][b];
            }
        }
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(dim, dim);
        self.add_scaled_to(&mut q, 1.0);
        q
    }
}

/// Closed-form child covariance of a parent in `(phase, day)`. New
/// exposures are Poisson and independent of the parent's own move, which
/// is one categorical draw among "stay", and the branch destinations.
pub fn offspring_covariance(phase: Phase, day: usize, params: &DiseaseParams) -> Result<OffspringCovariance> {
    let h = params.h();
    state_index(phase, day, h)?;
    let mut outcomes: Vec<(usize, f64)> = Vec::new();
    if phase != Phase::H {
        let r = params.rates(phase)[day - 1];
        if day < h {
            outcomes.push((state_index(phase, day + 1, h)?, 1.0 - r));
        }
        let idx = |p: Phase| state_index(p, 1, h).expect("day 1 is valid");
        match phase {
            Phase::E => outcomes.push((idx(Phase::P), r)),
            Phase::P => {
                outcomes.push((idx(Phase::I1), r * params.p_i));
                outcomes.push((idx(Phase::A), r * (1.0 - params.p_i)));
            }
            Phase::I1 => {
                outcomes.push((idx(Phase::I2), r * (1.0 - params.p_h)));
                outcomes.push((idx(Phase::H), r * params.p_h));
            }
            _ => {}
        }
    }
    let rate = params.contact_rate(phase);
    let mut coords: Vec<usize> = outcomes.iter().map(|o| o.0).collect();
    if rate > 0.0 {
        coords.push(0);
    }
    coords.sort_unstable();
    coords.dedup();
    let k = coords.len();
    let mut cov = vec![vec![0.0; k]; k];
    let pos = |i: usize| coords.binary_search(&i).expect("coordinate listed");
    for &(i, q) in &outcomes {
        let a = pos(i);
        for &(j, s) in &outcomes {
            let b = pos(j);
            cov[a][b] += if i == j { q * (1.0 - q) } else { -q * s };
        }
    }
    if rate > 0.0 {
        let a = pos(0);
        cov[a][a] += rate;
    }
    Ok(OffspringCovariance {
        parent: (phase, day),
        coords,
        cov,
    })
}
