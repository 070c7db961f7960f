//! Several interacting cohorts: a per-cohort epidemic stage with
//! cross-cohort infection, followed by a routing stage that moves
//! individuals between cohorts. Mean-field only.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EpiError, Result};
use crate::meanfield::{infectious_mass, progress_without_infection};
use crate::params::{DiseaseParams, Phase, StateVector};

const RECIPROCITY_TOL: f64 = 1e-9;

/// Cohort identity: usual region, region of the previous night, age class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CohortId {
    pub region: usize,
    pub night: usize,
    pub age: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub id: CohortId,
    pub population: f64,
}

/// `r[(from, to)]`: fraction of cohort `from` that moves to `to` in one day.
/// Rows may sum to less than one; the rest leaves the modelled population.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingMatrix {
    r: DMatrix<f64>,
}

impl RoutingMatrix {
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return Err(EpiError::DimensionMismatch {
                expected: r.nrows(),
                got: r.ncols(),
            });
        }
        for i in 0..r.nrows() {
            let row = r.row(i);
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid("routing", format!("entry {v} in row {i} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if sum > 1.0 + 1e-12 {
                return Err(EpiError::RowSum { row: i, sum });
            }
        }
        Ok(Self { r })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            r: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.r[(from, to)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }
}

fn check_reciprocity(n: &DMatrix<f64>, pops: &[f64]) -> Result<()> {
    let k = pops.len();
    if n.nrows() != k || n.ncols() != k {
        return Err(EpiError::DimensionMismatch {
            expected: k,
            got: n.nrows(),
        });
    }
    let mut pairs = Vec::new();
    for c in 0..k {
        for d in (c + 1)..k {
            let a = pops[c] * n[(c, d)];
            let b = pops[d] * n[(d, c)];
            let scale = a.abs().max(b.abs());
            if (a - b).abs() > RECIPROCITY_TOL * scale.max(f64::MIN_POSITIVE) && (a - b).abs() > 0.0 {
                pairs.push((c, d));
            }
        }
    }
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(EpiError::Reciprocity { pairs })
    }
}

/// Mean daily encounters `n[(c, c')]` of a cohort-`c` individual with
/// cohort-`c'` individuals, and the per-contact transmission probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactIntensity {
    pub n: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl ContactIntensity {
    pub fn new(n: DMatrix<f64>, q: DMatrix<f64>, populations: &[f64]) -> Result<Self> {
        check_reciprocity(&n, populations)?;
        if q.shape() != n.shape() {
            return Err(EpiError::DimensionMismatch {
                expected: n.nrows(),
                got: q.nrows(),
            });
        }
        if let Some(v) = q.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("q", format!("{v} outside [0, 1]")));
        }
        if let Some(v) = n.iter().find(|v| !(**v >= 0.0)) {
            return Err(invalid("n", format!("{v} is negative")));
        }
        Ok(Self { n, q })
    }

    /// Contacts at home, at work, at school and in transit, each checked for
    /// reciprocity before summing.
    pub fn from_components(parts: [&DMatrix<f64>; 4], q: DMatrix<f64>, populations: &[f64]) -> Result<Self> {
        for p in parts {
            check_reciprocity(p, populations)?;
        }
        let n = parts[0] + parts[1] + parts[2] + parts[3];
        Self::new(n, q, populations)
    }

    pub fn alpha(&self) -> DMatrix<f64> {
        self.q.component_mul(&self.n)
    }
}

/// `alpha = q * n` entrywise, after checking `N_c n[c,c'] = N_c' n[c',c]`.
pub fn infection_rate_matrix(q: &DMatrix<f64>, n: &DMatrix<f64>, populations: &[f64]) -> Result<DMatrix<f64>> {
    Ok(ContactIntensity::new(n.clone(), q.clone(), populations)?.alpha())
}

/// How external arrivals enter the cohort state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum ArrivalPolicy {
    /// Arrivals only add susceptible population.
    #[default]
    Susceptible,
    /// This fraction of arrivals enters as newly exposed.
    Exposed(f64),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExternalArrivals {
    /// `counts[t][c]`: arrivals into cohort `c` counted on day `t + 1`.
    /// Missing days mean no arrivals.
    pub counts: Vec<Vec<f64>>,
    pub policy: ArrivalPolicy,
}

impl ExternalArrivals {
    fn on_day(&self, t: usize, c: usize) -> f64 {
        self.counts.get(t).and_then(|v| v.get(c)).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct CohortSystem {
    pub cohorts: Vec<Cohort>,
    pub params: Vec<DiseaseParams>,
    pub states: Vec<StateVector>,
    /// Daily infection-rate matrices; the last one repeats.
    pub alpha: Vec<DMatrix<f64>>,
    /// Daily routing matrices; the last one repeats.
    pub routing: Vec<RoutingMatrix>,
    pub arrivals: ExternalArrivals,
}

impl CohortSystem {
    pub fn new(
        cohorts: Vec<Cohort>,
        params: Vec<DiseaseParams>,
        states: Vec<StateVector>,
        alpha: DMatrix<f64>,
        routing: RoutingMatrix,
    ) -> Result<Self> {
        let s = Self {
            cohorts,
            params,
            states,
            alpha: vec![alpha],
            routing: vec![routing],
            arrivals: ExternalArrivals::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.cohorts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cohorts.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.cohorts.len();
        if k == 0 {
            return Err(invalid("cohorts", "at least one cohort needed"));
        }
        for (name, len) in [("params", self.params.len()), ("states", self.states.len())] {
            if len != k {
                return Err(invalid(name, format!("{len} entries for {k} cohorts")));
            }
        }
        let h = self.params[0].h();
        for (c, (p, x)) in self.params.iter().zip(&self.states).enumerate() {
            if p.h() != h || x.h() != h {
                return Err(invalid("h", format!("cohort {c} uses a different horizon")));
            }
        }
        if let Some(c) = self.cohorts.iter().find(|c| !(c.population >= 0.0)) {
            return Err(invalid("population", format!("{} for cohort {:?}", c.population, c.id)));
        }
        if self.alpha.is_empty() || self.routing.is_empty() {
            return Err(invalid("schedule", "alpha and routing need at least one day"));
        }
        for a in &self.alpha {
            if a.nrows() != k || a.ncols() != k {
                return Err(EpiError::DimensionMismatch {
                    expected: k,
                    got: a.nrows(),
                });
            }
        }
        for r in &self.routing {
            if r.dim() != k {
                return Err(EpiError::DimensionMismatch {
                    expected: k,
                    got: r.dim(),
                });
            }
        }
        if let ArrivalPolicy::Exposed(f) = self.arrivals.policy {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid("arrivals", format!("exposed fraction {f}")));
            }
        }
        Ok(())
    }

    pub fn populations(&self) -> Vec<f64> {
        self.cohorts.iter().map(|c| c.population).collect()
    }

    fn alpha_at(&self, t: usize) -> &DMatrix<f64> {
        &self.alpha[t.min(self.alpha.len() - 1)]
    }

    fn routing_at(&self, t: usize) -> &RoutingMatrix {
        &self.routing[t.min(self.routing.len() - 1)]
    }
}

/// First stage: within-cohort progression, and new exposures in `c` from
/// every cohort `c'` at rate `alpha[(c', c)]` per infectious individual.
pub fn epidemic_stage(params: &[DiseaseParams], states: &[StateVector], alpha: &DMatrix<f64>) -> Result<Vec<StateVector>> {
    let k = states.len();
    if params.len() != k || alpha.nrows() != k || alpha.ncols() != k {
        return Err(EpiError::DimensionMismatch {
            expected: k,
            got: alpha.nrows(),
        });
    }
    let mass: Vec<(f64, f64)> = states.iter().map(|x| infectious_mass(x.as_slice(), x.h())).collect();
    (0..k)
        .into_par_iter()
        .map(|c| {
            let x = &states[c];
            let mut y = StateVector::zeros(x.h());
            progress_without_infection(&params[c], x.as_slice(), y.as_mut_slice());
            let mut e = 0.0;
            for (src, &(sym, asym)) in mass.iter().enumerate() {
                let a = alpha[(src, c)];
                e += a * sym + a * asym;
            }
            y[0] = e;
            Ok(y)
        })
        .collect()
}

/// Second stage: blocks E through I2 mix by `R`, admissions stay in their
/// cohort. Returns the new states and populations.
pub fn routing_stage(
    y: &[StateVector],
    r: &RoutingMatrix,
    populations: &[f64],
    arrivals: &[f64],
    policy: ArrivalPolicy,
) -> Result<(Vec<StateVector>, Vec<f64>)> {
    let k = y.len();
    if r.dim() != k || populations.len() != k || arrivals.len() != k {
        return Err(EpiError::DimensionMismatch {
            expected: k,
            got: r.dim(),
        });
    }
    let h = y[0].h();
    let routed = 5 * h;
    let mut next = Vec::with_capacity(k);
    let mut pops = Vec::with_capacity(k);
    for c in 0..k {
        let mut x = StateVector::zeros(h);
        for (src, ys) in y.iter().enumerate() {
            let w = r.get(src, c);
            if w == 0.0 {
                continue;
            }
            for (xi, yi) in x.as_mut_slice()[..routed].iter_mut().zip(&ys.as_slice()[..routed]) {
                *xi += w * yi;
            }
        }
        x[routed] = y[c].hospitalized();
        if let ArrivalPolicy::Exposed(f) = policy {
            x[0] += f * arrivals[c];
        }
        let n: f64 = (0..k).map(|src| r.get(src, c) * populations[src]).sum::<f64>() + arrivals[c];
        next.push(x);
        pops.push(n);
    }
    Ok((next, pops))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortTrajectory {
    /// `states[t][c]`.
    pub states: Vec<Vec<StateVector>>,
    /// `populations[t][c]`.
    pub populations: Vec<Vec<f64>>,
}

impl CohortTrajectory {
    pub fn hospitalized(&self, cohort: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[cohort].hospitalized()).collect()
    }
}

pub fn simulate_cohorts(system: &CohortSystem, days: usize) -> Result<CohortTrajectory> {
    system.validate()?;
    let mut states = vec![system.states.clone()];
    let mut populations = vec![system.populations()];
    for t in 0..days {
        let y = epidemic_stage(&system.params, &states[t], system.alpha_at(t))?;
        let arrivals: Vec<f64> = (0..system.len()).map(|c| system.arrivals.on_day(t, c)).collect();
        let (x, n) = routing_stage(&y, system.routing_at(t), &populations[t], &arrivals, system.arrivals.policy)?;
        states.push(x);
        populations.push(n);
    }
    Ok(CohortTrajectory { states, populations })
}

/// Observed night-to-night flows for the routing estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowObservation {
    pub cohorts: Vec<Cohort>,
    /// `(night r1, night r2, age) -> people`. Missing keys are zero flow.
    pub flows: BTreeMap<(usize, usize, usize), f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxentOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for MaxentOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxentSolution {
    pub routing: RoutingMatrix,
    pub entropy: f64,
    /// Largest constraint or complementarity violation at exit.
    pub residual: f64,
    pub sweeps: usize,
}

/// `sum R ln(1/R)` with `0 ln(1/0) = 0`.
pub fn routing_entropy(r: &DMatrix<f64>) -> f64 {
    r.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum()
}

struct Group {
    target: f64,
    /// `(row, col, N_row)`.
    members: Vec<(usize, usize, f64)>,
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Solves for the multiplier of one flow identity given the row multipliers:
/// `sum N_i exp(-1 - mu N_i - nu_i) = target`.
fn solve_group(g: &Group, nu: &[f64], mu0: f64) -> f64 {
    let ln_target = g.target.ln();
    // ln g(mu), convex and decreasing in mu
    let f = |mu: f64| log_sum_exp(g.members.iter().map(|&(i, _, n)| n.ln() - 1.0 - mu * n - nu[i])) - ln_target;
    let df = |mu: f64| {
        let lse = log_sum_exp(g.members.iter().map(|&(i, _, n)| n.ln() - 1.0 - mu * n - nu[i]));
        -g.members
            .iter()
            .map(|&(i, _, n)| n * (n.ln() - 1.0 - mu * n - nu[i] - lse).exp())
            .sum::<f64>()
    };
    let mut mu = if mu0.is_finite() { mu0 } else { 0.0 };
    for _ in 0..200 {
        let v = f(mu);
        if v.abs() < 1e-15 {
            break;
        }
        let d = df(mu);
        let step = v / d;
        mu -= step;
        if step.abs() <= 1e-15 * (1.0 + mu.abs()) {
            break;
        }
    }
    mu
}

/// Maximum-entropy routing fractions consistent with observed flows:
/// maximize `sum R ln(1/R)` subject to row sums at most one and, for every
/// `(r1, r2, a)`, `sum N_(r,r1,a) R_((r,r1,a),(r',r2,a)) = flow(r1, r2, a)`.
/// Cyclic dual coordinate ascent; the primal is
/// `R = exp(-1 - mu_k N_c - nu_c)`.
pub fn maxent_routing(obs: &FlowObservation, opts: &MaxentOptions) -> Result<MaxentSolution> {
    let k = obs.cohorts.len();
    let pops: Vec<f64> = obs.cohorts.iter().map(|c| c.population).collect();
    if let Some(p) = pops.iter().find(|p| !(**p >= 0.0)) {
        return Err(invalid("population", format!("{p}")));
    }
    if let Some((key, v)) = obs.flows.iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(invalid("flows", format!("{v} for {key:?}")));
    }
    // capacity check: people leaving a night region cannot exceed those there
    let mut out_of: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(r1, _, a), &v) in &obs.flows {
        *out_of.entry((r1, a)).or_default() += v;
    }
    for (&(r1, a), &v) in &out_of {
        let cap: f64 = obs
            .cohorts
            .iter()
            .filter(|c| c.id.night == r1 && c.id.age == a)
            .map(|c| c.population)
            .sum();
        if v > cap * (1.0 + 1e-12) {
            return Err(EpiError::Infeasible(format!(
                "flows out of night region {r1}, age {a} total {v}, above the {cap} people there"
            )));
        }
    }
    let mut groups: BTreeMap<(usize, usize, usize), Group> = BTreeMap::new();
    for (i, ci) in obs.cohorts.iter().enumerate() {
        if pops[i] <= 0.0 {
            continue;
        }
        for (j, cj) in obs.cohorts.iter().enumerate() {
            if ci.id.age != cj.id.age {
                continue;
            }
            let key = (ci.id.night, cj.id.night, ci.id.age);
            let target = obs.flows.get(&key).copied().unwrap_or(0.0);
            groups
                .entry(key)
                .or_insert_with(|| Group {
                    target,
                    members: Vec::new(),
                })
                .members
                .push((i, j, pops[i]));
        }
    }
    for (key, &v) in &obs.flows {
        if v > 0.0 && !groups.contains_key(key) {
            return Err(EpiError::Infeasible(format!(
                "flow {v} for (r1, r2, age) = {key:?} but no populated cohort can carry it"
            )));
        }
    }
    // zero-flow identities pin their entries to zero
    let groups: Vec<Group> = groups.into_values().filter(|g| g.target > 0.0).collect();
    let mut mu = vec![0.0; groups.len()];
    let mut nu = vec![0.0; k];
    let primal = |mu: &[f64], nu: &[f64]| {
        let mut r = DMatrix::zeros(k, k);
        for (g, &m) in groups.iter().zip(mu) {
            for &(i, j, n) in &g.members {
                let v = (-1.0 - m * n - nu[i]).exp();
                r[(i, j)] = if v < 1e-300 { 0.0 } else { v };
            }
        }
        r
    };
    let residual = |r: &DMatrix<f64>, nu: &[f64]| {
        let mut worst: f64 = 0.0;
        for g in &groups {
            let s: f64 = g.members.iter().map(|&(i, j, n)| n * r[(i, j)]).sum();
            worst = worst.max((s - g.target).abs() / g.target.max(1.0));
        }
        for i in 0..k {
            let s: f64 = r.row(i).iter().sum();
            worst = worst.max(s - 1.0).max(nu[i] * (1.0 - s).abs());
        }
        worst
    };
    let mut sweeps = 0;
    let mut r = primal(&mu, &nu);
    let mut res = residual(&r, &nu);
    while res > opts.tol && sweeps < opts.max_sweeps {
        for (g, m) in groups.iter().zip(mu.iter_mut()) {
            *m = solve_group(g, &nu, *m);
        }
        for i in 0..k {
            let row_sum: f64 = groups
                .iter()
                .zip(&mu)
                .flat_map(|(g, &m)| g.members.iter().filter(|e| e.0 == i).map(move |&(_, _, n)| (-1.0 - m * n).exp()))
                .sum();
            nu[i] = if row_sum > 0.0 { row_sum.ln().max(0.0) } else { 0.0 };
        }
        sweeps += 1;
        r = primal(&mu, &nu);
        res = residual(&r, &nu);
    }
    if res > opts.tol {
        return Err(EpiError::NonConvergence {
            iterations: sweeps,
            residual: res,
            estimate: routing_entropy(&r),
        });
    }
    Ok(MaxentSolution {
        entropy: routing_entropy(&r),
        routing: RoutingMatrix::new(r.map(|v| v.min(1.0)))?,
        residual: res,
        sweeps,
    })
}

/// `n_T[(c, c')] = (1/N_c) sum_z beta_z visits[(c, z)] visits[(c', z)]`.
pub fn transit_contacts(visits: &DMatrix<f64>, beta: &[f64], populations: &[f64]) -> Result<DMatrix<f64>> {
    let (k, nz) = visits.shape();
    if beta.len() != nz || populations.len() != k {
        return Err(EpiError::DimensionMismatch {
            expected: nz,
            got: beta.len(),
        });
    }
    if nz > 0 {
        let mean = beta.iter().sum::<f64>() / nz as f64;
        if (mean - 1.0).abs() > 1e-9 {
            return Err(invalid("beta", format!("mean {mean}; normalize to mean 1 first")));
        }
    }
    let mut shared = DMatrix::zeros(k, k);
    for c in 0..k {
        for d in c..k {
            let s: f64 = (0..nz).map(|z| beta[z] * visits[(c, z)] * visits[(d, z)]).sum();
            shared[(c, d)] = s;
            shared[(d, c)] = s;
        }
    }
    let mut n = DMatrix::zeros(k, k);
    for c in 0..k {
        let pop = populations[c];
        let visited = visits.row(c).iter().any(|v| *v != 0.0);
        if pop <= 0.0 {
            if visited {
                return Err(invalid("population", format!("cohort {c} has visits but population {pop}")));
            }
            continue;
        }
        for d in 0..k {
            n[(c, d)] = shared[(c, d)] / pop;
        }
    }
    Ok(n)
}

/// Rescales `beta` to mean 1, returning the factor `eta` divided out.
pub fn normalize_beta(beta: &[f64]) -> Result<(Vec<f64>, f64)> {
    if beta.is_empty() {
        return Err(invalid("beta", "empty"));
    }
    let eta = beta.iter().sum::<f64>() / beta.len() as f64;
    if !(eta > 0.0) {
        return Err(invalid("beta", format!("mean {eta} must be positive")));
    }
    Ok((beta.iter().map(|b| b / eta).collect(), eta))
}

/// Per-cohort population split over phases, kept for reporting.
pub fn cohort_block_totals(x: &StateVector) -> [f64; 6] {
    [
        x.block_sum(Phase::E),
        x.block_sum(Phase::P),
        x.block_sum(Phase::I1),
        x.block_sum(Phase::A),
        x.block_sum(Phase::I2),
        x.hospitalized(),
    ]
}
