//! Contact tracing and case isolation on an extended type space.
//!
//! An individual's type is the sequence of daily phases it has left to live
//! together with the day, counted along that sequence, on which it tests
//! positive. A positive test ends the sequence: the individual is isolated
//! after that day. Children of a traced parent are tested the day after the
//! parent, or earlier if they reach an auto-test phase or a random test
//! first.
//!
//! Timing convention: a parent of type `(j, d)` on day `t` infects children
//! who appear on day `t + 1`, when the parent has `d - 1` days left. A traced
//! child is tested on the day after the parent, which is its own day
//! `(d - 1) + 1 = d`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EpiError, Result};
use crate::params::{DiseaseParams, Phase};
use crate::spectral::{perron_root, CsrMatrix, LinearOperator, PowerIterationOptions};

pub const DEFAULT_PATH_CAP: usize = 10_000;
pub const DEFAULT_TYPE_CAP: usize = 50_000;

/// Complete future of a newborn infection, one phase per day.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePath {
    pub phases: Vec<Phase>,
    pub probability: f64,
}

/// Every phase sequence a newborn can follow, with its probability. Paths
/// through hospitalization end with a single `H` day.
pub fn enumerate_paths(params: &DiseaseParams, cap: usize) -> Result<Vec<PhasePath>> {
    let mut out = Vec::new();
    let mut push = |phases: Vec<Phase>, probability: f64| -> Result<()> {
        if probability > 0.0 {
            if out.len() >= cap {
                return Err(EpiError::PathCapExceeded { cap });
            }
            out.push(PhasePath { phases, probability });
        }
        Ok(())
    };
    let run = |prefix: &[Phase], phase: Phase, days: usize| -> Vec<Phase> {
        let mut v = prefix.to_vec();
        v.extend(std::iter::repeat_n(phase, days));
        v
    };
    for (de, pe) in params.duration(Phase::E).support() {
        let e = run(&[], Phase::E, de);
        for (dp, pp) in params.duration(Phase::P).support() {
            let ep = run(&e, Phase::P, dp);
            let w = pe * pp;
            for (da, pa) in params.duration(Phase::A).support() {
                push(run(&ep, Phase::A, da), w * (1.0 - params.p_i) * pa)?;
            }
            for (d1, p1) in params.duration(Phase::I1).support() {
                let epi = run(&ep, Phase::I1, d1);
                let wi = w * params.p_i * p1;
                push(run(&epi, Phase::H, 1), wi * params.p_h)?;
                for (d2, p2) in params.duration(Phase::I2).support() {
                    push(run(&epi, Phase::I2, d2), wi * (1.0 - params.p_h) * p2)?;
                }
            }
        }
    }
    Ok(out)
}

/// Day (1-based along the remaining path) of the positive test, or never.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestDay {
    Day(usize),
    Never,
}

impl fmt::Display for TestDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestDay::Day(d) => write!(f, "{d}"),
            TestDay::Never => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedType {
    /// Remaining phases, today first. Truncated at the test day.
    pub path: Vec<Phase>,
    pub days_until_test: TestDay,
}

impl ExtendedType {
    /// A path truncated at `test`; tests falling after the path ends never
    /// happen.
    pub fn truncated(full: &[Phase], test: TestDay) -> Self {
        match test {
            TestDay::Day(d) if d <= full.len() => Self {
                path: full[..d].to_vec(),
                days_until_test: test,
            },
            _ => Self {
                path: full.to_vec(),
                days_until_test: TestDay::Never,
            },
        }
    }

    /// The same individual one day later, if still active.
    pub fn aged(&self) -> Option<Self> {
        if self.path.len() <= 1 {
            return None;
        }
        let days_until_test = match self.days_until_test {
            TestDay::Day(d) => TestDay::Day(d - 1),
            TestDay::Never => TestDay::Never,
        };
        Some(Self {
            path: self.path[1..].to_vec(),
            days_until_test,
        })
    }

    pub fn label(&self) -> String {
        let p: Vec<&str> = self.path.iter().map(|p| p.label()).collect();
        format!("{}|{}", p.join("-"), self.days_until_test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracingConfig {
    /// Probability that an infection is traced back from the infector.
    pub p_t: f64,
    /// Daily probability of a random positive test.
    pub epsilon: f64,
    /// Longest finite test delay tracked.
    pub d_max: usize,
    /// Phases whose first day triggers a positive test.
    pub phi0: BTreeSet<Phase>,
}

impl TracingConfig {
    pub fn new(p_t: f64, epsilon: f64, d_max: usize) -> Result<Self> {
        let cfg = Self {
            p_t,
            epsilon,
            d_max,
            phi0: [Phase::H].into_iter().collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_t", self.p_t), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("{p} outside [0, 1]")));
            }
        }
        if self.d_max == 0 {
            return Err(invalid("d_max", "must be at least 1"));
        }
        Ok(())
    }

    /// Law of the random-test day `X`: `P(X = k)` for `k = 1..=d_max`,
    /// the remainder being `X = never`.
    fn random_test_pmf(&self) -> Vec<f64> {
        let q = 1.0 - self.epsilon;
        (1..=self.d_max).map(|k| self.epsilon * q.powi(k as i32 - 1)).collect()
    }

    fn random_test_tail(&self, k: usize) -> f64 {
        // P(X >= k), with X = never counted as larger than any day
        (1.0 - self.epsilon).powi(k as i32 - 1)
    }
}

/// Path law plus tracing configuration, ready for sampling and for building
/// the mean progeny matrix.
#[derive(Clone, Debug)]
pub struct TracingModel {
    config: TracingConfig,
    alpha_i: f64,
    alpha_a: f64,
    paths: Vec<PhasePath>,
    cumulative: Vec<f64>,
    first_test: Vec<TestDay>,
}

impl TracingModel {
    pub fn new(params: &DiseaseParams, config: TracingConfig) -> Result<Self> {
        Self::with_cap(params, config, DEFAULT_PATH_CAP)
    }

    pub fn with_cap(params: &DiseaseParams, config: TracingConfig, cap: usize) -> Result<Self> {
        config.validate()?;
        let paths = enumerate_paths(params, cap)?;
        let longest = paths.iter().map(|p| p.phases.len()).max().unwrap_or(0);
        if config.d_max < longest {
            return Err(invalid(
                "d_max",
                format!("{} is shorter than the longest path ({longest} days)", config.d_max),
            ));
        }
        let mut acc = 0.0;
        let cumulative = paths
            .iter()
            .map(|p| {
                acc += p.probability;
                acc
            })
            .collect();
        let first_test = paths
            .iter()
            .map(|p| {
                p.phases
                    .iter()
                    .position(|ph| config.phi0.contains(ph))
                    .map_or(TestDay::Never, |k| TestDay::Day(k + 1))
            })
            .collect();
        Ok(Self {
            config,
            alpha_i: params.alpha_i,
            alpha_a: params.alpha_a,
            paths,
            cumulative,
            first_test,
        })
    }

    pub fn config(&self) -> &TracingConfig {
        &self.config
    }

    pub fn paths(&self) -> &[PhasePath] {
        &self.paths
    }

    /// Daily new infections caused by an individual of this type today.
    pub fn infection_rate(&self, t: &ExtendedType) -> f64 {
        match t.path.first() {
            Some(p) if p.spreads_at_symptomatic_rate() => self.alpha_i,
            Some(p) if p.spreads_at_asymptomatic_rate() => self.alpha_a,
            _ => 0.0,
        }
    }

    /// Test-day cap carried by a traced child of a parent whose test is on
    /// `parent_test` (counted on the infection day).
    fn traced_cap(parent_test: TestDay) -> TestDay {
        parent_test
    }

    /// Draws the type of a child infected today by `parent`.
    pub fn sample_child_type<R: Rng + ?Sized>(&self, parent: &ExtendedType, rng: &mut R) -> ExtendedType {
        let total = *self.cumulative.last().expect("at least one path");
        let u: f64 = rng.random::<f64>() * total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.paths.len() - 1);
        let d1 = self.first_test[k];
        let x = if self.config.epsilon <= 0.0 {
            TestDay::Never
        } else {
            let mut day = 1;
            loop {
                if day > self.config.d_max {
                    break TestDay::Never;
                }
                if rng.random::<f64>() < self.config.epsilon {
                    break TestDay::Day(day);
                }
                day += 1;
            }
        };
        let traced = rng.random::<f64>() < self.config.p_t;
        let mut test = d1.min(x);
        if traced {
            test = test.min(Self::traced_cap(parent.days_until_test));
        }
        ExtendedType::truncated(&self.paths[k].phases, test)
    }

    /// Exact law of a child's type given the parent's test day.
    pub fn child_law(&self, parent_test: TestDay) -> BTreeMap<ExtendedType, f64> {
        let pmf = self.config.random_test_pmf();
        let mut law: BTreeMap<ExtendedType, f64> = BTreeMap::new();
        let traced_cap = Self::traced_cap(parent_test);
        for (path, &d1) in self.paths.iter().zip(&self.first_test) {
            for (cap, w) in [(d1, 1.0 - self.config.p_t), (d1.min(traced_cap), self.config.p_t)] {
                let w = w * path.probability;
                if w <= 0.0 {
                    continue;
                }
                // d' = min(cap, X)
                let last = match cap {
                    TestDay::Day(c) => c - 1,
                    TestDay::Never => self.config.d_max,
                };
                for (k, &p) in pmf.iter().enumerate().take(last) {
                    if p > 0.0 {
                        let t = ExtendedType::truncated(&path.phases, TestDay::Day(k + 1));
                        *law.entry(t).or_insert(0.0) += w * p;
                    }
                }
                let p_cap = match cap {
                    TestDay::Day(c) => self.config.random_test_tail(c),
                    TestDay::Never => self.config.random_test_tail(self.config.d_max + 1),
                };
                if p_cap > 0.0 {
                    let t = ExtendedType::truncated(&path.phases, cap);
                    *law.entry(t).or_insert(0.0) += w * p_cap;
                }
            }
        }
        law
    }

    /// Mean progeny matrix over all types reachable from index cases
    /// (children of an untraced parent).
    pub fn progeny_matrix(&self) -> Result<ExtendedProgeny> {
        self.progeny_matrix_capped(DEFAULT_TYPE_CAP)
    }

    pub fn progeny_matrix_capped(&self, cap: usize) -> Result<ExtendedProgeny> {
        let mut laws: BTreeMap<TestDay, BTreeMap<ExtendedType, f64>> = BTreeMap::new();
        let mut index: BTreeMap<ExtendedType, usize> = BTreeMap::new();
        let mut types: Vec<ExtendedType> = Vec::new();
        let mut queue = VecDeque::new();
        let mut intern = |t: ExtendedType, types: &mut Vec<ExtendedType>, queue: &mut VecDeque<usize>| -> Result<usize> {
            if let Some(&i) = index.get(&t) {
                return Ok(i);
            }
            if types.len() >= cap {
                return Err(invalid("tracing", format!("extended type space exceeds {cap} types")));
            }
            let i = types.len();
            index.insert(t.clone(), i);
            types.push(t);
            queue.push_back(i);
            Ok(i)
        };
        let seeds: Vec<ExtendedType> = self.child_law(TestDay::Never).into_keys().collect();
        for t in seeds {
            intern(t, &mut types, &mut queue)?;
        }
        let mut triplets = Vec::new();
        while let Some(j) = queue.pop_front() {
            let parent = types[j].clone();
            if let Some(older) = parent.aged() {
                let i = intern(older, &mut types, &mut queue)?;
                triplets.push((i, j, 1.0));
            }
            let rate = self.infection_rate(&parent);
            if rate > 0.0 {
                let law = laws
                    .entry(parent.days_until_test)
                    .or_insert_with(|| self.child_law(parent.days_until_test))
                    .clone();
                for (child, p) in law {
                    let i = intern(child, &mut types, &mut queue)?;
                    triplets.push((i, j, rate * p));
                }
            }
        }
        let n = types.len();
        let index = types.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(ExtendedProgeny {
            types,
            index,
            matrix: CsrMatrix::from_triplets(n, triplets),
        })
    }
}

/// Mean progeny matrix on extended types: `matrix[(child, parent)]` is the
/// expected number of `child`-type individuals on day `t + 1` per
/// `parent`-type individual on day `t`.
#[derive(Clone, Debug)]
pub struct ExtendedProgeny {
    pub types: Vec<ExtendedType>,
    pub index: BTreeMap<ExtendedType, usize>,
    pub matrix: CsrMatrix,
}

impl ExtendedProgeny {
    pub fn dim(&self) -> usize {
        self.types.len()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(perron_root(&self.matrix, &PowerIterationOptions::default())?.lambda)
    }
}

pub fn tracing_progeny_matrix(config: &TracingConfig, params: &DiseaseParams) -> Result<ExtendedProgeny> {
    TracingModel::new(params, config.clone())?.progeny_matrix()
}

/// `<x0, (I - M)^-1 e>` in the column convention `x(t+1) = M x(t)`, i.e. the
/// expected value of `sum_t |X(t)|`: every individual counted once per day
/// it is active. Requires a spectral radius below 1.
pub fn expected_total_infected(m: &DMatrix<f64>, x0: &[f64]) -> Result<f64> {
    let n = m.nrows();
    if x0.len() != n {
        return Err(EpiError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let rho = perron_root(m, &PowerIterationOptions::default())?.lambda;
    if rho >= 1.0 {
        return Err(EpiError::Supercritical { rho });
    }
    let a = DMatrix::identity(n, n) - m.transpose();
    let y = a
        .lu()
        .solve(&nalgebra::DVector::from_element(n, 1.0))
        .ok_or(EpiError::Supercritical { rho })?;
    Ok(x0.iter().zip(y.iter()).map(|(a, b)| a * b).sum())
}

/// Outcome of the search for the smallest tracing probability giving a
/// subcritical process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CriticalTracing {
    Found { p_t: f64, rho: f64 },
    /// Already subcritical without tracing.
    SubcriticalWithoutTracing { rho_at_zero: f64 },
    /// Still supercritical with every contact traced.
    SupercriticalWithFullTracing { rho_at_one: f64 },
}

pub fn rho_for(params: &DiseaseParams, base: &TracingConfig, p_t: f64) -> Result<f64> {
    let cfg = TracingConfig { p_t, ..base.clone() };
    tracing_progeny_matrix(&cfg, params)?.spectral_radius()
}

/// Bisection on `p_t` for `rho(M(p_t)) = 1`, stopping once
/// `|rho - 1| <= 1e-4`.
pub fn critical_tracing_probability(params: &DiseaseParams, base: &TracingConfig) -> Result<CriticalTracing> {
    let r0 = rho_for(params, base, 0.0)?;
    if r0 < 1.0 {
        return Ok(CriticalTracing::SubcriticalWithoutTracing { rho_at_zero: r0 });
    }
    let r1 = rho_for(params, base, 1.0)?;
    if r1 >= 1.0 {
        return Ok(CriticalTracing::SupercriticalWithFullTracing { rho_at_one: r1 });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut rlo, mut rhi) = (r0, r1);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let r = rho_for(params, base, mid)?;
        if r > rlo + 1e-12 || r < rhi - 1e-12 {
            return Err(invalid("p_t", format!("spectral radius not monotone in p_t near {mid}")));
        }
        if (r - 1.0).abs() <= 1e-4 {
            return Ok(CriticalTracing::Found { p_t: mid, rho: r });
        }
        if r >= 1.0 {
            lo = mid;
            rlo = r;
        } else {
            hi = mid;
            rhi = r;
        }
    }
    let p_t = 0.5 * (lo + hi);
    Ok(CriticalTracing::Found {
        p_t,
        rho: rho_for(params, base, p_t)?,
    })
}

/// Spectral radius of the extended matrix applied to a dense vector; kept
/// public for callers that want `M x` without densifying.
pub fn apply_progeny(p: &ExtendedProgeny, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; p.dim()];
    p.matrix.apply(x, &mut y);
    y
}
