//! Linear filtering of the hidden branching state from daily hospital
//! admissions.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::branching::{offspring_covariance, OffspringCovariance};
use crate::error::{invalid, EpiError, Result};
use crate::meanfield::build_transition_matrix;
use crate::params::{slot_of_index, DiseaseParams, StateVector};
use crate::spectral::LinearOperator;

const JITTER: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    /// May hold small negative entries; clamp only for presentation.
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub t: usize,
}

impl FilterState {
    pub fn new(x0: &StateVector, p0: DMatrix<f64>) -> Result<Self> {
        let n = x0.dim();
        if p0.nrows() != n || p0.ncols() != n {
            return Err(EpiError::DimensionMismatch {
                expected: n,
                got: p0.nrows(),
            });
        }
        Ok(Self {
            x_hat: DVector::from_column_slice(x0.as_slice()),
            p: p0,
            t: 0,
        })
    }

    /// Known initial state: zero covariance.
    pub fn exact(x0: &StateVector) -> Self {
        let n = x0.dim();
        Self {
            x_hat: DVector::from_column_slice(x0.as_slice()),
            p: DMatrix::zeros(n, n),
            t: 0,
        }
    }

    pub fn std(&self) -> Vec<f64> {
        self.p.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Measurement-noise policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum NoisePolicy {
    /// Diagonal, variance `max(y, 1)` per observed coordinate.
    #[default]
    PoissonLike,
    /// Diagonal with a fixed variance.
    Constant(f64),
}

impl NoisePolicy {
    pub fn covariance(&self, y: &[f64]) -> DMatrix<f64> {
        let diag: Vec<f64> = match self {
            NoisePolicy::PoissonLike => y.iter().map(|v| v.max(1.0)).collect(),
            NoisePolicy::Constant(v) => vec![*v; y.len()],
        };
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }
}

/// Observation `y = P_H x + v`, with `P_H` given by the observed coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub observed: Vec<usize>,
    pub noise: NoisePolicy,
}

impl MeasurementModel {
    /// Daily admissions: the single `H` coordinate.
    pub fn hospital(h: usize) -> Self {
        Self {
            observed: vec![5 * h],
            noise: NoisePolicy::PoissonLike,
        }
    }

    pub fn full(dim: usize, noise: NoisePolicy) -> Self {
        Self {
            observed: (0..dim).collect(),
            noise,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; dim];
        for &i in &self.observed {
            if i >= dim {
                return Err(invalid("observed", format!("coordinate {i} beyond dimension {dim}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid("observed", format!("coordinate {i} listed twice")));
            }
        }
        Ok(())
    }

    pub fn projection(&self, dim: usize) -> DMatrix<f64> {
        let mut ph = DMatrix::zeros(self.observed.len(), dim);
        for (r, &c) in self.observed.iter().enumerate() {
            ph[(r, c)] = 1.0;
        }
        ph
    }
}

/// Offspring covariances of every type, cached for repeated assembly.
#[derive(Clone, Debug)]
pub struct ProcessNoise {
    dim: usize,
    per_type: Vec<OffspringCovariance>,
}

impl ProcessNoise {
    pub fn new(params: &DiseaseParams) -> Result<Self> {
        let h = params.h();
        let per_type = (0..params.dim())
            .map(|i| {
                let (phase, day) = slot_of_index(i, h).ok_or(EpiError::DimensionMismatch {
                    expected: params.dim(),
                    got: i,
                })?;
                offspring_covariance(phase, day, params)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dim: params.dim(),
            per_type,
        })
    }

    /// `Q = sum_j w_j S_j`.
    pub fn assemble(&self, weights: &[f64]) -> Result<DMatrix<f64>> {
        if weights.len() != self.dim {
            return Err(EpiError::DimensionMismatch {
                expected: self.dim,
                got: weights.len(),
            });
        }
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(invalid("weights", format!("entry {j} is {w}")));
        }
        let mut q = DMatrix::zeros(self.dim, self.dim);
        for (s, &w) in self.per_type.iter().zip(weights) {
            if w > 0.0 {
                s.add_scaled_to(&mut q, w);
            }
        }
        Ok(q)
    }
}

pub fn process_noise(params: &DiseaseParams, weights: &[f64]) -> Result<DMatrix<f64>> {
    ProcessNoise::new(params)?.assemble(weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Innovation {
    pub t: usize,
    pub residual: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl Innovation {
    /// Residuals scaled by their predicted standard deviations.
    pub fn standardized(&self) -> Vec<f64> {
        self.residual
            .iter()
            .enumerate()
            .map(|(i, r)| r / self.covariance[(i, i)].max(f64::MIN_POSITIVE).sqrt())
            .collect()
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// `M P M^T` by applying `M` to the columns of `P`, then to the columns of
/// `(M P)^T`.
fn conjugate<A: LinearOperator + ?Sized>(m: &A, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let mut mp = DMatrix::zeros(n, n);
    for j in 0..n {
        m.apply(p.column(j).as_slice(), mp.column_mut(j).as_mut_slice());
    }
    let mpt = mp.transpose();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        m.apply(mpt.column(j).as_slice(), out.column_mut(j).as_mut_slice());
    }
    out
}

fn spd_factor(s: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(s.clone()) {
        return Ok(c);
    }
    let n = s.nrows();
    Cholesky::new(s + DMatrix::identity(n, n) * JITTER).ok_or(EpiError::SingularInnovation)
}

/// One predict/update cycle. `y = None` is a predict-only day.
pub fn kalman_step<A: LinearOperator + ?Sized>(
    state: &FilterState,
    m: &A,
    q: &DMatrix<f64>,
    model: &MeasurementModel,
    y: Option<&[f64]>,
) -> Result<(FilterState, Option<Innovation>)> {
    let n = state.x_hat.len();
    if m.dim() != n || q.nrows() != n {
        return Err(EpiError::DimensionMismatch {
            expected: n,
            got: m.dim().min(q.nrows()),
        });
    }
    let mut x_pred = DVector::zeros(n);
    m.apply(state.x_hat.as_slice(), x_pred.as_mut_slice());
    let mut p_pred = conjugate(m, &state.p) + q;
    symmetrize(&mut p_pred);
    let t = state.t + 1;
    let Some(y) = y else {
        return Ok((
            FilterState {
                x_hat: x_pred,
                p: p_pred,
                t,
            },
            None,
        ));
    };
    if y.len() != model.observed.len() {
        return Err(EpiError::DimensionMismatch {
            expected: model.observed.len(),
            got: y.len(),
        });
    }
    let ph = model.projection(n);
    let r = model.noise.covariance(y);
    let mut s = &ph * &p_pred * ph.transpose() + r;
    symmetrize(&mut s);
    let chol = spd_factor(&s)?;
    // K^T = S^-1 P_H P
    let k = chol.solve(&(&ph * &p_pred)).transpose();
    let residual = DVector::from_column_slice(y) - &ph * &x_pred;
    let x_hat = &x_pred + &k * &residual;
    // (I - K P_H) P without forming the identity
    let mut p = &p_pred - &k * (&ph * &p_pred);
    symmetrize(&mut p);
    Ok((
        FilterState { x_hat, p, t },
        Some(Innovation {
            t,
            residual,
            covariance: s,
        }),
    ))
}

/// Weights for assembling `Q(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WeightPolicy {
    /// `max(x_hat(t-1), 0)`.
    #[default]
    Filtered,
    /// `M^(t-1) x0`.
    OpenLoop,
    /// `Q = 0`.
    None,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct FilterOptions {
    pub weights: WeightPolicy,
    pub noise: NoisePolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterRun {
    /// Initial state followed by one state per observation day.
    pub states: Vec<FilterState>,
    pub innovations: Vec<Innovation>,
}

impl FilterRun {
    /// Count of filtered coordinates that went negative.
    pub fn negative_entries(&self) -> usize {
        self.states
            .iter()
            .map(|s| s.x_hat.iter().filter(|v| **v < 0.0).count())
            .sum()
    }
}

/// Filters `observations[k] = y(k+1)` with measurements on `observed`.
pub fn filter_series(
    observations: &[Option<Vec<f64>>],
    params: &DiseaseParams,
    initial: FilterState,
    observed: &[usize],
    options: &FilterOptions,
) -> Result<FilterRun> {
    let n = params.dim();
    if initial.x_hat.len() != n {
        return Err(EpiError::DimensionMismatch {
            expected: n,
            got: initial.x_hat.len(),
        });
    }
    let model = MeasurementModel {
        observed: observed.to_vec(),
        noise: options.noise.clone(),
    };
    model.validate(n)?;
    let m = build_transition_matrix(params);
    let noise = ProcessNoise::new(params)?;
    let mut open_loop = initial.x_hat.clone();
    let mut states = vec![initial];
    let mut innovations = Vec::new();
    for y in observations {
        let prev = states.last().expect("initial state present");
        let q = match options.weights {
            WeightPolicy::Filtered => {
                let w: Vec<f64> = prev.x_hat.iter().map(|v| v.max(0.0)).collect();
                noise.assemble(&w)?
            }
            WeightPolicy::OpenLoop => {
                let w: Vec<f64> = open_loop.iter().map(|v| v.max(0.0)).collect();
                noise.assemble(&w)?
            }
            WeightPolicy::None => DMatrix::zeros(n, n),
        };
        let (next, inn) = kalman_step(prev, &m, &q, &model, y.as_deref())?;
        let mut next_open = DVector::zeros(n);
        LinearOperator::apply(&m, open_loop.as_slice(), next_open.as_mut_slice());
        open_loop = next_open;
        states.push(next);
        innovations.extend(inn);
    }
    Ok(FilterRun { states, innovations })
}

/// Daily hospital admissions with gaps; the common case.
pub fn filter_hospitalizations(
    admissions: &[Option<f64>],
    params: &DiseaseParams,
    initial: FilterState,
    options: &FilterOptions,
) -> Result<FilterRun> {
    let obs: Vec<Option<Vec<f64>>> = admissions.iter().map(|a| a.map(|v| vec![v])).collect();
    filter_series(&obs, params, initial, &[5 * params.h()], options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::{step_stochastic, substream};
    use crate::params::{baseline_params, baseline_params_with_horizon, CountVector, Phase};

    #[test]
    fn zero_weights_zero_noise() {
        let p = baseline_params();
        let q = process_noise(&p, &vec![0.0; p.dim()]).unwrap();
        assert_eq!(q, DMatrix::zeros(p.dim(), p.dim()));
        let mut w = vec![0.0; p.dim()];
        w[3] = -1.0;
        assert!(process_noise(&p, &w).is_err());
    }

    #[test]
    fn single_weight_is_offspring_covariance() {
        let p = baseline_params();
        let j = crate::params::state_index(Phase::I1, 6, 25).unwrap();
        let mut w = vec![0.0; p.dim()];
        w[j] = 1.0;
        let q = process_noise(&p, &w).unwrap();
        let s = offspring_covariance(Phase::I1, 6, &p).unwrap().to_dense(p.dim());
        assert_eq!(q, s);
    }

    #[test]
    fn huge_noise_ignores_observation() {
        let p = baseline_params();
        let m = build_transition_matrix(&p).dense().clone();
        let x0 = StateVector::unit(25, Phase::E, 1, 100.0).unwrap();
        let st = FilterState::new(&x0, DMatrix::identity(p.dim(), p.dim())).unwrap();
        let model = MeasurementModel {
            observed: vec![125],
            noise: NoisePolicy::Constant(1e12),
        };
        let q = DMatrix::zeros(p.dim(), p.dim());
        let (next, _) = kalman_step(&st, &m, &q, &model, Some(&[1e3])).unwrap();
        let pred = &m * &st.x_hat;
        assert!((next.x_hat - pred).amax() < 1e-6);
    }

    #[test]
    fn full_observation_exact() {
        let p = baseline_params_with_horizon(12).unwrap();
        let n = p.dim();
        let m = build_transition_matrix(&p).dense().clone();
        let x0 = StateVector::unit(12, Phase::E, 1, 10.0).unwrap();
        let st = FilterState::new(&x0, DMatrix::identity(n, n)).unwrap();
        let model = MeasurementModel::full(n, NoisePolicy::Constant(0.0));
        let y: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let (next, _) = kalman_step(&st, &m, &DMatrix::identity(n, n), &model, Some(&y)).unwrap();
        for i in 0..n {
            assert!((next.x_hat[i] - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_filter_is_recursion() {
        let p = baseline_params();
        let m = build_transition_matrix(&p);
        let x0 = StateVector::unit(25, Phase::E, 1, 200.0).unwrap();
        let traj = crate::meanfield::simulate_meanfield(&m, &x0, 60).unwrap();
        let obs: Vec<Option<f64>> = traj[1..].iter().map(|s| Some(s.hospitalized())).collect();
        let opts = FilterOptions {
            weights: WeightPolicy::None,
            noise: NoisePolicy::Constant(0.0),
        };
        let run = filter_hospitalizations(&obs, &p, FilterState::exact(&x0), &opts).unwrap();
        assert_eq!(run.states.len(), 61);
        for (s, x) in run.states.iter().zip(&traj) {
            for (a, b) in s.x_hat.iter().zip(x.as_slice()) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
        let empty = filter_hospitalizations(&[], &p, FilterState::exact(&x0), &opts).unwrap();
        assert_eq!(empty.states.len(), 1);
    }

    #[test]
    fn zero_gain_when_nothing_to_correct() {
        let p = baseline_params();
        let m = build_transition_matrix(&p).dense().clone();
        let x0 = StateVector::unit(25, Phase::I1, 2, 50.0).unwrap();
        let st = FilterState::exact(&x0);
        let model = MeasurementModel::hospital(25);
        let q = DMatrix::zeros(p.dim(), p.dim());
        let (next, inn) = kalman_step(&st, &m, &q, &model, Some(&[17.0])).unwrap();
        assert_eq!(next.x_hat, &m * &st.x_hat);
        assert!(inn.is_some());
    }

    #[test]
    fn missing_days_predict_only() {
        let p = baseline_params();
        let x0 = StateVector::unit(25, Phase::E, 1, 200.0).unwrap();
        let obs = [None, Some(1.0), None];
        let run = filter_hospitalizations(&obs, &p, FilterState::exact(&x0), &FilterOptions::default()).unwrap();
        assert_eq!(run.states.len(), 4);
        assert_eq!(run.innovations.len(), 1);
        assert_eq!(run.innovations[0].t, 2);
    }

    #[test]
    fn covariance_stays_psd() {
        let p = baseline_params();
        let x0 = CountVector::unit(25, Phase::E, 1, 200).unwrap();
        let mut rng = substream(4, 0);
        let mut x = x0.clone();
        let mut obs = Vec::new();
        for _ in 0..50 {
            x = step_stochastic(&x, &p, p.alpha_i, p.alpha_a, &mut rng).unwrap();
            obs.push(Some(x.hospitalized() as f64));
        }
        let run = filter_hospitalizations(&obs, &p, FilterState::exact(&x0.to_real()), &FilterOptions::default()).unwrap();
        for s in &run.states {
            assert_eq!(s.p, s.p.transpose());
            let eig = s.p.clone().symmetric_eigenvalues();
            let scale = 1.0 + eig.amax();
            assert!(eig.min() >= -1e-9 * scale, "{}", eig.min());
        }
    }
}
