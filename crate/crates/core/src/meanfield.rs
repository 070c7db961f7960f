//! Deterministic linear dynamics `x(t+1) = M x(t)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, EpiError, Result};
use crate::params::{state_index, DiseaseParams, Phase, StateVector};
use crate::schedule::RateSchedule;
use crate::spectral::{perron_root, LinearOperator, PerronPair, PowerIterationOptions};

/// Infectious mass of a state split by contact class: `(I1 + I2, A + P)`.
pub(crate) fn infectious_mass(x: &[f64], h: usize) -> (f64, f64) {
    let sum = |p: Phase| -> f64 { x[p.block() * h..p.block() * h + h].iter().sum() };
    (sum(Phase::I1) + sum(Phase::I2), sum(Phase::A) + sum(Phase::P))
}

/// Aging, phase exits and branch entries for one day. `y[E,1]` is left at 0;
/// new exposures are added by the caller.
pub(crate) fn progress_without_infection(params: &DiseaseParams, x: &[f64], y: &mut [f64]) {
    let h = params.h();
    y.iter_mut().for_each(|v| *v = 0.0);
    let mut exits = [0.0; 5];
    for phase in Phase::TIMED {
        let b = phase.block() * h;
        let r = params.rates(phase);
        let mut out = 0.0;
        for d in 0..h {
            let v = x[b + d];
            if v == 0.0 {
                continue;
            }
            out += v * r[d];
            if d + 1 < h {
                y[b + d + 1] = v * (1.0 - r[d]);
            }
        }
        exits[phase.block()] = out;
    }
    let [e_exit, p_exit, i1_exit, _, _] = exits;
    y[Phase::P.block() * h] = e_exit;
    y[Phase::I1.block() * h] = params.p_i * p_exit;
    y[Phase::A.block() * h] = (1.0 - params.p_i) * p_exit;
    y[Phase::I2.block() * h] = (1.0 - params.p_h) * i1_exit;
    y[5 * h] = params.p_h * i1_exit;
}

/// One mean-field day with explicit contact rates.
pub fn meanfield_step(params: &DiseaseParams, alpha_i: f64, alpha_a: f64, x: &[f64], y: &mut [f64]) {
    let (sym, asym) = infectious_mass(x, params.h());
    progress_without_infection(params, x, y);
    y[0] = alpha_i * sym + alpha_a * asym;
}

/// Mean progeny matrix of the single-population model together with the
/// parameters it was built from.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    params: DiseaseParams,
    dense: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn params(&self) -> &DiseaseParams {
        &self.params
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn h(&self) -> usize {
        self.params.h()
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn alpha_i(&self) -> f64 {
        self.params.alpha_i
    }

    pub fn alpha_a(&self) -> f64 {
        self.params.alpha_a
    }

    /// `M x`, computed from the update equations rather than the dense form.
    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        if x.dim() != self.dim() {
            return Err(EpiError::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        let mut y = StateVector::zeros(self.h());
        meanfield_step(
            &self.params,
            self.params.alpha_i,
            self.params.alpha_a,
            x.as_slice(),
            y.as_mut_slice(),
        );
        Ok(y)
    }
}

impl LinearOperator for TransitionMatrix {
    fn dim(&self) -> usize {
        self.dense.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        meanfield_step(&self.params, self.params.alpha_i, self.params.alpha_a, x, y);
    }
}

pub fn build_transition_matrix(params: &DiseaseParams) -> TransitionMatrix {
    let h = params.h();
    let n = params.dim();
    let mut m = DMatrix::zeros(n, n);
    let idx = |phase: Phase, day: usize| state_index(phase, day, h).expect("day within horizon");
    let e1 = idx(Phase::E, 1);
    for phase in Phase::TIMED {
        let r = params.rates(phase);
        let rate = params.contact_rate(phase);
        for d in 1..=h {
            let col = idx(phase, d);
            let exit = r[d - 1];
            if d < h {
                m[(idx(phase, d + 1), col)] = 1.0 - exit;
            }
            match phase {
                Phase::E => m[(idx(Phase::P, 1), col)] = exit,
                Phase::P => {
                    m[(idx(Phase::I1, 1), col)] = params.p_i * exit;
                    m[(idx(Phase::A, 1), col)] = (1.0 - params.p_i) * exit;
                }
                Phase::I1 => {
                    m[(idx(Phase::I2, 1), col)] = (1.0 - params.p_h) * exit;
                    m[(idx(Phase::H, 1), col)] = params.p_h * exit;
                }
                _ => {}
            }
            m[(e1, col)] += rate;
        }
    }
    TransitionMatrix {
        params: params.clone(),
        dense: m,
    }
}

/// `T + 1` states starting at `x0`.
pub fn simulate_meanfield(m: &TransitionMatrix, x0: &StateVector, days: usize) -> Result<Vec<StateVector>> {
    let schedule = RateSchedule::constant(m.alpha_i(), m.alpha_a());
    simulate_meanfield_schedule(m.params(), &schedule, x0, days)
}

/// Mean-field trajectory with day-dependent contact rates.
pub fn simulate_meanfield_schedule(
    params: &DiseaseParams,
    schedule: &RateSchedule,
    x0: &StateVector,
    days: usize,
) -> Result<Vec<StateVector>> {
    if x0.dim() != params.dim() {
        return Err(EpiError::DimensionMismatch {
            expected: params.dim(),
            got: x0.dim(),
        });
    }
    let mut traj = Vec::with_capacity(days + 1);
    traj.push(x0.clone());
    for t in 0..days {
        let (ai, aa) = schedule.rates_at(t);
        let mut next = StateVector::zeros(params.h());
        meanfield_step(params, ai, aa, traj[t].as_slice(), next.as_mut_slice());
        traj.push(next);
    }
    Ok(traj)
}

/// Perron root and unit 1-norm eigenvector of `M`.
pub fn spectral_radius(m: &TransitionMatrix) -> Result<PerronPair> {
    perron_root(m, &PowerIterationOptions::default())
}

/// `exp` of the least-squares slope of `log(series)` against the day index.
pub fn estimate_growth_rate(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(EpiError::SeriesTooShort {
            needed: 2,
            got: series.len(),
        });
    }
    if let Some((i, &v)) = series.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(EpiError::NonPositiveSeries { index: i, value: v });
    }
    let n = series.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let logs: Vec<f64> = series.iter().map(|v| v.ln()).collect();
    let y_mean = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in logs.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    Ok((sxy / sxx).exp())
}

#[derive(Clone, Debug)]
pub struct ShockFitOptions {
    /// Days up to and including the shock day used to estimate the pre-shock
    /// growth rate.
    pub pre_window: usize,
    /// Candidate contact rates; also the bracket for refinement.
    pub rate_grid: Vec<f64>,
    /// Fit `alpha_i` and `alpha_a` separately instead of a common rate.
    pub separate_rates: bool,
    /// Allowed `|F(theta0) - lambda_hat|`.
    pub constraint_tol: f64,
}

impl Default for ShockFitOptions {
    fn default() -> Self {
        Self {
            pre_window: 14,
            rate_grid: (0..=40).map(|k| k as f64 * 0.025).collect(),
            separate_rates: false,
            constraint_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockFit {
    /// Pre-shock `(alpha_i, alpha_a)`.
    pub theta0: (f64, f64),
    /// Post-shock `(alpha_i, alpha_a)`.
    pub theta1: (f64, f64),
    /// Scale `C` with `C u_H = x_H(t0)`.
    pub scale: f64,
    /// Sum of squared post-shock errors.
    pub residual: f64,
    pub lambda_hat: f64,
}

fn perron_for(params: &DiseaseParams, ai: f64, aa: f64) -> Result<PerronPair> {
    let p = params.with_contact_rates(ai, aa)?;
    spectral_radius(&build_transition_matrix(&p))
}

/// Bisection for `F(rate) = target` along a monotone one-parameter family.
fn solve_rate<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64, target: f64) -> Result<Option<f64>> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if (flo - target) * (fhi - target) > 0.0 {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    let increasing = fhi >= flo;
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        let above = f(mid)? > target;
        if above == increasing {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // endpoints matter when the optimum sits on the boundary
    [(x, fx), (a, f(a)), (b, f(b))]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

/// Fits pre- and post-shock contact rates to an observed `x_H` series with a
/// shock on day `t0`. The pre-shock state is taken as `C u(theta0)` where
/// `u` is the Perron vector and `theta0` reproduces the pre-shock growth
/// rate; `theta1` minimizes the squared error of `[M(theta1)^(t-t0) C u]_H`
/// over the days after `t0`.
pub fn fit_shock(
    observed: &[f64],
    t0: usize,
    params: &DiseaseParams,
    opts: &ShockFitOptions,
) -> Result<ShockFit> {
    if t0 + 1 >= observed.len() {
        return Err(EpiError::EmptyWindow("no observations after the shock day".into()));
    }
    if opts.pre_window < 2 || t0 + 1 < opts.pre_window {
        return Err(EpiError::SeriesTooShort {
            needed: opts.pre_window.max(2),
            got: t0 + 1,
        });
    }
    let mut grid = opts.rate_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 2 || grid[0] < 0.0 {
        return Err(invalid("rate_grid", "need at least two nonnegative rates"));
    }
    let lambda_hat = estimate_growth_rate(&observed[t0 + 1 - opts.pre_window..=t0])?;

    // feasible theta0 candidates satisfying F(theta0) = lambda_hat
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let lo = grid[0];
    let hi = *grid.last().unwrap();
    if opts.separate_rates {
        for &ai in &grid {
            let f = |aa: f64| perron_for(params, ai, aa).map(|p| p.lambda);
            if let Some(aa) = solve_rate(f, lo, hi, lambda_hat)? {
                candidates.push((ai, aa));
            }
        }
    } else {
        let f = |a: f64| perron_for(params, a, a).map(|p| p.lambda);
        if let Some(a) = solve_rate(f, lo, hi, lambda_hat)? {
            candidates.push((a, a));
        }
    }
    let mut feasible = Vec::new();
    for (ai, aa) in candidates {
        let pair = perron_for(params, ai, aa)?;
        if (pair.lambda - lambda_hat).abs() <= opts.constraint_tol {
            feasible.push((ai, aa, pair));
        }
    }
    if feasible.is_empty() {
        return Err(EpiError::Infeasible(format!(
            "no pre-shock rate in [{lo}, {hi}] reproduces growth rate {lambda_hat:.6}"
        )));
    }

    let h = params.h();
    let h_idx = 5 * h;
    let targets = &observed[t0 + 1..];
    let mut best: Option<ShockFit> = None;
    for (ai, aa, pair) in feasible {
        let u_h = pair.vector[h_idx];
        if u_h <= 0.0 {
            return Err(EpiError::Infeasible(
                "Perron vector has no hospitalization mass; scale undefined".into(),
            ));
        }
        let scale = observed[t0] / u_h;
        let start = StateVector::from_vec(h, pair.vector.iter().map(|v| v * scale).collect())?;
        let loss = |bi: f64, ba: f64| -> f64 {
            let mut x = start.clone();
            let mut next = StateVector::zeros(h);
            let mut sse = 0.0;
            for &obs in targets {
                meanfield_step(params, bi, ba, x.as_slice(), next.as_mut_slice());
                std::mem::swap(&mut x, &mut next);
                let e = x.hospitalized() - obs;
                sse += e * e;
            }
            sse
        };
        let fit = if opts.separate_rates {
            let mut bi_best = (lo, lo, f64::INFINITY);
            for &bi in &grid {
                for &ba in &grid {
                    let v = loss(bi, ba);
                    if v < bi_best.2 {
                        bi_best = (bi, ba, v);
                    }
                }
            }
            let (mut bi, mut ba, mut val) = bi_best;
            let step = (hi - lo) / (grid.len() - 1) as f64;
            for _ in 0..4 {
                let (x, v) = golden_min(|z| loss(z, ba), (bi - step).max(lo), (bi + step).min(hi), 1e-9);
                if v <= val {
                    bi = x;
                    val = v;
                }
                let (x, v) = golden_min(|z| loss(bi, z), (ba - step).max(lo), (ba + step).min(hi), 1e-9);
                if v <= val {
                    ba = x;
                    val = v;
                }
            }
            (bi, ba, val)
        } else {
            let (k, _) = grid
                .iter()
                .enumerate()
                .map(|(k, &b)| (k, loss(b, b)))
                .min_by(|p, q| p.1.total_cmp(&q.1))
                .unwrap();
            let a = grid[k.saturating_sub(1)];
            let b = grid[(k + 1).min(grid.len() - 1)];
            let (x, v) = golden_min(|z| loss(z, z), a, b, 1e-10);
            (x, x, v)
        };
        let candidate = ShockFit {
            theta0: (ai, aa),
            theta1: (fit.0, fit.1),
            scale,
            residual: fit.2,
            lambda_hat,
        };
        if best.as_ref().is_none_or(|b| candidate.residual < b.residual) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one feasible candidate"))
}

/// Coefficients `a_1..a_n` with `x(t) = sum_i a_i x(t - i)` for every
/// mean-field trajectory, from the characteristic polynomial of `M`
/// (Faddeev-LeVerrier recurrence). Loses accuracy quickly as the dimension
/// grows; keep `h` small.
pub fn ar_coefficients(m: &TransitionMatrix) -> Result<Vec<f64>> {
    characteristic_ar(m.dense())
}

pub fn characteristic_ar(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    // c[k] is the coefficient of z^k, c[n] = 1
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut mk = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = a * &mk;
        for i in 0..n {
            next[(i, i)] += c[n - k + 1];
        }
        let am = a * &next;
        c[n - k] = -am.trace() / k as f64;
        if !c[n - k].is_finite() {
            return Err(EpiError::Overflow(format!(
                "characteristic coefficient {} overflowed; reduce h",
                n - k
            )));
        }
        mk = next;
    }
    Ok((1..=n).map(|i| -c[n - i]).collect())
}

/// One-step autoregressive prediction from the most recent `coeffs.len()`
/// values (`history` oldest first).
pub fn ar_predict(coeffs: &[f64], history: &[f64]) -> Result<f64> {
    if history.len() < coeffs.len() {
        return Err(EpiError::SeriesTooShort {
            needed: coeffs.len(),
            got: history.len(),
        });
    }
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| a * history[history.len() - 1 - i])
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{baseline_params, baseline_params_with_horizon, PhaseDurationDist};
    use crate::spectral::dense_spectral_radius;

    fn zero_rates() -> DiseaseParams {
        baseline_params().with_contact_rates(0.0, 0.0).unwrap()
    }

    #[test]
    fn dense_matches_structured_step() {
        let p = baseline_params();
        let m = build_transition_matrix(&p);
        let x: Vec<f64> = (0..p.dim()).map(|i| ((i * 37) % 11) as f64 + 0.5).collect();
        let mut a = vec![0.0; p.dim()];
        let mut b = vec![0.0; p.dim()];
        m.dense().apply(&x, &mut a);
        LinearOperator::apply(&m, &x, &mut b);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn zero_rates_nilpotent() {
        let m = build_transition_matrix(&zero_rates());
        assert_eq!(spectral_radius(&m).unwrap().lambda, 0.0);
    }

    #[test]
    fn first_day_from_exposed() {
        let p = baseline_params();
        let m = build_transition_matrix(&p);
        let x0 = StateVector::unit(25, Phase::E, 1, 200.0).unwrap();
        let x1 = m.apply(&x0).unwrap();
        let expected = StateVector::unit(25, Phase::E, 2, 200.0).unwrap();
        assert_eq!(x1, expected);
    }

    #[test]
    fn prodromic_exit_split() {
        let p = baseline_params().with_contact_rates(0.0, 0.0).unwrap();
        let m = build_transition_matrix(&p);
        let x = StateVector::unit(25, Phase::P, 2, 1.0).unwrap();
        let y = m.apply(&x).unwrap();
        assert!((y.get(Phase::I1, 1).unwrap() - 0.7).abs() < 1e-15);
        assert!((y.get(Phase::A, 1).unwrap() - 0.3).abs() < 1e-15);
        assert!((y.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_trajectories() {
        let m = build_transition_matrix(&baseline_params());
        let x0 = StateVector::unit(25, Phase::I1, 3, 4.0).unwrap();
        assert_eq!(simulate_meanfield(&m, &x0, 0).unwrap(), vec![x0.clone()]);
        let bad = StateVector::zeros(3);
        assert!(simulate_meanfield(&m, &bad, 2).is_err());
    }

    #[test]
    fn asymptomatic_walk() {
        let m = build_transition_matrix(&zero_rates());
        let x0 = StateVector::unit(25, Phase::A, 1, 1.0).unwrap();
        let traj = simulate_meanfield(&m, &x0, 12).unwrap();
        for (t, x) in traj.iter().enumerate().take(11) {
            assert_eq!(x.get(Phase::A, t + 1).unwrap(), 1.0);
            assert_eq!(x.total(), 1.0);
        }
        assert_eq!(traj[11].total(), 0.0);
    }

    #[test]
    fn exit_split_exactness() {
        let p = baseline_params();
        let m = build_transition_matrix(&p);
        let x0 = StateVector::unit(25, Phase::E, 1, 100.0).unwrap();
        let traj = simulate_meanfield(&m, &x0, 40).unwrap();
        for w in traj.windows(2) {
            let exits = |ph: Phase| -> f64 {
                w[0].block(ph).iter().zip(p.rates(ph)).map(|(x, r)| x * r).sum()
            };
            let i1 = exits(Phase::I1);
            let split = w[1].get(Phase::I2, 1).unwrap() + w[1].hospitalized();
            assert!((i1 - split).abs() <= 1e-12 * i1.max(1.0));
            let pe = exits(Phase::P);
            let split = w[1].get(Phase::I1, 1).unwrap() + w[1].get(Phase::A, 1).unwrap();
            assert!((pe - split).abs() <= 1e-12 * pe.max(1.0));
        }
    }

    #[test]
    fn growth_rate_examples() {
        let series: Vec<f64> = (0..10).map(|t| 3.0 * 1.2f64.powi(t)).collect();
        assert!((estimate_growth_rate(&series).unwrap() - 1.2).abs() < 1e-12);
        assert!((estimate_growth_rate(&[5.0; 6]).unwrap() - 1.0).abs() < 1e-15);
        assert!(estimate_growth_rate(&[1.0, 0.0, 2.0]).is_err());
        assert!(estimate_growth_rate(&[1.0]).is_err());
    }

    #[test]
    fn growth_rate_matches_perron_root() {
        let p = baseline_params();
        let m = build_transition_matrix(&p);
        let rho = spectral_radius(&m).unwrap().lambda;
        let x0 = StateVector::unit(25, Phase::E, 1, 200.0).unwrap();
        let traj = simulate_meanfield(&m, &x0, 120).unwrap();
        let tail: Vec<f64> = traj[90..=120].iter().map(|x| x.hospitalized()).collect();
        let est = estimate_growth_rate(&tail).unwrap();
        assert!((est - rho).abs() / rho < 0.01, "{est} vs {rho}");
    }

    #[test]
    fn perron_vector_dominance() {
        let p = baseline_params();
        let m = build_transition_matrix(&p);
        let pair = spectral_radius(&m).unwrap();
        let x0 = StateVector::unit(25, Phase::E, 1, 1.0).unwrap();
        let traj = simulate_meanfield(&m, &x0, 120).unwrap();
        let x = traj[120].as_slice();
        let dot: f64 = x.iter().zip(&pair.vector).map(|(a, b)| a * b).sum();
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nu = pair.vector.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(1.0 - dot / (nx * nu) < 1e-6);
    }

    #[test]
    fn perron_root_monotone_in_rates() {
        let base = baseline_params();
        let grid = [0.0, 0.1, 0.2, 0.3, 0.4];
        for &aa in &grid {
            let mut prev = -1.0;
            for &ai in &grid {
                let m = build_transition_matrix(&base.with_contact_rates(ai, aa).unwrap());
                let l = spectral_radius(&m).unwrap().lambda;
                assert!(l >= prev - 1e-12);
                prev = l;
            }
        }
    }

    #[test]
    fn residual_and_dense_agreement() {
        let m = build_transition_matrix(&baseline_params());
        let pair = spectral_radius(&m).unwrap();
        let mut mu = vec![0.0; m.dim()];
        m.dense().apply(&pair.vector, &mut mu);
        let res: f64 = mu.iter().zip(&pair.vector).map(|(a, b)| (a - pair.lambda * b).abs()).sum();
        assert!(res <= 1e-10);
        let oracle = dense_spectral_radius(m.dense());
        assert!((pair.lambda - oracle).abs() / oracle < 1e-8);
    }

    fn synthetic_shock(theta0: f64, theta1: f64, t0: usize, len: usize) -> Vec<f64> {
        let p = baseline_params().with_contact_rates(theta0, theta0).unwrap();
        let pair = spectral_radius(&build_transition_matrix(&p)).unwrap();
        let mut x = StateVector::from_vec(25, pair.vector.iter().map(|v| v * 1e4).collect()).unwrap();
        let mut out = Vec::new();
        let mut next = StateVector::zeros(25);
        for t in 0..len {
            out.push(x.hospitalized());
            let a = if t < t0 { theta0 } else { theta1 };
            meanfield_step(&p, a, a, x.as_slice(), next.as_mut_slice());
            std::mem::swap(&mut x, &mut next);
        }
        out
    }

    #[test]
    fn shock_recovery() {
        let params = baseline_params();
        let obs = synthetic_shock(0.35, 0.1, 30, 60);
        let fit = fit_shock(&obs, 30, &params, &ShockFitOptions::default()).unwrap();
        assert!((fit.theta0.0 - 0.35).abs() / 0.35 < 0.05, "{fit:?}");
        assert!((fit.theta1.0 - 0.1).abs() / 0.1 < 0.05, "{fit:?}");
    }

    #[test]
    fn shock_absent() {
        let params = baseline_params();
        let obs = synthetic_shock(0.3, 0.3, 30, 50);
        let fit = fit_shock(&obs, 30, &params, &ShockFitOptions::default()).unwrap();
        assert!((fit.theta1.0 - fit.theta0.0).abs() < 0.025, "{fit:?}");
    }

    #[test]
    fn shock_to_zero_hits_grid_floor() {
        let params = baseline_params();
        let obs = synthetic_shock(0.3, 0.0, 30, 55);
        let fit = fit_shock(&obs, 30, &params, &ShockFitOptions::default()).unwrap();
        assert!(fit.theta1.0 < 1e-6, "{fit:?}");
    }

    #[test]
    fn shock_two_rates() {
        let params = baseline_params();
        let obs = synthetic_shock(0.3, 0.1, 30, 60);
        let opts = ShockFitOptions {
            separate_rates: true,
            rate_grid: (0..=10).map(|k| k as f64 * 0.05).collect(),
            ..Default::default()
        };
        let fit = fit_shock(&obs, 30, &params, &opts).unwrap();
        assert!(fit.residual.is_finite());
        let l = perron_for(&params, fit.theta0.0, fit.theta0.1).unwrap().lambda;
        assert!((l - fit.lambda_hat).abs() <= 1e-3);
    }

    #[test]
    fn shock_errors() {
        let params = baseline_params();
        let obs = synthetic_shock(0.3, 0.1, 30, 31);
        assert!(matches!(
            fit_shock(&obs, 30, &params, &ShockFitOptions::default()),
            Err(EpiError::EmptyWindow(_))
        ));
        let obs = synthetic_shock(0.3, 0.1, 30, 50);
        let opts = ShockFitOptions {
            rate_grid: vec![0.0, 0.05],
            ..Default::default()
        };
        assert!(matches!(fit_shock(&obs, 30, &params, &opts), Err(EpiError::Infeasible(_))));
    }

    fn small_params(ai: f64, aa: f64) -> DiseaseParams {
        let h = 4;
        let d = [
            PhaseDurationDist::uniform(Phase::E, &[2, 3], h).unwrap(),
            PhaseDurationDist::uniform(Phase::P, &[1, 2], h).unwrap(),
            PhaseDurationDist::uniform(Phase::I1, &[2, 3], h).unwrap(),
            PhaseDurationDist::point_mass(Phase::A, 4, h).unwrap(),
            PhaseDurationDist::point_mass(Phase::I2, 2, h).unwrap(),
        ];
        DiseaseParams::new(h, d, 0.7, 0.2, 0.0, ai, aa).unwrap()
    }

    #[test]
    fn ar_scalar() {
        let a = DMatrix::from_element(1, 1, 1.7);
        assert_eq!(characteristic_ar(&a).unwrap(), vec![1.7]);
    }

    #[test]
    fn ar_identity_on_trajectory() {
        let p = small_params(0.4, 0.3);
        let m = build_transition_matrix(&p);
        let coeffs = ar_coefficients(&m).unwrap();
        let d = coeffs.len();
        let x0 = StateVector::unit(4, Phase::E, 1, 10.0).unwrap();
        let traj = simulate_meanfield(&m, &x0, d + 30).unwrap();
        let xh: Vec<f64> = traj.iter().map(|x| x.hospitalized()).collect();
        for t in d..xh.len() {
            let pred = ar_predict(&coeffs, &xh[..t]).unwrap();
            assert!((pred - xh[t]).abs() <= 1e-6 * xh[t].abs().max(1e-12), "t={t}: {pred} vs {}", xh[t]);
        }
    }

    #[test]
    fn ar_nilpotent_predicts_zero() {
        let p = baseline_params_with_horizon(12).unwrap().with_contact_rates(0.0, 0.0).unwrap();
        let coeffs = ar_coefficients(&build_transition_matrix(&p)).unwrap();
        assert!(coeffs.iter().all(|&a| a == 0.0));
        assert_eq!(ar_predict(&coeffs, &vec![3.0; coeffs.len()]).unwrap(), 0.0);
    }
}
