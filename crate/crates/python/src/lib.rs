//! Python bindings for the epibranch engines. States cross the boundary as
//! flat lists in the `(E, P, I1, A, I2, H)` day-indexed layout.

use std::collections::BTreeMap;

use epibranch::fitting::{FitSearch, LogTransform};
use epibranch::params::ParamsConfig;
use epibranch::routing::MaxentOptions;
use epibranch::{
    self as core, baseline_params, build_transition_matrix, CountVector, EpiError, FitGrid, FitOptions,
    FitParams, FilterOptions, FilterState, LossKind, Phase, RateSchedule, StateVector, TracingConfig,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: EpiError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn phase(s: &str) -> PyResult<Phase> {
    Phase::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown phase `{s}`")))
}

#[pyclass(name = "DiseaseParams", module = "pyepibranch", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: core::DiseaseParams,
}

#[pymethods]
impl PyParams {
    #[staticmethod]
    fn baseline() -> Self {
        Self { inner: baseline_params() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::DiseaseParams::from_toml_str(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn with_contact_rates(&self, alpha_i: f64, alpha_a: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_contact_rates(alpha_i, alpha_a).map_err(err)?,
        })
    }

    #[getter]
    fn h(&self) -> usize {
        self.inner.h()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn alpha_i(&self) -> f64 {
        self.inner.contact_rate(Phase::I1)
    }

    #[getter]
    fn alpha_a(&self) -> f64 {
        self.inner.contact_rate(Phase::A)
    }

    /// Failure rates `r(1..=h)` of one phase.
    fn failure_rates(&self, phase_name: &str) -> PyResult<Vec<f64>> {
        let p = phase(phase_name)?;
        if p == Phase::H {
            return Err(PyValueError::new_err("H has no duration law"));
        }
        Ok(self.inner.rates(p).to_vec())
    }

    fn state_index(&self, phase_name: &str, day: usize) -> PyResult<usize> {
        core::state_index(phase(phase_name)?, day, self.inner.h()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "DiseaseParams(h={}, alpha_i={}, alpha_a={})",
            self.inner.h(),
            self.alpha_i(),
            self.alpha_a()
        )
    }
}

/// Parameters from keyword fields, mirroring the on-disk TOML form.
#[pyfunction]
#[pyo3(signature = (p_i, p_h, alpha_i, alpha_a, durations, h = 20, p_d = 0.0))]
fn make_params(
    p_i: f64,
    p_h: f64,
    alpha_i: f64,
    alpha_a: f64,
    durations: BTreeMap<String, Vec<f64>>,
    h: usize,
    p_d: f64,
) -> PyResult<PyParams> {
    let cfg = ParamsConfig {
        h,
        p_i,
        p_h,
        p_d,
        alpha_i,
        alpha_a,
        durations,
    };
    Ok(PyParams {
        inner: cfg.into_params().map_err(err)?,
    })
}

fn state(params: &PyParams, x0: Vec<f64>) -> PyResult<StateVector> {
    StateVector::from_vec(params.inner.h(), x0).map_err(err)
}

#[pyfunction]
fn simulate_meanfield(params: &PyParams, x0: Vec<f64>, days: usize) -> PyResult<Vec<Vec<f64>>> {
    let m = build_transition_matrix(&params.inner);
    let traj = core::simulate_meanfield(&m, &state(params, x0)?, days).map_err(err)?;
    Ok(traj.into_iter().map(StateVector::into_vec).collect())
}

#[pyfunction]
#[pyo3(signature = (params, x0, days, seed, stream = 0))]
fn simulate_stochastic(
    py: Python<'_>,
    params: &PyParams,
    x0: Vec<u64>,
    days: usize,
    seed: u64,
    stream: u64,
) -> PyResult<Vec<Vec<u64>>> {
    let p = &params.inner;
    let x = CountVector::from_vec(p.h(), x0).map_err(err)?;
    let schedule = RateSchedule::constant(p.contact_rate(Phase::I1), p.contact_rate(Phase::A));
    let run = py
        .detach(|| core::branching::simulate_replication(&x, p, &schedule, days, seed, stream))
        .map_err(err)?;
    Ok(run.states.into_iter().map(CountVector::into_vec).collect())
}

#[pyfunction]
fn spectral_radius(params: &PyParams) -> PyResult<f64> {
    Ok(core::spectral_radius(&build_transition_matrix(&params.inner))
        .map_err(err)?
        .lambda)
}

/// Perron root of the extended progeny matrix under case isolation and
/// contact tracing.
#[pyfunction]
#[pyo3(signature = (params, p_t, epsilon, d_max = 20))]
fn tracing_rho(py: Python<'_>, params: &PyParams, p_t: f64, epsilon: f64, d_max: usize) -> PyResult<f64> {
    let cfg = TracingConfig::new(p_t, epsilon, d_max).map_err(err)?;
    py.detach(|| core::tracing_progeny_matrix(&cfg, &params.inner)?.spectral_radius())
        .map_err(err)
}

/// Filtered means and standard deviations per day from daily admissions;
/// `None` entries are predict-only days.
#[pyfunction]
fn filter_hospitalizations(
    py: Python<'_>,
    params: &PyParams,
    admissions: Vec<Option<f64>>,
    x0: Vec<f64>,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let initial = FilterState::exact(&state(params, x0)?);
    let run = py
        .detach(|| core::filter_hospitalizations(&admissions, &params.inner, initial, &FilterOptions::default()))
        .map_err(err)?;
    let means = run.states.iter().map(|s| s.x_hat.iter().copied().collect()).collect();
    let stds = run.states.iter().map(FilterState::std).collect();
    Ok((means, stds))
}

#[pyfunction]
fn loss_l1(simulated: Vec<Vec<f64>>, observed: Vec<f64>) -> PyResult<(f64, f64)> {
    let e = core::loss_l1(&simulated, &observed).map_err(err)?;
    Ok((e.mean, e.half_width))
}

#[pyfunction]
fn loss_l1_log(simulated: Vec<Vec<f64>>, observed: Vec<f64>) -> PyResult<(f64, f64)> {
    let e = core::loss_l1_log(&simulated, &observed).map_err(err)?;
    Ok((e.mean, e.half_width))
}

/// Grid search; `grid` maps each of `x_e0, alpha1, t2, alpha2, t3, alpha3`
/// to its candidate values. Returns the best point and its loss.
#[pyfunction]
#[pyo3(signature = (observed, grid, params, seed, n_reps = 200, loss = "l1log", refine_rounds = 2))]
fn grid_search_fit(
    py: Python<'_>,
    observed: Vec<f64>,
    grid: BTreeMap<String, Vec<f64>>,
    params: &PyParams,
    seed: u64,
    n_reps: usize,
    loss: &str,
    refine_rounds: usize,
) -> PyResult<(BTreeMap<String, f64>, f64, f64)> {
    let axis = |name: &str| -> PyResult<Vec<f64>> {
        grid.get(name)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("grid is missing `{name}`")))
    };
    let ints = |name: &str| -> PyResult<Vec<usize>> {
        axis(name)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(PyValueError::new_err(format!("`{name}` needs whole numbers, got {v}")))
                }
            })
            .collect()
    };
    let g = FitGrid {
        x_e0: ints("x_e0")?.into_iter().map(|v| v as u64).collect(),
        alpha1: axis("alpha1")?,
        t2: ints("t2")?,
        alpha2: axis("alpha2")?,
        t3: ints("t3")?,
        alpha3: axis("alpha3")?,
    };
    let opts = FitOptions {
        n_reps,
        loss: match loss {
            "l1" => LossKind::L1,
            "l1log" => LossKind::L1Log,
            other => return Err(PyValueError::new_err(format!("unknown loss `{other}`"))),
        },
        log_transform: LogTransform::MaxOne,
        seed,
        refine_rounds,
    };
    let FitSearch { best, .. } = py
        .detach(|| core::grid_search_fit(&observed, &g, &params.inner, &opts))
        .map_err(err)?;
    let FitParams { x_e0, schedule } = best.params_hat;
    let (t2, t3) = schedule.breakpoints;
    let [a1, a2, a3] = schedule.rates;
    let point = BTreeMap::from([
        ("x_e0".to_string(), x_e0 as f64),
        ("alpha1".into(), a1),
        ("t2".into(), t2 as f64),
        ("alpha2".into(), a2),
        ("t3".into(), t3 as f64),
        ("alpha3".into(), a3),
    ]);
    Ok((point, best.train_loss.mean, best.train_loss.half_width))
}

/// Maximum-entropy routing matrix from aggregate flows. `cohorts` lists
/// `(region, night, age, population)`; `flows` maps `(r1, r2, age)` to
/// people, absent keys meaning no flow.
#[pyfunction]
fn maxent_routing(
    cohorts: Vec<(usize, usize, usize, f64)>,
    flows: BTreeMap<(usize, usize, usize), f64>,
) -> PyResult<Vec<Vec<f64>>> {
    let obs = core::FlowObservation {
        cohorts: cohorts
            .into_iter()
            .map(|(region, night, age, population)| core::Cohort {
                id: core::CohortId { region, night, age },
                population,
            })
            .collect(),
        flows,
    };
    let sol = core::maxent_routing(&obs, &MaxentOptions::default()).map_err(err)?;
    let k = sol.routing.dim();
    Ok((0..k).map(|i| (0..k).map(|j| sol.routing.get(i, j)).collect()).collect())
}

#[pymodule]
fn pyepibranch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(make_params, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_meanfield, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_stochastic, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(tracing_rho, m)?)?;
    m.add_function(wrap_pyfunction!(filter_hospitalizations, m)?)?;
    m.add_function(wrap_pyfunction!(loss_l1, m)?)?;
    m.add_function(wrap_pyfunction!(loss_l1_log, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search_fit, m)?)?;
    m.add_function(wrap_pyfunction!(maxent_routing, m)?)?;
    Ok(())
}
