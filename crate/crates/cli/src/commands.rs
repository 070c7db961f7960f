//! Command dispatch. Each command reads the config and flags, calls one
//! engine, and returns the files to write.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use epibranch::fitting::{FitSearch, LogTransform};
use epibranch::kalman::Innovation;
use epibranch::mobility::{moving_average, normalize_flow_window, phases_from_breakpoints};
use epibranch::routing::{MaxentOptions, MaxentSolution};
use epibranch::schedule::RateSchedule;
use epibranch::*;
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{parse_phase, InitialEntry, RunConfig, WeightChoice};
use crate::io::{self, num, table_csv, ObservationSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    SimulateStochastic,
    Fit,
    Predict,
    Filter,
    Spectral,
    TracingSweep,
    Routing,
    RoutingEstimate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SimulateStochastic => "simulate-stochastic",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Filter => "filter",
            Command::Spectral => "spectral",
            Command::TracingSweep => "tracing-sweep",
            Command::Routing => "routing",
            Command::RoutingEstimate => "routing-estimate",
        }
    }

    /// Commands that draw random numbers and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Command::SimulateStochastic | Command::Fit | Command::Predict)
    }
}

/// Everything a command may read. Flags win over config values.
#[derive(Clone, Debug, Default)]
pub struct Inputs {
    pub config: RunConfig,
    pub config_text: String,
    pub data: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub loss: Option<String>,
    pub train_end: Option<String>,
    pub test_end: Option<String>,
}

impl Inputs {
    pub fn seed(&self) -> Option<u64> {
        self.seed.or(self.config.seed)
    }

    fn require_seed(&self, cmd: Command) -> Result<u64> {
        self.seed()
            .ok_or_else(|| anyhow!("`{}` is stochastic and needs --seed or a `seed` entry in the config", cmd.name()))
    }

    fn observations(&self) -> Result<ObservationSeries> {
        let path = self.data.as_ref().ok_or_else(|| anyhow!("--data is required"))?;
        io::load_observations(path).with_context(|| format!("loading {}", path.display()))
    }

    fn date_flag(flag: &str, value: &Option<String>) -> Result<Option<NaiveDate>> {
        value
            .as_deref()
            .map(|s| io::parse_date(s).ok_or_else(|| anyhow!("{flag}: bad date `{s}`")))
            .transpose()
    }
}

/// Named output files in write order.
pub type Outputs = BTreeMap<String, String>;

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub outputs: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `cmd` and writes its outputs plus `manifest.json` into `out`.
pub fn run(cmd: Command, inputs: &Inputs, out: &Path) -> Result<Manifest> {
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    if cmd.is_stochastic() {
        inputs.require_seed(cmd)?;
    }
    let files = dispatch(cmd, inputs)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, body) in &files {
        let path = out.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut hashed = BTreeMap::new();
    for (flag, path) in [("data", &inputs.data), ("mobility", &inputs.mobility), ("flows", &inputs.flows)] {
        if let Some(p) = path {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            hashed.insert(flag.to_string(), sha256_hex(&bytes));
        }
    }
    let manifest = Manifest {
        command: cmd,
        config_hash: sha256_hex(inputs.config_text.as_bytes()),
        seed: inputs.seed(),
        started_at,
        outputs: files.keys().cloned().collect(),
        inputs: hashed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn dispatch(cmd: Command, inputs: &Inputs) -> Result<Outputs> {
    match cmd {
        Command::Simulate => simulate(inputs),
        Command::SimulateStochastic => simulate_stochastic_cmd(inputs),
        Command::Fit => fit(inputs),
        Command::Predict => predict(inputs),
        Command::Filter => filter(inputs),
        Command::Spectral => spectral(inputs),
        Command::TracingSweep => tracing_sweep(inputs),
        Command::Routing => routing(inputs),
        Command::RoutingEstimate => routing_estimate(inputs),
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn state_labels(h: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(5 * h + 1);
    for phase in Phase::TIMED {
        for d in 1..=h {
            out.push(format!("{}_{d}", phase.label()));
        }
    }
    out.push("H".into());
    out
}

fn initial_state(entries: &[InitialEntry], h: usize) -> Result<StateVector> {
    let mut x = StateVector::zeros(h);
    for e in entries {
        if !(e.count >= 0.0) {
            bail!("initial count {} for {}{} is negative", e.count, e.phase, e.day);
        }
        x[state_index(parse_phase(&e.phase)?, e.day, h)?] += e.count;
    }
    Ok(x)
}

fn initial_counts(entries: &[InitialEntry], h: usize) -> Result<CountVector> {
    let x = initial_state(entries, h)?;
    let values = x
        .as_slice()
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 {
                bail!("stochastic runs need integer initial counts, got {v}");
            }
            Ok(v as u64)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(CountVector::from_vec(h, values)?)
}

fn wide_rows<T: Copy + Into<f64>>(states: &[&[T]]) -> Vec<Vec<String>> {
    states
        .iter()
        .enumerate()
        .map(|(t, s)| std::iter::once(t.to_string()).chain(s.iter().map(|v| num((*v).into()))).collect())
        .collect()
}

fn trajectory_csv<T: Copy + Into<f64>>(states: &[&[T]], h: usize) -> String {
    let labels = state_labels(h);
    let mut header = vec!["t"];
    header.extend(labels.iter().map(String::as_str));
    table_csv(&header, &wide_rows(states))
}

/// Per-day rates from `[mobility]` and `--mobility` when both are present.
fn rate_schedule(inputs: &Inputs, params: &DiseaseParams, days: usize) -> Result<RateSchedule> {
    let (Some(section), Some(path)) = (&inputs.config.mobility, &inputs.mobility) else {
        return Ok(RateSchedule::constant(params.contact_rate(Phase::I1), params.contact_rate(Phase::A)));
    };
    let series = io::load_mobility(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(gap) = series.gaps().first() {
        bail!("mobility series has no value on {gap}");
    }
    let mut raw: Vec<f64> = series.values.iter().map(|v| v.expect("no gaps")).collect();
    if let Some(w) = section.smooth {
        raw = moving_average(&raw, w);
    }
    let f = normalize_flow_window(&raw, section.train_len.unwrap_or(raw.len()))?;
    let base = section.base.iter().map(|&[i, a]| (i, a)).collect();
    let spec = MobilityRateSpec::new(base, section.gamma_i, section.gamma_a, section.form, &f)?;
    Ok(mobility_schedule(&spec, &phases_from_breakpoints(&section.breakpoints, days.min(raw.len())), &f)?)
}

fn simulate(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let params = cfg.disease_params()?;
    let h = params.h();
    let x0 = initial_state(&cfg.simulate.initial, h)?;
    let days = cfg.simulate.days;
    let schedule = rate_schedule(inputs, &params, days)?;
    let mut states = vec![x0];
    for t in 0..days {
        let (ai, aa) = schedule.rates_at(t);
        let mut y = StateVector::zeros(h);
        epibranch::meanfield::meanfield_step(&params, ai, aa, states[t].as_slice(), y.as_mut_slice());
        states.push(y);
    }
    let slices: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
    let hosp: Vec<Vec<String>> = states
        .iter()
        .enumerate()
        .map(|(t, s)| vec![t.to_string(), num(s.hospitalized())])
        .collect();
    Ok(BTreeMap::from([
        ("hospitalized.csv".into(), table_csv(&["t", "x_h"], &hosp)),
        ("trajectory.csv".into(), trajectory_csv(&slices, h)),
    ]))
}

fn simulate_stochastic_cmd(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let seed = inputs.require_seed(Command::SimulateStochastic)?;
    let params = cfg.disease_params()?;
    let h = params.h();
    let x0 = initial_counts(&cfg.simulate.initial, h)?;
    let days = cfg.simulate.days;
    let reps = inputs.reps.unwrap_or(cfg.simulate.reps);
    let schedule = rate_schedule(inputs, &params, days)?;
    let runs = (0..reps as u64)
        .map(|r| epibranch::branching::simulate_replication(&x0, &params, &schedule, days, seed, r))
        .collect::<epibranch::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for run in &runs {
        for (t, s) in run.states.iter().enumerate() {
            rows.push(vec![run.stream.to_string(), t.to_string(), s.hospitalized().to_string()]);
        }
    }
    let mut out = BTreeMap::from([("hospitalized.csv".to_string(), table_csv(&["rep", "t", "x_h"], &rows))]);
    if let Some(first) = runs.first() {
        let slices: Vec<&[u64]> = first.states.iter().map(|s| s.as_slice()).collect();
        let rows: Vec<Vec<String>> = slices
            .iter()
            .enumerate()
            .map(|(t, s)| std::iter::once(t.to_string()).chain(s.iter().map(u64::to_string)).collect())
            .collect();
        let labels = state_labels(h);
        let mut header = vec!["t"];
        header.extend(labels.iter().map(String::as_str));
        out.insert("trajectory.csv".into(), table_csv(&header, &rows));
    }
    Ok(out)
}

/// Day index of an optional date flag, defaulting to the last day.
fn day_index(series: &ObservationSeries, flag: &str, date: Option<NaiveDate>) -> Result<usize> {
    match date {
        None => Ok(series.len() - 1),
        Some(d) => series
            .index_of(d)
            .ok_or_else(|| anyhow!("{flag} {d} precedes the first observation {}", series.start)),
    }
}

/// Values on days `0..=end` with no gaps allowed.
fn complete_window(series: &ObservationSeries, end: usize) -> Result<Vec<f64>> {
    if end >= series.len() {
        bail!("window ends on {} but observations stop on {}", series.date(end), series.date(series.len() - 1));
    }
    (0..=end)
        .map(|i| {
            series.values[i]
                .map(|v| v as f64)
                .ok_or_else(|| anyhow!("no observation on {}", series.date(i)))
        })
        .collect()
}

fn loss_kind(inputs: &Inputs) -> Result<LossKind> {
    match inputs.loss.as_deref().or(inputs.config.fit.loss.as_deref()).unwrap_or("l1log") {
        "l1" => Ok(LossKind::L1),
        "l1log" | "l1-log" => Ok(LossKind::L1Log),
        other => bail!("unknown loss `{other}` (expected l1 or l1log)"),
    }
}

#[derive(Serialize)]
struct FitSummary {
    start: NaiveDate,
    t2_date: NaiveDate,
    t3_date: NaiveDate,
    train_end: NaiveDate,
    test_end: Option<NaiveDate>,
    points_evaluated: usize,
}

fn fit(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let seed = inputs.require_seed(Command::Fit)?;
    let params = cfg.disease_params()?;
    let series = inputs.observations()?;
    let train_end = day_index(&series, "--train-end", Inputs::date_flag("--train-end", &inputs.train_end)?)?;
    let test_end = Inputs::date_flag("--test-end", &inputs.test_end)?
        .map(|d| day_index(&series, "--test-end", Some(d)))
        .transpose()?;
    let observed = complete_window(&series, train_end)?;
    let grid = cfg.fit.grid.clone().ok_or_else(|| anyhow!("fit needs a [fit.grid] section"))?;
    let opts = FitOptions {
        n_reps: inputs.reps.or(cfg.fit.reps).unwrap_or(200),
        loss: loss_kind(inputs)?,
        log_transform: LogTransform::MaxOne,
        seed,
        refine_rounds: cfg.fit.refine_rounds.unwrap_or(2),
    };
    let FitSearch { mut best, points } = grid_search_fit(&observed, &grid, &params, &opts)?;
    if let Some(end) = test_end {
        if end <= train_end {
            bail!("--test-end must follow --train-end");
        }
        let held_out = complete_window(&series, end)?[train_end + 1..].to_vec();
        best.pred_loss = Some(prediction_error(&best.params_hat, &params, train_end, &held_out, opts.n_reps, seed)?);
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let (t2, t3) = p.params.schedule.breakpoints;
            let [a1, a2, a3] = p.params.schedule.rates;
            let (m, hw) = p.loss.map_or((String::new(), String::new()), |l| (num(l.mean), num(l.half_width)));
            vec![
                p.round.to_string(),
                p.params.x_e0.to_string(),
                num(a1),
                t2.to_string(),
                num(a2),
                t3.to_string(),
                num(a3),
                m,
                hw,
            ]
        })
        .collect();
    let (t2, t3) = best.params_hat.schedule.breakpoints;
    let summary = FitSummary {
        start: series.start,
        t2_date: series.date(t2),
        t3_date: series.date(t3),
        train_end: series.date(train_end),
        test_end: test_end.map(|e| series.date(e)),
        points_evaluated: points.len(),
    };
    Ok(BTreeMap::from([
        ("fit_result.json".into(), json(&best)?),
        ("fit_summary.json".into(), json(&summary)?),
        (
            "fit_points.csv".into(),
            table_csv(&["round", "x_e0", "alpha1", "t2", "alpha2", "t3", "alpha3", "loss", "half_width"], &rows),
        ),
    ]))
}

fn predict_params(inputs: &Inputs) -> Result<FitParams> {
    let p = &inputs.config.predict;
    if let Some(path) = &p.fit_result {
        let path = inputs.config.resolve(path);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let r: FitResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        return Ok(r.params_hat);
    }
    match (p.x_e0, p.alpha, p.breakpoints) {
        (Some(x), Some([a1, a2, a3]), Some((t2, t3))) => Ok(FitParams::new(x, a1, t2, a2, t3, a3)?),
        _ => bail!("[predict] needs fit_result, or x_e0, alpha and breakpoints"),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn predict(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let seed = inputs.require_seed(Command::Predict)?;
    let params = cfg.disease_params()?;
    let fitted = predict_params(inputs)?;
    let series = inputs.data.as_ref().map(|_| inputs.observations()).transpose()?;
    let test_end = Inputs::date_flag("--test-end", &inputs.test_end)?;
    let days = match (cfg.predict.days, &series, test_end) {
        (Some(d), _, _) => d,
        (None, Some(s), Some(d)) => day_index(s, "--test-end", Some(d))?,
        (None, Some(s), None) => s.len() - 1,
        (None, None, _) => bail!("predict needs [predict].days or --data"),
    };
    let reps = inputs.reps.or(cfg.predict.reps).unwrap_or(200);
    if reps == 0 {
        bail!("reps must be positive");
    }
    let sims = (0..reps as u64)
        .map(|r| epibranch::fitting::simulate_admissions(&fitted, &params, days, seed, r))
        .collect::<epibranch::Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(days + 1);
    for t in 0..=days {
        let mut v: Vec<f64> = sims.iter().map(|s| s[t]).collect();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let observed = series
            .as_ref()
            .and_then(|s| s.values.get(t).copied().flatten())
            .map_or(String::new(), |o| o.to_string());
        rows.push(vec![
            t.to_string(),
            num(mean),
            num(quantile(&v, 0.05)),
            num(quantile(&v, 0.5)),
            num(quantile(&v, 0.95)),
            observed,
        ]);
    }
    let mut out = BTreeMap::from([(
        "prediction.csv".to_string(),
        table_csv(&["t", "mean", "q05", "median", "q95", "observed"], &rows),
    )]);
    if let (Some(s), Some(train)) = (&series, Inputs::date_flag("--train-end", &inputs.train_end)?) {
        let train_end = day_index(s, "--train-end", Some(train))?;
        if days <= train_end {
            bail!("prediction horizon must extend past --train-end");
        }
        let held_out = complete_window(s, days)?[train_end + 1..].to_vec();
        let e = prediction_error(&fitted, &params, train_end, &held_out, reps, seed)?;
        out.insert("prediction_error.json".into(), json(&e)?);
    }
    Ok(out)
}

fn filter(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let params = cfg.disease_params()?;
    let h = params.h();
    let series = inputs.observations()?;
    let section = &cfg.filter;
    let x0 = initial_state(&section.initial, h)?;
    if !(section.p0 >= 0.0) {
        bail!("[filter].p0 must be nonnegative");
    }
    let initial = FilterState::new(&x0, DMatrix::identity(x0.dim(), x0.dim()) * section.p0)?;
    let opts = FilterOptions {
        weights: match section.weights {
            WeightChoice::Filtered => WeightPolicy::Filtered,
            WeightChoice::OpenLoop => WeightPolicy::OpenLoop,
            WeightChoice::None => WeightPolicy::None,
        },
        noise: section.noise.map_or(NoisePolicy::PoissonLike, NoisePolicy::Constant),
    };
    // day 0 is the known initial state; observations drive days 1..
    let obs: Vec<Option<f64>> = series.values[1..].iter().map(|v| v.map(|c| c as f64)).collect();
    let run = filter_hospitalizations(&obs, &params, initial, &opts)?;
    let labels = state_labels(h);
    let mut rows = Vec::new();
    for s in &run.states {
        let std = s.std();
        for (i, label) in labels.iter().enumerate() {
            rows.push(vec![
                s.t.to_string(),
                series.date(s.t).to_string(),
                label.clone(),
                num(s.x_hat[i]),
                num(std[i]),
            ]);
        }
    }
    let innov: Vec<Vec<String>> = run
        .innovations
        .iter()
        .map(|i: &Innovation| {
            vec![
                i.t.to_string(),
                series.date(i.t).to_string(),
                num(i.residual[0]),
                num(i.covariance[(0, 0)]),
                num(i.standardized()[0]),
            ]
        })
        .collect();
    Ok(BTreeMap::from([
        (
            "filter.csv".into(),
            table_csv(&["t", "date", "coordinate", "x_hat", "std"], &rows),
        ),
        (
            "innovations.csv".into(),
            table_csv(&["t", "date", "residual", "variance", "standardized"], &innov),
        ),
    ]))
}

#[derive(Serialize)]
struct SpectralReport {
    rho: f64,
    /// `ln rho`; absent when rho is zero.
    log_growth: Option<f64>,
    iterations: usize,
    residual: f64,
    alpha_i: f64,
    alpha_a: f64,
    perron_vector: BTreeMap<String, f64>,
}

fn spectral(inputs: &Inputs) -> Result<Outputs> {
    let params = inputs.config.disease_params()?;
    let m = build_transition_matrix(&params);
    let pair = spectral_radius(&m)?;
    let labels = state_labels(params.h());
    let report = SpectralReport {
        rho: pair.lambda,
        log_growth: (pair.lambda > 0.0).then(|| pair.lambda.ln()),
        iterations: pair.iterations,
        residual: pair.residual,
        alpha_i: m.alpha_i(),
        alpha_a: m.alpha_a(),
        perron_vector: labels
            .into_iter()
            .zip(pair.vector)
            .filter(|(_, v)| *v != 0.0)
            .collect(),
    };
    Ok(BTreeMap::from([("spectral.json".into(), json(&report)?)]))
}

fn tracing_sweep(inputs: &Inputs) -> Result<Outputs> {
    let params = inputs.config.disease_params()?;
    let t = &inputs.config.tracing;
    let phi0: std::collections::BTreeSet<Phase> = t.auto_test.iter().map(|s| parse_phase(s)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut critical = Vec::new();
    for &eps in &t.epsilon {
        let base = TracingConfig {
            phi0: phi0.clone(),
            ..TracingConfig::new(0.0, eps, t.d_max)?
        };
        for &p_t in &t.p_t {
            let cfg = TracingConfig { p_t, ..base.clone() };
            let progeny = tracing_progeny_matrix(&cfg, &params)?;
            rows.push(vec![num(eps), num(p_t), num(progeny.spectral_radius()?), progeny.dim().to_string()]);
        }
        let row = match critical_tracing_probability(&params, &base)? {
            CriticalTracing::Found { p_t, rho } => vec![num(eps), "found".into(), num(p_t), num(rho)],
            CriticalTracing::SubcriticalWithoutTracing { rho_at_zero } => {
                vec![num(eps), "subcritical-without-tracing".into(), String::new(), num(rho_at_zero)]
            }
            CriticalTracing::SupercriticalWithFullTracing { rho_at_one } => {
                vec![num(eps), "supercritical-with-full-tracing".into(), String::new(), num(rho_at_one)]
            }
        };
        critical.push(row);
    }
    Ok(BTreeMap::from([
        (
            "tracing_sweep.csv".into(),
            table_csv(&["epsilon", "p_t", "rho", "types"], &rows),
        ),
        (
            "tracing_critical.csv".into(),
            table_csv(&["epsilon", "status", "p_t", "rho"], &critical),
        ),
    ]))
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], k: usize) -> Result<DMatrix<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        bail!("[routing].{name} must be {k} x {k}");
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn cohorts(section: &crate::config::RoutingSection) -> Vec<Cohort> {
    section
        .cohorts
        .iter()
        .map(|c| Cohort {
            id: CohortId {
                region: c.region,
                night: c.night,
                age: c.age,
            },
            population: c.population,
        })
        .collect()
}

fn routing(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let section = cfg.routing.as_ref().ok_or_else(|| anyhow!("routing needs a [routing] section"))?;
    let params = cfg.disease_params()?;
    let h = params.h();
    let cohorts = cohorts(section);
    let k = cohorts.len();
    let total: f64 = cohorts.iter().map(|c| c.population).sum();
    let alpha = match &section.alpha {
        Some(rows) => matrix_from_rows("alpha", rows, k)?,
        // homogeneous mixing at the symptomatic rate
        None => DMatrix::from_fn(k, k, |_, c| params.contact_rate(Phase::I1) * cohorts[c].population / total),
    };
    let r = match &section.matrix {
        Some(rows) => RoutingMatrix::new(matrix_from_rows("matrix", rows, k)?)?,
        None => RoutingMatrix::identity(k),
    };
    let states = section
        .cohorts
        .iter()
        .map(|c| initial_state(&c.initial, h))
        .collect::<Result<Vec<_>>>()?;
    let system = CohortSystem::new(cohorts, vec![params; k], states, alpha, r)?;
    let traj = simulate_cohorts(&system, section.days)?;
    let mut rows = Vec::new();
    for (t, (states, pops)) in traj.states.iter().zip(&traj.populations).enumerate() {
        for (c, (x, n)) in states.iter().zip(pops).enumerate() {
            let blocks = epibranch::routing::cohort_block_totals(x);
            let mut row = vec![t.to_string(), c.to_string(), num(*n)];
            row.extend(blocks.iter().map(|v| num(*v)));
            rows.push(row);
        }
    }
    Ok(BTreeMap::from([(
        "cohorts.csv".into(),
        table_csv(&["t", "cohort", "population", "E", "P", "I1", "A", "I2", "H"], &rows),
    )]))
}

fn routing_estimate(inputs: &Inputs) -> Result<Outputs> {
    let cfg = &inputs.config;
    let section = cfg.routing.as_ref().ok_or_else(|| anyhow!("routing-estimate needs a [routing] section"))?;
    let path = inputs.flows.as_ref().ok_or_else(|| anyhow!("--flows is required"))?;
    let flows = io::load_flows(path).with_context(|| format!("loading {}", path.display()))?;
    let cohorts = cohorts(section);
    let mut by_date: BTreeMap<NaiveDate, BTreeMap<(usize, usize, usize), f64>> = BTreeMap::new();
    for f in &flows {
        let day = by_date.entry(f.date).or_default();
        if day.insert((f.r1, f.r2, f.age), f.count).is_some() {
            bail!("duplicate flow ({}, {}, {}) on {}", f.r1, f.r2, f.age, f.date);
        }
    }
    let opts = MaxentOptions {
        tol: section.tol,
        ..MaxentOptions::default()
    };
    let mut entries = Vec::new();
    let mut summary = Vec::new();
    for (date, flows) in by_date {
        let obs = FlowObservation {
            cohorts: cohorts.clone(),
            flows,
        };
        let MaxentSolution {
            routing,
            entropy,
            residual,
            sweeps,
        } = maxent_routing(&obs, &opts).with_context(|| format!("flows on {date}"))?;
        for i in 0..routing.dim() {
            for j in 0..routing.dim() {
                let v = routing.get(i, j);
                if v != 0.0 {
                    entries.push(vec![date.to_string(), i.to_string(), j.to_string(), num(v)]);
                }
            }
        }
        summary.push(vec![date.to_string(), num(entropy), num(residual), sweeps.to_string()]);
    }
    Ok(BTreeMap::from([
        (
            "routing_estimates.csv".into(),
            table_csv(&["date", "from", "to", "r"], &entries),
        ),
        (
            "routing_summary.csv".into(),
            table_csv(&["date", "entropy", "residual", "sweeps"], &summary),
        ),
    ]))
}
