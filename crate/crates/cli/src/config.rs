//! TOML run configuration. Every section is optional; relative file paths
//! resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use epibranch::params::ParamsConfig;
use epibranch::{baseline_params, DiseaseParams, FitGrid, Phase, RateForm};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it.
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub predict: PredictSection,
    pub mobility: Option<MobilitySection>,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub tracing: TracingSection,
    pub routing: Option<RoutingSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Baseline parameters unless `file` is given; the scalar fields override
/// whichever was loaded.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub file: Option<PathBuf>,
    pub alpha_i: Option<f64>,
    pub alpha_a: Option<f64>,
    pub p_i: Option<f64>,
    pub p_h: Option<f64>,
    pub p_d: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    pub phase: String,
    #[serde(default = "one")]
    pub day: usize,
    pub count: f64,
}

fn one() -> usize {
    1
}

fn default_initial() -> Vec<InitialEntry> {
    vec![InitialEntry {
        phase: "E".into(),
        day: 1,
        count: 200.0,
    }]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default = "default_initial")]
    pub initial: Vec<InitialEntry>,
    #[serde(default = "one")]
    pub reps: usize,
}

fn default_days() -> usize {
    60
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            days: default_days(),
            initial: default_initial(),
            reps: 1,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub reps: Option<usize>,
    pub loss: Option<String>,
    pub refine_rounds: Option<usize>,
    pub grid: Option<FitGrid>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    /// A `fit_result.json` written by the fit command.
    pub fit_result: Option<PathBuf>,
    pub x_e0: Option<u64>,
    pub alpha: Option<[f64; 3]>,
    pub breakpoints: Option<(usize, usize)>,
    pub days: Option<usize>,
    pub reps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySection {
    /// `[alpha_i, alpha_a]` per phase.
    pub base: Vec<[f64; 2]>,
    /// Day indices where phases 2, 3, ... start.
    #[serde(default)]
    pub breakpoints: Vec<usize>,
    #[serde(default)]
    pub gamma_i: f64,
    #[serde(default)]
    pub gamma_a: f64,
    #[serde(default)]
    pub form: RateForm,
    /// Days used for the mean and deviation of the outflow; all by default.
    pub train_len: Option<usize>,
    /// Trailing moving-average window applied before standardizing.
    pub smooth: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_initial")]
    pub initial: Vec<InitialEntry>,
    /// Initial variance on every coordinate.
    #[serde(default)]
    pub p0: f64,
    /// Constant measurement variance; `max(y, 1)` when absent.
    pub noise: Option<f64>,
    #[serde(default)]
    pub weights: WeightChoice,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            initial: default_initial(),
            p0: 0.0,
            noise: None,
            weights: WeightChoice::Filtered,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum WeightChoice {
    #[default]
    Filtered,
    OpenLoop,
    None,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracingSection {
    #[serde(default = "default_grid")]
    pub p_t: Vec<f64>,
    #[serde(default = "default_grid")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_d_max")]
    pub d_max: usize,
    #[serde(default = "default_phi0")]
    pub auto_test: Vec<String>,
}

fn default_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_d_max() -> usize {
    20
}

fn default_phi0() -> Vec<String> {
    vec!["H".into()]
}

impl Default for TracingSection {
    fn default() -> Self {
        Self {
            p_t: default_grid(),
            epsilon: default_grid(),
            d_max: default_d_max(),
            auto_test: default_phi0(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortEntry {
    pub region: usize,
    pub night: usize,
    #[serde(default)]
    pub age: usize,
    pub population: f64,
    #[serde(default)]
    pub initial: Vec<InitialEntry>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSection {
    pub cohorts: Vec<CohortEntry>,
    /// Rows of the infection-rate matrix; defaults to the parameter rates
    /// split in proportion to population.
    pub alpha: Option<Vec<Vec<f64>>>,
    /// Rows of the daily routing matrix; identity by default.
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-8
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok((Self::from_toml(&text, dir)?, text))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn disease_params(&self) -> Result<DiseaseParams> {
        let s = &self.params;
        let mut cfg: ParamsConfig = match &s.file {
            Some(f) => {
                let path = self.resolve(f);
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => baseline_params().to_config(),
        };
        if let Some(v) = s.alpha_i {
            cfg.alpha_i = v;
        }
        if let Some(v) = s.alpha_a {
            cfg.alpha_a = v;
        }
        if let Some(v) = s.p_i {
            cfg.p_i = v;
        }
        if let Some(v) = s.p_h {
            cfg.p_h = v;
        }
        if let Some(v) = s.p_d {
            cfg.p_d = v;
        }
        Ok(cfg.into_params()?)
    }
}

pub fn parse_phase(s: &str) -> Result<Phase> {
    match Phase::parse(s) {
        Some(p) => Ok(p),
        None => bail!("unknown phase `{s}`"),
    }
}
