pub mod branching;
pub mod error;
pub mod fitting;
pub mod kalman;
pub mod meanfield;
pub mod mobility;
pub mod params;
pub mod routing;
pub mod schedule;
pub mod spectral;
pub mod tracing;

pub use error::{EpiError, Result};
pub use meanfield::{
    ar_coefficients, build_transition_matrix, estimate_growth_rate, fit_shock, simulate_meanfield,
    spectral_radius, ShockFit, TransitionMatrix,
};
pub use params::{
    baseline_params, death_immun_update, failure_rates, state_index, CountVector,
    DeathImmunCounters, DiseaseParams, Phase, PhaseDurationDist, StateVector,
};
pub use schedule::RateSchedule;
pub use branching::{
    offspring_covariance, simulate_stochastic, step_stochastic, substream, OffspringCovariance,
    StochasticTrajectory,
};
pub use tracing::{
    critical_tracing_probability, enumerate_paths, expected_total_infected, tracing_progeny_matrix,
    CriticalTracing, ExtendedType, PhasePath, TestDay, TracingConfig, TracingModel,
};
pub use kalman::{
    filter_hospitalizations, filter_series, kalman_step, process_noise, FilterOptions, FilterRun,
    FilterState, MeasurementModel, NoisePolicy, WeightPolicy,
};
pub use fitting::{
    grid_search_fit, loss_l1, loss_l1_log, prediction_error, FitGrid, FitOptions, FitParams,
    FitResult, LossEstimate, LossKind, PhaseSchedule,
};
pub use mobility::{
    contact_rate_series, mobility_schedule, normalize_flow, MobilityRateSpec, OutflowSeries,
    RateForm,
};
pub use routing::{
    epidemic_stage, infection_rate_matrix, maxent_routing, routing_stage, simulate_cohorts,
    transit_contacts, Cohort, CohortId, CohortSystem, ContactIntensity, FlowObservation,
    RoutingMatrix,
};
