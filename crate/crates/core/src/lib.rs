//! Time-bin photonic qudits measured with a recirculating Mach-Zehnder cavity.
//!
//! The analytic modules ([`state`], [`cavity`], [`imperfections`]) are generic
//! over the scalar type; the aliases below fix it to `f64` (and `f32` with a
//! `32` suffix). [`montecarlo`] and [`experiments`] work in `f64`.

pub mod cavity;
mod error;
pub mod experiments;
pub mod imperfections;
pub mod montecarlo;
pub mod scalar;
pub mod state;

pub use cavity::{
    d1_bin_probability, d2_amplitude, d2_bin_probability, d2_setting_averaged_probability,
    d2_total_probability, default_bin_cap, full_outcome_distribution, gamma_state, p_m_given_k,
    phase_for_outcome, projection_fidelity, theta_for_outcome, total_error, total_error_closed_form,
    D2Window, Port,
};
pub use error::{Error, Result};
pub use imperfections::{
    compensating_reflectivity, cutoff_tradeoff_scan, effective_round_trip, error_with_mismatch,
    observed_error_with_dark_counts,
};
pub use montecarlo::{run_discrimination, run_trials, sample_frame, EmpiricalStats, Preparation, TrialRecord};
pub use scalar::Real;
pub use state::{fidelity, inner_product, mub_state, overlap_probability, verify_mub, MubIndex};

pub type TimeBinState = state::TimeBinState<f64>;
pub type CavityConfig = cavity::CavityConfig<f64>;
pub type RoundTripFactor = cavity::RoundTripFactor<f64>;
pub type OutcomeDistribution = cavity::OutcomeDistribution<f64>;
pub type MismatchModel = imperfections::MismatchModel<f64>;
pub type DarkCountModel = imperfections::DarkCountModel<f64>;

pub type TimeBinState32 = state::TimeBinState<f32>;
pub type CavityConfig32 = cavity::CavityConfig<f32>;
pub type OutcomeDistribution32 = cavity::OutcomeDistribution<f32>;
pub type MismatchModel32 = imperfections::MismatchModel<f32>;
pub type DarkCountModel32 = imperfections::DarkCountModel<f32>;
