//! Carleman weights on the unit cylinder, the derived time-only weights
//! `ρ`, and empirical probes of the weighted adjoint inequalities.

mod probe;
mod psi;
mod weights;

pub use probe::{
    carleman_ratio, probe_carleman, probe_observability, random_profile, trial_rng, ProbeOptions, ProbeReport,
};
pub use psi::{build_psi, Psi};
pub use weights::{
    build_weights, default_m_margin, s_from_normalized, select_lambda, LogWeight, RhoKind, WeightDiagnostics,
    WeightSystem,
};
