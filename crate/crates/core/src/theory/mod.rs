//! Approximation and generalization theory for gradient-enhanced two-layer
//! networks, turned into checkable numerical statements.

mod bounds;
mod mixture;
mod rademacher;

pub use bounds::{
    asymptotic_rate, check_generalization_gap, empirical_gradient_bound, posterior_bound, risk_upper_bound_check,
    risk_upper_bound_rhs, BoundReport, RiskCheckOptions, RiskUpperBoundReport,
};
pub use mixture::{
    sample_subnetwork, subnetwork_errors, verify_approximation_theorem, ApproximationEvents, ApproximationReport,
    BarronMixture, MixtureAtom, SubnetworkErrors,
};
pub use rademacher::{
    candidate_networks, empirical_rademacher_gradient_family, empirical_rademacher_value_family, gradient_family_bound,
    gradient_statistics, value_family_bound, RademacherOptions,
};
