//! Conditional updates of the posterior sampler.

pub mod agrad;
pub mod factors;
pub mod jumps;
pub mod tuning;
pub mod volatility;

pub use agrad::{AgradOutcome, HyperModel, PathLikelihood, StepControl};
pub use factors::{
    agrad_update_factors, asis_factor_move, factors_from_innovations, innovations_from_factors, update_loadings,
    FactorLik,
};
pub use jumps::{
    jump_count_log_weight, sample_independent_intensity, sample_jump_count, sample_jump_sizes, sample_mu_xi,
    sample_sigma2_xi,
    CountEnvelope,
};
pub use tuning::{AcceptanceTally, AdaptiveScale, AuxTuning};
pub use volatility::{
    agrad_update_volatility, asis_volatility_move, mu_full_conditional, sample_mu_volatility, AsisScales,
    VolatilityLik,
};
