//! Numerical checks of the ordering theory: the order-dependent second-order
//! term, order-statistic constants, the attack-success condition, the bias
//! term of the convergence bound and poisoning sample-size bounds.

mod bias;
mod bound;
mod dist;
mod order;
pub mod quad;

pub use bias::{bias_term, BiasTrace, MAX_TRACE_EXAMPLES};
pub use bound::{empirical_hit_rate, hit_probability, sample_size_bound, BoundInputs, BoundMode};
pub use dist::{monte_carlo, normal_cdf, normal_pdf, Estimate, Standardized};
pub use order::{
    attack_success_condition, estimate_kn, k_infinity, k_infinity_normal_exact, k_infinity_with, success_condition,
    xi_expectations_exact, xi_order_gap, xi_term, xi_term_unit, SuccessCondition, XiGap,
};
