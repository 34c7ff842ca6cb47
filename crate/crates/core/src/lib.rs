//! Neural tangent kernels of randomly pruned fully-connected ReLU networks.
//!
//! The crate computes the empirical NTK of a realized pruned network, the
//! closed-form infinite-width kernel `Θ_∞`, and the Monte-Carlo harnesses
//! that compare the two as width and keep-probability vary.
//!
//! Networks follow the recursion
//!
//! ```text
//! f^(h) = (W^(h) ⊙ m^(h)) g^(h-1),   g^(h) = sqrt(2 / d_h) relu(f^(h)),   g^(0) = x
//! ```
//!
//! with standard-normal weights, Bernoulli(`alpha`) masks on every layer except
//! the first, and a scalar output `f^(L+1)`. With rescaling on, surviving mask
//! entries equal `1/sqrt(alpha)` and the empirical kernel converges to `Θ_∞`;
//! without it the limit is `alpha^L Θ_∞`.
//!
//! ```
//! use pruned_ntk::{kernel_recursion, ntk_monte_carlo, pruned_limit, InputPoint, NetworkConfig};
//!
//! let x = InputPoint::new(vec![0.6, 0.8]).unwrap();
//! let limit = kernel_recursion(&x, &x, 2).unwrap();
//! assert!((limit.theta_inf - 3.0).abs() < 1e-12);
//!
//! let config = NetworkConfig::uniform(2, 2, 256, 0.5).with_rescale(true).with_seed(1);
//! let agg = ntk_monte_carlo(&config, &x, &x, 8, pruned_limit(&limit, 0.5, true)).unwrap();
//! assert!((agg.mean - 3.0).abs() < 0.5);
//! ```

pub mod analytic;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod model;
pub mod propagation;
pub mod pseudo;
pub mod rng;

pub use analytic::{
    condition_estimate, kernel_recursion, ntk_regress, pruned_limit, relu_dual, AnalyticKernel,
    Cov2, DualMoments, KernelRegressor,
};
pub use empirical::{
    ntk_gram, ntk_monte_carlo, ntk_pair, ntk_row, GramSource, NtkAggregate, NtkEstimate,
};
pub use error::{NtkError, Result};
pub use experiments::{
    run_alpha_sweep, run_width_sweep, AlphaSweepSpec, InputPairSource, SweepResult, SweepRow,
    WidthScaling, WidthSweepSpec,
};
pub use model::{
    build_masks, build_network, mask_survival_stats, survival_stats, toggle_rescale, InputPoint, Mask, NetworkConfig,
    NetworkState, SurvivalStats, C_SIGMA,
};
pub use propagation::{
    backward_pair, backward_pass, forward_pair, forward_pass, layer_gradient, network_output, BackwardTrace, ForwardTrace,
};
pub use pseudo::{
    check_indicator_identity, check_norm_preservation, ks_distance, max_abs_pseudo_output, pseudo_forward,
    pseudo_outputs, IndicatorReport,
    NormPreservationReport, PseudoTrace, ResampleMode,
};
pub use rng::RandomStream;
