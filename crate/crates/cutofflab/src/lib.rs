//! A numerical laboratory for continuous-time finite Markov chains.
//!
//! The crate builds validated chains from sparse transition matrices, evolves
//! observables and densities exactly by uniformization, and computes the
//! quantities that control mixing: hop-count geometry, optimal transport
//! distances with dual certificates, spectral gaps and log-Sobolev constants,
//! discrete curvature certificates, and varentropy-based cutoff diagnostics.
//! A small model zoo (cycles, hypercubes, Cayley graphs, Glauber dynamics,
//! zero-range and exclusion processes) ships with closed-form reference
//! values used to cross-check every estimator.

pub mod chain;
pub mod curvature;
pub mod cutoff;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod numeric;
pub mod rng;
pub mod transport;
pub mod zoo;

pub use chain::{
    build_chain, build_chain_with_cap, carre_du_champ, carre_du_champ_2, carre_du_champ_bilinear,
    dirichlet_form, dirichlet_form_symmetrized, evolve_density, lazify, rank_one_perturb,
    semigroup_apply, Chain, Density, Direction, Observable, TransitionMatrix, DEFAULT_DENSE_CAP,
};
pub use curvature::{
    bakry_emery_rho, curvature_report, glauber_delta_bound, group_walk_certificates,
    ollivier_kappa1, sectional_nonneg_certificate, zero_range_certificates, CurvatureReport,
    DeltaBoundReport, GlauberData, GroupWalkData,
};
pub use cutoff::{
    cutoff_sweep, fast_mixing_bound, idi_check, reverse_pinsker_gap, roughness_check,
    varentropy_correction, varentropy_curve, width_bounds, worst_case_profile, CutoffDiagnostics,
    DiagnosticsInputs, IdiReport, RoughnessReport, SweepRow, VarentropyCurve,
};
pub use error::{Error, Result};
pub use functionals::{
    certified_lower_bounds, herbst_check, mixing_time, mixing_window, poincare_constant,
    sobolev_upper_estimate, spectral_gap, stats, worst_case_l2, worst_case_tv, ConstantBracket,
    EntropyStats, HerbstReport, SobolevKind, SpectralData, TvFrom,
};
pub use geometry::{hop_metric, lipschitz_seminorm, MetricData};
pub use transport::{
    tv_via_transport, wasserstein_1, wasserstein_1_sparse, wasserstein_inf,
    wasserstein_inf_sparse, TransportPlan,
};
pub use zoo::{
    build_model, cube_exact_tv, cube_profile_F, cube_varentropy_closed_form, cycle_profile_F,
    parse_model_spec, reference_values, standard_catalog, ExclusionHandle, GlauberHandle, Model,
    ModelSpec, ModelStructure, RateRule, ReferenceValues, ZeroRangeHandle, SITES_CAP, STATE_CAP,
};
