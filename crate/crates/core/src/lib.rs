//! Acceptance-sampling plans from a double hypothesis test, successive
//! failure limits, a fuzzy solver selector and a sequential inspection
//! engine built on top of them.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common `f64` case.

// `!(a < b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fuzzy_selector;
pub mod inspection_engine;
pub mod plan_solvers;
pub mod run_limits;
pub mod scalar;
pub mod stat_kernels;
pub mod verification;

pub use fuzzy_selector::{
    membership_degree, FuzzyConfig, FuzzyError, FuzzyRuleBase, Inference, Input,
    MembershipFunction, ResponseSurface, SelectorInput,
};
pub use inspection_engine::{
    build_ladder, replay, run_stream, terminal_distribution, Event, InspectionError,
    InspectionState, LadderError, LadderSpec, LevelLadder, MethodSchedule, Outcome, Status,
    StreamResult, Transition,
};
pub use plan_solvers::{
    applicability_report, closed_form_norm, solve, solve_bin, solve_norm_iterative,
    solve_norm_newton, solve_norm_newton_with, solve_poiss, Applicability, DiscreteTails, Method,
    NewtonOptions, NewtonState, PlanDetail, PlanWarning, SamplingPlan, SolverError, TestSpec,
};
pub use run_limits::{mean_recurrence, sfl_r, RunLimit, SflError, SflQuery};
pub use scalar::Scalar;
pub use stat_kernels::{
    binom_cdf, lower_quantile, normal_cdf, poisson_cdf, upper_quantile, z_value, CountDistribution,
    StatError, TailMass, ZMode,
};
pub use verification::{
    accept_probability, benchmark_solver, monte_carlo_accept, oc_curve, oc_points, realized_errors,
    realized_errors_nc, BenchRecord, ErrorEstimate, McRate, OcCurve, OcPoint, VerificationError,
};

pub type TestSpec64 = TestSpec<f64>;
pub type SamplingPlan64 = SamplingPlan<f64>;
pub type FuzzyRuleBase64 = FuzzyRuleBase<f64>;
pub type SelectorInput64 = SelectorInput<f64>;
pub type LevelLadder64 = LevelLadder<f64>;
pub type InspectionState64 = InspectionState<f64>;
pub type OcCurve64 = OcCurve<f64>;
pub type ErrorEstimate64 = ErrorEstimate<f64>;
pub type RunLimit64 = RunLimit<f64>;
