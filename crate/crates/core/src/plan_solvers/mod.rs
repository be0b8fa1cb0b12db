//! Plan computation for the double hypothesis test.
//!
//! Each solver maps a [`TestSpec`] (two candidate defect rates `p0 < p1` and
//! their tail masses) to a [`SamplingPlan`]: inspect `n` units and reject
//! the lower rate as soon as `c` failures are seen. Four solvers are
//! provided:
//!
//! | Method | Distribution | Search |
//! |---|---|---|
//! | [`Method::Bin`] | exact binomial | scan over `n` |
//! | [`Method::Poiss`] | Poisson approximation | scan over `n` |
//! | [`Method::NormN`] | normal approximation | Newton-Raphson on `(t_h, n)` |
//! | [`Method::NormI`] | normal approximation | scan over `n` |
//!
//! [`closed_form_norm`] solves the normal system analytically and is the
//! reference both normal solvers are checked against.

mod discrete;
mod normal;

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::stat_kernels::{StatError, TailMass, ZMode};

pub use discrete::{solve_bin, solve_poiss};
pub use normal::{
    closed_form_norm, solve_norm_iterative, solve_norm_newton, solve_norm_newton_with,
    NewtonOptions, NewtonState, NormalSolution,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid test spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate test spec: p0 equals p1")]
    DegenerateSpec,
    #[error(
        "{method} did not converge within {max_n} trials; best gap {best_gap:e} at n = {best_n}"
    )]
    NoConvergence {
        method: Method,
        max_n: u64,
        best_gap: f64,
        best_n: u64,
    },
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: u64 },
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Plan-computation algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Bin")]
    Bin,
    #[serde(rename = "Poiss")]
    Poiss,
    #[serde(rename = "Norm_N")]
    NormN,
    #[serde(rename = "Norm_I")]
    NormI,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bin, Method::Poiss, Method::NormN, Method::NormI];

    pub fn label(self) -> &'static str {
        match self {
            Method::Bin => "Bin",
            Method::Poiss => "Poiss",
            Method::NormN => "Norm_N",
            Method::NormI => "Norm_I",
        }
    }

    /// Convergence tolerance used when none is given: 0.0019 for Bin,
    /// 0.001 for Poiss, 1e-4 for the normal methods.
    pub fn default_epsilon(self) -> f64 {
        match self {
            Method::Bin => 0.0019,
            Method::Poiss => 0.001,
            Method::NormN | Method::NormI => 1e-4,
        }
    }

    /// Whether the method relies on the normal approximation (and therefore
    /// on `n·p0 > 5`).
    pub fn is_normal(self) -> bool {
        matches!(self, Method::NormN | Method::NormI)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bin" => Ok(Method::Bin),
            "poiss" | "pois" | "poisson" => Ok(Method::Poiss),
            "norm-n" | "normn" => Ok(Method::NormN),
            "norm-i" | "normi" => Ok(Method::NormI),
            other => Err(format!(
                "unknown method '{other}' (expected bin, poiss, norm-n or norm-i)"
            )),
        }
    }
}

/// Which tail mass the discrete solvers place on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteTails {
    /// Quantiles at `alpha/2` and `beta/2`.
    #[default]
    Halved,
    /// Quantiles at `alpha` and `beta`.
    AsGiven,
}

/// One double-hypothesis-test instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TestSpec<T> {
    /// Lower hypothesised defect rate.
    pub p0: T,
    /// Upper hypothesised defect rate.
    pub p1: T,
    pub alpha_tail: TailMass<T>,
    pub beta_tail: TailMass<T>,
    /// Convergence tolerance of the scanning solvers.
    pub epsilon: T,
    /// Largest trial count any scan may reach.
    pub max_n: u64,
    pub z_mode: ZMode,
    pub discrete_tails: DiscreteTails,
}

impl<T: Scalar> TestSpec<T> {
    pub const DEFAULT_MAX_N: u64 = 1_000_000;

    /// Spec with 5% tails on both sides and the Norm_I tolerance.
    pub fn new(p0: T, p1: T) -> Result<Self, SolverError> {
        let five = TailMass::new(T::of(0.05))?;
        let spec = Self {
            p0,
            p1,
            alpha_tail: five,
            beta_tail: five,
            epsilon: T::of(Method::NormI.default_epsilon()),
            max_n: Self::DEFAULT_MAX_N,
            z_mode: ZMode::Paper,
            discrete_tails: DiscreteTails::Halved,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec carrying `method`'s default tolerance.
    pub fn for_method(p0: T, p1: T, method: Method) -> Result<Self, SolverError> {
        Ok(Self::new(p0, p1)?.with_epsilon(T::of(method.default_epsilon())))
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tails(mut self, alpha: TailMass<T>, beta: TailMass<T>) -> Self {
        self.alpha_tail = alpha;
        self.beta_tail = beta;
        self
    }

    pub fn with_max_n(mut self, max_n: u64) -> Self {
        self.max_n = max_n;
        self
    }

    pub fn with_z_mode(mut self, mode: ZMode) -> Self {
        self.z_mode = mode;
        self
    }

    pub fn with_discrete_tails(mut self, tails: DiscreteTails) -> Self {
        self.discrete_tails = tails;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let (p0, p1) = (self.p0, self.p1);
        if !p0.is_finite() || !p1.is_finite() {
            return Err(SolverError::InvalidSpec(
                "probabilities must be finite".into(),
            ));
        }
        if p0 == p1 {
            return Err(SolverError::DegenerateSpec);
        }
        if p0 < T::zero() || p0 > p1 || p1 >= T::of(0.5) {
            return Err(SolverError::InvalidSpec(format!(
                "need 0 <= p0 < p1 < 0.5, got p0 = {p0}, p1 = {p1}"
            )));
        }
        if !(self.epsilon > T::zero()) {
            return Err(SolverError::InvalidSpec(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_n < 2 {
            return Err(SolverError::InvalidSpec("max_n must be at least 2".into()));
        }
        Ok(())
    }

    pub fn z_alpha(&self) -> T {
        self.alpha_tail.z(self.z_mode)
    }

    pub fn z_beta(&self) -> T {
        self.beta_tail.z(self.z_mode)
    }

    /// Tail masses used by the discrete quantile scans.
    pub(crate) fn discrete_tail_masses(&self) -> (TailMass<T>, TailMass<T>) {
        match self.discrete_tails {
            DiscreteTails::Halved => (self.alpha_tail.halved(), self.beta_tail.halved()),
            DiscreteTails::AsGiven => (self.alpha_tail, self.beta_tail),
        }
    }
}

/// Flags describing whether a plan's approximations hold at its final `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applicability {
    pub np0_gt5: bool,
    pub nq0_gt5: bool,
    pub p_lt_0_1: bool,
    /// Normal-approximation plan with `n·p0 <= 5`.
    pub meaningless: bool,
}

/// Solver-specific diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanDetail<T> {
    Newton(NewtonState<T>),
    Iterative {
        gap: T,
    },
    /// Discrete scan: upper limit of `p0` and first rejected count of `p1`.
    Discrete {
        upper: u64,
        lower: u64,
    },
    /// Discrete scan from `p0 = 0`, stopped on the consumer risk.
    ZeroBaseline {
        consumer_risk: T,
    },
}

/// Solver output: inspect `n` units, reject once `c` failures occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan<T> {
    pub n: u64,
    /// Acceptance number: accept with at most `c - 1` failures.
    pub c: u64,
    pub t_h: T,
    pub np0: T,
    pub method: Method,
    pub iterations: u64,
    pub converged: bool,
    pub applicability: Applicability,
    pub detail: PlanDetail<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanWarning {
    NotConverged,
    /// Normal approximation used with `n·p0 <= 5`.
    NormalApproximationInvalid,
    /// Poisson approximation used with `p1 >= 0.1`.
    OutsidePoissonRegime,
    /// `c = 0` cannot accept any lot.
    ZeroAcceptanceNumber,
}

impl fmt::Display for PlanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanWarning::NotConverged => "solver stopped at its iteration limit",
            PlanWarning::NormalApproximationInvalid => {
                "n*p0 <= 5: normal approximation is meaningless"
            }
            PlanWarning::OutsidePoissonRegime => {
                "p1 >= 0.1: outside the Poisson approximation regime"
            }
            PlanWarning::ZeroAcceptanceNumber => "c = 0: plan never accepts",
        })
    }
}

impl<T: Scalar> SamplingPlan<T> {
    /// Accept iff `failures <= c - 1`.
    pub fn accepts(&self, failures: u64) -> bool {
        failures < self.c
    }

    pub fn warnings(&self) -> Vec<PlanWarning> {
        let mut out = Vec::new();
        if !self.converged {
            out.push(PlanWarning::NotConverged);
        }
        if self.applicability.meaningless {
            out.push(PlanWarning::NormalApproximationInvalid);
        }
        if self.method == Method::Poiss && !self.applicability.p_lt_0_1 {
            out.push(PlanWarning::OutsidePoissonRegime);
        }
        if self.c == 0 {
            out.push(PlanWarning::ZeroAcceptanceNumber);
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        spec: &TestSpec<T>,
        method: Method,
        n: u64,
        c: u64,
        t_h: T,
        iterations: u64,
        converged: bool,
        detail: PlanDetail<T>,
    ) -> Self {
        let mut plan = Self {
            n,
            c,
            t_h,
            np0: T::count(n) * spec.p0,
            method,
            iterations,
            converged,
            applicability: Applicability {
                np0_gt5: false,
                nq0_gt5: false,
                p_lt_0_1: false,
                meaningless: false,
            },
            detail,
        };
        plan.applicability = applicability_report(&plan, spec);
        for w in plan.warnings() {
            log::warn!("{method} plan (n = {n}, c = {c}): {w}");
        }
        plan
    }
}

/// Evaluates the approximation rules of thumb on the plan's final `n`.
/// Only the normal methods are held to `n·p0 > 5`.
pub fn applicability_report<T: Scalar>(
    plan: &SamplingPlan<T>,
    spec: &TestSpec<T>,
) -> Applicability {
    let n = T::count(plan.n);
    let five = T::of(5.0);
    let np0_gt5 = n * spec.p0 > five;
    Applicability {
        np0_gt5,
        nq0_gt5: n * (T::one() - spec.p0) > five,
        p_lt_0_1: spec.p1 < T::of(0.1),
        meaningless: plan.method.is_normal() && !np0_gt5,
    }
}

/// Runs `method` on `spec` with default solver settings.
pub fn solve<T: Scalar>(
    spec: &TestSpec<T>,
    method: Method,
) -> Result<SamplingPlan<T>, SolverError> {
    match method {
        Method::Bin => solve_bin(spec),
        Method::Poiss => solve_poiss(spec),
        Method::NormN => solve_norm_newton(spec, NewtonState::initial(spec)?),
        Method::NormI => solve_norm_iterative(spec),
    }
}
