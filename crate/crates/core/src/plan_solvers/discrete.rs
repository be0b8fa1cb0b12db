//! Discrete solvers: exact binomial and its Poisson approximation.
//!
//! Both scan `n = 1, 2, …`. At each `n` the upper limit `L` is the upper
//! quantile of the `p0` count distribution and the lower limit `l` is the
//! lower quantile of the `p1` distribution. While `l < L` the acceptance
//! and rejection regions overlap; the scan stops at the first `n` where the
//! limits have met, `0 <= (l - L) / n <= epsilon`. The threshold sits
//! between the last count accepted under `p0` and the first count rejected
//! under `p1`, `t_h = (L + l + 1) / 2n`, and `c = round(n·t_h)`.
//!
//! With `p0 = 0` the upper limit is identically zero and the scan above
//! degenerates, so the threshold is fixed at the midpoint `p1 / 2` and the
//! scan stops at the first `n` whose consumer risk `P(X <= c - 1; p1)` is
//! within the tail while `c` has held steady for [`STABLE_RUN`] trials.

use super::{Method, PlanDetail, SamplingPlan, SolverError, TestSpec};
use crate::scalar::{round_count, Scalar};
use crate::stat_kernels::{lower_quantile, upper_quantile, CountDistribution};

/// Consecutive trial counts over which `c` must not change in the `p0 = 0`
/// scan.
pub const STABLE_RUN: usize = 10;

#[derive(Debug, Clone, Copy)]
enum Family {
    Binomial,
    Poisson,
}

impl Family {
    fn at<T: Scalar>(self, n: u64, p: T) -> Result<CountDistribution<T>, SolverError> {
        Ok(match self {
            Family::Binomial => CountDistribution::binomial(n, p)?,
            Family::Poisson => CountDistribution::poisson(T::count(n) * p)?,
        })
    }

    fn method(self) -> Method {
        match self {
            Family::Binomial => Method::Bin,
            Family::Poisson => Method::Poiss,
        }
    }
}

/// Exact binomial scan.
pub fn solve_bin<T: Scalar>(spec: &TestSpec<T>) -> Result<SamplingPlan<T>, SolverError> {
    solve_discrete(spec, Family::Binomial)
}

/// Poisson-approximation scan with `lambda = n·p`.
pub fn solve_poiss<T: Scalar>(spec: &TestSpec<T>) -> Result<SamplingPlan<T>, SolverError> {
    solve_discrete(spec, Family::Poisson)
}

fn solve_discrete<T: Scalar>(
    spec: &TestSpec<T>,
    family: Family,
) -> Result<SamplingPlan<T>, SolverError> {
    spec.validate()?;
    if spec.p0 == T::zero() {
        return solve_zero_baseline(spec, family);
    }
    let (alpha, beta) = spec.discrete_tail_masses();
    let method = family.method();

    let mut best = (f64::INFINITY, 0);
    for n in 1..=spec.max_n {
        let Some(below) = lower_quantile(family.at(n, spec.p1)?, beta) else {
            continue;
        };
        let upper = upper_quantile(family.at(n, spec.p0)?, alpha)?;
        let nf = T::count(n);
        let gap = (T::count(below) - T::count(upper)) / nf;
        if gap.abs().to_f64_lossy() < best.0 {
            best = (gap.abs().to_f64_lossy(), n);
        }
        if gap >= T::zero() && gap <= spec.epsilon {
            let t_h = (T::count(upper) + T::count(below + 1)) / (T::of(2.0) * nf);
            let c = round_count(nf * t_h);
            return Ok(SamplingPlan::assemble(
                spec,
                method,
                n,
                c,
                t_h,
                n,
                true,
                PlanDetail::Discrete {
                    upper,
                    lower: below + 1,
                },
            ));
        }
    }
    Err(SolverError::NoConvergence {
        method,
        max_n: spec.max_n,
        best_gap: best.0,
        best_n: best.1,
    })
}

fn solve_zero_baseline<T: Scalar>(
    spec: &TestSpec<T>,
    family: Family,
) -> Result<SamplingPlan<T>, SolverError> {
    let (_, beta) = spec.discrete_tail_masses();
    let method = family.method();
    let t_h = spec.p1 / T::of(2.0);

    let mut last_c = u64::MAX;
    let mut steady = 0usize;
    let mut best = (f64::INFINITY, 0);
    for n in 1..=spec.max_n {
        let c = round_count(T::count(n) * t_h);
        if c == last_c {
            steady += 1;
        } else {
            last_c = c;
            steady = 1;
        }
        if c == 0 {
            continue;
        }
        let risk = family.at(n, spec.p1)?.cdf(c - 1);
        let excess = (risk - beta.value()).to_f64_lossy();
        if excess < best.0 {
            best = (excess, n);
        }
        if risk <= beta.value() && steady >= STABLE_RUN {
            return Ok(SamplingPlan::assemble(
                spec,
                method,
                n,
                c,
                t_h,
                n,
                true,
                PlanDetail::ZeroBaseline {
                    consumer_risk: risk,
                },
            ));
        }
    }
    Err(SolverError::NoConvergence {
        method,
        max_n: spec.max_n,
        best_gap: best.0,
        best_n: best.1,
    })
}
