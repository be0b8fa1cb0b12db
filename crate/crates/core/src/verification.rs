//! Exact and simulated checks on sampling plans: OC curves, realized
//! producer/consumer risks, Monte Carlo acceptance rates and solver timing.
//!
//! Simulation draws every repetition from its own ChaCha8 stream
//! (`seed`, stream = repetition index), so results are bit-identical for
//! any thread count. Within a repetition the failure positions are drawn by
//! geometric skipping, which has exactly the law of `n` Bernoulli trials
//! but costs one draw per failure rather than one per trial.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan_solvers::{solve, Method, SamplingPlan, SolverError, TestSpec};
use crate::scalar::Scalar;
use crate::stat_kernels::{binom_cdf, StatError};

pub const MIN_REPS: u64 = 100;

/// Two-sided 99% standard normal quantile.
const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerificationError {
    #[error("plan did not converge; its operating characteristic is not meaningful")]
    NotConverged,
    #[error("at least {MIN_REPS} repetitions required, got {0}")]
    TooFewReps(u64),
    #[error("at least one timing repeat required")]
    NoRepeats,
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Probability of accepting a lot: at most `c - 1` failures in `n` trials.
pub fn accept_probability<T: Scalar>(n: u64, c: u64, p: T) -> Result<T, StatError> {
    if c == 0 {
        return Ok(T::zero());
    }
    binom_cdf((c - 1).min(n), n, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcPoint<T> {
    pub p: T,
    pub accept_prob: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcCurve<T> {
    pub n: u64,
    pub c: u64,
    pub points: Vec<OcPoint<T>>,
}

/// OC curve of a bare `(n, c)` pair.
pub fn oc_points<T: Scalar>(n: u64, c: u64, grid: &[T]) -> Result<OcCurve<T>, StatError> {
    let points = grid
        .iter()
        .map(|&p| {
            Ok(OcPoint {
                p,
                accept_prob: accept_probability(n, c, p)?,
            })
        })
        .collect::<Result<_, StatError>>()?;
    Ok(OcCurve { n, c, points })
}

pub fn oc_curve<T: Scalar>(
    plan: &SamplingPlan<T>,
    grid: &[T],
) -> Result<OcCurve<T>, VerificationError> {
    if !plan.converged {
        return Err(VerificationError::NotConverged);
    }
    Ok(oc_points(plan.n, plan.c, grid)?)
}

/// Simulated acceptance rate with its Wilson 99% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRate {
    pub rate: f64,
    pub half_width: f64,
    pub reps: u64,
    pub seed: u64,
}

impl McRate {
    /// `|rate - exact|` in units of the half-width.
    pub fn deviation(&self, exact: f64) -> f64 {
        (self.rate - exact).abs() / self.half_width
    }
}

fn wilson_half_width(successes: u64, reps: u64) -> f64 {
    let n = reps as f64;
    let phat = successes as f64 / n;
    let z2 = Z99 * Z99;
    Z99 / (1.0 + z2 / n) * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt()
}

/// One simulated lot: does it show fewer than `c` failures in `n` trials?
fn lot_accepted(rng: &mut ChaCha8Rng, n: u64, c: u64, p: f64) -> bool {
    if c == 0 {
        return false;
    }
    if p <= 0.0 {
        return true;
    }
    if p >= 1.0 {
        return n < c;
    }
    let log_q = (-p).ln_1p();
    let mut pos = 0u64; // trials consumed
    let mut failures = 0u64;
    loop {
        // trials up to and including the next failure ~ Geometric(p)
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let skip = (u.ln() / log_q).floor();
        if skip >= (n - pos) as f64 {
            return true;
        }
        pos += skip as u64 + 1;
        failures += 1;
        if failures >= c {
            return false;
        }
        if pos >= n {
            return true;
        }
    }
}

/// Acceptance fraction over `reps` simulated lots at `p_true`.
pub fn monte_carlo_accept<T: Scalar>(
    n: u64,
    c: u64,
    p_true: T,
    reps: u64,
    seed: u64,
) -> Result<McRate, VerificationError> {
    if reps < MIN_REPS {
        return Err(VerificationError::TooFewReps(reps));
    }
    let p = p_true.to_f64_lossy();
    if !(0.0..=1.0).contains(&p) {
        return Err(StatError::ProbabilityOutOfRange(p).into());
    }
    let accepted: u64 = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep);
            u64::from(lot_accepted(&mut rng, n, c, p))
        })
        .sum();
    Ok(McRate {
        rate: accepted as f64 / reps as f64,
        half_width: wilson_half_width(accepted, reps),
        reps,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate<T> {
    pub n: u64,
    pub c: u64,
    pub p0: T,
    pub p1: T,
    /// Exact producer risk `1 - P(X <= c - 1; p0)`.
    pub alpha_hat: T,
    /// Exact consumer risk `P(X <= c - 1; p1)`.
    pub beta_hat: T,
    pub mc_alpha: Option<McRate>,
    pub mc_beta: Option<McRate>,
}

pub fn realized_errors<T: Scalar>(
    plan: &SamplingPlan<T>,
    p0: T,
    p1: T,
) -> Result<ErrorEstimate<T>, VerificationError> {
    if !plan.converged {
        return Err(VerificationError::NotConverged);
    }
    realized_errors_nc(plan.n, plan.c, p0, p1)
}

pub fn realized_errors_nc<T: Scalar>(
    n: u64,
    c: u64,
    p0: T,
    p1: T,
) -> Result<ErrorEstimate<T>, VerificationError> {
    Ok(ErrorEstimate {
        n,
        c,
        p0,
        p1,
        alpha_hat: T::one() - accept_probability(n, c, p0)?,
        beta_hat: accept_probability(n, c, p1)?,
        mc_alpha: None,
        mc_beta: None,
    })
}

impl<T: Scalar> ErrorEstimate<T> {
    /// Adds simulated counterparts; the producer side reports the rejection
    /// rate.
    pub fn with_monte_carlo(mut self, reps: u64, seed: u64) -> Result<Self, VerificationError> {
        let acc0 = monte_carlo_accept(self.n, self.c, self.p0, reps, seed)?;
        self.mc_alpha = Some(McRate {
            rate: 1.0 - acc0.rate,
            ..acc0
        });
        self.mc_beta = Some(monte_carlo_accept(self.n, self.c, self.p1, reps, seed)?);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub n: u64,
    pub c: u64,
    pub iterations: u64,
    pub repeats: usize,
    pub median_secs: f64,
    /// Median absolute deviation of the timings.
    pub mad_secs: f64,
    pub min_secs: f64,
    pub max_secs: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        (sorted[m - 1] + sorted[m]) / 2.0
    }
}

/// Wall-clock timing of `repeats` solves on this machine.
pub fn benchmark_solver<T: Scalar>(
    method: Method,
    spec: &TestSpec<T>,
    repeats: usize,
) -> Result<BenchRecord, VerificationError> {
    if repeats == 0 {
        return Err(VerificationError::NoRepeats);
    }
    let mut times = Vec::with_capacity(repeats);
    let mut plan = None;
    for _ in 0..repeats {
        let start = Instant::now();
        let p = solve(spec, method)?;
        times.push(start.elapsed().as_secs_f64());
        plan = Some(p);
    }
    let plan = plan.expect("repeats >= 1");
    times.sort_by(f64::total_cmp);
    let med = median(&times);
    let mut dev: Vec<f64> = times.iter().map(|t| (t - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok(BenchRecord {
        method,
        n: plan.n,
        c: plan.c,
        iterations: plan.iterations,
        repeats,
        median_secs: med,
        mad_secs: median(&dev),
        min_secs: times[0],
        max_secs: times[times.len() - 1],
    })
}
