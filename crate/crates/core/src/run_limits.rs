//! Successive Failures Limit: how many consecutive failures a level may
//! tolerate before it is rejected outright.
//!
//! For a defect probability `p`, the mean number of Bernoulli events
//! between completions of a run of `r` consecutive failures is
//!
//! ```text
//! E[X] = (1 - p^r) / ((1 - p) p^r)
//! ```
//!
//! Given a recurrence horizon `E[X]`, the limit `r` is the fixed point of
//! `r = ln((1 - p^r) / (E[X] (1 - p))) / ln p`, found by plain iteration
//! (the map is a contraction for any realistic horizon).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const DEFAULT_HORIZON: f64 = 1e6;

const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SflError {
    #[error("defect probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("recurrence horizon {0} must be >= 1")]
    HorizonTooSmall(f64),
    #[error("no fixed point: horizon {ex} with p = {p} gives E[X](1 - p) <= 1")]
    NoFixedPoint { p: f64, ex: f64 },
    #[error("fixed-point iteration did not settle for p = {p}, ex = {ex}")]
    NotSettled { p: f64, ex: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SflQuery<T> {
    /// Probability that a single event is a failure.
    pub p: T,
    /// Mean recurrence horizon, in Bernoulli events.
    pub ex: T,
}

impl<T: Scalar> SflQuery<T> {
    pub fn new(p: T, ex: T) -> Result<Self, SflError> {
        if !(p > T::zero() && p < T::one()) {
            return Err(SflError::ProbabilityOutOfRange(p.to_f64_lossy()));
        }
        if !(ex >= T::one()) || !ex.is_finite() {
            return Err(SflError::HorizonTooSmall(ex.to_f64_lossy()));
        }
        Ok(Self { p, ex })
    }

    pub fn with_default_horizon(p: T) -> Result<Self, SflError> {
        Self::new(p, T::of(DEFAULT_HORIZON))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLimit<T> {
    pub r_raw: T,
    /// More than `r` consecutive failures rejects the level.
    pub r: u32,
    pub iterations: usize,
}

fn run_map<T: Scalar>(p: T, ex: T, r: T) -> T {
    ((T::one() - p.powf(r)) / (ex * (T::one() - p))).ln() / p.ln()
}

/// Fixed-point iteration from `r = 1`; `r` is the ceiling of the limit,
/// with values within the iteration tolerance of an integer taken as that
/// integer.
pub fn sfl_r<T: Scalar>(q: SflQuery<T>) -> Result<RunLimit<T>, SflError> {
    let SflQuery { p, ex } = q;
    if !(ex * (T::one() - p) > T::one()) {
        return Err(SflError::NoFixedPoint {
            p: p.to_f64_lossy(),
            ex: ex.to_f64_lossy(),
        });
    }
    let tol = T::of(TOLERANCE).max(T::epsilon() * T::of(16.0));
    let mut r = T::one();
    for i in 1..=MAX_ITERATIONS {
        let next = run_map(p, ex, r);
        if !next.is_finite() {
            break;
        }
        let delta = (next - r).abs();
        r = next;
        if delta < tol {
            return Ok(RunLimit {
                r_raw: r,
                r: (r - tol).ceil().max(T::one()).to_u32().unwrap_or(u32::MAX),
                iterations: i,
            });
        }
    }
    Err(SflError::NotSettled {
        p: p.to_f64_lossy(),
        ex: ex.to_f64_lossy(),
    })
}

/// Mean number of events between completions of an `r`-run of failures.
pub fn mean_recurrence<T: Scalar>(p: T, r: u32) -> T {
    let pr = p.powi(r as i32);
    (T::one() - pr) / ((T::one() - p) * pr)
}
