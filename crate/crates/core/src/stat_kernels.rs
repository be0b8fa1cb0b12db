//! Probability primitives: binomial and Poisson CDFs with their discrete
//! quantiles, and the standard normal CDF with its upper-tail quantile.
//!
//! Discrete CDFs are accumulated term by term with a ratio recurrence and
//! compensated summation. When the leading term underflows (large `n·p` or
//! large `lambda`), the walk switches to log-space terms combined with a
//! running log-sum-exp, so tails stay accurate without any factorials.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{CompensatedSum, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("count {c} exceeds trial count {n}")]
    CountOutOfRange { c: u64, n: u64 },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("Poisson mean {0} must be a finite value >= 0")]
    InvalidMean(f64),
    #[error("trial count must be at least 1")]
    ZeroTrials,
    #[error("tail mass {0} outside (0, 0.5)")]
    TailOutOfRange(f64),
    #[error("non-finite argument")]
    NonFinite,
    #[error("Poisson quantile scan for lambda {lambda} exceeded cap {cap}")]
    QuantileCapExceeded { lambda: f64, cap: u64 },
}

/// Probability mass left in one tail of a distribution; `0 < value < 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64", bound = "T: Scalar")]
pub struct TailMass<T>(T);

impl<T: Scalar> TailMass<T> {
    pub fn new(value: T) -> Result<Self, StatError> {
        if value.is_finite() && value > T::zero() && value < T::of(0.5) {
            Ok(Self(value))
        } else {
            Err(StatError::TailOutOfRange(value.to_f64_lossy()))
        }
    }

    pub fn value(self) -> T {
        self.0
    }

    /// The mass split across both sides, i.e. `value / 2`.
    pub fn halved(self) -> Self {
        Self(self.0 / T::of(2.0))
    }

    pub fn z(self, mode: ZMode) -> T {
        z_value(self.0, mode).expect("tail mass already validated")
    }
}

impl<T: Scalar> TryFrom<f64> for TailMass<T> {
    type Error = StatError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(T::of(value))
    }
}

impl<T: Scalar> From<TailMass<T>> for f64 {
    fn from(t: TailMass<T>) -> f64 {
        t.0.to_f64_lossy()
    }
}

/// A count distribution whose CDF and quantiles the plan solvers scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountDistribution<T> {
    Binomial { n: u64, p: T },
    Poisson { lambda: T },
}

impl<T: Scalar> CountDistribution<T> {
    pub fn binomial(n: u64, p: T) -> Result<Self, StatError> {
        if n == 0 {
            return Err(StatError::ZeroTrials);
        }
        check_probability(p)?;
        Ok(Self::Binomial { n, p })
    }

    pub fn poisson(lambda: T) -> Result<Self, StatError> {
        if !lambda.is_finite() || lambda < T::zero() {
            return Err(StatError::InvalidMean(lambda.to_f64_lossy()));
        }
        Ok(Self::Poisson { lambda })
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Binomial { n, p } => T::count(n) * p,
            Self::Poisson { lambda } => lambda,
        }
    }

    /// `P(X <= c)`.
    pub fn cdf(&self, c: u64) -> T {
        let mut walk = CdfWalk::new(*self);
        let mut value = walk.next_cdf();
        for _ in 0..c {
            if value >= T::one() {
                break;
            }
            value = walk.next_cdf();
        }
        value
    }

    /// Largest count a quantile scan may visit: `n` for the binomial,
    /// `lambda + 20·sqrt(lambda) + 50` for the Poisson.
    pub fn scan_cap(&self) -> u64 {
        match *self {
            Self::Binomial { n, .. } => n,
            Self::Poisson { lambda } => {
                let cap = lambda + T::of(20.0) * lambda.sqrt() + T::of(50.0);
                cap.floor().to_u64().unwrap_or(u64::MAX)
            }
        }
    }
}

fn check_probability<T: Scalar>(p: T) -> Result<(), StatError> {
    if p.is_finite() && p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(StatError::ProbabilityOutOfRange(p.to_f64_lossy()))
    }
}

/// Walks `CDF(0), CDF(1), …` in a single pass.
#[derive(Debug, Clone)]
pub(crate) struct CdfWalk<T> {
    dist: CountDistribution<T>,
    k: u64,
    state: WalkState<T>,
}

#[derive(Debug, Clone)]
enum WalkState<T> {
    /// All remaining mass already accumulated.
    Saturated,
    /// Binomial with p = 1: all mass sits at n.
    PointMass {
        at: u64,
    },
    Linear {
        term: T,
        sum: CompensatedSum<T>,
    },
    Log {
        log_term: T,
        log_sum: T,
    },
}

impl<T: Scalar> CdfWalk<T> {
    pub(crate) fn new(dist: CountDistribution<T>) -> Self {
        let state = match dist {
            CountDistribution::Binomial { p, .. } if p == T::zero() => WalkState::Saturated,
            CountDistribution::Binomial { n, p } if p == T::one() => WalkState::PointMass { at: n },
            CountDistribution::Poisson { lambda } if lambda == T::zero() => WalkState::Saturated,
            CountDistribution::Binomial { n, p } => Self::start(T::count(n) * (-p).ln_1p()),
            CountDistribution::Poisson { lambda } => Self::start(-lambda),
        };
        Self { dist, k: 0, state }
    }

    fn start(log_t0: T) -> WalkState<T> {
        let t0 = log_t0.exp();
        if t0 >= T::min_positive_value() {
            WalkState::Linear {
                term: t0,
                sum: CompensatedSum::new(),
            }
        } else {
            WalkState::Log {
                log_term: log_t0,
                log_sum: T::neg_infinity(),
            }
        }
    }

    /// Log of the ratio `pmf(k+1) / pmf(k)`, or `None` past the support.
    fn log_ratio(&self, k: u64) -> Option<T> {
        match self.dist {
            CountDistribution::Binomial { n, p } => {
                if k >= n {
                    return None;
                }
                let num = T::count(n - k) * p;
                let den = T::count(k + 1) * (T::one() - p);
                Some(num.ln() - den.ln())
            }
            CountDistribution::Poisson { lambda } => Some(lambda.ln() - T::count(k + 1).ln()),
        }
    }

    fn ratio(&self, k: u64) -> Option<T> {
        match self.dist {
            CountDistribution::Binomial { n, p } => {
                if k >= n {
                    return None;
                }
                Some(T::count(n - k) / T::count(k + 1) * (p / (T::one() - p)))
            }
            CountDistribution::Poisson { lambda } => Some(lambda / T::count(k + 1)),
        }
    }

    /// Returns `CDF(k)` for the current `k` and advances to `k + 1`.
    pub(crate) fn next_cdf(&mut self) -> T {
        let k = self.k;
        self.k += 1;
        let (value, next) = match core::mem::replace(&mut self.state, WalkState::Saturated) {
            WalkState::Saturated => (T::one(), WalkState::Saturated),
            WalkState::PointMass { at } => {
                if k >= at {
                    (T::one(), WalkState::Saturated)
                } else {
                    (T::zero(), WalkState::PointMass { at })
                }
            }
            WalkState::Linear { term, mut sum } => {
                sum.add(term);
                let value = sum.value().min(T::one());
                match self.ratio(k) {
                    None => (T::one(), WalkState::Saturated),
                    Some(r) => (
                        value,
                        WalkState::Linear {
                            term: term * r,
                            sum,
                        },
                    ),
                }
            }
            WalkState::Log { log_term, log_sum } => {
                let log_sum = log_add(log_sum, log_term);
                let value = log_sum.exp().min(T::one());
                match self.log_ratio(k) {
                    None => (T::one(), WalkState::Saturated),
                    Some(lr) => (
                        value,
                        WalkState::Log {
                            log_term: log_term + lr,
                            log_sum,
                        },
                    ),
                }
            }
        };
        self.state = next;
        value
    }
}

fn log_add<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `P(X <= c)` for `X ~ Binomial(n, p)`.
pub fn binom_cdf<T: Scalar>(c: u64, n: u64, p: T) -> Result<T, StatError> {
    check_probability(p)?;
    if c > n {
        return Err(StatError::CountOutOfRange { c, n });
    }
    if c == n {
        return Ok(T::one());
    }
    Ok(CountDistribution::binomial(n, p)?.cdf(c))
}

/// `P(X <= c)` for `X ~ Poisson(lambda)`.
pub fn poisson_cdf<T: Scalar>(c: u64, lambda: T) -> Result<T, StatError> {
    Ok(CountDistribution::poisson(lambda)?.cdf(c))
}

/// Smallest `L` with `CDF(L) >= 1 - tail`.
pub fn upper_quantile<T: Scalar>(
    dist: CountDistribution<T>,
    tail: TailMass<T>,
) -> Result<u64, StatError> {
    let target = T::one() - tail.value();
    let cap = dist.scan_cap();
    let mut walk = CdfWalk::new(dist);
    for k in 0..=cap {
        if walk.next_cdf() >= target {
            return Ok(k);
        }
    }
    match dist {
        // CDF(n) = 1, unreachable in practice
        CountDistribution::Binomial { n, .. } => Ok(n),
        CountDistribution::Poisson { lambda } => Err(StatError::QuantileCapExceeded {
            lambda: lambda.to_f64_lossy(),
            cap,
        }),
    }
}

/// Largest `l` with `CDF(l) <= tail`, or `None` when `CDF(0) > tail`.
pub fn lower_quantile<T: Scalar>(dist: CountDistribution<T>, tail: TailMass<T>) -> Option<u64> {
    let tail = tail.value();
    let cap = dist.scan_cap();
    let mut walk = CdfWalk::new(dist);
    if walk.next_cdf() > tail {
        return None;
    }
    let mut l = 0;
    while l < cap && walk.next_cdf() <= tail {
        l += 1;
    }
    Some(l)
}

/// Standard normal CDF.
pub fn normal_cdf<T: Scalar>(x: T) -> Result<T, StatError> {
    if !x.is_finite() {
        return Err(StatError::NonFinite);
    }
    let x = x.to_f64_lossy();
    Ok(T::of(0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)))
}

/// How `z_value` treats the conventional 5% tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZMode {
    /// Use the rounded constant 1.64 for a 5% tail; exact elsewhere.
    #[default]
    Paper,
    Exact,
}

/// Upper-tail standard normal quantile `z` with `P(Z > z) = tail`.
pub fn z_value<T: Scalar>(tail: T, mode: ZMode) -> Result<T, StatError> {
    let t = tail.to_f64_lossy();
    if !(t > 0.0 && t <= 0.5) {
        return Err(StatError::TailOutOfRange(t));
    }
    if mode == ZMode::Paper && tail == T::of(0.05) {
        return Ok(T::of(1.64));
    }
    if t == 0.5 {
        return Ok(T::zero());
    }
    Ok(T::of(-inverse_normal_lower(t)))
}

/// Lower-tail inverse normal: rational approximation followed by one Halley
/// step against `erfc`.
fn inverse_normal_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * core::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}
