//! Normal-approximation solvers.
//!
//! Both solve the pair
//!
//! ```text
//! t_h = p0 + z_a * sqrt(p0 (1 - p0) / n)
//! t_h = p1 - z_b * sqrt(p1 (1 - p1) / n)
//! ```
//!
//! for the threshold `t_h` and the trial count `n`.

use serde::{Deserialize, Serialize};

use super::{Method, PlanDetail, SamplingPlan, SolverError, TestSpec};
use crate::scalar::{ceil_count, round_count, Scalar};

/// Real-valued solution of the normal system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalSolution<T> {
    pub n_real: T,
    pub t_h: T,
}

/// Eliminates `t_h` from the pair and solves for `n` directly:
/// `sqrt(n) = (z_a·s0 + z_b·s1) / (p1 - p0)` with `s = sqrt(p (1 - p))`.
pub fn closed_form_norm<T: Scalar>(spec: &TestSpec<T>) -> Result<NormalSolution<T>, SolverError> {
    spec.validate()?;
    let (za, zb) = (spec.z_alpha(), spec.z_beta());
    let s0 = (spec.p0 * (T::one() - spec.p0)).sqrt();
    let s1 = (spec.p1 * (T::one() - spec.p1)).sqrt();
    let root_n = (za * s0 + zb * s1) / (spec.p1 - spec.p0);
    let n_real = root_n * root_n;
    Ok(NormalSolution {
        n_real,
        t_h: spec.p0 + za * s0 / root_n,
    })
}

/// Newton iterate: `x1` is the threshold, `x2` the trial count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonState<T> {
    pub x1: T,
    pub x2: T,
    pub residual_norm: T,
    pub step_norm: T,
}

impl<T: Scalar> NewtonState<T> {
    pub fn new(x1: T, x2: T) -> Self {
        Self {
            x1,
            x2,
            residual_norm: T::infinity(),
            step_norm: T::infinity(),
        }
    }

    /// Midpoint threshold and the closed-form trial count rounded up.
    pub fn initial(spec: &TestSpec<T>) -> Result<Self, SolverError> {
        let closed = closed_form_norm(spec)?;
        Ok(Self::new(
            (spec.p0 + spec.p1) / T::of(2.0),
            closed.n_real.ceil().max(T::one()),
        ))
    }
}

/// Stopping rules for [`solve_norm_newton`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: u64,
    /// Stop once the Euclidean norm of the update falls below this.
    pub step_tol: f64,
    /// Stop once the Euclidean norm of the residual falls below this.
    pub residual_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            step_tol: 1e-9,
            residual_tol: 1e-8,
        }
    }
}

struct System<T> {
    p0: T,
    p1: T,
    za_s0: T,
    zb_s1: T,
}

impl<T: Scalar> System<T> {
    fn new(spec: &TestSpec<T>) -> Self {
        let s0 = (spec.p0 * (T::one() - spec.p0)).sqrt();
        let s1 = (spec.p1 * (T::one() - spec.p1)).sqrt();
        Self {
            p0: spec.p0,
            p1: spec.p1,
            za_s0: spec.z_alpha() * s0,
            zb_s1: spec.z_beta() * s1,
        }
    }

    fn residual(&self, x1: T, x2: T) -> (T, T) {
        let inv_root = x2.sqrt().recip();
        (
            x1 - self.p0 - self.za_s0 * inv_root,
            x1 - self.p1 + self.zb_s1 * inv_root,
        )
    }

    /// Partial derivatives in `x2`; both rows have `dF/dx1 = 1`.
    fn jacobian_x2(&self, x2: T) -> (T, T) {
        let half_pow = T::of(2.0) * x2 * x2.sqrt();
        (self.za_s0 / half_pow, -self.zb_s1 / half_pow)
    }
}

fn norm2<T: Scalar>(a: T, b: T) -> T {
    a.hypot(b)
}

/// Generalised Newton-Raphson on the normal system.
///
/// Returns `n = round(x2)`, `t_h = x1` and `c = ceil(x1·x2)`. Hitting the
/// iteration limit yields a plan with `converged = false`.
pub fn solve_norm_newton<T: Scalar>(
    spec: &TestSpec<T>,
    init: NewtonState<T>,
) -> Result<SamplingPlan<T>, SolverError> {
    solve_norm_newton_with(spec, init, NewtonOptions::default())
}

pub fn solve_norm_newton_with<T: Scalar>(
    spec: &TestSpec<T>,
    init: NewtonState<T>,
    opts: NewtonOptions,
) -> Result<SamplingPlan<T>, SolverError> {
    spec.validate()?;
    if !(init.x2 > T::zero()) || !init.x1.is_finite() {
        return Err(SolverError::InvalidSpec(format!(
            "Newton start needs finite x1 and x2 > 0, got ({}, {})",
            init.x1, init.x2
        )));
    }
    let sys = System::new(spec);
    // floors keep the stopping tests reachable in f32
    let floor = T::epsilon() * T::of(16.0);
    let residual_tol = T::of(opts.residual_tol).max(floor);
    let step_tol = T::of(opts.step_tol);

    let mut state = init;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let (f1, f2) = sys.residual(state.x1, state.x2);
        state.residual_norm = norm2(f1, f2);
        if state.residual_norm < residual_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // [[1, a], [1, b]] · [d1, d2] = -[f1, f2]
        let (a, b) = sys.jacobian_x2(state.x2);
        let det = b - a;
        if det == T::zero() || !det.is_finite() {
            return Err(SolverError::SingularJacobian {
                iteration: iterations,
            });
        }
        let mut d2 = (f1 - f2) / det;
        let mut d1 = -f1 - a * d2;
        // keep the trial count positive
        let mut halvings = 0;
        while !(state.x2 + d2 > T::zero()) && halvings < 64 {
            d1 /= T::of(2.0);
            d2 /= T::of(2.0);
            halvings += 1;
        }
        state.x1 += d1;
        state.x2 += d2;
        state.step_norm = norm2(d1, d2);
        if state.step_norm < step_tol.max(floor * (T::one() + state.x2.abs())) {
            let (f1, f2) = sys.residual(state.x1, state.x2);
            state.residual_norm = norm2(f1, f2);
            converged = true;
            break;
        }
    }

    let n = round_count(state.x2).max(1);
    let c = ceil_count(state.x1 * state.x2);
    Ok(SamplingPlan::assemble(
        spec,
        Method::NormN,
        n,
        c,
        state.x1,
        iterations,
        converged,
        PlanDetail::Newton(state),
    ))
}

/// Unit-step scan: the first `n` whose two limits differ by less than
/// `spec.epsilon`. The threshold is their midpoint and `c = round(n·t_h)`.
pub fn solve_norm_iterative<T: Scalar>(spec: &TestSpec<T>) -> Result<SamplingPlan<T>, SolverError> {
    spec.validate()?;
    let (za, zb) = (spec.z_alpha(), spec.z_beta());
    let s0 = (spec.p0 * (T::one() - spec.p0)).sqrt();
    let s1 = (spec.p1 * (T::one() - spec.p1)).sqrt();

    let mut best = (T::infinity(), 0);
    for n in 1..=spec.max_n {
        let inv_root = T::count(n).sqrt().recip();
        let upper = spec.p0 + za * s0 * inv_root;
        let lower = spec.p1 - zb * s1 * inv_root;
        let gap = (upper - lower).abs();
        if gap < best.0 {
            best = (gap, n);
        }
        if gap < spec.epsilon {
            let t_h = (upper + lower) / T::of(2.0);
            let c = round_count(T::count(n) * t_h);
            return Ok(SamplingPlan::assemble(
                spec,
                Method::NormI,
                n,
                c,
                t_h,
                n,
                true,
                PlanDetail::Iterative { gap },
            ));
        }
    }
    Err(SolverError::NoConvergence {
        method: Method::NormI,
        max_n: spec.max_n,
        best_gap: best.0.to_f64_lossy(),
        best_n: best.1,
    })
}
