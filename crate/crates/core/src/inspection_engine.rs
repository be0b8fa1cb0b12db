//! Sequential lot inspection over a ladder of defect-rate levels.
//!
//! Levels `p(0) < p(1) < … < p(k)` are tested two at a time. Stage `i`
//! runs the plan for `(p(i), p(i+1))` together with the successive-failure
//! limit `r(i)` of `p(i+1)`. Trials and failures are counted from the start
//! of inspection, so a stage's `n` is a cumulative total and nothing seen
//! at an earlier stage is discarded.
//!
//! A stage escalates to the next one as soon as the failure count reaches
//! its `c` or the current failure run exceeds its `r`; it accepts once the
//! cumulative trial count reaches its `n` with fewer than `c` failures.
//! Escalation cascades: a stage entered with its `n` already reached
//! decides on the spot, and a stage entered with too many failures (or too
//! long a run) is skipped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan_solvers::{solve, DiscreteTails, Method, SamplingPlan, SolverError, TestSpec};
use crate::run_limits::{sfl_r, SflError, SflQuery, DEFAULT_HORIZON};
use crate::scalar::Scalar;
use crate::stat_kernels::{TailMass, ZMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LadderError {
    #[error("a ladder needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("levels must be strictly increasing (level {index})")]
    NotIncreasing { index: usize },
    #[error("level {index} = {value} outside [0, 0.5)")]
    LevelOutOfRange { index: usize, value: f64 },
    #[error("method schedule names {found} methods for {expected} pairs")]
    ScheduleLength { expected: usize, found: usize },
    #[error("plan for pair ({p0}, {p1}) failed: {source}")]
    Plan {
        p0: f64,
        p1: f64,
        #[source]
        source: SolverError,
    },
    #[error("plan for pair ({p0}, {p1}) did not converge")]
    NotConverged { p0: f64, p1: f64 },
    #[error("threshold {t_h} of pair ({p0}, {p1}) lies outside the pair")]
    ThresholdOutsidePair { p0: f64, p1: f64, t_h: f64 },
    #[error("run limit for level {p}: {source}")]
    RunLimit {
        p: f64,
        #[source]
        source: SflError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InspectionError {
    #[error("inspection already terminated ({0:?}); no further outcomes accepted")]
    Terminated(StatusKind),
    #[error("replay diverged from the log at trial {trial}")]
    ReplayMismatch { trial: u64 },
}

/// Which solver handles each adjacent pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodSchedule {
    Uniform(Method),
    PerPair(Vec<Method>),
    /// Exact binomial for the first pair, iterative normal for the rest.
    BinThenNormI,
}

impl MethodSchedule {
    fn method_for(&self, pair: usize) -> Method {
        match self {
            MethodSchedule::Uniform(m) => *m,
            MethodSchedule::PerPair(ms) => ms[pair],
            MethodSchedule::BinThenNormI if pair == 0 => Method::Bin,
            MethodSchedule::BinThenNormI => Method::NormI,
        }
    }
}

/// Inputs to [`build_ladder`].
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSpec<T> {
    pub levels: Vec<T>,
    pub alpha_tail: TailMass<T>,
    pub beta_tail: TailMass<T>,
    pub schedule: MethodSchedule,
    /// Recurrence horizon for the run limits.
    pub ex: T,
    /// `None` uses each method's default tolerance.
    pub epsilon: Option<T>,
    pub z_mode: ZMode,
    pub discrete_tails: DiscreteTails,
    pub max_n: u64,
}

impl<T: Scalar> LadderSpec<T> {
    /// 5% tails, default horizon and tolerances.
    pub fn new(levels: Vec<T>, schedule: MethodSchedule) -> Self {
        let five = TailMass::new(T::of(0.05)).expect("valid tail");
        Self {
            levels,
            alpha_tail: five,
            beta_tail: five,
            schedule,
            ex: T::of(DEFAULT_HORIZON),
            epsilon: None,
            z_mode: ZMode::Paper,
            discrete_tails: DiscreteTails::Halved,
            max_n: TestSpec::<T>::DEFAULT_MAX_N,
        }
    }

    /// `count + 1` levels `0, step, 2·step, …`.
    pub fn stepped(step: T, count: usize, schedule: MethodSchedule) -> Self {
        Self::new(
            (0..=count).map(|i| step * T::count(i as u64)).collect(),
            schedule,
        )
    }

    pub fn with_tails(mut self, alpha: TailMass<T>, beta: TailMass<T>) -> Self {
        self.alpha_tail = alpha;
        self.beta_tail = beta;
        self
    }

    pub fn with_horizon(mut self, ex: T) -> Self {
        self.ex = ex;
        self
    }

    pub fn with_epsilon(mut self, epsilon: Option<T>) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_z_mode(mut self, z_mode: ZMode) -> Self {
        self.z_mode = z_mode;
        self
    }

    pub fn with_discrete_tails(mut self, tails: DiscreteTails) -> Self {
        self.discrete_tails = tails;
        self
    }

    pub fn with_max_n(mut self, max_n: u64) -> Self {
        self.max_n = max_n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLadder<T> {
    pub levels: Vec<T>,
    /// `plans[i]` tests `(levels[i], levels[i + 1])`.
    pub plans: Vec<SamplingPlan<T>>,
    /// `run_limits[i]` is the successive-failure limit of `levels[i + 1]`.
    pub run_limits: Vec<u32>,
    pub ex: T,
}

impl<T: Scalar> LevelLadder<T> {
    pub fn stages(&self) -> usize {
        self.plans.len()
    }
}

pub fn build_ladder<T: Scalar>(spec: &LadderSpec<T>) -> Result<LevelLadder<T>, LadderError> {
    let levels = &spec.levels;
    if levels.len() < 2 {
        return Err(LadderError::TooFewLevels(levels.len()));
    }
    for (i, &p) in levels.iter().enumerate() {
        if !(p >= T::zero() && p < T::of(0.5)) {
            return Err(LadderError::LevelOutOfRange {
                index: i,
                value: p.to_f64_lossy(),
            });
        }
        if i > 0 && !(p > levels[i - 1]) {
            return Err(LadderError::NotIncreasing { index: i });
        }
    }
    let pairs = levels.len() - 1;
    if let MethodSchedule::PerPair(ms) = &spec.schedule {
        if ms.len() != pairs {
            return Err(LadderError::ScheduleLength {
                expected: pairs,
                found: ms.len(),
            });
        }
    }

    let mut plans = Vec::with_capacity(pairs);
    let mut run_limits = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let (p0, p1) = (levels[i], levels[i + 1]);
        let (f0, f1) = (p0.to_f64_lossy(), p1.to_f64_lossy());
        let method = spec.schedule.method_for(i);
        let plan_err = |source| LadderError::Plan {
            p0: f0,
            p1: f1,
            source,
        };
        let test = TestSpec::new(p0, p1)
            .map_err(plan_err)?
            .with_tails(spec.alpha_tail, spec.beta_tail)
            .with_epsilon(spec.epsilon.unwrap_or(T::of(method.default_epsilon())))
            .with_z_mode(spec.z_mode)
            .with_discrete_tails(spec.discrete_tails)
            .with_max_n(spec.max_n);
        let plan = solve(&test, method).map_err(plan_err)?;
        if !plan.converged {
            return Err(LadderError::NotConverged { p0: f0, p1: f1 });
        }
        if !(plan.t_h > p0 && plan.t_h < p1) {
            return Err(LadderError::ThresholdOutsidePair {
                p0: f0,
                p1: f1,
                t_h: plan.t_h.to_f64_lossy(),
            });
        }
        plans.push(plan);

        let limit = SflQuery::new(p1, spec.ex)
            .and_then(sfl_r)
            .map_err(|source| LadderError::RunLimit { p: f1, source })?;
        run_limits.push(limit.r);
    }
    Ok(LevelLadder {
        levels: levels.clone(),
        plans,
        run_limits,
        ex: spec.ex,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeValue {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub value: OutcomeValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Outcome {
    pub fn success() -> Self {
        Self {
            value: OutcomeValue::Success,
            source: None,
        }
    }

    pub fn failure() -> Self {
        Self {
            value: OutcomeValue::Failure,
            source: None,
        }
    }

    pub fn from_failure(failed: bool) -> Self {
        if failed {
            Self::failure()
        } else {
            Self::success()
        }
    }

    pub fn is_failure(&self) -> bool {
        self.value == OutcomeValue::Failure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscalationReason {
    /// Failure count reached the stage's `c`.
    FailureLimit,
    /// Failure run exceeded the stage's `r`.
    RunLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transition<T> {
    Escalated {
        from: usize,
        to: usize,
        reason: EscalationReason,
    },
    RejectedBeyondLast {
        from: usize,
        reason: EscalationReason,
    },
    Accepted {
        stage: usize,
        t_h: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status<T> {
    Continue,
    AcceptedAt { stage: usize, t_h: T },
    RejectedBeyondLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatusKind {
    Continue,
    Accepted,
    RejectedBeyondLast,
}

impl<T> Status<T> {
    pub fn kind(&self) -> StatusKind {
        match self {
            Status::Continue => StatusKind::Continue,
            Status::AcceptedAt { .. } => StatusKind::Accepted,
            Status::RejectedBeyondLast => StatusKind::RejectedBeyondLast,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Status::Continue)
    }
}

/// One observed outcome and everything it triggered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    /// 1-based trial index.
    pub trial: u64,
    pub outcome: Outcome,
    /// Stage after the event.
    pub stage: usize,
    pub failures: u64,
    pub run: u64,
    /// Empty when the stage simply continues; several entries on cascades.
    pub transitions: Vec<Transition<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
struct Counters {
    stage: usize,
    trials: u64,
    failures: u64,
    run: u64,
}

/// The engine's decision rule, shared by [`InspectionState::observe`] and
/// the exact outcome model.
fn advance<T: Scalar>(
    ladder: &LevelLadder<T>,
    mut k: Counters,
    failed: bool,
) -> (Counters, Vec<Transition<T>>, Status<T>) {
    k.trials += 1;
    if failed {
        k.failures += 1;
        k.run += 1;
    } else {
        k.run = 0;
    }
    let mut transitions = Vec::new();
    loop {
        let plan = &ladder.plans[k.stage];
        let reason = if k.run > u64::from(ladder.run_limits[k.stage]) {
            Some(EscalationReason::RunLimit)
        } else if k.failures >= plan.c {
            Some(EscalationReason::FailureLimit)
        } else {
            None
        };
        match reason {
            Some(reason) if k.stage + 1 < ladder.stages() => {
                transitions.push(Transition::Escalated {
                    from: k.stage,
                    to: k.stage + 1,
                    reason,
                });
                k.stage += 1;
            }
            Some(reason) => {
                transitions.push(Transition::RejectedBeyondLast {
                    from: k.stage,
                    reason,
                });
                return (k, transitions, Status::RejectedBeyondLast);
            }
            None if k.trials >= plan.n => {
                let t_h = plan.t_h;
                transitions.push(Transition::Accepted {
                    stage: k.stage,
                    t_h,
                });
                return (
                    k,
                    transitions,
                    Status::AcceptedAt {
                        stage: k.stage,
                        t_h,
                    },
                );
            }
            None => return (k, transitions, Status::Continue),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionState<T> {
    pub stage: usize,
    pub trials: u64,
    pub failures: u64,
    /// Current run of consecutive failures.
    pub run: u64,
    pub status: Status<T>,
    pub events: Vec<Event<T>>,
}

impl<T: Scalar> Default for InspectionState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> InspectionState<T> {
    pub fn new() -> Self {
        Self {
            stage: 0,
            trials: 0,
            failures: 0,
            run: 0,
            status: Status::Continue,
            events: Vec::new(),
        }
    }

    fn counters(&self) -> Counters {
        Counters {
            stage: self.stage,
            trials: self.trials,
            failures: self.failures,
            run: self.run,
        }
    }

    pub fn observe(
        &mut self,
        ladder: &LevelLadder<T>,
        outcome: Outcome,
    ) -> Result<&Event<T>, InspectionError> {
        if self.status.is_terminal() {
            return Err(InspectionError::Terminated(self.status.kind()));
        }
        let (k, transitions, status) = advance(ladder, self.counters(), outcome.is_failure());
        self.stage = k.stage;
        self.trials = k.trials;
        self.failures = k.failures;
        self.run = k.run;
        self.status = status;
        self.events.push(Event {
            trial: k.trials,
            outcome,
            stage: k.stage,
            failures: k.failures,
            run: k.run,
            transitions,
        });
        Ok(self.events.last().expect("just pushed"))
    }
}

/// Final state of a stream fold.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamResult<T> {
    Decided(InspectionState<T>),
    /// The stream ran out before a decision.
    Inconclusive(InspectionState<T>),
}

impl<T> StreamResult<T> {
    pub fn state(&self) -> &InspectionState<T> {
        match self {
            StreamResult::Decided(s) | StreamResult::Inconclusive(s) => s,
        }
    }

    pub fn into_state(self) -> InspectionState<T> {
        match self {
            StreamResult::Decided(s) | StreamResult::Inconclusive(s) => s,
        }
    }
}

/// Folds `observe` over `outcomes`, stopping at the first decision; the
/// rest of the iterator is left unconsumed.
pub fn run_stream<T: Scalar, I>(ladder: &LevelLadder<T>, outcomes: I) -> StreamResult<T>
where
    I: IntoIterator<Item = Outcome>,
{
    let mut state = InspectionState::new();
    for outcome in outcomes {
        state
            .observe(ladder, outcome)
            .expect("status checked below");
        if state.status.is_terminal() {
            return StreamResult::Decided(state);
        }
    }
    StreamResult::Inconclusive(state)
}

/// Rebuilds a state from its event log, checking every event reproduces.
pub fn replay<T: Scalar>(
    ladder: &LevelLadder<T>,
    events: &[Event<T>],
) -> Result<InspectionState<T>, InspectionError> {
    let mut state = InspectionState::new();
    for logged in events {
        let again = state.observe(ladder, logged.outcome.clone())?;
        if again != logged {
            return Err(InspectionError::ReplayMismatch {
                trial: logged.trial,
            });
        }
    }
    Ok(state)
}

/// Probability of each terminal status when outcomes are i.i.d. failures
/// with probability `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalDistribution<T> {
    /// `accepted[i]`: probability of acceptance at stage `i`.
    pub accepted: Vec<T>,
    pub rejected_beyond_last: T,
}

/// Exact terminal-status probabilities by forward recursion over
/// `(stage, failures, run)`, using the engine's own transition rule.
pub fn terminal_distribution<T: Scalar>(ladder: &LevelLadder<T>, p: T) -> TerminalDistribution<T> {
    let q = T::one() - p;
    let mut accepted = vec![T::zero(); ladder.stages()];
    let mut rejected = T::zero();
    let mut live: HashMap<Counters, T> = HashMap::from([(Counters::default(), T::one())]);
    while !live.is_empty() {
        let mut next: HashMap<Counters, T> = HashMap::with_capacity(live.len() * 2);
        for (k, mass) in live {
            for (failed, w) in [(false, q), (true, p)] {
                if w == T::zero() {
                    continue;
                }
                let (k2, _, status) = advance(ladder, k, failed);
                let m = mass * w;
                match status {
                    Status::Continue => *next.entry(k2).or_insert(T::zero()) += m,
                    Status::AcceptedAt { stage, .. } => accepted[stage] += m,
                    Status::RejectedBeyondLast => rejected += m,
                }
            }
        }
        live = next;
    }
    TerminalDistribution {
        accepted,
        rejected_beyond_last: rejected,
    }
}
