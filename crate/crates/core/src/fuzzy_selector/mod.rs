//! Mamdani fuzzy selector: recommends a plan solver from the step between
//! hypothesised rates, the threshold, a tolerable execution time and the
//! required absolute precision.
//!
//! AND is `min`, NOT is `1 - mu`, implication clips the consequent with
//! `min`, aggregation is `max`, and the crisp score is the centroid of the
//! aggregate on a [`GRID_POINTS`]-point grid over the output universe.
//! The score maps to a solver through half-open bands `(lo, hi]`.

mod config;

use core::fmt;
use core::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan_solvers::Method;
use crate::scalar::Scalar;

pub use config::{
    FuzzyConfig, OutputConfig, RuleConfig, VariableConfig, CONFIG_VERSION, DEFAULT_CONFIG_TOML,
    EXPECTED_RULES,
};

pub const GRID_POINTS: usize = 1001;

/// Scores at or below this carry no recommendation.
pub const NO_RECOMMENDATION_CUTOFF: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuzzyError {
    #[error("no rule fired; the selector has no recommendation for this input")]
    NoRuleFired,
    #[error("unknown input variable `{0}` (expected step, t_h, t_exec or prec_abs)")]
    UnknownInput(String),
    #[error("input `{input}` has no term `{term}`")]
    UnknownTerm { input: String, term: String },
    #[error("output has no term `{0}`")]
    UnknownOutputTerm(String),
    #[error("membership function `{label}`: {reason}")]
    InvalidMembership { label: String, reason: String },
    #[error("invalid output bands: {0}")]
    InvalidBands(String),
    #[error("rule {index}: {reason}")]
    InvalidRule { index: usize, reason: String },
    #[error("expected {expected} rules, found {found}")]
    RuleCount { expected: usize, found: usize },
    #[error("response surface axes must differ")]
    SameAxis,
    #[error("response surface needs at least 2 points per axis, got {0}")]
    GridTooSmall(usize),
    #[error("config: {0}")]
    Config(String),
}

/// The four selector inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Input {
    #[serde(rename = "step")]
    Step,
    #[serde(rename = "t_h")]
    Th,
    #[serde(rename = "t_exec")]
    TExec,
    #[serde(rename = "prec_abs")]
    PrecAbs,
}

impl Input {
    pub const ALL: [Input; 4] = [Input::Step, Input::Th, Input::TExec, Input::PrecAbs];

    pub fn name(self) -> &'static str {
        match self {
            Input::Step => "step",
            Input::Th => "t_h",
            Input::TExec => "t_exec",
            Input::PrecAbs => "prec_abs",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Input {
    type Err = FuzzyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Input::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| FuzzyError::UnknownInput(s.to_string()))
    }
}

/// Trapezoid `[a, b, c, d]`: 0 outside `[a, d]`, 1 on `[b, c]`, linear
/// between. `a == b` or `c == d` gives a shoulder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction<T> {
    pub label: String,
    pub points: [T; 4],
}

impl<T: Scalar> MembershipFunction<T> {
    pub fn new(label: impl Into<String>, points: [T; 4]) -> Result<Self, FuzzyError> {
        let label = label.into();
        let [a, b, c, d] = points;
        if points.iter().any(|v| !v.is_finite()) {
            return Err(FuzzyError::InvalidMembership {
                label,
                reason: "breakpoints must be finite".into(),
            });
        }
        if !(a <= b && b <= c && c <= d) {
            return Err(FuzzyError::InvalidMembership {
                label,
                reason: format!("breakpoints must be ordered, got [{a}, {b}, {c}, {d}]"),
            });
        }
        Ok(Self { label, points })
    }

    pub fn degree(&self, x: T) -> T {
        let [a, b, c, d] = self.points;
        if x < a || x > d {
            T::zero()
        } else if x >= b && x <= c {
            T::one()
        } else if x < b {
            (x - a) / (b - a)
        } else {
            (d - x) / (d - c)
        }
    }
}

/// Degree of membership of `x` in the trapezoid `points`.
pub fn membership_degree<T: Scalar>(x: T, points: [T; 4]) -> T {
    MembershipFunction {
        label: String::new(),
        points,
    }
    .degree(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable<T> {
    pub universe: (T, T),
    pub terms: Vec<MembershipFunction<T>>,
}

impl<T: Scalar> Variable<T> {
    fn term_index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == term)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antecedent {
    pub input: Input,
    pub term: usize,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedents: Vec<Antecedent>,
    /// Index into the output terms.
    pub consequent: usize,
}

/// Score interval `(lo, hi]` mapped to a solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band<T> {
    pub method: Method,
    pub lo: T,
    pub hi: T,
}

/// Crisp selector inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorInput<T> {
    pub step: T,
    pub t_h: T,
    pub t_exec: T,
    pub prec_abs: T,
}

impl<T: Scalar> SelectorInput<T> {
    pub fn new(step: T, t_h: T, t_exec: T, prec_abs: T) -> Self {
        Self {
            step,
            t_h,
            t_exec,
            prec_abs,
        }
    }

    pub fn get(&self, input: Input) -> T {
        match input {
            Input::Step => self.step,
            Input::Th => self.t_h,
            Input::TExec => self.t_exec,
            Input::PrecAbs => self.prec_abs,
        }
    }

    pub fn set(&mut self, input: Input, value: T) {
        match input {
            Input::Step => self.step = value,
            Input::Th => self.t_h = value,
            Input::TExec => self.t_exec = value,
            Input::PrecAbs => self.prec_abs = value,
        }
    }
}

/// A validated rule base.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRuleBase<T> {
    /// Indexed by [`Input`] order.
    pub inputs: [Variable<T>; 4],
    pub output: Variable<T>,
    pub rules: Vec<Rule>,
    /// Sorted, non-overlapping.
    pub bands: Vec<Band<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFiring<T> {
    /// 1-based rule number.
    pub rule: usize,
    pub strength: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference<T> {
    pub score: T,
    /// `None` when the score falls at or below the cutoff or outside every band.
    pub method: Option<Method>,
    /// Every rule with non-zero strength.
    pub firings: Vec<RuleFiring<T>>,
    /// Inputs that were clamped into their universe.
    pub clamped: Vec<Input>,
}

impl<T: Scalar> FuzzyRuleBase<T> {
    /// The shipped eight-rule base.
    pub fn default_rules() -> Self {
        FuzzyConfig::default_config()
            .into_rule_base()
            .expect("shipped selector config is valid")
    }

    pub fn variable(&self, input: Input) -> &Variable<T> {
        &self.inputs[input.index()]
    }

    /// Clamps every input into its universe, reporting which ones moved.
    pub fn clamp(&self, x: SelectorInput<T>) -> (SelectorInput<T>, Vec<Input>) {
        let mut out = x;
        let mut moved = Vec::new();
        for input in Input::ALL {
            let (lo, hi) = self.variable(input).universe;
            let v = x.get(input);
            let c = if v.is_nan() { lo } else { v.max(lo).min(hi) };
            if c != v {
                warn!("{input} = {v} outside [{lo}, {hi}], clamped to {c}");
                moved.push(input);
            }
            out.set(input, c);
        }
        (out, moved)
    }

    /// Strength of every rule, in rule order.
    pub fn strengths(&self, x: &SelectorInput<T>) -> Vec<T> {
        self.rules
            .iter()
            .map(|rule| {
                rule.antecedents.iter().fold(T::one(), |acc, ant| {
                    let mu = self.variable(ant.input).terms[ant.term].degree(x.get(ant.input));
                    acc.min(if ant.negated { T::one() - mu } else { mu })
                })
            })
            .collect()
    }

    /// Centroid of the clipped, max-aggregated consequents, or `None` when
    /// the aggregate has no mass.
    fn centroid(&self, strengths: &[T]) -> Option<T> {
        let (lo, hi) = self.output.universe;
        let h = (hi - lo) / T::count((GRID_POINTS - 1) as u64);
        let mut num = T::zero();
        let mut den = T::zero();
        for i in 0..GRID_POINTS {
            let y = lo + h * T::count(i as u64);
            let mu = self
                .rules
                .iter()
                .zip(strengths)
                .fold(T::zero(), |acc, (rule, &s)| {
                    acc.max(s.min(self.output.terms[rule.consequent].degree(y)))
                });
            let w = if i == 0 || i == GRID_POINTS - 1 {
                T::of(0.5)
            } else {
                T::one()
            };
            num += w * y * mu;
            den += w * mu;
        }
        (den > T::zero()).then(|| num / den)
    }

    /// Full Mamdani pass. Inputs are clamped first; errors when no rule fires.
    pub fn infer(&self, x: SelectorInput<T>) -> Result<Inference<T>, FuzzyError> {
        let (x, clamped) = self.clamp(x);
        let strengths = self.strengths(&x);
        let score = self.centroid(&strengths).ok_or(FuzzyError::NoRuleFired)?;
        let firings = strengths
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > T::zero())
            .map(|(i, &strength)| RuleFiring {
                rule: i + 1,
                strength,
            })
            .collect();
        Ok(Inference {
            score,
            method: self.classify(score),
            firings,
            clamped,
        })
    }

    /// Band lookup; `None` at or below the cutoff or outside every band.
    pub fn classify(&self, score: T) -> Option<Method> {
        if score <= T::of(NO_RECOMMENDATION_CUTOFF) {
            return None;
        }
        self.bands
            .iter()
            .find(|b| score > b.lo && score <= b.hi)
            .map(|b| b.method)
    }

    /// Scores over a grid of two inputs with the others held at `fixed`.
    /// Points where no rule fires score 0, i.e. no recommendation.
    pub fn response_surface(
        &self,
        axes: (Input, Input),
        points: (usize, usize),
        fixed: SelectorInput<T>,
    ) -> Result<ResponseSurface<T>, FuzzyError> {
        let (ax, ay) = axes;
        if ax == ay {
            return Err(FuzzyError::SameAxis);
        }
        let (nx, ny) = points;
        if nx < 2 || ny < 2 {
            return Err(FuzzyError::GridTooSmall(nx.min(ny)));
        }
        let xs = linspace(self.variable(ax).universe, nx);
        let ys = linspace(self.variable(ay).universe, ny);
        let scores = xs
            .iter()
            .map(|&xv| {
                ys.iter()
                    .map(|&yv| {
                        let mut p = fixed;
                        p.set(ax, xv);
                        p.set(ay, yv);
                        let (p, _) = self.clamp(p);
                        self.centroid(&self.strengths(&p)).unwrap_or(T::zero())
                    })
                    .collect()
            })
            .collect();
        Ok(ResponseSurface {
            axes,
            xs,
            ys,
            scores,
        })
    }
}

fn linspace<T: Scalar>((lo, hi): (T, T), n: usize) -> Vec<T> {
    let step = (hi - lo) / T::count((n - 1) as u64);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + step * T::count(i as u64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface<T> {
    pub axes: (Input, Input),
    pub xs: Vec<T>,
    pub ys: Vec<T>,
    /// `scores[i][j]` at `(xs[i], ys[j])`.
    pub scores: Vec<Vec<T>>,
}
