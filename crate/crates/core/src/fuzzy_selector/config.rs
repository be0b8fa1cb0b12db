//! TOML schema for the selector rule base. The shipped defaults live in
//! `config/fuzzy_default.toml` and are embedded at compile time.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Antecedent, Band, FuzzyError, FuzzyRuleBase, Input, MembershipFunction, Rule, Variable,
};
use crate::plan_solvers::Method;
use crate::scalar::Scalar;

pub const CONFIG_VERSION: u32 = 1;
pub const EXPECTED_RULES: usize = 8;
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../config/fuzzy_default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyConfig {
    pub version: u32,
    pub inputs: BTreeMap<String, VariableConfig>,
    pub output: OutputConfig,
    pub rules: Vec<RuleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableConfig {
    pub universe: [f64; 2],
    pub terms: BTreeMap<String, [f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub universe: [f64; 2],
    pub terms: BTreeMap<String, [f64; 4]>,
    pub bands: BTreeMap<Method, [f64; 2]>,
}

/// `when` clauses read `"<input> is <term>"` or `"<input> is not <term>"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub when: Vec<String>,
    pub then: String,
}

impl FuzzyConfig {
    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("shipped selector config parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, FuzzyError> {
        let cfg: Self = toml::from_str(text).map_err(|e| FuzzyError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(FuzzyError::Config(format!(
                "unsupported version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("selector config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, FuzzyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FuzzyError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Validated rule base with exactly [`EXPECTED_RULES`] rules.
    pub fn into_rule_base<T: Scalar>(&self) -> Result<FuzzyRuleBase<T>, FuzzyError> {
        if self.rules.len() != EXPECTED_RULES {
            return Err(FuzzyError::RuleCount {
                expected: EXPECTED_RULES,
                found: self.rules.len(),
            });
        }
        self.into_custom_rule_base()
    }

    /// As [`into_rule_base`](Self::into_rule_base) but with any non-zero
    /// number of rules.
    pub fn into_custom_rule_base<T: Scalar>(&self) -> Result<FuzzyRuleBase<T>, FuzzyError> {
        let mut inputs = Vec::with_capacity(4);
        for input in Input::ALL {
            let v = self
                .inputs
                .get(input.name())
                .ok_or_else(|| FuzzyError::Config(format!("missing input `{input}`")))?;
            inputs.push(variable(input.name(), v.universe, &v.terms)?);
        }
        if let Some(extra) = self.inputs.keys().find(|k| k.parse::<Input>().is_err()) {
            return Err(FuzzyError::UnknownInput(extra.clone()));
        }
        let inputs: [Variable<T>; 4] = inputs.try_into().expect("four inputs");
        let output = variable("output", self.output.universe, &self.output.terms)?;
        let bands = bands(&self.output.bands, output.universe)?;

        if self.rules.is_empty() {
            return Err(FuzzyError::RuleCount {
                expected: EXPECTED_RULES,
                found: 0,
            });
        }
        let rules = self
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| rule(i + 1, r, &inputs, &output))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FuzzyRuleBase {
            inputs,
            output,
            rules,
            bands,
        })
    }
}

fn variable<T: Scalar>(
    name: &str,
    universe: [f64; 2],
    terms: &BTreeMap<String, [f64; 4]>,
) -> Result<Variable<T>, FuzzyError> {
    let [lo, hi] = universe;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(FuzzyError::Config(format!(
            "`{name}` universe [{lo}, {hi}] is empty"
        )));
    }
    if terms.is_empty() {
        return Err(FuzzyError::Config(format!("`{name}` has no terms")));
    }
    let terms = terms
        .iter()
        .map(|(label, p)| MembershipFunction::new(label.clone(), p.map(T::of)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Variable {
        universe: (T::of(lo), T::of(hi)),
        terms,
    })
}

fn bands<T: Scalar>(
    raw: &BTreeMap<Method, [f64; 2]>,
    universe: (T, T),
) -> Result<Vec<Band<T>>, FuzzyError> {
    let mut bands: Vec<Band<T>> = raw
        .iter()
        .map(|(&method, &[lo, hi])| Band {
            method,
            lo: T::of(lo),
            hi: T::of(hi),
        })
        .collect();
    bands.sort_by(|a, b| {
        a.lo.partial_cmp(&b.lo)
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    for b in &bands {
        if !(b.lo < b.hi) || b.lo < universe.0 || b.hi > universe.1 {
            return Err(FuzzyError::InvalidBands(format!(
                "{} band ({}, {}] is empty or outside the output universe",
                b.method, b.lo, b.hi
            )));
        }
    }
    for w in bands.windows(2) {
        if w[1].lo < w[0].hi {
            return Err(FuzzyError::InvalidBands(format!(
                "{} and {} overlap",
                w[0].method, w[1].method
            )));
        }
    }
    Ok(bands)
}

fn rule<T: Scalar>(
    index: usize,
    raw: &RuleConfig,
    inputs: &[Variable<T>; 4],
    output: &Variable<T>,
) -> Result<Rule, FuzzyError> {
    let bad = |reason: String| FuzzyError::InvalidRule { index, reason };
    if raw.when.is_empty() {
        return Err(bad("no clauses".into()));
    }
    let antecedents =
        raw.when
            .iter()
            .map(|clause| {
                let words: Vec<&str> = clause.split_whitespace().collect();
                let (name, negated, term) = match words.as_slice() {
                    [name, "is", term] => (*name, false, *term),
                    [name, "is", "not", term] => (*name, true, *term),
                    _ => return Err(bad(format!("cannot read clause `{clause}`"))),
                };
                let input: Input = name.parse()?;
                let term_idx = inputs[input as usize].term_index(term).ok_or_else(|| {
                    FuzzyError::UnknownTerm {
                        input: name.to_string(),
                        term: term.to_string(),
                    }
                })?;
                Ok(Antecedent {
                    input,
                    term: term_idx,
                    negated,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
    let consequent = output
        .term_index(&raw.then)
        .ok_or_else(|| FuzzyError::UnknownOutputTerm(raw.then.clone()))?;
    Ok(Rule {
        antecedents,
        consequent,
    })
}

impl<T: Scalar> FuzzyRuleBase<T> {
    pub fn from_config(cfg: &FuzzyConfig) -> Result<Self, FuzzyError> {
        cfg.into_rule_base()
    }

    pub fn load(path: &Path) -> Result<Self, FuzzyError> {
        FuzzyConfig::load(path)?.into_rule_base()
    }

    /// Inverse of [`FuzzyConfig::into_custom_rule_base`].
    pub fn to_config(&self) -> FuzzyConfig {
        let var = |v: &Variable<T>| VariableConfig {
            universe: [v.universe.0.to_f64_lossy(), v.universe.1.to_f64_lossy()],
            terms: v
                .terms
                .iter()
                .map(|t| (t.label.clone(), t.points.map(|x| x.to_f64_lossy())))
                .collect(),
        };
        let out = var(&self.output);
        FuzzyConfig {
            version: CONFIG_VERSION,
            inputs: Input::ALL
                .into_iter()
                .map(|i| (i.name().to_string(), var(self.variable(i))))
                .collect(),
            output: OutputConfig {
                universe: out.universe,
                terms: out.terms,
                bands: self
                    .bands
                    .iter()
                    .map(|b| (b.method, [b.lo.to_f64_lossy(), b.hi.to_f64_lossy()]))
                    .collect(),
            },
            rules: self
                .rules
                .iter()
                .map(|r| RuleConfig {
                    when: r
                        .antecedents
                        .iter()
                        .map(|a| {
                            let term = &self.variable(a.input).terms[a.term].label;
                            let not = if a.negated { "not " } else { "" };
                            format!("{} is {not}{term}", a.input)
                        })
                        .collect(),
                    then: self.output.terms[r.consequent].label.clone(),
                })
                .collect(),
        }
    }
}
