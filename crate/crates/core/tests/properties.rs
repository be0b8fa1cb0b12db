use dht_core::fuzzy_selector::{FuzzyConfig, FuzzyRuleBase, Input, SelectorInput};
use dht_core::inspection_engine::{
    build_ladder, replay, run_stream, EscalationReason, LadderSpec, LevelLadder, MethodSchedule,
    Outcome, Status, Transition,
};
use dht_core::plan_solvers::{closed_form_norm, solve, Method, TestSpec};
use dht_core::run_limits::{mean_recurrence, sfl_r, SflQuery};
use dht_core::stat_kernels::{
    binom_cdf, lower_quantile, poisson_cdf, upper_quantile, CountDistribution, TailMass,
};
use dht_core::verification::{accept_probability, monte_carlo_accept};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use statrs::distribution::{Binomial, DiscreteCDF, Poisson};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

// ---- stat kernels ----------------------------------------------------------

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn binomial_cdf_is_monotone(n in 1u64..400, p in 0.0f64..=1.0, c in 0u64..400) {
        let c = c.min(n - 1);
        let a = binom_cdf(c, n, p).unwrap();
        let b = binom_cdf(c + 1, n, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-15);
        let q = (p + 0.05).min(1.0);
        prop_assert!(binom_cdf(c, n, q).unwrap() <= a + 1e-12);
    }

    #[test]
    fn binomial_cdf_matches_statrs(n in 1u64..3000, p in 0.001f64..0.999, frac in 0.0f64..1.0) {
        let c = ((n as f64) * frac) as u64;
        let ours = binom_cdf(c.min(n), n, p).unwrap();
        let theirs = Binomial::new(p, n).unwrap().cdf(c.min(n));
        prop_assert!((ours - theirs).abs() < 1e-9, "{ours} vs {theirs}");
    }

    #[test]
    fn poisson_cdf_matches_statrs(lambda in 0.01f64..2000.0, frac in 0.0f64..2.0) {
        let c = (lambda * frac) as u64;
        let ours = poisson_cdf(c, lambda).unwrap();
        let theirs = Poisson::new(lambda).unwrap().cdf(c);
        prop_assert!((ours - theirs).abs() < 1e-9, "{ours} vs {theirs}");
        prop_assert!(poisson_cdf(c + 1, lambda).unwrap() >= ours - 1e-15);
    }

    #[test]
    fn quantiles_are_adjoint(n in 1u64..2000, p in 0.0f64..0.5, tail in 0.001f64..0.25, poisson in any::<bool>()) {
        let dist = if poisson {
            CountDistribution::poisson(n as f64 * p).unwrap()
        } else {
            CountDistribution::binomial(n, p).unwrap()
        };
        let t = TailMass::new(tail).unwrap();
        let upper = upper_quantile(dist, t).unwrap();
        prop_assert!(dist.cdf(upper) >= 1.0 - tail);
        if upper > 0 {
            prop_assert!(dist.cdf(upper - 1) < 1.0 - tail);
        }
        match lower_quantile(dist, t) {
            None => prop_assert!(dist.cdf(0) > tail),
            Some(l) => {
                prop_assert!(dist.cdf(l) <= tail);
                prop_assert!(dist.cdf(l + 1) > tail);
                prop_assert!(l <= upper);
            }
        }
    }

    #[test]
    fn binomial_tends_to_poisson(lambda in 0.5f64..20.0, c in 0u64..40) {
        // total variation between Bin(n, lambda/n) and Poisson(lambda) is at most lambda^2 / n
        let n = 20_000u64;
        let b = binom_cdf(c, n, lambda / n as f64).unwrap();
        let p = poisson_cdf(c, lambda).unwrap();
        prop_assert!((b - p).abs() <= lambda * lambda / n as f64);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn binomial_cdf_equals_enumeration(n in 1u64..=20, p in 0.0f64..=1.0) {
        // weight every outcome sequence; bucket by failure count
        let mut by_count = vec![0.0f64; n as usize + 1];
        for mask in 0u32..(1u32 << n) {
            let k = mask.count_ones() as i32;
            by_count[k as usize] += p.powi(k) * (1.0 - p).powi(n as i32 - k);
        }
        let mut acc = 0.0;
        for c in 0..=n {
            acc += by_count[c as usize];
            let ours = binom_cdf(c, n, p).unwrap();
            prop_assert!((ours - acc.min(1.0)).abs() < 1e-12, "c={c}: {ours} vs {acc}");
        }
    }
}

// ---- solvers ---------------------------------------------------------------

fn pair() -> impl Strategy<Value = (f64, f64)> {
    (0.005f64..0.35, 0.01f64..0.12).prop_map(|(p0, d)| (p0, (p0 + d).min(0.49)))
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn newton_lands_on_the_closed_form((p0, p1) in pair()) {
        let s = TestSpec::new(p0, p1).unwrap();
        let plan = solve(&s, Method::NormN).unwrap();
        let cf = closed_form_norm(&s).unwrap();
        prop_assert!(plan.converged);
        prop_assert!((plan.n as f64 - cf.n_real).abs() <= 0.5 + 1e-6);
        prop_assert!(plan.t_h > p0 && plan.t_h < p1);
        prop_assert_eq!(plan.c, (plan.t_h * cf.n_real).ceil() as u64);
    }

    #[test]
    fn threshold_lies_between_hypotheses((p0, p1) in pair(), m in prop::sample::select(vec![Method::Bin, Method::Poiss, Method::NormI])) {
        let s = TestSpec::for_method(p0, p1, m).unwrap().with_max_n(200_000);
        if let Ok(plan) = solve(&s, m) {
            prop_assert!(plan.t_h > p0 && plan.t_h < p1, "{m}: {}", plan.t_h);
            prop_assert_eq!(plan.iterations, plan.n);
            prop_assert_eq!(plan.c, (plan.n as f64 * plan.t_h + 0.5).floor() as u64);
        }
    }
}

#[test]
fn methods_agree_on_thresholds() {
    for (p0, p1) in [(0.02, 0.05), (0.05, 0.10)] {
        let ths: Vec<f64> = Method::ALL
            .iter()
            .map(|&m| {
                solve(&TestSpec::for_method(p0, p1, m).unwrap(), m)
                    .unwrap()
                    .t_h
            })
            .collect();
        for a in &ths {
            for b in &ths {
                assert!((a - b).abs() <= 0.005, "({p0}, {p1}): {ths:?}");
            }
        }
    }
}

// ---- run limits ------------------------------------------------------------

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn run_limit_grows_with_rate_and_horizon(p in 0.001f64..0.45, dp in 0.0f64..0.05, ex in 1e3f64..1e9) {
        let r = |p: f64, ex: f64| sfl_r(SflQuery::new(p, ex).unwrap()).unwrap();
        let base = r(p, ex);
        prop_assert!(r(p + dp, ex).r >= base.r);
        prop_assert!(r(p, ex * 10.0).r >= base.r);
        prop_assert!(base.r as f64 >= base.r_raw - 1e-9);
    }

    #[test]
    fn run_limit_round_trips(p in 0.005f64..0.45, r in 1u32..12) {
        let ex = mean_recurrence(p, r);
        prop_assume!(ex * (1.0 - p) > 1.0 && ex < 1e15);
        prop_assert_eq!(sfl_r(SflQuery::new(p, ex).unwrap()).unwrap().r, r);
    }
}

// ---- fuzzy selector --------------------------------------------------------

fn selector_input() -> impl Strategy<Value = SelectorInput<f64>> {
    (0.0f64..=0.2, 0.0f64..=0.5, 0.0f64..=12.0, 0.0f64..=1e-3)
        .prop_map(|(a, b, c, d)| SelectorInput::new(a, b, c, d))
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn scores_stay_in_range_and_classify_consistently(x in selector_input()) {
        let base = FuzzyRuleBase::<f64>::default_rules();
        if let Ok(r) = base.infer(x) {
            prop_assert!((0.0..=1.0).contains(&r.score));
            prop_assert_eq!(base.classify(r.score), r.method);
            // centroid lies within the supports of the consequents that fired
            let lo = r.firings.iter().map(|f| base.output.terms[base.rules[f.rule - 1].consequent].points[0]).fold(f64::INFINITY, f64::min);
            let hi = r.firings.iter().map(|f| base.output.terms[base.rules[f.rule - 1].consequent].points[3]).fold(0.0, f64::max);
            prop_assert!(r.score >= lo - 1e-9 && r.score <= hi + 1e-9);
        }
    }

    #[test]
    fn rule_eight_dominance(step in 0.02f64..=0.2, t_h in 0.0f64..=0.5, t_exec in 0.0f64..=12.0, hi in 0.0f64..=1e-3, frac in 0.0f64..1.0) {
        // once Norm_N, lowering prec_abs keeps it Norm_N
        let base = FuzzyRuleBase::<f64>::default_rules();
        let at = |prec| base.infer(SelectorInput::new(step, t_h, t_exec, prec)).ok().and_then(|r| r.method);
        if at(hi) == Some(Method::NormN) {
            prop_assert_eq!(at(hi * frac), Some(Method::NormN));
        }
    }
}

#[test]
fn config_round_trip_preserves_scores() {
    let base = FuzzyRuleBase::<f64>::default_rules();
    let text = base.to_config().to_toml();
    let again: FuzzyRuleBase<f64> = FuzzyConfig::from_toml(&text)
        .unwrap()
        .into_rule_base()
        .unwrap();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = selector_input();
    for _ in 0..100 {
        let x = strategy.new_tree(&mut runner).unwrap().current();
        assert_eq!(base.infer(x), again.infer(x));
    }
}

#[test]
fn constant_rule_base_gives_flat_surface() {
    let text = r#"
version = 1
[inputs.step]
universe = [0.0, 0.2]
terms = { Any = [0.0, 0.0, 0.2, 0.2] }
[inputs.t_h]
universe = [0.0, 0.5]
terms = { Any = [0.0, 0.0, 0.5, 0.5] }
[inputs.t_exec]
universe = [0.0, 12.0]
terms = { Any = [0.0, 0.0, 12.0, 12.0] }
[inputs.prec_abs]
universe = [0.0, 1e-3]
terms = { Any = [0.0, 0.0, 1e-3, 1e-3] }
[output]
universe = [0.0, 1.0]
terms = { Norm_I = [0.32, 0.45, 0.60, 0.71] }
bands = { Norm_I = [0.32, 0.71] }
[[rules]]
when = ["step is Any"]
then = "Norm_I"
"#;
    let base: FuzzyRuleBase<f64> = FuzzyConfig::from_toml(text)
        .unwrap()
        .into_custom_rule_base()
        .unwrap();
    let fixed = SelectorInput::new(0.1, 0.1, 3.0, 1e-4);
    let s = base
        .response_surface((Input::Th, Input::TExec), (7, 5), fixed)
        .unwrap();
    let first = s.scores[0][0];
    assert!(s.scores.iter().flatten().all(|&v| v == first));
    assert_eq!(base.classify(first), Some(Method::NormI));
}

#[test]
fn newton_band_grows_as_precision_tightens() {
    let base = FuzzyRuleBase::<f64>::default_rules();
    let mut last = 0usize;
    for prec in [1e-4, 7e-5, 5e-5, 3e-5, 1e-5, 0.0] {
        let fixed = SelectorInput::new(0.0, 0.1, 0.0, prec);
        let s = base
            .response_surface((Input::Step, Input::TExec), (51, 51), fixed)
            .unwrap();
        let norm_n = s
            .scores
            .iter()
            .flatten()
            .filter(|&&v| base.classify(v) == Some(Method::NormN))
            .count();
        assert!(norm_n >= last, "prec {prec}: {norm_n} < {last}");
        last = norm_n;
    }
    assert!(last > 51 * 51 / 4);
}

// ---- inspection ------------------------------------------------------------

fn ladder() -> LevelLadder<f64> {
    build_ladder(&LadderSpec::new(
        vec![0.02, 0.05, 0.10],
        MethodSchedule::Uniform(Method::NormN),
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn inspection_invariants(bits in prop::collection::vec(prop::bool::weighted(0.06), 0..900)) {
        let l = ladder();
        let state = run_stream(&l, bits.iter().map(|&b| Outcome::from_failure(b))).into_state();
        let mut prev = (0u64, 0u64, 0usize);
        let mut terminal = 0;
        for e in &state.events {
            prop_assert!(e.failures <= e.trial && e.run <= e.failures);
            prop_assert!(e.trial > prev.0 && e.failures >= prev.1 && e.stage >= prev.2);
            prev = (e.trial, e.failures, e.stage);
            for t in &e.transitions {
                match t {
                    Transition::Escalated { from, reason: EscalationReason::RunLimit, .. }
                    | Transition::RejectedBeyondLast { from, reason: EscalationReason::RunLimit } => {
                        prop_assert!(e.run > u64::from(l.run_limits[*from]));
                    }
                    Transition::Escalated { from, reason: EscalationReason::FailureLimit, .. }
                    | Transition::RejectedBeyondLast { from, reason: EscalationReason::FailureLimit } => {
                        prop_assert!(e.failures >= l.plans[*from].c);
                    }
                    Transition::Accepted { .. } => terminal += 1,
                }
                if matches!(t, Transition::RejectedBeyondLast { .. }) {
                    terminal += 1;
                }
            }
        }
        prop_assert!(terminal <= 1);
        prop_assert_eq!(terminal == 1, state.status.is_terminal());
        if let Status::AcceptedAt { stage, .. } = state.status {
            let plan = &l.plans[stage];
            prop_assert!(state.failures < plan.c);
            prop_assert!(state.trials >= plan.n);
            // the acceptance happens exactly at n unless the stage was entered late
            let entered = state.events.iter().find(|e| e.stage == stage).map(|e| e.trial).unwrap_or(1);
            prop_assert!(state.trials == plan.n || entered == state.trials);
        }
        prop_assert_eq!(replay(&l, &state.events).unwrap(), state);
    }
}

// ---- verification ----------------------------------------------------------

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn oc_curve_decreases(n in 2u64..2000, frac in 0.0f64..0.5, p in 0.0f64..0.99, dp in 0.001f64..0.01) {
        let c = ((n as f64 * frac) as u64).max(1);
        let a = accept_probability(n, c, p).unwrap();
        let b = accept_probability(n, c, p + dp).unwrap();
        // strictly decreasing wherever the change exceeds summation noise near 0 and 1
        prop_assert!(b <= a + 1e-13, "{a} -> {b}");
        if a > 1e-300 && a < 1.0 - 1e-9 {
            prop_assert!(b < a, "{a} -> {b}");
        }
    }
}

#[test]
fn monte_carlo_ignores_thread_count() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_accept(383, 13, 0.03, 5_000, 42).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn monte_carlo_agrees_with_exact_across_seeds() {
    let exact = accept_probability(289, 21, 0.07).unwrap();
    let hits = (0..100)
        .filter(|&seed| {
            monte_carlo_accept(289, 21, 0.07, 2_000, seed)
                .unwrap()
                .deviation(exact)
                <= 3.0
        })
        .count();
    assert!(hits >= 97, "{hits}/100 within 3 half-widths");
}
