//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Reference values that are not the library's own output come from
//! independent oracles here (statrs distributions, closed forms written out
//! in this file, direct enumeration).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use dht_core::fuzzy_selector::{FuzzyRuleBase, SelectorInput};
use dht_core::inspection_engine::{
    build_ladder, replay, run_stream, terminal_distribution, LadderSpec, MethodSchedule, Outcome,
    Status, StreamResult,
};
use dht_core::plan_solvers::{
    closed_form_norm, solve, Method, PlanDetail, SamplingPlan, SolverError, TestSpec,
};
use dht_core::run_limits::{sfl_r, SflQuery};
use dht_core::verification::{monte_carlo_accept, oc_curve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol + 1e-12
}

fn plan(p0: f64, p1: f64, m: Method) -> Result<SamplingPlan<f64>, String> {
    let s = TestSpec::for_method(p0, p1, m).map_err(|e| e.to_string())?;
    solve(&s, m).map_err(|e| e.to_string())
}

fn plan_eps(p0: f64, p1: f64, m: Method, eps: f64) -> Result<SamplingPlan<f64>, String> {
    let s = TestSpec::for_method(p0, p1, m)
        .map_err(|e| e.to_string())?
        .with_epsilon(eps);
    solve(&s, m).map_err(|e| e.to_string())
}

/// statrs acceptance probability `P(X <= c - 1)`.
fn oracle_accept(n: u64, c: u64, p: f64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    Binomial::new(p, n).unwrap().cdf(c - 1)
}

/// Real-valued crossing of the two normal limits, written out directly.
fn oracle_real_n(p0: f64, p1: f64, z: f64) -> f64 {
    let (s0, s1) = ((p0 * (1.0 - p0)).sqrt(), (p1 * (1.0 - p1)).sqrt());
    (z * (s0 + s1) / (p1 - p0)).powi(2)
}

/// Two-sided coverage of a 3-sigma normal band.
const THREE_SIGMA_LEVEL: f64 = 0.0027;

fn two_sided_binomial_p(hits: u64, trials: u64, p: f64) -> f64 {
    let d = Binomial::new(p, trials).unwrap();
    let lower = d.cdf(hits);
    let upper = if hits == 0 {
        1.0
    } else {
        1.0 - d.cdf(hits - 1)
    };
    (2.0 * lower.min(upper)).min(1.0)
}

fn c1_newton_reproduction() -> Check {
    let s = TestSpec::for_method(0.015, 0.02, Method::NormN).unwrap();
    let p = solve(&s, Method::NormN).map_err(|e| e.to_string())?;
    let real = closed_form_norm(&s).map_err(|e| e.to_string())?.n_real;
    let x2 = match p.detail {
        PlanDetail::Newton(st) => st.x2,
        _ => return Err("no Newton state".into()),
    };
    let oracle = oracle_real_n(0.015, 0.02, 1.64);
    ensure(within(p.n as f64, 7360.0, 1.0), format!("n = {}", p.n))?;
    ensure(within(p.c as f64, 128.0, 1.0), format!("c = {}", p.c))?;
    ensure(within(p.t_h, 0.0173, 0.0005), format!("t_h = {}", p.t_h))?;
    ensure(
        within(real, 7359.8, 0.5) && within(x2, 7359.8, 0.5),
        format!("real n {real}, x2 {x2}"),
    )?;
    ensure(
        within(real, oracle, 1e-6),
        format!("closed form {real} vs oracle {oracle}"),
    )?;
    Ok(format!("n={} c={} t_h={:.4} x2={:.2}", p.n, p.c, p.t_h, x2))
}

fn c2_newton_table() -> Check {
    let mut out = Vec::new();
    for (p0, p1, n, c, t_h) in [(0.02, 0.05, 383, 13, 0.0317), (0.05, 0.10, 289, 21, 0.0710)] {
        let p = plan(p0, p1, Method::NormN)?;
        ensure(
            within(p.n as f64, n as f64, 1.0) && p.c == c && within(p.t_h, t_h, 0.0005),
            format!("({p0},{p1}) -> ({}, {}, {:.4})", p.n, p.c, p.t_h),
        )?;
        out.push(format!("({},{},{:.4})", p.n, p.c, p.t_h));
    }
    Ok(out.join(" "))
}

fn c3_iterative_table() -> Check {
    let mut out = Vec::new();
    for (p0, p1, eps, n, c) in [
        (0.02, 0.05, 1e-4, 381, 12),
        (0.05, 0.10, 1e-4, 288, 20),
        (0.01, 0.02, 1e-6, 1543, 22),
    ] {
        let p = plan_eps(p0, p1, Method::NormI, eps)?;
        ensure(
            within(p.n as f64, n as f64, 2.0) && within(p.c as f64, c as f64, 1.0),
            format!("({p0},{p1},eps={eps}) -> ({}, {})", p.n, p.c),
        )?;
        out.push(format!("({},{})", p.n, p.c));
    }
    Ok(out.join(" "))
}

fn c4_iterative_no_convergence() -> Check {
    let r = plan_eps(0.2, 0.4, Method::NormI, 1e-6);
    let s = TestSpec::for_method(0.2, 0.4, Method::NormI)
        .unwrap()
        .with_epsilon(1e-6);
    let err = solve(&s, Method::NormI);
    ensure(
        matches!(err, Err(SolverError::NoConvergence { .. })),
        format!("got {r:?}"),
    )?;
    // gap(n) = (p1 - p0) - z (s0 + s1) / sqrt(n) is increasing in n, so only
    // the two integers around its root can come closest to zero
    let (s0, s1, z) = ((0.2f64 * 0.8).sqrt(), (0.4f64 * 0.6).sqrt(), 1.64);
    let gap = |n: f64| ((0.4 - 0.2) - z * (s0 + s1) / n.sqrt()).abs();
    let root = oracle_real_n(0.2, 0.4, z);
    let best = gap(root.floor()).min(gap(root.ceil()));
    ensure(
        best >= 1e-6,
        format!("integer n within tolerance: gap {best}"),
    )?;
    Ok(format!(
        "NoConvergence; real root {root:.3}, smallest integer gap {best:.2e}"
    ))
}

fn c5_discrete_reconstruction() -> Check {
    // (p0, p1, method, reference n, c, t_h)
    let cases = [
        (0.0, 0.02, Method::Bin, 375, 4, 0.0095),
        (0.02, 0.05, Method::Bin, 550, 19, 0.0348),
        (0.05, 0.10, Method::Bin, 405, 30, 0.0744),
        (0.0, 0.02, Method::Poiss, 375, 4, 0.0095),
        (0.02, 0.05, Method::Poiss, 570, 20, 0.0343),
        (0.05, 0.10, Method::Poiss, 465, 35, 0.0742),
    ];
    let mut out = Vec::new();
    for (p0, p1, m, n_ref, c_ref, th_ref) in cases {
        let p = plan(p0, p1, m)?;
        let alpha = 1.0 - oracle_accept(p.n, p.c, p0);
        let beta = oracle_accept(p.n, p.c, p1);
        let tag = format!(
            "{m}({p0},{p1}) n={} c={} t_h={:.4} a={alpha:.4} b={beta:.4}",
            p.n, p.c, p.t_h
        );
        ensure(
            alpha <= 0.08 && beta <= 0.08,
            format!("{tag}: realized error bound"),
        )?;
        ensure(
            within(p.t_h, th_ref, 0.004),
            format!("{tag}: t_h vs {th_ref}"),
        )?;
        ensure(
            within(p.c as f64, c_ref as f64, 2.0),
            format!("{tag}: c vs {c_ref}"),
        )?;
        ensure(
            within(p.n as f64, n_ref as f64, 0.25 * n_ref as f64),
            format!("{tag}: n vs {n_ref}"),
        )?;
        out.push(format!("{m}:{}/{}", p.n, n_ref));
    }
    Ok(format!("n ours/reference {}", out.join(" ")))
}

fn c6_run_limits() -> Check {
    let q = |p: f64| sfl_r(SflQuery::new(p, 1e6).unwrap()).unwrap();
    for (p, r) in [(0.01, 3), (0.02, 4), (0.05, 5), (0.10, 6)] {
        ensure(q(p).r == r, format!("p={p}: r={} (want {r})", q(p).r))?;
    }
    let raw = q(0.02).r_raw;
    ensure(raw > 3.4 && raw < 3.6, format!("raw r for p=0.02 is {raw}"))?;
    let table = [
        (0.01, [3, 4, 4, 5, 5, 5, 6, 6]),
        (0.03, [4, 5, 6, 7, 8, 8, 9, 10]),
        (0.05, [5, 6, 8, 9, 10, 12, 13, 15]),
    ];
    for (step, want) in table {
        let ladder = build_ladder(&LadderSpec::stepped(step, 8, MethodSchedule::BinThenNormI))
            .map_err(|e| e.to_string())?;
        ensure(
            ladder.run_limits == want,
            format!("step {step}: {:?}", ladder.run_limits),
        )?;
    }
    Ok(format!(
        "r = 3,4,5,6; raw(0.02) = {raw:.4}; 24/24 ladder limits"
    ))
}

fn c7_fuzzy() -> Check {
    let base = FuzzyRuleBase::<f64>::default_rules();
    for (score, m) in [
        (0.12, Method::Bin),
        (0.2, Method::Poiss),
        (0.5, Method::NormI),
        (0.85, Method::NormN),
    ] {
        ensure(
            base.classify(score) == Some(m),
            format!("classify({score}) = {:?}", base.classify(score)),
        )?;
    }
    // rule 8 firing fully with moderate execution time
    let mut checked = 0;
    let mut lowest = f64::INFINITY;
    for i in 0..=18 {
        let step = 0.02 + 0.01 * i as f64;
        for j in 0..=10 {
            let t_h = 0.05 * j as f64;
            for t_exec in [2.0, 2.5, 3.0, 3.5, 4.0] {
                for prec in [0.0, 5e-6, 1e-5] {
                    let r = base
                        .infer(SelectorInput::new(step, t_h, t_exec, prec))
                        .map_err(|e| e.to_string())?;
                    ensure(
                        r.score > 0.71 && r.method == Some(Method::NormN),
                        format!("({step},{t_h},{t_exec},{prec}) -> {:.4}", r.score),
                    )?;
                    lowest = lowest.min(r.score);
                    checked += 1;
                }
            }
        }
    }
    let fig = base
        .infer(SelectorInput::new(0.03, 0.05, 3.0, 0.0))
        .map_err(|e| e.to_string())?;
    ensure(
        fig.score > 0.8 && fig.method == Some(Method::NormN),
        format!("low-step scenario {:.4}", fig.score),
    )?;
    Ok(format!("bands exact; rule-8 regime (t_exec in [2,4]) {checked} points, min {lowest:.4}; scenario {:.4}", fig.score))
}

fn c8_inspection() -> Check {
    let ladder = build_ladder(&LadderSpec::new(
        vec![0.02, 0.05, 0.10],
        MethodSchedule::Uniform(Method::NormN),
    ))
    .map_err(|e| e.to_string())?;
    let streams = 1000u64;
    let mut worst: f64 = 0.0;
    let mut exact_cells = Vec::new();
    for (k, p) in [0.005, 0.04, 0.08, 0.2].into_iter().enumerate() {
        let mut counts = [0u64; 3];
        for s in 0..streams {
            let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
            rng.set_stream(k as u64 * streams + s);
            let outcomes = std::iter::from_fn(|| Some(Outcome::from_failure(rng.gen_bool(p))));
            let StreamResult::Decided(state) = run_stream(&ladder, outcomes) else {
                return Err("infinite stream ended inconclusive".into());
            };
            let again = replay(&ladder, &state.events).map_err(|e| e.to_string())?;
            ensure(again == state, format!("replay mismatch p={p} stream {s}"))?;
            match state.status {
                Status::AcceptedAt { stage, .. } => counts[stage] += 1,
                _ => counts[2] += 1,
            }
        }
        let exact = terminal_distribution(&ladder, p);
        let probs = [
            exact.accepted[0],
            exact.accepted[1],
            exact.rejected_beyond_last,
        ];
        for (cell, (&n, &pr)) in counts.iter().zip(&probs).enumerate() {
            let emp = n as f64 / streams as f64;
            let var = pr * (1.0 - pr) / streams as f64;
            let sigma = var.sqrt();
            let dev = (emp - pr).abs();
            if dev <= 3.0 * sigma + 1e-12 {
                if sigma > 0.0 {
                    worst = worst.max(dev / sigma);
                }
                continue;
            }
            // the normal band is unreliable for rare cells; fall back to the
            // exact binomial test at the same two-sided level
            let p_value = two_sided_binomial_p(n, streams, pr);
            ensure(
                var * ((streams * streams) as f64) < 9.0 && p_value >= THREE_SIGMA_LEVEL,
                format!("p={p} cell {cell}: empirical {emp} exact {pr:.6} (p-value {p_value:.2e})"),
            )?;
            exact_cells.push(format!(
                "p={p} cell {cell}: {n} hits, expected {:.2}, p-value {p_value:.3}",
                pr * streams as f64
            ));
        }
    }
    let fallback = if exact_cells.is_empty() {
        String::new()
    } else {
        format!("; exact test on rare cells [{}]", exact_cells.join("; "))
    };
    Ok(format!(
        "4000 streams replayed; worst normal-band deviation {worst:.2} sigma{fallback}"
    ))
}

fn c9_verification() -> Check {
    let mut plans = vec![(plan(0.015, 0.02, Method::NormN)?, 0.015, 0.02)];
    for (p0, p1) in [(0.02, 0.05), (0.05, 0.10)] {
        plans.push((plan(p0, p1, Method::NormN)?, p0, p1));
        plans.push((plan_eps(p0, p1, Method::NormI, 1e-4)?, p0, p1));
    }
    plans.push((plan_eps(0.01, 0.02, Method::NormI, 1e-6)?, 0.01, 0.02));
    for (p0, p1) in [(0.0, 0.02), (0.02, 0.05), (0.05, 0.10)] {
        plans.push((plan(p0, p1, Method::Bin)?, p0, p1));
        plans.push((plan(p0, p1, Method::Poiss)?, p0, p1));
    }
    let mut worst: f64 = 0.0;
    for (i, (p, p0, p1)) in plans.iter().enumerate() {
        let oc = oc_curve(p, &[0.0, *p0, *p1, 1.0]).map_err(|e| e.to_string())?;
        ensure(
            oc.points[0].accept_prob == 1.0 && oc.points[3].accept_prob == 0.0,
            format!("OC endpoints of {:?}", (p.n, p.c)),
        )?;
        for (j, pt) in oc.points[1..3].iter().enumerate() {
            let mc = monte_carlo_accept(p.n, p.c, pt.p, 100_000, 1_000 + (2 * i + j) as u64)
                .map_err(|e| e.to_string())?;
            let d = mc.deviation(pt.accept_prob);
            ensure(
                d <= 3.0,
                format!(
                    "plan ({}, {}) at p={}: mc {} exact {}",
                    p.n, p.c, pt.p, mc.rate, pt.accept_prob
                ),
            )?;
            worst = worst.max(d);
        }
    }
    Ok(format!(
        "{} plans x 2 points; worst deviation {worst:.2} half-widths",
        plans.len()
    ))
}

fn c10_iteration_counts() -> Check {
    for (p0, p1, eps) in [(0.02, 0.05, 1e-4), (0.05, 0.10, 1e-4), (0.01, 0.02, 1e-6)] {
        let p = plan_eps(p0, p1, Method::NormI, eps)?;
        ensure(
            p.iterations == p.n,
            format!("Norm_I ({p0},{p1}): {} iterations, n {}", p.iterations, p.n),
        )?;
    }
    let mut steps = Vec::new();
    for (p0, p1) in [(0.015, 0.02), (0.02, 0.05), (0.05, 0.10), (0.07, 0.08)] {
        let p = plan(p0, p1, Method::NormN)?;
        ensure(
            p.converged && p.iterations < 10_000,
            format!("Norm_N ({p0},{p1}): {} steps", p.iterations),
        )?;
        steps.push(p.iterations.to_string());
    }
    Ok(format!(
        "Norm_I iterations = n; Newton steps {}",
        steps.join("/")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("Norm_N reproduction", c1_newton_reproduction),
        ("Norm_N table", c2_newton_table),
        ("Norm_I tables", c3_iterative_table),
        ("Norm_I non-convergence", c4_iterative_no_convergence),
        ("Bin/Poiss reconstruction", c5_discrete_reconstruction),
        ("successive failures limit", c6_run_limits),
        ("fuzzy selector", c7_fuzzy),
        ("inspection properties", c8_inspection),
        ("verification coherence", c9_verification),
        ("iteration counts", c10_iteration_counts),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
