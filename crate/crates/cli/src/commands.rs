//! Subcommand implementations.

use std::fs;
use std::io::Read;
use std::path::PathBuf;

use dht_core::inspection_engine::EscalationReason;
use dht_core::plan_solvers::PlanWarning;
use dht_core::verification::MIN_REPS;
use dht_core::{
    accept_probability, build_ladder, monte_carlo_accept, oc_points, realized_errors, run_stream,
    sfl_r, solve, FuzzyError, FuzzyRuleBase64, LadderError, LadderSpec, LevelLadder64, Method,
    MethodSchedule, SelectorInput64, SflError, SflQuery, SolverError, Status, StreamResult,
    TailMass, TestSpec64, Transition, ZMode,
};

use crate::output::{Emitter, Record};
use crate::tokens::parse_outcomes;
use crate::{
    exit, CliError, Command, EventFilter, LadderArgs, PlanArgs, PlanSource, ScheduleArg, TailArgs,
};

const MAX_GRID_POINTS: usize = 1_000_000;

pub fn dispatch(command: Command, z: ZMode, out: &mut Emitter) -> Result<u8, CliError> {
    match command {
        Command::Plan(args) => cmd_plan(&args, z, out),
        Command::Table(args) => cmd_table(&args, z, out),
        Command::Inspect {
            ladder,
            input,
            events,
        } => cmd_inspect(&ladder, input.as_ref(), events, z, out),
        Command::Sfl { p, ex } => cmd_sfl(p, ex, out),
        Command::Select {
            step,
            th,
            texec,
            prec,
            fuzzy_config,
        } => cmd_select(
            SelectorInput64::new(step, th, texec, prec),
            fuzzy_config.as_ref(),
            out,
        ),
        Command::Oc { plan, grid } => cmd_oc(&plan, &grid, z, out),
        Command::Simulate {
            plan,
            rates,
            grid,
            reps,
            seed,
        } => cmd_simulate(&plan, rates, grid.as_deref(), reps, seed, z, out),
    }
}

fn tail(name: &str, v: f64) -> Result<TailMass<f64>, CliError> {
    TailMass::new(v).map_err(|e| CliError::Usage(format!("--{name}: {e}")))
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::InvalidSpec(_) | SolverError::DegenerateSpec => CliError::Usage(e.to_string()),
        other => CliError::Compute(other.to_string()),
    }
}

fn build_spec(
    p0: f64,
    p1: f64,
    method: Method,
    tails: &TailArgs,
    z: ZMode,
) -> Result<TestSpec64, CliError> {
    let mut spec = TestSpec64::for_method(p0, p1, method)
        .map_err(solver_error)?
        .with_tails(tail("alpha", tails.alpha)?, tail("beta", tails.beta)?)
        .with_z_mode(z);
    if let Some(eps) = tails.eps {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CliError::Usage(format!(
                "--eps must be positive, got {eps}"
            )));
        }
        spec = spec.with_epsilon(eps);
    }
    if let Some(max_n) = tails.max_n {
        spec = spec.with_max_n(max_n);
    }
    spec.validate().map_err(solver_error)?;
    Ok(spec)
}

fn warning_code(w: PlanWarning) -> &'static str {
    match w {
        PlanWarning::NotConverged => "not-converged",
        PlanWarning::NormalApproximationInvalid => "normal-approximation-invalid",
        PlanWarning::OutsidePoissonRegime => "outside-poisson-regime",
        PlanWarning::ZeroAcceptanceNumber => "zero-acceptance-number",
    }
}

fn cmd_plan(args: &PlanArgs, z: ZMode, out: &mut Emitter) -> Result<u8, CliError> {
    let spec = build_spec(args.p0, args.p1, args.method, &args.tails, z)?;
    let plan = solve(&spec, args.method).map_err(solver_error)?;
    let warnings = plan.warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    let errors =
        realized_errors(&plan, spec.p0, spec.p1).map_err(|e| CliError::Compute(e.to_string()))?;
    let flags: Vec<&str> = warnings.iter().map(|&w| warning_code(w)).collect();
    out.emit(
        &Record::new("plan")
            .field("method", plan.method.label())
            .field("p0", spec.p0)
            .field("p1", spec.p1)
            .field("n", plan.n)
            .field("c", plan.c)
            .field("t_h", plan.t_h)
            .field("np0", plan.np0)
            .field("iterations", plan.iterations)
            .field("converged", plan.converged)
            .field("alpha_hat", errors.alpha_hat)
            .field("beta_hat", errors.beta_hat)
            .field("flags", flags.join(";")),
    )?;
    if plan.converged {
        Ok(exit::OK)
    } else {
        Err(CliError::Compute(format!(
            "{} stopped after {} iterations without converging",
            plan.method, plan.iterations
        )))
    }
}

fn ladder(args: &LadderArgs, z: ZMode) -> Result<LevelLadder64, CliError> {
    let schedule = match args.schedule {
        ScheduleArg::BinThenNormI => MethodSchedule::BinThenNormI,
        ScheduleArg::Bin => MethodSchedule::Uniform(Method::Bin),
        ScheduleArg::Poiss => MethodSchedule::Uniform(Method::Poiss),
        ScheduleArg::NormN => MethodSchedule::Uniform(Method::NormN),
        ScheduleArg::NormI => MethodSchedule::Uniform(Method::NormI),
    };
    let spec = match (&args.levels, args.step) {
        (Some(levels), _) => LadderSpec::new(levels.clone(), schedule),
        (None, Some(step)) => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--step must be positive, got {step}"
                )));
            }
            if args.rows == 0 {
                return Err(CliError::Usage("--rows must be at least 1".into()));
            }
            if step * args.rows as f64 >= 0.5 {
                return Err(CliError::Usage(format!(
                    "{} rows of step {step} reach {}; levels must stay below 0.5",
                    args.rows,
                    step * args.rows as f64
                )));
            }
            LadderSpec::stepped(step, args.rows, schedule)
        }
        (None, None) => return Err(CliError::Usage("give --levels or --step".into())),
    };
    let mut spec = spec
        .with_tails(
            tail("alpha", args.tails.alpha)?,
            tail("beta", args.tails.beta)?,
        )
        .with_horizon(args.ex)
        .with_epsilon(args.tails.eps)
        .with_z_mode(z);
    if let Some(max_n) = args.tails.max_n {
        spec = spec.with_max_n(max_n);
    }
    build_ladder(&spec).map_err(|e| match e {
        LadderError::TooFewLevels(_)
        | LadderError::NotIncreasing { .. }
        | LadderError::LevelOutOfRange { .. }
        | LadderError::ScheduleLength { .. } => CliError::Usage(e.to_string()),
        other => CliError::Compute(other.to_string()),
    })
}

fn cmd_table(args: &LadderArgs, z: ZMode, out: &mut Emitter) -> Result<u8, CliError> {
    let ladder = ladder(args, z)?;
    for (i, plan) in ladder.plans.iter().enumerate() {
        out.emit(
            &Record::new("table")
                .field("row", i + 1)
                .field("p0", ladder.levels[i])
                .field("p1", ladder.levels[i + 1])
                .field("method", plan.method.label())
                .field("n", plan.n)
                .field("c", plan.c)
                .field("t_h", plan.t_h)
                .field("r", ladder.run_limits[i]),
        )?;
    }
    Ok(exit::OK)
}

fn reason_code(r: EscalationReason) -> &'static str {
    match r {
        EscalationReason::FailureLimit => "failure-limit",
        EscalationReason::RunLimit => "run-limit",
    }
}

fn transition_text(t: &Transition<f64>) -> String {
    match t {
        Transition::Escalated { from, to, reason } => {
            format!("escalated:{from}->{to}:{}", reason_code(*reason))
        }
        Transition::RejectedBeyondLast { from, reason } => {
            format!("rejected:{from}:{}", reason_code(*reason))
        }
        Transition::Accepted { stage, .. } => format!("accepted:{stage}"),
    }
}

fn read_input(path: Option<&PathBuf>) -> Result<String, CliError> {
    match path {
        Some(p) if p.as_os_str() != "-" => fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display()))),
        _ => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::Usage(format!("cannot read stdin: {e}")))?;
            Ok(text)
        }
    }
}

fn inspect_record() -> Record {
    Record::new("inspect")
}

fn cmd_inspect(
    args: &LadderArgs,
    input: Option<&PathBuf>,
    filter: EventFilter,
    z: ZMode,
    out: &mut Emitter,
) -> Result<u8, CliError> {
    let ladder = ladder(args, z)?;
    let outcomes =
        parse_outcomes(&read_input(input)?).map_err(|e| CliError::Usage(e.to_string()))?;
    let result = run_stream(&ladder, outcomes);
    let state = result.state();
    for e in &state.events {
        let show = match filter {
            EventFilter::All => true,
            EventFilter::Transitions => !e.transitions.is_empty(),
            EventFilter::None => false,
        };
        if !show {
            continue;
        }
        let transitions: Vec<String> = e.transitions.iter().map(transition_text).collect();
        out.emit(
            &inspect_record()
                .field("record", "event")
                .field("trial", e.trial)
                .field("outcome", u64::from(e.outcome.is_failure()))
                .field("stage", e.stage)
                .field("failures", e.failures)
                .field("run", e.run)
                .field("transitions", transitions.join(";"))
                .field("status", None::<String>)
                .field("t_h", None::<f64>),
        )?;
    }
    let (status, t_h, code) = match (&result, state.status) {
        (_, Status::AcceptedAt { t_h, .. }) => ("accepted", Some(t_h), exit::OK),
        (_, Status::RejectedBeyondLast) => ("rejected", None, exit::REJECTED),
        (StreamResult::Inconclusive(_), Status::Continue)
        | (StreamResult::Decided(_), Status::Continue) => {
            ("inconclusive", None, exit::INCONCLUSIVE)
        }
    };
    out.emit(
        &inspect_record()
            .field("record", "verdict")
            .field("trial", state.trials)
            .field("outcome", None::<u64>)
            .field("stage", state.stage)
            .field("failures", state.failures)
            .field("run", state.run)
            .field("transitions", None::<String>)
            .field("status", status)
            .field("t_h", t_h),
    )?;
    Ok(code)
}

fn cmd_sfl(p: f64, ex: f64, out: &mut Emitter) -> Result<u8, CliError> {
    let limit = SflQuery::new(p, ex).and_then(sfl_r).map_err(|e| match e {
        SflError::ProbabilityOutOfRange(_) | SflError::HorizonTooSmall(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Compute(other.to_string()),
    })?;
    out.emit(
        &Record::new("sfl")
            .field("p", p)
            .field("ex", ex)
            .field("r", limit.r)
            .field("r_raw", limit.r_raw)
            .field("iterations", limit.iterations),
    )?;
    Ok(exit::OK)
}

fn cmd_select(
    x: SelectorInput64,
    config: Option<&PathBuf>,
    out: &mut Emitter,
) -> Result<u8, CliError> {
    if ![x.step, x.t_h, x.t_exec, x.prec_abs]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(CliError::Usage("selector inputs must be finite".into()));
    }
    let base = match config {
        Some(path) => FuzzyRuleBase64::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => FuzzyRuleBase64::default_rules(),
    };
    let inference = base.infer(x).map_err(|e| match e {
        FuzzyError::NoRuleFired => CliError::Compute("no rule fired: no recommendation".into()),
        other => CliError::Compute(other.to_string()),
    })?;
    let (clamped_x, _) = base.clamp(x);
    let clamped: Vec<&str> = inference.clamped.iter().map(|i| i.name()).collect();
    let mut record = Record::new("select")
        .field("step", x.step)
        .field("t_h", x.t_h)
        .field("t_exec", x.t_exec)
        .field("prec_abs", x.prec_abs)
        .field("score", inference.score)
        .field("label", inference.method.map_or("none", Method::label))
        .field("clamped", clamped.join(";"));
    for (i, s) in base.strengths(&clamped_x).into_iter().enumerate() {
        record = record.field(format!("rule_{}", i + 1), s);
    }
    out.emit(&record)?;
    Ok(exit::OK)
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--grid '{text}': {why}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(bad("expected start:stop:step"));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("'{s}' is not a number")))
    };
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(step > 0.0 && step.is_finite()) {
        return Err(bad("step must be positive"));
    }
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || b < a {
        return Err(bad("need 0 <= start <= stop <= 1"));
    }
    let span = (b - a) / step;
    if span >= MAX_GRID_POINTS as f64 {
        return Err(bad("too many points"));
    }
    // tolerate representation error in the step so the stop value is included
    let count = (span + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| (a + i as f64 * step).min(b)).collect())
}

struct ResolvedPlan {
    n: u64,
    c: u64,
    /// `(p0, p1)` when the plan was solved rather than given.
    hypotheses: Option<(f64, f64)>,
}

fn resolve_plan(src: &PlanSource, z: ZMode) -> Result<ResolvedPlan, CliError> {
    match (src.n, src.c, src.p0, src.p1) {
        (Some(n), Some(c), _, _) => {
            if n == 0 {
                return Err(CliError::Usage("--n must be at least 1".into()));
            }
            Ok(ResolvedPlan {
                n,
                c,
                hypotheses: None,
            })
        }
        (_, _, Some(p0), Some(p1)) => {
            let spec = build_spec(p0, p1, src.method, &src.tails, z)?;
            let plan = solve(&spec, src.method).map_err(solver_error)?;
            Ok(ResolvedPlan {
                n: plan.n,
                c: plan.c,
                hypotheses: Some((p0, p1)),
            })
        }
        _ => Err(CliError::Usage("give --n and --c, or --p0 and --p1".into())),
    }
}

fn cmd_oc(src: &PlanSource, grid: &str, z: ZMode, out: &mut Emitter) -> Result<u8, CliError> {
    let grid = parse_grid(grid)?;
    let ResolvedPlan { n, c, .. } = resolve_plan(src, z)?;
    let curve = oc_points(n, c, &grid).map_err(|e| CliError::Compute(e.to_string()))?;
    for pt in &curve.points {
        out.emit(
            &Record::new("oc")
                .field("p", pt.p)
                .field("accept_prob", pt.accept_prob),
        )?;
    }
    Ok(exit::OK)
}

fn cmd_simulate(
    src: &PlanSource,
    rates: Option<Vec<f64>>,
    grid: Option<&str>,
    reps: u64,
    seed: u64,
    z: ZMode,
    out: &mut Emitter,
) -> Result<u8, CliError> {
    if reps < MIN_REPS {
        return Err(CliError::Usage(format!(
            "--reps must be at least {MIN_REPS}"
        )));
    }
    let ResolvedPlan { n, c, hypotheses } = resolve_plan(src, z)?;
    let rates = match (rates, grid, hypotheses) {
        (Some(r), _, _) => r,
        (None, Some(g), _) => parse_grid(g)?,
        (None, None, Some((p0, p1))) => vec![p0, p1],
        (None, None, None) => return Err(CliError::Usage("give --p or --grid".into())),
    };
    if let Some(bad) = rates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Usage(format!("defect rate {bad} outside [0, 1]")));
    }
    for p in rates {
        let exact = accept_probability(n, c, p).map_err(|e| CliError::Compute(e.to_string()))?;
        let mc = monte_carlo_accept(n, c, p, reps, seed)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        out.emit(
            &Record::new("simulate")
                .field("n", n)
                .field("c", c)
                .field("p", p)
                .field("exact", exact)
                .field("rate", mc.rate)
                .field("half_width", mc.half_width)
                .field("deviation", mc.deviation(exact))
                .field("reps", mc.reps)
                .field("seed", mc.seed),
        )?;
    }
    Ok(exit::OK)
}
