//! One function per scenario. Each returns tables, diagnostics and the
//! in-run checks that decide the exit status.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use fracsing::analysis::{
    beta_threshold, boundary_exponent_fit, cone_check, gap_scaling_study, seminorm_refinement_study, FitOptions,
};
use fracsing::catalog;
use fracsing::evolution::{
    energy_identity_residual, energy_inequality_slack, evolve_g, evolve_p, stabilization_run, EvolutionTrace,
    SourceSpec,
};
use fracsing::report::{field_table, ledger_table, snapshot_table, Cell, Table};
use fracsing::stationary::{
    solve_pure_singular, solve_q, solve_regularized, solve_s_with, stationary_residual, validate_params,
    ConeEnvelope, Direction, NonlinearitySpec, ParamRegime, SolveReport, StationaryProblem,
};
use fracsing::verify;
use fracsing::{EigenPair, Field, FracOperator, Grid};

use crate::config::{InitialKind, RunConfig, Scenario};
use crate::CliError;

/// Snapshot rows are thinned to about this many time levels.
const SNAPSHOT_LEVELS: usize = 50;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable pass condition.
    pub condition: String,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("<= {bound:e}"),
            pass: value <= bound,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!(">= {bound:e}"),
            pass: value >= bound,
        }
    }

    fn holds(name: &str, value: f64, condition: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            condition: condition.into(),
            pass,
        }
    }
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    /// Scenario-specific numbers for the manifest (constants, counters).
    pub results: serde_json::Map<String, Value>,
    pub checks: Vec<Check>,
    /// Extra lines for `summary.txt`.
    pub notes: Vec<String>,
}

impl RunOutput {
    fn set(&mut self, key: &str, v: impl Serialize) {
        self.results
            .insert(key.into(), serde_json::to_value(v).expect("serializable diagnostics"));
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    match cfg.scenario() {
        Scenario::Eigen => eigen(cfg),
        Scenario::Stationary => stationary(cfg),
        Scenario::PureSingular => pure_singular(cfg),
        Scenario::Semilinear => semilinear(cfg),
        Scenario::EvolveG => evolve(cfg, false),
        Scenario::EvolveP => evolve(cfg, true),
        Scenario::Stabilize => stabilize(cfg),
        Scenario::StudyGap => study_gap(cfg),
        Scenario::StudySeminorm => study_seminorm(cfg),
        Scenario::VerifyAll => verify_all(cfg),
    }
}

fn setup(cfg: &RunConfig) -> Result<(Arc<Grid>, FracOperator), CliError> {
    let grid = Arc::new(Grid::new(cfg.domain.a, cfg.domain.b, cfg.n)?);
    let op = FracOperator::assemble(grid.clone(), cfg.s)?;
    Ok((grid, op))
}

fn source(cfg: &RunConfig) -> Result<SourceSpec, CliError> {
    Ok(catalog::source(&cfg.source.name, &cfg.source.params)?)
}

fn nonlinearity(cfg: &RunConfig) -> Result<NonlinearitySpec, CliError> {
    Ok(catalog::nonlinearity(&cfg.nonlinearity.name, &cfg.nonlinearity.params)?)
}

/// `μ < λ₁` is a hypothesis on the data, so a violation is a config error.
fn check_growth(nl: &NonlinearitySpec, eig: &EigenPair) -> Result<(), CliError> {
    if nl.growth_mu < eig.lambda1 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "growth bound violated: nonlinearity '{}' has mu = {} >= lambda1 = {}",
            nl.name, nl.growth_mu, eig.lambda1
        )))
    }
}

fn continuation_table(name: &str, rep: &SolveReport) -> Table {
    let mut t = Table::new(name, &["level", "epsilon", "gap"]);
    for (i, &e) in rep.eps_schedule.iter().enumerate() {
        let gap = if i == 0 { f64::NAN } else { rep.gaps.get(i - 1).copied().unwrap_or(f64::NAN) };
        t.push(vec![i.into(), e.into(), gap.into()]);
    }
    t
}

fn eigen(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (_, op) = setup(cfg)?;
    let eig = op.eigen_principal()?;
    let residual = op.apply(&eig.phi1)?.add_scaled(-eig.lambda1, &eig.phi1)?.norm_inf();
    let fit = boundary_exponent_fit(&eig.phi1, &FitOptions::default())?;
    let mut out = RunOutput::default();
    out.set("lambda1", eig.lambda1);
    out.set("iterations", eig.iterations);
    out.set("residual", residual);
    out.set("boundary_exponent", &fit);
    out.checks.push(Check::at_most("eigen_residual_over_lambda1", residual / eig.lambda1, 1e-8));
    out.checks.push(Check::holds("phi1_min", eig.phi1.min(), "> 0", eig.phi1.min() > 0.0));
    out.tables.push(field_table("eigen", &[("phi1", &eig.phi1)]));
    out.notes.push(format!("lambda1 = {}", eig.lambda1));
    out.notes.push(format!("boundary exponent of phi1 = {:.4} (s = {})", fit.alpha_hat, cfg.s));
    Ok(out)
}

fn stationary(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (grid, op) = setup(cfg)?;
    let src = source(cfg)?;
    let g = Field::from_fn(grid.clone(), |x| src.eval(0.0, x));
    let p = StationaryProblem::new(cfg.lambda, cfg.q, g, cfg.epsilon)?;
    let regime = validate_params(cfg.q, cfg.s)?;
    let mut out = RunOutput::default();
    out.set("regime", regime);
    let sol = if cfg.epsilon > 0.0 {
        solve_regularized(&p, &op)?
    } else {
        if regime == ParamRegime::VerySingular {
            return Err(CliError::Config(format!(
                "q = {} with s = {} is very singular; the limit problem needs epsilon > 0",
                cfg.q, cfg.s
            )));
        }
        solve_s_with(&p, &op, &cfg.continuation.to_core())?
    };
    let residual = stationary_residual(&p, &op, &sol.u)?;
    out.set("residual", residual);
    out.set("newton_steps", sol.report.newton_steps);
    out.set("eps_schedule", &sol.report.eps_schedule);
    out.checks.push(Check::holds("min_u", sol.u.min(), "> 0", sol.u.min() > 0.0));
    if cfg.epsilon == 0.0 {
        let env = ConeEnvelope::unit(cfg.q, cfg.s, &grid);
        let cone = cone_check(&sol.u, &env)?;
        out.set("cone", &cone);
        out.set("cone_exponent", env.exponent);
        out.checks.push(Check::holds("cone_k1_hat", cone.k1_hat, "finite and > 0", cone.pass));
        out.notes.push(format!("cone constants k1 = {:.4e}, k2 = {:.4e}", cone.k1_hat, cone.k2_hat));
    }
    out.tables.push(field_table("solution", &[("u", &sol.u)]));
    out.tables.push(continuation_table("continuation", &sol.report));
    out.notes.push(format!(
        "{} continuation levels, {} Newton steps, residual {residual:.3e}",
        sol.report.eps_schedule.len(),
        sol.report.newton_steps
    ));
    Ok(out)
}

fn pure_singular(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (grid, op) = setup(cfg)?;
    let sol = solve_pure_singular(cfg.q, &op)?;
    let au = op.apply(&sol.u)?;
    let residual = sol
        .u
        .values()
        .iter()
        .zip(au.values())
        .fold(0.0f64, |m, (&u, &a)| m.max((a - u.powf(-cfg.q)).abs() / u.powf(-cfg.q)));
    let env = ConeEnvelope::unit(cfg.q, cfg.s, &grid);
    let cone = cone_check(&sol.u, &env)?;
    let mut out = RunOutput::default();
    out.set("relative_residual", residual);
    out.set("newton_steps", sol.report.newton_steps);
    out.set("eps_schedule", &sol.report.eps_schedule);
    out.set("cone", &cone);
    out.checks.push(Check::at_most("relative_residual", residual, 1e-6));
    out.checks.push(Check::holds("cone_k1_hat", cone.k1_hat, "finite and > 0", cone.pass));
    out.tables.push(field_table("solution", &[("w", &sol.u)]));
    out.tables.push(continuation_table("continuation", &sol.report));
    out.notes.push(format!("max w = {:.6e}, relative residual {residual:.3e}", sol.u.max()));
    Ok(out)
}

fn semilinear(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (_, op) = setup(cfg)?;
    let eig = op.eigen_principal()?;
    let nl = nonlinearity(cfg)?;
    check_growth(&nl, &eig)?;
    let up = solve_q(&nl, cfg.q, &op, &eig, Direction::Ascending)?;
    let down = solve_q(&nl, cfg.q, &op, &eig, Direction::Descending)?;
    let gap = up.u.dist_inf(&down.u)?;
    let defect = up.monotonicity_defect.max(down.monotonicity_defect);
    let mut out = RunOutput::default();
    out.set("envelopes", &up.envelopes);
    out.set("k0", up.k0);
    out.set("iterations", json!({"ascending": up.iterations, "descending": down.iterations}));
    out.set("limit_gap", gap);
    out.set("monotone_quotient", nl.monotone_quotient);
    out.checks.push(Check::at_most("monotonicity_defect", defect, 1e-10));
    if nl.monotone_quotient {
        // uniqueness is only claimed under the quotient hypothesis
        out.checks.push(Check::at_most("ascending_descending_gap", gap, 1e-6));
    }
    out.tables.push(field_table(
        "solution",
        &[
            ("ascending", &up.u),
            ("descending", &down.u),
            ("lower_envelope", &up.envelopes.lower),
            ("upper_envelope", &up.envelopes.upper),
        ],
    ));
    out.notes.push(format!(
        "m = {:e}, M = {:e}, M' = {:e}, K0 = {}",
        up.envelopes.m, up.envelopes.big_m, up.envelopes.m_prime, up.k0
    ));
    out.notes.push(format!("ascending and descending limits differ by {gap:.3e}"));
    Ok(out)
}

/// Initial datum; `steady` solves `A u − u^{-q} = data` by the monotone scheme.
fn initial(cfg: &RunConfig, grid: &Arc<Grid>, op: &FracOperator, eig: &EigenPair, steady: &NonlinearitySpec) -> Result<Field, CliError> {
    let init = &cfg.initial;
    Ok(match init.kind {
        InitialKind::Phi1 => eig.phi1.scale(init.amplitude),
        InitialKind::Profile => {
            let (c, r) = (0.5 * (grid.a() + grid.b()), 0.5 * grid.width());
            Field::from_fn(grid.clone(), |x| {
                let y = (x - c) / r;
                init.amplitude * (1.0 - y * y).powf(init.exponent)
            })
        }
        InitialKind::Steady => solve_q(steady, cfg.q, op, eig, Direction::Ascending)?.u,
    })
}

/// `f(x, y) = h(0, x)` as a nonlinearity, for steady initial data.
fn frozen_source(src: &SourceSpec) -> Result<NonlinearitySpec, CliError> {
    let (a, b) = (src.clone(), src.clone());
    Ok(NonlinearitySpec::new(
        "h(0,x)",
        move |x, _| a.eval(0.0, x),
        move |x, z| b.eval(0.0, x) * z,
        |_, _| 0.0,
        src.bound,
        0.0,
        false,
    )?)
}

fn trace_outputs(out: &mut RunOutput, tr: &EvolutionTrace) {
    let stride = tr.n_steps.div_ceil(SNAPSHOT_LEVELS).max(1);
    out.tables.push(snapshot_table("snapshots", tr, stride));
    out.tables.push(ledger_table("ledger", tr));
    out.tables.push(field_table(
        "envelopes",
        &[("lower", &tr.envelopes.lower), ("upper", &tr.envelopes.upper)],
    ));
    out.set("envelopes", &tr.envelopes);
    out.set("dt", tr.dt);
    out.set("newton_steps", tr.newton_steps);
    out.set("envelope_violation", tr.envelope_violation);
    out.checks.push(Check::at_most("envelope_violation", tr.envelope_violation, 1e-10));
}

fn evolve(cfg: &RunConfig, lagged: bool) -> Result<RunOutput, CliError> {
    let (grid, op) = setup(cfg)?;
    let eig = op.eigen_principal()?;
    let mut out = RunOutput::default();
    if lagged {
        let nl = nonlinearity(cfg)?;
        check_growth(&nl, &eig)?;
        let u0 = initial(cfg, &grid, &op, &eig, &nl)?;
        let tr = evolve_p(&u0, &nl, cfg.t_final, cfg.n_steps, cfg.q, &op, &eig)?;
        out.set("k0", nl.lipschitz_on(0.0, tr.envelopes.upper.max()));
        trace_outputs(&mut out, &tr);
        out.notes.push(format!("final max u = {:.6e}", tr.last().max()));
    } else {
        let src = source(cfg)?;
        let u0 = initial(cfg, &grid, &op, &eig, &frozen_source(&src)?)?;
        let tr = evolve_g(&u0, &src, cfg.t_final, cfg.n_steps, cfg.q, &op, &eig)?;
        let slack = energy_inequality_slack(&tr, src.bound).into_iter().fold(f64::INFINITY, f64::min);
        let residual = energy_identity_residual(&tr);
        let final_residual = *residual.last().expect("ledger holds t_0");
        out.set("energy_residual_at_t", final_residual);
        out.set("min_energy_slack", slack);
        out.checks.push(Check::at_least("energy_inequality_slack", slack, -1e-8));
        trace_outputs(&mut out, &tr);
        out.notes.push(format!("energy identity residual at T = {final_residual:.3e}"));
    }
    Ok(out)
}

fn stabilize(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (grid, op) = setup(cfg)?;
    let eig = op.eigen_principal()?;
    let nl = nonlinearity(cfg)?;
    check_growth(&nl, &eig)?;
    if !nl.monotone_quotient {
        return Err(CliError::Config(format!(
            "nonlinearity '{}' does not have a nonincreasing quotient f/y",
            nl.name
        )));
    }
    let u0 = initial(cfg, &grid, &op, &eig, &nl)?;
    let rep = stabilization_run(&u0, &nl, cfg.t_final, cfg.n_steps, cfg.q, &op, &eig)?;
    let mut out = RunOutput::default();
    let mut t = Table::new("stabilization", &["t", "distance", "squeeze"]);
    for k in 0..rep.times.len() {
        t.push(vec![rep.times[k].into(), rep.distance[k].into(), rep.squeeze[k].into()]);
    }
    out.tables.push(t);
    out.tables.push(field_table("steady", &[("u_hat", &rep.u_hat)]));
    out.set("k0", rep.k0);
    out.set("envelopes", &rep.traces[0].envelopes);
    out.set("stabilized_time", rep.stabilized_time);
    out.set("final_distance", rep.distance.last());
    let defect = rep.lower_monotonicity_defect.max(rep.upper_monotonicity_defect);
    out.checks.push(Check::at_most("bracketing_violation", rep.bracketing_violation, 1e-10));
    out.checks.push(Check::at_most("envelope_monotonicity_defect", defect, 1e-10));
    out.checks.push(Check::at_most("envelope_violation", rep.envelope_violation, 1e-10));
    out.notes.push(match rep.stabilized_time {
        Some(t) => format!("within 1e-4 of the steady state from t = {t}"),
        None => "not yet within 1e-4 of the steady state at t_final; raise t_final".into(),
    });
    Ok(out)
}

fn study_gap(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let (grid, op) = setup(cfg)?;
    let eig = op.eigen_principal()?;
    let src = source(cfg)?;
    let u0 = initial(cfg, &grid, &op, &eig, &frozen_source(&src)?)?;
    let traces = cfg
        .study
        .steps
        .iter()
        .map(|&k| evolve_g(&u0, &src, cfg.t_final, k, cfg.q, &op, &eig))
        .collect::<Result<Vec<_>, _>>()?;
    let study = gap_scaling_study(&traces)?;
    let mut t = Table::new("gaps", &["steps", "dt", "max_increment", "energy_residual_at_t", "min_energy_slack"]);
    let mut worst_slack = f64::INFINITY;
    for tr in &traces {
        let slack = energy_inequality_slack(tr, src.bound).into_iter().fold(f64::INFINITY, f64::min);
        worst_slack = worst_slack.min(slack);
        let res = tr.ledger.last().expect("ledger holds t_0").residual;
        t.push(vec![tr.n_steps.into(), tr.dt.into(), tr.max_increment().into(), res.into(), slack.into()]);
    }
    let mut out = RunOutput::default();
    out.tables.push(t);
    out.set("slope", study.slope);
    out.checks.push(Check::at_least("energy_inequality_slack", worst_slack, -1e-8));
    let env = traces.iter().map(|t| t.envelope_violation).fold(0.0, f64::max);
    out.checks.push(Check::at_most("envelope_violation", env, 1e-10));
    match study.slope {
        Some(sl) => {
            out.checks.push(Check::at_least("gap_slope", sl, 0.4));
            out.notes.push(format!("fitted slope of max increment against dt: {sl:.4}"));
        }
        None => out.notes.push("all increments vanish: constant-in-time solution, no slope".into()),
    }
    Ok(out)
}

fn study_seminorm(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let threshold = beta_threshold(cfg.q, cfg.s);
    let beta = cfg.study.beta.unwrap_or(cfg.study.beta_factor * threshold);
    let g = cfg.study.g;
    let st = seminorm_refinement_study(
        cfg.q,
        cfg.s,
        beta,
        &cfg.study.ns,
        (cfg.domain.a, cfg.domain.b),
        cfg.lambda,
        g,
        cfg.study.epsilon,
    )?;
    let mut t = Table::new("seminorms", &["n", "u_seminorm", "u_beta_seminorm", "u_ratio", "u_beta_ratio"]);
    for (i, &n) in st.ns.iter().enumerate() {
        let ratio = |v: &[f64]| if i == 0 { Cell::Num(f64::NAN) } else { Cell::Num(v[i - 1]) };
        t.push(vec![
            n.into(),
            st.u_seminorm[i].into(),
            st.u_beta_seminorm[i].into(),
            ratio(&st.u_ratio),
            ratio(&st.u_beta_ratio),
        ]);
    }
    let mut out = RunOutput::default();
    out.tables.push(t);
    out.set("study", &st);
    let last = |v: &[f64]| *v.last().expect("two levels at least");
    match st.regime {
        ParamRegime::VerySingular => {
            let min_u = st.u_ratio.iter().cloned().fold(f64::INFINITY, f64::min);
            out.checks.push(Check::holds("u_ratio_min", min_u, "> 1.05 (growth)", min_u > 1.05));
            out.checks
                .push(Check::holds("u_beta_ratio_last", last(&st.u_beta_ratio), "< 1.02 (plateau)", last(&st.u_beta_ratio) < 1.02));
        }
        ParamRegime::Standard => {
            // control run: both sequences should settle
            out.checks.push(Check::holds("u_ratio_last", last(&st.u_ratio), "< 1.02 (plateau)", last(&st.u_ratio) < 1.02));
            out.checks
                .push(Check::holds("u_beta_ratio_last", last(&st.u_beta_ratio), "< 1.02 (plateau)", last(&st.u_beta_ratio) < 1.02));
        }
    }
    out.notes.push("refinement-trend evidence, not a membership proof".into());
    out.notes.push(format!("beta = {beta} (threshold {threshold}), regime {:?}", st.regime));
    Ok(out)
}

fn verify_all(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let ids: Vec<u32> = if cfg.verify.criteria.is_empty() {
        verify::ALL.to_vec()
    } else {
        cfg.verify.criteria.clone()
    };
    let results = verify::run(&ids, cfg.verify.scale.to_core(), cfg.seed);
    let mut out = RunOutput {
        tables: verify::all_tables(&results),
        ..Default::default()
    };
    out.set("criteria", &results);
    for r in &results {
        out.checks.push(Check::holds(
            &format!("criterion_{:02}_{}", r.id, r.name.replace(' ', "_")),
            if r.pass { 1.0 } else { 0.0 },
            "pass",
            r.pass,
        ));
        let note = r.note.map(|n| format!(" [{n}]")).unwrap_or_default();
        out.notes.push(format!(
            "criterion {:>2} {}: {}: {}{note}",
            r.id,
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        ));
    }
    Ok(out)
}
