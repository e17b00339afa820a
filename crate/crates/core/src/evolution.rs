//! Implicit Euler in time for the singular parabolic problems.
//!
//! Each step solves `u^k + Δt(A u^k − (u^k)^{-q}) = Δt·r_k + u^{k−1}` where
//! `r_k` is the time-averaged source `h_k` or the lagged `f(x, u^{k−1})`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::fraclap::{EigenPair, FracOperator};
use crate::grid::Grid;
use crate::stationary::{
    solve_pure_singular, solve_q_with, Continuation, Direction, Envelopes, NonlinearitySpec, Resolvent,
};

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Stabilization is declared after this many consecutive steps below threshold.
pub const STABLE_STEPS: usize = 10;
pub const STABLE_THRESHOLD: f64 = 1e-4;

type Htx = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Bounded source `h(t, x)`.
#[derive(Clone)]
pub struct SourceSpec {
    pub name: String,
    h: Htx,
    pub bound: f64,
}

impl fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceSpec")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .finish()
    }
}

impl SourceSpec {
    pub fn new(name: impl Into<String>, h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(invalid(format!("source bound must be finite and nonnegative, got {bound}")));
        }
        Ok(Self {
            name: name.into(),
            h: Arc::new(h),
            bound,
        })
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _| 0.0, 0.0).expect("valid bound")
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.h)(t, x)
    }

    /// Sampled check of `|h| ≤ bound` on `[0, T] × (a, b)`.
    pub fn validate(&self, a: f64, b: f64, t_final: f64) -> Result<()> {
        for i in 0..=32 {
            let t = t_final * i as f64 / 32.0;
            for j in 0..33 {
                let x = a + (b - a) * (j as f64 + 0.5) / 33.0;
                let v = self.eval(t, x);
                if !(v.abs() <= self.bound * (1.0 + 1e-12) + 1e-15) {
                    return Err(invalid(format!("{}: |h({t}, {x})| = {} exceeds bound {}", self.name, v.abs(), self.bound)));
                }
            }
        }
        Ok(())
    }
}

/// `h_k(x) = (1/Δt) ∫_{t_{k−1}}^{t_k} h(τ, x) dτ` for `k = 1..=n_steps` by
/// 4-point Gauss–Legendre.
pub fn discretize_source(src: &SourceSpec, grid: &Arc<Grid>, t_final: f64, n_steps: usize) -> Result<Vec<Field>> {
    check_time(t_final, n_steps)?;
    let dt = t_final / n_steps as f64;
    Ok((1..=n_steps)
        .map(|k| {
            let t0 = (k - 1) as f64 * dt;
            Field::from_fn(grid.clone(), |x| {
                GAUSS4
                    .iter()
                    .map(|&(z, w)| 0.5 * w * src.eval(t0 + 0.5 * dt * (z + 1.0), x))
                    .sum()
            })
        })
        .collect())
}

fn check_time(t_final: f64, n_steps: usize) -> Result<()> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(invalid(format!("final time must be positive, got {t_final}")));
    }
    if n_steps == 0 {
        return Err(invalid("need at least one time step"));
    }
    Ok(())
}

/// One implicit Euler step: the limit problem with `λ = Δt`, `g = Δt·h_k + u^{k−1}`.
///
/// Newton is warm-started at `u_prev` with `barrier` as the positivity floor;
/// if that fails the step falls back to the full ε-continuation.
pub fn step_implicit(
    u_prev: &Field,
    h_k: &Field,
    dt: f64,
    q: f64,
    op: &FracOperator,
    barrier: Option<&Field>,
) -> Result<(Field, usize)> {
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    u_prev.ensure_same_grid(h_k)?;
    if !op.grid().same_as(u_prev.grid()) {
        return Err(Error::GridMismatch("step data and operator differ".into()));
    }
    let res = Resolvent {
        op,
        shift: 1.0,
        lambda: dt,
        q,
    };
    let g: Vec<f64> = h_k.values().iter().zip(u_prev.values()).map(|(h, u)| dt * h + u).collect();
    let warm = res.newton(&g, 0.0, u_prev.values().to_vec(), barrier.map(|b| b.values()));
    let (u, steps) = match warm {
        Ok((u, steps, _)) => (u, steps),
        Err(e) => {
            log::debug!("warm Newton failed ({e}); falling back to continuation");
            let (u, report) = res.continuation(&g, 0.0, &Continuation::default(), |_, _| {})?;
            (u, report.newton_steps)
        }
    };
    Ok((Field::from_vec_unchecked(op.grid().clone(), u), steps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Prescribed source `h`.
    G,
    /// Lagged semilinear source `f(x, u^{k−1})`.
    P,
}

/// Energy bookkeeping at `t_k`; sums are cumulative from `t_0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    /// `Σ_j ‖(u^j − u^{j−1})/Δt‖²_{L²} Δt`.
    pub kinetic: f64,
    /// `½‖u^k‖²_{X_0}`.
    pub energy: f64,
    /// `−1/(1−q) ∫ (u^k)^{1−q}`, or `−∫ ln u^k` at `q = 1`.
    pub potential: f64,
    /// `Σ_j ∫ h_j (u^j − u^{j−1})`.
    pub source_work: f64,
    /// `∫ F(x, u^k)`.
    pub f_term: f64,
    /// Signed defect of the energy identity; nonpositive for a dissipative step.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub scheme: Scheme,
    pub t_final: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub q: f64,
    pub snapshots: Vec<Field>,
    /// Right-hand side used at step `k` (index `k − 1`).
    pub forcing: Vec<Field>,
    pub ledger: Vec<LedgerRow>,
    pub envelopes: Envelopes,
    pub newton_steps: usize,
    /// Largest violation of `u̲ ≤ u^k ≤ ū` over all snapshots.
    pub envelope_violation: f64,
}

impl EvolutionTrace {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trace holds u^0")
    }

    /// `max_k ‖u^k − u^{k−1}‖_{L²}`.
    pub fn max_increment(&self) -> f64 {
        self.snapshots
            .windows(2)
            .map(|w| w[1].sub(&w[0]).map(|d| d.norm_l2()).unwrap_or(f64::NAN))
            .fold(0.0, f64::max)
    }
}

/// Envelopes for a source bounded by `bound`, widened to contain `u0`.
pub fn envelopes_for_source(
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
    w: &Field,
    bound: f64,
    u0: &Field,
) -> Result<Envelopes> {
    let mut env = Envelopes::build(q, op, eig, w, 0.0, bound)?;
    env.enclose(u0, op, eig, w)?;
    Ok(env)
}

/// Implicit Euler for the prescribed-source problem.
pub fn evolve_g(
    u0: &Field,
    src: &SourceSpec,
    t_final: f64,
    n_steps: usize,
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
) -> Result<EvolutionTrace> {
    check_time(t_final, n_steps)?;
    let grid = op.grid().clone();
    src.validate(grid.a(), grid.b(), t_final)?;
    let w = solve_pure_singular(q, op)?.u;
    let env = envelopes_for_source(q, op, eig, &w, src.bound, u0)?;
    let forcing = discretize_source(src, &grid, t_final, n_steps)?;
    evolve_g_with(u0, forcing, t_final / n_steps as f64, q, op, env)
}

/// Same as [`evolve_g`] with precomputed `h_k` and envelopes.
pub fn evolve_g_with(
    u0: &Field,
    forcing: Vec<Field>,
    dt: f64,
    q: f64,
    op: &FracOperator,
    envelopes: Envelopes,
) -> Result<EvolutionTrace> {
    let n_steps = forcing.len();
    check_time(dt * n_steps as f64, n_steps)?;
    let mut snapshots = vec![u0.clone()];
    let mut newton_steps = 0;
    for (k, h_k) in forcing.iter().enumerate() {
        let prev = &snapshots[k];
        let (next, steps) = step_implicit(prev, h_k, dt, q, op, Some(&envelopes.lower)).map_err(|e| Error::StepFailed {
            step: k + 1,
            source: Box::new(e),
        })?;
        newton_steps += steps;
        snapshots.push(next);
    }
    finish(Scheme::G, snapshots, forcing, dt, q, op, envelopes, newton_steps, None)
}

/// Lagged implicit Euler for the semilinear problem; requires `Δt·K₀ < 1`.
pub fn evolve_p(
    u0: &Field,
    nl: &NonlinearitySpec,
    t_final: f64,
    n_steps: usize,
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
) -> Result<EvolutionTrace> {
    check_time(t_final, n_steps)?;
    if !(nl.growth_mu < eig.lambda1) {
        return Err(invalid(format!(
            "growth bound mu = {} must be below lambda1 = {}",
            nl.growth_mu, eig.lambda1
        )));
    }
    let w = solve_pure_singular(q, op)?.u;
    let mut env = Envelopes::build(q, op, eig, &w, nl.growth_mu, nl.lower_bound_l)?;
    env.enclose(u0, op, eig, &w)?;
    evolve_p_with(u0, nl, t_final / n_steps as f64, n_steps, q, op, env)
}

pub fn evolve_p_with(
    u0: &Field,
    nl: &NonlinearitySpec,
    dt: f64,
    n_steps: usize,
    q: f64,
    op: &FracOperator,
    envelopes: Envelopes,
) -> Result<EvolutionTrace> {
    check_time(dt * n_steps as f64, n_steps)?;
    let grid = op.grid();
    let y_max = envelopes.upper.max();
    nl.validate(grid.a(), grid.b(), y_max)?;
    let k0 = nl.lipschitz_on(0.0, y_max);
    if !(dt * k0 < 1.0) {
        return Err(invalid(format!("dt * K0 = {} must be below 1", dt * k0)));
    }
    let mut snapshots = vec![u0.clone()];
    let mut forcing = Vec::with_capacity(n_steps);
    let mut newton_steps = 0;
    for k in 0..n_steps {
        let prev = &snapshots[k];
        let f_k = nl.eval_field(prev);
        let (next, steps) = step_implicit(prev, &f_k, dt, q, op, Some(&envelopes.lower)).map_err(|e| Error::StepFailed {
            step: k + 1,
            source: Box::new(e),
        })?;
        newton_steps += steps;
        forcing.push(f_k);
        snapshots.push(next);
    }
    finish(Scheme::P, snapshots, forcing, dt, q, op, envelopes, newton_steps, Some(nl))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    scheme: Scheme,
    snapshots: Vec<Field>,
    forcing: Vec<Field>,
    dt: f64,
    q: f64,
    op: &FracOperator,
    envelopes: Envelopes,
    newton_steps: usize,
    nl: Option<&NonlinearitySpec>,
) -> Result<EvolutionTrace> {
    let ledger = build_ledger(scheme, &snapshots, &forcing, dt, q, op, nl)?;
    let envelope_violation = snapshots.iter().map(|u| envelopes.violation(u)).fold(0.0, f64::max);
    let n_steps = forcing.len();
    Ok(EvolutionTrace {
        scheme,
        t_final: dt * n_steps as f64,
        n_steps,
        dt,
        q,
        snapshots,
        forcing,
        ledger,
        envelopes,
        newton_steps,
        envelope_violation,
    })
}

/// `−1/(1−q) ∫ u^{1−q}`, with `−∫ ln u` at `q = 1`.
pub fn singular_potential(u: &Field, q: f64) -> f64 {
    let h = u.grid().h();
    if (q - 1.0).abs() < 1e-12 {
        -h * u.values().iter().map(|v| v.ln()).sum::<f64>()
    } else {
        -h / (1.0 - q) * u.values().iter().map(|v| v.powf(1.0 - q)).sum::<f64>()
    }
}

fn build_ledger(
    scheme: Scheme,
    snapshots: &[Field],
    forcing: &[Field],
    dt: f64,
    q: f64,
    op: &FracOperator,
    nl: Option<&NonlinearitySpec>,
) -> Result<Vec<LedgerRow>> {
    let h = op.grid().h();
    let f_term = |u: &Field| -> f64 {
        match nl {
            Some(nl) => {
                h * u
                    .values()
                    .iter()
                    .zip(u.grid().nodes())
                    .map(|(&v, &x)| nl.antiderivative(x, v))
                    .sum::<f64>()
            }
            None => 0.0,
        }
    };
    let energy = |u: &Field| -> Result<f64> { Ok(0.5 * h * op.bilinear(u, u)?) };

    let u0 = &snapshots[0];
    let e0 = energy(u0)?;
    let p0 = singular_potential(u0, q);
    let f0 = f_term(u0);
    let mut rows = vec![LedgerRow {
        t: 0.0,
        kinetic: 0.0,
        energy: e0,
        potential: p0,
        source_work: 0.0,
        f_term: f0,
        residual: 0.0,
    }];
    let (mut kinetic, mut work) = (0.0, 0.0);
    for k in 1..snapshots.len() {
        let du = snapshots[k].sub(&snapshots[k - 1])?;
        kinetic += h * du.values().iter().map(|d| d * d).sum::<f64>() / dt;
        if scheme == Scheme::G {
            work += h * forcing[k - 1].dot(&du)?;
        }
        let e = energy(&snapshots[k])?;
        let p = singular_potential(&snapshots[k], q);
        let f = f_term(&snapshots[k]);
        rows.push(LedgerRow {
            t: k as f64 * dt,
            kinetic,
            energy: e,
            potential: p,
            source_work: work,
            f_term: f,
            residual: kinetic + (e + p) - (e0 + p0) - work - (f - f0),
        });
    }
    Ok(rows)
}

/// Signed energy-identity defect at every `t_k`.
pub fn energy_identity_residual(trace: &EvolutionTrace) -> Vec<f64> {
    trace.ledger.iter().map(|r| r.residual).collect()
}

/// Slack of the second energy estimate
/// `½·kinetic + ½(‖u^k‖² − ‖u⁰‖²) + (potential_k − potential_0) ≤ |Ω| T ‖h‖²_∞ / 2`
/// at every `t_k` (nonnegative when the estimate holds).
pub fn energy_inequality_slack(trace: &EvolutionTrace, bound: f64) -> Vec<f64> {
    let width = trace.snapshots[0].grid().width();
    let rhs = 0.5 * width * trace.t_final * bound * bound;
    let r0 = trace.ledger[0];
    trace
        .ledger
        .iter()
        .map(|r| rhs - (0.5 * r.kinetic + (r.energy - r0.energy) + (r.potential - r0.potential)))
        .collect()
}

/// Piecewise-constant and piecewise-linear interpolants at time `t`.
pub fn interpolants(trace: &EvolutionTrace, t: f64) -> Result<(Field, Field)> {
    if !(t >= 0.0 && t <= trace.t_final * (1.0 + 1e-14)) {
        return Err(invalid(format!("time {t} outside [0, {}]", trace.t_final)));
    }
    if t == 0.0 {
        let u0 = trace.snapshots[0].clone();
        return Ok((u0.clone(), u0));
    }
    // snap to a node when t is one up to rounding
    let x = t / trace.dt;
    let k = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    let k = (k as usize).clamp(1, trace.n_steps);
    let (prev, cur) = (&trace.snapshots[k - 1], &trace.snapshots[k]);
    let theta = (t - trace.time(k - 1)) / trace.dt;
    let linear = prev.scale(1.0 - theta).add_scaled(theta, cur)?;
    Ok((cur.clone(), linear))
}

/// Outcome of the three-trajectory stabilization experiment.
#[derive(Debug, Clone, Serialize)]
pub struct StabilizationReport {
    pub times: Vec<f64>,
    /// `‖u^k − û‖_∞`.
    pub distance: Vec<f64>,
    /// `‖v₂^k − v₁^k‖_∞`.
    pub squeeze: Vec<f64>,
    pub bracketing_violation: f64,
    /// Largest decrease of `v₁` between consecutive steps.
    pub lower_monotonicity_defect: f64,
    /// Largest increase of `v₂` between consecutive steps.
    pub upper_monotonicity_defect: f64,
    pub envelope_violation: f64,
    /// First step from which `distance < 1e-4` holds for 10 consecutive steps.
    pub stabilized_step: Option<usize>,
    pub stabilized_time: Option<f64>,
    pub k0: f64,
    #[serde(skip)]
    pub u_hat: Field,
    #[serde(skip)]
    pub traces: [EvolutionTrace; 3],
}

/// Runs the lagged scheme from `u0`, `u̲` and `ū` and compares with `û`.
pub fn stabilization_run(
    u0: &Field,
    nl: &NonlinearitySpec,
    t_final: f64,
    n_steps: usize,
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
) -> Result<StabilizationReport> {
    check_time(t_final, n_steps)?;
    if !nl.monotone_quotient {
        return Err(invalid(format!("{} does not have a monotone quotient", nl.name)));
    }
    if !(nl.growth_mu < eig.lambda1) {
        return Err(invalid(format!(
            "growth bound mu = {} must be below lambda1 = {}",
            nl.growth_mu, eig.lambda1
        )));
    }
    let w = solve_pure_singular(q, op)?.u;
    let mut env = Envelopes::build(q, op, eig, &w, nl.growth_mu, nl.lower_bound_l)?;
    env.enclose(u0, op, eig, &w)?;
    let steady = solve_q_with(nl, q, op, &env, Direction::Ascending)?;
    let dt = t_final / n_steps as f64;
    let run = |start: &Field| evolve_p_with(start, nl, dt, n_steps, q, op, env.clone());
    let u = run(u0)?;
    let v1 = run(&env.lower)?;
    let v2 = run(&env.upper)?;

    let mut distance = Vec::with_capacity(n_steps + 1);
    let mut squeeze = Vec::with_capacity(n_steps + 1);
    let mut bracketing = 0.0f64;
    let (mut low_defect, mut up_defect) = (0.0f64, 0.0f64);
    for k in 0..=n_steps {
        let (uk, ak, bk) = (&u.snapshots[k], &v1.snapshots[k], &v2.snapshots[k]);
        distance.push(uk.dist_inf(&steady.u)?);
        squeeze.push(bk.dist_inf(ak)?);
        for ((&x, &lo), &hi) in uk.values().iter().zip(ak.values()).zip(bk.values()) {
            bracketing = bracketing.max(lo - x).max(x - hi);
        }
        if k > 0 {
            let (pa, pb) = (&v1.snapshots[k - 1], &v2.snapshots[k - 1]);
            for (p, c) in pa.values().iter().zip(ak.values()) {
                low_defect = low_defect.max(p - c);
            }
            for (p, c) in pb.values().iter().zip(bk.values()) {
                up_defect = up_defect.max(c - p);
            }
        }
        if bracketing > 1e-8 {
            return Err(Error::BracketingViolation {
                step: k,
                violation: bracketing,
            });
        }
    }
    let stabilized_step = first_stable(&distance, STABLE_THRESHOLD, STABLE_STEPS);
    let envelope_violation = u.envelope_violation.max(v1.envelope_violation).max(v2.envelope_violation);
    Ok(StabilizationReport {
        times: (0..=n_steps).map(|k| k as f64 * dt).collect(),
        distance,
        squeeze,
        bracketing_violation: bracketing,
        lower_monotonicity_defect: low_defect,
        upper_monotonicity_defect: up_defect,
        envelope_violation,
        stabilized_step,
        stabilized_time: stabilized_step.map(|k| k as f64 * dt),
        k0: steady.k0,
        u_hat: steady.u,
        traces: [u, v1, v2],
    })
}

fn first_stable(d: &[f64], threshold: f64, run: usize) -> Option<usize> {
    let mut count = 0;
    for (k, &v) in d.iter().enumerate() {
        if v < threshold {
            count += 1;
            if count == run {
                return Some(k + 1 - run);
            }
        } else {
            count = 0;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, s: f64) -> (FracOperator, EigenPair) {
        let g = Arc::new(Grid::new(-1.0, 1.0, n).unwrap());
        let op = FracOperator::assemble(g, s).unwrap();
        let eig = op.eigen_principal().unwrap();
        (op, eig)
    }

    #[test]
    fn source_averages() {
        let grid = Arc::new(Grid::new(0.0, 1.0, 5).unwrap());
        let c = SourceSpec::new("c", |_, x| x, 1.0).unwrap();
        let hk = discretize_source(&c, &grid, 1.0, 4).unwrap();
        for h in &hk {
            for (v, x) in h.values().iter().zip(grid.nodes()) {
                assert!((v - x).abs() < 1e-15);
            }
        }
        let lin = SourceSpec::new("t", |t, _| t, 1.0).unwrap();
        let hk = discretize_source(&lin, &grid, 1.0, 4).unwrap();
        for (k, h) in hk.iter().enumerate() {
            let mid = (k as f64 + 0.5) * 0.25;
            assert!(h.values().iter().all(|v| (v - mid).abs() < 1e-15));
        }
        let sin = SourceSpec::new("sin", |t, x| t.sin() * x, 1.0).unwrap();
        let (t_final, n) = (2.0, 8);
        let dt = t_final / n as f64;
        let hk = discretize_source(&sin, &grid, t_final, n).unwrap();
        for (k, h) in hk.iter().enumerate() {
            let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
            let avg = (t0.cos() - t1.cos()) / dt;
            for (v, x) in h.values().iter().zip(grid.nodes()) {
                assert!((v - x * avg).abs() < 1e-10);
            }
        }
        assert!(discretize_source(&sin, &grid, 0.0, 3).is_err());
    }

    #[test]
    fn source_bound_is_checked() {
        let s = SourceSpec::new("big", |_, _| 2.0, 1.0).unwrap();
        assert!(s.validate(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn stationary_state_is_a_fixed_point() {
        let (op, _) = setup(48, 0.3);
        let grid = op.grid().clone();
        let q = 0.6;
        // u* with A u* − u*^{-q} = 0.5
        let res = Resolvent {
            op: &op,
            shift: 0.0,
            lambda: 1.0,
            q,
        };
        let g = vec![0.5; grid.len()];
        let (ustar, _) = res.continuation(&g, 0.0, &Continuation::default(), |_, _| {}).unwrap();
        let ustar = Field::new(grid.clone(), ustar).unwrap();
        let h = Field::constant(grid, 0.5);
        let (next, _) = step_implicit(&ustar, &h, 0.1, q, &op, None).unwrap();
        assert!(next.dist_inf(&ustar).unwrap() < 1e-10);
    }

    #[test]
    fn interpolants_at_nodes_and_midpoints() {
        let (op, eig) = setup(24, 0.3);
        let grid = op.grid().clone();
        let src = SourceSpec::new("one", |_, _| 1.0, 1.0).unwrap();
        let u0 = eig.phi1.scale(0.3);
        let tr = evolve_g(&u0, &src, 0.4, 4, 0.5, &op, &eig).unwrap();
        assert_eq!(tr.snapshots.len(), 5);
        assert_eq!(tr.snapshots[0].values(), u0.values());
        for k in 0..=4 {
            let (pc, pl) = interpolants(&tr, tr.time(k)).unwrap();
            assert!(pc.dist_inf(&tr.snapshots[k]).unwrap() < 1e-15);
            assert!(pl.dist_inf(&tr.snapshots[k]).unwrap() < 1e-12);
        }
        let (_, mid) = interpolants(&tr, 0.15).unwrap();
        let avg = tr.snapshots[1].scale(0.5).add_scaled(0.5, &tr.snapshots[2]).unwrap();
        assert!(mid.dist_inf(&avg).unwrap() < 1e-12);
        assert!(interpolants(&tr, 0.5).is_err());
        assert!(tr.envelope_violation <= 1e-10);
        assert_eq!(grid.len(), 24);
    }

    #[test]
    fn g_trace_is_dissipative() {
        let (op, eig) = setup(32, 0.35);
        let src = SourceSpec::new("wave", |t, x| 0.5 + 0.5 * (3.0 * t).sin() * x, 1.0).unwrap();
        let u0 = eig.phi1.scale(0.4);
        let tr = evolve_g(&u0, &src, 1.0, 10, 0.5, &op, &eig).unwrap();
        for r in energy_identity_residual(&tr) {
            assert!(r <= 1e-9, "{r}");
        }
        assert!(energy_inequality_slack(&tr, src.bound).iter().all(|&s| s >= -1e-8));
    }

    #[test]
    fn p_scheme_with_zero_f_matches_g() {
        let (op, eig) = setup(24, 0.3);
        let u0 = eig.phi1.scale(0.5);
        let g = evolve_g(&u0, &SourceSpec::zero(), 0.5, 5, 1.0, &op, &eig).unwrap();
        let p = evolve_p(&u0, &NonlinearitySpec::zero(), 0.5, 5, 1.0, &op, &eig).unwrap();
        for (a, b) in g.snapshots.iter().zip(&p.snapshots) {
            assert!(a.dist_inf(b).unwrap() < 1e-13);
        }
    }

    #[test]
    fn p_scheme_rejects_large_growth_and_steps() {
        let (op, eig) = setup(16, 0.3);
        let u0 = eig.phi1.scale(0.5);
        let mu = eig.lambda1;
        let nl = NonlinearitySpec::new("lin", move |_, y| mu * y, move |_, z| 0.5 * mu * z * z, move |_, _| mu, 0.0, mu, true)
            .unwrap();
        assert!(matches!(evolve_p(&u0, &nl, 1.0, 10, 0.5, &op, &eig), Err(Error::InvalidParameter(_))));
        let mu = 0.5 * eig.lambda1;
        let nl = NonlinearitySpec::new("lin", move |_, y| mu * y, move |_, z| 0.5 * mu * z * z, move |_, _| mu, 0.0, mu, true)
            .unwrap();
        let dt_too_big = 2.0 / mu;
        assert!(matches!(evolve_p(&u0, &nl, dt_too_big, 1, 0.5, &op, &eig), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn stable_run_detection() {
        let d = [1.0, 1e-5, 1e-5, 1.0, 1e-5, 1e-5, 1e-5];
        assert_eq!(first_stable(&d, 1e-4, 3), Some(4));
        assert_eq!(first_stable(&d, 1e-4, 4), None);
    }
}
