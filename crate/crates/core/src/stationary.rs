//! Stationary singular problems on the interval.
//!
//! Every solve here is an instance of the singular resolvent equation
//!
//! `shift·u + λ (A u − (u + ε)^{-q}) = g`
//!
//! whose Jacobian `shift·I + λA + λq diag((u+ε)^{-q-1})` is a symmetric
//! M-matrix. The map is concave in `u`, so Newton started from a point with
//! nonpositive residual increases monotonically to the solution. The
//! ε-continuation is arranged so that every level starts from such a point.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::dense::Cholesky;
use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::fraclap::{EigenPair, FracOperator};
use crate::grid::Grid;

pub const TOL_NEWTON: f64 = 1e-10;
pub const TOL_CONT: f64 = 1e-7;
pub const TOL_ITER: f64 = 1e-8;
pub const MAX_NEWTON: usize = 200;
pub const MAX_LEVELS: usize = 60;
pub const MAX_MONOTONE: usize = 10_000;
/// Dyadic search range `2^{-60} ..= 2^{60}`.
const DYADIC: i32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRegime {
    Standard,
    VerySingular,
}

/// Standard iff `q(2s−1) < 2s+1`.
pub fn validate_params(q: f64, s: f64) -> Result<ParamRegime> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid(format!("q must be positive, got {q}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s must lie in (0,1), got {s}")));
    }
    Ok(if q * (2.0 * s - 1.0) < 2.0 * s + 1.0 {
        ParamRegime::Standard
    } else {
        ParamRegime::VerySingular
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeRegime {
    QBelow1,
    QEqual1,
    QAbove1,
}

impl ConeRegime {
    pub fn of(q: f64) -> Self {
        if (q - 1.0).abs() < 1e-12 {
            ConeRegime::QEqual1
        } else if q < 1.0 {
            ConeRegime::QBelow1
        } else {
            ConeRegime::QAbove1
        }
    }
}

/// Boundary envelope `k1·profile ≤ u ≤ k2·profile`.
#[derive(Debug, Clone, Serialize)]
pub struct ConeEnvelope {
    pub regime: ConeRegime,
    pub k1: f64,
    pub k2: f64,
    pub exponent: f64,
    pub log_factor: bool,
    pub r: f64,
    pub s: f64,
}

impl ConeEnvelope {
    /// Envelope with `k1 = k2 = 1` for the regime of `q`; `r = 2(b − a)`.
    pub fn unit(q: f64, s: f64, grid: &Grid) -> Self {
        let regime = ConeRegime::of(q);
        let exponent = match regime {
            ConeRegime::QAbove1 => 2.0 * s / (q + 1.0),
            _ => s,
        };
        Self {
            regime,
            k1: 1.0,
            k2: 1.0,
            exponent,
            log_factor: regime == ConeRegime::QEqual1,
            r: 2.0 * grid.width(),
            s,
        }
    }

    pub fn with_constants(mut self, k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0 && k1 <= k2 && k2.is_finite()) {
            return Err(invalid(format!("need 0 < k1 <= k2 < inf, got {k1}, {k2}")));
        }
        self.k1 = k1;
        self.k2 = k2;
        Ok(self)
    }

    pub fn profile(&self, delta: f64) -> f64 {
        let base = delta.powf(self.exponent);
        if self.log_factor {
            base * (self.r / delta.powf(self.s)).ln().sqrt()
        } else {
            base
        }
    }
}

/// Data of `u + λ((−Δ)^s u − (u+ε)^{-q}) = g`; `epsilon = 0` is the limit problem.
#[derive(Debug, Clone)]
pub struct StationaryProblem {
    pub lambda: f64,
    pub q: f64,
    pub g: Field,
    pub epsilon: f64,
}

impl StationaryProblem {
    pub fn new(lambda: f64, q: f64, g: Field, epsilon: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(invalid(format!("q must be positive, got {q}")));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        Ok(Self { lambda, q, g, epsilon })
    }
}

type Fxy = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Semilinear source `f(x, y)` with the structural data the theory needs.
#[derive(Clone)]
pub struct NonlinearitySpec {
    pub name: String,
    f: Fxy,
    antiderivative: Fxy,
    /// Lipschitz constant of `f(x, ·)` on `[lo, hi]`, uniform in `x`.
    lipschitz: Fxy,
    /// `f ≥ −l` and `f ≤ μ y + l`.
    pub lower_bound_l: f64,
    pub growth_mu: f64,
    /// `y ↦ f(x, y)/y` is nonincreasing.
    pub monotone_quotient: bool,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("name", &self.name)
            .field("lower_bound_l", &self.lower_bound_l)
            .field("growth_mu", &self.growth_mu)
            .field("monotone_quotient", &self.monotone_quotient)
            .finish()
    }
}

impl NonlinearitySpec {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        antiderivative: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        lipschitz: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        lower_bound_l: f64,
        growth_mu: f64,
        monotone_quotient: bool,
    ) -> Result<Self> {
        if !(lower_bound_l >= 0.0) {
            return Err(invalid("lower bound l must be nonnegative"));
        }
        if !growth_mu.is_finite() {
            return Err(invalid("growth bound mu must be finite"));
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            antiderivative: Arc::new(antiderivative),
            lipschitz: Arc::new(lipschitz),
            lower_bound_l,
            growth_mu,
            monotone_quotient,
        })
    }

    /// `f ≡ 0`.
    pub fn zero() -> Self {
        Self::new("zero", |_, _| 0.0, |_, _| 0.0, |_, _| 0.0, 0.0, 0.0, true)
            .expect("valid constants")
    }

    pub fn f(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }

    /// `F(x, z) = ∫_0^z f(x, t) dt`.
    pub fn antiderivative(&self, x: f64, z: f64) -> f64 {
        (self.antiderivative)(x, z)
    }

    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        (self.lipschitz)(lo, hi)
    }

    /// Nodal values `f(x_i, u_i)`.
    pub fn eval_field(&self, u: &Field) -> Field {
        let x = u.grid().nodes();
        let v = u.values().iter().zip(x).map(|(&y, &xi)| self.f(xi, y)).collect();
        Field::from_vec_unchecked(u.grid().clone(), v)
    }

    /// Sampled check that `f(x,y)/y` is nonincreasing on `(0, y_max]`.
    pub fn sampled_monotone_quotient(&self, a: f64, b: f64, y_max: f64) -> bool {
        let xs = samples(a, b, 17);
        let ys = positive_samples(y_max, 200);
        xs.iter().all(|&x| {
            ys.windows(2).all(|w| {
                let q0 = self.f(x, w[0]) / w[0];
                let q1 = self.f(x, w[1]) / w[1];
                q1 <= q0 + 1e-12 * q0.abs().max(1.0)
            })
        })
    }

    /// Sampled verification of the declared bounds on `[a, b] × (0, y_max]`.
    pub fn validate(&self, a: f64, b: f64, y_max: f64) -> Result<()> {
        let xs = samples(a, b, 17);
        let ys = positive_samples(y_max, 200);
        let (l, mu) = (self.lower_bound_l, self.growth_mu);
        let lip = self.lipschitz_on(0.0, y_max);
        for &x in &xs {
            for &y in &ys {
                let v = self.f(x, y);
                let slack = 1e-12 * v.abs().max(1.0);
                if !v.is_finite() || v < -l - slack {
                    return Err(invalid(format!("{}: f({x}, {y}) = {v} below -l = {}", self.name, -l)));
                }
                if v > mu * y + l + slack {
                    return Err(invalid(format!("{}: f({x}, {y}) = {v} exceeds mu*y + l", self.name)));
                }
                // F' = f by a central difference
                let dz = 1e-5 * y.max(1e-3);
                let df = (self.antiderivative(x, y + dz) - self.antiderivative(x, (y - dz).max(0.0)))
                    / (y + dz - (y - dz).max(0.0));
                if (df - v).abs() > 1e-5 * v.abs().max(1.0) {
                    return Err(invalid(format!("{}: antiderivative inconsistent at ({x}, {y})", self.name)));
                }
            }
            for w in ys.windows(2) {
                let jump = (self.f(x, w[1]) - self.f(x, w[0])).abs();
                if jump > lip * (w[1] - w[0]) * (1.0 + 1e-9) + 1e-12 {
                    return Err(invalid(format!("{}: Lipschitz bound {lip} violated near y = {}", self.name, w[0])));
                }
            }
        }
        if self.monotone_quotient && !self.sampled_monotone_quotient(a, b, y_max) {
            return Err(invalid(format!("{}: f(x,y)/y is not nonincreasing as declared", self.name)));
        }
        Ok(())
    }
}

fn samples(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| a + (b - a) * (i as f64 + 0.5) / k as f64).collect()
}

fn positive_samples(y_max: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|i| y_max * i as f64 / k as f64).collect()
}

/// Counters and residuals of one stationary solve.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveReport {
    pub newton_steps: usize,
    /// Final max-norm residual (absolute).
    pub residual: f64,
    pub eps_schedule: Vec<f64>,
    /// `‖u_{ε_j} − u_{ε_{j−1}}‖_∞` per continuation level.
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    pub report: SolveReport,
}

/// ε-continuation schedule.
#[derive(Debug, Clone)]
pub struct Continuation {
    /// Starting ε; `None` picks 1, reduced when needed so that `u = 0` has
    /// nonpositive residual.
    pub eps0: Option<f64>,
    pub ratio: f64,
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for Continuation {
    fn default() -> Self {
        Self {
            eps0: None,
            ratio: 0.5,
            tol: TOL_CONT,
            max_levels: MAX_LEVELS,
        }
    }
}

/// `shift·u + λ(Au − (u+ε)^{-q}) = g`.
pub(crate) struct Resolvent<'a> {
    pub op: &'a FracOperator,
    pub shift: f64,
    pub lambda: f64,
    pub q: f64,
}

impl Resolvent<'_> {
    /// Residual and the scale the Newton tolerance is measured against.
    pub fn residual(&self, u: &[f64], eps: f64, g: &[f64]) -> (Vec<f64>, f64) {
        let au = self.op.apply_slice(u);
        let mut scale = 1.0f64;
        let r = u
            .iter()
            .zip(&au)
            .zip(g)
            .map(|((&ui, &ai), &gi)| {
                let sing = (ui + eps).powf(-self.q);
                scale = scale
                    .max(gi.abs())
                    .max(self.lambda * ai.abs())
                    .max(self.lambda * sing)
                    .max(self.shift * ui.abs());
                self.shift * ui + self.lambda * (ai - sing) - gi
            })
            .collect();
        (r, scale)
    }

    /// Damped Newton. Steps are shortened so that `u + ε` never falls below
    /// half of `min(u, barrier) + ε`.
    pub fn newton(
        &self,
        g: &[f64],
        eps: f64,
        mut u: Vec<f64>,
        barrier: Option<&[f64]>,
    ) -> Result<(Vec<f64>, usize, f64)> {
        let n = u.len();
        if let Some(node) = u.iter().position(|&v| !(v + eps > 0.0)) {
            return Err(Error::PositivityLost { node });
        }
        let a = self.op.matrix();
        for it in 0..=MAX_NEWTON {
            let (r, scale) = self.residual(&u, eps, g);
            let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !rn.is_finite() {
                return Err(Error::NewtonNotConverged { iterations: it, residual: rn });
            }
            if rn <= TOL_NEWTON * scale {
                return Ok((u, it, rn));
            }
            if it == MAX_NEWTON {
                return Err(Error::NewtonNotConverged { iterations: it, residual: rn });
            }
            let lam = self.lambda;
            let mut jac = Mat::from_fn(n, n, |i, j| lam * a[(i, j)]);
            for (i, &ui) in u.iter().enumerate() {
                jac[(i, i)] += self.shift + lam * self.q * (ui + eps).powf(-self.q - 1.0);
            }
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let d = Cholesky::factor(jac.as_ref())?.solve(&neg);

            let floor: Vec<f64> = (0..n)
                .map(|i| {
                    let b = barrier.map_or(u[i], |b| b[i].min(u[i]));
                    0.5 * (b + eps) - eps
                })
                .collect();
            let mut theta = 1.0;
            loop {
                let bad = (0..n).find(|&i| u[i] + theta * d[i] < floor[i]);
                match bad {
                    None => break,
                    Some(node) if theta < 1e-12 => return Err(Error::PositivityLost { node }),
                    Some(_) => theta *= 0.5,
                }
            }
            for (ui, di) in u.iter_mut().zip(&d) {
                *ui += theta * di;
            }
        }
        unreachable!("loop returns on the last iteration")
    }

    /// Starting ε for which `u = 0` has nonpositive residual.
    fn default_eps0(&self, g: &[f64]) -> f64 {
        let neg = g.iter().fold(0.0f64, |m, &v| m.max(-v));
        if neg > 0.0 {
            (0.5 * (self.lambda / neg).powf(1.0 / self.q)).min(1.0)
        } else {
            1.0
        }
    }

    /// Continuation down to `target` (> 0), or to the ε = 0 limit when
    /// `target == 0`. Every solved level is passed to `on_level`.
    pub fn continuation(
        &self,
        g: &[f64],
        target: f64,
        opts: &Continuation,
        mut on_level: impl FnMut(f64, &[f64]),
    ) -> Result<(Vec<f64>, SolveReport)> {
        if !(opts.ratio > 0.0 && opts.ratio < 1.0) {
            return Err(invalid(format!("continuation ratio must be in (0,1), got {}", opts.ratio)));
        }
        let mut report = SolveReport::default();
        let mut eps = opts.eps0.unwrap_or_else(|| self.default_eps0(g));
        if !(eps > 0.0) {
            return Err(invalid("starting epsilon must be positive"));
        }
        let mut u = vec![0.0; g.len()];
        let mut prev_gap = f64::INFINITY;
        let mut rising = 0;
        for level in 0..opts.max_levels {
            let e = if target > 0.0 { eps.max(target) } else { eps };
            let (next, steps, res) = self.newton(g, e, u.clone(), None)?;
            report.newton_steps += steps;
            report.residual = res;
            report.eps_schedule.push(e);
            on_level(e, &next);
            let gap = if level == 0 {
                f64::INFINITY
            } else {
                next.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            };
            if level > 0 {
                report.gaps.push(gap);
            }
            u = next;
            if target > 0.0 && e == target {
                return Ok((u, report));
            }
            if target == 0.0 && gap < opts.tol {
                let (polished, steps, res) = self.newton(g, 0.0, u, None)?;
                report.newton_steps += steps;
                report.residual = res;
                report.eps_schedule.push(0.0);
                return Ok((polished, report));
            }
            if level > 0 {
                rising = if gap >= prev_gap { rising + 1 } else { 0 };
                if rising >= 5 {
                    return Err(Error::ContinuationStagnated { level, gap });
                }
                prev_gap = gap;
            }
            eps *= opts.ratio;
        }
        Err(Error::ContinuationStagnated {
            level: opts.max_levels,
            gap: prev_gap,
        })
    }
}

fn check_grid(op: &FracOperator, f: &Field) -> Result<()> {
    if op.grid().same_as(f.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch("field and operator live on different grids".into()))
    }
}

fn resolvent_for<'a>(p: &StationaryProblem, op: &'a FracOperator) -> Resolvent<'a> {
    Resolvent {
        op,
        shift: 1.0,
        lambda: p.lambda,
        q: p.q,
    }
}

/// Solves the regularized problem at `p.epsilon > 0`.
pub fn solve_regularized(p: &StationaryProblem, op: &FracOperator) -> Result<Solution> {
    if !(p.epsilon > 0.0) {
        return Err(invalid("solve_regularized needs epsilon > 0"));
    }
    check_grid(op, &p.g)?;
    let (u, report) = resolvent_for(p, op).continuation(p.g.values(), p.epsilon, &Continuation::default(), |_, _| {})?;
    Ok(Solution {
        u: Field::from_vec_unchecked(op.grid().clone(), u),
        report,
    })
}

/// Regularized solutions for a decreasing list of positive ε, each level
/// warm-started from the previous one (`p.epsilon` is ignored).
pub fn solve_regularized_path(p: &StationaryProblem, op: &FracOperator, eps: &[f64]) -> Result<Vec<Field>> {
    check_grid(op, &p.g)?;
    if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("epsilon path must be positive and strictly decreasing"));
    }
    let res = resolvent_for(p, op);
    let mut out = Vec::with_capacity(eps.len());
    let mut u: Option<Vec<f64>> = None;
    for &e in eps {
        let next = match u {
            None => {
                let opts = Continuation {
                    eps0: Some(res.default_eps0(p.g.values()).max(e)),
                    ..Continuation::default()
                };
                res.continuation(p.g.values(), e, &opts, |_, _| {})?.0
            }
            Some(prev) => res.newton(p.g.values(), e, prev, None)?.0,
        };
        out.push(Field::from_vec_unchecked(op.grid().clone(), next.clone()));
        u = Some(next);
    }
    Ok(out)
}

/// Limit problem (ε = 0) by ε-continuation.
pub fn solve_s(p: &StationaryProblem, op: &FracOperator) -> Result<Solution> {
    solve_s_with(p, op, &Continuation::default())
}

pub fn solve_s_with(p: &StationaryProblem, op: &FracOperator, opts: &Continuation) -> Result<Solution> {
    check_grid(op, &p.g)?;
    if validate_params(p.q, op.s())? == ParamRegime::VerySingular {
        return Err(invalid(format!(
            "q = {} with s = {} is in the very singular regime",
            p.q,
            op.s()
        )));
    }
    let (u, report) = resolvent_for(p, op).continuation(p.g.values(), 0.0, opts, |_, _| {})?;
    Ok(Solution {
        u: Field::from_vec_unchecked(op.grid().clone(), u),
        report,
    })
}

/// Positive solution of `A w = w^{-q}`.
pub fn solve_pure_singular(q: f64, op: &FracOperator) -> Result<Solution> {
    if !(q > 0.0) {
        return Err(invalid(format!("q must be positive, got {q}")));
    }
    let res = Resolvent {
        op,
        shift: 0.0,
        lambda: 1.0,
        q,
    };
    let g = vec![0.0; op.len()];
    let (u, report) = res.continuation(&g, 0.0, &Continuation::default(), |_, _| {})?;
    Ok(Solution {
        u: Field::from_vec_unchecked(op.grid().clone(), u),
        report,
    })
}

fn dyadic(j: i32) -> f64 {
    2f64.powi(j)
}

/// Largest dyadic `m` with `A(mφ₁) − (mφ₁)^{-q} ≤ −bound` at every node.
pub fn build_subsolution(q: f64, op: &FracOperator, eig: &EigenPair, bound: f64) -> Result<(f64, Field)> {
    if !(bound >= 0.0) {
        return Err(invalid("subsolution bound must be nonnegative"));
    }
    check_grid(op, &eig.phi1)?;
    let phi = eig.phi1.values();
    let aphi = op.apply_slice(phi);
    for j in (-DYADIC..=DYADIC).rev() {
        let m = dyadic(j);
        let ok = phi
            .iter()
            .zip(&aphi)
            .all(|(&p, &ap)| m * ap - (m * p).powf(-q) <= -bound);
        if ok {
            return Ok((m, eig.phi1.scale(m)));
        }
    }
    Err(Error::SearchFailed { what: "subsolution m" })
}

/// Largest dyadic `m` with `mφ₁ + λ(A(mφ₁) − (mφ₁)^{-q}) ≤ g` nodally: a lower
/// barrier for the limit problem.
pub fn limit_subsolution(p: &StationaryProblem, op: &FracOperator, eig: &EigenPair) -> Result<(f64, Field)> {
    check_grid(op, &p.g)?;
    let phi = eig.phi1.values();
    let aphi = op.apply_slice(phi);
    for j in (-DYADIC..=DYADIC).rev() {
        let m = dyadic(j);
        let ok = phi.iter().zip(&aphi).zip(p.g.values()).all(|((&f, &af), &g)| {
            m * f + p.lambda * (m * af - (m * f).powf(-p.q)) <= g
        });
        if ok {
            return Ok((m, eig.phi1.scale(m)));
        }
    }
    Err(Error::SearchFailed { what: "limit subsolution m" })
}

/// Smallest dyadic `M ≥ 1` with `Mw + λ(A(Mw) − (Mw)^{-q}) ≥ g` nodally, where
/// `w` solves `A w = w^{-q}`: an upper barrier for the limit problem.
pub fn limit_supersolution(p: &StationaryProblem, op: &FracOperator, w: &Field) -> Result<(f64, Field)> {
    check_grid(op, &p.g)?;
    check_grid(op, w)?;
    let aw = op.apply_slice(w.values());
    for j in 0..=DYADIC {
        let m = dyadic(j);
        let ok = w.values().iter().zip(&aw).zip(p.g.values()).all(|((&v, &av), &g)| {
            m * v + p.lambda * (m * av - (m * v).powf(-p.q)) >= g
        });
        if ok {
            return Ok((m, w.scale(m)));
        }
    }
    Err(Error::SearchFailed { what: "limit supersolution M" })
}

/// Supersolution `M w + M′ φ₁` with its constants.
#[derive(Debug, Clone)]
pub struct Supersolution {
    pub big_m: f64,
    pub m_prime: f64,
    /// Boundary-layer level: the layer is `{w ≤ c}`.
    pub layer_c: f64,
    pub field: Field,
}

/// Verifies `A ū − ū^{-q} ≥ μ ū + l` nodally.
pub fn supersolution_holds(q: f64, op: &FracOperator, u: &Field, mu: f64, l: f64) -> bool {
    let au = op.apply_slice(u.values());
    u.values()
        .iter()
        .zip(&au)
        .all(|(&v, &av)| v > 0.0 && av - v.powf(-q) >= mu * v + l)
}

pub fn build_supersolution(
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
    mu: f64,
    l: f64,
    w: &Field,
) -> Result<Supersolution> {
    build_supersolution_from(q, op, eig, mu, l, w, 2.0)
}

pub(crate) fn build_supersolution_from(
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
    mu: f64,
    l: f64,
    w: &Field,
    min_m: f64,
) -> Result<Supersolution> {
    let lambda1 = eig.lambda1;
    if !(mu < lambda1) {
        return Err(invalid(format!("growth bound mu = {mu} must be below lambda1 = {lambda1}")));
    }
    if !(l >= 0.0) {
        return Err(invalid("l must be nonnegative"));
    }
    check_grid(op, w)?;
    check_grid(op, &eig.phi1)?;
    if w.min() <= 0.0 {
        return Err(invalid("pure singular profile must be positive"));
    }
    let phi = eig.phi1.values();
    let wv = w.values();
    let aw = op.apply_slice(wv);
    let aphi = op.apply_slice(phi);
    let w_max = w.max();
    let mu_pos = mu.max(0.0);
    let j0 = (min_m.max(2.0).log2().ceil() as i32).max(1);

    for jm in j0..=DYADIC {
        let big_m = dyadic(jm);
        let gain = big_m - big_m.powf(-q);
        // largest dyadic c with (M − M^{-q}) c^{-q} ≥ μ M c + l
        let layer_c = (-DYADIC..=DYADIC)
            .rev()
            .map(dyadic)
            .find(|&c| gain * c.powf(-q) >= mu_pos * big_m * c + l);
        let Some(layer_c) = layer_c else { continue };
        let c1 = wv
            .iter()
            .zip(phi)
            .filter(|(&wi, _)| wi > layer_c)
            .map(|(_, &p)| p)
            .fold(f64::INFINITY, f64::min);
        let formula = if c1.is_finite() {
            (mu_pos * big_m * w_max + l) / (c1 * (lambda1 - mu))
        } else {
            0.0
        };
        let mut m_prime = if formula > 0.0 {
            dyadic(formula.log2().ceil() as i32)
        } else {
            0.0
        };
        for _ in 0..(2 * DYADIC) {
            let holds = wv.iter().zip(phi).zip(aw.iter().zip(&aphi)).all(|((&wi, &p), (&awi, &ap))| {
                let v = big_m * wi + m_prime * p;
                let av = big_m * awi + m_prime * ap;
                av - v.powf(-q) >= mu * v + l
            });
            if holds {
                let field = w.scale(big_m).add_scaled(m_prime, &eig.phi1)?;
                return Ok(Supersolution {
                    big_m,
                    m_prime,
                    layer_c,
                    field,
                });
            }
            m_prime = if m_prime == 0.0 { dyadic(-DYADIC) } else { 2.0 * m_prime };
            if m_prime > dyadic(DYADIC) {
                break;
            }
        }
    }
    Err(Error::SearchFailed { what: "supersolution M, M'" })
}

/// Ordered pair of stationary sub- and supersolutions with their constants.
#[derive(Debug, Clone, Serialize)]
pub struct Envelopes {
    #[serde(skip)]
    pub lower: Field,
    #[serde(skip)]
    pub upper: Field,
    pub m: f64,
    pub big_m: f64,
    pub m_prime: f64,
    pub layer_c: f64,
    pub mu: f64,
    pub l: f64,
    pub q: f64,
}

impl Envelopes {
    /// `u̲ = mφ₁` against `bound = l`, `ū = Mw + M′φ₁` against `(μ, l)`,
    /// with `m` reduced until `u̲ ≤ ū`.
    pub fn build(q: f64, op: &FracOperator, eig: &EigenPair, w: &Field, mu: f64, l: f64) -> Result<Self> {
        let (mut m, _) = build_subsolution(q, op, eig, l)?;
        let sup = build_supersolution(q, op, eig, mu, l, w)?;
        let phi = &eig.phi1;
        while phi.values().iter().zip(sup.field.values()).any(|(&p, &u)| m * p > u) {
            m *= 0.5;
            if m < dyadic(-DYADIC) {
                return Err(Error::SearchFailed { what: "ordered envelopes" });
            }
        }
        Ok(Self {
            lower: phi.scale(m),
            upper: sup.field,
            m,
            big_m: sup.big_m,
            m_prime: sup.m_prime,
            layer_c: sup.layer_c,
            mu,
            l,
            q,
        })
    }

    /// Shrinks `m` and grows `M` until `u̲ ≤ u0 ≤ ū`.
    pub fn enclose(&mut self, u0: &Field, op: &FracOperator, eig: &EigenPair, w: &Field) -> Result<()> {
        check_grid(op, u0)?;
        if u0.min() <= 0.0 {
            return Err(invalid("initial datum must be positive at every node"));
        }
        let phi = &eig.phi1;
        while phi.values().iter().zip(u0.values()).any(|(&p, &u)| self.m * p > u) {
            self.m *= 0.5;
            if self.m < dyadic(-DYADIC) {
                return Err(Error::SearchFailed { what: "subsolution below the initial datum" });
            }
        }
        self.lower = phi.scale(self.m);
        while u0.values().iter().zip(self.upper.values()).any(|(&u, &v)| u > v) {
            let sup = build_supersolution_from(self.q, op, eig, self.mu, self.l, w, 2.0 * self.big_m)?;
            self.big_m = sup.big_m;
            self.m_prime = sup.m_prime;
            self.layer_c = sup.layer_c;
            self.upper = sup.field;
        }
        Ok(())
    }

    /// Largest violation of `u̲ ≤ u ≤ ū`.
    pub fn violation(&self, u: &Field) -> f64 {
        u.values()
            .iter()
            .zip(self.lower.values().iter().zip(self.upper.values()))
            .fold(0.0f64, |m, (&v, (&lo, &hi))| m.max(lo - v).max(v - hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ascending,
    Descending,
}

#[derive(Debug, Clone)]
pub struct SemilinearSolution {
    pub u: Field,
    pub iterations: usize,
    pub k0: f64,
    pub last_change: f64,
    pub newton_steps: usize,
    /// Largest step against the expected direction (0 when strictly monotone).
    pub monotonicity_defect: f64,
    pub envelopes: Envelopes,
}

/// Monotone iteration for `A u − u^{-q} = f(x, u)` from `u̲` or `ū`.
pub fn solve_q(
    nl: &NonlinearitySpec,
    q: f64,
    op: &FracOperator,
    eig: &EigenPair,
    direction: Direction,
) -> Result<SemilinearSolution> {
    let w = solve_pure_singular(q, op)?.u;
    let env = Envelopes::build(q, op, eig, &w, nl.growth_mu, nl.lower_bound_l)?;
    solve_q_with(nl, q, op, &env, direction)
}

pub fn solve_q_with(
    nl: &NonlinearitySpec,
    q: f64,
    op: &FracOperator,
    env: &Envelopes,
    direction: Direction,
) -> Result<SemilinearSolution> {
    if validate_params(q, op.s())? == ParamRegime::VerySingular {
        return Err(invalid("semilinear scheme needs the standard regime"));
    }
    let grid = op.grid();
    nl.validate(grid.a(), grid.b(), env.upper.max())?;
    let k0 = nl.lipschitz_on(0.0, env.upper.max());
    let res = Resolvent {
        op,
        shift: k0,
        lambda: 1.0,
        q,
    };
    let mut u = match direction {
        Direction::Ascending => env.lower.clone(),
        Direction::Descending => env.upper.clone(),
    };
    let mut newton_steps = 0;
    let mut defect = 0.0f64;
    let mut change = f64::INFINITY;
    for it in 1..=MAX_MONOTONE {
        let next = monotone_step(&res, nl, &u, Some(env.lower.values()))?;
        newton_steps += next.1;
        let next = next.0;
        let step_defect = match direction {
            Direction::Ascending => u.values().iter().zip(next.values()).fold(0.0f64, |m, (a, b)| m.max(a - b)),
            Direction::Descending => u.values().iter().zip(next.values()).fold(0.0f64, |m, (a, b)| m.max(b - a)),
        };
        defect = defect.max(step_defect);
        if step_defect > 1e-10 {
            return Err(Error::MonotonicityViolation {
                iteration: it,
                violation: step_defect,
            });
        }
        change = next.dist_inf(&u)?;
        u = next;
        if change < TOL_ITER {
            return Ok(SemilinearSolution {
                u,
                iterations: it,
                k0,
                last_change: change,
                newton_steps,
                monotonicity_defect: defect,
                envelopes: env.clone(),
            });
        }
    }
    Err(Error::IterationCap {
        iterations: MAX_MONOTONE,
        change,
    })
}

/// One step `A v − v^{-q} + K₀ v = f(x, u) + K₀ u`, Newton warm-started at `u`.
fn monotone_step(
    res: &Resolvent<'_>,
    nl: &NonlinearitySpec,
    u: &Field,
    barrier: Option<&[f64]>,
) -> Result<(Field, usize)> {
    let fu = nl.eval_field(u);
    let rhs: Vec<f64> = fu.values().iter().zip(u.values()).map(|(f, v)| f + res.shift * v).collect();
    let (v, steps, _) = res.newton(&rhs, 0.0, u.values().to_vec(), barrier)?;
    Ok((Field::from_vec_unchecked(u.grid().clone(), v), steps))
}

/// Applies one monotone-iteration step to `u` (used to check fixed points).
pub fn semilinear_step(nl: &NonlinearitySpec, q: f64, op: &FracOperator, k0: f64, u: &Field) -> Result<Field> {
    check_grid(op, u)?;
    let res = Resolvent {
        op,
        shift: k0,
        lambda: 1.0,
        q,
    };
    Ok(monotone_step(&res, nl, u, None)?.0)
}

/// `max_i |A u − u^{-q} − f(x, u)|`.
pub fn semilinear_residual(nl: &NonlinearitySpec, q: f64, op: &FracOperator, u: &Field) -> Result<f64> {
    let au = op.apply(u)?;
    let fu = nl.eval_field(u);
    Ok(u.values()
        .iter()
        .zip(au.values())
        .zip(fu.values())
        .fold(0.0f64, |m, ((&v, &av), &f)| m.max((av - v.powf(-q) - f).abs())))
}

/// `max_i |u + λ(Au − (u+ε)^{-q}) − g|`.
pub fn stationary_residual(p: &StationaryProblem, op: &FracOperator, u: &Field) -> Result<f64> {
    check_grid(op, u)?;
    let (r, _) = resolvent_for(p, op).residual(u.values(), p.epsilon, p.g.values());
    Ok(r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
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
    fn regime_examples() {
        assert_eq!(validate_params(1.0, 0.5).unwrap(), ParamRegime::Standard);
        assert_eq!(validate_params(10.0, 0.9).unwrap(), ParamRegime::VerySingular);
        assert_eq!(validate_params(0.5, 0.25).unwrap(), ParamRegime::Standard);
        assert!(validate_params(0.0, 0.5).is_err());
    }

    #[test]
    fn cone_exponents_follow_regime() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let e = ConeEnvelope::unit(0.5, 0.3, &g);
        assert_eq!((e.regime, e.exponent, e.log_factor), (ConeRegime::QBelow1, 0.3, false));
        let e = ConeEnvelope::unit(1.0, 0.3, &g);
        assert_eq!((e.regime, e.exponent, e.log_factor), (ConeRegime::QEqual1, 0.3, true));
        assert_eq!(e.r, 2.0);
        let e = ConeEnvelope::unit(3.0, 0.4, &g);
        assert!((e.exponent - 0.2).abs() < 1e-15);
        assert!(e.clone().with_constants(2.0, 1.0).is_err());
    }

    #[test]
    fn regularized_matches_fixed_point_iteration() {
        let (op, _) = setup(32, 0.3);
        let grid = op.grid().clone();
        let (lambda, q, eps) = (0.05, 0.7, 1.0);
        let p = StationaryProblem::new(lambda, q, Field::zeros(grid.clone()), eps).unwrap();
        let sol = solve_regularized(&p, &op).unwrap();
        assert!(sol.u.min() > 0.0);
        assert!(stationary_residual(&p, &op, &sol.u).unwrap() <= 1e-9);
        // u ← (I + λA)^{-1}(λ(u+ε)^{-q}), a contraction for small λ
        let mut u = Field::zeros(grid.clone());
        for _ in 0..200 {
            let rhs = u.map(|v| lambda * (v + eps).powf(-q));
            u = op.solve_linear(&rhs.scale(1.0 / lambda), 1.0 / lambda).unwrap();
        }
        assert!(u.dist_inf(&sol.u).unwrap() < 1e-10);
    }

    #[test]
    fn limit_problem_residual_and_barrier() {
        let (op, eig) = setup(64, 0.4);
        let grid = op.grid().clone();
        let p = StationaryProblem::new(1.0, 0.5, Field::constant(grid, 0.5), 0.0).unwrap();
        let sol = solve_s(&p, &op).unwrap();
        assert!(stationary_residual(&p, &op, &sol.u).unwrap() <= 1e-8);
        assert_eq!(*sol.report.eps_schedule.last().unwrap(), 0.0);
        let (_, lower) = limit_subsolution(&p, &op, &eig).unwrap();
        let w = solve_pure_singular(0.5, &op).unwrap().u;
        let (_, upper) = limit_supersolution(&p, &op, &w).unwrap();
        assert!(lower.values().iter().zip(sol.u.values()).all(|(a, b)| a <= b));
        assert!(upper.values().iter().zip(sol.u.values()).all(|(a, b)| a >= b));
    }

    #[test]
    fn schedule_independence() {
        let (op, _) = setup(48, 0.3);
        let grid = op.grid().clone();
        let p = StationaryProblem::new(0.7, 2.0, Field::from_fn(grid, |x| x.sin()), 0.0).unwrap();
        let half = solve_s(&p, &op).unwrap();
        let quarter = solve_s_with(
            &p,
            &op,
            &Continuation {
                ratio: 0.25,
                ..Continuation::default()
            },
        )
        .unwrap();
        assert!(half.u.dist_inf(&quarter.u).unwrap() < 2.0 * TOL_CONT);
    }

    #[test]
    fn negative_data_lowers_first_epsilon() {
        let (op, _) = setup(32, 0.3);
        let grid = op.grid().clone();
        let p = StationaryProblem::new(0.1, 1.0, Field::constant(grid, -5.0), 0.0).unwrap();
        let sol = solve_s(&p, &op).unwrap();
        assert!(sol.report.eps_schedule[0] < 1.0);
        assert!(sol.u.min() > 0.0);
    }

    #[test]
    fn very_singular_rejected_by_limit_solver() {
        let (op, _) = setup(16, 0.9);
        let grid = op.grid().clone();
        let p = StationaryProblem::new(1.0, 10.0, Field::zeros(grid), 0.0).unwrap();
        assert!(solve_s(&p, &op).is_err());
    }

    #[test]
    fn pure_singular_residual() {
        let (op, _) = setup(64, 0.35);
        for q in [0.5, 1.0, 3.0] {
            let w = solve_pure_singular(q, &op).unwrap().u;
            let aw = op.apply(&w).unwrap();
            let sing = w.map(|v| v.powf(-q));
            let r = aw.dist_inf(&sing).unwrap();
            assert!(r <= 1e-7 * sing.norm_inf(), "q = {q}: {r}");
        }
    }

    #[test]
    fn subsolution_search() {
        let (op, eig) = setup(64, 0.3);
        let mut prev = f64::INFINITY;
        for bound in [0.0, 0.5, 2.0, 10.0] {
            let (m, field) = build_subsolution(1.5, &op, &eig, bound).unwrap();
            assert!(m > 0.0 && m <= prev);
            prev = m;
            let af = op.apply(&field).unwrap();
            for (a, v) in af.values().iter().zip(field.values()) {
                assert!(a - v.powf(-1.5) <= -bound);
            }
        }
    }

    #[test]
    fn supersolution_search() {
        let (op, eig) = setup(64, 0.3);
        for (q, mu, l) in [(0.5, 0.0, 0.0), (1.0, 0.5 * eig.lambda1, 1.0), (3.0, 0.9 * eig.lambda1, 0.2)] {
            let w = solve_pure_singular(q, &op).unwrap().u;
            let sup = build_supersolution(q, &op, &eig, mu, l, &w).unwrap();
            assert!(sup.big_m > 1.0);
            assert!(supersolution_holds(q, &op, &sup.field, mu, l));
            let (_, sub) = build_subsolution(q, &op, &eig, l).unwrap();
            assert!(sub.values().iter().zip(sup.field.values()).all(|(a, b)| a <= b));
        }
        let w = solve_pure_singular(1.0, &op).unwrap().u;
        assert!(build_supersolution(1.0, &op, &eig, eig.lambda1, 0.0, &w).is_err());
    }

    fn saturating(mu: f64, c: f64) -> NonlinearitySpec {
        NonlinearitySpec::new(
            "saturating",
            move |_, y| mu * y / (1.0 + y) + c,
            move |_, z| mu * (z - z.ln_1p()) + c * z,
            move |_, _| mu,
            c.abs(),
            mu,
            c >= 0.0,
        )
        .unwrap()
    }

    #[test]
    fn nonlinearity_validation() {
        assert!(saturating(1.0, 0.2).validate(-1.0, 1.0, 5.0).is_ok());
        let lying = NonlinearitySpec::new("lying", |_, y| y * y, |_, z| z * z * z / 3.0, |_, hi| 2.0 * hi, 0.0, 100.0, true)
            .unwrap();
        assert!(lying.validate(-1.0, 1.0, 5.0).is_err());
        let bad_lip = NonlinearitySpec::new("lip", |_, y| 2.0 * y, |_, z| z * z, |_, _| 1.0, 0.0, 2.0, true).unwrap();
        assert!(bad_lip.validate(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn semilinear_ascending_descending_agree() {
        let (op, eig) = setup(48, 0.35);
        let nl = saturating(0.5 * eig.lambda1, 0.3);
        let up = solve_q(&nl, 0.8, &op, &eig, Direction::Ascending).unwrap();
        let down = solve_q(&nl, 0.8, &op, &eig, Direction::Descending).unwrap();
        assert!(up.u.dist_inf(&down.u).unwrap() < 1e-6);
        assert!(semilinear_residual(&nl, 0.8, &op, &up.u).unwrap() < 1e-6);
        let again = semilinear_step(&nl, 0.8, &op, up.k0, &up.u).unwrap();
        assert!(again.dist_inf(&up.u).unwrap() < TOL_ITER);
        assert!(up.envelopes.violation(&up.u) <= 1e-10);
    }
}
