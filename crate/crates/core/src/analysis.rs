//! Post-hoc measurements on computed fields and traces.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::evolution::EvolutionTrace;
use crate::field::Field;
use crate::fraclap::{gagliardo_seminorm, FracOperator};
use crate::grid::Grid;
use crate::stationary::{
    solve_regularized, validate_params, ConeEnvelope, ParamRegime, StationaryProblem,
};

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub alpha_hat: f64,
    pub r_squared: f64,
    /// `(min δ, max δ)` over the nodes used.
    pub window: (f64, f64),
    pub nodes_used: usize,
    pub with_log: bool,
}

/// Options for [`boundary_exponent_fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Window `δ < rho`; defaults to `0.1 (b − a)`.
    pub rho: Option<f64>,
    /// Nodes skipped next to each endpoint.
    pub skip: usize,
    /// Divide by `ln^{1/2}(r/δ^s)` with `r = 2(b − a)` before fitting.
    pub log_factor_s: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rho: None,
            skip: 2,
            log_factor_s: None,
        }
    }
}

/// Least-squares slope of `ln u` against `ln δ` in the boundary layer.
pub fn boundary_exponent_fit(u: &Field, opts: &FitOptions) -> Result<ExponentFit> {
    let grid = u.grid();
    let n = grid.len();
    let rho = opts.rho.unwrap_or(0.1 * grid.width());
    let r = 2.0 * grid.width();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in opts.skip..n.saturating_sub(opts.skip) {
        let d = grid.delta()[i];
        if d >= rho {
            continue;
        }
        let v = u.values()[i];
        if !(v > 0.0) {
            return Err(invalid(format!("field is not positive at node {i}")));
        }
        let v = match opts.log_factor_s {
            Some(s) => v / (r / d.powf(s)).ln().sqrt(),
            None => v,
        };
        xs.push(d.ln());
        ys.push(v.ln());
    }
    if xs.len() < 8 {
        return Err(Error::Analysis(format!("only {} nodes in the fit window", xs.len())));
    }
    let (slope, r_squared) = linear_fit(&xs, &ys);
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min).exp();
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(ExponentFit {
        alpha_hat: slope,
        r_squared,
        window: (lo, hi),
        nodes_used: xs.len(),
        with_log: opts.log_factor_s.is_some(),
    })
}

/// Slope and coefficient of determination of the least-squares line.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    (slope, r2)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub k1_hat: f64,
    pub k2_hat: f64,
    pub pass: bool,
}

/// Extreme ratios `u / profile` over all nodes.
pub fn cone_check(u: &Field, env: &ConeEnvelope) -> Result<ConeReport> {
    let grid = u.grid();
    let (mut k1, mut k2) = (f64::INFINITY, 0.0f64);
    for (i, (&v, &d)) in u.values().iter().zip(grid.delta()).enumerate() {
        if !(v > 0.0) {
            return Err(invalid(format!("field is not positive at node {i}")));
        }
        let ratio = v / env.profile(d);
        k1 = k1.min(ratio);
        k2 = k2.max(ratio);
    }
    let pass = k1.is_finite() && k2.is_finite() && k1 > 0.0;
    Ok(ConeReport {
        k1_hat: k1,
        k2_hat: k2,
        pass,
    })
}

/// `max(0, max_i (u_i − v_i))`.
pub fn comparison_check(u: &Field, v: &Field) -> Result<f64> {
    u.ensure_same_grid(v)?;
    Ok(u.values()
        .iter()
        .zip(v.values())
        .fold(0.0f64, |m, (a, b)| m.max(a - b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionVariant {
    /// `‖u − v‖ ≤ ‖u₀ − v₀‖ + Σ Δt ‖h_j − b_j‖`.
    Source,
    /// `‖u − v‖ ≤ e^{α t} ‖u₀ − v₀‖`.
    Lipschitz { alpha: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub slack: Vec<f64>,
    pub min_slack: f64,
}

/// Slack (right side minus left side) of the L^∞ contraction estimate at
/// every `t_k`. The source variant uses the forcings the traces were driven by.
pub fn contraction_check(u: &EvolutionTrace, v: &EvolutionTrace, variant: ContractionVariant) -> Result<ContractionReport> {
    if u.n_steps != v.n_steps || (u.dt - v.dt).abs() > 1e-14 * u.dt {
        return Err(Error::Analysis("traces have different time grids".into()));
    }
    u.snapshots[0].ensure_same_grid(&v.snapshots[0])?;
    let d0 = u.snapshots[0].dist_inf(&v.snapshots[0])?;
    let mut slack = Vec::with_capacity(u.n_steps + 1);
    let mut integral = 0.0;
    for k in 0..=u.n_steps {
        if k > 0 {
            integral += u.dt * u.forcing[k - 1].dist_inf(&v.forcing[k - 1])?;
        }
        let lhs = u.snapshots[k].dist_inf(&v.snapshots[k])?;
        let rhs = match variant {
            ContractionVariant::Source => d0 + integral,
            ContractionVariant::Lipschitz { alpha } => {
                if !(alpha >= 0.0) {
                    return Err(invalid("alpha must be nonnegative"));
                }
                (alpha * u.time(k)).exp() * d0
            }
        };
        slack.push(rhs - lhs);
    }
    let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ContractionReport { slack, min_slack })
}

/// Minimum over node pairs of `(u_i − u_j)² − (v_i − v_j)(u_i²/v_i − u_j²/v_j)`.
pub fn picone_check(u: &Field, v: &Field) -> Result<f64> {
    u.ensure_same_grid(v)?;
    if let Some(i) = v.values().iter().position(|&x| !(x > 0.0)) {
        return Err(invalid(format!("v is not positive at node {i}")));
    }
    if let Some(i) = u.values().iter().position(|&x| x < 0.0) {
        return Err(invalid(format!("u is negative at node {i}")));
    }
    let ratio: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a * a / b).collect();
    let (uv, vv) = (u.values(), v.values());
    let mut min = f64::INFINITY;
    for i in 0..uv.len() {
        for j in 0..uv.len() {
            if i == j {
                continue;
            }
            let du = uv[i] - uv[j];
            let m = du * du - (vv[i] - vv[j]) * (ratio[i] - ratio[j]);
            min = min.min(m);
        }
    }
    Ok(min)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapStudy {
    pub dts: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `None` when every gap vanishes.
    pub slope: Option<f64>,
    pub pass: bool,
}

/// Fits `ln max_k ‖u^k − u^{k−1}‖_{L²}` against `ln Δt`.
pub fn gap_scaling_study(traces: &[EvolutionTrace]) -> Result<GapStudy> {
    if traces.len() < 4 {
        return Err(invalid(format!("need at least 4 runs, got {}", traces.len())));
    }
    let dts: Vec<f64> = traces.iter().map(|t| t.dt).collect();
    let gaps: Vec<f64> = traces.iter().map(|t| t.max_increment()).collect();
    if gaps.iter().all(|&g| g < 1e-14) {
        return Ok(GapStudy {
            dts,
            gaps,
            slope: None,
            pass: true,
        });
    }
    if gaps.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::Analysis("mixed zero and nonzero gaps".into()));
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    Ok(GapStudy {
        dts,
        gaps,
        slope: Some(slope),
        pass: slope >= 0.4,
    })
}

/// `max{1, (1 − 1/(2s))(q + 1)/2}`.
pub fn beta_threshold(q: f64, s: f64) -> f64 {
    ((1.0 - 0.5 / s) * (q + 1.0) / 2.0).max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeminormStudy {
    pub q: f64,
    pub s: f64,
    pub beta: f64,
    pub threshold: f64,
    pub regime: ParamRegime,
    pub epsilon: f64,
    pub ns: Vec<usize>,
    pub u_seminorm: Vec<f64>,
    pub u_beta_seminorm: Vec<f64>,
    pub u_ratio: Vec<f64>,
    pub u_beta_ratio: Vec<f64>,
}

/// Gagliardo seminorms of `u` and `u^β` along a refinement family, with `u`
/// the regularized solution of `u + λ(Au − (u+ε)^{-q}) = g` at fixed ε.
#[allow(clippy::too_many_arguments)]
pub fn seminorm_refinement_study(
    q: f64,
    s: f64,
    beta: f64,
    ns: &[usize],
    domain: (f64, f64),
    lambda: f64,
    g: f64,
    epsilon: f64,
) -> Result<SeminormStudy> {
    let regime = validate_params(q, s)?;
    let threshold = beta_threshold(q, s);
    if !(beta > threshold) {
        return Err(invalid(format!("beta = {beta} must exceed the threshold {threshold}")));
    }
    if ns.len() < 2 {
        return Err(invalid("need at least two refinement levels"));
    }
    let mut u_semi = Vec::new();
    let mut ub_semi = Vec::new();
    for &n in ns {
        let grid = Arc::new(Grid::new(domain.0, domain.1, n)?);
        let op = FracOperator::assemble(grid.clone(), s)?;
        let p = StationaryProblem::new(lambda, q, Field::constant(grid, g), epsilon)?;
        let u = solve_regularized(&p, &op)?.u;
        u_semi.push(gagliardo_seminorm(&u, s));
        ub_semi.push(gagliardo_seminorm(&u.map(|v| v.max(0.0).powf(beta)), s));
    }
    let ratios = |v: &[f64]| v.windows(2).map(|w| w[1] / w[0]).collect::<Vec<_>>();
    Ok(SeminormStudy {
        q,
        s,
        beta,
        threshold,
        regime,
        epsilon,
        ns: ns.to_vec(),
        u_ratio: ratios(&u_semi),
        u_beta_ratio: ratios(&ub_semi),
        u_seminorm: u_semi,
        u_beta_seminorm: ub_semi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(-1.0, 1.0, n).unwrap())
    }

    #[test]
    fn exact_power_law_fit() {
        let g = grid(400);
        let u = Field::new(g.clone(), g.delta().iter().map(|d| d.powf(0.37)).collect()).unwrap();
        let fit = boundary_exponent_fit(&u, &FitOptions::default()).unwrap();
        assert!((fit.alpha_hat - 0.37).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let d = Field::new(g.clone(), g.delta().to_vec()).unwrap();
        assert!((boundary_exponent_fit(&d, &FitOptions::default()).unwrap().alpha_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_fit_removes_factor() {
        let g = grid(400);
        let s = 0.3;
        let r = 2.0 * g.width();
        let u = Field::new(g.clone(), g.delta().iter().map(|d| d.powf(s) * (r / d.powf(s)).ln().sqrt()).collect()).unwrap();
        let opts = FitOptions {
            log_factor_s: Some(s),
            ..FitOptions::default()
        };
        assert!((boundary_exponent_fit(&u, &opts).unwrap().alpha_hat - s).abs() < 1e-10);
    }

    #[test]
    fn fit_needs_window_nodes() {
        let g = grid(20);
        let u = Field::constant(g, 1.0);
        assert!(boundary_exponent_fit(&u, &FitOptions::default()).is_err());
    }

    #[test]
    fn cone_scaling() {
        let g = grid(64);
        let env = ConeEnvelope::unit(3.0, 0.4, &g);
        let u = Field::new(g.clone(), g.delta().iter().map(|&d| 2.0 * env.profile(d)).collect()).unwrap();
        let rep = cone_check(&u, &env).unwrap();
        assert!((rep.k1_hat - 2.0).abs() < 1e-14 && (rep.k2_hat - 2.0).abs() < 1e-14 && rep.pass);
        let mut bad = u.clone();
        bad.values_mut()[10] = 0.0;
        assert!(cone_check(&bad, &env).is_err());
    }

    #[test]
    fn comparison_examples() {
        let g = grid(8);
        let v = Field::from_fn(g.clone(), |x| x * x);
        assert_eq!(comparison_check(&v, &v).unwrap(), 0.0);
        assert_eq!(comparison_check(&v.map(|y| y - 1.0), &v).unwrap(), 0.0);
        let mut u = v.clone();
        u.values_mut()[3] += 0.5;
        assert!((comparison_check(&u, &v).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn picone_examples() {
        let g = grid(30);
        let v = Field::from_fn(g.clone(), |x| 1.5 - x * x);
        assert!(picone_check(&v.scale(3.0), &v).unwrap().abs() < 1e-12);
        assert_eq!(picone_check(&Field::zeros(g.clone()), &v).unwrap(), 0.0);
        assert!(picone_check(&v, &Field::zeros(g)).is_err());
    }

    #[test]
    fn threshold_values() {
        assert_eq!(beta_threshold(1.0, 0.3), 1.0);
        assert!((beta_threshold(10.0, 0.9) - (1.0 - 1.0 / 1.8) * 5.5).abs() < 1e-14);
        assert!(seminorm_refinement_study(10.0, 0.9, 2.0, &[16, 32], (-1.0, 1.0), 1.0, 0.0, 1e-6).is_err());
    }
}
