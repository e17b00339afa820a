use std::sync::Arc;

use fracsing::catalog::{self, Params};
use fracsing::evolution::*;
use fracsing::stationary::solve_pure_singular;
use fracsing::{Field, FracOperator, Grid};
use proptest::prelude::*;

fn op(n: usize, s: f64) -> FracOperator {
    FracOperator::assemble(Arc::new(Grid::new(-1.0, 1.0, n).unwrap()), s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn implicit_step_preserves_order(
        s in 0.15f64..0.85, q in 0.2f64..3.0, dt in 0.01f64..1.0,
        base in prop::collection::vec(0.05f64..2.0, 20),
        lift in prop::collection::vec(0.0f64..0.5, 20),
        h in prop::collection::vec(-1.0f64..1.0, 20),
        dh in prop::collection::vec(0.0f64..1.0, 20),
    ) {
        let a = op(20, s);
        let g = a.grid().clone();
        let u1 = Field::new(g.clone(), base.clone()).unwrap();
        let u2 = Field::new(g.clone(), base.iter().zip(&lift).map(|(x, y)| x + y).collect()).unwrap();
        let h1 = Field::new(g.clone(), h.clone()).unwrap();
        let h2 = Field::new(g, h.iter().zip(&dh).map(|(x, y)| x + y).collect()).unwrap();
        let (v1, _) = step_implicit(&u1, &h1, dt, q, &a, None).unwrap();
        let (v2, _) = step_implicit(&u2, &h2, dt, q, &a, None).unwrap();
        let worst = v1.values().iter().zip(v2.values()).fold(0.0f64, |m, (x, y)| m.max(x - y));
        prop_assert!(worst <= 1e-10, "order violated by {worst}");
    }
}

/// `u(t, x) = (1 + t)(1 − x²)^s` with the discrete source that makes it an
/// exact solution of the continuous-in-time problem on the grid.
fn manufactured_error(n: usize, steps: usize) -> f64 {
    let (s, q, t_final) = (0.4, 0.5, 0.5);
    let a = op(n, s);
    let g = a.grid().clone();
    let eig = a.eigen_principal().unwrap();
    let profile = Field::from_fn(g.clone(), |x| (1.0 - x * x).powf(s));
    let exact = |t: f64| profile.scale(1.0 + t);
    let dt = t_final / steps as f64;
    let forcing: Vec<Field> = (1..=steps)
        .map(|k| {
            let u = exact(k as f64 * dt);
            let au = a.apply(&u).unwrap();
            let v = u
                .values()
                .iter()
                .zip(au.values())
                .zip(profile.values())
                .map(|((&ui, &ai), &pi)| pi + ai - ui.powf(-q))
                .collect();
            Field::new(g.clone(), v).unwrap()
        })
        .collect();
    let bound = forcing.iter().map(|f| f.norm_inf()).fold(0.0, f64::max);
    let u0 = exact(0.0);
    let w = solve_pure_singular(q, &a).unwrap().u;
    let env = envelopes_for_source(q, &a, &eig, &w, bound, &u0).unwrap();
    let tr = evolve_g_with(&u0, forcing, dt, q, &a, env).unwrap();
    assert!(tr.envelope_violation <= 1e-10);
    tr.last().dist_inf(&exact(t_final)).unwrap()
}

#[test]
fn manufactured_solution_is_reproduced() {
    let errs: Vec<f64> = [(32, 8), (64, 16), (128, 32)].iter().map(|&(n, k)| manufactured_error(n, k)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    // backward Euler in time: roughly first order
    assert!(errs[1] / errs[2] > 1.5, "{errs:?}");
}

#[test]
fn energy_estimate_holds_for_catalog_sources() {
    let (s, q) = (0.4, 0.5);
    let a = op(64, s);
    let eig = a.eigen_principal().unwrap();
    let u0 = eig.phi1.scale(0.5);
    for name in ["constant", "sinusoidal", "bump", "separable"] {
        let src = catalog::source(name, &Params::new()).unwrap();
        let tr = evolve_g(&u0, &src, 1.0, 20, q, &a, &eig).unwrap();
        let worst = energy_inequality_slack(&tr, src.bound).into_iter().fold(f64::INFINITY, f64::min);
        assert!(worst >= -1e-8, "{name}: slack {worst}");
        assert!(tr.envelope_violation <= 1e-10, "{name}");
        assert!(energy_identity_residual(&tr).iter().all(|&r| r <= 1e-8), "{name}");
    }
}

#[test]
fn gap_study_is_degenerate_for_a_steady_state() {
    let (s, q) = (0.4, 0.5);
    let a = op(48, s);
    let eig = a.eigen_principal().unwrap();
    let nl = catalog::nonlinearity("zero", &Params::new()).unwrap();
    let steady = fracsing::stationary::solve_q(&nl, q, &a, &eig, fracsing::stationary::Direction::Ascending).unwrap().u;
    let traces: Vec<_> = [4, 8, 16, 32]
        .iter()
        .map(|&k| evolve_g(&steady, &SourceSpec::zero(), 1.0, k, q, &a, &eig).unwrap())
        .collect();
    let study = fracsing::analysis::gap_scaling_study(&traces).unwrap();
    assert!(study.gaps.iter().all(|&g| g < 1e-7), "{:?}", study.gaps);
}
