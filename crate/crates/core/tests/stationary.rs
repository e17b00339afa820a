use std::sync::Arc;

use fracsing::catalog::{self, Params};
use fracsing::stationary::*;
use fracsing::{Field, FracOperator, Grid};
use proptest::prelude::*;

fn op(n: usize, s: f64) -> FracOperator {
    FracOperator::assemble(Arc::new(Grid::new(-1.0, 1.0, n).unwrap()), s).unwrap()
}

fn smooth(g: &Arc<Grid>, c: f64, a1: f64, a2: f64) -> Field {
    Field::from_fn(g.clone(), |x| c + a1 * (std::f64::consts::PI * x).sin() + a2 * (2.0 * x).cos())
}

// s < 1/2 keeps every q in the standard regime
fn standard() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.2f64..5.0, 0.2f64..3.0, 0.1f64..0.49)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn resolvent_operator_is_strictly_monotone(
        (lambda, q, s) in standard(),
        base in prop::collection::vec(0.05f64..2.0, 24),
        bump in prop::collection::vec(0.0f64..1.0, 24),
    ) {
        prop_assume!(bump.iter().any(|&b| b > 1e-3));
        let a = op(24, s);
        let g = a.grid().clone();
        let u = Field::new(g.clone(), base.clone()).unwrap();
        let v = Field::new(g, base.iter().zip(&bump).map(|(x, b)| x + b).collect()).unwrap();
        let map = |w: &Field| {
            let aw = a.apply(w).unwrap();
            w.values().iter().zip(aw.values()).map(|(&x, &ax)| x + lambda * (ax - x.powf(-q))).collect::<Vec<_>>()
        };
        let (mu, mv) = (map(&u), map(&v));
        let pairing: f64 = (0..24).map(|i| (mv[i] - mu[i]) * (v.values()[i] - u.values()[i])).sum();
        prop_assert!(pairing > 0.0);
    }

    #[test]
    fn ordered_data_give_ordered_solutions(
        (lambda, q, s) in standard(),
        c in -0.5f64..2.0, a1 in -0.5f64..0.5, a2 in -0.5f64..0.5,
        height in 0.0f64..1.0, x0 in -1.0f64..1.0,
    ) {
        let a = op(32, s);
        let g = a.grid().clone();
        let g1 = smooth(&g, c, a1, a2);
        let g2 = g1.add_scaled(1.0, &Field::from_fn(g, |x| height * (-(x - x0).powi(2) / 0.1).exp())).unwrap();
        let u1 = solve_s(&StationaryProblem::new(lambda, q, g1, 0.0).unwrap(), &a).unwrap().u;
        let u2 = solve_s(&StationaryProblem::new(lambda, q, g2, 0.0).unwrap(), &a).unwrap().u;
        let worst = u1.values().iter().zip(u2.values()).fold(0.0f64, |m, (x, y)| m.max(x - y));
        prop_assert!(worst <= 1e-8, "violation {worst}");
    }

    #[test]
    fn regularized_solutions_grow_as_epsilon_shrinks(
        (lambda, q, s) in standard(),
        c in -0.5f64..2.0, a1 in -0.5f64..0.5,
    ) {
        let a = op(32, s);
        let g = smooth(a.grid(), c, a1, 0.0);
        let eps: Vec<f64> = (0..=20).map(|j| 0.5f64.powi(j)).collect();
        let path = solve_regularized_path(&StationaryProblem::new(lambda, q, g, 0.0).unwrap(), &a, &eps).unwrap();
        for w in path.windows(2) {
            let v = w[0].values().iter().zip(w[1].values()).fold(0.0f64, |m, (x, y)| m.max(x - y));
            prop_assert!(v <= 1e-10, "violation {v}");
        }
    }
}

#[test]
fn schedules_reach_the_same_limit() {
    let a = op(64, 0.4);
    let p = StationaryProblem::new(1.0, 0.8, Field::constant(a.grid().clone(), 1.0), 0.0).unwrap();
    let half = solve_s_with(&p, &a, &Continuation { ratio: 0.5, ..Default::default() }).unwrap();
    let quarter = solve_s_with(&p, &a, &Continuation { ratio: 0.25, ..Default::default() }).unwrap();
    assert!(half.u.dist_inf(&quarter.u).unwrap() <= 2.0 * TOL_CONT);
}

#[test]
fn monotone_scheme_limit_is_a_fixed_point() {
    let a = op(64, 0.4);
    let eig = a.eigen_principal().unwrap();
    let mut pr = Params::new();
    pr.insert("mu".into(), 0.5 * eig.lambda1);
    let nl = catalog::nonlinearity("saturating", &pr).unwrap();
    let sol = solve_q(&nl, 0.5, &a, &eig, Direction::Ascending).unwrap();
    let next = semilinear_step(&nl, 0.5, &a, sol.k0, &sol.u).unwrap();
    assert!(next.dist_inf(&sol.u).unwrap() < TOL_ITER);
    assert!(sol.envelopes.violation(&sol.u) <= 1e-10);
}

#[test]
fn limit_solution_lies_in_its_cone() {
    let a = op(128, 0.4);
    let g = a.grid().clone();
    for q in [0.5, 1.0, 2.0] {
        let p = StationaryProblem::new(1.0, q, Field::constant(g.clone(), 1.0), 0.0).unwrap();
        let u = solve_s(&p, &a).unwrap().u;
        let rep = fracsing::analysis::cone_check(&u, &ConeEnvelope::unit(q, 0.4, &g)).unwrap();
        assert!(rep.pass && rep.k1_hat > 0.0 && rep.k2_hat < f64::INFINITY);
        assert!(stationary_residual(&p, &a, &u).unwrap() < 1e-6);
    }
}
