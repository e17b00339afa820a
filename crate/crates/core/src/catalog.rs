//! Built-in nonlinearities `f(x, y)` and sources `h(t, x)`, selectable by name.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::evolution::SourceSpec;
use crate::stationary::NonlinearitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Nonlinearity,
    Source,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub kind: EntryKind,
    pub name: &'static str,
    pub formula: &'static str,
    pub params: Vec<ParamSchema>,
    /// Hypotheses satisfied at the default parameters.
    pub hypotheses: Vec<String>,
    /// Declared flag at the default parameters (nonlinearities only).
    pub monotone_quotient: Option<bool>,
}

pub type Params = BTreeMap<String, f64>;

const fn p(name: &'static str, default: f64, doc: &'static str) -> ParamSchema {
    ParamSchema { name, default, doc }
}

fn nonlinearity_schemas() -> Vec<(&'static str, &'static str, Vec<ParamSchema>)> {
    vec![
        (
            "saturating",
            "f(x,y) = mu*y/(1+y) + c",
            vec![p("mu", 0.5, "saturation level"), p("c", 0.2, "constant offset")],
        ),
        ("linear", "f(x,y) = mu*y + c", vec![p("mu", 0.5, "slope, >= 0"), p("c", 0.2, "offset")]),
        (
            "profile",
            "f(x,y) = c*(1 + a*sin(pi*x))",
            vec![p("c", 1.0, "amplitude"), p("a", 0.5, "modulation")],
        ),
        (
            "oscillating",
            "f(x,y) = c + a*sin(omega*y)",
            vec![p("c", 0.2, "offset"), p("a", 0.3, "amplitude"), p("omega", 4.0, "frequency")],
        ),
        ("zero", "f(x,y) = 0", vec![]),
    ]
}

fn source_schemas() -> Vec<(&'static str, &'static str, Vec<ParamSchema>)> {
    vec![
        ("constant", "h(t,x) = c", vec![p("c", 1.0, "value")]),
        (
            "sinusoidal",
            "h(t,x) = c + a*sin(omega*t)",
            vec![p("c", 1.0, "mean"), p("a", 0.5, "amplitude"), p("omega", 2.0 * PI, "angular frequency")],
        ),
        (
            "bump",
            "h(t,x) = c*exp(-((x-x0)/width)^2)",
            vec![p("c", 1.0, "height"), p("x0", 0.0, "centre"), p("width", 0.3, "width, > 0")],
        ),
        (
            "separable",
            "h(t,x) = c + a*sin(omega*t)*cos(k*x)",
            vec![
                p("c", 1.0, "mean"),
                p("a", 0.5, "amplitude"),
                p("omega", 2.0 * PI, "angular frequency"),
                p("k", 0.5 * PI, "wave number"),
            ],
        ),
    ]
}

/// Resolves `given` against the schema of `name`, filling defaults.
fn resolve(
    kind: &str,
    name: &str,
    schemas: Vec<(&'static str, &'static str, Vec<ParamSchema>)>,
    given: &Params,
) -> Result<Params> {
    let (_, _, schema) = schemas
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| invalid(format!("unknown {kind} '{name}'")))?;
    let mut out = Params::new();
    for ps in &schema {
        out.insert(ps.name.to_string(), ps.default);
    }
    for (k, &v) in given {
        if !out.contains_key(k) {
            return Err(invalid(format!("{kind} '{name}' has no parameter '{k}'")));
        }
        if !v.is_finite() {
            return Err(invalid(format!("{kind} '{name}': parameter '{k}' is not finite")));
        }
        out.insert(k.clone(), v);
    }
    Ok(out)
}

/// Parameters of `name` with defaults filled in.
pub fn nonlinearity_params(name: &str, given: &Params) -> Result<Params> {
    resolve("nonlinearity", name, nonlinearity_schemas(), given)
}

pub fn source_params(name: &str, given: &Params) -> Result<Params> {
    resolve("source", name, source_schemas(), given)
}

/// Builds a catalog nonlinearity.
pub fn nonlinearity(name: &str, given: &Params) -> Result<NonlinearitySpec> {
    let pr = nonlinearity_params(name, given)?;
    let g = |k: &str| pr[k];
    match name {
        "saturating" => {
            let (mu, c) = (g("mu"), g("c"));
            NonlinearitySpec::new(
                name,
                move |_, y| mu * y / (1.0 + y) + c,
                move |_, z| mu * (z - z.ln_1p()) + c * z,
                move |_, _| mu.abs(),
                c.abs() + (-mu).max(0.0),
                mu.max(0.0),
                mu >= 0.0 && c >= 0.0,
            )
        }
        "linear" => {
            let (mu, c) = (g("mu"), g("c"));
            if mu < 0.0 {
                return Err(invalid("linear: mu must be nonnegative"));
            }
            NonlinearitySpec::new(
                name,
                move |_, y| mu * y + c,
                move |_, z| 0.5 * mu * z * z + c * z,
                move |_, _| mu,
                c.abs(),
                mu,
                c >= 0.0,
            )
        }
        "profile" => {
            let (c, a) = (g("c"), g("a"));
            let l = c.abs() * (1.0 + a.abs());
            let kappa = move |x: f64| c * (1.0 + a * (PI * x).sin());
            NonlinearitySpec::new(
                name,
                move |x, _| kappa(x),
                move |x, z| kappa(x) * z,
                |_, _| 0.0,
                l,
                0.0,
                c >= 0.0 && a.abs() <= 1.0,
            )
        }
        "oscillating" => {
            let (c, a, omega) = (g("c"), g("a"), g("omega"));
            if omega <= 0.0 {
                return Err(invalid("oscillating: omega must be positive"));
            }
            NonlinearitySpec::new(
                name,
                move |_, y| c + a * (omega * y).sin(),
                move |_, z| c * z + a * (1.0 - (omega * z).cos()) / omega,
                move |_, _| a.abs() * omega,
                c.abs() + a.abs(),
                0.0,
                a == 0.0 && c >= 0.0,
            )
        }
        "zero" => Ok(NonlinearitySpec::zero()),
        _ => unreachable!("resolve rejects unknown names"),
    }
}

/// Builds a catalog source.
pub fn source(name: &str, given: &Params) -> Result<SourceSpec> {
    let pr = source_params(name, given)?;
    let g = |k: &str| pr[k];
    match name {
        "constant" => {
            let c = g("c");
            SourceSpec::new(name, move |_, _| c, c.abs())
        }
        "sinusoidal" => {
            let (c, a, omega) = (g("c"), g("a"), g("omega"));
            SourceSpec::new(name, move |t, _| c + a * (omega * t).sin(), c.abs() + a.abs())
        }
        "bump" => {
            let (c, x0, w) = (g("c"), g("x0"), g("width"));
            if w <= 0.0 {
                return Err(invalid("bump: width must be positive"));
            }
            SourceSpec::new(name, move |_, x| c * (-((x - x0) / w).powi(2)).exp(), c.abs())
        }
        "separable" => {
            let (c, a, omega, k) = (g("c"), g("a"), g("omega"), g("k"));
            SourceSpec::new(
                name,
                move |t, x| c + a * (omega * t).sin() * (k * x).cos(),
                c.abs() + a.abs(),
            )
        }
        _ => unreachable!("resolve rejects unknown names"),
    }
}

fn nonlinearity_hypotheses(nl: &NonlinearitySpec) -> Vec<String> {
    let mut h = vec![
        format!("f >= -l with l = {}", nl.lower_bound_l),
        format!("f <= mu*y + l with mu = {} (needs mu < lambda1)", nl.growth_mu),
        "locally Lipschitz in y".to_string(),
    ];
    if nl.monotone_quotient {
        h.push("f(x,y)/y nonincreasing in y (uniqueness, stabilization)".to_string());
    }
    h
}

/// Every built-in entry with its schema and the hypotheses it meets at the
/// default parameters.
pub fn listing() -> Vec<CatalogEntry> {
    let mut out = Vec::new();
    for (name, formula, params) in nonlinearity_schemas() {
        let nl = nonlinearity(name, &Params::new()).expect("defaults are valid");
        out.push(CatalogEntry {
            kind: EntryKind::Nonlinearity,
            name,
            formula,
            params,
            hypotheses: nonlinearity_hypotheses(&nl),
            monotone_quotient: Some(nl.monotone_quotient),
        });
    }
    for (name, formula, params) in source_schemas() {
        let src = source(name, &Params::new()).expect("defaults are valid");
        out.push(CatalogEntry {
            kind: EntryKind::Source,
            name,
            formula,
            params,
            hypotheses: vec![
                format!("bounded: |h| <= {}", src.bound),
                "continuous in t, smooth in x".to_string(),
            ],
            monotone_quotient: None,
        });
    }
    out
}

/// Checks every built-in at its defaults on `[a, b] × (0, y_max]`: declared
/// bounds hold and the monotone-quotient flag agrees with sampling.
pub fn self_check(a: f64, b: f64, y_max: f64) -> Result<()> {
    for (name, _, _) in nonlinearity_schemas() {
        let nl = nonlinearity(name, &Params::new())?;
        nl.validate(a, b, y_max)?;
        if nl.sampled_monotone_quotient(a, b, y_max) != nl.monotone_quotient {
            return Err(invalid(format!(
                "catalog entry '{name}' declares monotone_quotient = {} but sampling disagrees",
                nl.monotone_quotient
            )));
        }
    }
    for (name, _, _) in source_schemas() {
        source(name, &Params::new())?.validate(a, b, 10.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_is_large_enough() {
        let l = listing();
        let count = |k| l.iter().filter(|e| e.kind == k).count();
        assert!(count(EntryKind::Nonlinearity) >= 3);
        assert!(count(EntryKind::Source) >= 3);
    }

    #[test]
    fn defaults_pass_self_check() {
        self_check(-1.0, 1.0, 10.0).unwrap();
    }

    #[test]
    fn flags_at_defaults() {
        let l = listing();
        let flag = |n: &str| l.iter().find(|e| e.name == n).unwrap().monotone_quotient;
        assert_eq!(flag("saturating"), Some(true));
        assert_eq!(flag("oscillating"), Some(false));
    }

    #[test]
    fn unknown_names_and_params() {
        assert!(nonlinearity("cubic", &Params::new()).is_err());
        assert!(source("ramp", &Params::new()).is_err());
        let mut bad = Params::new();
        bad.insert("nu".into(), 1.0);
        assert!(nonlinearity("saturating", &bad).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut pr = Params::new();
        pr.insert("mu".into(), 2.0);
        let nl = nonlinearity("saturating", &pr).unwrap();
        assert_eq!(nl.growth_mu, 2.0);
        assert!((nl.f(0.0, 1.0) - 1.2).abs() < 1e-15);
    }
}
