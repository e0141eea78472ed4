//! Differentiation and substitution.

use super::{Expr, FnApp};
use std::collections::BTreeMap;

/// Partial derivative with respect to the symbol `v`.
///
/// Parameters other than `v` are constants. `abs` and `sign` follow
/// d|x|/dx = sign(x) and d sign(x)/dx = 0 away from x = 0. Applied function
/// symbols gain a derivative order through the chain rule.
pub fn differentiate(e: &Expr, v: &str) -> Expr {
    match e {
        Expr::Rational(_) | Expr::Float(_) => Expr::zero(),
        Expr::Var(n) | Expr::Param(n) => {
            if n == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Sum(terms) => Expr::add(terms.iter().map(|t| differentiate(t, v)).collect()),
        Expr::Product(factors) => {
            let mut terms = Vec::with_capacity(factors.len());
            for (i, f) in factors.iter().enumerate() {
                let df = differentiate(f, v);
                if df.is_zero() {
                    continue;
                }
                let mut rest: Vec<Expr> = factors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, g)| g.clone())
                    .collect();
                rest.push(df);
                terms.push(Expr::mul(rest));
            }
            Expr::add(terms)
        }
        Expr::Pow(base, exp) => {
            let db = differentiate(base, v);
            let de = differentiate(exp, v);
            if de.is_zero() {
                // d(b^e) = e * b^(e-1) * b'
                Expr::mul(vec![
                    (**exp).clone(),
                    Expr::pow((**base).clone(), (**exp).clone() - Expr::one()),
                    db,
                ])
            } else if db.is_zero() {
                // d(b^e) = b^e * ln(b) * e'
                Expr::mul(vec![e.clone(), Expr::ln((**base).clone()), de])
            } else {
                // general: b^e * (e' ln b + e b'/b)
                let bracket = Expr::mul(vec![de, Expr::ln((**base).clone())])
                    + Expr::mul(vec![(**exp).clone(), db, (**base).clone().recip()]);
                Expr::mul(vec![e.clone(), bracket])
            }
        }
        Expr::Exp(arg) => Expr::mul(vec![e.clone(), differentiate(arg, v)]),
        Expr::Ln(arg) => Expr::mul(vec![differentiate(arg, v), (**arg).clone().recip()]),
        Expr::Abs(arg) => Expr::mul(vec![Expr::sign((**arg).clone()), differentiate(arg, v)]),
        Expr::Sign(_) => Expr::zero(),
        Expr::Fn(app) => {
            let lifted = Expr::Fn(FnApp {
                name: app.name.clone(),
                order: app.order + 1,
                arg: app.arg.clone(),
            });
            Expr::mul(vec![lifted, differentiate(&app.arg, v)])
        }
    }
}

/// Repeated differentiation.
pub fn differentiate_n(e: &Expr, v: &str, n: u32) -> Expr {
    let mut out = e.clone();
    for _ in 0..n {
        out = differentiate(&out, v);
    }
    out
}

/// Simultaneous substitution of symbols by expressions.
///
/// Replacement happens at the leaves only, so substituted expressions are
/// never re-substituted. The tree is rebuilt through the canonical
/// constructors.
pub fn substitute(e: &Expr, bindings: &BTreeMap<String, Expr>) -> Expr {
    if bindings.is_empty() {
        return e.clone();
    }
    match e {
        Expr::Rational(_) | Expr::Float(_) => e.clone(),
        Expr::Var(n) | Expr::Param(n) => bindings.get(n).cloned().unwrap_or_else(|| e.clone()),
        Expr::Sum(terms) => Expr::add(terms.iter().map(|t| substitute(t, bindings)).collect()),
        Expr::Product(fs) => Expr::mul(fs.iter().map(|f| substitute(f, bindings)).collect()),
        Expr::Pow(b, x) => Expr::pow(substitute(b, bindings), substitute(x, bindings)),
        Expr::Exp(a) => Expr::exp(substitute(a, bindings)),
        Expr::Ln(a) => Expr::ln(substitute(a, bindings)),
        Expr::Abs(a) => Expr::abs(substitute(a, bindings)),
        Expr::Sign(a) => Expr::sign(substitute(a, bindings)),
        Expr::Fn(app) => Expr::Fn(FnApp {
            name: app.name.clone(),
            order: app.order,
            arg: Box::new(substitute(&app.arg, bindings)),
        }),
    }
}

/// Single-symbol convenience wrapper around [`substitute`].
pub fn substitute_one(e: &Expr, name: &str, value: &Expr) -> Expr {
    let mut m = BTreeMap::new();
    m.insert(name.to_string(), value.clone());
    substitute(e, &m)
}

/// Replaces every application `name^(k)(arg)` by the k-th derivative of
/// `definition` with respect to `var`, evaluated at `arg`.
pub fn substitute_fn(e: &Expr, name: &str, definition: &Expr, var: &str) -> Expr {
    match e {
        Expr::Rational(_) | Expr::Float(_) | Expr::Var(_) | Expr::Param(_) => e.clone(),
        Expr::Sum(terms) => {
            Expr::add(terms.iter().map(|t| substitute_fn(t, name, definition, var)).collect())
        }
        Expr::Product(fs) => {
            Expr::mul(fs.iter().map(|f| substitute_fn(f, name, definition, var)).collect())
        }
        Expr::Pow(b, x) => Expr::pow(
            substitute_fn(b, name, definition, var),
            substitute_fn(x, name, definition, var),
        ),
        Expr::Exp(a) => Expr::exp(substitute_fn(a, name, definition, var)),
        Expr::Ln(a) => Expr::ln(substitute_fn(a, name, definition, var)),
        Expr::Abs(a) => Expr::abs(substitute_fn(a, name, definition, var)),
        Expr::Sign(a) => Expr::sign(substitute_fn(a, name, definition, var)),
        Expr::Fn(app) => {
            let arg = substitute_fn(&app.arg, name, definition, var);
            if app.name == name {
                let deriv = differentiate_n(definition, var, app.order);
                substitute_one(&deriv, var, &arg)
            } else {
                Expr::Fn(FnApp { name: app.name.clone(), order: app.order, arg: Box::new(arg) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn chain_rule_exponential() {
        // d/du exp(mu*u) = mu*exp(mu*u)
        let e = parse("exp(mu*u)").unwrap();
        let d = differentiate(&e, "u");
        assert_eq!(d, parse("mu*exp(mu*u)").unwrap());
    }

    #[test]
    fn chain_rule_log_abs() {
        // d/dx ln|c1*x+c0| = c1/(c1*x+c0), after sign(g)^2 cancels in simplify
        let e = parse("ln(abs(c1*x+c0))").unwrap();
        let d = crate::expr::simplify(&differentiate(&e, "x"));
        assert_eq!(d, parse("c1/(c1*x+c0)").unwrap());
    }

    #[test]
    fn substitution_is_simultaneous() {
        // x -> y, y -> x swaps without cascading
        let e = parse("x + 2*y").unwrap();
        let mut b = BTreeMap::new();
        b.insert("x".into(), Expr::param("y"));
        b.insert("y".into(), Expr::var("x"));
        assert_eq!(substitute(&e, &b), parse("y + 2*x").unwrap());
    }

    #[test]
    fn substitute_into_function_argument() {
        let e = parse("exp(u)").unwrap();
        let sub = substitute_one(&e, "u", &Expr::func("phi", 0, Expr::var("omega")));
        assert_eq!(sub, Expr::exp(Expr::func("phi", 0, Expr::var("omega"))));
    }

    #[test]
    fn applied_symbol_derivatives_track_order() {
        let e = Expr::func("phi", 0, parse("x*t").unwrap());
        let d = differentiate(&e, "x");
        assert_eq!(d, Expr::func("phi", 1, parse("x*t").unwrap()) * Expr::var("t"));
    }

    #[test]
    fn substitute_fn_applies_derivatives() {
        // phi(w) := w^2 makes phi'(x*t) = 2*x*t
        let e = Expr::func("phi", 1, parse("x*t").unwrap());
        let def = parse("omega^2").unwrap();
        let out = substitute_fn(&e, "phi", &def, "omega");
        assert_eq!(out, parse("2*x*t").unwrap());
    }
}
