//! Numeric evaluation of expressions.

use super::{rational_to_f64, Expr};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Binding of variable and parameter names to floating values.
///
/// Every free symbol of an evaluated expression must be bound; an unbound
/// symbol is an error, not an implicit zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: BTreeMap<String, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.values.iter()
    }

    /// Right-biased union: bindings in `other` win.
    pub fn merged(&self, other: &Assignment) -> Assignment {
        let mut values = self.values.clone();
        values.extend(other.values.iter().map(|(k, v)| (k.clone(), *v)));
        Assignment { values }
    }
}

impl<const N: usize> From<[(&str, f64); N]> for Assignment {
    fn from(pairs: [(&str, f64); N]) -> Self {
        let mut a = Assignment::new();
        for (k, v) in pairs {
            a.insert(k, v);
        }
        a
    }
}

/// Numeric backend for an applied function symbol: evaluates the k-th
/// derivative at a point. Implementations must be deterministic.
pub trait FnImpl: Send + Sync {
    fn eval(&self, order: u32, x: f64) -> Result<f64>;
}

/// Closure-backed [`FnImpl`].
pub struct ClosureFn<F: Fn(u32, f64) -> Result<f64> + Send + Sync>(pub F);

impl<F: Fn(u32, f64) -> Result<f64> + Send + Sync> FnImpl for ClosureFn<F> {
    fn eval(&self, order: u32, x: f64) -> Result<f64> {
        (self.0)(order, x)
    }
}

/// Table of numeric implementations for applied function symbols.
#[derive(Clone, Default)]
pub struct FnTable {
    fns: BTreeMap<String, Arc<dyn FnImpl>>,
}

impl FnTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Table with `sin` and `cos` registered (all derivative orders).
    pub fn standard() -> Self {
        let mut t = Self::new();
        t.insert(
            "cos",
            Arc::new(ClosureFn(|order, x| {
                Ok(match order % 4 {
                    0 => x.cos(),
                    1 => -x.sin(),
                    2 => -x.cos(),
                    _ => x.sin(),
                })
            })),
        );
        t.insert(
            "sin",
            Arc::new(ClosureFn(|order, x| {
                Ok(match order % 4 {
                    0 => x.sin(),
                    1 => x.cos(),
                    2 => -x.sin(),
                    _ => -x.cos(),
                })
            })),
        );
        t
    }

    pub fn insert(&mut self, name: &str, f: Arc<dyn FnImpl>) {
        self.fns.insert(name.to_string(), f);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn FnImpl>> {
        self.fns.get(name)
    }

    /// Right-biased union of two tables.
    pub fn merged(&self, other: &FnTable) -> FnTable {
        let mut fns = self.fns.clone();
        fns.extend(other.fns.iter().map(|(k, v)| (k.clone(), v.clone())));
        FnTable { fns }
    }
}

impl std::fmt::Debug for FnTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnTable").field("names", &self.fns.keys().collect::<Vec<_>>()).finish()
    }
}

/// Evaluates an expression with no applied function symbols.
pub fn evaluate(e: &Expr, a: &Assignment) -> Result<f64> {
    evaluate_with(e, a, &FnTable::default())
}

/// Evaluates an expression, resolving applied function symbols through `fns`.
pub fn evaluate_with(e: &Expr, a: &Assignment, fns: &FnTable) -> Result<f64> {
    let v = eval_inner(e, a, fns)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("non-finite value {v}")))
    }
}

fn eval_inner(e: &Expr, a: &Assignment, fns: &FnTable) -> Result<f64> {
    match e {
        Expr::Rational(r) => Ok(rational_to_f64(*r)),
        Expr::Float(f) => Ok(f.0),
        Expr::Var(n) | Expr::Param(n) => {
            a.get(n).ok_or_else(|| Error::UnboundSymbol(n.clone()))
        }
        Expr::Sum(terms) => {
            let mut acc = 0.0;
            for t in terms {
                acc += eval_inner(t, a, fns)?;
            }
            Ok(acc)
        }
        Expr::Product(factors) => {
            let mut acc = 1.0;
            for f in factors {
                acc *= eval_inner(f, a, fns)?;
            }
            Ok(acc)
        }
        Expr::Pow(base, exp) => {
            let b = eval_inner(base, a, fns)?;
            let x = eval_inner(exp, a, fns)?;
            pow_checked(b, x, exp)
        }
        Expr::Exp(arg) => Ok(eval_inner(arg, a, fns)?.exp()),
        Expr::Ln(arg) => {
            let v = eval_inner(arg, a, fns)?;
            if v <= 0.0 {
                return Err(Error::Domain(format!("ln of non-positive value {v}")));
            }
            Ok(v.ln())
        }
        Expr::Abs(arg) => Ok(eval_inner(arg, a, fns)?.abs()),
        Expr::Sign(arg) => {
            let v = eval_inner(arg, a, fns)?;
            Ok(if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            })
        }
        Expr::Fn(app) => {
            let x = eval_inner(&app.arg, a, fns)?;
            match fns.get(&app.name) {
                Some(f) => f.eval(app.order, x),
                // An unapplied symbol value may be supplied directly, e.g.
                // binding "phi" when residuals are sampled over the jet.
                None if app.order == 0 => a
                    .get(&app.name)
                    .ok_or_else(|| Error::UnboundFunction(app.name.clone())),
                None => Err(Error::UnboundFunction(app.name.clone())),
            }
        }
    }
}

/// Real power with domain checks: a negative base requires an integer
/// exponent (up to rounding noise in the exponent's own evaluation).
fn pow_checked(b: f64, x: f64, exp_expr: &Expr) -> Result<f64> {
    if b < 0.0 {
        let rounded = x.round();
        let integral = (x - rounded).abs() < 1e-9;
        let exact_int = exp_expr.as_integer().is_some() || integral;
        if !exact_int {
            return Err(Error::Domain(format!(
                "negative base {b} with non-integer exponent {x}"
            )));
        }
        if rounded.abs() < 64.0 {
            return Ok(b.powi(rounded as i32));
        }
        return Ok(b.powf(rounded));
    }
    if b == 0.0 && x < 0.0 {
        return Err(Error::Domain("zero base with negative exponent".into()));
    }
    Ok(b.powf(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn unbound_symbol_is_an_error() {
        let e = parse("x + mu").unwrap();
        let a = Assignment::from([("x", 1.0)]);
        assert!(matches!(evaluate(&e, &a), Err(Error::UnboundSymbol(n)) if n == "mu"));
    }

    #[test]
    fn negative_base_integer_power() {
        let e = parse("(-2)^3").unwrap();
        assert_eq!(evaluate(&e, &Assignment::new()).unwrap(), -8.0);
        let e = parse("x^(1/2)").unwrap();
        let a = Assignment::from([("x", -1.0)]);
        assert!(evaluate(&e, &a).is_err());
    }

    #[test]
    fn standard_table_cosine_derivatives() {
        let fns = FnTable::standard();
        let e = Expr::func("cos", 1, Expr::var("x"));
        let a = Assignment::from([("x", 0.3)]);
        let v = evaluate_with(&e, &a, &fns).unwrap();
        assert!((v + 0.3f64.sin()).abs() < 1e-15);
        let e2 = Expr::func("cos", 2, Expr::var("x"));
        let v2 = evaluate_with(&e2, &a, &fns).unwrap();
        assert!((v2 + 0.3f64.cos()).abs() < 1e-15);
    }
}
