//! Rule-based best-effort simplification.
//!
//! The rewrite is value-preserving on the evaluation domain and idempotent;
//! randomized numeric sampling (`equal_numeric`) stays the authoritative
//! zero-testing oracle, this pass only keeps expressions small.

use super::{Expr, FnApp};
use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

pub fn simplify(e: &Expr) -> Expr {
    let mut current = e.clone();
    for _ in 0..12 {
        let next = rewrite(&current);
        if next == current {
            return next;
        }
        current = next;
    }
    current
}

fn rewrite(e: &Expr) -> Expr {
    match e {
        Expr::Rational(_) | Expr::Float(_) | Expr::Var(_) | Expr::Param(_) => e.clone(),
        Expr::Sum(terms) => collect_terms(terms.iter().map(rewrite).collect()),
        Expr::Product(factors) => collect_factors(factors.iter().map(rewrite).collect()),
        Expr::Pow(base, exp) => rewrite_pow(rewrite(base), rewrite(exp)),
        Expr::Exp(a) => rewrite_exp(rewrite(a)),
        Expr::Ln(a) => rewrite_ln(rewrite(a)),
        Expr::Abs(a) => rewrite_abs(rewrite(a)),
        Expr::Sign(a) => rewrite_sign(rewrite(a)),
        Expr::Fn(app) => Expr::Fn(FnApp {
            name: app.name.clone(),
            order: app.order,
            arg: Box::new(rewrite(&app.arg)),
        }),
    }
}

/// Splits a term into (rational coefficient, remaining product).
fn term_split(e: &Expr) -> (Rational64, Expr) {
    match e {
        Expr::Rational(r) => (*r, Expr::one()),
        Expr::Product(fs) => {
            let mut coeff = Rational64::one();
            let mut rest = Vec::with_capacity(fs.len());
            for f in fs {
                if let Expr::Rational(r) = f {
                    coeff *= r;
                } else {
                    rest.push(f.clone());
                }
            }
            (coeff, Expr::mul(rest))
        }
        other => (Rational64::one(), other.clone()),
    }
}

/// Merges like terms: `a*X + b*X -> (a+b)*X`.
fn collect_terms(terms: Vec<Expr>) -> Expr {
    let flat = match Expr::add(terms) {
        Expr::Sum(ts) => ts,
        single => return single,
    };
    let mut buckets: BTreeMap<Expr, Rational64> = BTreeMap::new();
    let mut opaque = Vec::new();
    for t in flat {
        if matches!(t, Expr::Float(_)) {
            opaque.push(t);
            continue;
        }
        let (coeff, rest) = term_split(&t);
        *buckets.entry(rest).or_insert_with(Rational64::zero) += coeff;
    }
    let mut out = opaque;
    for (rest, coeff) in buckets {
        if coeff.is_zero() {
            continue;
        }
        out.push(Expr::mul(vec![Expr::Rational(coeff), rest]));
    }
    Expr::add(out)
}

/// Merges powers of a common base and fuses exponential factors:
/// `x * x^2 -> x^3`, `exp(a)*exp(b) -> exp(a+b)`, `sign(a)*abs(a) -> a`,
/// even integer powers of `sign` drop out.
fn collect_factors(factors: Vec<Expr>) -> Expr {
    let flat = match Expr::mul(factors) {
        Expr::Product(fs) => fs,
        single => return single,
    };
    let mut exp_arg: Vec<Expr> = Vec::new();
    let mut powers: Vec<(Expr, Vec<Expr>)> = Vec::new();
    let mut constants = Vec::new();
    for f in flat {
        match f {
            Expr::Rational(_) | Expr::Float(_) => constants.push(f),
            Expr::Exp(a) => exp_arg.push(*a),
            Expr::Pow(base, exp) => match *base {
                Expr::Exp(a) => exp_arg.push(Expr::mul(vec![*a, *exp])),
                b => push_power(&mut powers, b, *exp),
            },
            other => push_power(&mut powers, other, Expr::one()),
        }
    }
    let mut out = constants;
    if !exp_arg.is_empty() {
        out.push(Expr::exp(collect_terms(exp_arg)));
    }
    // sign(a)^(2k) == 1 away from zeros of a; sign(a)*abs(a) == a.
    let mut merged: Vec<(Expr, Expr)> = Vec::new();
    for (base, exps) in powers {
        let total = collect_terms(exps);
        if total.is_zero() {
            continue;
        }
        if let Expr::Sign(inner) = &base {
            if let Some(n) = total.as_integer() {
                if n % 2 == 0 {
                    continue;
                }
                merged.push((Expr::Sign(inner.clone()), Expr::one()));
                continue;
            }
        }
        merged.push((base, total));
    }
    let mut i = 0;
    while i < merged.len() {
        let promoted = if let (Expr::Sign(inner), e) = (&merged[i].0, &merged[i].1) {
            e.is_one().then(|| (**inner).clone())
        } else {
            None
        };
        if let Some(inner) = promoted {
            // sign(a) * |a|^(2k+1) == a^(2k+1)
            if let Some(j) = merged.iter().position(|(b, e)| {
                matches!(b, Expr::Abs(a) if **a == inner)
                    && e.as_integer().is_some_and(|n| n % 2 != 0)
            }) {
                let exponent = merged[j].1.clone();
                merged.remove(j);
                let k = if j < i { i - 1 } else { i };
                merged[k] = (inner, exponent);
                continue;
            }
        }
        i += 1;
    }
    for (base, exp) in merged {
        out.push(Expr::pow(base, exp));
    }
    Expr::mul(out)
}

fn push_power(powers: &mut Vec<(Expr, Vec<Expr>)>, base: Expr, exp: Expr) {
    for (b, exps) in powers.iter_mut() {
        if *b == base {
            exps.push(exp);
            return;
        }
    }
    powers.push((base, vec![exp]));
}

fn rewrite_pow(base: Expr, exp: Expr) -> Expr {
    // |a|^(2k) == a^(2k); sign(a)^(2k) == 1 and sign(a)^(2k+1) == sign(a)
    if let (Expr::Abs(inner), Some(n)) = (&base, exp.as_integer()) {
        if n % 2 == 0 {
            return Expr::pow((**inner).clone(), exp);
        }
    }
    if let (Expr::Sign(inner), Some(n)) = (&base, exp.as_integer()) {
        return if n % 2 == 0 {
            Expr::one()
        } else {
            Expr::sign((**inner).clone())
        };
    }
    if let (Expr::Product(fs), Some(_)) = (&base, exp.as_integer()) {
        // distribute integer powers over products: (a*b)^n -> a^n * b^n
        return Expr::mul(
            fs.iter().map(|f| Expr::pow(f.clone(), exp.clone())).collect(),
        );
    }
    Expr::pow(base, exp)
}

/// Pulls logarithmic terms out of an exponential:
/// `exp(c*ln(A) + rest) -> A^c * exp(rest)`.
fn rewrite_exp(arg: Expr) -> Expr {
    let terms: Vec<Expr> = match &arg {
        Expr::Sum(ts) => ts.clone(),
        other => vec![other.clone()],
    };
    let mut pulled = Vec::new();
    let mut rest = Vec::new();
    for term in terms {
        match log_term_split(&term) {
            Some((base, coeff)) => pulled.push(Expr::pow(base, coeff)),
            None => rest.push(term),
        }
    }
    if pulled.is_empty() {
        return Expr::exp(arg);
    }
    pulled.push(Expr::exp(Expr::add(rest)));
    Expr::mul(pulled)
}

/// Recognizes `c * ln(A)` with exactly one logarithmic factor.
fn log_term_split(term: &Expr) -> Option<(Expr, Expr)> {
    match term {
        Expr::Ln(a) => Some(((**a).clone(), Expr::one())),
        Expr::Product(fs) => {
            let logs: Vec<&Expr> = fs.iter().filter(|f| matches!(f, Expr::Ln(_))).collect();
            if logs.len() != 1 {
                return None;
            }
            let base = match logs[0] {
                Expr::Ln(a) => (**a).clone(),
                _ => unreachable!(),
            };
            let coeff: Vec<Expr> =
                fs.iter().filter(|f| !matches!(f, Expr::Ln(_))).cloned().collect();
            Some((base, Expr::mul(coeff)))
        }
        _ => None,
    }
}

fn rewrite_ln(arg: Expr) -> Expr {
    match arg {
        // ln|e^a| = a
        Expr::Abs(inner) => match *inner {
            Expr::Exp(a) => *a,
            other => Expr::ln(Expr::abs(other)),
        },
        other => Expr::ln(other),
    }
}

fn rewrite_abs(arg: Expr) -> Expr {
    match &arg {
        // |a^(2k)| = a^(2k), |a*b| = |a|*|b| for constant signs is not
        // assumed; only structurally safe rules are applied.
        Expr::Pow(base, exp) => {
            if let Some(n) = exp.as_integer() {
                if n % 2 == 0 {
                    return Expr::pow((**base).clone(), (**exp).clone());
                }
            }
            if let Expr::Abs(_) = **base {
                return arg.clone();
            }
            Expr::abs(arg)
        }
        Expr::Product(fs) => {
            // pull positive rational coefficients out of the bars
            if let Some(Expr::Rational(r)) = fs.iter().find(|f| matches!(f, Expr::Rational(_))) {
                let coeff = Expr::Rational(r.abs());
                let rest: Vec<Expr> =
                    fs.iter().filter(|f| !matches!(f, Expr::Rational(_))).cloned().collect();
                return Expr::mul(vec![coeff, Expr::abs(Expr::mul(rest))]);
            }
            Expr::abs(arg)
        }
        _ => Expr::abs(arg),
    }
}

fn rewrite_sign(arg: Expr) -> Expr {
    match &arg {
        Expr::Abs(_) => Expr::sign(arg), // could be 0 at isolated points; keep
        Expr::Product(fs) => {
            if let Some(Expr::Rational(r)) = fs.iter().find(|f| matches!(f, Expr::Rational(_))) {
                let rest: Vec<Expr> =
                    fs.iter().filter(|f| !matches!(f, Expr::Rational(_))).cloned().collect();
                let inner_sign = Expr::sign(Expr::mul(rest));
                return Expr::mul(vec![Expr::sign(Expr::Rational(*r)), inner_sign]);
            }
            Expr::sign(arg)
        }
        _ => Expr::sign(arg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn s(text: &str) -> Expr {
        simplify(&parse(text).unwrap())
    }

    #[test]
    fn additive_identity() {
        assert_eq!(s("x + 0"), Expr::var("x"));
    }

    #[test]
    fn exponentials_cancel() {
        assert_eq!(s("exp(u)*exp(-u)"), Expr::one());
    }

    #[test]
    fn like_terms_merge() {
        assert_eq!(s("2*x + 3*x - 5*x"), Expr::zero());
        assert_eq!(s("x*x^2"), parse("x^3").unwrap());
    }

    #[test]
    fn sign_abs_pairing() {
        assert_eq!(s("sign(x)*abs(x)"), Expr::var("x"));
        assert_eq!(s("sign(x)^2"), Expr::one());
    }

    #[test]
    fn idempotent_on_samples() {
        for text in [
            "x + 0",
            "exp(u)*exp(-u)*t",
            "(x+1)^2*(x+1)^(-1)",
            "ln(abs(exp(x)))",
            "sign(c1*x+c0)^2*(c1*x+c0)",
            "abs(x)^2 + 2*x - x*2",
        ] {
            let once = s(text);
            let twice = simplify(&once);
            assert_eq!(once, twice, "not idempotent on {text}");
        }
    }

    #[test]
    fn abs_even_power() {
        assert_eq!(s("abs(x)^2"), parse("x^2").unwrap());
    }
}
