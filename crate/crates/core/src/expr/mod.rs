//! Minimal symbolic expression kernel.
//!
//! Expressions are immutable trees with canonical ordering of commutative
//! children, exact rational constants, and no division node (quotients are
//! products with negative powers). The kernel supports parsing, rendering,
//! differentiation, substitution, rule-based simplification, numeric
//! evaluation and seeded randomized equality testing.

mod calculus;
mod eval;
mod numeric;
mod parse;
mod simplify;

pub use calculus::{differentiate, differentiate_n, substitute, substitute_fn, substitute_one};
pub use eval::{evaluate, evaluate_with, Assignment, ClosureFn, FnImpl, FnTable};
pub use numeric::{equal_numeric, equal_numeric_with, numeric_deviation, Deviation};
pub use parse::parse;

use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use ordered_float::OrderedFloat;
use std::collections::BTreeSet;
use std::fmt;

/// Variable names of the expression grammar. Everything else is a parameter.
pub const VARIABLES: [&str; 4] = ["t", "x", "u", "omega"];

/// A symbolic expression node.
///
/// `Sum` and `Product` are n-ary with children kept sorted, so structurally
/// equal expressions compare equal. Constructors fold constants and flatten
/// nested sums/products; deeper rewriting lives in [`simplify`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Expr {
    /// Exact rational constant.
    Rational(Rational64),
    /// Floating constant; enters only through evaluation-adjacent code paths.
    Float(OrderedFloat<f64>),
    /// Independent or dependent variable (t, x, u, omega, jet coordinates).
    Var(String),
    /// Named parameter, treated as a constant by differentiation.
    Param(String),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Abs(Box<Expr>),
    Sign(Box<Expr>),
    /// Applied function symbol `name'^order(arg)`, e.g. `phi''(omega)`.
    Fn(FnApp),
}

/// Applied function symbol with a derivative order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FnApp {
    pub name: String,
    pub order: u32,
    pub arg: Box<Expr>,
}

pub fn simplify(e: &Expr) -> Expr {
    simplify::simplify(e)
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Rational(Rational64::from_integer(n))
    }

    pub fn rational(num: i64, den: i64) -> Expr {
        Expr::Rational(Rational64::new(num, den))
    }

    pub fn float(v: f64) -> Expr {
        Expr::Float(OrderedFloat(v))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(name.to_string())
    }

    /// Symbol constructor following the grammar convention: `t`, `x`, `u`,
    /// `omega` are variables, anything else is a parameter.
    pub fn symbol(name: &str) -> Expr {
        if VARIABLES.contains(&name) {
            Expr::var(name)
        } else {
            Expr::param(name)
        }
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    /// n-ary sum with flattening, constant folding and canonical ordering.
    pub fn add(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        let mut rat = Rational64::zero();
        let mut float_acc: Option<f64> = None;
        for term in terms {
            match term {
                Expr::Sum(children) => {
                    for c in children {
                        accumulate_term(c, &mut flat, &mut rat, &mut float_acc);
                    }
                }
                other => accumulate_term(other, &mut flat, &mut rat, &mut float_acc),
            }
        }
        if let Some(f) = float_acc {
            let total = f + rational_to_f64(rat);
            if total != 0.0 {
                flat.push(Expr::float(total));
            }
        } else if !rat.is_zero() {
            flat.push(Expr::Rational(rat));
        }
        flat.sort();
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::Sum(flat),
        }
    }

    /// n-ary product with flattening, constant folding and canonical ordering.
    pub fn mul(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        let mut rat = Rational64::one();
        let mut float_acc: Option<f64> = None;
        for factor in factors {
            match factor {
                Expr::Product(children) => {
                    for c in children {
                        accumulate_factor(c, &mut flat, &mut rat, &mut float_acc);
                    }
                }
                other => accumulate_factor(other, &mut flat, &mut rat, &mut float_acc),
            }
        }
        if rat.is_zero() {
            return Expr::zero();
        }
        if float_acc == Some(0.0) {
            return Expr::zero();
        }
        if let Some(f) = float_acc {
            let total = f * rational_to_f64(rat);
            if total != 1.0 {
                flat.push(Expr::float(total));
            }
        } else if !rat.is_one() {
            flat.push(Expr::Rational(rat));
        }
        flat.sort();
        match flat.len() {
            0 => Expr::one(),
            1 => flat.pop().unwrap(),
            _ => Expr::Product(flat),
        }
    }

    /// Power with light folding: trivial exponents, exact rational powers,
    /// `exp(a)^b -> exp(a*b)` and `(b^k)^n -> b^(k*n)` for integer `n`.
    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return base;
        }
        if base.is_one() {
            return Expr::one();
        }
        if base.is_zero() {
            if let Some(r) = exponent.as_rational() {
                if r.is_positive() {
                    return Expr::zero();
                }
            }
        }
        if let (Expr::Rational(b), Some(n)) = (&base, exponent.as_integer()) {
            if let Some(folded) = rational_int_pow(*b, n) {
                return Expr::Rational(folded);
            }
        }
        if let Expr::Exp(arg) = base {
            return Expr::exp(Expr::mul(vec![*arg, exponent]));
        }
        if let Expr::Pow(inner_base, inner_exp) = &base {
            if exponent.as_integer().is_some() {
                return Expr::pow(
                    (**inner_base).clone(),
                    Expr::mul(vec![(**inner_exp).clone(), exponent]),
                );
            }
        }
        Expr::Pow(Box::new(base), Box::new(exponent))
    }

    pub fn exp(arg: Expr) -> Expr {
        if arg.is_zero() {
            return Expr::one();
        }
        if let Expr::Ln(inner) = arg {
            return *inner;
        }
        Expr::Exp(Box::new(arg))
    }

    pub fn ln(arg: Expr) -> Expr {
        if arg.is_one() {
            return Expr::zero();
        }
        if let Expr::Exp(inner) = arg {
            return *inner;
        }
        Expr::Ln(Box::new(arg))
    }

    pub fn abs(arg: Expr) -> Expr {
        match &arg {
            Expr::Rational(r) => return Expr::Rational(r.abs()),
            Expr::Exp(_) | Expr::Abs(_) => return arg,
            _ => {}
        }
        Expr::Abs(Box::new(arg))
    }

    pub fn sign(arg: Expr) -> Expr {
        match &arg {
            Expr::Rational(r) => {
                return Expr::int(match r.cmp(&Rational64::zero()) {
                    std::cmp::Ordering::Less => -1,
                    std::cmp::Ordering::Equal => 0,
                    std::cmp::Ordering::Greater => 1,
                })
            }
            Expr::Exp(_) => return Expr::one(),
            Expr::Sign(_) => return arg,
            _ => {}
        }
        Expr::Sign(Box::new(arg))
    }

    pub fn func(name: &str, order: u32, arg: Expr) -> Expr {
        Expr::Fn(FnApp {
            name: name.to_string(),
            order,
            arg: Box::new(arg),
        })
    }

    pub fn neg(self) -> Expr {
        Expr::mul(vec![Expr::int(-1), self])
    }

    pub fn recip(self) -> Expr {
        Expr::pow(self, Expr::int(-1))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Rational(r) if r.is_zero())
            || matches!(self, Expr::Float(f) if f.0 == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Rational(r) if r.is_one()) || matches!(self, Expr::Float(f) if f.0 == 1.0)
    }

    pub fn as_rational(&self) -> Option<Rational64> {
        match self {
            Expr::Rational(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Expr::Rational(r) if r.is_integer() => Some(r.to_integer()),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Expr::Rational(r) => Some(rational_to_f64(*r)),
            Expr::Float(f) => Some(f.0),
            _ => None,
        }
    }

    /// Names of all free variables and parameters.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(n) | Expr::Param(n) = e {
                out.insert(n.clone());
            }
        });
        out
    }

    /// Names of free `Var` nodes only (parameters excluded).
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Var(n) = e {
                out.insert(n.clone());
            }
        });
        out
    }

    /// Names of applied function symbols together with the maximal order seen.
    pub fn fn_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let Expr::Fn(f) = e {
                out.insert(f.name.clone());
            }
        });
        out
    }

    pub fn contains_symbol(&self, name: &str) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::Var(n) | Expr::Param(n) = e {
                if n == name {
                    found = true;
                }
            }
        });
        found
    }

    /// True when the expression does not contain any of the given symbols.
    pub fn free_of(&self, names: &[&str]) -> bool {
        names.iter().all(|n| !self.contains_symbol(n))
    }

    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Sum(children) | Expr::Product(children) => {
                for c in children {
                    c.walk(f);
                }
            }
            Expr::Pow(b, e) => {
                b.walk(f);
                e.walk(f);
            }
            Expr::Exp(a) | Expr::Ln(a) | Expr::Abs(a) | Expr::Sign(a) => a.walk(f),
            Expr::Fn(app) => app.arg.walk(f),
            _ => {}
        }
    }
}

fn accumulate_term(
    term: Expr,
    flat: &mut Vec<Expr>,
    rat: &mut Rational64,
    float_acc: &mut Option<f64>,
) {
    match term {
        Expr::Rational(r) => *rat += r,
        Expr::Float(f) => *float_acc = Some(float_acc.unwrap_or(0.0) + f.0),
        other => flat.push(other),
    }
}

fn accumulate_factor(
    factor: Expr,
    flat: &mut Vec<Expr>,
    rat: &mut Rational64,
    float_acc: &mut Option<f64>,
) {
    match factor {
        Expr::Rational(r) => *rat *= r,
        Expr::Float(f) => *float_acc = Some(float_acc.unwrap_or(1.0) * f.0),
        other => flat.push(other),
    }
}

pub(crate) fn rational_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact integer power of a rational, returning None on (near) overflow.
fn rational_int_pow(base: Rational64, exp: i64) -> Option<Rational64> {
    if exp.unsigned_abs() > 32 {
        return None;
    }
    let (mut num, mut den) = (*base.numer() as i128, *base.denom() as i128);
    if exp < 0 {
        if num == 0 {
            return None;
        }
        std::mem::swap(&mut num, &mut den);
    }
    let (mut acc_n, mut acc_d) = (1i128, 1i128);
    for _ in 0..exp.unsigned_abs() {
        acc_n = acc_n.checked_mul(num)?;
        acc_d = acc_d.checked_mul(den)?;
        if acc_n.unsigned_abs() > i64::MAX as u128 || acc_d.unsigned_abs() > i64::MAX as u128 {
            return None;
        }
    }
    Some(Rational64::new(acc_n as i64, acc_d as i64))
}

// Expressions serialize as strings in the infix grammar.
impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::add(vec![self, rhs.neg()])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(vec![self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::mul(vec![self, rhs.recip()])
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

// ---------------------------------------------------------------------------
// Rendering. Emits the same infix grammar the parser accepts, so that
// parse(render(e)) is structurally equal to e for float-free expressions.
// ---------------------------------------------------------------------------

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render(self))
    }
}

fn render(e: &Expr) -> String {
    match e {
        Expr::Rational(r) => {
            if r.is_integer() {
                format!("{}", r.numer())
            } else {
                format!("{}/{}", r.numer(), r.denom())
            }
        }
        Expr::Float(v) => {
            let s = format!("{}", v.0);
            if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
                s
            } else {
                format!("{s}.0")
            }
        }
        Expr::Var(n) | Expr::Param(n) => n.clone(),
        Expr::Sum(terms) => {
            let mut out = String::new();
            for (i, term) in terms.iter().enumerate() {
                let (neg, body) = render_signed(term);
                if i == 0 {
                    if neg {
                        out.push('-');
                    }
                } else {
                    out.push_str(if neg { " - " } else { " + " });
                }
                out.push_str(&body);
            }
            out
        }
        Expr::Product(_) => render_product(e),
        Expr::Pow(_, _) => render_product(e),
        Expr::Exp(a) => format!("exp({})", render(a)),
        Expr::Ln(a) => format!("ln({})", render(a)),
        Expr::Abs(a) => format!("abs({})", render(a)),
        Expr::Sign(a) => format!("sign({})", render(a)),
        Expr::Fn(app) => {
            let primes: String = std::iter::repeat('\'').take(app.order as usize).collect();
            format!("{}{}({})", app.name, primes, render(app.arg.as_ref()))
        }
    }
}

/// Splits a leading -1 coefficient off a term for `a - b` style rendering.
fn render_signed(term: &Expr) -> (bool, String) {
    match term {
        Expr::Rational(r) if r.is_negative() => (true, render(&Expr::Rational(r.abs()))),
        Expr::Float(v) if v.0 < 0.0 => (true, render(&Expr::float(-v.0))),
        Expr::Product(factors) => {
            if let Some(Expr::Rational(r)) = factors.iter().find(|f| matches!(f, Expr::Rational(_)))
            {
                if r.is_negative() {
                    let mut rest: Vec<Expr> =
                        factors.iter().filter(|f| !matches!(f, Expr::Rational(_))).cloned().collect();
                    rest.push(Expr::Rational(r.abs()));
                    return (true, render_product(&Expr::mul(rest)));
                }
            }
            (false, render_product(term))
        }
        _ => (false, render(term)),
    }
}

/// Renders products and powers, using `/` for negative rational exponents.
fn render_product(e: &Expr) -> String {
    let factors: Vec<Expr> = match e {
        Expr::Product(fs) => fs.clone(),
        other => vec![other.clone()],
    };
    let mut num = Vec::new();
    let mut den = Vec::new();
    for f in &factors {
        if let Expr::Pow(base, exp) = f {
            if let Some(r) = exp.as_rational() {
                if r.is_negative() {
                    let flipped = Expr::pow((**base).clone(), Expr::Rational(-r));
                    den.push(render_atom(&flipped, true));
                    continue;
                }
            }
        }
        num.push(render_atom(f, true));
    }
    let num_str = if num.is_empty() {
        "1".to_string()
    } else {
        num.join("*")
    };
    if den.is_empty() {
        num_str
    } else if den.len() == 1 {
        format!("{}/{}", num_str, den[0])
    } else {
        format!("{}/({})", num_str, den.join("*"))
    }
}

/// Renders one multiplicative atom, parenthesizing as the grammar requires.
fn render_atom(e: &Expr, in_product: bool) -> String {
    match e {
        Expr::Sum(_) => format!("({})", render(e)),
        Expr::Rational(r) if !r.is_integer() || (r.is_negative() && in_product) => {
            format!("({})", render(e))
        }
        Expr::Float(v) if v.0 < 0.0 && in_product => format!("({})", render(e)),
        Expr::Pow(base, exp) => {
            let b = match base.as_ref() {
                Expr::Sum(_) | Expr::Product(_) | Expr::Pow(_, _) | Expr::Exp(_) => {
                    format!("({})", render(base))
                }
                Expr::Rational(r) if !r.is_integer() || r.is_negative() => {
                    format!("({})", render(base))
                }
                _ => render(base),
            };
            let x = match exp.as_ref() {
                Expr::Rational(r) if r.is_integer() && !r.is_negative() => render(exp),
                Expr::Var(_) | Expr::Param(_) => render(exp),
                _ => format!("({})", render(exp)),
            };
            format!("{b}^{x}")
        }
        Expr::Product(_) => format!("({})", render(e)),
        _ => render(e),
    }
}
