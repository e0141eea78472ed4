//! Domain objects: class equations, vector fields, point transformations,
//! the PDE residual and reduction of the general form to unit conductivity.

use crate::error::{Error, Result};
use crate::expr::{
    differentiate, equal_numeric_with, evaluate_with, substitute, Assignment, Expr, FnTable,
};
use crate::grid::Grid;
use crate::quadrature;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Default tolerance for structural numeric checks performed by constructors.
pub const SHAPE_TOL: f64 = 1e-9;

/// Evaluation boxes for the three coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub u: (f64, f64),
}

impl Default for Domain {
    fn default() -> Self {
        Domain { t: (0.5, 2.0), x: (0.5, 2.0), u: (0.5, 2.0) }
    }
}

impl Domain {
    pub fn grid(&self) -> Grid {
        Grid::new()
            .with_box("t", self.t.0, self.t.1)
            .with_box("x", self.x.0, self.x.1)
            .with_box("u", self.u.0, self.u.1)
    }
}

/// A member of the class `f(x) u_t = (D(u) u_x)_x + K(u) u_x`.
///
/// `f` depends only on `x`, `D` and `K` only on `u`; `f*D` must be nonzero
/// on the domain box. The `nonlinear` flag records whether `(D_u, K_u)` is
/// numerically distinguishable from `(0, 0)` there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEquation {
    pub f: Expr,
    pub d: Expr,
    pub k: Expr,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub nonlinear: bool,
    /// Numeric backends for profile symbols appearing in `f` (quadrature
    /// defined densities). Not serialized; reattached on instantiation.
    #[serde(skip)]
    profiles: FnTable,
}

impl ClassEquation {
    pub fn new(f: Expr, d: Expr, k: Expr) -> Result<Self> {
        Self::with_domain(f, d, k, Domain::default())
    }

    pub fn with_domain(f: Expr, d: Expr, k: Expr, domain: Domain) -> Result<Self> {
        Self::with_profiles(f, d, k, domain, FnTable::standard())
    }

    pub fn with_profiles(
        f: Expr,
        d: Expr,
        k: Expr,
        domain: Domain,
        profiles: FnTable,
    ) -> Result<Self> {
        if !f.free_of(&["t", "u"]) {
            return Err(Error::Shape("f must depend on x only".into()));
        }
        if !d.free_of(&["t", "x"]) || !k.free_of(&["t", "x"]) {
            return Err(Error::Shape("D and K must depend on u only".into()));
        }
        let mut eq = ClassEquation { f, d, k, domain, nonlinear: false, profiles };
        eq.validate_nondegeneracy()?;
        Ok(eq)
    }

    /// Checks `f*D != 0` on the box and sets the nonlinearity flag.
    fn validate_nondegeneracy(&mut self) -> Result<()> {
        let grid = self.grid();
        let fd = self.f.clone() * self.d.clone();
        let du = differentiate(&self.d, "u");
        let ku = differentiate(&self.k, "u");
        let points = grid.samples_for(&[&fd, &du, &ku], &self.profiles)?;
        let mut nonlinear = false;
        let mut signs = (false, false);
        for p in &points {
            let v = evaluate_with(&fd, p, &self.profiles)?;
            if v.abs() < 1e-12 {
                return Err(Error::Constraint(format!(
                    "f*D vanishes on the domain box (value {v:e})"
                )));
            }
            signs = (signs.0 || v > 0.0, signs.1 || v < 0.0);
            let dv = evaluate_with(&du, p, &self.profiles)?;
            let kv = evaluate_with(&ku, p, &self.profiles)?;
            if dv.abs() > 1e-9 || kv.abs() > 1e-9 {
                nonlinear = true;
            }
        }
        // a sign change of the continuous f*D means a zero inside the box
        if signs.0 && signs.1 {
            return Err(Error::Constraint(
                "f*D changes sign on the domain box".into(),
            ));
        }
        self.nonlinear = nonlinear;
        Ok(())
    }

    /// Sampling grid over the equation's domain box. Free parameters keep
    /// the default box unless the caller overrides them.
    pub fn grid(&self) -> Grid {
        self.domain.grid()
    }

    pub fn fn_table(&self) -> &FnTable {
        &self.profiles
    }

    pub fn set_fn_table(&mut self, fns: FnTable) {
        self.profiles = fns;
    }

    /// D_u as an expression in u.
    pub fn d_u(&self) -> Expr {
        differentiate(&self.d, "u")
    }

    pub fn k_u(&self) -> Expr {
        differentiate(&self.k, "u")
    }
}

/// PDE residual of a candidate `u(t, x)`:
/// `f u_t - D_u u_x^2 - D u_xx - K u_x` with `u` and its derivatives
/// substituted from the candidate. Identically zero exactly on solutions.
pub fn residual(eq: &ClassEquation, candidate: &Expr) -> Expr {
    let u_t = differentiate(candidate, "t");
    let u_x = differentiate(candidate, "x");
    let u_xx = differentiate(&u_x, "x");
    let mut at_u = BTreeMap::new();
    at_u.insert("u".to_string(), candidate.clone());
    let d = substitute(&eq.d, &at_u);
    let d_u = substitute(&eq.d_u(), &at_u);
    let k = substitute(&eq.k, &at_u);
    eq.f.clone() * u_t
        - d_u * Expr::pow(u_x.clone(), Expr::int(2))
        - d * u_xx
        - k * u_x
}

/// Infinitesimal generator `xi_t dt + xi_x dx + eta du` with the integrated
/// coefficient shape of the class: `xi_t = xi_t(t)`, `xi_x = xi_x(t, x)`,
/// `eta` affine in `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub xi_t: Expr,
    pub xi_x: Expr,
    pub eta: Expr,
}

impl VectorField {
    pub fn new(xi_t: Expr, xi_x: Expr, eta: Expr) -> Result<Self> {
        if !xi_t.free_of(&["x", "u"]) {
            return Err(Error::Shape(format!(
                "xi_t must depend on t only, got {xi_t}"
            )));
        }
        if !xi_x.free_of(&["u"]) {
            return Err(Error::Shape(format!(
                "xi_x must be free of u, got {xi_x}"
            )));
        }
        let eta_uu = crate::expr::simplify(&differentiate(&differentiate(&eta, "u"), "u"));
        if !eta_uu.is_zero() {
            let zero = equal_numeric_with(
                &eta_uu,
                &Expr::zero(),
                &Grid::new(),
                SHAPE_TOL,
                &FnTable::standard(),
            )
            .unwrap_or(false);
            if !zero {
                return Err(Error::Shape(format!(
                    "eta must be affine in u; eta_uu = {eta_uu}"
                )));
            }
        }
        Ok(VectorField { xi_t, xi_x, eta })
    }

    pub fn zero() -> Self {
        VectorField { xi_t: Expr::zero(), xi_x: Expr::zero(), eta: Expr::zero() }
    }

    /// dt-translation, the kernel generator shared by the whole class.
    pub fn d_t() -> Self {
        VectorField { xi_t: Expr::one(), xi_x: Expr::zero(), eta: Expr::zero() }
    }

    pub fn d_x() -> Self {
        VectorField { xi_t: Expr::zero(), xi_x: Expr::one(), eta: Expr::zero() }
    }

    pub fn d_u() -> Self {
        VectorField { xi_t: Expr::zero(), xi_x: Expr::zero(), eta: Expr::one() }
    }

    /// Applies the generator as a derivation to an expression in (t, x, u).
    pub fn apply(&self, e: &Expr) -> Expr {
        self.xi_t.clone() * differentiate(e, "t")
            + self.xi_x.clone() * differentiate(e, "x")
            + self.eta.clone() * differentiate(e, "u")
    }

    /// u-linear part of eta.
    pub fn eta1(&self) -> Expr {
        crate::expr::simplify(&differentiate(&self.eta, "u"))
    }

    /// u-free part of eta.
    pub fn eta0(&self) -> Expr {
        let eta1_u = self.eta1() * Expr::var("u");
        crate::expr::simplify(&(self.eta.clone() - eta1_u))
    }

    pub fn scale(&self, c: Expr) -> Self {
        VectorField {
            xi_t: c.clone() * self.xi_t.clone(),
            xi_x: c.clone() * self.xi_x.clone(),
            eta: c * self.eta.clone(),
        }
    }

    pub fn plus(&self, other: &VectorField) -> Self {
        VectorField {
            xi_t: self.xi_t.clone() + other.xi_t.clone(),
            xi_x: self.xi_x.clone() + other.xi_x.clone(),
            eta: self.eta.clone() + other.eta.clone(),
        }
    }

    pub fn simplified(&self) -> Self {
        VectorField {
            xi_t: crate::expr::simplify(&self.xi_t),
            xi_x: crate::expr::simplify(&self.xi_x),
            eta: crate::expr::simplify(&self.eta),
        }
    }

    /// Coefficient values at a point.
    pub fn eval3(&self, a: &Assignment, fns: &FnTable) -> Result<[f64; 3]> {
        Ok([
            evaluate_with(&self.xi_t, a, fns)?,
            evaluate_with(&self.xi_x, a, fns)?,
            evaluate_with(&self.eta, a, fns)?,
        ])
    }
}

impl std::fmt::Display for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        for (coef, sym) in [(&self.xi_t, "dt"), (&self.xi_x, "dx"), (&self.eta, "du")] {
            if coef.is_zero() {
                continue;
            }
            if coef.is_one() {
                parts.push(sym.to_string());
            } else {
                parts.push(format!("({coef})*{sym}"));
            }
        }
        if parts.is_empty() {
            return write!(f, "0");
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// Commutator `[a, b]` of two generators.
///
/// The class shape is closed under the bracket; a shape violation in the
/// result indicates malformed inputs and is reported as an error.
pub fn lie_bracket(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    let xi_t = a.apply(&b.xi_t) - b.apply(&a.xi_t);
    let xi_x = a.apply(&b.xi_x) - b.apply(&a.xi_x);
    let eta = a.apply(&b.eta) - b.apply(&a.eta);
    VectorField::new(
        crate::expr::simplify(&xi_t),
        crate::expr::simplify(&xi_x),
        crate::expr::simplify(&eta),
    )
}

/// Invertible point transformation with the projectible, u-affine shape
/// admitted by the class: `T(t)`, `X(t, x)`, `U(t, x, u)` affine in u,
/// together with an explicit inverse triple of the same shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointTransformation {
    pub t_map: Expr,
    pub x_map: Expr,
    pub u_map: Expr,
    pub t_inv: Expr,
    pub x_inv: Expr,
    pub u_inv: Expr,
    #[serde(skip)]
    profiles: FnTable,
}

impl PointTransformation {
    /// Builds a transformation and certifies the stored inverse numerically
    /// on the grid (tolerance [`SHAPE_TOL`]).
    pub fn new(
        maps: (Expr, Expr, Expr),
        inverse: (Expr, Expr, Expr),
        grid: &Grid,
    ) -> Result<Self> {
        let tr = PointTransformation {
            t_map: maps.0,
            x_map: maps.1,
            u_map: maps.2,
            t_inv: inverse.0,
            x_inv: inverse.1,
            u_inv: inverse.2,
            profiles: FnTable::standard(),
        };
        tr.verify_inverse(grid, SHAPE_TOL)?;
        Ok(tr)
    }

    pub fn identity() -> Self {
        PointTransformation {
            t_map: Expr::var("t"),
            x_map: Expr::var("x"),
            u_map: Expr::var("u"),
            t_inv: Expr::var("t"),
            x_inv: Expr::var("x"),
            u_inv: Expr::var("u"),
            profiles: FnTable::standard(),
        }
    }

    /// Builds without the inverse certification; for callers that verify on
    /// a domain of their own or deliberately construct invalid candidates.
    pub fn new_unchecked(maps: (Expr, Expr, Expr), inverse: (Expr, Expr, Expr)) -> Self {
        PointTransformation {
            t_map: maps.0,
            x_map: maps.1,
            u_map: maps.2,
            t_inv: inverse.0,
            x_inv: inverse.1,
            u_inv: inverse.2,
            profiles: FnTable::standard(),
        }
    }

    pub fn fn_table(&self) -> &FnTable {
        &self.profiles
    }

    pub fn set_fn_table(&mut self, fns: FnTable) {
        self.profiles = fns;
    }

    /// The inverse transformation as a value.
    pub fn inverse(&self) -> Self {
        PointTransformation {
            t_map: self.t_inv.clone(),
            x_map: self.x_inv.clone(),
            u_map: self.u_inv.clone(),
            t_inv: self.t_map.clone(),
            x_inv: self.x_map.clone(),
            u_inv: self.u_map.clone(),
            profiles: self.profiles.clone(),
        }
    }

    /// Numeric image of a point.
    pub fn forward(&self, a: &Assignment) -> Result<(f64, f64, f64)> {
        Ok((
            evaluate_with(&self.t_map, a, &self.profiles)?,
            evaluate_with(&self.x_map, a, &self.profiles)?,
            evaluate_with(&self.u_map, a, &self.profiles)?,
        ))
    }

    /// Checks that composing with the stored inverse returns every sampled
    /// point of the grid to itself.
    pub fn verify_inverse(&self, grid: &Grid, tol: f64) -> Result<()> {
        let exprs = [&self.t_map, &self.x_map, &self.u_map];
        let points = grid.samples_for(&exprs, &self.profiles)?;
        for p in &points {
            let (tt, xx, uu) = self.forward(p)?;
            let image = p
                .clone()
                .set("t", tt)
                .set("x", xx)
                .set("u", uu);
            let back = (
                evaluate_with(&self.t_inv, &image, &self.profiles)?,
                evaluate_with(&self.x_inv, &image, &self.profiles)?,
                evaluate_with(&self.u_inv, &image, &self.profiles)?,
            );
            let orig = (
                p.get("t").unwrap_or(1.0),
                p.get("x").unwrap_or(1.0),
                p.get("u").unwrap_or(1.0),
            );
            let err = (back.0 - orig.0)
                .abs()
                .max((back.1 - orig.1).abs())
                .max((back.2 - orig.2).abs());
            let scale = 1.0 + orig.0.abs() + orig.1.abs() + orig.2.abs();
            if err > tol * scale {
                return Err(Error::NotInvertible(format!(
                    "round trip error {err:e} at t={}, x={}, u={}",
                    orig.0, orig.1, orig.2
                )));
            }
        }
        Ok(())
    }

    /// Symbolic composition: `other` after `self`.
    pub fn then(&self, other: &PointTransformation) -> Self {
        let fwd = |e: &Expr| -> Expr {
            let mut b = BTreeMap::new();
            b.insert("t".to_string(), self.t_map.clone());
            b.insert("x".to_string(), self.x_map.clone());
            b.insert("u".to_string(), self.u_map.clone());
            crate::expr::simplify(&substitute(e, &b))
        };
        let bwd = |e: &Expr| -> Expr {
            let mut b = BTreeMap::new();
            b.insert("t".to_string(), other.t_inv.clone());
            b.insert("x".to_string(), other.x_inv.clone());
            b.insert("u".to_string(), other.u_inv.clone());
            crate::expr::simplify(&substitute(e, &b))
        };
        PointTransformation {
            t_map: fwd(&other.t_map),
            x_map: fwd(&other.x_map),
            u_map: fwd(&other.u_map),
            t_inv: bwd(&self.t_inv),
            x_inv: bwd(&self.x_inv),
            u_inv: bwd(&self.u_inv),
            profiles: self.profiles.clone(),
        }
    }
}

/// Reduces `f(x) u_t = (g(x) D(u) u_x)_x + K(u) u_x` to unit conductivity
/// via `x_new = integral dx / g(x)`, returning the equivalent equation with
/// density `g*f` pulled back, and the transformation used.
///
/// Closed forms cover `g` constant, `c*(a*x + b)^n` and `c*exp(a*x)`; any
/// other nonzero `g` yields a quadrature-backed profile equation usable by
/// the numeric checks but not by catalog matching.
pub fn normalize_general_form(
    f: &Expr,
    g: &Expr,
    d: &Expr,
    k: &Expr,
    domain: Domain,
) -> Result<(ClassEquation, PointTransformation)> {
    if !g.free_of(&["t", "u"]) {
        return Err(Error::Shape("g must depend on x only".into()));
    }
    let f_new_raw = crate::expr::simplify(&(g.clone() * f.clone()));
    if g.is_one() {
        let eq = ClassEquation::with_domain(f_new_raw, d.clone(), k.clone(), domain)?;
        return Ok((eq, PointTransformation::identity()));
    }
    let grid = domain.grid();
    if let Some((x_map, x_inv)) = closed_form_antiderivative(g) {
        let mut at = BTreeMap::new();
        at.insert("x".to_string(), x_inv.clone());
        let f_new = crate::expr::simplify(&substitute(&f_new_raw, &at));
        let tr = PointTransformation::new(
            (Expr::var("t"), x_map, Expr::var("u")),
            (Expr::var("t"), x_inv, Expr::var("u")),
            &grid,
        )?;
        // the pulled-back density lives on the image of the x-box
        let (lo, hi) = image_interval(&tr.x_map, tr.fn_table(), domain.x)?;
        let mut new_domain = domain;
        new_domain.x = (lo, hi);
        let eq = ClassEquation::with_domain(f_new, d.clone(), k.clone(), new_domain)?;
        return Ok((eq, tr));
    }
    numeric_profile_normalization(f, g, d, k, domain, &grid)
}

/// Antiderivative of 1/g together with its inverse, for the supported
/// closed-form family. Returns (x_map, x_inv).
fn closed_form_antiderivative(g: &Expr) -> Option<(Expr, Expr)> {
    let x = Expr::var("x");
    if let Some(c) = g.as_rational() {
        // g = c: x_new = x/c
        let c = Expr::Rational(c);
        return Some((x.clone() / c.clone(), c * x));
    }
    if let Some((c, a)) = match_exp_linear(g) {
        // g = c e^{a x}: x_new = -e^{-a x}/(a c), x = -ln(-a c x_new)/a
        let ac = a.clone() * c;
        let x_map = Expr::exp(a.clone().neg() * x.clone()).neg() / ac.clone();
        let x_inv = Expr::ln(ac.neg() * x.clone()).neg() / a;
        return Some((x_map, x_inv));
    }
    if let Some((c, a, b, n)) = match_linear_power(g) {
        let w = a.clone() * x.clone() + b.clone();
        if n.is_one() {
            // g = c (a x + b): x_new = ln|a x + b| / (a c)
            let ac = a.clone() * c;
            let x_map = Expr::ln(Expr::abs(w)) / ac.clone();
            let x_inv = (Expr::exp(ac * x.clone()) - b) / a;
            return Some((x_map, x_inv));
        }
        // g = c (a x + b)^n, n != 1:
        // x_new = (a x + b)^{1-n} / (a c (1-n)), inverse by the (1-n)-th root
        let one_minus_n = Expr::one() - n.clone();
        let denom = a.clone() * c * one_minus_n.clone();
        let x_map = Expr::pow(w, one_minus_n.clone()) / denom.clone();
        let x_inv = (Expr::pow(denom * x.clone(), Expr::pow(one_minus_n, Expr::int(-1))) - b) / a;
        return Some((x_map, x_inv));
    }
    None
}

/// Matches `c * exp(a*x)` with constant c, a.
fn match_exp_linear(g: &Expr) -> Option<(Expr, Expr)> {
    let (coeff, core) = split_const_coeff(g);
    if let Expr::Exp(arg) = core {
        let a = differentiate(&arg, "x");
        if a.free_of(&["x"]) && !a.is_zero() {
            let back = crate::expr::simplify(&(a.clone() * Expr::var("x") - (*arg).clone()));
            if back.is_zero() {
                return Some((coeff, a));
            }
        }
    }
    None
}

/// Matches `c * (a*x + b)^n` with constant a, b, c, n (n may be rational).
fn match_linear_power(g: &Expr) -> Option<(Expr, Expr, Expr, Expr)> {
    let (coeff, core) = split_const_coeff(g);
    let (base, n) = match core {
        Expr::Pow(b, e) if e.free_of(&["x"]) => ((*b).clone(), (*e).clone()),
        other => (other, Expr::one()),
    };
    let a = crate::expr::simplify(&differentiate(&base, "x"));
    if !a.free_of(&["x"]) || a.is_zero() {
        return None;
    }
    let b = crate::expr::simplify(&(base - a.clone() * Expr::var("x")));
    if !b.free_of(&["x"]) {
        return None;
    }
    Some((coeff, a, b, n))
}

/// Splits a leading x-free coefficient off a product.
fn split_const_coeff(g: &Expr) -> (Expr, Expr) {
    if let Expr::Product(fs) = g {
        let (consts, rest): (Vec<Expr>, Vec<Expr>) =
            fs.iter().cloned().partition(|f| f.free_of(&["x"]));
        if !consts.is_empty() {
            return (Expr::mul(consts), Expr::mul(rest));
        }
    }
    (Expr::one(), g.clone())
}

fn image_interval(x_map: &Expr, fns: &FnTable, xbox: (f64, f64)) -> Result<(f64, f64)> {
    let at = |v: f64| -> Result<f64> {
        evaluate_with(x_map, &Assignment::from([("x", v), ("t", 1.0)]), fns)
    };
    let (a, b) = (at(xbox.0)?, at(xbox.1)?);
    Ok(if a < b { (a, b) } else { (b, a) })
}

/// Quadrature-backed fallback of [`normalize_general_form`].
fn numeric_profile_normalization(
    f: &Expr,
    g: &Expr,
    d: &Expr,
    k: &Expr,
    domain: Domain,
    grid: &Grid,
) -> Result<(ClassEquation, PointTransformation)> {
    let fns = FnTable::standard();
    let points = grid.samples_for(&[g], &fns)?;
    for p in &points {
        if evaluate_with(g, p, &fns)?.abs() < 1e-9 {
            return Err(Error::NotInvertible("g vanishes on the domain".into()));
        }
    }
    let anchor = 0.5 * (domain.x.0 + domain.x.1);
    let g_expr = g.clone();
    let fns_inner = fns.clone();
    let one_over_g = move |x: f64| -> Result<f64> {
        let v = evaluate_with(&g_expr, &Assignment::from([("x", x)]), &fns_inner)?;
        if v == 0.0 {
            return Err(Error::Domain("g vanished during quadrature".into()));
        }
        Ok(1.0 / v)
    };
    let forward = {
        let one_over_g = one_over_g.clone();
        move |x: f64| quadrature::integrate(&one_over_g, anchor, x, 1e-12)
    };
    let xbox = domain.x;
    let inverse = {
        let forward = forward.clone();
        move |y: f64| {
            let forward = forward.clone();
            let shifted = move |x: f64| Ok(forward(x)? - y);
            quadrature::bracketed_root(&shifted, xbox.0 - 1e-9, xbox.1 + 1e-9)
        }
    };
    let mut table = FnTable::standard();
    table.insert(
        "xmap",
        Arc::new(crate::expr::ClosureFn(move |order, x| match order {
            0 => forward(x),
            1 => one_over_g(x),
            _ => Err(Error::Domain("xmap derivatives beyond 1 unsupported".into())),
        })),
    );
    {
        let inverse = inverse.clone();
        table.insert(
            "xinv",
            Arc::new(crate::expr::ClosureFn(move |order, y| match order {
                0 => inverse(y),
                _ => Err(Error::Domain("xinv derivatives unsupported".into())),
            })),
        );
    }
    let x_map = Expr::func("xmap", 0, Expr::var("x"));
    let x_inv = Expr::func("xinv", 0, Expr::var("x"));
    let mut tr = PointTransformation {
        t_map: Expr::var("t"),
        x_map: x_map.clone(),
        u_map: Expr::var("u"),
        t_inv: Expr::var("t"),
        x_inv: x_inv.clone(),
        u_inv: Expr::var("u"),
        profiles: table.clone(),
    };
    tr.set_fn_table(table.clone());
    tr.verify_inverse(grid, SHAPE_TOL)?;
    // density profile g(x)f(x) expressed in the new variable
    let gf = crate::expr::simplify(&(g.clone() * f.clone()));
    let mut at = BTreeMap::new();
    at.insert("x".to_string(), x_inv);
    let f_new = substitute(&gf, &at);
    let (lo, hi) = image_interval(&tr.x_map, &table, domain.x)?;
    let mut new_domain = domain;
    new_domain.x = (lo, hi);
    let eq = ClassEquation::with_profiles(f_new, d.clone(), k.clone(), new_domain, table)?;
    Ok((eq, tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn residual_of_logarithmic_steady_state() {
        // u = ln|c1 x + c0| solves u_t = (e^u u_x)_x
        let eq = ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap();
        let sol = e("ln(abs(c1*x + c0))");
        let r = crate::expr::simplify(&residual(&eq, &sol));
        let grid = Grid::new();
        assert!(crate::expr::equal_numeric(&r, &Expr::zero(), &grid, 1e-10).unwrap());
    }

    #[test]
    fn residual_of_constant_is_zero() {
        let eq = ClassEquation::new(e("e^x"), e("u^3"), e("u")).unwrap();
        let r = crate::expr::simplify(&residual(&eq, &e("5")));
        assert!(r.is_zero());
    }

    #[test]
    fn heat_operator_on_square() {
        let eq = ClassEquation::new(e("1"), e("1"), e("0")).unwrap();
        let r = crate::expr::simplify(&residual(&eq, &e("x^2")));
        assert_eq!(r, Expr::int(-2));
        assert!(!eq.nonlinear);
    }

    #[test]
    fn rejects_misshaped_profiles() {
        assert!(ClassEquation::new(e("u"), e("1"), e("0")).is_err());
        assert!(ClassEquation::new(e("x"), e("x*u"), e("0")).is_err());
        assert!(ClassEquation::new(e("x - 1"), e("e^u"), e("0")).is_err()); // f*D = 0 at x=1
    }

    #[test]
    fn bracket_of_translations_vanishes() {
        let b = lie_bracket(&VectorField::d_t(), &VectorField::d_x()).unwrap();
        assert_eq!(b, VectorField::zero());
    }

    #[test]
    fn bracket_hand_value() {
        // [x dx + 2 du, dx] = -dx
        let a = VectorField::new(e("0"), e("x"), e("2")).unwrap();
        let b = lie_bracket(&a, &VectorField::d_x()).unwrap();
        assert_eq!(b, VectorField::new(e("0"), e("-1"), e("0")).unwrap());
    }

    #[test]
    fn bracket_scaling_pair() {
        // [dt, t dt - du] = dt
        let q2 = VectorField::new(e("t"), e("0"), e("-1")).unwrap();
        let b = lie_bracket(&VectorField::d_t(), &q2).unwrap();
        assert_eq!(b, VectorField::d_t());
    }

    #[test]
    fn eta_must_be_affine() {
        assert!(VectorField::new(e("0"), e("0"), e("u^2")).is_err());
        assert!(VectorField::new(e("x"), e("0"), e("0")).is_err());
    }

    #[test]
    fn normalize_identity_when_g_is_one() {
        let (eq, tr) = normalize_general_form(
            &e("e^x"),
            &e("1"),
            &e("e^u"),
            &e("0"),
            Domain::default(),
        )
        .unwrap();
        assert_eq!(eq.f, e("e^x"));
        assert_eq!(tr.x_map, Expr::var("x"));
    }

    #[test]
    fn normalize_quadratic_conductivity() {
        // g = x^2, f = 1 on x > 0: x_new = -1/x, pulled-back density x^2 = x_new^-2
        let (eq, tr) =
            normalize_general_form(&e("1"), &e("x^2"), &e("e^u"), &e("0"), Domain::default())
                .unwrap();
        assert_eq!(tr.x_map, e("-1/x"));
        let expected = e("x^(-2)");
        assert!(crate::expr::equal_numeric(
            &eq.f,
            &expected,
            &Grid::new().with_box("x", -2.0, -0.5),
            1e-9
        )
        .unwrap());
    }

    #[test]
    fn normalize_exponential_conductivity() {
        // g = e^x, f = e^{-x}: density g*f = 1
        let (eq, _tr) =
            normalize_general_form(&e("e^(-x)"), &e("e^x"), &e("e^u"), &e("0"), Domain::default())
                .unwrap();
        let grid = Grid::new().with_box("x", -2.0, -0.5);
        assert!(crate::expr::equal_numeric(&eq.f, &Expr::one(), &grid, 1e-9).unwrap());
    }

    #[test]
    fn normalize_numeric_profile_fallback() {
        // g outside the closed-form family still yields a verified profile
        let (eq, tr) = normalize_general_form(
            &e("1"),
            &e("1 + x^2 + exp(x)"),
            &e("e^u"),
            &e("0"),
            Domain::default(),
        )
        .unwrap();
        tr.verify_inverse(&Grid::new(), 1e-9).unwrap();
        let a = Assignment::from([("x", 0.0), ("t", 1.0), ("u", 1.0)]);
        // at the anchor midpoint x_new = 0 the density equals (g*f)(1.25)
        let v = evaluate_with(&eq.f, &a, eq.fn_table()).unwrap();
        let expected = 1.0 + 1.25f64 * 1.25 + 1.25f64.exp();
        assert!((v - expected).abs() < 1e-8, "{v} vs {expected}");
    }
}
