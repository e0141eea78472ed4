//! Lie invariance machinery: second prolongation, the invariance residual
//! restricted to the solution manifold, and the reduced determining system
//! as an independent cross-oracle.

use crate::error::{Error, Result};
use crate::expr::{
    differentiate, evaluate_with, simplify, substitute_one, Assignment, Expr, FnTable,
};
use crate::grid::Grid;
use crate::model::{lie_bracket, ClassEquation, VectorField};
use serde::Serialize;

/// Default numeric pass threshold for residual checks.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Total derivative in direction `dir` over the second-order jet space.
pub fn total_derivative(e: &Expr, dir: &str) -> Expr {
    // successor table for jet coordinates u, u_t, u_x, u_xx
    const JETS: [(&str, &str, &str); 4] = [
        ("u", "u_t", "u_x"),
        ("u_t", "u_tt", "u_tx"),
        ("u_x", "u_tx", "u_xx"),
        ("u_xx", "u_txx", "u_xxx"),
    ];
    let mut out = differentiate(e, dir);
    for (jet, succ_t, succ_x) in JETS {
        let partial = differentiate(e, jet);
        if partial.is_zero() {
            continue;
        }
        let succ = if dir == "t" { succ_t } else { succ_x };
        out = out + Expr::var(succ) * partial;
    }
    out
}

/// Second prolongation of a generator: coefficients of `d/du_t`, `d/du_x`
/// and `d/du_xx` in jet coordinates.
#[derive(Debug, Clone)]
pub struct ProlongedField {
    pub base: VectorField,
    pub eta_t: Expr,
    pub eta_x: Expr,
    pub eta_xx: Expr,
}

pub fn prolong2(v: &VectorField) -> ProlongedField {
    let u_t = Expr::var("u_t");
    let u_x = Expr::var("u_x");
    let u_xx = Expr::var("u_xx");
    let eta_t = total_derivative(&v.eta, "t")
        - u_t.clone() * total_derivative(&v.xi_t, "t")
        - u_x.clone() * total_derivative(&v.xi_x, "t");
    let eta_x = total_derivative(&v.eta, "x")
        - u_t.clone() * total_derivative(&v.xi_t, "x")
        - u_x.clone() * total_derivative(&v.xi_x, "x");
    let eta_xx = total_derivative(&eta_x, "x")
        - Expr::var("u_tx") * total_derivative(&v.xi_t, "x")
        - u_xx * total_derivative(&v.xi_x, "x");
    ProlongedField {
        base: v.clone(),
        eta_t: simplify(&eta_t),
        eta_x: simplify(&eta_x),
        eta_xx: simplify(&eta_xx),
    }
}

/// The class operator as a jet-space expression:
/// `f u_t - D_u u_x^2 - D u_xx - K u_x`.
fn jet_operator(eq: &ClassEquation) -> Expr {
    let u_x = Expr::var("u_x");
    eq.f.clone() * Expr::var("u_t")
        - eq.d_u() * Expr::pow(u_x.clone(), Expr::int(2))
        - eq.d.clone() * Expr::var("u_xx")
        - eq.k.clone() * u_x
}

/// Solves the evolution equation for `u_t`.
fn u_t_on_solutions(eq: &ClassEquation) -> Expr {
    let u_x = Expr::var("u_x");
    (eq.d_u() * Expr::pow(u_x.clone(), Expr::int(2))
        + eq.d.clone() * Expr::var("u_xx")
        + eq.k.clone() * u_x)
        * eq.f.clone().recip()
}

/// Applies the prolonged generator to the class operator and restricts to
/// the solution manifold by substituting `u_t`. The result is an expression
/// in (t, x, u, u_x, u_xx) that vanishes identically iff `v` generates a
/// Lie point symmetry of `eq`.
pub fn invariance_residual(eq: &ClassEquation, v: &VectorField) -> Expr {
    let pr = prolong2(v);
    let delta = jet_operator(eq);
    let applied = pr.base.xi_t.clone() * differentiate(&delta, "t")
        + pr.base.xi_x.clone() * differentiate(&delta, "x")
        + pr.base.eta.clone() * differentiate(&delta, "u")
        + pr.eta_t * differentiate(&delta, "u_t")
        + pr.eta_x * differentiate(&delta, "u_x")
        + pr.eta_xx * differentiate(&delta, "u_xx");
    let restricted = substitute_one(&applied, "u_t", &u_t_on_solutions(eq));
    simplify(&restricted)
}

/// One equation of the reduced determining system.
#[derive(Debug, Clone, Serialize)]
pub struct DeterminingEntry {
    pub name: String,
    pub residual: Expr,
    pub max_scaled: f64,
    pub pass: bool,
}

/// Residual report for the determining system, one entry per equation.
#[derive(Debug, Clone, Serialize)]
pub struct DeterminingReport {
    pub entries: Vec<DeterminingEntry>,
    pub tol: f64,
    pub pass: bool,
}

/// Residuals of the reduced determining system for the class:
/// the shape conditions together with
///   2 xi_x_x - xi_t_t + (f_x/f) xi_x - (D_u/D) eta = 0
///   D eta_xx + K eta_x - f eta_t = 0
///   (D_u K - K_u D) eta/D - K xi_x_x - 2 D_u eta_x + D xi_x_xx
///       - f xi_x_t - 2 D eta_xu = 0
pub fn determining_residuals(
    eq: &ClassEquation,
    v: &VectorField,
    grid: &Grid,
    tol: f64,
) -> Result<DeterminingReport> {
    let f = &eq.f;
    let d = &eq.d;
    let k = &eq.k;
    let d_u = eq.d_u();
    let k_u = eq.k_u();
    let f_x = differentiate(f, "x");
    let xi_x_x = differentiate(&v.xi_x, "x");
    let eta_x = differentiate(&v.eta, "x");

    let shape = vec![
        ("xi_t_x", differentiate(&v.xi_t, "x")),
        ("xi_t_u", differentiate(&v.xi_t, "u")),
        ("xi_x_u", differentiate(&v.xi_x, "u")),
        ("eta_uu", differentiate(&differentiate(&v.eta, "u"), "u")),
    ];
    let r1 = Expr::int(2) * xi_x_x.clone() - differentiate(&v.xi_t, "t")
        + f_x * v.xi_x.clone() * f.clone().recip()
        - d_u.clone() * v.eta.clone() * d.clone().recip();
    let r2 = d.clone() * differentiate(&eta_x, "x") + k.clone() * eta_x.clone()
        - f.clone() * differentiate(&v.eta, "t");
    let r3 = (d_u.clone() * k.clone() - k_u * d.clone()) * v.eta.clone() * d.clone().recip()
        - k.clone() * xi_x_x.clone()
        - Expr::int(2) * d_u * eta_x.clone()
        + d.clone() * differentiate(&xi_x_x, "x")
        - f.clone() * differentiate(&v.xi_x, "t")
        - Expr::int(2) * d.clone() * differentiate(&eta_x, "u");

    let mut entries = Vec::new();
    for (name, res) in shape
        .into_iter()
        .chain([("classifying_1", r1), ("evolution_2", r2), ("convection_3", r3)])
    {
        let residual = simplify(&res);
        let max_scaled = zero_deviation(&residual, grid, eq.fn_table())?;
        entries.push(DeterminingEntry {
            name: name.to_string(),
            pass: max_scaled <= tol,
            residual,
            max_scaled,
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(DeterminingReport { entries, tol, pass })
}

/// Max over grid samples of |e| / (1 + largest additive term magnitude).
///
/// Term scaling keeps the check meaningful when a residual is the
/// difference of large, nearly cancelling contributions.
pub fn zero_deviation(e: &Expr, grid: &Grid, fns: &FnTable) -> Result<f64> {
    let points = grid.samples_for(&[e], fns)?;
    let terms: Vec<Expr> = match e {
        Expr::Sum(ts) => ts.clone(),
        other => vec![other.clone()],
    };
    let mut max_scaled = 0.0_f64;
    for p in &points {
        let value = evaluate_with(e, p, fns)?.abs();
        let mut scale = 1.0_f64;
        for term in &terms {
            if let Ok(tv) = evaluate_with(term, p, fns) {
                scale = scale.max(tv.abs());
            }
        }
        max_scaled = max_scaled.max(value / (1.0 + scale));
    }
    Ok(max_scaled)
}

/// Evaluates [`zero_deviation`] and also reports the worst sample point.
pub fn zero_deviation_argmax(
    e: &Expr,
    grid: &Grid,
    fns: &FnTable,
) -> Result<(f64, Assignment)> {
    let points = grid.samples_for(&[e], fns)?;
    let terms: Vec<Expr> = match e {
        Expr::Sum(ts) => ts.clone(),
        other => vec![other.clone()],
    };
    let mut max_scaled = 0.0_f64;
    let mut argmax = points[0].clone();
    for p in &points {
        let value = evaluate_with(e, p, fns)?.abs();
        let mut scale = 1.0_f64;
        for term in &terms {
            if let Ok(tv) = evaluate_with(term, p, fns) {
                scale = scale.max(tv.abs());
            }
        }
        let scaled = value / (1.0 + scale);
        if scaled > max_scaled {
            max_scaled = scaled;
            argmax = p.clone();
        }
    }
    Ok((max_scaled, argmax))
}

/// Conjunction of the two oracles. The prolongation route and the
/// determining-system route must agree; disagreement is an internal error
/// reported with the offending sample point.
pub fn is_symmetry(eq: &ClassEquation, v: &VectorField, tol: f64) -> Result<bool> {
    is_symmetry_on(eq, v, &eq.grid(), tol)
}

pub fn is_symmetry_on(
    eq: &ClassEquation,
    v: &VectorField,
    grid: &Grid,
    tol: f64,
) -> Result<bool> {
    let inv = invariance_residual(eq, v);
    let (inv_dev, inv_arg) = zero_deviation_argmax(&inv, grid, eq.fn_table())?;
    let inv_pass = inv_dev <= tol;
    let det = determining_residuals(eq, v, grid, tol)?;
    if inv_pass != det.pass {
        let failing = det
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| format!("{} (dev {:.3e})", e.name, e.max_scaled))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::OracleDisagreement(format!(
            "prolongation oracle deviation {inv_dev:.3e} at {inv_arg:?} vs determining system [{failing}] (pass={})",
            det.pass
        )));
    }
    Ok(inv_pass)
}

/// Bracket expansion of one pair in the span of the basis.
#[derive(Debug, Clone, Serialize)]
pub struct BracketEntry {
    pub i: usize,
    pub j: usize,
    /// fitted structure constants c with [Q_i, Q_j] = sum_k c_k Q_k
    pub coefficients: Vec<f64>,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgebraReport {
    pub dimension: usize,
    pub symmetry_pass: Vec<bool>,
    pub brackets: Vec<BracketEntry>,
    pub closed: bool,
    pub pass: bool,
}

/// Checks that every basis element is a symmetry of `eq` and that the basis
/// closes under the bracket; structure constants come from a least-squares
/// fit of coefficient values on sample points.
pub fn algebra_check(
    eq: &ClassEquation,
    basis: &[VectorField],
    grid: &Grid,
    tol: f64,
) -> Result<AlgebraReport> {
    let mut symmetry_pass = Vec::with_capacity(basis.len());
    for v in basis {
        symmetry_pass.push(is_symmetry_on(eq, v, grid, tol)?);
    }
    let mut brackets = Vec::new();
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            let br = lie_bracket(&basis[i], &basis[j])?;
            let (coefficients, residual) = span_solve(basis, &br, grid, eq.fn_table())?;
            brackets.push(BracketEntry {
                i,
                j,
                coefficients,
                residual,
                pass: residual <= tol,
            });
        }
    }
    let closed = brackets.iter().all(|b| b.pass);
    let pass = closed && symmetry_pass.iter().all(|&p| p);
    Ok(AlgebraReport { dimension: basis.len(), symmetry_pass, brackets, closed, pass })
}

/// Least-squares expansion of `target` in the span of `basis`, by stacking
/// coefficient values at grid samples. Returns (coefficients, residual).
pub fn span_solve(
    basis: &[VectorField],
    target: &VectorField,
    grid: &Grid,
    fns: &FnTable,
) -> Result<(Vec<f64>, f64)> {
    let mut exprs: Vec<&Expr> = Vec::new();
    for v in basis {
        exprs.extend([&v.xi_t, &v.xi_x, &v.eta]);
    }
    exprs.extend([&target.xi_t, &target.xi_x, &target.eta]);
    let points = grid.samples_for(&exprs, fns)?;
    let rows = 3 * points.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, basis.len());
    let mut b = nalgebra::DVector::<f64>::zeros(rows);
    for (pi, p) in points.iter().enumerate() {
        let tv = target.eval3(p, fns)?;
        for c in 0..3 {
            b[3 * pi + c] = tv[c];
        }
        for (k, v) in basis.iter().enumerate() {
            let bv = v.eval3(p, fns)?;
            for c in 0..3 {
                a[(3 * pi + c, k)] = bv[c];
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let coeffs = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Sampling(format!("span solve failed: {e}")))?;
    let fit = &a * &coeffs;
    let mut residual = 0.0_f64;
    let mut scale = 1.0_f64;
    for r in 0..rows {
        residual = residual.max((fit[r] - b[r]).abs());
        scale = scale.max(b[r].abs());
    }
    Ok((coeffs.iter().copied().collect(), residual / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn vf(xi_t: &str, xi_x: &str, eta: &str) -> VectorField {
        VectorField::new(e(xi_t), e(xi_x), e(eta)).unwrap()
    }

    #[test]
    fn time_translation_prolongs_trivially() {
        let pr = prolong2(&VectorField::d_t());
        assert!(pr.eta_t.is_zero() && pr.eta_x.is_zero() && pr.eta_xx.is_zero());
    }

    #[test]
    fn prolongation_hand_values() {
        // v = t dt - du: eta^t = -u_t
        let pr = prolong2(&vf("t", "0", "-1"));
        assert_eq!(pr.eta_t, e("-1") * Expr::var("u_t"));
        // v = x dx + 2 du: eta^x = -u_x
        let pr = prolong2(&vf("0", "x", "2"));
        assert_eq!(pr.eta_x, e("-1") * Expr::var("u_x"));
    }

    #[test]
    fn time_translation_is_kernel_symmetry() {
        let eq = ClassEquation::new(e("exp(-2*x)"), e("u^3 + u"), e("exp(u)")).unwrap();
        let r = invariance_residual(&eq, &VectorField::d_t());
        assert!(r.is_zero(), "residual {r}");
        assert!(is_symmetry(&eq, &VectorField::d_t(), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn exponential_diffusion_scaling_symmetry() {
        // u_t = (e^u u_x)_x admits t dt - du
        let eq = ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap();
        assert!(is_symmetry(&eq, &vf("t", "0", "-1"), DEFAULT_TOL).unwrap());
        // but not du alone
        assert!(!is_symmetry(&eq, &VectorField::d_u(), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn du_residual_is_visibly_nonzero() {
        let eq = ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap();
        let r = invariance_residual(&eq, &VectorField::d_u());
        let a = Assignment::from([
            ("t", 1.0),
            ("x", 1.0),
            ("u", 1.0),
            ("u_x", 1.0),
            ("u_xx", 1.0),
        ]);
        let v = evaluate_with(&r, &a, &FnTable::standard()).unwrap();
        assert!(v.abs() > 0.5, "expected a visible residual, got {v}");
    }

    #[test]
    fn power_law_case_with_density() {
        // f = |x|^2, D = u^3, K = u admits 5t dt + 2x dx + u du
        let eq = ClassEquation::new(e("abs(x)^2"), e("u^3"), e("u")).unwrap();
        let v = vf("5*t", "2*x", "u");
        let rep = determining_residuals(&eq, &v, &eq.grid(), DEFAULT_TOL).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(is_symmetry(&eq, &v, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn burgers_galilean_symmetry() {
        // f = 1, D = 1, K = u admits t dx - du
        let eq = ClassEquation::new(e("1"), e("1"), e("u")).unwrap();
        assert!(is_symmetry(&eq, &vf("0", "t", "-1"), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn algebra_closure_exponential_diffusion() {
        // u_t = (e^u u_x)_x: 4-dimensional algebra, [Q1,Q2]=Q1, [Q3,Q4]=Q3
        let eq = ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap();
        let basis = vec![
            VectorField::d_t(),
            vf("t", "0", "-1"),
            VectorField::d_x(),
            vf("0", "x", "2"),
        ];
        let rep = algebra_check(&eq, &basis, &eq.grid(), DEFAULT_TOL).unwrap();
        assert!(rep.pass, "{rep:?}");
        for b in &rep.brackets {
            let expect: &[f64] = match (b.i, b.j) {
                (0, 1) => &[1.0, 0.0, 0.0, 0.0],
                (2, 3) => &[0.0, 0.0, 1.0, 0.0],
                _ => &[0.0, 0.0, 0.0, 0.0],
            };
            for (got, want) in b.coefficients.iter().zip(expect) {
                assert!((got - want).abs() < 1e-9, "bracket ({},{}) {:?}", b.i, b.j, b.coefficients);
            }
        }
    }
}
