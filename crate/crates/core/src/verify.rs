//! Numeric verification layer: residual evaluation of candidate solutions
//! with exact symbolic derivatives, a finite-difference cross-oracle, and
//! the report objects shared by the catalog checks.

pub use crate::grid::Grid;

use crate::error::{Error, Result};
use crate::expr::{evaluate_with, simplify, Assignment, Expr, FnTable};
use crate::model::{residual, ClassEquation};
use serde::Serialize;
use std::collections::BTreeMap;

/// Number of random free-constant assignments per solution check.
pub const CONSTANT_ASSIGNMENTS: usize = 5;

/// Residual evidence for one candidate solution.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub max_scaled: f64,
    pub argmax: BTreeMap<String, f64>,
    pub per_point: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn empty(tol: f64) -> Self {
        ResidualReport {
            max_abs: 0.0,
            max_scaled: 0.0,
            argmax: BTreeMap::new(),
            per_point: Vec::new(),
            tol,
            pass: true,
        }
    }
}

/// Evaluates the PDE residual of `sol` over the grid.
///
/// The residual uses exact symbolic derivatives of the candidate; free
/// constants (any parameter of `sol` not pinned by the grid) are drawn in
/// [`CONSTANT_ASSIGNMENTS`] seeded batches. The verdict compares the
/// largest term-scaled residual against `tol`.
pub fn check_solution(
    eq: &ClassEquation,
    sol: &Expr,
    grid: &Grid,
    tol: f64,
) -> Result<ResidualReport> {
    let fns = eq.fn_table().clone();
    check_solution_with(eq, sol, grid, tol, &fns)
}

pub fn check_solution_with(
    eq: &ClassEquation,
    sol: &Expr,
    grid: &Grid,
    tol: f64,
    fns: &FnTable,
) -> Result<ResidualReport> {
    let res = simplify(&residual(eq, sol));
    if res.is_zero() {
        return Ok(ResidualReport::empty(tol));
    }
    let terms: Vec<Expr> = match &res {
        Expr::Sum(ts) => ts.clone(),
        other => vec![other.clone()],
    };
    // split symbols into grid coordinates and free constants
    let symbols = res.free_symbols();
    let coords: Vec<&str> = ["t", "x", "u"].into_iter().filter(|c| symbols.contains(*c)).collect();
    let constants: std::collections::BTreeSet<String> =
        symbols.iter().filter(|s| !coords.contains(&s.as_str())).cloned().collect();

    let const_grid = grid.clone().with_points(CONSTANT_ASSIGNMENTS);
    let const_draws: Vec<Assignment> = if constants.is_empty() {
        vec![Assignment::new()]
    } else {
        const_grid.sample_where(&constants, fns, |_| true)?
    };

    let mut report = ResidualReport::empty(tol);
    let coord_set: std::collections::BTreeSet<String> =
        coords.iter().map(|c| c.to_string()).collect();
    for consts in &const_draws {
        let points = if coord_set.is_empty() {
            vec![Assignment::new()]
        } else {
            let res_c = res.clone();
            let fns_c = fns.clone();
            let consts_c = consts.clone();
            grid.sample_where(&coord_set, fns, move |a| {
                evaluate_with(&res_c, &a.merged(&consts_c), &fns_c).is_ok()
            })?
        };
        for point in &points {
            let a = point.merged(consts);
            let value = evaluate_with(&res, &a, fns)?.abs();
            let mut scale = 1.0_f64;
            for term in &terms {
                if let Ok(tv) = evaluate_with(term, &a, fns) {
                    scale = scale.max(tv.abs());
                }
            }
            let scaled = value / (1.0 + scale);
            report.per_point.push(value);
            if scaled > report.max_scaled {
                report.max_scaled = scaled;
                report.argmax = a.iter().map(|(k, v)| (k.clone(), *v)).collect();
            }
            report.max_abs = report.max_abs.max(value);
        }
    }
    report.pass = report.max_scaled <= tol;
    Ok(report)
}

/// Independent derivative oracle: the residual assembled from central
/// finite differences of the solution values, with one Richardson
/// extrapolation step. Agrees with the symbolic residual to about 1e-6 on
/// smooth regions.
pub fn finite_difference_residual(
    eq: &ClassEquation,
    sol: &Expr,
    point: &Assignment,
    step: f64,
) -> Result<f64> {
    let fns = eq.fn_table().clone();
    let at = |t: f64, x: f64| -> Result<f64> {
        let mut a = point.clone();
        a.insert("t", t);
        a.insert("x", x);
        evaluate_with(sol, &a, &fns)
    };
    let t0 = point.get("t").ok_or_else(|| Error::UnboundSymbol("t".into()))?;
    let x0 = point.get("x").ok_or_else(|| Error::UnboundSymbol("x".into()))?;

    let d_dt = |h: f64| -> Result<f64> { Ok((at(t0 + h, x0)? - at(t0 - h, x0)?) / (2.0 * h)) };
    let d_dx = |h: f64| -> Result<f64> { Ok((at(t0, x0 + h)? - at(t0, x0 - h)?) / (2.0 * h)) };
    let d2_dx2 = |h: f64| -> Result<f64> {
        Ok((at(t0, x0 + h)? - 2.0 * at(t0, x0)? + at(t0, x0 - h)?) / (h * h))
    };
    let richardson = |d: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        Ok((4.0 * d(step / 2.0)? - d(step)?) / 3.0)
    };

    let u = at(t0, x0)?;
    let u_t = richardson(&d_dt)?;
    let u_x = richardson(&d_dx)?;
    let u_xx = richardson(&d2_dx2)?;

    let mut a = point.clone();
    a.insert("u", u);
    let f = evaluate_with(&eq.f, &a, &fns)?;
    let d = evaluate_with(&eq.d, &a, &fns)?;
    let d_u = evaluate_with(&eq.d_u(), &a, &fns)?;
    let k = evaluate_with(&eq.k, &a, &fns)?;
    Ok(f * u_t - d_u * u_x * u_x - d * u_xx - k * u_x)
}

/// Compares the symbolic and finite-difference residual oracles over the
/// grid; returns the maximum absolute disagreement.
pub fn cross_check_residual(
    eq: &ClassEquation,
    sol: &Expr,
    grid: &Grid,
) -> Result<f64> {
    let fns = eq.fn_table().clone();
    let res = simplify(&residual(eq, sol));
    let symbols = {
        let mut s = res.free_symbols();
        s.extend(sol.free_symbols());
        s.insert("t".to_string());
        s.insert("x".to_string());
        s
    };
    let res_c = res.clone();
    let fns_c = fns.clone();
    let points = grid.sample_where(&symbols, &fns, move |a| {
        evaluate_with(&res_c, a, &fns_c).is_ok()
    })?;
    let mut worst = 0.0_f64;
    for p in &points {
        let sym = evaluate_with(&res, p, &fns)?;
        let fd = finite_difference_residual(eq, sol, p, 1e-4)?;
        worst = worst.max((sym - fd).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn logarithmic_solution_passes() {
        let eq = ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap();
        let rep = check_solution(&eq, &e("ln(abs(c1*x + c0))"), &eq.grid(), 1e-10).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn non_solution_is_rejected() {
        let eq = ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap();
        let rep = check_solution(&eq, &e("x"), &eq.grid(), 1e-8).unwrap();
        assert!(!rep.pass);
        assert!(rep.max_abs > 0.1);
    }

    #[test]
    fn oracles_agree_on_smooth_solution() {
        // u = 2t/((x+c1)^2 + c0 t^2) solves u_t = (u^-1 u_x)_x
        let eq = ClassEquation::new(e("1"), e("u^(-1)"), e("0")).unwrap();
        let sol = e("2*t/((x+c1)^2 + c0*t^2)");
        let worst = cross_check_residual(&eq, &sol, &eq.grid()).unwrap();
        assert!(worst < 1e-6, "oracle disagreement {worst}");
        let rep = check_solution(&eq, &sol, &eq.grid(), 1e-8).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn constant_solution_zero_by_both_oracles() {
        let eq = ClassEquation::new(e("e^x"), e("u^2"), e("u")).unwrap();
        let sol = e("3/2");
        let rep = check_solution(&eq, &sol, &eq.grid(), 1e-12).unwrap();
        assert!(rep.pass);
        let p = Assignment::from([("t", 1.0), ("x", 1.2)]);
        let fd = finite_difference_residual(&eq, &sol, &p, 1e-4).unwrap();
        assert!(fd.abs() < 1e-12);
    }

    #[test]
    fn mutated_derivative_rule_detected() {
        // finite differences disagree with a deliberately wrong symbolic
        // residual (sign-flipped diffusion term)
        let eq = ClassEquation::new(e("1"), e("u^(-1)"), e("0")).unwrap();
        let sol = e("2*t/((x+1)^2 + t^2)");
        let wrong = {
            // f u_t + D u_xx + ... instead of minus
            let u_t = crate::expr::differentiate(&sol, "t");
            let u_x = crate::expr::differentiate(&sol, "x");
            let u_xx = crate::expr::differentiate(&u_x, "x");
            let mut b = std::collections::BTreeMap::new();
            b.insert("u".to_string(), sol.clone());
            let d = crate::expr::substitute(&eq.d, &b);
            let d_u = crate::expr::substitute(&eq.d_u(), &b);
            eq.f.clone() * u_t + d_u * Expr::pow(u_x.clone(), Expr::int(2)) + d * u_xx
        };
        let p = Assignment::from([("t", 1.0), ("x", 1.0)]);
        let fd = finite_difference_residual(&eq, &sol, &p, 1e-4).unwrap();
        let sym = evaluate_with(&wrong, &p, &FnTable::standard()).unwrap();
        assert!((sym - fd).abs() > 1e-3, "mutation not detected: {sym} vs {fd}");
    }
}
