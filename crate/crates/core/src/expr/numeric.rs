//! Randomized numeric equality testing, the authoritative zero oracle.

use super::{evaluate_with, Expr, FnTable};
use crate::error::Result;
use crate::grid::Grid;
use crate::expr::Assignment;

/// Outcome of a sampled comparison.
#[derive(Debug, Clone)]
pub struct Deviation {
    /// max over samples of |a-b| / (1 + |a| + |b|)
    pub max_scaled: f64,
    /// point at which the maximum was attained
    pub argmax: Assignment,
    pub samples: usize,
}

/// Compares two expressions on seeded random points of the grid.
///
/// Returns true iff |a-b| <= tol * (1 + |a| + |b|) at every sampled point.
/// Singular draws are discarded and resampled; the check is deterministic
/// under a fixed grid seed.
pub fn equal_numeric(a: &Expr, b: &Expr, grid: &Grid, tol: f64) -> Result<bool> {
    Ok(numeric_deviation(a, b, grid, &FnTable::standard())?.max_scaled <= tol)
}

/// As [`equal_numeric`] with an explicit function table.
pub fn equal_numeric_with(
    a: &Expr,
    b: &Expr,
    grid: &Grid,
    tol: f64,
    fns: &FnTable,
) -> Result<bool> {
    Ok(numeric_deviation(a, b, grid, fns)?.max_scaled <= tol)
}

/// Maximum scaled deviation between two expressions over the grid.
pub fn numeric_deviation(a: &Expr, b: &Expr, grid: &Grid, fns: &FnTable) -> Result<Deviation> {
    let points = grid.samples_for(&[a, b], fns)?;
    let mut max_scaled = 0.0_f64;
    let mut argmax = points[0].clone();
    for p in &points {
        let va = evaluate_with(a, p, fns)?;
        let vb = evaluate_with(b, p, fns)?;
        let scaled = (va - vb).abs() / (1.0 + va.abs() + vb.abs());
        if scaled > max_scaled {
            max_scaled = scaled;
            argmax = p.clone();
        }
    }
    Ok(Deviation { max_scaled, argmax, samples: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn check(a: &str, b: &str) -> bool {
        equal_numeric(&parse(a).unwrap(), &parse(b).unwrap(), &Grid::new(), 1e-9).unwrap()
    }

    #[test]
    fn squares_agree() {
        assert!(check("x*x", "x^2"));
    }

    #[test]
    fn sign_abs_identity_on_positive_box() {
        assert!(check("sign(x)*abs(x)", "x"));
    }

    #[test]
    fn distinct_functions_differ() {
        assert!(!check("ln(x)", "x - 1"));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = parse("exp(x)*exp(-x)").unwrap();
        let b = parse("1").unwrap();
        let g = Grid::new().with_seed(7);
        let d1 = numeric_deviation(&a, &b, &g, &FnTable::standard()).unwrap();
        let d2 = numeric_deviation(&a, &b, &g, &FnTable::standard()).unwrap();
        assert_eq!(d1.max_scaled, d2.max_scaled);
        assert_eq!(d1.argmax, d2.argmax);
    }
}
