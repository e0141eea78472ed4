//! Symbolic Lie-reduction engine: substitute a similarity ansatz into a
//! parent PDE, extract the reduced ODE in `phi(omega)`, compare against
//! stored table rows up to a nonzero factor, and rebuild full solutions
//! from `phi`.

use crate::error::{Error, Result};
use crate::expr::{
    differentiate, evaluate_with, simplify, substitute, substitute_fn, substitute_one,
    Assignment, ClosureFn, Expr, FnApp, FnTable,
};
use crate::grid::Grid;
use crate::model::{residual, ClassEquation};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Jet symbols used for the reduced ODE.
pub const PHI_JETS: [&str; 3] = ["phi", "dphi", "d2phi"];

/// Similarity ansatz: a u-form containing `phi(omega)` with the symbol
/// `omega` as a placeholder, and the similarity variable as an expression
/// in (t, x).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ansatz {
    pub u_form: Expr,
    pub omega: Expr,
}

impl Ansatz {
    pub fn new(u_form: Expr, omega: Expr) -> Self {
        Ansatz { u_form, omega }
    }

    /// The concrete candidate u(t, x) with `omega` substituted.
    pub fn candidate(&self) -> Expr {
        substitute_one(&self.u_form, "omega", &self.omega)
    }
}

/// Sign branch of t used when the ansatz involves |t| or sign(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeBranch {
    Positive,
    Negative,
}

impl TimeBranch {
    pub fn anchor(self) -> f64 {
        match self {
            TimeBranch::Positive => 1.0,
            TimeBranch::Negative => -1.0,
        }
    }

    pub fn delta(self) -> f64 {
        self.anchor()
    }

    pub fn t_box(self) -> (f64, f64) {
        match self {
            TimeBranch::Positive => (0.5, 2.0),
            TimeBranch::Negative => (-2.0, -0.5),
        }
    }
}

/// Outcome of a reduction: the ODE residual as an expression in
/// (omega, phi, dphi, d2phi), normalized only by the section used for the
/// extraction so the second-derivative coefficient structure is intact.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedOde {
    pub ode: Expr,
    pub omega: Expr,
    /// worst proportionality deviation of the factorization check
    pub collapse_deviation: f64,
}

impl std::fmt::Display for ReducedOde {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ODE: {} = 0 in phi(omega)", self.ode)
    }
}

/// Substitutes the ansatz into the parent PDE and extracts the reduced ODE.
///
/// The residual must factor through the similarity variable; this is
/// enforced numerically (a non-invariant ansatz is an error). The ODE is
/// read off on the section t = branch anchor, inverting omega for x, and
/// the factorization `residual = multiplier(t, x) * ODE(omega, jets)` is
/// then certified on random samples.
pub fn reduce(
    eq: &ClassEquation,
    ansatz: &Ansatz,
    branch: TimeBranch,
    tol: f64,
) -> Result<ReducedOde> {
    let res = simplify(&residual(eq, &ansatz.candidate()));
    let jetted = simplify(&phi_jets_to_params(&res, Some(&ansatz.omega))?);
    let anchor = Expr::float(branch.anchor());

    let ode = if ansatz.omega.free_of(&["x"]) {
        // omega depends on t only; freeze x and rename
        let frozen = substitute_one(&jetted, "x", &Expr::one());
        simplify(&substitute_one(&frozen, "t", &Expr::var("omega")))
    } else {
        // freeze t on the branch and invert the (affine in x) section
        let frozen_omega = simplify(&substitute_one(&ansatz.omega, "t", &anchor));
        let slope = simplify(&differentiate(&frozen_omega, "x"));
        if !slope.free_of(&["x"]) || slope.is_zero() {
            return Err(Error::OutsideGrammar(format!(
                "section omega(t0, x) = {frozen_omega} is not affine in x"
            )));
        }
        let intercept = simplify(&(frozen_omega - slope.clone() * Expr::var("x")));
        let x_section = (Expr::var("omega") - intercept) * slope.recip();
        let frozen = substitute_one(&jetted, "t", &anchor);
        simplify(&substitute_one(&frozen, "x", &x_section))
    };

    let collapse_deviation = factorization_deviation(eq, ansatz, &jetted, &ode, branch)?;
    if collapse_deviation > tol {
        return Err(Error::Constraint(format!(
            "residual does not collapse to a function of omega (deviation {collapse_deviation:.3e}); the ansatz is not invariant for this equation"
        )));
    }
    Ok(ReducedOde { ode, omega: ansatz.omega.clone(), collapse_deviation })
}

/// Replaces `phi^(k)(arg)` with the jet parameters, checking the argument
/// matches the similarity variable when one is supplied.
pub fn phi_jets_to_params(e: &Expr, omega: Option<&Expr>) -> Result<Expr> {
    Ok(match e {
        Expr::Rational(_) | Expr::Float(_) | Expr::Var(_) | Expr::Param(_) => e.clone(),
        Expr::Sum(ts) => Expr::add(
            ts.iter().map(|t| phi_jets_to_params(t, omega)).collect::<Result<Vec<_>>>()?,
        ),
        Expr::Product(fs) => Expr::mul(
            fs.iter().map(|f| phi_jets_to_params(f, omega)).collect::<Result<Vec<_>>>()?,
        ),
        Expr::Pow(b, x) => {
            Expr::pow(phi_jets_to_params(b, omega)?, phi_jets_to_params(x, omega)?)
        }
        Expr::Exp(a) => Expr::exp(phi_jets_to_params(a, omega)?),
        Expr::Ln(a) => Expr::ln(phi_jets_to_params(a, omega)?),
        Expr::Abs(a) => Expr::abs(phi_jets_to_params(a, omega)?),
        Expr::Sign(a) => Expr::sign(phi_jets_to_params(a, omega)?),
        Expr::Fn(app) if app.name == "phi" => {
            if let Some(w) = omega {
                if app.arg.as_ref() != w {
                    return Err(Error::Shape(format!(
                        "phi applied to {} instead of the similarity variable {w}",
                        app.arg
                    )));
                }
            }
            let idx = app.order as usize;
            if idx >= PHI_JETS.len() {
                return Err(Error::Shape(format!(
                    "derivative order {} of phi exceeds the second jet",
                    app.order
                )));
            }
            Expr::param(PHI_JETS[idx])
        }
        Expr::Fn(app) => Expr::Fn(FnApp {
            name: app.name.clone(),
            order: app.order,
            arg: Box::new(phi_jets_to_params(&app.arg, omega)?),
        }),
    })
}

/// Certifies `jetted(t, x, jets) = multiplier(t, x) * ode(omega(t,x), jets)`
/// on random samples; returns the worst scaled deviation.
fn factorization_deviation(
    eq: &ClassEquation,
    ansatz: &Ansatz,
    jetted: &Expr,
    ode: &Expr,
    branch: TimeBranch,
) -> Result<f64> {
    let fns = eq.fn_table().clone();
    let tb = branch.t_box();
    let grid = eq.grid().with_box("t", tb.0.min(tb.1), tb.0.max(tb.1));
    let mut symbols = jetted.free_symbols();
    symbols.extend(ansatz.omega.free_symbols());
    for j in PHI_JETS {
        symbols.remove(j);
    }
    let omega_c = ansatz.omega.clone();
    let fns_c = fns.clone();
    let base_points = grid.sample_where(&symbols, &fns, move |a| {
        evaluate_with(&omega_c, a, &fns_c).is_ok()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed() ^ 0x0dea_110e);
    let mut worst = 0.0_f64;
    for p in &base_points {
        let omega_val = evaluate_with(&ansatz.omega, p, &fns)?;
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        let mut draws = 0;
        while lhs.len() < 6 && draws < 60 {
            draws += 1;
            let mut a = p.clone();
            a.insert("phi", rng.gen_range(0.6..1.8));
            a.insert("dphi", rng.gen_range(-1.0..1.0));
            a.insert("d2phi", rng.gen_range(-1.0..1.0));
            let mut b = a.clone();
            b.insert("omega", omega_val);
            match (evaluate_with(jetted, &a, &fns), evaluate_with(ode, &b, &fns)) {
                (Ok(l), Ok(r)) => {
                    lhs.push(l);
                    rhs.push(r);
                }
                _ => continue,
            }
        }
        if lhs.len() < 6 {
            return Err(Error::Sampling("could not sample the reduction jets".into()));
        }
        let dot: f64 = lhs.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        let nrm: f64 = rhs.iter().map(|b| b * b).sum();
        if nrm < 1e-20 {
            continue;
        }
        let lambda = dot / nrm;
        let mut scale = 1.0_f64;
        let mut dev = 0.0_f64;
        for (a, b) in lhs.iter().zip(&rhs) {
            dev = dev.max((a - lambda * b).abs());
            scale = scale.max(a.abs()).max((lambda * b).abs());
        }
        worst = worst.max(dev / scale.max(1.0));
    }
    Ok(worst)
}

/// Compares two ODE residuals in (omega, phi, dphi, d2phi) for
/// proportionality with a single fitted nonzero constant.
pub fn ode_proportional(
    stored: &Expr,
    extracted: &Expr,
    grid: &Grid,
    tol: f64,
) -> Result<(bool, f64, f64)> {
    let fns = FnTable::standard();
    let mut symbols = stored.free_symbols();
    symbols.extend(extracted.free_symbols());
    let stored_c = stored.clone();
    let extracted_c = extracted.clone();
    let fns_c = fns.clone();
    let jet_grid = grid
        .clone()
        .with_box("dphi", -1.0, 1.0)
        .with_box("d2phi", -1.0, 1.0)
        .with_points(24);
    let points = jet_grid.sample_where(&symbols, &fns, move |a| {
        evaluate_with(&stored_c, a, &fns_c).is_ok() && evaluate_with(&extracted_c, a, &fns_c).is_ok()
    })?;
    let mut svals = Vec::new();
    let mut evals = Vec::new();
    for p in &points {
        svals.push(evaluate_with(stored, p, &fns)?);
        evals.push(evaluate_with(extracted, p, &fns)?);
    }
    let dot: f64 = svals.iter().zip(&evals).map(|(a, b)| a * b).sum();
    let nrm: f64 = evals.iter().map(|b| b * b).sum();
    if nrm < 1e-18 {
        return Err(Error::Sampling("degenerate extracted ODE".into()));
    }
    let factor = dot / nrm;
    let mut dev = 0.0_f64;
    let mut scale = 1.0_f64;
    for (a, b) in svals.iter().zip(&evals) {
        dev = dev.max((a - factor * b).abs());
        scale = scale.max(a.abs()).max((factor * b).abs());
    }
    let scaled = dev / scale.max(1.0);
    Ok((scaled <= tol && factor.abs() > 1e-9, factor, scaled))
}

/// Rebuilds the full solution from a closed-form `phi(omega)`.
pub fn reconstruct(ansatz: &Ansatz, phi: &Expr) -> Expr {
    let with_omega = ansatz.candidate();
    simplify(&substitute_fn(&with_omega, "phi", phi, "omega"))
}

// ---------------------------------------------------------------------------
// First-order profiles: families defined by phi' = R(phi, omega)
// ---------------------------------------------------------------------------

/// Rewrites derivative applications of `phi` through a first-order ODE
/// `phi' = rhs(phi, omega)`, leaving `phi(arg)` itself in place. After the
/// rewrite the solution family can be residual-checked with `phi` sampled
/// as a free value.
pub fn rewrite_phi_first_order(e: &Expr, rhs: &Expr) -> Result<Expr> {
    let d_rhs = simplify(
        &(differentiate(rhs, "omega")
            + differentiate(rhs, "phi") * rhs.clone()),
    );
    rewrite_orders(e, rhs, &d_rhs)
}

fn rewrite_orders(e: &Expr, first: &Expr, second: &Expr) -> Result<Expr> {
    Ok(match e {
        Expr::Rational(_) | Expr::Float(_) | Expr::Var(_) | Expr::Param(_) => e.clone(),
        Expr::Sum(ts) => Expr::add(
            ts.iter().map(|t| rewrite_orders(t, first, second)).collect::<Result<Vec<_>>>()?,
        ),
        Expr::Product(fs) => Expr::mul(
            fs.iter().map(|f| rewrite_orders(f, first, second)).collect::<Result<Vec<_>>>()?,
        ),
        Expr::Pow(b, x) => Expr::pow(
            rewrite_orders(b, first, second)?,
            rewrite_orders(x, first, second)?,
        ),
        Expr::Exp(a) => Expr::exp(rewrite_orders(a, first, second)?),
        Expr::Ln(a) => Expr::ln(rewrite_orders(a, first, second)?),
        Expr::Abs(a) => Expr::abs(rewrite_orders(a, first, second)?),
        Expr::Sign(a) => Expr::sign(rewrite_orders(a, first, second)?),
        Expr::Fn(app) if app.name == "phi" && app.order > 0 => {
            if app.order > 2 {
                return Err(Error::Shape("phi derivatives beyond order 2".into()));
            }
            let template = if app.order == 1 { first } else { second };
            let arg = rewrite_orders(&app.arg, first, second)?;
            let mut b = BTreeMap::new();
            b.insert("omega".to_string(), arg.clone());
            let with_omega = substitute(template, &b);
            // phi in the template refers to phi(arg)
            substitute_phi_symbol(&with_omega, &Expr::func("phi", 0, arg))
        }
        Expr::Fn(app) => Expr::Fn(FnApp {
            name: app.name.clone(),
            order: app.order,
            arg: Box::new(rewrite_orders(&app.arg, first, second)?),
        }),
    })
}

fn substitute_phi_symbol(e: &Expr, value: &Expr) -> Expr {
    match e {
        Expr::Param(n) | Expr::Var(n) if n == "phi" => value.clone(),
        Expr::Sum(ts) => Expr::add(ts.iter().map(|t| substitute_phi_symbol(t, value)).collect()),
        Expr::Product(fs) => {
            Expr::mul(fs.iter().map(|f| substitute_phi_symbol(f, value)).collect())
        }
        Expr::Pow(b, x) => {
            Expr::pow(substitute_phi_symbol(b, value), substitute_phi_symbol(x, value))
        }
        Expr::Exp(a) => Expr::exp(substitute_phi_symbol(a, value)),
        Expr::Ln(a) => Expr::ln(substitute_phi_symbol(a, value)),
        Expr::Abs(a) => Expr::abs(substitute_phi_symbol(a, value)),
        Expr::Sign(a) => Expr::sign(substitute_phi_symbol(a, value)),
        Expr::Fn(app) => Expr::Fn(FnApp {
            name: app.name.clone(),
            order: app.order,
            arg: Box::new(substitute_phi_symbol(&app.arg, value)),
        }),
        _ => e.clone(),
    }
}

// ---------------------------------------------------------------------------
// Numeric integration of reduced ODEs for the roundtrip property
// ---------------------------------------------------------------------------

/// Densely tabulated trajectory of a second-order reduced ODE, exposed as a
/// function-symbol backend with derivatives through the ODE itself.
pub struct PhiTrajectory {
    omega0: f64,
    step: f64,
    phis: Vec<f64>,
    dphis: Vec<f64>,
    ode: Expr,
    fns: FnTable,
}

impl PhiTrajectory {
    fn lookup(&self, w: f64) -> Result<(f64, f64)> {
        let pos = (w - self.omega0) / self.step;
        if pos < 0.0 || pos >= (self.phis.len() - 1) as f64 {
            return Err(Error::Domain(format!("omega {w} outside integrated range")));
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        Ok((
            self.phis[i] * (1.0 - frac) + self.phis[i + 1] * frac,
            self.dphis[i] * (1.0 - frac) + self.dphis[i + 1] * frac,
        ))
    }

    fn second(&self, w: f64, phi: f64, dphi: f64) -> Result<f64> {
        solve_second_derivative(&self.ode, &self.fns, w, phi, dphi)
    }
}

/// Solves the (affine in d2phi) reduced ODE for the second derivative.
fn solve_second_derivative(
    ode: &Expr,
    fns: &FnTable,
    omega: f64,
    phi: f64,
    dphi: f64,
) -> Result<f64> {
    let base = Assignment::from([("omega", omega), ("phi", phi), ("dphi", dphi)]);
    let at0 = evaluate_with(ode, &base.clone().set("d2phi", 0.0), fns)?;
    let at1 = evaluate_with(ode, &base.set("d2phi", 1.0), fns)?;
    let slope = at1 - at0;
    if slope.abs() < 1e-14 {
        return Err(Error::Domain("ODE is degenerate in d2phi".into()));
    }
    Ok(-at0 / slope)
}

/// Integrates the reduced ODE with classical RK4 on a dense grid and wires
/// the trajectory into a function table under the symbol `phi`.
pub fn integrate_reduced_ode(
    ode: &Expr,
    omega_range: (f64, f64),
    phi0: f64,
    dphi0: f64,
    steps: usize,
) -> Result<FnTable> {
    let fns = FnTable::standard();
    let (w0, w1) = omega_range;
    if w1 <= w0 {
        return Err(Error::Domain("empty omega range".into()));
    }
    let h = (w1 - w0) / steps as f64;
    let mut phis = Vec::with_capacity(steps + 1);
    let mut dphis = Vec::with_capacity(steps + 1);
    let mut y = [phi0, dphi0];
    phis.push(y[0]);
    dphis.push(y[1]);
    let deriv = |w: f64, y: [f64; 2]| -> Result<[f64; 2]> {
        Ok([y[1], solve_second_derivative(ode, &fns, w, y[0], y[1])?])
    };
    for i in 0..steps {
        let w = w0 + i as f64 * h;
        let k1 = deriv(w, y)?;
        let k2 = deriv(w + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]])?;
        let k3 = deriv(w + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]])?;
        let k4 = deriv(w + h, [y[0] + h * k3[0], y[1] + h * k3[1]])?;
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        phis.push(y[0]);
        dphis.push(y[1]);
    }
    let trajectory = Arc::new(PhiTrajectory {
        omega0: w0,
        step: h,
        phis,
        dphis,
        ode: ode.clone(),
        fns: fns.clone(),
    });
    let mut table = FnTable::standard();
    table.insert(
        "phi",
        Arc::new(ClosureFn(move |order, w| {
            let (phi, dphi) = trajectory.lookup(w)?;
            match order {
                0 => Ok(phi),
                1 => Ok(dphi),
                2 => trajectory.second(w, phi, dphi),
                _ => Err(Error::Domain("phi derivatives beyond order 2".into())),
            }
        })),
    );
    Ok(table)
}

// ---------------------------------------------------------------------------
// The quadratic-in-t ansatz check for slow diffusion
// ---------------------------------------------------------------------------

/// One finding of the non-Lie ansatz verification.
#[derive(Debug, Clone, Serialize)]
pub struct AnsatzFinding {
    pub id: String,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnsatzVerdict {
    pub findings: Vec<AnsatzFinding>,
    /// true when the verified statements hold and the known discrepancies
    /// are confirmed as such
    pub pass: bool,
}

/// Checks the `u = (phi1(x) t + phi0(x))^2` family for
/// `u_t = (u^{-1/2} u_x)_x` and its transport to the localized-density
/// equation with mu = -1/2.
///
/// The profile system is `phi1'' = phi1^2`, `phi0'' = phi0 phi1` with
/// `phi1 = 6/x^2`. The tabulated second mode `x^{-3}` for `phi0` fails the
/// system (the Euler exponents of `phi0'' = 6 phi0 / x^2` are 3 and -2);
/// this is reported as a discrepancy finding and the corrected mode `x^3`
/// is verified, together with the correspondingly corrected transported
/// solution.
pub fn quadratic_ansatz_check(tol: f64) -> Result<AnsatzVerdict> {
    let e = |s: &str| crate::expr::parse(s).expect("static expression");
    let mut findings = Vec::new();

    // phi1 = 6/x^2 satisfies phi1'' = phi1^2 exactly
    let phi1 = e("6*x^(-2)");
    let lhs = differentiate(&differentiate(&phi1, "x"), "x");
    let rhs = Expr::pow(phi1.clone(), Expr::int(2));
    let phi1_ok = simplify(&(lhs - rhs)).is_zero();
    findings.push(AnsatzFinding {
        id: "phi1_profile".into(),
        pass: phi1_ok,
        note: "phi1'' - phi1^2 vanishes identically".into(),
    });

    // tabulated phi0 = c1/x^2 + c2/x^3 violates phi0'' = phi0 phi1
    let check_phi0 = |phi0: &Expr| -> Result<bool> {
        let res = simplify(
            &(differentiate(&differentiate(phi0, "x"), "x") - phi0.clone() * phi1.clone()),
        );
        if res.is_zero() {
            return Ok(true);
        }
        crate::expr::equal_numeric(&res, &Expr::zero(), &Grid::new(), tol)
    };
    let printed_fails = !check_phi0(&e("c1*x^(-2) + c2*x^(-3)"))?;
    findings.push(AnsatzFinding {
        id: "phi0_tabulated_mode".into(),
        pass: printed_fails,
        note: "discrepancy confirmed: the x^(-3) mode fails the profile system; \
               the Euler exponents are 3 and -2"
            .into(),
    });
    let corrected_ok = check_phi0(&e("c1*x^(-2) + c2*x^3"))?;
    findings.push(AnsatzFinding {
        id: "phi0_corrected_mode".into(),
        pass: corrected_ok,
        note: "corrected second mode x^3 satisfies the profile system".into(),
    });

    // the full solution on the parent equation, c2 = 0 branch as tabulated
    let parent = ClassEquation::new(e("1"), e("u^(-1/2)"), e("0"))?;
    let printed_sol = e("(6*t*x^(-2) + c1*x^(-2))^2");
    let rep = crate::verify::check_solution(&parent, &printed_sol, &parent.grid(), tol)?;
    findings.push(AnsatzFinding {
        id: "parent_solution_first_mode".into(),
        pass: rep.pass,
        note: format!("max scaled residual {:.3e}", rep.max_scaled),
    });
    let corrected_sol = e("(6*t*x^(-2) + c1*x^(-2) + c2*x^3)^2");
    let rep = crate::verify::check_solution(&parent, &corrected_sol, &parent.grid(), tol)?;
    findings.push(AnsatzFinding {
        id: "parent_solution_both_modes".into(),
        pass: rep.pass,
        note: format!("max scaled residual {:.3e}", rep.max_scaled),
    });

    // transported to the localized-density equation with mu = -1/2, gamma = 1
    let localized = ClassEquation::new(
        e("exp(-2*x) * (exp(-x) + 1)^(-5)"),
        e("u^(-1/2)"),
        e("u^(-1/2)"),
    )?;
    let transported_printed = e("(6*t + c1)^2 * (exp(-x) + 1)^6");
    let rep = crate::verify::check_solution(&localized, &transported_printed, &localized.grid(), tol)?;
    findings.push(AnsatzFinding {
        id: "localized_solution_tabulated_c2_zero".into(),
        pass: rep.pass,
        note: format!("max scaled residual {:.3e}", rep.max_scaled),
    });
    // the tabulated exp(-x) second term fails for c2 != 0
    let transported_bad = e("(6*t + c1 + c2*exp(-x))^2 * (exp(-x) + 1)^6");
    let rep = crate::verify::check_solution(&localized, &transported_bad, &localized.grid(), tol)?;
    findings.push(AnsatzFinding {
        id: "localized_solution_tabulated_second_term".into(),
        pass: !rep.pass,
        note: format!(
            "discrepancy confirmed: tabulated exp(-x) term leaves residual {:.3e}",
            rep.max_scaled
        ),
    });
    let transported_fixed = e("(6*t + c1 - c2*(exp(-x) + 1)^(-5))^2 * (exp(-x) + 1)^6");
    let rep = crate::verify::check_solution(&localized, &transported_fixed, &localized.grid(), tol)?;
    findings.push(AnsatzFinding {
        id: "localized_solution_corrected".into(),
        pass: rep.pass,
        note: format!("max scaled residual {:.3e}", rep.max_scaled),
    });

    let pass = findings.iter().all(|f| f.pass);
    Ok(AnsatzVerdict { findings, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn exp_diffusion() -> ClassEquation {
        ClassEquation::new(e("1"), e("e^u"), e("0")).unwrap()
    }

    #[test]
    fn stationary_reduction_of_exponential_diffusion() {
        // u = phi(x): (e^phi)'' = 0, i.e. e^phi (d2phi + dphi^2) = 0
        let ansatz = Ansatz::new(e("phi(omega)"), e("x"));
        let red = reduce(&exp_diffusion(), &ansatz, TimeBranch::Positive, 1e-9).unwrap();
        let stored = e("exp(phi) * (d2phi + dphi^2)");
        let (ok, factor, dev) =
            ode_proportional(&stored, &red.ode, &Grid::new(), 1e-9).unwrap();
        assert!(ok, "factor {factor}, dev {dev}, ode {}", red.ode);
    }

    #[test]
    fn traveling_wave_reduction() {
        // u = phi(x - eps t), eps = 1: (e^phi)'' = -phi'
        let ansatz = Ansatz::new(e("phi(omega)"), e("x - t"));
        let red = reduce(&exp_diffusion(), &ansatz, TimeBranch::Positive, 1e-9).unwrap();
        let stored = e("exp(phi)*(d2phi + dphi^2) + dphi");
        let (ok, _, dev) = ode_proportional(&stored, &red.ode, &Grid::new(), 1e-9).unwrap();
        assert!(ok, "dev {dev}, ode {}", red.ode);
    }

    #[test]
    fn time_only_reduction() {
        // u = phi(t) x^{-2} on u_t = (u^{-1} u_x)_x gives phi' = 2
        let eq = ClassEquation::new(e("1"), e("u^(-1)"), e("0")).unwrap();
        let ansatz = Ansatz::new(e("phi(omega) * x^(-2)"), e("t"));
        let red = reduce(&eq, &ansatz, TimeBranch::Positive, 1e-9).unwrap();
        let stored = e("dphi - 2");
        let (ok, _, dev) = ode_proportional(&stored, &red.ode, &Grid::new(), 1e-9).unwrap();
        assert!(ok, "dev {dev}, ode {}", red.ode);
    }

    #[test]
    fn non_invariant_ansatz_is_rejected() {
        // u = phi(x + t^2) is not invariant for exponential diffusion
        let ansatz = Ansatz::new(e("phi(omega)"), e("x + t^2"));
        assert!(reduce(&exp_diffusion(), &ansatz, TimeBranch::Positive, 1e-9).is_err());
    }

    #[test]
    fn corrupted_ode_detected() {
        let ansatz = Ansatz::new(e("phi(omega)"), e("x - t"));
        let red = reduce(&exp_diffusion(), &ansatz, TimeBranch::Positive, 1e-9).unwrap();
        // sign-flipped convection term
        let corrupted = e("exp(phi)*(d2phi + dphi^2) - dphi");
        let (ok, _, _) = ode_proportional(&corrupted, &red.ode, &Grid::new(), 1e-9).unwrap();
        assert!(!ok);
    }

    #[test]
    fn reconstruct_logarithmic_source_solution() {
        // row: u = phi(x) - ln|t| with (e^phi)'' = -delta; on t > 0 take
        // e^phi = -x^2/2 + c1 x + c0, so u = ln((-x^2/2 + c1 x + c0)/t)
        let ansatz = Ansatz::new(e("phi(omega) - ln(abs(t))"), e("x"));
        let phi = e("ln(-omega^2/2 + 3*omega + 1)");
        let u = reconstruct(&ansatz, &phi);
        let eq = exp_diffusion();
        let rep = crate::verify::check_solution(&eq, &u, &eq.grid(), 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn first_order_profile_family_has_zero_residual() {
        // traveling wave of exponential diffusion: phi' = (c1 - eps*phi) e^{-phi}
        let eq = exp_diffusion();
        let ansatz = Ansatz::new(e("phi(omega)"), e("x - t"));
        let res = residual(&eq, &ansatz.candidate());
        let rhs = e("(c1 - phi) * exp(-phi)");
        let rewritten = rewrite_phi_first_order(&res, &rhs).unwrap();
        let as_params = phi_jets_to_params(&rewritten, None).unwrap();
        let dev = crate::symmetry::zero_deviation(
            &simplify(&as_params),
            &Grid::new(),
            &FnTable::standard(),
        )
        .unwrap();
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn roundtrip_through_numeric_integration() {
        // integrate (e^phi)'' = -phi' and check the PDE residual of the
        // reconstructed traveling wave
        let eq = exp_diffusion();
        let ode = e("exp(phi)*(d2phi + dphi^2) + dphi");
        let table = integrate_reduced_ode(&ode, (-3.0, 3.0), 1.0, 0.3, 60000).unwrap();
        let u = e("phi(x - t)");
        let grid = eq.grid().with_box("x", 0.5, 1.5).with_box("t", 0.5, 1.5);
        let rep = crate::verify::check_solution_with(&eq, &u, &grid, 1e-6, &table).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn quadratic_ansatz_findings() {
        let verdict = quadratic_ansatz_check(1e-8).unwrap();
        assert!(verdict.pass, "{verdict:?}");
    }
}
