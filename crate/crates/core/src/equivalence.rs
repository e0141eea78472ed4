//! Equivalence-group machinery: continuous seven-parameter elements,
//! discrete sign involutions, named inter-case transformations, conditional
//! equivalence generators with closed-form flows, and the admissibility
//! filters for point transformations between class members.

use crate::error::{Error, Result};
use crate::expr::{
    differentiate, evaluate_with, simplify, substitute, Assignment, Expr, FnTable,
};
use crate::grid::Grid;
use crate::model::{ClassEquation, Domain, PointTransformation, VectorField};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Continuous and discrete equivalence-group elements
// ---------------------------------------------------------------------------

/// Discrete generators of the equivalence group: simultaneous sign changes
/// in the sets {t, D, K}, {x, K}, {u} and {f, D, K}. Each is an involution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Involution {
    TDK,
    XK,
    U,
    FDK,
}

pub const INVOLUTIONS: [Involution; 4] =
    [Involution::TDK, Involution::XK, Involution::U, Involution::FDK];

/// Element of the equivalence group of the class:
/// `t -> t e^{e4} + e1`, `x -> x e^{e5} + e2`, `u -> u e^{e6} + e3` with
/// `f -> f e^{e4 - 2 e5 + e7}`, `D -> D e^{e7}`, `K -> K e^{-e5 + e7}`,
/// optionally composed with discrete sign involutions (applied first).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    /// e1..e7 in storage order
    pub eps: [f64; 7],
    pub flips: Vec<Involution>,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn continuous(eps: [f64; 7]) -> Self {
        GroupElement { eps, flips: Vec::new() }
    }

    pub fn involution(which: Involution) -> Self {
        GroupElement { eps: [0.0; 7], flips: vec![which] }
    }

    pub fn with_eps(index1: usize, value: f64) -> Self {
        assert!((1..=7).contains(&index1));
        let mut eps = [0.0; 7];
        eps[index1 - 1] = value;
        GroupElement { eps, flips: Vec::new() }
    }

    fn sign_of(&self, which: Involution) -> f64 {
        let mut s = 1.0;
        for f in &self.flips {
            if *f == which {
                s = -s;
            }
        }
        s
    }

    /// Signs applied to the coordinates (t, x, u) by the flip set.
    fn coordinate_signs(&self) -> (f64, f64, f64) {
        (
            self.sign_of(Involution::TDK),
            self.sign_of(Involution::XK),
            self.sign_of(Involution::U),
        )
    }

    /// Signs applied to the profiles (f, D, K) by the flip set.
    fn profile_signs(&self) -> (f64, f64, f64) {
        let tdk = self.sign_of(Involution::TDK);
        let xk = self.sign_of(Involution::XK);
        let fdk = self.sign_of(Involution::FDK);
        (fdk, tdk * fdk, tdk * xk * fdk)
    }

    /// Induced transformation of the independent and dependent variables.
    pub fn point_transformation(&self) -> PointTransformation {
        let [e1, e2, e3, e4, e5, e6, _] = self.eps;
        let (st, sx, su) = self.coordinate_signs();
        let map = |name: &str, s: f64, scale: f64, shift: f64| {
            Expr::float(s * scale.exp()) * Expr::var(name) + Expr::float(shift)
        };
        let inv = |name: &str, s: f64, scale: f64, shift: f64| {
            (Expr::var(name) - Expr::float(shift)) * Expr::float(1.0 / (s * scale.exp()))
        };
        PointTransformation::new(
            (map("t", st, e4, e1), map("x", sx, e5, e2), map("u", su, e6, e3)),
            (inv("t", st, e4, e1), inv("x", sx, e5, e2), inv("u", su, e6, e3)),
            &Grid::new(),
        )
        .expect("affine maps are invertible")
    }

    /// Action on an equation: profiles are pulled back through the variable
    /// change and rescaled.
    pub fn apply_to_equation(&self, eq: &ClassEquation) -> Result<ClassEquation> {
        let [_e1, e2, e3, e4, e5, e6, e7] = self.eps;
        let (_st, sx, su) = self.coordinate_signs();
        let (pf, pd, pk) = self.profile_signs();
        let pull = |profile: &Expr, var: &str, s: f64, scale: f64, shift: f64| {
            let inv = (Expr::var(var) - Expr::float(shift)) * Expr::float(1.0 / (s * scale.exp()));
            let mut b = BTreeMap::new();
            b.insert(var.to_string(), inv);
            substitute(profile, &b)
        };
        let f_new = Expr::float(pf * (e4 - 2.0 * e5 + e7).exp()) * pull(&eq.f, "x", sx, e5, e2);
        let d_new = Expr::float(pd * e7.exp()) * pull(&eq.d, "u", su, e6, e3);
        let k_new = Expr::float(pk * (-e5 + e7).exp()) * pull(&eq.k, "u", su, e6, e3);
        let tr = self.point_transformation();
        let domain = transform_domain(&tr, &eq.domain)?;
        ClassEquation::with_profiles(
            simplify(&f_new),
            simplify(&d_new),
            simplify(&k_new),
            domain,
            eq.fn_table().clone(),
        )
    }

    /// Group law for flip-free elements: the element acting like `self`
    /// followed by `other`.
    pub fn then(&self, other: &GroupElement) -> Result<GroupElement> {
        if !self.flips.is_empty() || !other.flips.is_empty() {
            return Err(Error::Constraint(
                "composition is defined for continuous elements only".into(),
            ));
        }
        let a = self.eps;
        let b = other.eps;
        let compose_affine = |shift_a: f64, scale_a: f64, shift_b: f64, scale_b: f64| {
            (shift_a * scale_b.exp() + shift_b, scale_a + scale_b)
        };
        let (e1, e4) = compose_affine(a[0], a[3], b[0], b[3]);
        let (e2, e5) = compose_affine(a[1], a[4], b[1], b[4]);
        let (e3, e6) = compose_affine(a[2], a[5], b[2], b[5]);
        Ok(GroupElement::continuous([e1, e2, e3, e4, e5, e6, a[6] + b[6]]))
    }

    pub fn inverse(&self) -> Result<GroupElement> {
        if !self.flips.is_empty() {
            return Err(Error::Constraint(
                "inverse is defined for continuous elements only".into(),
            ));
        }
        let [e1, e2, e3, e4, e5, e6, e7] = self.eps;
        Ok(GroupElement::continuous([
            -e1 * (-e4).exp(),
            -e2 * (-e5).exp(),
            -e3 * (-e6).exp(),
            -e4,
            -e5,
            -e6,
            -e7,
        ]))
    }
}

/// Maps a domain box through a transformation, assuming coordinate maps are
/// monotone on the box (checked by sampling interior points).
pub fn transform_domain(tr: &PointTransformation, d: &Domain) -> Result<Domain> {
    let eval_at = |e: &Expr, t: f64, x: f64, u: f64| -> Result<f64> {
        let a = Assignment::from([("t", t), ("x", x), ("u", u)]);
        evaluate_with(e, &a, tr.fn_table())
    };
    let (t0, t1) = d.t;
    let (x0, x1) = d.x;
    let (u0, u1) = d.u;
    let mut tt = Vec::new();
    let mut xx = Vec::new();
    let mut uu = Vec::new();
    for &t in &[t0, t1] {
        for &x in &[x0, x1] {
            for &u in &[u0, u1] {
                tt.push(eval_at(&tr.t_map, t, x, u)?);
                xx.push(eval_at(&tr.x_map, t, x, u)?);
                uu.push(eval_at(&tr.u_map, t, x, u)?);
            }
        }
    }
    let minmax = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    Ok(Domain { t: minmax(&tt), x: minmax(&xx), u: minmax(&uu) })
}

// ---------------------------------------------------------------------------
// Transport oracle: does a point transformation map one equation to another?
// ---------------------------------------------------------------------------

/// Jet sample for the target residual.
#[derive(Debug, Clone, Copy)]
pub struct JetPoint {
    pub w: f64,
    pub w_t: f64,
    pub w_y: f64,
    pub w_yy: f64,
}

/// Evidence that a transformation maps the source operator onto a target
/// operator up to a nonzero pointwise factor.
#[derive(Debug, Clone, Serialize)]
pub struct TransportReport {
    pub max_scaled: f64,
    pub min_factor: f64,
    pub points: usize,
    pub pass: bool,
}

/// Numeric check that `tr` maps `src` onto `tgt`.
///
/// At sampled base points the source residual of the pulled-back jet must be
/// proportional to the target residual over independent jet samples, with a
/// nonzero fitted factor. Proportional operators have identical solution
/// sets, so this certifies the transformed equation without symbolic
/// rearrangement.
pub fn check_equation_transport(
    tr: &PointTransformation,
    src: &ClassEquation,
    tgt: &ClassEquation,
    grid: &Grid,
    tol: f64,
) -> Result<TransportReport> {
    let tgt = tgt.clone();
    let fns = tgt.fn_table().clone();
    let target = move |tau: f64, y: f64, jet: &JetPoint| -> Result<f64> {
        let a = Assignment::from([("t", tau), ("x", y), ("u", jet.w)]);
        let f = evaluate_with(&tgt.f, &a, &fns)?;
        let d = evaluate_with(&tgt.d, &a, &fns)?;
        let du = evaluate_with(&tgt.d_u(), &a, &fns)?;
        let k = evaluate_with(&tgt.k, &a, &fns)?;
        Ok(f * jet.w_t - du * jet.w_y * jet.w_y - d * jet.w_yy - k * jet.w_y)
    };
    check_operator_transport(tr, src, &target, grid, tol)
}

/// As [`check_equation_transport`] with an arbitrary target jet residual,
/// which admits targets outside the class (e.g. reaction-diffusion forms).
pub fn check_operator_transport(
    tr: &PointTransformation,
    src: &ClassEquation,
    target_residual: &dyn Fn(f64, f64, &JetPoint) -> Result<f64>,
    grid: &Grid,
    tol: f64,
) -> Result<TransportReport> {
    let fns = src.fn_table().merged(tr.fn_table());
    // u-affine split of the map: U = p*u + q
    let p = simplify(&differentiate(&tr.u_map, "u"));
    let q = simplify(&(tr.u_map.clone() - p.clone() * Expr::var("u")));
    if !p.free_of(&["u"]) || !q.free_of(&["u"]) {
        return Err(Error::Shape("u-map must be affine in u".into()));
    }
    let d = |e: &Expr, v: &str| simplify(&differentiate(e, v));
    let tt = d(&tr.t_map, "t");
    let xt = d(&tr.x_map, "t");
    let xx = d(&tr.x_map, "x");
    let xxx = d(&xx, "x");
    let pt = d(&p, "t");
    let px = d(&p, "x");
    let pxx = d(&px, "x");
    let qt = d(&q, "t");
    let qx = d(&q, "x");
    let qxx = d(&qx, "x");

    let base_exprs = [
        &tr.t_map, &tr.x_map, &p, &q, &tt, &xt, &xx, &xxx, &pt, &px, &pxx, &qt, &qx, &qxx,
        &src.f, &src.d, &src.k,
    ];
    let points = grid.samples_for(&base_exprs, &fns)?;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed() ^ 0x7261_6e64);
    let mut max_scaled = 0.0_f64;
    let mut min_factor = f64::INFINITY;
    for point in &points {
        let ev = |e: &Expr| evaluate_with(e, point, &fns);
        let (tau, y) = (ev(&tr.t_map)?, ev(&tr.x_map)?);
        let (vtt, vxt, vxx, vxxx) = (ev(&tt)?, ev(&xt)?, ev(&xx)?, ev(&xxx)?);
        let (vp, vpt, vpx, vpxx) = (ev(&p)?, ev(&pt)?, ev(&px)?, ev(&pxx)?);
        let (vq, vqt, vqx, vqxx) = (ev(&q)?, ev(&qt)?, ev(&qx)?, ev(&qxx)?);
        let vf = ev(&src.f)?;
        let x_here = point.get("x").unwrap_or(1.0);

        let mut rs = Vec::new();
        let mut rt = Vec::new();
        let mut attempts = 0;
        while rs.len() < 6 && attempts < 60 {
            attempts += 1;
            let jet = JetPoint {
                w: rng.gen_range(0.6..1.8),
                w_t: rng.gen_range(-1.0..1.0),
                w_y: rng.gen_range(-1.0..1.0),
                w_yy: rng.gen_range(-1.0..1.0),
            };
            // pull the jet back through u = (w - q)/p
            let u = (jet.w - vq) / vp;
            let u_t = (jet.w_t * vtt + jet.w_y * vxt - vqt - u * vpt) / vp;
            let u_x = (jet.w_y * vxx - vqx - u * vpx) / vp;
            let u_xx = (jet.w_yy * vxx * vxx + jet.w_y * vxxx
                - vqxx
                - 2.0 * u_x * vpx
                - u * vpxx)
                / vp;
            let ua = Assignment::from([("u", u), ("x", x_here)]);
            // a pulled-back u outside the profile domain: redraw the jet
            let (vd, vdu, vk) = match (
                evaluate_with(&src.d, &ua, &fns),
                evaluate_with(&src.d_u(), &ua, &fns),
                evaluate_with(&src.k, &ua, &fns),
            ) {
                (Ok(a), Ok(b), Ok(c)) => (a, b, c),
                _ => continue,
            };
            let r_src = vf * u_t - vdu * u_x * u_x - vd * u_xx - vk * u_x;
            let r_tgt = match target_residual(tau, y, &jet) {
                Ok(v) => v,
                Err(_) => continue,
            };
            rs.push(r_src);
            rt.push(r_tgt);
        }
        if rs.len() < 6 {
            return Err(Error::Sampling(
                "could not draw admissible jet samples during transport check".into(),
            ));
        }
        // fit the pointwise factor lambda through the origin
        let dot: f64 = rs.iter().zip(&rt).map(|(a, b)| a * b).sum();
        let nrm: f64 = rt.iter().map(|b| b * b).sum();
        if nrm < 1e-20 {
            return Err(Error::Sampling(
                "degenerate target residual during transport check".into(),
            ));
        }
        let lambda = dot / nrm;
        min_factor = min_factor.min(lambda.abs());
        let mut scale = 1.0_f64;
        let mut dev = 0.0_f64;
        for (a, b) in rs.iter().zip(&rt) {
            dev = dev.max((a - lambda * b).abs());
            scale = scale.max(a.abs()).max((lambda * b).abs());
        }
        max_scaled = max_scaled.max(dev / scale.max(1.0));
    }
    let pass = max_scaled <= tol && min_factor > 1e-6;
    Ok(TransportReport { max_scaled, min_factor, points: points.len(), pass })
}

// ---------------------------------------------------------------------------
// Solution and generator transport
// ---------------------------------------------------------------------------

/// A transported solution; `closed_form` is false when the expression leans
/// on numeric profile symbols.
#[derive(Debug, Clone, Serialize)]
pub struct TransportedSolution {
    pub expr: Expr,
    pub closed_form: bool,
}

/// Expresses a solution of the source equation in the target variables:
/// `u_new(t, x) = U(t0, x0, sol(t0, x0))` with `(t0, x0)` the stored inverse.
pub fn apply_to_solution(tr: &PointTransformation, sol: &Expr) -> TransportedSolution {
    let mut back = BTreeMap::new();
    back.insert("t".to_string(), tr.t_inv.clone());
    back.insert("x".to_string(), tr.x_inv.clone());
    let pulled = substitute(sol, &back);
    back.insert("u".to_string(), pulled);
    let expr = simplify(&substitute(&tr.u_map, &back));
    let closed_form = expr.fn_symbols().is_empty();
    TransportedSolution { expr, closed_form }
}

/// Change-of-variables action on a generator. If `v` generates a symmetry
/// of an equation, the image generates a symmetry of the transformed one.
pub fn push_forward(tr: &PointTransformation, v: &VectorField) -> Result<VectorField> {
    let mut back = BTreeMap::new();
    back.insert("t".to_string(), tr.t_inv.clone());
    back.insert("x".to_string(), tr.x_inv.clone());
    back.insert("u".to_string(), tr.u_inv.clone());
    let component = |coord_map: &Expr| -> Expr {
        let applied = v.apply(coord_map);
        simplify(&substitute(&applied, &back))
    };
    VectorField::new(component(&tr.t_map), component(&tr.x_map), component(&tr.u_map))
}

// ---------------------------------------------------------------------------
// Admissibility filters
// ---------------------------------------------------------------------------

/// Structural verdict on a candidate transformation between class members:
/// the time map must depend on t only, the space map must be free of u, the
/// u-map must be affine in u. A variable u-coefficient additionally
/// requires power or exponential diffusivity; this is recorded as a
/// requirement, not auto-verified against a concrete D.
#[derive(Debug, Clone, Serialize)]
pub struct Admissibility {
    pub t_depends_only_on_t: bool,
    pub x_free_of_u: bool,
    pub u_affine: bool,
    pub requires_power_or_exponential_diffusivity: bool,
    pub admissible: bool,
}

pub fn admissibility_check(tr: &PointTransformation) -> Admissibility {
    let t_ok = tr.t_map.free_of(&["x", "u"]);
    let x_ok = tr.x_map.free_of(&["u"]);
    let u1 = simplify(&differentiate(&tr.u_map, "u"));
    let u0 = simplify(&(tr.u_map.clone() - u1.clone() * Expr::var("u")));
    let u_ok = u1.free_of(&["u"]) && u0.free_of(&["u"]);
    let varying = !(u1.free_of(&["t", "x"]) && u0.free_of(&["t", "x"]));
    Admissibility {
        t_depends_only_on_t: t_ok,
        x_free_of_u: x_ok,
        u_affine: u_ok,
        requires_power_or_exponential_diffusivity: u_ok && varying,
        admissible: t_ok && x_ok && u_ok,
    }
}

// ---------------------------------------------------------------------------
// Conditional equivalence generators and their flows
// ---------------------------------------------------------------------------

/// Generator of a (conditional) equivalence algebra: a vector field on
/// (t, x, u)-space extended by logarithmic rates on the profiles f, D, K.
/// `flow` stores the closed-form exponentiation templates in the parameter
/// `epsilon` when available; otherwise the characteristic system is
/// integrated numerically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceGenerator {
    pub name: String,
    /// constraint tag such as "K=D" or "D=e^u, K=0"; empty for the full class
    #[serde(default)]
    pub constraint: String,
    pub xi_t: Expr,
    pub xi_x: Expr,
    pub eta: Expr,
    /// d ln f / d epsilon along the flow, as a function of x
    #[serde(default = "Expr::zero")]
    pub f_log: Expr,
    #[serde(default = "Expr::zero")]
    pub d_log: Expr,
    #[serde(default = "Expr::zero")]
    pub k_log: Expr,
    #[serde(default)]
    pub flow: Option<FlowTemplates>,
    #[serde(default)]
    pub note: String,
}

/// Closed-form flow of a generator. All expressions may contain the
/// parameter `epsilon`; `f_factor` is the multiplier with
/// `f_new(x_new) = f(x) * f_factor(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowTemplates {
    pub t_map: Expr,
    pub x_map: Expr,
    pub u_map: Expr,
    pub t_inv: Expr,
    pub x_inv: Expr,
    pub u_inv: Expr,
    pub f_factor: Expr,
}

/// A concrete flow at a parameter value.
#[derive(Debug, Clone)]
pub struct Flow {
    pub transform: PointTransformation,
    /// multiplier applied to the density before pullback
    pub f_factor: Expr,
    pub d_scale: f64,
    pub k_scale: f64,
    /// true when the u-map varies with x, in which case the flow leaves the
    /// constrained profiles D, K untouched and pushes everything into f
    pub profile_only: bool,
}

impl EquivalenceGenerator {
    /// Exponentiates the generator for time `epsilon` using the stored
    /// closed-form templates; the templates are cross-checked against
    /// fourth-order integration of the characteristic system in the tests.
    pub fn flow_at(&self, epsilon: f64, grid: &Grid) -> Result<Flow> {
        let templates = self.flow.as_ref().ok_or_else(|| {
            Error::Constraint(format!(
                "generator {} has no closed-form flow; use flow_numeric_at",
                self.name
            ))
        })?;
        let eps = Expr::float(epsilon);
        let sub = |e: &Expr| -> Expr {
            let mut b = BTreeMap::new();
            b.insert("epsilon".to_string(), eps.clone());
            simplify(&substitute(e, &b))
        };
        let transform = PointTransformation::new(
            (sub(&templates.t_map), sub(&templates.x_map), sub(&templates.u_map)),
            (sub(&templates.t_inv), sub(&templates.x_inv), sub(&templates.u_inv)),
            grid,
        )?;
        let d_rate = self.d_log.as_f64().ok_or_else(|| {
            Error::CatalogData(format!("d_log of {} must be constant", self.name))
        })?;
        let k_rate = self.k_log.as_f64().ok_or_else(|| {
            Error::CatalogData(format!("k_log of {} must be constant", self.name))
        })?;
        // an x-dependent u-map pushes all profile changes into the density
        let profile_only = !transform.u_map.free_of(&["x", "t"]);
        Ok(Flow {
            transform,
            f_factor: sub(&templates.f_factor),
            d_scale: (d_rate * epsilon).exp(),
            k_scale: (k_rate * epsilon).exp(),
            profile_only,
        })
    }

    /// Fourth-order Runge-Kutta integration of the characteristic system
    /// from a single anchor point, used as the oracle for closed forms and
    /// as the fallback for generators without templates. Returns the flow
    /// image of (t, x, u, ln f-offset).
    pub fn flow_numeric_at(
        &self,
        epsilon: f64,
        start: (f64, f64, f64),
        fns: &FnTable,
    ) -> Result<(f64, f64, f64, f64)> {
        let rhs = |state: [f64; 4]| -> Result<[f64; 4]> {
            let a = Assignment::from([("t", state[0]), ("x", state[1]), ("u", state[2])]);
            Ok([
                evaluate_with(&self.xi_t, &a, fns)?,
                evaluate_with(&self.xi_x, &a, fns)?,
                evaluate_with(&self.eta, &a, fns)?,
                evaluate_with(&self.f_log, &a, fns)?,
            ])
        };
        let steps = 400;
        let h = epsilon / steps as f64;
        let mut s = [start.0, start.1, start.2, 0.0];
        for _ in 0..steps {
            let k1 = rhs(s)?;
            let mid1 = add_scaled(s, k1, h / 2.0);
            let k2 = rhs(mid1)?;
            let mid2 = add_scaled(s, k2, h / 2.0);
            let k3 = rhs(mid2)?;
            let end = add_scaled(s, k3, h);
            let k4 = rhs(end)?;
            for i in 0..4 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        Ok((s[0], s[1], s[2], s[3]))
    }
}

fn add_scaled(s: [f64; 4], k: [f64; 4], h: f64) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

impl Flow {
    /// Applies the flow to an equation satisfying the generator's
    /// constraint. The density is multiplied by the flow factor and pulled
    /// back; the u-profiles are rescaled and pulled back through the u-map
    /// unless the flow is profile-only.
    pub fn apply_to_equation(&self, eq: &ClassEquation) -> Result<ClassEquation> {
        let mut back_x = BTreeMap::new();
        back_x.insert("x".to_string(), self.transform.x_inv.clone());
        let f_new = simplify(&substitute(
            &(eq.f.clone() * self.f_factor.clone()),
            &back_x,
        ));
        let (d_new, k_new) = if self.profile_only {
            (eq.d.clone(), eq.k.clone())
        } else {
            // u-map is affine and x-free here: u_inv expresses old u in new
            let mut back_u = BTreeMap::new();
            back_u.insert("u".to_string(), self.transform.u_inv.clone());
            (
                simplify(&(Expr::float(self.d_scale) * substitute(&eq.d, &back_u))),
                simplify(&(Expr::float(self.k_scale) * substitute(&eq.k, &back_u))),
            )
        };
        let domain = transform_domain(&self.transform, &eq.domain)?;
        ClassEquation::with_profiles(f_new, d_new, k_new, domain, eq.fn_table().clone())
    }
}

// ---------------------------------------------------------------------------
// The discrete involution example of the class and the reaction-diffusion map
// ---------------------------------------------------------------------------

/// Verdict of the worked involution checks.
#[derive(Debug, Clone, Serialize)]
pub struct InvolutionExample {
    pub pair_transport: TransportReport,
    pub invariance_even_density: bool,
    pub invariance_odd_density_fails: bool,
    pub reaction_diffusion_transport: TransportReport,
    pub pass: bool,
}

/// Reproduces the worked discrete-equivalence examples:
/// the reflection `t -> t, x -> -x, u -> u + alpha x` between
/// `f(x) u_t = (e^u u_x)_x + alpha e^u u_x` and
/// `e^{-alpha x} f(-x) u_t = (e^u u_x)_x + alpha e^u u_x`,
/// its invariance criterion `f = g(x) e^{-alpha x / 2}` with even `g`, and
/// the mapping of `e^{-x/2} u_t = e^u (u_xx + u_x^2 + u_x)` to the
/// reaction-diffusion form `u_t = (e^u u_x)_x - e^u / 4`.
pub fn involution_example_check(grid: &Grid, tol: f64) -> Result<InvolutionExample> {
    let alpha = 1.0;
    let e = |s: &str| crate::expr::parse(s).expect("static expression");
    let reflect = |alpha: f64| -> Result<PointTransformation> {
        PointTransformation::new(
            (
                Expr::var("t"),
                Expr::var("x").neg(),
                Expr::var("u") + Expr::float(alpha) * Expr::var("x"),
            ),
            (
                Expr::var("t"),
                Expr::var("x").neg(),
                Expr::var("u") + Expr::float(alpha) * Expr::var("x"),
            ),
            grid,
        )
    };
    let tr = reflect(alpha)?;

    // generic density: f = 2 + x + x^2 on a sign-symmetric box
    let domain = Domain { t: (0.5, 2.0), x: (-1.5, 1.5), u: (0.5, 2.0) };
    let src = ClassEquation::with_domain(
        e("2 + x + x^2"),
        e("e^u"),
        Expr::float(alpha) * e("e^u"),
        domain,
    )?;
    let tgt = ClassEquation::with_domain(
        e("exp(-x) * (2 - x + x^2)"),
        e("e^u"),
        Expr::float(alpha) * e("e^u"),
        domain,
    )?;
    let sym_grid = domain.grid();
    let pair_transport = check_equation_transport(&tr, &src, &tgt, &sym_grid, tol)?;

    // invariance iff the density is g(x) e^{-alpha x/2} with g even: the
    // reflected density e^{-alpha x} f(-x) must equal f itself
    let check_invariance = |g: &Expr| -> Result<bool> {
        let f = simplify(&(g.clone() * e("exp(-x/2)")));
        let image = apply_reflection_to_density(&f, alpha);
        crate::expr::equal_numeric_with(&image, &f, &sym_grid, tol, &FnTable::standard())
    };
    let invariance_even_density = check_invariance(&e("1 + x^2"))?;
    let invariance_odd_density_fails = !check_invariance(&e("x + x^3"))?;

    // e^{-x/2} u_t = e^u(u_xx + u_x^2 + u_x) maps to u_t = (e^u u_x)_x - e^u/4
    let half = reflect(0.5)?;
    let src_rd = ClassEquation::with_domain(e("exp(-x/2)"), e("e^u"), e("e^u"), domain)?;
    let target_residual = move |_tau: f64, _y: f64, jet: &JetPoint| -> Result<f64> {
        let ew = jet.w.exp();
        Ok(jet.w_t - ew * (jet.w_yy + jet.w_y * jet.w_y) + 0.25 * ew)
    };
    let reaction_diffusion_transport =
        check_operator_transport(&half, &src_rd, &target_residual, &sym_grid, tol)?;

    let pass = pair_transport.pass
        && invariance_even_density
        && invariance_odd_density_fails
        && reaction_diffusion_transport.pass;
    Ok(InvolutionExample {
        pair_transport,
        invariance_even_density,
        invariance_odd_density_fails,
        reaction_diffusion_transport,
        pass,
    })
}

/// Image density of the reflection example: `e^{-alpha x} f(-x)`.
fn apply_reflection_to_density(f: &Expr, alpha: f64) -> Expr {
    let mut b = BTreeMap::new();
    b.insert("x".to_string(), Expr::var("x").neg());
    let reflected = substitute(f, &b);
    simplify(&(Expr::exp(Expr::float(-alpha) * Expr::var("x")) * reflected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn identity_element_preserves_equation() {
        let eq = ClassEquation::new(e("e^x"), e("u^2"), e("u")).unwrap();
        let out = GroupElement::identity().apply_to_equation(&eq).unwrap();
        let g = eq.grid();
        assert!(crate::expr::equal_numeric(&out.f, &eq.f, &g, 1e-12).unwrap());
        assert!(crate::expr::equal_numeric(&out.d, &eq.d, &g, 1e-12).unwrap());
    }

    #[test]
    fn x_scaling_rescales_density_and_convection() {
        // e5 = ln 2: f -> f(x/2)/4, D -> D, K -> K/2
        let eq = ClassEquation::new(e("x^2"), e("u^2"), e("u")).unwrap();
        let g = GroupElement::with_eps(5, (2.0f64).ln());
        let out = g.apply_to_equation(&eq).unwrap();
        let grid = Grid::new().with_box("x", 1.0, 4.0);
        assert!(crate::expr::equal_numeric(&out.f, &e("x^2/16"), &grid, 1e-10).unwrap());
        assert!(crate::expr::equal_numeric(&out.k, &e("u/2"), &grid, 1e-10).unwrap());
        assert!(crate::expr::equal_numeric(&out.d, &e("u^2"), &grid, 1e-10).unwrap());
    }

    #[test]
    fn continuous_composition_law() {
        let g1 = GroupElement::continuous([0.3, -0.2, 0.1, 0.4, -0.3, 0.2, 0.5]);
        let g2 = GroupElement::continuous([-0.1, 0.2, 0.3, -0.2, 0.1, -0.4, -0.3]);
        let eq = ClassEquation::new(e("exp(x)"), e("u^2"), e("u^3")).unwrap();
        let seq = g2.apply_to_equation(&g1.apply_to_equation(&eq).unwrap()).unwrap();
        let composed = g1.then(&g2).unwrap().apply_to_equation(&eq).unwrap();
        let grid = seq.domain.grid();
        for (a, b) in [(&seq.f, &composed.f), (&seq.d, &composed.d), (&seq.k, &composed.k)] {
            assert!(crate::expr::equal_numeric(a, b, &grid, 1e-9).unwrap());
        }
        // inverse law
        let id = g1.then(&g1.inverse().unwrap()).unwrap();
        for v in id.eps {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn involutions_square_to_identity() {
        let eq = ClassEquation::new(e("2 + x"), e("u^2 + 1"), e("u^3")).unwrap();
        for which in INVOLUTIONS {
            let g = GroupElement::involution(which);
            let once = g.apply_to_equation(&eq).unwrap();
            let twice = g.apply_to_equation(&once).unwrap();
            let grid = eq.grid();
            assert!(
                crate::expr::equal_numeric(&twice.f, &eq.f, &grid, 1e-10).unwrap(),
                "{which:?} density not involutive"
            );
            assert!(crate::expr::equal_numeric(&twice.d, &eq.d, &grid, 1e-10).unwrap());
            assert!(crate::expr::equal_numeric(&twice.k, &eq.k, &grid, 1e-10).unwrap());
        }
    }

    #[test]
    fn flip_x_produces_class_member() {
        // x -> -x sends f(x) to f(-x) and K to -K
        let eq = ClassEquation::new(e("exp(x)"), e("e^u"), e("u")).unwrap();
        let out = GroupElement::involution(Involution::XK).apply_to_equation(&eq).unwrap();
        let grid = Grid::new().with_box("x", -2.0, -0.5);
        assert!(crate::expr::equal_numeric(&out.f, &e("exp(-x)"), &grid, 1e-10).unwrap());
        assert!(crate::expr::equal_numeric(&out.k, &e("-u"), &grid, 1e-10).unwrap());
    }

    #[test]
    fn transport_oracle_detects_right_and_wrong_targets() {
        // x_new = e^{-x} maps (e^{-2x}, D, K=D) to (1, D, 0)
        let tr = PointTransformation::new(
            (Expr::var("t"), e("exp(-x)"), Expr::var("u")),
            (Expr::var("t"), e("-ln(x)"), Expr::var("u")),
            &Grid::new(),
        )
        .unwrap();
        let src = ClassEquation::new(e("exp(-2*x)"), e("e^u"), e("e^u")).unwrap();
        let tgt = ClassEquation::with_domain(
            e("1"),
            e("e^u"),
            e("0"),
            Domain { t: (0.5, 2.0), x: (0.1, 0.7), u: (0.5, 2.0) },
        )
        .unwrap();
        let rep = check_equation_transport(&tr, &src, &tgt, &Grid::new(), 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
        // wrong target: nonzero convection
        let bad = ClassEquation::with_domain(
            e("1"),
            e("e^u"),
            e("e^u"),
            Domain { t: (0.5, 2.0), x: (0.1, 0.7), u: (0.5, 2.0) },
        )
        .unwrap();
        let rep = check_equation_transport(&tr, &src, &bad, &Grid::new(), 1e-9).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn pushforward_hand_values() {
        // x_new = e^{-x}: dx maps to -x_new d/dx_new, e^x dx maps to -d/dx_new
        let tr = PointTransformation::new(
            (Expr::var("t"), e("exp(-x)"), Expr::var("u")),
            (Expr::var("t"), e("-ln(x)"), Expr::var("u")),
            &Grid::new(),
        )
        .unwrap();
        let image = push_forward(&tr, &VectorField::d_x()).unwrap();
        assert_eq!(image.xi_x, e("-x"));
        let ex = VectorField::new(e("0"), e("exp(x)"), e("0")).unwrap();
        let image = push_forward(&tr, &ex).unwrap();
        assert_eq!(image.xi_x, e("-1"));
    }

    #[test]
    fn admissibility_examples() {
        let grid = Grid::new();
        // t_new = e^t, x_new = e^t x is admissible
        let tr = PointTransformation::new(
            (e("exp(t)"), e("exp(t)*x"), Expr::var("u")),
            (e("ln(t)"), e("x/t"), Expr::var("u")),
            &grid,
        )
        .unwrap();
        let v = admissibility_check(&tr);
        assert!(v.admissible);
        // t_new = t + x violates the evolution structure
        let bad = PointTransformation::new_unchecked(
            (e("t + x"), e("x"), e("u")),
            (e("t - x"), e("x"), e("u")),
        );
        assert!(!admissibility_check(&bad).t_depends_only_on_t);
        // u_new = u^2 is not affine
        let bad_u = PointTransformation::new_unchecked(
            (e("t"), e("x"), e("u^2")),
            (e("t"), e("x"), e("u^(1/2)")),
        );
        assert!(!admissibility_check(&bad_u).u_affine);
    }

    #[test]
    fn involution_example_reproduces_targets() {
        let rep = involution_example_check(&Grid::new(), 1e-8).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
