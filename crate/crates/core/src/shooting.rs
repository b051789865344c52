//! Single shooting on the Euler–Lagrange equation for scalar problems.

use crate::conditions::{check_euler, check_weierstrass_erdmann, golden_min, ConditionReport, EulerResidual, DEFAULT_CORNER_TOL, DEFAULT_EULER_TOL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::ode::{dopri5, OdeOptions, OdeSolution};
use crate::plan::SamplingPlan;
use crate::trajectory::{QuinticHermite, Trajectory};
use serde::Serialize;

/// Legendre matrices with `|λ_min|` below this are singular.
pub const MIN_LEGENDRE_EIGENVALUE: f64 = 1e-10;
pub const SHOOTING_TOL: f64 = 1e-9;
pub const SHOOTING_RTOL: f64 = 1e-12;
/// Lower bound on the dense-output node count.
pub const MIN_NODES: usize = 1024;
const BRACKET_PARTS: usize = 16;
const MAX_ITERATIONS: usize = 200;

/// `ẍ = L_ẋẋ⁻¹ (L_x − L_ẋx ẋ − L_ẋt)`.
pub fn el_ode_rhs(l: &Expr, t: f64, x: &[f64], dx: &[f64]) -> Result<Vec<f64>> {
    let j = l.eval_jet2(t, x, dx).map_err(Error::eval_at(t))?;
    let a = j.checked_hess_dxdx().map_err(Error::eval_at(t))?;
    let eig = a.sym_eigenvalues().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(eig >= MIN_LEGENDRE_EIGENVALUE) {
        return Err(Error::SingularLegendre { t, eig: a.min_eigenvalue() });
    }
    let ainv = a.inverse().ok_or(Error::SingularLegendre { t, eig })?;
    let xdx = j.checked_hess_xdx().map_err(Error::eval_at(t))?;
    let tdx = j.hess_tdx();
    let lx = j.grad_x();
    let n = x.len();
    // (L_ẋx ẋ)_i = Σ_j ∂²L/∂ẋᵢ∂xⱼ ẋⱼ
    let rhs: Vec<f64> = (0..n).map(|i| lx[i] - (0..n).map(|k| xdx[(k, i)] * dx[k]).sum::<f64>() - tdx[i]).collect();
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval { t, source: crate::error::EvalError::DerivativeSingular { func: "L_x", arg: t } });
    }
    Ok(ainv.mul_vec(&rhs))
}

/// Boundary data of a scalar two-point problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub trajectory: Trajectory<f64>,
    /// `|x(t1) − x1|`.
    pub shooting_residual: f64,
    pub iterations: usize,
    pub initial_slope: f64,
}

fn shoot(l: &Expr, b: &Boundary, slope: f64) -> Result<OdeSolution<f64>> {
    let opts = OdeOptions::new(SHOOTING_RTOL, SHOOTING_RTOL * 1e-2, (b.t1 - b.t0) / MIN_NODES as f64);
    dopri5(
        |t, y| {
            let a = el_ode_rhs(l, t, &y[..1], &y[1..])?;
            Ok(vec![y[1], a[0]])
        },
        b.t0,
        &[b.x0, slope],
        b.t1,
        opts,
        |_, y: &mut Vec<f64>| Ok(y.iter().all(|v| v.is_finite() && v.abs() < 1e12)),
    )
}

fn miss(l: &Expr, b: &Boundary, slope: f64) -> Result<f64> {
    let sol = shoot(l, b, slope)?;
    let last = sol.nodes.last().expect("nonempty");
    if last.t != b.t1 {
        return Err(Error::StepUnderflow { t: last.t });
    }
    Ok(last.y[0] - b.x1)
}

/// Default slope bracket: the chord slope `± 10·(1 + |chord|)`.
pub fn default_bracket(b: &Boundary) -> (f64, f64) {
    let s = (b.x1 - b.x0) / (b.t1 - b.t0);
    let w = 10.0 * (1.0 + s.abs());
    (s - w, s + w)
}

/// Smallest `|λ|` of `L_ẋẋ` along the chord, refined around its grid minimum.
fn chord_legendre(l: &Expr, b: &Boundary) -> Result<(f64, f64)> {
    let s = (b.x1 - b.x0) / (b.t1 - b.t0);
    let eig = |t: f64| -> Result<f64> {
        let x = b.x0 + s * (t - b.t0);
        let h = l.hess_dxdx(t, &[x], &[s]).map_err(Error::eval_at(t))?;
        Ok(h[(0, 0)].abs())
    };
    let m = 256;
    let ts: Vec<f64> = (0..=m).map(|k| b.t0 + (b.t1 - b.t0) * k as f64 / m as f64).collect();
    let mut best = (b.t0, f64::INFINITY);
    let mut idx = 0;
    for (k, &t) in ts.iter().enumerate() {
        let e = eig(t)?;
        if e < best.1 {
            best = (t, e);
            idx = k;
        }
    }
    let (lo, hi) = (ts[idx.saturating_sub(1)], ts[(idx + 1).min(m)]);
    let refined = golden_min(eig, lo, hi, 200)?;
    Ok(if refined.1 < best.1 { refined } else { best })
}

/// Shoots on the initial slope until `|x(t1) − x1| ≤ 1e-9`.
///
/// The bracket is split into 16 parts to find a sign change of the endpoint
/// miss; the root is then polished by safeguarded secant steps.
pub fn solve_bvp(l: &Expr, b: &Boundary, bracket: (f64, f64)) -> Result<BvpSolution> {
    if l.dim() != 1 {
        return Err(Error::Inapplicable("shooting is implemented for scalar problems".into()));
    }
    let (lo, hi) = bracket;
    let mut samples = Vec::new();
    let mut singular = None;
    for k in 0..=BRACKET_PARTS {
        let s = lo + (hi - lo) * k as f64 / BRACKET_PARTS as f64;
        match miss(l, b, s) {
            Ok(f) if f.is_finite() => samples.push((s, f)),
            Ok(_) => {}
            Err(e @ Error::SingularLegendre { .. }) => singular = singular.or(Some(e)),
            Err(_) => {}
        }
    }
    let found = samples.iter().find(|(_, f)| f.abs() <= SHOOTING_TOL).map(|&(s, _)| (s, s)).or_else(|| {
        samples.windows(2).find(|w| w[0].1.signum() != w[1].1.signum()).map(|w| (w[0].0, w[1].0))
    });
    let Some((mut a, mut c)) = found else {
        if let Some(e) = singular {
            return Err(e);
        }
        let (t, eig) = chord_legendre(l, b)?;
        if eig < MIN_LEGENDRE_EIGENVALUE {
            return Err(Error::SingularLegendre { t, eig });
        }
        return Err(Error::NoBracket { lo, hi });
    };
    let mut fa = miss(l, b, a)?;
    let mut fc = miss(l, b, c)?;
    let mut iterations = 0;
    let mut s = a;
    let mut fs = fa;
    while iterations < MAX_ITERATIONS {
        if fa.abs() <= SHOOTING_TOL {
            s = a;
            fs = fa;
            break;
        }
        if fc.abs() <= SHOOTING_TOL {
            s = c;
            fs = fc;
            break;
        }
        iterations += 1;
        let secant = c - fc * (c - a) / (fc - fa);
        let mid = 0.5 * (a + c);
        let (x0, x1) = if a < c { (a, c) } else { (c, a) };
        s = if secant.is_finite() && secant > x0 && secant < x1 { secant } else { mid };
        fs = miss(l, b, s)?;
        if fs.signum() == fa.signum() {
            a = s;
            fa = fs;
            // Illinois modification keeps the retained end from stalling
            fc *= 0.5;
        } else {
            c = s;
            fc = fs;
            fa *= 0.5;
        }
        if (c - a).abs() <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    if fs.abs() > SHOOTING_TOL {
        return Err(Error::NoConvergence { a: lo, b: hi, tol: SHOOTING_TOL, budget: MAX_ITERATIONS });
    }
    let sol = shoot(l, b, s)?;
    let nodes: Vec<f64> = sol.nodes.iter().map(|n| n.t).collect();
    let x: Vec<Vec<f64>> = sol.nodes.iter().map(|n| vec![n.y[0]]).collect();
    let dx: Vec<Vec<f64>> = sol.nodes.iter().map(|n| vec![n.y[1]]).collect();
    let ddx: Vec<Vec<f64>> = sol.nodes.iter().map(|n| vec![n.dy[1]]).collect();
    let residual = (sol.nodes.last().expect("nonempty").y[0] - b.x1).abs();
    let h = QuinticHermite::new(nodes, x, dx, ddx)?;
    Ok(BvpSolution { trajectory: Trajectory::from_interpolant(b.t0, b.t1, h)?, shooting_residual: residual, iterations, initial_slope: s })
}

/// Euler and Weierstrass–Erdmann checks with an "admissible extremal" label.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub admissible_extremal: bool,
    pub label: String,
    pub euler: EulerResidual,
    pub weierstrass_erdmann: ConditionReport,
}

pub fn validate_candidate(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<CandidateReport> {
    let euler = check_euler(l, xbar, plan, DEFAULT_EULER_TOL)?;
    let we = check_weierstrass_erdmann(l, xbar, plan, DEFAULT_CORNER_TOL)?;
    let ok = euler.holds() && we.holds();
    Ok(CandidateReport {
        admissible_extremal: ok,
        label: if ok { "admissible extremal".into() } else { "not an extremal".into() },
        euler,
        weierstrass_erdmann: we,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::PlanConfig;
    use crate::trajectory::Side;
    use std::f64::consts::FRAC_PI_2;

    fn bvp(src: &str, b: Boundary) -> Result<BvpSolution> {
        solve_bvp(&Expr::parse(src, 1).unwrap(), &b, default_bracket(&b))
    }

    #[test]
    fn rhs_examples() {
        let l = Expr::parse("t^2*dx^2 + 12*x^2", 1).unwrap();
        let a = el_ode_rhs(&l, 1.0, &[1.0], &[3.0]).unwrap()[0];
        assert!((a - 6.0).abs() < 1e-12);
        assert!((1.0 * a + 2.0 * 3.0 - 12.0f64).abs() < 1e-12);
        let h = Expr::parse("dx^2 - x^2", 1).unwrap();
        assert!((el_ode_rhs(&h, 0.4, &[0.7], &[-2.0]).unwrap()[0] + 0.7).abs() < 1e-14);
        assert_eq!(el_ode_rhs(&Expr::parse("dx^2", 1).unwrap(), 0.4, &[0.7], &[-2.0]).unwrap()[0], 0.0);
        assert!(matches!(el_ode_rhs(&l, 0.0, &[0.0], &[0.0]), Err(Error::SingularLegendre { .. })));
    }

    #[test]
    fn straight_line_and_cosine() {
        let s = bvp("dx^2", Boundary { t0: 0.0, t1: 1.0, x0: 1.0, x1: 0.0 }).unwrap();
        assert!(s.shooting_residual <= 1e-10);
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            assert!((s.trajectory.eval(t, Side::Auto).unwrap().0[0] - (1.0 - t)).abs() < 1e-10);
        }
        let s = bvp("dx^2 - x^2", Boundary { t0: 0.0, t1: FRAC_PI_2, x0: 1.0, x1: 0.0 }).unwrap();
        for k in 0..=50 {
            let t = FRAC_PI_2 * k as f64 / 50.0;
            let (x, v) = s.trajectory.eval(t, Side::Auto).unwrap();
            assert!((x[0] - t.cos()).abs() < 1e-8 && (v[0] + t.sin()).abs() < 1e-8);
        }
        assert!(s.trajectory.pieces().len() == 1);
    }

    #[test]
    fn affine_problem_has_cubic_extremal() {
        let s = bvp("dx^2 + t*x", Boundary { t0: 0.0, t1: 1.0, x0: 0.0, x1: 0.0 }).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert!((s.trajectory.eval(t, Side::Auto).unwrap().0[0] - (t.powi(3) - t) / 12.0).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_legendre_is_reported() {
        let r = bvp("t^2*dx^2 + 12*x^2", Boundary { t0: -1.0, t1: 1.0, x0: -1.0, x1: 1.0 });
        match r {
            Err(Error::SingularLegendre { t, .. }) => assert!(t.abs() < 1e-3, "t = {t}"),
            other => panic!("expected a singular Legendre matrix, got {other:?}"),
        }
    }

    #[test]
    fn validation_labels() {
        let l = Expr::parse("t^2*dx^2 + 12*x^2", 1).unwrap();
        let plan = SamplingPlan::build(PlanConfig { t_points: 64, ..PlanConfig::default() }, 1, -1.0, 1.0, &[]);
        let good = validate_candidate(&l, &Trajectory::parse_smooth(-1.0, 1.0, &["t^3"]).unwrap(), &plan).unwrap();
        assert!(good.admissible_extremal && good.label == "admissible extremal");
        let l = Expr::parse("dx^2", 1).unwrap();
        let plan = SamplingPlan::build(PlanConfig { t_points: 64, ..PlanConfig::default() }, 1, 0.0, 1.0, &[]);
        let bad = validate_candidate(&l, &Trajectory::parse_smooth(0.0, 1.0, &["1 - t^2"]).unwrap(), &plan).unwrap();
        assert!(!bad.admissible_extremal && !bad.euler.holds());
    }
}
