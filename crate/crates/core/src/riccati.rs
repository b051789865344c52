//! Matrix Riccati construction of `Q` for quadratic integrands
//! `L = ẋᵀAẋ + 2xᵀBẋ + xᵀCx`.
//!
//! For such `L` the left-hand side of (4.2) is the quadratic form
//! `ξᵀAξ + ξᵀMη + ηᵀ(½Q̇ + C)η` with `M = Q + 2Bᵀ`. It is positive
//! semidefinite iff the Schur complement `½(Q̇ + 2C) − ¼MᵀA⁻¹M` is, and the
//! boundary case is the Riccati equation `Q̇ = −2C + ½MᵀA⁻¹M`.

use crate::conditions::golden_min;
use crate::error::{Error, Result};
use crate::expr::{classify_structure, Expr};
use crate::linalg::Mat;
use crate::ode::{bracket, dopri5, hermite3, OdeNode, OdeOptions};
use crate::plan::SamplingPlan;
use crate::sufficiency::{check_thm42, Certificate, Grade, MinimumVerdict, QSpec};
use crate::trajectory::Trajectory;
use serde::Serialize;
use std::sync::Arc;

pub const BLOW_UP_NORM: f64 = 1e12;
pub const MIN_A_EIGENVALUE: f64 = 1e-10;
pub const RICCATI_RTOL: f64 = 1e-10;
/// `ε_final = (t1 − t0)·2^-FINAL_LEVEL`.
pub const FINAL_LEVEL: i32 = 30;
/// Multiples of the identity tried as initial values.
pub const Q0_SCAN: [f64; 9] = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0];

/// `A`, `B`, `C` of a pure quadratic integrand, read off the exact
/// Hessian at the origin on demand.
#[derive(Debug, Clone)]
pub struct QuadraticCoefficients {
    pub n: usize,
    l: Expr,
}

impl QuadraticCoefficients {
    /// `(A, B, C)` at `t`, with `B[(i, j)]` the coefficient of `2xᵢẋⱼ`.
    pub fn at(&self, t: f64) -> Result<(Mat<f64>, Mat<f64>, Mat<f64>)> {
        let z = vec![0.0; self.n];
        let j = self.l.eval_jet2(t, &z, &z).map_err(Error::eval_at(t))?;
        let a = j.checked_hess_dxdx().map_err(Error::eval_at(t))?.scale(0.5);
        let b = j.checked_hess_xdx().map_err(Error::eval_at(t))?.scale(0.5);
        let c = j.checked_hess_xx().map_err(Error::eval_at(t))?.scale(0.5);
        Ok((a, b, c))
    }

    pub fn integrand(&self) -> &Expr {
        &self.l
    }
}

/// Reads `A`, `B`, `C` off a quadratic integrand without constant or linear part.
pub fn extract_quadratic(l: &Expr, plan: &SamplingPlan) -> Result<QuadraticCoefficients> {
    let (t0, t1) = plan.interval;
    let flags = classify_structure(l, t0, t1, plan.seed()).map_err(Error::eval_at(t0))?;
    if !flags.quadratic {
        return Err(Error::NonconstantHessian(format!("integrand is {:?}, the Hessian depends on (x, dx)", flags.class())));
    }
    let n = l.dim();
    let z = vec![0.0; n];
    for k in 0..=8 {
        let t = t0 + (t1 - t0) * k as f64 / 8.0;
        let j = l.eval_jet2(t, &z, &z).map_err(Error::eval_at(t))?;
        let lin = j.grad_x().iter().chain(j.grad_dx().iter()).fold(j.value.abs(), |m, v| m.max(v.abs()));
        if lin > 1e-12 || lin.is_nan() {
            return Err(Error::Inapplicable(format!("integrand has a constant or linear part at t = {t}")));
        }
    }
    Ok(QuadraticCoefficients { n, l: l.clone() })
}

/// `−2C + ½(Q + 2Bᵀ)ᵀA⁻¹(Q + 2Bᵀ)`.
pub fn riccati_rhs(coeffs: &QuadraticCoefficients, t: f64, q: &Mat<f64>) -> Result<Mat<f64>> {
    let (a, b, c) = coeffs.at(t)?;
    rhs_from(&a, &b, &c, t, q)
}

fn rhs_from(a: &Mat<f64>, b: &Mat<f64>, c: &Mat<f64>, t: f64, q: &Mat<f64>) -> Result<Mat<f64>> {
    let eig = a.min_eigenvalue();
    if !(eig >= MIN_A_EIGENVALUE) {
        return Err(Error::SingularA { t, eig });
    }
    let ainv = a.inverse().ok_or(Error::SingularA { t, eig })?;
    let m = q + &b.transpose().scale(2.0);
    let r = &(&m.transpose() * &(&ainv * &m)).scale(0.5) - &c.scale(2.0);
    Ok(r.symmetrized())
}

/// Numerical solution of the Riccati equation from `q0` at `t0` towards `t1`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub n: usize,
    pub interval: (f64, f64),
    pub q0: Mat<f64>,
    /// `y` holds `Q` row-major, `dy` the right-hand side.
    pub nodes: Vec<OdeNode<f64>>,
    /// Time at which `‖Q‖` crosses [`BLOW_UP_NORM`].
    pub blow_up: Option<f64>,
    /// Last node time.
    pub t_end: f64,
    coeffs: QuadraticCoefficients,
}

impl RiccatiSolution {
    fn locate(&self, t: f64) -> Result<usize> {
        let (t0, _) = self.interval;
        if !(t >= t0 && t <= self.t_end) {
            return Err(Error::OutsideInterval { t, t0, t1: self.t_end });
        }
        Ok(bracket(&self.nodes, t))
    }

    /// Interpolated `Q(t)` and the derivative of the interpolant.
    pub fn interpolate(&self, t: f64) -> Result<(Mat<f64>, Mat<f64>)> {
        let k = self.locate(t)?;
        let (y, dy) = hermite3(&self.nodes[k], &self.nodes[k + 1], t);
        let n = self.n;
        Ok((Mat::from_row_major(n, n, y).symmetrized(), Mat::from_row_major(n, n, dy).symmetrized()))
    }

    pub fn q(&self, t: f64) -> Result<Mat<f64>> {
        self.interpolate(t).map(|p| p.0)
    }

    /// `Q(t)` and `Q̇(t) = rhs(t, Q(t))`.
    pub fn q_and_dq(&self, t: f64) -> Result<(Mat<f64>, Mat<f64>)> {
        let q = self.q(t)?;
        let dq = riccati_rhs(&self.coeffs, t, &q)?;
        Ok((q, dq))
    }

    pub fn coefficients(&self) -> &QuadraticCoefficients {
        &self.coeffs
    }
}

fn frob(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dormand–Prince integration with symmetric re-projection after every step.
///
/// Stops at `t1 − (t1 − t0)·2^-30` or when `‖Q‖ > 10¹²`; the crossing time
/// is then refined by bisection on the dense output to `1e-6`.
pub fn integrate_riccati(coeffs: &QuadraticCoefficients, q0: &Mat<f64>, interval: (f64, f64), rtol: f64) -> Result<RiccatiSolution> {
    let n = coeffs.n;
    let (t0, t1) = interval;
    if q0.asymmetry() > 1e-12 {
        return Err(Error::InvalidTrajectory("q0 must be symmetric".into()));
    }
    let t_stop = t1 - (t1 - t0) * (-(FINAL_LEVEL as f64)).exp2();
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        riccati_rhs(coeffs, t, &Mat::from_row_major(n, n, y.to_vec())).map(Mat::into_vec)
    };
    let opts = OdeOptions::new(rtol, rtol * 1e-2, (t1 - t0) / 4096.0);
    let mut last_big = (t0, 0.0f64);
    let hook = |t: f64, y: &mut Vec<f64>| -> Result<bool> {
        let s = Mat::from_row_major(n, n, y.clone()).symmetrized();
        y.copy_from_slice(s.as_slice());
        let norm = frob(y);
        last_big = (t, norm);
        Ok(norm.is_finite() && norm <= BLOW_UP_NORM)
    };
    let sol = match dopri5(rhs, t0, q0.as_slice(), t_stop, opts, hook) {
        Ok(s) => s,
        // the step size collapsed while Q was already huge: a pole
        Err(Error::StepUnderflow { t }) if last_big.1 > 1e6 => return integrate_until(coeffs, q0, interval, rtol, t),
        Err(e) => return Err(e),
    };
    let mut nodes = sol.nodes;
    let mut blow_up = None;
    if let Some(last) = nodes.last() {
        let big = frob(&last.y);
        if !big.is_finite() || big > BLOW_UP_NORM {
            let b = nodes.pop().expect("at least two nodes");
            let a = nodes.last().expect("initial node").clone();
            blow_up = Some(refine_crossing(&a, &b));
        }
    }
    let t_end = nodes.last().map_or(t0, |n| n.t);
    Ok(RiccatiSolution { n, interval, q0: q0.clone(), nodes, blow_up, t_end, coeffs: coeffs.clone() })
}

/// Integrates up to just before `t_pole` and records a blow-up there.
fn integrate_until(coeffs: &QuadraticCoefficients, q0: &Mat<f64>, interval: (f64, f64), rtol: f64, t_pole: f64) -> Result<RiccatiSolution> {
    let n = coeffs.n;
    let (t0, t1) = interval;
    let stop = t_pole - 1e-9 * (t1 - t0);
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        riccati_rhs(coeffs, t, &Mat::from_row_major(n, n, y.to_vec())).map(Mat::into_vec)
    };
    let opts = OdeOptions::new(rtol, rtol * 1e-2, (t1 - t0) / 4096.0);
    let sol = dopri5(rhs, t0, q0.as_slice(), stop, opts, |_, y: &mut Vec<f64>| {
        let s = Mat::from_row_major(n, n, y.clone()).symmetrized();
        y.copy_from_slice(s.as_slice());
        Ok(true)
    })?;
    let t_end = sol.nodes.last().map_or(t0, |n| n.t);
    Ok(RiccatiSolution { n, interval, q0: q0.clone(), nodes: sol.nodes, blow_up: Some(t_pole), t_end, coeffs: coeffs.clone() })
}

/// Time in `[a.t, b.t]` where the dense output crosses [`BLOW_UP_NORM`].
fn refine_crossing(a: &OdeNode<f64>, b: &OdeNode<f64>) -> f64 {
    let (mut lo, mut hi) = (a.t, b.t);
    while hi - lo > 1e-6 * 1e-3 {
        let mid = 0.5 * (lo + hi);
        let (y, _) = hermite3(a, b, mid);
        let v = frob(&y);
        if v.is_finite() && v <= BLOW_UP_NORM {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Summary of one initial value in the scan.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiScan {
    /// `q0[(0, 0)]`; the scan uses multiples of the identity.
    pub q0_multiple: f64,
    pub blow_up: Option<f64>,
    pub t_end: f64,
    pub grade: Grade,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RiccatiCertification {
    pub verdict: MinimumVerdict,
    pub scans: Vec<RiccatiScan>,
    /// Solution behind the verdict, or the first one computed.
    pub solution: Option<Arc<RiccatiSolution>>,
}

/// Smallest eigenvalue of `A` on the plan grid, refined around the grid minimum.
fn min_a_eigenvalue(coeffs: &QuadraticCoefficients, plan: &SamplingPlan) -> Result<(f64, f64)> {
    let eig = |t: f64| coeffs.at(t).map(|(a, _, _)| a.min_eigenvalue());
    let grid = &plan.t_grid;
    let mut best = (grid[0].t, f64::INFINITY);
    let mut idx = 0;
    for (k, node) in grid.iter().enumerate() {
        let e = eig(node.t)?;
        if e < best.1 {
            best = (node.t, e);
            idx = k;
        }
    }
    let lo = grid[idx.saturating_sub(1)].t;
    let hi = grid[(idx + 1).min(grid.len() - 1)].t;
    if hi > lo {
        let (t, e) = golden_min(eig, lo, hi, 200)?;
        if e < best.1 {
            best = (t, e);
        }
    }
    Ok(best)
}

/// Scans `q0 ∈ {0, ±½, ±1, ±2, ±4}·I`, integrates, and runs the (4.2) check
/// with each solution; the strongest grade wins, and an `ABSOLUTE` grade
/// ends the scan.
pub fn certify_via_riccati(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<RiccatiCertification> {
    let q0s: Vec<Mat<f64>> = Q0_SCAN.iter().map(|&s| Mat::identity(l.dim()).scale(s)).collect();
    certify_via_riccati_from(l, xbar, plan, &q0s)
}

/// As [`certify_via_riccati`] with an explicit list of initial values.
pub fn certify_via_riccati_from(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan, q0s: &[Mat<f64>]) -> Result<RiccatiCertification> {
    let coeffs = extract_quadratic(l, plan)?;
    let (t_min, eig) = min_a_eigenvalue(&coeffs, plan)?;
    if !(eig >= MIN_A_EIGENVALUE) {
        return Err(Error::SingularA { t: t_min, eig });
    }
    let mut scans = Vec::new();
    let mut best: Option<(MinimumVerdict, Arc<RiccatiSolution>)> = None;
    let mut first: Option<Arc<RiccatiSolution>> = None;
    for q0 in q0s {
        let m = q0[(0, 0)];
        let sol = match integrate_riccati(&coeffs, q0, plan.interval, RICCATI_RTOL) {
            Ok(s) => Arc::new(s),
            Err(e) => {
                scans.push(RiccatiScan { q0_multiple: m, blow_up: None, t_end: plan.interval.0, grade: Grade::NoneCertified, error: Some(e.to_string()) });
                continue;
            }
        };
        first.get_or_insert_with(|| sol.clone());
        let mut scan = RiccatiScan { q0_multiple: m, blow_up: sol.blow_up, t_end: sol.t_end, grade: Grade::NoneCertified, error: None };
        if sol.blow_up.is_some() {
            scans.push(scan);
            continue;
        }
        let q = QSpec::riccati(sol.clone());
        let v = check_thm42(l, xbar, &q, plan)?;
        scan.grade = v.grade;
        scans.push(scan);
        let better = best.as_ref().is_none_or(|(b, _)| v.grade > b.grade);
        if better {
            best = Some((v, sol));
        }
        if best.as_ref().is_some_and(|(b, _)| b.grade == Grade::Absolute) {
            break;
        }
    }
    let (verdict, solution) = match best {
        Some((mut v, s)) => {
            v.notes.push(format!("Q from the Riccati equation with q0 = {:?}", s.q0.to_f64_rows()));
            (v, Some(s))
        }
        None => {
            let mut v = MinimumVerdict::none_certified();
            let poles: Vec<String> = scans.iter().filter_map(|s| s.blow_up.map(|t| format!("{t:.6}"))).collect();
            v.notes.push(format!("every Riccati scan blew up or failed; blow-up times: [{}]", poles.join(", ")));
            (v, first)
        }
    };
    let mut verdict = verdict;
    if verdict.grade != Grade::NoneCertified {
        verdict.certifying_theorem = Some(Certificate::Theorem42);
    }
    Ok(RiccatiCertification { verdict, scans, solution })
}
