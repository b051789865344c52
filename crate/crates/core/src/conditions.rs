//! Classical necessary conditions along a candidate extremal.

use crate::error::{Error, EvalError, Result};
use crate::expr::Expr;
use crate::linalg::Mat;
use crate::plan::{SamplingPlan, TNode};
use crate::quadrature::cumulative;
use crate::scalar::{dot, max_abs, norm};
use crate::trajectory::{Side, Trajectory};
use serde::Serialize;

pub const DEFAULT_EULER_TOL: f64 = 1e-7;
pub const DEFAULT_CORNER_TOL: f64 = 1e-8;
const CUMULATIVE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// Sample point where a margin was attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub side: Side,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl Witness {
    pub fn at(node: &TNode) -> Self {
        Witness { t: node.t, side: node.side, xi: None, eta: None, theta: None }
    }
}

/// Worst margin over a nested family of sample radii.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusMargin {
    pub radius: f64,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Degeneracy {
    /// Times where the condition holds with equality (to `pass_tol`).
    pub points: Vec<f64>,
    /// True when the condition vanishes at every sampled point.
    pub identically_zero: bool,
}

/// Sampled verdict of one condition.
///
/// `worst_margin` is normalized by the magnitude of the terms that produced
/// it; `worst_value` is the raw left-hand side at the same point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub verdict: Verdict,
    pub worst_margin: f64,
    pub worst_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub samples: usize,
    pub plan_digest: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degeneracy: Option<Degeneracy>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub radius_profile: Vec<RadiusMargin>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn fails(&self) -> bool {
        self.verdict == Verdict::Fails
    }
}

/// Running minimum of a sampled margin.
#[derive(Debug, Clone)]
pub(crate) struct Tracker {
    pub worst: f64,
    pub raw: f64,
    pub at: Option<Witness>,
    pub samples: usize,
}

impl Tracker {
    pub fn new() -> Self {
        Tracker { worst: f64::INFINITY, raw: f64::INFINITY, at: None, samples: 0 }
    }

    #[inline]
    pub fn offer(&mut self, margin: f64, raw: f64, w: impl FnOnce() -> Witness) {
        self.samples += 1;
        // NaN margins count as failures so they are never silently skipped
        let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if m < self.worst {
            self.worst = m;
            self.raw = raw;
            self.at = Some(w());
        }
    }

    pub fn verdict(&self, plan: &SamplingPlan) -> Verdict {
        if self.worst >= -plan.config.pass_tol {
            Verdict::Holds
        } else if self.worst < -plan.config.fail_tol {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn report(self, condition: impl Into<String>, plan: &SamplingPlan) -> ConditionReport {
        let verdict = self.verdict(plan);
        let empty = self.samples == 0;
        ConditionReport {
            condition: condition.into(),
            verdict,
            worst_margin: if empty { 0.0 } else { self.worst },
            worst_value: if empty { 0.0 } else { self.raw },
            witness: if verdict == Verdict::Fails { self.at.clone() } else { None },
            location: self.at,
            samples: self.samples,
            plan_digest: plan.digest().to_string(),
            seed: plan.seed(),
            degeneracy: None,
            radius_profile: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Weierstrass excess `E(L)(t,x,y,z) = L(t,x,z) − L(t,x,y) − L_yᵀ(t,x,y)(z−y)`.
pub fn excess(l: &Expr, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64, EvalError> {
    excess_terms(l, t, x, y, z).map(|(e, _)| e)
}

/// Excess together with the sum of the magnitudes of its three terms.
pub fn excess_terms(l: &Expr, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<(f64, f64), EvalError> {
    let d: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
    let zeros = vec![0.0; x.len()];
    let (ly, slope) = l.directional(t, x, y, crate::expr::Seed { t: 0.0, x: &zeros, dx: &d })?;
    let lz = l.eval(t, x, z)?;
    Ok((lz - ly - slope, lz.abs() + ly.abs() + slope.abs()))
}

/// Per-`t` data reused across many `ξ`: `L̄` and `L̄_ẋ`.
pub(crate) struct ExcessBase {
    pub l: f64,
    pub l_dx: Vec<f64>,
}

impl ExcessBase {
    pub fn new(l: &Expr, t: f64, x: &[f64], v: &[f64]) -> Result<Self, EvalError> {
        Ok(ExcessBase { l: l.eval(t, x, v)?, l_dx: l.grad_dx(t, x, v)? })
    }

    /// `(E, Σ|terms|)` at `z = v + ξ`.
    #[inline]
    pub fn excess(&self, l: &Expr, t: f64, x: &[f64], z: &[f64], xi: &[f64]) -> Result<(f64, f64), EvalError> {
        let lz = l.eval(t, x, z)?;
        let slope = dot(&self.l_dx, xi);
        Ok((lz - self.l - slope, lz.abs() + self.l.abs() + slope.abs()))
    }
}

pub(crate) fn at_node(xbar: &Trajectory<f64>, node: &TNode) -> Result<(Vec<f64>, Vec<f64>)> {
    xbar.eval(node.t, node.side)
}

/// Euler equation in integral form along a candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerResidual {
    /// Estimate of the constant `c`.
    pub c_estimate: Vec<f64>,
    pub max_deviation: f64,
    /// Largest deviation on each smooth piece of the candidate.
    pub per_piece_deviation: Vec<f64>,
    pub tol: f64,
    pub report: ConditionReport,
}

impl EulerResidual {
    pub fn holds(&self) -> bool {
        self.report.holds()
    }
}

/// `g(t) = L̄_ẋ(t) − ∫_{t0}^t L̄_x dν` on the plan grid; `c` is its mean.
pub fn check_euler(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan, tol: f64) -> Result<EulerResidual> {
    let n = xbar.dim();
    let nodes = &plan.t_grid;
    let mut times: Vec<f64> = nodes.iter().map(|p| p.t).collect();
    times.dedup();
    let bp = xbar.breakpoints();
    let integral = cumulative(
        |t| {
            let (x, v) = xbar.eval(t, Side::Auto)?;
            l.grad_x(t, &x, &v).map_err(Error::eval_at(t))
        },
        n,
        &times,
        &bp,
        CUMULATIVE_TOL,
    )?;
    let mut g: Vec<Vec<f64>> = Vec::with_capacity(nodes.len());
    let mut k = 0;
    for node in nodes {
        while times[k] < node.t {
            k += 1;
        }
        let (x, v) = at_node(xbar, node)?;
        let p = l.grad_dx(node.t, &x, &v).map_err(Error::eval_at(node.t))?;
        g.push(p.iter().zip(&integral[k]).map(|(a, b)| a - b).collect());
    }
    let mut c = vec![0.0; n];
    for gi in &g {
        for i in 0..n {
            c[i] += gi[i];
        }
    }
    c.iter_mut().for_each(|v| *v /= g.len() as f64);
    let pieces = xbar.pieces();
    let mut per_piece = vec![0.0f64; pieces.len()];
    let mut tracker = Tracker::new();
    let scale = 1.0 + norm(&c);
    let mut max_dev = 0.0f64;
    for (node, gi) in nodes.iter().zip(&g) {
        let d: Vec<f64> = gi.iter().zip(&c).map(|(a, b)| a - b).collect();
        let dev = norm(&d);
        max_dev = max_dev.max(dev);
        let piece = pieces
            .iter()
            .position(|p| match node.side {
                Side::Left => node.t <= p.end,
                _ => node.t < p.end,
            })
            .unwrap_or(pieces.len() - 1);
        per_piece[piece] = per_piece[piece].max(dev);
        tracker.offer(-dev / scale, -dev, || Witness::at(node));
    }
    let verdict = if max_dev <= tol * scale { Verdict::Holds } else { Verdict::Fails };
    let mut report = tracker.report("euler", plan);
    report.verdict = verdict;
    report.witness = if verdict == Verdict::Fails { report.location.clone() } else { None };
    report.notes.push(format!("tolerance {tol:e} relative to 1 + |c|"));
    Ok(EulerResidual { c_estimate: c, max_deviation: max_dev, per_piece_deviation: per_piece, tol, report })
}

/// Continuity of `L_ẋ` and of `L − ẋᵀL_ẋ` across every corner.
pub fn check_weierstrass_erdmann(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan, tol: f64) -> Result<ConditionReport> {
    let corners = xbar.corner_set()?;
    let mut tracker = Tracker::new();
    let mut notes = Vec::new();
    for &tau in &corners {
        let mut side_vals = Vec::with_capacity(2);
        for side in [Side::Left, Side::Right] {
            let (x, v) = xbar.eval(tau, side)?;
            let p = l.grad_dx(tau, &x, &v).map_err(Error::eval_at(tau))?;
            let h = l.eval(tau, &x, &v).map_err(Error::eval_at(tau))? - dot(&v, &p);
            side_vals.push((p, h));
        }
        let dp: Vec<f64> = side_vals[0].0.iter().zip(&side_vals[1].0).map(|(a, b)| a - b).collect();
        let jump = norm(&dp).max((side_vals[0].1 - side_vals[1].1).abs());
        notes.push(format!("corner t = {tau}: momentum jump {:e}, energy jump {:e}", norm(&dp), (side_vals[0].1 - side_vals[1].1).abs()));
        tracker.offer(-jump, -jump, || Witness { t: tau, side: Side::Right, xi: None, eta: None, theta: None });
    }
    let worst = if corners.is_empty() { 0.0 } else { -tracker.worst };
    let mut report = tracker.report("weierstrass_erdmann", plan);
    report.verdict = if worst <= tol { Verdict::Holds } else { Verdict::Fails };
    report.witness = if report.fails() { report.location.clone() } else { None };
    if corners.is_empty() {
        notes.push("no corners: holds vacuously".into());
    }
    report.notes = notes;
    Ok(report)
}

fn min_eig_at(l: &Expr, xbar: &Trajectory<f64>, t: f64, side: Side) -> Result<(f64, Mat<f64>)> {
    let (x, v) = xbar.eval(t, side)?;
    let h = l.hess_dxdx(t, &x, &v).map_err(Error::eval_at(t))?;
    if !h.is_finite() {
        return Err(Error::Eval { t, source: EvalError::DerivativeSingular { func: "L_dxdx", arg: t } });
    }
    Ok((h.min_eigenvalue(), h))
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
pub(crate) fn golden_min(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
        if b - a <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Minimum eigenvalue of `L̄_ẋẋ` on the grid, with one-sided corner limits.
///
/// Local minima of the sampled eigenvalue curve are refined by golden
/// section so isolated degeneracies between grid nodes are located.
pub fn check_legendre(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<ConditionReport> {
    let nodes = &plan.t_grid;
    let mut eig = Vec::with_capacity(nodes.len());
    let mut max_entry = 0.0f64;
    let mut tracker = Tracker::new();
    for node in nodes {
        let (e, h) = min_eig_at(l, xbar, node.t, node.side)?;
        max_entry = max_entry.max(h.max_abs());
        eig.push(e);
        tracker.offer(e, e, || Witness::at(node));
    }
    let pass = plan.config.pass_tol;
    let mut degenerate: Vec<f64> = nodes.iter().zip(&eig).filter(|(_, e)| e.abs() <= pass).map(|(n, _)| n.t).collect();
    let bps = xbar.breakpoints();
    for k in 1..nodes.len().saturating_sub(1) {
        let (a, b) = (nodes[k - 1].t, nodes[k + 1].t);
        let same_piece = !bps.iter().any(|&p| p > a && p < b) && nodes[k].side == Side::Auto;
        if same_piece && eig[k] <= eig[k - 1] && eig[k] <= eig[k + 1] && eig[k] > -plan.config.fail_tol {
            let (tm, em) = golden_min(|t| Ok(min_eig_at(l, xbar, t, Side::Auto)?.0), a, b, 200)?;
            tracker.offer(em, em, || Witness { t: tm, side: Side::Auto, xi: None, eta: None, theta: None });
            if em.abs() <= pass {
                degenerate.push(tm);
            }
        }
    }
    degenerate.sort_by(f64::total_cmp);
    degenerate.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let mut report = tracker.report("legendre", plan);
    let identically_zero = max_entry <= pass;
    if !degenerate.is_empty() {
        report.notes.push(if identically_zero {
            "L_dxdx vanishes identically along the candidate".into()
        } else {
            format!("degenerate at {} point(s)", degenerate.len())
        });
    }
    report.degeneracy = Some(Degeneracy { points: degenerate, identically_zero });
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// `ξ ∈ B_δ(0)`.
    Local,
    /// All sampled radii up to `R_global`.
    Global,
}

/// Sampled Weierstrass condition `E(L̄)(t, ξ) ≥ 0`.
pub fn check_weierstrass(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan, tier: Tier) -> Result<ConditionReport> {
    let delta = plan.delta();
    let limit = match tier {
        Tier::Local => delta * (1.0 + 1e-12),
        Tier::Global => f64::INFINITY,
    };
    let xis: Vec<&Vec<f64>> = plan.xi.iter().filter(|v| norm(v) <= limit).collect();
    let mut per_sample = vec![f64::INFINITY; xis.len()];
    let mut tracker = Tracker::new();
    let mut z = vec![0.0; xbar.dim()];
    let mut max_abs_e = 0.0f64;
    for node in &plan.t_grid {
        let (x, v) = at_node(xbar, node)?;
        let base = ExcessBase::new(l, node.t, &x, &v).map_err(Error::eval_at(node.t))?;
        for (k, xi) in xis.iter().enumerate() {
            for i in 0..z.len() {
                z[i] = v[i] + xi[i];
            }
            let (e, scale) = base.excess(l, node.t, &x, &z, xi).map_err(Error::eval_at(node.t))?;
            let m = e / (1.0 + scale);
            max_abs_e = max_abs_e.max(e.abs());
            per_sample[k] = per_sample[k].min(m);
            tracker.offer(m, e, || Witness { xi: Some(xi.to_vec()), ..Witness::at(node) });
        }
    }
    let name = match tier {
        Tier::Local => "weierstrass_local",
        Tier::Global => "weierstrass_global",
    };
    let mut report = tracker.report(name, plan);
    let mut radii: Vec<f64> = plan.config.delta_sweep.clone();
    radii.push(delta);
    if tier == Tier::Global {
        radii.extend(plan.config.radii.iter().copied());
    }
    radii.retain(|r| *r <= limit);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    report.radius_profile = radii
        .iter()
        .map(|&r| RadiusMargin {
            radius: r,
            worst_margin: xis
                .iter()
                .zip(&per_sample)
                .filter(|(v, _)| norm(v) <= r * (1.0 + 1e-12))
                .map(|(_, m)| *m)
                .fold(f64::INFINITY, f64::min),
        })
        .collect();
    let pass = plan.config.pass_tol;
    let identically_zero = max_abs_e <= pass;
    if identically_zero {
        report.notes.push("excess vanishes at every sample: condition is degenerate".into());
        report.degeneracy = Some(Degeneracy { points: Vec::new(), identically_zero });
    }
    if tier == Tier::Global && report.holds() {
        report.notes.push(format!("no counterexample up to radius {}", max_abs(&xis.iter().map(|v| norm(v)).collect::<Vec<_>>())));
    }
    if let Some(largest) = report.radius_profile.iter().rev().find(|r| r.worst_margin >= -pass) {
        report.notes.push(format!("largest sampled radius that holds: {}", largest.radius));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::PlanConfig;

    fn plan(t0: f64, t1: f64, corners: &[f64]) -> SamplingPlan {
        SamplingPlan::build(PlanConfig::default(), 1, t0, t1, corners)
    }

    #[test]
    fn excess_of_kinetic_integrand() {
        let l = Expr::parse("dx^2", 1).unwrap();
        assert_eq!(excess(&l, 0.0, &[0.0], &[-1.0], &[-0.5]).unwrap(), 0.25);
        assert_eq!(excess(&l, 0.3, &[2.0], &[1.7], &[1.7]).unwrap(), 0.0);
    }

    #[test]
    fn excess_along_degenerate_candidate() {
        let l = Expr::parse("x^(4/3) - x^(5/3)*dx^2", 1).unwrap();
        for xi in [-3.0, -0.5, 0.25, 10.0] {
            assert_eq!(excess(&l, 0.5, &[0.0], &[0.0], &[xi]).unwrap(), 0.0);
        }
    }

    #[test]
    fn euler_on_polynomial_extremal() {
        let l = Expr::parse("t^2*dx^2 + 12*x^2", 1).unwrap();
        let xbar = Trajectory::parse_smooth(-1.0, 1.0, &["t^3"]).unwrap();
        let r = check_euler(&l, &xbar, &plan(-1.0, 1.0, &[]), DEFAULT_EULER_TOL).unwrap();
        assert!(r.max_deviation <= 1e-8, "{}", r.max_deviation);
        assert!((r.c_estimate[0] - 6.0).abs() < 1e-8);
        assert!(r.holds());
    }

    #[test]
    fn euler_rejects_non_extremal() {
        let l = Expr::parse("dx^2", 1).unwrap();
        let xbar = Trajectory::parse_smooth(0.0, 1.0, &["1 - t^2"]).unwrap();
        let r = check_euler(&l, &xbar, &plan(0.0, 1.0, &[]), DEFAULT_EULER_TOL).unwrap();
        assert_eq!(r.report.verdict, Verdict::Fails);
        assert!(r.report.witness.is_some());
        assert!((r.max_deviation - 2.0).abs() < 1e-2);
    }

    #[test]
    fn erdmann_at_unit_slope_corner() {
        let l = Expr::parse("(dx^2 - 1)^2", 1).unwrap();
        let xbar = Trajectory::parse_pieces(&[(0.0, 0.5, "0.5 - t"), (0.5, 1.0, "t - 0.5")]).unwrap();
        let r = check_weierstrass_erdmann(&l, &xbar, &plan(0.0, 1.0, &[0.5]), DEFAULT_CORNER_TOL).unwrap();
        assert!(r.holds());
        let bad = Trajectory::parse_pieces(&[(0.0, 0.5, "0.5 - t"), (0.5, 1.0, "2*t - 1")]).unwrap();
        let r = check_weierstrass_erdmann(&l, &bad, &plan(0.0, 1.0, &[0.5]), DEFAULT_CORNER_TOL).unwrap();
        assert!(r.fails());
        // momentum jumps by 24, L − ẋL_ẋ by |9 − 48| = 39
        assert!((r.worst_value + 39.0).abs() < 1e-12);
        assert!(r.notes[0].contains("momentum jump 2.4e1"));
    }

    #[test]
    fn legendre_degeneracy_is_located_between_nodes() {
        let l = Expr::parse("t^2*dx^2 + 12*x^2", 1).unwrap();
        let xbar = Trajectory::parse_smooth(-1.0, 1.0, &["t^3"]).unwrap();
        let r = check_legendre(&l, &xbar, &plan(-1.0, 1.0, &[])).unwrap();
        assert!(r.holds());
        let d = r.degeneracy.unwrap();
        assert!(!d.identically_zero);
        assert!(d.points.iter().any(|t| t.abs() < 1e-4), "{:?}", d.points);
    }

    #[test]
    fn legendre_fails_for_concave_integrand() {
        let l = Expr::parse("-dx^2", 1).unwrap();
        let xbar = Trajectory::parse_smooth(0.0, 1.0, &["t"]).unwrap();
        let r = check_legendre(&l, &xbar, &plan(0.0, 1.0, &[])).unwrap();
        assert!(r.fails());
        assert_eq!(r.worst_value, -2.0);
    }

    #[test]
    fn cubic_integrand_fails_only_globally() {
        let l = Expr::parse("dx^3", 1).unwrap();
        let xbar = Trajectory::parse_smooth(0.0, 1.0, &["t"]).unwrap();
        let p = plan(0.0, 1.0, &[]);
        assert!(check_weierstrass(&l, &xbar, &p, Tier::Local).unwrap().holds());
        let g = check_weierstrass(&l, &xbar, &p, Tier::Global).unwrap();
        assert!(g.fails());
        let w = g.witness.unwrap().xi.unwrap()[0];
        assert!(w * w * w + 3.0 * w * w < 0.0);
    }
}
