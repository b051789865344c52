//! Sufficient conditions built from the `Q`-augmented integrand.
//!
//! Every check samples its inequality over the plan's time grid and the
//! three nested quantifier tiers
//!
//! | grade          | ξ                 | η                 |
//! |----------------|-------------------|-------------------|
//! | `ABSOLUTE`     | all radii         | all radii         |
//! | `STRONG_LOCAL` | all radii         | `‖η‖ ≤ δ`         |
//! | `WEAK_LOCAL`   | `‖ξ‖ ≤ δ`         | `‖η‖ ≤ δ`         |
//!
//! and reports the strongest tier whose sampled minimum is `≥ −pass_tol`.

use crate::conditions::{at_node, check_weierstrass, ConditionReport, ExcessBase, RadiusMargin, Tier, Tracker, Verdict, Witness};
use crate::error::{Error, EvalError, Result};
use crate::expr::{classify_structure, Expr, Seed, StructureClass, StructureFlags};
use crate::linalg::Mat;
use crate::plan::{SamplingPlan, TNode};
use crate::quadrature::MatrixFn;
use crate::riccati::RiccatiSolution;
use crate::scalar::{dot, norm};
use crate::trajectory::{Side, Trajectory};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::sync::Arc;

/// Largest admissible growth exponent of `‖Q‖` towards `t1`.
pub const ALPHA_Q_MAX: f64 = 1.05;
/// Largest admissible growth exponent of `‖Q̇‖` towards `t1`.
pub const ALPHA_DQ_MAX: f64 = 2.05;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum QKind {
    Zero,
    /// `n × n` entries, each an expression in `t`.
    Expr(Vec<Vec<Expr>>),
    Riccati(Arc<RiccatiSolution>),
}

/// Auxiliary symmetric matrix function `Q` on `[t0, t1)`.
#[derive(Debug, Clone)]
pub struct QSpec {
    pub n: usize,
    pub interval: (f64, f64),
    pub kind: QKind,
}

impl QSpec {
    pub fn zero(n: usize, t0: f64, t1: f64) -> Self {
        QSpec { n, interval: (t0, t1), kind: QKind::Zero }
    }

    pub fn from_exprs(t0: f64, t1: f64, entries: Vec<Vec<Expr>>) -> Result<Self> {
        let n = entries.len();
        if entries.iter().any(|r| r.len() != n) {
            return Err(Error::Schema { path: "q.entries".into(), message: format!("expected a {n}x{n} matrix") });
        }
        if entries.iter().flatten().any(|e| e.dim() != 0) {
            return Err(Error::Schema { path: "q.entries".into(), message: "entries must depend on t only".into() });
        }
        Ok(QSpec { n, interval: (t0, t1), kind: QKind::Expr(entries) })
    }

    /// Parses row-major entry strings.
    pub fn parse(t0: f64, t1: f64, entries: &[Vec<&str>]) -> Result<Self> {
        let e = entries
            .iter()
            .map(|r| r.iter().map(|s| Expr::parse_in_t(s)).collect::<std::result::Result<Vec<_>, _>>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_exprs(t0, t1, e)
    }

    pub fn riccati(sol: Arc<RiccatiSolution>) -> Self {
        QSpec { n: sol.n, interval: sol.interval, kind: QKind::Riccati(sol) }
    }

    /// `(Q(t), Q̇(t))`.
    pub fn eval(&self, t: f64) -> Result<(Mat<f64>, Mat<f64>)> {
        match &self.kind {
            QKind::Zero => Ok((Mat::zeros(self.n, self.n), Mat::zeros(self.n, self.n))),
            QKind::Expr(entries) => {
                let mut q = Mat::zeros(self.n, self.n);
                let mut dq = Mat::zeros(self.n, self.n);
                for (i, row) in entries.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        let (v, d) = e.eval_t_d1(t).map_err(Error::eval_at(t))?;
                        q[(i, j)] = v;
                        dq[(i, j)] = d;
                    }
                }
                Ok((q, dq))
            }
            QKind::Riccati(sol) => sol.q_and_dq(t),
        }
    }

    /// Last time at which `Q` is defined (`t1` for closed forms).
    pub fn last_time(&self) -> f64 {
        match &self.kind {
            QKind::Riccati(sol) => sol.t_end,
            _ => self.interval.1,
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            QKind::Zero => "Q = 0".into(),
            QKind::Expr(e) => {
                let rows: Vec<String> =
                    e.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")).collect();
                format!("Q(t) = [{}]", rows.join("; "))
            }
            QKind::Riccati(sol) => format!("Riccati solution from q0 = {:?}", sol.q0.to_f64_rows()),
        }
    }

    /// SHA-256 over the description and, for numerical solutions, the node values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.describe().as_bytes());
        h.update(format!("{:?}", self.interval).as_bytes());
        if let QKind::Riccati(sol) = &self.kind {
            for node in &sol.nodes {
                h.update(node.t.to_le_bytes());
                for v in &node.y {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

impl MatrixFn<f64> for QSpec {
    fn q_and_dq(&self, t: f64) -> Result<(Mat<f64>, Mat<f64>)> {
        self.eval(t)
    }

    fn is_zero(&self) -> bool {
        matches!(self.kind, QKind::Zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Grade {
    NoneCertified,
    WeakLocal,
    StrongLocal,
    Absolute,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Absolute => "ABSOLUTE",
            Grade::StrongLocal => "STRONG_LOCAL",
            Grade::WeakLocal => "WEAK_LOCAL",
            Grade::NoneCertified => "NONE_CERTIFIED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Certificate {
    #[serde(rename = "COROLLARY_4_1")]
    Corollary41,
    #[serde(rename = "THEOREM_4_4")]
    Theorem44,
    #[serde(rename = "THEOREM_4_3")]
    Theorem43,
    #[serde(rename = "THEOREM_4_2")]
    Theorem42,
    #[serde(rename = "THEOREM_4_1")]
    Theorem41,
}

impl Certificate {
    /// Preference order when grades tie.
    pub const ORDER: [Certificate; 5] =
        [Certificate::Corollary41, Certificate::Theorem44, Certificate::Theorem43, Certificate::Theorem42, Certificate::Theorem41];

    pub fn key(self) -> &'static str {
        match self {
            Certificate::Corollary41 => "corollary_4_1",
            Certificate::Theorem44 => "theorem_4_4",
            Certificate::Theorem43 => "theorem_4_3",
            Certificate::Theorem42 => "theorem_4_2",
            Certificate::Theorem41 => "theorem_4_1",
        }
    }

    fn rank(self) -> usize {
        Self::ORDER.iter().position(|c| *c == self).unwrap_or(usize::MAX)
    }
}

pub const NECESSARY_AND_SUFFICIENT: &str = "necessary-and-sufficient class";

/// Outcome of one sufficiency check, or of their synthesis.
#[derive(Debug, Clone, Serialize)]
pub struct MinimumVerdict {
    pub grade: Grade,
    pub certifying_theorem: Option<Certificate>,
    /// Per-tier reports and any prerequisite reports.
    pub reports: Vec<ConditionReport>,
    pub q_used: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Set when the check certifies the candidate is *not* a minimum of this grade.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub not_minimum_of: Option<Grade>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub delta_sweep: Vec<RadiusMargin>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MinimumVerdict {
    fn empty(reports: Vec<ConditionReport>, q_used: Option<String>) -> Self {
        MinimumVerdict {
            grade: Grade::NoneCertified,
            certifying_theorem: None,
            reports,
            q_used,
            label: None,
            not_minimum_of: None,
            delta_sweep: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn none_certified() -> Self {
        Self::empty(Vec::new(), None)
    }
}

/// Admissibility of `Q`: symmetry and growth towards `t1`.
#[derive(Debug, Clone, Serialize)]
pub struct QAdmissibility {
    pub alpha_q: f64,
    pub alpha_dq: f64,
    pub max_asymmetry: f64,
    pub report: ConditionReport,
}

/// Least-squares slope of `ln(1 + y)` against `−ln ε`.
fn growth_exponent(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(eps, y)| (-eps.ln(), (1.0 + y).ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Symmetry on the plan grid and endpoint growth exponents of `‖Q‖`, `‖Q̇‖`
/// from a log-log fit over `t1 − (t1 − t0)·2^-k`.
pub fn check_q_admissibility(q: &QSpec, plan: &SamplingPlan) -> Result<QAdmissibility> {
    let (t0, t1) = q.interval;
    let len = t1 - t0;
    let mut tracker = Tracker::new();
    let mut max_asym = 0.0f64;
    if let QKind::Riccati(sol) = &q.kind {
        if let Some(tb) = sol.blow_up {
            let mut report = tracker.report("q_admissibility", plan);
            report.verdict = Verdict::Fails;
            report.worst_margin = f64::NEG_INFINITY;
            report.worst_value = f64::INFINITY;
            report.witness = Some(Witness { t: tb, side: Side::Auto, xi: None, eta: None, theta: None });
            report.notes.push(format!("Q blows up at t = {tb:.9}, before t1 = {t1}"));
            return Ok(QAdmissibility { alpha_q: f64::INFINITY, alpha_dq: f64::INFINITY, max_asymmetry: 0.0, report });
        }
    }
    for node in plan.open_t_grid() {
        let t = node.t;
        if t > q.last_time() {
            continue;
        }
        let (qm, dq) = q.eval(t)?;
        if !qm.is_finite() || !dq.is_finite() {
            if t < t1 - len / 8.0 {
                return Err(Error::NonfiniteQ { t });
            }
            tracker.offer(f64::NEG_INFINITY, f64::NAN, || Witness::at(node));
            continue;
        }
        let asym = qm.asymmetry().max(dq.asymmetry());
        max_asym = max_asym.max(asym);
        tracker.offer(SYMMETRY_TOL - asym, -asym, || Witness::at(node));
    }
    let kmax = ((len / (t1 - q.last_time()).max(f64::MIN_POSITIVE)).log2().floor() as i32).clamp(8, 40);
    let mut qs = Vec::new();
    let mut dqs = Vec::new();
    for k in (kmax / 2)..=kmax {
        let eps = len * (-(k as f64)).exp2();
        let t = t1 - eps;
        let (qm, dq) = q.eval(t)?;
        if !qm.is_finite() || !dq.is_finite() {
            tracker.offer(f64::NEG_INFINITY, f64::NAN, || Witness { t, side: Side::Auto, xi: None, eta: None, theta: None });
            break;
        }
        qs.push((eps, qm.frobenius()));
        dqs.push((eps, dq.frobenius()));
    }
    let alpha_q = if q.is_zero() { 0.0 } else { growth_exponent(&qs) };
    let alpha_dq = if q.is_zero() { 0.0 } else { growth_exponent(&dqs) };
    let growth_ok = alpha_q <= ALPHA_Q_MAX && alpha_dq <= ALPHA_DQ_MAX;
    let mut report = tracker.report("q_admissibility", plan);
    let symmetric = max_asym <= SYMMETRY_TOL && report.worst_margin > f64::NEG_INFINITY;
    report.verdict = if symmetric && growth_ok { Verdict::Holds } else { Verdict::Fails };
    if report.fails() && report.witness.is_none() {
        report.witness = Some(Witness { t: t1, side: Side::Left, xi: None, eta: None, theta: None });
    }
    report.notes.push(format!("growth exponents: alpha_Q = {alpha_q:.4}, alpha_dQ = {alpha_dq:.4}"));
    if !growth_ok {
        report.notes.push(format!("growth exceeds the admissible exponents {ALPHA_Q_MAX} / {ALPHA_DQ_MAX}"));
    }
    Ok(QAdmissibility { alpha_q, alpha_dq, max_asymmetry: max_asym, report })
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// `L_x(t, x, v)ᵀ η` as one directional derivative.
#[inline]
fn lx_dot(l: &Expr, t: f64, x: &[f64], v: &[f64], eta: &[f64], zeros: &[f64]) -> Result<f64, EvalError> {
    l.directional(t, x, v, Seed { t: 0.0, x: eta, dx: zeros }).map(|r| r.1)
}

/// `ηᵀ L_xx(t, x, v) η` as one hyper-dual evaluation.
#[inline]
fn lxx_form(l: &Expr, t: f64, x: &[f64], v: &[f64], eta: &[f64], zeros: &[f64]) -> Result<f64, EvalError> {
    let s = Seed { t: 0.0, x: eta, dx: zeros };
    l.second_directional(t, x, v, s, s).map(|h| h.ab)
}

/// `E(t, x̄, ẋ̄, ẋ̄+ξ) + ξᵀQη + L_x(t, x̄+θη, ẋ̄+ξ)ᵀη − L̄_xᵀη + ½ηᵀQ̇η` at one sample.
#[allow(clippy::too_many_arguments)]
pub fn lhs_thm41(l: &Expr, xbar: &Trajectory<f64>, t: f64, side: Side, xi: &[f64], eta: &[f64], theta: f64, q: &QSpec) -> Result<f64> {
    let (x, v) = xbar.eval(t, side)?;
    let (qm, dq) = q.eval(t)?;
    let zeros = vec![0.0; x.len()];
    let z = add(&v, xi);
    let ev = Error::eval_at(t);
    let e = crate::conditions::excess(l, t, &x, &v, &z).map_err(Error::eval_at(t))?;
    let shifted = lx_dot(l, t, &axpy(&x, theta, eta), &z, eta, &zeros).map_err(Error::eval_at(t))?;
    let base = lx_dot(l, t, &x, &v, eta, &zeros).map_err(ev)?;
    Ok(e + qm.bilinear(xi, eta) + shifted - base + 0.5 * dq.quad_form(eta))
}

/// `E(t, x̄, ẋ̄, ẋ̄+ξ) + ξᵀQη + L_x(t, x̄, ẋ̄+ξ)ᵀη − L̄_xᵀη + ½ηᵀ(Q̇ + L_xx(t, x̄+θη, ẋ̄+ξ))η` at one sample.
#[allow(clippy::too_many_arguments)]
pub fn lhs_thm42(l: &Expr, xbar: &Trajectory<f64>, t: f64, side: Side, xi: &[f64], eta: &[f64], theta: f64, q: &QSpec) -> Result<f64> {
    let (x, v) = xbar.eval(t, side)?;
    let (qm, dq) = q.eval(t)?;
    let zeros = vec![0.0; x.len()];
    let z = add(&v, xi);
    let e = crate::conditions::excess(l, t, &x, &v, &z).map_err(Error::eval_at(t))?;
    let at_z = lx_dot(l, t, &x, &z, eta, &zeros).map_err(Error::eval_at(t))?;
    let base = lx_dot(l, t, &x, &v, eta, &zeros).map_err(Error::eval_at(t))?;
    let hess = lxx_form(l, t, &axpy(&x, theta, eta), &z, eta, &zeros).map_err(Error::eval_at(t))?;
    Ok(e + qm.bilinear(xi, eta) + at_z - base + 0.5 * (dq.quad_form(eta) + hess))
}

/// Trackers for the three grades and the δ sweep, fed in a single pass.
struct Tiers<'p> {
    plan: &'p SamplingPlan,
    delta: f64,
    fail: f64,
    abs: Tracker,
    strong: Tracker,
    weak: Tracker,
    sweep: Vec<(f64, Tracker)>,
}

fn within(norm: f64, r: f64) -> bool {
    norm <= r * (1.0 + 1e-12)
}

impl<'p> Tiers<'p> {
    fn new(plan: &'p SamplingPlan) -> Self {
        let mut radii = plan.config.delta_sweep.clone();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        Tiers {
            plan,
            delta: plan.delta(),
            fail: plan.config.fail_tol,
            abs: Tracker::new(),
            strong: Tracker::new(),
            weak: Tracker::new(),
            sweep: radii.into_iter().map(|r| (r, Tracker::new())).collect(),
        }
    }

    fn failed(&self, t: &Tracker) -> bool {
        t.worst < -self.fail
    }

    /// True if some still-open tracker covers a sample with these norms.
    fn open(&self, nxi: f64, neta: f64) -> bool {
        if !self.failed(&self.abs) {
            return true;
        }
        let d = self.delta;
        if within(neta, d) && !self.failed(&self.strong) {
            return true;
        }
        if within(neta, d) && within(nxi, d) && !self.failed(&self.weak) {
            return true;
        }
        self.sweep.iter().any(|(r, tr)| within(nxi, *r) && within(neta, *r) && !self.failed(tr))
    }

    fn all_failed(&self) -> bool {
        self.failed(&self.abs)
            && self.failed(&self.strong)
            && self.failed(&self.weak)
            && self.sweep.iter().all(|(_, t)| self.failed(t))
    }

    #[inline]
    fn offer(&mut self, nxi: f64, neta: f64, margin: f64, raw: f64, w: impl Fn() -> Witness) {
        let d = self.delta;
        self.abs.offer(margin, raw, &w);
        if within(neta, d) {
            self.strong.offer(margin, raw, &w);
            if within(nxi, d) {
                self.weak.offer(margin, raw, &w);
            }
        }
        for (r, tr) in self.sweep.iter_mut() {
            if within(nxi, *r) && within(neta, *r) {
                tr.offer(margin, raw, &w);
            }
        }
    }

    fn finish(self, cert: Certificate, mut prereq: Vec<ConditionReport>, q_used: Option<String>) -> MinimumVerdict {
        let plan = self.plan;
        let key = cert.key();
        let tiers = [(Grade::Absolute, self.abs), (Grade::StrongLocal, self.strong), (Grade::WeakLocal, self.weak)];
        let mut grade = Grade::NoneCertified;
        let mut reports = Vec::new();
        for (g, tr) in tiers {
            let mut r = tr.report(format!("{key}:{}", g.as_str()), plan);
            if grade == Grade::NoneCertified && r.holds() {
                grade = g;
            }
            if g != Grade::WeakLocal {
                r.notes.push(format!("unbounded quantifiers sampled up to radius {}", plan.r_global()));
            }
            reports.push(r);
        }
        let delta_sweep = self
            .sweep
            .iter()
            .map(|(r, tr)| RadiusMargin { radius: *r, worst_margin: if tr.samples == 0 { 0.0 } else { tr.worst } })
            .collect();
        prereq.extend(reports);
        MinimumVerdict {
            grade,
            certifying_theorem: (grade != Grade::NoneCertified).then_some(cert),
            reports: prereq,
            q_used,
            label: None,
            not_minimum_of: None,
            delta_sweep,
            notes: Vec::new(),
        }
    }
}

fn norms(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().map(|s| norm(s)).collect()
}

fn witness(node: &TNode, xi: &[f64], eta: &[f64], theta: Option<f64>) -> Witness {
    Witness { t: node.t, side: node.side, xi: Some(xi.to_vec()), eta: Some(eta.to_vec()), theta }
}

fn admissible_or_verdict(q: &QSpec, plan: &SamplingPlan) -> Result<std::result::Result<ConditionReport, MinimumVerdict>> {
    let adm = check_q_admissibility(q, plan)?;
    if adm.report.holds() {
        Ok(Ok(adm.report))
    } else {
        let mut v = MinimumVerdict::empty(vec![adm.report], Some(q.digest()));
        v.notes.push(format!("{} is not admissible", q.describe()));
        Ok(Err(v))
    }
}

/// Samples [`lhs_thm41`] over the plan with the given `Q`.
pub fn check_thm41(l: &Expr, xbar: &Trajectory<f64>, q: &QSpec, plan: &SamplingPlan) -> Result<MinimumVerdict> {
    let adm = match admissible_or_verdict(q, plan)? {
        Ok(r) => r,
        Err(v) => return Ok(v),
    };
    let n = xbar.dim();
    let zeros = vec![0.0; n];
    let (xn, en) = (norms(&plan.xi), norms(&plan.eta));
    let mut tiers = Tiers::new(plan);
    let mut z = vec![0.0; n];
    let mut xs = vec![0.0; n];
    for node in plan.open_t_grid() {
        let t = node.t;
        let ev = || Error::eval_at(t);
        let (x, v) = at_node(xbar, node)?;
        let (qm, dq) = q.eval(t)?;
        let base = ExcessBase::new(l, t, &x, &v).map_err(ev())?;
        let lx_bar = l.grad_x(t, &x, &v).map_err(ev())?;
        for (i, xi) in plan.xi.iter().enumerate() {
            if !tiers.open(xn[i], 0.0) {
                continue;
            }
            for k in 0..n {
                z[k] = v[k] + xi[k];
            }
            let (e, es) = base.excess(l, t, &x, &z, xi).map_err(ev())?;
            for (j, eta) in plan.eta.iter().enumerate() {
                if !tiers.open(xn[i], en[j]) {
                    continue;
                }
                let qt = qm.bilinear(xi, eta);
                let dqt = 0.5 * dq.quad_form(eta);
                let lbar = dot(&lx_bar, eta);
                let fixed = e + qt + dqt - lbar;
                let fixed_scale = es + qt.abs() + dqt.abs() + lbar.abs();
                for &th in &plan.theta {
                    for k in 0..n {
                        xs[k] = x[k] + th * eta[k];
                    }
                    let shifted = lx_dot(l, t, &xs, &z, eta, &zeros).map_err(ev())?;
                    let lhs = fixed + shifted;
                    let m = lhs / (1.0 + fixed_scale + shifted.abs());
                    tiers.offer(xn[i], en[j], m, lhs, || witness(node, xi, eta, Some(th)));
                }
            }
        }
        if tiers.all_failed() {
            break;
        }
    }
    Ok(tiers.finish(Certificate::Theorem41, vec![adm], Some(q.digest())))
}

/// True when `L_xx` is finite along the candidate on the whole grid.
pub fn lxx_finite_along(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<Option<f64>> {
    for node in plan.open_t_grid() {
        let (x, v) = at_node(xbar, node)?;
        match l.hess_xx(node.t, &x, &v) {
            Ok(h) if h.is_finite() => {}
            Ok(_) | Err(EvalError::DerivativeSingular { .. }) => return Ok(Some(node.t)),
            Err(e) => return Err(Error::eval_at(node.t)(e)),
        }
    }
    Ok(None)
}

/// Samples [`lhs_thm42`] over the plan with the given `Q`.
///
/// Requires `L_xx` to be finite along the candidate; otherwise the check is
/// inapplicable.
pub fn check_thm42(l: &Expr, xbar: &Trajectory<f64>, q: &QSpec, plan: &SamplingPlan) -> Result<MinimumVerdict> {
    if let Some(t) = lxx_finite_along(l, xbar, plan)? {
        return Err(Error::Inapplicable(format!("L_xx is unbounded along the candidate at t = {t}")));
    }
    let adm = match admissible_or_verdict(q, plan)? {
        Ok(r) => r,
        Err(v) => return Ok(v),
    };
    let (t0, t1) = xbar.interval();
    let flags = classify_structure(l, t0, t1, plan.seed()).map_err(Error::eval_at(t0))?;
    let n = xbar.dim();
    let zeros = vec![0.0; n];
    let (xn, en) = (norms(&plan.xi), norms(&plan.eta));
    let mut tiers = Tiers::new(plan);
    let mut z = vec![0.0; n];
    let mut xs = vec![0.0; n];
    for node in plan.open_t_grid() {
        let t = node.t;
        let ev = || Error::eval_at(t);
        let (x, v) = at_node(xbar, node)?;
        let (qm, dq) = q.eval(t)?;
        let base = ExcessBase::new(l, t, &x, &v).map_err(ev())?;
        let lx_bar = l.grad_x(t, &x, &v).map_err(ev())?;
        // for quadratic integrands L_xx does not depend on the state, so θ drops out
        let const_hess = if flags.quadratic { Some(l.hess_xx(t, &x, &v).map_err(ev())?) } else { None };
        for (i, xi) in plan.xi.iter().enumerate() {
            if !tiers.open(xn[i], 0.0) {
                continue;
            }
            for k in 0..n {
                z[k] = v[k] + xi[k];
            }
            let (e, es) = base.excess(l, t, &x, &z, xi).map_err(ev())?;
            for (j, eta) in plan.eta.iter().enumerate() {
                if !tiers.open(xn[i], en[j]) {
                    continue;
                }
                let qt = qm.bilinear(xi, eta);
                let dqt = 0.5 * dq.quad_form(eta);
                let at_z = lx_dot(l, t, &x, &z, eta, &zeros).map_err(ev())?;
                let lbar = dot(&lx_bar, eta);
                let fixed = e + qt + at_z - lbar + dqt;
                let fixed_scale = es + qt.abs() + at_z.abs() + lbar.abs() + dqt.abs();
                if let Some(h) = &const_hess {
                    let hq = 0.5 * h.quad_form(eta);
                    let lhs = fixed + hq;
                    let m = lhs / (1.0 + fixed_scale + hq.abs());
                    tiers.offer(xn[i], en[j], m, lhs, || witness(node, xi, eta, None));
                    continue;
                }
                for &th in &plan.theta {
                    for k in 0..n {
                        xs[k] = x[k] + th * eta[k];
                    }
                    let hq = 0.5 * lxx_form(l, t, &xs, &z, eta, &zeros).map_err(ev())?;
                    let lhs = fixed + hq;
                    let m = lhs / (1.0 + fixed_scale + hq.abs());
                    tiers.offer(xn[i], en[j], m, lhs, || witness(node, xi, eta, Some(th)));
                }
            }
        }
        if tiers.all_failed() {
            break;
        }
    }
    let mut v = tiers.finish(Certificate::Theorem42, vec![adm], Some(q.digest()));
    if flags.quadratic {
        v.notes.push("quadratic integrand: L_xx is state independent, theta quantifier is exact".into());
    }
    Ok(v)
}

fn require(flags: &StructureFlags, want: StructureClass) -> Result<()> {
    let ok = match want {
        StructureClass::AffineInX => flags.affine_in_x,
        StructureClass::Separable => flags.separable,
        StructureClass::Quadratic => flags.quadratic,
        StructureClass::General => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Inapplicable(format!("integrand is {:?}, requires {:?} (sampled)", flags.class(), want)))
    }
}

fn structure(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<StructureFlags> {
    let (t0, t1) = xbar.interval();
    classify_structure(l, t0, t1, plan.seed()).map_err(Error::eval_at(t0))
}

/// Separable integrands: frozen-state excess (4.4) and `ηᵀL_xx η` (4.5).
pub fn check_thm44(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<MinimumVerdict> {
    require(&structure(l, xbar, plan)?, StructureClass::Separable)?;
    let n = xbar.dim();
    let zeros = vec![0.0; n];
    let (xn, en) = (norms(&plan.xi), norms(&plan.eta));
    let mut tiers = Tiers::new(plan);
    let mut z = vec![0.0; n];
    let mut xs = vec![0.0; n];
    for node in plan.open_t_grid() {
        let t = node.t;
        let ev = || Error::eval_at(t);
        let (x, v) = at_node(xbar, node)?;
        let base = ExcessBase::new(l, t, &x, &v).map_err(ev())?;
        for (i, xi) in plan.xi.iter().enumerate() {
            if !tiers.open(xn[i], 0.0) {
                continue;
            }
            for k in 0..n {
                z[k] = v[k] + xi[k];
            }
            let (e, es) = base.excess(l, t, &x, &z, xi).map_err(ev())?;
            tiers.offer(xn[i], 0.0, e / (1.0 + es), e, || Witness { xi: Some(xi.to_vec()), ..Witness::at(node) });
        }
        for (j, eta) in plan.eta.iter().enumerate() {
            if !tiers.open(0.0, en[j]) {
                continue;
            }
            for &th in &plan.theta {
                for k in 0..n {
                    xs[k] = x[k] + th * eta[k];
                }
                let h = lxx_form(l, t, &xs, &v, eta, &zeros).map_err(ev())?;
                tiers.offer(0.0, en[j], h / (1.0 + h.abs()), h, || Witness {
                    eta: Some(eta.to_vec()),
                    theta: Some(th),
                    ..Witness::at(node)
                });
            }
        }
        if tiers.all_failed() {
            break;
        }
    }
    let mut v = tiers.finish(Certificate::Theorem44, Vec::new(), None);
    v.notes.push("split into L0(t, dx) + L1(t, x) evaluated implicitly: frozen-state excess and full L_xx".into());
    Ok(v)
}

fn weierstrass_route(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan, cert: Certificate) -> Result<MinimumVerdict> {
    require(&structure(l, xbar, plan)?, StructureClass::AffineInX)?;
    let local = check_weierstrass(l, xbar, plan, Tier::Local)?;
    let global = check_weierstrass(l, xbar, plan, Tier::Global)?;
    let grade = if global.holds() {
        Grade::Absolute
    } else if local.holds() {
        Grade::WeakLocal
    } else {
        Grade::NoneCertified
    };
    let mut v = MinimumVerdict::empty(vec![local.clone(), global.clone()], None);
    v.grade = grade;
    v.certifying_theorem = (grade != Grade::NoneCertified).then_some(cert);
    v.delta_sweep = global.radius_profile.clone();
    if cert == Certificate::Corollary41 {
        v.label = Some(NECESSARY_AND_SUFFICIENT.into());
        if local.fails() {
            v.not_minimum_of = Some(Grade::WeakLocal);
        } else if global.fails() {
            v.not_minimum_of = Some(Grade::Absolute);
        }
    }
    Ok(v)
}

/// Affine-in-`x` integrands: sampled Weierstrass condition, ball and global.
pub fn check_thm43(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<MinimumVerdict> {
    weierstrass_route(l, xbar, plan, Certificate::Theorem43)
}

/// As [`check_thm43`], labeled necessary-and-sufficient; a failing global tier
/// certifies that the candidate is not an absolute minimum.
pub fn check_corollary41(l: &Expr, xbar: &Trajectory<f64>, plan: &SamplingPlan) -> Result<MinimumVerdict> {
    weierstrass_route(l, xbar, plan, Certificate::Corollary41)
}

/// Strongest grade wins; ties go to the earlier entry of [`Certificate::ORDER`].
pub fn synthesize_verdict(results: &[(Certificate, MinimumVerdict)]) -> MinimumVerdict {
    let mut sorted: Vec<&(Certificate, MinimumVerdict)> = results.iter().collect();
    sorted.sort_by_key(|(c, _)| c.rank());
    let best = sorted.iter().filter(|(_, v)| v.grade != Grade::NoneCertified).max_by(|a, b| {
        a.1.grade.cmp(&b.1.grade).then(b.0.rank().cmp(&a.0.rank()))
    });
    let not_min = results.iter().filter_map(|(_, v)| v.not_minimum_of).max();
    match best {
        Some((c, v)) => {
            let mut out = v.clone();
            out.certifying_theorem = Some(*c);
            out.not_minimum_of = not_min.filter(|g| *g > v.grade);
            out
        }
        None => {
            let mut out = MinimumVerdict::none_certified();
            for (c, v) in sorted {
                for r in &v.reports {
                    if r.witness.is_some() {
                        let mut r = r.clone();
                        if !r.condition.contains(c.key()) {
                            r.condition = format!("{}:{}", c.key(), r.condition);
                        }
                        out.reports.push(r);
                    }
                }
            }
            out.not_minimum_of = not_min;
            out
        }
    }
}

/// Pointwise dominance diagnostic
/// `L(t, x̄+η, ẋ̄+ξ) − L̄ − L̄_xᵀη − L̄_ẋᵀξ + ξᵀQη + ½ηᵀQ̇η` over the full sample set.
/// Informational only: no verdict is derived from it.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceDiagnostic {
    pub worst_value: f64,
    pub worst_margin: f64,
    pub location: Option<Witness>,
    pub samples: usize,
    pub q_used: String,
    pub plan_digest: String,
}

pub fn pointwise_dominance(l: &Expr, xbar: &Trajectory<f64>, q: &QSpec, plan: &SamplingPlan) -> Result<DominanceDiagnostic> {
    let n = xbar.dim();
    let mut tr = Tracker::new();
    let mut xs = vec![0.0; n];
    let mut z = vec![0.0; n];
    for node in plan.open_t_grid() {
        let t = node.t;
        let (x, v) = at_node(xbar, node)?;
        let (qm, dq) = q.eval(t)?;
        let lbar = l.eval(t, &x, &v).map_err(Error::eval_at(t))?;
        let gx = l.grad_x(t, &x, &v).map_err(Error::eval_at(t))?;
        let gv = l.grad_dx(t, &x, &v).map_err(Error::eval_at(t))?;
        for xi in &plan.xi {
            for k in 0..n {
                z[k] = v[k] + xi[k];
            }
            let lin_v = dot(&gv, xi);
            for eta in &plan.eta {
                for k in 0..n {
                    xs[k] = x[k] + eta[k];
                }
                let lz = l.eval(t, &xs, &z).map_err(Error::eval_at(t))?;
                let lin_x = dot(&gx, eta);
                let qt = qm.bilinear(xi, eta);
                let dqt = 0.5 * dq.quad_form(eta);
                let d = lz - lbar - lin_x - lin_v + qt + dqt;
                let scale = lz.abs() + lbar.abs() + lin_x.abs() + lin_v.abs() + qt.abs() + dqt.abs();
                tr.offer(d / (1.0 + scale), d, || witness(node, xi, eta, None));
            }
        }
    }
    Ok(DominanceDiagnostic {
        worst_value: tr.raw,
        worst_margin: tr.worst,
        location: tr.at,
        samples: tr.samples,
        q_used: q.describe(),
        plan_digest: plan.digest().to_string(),
    })
}
