//! End-to-end run: candidate, necessary conditions, structure, sufficiency.

use crate::conditions::{
    check_euler, check_legendre, check_weierstrass, check_weierstrass_erdmann, ConditionReport, EulerResidual, Tier,
    DEFAULT_CORNER_TOL, DEFAULT_EULER_TOL,
};
use crate::error::{Error, Result};
use crate::expr::{classify_structure, StructureFlags};
use crate::plan::SamplingPlan;
use crate::problem::{Expected, ProblemFile, QChoice};
use crate::riccati::{certify_via_riccati_from, RiccatiScan, RiccatiSolution, Q0_SCAN};
use crate::shooting::{default_bracket, solve_bvp, Boundary};
use crate::sufficiency::{
    check_corollary41, check_thm41, check_thm42, check_thm43, check_thm44, pointwise_dominance, synthesize_verdict, Certificate,
    DominanceDiagnostic, Grade, MinimumVerdict, QSpec,
};
use crate::linalg::Mat;
use crate::trajectory::Trajectory;
use serde::Serialize;
use std::sync::Arc;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FinalVerdict {
    Absolute,
    StrongLocal,
    WeakLocal,
    NoneCertified,
    /// A first-order condition (Euler, Weierstrass–Erdmann) fails.
    NotExtremal,
    /// A second-order necessary condition (Legendre, local Weierstrass) fails.
    NotMinimum,
}

impl FinalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalVerdict::Absolute => "ABSOLUTE",
            FinalVerdict::StrongLocal => "STRONG_LOCAL",
            FinalVerdict::WeakLocal => "WEAK_LOCAL",
            FinalVerdict::NoneCertified => "NONE_CERTIFIED",
            FinalVerdict::NotExtremal => "NOT_EXTREMAL",
            FinalVerdict::NotMinimum => "NOT_MINIMUM",
        }
    }

    fn from_grade(g: Grade) -> Self {
        match g {
            Grade::Absolute => FinalVerdict::Absolute,
            Grade::StrongLocal => FinalVerdict::StrongLocal,
            Grade::WeakLocal => FinalVerdict::WeakLocal,
            Grade::NoneCertified => FinalVerdict::NoneCertified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckStatus {
    Ran,
    Inapplicable,
    /// Not run because a stronger certificate was already found.
    Skipped,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremOutcome {
    pub theorem: Certificate,
    pub status: CheckStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<MinimumVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateInfo {
    /// `supplied` or `shooting`.
    pub source: &'static str,
    pub corners: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shooting_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shooting_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NecessaryReports {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub euler: Option<EulerResidual>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weierstrass_erdmann: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub legendre: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weierstrass_local: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weierstrass_global: Option<ConditionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiArtifact {
    pub scans: Vec<RiccatiScan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub stage: String,
    /// `input` or `numerical`.
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSummary {
    pub name: String,
    pub digest: String,
    pub n: usize,
    pub interval: (f64, f64),
    pub integrand: String,
}

/// Machine-readable outcome of [`run_pipeline`].
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub problem: ProblemSummary,
    pub seed: u64,
    pub plan_digest: String,
    pub delta: f64,
    pub r_global: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureFlags>,
    pub necessary: NecessaryReports,
    pub sufficiency: Vec<TheoremOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub riccati: Option<RiccatiArtifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominance: Option<DominanceDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimum: Option<MinimumVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<FinalVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certifying_theorem: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_stage: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<StageError>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_expected: Option<bool>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// True when a stage failed for numerical reasons without a verdict.
    pub fn numerical_failure(&self) -> bool {
        self.verdict.is_none() && self.errors.iter().any(|e| e.kind == "numerical")
    }

    pub fn input_failure(&self) -> bool {
        self.verdict.is_none() && self.errors.iter().any(|e| e.kind == "input")
    }
}

/// Objects behind the report, kept for plot-data export.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub plan: SamplingPlan,
    pub candidate: Option<Trajectory<f64>>,
    /// `Q` of the certifying check, or the first `Q` tried.
    pub q: Option<QSpec>,
    pub riccati: Option<Arc<RiccatiSolution>>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: Report,
    pub artifacts: Artifacts,
}

/// Knobs that override the problem file.
#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub euler_tol: Option<f64>,
    pub q: Option<QChoice>,
    /// Stop after the necessary conditions.
    pub necessary_only: bool,
}

fn stage_error(stage: &str, e: &Error) -> StageError {
    StageError {
        stage: stage.into(),
        kind: if e.is_input_error() { "input" } else { "numerical" },
        message: e.to_string(),
    }
}

/// Supplied candidate, or the shooting solution for scalar problems.
pub fn resolve_candidate(pf: &ProblemFile) -> Result<(Trajectory<f64>, CandidateInfo)> {
    if let Some(c) = &pf.candidate {
        let corners = c.corner_set()?;
        return Ok((c.clone(), CandidateInfo { source: "supplied", corners, shooting_residual: None, shooting_iterations: None }));
    }
    if pf.n != 1 {
        return Err(Error::Inapplicable("no candidate supplied and shooting needs n = 1".into()));
    }
    let b = Boundary { t0: pf.interval.0, t1: pf.interval.1, x0: pf.x0[0], x1: pf.x1[0] };
    let s = solve_bvp(&pf.integrand, &b, default_bracket(&b))?;
    Ok((
        s.trajectory,
        CandidateInfo {
            source: "shooting",
            corners: Vec::new(),
            shooting_residual: Some(s.shooting_residual),
            shooting_iterations: Some(s.iterations),
        },
    ))
}

struct Run<'a> {
    pf: &'a ProblemFile,
    plan: SamplingPlan,
    report: Report,
    q_used: Option<QSpec>,
    riccati: Option<Arc<RiccatiSolution>>,
}

impl<'a> Run<'a> {
    fn fail(&mut self, stage: &str, e: &Error) {
        self.report.errors.push(stage_error(stage, e));
        self.report.failing_stage.get_or_insert_with(|| stage.to_string());
    }
}

/// Runs the staged pipeline: candidate, Euler and corner conditions,
/// Legendre, Weierstrass, structure, then the applicable sufficiency checks
/// strongest-class first, stopping at the first `ABSOLUTE` certificate.
pub fn run_pipeline(pf: &ProblemFile, opts: &PipelineOptions) -> PipelineRun {
    let (t0, t1) = pf.interval;
    let candidate = resolve_candidate(pf);
    let corners = candidate.as_ref().map(|c| c.1.corners.clone()).unwrap_or_default();
    let plan = SamplingPlan::build(pf.plan.clone(), pf.n, t0, t1, &corners);
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        problem: ProblemSummary {
            name: pf.name.clone(),
            digest: pf.digest.clone(),
            n: pf.n,
            interval: pf.interval,
            integrand: pf.integrand_source.clone(),
        },
        seed: plan.seed(),
        plan_digest: plan.digest().to_string(),
        delta: plan.delta(),
        r_global: plan.r_global(),
        candidate: None,
        structure: None,
        necessary: NecessaryReports::default(),
        sufficiency: Vec::new(),
        riccati: None,
        dominance: None,
        minimum: None,
        verdict: None,
        certifying_theorem: None,
        label: None,
        failing_stage: None,
        errors: Vec::new(),
        notes: Vec::new(),
        expected: pf.expected.clone(),
        matches_expected: None,
    };
    let mut run = Run { pf, plan, report, q_used: None, riccati: None };
    let xbar = match candidate {
        Ok((c, info)) => {
            run.report.candidate = Some(info);
            Some(c)
        }
        Err(e) => {
            run.fail("candidate", &e);
            None
        }
    };
    if let Some(x) = &xbar {
        stages(&mut run, x, opts);
    }
    if let (Some(exp), Some(v)) = (&run.report.expected, run.report.verdict) {
        let cert_ok = match (&exp.certifying_theorem, run.report.certifying_theorem) {
            (None, _) => true,
            (Some(want), Some(got)) => serde_json::to_value(got).ok().and_then(|s| s.as_str().map(|s| s == want)).unwrap_or(false),
            (Some(_), None) => false,
        };
        run.report.matches_expected = Some(exp.verdict == v.as_str() && cert_ok);
    }
    let Run { plan, report, q_used, riccati, .. } = run;
    PipelineRun { report, artifacts: Artifacts { plan, candidate: xbar, q: q_used, riccati } }
}

fn stages(run: &mut Run<'_>, xbar: &Trajectory<f64>, opts: &PipelineOptions) {
    let l = &run.pf.integrand;
    let plan = run.plan.clone();
    let tol = opts.euler_tol.unwrap_or(DEFAULT_EULER_TOL);

    let euler = match check_euler(l, xbar, &plan, tol) {
        Ok(r) => r,
        Err(e) => return run.fail("euler", &e),
    };
    let euler_ok = euler.holds();
    run.report.necessary.euler = Some(euler);
    let we = match check_weierstrass_erdmann(l, xbar, &plan, DEFAULT_CORNER_TOL) {
        Ok(r) => r,
        Err(e) => return run.fail("weierstrass_erdmann", &e),
    };
    let we_ok = we.holds();
    run.report.necessary.weierstrass_erdmann = Some(we);
    if !euler_ok || !we_ok {
        run.report.verdict = Some(FinalVerdict::NotExtremal);
        run.report.failing_stage = Some(if euler_ok { "weierstrass_erdmann" } else { "euler" }.into());
        return;
    }

    let legendre = match check_legendre(l, xbar, &plan) {
        Ok(r) => r,
        Err(e) => return run.fail("legendre", &e),
    };
    let local = match check_weierstrass(l, xbar, &plan, Tier::Local) {
        Ok(r) => r,
        Err(e) => return run.fail("weierstrass_local", &e),
    };
    let global = match check_weierstrass(l, xbar, &plan, Tier::Global) {
        Ok(r) => r,
        Err(e) => return run.fail("weierstrass_global", &e),
    };
    let second_order_fail = if legendre.fails() {
        Some("legendre")
    } else if local.fails() {
        Some("weierstrass_local")
    } else {
        None
    };
    let global_fails = global.fails();
    run.report.necessary.legendre = Some(legendre);
    run.report.necessary.weierstrass_local = Some(local);
    run.report.necessary.weierstrass_global = Some(global);
    if let Some(stage) = second_order_fail {
        run.report.verdict = Some(FinalVerdict::NotMinimum);
        run.report.failing_stage = Some(stage.into());
        return;
    }
    if opts.necessary_only {
        return;
    }

    let (t0, t1) = run.pf.interval;
    let flags = match classify_structure(l, t0, t1, plan.seed()) {
        Ok(f) => f,
        Err(e) => return run.fail("structure", &Error::eval_at(t0)(e)),
    };
    run.report.structure = Some(flags);

    let q_choice = opts.q.clone().or_else(|| run.pf.q.clone());
    let mut results: Vec<(Certificate, MinimumVerdict)> = Vec::new();
    let mut certified = false;
    for cert in Certificate::ORDER {
        if certified {
            run.report.sufficiency.push(TheoremOutcome {
                theorem: cert,
                status: CheckStatus::Skipped,
                reason: Some("an ABSOLUTE certificate was already found".into()),
                verdict: None,
            });
            continue;
        }
        let outcome = match cert {
            Certificate::Corollary41 if !flags.affine_in_x => Err(Error::Inapplicable("integrand is not affine in x".into())),
            Certificate::Corollary41 => check_corollary41(l, xbar, &plan),
            Certificate::Theorem44 if !flags.separable => Err(Error::Inapplicable("integrand is not separable".into())),
            Certificate::Theorem44 => check_thm44(l, xbar, &plan),
            Certificate::Theorem43 if flags.affine_in_x => {
                run.report.sufficiency.push(TheoremOutcome {
                    theorem: cert,
                    status: CheckStatus::Skipped,
                    reason: Some("same sampled condition as the corollary for affine integrands".into()),
                    verdict: None,
                });
                continue;
            }
            Certificate::Theorem43 => check_thm43(l, xbar, &plan),
            Certificate::Theorem42 => theorem42(run, xbar, &plan, &flags, q_choice.as_ref()),
            Certificate::Theorem41 => {
                let q = match &q_choice {
                    Some(QChoice::Given(q)) => q.clone(),
                    _ => QSpec::zero(run.pf.n, t0, t1),
                };
                let r = check_thm41(l, xbar, &q, &plan);
                if r.as_ref().is_ok_and(|v| v.grade != Grade::NoneCertified) || run.q_used.is_none() {
                    run.q_used = Some(q);
                }
                r
            }
        };
        match outcome {
            Ok(v) => {
                certified = v.grade == Grade::Absolute;
                run.report.sufficiency.push(TheoremOutcome { theorem: cert, status: CheckStatus::Ran, reason: None, verdict: Some(v.clone()) });
                results.push((cert, v));
            }
            Err(Error::Inapplicable(why)) => {
                run.report.sufficiency.push(TheoremOutcome { theorem: cert, status: CheckStatus::Inapplicable, reason: Some(why), verdict: None })
            }
            Err(Error::SingularA { t, eig }) if cert == Certificate::Theorem42 => run.report.sufficiency.push(TheoremOutcome {
                theorem: cert,
                status: CheckStatus::Inapplicable,
                reason: Some(Error::SingularA { t, eig }.to_string()),
                verdict: None,
            }),
            Err(e) => {
                run.report.errors.push(stage_error(cert.key(), &e));
                run.report.sufficiency.push(TheoremOutcome { theorem: cert, status: CheckStatus::Error, reason: Some(e.to_string()), verdict: None });
            }
        }
    }

    if results.is_empty() {
        run.report.verdict = Some(FinalVerdict::NoneCertified);
        run.report.notes.push("no sufficiency check was applicable".into());
    } else {
        let mut m = synthesize_verdict(&results);
        if global_fails && m.grade > Grade::WeakLocal {
            m.notes.push("global Weierstrass condition fails: grade capped at WEAK_LOCAL".into());
            m.grade = Grade::WeakLocal;
        }
        run.report.verdict = Some(FinalVerdict::from_grade(m.grade));
        run.report.certifying_theorem = m.certifying_theorem;
        run.report.label = m.label.clone();
        run.report.minimum = Some(m);
    }

    let q = run.q_used.clone().unwrap_or_else(|| QSpec::zero(run.pf.n, t0, t1));
    match pointwise_dominance(l, xbar, &q, &plan) {
        Ok(d) => run.report.dominance = Some(d),
        Err(e) => run.report.errors.push(stage_error("dominance", &e)),
    }
}

fn theorem42(run: &mut Run<'_>, xbar: &Trajectory<f64>, plan: &SamplingPlan, flags: &StructureFlags, q: Option<&QChoice>) -> Result<MinimumVerdict> {
    let l = &run.pf.integrand;
    let (t0, t1) = run.pf.interval;
    let n = run.pf.n;
    let fixed = match q {
        Some(QChoice::Given(q)) => Some(q.clone()),
        Some(QChoice::Zero) => Some(QSpec::zero(n, t0, t1)),
        _ if !flags.quadratic => Some(QSpec::zero(n, t0, t1)),
        _ => None,
    };
    if let Some(q) = fixed {
        let v = check_thm42(l, xbar, &q, plan)?;
        if v.grade != Grade::NoneCertified || run.q_used.is_none() {
            run.q_used = Some(q);
        }
        return Ok(v);
    }
    let q0s: Vec<Mat<f64>> = match q {
        Some(QChoice::Riccati(Some(m))) => vec![m.clone()],
        _ => Q0_SCAN.iter().map(|&s| Mat::identity(n).scale(s)).collect(),
    };
    let cert = certify_via_riccati_from(l, xbar, plan, &q0s)?;
    let sol = cert.solution.clone();
    run.report.riccati = Some(RiccatiArtifact {
        scans: cert.scans.clone(),
        q0: sol.as_ref().map(|s| s.q0.to_f64_rows()),
        blow_up: sol.as_ref().and_then(|s| s.blow_up),
        t_end: sol.as_ref().map(|s| s.t_end),
        nodes: sol.as_ref().map_or(0, |s| s.nodes.len()),
    });
    if let Some(s) = &sol {
        if s.blow_up.is_none() {
            run.q_used = Some(QSpec::riccati(s.clone()));
        }
    }
    run.riccati = sol;
    Ok(cert.verdict)
}
