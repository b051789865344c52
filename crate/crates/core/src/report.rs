//! Human-readable rendering and CSV plot data.

use crate::conditions::{excess, ConditionReport, Verdict};
use crate::error::{Error, Result};
use crate::pipeline::{CheckStatus, PipelineRun, Report};
use crate::problem::ProblemFile;
use crate::quadrature::{direct_increment, increment_via_eq34, DEFAULT_TOL};
use crate::sufficiency::QSpec;
use crate::trajectory::{make_bump_perturbation, Side};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    /// `t, xi, E`.
    ExcessSurface,
    /// `t, q11, q12, …`.
    QSolution,
    /// `scale, delta_S_direct, delta_S_eq34`.
    IncrementSweep,
}

impl FromStr for CsvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excess-surface" => Ok(CsvKind::ExcessSurface),
            "q-solution" => Ok(CsvKind::QSolution),
            "increment-sweep" => Ok(CsvKind::IncrementSweep),
            other => Err(Error::Schema {
                path: "--emit-csv".into(),
                message: format!("unknown artifact `{other}` (excess-surface, q-solution, increment-sweep)"),
            }),
        }
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Holds => "HOLDS",
        Verdict::Fails => "FAILS",
        Verdict::Inconclusive => "INCONCLUSIVE",
    }
}

fn line(out: &mut String, name: &str, r: &ConditionReport) {
    let _ = write!(out, "  {name:<22} {:<12} worst margin {:+.3e}", verdict_str(r.verdict), r.worst_margin);
    if let Some(w) = &r.witness {
        let _ = write!(out, "  witness t = {:.6}", w.t);
        if let Some(xi) = &w.xi {
            let _ = write!(out, " xi = {xi:?}");
        }
        if let Some(eta) = &w.eta {
            let _ = write!(out, " eta = {eta:?}");
        }
    }
    if let Some(d) = &r.degeneracy {
        if d.identically_zero {
            out.push_str("  (degenerate: identically zero)");
        } else if !d.points.is_empty() {
            let _ = write!(out, "  (degenerate at t = {:?})", d.points);
        }
    }
    out.push('\n');
}

/// Plain-text rendering of a report.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem   {} ({})", r.problem.name, &r.problem.digest[..12.min(r.problem.digest.len())]);
    let _ = writeln!(out, "integrand {}  on [{}, {}]", r.problem.integrand, r.problem.interval.0, r.problem.interval.1);
    let _ = writeln!(out, "plan      seed {}  digest {}  delta {}  R_global {}", r.seed, &r.plan_digest[..12], r.delta, r.r_global);
    if let Some(c) = &r.candidate {
        let _ = write!(out, "candidate {}", c.source);
        if !c.corners.is_empty() {
            let _ = write!(out, ", corners {:?}", c.corners);
        }
        if let Some(res) = c.shooting_residual {
            let _ = write!(out, ", shooting residual {res:.2e}");
        }
        out.push('\n');
    }
    if let Some(s) = &r.structure {
        let _ = writeln!(out, "structure {:?}", s.class());
    }
    out.push_str("necessary conditions\n");
    let n = &r.necessary;
    if let Some(e) = &n.euler {
        let _ = writeln!(
            out,
            "  {:<22} {:<12} max deviation {:.3e}",
            "euler",
            verdict_str(e.report.verdict),
            e.max_deviation
        );
    }
    for (name, rep) in [
        ("weierstrass_erdmann", &n.weierstrass_erdmann),
        ("legendre", &n.legendre),
        ("weierstrass_local", &n.weierstrass_local),
        ("weierstrass_global", &n.weierstrass_global),
    ] {
        if let Some(rep) = rep {
            line(&mut out, name, rep);
        }
    }
    if !r.sufficiency.is_empty() {
        out.push_str("sufficiency\n");
    }
    for t in &r.sufficiency {
        let status = match (t.status, &t.verdict) {
            (CheckStatus::Ran, Some(v)) => v.grade.as_str().to_string(),
            (s, _) => format!("{s:?}").to_uppercase(),
        };
        let _ = write!(out, "  {:<22} {status}", t.theorem.key());
        if let Some(why) = &t.reason {
            let _ = write!(out, "  ({why})");
        }
        out.push('\n');
    }
    if let Some(ric) = &r.riccati {
        let _ = write!(out, "riccati   {} scans", ric.scans.len());
        if let Some(b) = ric.blow_up {
            let _ = write!(out, ", blow-up at t = {b:.6}");
        }
        out.push('\n');
    }
    if let Some(d) = &r.dominance {
        let _ = writeln!(out, "dominance diagnostic: sampled minimum {:+.3e} ({})", d.worst_value, d.q_used);
    }
    match r.verdict {
        Some(v) => {
            let _ = write!(out, "verdict   {}", v.as_str());
            if let Some(c) = r.certifying_theorem {
                let _ = write!(out, " via {}", c.key());
            }
            if let Some(label) = &r.label {
                let _ = write!(out, " [{label}]");
            }
            out.push('\n');
        }
        None => out.push_str("verdict   none (pipeline stopped)\n"),
    }
    if let Some(stage) = &r.failing_stage {
        let _ = writeln!(out, "failing stage: {stage}");
    }
    for e in &r.errors {
        let _ = writeln!(out, "error in {} ({}): {}", e.stage, e.kind, e.message);
    }
    if let Some(m) = r.matches_expected {
        let _ = writeln!(out, "expected verdict {}", if m { "reproduced" } else { "NOT reproduced" });
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Writes one CSV artifact for a finished run.
pub fn emit_csv(pf: &ProblemFile, run: &PipelineRun, kind: CsvKind, path: impl AsRef<Path>) -> Result<()> {
    let text = csv_text(pf, run, kind)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// CSV artifact as a string.
pub fn csv_text(pf: &ProblemFile, run: &PipelineRun, kind: CsvKind) -> Result<String> {
    let missing = |what: &str| Error::Inapplicable(format!("{what} was not computed for this run"));
    let xbar = run.artifacts.candidate.as_ref().ok_or_else(|| missing("a candidate"))?;
    let l = &pf.integrand;
    let (t0, t1) = pf.interval;
    let mut out = String::new();
    match kind {
        CsvKind::ExcessSurface => {
            // ξ along the first coordinate axis
            out.push_str("t,xi,E\n");
            let n = pf.n;
            for i in 0..=64 {
                let t = t0 + (t1 - t0) * i as f64 / 64.0;
                let (x, v) = xbar.eval(t, Side::Auto)?;
                for k in 0..=40 {
                    let s = (k as f64 - 20.0) / 10.0;
                    let mut z = v.clone();
                    z[0] += s;
                    let e = excess(l, t, &x, &v, &z).map_err(Error::eval_at(t))?;
                    let _ = writeln!(out, "{},{},{}", fmt(t), fmt(s), fmt(e));
                }
                debug_assert_eq!(x.len(), n);
            }
        }
        CsvKind::QSolution => {
            let q = run.artifacts.q.as_ref().ok_or_else(|| missing("Q"))?;
            let n = pf.n;
            out.push('t');
            for i in 1..=n {
                for j in 1..=n {
                    let _ = write!(out, ",q{i}{j}");
                }
            }
            out.push('\n');
            let times: Vec<f64> = match &run.artifacts.riccati {
                Some(sol) if sol.blow_up.is_none() => sol.nodes.iter().map(|n| n.t).collect(),
                _ => run.artifacts.plan.open_t_grid().map(|n| n.t).collect(),
            };
            let mut last = f64::NAN;
            for t in times {
                if t == last || t > q.last_time() {
                    continue;
                }
                last = t;
                let (m, _) = q.eval(t)?;
                out.push_str(&fmt(t));
                for v in m.as_slice() {
                    let _ = write!(out, ",{}", fmt(*v));
                }
                out.push('\n');
            }
        }
        CsvKind::IncrementSweep => {
            let zero = QSpec::zero(pf.n, t0, t1);
            let q = run.artifacts.q.as_ref().unwrap_or(&zero);
            let bump = make_bump_perturbation(pf.n, t0, t1, run.artifacts.plan.seed(), 3);
            out.push_str("scale,delta_S_direct,delta_S_eq34\n");
            for k in 0..=10 {
                let s = run.artifacts.plan.delta() * k as f64 / 10.0;
                let d = bump.scaled(s);
                let direct = direct_increment(l, xbar, &d, DEFAULT_TOL)?.value;
                let aug = increment_via_eq34(l, xbar, &d, q, DEFAULT_TOL)?.value;
                let _ = writeln!(out, "{},{},{}", fmt(s), fmt(direct), fmt(aug));
            }
        }
    }
    Ok(out)
}
