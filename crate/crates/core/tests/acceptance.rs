//! Acceptance criteria, one PASS/FAIL line each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;
use varcert::conditions::{check_euler, DEFAULT_EULER_TOL};
use varcert::pipeline::{run_pipeline, CheckStatus, FinalVerdict, PipelineOptions, PipelineRun, Report};
use varcert::problem::{load_problem, ProblemFile};
use varcert::quadrature::{direct_increment, increment_via_eq34, integrate_functional, DEFAULT_TOL};
use varcert::sufficiency::{Certificate, Grade, QSpec, NECESSARY_AND_SUFFICIENT};
use varcert::trajectory::{make_bump_perturbation, Side};
use varcert::{Expr, Path, SamplingPlan};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn corpus(name: &str) -> ProblemFile {
    load_problem(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.json"))).unwrap()
}

fn timed(pf: &ProblemFile) -> (PipelineRun, f64) {
    let start = Instant::now();
    let run = run_pipeline(pf, &PipelineOptions::default());
    (run, start.elapsed().as_secs_f64())
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn outcome(r: &Report, c: Certificate) -> Result<&varcert::sufficiency::MinimumVerdict, String> {
    let o = r.sufficiency.iter().find(|o| o.theorem == c).ok_or_else(|| format!("{} not attempted", c.key()))?;
    ensure(o.status == CheckStatus::Ran, format!("{} status {:?}: {:?}", c.key(), o.status, o.reason))?;
    o.verdict.as_ref().ok_or_else(|| format!("{} has no verdict", c.key()))
}

fn riccati_tan() -> Outcome {
    let pf = corpus("example_5_2");
    let (run, secs) = timed(&pf);
    let r = &run.report;
    ensure(r.verdict == Some(FinalVerdict::Absolute), format!("verdict {:?}", r.verdict))?;
    ensure(r.certifying_theorem == Some(Certificate::Theorem42), format!("certified by {:?}", r.certifying_theorem))?;
    let sol = run.artifacts.riccati.as_ref().ok_or("no Riccati solution")?;
    let stop = std::f64::consts::FRAC_PI_2 - 0.1;
    let mut worst: f64 = 0.0;
    for k in 1..=1000 {
        let t = stop * k as f64 / 1000.0;
        let q = sol.q(t).map_err(|e| e.to_string())?;
        let exact = 2.0 * t.tan();
        worst = worst.max((q.as_slice()[0] - exact).abs() / exact);
    }
    let q0 = sol.q(0.0).map_err(|e| e.to_string())?.as_slice()[0];
    ensure(q0 == 0.0, format!("Q(0) = {q0}"))?;
    ensure(worst <= 1e-6, format!("relative error {worst:.2e}"))?;
    ensure(secs <= 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("relative error vs 2 tan t {worst:.2e}, {secs:.2}s"))
}

fn degenerate_legendre() -> Outcome {
    let pf = corpus("example_5_1");
    let (run, secs) = timed(&pf);
    let r = &run.report;
    let e = r.necessary.euler.as_ref().ok_or("no Euler report")?;
    ensure(e.max_deviation <= 1e-8, format!("Euler deviation {:.2e}", e.max_deviation))?;
    let leg = r.necessary.legendre.as_ref().ok_or("no Legendre report")?;
    let deg = leg.degeneracy.as_ref().ok_or("no degeneracy recorded")?;
    ensure(deg.points.iter().any(|t| t.abs() < 1e-12), format!("degeneracy points {:?}", deg.points))?;
    let v = outcome(r, Certificate::Theorem44)?;
    ensure(v.grade == Grade::Absolute, format!("{} grade {:?}", Certificate::Theorem44.key(), v.grade))?;
    ensure(r.verdict == Some(FinalVerdict::Absolute), format!("verdict {:?}", r.verdict))?;
    let xbar = run.artifacts.candidate.as_ref().ok_or("no candidate")?;
    let s = integrate_functional(&pf.integrand, xbar, 1e-12).map_err(|e| e.to_string())?.value;
    ensure((s - 6.0).abs() <= 1e-8, format!("S = {s}"))?;
    ensure(secs <= 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("Euler deviation {:.1e}, S = {s:.12}, {secs:.2}s", e.max_deviation))
}

fn weak_local_degenerate() -> Outcome {
    let pf = corpus("example_5_3");
    let (run, secs) = timed(&pf);
    let r = &run.report;
    for (name, rep) in [("legendre", &r.necessary.legendre), ("weierstrass_local", &r.necessary.weierstrass_local)] {
        let rep = rep.as_ref().ok_or(format!("no {name} report"))?;
        let z = rep.degeneracy.as_ref().is_some_and(|d| d.identically_zero);
        ensure(z, format!("{name} not identically degenerate: {:?}", rep.degeneracy))?;
    }
    let v = outcome(r, Certificate::Theorem41)?;
    ensure(v.grade == Grade::WeakLocal, format!("{} grade {:?}", Certificate::Theorem41.key(), v.grade))?;
    let weak = v.reports.iter().find(|p| p.condition.ends_with("WEAK_LOCAL")).ok_or("no weak-tier report")?;
    ensure(weak.worst_value >= -1e-12, format!("sampled minimum {:.3e}", weak.worst_value))?;
    ensure(r.verdict == Some(FinalVerdict::WeakLocal), format!("verdict {:?}", r.verdict))?;
    ensure(secs <= 10.0, format!("took {secs:.2}s"))?;
    Ok(format!("sampled minimum {:.2e}, {secs:.2}s", weak.worst_value))
}

fn affine_label() -> Outcome {
    let pf = corpus("example_2_1");
    let (run, _) = timed(&pf);
    let r = &run.report;
    ensure(r.certifying_theorem == Some(Certificate::Corollary41), format!("certified by {:?}", r.certifying_theorem))?;
    ensure(r.verdict == Some(FinalVerdict::Absolute), format!("verdict {:?}", r.verdict))?;
    ensure(r.label.as_deref() == Some(NECESSARY_AND_SUFFICIENT), format!("label {:?}", r.label))?;
    let d = r.dominance.as_ref().ok_or("no dominance diagnostic")?;
    ensure(d.worst_value >= -1e-12, format!("dominance minimum {:.3e}", d.worst_value))?;
    Ok(format!("dominance minimum {:.2e}", d.worst_value))
}

fn increment_identity() -> Outcome {
    let names = ["example_2_1", "example_5_2"];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let pf = corpus(names[k % names.len()]);
        let (t0, t1) = pf.interval;
        let xbar = match &pf.candidate {
            Some(c) => c.clone(),
            None => varcert::pipeline::resolve_candidate(&pf).map_err(|e| e.to_string())?.0,
        };
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let q = QSpec::parse(t0, t1, &[vec![format!("{} + {}*t + {}*t^2", c[0], c[1], c[2]).as_str()]]).map_err(|e| e.to_string())?;
        let d = make_bump_perturbation(1, t0, t1, 100 + k as u64, 3).scaled(rng.gen_range(0.05..0.5));
        let direct = direct_increment(&pf.integrand, &xbar, &d, DEFAULT_TOL).map_err(|e| e.to_string())?.value;
        let aug = increment_via_eq34(&pf.integrand, &xbar, &d, &q, DEFAULT_TOL).map_err(|e| e.to_string())?.value;
        worst = worst.max((aug - direct).abs());
    }
    ensure(worst <= 1e-7, format!("max difference {worst:.2e}"))?;
    Ok(format!("20 pairs, max difference {worst:.2e}"))
}

/// Gradient against central differences of the value, Hessian against central
/// differences of the gradient.
fn ad_vs_fd(l: &Expr, rng: &mut ChaCha8Rng, points: usize, x_range: (f64, f64), t_range: (f64, f64)) -> Result<f64, String> {
    let n = l.dim();
    let m = 1 + 2 * n;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let z: Vec<f64> = (0..m).map(|i| if i == 0 { rng.gen_range(t_range.0..t_range.1) } else { rng.gen_range(x_range.0..x_range.1) }).collect();
        let jet = |z: &[f64]| l.eval_jet2(z[0], &z[1..1 + n], &z[1 + n..]).map_err(|e| e.to_string());
        let j = jet(&z)?;
        for a in 0..m {
            let h = 1e-5 * (1.0 + z[a].abs());
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[a] += h;
            zm[a] -= h;
            let (jp, jm) = (jet(&zp)?, jet(&zm)?);
            let g = (jp.value - jm.value) / (2.0 * h);
            worst = worst.max((g - j.grad[a]).abs() / (1.0 + j.grad[a].abs()));
            for b in 0..m {
                let hb = (jp.grad[b] - jm.grad[b]) / (2.0 * h);
                worst = worst.max((hb - j.hess[(a, b)]).abs() / (1.0 + j.hess[(a, b)].abs()));
            }
        }
    }
    Ok(worst)
}

fn derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let cases = [
        ("dx^2", (-3.0, 3.0)),
        ("t^2*dx^2+12*x^2", (-3.0, 3.0)),
        ("dx^2-x^2", (-3.0, 3.0)),
        ("x^(4/3) - x^(5/3)*dx^2", (0.1, 3.0)),
        ("(dx^2-1)^2", (-3.0, 3.0)),
        ("dx^2+t*x", (-3.0, 3.0)),
        ("exp(x)*sin(dx) + log(1 + x^2)*t^3 - sqrt(1 + dx^2)", (-2.0, 2.0)),
    ];
    for (src, range) in cases {
        let l = Expr::parse(src, 1).map_err(|e| e.to_string())?;
        worst = worst.max(ad_vs_fd(&l, &mut rng, 200, range, (-1.0, 1.0))?);
    }
    let l2 = Expr::parse("dx[1]^2 + dx[2]^2 + x[1]*x[2]*dx[1] + cos(t*x[2])", 2).map_err(|e| e.to_string())?;
    worst = worst.max(ad_vs_fd(&l2, &mut rng, 200, (-2.0, 2.0), (0.0, 1.0))?);
    ensure(worst <= 1e-6, format!("max relative discrepancy {worst:.2e}"))?;
    Ok(format!("200 points per integrand, max relative discrepancy {worst:.2e}"))
}

fn negative_controls() -> Outcome {
    let pf = corpus("conjugate_fail");
    let (run, _) = timed(&pf);
    let r = &run.report;
    ensure(r.verdict == Some(FinalVerdict::NoneCertified), format!("conjugate_fail verdict {:?}", r.verdict))?;
    let ric = r.riccati.as_ref().ok_or("no Riccati artifact")?;
    let pole = ric.scans.iter().find(|s| s.q0_multiple == 0.0).and_then(|s| s.blow_up).ok_or("no blow-up from q0 = 0")?;
    let pi6 = std::f64::consts::FRAC_PI_6;
    ensure((pole - pi6).abs() <= 1e-3, format!("pole at {pole}"))?;

    let pf = corpus("broken_extremal");
    let (run, _) = timed(&pf);
    let we = run.report.necessary.weierstrass_erdmann.as_ref().ok_or("no corner report")?;
    ensure(we.holds(), format!("corner conditions {:?}", we.verdict))?;

    let pf = corpus("example_2_1");
    let bent = Path::parse_smooth(0.0, 1.0, &["1 - t + 0.01*sin(pi*t)"]).map_err(|e| e.to_string())?;
    let plan = SamplingPlan::build(pf.plan.clone(), 1, 0.0, 1.0, &[]);
    let e = check_euler(&pf.integrand, &bent, &plan, DEFAULT_EULER_TOL).map_err(|e| e.to_string())?;
    ensure(e.max_deviation > 1e-7 && !e.holds(), format!("perturbed Euler deviation {:.2e}", e.max_deviation))?;
    let (x, _) = bent.eval(0.5, Side::Auto).map_err(|e| e.to_string())?;
    ensure((x[0] - 0.51).abs() < 1e-12, "perturbed candidate misparsed")?;
    Ok(format!("pole at {pole:.6}, perturbed Euler deviation {:.2e}", e.max_deviation))
}

fn determinism() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for f in &files {
        let pf = load_problem(f).map_err(|e| e.to_string())?;
        let a = run_pipeline(&pf, &PipelineOptions::default()).report.to_json();
        let b = run_pipeline(&pf, &PipelineOptions::default()).report.to_json();
        ensure(a == b, format!("{} differs between runs", pf.name))?;
    }
    Ok(format!("{} problems byte-identical across runs", files.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("Riccati solution matches 2 tan t", riccati_tan),
        ("degenerate Legendre, absolute minimum, S = 6", degenerate_legendre),
        ("weak local minimum with degenerate conditions", weak_local_degenerate),
        ("affine-in-x label and dominance", affine_label),
        ("Q-augmented increment identity", increment_identity),
        ("automatic vs finite-difference derivatives", derivatives),
        ("negative controls", negative_controls),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match r {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
