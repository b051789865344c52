use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use varcert::linalg::Mat;
use varcert::pipeline::{resolve_candidate, run_pipeline, PipelineOptions, PipelineRun};
use varcert::problem::{load_problem, ProblemFile, QChoice};
use varcert::quadrature::{direct_increment, increment_via_eq34, DEFAULT_TOL};
use varcert::report::{emit_csv, render_text, CsvKind};
use varcert::sufficiency::QSpec;
use varcert::trajectory::{make_bump_perturbation, Side};
use varcert::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Numerical verification of minima in calculus-of-variations problems.
#[derive(Parser)]
#[command(name = "varcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (JSON)
    problem: PathBuf,
    /// Seed of the sampling plan
    #[arg(long, env = "VARCERT_SEED")]
    seed: Option<u64>,
    /// Radius of the local ball
    #[arg(long)]
    delta: Option<f64>,
    /// Q as rows of expressions in t: "a, b; c, d", or "zero" / "riccati"
    #[arg(long)]
    q: Option<String>,
    /// Initial value q0·I for the Riccati construction
    #[arg(long)]
    q0: Option<f64>,
    /// Tolerance of the Euler check
    #[arg(long)]
    tol: Option<f64>,
    /// Write plot data: excess-surface, q-solution or increment-sweep, optionally KIND=PATH
    #[arg(long, value_name = "KIND[=PATH]")]
    emit_csv: Vec<String>,
    /// Print the machine-readable report
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the integrand, its gradient and Hessian along the candidate
    Eval {
        #[command(flatten)]
        common: Common,
        /// Time at which to evaluate
        #[arg(long)]
        t: f64,
    },
    /// Necessary conditions only
    Necessary(Common),
    /// Full pipeline, verdict summary
    Sufficient(Common),
    /// Riccati construction of Q (quadratic integrands)
    Riccati(Common),
    /// Compare the direct increment with the Q-augmented formula on seeded perturbations
    Increment(Common),
    /// Solve the boundary value problem by shooting
    Solve(Common),
    /// Full pipeline with every report
    Report(Common),
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL }, message: e.to_string() }
    }
}

fn input(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, message: message.into() }
}

fn parse_q(src: &str, pf: &ProblemFile) -> Result<QChoice, Failure> {
    match src.trim() {
        "zero" | "ZERO" => return Ok(QChoice::Zero),
        "riccati" | "RICCATI" => return Ok(QChoice::Riccati(None)),
        _ => {}
    }
    let rows: Vec<Vec<&str>> = src.split(';').map(|r| r.split(',').map(str::trim).collect()).collect();
    let (t0, t1) = pf.interval;
    let q = QSpec::parse(t0, t1, &rows)?;
    if q.n != pf.n {
        return Err(input(format!("--q must be {0}x{0}", pf.n)));
    }
    Ok(QChoice::Given(q))
}

fn load(c: &Common) -> Result<(ProblemFile, PipelineOptions), Failure> {
    let mut pf = load_problem(&c.problem)?;
    if let Some(s) = c.seed {
        pf.plan.seed = s;
    }
    if let Some(d) = c.delta {
        if d.is_nan() || d <= 0.0 {
            return Err(input("--delta must be positive"));
        }
        pf.plan.delta = d;
    }
    let mut opts = PipelineOptions { euler_tol: c.tol, ..PipelineOptions::default() };
    if let Some(q) = &c.q {
        opts.q = Some(parse_q(q, &pf)?);
    }
    if let Some(q0) = c.q0 {
        opts.q = Some(QChoice::Riccati(Some(Mat::identity(pf.n).scale(q0))));
    }
    Ok((pf, opts))
}

fn csv_targets(c: &Common, pf: &ProblemFile) -> Result<Vec<(CsvKind, PathBuf)>, Failure> {
    c.emit_csv
        .iter()
        .map(|spec| {
            let (kind, path) = match spec.split_once('=') {
                Some((k, p)) => (k, PathBuf::from(p)),
                None => {
                    let stem = if pf.name.is_empty() { "problem" } else { &pf.name };
                    (spec.as_str(), PathBuf::from(format!("{stem}_{spec}.csv")))
                }
            };
            Ok((kind.parse::<CsvKind>()?, path))
        })
        .collect()
}

fn emit(c: &Common, pf: &ProblemFile, run: &PipelineRun) -> Result<(), Failure> {
    for (kind, path) in csv_targets(c, pf)? {
        emit_csv(pf, run, kind, &path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn finish(run: &PipelineRun, json: bool, summary_only: bool) -> Result<(), Failure> {
    let r = &run.report;
    if json {
        print!("{}", r.to_json());
    } else if summary_only {
        let text = render_text(r);
        for l in text.lines().filter(|l| l.starts_with("verdict") || l.starts_with("failing") || l.starts_with("error")) {
            println!("{l}");
        }
    } else {
        print!("{}", render_text(r));
    }
    if r.verdict.is_some() {
        Ok(())
    } else if r.input_failure() {
        Err(input(format!("stage {} failed", r.failing_stage.as_deref().unwrap_or("?"))))
    } else {
        Err(Failure { code: EXIT_NUMERICAL, message: format!("stage {} failed", r.failing_stage.as_deref().unwrap_or("?")) })
    }
}

fn pipeline(c: &Common, necessary_only: bool, summary_only: bool) -> Result<(), Failure> {
    let (pf, mut opts) = load(c)?;
    opts.necessary_only = necessary_only;
    let run = run_pipeline(&pf, &opts);
    emit(c, &pf, &run)?;
    if necessary_only && !c.json {
        for l in render_text(&run.report).lines().filter(|l| !l.starts_with("verdict")) {
            println!("{l}");
        }
        return if run.report.errors.is_empty() { Ok(()) } else { finish(&run, false, true) };
    }
    finish(&run, c.json, summary_only)
}

fn eval(c: &Common, t: f64) -> Result<(), Failure> {
    let (pf, _) = load(c)?;
    let (xbar, _) = resolve_candidate(&pf)?;
    let (x, v) = xbar.eval(t, Side::Auto)?;
    let j = pf.integrand.eval_jet2(t, &x, &v).map_err(Error::eval_at(t))?;
    let out = serde_json::json!({
        "t": t,
        "x": x,
        "dx": v,
        "value": j.value,
        "grad_x": j.grad_x(),
        "grad_dx": j.grad_dx(),
        "hess_xx": j.hess_xx().to_f64_rows(),
        "hess_xdx": j.hess_xdx().to_f64_rows(),
        "hess_dxdx": j.hess_dxdx().to_f64_rows(),
    });
    if c.json {
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    } else {
        println!("L({t}, {x:?}, {v:?}) = {}", j.value);
        println!("L_x    = {:?}", j.grad_x());
        println!("L_dx   = {:?}", j.grad_dx());
        println!("L_xx   = {:?}", j.hess_xx().to_f64_rows());
        println!("L_xdx  = {:?}", j.hess_xdx().to_f64_rows());
        println!("L_dxdx = {:?}", j.hess_dxdx().to_f64_rows());
    }
    Ok(())
}

fn riccati(c: &Common) -> Result<(), Failure> {
    let (pf, mut opts) = load(c)?;
    if !matches!(opts.q, Some(QChoice::Riccati(_))) {
        opts.q = Some(QChoice::Riccati(None));
    }
    let run = run_pipeline(&pf, &opts);
    emit(c, &pf, &run)?;
    let r = &run.report;
    if c.json {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "riccati": r.riccati, "sufficiency": r.sufficiency })).expect("serializable"));
    } else {
        match &r.riccati {
            Some(a) => {
                for s in &a.scans {
                    print!("q0 = {:+} I: {}", s.q0_multiple, s.grade.as_str());
                    match (s.blow_up, &s.error) {
                        (Some(b), _) => println!(", blow-up at t = {b:.9}"),
                        (None, Some(e)) => println!(", {e}"),
                        (None, None) => println!(", solution to t = {:.9}", s.t_end),
                    }
                }
            }
            None => {
                let why = r
                    .sufficiency
                    .iter()
                    .find(|t| t.theorem == varcert::sufficiency::Certificate::Theorem42)
                    .and_then(|t| t.reason.clone())
                    .unwrap_or_else(|| "Riccati construction did not run".into());
                println!("{why}");
            }
        }
    }
    finish(&run, false, true).or_else(|e| if c.json { Ok(()) } else { Err(e) })
}

fn increment(c: &Common) -> Result<(), Failure> {
    let (pf, opts) = load(c)?;
    let run = run_pipeline(&pf, &opts);
    emit(c, &pf, &run)?;
    let xbar = run.artifacts.candidate.as_ref().ok_or_else(|| input("no candidate"))?;
    let (t0, t1) = pf.interval;
    let zero = QSpec::zero(pf.n, t0, t1);
    let q = run.artifacts.q.as_ref().unwrap_or(&zero);
    let seed = run.artifacts.plan.seed();
    let mut rows = Vec::new();
    for k in 0..5u64 {
        let d = make_bump_perturbation(pf.n, t0, t1, seed.wrapping_add(k), 3).scaled(0.1 * (k + 1) as f64);
        let direct = direct_increment(&pf.integrand, xbar, &d, DEFAULT_TOL)?.value;
        let aug = increment_via_eq34(&pf.integrand, xbar, &d, q, DEFAULT_TOL)?;
        rows.push(serde_json::json!({ "perturbation": k, "scale": d.scale(), "direct": direct, "augmented": aug.value, "difference": aug.value - direct }));
    }
    if c.json {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "q": q.describe(), "rows": rows })).expect("serializable"));
    } else {
        println!("{}", q.describe());
        for r in &rows {
            println!(
                "scale {:.2}: direct {:+.12e}  augmented {:+.12e}  difference {:+.1e}",
                r["scale"].as_f64().unwrap_or(f64::NAN),
                r["direct"].as_f64().unwrap_or(f64::NAN),
                r["augmented"].as_f64().unwrap_or(f64::NAN),
                r["difference"].as_f64().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

fn solve(c: &Common) -> Result<(), Failure> {
    let (mut pf, _) = load(c)?;
    pf.candidate = None;
    let (xbar, info) = resolve_candidate(&pf)?;
    let (t0, t1) = pf.interval;
    let samples: Vec<serde_json::Value> = (0..=10)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / 10.0;
            let (x, v) = xbar.eval(t, Side::Auto).expect("inside the interval");
            serde_json::json!({ "t": t, "x": x, "dx": v })
        })
        .collect();
    if c.json {
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "candidate": info, "samples": samples })).expect("serializable"));
    } else {
        println!("shooting residual {:.3e} after {} iterations", info.shooting_residual.unwrap_or(f64::NAN), info.shooting_iterations.unwrap_or(0));
        for s in &samples {
            println!("t = {:.6}  x = {}  dx = {}", s["t"], s["x"], s["dx"]);
        }
    }
    Ok(())
}

fn problems(path: &Path) -> Vec<PathBuf> {
    if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "json")).collect())
            .unwrap_or_default();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    }
}

fn dispatch(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Eval { common, t } => eval(common, *t),
        Command::Necessary(c) => pipeline(c, true, false),
        Command::Sufficient(c) => pipeline(c, false, true),
        Command::Riccati(c) => riccati(c),
        Command::Increment(c) => increment(c),
        Command::Solve(c) => solve(c),
        Command::Report(c) => {
            let files = problems(&c.problem);
            if files.is_empty() {
                return Err(input(format!("no problem files in {}", c.problem.display())));
            }
            let many = files.len() > 1;
            let mut worst: Option<Failure> = None;
            for f in files {
                let mut one = Common { problem: f, ..c.clone() };
                if many {
                    let stem = one.problem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    one.emit_csv = c
                        .emit_csv
                        .iter()
                        .map(|spec| match spec.split_once('=') {
                            Some((k, p)) => {
                                let p = Path::new(p);
                                let file = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                                format!("{k}={}", p.with_file_name(format!("{stem}_{file}")).display())
                            }
                            None => spec.clone(),
                        })
                        .collect();
                }
                if let Err(e) = pipeline(&one, false, false) {
                    eprintln!("varcert: {}: {}", one.problem.display(), e.message);
                    if worst.as_ref().is_none_or(|w| e.code > w.code) {
                        worst = Some(e);
                    }
                }
            }
            worst.map_or(Ok(()), Err)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("varcert: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
