//! JSON problem files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "example_5_2",
//!   "n": 1,
//!   "interval": [0, "pi/2"],
//!   "integrand": "dx^2 - x^2",
//!   "boundary": { "x0": [1], "x1": [0] },
//!   "candidate": [{ "domain": [0, "pi/2"], "x": ["cos(t)"] }],
//!   "q": { "kind": "RICCATI" },
//!   "plan": { "delta": 0.5 },
//!   "expected": { "verdict": "ABSOLUTE", "certifying_theorem": "THEOREM_4_2" }
//! }
//! ```
//!
//! Interval ends and piece domains are numbers or constant expressions.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Mat;
use crate::plan::PlanConfig;
use crate::sufficiency::QSpec;
use crate::trajectory::{Piece, Side, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u64 = 1;
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Value(f64),
    Expr(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryInput {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceInput {
    pub domain: [Number; 2],
    pub x: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QKindInput {
    Zero,
    Expr,
    Riccati,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QInput {
    pub kind: QKindInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certifying_theorem: Option<String>,
}

/// On-disk form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInput {
    pub schema_version: u64,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub n: usize,
    pub interval: [Number; 2],
    pub integrand: String,
    pub boundary: BoundaryInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Vec<PieceInput>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<QInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

/// How the pipeline obtains `Q`.
#[derive(Debug, Clone)]
pub enum QChoice {
    Zero,
    Given(QSpec),
    /// Riccati construction, from one initial value or the default scan.
    Riccati(Option<Mat<f64>>),
}

/// Validated problem with all expressions parsed.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub name: String,
    pub description: String,
    pub n: usize,
    pub interval: (f64, f64),
    pub integrand: Expr,
    pub integrand_source: String,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub candidate: Option<Trajectory<f64>>,
    pub q: Option<QChoice>,
    pub plan: PlanConfig,
    pub expected: Option<Expected>,
    /// SHA-256 of the canonical JSON of the input.
    pub digest: String,
    pub input: ProblemInput,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

fn number(v: &Number, path: &str) -> Result<f64> {
    let x = match v {
        Number::Value(x) => *x,
        Number::Expr(s) => {
            let e = Expr::parse_in_t(s).map_err(|e| schema(path, e.to_string()))?;
            if !e.is_constant() {
                return Err(schema(path, "constant expression expected"));
            }
            e.eval_t(0.0).map_err(|e| schema(path, e.to_string()))?
        }
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(schema(path, "not a finite number"))
    }
}

fn parse_at(src: &str, n: usize, path: &str) -> Result<Expr> {
    Expr::parse(src, n).map_err(|e| schema(path, format!("{e} in `{src}`")))
}

fn parse_t(src: &str, path: &str) -> Result<Expr> {
    Expr::parse_in_t(src).map_err(|e| schema(path, format!("{e} in `{src}`")))
}

fn vector_of(v: &[f64], n: usize, path: &str) -> Result<Vec<f64>> {
    if v.len() != n {
        return Err(schema(path, format!("expected {n} components, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(schema(path, "components must be finite"));
    }
    Ok(v.to_vec())
}

fn square(m: &[Vec<f64>], n: usize, path: &str) -> Result<Mat<f64>> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(schema(path, format!("expected a {n}x{n} matrix")));
    }
    let mat = Mat::from_fn(n, n, |i, j| m[i][j]);
    if mat.asymmetry() > 1e-12 {
        return Err(schema(path, "matrix must be symmetric"));
    }
    Ok(mat)
}

fn far(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(x, y)| (x - y).abs() > BOUNDARY_TOL)
}

impl ProblemFile {
    /// Parses and validates a problem from JSON text.
    pub fn from_json(text: &str) -> Result<ProblemFile> {
        let value: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
        let Some(obj) = value.as_object() else {
            return Err(schema("$", "expected an object"));
        };
        match obj.get("schema_version") {
            None => return Err(schema("schema_version", "missing")),
            Some(v) if v.as_u64() != Some(SCHEMA_VERSION) => {
                return Err(schema("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")))
            }
            _ => {}
        }
        let input: ProblemInput = serde_json::from_value(value.clone()).map_err(|e| schema("$", e.to_string()))?;
        let digest = hex::encode(Sha256::digest(serde_json::to_vec(&value)?));
        Self::from_input(input, digest)
    }

    fn from_input(input: ProblemInput, digest: String) -> Result<ProblemFile> {
        let n = input.n;
        if n == 0 {
            return Err(schema("n", "must be at least 1"));
        }
        let t0 = number(&input.interval[0], "interval[0]")?;
        let t1 = number(&input.interval[1], "interval[1]")?;
        if !(t1 > t0) {
            return Err(schema("interval", "t1 must exceed t0"));
        }
        let integrand = parse_at(&input.integrand, n, "integrand")?;
        let x0 = vector_of(&input.boundary.x0, n, "boundary.x0")?;
        let x1 = vector_of(&input.boundary.x1, n, "boundary.x1")?;

        let candidate = match &input.candidate {
            None => None,
            Some(pieces) => {
                if pieces.is_empty() {
                    return Err(schema("candidate", "at least one piece expected"));
                }
                let mut ps = Vec::with_capacity(pieces.len());
                for (k, p) in pieces.iter().enumerate() {
                    let a = number(&p.domain[0], &format!("candidate[{k}].domain[0]"))?;
                    let b = number(&p.domain[1], &format!("candidate[{k}].domain[1]"))?;
                    if p.x.len() != n {
                        return Err(schema(format!("candidate[{k}].x"), format!("expected {n} components, got {}", p.x.len())));
                    }
                    let xs = p
                        .x
                        .iter()
                        .enumerate()
                        .map(|(i, s)| parse_t(s, &format!("candidate[{k}].x[{i}]")))
                        .collect::<Result<Vec<_>>>()?;
                    ps.push(Piece::closed(a, b, xs));
                }
                let (first, last) = (ps[0].start, ps[ps.len() - 1].end);
                if (first - t0).abs() > 1e-12 || (last - t1).abs() > 1e-12 {
                    return Err(schema("candidate", "pieces must cover the interval"));
                }
                let tr = Trajectory::new(n, ps).map_err(|e| schema("candidate", e.to_string()))?;
                let (a, _) = tr.eval(t0, Side::Right)?;
                if far(&a, &x0) {
                    return Err(Error::BoundaryMismatch { which: "x0", got: a, expected: x0 });
                }
                let (b, _) = tr.eval(t1, Side::Left)?;
                if far(&b, &x1) {
                    return Err(Error::BoundaryMismatch { which: "x1", got: b, expected: x1 });
                }
                Some(tr)
            }
        };

        let q = match &input.q {
            None => None,
            Some(q) => Some(match q.kind {
                QKindInput::Zero => QChoice::Zero,
                QKindInput::Expr => {
                    let Some(entries) = &q.entries else {
                        return Err(schema("q.entries", "required for kind EXPR"));
                    };
                    if entries.len() != n || entries.iter().any(|r| r.len() != n) {
                        return Err(schema("q.entries", format!("expected a {n}x{n} matrix")));
                    }
                    let es = entries
                        .iter()
                        .enumerate()
                        .map(|(i, r)| {
                            r.iter().enumerate().map(|(j, s)| parse_t(s, &format!("q.entries[{i}][{j}]"))).collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    QChoice::Given(QSpec::from_exprs(t0, t1, es)?)
                }
                QKindInput::Riccati => QChoice::Riccati(q.q0.as_ref().map(|m| square(m, n, "q.q0")).transpose()?),
            }),
        };

        let plan = match &input.plan {
            None => PlanConfig::default(),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| schema("plan", e.to_string()))?,
        };
        if !(plan.delta > 0.0) || plan.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(schema("plan", "radii and delta must be positive"));
        }
        if !(plan.pass_tol >= 0.0 && plan.fail_tol >= plan.pass_tol) {
            return Err(schema("plan", "need 0 <= pass_tol <= fail_tol"));
        }

        Ok(ProblemFile {
            name: input.name.clone(),
            description: input.description.clone(),
            n,
            interval: (t0, t1),
            integrand,
            integrand_source: input.integrand.clone(),
            x0,
            x1,
            candidate,
            q,
            plan,
            expected: input.expected.clone(),
            digest,
            input,
        })
    }
}

/// Reads and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemFile> {
    let text = std::fs::read_to_string(path)?;
    ProblemFile::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "schema_version": 1,
            "name": "example_5_2",
            "n": 1,
            "interval": [0, "pi/2"],
            "integrand": "dx^2 - x^2",
            "boundary": { "x0": [1], "x1": [0] },
            "candidate": [{ "domain": [0, "pi/2"], "x": ["cos(t)"] }]
        })
    }

    fn load(v: &Value) -> Result<ProblemFile> {
        ProblemFile::from_json(&v.to_string())
    }

    #[test]
    fn loads_and_digests() {
        let p = load(&base()).unwrap();
        assert_eq!(p.interval.1, std::f64::consts::FRAC_PI_2);
        assert!(p.candidate.is_some());
        assert_eq!(p.digest, load(&base()).unwrap().digest);
        let mut v = base();
        v["interval"] = json!([0, "pi/2"]);
        v["candidate"][0]["domain"] = json!([0, "pi/2"]);
        assert_eq!(load(&v).unwrap().interval.1, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn schema_violations_name_their_path() {
        let mut v = base();
        v["boundary"]["x0"] = json!([1, 2]);
        match load(&v) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "boundary.x0"),
            other => panic!("{other:?}"),
        }
        let mut v = base();
        v.as_object_mut().unwrap().remove("schema_version");
        assert!(matches!(load(&v), Err(Error::Schema { path, .. }) if path == "schema_version"));
        let mut v = base();
        v["integrand"] = json!("dx^2 - y");
        assert!(matches!(load(&v), Err(Error::Schema { path, .. }) if path == "integrand"));
        let mut v = base();
        v["plan"] = json!({ "unknown": 1 });
        assert!(matches!(load(&v), Err(Error::Schema { path, .. }) if path == "plan"));
    }

    #[test]
    fn boundary_mismatch() {
        let mut v = base();
        v["candidate"][0]["x"] = json!(["cos(t) + 0.1"]);
        assert!(matches!(load(&v), Err(Error::BoundaryMismatch { which: "x0", .. })));
    }

    #[test]
    fn q_choices() {
        let mut v = base();
        v["q"] = json!({ "kind": "EXPR", "entries": [["2*tan(t)"]] });
        assert!(matches!(load(&v).unwrap().q, Some(QChoice::Given(_))));
        v["q"] = json!({ "kind": "RICCATI", "q0": [[0.5]] });
        assert!(matches!(load(&v).unwrap().q, Some(QChoice::Riccati(Some(_)))));
        v["q"] = json!({ "kind": "EXPR" });
        assert!(load(&v).is_err());
    }
}
