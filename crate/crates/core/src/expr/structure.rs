//! Sampled structural classification of an integrand.
//!
//! Classification is decided on seeded random points and is never a proof.

use super::Expr;
use crate::error::EvalError;
use crate::linalg::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const ZERO_TOL: f64 = 1e-10;
const CONST_HESS_TOL: f64 = 1e-8;
const SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StructureClass {
    AffineInX,
    Quadratic,
    Separable,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureFlags {
    /// `L_xx ≡ 0` and `L_xdx ≡ 0`: `L = L0(t, dx) + q(t)ᵀx`.
    pub affine_in_x: bool,
    /// `L_xdx ≡ 0`: `L = L0(t, dx) + L1(t, x)`.
    pub separable: bool,
    /// Hessian in `(x, dx)` independent of `(x, dx)`.
    pub quadratic: bool,
    /// Number of sample points that were usable.
    pub points: usize,
}

impl StructureFlags {
    /// Most specific label.
    pub fn class(&self) -> StructureClass {
        if self.affine_in_x {
            StructureClass::AffineInX
        } else if self.quadratic {
            StructureClass::Quadratic
        } else if self.separable {
            StructureClass::Separable
        } else {
            StructureClass::General
        }
    }
}

fn state_hessian(e: &Expr, t: f64, x: &[f64], dx: &[f64]) -> Result<Mat<f64>, EvalError> {
    let n = e.dim();
    let j = e.eval_jet2(t, x, dx)?;
    Ok(Mat::from_fn(2 * n, 2 * n, |a, b| j.hess[(a + 1, b + 1)]))
}

/// Classifies `e` by sampling `t` in `[t0, t1]` and `(x, dx)` in `[-2, 2]^{2n}`.
pub fn classify_structure(e: &Expr, t0: f64, t1: f64, seed: u64) -> Result<StructureFlags, EvalError> {
    let n = e.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_5255_4354);
    let mut affine = true;
    let mut separable = true;
    let mut quadratic = true;
    let mut used = 0;
    let mut last_err = None;
    for _ in 0..SAMPLES {
        let t = t0 + (t1 - t0) * rng.gen::<f64>();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dx: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dir: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = match state_hessian(e, t, &x, &dx) {
            Ok(h) => h,
            Err(err @ EvalError::Domain { .. }) => {
                last_err = Some(err);
                continue;
            }
            Err(other) => return Err(other),
        };
        used += 1;
        for i in 0..n {
            for j in 0..n {
                let xx = h[(i, j)];
                let xdx = h[(i, n + j)];
                if !(xx.abs() <= ZERO_TOL) || !(xdx.abs() <= ZERO_TOL) {
                    affine = false;
                }
                if !(xdx.abs() <= ZERO_TOL) {
                    separable = false;
                }
            }
        }
        if quadratic {
            let x2: Vec<f64> = x.iter().zip(&dir[..n]).map(|(a, d)| a + d).collect();
            let dx2: Vec<f64> = dx.iter().zip(&dir[n..]).map(|(a, d)| a + d).collect();
            match state_hessian(e, t, &x2, &dx2) {
                Ok(h2) => {
                    let diff = (&h2 - &h).max_abs();
                    if !(diff <= CONST_HESS_TOL * (1.0 + h.max_abs())) {
                        quadratic = false;
                    }
                }
                Err(EvalError::Domain { .. }) => quadratic = false,
                Err(other) => return Err(other),
            }
        }
    }
    if used == 0 {
        return Err(last_err.unwrap_or(EvalError::Domain { func: "classify", arg: f64::NAN }));
    }
    Ok(StructureFlags { affine_in_x: affine, separable, quadratic, points: used })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(src: &str) -> StructureClass {
        let e = Expr::parse(src, 1).unwrap();
        classify_structure(&e, 0.0, 1.0, 1).unwrap().class()
    }

    #[test]
    fn corpus_classes() {
        assert_eq!(class("t^2*dx^2 + 12*x^2"), StructureClass::Quadratic);
        assert_eq!(class("dx^2 + 7*t*x"), StructureClass::AffineInX);
        assert_eq!(class("x^(4/3) - x^(5/3)*dx^2"), StructureClass::General);
        assert_eq!(class("dx^2 + 2*x*dx"), StructureClass::Quadratic);
        assert_eq!(class("dx^4 + x^4"), StructureClass::Separable);
        assert_eq!(class("(dx^2 - 1)^2"), StructureClass::AffineInX);
    }

    #[test]
    fn flags_are_consistent() {
        let e = Expr::parse("t^2*dx^2 + 12*x^2", 1).unwrap();
        let f = classify_structure(&e, -1.0, 1.0, 3).unwrap();
        assert!(f.separable && f.quadratic && !f.affine_in_x);
    }
}
