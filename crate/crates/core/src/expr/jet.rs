use super::{Expr, HyperDual, Seed};
use crate::error::EvalError;
use crate::linalg::Mat;
use crate::scalar::Real;

/// Value, gradient and Hessian of an integrand over `(t, x, dx)`.
///
/// Variables are ordered `[t, x₁..xₙ, dx₁..dxₙ]`. Entries whose derivative is
/// unbounded at the evaluation point are `NaN` and listed in `singular`; the
/// block accessors with a `checked_` prefix surface them as
/// [`EvalError::DerivativeSingular`].
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2<T> {
    pub n: usize,
    pub value: T,
    pub grad: Vec<T>,
    pub hess: Mat<T>,
    /// `(i, j)` with `i <= j` for Hessian entries, `(i, usize::MAX)` for gradient entries.
    pub singular: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    T,
    X,
    Dx,
}

impl<T: Real> Jet2<T> {
    fn range(&self, b: Block) -> std::ops::Range<usize> {
        match b {
            Block::T => 0..1,
            Block::X => 1..1 + self.n,
            Block::Dx => 1 + self.n..1 + 2 * self.n,
        }
    }

    fn sub(&self, r: Block, c: Block) -> Mat<T> {
        let rr = self.range(r);
        let cr = self.range(c);
        Mat::from_fn(rr.len(), cr.len(), |i, j| self.hess[(rr.start + i, cr.start + j)])
    }

    pub fn grad_t(&self) -> T {
        self.grad[0]
    }

    pub fn grad_x(&self) -> Vec<T> {
        self.grad[self.range(Block::X)].to_vec()
    }

    pub fn grad_dx(&self) -> Vec<T> {
        self.grad[self.range(Block::Dx)].to_vec()
    }

    pub fn hess_xx(&self) -> Mat<T> {
        self.sub(Block::X, Block::X)
    }

    /// `hess_xdx[(i, j)] = ∂²L / ∂xᵢ ∂dxⱼ`.
    pub fn hess_xdx(&self) -> Mat<T> {
        self.sub(Block::X, Block::Dx)
    }

    pub fn hess_dxdx(&self) -> Mat<T> {
        self.sub(Block::Dx, Block::Dx)
    }

    /// `∂²L / ∂t ∂dxⱼ`.
    pub fn hess_tdx(&self) -> Vec<T> {
        self.sub(Block::T, Block::Dx).into_vec()
    }

    fn check(&self, m: Mat<T>, what: &'static str) -> Result<Mat<T>, EvalError> {
        if m.is_finite() {
            Ok(m)
        } else {
            Err(EvalError::DerivativeSingular { func: what, arg: f64::NAN })
        }
    }

    pub fn checked_hess_xx(&self) -> Result<Mat<T>, EvalError> {
        self.check(self.hess_xx(), "L_xx")
    }

    pub fn checked_hess_dxdx(&self) -> Result<Mat<T>, EvalError> {
        self.check(self.hess_dxdx(), "L_dxdx")
    }

    pub fn checked_hess_xdx(&self) -> Result<Mat<T>, EvalError> {
        self.check(self.hess_xdx(), "L_xdx")
    }

    pub fn is_fully_finite(&self) -> bool {
        self.singular.is_empty()
    }
}

pub(super) fn eval_jet2<T: Real>(e: &Expr, t: T, x: &[T], dx: &[T]) -> Result<Jet2<T>, EvalError> {
    let n = e.dim();
    if x.len() != n || dx.len() != n {
        return Err(EvalError::Dimension { expected: n, got: x.len().min(dx.len()) });
    }
    let m = 2 * n + 1;
    let unit = |k: usize| -> (T, Vec<T>, Vec<T>) {
        let mut sx = vec![T::zero(); n];
        let mut sdx = vec![T::zero(); n];
        let st = if k == 0 {
            T::one()
        } else if k <= n {
            sx[k - 1] = T::one();
            T::zero()
        } else {
            sdx[k - 1 - n] = T::one();
            T::zero()
        };
        (st, sx, sdx)
    };

    let value = e.eval(t, x, dx)?;
    let mut singular = Vec::new();
    let mut grad = vec![T::zero(); m];
    for (k, g) in grad.iter_mut().enumerate() {
        let (st, sx, sdx) = unit(k);
        match e.directional(t, x, dx, Seed { t: st, x: &sx, dx: &sdx }) {
            Ok((_, d)) => *g = d,
            Err(EvalError::DerivativeSingular { .. }) => {
                *g = T::nan();
                singular.push((k, usize::MAX));
            }
            Err(other) => return Err(other),
        }
    }

    let mut hess = Mat::zeros(m, m);
    for i in 0..m {
        let (ti, xi, dxi) = unit(i);
        for j in i..m {
            let (tj, xj, dxj) = unit(j);
            let r: Result<HyperDual<T>, _> = e.second_directional(
                t,
                x,
                dx,
                Seed { t: ti, x: &xi, dx: &dxi },
                Seed { t: tj, x: &xj, dx: &dxj },
            );
            let h = match r {
                Ok(h) => h.ab,
                Err(EvalError::DerivativeSingular { .. }) => {
                    singular.push((i, j));
                    T::nan()
                }
                Err(other) => return Err(other),
            };
            hess[(i, j)] = h;
            hess[(j, i)] = h;
        }
    }
    Ok(Jet2 { n, value, grad, hess, singular })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(src: &str, t: f64, x: f64, dx: f64) -> Jet2<f64> {
        Expr::parse(src, 1).unwrap().eval_jet2(t, &[x], &[dx]).unwrap()
    }

    #[test]
    fn kinetic_integrand() {
        let j = jet("dx^2", 0.0, 0.0, -1.0);
        assert_eq!(j.grad_dx(), vec![-2.0]);
        assert_eq!(j.hess_dxdx()[(0, 0)], 2.0);
    }

    #[test]
    fn euler_type_integrand() {
        let j = jet("t^2*dx^2 + 12*x^2", 1.0, 1.0, 3.0);
        assert_eq!(j.grad_x(), vec![24.0]);
        assert_eq!(j.grad_dx(), vec![6.0]);
        assert_eq!(j.hess_xx()[(0, 0)], 24.0);
        assert_eq!(j.hess_dxdx()[(0, 0)], 2.0);
        assert_eq!(j.hess_xdx()[(0, 0)], 0.0);
        // d/dt (2 t² dx) = 4 t dx = 12
        assert_eq!(j.hess_tdx(), vec![12.0]);
    }

    #[test]
    fn degenerate_rational_integrand_at_origin() {
        let j = jet("x^(4/3) - x^(5/3)*dx^2", 0.0, 0.0, 5.0);
        assert_eq!(j.grad_x(), vec![0.0]);
        assert_eq!(j.grad_dx(), vec![0.0]);
        assert_eq!(j.hess_dxdx()[(0, 0)], 0.0);
        assert_eq!(j.checked_hess_dxdx().unwrap()[(0, 0)], 0.0);
        // (4/9) x^(-2/3) is unbounded at 0
        assert!(j.checked_hess_xx().is_err());
        assert!(!j.is_fully_finite());
    }
}
