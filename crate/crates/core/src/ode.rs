//! Dormand–Prince 5(4) integrator with step-size control.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Largest allowed step (absolute value).
    pub h_max: T,
    pub max_steps: usize,
}

impl<T: Real> OdeOptions<T> {
    pub fn new(rtol: T, atol: T, h_max: T) -> Self {
        OdeOptions { rtol, atol, h_max, max_steps: 1_000_000 }
    }
}

/// Accepted step: state and its derivative.
#[derive(Debug, Clone)]
pub struct OdeNode<T> {
    pub t: T,
    pub y: Vec<T>,
    pub dy: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeStop {
    Reached,
    /// The step hook asked to stop.
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct OdeSolution<T> {
    pub nodes: Vec<OdeNode<T>>,
    pub stop: OdeStop,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// After every accepted step `hook(t, y)` may modify the state in place
/// (for projections) and returns `false` to stop early.
pub fn dopri5<T: Real, F, H>(mut f: F, t0: T, y0: &[T], t_end: T, opts: OdeOptions<T>, mut hook: H) -> Result<OdeSolution<T>>
where
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
    H: FnMut(T, &mut Vec<T>) -> Result<bool>,
{
    let dim = y0.len();
    let dir = if t_end >= t0 { T::one() } else { -T::one() };
    let span = (t_end - t0).abs();
    let c = T::of;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = f(t, &y)?;
    let mut nodes = vec![OdeNode { t, y: y.clone(), dy: k1.clone() }];
    let mut h = (span * c(1e-3)).min(opts.h_max).max(span * c(1e-12));
    let mut rejected = 0;
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); dim]; 7];
    let mut ytmp = vec![T::zero(); dim];
    for _ in 0..opts.max_steps {
        let remaining = (t_end - t) * dir;
        if remaining <= T::zero() {
            return Ok(OdeSolution { nodes, stop: OdeStop::Reached, rejected });
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        let step = hs * dir;
        k[0].clone_from(&k1);
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for j in 0..s {
                    acc = acc + step * c(A[s][j]) * k[j][i];
                }
                ytmp[i] = acc;
            }
            k[s] = f(t + step * c(C[s]), &ytmp)?;
        }
        // ytmp now holds the 5th-order solution (FSAL stage)
        let mut err = T::zero();
        for i in 0..dim {
            let mut e = T::zero();
            for s in 0..7 {
                e = e + step * c(E[s]) * k[s][i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(ytmp[i].abs());
            err = err + (e / sc) * (e / sc);
        }
        err = (err / T::of(dim.max(1) as f64)).sqrt();
        if !err.is_finite() {
            err = c(1e10);
        }
        if err <= T::one() {
            t = if last { t_end } else { t + step };
            y.clone_from(&ytmp);
            let go_on = hook(t, &mut y)?;
            k1 = if go_on { f(t, &y)? } else { k[6].clone() };
            nodes.push(OdeNode { t, y: y.clone(), dy: k1.clone() });
            if !go_on {
                return Ok(OdeSolution { nodes, stop: OdeStop::Interrupted, rejected });
            }
            if last {
                return Ok(OdeSolution { nodes, stop: OdeStop::Reached, rejected });
            }
            let fac = if err == T::zero() { c(5.0) } else { (c(0.9) * err.powf(c(-0.2))).min(c(5.0)).max(c(0.2)) };
            h = (hs * fac).min(opts.h_max);
        } else {
            rejected += 1;
            h = hs * (c(0.9) * err.powf(c(-0.2))).max(c(0.2));
        }
        if h <= c(1e-14) * t.abs().max(span) {
            return Err(Error::StepUnderflow { t: t.to_f64_lossy() });
        }
    }
    Err(Error::StepUnderflow { t: t.to_f64_lossy() })
}

/// Cubic Hermite interpolation between two nodes.
pub fn hermite3<T: Real>(a: &OdeNode<T>, b: &OdeNode<T>, t: T) -> (Vec<T>, Vec<T>) {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let c = T::of;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = c(2.0) * s3 - c(3.0) * s2 + T::one();
    let h10 = s3 - c(2.0) * s2 + s;
    let h01 = c(-2.0) * s3 + c(3.0) * s2;
    let h11 = s3 - s2;
    let d00 = (c(6.0) * s2 - c(6.0) * s) / h;
    let d10 = c(3.0) * s2 - c(4.0) * s + T::one();
    let d01 = (c(-6.0) * s2 + c(6.0) * s) / h;
    let d11 = c(3.0) * s2 - c(2.0) * s;
    let n = a.y.len();
    let mut y = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for i in 0..n {
        y.push(h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i]);
        dy.push(d00 * a.y[i] + d10 * a.dy[i] + d01 * b.y[i] + d11 * b.dy[i]);
    }
    (y, dy)
}

/// Index `k` with `nodes[k].t <= t <= nodes[k+1].t` for increasing nodes.
pub fn bracket<T: Real>(nodes: &[OdeNode<T>], t: T) -> usize {
    let k = nodes.partition_point(|n| n.t <= t);
    k.clamp(1, nodes.len() - 1) - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn never(_: f64, _: &mut Vec<f64>) -> Result<bool> {
        Ok(true)
    }

    #[test]
    fn tiny_final_step_is_not_an_underflow() {
        let t1 = 1.0790447304724753;
        let opts = OdeOptions::new(1e-12, 1e-14, t1 / 1024.0);
        let sol = dopri5(|_, y: &[f64]| Ok(vec![y[1], y[0]]), 0.0, &[0.0, -10.0], t1, opts, never).unwrap();
        assert_eq!(sol.stop, OdeStop::Reached);
        assert_eq!(sol.nodes.last().unwrap().t, t1);
    }

    #[test]
    fn exponential_decay() {
        let sol = dopri5(|_, y| Ok(vec![-y[0]]), 0.0, &[1.0], 2.0, OdeOptions::new(1e-10, 1e-12, 0.5), never).unwrap();
        let last = sol.nodes.last().unwrap();
        assert_eq!(last.t, 2.0);
        assert!((last.y[0] - (-2f64).exp()).abs() < 1e-10);
        assert_eq!(sol.stop, OdeStop::Reached);
    }

    #[test]
    fn backwards_harmonic_oscillator() {
        let sol = dopri5(|_, y| Ok(vec![y[1], -y[0]]), 1.0, &[1f64.sin(), 1f64.cos()], 0.0, OdeOptions::new(1e-11, 1e-13, 0.1), never)
            .unwrap();
        let last = sol.nodes.last().unwrap();
        assert!(last.y[0].abs() < 1e-10 && (last.y[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hook_interrupts() {
        let sol = dopri5(|_, y| Ok(vec![y[0] * y[0]]), 0.0, &[1.0], 2.0, OdeOptions::new(1e-8, 1e-10, 0.01), |_, y: &mut Vec<f64>| {
            Ok(y[0] < 1e6)
        })
        .unwrap();
        assert_eq!(sol.stop, OdeStop::Interrupted);
        let t = sol.nodes.last().unwrap().t;
        assert!(t < 1.0 && t > 0.99);
    }

    #[test]
    fn cubic_interpolant_matches_nodes() {
        let a = OdeNode { t: 0.0f64, y: vec![0.0], dy: vec![0.0] };
        let b = OdeNode { t: 1.0, y: vec![1.0], dy: vec![3.0] };
        let (y, dy) = hermite3(&a, &b, 0.5);
        assert!((y[0] - 0.125).abs() < 1e-15 && (dy[0] - 0.75).abs() < 1e-15);
    }
}
