//! Piecewise-smooth vector functions with explicit breakpoints.

use crate::error::{Error, EvalError, Result};
use crate::expr::Expr;
use crate::scalar::{max_abs, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Breakpoints whose derivative jump is at most this are not corners.
pub const CORNER_JUMP_TOL: f64 = 1e-8;
/// Allowed value mismatch between adjacent pieces.
pub const CONTINUITY_TOL: f64 = 1e-10;

/// Which one-sided limit to take at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    /// Right, except at the final endpoint.
    Auto,
}

/// Quintic Hermite interpolant through `(x, ẋ, ẍ)` samples.
#[derive(Debug, Clone)]
pub struct QuinticHermite<T> {
    nodes: Vec<T>,
    x: Vec<Vec<T>>,
    dx: Vec<Vec<T>>,
    ddx: Vec<Vec<T>>,
}

impl<T: Real> QuinticHermite<T> {
    /// Builds the interpolant; `nodes` must be strictly increasing.
    pub fn new(nodes: Vec<T>, x: Vec<Vec<T>>, dx: Vec<Vec<T>>, ddx: Vec<Vec<T>>) -> Result<Self> {
        if nodes.len() < 2 || x.len() != nodes.len() || dx.len() != nodes.len() || ddx.len() != nodes.len() {
            return Err(Error::InvalidTrajectory("interpolant needs matching node data".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrajectory("interpolation nodes must increase".into()));
        }
        Ok(QuinticHermite { nodes, x, dx, ddx })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    fn eval(&self, t: T) -> (Vec<T>, Vec<T>) {
        let k = match self.nodes.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.nodes.len() - 2),
            Err(i) => i.clamp(1, self.nodes.len() - 1) - 1,
        };
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let h = b - a;
        let s = (t - a) / h;
        let c = |v: f64| T::of(v);
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = T::one() - c(10.0) * s3 + c(15.0) * s4 - c(6.0) * s5;
        let h1 = s - c(6.0) * s3 + c(8.0) * s4 - c(3.0) * s5;
        let h2 = (s2 - c(3.0) * s3 + c(3.0) * s4 - s5) * c(0.5);
        let h3 = T::one() - h0;
        let h4 = -c(4.0) * s3 + c(7.0) * s4 - c(3.0) * s5;
        let h5 = (s3 - c(2.0) * s4 + s5) * c(0.5);
        let d0 = -c(30.0) * s2 + c(60.0) * s3 - c(30.0) * s4;
        let d1 = T::one() - c(18.0) * s2 + c(32.0) * s3 - c(15.0) * s4;
        let d2 = (c(2.0) * s - c(9.0) * s2 + c(12.0) * s3 - c(5.0) * s4) * c(0.5);
        let d3 = -d0;
        let d4 = -c(12.0) * s2 + c(28.0) * s3 - c(15.0) * s4;
        let d5 = (c(3.0) * s2 - c(8.0) * s3 + c(5.0) * s4) * c(0.5);
        let n = self.x[k].len();
        let mut val = Vec::with_capacity(n);
        let mut der = Vec::with_capacity(n);
        for i in 0..n {
            let (y0, y1) = (self.x[k][i], self.x[k + 1][i]);
            let (p0, p1) = (self.dx[k][i] * h, self.dx[k + 1][i] * h);
            let (q0, q1) = (self.ddx[k][i] * h * h, self.ddx[k + 1][i] * h * h);
            val.push(h0 * y0 + h1 * p0 + h2 * q0 + h3 * y1 + h4 * p1 + h5 * q1);
            der.push((d0 * y0 + d1 * p0 + d2 * q0 + d3 * y1 + d4 * p1 + d5 * q1) / h);
        }
        (val, der)
    }
}

#[derive(Debug, Clone)]
pub enum PieceFn<T> {
    /// One expression in `t` per coordinate.
    Closed(Vec<Expr>),
    /// Dense numerical output.
    Interpolated(QuinticHermite<T>),
}

#[derive(Debug, Clone)]
pub struct Piece<T> {
    pub start: T,
    pub end: T,
    pub f: PieceFn<T>,
}

impl<T: Real> Piece<T> {
    pub fn closed(start: T, end: T, x: Vec<Expr>) -> Self {
        Piece { start, end, f: PieceFn::Closed(x) }
    }

    fn eval(&self, t: T) -> std::result::Result<(Vec<T>, Vec<T>), EvalError> {
        match &self.f {
            PieceFn::Closed(exprs) => {
                let mut x = Vec::with_capacity(exprs.len());
                let mut dx = Vec::with_capacity(exprs.len());
                for e in exprs {
                    let (v, d) = e.eval_t_d1(t)?;
                    x.push(v);
                    dx.push(d);
                }
                Ok((x, dx))
            }
            PieceFn::Interpolated(h) => Ok(h.eval(t)),
        }
    }

    fn dim(&self) -> usize {
        match &self.f {
            PieceFn::Closed(e) => e.len(),
            PieceFn::Interpolated(h) => h.x[0].len(),
        }
    }
}

/// A function of class KC¹ on `[t0, t1]`: continuous, with finitely many
/// breakpoints where the derivative may jump.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    n: usize,
    t0: T,
    t1: T,
    pieces: Vec<Piece<T>>,
}

impl<T: Real> Trajectory<T> {
    /// Validates tiling, continuity at breakpoints and finiteness of the
    /// one-sided derivatives.
    pub fn new(n: usize, pieces: Vec<Piece<T>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidTrajectory("no pieces".into()));
        }
        for (k, p) in pieces.iter().enumerate() {
            if !(p.end > p.start) {
                return Err(Error::InvalidTrajectory(format!("piece {k} has an empty domain")));
            }
            if p.dim() != n {
                return Err(Error::InvalidTrajectory(format!(
                    "piece {k} has {} components, expected {n}",
                    p.dim()
                )));
            }
            if let PieceFn::Closed(exprs) = &p.f {
                if exprs.iter().any(|e| e.dim() != 0) {
                    return Err(Error::InvalidTrajectory(format!("piece {k} must depend on t only")));
                }
            }
        }
        let tr = Trajectory { n, t0: pieces[0].start, t1: pieces[pieces.len() - 1].end, pieces };
        for k in 0..tr.pieces.len() {
            let p = &tr.pieces[k];
            let at = |t: T| p.eval(t).map_err(Error::eval_at(t.to_f64_lossy()));
            let (xa, da) = at(p.start)?;
            let (_, db) = at(p.end)?;
            if xa.iter().chain(&da).chain(&db).any(|v| !v.is_finite()) {
                return Err(Error::InvalidTrajectory(format!("piece {k} has a non-finite end value")));
            }
            if k + 1 < tr.pieces.len() {
                let q = &tr.pieces[k + 1];
                let gap = (q.start - p.end).abs();
                let scale = T::one().max(p.end.abs());
                if gap > T::of(1e-12) * scale {
                    return Err(Error::InvalidTrajectory(format!(
                        "pieces {k} and {} do not tile the interval",
                        k + 1
                    )));
                }
                let (xl, _) = at(p.end)?;
                let (xr, _) = q.eval(q.start).map_err(Error::eval_at(q.start.to_f64_lossy()))?;
                let jump: Vec<T> = xl.iter().zip(&xr).map(|(a, b)| *a - *b).collect();
                if max_abs(&jump) > T::of(CONTINUITY_TOL) {
                    return Err(Error::InvalidTrajectory(format!(
                        "discontinuity of {} at t = {}",
                        max_abs(&jump),
                        p.end
                    )));
                }
            }
        }
        Ok(tr)
    }

    /// Single smooth piece.
    pub fn smooth(t0: T, t1: T, x: Vec<Expr>) -> Result<Self> {
        let n = x.len();
        Self::new(n, vec![Piece::closed(t0, t1, x)])
    }

    /// Parses each coordinate of a single smooth piece.
    pub fn parse_smooth(t0: T, t1: T, x: &[&str]) -> Result<Self> {
        let exprs = x.iter().map(|s| Expr::parse_in_t(s)).collect::<std::result::Result<Vec<_>, _>>()?;
        Self::smooth(t0, t1, exprs)
    }

    /// Parses a piecewise scalar trajectory given as `(start, end, expr)` triples.
    pub fn parse_pieces(pieces: &[(T, T, &str)]) -> Result<Self> {
        let ps = pieces
            .iter()
            .map(|&(a, b, s)| Ok(Piece::closed(a, b, vec![Expr::parse_in_t(s)?])))
            .collect::<Result<Vec<_>>>()?;
        Self::new(1, ps)
    }

    pub fn from_interpolant(t0: T, t1: T, h: QuinticHermite<T>) -> Result<Self> {
        let n = h.x[0].len();
        Self::new(n, vec![Piece { start: t0, end: t1, f: PieceFn::Interpolated(h) }])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> (T, T) {
        (self.t0, self.t1)
    }

    pub fn pieces(&self) -> &[Piece<T>] {
        &self.pieces
    }

    /// Interior piece boundaries, corners or not.
    pub fn breakpoints(&self) -> Vec<T> {
        self.pieces[..self.pieces.len() - 1].iter().map(|p| p.end).collect()
    }

    fn locate(&self, t: T, side: Side) -> Result<usize> {
        if t < self.t0 || t > self.t1 || t.is_nan() {
            return Err(Error::OutsideInterval {
                t: t.to_f64_lossy(),
                t0: self.t0.to_f64_lossy(),
                t1: self.t1.to_f64_lossy(),
            });
        }
        let left = match side {
            Side::Left => t > self.t0,
            Side::Right => false,
            Side::Auto => t == self.t1,
        };
        let idx = if left {
            self.pieces.iter().position(|p| t <= p.end).unwrap_or(self.pieces.len() - 1)
        } else {
            self.pieces.iter().position(|p| t < p.end).unwrap_or(self.pieces.len() - 1)
        };
        Ok(idx)
    }

    /// Value and one-sided derivative at `t`.
    pub fn eval(&self, t: T, side: Side) -> Result<(Vec<T>, Vec<T>)> {
        let k = self.locate(t, side)?;
        self.pieces[k].eval(t).map_err(Error::eval_at(t.to_f64_lossy()))
    }

    /// Breakpoints where the derivative jump exceeds [`CORNER_JUMP_TOL`].
    pub fn corner_set(&self) -> Result<Vec<T>> {
        let mut out = Vec::new();
        for tau in self.breakpoints() {
            let (_, dl) = self.eval(tau, Side::Left)?;
            let (_, dr) = self.eval(tau, Side::Right)?;
            let jump: Vec<T> = dl.iter().zip(&dr).map(|(a, b)| *a - *b).collect();
            if crate::scalar::norm(&jump) > T::of(CORNER_JUMP_TOL) {
                out.push(tau);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
enum PerturbationKind<T> {
    /// `coeffs[i][j]` multiplies `sin((j+1)π s)` in coordinate `i`, `s = (t−t0)/(t1−t0)`.
    Sine(Vec<Vec<T>>),
    Path(Trajectory<T>),
}

/// Admissible variation `Δx` with `Δx(t0) = Δx(t1) = 0`.
#[derive(Debug, Clone)]
pub struct Perturbation<T> {
    n: usize,
    t0: T,
    t1: T,
    kind: PerturbationKind<T>,
    scale: T,
}

impl<T: Real> Perturbation<T> {
    /// Finite sine series; `coeffs[i]` lists the mode amplitudes of coordinate `i`.
    pub fn sine(t0: T, t1: T, coeffs: Vec<Vec<T>>) -> Self {
        Perturbation { n: coeffs.len(), t0, t1, kind: PerturbationKind::Sine(coeffs), scale: T::one() }
    }

    /// Wraps a trajectory that vanishes at both endpoints (to [`CONTINUITY_TOL`]).
    pub fn from_trajectory(tr: Trajectory<T>) -> Result<Self> {
        let (t0, t1) = tr.interval();
        for (t, side) in [(t0, Side::Right), (t1, Side::Left)] {
            let (x, _) = tr.eval(t, side)?;
            if max_abs(&x) > T::of(CONTINUITY_TOL) {
                return Err(Error::InvalidTrajectory(format!("perturbation does not vanish at t = {t}")));
            }
        }
        Ok(Perturbation { n: tr.dim(), t0, t1, kind: PerturbationKind::Path(tr), scale: T::one() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> (T, T) {
        (self.t0, self.t1)
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// Same shape with the amplitude multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Perturbation { scale: self.scale * s, ..self.clone() }
    }

    pub fn breakpoints(&self) -> Vec<T> {
        match &self.kind {
            PerturbationKind::Sine(_) => Vec::new(),
            PerturbationKind::Path(tr) => tr.breakpoints(),
        }
    }

    /// Value and one-sided derivative. Values at the endpoints are exactly zero.
    pub fn eval(&self, t: T, side: Side) -> Result<(Vec<T>, Vec<T>)> {
        let (mut x, mut dx) = match &self.kind {
            PerturbationKind::Sine(coeffs) => {
                if t < self.t0 || t > self.t1 {
                    return Err(Error::OutsideInterval {
                        t: t.to_f64_lossy(),
                        t0: self.t0.to_f64_lossy(),
                        t1: self.t1.to_f64_lossy(),
                    });
                }
                let len = self.t1 - self.t0;
                let s = (t - self.t0) / len;
                let mut x = vec![T::zero(); self.n];
                let mut dx = vec![T::zero(); self.n];
                for (i, row) in coeffs.iter().enumerate() {
                    for (j, &c) in row.iter().enumerate() {
                        let w = T::of((j + 1) as f64) * T::PI();
                        x[i] = x[i] + c * (w * s).sin();
                        dx[i] = dx[i] + c * w / len * (w * s).cos();
                    }
                }
                (x, dx)
            }
            PerturbationKind::Path(tr) => tr.eval(t, side)?,
        };
        if t == self.t0 || t == self.t1 {
            x.iter_mut().for_each(|v| *v = T::zero());
        }
        for v in x.iter_mut().chain(dx.iter_mut()) {
            *v = *v * self.scale;
        }
        Ok((x, dx))
    }

    /// Sup norm sampled on `samples` equally spaced nodes.
    pub fn sampled_sup(&self, samples: usize) -> Result<T> {
        let mut m = T::zero();
        for k in 0..samples {
            let t = self.t0 + (self.t1 - self.t0) * T::of(k as f64 / (samples - 1) as f64);
            let (x, _) = self.eval(t, Side::Auto)?;
            m = m.max(max_abs(&x));
        }
        Ok(m)
    }
}

/// Number of nodes used to normalize bump perturbations.
pub const BUMP_NORMALIZATION_NODES: usize = 4097;

/// `Δx(t) = Σ_{j=1..k} c_j sin(jπ(t−t0)/(t1−t0))` per coordinate with
/// coefficients drawn from `seed`, normalized so the sampled sup norm is 1.
pub fn make_bump_perturbation<T: Real>(n: usize, t0: T, t1: T, seed: u64, k: usize) -> Perturbation<T> {
    assert!(k >= 1, "need at least one mode");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs: Vec<Vec<T>> = (0..n)
        .map(|_| (0..k).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    if coeffs.iter().flatten().all(|c| *c == T::zero()) {
        coeffs[0][0] = T::one();
    }
    let raw = Perturbation::sine(t0, t1, coeffs.clone());
    let sup = raw.sampled_sup(BUMP_NORMALIZATION_NODES).expect("sine series evaluates on its interval");
    for c in coeffs.iter_mut().flatten() {
        *c = *c / sup;
    }
    Perturbation::sine(t0, t1, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_extremal() {
        let tr = Trajectory::parse_smooth(0.0, 1.0, &["1 - t"]).unwrap();
        let (x, dx) = tr.eval(0.5, Side::Auto).unwrap();
        assert_eq!((x[0], dx[0]), (0.5, -1.0));
    }

    #[test]
    fn cubic_at_left_endpoint() {
        let tr = Trajectory::parse_smooth(-1.0, 1.0, &["t^3"]).unwrap();
        let (x, dx) = tr.eval(-1.0, Side::Auto).unwrap();
        assert_eq!((x[0], dx[0]), (-1.0, 3.0));
        assert!(tr.eval(1.5, Side::Auto).is_err());
    }

    #[test]
    fn one_sided_derivatives_at_corner() {
        let tr = Trajectory::parse_pieces(&[(0.0, 0.5, "0.5 - t"), (0.5, 1.0, "t - 0.5")]).unwrap();
        assert_eq!(tr.eval(0.5, Side::Left).unwrap(), (vec![0.0], vec![-1.0]));
        assert_eq!(tr.eval(0.5, Side::Right).unwrap(), (vec![0.0], vec![1.0]));
        assert_eq!(tr.corner_set().unwrap(), vec![0.5]);
        // auto resolves to the right derivative except at t1
        assert_eq!(tr.eval(0.5, Side::Auto).unwrap().1, vec![1.0]);
        assert_eq!(tr.eval(1.0, Side::Auto).unwrap().1, vec![1.0]);
    }

    #[test]
    fn split_smooth_function_has_no_corner() {
        let tr = Trajectory::parse_pieces(&[(-1.0, 0.0, "t^3"), (0.0, 1.0, "t^3")]).unwrap();
        assert!(tr.corner_set().unwrap().is_empty());
        let tr = Trajectory::parse_smooth(0.0, std::f64::consts::FRAC_PI_2, &["cos(t)"]).unwrap();
        assert!(tr.corner_set().unwrap().is_empty());
    }

    #[test]
    fn rejects_discontinuity_and_gaps() {
        assert!(Trajectory::parse_pieces(&[(0.0, 0.5, "t"), (0.5, 1.0, "t + 1")]).is_err());
        assert!(Trajectory::parse_pieces(&[(0.0, 0.5, "t"), (0.6, 1.0, "t")]).is_err());
        assert!(Trajectory::parse_pieces(&[(0.0, 1.0, "sqrt(t)")]).is_err());
    }

    #[test]
    fn single_mode_bump() {
        let p = make_bump_perturbation::<f64>(1, 0.0, 1.0, 7, 1);
        let (x, _) = p.eval(0.5, Side::Auto).unwrap();
        assert!((x[0].abs() - 1.0).abs() < 1e-15);
        let (x0, _) = p.eval(0.0, Side::Auto).unwrap();
        let (x1, _) = p.eval(1.0, Side::Auto).unwrap();
        assert_eq!((x0[0], x1[0]), (0.0, 0.0));
        let probe = (0.3f64 * std::f64::consts::PI).sin();
        assert!((p.eval(0.3, Side::Auto).unwrap().0[0].abs() - probe).abs() < 1e-15);
    }

    #[test]
    fn bump_derivative_at_left_end_is_the_mode_sum() {
        let p = make_bump_perturbation::<f64>(1, 0.0, 1.0, 11, 3);
        let PerturbationKind::Sine(c) = &p.kind else { unreachable!() };
        let oracle: f64 = c[0].iter().enumerate().map(|(j, cj)| cj * (j + 1) as f64 * std::f64::consts::PI).sum();
        let (_, dx) = p.eval(0.0, Side::Right).unwrap();
        assert!((dx[0] - oracle).abs() < 1e-12);
    }

    #[test]
    fn interpolant_reproduces_quintic() {
        // p(t) = t^5 is reproduced exactly by quintic Hermite on one interval
        let f = |t: f64| (t.powi(5), 5.0 * t.powi(4), 20.0 * t.powi(3));
        let nodes = vec![0.0, 0.7, 1.0];
        let (mut x, mut dx, mut ddx) = (vec![], vec![], vec![]);
        for &t in &nodes {
            let (a, b, c) = f(t);
            x.push(vec![a]);
            dx.push(vec![b]);
            ddx.push(vec![c]);
        }
        let h = QuinticHermite::new(nodes, x, dx, ddx).unwrap();
        let tr = Trajectory::from_interpolant(0.0, 1.0, h).unwrap();
        for t in [0.1, 0.35, 0.69, 0.7, 0.9] {
            let (v, d) = tr.eval(t, Side::Auto).unwrap();
            assert!((v[0] - f(t).0).abs() < 1e-14);
            assert!((d[0] - f(t).1).abs() < 1e-13);
        }
    }
}
