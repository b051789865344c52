//! Adaptive Gauss–Kronrod (7–15) quadrature of functionals along trajectories.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Mat;
use crate::scalar::{dot, Real};
use crate::trajectory::{Perturbation, Side, Trajectory};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const SUBDIVISION_BUDGET: usize = 10_000;
/// Deepest tail cut `ε = (t1 − t0)·2^-k` used for endpoint-singular integrands.
pub const MAX_TAIL_LEVEL: u32 = 40;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub abs_error_estimate: T,
    pub subdivisions: usize,
}

struct Segment<T> {
    a: T,
    b: T,
    value: Vec<T>,
    err: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // largest error first; ties resolved by position for a reproducible order
        self.err
            .to_f64_lossy()
            .total_cmp(&other.err.to_f64_lossy())
            .then_with(|| other.a.to_f64_lossy().total_cmp(&self.a.to_f64_lossy()))
    }
}

/// One 15-point Kronrod rule with the QUADPACK error heuristic, applied
/// componentwise; the error is the largest component error.
fn gk15<T: Real, F>(f: &mut F, a: T, b: T, dim: usize) -> Result<(Vec<T>, T)>
where
    F: FnMut(T) -> Result<Vec<T>>,
{
    let c = T::of;
    let center = (a + b) * c(0.5);
    let half = (b - a) * c(0.5);
    let mut fv: Vec<Vec<T>> = Vec::with_capacity(15);
    let fc = f(center)?;
    for &node in XGK.iter().take(7) {
        let dxv = half * c(node);
        fv.push(f(center - dxv)?);
        fv.push(f(center + dxv)?);
    }
    let mut value = vec![T::zero(); dim];
    let mut err = T::zero();
    let eps = T::epsilon();
    for i in 0..dim {
        let fci = fc[i];
        let mut resk = fci * c(WGK[7]);
        let mut resg = fci * c(WG[3]);
        let mut resabs = resk.abs();
        for j in 0..7 {
            let (f1, f2) = (fv[2 * j][i], fv[2 * j + 1][i]);
            resk = resk + c(WGK[j]) * (f1 + f2);
            resabs = resabs + c(WGK[j]) * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                resg = resg + c(WG[j / 2]) * (f1 + f2);
            }
        }
        let mean = resk * c(0.5);
        let mut resasc = c(WGK[7]) * (fci - mean).abs();
        for j in 0..7 {
            resasc = resasc + c(WGK[j]) * ((fv[2 * j][i] - mean).abs() + (fv[2 * j + 1][i] - mean).abs());
        }
        let h = half.abs();
        let (resk, resabs, resasc) = (resk * half, resabs * h, resasc * h);
        let mut e = (resk - resg * half).abs();
        if resasc != T::zero() && e != T::zero() {
            e = resasc * T::one().min((c(200.0) * e / resasc).powf(c(1.5)));
        }
        if resabs > T::min_positive_value() / (c(50.0) * eps) {
            e = e.max(c(50.0) * eps * resabs);
        }
        if !resk.is_finite() {
            return Err(Error::NoConvergence {
                a: a.to_f64_lossy(),
                b: b.to_f64_lossy(),
                tol: f64::NAN,
                budget: 0,
            });
        }
        value[i] = resk;
        err = err.max(e);
    }
    Ok((value, err))
}

/// Adaptive integration of a vector-valued `f` over `[points[0], points[last]]`
/// with the initial partition aligned to `points`.
pub fn integrate_vec<T: Real, F>(mut f: F, dim: usize, points: &[T], tol: T, budget: usize) -> Result<(Vec<T>, T, usize)>
where
    F: FnMut(T) -> Result<Vec<T>>,
{
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, err) = gk15(&mut f, w[0], w[1], dim)?;
            heap.push(Segment { a: w[0], b: w[1], value, err });
        }
    }
    let mut done: Vec<Segment<T>> = Vec::new();
    let mut err_sum = heap.iter().fold(T::zero(), |acc, s| acc + s.err);
    let mut subdivisions = heap.len();
    while err_sum > tol {
        let Some(worst) = heap.pop() else { break };
        let mid = (worst.a + worst.b) * T::of(0.5);
        let width = worst.b - worst.a;
        if !(mid > worst.a && mid < worst.b) || width <= T::of(100.0) * T::epsilon() * worst.a.abs().max(worst.b.abs()) {
            // roundoff-limited: keep the segment but stop refining it
            done.push(worst);
            continue;
        }
        if subdivisions >= budget {
            return Err(Error::NoConvergence {
                a: points[0].to_f64_lossy(),
                b: points[points.len() - 1].to_f64_lossy(),
                tol: tol.to_f64_lossy(),
                budget,
            });
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid, dim)?;
        let (v2, e2) = gk15(&mut f, mid, worst.b, dim)?;
        err_sum = err_sum - worst.err + e1 + e2;
        heap.push(Segment { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, err: e2 });
        subdivisions += 1;
    }
    let mut segs: Vec<Segment<T>> = heap.into_vec();
    segs.extend(done);
    // summation in position order keeps results independent of heap layout
    segs.sort_by(|x, y| x.a.to_f64_lossy().total_cmp(&y.a.to_f64_lossy()));
    let mut v = vec![T::zero(); dim];
    let mut e = T::zero();
    for s in &segs {
        for (acc, x) in v.iter_mut().zip(&s.value) {
            *acc = *acc + *x;
        }
        e = e + s.err;
    }
    Ok((v, e, subdivisions))
}

/// Scalar adaptive integration over the partition `points`.
pub fn integrate<T: Real, F>(mut f: F, points: &[T], tol: T) -> Result<QuadratureResult<T>>
where
    F: FnMut(T) -> Result<T>,
{
    let (v, e, s) = integrate_vec(|t| f(t).map(|y| vec![y]), 1, points, tol, SUBDIVISION_BUDGET)?;
    Ok(QuadratureResult { value: v[0], abs_error_estimate: e, subdivisions: s })
}

fn partition<T: Real>(t0: T, t1: T, extra: &[&[T]]) -> Vec<T> {
    let mut pts = vec![t0, t1];
    for e in extra {
        pts.extend(e.iter().copied().filter(|&t| t > t0 && t < t1));
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    pts.dedup();
    pts
}

fn integrand_at<T: Real>(l: &Expr, t: T, x: &[T], dx: &[T]) -> Result<T> {
    l.eval(t, x, dx).map_err(Error::eval_at(t.to_f64_lossy()))
}

/// `S(L)(x) = ∫ L(t, x(t), ẋ(t)) dt`, split at every breakpoint of `tr`.
pub fn integrate_functional<T: Real>(l: &Expr, tr: &Trajectory<T>, tol: T) -> Result<QuadratureResult<T>> {
    check_dim(l, tr.dim())?;
    let (t0, t1) = tr.interval();
    let bp = tr.breakpoints();
    let pts = partition(t0, t1, &[&bp]);
    integrate(
        |t| {
            let (x, dx) = tr.eval(t, Side::Auto)?;
            integrand_at(l, t, &x, &dx)
        },
        &pts,
        tol,
    )
}

fn check_dim(l: &Expr, n: usize) -> Result<()> {
    if l.dim() != n {
        return Err(Error::InvalidTrajectory(format!("integrand has dimension {}, trajectory {n}", l.dim())));
    }
    Ok(())
}

fn check_shared<T: Real>(xbar: &Trajectory<T>, dx: &Perturbation<T>) -> Result<()> {
    if xbar.dim() != dx.dim() || xbar.interval() != dx.interval() {
        return Err(Error::InvalidTrajectory("perturbation and candidate must share interval and dimension".into()));
    }
    Ok(())
}

/// Integrand sampler shared by the increment formulas: `(t, x̄, ẋ̄, Δx, Δẋ)`.
fn sample<T: Real>(xbar: &Trajectory<T>, d: &Perturbation<T>, t: T) -> Result<[Vec<T>; 4]> {
    let (x, v) = xbar.eval(t, Side::Auto)?;
    let (h, hd) = d.eval(t, Side::Auto)?;
    Ok([x, v, h, hd])
}

fn shifted<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

/// `S(L)(x̄ + Δx) − S(L)(x̄)`, integrated as a single difference.
pub fn direct_increment<T: Real>(
    l: &Expr,
    xbar: &Trajectory<T>,
    d: &Perturbation<T>,
    tol: T,
) -> Result<QuadratureResult<T>> {
    check_dim(l, xbar.dim())?;
    check_shared(xbar, d)?;
    let (t0, t1) = xbar.interval();
    let pts = partition(t0, t1, &[&xbar.breakpoints(), &d.breakpoints()]);
    integrate(
        |t| {
            let [x, v, h, hd] = sample(xbar, d, t)?;
            Ok(integrand_at(l, t, &shifted(&x, &h), &shifted(&v, &hd))? - integrand_at(l, t, &x, &v)?)
        },
        &pts,
        tol,
    )
}

/// Symmetric matrix function `Q` with derivative on `[t0, t1)`.
pub trait MatrixFn<T> {
    /// `(Q(t), Q̇(t))`.
    fn q_and_dq(&self, t: T) -> Result<(Mat<T>, Mat<T>)>;
    /// Points where `Q` may have a corner.
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }
    /// True when `Q` is identically zero (no tail treatment needed).
    fn is_zero(&self) -> bool {
        false
    }
}

/// Outcome of [`increment_via_eq34`], including the tail extrapolation trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AugmentedIncrement {
    pub value: f64,
    pub abs_error_estimate: f64,
    /// Deepest cut level `k` reached, 0 if the integral ran to `t1` directly.
    pub tail_level: u32,
}

/// Increment computed from the `Q`-augmented integrand
/// `L(t, x̄+Δx, ẋ̄+Δẋ) + Δẋᵀ Q Δx + ½ Δxᵀ Q̇ Δx − L(t, x̄, ẋ̄)`.
///
/// Unless `Q ≡ 0` the integral is taken on `[t0, t1 − ε_k]`,
/// `ε_k = (t1 − t0)·2^-k`, and extrapolated with `R_k = 2 I_{k+1} − I_k`
/// until successive extrapolants agree to `tol`.
pub fn increment_via_eq34<T: Real>(
    l: &Expr,
    xbar: &Trajectory<T>,
    d: &Perturbation<T>,
    q: &dyn MatrixFn<T>,
    tol: T,
) -> Result<AugmentedIncrement> {
    check_dim(l, xbar.dim())?;
    check_shared(xbar, d)?;
    let (t0, t1) = xbar.interval();
    let integrand = |t: T| -> Result<T> {
        let [x, v, h, hd] = sample(xbar, d, t)?;
        let base = integrand_at(l, t, &shifted(&x, &h), &shifted(&v, &hd))? - integrand_at(l, t, &x, &v)?;
        if q.is_zero() {
            return Ok(base);
        }
        let (qm, dq) = q.q_and_dq(t)?;
        if !qm.is_finite() || !dq.is_finite() {
            return Err(Error::NonfiniteQ { t: t.to_f64_lossy() });
        }
        Ok(base + dot(&hd, &qm.mul_vec(&h)) + T::of(0.5) * dq.quad_form(&h))
    };
    let qbp = q.breakpoints();
    let bp = [xbar.breakpoints(), d.breakpoints(), qbp].concat();
    if q.is_zero() {
        let pts = partition(t0, t1, &[&bp]);
        let r = integrate(integrand, &pts, tol)?;
        return Ok(AugmentedIncrement {
            value: r.value.to_f64_lossy(),
            abs_error_estimate: r.abs_error_estimate.to_f64_lossy(),
            tail_level: 0,
        });
    }
    let len = t1 - t0;
    let cut = |k: u32| t1 - len * T::of((-(k as f64)).exp2());
    let piece_tol = tol * T::of(0.25);
    let first = partition(t0, cut(1), &[&bp]);
    let r = integrate(&integrand, &first, piece_tol)?;
    let mut acc = r.value;
    let mut err = r.abs_error_estimate;
    let mut prev_r: Option<T> = None;
    let mut prev_i = acc;
    for k in 1..MAX_TAIL_LEVEL {
        let pts = partition(cut(k), cut(k + 1), &[&bp]);
        let r = integrate(&integrand, &pts, piece_tol)?;
        acc = acc + r.value;
        err = err + r.abs_error_estimate;
        let rk = acc + acc - prev_i;
        if let Some(p) = prev_r {
            if k >= 4 && (rk - p).abs() <= tol {
                return Ok(AugmentedIncrement {
                    value: rk.to_f64_lossy(),
                    abs_error_estimate: (err + (rk - p).abs()).to_f64_lossy(),
                    tail_level: k + 1,
                });
            }
        }
        prev_r = Some(rk);
        prev_i = acc;
    }
    Err(Error::NoConvergence {
        a: cut(MAX_TAIL_LEVEL).to_f64_lossy(),
        b: t1.to_f64_lossy(),
        tol: tol.to_f64_lossy(),
        budget: MAX_TAIL_LEVEL as usize,
    })
}

/// Running integral `∫_{t0}^{tᵢ} f` at each node of the increasing list `nodes`.
pub fn cumulative<T: Real, F>(mut f: F, dim: usize, nodes: &[T], breakpoints: &[T], tol: T) -> Result<Vec<Vec<T>>>
where
    F: FnMut(T) -> Result<Vec<T>>,
{
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = vec![T::zero(); dim];
    out.push(acc.clone());
    for w in nodes.windows(2) {
        if w[1] > w[0] {
            let pts = partition(w[0], w[1], &[breakpoints]);
            let (v, _, _) = integrate_vec(&mut f, dim, &pts, tol, SUBDIVISION_BUDGET)?;
            for i in 0..dim {
                acc[i] = acc[i] + v[i];
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}
