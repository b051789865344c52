//! Closed-form expressions in `(t, x, dx)` with forward-mode derivatives.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term }
//! term    = unary { ("*" | "/") unary }
//! unary   = ("-" | "+") unary | power
//! power   = primary [ "^" unary ]              (right associative)
//! primary = number | "pi" | "e" | "t"
//!         | "x" | "dx"                         (only when n = 1)
//!         | "x[" int "]" | "dx[" int "]"       (1-based index)
//!         | func "(" expr ")"                  (sin cos tan exp log sqrt)
//!         | "rpow(" expr "," int "," int ")"
//!         | "(" expr ")"
//! ```
//!
//! An exponent that is an integer literal becomes an integer power; a literal
//! ratio `p/q` (optionally negated) becomes `rpow(base, p, q)`, the real odd
//! root raised to `p`. Even reduced denominators are rejected.

mod ad;
mod jet;
mod parse;
mod structure;

pub use ad::{AdNum, Dual, HyperDual};
pub use jet::Jet2;
pub use structure::{classify_structure, StructureClass, StructureFlags};

use crate::error::{EvalError, ParseError};
use crate::scalar::Real;
use crate::linalg::Mat;
use smallvec::SmallVec;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree. Symbol indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    T,
    X(usize),
    Dx(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Powi(Box<Node>, i32),
    /// `(q-th real root of base)^p`, `q` odd and positive.
    Rpow(Box<Node>, i32, u32),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    T,
    X(usize),
    Dx(usize),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Powi(i32),
    Rpow(i32, u32),
    Call(Func),
}

/// Parsed, immutable expression. Cloning is cheap.
#[derive(Clone)]
pub struct Expr {
    n: usize,
    root: Arc<Node>,
    prog: Arc<[Instr]>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr(n={}, {})", self.n, self)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.root == other.root
    }
}

/// Seed direction for directional derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Seed<'a, T> {
    pub t: T,
    pub x: &'a [T],
    pub dx: &'a [T],
}

impl Expr {
    /// Parses `source` as an expression over `t`, `x[1..=n]`, `dx[1..=n]`.
    pub fn parse(source: &str, n: usize) -> Result<Expr, ParseError> {
        parse::parse(source, n).map(|node| Expr::from_node(n, node))
    }

    /// Parses an expression in `t` alone (trajectory pieces, Q entries).
    pub fn parse_in_t(source: &str) -> Result<Expr, ParseError> {
        Self::parse(source, 0)
    }

    pub fn from_node(n: usize, node: Node) -> Expr {
        let mut prog = Vec::new();
        compile(&node, &mut prog);
        Expr { n, root: Arc::new(node), prog: prog.into() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    /// True if the expression mentions no `x`/`dx` symbol.
    pub fn depends_only_on_t(&self) -> bool {
        !self.prog.iter().any(|i| matches!(i, Instr::X(_) | Instr::Dx(_)))
    }

    /// True if the expression mentions no symbol at all.
    pub fn is_constant(&self) -> bool {
        !self.prog.iter().any(|i| matches!(i, Instr::T | Instr::X(_) | Instr::Dx(_)))
    }

    /// Evaluates over any [`AdNum`] type.
    pub fn eval_num<T: Real, N: AdNum<T>>(&self, t: N, x: &[N], dx: &[N]) -> Result<N, EvalError> {
        if x.len() != self.n {
            return Err(EvalError::Dimension { expected: self.n, got: x.len() });
        }
        if dx.len() != self.n {
            return Err(EvalError::Dimension { expected: self.n, got: dx.len() });
        }
        run(&self.prog, t, x, dx)
    }

    pub fn eval<T: Real>(&self, t: T, x: &[T], dx: &[T]) -> Result<T, EvalError> {
        self.eval_num(t, x, dx)
    }

    /// Value of an expression in `t` alone.
    pub fn eval_t<T: Real>(&self, t: T) -> Result<T, EvalError> {
        run(&self.prog, t, &[], &[])
    }

    /// Value and first derivative of an expression in `t`.
    pub fn eval_t_d1<T: Real>(&self, t: T) -> Result<(T, T), EvalError> {
        let r = run(&self.prog, Dual::var(t), &[], &[])?;
        Ok((r.re, r.d))
    }

    /// Value, first and second derivative of an expression in `t`.
    pub fn eval_t_d2<T: Real>(&self, t: T) -> Result<(T, T, T), EvalError> {
        let r = run(&self.prog, HyperDual::new(t, T::one(), T::one(), T::zero()), &[], &[])?;
        Ok((r.re, r.a, r.ab))
    }

    /// Value and directional derivative `∇L · seed`.
    pub fn directional<T: Real>(
        &self,
        t: T,
        x: &[T],
        dx: &[T],
        seed: Seed<'_, T>,
    ) -> Result<(T, T), EvalError> {
        let xs: SmallVec<[Dual<T>; 8]> = x.iter().zip(seed.x).map(|(&v, &d)| Dual::new(v, d)).collect();
        let dxs: SmallVec<[Dual<T>; 8]> =
            dx.iter().zip(seed.dx).map(|(&v, &d)| Dual::new(v, d)).collect();
        let r = self.eval_num(Dual::new(t, seed.t), &xs, &dxs)?;
        Ok((r.re, r.d))
    }

    /// Mixed second directional derivative `uᵀ ∇²L v` together with the
    /// value and both first directional derivatives.
    pub fn second_directional<T: Real>(
        &self,
        t: T,
        x: &[T],
        dx: &[T],
        u: Seed<'_, T>,
        v: Seed<'_, T>,
    ) -> Result<HyperDual<T>, EvalError> {
        let z = T::zero();
        let xs: SmallVec<[HyperDual<T>; 8]> = (0..x.len())
            .map(|i| HyperDual::new(x[i], u.x[i], v.x[i], z))
            .collect();
        let dxs: SmallVec<[HyperDual<T>; 8]> = (0..dx.len())
            .map(|i| HyperDual::new(dx[i], u.dx[i], v.dx[i], z))
            .collect();
        self.eval_num(HyperDual::new(t, u.t, v.t, z), &xs, &dxs)
    }

    /// `∂L/∂x` (n dual evaluations).
    pub fn grad_x<T: Real>(&self, t: T, x: &[T], dx: &[T]) -> Result<Vec<T>, EvalError> {
        let mut e = vec![T::zero(); self.n];
        let zeros = vec![T::zero(); self.n];
        (0..self.n)
            .map(|i| {
                e.iter_mut().for_each(|v| *v = T::zero());
                e[i] = T::one();
                self.directional(t, x, dx, Seed { t: T::zero(), x: &e, dx: &zeros }).map(|r| r.1)
            })
            .collect()
    }

    /// `∂L/∂dx` (n dual evaluations).
    pub fn grad_dx<T: Real>(&self, t: T, x: &[T], dx: &[T]) -> Result<Vec<T>, EvalError> {
        let mut e = vec![T::zero(); self.n];
        let zeros = vec![T::zero(); self.n];
        (0..self.n)
            .map(|i| {
                e.iter_mut().for_each(|v| *v = T::zero());
                e[i] = T::one();
                self.directional(t, x, dx, Seed { t: T::zero(), x: &zeros, dx: &e }).map(|r| r.1)
            })
            .collect()
    }

    /// `∂²L/∂dx²` only, `n(n+1)/2` hyper-dual evaluations.
    pub fn hess_dxdx<T: Real>(&self, t: T, x: &[T], dx: &[T]) -> Result<Mat<T>, EvalError> {
        self.state_block(t, x, dx, true)
    }

    /// `∂²L/∂x²` only, `n(n+1)/2` hyper-dual evaluations.
    pub fn hess_xx<T: Real>(&self, t: T, x: &[T], dx: &[T]) -> Result<Mat<T>, EvalError> {
        self.state_block(t, x, dx, false)
    }

    fn state_block<T: Real>(&self, t: T, x: &[T], dx: &[T], in_dx: bool) -> Result<Mat<T>, EvalError> {
        let n = self.n;
        let zeros = vec![T::zero(); n];
        let unit = |i: usize| {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            e
        };
        let mut h = Mat::zeros(n, n);
        for i in 0..n {
            let ei = unit(i);
            for j in i..n {
                let ej = unit(j);
                let (u, v) = if in_dx {
                    (Seed { t: T::zero(), x: &zeros, dx: &ei }, Seed { t: T::zero(), x: &zeros, dx: &ej })
                } else {
                    (Seed { t: T::zero(), x: &ei, dx: &zeros }, Seed { t: T::zero(), x: &ej, dx: &zeros })
                };
                let r = self.second_directional(t, x, dx, u, v)?.ab;
                h[(i, j)] = r;
                h[(j, i)] = r;
            }
        }
        Ok(h)
    }

    /// Full second-order jet over `(t, x, dx)`.
    pub fn eval_jet2<T: Real>(&self, t: T, x: &[T], dx: &[T]) -> Result<Jet2<T>, EvalError> {
        jet::eval_jet2(self, t, x, dx)
    }
}

fn compile(node: &Node, out: &mut Vec<Instr>) {
    match node {
        Node::Num(v) => out.push(Instr::Const(*v)),
        Node::T => out.push(Instr::T),
        Node::X(i) => out.push(Instr::X(*i)),
        Node::Dx(i) => out.push(Instr::Dx(*i)),
        Node::Neg(a) => {
            compile(a, out);
            out.push(Instr::Neg);
        }
        Node::Bin(op, a, b) => {
            compile(a, out);
            compile(b, out);
            out.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
                BinOp::Pow => Instr::Pow,
            });
        }
        Node::Powi(a, k) => {
            compile(a, out);
            out.push(Instr::Powi(*k));
        }
        Node::Rpow(a, p, q) => {
            compile(a, out);
            out.push(Instr::Rpow(*p, *q));
        }
        Node::Call(f, a) => {
            compile(a, out);
            out.push(Instr::Call(*f));
        }
    }
}

fn run<T: Real, N: AdNum<T>>(prog: &[Instr], t: N, x: &[N], dx: &[N]) -> Result<N, EvalError> {
    let mut stack: SmallVec<[N; 16]> = SmallVec::new();
    for ins in prog {
        match *ins {
            Instr::Const(c) => stack.push(N::constant(T::of(c))),
            Instr::T => stack.push(t),
            Instr::X(i) => stack.push(x[i]),
            Instr::Dx(i) => stack.push(dx[i]),
            Instr::Neg => {
                let a = stack.pop().unwrap();
                stack.push(-a);
            }
            Instr::Add | Instr::Sub | Instr::Mul | Instr::Div | Instr::Pow => {
                let b = stack.pop().unwrap();
                let a = stack.pop().unwrap();
                let r = match *ins {
                    Instr::Add => a + b,
                    Instr::Sub => a - b,
                    Instr::Mul => a * b,
                    Instr::Div => {
                        if b.re() == T::zero() {
                            return Err(EvalError::Domain { func: "/", arg: 0.0 });
                        }
                        a / b
                    }
                    _ => general_pow(a, b)?,
                };
                stack.push(r);
            }
            Instr::Powi(k) => {
                let a = stack.pop().unwrap();
                stack.push(powi(a, k)?);
            }
            Instr::Rpow(p, q) => {
                let a = stack.pop().unwrap();
                stack.push(rpow(a, p, q)?);
            }
            Instr::Call(f) => {
                let a = stack.pop().unwrap();
                stack.push(call(f, a)?);
            }
        }
    }
    let out = stack.pop().expect("non-empty program");
    if !out.re().is_finite() {
        return Err(EvalError::Domain { func: "result", arg: out.re().to_f64_lossy() });
    }
    Ok(out)
}

fn call<T: Real, N: AdNum<T>>(f: Func, a: N) -> Result<N, EvalError> {
    let v = a.re();
    let two = T::of(2.0);
    match f {
        Func::Sin => a.chain(v.sin(), || Ok(v.cos()), || Ok(-v.sin())),
        Func::Cos => a.chain(v.cos(), || Ok(-v.sin()), || Ok(-v.cos())),
        Func::Tan => {
            let tv = v.tan();
            let sec2 = T::one() + tv * tv;
            a.chain(tv, || Ok(sec2), || Ok(two * tv * sec2))
        }
        Func::Exp => {
            let e = v.exp();
            a.chain(e, || Ok(e), || Ok(e))
        }
        Func::Log => {
            if v <= T::zero() {
                return Err(EvalError::Domain { func: "log", arg: v.to_f64_lossy() });
            }
            a.chain(v.ln(), || Ok(v.recip()), || Ok(-(v * v).recip()))
        }
        Func::Sqrt => {
            if v < T::zero() {
                return Err(EvalError::Domain { func: "sqrt", arg: v.to_f64_lossy() });
            }
            let s = v.sqrt();
            let singular = || EvalError::DerivativeSingular { func: "sqrt", arg: 0.0 };
            a.chain(
                s,
                || if s == T::zero() { Err(singular()) } else { Ok(T::of(0.5) / s) },
                || if s == T::zero() { Err(singular()) } else { Ok(-T::of(0.25) / (v * s)) },
            )
        }
    }
}

fn powi<T: Real, N: AdNum<T>>(a: N, k: i32) -> Result<N, EvalError> {
    let v = a.re();
    if k == 0 {
        return Ok(N::constant(T::one()));
    }
    if k < 0 && v == T::zero() {
        return Err(EvalError::Domain { func: "^", arg: 0.0 });
    }
    let kf = T::of(k as f64);
    a.chain(
        v.powi(k),
        || Ok(kf * v.powi(k - 1)),
        || Ok(if k == 1 { T::zero() } else { kf * T::of((k - 1) as f64) * v.powi(k - 2) }),
    )
}

/// Real q-th root for odd q.
fn real_root<T: Real>(v: T, q: u32) -> T {
    match q {
        1 => v,
        3 => v.cbrt(),
        _ => v.signum() * v.abs().powf(T::one() / T::of(q as f64)),
    }
}

fn rpow<T: Real, N: AdNum<T>>(a: N, p: i32, q: u32) -> Result<N, EvalError> {
    if p == 0 {
        return Ok(N::constant(T::one()));
    }
    let v = a.re();
    let exponent = p as f64 / q as f64;
    let e = T::of(exponent);
    if v == T::zero() {
        if p < 0 {
            return Err(EvalError::Domain { func: "rpow", arg: 0.0 });
        }
        let singular = || EvalError::DerivativeSingular { func: "rpow", arg: 0.0 };
        // one-sided limits of the derivatives at the origin
        let d1 = move || match exponent.partial_cmp(&1.0).unwrap() {
            std::cmp::Ordering::Greater => Ok(T::zero()),
            std::cmp::Ordering::Equal => Ok(T::one()),
            std::cmp::Ordering::Less => Err(singular()),
        };
        let d2 = move || {
            if exponent > 2.0 || exponent == 1.0 {
                Ok(T::zero())
            } else if exponent == 2.0 {
                Ok(T::of(2.0))
            } else {
                Err(singular())
            }
        };
        return a.chain(T::zero(), d1, d2);
    }
    let r = real_root(v, q);
    let qi = q as i32;
    a.chain(
        r.powi(p),
        || Ok(e * r.powi(p - qi)),
        || Ok(e * (e - T::one()) * r.powi(p - 2 * qi)),
    )
}

fn general_pow<T: Real, N: AdNum<T>>(a: N, b: N) -> Result<N, EvalError> {
    let v = a.re();
    if v <= T::zero() {
        return Err(EvalError::Domain { func: "^", arg: v.to_f64_lossy() });
    }
    let ln = a.chain(v.ln(), || Ok(v.recip()), || Ok(-(v * v).recip()))?;
    let y = b * ln;
    let ey = y.re().exp();
    y.chain(ey, || Ok(ey), || Ok(ey))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, self.n, f)
    }
}

fn write_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "(-{:?})", -v)
    } else {
        write!(f, "{v:?}")
    }
}

fn write_node(node: &Node, n: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => write_num(*v, f),
        Node::T => write!(f, "t"),
        Node::X(i) => {
            if n == 1 {
                write!(f, "x")
            } else {
                write!(f, "x[{}]", i + 1)
            }
        }
        Node::Dx(i) => {
            if n == 1 {
                write!(f, "dx")
            } else {
                write!(f, "dx[{}]", i + 1)
            }
        }
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, n, f)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            write_node(a, n, f)?;
            write!(f, " {sym} ")?;
            write_node(b, n, f)?;
            write!(f, ")")
        }
        Node::Powi(a, k) => {
            write!(f, "(")?;
            write_node(a, n, f)?;
            if *k < 0 {
                write!(f, ")^(-{})", -(*k as i64))
            } else {
                write!(f, ")^{k}")
            }
        }
        Node::Rpow(a, p, q) => {
            write!(f, "rpow(")?;
            write_node(a, n, f)?;
            write!(f, ", {p}, {q})")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, n, f)?;
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, t: f64, x: f64, dx: f64) -> f64 {
        Expr::parse(src, 1).unwrap().eval(t, &[x], &[dx]).unwrap()
    }

    #[test]
    fn evaluates_corpus_integrands() {
        assert_eq!(ev("dx^2", 0.0, 0.0, 3.0), 9.0);
        assert_eq!(ev("t^2*dx^2 + 12*x^2", 1.0, 1.0, 1.0), 13.0);
    }

    #[test]
    fn real_root_semantics_for_negative_base() {
        // (-1)^(4/3) = 1, (-1)^(5/3) = -1, so 1 - (-1)*4 = 5
        let v = ev("x^(4/3) - x^(5/3)*dx^2", 0.0, -1.0, 2.0);
        let oracle = (-1f64).cbrt().powi(4) - (-1f64).cbrt().powi(5) * 4.0;
        assert_eq!(oracle, 5.0);
        assert!((v - oracle).abs() < 1e-15);
    }

    #[test]
    fn rpow_derivatives_at_zero() {
        let e = Expr::parse("x^(4/3)", 1).unwrap();
        let g = e.grad_x(0.0, &[0.0], &[0.0]).unwrap();
        assert_eq!(g, vec![0.0]);
        let e = Expr::parse("x^(1/3)", 1).unwrap();
        assert!(matches!(
            e.grad_x(0.0, &[0.0], &[0.0]),
            Err(EvalError::DerivativeSingular { .. })
        ));
        // value still fine
        assert_eq!(e.eval(0.0, &[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        let e = Expr::parse("log(x)", 1).unwrap();
        assert!(matches!(e.eval(0.0, &[-1.0], &[0.0]), Err(EvalError::Domain { func: "log", .. })));
        let e = Expr::parse("1/x", 1).unwrap();
        assert!(e.eval(0.0, &[0.0], &[0.0]).is_err());
        let e = Expr::parse("sqrt(x)", 1).unwrap();
        assert!(e.eval(0.0, &[-0.5], &[0.0]).is_err());
    }

    #[test]
    fn print_parse_identity() {
        for src in [
            "x^(4/3) - x^(5/3)*dx^2",
            "t^2*dx^2 + 12*x^2",
            "-x^2 + 2^-1 * sin(t)/exp(dx) - 1.5e-3",
            "(dx^2 - 1)^2",
            "x^-2 + sqrt(t) + 2^t",
        ] {
            let e = Expr::parse(src, 1).unwrap();
            let printed = e.to_string();
            let back = Expr::parse(&printed, 1).unwrap();
            assert_eq!(e, back, "{src} -> {printed}");
        }
    }

    #[test]
    fn single_precision_evaluation() {
        let e = Expr::parse("t^2*dx^2 + 12*x^2", 1).unwrap();
        let v: f32 = e.eval(1.0f32, &[1.0], &[1.0]).unwrap();
        assert_eq!(v, 13.0);
        let (q, dq) = Expr::parse_in_t("2*tan(t)").unwrap().eval_t_d1(0.5f32).unwrap();
        assert!((q - 2.0 * 0.5f32.tan()).abs() < 1e-6);
        assert!((dq - 2.0 / 0.5f32.cos().powi(2)).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch() {
        let e = Expr::parse("x[1]*dx[2]", 2).unwrap();
        assert!(matches!(e.eval(0.0, &[1.0], &[1.0]), Err(EvalError::Dimension { .. })));
        assert_eq!(e.eval(0.0, &[2.0, 0.0], &[0.0, 3.0]).unwrap(), 6.0);
    }
}
