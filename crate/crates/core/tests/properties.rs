use proptest::prelude::*;
use std::sync::Arc;
use varcert::conditions::excess;
use varcert::linalg::Mat;
use varcert::ode::{dopri5, OdeOptions};
use varcert::plan::PlanConfig;
use varcert::quadrature::{direct_increment, increment_via_eq34, integrate, DEFAULT_TOL};
use varcert::riccati::{extract_quadratic, integrate_riccati, RICCATI_RTOL};
use varcert::shooting::{default_bracket, solve_bvp, Boundary};
use varcert::sufficiency::{check_thm41, lhs_thm42, QSpec};
use varcert::trajectory::{make_bump_perturbation, Side};
use varcert::{Expr, Path, SamplingPlan};

fn plan(n: usize, t0: f64, t1: f64) -> SamplingPlan {
    SamplingPlan::build(PlanConfig::default(), n, t0, t1, &[])
}

fn small_plan(n: usize, t0: f64, t1: f64) -> SamplingPlan {
    let cfg = PlanConfig { t_points: 64, cluster_points: 4, ..PlanConfig::default() };
    SamplingPlan::build(cfg, n, t0, t1, &[])
}

fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("t".to_string()),
        Just("x".to_string()),
        Just("dx".to_string()),
        Just("pi".to_string()),
        (1u32..20).prop_map(|k| format!("{}", k as f64 / 4.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just('+'), Just('-'), Just('*'), Just('/')])
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            (inner.clone(), prop_oneof![Just("sin"), Just("cos"), Just("exp"), Just("log")])
                .prop_map(|(a, f)| format!("{f}({a})")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan()) || (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(src in expr_source(), t in -1.0f64..1.0, x in -2.0f64..2.0, dx in -2.0f64..2.0) {
        let e = Expr::parse(&src, 1).unwrap();
        let back = Expr::parse(&e.to_string(), 1).unwrap();
        prop_assert_eq!(&e, &back);
        match (e.eval(t, &[x], &[dx]), back.eval(t, &[x], &[dx])) {
            (Ok(a), Ok(b)) => prop_assert!(close(a, b, 0.0) || a.is_infinite() && a == b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn rational_power_matches_real_root(p in -6i32..7, q in prop_oneof![Just(1u32), Just(3), Just(5)], x in -4.0f64..4.0) {
        prop_assume!(x.abs() > 1e-3);
        let e = Expr::parse(&format!("x^({p}/{q})"), 1).unwrap();
        let root = if q == 1 { x } else if x < 0.0 { -(-x).powf(1.0 / q as f64) } else { x.powf(1.0 / q as f64) };
        let want = root.powi(p);
        let got = e.eval(0.0, &[x], &[0.0]).unwrap();
        prop_assert!(close(got, want, 1e-12), "{} vs {}", got, want);
        // derivative p/q · x^(p/q − 1)
        let g = e.grad_x(0.0, &[x], &[0.0]).unwrap()[0];
        prop_assert!(close(g, p as f64 / q as f64 * want / x, 1e-12));
        // product rule: x^(a) · x^(b) = x^(a+b)
        let prod = Expr::parse(&format!("x^({p}/{q}) * x^(1/{q})"), 1).unwrap().eval(0.0, &[x], &[0.0]).unwrap();
        let sum = Expr::parse(&format!("x^({}/{q})", p + 1), 1).unwrap().eval(0.0, &[x], &[0.0]).unwrap();
        prop_assert!(close(prod, sum, 1e-12));
    }

    #[test]
    fn excess_ignores_terms_affine_in_velocity(
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        t in 0.0f64..1.0, x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
    ) {
        let l = Expr::parse("dx^4 + x*dx^2 + sin(x)*dx", 1).unwrap();
        let m = Expr::parse(&format!("dx^4 + x*dx^2 + sin(x)*dx + ({a})*x^2*dx*t + ({b})*exp(x)"), 1).unwrap();
        let e1 = excess(&l, t, &[x], &[y], &[z]).unwrap();
        let e2 = excess(&m, t, &[x], &[y], &[z]).unwrap();
        prop_assert!(close(e1, e2, 1e-12), "{} vs {}", e1, e2);
    }

    #[test]
    fn excess_of_convex_integrand_is_nonnegative(
        c in 0.0f64..3.0, t in 0.0f64..1.0, x in -2.0f64..2.0, y in -3.0f64..3.0, z in -3.0f64..3.0,
    ) {
        let l = Expr::parse(&format!("dx^2 + {c}*dx^4 + x^2*dx^2 + t*x*dx"), 1).unwrap();
        let e = excess(&l, t, &[x], &[y], &[z]).unwrap();
        prop_assert!(e >= -1e-12 * (1.0 + z.abs().powi(4)), "E = {}", e);
        prop_assert_eq!(excess(&l, t, &[x], &[y], &[y]).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_is_additive(a in -2.0f64..0.0, b in 0.5f64..3.0, s in 0.05f64..0.95, w in 0.5f64..6.0) {
        let c = a + s * (b - a);
        let f = |t: f64| Ok((w * t).sin().exp() + t * t);
        let whole = integrate(f, &[a, b], 1e-12).unwrap().value;
        let left = integrate(f, &[a, c], 1e-12).unwrap().value;
        let right = integrate(f, &[c, b], 1e-12).unwrap().value;
        prop_assert!((whole - left - right).abs() <= 1e-10, "{} vs {}", whole, left + right);
    }

    #[test]
    fn plan_is_a_function_of_its_seed(seed in any::<u64>(), other in any::<u64>()) {
        prop_assume!(seed != other);
        let cfg = PlanConfig { seed, ..PlanConfig::default() };
        let a = SamplingPlan::build(cfg.clone(), 2, 0.0, 1.0, &[0.5]);
        let b = SamplingPlan::build(cfg, 2, 0.0, 1.0, &[0.5]);
        prop_assert_eq!(a.digest(), b.digest());
        prop_assert_eq!(&a.xi, &b.xi);
        let c = SamplingPlan::build(PlanConfig { seed: other, ..PlanConfig::default() }, 2, 0.0, 1.0, &[0.5]);
        prop_assert_ne!(a.digest(), c.digest());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn augmented_increment_equals_direct(seed in any::<u64>(), scale in 0.01f64..1.0, c0 in -3.0f64..3.0, c1 in -3.0f64..3.0) {
        let t1 = std::f64::consts::FRAC_PI_2;
        let l = Expr::parse("dx^2 - x^2", 1).unwrap();
        let xbar = Path::parse_smooth(0.0, t1, &["cos(t)"]).unwrap();
        let q = QSpec::parse(0.0, t1, &[vec![format!("{c0} + {c1}*t*sin(t)").as_str()]]).unwrap();
        let d = make_bump_perturbation(1, 0.0, t1, seed, 3).scaled(scale);
        let direct = direct_increment(&l, &xbar, &d, DEFAULT_TOL).unwrap().value;
        let aug = increment_via_eq34(&l, &xbar, &d, &q, DEFAULT_TOL).unwrap().value;
        prop_assert!((aug - direct).abs() <= 1e-7, "{} vs {}", aug, direct);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn first_variation_vanishes_at_extremals(seed in any::<u64>(), s in 0.01f64..0.5, pick in 0usize..3) {
        let (l, xbar) = match pick {
            0 => ("t^2*dx^2+12*x^2", Path::parse_smooth(-1.0, 1.0, &["t^3"]).unwrap()),
            1 => ("dx^2 + x^2", Path::parse_smooth(0.0, 1.0, &["(exp(t) - exp(-t))/2"]).unwrap()),
            _ => ("dx^2 + x*dx + t*x", Path::parse_smooth(0.0, 1.0, &["t^3/12 - t/12"]).unwrap()),
        };
        let l = Expr::parse(l, 1).unwrap();
        let (t0, t1) = xbar.interval();
        let d = make_bump_perturbation(1, t0, t1, seed, 4);
        let plus = direct_increment(&l, &xbar, &d.scaled(s), 1e-12).unwrap().value;
        let minus = direct_increment(&l, &xbar, &d.scaled(-s), 1e-12).unwrap().value;
        // quadratic integrands: the increment is even in s
        prop_assert!((plus - minus).abs() <= 1e-9 * (1.0 + plus.abs()), "{} vs {}", plus, minus);
    }

    #[test]
    fn shooting_recovers_closed_form(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, len in 0.5f64..2.0) {
        let l = Expr::parse("dx^2 + x^2", 1).unwrap();
        let b = Boundary { t0: 0.0, t1: len, x0, x1 };
        let sol = solve_bvp(&l, &b, default_bracket(&b)).unwrap();
        for k in 0..=20 {
            let t = if k == 20 { len } else { len * k as f64 / 20.0 };
            let exact = (x0 * (len - t).sinh() + x1 * t.sinh()) / len.sinh();
            let (x, _) = sol.trajectory.eval(t, Side::Auto).unwrap();
            prop_assert!((x[0] - exact).abs() <= 1e-8, "t = {}: {} vs {}", t, x[0], exact);
        }
    }

    #[test]
    fn riccati_solution_is_symmetric_and_solves_its_equation(b in -1.0f64..1.0, c in -1.0f64..1.0, s in -0.5f64..0.5) {
        let src = format!(
            "(1 + t^2)*dx[1]^2 + dx[2]^2 + {s}*dx[1]*dx[2] + 2*{b}*x[1]*dx[2] + {c}*x[1]^2 + x[2]^2 - {c}*x[1]*x[2]"
        );
        let l = Expr::parse(&src, 2).unwrap();
        let coeffs = extract_quadratic(&l, &plan(2, 0.0, 1.0)).unwrap();
        let sol = integrate_riccati(&coeffs, &Mat::zeros(2, 2), (0.0, 1.0), RICCATI_RTOL).unwrap();
        let stop = sol.blow_up.map_or(sol.t_end, |tb| tb - 0.05).min(1.0 - 1e-3);
        for k in 1..20 {
            let t = stop * k as f64 / 20.0;
            let (q, dq) = sol.q_and_dq(t).unwrap();
            prop_assert!(q.asymmetry() <= 1e-12 * (1.0 + q.max_abs()));
            let h = 1e-5;
            let fd: Vec<f64> = sol.q(t + h).unwrap().as_slice().iter().zip(sol.q(t - h).unwrap().as_slice()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            for (a, b) in fd.iter().zip(dq.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "t = {}: {} vs {}", t, a, b);
            }
        }
    }
}

#[test]
fn riccati_q_makes_the_quadratic_inequality_hold() {
    let t1 = std::f64::consts::FRAC_PI_2;
    let l = Expr::parse("dx^2 - x^2", 1).unwrap();
    let xbar = Path::parse_smooth(0.0, t1, &["cos(t)"]).unwrap();
    let coeffs = extract_quadratic(&l, &plan(1, 0.0, t1)).unwrap();
    let sol = integrate_riccati(&coeffs, &Mat::zeros(1, 1), (0.0, t1), RICCATI_RTOL).unwrap();
    let q = QSpec::riccati(Arc::new(sol));
    proptest!(|(t in 0.0f64..1.5, xi in -10.0f64..10.0, eta in -10.0f64..10.0, theta in 0.0f64..1.0)| {
        let v = lhs_thm42(&l, &xbar, t, Side::Auto, &[xi], &[eta], theta, &q).unwrap();
        let scale = 1.0 + xi * xi + (1.0 + 4.0 * t.tan().powi(2)) * eta * eta;
        prop_assert!(v >= -1e-9 * scale, "LHS = {}", v);
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tier_verdicts_are_nested(c0 in -2.0f64..3.0, c1 in -2.0f64..2.0) {
        let t1 = std::f64::consts::FRAC_PI_2;
        let l = Expr::parse("dx^2 - x^2 + x^4/4", 1).unwrap();
        let xbar = Path::parse_smooth(0.0, t1, &["0"]).unwrap();
        let q = QSpec::parse(0.0, t1, &[vec![format!("{c0} + {c1}*t").as_str()]]).unwrap();
        let v = check_thm41(&l, &xbar, &q, &small_plan(1, 0.0, t1)).unwrap();
        let tier = |name: &str| v.reports.iter().find(|r| r.condition.ends_with(name)).cloned();
        if let (Some(a), Some(s), Some(w)) = (tier(":ABSOLUTE"), tier(":STRONG_LOCAL"), tier(":WEAK_LOCAL")) {
            prop_assert!(!a.holds() || s.holds());
            prop_assert!(!s.holds() || w.holds());
            prop_assert!(!w.fails() || s.fails());
            prop_assert!(!s.fails() || a.fails());
        }
    }
}

#[test]
fn dopri5_is_fifth_order() {
    let run = |h: f64| {
        let opts = OdeOptions::new(1.0, 1.0, h);
        let sol = dopri5(|_, y: &[f64]| Ok(vec![y[1], -y[0]]), 0.0, &[1.0, 0.0], 2.0, opts, |_, _| Ok(true)).unwrap();
        let y = &sol.nodes.last().unwrap().y;
        ((y[0] - 2f64.cos()).abs(), (sol.nodes.len() - 1) as f64)
    };
    let (e1, n1) = run(0.1);
    let (e2, n2) = run(0.025);
    let order = (e1 / e2).ln() / (n2 / n1).ln();
    assert!(order > 4.5 && order < 6.5, "observed order {order} ({e1:.3e} in {n1} steps, {e2:.3e} in {n2})");
}
