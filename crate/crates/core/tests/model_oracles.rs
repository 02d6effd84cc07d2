//! Cross-module checks against values computed here from scratch.

use predprey_core::controllers::{control_a, GainsA, GainsB};
use predprey_core::lyapunov::{
    h_fn, lambda_min_q, q_matrix, roa_estimate, sigma_fits, v1, LyapConfig,
};
use predprey_core::simulate::{
    cross_validate, ic_from_spec, simulate_direct, simulate_reduced, simulate_transformed,
};
use predprey_core::transform::{reconstruct, to_transformed};
use predprey_core::*;
use proptest::prelude::*;

// Reference kernels in closed form.
const MU: f64 = 0.5;
const KB: f64 = 3.0;
const GB: f64 = 0.4;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + j as f64 * h);
    }
    s * h / 3.0
}

/// Exponent solving `∫ k̄ e^{-a} exp(-μ̄(e^a - 1) - ζ a) da = 1` with fine
/// Simpson quadrature and plain bisection.
fn zeta_oracle() -> f64 {
    let f = |z: f64| {
        simpson(
            |a| KB * (-a).exp() * (-MU * a.exp_m1() - z * a).exp(),
            0.0,
            1.0,
            20_000,
        ) - 1.0
    };
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if f(m) > 0.0 {
            lo = m
        } else {
            hi = m
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exponent_and_steady_state_match_continuous_oracle() {
    let z = zeta_oracle();
    let p = Plant::reference(400, 0.15).unwrap();
    // trapezoid error is second order; the extrapolated value sits on the oracle
    let fine = Plant::reference(800, 0.15).unwrap().eq.zeta[0];
    assert!((p.eq.zeta[0] - z).abs() < 2e-5, "{} vs {z}", p.eq.zeta[0]);
    assert!(((4.0 * fine - p.eq.zeta[0]) / 3.0 - z).abs() < 1e-7);

    // lambda1 = ∫ g2 x1* and lambda2 = ∫ g1 x2*, with x_i* = x_i*(0) e^{-μ̄(e^a-1) - ζ a}
    let shape = |a: f64| (-MU * a.exp_m1() - z * a).exp();
    let g = |a: f64| GB * (a - a * a);
    let int_gs = simpson(|a| g(a) * shape(a), 0.0, 1.0, 20_000);
    let (l1, l2) = (z - 0.15, z - 0.15);
    // λ2 = ζ1 - u*, 1/λ1 = ζ2 - u*
    let lambda = [1.0 / l1, l2];
    assert!((p.eq.lambda[0] - lambda[0]).abs() < 1e-4);
    assert!((p.eq.lambda[1] - lambda[1]).abs() < 1e-4);
    let x10 = lambda[0] / int_gs;
    let x20 = lambda[1] / int_gs;
    assert!((p.eq.x0_star[0] - x10).abs() < 1e-3 * x10);
    assert!((p.eq.x0_star[1] - x20).abs() < 1e-3 * x20);
}

#[test]
fn h_matches_series() {
    // h(p) = S(2p) - 2 S(p), S(x) = Σ x^k/(k k!)
    let s = |x: f64| {
        let (mut term, mut sum) = (1.0, 0.0);
        for k in 1..80 {
            term *= x / k as f64;
            sum += term / k as f64;
        }
        sum
    };
    for p in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let want = s(2.0 * p) - 2.0 * s(p);
        assert!((h_fn(p) - want).abs() < 1e-8 * want.max(1.0), "p = {p}");
    }
    assert!((h_fn(1.0) - 1.048).abs() < 2e-3);
}

#[test]
fn equilibrium_rests_under_both_solvers() {
    let p = Plant::reference(100, 0.15).unwrap();
    let ctrl = ControllerSpec::A(GainsA::new(0.2, 0.6).unwrap());
    let cfg = SimConfig::new(3.0, ctrl, IcSpec::new(IcShape::Equilibrium));
    for tr in [
        simulate_direct(&p, &cfg).unwrap(),
        simulate_transformed(&p, &cfg).unwrap(),
    ] {
        assert!(tr.eta_norm().all(|n| n < 1e-10));
        assert!(tr.u.iter().all(|u| (u - 0.15).abs() < 1e-10));
    }
}

#[test]
fn solvers_agree_under_feedback() {
    let p = Plant::reference(200, 0.15).unwrap();
    let ctrl = ControllerSpec::A(GainsA::new(0.2, 0.6).unwrap());
    let mut cfg = SimConfig::new(5.0, ctrl, IcSpec::new(IcShape::Sq));
    cfg.record_every = 50;
    assert!(cross_validate(&p, &cfg).unwrap() < 1e-2);
}

#[test]
fn control_b_stays_above_floor_from_both_quadrants() {
    let p = Plant::reference(200, 0.15).unwrap();
    let g = GainsB::new(0.01, 0.13, 0.2, &p.eq).unwrap();
    for shape in [IcShape::Fq, IcShape::Sq] {
        let tr = simulate_direct(
            &p,
            &SimConfig::new(10.0, ControllerSpec::B(g), IcSpec::new(shape)),
        )
        .unwrap();
        assert!(tr.min_u() >= g.dilution_floor(&p.eq));
    }
}

#[test]
fn lyapunov_decrease_on_reduced_model() {
    let p = Plant::reference(50, 0.15).unwrap();
    let g = GainsA::new(0.2, 0.6).unwrap();
    let lm = lambda_min_q(0.2, 0.6).unwrap();
    let dt = 1e-3;
    let tr = simulate_reduced(&p.eq, &ControllerSpec::A(g), [0.4, -0.3], 5.0, dt).unwrap();
    for w in tr.eta.windows(2) {
        let rate = (v1(w[1], 0.2, &p.eq) - v1(w[0], 0.2, &p.eq)) / dt;
        let ph = controllers::phi(w[0], p.eq.lambda);
        assert!(rate <= -lm * (ph[0] * ph[0] + ph[1] * ph[1]) + 10.0 * dt);
    }
}

#[test]
fn roa_grows_with_gamma() {
    let p = Plant::reference(200, 0.15).unwrap();
    let fits = sigma_fits(&p.eq).unwrap();
    let g = GainsA::new(0.2, 0.6).unwrap();
    let base = LyapConfig::for_control_a(&g, &p.eq, &fits).unwrap();
    let mut big = base;
    big.gamma = base.gamma.map(|v| 10.0 * v);
    let c0 = roa_estimate(&base, &p.eq).unwrap().c_star;
    let c1 = roa_estimate(&big, &p.eq).unwrap().c_star;
    assert!(c1 >= c0 - 1e-12);
}

#[test]
fn control_a_formula_against_direct_evaluation() {
    let p = Plant::reference(50, 0.15).unwrap();
    let g = GainsA::new(0.2, 0.6).unwrap();
    let [l1, l2] = p.eq.lambda;
    for eta in [[0.3f64, -0.2], [-1.0, 0.5], [2.0, 2.0]] {
        let want = 0.15 + 0.6 * ((1.0 - (-eta[0]).exp()) / l1 + 1.2 * l2 * (eta[1].exp() - 1.0));
        assert!((control_a(eta, &g, &p.eq) - want).abs() < 1e-12);
    }
    let q = q_matrix(0.2, 0.6);
    assert!((q[0][1] - (2.0 * 0.6 * 1.2 - 0.2) / 2.0).abs() < 1e-15);
}

#[test]
fn config_roundtrips_through_json() {
    let p = Plant::reference(20, 0.15).unwrap();
    let cfg = SimConfig::new(
        4.0,
        ControllerSpec::B(GainsB::new(0.01, 0.13, 0.2, &p.eq).unwrap()),
        IcSpec::literal(IcShape::Sq),
    );
    let text = serde_json::to_string(&cfg).unwrap();
    let back: SimConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn roundtrip_for_random_multipliers(s1 in -1.5f64..1.5, r1 in -2.0f64..2.0, s2 in -1.5f64..1.5, r2 in -2.0f64..2.0) {
        let p = Plant::reference(60, 0.15).unwrap();
        let m = [
            simulate::ExpAffine { log_scale: s1, slope: r1 },
            simulate::ExpAffine { log_scale: s2, slope: r2 },
        ];
        let x = ic_from_spec(&IcSpec::new(IcShape::Multipliers { m }), &p).unwrap();
        let ts = to_transformed(&x, &p.eq, &p.adj).unwrap();
        let back = reconstruct(&ts, &p.eq).unwrap();
        for i in 0..2 {
            for (a, b) in x.x[i].iter().zip(back.x[i].iter()) {
                prop_assert!(((a - b) / a).abs() < 1e-12);
            }
            prop_assert!(ts.psi[i].min() > -1.0);
        }
    }

    #[test]
    fn open_loop_conserves_v0_on_reduced_model(e1 in -1.0f64..1.0, e2 in -1.0f64..1.0) {
        let p = Plant::reference(20, 0.15).unwrap();
        let tr = simulate_reduced(&p.eq, &ControllerSpec::OpenLoop, [e1, e2], 5.0, 1e-3).unwrap();
        let v = &tr.v0;
        let drift = v.iter().map(|x| (x - v[0]).abs()).fold(0.0, f64::max);
        prop_assert!(drift <= 1e-5 * v[0].max(1e-3));
    }
}
