//! Dilution feedback laws acting on the abundance coordinates `eta`.

use serde::{Deserialize, Serialize};

use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::model::{GridFn, KernelSet, PopulationState, PREDATOR, PREY};
use crate::transform::{pi_functional, AdjointData};

/// Exponent clamp inside `phi` and `Phi`; far outside any meaningful state.
const ETA_CLAMP: f64 = 700.0;

#[inline]
fn clamp(e: f64) -> f64 {
    e.clamp(-ETA_CLAMP, ETA_CLAMP)
}

/// `phi1 = (1 - e^{-eta1})/lambda1`, `phi2 = lambda2 (e^{eta2} - 1)`.
pub fn phi(eta: [f64; 2], lambda: [f64; 2]) -> [f64; 2] {
    [
        -(-clamp(eta[0])).exp_m1() / lambda[0],
        lambda[1] * clamp(eta[1]).exp_m1(),
    ]
}

/// `Phi1 = (e^{-eta1} - 1 + eta1)/lambda1`, `Phi2 = lambda2 (e^{eta2} - 1 - eta2)`.
pub fn big_phi(eta: [f64; 2], lambda: [f64; 2]) -> [f64; 2] {
    let (e1, e2) = (clamp(eta[0]), clamp(eta[1]));
    [
        ((-e1).exp_m1() + e1) / lambda[0],
        lambda[1] * (e2.exp_m1() - e2),
    ]
}

/// Weighted sum `phi1 + (1 + eps) phi2` shared by both laws.
pub fn varphi(eta: [f64; 2], eps: f64, lambda: [f64; 2]) -> f64 {
    let p = phi(eta, lambda);
    p[0] + (1.0 + eps) * p[1]
}

/// Gains of the unconstrained CLF law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainsA {
    pub eps: f64,
    pub beta: f64,
}

impl GainsA {
    pub fn new(eps: f64, beta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::GainConstraint(format!(
                "control A requires eps > 0 (got eps = {eps})"
            )));
        }
        let beta_min = Self::beta_min(eps);
        if !(beta > beta_min && beta.is_finite()) {
            return Err(Error::GainConstraint(format!(
                "control A requires beta > beta* = eps/(4(1+eps)) = {beta_min:.4} \
                 (got beta = {beta}, eps = {eps})"
            )));
        }
        Ok(Self { eps, beta })
    }

    /// Threshold above which `Q` is positive definite.
    pub fn beta_min(eps: f64) -> f64 {
        eps / (4.0 * (1.0 + eps))
    }
}

/// Gains of the saturated positive-dilution law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainsB {
    pub eps: f64,
    pub beta: f64,
    pub delta: f64,
}

impl GainsB {
    pub fn new(eps: f64, beta: f64, delta: f64, eq: &Equilibrium) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::GainConstraint(format!(
                "control B requires eps > 0 (got eps = {eps})"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::GainConstraint(format!(
                "control B requires beta >= 0 (got beta = {beta})"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::GainConstraint(format!(
                "control B requires delta > 0 (got delta = {delta})"
            )));
        }
        let lhs = eps * eq.lambda[PREDATOR] + beta;
        if !(lhs < eq.u_star) {
            return Err(Error::GainConstraint(format!(
                "control B requires eps*lambda2 + beta < u* \
                 (got {eps}*{:.4} + {beta} = {lhs:.4} >= {:.4})",
                eq.lambda[PREDATOR], eq.u_star
            )));
        }
        Ok(Self { eps, beta, delta })
    }

    /// Guaranteed lower bound `u* - eps lambda2 - beta` of the dilution.
    pub fn dilution_floor(&self, eq: &Equilibrium) -> f64 {
        eq.u_star - self.eps * eq.lambda[PREDATOR] - self.beta
    }

    /// Linear gain `k = beta/delta` of the saturation near the origin.
    pub fn k(&self) -> f64 {
        self.beta / self.delta
    }
}

/// `u = u* + beta (phi1 + (1+eps) phi2)`; may be negative.
pub fn control_a(eta: [f64; 2], gains: &GainsA, eq: &Equilibrium) -> f64 {
    eq.u_star + gains.beta * varphi(eta, gains.eps, eq.lambda)
}

/// `u = u* + eps phi2 + beta varphi / sqrt(delta^2 + min(0, varphi)^2)`.
pub fn control_b(eta: [f64; 2], gains: &GainsB, eq: &Equilibrium) -> f64 {
    let p = phi(eta, eq.lambda);
    let vp = p[0] + (1.0 + gains.eps) * p[1];
    let neg = vp.min(0.0);
    eq.u_star + gains.eps * p[1] + gains.beta * vp / (gains.delta * gains.delta + neg * neg).sqrt()
}

/// Exactly linearising law: `y = eta1 - eta2`, `z = -phi1 - phi2` obey
/// `y' = z`, `z' = -k1 y - k2 z` on the reduced model.
pub fn control_fblin(eta: [f64; 2], k1: f64, k2: f64, eq: &Equilibrium) -> f64 {
    let [l1, l2] = eq.lambda;
    let p = phi(eta, eq.lambda);
    let a = l2 * clamp(eta[1]).exp();
    let b = (-clamp(eta[0])).exp() / l1;
    let num = -k1 * (eta[0] - eta[1]) + k2 * (p[0] + p[1]) + a * p[0] - b * p[1];
    eq.u_star + num / (a + b)
}

/// Control A expressed on population densities through `eta = ln Π[x]`.
pub fn control_in_x(
    state: &PopulationState,
    adj: &[AdjointData; 2],
    eq: &Equilibrium,
    gains: &GainsA,
) -> Result<f64> {
    let eta = [
        pi_functional(&state.x[PREY], &adj[PREY], &eq.grid)?.ln(),
        pi_functional(&state.x[PREDATOR], &adj[PREDATOR], &eq.grid)?.ln(),
    ];
    Ok(control_a(eta, gains, eq))
}

/// Sensor kernels `c_i` and equilibrium outputs `y_i* = ∫ c_i x_i*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub c: [GridFn; 2],
    pub y_star: [f64; 2],
}

impl SensorSpec {
    /// Outputs `y_i = ∫ c_i x_i` of a population state.
    pub fn measure(&self, state: &PopulationState, eq: &Equilibrium) -> [f64; 2] {
        [0, 1].map(|i| eq.grid.trapz_product(&self.c[i], &state.x[i]))
    }
}

/// Closed-form `y_i*(u*)` built from the unscaled profiles `e^{-Λ_i}`.
pub fn sensor_equilibrium(
    c1: GridFn,
    c2: GridFn,
    kernels: &KernelSet,
    eq: &Equilibrium,
) -> Result<SensorSpec> {
    let grid = &eq.grid;
    for c in [&c1, &c2] {
        if c.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.n_nodes(),
                found: c.len(),
            });
        }
        if let Some((index, &value)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NonPositive {
                what: "sensor kernel",
                index,
                value,
            });
        }
        let total = grid.trapz(c);
        if !(total > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sensor kernel",
                value: total,
                reason: "sensor kernel integral must be positive",
            });
        }
    }
    let (z, u) = (eq.zeta, eq.u_star);
    let upper = z[0].min(z[1]);
    if !(u > 0.0 && u < upper) {
        return Err(Error::InfeasibleSetpoint { u_star: u, upper });
    }
    let d = &eq.discount;
    let g = &kernels.interaction;
    let y1 = grid.trapz_product(&c1, &d[PREY])
        / ((z[1] - u) * grid.trapz_product(&g[PREDATOR], &d[PREY]));
    let y2 = (z[0] - u) * grid.trapz_product(&c2, &d[PREDATOR])
        / grid.trapz_product(&g[PREY], &d[PREDATOR]);
    Ok(SensorSpec {
        c: [c1, c2],
        y_star: [y1, y2],
    })
}

/// Output-feedback approximation of control A using `e^{eta_i} ≈ y_i/y_i*`.
pub fn control_measured(
    y: [f64; 2],
    sensors: &SensorSpec,
    gains: &GainsA,
    eq: &Equilibrium,
) -> Result<f64> {
    for &v in &y {
        if !(v > 0.0) {
            return Err(Error::Inadmissible {
                what: "sensor output",
                value: v,
            });
        }
    }
    let [l1, l2] = eq.lambda;
    let [y1s, y2s] = sensors.y_star;
    Ok(eq.u_star
        + gains.beta * ((1.0 - y1s / y[0]) / l1 - (1.0 + gains.eps) * l2 * (1.0 - y[1] / y2s)))
}

/// Feedback law selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    OpenLoop,
    A(GainsA),
    B(GainsB),
    FeedbackLinearizing { k1: f64, k2: f64 },
    Measured { gains: GainsA, sensors: SensorSpec },
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OpenLoop => "open_loop",
            Self::A(_) => "A",
            Self::B(_) => "B",
            Self::FeedbackLinearizing { .. } => "feedback_linearizing",
            Self::Measured { .. } => "measured",
        }
    }

    pub fn needs_measurement(&self) -> bool {
        matches!(self, Self::Measured { .. })
    }

    /// Evaluates the law; `y` is required only by the measured variant.
    pub fn evaluate(&self, eta: [f64; 2], y: Option<[f64; 2]>, eq: &Equilibrium) -> Result<f64> {
        Ok(match self {
            Self::OpenLoop => eq.u_star,
            Self::A(g) => control_a(eta, g, eq),
            Self::B(g) => control_b(eta, g, eq),
            Self::FeedbackLinearizing { k1, k2 } => control_fblin(eta, *k1, *k2, eq),
            Self::Measured { gains, sensors } => {
                let y = y.ok_or(Error::MissingSeries("sensor output"))?;
                control_measured(y, sensors, gains, eq)?
            }
        })
    }

    /// `(eps, beta)` of the CLF-based laws.
    pub fn eps_beta(&self) -> Option<(f64, f64)> {
        match self {
            Self::A(g) | Self::Measured { gains: g, .. } => Some((g.eps, g.beta)),
            Self::B(g) => Some((g.eps, g.beta)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::compute_equilibrium;
    use crate::model::{build_kernels, AgeGrid, KernelShape};
    use crate::transform::{compute_pi0, to_transformed};

    fn setup(n: usize) -> (KernelSet, Equilibrium) {
        let grid = AgeGrid::new(1.0, n).unwrap();
        let k = build_kernels([KernelShape::REFERENCE; 2], &grid).unwrap();
        let eq = compute_equilibrium(&k, 0.15, &grid).unwrap();
        (k, eq)
    }

    const REF_L: [f64; 2] = [0.98, 1.02];

    #[test]
    fn phi_values() {
        assert_eq!(phi([0.0, 0.0], REF_L), [0.0, 0.0]);
        let p = phi([0.0, -1.41], REF_L);
        assert!((p[1] - 1.02 * ((-1.41f64).exp() - 1.0)).abs() < 1e-15);
        assert!((p[1] + 0.7710).abs() < 1e-4);
        assert!((phi([20.0, 0.0], REF_L)[0] - 1.0 / 0.98).abs() < 1e-8);
        assert!(phi([1e6, -1e6], REF_L).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn big_phi_values() {
        assert_eq!(big_phi([0.0, 0.0], REF_L), [0.0, 0.0]);
        let b = big_phi([1.0, 1.0], REF_L);
        assert!((b[0] - (-1.0f64).exp() / 0.98).abs() < 1e-15);
        assert!((b[0] - 0.375387).abs() < 1e-6);
        assert!((b[1] - 1.02 * (std::f64::consts::E - 2.0)).abs() < 1e-15);
        assert!((b[1] - 0.73265).abs() < 1e-5);
    }

    #[test]
    fn phi_and_big_phi_relations() {
        for j in 0..=1000 {
            let r = -5.0 + 0.01 * j as f64;
            let p = phi([r, r], REF_L);
            let b = big_phi([r, r], REF_L);
            assert!((b[0] - (-p[0] + r / REF_L[0])).abs() < 1e-12);
            assert!((b[1] - (p[1] - REF_L[1] * r)).abs() < 1e-12);
            assert!(b[0] >= 0.0 && b[1] >= 0.0);
        }
    }

    #[test]
    fn gains_a_validation() {
        assert!(GainsA::new(0.2, 0.6).is_ok());
        let err = GainsA::new(0.2, 0.01).unwrap_err().to_string();
        assert!(err.contains("0.0417"), "{err}");
        assert!(GainsA::new(0.0, 1.0).is_err());
    }

    #[test]
    fn gains_b_validation() {
        let (_, eq) = setup(100);
        let g = GainsB::new(0.01, 0.13, 0.2, &eq).unwrap();
        assert!(g.dilution_floor(&eq) > 0.0);
        assert!(GainsB::new(0.01, 0.2, 0.2, &eq).is_err());
        assert!(GainsB::new(0.01, 0.1, 0.0, &eq).is_err());
    }

    #[test]
    fn control_a_reference_values() {
        let (_, eq) = setup(400);
        let g = GainsA::new(0.2, 0.6).unwrap();
        assert_eq!(control_a([0.0, 0.0], &g, &eq), 0.15);
        // hand evaluation with lambda = (0.98, 1.02)
        let hand = |e1: f64, e2: f64| {
            let p1 = (1.0 - (-e1).exp()) / 0.98;
            let p2 = 1.02 * (e2.exp() - 1.0);
            0.15 + 0.6 * (p1 + 1.2 * p2)
        };
        assert!((hand(1.57, -1.41) - 0.080).abs() < 1e-3);
        assert!((hand(-1.41, 1.57) - 1.050).abs() < 5e-3);
        assert!((control_a([1.57, -1.41], &g, &eq) - 0.080).abs() < 2e-3);
        assert!((control_a([-1.41, 1.57], &g, &eq) - 1.050).abs() < 1e-2);
    }

    #[test]
    fn control_b_reference_values() {
        let (_, eq) = setup(400);
        let g = GainsB::new(0.01, 0.13, 0.2, &eq).unwrap();
        assert_eq!(control_b([0.0, 0.0], &g, &eq), 0.15);
        assert!((0.15f64 - 0.01 * 1.02 - 0.13 - 0.0098).abs() < 1e-12);
        let p1 = (1.0 - (-1.0f64).exp()) / 0.98;
        assert!((p1 - 0.6451).abs() < 1e-4);
        assert!((0.15 + 0.13 * p1 / 0.2 - 0.5693).abs() < 1e-4);
        assert!((control_b([1.0, 0.0], &g, &eq) - 0.5693).abs() < 3e-3);
    }

    #[test]
    fn control_b_linearisation_matches_k() {
        let (_, eq) = setup(200);
        let g = GainsB::new(0.01, 0.13, 0.2, &eq).unwrap();
        let h = 1e-6;
        for (k, d) in [(0usize, 1.0 / eq.lambda[0]), (1, eq.lambda[1])] {
            let mut ep = [0.0; 2];
            let mut em = [0.0; 2];
            ep[k] = h;
            em[k] = -h;
            let fd = (control_b(ep, &g, &eq) - control_b(em, &g, &eq)) / (2.0 * h);
            let weight = if k == 0 { 1.0 } else { 1.0 + g.eps };
            let want = if k == 1 { g.eps * d } else { 0.0 } + g.k() * weight * d;
            assert!((fd - want).abs() < 1e-6, "component {k}: {fd} vs {want}");
        }
    }

    #[test]
    fn fblin_at_origin_and_independent_formula() {
        let (_, eq) = setup(200);
        assert!((control_fblin([0.0, 0.0], 1.0, 2.0, &eq) - eq.u_star).abs() < 1e-15);
        // second transcription: u - u* = (z' + k1 y + k2 z + ...) solved from
        // z' = -k1 y - k2 z with z' = (u - u*) D + b phi2 - a phi1
        let eta = [0.1f64, 0.1];
        let [l1, l2] = eq.lambda;
        let p1 = (1.0 - (-eta[0]).exp()) / l1;
        let p2 = l2 * (eta[1].exp() - 1.0);
        let a = l2 * eta[1].exp();
        let b = (-eta[0]).exp() / l1;
        let y = eta[0] - eta[1];
        let z = -p1 - p2;
        let want = eq.u_star + (-y - 2.0 * z - b * p2 + a * p1) / (a + b);
        assert!((control_fblin(eta, 1.0, 2.0, &eq) - want).abs() < 1e-14);
    }

    #[test]
    fn control_in_x_composes_with_pi() {
        let (k, eq) = setup(400);
        let adj = compute_pi0(&eq, &k);
        let g = GainsA::new(0.2, 0.6).unwrap();
        let grid = eq.grid;
        let star = PopulationState::new(0.0, eq.x_star.clone(), &grid).unwrap();
        assert!((control_in_x(&star, &adj, &eq, &g).unwrap() - eq.u_star).abs() < 1e-12);

        let x1 = GridFn::from_fn(&grid, |a| (1.0 + 2.0 * a).exp()).product(&eq.x_star[0]);
        let x2 = GridFn::from_fn(&grid, |a| (-1.0 - 2.0 * a).exp()).product(&eq.x_star[1]);
        let fq = PopulationState::new(0.0, [x1, x2], &grid).unwrap();
        let eta = to_transformed(&fq, &eq, &adj).unwrap().eta;
        assert!(
            (control_in_x(&fq, &adj, &eq, &g).unwrap() - control_a(eta, &g, &eq)).abs() < 1e-15
        );

        let twice = PopulationState::new(
            0.0,
            [eq.x_star[0].scaled(2.0), eq.x_star[1].scaled(2.0)],
            &grid,
        )
        .unwrap();
        let ln2 = 2f64.ln();
        assert!(
            (control_in_x(&twice, &adj, &eq, &g).unwrap() - control_a([ln2, ln2], &g, &eq)).abs()
                < 1e-12
        );
    }

    #[test]
    fn sensor_closed_forms() {
        let (k, eq) = setup(400);
        // c1 = g2 collapses y1* to 1/(zeta2 - u*) = lambda1
        let s = sensor_equilibrium(k.interaction[1].clone(), k.interaction[0].clone(), &k, &eq)
            .unwrap();
        assert!((s.y_star[0] - eq.lambda[0]).abs() < 1e-12);
        assert!((s.y_star[0] - 1.0 / (eq.zeta[1] - eq.u_star)).abs() < 1e-12);
        // c = k reproduces the newborn densities
        let s = sensor_equilibrium(k.birth[0].clone(), k.birth[1].clone(), &k, &eq).unwrap();
        for i in 0..2 {
            assert!((s.y_star[i] - eq.x0_star[i]).abs() < 1e-9 * eq.x0_star[i]);
        }
    }

    #[test]
    fn measured_law_limits() {
        let (k, eq) = setup(200);
        let g = GainsA::new(0.2, 0.6).unwrap();
        let s = sensor_equilibrium(k.birth[0].clone(), k.birth[1].clone(), &k, &eq).unwrap();
        assert!((control_measured(s.y_star, &s, &g, &eq).unwrap() - eq.u_star).abs() < 1e-15);
        let far = control_measured([1e15, s.y_star[1]], &s, &g, &eq).unwrap();
        assert!((far - (eq.u_star + g.beta / eq.lambda[0])).abs() < 1e-12);
        assert!(control_measured([0.0, 1.0], &s, &g, &eq).is_err());
    }

    #[test]
    fn measured_law_exact_without_shape_deviation() {
        let (k, eq) = setup(200);
        let g = GainsA::new(0.2, 0.6).unwrap();
        let grid = eq.grid;
        let c1 = GridFn::from_fn(&grid, |a| 1.0 + a * a);
        let c2 = GridFn::from_fn(&grid, |a| (2.0 * a).cos() + 1.5);
        let s = sensor_equilibrium(c1, c2, &k, &eq).unwrap();
        let eta = [0.3f64, -0.4];
        let state = PopulationState::new(
            0.0,
            [
                eq.x_star[0].scaled(eta[0].exp()),
                eq.x_star[1].scaled(eta[1].exp()),
            ],
            &grid,
        )
        .unwrap();
        let y = s.measure(&state, &eq);
        let u = control_measured(y, &s, &g, &eq).unwrap();
        assert!((u - control_a(eta, &g, &eq)).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn control_a_monotone(e1 in -5.0f64..5.0, e2 in -5.0f64..5.0, d in 0.0f64..1.0) {
                let (_, eq) = setup(50);
                let g = GainsA::new(0.2, 0.6).unwrap();
                let u = control_a([e1, e2], &g, &eq);
                prop_assert!(control_a([e1 + d, e2], &g, &eq) >= u);
                prop_assert!(control_a([e1, e2 + d], &g, &eq) >= u);
            }

            #[test]
            fn control_b_positive(
                e1 in -10.0f64..10.0, e2 in -10.0f64..10.0,
                eps in 0.001f64..0.1, frac in 0.0f64..0.99, delta in 0.001f64..2.0,
            ) {
                let (_, eq) = setup(50);
                let beta = frac * (eq.u_star - eps * eq.lambda[1]);
                prop_assume!(beta >= 0.0);
                let g = GainsB::new(eps, beta, delta, &eq).unwrap();
                let u = control_b([e1, e2], &g, &eq);
                prop_assert!(u > 0.0);
                prop_assert!(u >= g.dilution_floor(&eq) - 1e-12);
            }

            #[test]
            fn sensor_routes_agree(w in prop::collection::vec(0.0f64..3.0, 4)) {
                let (k, eq) = setup(100);
                let grid = eq.grid;
                let c1 = GridFn::from_fn(&grid, |a| w[0] + w[1] * a + 1e-3);
                let c2 = GridFn::from_fn(&grid, |a| w[2] * (-a).exp() + w[3] * a * a + 1e-3);
                let s = sensor_equilibrium(c1.clone(), c2.clone(), &k, &eq).unwrap();
                let direct = [grid.trapz_product(&c1, &eq.x_star[0]), grid.trapz_product(&c2, &eq.x_star[1])];
                for i in 0..2 {
                    prop_assert!((s.y_star[i] - direct[i]).abs() < 1e-8 * direct[i]);
                }
            }
        }
    }
}
