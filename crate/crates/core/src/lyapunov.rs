//! Lyapunov functions, the birth-kernel condition, constraint regions,
//! level-set region-of-attraction estimates and linearisations.

use serde::{Deserialize, Serialize};

use crate::controllers::{big_phi, phi, varphi, ControllerSpec, GainsA, GainsB};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::model::{tail_integral, AgeGrid, GridFn, PREDATOR, PREY};
use crate::simulate::{reduced_rhs, Trajectory};
use crate::transform::HistoryBuffer;

/// `V0 = Phi1 + Phi2`, conserved by the open-loop reduced model.
pub fn v0(eta: [f64; 2], eq: &Equilibrium) -> f64 {
    let b = big_phi(eta, eq.lambda);
    b[0] + b[1]
}

/// `V1 = Phi1 + (1 + eps) Phi2`.
pub fn v1(eta: [f64; 2], eps: f64, eq: &Equilibrium) -> f64 {
    v1_with(eta, eps, eq.lambda)
}

fn v1_with(eta: [f64; 2], eps: f64, lambda: [f64; 2]) -> f64 {
    let b = big_phi(eta, lambda);
    b[0] + (1.0 + eps) * b[1]
}

/// Matrix with `dV1/dt = -[phi1 phi2] Q [phi1 phi2]^T` under control A.
///
/// The off-diagonal is `(2 beta (1+eps) - eps)/2`: expanding
/// `dV1/dt = -beta varphi^2 + eps phi1 phi2` fixes this sign. Flipping it
/// leaves the eigenvalues unchanged.
pub fn q_matrix(eps: f64, beta: f64) -> Mat2 {
    let off = 0.5 * (2.0 * beta * (1.0 + eps) - eps);
    [[beta, off], [off, beta * (1.0 + eps).powi(2)]]
}

/// Closed-form smaller eigenvalue of `Q` without validation.
pub fn lambda_min_q_closed_form(eps: f64, beta: f64) -> f64 {
    let s = 1.0 + (1.0 + eps).powi(2);
    let c = 4.0 * (1.0 + eps) * beta - eps;
    0.5 * eps * c / (beta * s + (beta * beta * s * s - eps * c).sqrt())
}

pub fn lambda_min_q(eps: f64, beta: f64) -> Result<f64> {
    GainsA::new(eps, beta)?;
    Ok(lambda_min_q_closed_form(eps, beta))
}

/// `gamma∘ = (1 + eps) / (2 lambda_min(Q))`.
pub fn gamma_circ(eps: f64, beta: f64) -> Result<f64> {
    Ok((1.0 + eps) / (2.0 * lambda_min_q(eps, beta)?))
}

/// Beyond this argument `h` exceeds the range of `f64`.
const H_OVERFLOW: f64 = 350.0;

/// `h(p) = ∫_0^p (e^z - 1)^2 / z dz`.
pub fn h_fn(p: f64) -> f64 {
    if !(p > 0.0) {
        return 0.0;
    }
    if p > H_OVERFLOW {
        return f64::INFINITY;
    }
    adaptive_simpson(h_integrand, 0.0, p, 1e-9)
}

/// `h'(p)`, also the integrand; set to zero at the removable point.
pub fn h_integrand(z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        let e = z.exp_m1();
        e * e / z
    }
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // absolute tolerance, floored relative to the panel value so that
        // large arguments do not recurse to full depth
        if depth == 0 || delta.abs() <= 15.0 * tol.max(1e-13 * whole.abs()) {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `G = max_a |psi(-a)| e^{sigma (A - a)} / (1 + min(0, min psi))`.
pub fn g_fn(psi: &HistoryBuffer, sigma: f64, grid: &AgeGrid) -> Result<f64> {
    psi.check_admissible()?;
    let a_max = grid.max_age();
    let num = psi
        .samples()
        .iter()
        .enumerate()
        .map(|(j, v)| v.abs() * (sigma * (a_max - grid.node(j))).exp())
        .fold(0.0, f64::max);
    Ok(num / (1.0 + psi.min().min(0.0)))
}

/// Constants certifying the birth-kernel condition for one species.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaFit {
    pub kappa: f64,
    /// Largest `sigma` in (0, 50] with the weighted integral below one.
    pub sigma: f64,
    /// Unweighted integral at `kappa`.
    pub j_min: f64,
    /// `1 / ∫ a k̃`.
    pub z: f64,
    /// Weighted integral at `sigma`.
    pub weighted: f64,
}

const SIGMA_MAX: f64 = 50.0;

/// `∫ |k̃(a) - z kappa T(a)| e^{sigma a} da`.
pub fn assumption_integral(
    ktilde: &GridFn,
    tail: &GridFn,
    z: f64,
    kappa: f64,
    sigma: f64,
    grid: &AgeGrid,
) -> f64 {
    let f: Vec<f64> = (0..grid.n_nodes())
        .map(|j| (ktilde[j] - z * kappa * tail[j]).abs() * (sigma * grid.node(j)).exp())
        .collect();
    grid.trapz(&f)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

pub fn find_sigma(ktilde: &GridFn, grid: &AgeGrid) -> Result<SigmaFit> {
    let moment: f64 = (0..grid.n_nodes())
        .map(|j| grid.weight(j) * grid.node(j) * ktilde[j])
        .sum();
    if !(moment > 0.0) {
        return Err(Error::InvalidParameter {
            name: "discounted birth kernel",
            value: moment,
            reason: "first moment must be positive",
        });
    }
    let z = 1.0 / moment;
    let tail = tail_integral(ktilde, grid);
    let j = |log_kappa: f64| assumption_integral(ktilde, &tail, z, log_kappa.exp(), 0.0, grid);

    // multi-start golden section in log kappa over [1e-3, 1e3]
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    let starts = 24;
    let width = (hi - lo) / starts as f64;
    let (log_kappa, j_min) = (0..starts)
        .map(|s| {
            let a = lo + s as f64 * width;
            golden_min(&j, a, a + width, 80)
        })
        .fold(
            (0.0, f64::INFINITY),
            |best, c| if c.1 < best.1 { c } else { best },
        );
    if !(j_min < 1.0) {
        return Err(Error::AssumptionUnverified { j_min });
    }
    let kappa = log_kappa.exp();
    let w = |s: f64| assumption_integral(ktilde, &tail, z, kappa, s, grid);
    let (sigma, weighted) = if w(SIGMA_MAX) < 1.0 {
        (SIGMA_MAX, w(SIGMA_MAX))
    } else {
        let (mut a, mut b) = (0.0, SIGMA_MAX);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if w(m) < 1.0 {
                a = m
            } else {
                b = m
            }
            if b - a < 1e-14 {
                break;
            }
        }
        (a, w(a))
    };
    Ok(SigmaFit {
        kappa,
        sigma,
        j_min,
        z,
        weighted,
    })
}

/// Fraction of the certified `sigma` used in the G-functionals.
pub const SIGMA_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LyapMode {
    /// Unconstrained CLF law with region `D`.
    RegionD,
    /// Saturated law with region `D̄` and analysis constant `varpi`.
    RegionDbar { delta: f64, varpi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapConfig {
    pub mode: LyapMode,
    pub eps: f64,
    pub beta: f64,
    pub gamma: [f64; 2],
    pub sigma: [f64; 2],
    pub kappa: [f64; 2],
}

impl LyapConfig {
    /// Defaults for control A: gammas at twice their lower bounds.
    pub fn for_control_a(gains: &GainsA, eq: &Equilibrium, fits: &[SigmaFit; 2]) -> Result<Self> {
        let mut cfg = Self {
            mode: LyapMode::RegionD,
            eps: gains.eps,
            beta: gains.beta,
            gamma: [0.0; 2],
            sigma: fits.map(|f| SIGMA_SAFETY * f.sigma),
            kappa: fits.map(|f| f.kappa),
        };
        cfg.gamma = cfg.gamma_bounds(eq)?.map(|g| 2.0 * g);
        Ok(cfg)
    }

    /// Defaults for control B: `varpi = beta/(2 delta)`, gammas at twice
    /// their lower bounds.
    pub fn for_control_b(gains: &GainsB, eq: &Equilibrium, fits: &[SigmaFit; 2]) -> Result<Self> {
        let mut cfg = Self {
            mode: LyapMode::RegionDbar {
                delta: gains.delta,
                varpi: gains.beta / (2.0 * gains.delta),
            },
            eps: gains.eps,
            beta: gains.beta,
            gamma: [0.0; 2],
            sigma: fits.map(|f| SIGMA_SAFETY * f.sigma),
            kappa: fits.map(|f| f.kappa),
        };
        cfg.gamma = cfg.gamma_bounds(eq)?.map(|g| 2.0 * g);
        Ok(cfg)
    }

    /// Default configuration matching a controller, if it has one.
    pub fn for_controller(
        ctrl: &ControllerSpec,
        eq: &Equilibrium,
        fits: &[SigmaFit; 2],
    ) -> Result<Option<Self>> {
        Ok(match ctrl {
            ControllerSpec::A(g) | ControllerSpec::Measured { gains: g, .. } => {
                Some(Self::for_control_a(g, eq, fits)?)
            }
            ControllerSpec::B(g) => Some(Self::for_control_b(g, eq, fits)?),
            _ => None,
        })
    }

    /// Strict lower bounds on `(gamma1, gamma2)`.
    pub fn gamma_bounds(&self, eq: &Equilibrium) -> Result<[f64; 2]> {
        let [l1, l2] = eq.lambda;
        match self.mode {
            LyapMode::RegionD => {
                let gc = gamma_circ(self.eps, self.beta)?;
                Ok([gc / (l1 * l1), l2 * l2 * gc])
            }
            LyapMode::RegionDbar { delta, varpi } => {
                self.check_varpi(delta, varpi)?;
                let r = 2.0 * (1.0 + self.eps) / self.eps;
                Ok([r / (l1 * l1), r * l2 * l2 + 1.0 / varpi])
            }
        }
    }

    fn check_varpi(&self, delta: f64, varpi: f64) -> Result<()> {
        if !(self.eps > 0.0 && delta > 0.0 && self.beta > 0.0) {
            return Err(Error::LyapunovConfig(format!(
                "region D̄ needs eps > 0, beta > 0, delta > 0 (got {}, {}, {delta})",
                self.eps, self.beta
            )));
        }
        let hi = self.beta / delta;
        if !(varpi > 0.0 && varpi < hi) {
            return Err(Error::LyapunovConfig(format!(
                "varpi must satisfy 0 < varpi < beta/delta = {hi:.6} (got {varpi})"
            )));
        }
        Ok(())
    }

    pub fn validate(&self, eq: &Equilibrium) -> Result<()> {
        let lb = self.gamma_bounds(eq)?;
        for i in 0..2 {
            if !(self.gamma[i] > lb[i]) {
                return Err(Error::LyapunovConfig(format!(
                    "gamma{} = {} must exceed its lower bound {:.6}",
                    i + 1,
                    self.gamma[i],
                    lb[i]
                )));
            }
            if !(self.sigma[i] > 0.0) {
                return Err(Error::LyapunovConfig(format!(
                    "sigma{} must be positive (got {})",
                    i + 1,
                    self.sigma[i]
                )));
            }
        }
        Ok(())
    }

    /// Magnitude `theta` of the lower bound `varphi > -theta` (the u > 0 curve
    /// for `D`, the saturation bound for `D̄`).
    pub fn varphi_floor(&self, eq: &Equilibrium) -> f64 {
        match self.mode {
            LyapMode::RegionD => eq.u_star / self.beta,
            LyapMode::RegionDbar { delta, varpi } => (self.beta * self.beta / (varpi * varpi)
                - delta * delta)
                .max(0.0)
                .sqrt(),
        }
    }
}

/// `(H1, H2)` bounding the admissible `eta` half planes.
pub fn bounds_h(cfg: &LyapConfig, eq: &Equilibrium) -> Result<[f64; 2]> {
    cfg.validate(eq)?;
    let [l1, l2] = eq.lambda;
    let [g1, g2] = cfg.gamma;
    Ok(match cfg.mode {
        LyapMode::RegionD => {
            let gc = gamma_circ(cfg.eps, cfg.beta)?;
            [(l1 * (g1 / gc).sqrt()).ln(), ((g2 / gc).sqrt() / l2).ln()]
        }
        LyapMode::RegionDbar { varpi, .. } => {
            let r = cfg.eps / (2.0 * (1.0 + cfg.eps));
            [
                (l1 * (r * g1).sqrt()).ln(),
                ((r * (g2 - 1.0 / varpi)).sqrt() / l2).ln(),
            ]
        }
    })
}

/// Membership in the constraint region of the configured mode. Depends on
/// `eta` only.
pub fn in_region(eta: [f64; 2], h: [f64; 2], cfg: &LyapConfig, eq: &Equilibrium) -> bool {
    eta[0] >= -h[0] && eta[1] <= h[1] && varphi(eta, cfg.eps, eq.lambda) > -cfg.varphi_floor(eq)
}

/// Membership in `D`: half planes and positive control A.
pub fn region_d(eta: [f64; 2], cfg: &LyapConfig, eq: &Equilibrium) -> Result<bool> {
    let h = bounds_h(cfg, eq)?;
    Ok(eta[0] >= -h[0]
        && eta[1] <= h[1]
        && eq.u_star + cfg.beta * varphi(eta, cfg.eps, eq.lambda) > 0.0)
}

/// Membership in `D̄`.
pub fn region_dbar(eta: [f64; 2], cfg: &LyapConfig, eq: &Equilibrium) -> Result<bool> {
    if !matches!(cfg.mode, LyapMode::RegionDbar { .. }) {
        return Err(Error::LyapunovConfig(
            "region D̄ needs the control B configuration".into(),
        ));
    }
    let h = bounds_h(cfg, eq)?;
    Ok(in_region(eta, h, cfg, eq))
}

/// `eta2` on the curve `varphi = -theta`, defined for `eta1` below the pole.
pub fn boundary_curve_eta2(eta1: f64, cfg: &LyapConfig, eq: &Equilibrium) -> Option<f64> {
    let [l1, l2] = eq.lambda;
    let theta = cfg.varphi_floor(eq);
    let arg = 1.0 + ((-eta1).exp() - 1.0 - l1 * theta) / ((1.0 + cfg.eps) * l1 * l2);
    (arg > 0.0).then(|| arg.ln())
}

/// Supremum of `eta1` along the boundary curve (infinite when it has no pole).
pub fn boundary_curve_pole(cfg: &LyapConfig, eq: &Equilibrium) -> f64 {
    let [l1, l2] = eq.lambda;
    let s = 1.0 + l1 * cfg.varphi_floor(eq) - (1.0 + cfg.eps) * l1 * l2;
    if s > 0.0 {
        -s.ln()
    } else {
        f64::INFINITY
    }
}

/// The `varphi` bound in exponentiated coordinates `q = e^eta - 1`.
pub fn hyperbola(q1: f64, cfg: &LyapConfig, eq: &Equilibrium) -> f64 {
    let [l1, l2] = eq.lambda;
    let theta = cfg.varphi_floor(eq);
    (1.0 / (1.0 + q1) - (1.0 + l1 * theta)) / ((1.0 + cfg.eps) * l1 * l2)
}

/// `V = V1 + sum_i (gamma_i/sigma_i) h(G_i)`.
pub fn v_full(
    eta: [f64; 2],
    psi: [&HistoryBuffer; 2],
    cfg: &LyapConfig,
    eq: &Equilibrium,
) -> Result<f64> {
    let g = [
        g_fn(psi[0], cfg.sigma[0], &eq.grid)?,
        g_fn(psi[1], cfg.sigma[1], &eq.grid)?,
    ];
    Ok(v_from_g(eta, g, cfg, eq))
}

pub fn v_from_g(eta: [f64; 2], g: [f64; 2], cfg: &LyapConfig, eq: &Equilibrium) -> f64 {
    v1(eta, cfg.eps, eq)
        + cfg.gamma[0] / cfg.sigma[0] * h_fn(g[0])
        + cfg.gamma[1] / cfg.sigma[1] * h_fn(g[1])
}

/// Decrease rate `W(eta, G)` with `D+V <= -W` inside the region.
pub fn w_bound(eta: [f64; 2], g: [f64; 2], cfg: &LyapConfig, eq: &Equilibrium) -> Result<f64> {
    let p = phi(eta, eq.lambda);
    let psi_part =
        0.5 * cfg.gamma[0] * g[0].exp_m1().powi(2) + 0.5 * cfg.gamma[1] * g[1].exp_m1().powi(2);
    let eta_part = match cfg.mode {
        LyapMode::RegionD => 0.5 * lambda_min_q(cfg.eps, cfg.beta)? * (p[0] * p[0] + p[1] * p[1]),
        LyapMode::RegionDbar { delta, .. } => {
            let vp = p[0] + (1.0 + cfg.eps) * p[1];
            let neg = vp.min(0.0);
            cfg.eps / (2.0 * (1.0 + cfg.eps)) * p[1] * p[1]
                + 0.5 * cfg.beta * vp * vp / (delta * delta + neg * neg).sqrt()
        }
    };
    Ok(eta_part + psi_part)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPiece {
    H1,
    H2,
    UZero,
    PhiBound,
}

impl BoundaryPiece {
    pub fn label(&self) -> &'static str {
        match self {
            Self::H1 => "H1",
            Self::H2 => "H2",
            Self::UZero => "u_zero",
            Self::PhiBound => "phi_bound",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub piece: BoundaryPiece,
    pub eta: [f64; 2],
    pub v1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoaEstimate {
    pub c_star: f64,
    pub argmin: [f64; 2],
    pub active: BoundaryPiece,
    pub h: [f64; 2],
    /// Minimum of `V1` over each boundary piece.
    pub piece_minima: Vec<(BoundaryPiece, f64, [f64; 2])>,
    pub samples: Vec<BoundarySample>,
}

const BOUNDARY_SAMPLES: usize = 10_000;

/// Largest level `c*` of `V1` whose sublevel set stays inside the region.
///
/// Every constraint set contains the origin and is bounded by one curve, so
/// the connected sublevel set `{V1 < c}` stays inside as long as it misses
/// all three full curves. Hence `c*` is the minimum of `V1` over their union.
pub fn roa_estimate(cfg: &LyapConfig, eq: &Equilibrium) -> Result<RoaEstimate> {
    let h = bounds_h(cfg, eq)?;
    let v = |eta: [f64; 2]| v1(eta, cfg.eps, eq);
    let curve_piece = match cfg.mode {
        LyapMode::RegionD => BoundaryPiece::UZero,
        LyapMode::RegionDbar { .. } => BoundaryPiece::PhiBound,
    };
    if cfg.varphi_floor(eq) <= 0.0 {
        return Err(Error::LyapunovConfig(
            "the varphi bound passes through the origin; the region is empty near 0".into(),
        ));
    }

    let mut samples = Vec::with_capacity(3 * BOUNDARY_SAMPLES);
    // line pieces, sampled over a window for output; exact minima at 0
    let span = 6.0;
    for k in 0..BOUNDARY_SAMPLES {
        let s = -span + 2.0 * span * k as f64 / (BOUNDARY_SAMPLES - 1) as f64;
        let p1 = [-h[0], s];
        let p2 = [s, h[1]];
        samples.push(BoundarySample {
            piece: BoundaryPiece::H1,
            eta: p1,
            v1: v(p1),
        });
        samples.push(BoundarySample {
            piece: BoundaryPiece::H2,
            eta: p2,
            v1: v(p2),
        });
    }
    let min_h1 = ([-h[0], 0.0], v([-h[0], 0.0]));
    let min_h2 = ([0.0, h[1]], v([0.0, h[1]]));

    // curve piece parameterised by eta1
    let lo = -10.0;
    let hi = boundary_curve_pole(cfg, eq).min(10.0);
    let curve = |e1: f64| boundary_curve_eta2(e1, cfg, eq).map(|e2| [e1, e2]);
    let top = hi - 1e-9 * (hi - lo);
    let mut best = (f64::INFINITY, lo, 0usize);
    let step = (top - lo) / (BOUNDARY_SAMPLES - 1) as f64;
    for k in 0..BOUNDARY_SAMPLES {
        let e1 = lo + step * k as f64;
        if let Some(p) = curve(e1) {
            let val = v(p);
            samples.push(BoundarySample {
                piece: curve_piece,
                eta: p,
                v1: val,
            });
            if val < best.0 {
                best = (val, e1, k);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::LyapunovConfig("boundary curve is empty".into()));
    }
    let f = |e1: f64| curve(e1).map(v).unwrap_or(f64::INFINITY);
    let a = (best.1 - step).max(lo);
    let b = (best.1 + step).min(top);
    let (e1, val) = golden_min(&f, a, b, 100);
    let min_curve = if val < best.0 {
        (curve(e1).expect("refined point on curve"), val)
    } else {
        (curve(best.1).expect("sampled point on curve"), best.0)
    };

    let piece_minima = vec![
        (BoundaryPiece::H1, min_h1.1, min_h1.0),
        (BoundaryPiece::H2, min_h2.1, min_h2.0),
        (curve_piece, min_curve.1, min_curve.0),
    ];
    let (active, c_star, argmin) = piece_minima.iter().copied().fold(
        (BoundaryPiece::H1, f64::INFINITY, [0.0; 2]),
        |acc, p| {
            if p.1 < acc.1 {
                p
            } else {
                acc
            }
        },
    );
    Ok(RoaEstimate {
        c_star,
        argmin,
        active,
        h,
        piece_minima,
        samples,
    })
}

/// Points on `V1 = c` along `n_rays` equally spaced rays from the origin.
pub fn levelset_contour(c: f64, eps: f64, eq: &Equilibrium, n_rays: usize) -> Vec<[f64; 2]> {
    let lambda = eq.lambda;
    (0..n_rays)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n_rays as f64;
            let d = [th.cos(), th.sin()];
            let at = |r: f64| v1_with([r * d[0], r * d[1]], eps, lambda);
            let mut hi = 1.0;
            while at(hi) < c && hi < 1e3 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..80 {
                let m = 0.5 * (lo + hi);
                if at(m) < c {
                    lo = m
                } else {
                    hi = m
                }
            }
            let r = 0.5 * (lo + hi);
            [r * d[0], r * d[1]]
        })
        .collect()
}

/// Result of scanning an `n x n` grid over the bounding box of a level set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetScan {
    pub inside_level: usize,
    pub violations: usize,
}

/// Counts grid points with `V1 < c` that fall outside the region.
pub fn levelset_membership_scan(
    c: f64,
    cfg: &LyapConfig,
    eq: &Equilibrium,
    n: usize,
) -> Result<LevelSetScan> {
    let h = bounds_h(cfg, eq)?;
    let contour = levelset_contour(c, cfg.eps, eq, 720);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &contour {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for k in 0..2 {
        let pad = 0.05 * (hi[k] - lo[k]);
        lo[k] -= pad;
        hi[k] += pad;
    }
    let mut scan = LevelSetScan {
        inside_level: 0,
        violations: 0,
    };
    for i in 0..n {
        for j in 0..n {
            let eta = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64,
            ];
            if v1(eta, cfg.eps, eq) < c {
                scan.inside_level += 1;
                if !in_region(eta, h, cfg, eq) {
                    scan.violations += 1;
                }
            }
        }
    }
    Ok(scan)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniReport {
    /// Largest `dV/dt + W - allowance` over the recorded steps.
    pub max_violation: f64,
    /// Largest `dV/dt + W` without the allowance.
    pub max_raw: f64,
    pub worst_t: f64,
    pub steps: usize,
}

/// Checks the decrease inequality along a recorded trajectory with forward
/// differences, a trapezoid average of `W`, and the allowance `5 dt (1+|V|)`.
pub fn dini_check(traj: &Trajectory, cfg: &LyapConfig, eq: &Equilibrium) -> Result<DiniReport> {
    let lyap = traj.lyap.as_ref().ok_or(Error::MissingSeries("Lyapunov"))?;
    let w: Vec<f64> = traj
        .eta
        .iter()
        .zip(&lyap.g)
        .map(|(e, g)| w_bound(*e, *g, cfg, eq))
        .collect::<Result<_>>()?;
    let mut report = DiniReport {
        max_violation: f64::NEG_INFINITY,
        max_raw: f64::NEG_INFINITY,
        worst_t: traj.times.first().copied().unwrap_or(0.0),
        steps: 0,
    };
    for n in 0..traj.times.len().saturating_sub(1) {
        let dt = traj.times[n + 1] - traj.times[n];
        let rate = (lyap.v[n + 1] - lyap.v[n]) / dt;
        let allowance = 5.0 * dt * (1.0 + lyap.v[n].abs());
        let raw = rate + 0.5 * (w[n] + w[n + 1]);
        report.max_raw = report.max_raw.max(raw);
        let viol = raw - allowance;
        if viol > report.max_violation {
            report.max_violation = viol;
            report.worst_t = traj.times[n];
        }
        report.steps += 1;
    }
    Ok(report)
}

/// Number of recorded steps where `G_i(t+dt) > G_i(t) (1 + (-sigma_i + tol) dt)`.
pub fn g_decrease_violations(traj: &Trajectory, cfg: &LyapConfig, tol: f64) -> Result<usize> {
    let lyap = traj.lyap.as_ref().ok_or(Error::MissingSeries("Lyapunov"))?;
    let mut count = 0;
    for n in 0..traj.times.len().saturating_sub(1) {
        let dt = traj.times[n + 1] - traj.times[n];
        for i in 0..2 {
            let bound = lyap.g[n][i] * (1.0 + (-cfg.sigma[i] + tol) * dt);
            if lyap.g[n + 1][i] > bound + 1e-14 {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Linearisation at the origin of the reduced model under control A or B.
pub fn closed_loop_jacobian(ctrl: &ControllerSpec, eq: &Equilibrium) -> Result<Mat2> {
    let [l1, l2] = eq.lambda;
    match ctrl {
        ControllerSpec::A(g) => {
            let (e, b) = (g.eps, g.beta);
            Ok([
                [-b / l1, -(1.0 + b * (1.0 + e)) * l2],
                [(1.0 - b) / l1, -b * (1.0 + e) * l2],
            ])
        }
        ControllerSpec::B(g) => Ok(jacobian_b(g.eps, g.k(), eq.lambda)),
        ControllerSpec::OpenLoop => Ok(eq.open_loop_jacobian()),
        other => Err(Error::LyapunovConfig(format!(
            "no closed-form Jacobian for the {} controller",
            other.name()
        ))),
    }
}

/// Control B linearisation with `k = beta/delta`.
pub fn jacobian_b(eps: f64, k: f64, lambda: [f64; 2]) -> Mat2 {
    let [l1, l2] = lambda;
    [
        [-k / l1, -(1.0 + eps) * l2 * (1.0 + k)],
        [(1.0 - k) / l1, -eps * l2 - k * (1.0 + eps) * l2],
    ]
}

/// Central-difference Jacobian of the closed-loop reduced vector field.
pub fn closed_loop_jacobian_fd(ctrl: &ControllerSpec, eq: &Equilibrium) -> Result<Mat2> {
    let f = |eta: [f64; 2]| {
        let u = ctrl.evaluate(eta, None, eq).unwrap_or(f64::NAN);
        reduced_rhs(eta, u, eq)
    };
    ctrl.evaluate([0.0; 2], None, eq)?;
    Ok(linalg::jacobian_fd(f, [0.0; 2], 1e-6))
}

/// Left minus right side of the real-root condition for control B; positive
/// means a damped, non-oscillatory linear response.
pub fn damping_margin_b(gains: &GainsB, eq: &Equilibrium) -> f64 {
    let [l1, l2] = eq.lambda;
    let (e, k) = (gains.eps, gains.k());
    let b = k * (1.0 / l1 + l2) + e * l2 * (1.0 + k);
    b * b - 4.0 * (1.0 + e * (1.0 + k)) * l2 / l1
}

/// Helper for callers that need the default sigma fits of both species.
pub fn sigma_fits(eq: &Equilibrium) -> Result<[SigmaFit; 2]> {
    Ok([
        find_sigma(&eq.ktilde[PREY], &eq.grid)?,
        find_sigma(&eq.ktilde[PREDATOR], &eq.grid)?,
    ])
}
