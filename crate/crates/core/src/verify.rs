//! Acceptance checks for the reference model.
//!
//! Each check returns a [`CriterionOutcome`]. Checks whose tolerances only
//! make sense on a fine grid report `ResolutionTooLow` below
//! [`MIN_CELLS`] instead of failing.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controllers::{phi, ControllerSpec, GainsA, GainsB};
use crate::equilibrium::{compute_equilibrium, open_loop_jacobian_eigs};
use crate::error::Result;
use crate::linalg::{discriminant, eigenvalues, is_hurwitz, jacobian_fd, Mat2};
use crate::lyapunov::{
    dini_check, g_decrease_violations, jacobian_b, lambda_min_q, lambda_min_q_closed_form,
    levelset_membership_scan, q_matrix, roa_estimate, sigma_fits, v_full, LyapConfig,
};
use crate::model::{build_kernels, AgeGrid, KernelShape, PopulationState};
use crate::simulate::{
    cross_validate, ic_from_spec, orbit_return, reduced_rhs, simulate_direct, ExpAffine, IcShape,
    IcSpec, Plant, SimConfig,
};
use crate::transform::{check_s, reconstruct, to_transformed};

/// Coarsest grid on which the grid-sensitive tolerances are meaningful.
pub const MIN_CELLS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Fails for a documented reason; not counted against the suite.
    KnownFailure,
    ResolutionTooLow,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::KnownFailure => "FAIL (known)",
            Status::ResolutionTooLow => "resolution too low",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// Passes, or fails only for a documented reason.
    pub fn acceptable(&self) -> bool {
        matches!(self.status, Status::Pass | Status::KnownFailure)
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {:<34} {}  [{}] ({:.2}s)",
            self.id, self.title, self.status, self.detail, self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub n_cells: usize,
    pub u_star: f64,
    pub t_final: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_cells: 400,
            u_star: 0.15,
            t_final: 20.0,
        }
    }
}

pub const TITLES: [&str; 13] = [
    "Lotka-Sharpe exponents",
    "equilibrium values and identity",
    "open-loop conservation",
    "open-loop linearization",
    "control A from FQ",
    "control A from SQ",
    "control B positivity and decay",
    "lambda_min(Q) at the diagonal gain",
    "direct vs transformed solvers",
    "transform roundtrip and S",
    "Lyapunov decrease",
    "control B damping",
    "region of attraction geometry",
];

const GRID_SENSITIVE: [u8; 8] = [1, 2, 3, 5, 6, 7, 10, 11];

pub fn run_all(cfg: &VerifyConfig) -> Vec<CriterionOutcome> {
    (1..=13).map(|id| run_criterion(id, cfg)).collect()
}

/// Runs criterion `id` (1 to 13). Errors inside a check become failures.
pub fn run_criterion(id: u8, cfg: &VerifyConfig) -> CriterionOutcome {
    assert!((1..=13).contains(&id), "criteria are numbered 1 to 13");
    let title = TITLES[id as usize - 1];
    let start = Instant::now();
    let (status, detail) = if GRID_SENSITIVE.contains(&id) && cfg.n_cells < MIN_CELLS {
        (
            Status::ResolutionTooLow,
            format!("n_cells = {} < {MIN_CELLS}", cfg.n_cells),
        )
    } else {
        let r = match id {
            1 => c01(cfg),
            2 => c02(cfg),
            3 => c03(cfg),
            4 => c04(cfg),
            5 => c05(cfg),
            6 => c06(cfg),
            7 => c07(cfg),
            8 => c08(),
            9 => c09(cfg),
            10 => c10(cfg),
            11 => c11(cfg),
            12 => c12(cfg),
            _ => c13(cfg),
        };
        r.unwrap_or_else(|e| (Status::Fail, format!("error: {e}")))
    };
    CriterionOutcome {
        id,
        title,
        status,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

type Check = Result<(Status, String)>;

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn plant(cfg: &VerifyConfig) -> Result<Plant> {
    Plant::reference(cfg.n_cells, cfg.u_star)
}

fn run(p: &Plant, t_final: f64, ctrl: ControllerSpec, shape: IcShape) -> Result<crate::Trajectory> {
    simulate_direct(p, &SimConfig::new(t_final, ctrl, IcSpec::new(shape)))
}

fn c01(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let z = p.eq.zeta;
    let ok = z.iter().all(|v| (v - 1.17).abs() <= 0.01);
    Ok((verdict(ok), format!("zeta = ({:.6}, {:.6})", z[0], z[1])))
}

fn c02(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let e = &p.eq;
    let res = e.identity_residual();
    let ok = (e.lambda[0] - 0.98).abs() <= 0.01
        && (e.lambda[1] - 1.02).abs() <= 0.01
        && (e.x0_star[0] - 33.81).abs() <= 0.1
        && (e.x0_star[1] - 35.19).abs() <= 0.1
        && res < 1e-6;
    Ok((
        verdict(ok),
        format!(
            "lambda = ({:.5}, {:.5}), x*(0) = ({:.4}, {:.4}), identity residual {res:.1e}",
            e.lambda[0], e.lambda[1], e.x0_star[0], e.x0_star[1]
        ),
    ))
}

fn c03(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    // uniform multipliers keep psi identically zero
    let m = [
        ExpAffine {
            log_scale: 0.8,
            slope: 0.0,
        },
        ExpAffine {
            log_scale: -0.6,
            slope: 0.0,
        },
    ];
    let flat = run(
        &p,
        cfg.t_final,
        ControllerSpec::OpenLoop,
        IcShape::Multipliers { m },
    )?;
    let base = flat.v0[0];
    let drift = flat
        .v0
        .iter()
        .map(|v| ((v - base) / base).abs())
        .fold(0.0, f64::max);
    let fq = run(&p, cfg.t_final, ControllerSpec::OpenLoop, IcShape::Fq)?;
    let ret = orbit_return(&fq);
    let ok = drift < 1e-3 && ret.is_some_and(|(_, d)| d < 0.05);
    let ret_txt = match ret {
        Some((t, d)) => format!("FQ returns to {d:.4} after {t:.3}"),
        None => "FQ orbit did not close".into(),
    };
    Ok((verdict(ok), format!("V0 drift {drift:.2e}; {ret_txt}")))
}

fn c04(cfg: &VerifyConfig) -> Check {
    let grid = AgeGrid::new(1.0, cfg.n_cells)?;
    let kernels = build_kernels([KernelShape::REFERENCE; 2], &grid)?;
    let mut worst = 0.0f64;
    let mut freqs = Vec::new();
    for u in [0.05, 0.10, 0.15] {
        let eq = compute_equilibrium(&kernels, u, &grid)?;
        let closed = open_loop_jacobian_eigs(&eq);
        let solved = eigenvalues(&eq.open_loop_jacobian());
        let fd = eigenvalues(&jacobian_fd(
            |e| reduced_rhs(e, eq.u_star, &eq),
            [0.0; 2],
            1e-6,
        ));
        for k in 0..2 {
            worst = worst.max((closed[k] - solved[k]).norm());
        }
        let fd_gap = (closed[0] - fd[0]).norm();
        if fd_gap > 1e-6 {
            return Ok((
                Status::Fail,
                format!("finite-difference gap {fd_gap:.2e} at u* = {u}"),
            ));
        }
        freqs.push(closed[0].im.abs());
    }
    let slowing = freqs.windows(2).all(|w| w[1] < w[0]);
    Ok((
        verdict(worst < 1e-6 && slowing),
        format!(
            "eig gap {worst:.1e}; omega at u* = .05/.10/.15: {:.5}/{:.5}/{:.5}",
            freqs[0], freqs[1], freqs[2]
        ),
    ))
}

fn gains_a() -> Result<GainsA> {
    GainsA::new(0.2, 0.6)
}

fn gains_b(p: &Plant, delta: f64) -> Result<GainsB> {
    GainsB::new(0.01, 0.13, delta, &p.eq)
}

fn c05(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let tr = run(&p, cfg.t_final, ControllerSpec::A(gains_a()?), IcShape::Fq)?;
    let late = tr.max_eta_norm_after(10.0);
    let umin = tr.min_u();
    Ok((
        verdict(late <= 0.05 && umin > 0.0),
        format!("max |eta| for t >= 10: {late:.4}; min u {umin:.4}"),
    ))
}

fn c06(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let tr = run(&p, cfg.t_final, ControllerSpec::A(gains_a()?), IcShape::Sq)?;
    let end = tr.eta_norm().last().unwrap_or(f64::NAN);
    let umin = tr.min_u();
    Ok((
        verdict(umin < 0.0 && end <= 0.05),
        format!("min u {umin:.4}; |eta({})| = {end:.2e}", cfg.t_final),
    ))
}

fn c07(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let g = gains_b(&p, 0.2)?;
    let floor = g.dilution_floor(&p.eq);
    let fq = run(&p, cfg.t_final, ControllerSpec::B(g), IcShape::Fq)?;
    let sq = run(&p, cfg.t_final, ControllerSpec::B(g), IcShape::Sq)?;
    let umin = fq.min_u().min(sq.min_u());
    let end = sq.eta_norm().last().unwrap_or(f64::NAN);
    Ok((
        verdict(umin >= floor && floor > 0.0 && end <= 0.1),
        format!(
            "min u {umin:.5} vs floor {floor:.5}; SQ |eta({})| = {end:.2e}",
            cfg.t_final
        ),
    ))
}

/// The claimed value `eps(1+eps)/2` is the larger eigenvalue of `Q` at this
/// gain; the smaller one is `eps/(2(1+eps))`. The check reports both and is
/// flagged as a known failure when only the claim disagrees.
fn c08() -> Check {
    let mut claim_gap = 0.0f64;
    let mut exact_gap = 0.0f64;
    for eps in [0.1, 0.2, 1.0] {
        let beta = eps / (2.0 * (1.0 + eps));
        let lm = lambda_min_q(eps, beta)?;
        claim_gap = claim_gap.max((lm - eps * (1.0 + eps) / 2.0).abs());
        exact_gap = exact_gap.max((lm - eps / (2.0 * (1.0 + eps))).abs());
    }
    let mut grid_gap = 0.0f64;
    for i in 0..50 {
        let eps = 0.02 + 2.0 * i as f64 / 49.0;
        let lo = GainsA::beta_min(eps);
        for j in 0..50 {
            let beta = lo * (1.0 + 1e-3) + (3.0 - lo) * j as f64 / 49.0;
            let q: Mat2 = q_matrix(eps, beta);
            let solved = crate::linalg::symmetric_eigenvalues(&q)[0];
            let closed = lambda_min_q_closed_form(eps, beta);
            grid_gap = grid_gap.max((solved - closed).abs() / closed.abs().max(1.0));
        }
    }
    let detail = format!(
        "claim eps(1+eps)/2 off by {claim_gap:.3e}; eps/(2(1+eps)) off by {exact_gap:.1e}; \
         closed form vs eigen solve {grid_gap:.1e}"
    );
    let status = if claim_gap < 1e-12 && grid_gap < 1e-12 {
        Status::Pass
    } else if exact_gap < 1e-12 && grid_gap < 1e-12 {
        Status::KnownFailure
    } else {
        Status::Fail
    };
    Ok((status, detail))
}

fn c09(cfg: &VerifyConfig) -> Check {
    let mut gaps = Vec::new();
    for n in [200, 400] {
        let p = Plant::reference(n, cfg.u_star)?;
        let mut sc = SimConfig::new(10.0, ControllerSpec::OpenLoop, IcSpec::new(IcShape::Fq));
        sc.record_every = n;
        gaps.push(cross_validate(&p, &sc)?);
    }
    Ok((
        verdict(gaps[0] < 1e-2 && gaps[1] < gaps[0]),
        format!(
            "discrepancy {:.2e} at n = 200, {:.2e} at n = 400",
            gaps[0], gaps[1]
        ),
    ))
}

fn c10(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let mut round = 0.0f64;
    let mut s_res = 0.0f64;
    let mut psi_min = f64::INFINITY;
    let mut literal_renewal = 0.0f64;
    for shape in [IcShape::Fq, IcShape::Sq] {
        let lit = ic_from_spec(&IcSpec::literal(shape.clone()), &p)?;
        let ts = to_transformed(&lit, &p.eq, &p.adj)?;
        round = round.max(roundtrip_error(&lit, &ts, &p)?);
        literal_renewal = literal_renewal.max(s_residuals(&ts, &p).1);

        let proj = ic_from_spec(&IcSpec::new(shape), &p)?;
        let ts = to_transformed(&proj, &p.eq, &p.adj)?;
        round = round.max(roundtrip_error(&proj, &ts, &p)?);
        let (pr, rr) = s_residuals(&ts, &p);
        s_res = s_res.max(pr).max(rr);
        psi_min = psi_min.min(ts.psi[0].min()).min(ts.psi[1].min());
    }
    Ok((
        verdict(round < 1e-10 && psi_min > -1.0 && s_res < 1e-3),
        format!(
            "roundtrip {round:.1e}; min psi {psi_min:.4}; S residual {s_res:.1e} \
             (renewal residual of the unprojected profiles {literal_renewal:.2})"
        ),
    ))
}

fn roundtrip_error(x: &PopulationState, ts: &crate::TransformedState, p: &Plant) -> Result<f64> {
    let back = reconstruct(ts, &p.eq)?;
    let mut worst = 0.0f64;
    for i in 0..2 {
        for (a, b) in x.x[i].iter().zip(back.x[i].iter()) {
            worst = worst.max(((a - b) / a).abs());
        }
    }
    Ok(worst)
}

fn s_residuals(ts: &crate::TransformedState, p: &Plant) -> (f64, f64) {
    let mut out = (0.0f64, 0.0f64);
    for i in 0..2 {
        let (a, b) = check_s(&ts.psi[i], &p.eq.ktilde[i], &p.adj[i], &p.grid);
        out = (out.0.max(a), out.1.max(b));
    }
    out
}

/// Multiplier `exp(±s(1+2a))` initial condition (FQ shape at `s = 1`) scaled
/// so that the composite functional equals `frac * c`.
pub fn ic_inside_level(p: &Plant, cfg: &LyapConfig, c: f64, frac: f64) -> Result<IcShape> {
    let shape = |s: f64| IcShape::Multipliers {
        m: [
            ExpAffine {
                log_scale: s,
                slope: 2.0 * s,
            },
            ExpAffine {
                log_scale: -s,
                slope: -2.0 * s,
            },
        ],
    };
    let value = |s: f64| -> Result<f64> {
        let x = ic_from_spec(&IcSpec::new(shape(s)), p)?;
        let ts = to_transformed(&x, &p.eq, &p.adj)?;
        v_full(ts.eta, [&ts.psi[0], &ts.psi[1]], cfg, &p.eq)
    };
    let target = frac * c;
    let mut hi = 0.1;
    while value(hi)? < target && hi < 10.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if value(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(shape(lo))
}

/// Slack on the G decay rate. The count it produces is informational: the
/// max-type functional is not monotone step by step when the newest sample
/// carries the maximum.
const G_TOL: f64 = 0.05;

fn c11(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let fits = sigma_fits(&p.eq)?;
    let mut parts = Vec::new();
    let mut ok = true;

    let ga = gains_a()?;
    let gb = gains_b(&p, 0.2)?;
    let cases = [
        (
            ControllerSpec::A(ga),
            LyapConfig::for_control_a(&ga, &p.eq, &fits)?,
        ),
        (
            ControllerSpec::B(gb),
            LyapConfig::for_control_b(&gb, &p.eq, &fits)?,
        ),
    ];
    for (ctrl, lc) in cases {
        let roa = roa_estimate(&lc, &p.eq)?;
        let shape = ic_inside_level(&p, &lc, roa.c_star, 0.5)?;
        let mut sc = SimConfig::new(cfg.t_final, ctrl.clone(), IcSpec::new(shape));
        sc.lyap = Some(lc);
        let tr = simulate_direct(&p, &sc)?;
        let rep = dini_check(&tr, &lc, &p.eq)?;
        let g_viol = g_decrease_violations(&tr, &lc, G_TOL)?;
        ok &= rep.max_violation <= 1e-2;
        parts.push(format!(
            "{}: max violation {:.2e}, raw {:.2e} (G steps above rate -sigma: {g_viol} of {})",
            ctrl.name(),
            rep.max_violation,
            rep.max_raw,
            2 * rep.steps
        ));
    }

    // symbolic dV1/dt = phi1 f1 + (1+eps) phi2 f2 against -phi^T Q phi
    let q = q_matrix(ga.eps, ga.beta);
    let ctrl = ControllerSpec::A(ga);
    let mut id_gap = 0.0f64;
    for i in 0..21 {
        for j in 0..21 {
            let eta = [-1.5 + 0.15 * i as f64, -1.5 + 0.15 * j as f64];
            let u = ctrl.evaluate(eta, None, &p.eq)?;
            let f = reduced_rhs(eta, u, &p.eq);
            let ph = phi(eta, p.eq.lambda);
            let vdot = ph[0] * f[0] + (1.0 + ga.eps) * ph[1] * f[1];
            let quad = ph[0] * (q[0][0] * ph[0] + q[0][1] * ph[1])
                + ph[1] * (q[1][0] * ph[0] + q[1][1] * ph[1]);
            id_gap = id_gap.max((vdot + quad).abs());
        }
    }
    ok &= id_gap < 1e-10;
    parts.push(format!("reduced identity gap {id_gap:.1e}"));
    Ok((verdict(ok), parts.join("; ")))
}

fn c12(cfg: &VerifyConfig) -> Check {
    let grid = AgeGrid::new(1.0, cfg.n_cells)?;
    let kernels = build_kernels([KernelShape::REFERENCE; 2], &grid)?;
    let eq = compute_equilibrium(&kernels, cfg.u_star, &grid)?;
    let (eps, beta) = (0.01, 0.13);
    let stiff = jacobian_b(eps, beta / 0.01, eq.lambda);
    let reference = jacobian_b(eps, beta / 0.2, eq.lambda);
    let zero = jacobian_b(eps, 0.0, eq.lambda);
    let es = eigenvalues(&stiff);
    let ep = eigenvalues(&reference);
    let real_neg = discriminant(&stiff) > 0.0 && es.iter().all(|e| e.im == 0.0 && e.re < 0.0);
    let complex_stable =
        discriminant(&reference) < 0.0 && ep.iter().all(|e| e.im != 0.0 && e.re < 0.0);
    let ok = real_neg && complex_stable && is_hurwitz(&zero);
    Ok((
        verdict(ok),
        format!(
            "delta = 0.01: {:.4}, {:.4}; delta = 0.2: {:.4} ± {:.4}i; beta = 0 Hurwitz: {}",
            es[0].re,
            es[1].re,
            ep[0].re,
            ep[0].im.abs(),
            is_hurwitz(&zero)
        ),
    ))
}

fn c13(cfg: &VerifyConfig) -> Check {
    let p = plant(cfg)?;
    let fits = sigma_fits(&p.eq)?;
    let lc = LyapConfig::for_control_a(&gains_a()?, &p.eq, &fits)?;
    let roa = roa_estimate(&lc, &p.eq)?;
    let scan = levelset_membership_scan(roa.c_star, &lc, &p.eq, 400)?;
    Ok((
        verdict(scan.violations == 0 && scan.inside_level > 0),
        format!(
            "c* = {:.5} on {}; {} of {} sublevel points outside the region",
            roa.c_star,
            roa.active.label(),
            scan.violations,
            scan.inside_level
        ),
    ))
}
