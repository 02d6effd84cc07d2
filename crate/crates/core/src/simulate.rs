//! Time integration of the age-structured system.
//!
//! Two independent solvers share the step `dt = da`:
//! * `Direct` advects densities along characteristics, so every node moves
//!   exactly one cell per step, and closes the newborn node with the
//!   trapezoid renewal sum.
//! * `Transformed` integrates `eta` with Heun's method and advances `psi`
//!   by the discrete renewal equation over its history window.
//!
//! The interaction terms and the feedback are evaluated at both Heun stages
//! in the direct solver. The transformed solver holds `psi` over a step.

use serde::{Deserialize, Serialize};

use crate::controllers::{phi, ControllerSpec};
use crate::equilibrium::{compute_equilibrium, Equilibrium};
use crate::error::{Error, Result};
use crate::lyapunov::{g_fn, v0, v1, v_from_g, LyapConfig};
use crate::model::{
    build_kernels, renewal_boundary, AgeGrid, GridFn, KernelSet, KernelShape, PopulationState,
    PREDATOR, PREY,
};
use crate::transform::{
    compute_pi0, g_bar, reconstruct, to_transformed, AdjointData, HistoryBuffer, TransformedState,
};

/// Everything the solvers need about one model at one setpoint.
#[derive(Clone, Debug)]
pub struct Plant {
    pub grid: AgeGrid,
    pub kernels: KernelSet,
    pub eq: Equilibrium,
    pub adj: [AdjointData; 2],
    pub gbar: [GridFn; 2],
    /// `exp(-dt (mu(a_{j-1}) + mu(a_j))/2)` for `j >= 1`; entry 0 unused.
    decay: [Vec<f64>; 2],
}

impl Plant {
    pub fn new(kernels: KernelSet, u_star: f64, grid: AgeGrid) -> Result<Self> {
        let eq = compute_equilibrium(&kernels, u_star, &grid)?;
        let adj = compute_pi0(&eq, &kernels);
        let gbar = g_bar(&kernels, &eq)?;
        let dt = grid.step();
        let decay = [0, 1].map(|i| {
            let mu = &kernels.mortality[i];
            let mut d = vec![1.0; grid.n_nodes()];
            for j in 1..grid.n_nodes() {
                d[j] = (-0.5 * dt * (mu[j - 1] + mu[j])).exp();
            }
            d
        });
        for i in 0..2 {
            let w0k0 = grid.weight(0) * kernels.birth[i][0];
            if w0k0 >= 1.0 {
                return Err(Error::SingularBoundary { value: w0k0 });
            }
        }
        Ok(Self {
            grid,
            kernels,
            eq,
            adj,
            gbar,
            decay,
        })
    }

    /// Reference kernel family on `[0, 1]`.
    pub fn reference(n_cells: usize, u_star: f64) -> Result<Self> {
        let grid = AgeGrid::new(1.0, n_cells)?;
        let kernels = build_kernels([KernelShape::REFERENCE; 2], &grid)?;
        Self::new(kernels, u_star, grid)
    }

    pub fn dt(&self) -> f64 {
        self.grid.step()
    }

    /// `eta_i = ln Π_i[x_i]`.
    pub fn eta_of(&self, x: &[GridFn; 2]) -> Result<[f64; 2]> {
        let mut eta = [0.0; 2];
        for i in 0..2 {
            eta[i] = crate::transform::pi_functional(&x[i], &self.adj[i], &self.grid)?.ln();
        }
        Ok(eta)
    }
}

/// `m(a) = exp(log_scale + slope a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpAffine {
    pub log_scale: f64,
    pub slope: f64,
}

impl ExpAffine {
    pub const ONE: ExpAffine = ExpAffine {
        log_scale: 0.0,
        slope: 0.0,
    };

    pub fn eval(&self, a: f64) -> f64 {
        (self.log_scale + self.slope * a).exp()
    }
}

/// Initial profiles as multipliers of the steady state or raw tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IcShape {
    Equilibrium,
    /// Prey above, predator below the steady state: `x1* e^{1+2a}`, `x2* e^{-1-2a}`.
    Fq,
    /// The swap of `Fq`.
    Sq,
    Multipliers {
        m: [ExpAffine; 2],
    },
    Tabulated {
        x: [Vec<f64>; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcSpec {
    pub shape: IcShape,
    /// Replace `x_i(0)` by the renewal-consistent newborn density.
    pub renewal_boundary: bool,
}

impl IcSpec {
    pub fn new(shape: IcShape) -> Self {
        Self {
            shape,
            renewal_boundary: true,
        }
    }

    pub fn literal(shape: IcShape) -> Self {
        Self {
            shape,
            renewal_boundary: false,
        }
    }
}

const FQ: [ExpAffine; 2] = [
    ExpAffine {
        log_scale: 1.0,
        slope: 2.0,
    },
    ExpAffine {
        log_scale: -1.0,
        slope: -2.0,
    },
];

pub fn ic_from_spec(spec: &IcSpec, plant: &Plant) -> Result<PopulationState> {
    let grid = &plant.grid;
    let eq = &plant.eq;
    let mult = |m: [ExpAffine; 2]| -> [GridFn; 2] {
        [0, 1].map(|i| GridFn::from_fn(grid, |a| m[i].eval(a)).product(&eq.x_star[i]))
    };
    let x = match &spec.shape {
        IcShape::Equilibrium => eq.x_star.clone(),
        IcShape::Fq => mult(FQ),
        IcShape::Sq => mult([FQ[1], FQ[0]]),
        IcShape::Multipliers { m } => mult(*m),
        IcShape::Tabulated { x } => [
            GridFn::new(grid, x[0].clone())?,
            GridFn::new(grid, x[1].clone())?,
        ],
    };
    let state = PopulationState::new(0.0, x, grid)?;
    if spec.renewal_boundary {
        state.with_renewal_boundary(&plant.kernels, grid)
    } else {
        Ok(state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Direct,
    Transformed,
    /// Planar ODE with `psi ≡ 0`.
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_final: f64,
    pub controller: ControllerSpec,
    pub ic: IcSpec,
    /// Record every this many steps.
    pub record_every: usize,
    /// Store full profiles every this many steps.
    pub snapshot_every: Option<usize>,
    pub lyap: Option<LyapConfig>,
}

impl SimConfig {
    pub fn new(t_final: f64, controller: ControllerSpec, ic: IcSpec) -> Self {
        Self {
            t_final,
            controller,
            ic,
            record_every: 1,
            snapshot_every: None,
            lyap: None,
        }
    }

    fn n_steps(&self, dt: f64) -> Result<usize> {
        if !(self.t_final >= dt && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                value: self.t_final,
                reason: "final time must be at least one step",
            });
        }
        if self.record_every == 0 || self.snapshot_every == Some(0) {
            return Err(Error::InvalidParameter {
                name: "record_every",
                value: 0.0,
                reason: "strides must be positive",
            });
        }
        Ok((self.t_final / dt).round() as usize)
    }
}

/// `V1`, composite `V` and the G-functionals along a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LyapSeries {
    pub v1: Vec<f64>,
    pub v: Vec<f64>,
    pub g: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub solver: Solver,
    pub times: Vec<f64>,
    pub eta: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub v0: Vec<f64>,
    pub lyap: Option<LyapSeries>,
    /// `sup_a |psi_i(t - a)|`.
    pub psi_sup: Vec<[f64; 2]>,
    /// `min_a psi_i(t - a)`.
    pub psi_min: Vec<[f64; 2]>,
    /// `|psi_i(t) - ∫ k̃_i(a) psi_i(t-a) da|`.
    pub renewal_residual: Vec<[f64; 2]>,
    pub snapshots: Vec<PopulationState>,
}

impl Trajectory {
    fn new(solver: Solver, with_lyap: bool) -> Self {
        Self {
            solver,
            times: Vec::new(),
            eta: Vec::new(),
            u: Vec::new(),
            v0: Vec::new(),
            lyap: with_lyap.then(LyapSeries::default),
            psi_sup: Vec::new(),
            psi_min: Vec::new(),
            renewal_residual: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn eta_norm(&self) -> impl Iterator<Item = f64> + '_ {
        self.eta.iter().map(|e| e[0].hypot(e[1]))
    }

    pub fn min_u(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `|eta|` over recorded times `t >= t0`.
    pub fn max_eta_norm_after(&self, t0: f64) -> f64 {
        self.times
            .iter()
            .zip(self.eta_norm())
            .filter(|(t, _)| **t >= t0 - 1e-12)
            .map(|(_, n)| n)
            .fold(0.0, f64::max)
    }

    /// First recorded time with `|eta| <= tol` that is never exceeded again.
    pub fn settling_time(&self, tol: f64) -> Option<f64> {
        let norms: Vec<f64> = self.eta_norm().collect();
        let last_bad = norms.iter().rposition(|n| *n > tol);
        match last_bad {
            None => self.times.first().copied(),
            Some(k) if k + 1 < norms.len() => Some(self.times[k + 1]),
            Some(_) => None,
        }
    }

    fn record(
        &mut self,
        t: f64,
        eta: [f64; 2],
        u: f64,
        psi: [&HistoryBuffer; 2],
        plant: &Plant,
        lyap: Option<&LyapConfig>,
    ) -> Result<()> {
        let grid = &plant.grid;
        self.times.push(t);
        self.eta.push(eta);
        self.u.push(u);
        self.v0.push(v0(eta, &plant.eq));
        self.psi_sup.push([psi[0].sup_abs(), psi[1].sup_abs()]);
        self.psi_min.push([psi[0].min(), psi[1].min()]);
        self.renewal_residual.push([0, 1].map(|i| {
            (psi[i].newest() - grid.trapz_product(&plant.eq.ktilde[i], psi[i].samples())).abs()
        }));
        if let (Some(series), Some(cfg)) = (self.lyap.as_mut(), lyap) {
            let g = [
                g_fn(psi[0], cfg.sigma[0], grid)?,
                g_fn(psi[1], cfg.sigma[1], grid)?,
            ];
            series.v1.push(v1(eta, cfg.eps, &plant.eq));
            series.v.push(v_from_g(eta, g, cfg, &plant.eq));
            series.g.push(g);
        }
        Ok(())
    }
}

/// `[∫ g1 x2, 1/∫ g2 x1]`: predation loss of the prey and starvation rate of
/// the predator.
pub fn interaction_terms(
    state: &PopulationState,
    kernels: &KernelSet,
    grid: &AgeGrid,
) -> Result<[f64; 2]> {
    rates(&state.x, kernels, grid, state.t)
}

fn rates(x: &[GridFn; 2], kernels: &KernelSet, grid: &AgeGrid, t: f64) -> Result<[f64; 2]> {
    let l1 = grid.trapz_product(&kernels.interaction[PREY], &x[PREDATOR]);
    let prey = grid.trapz_product(&kernels.interaction[PREDATOR], &x[PREY]);
    if !(prey > 0.0) {
        return Err(Error::PreyCollapse { t, integral: prey });
    }
    Ok([l1, 1.0 / prey])
}

/// Moves every density one cell along its characteristic with total removal
/// rate `rate_i` (dilution plus interaction) and closes the newborn node.
fn advect(plant: &Plant, x: &[GridFn; 2], rate: [f64; 2], t: f64) -> Result<[GridFn; 2]> {
    let grid = &plant.grid;
    let dt = grid.step();
    let n = grid.n_nodes();
    let mut out = [GridFn::constant(grid, 0.0), GridFn::constant(grid, 0.0)];
    for i in 0..2 {
        let f = (-rate[i] * dt).exp();
        let d = &plant.decay[i];
        let src = x[i].values();
        let dst = out[i].values_mut();
        for j in (1..n).rev() {
            dst[j] = src[j - 1] * d[j] * f;
        }
        dst[0] = renewal_boundary(dst, &plant.kernels.birth[i], grid)?;
        if dst.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { t: t + dt });
        }
    }
    Ok(out)
}

/// One explicit characteristic step with `u` and the interaction terms
/// frozen at time `t`.
pub fn step_direct(state: &PopulationState, u: f64, plant: &Plant) -> Result<PopulationState> {
    let l = interaction_terms(state, &plant.kernels, &plant.grid)?;
    let x = advect(plant, &state.x, [u + l[0], u + l[1]], state.t)?;
    Ok(PopulationState {
        t: state.t + plant.dt(),
        x,
    })
}

fn control_direct(
    plant: &Plant,
    ctrl: &ControllerSpec,
    x: &[GridFn; 2],
) -> Result<(f64, [f64; 2])> {
    let eta = plant.eta_of(x)?;
    let y = match ctrl {
        ControllerSpec::Measured { sensors, .. } => {
            Some([0, 1].map(|i| plant.grid.trapz_product(&sensors.c[i], &x[i])))
        }
        _ => None,
    };
    Ok((ctrl.evaluate(eta, y, &plant.eq)?, eta))
}

/// Heun step: predictor with rates at `t`, corrector with the average of the
/// rates at `t` and at the predicted state.
fn step_direct_heun(
    state: &PopulationState,
    u0: f64,
    plant: &Plant,
    ctrl: &ControllerSpec,
) -> Result<PopulationState> {
    let l0 = rates(&state.x, &plant.kernels, &plant.grid, state.t)?;
    let xp = advect(plant, &state.x, [u0 + l0[0], u0 + l0[1]], state.t)?;
    let (u1, _) = control_direct(plant, ctrl, &xp)?;
    let l1 = rates(&xp, &plant.kernels, &plant.grid, state.t)?;
    let um = 0.5 * (u0 + u1);
    let rate = [um + 0.5 * (l0[0] + l1[0]), um + 0.5 * (l0[1] + l1[1])];
    Ok(PopulationState {
        t: state.t + plant.dt(),
        x: advect(plant, &state.x, rate, state.t)?,
    })
}

pub fn simulate_direct(plant: &Plant, cfg: &SimConfig) -> Result<Trajectory> {
    let dt = plant.dt();
    let n_steps = cfg.n_steps(dt)?;
    let mut state = ic_from_spec(&cfg.ic, plant)?;
    let mut traj = Trajectory::new(Solver::Direct, cfg.lyap.is_some());
    for n in 0..=n_steps {
        let t = n as f64 * dt;
        state.t = t;
        let (u, eta) = control_direct(plant, &cfg.controller, &state.x)?;
        if !u.is_finite() {
            return Err(Error::Blowup { t });
        }
        if n % cfg.record_every == 0 {
            let ts = to_transformed(&state, &plant.eq, &plant.adj)?;
            traj.record(
                t,
                eta,
                u,
                [&ts.psi[0], &ts.psi[1]],
                plant,
                cfg.lyap.as_ref(),
            )?;
        }
        if cfg.snapshot_every.is_some_and(|k| n % k == 0) {
            traj.snapshots.push(state.clone());
        }
        if n == n_steps {
            break;
        }
        state = step_direct_heun(&state, u, plant, &cfg.controller)?;
    }
    Ok(traj)
}

/// `[lambda2 (1 + ∫ gbar1 psi2), lambda1 (1 + ∫ gbar2 psi1)]`, i.e. the
/// interaction integrals of the transformed system with `eta = 0`.
fn held_integrals(plant: &Plant, ts: &TransformedState) -> Result<[f64; 2]> {
    let grid = &plant.grid;
    let [l1, l2] = plant.eq.lambda;
    let j1 = l2 * (1.0 + grid.trapz_product(&plant.gbar[PREY], ts.psi[PREDATOR].samples()));
    let j2 = l1 * (1.0 + grid.trapz_product(&plant.gbar[PREDATOR], ts.psi[PREY].samples()));
    if !(j2 > 0.0) {
        return Err(Error::PreyCollapse {
            t: ts.t,
            integral: j2,
        });
    }
    Ok([j1, j2])
}

fn eta_rhs(plant: &Plant, eta: [f64; 2], u: f64, j: [f64; 2]) -> [f64; 2] {
    let z = plant.eq.zeta;
    [
        z[0] - u - eta[1].exp() * j[0],
        z[1] - u - (-eta[0]).exp() / j[1],
    ]
}

fn measured_in_eta(
    plant: &Plant,
    ctrl: &ControllerSpec,
    eta: [f64; 2],
    ts: &TransformedState,
) -> Option<[f64; 2]> {
    match ctrl {
        ControllerSpec::Measured { sensors, .. } => Some([0, 1].map(|i| {
            let shape = plant.grid.trapz_product(
                &sensors.c[i].product(&plant.eq.x_star[i]),
                ts.psi[i].samples(),
            );
            eta[i].exp() * (sensors.y_star[i] + shape)
        })),
        _ => None,
    }
}

fn control_transformed(
    plant: &Plant,
    ctrl: &ControllerSpec,
    eta: [f64; 2],
    ts: &TransformedState,
) -> Result<f64> {
    ctrl.evaluate(eta, measured_in_eta(plant, ctrl, eta, ts), &plant.eq)
}

fn advance_psi(plant: &Plant, ts: &mut TransformedState) -> Result<()> {
    let grid = &plant.grid;
    let n = grid.n_cells();
    let h = grid.step();
    for i in 0..2 {
        let k = &plant.eq.ktilde[i];
        let s = ts.psi[i].samples();
        // psi(t + dt - a_j) = s[j - 1] for j >= 1
        let inner: f64 = (1..n).map(|j| k[j] * s[j - 1]).sum();
        let sum = h * inner + 0.5 * h * k[n] * s[n - 1];
        let value = sum / (1.0 - grid.weight(0) * k[0]);
        if !(value > -1.0) {
            return Err(Error::Inadmissible { what: "psi", value });
        }
        ts.psi[i].push(value);
    }
    Ok(())
}

fn heun_eta(
    plant: &Plant,
    ts: &TransformedState,
    u0: f64,
    mut control: impl FnMut([f64; 2]) -> Result<f64>,
) -> Result<[f64; 2]> {
    let dt = plant.dt();
    let j = held_integrals(plant, ts)?;
    let k1 = eta_rhs(plant, ts.eta, u0, j);
    let pred = [ts.eta[0] + dt * k1[0], ts.eta[1] + dt * k1[1]];
    let u1 = control(pred)?;
    let k2 = eta_rhs(plant, pred, u1, j);
    let eta = [
        ts.eta[0] + 0.5 * dt * (k1[0] + k2[0]),
        ts.eta[1] + 0.5 * dt * (k1[1] + k2[1]),
    ];
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(Error::Blowup { t: ts.t + dt });
    }
    Ok(eta)
}

/// One Heun step of `eta` under a constant dilution `u`, then one renewal
/// step of `psi`.
pub fn step_transformed(ts: &TransformedState, u: f64, plant: &Plant) -> Result<TransformedState> {
    let eta = heun_eta(plant, ts, u, |_| Ok(u))?;
    let mut next = ts.clone();
    next.eta = eta;
    next.t += plant.dt();
    advance_psi(plant, &mut next)?;
    Ok(next)
}

pub fn simulate_transformed(plant: &Plant, cfg: &SimConfig) -> Result<Trajectory> {
    let state = ic_from_spec(&cfg.ic, plant)?;
    let ts = to_transformed(&state, &plant.eq, &plant.adj)?;
    simulate_transformed_from(plant, cfg, ts)
}

/// Transformed solver from an explicit `(eta, psi)` initial state.
pub fn simulate_transformed_from(
    plant: &Plant,
    cfg: &SimConfig,
    mut ts: TransformedState,
) -> Result<Trajectory> {
    let dt = plant.dt();
    let n_steps = cfg.n_steps(dt)?;
    let mut traj = Trajectory::new(Solver::Transformed, cfg.lyap.is_some());
    for n in 0..=n_steps {
        let t = n as f64 * dt;
        ts.t = t;
        let u = control_transformed(plant, &cfg.controller, ts.eta, &ts)?;
        if !u.is_finite() {
            return Err(Error::Blowup { t });
        }
        if n % cfg.record_every == 0 {
            traj.record(
                t,
                ts.eta,
                u,
                [&ts.psi[0], &ts.psi[1]],
                plant,
                cfg.lyap.as_ref(),
            )?;
        }
        if cfg.snapshot_every.is_some_and(|k| n % k == 0) {
            traj.snapshots.push(reconstruct(&ts, &plant.eq)?);
        }
        if n == n_steps {
            break;
        }
        let snapshot = ts.clone();
        let eta = heun_eta(plant, &ts, u, |e| {
            control_transformed(plant, &cfg.controller, e, &snapshot)
        })?;
        ts.eta = eta;
        advance_psi(plant, &mut ts)?;
    }
    Ok(traj)
}

/// Reduced model `eta1' = u* - u - phi2`, `eta2' = u* - u + phi1`.
pub fn reduced_rhs(eta: [f64; 2], u: f64, eq: &Equilibrium) -> [f64; 2] {
    let p = phi(eta, eq.lambda);
    [eq.u_star - u - p[1], eq.u_star - u + p[0]]
}

/// Heun integration of the reduced model with step `dt`.
pub fn simulate_reduced(
    eq: &Equilibrium,
    ctrl: &ControllerSpec,
    eta0: [f64; 2],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && t_final >= dt) {
        return Err(Error::InvalidParameter {
            name: "dt",
            value: dt,
            reason: "need 0 < dt <= t_final",
        });
    }
    let n_steps = (t_final / dt).round() as usize;
    let control = |e: [f64; 2]| {
        let y = match ctrl {
            ControllerSpec::Measured { sensors, .. } => {
                Some([0, 1].map(|i| sensors.y_star[i] * e[i].exp()))
            }
            _ => None,
        };
        ctrl.evaluate(e, y, eq)
    };
    let mut traj = Trajectory::new(Solver::Reduced, false);
    let mut eta = eta0;
    for n in 0..=n_steps {
        let u = control(eta)?;
        traj.times.push(n as f64 * dt);
        traj.eta.push(eta);
        traj.u.push(u);
        traj.v0.push(v0(eta, eq));
        if n == n_steps {
            break;
        }
        let k1 = reduced_rhs(eta, u, eq);
        let pred = [eta[0] + dt * k1[0], eta[1] + dt * k1[1]];
        let k2 = reduced_rhs(pred, control(pred)?, eq);
        eta = [
            eta[0] + 0.5 * dt * (k1[0] + k2[0]),
            eta[1] + 0.5 * dt * (k1[1] + k2[1]),
        ];
        if eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::Blowup {
                t: (n + 1) as f64 * dt,
            });
        }
    }
    Ok(traj)
}

/// Largest relative density gap between the two solvers over the recorded
/// snapshots.
pub fn cross_validate(plant: &Plant, cfg: &SimConfig) -> Result<f64> {
    let mut cfg = cfg.clone();
    cfg.snapshot_every = Some(cfg.snapshot_every.unwrap_or(cfg.record_every));
    cfg.lyap = None;
    let d = simulate_direct(plant, &cfg)?;
    let t = simulate_transformed(plant, &cfg)?;
    let mut worst = 0.0f64;
    for (sd, st) in d.snapshots.iter().zip(&t.snapshots) {
        for i in 0..2 {
            for (a, b) in sd.x[i].iter().zip(st.x[i].iter()) {
                worst = worst.max(((a - b) / a).abs());
            }
        }
    }
    Ok(worst)
}

/// Period estimate of a closed orbit: the first local minimum of
/// `|eta(t) - eta(0)|` after the orbit has moved away by at least half of
/// its largest excursion. Returns `(period, distance)`.
pub fn orbit_return(traj: &Trajectory) -> Option<(f64, f64)> {
    let e0 = *traj.eta.first()?;
    let d: Vec<f64> = traj
        .eta
        .iter()
        .map(|e| (e[0] - e0[0]).hypot(e[1] - e0[1]))
        .collect();
    let far = d.iter().copied().fold(0.0, f64::max);
    let start = d.iter().position(|v| *v >= 0.5 * far)?;
    (start + 1..d.len().saturating_sub(1))
        .find(|&k| d[k] <= d[k - 1] && d[k] <= d[k + 1] && d[k] < 0.5 * far)
        .map(|k| (traj.times[k], d[k]))
}
