use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use predprey_core::equilibrium::open_loop_jacobian_eigs;
use predprey_core::lyapunov::{
    dini_check, g_decrease_violations, levelset_contour, levelset_membership_scan, roa_estimate,
    BoundaryPiece, LyapMode,
};
use predprey_core::simulate::{cross_validate, simulate_direct, simulate_transformed};
use predprey_core::verify::{run_criterion, CriterionOutcome, VerifyConfig};
use predprey_core::{ControllerSpec, LyapConfig, Plant, Trajectory};

use crate::config::{ControllerKind, IcKind, RunConfig, SolverKind};
use crate::error::{CliError, Result};
use crate::output::{self, Table};
use crate::plot::{self, Series};

/// Tolerance on `|eta|` used for the reported settling time.
pub const SETTLE_TOL: f64 = 0.05;

fn prepare(cfg: &RunConfig, out: &Path) -> Result<()> {
    output::ensure_dir(out)?;
    output::write_text(&out.join("config.toml"), &cfg.to_toml())
}

#[derive(Debug, Serialize)]
pub struct EquilibriumSummary {
    pub n_cells: usize,
    pub max_age: f64,
    pub u_star: f64,
    pub zeta: [f64; 2],
    pub lambda: [f64; 2],
    pub x0_star: [f64; 2],
    pub feasible_interval: (f64, f64),
    pub identity_residual: f64,
    pub open_loop_frequency: f64,
}

pub fn equilibrium(cfg: &RunConfig, out: &Path) -> Result<EquilibriumSummary> {
    prepare(cfg, out)?;
    let p = cfg.plant()?;
    let eq = &p.eq;
    output::write_equilibrium_csv(
        &out.join("equilibrium.csv"),
        eq,
        [&p.adj[0].pi0, &p.adj[1].pi0],
    )?;
    let s = EquilibriumSummary {
        n_cells: p.grid.n_cells(),
        max_age: p.grid.max_age(),
        u_star: eq.u_star,
        zeta: eq.zeta,
        lambda: eq.lambda,
        x0_star: eq.x0_star,
        feasible_interval: eq.feasible_interval(),
        identity_residual: eq.identity_residual(),
        open_loop_frequency: open_loop_jacobian_eigs(eq)[0].im.abs(),
    };
    output::write_json(&out.join("equilibrium.json"), &s)?;
    Ok(s)
}

#[derive(Debug, Serialize)]
pub struct LyapSummary {
    pub mode: &'static str,
    pub gamma: [f64; 2],
    pub sigma: [f64; 2],
    pub c_star: f64,
    pub v_initial: f64,
    pub dini_max_violation: f64,
    pub dini_max_raw: f64,
    pub g_steps_flagged: usize,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub controller: &'static str,
    pub solver: &'static str,
    pub n_cells: usize,
    pub t_final: f64,
    pub records: usize,
    pub min_u: f64,
    pub max_u: f64,
    pub final_eta: [f64; 2],
    pub final_eta_norm: f64,
    pub settling_time: Option<f64>,
    pub dilution_floor: Option<f64>,
    pub lyapunov: Option<LyapSummary>,
}

fn mode_name(cfg: &LyapConfig) -> &'static str {
    match cfg.mode {
        LyapMode::RegionD => "D",
        LyapMode::RegionDbar { .. } => "Dbar",
    }
}

fn summarize(
    p: &Plant,
    ctrl: &ControllerSpec,
    tr: &Trajectory,
    t_final: f64,
    lyap: Option<&LyapConfig>,
) -> Result<RunSummary> {
    let final_eta = *tr.eta.last().expect("trajectory has records");
    let lyapunov = match lyap {
        Some(lc) => {
            let roa = roa_estimate(lc, &p.eq)?;
            let d = dini_check(tr, lc, &p.eq)?;
            Some(LyapSummary {
                mode: mode_name(lc),
                gamma: lc.gamma,
                sigma: lc.sigma,
                c_star: roa.c_star,
                v_initial: tr.lyap.as_ref().map_or(f64::NAN, |s| s.v[0]),
                dini_max_violation: d.max_violation,
                dini_max_raw: d.max_raw,
                g_steps_flagged: g_decrease_violations(tr, lc, 0.05)?,
            })
        }
        None => None,
    };
    Ok(RunSummary {
        controller: ctrl.name(),
        solver: match tr.solver {
            predprey_core::Solver::Direct => "direct",
            predprey_core::Solver::Transformed => "transformed",
            predprey_core::Solver::Reduced => "reduced",
        },
        n_cells: p.grid.n_cells(),
        t_final,
        records: tr.len(),
        min_u: tr.min_u(),
        max_u: tr.u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_eta,
        final_eta_norm: final_eta[0].hypot(final_eta[1]),
        settling_time: tr.settling_time(SETTLE_TOL),
        dilution_floor: match ctrl {
            ControllerSpec::B(g) => Some(g.dilution_floor(&p.eq)),
            _ => None,
        },
        lyapunov,
    })
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub runs: Vec<RunSummary>,
    /// Largest relative density gap between the two solvers.
    pub cross_validation: Option<f64>,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    prepare(cfg, out)?;
    let p = cfg.plant()?;
    let ctrl = cfg.controller_spec(&p)?;
    let lyap = cfg.lyap_config(&ctrl, &p.eq)?;
    let sc = cfg.sim_config(ctrl.clone(), cfg.ic_spec(cfg.simulation.ic)?, lyap);
    let solvers = match cfg.simulation.solver {
        SolverKind::Both => vec![SolverKind::Direct, SolverKind::Transformed],
        s => vec![s],
    };
    let mut runs = Vec::new();
    for (k, solver) in solvers.iter().enumerate() {
        info!("simulating {} with the {solver:?} solver", ctrl.name());
        let tr = match solver {
            SolverKind::Transformed => simulate_transformed(&p, &sc)?,
            _ => simulate_direct(&p, &sc)?,
        };
        let suffix = if k == 0 { "" } else { "_transformed" };
        output::write_trajectory_csv(&out.join(format!("trajectory{suffix}.csv")), &tr)?;
        if k == 0 {
            write_profiles(cfg, out, &p, &tr)?;
        }
        if cfg.output.plot {
            plot_trajectory(out, suffix, &tr)?;
        }
        runs.push(summarize(&p, &ctrl, &tr, sc.t_final, lyap.as_ref())?);
    }
    let cross_validation = if cfg.simulation.solver == SolverKind::Both {
        Some(cross_validate(&p, &sc)?)
    } else {
        None
    };
    let s = SimulateSummary {
        runs,
        cross_validation,
    };
    output::write_json(&out.join("summary.json"), &s)?;
    Ok(s)
}

fn write_profiles(cfg: &RunConfig, out: &Path, p: &Plant, tr: &Trajectory) -> Result<()> {
    let every = cfg.simulation.profiles_every;
    if every == 0 {
        return Ok(());
    }
    for (i, snap) in tr.snapshots.iter().enumerate() {
        output::write_profile_csv(
            &out.join(format!("profiles_t{}.csv", i * every)),
            snap,
            &p.eq,
        )?;
    }
    if cfg.output.plot && !tr.snapshots.is_empty() {
        for sp in 0..2 {
            let names: Vec<String> = tr
                .snapshots
                .iter()
                .map(|s| format!("t = {:.2}", s.t))
                .collect();
            let series: Vec<Series> = tr
                .snapshots
                .iter()
                .zip(&names)
                .map(|(s, n)| Series {
                    name: n,
                    points: (0..p.grid.n_nodes())
                        .map(|j| (p.grid.node(j), s.x[sp][j]))
                        .collect(),
                })
                .collect();
            plot::lines(
                &out.join(format!("profiles_x{}.svg", sp + 1)),
                &format!("x{}(t, a) slices", sp + 1),
                "age a",
                "density",
                &series,
            )?;
        }
    }
    Ok(())
}

fn plot_trajectory(out: &Path, suffix: &str, tr: &Trajectory) -> Result<()> {
    let pts = |f: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
        (0..tr.len()).map(|k| (tr.times[k], f(k))).collect()
    };
    plot::lines(
        &out.join(format!("eta{suffix}.svg")),
        "eta(t)",
        "t",
        "eta",
        &[
            Series {
                name: "eta1",
                points: pts(&|k| tr.eta[k][0]),
            },
            Series {
                name: "eta2",
                points: pts(&|k| tr.eta[k][1]),
            },
        ],
    )?;
    plot::lines(
        &out.join(format!("u{suffix}.svg")),
        "dilution u(t)",
        "t",
        "u",
        &[Series {
            name: "u",
            points: pts(&|k| tr.u[k]),
        }],
    )
}

pub fn roa(cfg: &RunConfig, out: &Path) -> Result<()> {
    prepare(cfg, out)?;
    let p = cfg.plant()?;
    if !matches!(
        cfg.controller.kind,
        ControllerKind::A | ControllerKind::B | ControllerKind::Measured
    ) {
        return Err(CliError::Config(
            "roa needs controller kind a, b or measured".into(),
        ));
    }
    let ctrl = cfg.controller_spec(&p)?;
    let mut lc_cfg = cfg.clone();
    lc_cfg.lyapunov.enabled = true;
    let lc = lc_cfg
        .lyap_config(&ctrl, &p.eq)?
        .expect("CLF laws have a Lyapunov configuration");
    let est = roa_estimate(&lc, &p.eq)?;
    let scan = levelset_membership_scan(est.c_star, &lc, &p.eq, 400)?;
    let contour = levelset_contour(est.c_star, lc.eps, &p.eq, 720);
    output::write_roa_csv(&out.join("roa.csv"), &est.samples)?;
    output::write_contour_csv(&out.join("levelset.csv"), &contour)?;
    let summary = output::RoaSummary::new(mode_name(&lc), &est, scan.inside_level, scan.violations);
    output::write_json(&out.join("roa.json"), &summary)?;
    println!(
        "c* = {:.6} on {} at eta = ({:.4}, {:.4}); {} of {} sublevel grid points outside the region",
        est.c_star,
        est.active.label(),
        est.argmin[0],
        est.argmin[1],
        scan.violations,
        scan.inside_level
    );
    if cfg.output.plot {
        let mut series: Vec<Series> = [
            BoundaryPiece::H1,
            BoundaryPiece::H2,
            BoundaryPiece::UZero,
            BoundaryPiece::PhiBound,
        ]
        .iter()
        .filter_map(|piece| {
            let pts: Vec<(f64, f64)> = est
                .samples
                .iter()
                .filter(|s| s.piece == *piece && s.eta[0].abs() <= 4.0 && s.eta[1].abs() <= 4.0)
                .map(|s| (s.eta[0], s.eta[1]))
                .collect();
            (!pts.is_empty()).then(|| Series {
                name: piece.label(),
                points: pts,
            })
        })
        .collect();
        let mut ring: Vec<(f64, f64)> = contour.iter().map(|c| (c[0], c[1])).collect();
        ring.push(ring[0]);
        series.push(Series {
            name: "V1 = c*",
            points: ring,
        });
        plot::lines(
            &out.join("roa.svg"),
            "level set and region",
            "eta1",
            "eta2",
            &series,
        )?;
    }
    if scan.violations > 0 {
        log::warn!(
            "{} sublevel points fall outside the region",
            scan.violations
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub run: usize,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub ic: IcKind,
    pub status: String,
    pub min_u: f64,
    pub final_eta_norm: f64,
    pub settling_time: f64,
}

fn or_current(list: &[f64], current: Option<f64>) -> Vec<Option<f64>> {
    if list.is_empty() {
        vec![current]
    } else {
        list.iter().map(|v| Some(*v)).collect()
    }
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    prepare(cfg, out)?;
    let p = cfg.plant()?;
    let c = &cfg.controller;
    let ics = if cfg.sweep.ic.is_empty() {
        vec![cfg.simulation.ic]
    } else {
        cfg.sweep.ic.clone()
    };
    let mut jobs = Vec::new();
    for eps in or_current(&cfg.sweep.eps, c.eps) {
        for beta in or_current(&cfg.sweep.beta, c.beta) {
            for delta in or_current(&cfg.sweep.delta, c.delta) {
                for ic in &ics {
                    jobs.push((jobs.len(), eps, beta, delta, *ic));
                }
            }
        }
    }
    info!("sweep: {} runs", jobs.len());
    let rows: Vec<SweepRow> = jobs
        .into_par_iter()
        .map(|(run, eps, beta, delta, ic)| {
            let mut rc = cfg.clone();
            rc.controller.eps = eps;
            rc.controller.beta = beta;
            rc.controller.delta = delta;
            rc.simulation.ic = ic;
            let dir = out.join(format!("run_{run:03}"));
            let mut row = SweepRow {
                run,
                eps,
                beta,
                delta,
                ic,
                status: "ok".into(),
                min_u: f64::NAN,
                final_eta_norm: f64::NAN,
                settling_time: f64::NAN,
            };
            match sweep_run(&rc, &p, &dir) {
                Ok(s) => {
                    row.min_u = s.min_u;
                    row.final_eta_norm = s.final_eta_norm;
                    row.settling_time = s.settling_time.unwrap_or(f64::NAN);
                }
                Err(e) => row.status = format!("error {}: {e}", e.exit_code()),
            }
            row
        })
        .collect();
    let mut t = Table::create(
        out.join("sweep.csv"),
        &[
            "run",
            "eps",
            "beta",
            "delta",
            "ic",
            "status",
            "min_u",
            "final_eta_norm",
            "settling_time",
        ],
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), output::num);
    for r in &rows {
        t.row([
            r.run.to_string(),
            opt(r.eps),
            opt(r.beta),
            opt(r.delta),
            format!("{:?}", r.ic).to_lowercase(),
            r.status.clone(),
            output::num(r.min_u),
            output::num(r.final_eta_norm),
            output::num(r.settling_time),
        ])?;
    }
    t.finish()?;
    Ok(rows)
}

fn sweep_run(rc: &RunConfig, p: &Plant, dir: &Path) -> Result<RunSummary> {
    output::ensure_dir(dir)?;
    let ctrl = rc.controller_spec(p)?;
    let lyap = rc.lyap_config(&ctrl, &p.eq)?;
    let sc = rc.sim_config(ctrl.clone(), rc.ic_spec(rc.simulation.ic)?, lyap);
    let tr = match rc.simulation.solver {
        SolverKind::Transformed => simulate_transformed(p, &sc)?,
        _ => simulate_direct(p, &sc)?,
    };
    output::write_trajectory_csv(&dir.join("trajectory.csv"), &tr)?;
    let s = summarize(p, &ctrl, &tr, sc.t_final, lyap.as_ref())?;
    output::write_json(&dir.join("summary.json"), &s)?;
    Ok(s)
}

/// Runs the acceptance suite at the configured resolution. The configured
/// controller is validated first so that bad gains are reported as such.
pub fn verify(cfg: &RunConfig, out: &Path) -> Result<Vec<CriterionOutcome>> {
    prepare(cfg, out)?;
    let p = cfg.plant()?;
    cfg.controller_spec(&p)?;
    let vc = VerifyConfig {
        n_cells: cfg.verify.n_cells,
        u_star: cfg.equilibrium.u_star,
        t_final: cfg.verify.t_final,
    };
    let outcomes: Vec<CriterionOutcome> = (1..=13u8)
        .into_par_iter()
        .map(|id| run_criterion(id, &vc))
        .collect();
    for o in &outcomes {
        println!("{o}");
    }
    output::write_json(&out.join("verify.json"), &outcomes)?;
    let bad: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.acceptable())
        .map(|o| format!("{} ({})", o.id, o.status))
        .collect();
    if bad.is_empty() {
        Ok(outcomes)
    } else {
        Err(CliError::Verification(format!(
            "criteria {}",
            bad.join(", ")
        )))
    }
}
