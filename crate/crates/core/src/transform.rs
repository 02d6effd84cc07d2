//! The change of variables `x_i(a,t) = x_i*(a) e^{eta_i(t)} (1 + psi_i(t-a))`.
//!
//! `eta` is the log of a weighted total abundance and `psi` the age-shape
//! deviation, stored as a trailing history window.

use serde::{Deserialize, Serialize};

use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::model::{tail_integral, AgeGrid, GridFn, KernelSet, PopulationState, PREDATOR, PREY};

/// Adjoint eigenfunction of one species and the normalisation of `Π`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointData {
    /// `π0(a) = e^{Λ(a)} ∫_a^A k̃(s) ds`.
    pub pi0: GridFn,
    /// `T(a) = ∫_a^A k̃(s) ds`.
    pub tail: GridFn,
    /// `∫ π0 x*`, so that `Π[x*] = 1` holds exactly on the grid.
    pub denom: f64,
    /// `∫ a k x*`; equal to `denom` in the continuum limit.
    pub denom_moment: f64,
}

impl AdjointData {
    pub fn new(eq: &Equilibrium, kernels: &KernelSet, species: usize) -> Self {
        let grid = &eq.grid;
        let tail = tail_integral(&eq.ktilde[species], grid);
        let pi0 = GridFn::new(
            grid,
            tail.iter()
                .zip(eq.cum_rate[species].iter())
                .map(|(t, l)| t * l.exp())
                .collect(),
        )
        .expect("finite adjoint");
        let denom = grid.trapz_product(&pi0, &eq.x_star[species]);
        let moment: Vec<f64> = (0..grid.n_nodes())
            .map(|j| grid.node(j) * kernels.birth[species][j] * eq.x_star[species][j])
            .collect();
        Self {
            pi0,
            tail,
            denom,
            denom_moment: grid.trapz(&moment),
        }
    }
}

/// Adjoint data for both species.
pub fn compute_pi0(eq: &Equilibrium, kernels: &KernelSet) -> [AdjointData; 2] {
    [
        AdjointData::new(eq, kernels, PREY),
        AdjointData::new(eq, kernels, PREDATOR),
    ]
}

/// Trailing window of `psi`, newest first: `samples[j] = psi(t - a_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryBuffer {
    samples: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new(grid: &AgeGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.n_nodes(),
                found: samples.len(),
            });
        }
        let buf = Self { samples };
        buf.check_admissible()?;
        Ok(buf)
    }

    pub fn zeros(grid: &AgeGrid) -> Self {
        Self {
            samples: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `psi(t)`.
    pub fn newest(&self) -> f64 {
        self.samples[0]
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Shifts the window forward one step and stores `psi(t + dt)`.
    pub fn push(&mut self, value: f64) {
        self.samples.rotate_right(1);
        self.samples[0] = value;
    }

    pub fn check_admissible(&self) -> Result<()> {
        match self.samples.iter().copied().find(|v| !(*v > -1.0)) {
            Some(value) => Err(Error::Inadmissible { what: "psi", value }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedState {
    pub t: f64,
    pub eta: [f64; 2],
    pub psi: [HistoryBuffer; 2],
}

impl TransformedState {
    pub fn equilibrium(grid: &AgeGrid) -> Self {
        Self {
            t: 0.0,
            eta: [0.0; 2],
            psi: [HistoryBuffer::zeros(grid), HistoryBuffer::zeros(grid)],
        }
    }
}

/// `Π[x] = ∫ π0 x / ∫ π0 x*`.
pub fn pi_functional(x: &GridFn, adj: &AdjointData, grid: &AgeGrid) -> Result<f64> {
    if x.len() != grid.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: grid.n_nodes(),
            found: x.len(),
        });
    }
    let p = grid.trapz_product(&adj.pi0, x) / adj.denom;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Inadmissible {
            what: "Pi functional",
            value: p,
        });
    }
    Ok(p)
}

pub fn to_transformed(
    state: &PopulationState,
    eq: &Equilibrium,
    adj: &[AdjointData; 2],
) -> Result<TransformedState> {
    let grid = &eq.grid;
    let mut eta = [0.0; 2];
    let mut psi = [HistoryBuffer::zeros(grid), HistoryBuffer::zeros(grid)];
    for i in 0..2 {
        let x = &state.x[i];
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonPositive {
                what: "population density",
                index,
                value,
            });
        }
        let p = pi_functional(x, &adj[i], grid)?;
        eta[i] = p.ln();
        let samples = x
            .iter()
            .zip(eq.x_star[i].iter())
            .map(|(xv, xs)| xv / (xs * p) - 1.0)
            .collect();
        psi[i] = HistoryBuffer::new(grid, samples)?;
    }
    Ok(TransformedState {
        t: state.t,
        eta,
        psi,
    })
}

pub fn reconstruct(ts: &TransformedState, eq: &Equilibrium) -> Result<PopulationState> {
    let grid = &eq.grid;
    let mut x = [GridFn::constant(grid, 0.0), GridFn::constant(grid, 0.0)];
    for i in 0..2 {
        ts.psi[i].check_admissible()?;
        let scale = ts.eta[i].exp();
        let v = eq.x_star[i]
            .iter()
            .zip(ts.psi[i].samples())
            .map(|(xs, p)| xs * scale * (1.0 + p))
            .collect();
        x[i] = GridFn::new(grid, v)?;
    }
    PopulationState::new(ts.t, x, grid)
}

/// Normalised interaction weights: `gbar[0] ∝ g1 x2*`, `gbar[1] ∝ g2 x1*`.
pub fn g_bar(kernels: &KernelSet, eq: &Equilibrium) -> Result<[GridFn; 2]> {
    let grid = &eq.grid;
    let mut out = [GridFn::constant(grid, 0.0), GridFn::constant(grid, 0.0)];
    for (i, j) in [(PREY, PREDATOR), (PREDATOR, PREY)] {
        let w = kernels.interaction[i].product(&eq.x_star[j]);
        let total = grid.trapz(&w);
        if !(total > 0.0) {
            return Err(Error::InvalidParameter {
                name: "interaction kernel",
                value: total,
                reason: "weighted interaction integral vanishes",
            });
        }
        out[i] = w.scaled(1.0 / total);
    }
    Ok(out)
}

/// `ln(1 + ∫ gbar(a) psi(t-a) da)`.
pub fn v_map(psi: &HistoryBuffer, gbar: &GridFn, grid: &AgeGrid) -> Result<f64> {
    let arg = 1.0 + grid.trapz_product(gbar, psi.samples());
    if !(arg > 0.0) {
        return Err(Error::Inadmissible {
            what: "1 + ∫ gbar psi",
            value: arg,
        });
    }
    Ok(arg.ln())
}

/// `[v_1(psi_1), v_2(psi_2)]`; `psi_1` is weighted by `gbar[1]` and `psi_2`
/// by `gbar[0]`, matching the interaction integrals in the `eta` dynamics.
pub fn v_maps(ts: &TransformedState, gbar: &[GridFn; 2], grid: &AgeGrid) -> Result<[f64; 2]> {
    Ok([
        v_map(&ts.psi[PREY], &gbar[PREDATOR], grid)?,
        v_map(&ts.psi[PREDATOR], &gbar[PREY], grid)?,
    ])
}

/// `P(psi) = ∫ psi(-a) T(a) da / ∫ T`.
pub fn p_functional(psi: &HistoryBuffer, adj: &AdjointData, grid: &AgeGrid) -> f64 {
    grid.trapz_product(psi.samples(), &adj.tail) / grid.trapz(&adj.tail)
}

/// `(|P(psi)|, |psi(0) - ∫ k̃(a) psi(-a) da|)`.
pub fn check_s(
    psi: &HistoryBuffer,
    ktilde: &GridFn,
    adj: &AdjointData,
    grid: &AgeGrid,
) -> (f64, f64) {
    let renewal = psi.newest() - grid.trapz_product(ktilde, psi.samples());
    (p_functional(psi, adj, grid).abs(), renewal.abs())
}
