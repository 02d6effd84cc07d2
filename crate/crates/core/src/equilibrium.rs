//! Lotka-Sharpe exponents and the steady state at a prescribed dilution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::model::{cumulative, AgeGrid, GridFn, KernelSet, PREDATOR, PREY};

/// Bisection settings for `F(zeta) = ∫ k e^{-∫mu - zeta a} = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotkaSharpeSolver {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest |zeta| tried while doubling the initial bracket [-10, 10].
    pub max_bracket: f64,
}

impl Default for LotkaSharpeSolver {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            max_bracket: 640.0,
        }
    }
}

impl LotkaSharpeSolver {
    pub fn solve(&self, mu: &GridFn, k: &GridFn, grid: &AgeGrid) -> Result<f64> {
        let m = cumulative(mu, grid);
        self.solve_with_cumulative(&m, k, grid)
    }

    fn solve_with_cumulative(&self, m: &GridFn, k: &GridFn, grid: &AgeGrid) -> Result<f64> {
        if m.len() != grid.n_nodes() || k.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.n_nodes(),
                found: k.len().min(m.len()),
            });
        }
        let k_int = grid.trapz(k);
        if !(k_int > 0.0) {
            return Err(Error::InvalidParameter {
                name: "birth kernel",
                value: k_int,
                reason: "integral of the birth kernel must be positive",
            });
        }
        let resid = |zeta: f64| {
            let n = grid.n_cells();
            let h = grid.step();
            let term = |j: usize| k[j] * (-m[j] - zeta * grid.node(j)).exp();
            let inner: f64 = (1..n).map(term).sum();
            h * (inner + 0.5 * (term(0) + term(n))) - 1.0
        };

        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        let (mut f_lo, mut f_hi) = (resid(lo), resid(hi));
        while !(f_lo > 0.0 && f_hi < 0.0) {
            if lo.abs().max(hi) >= self.max_bracket || f_lo.is_nan() || f_hi.is_nan() {
                return Err(Error::BracketNotFound {
                    bound: self.max_bracket,
                    lo,
                    hi,
                    f_lo: f_lo + 1.0,
                    f_hi: f_hi + 1.0,
                });
            }
            if !(f_lo > 0.0) {
                lo *= 2.0;
                f_lo = resid(lo);
            }
            if !(f_hi < 0.0) {
                hi *= 2.0;
                f_hi = resid(hi);
            }
        }

        let mut best = (f64::INFINITY, 0.5 * (lo + hi));
        for _ in 0..self.max_iter {
            let mid = 0.5 * (lo + hi);
            let f = resid(mid);
            if f.abs() < best.0 {
                best = (f.abs(), mid);
            }
            if f.abs() <= self.tol {
                return Ok(mid);
            }
            if f > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
        }
        if best.0 <= self.tol {
            Ok(best.1)
        } else {
            Err(Error::NotConverged {
                iterations: self.max_iter,
                residual: best.0,
            })
        }
    }
}

/// Lotka-Sharpe exponent with the default solver settings.
pub fn solve_lotka_sharpe(mu: &GridFn, k: &GridFn, grid: &AgeGrid) -> Result<f64> {
    LotkaSharpeSolver::default().solve(mu, k, grid)
}

/// Steady state of the chemostat at dilution `u_star`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub grid: AgeGrid,
    pub zeta: [f64; 2],
    pub u_star: f64,
    /// `lambda[0] = ∫ g2 x1*`, `lambda[1] = ∫ g1 x2*`.
    pub lambda: [f64; 2],
    pub x_star: [GridFn; 2],
    pub x0_star: [f64; 2],
    /// Discounted birth kernels `k e^{-Λ}`; each integrates to one.
    pub ktilde: [GridFn; 2],
    /// Normalised profiles `e^{-Λ}` with `Λ(a) = ∫_0^a (zeta + mu)`.
    pub discount: [GridFn; 2],
    pub cum_rate: [GridFn; 2],
}

impl Equilibrium {
    /// Open interval of feasible setpoints `(0, min zeta)`.
    pub fn feasible_interval(&self) -> (f64, f64) {
        (0.0, self.zeta[0].min(self.zeta[1]))
    }

    /// Open-loop linearisation `[[0, -lambda2], [1/lambda1, 0]]`.
    pub fn open_loop_jacobian(&self) -> Mat2 {
        [[0.0, -self.lambda[1]], [1.0 / self.lambda[0], 0.0]]
    }

    /// Largest violation of the setpoint identities
    /// `zeta1 - lambda2 = zeta2 - 1/lambda1 = u*`.
    pub fn identity_residual(&self) -> f64 {
        let r1 = (self.zeta[0] - self.lambda[1] - self.u_star).abs();
        let r2 = (self.zeta[1] - 1.0 / self.lambda[0] - self.u_star).abs();
        r1.max(r2)
    }
}

/// Both Lotka-Sharpe exponents without building the full steady state.
pub fn lotka_sharpe_pair(kernels: &KernelSet, grid: &AgeGrid) -> Result<[f64; 2]> {
    let solver = LotkaSharpeSolver::default();
    Ok([
        solver.solve(&kernels.mortality[PREY], &kernels.birth[PREY], grid)?,
        solver.solve(&kernels.mortality[PREDATOR], &kernels.birth[PREDATOR], grid)?,
    ])
}

pub fn compute_equilibrium(
    kernels: &KernelSet,
    u_star: f64,
    grid: &AgeGrid,
) -> Result<Equilibrium> {
    let solver = LotkaSharpeSolver::default();
    let m = [
        cumulative(&kernels.mortality[PREY], grid),
        cumulative(&kernels.mortality[PREDATOR], grid),
    ];
    let zeta = [
        solver.solve_with_cumulative(&m[PREY], &kernels.birth[PREY], grid)?,
        solver.solve_with_cumulative(&m[PREDATOR], &kernels.birth[PREDATOR], grid)?,
    ];
    let upper = zeta[0].min(zeta[1]);
    if !(u_star > 0.0 && u_star < upper) {
        return Err(Error::InfeasibleSetpoint { u_star, upper });
    }

    let cum_rate: [GridFn; 2] = [0, 1].map(|i| {
        let v = (0..grid.n_nodes())
            .map(|j| m[i][j] + zeta[i] * grid.node(j))
            .collect();
        GridFn::new(grid, v).expect("finite cumulative rate")
    });
    let discount = [0, 1].map(|i| cum_rate[i].map(|l| (-l).exp()));
    let ktilde = [0, 1].map(|i| kernels.birth[i].product(&discount[i]));

    let g = &kernels.interaction;
    let x0_star = [
        1.0 / ((zeta[1] - u_star) * grid.trapz_product(&g[PREDATOR], &discount[PREY])),
        (zeta[0] - u_star) / grid.trapz_product(&g[PREY], &discount[PREDATOR]),
    ];
    let x_star = [0, 1].map(|i| discount[i].scaled(x0_star[i]));
    let lambda = [
        grid.trapz_product(&g[PREDATOR], &x_star[PREY]),
        grid.trapz_product(&g[PREY], &x_star[PREDATOR]),
    ];
    for (i, &x0) in x0_star.iter().enumerate() {
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(Error::NonPositive {
                what: if i == PREY {
                    "prey newborn density"
                } else {
                    "predator newborn density"
                },
                index: 0,
                value: x0,
            });
        }
    }

    Ok(Equilibrium {
        grid: *grid,
        zeta,
        u_star,
        lambda,
        x_star,
        x0_star,
        ktilde,
        discount,
        cum_rate,
    })
}

/// Eigenvalues of the open-loop linearisation, `±i sqrt(lambda2/lambda1)`.
pub fn open_loop_jacobian_eigs(eq: &Equilibrium) -> [Complex64; 2] {
    linalg::eigenvalues(&eq.open_loop_jacobian())
}
