//! Age grid, grid functions, trapezoid quadrature and the model kernels.
//!
//! Every age integral in the crate goes through the composite trapezoid rule
//! on a uniform grid `a_j = j * da`, `j = 0..=n_cells`. Index 0 of every
//! species pair is the prey, index 1 the predator.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

pub const PREY: usize = 0;
pub const PREDATOR: usize = 1;

/// Uniform discretisation of the age interval `[0, A]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeGrid {
    max_age: f64,
    n_cells: usize,
}

impl AgeGrid {
    pub fn new(max_age: f64, n_cells: usize) -> Result<Self> {
        if !(max_age.is_finite() && max_age > 0.0) {
            return Err(Error::InvalidParameter {
                name: "max_age",
                value: max_age,
                reason: "maximum age must be positive and finite",
            });
        }
        if n_cells == 0 {
            return Err(Error::InvalidParameter {
                name: "n_cells",
                value: 0.0,
                reason: "at least one cell is required",
            });
        }
        Ok(Self { max_age, n_cells })
    }

    pub fn max_age(&self) -> f64 {
        self.max_age
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Node spacing `da`; also the simulation time step.
    pub fn step(&self) -> f64 {
        self.max_age / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.max_age
        } else {
            j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |j| self.node(j))
    }

    /// Trapezoid weight of node `j`.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n_cells {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| self.weight(j)).collect()
    }

    /// Trapezoid rule over raw samples. Lengths are the caller's responsibility.
    #[inline]
    pub fn trapz(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_nodes());
        let n = f.len() - 1;
        let inner: f64 = f[1..n].iter().sum();
        self.step() * (inner + 0.5 * (f[0] + f[n]))
    }

    /// Trapezoid rule of the pointwise product `f * g`.
    #[inline]
    pub fn trapz_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_nodes());
        debug_assert_eq!(g.len(), self.n_nodes());
        let n = f.len() - 1;
        let inner: f64 = f[1..n].iter().zip(&g[1..n]).map(|(a, b)| a * b).sum();
        self.step() * (inner + 0.5 * (f[0] * g[0] + f[n] * g[n]))
    }

    fn check(&self, f: &GridFn) -> Result<()> {
        if f.len() != self.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: self.n_nodes(),
                found: f.len(),
            });
        }
        Ok(())
    }
}

/// Real function sampled at the nodes of an [`AgeGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridFn(Vec<f64>);

impl GridFn {
    pub fn new(grid: &AgeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: grid.n_nodes(),
                found: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "grid function",
                index,
                value,
            });
        }
        Ok(Self(values))
    }

    pub fn from_fn(grid: &AgeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.nodes().map(f).collect())
    }

    pub fn constant(grid: &AgeGrid, c: f64) -> Self {
        Self(vec![c; grid.n_nodes()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise product.
    pub fn product(&self, other: &GridFn) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn first_nonpositive(&self) -> Option<(usize, f64)> {
        self.0
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0))
            .map(|(i, &v)| (i, v))
    }
}

impl Deref for GridFn {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Composite trapezoid approximation of `∫_0^A f(a) da`.
pub fn quad(f: &GridFn, grid: &AgeGrid) -> Result<f64> {
    grid.check(f)?;
    Ok(grid.trapz(f))
}

/// Running integral `F(a_j) = ∫_0^{a_j} f`, built with the trapezoid rule.
pub fn cumulative(f: &[f64], grid: &AgeGrid) -> GridFn {
    let h = 0.5 * grid.step();
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += h * (w[0] + w[1]);
        out.push(acc);
    }
    GridFn(out)
}

/// Tail integral `T(a_j) = ∫_{a_j}^A f`, built with the trapezoid rule.
pub fn tail_integral(f: &[f64], grid: &AgeGrid) -> GridFn {
    let h = 0.5 * grid.step();
    let n = f.len();
    let mut out = vec![0.0; n];
    for j in (0..n - 1).rev() {
        out[j] = out[j + 1] + h * (f[j] + f[j + 1]);
    }
    GridFn(out)
}

/// Closed-form kernel parameters: `mu(a) = mu_bar e^a`, `k(a) = k_bar e^-a`,
/// `g(a) = g_bar (a - a^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelShape {
    pub mu_bar: f64,
    pub k_bar: f64,
    pub g_bar: f64,
}

impl KernelShape {
    /// Shape used for both species in the reference scenario.
    pub const REFERENCE: KernelShape = KernelShape {
        mu_bar: 0.5,
        k_bar: 3.0,
        g_bar: 0.4,
    };
}

/// Mortality, birth and interaction kernels for both species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub mortality: [GridFn; 2],
    pub birth: [GridFn; 2],
    pub interaction: [GridFn; 2],
    pub shapes: Option<[KernelShape; 2]>,
}

impl KernelSet {
    /// Validates user supplied tabulated kernels.
    pub fn from_tables(
        grid: &AgeGrid,
        mortality: [GridFn; 2],
        birth: [GridFn; 2],
        interaction: [GridFn; 2],
    ) -> Result<Self> {
        let set = Self {
            mortality,
            birth,
            interaction,
            shapes: None,
        };
        set.validate(grid)?;
        Ok(set)
    }

    fn validate(&self, grid: &AgeGrid) -> Result<()> {
        let groups: [(&'static str, &[GridFn; 2]); 3] = [
            ("mortality kernel", &self.mortality),
            ("birth kernel", &self.birth),
            ("interaction kernel", &self.interaction),
        ];
        for (what, pair) in groups {
            for f in pair {
                grid.check(f)?;
                if let Some((index, &value)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                    return Err(Error::NonPositive { what, index, value });
                }
                let integral = grid.trapz(f);
                if !(integral > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: what,
                        value: integral,
                        reason: "kernel integral must be strictly positive",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Samples the closed-form kernel family on `grid`.
pub fn build_kernels(shapes: [KernelShape; 2], grid: &AgeGrid) -> Result<KernelSet> {
    for s in &shapes {
        for (name, value) in [("mu_bar", s.mu_bar), ("k_bar", s.k_bar), ("g_bar", s.g_bar)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "kernel shape parameters must be positive",
                });
            }
        }
    }
    let mortality = shapes.map(|s| GridFn::from_fn(grid, |a| s.mu_bar * a.exp()));
    let birth = shapes.map(|s| GridFn::from_fn(grid, |a| s.k_bar * (-a).exp()));
    let interaction = shapes.map(|s| GridFn::from_fn(grid, |a| s.g_bar * (a - a * a)));
    let set = KernelSet {
        mortality,
        birth,
        interaction,
        shapes: Some(shapes),
    };
    set.validate(grid)?;
    Ok(set)
}

/// Population densities of prey and predator at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub t: f64,
    pub x: [GridFn; 2],
}

impl PopulationState {
    pub fn new(t: f64, x: [GridFn; 2], grid: &AgeGrid) -> Result<Self> {
        for f in &x {
            grid.check(f)?;
            if let Some((index, value)) = f.first_nonpositive() {
                return Err(Error::NonPositive {
                    what: "population density",
                    index,
                    value,
                });
            }
        }
        Ok(Self { t, x })
    }

    /// Replaces each newborn density by the value that satisfies the discrete
    /// renewal condition given the other nodes.
    pub fn with_renewal_boundary(mut self, kernels: &KernelSet, grid: &AgeGrid) -> Result<Self> {
        for i in 0..2 {
            let x0 = renewal_boundary(&self.x[i], &kernels.birth[i], grid)?;
            if !(x0 > 0.0) {
                return Err(Error::NonPositive {
                    what: "newborn density",
                    index: 0,
                    value: x0,
                });
            }
            self.x[i].values_mut()[0] = x0;
        }
        Ok(self)
    }
}

/// `|x(0) - ∫ k x|`; the state is renewal-consistent when this is at most
/// `tol_bc * x(0)`.
pub fn bc_residual(x: &GridFn, k: &GridFn, grid: &AgeGrid) -> Result<f64> {
    grid.check(x)?;
    grid.check(k)?;
    Ok((x[0] - grid.trapz_product(k, x)).abs())
}

pub const DEFAULT_TOL_BC: f64 = 1e-6;

/// Newborn density solving `x(0) = Σ w_j k_j x_j` with the `j = 0` term moved
/// to the left-hand side.
pub fn renewal_boundary(x: &[f64], k: &[f64], grid: &AgeGrid) -> Result<f64> {
    let w0k0 = grid.weight(0) * k[0];
    if w0k0 >= 1.0 {
        return Err(Error::SingularBoundary { value: w0k0 });
    }
    let n = grid.n_cells();
    let h = grid.step();
    let inner: f64 = (1..n).map(|j| k[j] * x[j]).sum();
    let sum = h * inner + 0.5 * h * k[n] * x[n];
    Ok(sum / (1.0 - w0k0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> AgeGrid {
        AgeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn grid_nodes_are_uniform_and_end_at_max_age() {
        let g = AgeGrid::new(2.0, 8).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes.len(), 9);
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[8], 2.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(AgeGrid::new(0.0, 4).is_err());
        assert!(AgeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn quad_of_constant_is_exact() {
        let g = grid(10);
        assert_eq!(quad(&GridFn::constant(&g, 1.0), &g).unwrap(), 1.0);
    }

    #[test]
    fn quad_of_parabola_and_exponential() {
        // closed-form antiderivatives
        let g = grid(400);
        let h2 = g.step() * g.step();
        let p = GridFn::from_fn(&g, |a| 0.4 * (a - a * a));
        assert!((quad(&p, &g).unwrap() - 0.4 / 6.0).abs() < h2);
        let e = GridFn::from_fn(&g, |a| 3.0 * (-a).exp());
        let exact = 3.0 * (1.0 - (-1.0f64).exp());
        assert!((exact - 1.89636).abs() < 1e-5);
        assert!((quad(&e, &g).unwrap() - exact).abs() < h2);
    }

    #[test]
    fn quad_is_exact_for_piecewise_linear() {
        let g = grid(7);
        let f = GridFn::from_fn(&g, |a| 2.0 * a - 0.5);
        assert!((quad(&f, &g).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quad_rejects_length_mismatch() {
        let g = grid(10);
        let f = GridFn::constant(&grid(11), 1.0);
        assert!(matches!(quad(&f, &g), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn quad_converges_at_second_order() {
        let f = |a: f64| 3.0 * (-a).exp();
        let exact = 3.0 * (1.0 - (-1.0f64).exp());
        let err = |n: usize| {
            let g = grid(n);
            (quad(&GridFn::from_fn(&g, f), &g).unwrap() - exact).abs()
        };
        for n in [25, 50, 100, 200] {
            let ratio = err(n) / err(2 * n);
            assert!((ratio - 4.0).abs() < 0.05, "n = {n}: ratio {ratio}");
        }
    }

    #[test]
    fn cumulative_and_tail_split_the_integral() {
        let g = grid(50);
        let f = GridFn::from_fn(&g, |a| (2.0 * a).sin() + 1.5);
        let total = quad(&f, &g).unwrap();
        let c = cumulative(&f, &g);
        let t = tail_integral(&f, &g);
        for j in 0..g.n_nodes() {
            assert!((c[j] + t[j] - total).abs() < 1e-13);
        }
        assert_eq!(c[0], 0.0);
        assert_eq!(t[50], 0.0);
    }

    #[test]
    fn reference_kernels_match_closed_forms() {
        let g = grid(400);
        let k = build_kernels([KernelShape::REFERENCE; 2], &g).unwrap();
        assert_eq!(k.mortality[PREY][0], 0.5);
        assert_eq!(k.interaction[PREDATOR][0], 0.0);
        assert!(k.interaction[PREDATOR][400].abs() < 1e-15);
        // direct evaluation: 3 e^-1
        assert!((k.birth[PREY][400] - 1.103_638_323_514_327).abs() < 1e-12);
    }

    #[test]
    fn build_kernels_rejects_nonpositive_shape() {
        let g = grid(10);
        let bad = KernelShape {
            k_bar: 0.0,
            ..KernelShape::REFERENCE
        };
        assert!(matches!(
            build_kernels([KernelShape::REFERENCE, bad], &g),
            Err(Error::InvalidParameter { name: "k_bar", .. })
        ));
    }

    #[test]
    fn bc_residual_trivial_cases() {
        let g = grid(20);
        let one = GridFn::constant(&g, 1.0);
        let zero = GridFn::constant(&g, 0.0);
        assert_eq!(bc_residual(&one, &zero, &g).unwrap(), 1.0);

        // k chosen so that x ≡ 1 is renewal consistent, then double x(0)
        let k = GridFn::constant(&g, 1.0);
        assert!(bc_residual(&one, &k, &g).unwrap() < 1e-15);
        let mut doubled = one.clone();
        doubled.values_mut()[0] = 2.0;
        let r = bc_residual(&doubled, &k, &g).unwrap();
        // the boundary node carries trapezoid weight da/2
        assert!((r - (1.0 - 0.5 * g.step())).abs() < 1e-12);
    }

    #[test]
    fn renewal_boundary_closes_the_birth_integral() {
        let g = grid(40);
        let k = GridFn::from_fn(&g, |a| 3.0 * (-a).exp());
        let x = GridFn::from_fn(&g, |a| 10.0 * (1.0 + a));
        let state = PopulationState::new(0.0, [x.clone(), x], &g).unwrap();
        let kernels = KernelSet {
            mortality: [GridFn::constant(&g, 1.0), GridFn::constant(&g, 1.0)],
            birth: [k.clone(), k.clone()],
            interaction: [GridFn::constant(&g, 1.0), GridFn::constant(&g, 1.0)],
            shapes: None,
        };
        let fixed = state.with_renewal_boundary(&kernels, &g).unwrap();
        assert!(bc_residual(&fixed.x[0], &k, &g).unwrap() < 1e-12);
    }

    #[test]
    fn renewal_boundary_detects_coarse_grid() {
        let g = grid(1);
        let k = GridFn::constant(&g, 3.0);
        let x = GridFn::constant(&g, 1.0);
        assert!(matches!(
            renewal_boundary(&x, &k, &g),
            Err(Error::SingularBoundary { .. })
        ));
    }

    #[test]
    fn population_state_requires_positive_densities() {
        let g = grid(4);
        let mut x = GridFn::constant(&g, 1.0);
        x.values_mut()[2] = 0.0;
        let ok = GridFn::constant(&g, 1.0);
        assert!(matches!(
            PopulationState::new(0.0, [ok, x], &g),
            Err(Error::NonPositive { index: 2, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quad_is_linear(
                f in prop::collection::vec(-10.0f64..10.0, 33),
                h in prop::collection::vec(-10.0f64..10.0, 33),
                alpha in -5.0f64..5.0,
                beta in -5.0f64..5.0,
            ) {
                let g = AgeGrid::new(1.0, 32).unwrap();
                let f = GridFn::new(&g, f).unwrap();
                let h = GridFn::new(&g, h).unwrap();
                let combo = GridFn::new(
                    &g,
                    f.iter().zip(h.iter()).map(|(a, b)| alpha * a + beta * b).collect(),
                ).unwrap();
                let lhs = quad(&combo, &g).unwrap();
                let rhs = alpha * quad(&f, &g).unwrap() + beta * quad(&h, &g).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn kernels_nonnegative_for_positive_shapes(
                mu in 0.01f64..5.0, k in 0.01f64..10.0, gb in 0.01f64..3.0,
            ) {
                let g = AgeGrid::new(1.0, 64).unwrap();
                let s = KernelShape { mu_bar: mu, k_bar: k, g_bar: gb };
                let set = build_kernels([s, KernelShape::REFERENCE], &g).unwrap();
                for pair in [&set.mortality, &set.birth, &set.interaction] {
                    prop_assert!(pair.iter().all(|f| f.iter().all(|&v| v >= 0.0)));
                }
            }
        }
    }
}
