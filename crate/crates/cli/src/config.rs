//! Run configuration: a TOML file, then `PREDPREY_<SECTION>_<KEY>`
//! environment overrides, then per-controller defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use predprey_core::controllers::sensor_equilibrium;
use predprey_core::lyapunov::{sigma_fits, LyapMode};
use predprey_core::simulate::ExpAffine;
use predprey_core::{
    AgeGrid, ControllerSpec, Equilibrium, GainsA, GainsB, GridFn, IcShape, IcSpec, KernelSet,
    KernelShape, LyapConfig, Plant, SimConfig,
};

use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "PREDPREY_";

const SECTIONS: [&str; 8] = [
    "model",
    "equilibrium",
    "controller",
    "simulation",
    "lyapunov",
    "output",
    "sweep",
    "verify",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub equilibrium: EquilibriumConfig,
    pub controller: ControllerConfig,
    pub simulation: SimulationConfig,
    pub lyapunov: LyapunovConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub verify: VerifySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub max_age: f64,
    pub n_cells: usize,
    pub mu_bar: [f64; 2],
    pub k_bar: [f64; 2],
    pub g_bar: [f64; 2],
    /// CSV with columns `a,mu1,mu2,k1,k2,g1,g2` on the grid nodes; replaces
    /// the exponential kernel family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_table: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let r = KernelShape::REFERENCE;
        Self {
            max_age: 1.0,
            n_cells: 400,
            mu_bar: [r.mu_bar; 2],
            k_bar: [r.k_bar; 2],
            g_bar: [r.g_bar; 2],
            kernel_table: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub u_star: f64,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self { u_star: 0.15 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    OpenLoop,
    #[default]
    A,
    B,
    FeedbackLinearizing,
    Measured,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    /// `c_i = 1`: total abundance.
    #[default]
    Total,
    /// `c1 = g2`, `c2 = g1`: the interaction-weighted populations.
    Interaction,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorKind>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcKind {
    Equilibrium,
    #[default]
    Fq,
    Sq,
    Custom,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Direct,
    Transformed,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub ic: IcKind,
    /// `[[log_scale1, slope1], [log_scale2, slope2]]` for `ic = "custom"`:
    /// `x_i(0, a) = x_i*(a) exp(log_scale_i + slope_i a)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<[[f64; 2]; 2]>,
    pub renewal_boundary: bool,
    pub record_every: usize,
    pub solver: SolverKind,
    /// Write age profiles every this many steps; 0 disables.
    pub profiles_every: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_final: 20.0,
            ic: IcKind::Fq,
            multipliers: None,
            renewal_boundary: true,
            record_every: 1,
            solver: SolverKind::Direct,
            profiles_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varpi: Option<f64>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            gamma: None,
            sigma: None,
            varpi: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plot: false,
        }
    }
}

/// Cartesian product of gains and initial conditions; empty lists fall back
/// to the controller and simulation sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub ic: Vec<IcKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub n_cells: usize,
    pub t_final: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            n_cells: 400,
            t_final: 20.0,
        }
    }
}

/// Reads `path` (or starts from defaults), applies overrides from `env`, and
/// fills controller defaults.
pub fn load(
    path: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    apply_env(&mut table, env)?;
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.materialize();
    Ok(cfg)
}

fn apply_env(
    table: &mut toml::Table,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<()> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != "PREDPREY_LOG")
        .collect();
    vars.sort();
    for (name, raw) in vars {
        let rest = name[ENV_PREFIX.len()..].to_ascii_lowercase();
        let Some(section) = SECTIONS
            .iter()
            .find(|s| rest.starts_with(*s) && rest[s.len()..].starts_with('_'))
        else {
            return Err(CliError::Config(format!("{name}: unknown section")));
        };
        let key = &rest[section.len() + 1..];
        let value = parse_env_value(&raw);
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key.to_string(), value);
            }
            _ => return Err(CliError::Config(format!("[{section}] is not a table"))),
        }
    }
    Ok(())
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Fills controller gains left unset with the reference values of the
    /// selected law, so the emitted config is complete.
    pub fn materialize(&mut self) {
        let c = &mut self.controller;
        match c.kind {
            ControllerKind::A | ControllerKind::Measured => {
                c.eps.get_or_insert(0.2);
                c.beta.get_or_insert(0.6);
                if c.kind == ControllerKind::Measured {
                    c.sensor.get_or_insert(SensorKind::Total);
                }
            }
            ControllerKind::B => {
                c.eps.get_or_insert(0.01);
                c.beta.get_or_insert(0.13);
                c.delta.get_or_insert(0.2);
            }
            ControllerKind::FeedbackLinearizing => {
                c.k1.get_or_insert(1.0);
                c.k2.get_or_insert(2.0);
            }
            ControllerKind::OpenLoop => {}
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<AgeGrid> {
        Ok(AgeGrid::new(self.model.max_age, self.model.n_cells)?)
    }

    pub fn kernels(&self, grid: &AgeGrid) -> Result<KernelSet> {
        match &self.model.kernel_table {
            Some(path) => read_kernel_table(path, grid),
            None => {
                let m = &self.model;
                let shapes = [0, 1].map(|i| KernelShape {
                    mu_bar: m.mu_bar[i],
                    k_bar: m.k_bar[i],
                    g_bar: m.g_bar[i],
                });
                Ok(predprey_core::build_kernels(shapes, grid)?)
            }
        }
    }

    pub fn plant(&self) -> Result<Plant> {
        let grid = self.grid()?;
        let kernels = self.kernels(&grid)?;
        Ok(Plant::new(kernels, self.equilibrium.u_star, grid)?)
    }

    pub fn controller_spec(&self, plant: &Plant) -> Result<ControllerSpec> {
        let c = &self.controller;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("[controller] {name} is required")))
        };
        Ok(match c.kind {
            ControllerKind::OpenLoop => ControllerSpec::OpenLoop,
            ControllerKind::A => {
                ControllerSpec::A(GainsA::new(need(c.eps, "eps")?, need(c.beta, "beta")?)?)
            }
            ControllerKind::B => ControllerSpec::B(GainsB::new(
                need(c.eps, "eps")?,
                need(c.beta, "beta")?,
                need(c.delta, "delta")?,
                &plant.eq,
            )?),
            ControllerKind::FeedbackLinearizing => ControllerSpec::FeedbackLinearizing {
                k1: need(c.k1, "k1")?,
                k2: need(c.k2, "k2")?,
            },
            ControllerKind::Measured => {
                let gains = GainsA::new(need(c.eps, "eps")?, need(c.beta, "beta")?)?;
                let grid = &plant.grid;
                let (c1, c2) = match c.sensor.unwrap_or_default() {
                    SensorKind::Total => (GridFn::constant(grid, 1.0), GridFn::constant(grid, 1.0)),
                    SensorKind::Interaction => (
                        plant.kernels.interaction[1].clone(),
                        plant.kernels.interaction[0].clone(),
                    ),
                };
                let sensors = sensor_equilibrium(c1, c2, &plant.kernels, &plant.eq)?;
                ControllerSpec::Measured { gains, sensors }
            }
        })
    }

    pub fn ic_spec(&self, kind: IcKind) -> Result<IcSpec> {
        let shape = match kind {
            IcKind::Equilibrium => IcShape::Equilibrium,
            IcKind::Fq => IcShape::Fq,
            IcKind::Sq => IcShape::Sq,
            IcKind::Custom => {
                let m = self.simulation.multipliers.ok_or_else(|| {
                    CliError::Config("[simulation] ic = \"custom\" needs multipliers".into())
                })?;
                IcShape::Multipliers {
                    m: m.map(|[log_scale, slope]| ExpAffine { log_scale, slope }),
                }
            }
        };
        Ok(IcSpec {
            shape,
            renewal_boundary: self.simulation.renewal_boundary,
        })
    }

    /// Lyapunov settings for the controller, with the overrides of the
    /// `[lyapunov]` section; `None` for laws without one.
    pub fn lyap_config(
        &self,
        ctrl: &ControllerSpec,
        eq: &Equilibrium,
    ) -> Result<Option<LyapConfig>> {
        if !self.lyapunov.enabled {
            return Ok(None);
        }
        let fits = sigma_fits(eq)?;
        let Some(mut cfg) = LyapConfig::for_controller(ctrl, eq, &fits)? else {
            return Ok(None);
        };
        let l = &self.lyapunov;
        if let (Some(v), LyapMode::RegionDbar { delta, .. }) = (l.varpi, cfg.mode) {
            cfg.mode = LyapMode::RegionDbar { delta, varpi: v };
            cfg.gamma = cfg.gamma_bounds(eq)?.map(|g| 2.0 * g);
        }
        if let Some(g) = l.gamma {
            cfg.gamma = g;
        }
        if let Some(s) = l.sigma {
            cfg.sigma = s;
        }
        cfg.validate(eq)?;
        Ok(Some(cfg))
    }

    pub fn sim_config(
        &self,
        ctrl: ControllerSpec,
        ic: IcSpec,
        lyap: Option<LyapConfig>,
    ) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            t_final: s.t_final,
            controller: ctrl,
            ic,
            record_every: s.record_every,
            snapshot_every: (s.profiles_every > 0).then_some(s.profiles_every),
            lyap,
        }
    }
}

fn read_kernel_table(path: &Path, grid: &AgeGrid) -> Result<KernelSet> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cols: [Vec<f64>; 7] = Default::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        if rec.len() != 7 {
            return Err(CliError::Config(format!(
                "{}: expected 7 columns a,mu1,mu2,k1,k2,g1,g2",
                path.display()
            )));
        }
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Config(format!("{}: bad number `{field}`", path.display()))
            })?;
            c.push(v);
        }
    }
    if cols[0].len() != grid.n_nodes() {
        return Err(CliError::Config(format!(
            "{}: {} rows but the grid has {} nodes (n_cells + 1)",
            path.display(),
            cols[0].len(),
            grid.n_nodes()
        )));
    }
    for (j, a) in cols[0].iter().enumerate() {
        if (a - grid.node(j)).abs() > 1e-9 * grid.max_age() {
            return Err(CliError::Config(format!(
                "{}: row {j} has a = {a}, expected grid node {}",
                path.display(),
                grid.node(j)
            )));
        }
    }
    let f = |k: usize| GridFn::new(grid, cols[k].clone());
    Ok(KernelSet::from_tables(
        grid,
        [f(1)?, f(2)?],
        [f(3)?, f(4)?],
        [f(5)?, f(6)?],
    )?)
}
