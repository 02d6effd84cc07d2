//! CSV and JSON writers. Every number is written with 17 significant digits
//! so runs can be compared bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use predprey_core::lyapunov::{BoundarySample, RoaEstimate};
use predprey_core::{Equilibrium, PopulationState, Trajectory};

use crate::error::{CliError, Result};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub struct Table {
    path: PathBuf,
    w: csv::Writer<fs::File>,
}

impl Table {
    pub fn create(path: impl Into<PathBuf>, header: &[&str]) -> Result<Self> {
        let path = path.into();
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Csv {
            path: path.clone(),
            source: e,
        })?;
        w.write_record(header).map_err(|e| CliError::Csv {
            path: path.clone(),
            source: e,
        })?;
        Ok(Self { path, w })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| CliError::Csv {
            path: self.path.clone(),
            source: e,
        })
    }

    pub fn nums(&mut self, values: &[f64]) -> Result<()> {
        self.row(values.iter().map(|v| num(*v)))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_equilibrium_csv(path: &Path, eq: &Equilibrium, pi0: [&[f64]; 2]) -> Result<()> {
    let mut t = Table::create(
        path,
        &[
            "a", "x1_star", "x2_star", "pi0_1", "pi0_2", "ktilde_1", "ktilde_2",
        ],
    )?;
    for j in 0..eq.grid.n_nodes() {
        t.nums(&[
            eq.grid.node(j),
            eq.x_star[0][j],
            eq.x_star[1][j],
            pi0[0][j],
            pi0[1][j],
            eq.ktilde[0][j],
            eq.ktilde[1][j],
        ])?;
    }
    t.finish()?;
    Ok(())
}

/// `t,eta1,eta2,u,V0,V1,V,G1,G2`; the last four are `NaN` without a
/// Lyapunov configuration.
pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut t = Table::create(
        path,
        &["t", "eta1", "eta2", "u", "V0", "V1", "V", "G1", "G2"],
    )?;
    for k in 0..tr.len() {
        let (v1, v, g) = match &tr.lyap {
            Some(s) => (s.v1[k], s.v[k], s.g[k]),
            None => (f64::NAN, f64::NAN, [f64::NAN; 2]),
        };
        t.nums(&[
            tr.times[k],
            tr.eta[k][0],
            tr.eta[k][1],
            tr.u[k],
            tr.v0[k],
            v1,
            v,
            g[0],
            g[1],
        ])?;
    }
    t.finish()?;
    Ok(())
}

pub fn write_profile_csv(path: &Path, s: &PopulationState, eq: &Equilibrium) -> Result<()> {
    let mut t = Table::create(path, &["a", "x1", "x2", "x1_star", "x2_star"])?;
    for j in 0..eq.grid.n_nodes() {
        t.nums(&[
            eq.grid.node(j),
            s.x[0][j],
            s.x[1][j],
            eq.x_star[0][j],
            eq.x_star[1][j],
        ])?;
    }
    t.finish()?;
    Ok(())
}

pub fn write_roa_csv(path: &Path, samples: &[BoundarySample]) -> Result<()> {
    let mut t = Table::create(path, &["piece", "eta1", "eta2", "V1"])?;
    for s in samples {
        t.row([
            s.piece.label().to_string(),
            num(s.eta[0]),
            num(s.eta[1]),
            num(s.v1),
        ])?;
    }
    t.finish()?;
    Ok(())
}

pub fn write_contour_csv(path: &Path, contour: &[[f64; 2]]) -> Result<()> {
    let mut t = Table::create(path, &["eta1", "eta2"])?;
    for p in contour {
        t.nums(p)?;
    }
    t.finish()?;
    Ok(())
}

#[derive(Serialize)]
pub struct RoaSummary<'a> {
    pub mode: &'a str,
    pub c_star: f64,
    pub argmin: [f64; 2],
    pub active: &'a str,
    pub h: [f64; 2],
    pub piece_minima: Vec<(&'a str, f64, [f64; 2])>,
    pub scan_points_inside_level: usize,
    pub scan_violations: usize,
}

impl<'a> RoaSummary<'a> {
    pub fn new(mode: &'a str, roa: &'a RoaEstimate, inside: usize, violations: usize) -> Self {
        Self {
            mode,
            c_star: roa.c_star,
            argmin: roa.argmin,
            active: roa.active.label(),
            h: roa.h,
            piece_minima: roa
                .piece_minima
                .iter()
                .map(|(p, v, e)| (p.label(), *v, *e))
                .collect(),
            scan_points_inside_level: inside,
            scan_violations: violations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_significant_digits() {
        let s = num(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
