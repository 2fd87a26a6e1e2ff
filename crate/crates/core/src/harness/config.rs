//! Run configuration (JSON, schema-versioned) and its validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Truncation};
use crate::nonlinear_solver::StepSolveConfig;
use crate::potentials::{Potential, PotentialKind};
use crate::stepper::SchemeParams;

use super::families::{InitialFamily, SourceSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Minimum reference-to-coarse step ratio of a convergence study.
pub const REFERENCE_FACTOR: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub points: Vec<usize>,
    #[serde(default)]
    pub truncation: Truncation,
}

impl GridSpec {
    pub fn line(extent: f64, points: usize) -> Self {
        GridSpec { dim: 1, extents: vec![extent], points: vec![points], truncation: Truncation::BoundedBox }
    }

    pub fn build(&self) -> Result<Arc<Grid<f64>>> {
        if self.extents.len() != self.dim || self.points.len() != self.dim {
            return Err(Error::param("grid", format!("dim = {} but {} extents and {} point counts given", self.dim, self.extents.len(), self.points.len())));
        }
        Ok(Arc::new(Grid::new(&self.extents, &self.points, self.truncation)?))
    }

    /// Short label such as `257` or `65x33`.
    pub fn label(&self) -> String {
        self.points.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("x")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub t_final: f64,
    /// Step count of a single run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Step counts of a sweep, strictly increasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    /// Reference step count of a convergence study; defaults to the smallest
    /// common multiple of `n_list` that is at least `16 * max(n_list)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
    pub ell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub theta: InitialFamily,
    pub phi: InitialFamily,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    ConvergenceStudy,
    AprioriSweep,
    SourceAverageStudy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Prefix of the run ids written to the reports.
    #[serde(default = "default_name")]
    pub name: String,
    pub mode: Mode,
    pub grid: GridSpec,
    pub scheme: SchemeSpec,
    pub potential: PotentialKind,
    /// Required unless the source is manufactured, which fixes its own initial data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub solver: StepSolveConfig,
    pub output_dir: PathBuf,
    /// Write a trajectory snapshot every this many steps (single runs; default: first and last level only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

fn default_name() -> String {
    "run".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn potential(&self) -> Result<Potential<f64>> {
        Potential::from_kind(self.potential).map_err(|e| match e {
            Error::InvalidParameter { field, reason } => Error::param(format!("potential.{field}"), reason),
            e => e,
        })
    }

    pub fn scheme_params(&self, n_steps: usize, monitor: bool) -> Result<SchemeParams<f64>> {
        Ok(SchemeParams::new(self.scheme.t_final, n_steps, self.scheme.ell, self.potential()?)
            .with_solver(self.solver)
            .with_monitoring(monitor))
    }

    /// Step counts this config runs, in increasing order (excluding the reference).
    pub fn step_counts(&self) -> Vec<usize> {
        match self.mode {
            Mode::Single => self.scheme.n_steps.into_iter().collect(),
            _ => self.scheme.n_list.clone().unwrap_or_default(),
        }
    }

    /// Reference step count of a convergence study.
    pub fn reference_steps(&self) -> Option<usize> {
        if let Some(n) = self.scheme.n_ref {
            return Some(n);
        }
        let list = self.scheme.n_list.as_ref()?;
        let max = *list.iter().max()?;
        let l = list.iter().fold(1usize, |acc, &n| lcm(acc, n));
        Some((REFERENCE_FACTOR * max).div_ceil(l) * l)
    }

    /// Initial temperature and phase on `grid`.
    pub fn initial_fields(&self, grid: &Arc<Grid<f64>>) -> Result<(Field<f64>, Field<f64>)> {
        if let Some((theta, phi)) = self.source.exact_initial(grid, self.scheme.ell) {
            return Ok((theta, phi));
        }
        let init = self.initial.as_ref().ok_or_else(|| Error::param("initial", "required for this source"))?;
        Ok((init.theta.build(grid), init.phi.build(grid)))
    }

    /// Field-level validation of everything that can be checked before running.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param("schema_version", format!("expected {SCHEMA_VERSION}")));
        }
        let grid = self.grid.build()?;
        let s = &self.scheme;
        if !(s.t_final > 0.0 && s.t_final.is_finite()) {
            return Err(Error::param("scheme.t_final", "must be positive and finite"));
        }
        if !(s.ell > 0.0 && s.ell.is_finite()) {
            return Err(Error::param("scheme.ell", "must be positive and finite"));
        }
        let p = self.potential()?;
        self.solver.validate()?;
        self.source.validate(&self.potential, self.grid.dim)?;
        match (&self.initial, self.source.is_manufactured()) {
            (Some(_), true) => {
                return Err(Error::param("initial", "must be omitted: the manufactured source fixes the initial data"))
            }
            (None, false) => return Err(Error::param("initial", "required")),
            (Some(init), false) => {
                init.theta.validate("initial.theta")?;
                init.phi.validate("initial.phi")?;
            }
            (None, true) => {}
        }
        let (_, phi0) = self.initial_fields(&grid)?;
        if let Some((i, &v)) = phi0.values().iter().enumerate().find(|(_, &v)| !p.in_domain_closure(v)) {
            return Err(Error::param(
                "initial.phi",
                format!("value {v} at node {i} lies outside the closed domain of beta for the {} potential", self.potential.name()),
            ));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::param("checkpoint_every", "must be at least 1"));
        }

        let counts = match self.mode {
            Mode::Single => {
                if s.n_list.is_some() || s.n_ref.is_some() {
                    return Err(Error::param("scheme.n_list", "only sweeps take a step-count list"));
                }
                vec![s.n_steps.ok_or_else(|| Error::param("scheme.n_steps", "required for a single run"))?]
            }
            mode => {
                if s.n_steps.is_some() {
                    return Err(Error::param("scheme.n_steps", "sweeps take `n_list` instead"));
                }
                let list = s.n_list.clone().ok_or_else(|| Error::param("scheme.n_list", "required for sweeps"))?;
                let min_len = if mode == Mode::ConvergenceStudy { 4 } else { 2 };
                if list.len() < min_len {
                    return Err(Error::param("scheme.n_list", format!("needs at least {min_len} entries, got {}", list.len())));
                }
                if let Some(w) = list.windows(2).find(|w| w[1] <= w[0]) {
                    let what = if w[0] == w[1] { "duplicate entry" } else { "entries out of order" };
                    return Err(Error::param("scheme.n_list", format!("must be strictly increasing ({what}: {} then {})", w[0], w[1])));
                }
                if mode != Mode::ConvergenceStudy && s.n_ref.is_some() {
                    return Err(Error::param("scheme.n_ref", "only convergence studies use a reference"));
                }
                list
            }
        };
        for &n in &counts {
            if n == 0 {
                return Err(Error::param("scheme.n_steps", "step counts must be at least 1"));
            }
            let h = s.t_final / n as f64;
            if h >= p.step_threshold() {
                return Err(Error::param(
                    "scheme.n_steps",
                    format!(
                        "N = {n} gives h = {h}, which violates the solvability threshold h < 1/|pi'|_inf = {}",
                        p.step_threshold()
                    ),
                ));
            }
            if self.mode == Mode::AprioriSweep && h >= p.estimate_threshold() {
                return Err(Error::param(
                    "scheme.n_list",
                    format!("N = {n} gives h = {h}, not below the estimate threshold h1 = 1/(4(|pi'|^2+1)) = {}", p.estimate_threshold()),
                ));
            }
        }
        match self.mode {
            Mode::ConvergenceStudy => {
                let n_ref = self.reference_steps().expect("list checked above");
                let max = *counts.last().expect("non-empty");
                if n_ref < REFERENCE_FACTOR * max {
                    return Err(Error::param("scheme.n_ref", format!("must be at least {REFERENCE_FACTOR} * {max}")));
                }
                if let Some(n) = counts.iter().find(|&&n| n_ref % n != 0) {
                    return Err(Error::param("scheme.n_ref", format!("{n_ref} is not a multiple of N = {n}")));
                }
            }
            Mode::SourceAverageStudy if self.source.is_zero() => {
                return Err(Error::param("source", "a source-average study needs a nonzero source"));
            }
            _ => {}
        }
        Ok(())
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}
