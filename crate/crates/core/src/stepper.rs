//! Semi-implicit stepping of the coupled heat / phase system.
//!
//! Each step first solves the phase inclusion
//! `phi_{n+1} - h lap phi_{n+1} + h (xi_{n+1} + pi(phi_{n+1})) = phi_n + h ell theta_n`,
//! then the heat equation
//! `theta_{n+1} - h lap theta_{n+1} = h f_{n+1} + ell phi_n - ell phi_{n+1} + theta_n`.
//! The old temperature drives the phase step, so the two solves decouple.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{helmholtz_solve_with, CgConfig, Field, Grid};
use crate::nonlinear_solver::{solve_phase_step, StepSolveConfig, StepSolveReport};
use crate::potentials::Potential;
use crate::scalar::Scalar;

/// Upper bound on `(N + 1) * points` stored by a trajectory.
pub const MAX_STORED_VALUES: usize = 1 << 27;

#[derive(Clone, Debug)]
pub struct SchemeParams<T> {
    pub t_final: T,
    pub n_steps: usize,
    pub ell: T,
    pub potential: Potential<T>,
    pub solve_cfg: StepSolveConfig,
    /// Also require `h < h1` so that the uniform estimates apply.
    pub monitor_estimates: bool,
}

impl<T: Scalar> SchemeParams<T> {
    pub fn new(t_final: T, n_steps: usize, ell: T, potential: Potential<T>) -> Self {
        SchemeParams {
            t_final,
            n_steps,
            ell,
            potential,
            solve_cfg: StepSolveConfig::default(),
            monitor_estimates: false,
        }
    }

    pub fn with_monitoring(mut self, on: bool) -> Self {
        self.monitor_estimates = on;
        self
    }

    pub fn with_solver(mut self, cfg: StepSolveConfig) -> Self {
        self.solve_cfg = cfg;
        self
    }

    pub fn h(&self) -> T {
        self.t_final / T::from_usize_lossy(self.n_steps)
    }

    pub fn time(&self, n: usize) -> T {
        self.t_final * T::from_usize_lossy(n) / T::from_usize_lossy(self.n_steps)
    }

    pub fn eps(&self) -> T {
        self.solve_cfg.eps_for(self.h())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > T::zero() && self.t_final.is_finite()) {
            return Err(Error::param("t_final", "must be positive and finite"));
        }
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        if !(self.ell >= T::zero() && self.ell.is_finite()) {
            return Err(Error::param("ell", "must be non-negative and finite"));
        }
        self.solve_cfg.validate()?;
        let h = self.h();
        let p = &self.potential;
        if h * p.pi_lipschitz() >= T::one() {
            return Err(Error::StepTooLarge { h: h.to_f64_lossy(), threshold: p.step_threshold().to_f64_lossy() });
        }
        if self.monitor_estimates && h >= p.estimate_threshold() {
            return Err(Error::StepAboveEstimateThreshold {
                h: h.to_f64_lossy(),
                threshold: p.estimate_threshold().to_f64_lossy(),
            });
        }
        Ok(())
    }
}

/// Time-averaged source terms `f_k = (1/h) int_{(k-1)h}^{kh} f`, `k = 1..N`.
///
/// `phase` is an optional extra right-hand side of the phase equation, used
/// only by manufactured-solution checks.
#[derive(Clone, Debug, Default)]
pub struct Forcing<T> {
    pub heat: Option<Vec<Field<T>>>,
    pub phase: Option<Vec<Field<T>>>,
}

impl<T: Scalar> Forcing<T> {
    pub fn zero() -> Self {
        Forcing { heat: None, phase: None }
    }

    pub fn heat_only(heat: Vec<Field<T>>) -> Self {
        Forcing { heat: Some(heat), phase: None }
    }

    /// `f_k` for `k = 1..=N` (`None` when zero).
    pub fn heat_at(&self, k: usize) -> Option<&Field<T>> {
        self.heat.as_ref().map(|v| &v[k - 1])
    }

    pub fn phase_at(&self, k: usize) -> Option<&Field<T>> {
        self.phase.as_ref().map(|v| &v[k - 1])
    }

    fn check(&self, n_steps: usize, grid: &Arc<Grid<T>>) -> Result<()> {
        for (name, seq) in [("heat", &self.heat), ("phase", &self.phase)] {
            if let Some(seq) = seq {
                if seq.len() != n_steps {
                    return Err(Error::param(
                        format!("forcing.{name}"),
                        format!("expected {n_steps} averages, got {}", seq.len()),
                    ));
                }
                if seq.iter().any(|f| f.grid() != grid.as_ref()) {
                    return Err(Error::GridMismatch);
                }
            }
        }
        Ok(())
    }
}

/// `(theta_n, phi_n, xi_n)`; `xi` is absent at level 0.
#[derive(Clone, Debug)]
pub struct State<T> {
    pub level: usize,
    pub theta: Field<T>,
    pub phi: Field<T>,
    pub xi: Option<Field<T>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub phase: StepSolveReport,
    pub heat_linear_iterations: usize,
    pub heat_relative_residual: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub params: SchemeParams<T>,
    pub grid: Arc<Grid<T>>,
    pub states: Vec<State<T>>,
    pub forcing: Forcing<T>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn h(&self) -> T {
        self.params.h()
    }

    pub fn n_steps(&self) -> usize {
        self.params.n_steps
    }

    pub fn theta(&self, n: usize) -> &Field<T> {
        &self.states[n].theta
    }

    pub fn phi(&self, n: usize) -> &Field<T> {
        &self.states[n].phi
    }

    /// `xi_n` for `n >= 1`.
    pub fn xi(&self, n: usize) -> &Field<T> {
        self.states[n].xi.as_ref().expect("xi is defined for n >= 1")
    }

    /// Discrete `int (theta_n + ell phi_n)`.
    pub fn enthalpy(&self, n: usize) -> T {
        self.theta(n).lincomb(T::one(), self.params.ell, self.phi(n)).integral()
    }
}

/// Advances one step. `f_next` is `f_{n+1}` (`None` = zero source).
pub fn step<T: Scalar>(
    prev: &State<T>,
    params: &SchemeParams<T>,
    f_next: Option<&Field<T>>,
    phase_source: Option<&Field<T>>,
) -> Result<(State<T>, StepDiagnostics)> {
    let h = params.h();
    let ell = params.ell;
    let n = prev.level;
    let wrap = |e: Error| e.at_step(n);

    let mut g = prev.phi.lincomb(T::one(), h * ell, &prev.theta);
    if let Some(s) = phase_source {
        g = g.lincomb(T::one(), h, s);
    }
    let phase = solve_phase_step(&params.potential, h, &g, &params.solve_cfg, Some(&prev.phi)).map_err(wrap)?;

    let mut rhs = prev.theta.lincomb(T::one(), ell, &prev.phi).lincomb(T::one(), -ell, &phase.phi);
    if let Some(f) = f_next {
        rhs = rhs.lincomb(T::one(), h, f);
    }
    let cg = CgConfig { rel_tol: T::lit(params.solve_cfg.linear_tol), max_iter: None };
    let (theta, stats) = helmholtz_solve_with(h, &rhs, Some(&prev.theta), &cg).map_err(wrap)?;

    let diagnostics = StepDiagnostics {
        step: n + 1,
        phase: phase.report,
        heat_linear_iterations: stats.iterations,
        heat_relative_residual: stats.relative_residual,
    };
    let state = State { level: n + 1, theta, phi: phase.phi, xi: Some(phase.xi) };
    Ok((state, diagnostics))
}

/// Runs all `N` steps from `(theta0, phi0)`.
pub fn run<T: Scalar>(
    params: &SchemeParams<T>,
    theta0: &Field<T>,
    phi0: &Field<T>,
    forcing: Forcing<T>,
) -> Result<Trajectory<T>> {
    params.validate()?;
    theta0.check_same_grid(phi0)?;
    let grid = theta0.grid_arc().clone();
    forcing.check(params.n_steps, &grid)?;
    if !theta0.is_finite() || !phi0.is_finite() {
        return Err(Error::param("initial data", "must be finite"));
    }
    if let Some((index, &value)) = phi0
        .values()
        .iter()
        .enumerate()
        .find(|(_, &v)| !params.potential.in_domain_closure(v))
    {
        return Err(Error::InfeasibleInitialPhase { index, value: value.to_f64_lossy() });
    }
    let stored = (params.n_steps + 1).saturating_mul(grid.len());
    if stored > MAX_STORED_VALUES {
        return Err(Error::TrajectoryTooLarge { values: stored, limit: MAX_STORED_VALUES });
    }

    let mut states = Vec::with_capacity(params.n_steps + 1);
    let mut diagnostics = Vec::with_capacity(params.n_steps);
    states.push(State { level: 0, theta: theta0.clone(), phi: phi0.clone(), xi: None });
    for k in 1..=params.n_steps {
        let (next, diag) = step(&states[k - 1], params, forcing.heat_at(k), forcing.phase_at(k))?;
        states.push(next);
        diagnostics.push(diag);
    }
    Ok(Trajectory { params: params.clone(), grid, states, forcing, diagnostics })
}
