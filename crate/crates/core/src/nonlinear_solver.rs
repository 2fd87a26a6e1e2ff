//! Per-step phase inclusion
//!
//! ```text
//! phi - h lap_N phi + h (xi + pi(phi)) = g,   xi in beta(phi)
//! ```
//!
//! solved through its Yosida regularization (`xi = beta_eps(phi)`) by damped
//! semismooth Newton. Each Newton correction is a shifted Helmholtz solve with
//! the variable diagonal `1 + h (beta_eps'(phi) + pi')`, which stays positive
//! whenever `h |pi'|_inf < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_h, solve_shifted, CgConfig, Field};
use crate::potentials::Potential;
use crate::scalar::Scalar;

/// How the Yosida parameter is chosen from the time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EpsSchedule {
    /// `eps = h`.
    TieToH,
    Fixed { eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSolveConfig {
    pub eps_schedule: EpsSchedule,
    /// Newton stops once `|F(phi)|_H <= newton_tol * max(|g|_H, 1)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Step-length reduction factor of the backtracking line search.
    pub backtrack: f64,
    /// Smallest step length tried before giving up.
    pub min_step: f64,
    /// Relative tolerance of the inner CG solves.
    pub linear_tol: f64,
}

impl Default for StepSolveConfig {
    fn default() -> Self {
        StepSolveConfig {
            eps_schedule: EpsSchedule::TieToH,
            newton_tol: 1e-10,
            newton_max_iter: 100,
            backtrack: 0.5,
            min_step: (2.0f64).powi(-20),
            linear_tol: 1e-10,
        }
    }
}

impl StepSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::param("solver.newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::param("solver.newton_max_iter", "must be at least 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::param("solver.backtrack", "must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::param("solver.min_step", "must lie in (0, 1]"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::param("solver.linear_tol", "must be positive"));
        }
        if let EpsSchedule::Fixed { eps } = self.eps_schedule {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::param("solver.eps_schedule.eps", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn eps_for<T: Scalar>(&self, h: T) -> T {
        match self.eps_schedule {
            EpsSchedule::TieToH => h,
            EpsSchedule::Fixed { eps } => T::lit(eps),
        }
    }

    fn with_eps(&self, eps: f64) -> Self {
        StepSolveConfig { eps_schedule: EpsSchedule::Fixed { eps }, ..*self }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub eps_used: f64,
    pub linear_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct PhaseSolution<T> {
    pub phi: Field<T>,
    pub xi: Field<T>,
    pub report: StepSolveReport,
}

fn check_threshold<T: Scalar>(p: &Potential<T>, h: T) -> Result<()> {
    if !(h > T::zero()) {
        return Err(Error::param("h", "time step must be positive"));
    }
    if h * p.pi_lipschitz() >= T::one() {
        return Err(Error::StepTooLarge { h: h.to_f64_lossy(), threshold: p.step_threshold().to_f64_lossy() });
    }
    Ok(())
}

/// Pointwise `beta_eps` and `beta_eps'` of a field.
fn yosida_field<T: Scalar>(p: &Potential<T>, eps: T, phi: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let mut value = Vec::with_capacity(phi.len());
    let mut slope = Vec::with_capacity(phi.len());
    for &r in phi {
        let (v, s) = p.yosida_with_derivative(eps, r)?;
        value.push(v);
        slope.push(s);
    }
    Ok((value, slope))
}

/// `F(phi) = phi - h lap phi + h (beta_eps(phi) + pi(phi)) - g`, plus `beta_eps`
/// and `beta_eps'` at `phi`.
fn residual<T: Scalar>(
    p: &Potential<T>,
    h: T,
    eps: T,
    g: &Field<T>,
    phi: &[T],
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let grid = g.grid();
    let (beta, slope) = yosida_field(p, eps, phi)?;
    let mut lap = vec![T::zero(); phi.len()];
    grid.laplacian_into(phi, &mut lap);
    let res = (0..phi.len())
        .map(|i| phi[i] - h * lap[i] + h * (beta[i] + p.pi(phi[i])) - g.values()[i])
        .collect();
    Ok((res, beta, slope))
}

/// Solves the regularized phase inclusion for one time step.
///
/// `initial` seeds Newton (defaults to `g`).
pub fn solve_phase_step<T: Scalar>(
    p: &Potential<T>,
    h: T,
    g: &Field<T>,
    cfg: &StepSolveConfig,
    initial: Option<&Field<T>>,
) -> Result<PhaseSolution<T>> {
    check_threshold(p, h)?;
    cfg.validate()?;
    let eps = cfg.eps_for(h);
    let grid = g.grid();
    let n = g.len();
    let mut phi = match initial {
        Some(f) => {
            g.check_same_grid(f)?;
            f.values().to_vec()
        }
        None => g.values().to_vec(),
    };
    let threshold = T::lit(cfg.newton_tol) * norm_h(g).max(T::one());
    // Below this the residual is dominated by rounding (the Yosida quotient
    // loses `|phi| / eps` relative to the data) and Newton cannot improve it.
    let g_norm = norm_h(g);
    let stiffness = T::one() + h / eps + h * grid.laplacian_diagonal().abs();
    let floor_at = |phi: &[T], beta: &[T]| {
        T::lit(64.0) * T::epsilon() * (g_norm + T::one() + stiffness * grid.inner(phi, phi).sqrt() + h * grid.inner(beta, beta).sqrt())
    };
    let lin_cfg = CgConfig { rel_tol: T::lit(cfg.linear_tol), max_iter: None };
    let w = |v: &[T]| grid.inner(v, v).sqrt();

    let (mut res, mut beta, mut slope) = residual(p, h, eps, g, &phi)?;
    let mut res_norm = w(&res);
    let mut floor = floor_at(&phi, &beta);
    let mut history = vec![res_norm.to_f64_lossy()];
    let mut linear_iterations = 0;
    let mut iterations = 0;

    while res_norm > threshold.max(floor) {
        if iterations >= cfg.newton_max_iter {
            return Err(Error::NewtonDivergence { iterations, history });
        }
        let diag: Vec<T> = (0..n)
            .map(|i| T::one() + h * (slope[i] - p.pi_lipschitz()))
            .collect();
        let rhs: Vec<T> = res.iter().map(|&r| -r).collect();
        let (delta, stats) = solve_shifted(grid, &diag, h, &rhs, None, &lin_cfg)?;
        linear_iterations += stats.iterations;
        iterations += 1;

        let mut step = T::one();
        let mut accepted = None;
        while step >= T::lit(cfg.min_step) {
            let trial: Vec<T> = (0..n).map(|i| phi[i] + step * delta[i]).collect();
            let (t_res, t_beta, t_slope) = residual(p, h, eps, g, &trial)?;
            let t_norm = w(&t_res);
            if t_norm <= (T::one() - T::lit(1e-4) * step) * res_norm || t_norm <= floor {
                accepted = Some((trial, t_res, t_beta, t_slope, t_norm));
                break;
            }
            step = step * T::lit(cfg.backtrack);
        }
        match accepted {
            Some((trial, t_res, t_beta, t_slope, t_norm)) => {
                phi = trial;
                res = t_res;
                beta = t_beta;
                slope = t_slope;
                res_norm = t_norm;
                floor = floor_at(&phi, &beta);
                history.push(res_norm.to_f64_lossy());
            }
            None if res_norm <= floor => break,
            None => return Err(Error::NewtonDivergence { iterations, history }),
        }
    }

    let report = StepSolveReport {
        iterations,
        final_residual: res_norm.to_f64_lossy(),
        eps_used: eps.to_f64_lossy(),
        linear_iterations,
    };
    Ok(PhaseSolution {
        phi: Field::new(g.grid_arc(), phi)?,
        xi: Field::new(g.grid_arc(), beta)?,
        report,
    })
}

/// One level of an `eps -> 0` continuation.
#[derive(Clone, Debug)]
pub struct ContinuationLevel<T> {
    pub eps: f64,
    pub solution: PhaseSolution<T>,
    /// `|phi_{eps_prev} - phi_eps|_H`, absent for the first level.
    pub cauchy_difference: Option<T>,
}

/// Solves the phase inclusion for a strictly decreasing list of Yosida
/// parameters, warm-starting each level from the previous one.
pub fn solve_eps_continuation<T: Scalar>(
    p: &Potential<T>,
    h: T,
    g: &Field<T>,
    cfg: &StepSolveConfig,
    eps_list: &[f64],
) -> Result<Vec<ContinuationLevel<T>>> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::param("eps_list", "must be positive and strictly decreasing"));
    }
    let mut levels: Vec<ContinuationLevel<T>> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let warm = levels.last().map(|l| &l.solution.phi);
        let solution = solve_phase_step(p, h, g, &cfg.with_eps(eps), warm)?;
        let cauchy_difference = levels
            .last()
            .map(|l| norm_h(&l.solution.phi.lincomb(T::one(), -T::one(), &solution.phi)));
        levels.push(ContinuationLevel { eps, solution, cauchy_difference });
    }
    Ok(levels)
}
