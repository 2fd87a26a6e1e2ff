//! A-priori bound monitoring and time-discretization error norms.
//!
//! [`apriori_report`] evaluates the discrete counterparts of the quantities
//! that stay bounded uniformly in `h` (energy, dissipation, `xi`, Laplacians)
//! and re-checks the one-step energy inequality obtained by testing the heat
//! equation with `h theta_{n+1}` and the phase equation with
//! `ell^2 (phi_{n+1} - phi_n)`. Under Yosida regularization the convex part
//! entering that inequality is the Moreau envelope `beta_hat_eps`, whose
//! derivative is the `xi` actually computed.
//!
//! [`error_report`] compares a coarse trajectory against a same-grid
//! reference with a finer time step; all time integrals are exact for the
//! piecewise-polynomial interpolants involved.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_sq, neumann_laplacian, norm_h, norm_v, norm_v_sq, Field, Grid};
use crate::quadrature::{gauss_legendre, on_interval};
use crate::scalar::Scalar;
use crate::source::{time_averages, TimeSource, AVERAGE_POINTS};
use crate::stepper::Trajectory;

/// Uniform-in-`h` quantities of one trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub linf_h_theta_bar: f64,
    pub l2_v_theta_bar: f64,
    pub l2_h_dt_theta_hat: f64,
    pub l2_h_dt_phi_hat: f64,
    pub linf_v_phi_bar: f64,
    /// `sup_n int beta_hat(P phi_n)` with `P` the projection onto the closed domain of `beta`.
    pub l1_linf_betahat_phi_bar: f64,
    pub l2_h_xi_bar: f64,
    pub l2_h_lap_theta_bar: f64,
    pub l2_h_lap_phi_bar: f64,
    /// Largest `max(0, lhs - rhs)` of the one-step energy inequality.
    pub energy_step_violation: f64,
    /// Same for the inequality summed over `n = 0..m-1`, maximized over `m`.
    pub energy_sum_violation: f64,
    /// Largest distance of any `phi_n` node value from `D(beta)` (reported, never clipped).
    pub domain_excess: f64,
}

impl NormReport {
    pub const MONITORED: [&'static str; 9] = [
        "linf_h_theta_bar",
        "l2_v_theta_bar",
        "l2_h_dt_theta_hat",
        "l2_h_dt_phi_hat",
        "linf_v_phi_bar",
        "l1_linf_betahat_phi_bar",
        "l2_h_xi_bar",
        "l2_h_lap_theta_bar",
        "l2_h_lap_phi_bar",
    ];

    /// The nine monitored norms in [`Self::MONITORED`] order.
    pub fn monitored(&self) -> [f64; 9] {
        [
            self.linf_h_theta_bar,
            self.l2_v_theta_bar,
            self.l2_h_dt_theta_hat,
            self.l2_h_dt_phi_hat,
            self.linf_v_phi_bar,
            self.l1_linf_betahat_phi_bar,
            self.l2_h_xi_bar,
            self.l2_h_lap_theta_bar,
            self.l2_h_lap_phi_bar,
        ]
    }
}

/// One-step energy balance: left and right sides for step `n -> n+1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyStep {
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluates the one-step energy inequality for every step.
pub fn energy_steps<T: Scalar>(traj: &Trajectory<T>) -> Result<Vec<EnergyStep>> {
    if traj.forcing.phase.is_some() {
        return Err(Error::param("trajectory", "energy inequality needs a source-free phase equation"));
    }
    let h = traj.h();
    let ell = traj.params.ell;
    let ell2 = ell * ell;
    let p = &traj.params.potential;
    let kappa = p.pi_lipschitz();
    let eps = traj.params.eps();
    let half = T::lit(0.5);
    let envelope = |u: &Field<T>| -> Result<T> {
        let mut acc = T::zero();
        for (i, &v) in u.values().iter().enumerate() {
            acc = acc + u.grid().weight(i) * p.moreau_envelope(eps, v)?;
        }
        Ok(acc)
    };
    let mut out = Vec::with_capacity(traj.n_steps());
    let mut env_prev = envelope(traj.phi(0))?;
    for n in 0..traj.n_steps() {
        let (a, b) = (traj.theta(n), traj.theta(n + 1));
        let (pn, qn) = (traj.phi(n), traj.phi(n + 1));
        let env_next = envelope(qn)?;
        let dphi = qn.lincomb(T::one() / h, -T::one() / h, pn);
        let dq = qn.lincomb(T::one(), -T::one(), pn);
        let lhs = half * norm_h(b).powi(2) - half * norm_h(a).powi(2)
            + half * norm_h(&b.lincomb(T::one(), -T::one(), a)).powi(2)
            + h * gradient_sq(b)
            + ell2 * h / T::lit(4.0) * norm_h(&dphi).powi(2)
            + half * ell2 * (norm_v_sq(qn) - norm_v_sq(pn))
            + half * ell2 * norm_v_sq(&dq)
            + ell2 * (env_next - env_prev);
        let f2 = traj.forcing.heat_at(n + 1).map(|f| norm_h(f).powi(2)).unwrap_or_else(T::zero);
        let rhs = half * h * f2
            + T::lit(1.5) * h * norm_h(b).powi(2)
            + h * ell2 * ell2 * norm_h(a).powi(2)
            + T::lit(2.0) * (kappa * kappa + T::one()) * ell2 * h * norm_v_sq(qn);
        out.push(EnergyStep { lhs: lhs.to_f64_lossy(), rhs: rhs.to_f64_lossy() });
        env_prev = env_next;
    }
    Ok(out)
}

/// Monitored norms plus the energy-inequality re-check. Requires `h < h1`.
pub fn apriori_report<T: Scalar>(traj: &Trajectory<T>) -> Result<NormReport> {
    let h = traj.h();
    let p = &traj.params.potential;
    if h >= p.estimate_threshold() {
        return Err(Error::StepAboveEstimateThreshold {
            h: h.to_f64_lossy(),
            threshold: p.estimate_threshold().to_f64_lossy(),
        });
    }
    norm_report(traj)
}

/// Same quantities as [`apriori_report`] without the step-size requirement;
/// above `h1` the energy inequality is not guaranteed and violations are
/// merely reported.
pub fn norm_report<T: Scalar>(traj: &Trajectory<T>) -> Result<NormReport> {
    let h = traj.h();
    let p = &traj.params.potential;
    let n_steps = traj.n_steps();
    let mut r = NormReport::default();
    let (mut l2v_theta, mut dt_theta, mut dt_phi, mut xi2, mut lap_theta, mut lap_phi) =
        (T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    let (mut linf_theta, mut linf_phi, mut betahat, mut excess) = (T::zero(), T::zero(), T::zero(), T::zero());
    for n in 1..=n_steps {
        let (theta, phi) = (traj.theta(n), traj.phi(n));
        linf_theta = linf_theta.max(norm_h(theta));
        linf_phi = linf_phi.max(norm_v(phi));
        l2v_theta = l2v_theta + h * norm_v_sq(theta);
        dt_theta = dt_theta + h * (norm_h(&theta.lincomb(T::one(), -T::one(), traj.theta(n - 1))) / h).powi(2);
        dt_phi = dt_phi + h * (norm_h(&phi.lincomb(T::one(), -T::one(), traj.phi(n - 1))) / h).powi(2);
        xi2 = xi2 + h * norm_h(traj.xi(n)).powi(2);
        lap_theta = lap_theta + h * norm_h(&neumann_laplacian(theta)).powi(2);
        lap_phi = lap_phi + h * norm_h(&neumann_laplacian(phi)).powi(2);
        let mut env = T::zero();
        for (i, &v) in phi.values().iter().enumerate() {
            env = env + phi.grid().weight(i) * p.beta_hat(p.project_to_domain(v)).to_float();
            excess = excess.max(p.distance_to_domain(v));
        }
        betahat = betahat.max(env);
    }
    r.linf_h_theta_bar = linf_theta.to_f64_lossy();
    r.l2_v_theta_bar = l2v_theta.sqrt().to_f64_lossy();
    r.l2_h_dt_theta_hat = dt_theta.sqrt().to_f64_lossy();
    r.l2_h_dt_phi_hat = dt_phi.sqrt().to_f64_lossy();
    r.linf_v_phi_bar = linf_phi.to_f64_lossy();
    r.l1_linf_betahat_phi_bar = betahat.to_f64_lossy();
    r.l2_h_xi_bar = xi2.sqrt().to_f64_lossy();
    r.l2_h_lap_theta_bar = lap_theta.sqrt().to_f64_lossy();
    r.l2_h_lap_phi_bar = lap_phi.sqrt().to_f64_lossy();
    r.domain_excess = excess.to_f64_lossy();

    if traj.forcing.phase.is_none() {
        let steps = energy_steps(traj)?;
        let (mut sl, mut sr) = (0.0, 0.0);
        for s in &steps {
            r.energy_step_violation = r.energy_step_violation.max(s.lhs - s.rhs);
            sl += s.lhs;
            sr += s.rhs;
            r.energy_sum_violation = r.energy_sum_violation.max(sl - sr);
        }
    }
    Ok(r)
}

/// The five time-discretization error norms of a coarse run against a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `|hat phi_h - phi|_{Linf H}`
    pub e_phi_linf_h: f64,
    /// `|bar phi_h - phi|_{L2 V}`
    pub e_phi_l2_v: f64,
    /// `|hat theta_h - theta + ell (hat phi_h - phi)|_{Linf H}`
    pub e_combo_linf_h: f64,
    /// `|bar theta_h - theta|_{L2 V}`
    pub e_theta_l2_v: f64,
    /// `|hat theta_h - theta|_{Linf H}`
    pub e_theta_linf_h: f64,
}

impl ErrorReport {
    pub const NAMES: [&'static str; 5] =
        ["e_phi_linf_h", "e_phi_l2_v", "e_combo_linf_h", "e_theta_l2_v", "e_theta_linf_h"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.e_phi_linf_h, self.e_phi_l2_v, self.e_combo_linf_h, self.e_theta_l2_v, self.e_theta_linf_h]
    }

    /// `ell e_phi_linf + ell e_phi_l2v + e_combo + e_theta_l2v`, the combined
    /// quantity bounded by `M h^{1/2}`.
    pub fn combined(&self, ell: f64) -> f64 {
        ell * self.e_phi_linf_h + ell * self.e_phi_l2_v + self.e_combo_linf_h + self.e_theta_l2_v
    }
}

/// Error norms of `coarse` with the reference standing in for the exact
/// solution: its hat interpolant in the `Linf(H)` norms, its bar interpolant
/// in the `L2(V)` norms.
pub fn error_report<T: Scalar>(coarse: &Trajectory<T>, reference: &Trajectory<T>) -> Result<ErrorReport> {
    if *coarse.grid != *reference.grid {
        return Err(Error::IncompatibleTrajectories("different spatial grids".into()));
    }
    let (tc, tr) = (coarse.params.t_final, reference.params.t_final);
    if (tc - tr).abs() > T::lit(1e-12) * tr.abs() {
        return Err(Error::IncompatibleTrajectories(format!("final times {tc} and {tr} differ")));
    }
    if coarse.params.ell != reference.params.ell {
        return Err(Error::IncompatibleTrajectories("different latent-heat coefficients".into()));
    }
    let (nc, nr) = (coarse.n_steps(), reference.n_steps());
    if nr % nc != 0 {
        return Err(Error::IncompatibleTrajectories(format!("reference N = {nr} is not a multiple of N = {nc}")));
    }
    let ratio = nr / nc;
    let fine_h = reference.h();
    let ell = coarse.params.ell;
    let hat_at = |level: fn(&Trajectory<T>, usize) -> &Field<T>, j: usize| -> Field<T> {
        let n = j / ratio;
        let k = j % ratio;
        if k == 0 {
            level(coarse, n).clone()
        } else {
            let tau = T::from_usize_lossy(k) / T::from_usize_lossy(ratio);
            level(coarse, n).lincomb(T::one() - tau, tau, level(coarse, n + 1))
        }
    };
    let c_theta: fn(&Trajectory<T>, usize) -> &Field<T> = |t, n| t.theta(n);
    let c_phi: fn(&Trajectory<T>, usize) -> &Field<T> = |t, n| t.phi(n);

    let (mut e_phi, mut e_combo, mut e_theta) = (T::zero(), T::zero(), T::zero());
    let (mut l2v_phi, mut l2v_theta) = (T::zero(), T::zero());
    for j in 0..=nr {
        let d_phi = hat_at(c_phi, j).lincomb(T::one(), -T::one(), reference.phi(j));
        let d_theta = hat_at(c_theta, j).lincomb(T::one(), -T::one(), reference.theta(j));
        e_phi = e_phi.max(norm_h(&d_phi));
        e_theta = e_theta.max(norm_h(&d_theta));
        e_combo = e_combo.max(norm_h(&d_theta.lincomb(T::one(), ell, &d_phi)));

        if j < nr {
            // on (j h_ref, (j+1) h_ref] the coarse bar is level n + 1, the reference bar level j + 1
            let n = j / ratio + 1;
            let d_phi = coarse.phi(n).lincomb(T::one(), -T::one(), reference.phi(j + 1));
            let d_theta = coarse.theta(n).lincomb(T::one(), -T::one(), reference.theta(j + 1));
            l2v_phi = l2v_phi + fine_h * norm_v_sq(&d_phi);
            l2v_theta = l2v_theta + fine_h * norm_v_sq(&d_theta);
        }
    }
    Ok(ErrorReport {
        e_phi_linf_h: e_phi.to_f64_lossy(),
        e_phi_l2_v: l2v_phi.sqrt().to_f64_lossy(),
        e_combo_linf_h: e_combo.to_f64_lossy(),
        e_theta_l2_v: l2v_theta.sqrt().to_f64_lossy(),
        e_theta_linf_h: e_theta.to_f64_lossy(),
    })
}

/// Quadrature points per step used for `|bar f_h - f|_{L2 H}`.
const ERROR_POINTS: usize = 10;

/// `|bar f_h - f|_{L2(0,T;H)}` with `f_k` the step averages and the outer
/// time integral by 10-point Gauss–Legendre per step.
pub fn source_average_error<T: Scalar, S: TimeSource<T> + ?Sized>(
    src: &S,
    grid: &Arc<Grid<T>>,
    t_final: T,
    h: T,
) -> Result<T> {
    let steps = t_final / h;
    let n_steps = steps.round();
    if !(h > T::zero()) || (steps - n_steps).abs() > T::lit(1e-9) * steps || n_steps < T::one() {
        return Err(Error::param("h", "must divide the final time into a whole number of steps"));
    }
    let n_steps = n_steps.to_usize().unwrap_or(1);
    let averages = time_averages(src, grid, t_final, n_steps, AVERAGE_POINTS);
    let (x, w) = gauss_legendre::<T>(ERROR_POINTS);
    let mut total = T::zero();
    for (k, fk) in averages.iter().enumerate() {
        let a = h * T::from_usize_lossy(k);
        for (t, wt) in on_interval(&x, &w, a, a + h) {
            total = total + wt * norm_h(&fk.lincomb(T::one(), -T::one(), &src.eval(t, grid))).powi(2);
        }
    }
    Ok(total.sqrt())
}

/// `C exp(C h m)`, the discrete Gronwall bound for sequences with
/// `a_m <= C + C h sum_{j<m} a_j`.
pub fn discrete_gronwall_bound<T: Scalar>(c: T, h: T, m: usize) -> T {
    c * (c * h * T::from_usize_lossy(m)).exp()
}

/// Least-squares slope of `log err` against `log h`; `NaN` if any error is
/// not strictly positive.
pub fn loglog_slope(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    if hs.len() < 2 || errs.iter().any(|&e| !(e > 0.0)) {
        return f64::NAN;
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Potential;
    use crate::source::FnSource;
    use crate::stepper::{run, Forcing, SchemeParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(p: Potential<f64>, n: usize, amp: f64) -> Trajectory<f64> {
        traj_with(p, n, amp, true)
    }

    fn traj_with(p: Potential<f64>, n: usize, amp: f64, monitor: bool) -> Trajectory<f64> {
        let grid = Grid::line(1.0, 65).unwrap();
        let params = SchemeParams::new(0.5, n, 1.0, p).with_monitoring(monitor);
        let theta0 = Field::from_fn(&grid, |x: [f64; 2]| amp * (std::f64::consts::PI * x[0]).cos());
        let phi0 = Field::from_fn(&grid, |x: [f64; 2]| 0.9 * amp * (2.0 * std::f64::consts::PI * x[0]).cos());
        let src = FnSource(|t: f64, x: [f64; 2]| t.sin() * (3.0 * x[0]).cos());
        let forcing = crate::source::forcing_for(&src, &grid, 0.5, n);
        run(&params, &theta0, &phi0, forcing).unwrap()
    }

    #[test]
    fn zero_run_gives_zero_report() {
        let grid = Grid::line(1.0, 9).unwrap();
        let z = Field::zeros(&grid);
        let params = SchemeParams::new(0.5, 8, 1.0, Potential::regular()).with_monitoring(true);
        let t = run(&params, &z, &z, Forcing::zero()).unwrap();
        let r = apriori_report(&t).unwrap();
        assert!(r.monitored().iter().all(|&v| v == 0.0));
        assert_eq!(r.energy_step_violation, 0.0);
    }

    #[test]
    fn energy_inequality_holds_per_step() {
        for p in [Potential::regular(), Potential::logarithmic(2.0).unwrap(), Potential::double_obstacle(1.0).unwrap()] {
            let t = traj(p, 64, 1.0);
            let r = apriori_report(&t).unwrap();
            assert!(r.energy_step_violation <= 1e-10, "{:?}: {}", p.kind(), r.energy_step_violation);
            assert!(r.energy_sum_violation <= 1e-10);
            assert!(r.monitored().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn apriori_requires_h_below_h1() {
        let t = traj_with(Potential::regular(), 4, 1.0, false);
        assert!(norm_report(&t).is_ok());
        assert!(matches!(apriori_report(&t), Err(Error::StepAboveEstimateThreshold { .. })));
    }

    #[test]
    fn error_report_basic_properties() {
        let p = Potential::regular();
        let reference = traj(p, 64, 1.0);
        let same = error_report(&reference, &reference).unwrap();
        assert!(same.as_array().iter().all(|&e| e == 0.0));
        let coarse = traj(p, 16, 1.0);
        let e = error_report(&coarse, &reference).unwrap();
        assert!(e.as_array().iter().all(|&v| v >= 0.0));
        assert!(e.e_theta_linf_h <= e.e_combo_linf_h + 1.0 * e.e_phi_linf_h + 1e-15);
        assert!(e.combined(1.0) > 0.0);
        let odd = traj(p, 24, 1.0);
        assert!(error_report(&odd, &reference).is_err());
    }

    #[test]
    fn errors_shrink_under_refinement() {
        let p = Potential::regular();
        let reference = traj(p, 512, 1.0);
        let errs: Vec<ErrorReport> = [8, 16, 32].iter().map(|&n| error_report(&traj(p, n, 1.0), &reference).unwrap()).collect();
        for w in errs.windows(2) {
            for (a, b) in w[0].as_array().iter().zip(w[1].as_array()) {
                assert!(b <= a * 1.1, "{a} -> {b}");
            }
        }
    }

    #[test]
    fn source_average_error_examples() {
        let grid = Grid::line(1.0, 33).unwrap();
        let constant = FnSource(|_t: f64, x: [f64; 2]| x[0].cos());
        assert!(source_average_error(&constant, &grid, 1.0, 0.125).unwrap() < 1e-14);

        // f = t g(x): error = h |g|_H sqrt(T / 12)
        let g = |x: f64| 1.0 + x * x;
        let g_norm = norm_h(&Field::from_fn(&grid, |x: [f64; 2]| g(x[0])));
        let linear = FnSource(move |t: f64, x: [f64; 2]| t * g(x[0]));
        for h in [0.5, 0.125, 1.0 / 64.0] {
            let e = source_average_error(&linear, &grid, 1.0, h).unwrap();
            assert_abs_diff_eq!(e, h * g_norm / 12f64.sqrt(), epsilon = 1e-13);
        }
        assert!(source_average_error(&linear, &grid, 1.0, 0.3).is_err());
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let es: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(0.7)).collect();
        assert_abs_diff_eq!(loglog_slope(&hs, &es), 0.7, epsilon = 1e-12);
        assert!(loglog_slope(&hs, &[1.0, 0.0, 1.0, 1.0]).is_nan());
    }

    proptest! {
        #[test]
        fn gronwall_bound_dominates(c in 0.1f64..5.0, m_max in 1usize..200, seed in 0u64..10_000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = 1.0 / m_max as f64;
            let mut seq: Vec<f64> = Vec::new();
            for m in 0..=m_max {
                let cap = c + c * h * seq.iter().sum::<f64>();
                let a = cap * rng.gen_range(0.0..=1.0);
                prop_assert!(a <= discrete_gronwall_bound(c, h, m) * (1.0 + 1e-12));
                seq.push(a);
            }
        }
    }
}
