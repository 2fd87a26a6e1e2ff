//! Convex-plus-Lipschitz splitting `F = beta_hat + pi_hat` of the double-well
//! nonlinearity, with the resolvent `(I + lambda beta)^{-1}` and the Yosida
//! approximation `beta_eps` used by the per-step phase solver.
//!
//! Three prototypes are supported:
//!
//! | kind            | `beta_hat`                                   | `pi`        |
//! |-----------------|----------------------------------------------|-------------|
//! | regular         | `r^4 / 4`                                    | `-r`        |
//! | logarithmic     | `(1+r)ln(1+r) + (1-r)ln(1-r)` on `[-1, 1]`   | `-2 c1 r`   |
//! | double obstacle | indicator of `[-1, 1]`                       | `-2 c2 r`   |
//!
//! Every `pi` is linear, so `|pi'|_inf` is a single constant exposed as
//! [`Potential::pi_lipschitz`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Distance kept from the singular endpoints `+-1` of the logarithmic `beta`.
pub const LOG_BARRIER: f64 = 1e-13;
/// Absolute tolerance of the scalar resolvent solve.
pub const RESOLVENT_TOL: f64 = 1e-14;
/// Iteration cap of the scalar resolvent solve.
pub const RESOLVENT_MAX_ITER: usize = 200;

/// A value of `[0, +inf]`; `beta_hat` legitimately takes `+inf` outside its domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended<T> {
    Finite(T),
    PosInfinity,
}

impl<T: Scalar> Extended<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInfinity => None,
        }
    }

    /// Maps `+inf` onto the float infinity; useful for reductions.
    pub fn to_float(self) -> T {
        match self {
            Extended::Finite(v) => v,
            Extended::PosInfinity => T::infinity(),
        }
    }
}

/// Which prototype potential is in use, with its constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Regular,
    Logarithmic { c1: f64 },
    DoubleObstacle { c2: f64 },
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Regular => "regular",
            PotentialKind::Logarithmic { .. } => "logarithmic",
            PotentialKind::DoubleObstacle { .. } => "double_obstacle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potential<T> {
    kind: PotentialKind,
    /// `|pi'|_inf`; `pi(r) = -pi_lipschitz * r` for every prototype.
    pi_lipschitz: T,
}

impl<T: Scalar> Potential<T> {
    pub fn regular() -> Self {
        Potential { kind: PotentialKind::Regular, pi_lipschitz: T::one() }
    }

    /// Logarithmic potential; `c1 > 1` is needed for a double well.
    pub fn logarithmic(c1: f64) -> Result<Self> {
        if !(c1 > 1.0 && c1.is_finite()) {
            return Err(Error::param("c1", format!("must be a finite value > 1, got {c1}")));
        }
        Ok(Potential { kind: PotentialKind::Logarithmic { c1 }, pi_lipschitz: T::lit(2.0 * c1) })
    }

    pub fn double_obstacle(c2: f64) -> Result<Self> {
        if !(c2 > 0.0 && c2.is_finite()) {
            return Err(Error::param("c2", format!("must be a finite value > 0, got {c2}")));
        }
        Ok(Potential { kind: PotentialKind::DoubleObstacle { c2 }, pi_lipschitz: T::lit(2.0 * c2) })
    }

    pub fn from_kind(kind: PotentialKind) -> Result<Self> {
        match kind {
            PotentialKind::Regular => Ok(Self::regular()),
            PotentialKind::Logarithmic { c1 } => Self::logarithmic(c1),
            PotentialKind::DoubleObstacle { c2 } => Self::double_obstacle(c2),
        }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn pi_lipschitz(&self) -> T {
        self.pi_lipschitz
    }

    /// Largest admissible step, `1 / |pi'|_inf`.
    pub fn step_threshold(&self) -> T {
        T::one() / self.pi_lipschitz
    }

    /// Step bound `h1 = 1 / (4 (|pi'|^2 + 1))` under which the uniform
    /// estimates are monitored.
    pub fn estimate_threshold(&self) -> T {
        T::one() / (T::lit(4.0) * (self.pi_lipschitz * self.pi_lipschitz + T::one()))
    }

    /// Closed effective domain of `beta`, `None` meaning all of `R`.
    pub fn domain(&self) -> Option<(T, T)> {
        match self.kind {
            PotentialKind::Regular => None,
            _ => Some((-T::one(), T::one())),
        }
    }

    pub fn in_domain_closure(&self, r: T) -> bool {
        self.distance_to_domain(r) == T::zero()
    }

    /// Nearest point of the closed domain of `beta`.
    pub fn project_to_domain(&self, r: T) -> T {
        match self.domain() {
            None => r,
            Some((lo, hi)) => r.max(lo).min(hi),
        }
    }

    pub fn distance_to_domain(&self, r: T) -> T {
        match self.domain() {
            None => T::zero(),
            Some((lo, hi)) => (lo - r).max(r - hi).max(T::zero()),
        }
    }

    pub fn beta_hat(&self, r: T) -> Extended<T> {
        match self.kind {
            PotentialKind::Regular => Extended::Finite(r.powi(4) / T::lit(4.0)),
            PotentialKind::Logarithmic { .. } => {
                if r.abs() > T::one() {
                    Extended::PosInfinity
                } else {
                    Extended::Finite(xlogx(T::one() + r) + xlogx(T::one() - r))
                }
            }
            PotentialKind::DoubleObstacle { .. } => {
                if r.abs() > T::one() {
                    Extended::PosInfinity
                } else {
                    Extended::Finite(T::zero())
                }
            }
        }
    }

    pub fn pi_hat(&self, r: T) -> T {
        match self.kind {
            PotentialKind::Regular => (T::one() - T::lit(2.0) * r * r) / T::lit(4.0),
            _ => -self.pi_lipschitz * r * r / T::lit(2.0),
        }
    }

    pub fn pi(&self, r: T) -> T {
        -self.pi_lipschitz * r
    }

    /// Minimal section of `beta` at `r`; `None` outside `D(beta)` (and at the
    /// singular endpoints of the logarithmic kind).
    pub fn beta_min_section(&self, r: T) -> Option<T> {
        match self.kind {
            PotentialKind::Regular => Some(r * r * r),
            PotentialKind::Logarithmic { .. } => {
                (r.abs() < T::one()).then(|| log_beta(r))
            }
            PotentialKind::DoubleObstacle { .. } => (r.abs() <= T::one()).then(T::zero),
        }
    }

    /// `(I + lambda beta)^{-1} g`: the unique `u` with `u + lambda xi = g`, `xi in beta(u)`.
    pub fn resolvent(&self, lambda: T, g: T) -> Result<T> {
        if !(lambda > T::zero()) {
            return Err(Error::param("lambda", "resolvent parameter must be positive"));
        }
        match self.kind {
            PotentialKind::DoubleObstacle { .. } => Ok(g.max(-T::one()).min(T::one())),
            PotentialKind::Regular => {
                let (lo, hi) = if g >= T::zero() { (T::zero(), g) } else { (g, T::zero()) };
                solve_monotone(
                    |u| u + lambda * u * u * u - g,
                    |u| T::one() + T::lit(3.0) * lambda * u * u,
                    lo,
                    hi,
                )
            }
            PotentialKind::Logarithmic { .. } => {
                let edge = T::one() - T::lit(LOG_BARRIER);
                let (lo, hi) = if g >= T::zero() {
                    (T::zero(), g.min(edge))
                } else {
                    (g.max(-edge), T::zero())
                };
                let f = |u: T| u + lambda * log_beta(u) - g;
                // Root hidden behind the barrier: stay confined.
                if g > T::zero() && f(hi) < T::zero() {
                    return Ok(hi);
                }
                if g < T::zero() && f(lo) > T::zero() {
                    return Ok(lo);
                }
                solve_monotone(f, |u| T::one() + lambda * T::lit(2.0) / (T::one() - u * u), lo, hi)
            }
        }
    }

    /// Yosida approximation `beta_eps(r) = (r - (I + eps beta)^{-1} r) / eps`.
    pub fn yosida(&self, eps: T, r: T) -> Result<T> {
        Ok(self.yosida_with_derivative(eps, r)?.0)
    }

    /// `beta_eps(r)` together with its (a.e.) derivative.
    pub fn yosida_with_derivative(&self, eps: T, r: T) -> Result<(T, T)> {
        if !(eps > T::zero()) {
            return Err(Error::param("eps", "Yosida parameter must be positive"));
        }
        let u = self.resolvent(eps, r)?;
        let value = (r - u) / eps;
        // beta_eps' = beta'(J r) / (1 + eps beta'(J r))
        let slope = match self.kind {
            PotentialKind::Regular => {
                let b = T::lit(3.0) * u * u;
                b / (T::one() + eps * b)
            }
            PotentialKind::Logarithmic { .. } => {
                let b = T::lit(2.0) / (T::one() - u * u);
                if b.is_finite() {
                    b / (T::one() + eps * b)
                } else {
                    T::one() / eps
                }
            }
            PotentialKind::DoubleObstacle { .. } => {
                if r.abs() > T::one() {
                    T::one() / eps
                } else {
                    T::zero()
                }
            }
        };
        Ok((value, slope))
    }

    /// Moreau envelope `beta_hat_eps(r) = beta_hat(J r) + (r - J r)^2 / (2 eps)`,
    /// the convex potential whose derivative is `beta_eps`.
    pub fn moreau_envelope(&self, eps: T, r: T) -> Result<T> {
        let u = self.resolvent(eps, r)?;
        let base = self.beta_hat(u).finite().unwrap_or_else(T::infinity);
        Ok(base + (r - u) * (r - u) / (T::lit(2.0) * eps))
    }
}

fn xlogx<T: Scalar>(x: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

fn log_beta<T: Scalar>(u: T) -> T {
    u.ln_1p() - (-u).ln_1p()
}

/// Safeguarded Newton for an increasing scalar function with a sign change on
/// `[lo, hi]`; falls back to bisection whenever a Newton iterate leaves the
/// current bracket.
fn solve_monotone<T: Scalar>(f: impl Fn(T) -> T, df: impl Fn(T) -> T, lo: T, hi: T) -> Result<T> {
    let tol = T::lit(RESOLVENT_TOL).max(T::lit(4.0) * T::epsilon());
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = f(lo);
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    let f_hi = f(hi);
    if f_hi.abs() <= tol {
        return Ok(hi);
    }
    let mut u = (lo + hi) / T::lit(2.0);
    let mut residual = T::infinity();
    for _ in 0..RESOLVENT_MAX_ITER {
        let fu = f(u);
        residual = fu.abs();
        if residual <= tol * (T::one() + u.abs()) {
            return Ok(u);
        }
        if fu < T::zero() {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= tol {
            return Ok((lo + hi) / T::lit(2.0));
        }
        let newton = u - fu / df(u);
        u = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            (lo + hi) / T::lit(2.0)
        };
    }
    Err(Error::ResolventNonConvergence {
        iterations: RESOLVENT_MAX_ITER,
        residual: residual.to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kinds() -> Vec<Potential<f64>> {
        vec![
            Potential::regular(),
            Potential::logarithmic(2.0).unwrap(),
            Potential::double_obstacle(1.0).unwrap(),
        ]
    }

    /// Independent oracle: bisection on `u + lambda beta(u) = g` using only the
    /// closed-form branch of `beta`.
    fn bisect_resolvent(p: &Potential<f64>, lambda: f64, g: f64) -> f64 {
        let beta = |u: f64| match p.kind() {
            PotentialKind::Regular => u.powi(3),
            PotentialKind::Logarithmic { .. } => ((1.0 + u) / (1.0 - u)).ln(),
            PotentialKind::DoubleObstacle { .. } => unreachable!(),
        };
        let (mut lo, mut hi) = match p.kind() {
            PotentialKind::Regular => (-g.abs() - 1.0, g.abs() + 1.0),
            _ => (-1.0 + 1e-15, 1.0 - 1e-15),
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + lambda * beta(mid) - g < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Grid minimizer of `(u - g)^2 / 2 + lambda I(u)` for the obstacle.
    fn grid_obstacle_resolvent(g: f64) -> f64 {
        (0..=200_000)
            .map(|i| -1.0 + 2.0 * i as f64 / 200_000.0)
            .min_by(|a, b| ((a - g).powi(2)).partial_cmp(&(b - g).powi(2)).unwrap())
            .unwrap()
    }

    #[test]
    fn beta_hat_examples() {
        let reg = Potential::<f64>::regular();
        assert_eq!(reg.beta_hat(2.0), Extended::Finite(4.0));
        for p in kinds() {
            assert_eq!(p.beta_hat(0.0), Extended::Finite(0.0));
        }
        let log = Potential::<f64>::logarithmic(2.0).unwrap();
        assert_abs_diff_eq!(log.beta_hat(1.0).finite().unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log.beta_hat(-1.0).finite().unwrap(), 1.386294, epsilon = 1e-6);
        assert_eq!(log.beta_hat(1.0001), Extended::PosInfinity);
        let obs = Potential::<f64>::double_obstacle(1.0).unwrap();
        assert_eq!(obs.beta_hat(1.5), Extended::PosInfinity);
        assert_eq!(obs.beta_hat(-1.0), Extended::Finite(0.0));
    }

    #[test]
    fn pi_examples() {
        assert_eq!(Potential::<f64>::regular().pi(3.0), -3.0);
        assert_eq!(Potential::<f64>::logarithmic(2.0).unwrap().pi(0.5), -2.0);
        for p in kinds() {
            assert_eq!(p.pi(0.0), 0.0);
        }
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(Potential::<f64>::logarithmic(1.0).is_err());
        assert!(Potential::<f64>::double_obstacle(0.0).is_err());
        assert!(Potential::<f64>::double_obstacle(f64::NAN).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let reg = Potential::<f64>::regular();
        assert_eq!(reg.resolvent(1.0, 0.0).unwrap(), 0.0);
        let oracle = bisect_resolvent(&reg, 1.0, 2.0);
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(reg.resolvent(1.0, 2.0).unwrap(), oracle, epsilon = 1e-13);

        let obs = Potential::<f64>::double_obstacle(1.0).unwrap();
        for lambda in [1e-3, 0.5, 10.0] {
            assert_eq!(obs.resolvent(lambda, 5.0).unwrap(), 1.0);
        }
        assert_abs_diff_eq!(grid_obstacle_resolvent(5.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(obs.resolvent(0.3, 0.25).unwrap(), grid_obstacle_resolvent(0.25), epsilon = 1e-5);

        let log = Potential::<f64>::logarithmic(2.0).unwrap();
        for g in [-3.0, -0.4, 0.1, 0.9, 2.5] {
            let u = log.resolvent(0.7, g).unwrap();
            assert_abs_diff_eq!(u, bisect_resolvent(&log, 0.7, g), epsilon = 1e-12);
        }
    }

    #[test]
    fn resolvent_rejects_nonpositive_lambda() {
        assert!(Potential::<f64>::regular().resolvent(0.0, 1.0).is_err());
        assert!(Potential::<f64>::regular().yosida(-1.0, 1.0).is_err());
    }

    #[test]
    fn log_resolvent_is_confined_by_barrier() {
        let log = Potential::<f64>::logarithmic(2.0).unwrap();
        let u = log.resolvent(1e-4, 1.5).unwrap();
        assert!(u < 1.0 && u >= 1.0 - 2.0 * LOG_BARRIER);
        let u = log.resolvent(1e-4, -7.0).unwrap();
        assert!(u > -1.0);
        assert!(log.yosida(1e-4, 1.5).unwrap().is_finite());
    }

    #[test]
    fn yosida_examples() {
        for p in kinds() {
            assert_eq!(p.yosida(0.1, 0.0).unwrap(), 0.0);
        }
        let obs = Potential::<f64>::double_obstacle(1.0).unwrap();
        let clamp_oracle = grid_obstacle_resolvent(1.5);
        assert_abs_diff_eq!(obs.yosida(0.5, 1.5).unwrap(), (1.5 - clamp_oracle) / 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(obs.yosida(0.5, 1.5).unwrap(), 1.0, epsilon = 1e-12);

        let reg = Potential::<f64>::regular();
        let expected = 2.0 - bisect_resolvent(&reg, 1.0, 2.0);
        assert_abs_diff_eq!(reg.yosida(1.0, 2.0).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn yosida_derivative_matches_finite_differences() {
        for p in kinds() {
            for r in [-1.7, -0.6, 0.2, 0.95, 1.3] {
                let eps = 0.05;
                let (_, slope) = p.yosida_with_derivative(eps, r).unwrap();
                let d = 1e-6;
                let fd = (p.yosida(eps, r + d).unwrap() - p.yosida(eps, r - d).unwrap()) / (2.0 * d);
                assert_abs_diff_eq!(slope, fd, epsilon = 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn moreau_envelope_is_primitive_of_yosida() {
        for p in kinds() {
            let eps = 0.1;
            for r in [-1.4, -0.3, 0.5, 1.2] {
                let d = 1e-6;
                let fd = (p.moreau_envelope(eps, r + d).unwrap() - p.moreau_envelope(eps, r - d).unwrap())
                    / (2.0 * d);
                assert_abs_diff_eq!(fd, p.yosida(eps, r).unwrap(), epsilon = 1e-5);
            }
            assert_eq!(p.moreau_envelope(eps, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn subgradient_defect_shrinks_with_eps() {
        for p in kinds() {
            let pts: Vec<f64> = (0..=40).map(|i| -0.99 + 1.98 * i as f64 / 40.0).collect();
            let defect = |eps: f64| {
                let mut worst = 0.0f64;
                for &r in &pts {
                    let b = p.yosida(eps, r).unwrap();
                    for &s in &pts {
                        let lhs = p.beta_hat(s).finite().unwrap();
                        let rhs = p.beta_hat(r).finite().unwrap() + b * (s - r);
                        worst = worst.max(rhs - lhs);
                    }
                }
                worst
            };
            let mut prev = f64::INFINITY;
            for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
                let d = defect(eps);
                assert!(d <= prev + 1e-15, "{:?}: defect not improving at eps={eps}", p.kind());
                assert!(d <= 10.0 * eps, "{:?}: defect {d} at eps={eps}", p.kind());
                prev = d;
            }
        }
    }

    #[test]
    fn regular_yosida_converges_linearly_to_cube() {
        let p = Potential::<f64>::regular();
        let err = |eps: f64| {
            (0..=20)
                .map(|i| -1.5 + 3.0 * i as f64 / 20.0)
                .map(|r| (p.yosida(eps, r).unwrap() - r.powi(3)).abs())
                .fold(0.0, f64::max)
        };
        let mut eps = 1e-2;
        for _ in 0..5 {
            let ratio = err(eps) / err(eps / 2.0);
            assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "ratio {ratio} at eps {eps}");
            eps /= 2.0;
        }
    }

    #[test]
    fn single_precision_resolvent() {
        let reg = Potential::<f32>::regular();
        assert!((reg.resolvent(1.0, 2.0).unwrap() - 1.0).abs() < 1e-6);
        let log = Potential::<f32>::logarithmic(2.0).unwrap();
        assert!(log.yosida(0.01, 0.4).unwrap().is_finite());
    }

    proptest! {
        #[test]
        fn yosida_is_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0, eps in 1e-4f64..1.0, k in 0usize..3) {
            let p = kinds()[k];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p.yosida(eps, lo).unwrap() <= p.yosida(eps, hi).unwrap() + 1e-9);
        }

        #[test]
        fn yosida_is_lipschitz(a in -3.0f64..3.0, b in -3.0f64..3.0, eps in 1e-3f64..1.0, k in 0usize..3) {
            let p = kinds()[k];
            let d = (p.yosida(eps, a).unwrap() - p.yosida(eps, b).unwrap()).abs();
            prop_assert!(d <= (a - b).abs() / eps * (1.0 + 1e-9) + 1e-9);
        }

        #[test]
        fn resolvent_is_contraction(a in -5.0f64..5.0, b in -5.0f64..5.0, lambda in 1e-4f64..10.0, k in 0usize..3) {
            let p = kinds()[k];
            let ua = p.resolvent(lambda, a).unwrap();
            let ub = p.resolvent(lambda, b).unwrap();
            prop_assert!((ua - ub).abs() <= (a - b).abs() + 1e-12);
            prop_assert!(p.in_domain_closure(ua));
        }

        #[test]
        fn pi_slope_bounded(a in -10.0f64..10.0, d in 1e-6f64..1.0, k in 0usize..3) {
            let p = kinds()[k];
            let slope = (p.pi(a + d) - p.pi(a)).abs() / d;
            prop_assert!(slope <= p.pi_lipschitz() * (1.0 + 1e-12));
        }

        #[test]
        fn beta_hat_nonnegative(r in -3.0f64..3.0, k in 0usize..3) {
            let p = kinds()[k];
            match p.beta_hat(r) {
                Extended::Finite(v) => prop_assert!(v >= 0.0),
                Extended::PosInfinity => prop_assert!(r.abs() > 1.0),
            }
        }
    }
}
