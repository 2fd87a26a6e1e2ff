//! Piecewise-in-time reconstructions of a trajectory:
//! hat (piecewise linear), bar (`u_{n+1}` on `(nh, (n+1)h]`) and underline
//! (`u_n` on `[nh, (n+1)h)`), plus exact checks of the elementary norm
//! identities relating them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_h, norm_v, Field};
use crate::scalar::Scalar;
use crate::stepper::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpolantKind {
    Hat,
    Bar,
    Underline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Theta,
    Phi,
    Xi,
}

impl InterpolantKind {
    fn name(self) -> &'static str {
        match self {
            InterpolantKind::Hat => "hat",
            InterpolantKind::Bar => "bar",
            InterpolantKind::Underline => "underline",
        }
    }
}

impl Component {
    fn name(self) -> &'static str {
        match self {
            Component::Theta => "theta",
            Component::Phi => "phi",
            Component::Xi => "xi",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InterpolantView<'a, T> {
    trajectory: &'a Trajectory<T>,
    kind: InterpolantKind,
    component: Component,
}

impl<'a, T: Scalar> InterpolantView<'a, T> {
    /// Only `bar` exists for `xi`, and `underline` only for `theta`.
    pub fn new(trajectory: &'a Trajectory<T>, kind: InterpolantKind, component: Component) -> Result<Self> {
        let defined = match (kind, component) {
            (_, Component::Theta) => true,
            (InterpolantKind::Underline, _) => false,
            (InterpolantKind::Hat, Component::Xi) => false,
            _ => true,
        };
        if !defined {
            return Err(Error::UndefinedInterpolant { kind: kind.name(), component: component.name() });
        }
        Ok(InterpolantView { trajectory, kind, component })
    }

    fn level(&self, n: usize) -> &'a Field<T> {
        let s = &self.trajectory.states[n];
        match self.component {
            Component::Theta => &s.theta,
            Component::Phi => &s.phi,
            Component::Xi => s.xi.as_ref().expect("xi exists from level 1"),
        }
    }

    /// Value at time `t in [0, T]`. Bar is left-continuous at the nodes,
    /// underline right-continuous; at `t = 0` bar takes its right limit and at
    /// `t = T` underline its left limit.
    pub fn eval(&self, t: T) -> Result<Field<T>> {
        let params = &self.trajectory.params;
        let n_steps = params.n_steps;
        if !(t >= T::zero() && t <= params.t_final) {
            return Err(Error::TimeOutOfRange { t: t.to_f64_lossy(), t_final: params.t_final.to_f64_lossy() });
        }
        let mut s = t / params.h();
        let nearest = s.round();
        if (s - nearest).abs() <= T::lit(1e-12) * nearest.max(T::one()) {
            s = nearest;
        }
        let floor = s.floor().to_usize().unwrap_or(0).min(n_steps);
        let on_node = s == s.floor();
        match self.kind {
            InterpolantKind::Hat => {
                if on_node {
                    return Ok(self.level(floor).clone());
                }
                let tau = s - T::from_usize_lossy(floor);
                Ok(self.level(floor).lincomb(T::one() - tau, tau, self.level(floor + 1)))
            }
            InterpolantKind::Bar => {
                let ceil = if on_node { floor } else { floor + 1 };
                Ok(self.level(ceil.max(1)).clone())
            }
            InterpolantKind::Underline => Ok(self.level(floor.min(n_steps - 1)).clone()),
        }
    }
}

/// `int_0^h |(1 - s/h) p + (s/h) q|_H^2 ds`, exact for a linear-in-time integrand.
pub(crate) fn linear_l2_sq<T: Scalar>(h: T, p: &Field<T>, q: &Field<T>) -> T {
    let g = p.grid();
    h / T::lit(3.0) * (g.inner(p.values(), p.values()) + g.inner(p.values(), q.values()) + g.inner(q.values(), q.values()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Equality,
    /// `lhs <= rhs`.
    AtMost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    /// Relative mismatch for equalities, relative excess `lhs - rhs` for inequalities.
    pub defect: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn max_defect(&self) -> f64 {
        self.checks.iter().map(|c| c.defect).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, relation: Relation, lhs: f64, rhs: f64) -> IdentityCheck {
    let scale = lhs.abs().max(rhs.abs());
    let defect = if scale == 0.0 {
        0.0
    } else {
        match relation {
            Relation::Equality => (lhs - rhs).abs() / scale,
            Relation::AtMost => ((lhs - rhs) / scale).max(0.0),
        }
    };
    IdentityCheck { name: name.to_string(), relation, lhs, rhs, defect }
}

/// Evaluates both sides of the hat/bar norm relations with exact piecewise
/// polynomial time integration.
///
/// For `u` in `{theta, phi}`:
/// * `|hat u|^2_{L2 H} <= h |u_0|^2_H + 2 |bar u|^2_{L2 H}`
/// * `|hat u|_{Linf V} = max(|u_0|_V, |bar u|_{Linf V})`
/// * `|bar u - hat u|^2_{L2 H} = (h^2 / 3) |d_t hat u|^2_{L2 H}`
pub fn check_identities<T: Scalar>(traj: &Trajectory<T>) -> Result<IdentityReport> {
    let h = traj.h();
    let n_steps = traj.n_steps();
    let mut checks = Vec::new();
    for component in [Component::Theta, Component::Phi] {
        let label = component.name();
        let hat = InterpolantView::new(traj, InterpolantKind::Hat, component)?;
        let level = |n: usize| hat.level(n);

        let mut hat_l2 = T::zero();
        let mut bar_l2 = T::zero();
        let mut gap_l2 = T::zero();
        let mut dt_l2 = T::zero();
        for n in 0..n_steps {
            let (a, b) = (level(n), level(n + 1));
            hat_l2 = hat_l2 + linear_l2_sq(h, a, b);
            bar_l2 = bar_l2 + h * norm_h(b).powi(2);
            let jump = b.lincomb(T::one(), -T::one(), a);
            gap_l2 = gap_l2 + linear_l2_sq(h, &jump, &Field::zeros(a.grid_arc()));
            dt_l2 = dt_l2 + h * norm_h(&jump.scaled(T::one() / h)).powi(2);
        }
        let u0 = level(0);
        checks.push(check(
            &format!("l2h_hat_bound_{label}"),
            Relation::AtMost,
            hat_l2.to_f64_lossy(),
            (h * norm_h(u0).powi(2) + T::lit(2.0) * bar_l2).to_f64_lossy(),
        ));

        // sup of a piecewise-linear convex-normed path is attained at nodes
        let mut hat_sup = T::zero();
        for n in 0..=n_steps {
            hat_sup = hat_sup.max(norm_v(&hat.eval(traj.params.time(n))?));
        }
        let bar_sup = (1..=n_steps).map(|n| norm_v(level(n))).fold(T::zero(), T::max);
        checks.push(check(
            &format!("linfv_hat_max_{label}"),
            Relation::Equality,
            hat_sup.to_f64_lossy(),
            norm_v(u0).max(bar_sup).to_f64_lossy(),
        ));

        checks.push(check(
            &format!("bar_hat_gap_{label}"),
            Relation::Equality,
            gap_l2.to_f64_lossy(),
            (h * h / T::lit(3.0) * dt_l2).to_f64_lossy(),
        ));
    }
    Ok(IdentityReport { checks })
}
