//! Space–time source terms and their step averages.

use std::sync::Arc;

use crate::grid::{Field, Grid};
use crate::quadrature::{gauss_legendre, on_interval};
use crate::scalar::Scalar;
use crate::stepper::Forcing;

/// Points per interval used for `f_k`; exact for polynomials in `t` up to degree 9.
pub const AVERAGE_POINTS: usize = 5;

/// A source `f(t, x)` of the heat equation.
pub trait TimeSource<T: Scalar>: Sync {
    fn eval(&self, t: T, grid: &Arc<Grid<T>>) -> Field<T>;

    /// `d f / d t`, available for `W^{1,1}`-in-time sources.
    fn eval_dt(&self, _t: T, _grid: &Arc<Grid<T>>) -> Option<Field<T>> {
        None
    }

    /// Extra right-hand side of the phase equation (manufactured problems only).
    fn eval_phase(&self, _t: T, _grid: &Arc<Grid<T>>) -> Option<Field<T>> {
        None
    }

    /// Whether the source vanishes identically; lets the stepper skip it.
    fn is_zero(&self) -> bool {
        false
    }
}

fn average_with<T: Scalar>(
    eval: impl Fn(T) -> Field<T>,
    grid: &Arc<Grid<T>>,
    t_final: T,
    n_steps: usize,
    points: usize,
) -> Vec<Field<T>> {
    let (x, w) = gauss_legendre::<T>(points);
    let h = t_final / T::from_usize_lossy(n_steps);
    (1..=n_steps)
        .map(|k| {
            let a = h * T::from_usize_lossy(k - 1);
            let b = h * T::from_usize_lossy(k);
            let mut acc = Field::zeros(grid);
            for (t, wt) in on_interval(&x, &w, a, b) {
                acc = acc.lincomb(T::one(), wt / h, &eval(t));
            }
            acc
        })
        .collect()
}

/// `f_k = (1/h) int_{(k-1)h}^{kh} f(s) ds` for `k = 1..=N`, each by
/// `points`-node Gauss–Legendre quadrature per grid point.
pub fn time_averages<T: Scalar, S: TimeSource<T> + ?Sized>(
    src: &S,
    grid: &Arc<Grid<T>>,
    t_final: T,
    n_steps: usize,
    points: usize,
) -> Vec<Field<T>> {
    average_with(|t| src.eval(t, grid), grid, t_final, n_steps, points)
}

/// Step-averaged forcing for the stepper (heat part, plus phase part when the
/// source provides one).
pub fn forcing_for<T: Scalar, S: TimeSource<T> + ?Sized>(
    src: &S,
    grid: &Arc<Grid<T>>,
    t_final: T,
    n_steps: usize,
) -> Forcing<T> {
    if src.is_zero() {
        return Forcing::zero();
    }
    let heat = time_averages(src, grid, t_final, n_steps, AVERAGE_POINTS);
    let phase = src.eval_phase(T::zero(), grid).map(|_| {
        average_with(
            |t| src.eval_phase(t, grid).expect("phase source defined at every time"),
            grid,
            t_final,
            n_steps,
            AVERAGE_POINTS,
        )
    });
    Forcing { heat: Some(heat), phase }
}

/// Closure-backed source, convenient in tests.
pub struct FnSource<F>(pub F);

impl<T: Scalar, F> TimeSource<T> for FnSource<F>
where
    F: Fn(T, [T; 2]) -> T + Sync,
{
    fn eval(&self, t: T, grid: &Arc<Grid<T>>) -> Field<T> {
        Field::from_fn(grid, |x| (self.0)(t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_of_simple_sources() {
        let grid = Grid::<f64>::line(1.0, 5).unwrap();
        let constant = FnSource(|_t: f64, x: [f64; 2]| 2.0 + x[0]);
        for f in time_averages(&constant, &grid, 1.0, 3, AVERAGE_POINTS) {
            for (i, &v) in f.values().iter().enumerate() {
                assert!((v - (2.0 + grid.coords(i)[0])).abs() < 1e-14);
            }
        }
        let linear = FnSource(|t: f64, _x: [f64; 2]| t);
        let h = 0.3;
        let f = time_averages(&linear, &grid, h, 1, AVERAGE_POINTS);
        assert!(f[0].values().iter().all(|&v| (v - h / 2.0).abs() < 1e-15));
    }

    #[test]
    fn sine_average_closed_form() {
        let grid = Grid::<f64>::line(1.0, 4).unwrap();
        let src = FnSource(|t: f64, _x: [f64; 2]| t.sin());
        let f = time_averages(&src, &grid, 1.0, 4, AVERAGE_POINTS);
        let expected = (1.0 - 0.25f64.cos()) / 0.25;
        assert!((expected - 0.124_350_313_157_421).abs() < 1e-14);
        assert!(f[0].values().iter().all(|&v| (v - expected).abs() < 1e-14));
    }

    #[test]
    fn polynomial_degree_nine_is_exact() {
        let grid = Grid::<f64>::line(1.0, 3).unwrap();
        let src = FnSource(|t: f64, _x: [f64; 2]| t.powi(9));
        let f = time_averages(&src, &grid, 2.0, 2, AVERAGE_POINTS);
        // (1/h) int_1^2 t^9 = (2^10 - 1) / 10
        assert!((f[1].values()[0] - 102.3).abs() < 1e-11);
    }
}
