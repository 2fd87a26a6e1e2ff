//! Uniform tensor grids (1D or 2D) carrying the homogeneous-Neumann Laplacian
//! and discrete `H = L^2` and `V = H^1` inner products.
//!
//! Nodes include the walls. The Laplacian mirrors the first interior node
//! across each wall (ghost-point reflection), and `H` uses trapezoidal weights.
//! With that pairing the summation-by-parts identity
//! `(-lap u, v)_H = sum over edges of w * (D u)(D v)` holds exactly, so the
//! operator is symmetric negative semidefinite in `H` with the constants as
//! kernel.

mod cg;
mod field;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use cg::{solve_shifted, CgConfig, CgStats};
pub use field::Field;

/// Whether the box stands for a genuinely bounded domain or a truncated
/// whole-space / exterior domain. Metadata only; the discretization is the same.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    #[default]
    BoundedBox,
    TruncatedWholeSpace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    extents: Vec<T>,
    points: Vec<usize>,
    spacing: Vec<T>,
    truncation: Truncation,
    axis_weights: Vec<Vec<T>>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(extents: &[T], points: &[usize], truncation: Truncation) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {}", extents.len())));
        }
        if extents.len() != points.len() {
            return Err(Error::InvalidGrid("extents and points differ in length".into()));
        }
        if let Some(&p) = points.iter().find(|&&p| p < 3) {
            return Err(Error::InvalidGrid(format!("at least 3 points per axis required, got {p}")));
        }
        if let Some(e) = extents.iter().find(|e| !(**e > T::zero() && e.is_finite())) {
            return Err(Error::InvalidGrid(format!("extent must be positive and finite, got {e}")));
        }
        let spacing: Vec<T> = extents
            .iter()
            .zip(points)
            .map(|(&e, &p)| e / T::from_usize_lossy(p - 1))
            .collect();
        let axis_weights = spacing
            .iter()
            .zip(points)
            .map(|(&s, &p)| {
                (0..p)
                    .map(|i| if i == 0 || i == p - 1 { s / T::lit(2.0) } else { s })
                    .collect()
            })
            .collect();
        Ok(Grid { extents: extents.to_vec(), points: points.to_vec(), spacing, truncation, axis_weights })
    }

    /// `[0, extent]` with `points` nodes, wrapped for sharing between fields.
    pub fn line(extent: T, points: usize) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(&[extent], &[points], Truncation::BoundedBox)?))
    }

    pub fn rectangle(extents: [T; 2], points: [usize; 2]) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(&extents, &points, Truncation::BoundedBox)?))
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn extents(&self) -> &[T] {
        &self.extents
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Area (or length) of the box.
    pub fn measure(&self) -> T {
        self.extents.iter().fold(T::one(), |acc, &e| acc * e)
    }

    /// Multi-index of a flat index; axis 0 runs fastest.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        let nx = self.points[0];
        [idx % nx, idx / nx]
    }

    /// Coordinates of node `idx`; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [T; 2] {
        let mi = self.multi_index(idx);
        let mut c = [T::zero(); 2];
        for (axis, c) in c.iter_mut().enumerate().take(self.dim()) {
            *c = T::from_usize_lossy(mi[axis]) * self.spacing[axis];
        }
        c
    }

    /// Trapezoidal quadrature weight of node `idx`.
    pub fn weight(&self, idx: usize) -> T {
        let mi = self.multi_index(idx);
        (0..self.dim()).fold(T::one(), |acc, axis| acc * self.axis_weights[axis][mi[axis]])
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Discrete `(u, v)_H`.
    pub fn inner(&self, u: &[T], v: &[T]) -> T {
        debug_assert_eq!(u.len(), self.len());
        debug_assert_eq!(v.len(), self.len());
        match self.dim() {
            1 => {
                let w = &self.axis_weights[0];
                let mut acc = T::zero();
                for i in 0..u.len() {
                    acc = acc + w[i] * u[i] * v[i];
                }
                acc
            }
            _ => {
                let (wx, wy) = (&self.axis_weights[0], &self.axis_weights[1]);
                let nx = self.points[0];
                let mut acc = T::zero();
                for (j, &wyj) in wy.iter().enumerate() {
                    let mut row = T::zero();
                    for i in 0..nx {
                        let k = i + nx * j;
                        row = row + wx[i] * u[k] * v[k];
                    }
                    acc = acc + wyj * row;
                }
                acc
            }
        }
    }

    /// Diagonal entry of the Laplacian stencil (identical on every row).
    pub fn laplacian_diagonal(&self) -> T {
        self.spacing
            .iter()
            .fold(T::zero(), |acc, &s| acc - T::lit(2.0) / (s * s))
    }

    /// `out = lap_N u` with mirrored ghost nodes at the walls.
    pub fn laplacian_into(&self, u: &[T], out: &mut [T]) {
        debug_assert_eq!(u.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        out.iter_mut().for_each(|o| *o = T::zero());
        let nx = self.points[0];
        let ny = if self.dim() == 2 { self.points[1] } else { 1 };
        let two = T::lit(2.0);
        let ix2 = T::one() / (self.spacing[0] * self.spacing[0]);
        for j in 0..ny {
            let row = j * nx;
            for i in 0..nx {
                let left = if i == 0 { u[row + 1] } else { u[row + i - 1] };
                let right = if i == nx - 1 { u[row + nx - 2] } else { u[row + i + 1] };
                out[row + i] = (left - two * u[row + i] + right) * ix2;
            }
        }
        if self.dim() == 2 {
            let iy2 = T::one() / (self.spacing[1] * self.spacing[1]);
            for j in 0..ny {
                let down = if j == 0 { 1 } else { j - 1 };
                let up = if j == ny - 1 { ny - 2 } else { j + 1 };
                for i in 0..nx {
                    let k = i + nx * j;
                    out[k] = out[k] + (u[i + nx * down] - two * u[k] + u[i + nx * up]) * iy2;
                }
            }
        }
    }

    /// Gradient pairing `sum_edges w (D u)(D v)`, equal to `(-lap u, v)_H`.
    pub fn gradient_inner(&self, u: &[T], v: &[T]) -> T {
        let nx = self.points[0];
        let ny = if self.dim() == 2 { self.points[1] } else { 1 };
        let sx = self.spacing[0];
        let wy: Vec<T> = if self.dim() == 2 { self.axis_weights[1].clone() } else { vec![T::one()] };
        let mut acc = T::zero();
        for (j, &wyj) in wy.iter().enumerate().take(ny) {
            let mut row = T::zero();
            for i in 0..nx - 1 {
                let k = i + nx * j;
                row = row + (u[k + 1] - u[k]) * (v[k + 1] - v[k]);
            }
            acc = acc + wyj * row / sx;
        }
        if self.dim() == 2 {
            let sy = self.spacing[1];
            let wx = &self.axis_weights[0];
            for (i, &wxi) in wx.iter().enumerate() {
                let mut col = T::zero();
                for j in 0..ny - 1 {
                    let k = i + nx * j;
                    col = col + (u[k + nx] - u[k]) * (v[k + nx] - v[k]);
                }
                acc = acc + wxi * col / sy;
            }
        }
        acc
    }
}

/// `lap_N u` as a new field.
pub fn neumann_laplacian<T: Scalar>(u: &Field<T>) -> Field<T> {
    let mut out = vec![T::zero(); u.len()];
    u.grid().laplacian_into(u.values(), &mut out);
    Field::from_raw(u.grid_arc().clone(), out)
}

/// Trapezoidal `(u, v)_H`.
pub fn inner_h<T: Scalar>(u: &Field<T>, v: &Field<T>) -> Result<T> {
    u.check_same_grid(v)?;
    Ok(u.grid().inner(u.values(), v.values()))
}

pub fn norm_h<T: Scalar>(u: &Field<T>) -> T {
    u.grid().inner(u.values(), u.values()).sqrt()
}

/// `|grad u|_H^2` in the summation-by-parts-consistent form.
pub fn gradient_sq<T: Scalar>(u: &Field<T>) -> T {
    u.grid().gradient_inner(u.values(), u.values())
}

/// `|u|_V = sqrt(|u|_H^2 + |grad u|_H^2)`.
pub fn norm_v<T: Scalar>(u: &Field<T>) -> T {
    (norm_h(u).powi(2) + gradient_sq(u)).sqrt()
}

pub fn norm_v_sq<T: Scalar>(u: &Field<T>) -> T {
    norm_h(u).powi(2) + gradient_sq(u)
}

/// Solves `u - a lap_N u = rhs`.
pub fn helmholtz_solve<T: Scalar>(a: T, rhs: &Field<T>) -> Result<Field<T>> {
    Ok(helmholtz_solve_with(a, rhs, None, &CgConfig::default())?.0)
}

/// [`helmholtz_solve`] with a starting guess and explicit CG settings.
///
/// Constants are eigenvectors of `I - a lap_N` with eigenvalue one, so the
/// mean of the CG residual is removed by shifting `u` by that mean. Afterwards
/// `int u = int rhs` holds to rounding, which the mass balance of the heat
/// equation relies on.
pub fn helmholtz_solve_with<T: Scalar>(
    a: T,
    rhs: &Field<T>,
    initial: Option<&Field<T>>,
    cfg: &CgConfig<T>,
) -> Result<(Field<T>, CgStats)> {
    if !(a > T::zero()) {
        return Err(Error::param("a", "Helmholtz coefficient must be positive"));
    }
    let grid = rhs.grid();
    let diag = vec![T::one(); rhs.len()];
    let (mut u, stats) = solve_shifted(grid, &diag, a, rhs.values(), initial.map(|f| f.values()), cfg)?;
    let mut lap = vec![T::zero(); u.len()];
    grid.laplacian_into(&u, &mut lap);
    let mut mean = T::zero();
    for i in 0..u.len() {
        mean = mean + grid.weight(i) * (rhs.values()[i] - (u[i] - a * lap[i]));
    }
    let mean = mean / grid.measure();
    u.iter_mut().for_each(|v| *v = *v + mean);
    Ok((Field::from_raw(rhs.grid_arc().clone(), u), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cosine(grid: &Arc<Grid<f64>>) -> Field<f64> {
        let l = grid.extents()[0];
        Field::from_fn(grid, |x: [f64; 2]| (std::f64::consts::PI * x[0] / l).cos())
    }

    #[test]
    fn rejects_invalid_grids() {
        assert!(Grid::<f64>::new(&[1.0], &[2], Truncation::BoundedBox).is_err());
        assert!(Grid::<f64>::new(&[0.0], &[5], Truncation::BoundedBox).is_err());
        assert!(Grid::<f64>::new(&[1.0, 1.0, 1.0], &[3, 3, 3], Truncation::BoundedBox).is_err());
        assert!(Grid::<f64>::new(&[1.0, 2.0], &[3], Truncation::BoundedBox).is_err());
    }

    #[test]
    fn spacing_and_counts() {
        let g = Grid::<f64>::new(&[2.0, 1.0], &[5, 3], Truncation::TruncatedWholeSpace).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.spacing(), &[0.5, 0.5]);
        assert_eq!(g.coords(7), [1.0, 0.5]);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn laplacian_kills_constants() {
        for grid in [Grid::line(3.0, 17).unwrap(), Grid::rectangle([1.0, 2.0], [9, 13]).unwrap()] {
            let u = Field::constant(&grid, 4.25);
            assert!(neumann_laplacian(&u).values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_two_inside() {
        let grid = Grid::line(1.0, 33).unwrap();
        let u = Field::from_fn(&grid, |x: [f64; 2]| x[0] * x[0]);
        let lap = neumann_laplacian(&u);
        for &v in &lap.values()[1..32] {
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cosine_is_neumann_eigenfunction_second_order() {
        let mut prev = None;
        for points in [17, 33, 65, 129] {
            let grid = Grid::line(2.0, points).unwrap();
            let u = cosine(&grid);
            let lambda = (std::f64::consts::PI / 2.0).powi(2);
            let lap = neumann_laplacian(&u);
            let res = lap.values().iter().zip(u.values()).map(|(l, u)| (l + lambda * u).abs()).fold(0.0, f64::max);
            if let Some(p) = prev {
                let ratio: f64 = p / res;
                assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
            }
            prev = Some(res);
        }
    }

    #[test]
    fn inner_h_examples() {
        for points in [3, 10, 1025] {
            let grid = Grid::line(1.0, points).unwrap();
            let one = Field::constant(&grid, 1.0);
            assert_abs_diff_eq!(inner_h(&one, &one).unwrap(), 1.0, epsilon = 1e-14);
            assert_eq!(inner_h(&Field::zeros(&grid), &one).unwrap(), 0.0);
        }
        let grid = Grid::line(1.0, 1025).unwrap();
        let x = Field::from_fn(&grid, |c| c[0]);
        assert_abs_diff_eq!(inner_h(&x, &x).unwrap(), 1.0 / 3.0, epsilon = 1e-6);
        let other = Grid::line(1.0, 1025).unwrap();
        // Equal grids compare by value.
        assert!(inner_h(&x, &Field::zeros(&other)).is_ok());
        let coarse = Grid::line(1.0, 9).unwrap();
        assert!(matches!(inner_h(&x, &Field::zeros(&coarse)), Err(Error::GridMismatch)));
    }

    #[test]
    fn norm_v_examples() {
        let grid = Grid::rectangle([1.0, 1.0], [11, 11]).unwrap();
        assert_abs_diff_eq!(norm_v(&Field::constant(&grid, 1.0)), 1.0, epsilon = 1e-14);
        assert_eq!(norm_v(&Field::zeros(&grid)), 0.0);
        let line = Grid::line(1.0, 1025).unwrap();
        let x = Field::from_fn(&line, |c| c[0]);
        assert_abs_diff_eq!(norm_v(&x), (1.0f64 / 3.0 + 1.0).sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn helmholtz_examples() {
        let grid = Grid::line(1.0, 65).unwrap();
        let c = Field::constant(&grid, -2.5);
        let u = helmholtz_solve(0.3, &c).unwrap();
        for &v in u.values() {
            assert_abs_diff_eq!(v, -2.5, epsilon = 1e-12);
        }
        let z = helmholtz_solve(0.3, &Field::zeros(&grid)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert!(helmholtz_solve(0.0, &c).is_err());
    }

    #[test]
    fn helmholtz_preserves_integral() {
        let grid = Grid::rectangle([1.0, 2.0], [17, 33]).unwrap();
        let rhs = Field::from_fn(&grid, |x: [f64; 2]| (5.0 * x[0]).exp() * (x[1] - 0.3).sin() + 2.0);
        let cfg = CgConfig { rel_tol: 1e-6, max_iter: None };
        let (u, _) = helmholtz_solve_with(0.7, &rhs, None, &cfg).unwrap();
        let rel = (u.integral() - rhs.integral()).abs() / rhs.integral().abs();
        assert!(rel < 1e-14, "{rel}");
    }

    #[test]
    fn helmholtz_cosine_second_order() {
        let a = 0.2;
        let mut prev = None;
        for points in [17, 33, 65, 129] {
            let grid = Grid::line(1.0, points).unwrap();
            let u = cosine(&grid);
            let rhs = u.scaled(1.0 + a * std::f64::consts::PI.powi(2));
            let sol = helmholtz_solve(a, &rhs).unwrap();
            let err = norm_h(&sol.lincomb(1.0, -1.0, &u));
            if let Some(p) = prev {
                let ratio: f64 = p / err;
                assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn helmholtz_in_2d_recovers_smooth_field() {
        let grid = Grid::rectangle([1.0, 2.0], [21, 31]).unwrap();
        let u = Field::from_fn(&grid, |x: [f64; 2]| (3.0 * x[0]).sin() * (x[1] * x[1]).cos() + x[0] * x[1]);
        let a = 0.05;
        let rhs = u.lincomb(1.0, -a, &neumann_laplacian(&u));
        let sol = helmholtz_solve(a, &rhs).unwrap();
        assert!(norm_h(&sol.lincomb(1.0, -1.0, &u)) <= 1e-8 * norm_h(&u));
    }

    proptest! {
        #[test]
        fn summation_by_parts(seed in 0u64..1000, two_d in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = if two_d { Grid::rectangle([1.3, 0.7], [7, 9]).unwrap() } else { Grid::line(2.0, 23).unwrap() };
            let u = Field::from_fn(&grid, |_| rng.gen_range(-1.0f64..1.0));
            let v = Field::from_fn(&grid, |_| rng.gen_range(-1.0f64..1.0));
            let luv = -inner_h(&neumann_laplacian(&u), &v).unwrap();
            let lvu = -inner_h(&neumann_laplacian(&v), &u).unwrap();
            let scale = luv.abs().max(1.0);
            prop_assert!((luv - lvu).abs() <= 1e-12 * scale);
            prop_assert!((luv - grid.gradient_inner(u.values(), v.values())).abs() <= 1e-12 * scale);
            prop_assert!(-inner_h(&neumann_laplacian(&u), &u).unwrap() >= 0.0);
        }

        #[test]
        fn helmholtz_inverts_operator(k in 1usize..6, a in 1e-3f64..1.0, phase in 0.0f64..6.0) {
            let grid = Grid::line(1.0, 101).unwrap();
            let u = Field::from_fn(&grid, |x: [f64; 2]| (k as f64 * x[0] + phase).sin() + 0.3 * (x[0] * x[0]));
            let rhs = u.lincomb(1.0, -a, &neumann_laplacian(&u));
            let sol = helmholtz_solve(a, &rhs).unwrap();
            prop_assert!(norm_h(&sol.lincomb(1.0, -1.0, &u)) <= 1e-8 * norm_h(&u));
        }
    }
}
