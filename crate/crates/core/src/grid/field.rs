use std::io::Write;
use std::sync::Arc;

use super::Grid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nodal values on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    /// Checked constructor: length must match and entries must be finite.
    pub fn new(grid: &Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("field", format!("non-finite value at point {i}")));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub(crate) fn from_raw(grid: Arc<Grid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: &Arc<Grid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Arc<Grid<T>>, c: T) -> Self {
        Field { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: &Arc<Grid<T>>, mut f: impl FnMut([T; 2]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &Field<T>) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &Field<T>) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: T) -> Self {
        self.map(|v| a * v)
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: T, b: T, other: &Field<T>) -> Self {
        assert!(self.same_grid(other), "lincomb of fields on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Trapezoidal integral over the box.
    pub fn integral(&self) -> T {
        let mut acc = T::zero();
        for (i, &v) in self.values.iter().enumerate() {
            acc = acc + self.grid.weight(i) * v;
        }
        acc
    }

    /// One row per node: coordinates, then value; 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, value_name: &str) -> Result<()> {
        let axes = ["x", "y"];
        let header: Vec<&str> = axes[..self.grid.dim()].to_vec();
        writeln!(w, "{},{}", header.join(","), value_name)?;
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.coords(i);
            for x in &c[..self.grid.dim()] {
                write!(w, "{},", crate::harness::fmt_float(x.to_f64_lossy()))?;
            }
            writeln!(w, "{}", crate::harness::fmt_float(v.to_f64_lossy()))?;
        }
        Ok(())
    }
}
