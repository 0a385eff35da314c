//! Uniform space–time grids and nodal data on them.

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[x_min, x_max] × [0, t_final]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_final: f64,
    pub nt: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize, t_final: f64, nt: usize) -> Result<Self> {
        let g = GridSpec {
            x_min,
            x_max,
            nx,
            t_final,
            nt,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::Grid(format!(
                "need finite x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.nx < 3 {
            return Err(Error::Grid(format!("nx = {} < 3", self.nx)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::Grid(format!(
                "T = {} must be positive",
                self.t_final
            )));
        }
        if self.nt < 2 {
            return Err(Error::Grid(format!("nt = {} < 2", self.nt)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / (self.nt - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|n| self.t(n)).collect()
    }

    /// True if `x` lies strictly inside the spatial window.
    pub fn is_interior(&self, x: f64) -> bool {
        x > self.x_min && x < self.x_max
    }

    /// Trapezoid `L²` norm of nodal values.
    pub fn l2_norm(&self, values: ArrayView1<'_, f64>) -> f64 {
        let n = values.len();
        let mut acc: f64 = values.iter().map(|v| v * v).sum();
        acc -= 0.5 * (values[0] * values[0] + values[n - 1] * values[n - 1]);
        (acc * self.dx()).max(0.0).sqrt()
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: ArrayView1<'_, f64>) -> f64 {
        let n = values.len();
        let acc: f64 = values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]);
        acc * self.dx()
    }
}

/// Nodal values on a grid; one row per time level (a single row for
/// time-independent data).
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    values: Array2<f64>,
}

impl GridFunction {
    pub fn from_array(values: Array2<f64>) -> Self {
        GridFunction { values }
    }

    pub fn space(values: Vec<f64>) -> Self {
        let nx = values.len();
        GridFunction {
            values: Array2::from_shape_vec((1, nx), values).expect("row vector"),
        }
    }

    pub fn zeros_space(nx: usize) -> Self {
        GridFunction {
            values: Array2::zeros((1, nx)),
        }
    }

    pub fn zeros_space_time(nt: usize, nx: usize) -> Self {
        GridFunction {
            values: Array2::zeros((nt, nx)),
        }
    }

    pub fn from_fn_space(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self::space(grid.xs().into_iter().map(f).collect())
    }

    pub fn from_fn_space_time(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.xs();
        let values = Array2::from_shape_fn((grid.nt, grid.nx), |(n, i)| f(grid.t(n), xs[i]));
        GridFunction { values }
    }

    pub fn levels(&self) -> usize {
        self.values.nrows()
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.levels() > 1
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn row(&self, level: usize) -> ArrayView1<'_, f64> {
        self.values.row(level)
    }

    pub fn row_mut(&mut self, level: usize) -> ArrayViewMut1<'_, f64> {
        self.values.row_mut(level)
    }

    /// Row at `level`, treating time-independent data as constant in time.
    pub fn at_level(&self, level: usize) -> ArrayView1<'_, f64> {
        if self.levels() == 1 {
            self.values.row(0)
        } else {
            self.values.row(level)
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `sup_t ‖·(t)‖_{L²}` over the stored levels.
    pub fn sup_l2(&self, grid: &GridSpec) -> f64 {
        self.values
            .axis_iter(Axis(0))
            .map(|r| grid.l2_norm(r))
            .fold(0.0, f64::max)
    }

    /// Per-level `L²` norms.
    pub fn l2_by_level(&self, grid: &GridSpec) -> Vec<f64> {
        self.values
            .axis_iter(Axis(0))
            .map(|r| grid.l2_norm(r))
            .collect()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            values: &self.values * c,
        }
    }

    /// Pointwise product, broadcasting time-independent data over levels.
    pub fn product(&self, other: &GridFunction) -> Result<GridFunction> {
        self.broadcast_zip(other, |a, b| a * b)
    }

    pub fn sum(&self, other: &GridFunction) -> Result<GridFunction> {
        self.broadcast_zip(other, |a, b| a + b)
    }

    pub fn difference(&self, other: &GridFunction) -> Result<GridFunction> {
        self.broadcast_zip(other, |a, b| a - b)
    }

    fn broadcast_zip(
        &self,
        other: &GridFunction,
        op: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        if self.nx() != other.nx() {
            return Err(Error::Shape(format!(
                "spatial sizes differ: {} vs {}",
                self.nx(),
                other.nx()
            )));
        }
        let levels = match (self.levels(), other.levels()) {
            (a, b) if a == b => a,
            (1, b) => b,
            (a, 1) => a,
            (a, b) => {
                return Err(Error::Shape(format!("time levels differ: {a} vs {b}")));
            }
        };
        let values = Array2::from_shape_fn((levels, self.nx()), |(n, i)| {
            op(self.at_level(n)[i], other.at_level(n)[i])
        });
        Ok(GridFunction { values })
    }

    /// In-place `self += c·other`, with broadcasting of `other` only.
    pub fn add_scaled(&mut self, c: f64, other: &GridFunction) -> Result<()> {
        if self.nx() != other.nx() || (other.levels() != 1 && other.levels() != self.levels()) {
            return Err(Error::Shape(format!(
                "cannot accumulate {}x{} into {}x{}",
                other.levels(),
                other.nx(),
                self.levels(),
                self.nx()
            )));
        }
        for n in 0..self.levels() {
            let src = other.at_level(n).to_owned();
            self.values.row_mut(n).scaled_add(c, &src);
        }
        Ok(())
    }

    /// Broadcast a time-independent function to `nt` identical levels.
    pub fn broadcast_levels(&self, nt: usize) -> GridFunction {
        if self.levels() == nt {
            return self.clone();
        }
        let values = Array2::from_shape_fn((nt, self.nx()), |(n, i)| self.at_level(n)[i]);
        GridFunction { values }
    }
}
