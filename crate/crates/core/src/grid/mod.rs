//! Grid level-set oracle for the HJI equation.
//!
//! [`solve_brt`] integrates the value function backward from `V(T) = l`
//! with a first-order Lax-Friedrichs scheme; the resulting [`ValueField`]
//! keeps a subset of time slices and interpolates between them.

mod io;
mod solver;

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, SystemSpec};
use crate::error::{Error, Result};
use crate::value::{check_time, EvalResult, ValueFunction};

pub use io::{decode_field, encode_field, read_field, write_field, FIELD_MAGIC};
pub use solver::{default_store_stride, memory_estimate, solve_brt, time_steps, SolveOptions, SolveStats};

/// Regular grid over the joint state box. Periodic dimensions omit the
/// duplicate endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub counts: Vec<usize>,
    pub bounds: Vec<[f64; 2]>,
    pub periodic: Vec<bool>,
}

impl Grid {
    pub fn new(counts: Vec<usize>, bounds: Vec<[f64; 2]>, periodic: Vec<bool>) -> Result<Self> {
        if counts.is_empty() || counts.len() != bounds.len() || counts.len() != periodic.len() {
            return Err(Error::ShapeMismatch("grid counts, bounds and periodic mask differ in length".into()));
        }
        for (i, (&n, b)) in counts.iter().zip(&bounds).enumerate() {
            if n < 3 {
                return Err(Error::InvalidInput(format!("grid dimension {i} has {n} < 3 nodes")));
            }
            if !(b[0] < b[1]) {
                return Err(Error::InvalidInput(format!("grid dimension {i} has empty bounds")));
            }
        }
        Ok(Self { counts, bounds, periodic })
    }

    /// Grid over a system's state box with `counts[i]` nodes per dimension.
    pub fn for_system(sys: &SystemSpec, counts: &[usize]) -> Result<Self> {
        if counts.len() != sys.joint_dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} grid counts for a {}-dimensional system",
                counts.len(),
                sys.joint_dim()
            )));
        }
        Self::new(counts.to_vec(), sys.state_bounds(), sys.periodic_mask())
    }

    /// Same node count in every dimension.
    pub fn uniform(sys: &SystemSpec, n: usize) -> Result<Self> {
        Self::for_system(sys, &vec![n; sys.joint_dim()])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, dim: usize) -> f64 {
        let [lo, hi] = self.bounds[dim];
        let n = self.counts[dim];
        if self.periodic[dim] {
            (hi - lo) / n as f64
        } else {
            (hi - lo) / (n - 1) as f64
        }
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    pub fn coordinate(&self, dim: usize, index: usize) -> f64 {
        self.bounds[dim][0] + index as f64 * self.spacing(dim)
    }

    /// Row-major strides (last dimension fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for i in (0..self.dim().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.counts[i + 1];
        }
        strides
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = flat % self.counts[i];
            flat /= self.counts[i];
        }
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(d, &i)| self.coordinate(d, i)).collect()
    }

    /// All node coordinates, node-major.
    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|f| self.node(f))
    }

    /// Cell location of `x` along each dimension: lower index, upper index,
    /// and the weight of the upper node.
    fn locate(&self, x: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        let mut out = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let [lo, hi] = self.bounds[d];
            let n = self.counts[d];
            let dx = self.spacing(d);
            let mut v = x[d];
            if !v.is_finite() {
                return Err(Error::OutOfBounds { dim: d, value: v, lo, hi });
            }
            if self.periodic[d] {
                v = lo + (v - lo).rem_euclid(hi - lo);
            } else if v < lo - 1e-12 || v > hi + 1e-12 {
                return Err(Error::OutOfBounds { dim: d, value: v, lo, hi });
            }
            let mut u = (v - lo) / dx;
            // node coordinates are reproduced up to rounding; snap onto them
            if (u - u.round()).abs() < 1e-9 {
                u = u.round();
            }
            let mut i0 = u.floor().max(0.0) as usize;
            let mut w = u - i0 as f64;
            if self.periodic[d] {
                i0 %= n;
                out.push((i0, (i0 + 1) % n, w));
            } else {
                if i0 >= n - 1 {
                    i0 = n - 2;
                    w = 1.0;
                }
                out.push((i0, i0 + 1, w.clamp(0.0, 1.0)));
            }
        }
        Ok(out)
    }
}

/// Value function sampled on a grid at a set of stored times.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField {
    pub grid: Grid,
    pub system: SystemSpec,
    /// Ascending, from 0 to the horizon.
    pub times: Vec<f64>,
    /// One array per entry of `times`, in grid order.
    pub slices: Vec<Vec<f64>>,
}

impl ValueField {
    pub fn horizon(&self) -> f64 {
        self.system.horizon
    }

    /// Slice stored at `t = 0`.
    pub fn initial_slice(&self) -> &[f64] {
        &self.slices[0]
    }

    /// Slice stored at the horizon (equal to `l` on the nodes).
    pub fn terminal_slice(&self) -> &[f64] {
        self.slices.last().expect("field has slices")
    }

    /// Bracketing slice indices and the weight of the later one.
    fn time_bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        check_time(&self.system, t)?;
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Ok((0, 0, 0.0));
        }
        let lo = k - 1;
        if self.times[lo] == t || lo + 1 == self.times.len() {
            return Ok((lo, lo, 0.0));
        }
        let w = (t - self.times[lo]) / (self.times[lo + 1] - self.times[lo]);
        Ok((lo, lo + 1, w))
    }

    fn interpolate_slice(&self, slice: &[f64], cell: &[(usize, usize, f64)], strides: &[usize]) -> f64 {
        let d = cell.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0;
            for (k, &(i0, i1, w)) in cell.iter().enumerate() {
                if corner >> k & 1 == 1 {
                    weight *= w;
                    flat += i1 * strides[k];
                } else {
                    weight *= 1.0 - w;
                    flat += i0 * strides[k];
                }
            }
            if weight != 0.0 {
                acc += weight * slice[flat];
            }
        }
        acc
    }

    /// Multilinear in space, linear in time between stored slices.
    pub fn sample_value(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let (k0, k1, wt) = self.time_bracket(t)?;
        let cell = self.grid.locate(x)?;
        let strides = self.grid.strides();
        let v0 = self.interpolate_slice(&self.slices[k0], &cell, &strides);
        if k0 == k1 || wt == 0.0 {
            return Ok(v0);
        }
        let v1 = self.interpolate_slice(&self.slices[k1], &cell, &strides);
        Ok((1.0 - wt) * v0 + wt * v1)
    }

    /// Membership in `{x | V(t, x) > 0}`.
    pub fn brt_membership(&self, t: f64, x: &[f64]) -> Result<bool> {
        Ok(self.sample_value(t, x)? > 0.0)
    }

    /// Fraction of nodes with `V(0, x) > 0`.
    pub fn safe_fraction(&self) -> f64 {
        let s = self.initial_slice();
        s.iter().filter(|&&v| v > 0.0).count() as f64 / s.len() as f64
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "state has {} coordinates, field has {}",
                x.len(),
                self.grid.dim()
            )));
        }
        Ok(())
    }

    /// Exact derivatives of the interpolant (one-sided on cell faces).
    fn interpolant_gradient(&self, slice: &[f64], cell: &[(usize, usize, f64)], strides: &[usize]) -> Vec<f64> {
        let d = cell.len();
        let mut grad = vec![0.0; d];
        for (i, g) in grad.iter_mut().enumerate() {
            let dx = self.grid.spacing(i);
            let mut acc = 0.0;
            for corner in 0..(1usize << d) {
                let mut weight = 1.0;
                let mut flat = 0;
                for (k, &(i0, i1, w)) in cell.iter().enumerate() {
                    let upper = corner >> k & 1 == 1;
                    flat += if upper { i1 } else { i0 } * strides[k];
                    weight *= match (k == i, upper) {
                        (true, true) => 1.0 / dx,
                        (true, false) => -1.0 / dx,
                        (false, true) => w,
                        (false, false) => 1.0 - w,
                    };
                }
                if weight != 0.0 {
                    acc += weight * slice[flat];
                }
            }
            *g = acc;
        }
        grad
    }
}

impl ValueFunction for ValueField {
    fn system(&self) -> &SystemSpec {
        &self.system
    }

    /// Interpolated value with the interpolant's own derivatives: spatial
    /// gradient of the multilinear cell, time slope of the bracketing pair.
    fn evaluate(&self, t: f64, x: &[f64]) -> Result<EvalResult> {
        self.check_dim(x)?;
        let value = self.sample_value(t, x)?;
        let cell = self.grid.locate(x)?;
        let strides = self.grid.strides();
        let (k0, k1, wt) = self.time_bracket(t)?;
        let g0 = self.interpolant_gradient(&self.slices[k0], &cell, &strides);
        let grad_x = if k0 == k1 || wt == 0.0 {
            g0
        } else {
            let g1 = self.interpolant_gradient(&self.slices[k1], &cell, &strides);
            g0.iter().zip(&g1).map(|(a, b)| (1.0 - wt) * a + wt * b).collect()
        };
        let (a, b) = if self.times.len() < 2 {
            (0, 0)
        } else if k0 + 1 < self.times.len() {
            (k0, k0 + 1)
        } else {
            (k0 - 1, k0)
        };
        let dv_dt = if a == b {
            0.0
        } else {
            let va = self.interpolate_slice(&self.slices[a], &cell, &strides);
            let vb = self.interpolate_slice(&self.slices[b], &cell, &strides);
            (vb - va) / (self.times[b] - self.times[a])
        };
        Ok(EvalResult { value, dv_dt, grad_x })
    }
}

/// Index of the node mirrored by a ±1 diagonal symmetry map on a grid that
/// is itself symmetric (non-periodic dims centred on zero).
pub fn mirrored_node(grid: &Grid, jacobian: &[f64], flat: usize) -> usize {
    let idx = grid.multi_index(flat);
    let strides = grid.strides();
    idx.iter()
        .enumerate()
        .map(|(d, &i)| {
            let n = grid.counts[d];
            let j = if jacobian[d] > 0.0 {
                i
            } else if grid.periodic[d] {
                (n - i) % n
            } else {
                n - 1 - i
            };
            j * strides[d]
        })
        .sum()
}

/// Wrap the periodic coordinates of `x` for the grid.
pub fn wrap_for_grid(grid: &Grid, x: &mut [f64]) {
    for (d, v) in x.iter_mut().enumerate() {
        if grid.periodic[d] {
            *v = wrap_angle(*v);
        }
    }
}

#[cfg(test)]
mod tests;
