use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Grid, ValueField};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Courant number, in (0, 1].
    pub cfl: f64,
    /// Keep every `store_stride`-th time slice (plus both ends). `None`
    /// picks the smallest stride that keeps at most 50 slices.
    pub store_stride: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { cfl: 0.5, store_stride: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveStats {
    pub steps: usize,
    pub dt: f64,
    pub dissipation: Vec<f64>,
    pub stored_slices: usize,
}

/// Smallest stride keeping at most 50 slices for `steps` time steps.
pub fn default_store_stride(steps: usize) -> usize {
    steps.div_ceil(49).max(1)
}

/// Time step count and step size for a grid under the CFL condition.
pub fn time_steps(sys: &SystemSpec, grid: &Grid, cfl: f64) -> (usize, f64, Vec<f64>) {
    let alpha = sys.dissipation_bounds(&grid.bounds);
    let rate: f64 = alpha.iter().enumerate().map(|(i, a)| a / grid.spacing(i)).sum();
    let dt_max = cfl / rate;
    let steps = (sys.horizon / dt_max).ceil().max(1.0) as usize;
    (steps, sys.horizon / steps as f64, alpha)
}

/// Integrate the HJI variational inequality backward from `V(T) = l`.
///
/// Each step applies `V <- min(V + dt * G, V)` with the Lax-Friedrichs
/// flux `G = H(x, (p- + p+)/2) + sum_i alpha_i (p+_i - p-_i) / 2`. On
/// non-periodic faces the missing one-sided difference copies the other.
pub fn solve_brt(sys: &SystemSpec, grid: &Grid, options: &SolveOptions) -> Result<(ValueField, SolveStats)> {
    sys.validate()?;
    if !(options.cfl > 0.0 && options.cfl <= 1.0) {
        return Err(Error::InvalidInput(format!("cfl must lie in (0, 1], got {}", options.cfl)));
    }
    if grid.dim() != sys.joint_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{}-dimensional grid for a {}-dimensional system",
            grid.dim(),
            sys.joint_dim()
        )));
    }
    let (steps, dt, alpha) = time_steps(sys, grid, options.cfl);
    let stride = options.store_stride.unwrap_or_else(|| default_store_stride(steps)).max(1);

    let terminal: Vec<f64> = grid.nodes().map(|x| sys.boundary_value(&x)).collect();
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "boundary function", time: sys.horizon });
    }

    let mut stored = vec![(sys.horizon, terminal.clone())];
    let mut current = terminal;
    let mut next = vec![0.0; current.len()];
    let sweep = Sweep::new(sys, grid, &alpha);

    for k in 1..=steps {
        sweep.step(&current, &mut next, dt);
        std::mem::swap(&mut current, &mut next);
        let t = if k == steps { 0.0 } else { sys.horizon - k as f64 * dt };
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "level-set update", time: t });
        }
        if k % stride == 0 || k == steps {
            stored.push((t, current.clone()));
        }
    }

    stored.reverse();
    let (times, slices): (Vec<f64>, Vec<Vec<f64>>) = stored.into_iter().unzip();
    let stats = SolveStats { steps, dt, dissipation: alpha, stored_slices: times.len() };
    Ok((ValueField { grid: grid.clone(), system: sys.clone(), times, slices }, stats))
}

/// Bytes needed by a solve: working arrays plus stored slices.
pub fn memory_estimate(sys: &SystemSpec, grid: &Grid, options: &SolveOptions) -> usize {
    let (steps, _, _) = time_steps(sys, grid, options.cfl);
    let stride = options.store_stride.unwrap_or_else(|| default_store_stride(steps)).max(1);
    let slices = steps / stride + 2;
    grid.len() * std::mem::size_of::<f64>() * (slices + 2)
}

struct Sweep<'a> {
    sys: &'a SystemSpec,
    grid: &'a Grid,
    alpha: &'a [f64],
    strides: Vec<usize>,
    inv_dx: Vec<f64>,
    coords: Vec<Vec<f64>>,
}

impl<'a> Sweep<'a> {
    fn new(sys: &'a SystemSpec, grid: &'a Grid, alpha: &'a [f64]) -> Self {
        let coords = (0..grid.dim())
            .map(|d| (0..grid.counts[d]).map(|i| grid.coordinate(d, i)).collect())
            .collect();
        Self {
            sys,
            grid,
            alpha,
            strides: grid.strides(),
            inv_dx: (0..grid.dim()).map(|d| 1.0 / grid.spacing(d)).collect(),
            coords,
        }
    }

    fn step(&self, v: &[f64], out: &mut [f64], dt: f64) {
        let outer = self.strides[0];
        out.par_chunks_mut(outer).enumerate().for_each(|(i0, chunk)| {
            let d = self.grid.dim();
            let mut idx = [0usize; 8];
            idx[0] = i0;
            let mut x = [0.0f64; 8];
            let mut p = [0.0f64; 8];
            for (local, slot) in chunk.iter_mut().enumerate() {
                let flat = i0 * outer + local;
                // odometer over the trailing dimensions
                let mut rem = local;
                for k in (1..d).rev() {
                    idx[k] = rem % self.grid.counts[k];
                    rem /= self.grid.counts[k];
                }
                let mut dissipation = 0.0;
                let center = v[flat];
                for k in 0..d {
                    x[k] = self.coords[k][idx[k]];
                    let n = self.grid.counts[k];
                    let s = self.strides[k];
                    let i = idx[k];
                    let prev = if i > 0 {
                        Some(flat - s)
                    } else if self.grid.periodic[k] {
                        Some(flat + (n - 1) * s)
                    } else {
                        None
                    };
                    let next = if i + 1 < n {
                        Some(flat + s)
                    } else if self.grid.periodic[k] {
                        Some(flat - (n - 1) * s)
                    } else {
                        None
                    };
                    let minus = prev.map(|j| (center - v[j]) * self.inv_dx[k]);
                    let plus = next.map(|j| (v[j] - center) * self.inv_dx[k]);
                    let (pm, pp) = match (minus, plus) {
                        (Some(a), Some(b)) => (a, b),
                        (Some(a), None) => (a, a),
                        (None, Some(b)) => (b, b),
                        (None, None) => (0.0, 0.0),
                    };
                    p[k] = 0.5 * (pm + pp);
                    dissipation += self.alpha[k] * 0.5 * (pp - pm);
                }
                let flux = self.sys.hamiltonian(&x[..d], &p[..d]) + dissipation;
                *slot = center + dt * flux.min(0.0);
            }
        });
    }
}
