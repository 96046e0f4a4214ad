use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::network::{add_assign, zeros_like, Params, ValueNetwork, Variant};
use crate::error::{Error, Result};

/// Samples for one loss evaluation. `terminal_xs` are evaluated at `t = T`
/// and only contribute the boundary term (DeepReach variant).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainBatch {
    pub ts: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub terminal_xs: Vec<Vec<f64>>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.ts.len() + self.terminal_xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub residual: f64,
    pub boundary: f64,
    pub total: f64,
}

/// Samples per gradient chunk. Chunks are reduced in index order, so the
/// result does not depend on the number of worker threads.
const CHUNK: usize = 128;

/// Per-sample `|dV/dt + min{H(x, grad V), 0}|` and their mean.
pub fn pde_residual(net: &ValueNetwork, ts: &[f64], xs: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    if ts.is_empty() {
        return Err(Error::InvalidInput("residual batch is empty".into()));
    }
    let evals = net.evaluate_batch(ts, xs)?;
    let residuals: Vec<f64> = evals
        .iter()
        .zip(xs)
        .map(|(e, x)| (e.dv_dt + net.system.hamiltonian(x, &e.grad_x).min(0.0)).abs())
        .collect();
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok((residuals, mean))
}

/// Training loss and its gradient with respect to every parameter.
///
/// `loss = mean_i |r_i| + boundary_weight * mean_j |V(T, x_j) - l(x_j)|`,
/// the second term only for the DeepReach variant. At `H = 0` the zero
/// branch of the minimum is taken.
pub fn loss_and_gradient(net: &ValueNetwork, batch: &TrainBatch, boundary_weight: f64) -> Result<(LossTerms, Params)> {
    let terminal = if net.variant == Variant::Deepreach { batch.terminal_xs.len() } else { 0 };
    if batch.ts.len() + terminal == 0 {
        return Err(Error::InvalidInput("training batch is empty".into()));
    }
    if batch.ts.len() != batch.xs.len() {
        return Err(Error::ShapeMismatch("times and states differ in count".into()));
    }
    let w_res = if batch.ts.is_empty() { 0.0 } else { 1.0 / batch.ts.len() as f64 };
    let w_term = if terminal == 0 { 0.0 } else { boundary_weight / terminal as f64 };

    let horizon = net.system.horizon;
    let mut points: Vec<(f64, Vec<f64>, bool)> =
        batch.ts.iter().zip(&batch.xs).map(|(t, x)| (*t, x.clone(), false)).collect();
    points.extend(batch.terminal_xs[..terminal].iter().map(|x| (horizon, x.clone(), true)));
    for (t, x, _) in &mut points {
        if !(0.0..=horizon).contains(t) {
            return Err(Error::TimeOutOfRange { t: *t, horizon });
        }
        net.system.check_joint(x)?;
        net.dispatch(x);
    }

    let parts: Vec<(f64, f64, Params)> =
        points.par_chunks(CHUNK).map(|chunk| chunk_gradient(net, chunk, w_res, w_term)).collect();
    let mut grads = zeros_like(&net.layers);
    let mut terms = LossTerms::default();
    for (res, bnd, g) in parts {
        terms.residual += res;
        terms.boundary += bnd;
        add_assign(&mut grads, &g);
    }
    terms.residual *= w_res;
    terms.boundary *= if terminal == 0 { 0.0 } else { 1.0 / terminal as f64 };
    terms.total = terms.residual + boundary_weight * terms.boundary;
    Ok((terms, grads))
}

/// Sum of residuals, sum of boundary errors and the weighted gradient of a chunk.
fn chunk_gradient(net: &ValueNetwork, chunk: &[(f64, Vec<f64>, bool)], w_res: f64, w_term: f64) -> (f64, f64, Params) {
    let sys = &net.system;
    let ts: Vec<f64> = chunk.iter().map(|p| p.0).collect();
    let xs: Vec<Vec<f64>> = chunk.iter().map(|p| p.1.clone()).collect();
    let raw = ValueNetwork::raw_inputs(&ts, &xs);
    let (out, tape) = net.forward(raw.view(), true);
    let tape = tape.expect("recorded tape");
    let b = chunk.len();
    let d = net.input_dim();
    let mut gn = Array1::zeros(b);
    let mut gdn = Array2::zeros((b, d));
    let (mut res_sum, mut bnd_sum) = (0.0, 0.0);
    for (i, (t, x, terminal)) in chunk.iter().enumerate() {
        if *terminal {
            let err = out.n[i] - sys.boundary_value(x);
            bnd_sum += err.abs();
            gn[i] = w_term * sign0(err);
            continue;
        }
        let dn = out.dn.row(i).to_vec();
        let e = net.compose(*t, x, out.n[i], &dn, false);
        let h = sys.hamiltonian(x, &e.grad_x);
        let r = e.dv_dt + h.min(0.0);
        res_sum += r.abs();
        let s = w_res * sign0(r);
        let grad_adj: Vec<f64> = if h < 0.0 {
            sys.hamiltonian_costate_gradient(x, &e.grad_x).iter().map(|g| s * g).collect()
        } else {
            vec![0.0; x.len()]
        };
        match net.variant {
            Variant::Deepreach => {
                gdn[[i, 0]] = s;
                for (k, g) in grad_adj.iter().enumerate() {
                    gdn[[i, 1 + k]] = *g;
                }
            }
            Variant::Bc | Variant::BcSym => {
                let tau = sys.horizon - t;
                gn[i] = -s;
                gdn[[i, 0]] = s * tau;
                for (k, g) in grad_adj.iter().enumerate() {
                    gdn[[i, 1 + k]] = tau * g;
                }
            }
        }
    }
    let grads = net.backward(&tape, &gn, &gdn);
    (res_sum, bnd_sum, grads)
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
