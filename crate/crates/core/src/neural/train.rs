use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_gradient, pde_residual, TrainBatch};
use super::network::{init_network, zeros_like, Architecture, Params, ValueNetwork, Variant};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::grid::ValueField;
use crate::seed;
use crate::value::ValueFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub arch: Architecture,
    /// Total number of sampled points, terminal samples included.
    pub total_samples: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate every `decay_every` samples.
    pub lr_decay: f64,
    pub decay_every: u64,
    /// Share of the budget spent at `t = T` before the window opens.
    pub pretrain_fraction: f64,
    /// Share of the budget over which the window grows from 0 to `T`.
    pub curriculum_fraction: f64,
    /// DeepReach only: share of each batch drawn at `t = T` for the
    /// boundary term.
    pub terminal_fraction: f64,
    pub boundary_weight: f64,
    /// Validation every this many optimizer steps (0 disables, the final
    /// snapshot is always taken).
    pub validate_every: usize,
    pub validation_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Bc,
            arch: Architecture::default(),
            total_samples: 2_000_000,
            batch_size: 500,
            learning_rate: 1e-4,
            lr_decay: 0.5,
            decay_every: 1_000_000,
            pretrain_fraction: 0.05,
            curriculum_fraction: 0.6,
            terminal_fraction: 0.25,
            boundary_weight: 10.0,
            validate_every: 500,
            validation_samples: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.total_samples == 0 {
            return bad("total_samples must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return bad("lr_decay must lie in (0, 1] with a positive decay_every");
        }
        let fractions = [self.pretrain_fraction, self.curriculum_fraction, self.terminal_fraction];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || self.pretrain_fraction + self.curriculum_fraction > 1.0 {
            return bad("curriculum fractions must lie in [0, 1] and sum to at most 1");
        }
        if self.variant == Variant::Deepreach && self.terminal_fraction >= 1.0 {
            return bad("terminal_fraction must leave room for residual samples");
        }
        if !(self.boundary_weight >= 0.0) {
            return bad("boundary_weight must be non-negative");
        }
        Ok(())
    }

    /// Width of the sampled time window `[T - delta, T]` after `used` samples.
    pub fn window(&self, horizon: f64, used: u64) -> f64 {
        let frac = used as f64 / self.total_samples as f64;
        if frac < self.pretrain_fraction {
            return 0.0;
        }
        if self.curriculum_fraction == 0.0 {
            return horizon;
        }
        horizon * ((frac - self.pretrain_fraction) / self.curriculum_fraction).min(1.0)
    }

    pub fn learning_rate_at(&self, used: u64) -> f64 {
        self.learning_rate * self.lr_decay.powi((used / self.decay_every) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub samples: u64,
    pub window: f64,
    pub loss: f64,
    /// Oracle error when an oracle was supplied, otherwise mean residual on
    /// a fixed validation set. Absent between validation snapshots.
    pub validation: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self, zero_wall_time: bool) -> String {
        let mut out = String::from("step,samples,window,loss,validation,wall_seconds\n");
        for r in &self.rows {
            let validation = r.validation.map(|v| format!("{v:.8e}")).unwrap_or_default();
            let wall = if zero_wall_time { 0.0 } else { r.wall_seconds };
            out.push_str(&format!(
                "{},{},{:.6},{:.8e},{},{:.3}\n",
                r.step, r.samples, r.window, r.loss, validation, wall
            ));
        }
        out
    }

    pub fn final_validation(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.validation)
    }

    pub fn first_validation(&self) -> Option<f64> {
        self.rows.iter().find_map(|r| r.validation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mean_abs_error: f64,
    pub mean_abs_error_t0: f64,
    pub samples: usize,
}

/// Mean `|V_net - V_field|` over `n` samples: half at `t = 0`, half with
/// `t` uniform in `[0, T]`, states uniform in the state box.
pub fn validate_against_oracle(
    net: &dyn ValueFunction,
    field: &ValueField,
    n: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if net.system() != &field.system {
        return Err(Error::SystemMismatch(format!(
            "network is for {} and the oracle for {}",
            net.system().kind().name(),
            field.system.kind().name()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("validation needs at least one sample".into()));
    }
    let sys = net.system();
    let mut rng = seed::rng(seed);
    let (mut total, mut total0, mut n0) = (0.0, 0.0, 0usize);
    for i in 0..n {
        let t = if i % 2 == 0 { 0.0 } else { rng.random_range(0.0..=sys.horizon) };
        let x = sys.sample_joint(&mut rng);
        let err = (net.value(t, &x)? - field.sample_value(t, &x)?).abs();
        total += err;
        if i % 2 == 0 {
            total0 += err;
            n0 += 1;
        }
    }
    Ok(ValidationReport { mean_abs_error: total / n as f64, mean_abs_error_t0: total0 / n0 as f64, samples: n })
}

struct Adam {
    m: Params,
    v: Params,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &Params) -> Self {
        Self { m: zeros_like(params), v: zeros_like(params), step: 0 }
    }

    fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            };
            ndarray::Zip::from(&mut p.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
            ndarray::Zip::from(&mut p.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
    }
}

/// Where validation error comes from during training.
pub enum Validator<'a> {
    /// Mean PDE residual on a fixed sample set.
    Residual,
    Oracle(&'a ValueField),
}

/// Train a fresh network.
pub fn train(sys: &SystemSpec, config: &TrainConfig, validator: Validator<'_>) -> Result<(ValueNetwork, TrainLog)> {
    config.validate()?;
    let net = init_network(sys, config.variant, &config.arch, config.seed)?;
    train_from(net, config, validator)
}

/// Continue training `net` with `config`. Optimizer moments start fresh.
pub fn train_from(mut net: ValueNetwork, config: &TrainConfig, validator: Validator<'_>) -> Result<(ValueNetwork, TrainLog)> {
    config.validate()?;
    if net.variant != config.variant {
        return Err(Error::InvalidInput(format!(
            "network variant {} differs from configured {}",
            net.variant.name(),
            config.variant.name()
        )));
    }
    let sys = net.system.clone();
    let horizon = sys.horizon;
    let started = Instant::now();
    let mut rng = seed::rng(seed::derive_named(config.seed, "train-samples"));
    let validation_seed = seed::derive_named(config.seed, "validation");
    let residual_set = residual_validation_set(&net, config.validation_samples.max(1), validation_seed);
    let validate = |net: &ValueNetwork| -> Result<f64> {
        match &validator {
            Validator::Residual => pde_residual(net, &residual_set.0, &residual_set.1).map(|r| r.1),
            Validator::Oracle(field) => {
                validate_against_oracle(net, field, config.validation_samples.max(1), validation_seed)
                    .map(|r| r.mean_abs_error)
            }
        }
    };

    let mut adam = Adam::new(&net.layers);
    let mut log = TrainLog::default();
    log.rows.push(LogRow {
        step: 0,
        samples: 0,
        window: 0.0,
        loss: f64::NAN,
        validation: Some(validate(&net)?),
        wall_seconds: started.elapsed().as_secs_f64(),
    });
    let mut used = 0u64;
    let mut step = 0usize;
    while used < config.total_samples {
        let batch_n = (config.batch_size as u64).min(config.total_samples - used) as usize;
        let window = config.window(horizon, used);
        let batch = draw_batch(&net, config, window, used, batch_n, &mut rng);
        let (terms, grads) = loss_and_gradient(&net, &batch, config.boundary_weight)?;
        step += 1;
        if !terms.total.is_finite() {
            return Err(Error::Diverged { step, reason: format!("loss is {}", terms.total) });
        }
        adam.update(&mut net.layers, &grads, config.learning_rate_at(used));
        if !net.all_finite() {
            return Err(Error::Diverged { step, reason: "non-finite parameter after update".into() });
        }
        used += batch_n as u64;
        let last = used >= config.total_samples;
        let snapshot = last || (config.validate_every > 0 && step.is_multiple_of(config.validate_every));
        let validation = if snapshot { Some(validate(&net)?) } else { None };
        if snapshot || step.is_multiple_of(50) {
            log.rows.push(LogRow {
                step,
                samples: used,
                window,
                loss: terms.total,
                validation,
                wall_seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    Ok((net, log))
}

fn residual_validation_set(net: &ValueNetwork, n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = seed::rng(seed);
    let sys = &net.system;
    let mut ts = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        ts.push(rng.random_range(0.0..=sys.horizon));
        xs.push(sample_state(net, &mut rng));
    }
    (ts, xs)
}

/// Uniform state sample; for `BcSym` folded into the training half, which
/// keeps it uniform there because the map is a measure-preserving involution.
fn sample_state<R: Rng>(net: &ValueNetwork, rng: &mut R) -> Vec<f64> {
    let x = net.system.sample_joint(rng);
    if net.variant == Variant::BcSym && !net.system.in_train_region(&x) {
        net.system.symmetry_map(&x)
    } else {
        x
    }
}

fn draw_batch<R: Rng>(net: &ValueNetwork, config: &TrainConfig, window: f64, used: u64, n: usize, rng: &mut R) -> TrainBatch {
    let horizon = net.system.horizon;
    let pretraining = (used as f64) < config.pretrain_fraction * config.total_samples as f64;
    let terminal = match net.variant {
        Variant::Deepreach if pretraining => n,
        Variant::Deepreach => ((n as f64) * config.terminal_fraction).round() as usize,
        _ => 0,
    };
    let mut batch = TrainBatch::default();
    for _ in 0..n - terminal {
        let t = horizon - window * rng.random::<f64>();
        batch.ts.push(t);
        batch.xs.push(sample_state(net, rng));
    }
    for _ in 0..terminal {
        batch.terminal_xs.push(sample_state(net, rng));
    }
    batch
}
