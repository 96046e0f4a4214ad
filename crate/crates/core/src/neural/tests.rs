use rand::Rng;

use super::*;
use crate::dynamics::SystemSpec;
use crate::error::Error;
use crate::seed;
use crate::value::ValueFunction;

fn small_arch() -> Architecture {
    Architecture { hidden: vec![16, 16], omega0: 30.0 }
}

fn random_point<R: Rng>(sys: &SystemSpec, rng: &mut R) -> (f64, Vec<f64>) {
    // stay off the box faces so central differences stay inside
    let x = sys
        .state_bounds()
        .iter()
        .map(|b| {
            let pad = 0.01 * (b[1] - b[0]);
            rng.random_range(b[0] + pad..b[1] - pad)
        })
        .collect();
    (rng.random_range(0.01..sys.horizon - 0.01), x)
}

#[test]
fn init_is_deterministic_and_bounded() {
    let sys = SystemSpec::air3d();
    let arch = small_arch();
    let a = init_network(&sys, Variant::Bc, &arch, 7).unwrap();
    let b = init_network(&sys, Variant::Bc, &arch, 7).unwrap();
    let c = init_network(&sys, Variant::Bc, &arch, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.layers, c.layers);
    let first = 1.0 / 4.0;
    assert!(a.layers[0].weight.iter().all(|w| w.abs() <= first));
    for layer in &a.layers[1..] {
        let bound = (6.0 / layer.weight.ncols() as f64).sqrt() / arch.omega0;
        assert!(layer.weight.iter().all(|w| w.abs() <= bound));
    }
    assert!(init_network(&sys, Variant::Bc, &Architecture { hidden: vec![], omega0: 30.0 }, 0).is_err());
}

#[test]
fn normalization_maps_domain_to_unit_box() {
    let sys = SystemSpec::simple_arm();
    let (c, s) = input_normalization(&sys);
    assert_eq!(c[0], 0.5);
    assert_eq!(s[0], 0.5);
    for k in 1..5 {
        assert!(c[k].abs() < 1e-15);
        assert!((s[k] - std::f64::consts::PI).abs() < 1e-15);
    }
}

#[test]
fn bc_variants_match_boundary_at_horizon() {
    for variant in [Variant::Bc, Variant::BcSym] {
        let sys = SystemSpec::simple_arm();
        let net = init_network(&sys, variant, &small_arch(), 3).unwrap();
        let mut rng = seed::rng(4);
        for _ in 0..200 {
            let x = sys.sample_joint(&mut rng);
            assert_eq!(net.value(sys.horizon, &x).unwrap(), sys.boundary_value(&x));
        }
    }
}

#[test]
fn bc_sym_is_symmetric_with_flipped_gradient() {
    let sys = SystemSpec::air3d();
    let net = init_network(&sys, Variant::BcSym, &small_arch(), 5).unwrap();
    let mut rng = seed::rng(6);
    for _ in 0..200 {
        let (t, x) = random_point(&sys, &mut rng);
        let fx = sys.symmetry_map(&x);
        let a = net.evaluate(t, &x).unwrap();
        let b = net.evaluate(t, &fx).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.dv_dt, b.dv_dt);
        assert_eq!(a.grad_x[0], b.grad_x[0]);
        assert_eq!(a.grad_x[1], -b.grad_x[1]);
        assert_eq!(a.grad_x[2], -b.grad_x[2]);
    }
}

#[test]
fn input_gradients_match_finite_differences() {
    let h = 1e-5;
    for sys in [SystemSpec::air3d(), SystemSpec::simple_arm()] {
        for variant in [Variant::Deepreach, Variant::Bc, Variant::BcSym] {
            let net = init_network(&sys, variant, &small_arch(), 11).unwrap();
            let mut rng = seed::rng(12);
            let mut worst: f64 = 0.0;
            for _ in 0..30 {
                let (t, x) = random_point(&sys, &mut rng);
                let e = net.evaluate(t, &x).unwrap();
                let mut fd = vec![(net.value(t + h, &x).unwrap() - net.value(t - h, &x).unwrap()) / (2.0 * h)];
                for k in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    fd.push((net.value(t, &xp).unwrap() - net.value(t, &xm).unwrap()) / (2.0 * h));
                }
                let mut analytic = vec![e.dv_dt];
                analytic.extend(&e.grad_x);
                let num: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
                worst = worst.max(num / den);
            }
            assert!(worst <= 1e-5, "{:?} {:?}: {worst}", sys.kind(), variant);
        }
    }
}

fn directional_check(sys: &SystemSpec, variant: Variant) -> f64 {
    let net = init_network(sys, variant, &small_arch(), 21).unwrap();
    let mut rng = seed::rng(22);
    let mut batch = TrainBatch::default();
    for _ in 0..40 {
        let (t, mut x) = random_point(sys, &mut rng);
        if variant == Variant::BcSym && !sys.in_train_region(&x) {
            x = sys.symmetry_map(&x);
        }
        batch.ts.push(t);
        batch.xs.push(x);
    }
    for _ in 0..10 {
        batch.terminal_xs.push(sys.sample_joint(&mut rng));
    }
    let (_, grads) = loss_and_gradient(&net, &batch, 2.0).unwrap();
    let direction: Vec<Layer> = net
        .layers
        .iter()
        .map(|l| Layer {
            weight: l.weight.mapv(|_| rng.random_range(-1.0..1.0)),
            bias: l.bias.mapv(|_| rng.random_range(-1.0..1.0)),
        })
        .collect();
    let analytic: f64 = grads
        .iter()
        .zip(&direction)
        .map(|(g, d)| (&g.weight * &d.weight).sum() + (&g.bias * &d.bias).sum())
        .sum();
    let shifted = |eps: f64| {
        let mut n = net.clone();
        for (l, d) in n.layers.iter_mut().zip(&direction) {
            l.weight.scaled_add(eps, &d.weight);
            l.bias.scaled_add(eps, &d.bias);
        }
        loss_and_gradient(&n, &batch, 2.0).unwrap().0.total
    };
    let eps = 1e-7;
    let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
    (analytic - fd).abs() / fd.abs().max(1e-8)
}

#[test]
fn loss_gradient_matches_directional_differences() {
    for sys in [SystemSpec::air3d(), SystemSpec::simple_arm()] {
        for variant in [Variant::Deepreach, Variant::Bc, Variant::BcSym] {
            let rel = directional_check(&sys, variant);
            assert!(rel <= 1e-4, "{:?} {:?}: {rel}", sys.kind(), variant);
        }
    }
}

#[test]
fn gradient_is_independent_of_chunking_and_threads() {
    let sys = SystemSpec::air3d();
    let net = init_network(&sys, Variant::Bc, &small_arch(), 1).unwrap();
    let mut rng = seed::rng(2);
    let mut batch = TrainBatch::default();
    for _ in 0..300 {
        let (t, x) = random_point(&sys, &mut rng);
        batch.ts.push(t);
        batch.xs.push(x);
    }
    let (a, ga) = loss_and_gradient(&net, &batch, 1.0).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let (b, gb) = pool.install(|| loss_and_gradient(&net, &batch, 1.0).unwrap());
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

#[test]
fn time_derivative_at_horizon_is_minus_raw_output() {
    let sys = SystemSpec::air3d();
    let net = init_network(&sys, Variant::Bc, &small_arch(), 9).unwrap();
    let mut rng = seed::rng(10);
    for _ in 0..50 {
        let x = sys.sample_joint(&mut rng);
        let e = net.evaluate(sys.horizon, &x).unwrap();
        assert_eq!(e.dv_dt, -net.raw_output(sys.horizon, &x));
        let (res, _) = pde_residual(&net, &[sys.horizon], std::slice::from_ref(&x)).unwrap();
        let (_, grad_l) = sys.boundary_value_and_gradient(&x);
        let expected = (e.dv_dt + sys.hamiltonian(&x, &grad_l).min(0.0)).abs();
        assert!((res[0] - expected).abs() < 1e-12);
    }
}

#[test]
fn zero_output_layer_gives_zero_particle_residual() {
    let sys = SystemSpec::particle();
    let mut net = init_network(&sys, Variant::Bc, &small_arch(), 13).unwrap();
    let last = net.layers.last_mut().unwrap();
    last.weight.fill(0.0);
    last.bias.fill(0.0);
    let mut rng = seed::rng(14);
    let (ts, xs): (Vec<f64>, Vec<Vec<f64>>) = (0..500).map(|_| random_point(&sys, &mut rng)).unzip();
    let (res, mean) = pde_residual(&net, &ts, &xs).unwrap();
    assert!(res.iter().all(|r| *r < 1e-12));
    assert!(mean < 1e-12);
}

#[test]
fn checkpoints_roundtrip_and_report_damage() {
    let sys = SystemSpec::air3d();
    let net = init_network(&sys, Variant::BcSym, &small_arch(), 15).unwrap();
    let bytes = encode_checkpoint(&net).unwrap();
    let loaded = decode_checkpoint(&bytes).unwrap();
    assert_eq!(encode_checkpoint(&loaded).unwrap(), bytes);
    let mut rng = seed::rng(16);
    for _ in 0..100 {
        let (t, x) = random_point(&sys, &mut rng);
        let a = net.value(t, &x).unwrap();
        let b = loaded.value(t, &x).unwrap();
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
    }

    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::TruncatedBlob { .. })));
    assert!(matches!(decode_checkpoint(b"HJVALNE"), Err(Error::MalformedHeader(_))));
    let mut bad = bytes.clone();
    bad[16] = b'[';
    assert!(matches!(decode_checkpoint(&bad), Err(Error::MalformedHeader(_))));
    // a header whose architecture disagrees with the stored shapes
    let text = String::from_utf8_lossy(&bytes[16..]).into_owned();
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = &text[..len];
    let patched = header.replace("\"hidden\":[16,16]", "\"hidden\":[16,17]");
    assert_ne!(patched, header);
    let mut bad = Vec::from(&b"HJVALNET"[..]);
    bad.extend((patched.len() as u64).to_le_bytes());
    bad.extend(patched.as_bytes());
    bad.extend(&bytes[16 + len..]);
    assert!(matches!(decode_checkpoint(&bad), Err(Error::ShapeMismatch(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), loaded);
    let other = SystemSpec { horizon: 2.0, ..sys.clone() };
    assert!(matches!(load_checkpoint_for(&path, &other), Err(Error::SystemMismatch(_))));
    assert!(load_checkpoint_for(&path, &sys).is_ok());
}

#[test]
fn config_validation_and_schedule() {
    let mut c = TrainConfig { total_samples: 1000, ..TrainConfig::default() };
    assert!(c.validate().is_ok());
    assert_eq!(c.window(1.0, 0), 0.0);
    assert_eq!(c.window(1.0, 1000), 1.0);
    let mut last = 0.0;
    for used in (0..=1000).step_by(10) {
        let w = c.window(1.0, used);
        assert!(w >= last);
        last = w;
    }
    c.pretrain_fraction = 0.6;
    c.curriculum_fraction = 0.6;
    assert!(c.validate().is_err());
    let c = TrainConfig { total_samples: 0, ..TrainConfig::default() };
    assert!(c.validate().is_err());
    let c = TrainConfig { learning_rate: 1.0, decay_every: 100, lr_decay: 0.5, ..TrainConfig::default() };
    assert_eq!(c.learning_rate_at(250), 0.25);
}

#[test]
fn short_training_run_improves_and_repeats() {
    let sys = SystemSpec::air3d();
    let config = TrainConfig {
        variant: Variant::Bc,
        arch: small_arch(),
        total_samples: 20_000,
        batch_size: 200,
        learning_rate: 1e-3,
        validate_every: 50,
        validation_samples: 300,
        seed: 3,
        ..TrainConfig::default()
    };
    let (a, log_a) = train(&sys, &config, Validator::Residual).unwrap();
    let (b, log_b) = train(&sys, &config, Validator::Residual).unwrap();
    assert_eq!(a, b);
    assert!(log_a.final_validation().unwrap() < log_a.first_validation().unwrap());
    assert_eq!(log_a.to_csv(true), log_b.to_csv(true));
    assert!(log_a.to_csv(true).starts_with("step,samples,window,loss,validation,wall_seconds\n"));

    // resuming keeps the variant and rejects a mismatch
    let resumed = train_from(a.clone(), &TrainConfig { total_samples: 400, ..config.clone() }, Validator::Residual);
    assert!(resumed.is_ok());
    let wrong = TrainConfig { variant: Variant::Deepreach, ..config };
    assert!(train_from(a, &wrong, Validator::Residual).is_err());
}

#[test]
fn validation_requires_matching_system() {
    use crate::grid::{solve_brt, Grid, SolveOptions};
    let sys = SystemSpec::air3d();
    let grid = Grid::uniform(&sys, 11).unwrap();
    let (field, _) = solve_brt(&sys, &grid, &SolveOptions::default()).unwrap();
    let report = validate_against_oracle(&field, &field, 100, 1).unwrap();
    assert_eq!(report.mean_abs_error, 0.0);
    let arm = init_network(&SystemSpec::simple_arm(), Variant::Bc, &small_arch(), 0).unwrap();
    assert!(matches!(validate_against_oracle(&arm, &field, 10, 1), Err(Error::SystemMismatch(_))));
}

#[test]
fn value_only_path_agrees_with_full_evaluation() {
    let mut rng = seed::rng(21);
    for sys in [SystemSpec::air3d(), SystemSpec::simple_arm()] {
        for variant in [Variant::Deepreach, Variant::Bc, Variant::BcSym] {
            let net = init_network(&sys, variant, &Architecture::default(), 3).unwrap();
            for _ in 0..50 {
                let (t, x) = random_point(&sys, &mut rng);
                let full = net.evaluate(t, &x).unwrap().value;
                assert!((net.value(t, &x).unwrap() - full).abs() <= 1e-12 * (1.0 + full.abs()));
            }
            let x = sys.sample_joint(&mut rng);
            if variant != Variant::Deepreach {
                assert_eq!(net.value(sys.horizon, &x).unwrap(), sys.boundary_value(&x));
            }
            assert!(net.value(-0.1, &x).is_err());
        }
    }
}
