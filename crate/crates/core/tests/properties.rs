use hjmp_core::neural::{init_network, Architecture};
use hjmp_core::planner::{evaluate_plan, plan_step, PlanProblem};
use hjmp_core::seed;
use hjmp_core::sim::{run_trial, sample_scenario, Method, Outcome, SimConfig};
use hjmp_core::value::BoundaryValue;
use hjmp_core::{PlanConfig, PlanStatus, SystemKind, SystemSpec, ValueFunction, Variant};
use proptest::prelude::*;
use rand::Rng;

fn small() -> Architecture {
    Architecture { hidden: vec![16, 16], omega0: 30.0 }
}

fn learned_system() -> impl Strategy<Value = SystemSpec> {
    prop_oneof![Just(SystemSpec::air3d()), Just(SystemSpec::simple_arm())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_boundary_variants_equal_l_at_horizon(sys in learned_system(), init in 0u64..1000, point in any::<u64>()) {
        let x = sys.sample_joint(&mut seed::rng(point));
        for variant in [Variant::Bc, Variant::BcSym] {
            let net = init_network(&sys, variant, &small(), init).unwrap();
            let v = net.value(sys.horizon, &x).unwrap();
            prop_assert!((v - sys.boundary_value(&x)).abs() <= 1e-12, "{variant:?}: {v}");
        }
    }

    #[test]
    fn symmetric_variant_is_invariant_under_the_map(sys in learned_system(), init in 0u64..1000, point in any::<u64>()) {
        let mut rng = seed::rng(point);
        let x = sys.sample_joint(&mut rng);
        let t = rng.random_range(0.0..sys.horizon);
        let net = init_network(&sys, Variant::BcSym, &small(), init).unwrap();
        let a = net.value(t, &x).unwrap();
        let b = net.value(t, &sys.symmetry_map(&x)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn particle_plans_stay_in_box_and_report_true_margins(m in 2usize..6, scenario in any::<u64>(), start in any::<u64>()) {
        let sc = sample_scenario(SystemKind::Particle, m, scenario).unwrap();
        let value = BoundaryValue::new(sc.system.clone());
        let config = PlanConfig { enforce_timeout: false, ..PlanConfig::default() };
        let problem = PlanProblem {
            value: &value,
            agent: 0,
            own: sc.starts[0].clone(),
            others: (1..m).map(|j| (j, sc.starts[j].clone())).collect(),
            goal: sc.goals[0].clone(),
            config: &config,
            seed: start,
        };
        let plan = plan_step(&problem).unwrap();
        let bound = sc.system.control_bound();
        prop_assert!(plan.control.iter().all(|u| u.abs() <= bound));
        if plan.status != PlanStatus::FailSafe {
            prop_assert!(plan.margins.iter().all(|(_, g)| *g > config.epsilon));
            let again = evaluate_plan(&problem, &plan.control).unwrap();
            for ((i, a), (j, b)) in plan.margins.iter().zip(&again.margins) {
                prop_assert_eq!(i, j);
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn collision_outcome_follows_the_boundary_record(m in 2usize..5, scenario in any::<u64>()) {
        let sc = sample_scenario(SystemKind::Particle, m, scenario).unwrap();
        let sim = SimConfig { time_limit: 2.0, ..SimConfig::default() };
        let r = run_trial(&sc, &Method::Naive { gain: 10.0 }, &sim).unwrap();
        prop_assert_eq!(r.outcome == Outcome::Collision, r.min_boundary < 0.0);
        prop_assert!(r.outcome != Outcome::Fault);
        if r.outcome == Outcome::Success {
            prop_assert!(r.path_lengths.iter().zip(&r.straight_line).all(|(p, s)| p + sim.goal_tolerance >= *s));
        }
    }
}
