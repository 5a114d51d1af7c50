mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gala_core::learners::a2c::{a2c_gradient, collect_rollout, compute_targets, A2cConfig, A2cLearner, EnvCopy};
use gala_core::learners::env::EnvSpec;
use gala_core::learners::eval::{evaluate_policy, value_iteration, VALUE_ITERATION_TOL};
use gala_core::learners::model::{ModelSpec, PolicyValueModel};
use gala_core::learners::Learner;

use common::{fd_gradient, relative_error};

#[test]
fn optimal_chain_policy_matches_value_iteration() {
    let env = EnvSpec::Chain { length: 5 };
    let gamma = 0.99;
    let model = PolicyValueModel::new(ModelSpec::Tabular, 5, 2).unwrap();
    let mut x = vec![0.0; model.dim()];
    for s in 0..5 {
        x[s * 2 + 1] = 5.0;
    }
    let r = evaluate_policy(&model, &x, &env, 3, gamma, env.default_episode_cap()).unwrap();
    let v = value_iteration(&env, gamma, VALUE_ITERATION_TOL).unwrap();
    // Four moves right, reward on the last one.
    assert!((v[0] - gamma.powi(3)).abs() < 1e-9);
    assert!((r.mean - v[0]).abs() < 1e-9);
    assert_eq!(r.stderr, 0.0);
}

#[test]
fn gridworld_optimum_is_shortest_path() {
    let env = EnvSpec::Gridworld {
        width: 5,
        height: 5,
        step_penalty: 0.0,
    };
    let v = value_iteration(&env, 0.99, VALUE_ITERATION_TOL).unwrap();
    assert!((v[0] - 0.99f64.powi(7)).abs() < 1e-9);
}

#[test]
fn untrained_policy_is_recorded_and_repeatable() {
    let env = EnvSpec::Gridworld {
        width: 4,
        height: 4,
        step_penalty: 0.0,
    };
    let model = PolicyValueModel::new(ModelSpec::Mlp { hidden: 8 }, 16, 4).unwrap();
    let x = model.init(3);
    let a = evaluate_policy(&model, &x, &env, 4, 0.99, 160).unwrap();
    let b = evaluate_policy(&model, &x, &env, 4, 0.99, 160).unwrap();
    assert_eq!(a, b);
    assert!(a.mean >= 0.0 && a.mean <= 1.0);
}

#[test]
fn random_policy_episodes_end_within_cap() {
    let env = EnvSpec::Chain { length: 5 };
    let model = PolicyValueModel::new(ModelSpec::Tabular, 5, 2).unwrap();
    let x = vec![0.0; model.dim()];
    let cap = env.default_episode_cap();
    let mut envs: Vec<EnvCopy> = (0..4).map(|w| EnvCopy::new(env, cap, 9, w)).collect();
    let mut finished = 0;
    for _ in 0..200 {
        let r = collect_rollout(&model, &x, &mut envs, 5);
        for e in &r.episodes {
            assert!(e.len <= cap);
            finished += 1;
        }
    }
    assert!(finished > 0);
}

#[test]
fn copies_with_equal_streams_repeat() {
    let env = EnvSpec::Chain { length: 6 };
    let model = PolicyValueModel::new(ModelSpec::Tabular, 6, 2).unwrap();
    let x = model.init(1);
    let mut a = vec![EnvCopy::new(env, 60, 4, 2)];
    let mut b = vec![EnvCopy::new(env, 60, 4, 2)];
    assert_eq!(collect_rollout(&model, &x, &mut a, 20), collect_rollout(&model, &x, &mut b, 20));
}

#[test]
fn linear_model_gradient_matches_finite_differences() {
    let env = EnvSpec::Gridworld {
        width: 3,
        height: 3,
        step_penalty: 0.05,
    };
    let model = PolicyValueModel::new(ModelSpec::Linear, 9, 4).unwrap();
    let cfg = A2cConfig {
        model: ModelSpec::Linear,
        ..A2cConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for point in 0..10 {
        let x: Vec<f64> = (0..model.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut envs: Vec<EnvCopy> = (0..4).map(|w| EnvCopy::new(env, 90, point, w)).collect();
        let r = collect_rollout(&model, &x, &mut envs, 5);
        let t = compute_targets(&model, &x, &r, &cfg);
        let (g, _) = a2c_gradient(&model, &x, &r, &t, &cfg).unwrap();
        let fd = fd_gradient(&model, &x, &r, &t, &cfg, 1e-5);
        assert!(relative_error(&g, &fd) < 1e-6);
    }
}

#[test]
fn learner_direction_is_clipped() {
    let env = EnvSpec::Chain { length: 5 };
    let model = PolicyValueModel::new(ModelSpec::Tabular, 5, 2).unwrap();
    let cfg = A2cConfig {
        clip_norm: 1e-3,
        ..A2cConfig::default()
    };
    let mut l = A2cLearner::new(model.clone(), cfg, env, 0, 0).unwrap();
    let x = model.init(0);
    let g = l.gradient(&x).unwrap();
    assert_eq!(g.stats.env_steps, 20);
    let d = l.direction(&g.grad);
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 1e-3 + 1e-15);
}
