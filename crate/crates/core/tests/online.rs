use std::sync::Arc;

use bcts::agents::{
    learn_constraints, run_online, Agent, BlendConfig, ConstrainedPolicy, TeachingMethod,
};
use bcts::config::{ExperimentConfig, SamplerConfig};
use bcts::env::{EnvItem, EnvironmentSpec, Scenario};
use bcts::experiments::{
    learn_policies, prepare_environment, run_experiment_on, theorem1_bound, BoundInputs, PolicyMap,
    RunMethod, RunOptions,
};
use bcts::model::{ContextVector, SamplerParams};
use bcts::rng::{substream, AgentStreams, Purpose};
use rand::Rng;

fn synthetic_env<F>(n: usize, d: usize, num_arms: usize, seed: u64, rule: F) -> EnvironmentSpec
where
    F: Fn(&[f64], usize) -> (f64, bool),
{
    let mut rng = substream(seed, Purpose::Data);
    let items = (0..n)
        .map(|_| {
            let mut c: Vec<f64> = vec![1.0];
            c.extend((1..d).map(|_| rng.random_range(0.0..1.0)));
            let (rewards, allowed) = (0..num_arms).map(|k| rule(&c, k)).unzip();
            EnvItem {
                context: ContextVector::new(c).unwrap(),
                rewards,
                allowed,
            }
        })
        .collect();
    EnvironmentSpec::new(Scenario::Synthetic, num_arms, items, (0..n).collect()).unwrap()
}

#[test]
fn always_allowed_arm_scores_above_half() {
    let env = synthetic_env(400, 3, 1, 1, |_, _| (0.5, true));
    let teacher = env.with_order((0..200).collect()).unwrap();
    let sampler = SamplerParams::with_defaults(3).unwrap();
    let policy = learn_constraints(
        &teacher,
        200,
        TeachingMethod::Random,
        &sampler,
        &mut substream(2, Purpose::Teaching),
    )
    .unwrap();
    let above = (200..400)
        .filter(|&i| {
            policy.posteriors()[0]
                .mean_score(&env.items()[i].context)
                .unwrap()
                > 0.5
        })
        .count();
    assert!(above as f64 >= 0.95 * 200.0, "{above} of 200");
}

#[test]
fn separable_rule_is_learned_by_random_teaching() {
    // arm 0 is allowed on the left half of the second feature, arm 1 on the right
    let env = synthetic_env(2000, 2, 2, 3, |c, k| (0.5, (c[1] < 0.5) == (k == 0)));
    let teacher = env.with_order((0..1000).collect()).unwrap();
    let sampler = SamplerParams::with_defaults(2).unwrap();
    let policy = learn_constraints(
        &teacher,
        5000,
        TeachingMethod::Random,
        &sampler,
        &mut substream(4, Purpose::Teaching),
    )
    .unwrap();
    let agree = (1000..2000)
        .filter(|&i| {
            let item = &env.items()[i];
            item.allowed[policy.greedy_arm(&item.context).unwrap()]
        })
        .count();
    assert!(agree >= 900, "{agree} of 1000");
}

fn linear_env(seed: u64) -> EnvironmentSpec {
    let weights = [[0.1, 0.6, 0.1], [0.3, 0.2, 0.3], [0.5, 0.0, 0.2]];
    synthetic_env(600, 3, 3, seed, move |c, k| {
        let r: f64 = weights[k].iter().zip(c).map(|(w, x)| w * x).sum();
        (r.clamp(0.0, 1.0), k != 2 || c[1] < 0.5)
    })
}

fn trained_policy(env: &EnvironmentSpec, seed: u64) -> ConstrainedPolicy {
    let teacher = env.with_order((0..300).collect()).unwrap();
    let sampler = SamplerParams::with_defaults(env.dim()).unwrap();
    learn_constraints(
        &teacher,
        1000,
        TeachingMethod::Cts,
        &sampler,
        &mut substream(seed, Purpose::Teaching),
    )
    .unwrap()
}

#[test]
fn online_phase_leaves_the_constrained_policy_untouched() {
    let env = linear_env(5);
    let policy = Arc::new(trained_policy(&env, 6));
    let snapshot = (*policy).clone();
    let sampler = SamplerParams::new(0.05, 0.5, 0.1, 3).unwrap();
    let mut agent =
        Agent::bcts(Arc::clone(&policy), BlendConfig::new(0.5).unwrap(), sampler).unwrap();
    let online = env.with_order((300..600).collect()).unwrap();
    run_online(&online, &mut agent, 300, &mut AgentStreams::from_seed(7)).unwrap();
    assert_eq!(agent.constrained().unwrap(), &snapshot);
    assert_eq!(*policy, snapshot);
}

#[test]
fn sigma_zero_choices_ignore_rewards() {
    let env = linear_env(8);
    let policy = Arc::new(trained_policy(&env, 9));
    let sampler = SamplerParams::new(0.05, 0.5, 0.1, 3).unwrap();
    // same contexts and constraints, scrambled rewards
    let mut rng = substream(10, Purpose::Data);
    let scrambled_items: Vec<EnvItem> = env
        .items()
        .iter()
        .map(|item| EnvItem {
            rewards: item
                .rewards
                .iter()
                .map(|_| rng.random_range(0.0..=1.0))
                .collect(),
            ..item.clone()
        })
        .collect();
    let order: Vec<usize> = (300..600).collect();
    let scrambled =
        EnvironmentSpec::new(Scenario::Synthetic, 3, scrambled_items, order.clone()).unwrap();
    let online = env.with_order(order).unwrap();

    let arms = |env: &EnvironmentSpec| {
        let mut agent =
            Agent::bcts(Arc::clone(&policy), BlendConfig::new(0.0).unwrap(), sampler).unwrap();
        let log = run_online(env, &mut agent, 300, &mut AgentStreams::from_seed(11)).unwrap();
        log.records().iter().map(|r| r.arm).collect::<Vec<_>>()
    };
    assert_eq!(arms(&online), arms(&scrambled));
}

#[test]
fn sigma_one_reproduces_cts() {
    let env = linear_env(12);
    let policy = Arc::new(trained_policy(&env, 13));
    let sampler = SamplerParams::with_defaults(3).unwrap();
    let online = env.with_order((300..600).collect()).unwrap();
    let mut bcts = Agent::bcts(policy, BlendConfig::new(1.0).unwrap(), sampler).unwrap();
    let mut cts = Agent::cts(3, sampler).unwrap();
    let a = run_online(&online, &mut bcts, 300, &mut AgentStreams::from_seed(14)).unwrap();
    let b = run_online(&online, &mut cts, 300, &mut AgentStreams::from_seed(14)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cts_regret_stays_under_the_sigma_one_bound() {
    let d = 3;
    let (z, gamma) = (0.5, 0.1);
    let sampler = SamplerParams::new(0.05, z, gamma, d).unwrap();
    let runs = 40;
    let horizon = 400;
    let mut within = 0;
    for seed in 0..runs {
        let env = linear_env(100 + seed);
        let c_max = env
            .items()
            .iter()
            .map(|i| i.context.norm())
            .fold(0.0, f64::max);
        let mut agent = Agent::cts(3, sampler).unwrap();
        let stream = env
            .with_order((0..horizon).map(|t| t % 600).collect())
            .unwrap();
        let log = run_online(
            &stream,
            &mut agent,
            horizon,
            &mut AgentStreams::from_seed(seed),
        )
        .unwrap();
        let mut cumulative = 0.0;
        // the bound's ln(T) factor makes it 0 at T = 1, so the check starts at t = 2
        let ok = log.records().iter().enumerate().all(|(i, r)| {
            cumulative += r.gap();
            let t = i as u64 + 1;
            t < 2 || {
                let b = BoundInputs {
                    d,
                    z,
                    gamma,
                    sigma_online: 1.0,
                    sigma_star: 1.0,
                    horizon: t,
                    teaching_budget: 1,
                    c_max,
                    mu_star_max: 1.0,
                    mu_e_extreme: 1.0,
                };
                cumulative <= theorem1_bound(&b).unwrap()
            }
        });
        within += usize::from(ok);
    }
    assert!(within as f64 >= 0.95 * runs as f64, "{within} of {runs}");
}

fn small_movie_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Scenario::Movie, 300);
    cfg.sampler = SamplerConfig {
        r: 0.01,
        ..SamplerConfig::default()
    };
    cfg.movie.synthetic.num_users = 12;
    cfg.movie.synthetic.num_movies = 250;
    cfg.teaching_budgets = vec![200, 800];
    cfg.sigmas = vec![0.0, 0.5, 1.0];
    cfg.n_folds = 2;
    cfg.train_size = 80;
    cfg.seeds = vec![3, 4];
    cfg
}

#[test]
fn context_sequence_is_pinned_across_agents() {
    let cfg = small_movie_config();
    let env = prepare_environment(&cfg).unwrap();
    let out = run_experiment_on(
        &cfg,
        &env,
        &RunOptions {
            master_seed: 9,
            threads: 1,
            keep_trajectories: true,
            policies: None,
        },
    )
    .unwrap();
    for fold in 0..2 {
        for seed in [3, 4] {
            let streams: Vec<Vec<usize>> = out
                .trajectories
                .iter()
                .filter(|(k, _)| k.fold == fold && k.seed == seed)
                .map(|(_, log)| log.items().collect())
                .collect();
            // 2 baselines + 2 methods × 2 budgets × 3 sigmas
            assert_eq!(streams.len(), 14);
            assert!(streams.iter().all(|s| s == &streams[0]));
        }
    }
    for (key, log) in &out.trajectories {
        if key.method == RunMethod::Mask {
            assert!(log.error_curve().iter().all(|&e| e == 0));
        }
    }
}

#[test]
fn stored_policies_and_thread_count_do_not_change_results() {
    let cfg = small_movie_config();
    let env = prepare_environment(&cfg).unwrap();
    let base = RunOptions {
        master_seed: 21,
        threads: 1,
        keep_trajectories: true,
        policies: None,
    };
    let reference = run_experiment_on(&cfg, &env, &base).unwrap();

    let parallel = run_experiment_on(
        &cfg,
        &env,
        &RunOptions {
            threads: 3,
            ..base.clone()
        },
    )
    .unwrap();
    assert_eq!(parallel.table, reference.table);

    let learned: PolicyMap = learn_policies(&cfg, &env, 21, 2)
        .unwrap()
        .into_iter()
        .map(|(k, p)| (k, Arc::new(p)))
        .collect();
    let reused = run_experiment_on(
        &cfg,
        &env,
        &RunOptions {
            policies: Some(&learned),
            ..base
        },
    )
    .unwrap();
    assert_eq!(reused.table, reference.table);
    for ((ka, la), (kb, lb)) in reused.trajectories.iter().zip(&reference.trajectories) {
        assert_eq!(ka, kb);
        assert_eq!(la, lb);
    }
}
