use ops_core::baselines::{strict_local_maxima, DEFAULT_ORACLE_BUDGET};
use ops_core::noise::keyed_rng;
use ops_core::{
    grid_oracle, optimal_delays, random_agent, run_episode, spgd_optimize, spgd_step, DelayVector,
    EnvConfig, Mode, Objective, OpsEnv, SpgdConfig, SpgdController, Split, StackConfig,
};
use rand::Rng;

#[test]
fn spgd_converges_on_one_stage_from_an_easy_start() {
    let cfg = StackConfig::new(1);
    let obj = Objective::new(&cfg).unwrap();
    let f = cfg.fringe_period();
    let spgd = SpgdConfig::for_stack(&cfg);
    let mut converged = 0;
    for seed in 0..10u64 {
        let mut rng = keyed_rng(&[seed, 1], 0);
        let start = DelayVector(vec![cfg.period + rng.random_range(-f / 4.0..=f / 4.0)]);
        let path = spgd_optimize(|t| obj.normalized(t), start, &spgd, &mut rng).unwrap();
        let err = (path.last().unwrap().0[0] - cfg.period).abs();
        if err < f / 40.0 {
            converged += 1;
        }
    }
    assert!(converged >= 9, "{converged}/10 seeds converged");
}

#[test]
fn spgd_error_shrinks_on_average() {
    let cfg = StackConfig::new(1);
    let obj = Objective::new(&cfg).unwrap();
    let f = cfg.fringe_period();
    let spgd = SpgdConfig::for_stack(&cfg);
    for offset in [-0.24, -0.1, 0.05, 0.2] {
        let start = DelayVector(vec![cfg.period + offset * f]);
        let mut rng = keyed_rng(&[7], 0);
        let trials = 200;
        let mean_err: f64 = (0..trials)
            .map(|_| {
                let next = spgd_step(|t| obj.normalized(t), &start, &spgd, &mut rng).unwrap();
                (next.0[0] - cfg.period).abs()
            })
            .sum::<f64>()
            / trials as f64;
        assert!(mean_err < (offset * f).abs(), "offset {offset}: {mean_err}");
    }
}

#[test]
fn mean_spgd_update_follows_the_gradient() {
    let cfg = StackConfig::new(1);
    let obj = Objective::new(&cfg).unwrap();
    let f = cfg.fringe_period();
    let h = f / 100.0;
    let spgd = SpgdConfig::for_stack(&cfg);
    let mut rng = keyed_rng(&[3], 0);
    for offset in [-0.4, -0.2, -0.05, 0.05, 0.15, 0.3, 0.45] {
        let tau = cfg.period + offset * f;
        let grad = (obj.normalized(&DelayVector(vec![tau + h])).unwrap()
            - obj.normalized(&DelayVector(vec![tau - h])).unwrap())
            / (2.0 * h);
        let floor = 1e-9 / h;
        if grad.abs() <= floor {
            continue;
        }
        let start = DelayVector(vec![tau]);
        let mean_update: f64 = (0..10_000)
            .map(|_| spgd_step(|t| obj.normalized(t), &start, &spgd, &mut rng).unwrap().0[0] - tau)
            .sum::<f64>()
            / 10_000.0;
        assert_eq!(mean_update.signum(), grad.signum(), "offset {offset}");
    }
}

#[test]
fn spgd_controller_climbs_in_the_environment() {
    let cfg = EnvConfig::preset(Mode::Easy, 2).with_seed(5);
    let mut env = OpsEnv::new(cfg.clone(), Split::Test, 0).unwrap();
    let mut log = Vec::new();
    let mut worse = 0;
    for episode in 0..5 {
        let mut c = SpgdController::new(SpgdConfig::for_stack(&cfg.stack), cfg.action_scale, episode);
        let o = run_episode(&mut env, &mut c, episode, &mut log).unwrap();
        assert!(o.final_return >= 0.9, "episode {episode}: {}", o.final_return);
        if o.final_return < o.initial_return {
            worse += 1;
        }
    }
    assert!(worse <= 1);
    assert_eq!(log.len(), 5 * cfg.max_steps);
}

#[test]
fn oracle_finds_the_single_stage_optimum() {
    let cfg = StackConfig::new(1);
    let step = cfg.fringe_period() / 20.0;
    let scan = grid_oracle(
        &cfg,
        &DelayVector(vec![0.9 * cfg.period]),
        &DelayVector(vec![1.1 * cfg.period]),
        step,
        DEFAULT_ORACLE_BUDGET,
    )
    .unwrap();
    let p_max = Objective::new(&cfg).unwrap().p_max();
    let offset = scan.argmax.0[0] - cfg.period;
    assert!(offset.abs() <= step);
    // this grid misses T by a fraction of a step; the best point sits on
    // the central fringe at exactly that phase error
    let fringe = (cfg.carrier_freq() * offset / 2.0).cos().powi(2);
    assert!((scan.max_energy - fringe * p_max).abs() <= 1e-5 * p_max);
    assert!(p_max - scan.max_energy <= (std::f64::consts::PI / 40.0).sin().powi(2) * p_max);
    assert_eq!(scan.points(), (0.2 * cfg.period / step).floor() as usize + 1);
}

#[test]
fn oracle_finds_the_two_stage_optimum() {
    let cfg = StackConfig::new(2);
    let f = cfg.fringe_period();
    let step = f / 20.0;
    let star = optimal_delays(&cfg);
    let lo = DelayVector(star.0.iter().map(|t| t - 1.5 * f).collect());
    let hi = DelayVector(star.0.iter().map(|t| t + 1.5 * f).collect());
    let scan = grid_oracle(&cfg, &lo, &hi, step, DEFAULT_ORACLE_BUDGET).unwrap();
    for (a, s) in scan.argmax.0.iter().zip(&star.0) {
        assert!((a - s).abs() <= step, "{:?}", scan.argmax.0);
    }
}

#[test]
fn oracle_window_without_the_optimum_stays_below_it() {
    let cfg = StackConfig::new(1);
    let f = cfg.fringe_period();
    let scan = grid_oracle(
        &cfg,
        &DelayVector(vec![cfg.period + 0.3 * f]),
        &DelayVector(vec![cfg.period + 0.7 * f]),
        f / 50.0,
        DEFAULT_ORACLE_BUDGET,
    )
    .unwrap();
    assert!(scan.max_energy < Objective::new(&cfg).unwrap().p_max());
}

#[test]
fn oracle_sees_several_maxima_over_the_medium_window() {
    let cfg = StackConfig::new(1);
    let w = 2.0 * cfg.pulse_fwhm;
    let scan = grid_oracle(
        &cfg,
        &DelayVector(vec![cfg.period - w]),
        &DelayVector(vec![cfg.period + w]),
        cfg.fringe_period() / 20.0,
        DEFAULT_ORACLE_BUDGET,
    )
    .unwrap();
    assert!(strict_local_maxima(&scan.energies).len() >= 2);
}

#[test]
fn random_agent_survives_many_episodes_in_every_mode() {
    for mode in Mode::ALL {
        let mut env = OpsEnv::new(EnvConfig::preset(mode, 1).with_seed(8), Split::Train, 0).unwrap();
        let log = random_agent(&mut env, 1000, 8).unwrap();
        assert!(log.iter().all(|r| (-1.0..=0.0).contains(&r.reward)));
        assert_eq!(log.iter().filter(|r| r.done).count(), 1000);
    }
}

#[test]
fn random_agent_does_worse_than_spgd() {
    let medium = EnvConfig::preset(Mode::Medium, 2).with_seed(1);
    let mut env = OpsEnv::new(medium, Split::Test, 0).unwrap();
    let log = random_agent(&mut env, 100, 1).unwrap();
    let random_mean = log.iter().map(|r| r.normalized_return).sum::<f64>() / log.len() as f64;

    let easy = EnvConfig::preset(Mode::Easy, 2).with_seed(1);
    let mut env = OpsEnv::new(easy.clone(), Split::Test, 0).unwrap();
    let mut c = SpgdController::new(SpgdConfig::for_stack(&easy.stack), easy.action_scale, 1);
    let spgd_final = run_episode(&mut env, &mut c, 0, &mut Vec::new()).unwrap().final_return;
    assert!(random_mean < spgd_final, "random {random_mean} spgd {spgd_final}");
}
