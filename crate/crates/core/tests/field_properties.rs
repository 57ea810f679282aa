use num_complex::Complex64;
use ops_core::baselines::strict_local_maxima;
use ops_core::stacking::{single_pulse_energy, stack_stage};
use ops_core::{
    apply_delay, make_pulse_train, optimal_delays, pulse_energy, reference_energies, stack_all,
    DelayVector, FieldGrid, PulseGroups, StackConfig,
};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn optimal_stacking_multiplies_energy_by_two_per_stage() {
    for n in 1..=6 {
        let cfg = StackConfig::new(n);
        let train = make_pulse_train(&cfg).unwrap();
        let out = stack_all(&train, &optimal_delays(&cfg), &cfg).unwrap();
        let gain = pulse_energy(&out) / single_pulse_energy(&cfg).unwrap();
        assert!(rel(gain, (1u64 << n) as f64) < 1e-5, "N={n}: gain {gain}");
    }
}

#[test]
fn optimal_delays_follow_powers_of_two() {
    assert_eq!(optimal_delays(&StackConfig::new(2)).0, vec![10.0, 20.0]);
    assert_eq!(optimal_delays(&StackConfig::new(1)).0, vec![10.0]);
    assert_eq!(optimal_delays(&StackConfig::new(5)).0, vec![10.0, 20.0, 40.0, 80.0, 160.0]);
}

#[test]
fn random_delays_never_beat_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in [1usize, 2] {
        let cfg = StackConfig::new(n);
        let p_max = reference_energies(&cfg).unwrap().p_max;
        let groups = PulseGroups::split_train(&make_pulse_train(&cfg).unwrap(), &cfg);
        let star = optimal_delays(&cfg);
        for i in 0..5_000 {
            // half near the optimum (fringe scale), half anywhere within two FWHM
            let width = if i % 2 == 0 { cfg.fringe_period() } else { 2.0 * cfg.pulse_fwhm };
            let taus = DelayVector(star.0.iter().map(|t| t + rng.random_range(-width..=width)).collect());
            let p = pulse_energy(&ops_core::stacking::stack_groups(&groups, &taus, &cfg).unwrap());
            assert!(p <= p_max * (1.0 + 1e-9), "N={n} taus={:?}: {p} > {p_max}", taus.0);
        }
    }
}

#[test]
fn energy_is_periodic_in_the_fringe() {
    let cfg = StackConfig::new(1);
    let train = make_pulse_train(&cfg).unwrap();
    let f = cfg.fringe_period();
    let p_max = reference_energies(&cfg).unwrap().p_max;
    // measured against the fringe height: near a dark fringe the shifted
    // envelope overlap alone moves the local value by ~1e-4 of itself
    for offset in [0.0, 0.1, 0.37, 0.5, 0.81] {
        let tau = cfg.period + offset * f;
        let a = pulse_energy(&stack_all(&train, &DelayVector(vec![tau]), &cfg).unwrap());
        let b = pulse_energy(&stack_all(&train, &DelayVector(vec![tau + f]), &cfg).unwrap());
        assert!((a - b).abs() < 1e-4 * p_max, "offset {offset}: {a} vs {b}");
    }
}

#[test]
fn single_stage_scan_shows_fringes() {
    let cfg = StackConfig::new(1);
    let train = make_pulse_train(&cfg).unwrap();
    let f = cfg.fringe_period();
    let step = f / 20.0;
    let energies: Vec<f64> = (0..=200)
        .map(|i| {
            let tau = cfg.period - 5.0 * f + i as f64 * step;
            pulse_energy(&stack_all(&train, &DelayVector(vec![tau]), &cfg).unwrap())
        })
        .collect();
    let maxima = strict_local_maxima(&energies);
    assert!(maxima.len() >= 3, "{} maxima", maxima.len());
    for pair in maxima.windows(2) {
        let spacing = (pair[1] - pair[0]) as f64 * step;
        assert!(rel(spacing, f) < 0.05, "spacing {spacing} vs fringe {f}");
    }
}

#[test]
fn half_fringe_delay_cancels_a_pulse() {
    let cfg = StackConfig::new(1);
    let pulse = ops_core::stacking::make_single_pulse(&cfg).unwrap();
    let mut sum = apply_delay(&pulse, cfg.fringe_period() / 2.0).unwrap();
    sum.add_scaled(&pulse, 1.0);
    assert!(pulse_energy(&sum) < 1e-4 * pulse_energy(&pulse));
}

#[test]
fn stacking_is_bit_deterministic() {
    let cfg = StackConfig::new(3);
    let train = make_pulse_train(&cfg).unwrap();
    let taus = DelayVector(vec![10.0003, 19.9991, 40.0102]);
    let a = stack_all(&train, &taus, &cfg).unwrap();
    let b = stack_all(&make_pulse_train(&cfg).unwrap(), &taus, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lossy_combiner_lowers_the_peak() {
    let lossless = reference_energies(&StackConfig::new(2)).unwrap();
    let lossy = reference_energies(&StackConfig::new(2).with_combiner_loss(0.5)).unwrap();
    assert!(lossy.p_max < lossless.p_max);
    assert_eq!(lossy.p_min, 0.0);
}

#[test]
fn stages_must_run_in_order() {
    let cfg = StackConfig::new(2);
    let groups = PulseGroups::split_train(&make_pulse_train(&cfg).unwrap(), &cfg);
    assert!(stack_stage(&groups, 20.0, 2, &cfg).is_err());
    assert!(stack_stage(&groups, 10.0, 0, &cfg).is_err());
}

fn random_field(seed: u64) -> FieldGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = FieldGrid::zeros(512, -12.8, 0.05, 1828.8, 40);
    // smooth random content: a few Gaussians confined to the centre
    for _ in 0..4 {
        let c = rng.random_range(-3.0..3.0);
        let w: f64 = rng.random_range(0.3..1.0);
        let a = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        for (i, s) in f.samples.iter_mut().enumerate() {
            let t = -12.8 + i as f64 * 0.05;
            *s += a * (-((t - c) / w).powi(2)).exp();
        }
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delays_compose(seed in any::<u64>(), a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let f = random_field(seed);
        let two = apply_delay(&apply_delay(&f, a).unwrap(), b).unwrap();
        let one = apply_delay(&f, a + b).unwrap();
        let norm = pulse_energy(&f).sqrt();
        let diff: f64 = two.samples.iter().zip(&one.samples).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * f.dt;
        prop_assert!(diff.sqrt() <= 1e-9 * norm);
    }

    #[test]
    fn zero_delay_is_identity(seed in any::<u64>()) {
        let f = random_field(seed);
        prop_assert_eq!(apply_delay(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn energy_scales_quadratically(seed in any::<u64>(), k in 0.1f64..10.0) {
        let f = random_field(seed);
        let mut g = f.clone();
        g.scale(k);
        prop_assert!(rel(pulse_energy(&g), k * k * pulse_energy(&f)) < 1e-12);
    }
}
