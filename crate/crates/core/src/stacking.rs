//! Pulse-train construction and recursive pairwise stacking.
//!
//! Stage `k` pairs consecutive pulse groups. The earlier group of each pair
//! is routed through the delay line (delayed by `τ_k`) and recombined with
//! the later group on a combiner with amplitude transmission
//! `√(1 − loss) / √2` per port. After stage `k` there are `2^(N−k)` groups;
//! after stage `N` one group remains, the output field.
//!
//! Routing is tracked per group rather than by time-gating a summed field,
//! so misaligned delays that make groups overlap in time are still split
//! the way the optical hardware splits them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::config::StackConfig;
use crate::field::{apply_delay, pulse_energy, FieldError, FieldGrid};

/// The N controllable delays τ₁…τ_N (ps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelayVector(pub Vec<f64>);

impl DelayVector {
    pub fn taus(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for DelayVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Gaussian envelope with unit peak amplitude whose intensity has the given
/// FWHM.
pub fn gaussian_envelope(t: f64, fwhm: f64) -> f64 {
    (-2.0 * LN_2 * t * t / (fwhm * fwhm)).exp()
}

/// Closed-form energy of [`gaussian_envelope`]: FWHM·√(π / (4 ln 2)).
pub fn gaussian_energy(fwhm: f64) -> f64 {
    fwhm * (std::f64::consts::PI / (4.0 * LN_2)).sqrt()
}

fn empty_grid(config: &StackConfig) -> FieldGrid {
    FieldGrid::zeros(
        config.grid_len,
        config.t0(),
        config.grid_dt,
        config.carrier_freq(),
        config.guard_len(),
    )
}

/// Adds a copy of the reference pulse delayed by `centre`. A physical delay
/// rotates the envelope by `e^{−iω₀·centre}` against the global carrier, so
/// every pulse of the train is the same optical waveform.
fn add_pulse(field: &mut FieldGrid, centre: f64, fwhm: f64) {
    // exp(−2 ln2 · 12²) underflows relative to the peak
    let reach = 12.0 * fwhm;
    let lo = ((centre - reach - field.t0) / field.dt).floor().max(0.0) as usize;
    let hi = (((centre + reach - field.t0) / field.dt).ceil().max(0.0) as usize).min(field.len());
    let carrier = Complex64::from_polar(1.0, -field.carrier_freq * centre);
    for i in lo..hi {
        let t = field.time(i) - centre;
        field.samples[i] += carrier * gaussian_envelope(t, fwhm);
    }
}

/// A single pulse centred at t = 0 on the configured grid.
pub fn make_single_pulse(config: &StackConfig) -> Result<FieldGrid, FieldError> {
    config.validate()?;
    let mut field = empty_grid(config);
    add_pulse(&mut field, 0.0, config.pulse_fwhm);
    Ok(field)
}

/// The `2^N`-pulse input train with pulses centred at `0, T, …, (2^N − 1)T`,
/// all with the same carrier-envelope phase.
pub fn make_pulse_train(config: &StackConfig) -> Result<FieldGrid, FieldError> {
    config.validate()?;
    let mut field = empty_grid(config);
    for p in 0..config.pulse_count() {
        add_pulse(&mut field, p as f64 * config.period, config.pulse_fwhm);
    }
    Ok(field)
}

/// Energy of one sampled input pulse.
pub fn single_pulse_energy(config: &StackConfig) -> Result<f64, FieldError> {
    make_single_pulse(config).map(|f| pulse_energy(&f))
}

/// Ordered pulse groups between stages, each on the full window.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseGroups {
    groups: Vec<FieldGrid>,
    stages_done: usize,
}

impl PulseGroups {
    /// Splits an input train into one group per pulse using period-wide
    /// gates centred on the nominal pulse positions. The gates partition
    /// the window, so the groups sum back to `train` exactly.
    pub fn split_train(train: &FieldGrid, config: &StackConfig) -> Self {
        let count = config.pulse_count();
        let mut groups = vec![FieldGrid::zeros_like(train); count];
        for (i, s) in train.samples.iter().enumerate() {
            let slot = (train.time(i) / config.period).round();
            let slot = slot.clamp(0.0, (count - 1) as f64) as usize;
            groups[slot].samples[i] = *s;
        }
        Self {
            groups,
            stages_done: 0,
        }
    }

    pub fn stages_done(&self) -> usize {
        self.stages_done
    }

    pub fn groups(&self) -> &[FieldGrid] {
        &self.groups
    }

    /// Coherent sum of all groups (the field a detector would see).
    pub fn combined(&self) -> FieldGrid {
        let mut out = self.groups[0].clone();
        for g in &self.groups[1..] {
            out.add_scaled(g, 1.0);
        }
        out
    }

    /// The output field once every stage has been applied.
    pub fn into_output(mut self) -> FieldGrid {
        if self.groups.len() == 1 {
            self.groups.pop().expect("one group")
        } else {
            self.combined()
        }
    }
}

fn combiner_transmission(config: &StackConfig) -> f64 {
    ((1.0 - config.combiner_loss) / 2.0).sqrt()
}

/// Applies stage `stage_k` (1-based) with delay `tau_k`.
pub fn stack_stage(
    groups: &PulseGroups,
    tau_k: f64,
    stage_k: usize,
    config: &StackConfig,
) -> Result<PulseGroups, FieldError> {
    if stage_k == 0 || stage_k > config.n_stages || stage_k != groups.stages_done + 1 {
        return Err(FieldError::StageOrder {
            stage: stage_k,
            done: groups.stages_done,
            n_stages: config.n_stages,
        });
    }
    let scale = combiner_transmission(config);
    let next = groups
        .groups
        .chunks_exact(2)
        .map(|pair| {
            let mut out = apply_delay(&pair[0], tau_k)?;
            out.add_scaled(&pair[1], 1.0);
            out.scale(scale);
            Ok(out)
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    Ok(PulseGroups {
        groups: next,
        stages_done: stage_k,
    })
}

/// Runs every stage on pre-split groups and returns the output field.
pub fn stack_groups(
    groups: &PulseGroups,
    taus: &DelayVector,
    config: &StackConfig,
) -> Result<FieldGrid, FieldError> {
    if taus.len() != config.n_stages {
        return Err(FieldError::DelayCount {
            expected: config.n_stages,
            got: taus.len(),
        });
    }
    let mut current = stack_stage(groups, taus.0[0], 1, config)?;
    for (k, &tau) in taus.0.iter().enumerate().skip(1) {
        current = stack_stage(&current, tau, k + 1, config)?;
    }
    Ok(current.into_output())
}

/// Stacks the input train through all N stages, returning `E_out`.
pub fn stack_all(
    train: &FieldGrid,
    taus: &DelayVector,
    config: &StackConfig,
) -> Result<FieldGrid, FieldError> {
    stack_groups(&PulseGroups::split_train(train, config), taus, config)
}

/// τ*_k = 2^(k−1)·T.
pub fn optimal_delays(config: &StackConfig) -> DelayVector {
    DelayVector(
        (0..config.n_stages)
            .map(|k| (1u64 << k) as f64 * config.period)
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnergies {
    pub p_max: f64,
    pub p_min: f64,
}

/// `P_max` is evaluated (not derived) at the optimal delays, so the
/// combiner normalisation and loss are included; `P_min` is the total
/// cancellation floor, zero.
pub fn reference_energies(config: &StackConfig) -> Result<ReferenceEnergies, FieldError> {
    let train = make_pulse_train(config)?;
    let out = stack_all(&train, &optimal_delays(config), config)?;
    Ok(ReferenceEnergies {
        p_max: pulse_energy(&out),
        p_min: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn peaks(field: &FieldGrid) -> Vec<f64> {
        let a: Vec<f64> = field.samples.iter().map(|s| s.norm()).collect();
        (1..a.len() - 1)
            .filter(|&i| a[i] > a[i - 1] && a[i] >= a[i + 1] && a[i] > 0.5)
            .map(|i| field.time(i))
            .collect()
    }

    #[test]
    fn one_stage_train_has_two_equal_pulses() {
        let cfg = StackConfig::new(1);
        let train = make_pulse_train(&cfg).unwrap();
        let p = peaks(&train);
        assert_eq!(p.len(), 2);
        assert!(p[0].abs() < 1e-9 && (p[1] - 10.0).abs() < 1e-9, "{p:?}");
        let groups = PulseGroups::split_train(&train, &cfg);
        let e0 = pulse_energy(&groups.groups()[0]);
        let e1 = pulse_energy(&groups.groups()[1]);
        assert!(rel(e0, e1) < 1e-9);
    }

    #[test]
    fn three_stage_train_has_eight_pulses() {
        let cfg = StackConfig::new(3);
        assert_eq!(peaks(&make_pulse_train(&cfg).unwrap()).len(), 8);
    }

    #[test]
    fn train_energy_is_additive() {
        let cfg = StackConfig::new(2);
        let e1 = single_pulse_energy(&cfg).unwrap();
        let train = make_pulse_train(&cfg).unwrap();
        assert!(rel(pulse_energy(&train), 4.0 * e1) < 1e-9);
    }

    #[test]
    fn single_pulse_matches_gaussian_integral() {
        let cfg = StackConfig::new(1);
        let e = single_pulse_energy(&cfg).unwrap();
        assert!(rel(e, gaussian_energy(cfg.pulse_fwhm)) < 1e-4);
    }

    #[test]
    fn split_groups_sum_to_train() {
        let cfg = StackConfig::new(3);
        let train = make_pulse_train(&cfg).unwrap();
        assert_eq!(PulseGroups::split_train(&train, &cfg).combined(), train);
    }

    #[test]
    fn stage_one_at_period_doubles_energy() {
        let cfg = StackConfig::new(1);
        let train = make_pulse_train(&cfg).unwrap();
        let e1 = single_pulse_energy(&cfg).unwrap();
        let g = PulseGroups::split_train(&train, &cfg);
        let out = stack_stage(&g, cfg.period, 1, &cfg).unwrap().into_output();
        assert!(rel(pulse_energy(&out), 2.0 * e1) < 1e-6);
    }

    #[test]
    fn stage_one_without_delay_halves_each_pulse() {
        let cfg = StackConfig::new(1);
        let train = make_pulse_train(&cfg).unwrap();
        let e1 = single_pulse_energy(&cfg).unwrap();
        let g = PulseGroups::split_train(&train, &cfg);
        let out = stack_stage(&g, 0.0, 1, &cfg).unwrap().into_output();
        assert!(rel(pulse_energy(&out), e1) < 1e-6);
    }

    #[test]
    fn stage_one_half_fringe_off_cancels() {
        let cfg = StackConfig::new(1);
        let train = make_pulse_train(&cfg).unwrap();
        let e1 = single_pulse_energy(&cfg).unwrap();
        let g = PulseGroups::split_train(&train, &cfg);
        let tau = cfg.period + cfg.fringe_period() / 2.0;
        let out = stack_stage(&g, tau, 1, &cfg).unwrap().into_output();
        // energy in the stacked slot [T/2, 3T/2)
        let slot: f64 = (0..out.len())
            .filter(|&i| (out.time(i) - cfg.period).abs() < cfg.period / 2.0)
            .map(|i| out.samples[i].norm_sqr())
            .sum::<f64>()
            * out.dt;
        assert!(slot < 1e-4 * e1, "slot energy {slot}");
    }

    #[test]
    fn stages_must_run_in_order() {
        let cfg = StackConfig::new(2);
        let train = make_pulse_train(&cfg).unwrap();
        let g = PulseGroups::split_train(&train, &cfg);
        assert!(matches!(
            stack_stage(&g, 1.0, 2, &cfg),
            Err(FieldError::StageOrder { .. })
        ));
        assert!(stack_stage(&g, 1.0, 0, &cfg).is_err());
        assert!(stack_stage(&g, 1.0, 3, &cfg).is_err());
    }

    #[test]
    fn two_stage_optimum_gives_four_times_energy() {
        let cfg = StackConfig::new(2);
        let train = make_pulse_train(&cfg).unwrap();
        let e1 = single_pulse_energy(&cfg).unwrap();
        let out = stack_all(&train, &DelayVector(vec![10.0, 20.0]), &cfg).unwrap();
        assert!(rel(pulse_energy(&out), 4.0 * e1) < 1e-6);
        // all four pulses land on 3T with peak amplitude 4/2 = 2
        let p = peaks(&out);
        assert_eq!(p.len(), 1);
        assert!((p[0] - 30.0).abs() < 1e-9);
        assert!((out.peak_amplitude() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn two_stage_without_delays_quarters_each_pulse() {
        let cfg = StackConfig::new(2);
        let train = make_pulse_train(&cfg).unwrap();
        let e1 = single_pulse_energy(&cfg).unwrap();
        let out = stack_all(&train, &DelayVector(vec![0.0, 0.0]), &cfg).unwrap();
        assert!(rel(pulse_energy(&out), e1) < 1e-6);
    }

    #[test]
    fn stack_all_one_stage_is_the_base_case() {
        let cfg = StackConfig::new(1);
        let train = make_pulse_train(&cfg).unwrap();
        let a = stack_all(&train, &DelayVector(vec![cfg.period]), &cfg).unwrap();
        let g = PulseGroups::split_train(&train, &cfg);
        let b = stack_stage(&g, cfg.period, 1, &cfg).unwrap().into_output();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_delay_count_is_rejected() {
        let cfg = StackConfig::new(2);
        let train = make_pulse_train(&cfg).unwrap();
        assert!(matches!(
            stack_all(&train, &DelayVector(vec![10.0]), &cfg),
            Err(FieldError::DelayCount { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn optimal_delays_are_powers_of_two_periods() {
        assert_eq!(optimal_delays(&StackConfig::new(1)).0, vec![10.0]);
        assert_eq!(optimal_delays(&StackConfig::new(2)).0, vec![10.0, 20.0]);
        assert_eq!(
            optimal_delays(&StackConfig::new(5)).0,
            vec![10.0, 20.0, 40.0, 80.0, 160.0]
        );
    }

    #[test]
    fn reference_energies_respect_loss() {
        let cfg = StackConfig::new(1);
        let r = reference_energies(&cfg).unwrap();
        assert!(rel(r.p_max, 2.0 * single_pulse_energy(&cfg).unwrap()) < 1e-6);
        assert_eq!(r.p_min, 0.0);

        let lossless = reference_energies(&StackConfig::new(2)).unwrap();
        let lossy = reference_energies(&StackConfig::new(2).with_combiner_loss(0.5)).unwrap();
        assert!(lossy.p_max < lossless.p_max);
        // two combiners each passing half the energy
        assert!(rel(lossy.p_max, lossless.p_max / 4.0) < 1e-9);
    }

    #[test]
    fn stacking_is_deterministic() {
        let cfg = StackConfig::new(3);
        let train = make_pulse_train(&cfg).unwrap();
        let taus = DelayVector(vec![10.3, 19.7, 40.01]);
        let a = stack_all(&train, &taus, &cfg).unwrap();
        let b = stack_all(&train, &taus, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
