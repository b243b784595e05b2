//! Protocol orchestration: trial generation in the ideal and Fock modes,
//! sorting into subensembles, conditional states and the count-rate budget.
//!
//! Trial `i` draws all of its randomness from substream `i` of a ChaCha8
//! generator keyed by the master seed, so logs are identical for any number
//! of worker threads. Within a trial the draw order is fixed: Alice's basis,
//! Bob's basis, the duty-cycle test, the choice instant, then the
//! mode-specific outcome draws. Victor's choice bit comes from a separate QRNG
//! substream with the same index.

mod fock_model;
mod ideal;

pub use fock_model::{
    basis_rotation, calibrate_tau_from_count_ratio, calibrate_tau_to_correlation,
    mean_bsm_correlation, plausible_tau_range, spdc_pair_ratio, FockModel, FockModelSummary,
    PatternTable, TauRange, FOCK_BANK_LABELS, FULL_BUDGET_CORRELATION, SPDC_ONLY_CORRELATION,
};
pub use ideal::{
    conditional_state, joint_distribution, victor_projectors, JointDistribution, MeasurementOrder,
    PhotonPair,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bisa::{BisaOutcome, BisaSetting};
use crate::fock::FockError;
use crate::qrng::{BitSource, PhysicalQrng, PrngBitSource, QrngConfig, QrngError};
use crate::qstate::{PauliAxis, QStateError};
use crate::timeline::{event_times, trial_times, DelayBudget, EventTimes, TimelineError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("outcome {outcome} cannot follow choice {choice}")]
    InconsistentOutcome {
        choice: BisaSetting,
        outcome: BisaOutcome,
    },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    QState(#[from] QStateError),
    #[error(transparent)]
    Qrng(#[from] QrngError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ideal,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QrngSource {
    /// Toggle-detector model with per-trial substreams.
    Physical,
    /// Uniform ChaCha bits.
    Prng,
}

/// How the 79 % input loss enters the Fock pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossRoute {
    /// Uniform loss on `b`, `c` commutes with the analyzer and the Pauli
    /// noise, so it is folded into Victor's detector efficiency.
    Folded,
    /// Explicit loss channel on `b` and `c` before the analyzer.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorEfficiency {
    /// Photon 1 detectors (coupling included).
    pub alice: f64,
    /// Photon 4 detectors.
    pub bob: f64,
    /// The four analyzer output detectors.
    pub victor: f64,
}

impl Default for DetectorEfficiency {
    fn default() -> Self {
        Self {
            alice: 0.2,
            bob: 0.2,
            victor: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Squeezing parameter of each pair source.
    pub tau: f64,
    /// Highest pair number kept in each source expansion.
    pub order: usize,
    /// Per-mode photon cap.
    pub n_max: u8,
    /// Four-fold rate before the analyzer, Hz.
    pub base_fourfold_rate: f64,
}

/// Squeezing parameter at which the default Fock pipeline gives a mean
/// BSM/Φ⁻ correlation magnitude of 0.605.
pub const DEFAULT_TAU: f64 = 0.361;

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            order: 2,
            n_max: crate::fock::DEFAULT_N_MAX,
            base_fourfold_rate: 4.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Transmission of each analyzer input.
    pub input_transmission: f64,
    pub duty_cycle: f64,
    pub detector_efficiency: DetectorEfficiency,
    pub mzi_visibility: f64,
    /// Probability that the commanded analyzer setting is the one applied.
    pub switching_fidelity: f64,
    /// Depolarizing parameter for photons 2 and 3 in their fibers.
    pub fiber_polarization_fidelity: f64,
    /// Spectral overlap of photons 2 and 3.
    pub gvm_overlap: f64,
    pub loss_route: LossRoute,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            input_transmission: 0.21,
            duty_cycle: 0.6,
            detector_efficiency: DetectorEfficiency::default(),
            mzi_visibility: 0.95,
            switching_fidelity: 0.99,
            fiber_polarization_fidelity: 0.99,
            gvm_overlap: 0.964,
            loss_route: LossRoute::Folded,
        }
    }
}

impl NoiseConfig {
    /// Two-photon interference visibility at the analyzer.
    pub fn visibility(&self) -> f64 {
        self.mzi_visibility * self.gvm_overlap
    }

    /// Same losses, no other imperfections.
    pub fn without_imperfections(&self) -> Self {
        Self {
            mzi_visibility: 1.0,
            switching_fidelity: 1.0,
            fiber_polarization_fidelity: 1.0,
            gvm_overlap: 1.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub trials: u64,
    pub master_seed: u64,
    pub alice_bases: Vec<PauliAxis>,
    pub bob_bases: Vec<PauliAxis>,
    pub qrng_source: QrngSource,
    /// Gaussian timestamp noise on measurement events, ns.
    pub timestamp_jitter: f64,
    pub source: SourceConfig,
    pub noise: NoiseConfig,
    pub timeline: DelayBudget,
    pub qrng: QrngConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ideal,
            trials: 100_000,
            master_seed: 1,
            alice_bases: PauliAxis::ALL.to_vec(),
            bob_bases: PauliAxis::ALL.to_vec(),
            qrng_source: QrngSource::Physical,
            timestamp_jitter: 0.0,
            source: SourceConfig::default(),
            noise: NoiseConfig::default(),
            timeline: DelayBudget::default(),
            qrng: QrngConfig::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ExperimentError::InvalidConfig(format!(
            "{name} = {v} is outside [0, 1]"
        )))
    }
}

impl ExperimentConfig {
    /// Fock mode with the reference imperfection factors.
    pub fn reference_defaults() -> Self {
        Self {
            mode: Mode::Fock,
            ..Self::default()
        }
    }

    pub fn ideal(trials: u64, master_seed: u64) -> Self {
        Self {
            trials,
            master_seed,
            ..Self::default()
        }
    }

    /// Checks the physics parameters. A zero trial count is allowed here and
    /// yields an empty log.
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        unit("noise.input_transmission", n.input_transmission)?;
        unit("noise.duty_cycle", n.duty_cycle)?;
        unit("noise.detector_efficiency.alice", n.detector_efficiency.alice)?;
        unit("noise.detector_efficiency.bob", n.detector_efficiency.bob)?;
        unit("noise.detector_efficiency.victor", n.detector_efficiency.victor)?;
        unit("noise.mzi_visibility", n.mzi_visibility)?;
        unit("noise.switching_fidelity", n.switching_fidelity)?;
        unit("noise.fiber_polarization_fidelity", n.fiber_polarization_fidelity)?;
        unit("noise.gvm_overlap", n.gvm_overlap)?;
        if self.alice_bases.is_empty() || self.bob_bases.is_empty() {
            return Err(ExperimentError::InvalidConfig(
                "alice_bases and bob_bases must be non-empty".into(),
            ));
        }
        if !(self.source.tau >= 0.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "source.tau = {} must be non-negative",
                self.source.tau
            )));
        }
        if self.source.order > self.source.n_max as usize {
            return Err(ExperimentError::InvalidConfig(format!(
                "source.order = {} exceeds source.n_max = {}",
                self.source.order, self.source.n_max
            )));
        }
        if !(self.source.base_fourfold_rate >= 0.0) {
            return Err(ExperimentError::InvalidConfig(
                "source.base_fourfold_rate must be non-negative".into(),
            ));
        }
        if !(self.timestamp_jitter >= 0.0) {
            return Err(ExperimentError::InvalidConfig(
                "timestamp_jitter must be non-negative".into(),
            ));
        }
        self.timeline.validate()?;
        self.qrng.validate()?;
        Ok(())
    }

    /// [`validate`](Self::validate) plus `trials > 0`.
    pub fn validate_for_run(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(ExperimentError::InvalidConfig("trials must be positive".into()));
        }
        self.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub alice_basis: PauliAxis,
    /// ±1, absent when photon 1 was not detected by exactly one detector.
    pub alice_outcome: Option<i8>,
    pub bob_basis: PauliAxis,
    pub bob_outcome: Option<i8>,
    pub victor_choice: BisaSetting,
    pub victor_outcome: BisaOutcome,
    pub event_times: EventTimes,
    pub kept: bool,
}

/// Kept records grouped by Victor's outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubensembleSet {
    pub phi_plus: Vec<TrialRecord>,
    pub phi_minus: Vec<TrialRecord>,
    pub hh: Vec<TrialRecord>,
    pub vv: Vec<TrialRecord>,
    /// Records left out (not kept).
    pub excluded: usize,
}

impl SubensembleSet {
    pub fn get(&self, outcome: BisaOutcome) -> &[TrialRecord] {
        match outcome {
            BisaOutcome::PhiPlus23 => &self.phi_plus,
            BisaOutcome::PhiMinus23 => &self.phi_minus,
            BisaOutcome::HH23 => &self.hh,
            BisaOutcome::VV23 => &self.vv,
            BisaOutcome::Discard => &[],
        }
    }

    pub fn sizes(&self) -> [usize; 4] {
        [self.phi_plus.len(), self.phi_minus.len(), self.hh.len(), self.vv.len()]
    }

    /// Records from several subensembles, in trial order.
    pub fn pooled(&self, outcomes: &[BisaOutcome]) -> Vec<TrialRecord> {
        let mut v: Vec<TrialRecord> = outcomes.iter().flat_map(|&o| self.get(o).to_vec()).collect();
        v.sort_by_key(|r| r.trial_index);
        v
    }
}

pub fn sort_subensembles(records: &[TrialRecord]) -> SubensembleSet {
    let mut set = SubensembleSet::default();
    for r in records {
        if !r.kept {
            set.excluded += 1;
            continue;
        }
        match r.victor_outcome {
            BisaOutcome::PhiPlus23 => set.phi_plus.push(*r),
            BisaOutcome::PhiMinus23 => set.phi_minus.push(*r),
            BisaOutcome::HH23 => set.hh.push(*r),
            BisaOutcome::VV23 => set.vv.push(*r),
            BisaOutcome::Discard => set.excluded += 1,
        }
    }
    set
}

/// Substream generator for trial `index`.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

const QRNG_KEY: u64 = 0x51_52_4e_47_5f_6b_65_79;

/// Victor's commanded setting for trial `index`.
pub fn victor_choice(cfg: &ExperimentConfig, index: u64) -> Result<BisaSetting> {
    let seed = cfg.master_seed ^ QRNG_KEY;
    let bit = match cfg.qrng_source {
        QrngSource::Physical => {
            let q = QrngConfig { seed, ..cfg.qrng };
            PhysicalQrng::with_stream(q, index)?.next_bit().bit
        }
        QrngSource::Prng => PrngBitSource::new(seed, index, cfg.qrng.sample_period).next_bit().bit,
    };
    Ok(BisaSetting::from_bit(bit))
}

fn pick<R: Rng + ?Sized>(choices: &[PauliAxis], rng: &mut R) -> PauliAxis {
    choices[rng.random_range(0..choices.len())]
}

/// Generate the trial log. Fock mode builds its pattern tables first.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Ideal => run_with(cfg, None),
        Mode::Fock => {
            let model = FockModel::build(cfg)?;
            run_with(cfg, Some(&model))
        }
    }
}

/// Fock-mode run with a prebuilt model.
pub fn run_trials_with_model(cfg: &ExperimentConfig, model: &FockModel) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    run_with(cfg, Some(model))
}

fn run_with(cfg: &ExperimentConfig, model: Option<&FockModel>) -> Result<Vec<TrialRecord>> {
    let nominal = event_times(&cfg.timeline)?;
    let sampler = model.map(|m| m.sampler(cfg.noise.switching_fidelity));
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.master_seed, i);
            let alice_basis = pick(&cfg.alice_bases, &mut rng);
            let bob_basis = pick(&cfg.bob_bases, &mut rng);
            let dropped = rng.random::<f64>() >= cfg.noise.duty_cycle;
            let choice_fraction = rng.random::<f64>();
            let times = trial_times(&nominal, choice_fraction, cfg.timestamp_jitter, &mut rng);
            let choice = victor_choice(cfg, i)?;
            let (alice_outcome, bob_outcome, outcome) = match &sampler {
                None => ideal::sample_trial(alice_basis, bob_basis, choice, dropped, &mut rng)?,
                Some(s) => s.sample_trial(alice_basis, bob_basis, choice, dropped, &mut rng),
            };
            let kept = !dropped
                && alice_outcome.is_some()
                && bob_outcome.is_some()
                && outcome.is_kept();
            Ok(TrialRecord {
                trial_index: i,
                alice_basis,
                alice_outcome,
                bob_basis,
                bob_outcome,
                victor_choice: choice,
                victor_outcome: outcome,
                event_times: times,
                kept,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBudgetInput {
    pub transmission: f64,
    pub bell_success: f64,
    pub choice_split: f64,
    pub duty_cycle: f64,
    pub base_rate: f64,
}

impl RateBudgetInput {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            transmission: cfg.noise.input_transmission,
            bell_success: 0.25,
            choice_split: 0.5,
            duty_cycle: cfg.noise.duty_cycle,
            base_rate: cfg.source.base_fourfold_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub fraction: f64,
    /// Hz.
    pub fourfold_rate: f64,
}

pub fn rate_budget(input: &RateBudgetInput) -> Result<RateBudget> {
    for (name, v) in [
        ("transmission", input.transmission),
        ("bell_success", input.bell_success),
        ("choice_split", input.choice_split),
        ("duty_cycle", input.duty_cycle),
    ] {
        unit(name, v)?;
    }
    if !(input.base_rate >= 0.0) {
        return Err(ExperimentError::InvalidConfig("base_rate must be non-negative".into()));
    }
    let fraction =
        input.transmission.powi(2) * input.bell_success * input.choice_split * input.duty_cycle;
    Ok(RateBudget {
        fraction,
        fourfold_rate: input.base_rate * fraction,
    })
}

pub fn imperfection_product(factors: &[f64]) -> Result<f64> {
    for &f in factors {
        unit("imperfection factor", f)?;
    }
    Ok(factors.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u64, outcome: BisaOutcome, choice: BisaSetting) -> TrialRecord {
        TrialRecord {
            trial_index: i,
            alice_basis: PauliAxis::Z,
            alice_outcome: Some(1),
            bob_basis: PauliAxis::Z,
            bob_outcome: Some(1),
            victor_choice: choice,
            victor_outcome: outcome,
            event_times: event_times(&DelayBudget::default()).unwrap(),
            kept: outcome.is_kept(),
        }
    }

    #[test]
    fn sorting_examples() {
        let log = vec![
            record(0, BisaOutcome::PhiMinus23, BisaSetting::Bsm),
            record(1, BisaOutcome::HH23, BisaSetting::Ssm),
            record(2, BisaOutcome::Discard, BisaSetting::Bsm),
        ];
        let s = sort_subensembles(&log);
        assert_eq!(s.sizes(), [0, 1, 1, 0]);
        assert_eq!(s.excluded, 1);
        assert_eq!(sort_subensembles(&[]).sizes(), [0; 4]);
        let bsm: Vec<_> = (0..4)
            .map(|i| record(i, BisaOutcome::PhiPlus23, BisaSetting::Bsm))
            .collect();
        let s = sort_subensembles(&bsm);
        assert!(s.hh.is_empty() && s.vv.is_empty());
    }

    #[test]
    fn rate_budget_examples() {
        let b = rate_budget(&RateBudgetInput {
            transmission: 0.21,
            bell_success: 0.25,
            choice_split: 0.5,
            duty_cycle: 0.6,
            base_rate: 4.9,
        })
        .unwrap();
        assert!((b.fraction - 0.0033075).abs() < 1e-12);
        assert!((b.fourfold_rate - 0.016_206_75).abs() < 1e-12);
        let one = RateBudgetInput {
            transmission: 1.0,
            bell_success: 1.0,
            choice_split: 1.0,
            duty_cycle: 1.0,
            base_rate: 4.9,
        };
        assert_eq!(rate_budget(&one).unwrap().fraction, 1.0);
        let zero = RateBudgetInput {
            transmission: 0.0,
            ..one
        };
        assert_eq!(rate_budget(&zero).unwrap().fourfold_rate, 0.0);
    }

    #[test]
    fn imperfection_products() {
        let p = imperfection_product(&[0.674, 0.964, 0.94, 0.99]).unwrap();
        assert!((p - 0.605).abs() < 0.001);
        assert!((imperfection_product(&[0.95, 0.99]).unwrap() - 0.94).abs() < 0.001);
        assert_eq!(imperfection_product(&[]).unwrap(), 1.0);
        assert!(imperfection_product(&[1.2]).is_err());
    }

    #[test]
    fn zero_trials_give_empty_log() {
        let cfg = ExperimentConfig::ideal(0, 3);
        assert!(run_trials(&cfg).unwrap().is_empty());
        assert!(cfg.validate_for_run().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.noise.duty_cycle = 1.5;
        assert!(matches!(cfg.validate(), Err(ExperimentError::InvalidConfig(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.alice_bases.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.source.order = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ideal_kept_fractions() {
        let mut cfg = ExperimentConfig::ideal(20_000, 11);
        cfg.noise.duty_cycle = 1.0;
        let log = run_trials(&cfg).unwrap();
        for setting in [BisaSetting::Bsm, BisaSetting::Ssm] {
            let sub: Vec<_> = log.iter().filter(|r| r.victor_choice == setting).collect();
            let n = sub.len() as f64;
            let kept = sub.iter().filter(|r| r.kept).count() as f64 / n;
            let sigma = (0.25 / n).sqrt();
            assert!((kept - 0.5).abs() < 5.0 * sigma, "{setting}: {kept}");
        }
    }

    #[test]
    fn duty_cycle_drops_before_victor() {
        let mut cfg = ExperimentConfig::ideal(5_000, 2);
        cfg.noise.duty_cycle = 0.0;
        let log = run_trials(&cfg).unwrap();
        assert!(log.iter().all(|r| !r.kept && r.victor_outcome == BisaOutcome::Discard));
        assert!(log.iter().all(|r| r.alice_outcome.is_some()));
    }

    #[test]
    fn records_carry_consistent_times() {
        let log = run_trials(&ExperimentConfig::ideal(100, 5)).unwrap();
        for r in &log {
            let t = r.event_times;
            assert!(t.c_v_lower >= 49.0 && t.c_v_upper <= 348.0);
            assert!(t.m_v > t.c_v_upper);
        }
        assert_eq!(log.iter().map(|r| r.trial_index).collect::<Vec<_>>(), (0..100).collect::<Vec<_>>());
    }
}
