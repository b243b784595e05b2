//! Noise-budget model: exact click-pattern tables for the full optical
//! setup, sampled per trial.
//!
//! For every (Alice basis, Bob basis, applied setting) the model computes the
//! probability of each of the 256 click patterns over
//! `aH, aV, dH, dV, b''H, b''V, c''H, c''V`. Only four-fold candidates are
//! kept: at least one click at Alice, at least one at Bob, and at least two
//! at Victor. Trials are drawn from these candidate-conditioned tables.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentError, LossRoute, Result};
use crate::bisa::{bisa_apply_ensemble, classify_mask, BisaOutcome, BisaSetting, OUT_B, OUT_C};
use crate::fock::{
    attenuate_spatial, depolarize, pattern_distribution, spdc_series, spdc_source_on, wave_plate,
    DetectorBank, Ensemble, Polarization, WavePlate,
};
use crate::qstate::PauliAxis;

pub const FOCK_BANK_LABELS: [&str; 8] = ["aH", "aV", "dH", "dV", "b''H", "b''V", "c''H", "c''V"];

/// Mean BSM/Φ⁻ correlation magnitude attributed to multi-pair emission alone.
pub const SPDC_ONLY_CORRELATION: f64 = 0.674;
/// Mean BSM/Φ⁻ correlation magnitude with every imperfection included.
pub const FULL_BUDGET_CORRELATION: f64 = 0.605;

fn bank() -> DetectorBank {
    let mut d = Vec::new();
    for s in ["a", "d", OUT_B, OUT_C] {
        for p in Polarization::BOTH {
            d.push((s.to_string(), p));
        }
    }
    DetectorBank::new(d)
}

/// Polarization rotation taking the +1 eigenstate of `axis` to H and the −1
/// eigenstate to V, so the H detector reports +1.
pub fn basis_rotation(axis: PauliAxis) -> WavePlate {
    let plus = axis.eigenstate(true);
    let minus = axis.eigenstate(false);
    let (p, m) = (plus.amplitudes(), minus.amplitudes());
    WavePlate::Jones([[p[0].conj(), p[1].conj()], [m[0].conj(), m[1].conj()]])
}

fn side_outcome(bits: usize) -> Option<i8> {
    match bits & 3 {
        1 => Some(1),
        2 => Some(-1),
        _ => None,
    }
}

fn is_candidate(mask: usize) -> bool {
    mask & 3 != 0 && (mask >> 2) & 3 != 0 && (mask >> 4).count_ones() >= 2
}

/// Decoded pattern: Alice, Bob, Victor's class under the commanded setting.
pub fn decode(mask: usize, commanded: BisaSetting) -> (Option<i8>, Option<i8>, BisaOutcome) {
    (
        side_outcome(mask),
        side_outcome(mask >> 2),
        classify_mask(mask >> 4, commanded),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTable {
    /// Probability per emission slot of a four-fold candidate.
    pub candidate_probability: f64,
    /// `P(pattern ∧ candidate)`, indexed by mask.
    pub joint: Vec<f64>,
}

type Key = (PauliAxis, PauliAxis, BisaSetting);

#[derive(Debug, Clone, PartialEq)]
pub struct FockModel {
    tables: BTreeMap<Key, PatternTable>,
    truncated_weight: f64,
    tau: f64,
    visibility: f64,
    victor_efficiency: f64,
}

fn analyzer_output(cfg: &ExperimentConfig, setting: BisaSetting) -> Result<Ensemble> {
    let s = &cfg.source;
    let n = &cfg.noise;
    let pair_a = spdc_source_on("a", "b", s.tau, s.order, s.n_max)?;
    let pair_b = spdc_source_on("c", "d", s.tau, s.order, s.n_max)?;
    let mut ens = Ensemble::pure(pair_a.tensor(&pair_b)?);
    if n.loss_route == LossRoute::Exact {
        ens = attenuate_spatial(&ens, "b", n.input_transmission)?;
        ens = attenuate_spatial(&ens, "c", n.input_transmission)?;
    }
    ens = depolarize(&ens, "b", n.fiber_polarization_fidelity)?;
    ens = depolarize(&ens, "c", n.fiber_polarization_fidelity)?;
    Ok(bisa_apply_ensemble(&ens, setting, n.visibility())?)
}

fn victor_efficiency(cfg: &ExperimentConfig) -> f64 {
    let n = &cfg.noise;
    match n.loss_route {
        LossRoute::Folded => n.detector_efficiency.victor * n.input_transmission,
        LossRoute::Exact => n.detector_efficiency.victor,
    }
}

impl FockModel {
    /// Tables for every enabled basis pair.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let pairs: Vec<(PauliAxis, PauliAxis)> = cfg
            .alice_bases
            .iter()
            .flat_map(|&a| cfg.bob_bases.iter().map(move |&b| (a, b)))
            .collect();
        Self::build_pairs(cfg, &pairs)
    }

    pub fn build_pairs(cfg: &ExperimentConfig, pairs: &[(PauliAxis, PauliAxis)]) -> Result<Self> {
        cfg.validate()?;
        let settings = [BisaSetting::Bsm, BisaSetting::Ssm];
        let outputs: Vec<Ensemble> = settings
            .par_iter()
            .map(|&s| analyzer_output(cfg, s))
            .collect::<Result<_>>()?;
        let truncated_weight = outputs
            .iter()
            .map(Ensemble::truncated_weight)
            .fold(0.0, f64::max);
        let d = &cfg.noise.detector_efficiency;
        let ve = victor_efficiency(cfg);
        let eff = [d.alice, d.alice, d.bob, d.bob, ve, ve, ve, ve];
        let bank = bank();
        let jobs: Vec<(usize, PauliAxis, PauliAxis)> = (0..settings.len())
            .flat_map(|i| pairs.iter().map(move |&(a, b)| (i, a, b)))
            .collect();
        let tables = jobs
            .par_iter()
            .map(|&(i, a, b)| {
                let rotated = outputs[i].map(|m| {
                    let m = wave_plate(m, "a", basis_rotation(a))?;
                    wave_plate(&m, "d", basis_rotation(b))
                })?;
                let mut joint = pattern_distribution(&rotated, &bank, &eff)?;
                for (mask, p) in joint.iter_mut().enumerate() {
                    if !is_candidate(mask) {
                        *p = 0.0;
                    }
                }
                let candidate_probability = joint.iter().sum();
                Ok(((a, b, settings[i]), PatternTable { candidate_probability, joint }))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        if tables.values().any(|t| t.candidate_probability <= 0.0) {
            return Err(ExperimentError::InvalidConfig(
                "no four-fold candidates: tau or an efficiency is zero".into(),
            ));
        }
        Ok(Self {
            tables,
            truncated_weight,
            tau: cfg.source.tau,
            visibility: cfg.noise.visibility(),
            victor_efficiency: ve,
        })
    }

    pub fn table(&self, alice: PauliAxis, bob: PauliAxis, applied: BisaSetting) -> Option<&PatternTable> {
        self.tables.get(&(alice, bob, applied))
    }

    /// Weight lost to the photon-number cap, worst setting.
    pub fn truncated_weight(&self) -> f64 {
        self.truncated_weight
    }

    /// Pattern distribution given a candidate, for a commanded setting that
    /// is applied with probability `switching_fidelity`.
    pub fn commanded_distribution(
        &self,
        alice: PauliAxis,
        bob: PauliAxis,
        commanded: BisaSetting,
        switching_fidelity: f64,
    ) -> Option<Vec<f64>> {
        let right = self.table(alice, bob, commanded)?;
        let wrong = self.table(alice, bob, commanded.other())?;
        let mut d: Vec<f64> = right
            .joint
            .iter()
            .zip(&wrong.joint)
            .map(|(r, w)| switching_fidelity * r + (1.0 - switching_fidelity) * w)
            .collect();
        let total: f64 = d.iter().sum();
        d.iter_mut().for_each(|p| *p /= total);
        Some(d)
    }

    /// Exact correlation of photons 1 and 4 in a matched basis, over kept
    /// candidates whose class is in `classes`.
    pub fn expected_correlation(
        &self,
        axis: PauliAxis,
        commanded: BisaSetting,
        classes: &[BisaOutcome],
        switching_fidelity: f64,
    ) -> Option<f64> {
        let d = self.commanded_distribution(axis, axis, commanded, switching_fidelity)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (mask, p) in d.iter().enumerate() {
            if let (Some(a), Some(b), o) = decode(mask, commanded) {
                if classes.contains(&o) {
                    num += p * (a * b) as f64;
                    den += p;
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    /// Fraction of candidates (commanded `setting`) that are kept, duty
    /// cycle aside.
    pub fn expected_kept_fraction(
        &self,
        alice: PauliAxis,
        bob: PauliAxis,
        commanded: BisaSetting,
        switching_fidelity: f64,
    ) -> Option<f64> {
        let d = self.commanded_distribution(alice, bob, commanded, switching_fidelity)?;
        Some(
            d.iter()
                .enumerate()
                .filter(|(m, _)| matches!(decode(*m, commanded), (Some(_), Some(_), o) if o.is_kept()))
                .map(|(_, p)| p)
                .sum(),
        )
    }

    pub fn summary(&self, switching_fidelity: f64) -> FockModelSummary {
        let candidates = self
            .tables
            .iter()
            .map(|(&(a, b, s), t)| CandidateEntry {
                alice_basis: a,
                bob_basis: b,
                applied_setting: s,
                candidate_probability: t.candidate_probability,
            })
            .collect();
        let mut expected = Vec::new();
        let groups: [(&str, BisaSetting, &[BisaOutcome]); 4] = [
            ("BSM/Phi-", BisaSetting::Bsm, &[BisaOutcome::PhiMinus23]),
            ("BSM/Phi+", BisaSetting::Bsm, &[BisaOutcome::PhiPlus23]),
            ("BSM/pooled", BisaSetting::Bsm, &[BisaOutcome::PhiPlus23, BisaOutcome::PhiMinus23]),
            ("SSM/pooled", BisaSetting::Ssm, &[BisaOutcome::HH23, BisaOutcome::VV23]),
        ];
        for (label, setting, classes) in groups {
            for axis in PauliAxis::ALL {
                if let Some(e) = self.expected_correlation(axis, setting, classes, switching_fidelity) {
                    expected.push(ExpectedCorrelation {
                        subensemble: label.to_string(),
                        basis: axis,
                        value: e,
                    });
                }
            }
        }
        FockModelSummary {
            tau: self.tau,
            visibility: self.visibility,
            victor_efficiency: self.victor_efficiency,
            truncated_weight: self.truncated_weight,
            candidates,
            expected,
        }
    }

    pub(super) fn sampler(&self, switching_fidelity: f64) -> Sampler {
        let mut cumulative = BTreeMap::new();
        for &(a, b, s) in self.tables.keys() {
            if let Some(d) = self.commanded_distribution(a, b, s, switching_fidelity) {
                let mut acc = 0.0;
                let c: Vec<f64> = d
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                cumulative.insert((a, b, s), c);
            }
        }
        Sampler { cumulative }
    }
}

pub(super) struct Sampler {
    cumulative: BTreeMap<Key, Vec<f64>>,
}

impl Sampler {
    pub(super) fn sample_trial<R: Rng + ?Sized>(
        &self,
        alice: PauliAxis,
        bob: PauliAxis,
        commanded: BisaSetting,
        dropped: bool,
        rng: &mut R,
    ) -> (Option<i8>, Option<i8>, BisaOutcome) {
        let c = &self.cumulative[&(alice, bob, commanded)];
        let u = rng.random::<f64>() * c[c.len() - 1];
        let mask = c.partition_point(|&x| x <= u).min(c.len() - 1);
        let (a, b, o) = decode(mask, commanded);
        if dropped {
            (a, b, BisaOutcome::Discard)
        } else {
            (a, b, o)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub alice_basis: PauliAxis,
    pub bob_basis: PauliAxis,
    pub applied_setting: BisaSetting,
    pub candidate_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCorrelation {
    pub subensemble: String,
    pub basis: PauliAxis,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockModelSummary {
    pub tau: f64,
    pub visibility: f64,
    pub victor_efficiency: f64,
    pub truncated_weight: f64,
    pub candidates: Vec<CandidateEntry>,
    pub expected: Vec<ExpectedCorrelation>,
}

/// Simulated two-pair to one-pair emission ratio of one source.
pub fn spdc_pair_ratio(tau: f64, order: usize, n_max: u8) -> Result<f64> {
    let s = spdc_series("a", "b", tau, order.max(2), n_max.max(2))?;
    let mut p = [0.0f64; 3];
    for (occ, a) in s.terms() {
        let pairs = (occ[0] + occ[1]) as usize;
        if pairs <= 2 {
            p[pairs] += a.norm_sqr();
        }
    }
    Ok(p[2] / p[1])
}

fn bisect_increasing(
    f: impl Fn(f64) -> Result<f64>,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo <= target && target <= fhi) {
        return Err(ExperimentError::Calibration(format!(
            "target {target} not bracketed by [{flo}, {fhi}] on [{lo}, {hi}]"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Squeezing parameter whose simulated two-pair/one-pair emission ratio
/// equals `ratio`.
pub fn calibrate_tau_from_count_ratio(ratio: f64, order: usize, n_max: u8) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(ExperimentError::Calibration(format!("ratio {ratio} must be positive")));
    }
    bisect_increasing(|t| spdc_pair_ratio(t, order, n_max), ratio, 1e-6, 3.0, 1e-12)
}

const MATCHED: [(PauliAxis, PauliAxis); 3] = [
    (PauliAxis::Z, PauliAxis::Z),
    (PauliAxis::X, PauliAxis::X),
    (PauliAxis::Y, PauliAxis::Y),
];

/// Mean over Z, X, Y of the exact BSM/Φ⁻ correlation magnitude.
pub fn mean_bsm_correlation(cfg: &ExperimentConfig) -> Result<f64> {
    let m = FockModel::build_pairs(cfg, &MATCHED)?;
    let mut sum = 0.0;
    for axis in PauliAxis::ALL {
        let e = m
            .expected_correlation(axis, BisaSetting::Bsm, &[BisaOutcome::PhiMinus23], cfg.noise.switching_fidelity)
            .ok_or_else(|| ExperimentError::Calibration("no BSM/Phi- events".into()))?;
        sum += e.abs();
    }
    Ok(sum / 3.0)
}

/// Squeezing parameter at which [`mean_bsm_correlation`] equals `target`.
pub fn calibrate_tau_to_correlation(cfg: &ExperimentConfig, target: f64) -> Result<f64> {
    let at = |tau: f64| {
        let mut c = cfg.clone();
        c.source.tau = tau;
        // Correlation falls with tau; negate to bisect an increasing function.
        mean_bsm_correlation(&c).map(|e| -e)
    };
    bisect_increasing(at, -target, 0.02, 1.0, 1e-4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauRange {
    /// τ at which multi-pair noise alone gives the SPDC-only correlation.
    pub spdc_only: f64,
    /// τ at which the complete model gives the full-budget correlation.
    pub full_budget: f64,
}

impl TauRange {
    pub fn lo(&self) -> f64 {
        self.spdc_only.min(self.full_budget)
    }

    pub fn hi(&self) -> f64 {
        self.spdc_only.max(self.full_budget)
    }

    pub fn contains(&self, tau: f64) -> bool {
        (self.lo() - 1e-3..=self.hi() + 1e-3).contains(&tau)
    }
}

/// Range of squeezing parameters consistent with the reference imperfection budget.
pub fn plausible_tau_range(cfg: &ExperimentConfig) -> Result<TauRange> {
    let mut bare = cfg.clone();
    bare.noise = cfg.noise.without_imperfections();
    Ok(TauRange {
        spdc_only: calibrate_tau_to_correlation(&bare, SPDC_ONLY_CORRELATION)?,
        full_budget: calibrate_tau_to_correlation(cfg, FULL_BUDGET_CORRELATION)?,
    })
}
