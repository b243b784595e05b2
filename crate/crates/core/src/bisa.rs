//! Victor's switchable bipartite state analyzer.
//!
//! Mode layout: inputs `b`, `c`; inner arms `b'`, `c'`; outputs `b''`, `c''`.
//! The interferometer is BS1, then the plate pair, then a fixed π phase on
//! arm `c'` (the lock point), then BS2. With identity plates this is a mirror
//! taking `b → b''`, `c → c''`. With QWP@+45° on `b'` and QWP@−45° on `c'`
//! it resolves `Φ⁺` and `Φ⁻`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fock::{
    beam_splitter, pattern_distribution, phase_shift, wave_plate, DetectorBank, DetectorPattern,
    Ensemble, FockError, FockVector, Result, WavePlate, DEFAULT_N_MAX,
};
use crate::qstate::{BellKind, C64};

pub const IN_B: &str = "b";
pub const IN_C: &str = "c";
pub const ARM_B: &str = "b'";
pub const ARM_C: &str = "c'";
pub const OUT_B: &str = "b''";
pub const OUT_C: &str = "c''";

/// Bin used for the non-interfering share of the `c` photons.
pub const DISTINGUISHABLE_BIN: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BisaSetting {
    Bsm,
    Ssm,
}

impl BisaSetting {
    /// Random bit 1 selects the Bell-state measurement, 0 the separable one.
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            BisaSetting::Bsm
        } else {
            BisaSetting::Ssm
        }
    }

    pub fn bit(self) -> bool {
        self == BisaSetting::Bsm
    }

    /// Nominal interferometer phase of the setting.
    pub fn phase(self) -> f64 {
        match self {
            BisaSetting::Bsm => FRAC_PI_2,
            BisaSetting::Ssm => 0.0,
        }
    }

    fn plates(self) -> (WavePlate, WavePlate) {
        match self {
            BisaSetting::Bsm => (WavePlate::QwpPlus45, WavePlate::QwpMinus45),
            BisaSetting::Ssm => (WavePlate::Identity, WavePlate::Identity),
        }
    }

    pub fn other(self) -> Self {
        match self {
            BisaSetting::Bsm => BisaSetting::Ssm,
            BisaSetting::Ssm => BisaSetting::Bsm,
        }
    }
}

impl fmt::Display for BisaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BisaSetting::Bsm => "BSM",
            BisaSetting::Ssm => "SSM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BisaOutcome {
    PhiPlus23,
    PhiMinus23,
    HH23,
    VV23,
    Discard,
}

impl BisaOutcome {
    pub const ALL: [BisaOutcome; 5] = [
        BisaOutcome::PhiPlus23,
        BisaOutcome::PhiMinus23,
        BisaOutcome::HH23,
        BisaOutcome::VV23,
        BisaOutcome::Discard,
    ];

    pub fn is_kept(self) -> bool {
        self != BisaOutcome::Discard
    }
}

impl fmt::Display for BisaOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BisaOutcome::PhiPlus23 => "Phi+",
            BisaOutcome::PhiMinus23 => "Phi-",
            BisaOutcome::HH23 => "HH",
            BisaOutcome::VV23 => "VV",
            BisaOutcome::Discard => "discard",
        })
    }
}

/// The four output detectors in the order `b''H, b''V, c''H, c''V`.
pub fn output_bank() -> DetectorBank {
    DetectorBank::for_spatials(&[OUT_B, OUT_C])
}

fn check_input(state: &FockVector) -> Result<()> {
    for s in [IN_B, IN_C] {
        if !state.has_spatial(s) {
            return Err(FockError::UnknownSpatial(s.to_string()));
        }
    }
    for (i, m) in state.modes().iter().enumerate() {
        if [ARM_B, ARM_C, OUT_B, OUT_C].contains(&m.spatial.as_str())
            && state.terms().any(|(occ, _)| occ[i] > 0)
        {
            return Err(FockError::UnexpectedMode(m.to_string()));
        }
    }
    Ok(())
}

/// Fully coherent evolution through the analyzer.
pub fn bisa_unitary(state: &FockVector, setting: BisaSetting) -> Result<FockVector> {
    check_input(state)?;
    let s = beam_splitter(state, IN_B, IN_C, 0.5, 0.0)?;
    let s = s.relabel_spatial(IN_B, ARM_B)?.relabel_spatial(IN_C, ARM_C)?;
    let (pb, pc) = setting.plates();
    let s = wave_plate(&s, ARM_B, pb)?;
    let s = wave_plate(&s, ARM_C, pc)?;
    let s = phase_shift(&s, ARM_C, PI)?;
    let s = beam_splitter(&s, ARM_B, ARM_C, 0.5, 0.0)?;
    s.relabel_spatial(ARM_B, OUT_B)?.relabel_spatial(ARM_C, OUT_C)
}

/// Evolution with two-photon interference visibility `v`: a fraction `v` of
/// the state interferes fully, the rest has its `c` photons tagged into a
/// separate bin that cannot interfere with `b`.
pub fn bisa_apply(state: &FockVector, setting: BisaSetting, visibility: f64) -> Result<Ensemble> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(FockError::OutOfRange {
            name: "visibility",
            value: visibility,
        });
    }
    let mut parts = Vec::with_capacity(2);
    if visibility > 0.0 {
        parts.push((visibility, Ensemble::pure(bisa_unitary(state, setting)?)));
    }
    if visibility < 1.0 {
        let tagged = state.rebin_spatial(IN_C, DISTINGUISHABLE_BIN)?;
        parts.push((1.0 - visibility, Ensemble::pure(bisa_unitary(&tagged, setting)?)));
    }
    Ok(Ensemble::mix(parts))
}

/// [`bisa_apply`] over every member of an ensemble.
pub fn bisa_apply_ensemble(ens: &Ensemble, setting: BisaSetting, visibility: f64) -> Result<Ensemble> {
    ens.flat_map(|s| bisa_apply(s, setting, visibility))
}

const B_H: usize = 1 << 0;
const B_V: usize = 1 << 1;
const C_H: usize = 1 << 2;
const C_V: usize = 1 << 3;

/// Classify a click pattern over [`output_bank`].
pub fn classify(pattern: &DetectorPattern, setting: BisaSetting) -> BisaOutcome {
    classify_mask(pattern.mask(), setting)
}

pub fn classify_mask(mask: usize, setting: BisaSetting) -> BisaOutcome {
    match setting {
        BisaSetting::Bsm => match mask {
            m if m == B_H | B_V || m == C_H | C_V => BisaOutcome::PhiPlus23,
            m if m == B_H | C_H || m == B_V | C_V => BisaOutcome::PhiMinus23,
            _ => BisaOutcome::Discard,
        },
        BisaSetting::Ssm => match mask {
            m if m == B_H | C_H => BisaOutcome::HH23,
            m if m == B_V | C_V => BisaOutcome::VV23,
            _ => BisaOutcome::Discard,
        },
    }
}

/// Probabilities over [`BisaOutcome::ALL`].
pub type OutcomeDistribution = BTreeMap<BisaOutcome, f64>;

/// Outcome distribution for an ensemble at the analyzer output.
pub fn outcome_distribution(
    ens: &Ensemble,
    setting: BisaSetting,
    efficiency: f64,
) -> Result<OutcomeDistribution> {
    let bank = output_bank();
    let dist = pattern_distribution(ens, &bank, &[efficiency; 4])?;
    let mut out: OutcomeDistribution = BisaOutcome::ALL.iter().map(|&o| (o, 0.0)).collect();
    for (mask, p) in dist.iter().enumerate() {
        *out.get_mut(&classify_mask(mask, setting)).expect("all outcomes present") += p;
    }
    Ok(out)
}

/// Send a Bell pair through the analyzer and classify ideal detections.
pub fn verify_evolution(input: BellKind, setting: BisaSetting) -> Result<OutcomeDistribution> {
    verify_evolution_with_visibility(input, setting, 1.0)
}

pub fn verify_evolution_with_visibility(
    input: BellKind,
    setting: BisaSetting,
    visibility: f64,
) -> Result<OutcomeDistribution> {
    let pair = crate::fock::bell_pair(input, IN_B, IN_C, DEFAULT_N_MAX)?;
    let out = bisa_apply(&pair, setting, visibility)?;
    outcome_distribution(&out, setting, 1.0)
}

/// Reference output of a Φ± pair under BSM: Φ⁺ exits as `H V` in one
/// port, Φ⁻ as equal polarizations in opposite ports.
pub fn reference_bsm_output(input: BellKind) -> Option<FockVector> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let terms: [([u8; 4], f64); 2] = match input {
        BellKind::PhiPlus => [([1, 1, 0, 0], r), ([0, 0, 1, 1], -r)],
        BellKind::PhiMinus => [([1, 0, 1, 0], r), ([0, 1, 0, 1], -r)],
        _ => return None,
    };
    FockVector::from_terms(
        crate::fock::modes_for(&[OUT_B, OUT_C]),
        DEFAULT_N_MAX,
        terms.iter().map(|(o, a)| (o.to_vec(), C64::new(*a, 0.0))),
    )
    .ok()
}

/// `|⟨reference|output⟩|²` for a Φ± input under BSM.
pub fn bsm_output_overlap(input: BellKind) -> Result<f64> {
    let want = reference_bsm_output(input).ok_or(FockError::OutOfRange {
        name: "input (Phi+ or Phi- expected)",
        value: input.index() as f64,
    })?;
    let pair = crate::fock::bell_pair(input, IN_B, IN_C, DEFAULT_N_MAX)?;
    let out = bisa_unitary(&pair, BisaSetting::Bsm)?;
    let order: Vec<usize> = want
        .modes()
        .iter()
        .map(|m| out.mode_index(m))
        .collect::<Result<_>>()?;
    let out = FockVector::from_terms(
        want.modes().to_vec(),
        DEFAULT_N_MAX,
        out.terms().map(|(occ, a)| (order.iter().map(|&i| occ[i]).collect(), *a)),
    )?;
    Ok(out.overlap(&want))
}
