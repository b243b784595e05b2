//! Exact four-qubit model of the protocol.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::bisa::{BisaOutcome, BisaSetting};
use crate::qstate::{
    bell_state, four_photon_source_state, partial_trace, project, tensor, BellKind, DensityMatrix,
    PauliAxis, QubitRegisterState,
};

/// Victor's complete projector set for a setting, with the outcome class each
/// projector reports.
pub fn victor_projectors(setting: BisaSetting) -> Vec<(QubitRegisterState, BisaOutcome)> {
    let basis = |a, b| QubitRegisterState::basis(&[a, b]).expect("two qubits");
    match setting {
        BisaSetting::Bsm => vec![
            (bell_state(BellKind::PhiPlus), BisaOutcome::PhiPlus23),
            (bell_state(BellKind::PhiMinus), BisaOutcome::PhiMinus23),
            (bell_state(BellKind::PsiPlus), BisaOutcome::Discard),
            (bell_state(BellKind::PsiMinus), BisaOutcome::Discard),
        ],
        BisaSetting::Ssm => vec![
            (basis(false, false), BisaOutcome::HH23),
            (basis(true, true), BisaOutcome::VV23),
            (basis(false, true), BisaOutcome::Discard),
            (basis(true, false), BisaOutcome::Discard),
        ],
    }
}

fn kept_outcomes(setting: BisaSetting) -> [BisaOutcome; 2] {
    match setting {
        BisaSetting::Bsm => [BisaOutcome::PhiPlus23, BisaOutcome::PhiMinus23],
        BisaSetting::Ssm => [BisaOutcome::HH23, BisaOutcome::VV23],
    }
}

fn sign(positive: bool) -> i8 {
    if positive {
        1
    } else {
        -1
    }
}

/// Measure one qubit in `axis`; returns ±1 and the post-measurement state of
/// the other qubits.
fn measure_qubit<R: Rng + ?Sized>(
    state: &QubitRegisterState,
    qubit: usize,
    axis: PauliAxis,
    rng: &mut R,
) -> Result<(i8, QubitRegisterState)> {
    let plus = project(state, &[qubit], &axis.eigenstate(true))?;
    let positive = rng.random::<f64>() < plus.probability;
    let branch = if positive {
        plus
    } else {
        project(state, &[qubit], &axis.eigenstate(false))?
    };
    let rest = branch.remaining.expect("sampled branch has positive probability");
    Ok((sign(positive), rest))
}

/// One ideal trial, measured in the lab order Alice, Bob, Victor.
pub(super) fn sample_trial<R: Rng + ?Sized>(
    alice: PauliAxis,
    bob: PauliAxis,
    choice: BisaSetting,
    dropped: bool,
    rng: &mut R,
) -> Result<(Option<i8>, Option<i8>, BisaOutcome)> {
    let psi = four_photon_source_state();
    let (a, rest) = measure_qubit(&psi, 0, alice, rng)?;
    // Remaining qubits are photons 2, 3, 4.
    let (b, rest) = measure_qubit(&rest, 2, bob, rng)?;
    let u = rng.random::<f64>();
    if dropped {
        return Ok((Some(a), Some(b), BisaOutcome::Discard));
    }
    let mut acc = 0.0;
    let projectors = victor_projectors(choice);
    for (proj, class) in &projectors {
        acc += project(&rest, &[0, 1], proj)?.probability;
        if u < acc {
            return Ok((Some(a), Some(b), *class));
        }
    }
    Ok((Some(a), Some(b), projectors.last().expect("non-empty").1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementOrder {
    AliceBobFirst,
    VictorFirst,
}

/// Exact probabilities of `(alice, bob, victor_class)`.
pub type JointDistribution = BTreeMap<(i8, i8, BisaOutcome), f64>;

pub fn joint_distribution(
    setting: BisaSetting,
    alice: PauliAxis,
    bob: PauliAxis,
    order: MeasurementOrder,
) -> Result<JointDistribution> {
    let psi = four_photon_source_state();
    let mut out = JointDistribution::new();
    for pa in [true, false] {
        for pb in [true, false] {
            for (proj, class) in victor_projectors(setting) {
                let p = match order {
                    MeasurementOrder::AliceBobFirst => {
                        let s1 = project(&psi, &[0], &alice.eigenstate(pa))?;
                        let Some(r1) = s1.remaining else { continue };
                        let s2 = project(&r1, &[2], &bob.eigenstate(pb))?;
                        let Some(r2) = s2.remaining else { continue };
                        s1.probability * s2.probability * project(&r2, &[0, 1], &proj)?.probability
                    }
                    MeasurementOrder::VictorFirst => {
                        let s1 = project(&psi, &[1, 2], &proj)?;
                        let Some(r1) = s1.remaining else { continue };
                        let s2 = project(&r1, &[0], &alice.eigenstate(pa))?;
                        let Some(r2) = s2.remaining else { continue };
                        s1.probability * s2.probability * project(&r2, &[0], &bob.eigenstate(pb))?.probability
                    }
                };
                *out.entry((sign(pa), sign(pb), class)).or_default() += p;
            }
        }
    }
    // Zero-probability branches are skipped above; fill them in so both
    // orderings share the same key set.
    for pa in [1, -1] {
        for pb in [1, -1] {
            for class in BisaOutcome::ALL {
                if class == BisaOutcome::Discard || kept_outcomes(setting).contains(&class) {
                    out.entry((pa, pb, class)).or_default();
                }
            }
        }
    }
    Ok(out)
}

/// Photon pairs reported in the fidelity table, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhotonPair {
    P23,
    P14,
    P12,
    P34,
}

impl PhotonPair {
    pub const ALL: [PhotonPair; 4] = [PhotonPair::P23, PhotonPair::P14, PhotonPair::P12, PhotonPair::P34];

    /// Zero-based qubit indices.
    pub fn qubits(self) -> [usize; 2] {
        match self {
            PhotonPair::P23 => [1, 2],
            PhotonPair::P14 => [0, 3],
            PhotonPair::P12 => [0, 1],
            PhotonPair::P34 => [2, 3],
        }
    }

    /// Ideal target state of the pair.
    pub fn target(self) -> BellKind {
        match self {
            PhotonPair::P23 | PhotonPair::P14 => BellKind::PhiMinus,
            PhotonPair::P12 | PhotonPair::P34 => BellKind::PsiMinus,
        }
    }

    /// Whether the trial log carries correlation data for this pair.
    pub fn measured_in_log(self) -> bool {
        self == PhotonPair::P14
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "2&3" | "23" => Some(PhotonPair::P23),
            "1&4" | "14" => Some(PhotonPair::P14),
            "1&2" | "12" => Some(PhotonPair::P12),
            "3&4" | "34" => Some(PhotonPair::P34),
            _ => None,
        }
    }
}

impl fmt::Display for PhotonPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = self.qubits();
        write!(f, "{}&{}", a + 1, b + 1)
    }
}

/// Exact two-photon state after Victor's measurement.
///
/// `outcome = None` pools the kept outcomes of `choice`. For pairs 1&2 and
/// 3&4 under SSM the source's reduced state is returned, without any
/// conditioning on Victor's result.
pub fn conditional_state(
    choice: BisaSetting,
    outcome: Option<BisaOutcome>,
    pair: PhotonPair,
) -> Result<DensityMatrix> {
    let classes: Vec<BisaOutcome> = match outcome {
        Some(o) if kept_outcomes(choice).contains(&o) => vec![o],
        Some(o) => return Err(ExperimentError::InconsistentOutcome { choice, outcome: o }),
        None => kept_outcomes(choice).to_vec(),
    };
    let psi = four_photon_source_state();
    if choice == BisaSetting::Ssm && matches!(pair, PhotonPair::P12 | PhotonPair::P34) {
        return Ok(partial_trace(&psi.to_density(), &pair.qubits())?);
    }
    let mut parts = Vec::new();
    for (proj, class) in victor_projectors(choice) {
        if !classes.contains(&class) {
            continue;
        }
        let p = project(&psi, &[1, 2], &proj)?;
        if let Some(rest) = p.remaining {
            // rest holds photons 1 and 4; reassemble in photon order.
            let full = tensor(&rest, &proj)?.permute(&[0, 2, 3, 1])?;
            parts.push((p.probability, full));
        }
    }
    let rho = DensityMatrix::mixture(&parts)?;
    Ok(partial_trace(&rho, &pair.qubits())?)
}
