//! Correlation functions, fidelities and witness values over trial logs.
//!
//! Correlations use matched-basis records only (Alice and Bob in the same
//! basis, both detected). `j` is the +1 outcome and `p` the −1 outcome.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bisa::{BisaOutcome, BisaSetting};
use crate::experiment::{conditional_state, ExperimentError, PhotonPair, SubensembleSet, TrialRecord};
use crate::qstate::{bell_state, fidelity, witness_from_fidelity, BellKind, PauliAxis, QStateError};

/// Rows with fewer coincidences than this are flagged.
pub const LOW_STATISTICS: u64 = 20;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("correlation undefined in the {0} basis: no coincidences")]
    UndefinedCorrelation(PauliAxis),
    #[error("{name} = {value} is outside [-1, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("empty subensemble: {0}")]
    EmptySubensemble(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    QState(#[from] QStateError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub basis: PauliAxis,
    pub c_jj: u64,
    pub c_pp: u64,
    pub c_jp: u64,
    pub c_pj: u64,
}

impl CoincidenceCounts {
    pub fn new(basis: PauliAxis, c_jj: u64, c_pp: u64, c_jp: u64, c_pj: u64) -> Self {
        Self { basis, c_jj, c_pp, c_jp, c_pj }
    }

    pub fn total(&self) -> u64 {
        self.c_jj + self.c_pp + self.c_jp + self.c_pj
    }

    /// Tally the matched-basis records of `axis`.
    pub fn from_records<'a>(axis: PauliAxis, records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let mut c = Self::new(axis, 0, 0, 0, 0);
        for r in records {
            if r.alice_basis != axis || r.bob_basis != axis {
                continue;
            }
            match (r.alice_outcome, r.bob_outcome) {
                (Some(1), Some(1)) => c.c_jj += 1,
                (Some(-1), Some(-1)) => c.c_pp += 1,
                (Some(1), Some(-1)) => c.c_jp += 1,
                (Some(-1), Some(1)) => c.c_pj += 1,
                _ => {}
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub basis: PauliAxis,
    pub value: f64,
    pub sigma: f64,
    pub total: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn correlation(counts: &CoincidenceCounts) -> Result<CorrelationResult> {
    let a = counts.c_jj + counts.c_pp;
    let b = counts.c_jp + counts.c_pj;
    let n = a + b;
    if n == 0 {
        return Err(AnalysisError::UndefinedCorrelation(counts.basis));
    }
    // Reduce the fraction first so scaled counts give bit-identical values.
    let g = gcd(a.abs_diff(b), n);
    let num = (a.abs_diff(b) / g) as f64;
    let value = if a >= b { num } else { -num } / (n / g) as f64;
    let (af, bf, nf) = (a as f64, b as f64, n as f64);
    let sigma = 2.0 * (af * bf / nf).sqrt() / nf;
    Ok(CorrelationResult {
        basis: counts.basis,
        value,
        sigma,
        total: n,
    })
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalysisError::OutOfRange { name, value })
    }
}

/// Fidelity with a Bell state from the three matched-basis correlations.
pub fn fidelity_from_correlations(e_zz: f64, e_xx: f64, e_yy: f64, target: BellKind) -> Result<f64> {
    check_unit("e_zz", e_zz)?;
    check_unit("e_xx", e_xx)?;
    check_unit("e_yy", e_yy)?;
    let (sz, sx, sy) = match target {
        BellKind::PhiMinus => (1.0, -1.0, 1.0),
        BellKind::PhiPlus => (1.0, 1.0, -1.0),
        BellKind::PsiMinus => (-1.0, -1.0, -1.0),
        BellKind::PsiPlus => (-1.0, 1.0, 1.0),
    };
    Ok(0.25 * (1.0 + sz * e_zz + sx * e_xx + sy * e_yy))
}

/// Correlations of one subensemble in the three bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubensembleReport {
    pub label: String,
    pub records: usize,
    /// Z, X, Y order.
    pub correlations: Vec<CorrelationResult>,
}

impl SubensembleReport {
    pub fn get(&self, axis: PauliAxis) -> Option<&CorrelationResult> {
        self.correlations.iter().find(|c| c.basis == axis)
    }

    pub fn abs_sum(&self) -> f64 {
        self.correlations.iter().map(|c| c.value.abs()).sum()
    }

    /// Fidelity with `target` and its propagated uncertainty.
    pub fn fidelity(&self, target: BellKind) -> Result<(f64, f64)> {
        let e = |a| {
            self.get(a)
                .copied()
                .ok_or(AnalysisError::UndefinedCorrelation(a))
        };
        let (z, x, y) = (e(PauliAxis::Z)?, e(PauliAxis::X)?, e(PauliAxis::Y)?);
        let f = fidelity_from_correlations(z.value, x.value, y.value, target)?;
        let s = 0.25 * (z.sigma.powi(2) + x.sigma.powi(2) + y.sigma.powi(2)).sqrt();
        Ok((f, s))
    }

    pub fn min_total(&self) -> u64 {
        self.correlations.iter().map(|c| c.total).min().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,value,sigma,n\n");
        correlation_rows(&mut out, self);
        out
    }
}

pub fn subensemble_report(label: &str, records: &[TrialRecord]) -> Result<SubensembleReport> {
    if records.is_empty() {
        return Err(AnalysisError::EmptySubensemble(label.to_string()));
    }
    let correlations = PauliAxis::ALL
        .iter()
        .map(|&a| correlation(&CoincidenceCounts::from_records(a, records)))
        .collect::<Result<_>>()?;
    Ok(SubensembleReport {
        label: label.to_string(),
        records: records.len(),
        correlations,
    })
}

pub const BSM_PHI_MINUS: &str = "BSM/Phi-";
pub const BSM_PHI_PLUS: &str = "BSM/Phi+";
pub const BSM_POOLED: &str = "BSM/pooled";
pub const SSM_POOLED: &str = "SSM/pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Report {
    pub subensembles: Vec<SubensembleReport>,
}

impl Fig3Report {
    pub fn get(&self, label: &str) -> Option<&SubensembleReport> {
        self.subensembles.iter().find(|s| s.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,value,sigma,n\n");
        for s in &self.subensembles {
            correlation_rows(&mut out, s);
        }
        out
    }
}

fn correlation_rows(out: &mut String, s: &SubensembleReport) {
    for c in &s.correlations {
        let _ = writeln!(out, "{} {},{},{},{}", s.label, c.basis.basis_label(), c.value, c.sigma, c.total);
    }
}

/// Per-basis correlations of photons 1 and 4: BSM split by Victor's result,
/// SSM pooled over HH and VV. Groups without records are left out.
pub fn report_fig3(set: &SubensembleSet) -> Result<Fig3Report> {
    let groups = [
        (BSM_PHI_MINUS, set.pooled(&[BisaOutcome::PhiMinus23])),
        (BSM_PHI_PLUS, set.pooled(&[BisaOutcome::PhiPlus23])),
        (SSM_POOLED, set.pooled(&[BisaOutcome::HH23, BisaOutcome::VV23])),
    ];
    let subensembles: Vec<_> = groups
        .iter()
        .filter(|(_, r)| !r.is_empty())
        .map(|(l, r)| subensemble_report(l, r))
        .collect::<Result<_>>()?;
    if subensembles.is_empty() {
        return Err(AnalysisError::EmptySubensemble("no kept records".into()));
    }
    Ok(Fig3Report { subensembles })
}

/// BSM records with Φ⁺ and Φ⁻ merged.
pub fn pooled_bsm_analysis(set: &SubensembleSet) -> Result<SubensembleReport> {
    subensemble_report(BSM_POOLED, &set.pooled(&[BisaOutcome::PhiPlus23, BisaOutcome::PhiMinus23]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowSource {
    /// From logged coincidences.
    Measured,
    /// From the exact conditional state.
    StateDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowEntry {
    pub fidelity: f64,
    pub witness: f64,
    /// Absent for state-derived entries.
    pub sigma: Option<f64>,
    pub n: u64,
    pub low_statistics: bool,
}

impl RowEntry {
    fn measured(fidelity: f64, sigma: f64, n: u64) -> Self {
        Self {
            fidelity,
            witness: witness_from_fidelity(fidelity),
            sigma: Some(sigma),
            n,
            low_statistics: n < LOW_STATISTICS,
        }
    }

    fn exact(fidelity: f64) -> Self {
        Self {
            fidelity,
            witness: witness_from_fidelity(fidelity),
            sigma: None,
            n: 0,
            low_statistics: false,
        }
    }

    /// Negative witness beyond rounding noise.
    pub fn is_entangled(&self) -> bool {
        self.witness < -1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub pair: PhotonPair,
    pub target: BellKind,
    pub source: RowSource,
    pub bsm: RowEntry,
    pub ssm: RowEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub rows: Vec<Table1Row>,
}

impl Table1Report {
    pub fn get(&self, pair: PhotonPair) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.pair == pair)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,value,sigma,n\n");
        for r in &self.rows {
            let tag = match r.source {
                RowSource::Measured => "",
                RowSource::StateDerived => " [state-derived]",
            };
            for (name, e) in [("BSM", &r.bsm), ("SSM", &r.ssm)] {
                let low = if e.low_statistics { " [low-statistics]" } else { "" };
                let sigma = e.sigma.map(|s| s.to_string()).unwrap_or_default();
                for (what, v) in [("fidelity", e.fidelity), ("witness", e.witness)] {
                    let _ = writeln!(
                        out,
                        "{} {} {} {}{}{},{},{},{}",
                        r.pair, r.target, name, what, tag, low, v, sigma, e.n
                    );
                }
            }
        }
        out
    }
}

fn state_entry(choice: BisaSetting, outcome: Option<BisaOutcome>, pair: PhotonPair) -> Result<RowEntry> {
    let rho = conditional_state(choice, outcome, pair)?;
    Ok(RowEntry::exact(fidelity(&rho, &bell_state(pair.target()))?))
}

/// Fidelity and witness rows for pairs 2&3, 1&4, 1&2 and 3&4.
///
/// Pair 1&4 comes from the logged correlations: BSM conditioned on Φ⁻,
/// SSM pooled over HH and VV. The other pairs are not measured in the log
/// and come from the exact conditional states under the same conditioning.
pub fn report_table1(set: &SubensembleSet) -> Result<Table1Report> {
    let bsm = subensemble_report(BSM_PHI_MINUS, &set.pooled(&[BisaOutcome::PhiMinus23]))?;
    let ssm = subensemble_report(SSM_POOLED, &set.pooled(&[BisaOutcome::HH23, BisaOutcome::VV23]))?;
    let mut rows = Vec::new();
    for pair in PhotonPair::ALL {
        let target = pair.target();
        let row = if pair.measured_in_log() {
            let (fb, sb) = bsm.fidelity(target)?;
            let (fs, ss) = ssm.fidelity(target)?;
            Table1Row {
                pair,
                target,
                source: RowSource::Measured,
                bsm: RowEntry::measured(fb, sb, bsm.min_total()),
                ssm: RowEntry::measured(fs, ss, ssm.min_total()),
            }
        } else {
            Table1Row {
                pair,
                target,
                source: RowSource::StateDerived,
                bsm: state_entry(BisaSetting::Bsm, Some(BisaOutcome::PhiMinus23), pair)?,
                ssm: state_entry(BisaSetting::Ssm, None, pair)?,
            }
        };
        rows.push(row);
    }
    Ok(Table1Report { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn correlation_examples() {
        let e = correlation(&CoincidenceCounts::new(PauliAxis::Z, 50, 50, 0, 0)).unwrap();
        assert_eq!((e.value, e.sigma), (1.0, 0.0));
        let e = correlation(&CoincidenceCounts::new(PauliAxis::Z, 0, 0, 50, 50)).unwrap();
        assert_eq!(e.value, -1.0);
        let e = correlation(&CoincidenceCounts::new(PauliAxis::X, 40, 40, 10, 10)).unwrap();
        assert!((e.value - 0.6).abs() < 1e-15);
        assert!((e.sigma - 0.08).abs() < 1e-15);
        assert!(matches!(
            correlation(&CoincidenceCounts::new(PauliAxis::Y, 0, 0, 0, 0)),
            Err(AnalysisError::UndefinedCorrelation(PauliAxis::Y))
        ));
    }

    #[test]
    fn sigma_matches_poisson_resampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cells = [40.0, 40.0, 10.0, 10.0].map(|m| Poisson::new(m).unwrap());
        let n = 200_000;
        let (mut s, mut s2, mut k) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let c = cells.each_ref().map(|p| p.sample(&mut rng) as u64);
            if let Ok(e) = correlation(&CoincidenceCounts::new(PauliAxis::Z, c[0], c[1], c[2], c[3])) {
                s += e.value;
                s2 += e.value * e.value;
                k += 1.0;
            }
        }
        let sd = (s2 / k - (s / k).powi(2)).sqrt();
        assert!((sd / 0.08 - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn reference_fidelities() {
        let f = fidelity_from_correlations(0.511, -0.611, 0.603, BellKind::PhiMinus).unwrap();
        assert!((f - 0.681).abs() < 1e-3);
        let f = fidelity_from_correlations(0.589, 0.59, -0.561, BellKind::PhiPlus).unwrap();
        assert!((f - 0.685).abs() < 1e-3);
        assert_eq!(fidelity_from_correlations(1.0, -1.0, 1.0, BellKind::PhiMinus).unwrap(), 1.0);
        assert!(fidelity_from_correlations(1.2, 0.0, 0.0, BellKind::PhiMinus).is_err());
    }

    #[test]
    fn reference_witnesses() {
        for (f, w, tol) in [(0.645, -0.145, 1e-3), (0.681, -0.181, 1e-3), (0.421, 0.078, 2e-3)] {
            assert!((witness_from_fidelity(f) - w).abs() <= tol);
        }
    }

    #[test]
    fn scaling_keeps_value_exact() {
        let c = CoincidenceCounts::new(PauliAxis::Z, 13, 7, 5, 2);
        let base = correlation(&c).unwrap();
        for k in [2u64, 3, 17, 1000] {
            let s = correlation(&CoincidenceCounts::new(PauliAxis::Z, 13 * k, 7 * k, 5 * k, 2 * k)).unwrap();
            assert_eq!(s.value, base.value);
            assert!((s.sigma * (k as f64).sqrt() - base.sigma).abs() < 1e-12);
        }
    }

    fn ideal_set() -> SubensembleSet {
        let mut cfg = crate::experiment::ExperimentConfig::ideal(20_000, 5);
        cfg.noise.duty_cycle = 1.0;
        crate::experiment::sort_subensembles(&crate::experiment::run_trials(&cfg).unwrap())
    }

    #[test]
    fn ideal_reports() {
        let set = ideal_set();
        let fig3 = report_fig3(&set).unwrap();
        let bsm = fig3.get(BSM_PHI_MINUS).unwrap();
        for (axis, want) in [(PauliAxis::Z, 1.0), (PauliAxis::X, -1.0), (PauliAxis::Y, 1.0)] {
            assert_eq!(bsm.get(axis).unwrap().value, want);
        }
        assert!(bsm.abs_sum() > 1.0);
        let ssm = fig3.get(SSM_POOLED).unwrap();
        assert_eq!(ssm.get(PauliAxis::Z).unwrap().value, 1.0);
        for axis in [PauliAxis::X, PauliAxis::Y] {
            let c = ssm.get(axis).unwrap();
            assert!(c.value.abs() < 5.0 * c.sigma.max(1.0 / (c.total as f64).sqrt()));
        }
        assert!(fig3.to_csv().lines().count() == 10);

        let t = report_table1(&set).unwrap();
        let r14 = t.get(PhotonPair::P14).unwrap();
        assert_eq!(r14.source, RowSource::Measured);
        assert_eq!((r14.bsm.fidelity, r14.bsm.witness), (1.0, -0.5));
        assert!((r14.ssm.fidelity - 0.5).abs() < 0.05);
        let r12 = t.get(PhotonPair::P12).unwrap();
        assert_eq!(r12.source, RowSource::StateDerived);
        assert!((r12.bsm.fidelity - 0.25).abs() < 1e-12);
        assert!((r12.ssm.fidelity - 1.0).abs() < 1e-12);
        for r in &t.rows {
            for e in [r.bsm, r.ssm] {
                assert_eq!(e.witness, 0.5 - e.fidelity);
            }
        }
        assert_eq!(t.to_csv().lines().count(), 17);
    }

    #[test]
    fn pooled_bsm() {
        let mut set = ideal_set();
        let pooled = pooled_bsm_analysis(&set).unwrap();
        assert_eq!(pooled.get(PauliAxis::Z).unwrap().value, 1.0);
        set.phi_plus.clear();
        let only = pooled_bsm_analysis(&set).unwrap();
        let phi = subensemble_report(BSM_PHI_MINUS, &set.phi_minus).unwrap();
        assert_eq!(only.correlations, phi.correlations);
        set.phi_minus.clear();
        assert!(matches!(pooled_bsm_analysis(&set), Err(AnalysisError::EmptySubensemble(_))));
    }
}
