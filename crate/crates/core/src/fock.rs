//! Truncated bosonic Fock space over labeled (spatial, polarization, bin) modes.
//!
//! A [`FockVector`] stores amplitudes sparsely, keyed by occupation tuples in
//! the order of its mode list. Linear-optical elements act by expanding
//! creation operators: input mode `p` maps to `Σ_q U[q][p] a†_q`. Terms that
//! would put more than `n_max` photons in any mode are dropped and their
//! weight is accumulated in [`FockVector::truncated_weight`].
//!
//! The `bin` field of a [`ModeLabel`] is an internal degree of freedom that
//! detectors do not resolve. It is how partially distinguishable photons are
//! represented.
//!
//! Mixed states (after loss) are [`Ensemble`]s of weighted pure vectors.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qstate::C64;

/// Default per-mode photon cap.
pub const DEFAULT_N_MAX: u8 = 3;

const PRUNE: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("unknown mode {0}")]
    UnknownMode(String),
    #[error("unknown spatial label {0}")]
    UnknownSpatial(String),
    #[error("beam splitter needs two distinct modes, got {0} twice")]
    IdenticalModes(String),
    #[error("parameter {name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("SPDC order {order} exceeds the per-mode cap {n_max}")]
    OrderExceedsTruncation { order: usize, n_max: u8 },
    #[error("negative squeezing parameter {0}")]
    NegativeTau(f64),
    #[error("mode {0} declared twice")]
    DuplicateMode(String),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("photons found in unexpected mode {0}")]
    UnexpectedMode(String),
    #[error("{0} efficiencies supplied for a bank of {1} detectors")]
    EfficiencyCount(usize, usize),
}

pub type Result<T> = std::result::Result<T, FockError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeLabel {
    pub spatial: String,
    pub pol: Polarization,
    pub bin: u8,
}

impl ModeLabel {
    pub fn new(spatial: &str, pol: Polarization) -> Self {
        Self {
            spatial: spatial.to_string(),
            pol,
            bin: 0,
        }
    }

    pub fn h(spatial: &str) -> Self {
        Self::new(spatial, Polarization::H)
    }

    pub fn v(spatial: &str) -> Self {
        Self::new(spatial, Polarization::V)
    }

    pub fn with_bin(mut self, bin: u8) -> Self {
        self.bin = bin;
        self
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.spatial, self.pol)?;
        if self.bin != 0 {
            write!(f, "#{}", self.bin)?;
        }
        Ok(())
    }
}

/// `(H, V)` mode pair for each spatial label.
pub fn modes_for(spatials: &[&str]) -> Vec<ModeLabel> {
    spatials
        .iter()
        .flat_map(|s| Polarization::BOTH.map(|p| ModeLabel::new(s, p)))
        .collect()
}

pub type Occupation = Vec<u8>;

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    modes: Vec<ModeLabel>,
    n_max: u8,
    amps: BTreeMap<Occupation, C64>,
    truncated: f64,
}

impl FockVector {
    pub fn vacuum(modes: Vec<ModeLabel>, n_max: u8) -> Result<Self> {
        for (k, m) in modes.iter().enumerate() {
            if modes[..k].contains(m) {
                return Err(FockError::DuplicateMode(m.to_string()));
            }
        }
        let mut amps = BTreeMap::new();
        amps.insert(vec![0; modes.len()], C64::new(1.0, 0.0));
        Ok(Self {
            modes,
            n_max,
            amps,
            truncated: 0.0,
        })
    }

    /// Build from explicit occupation terms; terms above the cap are an error
    /// of the caller and are dropped into the truncation tally.
    pub fn from_terms(
        modes: Vec<ModeLabel>,
        n_max: u8,
        terms: impl IntoIterator<Item = (Occupation, C64)>,
    ) -> Result<Self> {
        let mut out = Self::vacuum(modes, n_max)?;
        out.amps.clear();
        for (occ, a) in terms {
            assert_eq!(occ.len(), out.modes.len(), "occupation length");
            if occ.iter().any(|&n| n > n_max) {
                out.truncated += a.norm_sqr();
            } else {
                *out.amps.entry(occ).or_default() += a;
            }
        }
        Ok(out)
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    /// Squared norm lost to the photon-number cap so far.
    pub fn truncated_weight(&self) -> f64 {
        self.truncated
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated > 0.0
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.amps.iter()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, occ: &[u8]) -> C64 {
        self.amps.get(occ).copied().unwrap_or_default()
    }

    /// Amplitude of the occupation given as `(mode, count)` pairs; unlisted
    /// modes are empty.
    pub fn amplitude_of(&self, occupied: &[(&ModeLabel, u8)]) -> Result<C64> {
        let mut occ = vec![0u8; self.modes.len()];
        for (m, n) in occupied {
            occ[self.mode_index(m)?] = *n;
        }
        Ok(self.amplitude(&occ))
    }

    pub fn mode_index(&self, mode: &ModeLabel) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m == mode)
            .ok_or_else(|| FockError::UnknownMode(mode.to_string()))
    }

    pub fn has_spatial(&self, spatial: &str) -> bool {
        self.modes.iter().any(|m| m.spatial == spatial)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= 1e-10
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= PRUNE {
            return Err(FockError::ZeroNorm);
        }
        let s = n.sqrt();
        let mut out = self.clone();
        for a in out.amps.values_mut() {
            *a /= s;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        for a in out.amps.values_mut() {
            *a *= factor;
        }
        out
    }

    /// `⟨self|other⟩`; both vectors must share the same mode list.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.modes, other.modes, "mode lists differ");
        self.amps
            .iter()
            .map(|(k, a)| a.conj() * other.amplitude(k))
            .sum()
    }

    /// `|⟨a|b⟩|² / (‖a‖²‖b‖²)`, insensitive to global phase.
    pub fn overlap(&self, other: &Self) -> f64 {
        let denom = self.norm_sqr() * other.norm_sqr();
        if denom <= PRUNE {
            return 0.0;
        }
        self.inner(other).norm_sqr() / denom
    }

    /// Total photon number of every term (`None` if terms differ).
    pub fn photon_number(&self) -> Option<u32> {
        let mut it = self
            .amps
            .keys()
            .map(|k| k.iter().map(|&n| n as u32).sum::<u32>());
        let first = it.next()?;
        it.all(|n| n == first).then_some(first)
    }

    /// Product state over the union of both mode lists.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        for m in &other.modes {
            if self.modes.contains(m) {
                return Err(FockError::DuplicateMode(m.to_string()));
            }
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        let mut amps = BTreeMap::new();
        for (k1, a1) in &self.amps {
            for (k2, a2) in &other.amps {
                let mut k = k1.clone();
                k.extend_from_slice(k2);
                amps.insert(k, a1 * a2);
            }
        }
        Ok(Self {
            modes,
            n_max: self.n_max.max(other.n_max),
            amps,
            truncated: self.truncated + other.truncated,
        })
    }

    /// Add an empty mode if not already present.
    pub fn with_mode(&self, mode: &ModeLabel) -> Self {
        if self.modes.contains(mode) {
            return self.clone();
        }
        let mut modes = self.modes.clone();
        modes.push(mode.clone());
        let amps = self
            .amps
            .iter()
            .map(|(k, a)| {
                let mut k = k.clone();
                k.push(0);
                (k, *a)
            })
            .collect();
        Self {
            modes,
            n_max: self.n_max,
            amps,
            truncated: self.truncated,
        }
    }

    /// Rename a spatial label on every mode that carries it.
    pub fn relabel_spatial(&self, from: &str, to: &str) -> Result<Self> {
        if !self.has_spatial(from) {
            return Err(FockError::UnknownSpatial(from.to_string()));
        }
        let mut out = self.clone();
        for m in out.modes.iter_mut().filter(|m| m.spatial == from) {
            m.spatial = to.to_string();
        }
        for (k, m) in out.modes.iter().enumerate() {
            if out.modes[..k].contains(m) {
                return Err(FockError::DuplicateMode(m.to_string()));
            }
        }
        Ok(out)
    }

    /// Move every photon of `spatial` from bin 0 to `bin`.
    pub fn rebin_spatial(&self, spatial: &str, bin: u8) -> Result<Self> {
        if !self.has_spatial(spatial) {
            return Err(FockError::UnknownSpatial(spatial.to_string()));
        }
        let mut out = self.clone();
        for p in Polarization::BOTH {
            let target = ModeLabel::new(spatial, p).with_bin(bin);
            out = out.with_mode(&target);
        }
        for p in Polarization::BOTH {
            let src = ModeLabel::new(spatial, p);
            let Ok(si) = out.mode_index(&src) else { continue };
            let ti = out.mode_index(&ModeLabel::new(spatial, p).with_bin(bin))?;
            let mut amps = BTreeMap::new();
            for (k, a) in &out.amps {
                let mut k = k.clone();
                let moved = k[si];
                k[si] = 0;
                k[ti] += moved;
                *amps.entry(k).or_default() += *a;
            }
            out.amps = amps;
        }
        Ok(out)
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm_sqr() > PRUNE);
    }
}

/// Apply `a†` on `mode`.
pub fn create(state: &FockVector, mode: &ModeLabel) -> Result<FockVector> {
    let i = state.mode_index(mode)?;
    let mut out = state.clone();
    out.amps.clear();
    for (k, a) in &state.amps {
        let n = k[i];
        let amp = a * ((n as f64) + 1.0).sqrt();
        if n >= state.n_max {
            out.truncated += amp.norm_sqr();
            continue;
        }
        let mut k = k.clone();
        k[i] += 1;
        *out.amps.entry(k).or_default() += amp;
    }
    Ok(out)
}

/// Apply a linear-optical map to the listed modes. Column `p` of `u` is the
/// image of input mode `modes[p]`.
pub fn apply_linear(state: &FockVector, modes: &[usize], u: &DMatrix<C64>) -> FockVector {
    let k = modes.len();
    assert_eq!((u.nrows(), u.ncols()), (k, k), "transform size");
    let mut cache: HashMap<Vec<u8>, Vec<(Vec<u8>, C64)>> = HashMap::new();
    let mut out = state.clone();
    out.amps.clear();
    for (occ, a) in &state.amps {
        let sub: Vec<u8> = modes.iter().map(|&m| occ[m]).collect();
        let expansion = cache
            .entry(sub.clone())
            .or_insert_with(|| expand_monomial(&sub, u));
        for (outsub, coef) in expansion.iter() {
            let amp = a * coef;
            if outsub.iter().any(|&n| n > state.n_max) {
                out.truncated += amp.norm_sqr();
                continue;
            }
            let mut key = occ.clone();
            for (&m, &n) in modes.iter().zip(outsub) {
                key[m] = n;
            }
            *out.amps.entry(key).or_default() += amp;
        }
    }
    out.prune();
    out
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

/// `Π_p (Σ_q U[q][p] a†_q)^{n_p} / √(Π n_p!) |0⟩` as amplitudes over output
/// occupations.
fn expand_monomial(input: &[u8], u: &DMatrix<C64>) -> Vec<(Vec<u8>, C64)> {
    let k = input.len();
    let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
    poly.insert(vec![0; k], C64::new(1.0, 0.0));
    for (p, &n) in input.iter().enumerate() {
        for _ in 0..n {
            let mut next = BTreeMap::new();
            for (mono, c) in &poly {
                for q in 0..k {
                    let w = u[(q, p)];
                    if w.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut m = mono.clone();
                    m[q] += 1;
                    *next.entry(m).or_default() += c * w;
                }
            }
            poly = next;
        }
    }
    let norm_in: f64 = input.iter().map(|&n| factorial(n)).product::<f64>().sqrt();
    poly.into_iter()
        .map(|(m, c)| {
            let norm_out: f64 = m.iter().map(|&n| factorial(n)).product::<f64>().sqrt();
            let amp = c * (norm_out / norm_in);
            (m, amp)
        })
        .filter(|(_, c)| c.norm_sqr() > PRUNE)
        .collect()
}

/// Two-mode beam-splitter matrix for intensity transmissivity `t`.
///
/// `U = [[√t, i√(1−t)e^{−iφ}], [i√(1−t)e^{iφ}, √t]]`; at `t = ½, φ = 0` this is
/// the symmetric splitter with `i` on reflection.
pub fn beam_splitter_matrix(transmissivity: f64, phase: f64) -> DMatrix<C64> {
    let t = transmissivity.sqrt();
    let r = (1.0 - transmissivity).sqrt();
    let i = C64::new(0.0, 1.0);
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(t, 0.0),
            i * r * C64::from_polar(1.0, -phase),
            i * r * C64::from_polar(1.0, phase),
            C64::new(t, 0.0),
        ],
    )
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(FockError::OutOfRange { name, value });
    }
    Ok(())
}

/// Beam splitter between two individual modes.
pub fn beam_splitter_modes(
    state: &FockVector,
    m1: &ModeLabel,
    m2: &ModeLabel,
    transmissivity: f64,
    phase: f64,
) -> Result<FockVector> {
    if m1 == m2 {
        return Err(FockError::IdenticalModes(m1.to_string()));
    }
    check_unit("transmissivity", transmissivity)?;
    let i1 = state.mode_index(m1)?;
    let i2 = state.mode_index(m2)?;
    Ok(apply_linear(
        state,
        &[i1, i2],
        &beam_splitter_matrix(transmissivity, phase),
    ))
}

/// Beam splitter between two spatial labels, acting on every (polarization,
/// bin) pair they carry. Missing partner modes are added empty.
pub fn beam_splitter(
    state: &FockVector,
    s1: &str,
    s2: &str,
    transmissivity: f64,
    phase: f64,
) -> Result<FockVector> {
    if s1 == s2 {
        return Err(FockError::IdenticalModes(s1.to_string()));
    }
    check_unit("transmissivity", transmissivity)?;
    for s in [s1, s2] {
        if !state.has_spatial(s) {
            return Err(FockError::UnknownSpatial(s.to_string()));
        }
    }
    let mut keys: Vec<(Polarization, u8)> = state
        .modes
        .iter()
        .filter(|m| m.spatial == s1 || m.spatial == s2)
        .map(|m| (m.pol, m.bin))
        .collect();
    keys.sort();
    keys.dedup();
    let mut out = state.clone();
    for (pol, bin) in keys {
        let m1 = ModeLabel::new(s1, pol).with_bin(bin);
        let m2 = ModeLabel::new(s2, pol).with_bin(bin);
        out = out.with_mode(&m1).with_mode(&m2);
        out = beam_splitter_modes(&out, &m1, &m2, transmissivity, phase)?;
    }
    Ok(out)
}

/// Phase `e^{iφ}` on every mode of a spatial label.
pub fn phase_shift(state: &FockVector, spatial: &str, phase: f64) -> Result<FockVector> {
    if !state.has_spatial(spatial) {
        return Err(FockError::UnknownSpatial(spatial.to_string()));
    }
    let idx: Vec<usize> = (0..state.modes.len())
        .filter(|&i| state.modes[i].spatial == spatial)
        .collect();
    let mut out = state.clone();
    for (k, a) in out.amps.iter_mut() {
        let n: u32 = idx.iter().map(|&i| k[i] as u32).sum();
        *a *= C64::from_polar(1.0, phase * n as f64);
    }
    Ok(out)
}

/// Polarization elements. Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WavePlate {
    Identity,
    QwpPlus45,
    QwpMinus45,
    /// Quarter-wave retarder at an arbitrary fast-axis angle.
    Qwp(f64),
    /// Eighth-wave retarder at an arbitrary fast-axis angle.
    Ewp(f64),
    /// Arbitrary Jones matrix, columns are the images of H and V.
    Jones([[C64; 2]; 2]),
}

fn retarder(theta: f64, delta: f64) -> [[C64; 2]; 2] {
    // R(−θ) · diag(e^{iδ/2}, e^{−iδ/2}) · R(θ), R(θ) = [[c, s], [−s, c]].
    let (s, c) = theta.sin_cos();
    let p = C64::from_polar(1.0, delta / 2.0);
    let m = p.conj();
    [
        [p * c * c + m * s * s, (p - m) * c * s],
        [(p - m) * c * s, p * s * s + m * c * c],
    ]
}

impl WavePlate {
    pub fn jones(&self) -> [[C64; 2]; 2] {
        let o = C64::new(1.0, 0.0);
        let z = C64::default();
        match *self {
            WavePlate::Identity => [[o, z], [z, o]],
            WavePlate::QwpPlus45 => retarder(FRAC_PI_4, FRAC_PI_2),
            WavePlate::QwpMinus45 => retarder(-FRAC_PI_4, FRAC_PI_2),
            WavePlate::Qwp(theta) => retarder(theta, FRAC_PI_2),
            WavePlate::Ewp(theta) => retarder(theta, FRAC_PI_4),
            WavePlate::Jones(j) => j,
        }
    }

    /// Jones matrix as a 2×2 mode transform.
    pub fn matrix(&self) -> DMatrix<C64> {
        let j = self.jones();
        DMatrix::from_row_slice(2, 2, &[j[0][0], j[0][1], j[1][0], j[1][1]])
    }
}

/// Apply a polarization element to every bin of a spatial label.
pub fn wave_plate(state: &FockVector, spatial: &str, element: WavePlate) -> Result<FockVector> {
    if !state.has_spatial(spatial) {
        return Err(FockError::UnknownSpatial(spatial.to_string()));
    }
    if element == WavePlate::Identity {
        return Ok(state.clone());
    }
    let mut bins: Vec<u8> = state
        .modes
        .iter()
        .filter(|m| m.spatial == spatial)
        .map(|m| m.bin)
        .collect();
    bins.sort_unstable();
    bins.dedup();
    let u = element.matrix();
    let mut out = state.clone();
    for bin in bins {
        let h = ModeLabel::h(spatial).with_bin(bin);
        let v = ModeLabel::v(spatial).with_bin(bin);
        out = out.with_mode(&h).with_mode(&v);
        let ih = out.mode_index(&h)?;
        let iv = out.mode_index(&v)?;
        out = apply_linear(&out, &[ih, iv], &u);
    }
    Ok(out)
}

/// Unnormalized two-mode-squeezed series
/// `sech²τ Σ_{n≤order} tanh(τ)^n/n! (K†)^n |0⟩`, `K† = a†_H b†_V − a†_V b†_H`.
///
/// Its squared norm approaches 1 as `order` grows.
pub fn spdc_series(
    a: &str,
    b: &str,
    tau: f64,
    order: usize,
    n_max: u8,
) -> Result<FockVector> {
    if tau < 0.0 || tau.is_nan() {
        return Err(FockError::NegativeTau(tau));
    }
    if order > n_max as usize {
        return Err(FockError::OrderExceedsTruncation { order, n_max });
    }
    let (ah, av, bh, bv) = (
        ModeLabel::h(a),
        ModeLabel::v(a),
        ModeLabel::h(b),
        ModeLabel::v(b),
    );
    let vac = FockVector::vacuum(vec![ah.clone(), av.clone(), bh.clone(), bv.clone()], n_max)?;
    let sech2 = 1.0 / tau.cosh().powi(2);
    let th = tau.tanh();
    let mut term = vac.clone();
    let mut total = vac.scaled(C64::new(sech2, 0.0));
    for n in 1..=order {
        let x = create(&create(&term, &ah)?, &bv)?;
        let y = create(&create(&term, &av)?, &bh)?;
        term = add(&x, &y.scaled(C64::new(-1.0, 0.0)));
        let coef = sech2 * th.powi(n as i32) / factorial(n as u8);
        total = add(&total, &term.scaled(C64::new(coef, 0.0)));
    }
    total.prune();
    Ok(total)
}

fn add(x: &FockVector, y: &FockVector) -> FockVector {
    debug_assert_eq!(x.modes, y.modes);
    let mut out = x.clone();
    for (k, a) in &y.amps {
        *out.amps.entry(k.clone()).or_default() += a;
    }
    out.truncated += y.truncated;
    out
}

/// Normalized SPDC state on spatial modes `a`, `b`.
pub fn spdc_source_on(a: &str, b: &str, tau: f64, order: usize, n_max: u8) -> Result<FockVector> {
    spdc_series(a, b, tau, order, n_max)?.normalized()
}

/// Normalized SPDC state over `(a,H),(a,V),(b,H),(b,V)`.
pub fn spdc_source(tau: f64, order: usize) -> Result<FockVector> {
    spdc_source_on("a", "b", tau, order, DEFAULT_N_MAX)
}

/// `1 − ‖series‖²`: the probability carried by pair numbers above `order`.
pub fn spdc_truncation_deficit(tau: f64, order: usize, n_max: u8) -> Result<f64> {
    Ok(1.0 - spdc_series("a", "b", tau, order, n_max)?.norm_sqr())
}

/// Probability of exactly `n` pairs: `(n+1) tanh^{2n}τ / cosh⁴τ`.
pub fn spdc_pair_probability(tau: f64, n: u32) -> f64 {
    (n as f64 + 1.0) * tau.tanh().powi(2 * n as i32) / tau.cosh().powi(4)
}

/// Weighted mixture of pure Fock vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ensemble {
    members: Vec<(f64, FockVector)>,
}

impl Ensemble {
    pub fn pure(state: FockVector) -> Self {
        Self {
            members: vec![(1.0, state)],
        }
    }

    pub fn from_members(members: Vec<(f64, FockVector)>) -> Self {
        Self { members }
    }

    pub fn members(&self) -> &[(f64, FockVector)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `Σ wᵢ ‖ψᵢ‖²`.
    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|(w, s)| w * s.norm_sqr()).sum()
    }

    /// Weighted truncation loss.
    pub fn truncated_weight(&self) -> f64 {
        self.members.iter().map(|(w, s)| w * s.truncated).sum()
    }

    pub fn map(&self, f: impl Fn(&FockVector) -> Result<FockVector>) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|(w, s)| Ok((*w, f(s)?)))
            .collect::<Result<_>>()?;
        Ok(Self { members })
    }

    /// Replace each member by a weighted sub-ensemble.
    pub fn flat_map(&self, f: impl Fn(&FockVector) -> Result<Ensemble>) -> Result<Self> {
        let mut members = Vec::new();
        for (w, s) in &self.members {
            for (w2, s2) in f(s)?.members {
                members.push((w * w2, s2));
            }
        }
        Ok(Self { members })
    }

    /// Concatenate ensembles with the given mixing weights.
    pub fn mix(parts: Vec<(f64, Ensemble)>) -> Self {
        let members = parts
            .into_iter()
            .flat_map(|(w, e)| e.members.into_iter().map(move |(w2, s)| (w * w2, s)))
            .filter(|(w, _)| *w > 0.0)
            .collect();
        Self { members }
    }

    pub fn attenuate(&self, mode: &ModeLabel, eta: f64) -> Result<Self> {
        self.flat_map(|s| attenuate(s, mode, eta))
    }
}

impl From<FockVector> for Ensemble {
    fn from(state: FockVector) -> Self {
        Ensemble::pure(state)
    }
}

fn binomial_coef(n: u8, k: u8) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Exact loss channel on one mode: couple to a fresh environment mode with a
/// beam splitter of transmissivity `eta`, then trace the environment out.
/// Members are grouped by the number of photons lost.
pub fn attenuate(state: &FockVector, mode: &ModeLabel, eta: f64) -> Result<Ensemble> {
    check_unit("eta", eta)?;
    let i = state.mode_index(mode)?;
    let mut groups: BTreeMap<u8, FockVector> = BTreeMap::new();
    for (occ, a) in &state.amps {
        let n = occ[i];
        for lost in 0..=n {
            let kept = n - lost;
            let amp = a
                * (binomial_coef(n, lost)
                    * eta.powi(kept as i32)
                    * (1.0 - eta).powi(lost as i32))
                .sqrt();
            if amp.norm_sqr() <= PRUNE {
                continue;
            }
            let g = groups.entry(lost).or_insert_with(|| {
                let mut e = state.clone();
                e.amps.clear();
                e
            });
            let mut k = occ.clone();
            k[i] = kept;
            *g.amps.entry(k).or_default() += amp;
        }
    }
    let members = groups
        .into_values()
        .filter_map(|g| {
            let w = g.norm_sqr();
            (w > PRUNE).then(|| {
                let scale = 1.0 / w.sqrt();
                let mut g = g.scaled(C64::new(scale, 0.0));
                g.truncated = state.truncated;
                (w, g)
            })
        })
        .collect();
    Ok(Ensemble { members })
}

/// Loss on both polarizations (all bins) of a spatial label.
pub fn attenuate_spatial(ens: &Ensemble, spatial: &str, eta: f64) -> Result<Ensemble> {
    let modes: Vec<ModeLabel> = ens
        .members
        .first()
        .map(|(_, s)| {
            s.modes
                .iter()
                .filter(|m| m.spatial == spatial)
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    if modes.is_empty() {
        return Err(FockError::UnknownSpatial(spatial.to_string()));
    }
    let mut out = ens.clone();
    for m in &modes {
        out = out.attenuate(m, eta)?;
    }
    Ok(out)
}

/// Pauli matrices as polarization elements: `[X, Y, Z]`.
pub fn pauli_plates() -> [WavePlate; 3] {
    let o = C64::new(1.0, 0.0);
    let z = C64::default();
    let i = C64::new(0.0, 1.0);
    [
        WavePlate::Jones([[z, o], [o, z]]),
        WavePlate::Jones([[z, -i], [i, z]]),
        WavePlate::Jones([[o, z], [z, -o]]),
    ]
}

/// Depolarizing channel `ρ → λρ + (1−λ)·I/2` on the polarization of a
/// spatial label, realized as a Pauli mixture with weights `(1+3λ)/4` and
/// `(1−λ)/4`. The same Pauli acts on every photon in the mode.
pub fn depolarize(ens: &Ensemble, spatial: &str, lambda: f64) -> Result<Ensemble> {
    check_unit("lambda", lambda)?;
    if lambda == 1.0 {
        return Ok(ens.clone());
    }
    let w_id = (1.0 + 3.0 * lambda) / 4.0;
    let w_p = (1.0 - lambda) / 4.0;
    ens.flat_map(|s| {
        let mut members = vec![(w_id, s.clone())];
        for p in pauli_plates() {
            members.push((w_p, wave_plate(s, spatial, p)?));
        }
        Ok(Ensemble::from_members(members))
    })
}

/// Draw an occupation tuple from `|amplitude|²` (the vector is treated as
/// normalized over its stored terms).
pub fn sample_occupation<R: Rng + ?Sized>(state: &FockVector, rng: &mut R) -> Occupation {
    let total = state.norm_sqr();
    let mut x = rng.random::<f64>() * total;
    let mut last = None;
    for (k, a) in &state.amps {
        x -= a.norm_sqr();
        last = Some(k);
        if x < 0.0 {
            return k.clone();
        }
    }
    last.cloned().unwrap_or_else(|| vec![0; state.modes.len()])
}

/// Sampling-mode loss: each photon in the listed modes survives with
/// probability `eta`.
pub fn thin_occupation<R: Rng + ?Sized>(
    occ: &[u8],
    modes: &[usize],
    eta: f64,
    rng: &mut R,
) -> Result<Occupation> {
    check_unit("eta", eta)?;
    let mut out = occ.to_vec();
    for &i in modes {
        let n = out[i] as u64;
        if n > 0 {
            let b = Binomial::new(n, eta).expect("eta validated");
            out[i] = b.sample(rng) as u8;
        }
    }
    Ok(out)
}

/// Threshold detectors, one per (spatial, polarization). Bins are merged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorBank {
    detectors: Vec<(String, Polarization)>,
}

impl DetectorBank {
    pub fn new(detectors: Vec<(String, Polarization)>) -> Self {
        Self { detectors }
    }

    /// H and V detectors for each spatial label, in order.
    pub fn for_spatials(spatials: &[&str]) -> Self {
        Self::new(
            spatials
                .iter()
                .flat_map(|s| Polarization::BOTH.map(|p| (s.to_string(), p)))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn detectors(&self) -> &[(String, Polarization)] {
        &self.detectors
    }

    pub fn position(&self, spatial: &str, pol: Polarization) -> Option<usize> {
        self.detectors
            .iter()
            .position(|(s, p)| s == spatial && *p == pol)
    }

    /// Map each mode of a register to its detector, if any.
    fn routing(&self, modes: &[ModeLabel]) -> Vec<Option<usize>> {
        modes
            .iter()
            .map(|m| self.position(&m.spatial, m.pol))
            .collect()
    }

    /// Photon counts per detector for an occupation over `modes`.
    pub fn counts(&self, modes: &[ModeLabel], occ: &[u8]) -> Vec<u8> {
        let mut c = vec![0u8; self.len()];
        for (r, &n) in self.routing(modes).iter().zip(occ) {
            if let Some(d) = r {
                c[*d] += n;
            }
        }
        c
    }

    pub fn pattern(&self, clicked: &[(&str, Polarization)]) -> DetectorPattern {
        let mut clicks = vec![false; self.len()];
        for (s, p) in clicked {
            let d = self
                .position(s, *p)
                .unwrap_or_else(|| panic!("{s}{p:?} is not in the bank"));
            clicks[d] = true;
        }
        DetectorPattern { clicks }
    }
}

/// Which detectors of a bank clicked; `mask` bit `i` is detector `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorPattern {
    pub clicks: Vec<bool>,
}

impl DetectorPattern {
    pub fn from_mask(mask: usize, len: usize) -> Self {
        Self {
            clicks: (0..len).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> usize {
        self.clicks
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| 1 << i)
            .sum()
    }

    pub fn click_count(&self) -> usize {
        self.clicks.iter().filter(|&&c| c).count()
    }
}

fn check_efficiencies(bank: &DetectorBank, eff: &[f64]) -> Result<()> {
    if eff.len() != bank.len() {
        return Err(FockError::EfficiencyCount(eff.len(), bank.len()));
    }
    for &e in eff {
        check_unit("efficiency", e)?;
    }
    Ok(())
}

/// Distribution over all `2^k` click patterns, indexed by
/// [`DetectorPattern::mask`]. Each photon is detected independently with the
/// efficiency of its detector; a detector clicks on one or more detections.
pub fn pattern_distribution(ens: &Ensemble, bank: &DetectorBank, eff: &[f64]) -> Result<Vec<f64>> {
    check_efficiencies(bank, eff)?;
    // Detectors are diagonal in the Fock basis: only per-detector photon
    // counts matter, so aggregate weights first.
    let mut by_counts: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (w, s) in &ens.members {
        let routing = bank.routing(&s.modes);
        for (occ, a) in &s.amps {
            let mut c = vec![0u8; bank.len()];
            for (r, &n) in routing.iter().zip(occ) {
                if let Some(d) = r {
                    c[*d] += n;
                }
            }
            *by_counts.entry(c).or_default() += w * a.norm_sqr();
        }
    }
    let k = bank.len();
    let mut dist = vec![0.0; 1 << k];
    let mut local = vec![0.0; 1 << k];
    for (counts, p) in by_counts {
        local.iter_mut().for_each(|x| *x = 0.0);
        local[0] = p;
        let mut size = 1usize;
        for (d, &n) in counts.iter().enumerate() {
            let silent = (1.0 - eff[d]).powi(n as i32);
            for m in 0..size {
                let base = local[m];
                local[m] = base * silent;
                local[m | 1 << d] = base * (1.0 - silent);
            }
            size <<= 1;
        }
        for (o, l) in dist.iter_mut().zip(&local) {
            *o += l;
        }
    }
    Ok(dist)
}

pub fn pattern_probability(
    ens: &Ensemble,
    bank: &DetectorBank,
    pattern: &DetectorPattern,
    eff: &[f64],
) -> Result<f64> {
    Ok(pattern_distribution(ens, bank, eff)?[pattern.mask()])
}

/// Sampling-mode detection of a single occupation.
pub fn sample_clicks<R: Rng + ?Sized>(
    modes: &[ModeLabel],
    occ: &[u8],
    bank: &DetectorBank,
    eff: &[f64],
    rng: &mut R,
) -> Result<DetectorPattern> {
    check_efficiencies(bank, eff)?;
    let counts = bank.counts(modes, occ);
    let clicks = counts
        .iter()
        .zip(eff)
        .map(|(&n, &e)| (0..n).any(|_| rng.random::<f64>() < e))
        .collect();
    Ok(DetectorPattern { clicks })
}

/// `(|H⟩_a + i|V⟩_a)/√2`-style single-photon helper: one photon in the
/// superposition `ch·H + cv·V` of a spatial mode.
pub fn single_photon(spatial: &str, ch: C64, cv: C64, n_max: u8) -> Result<FockVector> {
    FockVector::from_terms(
        modes_for(&[spatial]),
        n_max,
        [(vec![1, 0], ch), (vec![0, 1], cv)],
    )
}

/// Two photons in a polarization Bell state across spatial modes `x`, `y`.
pub fn bell_pair(kind: crate::qstate::BellKind, x: &str, y: &str, n_max: u8) -> Result<FockVector> {
    let amps = kind.amplitudes();
    let modes = modes_for(&[x, y]);
    // (xH, xV, yH, yV); amplitudes ordered HH, HV, VH, VV.
    let terms = [
        (vec![1, 0, 1, 0], amps[0]),
        (vec![1, 0, 0, 1], amps[1]),
        (vec![0, 1, 1, 0], amps[2]),
        (vec![0, 1, 0, 1], amps[3]),
    ];
    let mut s = FockVector::from_terms(modes, n_max, terms)?;
    s.prune();
    Ok(s)
}
