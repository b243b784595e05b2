//! Dense polarization-qubit registers and density matrices.
//!
//! Basis convention: `|H⟩ ↦ 0`, `|V⟩ ↦ 1`, qubit 0 is the most significant bit
//! of the amplitude index. Photon `k` of the four-photon protocol is qubit
//! `k - 1`. Registers are capped at [`MAX_QUBITS`] qubits (dimension 16), so
//! everything is stored densely.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Largest register the crate builds.
pub const MAX_QUBITS: usize = 4;

const NORM_TOL: f64 = 1e-12;
const ZERO_PROB: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QStateError {
    #[error("register of {requested} qubits exceeds the cap of {cap}")]
    CapacityExceeded { requested: usize, cap: usize },
    #[error("qubit index {index} out of range for a {n}-qubit register")]
    QubitOutOfRange { index: usize, n: usize },
    #[error("qubit index {0} listed twice")]
    DuplicateQubit(usize),
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation needs a {expected}-qubit input, got {found}")]
    WrongQubitCount { expected: usize, found: usize },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("matrix is not a valid density matrix: {0}")]
    InvalidDensityMatrix(String),
}

pub type Result<T> = std::result::Result<T, QStateError>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The four Bell states with the sign conventions of the singlet source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellKind {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellKind {
    /// Fixed ordering used by [`bell_decompose_14_23`].
    pub const ALL: [BellKind; 4] = [
        BellKind::PsiPlus,
        BellKind::PsiMinus,
        BellKind::PhiPlus,
        BellKind::PhiMinus,
    ];

    pub fn index(self) -> usize {
        match self {
            BellKind::PsiPlus => 0,
            BellKind::PsiMinus => 1,
            BellKind::PhiPlus => 2,
            BellKind::PhiMinus => 3,
        }
    }

    /// Amplitudes over (HH, HV, VH, VV).
    pub fn amplitudes(self) -> [C64; 4] {
        let s = FRAC_1_SQRT_2;
        let z = c(0.0, 0.0);
        match self {
            BellKind::PsiPlus => [z, c(s, 0.0), c(s, 0.0), z],
            BellKind::PsiMinus => [z, c(s, 0.0), c(-s, 0.0), z],
            BellKind::PhiPlus => [c(s, 0.0), z, z, c(s, 0.0)],
            BellKind::PhiMinus => [c(s, 0.0), z, z, c(-s, 0.0)],
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BellKind::PsiPlus => "Psi+",
            BellKind::PsiMinus => "Psi-",
            BellKind::PhiPlus => "Phi+",
            BellKind::PhiMinus => "Phi-",
        };
        f.write_str(s)
    }
}

/// Pauli axes with a fixed eigenbasis: Z ↔ H/V, X ↔ +/−, Y ↔ R/L.
///
/// The first eigenvector of each pair is the +1 eigenvector; in particular
/// `|R⟩ = (|H⟩ + i|V⟩)/√2` is the +1 eigenvector of Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliAxis {
    Z,
    X,
    Y,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::Z, PauliAxis::X, PauliAxis::Y];

    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = c(1.0, 0.0);
        let z = c(0.0, 0.0);
        match self {
            PauliAxis::Z => [[o, z], [z, -o]],
            PauliAxis::X => [[z, o], [o, z]],
            PauliAxis::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
        }
    }

    /// Eigenvector for eigenvalue +1 (`positive = true`) or −1.
    pub fn eigenstate(self, positive: bool) -> QubitRegisterState {
        let s = FRAC_1_SQRT_2;
        let sign = if positive { 1.0 } else { -1.0 };
        let amps = match self {
            PauliAxis::Z if positive => vec![c(1.0, 0.0), c(0.0, 0.0)],
            PauliAxis::Z => vec![c(0.0, 0.0), c(1.0, 0.0)],
            PauliAxis::X => vec![c(s, 0.0), c(sign * s, 0.0)],
            PauliAxis::Y => vec![c(s, 0.0), c(0.0, sign * s)],
        };
        QubitRegisterState { n: 1, amps }
    }

    /// Polarization basis name as used in reports.
    pub fn basis_label(self) -> &'static str {
        match self {
            PauliAxis::Z => "H/V",
            PauliAxis::X => "+/-",
            PauliAxis::Y => "R/L",
        }
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Pure state of `n` polarization qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitRegisterState {
    n: usize,
    amps: Vec<C64>,
}

impl QubitRegisterState {
    pub fn from_amplitudes(n: usize, amps: Vec<C64>) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(QStateError::CapacityExceeded {
                requested: n,
                cap: MAX_QUBITS,
            });
        }
        if amps.len() != 1 << n {
            return Err(QStateError::DimensionMismatch {
                expected: 1 << n,
                found: amps.len(),
            });
        }
        Ok(Self { n, amps })
    }

    /// Computational basis state, `bits[0]` is qubit 0 (`false` = H).
    pub fn basis(bits: &[bool]) -> Result<Self> {
        let n = bits.len();
        let mut amps = vec![C64::default(); 1 << n];
        let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        amps[idx] = c(1.0, 0.0);
        Self::from_amplitudes(n, amps)
    }

    pub fn h() -> Self {
        PauliAxis::Z.eigenstate(true)
    }
    pub fn v() -> Self {
        PauliAxis::Z.eigenstate(false)
    }
    pub fn plus() -> Self {
        PauliAxis::X.eigenstate(true)
    }
    pub fn minus() -> Self {
        PauliAxis::X.eigenstate(false)
    }
    pub fn r() -> Self {
        PauliAxis::Y.eigenstate(true)
    }
    pub fn l() -> Self {
        PauliAxis::Y.eigenstate(false)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm <= ZERO_PROB {
            return Err(QStateError::ZeroNorm);
        }
        Ok(Self {
            n: self.n,
            amps: self.amps.iter().map(|a| a / norm).collect(),
        })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.n != other.n {
            return Err(QStateError::DimensionMismatch {
                expected: self.amps.len(),
                found: other.amps.len(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Copy with the first non-negligible amplitude rotated to the positive
    /// real axis, for amplitude-level comparisons.
    pub fn canonical_phase(&self) -> Self {
        let phase = self
            .amps
            .iter()
            .find(|a| a.norm() > 1e-12)
            .map(|a| a.conj() / a.norm())
            .unwrap_or(c(1.0, 0.0));
        Self {
            n: self.n,
            amps: self.amps.iter().map(|a| a * phase).collect(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    /// Reorder qubits: output qubit `k` is input qubit `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        check_indices(order, self.n)?;
        if order.len() != self.n {
            return Err(QStateError::WrongQubitCount {
                expected: self.n,
                found: order.len(),
            });
        }
        let mut amps = vec![C64::default(); self.amps.len()];
        for (idx, a) in self.amps.iter().enumerate() {
            let mut out = 0usize;
            for &src in order {
                out = (out << 1) | bit(idx, src, self.n);
            }
            amps[out] = *a;
        }
        Ok(Self { n: self.n, amps })
    }
}

fn bit(idx: usize, qubit: usize, n: usize) -> usize {
    (idx >> (n - 1 - qubit)) & 1
}

fn check_indices(qubits: &[usize], n: usize) -> Result<()> {
    for (k, &q) in qubits.iter().enumerate() {
        if q >= n {
            return Err(QStateError::QubitOutOfRange { index: q, n });
        }
        if qubits[..k].contains(&q) {
            return Err(QStateError::DuplicateQubit(q));
        }
    }
    Ok(())
}

/// Two-qubit Bell state.
pub fn bell_state(kind: BellKind) -> QubitRegisterState {
    QubitRegisterState {
        n: 2,
        amps: kind.amplitudes().to_vec(),
    }
}

/// Kronecker product under the default qubit cap.
pub fn tensor(a: &QubitRegisterState, b: &QubitRegisterState) -> Result<QubitRegisterState> {
    tensor_with_cap(a, b, MAX_QUBITS)
}

pub fn tensor_with_cap(
    a: &QubitRegisterState,
    b: &QubitRegisterState,
    cap: usize,
) -> Result<QubitRegisterState> {
    let n = a.n + b.n;
    if n > cap.min(MAX_QUBITS) {
        return Err(QStateError::CapacityExceeded {
            requested: n,
            cap: cap.min(MAX_QUBITS),
        });
    }
    let amps = a
        .amps
        .iter()
        .flat_map(|x| b.amps.iter().map(move |y| x * y))
        .collect();
    Ok(QubitRegisterState { n, amps })
}

/// The source state `|Ψ⁻⟩₁₂ ⊗ |Ψ⁻⟩₃₄`.
pub fn four_photon_source_state() -> QubitRegisterState {
    let singlet = bell_state(BellKind::PsiMinus);
    tensor(&singlet, &singlet).expect("4 qubits fit the cap")
}

/// Result of a partial projective measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub probability: f64,
    /// Renormalized state of the unmeasured qubits (in ascending index
    /// order); `None` flags a zero-probability branch.
    pub remaining: Option<QubitRegisterState>,
}

impl Projection {
    pub fn is_empty(&self) -> bool {
        self.remaining.is_none()
    }
}

/// Project `qubits` (listed in the projector's own qubit order) onto
/// `projector`.
pub fn project(
    state: &QubitRegisterState,
    qubits: &[usize],
    projector: &QubitRegisterState,
) -> Result<Projection> {
    check_indices(qubits, state.n)?;
    if projector.n != qubits.len() {
        return Err(QStateError::WrongQubitCount {
            expected: qubits.len(),
            found: projector.n,
        });
    }
    let rest: Vec<usize> = (0..state.n).filter(|q| !qubits.contains(q)).collect();
    let mut amps = vec![C64::default(); 1 << rest.len()];
    for (idx, a) in state.amps.iter().enumerate() {
        let m = qubits
            .iter()
            .fold(0usize, |acc, &q| (acc << 1) | bit(idx, q, state.n));
        let r = rest
            .iter()
            .fold(0usize, |acc, &q| (acc << 1) | bit(idx, q, state.n));
        amps[r] += projector.amps[m].conj() * a;
    }
    let probability: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if probability <= ZERO_PROB {
        return Ok(Projection {
            probability: 0.0,
            remaining: None,
        });
    }
    let norm = probability.sqrt();
    let remaining = QubitRegisterState {
        n: rest.len(),
        amps: amps.into_iter().map(|a| a / norm).collect(),
    };
    Ok(Projection {
        probability,
        remaining: Some(remaining),
    })
}

/// Bell-basis coefficients of a four-qubit state, indexed
/// `[pair (1,4) kind][pair (2,3) kind]` in [`BellKind::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BellPairCoefficients(pub [[C64; 4]; 4]);

impl BellPairCoefficients {
    pub fn get(&self, k14: BellKind, k23: BellKind) -> C64 {
        self.0[k14.index()][k23.index()]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    /// Rebuild the four-qubit state from its coefficients.
    pub fn reconstruct(&self) -> QubitRegisterState {
        let mut amps = vec![C64::default(); 16];
        for k14 in BellKind::ALL {
            for k23 in BellKind::ALL {
                let coef = self.get(k14, k23);
                let basis = bell_pair_basis_vector(k14, k23);
                for (a, b) in amps.iter_mut().zip(&basis) {
                    *a += coef * b;
                }
            }
        }
        QubitRegisterState { n: 4, amps }
    }
}

/// `|B_k14⟩₁₄ ⊗ |B_k23⟩₂₃` laid out in photon order 1,2,3,4.
fn bell_pair_basis_vector(k14: BellKind, k23: BellKind) -> Vec<C64> {
    let b14 = k14.amplitudes();
    let b23 = k23.amplitudes();
    (0..16usize)
        .map(|idx| {
            let (q1, q2, q3, q4) = (bit(idx, 0, 4), bit(idx, 1, 4), bit(idx, 2, 4), bit(idx, 3, 4));
            b14[(q1 << 1) | q4] * b23[(q2 << 1) | q3]
        })
        .collect()
}

pub fn bell_decompose_14_23(state: &QubitRegisterState) -> Result<BellPairCoefficients> {
    if state.n != 4 {
        return Err(QStateError::WrongQubitCount {
            expected: 4,
            found: state.n,
        });
    }
    let mut out = [[C64::default(); 4]; 4];
    for k14 in BellKind::ALL {
        for k23 in BellKind::ALL {
            let basis = bell_pair_basis_vector(k14, k23);
            out[k14.index()][k23.index()] = basis
                .iter()
                .zip(&state.amps)
                .map(|(b, a)| b.conj() * a)
                .sum();
        }
    }
    Ok(BellPairCoefficients(out))
}

/// Mixed state of `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian and unit trace within 1e-12,
    /// eigenvalues ≥ −1e-10.
    pub fn new(n: usize, matrix: DMatrix<C64>) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(QStateError::CapacityExceeded {
                requested: n,
                cap: MAX_QUBITS,
            });
        }
        let dim = 1 << n;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QStateError::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let rho = Self { n, matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_pure(state: &QubitRegisterState) -> Self {
        let dim = state.amps.len();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| state.amps[i] * state.amps[j].conj());
        Self { n: state.n, matrix }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let dim = 1 << n;
        Self {
            n,
            matrix: DMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0),
        }
    }

    /// Convex combination of pure states; weights are renormalized.
    pub fn mixture(parts: &[(f64, QubitRegisterState)]) -> Result<Self> {
        let first = parts.first().ok_or(QStateError::ZeroNorm)?;
        let n = first.1.n;
        let dim = 1 << n;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if total <= 0.0 {
            return Err(QStateError::ZeroNorm);
        }
        let mut matrix = DMatrix::zeros(dim, dim);
        for (w, s) in parts {
            if s.n != n {
                return Err(QStateError::DimensionMismatch {
                    expected: dim,
                    found: s.amps.len(),
                });
            }
            matrix += Self::from_pure(s).matrix * c(w / total, 0.0);
        }
        Ok(Self { n, matrix })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        // Hermitian up to rounding; symmetrize before the solver.
        let h = (&self.matrix + self.matrix.adjoint()) * c(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let herm_err = (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm_err > NORM_TOL {
            return Err(QStateError::InvalidDensityMatrix(format!(
                "not Hermitian (max deviation {herm_err:e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(QStateError::InvalidDensityMatrix(format!("trace {tr}")));
        }
        if let Some(min) = self.eigenvalues().into_iter().reduce(f64::min) {
            if min < -1e-10 {
                return Err(QStateError::InvalidDensityMatrix(format!(
                    "negative eigenvalue {min:e}"
                )));
            }
        }
        Ok(())
    }

    /// `Tr(ρ · op)`.
    pub fn expectation(&self, op: &DMatrix<C64>) -> Result<C64> {
        if op.nrows() != self.matrix.nrows() || op.ncols() != self.matrix.ncols() {
            return Err(QStateError::DimensionMismatch {
                expected: self.matrix.nrows(),
                found: op.nrows(),
            });
        }
        Ok((&self.matrix * op).trace())
    }

    /// Largest element-wise deviation from another density matrix.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.n != other.n {
            return f64::INFINITY;
        }
        (&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Reduced state over `keep` (kept qubits retain ascending index order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(QStateError::WrongQubitCount {
            expected: 1,
            found: 0,
        });
    }
    check_indices(keep, rho.n)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    let traced: Vec<usize> = (0..rho.n).filter(|q| !kept.contains(q)).collect();
    let n = rho.n;
    let dk = 1 << kept.len();
    let compose = |k: usize, t: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in kept.iter().enumerate() {
            let b = (k >> (kept.len() - 1 - pos)) & 1;
            idx |= b << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let b = (t >> (traced.len() - 1 - pos)) & 1;
            idx |= b << (n - 1 - q);
        }
        idx
    };
    let mut out = DMatrix::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C64::default();
            for t in 0..(1usize << traced.len()) {
                acc += rho.matrix[(compose(i, t), compose(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(DensityMatrix {
        n: kept.len(),
        matrix: out,
    })
}

fn two_qubit_pauli(axis: PauliAxis) -> DMatrix<C64> {
    let p = axis.matrix();
    DMatrix::from_fn(4, 4, |i, j| p[i >> 1][j >> 1] * p[i & 1][j & 1])
}

/// `Tr(ρ · σ_axis ⊗ σ_axis)` for a two-qubit state.
pub fn pauli_correlation(rho: &DensityMatrix, axis: PauliAxis) -> Result<f64> {
    if rho.n != 2 {
        return Err(QStateError::WrongQubitCount {
            expected: 2,
            found: rho.n,
        });
    }
    Ok(rho.expectation(&two_qubit_pauli(axis))?.re)
}

/// `⟨target|ρ|target⟩`.
pub fn fidelity(rho: &DensityMatrix, target: &QubitRegisterState) -> Result<f64> {
    if rho.n != target.n {
        return Err(QStateError::DimensionMismatch {
            expected: rho.matrix.nrows(),
            found: target.amps.len(),
        });
    }
    let dim = target.amps.len();
    let mut acc = C64::default();
    for i in 0..dim {
        for j in 0..dim {
            acc += target.amps[i].conj() * rho.matrix[(i, j)] * target.amps[j];
        }
    }
    Ok(acc.re)
}

/// Expectation of `½·I − |target⟩⟨target|`; negative certifies entanglement.
pub fn witness_value(rho: &DensityMatrix, target: &QubitRegisterState) -> Result<f64> {
    Ok(witness_from_fidelity(fidelity(rho, target)?))
}

pub fn witness_from_fidelity(fidelity: f64) -> f64 {
    0.5 - fidelity
}
