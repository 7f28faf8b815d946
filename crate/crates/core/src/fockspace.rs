//! Truncated Fock-space algebra: ladder operators, coherent and cat states,
//! composite registers and projective qubit measurement.
//!
//! Index packing is big-endian with qubits first: qubit 0 is the most
//! significant bit of the qubit index, and field modes follow in order.
//! A state's flat index is `qubit_bits * field_dim + field_index`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Outcomes with probability at or below this are reported as impossible.
pub const IMPOSSIBLE_PROBABILITY: f64 = 1e-24;

/// Largest tail mass a truncated coherent state may drop.
pub const MAX_TAIL_MASS: f64 = 1e-10;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("truncation inadequate: |alpha|^2 = {alpha_sq}, fock_dim = {fock_dim}, tail mass {tail:e}")]
    TruncationInadequate { alpha_sq: f64, fock_dim: usize, tail: f64 },
    #[error("degenerate state: {0}")]
    Degenerate(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Shape of a register: `n_qubits` two-level systems followed by zero or
/// more truncated bosonic modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceLayout {
    n_qubits: usize,
    modes: Vec<usize>,
}

impl SpaceLayout {
    /// Qubits plus one field mode truncated at `fock_dim` levels.
    pub fn new(n_qubits: usize, fock_dim: usize) -> Result<Self, FockError> {
        Self::with_modes(n_qubits, &[fock_dim])
    }

    /// Qubits plus several field modes, e.g. the two-mode resonator.
    pub fn with_modes(n_qubits: usize, modes: &[usize]) -> Result<Self, FockError> {
        if modes.is_empty() {
            return Err(FockError::InvalidDimension("at least one field mode required".into()));
        }
        if let Some(&d) = modes.iter().find(|&&d| d < 2) {
            return Err(FockError::InvalidDimension(format!("fock_dim {d} < 2")));
        }
        let layout = SpaceLayout { n_qubits, modes: modes.to_vec() };
        layout.checked_dim()?;
        Ok(layout)
    }

    /// A bare qubit register with no field factor.
    pub fn qubits(n_qubits: usize) -> Result<Self, FockError> {
        let layout = SpaceLayout { n_qubits, modes: Vec::new() };
        layout.checked_dim()?;
        Ok(layout)
    }

    /// A single field mode with no qubits.
    pub fn field(fock_dim: usize) -> Result<Self, FockError> {
        Self::new(0, fock_dim)
    }

    fn checked_dim(&self) -> Result<usize, FockError> {
        let q = 1usize
            .checked_shl(self.n_qubits as u32)
            .filter(|_| self.n_qubits < 40)
            .ok_or_else(|| FockError::InvalidDimension(format!("{} qubits", self.n_qubits)))?;
        self.modes
            .iter()
            .try_fold(q, |acc, &d| acc.checked_mul(d))
            .filter(|&d| d <= 1 << 24)
            .ok_or_else(|| FockError::InvalidDimension("total dimension too large".into()))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Truncation of the first field mode (1 when there is no field).
    pub fn fock_dim(&self) -> usize {
        self.modes.first().copied().unwrap_or(1)
    }

    pub fn qubit_dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Dimension of all field modes together.
    pub fn field_dim(&self) -> usize {
        self.modes.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.qubit_dim() * self.field_dim()
    }

    /// Flat index of (qubit bit pattern, field index).
    pub fn index(&self, qubit_bits: usize, field_index: usize) -> usize {
        qubit_bits * self.field_dim() + field_index
    }

    /// Bit value of qubit `j` inside a flat index.
    pub fn qubit_bit(&self, flat: usize, j: usize) -> usize {
        let q = flat / self.field_dim();
        (q >> (self.n_qubits - 1 - j)) & 1
    }
}

/// Normalized (or explicitly unnormalized) complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: SpaceLayout,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn new(layout: SpaceLayout, amps: DVector<C64>) -> Result<Self, FockError> {
        if amps.len() != layout.dim() {
            return Err(FockError::LayoutMismatch(format!(
                "{} amplitudes for dimension {}",
                amps.len(),
                layout.dim()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FockError::InvalidArgument("non-finite amplitude".into()));
        }
        Ok(StateVector { layout, amps })
    }

    pub fn basis(layout: SpaceLayout, index: usize) -> Result<Self, FockError> {
        if index >= layout.dim() {
            return Err(FockError::InvalidArgument(format!("basis index {index} out of range")));
        }
        let mut amps = DVector::from_element(layout.dim(), ZERO);
        amps[index] = ONE;
        Ok(StateVector { layout, amps })
    }

    /// Computational-basis qubit |0⟩ or |1⟩.
    pub fn qubit(bit: u8) -> Result<Self, FockError> {
        if bit > 1 {
            return Err(FockError::InvalidArgument(format!("qubit bit {bit}")));
        }
        Self::basis(SpaceLayout::qubits(1)?, bit as usize)
    }

    /// Dressed qubit state, see [`Dressed`].
    pub fn dressed(which: Dressed) -> Self {
        let v = which.components();
        StateVector {
            layout: SpaceLayout { n_qubits: 1, modes: Vec::new() },
            amps: DVector::from_vec(vec![v[0], v[1]]),
        }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// Unit norm with the first significant amplitude made real-positive.
    pub fn normalize(&self) -> Result<Self, FockError> {
        let scaled = self.rescaled()?;
        let peak = scaled.amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let lead = scaled
            .amps
            .iter()
            .find(|z| z.norm() > 1e-12 * peak)
            .copied()
            .unwrap_or(ONE);
        let phase = lead.conj() / lead.norm();
        Ok(StateVector { layout: scaled.layout, amps: scaled.amps * phase })
    }

    /// Unit norm, phase untouched.
    pub fn rescaled(&self) -> Result<Self, FockError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(FockError::Degenerate(format!("cannot normalize vector of norm {n}")));
        }
        Ok(StateVector { layout: self.layout.clone(), amps: &self.amps / C64::new(n, 0.0) })
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64, FockError> {
        self.same_layout(other)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn expectation(&self, op: &DenseOperator) -> Result<C64, FockError> {
        let v = op.apply(self)?;
        Ok(self.amps.dotc(&v.amps))
    }

    /// ⟨a†a⟩ of field mode 0 divided by the squared norm.
    pub fn mean_photon_number(&self) -> f64 {
        let fd = self.layout.field_dim();
        let inner = fd / self.layout.fock_dim().max(1);
        let mut acc = 0.0;
        for (i, z) in self.amps.iter().enumerate() {
            let n = (i % fd) / inner;
            acc += n as f64 * z.norm_sqr();
        }
        acc / self.amps.norm_squared()
    }

    fn same_layout(&self, other: &StateVector) -> Result<(), FockError> {
        if self.layout != other.layout {
            return Err(FockError::LayoutMismatch(format!("{:?} vs {:?}", self.layout, other.layout)));
        }
        Ok(())
    }
}

/// The rotated qubit basis: |−⟩ = (|0⟩+|1⟩)/√2, |+⟩ = (|0⟩−|1⟩)/√2, so
/// that |0⟩ = (|−⟩+|+⟩)/√2 and |1⟩ = (|−⟩−|+⟩)/√2.
///
/// With the Josephson term written as `ν_a σ_x`, |−⟩ carries the σ_x
/// eigenvalue +1 and |+⟩ carries −1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dressed {
    Plus,
    Minus,
}

impl Dressed {
    pub const BOTH: [Dressed; 2] = [Dressed::Minus, Dressed::Plus];

    /// Eigenvalue of σ_x (the rotating-frame S_z).
    pub fn sz(self) -> f64 {
        match self {
            Dressed::Minus => 1.0,
            Dressed::Plus => -1.0,
        }
    }

    /// Computational-basis components (⟨0|s⟩, ⟨1|s⟩).
    pub fn components(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Dressed::Minus => [C64::new(h, 0.0), C64::new(h, 0.0)],
            Dressed::Plus => [C64::new(h, 0.0), C64::new(-h, 0.0)],
        }
    }
}

/// Complex square matrix on a layout, with an optional verified Hermitian flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    layout: SpaceLayout,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl DenseOperator {
    pub fn new(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self, FockError> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(FockError::LayoutMismatch(format!(
                "{}x{} matrix for dimension {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DenseOperator { layout, matrix, hermitian: false })
    }

    /// Flags the operator Hermitian after checking ‖M − M†‖_max against
    /// 1e-12 relative to max(1, ‖M‖_max).
    pub fn hermitian(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self, FockError> {
        let mut op = Self::new(layout, matrix)?;
        let defect = op.hermiticity_defect();
        let scale = op.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if defect > 1e-12 * scale {
            return Err(FockError::InvalidArgument(format!("not Hermitian: defect {defect:e}")));
        }
        op.hermitian = true;
        Ok(op)
    }

    /// Sets the flag when the matrix passes the Hermiticity check, leaves
    /// it unset otherwise.
    pub fn auto(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self, FockError> {
        let op = Self::new(layout, matrix)?;
        let scale = op.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let hermitian = op.hermiticity_defect() <= 1e-12 * scale;
        Ok(DenseOperator { hermitian, ..op })
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        DenseOperator { layout, matrix: DMatrix::identity(d, d), hermitian: true }
    }

    pub fn zeros(layout: SpaceLayout) -> Self {
        let d = layout.dim();
        DenseOperator { layout, matrix: DMatrix::zeros(d, d), hermitian: true }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn adjoint(&self) -> Self {
        DenseOperator { layout: self.layout.clone(), matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector, FockError> {
        if psi.layout != self.layout {
            return Err(FockError::LayoutMismatch("operator and state layouts differ".into()));
        }
        Ok(StateVector { layout: psi.layout.clone(), amps: &self.matrix * &psi.amps })
    }

    pub fn scaled(&self, s: C64) -> Self {
        let hermitian = self.hermitian && s.im == 0.0;
        DenseOperator { layout: self.layout.clone(), matrix: &self.matrix * s, hermitian }
    }

    pub fn plus(&self, other: &DenseOperator) -> Result<Self, FockError> {
        self.check(other)?;
        Ok(DenseOperator {
            layout: self.layout.clone(),
            matrix: &self.matrix + &other.matrix,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn minus(&self, other: &DenseOperator) -> Result<Self, FockError> {
        self.plus(&other.scaled(C64::new(-1.0, 0.0)))
    }

    pub fn compose(&self, other: &DenseOperator) -> Result<Self, FockError> {
        self.check(other)?;
        Ok(DenseOperator { layout: self.layout.clone(), matrix: &self.matrix * &other.matrix, hermitian: false })
    }

    fn check(&self, other: &DenseOperator) -> Result<(), FockError> {
        if self.layout != other.layout {
            return Err(FockError::LayoutMismatch("operator layouts differ".into()));
        }
        Ok(())
    }
}

/// The three ladder operators of one truncated mode.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub a: DenseOperator,
    pub a_dagger: DenseOperator,
    pub number: DenseOperator,
}

pub fn annihilation_matrix(fock_dim: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(fock_dim, fock_dim);
    for n in 1..fock_dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn ladder_operators(fock_dim: usize) -> Result<Ladder, FockError> {
    let layout = SpaceLayout::field(fock_dim)?;
    let a = annihilation_matrix(fock_dim);
    let ad = a.adjoint();
    // Exact integers on the diagonal rather than the rounded product a†a.
    let num = DMatrix::from_fn(fock_dim, fock_dim, |r, c| if r == c { C64::new(r as f64, 0.0) } else { ZERO });
    Ok(Ladder {
        a: DenseOperator::new(layout.clone(), a)?,
        a_dagger: DenseOperator::new(layout.clone(), ad)?,
        number: DenseOperator::hermitian(layout, num)?,
    })
}

pub fn pauli_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> DMatrix<C64> {
    let i = C64::new(0.0, 1.0);
    DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO])
}

pub fn pauli_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Raising operator of the dressed basis, |−⟩⟨+| in computational components.
pub fn dressed_raising() -> DMatrix<C64> {
    let m = Dressed::Minus.components();
    let p = Dressed::Plus.components();
    DMatrix::from_fn(2, 2, |r, c| m[r] * p[c].conj())
}

/// Unitary whose columns are |−⟩, |+⟩; `Wᴴ M W` expresses `M` in the dressed basis.
pub fn dressed_basis() -> DMatrix<C64> {
    let m = Dressed::Minus.components();
    let p = Dressed::Plus.components();
    DMatrix::from_row_slice(2, 2, &[m[0], p[0], m[1], p[1]])
}

/// Embeds a 2×2 operator on qubit `j` of `layout`.
pub fn qubit_operator(layout: &SpaceLayout, j: usize, op: &DMatrix<C64>) -> Result<DMatrix<C64>, FockError> {
    if j >= layout.n_qubits() {
        return Err(FockError::InvalidArgument(format!("qubit {j} of {}", layout.n_qubits())));
    }
    let left = DMatrix::<C64>::identity(1 << j, 1 << j);
    let right_dim = (1 << (layout.n_qubits() - 1 - j)) * layout.field_dim();
    let right = DMatrix::<C64>::identity(right_dim, right_dim);
    Ok(left.kronecker(op).kronecker(&right))
}

/// Embeds a single-mode operator on field mode `k` of `layout`.
pub fn mode_operator(layout: &SpaceLayout, k: usize, op: &DMatrix<C64>) -> Result<DMatrix<C64>, FockError> {
    let modes = layout.modes();
    if k >= modes.len() || op.nrows() != modes[k] {
        return Err(FockError::LayoutMismatch(format!("mode {k} operator of size {}", op.nrows())));
    }
    let left_dim = layout.qubit_dim() * modes[..k].iter().product::<usize>();
    let right_dim: usize = modes[k + 1..].iter().product();
    let left = DMatrix::<C64>::identity(left_dim, left_dim);
    let right = DMatrix::<C64>::identity(right_dim, right_dim);
    Ok(left.kronecker(op).kronecker(&right))
}

/// Fock amplitudes of |α⟩ truncated at `fock_dim`, renormalized, plus the
/// dropped tail mass.
fn coherent_amplitudes(alpha: C64, fock_dim: usize) -> (Vec<C64>, f64) {
    let n2 = alpha.norm_sqr();
    let mut c = C64::new((-0.5 * n2).exp(), 0.0);
    let mut amps = Vec::with_capacity(fock_dim);
    for n in 0..fock_dim {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        amps.push(c);
    }
    // Tail mass summed directly to avoid cancellation in 1 − Σ.
    let mut tail = 0.0;
    let mut n = fock_dim;
    loop {
        c = c * alpha / (n as f64).sqrt();
        let t = c.norm_sqr();
        tail += t;
        n += 1;
        if (n as f64 > n2 && t <= 1e-40 * tail.max(1e-300)) || t == 0.0 || n > fock_dim + 100_000 {
            break;
        }
    }
    let kept: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in amps.iter_mut() {
        *z /= kept;
    }
    (amps, tail)
}

pub fn coherent_state(alpha: C64, fock_dim: usize) -> Result<StateVector, FockError> {
    let layout = SpaceLayout::field(fock_dim)?;
    let alpha_sq = alpha.norm_sqr();
    if !alpha_sq.is_finite() {
        return Err(FockError::InvalidArgument("non-finite alpha".into()));
    }
    let (amps, tail) = coherent_amplitudes(alpha, fock_dim);
    if alpha_sq > fock_dim as f64 / 4.0 || tail >= MAX_TAIL_MASS {
        return Err(FockError::TruncationInadequate { alpha_sq, fock_dim, tail });
    }
    StateVector::new(layout, DVector::from_vec(amps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

/// Even cat (|α⟩+|−α⟩)/N₊ or odd cat (|−α⟩−|α⟩)/N₋.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatState {
    alpha: C64,
    parity: Parity,
    norm_constant: f64,
}

impl CatState {
    pub fn new(alpha: C64, parity: Parity) -> Result<Self, FockError> {
        let x = -2.0 * alpha.norm_sqr();
        let n2 = match parity {
            Parity::Even => 2.0 * (1.0 + x.exp()),
            Parity::Odd => -2.0 * x.exp_m1(),
        };
        if !(n2 > 0.0) {
            return Err(FockError::Degenerate("odd cat with alpha = 0 has zero norm".into()));
        }
        Ok(CatState { alpha, parity, norm_constant: n2.sqrt() })
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// N± = sqrt(2(1 ± e^(−2|α|²))).
    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn state(&self, fock_dim: usize) -> Result<StateVector, FockError> {
        let plus = coherent_state(self.alpha, fock_dim)?;
        let minus = coherent_state(-self.alpha, fock_dim)?;
        let amps = match self.parity {
            Parity::Even => plus.amps + minus.amps,
            Parity::Odd => minus.amps - plus.amps,
        };
        StateVector::new(plus.layout, amps)?.rescaled()
    }
}

pub fn cat_state(alpha: C64, parity: Parity, fock_dim: usize) -> Result<StateVector, FockError> {
    CatState::new(alpha, parity)?.state(fock_dim)
}

/// Kronecker product in the given order. Parts carrying qubits must
/// precede parts carrying field modes.
pub fn tensor_compose(parts: &[StateVector]) -> Result<StateVector, FockError> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| FockError::InvalidArgument("empty part list".into()))?;
    let mut n_qubits = first.layout.n_qubits;
    let mut modes = first.layout.modes.clone();
    let mut amps = first.amps.clone();
    for p in rest {
        if p.layout.n_qubits > 0 && !modes.is_empty() {
            return Err(FockError::LayoutMismatch("qubit factor after a field factor".into()));
        }
        n_qubits += p.layout.n_qubits;
        modes.extend_from_slice(&p.layout.modes);
        amps = amps.kronecker(&p.amps);
    }
    let layout = SpaceLayout { n_qubits, modes };
    layout.checked_dim()?;
    StateVector::new(layout, amps)
}

/// Result of projecting one qubit. `collapsed` is `None` when the outcome
/// is impossible.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub probability: f64,
    pub collapsed: Option<StateVector>,
}

impl Measurement {
    pub fn is_impossible(&self) -> bool {
        self.collapsed.is_none()
    }
}

pub fn measure_qubit(state: &StateVector, qubit_index: usize, outcome: u8) -> Result<Measurement, FockError> {
    let layout = &state.layout;
    if qubit_index >= layout.n_qubits() {
        return Err(FockError::InvalidArgument(format!("qubit {qubit_index} of {}", layout.n_qubits())));
    }
    if outcome > 1 {
        return Err(FockError::InvalidArgument(format!("outcome {outcome}")));
    }
    let total = state.amps.norm_squared();
    let mut projected = state.amps.clone();
    for (i, z) in projected.iter_mut().enumerate() {
        if layout.qubit_bit(i, qubit_index) != outcome as usize {
            *z = ZERO;
        }
    }
    let probability = (projected.norm_squared() / total).clamp(0.0, 1.0);
    if probability <= IMPOSSIBLE_PROBABILITY {
        return Ok(Measurement { probability, collapsed: None });
    }
    let collapsed = StateVector::new(layout.clone(), projected)?.rescaled()?;
    Ok(Measurement { probability, collapsed: Some(collapsed) })
}

/// |⟨a|b⟩|² for normalized inputs (norms are divided out otherwise).
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64, FockError> {
    let ov = a.inner(b)?;
    let f = ov.norm_sqr() / (a.amps.norm_squared() * b.amps.norm_squared());
    Ok(f.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn ladder_small_dims() {
        let l = ladder_operators(2).unwrap();
        let a = l.a.matrix();
        assert_eq!(a[(0, 1)], ONE);
        assert_eq!(a.iter().filter(|z| **z != ZERO).count(), 1);

        let l4 = ladder_operators(4).unwrap();
        for n in 0..4 {
            assert_eq!(l4.number.matrix()[(n, n)], c(n as f64));
        }
        assert!(ladder_operators(1).is_err());
    }

    #[test]
    fn commutator_defect_confined_to_top_level() {
        let l = ladder_operators(32).unwrap();
        let comm = l.a.matrix() * l.a_dagger.matrix() - l.a_dagger.matrix() * l.a.matrix();
        let defect = comm - DMatrix::<C64>::identity(32, 32);
        for i in 0..32 {
            for j in 0..32 {
                let expect_nonzero = i == 31 && j == 31;
                assert_eq!(defect[(i, j)].norm() > 1e-12, expect_nonzero, "entry {i},{j}");
            }
        }
    }

    #[test]
    fn coherent_state_moments() {
        let vac = coherent_state(ZERO, 8).unwrap();
        assert_eq!(vac.amplitudes()[0], ONE);

        let s = coherent_state(c(0.4f64.sqrt()), 32).unwrap();
        assert!((s.mean_photon_number() - 0.4).abs() < 1e-10);

        let a = 10f64.sqrt();
        let p = coherent_state(c(a), 64).unwrap();
        let m = coherent_state(c(-a), 64).unwrap();
        let ov = p.inner(&m).unwrap();
        assert!((ov.re - (-20f64).exp()).abs() < 1e-12 && ov.im.abs() < 1e-12);
    }

    #[test]
    fn coherent_truncation_rule() {
        assert!(matches!(
            coherent_state(c(2.0f64.sqrt()), 4),
            Err(FockError::TruncationInadequate { .. })
        ));
        // Inside the |α|² ≤ N/4 rule but with too heavy a tail.
        assert!(matches!(
            coherent_state(c(0.5), 2),
            Err(FockError::TruncationInadequate { .. })
        ));
    }

    #[test]
    fn cat_states() {
        let even = cat_state(c(1.0), Parity::Even, 16).unwrap();
        for (n, z) in even.amplitudes().iter().enumerate() {
            if n % 2 == 1 {
                assert_eq!(*z, ZERO);
            }
        }
        let odd = CatState::new(c(1.0), Parity::Odd).unwrap();
        let expect = (2.0 * (1.0 - (-2f64).exp())).sqrt();
        assert!((odd.norm_constant() - expect).abs() < 1e-15);
        assert!((odd.norm_constant() - 1.315040).abs() < 1e-6);
        assert!(matches!(CatState::new(ZERO, Parity::Odd), Err(FockError::Degenerate(_))));

        let a = c(0.4f64.sqrt());
        let e = cat_state(a, Parity::Even, 32).unwrap();
        let o = cat_state(a, Parity::Odd, 32).unwrap();
        assert!(e.inner(&o).unwrap().norm() < 1e-12);
        assert!(fidelity(&e, &o).unwrap() < 1e-24);
    }

    #[test]
    fn odd_cat_sign_convention() {
        // (|−α⟩ − |α⟩) has a negative one-photon amplitude for real α > 0.
        let o = cat_state(c(0.7), Parity::Odd, 16).unwrap();
        assert!(o.amplitudes()[1].re < 0.0);
        // normalize() flips it to the real-positive convention.
        assert!(o.normalize().unwrap().amplitudes()[1].re > 0.0);
    }

    #[test]
    fn composition_and_marginals() {
        let q0 = StateVector::qubit(0).unwrap();
        let vac = coherent_state(ZERO, 6).unwrap();
        let s = tensor_compose(&[q0.clone(), vac.clone()]).unwrap();
        assert_eq!(s.amplitudes()[0], ONE);
        assert_eq!(s.layout(), &SpaceLayout::new(1, 6).unwrap());

        let alpha = coherent_state(c(0.4f64.sqrt()), 32).unwrap();
        let s = tensor_compose(&[q0.clone(), alpha.clone()]).unwrap();
        assert!((s.mean_photon_number() - 0.4).abs() < 1e-12);

        let s3 = tensor_compose(&[q0.clone(), q0.clone(), alpha.clone()]).unwrap();
        assert_eq!(s3.dim(), 4 * 32);

        assert!(tensor_compose(&[]).is_err());
        assert!(tensor_compose(&[alpha, q0]).is_err());
    }

    #[test]
    fn measurement_of_encoded_state() {
        // (|−⟩|−α⟩ + |+⟩|α⟩)/√2 built directly from dressed states.
        let a = c(0.4f64.sqrt());
        let minus = tensor_compose(&[StateVector::dressed(Dressed::Minus), coherent_state(-a, 32).unwrap()]).unwrap();
        let plus = tensor_compose(&[StateVector::dressed(Dressed::Plus), coherent_state(a, 32).unwrap()]).unwrap();
        let psi = StateVector::new(minus.layout().clone(), (minus.amplitudes() + plus.amplitudes()) * c(0.5f64.sqrt()))
            .unwrap();
        let m0 = measure_qubit(&psi, 0, 0).unwrap();
        let m1 = measure_qubit(&psi, 0, 1).unwrap();
        let p0 = (1.0 + (-0.8f64).exp()) / 2.0;
        assert!((m0.probability - p0).abs() < 1e-12);
        assert!((m0.probability + m1.probability - 1.0).abs() < 1e-12);

        let even = tensor_compose(&[StateVector::qubit(0).unwrap(), cat_state(a, Parity::Even, 32).unwrap()]).unwrap();
        assert!(fidelity(&m0.collapsed.unwrap(), &even).unwrap() > 1.0 - 1e-12);

        let prod = tensor_compose(&[StateVector::qubit(0).unwrap(), coherent_state(a, 32).unwrap()]).unwrap();
        let m = measure_qubit(&prod, 0, 1).unwrap();
        assert_eq!(m.probability, 0.0);
        assert!(m.is_impossible());
    }

    #[test]
    fn coherent_fidelity_closed_form() {
        let p = coherent_state(c(1.0), 24).unwrap();
        let m = coherent_state(c(-1.0), 24).unwrap();
        // |⟨α|−α⟩|² = e^(−4|α|²).
        assert!((fidelity(&p, &m).unwrap() - (-4f64).exp()).abs() < 1e-12);
        assert!((fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn photon_loss_flips_logical_qubit() {
        let a = c(2.0f64.sqrt());
        let l = ladder_operators(32).unwrap();
        let zero_l = cat_state(a, Parity::Even, 32).unwrap();
        let one_l = cat_state(a, Parity::Odd, 32).unwrap();
        let lost = l.a.apply(&zero_l).unwrap().normalize().unwrap();
        assert!((fidelity(&lost, &one_l).unwrap() - 1.0).abs() < 1e-12);
        let lost = l.a.apply(&one_l).unwrap().normalize().unwrap();
        assert!((fidelity(&lost, &zero_l).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embeddings_respect_packing() {
        let layout = SpaceLayout::new(2, 3).unwrap();
        let x0 = qubit_operator(&layout, 0, &pauli_x()).unwrap();
        // X on qubit 0 maps |00⟩|n⟩ to |10⟩|n⟩.
        let idx_from = layout.index(0b00, 1);
        let idx_to = layout.index(0b10, 1);
        assert_eq!(x0[(idx_to, idx_from)], ONE);
        let a = mode_operator(&layout, 0, &annihilation_matrix(3)).unwrap();
        assert_eq!(a[(layout.index(0b01, 0), layout.index(0b01, 1))], ONE);
        assert_eq!(layout.qubit_bit(idx_to, 0), 1);
        assert_eq!(layout.qubit_bit(idx_to, 1), 0);
    }

    #[test]
    fn dressed_basis_identities() {
        let w = dressed_basis();
        let sx = w.adjoint() * pauli_x() * &w;
        assert!((sx[(0, 0)] - ONE).norm() < 1e-15 && (sx[(1, 1)] + ONE).norm() < 1e-15);
        let sp = dressed_raising();
        let sum = &sp + sp.adjoint();
        assert!((sum - pauli_z()).norm() < 1e-15);
    }
}
