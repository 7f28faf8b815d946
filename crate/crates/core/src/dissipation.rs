//! Closed-form open-system curves: charge-qubit populations under an ohmic
//! bath, relaxation and dephasing times, the zero-temperature amplitude
//! damping of a cat, and the two-pulse probe of the field's coherence.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::device::{DeviceParams, HBAR, K_B};
use crate::fockspace::{coherent_state, FockError, Parity};
use crate::gates::{coherent_overlap, CoherentRegister, GateError};
use crate::propagator::EffectiveMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DissipationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// Dimensionless dissipation strength.
    pub beta: f64,
    /// K.
    pub temperature: f64,
    /// Field decay time, s.
    pub tau_kappa: f64,
}

impl BathParams {
    pub fn new(beta: f64, temperature: f64, tau_kappa: f64) -> Result<Self, DissipationError> {
        let b = BathParams { beta, temperature, tau_kappa };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), DissipationError> {
        for (name, v) in [("beta", self.beta), ("temperature", self.temperature), ("tau_kappa", self.tau_kappa)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DissipationError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationTimes {
    /// Λ = E_J / k_B T.
    pub lambda_cap: f64,
    pub tau_r: f64,
    pub tau_phi: f64,
}

/// τ_r = [2πβ E_J coth Λ / ℏ]⁻¹ and τ_φ = [τ_r⁻¹/2 + 2πβ k_B T/ℏ]⁻¹.
pub fn relaxation_times(params: &DeviceParams, bath: &BathParams) -> Result<RelaxationTimes, DissipationError> {
    bath.validate()?;
    let e_j = params.e_j_over_hbar;
    if !(e_j > 0.0) {
        return Err(DissipationError::InvalidArgument(format!("E_J/ℏ must be positive, got {e_j}")));
    }
    let kt_over_hbar = K_B * bath.temperature / HBAR;
    let lambda_cap = e_j / kt_over_hbar;
    let coth = 1.0 / lambda_cap.tanh();
    let rate_r = 2.0 * std::f64::consts::PI * bath.beta * e_j * coth;
    let rate_phi = 0.5 * rate_r + 2.0 * std::f64::consts::PI * bath.beta * kt_over_hbar;
    Ok(RelaxationTimes { lambda_cap, tau_r: 1.0 / rate_r, tau_phi: 1.0 / rate_phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PopulationModel {
    Full,
    /// tanh Λ set to 1.
    Tanh1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Populations {
    pub p0: f64,
    pub p1: f64,
    /// Tr{ρσ₊}.
    pub p_t: C64,
}

pub fn atom_population_probs(
    t: f64,
    params: &DeviceParams,
    bath: &BathParams,
    model: PopulationModel,
) -> Result<Populations, DissipationError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(DissipationError::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    let times = relaxation_times(params, bath)?;
    let phase = 2.0 * params.e_j_over_hbar * t;
    let coherence = (-t / times.tau_phi).exp();
    let base = match model {
        PopulationModel::Full => {
            let th = times.lambda_cap.tanh();
            th + (1.0 - th) * (-t / times.tau_r).exp()
        }
        PopulationModel::Tanh1 => 1.0,
    };
    let osc = phase.cos() * coherence;
    Ok(Populations {
        p0: 0.5 * (base + osc),
        p1: 0.5 * (base - osc),
        p_t: C64::new(0.0, -phase.sin() * coherence),
    })
}

/// A cat after amplitude damping at zero temperature: the mixture
/// N⁻²[|α_t⟩⟨α_t| + |−α_t⟩⟨−α_t| ± w(|α_t⟩⟨−α_t| + h.c.)].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedCat {
    pub alpha: C64,
    pub alpha_t: C64,
    /// w = exp(−2|α|²(1 − e^(−t/τ_κ))).
    pub coherence_weight: f64,
    pub parity: Parity,
}

impl DampedCat {
    /// Coefficients c_ij of ρ = Σ c_ij |β_i⟩⟨β_j| with β = (α_t, −α_t); unit trace.
    pub fn coefficients(&self) -> Matrix2<C64> {
        let s = match self.parity {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        };
        let cross = s * self.coherence_weight;
        let trace = 2.0 + 2.0 * cross * (-2.0 * self.alpha_t.norm_sqr()).exp();
        Matrix2::new(C64::new(1.0, 0.0), C64::new(cross, 0.0), C64::new(cross, 0.0), C64::new(1.0, 0.0)) / C64::new(trace, 0.0)
    }

    pub fn components(&self) -> [C64; 2] {
        [self.alpha_t, -self.alpha_t]
    }

    /// ⟨(−1)^(a†a)⟩.
    pub fn parity_expectation(&self) -> f64 {
        let c = self.coefficients();
        let b = self.components();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                // Tr[Π|β_i⟩⟨β_j|] = ⟨β_j|−β_i⟩.
                acc += c[(i, j)] * coherent_overlap(b[j], -b[i]);
            }
        }
        acc.re
    }

    /// Density matrix in a truncated Fock space.
    pub fn density(&self, fock_dim: usize) -> Result<DMatrix<C64>, DissipationError> {
        let c = self.coefficients();
        let kets: Vec<_> = self
            .components()
            .iter()
            .map(|b| coherent_state(*b, fock_dim).map(|s| s.into_amplitudes()))
            .collect::<Result<_, _>>()?;
        let mut rho = DMatrix::<C64>::zeros(fock_dim, fock_dim);
        for i in 0..2 {
            for j in 0..2 {
                rho += &kets[i] * kets[j].adjoint() * c[(i, j)];
            }
        }
        Ok(rho)
    }
}

pub fn damped_cat(alpha: C64, parity: Parity, t: f64, bath: &BathParams) -> Result<DampedCat, DissipationError> {
    bath.validate()?;
    if !(t >= 0.0) {
        return Err(DissipationError::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    if alpha.norm() == 0.0 && parity == Parity::Odd {
        return Err(DissipationError::Fock(FockError::Degenerate("odd cat at α = 0".into())));
    }
    let x = t / bath.tau_kappa;
    Ok(DampedCat {
        alpha,
        alpha_t: alpha * (-0.5 * x).exp(),
        coherence_weight: (2.0 * alpha.norm_sqr() * (-x).exp_m1()).exp(),
        parity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeSource {
    ClosedForm,
    ChannelOracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequentialProbs {
    pub p00: f64,
    pub p10: f64,
    /// Set when the t/τ_κ ≥ 1 expression was used; P00 + P10 ≠ 1 there.
    pub nonphysical_branch: bool,
}

/// Probabilities of reading 0 or 1 after a second pulse, a time t after the
/// first detection found |0⟩ (field in |0⟩_L).
pub fn sequential_pulse_probs(
    t: f64,
    alpha: C64,
    bath: &BathParams,
    source: ProbeSource,
) -> Result<SequentialProbs, DissipationError> {
    bath.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(DissipationError::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    match source {
        ProbeSource::ClosedForm => {
            let a2 = alpha.norm_sqr();
            let x = t / bath.tau_kappa;
            let e = (-x).exp();
            let ratio = ((-2.0 * a2 * e).exp() + (-2.0 * a2 * (1.0 - e)).exp()) / (1.0 + (-2.0 * a2).exp());
            if x <= 1.0 {
                Ok(SequentialProbs { p00: 0.5 * (1.0 + ratio), p10: 0.5 * (1.0 - ratio), nonphysical_branch: false })
            } else {
                let p = 0.5 * (1.0 - ratio);
                Ok(SequentialProbs { p00: p, p10: p, nonphysical_branch: true })
            }
        }
        ProbeSource::ChannelOracle => {
            let cat = damped_cat(alpha, Parity::Even, t, bath)?;
            let map = EffectiveMap::ideal(1.0).map_err(GateError::from)?;
            let c = cat.coefficients();
            // Pulse each coherent component with the qubit in |0⟩ and keep
            // the part with qubit outcome j; P_j = Σ c_ik ⟨K_k|K_i⟩.
            let mut kept = [Vec::new(), Vec::new()];
            for beta in cat.components() {
                let out = CoherentRegister::product(&[0], beta)?.conditional_phase(0, &map)?;
                for (j, slot) in kept.iter_mut().enumerate() {
                    let terms = out.terms().iter().copied().filter(|term| term.bits == j).collect();
                    slot.push(CoherentRegister::new(1, terms)?);
                }
            }
            let mut p = [0.0; 2];
            for (j, k) in kept.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..2 {
                    for l in 0..2 {
                        acc += c[(i, l)] * k[l].inner(&k[i])?;
                    }
                }
                p[j] = acc.re;
            }
            Ok(SequentialProbs { p00: p[0], p10: p[1], nonphysical_branch: false })
        }
    }
}
