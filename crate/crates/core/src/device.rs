//! Device parameters, the classical flux pulse, and Hamiltonian builders.
//!
//! Energies are stored as angular frequencies (E/ℏ, rad/s) and every
//! Hamiltonian is returned divided by ℏ. The qubit basis is the
//! computational one with the Josephson term along σ_x and the field
//! coupling along σ_z; the dressed states |∓⟩ are the σ_x eigenstates
//! (see [`crate::fockspace::Dressed`]).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::fockspace::{
    annihilation_matrix, dressed_raising, mode_operator, pauli_x, pauli_y, pauli_z, qubit_operator, DenseOperator,
    FockError, SpaceLayout,
};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Flux quantum h/2e in webers.
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Converts an energy in µeV to an angular frequency in rad/s.
pub fn uev_to_rad_s(uev: f64) -> f64 {
    uev * 1e-6 * E_CHARGE / HBAR
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    /// Josephson energy over ℏ, rad/s.
    pub e_j_over_hbar: f64,
    /// Charging energy, µeV (regime diagnostic only).
    pub e_c_uev: f64,
    /// Resonator frequency, rad/s.
    pub omega_c: f64,
    /// Qubit-field coupling, rad/s.
    pub g: f64,
    /// Superconducting gap, µeV (regime diagnostic only).
    pub gap_uev: f64,
    /// Bath temperature, K.
    pub temperature: f64,
}

impl DeviceParams {
    /// The published operating point. `g` is not published; the value here
    /// is a placeholder of the right order that calibration replaces.
    pub fn reference() -> Self {
        DeviceParams {
            e_j_over_hbar: 15.9e10,
            e_c_uev: 250.0,
            omega_c: 70.7e10,
            g: 5.0e9,
            gap_uev: 458.3,
            temperature: 0.030,
        }
    }

    pub fn with_g(self, g: f64) -> Self {
        DeviceParams { g, ..self }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let fields = [
            ("e_j", self.e_j_over_hbar),
            ("e_c", self.e_c_uev),
            ("omega_c", self.omega_c),
            ("g", self.g),
            ("gap", self.gap_uev),
            ("temperature", self.temperature),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DeviceError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Strict ordering k_B·T < E_J < E_C < δ. Diagnostic only.
    pub fn regime_ok(&self) -> bool {
        let kt = K_B * self.temperature;
        let ej = HBAR * self.e_j_over_hbar;
        let ec = self.e_c_uev * 1e-6 * E_CHARGE;
        let gap = self.gap_uev * 1e-6 * E_CHARGE;
        kt < ej && ej < ec && ec < gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseMode {
    /// The complex flux (A/2)e^(i(νt+φ)) as written.
    LiteralComplex,
    /// Real part only; keeps every Hamiltonian Hermitian.
    Hermitized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expansion {
    ExactCos,
    /// cos x ≈ 1 − x²/2.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxPulse {
    amplitude: f64,
    nu: f64,
    phi: f64,
    t_on: f64,
    t_off: f64,
    mode: PulseMode,
}

impl FluxPulse {
    pub fn new(amplitude: f64, nu: f64, phi: f64, t_on: f64, t_off: f64, mode: PulseMode) -> Result<Self, DeviceError> {
        if !(amplitude > 0.0 && amplitude <= 1.0) {
            return Err(DeviceError::InvalidArgument(format!("amplitude {amplitude} outside (0, 1]")));
        }
        if !(nu >= 0.0) || !nu.is_finite() || !phi.is_finite() {
            return Err(DeviceError::InvalidArgument("nu must be finite and nonnegative, phi finite".into()));
        }
        if !(t_off > t_on) || !t_on.is_finite() || !t_off.is_finite() {
            return Err(DeviceError::InvalidArgument(format!("window [{t_on}, {t_off}] is empty")));
        }
        Ok(FluxPulse { amplitude, nu, phi, t_on, t_off, mode })
    }

    /// A = 0.7 over one half-period π/ν starting at `t_on`.
    pub fn half_period_window(nu: f64, phi: f64, t_on: f64, mode: PulseMode) -> Result<Self, DeviceError> {
        if !(nu > 0.0) {
            return Err(DeviceError::InvalidArgument("half period needs nu > 0".into()));
        }
        Self::new(0.7, nu, phi, t_on, t_on + PI / nu, mode)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn t_on(&self) -> f64 {
        self.t_on
    }
    pub fn t_off(&self) -> f64 {
        self.t_off
    }
    pub fn mode(&self) -> PulseMode {
        self.mode
    }
    pub fn duration(&self) -> f64 {
        self.t_off - self.t_on
    }
    /// π/ν.
    pub fn half_period(&self) -> f64 {
        PI / self.nu
    }

    pub fn with_phi(self, phi: f64) -> Self {
        FluxPulse { phi, ..self }
    }

    pub fn with_mode(self, mode: PulseMode) -> Self {
        FluxPulse { mode, ..self }
    }

    /// Same shape moved to start at `t_on`.
    pub fn shifted_to(self, t_on: f64) -> Self {
        FluxPulse { t_on, t_off: t_on + self.duration(), ..self }
    }

    /// Same start, new end.
    pub fn with_window_end(self, t_off: f64) -> Result<Self, DeviceError> {
        Self::new(self.amplitude, self.nu, self.phi, self.t_on, t_off, self.mode)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_on && t <= self.t_off
    }
}

/// Φ_x(t)/Φ₀: (A/2)e^(i(ν(t−t_on)+φ)) inside the window, 0 outside.
pub fn flux_at(pulse: &FluxPulse, t: f64) -> C64 {
    if !pulse.contains(t) {
        return C64::new(0.0, 0.0);
    }
    let z = C64::from_polar(0.5 * pulse.amplitude, pulse.nu * (t - pulse.t_on) + pulse.phi);
    match pulse.mode {
        PulseMode::LiteralComplex => z,
        PulseMode::Hermitized => C64::new(z.re, 0.0),
    }
}

/// E_J/ℏ · cos(π·Φ) for a flux value in units of Φ₀.
pub fn josephson_factor(e_j: f64, flux: C64, expansion: Expansion) -> C64 {
    let x = flux * PI;
    match expansion {
        Expansion::ExactCos => x.cos() * e_j,
        Expansion::Quadratic => (C64::new(1.0, 0.0) - x * x * 0.5) * e_j,
    }
}

/// ν_a(t).
pub fn qubit_frequency(params: &DeviceParams, pulse: &FluxPulse, t: f64, expansion: Expansion) -> C64 {
    josephson_factor(params.e_j_over_hbar, flux_at(pulse, t), expansion)
}

/// Δ(t) = ν_a(t) − ω_c.
pub fn detuning(params: &DeviceParams, pulse: &FluxPulse, t: f64, expansion: Expansion) -> C64 {
    qubit_frequency(params, pulse, t, expansion) - params.omega_c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Lab,
    Rotating,
}

fn single_mode_check(layout: &SpaceLayout, n_qubits: usize) -> Result<(), DeviceError> {
    if layout.n_qubits() != n_qubits || layout.modes().len() != 1 {
        return Err(DeviceError::LayoutMismatch(format!(
            "expected {n_qubits} qubit(s) and one field mode, got {:?}",
            layout
        )));
    }
    Ok(())
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Lab frame: ω_c a†a + ν_a(t) σ_x + g σ_z (a + a†).
///
/// Rotating frame (interaction picture of ω_c(a†a + S_z), absolute time
/// `t`): Δ(t) S_z + g (S₊e^(2iω_c t) + S₋e^(−2iω_c t))(a†e^(iω_c t) + a e^(−iω_c t)),
/// with S_z = σ_x and S₊ = |−⟩⟨+|. Both are written in the computational
/// basis, so the rotating-frame operator is diagonal only after the dressed
/// basis change.
pub fn build_single_qubit_hamiltonian(
    params: &DeviceParams,
    pulse: &FluxPulse,
    t: f64,
    frame: Frame,
    expansion: Expansion,
    layout: &SpaceLayout,
) -> Result<DenseOperator, DeviceError> {
    single_mode_check(layout, 1)?;
    let f = layout.fock_dim();
    let a1 = annihilation_matrix(f);
    let a = mode_operator(layout, 0, &a1)?;
    let ad = a.adjoint();
    let m = match frame {
        Frame::Lab => {
            let nu_a = qubit_frequency(params, pulse, t, expansion);
            let n = &ad * &a;
            let sx = qubit_operator(layout, 0, &pauli_x())?;
            let sz = qubit_operator(layout, 0, &pauli_z())?;
            n * real(params.omega_c) + sx * nu_a + sz * (&a + &ad) * real(params.g)
        }
        Frame::Rotating => {
            let delta = detuning(params, pulse, t, expansion);
            let sp1 = dressed_raising();
            let sp = qubit_operator(layout, 0, &sp1)?;
            let sm = qubit_operator(layout, 0, &sp1.adjoint())?;
            let sz = qubit_operator(layout, 0, &pauli_x())?;
            let w = params.omega_c * t;
            let qubit = sp * C64::from_polar(1.0, 2.0 * w) + sm * C64::from_polar(1.0, -2.0 * w);
            let field = ad * C64::from_polar(1.0, w) + a * C64::from_polar(1.0, -w);
            sz * delta + qubit * field * real(params.g)
        }
    };
    Ok(DenseOperator::auto(layout.clone(), m)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub c_j: f64,
    pub c_g_a: f64,
    pub c_g_b: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub c_a: f64,
    pub c_b: f64,
    /// Classical pump amplitude ⟨b⟩ (zero switches the pump off).
    pub b_amp: f64,
}

impl TwoModeParams {
    /// Centimetre-scale coplanar lines with femtofarad gate capacitances.
    pub fn reference() -> Self {
        TwoModeParams {
            omega_a: 70.7e10,
            omega_b: 60.0e10,
            c_j: 1.0e-15,
            c_g_a: 1.0e-16,
            c_g_b: 1.0e-16,
            l_a: 0.01,
            l_b: 0.01,
            c_a: 1.6e-10,
            c_b: 1.6e-10,
            b_amp: 1.0,
        }
    }

    fn validate(&self) -> Result<(), DeviceError> {
        let positive = [
            ("omega_a", self.omega_a),
            ("omega_b", self.omega_b),
            ("c_j", self.c_j),
            ("c_g_a", self.c_g_a),
            ("c_g_b", self.c_g_b),
            ("l_a", self.l_a),
            ("l_b", self.l_b),
            ("c_a", self.c_a),
            ("c_b", self.c_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DeviceError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.b_amp >= 0.0) || !self.b_amp.is_finite() {
            return Err(DeviceError::InvalidArgument(format!("b_amp must be nonnegative, got {}", self.b_amp)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub g_a: f64,
    pub g_b: f64,
    pub g_ab: f64,
}

/// g_a, g_b and g_ab from the capacitive network, evaluated in SI units
/// exactly as written (g_ab is not dimensionally homogeneous with the
/// others and comes out tiny for realistic circuits).
pub fn two_mode_couplings(p: &TwoModeParams) -> Result<Couplings, DeviceError> {
    p.validate()?;
    let g_a = E_CHARGE * p.c_g_a / (HBAR * (p.c_j + p.c_g_a)) * (HBAR * p.omega_a / (p.l_a * p.c_a)).sqrt();
    let g_b = E_CHARGE * p.c_g_b / (HBAR * (p.c_j + p.c_g_b)) * (HBAR * p.omega_b / (p.l_b * p.c_b)).sqrt();
    let g_ab = E_CHARGE * E_CHARGE * p.c_g_a * p.c_g_b / (HBAR * (p.c_j + p.c_g_a))
        * (HBAR * HBAR * p.omega_a * p.omega_b / (p.l_a * p.l_b * p.c_a * p.c_b)).sqrt();
    Ok(Couplings { g_a, g_b, g_ab })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TwoModeVariant {
    /// Both modes quantized.
    Full,
    /// Mode b replaced by ⟨b⟩e^(∓iω_b t).
    ClassicalPump,
    /// Classical pump with the g_ab term dropped.
    Reduced,
}

pub fn build_two_mode_hamiltonian(
    p: &TwoModeParams,
    params: &DeviceParams,
    pulse: &FluxPulse,
    t: f64,
    variant: TwoModeVariant,
    expansion: Expansion,
    layout: &SpaceLayout,
) -> Result<DenseOperator, DeviceError> {
    let cp = two_mode_couplings(p)?;
    let n_modes = match variant {
        TwoModeVariant::Full => 2,
        _ => 1,
    };
    if layout.n_qubits() != 1 || layout.modes().len() != n_modes {
        return Err(DeviceError::LayoutMismatch(format!(
            "{variant:?} needs one qubit and {n_modes} field mode(s), got {layout:?}"
        )));
    }
    let a = mode_operator(layout, 0, &annihilation_matrix(layout.modes()[0]))?;
    let ad = a.adjoint();
    let xa = &a + &ad;
    let sx = qubit_operator(layout, 0, &pauli_x())?;
    let sz = qubit_operator(layout, 0, &pauli_z())?;
    let ej = josephson_factor(params.e_j_over_hbar, flux_at(pulse, t), expansion);
    let mut m = &ad * &a * real(p.omega_a) + sx * ej + &sz * &xa * real(cp.g_a);
    match variant {
        TwoModeVariant::Full => {
            let b = mode_operator(layout, 1, &annihilation_matrix(layout.modes()[1]))?;
            let bd = b.adjoint();
            let xb = &b + &bd;
            m += &bd * &b * real(p.omega_b) + &sz * &xb * real(cp.g_b) + &xa * &xb * real(cp.g_ab);
        }
        TwoModeVariant::ClassicalPump | TwoModeVariant::Reduced => {
            let d = layout.dim();
            let drive = 2.0 * p.b_amp * (p.omega_b * t).cos();
            m += DMatrix::<C64>::identity(d, d) * real(p.omega_b * p.b_amp * p.b_amp) + sz * real(drive * cp.g_b);
            if variant == TwoModeVariant::ClassicalPump {
                m += &xa * real(drive * cp.g_ab);
            }
        }
    }
    Ok(DenseOperator::auto(layout.clone(), m)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NQubitParams {
    /// Per-qubit Josephson energies over ℏ, rad/s.
    pub e_j: Vec<f64>,
    pub pulses: Vec<FluxPulse>,
    /// Inductive energy over ℏ, rad/s.
    pub e_l: f64,
    pub include_qq: bool,
}

impl NQubitParams {
    pub fn new(e_j: Vec<f64>, pulses: Vec<FluxPulse>, e_l: f64, include_qq: bool) -> Result<Self, DeviceError> {
        if e_j.is_empty() {
            return Err(DeviceError::InvalidArgument("need at least one qubit".into()));
        }
        if pulses.len() != e_j.len() {
            return Err(DeviceError::InvalidArgument(format!(
                "{} pulses for {} qubits",
                pulses.len(),
                e_j.len()
            )));
        }
        if !(e_l > 0.0) || !e_l.is_finite() {
            return Err(DeviceError::InvalidArgument(format!("E_L must be positive, got {e_l}")));
        }
        if e_j.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(DeviceError::InvalidArgument("E_J values must be positive".into()));
        }
        Ok(NQubitParams { e_j, pulses, e_l, include_qq })
    }

    pub fn n(&self) -> usize {
        self.e_j.len()
    }

    /// E_L/ℏ = C_J Φ₀² / (C_qb π² L ℏ) with C_qb = C_J C_q / (C_J + C_q).
    pub fn inductive_energy(c_j: f64, c_q: f64, inductance: f64) -> Result<f64, DeviceError> {
        if !(c_j > 0.0 && c_q > 0.0 && inductance > 0.0) {
            return Err(DeviceError::InvalidArgument("C_J, C_q and L must be positive".into()));
        }
        let c_qb = c_j * c_q / (c_j + c_q);
        Ok(c_j * FLUX_QUANTUM * FLUX_QUANTUM / (c_qb * PI * PI * inductance) / HBAR)
    }
}

/// ω a†a + Σ_j E_J^j cos(πΦ_j) σ_x^j + g Σ_j σ_z^j (a + a†) − Σ_j H_j, where
/// H_j = (4 E_J^j E_J^{j+1} / E_L) cos(πΦ_j) cos(πΦ_{j+1}) σ_y^j σ_y^{j+1}.
pub fn build_n_qubit_hamiltonian(
    np: &NQubitParams,
    params: &DeviceParams,
    t: f64,
    expansion: Expansion,
    layout: &SpaceLayout,
) -> Result<DenseOperator, DeviceError> {
    single_mode_check(layout, np.n())?;
    let a = mode_operator(layout, 0, &annihilation_matrix(layout.fock_dim()))?;
    let ad = a.adjoint();
    let xa = &a + &ad;
    let mut m = &ad * &a * real(params.omega_c);
    let cosines: Vec<C64> = np
        .pulses
        .iter()
        .map(|p| josephson_factor(1.0, flux_at(p, t), expansion))
        .collect();
    for j in 0..np.n() {
        let sx = qubit_operator(layout, j, &pauli_x())?;
        let sz = qubit_operator(layout, j, &pauli_z())?;
        m += sx * (cosines[j] * np.e_j[j]) + sz * &xa * real(params.g);
    }
    if np.include_qq {
        for j in 0..np.n().saturating_sub(1) {
            let coef = cosines[j] * cosines[j + 1] * (4.0 * np.e_j[j] * np.e_j[j + 1] / np.e_l);
            let yy = qubit_operator(layout, j, &pauli_y())? * qubit_operator(layout, j + 1, &pauli_y())?;
            m -= yy * coef;
        }
    }
    Ok(DenseOperator::auto(layout.clone(), m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::dressed_basis;

    fn nu16() -> f64 {
        16.0 * PI * 1e6
    }

    fn pulse(mode: PulseMode) -> FluxPulse {
        FluxPulse::half_period_window(nu16(), 0.0, 0.0, mode).unwrap()
    }

    #[test]
    fn flux_values() {
        let p = pulse(PulseMode::LiteralComplex);
        assert!((flux_at(&p, 0.0) - C64::new(0.35, 0.0)).norm() < 1e-15);
        assert_eq!(flux_at(&p, -1e-9), C64::new(0.0, 0.0));
        assert_eq!(flux_at(&p, 1e-6), C64::new(0.0, 0.0));
        let end = flux_at(&p, 62.5e-9);
        assert!((end - C64::new(-0.35, 0.0)).norm() < 1e-12);
        assert!((p.half_period() - 62.5e-9).abs() < 1e-20);
    }

    #[test]
    fn frequencies_and_detuning() {
        let d = DeviceParams::reference();
        let off = FluxPulse::new(0.7, nu16(), 0.0, 1.0, 2.0, PulseMode::Hermitized).unwrap();
        assert_eq!(qubit_frequency(&d, &off, 0.0, Expansion::ExactCos).re, 15.9e10);
        let q = josephson_factor(15.9e10, C64::new(0.35, 0.0), Expansion::Quadratic);
        assert!((q.re - 6.288e10).abs() < 0.001e10);
        let e = josephson_factor(1.0, C64::new(0.1, 0.0), Expansion::ExactCos);
        let qd = josephson_factor(1.0, C64::new(0.1, 0.0), Expansion::Quadratic);
        assert!(((e - qd) / e).norm() < 5e-3);
        let det = detuning(&d, &off, 0.0, Expansion::Quadratic);
        assert!((det.re + 54.8e10).abs() < 1e-3 && det.im == 0.0);
        let herm = pulse(PulseMode::Hermitized);
        for k in 0..50 {
            let t = k as f64 * 1.3e-9;
            assert_eq!(detuning(&d, &herm, t, Expansion::ExactCos).im, 0.0);
        }
    }

    #[test]
    fn expansion_error_is_quartic_in_amplitude() {
        let d = DeviceParams::reference();
        let err = |a: f64| {
            let p = FluxPulse::new(a, nu16(), 0.0, 0.0, 1e-7, PulseMode::Hermitized).unwrap();
            (detuning(&d, &p, 0.0, Expansion::ExactCos) - detuning(&d, &p, 0.0, Expansion::Quadratic)).norm()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn rotating_frame_shapes() {
        let d = DeviceParams::reference().with_g(0.0);
        let layout = SpaceLayout::new(1, 5).unwrap();
        let off = FluxPulse::new(0.7, nu16(), 0.0, 1.0, 2.0, PulseMode::Hermitized).unwrap();
        let h = build_single_qubit_hamiltonian(&d, &off, 0.0, Frame::Rotating, Expansion::Quadratic, &layout).unwrap();
        let w = dressed_basis().kronecker(&DMatrix::<C64>::identity(5, 5));
        let hd = w.adjoint() * h.matrix() * &w;
        let delta = d.e_j_over_hbar - d.omega_c;
        for i in 0..10 {
            for j in 0..10 {
                let expect = if i != j { 0.0 } else if i < 5 { delta } else { -delta };
                assert!((hd[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-3, "{i},{j}");
            }
        }
    }

    #[test]
    fn rotating_frame_is_periodic() {
        let d = DeviceParams::reference();
        let layout = SpaceLayout::new(1, 6).unwrap();
        let off = FluxPulse::new(0.7, nu16(), 0.0, 1.0, 2.0, PulseMode::Hermitized).unwrap();
        let t = 3.7e-10;
        let h1 = build_single_qubit_hamiltonian(&d, &off, t, Frame::Rotating, Expansion::ExactCos, &layout).unwrap();
        let h2 = build_single_qubit_hamiltonian(&d, &off, t + 2.0 * PI / d.omega_c, Frame::Rotating, Expansion::ExactCos, &layout)
            .unwrap();
        let scale = h1.matrix().norm();
        assert!((h1.matrix() - h2.matrix()).norm() / scale < 1e-10);
    }

    #[test]
    fn hermiticity_follows_mode() {
        let d = DeviceParams::reference();
        let layout = SpaceLayout::new(1, 6).unwrap();
        for frame in [Frame::Lab, Frame::Rotating] {
            for k in 0..20 {
                let t = k as f64 * 3.1e-9;
                let h = build_single_qubit_hamiltonian(&d, &pulse(PulseMode::Hermitized), t, frame, Expansion::ExactCos, &layout)
                    .unwrap();
                assert!(h.is_hermitian());
            }
            let h = build_single_qubit_hamiltonian(&d, &pulse(PulseMode::LiteralComplex), 10e-9, frame, Expansion::ExactCos, &layout)
                .unwrap();
            assert!(!h.is_hermitian());
        }
        let wrong = SpaceLayout::new(2, 6).unwrap();
        assert!(build_single_qubit_hamiltonian(&d, &pulse(PulseMode::Hermitized), 0.0, Frame::Lab, Expansion::ExactCos, &wrong)
            .is_err());
    }

    #[test]
    fn coupling_scalings() {
        let p = TwoModeParams::reference();
        let c = two_mode_couplings(&p).unwrap();
        let c2 = two_mode_couplings(&TwoModeParams { l_a: 2.0 * p.l_a, ..p }).unwrap();
        assert!((c2.g_a / c.g_a - 0.5f64.sqrt()).abs() < 1e-14);
        let tiny = two_mode_couplings(&TwoModeParams { c_g_a: 1e-30, ..p }).unwrap();
        assert!(tiny.g_a < 1e-3 * c.g_a && tiny.g_ab < 1e-3 * c.g_ab);
        assert!(two_mode_couplings(&TwoModeParams { c_j: 0.0, ..p }).is_err());
    }

    #[test]
    fn coupling_reference_regression() {
        let c = two_mode_couplings(&TwoModeParams::reference()).unwrap();
        let ratio = c.g_ab / c.g_b;
        assert!(ratio < 1e-20, "g_ab/g_b = {ratio:e}");
        // Pinned values for the centimetre-scale reference circuit.
        assert!((c.g_a / 9.39e8 - 1.0).abs() < 5e-3, "g_a = {:e}", c.g_a);
    }

    #[test]
    fn two_mode_variants() {
        let d = DeviceParams::reference();
        let p = TwoModeParams { b_amp: 0.0, ..TwoModeParams::reference() };
        let cp = two_mode_couplings(&p).unwrap();
        let layout = SpaceLayout::new(1, 5).unwrap();
        let pl = pulse(PulseMode::Hermitized);
        let t = 7.0e-9;
        let red = build_two_mode_hamiltonian(&p, &d, &pl, t, TwoModeVariant::Reduced, Expansion::ExactCos, &layout).unwrap();
        let single = build_n_qubit_hamiltonian(
            &NQubitParams::new(vec![d.e_j_over_hbar], vec![pl], 1.0, false).unwrap(),
            &DeviceParams { omega_c: p.omega_a, g: cp.g_a, ..d },
            t,
            Expansion::ExactCos,
            &layout,
        )
        .unwrap();
        assert!((red.matrix() - single.matrix()).norm() < 1e-12 * single.matrix().norm());

        let p = TwoModeParams::reference();
        let cp = two_mode_couplings(&p).unwrap();
        let pump = build_two_mode_hamiltonian(&p, &d, &pl, t, TwoModeVariant::ClassicalPump, Expansion::ExactCos, &layout).unwrap();
        let red = build_two_mode_hamiltonian(&p, &d, &pl, t, TwoModeVariant::Reduced, Expansion::ExactCos, &layout).unwrap();
        let a = mode_operator(&layout, 0, &annihilation_matrix(5)).unwrap();
        let expect = (&a + a.adjoint()) * real(2.0 * p.b_amp * cp.g_ab * (p.omega_b * t).cos());
        assert!((pump.matrix() - red.matrix() - expect).norm() < 1e-9);

        // Drive amplitude at t = 0 is 2 g_b ⟨b⟩ on σ_z: compare with ⟨b⟩ = 0.
        let off = build_two_mode_hamiltonian(&TwoModeParams { b_amp: 0.0, ..p }, &d, &pl, 0.0, TwoModeVariant::Reduced, Expansion::ExactCos, &layout)
            .unwrap();
        let on = build_two_mode_hamiltonian(&p, &d, &pl, 0.0, TwoModeVariant::Reduced, Expansion::ExactCos, &layout).unwrap();
        let diff = on.matrix() - off.matrix();
        let shift = p.omega_b * p.b_amp * p.b_amp;
        // |0⟩|0⟩ entry: c-number shift + drive; |1⟩|0⟩ entry: shift − drive.
        let i0 = layout.index(0, 0);
        let i1 = layout.index(1, 0);
        assert!((diff[(i0, i0)].re - shift - 2.0 * cp.g_b * p.b_amp).abs() < 1e-3);
        assert!((diff[(i1, i1)].re - shift + 2.0 * cp.g_b * p.b_amp).abs() < 1e-3);

        let two = SpaceLayout::with_modes(1, &[4, 3]).unwrap();
        let full = build_two_mode_hamiltonian(&p, &d, &pl, t, TwoModeVariant::Full, Expansion::ExactCos, &two).unwrap();
        assert_eq!(full.matrix().nrows(), 24);
        assert!(full.is_hermitian());
        assert!(build_two_mode_hamiltonian(&p, &d, &pl, t, TwoModeVariant::Full, Expansion::ExactCos, &layout).is_err());
    }

    #[test]
    fn n_qubit_hamiltonian_structure() {
        let d = DeviceParams::reference();
        let pl = pulse(PulseMode::Hermitized);
        let e_l = 1e4 * d.e_j_over_hbar * d.e_j_over_hbar;
        let layout = SpaceLayout::new(2, 4).unwrap();
        let t = 11e-9;
        let make = |qq| NQubitParams::new(vec![d.e_j_over_hbar; 2], vec![pl; 2], e_l, qq).unwrap();
        let h0 = build_n_qubit_hamiltonian(&make(false), &d, t, Expansion::Quadratic, &layout).unwrap();
        let h1 = build_n_qubit_hamiltonian(&make(true), &d, t, Expansion::Quadratic, &layout).unwrap();
        let ratio = (h1.matrix() - h0.matrix()).norm() / h0.matrix().norm();
        assert!(ratio < 4e-4, "ratio {ratio:e}");

        // Without H_qq: free field + per-qubit Josephson + shared coupling.
        let a = mode_operator(&layout, 0, &annihilation_matrix(4)).unwrap();
        let mut expect = a.adjoint() * &a * real(d.omega_c);
        for j in 0..2 {
            let ej = qubit_frequency(&d, &pl, t, Expansion::Quadratic);
            expect += qubit_operator(&layout, j, &pauli_x()).unwrap() * ej
                + qubit_operator(&layout, j, &pauli_z()).unwrap() * (&a + a.adjoint()) * real(d.g);
        }
        assert!((h0.matrix() - &expect).norm() < 1e-12 * expect.norm());

        let l3 = SpaceLayout::new(3, 4).unwrap();
        let np3 = NQubitParams::new(vec![d.e_j_over_hbar; 3], vec![pl; 3], e_l, true).unwrap();
        assert_eq!(build_n_qubit_hamiltonian(&np3, &d, t, Expansion::Quadratic, &l3).unwrap().matrix().nrows(), 32);
        assert!(build_n_qubit_hamiltonian(&np3, &d, t, Expansion::Quadratic, &layout).is_err());
        assert!(NQubitParams::new(vec![1.0; 2], vec![pl; 3], 1.0, true).is_err());
    }

    #[test]
    fn n1_matches_single_qubit_lab_frame() {
        let d = DeviceParams::reference();
        let pl = pulse(PulseMode::Hermitized);
        let layout = SpaceLayout::new(1, 6).unwrap();
        let np = NQubitParams::new(vec![d.e_j_over_hbar], vec![pl], 1.0, true).unwrap();
        for t in [0.0, 17e-9, 40e-9] {
            let a = build_n_qubit_hamiltonian(&np, &d, t, Expansion::ExactCos, &layout).unwrap();
            let b = build_single_qubit_hamiltonian(&d, &pl, t, Frame::Lab, Expansion::ExactCos, &layout).unwrap();
            assert!((a.matrix() - b.matrix()).norm() < 1e-12 * b.matrix().norm());
        }
    }

    #[test]
    fn inductive_energy_formula() {
        let el = NQubitParams::inductive_energy(1e-15, 1e-15, 1e-9).unwrap();
        // C_qb = C/2, so E_L = 2 Φ₀² / (π² L ℏ).
        let expect = 2.0 * FLUX_QUANTUM * FLUX_QUANTUM / (PI * PI * 1e-9 * HBAR);
        assert!((el / expect - 1.0).abs() < 1e-14);
    }

    #[test]
    fn regime_diagnostic() {
        let d = DeviceParams::reference();
        assert!(d.regime_ok());
        assert!(!DeviceParams { temperature: 5.0, ..d }.regime_ok());
        assert!(d.validate().is_ok());
        assert!(DeviceParams { g: -1.0, ..d }.validate().is_err());
    }
}
