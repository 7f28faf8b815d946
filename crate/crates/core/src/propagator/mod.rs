//! Time evolution: an adaptive exact integrator, the second-order Dyson
//! expansion around the detuned qubit, θ± extraction and pulse calibration.

mod calibrate;
mod dyson;
mod exact;
pub(crate) mod integrator;
pub(crate) mod phase;

use thiserror::Error;

use crate::device::DeviceError;
use crate::fockspace::{DenseOperator, FockError, StateVector};

pub use calibrate::{calibrate_pulse, Calibration, CalibrationTarget, G_BRACKET};
pub use dyson::{
    dyson_expectation, effective_apply, theta_trace, DysonIntegrals, DysonValue, EffectiveMap, ThetaTrace,
};
pub use exact::{approximation_error, ExactRegister};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integration failed at t = {last_good_time:e} s (step {step:e} s)")]
    IntegrationFailure { last_good_time: f64, step: f64 },
    #[error("quadrature did not converge (achieved relative error {achieved:e}): {reason}")]
    QuadratureNonConvergence { achieved: f64, reason: String },
    #[error("theta extraction failed: {0}")]
    ExtractionFailure(String),
    #[error("calibration failed in g bracket [{:e}, {:e}]: {detail}", bracket.0, bracket.1)]
    CalibrationFailure { bracket: (f64, f64), detail: String },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stepper {
    /// Exponential integrator with step-doubling error control: fourth-order
    /// commutator-free Magnus for dense Hamiltonians, two-term Magnus with
    /// panel-quadrature integrals inside [`ExactRegister`].
    Magnus,
    /// Dormand–Prince 5(4) with embedded error estimate.
    DormandPrince,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest integrator step, s.
    pub max_step: f64,
    /// 1 drops the second-order Dyson term.
    pub dyson_order: u8,
    pub stepper: Stepper,
    /// Phase (rad) swept by the fastest Dyson integrand across one panel.
    pub panel_phase: f64,
    /// The two |α|² values used to separate the constant and a†a parts.
    pub extraction_alphas_sq: (f64, f64),
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1e-9,
            dyson_order: 2,
            stepper: Stepper::Magnus,
            panel_phase: 1.0,
            extraction_alphas_sq: (0.1, 0.3),
        }
    }
}

impl PropagatorOptions {
    pub fn validate(&self) -> Result<(), PropagatorError> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-3) {
                return Err(PropagatorError::InvalidArgument(format!("{name} = {v} outside (0, 1e-3]")));
            }
        }
        if !(self.max_step > 0.0) || !self.max_step.is_finite() {
            return Err(PropagatorError::InvalidArgument("max_step must be positive".into()));
        }
        if !matches!(self.dyson_order, 1 | 2) {
            return Err(PropagatorError::InvalidArgument(format!("dyson_order {} not in {{1, 2}}", self.dyson_order)));
        }
        if !(self.panel_phase > 0.0 && self.panel_phase <= 4.0) {
            return Err(PropagatorError::InvalidArgument("panel_phase must lie in (0, 4]".into()));
        }
        let (a, b) = self.extraction_alphas_sq;
        if !(a > 0.0 && b > 0.0) {
            return Err(PropagatorError::InvalidArgument("extraction |α|² values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: StateVector,
    /// |‖ψ(t1)‖ − 1| before any renormalization.
    pub norm_drift: f64,
    pub steps: usize,
    pub rejected: usize,
    /// True when every sampled Hamiltonian was Hermitian (and the state was renormalized).
    pub hermitian: bool,
}

/// Integrates i dψ/dt = H(t)ψ from `t0` to `t1`.
pub fn evolve_exact<F>(
    hamiltonian: F,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    opts: &PropagatorOptions,
) -> Result<Evolution, PropagatorError>
where
    F: Fn(f64) -> Result<DenseOperator, DeviceError>,
{
    evolve_exact_segmented(hamiltonian, psi0, t0, t1, &[], opts)
}

/// As [`evolve_exact`], restarting the step control at each breakpoint
/// (pulse edges, where H jumps).
pub fn evolve_exact_segmented<F>(
    hamiltonian: F,
    psi0: &StateVector,
    t0: f64,
    t1: f64,
    breakpoints: &[f64],
    opts: &PropagatorOptions,
) -> Result<Evolution, PropagatorError>
where
    F: Fn(f64) -> Result<DenseOperator, DeviceError>,
{
    opts.validate()?;
    if !(t1 >= t0) {
        return Err(PropagatorError::InvalidArgument(format!("t1 = {t1:e} precedes t0 = {t0:e}")));
    }
    if (psi0.norm() - 1.0).abs() > 1e-8 {
        return Err(PropagatorError::InvalidArgument(format!("initial state norm {}", psi0.norm())));
    }
    let layout = psi0.layout().clone();
    let h = |t: f64| -> Result<integrator::Sample, PropagatorError> {
        let op = hamiltonian(t)?;
        if op.layout() != &layout {
            return Err(PropagatorError::Fock(FockError::LayoutMismatch(format!(
                "Hamiltonian on {:?}, state on {:?}",
                op.layout(),
                layout
            ))));
        }
        let hermitian = op.is_hermitian();
        Ok(integrator::Sample { m: op.into_matrix(), hermitian })
    };
    let y0 = nalgebra::DMatrix::from_column_slice(psi0.dim(), 1, psi0.amplitudes().as_slice());
    let out = integrator::segmented(y0, t0, t1, breakpoints, |y, a, b| integrator::integrate(&h, y, a, b, opts))?;
    let amps = out.y.column(0).into_owned();
    let norm = amps.norm();
    let norm_drift = (norm - 1.0).abs();
    let amps = if out.all_hermitian { amps.unscale(norm) } else { amps };
    Ok(Evolution {
        state: StateVector::new(layout, amps)?,
        norm_drift,
        steps: out.steps,
        rejected: out.rejected,
        hermitian: out.all_hermitian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{build_single_qubit_hamiltonian, DeviceParams, Expansion, FluxPulse, Frame, PulseMode};
    use crate::fockspace::{coherent_state, fidelity, tensor_compose, Dressed, SpaceLayout};
    use crate::C64;

    #[test]
    fn zero_hamiltonian_is_identity() {
        let layout = SpaceLayout::new(1, 4).unwrap();
        let psi = StateVector::basis(layout.clone(), 3).unwrap();
        let out = evolve_exact(|_| Ok(DenseOperator::zeros(layout.clone())), &psi, 0.0, 1e-6, &Default::default()).unwrap();
        assert!((out.state.inner(&psi).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn free_coherent_state_rotates() {
        let d = DeviceParams::reference().with_g(0.0);
        let off = FluxPulse::new(0.7, 1e7, 0.0, 1.0, 2.0, PulseMode::Hermitized).unwrap();
        let layout = SpaceLayout::new(1, 16).unwrap();
        let alpha = C64::new(0.6, 0.2);
        let psi = tensor_compose(&[StateVector::dressed(Dressed::Minus), coherent_state(alpha, 16).unwrap()]).unwrap();
        let dt = 2.3e-10;
        for stepper in [Stepper::Magnus, Stepper::DormandPrince] {
            let opts = PropagatorOptions { stepper, ..Default::default() };
            let out = evolve_exact(
                |t| build_single_qubit_hamiltonian(&d, &off, t, Frame::Lab, Expansion::ExactCos, &layout),
                &psi,
                0.0,
                dt,
                &opts,
            )
            .unwrap();
            let rotated = alpha * C64::from_polar(1.0, -d.omega_c * dt);
            let expect = tensor_compose(&[StateVector::dressed(Dressed::Minus), coherent_state(rotated, 16).unwrap()]).unwrap();
            let f = fidelity(&out.state, &expect).unwrap();
            assert!(f > 1.0 - 1e-8, "{stepper:?}: {f}");
            assert!(out.norm_drift < 1e-8);
        }
    }

    #[test]
    fn literal_mode_reports_drift() {
        let d = DeviceParams::reference().with_g(0.0);
        let p = FluxPulse::half_period_window(16.0 * std::f64::consts::PI * 1e6, 0.0, 0.0, PulseMode::LiteralComplex).unwrap();
        let layout = SpaceLayout::new(1, 2).unwrap();
        let psi = tensor_compose(&[StateVector::dressed(Dressed::Minus), StateVector::basis(SpaceLayout::field(2).unwrap(), 0).unwrap()])
            .unwrap();
        let out = evolve_exact(
            |t| build_single_qubit_hamiltonian(&d, &p, t, Frame::Lab, Expansion::Quadratic, &layout),
            &psi,
            0.0,
            5e-9,
            &Default::default(),
        )
        .unwrap();
        assert!(!out.hermitian);
        assert!(out.norm_drift > 1e-3, "drift {}", out.norm_drift);
        assert!((out.state.norm() - 1.0).abs() > 1e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let layout = SpaceLayout::new(1, 2).unwrap();
        let psi = StateVector::basis(layout.clone(), 0).unwrap();
        let z = |_| Ok(DenseOperator::zeros(layout.clone()));
        assert!(evolve_exact(z, &psi, 1.0, 0.0, &Default::default()).is_err());
        let bad = PropagatorOptions { rel_tol: 0.1, ..Default::default() };
        assert!(evolve_exact(z, &psi, 0.0, 1.0, &bad).is_err());
        let other = SpaceLayout::new(1, 3).unwrap();
        assert!(evolve_exact(|_| Ok(DenseOperator::zeros(other.clone())), &psi, 0.0, 1.0, &Default::default()).is_err());
    }
}
