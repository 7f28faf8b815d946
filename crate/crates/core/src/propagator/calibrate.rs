//! Choosing (g, φ) so that the pulse imprints a target phase by the half-period.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use super::dyson::DysonIntegrals;
use super::{PropagatorError, PropagatorOptions};
use crate::device::{DeviceParams, Expansion, FluxPulse};
use crate::fockspace::Dressed;

/// Search bracket for g, rad/s.
pub const G_BRACKET: (f64, f64) = (1e6, 1e10);

/// Photon number at which the first- and second-order terms are compared.
const RATIO_NBAR: f64 = 0.4;
const PHI_GRID: usize = 16;
const GOLDEN_ITERATIONS: usize = 24;
/// Panel phase used while scanning φ; the final point is refined adaptively.
const SCAN_PANEL_PHASE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationTarget {
    /// Im θ₋ at the half-period.
    MinusBranchPhase(f64),
    /// Im(θ₋ − θ₊) at the half-period.
    ConditionalPhase(f64),
}

impl CalibrationTarget {
    fn value(&self) -> f64 {
        match *self {
            CalibrationTarget::MinusBranchPhase(v) | CalibrationTarget::ConditionalPhase(v) => v,
        }
    }

    fn measure(&self, theta_plus: C64, theta_minus: C64) -> f64 {
        match self {
            CalibrationTarget::MinusBranchPhase(_) => theta_minus.im,
            CalibrationTarget::ConditionalPhase(_) => (theta_minus - theta_plus).im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub g: f64,
    pub phi: f64,
    /// Absolute time at which the target is met (t_on + π/ν).
    pub evaluation_time: f64,
    pub achieved: f64,
    pub relative_residual: f64,
    /// First-order norm over |second-order term| on |−⟩ at n̄ = 0.4.
    pub first_order_ratio: f64,
    pub theta_plus: C64,
    pub theta_minus: C64,
}

impl Calibration {
    pub fn params(&self, base: &DeviceParams) -> DeviceParams {
        base.with_g(self.g)
    }

    pub fn pulse(&self, template: &FluxPulse) -> FluxPulse {
        template.with_phi(self.phi)
    }
}

struct Candidate {
    phi: f64,
    g: f64,
    ratio: f64,
}

/// Bisection on the monotone S·g² = target inside the bracket.
fn solve_g(per_g2: f64, target: f64) -> Option<f64> {
    let (lo, hi) = G_BRACKET;
    let f = |g: f64| per_g2 * g * g - target;
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = (a * b).sqrt();
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b / a - 1.0 < 1e-14 {
            break;
        }
    }
    Some((a * b).sqrt())
}

fn evaluate_at(
    params: &DeviceParams,
    pulse: &FluxPulse,
    target: &CalibrationTarget,
    expansion: Expansion,
    opts: &PropagatorOptions,
    adaptive: bool,
) -> Result<(Option<Candidate>, f64, DysonIntegrals), PropagatorError> {
    let t = pulse.t_on() + pulse.half_period();
    let ints = if adaptive {
        DysonIntegrals::compute(params, pulse, expansion, &[t], opts)?
    } else {
        DysonIntegrals::fixed(params, pulse, expansion, &[t], SCAN_PANEL_PHASE)?
    };
    let (tp, _) = ints.theta(0, 1.0, Dressed::Plus, opts.extraction_alphas_sq)?;
    let (tm, _) = ints.theta(0, 1.0, Dressed::Minus, opts.extraction_alphas_sq)?;
    let per_g2 = target.measure(tp, tm);
    let cand = solve_g(per_g2, target.value()).map(|g| {
        let v = ints.evaluate(0, g, C64::new(RATIO_NBAR.sqrt(), 0.0), Dressed::Minus, 2);
        Candidate { phi: pulse.phi(), g, ratio: v.first_order_norm / v.second_order.norm() }
    });
    Ok((cand, per_g2, ints))
}

/// Calibrates g by bisection and φ by minimizing the first-order term.
/// The template's amplitude, ν and t_on are kept; its window is taken to be
/// one half-period for the purpose of calibration.
pub fn calibrate_pulse(
    params: &DeviceParams,
    template: &FluxPulse,
    target: CalibrationTarget,
    expansion: Expansion,
    opts: &PropagatorOptions,
) -> Result<Calibration, PropagatorError> {
    opts.validate()?;
    if !(template.nu() > 0.0) {
        return Err(PropagatorError::InvalidArgument("calibration needs nu > 0".into()));
    }
    if !(target.value() > 0.0) {
        return Err(PropagatorError::InvalidArgument("calibration target must be positive".into()));
    }
    let base = template.with_window_end(template.t_on() + template.half_period())?;
    let score = |phi: f64| -> Result<(f64, f64, Option<Candidate>), PropagatorError> {
        let (c, s, _) = evaluate_at(params, &base.with_phi(phi), &target, expansion, opts, false)?;
        Ok((c.as_ref().map_or(f64::INFINITY, |c| c.ratio), s, c))
    };

    let mut best: Option<Candidate> = None;
    let mut span_seen = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..PHI_GRID {
        let phi = PI * i as f64 / PHI_GRID as f64;
        let (r, s, c) = score(phi)?;
        span_seen = (span_seen.0.min(s), span_seen.1.max(s));
        if r < best.as_ref().map_or(f64::INFINITY, |b| b.ratio) {
            best = c;
        }
    }
    let Some(grid_best) = best else {
        let (lo, hi) = G_BRACKET;
        return Err(PropagatorError::CalibrationFailure {
            bracket: G_BRACKET,
            detail: format!(
                "target {} gives no root for any phase; achieved range at g = {lo:e}: [{:e}, {:e}], at g = {hi:e}: [{:e}, {:e}]",
                target.value(),
                span_seen.0 * lo * lo,
                span_seen.1 * lo * lo,
                span_seen.0 * hi * hi,
                span_seen.1 * hi * hi
            ),
        });
    };

    // Golden-section refinement around the best grid phase.
    let step = PI / PHI_GRID as f64;
    let (mut a, mut b) = (grid_best.phi - step, grid_best.phi + step);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = score(x1)?.0;
    let mut f2 = score(x2)?.0;
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = score(x1)?.0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = score(x2)?.0;
        }
    }
    let golden = if f1 < f2 { x1 } else { x2 };
    let phi = if f1.min(f2) < grid_best.ratio { golden } else { grid_best.phi };
    let phi = phi.rem_euclid(PI);

    let pulse = base.with_phi(phi);
    let (cand, per_g2, ints) = evaluate_at(params, &pulse, &target, expansion, opts, true)?;
    let cand = cand.ok_or_else(|| PropagatorError::CalibrationFailure {
        bracket: G_BRACKET,
        detail: format!("root lost after refinement at phi = {phi}, per-g² value {per_g2:e}"),
    })?;
    let (tp, _) = ints.theta(0, cand.g, Dressed::Plus, opts.extraction_alphas_sq)?;
    let (tm, _) = ints.theta(0, cand.g, Dressed::Minus, opts.extraction_alphas_sq)?;
    let achieved = target.measure(tp, tm);
    Ok(Calibration {
        g: cand.g,
        phi,
        evaluation_time: pulse.t_off(),
        achieved,
        relative_residual: (achieved - target.value()).abs() / target.value(),
        first_order_ratio: cand.ratio,
        theta_plus: tp,
        theta_minus: tm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_inverts_quadratic() {
        let g = solve_g(PI / 4.9e19, PI).unwrap();
        assert!((g / 7e9 - 1.0).abs() < 1e-12);
        assert!(solve_g(1e-30, PI).is_none());
        assert!(solve_g(-1.0, PI).is_none());
    }
}
