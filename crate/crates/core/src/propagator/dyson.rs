//! Second-order Dyson expansion around U₀ = exp(−i S_z ∫Δ dt).
//!
//! With χ(t) = 2∫_{t_on}^t Δ + 2ω_c t and s the S_z eigenvalue of the
//! branch, the interaction-picture coupling on |s⟩ reads
//! g e^(−isχ)(a†e^(iω_c t) + a e^(−iω_c t)) S_∓. Every diagonal matrix element
//! is then built from the single integrals J_ρ(t) = ∫ e^(−isχ + iρω_c t′) and
//! the nested K_{σρ}(t) = ∫dt₁ e^(isχ₁ + iσω_c t₁) J_ρ(t₁). Both are
//! accumulated panel by panel with eight-point Gauss–Legendre rules, the
//! inner rule restricted to [panel start, t₁].

use num_complex::Complex64 as C64;

use super::phase::{NuIntegral, GL_W, GL_X};
use super::{PropagatorError, PropagatorOptions};
use crate::device::{DeviceParams, Expansion, FluxPulse};
use crate::fockspace::Dressed;

/// Refinements of the panel width before giving up.
const MAX_REFINEMENTS: usize = 6;

fn branch_index(b: Dressed) -> usize {
    match b {
        Dressed::Minus => 0,
        Dressed::Plus => 1,
    }
}

/// Field-independent Dyson integrals at a list of times.
#[derive(Debug, Clone)]
pub struct DysonIntegrals {
    t_on: f64,
    times: Vec<f64>,
    /// [branch][time] → K_{++}, K_{+−}, K_{−+}, K_{−−}.
    k: [Vec<[C64; 4]>; 2],
    /// [branch][time] → J₊, J₋.
    j: [Vec<[C64; 2]>; 2],
    /// Absolute error bound on any K entry.
    k_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DysonValue {
    /// ⟨s, α|U(t)|s, α⟩ through the requested order.
    pub value: C64,
    /// ‖first-order correction applied to |s, α⟩‖ (reported at either order).
    pub first_order_norm: f64,
    pub second_order: C64,
    pub error_estimate: f64,
}

impl DysonIntegrals {
    /// Integrals at `times` (ascending, inside the window), refining the
    /// panel width until two successive widths agree to `opts.rel_tol`.
    pub fn compute(
        params: &DeviceParams,
        pulse: &FluxPulse,
        expansion: Expansion,
        times: &[f64],
        opts: &PropagatorOptions,
    ) -> Result<Self, PropagatorError> {
        opts.validate()?;
        let mut p = opts.panel_phase;
        let mut coarse = Self::fixed(params, pulse, expansion, times, p)?;
        let mut last = f64::INFINITY;
        for _ in 0..MAX_REFINEMENTS {
            p *= 0.5;
            let mut fine = Self::fixed(params, pulse, expansion, times, p)?;
            let (diff, scale) = fine.distance(&coarse);
            fine.k_error = diff + 1e-14 * scale;
            if diff <= opts.rel_tol * scale {
                return Ok(fine);
            }
            last = diff / scale.max(f64::MIN_POSITIVE);
            coarse = fine;
        }
        Err(PropagatorError::QuadratureNonConvergence { achieved: last, reason: "panel refinement exhausted".into() })
    }

    fn distance(&self, other: &Self) -> (f64, f64) {
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for b in 0..2 {
            for (x, y) in self.k[b].iter().zip(&other.k[b]) {
                for i in 0..4 {
                    diff = diff.max((x[i] - y[i]).norm());
                    scale = scale.max(x[i].norm());
                }
            }
        }
        (diff, scale)
    }

    /// One pass with a fixed panel phase; `k_error` is left at zero.
    pub fn fixed(
        params: &DeviceParams,
        pulse: &FluxPulse,
        expansion: Expansion,
        times: &[f64],
        panel_phase: f64,
    ) -> Result<Self, PropagatorError> {
        let (t_on, t_off) = (pulse.t_on(), pulse.t_off());
        let slack = 1e-12 * pulse.duration();
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(PropagatorError::InvalidArgument("sample times must be ascending".into()));
        }
        if times.iter().any(|&t| t < t_on - slack || t > t_off + slack || !t.is_finite()) {
            return Err(PropagatorError::InvalidArgument(format!("sample times must lie in [{t_on:e}, {t_off:e}]")));
        }
        if !(panel_phase > 0.0) {
            return Err(PropagatorError::InvalidArgument("panel phase must be positive".into()));
        }
        let nu = NuIntegral::new(params.e_j_over_hbar, pulse, expansion);
        let w_c = params.omega_c;
        let mut fastest = 0.0f64;
        for i in 0..=2000 {
            fastest = fastest.max(nu.rate(t_on + pulse.duration() * i as f64 / 2000.0).norm());
        }
        let width = panel_phase / (2.0 * fastest + w_c);

        // e^{iχ(t)} and e^{−iχ(t)} together with e^{iω_c t}.
        let phases = |t: f64| -> (C64, C64, C64) {
            let chi = (nu.in_window(t) - w_c * (t - t_on)) * 2.0 + 2.0 * w_c * t;
            let i = C64::new(0.0, 1.0);
            ((i * chi).exp(), (-i * chi).exp(), C64::from_polar(1.0, w_c * t))
        };

        let mut out = DysonIntegrals {
            t_on,
            times: times.to_vec(),
            k: [Vec::with_capacity(times.len()), Vec::with_capacity(times.len())],
            j: [Vec::with_capacity(times.len()), Vec::with_capacity(times.len())],
            k_error: 0.0,
        };
        let zero = C64::new(0.0, 0.0);
        let mut k = [[zero; 4]; 2];
        let mut j = [[zero; 2]; 2];
        let mut start = t_on;
        for &target in times {
            let target = target.clamp(t_on, t_off);
            let span = target - start;
            let panels = if span > 0.0 { (span / width).ceil() as usize } else { 0 };
            for p in 0..panels {
                let a = start + span * p as f64 / panels as f64;
                let b = start + span * (p + 1) as f64 / panels as f64;
                panel(&phases, a, b, &mut k, &mut j);
            }
            for br in 0..2 {
                out.k[br].push(k[br]);
                out.j[br].push(j[br]);
            }
            start = target;
        }
        let finite = out.k.iter().flatten().flatten().chain(out.j.iter().flatten().flatten()).all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(PropagatorError::QuadratureNonConvergence {
                achieved: f64::INFINITY,
                reason: "integrand overflowed (complex detuning phase)".into(),
            });
        }
        Ok(out)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_on(&self) -> f64 {
        self.t_on
    }

    pub fn k_error(&self) -> f64 {
        self.k_error
    }

    /// K_{++}, K_{+−}, K_{−+}, K_{−−} for a branch at sample `idx`.
    pub fn kernels(&self, idx: usize, branch: Dressed) -> [C64; 4] {
        self.k[branch_index(branch)][idx]
    }

    /// J₊, J₋ for a branch at sample `idx`.
    pub fn singles(&self, idx: usize, branch: Dressed) -> [C64; 2] {
        self.j[branch_index(branch)][idx]
    }

    /// ⟨s, α|U|s, α⟩ at sample `idx`.
    pub fn evaluate(&self, idx: usize, g: f64, alpha: C64, branch: Dressed, order: u8) -> DysonValue {
        let n = alpha.norm_sqr();
        let a2 = alpha * alpha;
        let k = self.kernels(idx, branch);
        let fields = [a2.conj(), C64::new(n, 0.0), C64::new(n + 1.0, 0.0), a2];
        let mut sum = C64::new(0.0, 0.0);
        for i in 0..4 {
            sum += fields[i] * k[i];
        }
        let second = -sum * (g * g);
        let [jp, jm] = self.singles(idx, branch);
        let first_sq = jp.norm_sqr() * (n + 1.0) + jm.norm_sqr() * n + 2.0 * (jp.conj() * jm * a2).re;
        let first_order_norm = g * first_sq.max(0.0).sqrt();
        let value = if order >= 2 { C64::new(1.0, 0.0) + second } else { C64::new(1.0, 0.0) };
        DysonValue { value, first_order_norm, second_order: second, error_estimate: g * g * (4.0 * n + 2.0) * self.k_error }
    }

    /// (θ, c) at sample `idx` from two real-α evaluations.
    pub fn theta(&self, idx: usize, g: f64, branch: Dressed, alphas_sq: (f64, f64)) -> Result<(C64, C64), PropagatorError> {
        let (n1, n2) = alphas_sq;
        if (n2 - n1).abs() < 1e-6 {
            return Err(PropagatorError::ExtractionFailure(format!("|α|² values {n1} and {n2} are too close")));
        }
        let v1 = self.evaluate(idx, g, C64::new(n1.sqrt(), 0.0), branch, 2).value;
        let v2 = self.evaluate(idx, g, C64::new(n2.sqrt(), 0.0), branch, 2).value;
        let theta = (v2 - v1) / (n2 - n1);
        let c = v1 - 1.0 - theta * n1;
        Ok((theta, c))
    }
}

fn panel<P>(phases: &P, a: f64, b: f64, k: &mut [[C64; 4]; 2], j: &mut [[C64; 2]; 2])
where
    P: Fn(f64) -> (C64, C64, C64),
{
    let half = 0.5 * (b - a);
    let j_start = *j;
    for (x, w) in GL_X.iter().zip(GL_W) {
        let t1 = a + half * (1.0 + x);
        let (ep, em, wc) = phases(t1);
        // Inner rule on [a, t1].
        let ih = 0.5 * (t1 - a);
        let mut inner = [[C64::new(0.0, 0.0); 2]; 2];
        for (y, v) in GL_X.iter().zip(GL_W) {
            let t2 = a + ih * (1.0 + y);
            let (fp, fm, vc) = phases(t2);
            let wv = ih * v;
            // Branch s = +1 uses e^{−iχ}, s = −1 uses e^{+iχ}.
            inner[0][0] += fm * vc * wv;
            inner[0][1] += fm * vc.conj() * wv;
            inner[1][0] += fp * vc * wv;
            inner[1][1] += fp * vc.conj() * wv;
        }
        let ww = half * w;
        for (br, outer) in [(0usize, ep), (1usize, em)] {
            let jp = j_start[br][0] + inner[br][0];
            let jm = j_start[br][1] + inner[br][1];
            let up = outer * wc * ww;
            let um = outer * wc.conj() * ww;
            k[br][0] += up * jp;
            k[br][1] += up * jm;
            k[br][2] += um * jp;
            k[br][3] += um * jm;
        }
        j[0][0] += em * wc * ww;
        j[0][1] += em * wc.conj() * ww;
        j[1][0] += ep * wc * ww;
        j[1][1] += ep * wc.conj() * ww;
    }
}

/// ⟨α, s|U(t)|s, α⟩ for one branch and time.
pub fn dyson_expectation(
    pulse: &FluxPulse,
    params: &DeviceParams,
    alpha: C64,
    branch: Dressed,
    t: f64,
    expansion: Expansion,
    opts: &PropagatorOptions,
) -> Result<DysonValue, PropagatorError> {
    let ints = DysonIntegrals::compute(params, pulse, expansion, &[t], opts)?;
    Ok(ints.evaluate(0, params.g, alpha, branch, opts.dyson_order))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTrace {
    pub t_on: f64,
    pub times: Vec<f64>,
    pub theta_plus: Vec<C64>,
    pub theta_minus: Vec<C64>,
    /// Constant part of the resummed exponent, reported but not part of θ.
    pub c_plus: Vec<C64>,
    pub c_minus: Vec<C64>,
    /// Bound on |Δθ| from panel refinement.
    pub error_estimate: f64,
}

impl ThetaTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn theta_trace(
    pulse: &FluxPulse,
    params: &DeviceParams,
    expansion: Expansion,
    opts: &PropagatorOptions,
    sample_times: &[f64],
) -> Result<ThetaTrace, PropagatorError> {
    let ints = DysonIntegrals::compute(params, pulse, expansion, sample_times, opts)?;
    trace_from(&ints, params.g, opts)
}

pub(crate) fn trace_from(ints: &DysonIntegrals, g: f64, opts: &PropagatorOptions) -> Result<ThetaTrace, PropagatorError> {
    let n = ints.times.len();
    let mut tr = ThetaTrace {
        t_on: ints.t_on,
        times: ints.times.clone(),
        theta_plus: Vec::with_capacity(n),
        theta_minus: Vec::with_capacity(n),
        c_plus: Vec::with_capacity(n),
        c_minus: Vec::with_capacity(n),
        error_estimate: 4.0 * g * g * ints.k_error,
    };
    for i in 0..n {
        let (tp, cp) = ints.theta(i, g, Dressed::Plus, opts.extraction_alphas_sq)?;
        let (tm, cm) = ints.theta(i, g, Dressed::Minus, opts.extraction_alphas_sq)?;
        tr.theta_plus.push(tp);
        tr.c_plus.push(cp);
        tr.theta_minus.push(tm);
        tr.c_minus.push(cm);
    }
    Ok(tr)
}

/// α → α e^(θ_s(𝒯)) on each atomic branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveMap {
    pub theta_plus: C64,
    pub theta_minus: C64,
    pub duration: f64,
}

impl EffectiveMap {
    pub fn new(theta_plus: C64, theta_minus: C64, duration: f64) -> Result<Self, PropagatorError> {
        if !(duration > 0.0) {
            return Err(PropagatorError::InvalidArgument("effective map needs a positive duration".into()));
        }
        Ok(EffectiveMap { theta_plus, theta_minus, duration })
    }

    /// The target map: π on |−⟩, nothing on |+⟩.
    pub fn ideal(duration: f64) -> Result<Self, PropagatorError> {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, std::f64::consts::PI), duration)
    }

    /// The last sample of a trace.
    pub fn from_trace(trace: &ThetaTrace) -> Result<Self, PropagatorError> {
        let i = trace.len().checked_sub(1).ok_or_else(|| PropagatorError::InvalidArgument("empty trace".into()))?;
        Self::new(trace.theta_plus[i], trace.theta_minus[i], trace.times[i] - trace.t_on)
    }

    pub fn theta(&self, branch: Dressed) -> C64 {
        match branch {
            Dressed::Plus => self.theta_plus,
            Dressed::Minus => self.theta_minus,
        }
    }
}

pub fn effective_apply(map: &EffectiveMap, branch: Dressed, alpha: C64) -> C64 {
    alpha * map.theta(branch).exp()
}
