//! Exact pulse propagation in the frame the Dyson expansion lives in.
//!
//! Work in the dressed basis, where a†a and every S_z^j are diagonal, and in
//! the interaction picture ψ_I(t) = exp[iω_c t a†a] Π_j exp[iS_z^j ϑ_j(t)] ψ_L(t)
//! with ϑ_j(t) = ω_c t₀ + ∫_{t₀}^t ν_j. For a single qubit this is the
//! rotating frame followed by U₀⁻¹. The diagonal part of H is removed
//! exactly by the frame; what remains is H_I(t) = Σ_c f_c(t) M_c, a handful
//! of fixed sparse matrices M_c (one per photon/qubit-flip pattern) with
//! known scalar phases f_c. No rotating-wave approximation is made.
//!
//! The default stepper takes two-term Magnus steps whose scalar integrals
//! ∫f_c and ∫∫f_c f_c′ come from panel quadrature, so a step may span many
//! counter-rotating periods; the third Magnus term has no resonant part and
//! stays bounded. Dormand–Prince on the same frame is the slow cross-check.

use nalgebra::DMatrix;
use std::collections::BTreeMap;
use num_complex::Complex64 as C64;

use super::dyson::{trace_from, DysonIntegrals, EffectiveMap};
use super::integrator::{adaptive, integrate_rhs, scaled_error, segmented, Integration};
#[cfg(test)]
use super::integrator::Sample;
use super::phase::{GL_W, GL_X};
use super::Stepper;
use super::phase::NuIntegral;
use super::{PropagatorError, PropagatorOptions};
use crate::device::{josephson_factor, flux_at, DeviceParams, Expansion, FluxPulse, NQubitParams};
use crate::fockspace::{
    annihilation_matrix, coherent_state, dressed_basis, mode_operator, pauli_y, pauli_z, qubit_operator, Dressed,
    SpaceLayout,
};

#[derive(Debug, Clone, Copy)]
struct Entry {
    row: usize,
    col: usize,
    value: C64,
    /// Index of the σ_yσ_y pair whose time-dependent prefactor applies.
    pair: Option<usize>,
}

/// Terms of H_I sharing one phase pattern.
#[derive(Debug, Clone)]
struct Class {
    /// Photon-number change (row minus column).
    dn: f64,
    /// Per-qubit S_z change (row minus column).
    ds: Vec<f64>,
    pair: Option<usize>,
    /// (row, col, value), sorted.
    matrix: Vec<(usize, usize, C64)>,
}

type Triplets = Vec<(usize, usize, C64)>;

/// [A, B] for sorted sparse triplets; exact zeros are dropped.
fn sparse_commutator(a: &Triplets, b: &Triplets) -> Triplets {
    let by_row = |m: &Triplets| {
        let mut rows: BTreeMap<usize, Vec<(usize, C64)>> = BTreeMap::new();
        for &(r, c, v) in m {
            rows.entry(r).or_default().push((c, v));
        }
        rows
    };
    let (ra, rb) = (by_row(a), by_row(b));
    let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for (x, y, rows_y, sign) in [(a, b, &rb, 1.0), (b, a, &ra, -1.0)] {
        let _ = y;
        for &(i, k, v) in x {
            if let Some(row) = rows_y.get(&k) {
                for &(j, w) in row {
                    *acc.entry((i, j)).or_default() += v * w * sign;
                }
            }
        }
    }
    acc.into_iter().filter(|(_, v)| v.norm() > 0.0).map(|((i, j), v)| (i, j, v)).collect()
}

const MAX_QUBITS: usize = 8;

fn nonzeros(m: &DMatrix<C64>, pair: Option<usize>) -> Vec<Entry> {
    let tiny = 1e-13 * m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = Vec::new();
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            let value = m[(row, col)];
            if value.norm() > tiny {
                out.push(Entry { row, col, value, pair });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExactRegister {
    params: DeviceParams,
    np: NQubitParams,
    expansion: Expansion,
    layout: SpaceLayout,
    /// g Σ_j σ_z^j (a + a†), dressed basis.
    #[cfg(test)]
    coupling: DMatrix<C64>,
    /// σ_y^j σ_y^{j+1}, dressed basis.
    yy: Vec<DMatrix<C64>>,
    /// Nonzeros of the coupling and the σ_yσ_y pairs.
    entries: Vec<Entry>,
    classes: Vec<Class>,
    /// Union sparsity pattern of the classes and their commutators.
    pattern: Vec<(usize, usize)>,
    /// Per class, (slot in `pattern`, value).
    class_slots: Vec<Vec<(usize, C64)>>,
    /// (c, c′, slots of [M_c, M_c′]) for c < c′, nonzero commutators only.
    commutators: Vec<(usize, usize, Vec<(usize, C64)>)>,
    photons: Vec<f64>,
    /// signs[j][i]: S_z^j eigenvalue of basis vector i.
    signs: Vec<Vec<f64>>,
    nu: Vec<NuIntegral>,
    /// Columns are the dressed basis vectors in computational amplitudes.
    to_computational: DMatrix<C64>,
}

impl ExactRegister {
    pub fn new(params: &DeviceParams, np: &NQubitParams, expansion: Expansion, fock_dim: usize) -> Result<Self, PropagatorError> {
        let n = np.n();
        if n > MAX_QUBITS {
            return Err(PropagatorError::InvalidArgument(format!("{n} qubits exceed the limit of {MAX_QUBITS}")));
        }
        let layout = SpaceLayout::new(n, fock_dim)?;
        let mut w = DMatrix::<C64>::identity(1, 1);
        for _ in 0..n {
            w = w.kronecker(&dressed_basis());
        }
        let w = w.kronecker(&DMatrix::<C64>::identity(fock_dim, fock_dim));
        let wa = w.adjoint();
        let a = mode_operator(&layout, 0, &annihilation_matrix(fock_dim))?;
        let xa = &a + a.adjoint();
        let mut coupling = DMatrix::<C64>::zeros(layout.dim(), layout.dim());
        for j in 0..n {
            coupling += qubit_operator(&layout, j, &pauli_z())? * &xa * C64::new(params.g, 0.0);
        }
        let coupling = &wa * coupling * &w;
        let mut yy = Vec::new();
        if np.include_qq {
            for j in 0..n.saturating_sub(1) {
                let m = qubit_operator(&layout, j, &pauli_y())? * qubit_operator(&layout, j + 1, &pauli_y())?;
                yy.push(&wa * m * &w);
            }
        }
        let mut entries = nonzeros(&coupling, None);
        for (j, m) in yy.iter().enumerate() {
            entries.extend(nonzeros(m, Some(j)));
        }
        if entries.iter().any(|e| e.row == e.col) {
            return Err(PropagatorError::InvalidArgument("coupling unexpectedly diagonal in the dressed basis".into()));
        }
        let photons: Vec<f64> = (0..layout.dim()).map(|i| (i % fock_dim) as f64).collect();
        let signs: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..layout.dim()).map(|i| if layout.qubit_bit(i, j) == 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        let nu = (0..n).map(|j| NuIntegral::new(np.e_j[j], &np.pulses[j], expansion)).collect();
        let classes = classify(&entries, &photons, &signs);
        let mut raw = Vec::new();
        for c in 0..classes.len() {
            for d in c + 1..classes.len() {
                let k = sparse_commutator(&classes[c].matrix, &classes[d].matrix);
                if !k.is_empty() {
                    raw.push((c, d, k));
                }
            }
        }
        let mut slots: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (r, c, _) in classes.iter().flat_map(|cl| cl.matrix.iter()).chain(raw.iter().flat_map(|k| k.2.iter())) {
            slots.entry((*r, *c)).or_insert(0);
        }
        for (i, v) in slots.values_mut().enumerate() {
            *v = i;
        }
        let to_slots = |m: &Triplets| m.iter().map(|(r, c, v)| (slots[&(*r, *c)], *v)).collect::<Vec<_>>();
        let class_slots = classes.iter().map(|cl| to_slots(&cl.matrix)).collect();
        let commutators = raw.iter().map(|(c, d, k)| (*c, *d, to_slots(k))).collect();
        let pattern = slots.keys().copied().collect();
        Ok(ExactRegister {
            params: *params,
            np: np.clone(),
            expansion,
            layout,
            #[cfg(test)]
            coupling,
            yy,
            entries,
            classes,
            pattern,
            class_slots,
            commutators,
            photons,
            signs,
            nu,
            to_computational: w,
        })
    }

    /// One qubit, no qubit-qubit term.
    pub fn single(params: &DeviceParams, pulse: &FluxPulse, expansion: Expansion, fock_dim: usize) -> Result<Self, PropagatorError> {
        let np = NQubitParams::new(vec![params.e_j_over_hbar], vec![*pulse], 1.0, false)?;
        Self::new(params, &np, expansion, fock_dim)
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    /// Maps dressed-basis amplitudes to computational ones (unitary, real).
    pub fn dressed_to_computational(&self) -> &DMatrix<C64> {
        &self.to_computational
    }

    /// Index of |s₁…s_N⟩|n⟩ in the dressed basis.
    pub fn dressed_index(&self, branches: &[Dressed], n: usize) -> usize {
        let bits = branches.iter().fold(0usize, |acc, b| (acc << 1) | usize::from(*b == Dressed::Plus));
        self.layout.index(bits, n)
    }

    /// Lab-frame H(t) in the dressed basis.
    #[cfg(test)]
    fn hamiltonian(&self, t: f64) -> Sample {
        let mut m = self.coupling.clone();
        let freqs: Vec<C64> = (0..self.np.n()).map(|j| self.nu[j].rate(t)).collect();
        let mut hermitian = freqs.iter().all(|f| f.im == 0.0);
        for (j, yy) in self.yy.iter().enumerate() {
            let coef = self.pair_coefficient(j, t);
            hermitian &= coef.im == 0.0;
            m += yy * coef;
        }
        for i in 0..self.layout.dim() {
            let mut d = C64::new(self.params.omega_c * self.photons[i], 0.0);
            for (j, f) in freqs.iter().enumerate() {
                d += f * self.signs[j][i];
            }
            m[(i, i)] += d;
        }
        Sample { m, hermitian }
    }

    fn pair_coefficient(&self, j: usize, t: f64) -> C64 {
        let cj = josephson_factor(1.0, flux_at(&self.np.pulses[j], t), self.expansion);
        let ck = josephson_factor(1.0, flux_at(&self.np.pulses[j + 1], t), self.expansion);
        -(cj * ck * (4.0 * self.np.e_j[j] * self.np.e_j[j + 1] / self.np.e_l))
    }

    /// Exponent i[ω_c t n + Σ_j s_j ϑ_j(t)] of the frame on each basis vector.
    fn frame_exponent(&self, t: f64, t0: f64) -> Vec<C64> {
        let theta: Vec<C64> = self.nu.iter().map(|nu| nu.between(t0, t) + self.params.omega_c * t0).collect();
        (0..self.layout.dim())
            .map(|i| {
                let mut ph = C64::new(self.params.omega_c * t * self.photons[i], 0.0);
                for (j, th) in theta.iter().enumerate() {
                    ph += th * self.signs[j][i];
                }
                C64::new(0.0, 1.0) * ph
            })
            .collect()
    }

    /// −i H_I(t) Y, with H_I the frame-transformed coupling.
    fn rhs(&self, t: f64, t0: f64, y: &DMatrix<C64>) -> (DMatrix<C64>, bool) {
        let ex = self.frame_exponent(t, t0);
        let up: Vec<C64> = ex.iter().map(|z| z.exp()).collect();
        let down: Vec<C64> = ex.iter().map(|z| (-z).exp()).collect();
        let pairs: Vec<C64> = (0..self.yy.len()).map(|j| self.pair_coefficient(j, t)).collect();
        let hermitian = ex.iter().all(|z| z.re == 0.0) && pairs.iter().all(|c| c.im == 0.0);
        let mut out = DMatrix::<C64>::zeros(y.nrows(), y.ncols());
        let neg_i = C64::new(0.0, -1.0);
        for e in &self.entries {
            let mut c = e.value * up[e.row] * down[e.col] * neg_i;
            if let Some(j) = e.pair {
                c *= pairs[j];
            }
            for k in 0..y.ncols() {
                out[(e.row, k)] += c * y[(e.col, k)];
            }
        }
        (out, hermitian)
    }

    /// f_c(t) for every class, frame anchored at `t0`.
    fn class_values(&self, t: f64, t0: f64, out: &mut [C64]) {
        let mut theta = [C64::new(0.0, 0.0); MAX_QUBITS];
        for (j, nu) in self.nu.iter().enumerate() {
            theta[j] = nu.between(t0, t) + self.params.omega_c * t0;
        }
        let wt = self.params.omega_c * t;
        for (c, cl) in self.classes.iter().enumerate() {
            let mut ph = C64::new(cl.dn * wt, 0.0);
            for (j, d) in cl.ds.iter().enumerate() {
                if *d != 0.0 {
                    ph += theta[j] * *d;
                }
            }
            let mut v = (C64::new(0.0, 1.0) * ph).exp();
            if let Some(j) = cl.pair {
                v *= self.pair_coefficient(j, t);
            }
            out[c] = v;
        }
    }

    /// Fastest phase rate among the classes over [a, b].
    fn fastest_rate(&self, a: f64, b: f64) -> f64 {
        let tops: Vec<f64> = self
            .nu
            .iter()
            .map(|nu| (0..=200).map(|k| nu.rate(a + (b - a) * k as f64 / 200.0).norm()).fold(0.0, f64::max))
            .collect();
        self.classes
            .iter()
            .map(|c| c.dn.abs() * self.params.omega_c + c.ds.iter().zip(&tops).map(|(d, t)| d.abs() * t).sum::<f64>())
            .fold(self.params.omega_c, f64::max)
    }

    /// ∫_a^b f_c and ∫_a^b dt₁ f_c(t₁) ∫_a^{t₁} f_c′(t₂), the latter flattened c·C + c′.
    fn step_integrals(&self, a: f64, b: f64, t0: f64, width: f64) -> (Vec<C64>, Vec<C64>) {
        let nc = self.classes.len();
        let zero = C64::new(0.0, 0.0);
        let mut single = vec![zero; nc];
        let mut nested = vec![zero; nc * nc];
        let (mut f1, mut f2, mut inner) = (vec![zero; nc], vec![zero; nc], vec![zero; nc]);
        let panels = (((b - a) / width).ceil() as usize).max(1);
        for p in 0..panels {
            let pa = a + (b - a) * p as f64 / panels as f64;
            let pb = a + (b - a) * (p + 1) as f64 / panels as f64;
            let half = 0.5 * (pb - pa);
            let start = single.clone();
            for (x, w) in GL_X.iter().zip(GL_W) {
                let t1 = pa + half * (1.0 + x);
                self.class_values(t1, t0, &mut f1);
                let ih = 0.5 * (t1 - pa);
                inner.iter_mut().for_each(|z| *z = zero);
                for (y, v) in GL_X.iter().zip(GL_W) {
                    self.class_values(pa + ih * (1.0 + y), t0, &mut f2);
                    for c in 0..nc {
                        inner[c] += f2[c] * (ih * v);
                    }
                }
                let ww = half * w;
                for c in 0..nc {
                    let lead = f1[c] * ww;
                    for d in 0..nc {
                        nested[c * nc + d] += lead * (start[d] + inner[d]);
                    }
                    single[c] += lead;
                }
            }
        }
        (single, nested)
    }

    /// Generator G with U = exp(−iG), the first two Magnus terms, as values
    /// on `pattern`.
    fn magnus_generator(&self, single: &[C64], nested: &[C64]) -> Vec<C64> {
        let nc = self.classes.len();
        let mut g = vec![C64::new(0.0, 0.0); self.pattern.len()];
        for (c, slots) in self.class_slots.iter().enumerate() {
            for &(k, v) in slots {
                g[k] += v * single[c];
            }
        }
        for (c, d, slots) in &self.commutators {
            let w = (nested[c * nc + d] - nested[d * nc + c]) * C64::new(0.0, -0.5);
            for &(k, v) in slots {
                g[k] += v * w;
            }
        }
        g
    }

    /// exp(−iG) Y for G given on `pattern`, by a Taylor series in substeps of
    /// 1-norm at most ½.
    fn apply_exponential(&self, g: &[C64], y: &DMatrix<C64>) -> DMatrix<C64> {
        let mut colsum = vec![0.0; self.layout.dim()];
        for (&(_, c), v) in self.pattern.iter().zip(g) {
            colsum[c] += v.norm();
        }
        let bound = colsum.iter().copied().fold(0.0, f64::max);
        let substeps = (2.0 * bound).ceil().max(1.0) as usize;
        let scale = C64::new(0.0, -1.0 / substeps as f64);
        let a: Vec<C64> = g.iter().map(|v| v * scale).collect();
        let mut out = y.clone();
        for _ in 0..substeps {
            let mut term = out.clone();
            let mut acc = out.clone();
            for k in 1..40 {
                let mut next = DMatrix::<C64>::zeros(y.nrows(), y.ncols());
                let inv = 1.0 / k as f64;
                for (&(r, c), v) in self.pattern.iter().zip(&a) {
                    let v = v * inv;
                    for j in 0..y.ncols() {
                        next[(r, j)] += v * term[(c, j)];
                    }
                }
                term = next;
                acc += &term;
                if term.norm() <= 1e-17 * acc.norm() {
                    break;
                }
            }
            out = acc;
        }
        out
    }

    fn frame_is_real(&self, a: f64, b: f64) -> bool {
        let mid = 0.5 * (a + b);
        self.nu.iter().all(|nu| [a, mid, b].iter().all(|&t| nu.rate(t).im == 0.0))
            && (0..self.yy.len()).all(|j| [a, mid, b].iter().all(|&t| self.pair_coefficient(j, t).im == 0.0))
    }

    fn magnus_segment(&self, y: DMatrix<C64>, a: f64, b: f64, t0: f64, opts: &PropagatorOptions) -> Result<Integration, PropagatorError> {
        if b == a {
            return Ok(Integration { y, steps: 0, rejected: 0, all_hermitian: true });
        }
        let width = opts.panel_phase / self.fastest_rate(a, b);
        let nc = self.classes.len();
        let step = |t: f64, dt: f64, y: &DMatrix<C64>| -> Result<(DMatrix<C64>, f64, bool), PropagatorError> {
            let mid = t + 0.5 * dt;
            let (s1, n1) = self.step_integrals(t, mid, t0, width);
            let (s2, n2) = self.step_integrals(mid, t + dt, t0, width);
            let mut s = s1.clone();
            let mut n = n1.clone();
            for c in 0..nc {
                s[c] += s2[c];
                for d in 0..nc {
                    n[c * nc + d] += n2[c * nc + d] + s2[c] * s1[d];
                }
            }
            let herm = self.frame_is_real(t, t + dt);
            let big = self.apply_exponential(&self.magnus_generator(&s, &n), y);
            let fine = self.apply_exponential(&self.magnus_generator(&s1, &n1), y);
            let fine = self.apply_exponential(&self.magnus_generator(&s2, &n2), &fine);
            let err = scaled_error(&fine, &big, opts, 3.0);
            Ok((fine, err, herm))
        };
        adaptive(step, y, a, b, opts.max_step, opts)
    }

    /// Evolves interaction-picture columns (dressed basis) from `t0` to `t1`.
    pub fn propagate(&self, y: DMatrix<C64>, t0: f64, t1: f64, opts: &PropagatorOptions) -> Result<DMatrix<C64>, PropagatorError> {
        opts.validate()?;
        if y.nrows() != self.layout.dim() {
            return Err(PropagatorError::InvalidArgument(format!("{} rows for dimension {}", y.nrows(), self.layout.dim())));
        }
        if !(t1 >= t0) {
            return Err(PropagatorError::InvalidArgument("t1 precedes t0".into()));
        }
        let edges: Vec<f64> = self.np.pulses.iter().flat_map(|p| [p.t_on(), p.t_off()]).collect();
        let out = match opts.stepper {
            Stepper::Magnus => segmented(y, t0, t1, &edges, |y, a, b| self.magnus_segment(y, a, b, t0, opts))?,
            Stepper::DormandPrince => {
                let first = 0.1 / self.fastest_rate(t0, t1);
                let rhs = |t: f64, y: &DMatrix<C64>| Ok(self.rhs(t, t0, y));
                segmented(y, t0, t1, &edges, |y, a, b| integrate_rhs(&rhs, y, a, b, first, opts))?
            }
        };
        Ok(out.y)
    }

    /// The full interaction-picture propagator U_I(t1, t0) in the dressed basis.
    pub fn propagator(&self, t0: f64, t1: f64, opts: &PropagatorOptions) -> Result<DMatrix<C64>, PropagatorError> {
        let d = self.layout.dim();
        self.propagate(DMatrix::identity(d, d), t0, t1, opts)
    }
}

fn classify(entries: &[Entry], photons: &[f64], signs: &[Vec<f64>]) -> Vec<Class> {
    let mut classes: Vec<Class> = Vec::new();
    for e in entries {
        let dn = photons[e.row] - photons[e.col];
        let ds: Vec<f64> = signs.iter().map(|s| s[e.row] - s[e.col]).collect();
        let found = classes.iter().position(|c| c.dn == dn && c.ds == ds && c.pair == e.pair);
        let idx = match found {
            Some(i) => i,
            None => {
                classes.push(Class { dn, ds, pair: e.pair, matrix: Vec::new() });
                classes.len() - 1
            }
        };
        classes[idx].matrix.push((e.row, e.col, e.value));
    }
    for c in &mut classes {
        c.matrix.sort_by_key(|&(r, col, _)| (r, col));
    }
    classes
}

/// Fock truncation used for exact checks at mean photon number `nbar`.
pub(crate) fn fock_dim_for(nbar: f64) -> usize {
    20 + (6.0 * nbar).ceil() as usize
}

/// 1 − fidelity between the exact evolution of |s⟩|α⟩ over [t_on, t_on + T]
/// and the product state |s⟩|α e^(θ_s(T))⟩ predicted by the Dyson map; the
/// worse branch is returned.
pub fn approximation_error(
    pulse: &FluxPulse,
    params: &DeviceParams,
    alpha: C64,
    duration: f64,
    expansion: Expansion,
    opts: &PropagatorOptions,
) -> Result<f64, PropagatorError> {
    let nbar = alpha.norm_sqr();
    if !(nbar <= 4.0) {
        return Err(PropagatorError::InvalidArgument(format!("|α|² = {nbar} above 4")));
    }
    let t1 = pulse.t_on() + duration;
    if !(duration > 0.0) || t1 > pulse.t_off() * (1.0 + 1e-12) + 1e-21 {
        return Err(PropagatorError::InvalidArgument(format!("duration {duration:e} outside the pulse window")));
    }
    let t1 = t1.min(pulse.t_off());
    let ints = DysonIntegrals::compute(params, pulse, expansion, &[t1], opts)?;
    let map = EffectiveMap::from_trace(&trace_from(&ints, params.g, opts)?)?;
    let f = fock_dim_for(nbar);
    let reg = ExactRegister::single(params, pulse, expansion, f)?;
    let field = coherent_state(alpha, f)?;
    let mut y = DMatrix::<C64>::zeros(reg.layout().dim(), 2);
    for (col, b) in Dressed::BOTH.iter().enumerate() {
        for n in 0..f {
            y[(reg.dressed_index(&[*b], n), col)] = field.amplitudes()[n];
        }
    }
    let out = reg.propagate(y, pulse.t_on(), t1, opts)?;
    let mut worst = 0.0f64;
    for (col, b) in Dressed::BOTH.iter().enumerate() {
        let predicted = coherent_state(alpha * map.theta(*b).exp(), f)?;
        let mut overlap = C64::new(0.0, 0.0);
        for n in 0..f {
            overlap += predicted.amplitudes()[n].conj() * out[(reg.dressed_index(&[*b], n), col)];
        }
        let norm_sq = out.column(col).norm_squared();
        worst = worst.max(1.0 - overlap.norm_sqr() / norm_sq);
    }
    Ok(worst.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{build_single_qubit_hamiltonian, Frame, PulseMode};
    use std::f64::consts::PI;

    fn pulse() -> FluxPulse {
        FluxPulse::half_period_window(16.0 * PI * 1e6, 0.3, 2e-9, PulseMode::Hermitized).unwrap()
    }

    #[test]
    fn dressed_hamiltonian_matches_builder() {
        let d = DeviceParams::reference().with_g(7e9);
        let reg = ExactRegister::single(&d, &pulse(), Expansion::ExactCos, 6).unwrap();
        let w = reg.dressed_to_computational();
        for t in [0.0, 10e-9, 40e-9] {
            let h = build_single_qubit_hamiltonian(&d, &pulse(), t, Frame::Lab, Expansion::ExactCos, reg.layout()).unwrap();
            let got = w * reg.hamiltonian(t).m * w.adjoint();
            assert!((got - h.matrix()).norm() < 1e-9 * h.matrix().norm());
        }
    }

    #[test]
    fn sparse_frame_matches_dense_lab_integration() {
        let d = DeviceParams::reference().with_g(7e9);
        let p = pulse();
        let e_l = 1e4 * d.e_j_over_hbar;
        let np = NQubitParams::new(vec![d.e_j_over_hbar; 2], vec![p, p.shifted_to(2.2e-9)], e_l, true).unwrap();
        let reg = ExactRegister::new(&d, &np, Expansion::ExactCos, 5).unwrap();
        let (t0, t1) = (1.9e-9, 2.6e-9);
        let dim = reg.layout().dim();
        let mut y0 = DMatrix::<C64>::zeros(dim, 2);
        y0[(reg.dressed_index(&[Dressed::Minus, Dressed::Plus], 1), 0)] = C64::new(1.0, 0.0);
        y0[(reg.dressed_index(&[Dressed::Plus, Dressed::Plus], 0), 1)] = C64::new(0.6, 0.0);
        y0[(reg.dressed_index(&[Dressed::Minus, Dressed::Minus], 2), 1)] = C64::new(0.0, 0.8);
        let dp = PropagatorOptions { stepper: Stepper::DormandPrince, ..Default::default() };
        let sparse = reg.propagate(y0.clone(), t0, t1, &dp).unwrap();
        let magnus = reg.propagate(y0.clone(), t0, t1, &Default::default()).unwrap();
        let dm = (&sparse - &magnus).norm();
        assert!(dm < 1e-6, "magnus vs dp {dm:e}");

        let mut yl = y0;
        for (i, z) in reg.frame_exponent(t0, t0).iter().enumerate() {
            yl.row_mut(i).iter_mut().for_each(|v| *v *= (-z).exp());
        }
        let h = |t: f64| Ok(reg.hamiltonian(t));
        let opts = PropagatorOptions { max_step: 2e-13, ..Default::default() };
        let edges = [2.0e-9, 2.2e-9];
        let mut dense = segmented(yl, t0, t1, &edges, |y, a, b| super::super::integrator::integrate(&h, y, a, b, &opts)).unwrap().y;
        for (i, z) in reg.frame_exponent(t1, t0).iter().enumerate() {
            dense.row_mut(i).iter_mut().for_each(|v| *v *= z.exp());
        }
        let diff = (&sparse - &dense).norm();
        assert!(diff < 1e-6, "diff {diff:e}");
        assert!((sparse.column(1).norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn decoupled_interaction_picture_is_identity() {
        let d = DeviceParams::reference().with_g(0.0);
        let reg = ExactRegister::single(&d, &pulse(), Expansion::Quadratic, 5).unwrap();
        let u = reg.propagator(0.0, 70e-9, &Default::default()).unwrap();
        let d = (u - DMatrix::<C64>::identity(10, 10)).norm();
        assert!(d < 1e-7, "{d:e}");
    }

    #[test]
    fn zero_coupling_has_no_error() {
        let d = DeviceParams::reference().with_g(0.0);
        let p = pulse();
        let e = approximation_error(&p, &d, C64::new(0.4f64.sqrt(), 0.0), p.duration(), Expansion::Quadratic, &Default::default())
            .unwrap();
        assert!(e < 1e-8, "{e:e}");
    }

    #[test]
    fn weak_coupling_follows_dyson_rotating_frame() {
        // Short window, moderate g: the exact frame overlap matches the
        // resummed second-order term.
        let d = DeviceParams::reference().with_g(3e9);
        let p = pulse();
        let t1 = p.t_on() + 8e-9;
        let reg = ExactRegister::single(&d, &p, Expansion::Quadratic, 20).unwrap();
        let alpha = C64::new(0.5, 0.2);
        let field = coherent_state(alpha, 20).unwrap();
        let mut y = DMatrix::<C64>::zeros(40, 1);
        for n in 0..20 {
            y[(reg.dressed_index(&[Dressed::Minus], n), 0)] = field.amplitudes()[n];
        }
        let out = reg.propagate(y.clone(), p.t_on(), t1, &Default::default()).unwrap();
        let exact = (y.adjoint() * out)[(0, 0)];
        let ints = DysonIntegrals::compute(&d, &p, Expansion::Quadratic, &[t1], &Default::default()).unwrap();
        let dyson = ints.evaluate(0, d.g, alpha, Dressed::Minus, 2);
        let diff = (exact - dyson.second_order.exp()).norm();
        assert!(diff < 0.01 * dyson.second_order.norm(), "exact {exact} dyson {}", dyson.value);
    }
}
