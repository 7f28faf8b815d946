//! Running integral of the pulsed qubit frequency, ∫ν_a dt.

use num_complex::Complex64 as C64;

use crate::device::{flux_at, josephson_factor, Expansion, FluxPulse, PulseMode};

/// Eight-point Gauss–Legendre nodes and weights on [−1, 1].
pub(crate) const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
pub(crate) const GL_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Knot spacing for the tabulated (exact cosine) integral.
const KNOT_SPACING: f64 = 2e-11;

#[derive(Debug, Clone)]
pub(crate) struct NuIntegral {
    e_j: f64,
    pulse: FluxPulse,
    expansion: Expansion,
    table: Option<Table>,
}

#[derive(Debug, Clone)]
struct Table {
    dt: f64,
    values: Vec<C64>,
    rates: Vec<C64>,
}

impl NuIntegral {
    pub fn new(e_j: f64, pulse: &FluxPulse, expansion: Expansion) -> Self {
        match expansion {
            Expansion::ExactCos => Self::tabulated(e_j, pulse, expansion),
            Expansion::Quadratic => NuIntegral { e_j, pulse: *pulse, expansion, table: None },
        }
    }

    /// Knot table with cubic Hermite interpolation (the derivative at each
    /// knot is the rate itself).
    pub fn tabulated(e_j: f64, pulse: &FluxPulse, expansion: Expansion) -> Self {
        let mut out = NuIntegral { e_j, pulse: *pulse, expansion, table: None };
        let n = ((pulse.duration() / KNOT_SPACING).ceil() as usize).max(16);
        let dt = pulse.duration() / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        let mut rates = Vec::with_capacity(n + 1);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=n {
            let a = pulse.t_on() + i as f64 * dt;
            values.push(acc);
            rates.push(out.rate(a));
            if i < n {
                for (x, w) in GL_X.iter().zip(GL_W) {
                    acc += out.rate(a + 0.5 * dt * (1.0 + x)) * (0.5 * dt * w);
                }
            }
        }
        out.table = Some(Table { dt, values, rates });
        out
    }

    /// ν_a(t).
    pub fn rate(&self, t: f64) -> C64 {
        josephson_factor(self.e_j, flux_at(&self.pulse, t), self.expansion)
    }

    /// ∫_{t_on}^{t} ν_a, with t clamped into the pulse window.
    pub fn in_window(&self, t: f64) -> C64 {
        let tau = (t - self.pulse.t_on()).clamp(0.0, self.pulse.duration());
        match &self.table {
            Some(tab) => {
                let n = tab.values.len() - 1;
                let i = ((tau / tab.dt).floor() as usize).min(n - 1);
                let s = (tau - i as f64 * tab.dt) / tab.dt;
                let (s2, s3) = (s * s, s * s * s);
                tab.values[i] * (2.0 * s3 - 3.0 * s2 + 1.0)
                    + tab.rates[i] * (tab.dt * (s3 - 2.0 * s2 + s))
                    + tab.values[i + 1] * (-2.0 * s3 + 3.0 * s2)
                    + tab.rates[i + 1] * (tab.dt * (s3 - s2))
            }
            None => self.quadratic(tau),
        }
    }

    fn quadratic(&self, tau: f64) -> C64 {
        let p = &self.pulse;
        let e_j = self.e_j;
        let x = std::f64::consts::PI * p.amplitude() / 2.0;
        let k = 0.5 * e_j * x * x;
        let (nu, phi) = (p.nu(), p.phi());
        let psi = nu * tau + phi;
        match p.mode() {
            PulseMode::LiteralComplex => {
                let osc = if nu > 0.0 {
                    (C64::from_polar(1.0, 2.0 * psi) - C64::from_polar(1.0, 2.0 * phi)) / C64::new(0.0, 2.0 * nu)
                } else {
                    C64::from_polar(tau, 2.0 * phi)
                };
                C64::new(e_j * tau, 0.0) - osc * k
            }
            PulseMode::Hermitized => {
                let osc = if nu > 0.0 {
                    ((2.0 * psi).sin() - (2.0 * phi).sin()) / (2.0 * nu)
                } else {
                    tau * (2.0 * phi).cos()
                };
                C64::new(e_j * tau - 0.5 * k * (tau + osc), 0.0)
            }
        }
    }

    /// ∫_a^b ν_a over any interval; the frequency is E_J outside the window.
    pub fn between(&self, a: f64, b: f64) -> C64 {
        if b < a {
            return -self.between(b, a);
        }
        let (on, off) = (self.pulse.t_on(), self.pulse.t_off());
        let lo = a.max(on);
        let hi = b.min(off);
        let inside = if hi > lo { self.in_window(hi) - self.in_window(lo) } else { C64::new(0.0, 0.0) };
        let outside = (b - a) - (hi - lo).max(0.0);
        inside + self.e_j * outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pulse(mode: PulseMode, phi: f64) -> FluxPulse {
        FluxPulse::half_period_window(16.0 * PI * 1e6, phi, 3e-9, mode).unwrap()
    }

    #[test]
    fn table_matches_closed_form_for_quadratic() {
        for mode in [PulseMode::Hermitized, PulseMode::LiteralComplex] {
            let p = pulse(mode, 0.4);
            let exact = NuIntegral::new(15.9e10, &p, Expansion::Quadratic);
            let rebuilt = NuIntegral::tabulated(15.9e10, &p, Expansion::Quadratic);
            for k in 0..=97 {
                let t = p.t_on() + p.duration() * k as f64 / 97.0;
                let d = (rebuilt.in_window(t) - exact.in_window(t)).norm();
                assert!(d < 1e-8, "{mode:?} t={t:e} diff {d:e}");
            }
        }
    }

    #[test]
    fn derivative_is_the_rate() {
        let p = pulse(PulseMode::Hermitized, 1.1);
        for exp in [Expansion::Quadratic, Expansion::ExactCos] {
            let n = NuIntegral::new(15.9e10, &p, exp);
            let t = p.t_on() + 21.3e-9;
            let h = 1e-12;
            let d = (n.in_window(t + h) - n.in_window(t - h)) / (2.0 * h);
            assert!((d - n.rate(t)).norm() / n.rate(t).norm() < 1e-6, "{exp:?}");
        }
    }

    #[test]
    fn between_adds_free_segments() {
        let p = pulse(PulseMode::Hermitized, 0.0);
        let n = NuIntegral::new(2.0, &p, Expansion::Quadratic);
        let full = n.between(0.0, p.t_off() + 1e-9);
        let expect = n.in_window(p.t_off()) + 2.0 * (3e-9 + 1e-9);
        assert!((full - expect).norm() < 1e-20);
        assert!((n.between(1e-9, 0.0) + 2.0 * 1e-9).norm() < 1e-22);
    }
}
