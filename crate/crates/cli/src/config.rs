//! `section.key = value` run configuration.
//!
//! Values are SI numbers with optional unit suffixes (`62.5 ns`, `30 mK`,
//! `16pi MHz`). Frequency suffixes scale an angular frequency: `1 GHz`
//! means 10⁹ rad/s. A `pi` right after the number multiplies it by π.
//! Every key has a default (the published operating point); unknown keys
//! and malformed values are rejected.

use std::fmt::Write as _;
use std::path::Path;

use hybrid_cqed::device::{DeviceParams, Expansion, PulseMode};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    None,
    Time,
    Temperature,
    Frequency,
    MicroEv,
}

/// Power of ten of each unit suffix.
fn suffix_exponent(unit: Unit, suffix: &str) -> Option<i32> {
    let e = match (unit, suffix) {
        (_, "") => 0,
        (Unit::Time, "s") => 0,
        (Unit::Time, "ms") => -3,
        (Unit::Time, "us") => -6,
        (Unit::Time, "ns") => -9,
        (Unit::Time, "ps") => -12,
        (Unit::Temperature, "K") => 0,
        (Unit::Temperature, "mK") => -3,
        (Unit::Frequency, "Hz") => 0,
        (Unit::Frequency, "kHz") => 3,
        (Unit::Frequency, "MHz") => 6,
        (Unit::Frequency, "GHz") => 9,
        (Unit::MicroEv, "ueV") => 0,
        _ => return None,
    };
    Some(e)
}

fn parse_number(raw: &str, unit: Unit) -> Result<f64, String> {
    let raw = raw.trim();
    let (num, suffix) = match raw.split_once(char::is_whitespace) {
        Some((n, s)) => (n, s.trim()),
        None => (raw, ""),
    };
    let exp = suffix_exponent(unit, suffix).ok_or_else(|| format!("unit {suffix:?} not valid here"))?;
    let bad = || format!("not a number: {raw:?}");
    let v = match num.strip_suffix("pi") {
        Some("") => std::f64::consts::PI * format!("1e{exp}").parse::<f64>().map_err(|_| bad())?,
        Some(n) => n.parse::<f64>().map_err(|_| bad())? * std::f64::consts::PI * format!("1e{exp}").parse::<f64>().map_err(|_| bad())?,
        // Folding the prefix into the decimal exponent keeps "62.5 ns" == 62.5e-9 exactly.
        None => {
            let (mantissa, own) = match num.split_once(['e', 'E']) {
                Some((m, e)) => (m, e.parse::<i32>().map_err(|_| bad())?),
                None => (num, 0),
            };
            format!("{mantissa}e{}", own + exp).parse().map_err(|_| bad())?
        }
    };
    if !v.is_finite() {
        return Err(format!("non-finite value {raw:?}"));
    }
    Ok(v)
}

fn parse_list(raw: &str, unit: Unit) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = raw.split(',').map(|x| parse_number(x, unit)).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn parse_usize(raw: &str) -> Result<usize, String> {
    raw.trim().parse().map_err(|_| format!("expected a nonnegative integer, got {:?}", raw.trim()))
}

/// Shortest representation that parses back to the same f64.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationKind {
    MinusBranch,
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseConfig {
    pub amplitude: f64,
    pub nu: f64,
    pub phi: f64,
    pub t_on: f64,
    /// Window length; `None` means one half-period π/ν.
    pub duration: Option<f64>,
    pub mode: PulseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathConfig {
    pub beta: f64,
    pub temperatures: Vec<f64>,
    pub tau_kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub alpha_sq: f64,
    pub n_qubits: usize,
    pub measurement_time: f64,
    pub simultaneous: bool,
    pub shots: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub expansion: Expansion,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub fock_dim: usize,
    pub phase_correction: bool,
    pub include_qq: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateConfig {
    pub target: CalibrationKind,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureConfig {
    pub nus: Vec<f64>,
    pub t_end: f64,
    pub points: usize,
    /// Calibrate g at the first ν before tracing.
    pub calibrate: bool,
    /// Window of the qubit decay curves.
    pub decay_t_end: f64,
    pub t_over_tau_max: f64,
    pub probe_alpha_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepConfig {
    pub key: Option<String>,
    pub values: Vec<String>,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub pulse: PulseConfig,
    pub bath: BathConfig,
    pub protocol: ProtocolConfig,
    pub engine: EngineConfig,
    pub calibrate: CalibrateConfig,
    pub figure: FigureConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nu = 16.0 * std::f64::consts::PI * 1e6;
        RunConfig {
            device: DeviceParams::reference(),
            pulse: PulseConfig { amplitude: 0.7, nu, phi: 0.0, t_on: 0.0, duration: None, mode: PulseMode::Hermitized },
            bath: BathConfig { beta: 1e-3, temperatures: vec![0.010, 0.020, 0.040], tau_kappa: 1e-6 },
            protocol: ProtocolConfig {
                alpha_sq: 0.4,
                n_qubits: 2,
                measurement_time: 5e-9,
                simultaneous: true,
                shots: 16,
                seed: 0,
            },
            engine: EngineConfig {
                expansion: Expansion::ExactCos,
                rel_tol: 1e-6,
                abs_tol: 1e-8,
                fock_dim: 32,
                phase_correction: true,
                include_qq: false,
            },
            calibrate: CalibrateConfig { target: CalibrationKind::MinusBranch, phase: std::f64::consts::PI },
            figure: FigureConfig {
                nus: vec![nu, 0.5 * nu],
                t_end: 250e-9,
                points: 201,
                calibrate: true,
                decay_t_end: 10e-9,
                t_over_tau_max: 2.0,
                probe_alpha_sq: 10.0,
            },
            sweep: SweepConfig { key: None, values: Vec::new(), workers: 4 },
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `section.key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key; the error names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        self.set_inner(key, value).map_err(|e| CliError::Config(format!("{key}: {e}")))
    }

    fn set_inner(&mut self, key: &str, v: &str) -> Result<(), String> {
        use Unit::*;
        match key {
            "device.e_j" => self.device.e_j_over_hbar = parse_number(v, Frequency)?,
            "device.e_c" => self.device.e_c_uev = parse_number(v, MicroEv)?,
            "device.omega_c" => self.device.omega_c = parse_number(v, Frequency)?,
            "device.g" => self.device.g = parse_number(v, Frequency)?,
            "device.gap" => self.device.gap_uev = parse_number(v, MicroEv)?,
            "device.temperature" => self.device.temperature = parse_number(v, Temperature)?,
            "pulse.amplitude" => self.pulse.amplitude = parse_number(v, None)?,
            "pulse.nu" => self.pulse.nu = parse_number(v, Frequency)?,
            "pulse.phi" => self.pulse.phi = parse_number(v, None)?,
            "pulse.t_on" => self.pulse.t_on = parse_number(v, Time)?,
            "pulse.duration" => {
                self.pulse.duration = match v {
                    "half_period" => Option::None,
                    _ => Some(parse_number(v, Time)?),
                }
            }
            "pulse.mode" => {
                self.pulse.mode = match v {
                    "hermitized" => PulseMode::Hermitized,
                    "literal" => PulseMode::LiteralComplex,
                    _ => return Err(format!("expected hermitized or literal, got {v:?}")),
                }
            }
            "bath.beta" => self.bath.beta = parse_number(v, None)?,
            "bath.temperatures" => self.bath.temperatures = parse_list(v, Temperature)?,
            "bath.tau_kappa" => self.bath.tau_kappa = parse_number(v, Time)?,
            "protocol.alpha_sq" => self.protocol.alpha_sq = parse_number(v, None)?,
            "protocol.n_qubits" => self.protocol.n_qubits = parse_usize(v)?,
            "protocol.measurement_time" => self.protocol.measurement_time = parse_number(v, Time)?,
            "protocol.simultaneous" => self.protocol.simultaneous = parse_bool(v)?,
            "protocol.shots" => self.protocol.shots = parse_usize(v)?,
            "protocol.seed" => self.protocol.seed = v.trim().parse().map_err(|_| format!("bad seed {v:?}"))?,
            "engine.expansion" => {
                self.engine.expansion = match v {
                    "exact_cos" => Expansion::ExactCos,
                    "quadratic" => Expansion::Quadratic,
                    _ => return Err(format!("expected exact_cos or quadratic, got {v:?}")),
                }
            }
            "engine.rel_tol" => self.engine.rel_tol = parse_number(v, None)?,
            "engine.abs_tol" => self.engine.abs_tol = parse_number(v, None)?,
            "engine.fock_dim" => self.engine.fock_dim = parse_usize(v)?,
            "engine.phase_correction" => self.engine.phase_correction = parse_bool(v)?,
            "engine.include_qq" => self.engine.include_qq = parse_bool(v)?,
            "calibrate.target" => {
                self.calibrate.target = match v {
                    "minus_branch" => CalibrationKind::MinusBranch,
                    "conditional" => CalibrationKind::Conditional,
                    _ => return Err(format!("expected minus_branch or conditional, got {v:?}")),
                }
            }
            "calibrate.phase" => self.calibrate.phase = parse_number(v, None)?,
            "figure.nus" => self.figure.nus = parse_list(v, Frequency)?,
            "figure.t_end" => self.figure.t_end = parse_number(v, Time)?,
            "figure.points" => self.figure.points = parse_usize(v)?,
            "figure.calibrate" => self.figure.calibrate = parse_bool(v)?,
            "figure.decay_t_end" => self.figure.decay_t_end = parse_number(v, Time)?,
            "figure.t_over_tau_max" => self.figure.t_over_tau_max = parse_number(v, None)?,
            "figure.probe_alpha_sq" => self.figure.probe_alpha_sq = parse_number(v, None)?,
            "sweep.key" => {
                if v.starts_with("sweep.") || !KEYS.contains(&v) {
                    return Err(format!("cannot sweep {v:?}"));
                }
                self.sweep.key = Some(v.to_string())
            }
            "sweep.values" => self.sweep.values = v.split(';').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect(),
            "sweep.workers" => self.sweep.workers = parse_usize(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.device.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.pulse.amplitude > 0.0 && self.pulse.amplitude <= 1.0) {
            return bad(format!("pulse.amplitude {} outside (0, 1]", self.pulse.amplitude));
        }
        if !(self.pulse.nu > 0.0) {
            return bad("pulse.nu must be positive".into());
        }
        if matches!(self.pulse.duration, Some(d) if !(d > 0.0)) {
            return bad("pulse.duration must be positive".into());
        }
        if !(self.bath.beta > 0.0 && self.bath.tau_kappa > 0.0) || self.bath.temperatures.iter().any(|t| !(*t > 0.0)) {
            return bad("bath values must be positive".into());
        }
        if !(self.protocol.alpha_sq > 0.0) {
            return bad("protocol.alpha_sq must be positive".into());
        }
        if self.protocol.n_qubits == 0 {
            return bad("protocol.n_qubits must be at least 1".into());
        }
        if !(self.engine.rel_tol > 0.0 && self.engine.abs_tol > 0.0) || self.engine.fock_dim < 2 {
            return bad("engine tolerances must be positive and fock_dim at least 2".into());
        }
        if self.figure.nus.iter().any(|n| !(*n > 0.0)) || !(self.figure.t_end > 0.0) || self.figure.points < 2 {
            return bad("figure needs positive nus, positive t_end and at least 2 points".into());
        }
        if !(self.figure.t_over_tau_max > 0.0 && self.figure.decay_t_end > 0.0 && self.figure.probe_alpha_sq > 0.0) {
            return bad("figure.decay_t_end, t_over_tau_max and probe_alpha_sq must be positive".into());
        }
        if self.sweep.workers == 0 {
            return bad("sweep.workers must be at least 1".into());
        }
        if self.sweep.key.is_some() != !self.sweep.values.is_empty() {
            return bad("sweep.key and sweep.values go together".into());
        }
        Ok(())
    }

    /// Every key, in a fixed order, with a value that parses back exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.device;
        let p = &self.pulse;
        let e = &self.engine;
        let b = |x: bool| x.to_string();
        vec![
            ("device.e_j", num(d.e_j_over_hbar)),
            ("device.e_c", num(d.e_c_uev)),
            ("device.omega_c", num(d.omega_c)),
            ("device.g", num(d.g)),
            ("device.gap", num(d.gap_uev)),
            ("device.temperature", num(d.temperature)),
            ("pulse.amplitude", num(p.amplitude)),
            ("pulse.nu", num(p.nu)),
            ("pulse.phi", num(p.phi)),
            ("pulse.t_on", num(p.t_on)),
            ("pulse.duration", p.duration.map_or("half_period".into(), num)),
            ("pulse.mode", match p.mode {
                PulseMode::Hermitized => "hermitized".into(),
                PulseMode::LiteralComplex => "literal".into(),
            }),
            ("bath.beta", num(self.bath.beta)),
            ("bath.temperatures", list(&self.bath.temperatures)),
            ("bath.tau_kappa", num(self.bath.tau_kappa)),
            ("protocol.alpha_sq", num(self.protocol.alpha_sq)),
            ("protocol.n_qubits", self.protocol.n_qubits.to_string()),
            ("protocol.measurement_time", num(self.protocol.measurement_time)),
            ("protocol.simultaneous", b(self.protocol.simultaneous)),
            ("protocol.shots", self.protocol.shots.to_string()),
            ("protocol.seed", self.protocol.seed.to_string()),
            ("engine.expansion", match e.expansion {
                Expansion::ExactCos => "exact_cos".into(),
                Expansion::Quadratic => "quadratic".into(),
            }),
            ("engine.rel_tol", num(e.rel_tol)),
            ("engine.abs_tol", num(e.abs_tol)),
            ("engine.fock_dim", e.fock_dim.to_string()),
            ("engine.phase_correction", b(e.phase_correction)),
            ("engine.include_qq", b(e.include_qq)),
            ("calibrate.target", match self.calibrate.target {
                CalibrationKind::MinusBranch => "minus_branch".into(),
                CalibrationKind::Conditional => "conditional".into(),
            }),
            ("calibrate.phase", num(self.calibrate.phase)),
            ("figure.nus", list(&self.figure.nus)),
            ("figure.t_end", num(self.figure.t_end)),
            ("figure.points", self.figure.points.to_string()),
            ("figure.calibrate", b(self.figure.calibrate)),
            ("figure.decay_t_end", num(self.figure.decay_t_end)),
            ("figure.t_over_tau_max", num(self.figure.t_over_tau_max)),
            ("figure.probe_alpha_sq", num(self.figure.probe_alpha_sq)),
            ("sweep.key", self.sweep.key.clone().unwrap_or_default()),
            ("sweep.values", self.sweep.values.join("; ")),
            ("sweep.workers", self.sweep.workers.to_string()),
        ]
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            if (k == "sweep.key" || k == "sweep.values") && v.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const KEYS: &[&str] = &[
    "device.e_j",
    "device.e_c",
    "device.omega_c",
    "device.g",
    "device.gap",
    "device.temperature",
    "pulse.amplitude",
    "pulse.nu",
    "pulse.phi",
    "pulse.t_on",
    "pulse.duration",
    "pulse.mode",
    "bath.beta",
    "bath.temperatures",
    "bath.tau_kappa",
    "protocol.alpha_sq",
    "protocol.n_qubits",
    "protocol.measurement_time",
    "protocol.simultaneous",
    "protocol.shots",
    "protocol.seed",
    "engine.expansion",
    "engine.rel_tol",
    "engine.abs_tol",
    "engine.fock_dim",
    "engine.phase_correction",
    "engine.include_qq",
    "calibrate.target",
    "calibrate.phase",
    "figure.nus",
    "figure.t_end",
    "figure.points",
    "figure.calibrate",
    "figure.decay_t_end",
    "figure.t_over_tau_max",
    "figure.probe_alpha_sq",
    "sweep.key",
    "sweep.values",
    "sweep.workers",
];
