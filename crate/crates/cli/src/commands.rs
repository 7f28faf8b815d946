//! Figure series, gate tables, calibration and sweeps as [`CsvSeries`].

use rayon::prelude::*;
use std::f64::consts::PI;

use hybrid_cqed::device::FluxPulse;
use hybrid_cqed::dissipation::{
    atom_population_probs, sequential_pulse_probs, BathParams, PopulationModel, ProbeSource,
};
use hybrid_cqed::gates::{
    cnot_field_control, cnot_two_qubits, encode_field_qubit, ghz_branch_amplitudes, ghz_generate, hadamard_field,
    CoherentRegister, ConditionalPulse, Engine, EngineKind, ExactEngine, LogicalBit, LogicalFieldQubit, OutcomePolicy,
    PulseSchedule, Register,
};
use hybrid_cqed::propagator::{calibrate_pulse, theta_trace, Calibration, CalibrationTarget, PropagatorOptions};
use hybrid_cqed::C64;

use crate::config::{CalibrationKind, RunConfig};
use crate::csv::{Cell, CsvSeries};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Figure {
    ThetaAmp,
    ThetaPhase,
    AtomDecay,
    SequentialProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum GateKind {
    Hadamard,
    CnotField,
    CnotQq,
    Ghz,
    /// Sampled encoding shots (uses the seed).
    Encode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Figure(Figure),
    Gate(GateKind, EngineKind),
    Calibrate,
}

pub fn run(task: Task, cfg: &RunConfig) -> Result<CsvSeries, CliError> {
    match task {
        Task::Figure(f) => run_figure(f, cfg),
        Task::Gate(g, e) => run_gate(g, cfg, e),
        Task::Calibrate => run_calibrate(cfg),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn options(_cfg: &RunConfig) -> PropagatorOptions {
    PropagatorOptions::default()
}

fn template(cfg: &RunConfig, nu: f64) -> Result<FluxPulse, CliError> {
    let p = &cfg.pulse;
    let t_off = p.t_on + p.duration.unwrap_or(PI / nu);
    Ok(FluxPulse::new(p.amplitude, nu, p.phi, p.t_on, t_off, p.mode)?)
}

fn calibrate(cfg: &RunConfig, nu: f64, kind: CalibrationKind, phase: f64) -> Result<Calibration, CliError> {
    let target = match kind {
        CalibrationKind::MinusBranch => CalibrationTarget::MinusBranchPhase(phase),
        CalibrationKind::Conditional => CalibrationTarget::ConditionalPhase(phase),
    };
    Ok(calibrate_pulse(&cfg.device, &template(cfg, nu)?, target, cfg.engine.expansion, &options(cfg))?)
}

pub fn run_figure(fig: Figure, cfg: &RunConfig) -> Result<CsvSeries, CliError> {
    match fig {
        Figure::ThetaAmp | Figure::ThetaPhase => theta_figure(fig, cfg),
        Figure::AtomDecay => {
            let mut s = CsvSeries::new(&[
                ("temperature_mK", "mK"),
                ("t_ns", "ns"),
                ("P0", "1"),
                ("P1", "1"),
                ("im_PT", "1"),
            ]);
            for &temp in &cfg.bath.temperatures {
                let bath = BathParams::new(cfg.bath.beta, temp, cfg.bath.tau_kappa)?;
                for t in linspace(0.0, cfg.figure.decay_t_end, cfg.figure.points) {
                    let p = atom_population_probs(t, &cfg.device, &bath, PopulationModel::Full)?;
                    s.push(vec![(temp * 1e3).into(), (t * 1e9).into(), p.p0.into(), p.p1.into(), p.p_t.im.into()]);
                }
            }
            Ok(s)
        }
        Figure::SequentialProbe => {
            let mut s = CsvSeries::new(&[
                ("t_over_tau", "1"),
                ("P00_formula", "1"),
                ("P10_formula", "1"),
                ("P00_oracle", "1"),
                ("P10_oracle", "1"),
                ("nonphysical_branch", "flag"),
            ]);
            let bath = BathParams::new(cfg.bath.beta, cfg.bath.temperatures[0], cfg.bath.tau_kappa)?;
            let alpha = C64::new(cfg.figure.probe_alpha_sq.sqrt(), 0.0);
            for x in linspace(0.0, cfg.figure.t_over_tau_max, cfg.figure.points) {
                let t = x * bath.tau_kappa;
                let f = sequential_pulse_probs(t, alpha, &bath, ProbeSource::ClosedForm)?;
                let o = sequential_pulse_probs(t, alpha, &bath, ProbeSource::ChannelOracle)?;
                s.push(vec![x.into(), f.p00.into(), f.p10.into(), o.p00.into(), o.p10.into(), f.nonphysical_branch.into()]);
            }
            Ok(s)
        }
    }
}

fn theta_figure(fig: Figure, cfg: &RunConfig) -> Result<CsvSeries, CliError> {
    let (a, b) = match fig {
        Figure::ThetaAmp => ("exp_re_theta_minus", "exp_re_theta_plus"),
        _ => ("im_theta_minus", "im_theta_plus"),
    };
    let unit = if fig == Figure::ThetaAmp { "1" } else { "rad" };
    let mut s = CsvSeries::new(&[("nu", "rad/s"), ("t_ns", "ns"), (a, unit), (b, unit)]);
    let (params, phi) = if cfg.figure.calibrate {
        let c = calibrate(cfg, cfg.figure.nus[0], CalibrationKind::MinusBranch, PI)?;
        (c.params(&cfg.device), c.phi)
    } else {
        (cfg.device, cfg.pulse.phi)
    };
    let opts = options(cfg);
    let traces: Vec<_> = cfg
        .figure
        .nus
        .par_iter()
        .map(|&nu| {
            let p = &cfg.pulse;
            let pulse = FluxPulse::new(p.amplitude, nu, phi, p.t_on, p.t_on + cfg.figure.t_end, p.mode)?;
            let times = linspace(p.t_on, p.t_on + cfg.figure.t_end, cfg.figure.points);
            Ok::<_, CliError>((nu, theta_trace(&pulse, &params, cfg.engine.expansion, &opts, &times)?))
        })
        .collect::<Result<_, _>>()?;
    for (nu, tr) in traces {
        for i in 0..tr.len() {
            let (m, p) = (tr.theta_minus[i], tr.theta_plus[i]);
            let (x, y) = match fig {
                Figure::ThetaAmp => (m.re.exp(), p.re.exp()),
                _ => (m.im, p.im),
            };
            s.push(vec![nu.into(), ((tr.times[i] - tr.t_on) * 1e9).into(), x.into(), y.into()]);
        }
    }
    Ok(s)
}

/// The gate each engine runs: the ideal map for the effective engine, a
/// pulse calibrated for a conditional π phase for the exact one.
pub fn gate_setup(cfg: &RunConfig, engine: EngineKind) -> Result<(ConditionalPulse, Engine), CliError> {
    match engine {
        EngineKind::Effective => Ok((ConditionalPulse::ideal(template(cfg, cfg.pulse.nu)?)?, Engine::Effective)),
        EngineKind::Exact => {
            let c = calibrate(cfg, cfg.pulse.nu, CalibrationKind::Conditional, PI)?;
            let params = c.params(&cfg.device);
            let pulse = c.pulse(&template(cfg, cfg.pulse.nu)?);
            let gate = ConditionalPulse::from_dyson(&params, pulse, cfg.engine.expansion, &options(cfg))?;
            let mut e = ExactEngine::new(params, cfg.engine.fock_dim);
            e.expansion = cfg.engine.expansion;
            e.opts.rel_tol = cfg.engine.rel_tol;
            e.opts.abs_tol = cfg.engine.abs_tol;
            e.phase_correction = cfg.engine.phase_correction;
            e.include_qq = cfg.engine.include_qq;
            Ok((gate, Engine::Exact(e)))
        }
    }
}

fn amplitude(target: &CoherentRegister, state: &Register) -> Result<C64, CliError> {
    Ok(match state {
        Register::Coherent(c) => target.inner(c)?,
        Register::Dense(s) => target.to_state(s.layout().fock_dim())?.inner(s)?,
    })
}

fn nan_or(x: Option<f64>) -> Cell {
    Cell::Num(x.unwrap_or(f64::NAN))
}

pub fn run_gate(kind: GateKind, cfg: &RunConfig, engine: EngineKind) -> Result<CsvSeries, CliError> {
    let (gate, eng) = gate_setup(cfg, engine)?;
    let alpha = C64::new(cfg.protocol.alpha_sq.sqrt(), 0.0);
    let readout = LogicalFieldQubit::new(alpha * gate.map.theta_plus.exp())?;
    let logical = [LogicalBit::Zero, LogicalBit::One];
    match kind {
        GateKind::Hadamard => {
            let mut s = CsvSeries::new(&[
                ("atom_in", "bit"),
                ("atom_out", "bit"),
                ("field_out", "bit"),
                ("re", "1"),
                ("im", "1"),
                ("probability", "1"),
            ]);
            for atom in 0..2u8 {
                let out = hadamard_field(atom, alpha, &gate, &eng)?;
                for a in 0..2u8 {
                    for k in logical {
                        let z = amplitude(&CoherentRegister::logical(&[a], &readout, k)?, &out)?;
                        s.push(vec![atom.into(), a.into(), k.bit().into(), z.re.into(), z.im.into(), z.norm_sqr().into()]);
                    }
                }
            }
            Ok(s)
        }
        GateKind::CnotField => {
            let mut s = CsvSeries::new(&[
                ("atom_in", "bit"),
                ("field_in", "bit"),
                ("atom_out", "bit"),
                ("field_out", "bit"),
                ("probability", "1"),
                ("fidelity", "1"),
            ]);
            let inputs: Vec<(u8, LogicalBit)> = (0..2u8).flat_map(|a| logical.map(|k| (a, k))).collect();
            let rows = inputs
                .par_iter()
                .map(|&(a, k)| cnot_field_control(a, k, alpha, &gate, &eng))
                .collect::<Result<Vec<_>, _>>()?;
            for r in rows {
                s.push(vec![
                    r.inputs[0].into(),
                    r.inputs[1].into(),
                    r.outputs[0].into(),
                    r.outputs[1].into(),
                    r.probability.into(),
                    nan_or(r.fidelity),
                ]);
            }
            Ok(s)
        }
        GateKind::CnotQq => {
            let mut s = CsvSeries::new(&[
                ("q1_in", "bit"),
                ("q2_in", "bit"),
                ("q1_out", "bit"),
                ("q2_out", "bit"),
                ("postselect_probability", "1"),
                ("probability", "1"),
                ("fidelity", "1"),
            ]);
            let inputs: Vec<(u8, u8)> = (0..2u8).flat_map(|a| [(a, 0u8), (a, 1u8)]).collect();
            let rows = inputs
                .par_iter()
                .map(|&(q1, q2)| {
                    let sched = PulseSchedule::two_qubit_cnot(&gate, cfg.protocol.measurement_time, q2)?;
                    cnot_two_qubits(q1, q2, alpha, &sched, &eng)
                })
                .collect::<Result<Vec<_>, _>>()?;
            for (res, r) in rows {
                s.push(vec![
                    r.inputs[0].into(),
                    r.inputs[1].into(),
                    r.outputs[0].into(),
                    r.outputs[1].into(),
                    res.branches[0].probability.into(),
                    r.probability.into(),
                    nan_or(r.fidelity),
                ]);
            }
            Ok(s)
        }
        GateKind::Ghz => {
            let n = cfg.protocol.n_qubits;
            let gates: Vec<ConditionalPulse> = if cfg.protocol.simultaneous {
                vec![gate; n]
            } else {
                let step = gate.pulse.duration() + cfg.protocol.measurement_time;
                (0..n).map(|i| gate.shifted_to(gate.pulse.t_on() + i as f64 * step)).collect()
            };
            let res = ghz_generate(alpha, &gates, cfg.protocol.simultaneous, &eng)?;
            let reference = alpha * gates.iter().map(|g| g.map.theta_plus).sum::<C64>().exp();
            let (z, o) = ghz_branch_amplitudes(res.final_state(), reference)?;
            let mut s = CsvSeries::new(&[
                ("n_qubits", "1"),
                ("branch", "label"),
                ("re", "1"),
                ("im", "1"),
                ("probability", "1"),
                ("ideal_fidelity", "1"),
            ]);
            let f = res.ideal_fidelity.unwrap_or(f64::NAN);
            for (label, amp) in [(format!("{}|0_L", "0".repeat(n)), z), (format!("{}|1_L", "1".repeat(n)), o)] {
                s.push(vec![n.into(), Cell::Text(label), amp.re.into(), amp.im.into(), amp.norm_sqr().into(), f.into()]);
            }
            Ok(s)
        }
        GateKind::Encode => {
            let mut s = CsvSeries::new(&[("shot", "1"), ("outcome", "bit"), ("probability", "1")]);
            let seed = cfg.protocol.seed;
            let shots: Vec<usize> = (0..cfg.protocol.shots).collect();
            let logs = shots
                .par_iter()
                .map(|&i| encode_field_qubit(alpha, &gate, &eng, OutcomePolicy::Sample(seed.wrapping_add(i as u64))))
                .collect::<Result<Vec<_>, _>>()?;
            for (i, r) in logs.iter().enumerate() {
                let b = &r.branches[0];
                s.push(vec![i.into(), b.outcomes[0].value.into(), b.probability.into()]);
            }
            Ok(s)
        }
    }
}

pub fn run_calibrate(cfg: &RunConfig) -> Result<CsvSeries, CliError> {
    let c = calibrate(cfg, cfg.pulse.nu, cfg.calibrate.target, cfg.calibrate.phase)?;
    let mut s = CsvSeries::new(&[
        ("g", "rad/s"),
        ("phi", "rad"),
        ("evaluation_time_ns", "ns"),
        ("achieved", "rad"),
        ("relative_residual", "1"),
        ("first_order_ratio", "1"),
        ("im_theta_minus", "rad"),
        ("im_theta_plus", "rad"),
    ]);
    s.push(vec![
        c.g.into(),
        c.phi.into(),
        ((c.evaluation_time - cfg.pulse.t_on) * 1e9).into(),
        c.achieved.into(),
        c.relative_residual.into(),
        c.first_order_ratio.into(),
        c.theta_minus.im.into(),
        c.theta_plus.im.into(),
    ]);
    Ok(s)
}

/// Runs `task` once per `sweep.values` entry on a bounded pool; rows are
/// prefixed with the sweep index and value and ordered by index.
pub fn run_sweep(task: Task, cfg: &RunConfig) -> Result<CsvSeries, CliError> {
    let key = cfg.sweep.key.clone().ok_or_else(|| CliError::Config("sweep needs sweep.key and sweep.values".into()))?;
    let configs = cfg
        .sweep
        .values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.set(&key, v)?;
            c.sweep = Default::default();
            c.sweep.workers = 1;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| CliError::Numerical(format!("worker pool: {e}")))?;
    let results = pool.install(|| configs.par_iter().map(|c| run(task, c)).collect::<Result<Vec<_>, _>>())?;
    let first = &results[0];
    let mut cols: Vec<(String, String)> = vec![("sweep_index".into(), "1".into()), ("sweep_value".into(), "as given".into())];
    cols.extend(first.header.iter().cloned().zip(first.units.iter().cloned()));
    let mut out = CsvSeries { header: cols.iter().map(|c| c.0.clone()).collect(), units: cols.iter().map(|c| c.1.clone()).collect(), rows: vec![] };
    for (i, (series, value)) in results.into_iter().zip(&cfg.sweep.values).enumerate() {
        for row in series.rows {
            let mut r = vec![Cell::Int(i as i64), Cell::Text(value.replace(',', " "))];
            r.extend(row);
            out.push(r);
        }
    }
    Ok(out)
}
