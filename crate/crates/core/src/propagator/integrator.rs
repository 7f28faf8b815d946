//! Adaptive integrators for dY/dt = −i H(t) Y with Y a block of column states.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{PropagatorError, PropagatorOptions, Stepper};

/// One Hamiltonian evaluation (angular-frequency units).
pub(crate) struct Sample {
    pub m: DMatrix<C64>,
    pub hermitian: bool,
}

pub(crate) struct Integration {
    pub y: DMatrix<C64>,
    pub steps: usize,
    pub rejected: usize,
    pub all_hermitian: bool,
}

const MAX_STEPS: usize = 20_000_000;
const NEG_I: C64 = C64 { re: 0.0, im: -1.0 };

/// Runs `run` segment by segment so that no step straddles a breakpoint
/// (the flux switches on and off discontinuously).
pub(crate) fn segmented<G>(
    y0: DMatrix<C64>,
    t0: f64,
    t1: f64,
    breakpoints: &[f64],
    run: G,
) -> Result<Integration, PropagatorError>
where
    G: Fn(DMatrix<C64>, f64, f64) -> Result<Integration, PropagatorError>,
{
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > t0 && b < t1).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(t1);
    let mut total = Integration { y: y0, steps: 0, rejected: 0, all_hermitian: true };
    let mut a = t0;
    for b in cuts {
        let seg = run(total.y, a, b)?;
        total = Integration {
            y: seg.y,
            steps: total.steps + seg.steps,
            rejected: total.rejected + seg.rejected,
            all_hermitian: total.all_hermitian && seg.all_hermitian,
        };
        a = b;
    }
    Ok(total)
}

pub(crate) fn integrate<F>(
    h: &F,
    y0: DMatrix<C64>,
    t0: f64,
    t1: f64,
    opts: &PropagatorOptions,
) -> Result<Integration, PropagatorError>
where
    F: Fn(f64) -> Result<Sample, PropagatorError>,
{
    if t1 == t0 {
        let all_hermitian = h(t0)?.hermitian;
        return Ok(Integration { y: y0, steps: 0, rejected: 0, all_hermitian });
    }
    match opts.stepper {
        Stepper::Magnus => adaptive(|t, dt, y| doubled_magnus(h, y, t, dt, opts), y0, t0, t1, opts.max_step, opts),
        Stepper::DormandPrince => {
            let s = h(t0)?;
            let bound = s.m.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
            let dt0 = if bound > 0.0 { opts.max_step.min(0.5 / bound) } else { opts.max_step };
            let rhs = |t: f64, y: &DMatrix<C64>| -> Result<(DMatrix<C64>, bool), PropagatorError> {
                let s = h(t)?;
                Ok((&s.m * y * NEG_I, s.hermitian))
            };
            adaptive(|t, dt, y| dormand_prince(&rhs, y, t, dt, opts), y0, t0, t1, dt0, opts)
        }
    }
}

/// Dormand–Prince on dY/dt = rhs(t, Y); `rhs` also reports whether the
/// generator at t was Hermitian.
pub(crate) fn integrate_rhs<R>(
    rhs: &R,
    y0: DMatrix<C64>,
    t0: f64,
    t1: f64,
    first_step: f64,
    opts: &PropagatorOptions,
) -> Result<Integration, PropagatorError>
where
    R: Fn(f64, &DMatrix<C64>) -> Result<(DMatrix<C64>, bool), PropagatorError>,
{
    if t1 == t0 {
        return Ok(Integration { y: y0, steps: 0, rejected: 0, all_hermitian: true });
    }
    adaptive(|t, dt, y| dormand_prince(rhs, y, t, dt, opts), y0, t0, t1, first_step.min(opts.max_step), opts)
}

pub(crate) fn adaptive<S>(
    step: S,
    y0: DMatrix<C64>,
    t0: f64,
    t1: f64,
    first_step: f64,
    opts: &PropagatorOptions,
) -> Result<Integration, PropagatorError>
where
    S: Fn(f64, f64, &DMatrix<C64>) -> Result<(DMatrix<C64>, f64, bool), PropagatorError>,
{
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut dt = span.min(first_step);
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut all_hermitian = true;
    while t < t1 {
        if t + dt > t1 || (t1 - (t + dt)) < 1e-12 * span {
            dt = t1 - t;
        }
        let (candidate, err, herm) = step(t, dt, &y)?;
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 && candidate.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            t = if dt == t1 - t { t1 } else { t + dt };
            y = candidate;
            steps += 1;
            all_hermitian &= herm;
            dt = (dt * factor).min(opts.max_step);
        } else {
            rejected += 1;
            dt *= if err.is_finite() { factor.min(0.5) } else { 0.2 };
        }
        if dt < 1e-15 * span.abs().max(t.abs()) || steps + rejected > MAX_STEPS {
            return Err(PropagatorError::IntegrationFailure { last_good_time: t, step: dt });
        }
    }
    Ok(Integration { y, steps, rejected, all_hermitian })
}

pub(crate) fn scaled_error(a: &DMatrix<C64>, b: &DMatrix<C64>, opts: &PropagatorOptions, divisor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (x, z) in a.iter().zip(b.iter()) {
        let scale = opts.abs_tol + opts.rel_tol * x.norm().max(z.norm());
        worst = worst.max((x - z).norm() / divisor / scale);
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

/// exp(−i dt G) Y, through the eigenbasis when G is Hermitian.
pub(crate) fn expm_apply(g: &DMatrix<C64>, hermitian: bool, dt: f64, y: &DMatrix<C64>) -> DMatrix<C64> {
    if hermitian {
        let eig = g.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let mut w = v.adjoint() * y;
        for (i, lambda) in eig.eigenvalues.iter().enumerate() {
            let ph = C64::from_polar(1.0, -dt * lambda);
            for z in w.row_mut(i).iter_mut() {
                *z *= ph;
            }
        }
        v * w
    } else {
        (g * (NEG_I * dt)).exp() * y
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Fourth-order commutator-free exponential step (two exponentials).
fn magnus_step<F>(h: &F, y: &DMatrix<C64>, t: f64, dt: f64) -> Result<(DMatrix<C64>, bool), PropagatorError>
where
    F: Fn(f64) -> Result<Sample, PropagatorError>,
{
    let c1 = 0.5 - SQRT3 / 6.0;
    let c2 = 0.5 + SQRT3 / 6.0;
    let a1 = 0.25 + SQRT3 / 6.0;
    let a2 = 0.25 - SQRT3 / 6.0;
    let h1 = h(t + c1 * dt)?;
    let h2 = h(t + c2 * dt)?;
    let herm = h1.hermitian && h2.hermitian;
    let first = &h1.m * C64::new(a2, 0.0) + &h2.m * C64::new(a1, 0.0);
    let second = &h1.m * C64::new(a1, 0.0) + &h2.m * C64::new(a2, 0.0);
    let y = expm_apply(&first, herm, dt, y);
    Ok((expm_apply(&second, herm, dt, &y), herm))
}

fn doubled_magnus<F>(
    h: &F,
    y: &DMatrix<C64>,
    t: f64,
    dt: f64,
    opts: &PropagatorOptions,
) -> Result<(DMatrix<C64>, f64, bool), PropagatorError>
where
    F: Fn(f64) -> Result<Sample, PropagatorError>,
{
    let (big, h0) = magnus_step(h, y, t, dt)?;
    let (mid, h1) = magnus_step(h, y, t, 0.5 * dt)?;
    let (fine, h2) = magnus_step(h, &mid, t + 0.5 * dt, 0.5 * dt)?;
    // Richardson: the two-half-step result is off by about (fine − big)/15.
    let err = scaled_error(&fine, &big, opts, 15.0);
    Ok((fine, err, h0 && h1 && h2))
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dormand_prince<R>(
    rhs: &R,
    y: &DMatrix<C64>,
    t: f64,
    dt: f64,
    opts: &PropagatorOptions,
) -> Result<(DMatrix<C64>, f64, bool), PropagatorError>
where
    R: Fn(f64, &DMatrix<C64>) -> Result<(DMatrix<C64>, bool), PropagatorError>,
{
    let mut k: Vec<DMatrix<C64>> = Vec::with_capacity(7);
    let mut herm = true;
    for stage in 0..7 {
        let mut ys = y.clone();
        for (j, kj) in k.iter().enumerate() {
            let a = DP_A[stage][j];
            if a != 0.0 {
                ys += kj * C64::new(a * dt, 0.0);
            }
        }
        let (ks, h) = rhs(t + DP_C[stage] * dt, &ys)?;
        herm &= h;
        k.push(ks);
    }
    let mut y5 = y.clone();
    let mut y4 = y.clone();
    for j in 0..7 {
        if j < 6 && DP_A[6][j] != 0.0 {
            y5 += &k[j] * C64::new(DP_A[6][j] * dt, 0.0);
        }
        y4 += &k[j] * C64::new(DP_B4[j] * dt, 0.0);
    }
    let err = scaled_error(&y5, &y4, opts, 1.0);
    Ok((y5, err, herm))
}
