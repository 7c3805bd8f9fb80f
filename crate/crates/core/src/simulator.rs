//! Trajectory generation: exact full-memory simulation, lifted simulation and
//! bounded deterministic noise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{expand_model, Dims, ExpandedModel, FodnModel, FractionalTerm, LiftLayout, NoiseBounds, VApprox};
use crate::schedule::Schedule;

/// Time-indexed signals of one run.
///
/// `outputs[k - 1]` and `meas_noise[k - 1]` hold `z[k]` and `v'[k]` for `1 ≤ k ≤ N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x[0..=N]`
    pub states: Vec<DVector<f64>>,
    /// `u[0..N]`
    pub inputs: Vec<DVector<f64>>,
    /// `w[0..N]`
    pub disturbances: Vec<DVector<f64>>,
    /// `z[1..=N]`
    pub outputs: Vec<DVector<f64>>,
    /// `v'[1..=N]`
    pub meas_noise: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Number of steps `N`; defined by the outputs so that trajectories read
    /// without state columns still have a horizon.
    pub fn horizon(&self) -> usize {
        self.outputs.len()
    }

    /// `z[k]` for `k ≥ 1`.
    pub fn output(&self, k: usize) -> Option<&DVector<f64>> {
        k.checked_sub(1).and_then(|i| self.outputs.get(i))
    }

    /// True lifted state `x̃[k]`, taking signals before time 0 as zero.
    ///
    /// `None` when the trajectory carries no states (or no inputs while `m > 0`).
    pub fn lifted_state(&self, layout: LiftLayout, k: usize) -> Option<DVector<f64>> {
        let mut x = DVector::zeros(layout.dim());
        for i in 0..layout.v {
            if let Some(idx) = k.checked_sub(i) {
                x.rows_mut(i * layout.n, layout.n).copy_from(self.states.get(idx)?);
            }
            if let (true, Some(idx)) = (layout.m > 0, k.checked_sub(i + 1)) {
                x.rows_mut(layout.v * layout.n + i * layout.m, layout.m)
                    .copy_from(self.inputs.get(idx)?);
            }
        }
        Some(x)
    }
}

/// States `x̃[0..=N]` and outputs `y[1..=N]` of the lifted system.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTrajectory {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

fn signal_or_zeros(
    name: &str,
    signal: &[DVector<f64>],
    len: usize,
    dim: usize,
) -> Result<Vec<DVector<f64>>> {
    if signal.is_empty() {
        return Ok(vec![DVector::zeros(dim); len]);
    }
    if signal.len() < len {
        return Err(Error::dims(format!("{name} length"), len, signal.len()));
    }
    if let Some((i, s)) = signal[..len].iter().enumerate().find(|(_, s)| s.len() != dim) {
        return Err(Error::dims(format!("{name}[{i}]"), dim, s.len()));
    }
    Ok(signal[..len].to_vec())
}

/// Exact simulation over `n_steps` steps; empty signal slices mean zero.
pub fn simulate_exact(
    model: &FodnModel,
    inputs: &[DVector<f64>],
    disturbances: &[DVector<f64>],
    meas_noise: &[DVector<f64>],
    x0: &DVector<f64>,
    n_steps: usize,
) -> Result<Trajectory> {
    if n_steps < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let expanded = expand_model(model, n_steps)?;
    simulate_expanded(model, &expanded, inputs, disturbances, meas_noise, x0, n_steps)
}

/// Exact simulation reusing an existing expansion of at least `n_steps` lags.
pub fn simulate_expanded(
    model: &FodnModel,
    expanded: &ExpandedModel,
    inputs: &[DVector<f64>],
    disturbances: &[DVector<f64>],
    meas_noise: &[DVector<f64>],
    x0: &DVector<f64>,
    n_steps: usize,
) -> Result<Trajectory> {
    let Dims { n, m, p, q } = model.dims();
    if n_steps < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if expanded.lag_horizon() < n_steps {
        return Err(Error::HorizonExceeded {
            required: n_steps,
            available: expanded.lag_horizon(),
        });
    }
    if x0.len() != n {
        return Err(Error::dims("initial state", n, x0.len()));
    }
    let inputs = signal_or_zeros("inputs", inputs, n_steps, m)?;
    let disturbances = signal_or_zeros("disturbances", disturbances, n_steps, p)?;
    let meas_noise = signal_or_zeros("measurement noise", meas_noise, n_steps, q)?;

    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());
    for k in 0..n_steps {
        let mut next = DVector::zeros(n);
        for j in 1..=k + 1 {
            next += expanded.a_check(j) * &states[k + 1 - j];
        }
        for j in 0..=k {
            if m > 0 {
                next += expanded.b_check(j) * &inputs[k - j];
            }
            if p > 0 {
                next += expanded.g_check(j) * &disturbances[k - j];
            }
        }
        states.push(next);
    }

    let outputs = (1..=n_steps)
        .map(|k| Ok(model.output_at(k)? * &states[k] + &meas_noise[k - 1]))
        .collect::<Result<Vec<_>>>()?;

    Ok(Trajectory {
        states,
        inputs,
        disturbances,
        outputs,
        meas_noise,
    })
}

/// Iterates the lifted dynamics with a supplied residual sequence.
pub fn simulate_vapprox(
    vapprox: &VApprox,
    inputs: &[DVector<f64>],
    residuals: &[DVector<f64>],
    meas_noise: &[DVector<f64>],
    x0_tilde: &DVector<f64>,
    n_steps: usize,
) -> Result<LiftedTrajectory> {
    let layout = vapprox.layout();
    if x0_tilde.len() != vapprox.dim() {
        return Err(Error::dims("lifted initial state", vapprox.dim(), x0_tilde.len()));
    }
    let inputs = signal_or_zeros("inputs", inputs, n_steps, layout.m)?;
    let residuals = signal_or_zeros("residuals", residuals, n_steps, layout.n)?;
    let meas_noise = signal_or_zeros("measurement noise", meas_noise, n_steps, vapprox.output_dim())?;

    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0_tilde.clone());
    let mut outputs = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let next = &vapprox.a_tilde * &states[k] + &vapprox.b_tilde * &inputs[k] + &vapprox.g_tilde * &residuals[k];
        outputs.push(vapprox.c_at(k + 1)? * &next + &meas_noise[k]);
        states.push(next);
    }
    Ok(LiftedTrajectory { states, outputs })
}

/// Uniform sample from the closed ball of the given radius.
pub fn sample_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let dir = loop {
        let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            break g / norm;
        }
    };
    let u: f64 = rng.random();
    dir * (radius * u.powf(1.0 / dim as f64))
}

/// Deterministic disturbance `w[0..N]` (dimension `p`) and measurement noise `v'[1..=N]` (dimension `q`).
pub fn gen_bounded_noise(
    bounds: NoiseBounds,
    p: usize,
    q: usize,
    n_steps: usize,
    seed: u64,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..n_steps).map(|_| sample_in_ball(&mut rng, p, bounds.b_w)).collect();
    let v = (0..n_steps).map(|_| sample_in_ball(&mut rng, q, bounds.b_v)).collect();
    (w, v)
}

/// Channels in the synthetic EEG scenario.
pub const EEG_CHANNELS: usize = 4;
/// Samples per synthetic EEG run.
pub const EEG_SAMPLES: usize = 150;
pub const EEG_SAMPLING_RATE_HZ: f64 = 160.0;
/// Range of per-channel fractional orders.
pub const EEG_ORDER_RANGE: (f64, f64) = (0.4, 1.1);
pub const EEG_NOISE: NoiseBounds = NoiseBounds { b_w: 0.05, b_v: 0.1 };

/// Known stimulus driving every channel: a 10 Hz rhythm plus a slower 3 Hz component.
pub fn eeg_input(k: usize) -> f64 {
    let t = k as f64 / EEG_SAMPLING_RATE_HZ;
    0.5 * (2.0 * PI * 10.0 * t).sin() + 0.2 * (2.0 * PI * 3.0 * t).sin()
}

/// Four-channel single-input network with per-channel fractional orders.
///
/// Channel `i` obeys `Δ^{α_i} x_i[k+1] = Σ_j A_ij x_j[k] + u[k] + w_i[k]`. The
/// coupling term on `x[k]` is written with the pair of terms
/// `(-A, order 0)` and `(A, order 1)`, since `(Δ^0 - Δ^1) x[k+1] = x[k]`.
pub fn synth_eeg_model(seed: u64) -> Result<FodnModel> {
    let n = EEG_CHANNELS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = EEG_ORDER_RANGE;
    let orders: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let coupling = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -rng.random_range(0.2..0.5)
        } else {
            rng.random_range(-0.05..0.05)
        }
    });

    let mut state_terms: Vec<FractionalTerm> = orders
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut sel = DMatrix::zeros(n, n);
            sel[(i, i)] = 1.0;
            FractionalTerm::new(sel, a)
        })
        .collect();
    state_terms.push(FractionalTerm::new(-coupling.clone(), 0.0));
    state_terms.push(FractionalTerm::new(coupling, 1.0));

    FodnModel::new(
        state_terms,
        vec![FractionalTerm::new(DMatrix::from_element(n, 1, 1.0), 0.0)],
        vec![FractionalTerm::new(DMatrix::identity(n, n), 0.0)],
        Schedule::constant(DMatrix::identity(n, n)),
        Dims { n, m: 1, p: n, q: n },
    )
}

/// Synthetic EEG-shaped scenario: model plus a noisy 150-sample exact trajectory.
pub fn synth_eeg_scenario(seed: u64) -> Result<(FodnModel, Trajectory)> {
    let model = synth_eeg_model(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_fee9);
    let x0 = DVector::from_fn(EEG_CHANNELS, |_, _| rng.random_range(-1.0..1.0));
    let noise_seed: u64 = rng.random();
    let (w, v) = gen_bounded_noise(EEG_NOISE, EEG_CHANNELS, EEG_CHANNELS, EEG_SAMPLES, noise_seed);
    let u: Vec<DVector<f64>> = (0..EEG_SAMPLES)
        .map(|k| DVector::from_element(1, eeg_input(k)))
        .collect();
    let traj = simulate_exact(&model, &u, &w, &v, &x0, EEG_SAMPLES)?;
    Ok((model, traj))
}
