//! Recursive minimum-energy estimator on the lifted system, and the batch
//! weighted least-squares problem it solves.
//!
//! The recursion is
//!
//! ```text
//! M_{k+1} = Ã P_k Ãᵀ + G̃ Q_k G̃ᵀ
//! K_{k+1} = M_{k+1} Cᵀ (C M_{k+1} Cᵀ + R)⁻¹
//! P_{k+1} = (I - K C) M_{k+1} (I - K C)ᵀ + K R Kᵀ
//! x̂[k+1] = Ã x̂[k] + B̃ u[k] + K (y[k+1] - C (Ã x̂[k] + B̃ u[k]))
//! ```
//!
//! and its terminal estimate coincides with the minimizer of
//! `Σ rᵀQ⁻¹r + Σ vᵀR⁻¹v + (x̄_0 - x̂_0)ᵀP_0⁻¹(x̄_0 - x̂_0)` over the lifted dynamics.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_spd, inverse_cholesky_factor, symmetrize};
use crate::model::VApprox;
use crate::schedule::Schedule;

/// Relative asymmetry allowed in the Joseph-form covariance before it is re-symmetrized.
const JOSEPH_ASYMMETRY_TOL: f64 = 1e-9;

/// Weights of the minimum-energy objective.
///
/// A `Q` sequence is indexed from time 0, an `R` sequence from time 1.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub q: Schedule<DMatrix<f64>>,
    pub r: Schedule<DMatrix<f64>>,
    pub p0: DMatrix<f64>,
    pub x0_hat: DVector<f64>,
}

impl EstimatorConfig {
    pub fn new(
        q: Schedule<DMatrix<f64>>,
        r: Schedule<DMatrix<f64>>,
        p0: DMatrix<f64>,
        x0_hat: DVector<f64>,
    ) -> Result<Self> {
        let side = |s: &Schedule<DMatrix<f64>>| s.iter().next().map_or(0, |m| m.nrows());
        let (nq, nr) = (side(&q), side(&r));
        for (i, m) in q.iter().enumerate() {
            check_spd(&format!("Q[{i}]"), m, nq)?;
        }
        for (i, m) in r.iter().enumerate() {
            check_spd(&format!("R[{i}]"), m, nr)?;
        }
        check_spd("P0", &p0, x0_hat.len())?;
        Ok(Self { q, r, p0, x0_hat })
    }

    /// Constant weights `Q = q·I_n`, `R = r·I_q`, `P0 = p0·I_d` with a zero prior.
    pub fn isotropic(vapprox: &VApprox, q: f64, r: f64, p0: f64) -> Result<Self> {
        let n = vapprox.layout().n;
        let nq = vapprox.output_dim();
        let d = vapprox.dim();
        Self::new(
            Schedule::constant(DMatrix::identity(n, n) * q),
            Schedule::constant(DMatrix::identity(nq, nq) * r),
            DMatrix::identity(d, d) * p0,
            DVector::zeros(d),
        )
    }

    /// Checks the weights against the lifted system.
    pub fn validate_for(&self, vapprox: &VApprox) -> Result<()> {
        let d = vapprox.dim();
        let n = vapprox.layout().n;
        let nq = vapprox.output_dim();
        if self.x0_hat.len() != d {
            return Err(Error::dims("prior estimate", d, self.x0_hat.len()));
        }
        for m in self.q.iter() {
            if m.nrows() != n {
                return Err(Error::dims("Q", format!("{n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        for m in self.r.iter() {
            if m.nrows() != nq {
                return Err(Error::dims("R", format!("{nq}x{nq}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        Ok(())
    }
}

/// Filter state after `k` measurements.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub k: usize,
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub last_k: Option<DMatrix<f64>>,
    pub last_m: Option<DMatrix<f64>>,
}

impl EstimatorState {
    pub fn initial(config: &EstimatorConfig) -> Self {
        Self {
            k: 0,
            x_hat: config.x0_hat.clone(),
            p: config.p0.clone(),
            last_k: None,
            last_m: None,
        }
    }
}

/// One prediction/correction step from `k` to `k + 1`.
pub fn me_step(
    state: &EstimatorState,
    u_k: &DVector<f64>,
    y_next: &DVector<f64>,
    c_next: &DMatrix<f64>,
    q_k: &DMatrix<f64>,
    r_next: &DMatrix<f64>,
    vapprox: &VApprox,
) -> Result<EstimatorState> {
    let d = vapprox.dim();
    let a = &vapprox.a_tilde;
    let g = &vapprox.g_tilde;
    if state.x_hat.len() != d || state.p.shape() != (d, d) {
        return Err(Error::dims("estimator state", d, state.x_hat.len()));
    }
    if u_k.len() != vapprox.b_tilde.ncols() {
        return Err(Error::dims("input", vapprox.b_tilde.ncols(), u_k.len()));
    }
    if c_next.ncols() != d || c_next.nrows() != y_next.len() || r_next.nrows() != y_next.len() {
        return Err(Error::dims("measurement", c_next.nrows(), y_next.len()));
    }
    if q_k.nrows() != g.ncols() {
        return Err(Error::dims("Q", g.ncols(), q_k.nrows()));
    }

    let m = symmetrize(&(a * &state.p * a.transpose() + g * q_k * g.transpose()));
    let innovation_cov = symmetrize(&(c_next * &m * c_next.transpose() + r_next));
    let chol = Cholesky::new(innovation_cov)
        .ok_or_else(|| Error::IllConditioned("innovation covariance C M Cᵀ + R is not positive definite".into()))?;
    // K = M Cᵀ S⁻¹, computed as (S⁻¹ C M)ᵀ
    let gain = chol.solve(&(c_next * &m)).transpose();

    let ikc = DMatrix::identity(d, d) - &gain * c_next;
    let joseph = &ikc * &m * ikc.transpose() + &gain * r_next * gain.transpose();
    let scale = joseph.amax().max(f64::MIN_POSITIVE);
    if linalg::max_asymmetry(&joseph) > JOSEPH_ASYMMETRY_TOL * scale {
        return Err(Error::Inconsistent(format!(
            "covariance update lost symmetry ({:e})",
            linalg::max_asymmetry(&joseph)
        )));
    }
    if joseph.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned("covariance update produced non-finite entries".into()));
    }

    let predicted = a * &state.x_hat + &vapprox.b_tilde * u_k;
    let innovation = y_next - c_next * &predicted;
    let x_hat = predicted + &gain * innovation;

    Ok(EstimatorState {
        k: state.k + 1,
        x_hat,
        p: symmetrize(&joseph),
        last_k: Some(gain),
        last_m: Some(m),
    })
}

fn input_at(inputs: &[DVector<f64>], k: usize, m: usize) -> Result<DVector<f64>> {
    if inputs.is_empty() && m == 0 {
        return Ok(DVector::zeros(0));
    }
    inputs
        .get(k)
        .cloned()
        .ok_or_else(|| Error::dims("inputs length", k + 1, inputs.len()))
}

/// Runs the filter over `measurements = y[1..=N]`, returning states `0..=N`.
///
/// `inputs` holds `u[0..N]` and may be empty when the system has no inputs.
pub fn me_run(
    vapprox: &VApprox,
    config: &EstimatorConfig,
    inputs: &[DVector<f64>],
    measurements: &[DVector<f64>],
) -> Result<Vec<EstimatorState>> {
    config.validate_for(vapprox)?;
    let m = vapprox.b_tilde.ncols();
    let mut states = Vec::with_capacity(measurements.len() + 1);
    states.push(EstimatorState::initial(config));
    for (k, y) in measurements.iter().enumerate() {
        let wrap = |e: Error| Error::Step { k, source: Box::new(e) };
        let u = input_at(inputs, k, m).map_err(wrap)?;
        let c = vapprox.c_at(k + 1).map_err(wrap)?;
        let q = config.q.at(k).map_err(wrap)?;
        let r = config.r.at(k + 1).map_err(wrap)?;
        let next = me_step(states.last().unwrap(), &u, y, c, q, r, vapprox).map_err(wrap)?;
        states.push(next);
    }
    Ok(states)
}

/// Minimizer of the batch objective over `x̄[0]` and `r̄[0..N]`.
#[derive(Debug, Clone)]
pub struct BatchSolution {
    /// `x̄[N]`
    pub x_terminal: DVector<f64>,
    pub cost: f64,
    /// Smoothed states `x̄[0..=N]`.
    pub states: Vec<DVector<f64>>,
    /// Optimal residuals `r̄[0..N]`.
    pub residuals: Vec<DVector<f64>>,
}

/// Relative pivot size below which the batch design is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Solves the batch problem as one whitened dense least-squares system via QR.
#[allow(clippy::needless_range_loop)]
pub fn batch_wls_oracle(
    vapprox: &VApprox,
    config: &EstimatorConfig,
    inputs: &[DVector<f64>],
    measurements: &[DVector<f64>],
    n_steps: usize,
) -> Result<BatchSolution> {
    if n_steps < 1 {
        return Err(Error::InvalidArgument("batch horizon must be at least 1".into()));
    }
    if measurements.len() < n_steps {
        return Err(Error::dims("measurements length", n_steps, measurements.len()));
    }
    config.validate_for(vapprox)?;
    let d = vapprox.dim();
    let n = vapprox.layout().n;
    let m = vapprox.b_tilde.ncols();
    let cols = d + n_steps * n;

    let mut blocks: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();

    // x̄[k] = T_k z + c_k with z = [x̄[0]; r̄[0]; …; r̄[N-1]]
    let mut t = DMatrix::zeros(d, cols);
    t.view_mut((0, 0), (d, d)).fill_with_identity();
    let mut c_off = DVector::zeros(d);

    let lp = inverse_cholesky_factor("P0", &config.p0)?;
    blocks.push((&lp * &t, &lp * &config.x0_hat));

    for k in 0..n_steps {
        let lq = inverse_cholesky_factor("Q", config.q.at(k)?)?;
        let mut rows = DMatrix::zeros(n, cols);
        rows.view_mut((0, d + k * n), (n, n)).copy_from(&lq);
        blocks.push((rows, DVector::zeros(n)));

        let u = input_at(inputs, k, m)?;
        let mut t_next = &vapprox.a_tilde * &t;
        t_next
            .view_mut((0, d + k * n), (d, n))
            .copy_from(&vapprox.g_tilde);
        c_off = &vapprox.a_tilde * &c_off + &vapprox.b_tilde * &u;
        t = t_next;

        let c = vapprox.c_at(k + 1)?;
        let y = &measurements[k];
        if y.len() != c.nrows() {
            return Err(Error::dims(format!("measurement {}", k + 1), c.nrows(), y.len()));
        }
        let lr = inverse_cholesky_factor("R", config.r.at(k + 1)?)?;
        blocks.push((&lr * c * &t, &lr * (y - c * &c_off)));
    }

    let rows: usize = blocks.iter().map(|(a, _)| a.nrows()).sum();
    let mut design = DMatrix::zeros(rows, cols);
    let mut rhs = DVector::zeros(rows);
    let mut at = 0;
    for (a, b) in &blocks {
        design.view_mut((at, 0), (a.nrows(), cols)).copy_from(a);
        rhs.rows_mut(at, b.len()).copy_from(b);
        at += a.nrows();
    }

    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    let rank = r
        .diagonal()
        .iter()
        .filter(|v| v.abs() > RANK_TOL * diag_max.max(f64::MIN_POSITIVE))
        .count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let qtb = qr.q().transpose() * &rhs;
    let z = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, cols })?;
    let cost = (&design * &z - &rhs).norm_squared();

    let x0 = z.rows(0, d).into_owned();
    let residuals: Vec<DVector<f64>> = (0..n_steps).map(|k| z.rows(d + k * n, n).into_owned()).collect();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0);
    for k in 0..n_steps {
        let u = input_at(inputs, k, m)?;
        let next = &vapprox.a_tilde * &states[k] + &vapprox.b_tilde * &u + &vapprox.g_tilde * &residuals[k];
        states.push(next);
    }
    Ok(BatchSolution {
        x_terminal: states[n_steps].clone(),
        cost,
        states,
        residuals,
    })
}
