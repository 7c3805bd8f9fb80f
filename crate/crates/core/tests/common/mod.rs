//! Independent oracles and random instance generators shared by the integration tests.
#![allow(dead_code)]

use frodest_core::analysis::{check_assumptions, AssumptionReport};
use frodest_core::model::{Dims, FodnModel, FractionalTerm, LiftLayout, VApprox};
use frodest_core::{build_v_approximation, expand_model, EstimatorConfig, Schedule, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(-1)^j α(α-1)…(α-j+1) / j!`, numerator and factorial accumulated separately.
pub fn binomial_coefficient(alpha: f64, j: usize) -> f64 {
    let mut num = 1.0;
    let mut fact = 1.0;
    for i in 0..j {
        num *= alpha - i as f64;
        fact *= (i + 1) as f64;
    }
    let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * num / fact
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// Orders in `(0.1, hi)` avoiding integers, so that truncated lags are never exactly zero.
pub fn fractional_order(rng: &mut ChaCha8Rng, hi: f64) -> f64 {
    loop {
        let a: f64 = rng.random_range(0.1..hi);
        if (a - a.round()).abs() > 0.05 {
            return a;
        }
    }
}

/// Random model with a well-conditioned `Σ A_i` (a dominant identity in the first term).
pub fn random_model(rng: &mut ChaCha8Rng, dims: Dims) -> FodnModel {
    random_model_with_orders(rng, dims, 1.9)
}

/// [`random_model`] with state orders below `max_order`.
pub fn random_model_with_orders(rng: &mut ChaCha8Rng, dims: Dims, max_order: f64) -> FodnModel {
    let Dims { n, m, p, q } = dims;
    let n_terms = rng.random_range(1..=3);
    let mut state_terms = Vec::new();
    for t in 0..n_terms {
        let mut a = uniform_matrix(rng, n, n, 0.3);
        if t == 0 {
            a += DMatrix::identity(n, n);
        }
        state_terms.push(FractionalTerm::new(a, fractional_order(rng, max_order)));
    }
    let input_terms = if m > 0 {
        vec![FractionalTerm::new(uniform_matrix(rng, n, m, 1.0), rng.random_range(0.0..1.5))]
    } else {
        vec![]
    };
    let disturbance_terms = if p > 0 {
        vec![FractionalTerm::new(uniform_matrix(rng, n, p, 1.0), rng.random_range(0.0..1.5))]
    } else {
        vec![]
    };
    FodnModel::new(
        state_terms,
        input_terms,
        disturbance_terms,
        Schedule::constant(uniform_matrix(rng, q, n, 1.0)),
        dims,
    )
    .expect("dominant first term keeps the sum invertible")
}

fn fractional_sum(terms: &[FractionalTerm], series: &[DVector<f64>], k: usize, dim: usize) -> DVector<f64> {
    // Σ_i M_i Σ_{j=0}^{k} c_j^{a_i} s[k-j]
    let mut acc = DVector::zeros(dim);
    for t in terms {
        for j in 0..=k {
            acc += &t.matrix * &series[k - j] * binomial_coefficient(t.order, j);
        }
    }
    acc
}

/// Solves `Σ A_i Δ^{a_i} x[k+1] = Σ B_i Δ^{b_i} u[k] + Σ G_i Δ^{g_i} w[k]` step by step.
pub fn direct_simulation(
    model: &FodnModel,
    inputs: &[DVector<f64>],
    disturbances: &[DVector<f64>],
    x0: &DVector<f64>,
    n_steps: usize,
) -> Vec<DVector<f64>> {
    let Dims { n, .. } = model.dims();
    let lead: DMatrix<f64> = model.state_terms().iter().map(|t| &t.matrix).sum();
    let lu = lead.lu();
    let mut xs = vec![x0.clone()];
    for k in 0..n_steps {
        let mut rhs = DVector::zeros(n);
        if !model.input_terms().is_empty() {
            rhs += fractional_sum(model.input_terms(), inputs, k, n);
        }
        if !model.disturbance_terms().is_empty() {
            rhs += fractional_sum(model.disturbance_terms(), disturbances, k, n);
        }
        // known part of Δ^{a_i} x[k+1]: lags j ≥ 1
        for t in model.state_terms() {
            for j in 1..=k + 1 {
                rhs -= &t.matrix * &xs[k + 1 - j] * binomial_coefficient(t.order, j);
            }
        }
        xs.push(lu.solve(&rhs).expect("invertible leading matrix"));
    }
    xs
}

/// True lifted state `[x[k] … x[k-v+1], u[k-1] … u[k-v]]` with zero pre-history.
pub fn lift_truth(traj: &Trajectory, layout: LiftLayout, k: usize) -> DVector<f64> {
    let mut x = DVector::zeros(layout.dim());
    for i in 0..layout.v {
        if let Some(idx) = k.checked_sub(i) {
            x.rows_mut(i * layout.n, layout.n).copy_from(&traj.states[idx]);
        }
        if layout.m > 0 {
            if let Some(idx) = k.checked_sub(i + 1) {
                x.rows_mut(layout.v * layout.n + i * layout.m, layout.m).copy_from(&traj.inputs[idx]);
            }
        }
    }
    x
}

/// An input-free model lifted with an invertible transition matrix, plus weights,
/// for which every stability assumption holds.
pub struct StableInstance {
    pub model: FodnModel,
    pub vapprox: VApprox,
    pub config: EstimatorConfig,
    pub report: AssumptionReport,
}

pub fn random_stable_instance(rng: &mut ChaCha8Rng) -> StableInstance {
    loop {
        let n = rng.random_range(1..=2);
        let q = rng.random_range(1..=n);
        let v = rng.random_range(1..=3);
        let model = random_model(rng, Dims { n, m: 0, p: n, q });
        let Ok(expanded) = expand_model(&model, v) else { continue };
        let Ok(vapprox) = build_v_approximation(&expanded, &model, v) else { continue };
        let d = vapprox.dim();
        let theta = rng.random_range(0.5..2.0);
        let rho = rng.random_range(0.5..2.0);
        let config = EstimatorConfig::new(
            Schedule::constant(DMatrix::identity(n, n) * theta),
            Schedule::constant(DMatrix::identity(q, q) * rho),
            DMatrix::identity(d, d),
            DVector::zeros(d),
        )
        .unwrap();
        let report = check_assumptions(&vapprox, &config, 3 * d + 2).unwrap();
        if report.satisfied.all() && report.alpha_lo > 1e-6 {
            return StableInstance { model, vapprox, config, report };
        }
    }
}

/// Inverse of an SPD matrix through its Cholesky factor. `try_inverse` uses cofactor
/// formulas up to 4×4, which lose accuracy on moderately conditioned matrices.
pub fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    nalgebra::Cholesky::new(m.clone()).expect("positive definite").inverse()
}

pub fn relative_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}
