//! Fractional-order network models, their infinite-lag expansion and the
//! finite-memory lifting used by the estimator.
//!
//! A network is described by
//!
//! ```text
//! Σ_i A_i Δ^{a_i} x[k+1] = Σ_i B_i Δ^{b_i} u[k] + Σ_i G_i Δ^{g_i} w[k]
//! z[k]                   = C'_k x[k] + v'[k]
//! ```
//!
//! Solving for `x[k+1]` with `Â_0 = Σ_i A_i` gives the expanded form
//! `x[k+1] = Σ_{j≥1} Ǎ_j x[k-j+1] + Σ_{j≥0} B̌_j u[k-j] + Σ_{j≥0} Ǧ_j w[k-j]`.
//! Keeping `v` lags of state and input yields an LTI system on the stacked
//! vector `[x[k], …, x[k-v+1], u[k-1], …, u[k-v]]`, with everything that was
//! dropped collected in the residual `r[k]`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fractional::CoefficientCache;
use crate::linalg;
use crate::schedule::Schedule;
use crate::simulator::Trajectory;

/// Condition-number limit for `Σ_i A_i`.
pub const ASSUMPTION1_COND_LIMIT: f64 = 1e12;

/// A matrix weighted by a fractional difference of the given order.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalTerm {
    pub matrix: DMatrix<f64>,
    pub order: f64,
}

impl FractionalTerm {
    pub fn new(matrix: DMatrix<f64>, order: f64) -> Self {
        Self { matrix, order }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Input dimension.
    pub m: usize,
    /// Disturbance dimension.
    pub p: usize,
    /// Output dimension.
    pub q: usize,
}

/// Deterministic bounds on the process and measurement disturbances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBounds {
    pub b_w: f64,
    pub b_v: f64,
}

impl NoiseBounds {
    pub fn new(b_w: f64, b_v: f64) -> Result<Self> {
        for (name, b) in [("b_w", b_w), ("b_v", b_v)] {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and nonnegative, got {b}"
                )));
            }
        }
        Ok(Self { b_w, b_v })
    }
}

/// Discrete-time fractional-order dynamical network.
#[derive(Debug, Clone, PartialEq)]
pub struct FodnModel {
    state_terms: Vec<FractionalTerm>,
    input_terms: Vec<FractionalTerm>,
    disturbance_terms: Vec<FractionalTerm>,
    output_map: Schedule<DMatrix<f64>>,
    dims: Dims,
}

impl FodnModel {
    /// Validates dimensions and orders, and checks that `Σ_i A_i` is invertible.
    pub fn new(
        state_terms: Vec<FractionalTerm>,
        input_terms: Vec<FractionalTerm>,
        disturbance_terms: Vec<FractionalTerm>,
        output_map: Schedule<DMatrix<f64>>,
        dims: Dims,
    ) -> Result<Self> {
        let Dims { n, m, p, q } = dims;
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        if state_terms.is_empty() {
            return Err(Error::InvalidArgument("at least one state term is required".into()));
        }
        let groups = [
            ("state term", &state_terms, n),
            ("input term", &input_terms, m),
            ("disturbance term", &disturbance_terms, p),
        ];
        for (what, terms, cols) in groups {
            for (i, t) in terms.iter().enumerate() {
                if t.matrix.nrows() != n || t.matrix.ncols() != cols {
                    return Err(Error::dims(
                        format!("{what} {}", i + 1),
                        format!("{n}x{cols}"),
                        format!("{}x{}", t.matrix.nrows(), t.matrix.ncols()),
                    ));
                }
                if !t.order.is_finite() || t.order < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "{what} {} has invalid fractional order {}",
                        i + 1,
                        t.order
                    )));
                }
                if t.matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("{what} {} has non-finite entries", i + 1)));
                }
            }
        }
        for c in output_map.iter() {
            if c.nrows() != q || c.ncols() != n {
                return Err(Error::dims(
                    "output map",
                    format!("{q}x{n}"),
                    format!("{}x{}", c.nrows(), c.ncols()),
                ));
            }
        }
        let model = Self {
            state_terms,
            input_terms,
            disturbance_terms,
            output_map,
            dims,
        };
        let cond = linalg::condition_number(&model.a_hat0());
        if cond.is_nan() || cond > ASSUMPTION1_COND_LIMIT {
            return Err(Error::AssumptionViolation {
                assumption: 1,
                detail: format!("sum of state matrices is singular (condition number {cond:e})"),
            });
        }
        Ok(model)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn state_terms(&self) -> &[FractionalTerm] {
        &self.state_terms
    }

    pub fn input_terms(&self) -> &[FractionalTerm] {
        &self.input_terms
    }

    pub fn disturbance_terms(&self) -> &[FractionalTerm] {
        &self.disturbance_terms
    }

    pub fn output_map(&self) -> &Schedule<DMatrix<f64>> {
        &self.output_map
    }

    pub fn output_at(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.output_map.at(k)
    }

    /// `Â_0 = Σ_i A_i`.
    pub fn a_hat0(&self) -> DMatrix<f64> {
        let n = self.dims.n;
        self.state_terms
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, t| acc + &t.matrix)
    }
}

/// Expansion coefficients `Ǎ_1..Ǎ_J`, `B̌_0..B̌_J`, `Ǧ_0..Ǧ_J`.
#[derive(Debug, Clone)]
pub struct ExpandedModel {
    a_check: Vec<DMatrix<f64>>,
    b_check: Vec<DMatrix<f64>>,
    g_check: Vec<DMatrix<f64>>,
    dims: Dims,
}

impl ExpandedModel {
    /// Wraps precomputed coefficients; `a_check[j-1]` is `Ǎ_j`, `b_check[j]` is `B̌_j`.
    pub fn from_coefficients(
        a_check: Vec<DMatrix<f64>>,
        b_check: Vec<DMatrix<f64>>,
        g_check: Vec<DMatrix<f64>>,
        dims: Dims,
    ) -> Result<Self> {
        let horizon = a_check.len();
        if horizon < 1 || b_check.len() != horizon + 1 || g_check.len() != horizon + 1 {
            return Err(Error::InvalidArgument(
                "expansion needs J state lags and J + 1 input and disturbance lags".into(),
            ));
        }
        let shapes_ok = a_check.iter().all(|a| a.shape() == (dims.n, dims.n))
            && b_check.iter().all(|b| b.shape() == (dims.n, dims.m))
            && g_check.iter().all(|g| g.shape() == (dims.n, dims.p));
        if !shapes_ok {
            return Err(Error::InvalidArgument("expansion coefficient shapes disagree with dims".into()));
        }
        Ok(Self {
            a_check,
            b_check,
            g_check,
            dims,
        })
    }

    pub fn lag_horizon(&self) -> usize {
        self.a_check.len()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// `Ǎ_j` for `1 ≤ j ≤ J`.
    pub fn a_check(&self, j: usize) -> &DMatrix<f64> {
        assert!(j >= 1, "Ǎ is indexed from lag 1");
        &self.a_check[j - 1]
    }

    pub fn b_check(&self, j: usize) -> &DMatrix<f64> {
        &self.b_check[j]
    }

    pub fn g_check(&self, j: usize) -> &DMatrix<f64> {
        &self.g_check[j]
    }
}

fn weighted_sum(
    terms: &[FractionalTerm],
    cache: &mut CoefficientCache,
    rows: usize,
    cols: usize,
    j: usize,
) -> Result<DMatrix<f64>> {
    let mut acc = DMatrix::zeros(rows, cols);
    for t in terms {
        let c = cache.get(t.order)?.values()[j];
        if c != 0.0 {
            acc += &t.matrix * c;
        }
    }
    Ok(acc)
}

/// Expands the model to lag `horizon`.
pub fn expand_model(model: &FodnModel, horizon: usize) -> Result<ExpandedModel> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("lag horizon must be at least 1".into()));
    }
    let Dims { n, m, p, .. } = model.dims;
    let lu = model.a_hat0().lu();
    let solve = |rhs: DMatrix<f64>| -> Result<DMatrix<f64>> {
        lu.solve(&rhs).ok_or_else(|| Error::AssumptionViolation {
            assumption: 1,
            detail: "sum of state matrices is singular".into(),
        })
    };
    let mut cache = CoefficientCache::new(horizon);

    let mut a_check = Vec::with_capacity(horizon);
    for j in 1..=horizon {
        let a_hat = weighted_sum(&model.state_terms, &mut cache, n, n, j)?;
        a_check.push(-solve(a_hat)?);
    }
    let mut b_check = Vec::with_capacity(horizon + 1);
    let mut g_check = Vec::with_capacity(horizon + 1);
    for j in 0..=horizon {
        b_check.push(solve(weighted_sum(&model.input_terms, &mut cache, n, m, j)?)?);
        g_check.push(solve(weighted_sum(&model.disturbance_terms, &mut cache, n, p, j)?)?);
    }
    Ok(ExpandedModel {
        a_check,
        b_check,
        g_check,
        dims: model.dims,
    })
}

/// Block positions inside the lifted state.
///
/// Ordering is `[x[k], …, x[k-v+1], u[k-1], …, u[k-v]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftLayout {
    pub n: usize,
    pub m: usize,
    pub v: usize,
}

impl LiftLayout {
    pub fn dim(&self) -> usize {
        self.v * (self.n + self.m)
    }

    /// Rows of `x[k-i]`, `0 ≤ i < v`.
    pub fn state_block(&self, i: usize) -> Range<usize> {
        assert!(i < self.v);
        i * self.n..(i + 1) * self.n
    }

    /// Rows of `u[k-1-i]`, `0 ≤ i < v`.
    pub fn input_block(&self, i: usize) -> Range<usize> {
        assert!(i < self.v);
        let base = self.v * self.n;
        base + i * self.m..base + (i + 1) * self.m
    }

    /// Whether entry `(row, col)` of the lifted transition matrix may be nonzero.
    pub fn transition_support(&self, row: usize, col: usize) -> bool {
        let (n, m, v) = (self.n, self.m, self.v);
        let states = v * n;
        if row < n {
            return true;
        }
        if row < states {
            // shift x[k-i+1] into x[k-i]
            let block = row / n;
            return col < states && col / n == block - 1 && col % n == row % n;
        }
        if m == 0 {
            return false;
        }
        let block = (row - states) / m;
        if block == 0 {
            return false;
        }
        col >= states && (col - states) / m == block - 1 && (col - states) % m == (row - states) % m
    }
}

/// Finite-memory lifted system `x̃[k+1] = Ã x̃[k] + B̃ u[k] + G̃ r[k]`, `y[k] = C_k x̃[k] + v[k]`.
#[derive(Debug, Clone)]
pub struct VApprox {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    pub g_tilde: DMatrix<f64>,
    c: Schedule<DMatrix<f64>>,
    layout: LiftLayout,
    q: usize,
}

impl VApprox {
    /// Assembles a lifted system from explicit matrices.
    ///
    /// Used for analysis of systems given directly in lifted form.
    pub fn from_matrices(
        a_tilde: DMatrix<f64>,
        b_tilde: DMatrix<f64>,
        g_tilde: DMatrix<f64>,
        c: Schedule<DMatrix<f64>>,
        layout: LiftLayout,
    ) -> Result<Self> {
        let d = layout.dim();
        let shape = |m: &DMatrix<f64>| format!("{}x{}", m.nrows(), m.ncols());
        if a_tilde.nrows() != d || a_tilde.ncols() != d {
            return Err(Error::dims("lifted transition", format!("{d}x{d}"), shape(&a_tilde)));
        }
        if b_tilde.nrows() != d || b_tilde.ncols() != layout.m {
            return Err(Error::dims("lifted input map", format!("{d}x{}", layout.m), shape(&b_tilde)));
        }
        if g_tilde.nrows() != d || g_tilde.ncols() != layout.n {
            return Err(Error::dims("lifted residual map", format!("{d}x{}", layout.n), shape(&g_tilde)));
        }
        let mut q = None;
        for cm in c.iter() {
            if cm.ncols() != d || q.is_some_and(|q| q != cm.nrows()) {
                return Err(Error::dims("lifted output map", format!("qx{d}"), shape(cm)));
            }
            q = Some(cm.nrows());
        }
        Ok(Self {
            a_tilde,
            b_tilde,
            g_tilde,
            c,
            layout,
            q: q.unwrap_or(0),
        })
    }

    pub fn layout(&self) -> LiftLayout {
        self.layout
    }

    pub fn v(&self) -> usize {
        self.layout.v
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.q
    }

    pub fn c(&self) -> &Schedule<DMatrix<f64>> {
        &self.c
    }

    pub fn c_at(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.c.at(k)
    }

    /// `x̃_0 = [x_0; 0; …; 0]`.
    pub fn initial_state(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        if x0.len() != self.layout.n {
            return Err(Error::dims("initial state", self.layout.n, x0.len()));
        }
        let mut x = DVector::zeros(self.dim());
        x.rows_mut(0, self.layout.n).copy_from(x0);
        Ok(x)
    }

    /// Leading block `x[k]` of a lifted vector.
    pub fn leading_state(&self, x_tilde: &DVector<f64>) -> DVector<f64> {
        x_tilde.rows(0, self.layout.n).into_owned()
    }
}

/// Builds the order-`v` lifting from an expansion of at least `v` lags.
pub fn build_v_approximation(expanded: &ExpandedModel, model: &FodnModel, v: usize) -> Result<VApprox> {
    if v < 1 {
        return Err(Error::InvalidArgument("memory depth v must be at least 1".into()));
    }
    if expanded.lag_horizon() < v {
        return Err(Error::HorizonExceeded {
            required: v,
            available: expanded.lag_horizon(),
        });
    }
    let Dims { n, m, .. } = model.dims;
    let layout = LiftLayout { n, m, v };
    let d = layout.dim();
    let states = v * n;

    let mut a = DMatrix::zeros(d, d);
    for j in 1..=v {
        a.view_mut((0, (j - 1) * n), (n, n)).copy_from(expanded.a_check(j));
        if m > 0 {
            a.view_mut((0, states + (j - 1) * m), (n, m)).copy_from(expanded.b_check(j));
        }
    }
    for i in 1..v {
        a.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
        if m > 0 {
            a.view_mut((states + i * m, states + (i - 1) * m), (m, m)).fill_with_identity();
        }
    }

    let mut b = DMatrix::zeros(d, m);
    if m > 0 {
        b.view_mut((0, 0), (n, m)).copy_from(expanded.b_check(0));
        b.view_mut((states, 0), (m, m)).fill_with_identity();
    }

    let mut g = DMatrix::zeros(d, n);
    g.view_mut((0, 0), (n, n)).fill_with_identity();

    let c = model.output_map().map(|c_prime| {
        let mut c = DMatrix::zeros(c_prime.nrows(), d);
        c.view_mut((0, 0), (c_prime.nrows(), n)).copy_from(c_prime);
        c
    });

    VApprox::from_matrices(a, b, g, c, layout)
}

/// The two parts of the residual: dropped state/input lags and the disturbance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParts {
    pub tail: DVector<f64>,
    pub disturbance: DVector<f64>,
}

impl ResidualParts {
    pub fn total(&self) -> DVector<f64> {
        &self.tail + &self.disturbance
    }
}

/// Residual split into truncation tail and disturbance contributions.
pub fn residual_parts(history: &Trajectory, expanded: &ExpandedModel, v: usize, k: usize) -> Result<ResidualParts> {
    if v < 1 {
        return Err(Error::InvalidArgument("memory depth v must be at least 1".into()));
    }
    if expanded.lag_horizon() < k + 1 {
        return Err(Error::HorizonExceeded {
            required: k + 1,
            available: expanded.lag_horizon(),
        });
    }
    if history.states.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "history holds {} states, index {k} requested",
            history.states.len()
        )));
    }
    if history.disturbances.len() < k + 1 && expanded.dims.p > 0 {
        return Err(Error::InvalidArgument(format!(
            "history holds {} disturbances, index {k} requested",
            history.disturbances.len()
        )));
    }
    let Dims { n, m, p, .. } = expanded.dims;
    let mut tail = DVector::zeros(n);
    // x[k-j+1] with j ≥ v+1 exists while k-j+1 ≥ 0
    for j in (v + 1)..=(k + 1) {
        tail += expanded.a_check(j) * &history.states[k + 1 - j];
    }
    if m > 0 {
        for j in (v + 1)..=k {
            tail += expanded.b_check(j) * &history.inputs[k - j];
        }
    }
    let mut disturbance = DVector::zeros(n);
    if p > 0 {
        for j in 0..=k {
            disturbance += expanded.g_check(j) * &history.disturbances[k - j];
        }
    }
    Ok(ResidualParts { tail, disturbance })
}

/// `r[k]`, exact for a finite causal history.
pub fn residual_r(history: &Trajectory, expanded: &ExpandedModel, v: usize, k: usize) -> Result<DVector<f64>> {
    residual_parts(history, expanded, v, k).map(|p| p.total())
}

/// `Σ_j Ǧ_j w[k-j]` for `k = 0..len`, the residual seen by a truncated model driven only by disturbances.
pub fn disturbance_residuals(expanded: &ExpandedModel, disturbances: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let n = expanded.dims.n;
    if disturbances.len() > expanded.lag_horizon() + 1 {
        return Err(Error::HorizonExceeded {
            required: disturbances.len() - 1,
            available: expanded.lag_horizon(),
        });
    }
    Ok((0..disturbances.len())
        .map(|k| {
            (0..=k).fold(DVector::zeros(n), |acc, j| {
                acc + expanded.g_check(j) * &disturbances[k - j]
            })
        })
        .collect())
}
