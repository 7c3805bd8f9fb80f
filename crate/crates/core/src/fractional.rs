//! Grünwald-Letnikov coefficients and fractional differences of causal sequences.
//!
//! The coefficient of lag `j` for order `alpha` is `c_j = (-1)^j binom(alpha, j)`,
//! produced by the multiplicative recurrence `c_j = c_{j-1} (j - 1 - alpha) / j`
//! starting from `c_0 = 1`. Gamma-function evaluation is never used, so integer
//! orders collapse to finite differences exactly.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Largest lag horizon accepted by [`gl_coefficients`].
pub const DEFAULT_HORIZON_CAP: usize = 1_000_000;

/// Coefficients `c_0 ..= c_J` of the order-`alpha` Grünwald-Letnikov difference.
#[derive(Debug, Clone, PartialEq)]
pub struct GlCoefficients {
    alpha: f64,
    values: Vec<f64>,
}

impl GlCoefficients {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Largest lag `J` covered.
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coefficient at lag `j`; zero past the stored horizon is *not* assumed.
    pub fn get(&self, j: usize) -> Option<f64> {
        self.values.get(j).copied()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fractional order must be finite and nonnegative, got {alpha}"
        )));
    }
    Ok(())
}

/// Coefficients up to lag `horizon` with the default horizon cap.
pub fn gl_coefficients(alpha: f64, horizon: usize) -> Result<GlCoefficients> {
    gl_coefficients_capped(alpha, horizon, DEFAULT_HORIZON_CAP)
}

pub fn gl_coefficients_capped(alpha: f64, horizon: usize, cap: usize) -> Result<GlCoefficients> {
    check_alpha(alpha)?;
    if horizon > cap {
        return Err(Error::InvalidArgument(format!(
            "lag horizon {horizon} exceeds the configured cap {cap}"
        )));
    }
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(1.0);
    for j in 1..=horizon {
        let prev = values[j - 1];
        values.push(prev * ((j - 1) as f64 - alpha) / j as f64);
    }
    Ok(GlCoefficients { alpha, values })
}

/// Memo of coefficient sequences keyed by the exact bit pattern of the order.
///
/// Requests for a longer horizon than cached extend the stored sequence in place.
#[derive(Debug, Default)]
pub struct CoefficientCache {
    horizon: usize,
    entries: HashMap<u64, GlCoefficients>,
}

impl CoefficientCache {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            entries: HashMap::new(),
        }
    }

    pub fn get(&mut self, alpha: f64) -> Result<&GlCoefficients> {
        check_alpha(alpha)?;
        let horizon = self.horizon;
        let key = alpha.to_bits();
        match self.entries.entry(key) {
            std::collections::hash_map::Entry::Occupied(e) => Ok(e.into_mut()),
            std::collections::hash_map::Entry::Vacant(e) => Ok(e.insert(gl_coefficients(alpha, horizon)?)),
        }
    }

    /// Number of distinct orders computed so far.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `Δ^alpha x[k] = Σ_{j=0}^{k} c_j x[k-j]`, exact for a causal series that is zero before index 0.
pub fn gl_difference(series: &[DVector<f64>], alpha: f64, k: usize) -> Result<DVector<f64>> {
    if k >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "time index {k} outside series of length {}",
            series.len()
        )));
    }
    let dim = series[0].len();
    if let Some((i, bad)) = series[..=k].iter().enumerate().find(|(_, x)| x.len() != dim) {
        return Err(Error::dims(format!("series element {i}"), dim, bad.len()));
    }
    let coeffs = gl_coefficients(alpha, k)?;
    let mut acc = DVector::zeros(dim);
    for (j, c) in coeffs.values().iter().enumerate() {
        if *c != 0.0 {
            acc.axpy(*c, &series[k - j], 1.0);
        }
    }
    Ok(acc)
}
