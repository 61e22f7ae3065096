//! Counting functions and eigenvalues of tridiagonal pencils by inertia.
//!
//! The number of negative pivots in the `LDL^T` factorization of `K - x M`
//! equals the number of generalized eigenvalues below `x` (Sylvester). A pivot
//! that vanishes up to cancellation is replaced by a tiny negative value, so an
//! eigenvalue equal to `x` is counted: `N(x) = #{ lambda_i <= x }`.

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{Boundary, Pencil};
use crate::error::{Error, Result};

/// Pivots within `ZERO_PIVOT_ULPS * (i + 1)` ulps of cancellation count as
/// zero; rounding in the recurrence accumulates linearly with the row index.
const ZERO_PIVOT_ULPS: f64 = 8.0;
/// Magnitude of the replacement for a zero pivot, relative to the row scale.
const ZERO_PIVOT_SUBSTITUTE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountingSample {
    pub x: f64,
    pub count: usize,
    pub boundary: Boundary,
    pub level: usize,
    pub splits: usize,
}

/// Number of generalized eigenvalues `<= x`.
pub fn inertia_count(pencil: &Pencil, x: f64) -> Result<usize> {
    if x.is_nan() {
        return Err(Error::InvalidInput("NaN shift".into()));
    }
    Ok(count_unchecked(pencil, x))
}

fn count_unchecked(p: &Pencil, x: f64) -> usize {
    let mut count = 0;
    let mut prev = 1.0;
    for i in 0..p.dim() {
        let a = p.k_diag[i] - x * p.m_diag[i];
        let coupling = if i == 0 {
            0.0
        } else {
            let b = p.k_off[i - 1] - x * p.m_off[i - 1];
            b * b / prev
        };
        let mut d = a - coupling;
        let scale = a.abs() + coupling.abs();
        if d.abs() <= ZERO_PIVOT_ULPS * (i + 1) as f64 * f64::EPSILON * scale || d == 0.0 {
            d = -ZERO_PIVOT_SUBSTITUTE * scale.max(1.0);
        }
        if d < 0.0 {
            count += 1;
        }
        prev = d;
    }
    count
}

/// `N(x)` at every point of an ascending grid.
pub fn counting_function(pencil: &Pencil, xs: &[f64]) -> Result<Vec<CountingSample>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("NaN in grid".into()));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::ArgumentError("grid must be ascending".into()));
    }
    let samples: Vec<CountingSample> = xs
        .par_iter()
        .map(|&x| CountingSample {
            x,
            count: count_unchecked(pencil, x),
            boundary: pencil.boundary,
            level: pencil.level,
            splits: pencil.splits,
        })
        .collect();
    debug_assert!(samples.windows(2).all(|w| w[0].count <= w[1].count));
    Ok(samples)
}

/// Upper bound for the spectrum: largest Gershgorin row of `K` over the
/// smallest Gershgorin lower bound of `M`, floored away from zero.
pub fn spectrum_upper_bound(p: &Pencil) -> f64 {
    let n = p.dim();
    let off = |v: &[f64], i: usize| -> f64 {
        let l = if i > 0 { v[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < n { v[i].abs() } else { 0.0 };
        l + r
    };
    let k_max = (0..n).map(|i| p.k_diag[i].abs() + off(&p.k_off, i)).fold(0.0, f64::max);
    let m_floor = p.m_diag.iter().fold(f64::INFINITY, |a, &b| a.min(b)) * 1e-6;
    let m_min = (0..n)
        .map(|i| p.m_diag[i] - off(&p.m_off, i))
        .fold(f64::INFINITY, f64::min)
        .max(m_floor)
        .max(f64::MIN_POSITIVE);
    (k_max / m_min).max(1.0)
}

/// `lambda_i` (1-based) by bisection on the inertia count.
pub fn eigenvalue(pencil: &Pencil, index: usize) -> Result<f64> {
    let n = pencil.dim();
    if index == 0 || index > n {
        return Err(Error::IndexError { index, len: n });
    }
    if count_unchecked(pencil, 0.0) >= index {
        return Ok(0.0);
    }
    let mut hi = spectrum_upper_bound(pencil);
    while count_unchecked(pencil, hi) < index {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if count_unchecked(pencil, mid) >= index {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Largest eigenvalue.
pub fn max_eigenvalue(pencil: &Pencil) -> Result<f64> {
    eigenvalue(pencil, pencil.dim())
}
