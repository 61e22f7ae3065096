//! Log-log slopes of discrete counting functions.

use crate::assembly::Pencil;
use crate::eigensolve::{counting_function, eigenvalue, max_eigenvalue, CountingSample};
use crate::error::{Error, Result};
use crate::spectral::exponent::EmpiricalFit;

/// Minimum number of grid points with `N(x) >= 1` inside the window.
pub const MIN_FIT_POINTS: usize = 8;

/// `count` points spaced geometrically from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::ArgumentError(format!(
            "grid needs 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if count < 2 {
        return Err(Error::ArgumentError("grid needs at least two points".into()));
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    let mut xs: Vec<f64> = (0..count).map(|i| lo * (ratio * i as f64).exp()).collect();
    xs[count - 1] = hi;
    Ok(xs)
}

/// `[10 lambda_1, 0.01 lambda_max]`: past the first eigenvalues, well below
/// where the mesh resolution bends the count.
pub fn default_window(dirichlet: &Pencil) -> Result<(f64, f64)> {
    let lo = 10.0 * eigenvalue(dirichlet, 1)?;
    let hi = 0.01 * max_eigenvalue(dirichlet)?;
    if hi <= lo {
        return Err(Error::InsufficientData(format!(
            "window [{lo:.3e}, {hi:.3e}] is empty; refine the mesh"
        )));
    }
    Ok((lo, hi))
}

/// Least-squares fit of `log N` against `log x` over samples inside `window`
/// with `N >= 1`.
pub fn empirical_exponent(samples: &[CountingSample], window: (f64, f64)) -> Result<EmpiricalFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.x >= window.0 && s.x <= window.1 && s.count >= 1)
        .map(|s| (s.x.ln(), (s.count as f64).ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points in window, {MIN_FIT_POINTS} required",
            pts.len()
        )));
    }
    let first = pts[0].1;
    if pts.iter().all(|p| p.1 == first) {
        return Err(Error::InsufficientData(
            "counting function is constant on the window".into(),
        ));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EmpiricalFit {
        slope,
        intercept,
        residual,
        window,
        points: pts.len(),
    })
}

/// Counts on a geometric grid over `window` (the default window if `None`)
/// and fits the slope.
pub fn counting_slope(
    dirichlet: &Pencil,
    window: Option<(f64, f64)>,
    points: usize,
) -> Result<(EmpiricalFit, Vec<CountingSample>)> {
    let window = match window {
        Some(w) => w,
        None => default_window(dirichlet)?,
    };
    let xs = geometric_grid(window.0, window.1, points)?;
    let samples = counting_function(dirichlet, &xs)?;
    Ok((empirical_exponent(&samples, window)?, samples))
}
