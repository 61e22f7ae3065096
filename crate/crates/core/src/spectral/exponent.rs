//! The spectral exponent as the positive root of a decreasing function `f`.
//!
//! `f(x) = E log sum_{|ii| = n(1)} (m_ii r_ii)^x` over the first neck block.
//! For `V = 1` every level is a neck and `f` has the closed form
//! `sum_j p_j log sum_i (r_i m_i)^x`; the recursive limit replaces the
//! expected log by the log of the expectation.

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{Catalog, WeightedIfs};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::vtree::{sample_environment, ScaleTable};

/// Default number of environments after which a block without a neck fails.
pub const DEFAULT_NECK_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactHomogeneous,
    ExactSelfsimilar,
    MonteCarloNeck,
    RecursiveOracle,
}

/// One evaluation of `f` (standard error 0 for exact evaluators).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FValue {
    pub x: f64,
    pub f: f64,
    pub se: f64,
}

/// A decreasing function whose positive root is sought.
pub trait FEvaluator {
    fn eval(&self, x: f64) -> Result<FValue>;

    fn method(&self) -> Method;

    /// Increases precision (more Monte Carlo blocks). `false` once at the cap.
    fn refine(&mut self) -> bool {
        false
    }

    fn blocks(&self) -> Option<usize> {
        None
    }

    fn seed(&self) -> Option<u64> {
        None
    }
}

/// `sum_j p_j log sum_i (r_i^(j) m_i^(j))^x`.
pub fn f_exact_homogeneous(catalog: &Catalog, x: f64) -> f64 {
    catalog
        .systems()
        .iter()
        .zip(catalog.probabilities())
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * log_scale_sum(s, x))
        .sum()
}

/// `log sum_i (r_i m_i)^x` without underflow at large `x`.
fn log_scale_sum(system: &WeightedIfs, x: f64) -> f64 {
    let logs: Vec<f64> = system.scale_products().map(|p| x * p.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// `log sum_j p_j sum_i (r_i^(j) m_i^(j))^x`.
pub fn f_recursive(catalog: &Catalog, x: f64) -> f64 {
    catalog
        .systems()
        .iter()
        .zip(catalog.probabilities())
        .map(|(s, &p)| p * s.scale_sum(x))
        .sum::<f64>()
        .ln()
}

#[derive(Debug, Clone)]
pub struct HomogeneousF<'a> {
    pub catalog: &'a Catalog,
}

impl FEvaluator for HomogeneousF<'_> {
    fn eval(&self, x: f64) -> Result<FValue> {
        Ok(FValue {
            x,
            f: f_exact_homogeneous(self.catalog, x),
            se: 0.0,
        })
    }

    fn method(&self) -> Method {
        if self.catalog.len() == 1 {
            Method::ExactSelfsimilar
        } else {
            Method::ExactHomogeneous
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecursiveF<'a> {
    pub catalog: &'a Catalog,
}

impl FEvaluator for RecursiveF<'_> {
    fn eval(&self, x: f64) -> Result<FValue> {
        Ok(FValue {
            x,
            f: f_recursive(self.catalog, x),
            se: 0.0,
        })
    }

    fn method(&self) -> Method {
        Method::RecursiveOracle
    }
}

/// Samples one neck block from `rng`: root type uniform, then environments
/// until the first neck. Returns the log scale sum, the block length and the
/// root type.
pub fn neck_block(
    catalog: &Catalog,
    v: usize,
    tables: &[ScaleTable],
    rng: &mut Stream,
    cap: usize,
) -> Result<(Vec<f64>, usize, usize)> {
    let root = rng.below(v);
    let (logs, len, _) = neck_block_from(catalog, v, root, tables, rng, cap)?;
    Ok((logs, len, root))
}

/// As [`neck_block`] with a given root type; also returns the neck type.
fn neck_block_from(
    catalog: &Catalog,
    v: usize,
    root: usize,
    tables: &[ScaleTable],
    rng: &mut Stream,
    cap: usize,
) -> Result<(Vec<f64>, usize, usize)> {
    let mut w: Vec<Vec<f64>> = tables.iter().map(|_| one_hot(v, root)).collect();
    let mut next = vec![0.0; v];
    let mut logs = vec![0.0; tables.len()];
    for level in 1..=cap {
        let env = sample_environment(catalog, v, rng);
        for (t, table) in tables.iter().enumerate() {
            logs[t] += table.apply(&env, &mut w[t], &mut next);
        }
        if let Some(ty) = env.neck_type() {
            return Ok((logs, level, ty));
        }
    }
    Err(Error::NeckTimeout { cap })
}

fn one_hot(v: usize, at: usize) -> Vec<f64> {
    let mut w = vec![0.0; v];
    w[at] = 1.0;
    w
}

/// `k` consecutive neck blocks along a single environment stream, i.e. the
/// block decomposition of one deep tree. Returns per-block log sums.
pub fn single_tree_block_log_sums(catalog: &Catalog, v: usize, x: f64, k: usize, seed: u64) -> Result<Vec<f64>> {
    let tables = [ScaleTable::new(catalog, x)];
    let mut rng = Stream::new(seed);
    let mut ty = rng.below(v);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let (logs, _, neck_ty) = neck_block_from(catalog, v, ty, &tables, &mut rng, DEFAULT_NECK_CAP)?;
        out.push(logs[0]);
        ty = neck_ty;
    }
    Ok(out)
}

/// Monte Carlo estimate of `f` from independent neck blocks.
///
/// Block `b` uses the stream [`Stream::substream`]`(seed, b)`, so every `x`
/// sees the same environments (common random numbers) and `f_hat` is exactly
/// decreasing.
#[derive(Debug, Clone)]
pub struct MonteCarloF {
    pub catalog: Catalog,
    pub v: usize,
    pub blocks: usize,
    pub seed: u64,
    pub neck_cap: usize,
    pub max_blocks: usize,
}

/// Per-root-type conditional estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeEstimate {
    pub root_type: usize,
    pub blocks: usize,
    pub f: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub x: f64,
    pub f: f64,
    pub se: f64,
    pub blocks: usize,
    pub mean_block_length: f64,
    pub per_type: Vec<TypeEstimate>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl MonteCarloF {
    pub fn new(catalog: &Catalog, v: usize, blocks: usize, seed: u64) -> Result<Self> {
        if v == 0 {
            return Err(Error::ArgumentError("V must be positive".into()));
        }
        if blocks < 2 {
            return Err(Error::ArgumentError("at least two blocks required".into()));
        }
        catalog.ensure_valid()?;
        Ok(MonteCarloF {
            catalog: catalog.clone(),
            v,
            blocks,
            seed,
            neck_cap: DEFAULT_NECK_CAP,
            max_blocks: blocks * 16,
        })
    }

    /// Per-block `(log sums at each x, block length, root type)`, in block order.
    pub fn block_samples(&self, xs: &[f64]) -> Result<Vec<(Vec<f64>, usize, usize)>> {
        let tables: Vec<ScaleTable> = xs.iter().map(|&x| ScaleTable::new(&self.catalog, x)).collect();
        (0..self.blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = Stream::substream(self.seed, b as u64);
                neck_block(&self.catalog, self.v, &tables, &mut rng, self.neck_cap)
            })
            .collect()
    }

    /// Estimates at several `x` from one pass over the blocks.
    pub fn estimate_many(&self, xs: &[f64]) -> Result<Vec<MonteCarloEstimate>> {
        let samples = self.block_samples(xs)?;
        let mean_len = samples.iter().map(|s| s.1 as f64).sum::<f64>() / samples.len() as f64;
        Ok(xs
            .iter()
            .enumerate()
            .map(|(t, &x)| {
                let all: Vec<f64> = samples.iter().map(|s| s.0[t]).collect();
                let (f, se) = mean_se(&all);
                let per_type = (0..self.v)
                    .filter_map(|ty| {
                        let vals: Vec<f64> = samples.iter().filter(|s| s.2 == ty).map(|s| s.0[t]).collect();
                        if vals.is_empty() {
                            return None;
                        }
                        let (f, se) = mean_se(&vals);
                        Some(TypeEstimate {
                            root_type: ty,
                            blocks: vals.len(),
                            f,
                            se,
                        })
                    })
                    .collect();
                MonteCarloEstimate {
                    x,
                    f,
                    se,
                    blocks: self.blocks,
                    mean_block_length: mean_len,
                    per_type,
                }
            })
            .collect())
    }

    pub fn estimate(&self, x: f64) -> Result<MonteCarloEstimate> {
        Ok(self.estimate_many(&[x])?.remove(0))
    }
}

impl FEvaluator for MonteCarloF {
    fn eval(&self, x: f64) -> Result<FValue> {
        let e = self.estimate(x)?;
        Ok(FValue { x, f: e.f, se: e.se })
    }

    fn method(&self) -> Method {
        Method::MonteCarloNeck
    }

    fn refine(&mut self) -> bool {
        if self.blocks * 2 > self.max_blocks {
            return false;
        }
        self.blocks *= 2;
        true
    }

    fn blocks(&self) -> Option<usize> {
        Some(self.blocks)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// `(f_hat(x), standard error)` from `blocks` neck blocks.
pub fn f_monte_carlo(catalog: &Catalog, v: usize, x: f64, blocks: usize, seed: u64) -> Result<(f64, f64)> {
    let e = MonteCarloF::new(catalog, v, blocks, seed)?.estimate(x)?;
    Ok((e.f, e.se))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisectionStep {
    pub lo: f64,
    pub hi: f64,
    pub mid: f64,
    pub f_mid: f64,
    pub se_mid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Absolute tolerance on the root.
    pub tol: f64,
    /// Width of the confidence band in standard errors.
    pub z: f64,
    /// Refine the evaluator while the confidence half-width exceeds this.
    pub max_half_width: f64,
}

impl SolveOptions {
    pub fn exact() -> Self {
        SolveOptions {
            tol: 1e-10,
            z: 3.0,
            max_half_width: f64::INFINITY,
        }
    }

    pub fn monte_carlo() -> Self {
        SolveOptions {
            tol: 1e-3,
            z: 3.0,
            max_half_width: 0.05,
        }
    }
}

/// Least-squares line `log N = slope log x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `log N`.
    pub residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentReport {
    pub gamma: f64,
    pub method: Method,
    pub evaluations: Vec<FValue>,
    pub bisection: Vec<BisectionStep>,
    pub blocks: Option<usize>,
    pub seed: Option<u64>,
    /// `gamma +- z * SE(f) / |f'(gamma)|`; `None` for exact evaluators.
    pub confidence: Option<(f64, f64)>,
    pub empirical: Option<EmpiricalFit>,
}

/// Root of a decreasing `f` with `f(0+) > 0`: bracket by doubling or halving
/// from `x = 1`, then bisect.
pub fn solve_gamma(evaluator: &mut dyn FEvaluator, options: SolveOptions) -> Result<ExponentReport> {
    loop {
        let report = solve_once(&*evaluator, options)?;
        let half = report.confidence.map(|(lo, hi)| 0.5 * (hi - lo)).unwrap_or(0.0);
        if half <= options.max_half_width {
            return Ok(report);
        }
        if !evaluator.refine() {
            let (lo, hi) = report.confidence.unwrap_or((report.gamma, report.gamma));
            return Err(Error::NoisyRoot { lo, hi });
        }
    }
}

fn clearly_positive(v: &FValue, z: f64) -> bool {
    v.f > z * v.se
}

fn clearly_negative(v: &FValue, z: f64) -> bool {
    v.f < -z * v.se
}

fn solve_once(evaluator: &dyn FEvaluator, options: SolveOptions) -> Result<ExponentReport> {
    let mut evaluations = Vec::new();
    let eval = |x: f64, log: &mut Vec<FValue>| -> Result<FValue> {
        let v = evaluator.eval(x)?;
        if !v.f.is_finite() {
            return Err(Error::InvalidInput(format!("f({x}) = {}", v.f)));
        }
        log.push(v);
        Ok(v)
    };
    let z = options.z;

    let first = eval(1.0, &mut evaluations)?;
    let (mut lo, mut hi) = if first.f < 0.0 { (0.5, 1.0) } else { (1.0, 2.0) };
    // Move the far endpoint until its sign is clear of the noise.
    if first.f < 0.0 {
        let mut hi_val = first;
        while !clearly_negative(&hi_val, z) {
            hi *= 2.0;
            lo = hi / 2.0;
            hi_val = eval(hi, &mut evaluations)?;
            if hi > 1e6 {
                return Err(Error::NoisyRoot { lo: 0.0, hi });
            }
        }
        loop {
            let v = eval(lo, &mut evaluations)?;
            if clearly_positive(&v, z) {
                break;
            }
            hi = if v.f < 0.0 { lo } else { hi };
            lo /= 2.0;
            if lo < 1e-12 {
                return Err(Error::NoisyRoot { lo: 0.0, hi });
            }
        }
    } else {
        loop {
            let v = eval(hi, &mut evaluations)?;
            if clearly_negative(&v, z) {
                break;
            }
            lo = if v.f > 0.0 { hi } else { lo };
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NoisyRoot { lo, hi });
            }
        }
        if !clearly_positive(&first, z) {
            loop {
                lo /= 2.0;
                let v = eval(lo, &mut evaluations)?;
                if clearly_positive(&v, z) {
                    break;
                }
                if lo < 1e-12 {
                    return Err(Error::NoisyRoot { lo: 0.0, hi });
                }
            }
        }
    }

    let mut bisection = Vec::new();
    while hi - lo > options.tol {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid, &mut evaluations)?;
        bisection.push(BisectionStep {
            lo,
            hi,
            mid,
            f_mid: v.f,
            se_mid: v.se,
        });
        if v.f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if bisection.len() > 200 {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);

    let confidence = if evaluator.method() == Method::MonteCarloNeck {
        let at = eval(gamma, &mut evaluations)?;
        let h = (1e-3f64).max(options.tol);
        let up = eval(gamma + h, &mut evaluations)?;
        let down = eval(gamma - h, &mut evaluations)?;
        let slope = (up.f - down.f) / (2.0 * h);
        let half = z * at.se / slope.abs() + 0.5 * (hi - lo);
        Some((gamma - half, gamma + half))
    } else {
        None
    };

    Ok(ExponentReport {
        gamma,
        method: evaluator.method(),
        evaluations,
        bisection,
        blocks: evaluator.blocks(),
        seed: evaluator.seed(),
        confidence,
        empirical: None,
    })
}

/// Root of `sum_j p_j sum_i (r_i m_i)^gamma = 1`, to `1e-10`.
pub fn solve_gamma_recursive(catalog: &Catalog) -> Result<f64> {
    let mut f = RecursiveF { catalog };
    Ok(solve_gamma(&mut f, SolveOptions::exact())?.gamma)
}

/// Root of the `V = 1` function; for one system this is the self-similar
/// exponent `sum_i (r_i m_i)^gamma = 1`.
pub fn solve_gamma_homogeneous(catalog: &Catalog) -> Result<ExponentReport> {
    let mut f = HomogeneousF { catalog };
    solve_gamma(&mut f, SolveOptions::exact())
}
