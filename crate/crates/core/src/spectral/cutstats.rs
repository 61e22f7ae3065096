//! Cut-set statistics against the counting function.
//!
//! Every member of `Lambda_k` satisfies `eta^(y_k) e^(-k) <= r m <= e^(-k)`.
//! With `T_k = M_k / sum r m`, the ratios `N_D(T_k) / M_k` and
//! `M_k / N_D(k^alpha T_k)` stay bounded.

use serde::Serialize;

use crate::assembly::{assemble, Boundary};
use crate::eigensolve::inertia_count;
use crate::error::{Error, Result};
use crate::measure::{decompose, refine_uniform};
use crate::vtree::{cut_set, VTree};

/// Relative slack allowed in the chain's floating-point comparisons.
const CHAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutStatsRow {
    pub k: u32,
    pub m_k: usize,
    pub t_k: f64,
    pub y_k: usize,
    pub min_product: f64,
    pub max_product: f64,
    /// `eta^(y_k) e^(-k)`.
    pub chain_floor: f64,
    pub chain_holds: bool,
    pub n_dirichlet_at_t: usize,
    pub n_dirichlet_at_kt: usize,
    /// `N_D(T_k) / M_k`.
    pub ratio_lower: f64,
    /// `M_k / N_D(k^alpha T_k)`; infinite when the count vanishes.
    pub ratio_upper: f64,
}

/// One row per `k` in `ks`; counts use the Dirichlet pencil of `tree` at
/// `level` with `splits` sub-cells per cell.
pub fn cutset_stats_check(
    tree: &VTree,
    ks: &[u32],
    level: usize,
    splits: usize,
    alpha: f64,
) -> Result<Vec<CutStatsRow>> {
    let eta = tree.catalog().extrema().ok_or(Error::EmptyCatalog)?.eta;
    let decomposition = refine_uniform(&decompose(tree, level)?, splits)?;
    let pencil = assemble(&decomposition, Boundary::Dirichlet)?;
    ks.iter()
        .map(|&k| {
            let cut = cut_set(tree, k)?;
            let ceiling = (-(k as f64)).exp();
            let chain_floor = eta.powi(cut.y_k as i32) * ceiling;
            let chain_holds = cut
                .members
                .iter()
                .all(|m| m.product <= ceiling * (1.0 + CHAIN_SLACK) && m.product >= chain_floor * (1.0 - CHAIN_SLACK));
            let kt = (k.max(1) as f64).powf(alpha) * cut.t_k;
            let at_t = inertia_count(&pencil, cut.t_k)?;
            let at_kt = inertia_count(&pencil, kt)?;
            Ok(CutStatsRow {
                k,
                m_k: cut.m_k,
                t_k: cut.t_k,
                y_k: cut.y_k,
                min_product: cut.min_product(),
                max_product: cut.max_product(),
                chain_floor,
                chain_holds,
                n_dirichlet_at_t: at_t,
                n_dirichlet_at_kt: at_kt,
                ratio_lower: at_t as f64 / cut.m_k as f64,
                ratio_upper: if at_kt == 0 {
                    f64::INFINITY
                } else {
                    cut.m_k as f64 / at_kt as f64
                },
            })
        })
        .collect()
}
