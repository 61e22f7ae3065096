//! Dirichlet-Neumann bracketing across a cut set.
//!
//! Cutting `[a, b]` at the cells of `Lambda_k` gives
//! `sum N_D^(w)(r_w m_w x) <= N_D(x) <= N_N(x) <= sum N_N^(w)(r_w m_w x)`,
//! where `N^(w)` counts the subtree rooted at `w` on the unit interval.
//! With matching meshes the discrete counts obey the same chain exactly.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble, Boundary, Pencil};
use crate::eigensolve::inertia_count;
use crate::error::{Error, Result};
use crate::measure::{decompose, fmt17, refine_uniform};
use crate::vtree::{cut_set, CutMember, VTree, DEFAULT_NODE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Pass,
    /// Off by one at an isolated grid point.
    Warning,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketingPoint {
    pub x: f64,
    pub lower: usize,
    pub n_dirichlet: usize,
    pub n_neumann: usize,
    pub upper: usize,
    pub status: PointStatus,
}

impl BracketingPoint {
    /// How far the chain `lower <= N_D <= N_N <= upper` is broken.
    pub fn violation(&self) -> usize {
        let gap = |lo: usize, hi: usize| lo.saturating_sub(hi);
        gap(self.lower, self.n_dirichlet)
            .max(gap(self.n_dirichlet, self.n_neumann))
            .max(gap(self.n_neumann, self.upper))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketingResult {
    pub k: u32,
    pub level: usize,
    pub splits: usize,
    pub m_k: usize,
    pub neck_levels: Vec<usize>,
    pub points: Vec<BracketingPoint>,
    pub passed: bool,
}

impl BracketingResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "lower", "N_D", "N_N", "upper", "status"])?;
        for p in &self.points {
            let status = match p.status {
                PointStatus::Pass => "pass",
                PointStatus::Warning => "warning",
                PointStatus::Fail => "fail",
            };
            w.write_record([
                fmt17(p.x),
                p.lower.to_string(),
                p.n_dirichlet.to_string(),
                p.n_neumann.to_string(),
                p.upper.to_string(),
                status.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dirichlet and Neumann pencils of `tree` at `level`, each cell split in `splits`.
pub fn pencils(tree: &VTree, level: usize, splits: usize) -> Result<(Pencil, Pencil)> {
    let d = refine_uniform(&decompose(tree, level)?, splits)?;
    Ok((assemble(&d, Boundary::Dirichlet)?, assemble(&d, Boundary::Neumann)?))
}

/// Subtree pencils for members at one neck level, resolved down to `level`.
struct SubtreeGroup {
    products: Vec<f64>,
    dirichlet: Pencil,
    neumann: Pencil,
}

fn subtree_group(tree: &VTree, members: &[&CutMember], level: usize, splits: usize) -> Result<SubtreeGroup> {
    let g = members[0].neck;
    let ty = tree.node(members[0].node).ty;
    let envs = tree.environments()[g..level].to_vec();
    let sub = VTree::from_environments(tree.catalog(), tree.v(), ty, envs, DEFAULT_NODE_CAP)?;
    let (dirichlet, neumann) = pencils(&sub, level - g, splits)?;
    Ok(SubtreeGroup {
        products: members.iter().map(|m| m.product).collect(),
        dirichlet,
        neumann,
    })
}

/// Evaluates the bracketing chain for `Lambda_k` on the grid `xs`, with the
/// full tree discretized at `level` and every cell split into `splits`.
pub fn bracketing_check(tree: &VTree, k: u32, xs: &[f64], level: usize, splits: usize) -> Result<BracketingResult> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite grid point".into()));
    }
    if level > tree.depth() {
        return Err(Error::DepthExhausted {
            what: format!("level {level} requested from a tree of depth {}", tree.depth()),
            additional_levels: level - tree.depth(),
        });
    }
    let cut = cut_set(tree, k)?;
    let deepest = cut.members.iter().map(|m| m.neck).max().unwrap_or(0);
    if deepest > level {
        return Err(Error::DepthExhausted {
            what: format!("cut set k={k} reaches generation {deepest}, discretization level is {level}"),
            additional_levels: deepest - level,
        });
    }
    let neck_levels = cut.neck_levels();
    let groups: Vec<SubtreeGroup> = neck_levels
        .iter()
        .map(|&g| {
            let members: Vec<&CutMember> = cut.members.iter().filter(|m| m.neck == g).collect();
            subtree_group(tree, &members, level, splits)
        })
        .collect::<Result<_>>()?;
    let (dirichlet, neumann) = pencils(tree, level, splits)?;

    let counts: Vec<[usize; 4]> = xs
        .par_iter()
        .map(|&x| -> Result<[usize; 4]> {
            let mut lower = 0;
            let mut upper = 0;
            for group in &groups {
                for &p in &group.products {
                    lower += inertia_count(&group.dirichlet, p * x)?;
                    upper += inertia_count(&group.neumann, p * x)?;
                }
            }
            Ok([lower, inertia_count(&dirichlet, x)?, inertia_count(&neumann, x)?, upper])
        })
        .collect::<Result<_>>()?;

    let mut points: Vec<BracketingPoint> = xs
        .iter()
        .zip(&counts)
        .map(|(&x, c)| BracketingPoint {
            x,
            lower: c[0],
            n_dirichlet: c[1],
            n_neumann: c[2],
            upper: c[3],
            status: PointStatus::Pass,
        })
        .collect();
    let violations: Vec<usize> = points.iter().map(BracketingPoint::violation).collect();
    for (i, p) in points.iter_mut().enumerate() {
        let isolated = (i == 0 || violations[i - 1] == 0) && violations.get(i + 1).is_none_or(|&v| v == 0);
        p.status = match violations[i] {
            0 => PointStatus::Pass,
            1 if isolated => PointStatus::Warning,
            _ => PointStatus::Fail,
        };
    }
    let passed = points.iter().all(|p| p.status != PointStatus::Fail);
    Ok(BracketingResult {
        k,
        level,
        splits,
        m_k: cut.m_k,
        neck_levels,
        points,
        passed,
    })
}
