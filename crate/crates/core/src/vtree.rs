//! Environments, finite-depth V-variable trees, necks and cut sets.
//!
//! Types are numbered `0..V` and children `0..N_j` throughout; paths in dumps
//! use the same zero-based child positions.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Default cap on the total number of materialized nodes.
pub const DEFAULT_NODE_CAP: u64 = 10_000_000;

/// Row `v` of an environment: the system assigned to type `v` and the types
/// of its children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvRow {
    pub system: usize,
    pub child_types: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    rows: Vec<EnvRow>,
    neck: bool,
}

impl Environment {
    /// Builds an environment and checks it against `catalog` and `v`.
    pub fn new(catalog: &Catalog, v: usize, rows: Vec<EnvRow>) -> Result<Self> {
        if rows.len() != v {
            return Err(Error::ArgumentError(format!(
                "environment has {} rows, expected V = {v}",
                rows.len()
            )));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.system >= catalog.len() {
                return Err(Error::ArgumentError(format!(
                    "row {t}: system {} not in catalog",
                    row.system
                )));
            }
            let n = catalog.system(row.system).len();
            if row.child_types.len() != n {
                return Err(Error::ArgumentError(format!(
                    "row {t}: {} child types for a system with {n} maps",
                    row.child_types.len()
                )));
            }
            if let Some(&bad) = row.child_types.iter().find(|&&c| c >= v) {
                return Err(Error::ArgumentError(format!("row {t}: child type {bad} >= V")));
            }
        }
        Ok(Self::from_rows(rows))
    }

    fn from_rows(rows: Vec<EnvRow>) -> Self {
        let mut all = rows.iter().flat_map(|r| r.child_types.iter());
        let neck = match all.next() {
            Some(first) => all.all(|t| t == first),
            None => true,
        };
        Environment { rows, neck }
    }

    pub fn rows(&self) -> &[EnvRow] {
        &self.rows
    }

    pub fn row(&self, ty: usize) -> &EnvRow {
        &self.rows[ty]
    }

    pub fn v(&self) -> usize {
        self.rows.len()
    }

    /// All child types over all rows coincide.
    pub fn is_neck(&self) -> bool {
        self.neck
    }

    /// The common child type of a neck.
    pub fn neck_type(&self) -> Option<usize> {
        if self.neck {
            self.rows.iter().find_map(|r| r.child_types.first().copied())
        } else {
            None
        }
    }
}

/// Draws one environment. Stream order: the system index of every row
/// `v = 0..V` (categorical on `p`), then child types row by row (uniform).
pub fn sample_environment(catalog: &Catalog, v: usize, rng: &mut Stream) -> Environment {
    assert!(v >= 1, "V must be positive");
    let systems: Vec<usize> = (0..v).map(|_| rng.categorical(catalog.probabilities())).collect();
    let rows = systems
        .into_iter()
        .map(|system| {
            let n = catalog.system(system).len();
            EnvRow {
                system,
                child_types: (0..n).map(|_| rng.below(v)).collect(),
            }
        })
        .collect();
    Environment::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub generation: usize,
    pub index: usize,
}

impl NodeRef {
    pub const ROOT: NodeRef = NodeRef {
        generation: 0,
        index: 0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// Index of the parent in the previous generation (0 for the root).
    pub parent: usize,
    /// Child position under the parent.
    pub position: usize,
    pub ty: usize,
    /// System used to split this node; `None` in the last generation.
    pub system: Option<usize>,
    /// Cumulative ratio `r_ii`.
    pub r: f64,
    /// Cumulative weight `m_ii`.
    pub m: f64,
    /// Offset of the composed map: `S_ii(x) = r x + offset`.
    pub offset: f64,
}

impl Node {
    #[inline]
    pub fn scale_product(&self) -> f64 {
        self.r * self.m
    }
}

/// How the root type is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootType {
    /// Uniform on `0..V`, one draw before any environment.
    Random,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct TreeOptions {
    pub root: RootType,
    pub node_cap: u64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            root: RootType::Random,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

impl TreeOptions {
    pub fn with_root(root_type: usize) -> Self {
        TreeOptions {
            root: RootType::Fixed(root_type),
            ..Default::default()
        }
    }
}

/// A V-variable tree materialized down to a fixed depth.
#[derive(Debug, Clone)]
pub struct VTree {
    catalog: Catalog,
    v: usize,
    root_type: usize,
    environments: Vec<Environment>,
    generations: Vec<Vec<Node>>,
    necks: Vec<usize>,
}

/// Samples a root type (unless fixed) and `depth` environments from `rng`,
/// then materializes the tree.
pub fn build_tree(catalog: &Catalog, v: usize, depth: usize, options: TreeOptions, rng: &mut Stream) -> Result<VTree> {
    if v == 0 {
        return Err(Error::ArgumentError("V must be positive".into()));
    }
    catalog.ensure_valid()?;
    let root_type = match options.root {
        RootType::Random => rng.below(v),
        RootType::Fixed(t) => t,
    };
    let environments: Vec<Environment> = (0..depth).map(|_| sample_environment(catalog, v, rng)).collect();
    VTree::from_environments(catalog, v, root_type, environments, options.node_cap)
}

impl VTree {
    /// Materializes the tree for an explicit environment sequence.
    pub fn from_environments(
        catalog: &Catalog,
        v: usize,
        root_type: usize,
        environments: Vec<Environment>,
        node_cap: u64,
    ) -> Result<Self> {
        if root_type >= v {
            return Err(Error::ArgumentError(format!("root type {root_type} >= V = {v}")));
        }
        for env in &environments {
            if env.v() != v {
                return Err(Error::ArgumentError("environment row count differs from V".into()));
            }
        }
        let nodes = count_nodes(catalog, v, root_type, &environments);
        if nodes > node_cap {
            return Err(Error::TreeTooLarge { nodes, cap: node_cap });
        }

        let mut generations: Vec<Vec<Node>> = Vec::with_capacity(environments.len() + 1);
        generations.push(vec![Node {
            parent: 0,
            position: 0,
            ty: root_type,
            system: None,
            r: 1.0,
            m: 1.0,
            offset: 0.0,
        }]);
        for env in &environments {
            let prev = generations.last_mut().expect("root generation");
            let mut next = Vec::new();
            for (pi, parent) in prev.iter_mut().enumerate() {
                let row = env.row(parent.ty);
                parent.system = Some(row.system);
                let sys = catalog.system(row.system);
                for (i, (map, &w)) in sys.maps.iter().zip(&sys.weights).enumerate() {
                    next.push(Node {
                        parent: pi,
                        position: i,
                        ty: row.child_types[i],
                        system: None,
                        r: parent.r * map.r,
                        m: parent.m * w,
                        offset: parent.r * map.c + parent.offset,
                    });
                }
            }
            generations.push(next);
        }

        let necks = environments
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_neck())
            .map(|(i, _)| i + 1)
            .collect();

        Ok(VTree {
            catalog: catalog.clone(),
            v,
            root_type,
            environments,
            generations,
            necks,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn root_type(&self) -> usize {
        self.root_type
    }

    pub fn depth(&self) -> usize {
        self.environments.len()
    }

    pub fn environments(&self) -> &[Environment] {
        &self.environments
    }

    /// Neck levels `n(1) < n(2) < ...` within the built depth.
    pub fn necks(&self) -> &[usize] {
        &self.necks
    }

    pub fn generation(&self, g: usize) -> &[Node] {
        &self.generations[g]
    }

    pub fn node(&self, r: NodeRef) -> &Node {
        &self.generations[r.generation][r.index]
    }

    pub fn node_count(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    /// Image `S_ii([a, b])` of a node.
    pub fn cell_of(&self, r: NodeRef) -> (f64, f64) {
        let n = self.node(r);
        let (a, b) = self.catalog.interval();
        (n.r * a + n.offset, n.r * b + n.offset)
    }

    /// Child positions from the root down to `r`.
    pub fn path(&self, r: NodeRef) -> Vec<usize> {
        let mut path = Vec::with_capacity(r.generation);
        let mut idx = r.index;
        for g in (1..=r.generation).rev() {
            let n = &self.generations[g][idx];
            path.push(n.position);
            idx = n.parent;
        }
        path.reverse();
        path
    }

    /// Ancestor of `r` at generation `g <= r.generation`.
    pub fn ancestor(&self, r: NodeRef, g: usize) -> NodeRef {
        let mut idx = r.index;
        for gen in ((g + 1)..=r.generation).rev() {
            idx = self.generations[gen][idx].parent;
        }
        NodeRef {
            generation: g,
            index: idx,
        }
    }

    /// The subtree rooted at `r`, re-rooted so that its own products start at 1.
    pub fn subtree(&self, r: NodeRef) -> Result<VTree> {
        let ty = self.node(r).ty;
        let envs = self.environments[r.generation..].to_vec();
        VTree::from_environments(&self.catalog, self.v, ty, envs, u64::MAX)
    }

    /// Writes one JSON object per node: path, type, system, r- and m-products.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            generation: usize,
            path: &'a [usize],
            #[serde(rename = "type")]
            ty: usize,
            system: Option<usize>,
            r: f64,
            m: f64,
        }
        for (g, gen) in self.generations.iter().enumerate() {
            for (i, node) in gen.iter().enumerate() {
                let path = self.path(NodeRef {
                    generation: g,
                    index: i,
                });
                let line = Line {
                    generation: g,
                    path: &path,
                    ty: node.ty,
                    system: node.system,
                    r: node.r,
                    m: node.m,
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn environments_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.environments)?)
    }
}

/// Total node count of the tree, computed from per-type populations.
fn count_nodes(catalog: &Catalog, v: usize, root_type: usize, envs: &[Environment]) -> u64 {
    let mut pop = vec![0u64; v];
    pop[root_type] = 1;
    let mut total: u64 = 1;
    for env in envs {
        let mut next = vec![0u64; v];
        for (ty, &count) in pop.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let row = env.row(ty);
            debug_assert_eq!(row.child_types.len(), catalog.system(row.system).len());
            for &c in &row.child_types {
                next[c] = next[c].saturating_add(count);
            }
        }
        pop = next;
        total = total.saturating_add(pop.iter().fold(0u64, |s, &c| s.saturating_add(c)));
    }
    total
}

/// Member of a cut set: a node at neck level `neck` whose scale product first
/// drops to `e^{-k}` or below there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutMember {
    pub node: NodeRef,
    pub neck: usize,
    pub previous_neck: usize,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutSet {
    pub k: u32,
    pub members: Vec<CutMember>,
    pub m_k: usize,
    pub t_k: f64,
    pub y_k: usize,
}

impl CutSet {
    pub fn min_product(&self) -> f64 {
        self.members.iter().map(|m| m.product).fold(f64::INFINITY, f64::min)
    }

    pub fn max_product(&self) -> f64 {
        self.members.iter().map(|m| m.product).fold(0.0, f64::max)
    }

    /// Distinct neck levels among the members.
    pub fn neck_levels(&self) -> Vec<usize> {
        let mut levels: Vec<usize> = self.members.iter().map(|m| m.neck).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }
}

/// Minimal extra levels after which a path with product `p` can reach
/// `threshold`, assuming the largest per-level factor.
fn depth_hint(p: f64, threshold: f64, per_level_max: f64) -> usize {
    if p <= threshold {
        return 1;
    }
    let levels = ((threshold / p).ln() / per_level_max.ln()).ceil();
    (levels as usize).max(1)
}

/// `Lambda_k`: for each path, the first neck node whose product `r m` is at
/// most `e^{-k}`. `Lambda_0` is the root.
pub fn cut_set(tree: &VTree, k: u32) -> Result<CutSet> {
    if k == 0 {
        return Ok(CutSet {
            k,
            members: vec![CutMember {
                node: NodeRef::ROOT,
                neck: 0,
                previous_neck: 0,
                product: 1.0,
            }],
            m_k: 1,
            t_k: 1.0,
            y_k: 0,
        });
    }
    let threshold = (-(k as f64)).exp();
    let mut members = Vec::new();
    let mut covered = vec![false];
    let mut neck_iter = tree.necks().iter().peekable();
    let mut previous_neck = 0;
    for g in 1..=tree.depth() {
        let gen = tree.generation(g);
        let mut next: Vec<bool> = gen.iter().map(|n| covered[n.parent]).collect();
        if neck_iter.peek() == Some(&&g) {
            neck_iter.next();
            for (i, node) in gen.iter().enumerate() {
                if !next[i] && node.scale_product() <= threshold {
                    next[i] = true;
                    members.push(CutMember {
                        node: NodeRef {
                            generation: g,
                            index: i,
                        },
                        neck: g,
                        previous_neck,
                        product: node.scale_product(),
                    });
                }
            }
            previous_neck = g;
        }
        covered = next;
    }
    if let Some((i, _)) = covered.iter().enumerate().find(|(_, c)| !**c) {
        let leaf = tree.generation(tree.depth())[i];
        let per_level = tree.catalog().extrema().map(|e| e.r_sup * e.m_sup).unwrap_or(0.5);
        return Err(Error::DepthExhausted {
            what: format!("cut set k={k} does not cover generation {}", tree.depth()),
            additional_levels: depth_hint(leaf.scale_product(), threshold, per_level),
        });
    }
    let m_k = members.len();
    let total: f64 = members.iter().map(|m| m.product).sum();
    let y_k = members.iter().map(|m| m.neck - m.previous_neck).max().unwrap_or(0);
    Ok(CutSet {
        k,
        members,
        m_k,
        t_k: m_k as f64 / total,
        y_k,
    })
}

/// Independent check that every leaf has exactly one ancestor-or-self in `cut`.
pub fn is_cut_set(tree: &VTree, cut: &CutSet) -> bool {
    let set: HashSet<NodeRef> = cut.members.iter().map(|m| m.node).collect();
    if set.len() != cut.members.len() {
        return false;
    }
    let depth = tree.depth();
    (0..tree.generation(depth).len()).all(|i| {
        let leaf = NodeRef {
            generation: depth,
            index: i,
        };
        (0..=depth).filter(|&g| set.contains(&tree.ancestor(leaf, g))).count() == 1
    })
}

/// `(r_i m_i)^x` for every map of every system, stored as the largest
/// power's log plus powers relative to it so large `x` cannot underflow.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    log_max: Vec<f64>,
    rel: Vec<Vec<f64>>,
}

impl ScaleTable {
    pub fn new(catalog: &Catalog, x: f64) -> Self {
        let mut log_max = Vec::with_capacity(catalog.len());
        let mut rel = Vec::with_capacity(catalog.len());
        for s in catalog.systems() {
            let logs: Vec<f64> = s.scale_products().map(|p| x * p.ln()).collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rel.push(logs.iter().map(|l| (l - top).exp()).collect());
            log_max.push(top);
        }
        ScaleTable { log_max, rel }
    }

    /// One generation step of the per-type weights `w`, renormalized to sum
    /// to one; returns the log of the normalizer. `next` is scratch space.
    pub fn apply(&self, env: &Environment, w: &mut [f64], next: &mut [f64]) -> f64 {
        next.iter_mut().for_each(|x| *x = 0.0);
        let shift = w
            .iter()
            .enumerate()
            .filter(|(_, &weight)| weight > 0.0)
            .map(|(ty, &weight)| weight.ln() + self.log_max[env.row(ty).system])
            .fold(f64::NEG_INFINITY, f64::max);
        for (ty, &weight) in w.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let row = env.row(ty);
            let factor = (weight.ln() + self.log_max[row.system] - shift).exp();
            for (&child, &s) in row.child_types.iter().zip(&self.rel[row.system]) {
                next[child] += factor * s;
            }
        }
        let total: f64 = next.iter().sum();
        for (dst, &src) in w.iter_mut().zip(next.iter()) {
            *dst = src / total;
        }
        shift + total.ln()
    }
}

/// Natural log of `sum (m_ii r_ii)^x` over the generation reached by applying
/// `envs` to a single node of type `root_type`.
///
/// Per-type dynamic programme: `w[v]` holds the summed weight of the current
/// generation's nodes of type `v`; it is renormalized after every step.
pub fn block_log_sum(table: &ScaleTable, v: usize, root_type: usize, envs: &[Environment]) -> f64 {
    let mut w = vec![0.0; v];
    let mut next = vec![0.0; v];
    w[root_type] = 1.0;
    envs.iter().map(|env| table.apply(env, &mut w, &mut next)).sum()
}

/// Sums of scale factors up to the `k`-th neck, evaluated two ways.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeckScaleSums {
    pub x: f64,
    pub k: usize,
    /// `log sum_{|l| = n(j) - n(j-1)} s_l` for each block `j = 1..=k`.
    pub block_log_sums: Vec<f64>,
    /// Sum of the block logs.
    pub log_factorized: f64,
    /// Log of the direct sum over generation `n(k)`.
    pub log_direct: f64,
}

impl NeckScaleSums {
    pub fn direct_sum(&self) -> f64 {
        self.log_direct.exp()
    }

    pub fn factorized_sum(&self) -> f64 {
        self.log_factorized.exp()
    }
}

/// `sum_{|ii| = n(k)} (m_ii r_ii)^x`, directly over the materialized
/// generation and as the product of per-block sums.
pub fn scale_sum_at_neck(tree: &VTree, x: f64, k: usize) -> Result<NeckScaleSums> {
    if k > tree.necks().len() {
        return Err(Error::DepthExhausted {
            what: format!("{k} necks requested, {} built", tree.necks().len()),
            additional_levels: 1,
        });
    }
    let table = ScaleTable::new(tree.catalog(), x);
    let mut block_log_sums = Vec::with_capacity(k);
    let mut start = 0;
    let mut ty = tree.root_type();
    for &neck in &tree.necks()[..k] {
        let envs = &tree.environments()[start..neck];
        block_log_sums.push(block_log_sum(&table, tree.v(), ty, envs));
        ty = tree.environments()[neck - 1].neck_type().expect("neck environment");
        start = neck;
    }
    let level = if k == 0 { 0 } else { tree.necks()[k - 1] };
    let log_direct = log_sum_exp(tree.generation(level).iter().map(|n| x * n.scale_product().ln()));
    Ok(NeckScaleSums {
        x,
        k,
        log_factorized: block_log_sums.iter().sum(),
        block_log_sums,
        log_direct,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::presets;

    fn neck_env(catalog: &Catalog, v: usize, system: usize, ty: usize) -> Environment {
        let n = catalog.system(system).len();
        let rows = (0..v)
            .map(|_| EnvRow {
                system,
                child_types: vec![ty; n],
            })
            .collect();
        Environment::new(catalog, v, rows).unwrap()
    }

    #[test]
    fn v1_environments_are_necks() {
        let cat = presets::cantor_fifths();
        let mut rng = Stream::new(5);
        for _ in 0..100 {
            assert!(sample_environment(&cat, 1, &mut rng).is_neck());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cat = presets::cantor_fifths();
        let a = sample_environment(&cat, 3, &mut Stream::new(42));
        let b = sample_environment(&cat, 3, &mut Stream::new(42));
        assert_eq!(a, b);
    }

    #[test]
    fn neck_flag_matches_definition() {
        let cat = presets::cantor();
        let env = Environment::new(
            &cat,
            2,
            vec![
                EnvRow {
                    system: 0,
                    child_types: vec![1, 1],
                },
                EnvRow {
                    system: 0,
                    child_types: vec![1, 0],
                },
            ],
        )
        .unwrap();
        assert!(!env.is_neck());
        assert_eq!(env.neck_type(), None);
        let env = neck_env(&cat, 2, 0, 1);
        assert!(env.is_neck());
        assert_eq!(env.neck_type(), Some(1));
    }

    #[test]
    fn environment_rejects_bad_rows() {
        let cat = presets::cantor();
        let bad = vec![
            EnvRow {
                system: 0,
                child_types: vec![0, 2],
            },
            EnvRow {
                system: 0,
                child_types: vec![0, 0],
            },
        ];
        assert!(Environment::new(&cat, 2, bad).is_err());
        let bad = vec![EnvRow {
            system: 1,
            child_types: vec![0, 0],
        }];
        assert!(Environment::new(&cat, 1, bad).is_err());
        let bad = vec![EnvRow {
            system: 0,
            child_types: vec![0],
        }];
        assert!(Environment::new(&cat, 1, bad).is_err());
    }

    #[test]
    fn depth_zero_tree() {
        let cat = presets::cantor();
        let tree = build_tree(&cat, 2, 0, TreeOptions::with_root(1), &mut Stream::new(1)).unwrap();
        assert_eq!(tree.node_count(), 1);
        let root = tree.node(NodeRef::ROOT);
        assert_eq!((root.r, root.m), (1.0, 1.0));
        assert!(tree.environments().is_empty());
        assert!(tree.necks().is_empty());
    }

    #[test]
    fn cantor_generation_sizes() {
        let cat = presets::cantor();
        for v in 1..4 {
            let tree = build_tree(&cat, v, 7, TreeOptions::default(), &mut Stream::new(v as u64)).unwrap();
            for g in 0..=7 {
                assert_eq!(tree.generation(g).len(), 1 << g);
            }
        }
    }

    #[test]
    fn v1_every_level_is_a_neck() {
        let cat = presets::cantor_fifths();
        let tree = build_tree(&cat, 1, 6, TreeOptions::default(), &mut Stream::new(3)).unwrap();
        assert_eq!(tree.necks(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn node_cap_is_enforced() {
        let cat = presets::cantor();
        let opts = TreeOptions {
            root: RootType::Fixed(0),
            node_cap: 100,
        };
        let err = build_tree(&cat, 1, 10, opts, &mut Stream::new(1)).unwrap_err();
        assert!(matches!(err, Error::TreeTooLarge { nodes: 2047, cap: 100 }));
    }

    #[test]
    fn cumulative_products_and_children() {
        let cat = presets::cantor_fifths();
        let tree = build_tree(&cat, 3, 5, TreeOptions::default(), &mut Stream::new(11)).unwrap();
        for g in 1..=5 {
            let env = &tree.environments()[g - 1];
            for node in tree.generation(g) {
                let parent = tree.generation(g - 1)[node.parent];
                let row = env.row(parent.ty);
                assert_eq!(parent.system, Some(row.system));
                let sys = cat.system(row.system);
                assert_eq!(node.ty, row.child_types[node.position]);
                assert_eq!(node.r, parent.r * sys.maps[node.position].r);
                assert_eq!(node.m, parent.m * sys.weights[node.position]);
            }
            // children count per parent
            let mut counts = vec![0usize; tree.generation(g - 1).len()];
            for node in tree.generation(g) {
                counts[node.parent] += 1;
            }
            for (p, c) in tree.generation(g - 1).iter().zip(counts) {
                assert_eq!(c, cat.system(p.system.unwrap()).len());
            }
        }
    }

    #[test]
    fn neck_generation_subtrees_identical() {
        let cat = presets::cantor_fifths();
        for seed in 0..20 {
            let tree = build_tree(&cat, 2, 7, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            for &neck in tree.necks() {
                let gen = tree.generation(neck);
                let ty = gen[0].ty;
                assert!(gen.iter().all(|n| n.ty == ty));
                let first = tree
                    .subtree(NodeRef {
                        generation: neck,
                        index: 0,
                    })
                    .unwrap();
                for i in 1..gen.len() {
                    let other = tree
                        .subtree(NodeRef {
                            generation: neck,
                            index: i,
                        })
                        .unwrap();
                    for g in 0..=first.depth() {
                        assert_eq!(first.generation(g), other.generation(g));
                    }
                }
                // relative products in the original tree agree as well
                let base_a = gen[0];
                let base_b = gen[gen.len() - 1];
                let last = tree.depth();
                let below = |root: usize| -> Vec<(usize, f64, f64)> {
                    (0..tree.generation(last).len())
                        .filter(|&i| {
                            tree.ancestor(
                                NodeRef {
                                    generation: last,
                                    index: i,
                                },
                                neck,
                            )
                            .index
                                == root
                        })
                        .map(|i| {
                            let n = tree.generation(last)[i];
                            (n.ty, n.r, n.m)
                        })
                        .collect()
                };
                let xa = below(0);
                let xb = below(gen.len() - 1);
                assert_eq!(xa.len(), xb.len());
                for (p, q) in xa.iter().zip(&xb) {
                    assert_eq!(p.0, q.0);
                    assert!((p.1 / base_a.r - q.1 / base_b.r).abs() < 1e-12 * p.1 / base_a.r);
                    assert!((p.2 / base_a.m - q.2 / base_b.m).abs() < 1e-12 * p.2 / base_a.m);
                }
            }
        }
    }

    #[test]
    fn paths_and_ancestors() {
        let cat = presets::cantor();
        let tree = build_tree(&cat, 1, 3, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        let leaf = NodeRef {
            generation: 3,
            index: 5,
        };
        assert_eq!(tree.path(leaf), vec![1, 0, 1]);
        assert_eq!(
            tree.ancestor(leaf, 1),
            NodeRef {
                generation: 1,
                index: 1
            }
        );
        let (l, r) = tree.cell_of(leaf);
        // S_2 S_1 S_2 [0,1] = 2/3 + (1/3)(0 + (1/3)(2/3 + [0,1/3]))
        assert!((l - (2.0 / 3.0 + 2.0 / 27.0)).abs() < 1e-15);
        assert!((r - l - 1.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn cut_set_k0_is_root() {
        let cat = presets::cantor();
        let tree = build_tree(&cat, 1, 2, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        let cut = cut_set(&tree, 0).unwrap();
        assert_eq!(cut.members.len(), 1);
        assert_eq!(cut.members[0].node, NodeRef::ROOT);
        assert_eq!((cut.m_k, cut.t_k), (1, 1.0));
    }

    #[test]
    fn cantor_cut_sets_are_full_generations() {
        let cat = presets::cantor();
        let tree = build_tree(&cat, 1, 10, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        for k in 1..=17u32 {
            let l = (k as f64 / 6f64.ln()).ceil() as usize;
            let cut = cut_set(&tree, k).unwrap();
            assert_eq!(cut.m_k, 1 << l, "k={k}");
            assert!(cut.members.iter().all(|m| m.node.generation == l));
            assert!(is_cut_set(&tree, &cut));
            assert_eq!(cut.y_k, 1);
        }
    }

    #[test]
    fn cut_set_reports_depth_exhaustion() {
        let cat = presets::cantor();
        let tree = build_tree(&cat, 1, 2, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        match cut_set(&tree, 5) {
            Err(Error::DepthExhausted { additional_levels, .. }) => {
                // (1/6)^l <= e^-5 needs l = 3, one more than built; e^-9 needs l = 6.
                assert_eq!(additional_levels, 1);
            }
            other => panic!("{other:?}"),
        }
        match cut_set(&tree, 9) {
            Err(Error::DepthExhausted { additional_levels, .. }) => assert_eq!(additional_levels, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_cut_sets_cover_and_satisfy_chain() {
        let cat = presets::cantor_uneven();
        let eta = cat.extrema().unwrap().eta;
        let mut checked = 0;
        for seed in 0..30 {
            let tree = build_tree(&cat, 2, 12, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            for k in 0..5 {
                let Ok(cut) = cut_set(&tree, k) else { continue };
                checked += 1;
                assert!(is_cut_set(&tree, &cut));
                let bound = (-(k as f64)).exp();
                let mass: f64 = cut.members.iter().map(|m| tree.node(m.node).m).sum();
                assert!((mass - 1.0).abs() < 1e-12);
                for m in &cut.members {
                    assert!(m.product <= bound);
                    assert!(eta.powi(cut.y_k as i32) * bound <= m.product);
                    if k > 0 {
                        let prev = tree.ancestor(m.node, m.previous_neck);
                        assert!(tree.node(prev).scale_product() > bound);
                        assert!(tree.necks().contains(&m.neck));
                    }
                }
            }
        }
        assert!(checked > 60);
    }

    #[test]
    fn single_block_is_direct_sum() {
        let cat = presets::cantor_fifths();
        let x = 0.7;
        for system in 0..2 {
            let env = neck_env(&cat, 1, system, 0);
            let tree = VTree::from_environments(&cat, 1, 0, vec![env], DEFAULT_NODE_CAP).unwrap();
            let sums = scale_sum_at_neck(&tree, x, 1).unwrap();
            let expected = cat.system(system).scale_sum(x);
            assert!((sums.direct_sum() - expected).abs() < 1e-14);
            assert!((sums.factorized_sum() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn cantor_root_gives_unit_sums() {
        let cat = presets::cantor();
        let x = 2f64.ln() / 6f64.ln();
        let tree = build_tree(&cat, 1, 9, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        for k in 0..=9 {
            let sums = scale_sum_at_neck(&tree, x, k).unwrap();
            assert!(sums.log_direct.abs() < 1e-12);
            assert!(sums.log_factorized.abs() < 1e-12);
        }
        assert!(scale_sum_at_neck(&tree, x, 10).is_err());
    }

    #[test]
    fn factorization_on_random_trees() {
        let cat = presets::cantor_fifths();
        for seed in 0..20 {
            let tree = build_tree(&cat, 2, 9, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            for k in 0..=tree.necks().len() {
                for &x in &[0.2, 0.5, 1.3] {
                    let s = scale_sum_at_neck(&tree, x, k).unwrap();
                    let rel = (s.log_direct - s.log_factorized).exp() - 1.0;
                    assert!(rel.abs() < 1e-10, "seed {seed} k {k} x {x}: {rel}");
                }
            }
        }
    }

    #[test]
    fn jsonl_dump_has_one_line_per_node() {
        let cat = presets::cantor();
        let tree = build_tree(&cat, 2, 3, TreeOptions::default(), &mut Stream::new(2)).unwrap();
        let mut buf = Vec::new();
        tree.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), tree.node_count());
        let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(last["path"], serde_json::json!([1, 1, 1]));
        let envs: Vec<Environment> = serde_json::from_str(&tree.environments_json().unwrap()).unwrap();
        assert_eq!(envs, tree.environments());
    }
}
