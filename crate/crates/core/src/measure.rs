//! Level-n cell decompositions and the piecewise-uniform measure `mu_n`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vtree::{NodeRef, VTree, DEFAULT_NODE_CAP};

/// Consecutive endpoints closer than this (relative to the interval scale)
/// are treated as touching.
const TOUCH_TOL: f64 = 1e-13;

/// `S_ii([a, b])` carrying mass `m_ii`, uniformly spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub node: NodeRef,
    pub left: f64,
    pub right: f64,
    pub mass: f64,
}

impl Cell {
    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn density(&self) -> f64 {
        self.mass / self.length()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellDecomposition {
    pub level: usize,
    /// Sub-elements per original cell (1 unless refined).
    pub splits: usize,
    pub interval: (f64, f64),
    /// Left to right.
    pub cells: Vec<Cell>,
    /// Open gaps between consecutive cells; zero-length gaps are omitted.
    pub gaps: Vec<(f64, f64)>,
}

/// Cells of generation `level`, left to right, with exact composed endpoints.
pub fn decompose(tree: &VTree, level: usize) -> Result<CellDecomposition> {
    if level > tree.depth() {
        return Err(Error::DepthExhausted {
            what: format!("level {level} requested from a tree of depth {}", tree.depth()),
            additional_levels: level - tree.depth(),
        });
    }
    let (a, b) = tree.catalog().interval();
    let cells = tree
        .generation(level)
        .iter()
        .enumerate()
        .map(|(index, node)| Cell {
            node: NodeRef {
                generation: level,
                index,
            },
            left: node.r * a + node.offset,
            right: node.r * b + node.offset,
            mass: node.m,
        })
        .collect();
    Ok(CellDecomposition::from_cells(level, 1, (a, b), cells))
}

impl CellDecomposition {
    /// Sorts nothing: `cells` must already be ordered. Snaps touching
    /// endpoints and derives the gap list.
    pub fn from_cells(level: usize, splits: usize, interval: (f64, f64), mut cells: Vec<Cell>) -> Self {
        let scale = TOUCH_TOL * (interval.0.abs() + interval.1.abs() + (interval.1 - interval.0));
        let mut gaps = Vec::new();
        for i in 1..cells.len() {
            let right = cells[i - 1].right;
            let left = cells[i].left;
            if (left - right).abs() <= scale {
                cells[i].left = right;
            } else if left > right {
                gaps.push((right, left));
            }
        }
        CellDecomposition {
            level,
            splits,
            interval,
            cells,
            gaps,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass).sum()
    }

    /// Deduplicated, sorted cell endpoints.
    pub fn mesh_nodes(&self) -> Vec<f64> {
        let mut nodes = Vec::with_capacity(2 * self.cells.len());
        for c in &self.cells {
            if nodes.last() != Some(&c.left) {
                nodes.push(c.left);
            }
            nodes.push(c.right);
        }
        nodes
    }

    /// Writes `kind,generation,index,left,right,mass,density` rows with 17
    /// significant digits; gap rows leave the node columns empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "generation", "index", "left", "right", "mass", "density"])?;
        let mut gaps = self.gaps.iter().peekable();
        for c in &self.cells {
            while let Some(&&(l, r)) = gaps.peek() {
                if r > c.left {
                    break;
                }
                w.write_record(["gap", "", "", &fmt17(l), &fmt17(r), &fmt17(0.0), &fmt17(0.0)])?;
                gaps.next();
            }
            w.write_record([
                "cell",
                &c.node.generation.to_string(),
                &c.node.index.to_string(),
                &fmt17(c.left),
                &fmt17(c.right),
                &fmt17(c.mass),
                &fmt17(c.density()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads back a [`write_csv`](Self::write_csv) table.
    pub fn read_csv<R: Read>(input: R, level: usize, splits: usize, interval: (f64, f64)) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut cells = Vec::new();
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("{s}: {e}")))
        };
        let parse_usize = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("{s}: {e}")))
        };
        for rec in rdr.records() {
            let rec = rec?;
            if rec.get(0) != Some("cell") {
                continue;
            }
            let field = |i: usize| rec.get(i).unwrap_or("");
            cells.push(Cell {
                node: NodeRef {
                    generation: parse_usize(field(1))?,
                    index: parse_usize(field(2))?,
                },
                left: parse(field(3))?,
                right: parse(field(4))?,
                mass: parse(field(5))?,
            });
        }
        Ok(Self::from_cells(level, splits, interval, cells))
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Stored mass `m_ii` of cell `index`.
pub fn cell_mass(decomposition: &CellDecomposition, index: usize) -> Result<f64> {
    decomposition.cells.get(index).map(|c| c.mass).ok_or(Error::IndexError {
        index,
        len: decomposition.cells.len(),
    })
}

/// `mu_n([u, v])` by exact integration of the piecewise-constant density.
pub fn measure_of_interval(decomposition: &CellDecomposition, u: f64, v: f64) -> Result<f64> {
    if u.is_nan() || v.is_nan() {
        return Err(Error::ArgumentError("NaN interval endpoint".into()));
    }
    if u > v {
        return Err(Error::ArgumentError(format!("inverted interval [{u}, {v}]")));
    }
    let cells = &decomposition.cells;
    let start = cells.partition_point(|c| c.right <= u);
    let mut total = 0.0;
    for c in &cells[start..] {
        if c.left >= v {
            break;
        }
        if c.left >= u && c.right <= v {
            total += c.mass;
        } else {
            let overlap = c.right.min(v) - c.left.max(u);
            if overlap > 0.0 {
                total += c.density() * overlap;
            }
        }
    }
    Ok(total)
}

/// Splits every cell into `splits` equal sub-cells of the same density.
pub fn refine_uniform(decomposition: &CellDecomposition, splits: usize) -> Result<CellDecomposition> {
    refine_uniform_capped(decomposition, splits, DEFAULT_NODE_CAP)
}

pub fn refine_uniform_capped(decomposition: &CellDecomposition, splits: usize, cap: u64) -> Result<CellDecomposition> {
    if splits == 0 {
        return Err(Error::ArgumentError("splits must be at least 1".into()));
    }
    if splits == 1 {
        return Ok(decomposition.clone());
    }
    let count = decomposition.cells.len() as u64 * splits as u64;
    if count > cap {
        return Err(Error::TreeTooLarge { nodes: count, cap });
    }
    let mut cells = Vec::with_capacity(count as usize);
    for c in &decomposition.cells {
        let h = c.length() / splits as f64;
        let mass = c.mass / splits as f64;
        for t in 0..splits {
            let left = c.left + h * t as f64;
            let right = if t + 1 == splits {
                c.right
            } else {
                c.left + h * (t + 1) as f64
            };
            cells.push(Cell {
                node: c.node,
                left,
                right,
                mass,
            });
        }
    }
    Ok(CellDecomposition {
        level: decomposition.level,
        splits: decomposition.splits * splits,
        interval: decomposition.interval,
        cells,
        gaps: decomposition.gaps.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::presets;
    use crate::rng::Stream;
    use crate::vtree::{build_tree, cut_set, TreeOptions};
    use proptest::prelude::*;

    fn cantor_tree(depth: usize) -> VTree {
        build_tree(
            &presets::cantor(),
            1,
            depth,
            TreeOptions::default(),
            &mut Stream::new(0),
        )
        .unwrap()
    }

    #[test]
    fn cantor_level_one() {
        let d = decompose(&cantor_tree(2), 1).unwrap();
        assert_eq!(d.cells.len(), 2);
        assert_eq!((d.cells[0].left, d.cells[0].right), (0.0, 1.0 / 3.0));
        assert!((d.cells[1].left - 2.0 / 3.0).abs() < 1e-16);
        assert!((d.cells[1].right - 1.0).abs() < 1e-16);
        assert_eq!((d.cells[0].mass, d.cells[1].mass), (0.5, 0.5));
        assert_eq!(d.gaps.len(), 1);
        assert!((d.gaps[0].0 - 1.0 / 3.0).abs() < 1e-16 && (d.gaps[0].1 - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn level_zero_is_whole_interval() {
        let d = decompose(&cantor_tree(1), 0).unwrap();
        assert_eq!(d.cells.len(), 1);
        assert_eq!((d.cells[0].left, d.cells[0].right, d.cells[0].mass), (0.0, 1.0, 1.0));
        assert!(d.gaps.is_empty());
    }

    #[test]
    fn level_beyond_depth() {
        assert!(matches!(
            decompose(&cantor_tree(2), 4),
            Err(Error::DepthExhausted {
                additional_levels: 2,
                ..
            })
        ));
    }

    #[test]
    fn touching_cells_produce_no_gaps() {
        let tree = build_tree(&presets::lebesgue(), 1, 6, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        let d = decompose(&tree, 6).unwrap();
        assert!(d.gaps.is_empty());
        assert_eq!(d.mesh_nodes().len(), 65);
    }

    #[test]
    fn cell_mass_queries() {
        let d = decompose(&cantor_tree(2), 2).unwrap();
        assert_eq!(cell_mass(&d, 1).unwrap(), 0.25);
        assert!(matches!(cell_mass(&d, 4), Err(Error::IndexError { index: 4, len: 4 })));
    }

    #[test]
    fn mass_matches_density_times_length() {
        let cat = presets::cantor_fifths();
        let tree = build_tree(&cat, 3, 6, TreeOptions::default(), &mut Stream::new(4)).unwrap();
        let d = decompose(&tree, 6).unwrap();
        for (i, c) in d.cells.iter().enumerate() {
            // Midpoint-rule quadrature of the constant density is exact.
            let n = 8;
            let h = c.length() / n as f64;
            let quad: f64 = (0..n).map(|_| c.density() * h).sum();
            assert!((quad - cell_mass(&d, i).unwrap()).abs() <= 1e-12 * c.mass);
            let node = tree.node(c.node);
            assert!((c.length() - node.r).abs() <= 1e-12 * node.r);
        }
    }

    #[test]
    fn interval_measures() {
        let d = decompose(&cantor_tree(2), 1).unwrap();
        assert!((measure_of_interval(&d, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(measure_of_interval(&d, 1.0 / 3.0, 2.0 / 3.0).unwrap(), 0.0);
        assert!((measure_of_interval(&d, 0.0, 1.0 / 6.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            measure_of_interval(&d, 0.5, 0.2),
            Err(Error::ArgumentError(_))
        ));
    }

    #[test]
    fn refinement_preserves_measure() {
        let d = decompose(&cantor_tree(3), 3).unwrap();
        assert_eq!(refine_uniform(&d, 1).unwrap(), d);
        let r = refine_uniform(&d, 5).unwrap();
        assert_eq!(r.cells.len(), 40);
        assert_eq!(r.splits, 5);
        assert!((r.total_mass() - 1.0).abs() < 1e-12);
        for &(u, v) in &[(0.0, 0.3), (0.05, 0.71), (0.33, 0.99)] {
            let a = measure_of_interval(&d, u, v).unwrap();
            let b = measure_of_interval(&r, u, v).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            refine_uniform_capped(&d, 5, 10),
            Err(Error::TreeTooLarge { .. })
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let tree = build_tree(
            &presets::cantor_uneven(),
            2,
            5,
            TreeOptions::default(),
            &mut Stream::new(8),
        )
        .unwrap();
        let d = decompose(&tree, 5).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kind,generation,index,left,right,mass,density\n"));
        assert_eq!(text.lines().count(), 1 + d.cells.len() + d.gaps.len());
        let back = CellDecomposition::read_csv(&buf[..], d.level, d.splits, d.interval).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn endpoints_persist_to_next_level() {
        let cat = presets::cantor_fifths();
        for seed in 0..5 {
            let tree = build_tree(&cat, 2, 6, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            for n in 0..6 {
                let coarse = decompose(&tree, n).unwrap().mesh_nodes();
                let fine = decompose(&tree, n + 1).unwrap().mesh_nodes();
                for x in coarse {
                    assert!(fine.iter().any(|&y| (y - x).abs() < 1e-14), "level {n}: {x}");
                }
            }
        }
    }

    #[test]
    fn cut_set_masses_partition_unity() {
        let cat = presets::cantor_uneven();
        for seed in 0..10 {
            let tree = build_tree(&cat, 2, 12, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            for k in 0..4 {
                if let Ok(cut) = cut_set(&tree, k) {
                    let total: f64 = cut.members.iter().map(|m| tree.node(m.node).m).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn measure_is_additive(seed in 0u64..1000, u in 0.0f64..1.0, t in 0.0f64..1.0, s in 0.0f64..1.0) {
            let cat = presets::cantor_fifths();
            let tree = build_tree(&cat, 2, 5, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            let d = decompose(&tree, 5).unwrap();
            let v = u + (1.0 - u) * t;
            let w = v + (1.0 - v) * s;
            let whole = measure_of_interval(&d, u, w).unwrap();
            let parts = measure_of_interval(&d, u, v).unwrap() + measure_of_interval(&d, v, w).unwrap();
            prop_assert!((whole - parts).abs() < 1e-12);
        }

        #[test]
        fn measure_is_self_similar(seed in 0u64..1000, u in 0.0f64..1.0, t in 0.0f64..1.0) {
            let cat = presets::cantor_fifths();
            let n = 4;
            let tree = build_tree(&cat, 3, n + 1, TreeOptions::default(), &mut Stream::new(seed)).unwrap();
            let whole = decompose(&tree, n + 1).unwrap();
            let v = u + (1.0 - u) * t;
            let root_system = cat.system(tree.node(NodeRef::ROOT).system.unwrap());
            for (i, child) in tree.generation(1).iter().enumerate() {
                let (cl, cr) = tree.cell_of(NodeRef { generation: 1, index: i });
                let (lo, hi) = (u.max(cl), v.min(cr));
                let lhs = if lo < hi { measure_of_interval(&whole, lo, hi).unwrap() } else { 0.0 };
                let sub = tree.subtree(NodeRef { generation: 1, index: i }).unwrap();
                let sub_d = decompose(&sub, n).unwrap();
                let map = root_system.maps[i];
                let rhs = if lo < hi {
                    child.m * measure_of_interval(&sub_d, (lo - map.c) / map.r, (hi - map.c) / map.r).unwrap()
                } else { 0.0 };
                prop_assert!((lhs - rhs).abs() < 1e-12, "child {i}: {lhs} vs {rhs}");
            }
        }
    }
}
