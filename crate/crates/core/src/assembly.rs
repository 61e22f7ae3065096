//! Piecewise-linear Ritz discretization of the energy form `int f' g' dx`
//! against `L2(mu_n)`.
//!
//! Mesh nodes are the deduplicated cell endpoints. Cells become elements of
//! constant density; gaps become elements with stiffness but no mass.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{fmt17, CellDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `f(a) = f(b) = 0`.
    Dirichlet,
    /// Free ends.
    Neumann,
}

/// Symmetric tridiagonal pencil `(K, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub boundary: Boundary,
    pub k_diag: Vec<f64>,
    /// `k_off[i]` couples unknowns `i` and `i + 1`.
    pub k_off: Vec<f64>,
    pub m_diag: Vec<f64>,
    pub m_off: Vec<f64>,
    /// All mesh nodes, boundary included.
    pub nodes: Vec<f64>,
    pub level: usize,
    pub splits: usize,
}

impl Pencil {
    pub fn dim(&self) -> usize {
        self.k_diag.len()
    }

    /// Writes rows `i,K_diag,K_off,M_diag,M_off`; the last row has zero
    /// off-diagonals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "K_diag", "K_off", "M_diag", "M_off"])?;
        for i in 0..self.dim() {
            let ko = self.k_off.get(i).copied().unwrap_or(0.0);
            let mo = self.m_off.get(i).copied().unwrap_or(0.0);
            w.write_record([
                i.to_string(),
                fmt17(self.k_diag[i]),
                fmt17(ko),
                fmt17(self.m_diag[i]),
                fmt17(mo),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One mesh element: length and the mass it carries.
#[derive(Debug, Clone, Copy)]
struct Element {
    length: f64,
    mass: f64,
}

fn elements(decomposition: &CellDecomposition) -> (Vec<f64>, Vec<Element>) {
    let mut nodes = Vec::with_capacity(2 * decomposition.cells.len());
    let mut elems = Vec::with_capacity(2 * decomposition.cells.len());
    for cell in &decomposition.cells {
        match nodes.last() {
            None => nodes.push(cell.left),
            Some(&last) if cell.left > last => {
                elems.push(Element {
                    length: cell.left - last,
                    mass: 0.0,
                });
                nodes.push(cell.left);
            }
            Some(_) => {}
        }
        elems.push(Element {
            length: cell.right - cell.left,
            mass: cell.mass,
        });
        nodes.push(cell.right);
    }
    (nodes, elems)
}

/// Assembles stiffness blocks `(1/h) [[1,-1],[-1,1]]` and mass blocks
/// `m_e [[1/3,1/6],[1/6,1/3]]` per element; Dirichlet drops the two boundary
/// unknowns.
pub fn assemble(decomposition: &CellDecomposition, boundary: Boundary) -> Result<Pencil> {
    if decomposition.cells.is_empty() {
        return Err(Error::ArgumentError("decomposition has no cells".into()));
    }
    let (nodes, elems) = elements(decomposition);
    let n = nodes.len();
    let mut k_diag = vec![0.0; n];
    let mut k_off = vec![0.0; n - 1];
    let mut m_diag = vec![0.0; n];
    let mut m_off = vec![0.0; n - 1];
    for (e, el) in elems.iter().enumerate() {
        let s = 1.0 / el.length;
        k_diag[e] += s;
        k_diag[e + 1] += s;
        k_off[e] -= s;
        let md = el.mass / 3.0;
        m_diag[e] += md;
        m_diag[e + 1] += md;
        m_off[e] += el.mass / 6.0;
    }
    if boundary == Boundary::Dirichlet {
        k_diag = k_diag[1..n - 1].to_vec();
        m_diag = m_diag[1..n - 1].to_vec();
        k_off = if n > 2 { k_off[1..n - 2].to_vec() } else { Vec::new() };
        m_off = if n > 2 { m_off[1..n - 2].to_vec() } else { Vec::new() };
    }
    check_mass(&m_diag, &m_off)?;
    Ok(Pencil {
        boundary,
        k_diag,
        k_off,
        m_diag,
        m_off,
        nodes,
        level: decomposition.level,
        splits: decomposition.splits,
    })
}

/// LDL^T pivots of `M` must all be positive.
fn check_mass(diag: &[f64], off: &[f64]) -> Result<()> {
    let mut prev = f64::INFINITY;
    for (i, &d) in diag.iter().enumerate() {
        let pivot = if i == 0 { d } else { d - off[i - 1] * off[i - 1] / prev };
        if pivot.is_nan() || pivot <= 0.0 {
            return Err(Error::SingularMass { node: i });
        }
        prev = pivot;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::presets;
    use crate::measure::{decompose, refine_uniform, Cell};
    use crate::rng::Stream;
    use crate::vtree::{build_tree, NodeRef, TreeOptions};

    fn unit_cell() -> CellDecomposition {
        CellDecomposition::from_cells(
            0,
            1,
            (0.0, 1.0),
            vec![Cell {
                node: NodeRef::ROOT,
                left: 0.0,
                right: 1.0,
                mass: 1.0,
            }],
        )
    }

    #[test]
    fn two_element_lebesgue_dirichlet() {
        let d = refine_uniform(&unit_cell(), 2).unwrap();
        let p = assemble(&d, Boundary::Dirichlet).unwrap();
        assert_eq!(p.dim(), 1);
        assert_eq!(p.k_diag, vec![4.0]);
        assert!((p.m_diag[0] - 1.0 / 3.0).abs() < 1e-16);
        assert!(p.k_off.is_empty() && p.m_off.is_empty());
    }

    #[test]
    fn two_element_lebesgue_neumann() {
        let d = refine_uniform(&unit_cell(), 2).unwrap();
        let p = assemble(&d, Boundary::Neumann).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.k_diag, vec![2.0, 4.0, 2.0]);
        assert_eq!(p.k_off, vec![-2.0, -2.0]);
        // K applied to the constant vector vanishes.
        for i in 0..3 {
            let mut row = p.k_diag[i];
            if i > 0 {
                row += p.k_off[i - 1];
            }
            if i < 2 {
                row += p.k_off[i];
            }
            assert_eq!(row, 0.0);
        }
    }

    #[test]
    fn cantor_gap_element_has_no_mass() {
        let tree = build_tree(&presets::cantor(), 1, 1, TreeOptions::default(), &mut Stream::new(0)).unwrap();
        let d = decompose(&tree, 1).unwrap();
        let p = assemble(&d, Boundary::Neumann).unwrap();
        assert_eq!(p.nodes.len(), 4);
        assert_eq!(p.m_off[1], 0.0);
        assert!(p.k_off[1] < 0.0);
        assert!(p.m_diag.iter().all(|&m| m > 0.0));
        let pd = assemble(&d, Boundary::Dirichlet).unwrap();
        assert_eq!(pd.dim(), 2);
        assert_eq!(pd.nodes.len(), 4);
    }

    #[test]
    fn dirichlet_drops_two_unknowns() {
        let cat = presets::cantor_fifths();
        let tree = build_tree(&cat, 2, 5, TreeOptions::default(), &mut Stream::new(3)).unwrap();
        let d = refine_uniform(&decompose(&tree, 5).unwrap(), 2).unwrap();
        let n = assemble(&d, Boundary::Neumann).unwrap();
        let dd = assemble(&d, Boundary::Dirichlet).unwrap();
        assert_eq!(dd.dim() + 2, n.dim());
        assert_eq!(&n.k_diag[1..n.dim() - 1], &dd.k_diag[..]);
        assert_eq!(&n.m_off[1..n.dim() - 2], &dd.m_off[..]);
        let total_mass: f64 = n.m_diag.iter().sum::<f64>() + 2.0 * n.m_off.iter().sum::<f64>();
        assert!((total_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_dirichlet_is_empty() {
        let p = assemble(&unit_cell(), Boundary::Dirichlet).unwrap();
        assert_eq!(p.dim(), 0);
    }

    #[test]
    fn zero_mass_cell_is_singular() {
        let d = CellDecomposition::from_cells(
            0,
            1,
            (0.0, 1.0),
            vec![
                Cell {
                    node: NodeRef::ROOT,
                    left: 0.0,
                    right: 0.3,
                    mass: 1.0,
                },
                Cell {
                    node: NodeRef::ROOT,
                    left: 0.5,
                    right: 0.6,
                    mass: 0.0,
                },
                Cell {
                    node: NodeRef::ROOT,
                    left: 0.8,
                    right: 1.0,
                    mass: 0.0,
                },
            ],
        );
        assert!(matches!(
            assemble(&d, Boundary::Neumann),
            Err(Error::SingularMass { node: 2 })
        ));
    }

    #[test]
    fn pencil_csv_has_header_and_rows() {
        let d = refine_uniform(&unit_cell(), 4).unwrap();
        let p = assemble(&d, Boundary::Dirichlet).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,K_diag,K_off,M_diag,M_off");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,8.0000000000000000e0,-4.0000000000000000e0"));
    }
}
