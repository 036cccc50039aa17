use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{DriftField, EllipticTensor};
use crate::geometry::{Grid, Point};

use super::sparse::{CsrBuilder, CsrMatrix};

/// How the scheme treated the drift.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub central_faces: usize,
    pub upwind_faces: usize,
    /// Largest `|b_p| h / (2 a_eff)` over nodes and axes.
    pub max_peclet: f64,
    /// Nodes within `h` of the drift's singular set (value capped at `1/h`).
    pub capped_nodes: usize,
    pub symmetric: bool,
}

impl SchemeInfo {
    pub fn upwind_active(&self) -> bool {
        self.upwind_faces > 0
    }

    pub fn merge(&mut self, other: &SchemeInfo) {
        self.central_faces += other.central_faces;
        self.upwind_faces += other.upwind_faces;
        self.max_peclet = self.max_peclet.max(other.max_peclet);
        self.capped_nodes = self.capped_nodes.max(other.capped_nodes);
        self.symmetric &= other.symmetric;
    }
}

/// `L_h u (x_i) = Σ_j w_ij (u_i − u_j)` restricted to interior unknowns, with
/// the couplings to Dirichlet nodes kept separately.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub matrix: CsrMatrix,
    /// Per unknown: `(boundary node id, weight)`.
    boundary: Vec<Vec<(usize, f64)>>,
    pub scheme: SchemeInfo,
}

impl DiscreteOperator {
    /// `Σ_j w_ij g_j` over the Dirichlet neighbours of each unknown.
    pub fn boundary_rhs(&self, values: &[f64]) -> Vec<f64> {
        self.boundary
            .iter()
            .map(|row| row.iter().map(|&(id, w)| w * values[id]).sum())
            .collect()
    }

    pub fn boundary_couplings(&self, unknown: usize) -> &[(usize, f64)] {
        &self.boundary[unknown]
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.dim()
    }

    /// `I + τ L`, with the Dirichlet couplings scaled by `τ`.
    pub fn implicit_euler(&self, tau: f64) -> DiscreteOperator {
        let mut b = CsrBuilder::new();
        for i in 0..self.matrix.dim() {
            let (cols, vals) = self.matrix.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                b.push(j, tau * v + if i == j { 1.0 } else { 0.0 });
            }
            b.finish_row();
        }
        DiscreteOperator {
            matrix: b.build(),
            boundary: self
                .boundary
                .iter()
                .map(|row| row.iter().map(|&(id, w)| (id, tau * w)).collect())
                .collect(),
            scheme: self.scheme.clone(),
        }
    }
}

fn non_finite(what: &'static str, node: usize, x: &Point) -> Error {
    Error::NonFinite {
        what,
        node,
        position: x.to_vec(),
    }
}

fn midpoint(a: &Point, b: &Point) -> Point {
    [
        (a[0] + b[0]) / 2.0,
        (a[1] + b[1]) / 2.0,
        (a[2] + b[2]) / 2.0,
    ]
}

fn unit(d: usize) -> [isize; 3] {
    let mut e = [0isize; 3];
    e[d] = 1;
    e
}

/// Assemble the monotone finite-volume operator for `−D_i(a_ij D_j u) + b_i D_i u`
/// at time `t`.
///
/// Axis edges carry the harmonic mean of the nodal `a_pp` minus the
/// off-diagonal magnitudes at the edge midpoint; each off-diagonal entry sits
/// on the in-plane diagonal edge matching its sign. The drift is central
/// differenced on an axis when `|b_p|/(2h)` does not exceed either diffusion
/// weight, and upwinded otherwise, so every off-diagonal entry is nonpositive.
pub fn assemble_elliptic(
    a: &EllipticTensor,
    b: &DriftField,
    grid: &Grid,
    t: f64,
) -> Result<DiscreteOperator> {
    if a.dim != grid.dim() || b.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "tensor dimension {}, drift dimension {}, grid dimension {}",
            a.dim,
            b.dim,
            grid.dim()
        )));
    }
    let dim = grid.dim();
    let h = grid.h();
    let h2 = h * h;
    let diagonal_tensor = a.is_diagonal();
    let mut scheme = SchemeInfo {
        symmetric: b.is_zero(),
        ..Default::default()
    };
    let mut builder = CsrBuilder::new();
    let mut boundary = Vec::with_capacity(grid.unknowns());
    let mut couplings: Vec<(usize, f64)> = Vec::with_capacity(27);
    for &id in grid.interior() {
        let x = grid.position(id);
        let ai = a.eval(&x);
        if ai.iter().flatten().any(|v| !v.is_finite()) {
            return Err(non_finite("diffusion tensor", id, &x));
        }
        let capped = b.singular_distance(&x, t) < h;
        if capped {
            scheme.capped_nodes += 1;
        }
        let bi = b.eval_capped(&x, t, h);
        if bi.iter().any(|v| !v.is_finite()) {
            return Err(non_finite("drift", id, &x));
        }
        couplings.clear();
        for p in 0..dim {
            let mut w = [0.0; 2];
            let mut nb = [0usize; 2];
            for (side, sign) in [(0usize, 1isize), (1, -1)] {
                let mut off = unit(p);
                off[p] *= sign;
                let j = grid
                    .offset(id, off)
                    .expect("interior node has all neighbours");
                let xj = grid.position(j);
                let aj = a.eval(&xj);
                if !aj[p][p].is_finite() {
                    return Err(non_finite("diffusion tensor", j, &xj));
                }
                let mut weight = 2.0 * ai[p][p] * aj[p][p] / (ai[p][p] + aj[p][p]);
                if !diagonal_tensor {
                    let am = a.eval(&midpoint(&x, &xj));
                    for q in 0..dim {
                        if q != p {
                            weight -= am[p][q].abs();
                        }
                    }
                }
                if weight < 0.0 {
                    return Err(Error::NotDiagonallyDominant { node: id, weight });
                }
                w[side] = weight / h2;
                nb[side] = j;
            }
            // Drift on axis p: b_p D_p u.
            let bp = bi[p];
            let a_eff = w[0].min(w[1]) * h2;
            if a_eff > 0.0 {
                scheme.max_peclet = scheme.max_peclet.max(bp.abs() * h / (2.0 * a_eff));
            } else if bp != 0.0 {
                scheme.max_peclet = f64::INFINITY;
            }
            if bp != 0.0 {
                if bp.abs() / (2.0 * h) <= w[0].min(w[1]) {
                    w[1] += bp / (2.0 * h);
                    w[0] -= bp / (2.0 * h);
                    scheme.central_faces += 1;
                } else {
                    if bp > 0.0 {
                        w[1] += bp / h;
                    } else {
                        w[0] += -bp / h;
                    }
                    scheme.upwind_faces += 1;
                }
            }
            couplings.push((nb[0], w[0]));
            couplings.push((nb[1], w[1]));
        }
        if !diagonal_tensor {
            for p in 0..dim {
                for q in (p + 1)..dim {
                    for (sp, sq) in [(1isize, 1isize), (-1, -1), (1, -1), (-1, 1)] {
                        let mut off = [0isize; 3];
                        off[p] = sp;
                        off[q] = sq;
                        let j = grid
                            .offset(id, off)
                            .expect("interior node has all neighbours");
                        let am = a.eval(&midpoint(&x, &grid.position(j)));
                        let weight = ((sp * sq) as f64 * am[p][q]).max(0.0) / h2;
                        if weight > 0.0 {
                            couplings.push((j, weight));
                        }
                    }
                }
            }
        }
        let mut diag = 0.0;
        let mut brow = Vec::new();
        for &(j, w) in &couplings {
            diag += w;
            match grid.unknown_index(j) {
                Some(col) => builder.push(col, -w),
                None => brow.push((j, w)),
            }
        }
        builder.push(grid.unknown_index(id).expect("interior"), diag);
        builder.finish_row();
        boundary.push(brow);
    }
    Ok(DiscreteOperator {
        matrix: builder.build(),
        boundary,
        scheme,
    })
}
