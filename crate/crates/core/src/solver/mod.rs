//! Dirichlet problems for the elliptic and parabolic equations on grids.

mod assembly;
mod export;
mod field;
pub mod krylov;
pub mod sparse;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use assembly::{assemble_elliptic, DiscreteOperator, SchemeInfo};
pub use export::{read_binary, write_binary, write_csv, BinaryHeader};
pub use field::{DiscreteField, SpaceTimeField};

use crate::error::{Error, Result};
use crate::fields::{DriftField, EllipticTensor};
use crate::geometry::{Grid, NodeKind, Point, SpaceTimeGrid};
use krylov::{bicgstab, conjugate_gradient, Ilu0, KrylovOptions};

/// Dirichlet values at every node (boundary nodes are the ones read).
fn nodal(grid: &Grid, g: &dyn Fn(&Point) -> f64) -> Vec<f64> {
    (0..grid.len())
        .map(|id| match grid.kind(id) {
            NodeKind::Boundary => g(&grid.position(id)),
            _ => 0.0,
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub solution: DiscreteField,
    pub iterations: usize,
    pub residual: f64,
    pub scheme: SchemeInfo,
}

/// A prepared linear system: the operator and its preconditioner.
struct Prepared {
    op: DiscreteOperator,
    ilu: Option<Ilu0>,
}

impl Prepared {
    fn new(op: DiscreteOperator) -> Result<Self> {
        let ilu = if op.scheme.symmetric {
            None
        } else {
            Some(Ilu0::new(&op.matrix)?)
        };
        Ok(Prepared { op, ilu })
    }

    fn solve(
        &self,
        rhs: &[f64],
        x: &mut [f64],
        opts: &KrylovOptions,
    ) -> Result<krylov::KrylovOutcome> {
        match &self.ilu {
            None => conjugate_gradient(&self.op.matrix, rhs, x, opts),
            Some(ilu) => bicgstab(&self.op.matrix, ilu, rhs, x, opts),
        }
    }
}

/// Solve `L u = f` with `u = g` on the Dirichlet nodes, `f` a nodal forcing
/// over the unknowns.
pub fn solve_with(
    op: &DiscreteOperator,
    grid: Arc<Grid>,
    boundary: &[f64],
    forcing: Option<&[f64]>,
    opts: &KrylovOptions,
) -> Result<SolveResult> {
    let prepared = Prepared::new(op.clone())?;
    solve_prepared(&prepared, grid, boundary, forcing, opts)
}

fn solve_prepared(
    prepared: &Prepared,
    grid: Arc<Grid>,
    boundary: &[f64],
    forcing: Option<&[f64]>,
    opts: &KrylovOptions,
) -> Result<SolveResult> {
    let op = &prepared.op;
    let mut rhs = op.boundary_rhs(boundary);
    if let Some(f) = forcing {
        for (r, fi) in rhs.iter_mut().zip(f) {
            *r += fi;
        }
    }
    let mut x = vec![0.0; op.unknowns()];
    // Start from the mean boundary value: exact for constants.
    let bmean = {
        let ids = grid.boundary();
        ids.iter().map(|&id| boundary[id]).sum::<f64>() / ids.len().max(1) as f64
    };
    x.iter_mut().for_each(|v| *v = bmean);
    let out = prepared.solve(&rhs, &mut x, opts)?;
    let mut values = boundary.to_vec();
    for (u, &id) in grid.interior().iter().enumerate() {
        values[id] = x[u];
    }
    Ok(SolveResult {
        solution: DiscreteField::new(grid, values)?,
        iterations: out.iterations,
        residual: out.residual,
        scheme: op.scheme.clone(),
    })
}

/// An assembled and preconditioned elliptic operator on a fixed grid, reused
/// across Dirichlet data.
pub struct EllipticSystem {
    grid: Arc<Grid>,
    prepared: Prepared,
}

impl EllipticSystem {
    pub fn new(a: &EllipticTensor, b: &DriftField, grid: Arc<Grid>) -> Result<Self> {
        let op = assemble_elliptic(a, b, &grid, 0.0)?;
        Ok(EllipticSystem {
            grid,
            prepared: Prepared::new(op)?,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn operator(&self) -> &DiscreteOperator {
        &self.prepared.op
    }

    pub fn solve(&self, g: impl Fn(&Point) -> f64) -> Result<SolveResult> {
        let boundary = nodal(&self.grid, &g);
        solve_prepared(
            &self.prepared,
            Arc::clone(&self.grid),
            &boundary,
            None,
            &KrylovOptions::default(),
        )
    }

    /// Solve with a right-hand side `f`; `f ≥ 0` yields supersolutions.
    pub fn solve_forced(
        &self,
        g: impl Fn(&Point) -> f64,
        f: impl Fn(&Point) -> f64,
    ) -> Result<SolveResult> {
        let boundary = nodal(&self.grid, &g);
        let forcing: Vec<f64> = self
            .grid
            .interior()
            .iter()
            .map(|&id| f(&self.grid.position(id)))
            .collect();
        solve_prepared(
            &self.prepared,
            Arc::clone(&self.grid),
            &boundary,
            Some(&forcing),
            &KrylovOptions::default(),
        )
    }
}

/// Solve `−D_i(a_ij D_j u) + b_i D_i u = 0` in the grid's ball with `u = g` on
/// the Dirichlet nodes.
pub fn solve_elliptic(
    a: &EllipticTensor,
    b: &DriftField,
    grid: Arc<Grid>,
    g: impl Fn(&Point) -> f64,
) -> Result<SolveResult> {
    EllipticSystem::new(a, b, grid)?.solve(g)
}

/// As [`solve_elliptic`] with a nodal right-hand side `f`; `f ≥ 0` yields supersolutions.
pub fn solve_elliptic_forced(
    a: &EllipticTensor,
    b: &DriftField,
    grid: Arc<Grid>,
    g: impl Fn(&Point) -> f64,
    f: impl Fn(&Point) -> f64,
) -> Result<SolveResult> {
    EllipticSystem::new(a, b, grid)?.solve_forced(g, f)
}

/// Per-unknown residual `L_h u − Σ w g` of a candidate field.
pub fn residuals(op: &DiscreteOperator, u: &DiscreteField) -> Vec<f64> {
    let grid = u.grid();
    let x: Vec<f64> = grid.interior().iter().map(|&id| u.value(id)).collect();
    let mut ax = vec![0.0; x.len()];
    op.matrix.matvec(&x, &mut ax);
    let rhs = op.boundary_rhs(u.values());
    ax.iter().zip(&rhs).map(|(a, r)| a - r).collect()
}

/// Largest interior residual of a candidate field.
pub fn residual_check(op: &DiscreteOperator, u: &DiscreteField) -> f64 {
    residuals(op, u).iter().fold(0.0, |m, r| m.max(r.abs()))
}

/// Largest residual over unknowns whose node satisfies `keep`.
pub fn residual_check_where(
    op: &DiscreteOperator,
    u: &DiscreteField,
    keep: impl Fn(&Point) -> bool,
) -> f64 {
    let grid = u.grid();
    residuals(op, u)
        .iter()
        .zip(grid.interior())
        .filter(|(_, &id)| keep(&grid.position(id)))
        .fold(0.0, |m, (r, _)| m.max(r.abs()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParabolicStats {
    pub iterations: Vec<usize>,
    pub max_residual: f64,
    pub scheme: SchemeInfo,
}

#[derive(Clone, Debug)]
pub struct ParabolicResult {
    pub solution: SpaceTimeField,
    pub stats: ParabolicStats,
}

/// Source term `f(x, t)`.
pub type SpaceTimeForcing = dyn Fn(&Point, f64) -> f64 + Sync;

/// Implicit Euler for `∂_t u − D_i(a_ij D_j u) + b_i D_i u = f` with
/// `u = g(x, t)` on the parabolic boundary: `g(·, t_start)` on the bottom
/// level and `g(·, t_k)` on the Dirichlet nodes of later levels.
pub fn solve_parabolic(
    a: &EllipticTensor,
    b: &DriftField,
    grid: &SpaceTimeGrid,
    g: impl Fn(&Point, f64) -> f64,
    forcing: Option<&SpaceTimeForcing>,
) -> Result<ParabolicResult> {
    let space = grid.space_arc();
    let tau = grid.tau();
    // Slabs are identity plus tau L, so a tight tolerance costs a few extra
    // iterations and keeps rounding from compounding over many steps.
    let opts = KrylovOptions {
        rel_tol: 1e-13,
        ..KrylovOptions::default()
    };
    let time_dependent = b.is_time_dependent();
    let bottom: Vec<f64> = (0..space.len())
        .map(|id| match space.kind(id) {
            NodeKind::Exterior => 0.0,
            _ => g(&space.position(id), grid.time(0)),
        })
        .collect();
    let mut levels = vec![bottom];
    let mut prepared: Option<Prepared> = None;
    let mut stats = ParabolicStats {
        iterations: Vec::with_capacity(grid.steps()),
        max_residual: 0.0,
        scheme: SchemeInfo {
            symmetric: true,
            ..Default::default()
        },
    };
    let n = space.unknowns();
    let mut prev2: Option<Vec<f64>> = None;
    for k in 1..grid.levels() {
        let t = grid.time(k);
        if prepared.is_none() || time_dependent {
            let op = assemble_elliptic(a, b, &space, t)
                .map_err(|e| slab_error(k, e))?
                .implicit_euler(tau);
            stats.scheme.merge(&op.scheme);
            prepared = Some(Prepared::new(op).map_err(|e| slab_error(k, e))?);
        }
        let p = prepared.as_ref().expect("prepared");
        let boundary: Vec<f64> = (0..space.len())
            .map(|id| match space.kind(id) {
                NodeKind::Boundary => g(&space.position(id), t),
                _ => 0.0,
            })
            .collect();
        let prev = levels.last().expect("previous level");
        let mut rhs = p.op.boundary_rhs(&boundary);
        for (u, &id) in space.interior().iter().enumerate() {
            rhs[u] += prev[id];
            if let Some(f) = forcing {
                rhs[u] += tau * f(&space.position(id), t);
            }
        }
        let current: Vec<f64> = space.interior().iter().map(|&id| prev[id]).collect();
        // Linear extrapolation in time as the initial guess.
        let mut x: Vec<f64> = match &prev2 {
            Some(older) => (0..n).map(|u| 2.0 * current[u] - older[u]).collect(),
            None => current.clone(),
        };
        let out = p.solve(&rhs, &mut x, &opts).map_err(|e| slab_error(k, e))?;
        stats.iterations.push(out.iterations);
        stats.max_residual = stats.max_residual.max(out.residual);
        let mut values = boundary;
        for (u, &id) in space.interior().iter().enumerate() {
            values[id] = x[u];
        }
        prev2 = Some(current);
        levels.push(values);
    }
    Ok(ParabolicResult {
        solution: SpaceTimeField::new(grid.clone(), levels)?,
        stats,
    })
}

fn slab_error(slab: usize, e: Error) -> Error {
    Error::SlabSolve {
        slab,
        source: Box::new(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_drift, DriftFamily};
    use crate::geometry::{Ball, Cylinder};

    #[test]
    fn linear_data_is_reproduced() {
        let grid = Arc::new(Grid::new(&Ball::centered(2, 1.0).unwrap(), 1.0 / 16.0).unwrap());
        let r = solve_elliptic(
            &EllipticTensor::identity(2),
            &DriftField::zero(2),
            grid,
            |x| x[0],
        )
        .unwrap();
        assert!(r.solution.max_abs_error(|x| x[0]) < 1e-9);
    }

    #[test]
    fn residual_of_exact_discrete_solution_is_tiny() {
        let grid = Arc::new(Grid::new(&Ball::centered(2, 1.0).unwrap(), 1.0 / 16.0).unwrap());
        let b = make_drift(DriftFamily::Constant { b: vec![3.0, -1.0] }).unwrap();
        let a = EllipticTensor::identity(2);
        let r = solve_elliptic(&a, &b, Arc::clone(&grid), |x| (x[0] * 2.0).exp()).unwrap();
        let op = assemble_elliptic(&a, &b, &grid, 0.0).unwrap();
        let scale = r.solution.interior_extremes().1;
        assert!(residual_check(&op, &r.solution) <= 1e-7 * scale / grid.h().powi(2));
        // A random field is reported, not rejected.
        let noisy = r.solution.map(|v| v + 0.1 * (v * 1e3).sin());
        assert!(residual_check(&op, &noisy) > 1.0);
    }

    #[test]
    fn constants_persist_in_time() {
        let cyl = Cylinder::standard(2, 1.0).unwrap();
        let grid = SpaceTimeGrid::new(&cyl, 1.0 / 16.0, 1.0 / 16.0).unwrap();
        let b = make_drift(DriftFamily::Constant { b: vec![1.0, 2.0] }).unwrap();
        let r = solve_parabolic(&EllipticTensor::identity(2), &b, &grid, |_, _| 0.7, None).unwrap();
        assert!(r.solution.max_abs_error(|_, _| 0.7) < 1e-12);
    }
}
