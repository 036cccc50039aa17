use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Ball, Cylinder, Grid, NodeKind, Point, SpaceTimeGrid};

/// Nodal values over a [`Grid`]: interior nodes carry the solution, boundary
/// nodes the Dirichlet data, exterior nodes are zero.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(DiscreteField { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|id| match grid.kind(id) {
                NodeKind::Exterior => 0.0,
                _ => f(&grid.position(id)),
            })
            .collect();
        DiscreteField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, id: usize) -> f64 {
        self.values[id]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DiscreteField {
        DiscreteField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn interior_extremes(&self) -> (f64, f64) {
        extremes(self.grid.interior().iter().map(|&id| self.values[id]))
    }

    pub fn boundary_extremes(&self) -> (f64, f64) {
        extremes(self.grid.boundary().iter().map(|&id| self.values[id]))
    }

    /// `(inf, sup)` over interior nodes inside `ball`.
    pub fn extremes_in(&self, ball: &Ball) -> Option<(f64, f64)> {
        let ids = self.grid.nodes_in(ball);
        if ids.is_empty() {
            return None;
        }
        Some(extremes(ids.iter().map(|&id| self.values[id])))
    }

    /// Mean of `f(u)` over interior nodes inside `ball`.
    pub fn mean_in(&self, ball: &Ball, f: impl Fn(f64) -> f64) -> Option<f64> {
        let ids = self.grid.nodes_in(ball);
        if ids.is_empty() {
            return None;
        }
        Some(ids.iter().map(|&id| f(self.values[id])).sum::<f64>() / ids.len() as f64)
    }

    pub fn max_abs_error(&self, exact: impl Fn(&Point) -> f64) -> f64 {
        self.grid
            .interior()
            .iter()
            .map(|&id| (self.values[id] - exact(&self.grid.position(id))).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn extremes(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Nodal values over every time level of a [`SpaceTimeGrid`].
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    grid: SpaceTimeGrid,
    levels: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: SpaceTimeGrid, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() != grid.levels() {
            return Err(Error::GridMismatch(format!(
                "{} time levels for a grid with {}",
                levels.len(),
                grid.levels()
            )));
        }
        if levels.iter().any(|l| l.len() != grid.space().len()) {
            return Err(Error::GridMismatch(
                "level length differs from node count".into(),
            ));
        }
        Ok(SpaceTimeField { grid, levels })
    }

    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn(&Point, f64) -> f64) -> Self {
        let space = grid.space();
        let levels = (0..grid.levels())
            .map(|k| {
                let t = grid.time(k);
                (0..space.len())
                    .map(|id| match space.kind(id) {
                        NodeKind::Exterior => 0.0,
                        _ => f(&space.position(id), t),
                    })
                    .collect()
            })
            .collect();
        SpaceTimeField { grid, levels }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn slice(&self, k: usize) -> DiscreteField {
        DiscreteField {
            grid: self.grid.space_arc(),
            values: self.levels[k].clone(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid.clone(),
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    /// `(inf, sup)` over interior nodes of the time levels inside `cyl`.
    pub fn extremes_in(&self, cyl: &Cylinder) -> Option<(f64, f64)> {
        let ids = self.grid.space().nodes_in(&cyl.spatial());
        let levels = self.grid.levels_in(cyl.t_start(), cyl.t_end());
        if ids.is_empty() || levels.is_empty() {
            return None;
        }
        Some(extremes(levels.iter().flat_map(|&k| {
            ids.iter().map(move |&id| self.levels[k][id])
        })))
    }

    /// Mean of `f(u)` over the nodes inside `cyl`.
    pub fn mean_in(&self, cyl: &Cylinder, f: impl Fn(f64) -> f64) -> Option<f64> {
        let ids = self.grid.space().nodes_in(&cyl.spatial());
        let levels = self.grid.levels_in(cyl.t_start(), cyl.t_end());
        if ids.is_empty() || levels.is_empty() {
            return None;
        }
        let mut s = 0.0;
        for &k in &levels {
            for &id in &ids {
                s += f(self.levels[k][id]);
            }
        }
        Some(s / (ids.len() * levels.len()) as f64)
    }

    /// `(inf, sup)` over the parabolic boundary: the bottom level and the
    /// Dirichlet nodes of later levels.
    pub fn parabolic_boundary_extremes(&self) -> (f64, f64) {
        let space = self.grid.space();
        let bottom = space
            .interior()
            .iter()
            .chain(space.boundary())
            .map(|&id| self.levels[0][id]);
        let lateral = (1..self.levels.len())
            .flat_map(|k| space.boundary().iter().map(move |&id| self.levels[k][id]));
        extremes(bottom.chain(lateral))
    }

    /// `(inf, sup)` over interior nodes of levels `1..`.
    pub fn interior_extremes(&self) -> (f64, f64) {
        let space = self.grid.space();
        extremes(
            (1..self.levels.len())
                .flat_map(|k| space.interior().iter().map(move |&id| self.levels[k][id])),
        )
    }

    pub fn max_abs_error(&self, exact: impl Fn(&Point, f64) -> f64) -> f64 {
        let space = self.grid.space();
        let mut err: f64 = 0.0;
        for k in 1..self.levels.len() {
            let t = self.grid.time(k);
            for &id in space.interior() {
                err = err.max((self.levels[k][id] - exact(&space.position(id), t)).abs());
            }
        }
        err
    }
}
