//! Balls, parabolic cylinders, uniform grids, and the geometric constructions
//! that carry lower bounds from a small ball to a unit-scale region.
//!
//! Nodes of a [`Grid`] sit at cell centres of a lattice anchored at the
//! domain centre: `x = c + (i + 1/2 - m) h`. The domain centre itself is never
//! a node, which keeps point singularities at the centre (and axis
//! singularities through it) off the lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::DriftField;
use crate::quadrature::gauss_legendre_on;

/// Spatial points are stored padded to three coordinates.
pub type Point = [f64; 3];

pub fn to_point(x: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..x.len()].copy_from_slice(x);
    p
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lebesgue measure of the unit ball in dimension 2 or 3.
pub fn unit_ball_measure(dim: usize) -> f64 {
    match dim {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(invalid("dimension", format!("{dim} not in {{2, 3}}")))
    }
}

/// Open ball `B_R(x0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("{radius} must be positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center", "non-finite coordinate"));
        }
        Ok(Ball { center, radius })
    }

    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Ball::new(vec![0.0; dim], radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        distance(&self.center, &x[..self.dim()]) < self.radius
    }

    pub fn measure(&self) -> f64 {
        unit_ball_measure(self.dim()) * self.radius.powi(self.dim() as i32)
    }

    /// `other ⊂ self` for open balls.
    pub fn contains_ball(&self, other: &Ball) -> bool {
        distance(&self.center, &other.center) + other.radius <= self.radius
    }

    pub fn with_radius(&self, radius: f64) -> Ball {
        Ball {
            center: self.center.clone(),
            radius,
        }
    }
}

/// Parabolic cylinder `Q_R^{λ,θ}(x0; t0) = B_{λR}(x0) × ]t0 − θR², t0[`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Vec<f64>,
    pub apex: f64,
    pub radius: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl Cylinder {
    pub fn new(center: Vec<f64>, apex: f64, radius: f64, lambda: f64, theta: f64) -> Result<Self> {
        check_dim(center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("{radius} must be positive")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("{lambda} must be positive")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid("theta", format!("{theta} must be positive")));
        }
        if !apex.is_finite() {
            return Err(invalid("apex", "non-finite"));
        }
        Ok(Cylinder {
            center,
            apex,
            radius,
            lambda,
            theta,
        })
    }

    /// `Q_R = Q_R^{1,1}(0; 0)`.
    pub fn standard(dim: usize, radius: f64) -> Result<Self> {
        Cylinder::new(vec![0.0; dim], 0.0, radius, 1.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn spatial(&self) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: self.lambda * self.radius,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.apex - self.theta * self.radius * self.radius
    }

    pub fn t_end(&self) -> f64 {
        self.apex
    }

    pub fn duration(&self) -> f64 {
        self.theta * self.radius * self.radius
    }

    /// Membership in the cylinder closed at the top time level.
    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        t > self.t_start() && t <= self.t_end() && self.spatial().contains(x)
    }

    pub fn measure(&self) -> f64 {
        self.spatial().measure() * self.duration()
    }

    pub fn contains_cylinder(&self, other: &Cylinder) -> bool {
        self.spatial().contains_ball(&other.spatial())
            && other.t_start() >= self.t_start()
            && other.t_end() <= self.t_end()
    }
}

/// Either kind of region.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Ball(Ball),
    Cylinder(Cylinder),
}

/// Flat JSON descriptor of a region and its discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub kind: RegionKind,
    pub center: Vec<f64>,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Ball,
    Cylinder,
}

impl RegionDescriptor {
    pub fn region(&self) -> Result<Region> {
        match self.kind {
            RegionKind::Ball => Ok(Region::Ball(Ball::new(self.center.clone(), self.radius)?)),
            RegionKind::Cylinder => Ok(Region::Cylinder(Cylinder::new(
                self.center.clone(),
                self.t0.unwrap_or(0.0),
                self.radius,
                self.lambda.unwrap_or(1.0),
                self.theta.unwrap_or(1.0),
            )?)),
        }
    }

    pub fn build(&self) -> Result<BuiltGrid> {
        build_grid(&self.region()?, self.h, self.tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    /// Dirichlet node: outside the domain (or pinned) but coupled to an interior node.
    Boundary,
    Exterior,
}

const NO_UNKNOWN: u32 = u32::MAX;

/// Uniform Cartesian grid over a ball with an inside-mask.
#[derive(Clone, Debug)]
pub struct Grid {
    domain: Ball,
    dim: usize,
    h: f64,
    shape: [usize; 3],
    origin: Point,
    kinds: Vec<NodeKind>,
    unknown: Vec<u32>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

impl Grid {
    pub fn new(domain: &Ball, h: f64) -> Result<Grid> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("h", format!("{h} must be positive")));
        }
        let limit = domain.radius / 2.0;
        if h > limit {
            return Err(Error::GridTooCoarse { h, limit });
        }
        let dim = domain.dim();
        let m = (domain.radius / h).ceil() as usize + 2;
        let mut shape = [1usize; 3];
        let mut origin = [0.0; 3];
        for d in 0..dim {
            shape[d] = 2 * m;
            origin[d] = domain.center[d] + (0.5 - m as f64) * h;
        }
        let len = shape.iter().product::<usize>();
        if len > u32::MAX as usize {
            return Err(Error::NodeBudget {
                nodes: len,
                budget: u32::MAX as usize,
            });
        }
        let mut grid = Grid {
            domain: domain.clone(),
            dim,
            h,
            shape,
            origin,
            kinds: vec![NodeKind::Exterior; len],
            unknown: vec![NO_UNKNOWN; len],
            interior: Vec::new(),
            boundary: Vec::new(),
        };
        for id in 0..len {
            if domain.contains(&grid.position(id)) {
                grid.kinds[id] = NodeKind::Interior;
            }
        }
        grid.classify()?;
        Ok(grid)
    }

    /// Same grid with the interior nodes selected by `pinned` turned into
    /// Dirichlet nodes.
    pub fn with_pinned(&self, pinned: impl Fn(&Point) -> bool) -> Result<Grid> {
        let mut grid = self.clone();
        let pinned_ids: Vec<usize> = self
            .interior
            .iter()
            .copied()
            .filter(|&id| pinned(&self.position(id)))
            .collect();
        for k in grid.kinds.iter_mut() {
            if *k == NodeKind::Boundary {
                *k = NodeKind::Exterior;
            }
        }
        for &id in &pinned_ids {
            grid.kinds[id] = NodeKind::Exterior;
        }
        grid.classify_with(&pinned_ids)?;
        Ok(grid)
    }

    fn classify(&mut self) -> Result<()> {
        self.classify_with(&[])
    }

    fn classify_with(&mut self, pinned: &[usize]) -> Result<()> {
        let offsets = neighbour_offsets(self.dim);
        let len = self.kinds.len();
        let mut boundary = vec![false; len];
        for &id in pinned {
            boundary[id] = true;
        }
        for id in 0..len {
            if self.kinds[id] != NodeKind::Interior {
                continue;
            }
            for off in &offsets {
                if let Some(j) = self.offset(id, *off) {
                    if self.kinds[j] != NodeKind::Interior {
                        boundary[j] = true;
                    }
                }
            }
        }
        self.interior.clear();
        self.boundary.clear();
        self.unknown.iter_mut().for_each(|u| *u = NO_UNKNOWN);
        for id in 0..len {
            if self.kinds[id] == NodeKind::Interior {
                self.unknown[id] = self.interior.len() as u32;
                self.interior.push(id);
            } else if boundary[id] {
                self.kinds[id] = NodeKind::Boundary;
                self.boundary.push(id);
            } else {
                self.kinds[id] = NodeKind::Exterior;
            }
        }
        if self.interior.is_empty() {
            return Err(Error::DegenerateRegion(format!(
                "no interior nodes in ball of radius {} at h = {}",
                self.domain.radius, self.h
            )));
        }
        Ok(())
    }

    pub fn domain(&self) -> &Ball {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.kinds[id]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn unknowns(&self) -> usize {
        self.interior.len()
    }

    pub fn unknown_index(&self, id: usize) -> Option<usize> {
        match self.unknown[id] {
            NO_UNKNOWN => None,
            u => Some(u as usize),
        }
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn discrete_measure(&self) -> f64 {
        self.interior.len() as f64 * self.cell_volume()
    }

    pub fn multi_index(&self, id: usize) -> [usize; 3] {
        let i0 = id % self.shape[0];
        let rest = id / self.shape[0];
        [i0, rest % self.shape[1], rest / self.shape[1]]
    }

    pub fn id_of(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.shape[0] * (idx[1] + self.shape[1] * idx[2])
    }

    pub fn position(&self, id: usize) -> Point {
        let idx = self.multi_index(id);
        let mut p = [0.0; 3];
        for d in 0..self.dim {
            p[d] = self.origin[d] + idx[d] as f64 * self.h;
        }
        p
    }

    /// Neighbour at integer offset, if inside the array.
    pub fn offset(&self, id: usize, off: [isize; 3]) -> Option<usize> {
        let idx = self.multi_index(id);
        let mut out = [0usize; 3];
        for d in 0..3 {
            let v = idx[d] as isize + off[d];
            if v < 0 || v >= self.shape[d] as isize {
                return None;
            }
            out[d] = v as usize;
        }
        Some(self.id_of(out))
    }

    /// Interior nodes whose position lies in `ball`.
    pub fn nodes_in(&self, ball: &Ball) -> Vec<usize> {
        self.nodes_where(ball, |k| k == NodeKind::Interior)
    }

    /// Interior and Dirichlet nodes whose position lies in `ball`.
    pub fn all_nodes_in(&self, ball: &Ball) -> Vec<usize> {
        self.nodes_where(ball, |k| k != NodeKind::Exterior)
    }

    fn nodes_where(&self, ball: &Ball, keep: impl Fn(NodeKind) -> bool) -> Vec<usize> {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..3 {
            if d < self.dim {
                let a = ((ball.center[d] - ball.radius - self.origin[d]) / self.h).floor();
                let b = ((ball.center[d] + ball.radius - self.origin[d]) / self.h).ceil();
                lo[d] = a.max(0.0) as usize;
                hi[d] = (b.max(-1.0) as isize)
                    .min(self.shape[d] as isize - 1)
                    .max(-1) as usize;
                if b < 0.0 || a > (self.shape[d] - 1) as f64 {
                    return Vec::new();
                }
            } else {
                lo[d] = 0;
                hi[d] = 0;
            }
        }
        let mut out = Vec::new();
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let id = self.id_of([i, j, k]);
                    if keep(self.kinds[id]) && ball.contains(&self.position(id)) {
                        out.push(id);
                    }
                }
            }
        }
        out
    }
}

/// Face and in-plane diagonal neighbour offsets.
pub fn neighbour_offsets(dim: usize) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    let r: &[isize] = &[-1, 0, 1];
    for &a in r {
        for &b in r {
            for &c in if dim == 3 { r } else { &[0isize][..] } {
                let off = [a, b, c];
                let nz = off.iter().filter(|&&v| v != 0).count();
                if nz == 1 || nz == 2 {
                    out.push(off);
                }
            }
        }
    }
    out
}

/// Parabolic-boundary class of a space-time node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeNodeKind {
    /// On the bottom slab `t = t0 − θR²`.
    Bottom,
    /// On the lateral surface above the bottom slab.
    Lateral,
    Interior,
    Exterior,
}

/// Space-time grid over a cylinder: a spatial grid and uniform time levels.
#[derive(Clone, Debug)]
pub struct SpaceTimeGrid {
    space: Arc<Grid>,
    cylinder: Cylinder,
    tau: f64,
    steps: usize,
}

impl SpaceTimeGrid {
    pub fn new(cylinder: &Cylinder, h: f64, tau: f64) -> Result<SpaceTimeGrid> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("{tau} must be positive")));
        }
        if tau > h {
            return Err(invalid("tau", format!("{tau} exceeds h = {h}")));
        }
        if h > cylinder.radius / 2.0 {
            return Err(Error::GridTooCoarse {
                h,
                limit: cylinder.radius / 2.0,
            });
        }
        let space = Grid::new(&cylinder.spatial(), h)?;
        Self::over(cylinder, Arc::new(space), tau)
    }

    /// Time levels over an existing spatial grid; `tau` is shrunk so that an
    /// integer number of steps spans the cylinder.
    pub fn over(cylinder: &Cylinder, space: Arc<Grid>, tau: f64) -> Result<SpaceTimeGrid> {
        let duration = cylinder.duration();
        let steps = (duration / tau - 1e-9).ceil().max(1.0) as usize;
        Ok(SpaceTimeGrid {
            space,
            cylinder: cylinder.clone(),
            tau: duration / steps as f64,
            steps,
        })
    }

    pub fn space(&self) -> &Grid {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<Grid> {
        Arc::clone(&self.space)
    }

    pub fn cylinder(&self) -> &Cylinder {
        &self.cylinder
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn h(&self) -> f64 {
        self.space.h()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.steps {
            self.cylinder.t_end()
        } else {
            self.cylinder.t_start() + level as f64 * self.tau
        }
    }

    pub fn kind(&self, level: usize, id: usize) -> TimeNodeKind {
        match self.space.kind(id) {
            NodeKind::Exterior => TimeNodeKind::Exterior,
            _ if level == 0 => TimeNodeKind::Bottom,
            NodeKind::Boundary => TimeNodeKind::Lateral,
            NodeKind::Interior => TimeNodeKind::Interior,
        }
    }

    pub fn discrete_measure(&self) -> f64 {
        self.space.discrete_measure() * self.steps as f64 * self.tau
    }

    /// Levels whose time lies in `]t_lo, t_hi]`.
    pub fn levels_in(&self, t_lo: f64, t_hi: f64) -> Vec<usize> {
        let eps = 1e-9 * self.tau;
        (0..self.levels())
            .filter(|&k| {
                let t = self.time(k);
                t > t_lo + eps && t <= t_hi + eps
            })
            .collect()
    }
}

/// Grid produced by [`build_grid`].
#[derive(Clone, Debug)]
pub enum BuiltGrid {
    Space(Grid),
    SpaceTime(SpaceTimeGrid),
}

pub fn build_grid(region: &Region, h: f64, tau: Option<f64>) -> Result<BuiltGrid> {
    match region {
        Region::Ball(ball) => Ok(BuiltGrid::Space(Grid::new(ball, h)?)),
        Region::Cylinder(cyl) => {
            let tau = tau.ok_or_else(|| invalid("tau", "required for cylinders"))?;
            Ok(BuiltGrid::SpaceTime(SpaceTimeGrid::new(cyl, h, tau)?))
        }
    }
}

/// Measure of `B_{r1}(a) ∩ B_{r2}(b)` with `|a − b| = d`.
pub fn ball_intersection_measure(dim: usize, r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let small = r1.min(r2);
    if d <= (r1 - r2).abs() {
        return unit_ball_measure(dim) * small.powi(dim as i32);
    }
    match dim {
        2 => {
            let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1))
                .clamp(-1.0, 1.0)
                .acos();
            let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2))
                .clamp(-1.0, 1.0)
                .acos();
            let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
            r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.sqrt()
        }
        3 => {
            PI * (r1 + r2 - d).powi(2)
                * (d * d + 2.0 * d * r2 - 3.0 * r2 * r2 + 2.0 * d * r1 + 6.0 * r1 * r2
                    - 3.0 * r1 * r1)
                / (12.0 * d)
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// How the dyadic index of a chain is pinned down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DyadicConvention {
    /// `2^{-(N+1)} R < ρ ≤ 2^{-N} R` (elliptic ball chain).
    UpperClosed,
    /// `2^{-(N+1)} R ≤ ρ < 2^{-N} R` (parabolic chain).
    LowerClosed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub radius: f64,
    pub center: Vec<f64>,
    /// Apex time of the link (parabolic chains only).
    pub time: Option<f64>,
    /// The containment certificate for this link held.
    pub contained: bool,
    /// Overlap with the previous link as a fraction of this link's ball.
    pub overlap_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainPlan {
    /// The dyadic count `𝔑`.
    pub count: usize,
    pub convention: DyadicConvention,
    pub start: Vec<f64>,
    pub start_time: Option<f64>,
    pub rho: f64,
    pub outer_radius: f64,
    pub links: Vec<ChainLink>,
    /// `B_{r0}(y0) ⊂ B_{3ρ}(y)` (elliptic) or `y0 = y` (parabolic).
    pub start_contained: bool,
    /// The last link has radius `R` (elliptic) or `R/2` so that the next
    /// doubling reaches `R` (parabolic), centred at the origin.
    pub ends_at_unit_scale: bool,
    /// `t^𝔑 ≤ −(5/3) R²` (parabolic chains only).
    pub final_time_ok: Option<bool>,
}

impl ChainPlan {
    pub fn all_contained(&self) -> bool {
        self.start_contained
            && self.ends_at_unit_scale
            && self.links.iter().all(|l| l.contained)
            && self.final_time_ok.unwrap_or(true)
    }
}

fn direction(y: &[f64]) -> Vec<f64> {
    let r = norm(y);
    if r == 0.0 {
        let mut e = vec![0.0; y.len()];
        e[0] = 1.0;
        e
    } else {
        y.iter().map(|v| v / r).collect()
    }
}

/// Chain of doubling balls `B_{r_m}(y_m)` from near `y` to `B_R(0)`.
///
/// `ρ` must be a quarter of the distance from `y` to `∂B_{2R}`. All
/// containment arithmetic runs in units of `R` on dyadic rationals, so the
/// certificates are exact.
pub fn ball_chain(y: &[f64], rho: f64, outer: f64) -> Result<ChainPlan> {
    check_dim(y.len())?;
    if !(outer > 0.0 && outer.is_finite()) {
        return Err(invalid("R", format!("{outer} must be positive")));
    }
    let a = norm(y) / outer;
    if !(a < 2.0) {
        return Err(Error::InconsistentChain(format!(
            "|y| = {} is not inside B_2R with R = {outer}",
            a * outer
        )));
    }
    let rho_u = rho / outer;
    let expected = (2.0 - a) / 4.0;
    if !((rho_u - expected).abs() <= 1e-12 * expected.max(1e-300)) {
        return Err(Error::InconsistentChain(format!(
            "rho = {rho} differs from the quarter distance {}",
            expected * outer
        )));
    }
    let mut plan = ChainPlan {
        count: 0,
        convention: DyadicConvention::UpperClosed,
        start: y.to_vec(),
        start_time: None,
        rho,
        outer_radius: outer,
        links: Vec::new(),
        start_contained: true,
        ends_at_unit_scale: true,
        final_time_ok: None,
    };
    if a == 0.0 {
        return Ok(plan);
    }
    let count = dyadic_index(rho_u, DyadicConvention::UpperClosed)?;
    let e = direction(y);
    let dim = y.len();
    let r0 = 0.5f64.powi(count as i32);
    let mut pos = 2.0 * (1.0 - r0);
    plan.count = count;
    plan.start_contained = (pos - a).abs() + r0 <= 3.0 * rho_u * (1.0 + 1e-12);
    let mut radius = r0;
    let mut prev: Option<(f64, f64)> = None;
    for m in 0..=count {
        if m > 0 {
            radius *= 2.0;
            pos -= radius;
        }
        let overlap_fraction = prev.map(|(prev_pos, prev_r)| {
            ball_intersection_measure(dim, prev_r, radius, (prev_pos - pos).abs())
                / (unit_ball_measure(dim) * radius.powi(dim as i32))
        });
        plan.links.push(ChainLink {
            radius: radius * outer,
            center: e.iter().map(|v| v * pos * outer).collect(),
            time: None,
            contained: pos.abs() + 2.0 * radius <= 2.0,
            overlap_fraction,
        });
        prev = Some((pos, radius));
    }
    plan.ends_at_unit_scale = radius == 1.0 && pos == 0.0;
    Ok(plan)
}

fn dyadic_index(rho_u: f64, convention: DyadicConvention) -> Result<usize> {
    let mut p = 1.0f64;
    for n in 0..1000 {
        let ok = match convention {
            DyadicConvention::UpperClosed => rho_u > p / 2.0 && rho_u <= p,
            DyadicConvention::LowerClosed => rho_u >= p / 2.0 && rho_u < p,
        };
        if ok {
            return Ok(n);
        }
        p /= 2.0;
    }
    Err(Error::InconsistentChain(format!(
        "no dyadic index for rho/R = {rho_u}"
    )))
}

/// Parabolic distance from `(y; s)` to the parabolic boundary of `Q_{2R}`.
pub fn parabolic_distance_q2r(y: &[f64], s: f64, outer: f64) -> f64 {
    let spatial = 2.0 * outer - norm(y);
    let temporal = (s + 4.0 * outer * outer).max(0.0).sqrt();
    spatial.min(temporal)
}

/// Chain of cylinders `Q^{4,1}_{r_m}(y^m; t^m) ⊂ Q_{2R}` climbing from
/// `(y; s)` to the origin.
///
/// The start must lie in `B_{2R} × [−4R², −2R²]` and `ρ ≤ (2R − |y|)/4`;
/// every admissible `ρ` gives a contained chain.
pub fn parabolic_chain(y: &[f64], s: f64, rho: f64, outer: f64) -> Result<ChainPlan> {
    check_dim(y.len())?;
    if !(outer > 0.0 && outer.is_finite()) {
        return Err(invalid("R", format!("{outer} must be positive")));
    }
    let a = norm(y) / outer;
    let sigma = s / (outer * outer);
    if !(a < 2.0) || !(-4.0..=-2.0).contains(&sigma) {
        return Err(Error::ChainStartOutOfRange(format!(
            "(|y|, s) = ({}, {s}) outside B_2R x [-4R^2, -2R^2]",
            a * outer
        )));
    }
    let rho_u = rho / outer;
    if !(rho_u > 0.0 && rho_u <= (2.0 - a) / 4.0) {
        return Err(Error::InconsistentChain(format!(
            "rho = {rho} must lie in ]0, (2R - |y|)/4]"
        )));
    }
    let count = dyadic_index(rho_u, DyadicConvention::LowerClosed)?;
    let e = direction(y);
    let r0 = 0.5f64.powi(count as i32 + 1);
    let mut radius = r0;
    let mut pos = a;
    let mut time = sigma + r0 * r0;
    let mut links = Vec::with_capacity(count + 1);
    for m in 0..=count {
        if m > 0 {
            radius *= 2.0;
            pos -= (2.0 * radius).min(pos);
            time += radius * radius;
        }
        let contained = pos + 4.0 * radius <= 2.0 && time - radius * radius >= -4.0 && time <= 0.0;
        links.push(ChainLink {
            radius: radius * outer,
            center: e.iter().map(|v| v * pos * outer).collect(),
            time: Some(time * outer * outer),
            contained,
            overlap_fraction: None,
        });
    }
    Ok(ChainPlan {
        count,
        convention: DyadicConvention::LowerClosed,
        start: y.to_vec(),
        start_time: Some(s),
        rho,
        outer_radius: outer,
        links,
        start_contained: true,
        ends_at_unit_scale: 2.0 * radius == 1.0 && pos == 0.0,
        final_time_ok: Some(3.0 * time <= -5.0),
    })
}

/// Quadrature resolution for shell integrals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShellQuadrature {
    /// Gauss–Legendre points across each thin layer.
    pub radial: usize,
    /// Gauss–Legendre points in `cos ϑ` (three dimensions only).
    pub polar: usize,
    /// Uniform points in the azimuth.
    pub azimuthal: usize,
}

impl Default for ShellQuadrature {
    fn default() -> Self {
        ShellQuadrature {
            radial: 4,
            polar: 24,
            azimuthal: 48,
        }
    }
}

/// Integral over `r1 < |x − c| < r2` of `weight(|b(x)|)`.
pub fn shell_integral(
    drift: &DriftField,
    center: &[f64],
    r1: f64,
    r2: f64,
    quad: &ShellQuadrature,
    weight: impl Fn(f64) -> f64,
) -> f64 {
    let dim = center.len();
    let radial = gauss_legendre_on(quad.radial, r1, r2);
    let dphi = 2.0 * PI / quad.azimuthal as f64;
    let mut total = 0.0;
    match dim {
        2 => {
            for &(r, wr) in &radial {
                for k in 0..quad.azimuthal {
                    let phi = (k as f64 + 0.5) * dphi;
                    let x = [center[0] + r * phi.cos(), center[1] + r * phi.sin(), 0.0];
                    total += wr * r * dphi * weight(drift.magnitude(&x, 0.0));
                }
            }
        }
        3 => {
            let polar = gauss_legendre_on(quad.polar, -1.0, 1.0);
            for &(r, wr) in &radial {
                for &(ct, wt) in &polar {
                    let st = (1.0 - ct * ct).max(0.0).sqrt();
                    for k in 0..quad.azimuthal {
                        let phi = (k as f64 + 0.5) * dphi;
                        let x = [
                            center[0] + r * st * phi.cos(),
                            center[1] + r * st * phi.sin(),
                            center[2] + r * ct,
                        ];
                        total += wr * r * r * wt * dphi * weight(drift.magnitude(&x, 0.0));
                    }
                }
            }
        }
        _ => panic!("unsupported dimension {dim}"),
    }
    total
}

/// Outcome of [`layer_split`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSplit {
    /// Number of equal layers the shell `B_2R ∖ B_R` was cut into.
    pub layers: usize,
    pub delta: f64,
    /// Middle radius `r` of the returned layer `{r − 2δR < |x| < r + 2δR}`.
    pub mid_radius: f64,
    pub inner: f64,
    pub outer: f64,
    /// Norm of the drift over the returned layer (log-weighted for n = 2).
    pub norm: f64,
    /// Norm over the whole shell.
    pub total: f64,
    /// Pigeonhole bound `total · (2/M)^{1/n}`.
    pub bound: f64,
}

pub const LAYER_SPLIT_MAX_LAYERS: usize = 1 << 12;

/// Find a thin spherical layer of `B_2R(c) ∖ B_R(c)` on which the drift is small.
///
/// In three dimensions the smallness is measured in `L_3`; in two dimensions
/// by `‖b ln^{1/2}(1 + 2δR|b|)‖_2`. `M` is the smallest power of two for which
/// the pigeonhole bound guarantees a layer below `eps`, and layers are
/// scanned outward.
pub fn layer_split(
    drift: &DriftField,
    center: &[f64],
    outer: f64,
    eps: f64,
    quad: &ShellQuadrature,
) -> Result<LayerSplit> {
    check_dim(center.len())?;
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("{eps} must be positive")));
    }
    if !(outer > 0.0) {
        return Err(invalid("R", format!("{outer} must be positive")));
    }
    let dim = center.len();
    let n = dim as f64;
    let weight = |scale: f64| {
        move |b: f64| {
            if dim == 2 {
                b * b * (1.0 + scale * b).ln()
            } else {
                b.powi(dim as i32)
            }
        }
    };
    let total = shell_integral(drift, center, outer, 2.0 * outer, quad, weight(outer))
        .max(0.0)
        .powf(1.0 / n);
    if total == 0.0 {
        return Ok(LayerSplit {
            layers: 1,
            delta: 0.5,
            mid_radius: 1.5 * outer,
            inner: outer,
            outer: 2.0 * outer,
            norm: 0.0,
            total: 0.0,
            bound: 0.0,
        });
    }
    let mut m = 2usize;
    while m <= LAYER_SPLIT_MAX_LAYERS {
        let bound = total * (2.0 / m as f64).powf(1.0 / n);
        if bound <= eps {
            let thickness = outer / m as f64;
            let layer_weight = weight(thickness);
            let thin: Vec<f64> = (0..m)
                .map(|j| {
                    let r1 = outer + j as f64 * thickness;
                    shell_integral(drift, center, r1, r1 + thickness, quad, layer_weight)
                })
                .collect();
            for k in 1..m {
                let value = (thin[k - 1] + thin[k]).max(0.0).powf(1.0 / n);
                if value <= eps {
                    let r = outer + k as f64 * thickness;
                    return Ok(LayerSplit {
                        layers: m,
                        delta: 1.0 / (2.0 * m as f64),
                        mid_radius: r,
                        inner: r - thickness,
                        outer: r + thickness,
                        norm: value,
                        total,
                        bound,
                    });
                }
            }
        }
        m *= 2;
    }
    Err(Error::LayerSplitFailed {
        max_layers: LAYER_SPLIT_MAX_LAYERS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_disk_by_direct_count() {
        let grid = Grid::new(&Ball::centered(2, 1.0).unwrap(), 0.5).unwrap();
        // Nodes at ±0.25, ±0.75: all four combinations with |x| < 1.
        // (±0.25, ±0.25), (±0.25, ±0.75), (±0.75, ±0.25): 12 nodes; (±0.75, ±0.75) has |x| ≈ 1.06.
        assert_eq!(grid.unknowns(), 12);
        let err = (grid.discrete_measure() - PI).abs();
        assert!(err <= 2.0 * 0.5 * 2.0 * PI, "measure error {err}");
    }

    #[test]
    fn unit_ball_3d_measure_within_five_percent() {
        let grid = Grid::new(&Ball::centered(3, 1.0).unwrap(), 1.0 / 32.0).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((grid.discrete_measure() - exact).abs() / exact <= 0.05);
    }

    #[test]
    fn measure_converges_along_ladder() {
        let ball = Ball::new(vec![0.1, -0.2], 1.0).unwrap();
        let errs: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&h| (Grid::new(&ball, h).unwrap().discrete_measure() - PI).abs())
            .collect();
        for (e, h) in errs.iter().zip([1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]) {
            assert!(*e <= 2.0 * PI * h, "error {e} at h {h}");
        }
    }

    #[test]
    fn too_coarse_and_degenerate() {
        let ball = Ball::centered(2, 1.0).unwrap();
        assert!(matches!(
            Grid::new(&ball, 0.75),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(Grid::new(&ball, 0.0).is_err());
    }

    #[test]
    fn boundary_nodes_hug_the_sphere() {
        let ball = Ball::centered(2, 1.0).unwrap();
        let grid = Grid::new(&ball, 1.0 / 16.0).unwrap();
        for &id in grid.boundary() {
            let r = norm(&grid.position(id)[..2]);
            assert!(
                (1.0..=1.0 + 1.5 * grid.h()).contains(&r),
                "boundary node at r = {r}"
            );
        }
        for &id in grid.interior() {
            for off in neighbour_offsets(2) {
                let j = grid.offset(id, off).unwrap();
                assert_ne!(grid.kind(j), NodeKind::Exterior);
            }
        }
    }

    #[test]
    fn cylinder_grid_lateral_and_bottom() {
        let cyl = Cylinder::new(vec![0.0, 0.0], 0.0, 1.0, 2.0, 1.0).unwrap();
        let g = SpaceTimeGrid::new(&cyl, 1.0 / 16.0, 1.0 / 64.0).unwrap();
        assert_eq!(g.steps(), 64);
        assert_eq!(g.time(0), -1.0);
        assert_eq!(g.time(g.steps()), 0.0);
        let lateral = g.space().boundary()[0];
        assert_eq!(g.kind(3, lateral), TimeNodeKind::Lateral);
        assert_eq!(g.kind(0, lateral), TimeNodeKind::Bottom);
        let r = norm(&g.space().position(lateral)[..2]);
        assert!((r - 2.0).abs() <= 1.5 / 16.0);
        let inner = g.space().interior()[0];
        assert_eq!(g.kind(0, inner), TimeNodeKind::Bottom);
        assert_eq!(g.kind(1, inner), TimeNodeKind::Interior);
    }

    #[test]
    fn descriptor_round_trip_json() {
        let json = r#"{"kind":"cylinder","center":[0.0,0.0],"R":1.0,"lambda":2.0,"theta":1.0,"h":0.0625,"tau":0.015625}"#;
        let d: RegionDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&d).unwrap(), json);
        match d.build().unwrap() {
            BuiltGrid::SpaceTime(g) => assert_eq!(g.steps(), 64),
            _ => panic!("expected space-time grid"),
        }
    }

    #[test]
    fn pinned_nodes_become_dirichlet() {
        let ball = Ball::centered(3, 1.0).unwrap();
        let grid = Grid::new(&ball, 0.125).unwrap();
        let pinned = grid
            .with_pinned(|p| (p[0] * p[0] + p[1] * p[1]).sqrt() < 0.125)
            .unwrap();
        assert!(pinned.unknowns() < grid.unknowns());
        for &id in grid.interior() {
            let p = grid.position(id);
            if (p[0] * p[0] + p[1] * p[1]).sqrt() < 0.125 {
                assert_eq!(pinned.kind(id), NodeKind::Boundary);
            }
        }
        assert_eq!(
            pinned.boundary().len(),
            grid.boundary().len() + (grid.unknowns() - pinned.unknowns())
        );
    }

    #[test]
    fn ball_chain_examples() {
        let plan = ball_chain(&[1.5, 0.0, 0.0], 0.125, 1.0).unwrap();
        assert_eq!(plan.count, 3);
        assert_eq!(plan.links[0].radius, 0.125);
        assert_eq!(norm(&plan.links[0].center), 1.75);
        assert!(plan.all_contained());

        let plan = ball_chain(&[0.0, 1.0], 0.25, 1.0).unwrap();
        assert_eq!(plan.count, 2);
        assert_eq!(plan.links[0].radius, 0.25);
        assert_eq!(norm(&plan.links[0].center), 1.5);
        assert_eq!(plan.links.last().unwrap().radius, 1.0);

        let plan = ball_chain(&[0.0, 0.0, 0.0], 0.5, 1.0).unwrap();
        assert_eq!(plan.count, 0);
        assert!(plan.links.is_empty());

        assert!(matches!(
            ball_chain(&[1.0, 0.0], 0.3, 1.0),
            Err(Error::InconsistentChain(_))
        ));
    }

    #[test]
    fn chain_overlap_is_scale_free() {
        let plan = ball_chain(&[1.9, 0.0, 0.0], 0.025, 1.0).unwrap();
        let fracs: Vec<f64> = plan
            .links
            .iter()
            .filter_map(|l| l.overlap_fraction)
            .collect();
        assert!(!fracs.is_empty());
        for f in &fracs {
            assert!((f - fracs[0]).abs() < 1e-12 && *f > 0.0);
        }
    }

    #[test]
    fn parabolic_chain_examples() {
        // Degenerate single link.
        let plan = parabolic_chain(&[0.0, 0.0], -2.0, 0.5, 1.0).unwrap();
        assert_eq!(plan.count, 0);
        assert_eq!(plan.links.len(), 1);
        assert_eq!(plan.links[0].time, Some(-2.0 + 0.25));
        assert!(plan.all_contained());

        let plan = parabolic_chain(&[0.5, 0.0, 0.0], -2.5, 1.0 / 16.0, 1.0).unwrap();
        assert_eq!(plan.count, 3);
        assert!(plan.all_contained());

        // Closed-form final time.
        let rho = 0.01;
        let plan = parabolic_chain(&[0.0, 0.0], -2.0, rho, 1.0).unwrap();
        let n = plan.count as i32;
        let r0 = 0.5f64.powi(n + 1);
        let expected = -2.0 + r0 * r0 * (4f64.powi(n + 1) - 1.0) / 3.0;
        let t_last = plan.links.last().unwrap().time.unwrap();
        assert!((t_last - expected).abs() < 1e-14);
        assert!(t_last < -2.0 + 1.0 / 3.0);

        assert!(matches!(
            parabolic_chain(&[0.0, 0.0], -1.0, 0.1, 1.0),
            Err(Error::ChainStartOutOfRange(_))
        ));
    }

    #[test]
    fn lens_measure_matches_limits() {
        assert_eq!(ball_intersection_measure(2, 1.0, 1.0, 2.5), 0.0);
        assert!((ball_intersection_measure(3, 1.0, 0.5, 0.1) - PI / 6.0).abs() < 1e-12);
        // Two unit disks at distance 1: 2π/3 − √3/2.
        let lens = ball_intersection_measure(2, 1.0, 1.0, 1.0);
        assert!((lens - (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0)).abs() < 1e-12);
    }
}
