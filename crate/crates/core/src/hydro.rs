//! The axisymmetric swirl equation `∂_t u − Δu + b·Du = 0` in `ℝ³` with
//! `b = v + ε·2x′/|x′|²`, `x′ = (x₁, x₂)`, whose divergence is `4πε` times
//! the line measure on the axis `Γ = {x′ = 0}`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{
    make_drift, validate_divergence, Background, DivergenceClass, DivergenceOptions, DriftFamily,
    DriftField, EllipticTensor, TensorKind,
};
use crate::geometry::{unit_ball_measure, Ball, Cylinder, Grid, Point, SpaceTimeGrid};
use crate::norms::{quantity_n_hat, NormParams};
use crate::quadrature::gauss_legendre_on;
use crate::report::{EstimateReport, Extremum, Verdict};
use crate::solver::{
    assemble_elliptic, residual_check_where, solve_parabolic, DiscreteField, SpaceTimeField,
};
use crate::verify::{
    check_ladder, check_trials, fits, liouville_probe, positive, record, run_trials, trial_rng,
    Coefficients, DataKind, LiouvilleOptions, Outcome, TrialData, TINY,
};

/// Exponent of the singular part's norm: `b̂ ∈ L_{q,∞}` for `q < 2`.
pub const SWIRL_Q: f64 = 1.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwirlDescriptor {
    pub background: Background,
    pub epsilon: f64,
}

/// `𝒩̂(R)` of a field on `Q_R` at `q = 7/4`, `ℓ = ∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleNorm {
    pub radius: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwirlMetadata {
    pub q: f64,
    /// Lattice values, with the drift capped at `1/h` next to the axis.
    pub singular_n_hat: Vec<ScaleNorm>,
    /// `𝒩̂` of the uncapped `b̂`, the same at every `R`.
    pub singular_n_hat_exact: f64,
    pub background_n_hat: Vec<ScaleNorm>,
    /// Largest weak divergence of `v` against hats away from the axis.
    pub background_divergence: f64,
    pub divergence_class: DivergenceClass,
    /// `ε > 0`: the axis carries a positive divergence.
    pub positive_singular_divergence: bool,
}

#[derive(Clone, Debug)]
pub struct SwirlProblem {
    pub descriptor: SwirlDescriptor,
    /// `v + b̂`.
    pub drift: DriftField,
    /// `b̂` alone.
    pub singular: DriftField,
    pub metadata: SwirlMetadata,
}

impl SwirlProblem {
    pub fn epsilon(&self) -> f64 {
        self.descriptor.epsilon
    }

    pub fn family(&self) -> DriftFamily {
        self.drift.family.clone()
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients::Fixed {
            dim: 3,
            tensor: TensorKind::Identity,
            nu: 1.0,
            drift: Some(self.family()),
        }
    }
}

fn rho(x: &[f64]) -> f64 {
    x[0].hypot(x[1])
}

/// `R^{−α}‖2/|x′|‖_{q,∞,Q_R}` for `1 ≤ q < 2`, `α = 3/q − 1`, via
/// `∫_{B_1} |x′|^{−q} = 2π/(2 − q) ∫_{−π/2}^{π/2} cos^{3−q}θ dθ`.
pub fn inverse_radius_n_hat(q: f64) -> f64 {
    let angular: f64 = gauss_legendre_on(96, -PI / 2.0, PI / 2.0)
        .iter()
        .map(|(x, w)| w * x.cos().powf(3.0 - q))
        .sum();
    (2f64.powf(q) * 2.0 * PI / (2.0 - q) * angular).powf(1.0 / q)
}

/// Certifies `div v = 0` and records the scale-invariant norms.
pub fn build_swirl_problem(background: Background, epsilon: f64) -> Result<SwirlProblem> {
    if epsilon != 1.0 && epsilon != -1.0 {
        return Err(invalid("epsilon", format!("{epsilon} must be +1 or -1")));
    }
    if !background.is_divergence_free() {
        return Err(Error::DivergenceCertification(format!(
            "{background:?} is not divergence-free"
        )));
    }
    let v = make_drift(DriftFamily::Axisymmetric {
        epsilon: 0.0,
        background: background.clone(),
    })?;
    let ball = Ball::centered(3, 1.0)?;
    let grid = Grid::new(&ball, 1.0 / 16.0)?;
    let div = validate_divergence(
        &v,
        &grid,
        &DivergenceOptions {
            half_width_cells: 2,
            ..Default::default()
        },
    )?;
    let background_divergence = div.max.abs().max(div.min.abs());
    if background_divergence > div.tol {
        return Err(Error::DivergenceCertification(format!(
            "weak divergence of the background reaches {background_divergence}, tolerance {}",
            div.tol
        )));
    }
    let drift = make_drift(DriftFamily::Axisymmetric {
        epsilon,
        background: background.clone(),
    })?;
    let singular = make_drift(DriftFamily::Axisymmetric {
        epsilon,
        background: Background::Zero,
    })?;
    let params = NormParams {
        q: SWIRL_Q,
        l: f64::INFINITY,
    };
    let scale_norms = |b: &DriftField| -> Result<Vec<ScaleNorm>> {
        [0.5, 1.0, 2.0]
            .iter()
            .map(|&r| {
                let cyl = Cylinder::standard(3, r)?;
                Ok(ScaleNorm {
                    radius: r,
                    value: quantity_n_hat(b, &cyl, params, r / 16.0, r * r / 4.0)?,
                })
            })
            .collect()
    };
    let metadata = SwirlMetadata {
        q: SWIRL_Q,
        singular_n_hat: scale_norms(&singular)?,
        singular_n_hat_exact: inverse_radius_n_hat(SWIRL_Q),
        background_n_hat: scale_norms(&v)?,
        background_divergence,
        divergence_class: drift.class,
        positive_singular_divergence: epsilon > 0.0,
    };
    Ok(SwirlProblem {
        descriptor: SwirlDescriptor {
            background,
            epsilon,
        },
        drift,
        singular,
        metadata,
    })
}

pub fn build_from_descriptor(d: &SwirlDescriptor) -> Result<SwirlProblem> {
    build_swirl_problem(d.background.clone(), d.epsilon)
}

// ---------------------------------------------------------------------------

/// `η(x) = φ(x′ − d) χ(x₃)` with `φ(y) = (1 − |y|²/a²)³₊` and `χ(s) = (1 − s²/c²)³₊`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisTestFunction {
    pub a: f64,
    pub c: f64,
    /// Offset `d` of the bump from the axis in the `x′` plane.
    pub offset: [f64; 2],
}

impl Default for AxisTestFunction {
    fn default() -> Self {
        AxisTestFunction {
            a: 0.5,
            c: 0.5,
            offset: [0.0, 0.0],
        }
    }
}

impl AxisTestFunction {
    fn value_and_gradient(&self, x: &[f64]) -> (f64, [f64; 3]) {
        let y = [x[0] - self.offset[0], x[1] - self.offset[1]];
        let s = 1.0 - (y[0] * y[0] + y[1] * y[1]) / (self.a * self.a);
        let r = 1.0 - x[2] * x[2] / (self.c * self.c);
        if s <= 0.0 || r <= 0.0 {
            return (0.0, [0.0; 3]);
        }
        let phi = s.powi(3);
        let chi = r.powi(3);
        let dphi = -6.0 * s * s / (self.a * self.a);
        let dchi = -6.0 * r * r * x[2] / (self.c * self.c);
        (
            phi * chi,
            [dphi * y[0] * chi, dphi * y[1] * chi, phi * dchi],
        )
    }

    /// `∫_Γ η dx₃ = φ(−d) · 32c/35`.
    pub fn axis_integral(&self) -> f64 {
        let s = 1.0 - (self.offset[0].powi(2) + self.offset[1].powi(2)) / (self.a * self.a);
        s.max(0.0).powi(3) * 32.0 * self.c / 35.0
    }

    /// Radius of the smallest origin-centred ball containing the support.
    pub fn support_radius(&self) -> f64 {
        (self.offset[0].hypot(self.offset[1]) + self.a).hypot(self.c)
    }
}

/// `−Σ b·∇η h³` over the node lattice `(k + ½)h`.
pub fn dirac_pairing(b: &DriftField, eta: &AxisTestFunction, h: f64) -> f64 {
    let reach = [
        eta.offset[0].abs() + eta.a,
        eta.offset[1].abs() + eta.a,
        eta.c,
    ];
    let range = |r: f64| {
        let k = (r / h).ceil() as i64 + 1;
        (-k..k).map(move |i| (i as f64 + 0.5) * h)
    };
    let mut total = 0.0;
    for x in range(reach[0]) {
        for y in range(reach[1]) {
            for z in range(reach[2]) {
                let p = [x, y, z];
                let (eta_v, grad) = eta.value_and_gradient(&p);
                if eta_v == 0.0 {
                    continue;
                }
                let bx = b.eval(&p, 0.0);
                total -= bx[0] * grad[0] + bx[1] * grad[1] + bx[2] * grad[2];
            }
        }
    }
    total * h * h * h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiracOptions {
    pub eta: AxisTestFunction,
    /// The cylinder's spatial radius; the support must stay inside it.
    pub radius: f64,
    pub ladder: Vec<f64>,
    pub tolerance: f64,
    pub min_rate: f64,
}

impl Default for DiracOptions {
    fn default() -> Self {
        DiracOptions {
            eta: AxisTestFunction::default(),
            radius: 1.0,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            tolerance: 0.05,
            min_rate: 0.5,
        }
    }
}

impl DiracOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        positive("radius", self.radius)?;
        positive("a", self.eta.a)?;
        positive("c", self.eta.c)?;
        if self.eta.support_radius() >= self.radius {
            return Err(Error::RejectedTestFunction(format!(
                "support reaches radius {}, cylinder radius {}",
                self.eta.support_radius(),
                self.radius
            )));
        }
        Ok(())
    }
}

/// Pairing of the drift against `∇η` compared with `4πε ∫_Γ η dx₃`.
pub fn check_dirac_divergence(
    problem: &SwirlProblem,
    opts: &DiracOptions,
) -> Result<EstimateReport> {
    opts.validate()?;
    let eps = problem.epsilon();
    let mut report = EstimateReport::new(
        "dirac-divergence",
        "swirl",
        0,
        serde_json::json!({ "problem": problem.descriptor, "options": opts }),
    );
    report.rule = format!(
        "relative pairing error at most {} at the finest h, falling from the coarsest h at rate at least {}",
        opts.tolerance, opts.min_rate
    );
    let oracle = 4.0 * PI * eps * opts.eta.axis_integral();
    let scale = 4.0
        * PI
        * AxisTestFunction {
            offset: [0.0; 2],
            ..opts.eta.clone()
        }
        .axis_integral();
    report.measure("oracle", None, oracle, Extremum::Fit);
    let mut errors = Vec::new();
    for &h in &opts.ladder {
        let full = dirac_pairing(&problem.drift, &opts.eta, h);
        let singular = dirac_pairing(&problem.singular, &opts.eta, h);
        let err = (full - oracle).abs() / scale;
        report.measure("pairing", Some(h), full, Extremum::Fit);
        report.measure("singular_pairing", Some(h), singular, Extremum::Fit);
        report.measure("relative_error", Some(h), err, Extremum::Max);
        errors.push(err);
    }
    report.push_series(
        "pairing_error",
        "h",
        "relative error",
        opts.ladder
            .iter()
            .cloned()
            .zip(errors.iter().cloned())
            .collect(),
    );
    let rate = if errors.len() >= 2 && errors.iter().all(|e| *e > 0.0) {
        let first = errors[0];
        let last = *errors.last().expect("nonempty");
        (first / last).ln() / (opts.ladder[0] / opts.ladder[errors.len() - 1]).ln()
    } else {
        f64::INFINITY
    };
    report.measure("rate", None, rate, Extremum::Fit);
    let last = *errors.last().expect("nonempty");
    let pass = last <= opts.tolerance && last <= errors[0] && rate >= opts.min_rate;
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwirlLiouvilleOptions {
    /// Axisymmetric by default, as the swirl `|x′|v_θ` of an axisymmetric flow is.
    pub data: DataKind,
    pub trials: usize,
    pub window: f64,
    pub base: f64,
    pub steps: usize,
    pub h: f64,
    pub kappa: f64,
    pub node_budget: usize,
    /// The exact solution `|x′|⁻²` is checked for `r_min ≤ |x′| ≤ r_max`.
    pub r_min: f64,
    pub r_max: f64,
    pub residual_ladder: Vec<f64>,
    pub residual_reduction: f64,
}

impl Default for SwirlLiouvilleOptions {
    fn default() -> Self {
        SwirlLiouvilleOptions {
            data: DataKind::AxisymmetricBumps,
            trials: 4,
            window: 1.0,
            base: 3.0,
            steps: 3,
            h: 0.5,
            kappa: 0.95,
            node_budget: 2_000_000,
            r_min: 0.4,
            r_max: 0.8,
            residual_ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            residual_reduction: 1.8,
        }
    }
}

impl SwirlLiouvilleOptions {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_ladder(&self.residual_ladder)?;
        positive("h", self.h)?;
        positive("window", self.window)?;
        if !(self.base > 1.0) {
            return Err(invalid("base", "must exceed 1"));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max < 1.0) {
            return Err(invalid("r_min", "need 0 < r_min < r_max < 1"));
        }
        fits("h", self.h, self.window)?;
        let outer = self.window * self.base.powi(self.steps as i32);
        let nodes = unit_ball_measure(3) * (outer / self.h).powi(3);
        if nodes > self.node_budget as f64 {
            return Err(Error::NodeBudget {
                nodes: nodes as usize,
                budget: self.node_budget,
            });
        }
        Ok(())
    }
}

/// `ε = −1`: bounded solutions on growing balls flatten over a fixed window,
/// and `|x′|⁻²` solves the steady equation off the axis when `v = 0`.
pub fn check_swirl_liouville(
    problem: &SwirlProblem,
    opts: &SwirlLiouvilleOptions,
    seed: u64,
) -> Result<EstimateReport> {
    if problem.epsilon() != -1.0 {
        return Err(invalid(
            "epsilon",
            "the Liouville scenario needs epsilon = -1",
        ));
    }
    opts.validate()?;
    let probe = LiouvilleOptions {
        coefficients: problem.coefficients(),
        data: opts.data,
        trials: opts.trials,
        window: opts.window,
        base: opts.base,
        steps: opts.steps,
        h: opts.h,
        kappa: opts.kappa,
        node_budget: opts.node_budget,
        q: Some(SWIRL_Q),
    };
    let mut report = liouville_probe(&probe, seed)?;
    report.estimate = "swirl-liouville".into();
    report.setting = "swirl".into();
    report.configuration = serde_json::json!({ "problem": problem.descriptor, "options": opts });
    let mut pass = report.passed();
    if problem.descriptor.background == Background::Zero {
        let a = EllipticTensor::identity(3);
        let exact = |x: &Point| rho(x).max(TINY).powi(-2);
        let keep = |x: &Point| {
            let r = rho(x);
            r >= opts.r_min && r <= opts.r_max && x[2].abs() <= opts.r_max
        };
        let mut residuals = Vec::new();
        for &h in &opts.residual_ladder {
            let grid = Arc::new(Grid::new(&Ball::centered(3, 1.0)?, h)?);
            let op = assemble_elliptic(&a, &problem.drift, &grid, 0.0)?;
            let u = DiscreteField::from_fn(Arc::clone(&grid), exact);
            let r = residual_check_where(&op, &u, keep);
            report.measure("inverse_square_residual", Some(h), r, Extremum::Max);
            residuals.push(r);
        }
        let certified = residuals
            .windows(2)
            .all(|w| w[0] >= opts.residual_reduction * w[1]);
        report.measure(
            "inverse_square_certified",
            None,
            if certified { 1.0 } else { 0.0 },
            Extremum::Fit,
        );
        pass &= certified;
    } else {
        report
            .notes
            .push("nonzero background: the inverse-square solution does not apply".into());
    }
    report.rule = format!(
        "{}; residual of |x'|^-2 falls by {}x per halving of h",
        report.rule, opts.residual_reduction
    );
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisTrace {
    Constant,
    /// `c(x₃)` varying along the axis: the decay claim has no hypothesis.
    Varying,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisOptions {
    pub trials: usize,
    pub radius: f64,
    /// Level `k` on the axis.
    pub level: f64,
    /// Cap `V ≤ 𝔑 k`.
    pub cap: f64,
    /// `ϰ` in `{V > ϰk}`.
    pub kappa_level: f64,
    /// Required fraction `δ` of `{V > ϰk}` in `B_R × ]−R², −¾R²[`.
    pub delta: f64,
    pub ladder: Vec<f64>,
    pub tau_ratio: f64,
    pub axis: AxisTrace,
    /// Trials of the two-sided split scenario.
    pub split_trials: usize,
    pub eta: f64,
    pub slack: f64,
}

impl Default for AxisOptions {
    fn default() -> Self {
        AxisOptions {
            trials: 8,
            radius: 0.5,
            level: 1.0,
            cap: 2.0,
            kappa_level: 0.25,
            delta: 0.05,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            tau_ratio: 0.5,
            axis: AxisTrace::Constant,
            split_trials: 4,
            eta: 0.05,
            slack: 0.1,
        }
    }
}

/// One axis node value at one time level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSample {
    pub x3: f64,
    pub t: f64,
    pub value: f64,
}

/// Trace of a solution on `Γ` inside a cylinder, read off the pinned axis nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisData {
    pub samples: Vec<AxisSample>,
    /// All samples agree to within the tolerance.
    pub constant: bool,
}

impl AxisData {
    pub fn from_field(u: &SpaceTimeField, cyl: &Cylinder, tol: f64) -> AxisData {
        let grid = u.grid();
        let space = grid.space();
        let h = space.h();
        let ball = cyl.spatial();
        let ids: Vec<usize> = space
            .boundary()
            .iter()
            .copied()
            .filter(|&id| {
                let x = space.position(id);
                rho(&x) < h && ball.contains(&x)
            })
            .collect();
        let samples: Vec<AxisSample> = grid
            .levels_in(cyl.t_start(), cyl.t_end())
            .into_iter()
            .flat_map(|k| {
                ids.iter().map(move |&id| AxisSample {
                    x3: space.position(id)[2],
                    t: grid.time(k),
                    value: u.level(k)[id],
                })
            })
            .collect();
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
                (a.min(s.value), b.max(s.value))
            });
        AxisData {
            constant: !samples.is_empty() && hi - lo <= tol,
            samples,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        if self.samples.is_empty() {
            return None;
        }
        Some(
            self.samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
                    (a.min(s.value), b.max(s.value))
                }),
        )
    }
}

fn pinned_grid(cyl: &Cylinder, h: f64, tau: f64) -> Result<SpaceTimeGrid> {
    let space = Grid::new(&cyl.spatial(), h)?.with_pinned(|x| rho(x) < h)?;
    SpaceTimeGrid::over(cyl, Arc::new(space), tau)
}

/// Extremes over interior nodes and pinned axis nodes of the levels in `cyl`.
fn extremes_with_axis(u: &SpaceTimeField, cyl: &Cylinder, h: f64) -> Option<(f64, f64)> {
    let grid = u.grid();
    let space = grid.space();
    let ball = cyl.spatial();
    let ids: Vec<usize> = space
        .interior()
        .iter()
        .chain(space.boundary())
        .copied()
        .filter(|&id| {
            let x = space.position(id);
            ball.contains(&x) && (space.unknown_index(id).is_some() || rho(&x) < h)
        })
        .collect();
    let levels = grid.levels_in(cyl.t_start(), cyl.t_end());
    if ids.is_empty() || levels.is_empty() {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &k in &levels {
        for &id in &ids {
            let v = u.level(k)[id];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Some((lo, hi))
}

impl AxisOptions {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("ladder", "must be nonempty and decreasing"));
        }
        if !(self.cap > 1.0) {
            return Err(invalid("cap", "must exceed 1"));
        }
        if self.trials == 0 || self.split_trials == 0 {
            return Err(invalid("trials", "at least one trial is required"));
        }
        if !(self.tau_ratio > 0.0 && self.tau_ratio <= 1.0) {
            return Err(invalid("tau_ratio", "must lie in ]0, 1]"));
        }
        positive("radius", self.radius)?;
        positive("level", self.level)?;
        fits("ladder", self.ladder[0], self.radius)?;
        Ok(())
    }
}

/// `ε = +1` with the axis pinned: `V ≥ k` on `Γ`, `V ≤ 𝔑k` gives
/// `V ≥ β̂₃ k` in `Q_{R/2}`; the level set `{V > ϰk}` is measured on each
/// trial. A bounded solution with constant axis trace is then split into
/// `u − inf u` and `sup u − u` and its oscillation decay measured.
pub fn check_axis_lower_bound(
    problem: &SwirlProblem,
    opts: &AxisOptions,
    seed: u64,
) -> Result<EstimateReport> {
    if problem.epsilon() != 1.0 {
        return Err(invalid("epsilon", "the axis scenario needs epsilon = +1"));
    }
    opts.validate()?;
    let r = opts.radius;
    let k = opts.level;
    let origin = vec![0.0; 3];
    let mut report = EstimateReport::new(
        "axis-lower-bound",
        "swirl",
        seed,
        serde_json::json!({ "problem": problem.descriptor, "options": opts }),
    );
    report.rule = format!(
        "beta positive and shrinking by at most {}% under refinement, every trial with a fraction at least {} above {}k; \
         split oscillation ratio at most {}",
        opts.slack * 100.0,
        opts.delta,
        opts.kappa_level,
        1.0 - opts.eta
    );
    report.measure("kappa_level", None, opts.kappa_level, Extremum::Fit);
    report.measure("delta", None, opts.delta, Extremum::Fit);
    let domain = Cylinder::new(origin.clone(), 0.0, r, 2.0, 1.0)?;
    let target = Cylinder::standard(3, r / 2.0)?;
    let early = Cylinder::new(origin.clone(), -0.75 * r * r, r, 1.0, 0.25)?;
    let space = domain.spatial();
    let a = EllipticTensor::identity(3);
    let mut betas = Vec::new();
    let mut measure_violations = 0.0;
    for &h in &opts.ladder {
        let grid = pinned_grid(&domain, h, opts.tau_ratio * h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let g = TrialData::draw(DataKind::Bumps, &space, true, &mut rng);
            let top = g.sample_max(&space, 0.0).max(TINY);
            let axis = k * (1.0 + rand::Rng::random_range(&mut rng, 0.0..0.5));
            let u = solve_parabolic(
                &a,
                &problem.drift,
                &grid,
                |x, t| {
                    if rho(x) < h {
                        axis
                    } else {
                        opts.cap * k * (g.eval(x, t) / (1.5 * top)).clamp(0.0, 1.0)
                    }
                },
                None,
            )?
            .solution;
            let (_, sup) = u.interior_extremes();
            if sup > opts.cap * k {
                return Ok(Outcome::skip("cap exceeded"));
            }
            let inf = u.extremes_in(&target).ok_or(Error::EmptyRegion)?.0;
            let ids = grid.space().nodes_in(&early.spatial());
            let levels = grid.levels_in(early.t_start(), early.t_end());
            let above = levels
                .iter()
                .flat_map(|&l| ids.iter().map(move |&id| (l, id)))
                .filter(|&(l, id)| u.level(l)[id] > opts.kappa_level * k)
                .count();
            let fraction = above as f64 / (ids.len() * levels.len()).max(1) as f64;
            Ok(Outcome::with(vec![
                ("beta", inf / k),
                ("fraction", fraction),
            ]))
        })?;
        record(&mut report, h, &outcomes);
        let kept: Vec<&Outcome> = outcomes.iter().filter(|o| o.skipped.is_none()).collect();
        let skipped = outcomes.len() - kept.len();
        let beta = kept
            .iter()
            .filter_map(|o| o.get("beta"))
            .fold(f64::INFINITY, f64::min);
        let min_fraction = kept
            .iter()
            .filter_map(|o| o.get("fraction"))
            .fold(f64::INFINITY, f64::min);
        measure_violations += kept
            .iter()
            .filter(|o| o.get("fraction").is_some_and(|f| f < opts.delta))
            .count() as f64;
        if skipped == outcomes.len() {
            return Err(Error::HypothesisNeverSatisfied(format!(
                "every trial exceeded the cap at h = {h}"
            )));
        }
        report.measure("beta_hat_3", Some(h), beta, Extremum::Min);
        report.measure("level_set_fraction", Some(h), min_fraction, Extremum::Min);
        betas.push(beta);
    }
    report.measure(
        "measure_violations",
        None,
        measure_violations,
        Extremum::Max,
    );

    // Two-sided split on Q_{2R} with a bounded solution and the axis pinned.
    let outer = Cylinder::standard(3, 2.0 * r)?;
    let inner = Cylinder::standard(3, r / 2.0)?;
    let outer_space = outer.spatial();
    let h = opts.ladder[0];
    let grid = pinned_grid(&outer, h, opts.tau_ratio * h)?;
    let rows = run_trials(opts.split_trials, |i| {
        let mut rng = trial_rng(seed ^ 0x5bd1_e995, i);
        let g = TrialData::draw(DataKind::Bumps, &outer_space, true, &mut rng);
        let top = g.sample_max(&outer_space, 0.0).max(TINY);
        let c: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
        let trace = |z: f64| match opts.axis {
            AxisTrace::Constant => c,
            AxisTrace::Varying => 0.5 + 0.5 * (PI * z / r).sin(),
        };
        let u = solve_parabolic(
            &a,
            &problem.drift,
            &grid,
            |x, t| {
                if rho(x) < h {
                    trace(x[2])
                } else {
                    (g.eval(x, t) / (1.5 * top)).clamp(0.0, 1.0)
                }
            },
            None,
        )?
        .solution;
        let (lo, hi) = extremes_with_axis(&u, &outer, h).ok_or(Error::EmptyRegion)?;
        let (ilo, ihi) = extremes_with_axis(&u, &inner, h).ok_or(Error::EmptyRegion)?;
        let osc = hi - lo;
        if osc < TINY {
            return Ok(Outcome::skip("constant solution"));
        }
        let trace = AxisData::from_field(&u, &outer, 1e-9);
        if !trace.constant {
            return Ok(Outcome::skip("axis trace not constant"));
        }
        let (alo, ahi) = trace.range().ok_or(Error::EmptyRegion)?;
        // V₁ = u − inf u or V₂ = sup u − u, whichever is at least half the oscillation on the axis.
        let half = osc / 2.0;
        let split_beta = if alo - lo >= half {
            (ilo - lo) / half
        } else if hi - ahi >= half {
            (hi - ihi) / half
        } else {
            f64::NAN
        };
        Ok(Outcome::with(vec![
            ("ratio", (ihi - ilo) / osc),
            ("split_beta", split_beta),
        ]))
    })?;
    record(&mut report, h, &rows);
    let mut max_ratio: f64 = 0.0;
    let mut consistent = true;
    for o in rows.iter().filter(|o| o.skipped.is_none()) {
        let ratio = o.get("ratio").unwrap_or(f64::NAN);
        let sb = o.get("split_beta").unwrap_or(f64::NAN);
        max_ratio = max_ratio.max(ratio);
        if sb.is_finite() {
            consistent &= ratio <= 1.0 - sb / 2.0 + 1e-12;
        }
    }
    report.measure("split_oscillation_ratio", Some(h), max_ratio, Extremum::Max);
    if rows.iter().all(|o| o.skipped.is_some()) {
        report.verdict = Verdict::HypothesisUnmet;
        report
            .notes
            .push("no split trial has a constant axis trace: no decay claim is made".into());
        return Ok(report);
    }
    let stable = betas.windows(2).all(|w| w[1] >= w[0] / (1.0 + opts.slack));
    let pass = betas.iter().all(|b| *b > 0.0)
        && stable
        && measure_violations == 0.0
        && consistent
        && max_ratio <= 1.0 - opts.eta;
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(eps: f64) -> SwirlProblem {
        build_swirl_problem(Background::Zero, eps).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_swirl_problem(Background::Zero, 0.5).is_err());
        assert!(matches!(
            build_swirl_problem(Background::RadialExpansion { rate: 1.0 }, -1.0),
            Err(Error::DivergenceCertification(_))
        ));
        let p = problem(-1.0);
        assert!(check_axis_lower_bound(&p, &AxisOptions::default(), 1).is_err());
        assert!(
            check_swirl_liouville(&problem(1.0), &SwirlLiouvilleOptions::default(), 1).is_err()
        );
    }

    #[test]
    fn swirl_norm_is_scale_free() {
        let p = problem(-1.0);
        let m = &p.metadata;
        assert_eq!(
            m.divergence_class,
            DivergenceClass::NonpositiveWithSingularPart
        );
        let v0 = m.singular_n_hat[0].value;
        assert!(v0.is_finite() && v0 > 0.0);
        for s in &m.singular_n_hat {
            assert!((s.value - v0).abs() < 1e-9 * v0);
        }
        // ‖2/ρ‖_q^q on B_1 by midpoint rule in z.
        let q = SWIRL_Q;
        let n = 200_000;
        let dz = 2.0 / n as f64;
        let radial: f64 = (0..n)
            .map(|i| {
                let z = -1.0 + (i as f64 + 0.5) * dz;
                (1.0 - z * z).powf((2.0 - q) / 2.0) * dz
            })
            .sum();
        let oracle = (2f64.powf(q) * 2.0 * PI / (2.0 - q) * radial).powf(1.0 / q);
        assert!((m.singular_n_hat_exact - oracle).abs() < 1e-4 * oracle);
        assert!(v0 < m.singular_n_hat_exact);
    }

    #[test]
    fn rigid_swirl_background_certifies() {
        let p = build_swirl_problem(Background::RigidSwirl { omega: 2.0 }, 1.0).unwrap();
        assert!(p.metadata.positive_singular_divergence);
        assert!(p.metadata.background_divergence <= 1e-8);
    }

    #[test]
    fn dirac_pairing_flips_sign() {
        let eta = AxisTestFunction::default();
        let mass = 4.0 * PI * 0.5 * 32.0 / 35.0;
        let plus = dirac_pairing(&problem(1.0).drift, &eta, 1.0 / 32.0);
        let minus = dirac_pairing(&problem(-1.0).drift, &eta, 1.0 / 32.0);
        assert!((plus - mass).abs() < 1e-3 * mass);
        assert!((plus + minus).abs() < 1e-9 * mass);
    }

    #[test]
    fn dirac_pairing_vanishes_off_axis() {
        let eta = AxisTestFunction {
            a: 0.2,
            c: 0.2,
            offset: [0.5, 0.3],
        };
        assert_eq!(eta.axis_integral(), 0.0);
        let v = dirac_pairing(&problem(1.0).drift, &eta, 1.0 / 32.0);
        assert!(v.abs() < 1e-4);
    }

    #[test]
    fn dirac_check_passes_and_rejects_wide_support() {
        let p = build_swirl_problem(
            Background::GaussianSwirl {
                amplitude: 3.0,
                width: 0.5,
            },
            1.0,
        )
        .unwrap();
        let r = check_dirac_divergence(&p, &DiracOptions::default()).unwrap();
        assert!(r.passed());
        let wide = DiracOptions {
            eta: AxisTestFunction {
                a: 0.9,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(
            check_dirac_divergence(&p, &wide),
            Err(Error::RejectedTestFunction(_))
        ));
    }

    #[test]
    fn inverse_square_solves_the_steady_equation() {
        // −Δu + b·Du for u = ρ⁻², b = −2x′/ρ², by central differences.
        let u = |x: &[f64; 3]| (x[0] * x[0] + x[1] * x[1]).powi(-1);
        let d = 1e-4;
        for x in [[0.5, 0.1, 0.0], [-0.3, 0.4, 0.7], [0.2, -0.6, -0.1]] {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let mut lap = 0.0;
            let mut adv = 0.0;
            for i in 0..3 {
                let mut p = x;
                let mut m = x;
                p[i] += d;
                m[i] -= d;
                lap += (u(&p) - 2.0 * u(&x) + u(&m)) / (d * d);
                let bi = if i < 2 { -2.0 * x[i] / r2 } else { 0.0 };
                adv += bi * (u(&p) - u(&m)) / (2.0 * d);
            }
            assert!((-lap + adv).abs() < 1e-4 * lap.abs());
        }
    }

    #[test]
    fn constant_state_gives_unit_beta() {
        let p = problem(1.0);
        let r = 0.5;
        let h = 1.0 / 8.0;
        let domain = Cylinder::new(vec![0.0; 3], 0.0, r, 2.0, 1.0).unwrap();
        let grid = pinned_grid(&domain, h, h / 2.0).unwrap();
        let k = 1.7;
        let u = solve_parabolic(
            &EllipticTensor::identity(3),
            &p.drift,
            &grid,
            |_, _| k,
            None,
        )
        .unwrap()
        .solution;
        let target = Cylinder::standard(3, r / 2.0).unwrap();
        let (lo, hi) = u.extremes_in(&target).unwrap();
        assert!((lo / k - 1.0).abs() < 1e-8 && (hi / k - 1.0).abs() < 1e-8);
    }

    #[test]
    fn varying_axis_trace_is_not_claimed() {
        let opts = AxisOptions {
            trials: 1,
            split_trials: 1,
            ladder: vec![1.0 / 8.0],
            axis: AxisTrace::Varying,
            ..Default::default()
        };
        let r = check_axis_lower_bound(&problem(1.0), &opts, 3).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesisUnmet);
    }

    #[test]
    fn axis_lower_bound_small() {
        let opts = AxisOptions {
            trials: 2,
            split_trials: 2,
            ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            ..Default::default()
        };
        let r = check_axis_lower_bound(&problem(1.0), &opts, 5).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        let beta = r.value("beta_hat_3", Some(1.0 / 16.0)).unwrap();
        assert!(beta > 0.0 && beta <= opts.cap);
    }

    #[test]
    fn axis_trace_constancy() {
        let p = problem(1.0);
        let cyl = Cylinder::standard(3, 0.5).unwrap();
        let grid = pinned_grid(&cyl, 1.0 / 8.0, 1.0 / 16.0).unwrap();
        let a = EllipticTensor::identity(3);
        let flat = solve_parabolic(
            &a,
            &p.drift,
            &grid,
            |x, _| if rho(x) < 0.125 { 0.3 } else { x[0] * x[0] },
            None,
        )
        .unwrap()
        .solution;
        let trace = AxisData::from_field(&flat, &cyl, 1e-9);
        assert!(trace.constant && !trace.samples.is_empty());
        assert_eq!(trace.range(), Some((0.3, 0.3)));
        let tilted = solve_parabolic(&a, &p.drift, &grid, |x, _| x[2], None)
            .unwrap()
            .solution;
        assert!(!AxisData::from_field(&tilted, &cyl, 1e-9).constant);
    }

    #[test]
    fn swirl_liouville_small() {
        let opts = SwirlLiouvilleOptions {
            trials: 2,
            steps: 1,
            residual_ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            ..Default::default()
        };
        let r = check_swirl_liouville(&problem(-1.0), &opts, 2).unwrap();
        assert_eq!(r.estimate, "swirl-liouville");
        assert_eq!(r.value("max_principle_violations", None), Some(0.0));
        assert!(r.value("ratio_step_1", Some(0.5)).unwrap() < 1.0);
    }

    #[test]
    fn first_angular_mode_solves_the_steady_equation() {
        // u = ρ^s cos φ with s = √2 − 1 decays by only 3^{−s} per tripling of the radius.
        let s = 2f64.sqrt() - 1.0;
        let u = |x: &[f64; 3]| x[0].hypot(x[1]).powf(s - 1.0) * x[0];
        let d = 1e-4;
        for x in [[0.5, 0.1, 0.0], [-0.3, 0.4, 0.7]] {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let mut lap = 0.0;
            let mut adv = 0.0;
            for i in 0..3 {
                let mut p = x;
                let mut m = x;
                p[i] += d;
                m[i] -= d;
                lap += (u(&p) - 2.0 * u(&x) + u(&m)) / (d * d);
                let bi = if i < 2 { -2.0 * x[i] / r2 } else { 0.0 };
                adv += bi * (u(&p) - u(&m)) / (2.0 * d);
            }
            assert!((-lap + adv).abs() < 1e-5 * adv.abs().max(1.0));
        }
    }
}
