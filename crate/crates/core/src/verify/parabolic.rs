use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::data::{trial_rng, Coefficients, DataKind, RandomCoefficients, TrialData};
use super::elliptic::check_budget;
use super::{
    aggregate, check_ladder, check_trials, fits, fraction_at_least, log_fit, positive, record,
    run_trials, stable_both, stable_max, stable_min, to_json, upper_quantile, Outcome, TINY,
};
use crate::error::{invalid, Error, Result};
use crate::fields::{make_drift, DriftFamily, DriftField, EllipticTensor};
use crate::geometry::{
    parabolic_chain, unit_ball_measure, Ball, Cylinder, Grid, Point, SpaceTimeGrid,
};
use crate::norms::{quantity_n_hat, NormParams};
use crate::report::{EstimateReport, Extremum, Verdict};
use crate::solver::{solve_parabolic, SpaceTimeField};

fn default_coefficients() -> Coefficients {
    Coefficients::fixed(2, None)
}

fn space_time_grid(cyl: &Cylinder, h: f64, tau: f64) -> Result<SpaceTimeGrid> {
    SpaceTimeGrid::over(cyl, Arc::new(Grid::new(&cyl.spatial(), h)?), tau)
}

fn solve(
    a: &EllipticTensor,
    b: &DriftField,
    grid: &SpaceTimeGrid,
    g: &TrialData,
) -> Result<SpaceTimeField> {
    Ok(solve_parabolic(a, b, grid, |x, t| g.eval(x, t), None)?.solution)
}

/// Values at interior nodes of the levels inside `cyl`.
fn values_in(u: &SpaceTimeField, cyl: &Cylinder) -> Vec<f64> {
    let grid = u.grid();
    let ids = grid.space().nodes_in(&cyl.spatial());
    grid.levels_in(cyl.t_start(), cyl.t_end())
        .into_iter()
        .flat_map(|k| ids.iter().map(move |&id| u.level(k)[id]))
        .collect()
}

fn extremes(u: &SpaceTimeField, cyl: &Cylinder) -> Result<(f64, f64)> {
    u.extremes_in(cyl).ok_or(Error::EmptyRegion)
}

fn osc(u: &SpaceTimeField, cyl: &Cylinder) -> Result<f64> {
    let (lo, hi) = extremes(u, cyl)?;
    Ok(hi - lo)
}

/// The level closest to time `t`.
fn level_at(grid: &SpaceTimeGrid, t: f64) -> usize {
    let k = ((t - grid.cylinder().t_start()) / grid.tau()).round();
    (k.max(0.0) as usize).min(grid.steps())
}

fn n_hat(b: &DriftField, cyl: &Cylinder, q: Option<f64>, h: f64, tau: f64) -> Result<f64> {
    let params = NormParams {
        q: q.unwrap_or(0.75 * b.dim as f64),
        l: f64::INFINITY,
    };
    quantity_n_hat(b, cyl, params, h, tau)
}

fn check_tau(tau_ratio: f64) -> Result<()> {
    if tau_ratio > 0.0 && tau_ratio <= 1.0 {
        Ok(())
    } else {
        Err(invalid("tau_ratio", "must lie in ]0, 1]"))
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicLocalMaxOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    pub lambda: f64,
    pub theta: f64,
    pub ladder: Vec<f64>,
    /// `τ = tau_ratio · h`.
    pub tau_ratio: f64,
    pub scales: Vec<f64>,
    pub slack: f64,
    pub scale_slack: f64,
}

impl Default for ParabolicLocalMaxOptions {
    fn default() -> Self {
        ParabolicLocalMaxOptions {
            coefficients: default_coefficients(),
            data: DataKind::Signed,
            trials: 20,
            radius: 0.5,
            lambda: 2.0,
            theta: 1.0,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            tau_ratio: 1.0,
            scales: vec![0.5, 1.0, 2.0],
            slack: 0.1,
            scale_slack: 0.05,
        }
    }
}

impl ParabolicLocalMaxOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        if !(self.lambda > 1.0) {
            return Err(invalid("lambda", "must exceed 1"));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("scales", "must be nonempty and positive"));
        }
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], self.radius)?;
        Ok(())
    }
}

/// `sup u₊` over `Q_R^{1,θ/2}` against the root mean square of `u₊` over `Q_R^{λ,θ}`.
pub fn check_parabolic_local_max(
    opts: &ParabolicLocalMaxOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("local-max", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "constant within {}% under refinement and within {}% across the scaling family",
        opts.slack * 100.0,
        opts.scale_slack * 100.0
    );
    let origin = vec![0.0; dim];
    let base = Ball::centered(dim, opts.lambda * opts.radius)?;
    let mut by_scale: Vec<Vec<f64>> = vec![Vec::new(); opts.scales.len()];
    let mut by_h: Vec<Vec<f64>> = Vec::new();
    for &h in &opts.ladder {
        let mut row = Vec::new();
        for (si, &s) in opts.scales.iter().enumerate() {
            let r = s * opts.radius;
            let outer = Cylinder::new(origin.clone(), 0.0, r, opts.lambda, opts.theta)?;
            let inner = Cylinder::new(origin.clone(), 0.0, r, 1.0, opts.theta / 2.0)?;
            let grid = space_time_grid(&outer, s * h, s * s * opts.tau_ratio * h)?;
            let outcomes = run_trials(opts.trials, |i| {
                let mut rng = trial_rng(seed, i);
                let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &base)?;
                let g = TrialData::draw(opts.data, &base, true, &mut rng);
                let (a, b) = if s == 1.0 {
                    (a, b)
                } else {
                    (a.rescaled(1.0 / s), b.rescaled(1.0 / s)?)
                };
                let u = solve_parabolic(
                    &a,
                    &b,
                    &grid,
                    |x, t| g.eval(&x.map(|c| c / s), t / (s * s)),
                    None,
                )?
                .solution;
                let den = u
                    .mean_in(&outer, |v| v.max(0.0).powi(2))
                    .ok_or(Error::EmptyRegion)?
                    .sqrt();
                if den < TINY {
                    return Ok(Outcome::skip(
                        "mean square of the positive part below 1e-14",
                    ));
                }
                Ok(Outcome::with(vec![(
                    "ratio",
                    extremes(&u, &inner)?.1.max(0.0) / den,
                )]))
            })?;
            record(&mut report, s * h, &outcomes);
            match aggregate(
                &mut report,
                &format!("constant_scale_{s}"),
                Some(h),
                &outcomes,
                "ratio",
                Extremum::Max,
            ) {
                Some(c) => {
                    by_scale[si].push(c);
                    row.push(c);
                }
                None => report
                    .notes
                    .push(format!("all trials skipped at h = {h}, scale {s}")),
            }
        }
        by_h.push(row);
    }
    let refinement_ok = by_scale
        .iter()
        .all(|v| v.len() == opts.ladder.len() && stable_both(v, opts.slack));
    let scaling_ok = by_h.iter().all(|row| {
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(0.0, f64::max);
        row.len() == opts.scales.len() && hi <= lo * (1.0 + opts.scale_slack)
    });
    report.verdict = if refinement_ok && scaling_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicGrowthOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    /// Measure fraction `δ̂` of `{V ≥ k}` in `Q_R`.
    pub delta: f64,
    pub level: Option<f64>,
    pub ladder: Vec<f64>,
    pub tau_ratio: f64,
    pub slack: f64,
}

impl Default for ParabolicGrowthOptions {
    fn default() -> Self {
        ParabolicGrowthOptions {
            coefficients: default_coefficients(),
            data: DataKind::Bumps,
            trials: 20,
            radius: 0.5,
            delta: 0.5,
            level: None,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            tau_ratio: 1.0,
            slack: 0.1,
        }
    }
}

impl ParabolicGrowthOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("delta", "must lie in ]0, 1]"));
        }
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], self.radius)?;
        Ok(())
    }
}

/// Supersolutions in `Q_R^{2,1}` with `meas{V ≥ k} ∩ Q_R ≥ δ̂ meas Q_R`:
/// `inf V / k` over `Q_R^{1/2, δ̂/4}`.
pub fn check_parabolic_growth(opts: &ParabolicGrowthOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let r = opts.radius;
    let origin = vec![0.0; dim];
    let mut report = EstimateReport::new("growth", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "beta positive at every resolution and not shrinking by more than {}% under refinement",
        opts.slack * 100.0
    );
    let domain = Cylinder::new(origin.clone(), 0.0, r, 2.0, 1.0)?;
    let hyp = Cylinder::new(origin.clone(), 0.0, r, 1.0, 1.0)?;
    let target = Cylinder::new(origin.clone(), 0.0, r / 2.0, 1.0, opts.delta)?;
    let space = domain.spatial();
    let mut betas = Vec::new();
    for &h in &opts.ladder {
        let grid = space_time_grid(&domain, h, opts.tau_ratio * h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, r, &space)?;
            let g = TrialData::draw(opts.data, &space, true, &mut rng);
            let u = solve(&a, &b, &grid, &g)?;
            let v = values_in(&u, &hyp);
            let k = match opts.level {
                Some(k) => k,
                None => upper_quantile(&v, opts.delta).unwrap_or(0.0),
            };
            let frac = fraction_at_least(&v, k);
            if k <= TINY || frac < opts.delta {
                return Ok(Outcome::skip(format!(
                    "measure hypothesis unmet: fraction {frac} at k = {k}"
                )));
            }
            let inf = extremes(&u, &target)?.0;
            Ok(Outcome::with(vec![
                ("beta", inf / k),
                ("k", k),
                ("fraction", frac),
            ]))
        })?;
        record(&mut report, h, &outcomes);
        match aggregate(
            &mut report,
            "beta",
            Some(h),
            &outcomes,
            "beta",
            Extremum::Min,
        ) {
            Some(beta) => betas.push(beta),
            None => {
                return Err(Error::HypothesisNeverSatisfied(format!(
                    "no trial met meas{{V >= k}} >= {} meas(Q_R) at h = {h}; widen data family",
                    opts.delta
                )))
            }
        }
    }
    let pass = betas.iter().all(|b| *b > 0.0) && stable_min(&betas, opts.slack);
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicOscillationOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    /// `R`: the ratio compares `Q_{R/2}` with `Q_{2R}`.
    pub radius: f64,
    pub ladder: Vec<f64>,
    pub tau_ratio: f64,
    pub eta: f64,
    pub slack: f64,
    pub min_r2: f64,
    pub q: Option<f64>,
}

impl Default for ParabolicOscillationOptions {
    fn default() -> Self {
        ParabolicOscillationOptions {
            coefficients: default_coefficients(),
            data: DataKind::Signed,
            trials: 20,
            radius: 0.5,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            tau_ratio: 1.0,
            eta: 0.05,
            slack: 0.1,
            min_r2: 0.9,
            q: None,
        }
    }
}

impl ParabolicOscillationOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        self.coefficients.validate()?;
        self.coefficients.check_q(self.q, true)?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], 2.0 * self.radius)?;
        Ok(())
    }
}

/// `osc_{Q_{R/2}} u / osc_{Q_{2R}} u`, with `γ₁ = −log₄ κ₁` and a Hölder fit
/// over the dyadic cylinders `Q_ρ`.
pub fn check_parabolic_oscillation(
    opts: &ParabolicOscillationOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let r = opts.radius;
    let mut report = EstimateReport::new("oscillation-decay", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "ratio at most {} at every resolution, growing by at most {}% under refinement; \
         fitted Hoelder exponent positive with R^2 at least {}",
        1.0 - opts.eta,
        opts.slack * 100.0,
        opts.min_r2
    );
    let domain = Cylinder::standard(dim, 2.0 * r)?;
    let inner = Cylinder::standard(dim, r / 2.0)?;
    let space = domain.spatial();
    let finest = *opts.ladder.last().expect("ladder checked");
    let mut radii = Vec::new();
    let mut rho = 2.0 * r;
    while rho >= 4.0 * finest - 1e-12 {
        radii.push(rho);
        rho /= 2.0;
    }
    let mut kappas = Vec::new();
    let mut envelope = vec![0.0f64; radii.len()];
    for &h in &opts.ladder {
        let tau = opts.tau_ratio * h;
        let grid = space_time_grid(&domain, h, tau)?;
        let fit_here = h == finest;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, r, &space)?;
            let g = TrialData::draw(opts.data, &space, true, &mut rng);
            let u = solve(&a, &b, &grid, &g)?;
            let big = osc(&u, &domain)?;
            if big < TINY {
                return Ok((Outcome::skip("constant solution"), Vec::new()));
            }
            let n = n_hat(&b, &domain, opts.q, h, tau)?;
            let ratio = osc(&u, &inner)? / big;
            let profile = if fit_here {
                radii
                    .iter()
                    .map(|&p| Ok(osc(&u, &Cylinder::standard(dim, p)?)? / big))
                    .collect::<Result<Vec<f64>>>()?
            } else {
                Vec::new()
            };
            Ok((
                Outcome::with(vec![("ratio", ratio), ("drift_n_hat", n)]),
                profile,
            ))
        })?;
        let (outcomes, profiles): (Vec<Outcome>, Vec<Vec<f64>>) = outcomes.into_iter().unzip();
        record(&mut report, h, &outcomes);
        aggregate(
            &mut report,
            "drift_n_hat",
            Some(h),
            &outcomes,
            "drift_n_hat",
            Extremum::Max,
        );
        if let Some(k) = aggregate(
            &mut report,
            "kappa",
            Some(h),
            &outcomes,
            "ratio",
            Extremum::Max,
        ) {
            report.measure(
                "gamma_from_kappa",
                Some(h),
                -k.ln() / 4f64.ln(),
                Extremum::Min,
            );
            kappas.push(k);
        }
        for p in profiles.iter().filter(|p| !p.is_empty()) {
            for (e, v) in envelope.iter_mut().zip(p) {
                *e = e.max(*v);
            }
        }
    }
    let points: Vec<(f64, f64)> = radii
        .iter()
        .cloned()
        .zip(envelope.iter().cloned())
        .collect();
    report.push_series(
        "holder",
        "log rho",
        "log osc",
        points
            .iter()
            .map(|(p, o)| (p.ln(), o.max(TINY).ln()))
            .collect(),
    );
    let (gamma, r2) = log_fit(&points).map_or((f64::NAN, f64::NAN), |(s, _, r2)| (s, r2));
    report.measure("gamma", Some(finest), gamma, Extremum::Fit);
    report.measure("gamma_r2", Some(finest), r2, Extremum::Fit);
    let pass = kappas.len() == opts.ladder.len()
        && kappas.iter().all(|k| *k <= 1.0 - opts.eta)
        && stable_max(&kappas, opts.slack)
        && gamma > 0.0
        && r2 >= opts.min_r2;
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicHarnackOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    /// `R`: solutions in `Q_{2R}`.
    pub radius: f64,
    pub ladder: Vec<f64>,
    pub tau_ratio: f64,
    pub slack: f64,
    pub bound: Option<f64>,
}

impl Default for ParabolicHarnackOptions {
    fn default() -> Self {
        ParabolicHarnackOptions {
            coefficients: default_coefficients(),
            data: DataKind::PoissonKernel,
            trials: 20,
            radius: 0.5,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            tau_ratio: 1.0,
            slack: 0.1,
            bound: None,
        }
    }
}

impl ParabolicHarnackOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], 2.0 * self.radius)?;
        Ok(())
    }
}

/// `sup over B_R × ]−3R², −2R²[` against `inf over B_R × ]−R², 0[` for
/// nonnegative solutions in `Q_{2R}`.
pub fn check_parabolic_harnack(
    opts: &ParabolicHarnackOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let r = opts.radius;
    let origin = vec![0.0; dim];
    let mut report = EstimateReport::new("harnack", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "constant finite and growing by at most {}% under refinement{}",
        opts.slack * 100.0,
        opts.bound
            .map_or(String::new(), |b| format!(", and at most {b}"))
    );
    let domain = Cylinder::standard(dim, 2.0 * r)?;
    let early = Cylinder::new(origin.clone(), -2.0 * r * r, r, 1.0, 1.0)?;
    let late = Cylinder::standard(dim, r)?;
    let space = domain.spatial();
    let mut constants = Vec::new();
    for &h in &opts.ladder {
        let grid = space_time_grid(&domain, h, opts.tau_ratio * h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, r, &space)?;
            let g = TrialData::draw(opts.data, &space, true, &mut rng);
            let u = solve(&a, &b, &grid, &g)?;
            let sup = extremes(&u, &early)?.1;
            let inf = extremes(&u, &late)?.0;
            let q = if inf < TINY { f64::INFINITY } else { sup / inf };
            Ok(Outcome::with(vec![("quotient", q)]))
        })?;
        record(&mut report, h, &outcomes);
        if let Some(c) = aggregate(
            &mut report,
            "constant",
            Some(h),
            &outcomes,
            "quotient",
            Extremum::Max,
        ) {
            constants.push(c);
        }
    }
    let pass = constants.len() == opts.ladder.len()
        && stable_max(&constants, opts.slack)
        && opts.bound.is_none_or(|b| constants.iter().all(|c| *c <= b));
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicMaxPrincipleOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    pub theta: f64,
    pub h: f64,
    pub tau_ratio: f64,
}

impl Default for ParabolicMaxPrincipleOptions {
    fn default() -> Self {
        ParabolicMaxPrincipleOptions {
            coefficients: Coefficients::Random(RandomCoefficients {
                dim: 2,
                random_tensor: true,
                drift_amplitude: 200.0,
                structure: false,
                max_n: None,
                q: None,
            }),
            data: DataKind::Signed,
            trials: 50,
            radius: 1.0,
            theta: 0.25,
            h: 1.0 / 32.0,
            tau_ratio: 1.0,
        }
    }
}

impl ParabolicMaxPrincipleOptions {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        Ok(())
    }
}

/// The solution stays between the extremes of its parabolic-boundary data,
/// and its minimum over the top level exceeds the data minimum.
pub fn check_parabolic_max_principle(
    opts: &ParabolicMaxPrincipleOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("max-principle", "parabolic", seed, to_json(opts));
    report.rule = "no interior node outside the parabolic-boundary range, top-level minimum above the boundary minimum".into();
    let domain = Cylinder::new(vec![0.0; dim], 0.0, opts.radius, 1.0, opts.theta)?;
    let space = domain.spatial();
    let grid = space_time_grid(&domain, opts.h, opts.tau_ratio * opts.h)?;
    let top = grid.steps();
    let outcomes = run_trials(opts.trials, |i| {
        let mut rng = trial_rng(seed, i);
        let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &space)?;
        let g = TrialData::draw(opts.data, &space, true, &mut rng);
        let r = solve_parabolic(&a, &b, &grid, |x, t| g.eval(x, t), None)?;
        Ok(max_principle_outcome(
            &r.solution,
            top,
            r.stats.scheme.max_peclet,
        ))
    })?;
    record(&mut report, opts.h, &outcomes);
    let count: f64 = outcomes.iter().filter_map(|o| o.get("violation")).sum();
    report.measure("violations", Some(opts.h), count, Extremum::Max);
    aggregate(
        &mut report,
        "margin",
        Some(opts.h),
        &outcomes,
        "margin",
        Extremum::Min,
    );
    aggregate(
        &mut report,
        "peclet",
        Some(opts.h),
        &outcomes,
        "peclet",
        Extremum::Max,
    );
    report.verdict = if count == 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}

pub(crate) fn max_principle_outcome(u: &SpaceTimeField, top: usize, peclet: f64) -> Outcome {
    let (gmin, gmax) = u.parabolic_boundary_extremes();
    if gmax - gmin < 1e-12 {
        return Outcome::skip("constant data");
    }
    let (umin, umax) = u.interior_extremes();
    let space = u.grid().space();
    let top_min = space
        .interior()
        .iter()
        .map(|&id| u.level(top)[id])
        .fold(f64::INFINITY, f64::min);
    let weak = umin < gmin || umax > gmax;
    let strict = top_min <= gmin;
    Outcome::with(vec![
        ("violation", (weak || strict) as u8 as f64),
        ("margin", (top_min - gmin) / (gmax - gmin)),
        ("peclet", peclet),
    ])
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurePropagationOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    /// The solve runs on `B_{λR}`, measures are taken in `B_R`.
    pub lambda: f64,
    /// Longest window scanned, in units of `R²`.
    pub theta_max: f64,
    /// Bottom-level measure fraction `δ₀`.
    pub delta0: f64,
    /// Level-shrinking target `μ`.
    pub mu: f64,
    pub s_step: f64,
    pub s_max: f64,
    /// Zero lateral data, so only the bottom level feeds the solution.
    pub bottom_only: bool,
    pub ladder: Vec<f64>,
    pub tau_ratio: f64,
    pub slack: f64,
}

impl Default for MeasurePropagationOptions {
    fn default() -> Self {
        MeasurePropagationOptions {
            coefficients: default_coefficients(),
            data: DataKind::InteriorBumps,
            trials: 20,
            radius: 0.5,
            lambda: 1.5,
            theta_max: 1.0,
            delta0: 0.5,
            mu: 0.25,
            s_step: 0.25,
            s_max: 20.0,
            bottom_only: true,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            tau_ratio: 0.25,
            slack: 0.1,
        }
    }
}

/// Per-trial propagation window and shrinking exponent.
fn propagation_trial(
    u: &SpaceTimeField,
    inner: &Ball,
    opts: &MeasurePropagationOptions,
) -> Outcome {
    let grid = u.grid();
    let ids = grid.space().nodes_in(inner);
    let level_values = |k: usize| -> Vec<f64> { ids.iter().map(|&id| u.level(k)[id]).collect() };
    let bottom = level_values(0);
    let Some(k) = upper_quantile(&bottom, opts.delta0).filter(|k| *k > TINY) else {
        return Outcome::skip("bottom level vanishes on B_R");
    };
    let k0 = opts.delta0 * k / 3.0;
    let r2 = opts.radius * opts.radius;
    // Largest window over which every level keeps the propagated fraction.
    let mut last = 0;
    let mut min_fraction = f64::INFINITY;
    for level in 1..grid.levels() {
        let f = fraction_at_least(&level_values(level), k0);
        if f < opts.delta0 / 3.0 {
            break;
        }
        min_fraction = min_fraction.min(f);
        last = level;
    }
    if last == 0 {
        return Outcome::with(vec![("theta0", 0.0), ("k", k), ("s", f64::INFINITY)]);
    }
    let theta0 = (grid.time(last) - grid.time(0)) / r2;
    // Level shrinking on Q_R^{1,θ₀} with apex at the window's end.
    let window: Vec<f64> = (1..=last).flat_map(level_values).collect();
    let mut s = 1.0;
    let found = loop {
        let level = 2f64.powf(-s) * k0;
        let below = window.iter().filter(|&&v| v < level).count() as f64 / window.len() as f64;
        if below <= opts.mu {
            break true;
        }
        s += opts.s_step;
        if s > opts.s_max {
            break false;
        }
    };
    Outcome::with(vec![
        ("theta0", theta0),
        ("k", k),
        ("min_fraction", min_fraction),
        ("s", if found { s } else { f64::INFINITY }),
    ])
}

impl MeasurePropagationOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        if !(self.lambda > 1.0) {
            return Err(invalid("lambda", "must exceed 1"));
        }
        if !(self.delta0 > 0.0 && self.delta0 <= 1.0) {
            return Err(invalid("delta0", "must lie in ]0, 1]"));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(invalid("mu", "must lie in ]0, 1["));
        }
        if !(self.s_step > 0.0) {
            return Err(invalid("s_step", "must be positive"));
        }
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], self.radius)?;
        Ok(())
    }
}

/// Spreading of a bottom-level measure bound along the time window, and the
/// exponent `s` for which `{V < 2^{−s} k₀}` fills at most `μ` of the cylinder.
pub fn check_measure_propagation(
    opts: &MeasurePropagationOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let r = opts.radius;
    let mut report = EstimateReport::new("measure-propagation", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "theta0 positive at every resolution and shrinking by at most {}% under refinement; \
         a finite s reaches mu = {} on every trial",
        opts.slack * 100.0,
        opts.mu
    );
    let domain = Cylinder::new(vec![0.0; dim], 0.0, r, opts.lambda, opts.theta_max)?;
    let space = domain.spatial();
    let inner = Ball::centered(dim, r)?;
    let mut thetas = Vec::new();
    let mut s_ok = true;
    let mut unmet = true;
    for &h in &opts.ladder {
        let grid = space_time_grid(&domain, h, opts.tau_ratio * h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, r, &space)?;
            let g = TrialData::draw(opts.data, &space, true, &mut rng);
            let t0 = domain.t_start();
            let u = solve_parabolic(
                &a,
                &b,
                &grid,
                |x, t| {
                    if opts.bottom_only && t > t0 {
                        0.0
                    } else {
                        g.eval(x, t)
                    }
                },
                None,
            )?
            .solution;
            Ok(propagation_trial(&u, &inner, opts))
        })?;
        record(&mut report, h, &outcomes);
        if let Some(theta) = aggregate(
            &mut report,
            "theta0",
            Some(h),
            &outcomes,
            "theta0",
            Extremum::Min,
        ) {
            unmet = false;
            thetas.push(theta);
        }
        if let Some(s) = aggregate(&mut report, "s", Some(h), &outcomes, "s", Extremum::Max) {
            s_ok &= s.is_finite();
        }
    }
    if unmet {
        report.verdict = Verdict::HypothesisUnmet;
        report
            .notes
            .push("no trial had a positive bottom level on B_R".into());
        return Ok(report);
    }
    let pass = thetas.len() == opts.ladder.len()
        && thetas.iter().all(|t| *t > 0.0)
        && stable_min(&thetas, opts.slack)
        && s_ok;
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicChainOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    /// `R`: solutions in `Q_{2R}`, infimum over `Q_R`.
    pub radius: f64,
    /// Start time `s` in units of `R²`, within `[−4, −2]`.
    pub start_time: f64,
    pub ladder: Vec<f64>,
    pub tau_ratio: f64,
    pub min_rho_cells: f64,
    pub slack: f64,
}

impl Default for ParabolicChainOptions {
    fn default() -> Self {
        ParabolicChainOptions {
            coefficients: default_coefficients(),
            data: DataKind::Bumps,
            trials: 8,
            radius: 0.5,
            start_time: -3.0,
            ladder: vec![1.0 / 32.0, 1.0 / 64.0],
            tau_ratio: 1.0,
            min_rho_cells: 2.0,
            slack: 0.1,
        }
    }
}

const RHO_KEYS: [&str; 8] = [
    "ratio_0", "ratio_1", "ratio_2", "ratio_3", "ratio_4", "ratio_5", "ratio_6", "ratio_7",
];

impl ParabolicChainOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        if !(-4.0..=-2.0).contains(&self.start_time) {
            return Err(invalid("start_time", "must lie in [-4, -2]"));
        }
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        if self.rhos().len() < 2 {
            return Err(invalid("ladder", "too coarse for two dyadic values of rho"));
        }
        fits("ladder", self.ladder[0], 2.0 * self.radius)?;
        Ok(())
    }

    /// ρ is limited by the time distance √(s + 4R²) as well as the spatial one.
    fn rhos(&self) -> Vec<f64> {
        let r = self.radius;
        let s = self.start_time * r * r;
        let finest = self.ladder.last().copied().unwrap_or(f64::INFINITY);
        let mut rho = (r / 4.0).min((s + 4.0 * r * r).max(0.0).sqrt() / 4.0);
        let mut rhos = Vec::new();
        while rho >= self.min_rho_cells * finest - 1e-12 && rho > 0.0 && rhos.len() < RHO_KEYS.len()
        {
            rhos.push(rho);
            rho /= 2.0;
        }
        rhos
    }
}

/// `inf_{Q_R} V / inf_{B_ρ(y)} V(·; s)` with `ρ` a quarter of the parabolic
/// distance from `(y; s)` to `∂′Q_{2R}`; fits `N₆ (ρ/R)^{γ̂₁}`.
pub fn check_parabolic_chain(opts: &ParabolicChainOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let r = opts.radius;
    let s = opts.start_time * r * r;
    let mut report = EstimateReport::new("chain", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "every chain certified, empirical N6 positive for every rho and shrinking by at most {}% under refinement",
        opts.slack * 100.0
    );
    let domain = Cylinder::standard(dim, 2.0 * r)?;
    let target = Cylinder::standard(dim, r)?;
    let space = domain.spatial();
    let rhos = opts.rhos();
    let mut chains_ok = true;
    let mut per_h_min = Vec::new();
    for &h in &opts.ladder {
        let grid = space_time_grid(&domain, h, opts.tau_ratio * h)?;
        let start_level = level_at(&grid, s);
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, r, &space)?;
            let g = TrialData::draw(opts.data, &space, true, &mut rng);
            let angle: f64 = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
            let mut e = vec![0.0; dim];
            e[0] = angle.cos();
            e[1] = angle.sin();
            let u = solve(&a, &b, &grid, &g)?;
            let inf_q = extremes(&u, &target)?.0;
            let slice = u.slice(start_level);
            let mut ok = true;
            let mut ratios = Vec::new();
            for &rho in &rhos {
                // Pulled in by a relative 1e-9 so rounding keeps ρ admissible.
                let y: Vec<f64> = e
                    .iter()
                    .map(|c| c * (2.0 * r - 4.0 * rho * (1.0 + 1e-9)))
                    .collect();
                ok &= parabolic_chain(&y, s, rho, r)?.all_contained();
                let k = slice
                    .extremes_in(&Ball::new(y, rho)?)
                    .ok_or(Error::EmptyRegion)?
                    .0;
                ratios.push(if k > TINY { inf_q / k } else { f64::NAN });
            }
            Ok((ratios, ok))
        })?;
        let mut trial_outcomes = Vec::new();
        for (ratios, ok) in &outcomes {
            chains_ok &= *ok;
            trial_outcomes.push(if ratios.iter().any(|v| !v.is_finite()) {
                Outcome::skip("infimum over the small ball below 1e-14")
            } else {
                Outcome::with(
                    ratios
                        .iter()
                        .enumerate()
                        .map(|(j, v)| (RHO_KEYS[j], *v))
                        .collect(),
                )
            });
        }
        record(&mut report, h, &trial_outcomes);
        let mut points = Vec::new();
        for (j, &rho) in rhos.iter().enumerate() {
            if let Some(v) = aggregate(
                &mut report,
                &format!("n6_rho_{rho}"),
                Some(h),
                &trial_outcomes,
                RHO_KEYS[j],
                Extremum::Min,
            ) {
                points.push((rho / r, v));
            }
        }
        if points.len() != rhos.len() {
            per_h_min.push(0.0);
            continue;
        }
        if let Some((slope, intercept, r2)) = log_fit(&points) {
            report.measure("gamma_hat", Some(h), slope, Extremum::Fit);
            report.measure("n6", Some(h), intercept.exp(), Extremum::Fit);
            report.measure("fit_r2", Some(h), r2, Extremum::Fit);
        }
        report.push_series(
            &format!("chain_h_{h}"),
            "rho/R",
            "inf ratio",
            points.clone(),
        );
        per_h_min.push(points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
    }
    report.measure(
        "chains_certified",
        None,
        if chains_ok { 1.0 } else { 0.0 },
        Extremum::Fit,
    );
    let pass =
        chains_ok && per_h_min.iter().all(|b| *b > 0.0) && stable_min(&per_h_min, opts.slack);
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlantFrameOptions {
    /// Constant drift of the fixed frame (two components).
    pub drift: Vec<f64>,
    /// Wave vector of `e^{−|k|²t} sin(k·(x − bt))`.
    pub wave: Vec<f64>,
    pub radius: f64,
    pub theta: f64,
    /// Frame velocity in cells per time step along `e₁`.
    pub cells_per_step: usize,
    pub ladder: Vec<f64>,
    /// Tolerance on the linear solution, which the scheme reproduces.
    pub linear_tol: f64,
    /// Required error reduction per halving of `h`.
    pub reduction: f64,
}

impl Default for SlantFrameOptions {
    fn default() -> Self {
        SlantFrameOptions {
            drift: vec![0.5, -0.25],
            wave: vec![std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_4],
            radius: 0.5,
            theta: 1.0,
            cells_per_step: 1,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            linear_tol: 1e-8,
            reduction: 1.5,
        }
    }
}

impl SlantFrameOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        if self.drift.len() != 2 || self.wave.len() != 2 {
            return Err(invalid(
                "drift",
                "drift and wave vector must have two components",
            ));
        }
        if self.cells_per_step == 0 {
            return Err(invalid("cells_per_step", "must be positive"));
        }
        positive("radius", self.radius)?;
        positive("radius", self.radius)?;
        positive("theta", self.theta)?;
        fits("ladder", self.ladder[0], self.radius)?;
        Ok(())
    }
}

/// Solves in the moving frame `x̂(t) = w t` with the shifted drift
/// `b(x − x̂(t)) + w` and compares with the fixed-frame solve composed with
/// the shift. The frame moves a whole number of cells per time step, so the
/// composition is read off lattice nodes without interpolation.
pub fn check_slant_frame(opts: &SlantFrameOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let mut report = EstimateReport::new("slant-frame", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "linear solution reproduced to {} in both frames; frame disagreement and errors on the \
         smooth solution fall by {}x per halving of h",
        opts.linear_tol, opts.reduction
    );
    let b = opts.drift.clone();
    let kv = opts.wave.clone();
    let k2 = kv[0] * kv[0] + kv[1] * kv[1];
    let wave = move |x: &[f64], t: f64| {
        (-k2 * t).exp() * (kv[0] * (x[0] - b[0] * t) + kv[1] * (x[1] - b[1] * t)).sin()
    };
    let b1 = opts.drift[0];
    let linear = move |x: &[f64], t: f64| x[0] - b1 * t;
    let fixed_drift = make_drift(DriftFamily::Constant {
        b: opts.drift.clone(),
    })?;
    let a = EllipticTensor::identity(2);
    let r = opts.radius;
    let slant_cyl = Cylinder::new(vec![0.0; 2], 0.0, r, 1.0, opts.theta)?;
    let mut disagreements = Vec::new();
    let mut errors = Vec::new();
    let mut linear_ok = true;
    for &h in &opts.ladder {
        let tau = h;
        let speed = opts.cells_per_step as f64 * h / tau;
        let w = vec![speed, 0.0];
        let reach = speed * opts.theta * r * r;
        let fixed_cyl = Cylinder::new(vec![0.0; 2], 0.0, r, (r + reach) / r, opts.theta)?;
        let fixed_grid = space_time_grid(&fixed_cyl, h, tau)?;
        let slant_grid = space_time_grid(&slant_cyl, h, tau)?;
        if fixed_grid.steps() != slant_grid.steps() {
            return Err(invalid("theta", "frames do not share time levels"));
        }
        let moving = make_drift(DriftFamily::Translated {
            inner: Box::new(DriftFamily::Constant {
                b: opts.drift.clone(),
            }),
            origin: vec![0.0; 2],
            velocity: w.clone(),
        })?;
        let shift = |x: &Point, t: f64| -> [f64; 2] { [x[0] - w[0] * t, x[1] - w[1] * t] };
        for (name, exact) in [
            ("wave", &wave as &(dyn Fn(&[f64], f64) -> f64 + Sync)),
            ("linear", &linear),
        ] {
            let fixed =
                solve_parabolic(&a, &fixed_drift, &fixed_grid, |x, t| exact(x, t), None)?.solution;
            let slant = solve_parabolic(
                &a,
                &moving,
                &slant_grid,
                |x, t| exact(&shift(x, t), t),
                None,
            )?
            .solution;
            let err_fixed = fixed.max_abs_error(|x, t| exact(x, t));
            let err_slant = slant.max_abs_error(|x, t| exact(&shift(x, t), t));
            let gap = frame_gap(&fixed, &slant, &w)?;
            report.measure(
                &format!("{name}_error_fixed"),
                Some(h),
                err_fixed,
                Extremum::Max,
            );
            report.measure(
                &format!("{name}_error_slant"),
                Some(h),
                err_slant,
                Extremum::Max,
            );
            report.measure(&format!("{name}_frame_gap"), Some(h), gap, Extremum::Max);
            if name == "linear" {
                linear_ok &= err_fixed <= opts.linear_tol
                    && err_slant <= opts.linear_tol
                    && gap <= opts.linear_tol;
            } else {
                disagreements.push(gap);
                errors.push(err_fixed.max(err_slant));
            }
        }
    }
    report.push_series(
        "frame_gap",
        "h",
        "max gap",
        opts.ladder
            .iter()
            .cloned()
            .zip(disagreements.iter().cloned())
            .collect(),
    );
    let falls = |v: &[f64]| v.windows(2).all(|p| p[0] >= opts.reduction * p[1]);
    let pass = linear_ok && falls(&disagreements) && falls(&errors);
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

/// `max |W(x, t) − V(x − w t, t)|` over slant interior nodes whose shifted
/// position is an interior node of the fixed grid.
fn frame_gap(fixed: &SpaceTimeField, slant: &SpaceTimeField, w: &[f64]) -> Result<f64> {
    let fg = fixed.grid();
    let sg = slant.grid();
    let fs = fg.space();
    let ss = sg.space();
    let h = ss.h();
    let lookup = |p: &Point| -> Option<usize> {
        let ball = Ball::new(vec![p[0], p[1]], 0.25 * h).ok()?;
        fs.nodes_in(&ball).first().copied()
    };
    let mut gap: f64 = 0.0;
    let mut compared = 0usize;
    for k in 1..sg.levels() {
        let t = sg.time(k);
        for &id in ss.interior() {
            let x = ss.position(id);
            let y = [x[0] - w[0] * t, x[1] - w[1] * t, 0.0];
            if let Some(j) = lookup(&y) {
                gap = gap.max((slant.level(k)[id] - fixed.level(k)[j]).abs());
                compared += 1;
            }
        }
    }
    if compared == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(gap)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParabolicLiouvilleOptions {
    pub coefficients: Coefficients,
    pub trials: usize,
    /// Radius of the fixed window `Q_window`.
    pub window: f64,
    pub base: f64,
    pub steps: usize,
    pub h: f64,
    pub tau_ratio: f64,
    pub kappa: f64,
    pub node_budget: usize,
    pub q: Option<f64>,
}

impl Default for ParabolicLiouvilleOptions {
    fn default() -> Self {
        ParabolicLiouvilleOptions {
            coefficients: default_coefficients(),
            trials: 4,
            window: 1.0,
            base: 2.0,
            steps: 3,
            h: 1.0 / 4.0,
            tau_ratio: 1.0,
            kappa: 0.95,
            node_budget: 50_000_000,
            q: None,
        }
    }
}

impl ParabolicLiouvilleOptions {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_tau(self.tau_ratio)?;
        if !(self.base > 1.0) {
            return Err(invalid("base", "must exceed 1"));
        }
        self.coefficients.validate()?;
        self.coefficients.check_q(self.q, true)?;
        positive("h", self.h)?;
        positive("window", self.window)?;
        fits("h", self.h, self.window)?;
        let dim = self.coefficients.dim();
        let outer = self.window * self.base.powi(self.steps as i32);
        let tau = self.tau_ratio * self.h;
        let nodes =
            unit_ball_measure(dim) * (outer / self.h).powi(dim as i32) * (outer * outer / tau);
        check_budget(nodes, self.node_budget)?;
        Ok(())
    }
}

/// Bounded data in `[0, 1]` on `∂′Q_{R_m}` for growing `R_m`; the oscillation
/// over the fixed window relative to the data's must decay like `κ^m`.
pub fn parabolic_liouville_probe(
    opts: &ParabolicLiouvilleOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("liouville", "parabolic", seed, to_json(opts));
    report.rule = format!(
        "window oscillation ratio at most {}^m after m scale steps",
        opts.kappa
    );
    let tau = opts.tau_ratio * opts.h;
    let radii: Vec<f64> = (0..=opts.steps)
        .map(|m| opts.window * opts.base.powi(m as i32))
        .collect();
    for &rm in &radii {
        let nodes = unit_ball_measure(dim) * (rm / opts.h).powi(dim as i32) * (rm * rm / tau);
        check_budget(nodes, opts.node_budget)?;
    }
    let window = Cylinder::standard(dim, opts.window)?;
    let mut pass = true;
    let mut series = Vec::new();
    for (m, &rm) in radii.iter().enumerate() {
        let domain = Cylinder::standard(dim, rm)?;
        let space = domain.spatial();
        let grid = space_time_grid(&domain, opts.h, tau)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(
                &mut rng,
                opts.window,
                &Ball::centered(dim, opts.window)?,
            )?;
            let g = TrialData::draw(DataKind::Bumps, &space, true, &mut rng);
            let top = (0..=8)
                .map(|j| g.sample_max(&space, domain.t_start() * j as f64 / 8.0))
                .fold(TINY, f64::max);
            let u = solve_parabolic(
                &a,
                &b,
                &grid,
                |x, t| (g.eval(x, t) / top).clamp(0.0, 1.0),
                None,
            )?
            .solution;
            let big = osc(&u, &domain)?;
            if big < TINY {
                return Ok(Outcome::skip("constant data"));
            }
            let n = n_hat(&b, &domain, opts.q, rm / 16.0, rm * rm / 16.0)?;
            Ok(Outcome::with(vec![
                ("ratio", osc(&u, &window)? / big),
                ("drift_n_hat", n),
            ]))
        })?;
        record(&mut report, opts.h, &outcomes);
        let ratio = aggregate(
            &mut report,
            &format!("ratio_step_{m}"),
            Some(opts.h),
            &outcomes,
            "ratio",
            Extremum::Max,
        );
        aggregate(
            &mut report,
            &format!("drift_n_hat_step_{m}"),
            Some(opts.h),
            &outcomes,
            "drift_n_hat",
            Extremum::Max,
        );
        if let Some(ratio) = ratio {
            series.push((rm, ratio));
            if m > 0 && ratio > opts.kappa.powi(m as i32) {
                pass = false;
            }
        }
    }
    report.push_series("window_oscillation", "R_m", "osc ratio", series);
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial(dim: usize, kappa: f64) -> Coefficients {
        Coefficients::fixed(
            dim,
            Some(DriftFamily::Radial {
                kappa,
                center: vec![0.0; dim],
            }),
        )
    }

    #[test]
    fn constants_give_unit_parabolic_ratios() {
        let lm = check_parabolic_local_max(
            &ParabolicLocalMaxOptions {
                data: DataKind::Constant,
                trials: 1,
                ladder: vec![1.0 / 8.0],
                ..Default::default()
            },
            1,
        )
        .unwrap();
        for (_, v) in lm.values("constant_scale_1") {
            assert!((v - 1.0).abs() < 1e-8);
        }
        let gr = check_parabolic_growth(
            &ParabolicGrowthOptions {
                data: DataKind::Constant,
                trials: 1,
                ladder: vec![1.0 / 8.0],
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!((gr.value("beta", Some(0.125)).unwrap() - 1.0).abs() < 1e-8);
        let ha = check_parabolic_harnack(
            &ParabolicHarnackOptions {
                data: DataKind::Constant,
                trials: 1,
                ladder: vec![1.0 / 8.0],
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!((ha.value("constant", Some(0.125)).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn parabolic_growth_small() {
        let opts = ParabolicGrowthOptions {
            trials: 4,
            ..Default::default()
        };
        let r = check_parabolic_growth(&opts, 2).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
    }

    #[test]
    fn parabolic_oscillation_small() {
        let opts = ParabolicOscillationOptions {
            trials: 3,
            ..Default::default()
        };
        let r = check_parabolic_oscillation(&opts, 2).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        assert!(r.value("kappa", Some(1.0 / 32.0)).unwrap() < 1.0);
    }

    #[test]
    fn parabolic_max_principle_and_constant_skip() {
        let opts = ParabolicMaxPrincipleOptions {
            trials: 6,
            h: 1.0 / 16.0,
            ..Default::default()
        };
        assert!(check_parabolic_max_principle(&opts, 3).unwrap().passed());
        let flat = ParabolicMaxPrincipleOptions {
            data: DataKind::Constant,
            trials: 2,
            h: 1.0 / 8.0,
            ..Default::default()
        };
        let r = check_parabolic_max_principle(&flat, 3).unwrap();
        assert!(r.trials.iter().all(|t| t.skipped.is_some()));
    }

    #[test]
    fn constant_state_propagates_over_the_whole_window() {
        let opts = MeasurePropagationOptions {
            data: DataKind::Constant,
            bottom_only: false,
            trials: 1,
            ladder: vec![1.0 / 8.0],
            ..Default::default()
        };
        let r = check_measure_propagation(&opts, 1).unwrap();
        assert!((r.value("theta0", Some(0.125)).unwrap() - opts.theta_max).abs() < 1e-9);
        assert_eq!(r.value("s", Some(0.125)), Some(1.0));
    }

    #[test]
    fn inward_drift_compresses_superlevel_sets() {
        let base = MeasurePropagationOptions {
            trials: 4,
            ladder: vec![1.0 / 16.0],
            ..Default::default()
        };
        let free = check_measure_propagation(&base, 6).unwrap();
        let inward = check_measure_propagation(
            &MeasurePropagationOptions {
                coefficients: radial(2, -2.0),
                ..base.clone()
            },
            6,
        )
        .unwrap();
        let t0 = free.value("theta0", Some(1.0 / 16.0)).unwrap();
        let t1 = inward.value("theta0", Some(1.0 / 16.0)).unwrap();
        // div b < 0 contracts area, so the level set in B_R thins out sooner.
        assert!(t1 > 0.0 && t1 <= t0, "{t1} vs {t0}");
    }

    #[test]
    fn vanishing_data_leaves_hypothesis_unmet() {
        let opts = MeasurePropagationOptions {
            data: DataKind::Linear,
            delta0: 1.0,
            trials: 1,
            ladder: vec![1.0 / 8.0],
            ..Default::default()
        };
        let r = check_measure_propagation(&opts, 1).unwrap();
        assert_eq!(r.verdict, Verdict::HypothesisUnmet);
    }

    #[test]
    fn slant_frame_matches_fixed_frame() {
        let opts = SlantFrameOptions {
            ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            ..Default::default()
        };
        let r = check_slant_frame(&opts, 0).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        assert!(r.value("linear_frame_gap", Some(1.0 / 16.0)).unwrap() < 1e-8);
    }

    #[test]
    fn parabolic_liouville_small() {
        let opts = ParabolicLiouvilleOptions {
            trials: 2,
            steps: 1,
            ..Default::default()
        };
        let r = parabolic_liouville_probe(&opts, 1).unwrap();
        assert!(r.value("ratio_step_1", Some(0.25)).unwrap() < 1.0);
    }
}
