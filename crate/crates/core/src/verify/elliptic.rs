use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::data::{trial_rng, Coefficients, DataKind, RandomCoefficients, TrialData};
use super::{
    aggregate, check_ladder, check_trials, fits, fraction_at_least, log_fit, positive, record,
    run_trials, stable_both, stable_max, stable_min, to_json, upper_quantile, Outcome, TINY,
};
use crate::error::{invalid, Error, Result};
use crate::fields::{
    make_drift, validate_divergence, DivergenceOptions, DivergenceReport, DriftFamily, DriftField,
    EllipticTensor,
};
use crate::geometry::{ball_chain, unit_ball_measure, Ball, Grid};
use crate::norms::quantity_n;
use crate::report::{EstimateReport, Extremum, Verdict};
use crate::solver::{assemble_elliptic, residual_check_where, DiscreteField, EllipticSystem};

/// The same system for every trial when the coefficients are fixed.
struct Systems {
    grid: Arc<Grid>,
    shared: Option<EllipticSystem>,
}

impl Systems {
    fn new(coefficients: &Coefficients, ball: &Ball, h: f64) -> Result<Systems> {
        let grid = Arc::new(Grid::new(ball, h)?);
        let shared = match coefficients.resolve_fixed()? {
            Some((a, b)) => Some(EllipticSystem::new(&a, &b, Arc::clone(&grid))?),
            None => None,
        };
        Ok(Systems { grid, shared })
    }

    /// Run `f` on the shared system, or on one built from `a` and `b`.
    fn with<T>(
        &self,
        a: &EllipticTensor,
        b: &DriftField,
        f: impl FnOnce(&EllipticSystem) -> Result<T>,
    ) -> Result<T> {
        match &self.shared {
            Some(s) => f(s),
            None => f(&EllipticSystem::new(a, b, Arc::clone(&self.grid))?),
        }
    }
}

fn sup_plus(u: &DiscreteField, ball: &Ball) -> Result<f64> {
    Ok(u.extremes_in(ball).ok_or(Error::EmptyRegion)?.1.max(0.0))
}

fn osc(u: &DiscreteField, ball: &Ball) -> Result<f64> {
    let (lo, hi) = u.extremes_in(ball).ok_or(Error::EmptyRegion)?;
    Ok(hi - lo)
}

fn values_in(u: &DiscreteField, ball: &Ball) -> Vec<f64> {
    u.grid()
        .nodes_in(ball)
        .iter()
        .map(|&id| u.value(id))
        .collect()
}

fn default_coefficients() -> Coefficients {
    Coefficients::fixed(2, None)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalMaxOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    pub lambda: f64,
    pub ladder: Vec<f64>,
    /// Multipliers of the radius; drift and tensor are rescaled so `𝒩` is fixed.
    pub scales: Vec<f64>,
    pub slack: f64,
    pub scale_slack: f64,
}

impl Default for LocalMaxOptions {
    fn default() -> Self {
        LocalMaxOptions {
            coefficients: default_coefficients(),
            data: DataKind::Signed,
            trials: 20,
            radius: 0.5,
            lambda: 2.0,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            scales: vec![0.5, 1.0, 2.0],
            slack: 0.1,
            scale_slack: 0.05,
        }
    }
}

impl LocalMaxOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        if !(self.lambda > 1.0) {
            return Err(invalid("lambda", "must exceed 1"));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("scales", "must be nonempty and positive"));
        }
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], self.lambda * self.radius)?;
        Ok(())
    }
}

/// `sup_{B_R} u₊ / (mean over B_{λR} of u₊²)^{1/2}`, maximized over trials.
pub fn check_local_max(opts: &LocalMaxOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("local-max", "elliptic", seed, to_json(opts));
    report.rule = format!(
        "constant within {}% under refinement and within {}% across the scaling family",
        opts.slack * 100.0,
        opts.scale_slack * 100.0
    );
    let base = Ball::centered(dim, opts.lambda * opts.radius)?;
    let mut by_scale: Vec<Vec<f64>> = vec![Vec::new(); opts.scales.len()];
    let mut by_h: Vec<Vec<f64>> = Vec::new();
    for &h in &opts.ladder {
        let mut row = Vec::new();
        for (si, &s) in opts.scales.iter().enumerate() {
            let domain = Ball::centered(dim, s * opts.lambda * opts.radius)?;
            let inner = Ball::centered(dim, s * opts.radius)?;
            let grid = Arc::new(Grid::new(&domain, s * h)?);
            let shared = match opts.coefficients.resolve_fixed()? {
                Some((a, b)) => Some(scaled_system(&a, &b, s, &grid)?),
                None => None,
            };
            let outcomes = run_trials(opts.trials, |i| {
                let mut rng = trial_rng(seed, i);
                let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &base)?;
                let g = TrialData::draw(opts.data, &base, false, &mut rng);
                let own;
                let sys = match &shared {
                    Some(sys) => sys,
                    None => {
                        own = scaled_system(&a, &b, s, &grid)?;
                        &own
                    }
                };
                let u = sys.solve(|x| g.eval(&x.map(|c| c / s), 0.0))?.solution;
                let den = u
                    .mean_in(&domain, |v| v.max(0.0).powi(2))
                    .ok_or(Error::EmptyRegion)?
                    .sqrt();
                if den < TINY {
                    return Ok(Outcome::skip(
                        "mean square of the positive part below 1e-14",
                    ));
                }
                Ok(Outcome::with(vec![("ratio", sup_plus(&u, &inner)? / den)]))
            })?;
            record(&mut report, s * h, &outcomes);
            let name = format!("constant_scale_{s}");
            match aggregate(
                &mut report,
                &name,
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
    if !scaling_ok {
        report
            .notes
            .push("constants differ across the scaling family".into());
    }
    Ok(report)
}

/// The system for `x ↦ a(x/s)`, `x ↦ b(x/s)/s`.
fn scaled_system(
    a: &EllipticTensor,
    b: &DriftField,
    s: f64,
    grid: &Arc<Grid>,
) -> Result<EllipticSystem> {
    if s == 1.0 {
        EllipticSystem::new(a, b, Arc::clone(grid))
    } else {
        EllipticSystem::new(
            &a.rescaled(1.0 / s),
            &b.rescaled(1.0 / s)?,
            Arc::clone(grid),
        )
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    pub lambda: f64,
    /// Measure fraction `δ` of `{V ≥ k}` in `B_R`.
    pub delta: f64,
    /// Fixed level `k`; when absent each trial uses the largest `k` meeting the hypothesis.
    pub level: Option<f64>,
    /// Add a nonnegative forcing so trials are strict supersolutions.
    pub forcing: bool,
    pub ladder: Vec<f64>,
    pub slack: f64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            coefficients: default_coefficients(),
            data: DataKind::Bumps,
            trials: 20,
            radius: 0.5,
            lambda: 2.0,
            delta: 0.25,
            level: None,
            forcing: false,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            slack: 0.1,
        }
    }
}

impl GrowthOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("delta", "must lie in ]0, 1]"));
        }
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], self.lambda * self.radius)?;
        Ok(())
    }
}

/// `inf_{B_R} V / k` over nonnegative supersolutions with `meas{V ≥ k} ≥ δ meas B_R`.
pub fn check_growth_lemma(opts: &GrowthOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("growth", "elliptic", seed, to_json(opts));
    report.rule = format!(
        "beta positive at every resolution and not shrinking by more than {}% under refinement",
        opts.slack * 100.0
    );
    let domain = Ball::centered(dim, opts.lambda * opts.radius)?;
    let inner = Ball::centered(dim, opts.radius)?;
    let mut betas = Vec::new();
    for &h in &opts.ladder {
        let systems = Systems::new(&opts.coefficients, &domain, h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &domain)?;
            let g = TrialData::draw(opts.data, &domain, false, &mut rng);
            let f = TrialData::draw(DataKind::InteriorBumps, &domain, false, &mut rng);
            let u = systems.with(&a, &b, |sys| {
                if opts.forcing {
                    sys.solve_forced(|x| g.eval(x, 0.0), |x| f.eval(x, 0.0))
                } else {
                    sys.solve(|x| g.eval(x, 0.0))
                }
            })?;
            let v = values_in(&u.solution, &inner);
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
            let inf = v.iter().cloned().fold(f64::INFINITY, f64::min);
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
                    "no trial met meas{{V >= k}} >= {} meas(B_R) at h = {h}; widen data family",
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
pub struct OscillationOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    /// `R`: the ratio compares `B_R` with `B_{3R}`.
    pub radius: f64,
    pub ladder: Vec<f64>,
    /// Pass requires every ratio at most `1 − η`.
    pub eta: f64,
    pub slack: f64,
    /// Required `R²` of the Hölder regression.
    pub min_r2: f64,
    /// Exponent for the reported `𝒩` (defaults to `3n/4`).
    pub q: Option<f64>,
}

impl Default for OscillationOptions {
    fn default() -> Self {
        OscillationOptions {
            coefficients: default_coefficients(),
            data: DataKind::Signed,
            trials: 50,
            radius: 1.0 / 3.0,
            ladder: vec![1.0 / 32.0, 1.0 / 64.0],
            eta: 0.05,
            slack: 0.1,
            min_r2: 0.9,
            q: None,
        }
    }
}

impl OscillationOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        self.coefficients.validate()?;
        self.coefficients.check_q(self.q, false)?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], 3.0 * self.radius)?;
        Ok(())
    }
}

/// `osc_{B_R} u / osc_{B_{3R}} u` maximized over trials, and a Hölder
/// exponent fitted to the oscillation envelope over dyadic balls.
pub fn check_oscillation_decay(opts: &OscillationOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let q = opts.q.unwrap_or(0.75 * dim as f64);
    let mut report = EstimateReport::new("oscillation-decay", "elliptic", seed, to_json(opts));
    report.rule = format!(
        "ratio at most {} at every resolution, growing by at most {}% under refinement; \
         fitted Hoelder exponent positive with R^2 at least {}",
        1.0 - opts.eta,
        opts.slack * 100.0,
        opts.min_r2
    );
    let domain = Ball::centered(dim, 3.0 * opts.radius)?;
    let inner = Ball::centered(dim, opts.radius)?;
    let finest = *opts.ladder.last().expect("ladder checked");
    let mut radii = Vec::new();
    let mut rho = domain.radius;
    while rho >= 4.0 * finest - 1e-12 {
        radii.push(rho);
        rho /= 2.0;
    }
    let mut kappas = Vec::new();
    let mut envelope = vec![0.0f64; radii.len()];
    for &h in &opts.ladder {
        let systems = Systems::new(&opts.coefficients, &domain, h)?;
        let fit_here = h == finest;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &domain)?;
            let g = TrialData::draw(opts.data, &domain, false, &mut rng);
            let u = systems
                .with(&a, &b, |sys| sys.solve(|x| g.eval(x, 0.0)))?
                .solution;
            let big = osc(&u, &domain)?;
            if big < TINY {
                return Ok((Outcome::skip("constant solution"), Vec::new()));
            }
            let n = quantity_n(&b, &vec![0.0; dim], opts.radius, 3.0, q, h)?;
            let ratio = osc(&u, &inner)? / big;
            let profile = if fit_here {
                radii
                    .iter()
                    .map(|&r| Ok(osc(&u, &Ball::centered(dim, r)?)? / big))
                    .collect::<Result<Vec<f64>>>()?
            } else {
                Vec::new()
            };
            Ok((
                Outcome::with(vec![("ratio", ratio), ("drift_n", n)]),
                profile,
            ))
        })?;
        let (outcomes, profiles): (Vec<Outcome>, Vec<Vec<f64>>) = outcomes.into_iter().unzip();
        record(&mut report, h, &outcomes);
        aggregate(
            &mut report,
            "drift_n",
            Some(h),
            &outcomes,
            "drift_n",
            Extremum::Max,
        );
        match aggregate(
            &mut report,
            "kappa",
            Some(h),
            &outcomes,
            "ratio",
            Extremum::Max,
        ) {
            Some(k) => kappas.push(k),
            None => report
                .notes
                .push(format!("every trial constant at h = {h}")),
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
            .map(|(r, o)| (r.ln(), o.max(TINY).ln()))
            .collect(),
    );
    let fit = log_fit(&points);
    let (gamma, r2) = fit.map_or((f64::NAN, f64::NAN), |(s, _, r2)| (s, r2));
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
pub struct HarnackOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    /// `R`: solutions live in `B_{2R}`, the quotient is taken over `B_R`.
    pub radius: f64,
    pub ladder: Vec<f64>,
    pub slack: f64,
    /// Optional absolute bound on the constant.
    pub bound: Option<f64>,
}

impl Default for HarnackOptions {
    fn default() -> Self {
        HarnackOptions {
            coefficients: Coefficients::fixed(3, None),
            data: DataKind::PoissonKernel,
            trials: 50,
            radius: 0.5,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            slack: 0.1,
            bound: None,
        }
    }
}

/// Weak divergence against hats of two cells on a grid of 16 cells per radius.
pub(crate) fn divergence_probe(b: &DriftField, domain: &Ball) -> Result<DivergenceReport> {
    let grid = Grid::new(domain, domain.radius / 16.0)?;
    let opts = DivergenceOptions {
        half_width_cells: 2,
        ..Default::default()
    };
    validate_divergence(b, &grid, &opts)
}

fn harnack_quotient(u: &DiscreteField, ball: &Ball) -> Result<f64> {
    let (lo, hi) = u.extremes_in(ball).ok_or(Error::EmptyRegion)?;
    Ok(if lo < TINY { f64::INFINITY } else { hi / lo })
}

impl HarnackOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], 2.0 * self.radius)?;
        Ok(())
    }
}

/// `sup_{B_R} u / inf_{B_R} u` over nonnegative solutions in `B_{2R}`.
pub fn check_harnack(opts: &HarnackOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("harnack", "elliptic", seed, to_json(opts));
    report.rule = format!(
        "constant finite and growing by at most {}% under refinement{}",
        opts.slack * 100.0,
        opts.bound
            .map_or(String::new(), |b| format!(", and at most {b}"))
    );
    let domain = Ball::centered(dim, 2.0 * opts.radius)?;
    let inner = Ball::centered(dim, opts.radius)?;
    let fixed = opts.coefficients.resolve_fixed()?;
    // For the Laplacian with Poisson-kernel data the data is the exact solution.
    let oracle = opts.data == DataKind::PoissonKernel
        && fixed
            .as_ref()
            .is_some_and(|(a, b)| a.is_identity() && b.is_zero());
    if let Some((_, b)) = &fixed {
        if divergence_probe(b, &domain)?.structure_violated {
            report.notes.push("drift violates div b <= 0".into());
        }
    }
    let mut constants = Vec::new();
    for &h in &opts.ladder {
        let systems = Systems::new(&opts.coefficients, &domain, h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &domain)?;
            let g = TrialData::draw(opts.data, &domain, false, &mut rng);
            let u = systems
                .with(&a, &b, |sys| sys.solve(|x| g.eval(x, 0.0)))?
                .solution;
            let mut values = vec![("quotient", harnack_quotient(&u, &inner)?)];
            if oracle {
                let exact = DiscreteField::from_fn(u.grid_arc(), |x| g.eval(x, 0.0));
                values.push(("oracle_quotient", harnack_quotient(&exact, &inner)?));
                let top = g.sample_max(&domain, 0.0).max(TINY);
                values.push(("oracle_error", u.max_abs_error(|x| g.eval(x, 0.0)) / top));
            }
            Ok(Outcome::with(values))
        })?;
        record(&mut report, h, &outcomes);
        if oracle {
            aggregate(
                &mut report,
                "oracle_constant",
                Some(h),
                &outcomes,
                "oracle_quotient",
                Extremum::Max,
            );
            aggregate(
                &mut report,
                "oracle_error",
                Some(h),
                &outcomes,
                "oracle_error",
                Extremum::Max,
            );
        }
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleOptions {
    pub dim: usize,
    /// `b = κ x/|x|²`; the candidate `u = |x|^{κ−n+2}` needs `κ > n − 2`.
    pub kappa: f64,
    /// Quotient over `B_R`, residual over `B_{2R}`.
    pub radius: f64,
    pub quotient_ladder: Vec<f64>,
    pub residual_ladder: Vec<f64>,
    /// Residuals are measured at `|x| ≥ r_min`.
    pub r_min: f64,
    /// Required growth of the quotient from the first to the last resolution.
    pub growth: f64,
    /// Required residual reduction per halving of `h`.
    pub residual_reduction: f64,
}

impl Default for CounterexampleOptions {
    fn default() -> Self {
        CounterexampleOptions {
            dim: 3,
            kappa: 2.0,
            radius: 1.0,
            quotient_ladder: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            residual_ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            r_min: 0.25,
            growth: 2.0,
            residual_reduction: 1.8,
        }
    }
}

impl CounterexampleOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.quotient_ladder)?;
        check_ladder(&self.residual_ladder)?;
        positive("radius", self.radius)?;
        if !(self.kappa - self.dim as f64 + 2.0 > 0.0) {
            return Err(invalid(
                "kappa",
                format!("{} must exceed n - 2 for a vanishing candidate", self.kappa),
            ));
        }
        fits("quotient_ladder", self.quotient_ladder[0], self.radius)?;
        fits(
            "residual_ladder",
            self.residual_ladder[0],
            2.0 * self.radius,
        )?;
        Ok(())
    }
}

/// Harnack for a drift with `div b > 0`: the exact nonnegative solution
/// `u = |x|^{κ−n+2}` of `−Δu + κ x·Du/|x|² = 0` vanishes at the origin, so
/// the quotient over grid nodes grows without bound under refinement.
///
/// The verdict is `Fail` when the divergence is demonstrated: the candidate
/// is certified by its residual and the quotient grows by the required
/// factor. The report is marked as an expected failure.
pub fn check_harnack_counterexample(
    opts: &CounterexampleOptions,
    seed: u64,
) -> Result<EstimateReport> {
    opts.validate()?;
    let p = opts.kappa - opts.dim as f64 + 2.0;
    if !(p > 0.0) {
        return Err(invalid(
            "kappa",
            format!("{} must exceed n - 2 for a vanishing candidate", opts.kappa),
        ));
    }
    let mut report = EstimateReport::new("harnack", "elliptic", seed, to_json(opts));
    report.expect_fail = true;
    report.rule = format!(
        "expected failure: residual of |x|^{p} falls by {}x per halving of h at |x| >= {}, \
         and the quotient grows by at least {}x over the ladder",
        opts.residual_reduction, opts.r_min, opts.growth
    );
    let b = make_drift(DriftFamily::Radial {
        kappa: opts.kappa,
        center: vec![0.0; opts.dim],
    })?;
    let a = EllipticTensor::identity(opts.dim);
    let domain = Ball::centered(opts.dim, 2.0 * opts.radius)?;
    let inner = Ball::centered(opts.dim, opts.radius)?;
    let candidate = |x: &[f64; 3]| {
        x[..opts.dim]
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
            .powf(p)
    };

    let div = divergence_probe(&b, &domain)?;
    report.measure("divergence_max_pairing", None, div.max, Extremum::Max);
    if div.structure_violated {
        report
            .notes
            .push("structure condition violated: div b > 0 away from the origin".into());
    }

    let mut residuals = Vec::new();
    for &h in &opts.residual_ladder {
        let grid = Arc::new(Grid::new(&domain, h)?);
        let op = assemble_elliptic(&a, &b, &grid, 0.0)?;
        let u = DiscreteField::from_fn(Arc::clone(&grid), candidate);
        let r = residual_check_where(&op, &u, |x| {
            x[..opts.dim].iter().map(|c| c * c).sum::<f64>().sqrt() >= opts.r_min
        });
        report.measure("residual", Some(h), r, Extremum::Max);
        residuals.push(r);
    }
    let certified = residuals
        .windows(2)
        .all(|w| w[0] >= opts.residual_reduction * w[1]);
    report.measure(
        "residual_certified",
        None,
        if certified { 1.0 } else { 0.0 },
        Extremum::Fit,
    );

    let mut quotients = Vec::new();
    for &h in &opts.quotient_ladder {
        // The candidate is evaluated on the node lattice; no solve is needed.
        let grid = Grid::new(&inner, h)?;
        let u = DiscreteField::from_fn(Arc::new(grid), candidate);
        let q = harnack_quotient(&u, &inner)?;
        report.measure("constant", Some(h), q, Extremum::Max);
        quotients.push(q);
    }
    report.push_series(
        "quotient",
        "1/h",
        "quotient",
        opts.quotient_ladder
            .iter()
            .map(|h| 1.0 / h)
            .zip(quotients.iter().cloned())
            .collect(),
    );
    let growth = quotients.last().expect("ladder") / quotients[0];
    report.measure("quotient_growth", None, growth, Extremum::Fit);
    let diverges = certified && growth >= opts.growth;
    report.verdict = if diverges {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    if !certified {
        report
            .notes
            .push("candidate residual did not decrease as required".into());
    }
    report.notes.push(
        "the discrete Dirichlet problem with the candidate's constant boundary value has the constant solution; \
         the quotient is measured on the certified candidate"
            .into(),
    );
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxPrincipleOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    pub radius: f64,
    pub ladder: Vec<f64>,
}

impl Default for MaxPrincipleOptions {
    fn default() -> Self {
        MaxPrincipleOptions {
            coefficients: Coefficients::Random(RandomCoefficients {
                dim: 2,
                random_tensor: true,
                drift_amplitude: 200.0,
                structure: false,
                max_n: None,
                q: None,
            }),
            data: DataKind::Signed,
            trials: 100,
            radius: 1.0,
            ladder: vec![1.0 / 32.0],
        }
    }
}

impl MaxPrincipleOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        fits("ladder", self.ladder[0], self.radius)?;
        Ok(())
    }
}

/// `min g < u < max g` at interior nodes, for nonconstant data.
pub fn check_max_principle(opts: &MaxPrincipleOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let mut report = EstimateReport::new("max-principle", "elliptic", seed, to_json(opts));
    report.rule =
        "no interior node at or below the boundary minimum, none above the boundary maximum".into();
    let domain = Ball::centered(dim, opts.radius)?;
    let mut violations = 0.0;
    for &h in &opts.ladder {
        let systems = Systems::new(&opts.coefficients, &domain, h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, opts.radius, &domain)?;
            let g = TrialData::draw(opts.data, &domain, false, &mut rng);
            let r = systems.with(&a, &b, |sys| sys.solve(|x| g.eval(x, 0.0)))?;
            let (gmin, gmax) = r.solution.boundary_extremes();
            if gmax - gmin < 1e-12 {
                return Ok(Outcome::skip("constant data"));
            }
            let (umin, umax) = r.solution.interior_extremes();
            let weak = (umin < gmin || umax > gmax) as u8 as f64;
            let strict = (umin <= gmin) as u8 as f64;
            Ok(Outcome::with(vec![
                ("violation", weak.max(strict)),
                ("margin", (umin - gmin) / (gmax - gmin)),
                ("peclet", r.scheme.max_peclet),
                ("upwind_faces", r.scheme.upwind_faces as f64),
            ]))
        })?;
        record(&mut report, h, &outcomes);
        let count: f64 = outcomes.iter().filter_map(|o| o.get("violation")).sum();
        report.measure("violations", Some(h), count, Extremum::Max);
        aggregate(
            &mut report,
            "margin",
            Some(h),
            &outcomes,
            "margin",
            Extremum::Min,
        );
        aggregate(
            &mut report,
            "peclet",
            Some(h),
            &outcomes,
            "peclet",
            Extremum::Max,
        );
        let upwinded = outcomes
            .iter()
            .filter(|o| o.get("upwind_faces").is_some_and(|v| v > 0.0))
            .count();
        report.measure(
            "trials_with_upwind",
            Some(h),
            upwinded as f64,
            Extremum::Max,
        );
        violations += count;
    }
    report.verdict = if violations == 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainOptions {
    pub coefficients: Coefficients,
    pub data: DataKind,
    pub trials: usize,
    /// `R`: solutions in `B_{2R}`, infimum over `B_R`.
    pub radius: f64,
    pub ladder: Vec<f64>,
    /// Smallest `ρ` as a multiple of `h` at the finest resolution.
    pub min_rho_cells: f64,
    pub slack: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            coefficients: default_coefficients(),
            data: DataKind::Bumps,
            trials: 10,
            radius: 1.0,
            ladder: vec![1.0 / 32.0, 1.0 / 64.0],
            min_rho_cells: 2.0,
            slack: 0.1,
        }
    }
}

impl ChainOptions {
    pub fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        check_trials(self.trials)?;
        self.coefficients.validate()?;
        positive("radius", self.radius)?;
        if self.rhos().len() < 2 {
            return Err(invalid("ladder", "too coarse for two dyadic values of rho"));
        }
        fits("ladder", self.ladder[0], 2.0 * self.radius)?;
        Ok(())
    }

    /// Dyadic `ρ` from `R/4` down to `min_rho_cells` cells of the finest grid.
    fn rhos(&self) -> Vec<f64> {
        let finest = self.ladder.last().copied().unwrap_or(f64::INFINITY);
        let mut rhos = Vec::new();
        let mut rho = self.radius / 4.0;
        while rho >= self.min_rho_cells * finest - 1e-12 && rho > 0.0 {
            rhos.push(rho);
            rho /= 2.0;
        }
        rhos
    }
}

/// `inf_{B_R} V / inf_{B_ρ(y)} V` for `y` at distance `4ρ` from `∂B_{2R}`,
/// with the ball chain certified for each `ρ`; fits `β̂ (ρ/R)^γ̂`.
pub fn check_chain_propagation(opts: &ChainOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let r = opts.radius;
    let mut report = EstimateReport::new("chain", "elliptic", seed, to_json(opts));
    report.rule = format!(
        "every chain certified, empirical beta positive for every rho and shrinking by at most {}% under refinement",
        opts.slack * 100.0
    );
    let domain = Ball::centered(dim, 2.0 * r)?;
    let inner = Ball::centered(dim, r)?;
    let rhos = opts.rhos();
    let mut chains_ok = true;
    let mut per_h_min = Vec::new();
    for &h in &opts.ladder {
        let systems = Systems::new(&opts.coefficients, &domain, h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(&mut rng, r, &domain)?;
            let g = TrialData::draw(opts.data, &domain, false, &mut rng);
            let e = {
                let mut e = vec![0.0; dim];
                let angle: f64 = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
                e[0] = angle.cos();
                e[1] = angle.sin();
                e
            };
            let u = systems
                .with(&a, &b, |sys| sys.solve(|x| g.eval(x, 0.0)))?
                .solution;
            let inf_r = u.extremes_in(&inner).ok_or(Error::EmptyRegion)?.0;
            let mut ratios = Vec::new();
            let mut ok = true;
            for &rho in &rhos {
                let y: Vec<f64> = e.iter().map(|c| c * (2.0 * r - 4.0 * rho)).collect();
                let plan = ball_chain(&y, rho, r)?;
                ok &= plan.all_contained();
                let k = u
                    .extremes_in(&Ball::new(y, rho)?)
                    .ok_or(Error::EmptyRegion)?
                    .0;
                ratios.push(if k > TINY { inf_r / k } else { f64::NAN });
            }
            Ok((ratios, ok))
        })?;
        let mut trial_outcomes = Vec::new();
        for (ratios, ok) in &outcomes {
            chains_ok &= *ok;
            let mut o = Outcome::default();
            if ratios.iter().any(|v| !v.is_finite()) {
                o.skipped = Some("infimum over the small ball below 1e-14".into());
            } else {
                o.values = ratios
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (RHO_KEYS[j.min(RHO_KEYS.len() - 1)], *v))
                    .collect();
            }
            trial_outcomes.push(o);
        }
        record(&mut report, h, &trial_outcomes);
        let mut betas = Vec::new();
        for (j, &rho) in rhos.iter().enumerate() {
            let key = RHO_KEYS[j.min(RHO_KEYS.len() - 1)];
            if let Some(beta) = aggregate(
                &mut report,
                &format!("beta_rho_{rho}"),
                Some(h),
                &trial_outcomes,
                key,
                Extremum::Min,
            ) {
                betas.push((rho / r, beta));
            }
        }
        if betas.len() != rhos.len() {
            per_h_min.push(0.0);
            continue;
        }
        if let Some((slope, intercept, r2)) = log_fit(&betas) {
            report.measure("gamma_hat", Some(h), slope, Extremum::Fit);
            report.measure("beta_hat", Some(h), intercept.exp(), Extremum::Fit);
            report.measure("fit_r2", Some(h), r2, Extremum::Fit);
        }
        report.push_series(&format!("chain_h_{h}"), "rho/R", "inf ratio", betas.clone());
        per_h_min.push(betas.iter().map(|b| b.1).fold(f64::INFINITY, f64::min));
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

const RHO_KEYS: [&str; 8] = [
    "ratio_0", "ratio_1", "ratio_2", "ratio_3", "ratio_4", "ratio_5", "ratio_6", "ratio_7",
];

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleOptions {
    pub coefficients: Coefficients,
    /// Boundary data, normalized into `[0, 1]`.
    pub data: DataKind,
    pub trials: usize,
    /// Radius of the fixed window.
    pub window: f64,
    /// `R_m = window · base^m`.
    pub base: f64,
    pub steps: usize,
    /// Absolute mesh size, the same at every scale.
    pub h: f64,
    /// Per-step decay factor; pass requires `osc(window)/osc(B_{R_m}) ≤ κ^m`.
    pub kappa: f64,
    pub node_budget: usize,
    /// Exponent for the reported `𝒩(R_m, 1)` sequence (defaults to `3n/4`).
    pub q: Option<f64>,
}

impl Default for LiouvilleOptions {
    fn default() -> Self {
        LiouvilleOptions {
            coefficients: default_coefficients(),
            data: DataKind::Bumps,
            trials: 8,
            window: 1.0,
            base: 3.0,
            steps: 3,
            h: 1.0 / 8.0,
            kappa: 0.95,
            node_budget: 2_000_000,
            q: None,
        }
    }
}

pub(crate) fn check_budget(nodes: f64, budget: usize) -> Result<()> {
    if nodes > budget as f64 {
        Err(Error::NodeBudget {
            nodes: nodes as usize,
            budget,
        })
    } else {
        Ok(())
    }
}

impl LiouvilleOptions {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        if !(self.base > 1.0) {
            return Err(invalid("base", "must exceed 1"));
        }
        self.coefficients.validate()?;
        self.coefficients.check_q(self.q, false)?;
        positive("h", self.h)?;
        positive("window", self.window)?;
        fits("h", self.h, self.window)?;
        let dim = self.coefficients.dim();
        let outer = self.window * self.base.powi(self.steps as i32);
        check_budget(
            unit_ball_measure(dim) * (outer / self.h).powi(dim as i32),
            self.node_budget,
        )?;
        Ok(())
    }
}

/// Bounded data in `[0, 1]` on `∂B_{R_m}` for growing `R_m`; the oscillation
/// over the fixed window relative to the data's must decay like `κ^m`.
pub fn liouville_probe(opts: &LiouvilleOptions, seed: u64) -> Result<EstimateReport> {
    opts.validate()?;
    let dim = opts.coefficients.dim();
    let q = opts.q.unwrap_or(0.75 * dim as f64);
    let mut report = EstimateReport::new("liouville", "elliptic", seed, to_json(opts));
    report.rule = format!(
        "window oscillation ratio at most {}^m after m scale steps, no maximum principle violation",
        opts.kappa
    );
    let radii: Vec<f64> = (0..=opts.steps)
        .map(|m| opts.window * opts.base.powi(m as i32))
        .collect();
    for &rm in &radii {
        check_budget(
            unit_ball_measure(dim) * (rm / opts.h).powi(dim as i32),
            opts.node_budget,
        )?;
    }
    let window = Ball::centered(dim, opts.window)?;
    let mut pass = true;
    let mut violations = 0.0;
    let mut series = Vec::new();
    for (m, &rm) in radii.iter().enumerate() {
        let domain = Ball::centered(dim, rm)?;
        let systems = Systems::new(&opts.coefficients, &domain, opts.h)?;
        let outcomes = run_trials(opts.trials, |i| {
            let mut rng = trial_rng(seed, i);
            let (a, b) = opts.coefficients.draw(
                &mut rng,
                opts.window,
                &Ball::centered(dim, opts.window)?,
            )?;
            let g = TrialData::draw(opts.data, &domain, false, &mut rng);
            let top = g.sample_max(&domain, 0.0).max(TINY);
            let u = systems.with(&a, &b, |sys| {
                sys.solve(|x| (g.eval(x, 0.0) / top).clamp(0.0, 1.0))
            })?;
            let big = osc(&u.solution, &domain)?;
            if big < TINY {
                return Ok(Outcome::skip("constant data"));
            }
            let n = quantity_n(&b, &vec![0.0; dim], rm, 1.0, q, rm / 16.0)?;
            let (gmin, gmax) = u.solution.boundary_extremes();
            let (umin, umax) = u.solution.interior_extremes();
            Ok(Outcome::with(vec![
                ("ratio", osc(&u.solution, &window)? / big),
                ("window_osc", osc(&u.solution, &window)?),
                ("drift_n", n),
                (
                    "max_principle_violation",
                    (umin < gmin || umax > gmax) as u8 as f64,
                ),
            ]))
        })?;
        record(&mut report, opts.h, &outcomes);
        let name = format!("ratio_step_{m}");
        let ratio = aggregate(
            &mut report,
            &name,
            Some(opts.h),
            &outcomes,
            "ratio",
            Extremum::Max,
        );
        aggregate(
            &mut report,
            &format!("drift_n_step_{m}"),
            Some(opts.h),
            &outcomes,
            "drift_n",
            Extremum::Max,
        );
        if let Some(ratio) = ratio {
            series.push((rm, ratio));
            if m > 0 && ratio > opts.kappa.powi(m as i32) {
                pass = false;
            }
        }
        violations += outcomes
            .iter()
            .filter_map(|o| o.get("max_principle_violation"))
            .sum::<f64>();
    }
    report.measure("max_principle_violations", None, violations, Extremum::Max);
    pass &= violations == 0.0;
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
    fn constants_give_unit_local_max_ratio() {
        let opts = LocalMaxOptions {
            data: DataKind::Constant,
            trials: 2,
            ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            ..Default::default()
        };
        let r = check_local_max(&opts, 1).unwrap();
        for (_, v) in r.values("constant_scale_1") {
            assert!((v - 1.0).abs() < 1e-8);
        }
        assert!(r.passed());
    }

    #[test]
    fn local_max_random_data_small() {
        let opts = LocalMaxOptions {
            trials: 4,
            ..Default::default()
        };
        let r = check_local_max(&opts, 11).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        assert!(r.value("constant_scale_1", Some(1.0 / 32.0)).unwrap() >= 1.0);
    }

    #[test]
    fn constants_give_unit_beta() {
        let opts = GrowthOptions {
            data: DataKind::Constant,
            trials: 2,
            ladder: vec![1.0 / 8.0],
            ..Default::default()
        };
        let r = check_growth_lemma(&opts, 1).unwrap();
        assert!((r.value("beta", Some(0.125)).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inward_radial_drift_keeps_beta_positive() {
        let opts = GrowthOptions {
            coefficients: radial(2, -1.0),
            trials: 6,
            ladder: vec![1.0 / 16.0, 1.0 / 32.0],
            ..Default::default()
        };
        let r = check_growth_lemma(&opts, 3).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        assert!(r.value("beta", Some(1.0 / 32.0)).unwrap() > 0.0);
    }

    #[test]
    fn unreachable_level_reports_hypothesis() {
        let opts = GrowthOptions {
            trials: 2,
            ladder: vec![1.0 / 8.0],
            level: Some(1e6),
            ..Default::default()
        };
        assert!(matches!(
            check_growth_lemma(&opts, 1),
            Err(Error::HypothesisNeverSatisfied(_))
        ));
    }

    #[test]
    fn linear_solution_has_radius_ratio() {
        let opts = OscillationOptions {
            data: DataKind::Linear,
            trials: 1,
            ladder: vec![1.0 / 32.0],
            ..Default::default()
        };
        let r = check_oscillation_decay(&opts, 1).unwrap();
        let kappa = r.value("kappa", Some(1.0 / 32.0)).unwrap();
        assert!((kappa - 1.0 / 3.0).abs() < 1.0 / 32.0, "{kappa}");
        let gamma = r.value("gamma", Some(1.0 / 32.0)).unwrap();
        assert!((gamma - 1.0).abs() < 0.1, "{gamma}");
    }

    #[test]
    fn constant_solutions_skip_oscillation() {
        let opts = OscillationOptions {
            data: DataKind::Constant,
            trials: 2,
            ladder: vec![1.0 / 16.0],
            ..Default::default()
        };
        let r = check_oscillation_decay(&opts, 1).unwrap();
        assert!(r.trials.iter().all(|t| t.skipped.is_some()));
        assert!(!r.passed());
    }

    #[test]
    fn constants_give_unit_harnack_quotient() {
        let opts = HarnackOptions {
            coefficients: Coefficients::fixed(2, None),
            data: DataKind::Constant,
            trials: 2,
            ladder: vec![1.0 / 8.0],
            ..Default::default()
        };
        let r = check_harnack(&opts, 1).unwrap();
        assert!((r.value("constant", Some(0.125)).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn harnack_2d_within_poisson_bound() {
        let opts = HarnackOptions {
            coefficients: Coefficients::fixed(2, None),
            trials: 8,
            bound: Some(9.0 * 1.1),
            ..Default::default()
        };
        let r = check_harnack(&opts, 4).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        assert!(r.value("oracle_error", Some(1.0 / 32.0)).unwrap() < 0.05);
    }

    #[test]
    fn inward_radial_drift_keeps_harnack_stable() {
        let opts = HarnackOptions {
            coefficients: radial(3, -2.0),
            data: DataKind::Mixture,
            trials: 3,
            ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            slack: 0.25,
            ..Default::default()
        };
        let r = check_harnack(&opts, 2).unwrap();
        assert!(r.notes.iter().all(|n| !n.contains("violates")));
        assert!(r.passed(), "{:?}", r.measurements);
    }

    #[test]
    fn outward_radial_drift_is_expected_to_fail() {
        let opts = CounterexampleOptions {
            quotient_ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            residual_ladder: vec![1.0 / 8.0, 1.0 / 16.0],
            r_min: 0.5,
            ..Default::default()
        };
        let r = check_harnack_counterexample(&opts, 0).unwrap();
        assert!(r.expect_fail);
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.acceptable());
    }

    #[test]
    fn max_principle_holds_for_random_coefficients() {
        let opts = MaxPrincipleOptions {
            trials: 10,
            ladder: vec![1.0 / 16.0],
            ..Default::default()
        };
        let r = check_max_principle(&opts, 9).unwrap();
        assert!(r.passed(), "{:?}", r.measurements);
        assert!(r.value("margin", Some(1.0 / 16.0)).unwrap() > 0.0);
    }

    #[test]
    fn constant_data_skips_max_principle() {
        let opts = MaxPrincipleOptions {
            data: DataKind::Constant,
            trials: 3,
            ladder: vec![1.0 / 8.0],
            ..Default::default()
        };
        let r = check_max_principle(&opts, 9).unwrap();
        assert!(r.trials.iter().all(|t| t.skipped.is_some()));
    }

    #[test]
    fn constants_propagate_along_chains() {
        let opts = ChainOptions {
            data: DataKind::Constant,
            trials: 1,
            ladder: vec![1.0 / 32.0],
            ..Default::default()
        };
        let r = check_chain_propagation(&opts, 1).unwrap();
        assert!(r.value("gamma_hat", Some(1.0 / 32.0)).unwrap().abs() < 1e-8);
        assert!((r.value("beta_hat", Some(1.0 / 32.0)).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn liouville_constant_data_and_budget() {
        let opts = LiouvilleOptions {
            trials: 2,
            steps: 1,
            h: 1.0 / 4.0,
            ..Default::default()
        };
        let r = liouville_probe(&opts, 1).unwrap();
        assert!(r.value("ratio_step_1", Some(0.25)).unwrap() < 1.0);
        let tight = LiouvilleOptions {
            node_budget: 10,
            ..opts
        };
        assert!(matches!(
            liouville_probe(&tight, 1),
            Err(Error::NodeBudget { .. })
        ));
    }

    #[test]
    fn trial_order_is_deterministic() {
        let opts = HarnackOptions {
            coefficients: Coefficients::fixed(2, None),
            trials: 4,
            ladder: vec![1.0 / 8.0],
            ..Default::default()
        };
        let a = check_harnack(&opts, 5).unwrap();
        let b = check_harnack(&opts, 5).unwrap();
        assert_eq!(a, b);
    }
}
