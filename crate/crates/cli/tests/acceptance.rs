//! Acceptance criteria, one line each. Runs without the test harness so the
//! lines always reach the output; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use driftlab::fields::Background;
use driftlab::fields::{make_drift, DriftFamily, DriftField, EllipticTensor};
use driftlab::geometry::{
    ball_chain, layer_split, norm, parabolic_chain, Ball, ChainPlan, Cylinder, Grid,
    ShellQuadrature, SpaceTimeGrid,
};
use driftlab::hydro::{
    build_swirl_problem, check_dirac_divergence, check_swirl_liouville, DiracOptions,
    SwirlLiouvilleOptions,
};
use driftlab::norms::morrey_norm_rule;
use driftlab::report::EstimateReport;
use driftlab::solver::{solve_elliptic, solve_parabolic};
use driftlab::verify::*;
use driftlab_cli::{Experiment, RunOptions};
use rand::Rng;

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn radial(dim: usize, kappa: f64) -> DriftFamily {
    DriftFamily::Radial {
        kappa,
        center: vec![0.0; dim],
    }
}

fn constant_drift(b: Vec<f64>) -> DriftField {
    make_drift(DriftFamily::Constant { b }).unwrap()
}

fn solver_order() -> Outcome {
    let t = Instant::now();
    let a = EllipticTensor::identity(3);
    let b = constant_drift(vec![1.0, 0.0, 0.0]);
    let ball = Ball::centered(3, 1.0).unwrap();
    let errors: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0]
        .iter()
        .map(|&h| {
            let grid = Arc::new(Grid::new(&ball, h).unwrap());
            let u = solve_elliptic(&a, &b, Arc::clone(&grid), |x| x[0].exp()).unwrap();
            grid.interior()
                .iter()
                .map(|&id| (u.solution.value(id) - grid.position(id)[0].exp()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let ratio = errors[0] / errors[1];
    let secs = t.elapsed().as_secs_f64();
    outcome(
        (3.0..=5.0).contains(&ratio) && secs < 30.0,
        format!(
            "e^x1 with b = e1 on B1 in 3D: errors {:.3e}, {:.3e}, ratio {ratio:.3} in [3, 5], {secs:.1}s < 30s",
            errors[0], errors[1]
        ),
    )
}

fn parabolic_exactness() -> Outcome {
    let a = EllipticTensor::identity(2);
    let b = constant_drift(vec![1.0, 0.0]);
    let cyl = Cylinder::standard(2, 1.0).unwrap();
    let h = 1.0 / 16.0;
    let grid = SpaceTimeGrid::new(&cyl, h, h).unwrap();
    let exact = |x: &[f64], t: f64| x[0] - t;
    let r = solve_parabolic(&a, &b, &grid, |x, t| exact(x, t), None).unwrap();
    let space = grid.space();
    let mut worst = 0.0f64;
    for k in 0..=grid.steps() {
        let level = r.solution.level(k);
        for &id in space.interior() {
            worst = worst.max((level[id] - exact(&space.position(id), grid.time(k))).abs());
        }
    }
    outcome(
        worst <= 1e-9,
        format!("x1 - t with b = e1 on Q1 in 2D: max nodal error {worst:.2e} <= 1e-9"),
    )
}

fn max_principle() -> Outcome {
    let t = Instant::now();
    let opts = MaxPrincipleOptions::default();
    let r = check_max_principle(&opts, SEED).unwrap();
    let violations = r.value("violations", None).unwrap_or(f64::NAN);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        r.passed() && violations == 0.0 && opts.trials == 100 && secs < 300.0,
        format!(
            "{} random (a, b, g) at h = 1/32: {violations} violations, {secs:.1}s < 300s",
            opts.trials
        ),
    )
}

fn morrey_oracle() -> Outcome {
    let b = make_drift(radial(3, 1.0)).unwrap();
    let omega = Ball::centered(3, 1.0).unwrap();
    let r = morrey_norm_rule(|x| b.magnitude(x, 0.0), 2.0, 0.5, &omega, 1.0 / 64.0).unwrap();
    let exact = (4.0 * PI).sqrt();
    let rel = (r.value - exact).abs() / exact;
    outcome(
        rel <= 0.02,
        format!(
            "x/|x|^2, q = 2, alpha = 1/2 at h = 1/64: {:.4} vs sqrt(4 pi) = {exact:.4}, relative {rel:.4} <= 0.02",
            r.value
        ),
    )
}

fn constants(r: &EstimateReport, name: &str) -> Vec<f64> {
    r.values(name).into_iter().map(|(_, v)| v).collect()
}

fn harnack_clean() -> Outcome {
    let opts = HarnackOptions {
        trials: 200,
        ..Default::default()
    };
    let r = check_harnack(&opts, SEED).unwrap();
    let c = constants(&r, "constant");
    let bound = 27.0 * 1.10;
    let growth = c[1] / c[0];
    outcome(
        r.passed() && c.iter().all(|v| *v <= bound) && growth <= 1.10,
        format!(
            "b = 0, n = 3, 200 Poisson-kernel trials: N3 = {:.3} (h = 1/16), {:.3} (h = 1/32) <= {bound:.1}, growth {growth:.3} <= 1.10",
            c[0], c[1]
        ),
    )
}

fn structure_sharpness() -> Outcome {
    let cx = check_harnack_counterexample(&CounterexampleOptions::default(), SEED).unwrap();
    let q = constants(&cx, "constant");
    let growth = q[q.len() - 1] / q[0];
    let res = constants(&cx, "residual");
    let certified = cx.value("residual_certified", None) == Some(1.0);
    let paired = HarnackOptions {
        coefficients: Coefficients::fixed(3, Some(radial(3, -2.0))),
        data: DataKind::Mixture,
        trials: 4,
        ladder: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
        ..Default::default()
    };
    let inward = check_harnack(&paired, SEED).unwrap();
    let p = constants(&inward, "constant");
    outcome(
        cx.expect_fail && certified && growth >= 2.0 && inward.passed(),
        format!(
            "b = 2x/|x|^2: residual {:.3} -> {:.3}, quotient {:.1} -> {:.1} (x{growth:.2} >= 2); \
             b = -2x/|x|^2: {:.2}, {:.2}, {:.2} stable",
            res[0],
            res[res.len() - 1],
            q[0],
            q[q.len() - 1],
            p[0],
            p[1],
            p[2]
        ),
    )
}

fn oscillation_options() -> OscillationOptions {
    OscillationOptions {
        coefficients: Coefficients::Random(RandomCoefficients {
            dim: 2,
            random_tensor: true,
            drift_amplitude: 40.0,
            structure: true,
            max_n: Some(2.0),
            q: Some(1.5),
        }),
        trials: 100,
        q: Some(1.5),
        ..Default::default()
    }
}

fn oscillation_decay() -> (Outcome, f64) {
    let r = check_oscillation_decay(&oscillation_options(), SEED).unwrap();
    let kappa = constants(&r, "kappa").into_iter().fold(0.0, f64::max);
    let gamma = r.value("gamma", None).unwrap();
    let r2 = r.value("gamma_r2", None).unwrap();
    (
        outcome(
            r.passed() && kappa <= 0.95 && gamma > 0.0 && r2 >= 0.9,
            format!(
                "100 trials, N <= 2: max kappa0 {kappa:.3} <= 0.95, gamma {gamma:.3} > 0, R^2 {r2:.3} >= 0.9"
            ),
        ),
        kappa,
    )
}

/// Independent re-check of the chain geometry from the returned links.
fn ball_chain_ok(plan: &ChainPlan, y: &[f64], rho: f64, outer: f64) -> bool {
    let tol = 1e-12 * outer;
    if norm(y) == 0.0 {
        return plan.links.is_empty();
    }
    let n = plan.count as i32;
    let dyadic = rho > outer * 0.5f64.powi(n + 1) && rho <= outer * 0.5f64.powi(n);
    let first = &plan.links[0];
    let start = dist(&first.center, y) + first.radius <= 3.0 * rho + tol;
    let inside = plan
        .links
        .iter()
        .all(|l| norm(&l.center) + 2.0 * l.radius <= 2.0 * outer + tol);
    let linked = plan.links.windows(2).all(|w| {
        (w[1].radius - 2.0 * w[0].radius).abs() <= tol
            && dist(&w[0].center, &w[1].center) < w[0].radius + w[1].radius
    });
    let last = plan.links.last().unwrap();
    let ends = (last.radius - outer).abs() <= tol && norm(&last.center) <= tol;
    dyadic && start && inside && linked && ends && plan.all_contained()
}

fn parabolic_chain_ok(plan: &ChainPlan, y: &[f64], s: f64, outer: f64) -> bool {
    let tol = 1e-12 * outer * outer;
    let first = &plan.links[0];
    let mut t = s;
    let mut ok = dist(&first.center, y) <= 1e-12 * outer;
    for l in &plan.links {
        t += l.radius * l.radius;
        let apex = l.time.unwrap();
        ok &= (apex - t).abs() <= tol
            && norm(&l.center) + 4.0 * l.radius <= 2.0 * outer + 1e-12 * outer
            && apex - l.radius * l.radius >= -4.0 * outer * outer - tol
            && apex <= tol;
    }
    ok &= plan
        .links
        .windows(2)
        .all(|w| (w[1].radius - 2.0 * w[0].radius).abs() <= 1e-12 * outer);
    let last = plan.links.last().unwrap();
    ok && (2.0 * last.radius - outer).abs() <= 1e-12 * outer
        && norm(&last.center) <= 1e-12 * outer
        && 3.0 * t <= -5.0 * outer * outer + 3.0 * tol
        && plan.all_contained()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn random_point(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-radius..radius))
            .collect();
        if norm(&p) < radius {
            return p;
        }
    }
}

fn chain_geometry() -> Outcome {
    let t = Instant::now();
    let mut rng = trial_rng(SEED, 8);
    let (mut ball_bad, mut par_bad) = (0, 0);
    for _ in 0..1000 {
        let dim = rng.random_range(2..=3);
        let outer = rng.random_range(0.1..10.0);
        let y = random_point(&mut rng, dim, 2.0 * outer);
        let rho = (2.0 * outer - norm(&y)) / 4.0;
        match ball_chain(&y, rho, outer) {
            Ok(plan) if ball_chain_ok(&plan, &y, rho, outer) => {}
            _ => ball_bad += 1,
        }
        let s = rng.random_range(-4.0..=-2.0) * outer * outer;
        let rho = rng.random_range(0.0..1.0f64).max(1e-6) * (2.0 * outer - norm(&y)) / 4.0;
        match parabolic_chain(&y, s, rho, outer) {
            Ok(plan) if parabolic_chain_ok(&plan, &y, s, outer) => {}
            _ => par_bad += 1,
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ball_bad == 0 && par_bad == 0 && secs < 10.0,
        format!(
            "1000 draws: {ball_bad} ball-chain and {par_bad} parabolic-chain failures (t^N <= -5/3 R^2 included), {secs:.2}s < 10s"
        ),
    )
}

fn dirac_pairing() -> Outcome {
    let problem = build_swirl_problem(Background::Zero, 1.0).unwrap();
    let r = check_dirac_divergence(&problem, &DiracOptions::default()).unwrap();
    let errs = r.series("pairing_error").unwrap();
    let list: Vec<String> = errs
        .points
        .iter()
        .map(|(h, e)| format!("{:.1e} (h = 1/{})", e.0, (1.0 / h.0).round()))
        .collect();
    let finest = errs.points.last().unwrap().1 .0;
    let monotone = errs.points.windows(2).all(|w| w[1].1 .0 <= w[0].1 .0);
    outcome(
        r.passed() && finest <= 0.05,
        format!(
            "v = 0, eps = 1: relative errors {}; finest <= 5%, {}",
            list.join(", "),
            if monotone {
                "decreasing".to_string()
            } else {
                format!(
                    "finest below coarsest at the quadrature floor, fitted rate {:.2}",
                    r.value("rate", None).unwrap_or(f64::NAN)
                )
            }
        ),
    )
}

fn liouville(kappa0: f64) -> Outcome {
    let t = Instant::now();
    let bound = kappa0.powi(3);
    let plain = liouville_probe(&LiouvilleOptions::default(), SEED).unwrap();
    let plain3 = plain.value("ratio_step_3", None).unwrap_or(f64::NAN);
    let problem = build_swirl_problem(Background::Zero, -1.0).unwrap();
    let swirl = check_swirl_liouville(&problem, &SwirlLiouvilleOptions::default(), SEED).unwrap();
    let swirl3 = swirl.value("ratio_step_3", None).unwrap_or(f64::NAN);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        plain.passed() && swirl.passed() && plain3 <= bound && swirl3 <= bound && secs < 1200.0,
        format!(
            "after 3 steps: b = 0 {plain3:.4}, swirl eps = -1 {swirl3:.4} <= kappa0^3 = {bound:.4}, {secs:.0}s < 1200s"
        ),
    )
}

/// `∫ |b|³` over `r1 < |x| < r2` by a midpoint rule in spherical coordinates.
fn midpoint_shell_l3(b: &DriftField, r1: f64, r2: f64) -> f64 {
    let (nr, nt, np) = (6, 240, 480);
    let (dr, dt, dp) = ((r2 - r1) / nr as f64, PI / nt as f64, 2.0 * PI / np as f64);
    let mut total = 0.0;
    for i in 0..nr {
        let r = r1 + (i as f64 + 0.5) * dr;
        for j in 0..nt {
            let th = (j as f64 + 0.5) * dt;
            for k in 0..np {
                let ph = (k as f64 + 0.5) * dp;
                let x = [
                    r * th.sin() * ph.cos(),
                    r * th.sin() * ph.sin(),
                    r * th.cos(),
                ];
                total += b.magnitude(&x, 0.0).powi(3) * r * r * th.sin() * dr * dt * dp;
            }
        }
    }
    total
}

fn layer_split_check() -> Outcome {
    let eps = 0.3;
    let mut rng = trial_rng(SEED, 11);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..20 {
        // x/|x|^2 with a random strength and a pole inside B_R.
        let kappa = rng.random_range(0.5..1.5);
        let center = random_point(&mut rng, 3, 0.5);
        let b = make_drift(DriftFamily::Radial { kappa, center }).unwrap();
        match layer_split(&b, &[0.0; 3], 1.0, eps, &ShellQuadrature::default()) {
            Ok(s) => {
                let check = midpoint_shell_l3(&b, s.inner, s.outer).cbrt();
                worst = worst.max(check);
                if check > eps {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0,
        format!(
            "20 draws of kappa (x - c)/|x - c|^2: worst independent layer norm {worst:.6} <= {eps}"
        ),
    )
}

const DETERMINISM: &str = r#"
experiment = "determinism"
seed = 77
suites = ["all"]

[options.local-max]
trials = 2
ladder = [0.125, 0.0625]
[options.growth]
trials = 2
ladder = [0.125, 0.0625]
[options.oscillation-decay]
trials = 2
ladder = [0.0625, 0.03125]
[options.harnack]
trials = 2
ladder = [0.125, 0.0625]
[options.harnack-counterexample]
quotient_ladder = [0.125, 0.0625]
residual_ladder = [0.125, 0.0625]
r_min = 0.5
[options.harnack-inward-radial]
trials = 2
ladder = [0.125, 0.0625]
[options.max-principle]
trials = 3
ladder = [0.0625]
[options.chain]
trials = 2
ladder = [0.0625]
[options.liouville]
trials = 2
steps = 2
[options.parabolic-local-max]
trials = 2
ladder = [0.125, 0.0625]
[options.parabolic-growth]
trials = 2
ladder = [0.125, 0.0625]
[options.parabolic-oscillation]
trials = 2
ladder = [0.125, 0.0625]
[options.parabolic-harnack]
trials = 2
ladder = [0.125, 0.0625]
[options.parabolic-max-principle]
trials = 2
h = 0.125
[options.measure-propagation]
trials = 2
ladder = [0.125]
[options.parabolic-chain]
trials = 2
ladder = [0.0625]
min_rho_cells = 1.0
[options.slant-frame]
ladder = [0.125, 0.0625]
[options.parabolic-liouville]
trials = 2
steps = 1
[options.dirac-divergence]
ladder = [0.0625, 0.03125]
[options.swirl-liouville]
trials = 1
steps = 1
residual_ladder = [0.125, 0.0625]
[options.axis-lower-bound]
trials = 2
split_trials = 2
ladder = [0.125]
"#;

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("determinism.toml");
    std::fs::write(&cfg, DETERMINISM).unwrap();
    let exp = Experiment::load(&cfg).unwrap();
    let runs: Vec<_> = [1usize, 2]
        .iter()
        .map(|&jobs| {
            driftlab_cli::run::run_experiment(
                &exp,
                &RunOptions {
                    jobs: Some(jobs),
                    out: Some(tmp.path().join(format!("jobs{jobs}"))),
                },
            )
            .unwrap()
        })
        .collect();
    let read = |dir: &Path, rel: &Path| std::fs::read(dir.join(rel)).unwrap();
    let mut differing = Vec::new();
    for e in &runs[0].manifest.reports {
        if read(&runs[0].dir, &e.report) != read(&runs[1].dir, &e.report) {
            differing.push(e.check.clone());
        }
    }
    let summary = Path::new("summary.csv");
    let same_summary = read(&runs[0].dir, summary) == read(&runs[1].dir, summary);
    let errors: Vec<_> = runs[0]
        .manifest
        .reports
        .iter()
        .filter(|e| e.error.is_some())
        .map(|e| e.check.clone())
        .collect();
    outcome(
        differing.is_empty() && same_summary && errors.is_empty(),
        format!(
            "{} reports, reruns at 1 and 2 jobs: {} differ{}",
            runs[0].manifest.reports.len(),
            differing.len(),
            if errors.is_empty() {
                String::new()
            } else {
                format!(", errors in {errors:?}")
            }
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut line = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} [{tag}] {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    line(1, "solver order", solver_order());
    line(2, "parabolic exactness", parabolic_exactness());
    line(3, "discrete maximum principle", max_principle());
    line(4, "Morrey norm oracle", morrey_oracle());
    line(5, "Harnack, clean case", harnack_clean());
    line(6, "structure-condition sharpness", structure_sharpness());
    let (osc, kappa0) = oscillation_decay();
    line(7, "oscillation decay", osc);
    line(8, "chain geometry", chain_geometry());
    line(9, "Dirac pairing", dirac_pairing());
    line(10, "Liouville probes", liouville(kappa0));
    line(11, "layer split", layer_split_check());
    line(12, "determinism", determinism());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 12 acceptance criteria passed");
}
