use std::sync::Arc;

use driftlab::fields::{make_drift, DriftFamily, EllipticTensor};
use driftlab::geometry::{Ball, Cylinder, Grid, Point, SpaceTimeGrid};
use driftlab::solver::{solve_elliptic, solve_parabolic};
use proptest::prelude::*;

fn grid(dim: usize, h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(&Ball::centered(dim, 1.0).unwrap(), h).unwrap())
}

fn constant(b: Vec<f64>) -> driftlab::fields::DriftField {
    make_drift(DriftFamily::Constant { b }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // A linear function whose gradient is perpendicular to b solves the
    // equation, and both the central and the upwind stencils reproduce it
    // whatever the Péclet number.
    #[test]
    fn linear_data_is_exact_for_any_constant_drift(
        b in prop::collection::vec(-50.0..50.0f64, 2),
        c in prop::collection::vec(-2.0..2.0f64, 2),
    ) {
        let g = grid(2, 1.0 / 8.0);
        let norm = b[0].hypot(b[1]).max(1e-12);
        let (p0, p1) = (-b[1] / norm, b[0] / norm);
        let f = |x: &Point| c[0] + c[1] * (p0 * x[0] + p1 * x[1]);
        let u = solve_elliptic(&EllipticTensor::identity(2), &constant(b.clone()), Arc::clone(&g), |x| f(x)).unwrap();
        for &id in g.interior() {
            prop_assert!((u.solution.value(id) - f(&g.position(id))).abs() < 1e-8);
        }
    }

    #[test]
    fn solutions_stay_within_boundary_extremes(
        b in prop::collection::vec(-200.0..200.0f64, 2),
        k in prop::collection::vec(0.5..6.0f64, 2),
    ) {
        let g = grid(2, 1.0 / 16.0);
        let data = |x: &Point| (k[0] * x[0]).sin() * (k[1] * x[1]).cos();
        let u = solve_elliptic(&EllipticTensor::identity(2), &constant(b), g, |x| data(x)).unwrap();
        let (gmin, gmax) = u.solution.boundary_extremes();
        let (umin, umax) = u.solution.interior_extremes();
        prop_assert!(umin >= gmin && umax <= gmax);
    }
}

#[test]
fn exponential_solution_converges_at_second_order_in_2d() {
    // −Δu + ∂₁u = 0 for u = e^{x₁}.
    let b = constant(vec![1.0, 0.0]);
    let errors: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
        .iter()
        .map(|&h| {
            let g = grid(2, h);
            let u = solve_elliptic(&EllipticTensor::identity(2), &b, Arc::clone(&g), |x| {
                x[0].exp()
            })
            .unwrap();
            g.interior()
                .iter()
                .map(|&id| (u.solution.value(id) - g.position(id)[0].exp()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "{errors:?}");
    }
}

#[test]
fn travelling_linear_profile_is_exact_in_time() {
    // ∂ₜu + b·Du − Δu = 0 for u = x₁ − t with b = e₁.
    let b = constant(vec![1.0, 0.0]);
    let cyl = Cylinder::standard(2, 1.0).unwrap();
    for h in [1.0 / 8.0, 1.0 / 16.0] {
        let g = SpaceTimeGrid::new(&cyl, h, h / 2.0).unwrap();
        let r =
            solve_parabolic(&EllipticTensor::identity(2), &b, &g, |x, t| x[0] - t, None).unwrap();
        let space = g.space();
        for k in 0..=g.steps() {
            for &id in space.interior() {
                let x = space.position(id);
                assert!((r.solution.level(k)[id] - (x[0] - g.time(k))).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn heat_kernel_mode_decays_at_the_continuous_rate() {
    // u = e^{−2π²t/…}: use sin(πx₁/2)sin(πx₂/2)e^{−π²t/2} on the cylinder;
    // implicit Euler is first order in τ, so the error halves with τ.
    let cyl = Cylinder::standard(2, 1.0).unwrap();
    let k = std::f64::consts::FRAC_PI_2;
    let exact = |x: &Point, t: f64| (k * x[0]).sin() * (k * x[1]).sin() * (-2.0 * k * k * t).exp();
    let zero = constant(vec![0.0, 0.0]);
    let errors: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0]
        .iter()
        .map(|&h| {
            let g = SpaceTimeGrid::new(&cyl, h, h * h).unwrap();
            let r = solve_parabolic(
                &EllipticTensor::identity(2),
                &zero,
                &g,
                |x, t| exact(x, t),
                None,
            )
            .unwrap();
            let space = g.space();
            let last = g.steps();
            space
                .interior()
                .iter()
                .map(|&id| {
                    (r.solution.level(last)[id] - exact(&space.position(id), g.time(last))).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let ratio = errors[0] / errors[1];
    assert!((3.0..=5.0).contains(&ratio), "{errors:?}");
}
