//! Seeded boundary data and coefficient draws for trial families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::{
    make_drift, make_tensor, Coefficient, DriftFamily, DriftField, EllipticTensor, StreamFunction,
    TensorKind,
};
use crate::geometry::{Ball, Point};
use crate::norms::{quantity_n, NormParams};

/// Per-trial generator: stream `trial` of the ChaCha8 sequence seeded by `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Mixtures of Poisson kernels of balls slightly larger than the domain:
    /// traces of positive harmonic functions.
    PoissonKernel,
    /// Gaussian bumps centred on the domain boundary.
    Bumps,
    /// Gaussian bumps centred inside the domain.
    InteriorBumps,
    /// Poisson kernels and boundary bumps together, with a small positive floor.
    Mixture,
    /// Signed mixture with a linear term; for estimates on arbitrary solutions.
    Signed,
    /// Gaussian rings around the `x₃` axis centred on the domain boundary;
    /// functions of `|x′|` and `x₃` only. Three dimensions.
    AxisymmetricBumps,
    /// `≡ 1`.
    Constant,
    /// `(x₁ − c₁)/R`, never modulated in time.
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
enum Term {
    /// `w (S² − |x − c|²) / |x − ζ|ⁿ · S^{n−2}`: equal to `w` at the centre.
    Poisson {
        pole: Point,
        s: f64,
        weight: f64,
    },
    Bump {
        center: Point,
        width: f64,
        weight: f64,
    },
    Linear {
        direction: Point,
        weight: f64,
    },
    Ring {
        rho: f64,
        z: f64,
        width: f64,
        weight: f64,
    },
}

/// `1 + a sin(ω t + φ)`, with `a ≤ 1/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Modulation {
    amplitude: f64,
    frequency: f64,
    phase: f64,
}

/// One draw of Dirichlet data, as a function of `(x, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialData {
    dim: usize,
    center: Point,
    terms: Vec<(Term, Option<Modulation>)>,
    offset: f64,
    scale: f64,
}

fn random_direction(rng: &mut impl Rng, dim: usize) -> Point {
    loop {
        let mut v = [0.0; 3];
        for c in v.iter_mut().take(dim) {
            *c = rng.random_range(-1.0..1.0);
        }
        let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.map(|c| c / r);
        }
    }
}

fn random_in_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Point {
    let d = random_direction(rng, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    d.map(|c| c * r)
}

impl TrialData {
    /// Draw data for the domain `ball`; `timed` adds a slow time modulation
    /// to every term.
    pub fn draw(kind: DataKind, ball: &Ball, timed: bool, rng: &mut impl Rng) -> TrialData {
        let dim = ball.dim();
        let rd = ball.radius;
        let mut center = [0.0; 3];
        center[..dim].copy_from_slice(&ball.center);
        let mut terms = Vec::new();
        let poisson = |rng: &mut ChaCha8Rng| {
            let s = rd * rng.random_range(1.125..2.0);
            let d = random_direction(rng, dim);
            Term::Poisson {
                pole: d.map(|c| c * s),
                s,
                weight: rng.random_range(0.1..1.0),
            }
        };
        let bump = |rng: &mut ChaCha8Rng, inside: bool| {
            let c = if inside {
                random_in_ball(rng, dim, 0.7 * rd)
            } else {
                random_direction(rng, dim).map(|c| c * rd)
            };
            Term::Bump {
                center: c,
                width: rd * rng.random_range(0.25..0.75),
                weight: rng.random_range(0.2..1.0),
            }
        };
        let mut inner = ChaCha8Rng::from_rng(rng);
        let mut offset = 0.0;
        match kind {
            DataKind::PoissonKernel => {
                for _ in 0..inner.random_range(1..=3) {
                    terms.push(poisson(&mut inner));
                }
            }
            DataKind::Bumps => {
                for _ in 0..inner.random_range(1..=3) {
                    terms.push(bump(&mut inner, false));
                }
            }
            DataKind::InteriorBumps => {
                for _ in 0..inner.random_range(1..=3) {
                    terms.push(bump(&mut inner, true));
                }
            }
            DataKind::Mixture => {
                terms.push(poisson(&mut inner));
                for _ in 0..inner.random_range(1..=2) {
                    terms.push(bump(&mut inner, false));
                }
                offset = inner.random_range(0.0..0.05);
            }
            DataKind::Signed => {
                for _ in 0..inner.random_range(1..=3) {
                    let mut t = bump(&mut inner, false);
                    if let Term::Bump { weight, .. } = &mut t {
                        if inner.random_bool(0.5) {
                            *weight = -*weight;
                        }
                    }
                    terms.push(t);
                }
                terms.push(Term::Linear {
                    direction: random_direction(&mut inner, dim),
                    weight: inner.random_range(0.0..1.0) / rd,
                });
                offset = inner.random_range(-0.5..0.5);
            }
            DataKind::AxisymmetricBumps => {
                for _ in 0..inner.random_range(1..=3) {
                    if let Term::Bump {
                        center,
                        width,
                        weight,
                    } = bump(&mut inner, false)
                    {
                        terms.push(Term::Ring {
                            rho: center[0].hypot(center[1]),
                            z: center[2],
                            width,
                            weight,
                        });
                    }
                }
            }
            DataKind::Constant => offset = 1.0,
            DataKind::Linear => {
                let mut e = [0.0; 3];
                e[0] = 1.0;
                terms.push(Term::Linear {
                    direction: e,
                    weight: 1.0 / rd,
                });
            }
        }
        let timed = timed && !matches!(kind, DataKind::Linear);
        let terms = terms
            .into_iter()
            .map(|t| {
                let m = timed.then(|| Modulation {
                    amplitude: inner.random_range(0.0..0.5),
                    frequency: inner.random_range(0.5..3.0) / (rd * rd),
                    phase: inner.random_range(0.0..std::f64::consts::TAU),
                });
                (t, m)
            })
            .collect();
        TrialData {
            dim,
            center,
            terms,
            offset,
            scale: 1.0,
        }
    }

    /// The constant `c`.
    pub fn constant(dim: usize, c: f64) -> TrialData {
        TrialData {
            dim,
            center: [0.0; 3],
            terms: Vec::new(),
            offset: c,
            scale: 1.0,
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let n = self.dim as i32;
        let mut y = [0.0; 3];
        for d in 0..self.dim {
            y[d] = x[d] - self.center[d];
        }
        let mut v = self.offset;
        for (term, m) in &self.terms {
            let value = match term {
                Term::Poisson { pole, s, weight } => {
                    let r2: f64 = y.iter().map(|c| c * c).sum();
                    let d2: f64 = (0..3).map(|d| (y[d] - pole[d]).powi(2)).sum();
                    weight * (s * s - r2) / d2.powf(n as f64 / 2.0) * s.powi(n - 2)
                }
                Term::Bump {
                    center,
                    width,
                    weight,
                } => {
                    let d2: f64 = (0..3).map(|d| (y[d] - center[d]).powi(2)).sum();
                    weight * (-d2 / (width * width)).exp()
                }
                Term::Linear { direction, weight } => {
                    weight * (0..3).map(|d| y[d] * direction[d]).sum::<f64>()
                }
                Term::Ring {
                    rho,
                    z,
                    width,
                    weight,
                } => {
                    let d2 = (y[0].hypot(y[1]) - rho).powi(2) + (y[2] - z).powi(2);
                    weight * (-d2 / (width * width)).exp()
                }
            };
            let f = m.map_or(1.0, |m| {
                1.0 + m.amplitude * (m.frequency * t + m.phase).sin()
            });
            v += value * f;
        }
        self.scale * v
    }

    /// Multiply the data by `s`.
    pub fn scaled(mut self, s: f64) -> TrialData {
        self.scale *= s;
        self
    }

    /// Largest value over a sample of the ball's boundary and centre, used to
    /// normalize bounded data into `[0, 1]`.
    pub fn sample_max(&self, ball: &Ball, t: f64) -> f64 {
        let dim = ball.dim();
        let mut best = self.eval(&ball.center, t);
        let n = 64;
        for i in 0..n {
            for j in 0..if dim == 3 { n / 2 } else { 1 } {
                let phi = std::f64::consts::TAU * i as f64 / n as f64;
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / (n / 2) as f64;
                let mut x = ball.center.clone();
                if dim == 2 {
                    x[0] += ball.radius * phi.cos();
                    x[1] += ball.radius * phi.sin();
                } else {
                    x[0] += ball.radius * theta.sin() * phi.cos();
                    x[1] += ball.radius * theta.sin() * phi.sin();
                    x[2] += ball.radius * theta.cos();
                }
                best = best.max(self.eval(&x, t));
            }
        }
        best
    }
}

/// Coefficients of a check: either fixed, or drawn per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Coefficients {
    Fixed {
        dim: usize,
        #[serde(default = "identity_kind")]
        tensor: TensorKind,
        #[serde(default = "one")]
        nu: f64,
        /// Absent means `b = 0`.
        #[serde(default)]
        drift: Option<DriftFamily>,
    },
    Random(RandomCoefficients),
}

fn identity_kind() -> TensorKind {
    TensorKind::Identity
}

fn one() -> f64 {
    1.0
}

/// Random tensors (diagonal sine, rotation-mixed) and drifts (stream
/// functions, potential flows, radial sinks, constants) with an optional cap on `𝒩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomCoefficients {
    pub dim: usize,
    #[serde(default)]
    pub random_tensor: bool,
    /// Upper end of the drift amplitude range.
    pub drift_amplitude: f64,
    /// Only drifts with `div b ≤ 0` when set.
    #[serde(default = "yes")]
    pub structure: bool,
    /// Drifts are scaled down until `𝒩 ≤ max_n`.
    #[serde(default)]
    pub max_n: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Coefficients {
    pub fn fixed(dim: usize, drift: Option<DriftFamily>) -> Coefficients {
        Coefficients::Fixed {
            dim,
            tensor: TensorKind::Identity,
            nu: 1.0,
            drift,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Coefficients::Fixed { dim, .. } => *dim,
            Coefficients::Random(r) => r.dim,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Coefficients::Fixed { .. })
    }

    /// Build the fixed coefficients, rejecting inadmissible ones.
    /// Reject coefficients that cannot be built, without drawing any.
    pub fn validate(&self) -> Result<()> {
        self.resolve_fixed()?;
        if let Coefficients::Random(r) = self {
            self.check_q(r.q, false)?;
            if r.max_n.is_some_and(|n| !(n > 0.0)) {
                return Err(invalid("max_n", "must be positive"));
            }
        }
        Ok(())
    }

    /// `q` for `𝒩` (or `𝒩̂` with `ℓ = ∞`) must lie in the admissible window.
    pub fn check_q(&self, q: Option<f64>, parabolic: bool) -> Result<()> {
        let Some(q) = q else { return Ok(()) };
        let p = NormParams {
            q,
            l: f64::INFINITY,
        };
        if parabolic {
            p.check_parabolic(self.dim())
        } else {
            p.check_elliptic(self.dim())
        }
    }

    pub fn resolve_fixed(&self) -> Result<Option<(EllipticTensor, DriftField)>> {
        match self {
            Coefficients::Fixed {
                dim,
                tensor,
                nu,
                drift,
            } => {
                let a = make_tensor(*dim, tensor.clone(), *nu)?;
                let b = match drift {
                    Some(f) => make_drift(f.clone())?,
                    None => DriftField::zero(*dim),
                };
                if b.dim != *dim {
                    return Err(invalid(
                        "drift",
                        format!("dimension {} but setting has {dim}", b.dim),
                    ));
                }
                Ok(Some((a, b)))
            }
            Coefficients::Random(r) => {
                if r.dim != 2 && r.dim != 3 {
                    return Err(invalid("dimension", format!("{} not in {{2, 3}}", r.dim)));
                }
                if !(r.drift_amplitude >= 0.0 && r.drift_amplitude.is_finite()) {
                    return Err(invalid("drift_amplitude", "must be finite and nonnegative"));
                }
                Ok(None)
            }
        }
    }

    /// Coefficients for one trial. `reference` is the ball over which `𝒩` is
    /// measured (`B_{λR}` with radius `R` passed separately).
    pub fn draw(
        &self,
        rng: &mut impl Rng,
        radius: f64,
        reference: &Ball,
    ) -> Result<(EllipticTensor, DriftField)> {
        if let Some(ab) = self.resolve_fixed()? {
            return Ok(ab);
        }
        let Coefficients::Random(r) = self else {
            unreachable!("fixed coefficients resolved above")
        };
        let dim = r.dim;
        let a = if r.random_tensor {
            random_tensor(rng, dim)?
        } else {
            EllipticTensor::identity(dim)
        };
        let family = random_drift(rng, r, reference);
        let mut b = make_drift(family.clone())?;
        if let Some(cap) = r.max_n {
            let q = r.q.unwrap_or(0.75 * dim as f64);
            let lambda = reference.radius / radius;
            let h = reference.radius / 32.0;
            let n = quantity_n(&b, &reference.center, radius, lambda, q, h)?;
            if n > cap {
                b = make_drift(scale_family(&family, cap / n))?;
            }
        }
        Ok((a, b))
    }
}

fn random_tensor(rng: &mut impl Rng, dim: usize) -> Result<EllipticTensor> {
    match rng.random_range(0..3) {
        0 => Ok(EllipticTensor::identity(dim)),
        1 => {
            let amp = rng.random_range(0.0..0.3);
            let entries = (0..dim)
                .map(|_| Coefficient::Sine {
                    mean: 1.0,
                    amplitude: amp,
                    frequency: rng.random_range(1.0..4.0),
                    axis: rng.random_range(0..dim),
                })
                .collect();
            make_tensor(dim, TensorKind::Diagonal { entries }, 1.0 - amp)
        }
        _ => {
            // Eigenvalue ratio at most 4 keeps the axis weights dominant.
            let eigenvalues = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
            make_tensor(
                dim,
                TensorKind::RotationMixed {
                    eigenvalues,
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                    twist: rng.random_range(0.0..1.0),
                },
                0.5,
            )
        }
    }
}

fn random_drift(rng: &mut impl Rng, r: &RandomCoefficients, reference: &Ball) -> DriftFamily {
    let amp = r.drift_amplitude * rng.random::<f64>();
    let dim = r.dim;
    let choices = if dim == 2 { 4 } else { 3 };
    match rng.random_range(0..choices) {
        0 => {
            let d = random_direction(rng, dim);
            DriftFamily::Constant {
                b: d[..dim].iter().map(|c| amp * c).collect(),
            }
        }
        1 => {
            let sign = if !r.structure && rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            };
            // Radial drifts scale like 1/|x|; keep the amplitude per unit radius.
            DriftFamily::Radial {
                kappa: sign * amp * reference.radius / 4.0,
                center: center_in(rng, reference),
            }
        }
        2 if dim == 3 => {
            let d = random_direction(rng, 3);
            DriftFamily::Potential3d {
                rotation: d.iter().map(|c| amp * c / reference.radius).collect(),
                shear: amp * rng.random_range(0.0..0.5),
                sink: if r.structure {
                    amp * rng.random_range(0.0..0.5) / reference.radius
                } else {
                    amp * rng.random_range(-0.5..0.5) / reference.radius
                },
                center: center_in(rng, reference),
            }
        }
        2 => {
            let k1 = rng.random_range(1.0..4.0) / reference.radius;
            let k2 = rng.random_range(1.0..4.0) / reference.radius;
            DriftFamily::Stream2d {
                psi: StreamFunction::SinProduct {
                    amplitude: amp / k1.max(k2),
                    k1,
                    k2,
                },
            }
        }
        _ => {
            let width = reference.radius * rng.random_range(0.2..0.6);
            DriftFamily::Stream2d {
                psi: StreamFunction::GaussianVortex {
                    amplitude: amp * width * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    width,
                    center: center_in(rng, reference),
                },
            }
        }
    }
}

fn center_in(rng: &mut impl Rng, reference: &Ball) -> Vec<f64> {
    let dim = reference.dim();
    let p = random_in_ball(rng, dim, 0.5 * reference.radius);
    (0..dim).map(|d| reference.center[d] + p[d]).collect()
}

/// Multiply a drift family by `s > 0`; every family is linear in its amplitude.
pub fn scale_family(f: &DriftFamily, s: f64) -> DriftFamily {
    match f {
        DriftFamily::Constant { b } => DriftFamily::Constant {
            b: b.iter().map(|v| v * s).collect(),
        },
        DriftFamily::Stream2d { psi } => DriftFamily::Stream2d {
            psi: match psi {
                StreamFunction::SinProduct { amplitude, k1, k2 } => StreamFunction::SinProduct {
                    amplitude: amplitude * s,
                    k1: *k1,
                    k2: *k2,
                },
                StreamFunction::GaussianVortex {
                    amplitude,
                    width,
                    center,
                } => StreamFunction::GaussianVortex {
                    amplitude: amplitude * s,
                    width: *width,
                    center: center.clone(),
                },
                StreamFunction::Bump {
                    amplitude,
                    radius,
                    center,
                } => StreamFunction::Bump {
                    amplitude: amplitude * s,
                    radius: *radius,
                    center: center.clone(),
                },
            },
        },
        DriftFamily::Potential3d {
            rotation,
            shear,
            sink,
            center,
        } => DriftFamily::Potential3d {
            rotation: rotation.iter().map(|v| v * s).collect(),
            shear: shear * s,
            sink: sink * s,
            center: center.clone(),
        },
        DriftFamily::Radial { kappa, center } => DriftFamily::Radial {
            kappa: kappa * s,
            center: center.clone(),
        },
        DriftFamily::Axisymmetric {
            epsilon,
            background,
        } => DriftFamily::Axisymmetric {
            epsilon: epsilon * s,
            background: scale_background(background, s),
        },
        DriftFamily::Rescaled { inner, factor } => DriftFamily::Rescaled {
            inner: Box::new(scale_family(inner, s)),
            factor: *factor,
        },
        // `b(x − x¹ − wt) + w` is affine in `w`: scale the inner field only.
        DriftFamily::Translated {
            inner,
            origin,
            velocity,
        } => DriftFamily::Translated {
            inner: Box::new(scale_family(inner, s)),
            origin: origin.clone(),
            velocity: velocity.clone(),
        },
    }
}

fn scale_background(b: &crate::fields::Background, s: f64) -> crate::fields::Background {
    use crate::fields::Background::*;
    match *b {
        Zero => Zero,
        RigidSwirl { omega } => RigidSwirl { omega: omega * s },
        GaussianSwirl { amplitude, width } => GaussianSwirl {
            amplitude: amplitude * s,
            width,
        },
        RadialExpansion { rate } => RadialExpansion { rate: rate * s },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_traces_are_positive_and_unit_at_centre() {
        let ball = Ball::centered(3, 1.0).unwrap();
        for trial in 0..20 {
            let mut rng = trial_rng(7, trial);
            let g = TrialData::draw(DataKind::PoissonKernel, &ball, false, &mut rng);
            let c = g.eval(&[0.0; 3], 0.0);
            assert!(c > 0.1 && c <= 3.0);
            for x in [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.6, 0.0, 0.8]] {
                assert!(g.eval(&x, 0.0) > 0.0);
            }
        }
    }

    #[test]
    fn poisson_kernel_is_harmonic() {
        let ball = Ball::centered(2, 1.0).unwrap();
        let mut rng = trial_rng(3, 0);
        let g = TrialData::draw(DataKind::PoissonKernel, &ball, false, &mut rng);
        let e = 1e-3;
        let x = [0.3, -0.2, 0.0];
        let lap = g.eval(&[x[0] + e, x[1], 0.0], 0.0)
            + g.eval(&[x[0] - e, x[1], 0.0], 0.0)
            + g.eval(&[x[0], x[1] + e, 0.0], 0.0)
            + g.eval(&[x[0], x[1] - e, 0.0], 0.0)
            - 4.0 * g.eval(&x, 0.0);
        assert!((lap / (e * e)).abs() < 1e-3);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let ball = Ball::centered(2, 1.0).unwrap();
        let draw = |t| TrialData::draw(DataKind::Mixture, &ball, true, &mut trial_rng(11, t));
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));
    }

    #[test]
    fn drift_cap_holds() {
        let coeffs = Coefficients::Random(RandomCoefficients {
            dim: 2,
            random_tensor: true,
            drift_amplitude: 40.0,
            structure: true,
            max_n: Some(2.0),
            q: Some(1.5),
        });
        let reference = Ball::centered(2, 1.0).unwrap();
        for trial in 0..10 {
            let (a, b) = coeffs
                .draw(&mut trial_rng(5, trial), 1.0 / 3.0, &reference)
                .unwrap();
            assert!(a.nu > 0.0);
            let n = quantity_n(&b, &[0.0, 0.0], 1.0 / 3.0, 3.0, 1.5, 1.0 / 32.0).unwrap();
            assert!(n <= 2.0 * (1.0 + 1e-9), "trial {trial}: {n}");
            assert_ne!(b.class, crate::fields::DivergenceClass::Unconstrained);
        }
    }
}
