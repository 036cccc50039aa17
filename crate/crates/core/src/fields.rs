//! Coefficient fields: uniformly elliptic tensors `a_ij` and drifts `b` with a
//! declared divergence sign.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{distance, Grid, Point};

pub type Matrix = [[f64; 3]; 3];

/// Scalar coefficient `d(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · sin(2π · frequency · x_axis)`.
    Sine {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        axis: usize,
    },
}

impl Coefficient {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Coefficient::Constant { value } => value,
            Coefficient::Sine {
                mean,
                amplitude,
                frequency,
                axis,
            } => mean + amplitude * (2.0 * PI * frequency * x[axis]).sin(),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        match *self {
            Coefficient::Constant { value } if !value.is_finite() => {
                Err(invalid("coefficient", "non-finite value"))
            }
            Coefficient::Sine {
                mean,
                amplitude,
                frequency,
                axis,
            } => {
                if axis >= dim {
                    Err(invalid(
                        "axis",
                        format!("{axis} out of range for dimension {dim}"),
                    ))
                } else if !(mean.is_finite() && amplitude.is_finite() && frequency.is_finite()) {
                    Err(invalid("coefficient", "non-finite parameter"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensorKind {
    Identity,
    Diagonal {
        entries: Vec<Coefficient>,
    },
    /// `R(φ(x)) diag(eigenvalues) R(φ(x))ᵀ`, rotating in the `(x₁, x₂)` plane
    /// with `φ(x) = angle + twist · x₁`.
    RotationMixed {
        eigenvalues: Vec<f64>,
        angle: f64,
        #[serde(default)]
        twist: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticTensor {
    pub dim: usize,
    pub kind: TensorKind,
    pub nu: f64,
    /// The tensor is evaluated at `scale · x`.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl EllipticTensor {
    pub fn identity(dim: usize) -> EllipticTensor {
        EllipticTensor {
            dim,
            kind: TensorKind::Identity,
            nu: 1.0,
            scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, TensorKind::Identity)
    }

    /// Whether `a` has vanishing off-diagonal entries everywhere.
    pub fn is_diagonal(&self) -> bool {
        !matches!(self.kind, TensorKind::RotationMixed { .. })
    }

    pub fn eval(&self, x: &[f64]) -> Matrix {
        let mut y = [0.0; 3];
        for d in 0..self.dim {
            y[d] = self.scale * x[d];
        }
        let mut a = [[0.0; 3]; 3];
        match &self.kind {
            TensorKind::Identity => {
                for (d, row) in a.iter_mut().enumerate().take(self.dim) {
                    row[d] = 1.0;
                }
            }
            TensorKind::Diagonal { entries } => {
                for (d, e) in entries.iter().enumerate() {
                    a[d][d] = e.eval(&y);
                }
            }
            TensorKind::RotationMixed {
                eigenvalues,
                angle,
                twist,
            } => {
                let phi = angle + twist * y[0];
                let (s, c) = phi.sin_cos();
                let (l1, l2) = (eigenvalues[0], eigenvalues[1]);
                a[0][0] = c * c * l1 + s * s * l2;
                a[1][1] = s * s * l1 + c * c * l2;
                a[0][1] = c * s * (l1 - l2);
                a[1][0] = a[0][1];
                if self.dim == 3 {
                    a[2][2] = eigenvalues[2];
                }
            }
        }
        a
    }

    /// `x ↦ a(R x)`.
    pub fn rescaled(&self, factor: f64) -> EllipticTensor {
        EllipticTensor {
            scale: self.scale * factor,
            ..self.clone()
        }
    }
}

/// Build a tensor and certify `ν|ξ|² ≤ aξ·ξ ≤ ν⁻¹|ξ|²` on a dense sample.
pub fn make_tensor(dim: usize, kind: TensorKind, nu: f64) -> Result<EllipticTensor> {
    if dim != 2 && dim != 3 {
        return Err(invalid("dimension", format!("{dim} not in {{2, 3}}")));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(invalid("nu", format!("{nu} not in ]0, 1]")));
    }
    match &kind {
        TensorKind::Identity => {}
        TensorKind::Diagonal { entries } => {
            if entries.len() != dim {
                return Err(invalid(
                    "entries",
                    format!("expected {dim} diagonal entries"),
                ));
            }
            for e in entries {
                e.check(dim)?;
            }
        }
        TensorKind::RotationMixed {
            eigenvalues,
            angle,
            twist,
        } => {
            if eigenvalues.len() != dim {
                return Err(invalid(
                    "eigenvalues",
                    format!("expected {dim} eigenvalues"),
                ));
            }
            if !(angle.is_finite() && twist.is_finite()) {
                return Err(invalid("angle", "non-finite"));
            }
        }
    }
    let tensor = EllipticTensor {
        dim,
        kind,
        nu,
        scale: 1.0,
    };
    let report = dense_extremes(&tensor);
    if !report.pass {
        return Err(Error::EllipticityViolated(format!(
            "eigenvalues range over [{}, {}] but nu = {nu} requires [{nu}, {}]",
            report.min,
            report.max,
            1.0 / nu
        )));
    }
    Ok(tensor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub nu: f64,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub directions: usize,
    pub pass: bool,
}

const ELLIPTICITY_SLACK: f64 = 1e-12;

fn finish(nu: f64, min: f64, max: f64, points: usize, directions: usize) -> EllipticityReport {
    EllipticityReport {
        nu,
        min,
        max,
        points,
        directions,
        pass: min >= nu * (1.0 - ELLIPTICITY_SLACK) && max <= (1.0 + ELLIPTICITY_SLACK) / nu,
    }
}

/// Exact eigenvalue extremes on the lattice of step 1/64 (1/16 in 3-d) over `[-1, 1]^n`.
fn dense_extremes(a: &EllipticTensor) -> EllipticityReport {
    let steps: i32 = if a.dim == 2 { 64 } else { 16 };
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut count = 0;
    let range = -steps..=steps;
    let third: Vec<i32> = if a.dim == 3 {
        range.clone().collect()
    } else {
        vec![0]
    };
    for i in range.clone() {
        for j in range.clone() {
            for &k in &third {
                let x = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    k as f64 / steps as f64,
                ];
                let (lo, hi) = eigen_extremes(&a.eval(&x), a.dim);
                min = min.min(lo);
                max = max.max(hi);
                count += 1;
            }
        }
    }
    finish(a.nu, min, max, count, 0)
}

/// Rayleigh-quotient extremes at `samples` seeded points of `[-1, 1]^n`: exact
/// eigenvalue extremes per point, plus random directions as a cross-check.
pub fn validate_ellipticity(a: &EllipticTensor, samples: usize) -> Result<EllipticityReport> {
    if samples == 0 {
        return Err(invalid("samples", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x656c_6c69);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let directions = 8;
    for _ in 0..samples {
        let mut x = [0.0; 3];
        for v in x.iter_mut().take(a.dim) {
            *v = rng.random_range(-1.0..1.0);
        }
        let m = a.eval(&x);
        let (lo, hi) = eigen_extremes(&m, a.dim);
        min = min.min(lo);
        max = max.max(hi);
        for _ in 0..directions {
            let mut xi = [0.0; 3];
            for v in xi.iter_mut().take(a.dim) {
                *v = rng.random_range(-1.0..1.0);
            }
            let n2: f64 = xi.iter().map(|v| v * v).sum();
            if n2 < 1e-12 {
                continue;
            }
            let mut q = 0.0;
            for i in 0..a.dim {
                for j in 0..a.dim {
                    q += m[i][j] * xi[i] * xi[j];
                }
            }
            min = min.min(q / n2);
            max = max.max(q / n2);
        }
    }
    Ok(finish(a.nu, min, max, samples, samples * directions))
}

/// Smallest and largest eigenvalue of a symmetric matrix by Jacobi rotations.
pub fn eigen_extremes(m: &Matrix, dim: usize) -> (f64, f64) {
    let mut a = *m;
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let diag = (0..dim).map(|d| a[d][d]);
    let lo = diag.clone().fold(f64::INFINITY, f64::min);
    let hi = diag.fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Stream functions for divergence-free planar drifts `b = (∂₂ψ, −∂₁ψ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamFunction {
    /// `A sin(k₁x₁) sin(k₂x₂)`.
    SinProduct { amplitude: f64, k1: f64, k2: f64 },
    /// `A exp(−|x − c|²/w²)`.
    GaussianVortex {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
    },
    /// `A (1 − |x − c|²/r²)³₊`, compactly supported.
    Bump {
        amplitude: f64,
        radius: f64,
        center: Vec<f64>,
    },
}

impl StreamFunction {
    fn gradient(&self, x: &[f64]) -> [f64; 2] {
        match self {
            StreamFunction::SinProduct { amplitude, k1, k2 } => [
                amplitude * k1 * (k1 * x[0]).cos() * (k2 * x[1]).sin(),
                amplitude * k2 * (k1 * x[0]).sin() * (k2 * x[1]).cos(),
            ],
            StreamFunction::GaussianVortex {
                amplitude,
                width,
                center,
            } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let psi = amplitude * (-(d[0] * d[0] + d[1] * d[1]) / (width * width)).exp();
                let f = -2.0 * psi / (width * width);
                [f * d[0], f * d[1]]
            }
            StreamFunction::Bump {
                amplitude,
                radius,
                center,
            } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let s = (d[0] * d[0] + d[1] * d[1]) / (radius * radius);
                if s >= 1.0 {
                    return [0.0, 0.0];
                }
                let f = amplitude * 3.0 * (1.0 - s) * (1.0 - s) * (-2.0 / (radius * radius));
                [f * d[0], f * d[1]]
            }
        }
    }
}

/// Axisymmetric background velocities for the swirl drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Zero,
    /// `ω(−x₂, x₁, 0)`.
    RigidSwirl {
        omega: f64,
    },
    /// `A e^{−|x′|²/w²}(−x₂, x₁, 0)`.
    GaussianSwirl {
        amplitude: f64,
        width: f64,
    },
    /// `c(x₁, x₂, 0)`: axisymmetric but not divergence-free.
    RadialExpansion {
        rate: f64,
    },
}

impl Background {
    pub fn eval(&self, x: &[f64]) -> [f64; 3] {
        match *self {
            Background::Zero => [0.0; 3],
            Background::RigidSwirl { omega } => [-omega * x[1], omega * x[0], 0.0],
            Background::GaussianSwirl { amplitude, width } => {
                let g = amplitude * (-(x[0] * x[0] + x[1] * x[1]) / (width * width)).exp();
                [-g * x[1], g * x[0], 0.0]
            }
            Background::RadialExpansion { rate } => [rate * x[0], rate * x[1], 0.0],
        }
    }

    pub fn is_divergence_free(&self) -> bool {
        !matches!(self, Background::RadialExpansion { rate } if *rate != 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftFamily {
    Constant {
        b: Vec<f64>,
    },
    Stream2d {
        psi: StreamFunction,
    },
    /// `ω × x + s·(sin x₂, sin x₃, sin x₁) − c(x − x⁰)`; the last term is the
    /// gradient of the superharmonic `−c|x − x⁰|²/2`.
    Potential3d {
        rotation: Vec<f64>,
        #[serde(default)]
        shear: f64,
        #[serde(default)]
        sink: f64,
        #[serde(default = "origin3")]
        center: Vec<f64>,
    },
    /// `κ (x − c)/|x − c|²`.
    Radial {
        kappa: f64,
        center: Vec<f64>,
    },
    /// `v + ε · 2x′/|x′|²` with `x′ = (x₁, x₂, 0)`.
    Axisymmetric {
        epsilon: f64,
        background: Background,
    },
    /// `R b(R x; R² t)`.
    Rescaled {
        inner: Box<DriftFamily>,
        factor: f64,
    },
    /// `b(x − x¹ − w t; t) + w`: the drift seen from a frame moving with velocity `w`.
    Translated {
        inner: Box<DriftFamily>,
        origin: Vec<f64>,
        velocity: Vec<f64>,
    },
}

fn origin3() -> Vec<f64> {
    vec![0.0; 3]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceClass {
    Zero,
    Nonpositive,
    NonpositiveWithSingularPart,
    Unconstrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingularSet {
    None,
    Point {
        at: Vec<f64>,
    },
    /// The `x₃` axis.
    Axis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    pub dim: usize,
    pub family: DriftFamily,
    pub class: DivergenceClass,
    pub singular: SingularSet,
}

fn family_dim(family: &DriftFamily) -> Result<usize> {
    let dim = match family {
        DriftFamily::Constant { b } => b.len(),
        DriftFamily::Stream2d { .. } => 2,
        DriftFamily::Potential3d { .. } | DriftFamily::Axisymmetric { .. } => 3,
        DriftFamily::Radial { center, .. } => center.len(),
        DriftFamily::Rescaled { inner, .. } => family_dim(inner)?,
        DriftFamily::Translated { inner, .. } => family_dim(inner)?,
    };
    if dim == 2 || dim == 3 {
        Ok(dim)
    } else {
        Err(invalid("dimension", format!("{dim} not in {{2, 3}}")))
    }
}

fn finite(name: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(name, "non-finite parameter"))
    }
}

fn classify(family: &DriftFamily, dim: usize) -> Result<DivergenceClass> {
    use DivergenceClass::*;
    Ok(match family {
        DriftFamily::Constant { b } => {
            finite("b", b)?;
            Zero
        }
        DriftFamily::Stream2d { psi } => {
            match psi {
                StreamFunction::SinProduct { amplitude, k1, k2 } => {
                    finite("psi", &[*amplitude, *k1, *k2])?
                }
                StreamFunction::GaussianVortex {
                    amplitude,
                    width,
                    center,
                } => {
                    finite("psi", &[*amplitude, *width])?;
                    if *width <= 0.0 || center.len() != 2 {
                        return Err(invalid("psi", "width must be positive, center planar"));
                    }
                }
                StreamFunction::Bump {
                    amplitude,
                    radius,
                    center,
                } => {
                    finite("psi", &[*amplitude, *radius])?;
                    if *radius <= 0.0 || center.len() != 2 {
                        return Err(invalid("psi", "radius must be positive, center planar"));
                    }
                }
            }
            Zero
        }
        DriftFamily::Potential3d {
            rotation,
            shear,
            sink,
            center,
        } => {
            if rotation.len() != 3 || center.len() != 3 {
                return Err(invalid("rotation", "expected three components"));
            }
            finite("rotation", rotation)?;
            finite("sink", &[*shear, *sink])?;
            if *sink > 0.0 {
                Nonpositive
            } else if *sink == 0.0 {
                Zero
            } else {
                Unconstrained
            }
        }
        DriftFamily::Radial { kappa, center } => {
            finite("kappa", &[*kappa])?;
            finite("center", center)?;
            if *kappa == 0.0 {
                Zero
            } else if *kappa > 0.0 {
                Unconstrained
            } else if dim == 2 {
                NonpositiveWithSingularPart
            } else {
                Nonpositive
            }
        }
        DriftFamily::Axisymmetric {
            epsilon,
            background,
        } => {
            finite("epsilon", &[*epsilon])?;
            if !background.is_divergence_free() {
                Unconstrained
            } else if *epsilon < 0.0 {
                NonpositiveWithSingularPart
            } else if *epsilon > 0.0 {
                Unconstrained
            } else {
                Zero
            }
        }
        DriftFamily::Rescaled { inner, factor } => {
            if !(*factor > 0.0 && factor.is_finite()) {
                return Err(invalid("factor", "must be positive"));
            }
            classify(inner, dim)?
        }
        DriftFamily::Translated {
            inner,
            origin,
            velocity,
        } => {
            if origin.len() != dim || velocity.len() != dim {
                return Err(invalid("velocity", "dimension mismatch"));
            }
            finite("velocity", velocity)?;
            finite("origin", origin)?;
            classify(inner, dim)?
        }
    })
}

fn singular_of(family: &DriftFamily) -> SingularSet {
    match family {
        DriftFamily::Radial { kappa, center } if *kappa != 0.0 => {
            SingularSet::Point { at: center.clone() }
        }
        DriftFamily::Axisymmetric { epsilon, .. } if *epsilon != 0.0 => SingularSet::Axis,
        DriftFamily::Rescaled { inner, factor } => match singular_of(inner) {
            SingularSet::Point { at } => SingularSet::Point {
                at: at.iter().map(|v| v / factor).collect(),
            },
            s => s,
        },
        // The singular set of a translated drift moves in time; it is tracked by
        // evaluation rather than by descriptor.
        DriftFamily::Translated { inner, .. } => singular_of(inner),
        _ => SingularSet::None,
    }
}

pub fn make_drift(family: DriftFamily) -> Result<DriftField> {
    let dim = family_dim(&family)?;
    let class = classify(&family, dim)?;
    let singular = singular_of(&family);
    Ok(DriftField {
        dim,
        family,
        class,
        singular,
    })
}

impl DriftField {
    pub fn zero(dim: usize) -> DriftField {
        make_drift(DriftFamily::Constant { b: vec![0.0; dim] }).expect("zero drift")
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.family, DriftFamily::Constant { b } if b.iter().all(|v| *v == 0.0))
    }

    pub fn is_time_dependent(&self) -> bool {
        fn walk(f: &DriftFamily) -> bool {
            match f {
                DriftFamily::Translated { velocity, .. } => velocity.iter().any(|v| *v != 0.0),
                DriftFamily::Rescaled { inner, .. } => walk(inner),
                _ => false,
            }
        }
        walk(&self.family)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> [f64; 3] {
        eval_family(&self.family, self.dim, x, t, None)
    }

    /// Value with magnitude capped at `1/h` within distance `h` of the singular set.
    pub fn eval_capped(&self, x: &[f64], t: f64, h: f64) -> [f64; 3] {
        eval_family(&self.family, self.dim, x, t, Some(h))
    }

    pub fn magnitude(&self, x: &[f64], t: f64) -> f64 {
        let b = self.eval(x, t);
        b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Distance from `x` to the singular set at time `t`.
    pub fn singular_distance(&self, x: &[f64], t: f64) -> f64 {
        singular_distance(&self.family, self.dim, x, t)
    }

    /// `x ↦ R b(R x)`.
    pub fn rescaled(&self, factor: f64) -> Result<DriftField> {
        make_drift(DriftFamily::Rescaled {
            inner: Box::new(self.family.clone()),
            factor,
        })
    }

    /// Exact pointwise divergence off the singular set, when known in closed form.
    pub fn divergence(&self, x: &[f64]) -> Option<f64> {
        exact_divergence(&self.family, self.dim, x)
    }
}

fn exact_divergence(family: &DriftFamily, dim: usize, x: &[f64]) -> Option<f64> {
    match family {
        DriftFamily::Constant { .. } | DriftFamily::Stream2d { .. } => Some(0.0),
        DriftFamily::Potential3d { sink, .. } => Some(-3.0 * sink),
        DriftFamily::Radial { kappa, center } => {
            let r = distance(&x[..dim], center);
            Some(kappa * (dim as f64 - 2.0) / (r * r))
        }
        DriftFamily::Axisymmetric { background, .. } => match background {
            Background::RadialExpansion { rate } => Some(2.0 * rate),
            _ => Some(0.0),
        },
        DriftFamily::Rescaled { inner, factor } => {
            let y: Vec<f64> = x[..dim].iter().map(|v| v * factor).collect();
            exact_divergence(inner, dim, &y).map(|d| d * factor * factor)
        }
        DriftFamily::Translated { .. } => None,
    }
}

fn singular_distance(family: &DriftFamily, dim: usize, x: &[f64], t: f64) -> f64 {
    match family {
        DriftFamily::Radial { kappa, center } if *kappa != 0.0 => distance(&x[..dim], center),
        DriftFamily::Axisymmetric { epsilon, .. } if *epsilon != 0.0 => {
            (x[0] * x[0] + x[1] * x[1]).sqrt()
        }
        DriftFamily::Rescaled { inner, factor } => {
            let y: Vec<f64> = x[..dim].iter().map(|v| v * factor).collect();
            singular_distance(inner, dim, &y, t * factor * factor) / factor
        }
        DriftFamily::Translated {
            inner,
            origin,
            velocity,
        } => {
            let y: Vec<f64> = (0..dim)
                .map(|d| x[d] - origin[d] - velocity[d] * t)
                .collect();
            singular_distance(inner, dim, &y, t)
        }
        _ => f64::INFINITY,
    }
}

fn cap(b: [f64; 3], limit: f64) -> [f64; 3] {
    let m = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if m > limit {
        let s = limit / m;
        [b[0] * s, b[1] * s, b[2] * s]
    } else {
        b
    }
}

fn eval_family(family: &DriftFamily, dim: usize, x: &[f64], t: f64, h: Option<f64>) -> [f64; 3] {
    let near = |d: f64| h.is_some_and(|h| d < h);
    let mut out = [0.0; 3];
    match family {
        DriftFamily::Constant { b } => out[..dim].copy_from_slice(b),
        DriftFamily::Stream2d { psi } => {
            let g = psi.gradient(x);
            out[0] = g[1];
            out[1] = -g[0];
        }
        DriftFamily::Potential3d {
            rotation,
            shear,
            sink,
            center,
        } => {
            let w = rotation;
            out = [
                w[1] * x[2] - w[2] * x[1],
                w[2] * x[0] - w[0] * x[2],
                w[0] * x[1] - w[1] * x[0],
            ];
            out[0] += shear * x[1].sin() - sink * (x[0] - center[0]);
            out[1] += shear * x[2].sin() - sink * (x[1] - center[1]);
            out[2] += shear * x[0].sin() - sink * (x[2] - center[2]);
        }
        DriftFamily::Radial { kappa, center } => {
            let mut r2 = 0.0;
            for d in 0..dim {
                out[d] = x[d] - center[d];
                r2 += out[d] * out[d];
            }
            for v in out.iter_mut().take(dim) {
                *v *= kappa / r2;
            }
            if let Some(h) = h {
                if near(r2.sqrt()) {
                    out = cap(out, 1.0 / h);
                }
            }
        }
        DriftFamily::Axisymmetric {
            epsilon,
            background,
        } => {
            let v = background.eval(x);
            let r2 = x[0] * x[0] + x[1] * x[1];
            let mut s = [0.0; 3];
            if *epsilon != 0.0 {
                s[0] = 2.0 * epsilon * x[0] / r2;
                s[1] = 2.0 * epsilon * x[1] / r2;
            }
            out = [v[0] + s[0], v[1] + s[1], v[2]];
            if let Some(h) = h {
                if *epsilon != 0.0 && near(r2.sqrt()) {
                    out = cap(out, 1.0 / h);
                }
            }
        }
        DriftFamily::Rescaled { inner, factor } => {
            let mut y = [0.0; 3];
            for d in 0..dim {
                y[d] = factor * x[d];
            }
            let b = eval_family(inner, dim, &y, factor * factor * t, h.map(|h| h * factor));
            for d in 0..dim {
                out[d] = factor * b[d];
            }
        }
        DriftFamily::Translated {
            inner,
            origin,
            velocity,
        } => {
            let mut y = [0.0; 3];
            for d in 0..dim {
                y[d] = x[d] - origin[d] - velocity[d] * t;
            }
            let b = eval_family(inner, dim, &y, t, h);
            for d in 0..dim {
                out[d] = b[d] + velocity[d];
            }
        }
    }
    out
}

/// Hat test functions for [`validate_divergence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceOptions {
    /// Half-width of each hat, as a multiple of `h`.
    pub half_width_cells: usize,
    /// Explicit hat centres; when absent a lattice covering the grid is used
    /// and hats near the singular set are dropped.
    pub centers: Option<Vec<Vec<f64>>>,
    /// Tolerance is `tol_constant · h` on the normalized pairing.
    pub tol_constant: f64,
    pub time: f64,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        DivergenceOptions {
            half_width_cells: 4,
            centers: None,
            tol_constant: 1.0,
            time: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergencePairing {
    pub center: Vec<f64>,
    /// `−Σ b·∇η hⁿ / Σ η hⁿ`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub declared: DivergenceClass,
    pub tests: usize,
    pub min: f64,
    pub max: f64,
    pub tol: f64,
    /// The declared class is consistent with every pairing.
    pub certified: bool,
    /// Some pairing is positive beyond tolerance: `div b ≤ 0` fails.
    pub structure_violated: bool,
    pub pairings: Vec<DivergencePairing>,
}

fn hat(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        (0.0, 0.0)
    } else {
        (1.0 - s.abs(), -s.signum())
    }
}

/// Discrete weak divergence `⟨div b, η⟩ = −Σ b·∇η hⁿ` against tensor-product hats.
pub fn validate_divergence(
    b: &DriftField,
    grid: &Grid,
    opts: &DivergenceOptions,
) -> Result<DivergenceReport> {
    if b.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "drift dimension {} on a {}-d grid",
            b.dim,
            grid.dim()
        )));
    }
    let dim = grid.dim();
    let h = grid.h();
    let half = opts.half_width_cells.max(1) as f64 * h;
    let reach = half * (dim as f64).sqrt();
    let domain = grid.domain();
    let t = opts.time;
    let centers: Vec<Vec<f64>> = match &opts.centers {
        Some(cs) => {
            for c in cs {
                if c.len() != dim {
                    return Err(invalid("centers", "dimension mismatch"));
                }
                if b.singular_distance(c, t) < reach + 2.0 * h {
                    return Err(Error::SingularTestSupport(c.clone()));
                }
                if distance(c, &domain.center) + reach > domain.radius {
                    return Err(invalid("centers", "hat support leaves the grid domain"));
                }
            }
            cs.clone()
        }
        None => {
            // Centres on cell faces so the hat kinks fall between nodes.
            let mut cs = Vec::new();
            let k = (domain.radius / half).floor() as i64;
            let third: Vec<i64> = if dim == 3 {
                (-k..=k).collect()
            } else {
                vec![0]
            };
            for i in -k..=k {
                for j in -k..=k {
                    for &l in &third {
                        let idx = [i, j, l];
                        let c: Vec<f64> = (0..dim)
                            .map(|d| domain.center[d] + idx[d] as f64 * half)
                            .collect();
                        if distance(&c, &domain.center) + reach <= domain.radius - h
                            && b.singular_distance(&c, t) >= reach + 2.0 * h
                        {
                            cs.push(c);
                        }
                    }
                }
            }
            cs
        }
    };
    let cell = grid.cell_volume();
    let mut pairings = Vec::with_capacity(centers.len());
    for c in &centers {
        let probe = crate::geometry::Ball {
            center: c.clone(),
            radius: reach,
        };
        let mut num = 0.0;
        let mut mass = 0.0;
        for id in grid.nodes_in(&probe) {
            let x = grid.position(id);
            let (eta, grad) = tensor_hat(&x, c, half, dim);
            if eta == 0.0 {
                continue;
            }
            let bx = b.eval(&x, t);
            let dot: f64 = (0..dim).map(|d| bx[d] * grad[d]).sum();
            num -= dot * cell;
            mass += eta * cell;
        }
        if mass > 0.0 {
            pairings.push(DivergencePairing {
                center: c.clone(),
                value: num / mass,
            });
        }
    }
    if pairings.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let tol = opts.tol_constant * h;
    let min = pairings
        .iter()
        .map(|p| p.value)
        .fold(f64::INFINITY, f64::min);
    let max = pairings
        .iter()
        .map(|p| p.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let structure_violated = max > tol;
    let certified = match b.class {
        DivergenceClass::Zero => max <= tol && min >= -tol,
        DivergenceClass::Nonpositive | DivergenceClass::NonpositiveWithSingularPart => {
            !structure_violated
        }
        DivergenceClass::Unconstrained => true,
    };
    Ok(DivergenceReport {
        declared: b.class,
        tests: pairings.len(),
        min,
        max,
        tol,
        certified,
        structure_violated,
        pairings,
    })
}

fn tensor_hat(x: &Point, c: &[f64], half: f64, dim: usize) -> (f64, [f64; 3]) {
    let mut vals = [1.0; 3];
    let mut ders = [0.0; 3];
    for d in 0..dim {
        let (v, dv) = hat((x[d] - c[d]) / half);
        vals[d] = v;
        ders[d] = dv / half;
    }
    let eta: f64 = vals[..dim].iter().product();
    let mut grad = [0.0; 3];
    for d in 0..dim {
        let mut g = ders[d];
        for e in 0..dim {
            if e != d {
                g *= vals[e];
            }
        }
        grad[d] = g;
    }
    (eta, grad)
}
