//! Lebesgue, anisotropic, Morrey and parabolic Morrey norms, the energy norm
//! `𝒱(Q)`, and the scale-invariant drift quantities `𝒩` and `𝒩̂`.
//!
//! Norms of nodal fields use the node lattice of the field's grid as a
//! midpoint rule. Norms of analytic rules are evaluated on the same kind of
//! cell-centred lattice built over the region, so a singularity at the region
//! centre never sits on a quadrature point.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::DriftField;
use crate::geometry::{distance, Ball, Cylinder, Grid, Point, SpaceTimeGrid};
use crate::solver::{DiscreteField, SpaceTimeField};

/// The region achieving a Morrey supremum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apex: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximizer: Option<Maximizer>,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Number of candidate balls or cylinders examined.
    pub candidates: usize,
}

/// Exponent pair with the elliptic and parabolic admissibility windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub q: f64,
    #[serde(default = "infinite")]
    pub l: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl NormParams {
    /// `α = n/q + 2/ℓ − 1`.
    pub fn alpha(&self, dim: usize) -> f64 {
        dim as f64 / self.q + 2.0 / self.l - 1.0
    }

    /// `n/2 < q ≤ n`.
    pub fn check_elliptic(&self, dim: usize) -> Result<()> {
        check_exponent("q", self.q)?;
        let n = dim as f64;
        if !(self.q > n / 2.0) {
            return Err(Error::InadmissibleExponents(format!(
                "q = {} must exceed n/2 = {}",
                self.q,
                n / 2.0
            )));
        }
        if self.q > n {
            return Err(Error::InadmissibleExponents(format!(
                "q = {} must not exceed n = {dim}",
                self.q
            )));
        }
        Ok(())
    }

    /// `0 ≤ n/q + 2/ℓ − 1 < 1`.
    pub fn check_parabolic(&self, dim: usize) -> Result<()> {
        check_exponent("q", self.q)?;
        check_exponent("l", self.l)?;
        let a = self.alpha(dim);
        if a < 0.0 {
            return Err(Error::InadmissibleExponents(format!(
                "alpha = n/q + 2/l - 1 = {a} is negative"
            )));
        }
        if a >= 1.0 {
            return Err(Error::InadmissibleExponents(format!(
                "alpha = n/q + 2/l - 1 = {a} must be below 1"
            )));
        }
        Ok(())
    }
}

fn check_exponent(name: &'static str, q: f64) -> Result<()> {
    if q >= 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("exponent {q} must be in [1, inf]")))
    }
}

/// `(Σ |v|^q w)^{1/q}`, or `max |v|` for `q = ∞`.
fn lq(values: impl Iterator<Item = f64>, weight: f64, q: f64) -> f64 {
    if q.is_infinite() {
        values.map(f64::abs).fold(0.0, f64::max)
    } else {
        (values.map(|v| v.abs().powf(q)).sum::<f64>() * weight).powf(1.0 / q)
    }
}

/// `‖f‖_{q, B}` over the interior nodes of the field inside `ball` (all interior nodes if `None`).
pub fn lebesgue_norm(f: &DiscreteField, q: f64, ball: Option<&Ball>) -> Result<f64> {
    check_exponent("q", q)?;
    let grid = f.grid();
    let ids: Vec<usize> = match ball {
        Some(b) => grid.nodes_in(b),
        None => grid.interior().to_vec(),
    };
    if ids.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(lq(ids.iter().map(|&id| f.value(id)), grid.cell_volume(), q))
}

/// `‖f‖_{q, B}` for an analytic rule, by the cell-centred midpoint rule of spacing `h`.
pub fn lebesgue_norm_rule(
    f: impl Fn(&Point) -> f64 + Sync,
    q: f64,
    ball: &Ball,
    h: f64,
) -> Result<f64> {
    check_exponent("q", q)?;
    let grid = Grid::new(ball, h)?;
    let vals: Vec<f64> = grid
        .interior()
        .par_iter()
        .map(|&id| f(&grid.position(id)))
        .collect();
    Ok(lq(vals.into_iter(), grid.cell_volume(), q))
}

fn check_within(field: &SpaceTimeGrid, cyl: &Cylinder) -> Result<()> {
    let outer = field.cylinder();
    let tol = 1e-9 * (1.0 + outer.radius);
    if cyl.dim() != outer.dim()
        || distance(&cyl.center, &outer.center) + cyl.lambda * cyl.radius
            > outer.lambda * outer.radius + tol
        || cyl.t_start() < outer.t_start() - tol
        || cyl.t_end() > outer.t_end() + tol
    {
        return Err(Error::GridMismatch(
            "cylinder is not covered by the field's grid".into(),
        ));
    }
    Ok(())
}

/// Per-level spatial `L_q` norms on the levels inside `cyl`, then `L_ℓ` in time.
fn anisotropic_core(levels: &[&[f64]], ids: &[usize], cell: f64, tau: f64, q: f64, l: f64) -> f64 {
    let slabs = levels
        .iter()
        .map(|lv| lq(ids.iter().map(|&id| lv[id]), cell, q));
    lq(slabs, tau, l)
}

/// `‖f‖_{q,ℓ,Q}`: inner `L_q` in space, outer `L_ℓ` in time.
pub fn anisotropic_norm(f: &SpaceTimeField, q: f64, l: f64, cyl: Option<&Cylinder>) -> Result<f64> {
    check_exponent("q", q)?;
    check_exponent("l", l)?;
    let grid = f.grid();
    let cyl = match cyl {
        Some(c) => {
            check_within(grid, c)?;
            c.clone()
        }
        None => grid.cylinder().clone(),
    };
    let ids = grid.space().nodes_in(&cyl.spatial());
    let levels = grid.levels_in(cyl.t_start(), cyl.t_end());
    if ids.is_empty() || levels.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let slabs: Vec<&[f64]> = levels.iter().map(|&k| f.level(k)).collect();
    Ok(anisotropic_core(
        &slabs,
        &ids,
        grid.space().cell_volume(),
        grid.tau(),
        q,
        l,
    ))
}

/// Dyadic radii `R 2^{-j}` down to four cells.
fn dyadic_radii(top: f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = top;
    while r >= 4.0 * h {
        out.push(r);
        r /= 2.0;
    }
    out
}

/// Centres on the lattice of stride `ρ/2` anchored at `omega`'s centre with `B_ρ(x) ⊂ omega`.
fn lattice_centers(omega: &Ball, rho: f64) -> Vec<Vec<f64>> {
    let dim = omega.dim();
    let stride = rho / 2.0;
    let k = ((omega.radius - rho) / stride).floor().max(0.0) as i64;
    let third: Vec<i64> = if dim == 3 {
        (-k..=k).collect()
    } else {
        vec![0]
    };
    let mut out = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            for &l in &third {
                let idx = [i, j, l];
                let c: Vec<f64> = (0..dim)
                    .map(|d| omega.center[d] + idx[d] as f64 * stride)
                    .collect();
                if distance(&c, &omega.center) + rho <= omega.radius * (1.0 + 1e-12) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// First maximum in candidate order.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn morrey_core(grid: &Grid, vals: &[f64], omega: &Ball, q: f64, alpha: f64) -> Result<NormReport> {
    check_exponent("q", q)?;
    if !(alpha >= 0.0) {
        return Err(invalid("alpha", format!("{alpha} must be nonnegative")));
    }
    let cell = grid.cell_volume();
    let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
    for rho in dyadic_radii(omega.radius, grid.h()) {
        for c in lattice_centers(omega, rho) {
            cands.push((c, rho));
        }
    }
    let values: Vec<f64> = cands
        .par_iter()
        .map(|(c, rho)| {
            let ball = Ball {
                center: c.clone(),
                radius: *rho,
            };
            let ids = grid.nodes_in(&ball);
            rho.powf(-alpha) * lq(ids.iter().map(|&id| vals[id]), cell, q)
        })
        .collect();
    let best = argmax(&values).ok_or(Error::EmptyRegion)?;
    Ok(NormReport {
        value: values[best],
        maximizer: Some(Maximizer {
            center: cands[best].0.clone(),
            radius: cands[best].1,
            apex: None,
        }),
        h: grid.h(),
        tau: None,
        candidates: cands.len(),
    })
}

/// `sup_{B_ρ(x) ⊂ Ω} ρ^{-α} ‖f‖_{q, B_ρ(x)}` over dyadic radii and a centre
/// lattice; `Ω` defaults to the field's domain. The value is a lower bound on
/// the true supremum.
pub fn morrey_norm(
    f: &DiscreteField,
    q: f64,
    alpha: f64,
    omega: Option<&Ball>,
) -> Result<NormReport> {
    let omega = omega.cloned().unwrap_or_else(|| f.grid().domain().clone());
    morrey_core(f.grid(), f.values(), &omega, q, alpha)
}

pub fn morrey_norm_rule(
    f: impl Fn(&Point) -> f64 + Sync,
    q: f64,
    alpha: f64,
    omega: &Ball,
    h: f64,
) -> Result<NormReport> {
    let grid = Grid::new(omega, h)?;
    let vals: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|id| match grid.kind(id) {
            crate::geometry::NodeKind::Interior => f(&grid.position(id)),
            _ => 0.0,
        })
        .collect();
    morrey_core(&grid, &vals, omega, q, alpha)
}

fn parabolic_morrey_core(
    grid: &SpaceTimeGrid,
    levels: &[&[f64]],
    q: f64,
    l: f64,
    alpha: f64,
    omega: &Cylinder,
) -> Result<NormReport> {
    check_exponent("q", q)?;
    check_exponent("l", l)?;
    if !(alpha >= 0.0) {
        return Err(invalid("alpha", format!("{alpha} must be nonnegative")));
    }
    check_within(grid, omega)?;
    let space = grid.space();
    let tau = grid.tau();
    let spatial = omega.spatial();
    let top = spatial.radius.min(omega.duration().sqrt());
    let mut cands: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for rho in dyadic_radii(top, space.h()) {
        if rho * rho < 2.0 * tau {
            break;
        }
        let stride_t = rho * rho / 2.0;
        let apexes: Vec<f64> = (0..)
            .map(|j| omega.t_end() - j as f64 * stride_t)
            .take_while(|t| t - rho * rho >= omega.t_start() - 1e-12)
            .collect();
        for c in lattice_centers(&spatial, rho) {
            for &t in &apexes {
                cands.push((c.clone(), rho, t));
            }
        }
    }
    let values: Vec<f64> = cands
        .par_iter()
        .map(|(c, rho, t)| {
            let ball = Ball {
                center: c.clone(),
                radius: *rho,
            };
            let ids = space.nodes_in(&ball);
            let ks = grid.levels_in(t - rho * rho, *t);
            let slabs: Vec<&[f64]> = ks.iter().map(|&k| levels[k]).collect();
            rho.powf(-alpha) * anisotropic_core(&slabs, &ids, space.cell_volume(), tau, q, l)
        })
        .collect();
    let best = argmax(&values).ok_or(Error::EmptyRegion)?;
    Ok(NormReport {
        value: values[best],
        maximizer: Some(Maximizer {
            center: cands[best].0.clone(),
            radius: cands[best].1,
            apex: Some(cands[best].2),
        }),
        h: space.h(),
        tau: Some(tau),
        candidates: cands.len(),
    })
}

/// Parabolic Morrey norm over sub-cylinders `Q_ρ(x;t) = B_ρ(x) × ]t − ρ², t[`
/// with apex at `t`.
pub fn parabolic_morrey_norm(
    f: &SpaceTimeField,
    q: f64,
    l: f64,
    alpha: f64,
    omega: Option<&Cylinder>,
) -> Result<NormReport> {
    let omega = omega
        .cloned()
        .unwrap_or_else(|| f.grid().cylinder().clone());
    let levels: Vec<&[f64]> = f.levels().iter().map(|v| v.as_slice()).collect();
    parabolic_morrey_core(f.grid(), &levels, q, l, alpha, &omega)
}

/// `R^{1−n/q} ‖b‖_{q, B_{λR}(x⁰)}` for `n/2 < q ≤ n`.
pub fn quantity_n(
    b: &DriftField,
    center: &[f64],
    radius: f64,
    lambda: f64,
    q: f64,
    h: f64,
) -> Result<f64> {
    let dim = b.dim;
    NormParams {
        q,
        l: f64::INFINITY,
    }
    .check_elliptic(dim)?;
    let ball = Ball::new(center.to_vec(), lambda * radius)?;
    let norm = lebesgue_norm_rule(|x| b.magnitude(x, 0.0), q, &ball, h)?;
    Ok(radius.powf(1.0 - dim as f64 / q) * norm)
}

/// `R^{−α} ‖b‖_{q,ℓ,Q_R^{λ,θ}(x⁰;t⁰)}` with `α = n/q + 2/ℓ − 1 ∈ [0, 1[`.
pub fn quantity_n_hat(
    b: &DriftField,
    cyl: &Cylinder,
    params: NormParams,
    h: f64,
    tau: f64,
) -> Result<f64> {
    let dim = b.dim;
    params.check_parabolic(dim)?;
    let alpha = params.alpha(dim);
    let space = Arc::new(Grid::new(&cyl.spatial(), h)?);
    let grid = SpaceTimeGrid::over(cyl, Arc::clone(&space), tau)?;
    let cell = space.cell_volume();
    let slab = |t: f64| {
        let vals: Vec<f64> = space
            .interior()
            .par_iter()
            .map(|&id| b.magnitude(&space.position(id), t))
            .collect();
        lq(vals.into_iter(), cell, params.q)
    };
    let levels: Vec<usize> = (1..grid.levels()).collect();
    let norm = if b.is_time_dependent() {
        let slabs: Vec<f64> = levels.iter().map(|&k| slab(grid.time(k))).collect();
        lq(slabs.into_iter(), grid.tau(), params.l)
    } else {
        let s = slab(0.0);
        lq(std::iter::repeat_n(s, levels.len()), grid.tau(), params.l)
    };
    Ok(cyl.radius.powf(-alpha) * norm)
}

/// `(‖f‖²_{2,∞,Q} + ‖Df‖²_{2,2,Q})^{1/2}` with central-difference gradients.
pub fn v_norm(f: &SpaceTimeField) -> Result<f64> {
    let grid = f.grid();
    let space = grid.space();
    let dim = space.dim();
    let cell = space.cell_volume();
    let h = space.h();
    if space.interior().is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut sup_l2: f64 = 0.0;
    let mut grad2 = 0.0;
    for k in 1..grid.levels() {
        let lv = f.level(k);
        let mut l2 = 0.0;
        let mut g2 = 0.0;
        for &id in space.interior() {
            l2 += lv[id] * lv[id];
            for d in 0..dim {
                let mut plus = [0isize; 3];
                plus[d] = 1;
                let mut minus = [0isize; 3];
                minus[d] = -1;
                let (Some(p), Some(m)) = (space.offset(id, plus), space.offset(id, minus)) else {
                    continue;
                };
                let g = (lv[p] - lv[m]) / (2.0 * h);
                g2 += g * g;
            }
        }
        sup_l2 = sup_l2.max(l2 * cell);
        grad2 += g2 * cell * grid.tau();
    }
    Ok((sup_l2 + grad2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_drift, DriftFamily};
    use crate::geometry::norm;
    use std::f64::consts::PI;

    fn ball(dim: usize, r: f64) -> Ball {
        Ball::centered(dim, r).unwrap()
    }

    #[test]
    fn constant_l2_on_unit_ball() {
        let g = Arc::new(Grid::new(&ball(3, 1.0), 1.0 / 32.0).unwrap());
        let f = DiscreteField::from_fn(Arc::clone(&g), |_| 1.0);
        let v = lebesgue_norm(&f, 2.0, None).unwrap();
        assert!((v - (4.0 * PI / 3.0).sqrt()).abs() / 2.0466 < 0.02);
        let z = DiscreteField::from_fn(g, |_| 0.0);
        for q in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_eq!(lebesgue_norm(&z, q, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn inverse_radius_l2() {
        let v =
            lebesgue_norm_rule(|x| 1.0 / norm(&x[..3]), 2.0, &ball(3, 1.0), 1.0 / 64.0).unwrap();
        let exact = (4.0 * PI).sqrt();
        assert!((v - exact).abs() / exact < 0.02, "{v}");
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = Arc::new(Grid::new(&ball(2, 1.0), 0.25).unwrap());
        let f = DiscreteField::from_fn(g, |_| 1.0);
        let far = Ball::new(vec![5.0, 5.0], 0.1).unwrap();
        assert!(matches!(
            lebesgue_norm(&f, 2.0, Some(&far)),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn anisotropic_of_one_and_consistency() {
        let cyl = Cylinder::standard(2, 1.0).unwrap();
        let g = SpaceTimeGrid::new(&cyl, 1.0 / 32.0, 1.0 / 32.0).unwrap();
        let f = SpaceTimeField::from_fn(g.clone(), |_, _| 1.0);
        let disk = g.space().discrete_measure();
        for (q, l) in [(2.0, 3.0), (1.5, f64::INFINITY)] {
            let v = anisotropic_norm(&f, q, l, None).unwrap();
            assert!((v - disk.powf(1.0 / q)).abs() < 1e-12);
        }
        let f = SpaceTimeField::from_fn(g, |x, t| x[0] * x[0] - t + 0.3 * x[1]);
        let a = anisotropic_norm(&f, 2.5, 2.5, None).unwrap();
        // Space-time midpoint rule over all nodes of all levels.
        let grid = f.grid();
        let mut s = 0.0;
        for k in 1..grid.levels() {
            for &id in grid.space().interior() {
                s += f.level(k)[id].abs().powf(2.5);
            }
        }
        let b = (s * grid.space().cell_volume() * grid.tau()).powf(1.0 / 2.5);
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn morrey_of_one_is_attained_on_largest_ball() {
        let r = morrey_norm_rule(|_| 1.0, 2.0, 0.5, &ball(3, 1.0), 1.0 / 16.0).unwrap();
        let m = r.maximizer.unwrap();
        assert_eq!(m.radius, 1.0);
        assert!((r.value - (4.0 * PI / 3.0).sqrt()).abs() / 2.047 < 0.05);
    }

    #[test]
    fn morrey_zero() {
        let r = morrey_norm_rule(|_| 0.0, 2.0, 0.5, &ball(2, 1.0), 1.0 / 16.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn morrey_refinement_of_lattice_never_decreases() {
        // Halving the radius floor adds candidates but keeps all old ones.
        let f = |x: &Point| (-(x[0] - 0.3).powi(2) * 20.0).exp();
        let coarse = morrey_norm_rule(f, 2.0, 0.5, &ball(2, 1.0), 1.0 / 16.0).unwrap();
        let omega = ball(2, 1.0);
        let g = Grid::new(&omega, 1.0 / 16.0).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|id| f(&g.position(id))).collect();
        assert!(coarse.candidates > 0);
        let fine = morrey_core(&g, &vals, &omega, 2.0, 0.5).unwrap();
        assert!(fine.value >= coarse.value - 1e-15);
    }

    #[test]
    fn parabolic_morrey_time_constant() {
        let cyl = Cylinder::standard(2, 1.0).unwrap();
        let g = SpaceTimeGrid::new(&cyl, 1.0 / 16.0, 1.0 / 64.0).unwrap();
        let f = SpaceTimeField::from_fn(g, |_, _| 1.0);
        let r = parabolic_morrey_norm(&f, 2.0, 2.0, 0.5, None).unwrap();
        // ρ^{-α} (π ρ²)^{1/2} (ρ²)^{1/2} = √π ρ^{3/2} at ρ = 1.
        assert_eq!(r.maximizer.as_ref().unwrap().radius, 1.0);
        assert!((r.value - PI.sqrt()).abs() / PI.sqrt() < 0.05);
        let z = f.map(|_| 0.0);
        assert_eq!(
            parabolic_morrey_norm(&z, 2.0, 2.0, 0.5, None)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn n_of_constant_drift_scales_with_radius() {
        let b = make_drift(DriftFamily::Constant {
            b: vec![1.0, 0.0, 0.0],
        })
        .unwrap();
        let one = quantity_n(&b, &[0.0; 3], 1.0, 1.0, 2.0, 1.0 / 32.0).unwrap();
        assert!((one - (4.0 * PI / 3.0).sqrt()).abs() / one < 0.02);
        let two = quantity_n(&b, &[0.0; 3], 2.0, 1.0, 2.0, 1.0 / 16.0).unwrap();
        assert!((two / one - 2.0).abs() < 1e-12);
        let z = make_drift(DriftFamily::Constant { b: vec![0.0; 3] }).unwrap();
        assert_eq!(quantity_n(&z, &[0.0; 3], 1.0, 1.0, 2.0, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn inadmissible_exponents_name_the_constraint() {
        let b = make_drift(DriftFamily::Constant {
            b: vec![1.0, 0.0, 0.0],
        })
        .unwrap();
        let e = quantity_n(&b, &[0.0; 3], 1.0, 1.0, 1.2, 0.25).unwrap_err();
        assert!(e.to_string().contains("n/2"));
        let e = NormParams { q: 2.0, l: 1.0 }
            .check_parabolic(3)
            .unwrap_err();
        assert!(e.to_string().contains("below 1"));
    }

    #[test]
    fn v_norm_of_linear_function() {
        let cyl = Cylinder::standard(2, 1.0).unwrap();
        let g = SpaceTimeGrid::new(&cyl, 1.0 / 64.0, 1.0 / 64.0).unwrap();
        let f = SpaceTimeField::from_fn(g, |x, _| x[0]);
        let v = v_norm(&f).unwrap();
        let exact = (PI / 4.0 + PI).sqrt();
        assert!((v - exact).abs() / exact < 0.03, "{v} vs {exact}");
        assert_eq!(v_norm(&f.map(|_| 0.0)).unwrap(), 0.0);
    }
}
