//! Preconditioned Krylov iterations: conjugate gradients with a Jacobi
//! preconditioner for symmetric operators, BiCGStab with ILU(0) otherwise.

use crate::error::{Error, Result};

use super::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            rel_tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖` (absolute when `b = 0`).
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.matvec(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Ilu0> {
        let (row_ptr, cols, vals) = a.parts();
        let (row_ptr, cols, mut vals) = (row_ptr.to_vec(), cols.to_vec(), vals.to_vec());
        let n = a.dim();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::NotDiagonallyDominant {
                    node: i,
                    weight: 0.0,
                });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[cols[k]] = k;
            }
            for k in row_ptr[i]..diag[i] {
                let j = cols[k];
                let pivot = vals[diag[j]];
                if pivot == 0.0 {
                    return Err(Error::NotDiagonallyDominant {
                        node: j,
                        weight: 0.0,
                    });
                }
                vals[k] /= pivot;
                let lik = vals[k];
                for m in (diag[j] + 1)..row_ptr[j + 1] {
                    let p = pos[cols[m]];
                    if p != usize::MAX {
                        vals[p] -= lik * vals[m];
                    }
                }
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[cols[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 {
            row_ptr,
            cols,
            vals,
            diag,
        })
    }

    /// Solve `L U z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = r[i];
            for k in self.row_ptr[i]..self.diag[i] {
                s -= self.vals[k] * z[self.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (self.diag[i] + 1)..self.row_ptr[i + 1] {
                s -= self.vals[k] * z[self.cols[k]];
            }
            z[i] = s / self.vals[self.diag[i]];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = a.dim();
    let bnorm = norm2(b);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    residual(a, x, b, &mut r);
    let mut history = vec![norm2(&r) / scale];
    if history[0] <= opts.rel_tol {
        return Ok(KrylovOutcome {
            iterations: 0,
            residual: history[0],
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm2(&r) / scale;
        history.push(rel);
        if rel <= opts.rel_tol {
            // Confirm with the true residual.
            residual(a, x, b, &mut r);
            let true_rel = norm2(&r) / scale;
            if true_rel <= opts.rel_tol {
                return Ok(KrylovOutcome {
                    iterations: it,
                    residual: true_rel,
                });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let last = *history.last().unwrap_or(&f64::NAN);
    Err(Error::NoConvergence {
        iterations: history.len() - 1,
        residual: last,
        history,
    })
}

/// ILU(0)-preconditioned BiCGStab.
pub fn bicgstab(
    a: &CsrMatrix,
    ilu: &Ilu0,
    b: &[f64],
    x: &mut [f64],
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = a.dim();
    let bnorm = norm2(b);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut r = vec![0.0; n];
    residual(a, x, b, &mut r);
    let mut history = vec![norm2(&r) / scale];
    if history[0] <= opts.rel_tol {
        return Ok(KrylovOutcome {
            iterations: 0,
            residual: history[0],
        });
    }
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarts = 0;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // Breakdown: restart from the current residual.
            restarts += 1;
            if restarts > 50 {
                break;
            }
            residual(a, x, b, &mut r);
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu.apply(&p, &mut y);
        a.matvec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            omega = 0.0;
            continue;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / scale <= opts.rel_tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            residual(a, x, b, &mut r);
            let rel = norm2(&r) / scale;
            history.push(rel);
            if rel <= opts.rel_tol {
                return Ok(KrylovOutcome {
                    iterations: it,
                    residual: rel,
                });
            }
            omega = 0.0;
            continue;
        }
        ilu.apply(&s, &mut zz);
        a.matvec(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm2(&r) / scale;
        history.push(rel);
        if rel <= opts.rel_tol {
            residual(a, x, b, &mut r);
            let true_rel = norm2(&r) / scale;
            if true_rel <= opts.rel_tol {
                return Ok(KrylovOutcome {
                    iterations: it,
                    residual: true_rel,
                });
            }
        }
    }
    let last = *history.last().unwrap_or(&f64::NAN);
    Err(Error::NoConvergence {
        iterations: it,
        residual: last,
        history,
    })
}
