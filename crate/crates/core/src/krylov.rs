//! Unpreconditioned conjugate gradient and BiCGStab over a matrix-free
//! operator. All reductions run serially in index order, so results are
//! reproducible bit for bit.

use crate::error::{Error, Result};

#[allow(clippy::len_without_is_empty)]
pub trait LinearOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// `||b - A x||_2 / ||b||_2` of the returned iterate, recomputed from scratch.
    pub relative_residual: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual<A: LinearOperator + ?Sized>(op: &A, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

/// Solve `A x = b` for symmetric positive definite `A`, starting from the
/// contents of `x`. Converged when `||b - A x|| <= tol * ||b||`.
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = op.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let target = tol * b_norm;
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    // Outer loop restarts from the true residual if recurrence drift fools
    // the inner stopping test.
    loop {
        let mut r_norm = true_residual(op, b, x, &mut r);
        if r_norm <= target {
            return Ok(SolveStats {
                iterations,
                relative_residual: r_norm / b_norm,
            });
        }
        if iterations >= max_iter {
            return Err(Error::SolverFailure {
                iterations,
                residual: r_norm / b_norm,
            });
        }
        p.copy_from_slice(&r);
        let mut rr = r_norm * r_norm;
        while iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SolverFailure {
                    iterations,
                    residual: r_norm / b_norm,
                });
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            let rr_new = dot(&r, &r);
            r_norm = rr_new.sqrt();
            if r_norm <= target {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
    }
}

/// BiCGStab for general nonsymmetric `A`; same contract as
/// [`conjugate_gradient`].
pub fn bicgstab<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = op.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let target = tol * b_norm;
    let mut r = vec![0.0; n];
    let mut r_hat = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;

    loop {
        let mut r_norm = true_residual(op, b, x, &mut r);
        if r_norm <= target {
            return Ok(SolveStats {
                iterations,
                relative_residual: r_norm / b_norm,
            });
        }
        if iterations >= max_iter {
            return Err(Error::SolverFailure {
                iterations,
                residual: r_norm / b_norm,
            });
        }
        r_hat.copy_from_slice(&r);
        p.copy_from_slice(&r);
        let mut rho = dot(&r_hat, &r);
        let restart_at = iterations;
        while iterations < max_iter {
            op.apply(&p, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 || !rv.is_finite() {
                break; // breakdown: restart from the true residual
            }
            let alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            iterations += 1;
            if norm(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * p[i];
                }
                break;
            }
            op.apply(&s, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                for i in 0..n {
                    x[i] += alpha * p[i];
                }
                break;
            }
            let omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            r_norm = norm(&r);
            if r_norm <= target || omega == 0.0 {
                break;
            }
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        if !r_norm.is_finite() || iterations == restart_at {
            return Err(Error::SolverFailure {
                iterations,
                residual: r_norm / b_norm,
            });
        }
    }
}
