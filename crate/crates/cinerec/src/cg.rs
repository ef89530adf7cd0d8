//! Conjugate gradients for Hermitian positive definite systems over complex
//! vectors, used by the ADMM x-update.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub struct CgOutcome {
    pub x: Vec<Complex64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// CG from x0 = 0; stops when ||Ax - b|| / ||b|| <= tol or after max_iters.
pub fn cg_solve<F>(apply_a: F, b: &[Complex64], tol: f64, max_iters: usize) -> Result<CgOutcome>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome { x: vec![Complex64::new(0.0, 0.0); n], relative_residual: 0.0, iterations: 0 });
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs_old = dot(&r, &r).re;
    let mut iterations = 0;
    for _ in 0..max_iters {
        if rs_old.sqrt() / b_norm <= tol {
            break;
        }
        let ap = apply_a(&p)?;
        let pap = dot(&p, &ap);
        if !pap.re.is_finite() || pap.re <= 0.0 {
            return Err(Error::Numerical(format!(
                "cg: operator is not positive definite (p^H A p = {pap})"
            )));
        }
        let alpha = rs_old / pap.re;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r).re;
        if !rs_new.is_finite() {
            return Err(Error::Numerical("cg: non-finite residual".into()));
        }
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
        iterations += 1;
    }
    Ok(CgOutcome { x, relative_residual: rs_old.sqrt() / b_norm, iterations })
}
