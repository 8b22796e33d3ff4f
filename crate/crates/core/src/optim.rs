//! Damped Newton minimization for small dense convex problems.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

pub(crate) trait Smooth {
    fn value(&self, x: &[f64]) -> f64;
    /// Value, gradient and Hessian at `x`.
    fn derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>);
}

pub(crate) struct NewtonResult {
    pub x: Vec<f64>,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;

/// Newton steps with Levenberg damping whenever the Hessian is not safely positive
/// definite, and Armijo backtracking on the step length.
pub(crate) fn newton<F: Smooth>(f: &F, mut x: Vec<f64>, grad_tol: f64, max_iter: usize) -> NewtonResult {
    for _ in 0..max_iter {
        let (fx, g, h) = f.derivatives(&x);
        if g.iter().all(|v| v.abs() < grad_tol) {
            return NewtonResult { x, converged: true };
        }
        let gv = DVector::from_column_slice(&g);
        let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
        let mut damping = 1e-10 * scale;
        let mut step = None;
        for _ in 0..30 {
            let mut m = h.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += damping;
            }
            if let Some(ch) = m.cholesky() {
                step = Some(-ch.solve(&gv));
                break;
            }
            damping *= 10.0;
        }
        let mut d = step.unwrap_or_else(|| -gv.clone());
        let mut slope = gv.dot(&d);
        if !(slope < 0.0) {
            d = -gv.clone();
            slope = -gv.dot(&gv);
        }

        let mut t = 1.0;
        let mut candidate = x.clone();
        loop {
            for ((c, xi), di) in candidate.iter_mut().zip(&x).zip(d.iter()) {
                *c = xi + t * di;
            }
            let fc = f.value(&candidate);
            if fc <= fx + ARMIJO * t * slope {
                let stalled = fx - fc <= 1e-15 * (1.0 + fx.abs());
                x.copy_from_slice(&candidate);
                if stalled {
                    return NewtonResult { x, converged: true };
                }
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return NewtonResult { x, converged: false };
            }
        }
    }
    NewtonResult { x, converged: false }
}
