//! Pressure Schur-complement iteration for the velocity-pressure block.
//!
//! Solves `A u + G p = f`, `G^T u = 0` by conjugate gradients on
//! `S = G^T A^{-1} G` restricted to mean-zero pressures. `A` is block diagonal
//! and applied through its Cholesky factors. The residual of the Schur system
//! equals `G^T u` for the current velocity, so the stopping test is a
//! divergence test.

use super::discrete::{block_solve, Block};
use crate::linalg::{axpy, dot, CsrMatrix};
use crate::{Error, Result};

pub(crate) struct UzawaOutcome {
    pub velocity: Vec<f64>,
    pub iterations: usize,
}

fn project(p: &mut [f64]) {
    if p.is_empty() {
        return;
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    for v in p.iter_mut() {
        *v -= mean;
    }
}

/// `pressure` is the warm start on entry and the solution on exit.
pub(crate) fn uzawa_solve(
    blocks: &[Block],
    g: &CsrMatrix,
    gt: &CsrMatrix,
    f: &[f64],
    pressure: &mut [f64],
    tol_abs: f64,
    max_iter: usize,
) -> Result<UzawaOutcome> {
    project(pressure);
    let mut u: Vec<f64> = f.to_vec();
    let gp = g.mul(pressure);
    axpy(-1.0, &gp, &mut u);
    block_solve(blocks, &mut u);

    let mut r = gt.mul(&u);
    project(&mut r);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol_abs {
        return Ok(UzawaOutcome {
            velocity: u,
            iterations: 0,
        });
    }
    // CG on S p = G^T A^{-1} f with residual r = G^T u, so the update of p
    // along d moves u by -alpha A^{-1} G d and r by -alpha S d.
    let mut d = r.clone();
    for it in 1..=max_iter {
        let mut z = g.mul(&d);
        block_solve(blocks, &mut z);
        let sd = gt.mul(&z);
        let dsd = dot(&d, &sd);
        if dsd <= 0.0 {
            break;
        }
        let alpha = rr / dsd;
        axpy(alpha, &d, pressure);
        axpy(-alpha, &z, &mut u);
        axpy(-alpha, &sd, &mut r);
        project(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol_abs {
            project(pressure);
            return Ok(UzawaOutcome {
                velocity: u,
                iterations: it,
            });
        }
        let beta = rr_new / rr;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
        rr = rr_new;
    }
    Err(Error::NonConvergence {
        solver: "pressure Schur complement".into(),
        iterations: max_iter,
        residual: rr.sqrt(),
        target: tol_abs,
    })
}
