//! Outer fixed-point iteration between the velocity-pressure and the microrotation solves.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome<U, W> {
    pub velocity: U,
    pub rotation: W,
    pub iterations: usize,
    /// Value of the lag residual at exit.
    pub residual: f64,
}

/// Alternates `u = stokes_solve(w)` and `w = helmholtz_solve(u)` from `w0`.
///
/// `lag_residual(w_new, w_old)` measures the momentum residual left by solving
/// for `u` with the previous microrotation; the loop stops once it is at most
/// `tol`. With `N = 0` the residual vanishes and one pass suffices. The
/// contraction factor is bounded by `N^2`.
pub fn coupled_picard<U, W, S, H, R>(
    mut stokes_solve: S,
    mut helmholtz_solve: H,
    lag_residual: R,
    w0: W,
    coupling: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome<U, W>>
where
    S: FnMut(&W) -> Result<U>,
    H: FnMut(&U) -> Result<W>,
    R: Fn(&W, &W) -> f64,
{
    crate::params::check_coupling(coupling)?;
    let mut w = w0;
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let u = stokes_solve(&w)?;
        let w_new = helmholtz_solve(&u)?;
        last = lag_residual(&w_new, &w);
        if last <= tol {
            return Ok(PicardOutcome {
                velocity: u,
                rotation: w_new,
                iterations: it,
                residual: last,
            });
        }
        w = w_new;
    }
    Err(Error::NonConvergence {
        solver: "coupled Picard iteration".into(),
        iterations: max_iter,
        residual: last,
        target: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // scalar model: u = 1 + c w, w = 1 + c u, fixed point u = w = 1/(1 - c)
    fn model(c: f64, tol: f64, max_iter: usize) -> Result<PicardOutcome<f64, f64>> {
        coupled_picard(
            |w: &f64| Ok(1.0 + c * w),
            |u: &f64| Ok(1.0 + c * u),
            |a: &f64, b: &f64| c * (a - b).abs(),
            0.0,
            c.sqrt(),
            tol,
            max_iter,
        )
    }

    #[test]
    fn uncoupled_converges_in_one_pass() {
        let out = model(0.0, 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.velocity, 1.0);
    }

    #[test]
    fn stronger_coupling_needs_more_passes() {
        let weak = model(0.09, 1e-12, 500).unwrap();
        let strong = model(0.81, 1e-12, 500).unwrap();
        assert!(strong.iterations > weak.iterations);
        assert!((strong.rotation - 1.0 / 0.19).abs() < 1e-9);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        match model(0.81, 1e-14, 3) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn coupling_of_one_is_rejected() {
        let r = coupled_picard(|_: &f64| Ok(0.0), |_: &f64| Ok(0.0), |_, _| 0.0, 0.0, 1.0, 1e-9, 5);
        assert!(matches!(r, Err(Error::Parameter(_))));
    }
}
