//! Finite-difference and series references for the thin-film closure.

use crate::linalg::{CsrMatrix, LuSolver};
use crate::params::{check_coupling, check_rc};
use crate::vtpm::closure_x;
use crate::{Error, Result};

/// Node values of the vertical profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpProfiles {
    pub y: Vec<f64>,
    pub u: Vec<[f64; 2]>,
    pub w: Vec<[f64; 2]>,
}

/// Second-order central differences for
///
/// ```text
/// -u''             - 2N^2 (w')^perp = -q
/// -Rc w'' + 4N^2 w - 2N^2 (u')^perp = -g
/// ```
///
/// on `nodes` equispaced points of `[0, 1]` with `u = w = 0` at both ends,
/// `(v1, v2)^perp = (-v2, v1)`.
pub fn vtpm_bvp_oracle(coupling: f64, rc: f64, q: [f64; 2], g: [f64; 2], nodes: usize) -> Result<BvpProfiles> {
    check_coupling(coupling)?;
    check_rc(rc)?;
    if nodes < 64 {
        return Err(Error::Parameter(format!("oracle: need at least 64 nodes, got {nodes}")));
    }
    let h = 1.0 / (nodes - 1) as f64;
    let inner = nodes - 2;
    let n2 = coupling * coupling;
    // per interior node: u1, u2, w1, w2
    let at = |node: usize, c: usize| 4 * (node - 1) + c;
    let d2 = 1.0 / (h * h);
    let d1 = 1.0 / (2.0 * h);
    let mut trip = Vec::with_capacity(inner * 20);
    for j in 1..=inner {
        for c in 0..4 {
            let (coef, shift) = if c < 2 { (1.0, 0.0) } else { (rc, 4.0 * n2) };
            let r = at(j, c);
            trip.push((r, r, 2.0 * coef * d2 + shift));
            if j > 1 {
                trip.push((r, at(j - 1, c), -coef * d2));
            }
            if j < inner {
                trip.push((r, at(j + 1, c), -coef * d2));
            }
        }
        // -2N^2 (v')^perp: component 1 gets +2N^2 v2', component 2 gets -2N^2 v1'
        for (row, col, sign) in [(0, 3, 1.0), (1, 2, -1.0), (2, 1, 1.0), (3, 0, -1.0)] {
            let r = at(j, row);
            if j < inner {
                trip.push((r, at(j + 1, col), sign * 2.0 * n2 * d1));
            }
            if j > 1 {
                trip.push((r, at(j - 1, col), -sign * 2.0 * n2 * d1));
            }
        }
    }
    let size = 4 * inner;
    let a = CsrMatrix::from_triplets(size, size, &trip);
    let mut rhs = vec![0.0; size];
    for j in 1..=inner {
        rhs[at(j, 0)] = -q[0];
        rhs[at(j, 1)] = -q[1];
        rhs[at(j, 2)] = -g[0];
        rhs[at(j, 3)] = -g[1];
    }
    let x = LuSolver::new(&a)?.solve_checked(&a, &rhs)?;
    let mut u = vec![[0.0; 2]; nodes];
    let mut w = vec![[0.0; 2]; nodes];
    for j in 1..=inner {
        u[j] = [x[at(j, 0)], x[at(j, 1)]];
        w[j] = [x[at(j, 2)], x[at(j, 3)]];
    }
    Ok(BvpProfiles {
        y: (0..nodes).map(|j| j as f64 * h).collect(),
        u,
        w,
    })
}

/// `Phi` from six terms of the Laurent series of `x coth x`.
/// Refuses `x >= 0.5`, where the truncation is no longer below round-off.
pub fn phi_series_oracle(coupling: f64, rc: f64) -> Result<f64> {
    check_coupling(coupling)?;
    check_rc(rc)?;
    let x = closure_x(coupling, rc);
    if x >= 0.5 {
        return Err(Error::Parameter(format!(
            "oracle: x = {x:.4} is outside the series range x < 0.5"
        )));
    }
    // x coth x = 1 + x^2/3 - x^4/45 + 2x^6/945 - x^8/4725 + 2x^10/93555 - 1382x^12/638512875
    const C: [f64; 6] = [
        1.0 / 3.0,
        -1.0 / 45.0,
        2.0 / 945.0,
        -1.0 / 4725.0,
        2.0 / 93555.0,
        -1382.0 / 638512875.0,
    ];
    let x2 = x * x;
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * x2 + c;
    }
    let one_minus = -x2 * acc;
    Ok(1.0 / 12.0 + rc / (4.0 * (1.0 - coupling * coupling)) * one_minus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newtonian_profile_is_the_parabola() {
        let p = vtpm_bvp_oracle(0.0, 0.4, [1.0, -2.0], [0.0, 0.0], 101).unwrap();
        for (y, u) in p.y.iter().zip(&p.u) {
            let par = -0.5 * y * (1.0 - y);
            assert!((u[0] - par).abs() < 1e-12);
            assert!((u[1] + 2.0 * par).abs() < 1e-12);
        }
        assert!(p.w.iter().all(|w| w[0] == 0.0 && w[1] == 0.0));
        // trapezoid of the sampled parabola: -1/12 + h^2/12
        let h = 0.01;
        let int: f64 = p.u.iter().map(|u| u[0]).sum::<f64>() * h;
        assert!((int - (-1.0 / 12.0 + h * h / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn unforced_is_zero() {
        let p = vtpm_bvp_oracle(0.7, 0.1, [0.0; 2], [0.0; 2], 64).unwrap();
        assert!(p.u.iter().chain(&p.w).all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn too_few_nodes_is_refused() {
        assert!(vtpm_bvp_oracle(0.5, 0.1, [1.0, 0.0], [0.0; 2], 63).is_err());
    }

    #[test]
    fn series_constant_term() {
        assert_eq!(phi_series_oracle(0.0, 0.3).unwrap(), 1.0 / 12.0);
        // x = 1 is out of range
        let rc = 0.25 * 0.75;
        assert!((closure_x(0.5, rc) - 1.0).abs() < 1e-15);
        assert!(phi_series_oracle(0.5, rc).is_err());
    }
}
