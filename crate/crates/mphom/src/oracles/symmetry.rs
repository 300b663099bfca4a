//! Quarter-turn map between the `i = 1` and `i = 2` cell solutions.
//!
//! Under the rotation `Q = [[0, -1], [1, 0]]` about the cell centre a solution
//! forced by `e_1` maps to the one forced by `e_2`: `u'` and `w'` rotate as
//! vectors, `u3`, `w3` and the pressure as scalars. On the staggered grid
//! (cell `a` centred at `(a + 1/2) h - 1/2`, node/face `a` at `(a + 1) h - 1/2`)
//! the reflected index is `n - 1 - a` for centres and `n - 2 - a` for nodes.
//! In 3D the map acts level by level with identical placement.

use std::time::Instant;

use super::OracleReport;
use crate::cellsolver::CellSolution;
use crate::geometry::ObstacleShape;
use crate::{Error, Result};

#[derive(Clone, Copy)]
enum Pos {
    Centre,
    Node,
}

/// `new(a, b) = sign * old(b, reflect(a))` applied level by level.
fn rotate(old: &[f64], n: usize, pos: Pos, sign: f64) -> Vec<f64> {
    let nn = n * n;
    let mut out = vec![0.0; old.len()];
    let reflect = |a: usize| match pos {
        Pos::Centre => n - 1 - a,
        Pos::Node => (2 * n - 2 - a) % n,
    };
    for (lvl, chunk) in out.chunks_mut(nn).enumerate() {
        let base = lvl * nn;
        for b in 0..n {
            for a in 0..n {
                chunk[b * n + a] = sign * old[base + reflect(a) * n + b];
            }
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Rotates the `i = 1` solution and compares every field with the `i = 2` one.
pub fn rotation_symmetry_check(
    shape: &ObstacleShape,
    first: &CellSolution,
    second: &CellSolution,
    tolerance: f64,
) -> Result<OracleReport> {
    let start = Instant::now();
    if !shape.is_square_symmetric() {
        return Err(Error::Geometry(format!(
            "rotation check needs a square-symmetric obstacle, got {}",
            shape.name()
        )));
    }
    if first.i != 1 || second.i != 2 || first.k != second.k {
        return Err(Error::Consistency("rotation check pairs (1, k) with (2, k)".into()));
    }
    if first.mask_fingerprint != second.mask_fingerprint
        || first.coupling != second.coupling
        || first.rc != second.rc
        || first.lambda != second.lambda
    {
        return Err(Error::Consistency("rotation check needs solutions of the same problem".into()));
    }
    let n = first.n;
    // x-faces take minus the old y-face field, y-faces take the old x-face field
    let u1 = rotate(&first.velocity[1], n, Pos::Node, -1.0);
    let u2 = rotate(&first.velocity[0], n, Pos::Centre, 1.0);
    let u3 = rotate(&first.velocity[2], n, Pos::Centre, 1.0);
    // w1 lives on y-faces and w2 on x-faces
    let w1 = rotate(&first.rotation[1], n, Pos::Centre, -1.0);
    let w2 = rotate(&first.rotation[0], n, Pos::Node, 1.0);
    let w3 = rotate(&first.rotation[2], n, Pos::Node, 1.0);
    let p = rotate(&first.pressure, n, Pos::Centre, 1.0);
    let discrepancy = [
        max_diff(&u1, &second.velocity[0]),
        max_diff(&u2, &second.velocity[1]),
        max_diff(&u3, &second.velocity[2]),
        max_diff(&w1, &second.rotation[0]),
        max_diff(&w2, &second.rotation[1]),
        max_diff(&w3, &second.rotation[2]),
        max_diff(&p, &second.pressure),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    Ok(OracleReport::new(
        format!("rotation symmetry (k = {})", first.k),
        discrepancy,
        tolerance,
        start.elapsed().as_secs_f64(),
    ))
}
