//! Periodic unit cell, its staircase discretization, and the macroscopic domain.
//!
//! The unit cell is `(-1/2, 1/2)^2` split into `n x n` square cells. Cell
//! `(i, j)` has centre `(-1/2 + (i + 1/2) h, -1/2 + (j + 1/2) h)` with `h = 1/n`.
//! Flat storage is row-major in `j`: `index = j * n + i`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Obstacle centred in the unit cell. Lengths are fractions of the cell side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum ObstacleShape {
    None,
    Disk { radius: f64 },
    Square { half_side: f64 },
    Ellipse { a: f64, b: f64 },
}

impl ObstacleShape {
    pub fn name(&self) -> &'static str {
        match self {
            ObstacleShape::None => "none",
            ObstacleShape::Disk { .. } => "disk",
            ObstacleShape::Square { .. } => "square",
            ObstacleShape::Ellipse { .. } => "ellipse",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            ObstacleShape::None => vec![],
            ObstacleShape::Disk { radius } => vec![radius],
            ObstacleShape::Square { half_side } => vec![half_side],
            ObstacleShape::Ellipse { a, b } => vec![a, b],
        }
    }

    /// Strict interior membership of a point in the obstacle.
    pub fn contains(&self, y1: f64, y2: f64) -> bool {
        match *self {
            ObstacleShape::None => false,
            ObstacleShape::Disk { radius } => y1 * y1 + y2 * y2 < radius * radius,
            ObstacleShape::Square { half_side } => y1.abs() < half_side && y2.abs() < half_side,
            ObstacleShape::Ellipse { a, b } => (y1 / a).powi(2) + (y2 / b).powi(2) < 1.0,
        }
    }

    /// Invariant under a quarter turn about the cell centre.
    pub fn is_square_symmetric(&self) -> bool {
        match *self {
            ObstacleShape::Ellipse { a, b } => a == b,
            _ => true,
        }
    }

    /// Exact area of the obstacle.
    pub fn area(&self) -> f64 {
        match *self {
            ObstacleShape::None => 0.0,
            ObstacleShape::Disk { radius } => std::f64::consts::PI * radius * radius,
            ObstacleShape::Square { half_side } => 4.0 * half_side * half_side,
            ObstacleShape::Ellipse { a, b } => std::f64::consts::PI * a * b,
        }
    }

    fn validate(&self) -> Result<()> {
        let extents = self.params();
        for &e in &extents {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Geometry(format!(
                    "{} size {e} must be positive",
                    self.name()
                )));
            }
            if e >= 0.5 {
                return Err(Error::Geometry(format!(
                    "{} size {e} reaches the cell boundary; the obstacle must lie strictly inside (-1/2, 1/2)^2",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

/// Unit cell description: obstacle, horizontal resolution `n`, vertical resolution `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub shape: ObstacleShape,
    pub n: usize,
    pub m: usize,
}

impl CellGeometry {
    pub fn new(shape: ObstacleShape, n: usize, m: usize) -> Self {
        CellGeometry { shape, n, m }
    }

    /// Hex SHA-256 of shape, parameters and the resolutions that are used.
    pub fn hash(&self, dim: Dim) -> String {
        let mut key = format!("shape={};param=", self.shape.name());
        for p in self.shape.params() {
            key.push_str(&format!("{p:?},"));
        }
        key.push_str(&format!(";n={}", self.n));
        if dim == Dim::Three {
            key.push_str(&format!(";m={}", self.m));
        }
        hex::encode(Sha256::digest(key.as_bytes()))
    }
}

/// Fluid flags on the staggered locations of the periodic `n x n` grid.
///
/// Locations: cell centres `C(i,j)`, right faces `X(i,j)` between `C(i,j)` and
/// `C(i+1,j)`, top faces `Y(i,j)` between `C(i,j)` and `C(i,j+1)`, and nodes
/// `V(i,j)` shared by `C(i,j), C(i+1,j), C(i,j+1), C(i+1,j+1)`. A face is fluid
/// iff both neighbouring cells are; a node iff all four are. In 3D the same
/// flags hold on every horizontal slice (full-height cylinder).
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredMask {
    n: usize,
    layers: Option<usize>,
    cell: Vec<bool>,
    x_face: Vec<bool>,
    y_face: Vec<bool>,
    node: Vec<bool>,
}

#[inline]
pub fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

impl StaggeredMask {
    /// Builds the derived face and node flags from cell flags. `layers` is `Some(m)` for 3D.
    pub fn from_cells(n: usize, layers: Option<usize>, cell: Vec<bool>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Geometry(format!("resolution n = {n} is too small")));
        }
        if cell.len() != n * n {
            return Err(Error::Geometry(format!(
                "cell flag count {} does not match n^2 = {}",
                cell.len(),
                n * n
            )));
        }
        if let Some(m) = layers {
            if m < 2 {
                return Err(Error::Geometry(format!("vertical resolution m = {m} is too small")));
            }
        }
        let idx = |i: usize, j: usize| j * n + i;
        let mut x_face = vec![false; n * n];
        let mut y_face = vec![false; n * n];
        let mut node = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let ip = (i + 1) % n;
                let jp = (j + 1) % n;
                let c = cell[idx(i, j)];
                x_face[idx(i, j)] = c && cell[idx(ip, j)];
                y_face[idx(i, j)] = c && cell[idx(i, jp)];
                node[idx(i, j)] = c && cell[idx(ip, j)] && cell[idx(i, jp)] && cell[idx(ip, jp)];
            }
        }
        Ok(StaggeredMask {
            n,
            layers,
            cell,
            x_face,
            y_face,
            node,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn layers(&self) -> Option<usize> {
        self.layers
    }

    pub fn dim(&self) -> Dim {
        if self.layers.is_some() {
            Dim::Three
        } else {
            Dim::Two
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn cells(&self) -> &[bool] {
        &self.cell
    }

    pub fn x_faces(&self) -> &[bool] {
        &self.x_face
    }

    pub fn y_faces(&self) -> &[bool] {
        &self.y_face
    }

    pub fn nodes(&self) -> &[bool] {
        &self.node
    }

    pub fn fluid_cell_count(&self) -> usize {
        self.cell.iter().filter(|&&c| c).count()
    }

    pub fn has_solid(&self) -> bool {
        self.cell.iter().any(|&c| !c)
    }

    /// Digest of resolution and cell flags, used to check that solutions share a mask.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update((self.layers.unwrap_or(0) as u64).to_le_bytes());
        let bits: Vec<u8> = self.cell.iter().map(|&c| c as u8).collect();
        hasher.update(&bits);
        hex::encode(hasher.finalize())
    }

    /// Fraction of fluid cells.
    pub fn porosity(&self) -> f64 {
        self.fluid_cell_count() as f64 / (self.n * self.n) as f64
    }

    /// True when the fluid cells form one 4-connected periodic component.
    pub fn fluid_connected(&self) -> bool {
        let n = self.n;
        let total = self.fluid_cell_count();
        let Some(start) = self.cell.iter().position(|&c| c) else {
            return false;
        };
        let mut seen = vec![false; n * n];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(k) = stack.pop() {
            reached += 1;
            let (i, j) = ((k % n) as isize, (k / n) as isize);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let nb = self.idx(wrap(i + di, n), wrap(j + dj, n));
                if self.cell[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        reached == total
    }

    /// Plain PGM (P2) image of the cell flags, 1 = fluid, top row is the largest `j`.
    pub fn to_pgm(&self) -> String {
        let n = self.n;
        let mut out = format!("P2\n{n} {n}\n1\n");
        for j in (0..n).rev() {
            let row: Vec<&str> = (0..n)
                .map(|i| if self.cell[self.idx(i, j)] { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Staircase mask of the cell: a grid cell is solid iff its centre is inside the obstacle.
pub fn build_cell_mask(geom: &CellGeometry, dim: Dim) -> Result<StaggeredMask> {
    geom.shape.validate()?;
    let n = geom.n;
    if n < 2 {
        return Err(Error::Geometry(format!("resolution n = {n} is too small")));
    }
    let h = 1.0 / n as f64;
    let centre = |i: usize| -0.5 + (i as f64 + 0.5) * h;
    let mut cell = vec![true; n * n];
    for j in 0..n {
        for i in 0..n {
            if geom.shape.contains(centre(i), centre(j)) {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    return Err(Error::Geometry(format!(
                        "{} obstacle reaches the outer ring of the {n}x{n} grid",
                        geom.shape.name()
                    )));
                }
                cell[j * n + i] = false;
            }
        }
    }
    let layers = match dim {
        Dim::Two => None,
        Dim::Three => Some(geom.m),
    };
    let mask = StaggeredMask::from_cells(n, layers, cell)?;
    if mask.fluid_cell_count() == 0 {
        return Err(Error::Geometry("no fluid cells".into()));
    }
    if !mask.fluid_connected() {
        return Err(Error::Geometry("fluid region is not connected".into()));
    }
    Ok(mask)
}

/// Porosity of a mask (fluid cell fraction).
pub fn porosity(mask: &StaggeredMask) -> f64 {
    mask.porosity()
}

/// Rectangle `(0, lx) x (0, ly)` with an `nx x ny` cell-centred grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroDomain {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl MacroDomain {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::Geometry(format!(
                "domain extents must be positive, got {lx} x {ly}"
            )));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::Geometry(format!(
                "macro grid needs at least 2 cells per side, got {nx} x {ny}"
            )));
        }
        Ok(MacroDomain { lx, ly, nx, ny })
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn centre(&self, a: usize, b: usize) -> (f64, f64) {
        ((a as f64 + 0.5) * self.dx(), (b as f64 + 0.5) * self.dy())
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(r: f64, n: usize) -> CellGeometry {
        CellGeometry::new(ObstacleShape::Disk { radius: r }, n, 8)
    }

    #[test]
    fn empty_cell_is_all_fluid() {
        let g = CellGeometry::new(ObstacleShape::None, 16, 8);
        let m = build_cell_mask(&g, Dim::Two).unwrap();
        assert_eq!(m.fluid_cell_count(), 256);
        assert_eq!(porosity(&m), 1.0);
        assert!(m.x_faces().iter().all(|&f| f));
        assert!(m.nodes().iter().all(|&f| f));
    }

    #[test]
    fn disk_porosity_matches_centre_count() {
        let n = 64;
        let m = build_cell_mask(&disk(0.25, n), Dim::Two).unwrap();
        let h = 1.0 / n as f64;
        let mut inside = 0;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (-0.5 + (i as f64 + 0.5) * h, -0.5 + (j as f64 + 0.5) * h);
                if (x * x + y * y).sqrt() < 0.25 {
                    inside += 1;
                }
            }
        }
        let expected = 1.0 - inside as f64 / (n * n) as f64;
        assert_eq!(porosity(&m), expected);
        assert!((porosity(&m) - (1.0 - std::f64::consts::PI / 16.0)).abs() < 5e-3);
    }

    #[test]
    fn disk_porosity_approaches_area() {
        let exact = 1.0 - std::f64::consts::PI / 16.0;
        let err = |n| (porosity(&build_cell_mask(&disk(0.25, n), Dim::Two).unwrap()) - exact).abs();
        assert!(err(256) < err(16));
        assert!(err(256) < 1e-3);
    }

    #[test]
    fn touching_obstacles_are_rejected() {
        for n in [8, 16, 33] {
            assert!(matches!(
                build_cell_mask(&disk(0.5, n), Dim::Two),
                Err(Error::Geometry(_))
            ));
        }
        let sq = CellGeometry::new(ObstacleShape::Square { half_side: 0.49 }, 16, 8);
        assert!(build_cell_mask(&sq, Dim::Two).is_err());
        assert!(build_cell_mask(&disk(-0.1, 16), Dim::Two).is_err());
    }

    #[test]
    fn half_solid_mask_has_half_porosity() {
        let n = 8;
        let cell: Vec<bool> = (0..n * n).map(|k| (k % n) < n / 2).collect();
        let m = StaggeredMask::from_cells(n, None, cell).unwrap();
        assert_eq!(m.porosity(), 0.5);
    }

    #[test]
    fn blocked_channel_is_disconnected() {
        let n = 8;
        // two solid columns split the periodic cell into two strips
        let cell: Vec<bool> = (0..n * n).map(|k| !matches!(k % n, 2 | 6)).collect();
        let m = StaggeredMask::from_cells(n, None, cell).unwrap();
        assert!(!m.fluid_connected());
    }

    #[test]
    fn face_flags_follow_cells() {
        let m = build_cell_mask(&disk(0.3, 20), Dim::Two).unwrap();
        let n = m.n();
        for j in 0..n {
            for i in 0..n {
                let c = m.cells()[m.idx(i, j)];
                let right = m.cells()[m.idx((i + 1) % n, j)];
                assert_eq!(m.x_faces()[m.idx(i, j)], c && right);
            }
        }
    }

    #[test]
    fn slices_of_3d_mask_match_2d() {
        let g = disk(0.25, 24);
        let m2 = build_cell_mask(&g, Dim::Two).unwrap();
        let m3 = build_cell_mask(&g, Dim::Three).unwrap();
        assert_eq!(m2.cells(), m3.cells());
        assert_eq!(m3.layers(), Some(8));
    }

    #[test]
    fn hash_depends_on_parameters() {
        let a = disk(0.25, 32).hash(Dim::Two);
        assert_eq!(a, disk(0.25, 32).hash(Dim::Two));
        assert_ne!(a, disk(0.26, 32).hash(Dim::Two));
        assert_ne!(a, disk(0.25, 64).hash(Dim::Two));
        assert_ne!(a, disk(0.25, 32).hash(Dim::Three));
    }

    #[test]
    fn pgm_has_one_row_per_line() {
        let m = build_cell_mask(&disk(0.25, 8), Dim::Two).unwrap();
        let pgm = m.to_pgm();
        assert!(pgm.starts_with("P2\n8 8\n1\n"));
        assert_eq!(pgm.lines().count(), 3 + 8);
    }

    #[test]
    fn macro_domain_validates() {
        assert!(MacroDomain::new(1.0, 2.0, 1, 4).is_err());
        assert!(MacroDomain::new(0.0, 2.0, 4, 4).is_err());
        let d = MacroDomain::new(2.0, 1.0, 4, 2).unwrap();
        assert_eq!(d.centre(0, 0), (0.25, 0.25));
    }
}
