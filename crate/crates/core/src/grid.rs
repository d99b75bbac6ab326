//! Cell-centered finite-volume grids and operators.
//!
//! Two geometries are supported:
//!
//! - an interval `(0, L)` with `n` cells; its surface consists of the two
//!   end points (node 0 at `y = 0`, node 1 at `y = L`) and carries no
//!   surface diffusion;
//! - a strip `(0, lx) × (0, ly)`, periodic in `x`, with `nx × ny` cells
//!   stored row by row (`cell = j·nx + i`); its surface is the two lines
//!   `y = 0` (nodes `0..nx`) and `y = ly` (nodes `nx..2nx`).
//!
//! Boundary closures are ghost values one cell width outside each boundary
//! face, one per boundary node and species.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::surface::SurfaceState;

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    TooCoarse {
        min: usize,
        got: usize,
    },
    NonPositiveLength,
    /// Ghost values missing or of the wrong size.
    MissingClosure {
        expected: usize,
        got: usize,
    },
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::TooCoarse { min, got } => write!(f, "need at least {min} cells per direction, got {got}"),
            GridError::NonPositiveLength => f.write_str("domain lengths must be positive"),
            GridError::MissingClosure { expected, got } => {
                write!(f, "boundary closure supplies {got} ghost values, expected {expected}")
            }
            GridError::DimensionMismatch { expected, got } => {
                write!(f, "field size {got} does not match the grid ({expected})")
            }
        }
    }
}

impl core::error::Error for GridError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Interval { n: usize, length: f64 },
    Strip { nx: usize, ny: usize, lx: f64, ly: f64 },
}

/// Which side of the domain a boundary node sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Top,
}

impl Geometry {
    pub fn interval(n: usize, length: f64) -> Result<Self, GridError> {
        if n < 3 {
            return Err(GridError::TooCoarse { min: 3, got: n });
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(GridError::NonPositiveLength);
        }
        Ok(Geometry::Interval { n, length })
    }

    pub fn strip(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::TooCoarse { min: 3, got: nx.min(ny) });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(GridError::NonPositiveLength);
        }
        Ok(Geometry::Strip { nx, ny, lx, ly })
    }

    pub fn n_cells(&self) -> usize {
        match *self {
            Geometry::Interval { n, .. } => n,
            Geometry::Strip { nx, ny, .. } => nx * ny,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match *self {
            Geometry::Interval { .. } => 2,
            Geometry::Strip { nx, .. } => 2 * nx,
        }
    }

    /// Number of cells across the bounded direction.
    pub fn n_normal(&self) -> usize {
        match *self {
            Geometry::Interval { n, .. } => n,
            Geometry::Strip { ny, .. } => ny,
        }
    }

    /// Number of surface nodes per side.
    pub fn n_tangential(&self) -> usize {
        match *self {
            Geometry::Interval { .. } => 1,
            Geometry::Strip { nx, .. } => nx,
        }
    }

    /// Cell width normal to the surface.
    pub fn h(&self) -> f64 {
        match *self {
            Geometry::Interval { n, length } => length / n as f64,
            Geometry::Strip { ny, ly, .. } => ly / ny as f64,
        }
    }

    /// Cell width along the surface (`None` on the interval).
    pub fn hx(&self) -> Option<f64> {
        match *self {
            Geometry::Interval { .. } => None,
            Geometry::Strip { nx, lx, .. } => Some(lx / nx as f64),
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.h() * self.hx().unwrap_or(1.0)
    }

    /// Surface measure carried by one boundary node (1 for a point).
    pub fn node_measure(&self) -> f64 {
        self.hx().unwrap_or(1.0)
    }

    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.n_cells() as f64
    }

    pub fn surface_area(&self) -> f64 {
        self.node_measure() * self.n_nodes() as f64
    }

    pub fn has_surface_diffusion(&self) -> bool {
        matches!(self, Geometry::Strip { .. })
    }

    pub fn side(&self, node: usize) -> Side {
        if node < self.n_tangential() {
            Side::Bottom
        } else {
            Side::Top
        }
    }

    /// Cell index of the `k`-th cell inward from boundary node `node`
    /// (`k = 0` touches the face).
    pub fn inward_cell(&self, node: usize, k: usize) -> usize {
        let m = self.n_tangential();
        let (side, i) = (self.side(node), node % m);
        let ny = self.n_normal();
        let j = match side {
            Side::Bottom => k,
            Side::Top => ny - 1 - k,
        };
        j * m + i
    }

    /// Cell centre coordinates `(x, y)`; `x = 0` on the interval.
    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let m = self.n_tangential();
        let (i, j) = (cell % m, cell / m);
        let y = (j as f64 + 0.5) * self.h();
        let x = self.hx().map_or(0.0, |hx| (i as f64 + 0.5) * hx);
        (x, y)
    }

    /// Boundary node coordinates.
    pub fn node_position(&self, node: usize) -> (f64, f64) {
        let m = self.n_tangential();
        let y = match self.side(node) {
            Side::Bottom => 0.0,
            Side::Top => self.h() * self.n_normal() as f64,
        };
        let x = self.hx().map_or(0.0, |hx| ((node % m) as f64 + 0.5) * hx);
        (x, y)
    }

    /// Periodic neighbours `(left, right)` of a node on its own side.
    pub fn node_neighbours(&self, node: usize) -> Option<(usize, usize)> {
        match *self {
            Geometry::Interval { .. } => None,
            Geometry::Strip { nx, .. } => {
                let base = node - node % nx;
                let i = node % nx;
                Some((base + (i + nx - 1) % nx, base + (i + 1) % nx))
            }
        }
    }
}

/// Cell-centered values, `data[cell * n_species + species]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkField {
    pub n_species: usize,
    pub data: Vec<f64>,
}

impl BulkField {
    pub fn zeros(n_species: usize, n_cells: usize) -> Self {
        BulkField { n_species, data: vec![0.0; n_species * n_cells] }
    }

    pub fn uniform(values: &[f64], n_cells: usize) -> Self {
        let mut data = Vec::with_capacity(values.len() * n_cells);
        for _ in 0..n_cells {
            data.extend_from_slice(values);
        }
        BulkField { n_species: values.len(), data }
    }

    /// Field from a function of (species, x, y).
    pub fn from_fn(geom: &Geometry, n_species: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(n_species, geom.n_cells());
        for c in 0..geom.n_cells() {
            let (x, y) = geom.cell_center(c);
            for s in 0..n_species {
                out.data[c * n_species + s] = f(s, x, y);
            }
        }
        out
    }

    pub fn n_cells(&self) -> usize {
        self.data.len() / self.n_species
    }

    #[inline]
    pub fn get(&self, cell: usize, species: usize) -> f64 {
        self.data[cell * self.n_species + species]
    }

    #[inline]
    pub fn set(&mut self, cell: usize, species: usize, v: f64) {
        self.data[cell * self.n_species + species] = v;
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.n_species..(cell + 1) * self.n_species]
    }

    pub fn species(&self, species: usize) -> Vec<f64> {
        self.data.iter().skip(species).step_by(self.n_species).copied().collect()
    }
}

/// Surface states on the boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    pub nodes: Vec<SurfaceState>,
}

impl SurfaceField {
    pub fn uniform(state: &SurfaceState, n_nodes: usize) -> Self {
        SurfaceField { nodes: vec![state.clone(); n_nodes] }
    }

    pub fn empty(n_species: usize, n_nodes: usize) -> Self {
        Self::uniform(&SurfaceState::empty(n_species), n_nodes)
    }

    /// Values of slot `k` (0 = vacancy) on every node.
    pub fn slot(&self, k: usize) -> Vec<f64> {
        self.nodes.iter().map(|s| s.theta[k]).collect()
    }
}

fn check_field(f: &BulkField, geom: &Geometry) -> Result<(), GridError> {
    if f.n_cells() != geom.n_cells() || f.data.len() != f.n_species * geom.n_cells() {
        return Err(GridError::DimensionMismatch { expected: geom.n_cells(), got: f.n_cells() });
    }
    Ok(())
}

/// `d_s Δf_s` per cell. `ghosts[node * N + s]` is the ghost value beyond
/// the face of boundary node `node`; faces in the periodic direction need
/// none.
pub fn laplacian_apply(f: &BulkField, geom: &Geometry, d: &[f64], ghosts: &[f64]) -> Result<BulkField, GridError> {
    check_field(f, geom)?;
    let ns = f.n_species;
    if d.len() != ns {
        return Err(GridError::DimensionMismatch { expected: ns, got: d.len() });
    }
    let need = geom.n_nodes() * ns;
    if ghosts.len() != need {
        return Err(GridError::MissingClosure { expected: need, got: ghosts.len() });
    }
    let m = geom.n_tangential();
    let ny = geom.n_normal();
    let h = geom.h();
    let mut out = BulkField::zeros(ns, geom.n_cells());
    for j in 0..ny {
        for i in 0..m {
            let c = j * m + i;
            for s in 0..ns {
                let fc = f.get(c, s);
                let below = if j == 0 { ghosts[i * ns + s] } else { f.get(c - m, s) };
                let above = if j == ny - 1 { ghosts[(m + i) * ns + s] } else { f.get(c + m, s) };
                let mut lap = (below - 2.0 * fc + above) / (h * h);
                if let Some(hx) = geom.hx() {
                    let left = f.get(j * m + (i + m - 1) % m, s);
                    let right = f.get(j * m + (i + 1) % m, s);
                    lap += (left - 2.0 * fc + right) / (hx * hx);
                }
                out.set(c, s, d[s] * lap);
            }
        }
    }
    Ok(out)
}

/// Outward boundary flux `d ∂_n f` through each boundary face implied by
/// the ghost values, multiplied by the face area: the right-hand side of
/// the discrete divergence theorem for [`laplacian_apply`].
pub fn ghost_boundary_flux(f: &BulkField, geom: &Geometry, d: &[f64], ghosts: &[f64]) -> f64 {
    let ns = f.n_species;
    let area = geom.node_measure();
    let h = geom.h();
    let mut total = 0.0;
    for node in 0..geom.n_nodes() {
        let c = geom.inward_cell(node, 0);
        for s in 0..ns {
            total += area * d[s] * (ghosts[node * ns + s] - f.get(c, s)) / h;
        }
    }
    total
}

/// Periodic second difference along each side of the strip; zero on the
/// interval.
pub fn surface_laplacian_apply(g: &[f64], geom: &Geometry) -> Vec<f64> {
    match *geom {
        Geometry::Interval { .. } => vec![0.0; g.len()],
        Geometry::Strip { .. } => {
            let hx = geom.hx().unwrap_or(1.0);
            (0..g.len())
                .map(|k| {
                    // neighbours exist on the strip
                    let (l, r) = geom.node_neighbours(k).unwrap_or((k, k));
                    (g[l] - 2.0 * g[k] + g[r]) / (hx * hx)
                })
                .collect()
        }
    }
}

/// Face values `(3 f_1 − f_2) / 2` extrapolated from the two cells nearest
/// each boundary face; `out[node * N + s]`.
pub fn boundary_trace(f: &BulkField, geom: &Geometry) -> Vec<f64> {
    let ns = f.n_species;
    let mut out = vec![0.0; geom.n_nodes() * ns];
    for node in 0..geom.n_nodes() {
        let c1 = geom.inward_cell(node, 0);
        let c2 = geom.inward_cell(node, 1);
        for s in 0..ns {
            out[node * ns + s] = 0.5 * (3.0 * f.get(c1, s) - f.get(c2, s));
        }
    }
    out
}

/// Outward normal flux `−d ∂_n f` at each boundary face (positive means
/// leaving the domain), from the one-sided quadratic fit through the three
/// nearest cells: `∂_n f ≈ (2 f_1 − 3 f_2 + f_3) / h`.
///
/// Sign convention for `f = y` on `(0, 1)`: `+d` at `y = 0`, `−d` at `y = 1`.
pub fn normal_flux(f: &BulkField, geom: &Geometry, d: &[f64]) -> Vec<f64> {
    let ns = f.n_species;
    let h = geom.h();
    let mut out = vec![0.0; geom.n_nodes() * ns];
    for node in 0..geom.n_nodes() {
        let c = [0, 1, 2].map(|k| geom.inward_cell(node, k));
        for s in 0..ns {
            let dn = (2.0 * f.get(c[0], s) - 3.0 * f.get(c[1], s) + f.get(c[2], s)) / h;
            out[node * ns + s] = -d[s] * dn;
        }
    }
    out
}

/// Midpoint rule `Σ vol · f` for one value per cell.
pub fn integrate_bulk(values: &[f64], geom: &Geometry) -> f64 {
    geom.cell_volume() * values.iter().sum::<f64>()
}

/// Node sum times arc element, one value per boundary node.
pub fn integrate_surface(values: &[f64], geom: &Geometry) -> f64 {
    geom.node_measure() * values.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{log2, sin};
    use core::f64::consts::PI;

    #[test]
    fn quadratic_is_exact_with_dirichlet_ghosts() {
        let g = Geometry::interval(10, 1.0).unwrap();
        let f = BulkField::from_fn(&g, 1, |_, _, y| y * y);
        let h = g.h();
        // ghosts at y = −h/2 and 1 + h/2 of the same parabola
        let ghosts = [h * h / 4.0, (1.0 + h / 2.0) * (1.0 + h / 2.0)];
        let lap = laplacian_apply(&f, &g, &[3.0], &ghosts).unwrap();
        for v in &lap.data {
            assert!((v - 6.0).abs() < 1e-10);
        }
        assert!(matches!(laplacian_apply(&f, &g, &[1.0], &[0.0]), Err(GridError::MissingClosure { .. })));
    }

    #[test]
    fn divergence_theorem_on_strip() {
        let g = Geometry::strip(5, 4, 2.0, 1.0).unwrap();
        let f = BulkField::from_fn(&g, 2, |s, x, y| sin(3.0 * x + s as f64) + y * y * y);
        let ghosts: Vec<f64> = (0..g.n_nodes() * 2).map(|k| 0.1 * k as f64).collect();
        let d = [1.5, 0.5];
        let lap = laplacian_apply(&f, &g, &d, &ghosts).unwrap();
        let interior = g.cell_volume() * lap.data.iter().sum::<f64>();
        let flux = ghost_boundary_flux(&f, &g, &d, &ghosts);
        assert!((interior - flux).abs() < 1e-11);
    }

    #[test]
    fn trace_and_flux_of_affine_field() {
        let g = Geometry::interval(8, 1.0).unwrap();
        let f = BulkField::from_fn(&g, 1, |_, _, y| 2.0 + y);
        let t = boundary_trace(&f, &g);
        assert!((t[0] - 2.0).abs() < 1e-14 && (t[1] - 3.0).abs() < 1e-14);
        let q = normal_flux(&f, &g, &[1.0]);
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] + 1.0).abs() < 1e-12);
        let c = BulkField::uniform(&[4.0], 8);
        assert_eq!(boundary_trace(&c, &g), vec![4.0, 4.0]);
        assert!(normal_flux(&c, &g, &[1.0]).iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn surface_laplacian_order() {
        let err = |nx: usize| {
            let g = Geometry::strip(nx, 3, 1.0, 1.0).unwrap();
            let vals: Vec<f64> = (0..g.n_nodes()).map(|k| sin(2.0 * PI * g.node_position(k).0)).collect();
            let lap = surface_laplacian_apply(&vals, &g);
            lap.iter().zip(&vals).map(|(l, v)| (l + 4.0 * PI * PI * v).abs()).fold(0.0, f64::max)
        };
        let order = log2(err(32) / err(64));
        assert!(order > 1.9, "order {order}");
        let iv = Geometry::interval(4, 1.0).unwrap();
        assert_eq!(surface_laplacian_apply(&[1.0, 2.0], &iv), vec![0.0, 0.0]);
    }

    #[test]
    fn integrals() {
        let g = Geometry::interval(7, 2.5).unwrap();
        assert!((integrate_bulk(&[1.0; 7], &g) - 2.5).abs() < 1e-14);
        let s = Geometry::strip(6, 3, 1.5, 1.0).unwrap();
        assert!((integrate_surface(&vec![1.0; s.n_nodes()], &s) - 3.0).abs() < 1e-14);
    }
}
