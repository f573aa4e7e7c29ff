//! Tetrahedral meshes, structured test-domain generators and quality statistics.

mod boundary;
pub mod gmsh;
pub mod vtk;

pub use boundary::{extract_boundary, BoundarySkeleton};

use nalgebra::Vector3;
use serde::Serialize;

pub type Point = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("tet {tet} references vertex {vertex} but the mesh has {num_vertices} vertices")]
    IndexOutOfRange { tet: usize, vertex: usize, num_vertices: usize },
    #[error("tet {tet} has non-positive signed volume {volume:e}")]
    NonPositiveVolume { tet: usize, volume: f64 },
    #[error("mesh quality: tet {tet} degenerate after projection (volume {volume:e})")]
    Degenerate { tet: usize, volume: f64 },
    #[error("non-manifold facet {facet:?} shared by {count} tets")]
    NonManifoldFacet { facet: [usize; 3], count: usize },
}

/// Signed volume of the tet `(p0, p1, p2, p3)`; positive for right-handed order.
pub fn signed_volume(p: &[Point; 4]) -> f64 {
    (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))) / 6.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
}

impl Mesh {
    /// Builds a mesh, requiring every tet to be positively oriented.
    pub fn new(vertices: Vec<Point>, tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        let mesh = Self { vertices, tets };
        mesh.check_indices()?;
        for t in 0..mesh.tets.len() {
            let v = mesh.tet_volume(t);
            if !(v > 0.0) {
                return Err(MeshError::NonPositiveVolume { tet: t, volume: v });
            }
        }
        Ok(mesh)
    }

    /// Builds a mesh, swapping two vertices of every negatively oriented tet.
    pub fn from_unoriented(vertices: Vec<Point>, mut tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        let probe = Self { vertices, tets: Vec::new() };
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= probe.vertices.len() {
                    return Err(MeshError::IndexOutOfRange { tet: t, vertex: v, num_vertices: probe.vertices.len() });
                }
            }
        }
        for tet in tets.iter_mut() {
            if signed_volume(&probe.points(tet)) < 0.0 {
                tet.swap(2, 3);
            }
        }
        Self::new(probe.vertices, tets)
    }

    fn check_indices(&self) -> Result<(), MeshError> {
        let nv = self.vertices.len();
        for (t, tet) in self.tets.iter().enumerate() {
            if let Some(&v) = tet.iter().find(|&&v| v >= nv) {
                return Err(MeshError::IndexOutOfRange { tet: t, vertex: v, num_vertices: nv });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn points(&self, tet: &[usize; 4]) -> [Point; 4] {
        tet.map(|v| self.vertices[v])
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.points(&self.tets[t])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.tet_points(t))
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Same mesh with tets listed in a different order.
    pub fn with_tet_order(&self, order: &[usize]) -> Self {
        Self { vertices: self.vertices.clone(), tets: order.iter().map(|&t| self.tets[t]).collect() }
    }
}

const AXES: [usize; 3] = [0, 1, 2];
const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

struct Lattice {
    n: usize,
}

impl Lattice {
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.n + 1) * (j + (self.n + 1) * k)
    }

    /// Six Kuhn tets of the cell with lower corner `(i,j,k)`. `flip[a]` reverses
    /// the diagonal direction along axis `a`.
    fn kuhn_cell(&self, cell: [usize; 3], flip: [bool; 3]) -> impl Iterator<Item = [usize; 4]> + '_ {
        let start = AXES.map(|a| if flip[a] { cell[a] + 1 } else { cell[a] });
        PERMUTATIONS.into_iter().map(move |perm| {
            let mut p = start.map(|c| c as isize);
            let mut tet = [0usize; 4];
            tet[0] = self.index(p[0] as usize, p[1] as usize, p[2] as usize);
            for (step, &a) in perm.iter().enumerate() {
                p[a] += if flip[a] { -1 } else { 1 };
                tet[step + 1] = self.index(p[0] as usize, p[1] as usize, p[2] as usize);
            }
            tet
        })
    }

    fn cells(&self) -> impl Iterator<Item = [usize; 3]> {
        let n = self.n;
        (0..n).flat_map(move |k| (0..n).flat_map(move |j| (0..n).map(move |i| [i, j, k])))
    }

    fn nodes(&self) -> impl Iterator<Item = [usize; 3]> {
        let m = self.n + 1;
        (0..m).flat_map(move |k| (0..m).flat_map(move |j| (0..m).map(move |i| [i, j, k])))
    }
}

fn orient(tet: [usize; 4], vertices: &[Point]) -> [usize; 4] {
    let mut tet = tet;
    if signed_volume(&tet.map(|v| vertices[v])) < 0.0 {
        tet.swap(2, 3);
    }
    tet
}

/// Cube `[0, side]³` with `n` cells per axis, each split into six Kuhn tets
/// sharing the cell's main diagonal.
pub fn generate_cube_mesh(n: usize, side: f64) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidParameter("cube subdivisions must be >= 1".into()));
    }
    if !(side > 0.0) || !side.is_finite() {
        return Err(MeshError::InvalidParameter(format!("cube side must be positive, got {side}")));
    }
    let lat = Lattice { n };
    let h = side / n as f64;
    let vertices: Vec<Point> = lat
        .nodes()
        .map(|[i, j, k]| Point::new(i as f64 * h, j as f64 * h, k as f64 * h))
        .collect();
    let tets = lat
        .cells()
        .flat_map(|c| lat.kuhn_cell(c, [false; 3]).collect::<Vec<_>>())
        .map(|t| orient(t, &vertices))
        .collect();
    Mesh::new(vertices, tets)
}

/// Unit ball from the cube `[-1, 1]³` with `2^(refinement+1)` cells per axis.
/// Every lattice point at max-norm `s` is moved radially to Euclidean radius `s`,
/// so the cube surface lands on the unit sphere and interior shells are graded.
/// Kuhn diagonals are mirrored per octant so they point away from the centre.
pub fn generate_ball_mesh(refinement: u32) -> Result<Mesh, MeshError> {
    if refinement > 8 {
        return Err(MeshError::InvalidParameter(format!("ball refinement {refinement} too large")));
    }
    let n = 1usize << (refinement + 1);
    let lat = Lattice { n };
    let half = n / 2;
    let cube: Vec<Point> = lat
        .nodes()
        .map(|ijk| ijk.map(|c| (c as f64 - half as f64) / half as f64))
        .map(|[x, y, z]| Point::new(x, y, z))
        .collect();
    let tets: Vec<[usize; 4]> = lat
        .cells()
        .flat_map(|c| lat.kuhn_cell(c, c.map(|ci| ci < half)).collect::<Vec<_>>())
        .map(|t| orient(t, &cube))
        .collect();
    let vertices: Vec<Point> = cube
        .iter()
        .map(|p| {
            let r = p.norm();
            if r == 0.0 {
                *p
            } else {
                p * (p.amax() / r)
            }
        })
        .collect();
    let floor = 1e-3 * (2.0 / n as f64).powi(3) / 6.0;
    for (t, tet) in tets.iter().enumerate() {
        let v = signed_volume(&tet.map(|i| vertices[i]));
        if !(v > floor) {
            return Err(MeshError::Degenerate { tet: t, volume: v });
        }
    }
    Mesh::new(vertices, tets)
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub num_vertices: usize,
    pub num_tets: usize,
    pub num_boundary_facets: usize,
    pub num_boundary_vertices: usize,
    pub total_volume: f64,
    pub min_tet_volume: f64,
    pub max_tet_volume: f64,
    /// Smallest normalized shape quality `6√2 V / ℓ_rms³` (1 for a regular tet).
    pub min_quality: f64,
    pub min_dihedral_deg: f64,
    pub max_dihedral_deg: f64,
}

fn barycentric_gradients(p: &[Point; 4]) -> [Point; 4] {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    let det = e1.dot(&e2.cross(&e3));
    let g1 = e2.cross(&e3) / det;
    let g2 = e3.cross(&e1) / det;
    let g3 = e1.cross(&e2) / det;
    [-(g1 + g2 + g3), g1, g2, g3]
}

pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let mut min_v = f64::INFINITY;
    let mut max_v = 0.0f64;
    let mut min_q = f64::INFINITY;
    let mut min_d = f64::INFINITY;
    let mut max_d = 0.0f64;
    for t in 0..mesh.num_tets() {
        let p = mesh.tet_points(t);
        let v = signed_volume(&p);
        min_v = min_v.min(v);
        max_v = max_v.max(v);
        let mut l2 = 0.0;
        for a in 0..4 {
            for b in a + 1..4 {
                l2 += (p[a] - p[b]).norm_squared();
            }
        }
        let lrms = (l2 / 6.0).sqrt();
        min_q = min_q.min(6.0 * 2f64.sqrt() * v / lrms.powi(3));
        let g = barycentric_gradients(&p);
        for a in 0..4 {
            for b in a + 1..4 {
                let c = -g[a].dot(&g[b]) / (g[a].norm() * g[b].norm());
                let ang = c.clamp(-1.0, 1.0).acos().to_degrees();
                min_d = min_d.min(ang);
                max_d = max_d.max(ang);
            }
        }
    }
    let (nf, nb) = match extract_boundary(mesh) {
        Ok(b) => (b.facets.len(), b.vertices.len()),
        Err(_) => (0, 0),
    };
    MeshStats {
        num_vertices: mesh.num_vertices(),
        num_tets: mesh.num_tets(),
        num_boundary_facets: nf,
        num_boundary_vertices: nb,
        total_volume: mesh.volume(),
        min_tet_volume: min_v,
        max_tet_volume: max_v,
        min_quality: min_q,
        min_dihedral_deg: min_d,
        max_dihedral_deg: max_d,
    }
}
