//! Assembly of the curl-curl, div-div, volume-mass and boundary-mass forms over
//! continuous piecewise-linear vector fields, and the tangential constraint
//! basis realizing `u·ν = 0` at boundary vertices.

mod space;
mod surface;

pub use space::{
    build_constraint_basis, form_matrix, form_product, tangential_trace, BoundaryFrames, FemSpace, ReducedForms,
    TangentFrame, TraceField,
};
pub use surface::{surface_rotated_gradient, RotatedGradient};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::{extract_boundary, signed_volume, BoundarySkeleton, Mesh, Point};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssemblyError {
    #[error("tet {tet} is inverted or degenerate (volume {volume:e})")]
    InvertedTet { tet: usize, volume: f64 },
    #[error("boundary vertex {vertex} has a zero normal")]
    ZeroNormal { vertex: usize },
    #[error("invalid problem parameters: {0}")]
    InvalidParams(String),
}

/// The coefficients `α`, `θ` and the boundary shift `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub alpha: f64,
    pub theta: f64,
    pub eta: f64,
}

impl ProblemParams {
    pub fn new(alpha: f64, theta: f64, eta: f64) -> Result<Self, AssemblyError> {
        if !alpha.is_finite() {
            return Err(AssemblyError::InvalidParams(format!("alpha must be finite, got {alpha}")));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(AssemblyError::InvalidParams(format!("theta must be positive, got {theta}")));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(AssemblyError::InvalidParams(format!("eta must be nonnegative, got {eta}")));
        }
        Ok(Self { alpha, theta, eta })
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }
}

/// Global matrices over `(P1)³`, three dofs per vertex, vertex-major
/// (`3·v + component`).
#[derive(Debug, Clone)]
pub struct AssembledForms {
    /// `∫ curl u · curl v`
    pub curl_curl: CsrMatrix,
    /// `∫ div u div v`
    pub div_div: CsrMatrix,
    /// `∫ u · v`
    pub mass: CsrMatrix,
    /// `∫_Γ u · v`
    pub boundary_mass: CsrMatrix,
    num_vertices: usize,
}

impl AssembledForms {
    #[inline]
    pub fn dof(vertex: usize, component: usize) -> usize {
        3 * vertex + component
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.num_vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }
}

/// A mesh with its boundary, assembled forms and constrained space.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub boundary: BoundarySkeleton,
    pub forms: AssembledForms,
    pub space: FemSpace,
    pub reduced: ReducedForms,
}

impl Discretization {
    pub fn new(mesh: Mesh) -> crate::Result<Self> {
        let boundary = extract_boundary(&mesh)?;
        let forms = assemble_forms(&mesh, &boundary)?;
        let space = build_constraint_basis(&mesh, &boundary)?;
        let reduced = ReducedForms::new(&space, &forms);
        Ok(Self { mesh, boundary, forms, space, reduced })
    }
}

/// Gradients of the four barycentric coordinates and the volume.
pub(crate) fn p1_gradients(p: &[Point; 4]) -> ([Point; 4], f64) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    let det = e1.dot(&e2.cross(&e3));
    let g1 = e2.cross(&e3) / det;
    let g2 = e3.cross(&e1) / det;
    let g3 = e1.cross(&e2) / det;
    ([-(g1 + g2 + g3), g1, g2, g3], det / 6.0)
}

struct ElementForms {
    curl: [[f64; 12]; 12],
    div: [[f64; 12]; 12],
    mass: [[f64; 12]; 12],
}

fn element_forms(p: &[Point; 4]) -> ElementForms {
    let (g, vol) = p1_gradients(p);
    let mut curl = [[0.0; 12]; 12];
    let mut div = [[0.0; 12]; 12];
    let mut mass = [[0.0; 12]; 12];
    for a in 0..4 {
        for b in 0..4 {
            let gab = g[a].dot(&g[b]);
            let m = vol * if a == b { 0.1 } else { 0.05 };
            for c in 0..3 {
                for d in 0..3 {
                    let (i, j) = (3 * a + c, 3 * b + d);
                    // (∇λa × e_c)·(∇λb × e_d) = (∇λa·∇λb) δcd − ∇λa[d] ∇λb[c]
                    let delta = if c == d { gab } else { 0.0 };
                    curl[i][j] = vol * (delta - g[a][d] * g[b][c]);
                    div[i][j] = vol * g[a][c] * g[b][d];
                    if c == d {
                        mass[i][j] = m;
                    }
                }
            }
        }
    }
    ElementForms { curl, div, mass }
}

pub fn assemble_forms(mesh: &Mesh, boundary: &BoundarySkeleton) -> Result<AssembledForms, AssemblyError> {
    let nv = mesh.num_vertices();
    let n = 3 * nv;
    let elements: Vec<ElementForms> = mesh
        .tets()
        .par_iter()
        .enumerate()
        .map(|(t, tet)| {
            let p = mesh.points(tet);
            let vol = signed_volume(&p);
            if !(vol > 0.0) {
                return Err(AssemblyError::InvertedTet { tet: t, volume: vol });
            }
            Ok(element_forms(&p))
        })
        .collect::<Result<_, _>>()?;

    let cap = 144 * mesh.num_tets();
    let mut k = TripletBuilder::with_capacity(n, n, cap);
    let mut d = TripletBuilder::with_capacity(n, n, cap);
    let mut m = TripletBuilder::with_capacity(n, n, cap / 3);
    for (tet, e) in mesh.tets().iter().zip(&elements) {
        let dofs: [usize; 12] = std::array::from_fn(|i| 3 * tet[i / 3] + i % 3);
        for i in 0..12 {
            for j in 0..12 {
                k.push(dofs[i], dofs[j], e.curl[i][j]);
                d.push(dofs[i], dofs[j], e.div[i][j]);
                if e.mass[i][j] != 0.0 {
                    m.push(dofs[i], dofs[j], e.mass[i][j]);
                }
            }
        }
    }

    let mut b = TripletBuilder::with_capacity(n, n, 27 * boundary.facets.len());
    for (f, area) in boundary.facets.iter().zip(&boundary.areas) {
        for a in 0..3 {
            for bb in 0..3 {
                let w = area * if a == bb { 1.0 / 6.0 } else { 1.0 / 12.0 };
                for c in 0..3 {
                    b.push(3 * f[a] + c, 3 * f[bb] + c, w);
                }
            }
        }
    }

    Ok(AssembledForms {
        curl_curl: k.build(),
        div_div: d.build(),
        mass: m.build(),
        boundary_mass: b.build(),
        num_vertices: nv,
    })
}

/// Scalar P1 stiffness `∫ ∇φ·∇ψ` and mass `∫ φψ`, one dof per vertex.
pub fn assemble_scalar_forms(mesh: &Mesh) -> Result<(CsrMatrix, CsrMatrix), AssemblyError> {
    let nv = mesh.num_vertices();
    let local: Vec<([[f64; 4]; 4], f64)> = mesh
        .tets()
        .par_iter()
        .enumerate()
        .map(|(t, tet)| {
            let p = mesh.points(tet);
            let (g, vol) = p1_gradients(&p);
            if !(vol > 0.0) {
                return Err(AssemblyError::InvertedTet { tet: t, volume: vol });
            }
            let mut s = [[0.0; 4]; 4];
            for a in 0..4 {
                for b in 0..4 {
                    s[a][b] = vol * g[a].dot(&g[b]);
                }
            }
            Ok((s, vol))
        })
        .collect::<Result<_, _>>()?;
    let mut st = TripletBuilder::with_capacity(nv, nv, 16 * mesh.num_tets());
    let mut ms = TripletBuilder::with_capacity(nv, nv, 16 * mesh.num_tets());
    for (tet, (s, vol)) in mesh.tets().iter().zip(&local) {
        for a in 0..4 {
            for b in 0..4 {
                st.push(tet[a], tet[b], s[a][b]);
                ms.push(tet[a], tet[b], vol * if a == b { 0.1 } else { 0.05 });
            }
        }
    }
    Ok((st.build(), ms.build()))
}
