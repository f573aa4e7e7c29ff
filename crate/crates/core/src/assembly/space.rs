use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DVector;

use super::{AssembledForms, AssemblyError, ProblemParams};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::{BoundarySkeleton, Mesh, Point};

/// Orthonormal right-handed frame `(t1, t2, ν)` at a boundary vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub normal: Point,
    pub t1: Point,
    pub t2: Point,
}

impl TangentFrame {
    /// `t1` is the coordinate axis with the smallest normal component (lowest
    /// index on ties) crossed with `ν`, `t2 = ν × t1`.
    pub fn from_normal(normal: Point) -> Option<Self> {
        let len = normal.norm();
        if !(len > 0.0) {
            return None;
        }
        let normal = normal / len;
        let mut axis = 0;
        for k in 1..3 {
            if normal[k].abs() < normal[axis].abs() {
                axis = k;
            }
        }
        let e = Point::ith(axis, 1.0);
        let t1 = e.cross(&normal).normalize();
        let t2 = normal.cross(&t1);
        Some(Self { normal, t1, t2 })
    }

    pub fn to_ambient(&self, c: [f64; 2]) -> Point {
        self.t1 * c[0] + self.t2 * c[1]
    }

    pub fn project(&self, v: &Point) -> [f64; 2] {
        [v.dot(&self.t1), v.dot(&self.t2)]
    }
}

/// Boundary vertices and their tangent frames; shared by every object that
/// carries boundary data for one mesh.
#[derive(Debug, Clone)]
pub struct BoundaryFrames {
    pub vertices: Vec<usize>,
    pub frames: Vec<TangentFrame>,
    pub num_mesh_vertices: usize,
}

impl BoundaryFrames {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Discrete tangential field space: constrained coordinates mapped to full
/// `(P1)³` coordinates by `basis`. The first `n_interior` coordinates carry no
/// boundary trace; the remaining `2·n_boundary` are the tangent-frame values
/// at the boundary vertices, in boundary-vertex order.
#[derive(Debug, Clone)]
pub struct FemSpace {
    basis: CsrMatrix,
    n_interior: usize,
    frames: Arc<BoundaryFrames>,
}

impl FemSpace {
    pub(crate) fn from_parts(basis: CsrMatrix, n_interior: usize, frames: Arc<BoundaryFrames>) -> Self {
        debug_assert_eq!(basis.ncols(), n_interior + 2 * frames.len());
        Self { basis, n_interior, frames }
    }

    pub fn basis(&self) -> &CsrMatrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        2 * self.frames.len()
    }

    pub fn frames(&self) -> &Arc<BoundaryFrames> {
        &self.frames
    }

    /// Subspace spanned by the columns of `z` in this space's coordinates; the
    /// first `n_interior` columns of `z` must carry no boundary trace and the
    /// rest must reproduce the boundary coordinates.
    pub fn restricted(&self, z: &CsrMatrix, n_interior: usize) -> FemSpace {
        FemSpace::from_parts(self.basis.matmul(z), n_interior, self.frames.clone())
    }

    /// Full vector-P1 field of a constrained coefficient vector, one 3-vector
    /// per mesh vertex.
    pub fn to_ambient(&self, coeffs: &[f64]) -> Vec<Point> {
        let full = self.basis.mul_vec(coeffs);
        full.chunks(3).map(|c| Point::new(c[0], c[1], c[2])).collect()
    }
}

pub fn build_constraint_basis(mesh: &Mesh, boundary: &BoundarySkeleton) -> Result<FemSpace, AssemblyError> {
    let nv = mesh.num_vertices();
    let mut frames = Vec::with_capacity(boundary.vertices.len());
    for (&v, n) in boundary.vertices.iter().zip(&boundary.vertex_normals) {
        frames.push(TangentFrame::from_normal(*n).ok_or(AssemblyError::ZeroNormal { vertex: v })?);
    }
    let interior: Vec<usize> = (0..nv).filter(|&v| !boundary.is_boundary(v)).collect();
    let n_interior = 3 * interior.len();
    let ncols = n_interior + 2 * frames.len();
    let mut t = TripletBuilder::with_capacity(3 * nv, ncols, n_interior + 6 * frames.len());
    for (i, &v) in interior.iter().enumerate() {
        for c in 0..3 {
            t.push(3 * v + c, 3 * i + c, 1.0);
        }
    }
    for (j, (&v, f)) in boundary.vertices.iter().zip(&frames).enumerate() {
        for c in 0..3 {
            t.push(3 * v + c, n_interior + 2 * j, f.t1[c]);
            t.push(3 * v + c, n_interior + 2 * j + 1, f.t2[c]);
        }
    }
    let frames = Arc::new(BoundaryFrames { vertices: boundary.vertices.clone(), frames, num_mesh_vertices: nv });
    Ok(FemSpace { basis: t.build(), n_interior, frames })
}

/// The assembled forms expressed in constrained coordinates, `Nᵀ X N`.
#[derive(Debug, Clone)]
pub struct ReducedForms {
    pub curl_curl: CsrMatrix,
    pub div_div: CsrMatrix,
    pub mass: CsrMatrix,
    pub boundary_mass: CsrMatrix,
    n_interior: usize,
    frames: Arc<BoundaryFrames>,
}

impl ReducedForms {
    pub fn new(space: &FemSpace, forms: &AssembledForms) -> Self {
        let n = space.basis();
        Self {
            curl_curl: forms.curl_curl.congruence(n),
            div_div: forms.div_div.congruence(n),
            mass: forms.mass.congruence(n),
            boundary_mass: forms.boundary_mass.congruence(n),
            n_interior: space.n_interior(),
            frames: space.frames().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.curl_curl.nrows()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.dim() - self.n_interior
    }

    pub fn frames(&self) -> &Arc<BoundaryFrames> {
        &self.frames
    }

    /// The forms on the subspace spanned by the columns of `z`, `Zᵀ X Z`.
    pub fn restricted(&self, z: &CsrMatrix, n_interior: usize) -> ReducedForms {
        ReducedForms {
            curl_curl: self.curl_curl.congruence(z),
            div_div: self.div_div.congruence(z),
            mass: self.mass.congruence(z),
            boundary_mass: self.boundary_mass.congruence(z),
            n_interior,
            frames: self.frames.clone(),
        }
    }

    /// `S_η = K − αM + θD + ηB`.
    pub fn operator(&self, params: &ProblemParams) -> CsrMatrix {
        CsrMatrix::linear_combination(&[
            (1.0, &self.curl_curl),
            (-params.alpha, &self.mass),
            (params.theta, &self.div_div),
            (params.eta, &self.boundary_mass),
        ])
    }

    /// `K − αM + θD`, the volume part of the form.
    pub fn volume_operator(&self, alpha: f64, theta: f64) -> CsrMatrix {
        CsrMatrix::linear_combination(&[(1.0, &self.curl_curl), (-alpha, &self.mass), (theta, &self.div_div)])
    }

    /// Boundary block of the boundary mass, `B_bb`.
    pub fn boundary_block_mass(&self) -> CsrMatrix {
        let n = self.dim();
        self.boundary_mass.block(self.n_interior..n, self.n_interior..n)
    }
}

/// `S_η = Nᵀ(K − αM + θD + ηB)N`.
pub fn form_matrix(space: &FemSpace, forms: &AssembledForms, params: &ProblemParams) -> CsrMatrix {
    ReducedForms::new(space, forms).operator(params)
}

/// `⟨u, v⟩^η_{α,θ} = uᵀ S_η v`.
pub fn form_product(reduced: &ReducedForms, params: &ProblemParams, u: &[f64], v: &[f64]) -> f64 {
    reduced.operator(params).bilinear(u, v)
}

/// Tangential boundary data, two frame coordinates per boundary vertex.
#[derive(Debug, Clone)]
pub struct TraceField {
    frames: Arc<BoundaryFrames>,
    values: DVector<f64>,
}

impl TraceField {
    pub fn zeros(frames: &Arc<BoundaryFrames>) -> Self {
        Self { frames: frames.clone(), values: DVector::zeros(2 * frames.len()) }
    }

    /// From frame coordinates `[v0.t1, v0.t2, v1.t1, ...]`.
    pub fn from_coords(frames: &Arc<BoundaryFrames>, coords: DVector<f64>) -> Self {
        assert_eq!(coords.len(), 2 * frames.len(), "trace length does not match the boundary");
        Self { frames: frames.clone(), values: coords }
    }

    /// Tangential part of ambient vectors given per boundary vertex.
    pub fn from_ambient(frames: &Arc<BoundaryFrames>, vectors: &[Point]) -> Self {
        assert_eq!(vectors.len(), frames.len(), "one vector per boundary vertex expected");
        let mut values = DVector::zeros(2 * frames.len());
        for (i, (v, f)) in vectors.iter().zip(&frames.frames).enumerate() {
            let [a, b] = f.project(v);
            values[2 * i] = a;
            values[2 * i + 1] = b;
        }
        Self { frames: frames.clone(), values }
    }

    /// Unit value on one frame axis of one boundary vertex.
    pub fn unit(frames: &Arc<BoundaryFrames>, vertex: usize, axis: usize) -> Self {
        let mut t = Self::zeros(frames);
        t.values[2 * vertex + axis] = 1.0;
        t
    }

    pub fn frames(&self) -> &Arc<BoundaryFrames> {
        &self.frames
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.values[2 * i], self.values[2 * i + 1]]
    }

    pub fn ambient(&self, i: usize) -> Point {
        self.frames.frames[i].to_ambient(self.at(i))
    }

    pub fn ambient_all(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.ambient(i)).collect()
    }

    /// Per-mesh-vertex ambient vectors, zero off the boundary.
    pub fn ambient_on_mesh(&self) -> Vec<Point> {
        let mut out = vec![Point::zeros(); self.frames.num_mesh_vertices];
        for (i, &v) in self.frames.vertices.iter().enumerate() {
            out[v] = self.ambient(i);
        }
        out
    }

    /// `ν × f`, a quarter turn in each tangent plane.
    pub fn rotate(&self) -> Self {
        let mut values = DVector::zeros(self.values.len());
        for i in 0..self.len() {
            let [a, b] = self.at(i);
            values[2 * i] = -b;
            values[2 * i + 1] = a;
        }
        Self { frames: self.frames.clone(), values }
    }

    /// `f × ν`.
    pub fn cross_normal(&self) -> Self {
        self.rotate() * -1.0
    }

    pub fn same_boundary(&self, other: &Arc<BoundaryFrames>) -> bool {
        Arc::ptr_eq(&self.frames, other)
    }

    /// `(f, g)_{TL²(Γ)}` with the boundary-block mass.
    pub fn inner(&self, other: &TraceField, boundary_mass: &CsrMatrix) -> f64 {
        boundary_mass.bilinear(self.values.as_slice(), other.values.as_slice())
    }

    pub fn l2_norm(&self, boundary_mass: &CsrMatrix) -> f64 {
        self.inner(self, boundary_mass).max(0.0).sqrt()
    }
}

impl Add for &TraceField {
    type Output = TraceField;
    fn add(self, rhs: &TraceField) -> TraceField {
        assert!(Arc::ptr_eq(&self.frames, &rhs.frames), "traces on different boundaries");
        TraceField { frames: self.frames.clone(), values: &self.values + &rhs.values }
    }
}

impl Sub for &TraceField {
    type Output = TraceField;
    fn sub(self, rhs: &TraceField) -> TraceField {
        assert!(Arc::ptr_eq(&self.frames, &rhs.frames), "traces on different boundaries");
        TraceField { frames: self.frames.clone(), values: &self.values - &rhs.values }
    }
}

impl Mul<f64> for TraceField {
    type Output = TraceField;
    fn mul(mut self, s: f64) -> TraceField {
        self.values *= s;
        self
    }
}

/// `π_T u`: the boundary block of a constrained coefficient vector.
pub fn tangential_trace(space: &FemSpace, coeffs: &[f64]) -> TraceField {
    assert_eq!(coeffs.len(), space.dim());
    let nb = space.n_boundary();
    TraceField::from_coords(space.frames(), DVector::from_column_slice(&coeffs[space.n_interior()..][..nb]))
}
