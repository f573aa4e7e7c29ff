use std::collections::BTreeMap;

use super::{Mesh, MeshError, Point};

/// Boundary facets of a tet mesh with outward orientation and vertex normals.
#[derive(Debug, Clone)]
pub struct BoundarySkeleton {
    /// Outward-oriented boundary triangles (mesh vertex indices).
    pub facets: Vec<[usize; 3]>,
    pub areas: Vec<f64>,
    /// Unit outward facet normals.
    pub facet_normals: Vec<Point>,
    /// Owning tet of each facet.
    pub facet_tets: Vec<usize>,
    /// Boundary vertices, ascending mesh index.
    pub vertices: Vec<usize>,
    /// Area-weighted averaged facet normals, normalized. A vertex whose
    /// incident normals cancel keeps a zero vector.
    pub vertex_normals: Vec<Point>,
    local: Vec<Option<usize>>,
}

impl BoundarySkeleton {
    /// Position of mesh vertex `v` in [`Self::vertices`], if on the boundary.
    pub fn local_index(&self, v: usize) -> Option<usize> {
        self.local.get(v).copied().flatten()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.local_index(v).is_some()
    }

    pub fn area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// `Σ area · normal`; vanishes for a closed surface.
    pub fn weighted_normal_sum(&self) -> Point {
        self.areas.iter().zip(&self.facet_normals).map(|(a, n)| n * *a).sum()
    }
}

const FACES: [[usize; 4]; 4] = [[1, 2, 3, 0], [0, 3, 2, 1], [0, 1, 3, 2], [0, 2, 1, 3]];

pub fn extract_boundary(mesh: &Mesh) -> Result<BoundarySkeleton, MeshError> {
    let mut seen: BTreeMap<[usize; 3], (usize, usize, [usize; 3])> = BTreeMap::new();
    for (t, tet) in mesh.tets().iter().enumerate() {
        for f in FACES {
            let tri = [tet[f[0]], tet[f[1]], tet[f[2]]];
            let mut key = tri;
            key.sort_unstable();
            let e = seen.entry(key).or_insert((0, t, tri));
            e.0 += 1;
        }
    }

    let verts = mesh.vertices();
    let mut facets = Vec::new();
    let mut areas = Vec::new();
    let mut facet_normals = Vec::new();
    let mut facet_tets = Vec::new();
    for (key, (count, t, tri)) in seen {
        match count {
            1 => {}
            2 => continue,
            _ => return Err(MeshError::NonManifoldFacet { facet: key, count }),
        }
        let mut tri = tri;
        let apex = mesh.tets()[t].iter().copied().find(|v| !tri.contains(v)).unwrap();
        let mut n = (verts[tri[1]] - verts[tri[0]]).cross(&(verts[tri[2]] - verts[tri[0]]));
        if n.dot(&(verts[tri[0]] - verts[apex])) < 0.0 {
            tri.swap(1, 2);
            n = -n;
        }
        let norm = n.norm();
        facets.push(tri);
        areas.push(0.5 * norm);
        facet_normals.push(n / norm);
        facet_tets.push(t);
    }

    let mut local = vec![None; mesh.num_vertices()];
    let mut on_boundary = vec![false; mesh.num_vertices()];
    for f in &facets {
        for &v in f {
            on_boundary[v] = true;
        }
    }
    let vertices: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| on_boundary[v]).collect();
    for (i, &v) in vertices.iter().enumerate() {
        local[v] = Some(i);
    }
    let mut sums = vec![Point::zeros(); vertices.len()];
    let mut weight = vec![0.0; vertices.len()];
    for ((f, a), n) in facets.iter().zip(&areas).zip(&facet_normals) {
        for &v in f {
            let i = local[v].unwrap();
            sums[i] += n * *a;
            weight[i] += a;
        }
    }
    let vertex_normals = sums
        .iter()
        .zip(&weight)
        .map(|(s, w)| {
            let len = s.norm();
            if len <= 1e-12 * w {
                Point::zeros()
            } else {
                s / len
            }
        })
        .collect();

    Ok(BoundarySkeleton { facets, areas, facet_normals, facet_tets, vertices, vertex_normals, local })
}
