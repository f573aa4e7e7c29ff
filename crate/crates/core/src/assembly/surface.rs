use std::sync::Arc;

use super::{AssemblyError, BoundaryFrames, TraceField};
use crate::linalg::{SparseCholesky, TripletBuilder};
use crate::mesh::{BoundarySkeleton, Mesh, Point};

/// Surface-divergence-free boundary data `ν × grad_Γ ψ`.
#[derive(Debug, Clone)]
pub struct RotatedGradient {
    pub field: TraceField,
    /// `‖(∫_Γ f·grad_Γ χⱼ)ⱼ‖ / ‖(∫_Γ |f||grad_Γ χⱼ|)ⱼ‖` over the P1 hat functions
    /// `χⱼ`; zero for an exactly weakly divergence-free field.
    pub divergence_defect: f64,
}

/// Gradients of the three in-plane barycentric coordinates of a triangle.
fn facet_gradients(p: [Point; 3], normal: &Point, area: f64) -> [Point; 3] {
    let s = 1.0 / (2.0 * area);
    [
        normal.cross(&(p[2] - p[1])) * s,
        normal.cross(&(p[0] - p[2])) * s,
        normal.cross(&(p[1] - p[0])) * s,
    ]
}

/// Rotates the facet-wise surface gradient of the P1 interpolant of `psi` by the
/// facet normal and projects it onto vertex values with the surface mass
/// matrix. `psi` holds one value per boundary vertex.
pub fn surface_rotated_gradient(
    mesh: &Mesh,
    boundary: &BoundarySkeleton,
    frames: &Arc<BoundaryFrames>,
    psi: &[f64],
) -> Result<RotatedGradient, AssemblyError> {
    let nb = boundary.vertices.len();
    assert_eq!(psi.len(), nb, "psi needs one value per boundary vertex");
    assert_eq!(frames.len(), nb, "frames belong to a different boundary");

    let mut mass = TripletBuilder::new(nb, nb);
    let mut rhs = vec![[0.0f64; 3]; nb];
    let mut grads = Vec::with_capacity(boundary.facets.len());
    for ((f, &area), n) in boundary.facets.iter().zip(&boundary.areas).zip(&boundary.facet_normals) {
        let loc = f.map(|v| boundary.local_index(v).unwrap());
        let p = f.map(|v| mesh.vertices()[v]);
        let g = facet_gradients(p, n, area);
        let grad_psi: Point = (0..3).map(|a| g[a] * psi[loc[a]]).sum();
        let rotated = n.cross(&grad_psi);
        for a in 0..3 {
            for b in 0..3 {
                mass.push(loc[a], loc[b], area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 });
            }
            for c in 0..3 {
                rhs[loc[a]][c] += rotated[c] * area / 3.0;
            }
        }
        grads.push((loc, g, area));
    }
    let mass = mass.build();
    let chol = SparseCholesky::factor(&mass, 0.0).map_err(|e| AssemblyError::InvalidParams(e.to_string()))?;
    let mut comps = [vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]];
    for (c, comp) in comps.iter_mut().enumerate() {
        for i in 0..nb {
            comp[i] = rhs[i][c];
        }
        chol.solve_in_place(comp);
    }
    let ambient: Vec<Point> = (0..nb).map(|i| Point::new(comps[0][i], comps[1][i], comps[2][i])).collect();
    let field = TraceField::from_ambient(frames, &ambient);

    let tangential = field.ambient_all();
    let mut weak = vec![0.0; nb];
    let mut scale = vec![0.0; nb];
    for (loc, g, area) in &grads {
        let mean: Point = loc.iter().map(|&i| tangential[i]).sum::<Point>() / 3.0;
        for a in 0..3 {
            weak[loc[a]] += area * mean.dot(&g[a]);
            scale[loc[a]] += area * mean.norm() * g[a].norm();
        }
    }
    let num: f64 = weak.iter().map(|x| x * x).sum::<f64>().sqrt();
    let den: f64 = scale.iter().map(|x| x * x).sum::<f64>().sqrt();
    let divergence_defect = if den > 0.0 { num / den } else { 0.0 };
    Ok(RotatedGradient { field, divergence_defect })
}
