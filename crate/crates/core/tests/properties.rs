use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steklov_core::assembly::{assemble_forms, Discretization, ProblemParams};
use steklov_core::deflation::{
    build_deflated_space, deflated_steklov_spectrum, dirichlet_modes_below, split,
};
use steklov_core::mesh::gmsh::{parse_gmsh, write_gmsh};
use steklov_core::mesh::{extract_boundary, generate_ball_mesh, generate_cube_mesh, Mesh};
use steklov_core::spectral::{dirichlet_spectrum, select_eta, steklov_spectrum, SpectrumCount};

fn cube(n: usize, side: f64) -> Discretization {
    Discretization::new(generate_cube_mesh(n, side).unwrap()).unwrap()
}

/// `Σ_c ∫|∇u_c|²` with per-tet gradients from a 3×3 solve of the edge system.
fn gradient_energy(mesh: &Mesh, u: &[f64]) -> f64 {
    let mut total = 0.0;
    for tet in mesh.tets() {
        let p = mesh.points(tet);
        let e = Matrix3::from_rows(&[
            (p[1] - p[0]).transpose(),
            (p[2] - p[0]).transpose(),
            (p[3] - p[0]).transpose(),
        ]);
        let vol = e.determinant().abs() / 6.0;
        let lu = e.lu();
        for c in 0..3 {
            let rhs = Vector3::from_fn(|k, _| u[3 * tet[k + 1] + c] - u[3 * tet[0] + c]);
            let g = lu.solve(&rhs).unwrap();
            total += vol * g.norm_squared();
        }
    }
    total
}

#[test]
fn curl_plus_div_is_vector_laplacian_on_interior_fields() {
    let mesh = generate_cube_mesh(3, 1.3).unwrap();
    let b = extract_boundary(&mesh).unwrap();
    let f = assemble_forms(&mesh, &b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let u: Vec<f64> = (0..f.num_dofs())
            .map(|i| if b.is_boundary(i / 3) { 0.0 } else { rng.random::<f64>() - 0.5 })
            .collect();
        let lhs = f.curl_curl.bilinear(&u, &u) + f.div_div.bilinear(&u, &u);
        let rhs = gradient_energy(&mesh, &u);
        assert!((lhs - rhs).abs() < 1e-12 * rhs, "{lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembly_ignores_tet_order(order in Just((0..48usize).collect::<Vec<_>>()).prop_shuffle()) {
        let mesh = generate_cube_mesh(2, 1.0).unwrap();
        let shuffled = mesh.with_tet_order(&order);
        let b0 = extract_boundary(&mesh).unwrap();
        let b1 = extract_boundary(&shuffled).unwrap();
        let f0 = assemble_forms(&mesh, &b0).unwrap();
        let f1 = assemble_forms(&shuffled, &b1).unwrap();
        for (a, b) in [(&f0.curl_curl, &f1.curl_curl), (&f0.div_div, &f1.div_div), (&f0.mass, &f1.mass),
                       (&f0.boundary_mass, &f1.boundary_mass)] {
            let diff = (a.to_dense() - b.to_dense()).amax();
            prop_assert!(diff < 1e-14 * a.max_abs());
        }
    }

    #[test]
    fn eta_shift_leaves_lambda_invariant(alpha in -3.0f64..0.5, theta in 0.3f64..3.0, extra in 0.0f64..5.0) {
        let d = cube(2, 1.0);
        let eta0 = select_eta(&d.reduced, alpha, theta).unwrap();
        let a = steklov_spectrum(&d.reduced, &ProblemParams::new(alpha, theta, eta0).unwrap(), SpectrumCount::All).unwrap();
        let b = steklov_spectrum(&d.reduced, &ProblemParams::new(alpha, theta, eta0 + extra).unwrap(), SpectrumCount::All).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }
}

#[test]
fn eigenpairs_satisfy_the_weak_form_against_random_fields() {
    let d = cube(2, 1.0);
    let (alpha, theta) = (0.5, 1.0);
    let eta = select_eta(&d.reduced, alpha, theta).unwrap();
    let params = ProblemParams::new(alpha, theta, eta).unwrap();
    let basis = steklov_spectrum(&d.reduced, &params, SpectrumCount::All).unwrap();
    let s = d.reduced.operator(&params);
    let bm = &d.reduced.boundary_mass;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phis: Vec<Vec<f64>> =
        (0..50).map(|_| (0..d.reduced.dim()).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    for n in 0..basis.len() {
        let u = basis.mode(n);
        let un = s.bilinear(u.as_slice(), u.as_slice()).sqrt();
        for phi in &phis {
            let lhs = s.bilinear(u.as_slice(), phi);
            let rhs = -(basis.lambdas[n] - eta) * bm.bilinear(u.as_slice(), phi);
            let scale = un * s.bilinear(phi, phi).sqrt();
            assert!((lhs - rhs).abs() <= 1e-8 * scale, "mode {n}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn spectrum_is_ordered_and_extends_under_refinement() {
    let params = ProblemParams::new(-1.0, 1.0, 0.0).unwrap();
    let mins: Vec<f64> = [2, 3]
        .iter()
        .map(|&n| {
            let b = steklov_spectrum(&cube(n, 1.0).reduced, &params, SpectrumCount::All).unwrap();
            assert!(b.lambdas.windows(2).all(|w| w[0] >= w[1]));
            *b.lambdas.last().unwrap()
        })
        .collect();
    assert!(mins[1] < mins[0], "{mins:?}");
}

#[test]
fn empty_deflation_reproduces_the_plain_pipeline() {
    let d = cube(2, 1.0);
    let (alpha, theta) = (-1.0, 1.0);
    let defl = dirichlet_modes_below(&d.reduced, alpha, theta, 10).unwrap();
    assert!(defl.is_empty());
    let ds = build_deflated_space(&d.space, &d.reduced, &defl).unwrap();
    let a = deflated_steklov_spectrum(&ds, &defl, SpectrumCount::All).unwrap();
    let eta = select_eta(&d.reduced, alpha, theta).unwrap();
    let b = steklov_spectrum(&d.reduced, &ProblemParams::new(alpha, theta, eta).unwrap(), SpectrumCount::All).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
        assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
    }
}

#[test]
fn deflated_spectrum_is_continuous_in_alpha() {
    let d = cube(3, PI);
    let a = dirichlet_spectrum(&d.reduced, 1.0, SpectrumCount::First(8)).unwrap();
    let a1 = a.values[0];
    let a2 = *a.values.iter().find(|&&v| v > a1 * (1.0 + 1e-6)).unwrap();
    let grid: Vec<f64> = (1..=7).map(|k| a1 + (a2 - a1) * (0.2 + 0.1 * k as f64) - 0.05 * (a2 - a1)).collect();
    let lam: Vec<f64> = grid
        .iter()
        .map(|&alpha| {
            let defl = dirichlet_modes_below(&d.reduced, alpha, 1.0, 20).unwrap();
            assert_eq!(defl.dim(), 3);
            let ds = build_deflated_space(&d.space, &d.reduced, &defl).unwrap();
            deflated_steklov_spectrum(&ds, &defl, SpectrumCount::First(1)).unwrap().lambdas[0]
        })
        .collect();
    let steps: Vec<f64> = lam.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for i in 1..steps.len() - 1 {
        let local = steps[i - 1].max(steps[i + 1]);
        assert!(steps[i] <= 10.0 * local + 1e-12, "jump at step {i}: {steps:?}");
    }
}

#[test]
fn splitting_reconstructs_fields() {
    let d = cube(3, PI);
    let a = dirichlet_spectrum(&d.reduced, 1.0, SpectrumCount::First(4)).unwrap();
    let alpha = 0.5 * (a.values[2] + a.values[3]);
    let defl = dirichlet_modes_below(&d.reduced, alpha, 1.0, 20).unwrap();
    let s0 = d.reduced.operator(&ProblemParams::new(alpha, 1.0, 0.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let v = DVector::from_fn(d.reduced.dim(), |_, _| rng.random::<f64>() - 0.5);
        let (p, q) = split(&defl, &v);
        assert!((&p + &q - &v).amax() < 1e-10 * v.amax());
        for k in 0..defl.dim() {
            let uk = defl.modes.column(k).into_owned();
            let scale = s0.bilinear(uk.as_slice(), uk.as_slice()).abs().sqrt() * v.norm();
            assert!(s0.bilinear(q.as_slice(), uk.as_slice()).abs() < 1e-10 * scale);
        }
    }
}

#[test]
fn gmsh_round_trip_preserves_the_spectrum() {
    let mesh = generate_ball_mesh(1).unwrap();
    let mut buf = Vec::new();
    write_gmsh(&mesh, &mut buf).unwrap();
    let back = parse_gmsh(std::str::from_utf8(&buf).unwrap()).unwrap();
    let params = ProblemParams::new(-1.0, 2.0, 0.0).unwrap();
    let a = steklov_spectrum(&Discretization::new(mesh).unwrap().reduced, &params, SpectrumCount::All).unwrap();
    let b = steklov_spectrum(&Discretization::new(back).unwrap().reduced, &params, SpectrumCount::All).unwrap();
    assert_eq!(a.lambdas, b.lambdas);
}
