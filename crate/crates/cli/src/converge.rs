//! Refinement studies: per-level values, observed orders and reliability.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use steklov_core::assembly::{surface_rotated_gradient, Discretization, ProblemParams};
use steklov_core::calderon::direct_solve;
use steklov_core::mesh::{generate_ball_mesh, generate_cube_mesh, Mesh};
use steklov_core::spectral::{
    dirichlet_spectrum, neumann_laplacian_spectrum, select_eta, steklov_spectrum, SpectrumCount,
};

use crate::config::{Domain, Eta, Params, Quantity};
use crate::expr::Polynomial;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConvergeError {
    #[error("a convergence study needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("levels must be strictly increasing")]
    UnorderedLevels,
    #[error("convergence studies need a cube or ball domain")]
    UnsupportedDomain,
}

pub fn check_levels(levels: &[u32]) -> Result<(), ConvergeError> {
    if levels.len() < 3 {
        return Err(ConvergeError::TooFewLevels(levels.len()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConvergeError::UnorderedLevels);
    }
    Ok(())
}

/// Mesh size of a refinement level: `side/n` for the cube, `2^{-r}` for the ball.
pub fn mesh_size(domain: &Domain, level: u32) -> Result<f64, ConvergeError> {
    match domain {
        Domain::Cube { side, .. } => Ok(side / level as f64),
        Domain::Ball { .. } => Ok(0.5f64.powi(level as i32)),
        Domain::Gmsh { .. } => Err(ConvergeError::UnsupportedDomain),
    }
}

pub fn level_mesh(domain: &Domain, level: u32) -> steklov_core::Result<Mesh> {
    match domain {
        Domain::Cube { side, .. } => Ok(generate_cube_mesh(level as usize, *side)?),
        Domain::Ball { .. } => Ok(generate_ball_mesh(level)?),
        Domain::Gmsh { .. } => unreachable!("rejected by check_levels callers"),
    }
}

/// Known limit of a quantity, where one exists.
pub fn exact_value(domain: &Domain, q: Quantity, theta: f64) -> Option<f64> {
    match (q, domain) {
        (Quantity::DivNorm, _) => Some(0.0),
        (Quantity::A1, Domain::Cube { side, .. }) if theta == 1.0 => Some(3.0 * (PI / side).powi(2)),
        (Quantity::LambdaN2, Domain::Cube { side, .. }) => Some((PI / side).powi(2)),
        _ => None,
    }
}

/// `√(uᵀDu) / √(uᵀMu)` of the solution with data `ν × grad_Γ ψ`.
pub fn divergence_ratio(disc: &Discretization, params: &ProblemParams, psi: &Polynomial) -> steklov_core::Result<f64> {
    let values: Vec<f64> = disc
        .boundary
        .vertices
        .iter()
        .map(|&v| {
            let p = disc.mesh.vertices()[v];
            psi.eval([p.x, p.y, p.z])
        })
        .collect();
    let g = surface_rotated_gradient(&disc.mesh, &disc.boundary, disc.space.frames(), &values)?;
    let u = direct_solve(&disc.reduced, &params.with_eta(0.0), &g.field)?;
    let div = disc.reduced.div_div.bilinear(u.as_slice(), u.as_slice());
    let l2 = disc.reduced.mass.bilinear(u.as_slice(), u.as_slice());
    Ok((div / l2).sqrt())
}

pub fn quantity_value(
    disc: &Discretization,
    q: Quantity,
    params: &Params,
    psi: &Polynomial,
) -> steklov_core::Result<f64> {
    match q {
        Quantity::A1 => Ok(dirichlet_spectrum(&disc.reduced, params.theta, SpectrumCount::First(1))?.values[0]),
        Quantity::LambdaN2 => Ok(neumann_laplacian_spectrum(&disc.mesh, SpectrumCount::First(2))?.values[1]),
        Quantity::Lambda1 => {
            let eta = match params.eta {
                Eta::Value(e) => e,
                Eta::Auto => select_eta(&disc.reduced, params.alpha, params.theta)?,
            };
            let p = ProblemParams::new(params.alpha, params.theta, eta)?;
            Ok(steklov_spectrum(&disc.reduced, &p, SpectrumCount::First(1))?.lambdas[0])
        }
        Quantity::DivNorm => {
            let p = ProblemParams::new(params.alpha, params.theta, 0.0)?;
            divergence_ratio(disc, &p, psi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub level: u32,
    pub h: f64,
    pub num_vertices: usize,
    /// One value per requested quantity, in request order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub level: u32,
    pub h: f64,
    pub value: f64,
    pub error: Option<f64>,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityTable {
    pub quantity: &'static str,
    pub exact: Option<f64>,
    pub rows: Vec<Row>,
    /// False when the errors (or successive differences) are not monotone.
    pub reliable: bool,
    pub final_value: f64,
    pub final_error: Option<f64>,
    pub final_relative_error: Option<f64>,
    pub final_order: Option<f64>,
    /// Richardson limit from the last three levels.
    pub extrapolated: Option<f64>,
}

/// Orders `log(e_{i-1}/e_i) / log(h_{i-1}/h_i)`; `None` for the first level
/// and wherever an error is not positive.
pub fn orders_from_errors(h: &[f64], e: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for i in 1..h.len() {
        out.push((e[i - 1] > 0.0 && e[i] > 0.0).then(|| (e[i - 1] / e[i]).ln() / (h[i - 1] / h[i]).ln()));
    }
    out
}

/// Order `p` with `(h0^p − h1^p) / (h1^p − h2^p) = (v1 − v0) / (v2 − v1)`, by
/// bisection on `p ∈ [1e-3, 20]`.
pub fn richardson_order(h: [f64; 3], v: [f64; 3]) -> Option<f64> {
    let (d1, d2) = (v[1] - v[0], v[2] - v[1]);
    if d2 == 0.0 || d1 * d2 <= 0.0 {
        return None;
    }
    let r = d1 / d2;
    let g = |p: f64| (h[0].powf(p) - h[1].powf(p)) / (h[1].powf(p) - h[2].powf(p)) - r;
    let (mut lo, mut hi) = (1e-3, 20.0);
    if g(lo) * g(hi) > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo) * g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn richardson_limit(h: [f64; 3], v: [f64; 3], p: f64) -> f64 {
    let (a, b) = (h[1].powf(p), h[2].powf(p));
    v[2] + (v[2] - v[1]) * b / (a - b)
}

pub fn build_table(q: Quantity, exact: Option<f64>, levels: &[LevelResult], index: usize) -> QuantityTable {
    let h: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let v: Vec<f64> = levels.iter().map(|l| l.values[index]).collect();
    let n = v.len();
    let (errors, orders, reliable) = match exact {
        Some(x) => {
            let e: Vec<f64> = v.iter().map(|y| (y - x).abs()).collect();
            let reliable = e.windows(2).all(|w| w[1] < w[0]);
            let o = orders_from_errors(&h, &e);
            (e.into_iter().map(Some).collect::<Vec<_>>(), o, reliable)
        }
        None => {
            let mut o = vec![None, None];
            for i in 2..n {
                o.push(richardson_order([h[i - 2], h[i - 1], h[i]], [v[i - 2], v[i - 1], v[i]]));
            }
            let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
            let reliable = d.windows(2).all(|w| w[0] * w[1] > 0.0 && w[1].abs() < w[0].abs());
            (vec![None; n], o, reliable)
        }
    };
    let tail_h = [h[n - 3], h[n - 2], h[n - 1]];
    let tail_v = [v[n - 3], v[n - 2], v[n - 1]];
    let extrapolated = richardson_order(tail_h, tail_v).map(|p| richardson_limit(tail_h, tail_v, p));
    let rows = (0..n)
        .map(|i| Row { level: levels[i].level, h: h[i], value: v[i], error: errors[i], order: orders[i] })
        .collect();
    let final_error = errors[n - 1];
    QuantityTable {
        quantity: q.name(),
        exact,
        rows,
        reliable,
        final_value: v[n - 1],
        final_error,
        final_relative_error: exact.filter(|x| *x != 0.0).and_then(|x| final_error.map(|e| e / x.abs())),
        final_order: orders[n - 1],
        extrapolated,
    }
}

/// Evaluates every quantity on every level (levels run concurrently) and
/// calls `on_level` as each level completes.
pub fn run_study<F>(
    domain: &Domain,
    levels: &[u32],
    quantities: &[Quantity],
    params: &Params,
    psi: &Polynomial,
    on_level: F,
) -> Result<(Vec<LevelResult>, Vec<QuantityTable>), crate::run::RunError>
where
    F: Fn(&LevelResult) -> std::io::Result<()> + Sync,
{
    check_levels(levels).map_err(|e| crate::run::RunError::Data(e.to_string()))?;
    let results: Vec<LevelResult> = levels
        .par_iter()
        .map(|&level| {
            let h = mesh_size(domain, level).map_err(|e| crate::run::RunError::Data(e.to_string()))?;
            let disc = Discretization::new(level_mesh(domain, level)?)?;
            let values = quantities
                .iter()
                .map(|&q| quantity_value(&disc, q, params, psi))
                .collect::<steklov_core::Result<Vec<f64>>>()?;
            let r = LevelResult { level, h, num_vertices: disc.mesh.num_vertices(), values };
            on_level(&r).map_err(|e| crate::run::RunError::Io { path: "converge level".into(), source: e })?;
            Ok(r)
        })
        .collect::<Result<_, crate::run::RunError>>()?;
    let tables = quantities
        .iter()
        .enumerate()
        .map(|(i, &q)| build_table(q, exact_value(domain, q, params.theta), &results, i))
        .collect();
    Ok((results, tables))
}
