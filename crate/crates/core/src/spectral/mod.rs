//! Steklov eigenpairs through boundary condensation, the auxiliary Dirichlet,
//! Neumann-Laplacian and magnetic spectra, and solvability diagnostics.

mod aux;

pub use aux::{
    aux_spectra, dirichlet_spectrum, magnetic_spectrum, neumann_laplacian_spectrum, zero_in_sigma_check, AuxSpectra,
    DirichletSpectrum, MagneticOptions, MagneticSpectrum, NeumannSpectrum, SigmaDiagnostic,
};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::assembly::{BoundaryFrames, ProblemParams, ReducedForms, TraceField};
use crate::linalg::eigen::{dense_cholesky, symmetrize, DensePencil};
use crate::linalg::{
    fix_signs, generalized_eigen, subspace_iteration, CsrMatrix, LinalgError, SparseCholesky, SubspaceOptions,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("coercivity failure for alpha = {alpha}: {reason}")]
    CoercivityFailure { alpha: f64, reason: String },
    #[error("the mesh has no interior degrees of freedom")]
    DomainTooCoarse,
    #[error("the mesh has no boundary degrees of freedom")]
    NoBoundary,
    #[error("field has a zero boundary trace, so the Rayleigh quotient is undefined")]
    ZeroTrace,
    #[error("eigensolver failure: {0}")]
    Eigensolver(#[from] LinalgError),
}

/// Cholesky pivots at or below this fraction of `‖S‖_∞` count as failure.
pub const PIVOT_FLOOR: f64 = 1e-10;
pub const MAX_DOUBLINGS: i32 = 60;
/// Relative width of a multiplicity group.
pub const MULTIPLICITY_TOL: f64 = 1e-7;

fn factor_with_floor(s: &CsrMatrix) -> Result<SparseCholesky, LinalgError> {
    SparseCholesky::factor(s, PIVOT_FLOOR * s.norm_inf())
}

/// Smallest `η` of the sequence `max(1, α)·2^k` making `S_η` positive definite,
/// or `0` for `α ≤ 0`. The interior block does not depend on `η`, so an
/// indefinite interior block fails immediately.
pub fn select_eta(reduced: &ReducedForms, alpha: f64, theta: f64) -> Result<f64, SpectralError> {
    if alpha <= 0.0 {
        return Ok(0.0);
    }
    let ni = reduced.n_interior();
    let s0 = reduced.volume_operator(alpha, theta);
    if ni > 0 {
        if let Err(e) = factor_with_floor(&s0.block(0..ni, 0..ni)) {
            return Err(SpectralError::CoercivityFailure {
                alpha,
                reason: format!(
                    "the interior block is not positive definite ({e}), so alpha is not below the first Dirichlet eigenvalue; deflate"
                ),
            });
        }
    }
    let base = alpha.max(1.0);
    for k in 0..MAX_DOUBLINGS {
        let eta = base * 2f64.powi(k);
        let s = CsrMatrix::linear_combination(&[(1.0, &s0), (eta, &reduced.boundary_mass)]);
        if factor_with_floor(&s).is_ok() {
            return Ok(eta);
        }
    }
    Err(SpectralError::CoercivityFailure {
        alpha,
        reason: format!("no eta up to {:e} gives a positive definite form", base * 2f64.powi(MAX_DOUBLINGS - 1)),
    })
}

/// Boundary Schur complement `T = S_bb − S_biS_ii⁻¹S_ib` of `S_η` with the
/// back-substitution `x_i = −S_ii⁻¹S_ib x_b`.
#[derive(Debug, Clone)]
pub struct CondensedOperator {
    pub params: ProblemParams,
    pub t: DMatrix<f64>,
    pub b_bb: DMatrix<f64>,
    w: DMatrix<f64>,
    n_interior: usize,
}

impl CondensedOperator {
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.t.nrows()
    }

    /// Full constrained vector `[−W x_b; x_b]`.
    pub fn extend(&self, x_b: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_interior + x_b.len());
        if self.n_interior > 0 {
            full.rows_mut(0, self.n_interior).copy_from(&(-(&self.w * x_b)));
        }
        full.rows_mut(self.n_interior, x_b.len()).copy_from(x_b);
        full
    }
}

pub fn condense_to_boundary(reduced: &ReducedForms, params: &ProblemParams) -> Result<CondensedOperator, SpectralError> {
    let c = condense_unchecked(reduced, params)?;
    if dense_cholesky(&c.t).is_err() {
        return Err(SpectralError::CoercivityFailure {
            alpha: params.alpha,
            reason: format!("the condensed operator is not positive definite at eta = {}", params.eta),
        });
    }
    Ok(c)
}

/// Condensation requiring only a positive definite interior block; `T` may be
/// indefinite.
pub(crate) fn condense_unchecked(
    reduced: &ReducedForms,
    params: &ProblemParams,
) -> Result<CondensedOperator, SpectralError> {
    let n = reduced.dim();
    let ni = reduced.n_interior();
    if ni == n {
        return Err(SpectralError::NoBoundary);
    }
    let s = reduced.operator(params);
    let mut t = s.block(ni..n, ni..n).to_dense();
    let w = if ni > 0 {
        let sii = s.block(0..ni, 0..ni);
        let chol = factor_with_floor(&sii).map_err(|e| SpectralError::CoercivityFailure {
            alpha: params.alpha,
            reason: format!("singular or indefinite interior block ({e})"),
        })?;
        let sib = s.block(0..ni, ni..n).to_dense();
        let w = chol.solve_dense(&sib);
        t -= sib.transpose() * &w;
        w
    } else {
        DMatrix::zeros(0, n - ni)
    };
    symmetrize(&mut t);
    Ok(CondensedOperator { params: *params, t, b_bb: reduced.boundary_block_mass().to_dense(), w, n_interior: ni })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumCount {
    All,
    First(usize),
}

static NEXT_BASIS_ID: AtomicU64 = AtomicU64::new(1);

/// Steklov eigenpairs `λ_1 ≥ λ_2 ≥ …` with modes normalized in the
/// `⟨·,·⟩^η` product and traces `u_n^Γ = √(η − λ_n) π_T u_n` orthonormal in
/// `TL²(Γ)`.
#[derive(Debug, Clone)]
pub struct SteklovBasis {
    pub params: ProblemParams,
    pub lambdas: Vec<f64>,
    pub mu: Vec<f64>,
    /// Columns `u_n` in constrained coordinates.
    pub modes: DMatrix<f64>,
    /// Columns `u_n^Γ` in boundary frame coordinates.
    pub traces: DMatrix<f64>,
    /// `‖S_η u_n − μ_n B u_n‖ / ‖S_η u_n‖`.
    pub residuals: Vec<f64>,
    boundary_mass: CsrMatrix,
    frames: Arc<BoundaryFrames>,
    n_interior: usize,
    complete: bool,
    id: u64,
}

impl SteklovBasis {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// True when every eigenpair of the discrete pencil is present.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Identifies the basis an expansion was computed against.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn eta(&self) -> f64 {
        self.params.eta
    }

    pub fn frames(&self) -> &Arc<BoundaryFrames> {
        &self.frames
    }

    /// Boundary-block mass `B_bb` defining the `TL²(Γ)` product.
    pub fn boundary_mass(&self) -> &CsrMatrix {
        &self.boundary_mass
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// `γ_n = (λ_n − η)⁻¹`.
    pub fn gamma(&self, n: usize) -> f64 {
        1.0 / (self.lambdas[n] - self.params.eta)
    }

    pub fn trace(&self, n: usize) -> TraceField {
        TraceField::from_coords(&self.frames, self.traces.column(n).into_owned())
    }

    pub fn mode(&self, n: usize) -> DVector<f64> {
        self.modes.column(n).into_owned()
    }

    /// `(λ, multiplicity)` groups in basis order.
    pub fn multiplicities(&self) -> Vec<(f64, usize)> {
        group_multiplicities(&self.lambdas, MULTIPLICITY_TOL)
    }
}

pub fn steklov_spectrum(
    reduced: &ReducedForms,
    params: &ProblemParams,
    count: SpectrumCount,
) -> Result<SteklovBasis, SpectralError> {
    let condensed = condense_to_boundary(reduced, params)?;
    steklov_from_condensed(reduced, &condensed, count)
}

/// Eigenpairs of `T x = μ B_bb x` lifted to the full constrained space.
pub fn steklov_from_condensed(
    reduced: &ReducedForms,
    condensed: &CondensedOperator,
    count: SpectrumCount,
) -> Result<SteklovBasis, SpectralError> {
    let nb = condensed.n_boundary();
    let (mut pairs, complete) = match count {
        SpectrumCount::First(k) if k < nb => {
            let pencil = DensePencil::new(&condensed.t, &condensed.b_bb, 0.0)?;
            (subspace_iteration(&pencil, k, SubspaceOptions::default())?, false)
        }
        _ => (generalized_eigen(&condensed.t, &condensed.b_bb)?, true),
    };
    fix_signs(&mut pairs.vectors);

    let params = condensed.params;
    let s = reduced.operator(&params);
    let k = pairs.len();
    let dim = reduced.dim();
    let mut modes = DMatrix::zeros(dim, k);
    let mut lambdas = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for (j, &mu) in pairs.values.iter().enumerate() {
        let x_b = pairs.vectors.column(j) / mu.sqrt();
        let u = condensed.extend(&x_b);
        let su = s.mul_dvec(&u);
        let bu = reduced.boundary_mass.mul_dvec(&u);
        residuals.push((&su - bu * mu).norm() / su.norm());
        modes.set_column(j, &u);
        lambdas.push(params.eta - mu);
    }
    Ok(SteklovBasis {
        params,
        lambdas,
        mu: pairs.values,
        modes,
        traces: pairs.vectors,
        residuals,
        boundary_mass: reduced.boundary_block_mass(),
        frames: reduced.frames().clone(),
        n_interior: reduced.n_interior(),
        complete,
        id: NEXT_BASIS_ID.fetch_add(1, Ordering::Relaxed),
    })
}

/// `∫(|curl u|² − α|u|² + θ|div u|²) / ∫_Γ|π_T u|²` in constrained coordinates.
pub fn rayleigh_quotient(reduced: &ReducedForms, alpha: f64, theta: f64, u: &[f64]) -> Result<f64, SpectralError> {
    let den = reduced.boundary_mass.bilinear(u, u);
    let scale = reduced.boundary_mass.norm_inf() * u.iter().map(|x| x * x).sum::<f64>();
    if !(den > 1e-14 * scale) {
        return Err(SpectralError::ZeroTrace);
    }
    Ok(reduced.volume_operator(alpha, theta).bilinear(u, u) / den)
}

/// Condition number of the boundary pencil at each probe `λ`:
/// `max_n |λ − λ_n| / min_n |λ − λ_n|` over the computed spectrum, infinite
/// on an eigenvalue.
pub fn resolvent_condition_sweep(basis: &SteklovBasis, probes: &[f64]) -> Vec<f64> {
    probes
        .iter()
        .map(|&p| {
            let (lo, hi) = basis
                .lambdas
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| ((p - l).abs().min(lo), (p - l).abs().max(hi)));
            if lo == 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        })
        .collect()
}

/// Groups consecutive values whose relative difference is within `rel`.
pub fn group_multiplicities(values: &[f64], rel: f64) -> Vec<(f64, usize)> {
    let mut groups: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NAN;
    for &v in values {
        match groups.last_mut() {
            Some((_, m)) if (v - last).abs() <= rel * v.abs().max(last.abs()) => *m += 1,
            _ => groups.push((v, 1)),
        }
        last = v;
    }
    groups
}
