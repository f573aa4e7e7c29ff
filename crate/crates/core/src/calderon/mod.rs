//! Steklov expansions of tangential boundary data, the spectral solution
//! operators, the interior Calderón operator, trace-space norms and the
//! direct-solve reference.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{ProblemParams, ReducedForms, TraceField};
use crate::linalg::{LinalgError, SparseCholesky};
use crate::spectral::{condense_unchecked, CondensedOperator, SpectralError, SteklovBasis, PIVOT_FLOOR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalderonError {
    #[error("zero in Sigma: |lambda_{n}| = {lambda:e} is below the zero tolerance")]
    ZeroInSigma { n: usize, lambda: f64 },
    #[error("trace data and Steklov basis live on different boundaries")]
    MeshMismatch,
    #[error("expansion was computed against a different Steklov basis")]
    BasisMismatch,
    #[error("{got} coefficients exceed the basis size {len}")]
    TooManyCoefficients { got: usize, len: usize },
    #[error("the boundary system is singular, so zero is in Sigma")]
    SingularSystem,
    #[error("operation needs the complete Steklov basis")]
    IncompleteBasis,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("direct solve failed: {0}")]
    Linalg(#[from] LinalgError),
}

/// `|λ_n| < ZERO_TOL · max(1, max|λ|)` counts as `0 ∈ Σ`.
pub const ZERO_TOL: f64 = 1e-10;

/// Coefficients `c_n = (f, u_n^Γ)_{TL²(Γ)}` against one Steklov basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceExpansion {
    basis_id: u64,
    pub coeffs: DVector<f64>,
}

impl TraceExpansion {
    pub fn new(basis: &SteklovBasis, coeffs: DVector<f64>) -> Result<Self, CalderonError> {
        if coeffs.len() > basis.len() {
            return Err(CalderonError::TooManyCoefficients { got: coeffs.len(), len: basis.len() });
        }
        Ok(Self { basis_id: basis.id(), coeffs })
    }

    /// `e_n` (zero-based `n`).
    pub fn unit(basis: &SteklovBasis, n: usize) -> Self {
        let mut coeffs = DVector::zeros(basis.len());
        coeffs[n] = 1.0;
        Self { basis_id: basis.id(), coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn check(&self, basis: &SteklovBasis) -> Result<(), CalderonError> {
        if self.basis_id != basis.id() {
            return Err(CalderonError::BasisMismatch);
        }
        Ok(())
    }
}

/// A functional `F` given by its values `c_n = ⟨F, u_n^Γ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTraceData {
    pub coeffs: DVector<f64>,
}

impl DualTraceData {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    /// `⟨F, f⟩ = Σ c_n d_n`.
    pub fn pairing(&self, d: &TraceExpansion) -> f64 {
        self.coeffs.iter().zip(d.coeffs.iter()).map(|(a, b)| a * b).sum()
    }

    /// `(Σ |c_n|² |λ_n − η|^{2s})^{1/2}`; `s = −1/2` is the dual norm.
    pub fn norm(&self, basis: &SteklovBasis, s: f64) -> f64 {
        weighted_norm(basis, &self.coeffs, s)
    }
}

fn weighted_norm(basis: &SteklovBasis, c: &DVector<f64>, s: f64) -> f64 {
    c.iter().zip(&basis.mu).map(|(c, mu)| c * c * mu.powf(2.0 * s)).sum::<f64>().sqrt()
}

fn check_len(basis: &SteklovBasis, c: &DVector<f64>) -> Result<(), CalderonError> {
    if c.len() > basis.len() {
        return Err(CalderonError::TooManyCoefficients { got: c.len(), len: basis.len() });
    }
    Ok(())
}

fn check_zero(basis: &SteklovBasis, upto: usize) -> Result<(), CalderonError> {
    let scale = basis.lambdas.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    for (n, &l) in basis.lambdas.iter().take(upto).enumerate() {
        if l.abs() < ZERO_TOL * scale {
            return Err(CalderonError::ZeroInSigma { n: n + 1, lambda: l });
        }
    }
    Ok(())
}

fn check_boundary(basis: &SteklovBasis, f: &TraceField) -> Result<(), CalderonError> {
    if !f.same_boundary(basis.frames()) {
        return Err(CalderonError::MeshMismatch);
    }
    Ok(())
}

/// `Σ w_n u_n` over modes.
fn combine_modes(basis: &SteklovBasis, w: &DVector<f64>) -> DVector<f64> {
    basis.modes.columns(0, w.len()) * w
}

/// `Σ w_n u_n^Γ`.
fn combine_traces(basis: &SteklovBasis, w: &DVector<f64>) -> TraceField {
    TraceField::from_coords(basis.frames(), basis.traces.columns(0, w.len()) * w)
}

pub fn expand_trace(basis: &SteklovBasis, f: &TraceField) -> Result<TraceExpansion, CalderonError> {
    check_boundary(basis, f)?;
    let bf = basis.boundary_mass().mul_dvec(f.coords());
    Ok(TraceExpansion { basis_id: basis.id(), coeffs: basis.traces.tr_mul(&bf) })
}

/// `Σ c_n u_n^Γ`.
pub fn reconstruct_trace(basis: &SteklovBasis, e: &TraceExpansion) -> Result<TraceField, CalderonError> {
    e.check(basis)?;
    Ok(combine_traces(basis, &e.coeffs))
}

fn neumann_weights(basis: &SteklovBasis, c: &DVector<f64>) -> Result<DVector<f64>, CalderonError> {
    check_len(basis, c)?;
    check_zero(basis, c.len())?;
    Ok(DVector::from_fn(c.len(), |n, _| basis.mu[n].sqrt() / basis.lambdas[n] * c[n]))
}

/// `u = Σ (√|λ_n − η| / λ_n) c_n u_n^Ω`, the field with
/// `ν × curl u = f` on the boundary.
pub fn solve_neumann_spectral(basis: &SteklovBasis, e: &TraceExpansion) -> Result<DVector<f64>, CalderonError> {
    e.check(basis)?;
    Ok(combine_modes(basis, &neumann_weights(basis, &e.coeffs)?))
}

/// `𝓒 f = ν × Σ (c_n / λ_n) u_n^Γ`.
pub fn calderon_apply(basis: &SteklovBasis, e: &TraceExpansion) -> Result<TraceField, CalderonError> {
    e.check(basis)?;
    calderon_coeffs(basis, &e.coeffs)
}

/// The Calderón operator extended to dual data.
pub fn calderon_dual(basis: &SteklovBasis, f: &DualTraceData) -> Result<TraceField, CalderonError> {
    calderon_coeffs(basis, &f.coeffs)
}

fn calderon_coeffs(basis: &SteklovBasis, c: &DVector<f64>) -> Result<TraceField, CalderonError> {
    check_len(basis, c)?;
    check_zero(basis, c.len())?;
    let w = DVector::from_fn(c.len(), |n, _| c[n] / basis.lambdas[n]);
    Ok(combine_traces(basis, &w).rotate())
}

/// `u = Σ c_n √|λ_n − η| u_n^Ω` with `π_T u = f`.
pub fn solve_tangential_dirichlet(basis: &SteklovBasis, f: &TraceField) -> Result<DVector<f64>, CalderonError> {
    let e = expand_trace(basis, f)?;
    let w = DVector::from_fn(e.len(), |n, _| e.coeffs[n] * basis.mu[n].sqrt());
    Ok(combine_modes(basis, &w))
}

/// Field with `ν × u = f` on the boundary: expands `f × ν` and solves the
/// tangential Dirichlet problem.
pub fn solve_rotated_dirichlet(basis: &SteklovBasis, f: &TraceField) -> Result<DVector<f64>, CalderonError> {
    check_boundary(basis, f)?;
    solve_tangential_dirichlet(basis, &f.cross_normal())
}

/// `u = Σ (√|λ_n − η| / λ_n) c_n u_n^Ω`, satisfying
/// `⟨u, φ⟩^0 = −⟨F, φ⟩` for every field `φ`.
pub fn solve_dual(basis: &SteklovBasis, f: &DualTraceData) -> Result<DVector<f64>, CalderonError> {
    Ok(combine_modes(basis, &neumann_weights(basis, &f.coeffs)?))
}

/// `‖f‖_{s,Γ} = (Σ |c_n|² |λ_n − η|^{2s})^{1/2}`.
pub fn trace_norm(basis: &SteklovBasis, e: &TraceExpansion, s: f64) -> f64 {
    weighted_norm(basis, &e.coeffs, s)
}

/// Solves `S_0 u = −B f` by linear algebra alone: a sparse Cholesky
/// factorization of `S_0` when `η = 0`, otherwise a Cholesky-factored interior
/// block and a dense LU solve of the boundary Schur complement.
pub fn direct_solve(
    reduced: &ReducedForms,
    params: &ProblemParams,
    f: &TraceField,
) -> Result<DVector<f64>, CalderonError> {
    if !f.same_boundary(reduced.frames()) {
        return Err(CalderonError::MeshMismatch);
    }
    let n = reduced.dim();
    let ni = reduced.n_interior();
    let mut load = DVector::zeros(n);
    load.rows_mut(ni, n - ni).copy_from(f.coords());
    let rhs = -reduced.boundary_mass.mul_dvec(&load);
    let p0 = params.with_eta(0.0);
    if params.eta == 0.0 {
        let s = reduced.operator(&p0);
        let chol = SparseCholesky::factor(&s, PIVOT_FLOOR * s.norm_inf()).map_err(|e| {
            SpectralError::CoercivityFailure { alpha: params.alpha, reason: format!("S_0 is not positive definite ({e})") }
        })?;
        return Ok(DVector::from_vec(chol.solve(rhs.as_slice())));
    }
    let c = condense_unchecked(reduced, &p0)?;
    let x_b = c
        .t
        .clone()
        .lu()
        .solve(&rhs.rows(ni, n - ni).into_owned())
        .ok_or(CalderonError::SingularSystem)?;
    Ok(c.extend(&x_b))
}

/// Diagonal of the NtD operator in the `u_n^Γ` basis, `γ_n = (λ_n − η)⁻¹`.
pub fn ntd_diagonal(basis: &SteklovBasis) -> Vec<f64> {
    (0..basis.len()).map(|n| basis.gamma(n)).collect()
}

/// `−B_bb T⁻¹ B_bb`: the NtD operator as a bilinear form on frame coordinates.
pub fn ntd_dense(condensed: &CondensedOperator) -> Result<DMatrix<f64>, CalderonError> {
    let chol = condensed
        .t
        .clone()
        .cholesky()
        .ok_or(LinalgError::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
    Ok(-(&condensed.b_bb * chol.solve(&condensed.b_bb)))
}

/// `−B X diag(μ)⁻¹ Xᵀ B` assembled from the Steklov traces.
pub fn ntd_dense_from_basis(basis: &SteklovBasis) -> Result<DMatrix<f64>, CalderonError> {
    if !basis.is_complete() {
        return Err(CalderonError::IncompleteBasis);
    }
    let bx = basis.boundary_mass().mul_dense(&basis.traces);
    let mut scaled = bx.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= basis.mu[j];
    }
    Ok(-(scaled * bx.transpose()))
}

/// `A^Γ_η f = −T⁻¹ B_bb f`: the tangential trace of the `η`-shifted solution.
pub fn ntd_apply(condensed: &CondensedOperator, f: &TraceField) -> Result<TraceField, CalderonError> {
    let chol = condensed
        .t
        .clone()
        .cholesky()
        .ok_or(LinalgError::NotPositiveDefinite { index: 0, pivot: f64::NAN })?;
    let x = chol.solve(&(&condensed.b_bb * f.coords()));
    Ok(TraceField::from_coords(f.frames(), -x))
}
