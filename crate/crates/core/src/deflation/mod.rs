//! Restriction to the `⟨·,·⟩⁰`-orthogonal complement of the Dirichlet modes
//! below `α`, which makes the form coercive when `A_n < α < A_{n+1}`.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{FemSpace, ProblemParams, ReducedForms};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::spectral::{dirichlet_spectrum, select_eta, steklov_spectrum, SpectralError, SpectrumCount, SteklovBasis};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeflationError {
    #[error("alpha = {alpha} is within the gap tolerance of the Dirichlet eigenvalue A_{k} = {value}")]
    AlphaOnDirichletSpectrum { alpha: f64, k: usize, value: f64 },
    #[error("alpha = {alpha} exceeds all {count} computed Dirichlet eigenvalues (largest {largest}); request more")]
    AlphaAboveComputed { alpha: f64, count: usize, largest: f64 },
    #[error("deflation constraints are rank deficient (rank {rank} of {expected})")]
    RankDeficient { rank: usize, expected: usize },
    #[error("coercivity failure after deflation for alpha = {alpha}: {reason}; alpha may be too close to the next Dirichlet eigenvalue {next:?}")]
    CoercivityAfterDeflation { alpha: f64, next: Option<f64>, reason: String },
    #[error("gap estimate {estimate} does not exceed alpha = {alpha}")]
    GapInconsistent { estimate: f64, alpha: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Relative distance from every `A_k` required of `α`.
pub const GAP_TOL: f64 = 1e-8;

/// The Dirichlet modes with `A_k < α` and the constraint rows
/// `r_k = u_kᵀ S_0` expressing `⟨v, u_k⟩⁰ = 0`.
#[derive(Debug, Clone)]
pub struct DeflationSpace {
    pub alpha: f64,
    pub theta: f64,
    pub values: Vec<f64>,
    /// Modes in constrained coordinates, zero on the boundary block.
    pub modes: DMatrix<f64>,
    pub constraints: DMatrix<f64>,
    /// First computed Dirichlet eigenvalue above `α`, if any.
    pub next_value: Option<f64>,
}

impl DeflationSpace {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Collects the Dirichlet modes below `α` among the lowest `max_modes`
/// Dirichlet eigenpairs.
pub fn dirichlet_modes_below(
    reduced: &ReducedForms,
    alpha: f64,
    theta: f64,
    max_modes: usize,
) -> Result<DeflationSpace, DeflationError> {
    let ni = reduced.n_interior();
    let dim = reduced.dim();
    let spec = dirichlet_spectrum(reduced, theta, SpectrumCount::First(max_modes.min(ni)))?;
    for (k, &a) in spec.values.iter().enumerate() {
        if (a - alpha).abs() <= GAP_TOL * alpha.abs().max(a.abs()) {
            return Err(DeflationError::AlphaOnDirichletSpectrum { alpha, k: k + 1, value: a });
        }
    }
    let d = spec.values.iter().take_while(|&&a| a < alpha).count();
    if d == spec.values.len() && d < ni {
        return Err(DeflationError::AlphaAboveComputed {
            alpha,
            count: d,
            largest: spec.values.last().copied().unwrap_or(f64::NAN),
        });
    }
    let mut modes = DMatrix::zeros(dim, d);
    modes.view_mut((0, 0), (ni, d)).copy_from(&spec.modes.columns(0, d));
    let s0 = reduced.volume_operator(alpha, theta);
    let constraints = s0.mul_dense(&modes).transpose();
    Ok(DeflationSpace {
        alpha,
        theta,
        values: spec.values[..d].to_vec(),
        modes,
        constraints,
        next_value: spec.values.get(d).copied(),
    })
}

/// The constrained space restricted to `V_n^⊥`.
#[derive(Debug, Clone)]
pub struct DeflatedSpace {
    pub space: FemSpace,
    pub reduced: ReducedForms,
    /// Columns spanning `V_n^⊥` in the undeflated constrained coordinates:
    /// `[[Q, W], [0, I]]` with `Q` an orthonormal null-space basis of the
    /// interior constraint block, so boundary coordinates keep their meaning.
    pub z: CsrMatrix,
}

/// Null-space basis of the constraint rows keeping the boundary block.
pub fn build_deflated_space(
    space: &FemSpace,
    reduced: &ReducedForms,
    deflation: &DeflationSpace,
) -> Result<DeflatedSpace, DeflationError> {
    let dim = reduced.dim();
    let ni = reduced.n_interior();
    let nb = dim - ni;
    let d = deflation.dim();
    if d == 0 {
        let z = CsrMatrix::identity(dim);
        return Ok(DeflatedSpace { space: space.clone(), reduced: reduced.clone(), z });
    }
    if d > ni {
        return Err(DeflationError::RankDeficient { rank: ni, expected: d });
    }
    let r_i = deflation.constraints.columns(0, ni).into_owned();
    let r_b = deflation.constraints.columns(ni, nb).into_owned();
    let qr = r_i.transpose().qr();
    let r = qr.r();
    let diag_max = (0..d).fold(0.0f64, |m, k| m.max(r[(k, k)].abs()));
    let rank = (0..d).filter(|&k| r[(k, k)].abs() > 1e-12 * diag_max).count();
    if rank < d {
        return Err(DeflationError::RankDeficient { rank, expected: d });
    }
    let mut q = DMatrix::identity(ni, ni);
    qr.q_tr_mul(&mut q);
    let q = q.transpose();
    // R_i W = −R_b with W in the range of R_iᵀ = Q₁R
    let y = r
        .transpose()
        .solve_lower_triangular(&(-&r_b))
        .ok_or(DeflationError::RankDeficient { rank, expected: d })?;
    let w = q.columns(0, d) * y;

    let ncols = dim - d;
    let mut t = TripletBuilder::new(dim, ncols);
    for i in 0..ni {
        for j in 0..ni - d {
            let v = q[(i, d + j)];
            if v != 0.0 {
                t.push(i, j, v);
            }
        }
        for j in 0..nb {
            let v = w[(i, j)];
            if v != 0.0 {
                t.push(i, ni - d + j, v);
            }
        }
    }
    for j in 0..nb {
        t.push(ni + j, ni - d + j, 1.0);
    }
    let z = t.build();
    Ok(DeflatedSpace { space: space.restricted(&z, ni - d), reduced: reduced.restricted(&z, ni - d), z })
}

impl DeflatedSpace {
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Undeflated constrained coordinates of a deflated coefficient vector.
    pub fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        self.z.mul_dvec(y)
    }
}

/// `v = P_V v + P_⊥ v` with `P_V v ∈ span(u_k)` and `⟨P_⊥ v, u_k⟩⁰ = 0`.
pub fn split(deflation: &DeflationSpace, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    if deflation.is_empty() {
        return (DVector::zeros(v.len()), v.clone());
    }
    let rv = &deflation.constraints * v;
    let gram = &deflation.constraints * &deflation.modes;
    let a = gram.lu().solve(&rv).expect("deflation Gram matrix is diagonal with nonzero entries");
    let in_v = &deflation.modes * a;
    let perp = v - &in_v;
    (in_v, perp)
}

/// Steklov basis of the deflated problem, with `η` selected on `V_n^⊥`.
pub fn deflated_steklov_spectrum(
    deflated: &DeflatedSpace,
    deflation: &DeflationSpace,
    count: SpectrumCount,
) -> Result<SteklovBasis, DeflationError> {
    let (alpha, theta) = (deflation.alpha, deflation.theta);
    let eta = select_eta(&deflated.reduced, alpha, theta).map_err(|e| match e {
        SpectralError::CoercivityFailure { reason, .. } => {
            DeflationError::CoercivityAfterDeflation { alpha, next: deflation.next_value, reason }
        }
        other => other.into(),
    })?;
    let params = ProblemParams { alpha, theta, eta };
    Ok(steklov_spectrum(&deflated.reduced, &params, count)?)
}

/// `Ã_{n+1}`: the first Dirichlet eigenvalue on `V_n^⊥`, required to exceed `α`.
pub fn verify_gap(deflated: &DeflatedSpace, alpha: f64, theta: f64) -> Result<f64, DeflationError> {
    let spec = dirichlet_spectrum(&deflated.reduced, theta, SpectrumCount::First(1))?;
    let estimate = spec.values[0];
    if estimate <= alpha {
        return Err(DeflationError::GapInconsistent { estimate, alpha });
    }
    Ok(estimate)
}
