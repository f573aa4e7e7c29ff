use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SpectralError, SpectrumCount};
use crate::assembly::{assemble_scalar_forms, Discretization, ReducedForms};
use crate::linalg::{lowest_eigenpairs, CsrMatrix};
use crate::mesh::Mesh;

fn count_opt(c: SpectrumCount) -> Option<usize> {
    match c {
        SpectrumCount::All => None,
        SpectrumCount::First(k) => Some(k),
    }
}

/// `(K + θD) x = A M x` on interior coordinates; modes are M-orthonormal.
#[derive(Debug, Clone)]
pub struct DirichletSpectrum {
    pub theta: f64,
    pub values: Vec<f64>,
    pub modes: DMatrix<f64>,
}

pub fn dirichlet_spectrum(
    reduced: &ReducedForms,
    theta: f64,
    count: SpectrumCount,
) -> Result<DirichletSpectrum, SpectralError> {
    let ni = reduced.n_interior();
    if ni == 0 {
        return Err(SpectralError::DomainTooCoarse);
    }
    let a = CsrMatrix::linear_combination(&[
        (1.0, &reduced.curl_curl.block(0..ni, 0..ni)),
        (theta, &reduced.div_div.block(0..ni, 0..ni)),
    ]);
    let m = reduced.mass.block(0..ni, 0..ni);
    let pairs = lowest_eigenpairs(&a, &m, count_opt(count), 0.0)?;
    Ok(DirichletSpectrum { theta, values: pairs.values, modes: pairs.vectors })
}

/// Scalar P1 Neumann Laplacian eigenpairs, one value per vertex in `modes`.
#[derive(Debug, Clone)]
pub struct NeumannSpectrum {
    pub values: Vec<f64>,
    pub modes: DMatrix<f64>,
}

impl NeumannSpectrum {
    /// Whether mode `n` is constant up to `rel` relative variation.
    pub fn is_constant_mode(&self, n: usize, rel: f64) -> bool {
        let c = self.modes.column(n);
        let (lo, hi) = (c.min(), c.max());
        let scale = lo.abs().max(hi.abs());
        scale > 0.0 && hi - lo <= rel * scale
    }
}

pub fn neumann_laplacian_spectrum(mesh: &Mesh, count: SpectrumCount) -> crate::Result<NeumannSpectrum> {
    let (stiffness, mass) = assemble_scalar_forms(mesh)?;
    let pairs = lowest_eigenpairs(&stiffness, &mass, count_opt(count), -1.0).map_err(SpectralError::from)?;
    Ok(NeumannSpectrum { values: pairs.values, modes: pairs.vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MagneticOptions {
    pub theta_pen: f64,
    /// A mode is kept when `√(xᵀDx) ≤ div_tol · √(xᵀMx)`.
    pub div_tol: f64,
}

impl Default for MagneticOptions {
    fn default() -> Self {
        Self { theta_pen: 100.0, div_tol: 1e-3 }
    }
}

/// Penalized curl-curl eigenvalues whose modes pass the divergence filter.
#[derive(Debug, Clone)]
pub struct MagneticSpectrum {
    pub values: Vec<f64>,
    /// `√(xᵀDx)/√(xᵀMx)` of each reported mode.
    pub div_ratios: Vec<f64>,
    pub modes: DMatrix<f64>,
    /// Number of penalized eigenpairs examined.
    pub candidates: usize,
    /// Smallest divergence ratio among all candidates.
    pub best_ratio: f64,
    pub warning: Option<String>,
}

/// Examines the `count` lowest eigenpairs of `(K + θ_pen D) x = λ M x` on the
/// constrained space and keeps the nearly divergence-free ones.
pub fn magnetic_spectrum(
    reduced: &ReducedForms,
    count: SpectrumCount,
    opts: MagneticOptions,
) -> Result<MagneticSpectrum, SpectralError> {
    let a = CsrMatrix::linear_combination(&[(1.0, &reduced.curl_curl), (opts.theta_pen, &reduced.div_div)]);
    let pairs = lowest_eigenpairs(&a, &reduced.mass, count_opt(count), -1.0)?;
    let mut keep = Vec::new();
    let mut ratios = Vec::new();
    let mut best = f64::INFINITY;
    for j in 0..pairs.len() {
        let x = pairs.vectors.column(j);
        let x = x.as_slice();
        let ratio = (reduced.div_div.bilinear(x, x).max(0.0) / reduced.mass.bilinear(x, x)).sqrt();
        best = best.min(ratio);
        if ratio <= opts.div_tol {
            keep.push(j);
            ratios.push(ratio);
        }
    }
    let warning = keep.is_empty().then(|| {
        format!(
            "no magnetic eigenvalue passed the divergence filter ({} candidates, smallest ratio {:.3e} > {:.1e})",
            pairs.len(),
            best,
            opts.div_tol
        )
    });
    Ok(MagneticSpectrum {
        values: keep.iter().map(|&j| pairs.values[j]).collect(),
        div_ratios: ratios,
        modes: pairs.vectors.select_columns(&keep),
        candidates: pairs.len(),
        best_ratio: best,
        warning,
    })
}

#[derive(Debug, Clone)]
pub struct AuxSpectra {
    pub dirichlet: DirichletSpectrum,
    pub neumann: NeumannSpectrum,
    pub magnetic: MagneticSpectrum,
}

/// The three auxiliary spectra, computed concurrently.
pub fn aux_spectra(
    disc: &Discretization,
    theta: f64,
    count: SpectrumCount,
    magnetic: MagneticOptions,
) -> crate::Result<AuxSpectra> {
    let (dirichlet, (neumann, magnetic)) = rayon::join(
        || dirichlet_spectrum(&disc.reduced, theta, count),
        || {
            rayon::join(
                || neumann_laplacian_spectrum(&disc.mesh, count),
                || magnetic_spectrum(&disc.reduced, count, magnetic),
            )
        },
    );
    Ok(AuxSpectra { dirichlet: dirichlet?, neumann: neumann?, magnetic: magnetic? })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaDiagnostic {
    /// `min(|α − θλ^𝓝_n|, |α − λ^𝓜_n|)` over the admissible values.
    pub distance: f64,
    /// `"neumann"` or `"magnetic"`.
    pub nearest_kind: Option<&'static str>,
    pub nearest_index: Option<usize>,
    pub nearest_value: Option<f64>,
    pub risky: bool,
}

/// Distance of `α` to the set whose members put `0` into the Steklov spectrum.
/// Neumann modes that are constant produce the zero field and are skipped.
pub fn zero_in_sigma_check(alpha: f64, theta: f64, aux: &AuxSpectra, tol: f64) -> SigmaDiagnostic {
    let mut best: (f64, Option<&'static str>, Option<usize>, Option<f64>) = (f64::INFINITY, None, None, None);
    for (n, &v) in aux.neumann.values.iter().enumerate() {
        if aux.neumann.is_constant_mode(n, 1e-6) {
            continue;
        }
        let d = (alpha - theta * v).abs();
        if d < best.0 {
            best = (d, Some("neumann"), Some(n), Some(theta * v));
        }
    }
    for (n, &v) in aux.magnetic.values.iter().enumerate() {
        let d = (alpha - v).abs();
        if d < best.0 {
            best = (d, Some("magnetic"), Some(n), Some(v));
        }
    }
    SigmaDiagnostic {
        distance: best.0,
        nearest_kind: best.1,
        nearest_index: best.2,
        nearest_value: best.3,
        risky: best.0 < tol,
    }
}
