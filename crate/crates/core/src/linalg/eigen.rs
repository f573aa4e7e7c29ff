//! Symmetric-definite generalized eigensolvers: a dense reduction for the
//! complete spectrum and shift-invert subspace iteration for a few pairs.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cholesky::SparseCholesky;
use super::sparse::CsrMatrix;
use super::LinalgError;

/// Eigenpairs of `A x = μ B x`, eigenvalues ascending, eigenvectors
/// B-orthonormal (`Xᵀ B X = I`).
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        let k = k.min(self.values.len());
        self.values.truncate(k);
        self.vectors = self.vectors.columns(0, k).into_owned();
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues and eigenvectors of a symmetric matrix, ascending.
pub fn symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues only of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Dense lower Cholesky factor of an SPD matrix.
pub fn dense_cholesky(b: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>, LinalgError> {
    Cholesky::new(b.clone()).ok_or(LinalgError::NotPositiveDefinite { index: 0, pivot: f64::NAN })
}

/// `L⁻¹ A L⁻ᵀ` for a lower-triangular `L`, symmetrized.
pub fn reduce_with_factor(a: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    let x = l.solve_lower_triangular(a).expect("triangular factor is nonsingular");
    let mut c = l
        .solve_lower_triangular(&x.transpose())
        .expect("triangular factor is nonsingular");
    symmetrize(&mut c);
    c
}

/// All eigenpairs of the dense pencil `A x = μ B x` with `B` SPD.
pub fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EigenPairs, LinalgError> {
    check_square(a)?;
    check_square(b)?;
    if a.nrows() == 0 {
        return Ok(EigenPairs { values: vec![], vectors: DMatrix::zeros(0, 0) });
    }
    let l = dense_cholesky(b)?.l();
    let c = reduce_with_factor(a, &l);
    let (values, y) = symmetric_eigen(c);
    let vectors = l.tr_solve_lower_triangular(&y).expect("triangular factor is nonsingular");
    Ok(EigenPairs { values, vectors })
}

/// Eigenvalues only of the dense pencil `A x = μ B x` with `B` SPD.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    check_square(a)?;
    let l = dense_cholesky(b)?.l();
    Ok(symmetric_eigenvalues(reduce_with_factor(a, &l)))
}

fn check_square(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(())
}

/// Operator access needed by [`subspace_iteration`].
pub trait ShiftInvertPencil {
    fn dim(&self) -> usize;
    fn apply_a(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    fn apply_b(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `(A − σB)⁻¹ x` for the pencil's fixed shift σ.
    fn solve_shifted(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct SubspaceOptions {
    /// Extra search directions beyond the requested count.
    pub guard: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self { guard: 10, tol: 1e-11, max_iter: 2000, seed: 0x5eed_57e1 }
    }
}

/// The `k` eigenpairs closest to the shift from above, by block shift-invert
/// iteration with Rayleigh-Ritz extraction.
pub fn subspace_iteration<P: ShiftInvertPencil>(
    pencil: &P,
    k: usize,
    opts: SubspaceOptions,
) -> Result<EigenPairs, LinalgError> {
    let n = pencil.dim();
    let k = k.min(n);
    let m = (2 * k).max(k + opts.guard).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5);
    let mut last_residual = f64::INFINITY;

    for _ in 0..opts.max_iter {
        let y = pencil.solve_shifted(&pencil.apply_b(&x));
        let q = y.qr().q();
        let aq = pencil.apply_a(&q);
        let bq = pencil.apply_b(&q);
        let mut ar = q.transpose() * &aq;
        let mut br = q.transpose() * &bq;
        symmetrize(&mut ar);
        symmetrize(&mut br);
        let ritz = generalized_eigen(&ar, &br)?;
        x = &q * &ritz.vectors;

        let ax = &aq * &ritz.vectors;
        let bx = &bq * &ritz.vectors;
        let scale = ritz.values.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..k {
            let mu = ritz.values[i];
            let r = (ax.column(i) - bx.column(i) * mu).norm();
            let denom = ax.column(i).norm() + mu.abs() * bx.column(i).norm() + 1e-14 * scale * bx.column(i).norm();
            worst = worst.max(r / denom);
        }
        last_residual = worst;
        if worst <= opts.tol {
            let mut pairs = EigenPairs { values: ritz.values, vectors: x };
            pairs.truncate(k);
            return Ok(pairs);
        }
    }
    Err(LinalgError::NoConvergence { residual: last_residual })
}

/// Dense pencil with a Cholesky-factored shifted operator.
pub struct DensePencil<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    shifted: Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> DensePencil<'a> {
    pub fn new(a: &'a DMatrix<f64>, b: &'a DMatrix<f64>, shift: f64) -> Result<Self, LinalgError> {
        let shifted = dense_cholesky(&(a - b * shift))?;
        Ok(Self { a, b, shifted })
    }
}

impl ShiftInvertPencil for DensePencil<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn apply_a(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.a * x
    }
    fn apply_b(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.b * x
    }
    fn solve_shifted(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.shifted.solve(x)
    }
}

/// Sparse pencil with an envelope-Cholesky-factored shifted operator.
pub struct SparsePencil<'a> {
    a: &'a CsrMatrix,
    b: &'a CsrMatrix,
    shifted: SparseCholesky,
}

impl<'a> SparsePencil<'a> {
    pub fn new(a: &'a CsrMatrix, b: &'a CsrMatrix, shift: f64) -> Result<Self, LinalgError> {
        let s = CsrMatrix::linear_combination(&[(1.0, a), (-shift, b)]);
        let shifted = SparseCholesky::factor(&s, 0.0)?;
        Ok(Self { a, b, shifted })
    }
}

impl ShiftInvertPencil for SparsePencil<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn apply_a(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.a.mul_dense(x)
    }
    fn apply_b(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.b.mul_dense(x)
    }
    fn solve_shifted(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.shifted.solve_dense(x)
    }
}

/// Problems up to this size are solved densely.
pub const DENSE_LIMIT: usize = 2500;

/// The `count` lowest eigenpairs of the sparse pencil `A x = μ B x` (all pairs
/// for `None`). Dense reduction below [`DENSE_LIMIT`], shift-invert subspace
/// iteration about `shift` above it; `A − shift·B` must be positive definite.
pub fn lowest_eigenpairs(
    a: &CsrMatrix,
    b: &CsrMatrix,
    count: Option<usize>,
    shift: f64,
) -> Result<EigenPairs, LinalgError> {
    let n = a.nrows();
    let mut pairs = match count {
        Some(k) if n > DENSE_LIMIT && k < n => {
            let pencil = SparsePencil::new(a, b, shift)?;
            subspace_iteration(&pencil, k, SubspaceOptions::default())?
        }
        _ => generalized_eigen(&a.to_dense(), &b.to_dense())?,
    };
    if let Some(k) = count {
        pairs.truncate(k);
    }
    fix_signs(&mut pairs.vectors);
    Ok(pairs)
}

/// Flips each column so that its entry of largest magnitude (first on ties)
/// is positive.
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}
