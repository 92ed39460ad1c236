//! Dense symmetric / SPD primitives: eigendecomposition-backed matrix
//! logarithm, log-determinants, principal submatrices, Schur-complement
//! conditioning, and definite-pencil generalized eigenvalues.
//!
//! All covariance operators in this crate are symmetric and at desk scale
//! (a few hundred rows), so everything here is dense and eigendecomposition
//! is the workhorse. Eigenvalues that are only slightly negative (roundoff
//! on a genuinely PSD matrix) are clamped before logarithms; genuinely
//! indefinite inputs are rejected.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::setfn::IndexSet;

/// Relative tolerance below which a negative eigenvalue marks a matrix as
/// indefinite rather than merely rounded off.
pub const EPS_SPD: f64 = 1e-10;

/// Relative floor applied to near-zero eigenvalues before logarithms and
/// factorizations.
pub const EPS_FLOOR: f64 = 1e-12;

/// Dense real symmetric matrix. Entries are symmetrized as `(A + Aᵀ)/2` on
/// construction so downstream eigensolvers never see asymmetric roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from a square array, symmetrizing it.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::DimensionMismatch(
                "dimension must be at least 1".into(),
            ));
        }
        let sym = (&data + data.transpose()) * 0.5;
        Ok(Self { data: sym })
    }

    /// Builds from a row-major slice of `dim * dim` entries.
    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut data = DMatrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            data[(i, i)] = v;
        }
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)]).collect()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Eigendecomposition with eigenvalues sorted in descending order and
    /// eigenvector columns permuted to match.
    pub fn eigendecompose(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = self.data.clone().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        (values, vectors)
    }

    /// Extracts the principal submatrix on `selection` (ascending index order).
    pub fn principal_submatrix(&self, selection: &IndexSet) -> Result<SymMatrix> {
        if selection.is_empty() {
            return Err(Error::EmptySelection);
        }
        let dim = self.dim();
        if let Some(&bad) = selection.iter().find(|&&i| i >= dim) {
            return Err(Error::IndexOutOfRange { index: bad, dim });
        }
        let k = selection.len();
        let mut out = DMatrix::zeros(k, k);
        for (a, &i) in selection.iter().enumerate() {
            for (b, &j) in selection.iter().enumerate() {
                out[(a, b)] = self.data[(i, j)];
            }
        }
        Ok(SymMatrix { data: out })
    }
}

/// Symmetric positive definite matrix. Construction verifies that the
/// spectrum clears `-EPS_SPD * lambda_max`; eigenvalues inside the roundoff
/// band are tolerated here and clamped to `EPS_FLOOR * lambda_max` whenever
/// a logarithm or factorization needs strict positivity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    sym: SymMatrix,
}

impl SpdMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::from_sym(SymMatrix::new(data)?)
    }

    pub fn from_sym(sym: SymMatrix) -> Result<Self> {
        let (values, _) = sym.eigendecompose();
        let lambda_max = values[0];
        let lambda_min = *values.last().unwrap();
        if !lambda_max.is_finite() || !lambda_min.is_finite() || lambda_min <= -EPS_SPD * lambda_max
        {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue range [{lambda_min:e}, {lambda_max:e}]"
            )));
        }
        Ok(Self { sym })
    }

    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::from_sym(SymMatrix::from_rows(dim, entries)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            sym: SymMatrix::identity(dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_sym(SymMatrix::from_diagonal(diag))
    }

    /// Wraps a symmetric matrix without re-verifying the spectrum. Reserved
    /// for matrices that are SPD by construction (e.g. principal submatrices
    /// of an already verified parent).
    pub(crate) fn from_sym_unchecked(sym: SymMatrix) -> Self {
        Self { sym }
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sym.get(i, j)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.sym.diagonal()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        self.sym.as_dmatrix()
    }

    /// Principal submatrix of an SPD matrix is SPD (Cauchy interlacing), so
    /// the check is skipped.
    pub fn principal_submatrix(&self, selection: &IndexSet) -> Result<SpdMatrix> {
        Ok(SpdMatrix::from_sym_unchecked(
            self.sym.principal_submatrix(selection)?,
        ))
    }

    /// Eigenvalues clamped per the crate policy: anything at or below
    /// `EPS_FLOOR * lambda_max` is raised to that floor; anything at or below
    /// `-EPS_SPD * lambda_max` is an error.
    fn clamped_eigendecompose(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (mut values, vectors) = self.sym.eigendecompose();
        let lambda_max = values[0];
        if lambda_max.is_nan() || lambda_max <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "largest eigenvalue {lambda_max:e} is not positive"
            )));
        }
        let floor = EPS_FLOOR * lambda_max;
        let reject = -EPS_SPD * lambda_max;
        for v in values.iter_mut() {
            if *v <= reject {
                return Err(Error::NotPositiveDefinite(format!(
                    "eigenvalue {:e} below tolerance {reject:e}",
                    *v
                )));
            }
            if *v <= floor {
                *v = floor;
            }
        }
        Ok((values, vectors))
    }

    /// Cholesky factor of the matrix; falls back to a clamped spectral
    /// reconstruction when the plain factorization stalls on a roundoff-level
    /// pivot.
    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        if let Some(chol) = self.sym.data.clone().cholesky() {
            return Ok(chol);
        }
        let (values, vectors) = self.clamped_eigendecompose()?;
        let rebuilt = spectral_reconstruct(&values, &vectors);
        rebuilt
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky failed after clamping".into()))
    }

    /// Inverse via Cholesky.
    pub fn inverse(&self) -> Result<SpdMatrix> {
        let inv = self.cholesky()?.inverse();
        Ok(SpdMatrix::from_sym_unchecked(SymMatrix::new(inv)?))
    }
}

fn spectral_reconstruct(values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values));
    let m = vectors * diag * vectors.transpose();
    (&m + m.transpose()) * 0.5
}

/// Matrix logarithm of an SPD matrix through its eigendecomposition:
/// `log A = U log(Λ) Uᵀ`.
pub fn spd_log(a: &SpdMatrix) -> Result<SymMatrix> {
    let (values, vectors) = a.clamped_eigendecompose()?;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    SymMatrix::new(spectral_reconstruct(&logs, &vectors))
}

/// `log det A` as the sum of clamped log-eigenvalues.
pub fn log_det(a: &SpdMatrix) -> Result<f64> {
    let (values, _) = a.clamped_eigendecompose()?;
    Ok(values.iter().map(|v| v.ln()).sum())
}

/// Principal submatrix of a symmetric matrix on the given selection.
pub fn principal_submatrix(a: &SymMatrix, selection: &IndexSet) -> Result<SymMatrix> {
    a.principal_submatrix(selection)
}

/// Conditions an SPD matrix on the coordinates in `selection`: returns the
/// Schur complement `A_cc - A_cs A_ss⁻¹ A_sc` on the complement indices in
/// ascending order.
pub fn schur_conditional(a: &SpdMatrix, selection: &IndexSet) -> Result<SpdMatrix> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let dim = a.dim();
    if let Some(&bad) = selection.iter().find(|&&i| i >= dim) {
        return Err(Error::IndexOutOfRange { index: bad, dim });
    }
    let complement = selection.complement(dim);
    if complement.is_empty() {
        return Err(Error::EmptyComplement);
    }

    let a_ss = a.principal_submatrix(selection)?;
    let c = complement.len();
    let s = selection.len();
    let mut a_sc = DMatrix::zeros(s, c);
    for (r, &i) in selection.iter().enumerate() {
        for (col, &j) in complement.iter().enumerate() {
            a_sc[(r, col)] = a.get(i, j);
        }
    }
    let a_cc = a.principal_submatrix(&complement)?;

    let solved = a_ss.cholesky()?.solve(&a_sc); // A_ss⁻¹ A_sc
    let schur = a_cc.as_dmatrix() - a_sc.transpose() * solved;
    SpdMatrix::from_sym(SymMatrix::new(schur)?)
}

/// Generalized eigenvalues of the definite pencil `(A, B)` with `A` PSD and
/// `B` SPD, in descending order. Computed by Cholesky whitening: with
/// `B = LLᵀ`, the pencil eigenvalues are the symmetric eigenvalues of
/// `L⁻¹ A L⁻ᵀ`. Small negative results (roundoff on a PSD `A`) are clamped
/// to zero.
pub fn gen_eigvals(a: &SymMatrix, b: &SpdMatrix) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "pencil dimensions {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let chol = b.cholesky()?;
    let l = chol.l();
    // W = L⁻¹ A L⁻ᵀ via two triangular solves.
    let half = l
        .solve_lower_triangular(a.as_dmatrix())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let whitened = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let (mut values, _) = SymMatrix::new(whitened)?.eigendecompose();
    let scale = values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for v in values.iter_mut() {
        if *v < -1e-6 * scale {
            return Err(Error::NotPositiveSemiDefinite(format!(
                "pencil eigenvalue {:e} is negative beyond tolerance",
                *v
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(values)
}

/// Extreme eigenvalues of an SPD matrix together with the Kantorovich
/// flatness ratio `4 λ_min λ_max / (λ_min + λ_max)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRange {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// In `(0, 1]`; equals 1 exactly when the spectrum is a single point.
    pub kantorovich_ratio: f64,
}

pub fn spectral_range(a: &SpdMatrix) -> Result<SpectralRange> {
    let (values, _) = a.clamped_eigendecompose()?;
    let max = values[0];
    let min = *values.last().unwrap();
    let ratio = if min == max {
        1.0
    } else {
        4.0 * min * max / ((min + max) * (min + max))
    };
    Ok(SpectralRange {
        min_eigenvalue: min,
        max_eigenvalue: max,
        kantorovich_ratio: ratio,
    })
}
