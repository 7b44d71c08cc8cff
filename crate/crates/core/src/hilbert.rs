//! Truncated Fock spaces, sparse operators on them, pure states and reduced
//! density matrices.
//!
//! Basis ordering for two modes is `index = n0 * N + n1`, so an operator
//! acting on mode 0 is `A ⊗ I` and one acting on mode 1 is `I ⊗ A`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Entries with modulus at or below this are not stored.
pub const DROP_TOLERANCE: f64 = 1e-15;
/// Maximum elementwise `|A - A†|` accepted for an operator flagged Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("a Fock space needs at least 2 levels per mode, got {0}")]
    TooFewLevels(usize),
    #[error("only 1 or 2 modes are supported, got {0}")]
    UnsupportedModes(usize),
    #[error("mode {mode} out of range for a {n_modes}-mode space")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operator flagged Hermitian deviates from its adjoint by {0:e}")]
    NotHermitian(f64),
    #[error("operation requires a two-mode space")]
    NotTwoMode,
    #[error("state has zero or non-finite norm")]
    BadNorm,
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("index ({row}, {col}) out of bounds for dimension {dim}")]
    IndexOutOfBounds { row: usize, col: usize, dim: usize },
}

/// Truncated bosonic Fock space for one or two identical modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    n_levels: usize,
    n_modes: usize,
}

impl FockSpace {
    pub fn new(n_levels: usize, n_modes: usize) -> Result<Self, HilbertError> {
        if n_levels < 2 {
            return Err(HilbertError::TooFewLevels(n_levels));
        }
        if !(1..=2).contains(&n_modes) {
            return Err(HilbertError::UnsupportedModes(n_modes));
        }
        Ok(Self { n_levels, n_modes })
    }

    pub fn single(n_levels: usize) -> Result<Self, HilbertError> {
        Self::new(n_levels, 1)
    }

    pub fn pair(n_levels: usize) -> Result<Self, HilbertError> {
        Self::new(n_levels, 2)
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Joint dimension `N^n_modes`.
    pub fn dim(&self) -> usize {
        self.n_levels.pow(self.n_modes as u32)
    }

    /// Occupation of `mode` in joint basis state `index`.
    pub fn level(&self, index: usize, mode: usize) -> usize {
        let stride = self.n_levels.pow((self.n_modes - 1 - mode) as u32);
        (index / stride) % self.n_levels
    }

    /// Joint index of the product basis state `|levels[0], levels[1], ...⟩`.
    pub fn index(&self, levels: &[usize]) -> Result<usize, HilbertError> {
        if levels.len() != self.n_modes {
            return Err(HilbertError::DimensionMismatch {
                expected: self.n_modes,
                found: levels.len(),
            });
        }
        let mut index = 0;
        for &n in levels {
            if n >= self.n_levels {
                return Err(HilbertError::IndexOutOfBounds {
                    row: n,
                    col: 0,
                    dim: self.n_levels,
                });
            }
            index = index * self.n_levels + n;
        }
        Ok(index)
    }

    /// First level counted as "top 10%" by the leakage diagnostic.
    pub fn leakage_cutoff(&self) -> usize {
        let top = self.n_levels.div_ceil(10).max(1);
        self.n_levels - top
    }

    fn check_mode(&self, mode: usize) -> Result<(), HilbertError> {
        if mode >= self.n_modes {
            Err(HilbertError::ModeOutOfRange {
                mode,
                n_modes: self.n_modes,
            })
        } else {
            Ok(())
        }
    }

    /// Per-mode masks of the joint basis states whose occupation lies in the
    /// top 10% of levels.
    pub fn leakage_masks(&self) -> Vec<Vec<bool>> {
        let cutoff = self.leakage_cutoff();
        (0..self.n_modes)
            .map(|mode| {
                (0..self.dim())
                    .map(|i| self.level(i, mode) >= cutoff)
                    .collect()
            })
            .collect()
    }
}

/// Complex sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Assemble from `(row, col, value)` triplets. Duplicates are summed and
    /// entries below [`DROP_TOLERANCE`] are discarded. When `hermitian` is set
    /// the result is checked against its adjoint.
    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
        hermitian: bool,
    ) -> Result<Self, HilbertError> {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(HilbertError::IndexOutOfBounds { row: r, col: c, dim });
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v.norm() > DROP_TOLERANCE {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let op = Self {
            dim,
            row_ptr,
            col_idx,
            values,
            hermitian: false,
        };
        if hermitian {
            op.into_hermitian()
        } else {
            Ok(op)
        }
    }

    /// Set the Hermitian flag after verifying `A = A†` within tolerance.
    pub fn into_hermitian(mut self) -> Result<Self, HilbertError> {
        let defect = self.hermitian_defect();
        if defect > HERMITIAN_TOLERANCE {
            return Err(HilbertError::NotHermitian(defect));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![ONE; dim],
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            hermitian: true,
        }
    }

    /// Convert a dense matrix, dropping entries below [`DROP_TOLERANCE`].
    pub fn from_dense(m: &DMatrix<C64>, hermitian: bool) -> Result<Self, HilbertError> {
        if m.nrows() != m.ncols() {
            return Err(HilbertError::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let dim = m.nrows();
        let triplets = (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c, m[(r, c)])));
        Self::from_triplets(dim, triplets, hermitian)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        if row >= self.dim {
            return ZERO;
        }
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    /// Largest elementwise `|A - A†|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        if self.hermitian {
            return self.clone();
        }
        let triplets: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, triplets, false).expect("adjoint keeps bounds")
    }

    /// `s * A`. The Hermitian flag survives only for real `s`.
    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out.hermitian = self.hermitian && s.im == 0.0;
        if s.norm() <= DROP_TOLERANCE {
            return Self::zeros(self.dim);
        }
        out
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `A + B`; Hermitian if both are.
    pub fn add(&self, other: &Self) -> Result<Self, HilbertError> {
        self.check_dim(other.dim)?;
        let mut op = Self::from_triplets(self.dim, self.triplets().chain(other.triplets()), false)?;
        op.hermitian = self.hermitian && other.hermitian;
        Ok(op)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, HilbertError> {
        self.add(&other.scale_real(-1.0))
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Result<Self, HilbertError> {
        self.check_dim(other.dim)?;
        let mut triplets = Vec::new();
        for (r, k, a) in self.triplets() {
            for j in other.row_ptr[k]..other.row_ptr[k + 1] {
                triplets.push((r, other.col_idx[j], a * other.values[j]));
            }
        }
        Self::from_triplets(self.dim, triplets, false)
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Self) -> Result<Self, HilbertError> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Kronecker product `A ⊗ B`.
    pub fn kron(&self, other: &Self) -> Self {
        let n = other.dim;
        let triplets = self.triplets().flat_map(|(r1, c1, v1)| {
            other
                .triplets()
                .map(move |(r2, c2, v2)| (r1 * n + r2, c1 * n + c2, v1 * v2))
        });
        let mut op = Self::from_triplets(self.dim * n, triplets.collect::<Vec<_>>(), false)
            .expect("kron keeps bounds");
        op.hermitian = self.hermitian && other.hermitian;
        op
    }

    /// Leading `n × n` block.
    pub fn truncate(&self, n: usize) -> Result<Self, HilbertError> {
        if n > self.dim {
            return Err(HilbertError::DimensionMismatch {
                expected: self.dim,
                found: n,
            });
        }
        let triplets: Vec<_> = self.triplets().filter(|&(r, c, _)| r < n && c < n).collect();
        let mut op = Self::from_triplets(n, triplets, false)?;
        op.hermitian = self.hermitian;
        Ok(op)
    }

    /// Embed a single-mode operator on `mode` of `space` by tensoring with
    /// identities.
    pub fn embed(&self, space: &FockSpace, mode: usize) -> Result<Self, HilbertError> {
        space.check_mode(mode)?;
        self.check_dim(space.n_levels)?;
        let id = Self::identity(space.n_levels);
        Ok(match (space.n_modes, mode) {
            (1, _) => self.clone(),
            (_, 0) => self.kron(&id),
            _ => id.kron(self),
        })
    }

    /// `out = A x`.
    pub fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    /// `out += alpha A x`.
    pub fn apply_add(&self, alpha: C64, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o += alpha * acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    /// `⟨x|A|x⟩` without normalisation.
    pub fn expectation_raw(&self, x: &[C64]) -> C64 {
        let mut total = ZERO;
        for (r, xr) in x.iter().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            total += xr.conj() * acc;
        }
        total
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// `A M` for dense `M`.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let cols = m.ncols();
        let mut out = DMatrix::zeros(self.dim, cols);
        for (r, k, v) in self.triplets() {
            for j in 0..cols {
                out[(r, j)] += v * m[(k, j)];
            }
        }
        out
    }

    fn check_dim(&self, dim: usize) -> Result<(), HilbertError> {
        if self.dim != dim {
            Err(HilbertError::DimensionMismatch {
                expected: self.dim,
                found: dim,
            })
        } else {
            Ok(())
        }
    }
}

fn single_annihilation(n: usize) -> SparseOperator {
    let triplets = (1..n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0)));
    SparseOperator::from_triplets(n, triplets, false).expect("in bounds")
}

/// Annihilation operator `a` on `mode`: `⟨n-1|a|n⟩ = √n`.
pub fn annihilation(space: &FockSpace, mode: usize) -> Result<SparseOperator, HilbertError> {
    single_annihilation(space.n_levels).embed(space, mode)
}

/// Single-mode operator assembled by `build` on `pad` extra levels, cut back
/// to the truncation of `space` and embedded on `mode`. Products of ladder
/// operators of total degree up to `2 * pad` then have the matrix elements
/// of the untruncated operator, including at the top levels.
pub fn padded_operator(
    space: &FockSpace,
    mode: usize,
    pad: usize,
    build: impl FnOnce(&FockSpace) -> Result<SparseOperator, HilbertError>,
) -> Result<SparseOperator, HilbertError> {
    space.check_mode(mode)?;
    let big = FockSpace::single(space.n_levels + pad)?;
    build(&big)?.truncate(space.n_levels)?.embed(space, mode)
}

pub fn creation(space: &FockSpace, mode: usize) -> Result<SparseOperator, HilbertError> {
    Ok(annihilation(space, mode)?.adjoint())
}

/// Number operator `a†a`, diagonal and exact at the truncation edge.
pub fn number(space: &FockSpace, mode: usize) -> Result<SparseOperator, HilbertError> {
    let n = space.n_levels;
    let single = SparseOperator::from_triplets(n, (0..n).map(|k| (k, k, C64::new(k as f64, 0.0))), true)?;
    single.embed(space, mode)
}

/// `x = (a + a†)/√2`.
pub fn position(space: &FockSpace, mode: usize) -> Result<SparseOperator, HilbertError> {
    let a = annihilation(space, mode)?;
    a.add(&a.adjoint())?
        .scale_real(std::f64::consts::FRAC_1_SQRT_2)
        .into_hermitian()
}

/// `p = i(a† - a)/√2`.
pub fn momentum(space: &FockSpace, mode: usize) -> Result<SparseOperator, HilbertError> {
    let a = annihilation(space, mode)?;
    a.adjoint()
        .sub(&a)?
        .scale(C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2))
        .into_hermitian()
}

/// `f(x)` for the truncated position operator of one mode, evaluated through
/// the eigendecomposition of `x` and embedded on `mode`.
pub fn position_function(
    space: &FockSpace,
    mode: usize,
    f: impl Fn(f64) -> f64,
) -> Result<SparseOperator, HilbertError> {
    space.check_mode(mode)?;
    let n = space.n_levels;
    // x is real symmetric tridiagonal in the Fock basis.
    let mut x = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let v = (k as f64 / 2.0).sqrt();
        x[(k - 1, k)] = v;
        x[(k, k - 1)] = v;
    }
    let eig = x.symmetric_eigen();
    let fx = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| f(l)));
    let v = &eig.eigenvectors;
    let dense = v * DMatrix::from_diagonal(&fx) * v.transpose();
    let mut triplets = Vec::new();
    for r in 0..n {
        for c in 0..n {
            // Symmetrise to make the Hermitian check exact.
            let value = 0.5 * (dense[(r, c)] + dense[(c, r)]);
            triplets.push((r, c, C64::new(value, 0.0)));
        }
    }
    SparseOperator::from_triplets(n, triplets, true)?.embed(space, mode)
}

/// `cos(Ω x)` on `mode`.
pub fn cos_position(space: &FockSpace, mode: usize, omega: f64) -> Result<SparseOperator, HilbertError> {
    position_function(space, mode, |x| (omega * x).cos())
}

/// Normalised pure state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Normalise `amplitudes` into a state.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, HilbertError> {
        let norm = norm(&amplitudes);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(HilbertError::BadNorm);
        }
        let inv = 1.0 / norm;
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|a| a * inv).collect(),
        })
    }

    pub(crate) fn from_normalized(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    /// Product Fock state `|levels[0], levels[1], ...⟩`.
    pub fn fock(space: &FockSpace, levels: &[usize]) -> Result<Self, HilbertError> {
        let mut amplitudes = vec![ZERO; space.dim()];
        amplitudes[space.index(levels)?] = ONE;
        Ok(Self { amplitudes })
    }

    /// Product of truncated coherent states, one amplitude per mode,
    /// renormalised after truncation.
    pub fn coherent(space: &FockSpace, alphas: &[C64]) -> Result<Self, HilbertError> {
        if alphas.len() != space.n_modes {
            return Err(HilbertError::DimensionMismatch {
                expected: space.n_modes,
                found: alphas.len(),
            });
        }
        let factors: Vec<Vec<C64>> = alphas
            .iter()
            .map(|&alpha| {
                let mut c = Vec::with_capacity(space.n_levels);
                let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
                for k in 0..space.n_levels {
                    if k > 0 {
                        term *= alpha / (k as f64).sqrt();
                    }
                    c.push(term);
                }
                c
            })
            .collect();
        Self::product(&factors)
    }

    /// Tensor product of single-mode amplitude vectors.
    pub fn product(factors: &[Vec<C64>]) -> Result<Self, HilbertError> {
        let mut amplitudes = vec![ONE];
        for f in factors {
            amplitudes = amplitudes
                .iter()
                .flat_map(|&a| f.iter().map(move |&b| a * b))
                .collect();
        }
        Self::new(amplitudes)
    }

    /// Haar-like random state from i.i.d. complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let amplitudes = (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::new(amplitudes).expect("gaussian vector has nonzero norm")
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Apply an operator and renormalise.
    pub fn transformed(&self, op: &SparseOperator) -> Result<Self, HilbertError> {
        if op.dim() != self.dim() {
            return Err(HilbertError::DimensionMismatch {
                expected: op.dim(),
                found: self.dim(),
            });
        }
        Self::new(op.apply(&self.amplitudes))
    }

    /// Largest per-mode population in the top 10% of Fock levels.
    pub fn leakage(&self, space: &FockSpace) -> f64 {
        leakage_of(&self.amplitudes, &space.leakage_masks())
    }
}

pub(crate) fn norm(x: &[C64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn leakage_of(x: &[C64], masks: &[Vec<bool>]) -> f64 {
    masks
        .iter()
        .map(|mask| {
            x.iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(a, _)| a.norm_sqr())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Dense Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
    pub const TRACE_TOLERANCE: f64 = 1e-8;
    pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

    /// Validate and wrap a dense matrix.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self, HilbertError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(HilbertError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let defect = (&matrix - matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if defect > Self::HERMITIAN_TOLERANCE {
            return Err(HilbertError::InvalidDensityMatrix(format!(
                "not Hermitian (defect {defect:e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > Self::TRACE_TOLERANCE || trace.im.abs() > Self::TRACE_TOLERANCE {
            return Err(HilbertError::InvalidDensityMatrix(format!("trace {trace}")));
        }
        let rho = Self { matrix };
        let min = rho.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -Self::POSITIVITY_TOLERANCE {
            return Err(HilbertError::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn pure(psi: &StateVector) -> Self {
        let v = DVector::from_column_slice(psi.amplitudes());
        Self {
            matrix: &v * v.adjoint(),
        }
    }

    /// Equal-weight mixture of pure states.
    pub fn mixture(states: &[StateVector]) -> Result<Self, HilbertError> {
        let first = states.first().ok_or(HilbertError::BadNorm)?;
        let mut m = DMatrix::zeros(first.dim(), first.dim());
        for psi in states {
            if psi.dim() != first.dim() {
                return Err(HilbertError::DimensionMismatch {
                    expected: first.dim(),
                    found: psi.dim(),
                });
            }
            let v = DVector::from_column_slice(psi.amplitudes());
            m += &v * v.adjoint();
        }
        m /= C64::new(states.len() as f64, 0.0);
        Ok(Self { matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `Tr(ρ A)`.
    pub fn expectation(&self, op: &SparseOperator) -> C64 {
        op.triplets().map(|(r, c, v)| v * self.matrix[(c, r)]).sum()
    }

    /// `½ Tr|ρ - σ|`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64, HilbertError> {
        if self.dim() != other.dim() {
            return Err(HilbertError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>())
    }
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrised
/// before decomposition.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

/// Reduced density matrix of mode `keep` for a two-mode pure state.
pub fn partial_trace(psi: &StateVector, space: &FockSpace, keep: usize) -> Result<DensityMatrix, HilbertError> {
    if space.n_modes != 2 {
        return Err(HilbertError::NotTwoMode);
    }
    space.check_mode(keep)?;
    if psi.dim() != space.dim() {
        return Err(HilbertError::DimensionMismatch {
            expected: space.dim(),
            found: psi.dim(),
        });
    }
    let n = space.n_levels;
    // Coefficient matrix M[i, j] = ψ_{i j}; ρ0 = M M†, ρ1 = (M† M)^T.
    let m = DMatrix::from_row_slice(n, n, psi.amplitudes());
    let rho = if keep == 0 {
        &m * m.adjoint()
    } else {
        (m.adjoint() * &m).transpose()
    };
    Ok(DensityMatrix { matrix: rho })
}
