//! Dense linear-algebra substrate.
//!
//! Orthonormal bases, full and sketched least-squares solves, the residual
//! decomposition of a sketched solve and the optimality coefficient `mu`.
//! Everything here is a pure function of its inputs. [`LsContext`] caches the
//! SVD of the design matrix so repeated solves against one matrix do not pay
//! for it again.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sketch::SketchOperator;

/// Singular values below `RANK_TOL * sigma_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// A right-hand side in the range of `A` up to `OPT_TOL * |b|` is treated as
/// lying in the range.
pub const OPT_TOL: f64 = 1e-12;

/// Dense real matrix with at least one row and one column and finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Self(m))
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows.checked_mul(cols) != Some(entries.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len());
        for i in 0..self.rows() {
            out.extend(self.0.row(i).iter());
        }
        out
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<DMatrix<f64>> for DenseMatrix {
    type Error = Error;

    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m)
    }
}

/// Orthonormal basis of the range of a matrix.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    pub q: DenseMatrix,
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct LeastSquaresSolution {
    pub x: DVector<f64>,
    /// `|Ax - b|_2`, only known when the full right-hand side was supplied.
    pub residual_norm: Option<f64>,
    /// `rank(SA) == rank(A)`. Always true for unsketched solves.
    pub sketched_rank_ok: bool,
}

/// Source of individual right-hand-side entries, queried on demand.
pub trait EntryOracle {
    fn len(&self) -> usize;

    fn entry(&mut self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The whole vector, when the oracle holds one.
    fn full_vector(&self) -> Option<&DVector<f64>> {
        None
    }
}

/// Right-hand side of a sketched solve.
pub enum SketchRhs<'a> {
    Full(&'a DVector<f64>),
    Oracle(&'a mut dyn EntryOracle),
}

impl SketchRhs<'_> {
    fn len(&self) -> usize {
        match self {
            SketchRhs::Full(b) => b.len(),
            SketchRhs::Oracle(o) => o.len(),
        }
    }
}

/// Thin SVD with singular values truncated at `RANK_TOL * sigma_max`.
struct TruncatedSvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

impl TruncatedSvd {
    fn new(m: &DMatrix<f64>) -> Self {
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let rank = if smax > 0.0 {
            svd.singular_values
                .iter()
                .filter(|&&s| s > RANK_TOL * smax)
                .count()
        } else {
            0
        };
        // `svd` sorts singular values in decreasing order.
        let u = svd.u.expect("u requested").columns(0, rank).into_owned();
        let v = svd
            .v_t
            .expect("v_t requested")
            .rows(0, rank)
            .transpose();
        let sigma = svd.singular_values.iter().take(rank).cloned().collect();
        Self { u, sigma, v }
    }

    fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Minimum-norm least-squares solution `M^+ rhs`.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut coef = self.u.tr_mul(rhs);
        for (c, s) in coef.iter_mut().zip(&self.sigma) {
            *c /= s;
        }
        &self.v * coef
    }
}

/// Numerical rank at `RANK_TOL` relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Minimum-norm solution of `min |M x - rhs|` and the numerical rank of `M`.
pub fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    let svd = TruncatedSvd::new(m);
    (svd.solve(rhs), svd.rank())
}

pub fn orthonormal_basis(a: &DenseMatrix) -> Result<OrthoBasis> {
    if a.rows() < a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "orthonormal basis needs rows >= cols, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let svd = TruncatedSvd::new(a);
    if svd.rank() == 0 {
        return Err(Error::ZeroRank);
    }
    Ok(OrthoBasis {
        rank: svd.rank(),
        q: DenseMatrix(svd.u),
    })
}

pub fn solve_full_ls(a: &DenseMatrix, b: &DVector<f64>) -> Result<LeastSquaresSolution> {
    LsContext::new(a)?.solve_full(b)
}

pub fn solve_sketched_ls(
    a: &DenseMatrix,
    rhs: SketchRhs<'_>,
    s: &SketchOperator,
) -> Result<LeastSquaresSolution> {
    LsContext::new(a)?.solve_sketched(rhs, s)
}

pub fn residual_decomposition(
    a: &DenseMatrix,
    b: &DVector<f64>,
    s: &SketchOperator,
) -> Result<ResidualDecomposition> {
    LsContext::new(a)?.residual_decomposition(b, s)
}

pub fn optimality_coefficient(a: &DenseMatrix, b: &DVector<f64>, s: &SketchOperator) -> Result<f64> {
    LsContext::new(a)?.optimality_coefficient(b, s)
}

/// The three squared quantities of the sketched-residual identity
/// `r_S^2 = r^2 + |(SQ)^+ S Q_perp Q_perp^T b|^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualDecomposition {
    pub full_sq: f64,
    pub proj_sq: f64,
    pub sketched_sq: f64,
}

/// A design matrix together with its truncated SVD.
pub struct LsContext<'a> {
    a: &'a DenseMatrix,
    svd: TruncatedSvd,
}

impl<'a> LsContext<'a> {
    pub fn new(a: &'a DenseMatrix) -> Result<Self> {
        let svd = TruncatedSvd::new(a);
        if svd.rank() == 0 {
            return Err(Error::ZeroRank);
        }
        Ok(Self { a, svd })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        self.a
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    /// Orthonormal basis `Q` of `range(A)` (left singular vectors).
    pub fn q(&self) -> &DMatrix<f64> {
        &self.svd.u
    }

    pub fn basis(&self) -> OrthoBasis {
        OrthoBasis {
            q: DenseMatrix(self.svd.u.clone()),
            rank: self.rank(),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "vector has length {len}, matrix has {} rows",
                self.a.rows()
            )));
        }
        Ok(())
    }

    /// `Q Q^T b`.
    pub fn project_range(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(b.len())?;
        Ok(&self.svd.u * self.svd.u.tr_mul(b))
    }

    /// `Q_perp Q_perp^T b = b - Q Q^T b`.
    pub fn project_complement(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(b - self.project_range(b)?)
    }

    /// `r(A, b)`, erroring when `b` lies in `range(A)` at `OPT_TOL`.
    pub fn full_residual_checked(&self, b: &DVector<f64>) -> Result<f64> {
        let r = self.project_complement(b)?.norm();
        if r <= OPT_TOL * b.norm() {
            return Err(Error::Degenerate(
                "right-hand side lies in range(A)".into(),
            ));
        }
        Ok(r)
    }

    pub fn solve_full(&self, b: &DVector<f64>) -> Result<LeastSquaresSolution> {
        self.check_len(b.len())?;
        let x = self.svd.solve(b);
        let residual = (self.a.as_matrix() * &x - b).norm();
        Ok(LeastSquaresSolution {
            x,
            residual_norm: Some(residual),
            sketched_rank_ok: true,
        })
    }

    pub fn solve_sketched(
        &self,
        rhs: SketchRhs<'_>,
        s: &SketchOperator,
    ) -> Result<LeastSquaresSolution> {
        self.check_len(rhs.len())?;
        if s.n() != self.a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "sketch acts on {} rows, matrix has {}",
                s.n(),
                self.a.rows()
            )));
        }
        let full = match &rhs {
            SketchRhs::Full(b) => Some((*b).clone()),
            SketchRhs::Oracle(o) => o.full_vector().cloned(),
        };
        let sb = match rhs {
            SketchRhs::Full(b) => s.apply_vector(b)?,
            SketchRhs::Oracle(o) => s.apply_oracle(o)?,
        };
        let sa = s.apply_matrix(self.a)?;
        let sketched = TruncatedSvd::new(&sa);
        let x = sketched.solve(&sb);
        let residual_norm = full.map(|b| (self.a.as_matrix() * &x - b).norm());
        Ok(LeastSquaresSolution {
            x,
            residual_norm,
            sketched_rank_ok: sketched.rank() == self.rank(),
        })
    }

    fn require_rank(&self, sq: &DMatrix<f64>) -> Result<TruncatedSvd> {
        let svd = TruncatedSvd::new(sq);
        if svd.rank() != self.rank() {
            return Err(Error::RankDrop {
                sketched: svd.rank(),
                full: self.rank(),
            });
        }
        Ok(svd)
    }

    pub fn residual_decomposition(
        &self,
        b: &DVector<f64>,
        s: &SketchOperator,
    ) -> Result<ResidualDecomposition> {
        self.check_len(b.len())?;
        let sq = s.apply_matrix(self.q())?;
        let sq_svd = self.require_rank(&sq)?;
        let perp = self.project_complement(b)?;
        let proj = sq_svd.solve(&s.apply_vector(&perp)?);
        let sol = self.solve_sketched(SketchRhs::Full(b), s)?;
        if !sol.sketched_rank_ok {
            return Err(Error::RankDrop {
                sketched: numerical_rank(&s.apply_matrix(self.a)?),
                full: self.rank(),
            });
        }
        let rs = sol.residual_norm.expect("full rhs supplied");
        Ok(ResidualDecomposition {
            full_sq: perp.norm_squared(),
            proj_sq: proj.norm_squared(),
            sketched_sq: rs * rs,
        })
    }

    /// `mu(b, S) = sqrt((r_S^2 - r^2) / r^2)`.
    ///
    /// The numerator is evaluated as `|A x_S - Q Q^T b|^2`, which equals
    /// `r_S^2 - r^2` exactly because `A x* - b` is orthogonal to `range(A)`.
    pub fn optimality_coefficient(&self, b: &DVector<f64>, s: &SketchOperator) -> Result<f64> {
        let r = self.full_residual_checked(b)?;
        let sol = self.solve_sketched(SketchRhs::Full(b), s)?;
        if !sol.sketched_rank_ok {
            return Err(Error::RankDrop {
                sketched: numerical_rank(&s.apply_matrix(self.a)?),
                full: self.rank(),
            });
        }
        let excess = (self.a.as_matrix() * &sol.x - self.project_range(b)?).norm();
        Ok(excess / r)
    }

    /// `mu(b_i, S)` for several right-hand sides sharing one factorization
    /// of `SA`.
    pub fn optimality_coefficients(&self, bs: &[&DVector<f64>], s: &SketchOperator) -> Result<Vec<f64>> {
        let sa = s.apply_matrix(self.a)?;
        let sketched = TruncatedSvd::new(&sa);
        if sketched.rank() != self.rank() {
            return Err(Error::RankDrop {
                sketched: sketched.rank(),
                full: self.rank(),
            });
        }
        bs.iter()
            .map(|b| {
                let r = self.full_residual_checked(b)?;
                let x = sketched.solve(&s.apply_vector(b)?);
                Ok((self.a.as_matrix() * &x - self.project_range(b)?).norm() / r)
            })
            .collect()
    }

    /// `mu(b, S)` through the projection quotient
    /// `|(SQ)^+ S Q_perp Q_perp^T b| / |Q_perp Q_perp^T b|`.
    pub fn optimality_coefficient_projection(
        &self,
        b: &DVector<f64>,
        s: &SketchOperator,
    ) -> Result<f64> {
        let r = self.full_residual_checked(b)?;
        let sq = s.apply_matrix(self.q())?;
        let sq_svd = self.require_rank(&sq)?;
        let perp = self.project_complement(b)?;
        Ok(sq_svd.solve(&s.apply_vector(&perp)?).norm() / r)
    }
}

/// Full orthogonal factor of a tall matrix kept as Householder reflectors.
///
/// `apply(z)` computes `Q_full z` where the first `d` columns of `Q_full`
/// span `range(A)` and the remaining `N - d` columns form an orthonormal
/// complement.
pub struct HouseholderQ {
    n: usize,
    reflectors: Vec<DVector<f64>>,
}

impl HouseholderQ {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let k = a.ncols().min(n);
        let mut work = a.clone();
        let mut reflectors = Vec::with_capacity(k);
        for j in 0..k {
            let mut v = DVector::zeros(n);
            let col = work.column(j);
            let alpha = col.rows(j, n - j).norm();
            if alpha == 0.0 {
                v[j] = 1.0;
            } else {
                let x0 = col[j];
                let sign = if x0 >= 0.0 { 1.0 } else { -1.0 };
                for i in j..n {
                    v[i] = col[i];
                }
                v[j] += sign * alpha;
                let vn = v.norm();
                v /= vn;
            }
            // work <- (I - 2 v v^T) work
            let proj = work.tr_mul(&v);
            work -= 2.0 * &v * proj.transpose();
            reflectors.push(v);
        }
        Self { n, reflectors }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn range_dim(&self) -> usize {
        self.reflectors.len()
    }

    /// `Q_full z = H_1 H_2 ... H_k z`.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(z.len(), self.n);
        let mut out = z.clone();
        for v in self.reflectors.iter().rev() {
            let t = 2.0 * v.dot(&out);
            out.axpy(-t, v, 1.0);
        }
        out
    }

    /// `Q_full [z; 0]`, a vector in the span of the first `z.len()` columns.
    pub fn range_vector(&self, z: &[f64]) -> DVector<f64> {
        assert!(z.len() <= self.range_dim());
        let mut full = DVector::zeros(self.n);
        full.rows_mut(0, z.len()).copy_from_slice(z);
        self.apply(&full)
    }

    /// `Q_full [0; z]`, a vector in the orthogonal complement of the range.
    pub fn complement_vector(&self, z: &[f64]) -> DVector<f64> {
        let k = self.range_dim();
        assert!(z.len() <= self.n - k);
        let mut full = DVector::zeros(self.n);
        full.rows_mut(k, z.len()).copy_from_slice(z);
        self.apply(&full)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{SketchKind, SketchSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        DenseMatrix::new(DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng)))
            .unwrap()
    }

    #[test]
    fn identity_basis() {
        let b = orthonormal_basis(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(b.rank, 3);
        let qtq = b.q.tr_mul(&b.q);
        assert!((qtq - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        // span(I) is everything; each column of q is a signed unit vector
        for j in 0..3 {
            assert!((b.q.column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn column_vector_basis() {
        let a = DenseMatrix::from_row_major(2, 1, &[1.0, 1.0]).unwrap();
        let b = orthonormal_basis(&a).unwrap();
        assert_eq!(b.rank, 1);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.q[(0, 0)].abs() - s).abs() < 1e-15);
        assert!((b.q[(1, 0)] - b.q[(0, 0)]).abs() < 1e-15);
    }

    #[test]
    fn random_basis_orthonormal() {
        let a = randn(50, 10, 1);
        let b = orthonormal_basis(&a).unwrap();
        assert_eq!(b.rank, 10);
        let qtq = b.q.tr_mul(&b.q);
        assert!((qtq - DMatrix::identity(10, 10)).abs().max() < 1e-10);
    }

    #[test]
    fn zero_matrix_has_no_basis() {
        let a = DenseMatrix::new(DMatrix::zeros(4, 2)).unwrap();
        assert!(matches!(orthonormal_basis(&a), Err(Error::ZeroRank)));
    }

    #[test]
    fn rank_deficient_basis() {
        let mut m = randn(20, 3, 2).into_inner();
        let c = m.column(0) + m.column(1);
        m.set_column(2, &c);
        let b = orthonormal_basis(&DenseMatrix::new(m).unwrap()).unwrap();
        assert_eq!(b.rank, 2);
    }

    #[test]
    fn full_ls_identity() {
        let a = DenseMatrix::identity(2);
        let sol = solve_full_ls(&a, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-14 && (sol.x[1] - 4.0).abs() < 1e-14);
        assert!(sol.residual_norm.unwrap() < 1e-14);
    }

    #[test]
    fn full_ls_two_by_one() {
        let a = DenseMatrix::from_row_major(2, 1, &[1.0, 1.0]).unwrap();
        let sol = solve_full_ls(&a, &DVector::from_vec(vec![0.0, 2.0])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14);
        assert!((sol.residual_norm.unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn full_ls_consistent() {
        let a = randn(100, 5, 3);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        let b = a.as_matrix() * &x;
        let sol = solve_full_ls(&a, &b).unwrap();
        assert!(sol.residual_norm.unwrap() <= 1e-10 * b.norm());
    }

    #[test]
    fn full_ls_min_norm_for_rank_deficient() {
        // two identical columns: min-norm splits the coefficient evenly
        let a = DenseMatrix::from_row_major(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]).unwrap();
        let sol = solve_full_ls(&a, &DVector::from_vec(vec![2.0, 4.0, 1.0])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_ls_dimension_mismatch() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(
            solve_full_ls(&a, &DVector::zeros(2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn identity_sketch_matches_full_solve() {
        let a = randn(40, 4, 4);
        let b = DVector::from_fn(40, |i, _| (i as f64).sin());
        let s = SketchOperator::row_sample(
            SketchSpec::new(SketchKind::Uniform, 40, 0),
            40,
            (0..40).collect(),
            vec![1.0; 40],
        )
        .unwrap();
        let full = solve_full_ls(&a, &b).unwrap();
        let sk = solve_sketched_ls(&a, SketchRhs::Full(&b), &s).unwrap();
        assert!((full.x - sk.x).norm() < 1e-12);
        assert!(sk.sketched_rank_ok);
    }

    #[test]
    fn permuted_full_sample_matches_full_solve() {
        let a = randn(30, 3, 5);
        let b = DVector::from_fn(30, |i, _| (i as f64 * 0.3).cos());
        let idx: Vec<usize> = (0..30).rev().collect();
        let s = SketchOperator::row_sample(
            SketchSpec::new(SketchKind::Uniform, 30, 0),
            30,
            idx,
            vec![1.0; 30],
        )
        .unwrap();
        let full = solve_full_ls(&a, &b).unwrap();
        let sk = solve_sketched_ls(&a, SketchRhs::Full(&b), &s).unwrap();
        assert!((full.x - sk.x).norm() < 1e-12);
    }

    #[test]
    fn consistent_rhs_has_zero_decomposition() {
        let a = randn(60, 4, 6);
        let b = a.as_matrix() * DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let s = crate::sketch::gaussian_sketch(60, SketchSpec::new(SketchKind::Gaussian, 12, 9)).unwrap();
        let dec = residual_decomposition(&a, &b, &s).unwrap();
        assert!(dec.full_sq <= 1e-20 * b.norm_squared());
        assert!(dec.proj_sq <= 1e-20 * b.norm_squared());
    }

    #[test]
    fn identity_sketch_has_zero_projection_term() {
        let a = randn(25, 3, 7);
        let b = DVector::from_fn(25, |i, _| 1.0 + (i as f64).sqrt());
        let s = SketchOperator::dense(
            SketchSpec::new(SketchKind::Gaussian, 25, 0),
            DMatrix::identity(25, 25),
        )
        .unwrap();
        let dec = residual_decomposition(&a, &b, &s).unwrap();
        assert!(dec.proj_sq <= 1e-24 * b.norm_squared());
        assert!((dec.sketched_sq - dec.full_sq).abs() <= 1e-12 * dec.full_sq);
        let mu = optimality_coefficient(&a, &b, &s).unwrap();
        assert!(mu < 1e-7);
    }

    #[test]
    fn decomposition_matches_independent_sketched_solve() {
        let a = randn(200, 10, 8);
        let b = DVector::from_fn(200, |i, _| ((i * i) as f64 * 0.01).sin());
        let s = crate::sketch::gaussian_sketch(200, SketchSpec::new(SketchKind::Gaussian, 40, 11)).unwrap();
        let dec = residual_decomposition(&a, &b, &s).unwrap();
        let sol = solve_sketched_ls(&a, SketchRhs::Full(&b), &s).unwrap();
        let rs2 = sol.residual_norm.unwrap().powi(2);
        assert!((dec.sketched_sq - rs2).abs() <= 1e-12 * rs2);
        assert!((dec.sketched_sq - dec.full_sq - dec.proj_sq).abs() <= 1e-8 * dec.sketched_sq);
    }

    #[test]
    fn rank_drop_is_reported() {
        let a = randn(20, 4, 9);
        let b = DVector::from_fn(20, |i, _| i as f64);
        let s = SketchOperator::row_sample(
            SketchSpec::new(SketchKind::Uniform, 2, 0),
            20,
            vec![0, 1],
            vec![1.0, 1.0],
        )
        .unwrap();
        match residual_decomposition(&a, &b, &s) {
            Err(Error::RankDrop { sketched, full }) => {
                assert_eq!((sketched, full), (2, 4));
            }
            other => panic!("expected rank drop, got {other:?}"),
        }
        assert!(matches!(
            optimality_coefficient(&a, &b, &s),
            Err(Error::RankDrop { .. })
        ));
    }

    #[test]
    fn mu_rejects_consistent_rhs() {
        let a = randn(30, 3, 10);
        let b = a.as_matrix() * DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let s = crate::sketch::gaussian_sketch(30, SketchSpec::new(SketchKind::Gaussian, 10, 1)).unwrap();
        assert!(matches!(
            optimality_coefficient(&a, &b, &s),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mu_zero_when_sketch_reproduces_full_solution() {
        // b = range part + tiny complement concentrated off the sampled rows
        // makes x_S equal x* only if the sampled rows carry no residual; use
        // a complement supported on unsampled rows.
        let a = DenseMatrix::from_row_major(
            4,
            2,
            &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let b = DVector::from_vec(vec![1e-3, 2e-3, 1.0, -1.0]);
        let s = SketchOperator::row_sample(
            SketchSpec::new(SketchKind::Cpqr, 2, 0),
            4,
            vec![0, 1],
            vec![1.0, 1.0],
        )
        .unwrap();
        let ctx = LsContext::new(&a).unwrap();
        assert!(ctx.optimality_coefficient(&b, &s).unwrap() < 1e-12);
        assert!(ctx.optimality_coefficient_projection(&b, &s).unwrap() < 1e-12);
    }

    #[test]
    fn householder_q_is_orthogonal_and_splits_range() {
        let a = randn(12, 3, 12);
        let h = HouseholderQ::new(&a);
        let q = DMatrix::from_fn(12, 12, |i, j| {
            let mut e = DVector::zeros(12);
            e[j] = 1.0;
            h.apply(&e)[i]
        });
        assert!((q.tr_mul(&q) - DMatrix::identity(12, 12)).abs().max() < 1e-12);
        let ctx = LsContext::new(&a).unwrap();
        let inside = h.range_vector(&[0.3, -0.2, 0.9]);
        assert!(ctx.project_complement(&inside).unwrap().norm() < 1e-12);
        let outside = h.complement_vector(&[1.0, 2.0, 3.0]);
        assert!(ctx.project_range(&outside).unwrap().norm() < 1e-12);
    }
}
