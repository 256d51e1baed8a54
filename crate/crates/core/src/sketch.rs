//! Sketch operators for least-squares problems.
//!
//! A sketch `S` is an `m x N` matrix. Row-sampling sketches are stored as
//! `m` row indices plus a scale per row and applied as a weighted gather, so
//! `S b` touches only the sampled entries of `b`. Gaussian sketches are dense.
//!
//! Constructors provided here:
//!
//! * [`gaussian_sketch`]: i.i.d. `N(0, 1/m)` entries.
//! * [`uniform_sketch`]: i.i.d. uniform rows, scale `sqrt(N/m)`.
//! * [`leverage_sketch`]: i.i.d. rows with probability `l_i / sum(l)`,
//!   scale `1/sqrt(m p_i)`.
//! * [`leveraged_volume_sketch`]: determinantal rejection sampling of a
//!   leverage-drawn pool followed by reverse iterative volume sampling.
//! * [`cpqr_sketch`]: deterministic rounds of column-pivoted QR on `A^T`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, DenseMatrix, EntryOracle, OrthoBasis};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchKind {
    Gaussian,
    Uniform,
    Leverage,
    LeveragedVolume,
    Cpqr,
}

impl SketchKind {
    pub const ALL: [SketchKind; 5] = [
        SketchKind::Gaussian,
        SketchKind::Uniform,
        SketchKind::Leverage,
        SketchKind::LeveragedVolume,
        SketchKind::Cpqr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Gaussian => "gaussian",
            SketchKind::Uniform => "uniform",
            SketchKind::Leverage => "leverage",
            SketchKind::LeveragedVolume => "leveraged_volume",
            SketchKind::Cpqr => "cpqr",
        }
    }

    /// Whether the constructor produces a row sample.
    pub fn is_row_sampling(self) -> bool {
        !matches!(self, SketchKind::Gaussian)
    }
}

impl std::fmt::Display for SketchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SketchKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "leveraged-volume" && *k == SketchKind::LeveragedVolume))
            .ok_or_else(|| Error::Usage(format!("unknown sketch kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub m: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(kind: SketchKind, m: usize, seed: u64) -> Self {
        Self { kind, m, seed }
    }

    /// Spec of sketch `l` in a family sharing `base_seed`.
    pub fn member(kind: SketchKind, m: usize, base_seed: u64, l: usize) -> Self {
        Self::new(kind, m, derive_seed(base_seed, l as u64))
    }

    fn expect_kind(&self, kind: SketchKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "spec kind is {}, constructor builds {kind}",
                self.kind
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidArgument("embedding dimension m must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SketchForm {
    RowSample { indices: Vec<usize>, weights: Vec<f64> },
    Dense { matrix: DMatrix<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchOperator {
    spec: SketchSpec,
    form: SketchForm,
    n: usize,
}

impl SketchOperator {
    pub fn row_sample(spec: SketchSpec, n: usize, indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if indices.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices but {} weights",
                indices.len(),
                weights.len()
            )));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!("row index {i} out of range for N = {n}")));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidArgument("row weights must be finite and positive".into()));
        }
        Ok(Self {
            spec,
            form: SketchForm::RowSample { indices, weights },
            n,
        })
    }

    pub fn dense(spec: SketchSpec, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sketch entry".into()));
        }
        let n = matrix.ncols();
        Ok(Self {
            spec,
            form: SketchForm::Dense { matrix },
            n,
        })
    }

    pub fn spec(&self) -> &SketchSpec {
        &self.spec
    }

    pub fn form(&self) -> &SketchForm {
        &self.form
    }

    /// Number of source rows `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of sketch rows.
    pub fn m(&self) -> usize {
        match &self.form {
            SketchForm::RowSample { indices, .. } => indices.len(),
            SketchForm::Dense { matrix } => matrix.nrows(),
        }
    }

    pub fn is_row_sample(&self) -> bool {
        matches!(self.form, SketchForm::RowSample { .. })
    }

    pub fn indices(&self) -> Option<&[usize]> {
        match &self.form {
            SketchForm::RowSample { indices, .. } => Some(indices),
            SketchForm::Dense { .. } => None,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.form {
            SketchForm::RowSample { weights, .. } => Some(weights),
            SketchForm::Dense { .. } => None,
        }
    }

    /// Distinct sampled rows, ascending. `None` for dense sketches.
    pub fn distinct_rows(&self) -> Option<Vec<usize>> {
        self.indices().map(|idx| {
            let mut v = idx.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        })
    }

    pub fn apply_matrix(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "sketch acts on {} rows, operand has {}",
                self.n,
                a.nrows()
            )));
        }
        Ok(match &self.form {
            SketchForm::RowSample { indices, weights } => {
                let mut out = DMatrix::zeros(indices.len(), a.ncols());
                for (r, (&i, &w)) in indices.iter().zip(weights).enumerate() {
                    for c in 0..a.ncols() {
                        out[(r, c)] = w * a[(i, c)];
                    }
                }
                out
            }
            SketchForm::Dense { matrix } => matrix * a,
        })
    }

    pub fn apply_vector(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "sketch acts on {} rows, vector has {}",
                self.n,
                b.len()
            )));
        }
        Ok(match &self.form {
            SketchForm::RowSample { indices, weights } => {
                DVector::from_iterator(indices.len(), indices.iter().zip(weights).map(|(&i, &w)| w * b[i]))
            }
            SketchForm::Dense { matrix } => matrix * b,
        })
    }

    /// `S b` reading `b` through an entry oracle. Only row samples can do
    /// this; dense sketches need every entry.
    pub fn apply_oracle(&self, oracle: &mut dyn EntryOracle) -> Result<DVector<f64>> {
        if oracle.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "sketch acts on {} rows, oracle has {}",
                self.n,
                oracle.len()
            )));
        }
        match &self.form {
            SketchForm::RowSample { indices, weights } => Ok(DVector::from_iterator(
                indices.len(),
                indices.iter().zip(weights).map(|(&i, &w)| w * oracle.entry(i)),
            )),
            SketchForm::Dense { .. } => match oracle.full_vector() {
                Some(b) => self.apply_vector(&b.clone()),
                None => Err(Error::FullVectorRequired(
                    "a dense sketch cannot be applied through an entry oracle".into(),
                )),
            },
        }
    }

    /// The explicit `m x N` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.form {
            SketchForm::RowSample { indices, weights } => {
                let mut s = DMatrix::zeros(indices.len(), self.n);
                for (r, (&i, &w)) in indices.iter().zip(weights).enumerate() {
                    s[(r, i)] = w;
                }
                s
            }
            SketchForm::Dense { matrix } => matrix.clone(),
        }
    }

    pub fn to_record(&self) -> SketchRecord {
        SketchRecord {
            kind: self.spec.kind,
            m: self.spec.m,
            seed: self.spec.seed,
            n: self.n,
            indices: self.indices().map(<[usize]>::to_vec),
            weights: self.weights().map(<[f64]>::to_vec),
        }
    }

    /// Rebuilds an operator from its record. Dense Gaussian operators are
    /// regenerated from `(n, spec)`.
    pub fn from_record(rec: &SketchRecord) -> Result<Self> {
        let spec = SketchSpec::new(rec.kind, rec.m, rec.seed);
        match (&rec.indices, &rec.weights) {
            (Some(i), Some(w)) => Self::row_sample(spec, rec.n, i.clone(), w.clone()),
            (None, None) if rec.kind == SketchKind::Gaussian => gaussian_sketch(rec.n, spec),
            _ => Err(Error::Format("sketch record needs both indices and weights".into())),
        }
    }
}

/// JSON form of a sketch operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchRecord {
    pub kind: SketchKind,
    pub m: usize,
    pub seed: u64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub indices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
}

pub fn apply_sketch(s: &SketchOperator, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    s.apply_matrix(m)
}

#[derive(Clone, Debug)]
pub struct LeverageProfile {
    pub scores: Vec<f64>,
    pub coherence: f64,
    pub rank: usize,
}

impl LeverageProfile {
    pub fn from_basis(basis: &OrthoBasis) -> Self {
        let q = &basis.q;
        let scores: Vec<f64> = (0..q.nrows()).map(|i| q.row(i).norm_squared()).collect();
        let coherence = scores.iter().cloned().fold(0.0, f64::max);
        Self {
            scores,
            coherence,
            rank: basis.rank,
        }
    }
}

pub fn leverage_profile(a: &DenseMatrix) -> Result<LeverageProfile> {
    Ok(LeverageProfile::from_basis(&orthonormal_basis(a)?))
}

pub fn gaussian_sketch(n: usize, spec: SketchSpec) -> Result<SketchOperator> {
    spec.expect_kind(SketchKind::Gaussian)?;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be >= 1".into()));
    }
    spec.m
        .checked_mul(n)
        .ok_or_else(|| Error::InvalidArgument("sketch size overflows".into()))?;
    let mut rng = stream(spec.seed);
    let scale = 1.0 / (spec.m as f64).sqrt();
    // drawn row by row so the stream order matches the row-major layout
    let mut entries = Vec::with_capacity(spec.m * n);
    for _ in 0..spec.m * n {
        let z: f64 = StandardNormal.sample(&mut rng);
        entries.push(z * scale);
    }
    SketchOperator::dense(spec, DMatrix::from_row_slice(spec.m, n, &entries))
}

pub fn uniform_sketch(n: usize, spec: SketchSpec) -> Result<SketchOperator> {
    spec.expect_kind(SketchKind::Uniform)?;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be >= 1".into()));
    }
    let mut rng = stream(spec.seed);
    let indices: Vec<usize> = (0..spec.m).map(|_| rng.random_range(0..n)).collect();
    let w = (n as f64 / spec.m as f64).sqrt();
    SketchOperator::row_sample(spec, n, indices, vec![w; spec.m])
}

pub fn leverage_sketch(profile: &LeverageProfile, spec: SketchSpec) -> Result<SketchOperator> {
    spec.expect_kind(SketchKind::Leverage)?;
    sample_by_weights(&profile.scores, spec)
}

/// i.i.d. rows drawn with probability proportional to `scores`, each scaled
/// by `1/sqrt(m p_i)`.
pub(crate) fn sample_by_weights(scores: &[f64], spec: SketchSpec) -> Result<SketchOperator> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) || scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidArgument(
            "sampling scores must be nonnegative with a positive sum".into(),
        ));
    }
    let dist = WeightedIndex::new(scores).map_err(|e| Error::Sampling(e.to_string()))?;
    let mut rng = stream(spec.seed);
    let m = spec.m as f64;
    let indices: Vec<usize> = (0..spec.m).map(|_| dist.sample(&mut rng)).collect();
    let weights = indices
        .iter()
        .map(|&i| 1.0 / (m * scores[i] / total).sqrt())
        .collect();
    SketchOperator::row_sample(spec, scores.len(), indices, weights)
}

/// Greedy column-pivoted Gram-Schmidt on the rows of `rows` (the columns of
/// its transpose). Returns the first `k` pivots as positions into `rows`.
/// Ties go to the smallest position.
fn cpqr_pivots(rows: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = rows.nrows();
    let mut work = rows.clone();
    let mut norms: Vec<f64> = (0..n).map(|i| work.row(i).norm_squared()).collect();
    let mut taken = vec![false; n];
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k.min(n) {
        let mut best = usize::MAX;
        for i in 0..n {
            if !taken[i] && (best == usize::MAX || norms[i] > norms[best]) {
                best = i;
            }
        }
        taken[best] = true;
        pivots.push(best);
        let nrm = norms[best].sqrt();
        if nrm == 0.0 {
            continue;
        }
        let q = work.row(best).transpose() / nrm;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let c = work.row(i).dot(&q.transpose());
            for j in 0..work.ncols() {
                work[(i, j)] -= c * q[j];
            }
            norms[i] = work.row(i).norm_squared();
        }
    }
    pivots
}

/// Deterministic row selection by repeated column-pivoted QR of `A^T`.
///
/// Each round pivots the not-yet-selected rows, keeps the top
/// `min(d, remaining)` pivots and removes them.
pub fn cpqr_sketch(a: &DenseMatrix, m: usize) -> Result<SketchOperator> {
    let n = a.rows();
    let d = a.cols();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cpqr sketch needs 1 <= m <= N, got m = {m}, N = {n}"
        )));
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(m);
    while selected.len() < m {
        let k = d.min(m - selected.len());
        let sub = a.select_rows(remaining.iter());
        let pivots = cpqr_pivots(&sub, k);
        let mut drop = vec![false; remaining.len()];
        for &p in &pivots {
            selected.push(remaining[p]);
            drop[p] = true;
        }
        remaining = remaining
            .into_iter()
            .zip(drop)
            .filter_map(|(r, gone)| (!gone).then_some(r))
            .collect();
    }
    SketchOperator::row_sample(SketchSpec::new(SketchKind::Cpqr, m, 0), n, selected, vec![1.0; m])
}

/// Pool-size multiplier: the first stage draws `max(POOL_FACTOR * d^2, m)` rows.
pub const POOL_FACTOR: usize = 4;
/// Rank-deficient pools tolerated before giving up.
pub const MAX_POOL_RETRIES: usize = 16;
/// Rejected pools tolerated before giving up.
const MAX_REJECTIONS: usize = 100_000;

pub fn leveraged_volume_sketch(a: &DenseMatrix, spec: SketchSpec) -> Result<SketchOperator> {
    if spec.m < a.cols() {
        return Err(Error::InvalidArgument(format!(
            "leveraged volume sampling needs m >= d, got m = {}, d = {}",
            spec.m,
            a.cols()
        )));
    }
    leveraged_volume_from_basis(&orthonormal_basis(a)?, spec)
}

/// Cholesky factor of a symmetric positive definite matrix; `None` when a
/// pivot falls below `tol`.
fn cholesky_det(m: &DMatrix<f64>, tol: f64) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let mut det = 1.0;
    for i in 0..l.nrows() {
        let p = l[(i, i)] * l[(i, i)];
        if !(p > tol) {
            return None;
        }
        det *= p;
    }
    Some(det)
}

pub(crate) fn leveraged_volume_from_basis(basis: &OrthoBasis, spec: SketchSpec) -> Result<SketchOperator> {
    spec.expect_kind(SketchKind::LeveragedVolume)?;
    let u = basis.q.as_matrix();
    let (n, r) = (u.nrows(), u.ncols());
    if spec.m < r {
        return Err(Error::InvalidArgument(format!(
            "leveraged volume sampling needs m >= rank, got m = {}, rank = {r}",
            spec.m
        )));
    }
    let scores: Vec<f64> = (0..n).map(|i| u.row(i).norm_squared()).collect();
    let q: Vec<f64> = scores.iter().map(|l| l / r as f64).collect();
    let dist = WeightedIndex::new(&scores).map_err(|e| Error::Sampling(e.to_string()))?;
    let pool_size = (POOL_FACTOR * r * r).max(spec.m);

    let mut rng = stream(spec.seed);
    let mut rank_failures = 0;
    let mut rejections = 0;
    let (pool, rows) = loop {
        let pool: Vec<usize> = (0..pool_size).map(|_| dist.sample(&mut rng)).collect();
        let mut rows = DMatrix::zeros(pool_size, r);
        for (j, &i) in pool.iter().enumerate() {
            let s = 1.0 / q[i].sqrt();
            for c in 0..r {
                rows[(j, c)] = s * u[(i, c)];
            }
        }
        // M has trace r, so det(M) <= 1 and can serve as the acceptance probability
        let gram = rows.tr_mul(&rows) / pool_size as f64;
        match cholesky_det(&gram, 1e-10) {
            None => {
                rank_failures += 1;
                if rank_failures > MAX_POOL_RETRIES {
                    return Err(Error::Sampling(format!(
                        "pool stayed rank deficient after {MAX_POOL_RETRIES} retries"
                    )));
                }
                rng = stream(derive_seed(spec.seed, rank_failures as u64));
            }
            Some(det) => {
                if rng.random::<f64>() < det {
                    break (pool, rows);
                }
                rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(Error::Sampling("determinantal rejection did not accept".into()));
                }
            }
        }
    };

    let kept = reverse_volume_sample(&rows, spec.m, &mut rng)?;
    let m = spec.m as f64;
    let indices: Vec<usize> = kept.iter().map(|&j| pool[j]).collect();
    let weights = indices.iter().map(|&i| 1.0 / (m * q[i]).sqrt()).collect();
    SketchOperator::row_sample(spec, n, indices, weights)
}

fn gram_inverse(rows: &DMatrix<f64>, alive: &[usize]) -> Result<DMatrix<f64>> {
    let sub = rows.select_rows(alive.iter());
    sub.tr_mul(&sub)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Sampling("surviving rows lost rank".into()))
}

/// Shrinks `rows` to `k` rows by removing one row at a time, row `i` with
/// probability proportional to `1 - x_i^T (X^T X)^{-1} x_i`. Returns the
/// kept positions in their original order.
fn reverse_volume_sample<R: Rng>(rows: &DMatrix<f64>, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut alive: Vec<usize> = (0..rows.nrows()).collect();
    let mut z = gram_inverse(rows, &alive)?;
    while alive.len() > k {
        // rejection: uniform proposal, accept with probability 1 - h_i
        let (pos, zx, h) = loop {
            let pos = rng.random_range(0..alive.len());
            let x = rows.row(alive[pos]).transpose();
            let zx = &z * &x;
            let h = x.dot(&zx);
            if rng.random::<f64>() < 1.0 - h {
                break (pos, zx, h);
            }
        };
        alive.remove(pos);
        if 1.0 - h < 1e-2 {
            z = gram_inverse(rows, &alive)?;
        } else {
            z += &zx * zx.transpose() / (1.0 - h);
        }
    }
    Ok(alive)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairCondition {
    pub sigma_ok: bool,
    pub cross_ok: bool,
    pub sigma_min_sq: f64,
    pub cross_norm_sq: f64,
}

impl PairCondition {
    pub fn holds(&self) -> bool {
        self.sigma_ok && self.cross_ok
    }
}

/// Checks `sigma_min^2(SQ) >= sqrt(2)/2` and `|Q^T S^T S h|^2 <= eps/2`.
pub fn pair_condition_check(
    s: &SketchOperator,
    q: &OrthoBasis,
    h: &DVector<f64>,
    eps: f64,
) -> Result<PairCondition> {
    let qm = q.q.as_matrix();
    if h.len() != qm.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "h has length {}, basis has {} rows",
            h.len(),
            qm.nrows()
        )));
    }
    if (h.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("h must be a unit vector, |h| = {}", h.norm())));
    }
    if qm.tr_mul(h).norm() > 1e-8 {
        return Err(Error::InvalidArgument("h must be orthogonal to range(Q)".into()));
    }
    let sq = s.apply_matrix(qm)?;
    let sh = s.apply_vector(h)?;
    let sigma_min = if sq.nrows() < sq.ncols() {
        0.0
    } else {
        sq.singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let sigma_min_sq = sigma_min * sigma_min;
    let cross_norm_sq = sq.tr_mul(&sh).norm_squared();
    Ok(PairCondition {
        sigma_ok: sigma_min_sq >= std::f64::consts::FRAC_1_SQRT_2,
        cross_ok: cross_norm_sq <= eps / 2.0,
        sigma_min_sq,
        cross_norm_sq,
    })
}

/// Sub-Gaussian norm `|X|_psi2` of a standard normal variable, `sqrt(8/3)`.
pub fn standard_normal_subgaussian_norm() -> f64 {
    (8.0f64 / 3.0).sqrt()
}

/// Which lower bound on the embedding dimension to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EmbeddingBound {
    /// Dense sub-Gaussian sketch: `C K^4 (d/eps) log(4dL/delta)`.
    SubGaussian { c: f64, k: f64 },
    /// Leverage sampling: `max{35 d log(4dL/delta), 2dL/(eps delta)}`.
    Leverage,
    /// Leverage sampling when `max d|q_ij h_j| / l_j <= c`:
    /// `max{35, 4c^2/eps} d log(4dL/delta)`.
    LeverageIncoherent { c: f64 },
}

impl EmbeddingBound {
    pub fn sub_gaussian_default() -> Self {
        EmbeddingBound::SubGaussian { c: 1.0, k: 1.0 }
    }
}

/// Smallest integer `m` meeting the bound.
pub fn min_embedding_dim(bound: EmbeddingBound, d: usize, l: usize, eps: f64, delta: f64) -> Result<usize> {
    if d == 0 || l == 0 {
        return Err(Error::InvalidArgument("d and L must be >= 1".into()));
    }
    if !(eps > 0.0) || !(delta > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument("eps and delta must be positive".into()));
    }
    let (d_f, l_f) = (d as f64, l as f64);
    let log_term = (4.0 * d_f * l_f / delta).ln();
    let value = match bound {
        EmbeddingBound::SubGaussian { c, k } => {
            if !(delta < 1.0) || !(c > 0.0) || !(k >= 1.0) {
                return Err(Error::InvalidArgument(
                    "sub-Gaussian bound needs delta < 1, C > 0 and K >= 1".into(),
                ));
            }
            c * k.powi(4) * d_f / eps * log_term
        }
        EmbeddingBound::Leverage => {
            leverage_ranges(eps, delta)?;
            (35.0 * d_f * log_term).max(2.0 * d_f * l_f / (eps * delta))
        }
        EmbeddingBound::LeverageIncoherent { c } => {
            leverage_ranges(eps, delta)?;
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("C must be positive".into()));
            }
            35f64.max(4.0 * c * c / eps) * d_f * log_term
        }
    };
    Ok(ceil_tolerant(value))
}

fn leverage_ranges(eps: f64, delta: f64) -> Result<()> {
    if eps < 0.5 && delta < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument("leverage bounds need eps, delta < 1/2".into()))
    }
}

/// Ceiling that ignores relative rounding noise below 1e-12, so an exact
/// integer computed as `99999.99999999999` maps to `100000`.
fn ceil_tolerant(x: f64) -> usize {
    let c = x.ceil();
    if c - x > 1.0 - 1e-12 * x.abs().max(1.0) {
        (c - 1.0) as usize
    } else {
        c as usize
    }
}

/// Builds sketches of any kind against one design matrix, caching the
/// orthonormal basis and leverage scores the random kinds need.
pub struct SketchBuilder<'a> {
    a: &'a DenseMatrix,
    basis: OnceLock<OrthoBasis>,
    profile: OnceLock<LeverageProfile>,
}

impl<'a> SketchBuilder<'a> {
    pub fn new(a: &'a DenseMatrix) -> Self {
        Self {
            a,
            basis: OnceLock::new(),
            profile: OnceLock::new(),
        }
    }

    /// Reuses a basis computed elsewhere.
    pub fn with_basis(a: &'a DenseMatrix, basis: OrthoBasis) -> Self {
        let b = Self::new(a);
        let _ = b.basis.set(basis);
        b
    }

    pub fn basis(&self) -> Result<&OrthoBasis> {
        if let Some(b) = self.basis.get() {
            return Ok(b);
        }
        let b = orthonormal_basis(self.a)?;
        Ok(self.basis.get_or_init(|| b))
    }

    pub fn profile(&self) -> Result<&LeverageProfile> {
        if let Some(p) = self.profile.get() {
            return Ok(p);
        }
        let p = LeverageProfile::from_basis(self.basis()?);
        Ok(self.profile.get_or_init(|| p))
    }

    pub fn build(&self, spec: SketchSpec) -> Result<SketchOperator> {
        let n = self.a.rows();
        match spec.kind {
            SketchKind::Gaussian => gaussian_sketch(n, spec),
            SketchKind::Uniform => uniform_sketch(n, spec),
            SketchKind::Leverage => leverage_sketch(self.profile()?, spec),
            SketchKind::LeveragedVolume => {
                if spec.m < self.a.cols() {
                    return Err(Error::InvalidArgument(format!(
                        "leveraged volume sampling needs m >= d, got m = {}, d = {}",
                        spec.m,
                        self.a.cols()
                    )));
                }
                leveraged_volume_from_basis(self.basis()?, spec)
            }
            SketchKind::Cpqr => cpqr_sketch(self.a, spec.m),
        }
    }

    /// `L` sketches of one kind with seeds derived from `base_seed`.
    pub fn family(&self, kind: SketchKind, m: usize, base_seed: u64, l: usize) -> Result<Vec<SketchOperator>> {
        (0..l)
            .map(|i| self.build(SketchSpec::member(kind, m, base_seed, i)))
            .collect()
    }
}
