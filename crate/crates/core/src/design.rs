//! Tensor-product Legendre design matrices on Gauss-Legendre grids, and
//! leverage-score sampling that exploits their Kronecker structure.
//!
//! Rows are tensor grid points, ordered with dimension 1 varying slowest.
//! Columns are multi-indices `(j_1, ..., j_q)` with flat Kronecker index
//! `sum_k j_k (zeta+1)^(q-1-k)`, kept in ascending order.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, DenseMatrix};
use crate::rng::stream;
use crate::sketch::{SketchKind, SketchOperator, SketchSpec};

/// Default ceiling on `N * d` for materialized design matrices.
pub const DEFAULT_ENTRY_CAP: usize = 100_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // derivative is only used at interior Newton iterates
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss-Legendre rule for the uniform probability measure on
/// `[-1, 1]` (classical weights halved).
pub fn gauss_legendre_rule(n: usize) -> Result<QuadratureRule1D> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature needs n >= 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule1D { nodes, weights })
}

/// `psi_j(p) = sqrt(2j+1) P_j(p)`, orthonormal under the uniform measure.
pub fn normalized_legendre(j: usize, p: f64) -> f64 {
    (2.0 * j as f64 + 1.0).sqrt() * legendre_with_derivative(j, p).0
}

/// `psi_0(p), ..., psi_{out.len()-1}(p)` into `out`.
fn legendre_values(p: f64, out: &mut [f64]) {
    let (mut p0, mut p1) = (1.0, p);
    for (j, slot) in out.iter_mut().enumerate() {
        let pj = match j {
            0 => 1.0,
            1 => p,
            _ => {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * p * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        *slot = (2.0 * j as f64 + 1.0).sqrt() * pj;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    TotalDegree,
    HyperbolicCross,
}

impl std::str::FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total_degree" | "total-degree" | "td" => Ok(SpaceKind::TotalDegree),
            "hyperbolic_cross" | "hyperbolic-cross" | "hc" => Ok(SpaceKind::HyperbolicCross),
            _ => Err(Error::Usage(format!("unknown polynomial space '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    pub q: usize,
    pub zeta: usize,
    pub kind: SpaceKind,
    pub indices: Vec<Vec<usize>>,
}

impl IndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Flat column index of a multi-index in the full tensor basis.
    pub fn flat_index(&self, j: &[usize]) -> usize {
        j.iter().fold(0, |acc, &jk| acc * (self.zeta + 1) + jk)
    }

    pub fn column_map(&self) -> Vec<usize> {
        self.indices.iter().map(|j| self.flat_index(j)).collect()
    }
}

fn admits(kind: SpaceKind, zeta: usize, j: &[usize]) -> bool {
    match kind {
        SpaceKind::TotalDegree => j.iter().sum::<usize>() <= zeta,
        SpaceKind::HyperbolicCross => {
            let mut prod = 1usize;
            for &jk in j {
                prod = prod.saturating_mul(jk + 1);
            }
            prod <= zeta + 1
        }
    }
}

pub fn index_set(q: usize, zeta: usize, kind: SpaceKind) -> Result<IndexSet> {
    if q == 0 {
        return Err(Error::InvalidArgument("index set needs q >= 1".into()));
    }
    let base = zeta + 1;
    let total = base
        .checked_pow(q as u32)
        .ok_or_else(|| Error::InvalidArgument("tensor basis too large".into()))?;
    let mut indices = Vec::new();
    let mut j = vec![0usize; q];
    // odometer over the full tensor basis in flat-index order
    for _ in 0..total {
        if admits(kind, zeta, &j) {
            indices.push(j.clone());
        }
        for k in (0..q).rev() {
            j[k] += 1;
            if j[k] < base {
                break;
            }
            j[k] = 0;
        }
    }
    Ok(IndexSet { q, zeta, kind, indices })
}

/// Serializable description of a design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub q: usize,
    pub zeta: usize,
    pub space: SpaceKind,
    pub per_dim_nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<Vec<(f64, f64)>>,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug)]
pub struct StructuredDesign {
    iset: IndexSet,
    quadrature: Vec<QuadratureRule1D>,
    factors: Vec<DMatrix<f64>>,
    column_map: Vec<usize>,
    ranges: Option<Vec<(f64, f64)>>,
    entry_cap: usize,
    assembled: OnceLock<DenseMatrix>,
}

pub fn build_design(per_dim_nodes: &[usize], iset: IndexSet) -> Result<StructuredDesign> {
    StructuredDesign::new(per_dim_nodes, iset, None)
}

impl StructuredDesign {
    /// `ranges[k] = (lo, hi)` maps reference nodes affinely onto `[lo, hi]`
    /// for data evaluation. Weights are unchanged.
    pub fn new(per_dim_nodes: &[usize], iset: IndexSet, ranges: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if per_dim_nodes.len() != iset.q {
            return Err(Error::DimensionMismatch(format!(
                "{} node counts for q = {}",
                per_dim_nodes.len(),
                iset.q
            )));
        }
        if iset.is_empty() {
            return Err(Error::InvalidArgument("index set is empty".into()));
        }
        if iset.indices.iter().any(|j| j.len() != iset.q || j.iter().any(|&jk| jk > iset.zeta)) {
            return Err(Error::InvalidArgument(format!(
                "multi-indices must have q = {} entries, each <= zeta = {}",
                iset.q, iset.zeta
            )));
        }
        if !iset.column_map().windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "index set columns must be distinct and in ascending Kronecker order".into(),
            ));
        }
        if let Some(r) = &ranges {
            if r.len() != iset.q || r.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
                return Err(Error::InvalidArgument("ranges need q finite intervals with lo < hi".into()));
            }
        }
        let quadrature = per_dim_nodes
            .iter()
            .map(|&n| gauss_legendre_rule(n))
            .collect::<Result<Vec<_>>>()?;
        let cols = iset.zeta + 1;
        let factors = quadrature
            .iter()
            .map(|rule| {
                let mut f = DMatrix::zeros(rule.len(), cols);
                let mut vals = vec![0.0; cols];
                for (n, (&p, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                    legendre_values(p, &mut vals);
                    for (j, v) in vals.iter().enumerate() {
                        f[(n, j)] = w.sqrt() * v;
                    }
                }
                f
            })
            .collect();
        let column_map = iset.column_map();
        Ok(Self {
            iset,
            quadrature,
            factors,
            column_map,
            ranges,
            entry_cap: DEFAULT_ENTRY_CAP,
            assembled: OnceLock::new(),
        })
    }

    pub fn with_entry_cap(mut self, cap: usize) -> Self {
        self.entry_cap = cap;
        self
    }

    pub fn q(&self) -> usize {
        self.iset.q
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.iset
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn quadrature(&self) -> &[QuadratureRule1D] {
        &self.quadrature
    }

    pub fn column_map(&self) -> &[usize] {
        &self.column_map
    }

    pub fn per_dim_nodes(&self) -> Vec<usize> {
        self.quadrature.iter().map(QuadratureRule1D::len).collect()
    }

    /// Number of rows `N = prod N_k`.
    pub fn n(&self) -> usize {
        self.quadrature.iter().map(QuadratureRule1D::len).product()
    }

    /// Number of columns `d`.
    pub fn d(&self) -> usize {
        self.column_map.len()
    }

    pub fn meta(&self) -> DesignMeta {
        DesignMeta {
            q: self.iset.q,
            zeta: self.iset.zeta,
            space: self.iset.kind,
            per_dim_nodes: self.per_dim_nodes(),
            ranges: self.ranges.clone(),
            n: self.n(),
            d: self.d(),
        }
    }

    /// Per-dimension row indices of flat row `r`.
    pub fn row_multi_index(&self, mut r: usize) -> Vec<usize> {
        let mut out = vec![0; self.q()];
        for k in (0..self.q()).rev() {
            let nk = self.quadrature[k].len();
            out[k] = r % nk;
            r /= nk;
        }
        out
    }

    fn flat_row(&self, rk: &[usize]) -> usize {
        rk.iter()
            .zip(&self.quadrature)
            .fold(0, |acc, (&r, rule)| acc * rule.len() + r)
    }

    /// Grid point of row `r`, mapped onto the design ranges when set.
    pub fn point(&self, r: usize) -> Vec<f64> {
        self.row_multi_index(r)
            .iter()
            .enumerate()
            .map(|(k, &nk)| {
                let p = self.quadrature[k].nodes[nk];
                match &self.ranges {
                    Some(rg) => rg[k].0 + (p + 1.0) * 0.5 * (rg[k].1 - rg[k].0),
                    None => p,
                }
            })
            .collect()
    }

    /// Product quadrature weight of row `r`.
    pub fn weight(&self, r: usize) -> f64 {
        self.row_multi_index(r)
            .iter()
            .enumerate()
            .map(|(k, &nk)| self.quadrature[k].weights[nk])
            .product()
    }

    fn check_cap(&self) -> Result<()> {
        let entries = self.n().saturating_mul(self.d());
        if entries > self.entry_cap {
            return Err(Error::MemoryCap {
                entries,
                cap: self.entry_cap,
            });
        }
        Ok(())
    }

    /// The `N x d` matrix, built on first use.
    pub fn assembled(&self) -> Result<&DenseMatrix> {
        if let Some(a) = self.assembled.get() {
            return Ok(a);
        }
        self.check_cap()?;
        let (n, d) = (self.n(), self.d());
        let mut m = DMatrix::zeros(n, d);
        for r in 0..n {
            let rk = self.row_multi_index(r);
            for (c, j) in self.iset.indices.iter().enumerate() {
                m[(r, c)] = rk
                    .iter()
                    .zip(j)
                    .zip(&self.factors)
                    .map(|((&nk, &jk), f)| f[(nk, jk)])
                    .product();
            }
        }
        let a = DenseMatrix::new(m)?;
        Ok(self.assembled.get_or_init(|| a))
    }

    /// `b(n) = sqrt(w_n) f(p_n)` over the grid in row order.
    pub fn data_vector<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Result<DVector<f64>> {
        let n = self.n();
        let mut b = DVector::zeros(n);
        for r in 0..n {
            let v = f(&self.point(r));
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("f at grid row {r}")));
            }
            b[r] = self.weight(r).sqrt() * v;
        }
        Ok(b)
    }
}

pub fn assemble_data_vector<F: FnMut(&[f64]) -> f64>(design: &StructuredDesign, f: F) -> Result<DVector<f64>> {
    design.data_vector(f)
}

/// Structured leverage sampler. Holds per-dimension orthonormal factors and
/// alias tables for every factor column, so each draw costs `O(q)`
/// independent of `N`.
pub struct KronLeverageSampler<'a> {
    design: &'a StructuredDesign,
    q_factors: Vec<DMatrix<f64>>,
    tables: Vec<Vec<WeightedAliasIndex<f64>>>,
}

impl<'a> KronLeverageSampler<'a> {
    pub fn new(design: &'a StructuredDesign) -> Result<Self> {
        let mut q_factors = Vec::with_capacity(design.q());
        let mut tables = Vec::with_capacity(design.q());
        for (k, f) in design.factors.iter().enumerate() {
            if f.nrows() < f.ncols() {
                return Err(Error::InvalidArgument(format!(
                    "factor {k} has {} rows for {} columns; it is rank deficient",
                    f.nrows(),
                    f.ncols()
                )));
            }
            let qr = f.clone().qr();
            let r = qr.r();
            let smax = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * smax) {
                return Err(Error::InvalidArgument(format!("factor {k} is rank deficient")));
            }
            let qk = qr.q();
            let cols = (0..qk.ncols())
                .map(|j| {
                    let w: Vec<f64> = qk.column(j).iter().map(|v| v * v).collect();
                    WeightedAliasIndex::new(w).map_err(|e| Error::Sampling(e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            q_factors.push(qk);
            tables.push(cols);
        }
        Ok(Self {
            design,
            q_factors,
            tables,
        })
    }

    /// Leverage score of flat row `r` from the factor bases.
    pub fn leverage(&self, r: usize) -> f64 {
        let rk = self.design.row_multi_index(r);
        self.design
            .iset
            .indices
            .iter()
            .map(|j| {
                rk.iter()
                    .zip(j)
                    .zip(&self.q_factors)
                    .map(|((&n, &c), qf)| qf[(n, c)] * qf[(n, c)])
                    .product::<f64>()
            })
            .sum()
    }

    /// `m` i.i.d. leverage-distributed rows as a weighted row sketch.
    pub fn sample(&self, m: usize, seed: u64) -> Result<SketchOperator> {
        if m == 0 {
            return Err(Error::InvalidArgument("m must be >= 1".into()));
        }
        let d = self.design.d();
        let mut rng = stream(seed);
        let mut rk = vec![0usize; self.design.q()];
        let mut indices = Vec::with_capacity(m);
        for _ in 0..m {
            let j = &self.design.iset.indices[rand::Rng::random_range(&mut rng, 0..d)];
            for k in 0..rk.len() {
                rk[k] = self.tables[k][j[k]].sample(&mut rng);
            }
            indices.push(self.design.flat_row(&rk));
        }
        let mf = m as f64;
        let weights = indices
            .iter()
            .map(|&i| 1.0 / (mf * self.leverage(i) / d as f64).sqrt())
            .collect();
        SketchOperator::row_sample(SketchSpec::new(SketchKind::Leverage, m, seed), self.design.n(), indices, weights)
    }
}

pub fn kron_leverage_sample(design: &StructuredDesign, m: usize, seed: u64) -> Result<SketchOperator> {
    KronLeverageSampler::new(design)?.sample(m, seed)
}

/// Leverage distribution `l_i / d` computed from the assembled matrix.
pub fn exact_row_distribution(design: &StructuredDesign) -> Result<Vec<f64>> {
    let basis = orthonormal_basis(design.assembled()?)?;
    let d = basis.rank as f64;
    Ok((0..design.n()).map(|i| basis.q.row(i).norm_squared() / d).collect())
}
