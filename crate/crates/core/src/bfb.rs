//! Bi-fidelity boosting.
//!
//! Given `L` candidate sketches, every candidate is scored on cheap
//! low-fidelity data `b~` by the full residual `|A x_l - b~|`, and the winner
//! alone is applied to the expensive high-fidelity vector `b`. With a row
//! sketch this reads only the sampled entries of `b`.
//!
//! The diagnostics describe how well low-fidelity selection transfers:
//!
//! * `nu`: absolute cosine between `P_perp b` and `P_perp b~`.
//! * `phi`: absolute cosine between `b` and `b~`.
//! * `kappa`, `kappa_tilde`: fraction of `|b|` (resp. `|b~|`) in `range(A)`.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, EntryOracle, LsContext, SketchRhs};
use crate::sketch::{SketchOperator, SketchSpec};

/// Below this the two normalized complement projections are treated as equal.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Default embedding accuracy used when evaluating gap bounds.
pub const DEFAULT_EPS: f64 = 0.01;

type EntryFn = Box<dyn FnMut(usize) -> f64 + Send>;

/// High-fidelity entries on demand. Repeated requests for the same index
/// are served from a cache and counted once.
pub struct HighFidelityOracle {
    n: usize,
    source: EntryFn,
    cache: HashMap<usize, f64>,
    full: Option<DVector<f64>>,
}

impl HighFidelityOracle {
    /// Oracle backed by a callback, with no full vector available.
    pub fn from_fn<F: FnMut(usize) -> f64 + Send + 'static>(n: usize, f: F) -> Self {
        Self {
            n,
            source: Box::new(f),
            cache: HashMap::new(),
            full: None,
        }
    }

    /// Oracle answering from a known vector, which stays attached for
    /// validation.
    pub fn from_vector(b: DVector<f64>) -> Self {
        let lookup = b.clone();
        Self {
            n: b.len(),
            source: Box::new(move |i| lookup[i]),
            cache: HashMap::new(),
            full: Some(b),
        }
    }

    /// Number of distinct entries requested so far.
    pub fn queries(&self) -> usize {
        self.cache.len()
    }

    pub fn queried_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cache.keys().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn has_full_vector(&self) -> bool {
        self.full.is_some()
    }
}

impl EntryOracle for HighFidelityOracle {
    fn len(&self) -> usize {
        self.n
    }

    fn entry(&mut self, i: usize) -> f64 {
        assert!(i < self.n, "oracle index {i} out of range for length {}", self.n);
        if let Some(&v) = self.cache.get(&i) {
            return v;
        }
        let v = (self.source)(i);
        self.cache.insert(i, v);
        v
    }

    fn full_vector(&self) -> Option<&DVector<f64>> {
        self.full.as_ref()
    }
}

impl std::fmt::Debug for HighFidelityOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HighFidelityOracle")
            .field("n", &self.n)
            .field("queries", &self.queries())
            .field("full", &self.full.is_some())
            .finish()
    }
}

#[derive(Debug)]
pub struct FidelityPair {
    pub low: DVector<f64>,
    pub high: HighFidelityOracle,
}

impl FidelityPair {
    pub fn new(low: DVector<f64>, high: HighFidelityOracle) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch(format!(
                "low-fidelity vector has length {}, oracle has {}",
                low.len(),
                high.len()
            )));
        }
        Ok(Self { low, high })
    }

    /// Pair with both vectors fully known.
    pub fn from_vectors(low: DVector<f64>, high: DVector<f64>) -> Result<Self> {
        Self::new(low, HighFidelityOracle::from_vector(high))
    }
}

#[derive(Clone, Debug)]
pub struct CorrelationMetrics {
    pub nu: f64,
    pub phi: f64,
    pub kappa: f64,
    pub kappa_tilde: f64,
    /// Signed cosine between the complement projections.
    pub signed_nu: f64,
    /// Unit vector in `range(A)^perp`, `None` when `nu` is 1 to working
    /// precision.
    pub h: Option<DVector<f64>>,
}

impl CorrelationMetrics {
    pub fn degenerate(&self) -> bool {
        self.h.is_none()
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn correlation_metrics(a: &DenseMatrix, b: &DVector<f64>, bt: &DVector<f64>) -> Result<CorrelationMetrics> {
    correlation_metrics_with(&LsContext::new(a)?, b, bt)
}

pub fn correlation_metrics_with(ctx: &LsContext<'_>, b: &DVector<f64>, bt: &DVector<f64>) -> Result<CorrelationMetrics> {
    let rb = ctx.full_residual_checked(b)?;
    let rbt = ctx.full_residual_checked(bt)?;
    let pb = ctx.project_complement(b)? / rb;
    let pbt = ctx.project_complement(bt)? / rbt;
    let signed_nu = pb.dot(&pbt).clamp(-1.0, 1.0);
    let (nb, nbt) = (b.norm(), bt.norm());
    let phi = clamp_unit(b.dot(bt).abs() / (nb * nbt));
    let kappa = clamp_unit(ctx.project_range(b)?.norm() / nb);
    let kappa_tilde = clamp_unit(ctx.project_range(bt)?.norm() / nbt);
    // anti-correlated projections are compared after flipping one of them
    let sign = if signed_nu < 0.0 { -1.0 } else { 1.0 };
    let diff = pb - pbt * sign;
    let dn = diff.norm();
    let h = (dn > DEGENERATE_TOL).then(|| diff / dn);
    Ok(CorrelationMetrics {
        nu: signed_nu.abs(),
        phi,
        kappa,
        kappa_tilde,
        signed_nu,
        h,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostResult {
    pub selected: usize,
    pub selected_spec: SketchSpec,
    pub x_bfb: Vec<f64>,
    pub low_fid_residuals: Vec<f64>,
    pub high_fid_queries: usize,
    /// `|A x_bfb - b|`, when the full high-fidelity vector is attached.
    pub solution_residual: Option<f64>,
    pub sketched_rank_ok: bool,
}

impl BoostResult {
    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_bfb)
    }
}

/// Index of the smallest value, earliest on ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn check_sketches(ctx: &LsContext<'_>, sketches: &[SketchOperator]) -> Result<()> {
    if sketches.is_empty() {
        return Err(Error::InvalidArgument("boosting needs at least one sketch".into()));
    }
    let n = ctx.matrix().rows();
    if let Some(s) = sketches.iter().find(|s| s.n() != n) {
        return Err(Error::DimensionMismatch(format!(
            "sketch acts on {} rows, matrix has {n}",
            s.n()
        )));
    }
    Ok(())
}

/// `|A x_l - b|` for each sketch, where `x_l` solves the `b`-sketched problem.
pub fn sketch_residuals(ctx: &LsContext<'_>, b: &DVector<f64>, sketches: &[SketchOperator]) -> Result<Vec<f64>> {
    check_sketches(ctx, sketches)?;
    sketches
        .par_iter()
        .map(|s| {
            ctx.solve_sketched(SketchRhs::Full(b), s)
                .map(|sol| sol.residual_norm.expect("full rhs supplied"))
        })
        .collect()
}

pub fn run_bfb(a: &DenseMatrix, pair: &mut FidelityPair, sketches: &[SketchOperator]) -> Result<BoostResult> {
    run_bfb_with(&LsContext::new(a)?, pair, sketches)
}

pub fn run_bfb_with(ctx: &LsContext<'_>, pair: &mut FidelityPair, sketches: &[SketchOperator]) -> Result<BoostResult> {
    let low_fid_residuals = sketch_residuals(ctx, &pair.low, sketches)?;
    let selected = argmin(&low_fid_residuals);
    let s = &sketches[selected];
    if !s.is_row_sample() && !pair.high.has_full_vector() {
        return Err(Error::FullVectorRequired(
            "the selected sketch is dense and the oracle has no full vector".into(),
        ));
    }
    let before = pair.high.queries();
    let sol = ctx.solve_sketched(SketchRhs::Oracle(&mut pair.high), s)?;
    let high_fid_queries = if s.is_row_sample() {
        pair.high.queries() - before
    } else {
        s.n()
    };
    Ok(BoostResult {
        selected,
        selected_spec: *s.spec(),
        x_bfb: sol.x.as_slice().to_vec(),
        low_fid_residuals,
        high_fid_queries,
        solution_residual: sol.residual_norm,
        sketched_rank_ok: sol.sketched_rank_ok,
    })
}

/// Sketch that would have been chosen with direct access to `b`.
pub fn oracle_index(a: &DenseMatrix, b: &DVector<f64>, sketches: &[SketchOperator]) -> Result<usize> {
    oracle_index_with(&LsContext::new(a)?, b, sketches)
}

pub fn oracle_index_with(ctx: &LsContext<'_>, b: &DVector<f64>, sketches: &[SketchOperator]) -> Result<usize> {
    Ok(argmin(&sketch_residuals(ctx, b, sketches)?))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// `2 sqrt(6 (1 - nu) eps)`.
pub fn optimality_gap_bound(nu: f64, eps: f64) -> Result<f64> {
    check_unit("nu", nu)?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(2.0 * (6.0 * (1.0 - nu) * eps).sqrt())
}

/// `24 L (1 - nu) + (delta/2) (1 + 4 sqrt(6 (1 - nu) eps))`.
pub fn tau(eps: f64, delta: f64, nu: f64, l: usize) -> Result<f64> {
    check_unit("nu", nu)?;
    if !(eps > 0.0 && eps < 0.5) || !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument("eps and delta must lie in (0, 1/2)".into()));
    }
    if l == 0 {
        return Err(Error::InvalidArgument("L must be >= 1".into()));
    }
    let g = 1.0 - nu;
    Ok(24.0 * l as f64 * g + 0.5 * delta * (1.0 + 4.0 * (6.0 * g * eps).sqrt()))
}

fn nu_lower_bound(phi: f64, k: f64) -> f64 {
    phi - k * 1f64.min((2.0 * (1.0 - phi + k)).sqrt())
}

/// Lower bounds on `nu` from `(phi, kappa)` and from `(phi, kappa_tilde)`.
pub fn prop_cor_bounds(phi: f64, kappa: f64, kappa_tilde: f64) -> Result<(f64, f64)> {
    check_unit("phi", phi)?;
    check_unit("kappa", kappa)?;
    check_unit("kappa_tilde", kappa_tilde)?;
    if phi < kappa {
        return Err(Error::InvalidArgument(format!(
            "bounds need phi >= kappa, got phi = {phi}, kappa = {kappa}"
        )));
    }
    let k_low = phi * kappa_tilde + (1.0 - phi * phi).sqrt();
    Ok((nu_lower_bound(phi, kappa), nu_lower_bound(phi, k_low)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianCorrBounds {
    pub general: f64,
    /// Present only when `phi >= kappa`.
    pub phi_kappa_form: Option<f64>,
}

/// Large-`m` lower bounds on `corr(mu^2(b, S), mu^2(b~, S))` for Gaussian
/// sketches.
pub fn gaussian_corr_bounds(a: &DenseMatrix, b: &DVector<f64>, bt: &DVector<f64>) -> Result<GaussianCorrBounds> {
    gaussian_corr_bounds_with(&LsContext::new(a)?, b, bt)
}

pub fn gaussian_corr_bounds_with(ctx: &LsContext<'_>, b: &DVector<f64>, bt: &DVector<f64>) -> Result<GaussianCorrBounds> {
    ctx.full_residual_checked(b)?;
    ctx.full_residual_checked(bt)?;
    let bp = b / b.norm();
    let btp = bt / bt.norm();
    let pb = ctx.project_complement(&bp)?;
    let pbt = ctx.project_complement(&btp)?;
    let cross = (&pb + &pbt).norm().min((&pb - &pbt).norm());
    let general = (pb.norm_squared() - 6f64.sqrt() * cross) / pbt.norm_squared();
    let phi = clamp_unit(bp.dot(&btp).abs());
    let kappa = clamp_unit(ctx.project_range(&bp)?.norm());
    let phi_kappa_form = (phi >= kappa).then(|| gaussian_phi_kappa_bound(phi, kappa));
    Ok(GaussianCorrBounds { general, phi_kappa_form })
}

/// `(1 - kappa^2) - sqrt(12 (1 - phi)) / (phi - kappa)^2`; `-inf` when
/// `phi == kappa < 1`.
pub fn gaussian_phi_kappa_bound(phi: f64, kappa: f64) -> f64 {
    let gap = phi - kappa;
    let num = (12.0 * (1.0 - phi)).max(0.0).sqrt();
    if gap == 0.0 {
        return if num == 0.0 { 1.0 - kappa * kappa } else { f64::NEG_INFINITY };
    }
    (1.0 - kappa * kappa) - num / (gap * gap)
}

/// `|Ax - b| / |b|`.
pub fn relative_error(a: &DenseMatrix, x: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if x.len() != a.cols() || b.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, x has {} entries, b has {}",
            a.rows(),
            a.cols(),
            x.len(),
            b.len()
        )));
    }
    let nb = b.norm();
    if nb == 0.0 {
        return Err(Error::Degenerate("relative error of a zero vector".into()));
    }
    Ok((a.as_matrix() * x - b).norm() / nb)
}

/// Per-instance comparison of the boosted and oracle sketches.
#[derive(Clone, Debug, PartialEq)]
pub struct GapCheck {
    pub selected: usize,
    pub oracle: usize,
    pub mu_selected: f64,
    pub mu_oracle: f64,
    pub nu: f64,
    pub bound: f64,
}

impl GapCheck {
    pub fn gap(&self) -> f64 {
        self.mu_selected - self.mu_oracle
    }

    pub fn violated(&self) -> bool {
        self.gap() > self.bound
    }
}

/// Boosted vs oracle optimality coefficients on `b` with the gap bound at
/// `eps`. A degenerate pair uses bound 0.
pub fn gap_check(
    ctx: &LsContext<'_>,
    b: &DVector<f64>,
    bt: &DVector<f64>,
    sketches: &[SketchOperator],
    eps: f64,
) -> Result<GapCheck> {
    let metrics = correlation_metrics_with(ctx, b, bt)?;
    check_sketches(ctx, sketches)?;
    let mus: Vec<(f64, f64)> = sketches
        .par_iter()
        .map(|s| ctx.optimality_coefficients(&[b, bt], s).map(|v| (v[0], v[1])))
        .collect::<Result<_>>()?;
    // argmin of mu matches argmin of the sketched residual for a fixed rhs
    let low: Vec<f64> = mus.iter().map(|m| m.1).collect();
    let high: Vec<f64> = mus.iter().map(|m| m.0).collect();
    let (selected, oracle) = (argmin(&low), argmin(&high));
    let bound = if metrics.degenerate() {
        0.0
    } else {
        optimality_gap_bound(metrics.nu, eps)?
    };
    Ok(GapCheck {
        selected,
        oracle,
        mu_selected: high[selected],
        mu_oracle: high[oracle],
        nu: metrics.nu,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_full_ls;
    use crate::rng::stream;
    use crate::sketch::{pair_condition_check, SketchBuilder, SketchKind};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::distr::Distribution;
    use rand_distr::StandardNormal;

    fn randn_mat(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = stream(seed);
        DenseMatrix::new(DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))).unwrap()
    }

    fn randn_vec(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = stream(seed);
        DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn oracle_counts_distinct_queries() {
        let mut o = HighFidelityOracle::from_fn(5, |i| i as f64 * 2.0);
        assert_eq!(o.entry(3), 6.0);
        assert_eq!(o.entry(3), 6.0);
        assert_eq!(o.entry(1), 2.0);
        assert_eq!(o.queries(), 2);
        assert_eq!(o.queried_indices(), vec![1, 3]);
        assert!(o.full_vector().is_none());
        let v = randn_vec(4, 1);
        let mut o = HighFidelityOracle::from_vector(v.clone());
        for i in 0..4 {
            assert_eq!(o.entry(i), v[i]);
        }
    }

    #[test]
    fn metrics_identical_and_negated() {
        let a = randn_mat(30, 4, 2);
        let b = randn_vec(30, 3);
        let m = correlation_metrics(&a, &b, &b).unwrap();
        assert!((m.phi - 1.0).abs() < 1e-12 && (m.nu - 1.0).abs() < 1e-12);
        assert!((m.kappa - m.kappa_tilde).abs() < 1e-14);
        assert!(m.degenerate());
        let m = correlation_metrics(&a, &b, &(-&b)).unwrap();
        assert!((m.phi - 1.0).abs() < 1e-12 && (m.nu - 1.0).abs() < 1e-12);
        assert!(m.degenerate());
        assert!(m.signed_nu < 0.0);
    }

    #[test]
    fn metrics_h_is_unit_and_orthogonal() {
        let a = randn_mat(40, 5, 4);
        let ctx = LsContext::new(&a).unwrap();
        let b = randn_vec(40, 5);
        let bt = &b * 0.8 + randn_vec(40, 6) * 0.5;
        let m = correlation_metrics_with(&ctx, &b, &bt).unwrap();
        let h = m.h.clone().unwrap();
        assert!((h.norm() - 1.0).abs() < 1e-10);
        assert!(ctx.q().tr_mul(&h).norm() < 1e-8);
        // recompute nu by hand
        let pb = ctx.project_complement(&b).unwrap();
        let pbt = ctx.project_complement(&bt).unwrap();
        assert!((m.nu - pb.dot(&pbt).abs() / (pb.norm() * pbt.norm())).abs() < 1e-12);
    }

    #[test]
    fn metrics_reject_range_vectors() {
        let a = randn_mat(20, 3, 7);
        let in_range = a.as_matrix() * DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let b = randn_vec(20, 8);
        assert!(matches!(correlation_metrics(&a, &in_range, &b), Err(Error::Degenerate(_))));
        assert!(matches!(correlation_metrics(&a, &b, &in_range), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gap_bound_values() {
        assert_eq!(optimality_gap_bound(1.0, 0.3).unwrap(), 0.0);
        assert!((optimality_gap_bound(0.0, 1.0 / 6.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((optimality_gap_bound(0.5, 0.01).unwrap() - 0.346_410_161_513_775_4).abs() < 1e-12);
        assert!(optimality_gap_bound(1.1, 0.1).is_err());
        assert!(optimality_gap_bound(0.5, 0.0).is_err());
    }

    #[test]
    fn tau_values() {
        assert!((tau(0.1, 0.3, 1.0, 7).unwrap() - 0.15).abs() < 1e-15);
        let want = 24.0 + 0.2 * (1.0 + 4.0 * 0.6f64.sqrt());
        assert!((tau(0.1, 0.4, 0.0, 1).unwrap() - want).abs() < 1e-12);
        assert!((want - 24.8197).abs() < 1e-4);
        assert!(tau(0.1, 0.1, 0.99, 4).unwrap() < tau(0.1, 0.1, 0.99, 400).unwrap());
        assert!(tau(0.5, 0.1, 0.5, 1).is_err());
        assert!(tau(0.1, 0.1, 0.5, 0).is_err());
    }

    #[test]
    fn prop_bounds_values() {
        let (b1, _) = prop_cor_bounds(1.0, 0.0, 0.3).unwrap();
        assert_eq!(b1, 1.0);
        let (b1, _) = prop_cor_bounds(0.95, 0.2, 0.2).unwrap();
        assert!((b1 - (0.95 - 0.2 / 2f64.sqrt())).abs() < 1e-14);
        assert!((b1 - 0.8086).abs() < 1e-4);
        assert!(prop_cor_bounds(0.2, 0.3, 0.1).is_err());
    }

    #[test]
    fn gaussian_bound_values() {
        let v = gaussian_phi_kappa_bound(0.95, 0.2);
        assert!((v - (0.96 - 0.6f64.sqrt() / 0.5625)).abs() < 1e-12);
        assert!((v + 0.4171).abs() < 1e-4);
        assert_eq!(gaussian_phi_kappa_bound(0.5, 0.5), f64::NEG_INFINITY);
        let a = randn_mat(25, 3, 9);
        let b = randn_vec(25, 10);
        let g = gaussian_corr_bounds(&a, &b, &b).unwrap();
        assert!((g.general - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_cases() {
        let a = randn_mat(15, 3, 11);
        let b = randn_vec(15, 12);
        assert!((relative_error(&a, &DVector::zeros(3), &b).unwrap() - 1.0).abs() < 1e-15);
        let inr = a.as_matrix() * DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let x = solve_full_ls(&a, &inr).unwrap().x;
        assert!(relative_error(&a, &x, &inr).unwrap() < 1e-12);
        assert!(relative_error(&a, &x, &DVector::zeros(15)).is_err());
    }

    fn leverage_family(a: &DenseMatrix, m: usize, l: usize, seed: u64) -> Vec<SketchOperator> {
        SketchBuilder::new(a).family(SketchKind::Leverage, m, seed, l).unwrap()
    }

    #[test]
    fn single_sketch_boost_is_plain_sketch() {
        let a = randn_mat(60, 4, 13);
        let ctx = LsContext::new(&a).unwrap();
        let b = randn_vec(60, 14);
        let sketches = leverage_family(&a, 12, 1, 15);
        let mut pair = FidelityPair::from_vectors(randn_vec(60, 16), b.clone()).unwrap();
        let res = run_bfb_with(&ctx, &mut pair, &sketches).unwrap();
        assert_eq!(res.selected, 0);
        let direct = ctx.solve_sketched(SketchRhs::Full(&b), &sketches[0]).unwrap();
        assert!((res.x() - direct.x).abs().max() < 1e-12);
        assert_eq!(res.high_fid_queries, sketches[0].distinct_rows().unwrap().len());
        assert!(res.high_fid_queries <= 12);
    }

    #[test]
    fn equal_fidelities_pick_the_oracle() {
        let a = randn_mat(80, 5, 17);
        let b = randn_vec(80, 18);
        let sketches = leverage_family(&a, 15, 8, 19);
        let mut pair = FidelityPair::from_vectors(b.clone(), b.clone()).unwrap();
        let res = run_bfb(&a, &mut pair, &sketches).unwrap();
        assert_eq!(res.selected, oracle_index(&a, &b, &sketches).unwrap());
    }

    #[test]
    fn identity_sketch_wins_oracle() {
        let a = randn_mat(30, 3, 20);
        let b = randn_vec(30, 21);
        let mut sketches = leverage_family(&a, 6, 4, 22);
        let id = SketchOperator::row_sample(
            SketchSpec::new(SketchKind::Uniform, 30, 0),
            30,
            (0..30).collect(),
            vec![1.0; 30],
        )
        .unwrap();
        sketches.insert(2, id);
        assert_eq!(oracle_index(&a, &b, &sketches).unwrap(), 2);
    }

    #[test]
    fn oracle_index_matches_brute_force() {
        let a = randn_mat(50, 4, 23);
        let b = randn_vec(50, 24);
        let sketches = leverage_family(&a, 10, 6, 25);
        let residuals: Vec<f64> = sketches
            .iter()
            .map(|s| {
                let sa = s.to_dense() * a.as_matrix();
                let x = sa.svd(true, true).solve(&(s.to_dense() * &b), 1e-13).unwrap();
                (a.as_matrix() * x - &b).norm()
            })
            .collect();
        let best = (0..6).fold(0, |bi, i| if residuals[i] < residuals[bi] { i } else { bi });
        assert_eq!(oracle_index(&a, &b, &sketches).unwrap(), best);
    }

    #[test]
    fn dense_sketch_without_full_vector_fails() {
        let a = randn_mat(20, 2, 26);
        let sketches = SketchBuilder::new(&a).family(SketchKind::Gaussian, 8, 1, 2).unwrap();
        let b = randn_vec(20, 27);
        let oracle = HighFidelityOracle::from_fn(20, move |i| b[i]);
        let mut pair = FidelityPair::new(randn_vec(20, 28), oracle).unwrap();
        assert!(matches!(run_bfb(&a, &mut pair, &sketches), Err(Error::FullVectorRequired(_))));
    }

    #[test]
    fn row_sketch_reads_only_sampled_entries() {
        let a = randn_mat(40, 3, 29);
        let b = randn_vec(40, 30);
        let sketches = leverage_family(&a, 9, 5, 31);
        let bb = b.clone();
        let oracle = HighFidelityOracle::from_fn(40, move |i| bb[i]);
        let mut pair = FidelityPair::new(randn_vec(40, 32), oracle).unwrap();
        let res = run_bfb(&a, &mut pair, &sketches).unwrap();
        assert_eq!(pair.high.queried_indices(), sketches[res.selected].distinct_rows().unwrap());
        assert!(res.solution_residual.is_none());
        let json = serde_json::to_string(&res).unwrap();
        assert!(json.contains("\"selected_spec\""));
    }

    #[test]
    fn gap_bound_holds_when_pair_conditions_hold() {
        // With both sketch conditions met at level eps the bound is deterministic.
        let a = randn_mat(200, 4, 33);
        let ctx = LsContext::new(&a).unwrap();
        let basis = ctx.basis();
        let b = randn_vec(200, 34);
        let bt = &b + randn_vec(200, 35) * 0.3;
        let metrics = correlation_metrics_with(&ctx, &b, &bt).unwrap();
        let h = metrics.h.clone().unwrap();
        let eps = 0.2;
        let mut checked = 0;
        for seed in 0..40u64 {
            let sketches = SketchBuilder::new(&a).family(SketchKind::Gaussian, 120, seed, 5).unwrap();
            let ok = sketches
                .iter()
                .all(|s| pair_condition_check(s, &basis, &h, eps).unwrap().holds());
            if !ok {
                continue;
            }
            checked += 1;
            let g = gap_check(&ctx, &b, &bt, &sketches, eps).unwrap();
            assert!(!g.violated(), "gap {} > bound {}", g.gap(), g.bound);
        }
        assert!(checked > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn selection_is_scale_invariant(seed in 0u64..1000, c in 0.01f64..100.0) {
            let a = randn_mat(40, 3, seed);
            let bt = randn_vec(40, seed + 1);
            let b = randn_vec(40, seed + 2);
            let sketches = leverage_family(&a, 8, 6, seed + 3);
            let ctx = LsContext::new(&a).unwrap();
            let mut p1 = FidelityPair::from_vectors(bt.clone(), b.clone()).unwrap();
            let mut p2 = FidelityPair::from_vectors(&bt * c, b.clone()).unwrap();
            let r1 = run_bfb_with(&ctx, &mut p1, &sketches).unwrap();
            let r2 = run_bfb_with(&ctx, &mut p2, &sketches).unwrap();
            prop_assert_eq!(r1.selected, r2.selected);
        }

        #[test]
        fn scaled_low_fidelity_matches_oracle(seed in 0u64..1000, c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
            let a = randn_mat(40, 3, seed);
            let b = randn_vec(40, seed + 7);
            let sketches = leverage_family(&a, 8, 6, seed + 8);
            let ctx = LsContext::new(&a).unwrap();
            let mut pair = FidelityPair::from_vectors(&b * c, b.clone()).unwrap();
            let res = run_bfb_with(&ctx, &mut pair, &sketches).unwrap();
            prop_assert_eq!(res.selected, oracle_index_with(&ctx, &b, &sketches).unwrap());
        }

        #[test]
        fn queries_never_exceed_m(seed in 0u64..1000, m in 4usize..20, kind in prop_oneof![
            Just(SketchKind::Uniform), Just(SketchKind::Leverage), Just(SketchKind::LeveragedVolume), Just(SketchKind::Cpqr)
        ]) {
            let a = randn_mat(30, 3, seed);
            let sketches = SketchBuilder::new(&a).family(kind, m, seed, 3).unwrap();
            let mut pair = FidelityPair::from_vectors(randn_vec(30, seed + 1), randn_vec(30, seed + 2)).unwrap();
            let res = run_bfb(&a, &mut pair, &sketches).unwrap();
            prop_assert!(res.high_fid_queries <= m);
            prop_assert_eq!(res.high_fid_queries, sketches[res.selected].distinct_rows().unwrap().len());
        }

        #[test]
        fn bounds_are_monotone(nu1 in 0.0f64..1.0, nu2 in 0.0f64..1.0, eps in 0.001f64..0.49, delta in 0.001f64..0.49, l in 1usize..50) {
            let (lo, hi) = if nu1 <= nu2 { (nu1, nu2) } else { (nu2, nu1) };
            prop_assert!(optimality_gap_bound(hi, eps).unwrap() <= optimality_gap_bound(lo, eps).unwrap());
            prop_assert!(optimality_gap_bound(lo, eps).unwrap() <= optimality_gap_bound(lo, eps * 1.01).unwrap());
            prop_assert!(tau(eps, delta, hi, l).unwrap() <= tau(eps, delta, lo, l).unwrap() + 1e-15);
            prop_assert!(tau(eps, delta, lo, l).unwrap() <= tau(eps, delta, lo, l + 1).unwrap());
            prop_assert!(tau(eps, delta, lo, l).unwrap() <= tau(eps * 1.01f64.min(0.499 / eps), delta, lo, l).unwrap() + 1e-15);
        }

        #[test]
        fn nu_exceeds_both_lower_bounds(seed in 0u64..10_000, mix in 0.0f64..1.0) {
            let a = randn_mat(30, 4, seed % 17);
            let b = randn_vec(30, seed);
            let bt = &b * mix + randn_vec(30, seed + 99) * (1.0 - mix);
            let m = correlation_metrics(&a, &b, &bt).unwrap();
            prop_assume!(m.phi >= m.kappa);
            let (b1, b2) = prop_cor_bounds(m.phi, m.kappa, m.kappa_tilde).unwrap();
            prop_assert!(m.nu >= b1 - 1e-10);
            prop_assert!(m.nu >= b2 - 1e-10);
        }
    }
}
