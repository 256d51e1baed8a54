use std::path::PathBuf;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::synthetic::SyntheticBasis;
use super::{pearson, BoxStats};
use crate::bfb::{gap_check, gaussian_corr_bounds_with, relative_error, run_bfb_with, FidelityPair, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LsContext, SketchRhs};
use crate::rng::derive_path;
use crate::sketch::{cpqr_sketch, SketchBuilder, SketchKind, SketchOperator, SketchSpec};

const TAG_DATA: u64 = 1;
const TAG_BOUND: u64 = 2;
const TAG_CORR: u64 = 3;
const TAG_BOOST: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Bound,
    Corr,
    Boost,
}

/// Paths of a user-supplied `(A, b, b~)` triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub a: PathBuf,
    pub b: PathBuf,
    pub bt: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub kappas: Vec<f64>,
    pub phis: Vec<f64>,
    pub sketches: Vec<SketchKind>,
    /// Embedding dimensions; `None` selects the experiment default.
    pub m: Option<Vec<usize>>,
    #[serde(rename = "L")]
    pub l: usize,
    pub reps: usize,
    pub eps: f64,
    pub data: Option<DataFiles>,
    pub out: Option<PathBuf>,
}

fn grid_1_to_9() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            seed: 0,
            n: 1000,
            d: 50,
            kappas: grid_1_to_9(),
            phis: grid_1_to_9(),
            sketches: vec![SketchKind::Gaussian, SketchKind::Leverage],
            m: None,
            l: 10,
            reps: 100,
            eps: DEFAULT_EPS,
            data: None,
            out: None,
        };
        match kind {
            ExperimentKind::Bound => Self { reps: 1, ..base },
            ExperimentKind::Corr => Self {
                kappas: vec![0.2, 0.95],
                phis: vec![0.3, 0.95],
                ..base
            },
            ExperimentKind::Boost => Self {
                n: 500,
                d: 10,
                kappas: vec![0.2],
                phis: vec![0.99],
                sketches: vec![SketchKind::Uniform, SketchKind::Leverage, SketchKind::LeveragedVolume],
                reps: 1000,
                ..base
            },
        }
    }

    /// Parses a JSON config. Fields left out take the defaults of the
    /// experiment named by `kind` (or by `fallback` when `kind` is absent).
    pub fn from_json(text: &str, fallback: Option<ExperimentKind>) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Usage("config must be a JSON object".into()))?;
        let kind = match obj.get("kind") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => fallback.ok_or_else(|| Error::Usage("config has no 'kind'".into()))?,
        };
        let mut merged = serde_json::to_value(Self::defaults(kind))?;
        let target = merged.as_object_mut().expect("config serializes as an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn m_values(&self) -> Vec<usize> {
        match (&self.m, self.kind) {
            (Some(m), _) => m.clone(),
            (None, ExperimentKind::Boost) => vec![(1.2 * self.d as f64).ceil() as usize, 2 * self.d],
            (None, _) => vec![100],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Usage(msg));
        if self.sketches.is_empty() {
            return bad("at least one sketch kind is required".into());
        }
        if self.kappas.is_empty() || self.phis.is_empty() {
            return bad("kappa and phi grids must be nonempty".into());
        }
        if let Some(v) = self.kappas.iter().chain(&self.phis).find(|v| !(0.0..=1.0).contains(*v)) {
            return bad(format!("kappa and phi must lie in [0, 1], got {v}"));
        }
        if self.l == 0 || self.reps == 0 {
            return bad("L and reps must be >= 1".into());
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        let ms = self.m_values();
        if ms.is_empty() || ms.contains(&0) {
            return bad("m must be >= 1".into());
        }
        if self.data.is_none() && (self.d < 2 || self.d + 1 >= self.n) {
            return bad(format!("synthetic data needs 2 <= d < N - 1, got N = {}, d = {}", self.n, self.d));
        }
        if self.data.is_some() && self.kind != ExperimentKind::Boost {
            return bad("data files are only used by the boost experiment".into());
        }
        match self.kind {
            ExperimentKind::Bound | ExperimentKind::Corr if ms.len() != 1 => {
                bad("this experiment takes a single m".into())
            }
            ExperimentKind::Corr if self.reps < 3 => bad("corr needs reps >= 3 sketches".into()),
            _ => Ok(()),
        }
    }
}

fn kind_tag(kind: SketchKind) -> u64 {
    SketchKind::ALL.iter().position(|k| *k == kind).expect("listed kind") as u64
}

fn family(builder: &SketchBuilder<'_>, kind: SketchKind, m: usize, base: u64, l: usize) -> Result<Vec<SketchOperator>> {
    builder.family(kind, m, base, l)
}

/// One cell of the bound experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRecord {
    pub sketch: SketchKind,
    pub kappa: f64,
    pub phi: f64,
    pub rep: usize,
    pub nu: f64,
    pub mu_selected: f64,
    pub mu_oracle: f64,
    pub gap: f64,
    pub bound: f64,
    pub violation: bool,
    pub selected: usize,
    pub oracle: usize,
}

/// For every sketch kind and `(phi, kappa)` cell, boosts `L` sketches and
/// compares the selected and oracle optimality coefficients against the
/// gap bound at `eps`.
pub fn bound_experiment(cfg: &ExperimentConfig) -> Result<Vec<BoundRecord>> {
    cfg.validate()?;
    let basis = SyntheticBasis::new(cfg.n, cfg.d, derive_path(cfg.seed, &[TAG_DATA]))?;
    let a = basis.matrix();
    let ctx = LsContext::new(a)?;
    let builder = SketchBuilder::with_basis(a, ctx.basis());
    builder.profile()?;
    let m = cfg.m_values()[0];
    let mut cells = Vec::new();
    for &kind in &cfg.sketches {
        for (pi, &phi) in cfg.phis.iter().enumerate() {
            for (ki, &kappa) in cfg.kappas.iter().enumerate() {
                for rep in 0..cfg.reps {
                    cells.push((kind, pi, phi, ki, kappa, rep));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(kind, pi, phi, ki, kappa, rep)| {
            let (b, bt) = basis.pair(kappa, phi)?;
            let seed = derive_path(cfg.seed, &[TAG_BOUND, kind_tag(kind), pi as u64, ki as u64, rep as u64]);
            let sketches = family(&builder, kind, m, seed, cfg.l)?;
            let g = gap_check(&ctx, &b, &bt, &sketches, cfg.eps)?;
            Ok(BoundRecord {
                sketch: kind,
                kappa,
                phi,
                rep,
                nu: g.nu,
                mu_selected: g.mu_selected,
                mu_oracle: g.mu_oracle,
                gap: g.gap(),
                bound: g.bound,
                violation: g.violated(),
                selected: g.selected,
                oracle: g.oracle,
            })
        })
        .collect()
}

/// One sketch applied to one `(kappa, phi)` pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub sketch: SketchKind,
    pub kappa: f64,
    pub phi: f64,
    pub trial: usize,
    pub m: usize,
    pub sketch_seed: u64,
    pub mu2_low: f64,
    pub mu2_high: f64,
    pub residual_low: f64,
    pub residual_high: f64,
}

/// Correlation of `(mu^2(b~, S), mu^2(b, S))` over the sketches of one kind.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrRow {
    pub sketch: SketchKind,
    pub kappa: f64,
    pub phi: f64,
    pub correlation: f64,
    pub general_bound: f64,
    pub phi_kappa_bound: Option<f64>,
}

/// The same `reps` sketches of each kind are applied to every `(kappa, phi)`
/// pair; rows are ordered by sketch kind, then kappa, then phi.
pub fn corr_experiment(cfg: &ExperimentConfig) -> Result<(Vec<CorrRow>, Vec<TrialRecord>)> {
    cfg.validate()?;
    let basis = SyntheticBasis::new(cfg.n, cfg.d, derive_path(cfg.seed, &[TAG_DATA]))?;
    let a = basis.matrix();
    let ctx = LsContext::new(a)?;
    let builder = SketchBuilder::with_basis(a, ctx.basis());
    builder.profile()?;
    let m = cfg.m_values()[0];
    let mut table = Vec::new();
    let mut scatter = Vec::new();
    for &kind in &cfg.sketches {
        let sketches: Vec<SketchOperator> = (0..cfg.reps)
            .into_par_iter()
            .map(|t| {
                builder.build(SketchSpec::new(
                    kind,
                    m,
                    derive_path(cfg.seed, &[TAG_CORR, kind_tag(kind), t as u64]),
                ))
            })
            .collect::<Result<_>>()?;
        for &kappa in &cfg.kappas {
            for &phi in &cfg.phis {
                let (b, bt) = basis.pair(kappa, phi)?;
                let r = ctx.full_residual_checked(&b)?;
                let rt = ctx.full_residual_checked(&bt)?;
                let trials: Vec<TrialRecord> = sketches
                    .par_iter()
                    .enumerate()
                    .map(|(t, s)| {
                        let mu = ctx.optimality_coefficients(&[&bt, &b], s)?;
                        let (lo, hi) = (mu[0] * mu[0], mu[1] * mu[1]);
                        Ok(TrialRecord {
                            sketch: kind,
                            kappa,
                            phi,
                            trial: t,
                            m,
                            sketch_seed: s.spec().seed,
                            mu2_low: lo,
                            mu2_high: hi,
                            residual_low: rt * (1.0 + lo).sqrt(),
                            residual_high: r * (1.0 + hi).sqrt(),
                        })
                    })
                    .collect::<Result<_>>()?;
                let lo: Vec<f64> = trials.iter().map(|t| t.mu2_low).collect();
                let hi: Vec<f64> = trials.iter().map(|t| t.mu2_high).collect();
                let bounds = gaussian_corr_bounds_with(&ctx, &b, &bt)?;
                table.push(CorrRow {
                    sketch: kind,
                    kappa,
                    phi,
                    correlation: pearson(&lo, &hi),
                    general_bound: bounds.general,
                    phi_kappa_bound: bounds.phi_kappa_form,
                });
                scatter.extend(trials);
            }
        }
    }
    Ok((table, scatter))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostMethod {
    Bfb,
    Single,
}

/// Relative error of one boosted or single-sketch solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoostTrial {
    pub sketch: SketchKind,
    pub kappa: Option<f64>,
    pub phi: Option<f64>,
    pub m: usize,
    pub method: BoostMethod,
    pub rep: usize,
    pub rel_error: f64,
    pub high_fid_queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoostSummary {
    pub sketch: SketchKind,
    pub kappa: Option<f64>,
    pub phi: Option<f64>,
    pub m: usize,
    pub method: BoostMethod,
    pub reps: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub full_error: f64,
    pub cpqr_error: f64,
}

/// `(kappa, phi, b, b~)`; the parameters are absent for file data.
type LabelledPair = (Option<f64>, Option<f64>, DVector<f64>, DVector<f64>);

struct BoostData {
    a: DenseMatrix,
    pairs: Vec<LabelledPair>,
}

fn boost_data(cfg: &ExperimentConfig) -> Result<BoostData> {
    if let Some(files) = &cfg.data {
        let a = DenseMatrix::new(crate::io::read_matrix(&files.a)?)?;
        let b = crate::io::read_vector(&files.b)?;
        let bt = crate::io::read_vector(&files.bt)?;
        if b.len() != a.rows() || bt.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} rows, b has {}, b~ has {}",
                a.rows(),
                b.len(),
                bt.len()
            )));
        }
        return Ok(BoostData {
            a,
            pairs: vec![(None, None, b, bt)],
        });
    }
    let basis = SyntheticBasis::new(cfg.n, cfg.d, derive_path(cfg.seed, &[TAG_DATA]))?;
    let mut pairs = Vec::new();
    for &kappa in &cfg.kappas {
        for &phi in &cfg.phis {
            let (b, bt) = basis.pair(kappa, phi)?;
            pairs.push((Some(kappa), Some(phi), b, bt));
        }
    }
    Ok(BoostData {
        a: basis.matrix().clone(),
        pairs,
    })
}

/// Boosted (`L` sketches, best on `b~`) against single-sketch solves with the
/// same budget of `m` high-fidelity samples. The single-sketch baseline of
/// repetition `r` is the first member of the boosted family, so the two
/// methods are compared on paired draws.
pub fn boost_experiment(cfg: &ExperimentConfig) -> Result<(Vec<BoostSummary>, Vec<BoostTrial>)> {
    cfg.validate()?;
    let data = boost_data(cfg)?;
    let a = &data.a;
    let ctx = LsContext::new(a)?;
    let builder = SketchBuilder::with_basis(a, ctx.basis());
    builder.profile()?;
    let ms = cfg.m_values();
    let mut summary = Vec::new();
    let mut trials = Vec::new();
    for (pair_idx, (kappa, phi, b, bt)) in data.pairs.iter().enumerate() {
        let full_error = relative_error(a, &ctx.solve_full(b)?.x, b)?;
        for &kind in &cfg.sketches {
            for (mi, &m) in ms.iter().enumerate() {
                let cpqr = cpqr_sketch(a, m.min(a.rows()))?;
                let cpqr_error = relative_error(a, &ctx.solve_sketched(SketchRhs::Full(b), &cpqr)?.x, b)?;
                let reps: Vec<(BoostTrial, BoostTrial)> = (0..cfg.reps)
                    .into_par_iter()
                    .map(|rep| {
                        let seed = derive_path(
                            cfg.seed,
                            &[TAG_BOOST, pair_idx as u64, kind_tag(kind), mi as u64, rep as u64],
                        );
                        let sketches = family(&builder, kind, m, seed, cfg.l)?;
                        let mut pair = FidelityPair::from_vectors(bt.clone(), b.clone())?;
                        let boosted = run_bfb_with(&ctx, &mut pair, &sketches)?;
                        let single = ctx.solve_sketched(SketchRhs::Full(b), &sketches[0])?;
                        let record = |method, x: &DVector<f64>, queries| -> Result<BoostTrial> {
                            Ok(BoostTrial {
                                sketch: kind,
                                kappa: *kappa,
                                phi: *phi,
                                m,
                                method,
                                rep,
                                rel_error: relative_error(a, x, b)?,
                                high_fid_queries: queries,
                            })
                        };
                        let single_queries = sketches[0].distinct_rows().map_or(a.rows(), |r| r.len());
                        Ok((
                            record(BoostMethod::Bfb, &boosted.x(), boosted.high_fid_queries)?,
                            record(BoostMethod::Single, &single.x, single_queries)?,
                        ))
                    })
                    .collect::<Result<_>>()?;
                for (method, pick) in [
                    (BoostMethod::Bfb, 0usize),
                    (BoostMethod::Single, 1usize),
                ] {
                    let errs: Vec<f64> = reps
                        .iter()
                        .map(|p| if pick == 0 { p.0.rel_error } else { p.1.rel_error })
                        .collect();
                    let s = BoxStats::from_samples(&errs);
                    summary.push(BoostSummary {
                        sketch: kind,
                        kappa: *kappa,
                        phi: *phi,
                        m,
                        method,
                        reps: cfg.reps,
                        min: s.min,
                        q1: s.q1,
                        median: s.median,
                        q3: s.q3,
                        max: s.max,
                        full_error,
                        cpqr_error,
                    });
                }
                for (bt_rec, single_rec) in reps {
                    trials.push(bt_rec);
                    trials.push(single_rec);
                }
            }
        }
    }
    Ok((summary, trials))
}
