//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numerical or data
//! errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::design::{index_set, KronLeverageSampler, SpaceKind, StructuredDesign};
use crate::error::{Error, Result};
use crate::harness::{
    boost_experiment, bound_experiment, corr_experiment, wick_mc_check, DataFiles, ExperimentConfig, ExperimentKind,
    WickRecord,
};
use crate::io::{read_matrix, write_json, write_matrix, write_records};
use crate::linalg::DenseMatrix;
use crate::rng::{derive_seed, stream};
use crate::sketch::{SketchBuilder, SketchKind, SketchOperator, SketchSpec};

#[derive(Parser, Debug)]
#[command(name = "bfb", version, about = "Sketched least squares with bi-fidelity boosting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble a tensor Legendre design matrix.
    DesignBuild(DesignArgs),
    /// Draw a sketch for a design or a matrix file.
    Sample(SampleArgs),
    /// Correlation of squared optimality coefficients across fidelities.
    CorrExp(ExperimentArgs),
    /// Boosted vs oracle optimality gap against its bound.
    BoundExp(ExperimentArgs),
    /// Relative error of boosted vs single-sketch solves.
    BoostExp(ExperimentArgs),
    /// Monte-Carlo check of the Gaussian fourth-moment identity.
    WickCheck(WickArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Base seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; a JSON sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the summary table.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Sketch kinds, comma separated.
    #[arg(long, value_delimiter = ',')]
    sketch: Option<Vec<SketchKind>>,
    /// Embedding dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Number of boosted sketches.
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    kappa: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Design matrix file (boost only; needs --b and --bt).
    #[arg(long, requires_all = ["b", "bt"])]
    a: Option<PathBuf>,
    /// High-fidelity vector file.
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    /// Low-fidelity vector file.
    #[arg(long, requires = "a")]
    bt: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DesignFlags {
    /// Number of input dimensions.
    #[arg(long)]
    q: Option<usize>,
    /// Maximum polynomial order.
    #[arg(long)]
    zeta: Option<usize>,
    /// total_degree or hyperbolic_cross.
    #[arg(long, default_value = "total_degree")]
    space: SpaceKind,
    /// Quadrature nodes per dimension: one value or q comma-separated values.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// Parameter ranges as lo:hi, comma separated, one per dimension.
    #[arg(long, value_delimiter = ',')]
    ranges: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    design: DesignFlags,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    design: DesignFlags,
    /// Matrix file to sample instead of a design.
    #[arg(long, conflicts_with_all = ["q", "zeta", "nodes"])]
    matrix: Option<PathBuf>,
    #[arg(long, default_value = "leverage")]
    sketch: SketchKind,
    /// Embedding dimension.
    #[arg(long)]
    m: usize,
}

#[derive(Args, Debug)]
struct WickArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Dimension of the random case.
    #[arg(long, default_value_t = 5)]
    dim: usize,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::DesignBuild(a) => design_build(a),
        Command::Sample(a) => sample(a),
        Command::CorrExp(a) => experiment(ExperimentKind::Corr, a),
        Command::BoundExp(a) => experiment(ExperimentKind::Bound, a),
        Command::BoostExp(a) => experiment(ExperimentKind::Boost, a),
        Command::WickCheck(a) => wick(a),
    }
}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a T,
}

fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn write_provenance<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<()> {
    write_json(
        &sidecar(out),
        &Provenance {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
        },
    )
}

fn load_config(kind: ExperimentKind, path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::defaults(kind)),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", p.display())))?;
            let cfg = ExperimentConfig::from_json(&text, Some(kind))?;
            if cfg.kind != kind {
                return Err(Error::Usage(format!("config is for a {:?} experiment", cfg.kind)));
            }
            Ok(cfg)
        }
    }
}

fn experiment(kind: ExperimentKind, args: ExperimentArgs) -> Result<()> {
    let mut cfg = load_config(kind, args.config.as_deref())?;
    if let Some(v) = args.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.sketch {
        cfg.sketches = v;
    }
    if let Some(v) = args.m {
        cfg.m = Some(v);
    }
    if let Some(v) = args.l {
        cfg.l = v;
    }
    if let Some(v) = args.kappa {
        cfg.kappas = v;
    }
    if let Some(v) = args.phi {
        cfg.phis = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.eps {
        cfg.eps = v;
    }
    if let (Some(a), Some(b), Some(bt)) = (args.a, args.b, args.bt) {
        cfg.data = Some(DataFiles { a, b, bt });
    }
    if let Some(v) = args.common.out {
        cfg.out = Some(v);
    }
    let default_name = match kind {
        ExperimentKind::Bound => "bound.csv",
        ExperimentKind::Corr => "corr.csv",
        ExperimentKind::Boost => "boost.csv",
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(default_name));
    cfg.validate()?;
    let quiet = args.common.quiet;
    match kind {
        ExperimentKind::Bound => {
            let rows = bound_experiment(&cfg)?;
            write_records(&out, &rows)?;
            if !quiet {
                println!("{:<18} {:>6} {:>10} {:>10}", "sketch", "rows", "violations", "max_gap");
                for &k in &cfg.sketches {
                    let of_kind: Vec<_> = rows.iter().filter(|r| r.sketch == k).collect();
                    let viol = of_kind.iter().filter(|r| r.violation).count();
                    let max_gap = of_kind.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
                    println!("{:<18} {:>6} {:>10} {:>10.4}", k.name(), of_kind.len(), viol, max_gap);
                }
            }
        }
        ExperimentKind::Corr => {
            let (table, scatter) = corr_experiment(&cfg)?;
            write_records(&out, &table)?;
            write_records(&sibling(&out, "scatter"), &scatter)?;
            if !quiet {
                println!("{:<18} {:>6} {:>6} {:>12} {:>14}", "sketch", "kappa", "phi", "correlation", "general_bound");
                for r in &table {
                    println!(
                        "{:<18} {:>6} {:>6} {:>12.4} {:>14.4}",
                        r.sketch.name(),
                        r.kappa,
                        r.phi,
                        r.correlation,
                        r.general_bound
                    );
                }
            }
        }
        ExperimentKind::Boost => {
            let (summary, trials) = boost_experiment(&cfg)?;
            write_records(&out, &summary)?;
            write_records(&sibling(&out, "trials"), &trials)?;
            if !quiet {
                println!(
                    "{:<18} {:>5} {:>7} {:>11} {:>11} {:>11} {:>11}",
                    "sketch", "m", "method", "median", "iqr", "full", "cpqr"
                );
                for s in &summary {
                    println!(
                        "{:<18} {:>5} {:>7} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}",
                        s.sketch.name(),
                        s.m,
                        format!("{:?}", s.method).to_lowercase(),
                        s.median,
                        s.q3 - s.q1,
                        s.full_error,
                        s.cpqr_error
                    );
                }
            }
        }
    }
    write_provenance(&out, kind_command(kind), &cfg)?;
    if !quiet {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn kind_command(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Bound => "bound-exp",
        ExperimentKind::Corr => "corr-exp",
        ExperimentKind::Boost => "boost-exp",
    }
}

#[derive(Serialize, Debug, Clone, PartialEq)]
struct DesignRequest {
    q: usize,
    zeta: usize,
    space: SpaceKind,
    nodes: Vec<usize>,
    ranges: Option<Vec<(f64, f64)>>,
}

fn design_request(flags: &DesignFlags) -> Result<DesignRequest> {
    let q = flags.q.ok_or_else(|| Error::Usage("--q is required".into()))?;
    let zeta = flags.zeta.ok_or_else(|| Error::Usage("--zeta is required".into()))?;
    let nodes = match flags.nodes.as_deref() {
        None => vec![zeta + 1; q],
        Some([n]) => vec![*n; q],
        Some(v) if v.len() == q => v.to_vec(),
        Some(v) => return Err(Error::Usage(format!("--nodes has {} values for q = {q}", v.len()))),
    };
    let ranges = match &flags.ranges {
        None => None,
        Some(list) => {
            if list.len() != q {
                return Err(Error::Usage(format!("--ranges has {} values for q = {q}", list.len())));
            }
            Some(
                list.iter()
                    .map(|r| {
                        let (lo, hi) = r
                            .split_once(':')
                            .ok_or_else(|| Error::Usage(format!("range '{r}' is not lo:hi")))?;
                        let parse = |s: &str| {
                            s.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::Usage(format!("range '{r}' is not lo:hi")))
                        };
                        Ok((parse(lo)?, parse(hi)?))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };
    Ok(DesignRequest {
        q,
        zeta,
        space: flags.space,
        nodes,
        ranges,
    })
}

fn build(req: &DesignRequest) -> Result<StructuredDesign> {
    let iset = index_set(req.q, req.zeta, req.space).map_err(|e| Error::Usage(e.to_string()))?;
    StructuredDesign::new(&req.nodes, iset, req.ranges.clone())
}

fn design_build(args: DesignArgs) -> Result<()> {
    let req = design_request(&args.design)?;
    let design = build(&req)?;
    let out = args.common.out.unwrap_or_else(|| PathBuf::from("design.bin"));
    write_matrix(&out, design.assembled()?.as_matrix())?;
    #[derive(Serialize)]
    struct Meta<'a> {
        design: crate::design::DesignMeta,
        index_set: &'a crate::design::IndexSet,
    }
    write_provenance(
        &out,
        "design-build",
        &Meta {
            design: design.meta(),
            index_set: design.index_set(),
        },
    )?;
    if !args.common.quiet {
        println!("design {} x {} ({:?}, q = {}, zeta = {})", design.n(), design.d(), req.space, req.q, req.zeta);
        println!("wrote {}", out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleRow {
    sample: usize,
    row: usize,
    weight: f64,
}

fn sample(args: SampleArgs) -> Result<()> {
    let seed = args.common.seed.unwrap_or(0);
    let spec = SketchSpec::new(args.sketch, args.m, seed);
    let (op, source): (SketchOperator, serde_json::Value) = match &args.matrix {
        Some(path) => {
            let a = DenseMatrix::new(read_matrix(path)?)?;
            let op = SketchBuilder::new(&a).build(spec)?;
            (op, serde_json::json!({ "matrix": path }))
        }
        None => {
            let req = design_request(&args.design)?;
            let design = build(&req)?;
            let op = if args.sketch == SketchKind::Leverage {
                KronLeverageSampler::new(&design)?.sample(args.m, seed)?
            } else {
                SketchBuilder::new(design.assembled()?).build(spec)?
            };
            (op, serde_json::to_value(design.meta())?)
        }
    };
    let out = args.common.out.unwrap_or_else(|| PathBuf::from("sample.csv"));
    match (op.indices(), op.weights()) {
        (Some(idx), Some(w)) => {
            let rows: Vec<SampleRow> = idx
                .iter()
                .zip(w)
                .enumerate()
                .map(|(sample, (&row, &weight))| SampleRow { sample, row, weight })
                .collect();
            write_records(&out, &rows)?;
        }
        _ => write_matrix(&out, &op.to_dense())?,
    }
    write_provenance(
        &out,
        "sample",
        &serde_json::json!({ "sketch": spec, "source": source }),
    )?;
    if !args.common.quiet {
        match op.distinct_rows() {
            Some(rows) => println!("{} sketch: {} samples, {} distinct rows of {}", args.sketch, op.m(), rows.len(), op.n()),
            None => println!("{} sketch: {} x {}", args.sketch, op.m(), op.n()),
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct WickRow {
    case: &'static str,
    samples: usize,
    mc_estimate: f64,
    exact: f64,
    rel_err: f64,
}

impl WickRow {
    fn new(case: &'static str, r: WickRecord) -> Self {
        Self {
            case,
            samples: r.samples,
            mc_estimate: r.mc_estimate,
            exact: r.exact,
            rel_err: r.rel_err,
        }
    }
}

fn wick(args: WickArgs) -> Result<()> {
    if args.dim < 2 {
        return Err(Error::Usage("--dim must be >= 2".into()));
    }
    let seed = args.common.seed.unwrap_or(0);
    let dim = args.dim;
    let e = |i: usize| DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 });
    let mut rng = stream(derive_seed(seed, 0x77));
    let mut gauss = || -> DVector<f64> {
        use rand::distr::Distribution;
        DVector::from_fn(dim, |_, _| rand_distr::StandardNormal.sample(&mut rng))
    };
    let (w, z) = (gauss(), gauss());
    let cases = [
        ("orthogonal", e(0), e(1)),
        ("identical", e(0), e(0)),
        ("random", w, z),
    ];
    let rows = cases
        .into_iter()
        .enumerate()
        .map(|(i, (case, w, z))| {
            Ok(WickRow::new(
                case,
                wick_mc_check(&w, &z, args.samples, derive_seed(seed, i as u64))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = args.common.out.unwrap_or_else(|| PathBuf::from("wick.csv"));
    write_records(&out, &rows)?;
    write_provenance(
        &out,
        "wick-check",
        &serde_json::json!({ "seed": seed, "samples": args.samples, "dim": dim }),
    )?;
    if !args.common.quiet {
        println!("{:<12} {:>14} {:>10} {:>10}", "case", "mc_estimate", "exact", "rel_err");
        for r in &rows {
            println!(
                "{:<12} {:>14.6} {:>10.4} {:>10.2e}",
                r.case, r.mc_estimate, r.exact, r.rel_err
            );
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}
