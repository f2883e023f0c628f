//! `curvlab`: curvature bounds for weighted graphs and quantum Markov
//! semigroups from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 an inequality was
//! falsified (or a reproduction case missed its expected value).

mod reproduce;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use curvlab::error::CurvError;
use curvlab::graph_core::{build_graph, GraphSpec, WeightedGraph};
use curvlab::graph_curvature::{
    bakry_emery_curvature_with, ge_curvature_search, ge_falsify, idle_hodge, intertwining_curvature_with,
    splitting_hodge, Construction, FalsifyConfig, GeSearchConfig, HodgeOperator, PencilOptions, DEFAULT_T_GRID,
};
use curvlab::mapping_rep::{build_mapping_rep_from_spec, intertwining_curvature_mapping, mapping_hodge, MappingSpec, MappingVariant};
use curvlab::means::builtin_mean;
use curvlab::optimize::SearchConfig;
use curvlab::qms_core::{build_qms_from_spec, choi_min_eigenvalue, fodc, QmsGenerator, QmsSpec};
use curvlab::qms_curvature::{
    be_curvature_qms, ge_falsify_qms, ge_search_qms, intertwining_curvature_qms, mlsi_falsify, product_splitting,
    splitting_hodge_qms, QmsConstruction, QmsHodge, QmsSampleConfig,
};
use curvlab::report::{parse_cmat, CurvatureReport, Mode, Real, SCHEMA};

#[derive(Parser, Debug)]
#[command(name = "curvlab", version, about = "Ricci curvature bounds for graphs and quantum Markov semigroups")]
struct Cli {
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct RunConfig {
    /// Master seed of every random search.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of random samples (command-specific default when omitted).
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Relative eigenvalue truncation of the pencil solvers.
    #[arg(long, global = true, default_value_t = curvlab::optimize::DEFAULT_TRUNCATION)]
    tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weighted graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Quantum Markov semigroups on M_n.
    #[command(subcommand)]
    Qms(QmsCmd),
    /// Run a bundled case and compare with its expected value (`list` shows all).
    Reproduce { case: String },
}

#[derive(Subcommand, Debug)]
enum GraphCmd {
    /// Pointwise Bakry–Émery constants.
    Be { graph: PathBuf },
    /// Intertwining constants of a Hodge operator.
    Intertwine {
        /// idle | splitting:<K> | file:<matrix.json>
        #[arg(long, default_value = "idle")]
        hodge: String,
        graph: PathBuf,
    },
    /// Intertwining constants from a mapping representation.
    Mapping {
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Level of the involutive operator (default: 2 min c).
        #[arg(long = "K")]
        k: Option<f64>,
        graph: PathBuf,
        mapping: PathBuf,
    },
    /// Gradient estimate: sampled constant or falsification at a given K.
    Ge {
        #[arg(long, default_value = "logarithmic")]
        mean: String,
        #[arg(long, value_enum, default_value_t = GeMode::Estimate)]
        mode: GeMode,
        #[arg(long = "K")]
        k: Option<f64>,
        graph: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum QmsCmd {
    /// Check the Alicki conditions and print structural diagnostics.
    Validate { qms: PathBuf },
    /// Sampled Bakry–Émery constant.
    Be { qms: PathBuf },
    /// Sampled intertwining constant of a Hodge operator.
    Intertwine {
        /// splitting:<K> | product[:<K1>,<K2>,...] | file:<matrix.json>
        #[arg(long)]
        hodge: String,
        qms: PathBuf,
    },
    /// Gradient estimate: falsification at K, or the sampled constant.
    Ge {
        #[arg(long, default_value = "logarithmic")]
        mean: String,
        #[arg(long, value_enum, default_value_t = GeMode::Falsify)]
        mode: GeMode,
        #[arg(long = "K")]
        k: Option<f64>,
        qms: PathBuf,
    },
    /// Relative-entropy decay at the given rate (= 2K).
    Mlsi {
        #[arg(long)]
        rate: f64,
        qms: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum VariantArg {
    Commuting,
    Involutive,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GeMode {
    Estimate,
    Falsify,
}

/// Failure of a CLI run, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Library(CurvError),
}

impl From<CurvError> for CliError {
    fn from(e: CurvError) -> Self {
        CliError::Library(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Library(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// What a command produced: a JSON document and whether it falsified
/// something.
pub struct Outcome {
    pub json: Value,
    pub falsified: bool,
}

impl Outcome {
    fn report(r: CurvatureReport) -> Self {
        Outcome { json: serde_json::to_value(r).expect("reports serialise"), falsified: false }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

fn load_graph(path: &Path) -> CliResult<WeightedGraph> {
    let spec: GraphSpec = read_json(path)?;
    build_graph(&spec).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_qms(path: &Path) -> CliResult<QmsGenerator> {
    let spec: QmsSpec = read_json(path)?;
    build_qms_from_spec(&spec).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_matrix(path: &Path) -> CliResult<curvlab::linalg::CMat> {
    let v: Value = read_json(path)?;
    parse_cmat(&v).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_level(s: &str, what: &str) -> CliResult<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| usage(format!("{what}: `{s}` is not a finite number")))
}

fn search_cfg(run: &RunConfig, default_samples: usize) -> SearchConfig {
    SearchConfig { samples: run.samples.unwrap_or(default_samples), seed: run.seed, ..Default::default() }
}

fn sample_cfg(run: &RunConfig, default_samples: usize) -> QmsSampleConfig {
    QmsSampleConfig { samples: run.samples.unwrap_or(default_samples), seed: run.seed, ..Default::default() }
}

fn graph_command(cmd: &GraphCmd, run: &RunConfig) -> CliResult<Outcome> {
    let opts = PencilOptions { truncation: run.tol, ..Default::default() };
    match cmd {
        GraphCmd::Be { graph } => Ok(Outcome::report(bakry_emery_curvature_with(&load_graph(graph)?, &opts))),
        GraphCmd::Intertwine { hodge, graph } => {
            let g = load_graph(graph)?;
            let h = if hodge == "idle" {
                idle_hodge(&g)?
            } else if let Some(k) = hodge.strip_prefix("splitting:") {
                splitting_hodge(&g, parse_level(k, "--hodge splitting")?)?
            } else if let Some(p) = hodge.strip_prefix("file:") {
                HodgeOperator::new(&g, load_matrix(Path::new(p))?, Construction::Custom)?
            } else {
                return Err(usage(format!("--hodge: expected idle, splitting:<K> or file:<path>, got `{hodge}`")));
            };
            Ok(Outcome::report(intertwining_curvature_with(&g, &h, &opts)?))
        }
        GraphCmd::Mapping { variant, k, graph, mapping } => {
            let g = load_graph(graph)?;
            let spec: MappingSpec = read_json(mapping)?;
            let rep = build_mapping_rep_from_spec(&g, &spec).map_err(|e| usage(format!("{}: {e}", mapping.display())))?;
            let v = match variant {
                VariantArg::Commuting => MappingVariant::Commuting,
                VariantArg::Involutive => MappingVariant::Involutive(k.unwrap_or_else(|| rep.theorem_constant())),
            };
            Ok(Outcome::report(intertwining_curvature_mapping(&mapping_hodge(&rep, v)?)?))
        }
        GraphCmd::Ge { mean, mode, k, graph } => {
            let g = load_graph(graph)?;
            let mf = builtin_mean(mean)?;
            match mode {
                GeMode::Estimate => {
                    let cfg = GeSearchConfig { samples: run.samples.unwrap_or(1000), seed: run.seed, ..Default::default() };
                    Ok(Outcome::report(ge_curvature_search(&g, &mf, &cfg)))
                }
                GeMode::Falsify => {
                    let k = k.ok_or_else(|| usage("--mode falsify needs --K"))?;
                    let cfg = FalsifyConfig { samples: run.samples.unwrap_or(1000), seed: run.seed, ..Default::default() };
                    let found = ge_falsify(&g, &mf, k, &cfg)?;
                    Ok(falsify_outcome("graph.ge_falsify", k, &cfg.t_grid, cfg.samples, run.seed, &mf.name().to_string(), found.map(|c| serde_json::to_value(c).expect("serialisable"))))
                }
            }
        }
    }
}

fn falsify_outcome(kind: &str, k: f64, grid: &[f64], samples: usize, seed: u64, mean: &str, found: Option<Value>) -> Outcome {
    let mut r = CurvatureReport::new(kind, Mode::Sampled { samples, seed })
        .detail("mean", json!(mean))
        .detail("t_grid", json!(grid))
        .detail("holds", json!(found.is_none()))
        .tol("falsify", curvlab::graph_curvature::FALSIFY_TOL);
    r.bound = Real(k);
    let falsified = found.is_some();
    r.witness = found;
    Outcome { json: serde_json::to_value(r).expect("reports serialise"), falsified }
}

fn qms_hodge(g: &QmsGenerator, spec: &str) -> CliResult<QmsHodge> {
    let f = fodc(g)?;
    if let Some(k) = spec.strip_prefix("splitting:") {
        return Ok(splitting_hodge_qms(&f, parse_level(k, "--hodge splitting")?)?);
    }
    if let Some(p) = spec.strip_prefix("file:") {
        return Ok(QmsHodge::new(&f, load_matrix(Path::new(p))?, QmsConstruction::Custom)?);
    }
    if spec == "product" || spec.starts_with("product:") {
        let m = g.n_families();
        let levels: Vec<f64> = match spec.strip_prefix("product:") {
            Some(list) => {
                let ks = list.split(',').map(|s| parse_level(s.trim(), "--hodge product")).collect::<CliResult<Vec<_>>>()?;
                match ks.len() {
                    1 => vec![ks[0]; m],
                    l if l == m => ks,
                    l => return Err(usage(format!("--hodge product: {l} levels given for {m} families"))),
                }
            }
            // Default level of each family: its spectral gap.
            None => (0..m).map(|k| spectral_gap(&g.family_superoperator(k))).collect(),
        };
        return Ok(product_splitting(&f, &levels)?);
    }
    Err(usage(format!("--hodge: expected splitting:<K>, product[:<K>,...] or file:<path>, got `{spec}`")))
}

/// Smallest nonzero real part in the spectrum of a generator.
fn spectral_gap(l: &curvlab::linalg::CMat) -> f64 {
    let scale = curvlab::linalg::max_abs(l).max(1.0);
    let eig = l.clone().schur().eigenvalues().expect("Schur form of a complex matrix is triangular");
    eig.iter()
        .map(|z| z.re)
        .filter(|&r| r > 1e-9 * scale)
        .fold(f64::INFINITY, f64::min)
}

fn qms_command(cmd: &QmsCmd, run: &RunConfig) -> CliResult<Outcome> {
    match cmd {
        QmsCmd::Validate { qms } => {
            let g = load_qms(qms)?;
            let f = fodc(&g)?;
            let choi = [0.05, 1.0].iter().map(|&t| choi_min_eigenvalue(&g.semigroup(t).expect("t ≥ 0"))).fold(f64::INFINITY, f64::min);
            Ok(Outcome {
                json: json!({
                    "schema": SCHEMA,
                    "kind": "qms.validate",
                    "n": g.n(),
                    "jumps": g.jumps().len(),
                    "families": g.n_families(),
                    "frequencies": g.jumps().iter().map(|j| j.omega).collect::<Vec<_>>(),
                    "star": g.star(),
                    "tracial": g.is_tracial(),
                    "gns_defect": g.gns_defect(8),
                    "choi_min_eigenvalue": choi,
                    "calculus_defects": f.defects(8),
                }),
                falsified: false,
            })
        }
        QmsCmd::Be { qms } => Ok(Outcome::report(be_curvature_qms(&load_qms(qms)?, &search_cfg(run, 512))?)),
        QmsCmd::Intertwine { hodge, qms } => {
            let g = load_qms(qms)?;
            let h = qms_hodge(&g, hodge)?;
            Ok(Outcome::report(intertwining_curvature_qms(&h, &search_cfg(run, 512))?))
        }
        QmsCmd::Ge { mean, mode, k, qms } => {
            let g = load_qms(qms)?;
            let mf = builtin_mean(mean)?;
            let cfg = sample_cfg(run, 1000);
            match mode {
                GeMode::Estimate => Ok(Outcome::report(ge_search_qms(&g, &mf, &cfg)?)),
                GeMode::Falsify => {
                    let k = k.ok_or_else(|| usage("--mode falsify needs --K"))?;
                    let found = ge_falsify_qms(&g, &mf, k, &cfg)?;
                    Ok(falsify_outcome("qms.ge_falsify", k, &cfg.t_grid, cfg.samples, run.seed, mf.name(), found.map(|c| serde_json::to_value(c).expect("serialisable"))))
                }
            }
        }
        QmsCmd::Mlsi { rate, qms } => {
            let g = load_qms(qms)?;
            let cfg = sample_cfg(run, 1000);
            let found = mlsi_falsify(&g, *rate, &cfg)?;
            let mut out = falsify_outcome("qms.mlsi", *rate, &DEFAULT_T_GRID, cfg.samples, run.seed, "relative_entropy", found.map(|c| serde_json::to_value(c).expect("serialisable")));
            if let Some(obj) = out.json.as_object_mut() {
                obj.insert("bound".into(), json!(rate));
            }
            Ok(out)
        }
    }
}

/// Parse `argv` and run; returns the exit code and what was written.
pub fn run(argv: &[String]) -> (u8, String) {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            if code == 0 {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
            return (code, text);
        }
    };
    let run = &cli.run;
    if run.samples == Some(0) {
        eprintln!("error: --samples must be at least 1");
        return (1, String::new());
    }
    if !(run.tol > 0.0) {
        eprintln!("error: --tol must be positive");
        return (1, String::new());
    }
    let result = match &cli.command {
        Command::Graph(c) => graph_command(c, run),
        Command::Qms(c) => qms_command(c, run),
        Command::Reproduce { case } => reproduce::run_case(case, run.seed),
    };
    match result {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.json).expect("JSON values serialise") + "\n";
            match &run.output {
                Some(p) => {
                    if let Err(e) = fs::write(p, &text) {
                        eprintln!("error: {}: {e}", p.display());
                        return (1, text);
                    }
                }
                None => print!("{text}"),
            }
            (if out.falsified { 2 } else { 0 }, text)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (1, String::new())
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("CURVLAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // Only fails if a pool already exists, which cannot happen here.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring CURVLAB_THREADS={v:?} (expected a positive integer)"),
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let argv: Vec<String> = std::env::args().collect();
    ExitCode::from(run(&argv).0)
}
