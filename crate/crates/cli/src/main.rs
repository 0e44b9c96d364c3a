use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ppm_core::bench::{self, BenchConfig, BenchSolver};
use ppm_core::generate::{
    feasible_matrix, galton_watson, normal_matrix, random_tree, seeded, RNG_NAME,
};
use ppm_core::io::{parse_matrix, parse_prufer, parse_tree, write_matrix, write_prufer, write_tree};
use ppm_core::search::{search_all, Penalty, Scaling, SearchOptions, SearchSpec, DEFAULT_MAX_Q};
use ppm_core::{
    encode_prufer, decode_prufer, project_matrix, project_matrix_incremental, FrequencyMatrix,
    PpmError, PruferCode, RootedTree,
};

#[derive(Parser)]
#[command(name = "ppm", version, about = "Project mutation frequencies onto the perfect phylogeny model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project every sample column onto the model of a given tree.
    Project(ProjectArgs),
    /// Score every labeled tree on q nodes and report the best k.
    Search(SearchArgs),
    /// Time the exact solver against iterative baselines.
    Bench(BenchArgs),
    /// Write a random tree and frequency matrix.
    Gen(GenArgs),
    /// Convert between trees and Prüfer codes.
    #[command(subcommand)]
    Prufer(PruferCommand),
}

#[derive(Args)]
struct ProjectArgs {
    /// Parent-array tree file.
    #[arg(long)]
    tree: PathBuf,
    /// CSV matrix, one row per node and one column per sample.
    #[arg(long)]
    matrix: PathBuf,
    /// Output JSON file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the heap-based incremental sweep.
    #[arg(long)]
    incremental: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Cost transform: identity, log1p or square.
    #[arg(long = "j", default_value = "identity")]
    scaling: String,
    /// Topology penalty: zero, leaves:WEIGHT or table:FILE.
    #[arg(long = "q-penalty", default_value = "zero")]
    penalty: String,
    #[arg(long)]
    workers: Option<usize>,
    /// Search beyond q = 11.
    #[arg(long)]
    force: bool,
    /// Include M* and F* for every ranked tree.
    #[arg(long)]
    solutions: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated tree sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    sizes: Vec<usize>,
    /// Comma-separated solvers: exact, admm-primal, admm-dual, pgd-primal, pgd-dual.
    #[arg(long, value_delimiter = ',', default_value = "exact")]
    solvers: Vec<String>,
    /// Trials per size: one count, or one per size.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    trials: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    cmin: usize,
    #[arg(long, default_value_t = 4)]
    cmax: usize,
    /// Error on M counted as converged.
    #[arg(long, default_value_t = 1e-3)]
    target: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// CSV of per-trial rows (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with per-size averages.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    q: usize,
    /// Number of samples (matrix columns).
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    cmin: usize,
    #[arg(long, default_value_t = 4)]
    cmax: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw the tree uniformly over labeled trees instead of Galton–Watson.
    #[arg(long)]
    uniform: bool,
    /// Write U M for simplex columns M instead of normal noise.
    #[arg(long)]
    feasible: bool,
    #[arg(long)]
    out_tree: PathBuf,
    #[arg(long)]
    out_matrix: PathBuf,
}

#[derive(Subcommand)]
enum PruferCommand {
    /// Print the code of a tree file ("-" reads stdin).
    Encode { tree: PathBuf },
    /// Print the tree of a code file ("-" reads stdin).
    Decode {
        code: PathBuf,
        /// Node count; defaults to the code length plus two.
        #[arg(long)]
        q: Option<usize>,
    },
}

enum Failure {
    Input(String),
    Degenerate(String),
    Other(String),
}

impl From<PpmError> for Failure {
    fn from(e: PpmError) -> Self {
        match e {
            PpmError::Degenerate(_) => Failure::Degenerate(e.to_string()),
            PpmError::InvalidInput(_)
            | PpmError::InvalidTree(_)
            | PpmError::Parse { .. }
            | PpmError::Refused(_)
            | PpmError::Overflow(_) => Failure::Input(e.to_string()),
            PpmError::Invariant(_) | PpmError::Diverged(_) => Failure::Other(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_input(path: &Path) -> CliResult<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Input(format!("reading stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn with_file<T>(path: &Path, r: Result<T, PpmError>) -> CliResult<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Other(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Other(format!("stdout: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn warn_about(matrix: &FrequencyMatrix) {
    if matrix.has_values_outside_unit_interval() {
        eprintln!("warning: matrix has entries outside [0, 1]; frequencies are expected to be fractions");
    }
    let bad = matrix.columns_with_nonmaximal_root();
    if !bad.is_empty() {
        let cols: Vec<String> = bad.iter().map(|c| (c + 1).to_string()).collect();
        eprintln!(
            "warning: row 1 is not the largest entry in column(s) {}; every mutant carries mutation 1",
            cols.join(", ")
        );
    }
}

#[derive(Serialize)]
struct ColumnReport<'a> {
    t_star: f64,
    cost: f64,
    m_star: &'a [f64],
    f_star: &'a [f64],
}

#[derive(Serialize)]
struct ProjectReport<'a> {
    q: usize,
    samples: usize,
    total_cost: f64,
    costs: Vec<f64>,
    columns: Vec<ColumnReport<'a>>,
}

fn cmd_project(a: &ProjectArgs) -> CliResult<()> {
    let tree = with_file(&a.tree, parse_tree(&read_input(&a.tree)?))?;
    let matrix = with_file(&a.matrix, parse_matrix(&read_input(&a.matrix)?))?;
    if matrix.rows() != tree.len() {
        return Err(Failure::Input(format!(
            "matrix has {} rows but the tree has {} nodes",
            matrix.rows(),
            tree.len()
        )));
    }
    warn_about(&matrix);
    let result = if a.incremental {
        project_matrix_incremental(&tree, &matrix)?
    } else {
        project_matrix(&tree, &matrix)?
    };
    let report = ProjectReport {
        q: tree.len(),
        samples: matrix.cols(),
        total_cost: result.total_cost,
        costs: result.columns.iter().map(|c| c.cost).collect(),
        columns: result
            .columns
            .iter()
            .map(|c| ColumnReport {
                t_star: c.t_star,
                cost: c.cost,
                m_star: &c.m_star,
                f_star: &c.f_star,
            })
            .collect(),
    };
    emit(a.out.as_deref(), &to_json(&report))
}

fn parse_penalty(text: &str) -> CliResult<Penalty> {
    if text == "zero" {
        return Ok(Penalty::Zero);
    }
    if let Some(w) = text.strip_prefix("leaves:") {
        let w: f64 = w
            .parse()
            .map_err(|_| Failure::Input(format!("leaf weight '{w}' is not a number")))?;
        return Ok(Penalty::LeafCount(w));
    }
    if let Some(path) = text.strip_prefix("table:") {
        let path = Path::new(path);
        let mut entries = Vec::new();
        for (n, line) in read_input(path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Failure::Input(format!("{}:{}: expected 'LABELS,VALUE'", path.display(), n + 1));
            let (code, value) = line.split_once(',').ok_or_else(bad)?;
            let labels = code
                .split_whitespace()
                .map(|l| l.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            let value: f64 = value.trim().parse().map_err(|_| bad())?;
            entries.push((PruferCode(labels), value));
        }
        return Ok(Penalty::table(entries)?);
    }
    Err(Failure::Input(format!(
        "unknown penalty '{text}' (expected zero, leaves:WEIGHT or table:FILE)"
    )))
}

fn cmd_search(a: &SearchArgs) -> CliResult<()> {
    let matrix = with_file(&a.matrix, parse_matrix(&read_input(&a.matrix)?))?;
    warn_about(&matrix);
    let mut spec = SearchSpec::new(matrix, a.k)?;
    spec.scaling = a.scaling.parse::<Scaling>()?;
    spec.penalty = parse_penalty(&a.penalty)?;
    let mut options = SearchOptions {
        force: a.force,
        include_solutions: a.solutions,
        max_q: DEFAULT_MAX_Q,
        ..SearchOptions::default()
    };
    if let Some(w) = a.workers {
        options.workers = w.max(1);
    }
    let report = search_all(&spec, &options).map_err(|e| match e {
        PpmError::Refused(m) => Failure::Input(format!("{m} (pass --force)")),
        other => other.into(),
    })?;
    emit(a.out.as_deref(), &to_json(&report))
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let solvers = a
        .solvers
        .iter()
        .map(|s| s.parse::<BenchSolver>())
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = BenchConfig {
        sizes: a.sizes.clone(),
        solvers,
        trials: a.trials.clone(),
        seed: a.seed,
        cmin: a.cmin,
        cmax: a.cmax,
        target: a.target,
        max_iters: a.max_iters,
    };
    let report = bench::run_bench(&cfg)?;
    let mut csv = Vec::new();
    bench::write_csv(&report, &mut csv)?;
    emit(a.out.as_deref(), &String::from_utf8(csv).expect("ascii csv"))?;
    if let Some(p) = &a.summary {
        emit(Some(p), &to_json(&report.summary))?;
    }
    for s in &report.summary {
        eprintln!(
            "size {:>6}  {:<12} trials {:>4}  mean {:.3e} s  median {:.3e} s  converged {}/{}",
            s.size, s.solver, s.trials, s.mean_time_sec, s.median_time_sec, s.converged, s.trials
        );
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> CliResult<()> {
    if a.q == 0 || a.samples == 0 {
        return Err(Failure::Input("q and samples must be positive".into()));
    }
    let mut rng = seeded(a.seed);
    let tree: RootedTree = if a.uniform {
        random_tree(a.q, &mut rng)
    } else {
        ppm_core::generate::GaltonWatsonSpec::new(a.q, a.cmin, a.cmax, a.seed)?;
        galton_watson(a.q, a.cmin, a.cmax, &mut rng)
    };
    let matrix = if a.feasible {
        feasible_matrix(&tree, a.samples, &mut rng).0
    } else {
        normal_matrix(a.q, a.samples, &mut rng)
    };
    let shape = if a.uniform {
        "uniform".to_string()
    } else {
        format!("galton-watson cmin {} cmax {}", a.cmin, a.cmax)
    };
    let header = vec![
        format!("rng {RNG_NAME} seed {}", a.seed),
        format!("tree {shape}"),
        format!("data {}", if a.feasible { "feasible" } else { "normal" }),
    ];
    fs::write(&a.out_tree, write_tree(&tree))
        .map_err(|e| Failure::Other(format!("{}: {e}", a.out_tree.display())))?;
    fs::write(&a.out_matrix, write_matrix(&matrix, &header))
        .map_err(|e| Failure::Other(format!("{}: {e}", a.out_matrix.display())))
}

fn cmd_prufer(c: &PruferCommand) -> CliResult<()> {
    match c {
        PruferCommand::Encode { tree } => {
            let t = with_file(tree, parse_tree(&read_input(tree)?))?;
            emit(None, &write_prufer(&encode_prufer(&t)))
        }
        PruferCommand::Decode { code, q } => {
            let (code_v, n) = with_file(code, parse_prufer(&read_input(code)?, *q))?;
            let t = decode_prufer(&code_v, n)?;
            emit(None, &write_tree(&t))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Project(a) => cmd_project(a),
        Command::Search(a) => cmd_search(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Prufer(c) => cmd_prufer(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Degenerate(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
