use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use qc_certify::activation_qc::CouplingMode;
use qc_certify::exec::Exec;
use qc_certify::input_qc::{InputQcOptions, InputSet};
use qc_certify::io::{reach_csv, SpecFile};
use qc_certify::network::{random_network, Activation, NeuralNetwork};
use qc_certify::oracle::{exact_max_relu, grid_reach, points_to_csv, sample_lower_bound, SampleOptions};
use qc_certify::sdp::{SolveStatus, SolverOptions};
use qc_certify::verifier::{
    bound_direction, box_directions, certify_invariance, certify_robustness, certify_safety, compass_directions,
    reach_polytope, search_invariant_eps, ClosedLoop, Status, VerificationResult, VerifyOptions,
};
use qc_certify::Error;

const EXIT_UNKNOWN: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

/// Certify properties of feed-forward neural networks with semidefinite programs.
#[derive(Debug, Parser, Serialize)]
#[command(name = "qc-certify", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Check `[x; f(x); 1]ᵀ S [x; f(x); 1] ≤ 0` over the input set for every spec matrix.
    Verify {
        #[command(flatten)]
        problem: Problem,
        /// Specification file (polytope `C y ≤ d` or explicit matrices).
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Certified upper bound on `cᵀf(x)` over the input set.
    Bound {
        #[command(flatten)]
        problem: Problem,
        /// Direction, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        c: String,
        #[command(flatten)]
        common: Common,
    },
    /// Polytope over-approximation of the reachable outputs.
    Reach {
        #[command(flatten)]
        problem: Problem,
        /// Number of equally spaced directions (two outputs), or a JSON file of direction rows.
        #[arg(long)]
        directions: Option<String>,
        /// Grid resolution per input axis for the sampled point cloud.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Point cloud CSV; defaults to `<out>.points.csv` when writing CSV.
        #[arg(long)]
        points: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Local robustness of the predicted label over an ℓ∞ ball.
    Robust {
        #[arg(long)]
        net: PathBuf,
        /// Ball center, comma separated.
        #[arg(long = "x-star", allow_hyphen_values = true)]
        x_star: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        label: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Positive invariance of an ℓ∞ ball for `x⁺ = A x + B sat(π(x))`.
    Invariant {
        /// Controller network.
        #[arg(long)]
        net: PathBuf,
        /// State matrix, rows separated by `;`, entries by `,`.
        #[arg(long = "A", allow_hyphen_values = true)]
        a: String,
        /// Input matrix, same layout as `--A`.
        #[arg(long = "B", allow_hyphen_values = true)]
        b: String,
        /// Saturation bounds `lo:hi` per control, comma separated.
        #[arg(long = "u-bounds", allow_hyphen_values = true)]
        u_bounds: String,
        #[arg(long, conflicts_with = "eps_search", required_unless_present = "eps_search")]
        eps: Option<f64>,
        /// Bisection bracket `lo,hi[,resolution]`.
        #[arg(long = "eps-search")]
        eps_search: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Reference values: exact maximum, sampled lower bound or grid image.
    Oracle {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_enum, default_value_t = OracleMode::Exact)]
        mode: OracleMode,
        /// Direction for `exact` and `sample`, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        c: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Random network with Gaussian weights and biases of standard deviation `1/sqrt(n_x)`.
    Randnet {
        /// Layer widths including input and output, comma separated.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "relu")]
        activation: String,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Serialize)]
struct Problem {
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// Input set file.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum OracleMode {
    Exact,
    Sample,
    Grid,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
struct Common {
    #[arg(long, default_value = "layerwise")]
    coupling: String,
    /// Use the global activation constraints instead of the presolve-dependent ones.
    #[arg(long)]
    no_local_qc: bool,
    /// Drop the interval bounds on post-activations.
    #[arg(long)]
    no_bounded_qc: bool,
    /// Restrict the coupling multipliers to be nonnegative.
    #[arg(long)]
    lambda_nonneg: bool,
    #[arg(long)]
    prune_pairs: bool,
    #[arg(long)]
    box_cross_terms: bool,
    #[arg(long, default_value_t = 1e-8)]
    solver_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    cert_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enumeration limit for the exact oracle.
    #[arg(long, default_value_t = 16)]
    max_unknown: usize,
    /// Run the outer loops on one thread.
    #[arg(long)]
    sequential: bool,
    /// Result file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the extension of `--out`, else json.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Keep wall-clock times in the result.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Solver(_) => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// What a command produced.
struct Report {
    code: u8,
    summary: String,
    result: Value,
    csv: Option<String>,
    extra: Vec<(PathBuf, String)>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_net(path: &Path) -> CliResult<NeuralNetwork> {
    NeuralNetwork::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_set(path: &Path) -> CliResult<InputSet> {
    InputSet::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("bad {what} entry `{}`", s.trim()))))
        .collect()
}

fn parse_matrix(text: &str, what: &str) -> CliResult<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text.split(';').map(|r| parse_list(r, what)).collect::<CliResult<_>>()?;
    let nc = rows[0].len();
    if rows.iter().any(|r| r.len() != nc) {
        return Err(usage(format!("{what} rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |i, j| rows[i][j]))
}

fn check_dim(what: &str, expected: usize, actual: usize) -> CliResult<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(usage(format!("{what} has {actual} entries, expected {expected}")))
    }
}

impl Common {
    fn options(&self) -> CliResult<VerifyOptions> {
        let coupling: CouplingMode = self.coupling.parse()?;
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(usage("--solver-tol must lie in (0, 1)"));
        }
        if !(self.cert_tol >= 0.0 && self.cert_tol < 1.0) {
            return Err(usage("--cert-tol must lie in [0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(usage("--max-iter must be positive"));
        }
        Ok(VerifyOptions {
            coupling,
            local_qc: !self.no_local_qc,
            bounded_qc: !self.no_bounded_qc,
            lambda_nonneg: self.lambda_nonneg,
            input: InputQcOptions {
                prune_pairs: self.prune_pairs,
                box_cross_terms: self.box_cross_terms,
            },
            solver: SolverOptions {
                tol: self.solver_tol,
                max_iter: self.max_iter,
            },
            cert_tol: self.cert_tol,
            exec: self.exec(),
        })
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }

    fn format(&self) -> Format {
        self.format.unwrap_or_else(|| match self.out.as_ref().and_then(|p| p.extension()) {
            Some(ext) if ext == "csv" => Format::Csv,
            _ => Format::Json,
        })
    }
}

fn status_code(res: &VerificationResult) -> u8 {
    if res.is_certified() {
        0
    } else if res.rows.iter().any(|r| r.solve_status == SolveStatus::Failed) {
        EXIT_SOLVER
    } else {
        EXIT_UNKNOWN
    }
}

fn fmt_bound(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "none".into()
    }
}

fn rows_csv(res: &VerificationResult) -> String {
    let mut out = String::from("row,verdict,solve_status,bound,raw_bound,residual,iterations\n");
    for (i, r) in res.rows.iter().enumerate() {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        out.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            json!(r.verdict).as_str().unwrap_or_default(),
            json!(r.solve_status).as_str().unwrap_or_default(),
            opt(r.bound),
            opt(r.raw_bound),
            r.residual,
            r.iterations
        ));
    }
    out
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn run_verify(problem: &Problem, spec: &Path, common: &Common) -> CliResult<Report> {
    let net = load_net(&problem.net)?;
    let set = load_set(&problem.input)?;
    let spec = SpecFile::from_json(&read(spec)?).map_err(|e| usage(format!("{}: {e}", spec.display())))?;
    let mats = spec.matrices(net.input_dim(), net.output_dim())?;
    let res = certify_safety(&net, &set, &mats, &common.options()?)?;
    let certified = res.rows.iter().filter(|r| r.certified()).count();
    Ok(Report {
        code: status_code(&res),
        summary: format!(
            "verify: {} ({certified}/{} rows certified)",
            json!(res.status).as_str().unwrap_or_default(),
            res.rows.len()
        ),
        csv: Some(rows_csv(&res)),
        result: to_value(&res),
        extra: Vec::new(),
    })
}

fn run_bound(problem: &Problem, c: &str, common: &Common) -> CliResult<Report> {
    let net = load_net(&problem.net)?;
    let set = load_set(&problem.input)?;
    let c: Vec<f64> = parse_list(c, "direction")?;
    check_dim("--c", net.output_dim(), c.len())?;
    let (d, res) = bound_direction(&net, &set, &c, &common.options()?)?;
    Ok(Report {
        code: status_code(&res),
        summary: format!("bound: cᵀf(x) ≤ {} ({})", fmt_bound(d), json!(res.status).as_str().unwrap_or_default()),
        csv: Some(reach_csv(&DMatrix::from_row_slice(1, c.len(), &c), &[d])),
        result: json!({ "bound": d, "verification": res }),
        extra: Vec::new(),
    })
}

fn directions(spec: Option<&str>, n_y: usize) -> CliResult<DMatrix<f64>> {
    let count = match spec {
        None => None,
        Some(s) => match s.parse::<usize>() {
            Ok(k) if k > 0 => Some(k),
            Ok(_) => return Err(usage("--directions must be positive")),
            Err(_) => {
                let path = Path::new(s);
                let rows: Vec<Vec<f64>> =
                    serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                if rows.is_empty() || rows.iter().any(|r| r.len() != n_y) {
                    return Err(usage(format!("{}: expected nonempty rows of length {n_y}", path.display())));
                }
                return Ok(DMatrix::from_fn(rows.len(), n_y, |i, j| rows[i][j]));
            }
        },
    };
    if n_y == 2 {
        Ok(compass_directions(count.unwrap_or(8)))
    } else {
        if count.is_some() {
            warn!("{n_y} outputs: using the {} box directions", 2 * n_y);
        }
        Ok(box_directions(n_y))
    }
}

fn run_reach(
    problem: &Problem,
    dirs: Option<&str>,
    grid: usize,
    points: Option<&Path>,
    common: &Common,
) -> CliResult<Report> {
    let net = load_net(&problem.net)?;
    let set = load_set(&problem.input)?;
    let d = directions(dirs, net.output_dim())?;
    let res = reach_polytope(&net, &set, &d, &common.options()?)?;
    let points_path = points.map(Path::to_path_buf).or_else(|| match (&common.out, common.format()) {
        (Some(out), Format::Csv) => Some(out.with_extension("points.csv")),
        _ => None,
    });
    let mut extra = Vec::new();
    if let Some(path) = points_path {
        let cloud = grid_reach(&net, &set, grid, common.exec())?;
        extra.push((path, points_to_csv(&cloud)));
    }
    let certified = res.rows.iter().filter(|r| r.certified()).count();
    Ok(Report {
        code: status_code(&res),
        summary: format!("reach: {certified}/{} half-spaces certified", res.rows.len()),
        csv: Some(reach_csv(&d, &res.bounds)),
        result: json!({
            "directions": d.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "verification": res,
        }),
        extra,
    })
}

fn run_robust(net: &Path, x_star: &str, eps: f64, label: usize, common: &Common) -> CliResult<Report> {
    let net = load_net(net)?;
    let x: Vec<f64> = parse_list(x_star, "--x-star")?;
    check_dim("--x-star", net.input_dim(), x.len())?;
    let res = certify_robustness(&net, &x, eps, label, &common.options()?)?;
    Ok(Report {
        code: status_code(&res),
        summary: format!(
            "robust: label {label} at eps {eps} {}",
            json!(res.status).as_str().unwrap_or_default()
        ),
        csv: Some(rows_csv(&res)),
        result: to_value(&res),
        extra: Vec::new(),
    })
}

fn parse_bounds(text: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for pair in text.split(',') {
        let (a, b) = pair
            .split_once(':')
            .ok_or_else(|| usage(format!("--u-bounds entry `{pair}` is not `lo:hi`")))?;
        let a: f64 = a.trim().parse().map_err(|_| usage(format!("bad bound `{a}`")))?;
        let b: f64 = b.trim().parse().map_err(|_| usage(format!("bad bound `{b}`")))?;
        if !(a < b) {
            return Err(usage(format!("--u-bounds entry `{pair}` needs lo < hi")));
        }
        lo.push(a);
        hi.push(b);
    }
    Ok((lo, hi))
}

#[allow(clippy::too_many_arguments)]
fn run_invariant(
    net: &Path,
    a: &str,
    b: &str,
    u_bounds: &str,
    eps: Option<f64>,
    eps_search: Option<&str>,
    common: &Common,
) -> CliResult<Report> {
    let controller = load_net(net)?;
    let a_sys = parse_matrix(a, "--A")?;
    let b_sys = parse_matrix(b, "--B")?;
    let (u_lo, u_hi) = parse_bounds(u_bounds)?;
    let n_x = a_sys.nrows();
    if a_sys.ncols() != n_x {
        return Err(usage("--A must be square"));
    }
    check_dim("--B rows", n_x, b_sys.nrows())?;
    check_dim("--u-bounds", b_sys.ncols(), u_lo.len())?;
    let sys = ClosedLoop {
        a_sys,
        b_sys,
        controller,
        u_lo,
        u_hi,
    };
    let opts = common.options()?;
    let (res, trials) = match (eps, eps_search) {
        (Some(eps), _) => (Some(certify_invariance(&sys, eps, None, &opts)?), None),
        (None, Some(bracket)) => {
            let v: Vec<f64> = parse_list(bracket, "--eps-search")?;
            let (lo, hi, step) = match v[..] {
                [lo, hi] => (lo, hi, (hi - lo) / 64.0),
                [lo, hi, step] => (lo, hi, step),
                _ => return Err(usage("--eps-search expects lo,hi[,resolution]")),
            };
            let s = search_invariant_eps(&sys, lo, hi, step, None, &opts)?;
            (s.best, Some(s.trials))
        }
        (None, None) => return Err(usage("one of --eps or --eps-search is required")),
    };
    let (code, summary) = match &res {
        Some(r) if r.status == Status::Certified => (0, format!("invariant: certified for eps {}", r.eps)),
        Some(r) => (status_code(&r.verification), format!("invariant: unknown for eps {}", r.eps)),
        None => (EXIT_UNKNOWN, "invariant: no eps in the bracket certified".into()),
    };
    let csv = res.as_ref().map(|r| reach_csv(&box_directions(n_x), &r.h));
    Ok(Report {
        code,
        summary,
        csv,
        result: json!({ "invariance": res, "trials": trials }),
        extra: Vec::new(),
    })
}

fn run_oracle(
    problem: &Problem,
    mode: OracleMode,
    c: Option<&str>,
    samples: usize,
    grid: usize,
    common: &Common,
) -> CliResult<Report> {
    let net = load_net(&problem.net)?;
    let set = load_set(&problem.input)?;
    let exec = common.exec();
    let direction = || -> CliResult<Vec<f64>> {
        let c: Vec<f64> = parse_list(c.ok_or_else(|| usage("--c is required for this mode"))?, "direction")?;
        check_dim("--c", net.output_dim(), c.len())?;
        Ok(c)
    };
    match mode {
        OracleMode::Exact => {
            let c = direction()?;
            let (value, cert) = exact_max_relu(&net, &set, &c, common.max_unknown, exec)?;
            Ok(Report {
                code: 0,
                summary: format!("oracle: exact max cᵀf(x) = {value:.6}"),
                csv: Some(reach_csv(&DMatrix::from_row_slice(1, c.len(), &c), &[value])),
                result: json!({ "mode": mode, "value": value, "witness": cert }),
                extra: Vec::new(),
            })
        }
        OracleMode::Sample => {
            let c = direction()?;
            let opts = SampleOptions {
                n_samples: samples,
                seed: common.seed,
                ..SampleOptions::default()
            };
            let value = sample_lower_bound(&net, &set, &c, &opts, exec)?;
            Ok(Report {
                code: 0,
                summary: format!("oracle: sampled max cᵀf(x) ≥ {value:.6}"),
                csv: Some(reach_csv(&DMatrix::from_row_slice(1, c.len(), &c), &[value])),
                result: json!({ "mode": mode, "value": value, "sampling": opts }),
                extra: Vec::new(),
            })
        }
        OracleMode::Grid => {
            let cloud = grid_reach(&net, &set, grid, exec)?;
            let pts: Vec<Vec<f64>> = cloud.iter().map(|p| p.iter().copied().collect()).collect();
            Ok(Report {
                code: 0,
                summary: format!("oracle: {} grid images", cloud.len()),
                csv: Some(points_to_csv(&cloud)),
                result: json!({ "mode": mode, "points": pts }),
                extra: Vec::new(),
            })
        }
    }
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("time_s");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(report: Report, config: Value, common: &Common) -> CliResult<u8> {
    let text = match common.format() {
        Format::Csv => report
            .csv
            .ok_or_else(|| usage("this command has no CSV output for the given result"))?,
        Format::Json => {
            let mut result = json!({ "config": config, "exit_code": report.code, "result": report.result });
            if !common.timing {
                strip_timing(&mut result);
            }
            let mut s = serde_json::to_string_pretty(&result).expect("json serializes");
            s.push('\n');
            s
        }
    };
    match &common.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    for (path, body) in &report.extra {
        write(path, body)?;
        info!("wrote {}", path.display());
    }
    eprintln!("{}", report.summary);
    Ok(report.code)
}

fn run(cli: &Cli) -> CliResult<u8> {
    let config = to_value(cli);
    let (report, common) = match &cli.command {
        Command::Verify { problem, spec, common } => (run_verify(problem, spec, common)?, common),
        Command::Bound { problem, c, common } => (run_bound(problem, c, common)?, common),
        Command::Reach {
            problem,
            directions,
            grid,
            points,
            common,
        } => (run_reach(problem, directions.as_deref(), *grid, points.as_deref(), common)?, common),
        Command::Robust {
            net,
            x_star,
            eps,
            label,
            common,
        } => (run_robust(net, x_star, *eps, *label, common)?, common),
        Command::Invariant {
            net,
            a,
            b,
            u_bounds,
            eps,
            eps_search,
            common,
        } => (run_invariant(net, a, b, u_bounds, *eps, eps_search.as_deref(), common)?, common),
        Command::Oracle {
            problem,
            mode,
            c,
            samples,
            grid,
            common,
        } => (run_oracle(problem, *mode, c.as_deref(), *samples, *grid, common)?, common),
        Command::Randnet {
            dims,
            seed,
            activation,
            out,
        } => {
            let dims: Vec<usize> = parse_list(dims, "--dims")?;
            let activation: Activation = activation.parse()?;
            let net = random_network(&dims, activation, *seed)?;
            let mut text = net.to_json();
            text.push('\n');
            match out {
                Some(path) => write(path, &text)?,
                None => print!("{text}"),
            }
            eprintln!("randnet: {} layers, {} neurons, seed {seed}", net.layers().len(), net.num_neurons());
            return Ok(0);
        }
    };
    emit(report, config, common)
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("QC_CERTIFY_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("QC_CERTIFY_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
