mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use periodic_spectra::catalog;
use periodic_spectra::floquet::{self, DEFAULT_FLAT_TOL};
use periodic_spectra::input::{self, ResolvedGraph};
use periodic_spectra::perturbation::Perturbation;
use periodic_spectra::truncation::{self, DEFAULT_EPS_UNWRAPPED, DEFAULT_EPS_WRAPPED, DENSE_CAP};
use periodic_spectra::weyl::{self, DEFAULT_GRID};
use periodic_spectra::{Error, Exec, GraphOracle, PeriodicGraph, PerturbedGraph, Vertex};

use output::{num, Manifest, Sink};

#[derive(Parser, Debug)]
#[command(name = "periodic-spectra", version, about = "Spectra of periodic graphs and their perturbations")]
struct Cli {
    /// Worker threads (default: number of cores).
    #[arg(long, global = true, env = "PERIODIC_SPECTRA_THREADS")]
    threads: Option<usize>,

    /// Directory receiving the output files and the manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Also write gnuplot-ready `.dat` columns.
    #[arg(long, global = true)]
    emit_plot_data: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GraphArg {
    /// Graph file (JSON) or `builtin:<name>`.
    #[arg(long)]
    graph: String,
}

#[derive(Args, Debug, Clone)]
struct PerturbedArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Perturbation file (JSON) or `builtin:<name>[,key=value...]`.
    /// Defaults to the catalog entry's own perturbation, if any.
    #[arg(long)]
    perturbation: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Band values on the uniform Brillouin-zone grid.
    Bands {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Essential spectrum as a list of intervals.
    SigmaEss {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long, default_value_t = DEFAULT_FLAT_TOL)]
        flat_tol: f64,
    },
    /// Bitmap of the unperturbed set over a 1-D or 2-D window.
    LambdaSet {
        #[command(flatten)]
        graph: PerturbedArgs,
        /// `lo,hi[,lo,hi]` per axis.
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        /// 1-based label to report.
        #[arg(long, default_value_t = 1)]
        label: usize,
    },
    /// First center in a window whose padded box lies in the unperturbed set.
    ConditionP {
        #[command(flatten)]
        graph: PerturbedArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        window: String,
    },
    /// Residuals of translated cut-off Bloch waves.
    WeylCheck {
        #[command(flatten)]
        graph: PerturbedArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value = "4,8,16,32")]
        n_list: String,
        /// Search window for centers; defaults to `[-2N-2, 2N+2]` per axis
        /// with `N` the largest n.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Eigenvalues of a finite box, compared with the essential spectrum.
    Truncate {
        #[command(flatten)]
        graph: PerturbedArgs,
        /// `lo,hi[,lo,hi...]` cell range per axis.
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: String,
        /// Close the box periodically (unperturbed graphs only).
        #[arg(long)]
        wrap: bool,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
    /// Monte Carlo estimate of the chance that a box avoids all random pendants.
    RandomTrial {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
    },
    /// Catalog of builtin graphs.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    List,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e {
                Error::Parse(_)
                | Error::IsolatedVertex { .. }
                | Error::DimensionMismatch { .. }
                | Error::LabelOutOfRange { .. }
                | Error::InvalidGraph(_)
                | Error::InvalidParameter(_)
                | Error::InvalidPerturbation(_)
                | Error::EmptyBox
                | Error::BoxTooLarge { .. } => 2,
                Error::NotInSpectrum { .. } | Error::ConditionPFailed { .. } => 3,
                _ => 4,
            },
            Failure::Io(_) => 4,
        }
    }
}

type Outcome = Result<(), Failure>;

fn parse_ranges(text: &str, what: &str) -> Result<Vec<(i64, i64)>, Error> {
    let nums = text
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| Error::Parse(format!("{what}: {t:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if nums.is_empty() || nums.len() % 2 != 0 {
        return Err(Error::Parse(format!("{what} needs lo,hi pairs, got {text:?}")));
    }
    Ok(nums.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn parse_n_list(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| Error::Parse(format!("n-list: {t:?}: {e}"))))
        .collect()
}

fn read_file(path: &str) -> std::io::Result<String> {
    std::fs::read_to_string(path)
}

fn load_graph(arg: &GraphArg) -> Result<ResolvedGraph, Error> {
    input::resolve_graph(&arg.graph, read_file)
}

struct Loaded {
    graph: ResolvedGraph,
    rule: Option<Arc<dyn Perturbation>>,
}

impl Loaded {
    fn perturbed(&self) -> PerturbedGraph {
        match &self.rule {
            Some(r) => PerturbedGraph::new(self.graph.base.clone(), r.clone()),
            None => PerturbedGraph::unperturbed(self.graph.base.clone()),
        }
    }
}

fn load_perturbed(args: &PerturbedArgs) -> Result<Loaded, Error> {
    let graph = load_graph(&args.graph)?;
    let rule = match &args.perturbation {
        Some(src) => Some(input::resolve_perturbation(src, &graph.base, read_file)?),
        None => graph.entry.as_ref().and_then(|e| e.perturbation.clone()),
    };
    Ok(Loaded { graph, rule })
}

fn vertex_json(v: &Vertex) -> Value {
    json!({"cell": v.cell.to_vec(), "label": v.label + 1})
}

fn vertex_text(v: &Vertex) -> String {
    let cell: Vec<String> = v.cell.iter().map(i64::to_string).collect();
    format!("({};{})", cell.join(";"), v.label + 1)
}

fn exec() -> Exec {
    Exec::default()
}

fn manifest_for(cli: &Cli) -> Manifest {
    let value = match &cli.command {
        Command::Bands { graph, grid } => json!({"command": "bands", "graph": graph.graph, "grid": grid}),
        Command::SigmaEss { graph, grid, flat_tol } => {
            json!({"command": "sigma-ess", "graph": graph.graph, "grid": grid, "flat_tol": flat_tol})
        }
        Command::LambdaSet { graph, window, label } => json!({
            "command": "lambda-set", "graph": graph.graph.graph, "perturbation": graph.perturbation,
            "window": window, "label": label,
        }),
        Command::ConditionP { graph, n, window } => json!({
            "command": "condition-p", "graph": graph.graph.graph, "perturbation": graph.perturbation,
            "n": n, "window": window,
        }),
        Command::WeylCheck { graph, lambda, n_list, window, grid } => json!({
            "command": "weyl-check", "graph": graph.graph.graph, "perturbation": graph.perturbation,
            "lambda": lambda, "n_list": n_list, "window": window, "grid": grid,
        }),
        Command::Truncate { graph, bounds, wrap, eps, grid } => json!({
            "command": "truncate", "graph": graph.graph.graph, "perturbation": graph.perturbation,
            "box": bounds, "wrap": wrap, "eps": eps, "grid": grid,
        }),
        Command::RandomTrial { dim, p, seed, n, trials } => json!({
            "command": "random-trial", "dim": dim, "p": p, "seed": seed, "n": n, "trials": trials,
        }),
        Command::Catalog { .. } => json!({"command": "catalog list"}),
    };
    let mut value = value;
    value["emit_plot_data"] = Value::Bool(cli.emit_plot_data);
    Manifest::new(value)
}

fn run(cli: &Cli) -> Outcome {
    let mut sink = Sink::new(&cli.out, manifest_for(cli))?;
    let plot = cli.emit_plot_data;
    match &cli.command {
        Command::Bands { graph, grid } => {
            let g = load_graph(graph)?.base;
            let table = floquet::band_table(&g, *grid, exec())?;
            let mut header: Vec<String> = (1..=g.dim()).map(|j| format!("k_{j}")).collect();
            header.extend((1..=g.cell_size()).map(|i| format!("lambda_{i}")));
            let rows: Vec<Vec<String>> =
                table.iter().map(|(k, ev)| k.iter().chain(ev).map(|x| num(*x)).collect()).collect();
            sink.csv("bands.csv", &header, &rows)?;
            if plot {
                sink.plot("bands.dat", &header, &rows)?;
            }
        }
        Command::SigmaEss { graph, grid, flat_tol } => {
            let g = load_graph(graph)?.base;
            let s = floquet::essential_spectrum_with(&g, *grid, *flat_tol, exec())?;
            let intervals: Vec<Value> =
                s.intervals.iter().map(|i| json!({"lo": i.lo, "hi": i.hi, "flat": i.flat})).collect();
            println!("{}", output::to_json(&Value::Array(intervals.clone())).trim_end());
            sink.json("sigma_ess.json", json!({"grid": grid, "flat_tol": flat_tol, "intervals": intervals}))?;
            if plot {
                let rows: Vec<Vec<String>> = s.intervals.iter().map(|i| vec![num(i.lo), num(i.hi)]).collect();
                sink.plot("sigma_ess.dat", &["lo".into(), "hi".into()], &rows)?;
            }
        }
        Command::LambdaSet { graph, window, label } => {
            let loaded = load_perturbed(graph)?;
            let p = loaded.perturbed();
            let window = parse_ranges(window, "window")?;
            if window.len() != p.dim() {
                return Err(Error::DimensionMismatch { expected: p.dim(), got: window.len() }.into());
            }
            if *label == 0 || *label > p.base().cell_size() {
                return Err(Error::LabelOutOfRange { label: *label, cell_size: p.base().cell_size() }.into());
            }
            let bitmap = p.lambda_bitmap(&window, label - 1)?;
            let lo1 = window[0].0;
            let bit = |b: bool| (b as u8).to_string();
            let (header, rows): (Vec<String>, Vec<Vec<String>>) = match window.get(1) {
                None => (
                    vec!["x_1".into(), "in_lambda".into()],
                    bitmap[0].iter().enumerate().map(|(i, &b)| vec![(lo1 + i as i64).to_string(), bit(b)]).collect(),
                ),
                Some(&(lo2, hi2)) => {
                    let mut header = vec!["x_1".to_string()];
                    header.extend((lo2..=hi2).map(|b| format!("x_2={b}")));
                    let rows = bitmap
                        .iter()
                        .enumerate()
                        .map(|(i, row)| {
                            let mut r = vec![(lo1 + i as i64).to_string()];
                            r.extend(row.iter().map(|&b| bit(b)));
                            r
                        })
                        .collect();
                    (header, rows)
                }
            };
            sink.csv("lambda_set.csv", &header, &rows)?;
            if plot {
                let lo2 = window.get(1).map_or(0, |w| w.0);
                let one_d = window.len() == 1;
                let pts: Vec<Vec<String>> = bitmap
                    .iter()
                    .enumerate()
                    .flat_map(|(i, row)| {
                        row.iter().enumerate().map(move |(j, &b)| {
                            let (a, c) = if one_d { (j, 0) } else { (i, j) };
                            vec![(lo1 + a as i64).to_string(), (lo2 + c as i64).to_string(), (b as u8).to_string()]
                        })
                    })
                    .collect();
                sink.plot("lambda_set.dat", &["x_1".into(), "x_2".into(), "in_lambda".into()], &pts)?;
            }
        }
        Command::ConditionP { graph, n, window } => {
            let p = load_perturbed(graph)?.perturbed();
            let window = parse_ranges(window, "window")?;
            let r = p.check_condition_p_with(*n, &window, exec())?;
            let report = json!({
                "n": r.n,
                "x_n": r.x_n.as_ref().map(vertex_json),
                "searched": r.searched,
                "box_bounds": [r.box_bounds.0, r.box_bounds.1],
            });
            println!("{}", output::to_json(&report).trim_end());
            sink.json("condition_p.json", report)?;
            if r.x_n.is_none() {
                return Err(Error::ConditionPFailed { n: *n }.into());
            }
        }
        Command::WeylCheck { graph, lambda, n_list, window, grid } => {
            let p = load_perturbed(graph)?.perturbed();
            let ns = parse_n_list(n_list)?;
            let nmax = ns.iter().copied().max().ok_or_else(|| Error::Parse("empty n-list".into()))? as i64;
            let window = match window {
                Some(w) => parse_ranges(w, "window")?,
                None => vec![(-2 * nmax - 2, 2 * nmax + 2); p.dim()],
            };
            let report = weyl::residual_sweep(&p, *lambda, &ns, &window, *grid, exec())?;
            let header: Vec<String> =
                ["n", "x_n", "residual", "sup_norm", "bound"].iter().map(|s| s.to_string()).collect();
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| vec![r.n.to_string(), vertex_text(&r.x_n), num(r.residual), num(r.sup_norm), num(r.bound)])
                .collect();
            sink.csv("weyl_check.csv", &header, &rows)?;
            let summary = json!({
                "lambda": report.lambda,
                "band": report.band + 1,
                "k0": report.k0,
                "lambda_band": report.lambda_band,
                "slope": report.slope,
                "rows": report.rows.iter().map(|r| json!({
                    "n": r.n,
                    "x_n": vertex_json(&r.x_n),
                    "residual": r.residual,
                    "residual_via_base": r.via_base,
                    "sup_norm": r.sup_norm,
                    "sup_norm_bound": r.sup_bound,
                    "bound": r.bound,
                    "defect_zero": r.defect_zero,
                    "c0": r.c0,
                    "big_c0": r.big_c0,
                })).collect::<Vec<_>>(),
            });
            println!("slope {}", report.slope.map(num).unwrap_or_else(|| "null".into()));
            sink.json("weyl_check.json", summary)?;
            if plot {
                let pts: Vec<Vec<String>> =
                    report.rows.iter().map(|r| vec![r.n.to_string(), num(r.residual), num(r.bound)]).collect();
                sink.plot("weyl_check.dat", &["n".into(), "residual".into(), "bound".into()], &pts)?;
            }
        }
        Command::Truncate { graph, bounds, wrap, eps, grid } => {
            let loaded = load_perturbed(graph)?;
            let bounds = parse_ranges(bounds, "box")?;
            let base: &PeriodicGraph = &loaded.graph.base;
            let perturbed = loaded.perturbed();
            let oracle: &dyn GraphOracle = if loaded.rule.is_some() { &perturbed } else { base };
            let b = truncation::truncate(oracle, &bounds, *wrap)?;
            let eps = eps.unwrap_or(if *wrap { DEFAULT_EPS_WRAPPED } else { DEFAULT_EPS_UNWRAPPED });
            let reference = floquet::essential_spectrum_with(base, *grid, DEFAULT_FLAT_TOL, exec())?;
            let (eigs, vectors) = if *wrap && b.len() > DENSE_CAP {
                (truncation::spectrum_of_wrapped_box(&b, exec())?, None)
            } else {
                let (e, v) = truncation::eigensystem_of_box(&b)?;
                (e, Some(v))
            };
            let localization = vectors.as_deref().map(|v| (&b, v));
            let report = truncation::compare_spectra(&eigs, &reference, eps, localization)?;
            let zero_modes = eigs.iter().filter(|x| x.abs() <= 1e-12).count();
            let rows: Vec<Vec<String>> = eigs.iter().enumerate().map(|(i, x)| vec![(i + 1).to_string(), num(*x)]).collect();
            let header = vec!["index".to_string(), "eigenvalue".to_string()];
            sink.csv("truncate_eigenvalues.csv", &header, &rows)?;
            sink.json(
                "truncate.json",
                json!({
                    "vertices": b.len(),
                    "dropped": b.dropped,
                    "wrapped": b.wrapped,
                    "eps": report.eps,
                    "inside_fraction": report.inside_fraction,
                    "boundary_count": report.boundary_count,
                    "boundary_outliers": report.boundary_outliers,
                    "outliers": report.outliers,
                    "zero_modes": zero_modes,
                    "reference": reference.intervals.iter().map(|i| json!({"lo": i.lo, "hi": i.hi, "flat": i.flat})).collect::<Vec<_>>(),
                }),
            )?;
            if plot {
                sink.plot("truncate.dat", &header, &rows)?;
            }
        }
        Command::RandomTrial { dim, p, seed, n, trials } => {
            let est = catalog::monte_carlo_window(*dim, *p, *seed, *n, *trials, exec())?;
            let exact = catalog::p_window_probability(*n, *p, *dim)?;
            let deviation = if est.std_error > 0.0 { Some((est.estimate - exact) / est.std_error) } else { None };
            let report = json!({
                "trials": est.trials,
                "hits": est.hits,
                "estimate": est.estimate,
                "std_error": est.std_error,
                "exact": exact,
                "deviation_in_std_errors": deviation,
            });
            println!("{}", output::to_json(&report).trim_end());
            sink.json("random_trial.json", report)?;
        }
        Command::Catalog { action: CatalogAction::List } => {
            let entries = catalog::list();
            for (name, note) in &entries {
                println!("{name:<16} {note}");
            }
            let list: Vec<Value> = entries.iter().map(|(n, d)| json!({"name": n, "description": d})).collect();
            sink.json("catalog.json", json!({"entries": list}))?;
        }
    }
    for path in &sink.written {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(4);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
