//! `srra`: reuse analysis, register allocation and cycle simulation for
//! loop kernels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use srra_core::alloc::{allocate, Algorithm, Allocation};
use srra_core::config::{Policy, RrAccounting, RunConfig};
use srra_core::dfg::{build_dfg, make_cg};
use srra_core::report::{self, Format};
use srra_core::{analyze_all, bundled, bundled_kernels, parse_kernel_named, Error, Kernel};

#[derive(Parser)]
#[command(name = "srra", version, about = "Scalar-replacement register allocation for affine loop kernels")]
struct Cli {
    /// TOML file with default settings.
    #[arg(long, env = "SRRA_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Register budget NR.
    #[arg(long, global = true)]
    nr: Option<u64>,
    /// Register residency model: element-level or staging-only.
    #[arg(long, global = true, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// Cut cost accounting: incremental or full-alpha.
    #[arg(long, global = true, value_parser = parse_accounting)]
    rr_accounting: Option<RrAccounting>,
    /// RAM ports per array.
    #[arg(long, global = true)]
    ports: Option<usize>,
    /// Largest iteration space the oracle may enumerate.
    #[arg(long, global = true)]
    cap: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Write the body data-flow graph in DOT form to this file (a directory
    /// when several kernels are processed).
    #[arg(long, global = true)]
    dump_dot: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-array reuse metrics.
    Analyze { kernel: String },
    /// Register allocations under the budget.
    Allocate {
        kernel: String,
        #[arg(long, value_enum, default_value_t = AlgArg::All)]
        alg: AlgArg,
    },
    /// Steady-state memory cycles of one allocation.
    Simulate {
        kernel: String,
        #[arg(long, value_enum, default_value_t = AlgArg::Cpa)]
        alg: AlgArg,
        /// Explicit registers per array, e.g. `a=16,b=16,d=30`; overrides `--alg`.
        #[arg(long)]
        beta: Option<String>,
    },
    /// The three allocators side by side; `all` runs every bundled kernel.
    Compare { kernel: String },
    /// Analytic results against the brute-force oracle; `all` for the corpus.
    Verify { kernel: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgArg {
    Fr,
    Pr,
    Cpa,
    All,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

fn parse_accounting(s: &str) -> Result<RrAccounting, String> {
    s.parse()
}

enum Failure {
    Input(String),
    Pipeline(Error),
    Disagree,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Pipeline(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Pipeline(Error::Kernel(_)) => 2,
            Failure::Pipeline(Error::Alloc(_)) | Failure::Pipeline(Error::Graph(_)) => 1,
            Failure::Pipeline(Error::Cap(_)) => 3,
            Failure::Disagree => 1,
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(nr) = cli.nr {
        cfg.nr = nr;
    }
    if let Some(p) = cli.policy {
        cfg.policy = p;
    }
    if let Some(a) = cli.rr_accounting {
        cfg.rr_accounting = a;
    }
    if let Some(p) = cli.ports {
        if p == 0 {
            return Err(Failure::Input("--ports must be at least 1".into()));
        }
        cfg.ports = p;
    }
    if let Some(c) = cli.cap {
        cfg.cap = c;
    }
    Ok(cfg)
}

/// A bundled kernel name or a path to a `.knl` file.
fn load_kernel(spec: &str) -> Result<Kernel, Failure> {
    let path = Path::new(spec);
    if path.exists() || spec.ends_with(".knl") || spec.contains('/') {
        let src = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{spec}: {e}")))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel");
        return parse_kernel_named(&src, stem).map_err(|e| Failure::Input(format!("{spec}: {e}")));
    }
    bundled(spec).map_err(|e| Failure::Input(e.to_string()))
}

fn load_kernels(spec: &str) -> Result<Vec<Kernel>, Failure> {
    if spec == "all" {
        return Ok(bundled_kernels().into_values().collect());
    }
    Ok(vec![load_kernel(spec)?])
}

/// Runs `f` on every kernel concurrently; results stay in input order.
fn par_map<T: Send>(
    kernels: &[Kernel],
    f: impl Fn(&Kernel) -> Result<T, Error> + Sync,
) -> Result<Vec<T>, Error> {
    std::thread::scope(|s| {
        let handles: Vec<_> = kernels.iter().map(|k| s.spawn(|| f(k))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn parse_beta(s: &str) -> Result<BTreeMap<String, u64>, Failure> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (name, n) = p
                .split_once('=')
                .ok_or_else(|| Failure::Input(format!("--beta entry `{p}` is not NAME=N")))?;
            let n = n.trim().parse().map_err(|_| Failure::Input(format!("--beta entry `{p}` has a bad count")))?;
            Ok((name.trim().to_string(), n))
        })
        .collect()
}

fn dump_dot(target: &Path, kernels: &[(&Kernel, Allocation)], cfg: &RunConfig) -> Result<(), Failure> {
    let write = |path: &Path, text: String| {
        std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    };
    let dir = if kernels.len() > 1 { Some(target) } else { target.parent() };
    if let Some(dir) = dir.filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    }
    for (k, alloc) in kernels {
        let t = analyze_all(k);
        let g = build_dfg(k, &cfg.latencies, &t, &alloc.beta);
        let dot = g.to_dot(&k.name, Some(&make_cg(&g)));
        let path = if kernels.len() > 1 { target.join(format!("{}.dot", k.name)) } else { target.to_path_buf() };
        write(&path, dot)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let cfg = load_config(cli)?;
    let format = match cli.format {
        FormatArg::Table => Format::Table,
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let algs = |a: AlgArg| -> Vec<Algorithm> {
        match a {
            AlgArg::Fr => vec![Algorithm::FrRa],
            AlgArg::Pr => vec![Algorithm::PrRa],
            AlgArg::Cpa => vec![Algorithm::CpaRa],
            AlgArg::All => Algorithm::ALL.to_vec(),
        }
    };
    let mut dot_inputs: Vec<(Kernel, Allocation)> = Vec::new();
    let out = match &cli.command {
        Command::Analyze { kernel } => {
            let k = load_kernel(kernel)?;
            let r = report::analyze(&k)?;
            dot_inputs.push((k.clone(), Allocation::baseline(&analyze_all(&k))));
            r.render(format)
        }
        Command::Allocate { kernel, alg } => {
            let k = load_kernel(kernel)?;
            let r = report::allocate_report(&k, &algs(*alg), &cfg)?;
            if let Some(last) = r.allocations.last() {
                dot_inputs.push((k.clone(), last.clone()));
            }
            r.render(format)
        }
        Command::Simulate { kernel, alg, beta } => {
            let k = load_kernel(kernel)?;
            let t = analyze_all(&k);
            let alloc = match beta {
                Some(b) => Allocation::manual(&t, &parse_beta(b)?).map_err(Error::from)?,
                None => {
                    if *alg == AlgArg::All {
                        return Err(Failure::Input("simulate takes one of fr, pr, cpa".into()));
                    }
                    allocate(algs(*alg)[0], &k, &t, cfg.nr, &cfg.latencies, cfg.rr_accounting)
                        .map_err(Error::from)?
                }
            };
            let r = report::simulate_allocation(&k, &t, &alloc, &cfg);
            dot_inputs.push((k.clone(), alloc));
            r.render(format)
        }
        Command::Compare { kernel } => {
            let ks = load_kernels(kernel)?;
            let reports = par_map(&ks, |k| report::compare(k, &cfg))?;
            for k in ks {
                let t = analyze_all(&k);
                let a = allocate(Algorithm::CpaRa, &k, &t, cfg.nr, &cfg.latencies, cfg.rr_accounting)
                    .map_err(Error::from)?;
                dot_inputs.push((k, a));
            }
            if reports.len() == 1 {
                reports[0].render(format)
            } else {
                report::render_compares(&reports, format)
            }
        }
        Command::Verify { kernel } => {
            let ks = load_kernels(kernel)?;
            let reports = par_map(&ks, |k| report::verify(k, &cfg))?;
            let ok = reports.iter().all(|r| r.all_agree);
            let text = if format == Format::Json {
                if reports.len() == 1 {
                    report::to_json(&reports[0])
                } else {
                    report::to_json(&reports)
                }
            } else {
                reports.iter().map(|r| r.render(format)).collect::<Vec<_>>().join("\n")
            };
            if !ok {
                print!("{text}");
                return Err(Failure::Disagree);
            }
            for k in ks {
                dot_inputs.push((k.clone(), Allocation::baseline(&analyze_all(&k))));
            }
            text
        }
    };
    if let Some(target) = &cli.dump_dot {
        let refs: Vec<(&Kernel, Allocation)> = dot_inputs.iter().map(|(k, a)| (k, a.clone())).collect();
        dump_dot(target, &refs, &cfg)?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Input(msg) => eprintln!("error: {msg}"),
                Failure::Pipeline(e) => eprintln!("error: {e}"),
                Failure::Disagree => eprintln!("error: analytic results disagree with the oracle"),
            }
            ExitCode::from(f.code())
        }
    }
}
