use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use katokit::cli::{self, Check, CheckSpec, ExperimentManifest, Report, RunOptions};
use katokit::geometry::{canonical_point, ManifoldModel, Point};
use katokit::stochastics::{simulate, Scheme, WalkConfig};
use katokit::{Error, Result, Verdict};

#[derive(Parser)]
#[command(name = "katokit", version, about = "Heat kernel, Kato-class and Feynman-Kac checks on model manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs checks concurrently; results keep declaration order.
    #[arg(long)]
    parallel: bool,
    /// Report path; defaults to the manifest's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies the tolerances the CLI sets (z-score limits, residual tolerances).
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Directory for per-path CSV files of Feynman-Kac ensembles.
    #[arg(long)]
    dump_paths: Option<PathBuf>,
    /// Directory for CSV plot series (t vs N(t), t vs norm, ...).
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct SingleCheck {
    #[arg(long, default_value = "euclidean:3")]
    manifold: String,
    #[arg(long)]
    potential: Option<String>,
    /// Check parameter as KEY=VALUE, VALUE in TOML syntax (repeatable).
    #[arg(long = "param", short = 'p', value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Expected verdict (PASS, FAIL or INCONCLUSIVE) for negative controls.
    #[arg(long)]
    expect: Option<String>,
    #[arg(long, default_value = "auto")]
    kernel_method: String,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Runs an experiment manifest.
    Run {
        manifest: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Runs a built-in battery.
    Battery {
        name: String,
        /// Prints the battery manifest instead of running it.
        #[arg(long)]
        print: bool,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Lists the built-in batteries.
    ListBatteries,
    /// Simulates Brownian paths and prints the ensemble summary.
    Simulate {
        #[arg(long, default_value = "euclidean:3")]
        manifold: String,
        /// Start point as comma-separated chart coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `geodesic` or `euler`.
        #[arg(long, default_value = "geodesic")]
        scheme: String,
        /// Record times, comma separated.
        #[arg(long, value_delimiter = ',')]
        record: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV file receiving the first 100 paths.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
    },
    KernelCheck(SingleCheck),
    KatoNorm(SingleCheck),
    IsKato(SingleCheck),
    HolderCheck(SingleCheck),
    ControlPair(SingleCheck),
    FkVerify(SingleCheck),
    MviSweep(SingleCheck),
    HeatBound(SingleCheck),
    FeynmanKac(SingleCheck),
    ProjectCheck(SingleCheck),
    KatoExponential(SingleCheck),
    SemigroupBound(SingleCheck),
    RieszThorin(SingleCheck),
    Coulomb(SingleCheck),
}

fn param_table(params: &[String]) -> Result<toml::Table> {
    let mut table = toml::Table::new();
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::InvalidManifest(format!("parameter `{p}` is not KEY=VALUE")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        table.insert(k.trim().to_string(), value);
    }
    Ok(table)
}

fn single_manifest(kind: &str, args: &SingleCheck) -> Result<ExperimentManifest> {
    let mut spec = CheckSpec::new(Check::from_table(kind, param_table(&args.params)?)?);
    spec.expect = match args.expect.as_deref() {
        None => None,
        Some("PASS") => Some(Verdict::Pass),
        Some("FAIL") => Some(Verdict::Fail),
        Some("INCONCLUSIVE") => Some(Verdict::Inconclusive),
        Some(other) => return Err(Error::InvalidManifest(format!("unknown verdict `{other}`"))),
    };
    let mut m = ExperimentManifest::empty(&args.manifold);
    m.kernel.method = args.kernel_method.clone();
    m.potential = args.potential.clone();
    m.checks.push(spec);
    m.validate()?;
    Ok(m)
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn execute(manifest: ExperimentManifest, flags: &RunFlags) -> Result<Report> {
    let opts = RunOptions {
        seed: flags.seed,
        parallel: flags.parallel,
        tolerance_scale: flags.tolerance_scale,
        dump_paths: flags.dump_paths.clone(),
    };
    let report = cli::run(&manifest, &opts);
    let out = flags.out.clone().or_else(|| manifest.output.clone());
    write_output(out.as_ref(), &report.to_json()?)?;
    if let Some(dir) = &flags.plots {
        report.write_plots(dir)?;
    }
    eprint!("{}", report.summary());
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn simulate_command(
    manifold: &str,
    start: Option<Vec<f64>>,
    t: f64,
    step: f64,
    paths: usize,
    seed: u64,
    scheme: &str,
    record: &[f64],
    out: Option<&PathBuf>,
    dump: Option<&PathBuf>,
) -> Result<()> {
    let model: ManifoldModel = manifold.parse()?;
    let start = start.map(Point::new).unwrap_or_else(|| canonical_point(&model));
    let mut config = WalkConfig::new(&model, start, t, step, paths, seed);
    config.scheme = scheme.parse::<Scheme>()?;
    let ens = simulate(&config, record)?;
    if let Some(path) = dump {
        ens.write_paths_csv(std::io::BufWriter::new(std::fs::File::create(path)?), 100, 1)?;
    }
    write_output(out, &serde_json::to_string_pretty(&ens.summary())?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = |c: &Command| -> Option<&'static str> {
        Some(match c {
            Command::KernelCheck(_) => "kernel-check",
            Command::KatoNorm(_) => "kato-norm",
            Command::IsKato(_) => "is-kato",
            Command::HolderCheck(_) => "holder-check",
            Command::ControlPair(_) => "control-pair",
            Command::FkVerify(_) => "fk-verify",
            Command::MviSweep(_) => "mvi-sweep",
            Command::HeatBound(_) => "heat-bound",
            Command::FeynmanKac(_) => "feynman-kac",
            Command::ProjectCheck(_) => "project-check",
            Command::KatoExponential(_) => "kato-exponential",
            Command::SemigroupBound(_) => "semigroup-bound",
            Command::RieszThorin(_) => "riesz-thorin",
            Command::Coulomb(_) => "coulomb",
            _ => return None,
        })
    };
    let result: Result<i32> = match &cli.command {
        Command::Run { manifest, flags } => {
            ExperimentManifest::from_path(manifest).and_then(|m| execute(m, flags)).map(|r| r.exit_code())
        }
        Command::Battery { name, print, flags } => cli::battery(name).and_then(|m| {
            if *print {
                print!("{}", cli::BATTERIES.iter().find(|b| b.name == name).map_or("", |b| b.manifest));
                Ok(0)
            } else {
                execute(m, flags).map(|r| r.exit_code())
            }
        }),
        Command::ListBatteries => {
            print!("{}", cli::list_batteries());
            Ok(0)
        }
        Command::Simulate {
            manifold,
            start,
            t,
            step,
            paths,
            seed,
            scheme,
            record,
            out,
            dump_paths,
        } => simulate_command(manifold, start.clone(), *t, *step, *paths, *seed, scheme, record, out.as_ref(), dump_paths.as_ref())
            .map(|_| 0),
        Command::KernelCheck(a)
        | Command::KatoNorm(a)
        | Command::IsKato(a)
        | Command::HolderCheck(a)
        | Command::ControlPair(a)
        | Command::FkVerify(a)
        | Command::MviSweep(a)
        | Command::HeatBound(a)
        | Command::FeynmanKac(a)
        | Command::ProjectCheck(a)
        | Command::KatoExponential(a)
        | Command::SemigroupBound(a)
        | Command::RieszThorin(a)
        | Command::Coulomb(a) => {
            let k = kind(&cli.command).expect("check subcommand");
            single_manifest(k, a).and_then(|m| execute(m, &a.flags)).map(|r| r.exit_code())
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::error_exit_code(&e) as u8)
        }
    }
}
