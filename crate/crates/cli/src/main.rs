use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracheat::config::RunConfig;
use fracheat::export::sig17;
use fracheat::field::{FieldConfig, SimulationPlan};
use fracheat::ito::{run_suite, Mutation, VerificationReport};
use fracheat::kernels::{
    fbm_kernel, fbm_kernel_dt, heat_kernel, heat_kernel_dt, m_eps_kernel, m_eps_kernel_dt, m_kernel, FbmKernelConfig,
    HeatKernelConfig, HurstParam, KernelConfig,
};
use fracheat::quadrature::{kx_table, QuadratureConfig};
use fracheat::Error;

const KERNELS: [&str; 7] = ["G", "dG", "K_H", "dK_H", "M", "M_eps", "dM_eps"];

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Stochastic heat equation with fractional-in-time noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one deterministic kernel.
    Kernel(KernelArgs),
    /// Simulate an ensemble of paths of X or X^ε at the configured x probes.
    Simulate(SimulateArgs),
    /// Tabulate K_x on the configured time grid.
    Kx(Common),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hurst: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    common: Common,
    /// One of G, dG, K_H, dK_H, M, M_eps, dM_eps.
    #[arg(long)]
    name: String,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long, default_value_t = 0.0)]
    y: f64,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Regularisation; 0 simulates X itself.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Skip the per-path CSV.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n_paths: Option<usize>,
    /// Corrupt an input on purpose (test hook): kx-halved.
    #[arg(long)]
    mutate: Option<Mutation>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(h) = common.hurst {
        cfg.hurst = h;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>, Failure> {
    let dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn kernel_value(a: &KernelArgs, hurst: HurstParam) -> fracheat::Result<f64> {
    let heat = HeatKernelConfig::default();
    let fbm = FbmKernelConfig::new(hurst);
    let m = KernelConfig::new(hurst);
    match a.name.as_str() {
        "G" => heat_kernel(a.t, a.x, a.y, &heat),
        "dG" => heat_kernel_dt(a.t, a.x, a.y, &heat),
        "K_H" => fbm_kernel(a.t, a.s, &fbm),
        "dK_H" => fbm_kernel_dt(a.t, a.s, &fbm),
        "M" => m_kernel(a.t, a.s, a.x, a.y, &m),
        "M_eps" => m_eps_kernel(a.t, a.s, a.x, a.y, a.eps, &m),
        "dM_eps" => m_eps_kernel_dt(a.t, a.s, a.x, a.y, a.eps, &m),
        other => Err(Error::Input(format!("unknown kernel '{other}', expected one of {}", KERNELS.join(", ")))),
    }
}

fn cmd_kernel(a: &KernelArgs, cfg: &RunConfig) -> Outcome {
    let v = kernel_value(a, cfg.hurst_param()?)?;
    let row = format!(
        "{},{},{},{},{},{},{}",
        a.name,
        sig17(a.t),
        sig17(a.s),
        sig17(a.x),
        sig17(a.y),
        sig17(a.eps),
        sig17(v)
    );
    let header = "name,t,s,x,y,eps,value";
    println!("{header}\n{row}");
    if a.common.out.is_some() {
        let mut f = out_file(cfg, "kernel.csv")?;
        writeln!(f, "{header}\n{row}")?;
        f.flush()?;
    }
    Ok(true)
}

fn cmd_simulate(a: &SimulateArgs, cfg: &RunConfig) -> Outcome {
    let mut cfg = cfg.clone();
    if let Some(n) = a.n_paths {
        cfg.n_paths = n;
        cfg.validate()?;
    }
    if !(a.eps >= 0.0) {
        return Err(Failure::Usage("eps must be non-negative".into()));
    }
    let field = FieldConfig {
        hurst: cfg.hurst_param()?,
        modes: cfg.modes,
    };
    let plan = SimulationPlan::new(&cfg.grid()?, &cfg.x_probes, a.eps, &field, false)?;
    for ens in plan.ensemble(cfg.n_paths, cfg.seed)? {
        let tag = format!("x{}", ens.x);
        if !a.summary_only {
            let mut f = out_file(&cfg, &format!("ensemble_{tag}.csv"))?;
            ens.write_csv(&mut f)?;
            f.flush()?;
        }
        let mut f = out_file(&cfg, &format!("summary_{tag}.json"))?;
        serde_json::to_writer_pretty(&mut f, &ens.summary()).map_err(|e| Failure::Usage(e.to_string()))?;
        writeln!(f)?;
        f.flush()?;
        println!("x={} paths={} written to {}", ens.x, ens.n_paths, cfg.out_dir);
    }
    Ok(true)
}

fn cmd_kx(cfg: &RunConfig) -> Outcome {
    let qcfg = QuadratureConfig::new(cfg.hurst_param()?);
    let grid = cfg.grid()?;
    for &x in &cfg.x_probes {
        let tab = kx_table(&grid, x, &qcfg)?;
        let mut f = out_file(cfg, &format!("kx_x{x}.csv"))?;
        tab.write_csv(&mut f)?;
        f.flush()?;
        println!("x={x} K_x(T)={} written to {}", sig17(tab.values[tab.len() - 1]), cfg.out_dir);
    }
    Ok(true)
}

fn print_table(reports: &[VerificationReport]) {
    let width = reports.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
    println!("{:<width$}  {:>12}  {:>12}  result", "check", "residual", "tolerance");
    for r in reports {
        let verdict = match (&r.error, r.pass) {
            (Some(e), _) => format!("ERROR {e}"),
            (None, true) => "pass".to_string(),
            (None, false) => "FAIL".to_string(),
        };
        println!("{:<width$}  {:>12.4e}  {:>12.4e}  {verdict}", r.check, r.residual, r.tolerance);
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{} checks, {failed} failed", reports.len());
}

fn cmd_verify(a: &VerifyArgs, cfg: &RunConfig) -> Outcome {
    let mut cfg = cfg.clone();
    if let Some(n) = a.n_paths {
        cfg.n_paths = n;
        cfg.validate()?;
    }
    let reports = run_suite(&cfg, a.mutate)?;
    let mut f = out_file(&cfg, "report.json")?;
    serde_json::to_writer_pretty(&mut f, &reports).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    print_table(&reports);
    Ok(reports.iter().all(|r| r.pass))
}

fn run(cli: Cli) -> Outcome {
    let common = match &cli.command {
        Command::Kernel(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Kx(c) => c,
        Command::Verify(a) => &a.common,
    };
    let cfg = load(common)?;
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(true);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Kernel(a) => cmd_kernel(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Kx(_) => cmd_kx(&cfg),
        Command::Verify(a) => cmd_verify(a, &cfg),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
