//! `twr`: closed-form two-way relay design and BER sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use twr_core::channel::{draw_channels_split, Substream, TrialSeed};
use twr_core::harness::{self, map_ebn0_to_powers, RelayMode, SimulationConfig};
use twr_core::io::{self, ConfigFile, DesignDocument};
use twr_core::selftest::{run_selftest, Fault};
use twr_core::{design, Error, SystemConfig};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "twr", version, about = "Two-way AF MIMO relay design and BER simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design precoders, relay matrices and decoders for one channel.
    Design(DesignArgs),
    /// Monte Carlo BER sweep over Eb/N0.
    Sweep(SweepArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Default)]
struct SystemArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    nr: Option<usize>,
    /// Number of relays (comma-separated list for sweeps).
    #[arg(long, value_delimiter = ',')]
    nc: Option<Vec<usize>>,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Channel matrices as JSON (drawn from the seed if omitted).
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Set all power budgets from a single Eb/N0 value in dB.
    #[arg(long)]
    ebn0: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Eb/N0 grid START:STEP:STOP in dB.
    #[arg(long)]
    ebn0: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Symbols per trial and direction.
    #[arg(long)]
    symbols: Option<usize>,
    /// Comma-separated list: proposed, baseline:N.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Force all relay matrices to zero (diagnostic).
    #[arg(long, hide = true)]
    silent_relays: bool,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

enum Failure {
    Usage(String),
    Degenerate(String),
    Selftest(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DegenerateChannel(_) => Failure::Degenerate(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Degenerate(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Selftest(m)) => {
            eprintln!("selftest failed: {m}");
            ExitCode::from(3)
        }
    }
}

/// Flag value wins over the config value; a differing pair is reported.
fn merge<T: PartialEq + std::fmt::Debug>(name: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
    match (flag, file) {
        (Some(f), Some(c)) => {
            if f != c {
                warn!("--{name} {f:?} overrides config value {c:?}");
            }
            Some(f)
        }
        (f, c) => f.or(c),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    match path {
        Some(p) => io::load_config(p).map_err(|e| match e {
            Error::Io(err) => Failure::Usage(format!("cannot read config {}: {err}", p.display())),
            other => other.into(),
        }),
        None => Ok(ConfigFile::default()),
    }
}

/// System configuration for each requested relay count.
fn system_configs(sys: &SystemArgs, file: &ConfigFile) -> CliResult<Vec<SystemConfig>> {
    let d = SystemConfig::default();
    let n_cs = merge("nc", sys.nc.clone(), file.n_c.as_ref().map(|v| v.to_vec())).unwrap_or(vec![d.n_c]);
    if n_cs.is_empty() {
        return Err(Failure::Usage("--nc needs at least one value".into()));
    }
    let n_t = merge("nt", sys.nt, file.n_t).unwrap_or(d.n_t);
    let base = SystemConfig {
        n_t,
        n_r: merge("nr", sys.nr, file.n_r).unwrap_or(d.n_r),
        n_s: merge("ns", sys.ns, file.n_s).unwrap_or(n_t),
        sigma2_w: file.sigma2_w.unwrap_or(d.sigma2_w),
        sigma2_n1: file.sigma2_n1.unwrap_or(d.sigma2_n1),
        sigma2_n2: file.sigma2_n2.unwrap_or(d.sigma2_n2),
        p_t1: file.p_t1.unwrap_or(d.p_t1),
        p_t2: file.p_t2.unwrap_or(d.p_t2),
        p_r_tilde1: file.p_r_tilde1.unwrap_or(d.p_r_tilde1),
        p_r_tilde2: file.p_r_tilde2.unwrap_or(d.p_r_tilde2),
        n_c: n_cs[0],
    };
    n_cs.iter()
        .map(|&n_c| {
            let cfg = SystemConfig { n_c, ..base.clone() };
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_design(a: DesignArgs) -> CliResult<()> {
    let file = load_config(a.sys.config.as_deref())?;
    let mut cfgs = system_configs(&a.sys, &file)?;
    if cfgs.len() != 1 {
        return Err(Failure::Usage("design takes a single --nc value".into()));
    }
    let mut cfg = cfgs.remove(0);
    if let Some(db) = a.ebn0 {
        cfg = map_ebn0_to_powers(db, &cfg).apply(&cfg);
    }
    let channel_path = merge("channel", a.channel.clone(), file.channel.as_ref().map(PathBuf::from));
    let seed = merge("seed", a.sys.seed, file.seed).unwrap_or(DEFAULT_SEED);
    let (ch, seed_used, source) = match &channel_path {
        Some(p) => {
            let ch = io::load_channel(p).map_err(|e| match e {
                Error::Io(err) => Failure::Usage(format!("cannot read channel {}: {err}", p.display())),
                other => other.into(),
            })?;
            ch.check_against(&cfg)?;
            (ch, None, Some(p.display().to_string()))
        }
        None => {
            let s = TrialSeed::new(seed, 0);
            let ch = draw_channels_split(&cfg, &mut s.stream(Substream::FirstHop), &mut s.stream(Substream::SecondHop));
            (ch, Some(seed), None)
        }
    };
    let sol = design(&ch, &cfg)?;
    let doc = DesignDocument::new(&sol, &ch, &cfg, seed_used, source);
    write_output(a.sys.out.as_deref(), &(doc.to_json() + "\n"))
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var("TWR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("TWR_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let file = load_config(a.sys.config.as_deref())?;
    let cfgs = system_configs(&a.sys, &file)?;
    let grid_spec = merge("ebn0", a.ebn0.clone(), file.ebn0.clone()).unwrap_or(harness::DEFAULT_EBN0_GRID.into());
    let grid = io::parse_ebn0_grid(&grid_spec)?;
    let algo_spec = merge("algo", a.algo.clone(), file.algo.as_ref().map(|v| v.to_vec().join(",")))
        .unwrap_or("proposed".into());
    let algorithms = io::parse_algorithms(&algo_spec)?;
    let trials = merge("trials", a.trials, file.trials).unwrap_or(harness::DEFAULT_TRIALS);
    let symbols = merge("symbols", a.symbols, file.symbols).unwrap_or(harness::DEFAULT_SYMBOLS);
    let seed = merge("seed", a.sys.seed, file.seed).unwrap_or(DEFAULT_SEED);
    let threads = threads_from_env()?;
    if a.format == Format::Both && a.sys.out.is_none() {
        return Err(Failure::Usage("--format both needs --out".into()));
    }

    let mut sims = Vec::with_capacity(cfgs.len());
    let mut curves = Vec::new();
    for base in cfgs {
        let sim = SimulationConfig {
            base,
            ebn0_grid_db: grid.clone(),
            trials,
            symbols_per_trial: symbols,
            master_seed: seed,
            algorithms: algorithms.clone(),
            relay_mode: if a.silent_relays { RelayMode::Silent } else { RelayMode::Designed },
        };
        sim.validate()?;
        let started = std::time::Instant::now();
        let result = harness::sweep(&sim, threads)?;
        for c in &result {
            let last = c.points.last().expect("non-empty grid");
            eprintln!(
                "{} N_C={}: {} points, BER {:.3e} at {} dB",
                c.algorithm,
                c.n_c,
                c.points.len(),
                last.ber,
                last.ebn0_db
            );
        }
        eprintln!("N_C={} done in {:.1} s", sim.base.n_c, started.elapsed().as_secs_f64());
        curves.extend(result);
        sims.push(sim);
    }

    let out = a.sys.out.as_deref();
    match a.format {
        Format::Csv => write_output(out, &io::curves_to_csv(&curves, &sims)?),
        Format::Json => write_output(out, &(io::curves_to_json(&curves, &sims) + "\n")),
        Format::Both => {
            let p = out.expect("checked above");
            write_output(Some(&with_extension(p, "csv")), &io::curves_to_csv(&curves, &sims)?)?;
            write_output(Some(&with_extension(p, "json")), &(io::curves_to_json(&curves, &sims) + "\n"))
        }
    }
}

fn cmd_selftest(a: SelftestArgs) -> CliResult<()> {
    let fault = a.inject_fault.as_deref().map(str::parse::<Fault>).transpose()?;
    let started = std::time::Instant::now();
    let report = run_selftest(fault);
    print!("{report}");
    println!("{} checks in {:.2} s", report.checks.len(), started.elapsed().as_secs_f64());
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(Failure::Selftest(names.join(", ")))
    }
}
