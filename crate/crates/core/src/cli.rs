//! Command-line front end. Each subcommand is also callable as a function so
//! the pipeline can be driven in-process.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::assumptions::AssumptionReport;
use crate::coleman::{solve_policy, ConsumptionPolicy, SolveTrace};
use crate::config::{Config, Economy, SimModeKind};
use crate::error::{Error, Result};
use crate::io::{self, fmt_num, ReportHeader, Table};
use crate::model::ModelSpec;
use crate::simulate::{self, WealthSample};
use crate::stats::{self, InequalityReport};
use crate::sweep::{self, Axis};

#[derive(Debug, Parser)]
#[command(name = "ifp", version, about = "Income fluctuation problem with capital income risk")]
pub struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the stability conditions; exit 0 when they hold, 1 otherwise.
    Check {
        #[command(flatten)]
        config: ConfigArg,
        /// Write `check.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the optimal consumption policy.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate wealth under a solved policy.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Inequality statistics of a sample file.
    Stats {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        sample: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Stability sweep over two parameters.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Solve, simulate and summarize the four benchmark economies.
    Reproduce {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the configuration with every default filled in.
    PrintConfig {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn load(arg: &ConfigArg) -> Result<Config> {
    match &arg.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Config::from_toml(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
        None => Ok(Config::default()),
    }
}

/// Builds the model, reporting construction failures as configuration errors.
fn model_of(config: &Config) -> Result<ModelSpec> {
    config.model().map_err(|e| match e {
        Error::Parameter(m) | Error::Domain(m) => Error::Config(m),
        other => other,
    })
}

pub fn cmd_check(config: &Config, out: Option<&Path>) -> Result<AssumptionReport> {
    let report = AssumptionReport::evaluate(&model_of(config)?)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("check.json"), report.to_json() + "\n")?;
    }
    Ok(report)
}

pub fn solve(config: &Config) -> Result<(ModelSpec, ConsumptionPolicy, SolveTrace)> {
    let model = model_of(config)?;
    let report = AssumptionReport::evaluate(&model)?;
    let (policy, trace) = solve_policy(&model, &config.asset_grid()?, &config.solve_options(), &report)?;
    Ok((model, policy, trace))
}

pub fn cmd_solve(config: &Config, out: &Path) -> Result<SolveTrace> {
    let (model, policy, trace) = solve(config)?;
    io::write_policy(out, &policy, &model, &config.hash())?;
    Ok(trace)
}

pub fn cmd_simulate(config: &Config, policy_path: &Path, out: &Path) -> Result<WealthSample> {
    let model = model_of(config)?;
    let file = io::read_policy(policy_path)?;
    file.check_model(&model)?;
    let sample = simulate::run(&file.policy, &model, &config.sim_config())?;
    io::write_sample(out, &sample, &config.hash())?;
    Ok(sample)
}

fn table1(columns: &[(&str, &InequalityReport)]) -> Table {
    let mut t = Table::new(std::iter::once("statistic").chain(columns.iter().map(|c| c.0)));
    let rows: [(&str, fn(&InequalityReport) -> f64); 3] = [
        ("tail_exponent_top5", |r| r.tail_exponent_top5),
        ("tail_exponent_top10", |r| r.tail_exponent_top10),
        ("gini", |r| r.gini),
    ];
    for (name, get) in rows {
        let mut row = vec![name.to_string()];
        row.extend(columns.iter().map(|c| fmt_num(get(c.1))));
        t.push(row);
    }
    t
}

fn table2(columns: &[(&str, &InequalityReport)]) -> Table {
    let mut t = Table::new(std::iter::once("poorest_percent").chain(columns.iter().map(|c| c.0)));
    for k in 0..20 {
        let mut row = vec![((k + 1) * 5).to_string()];
        row.extend(columns.iter().map(|c| fmt_num(c.1.wealth_shares[k])));
        t.push(row);
    }
    t
}

fn lorenz_table(report: &InequalityReport) -> Table {
    let mut t = Table::new(["population_share", "wealth_share"]);
    for &(p, l) in &report.lorenz {
        t.push(vec![fmt_num(p), fmt_num(l)]);
    }
    t
}

fn zipf_table(points: &[(f64, f64)]) -> Table {
    let mut t = Table::new(["log_wealth", "log_rank"]);
    for &(w, r) in points {
        t.push(vec![fmt_num(w), fmt_num(r)]);
    }
    t
}

/// Writes `inequality.csv`, `shares.csv`, `lorenz.csv` and `zipf.csv`.
pub fn cmd_stats(config: &Config, sample_path: &Path, out: &Path) -> Result<InequalityReport> {
    let (sample, sidecar) = io::read_sample(sample_path)?;
    let sorted = stats::sorted_ascending(&sample.assets);
    let report = InequalityReport::from_sorted(&sorted, config.stats.rank_shift)?;
    let header = ReportHeader {
        config_hash: sidecar.config_hash.clone(),
        seed: Some(sample.meta.config.seed),
    };
    fs::create_dir_all(out)?;
    let col = [("value", &report)];
    table1(&col).write(&out.join("inequality.csv"), &header)?;
    table2(&col).write(&out.join("shares.csv"), &header)?;
    lorenz_table(&report).write(&out.join("lorenz.csv"), &header)?;
    zipf_table(&stats::zipf_points_sorted(&sorted, config.stats.zipf_points)).write(&out.join("zipf.csv"), &header)?;
    Ok(report)
}

/// Writes `sweep.csv` and `frontier.csv`.
pub fn cmd_sweep(config: &Config, out: &Path) -> Result<sweep::SweepGrid> {
    let s = &config.sweep;
    let a1 = Axis::new(&s.axis1.name, s.axis1.values()).map_err(|e| Error::Config(e.to_string()))?;
    let a2 = Axis::new(&s.axis2.name, s.axis2.values()).map_err(|e| Error::Config(e.to_string()))?;
    let grid = sweep::stability_sweep(config, &a1, &a2)?;
    let header = ReportHeader {
        config_hash: config.hash(),
        seed: None,
    };
    fs::create_dir_all(out)?;
    grid.to_table().write(&out.join("sweep.csv"), &header)?;
    let frontier = sweep::stability_frontier(&grid);
    sweep::frontier_table(&grid, &frontier).write(&out.join("frontier.csv"), &header)?;
    Ok(grid)
}

/// One economy's run inside `reproduce`.
#[derive(Debug, Clone)]
pub struct EconomyRun {
    pub economy: Economy,
    pub report: InequalityReport,
    pub iterations: usize,
    pub mean_assets: f64,
}

/// Solves, simulates and summarizes each benchmark economy, writing
/// `table1.csv`, `table2.csv` and per-economy `zipf_*.csv` / `lorenz_*.csv`.
pub fn cmd_reproduce(config: &Config, out: &Path) -> Result<Vec<EconomyRun>> {
    fs::create_dir_all(out)?;
    let header = ReportHeader {
        config_hash: config.hash(),
        seed: Some(config.simulation.seed),
    };
    let mut runs = Vec::new();
    for economy in Economy::ALL {
        let c = economy.configure(config);
        let (model, policy, trace) = solve(&c)?;
        let sample = simulate::run(&policy, &model, &c.sim_config())?;
        let sorted = stats::sorted_ascending(&sample.assets);
        let report = InequalityReport::from_sorted(&sorted, c.stats.rank_shift)?;
        zipf_table(&stats::zipf_points_sorted(&sorted, c.stats.zipf_points))
            .write(&out.join(format!("zipf_{}.csv", economy.label())), &header)?;
        lorenz_table(&report).write(&out.join(format!("lorenz_{}.csv", economy.label())), &header)?;
        runs.push(EconomyRun {
            economy,
            report,
            iterations: trace.iterations(),
            mean_assets: sample.mean(),
        });
    }
    let cols: Vec<(&str, &InequalityReport)> = runs.iter().map(|r| (r.economy.label(), &r.report)).collect();
    table1(&cols).write(&out.join("table1.csv"), &header)?;
    table2(&cols).write(&out.join("table2.csv"), &header)?;
    Ok(runs)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Check { config, out } => {
            let c = load(&config)?;
            let r = cmd_check(&c, out.as_deref())?;
            println!("{}", r.to_json());
            Ok(if r.contraction_ok && r.stability_ok { 0 } else { 1 })
        }
        Command::Solve { config, out } => {
            let trace = cmd_solve(&load(&config)?, &out)?;
            println!(
                "converged in {} iterations (last distance {:e}); policy written to {}",
                trace.iterations(),
                trace.distances.last().copied().unwrap_or(0.0),
                out.display()
            );
            Ok(0)
        }
        Command::Simulate { config, policy, out } => {
            let c = load(&config)?;
            let s = cmd_simulate(&c, &policy, &out)?;
            println!("{} observations, mean assets {}", s.len(), s.mean());
            if c.simulation.mode == SimModeKind::SinglePath && s.len() >= 4 {
                let ks = simulate::split_half_ks(&s.assets)?;
                if !ks.is_stationary() {
                    eprintln!(
                        "warning: split-half KS statistic {:.4} exceeds the 1% critical value {:.4}",
                        ks.statistic, ks.critical
                    );
                }
            }
            Ok(0)
        }
        Command::Stats { config, sample, out } => {
            let r = cmd_stats(&load(&config)?, &sample, &out)?;
            println!(
                "tail exponent top 5% {:.3}, top 10% {:.3}, Gini {:.4}",
                r.tail_exponent_top5, r.tail_exponent_top10, r.gini
            );
            Ok(0)
        }
        Command::Sweep { config, out } => {
            let g = cmd_sweep(&load(&config)?, &out)?;
            let stable = g.points.iter().filter(|p| p.stable()).count();
            println!("{stable} of {} points stable", g.points.len());
            for f in sweep::stability_frontier(&g).iter().filter(|f| f.non_monotone) {
                eprintln!("warning: stability is not monotone along {} at {} = {}", g.axis2.name, g.axis1.name, f.x);
            }
            for (i, j) in sweep::continuity_warnings(&g) {
                eprintln!(
                    "warning: r_K jumps between {} = {} and the next point at {} = {}",
                    g.axis2.name, g.axis2.values[j], g.axis1.name, g.axis1.values[i]
                );
            }
            Ok(0)
        }
        Command::Reproduce { config, out } => {
            let runs = cmd_reproduce(&load(&config)?, &out)?;
            for r in &runs {
                println!(
                    "{:<9} tail5 {:.2} tail10 {:.2} gini {:.3} poorest10% {:.1} poorest50% {:.1}",
                    r.economy.label(),
                    r.report.tail_exponent_top5,
                    r.report.tail_exponent_top10,
                    r.report.gini,
                    r.report.wealth_shares[1],
                    r.report.wealth_shares[9]
                );
            }
            Ok(0)
        }
        Command::PrintConfig { config } => {
            print!("{}", load(&config)?.to_toml());
            Ok(0)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
