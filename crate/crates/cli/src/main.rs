use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dpop_core::generators::{self, PowerNetParams, RandomGraphParams};
use dpop_core::oracle::{self, OracleResult};
use dpop_core::{format, harness, pseudotree};
use dpop_core::{Dcop, EngineConfig, Mode, RootChoice, RunReport, SolveError, Status};

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "dpop",
    version,
    about = "Sparse DPOP solver for distributed constraint optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem with DPOP on the simulated network.
    Solve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the message log (one line per message) here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write every UTIL/VALUE payload in fact syntax here.
        #[arg(long)]
        facts: Option<PathBuf>,
        /// Add the wall-clock time to the report.
        #[arg(long)]
        timing: bool,
    },
    /// Solve by exhaustive enumeration.
    Oracle {
        #[command(flatten)]
        input: Input,
    },
    /// Solve with both DPOP and the oracle and compare.
    Verify {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Print the pseudo-tree built by the DFS.
    Tree {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Emit a random binary-constraint problem.
    GenRandom {
        #[command(flatten)]
        params: RandomArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a line-topology power network problem.
    GenPower {
        #[command(flatten)]
        params: PowerArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep generator parameters and tabulate results.
    Bench {
        #[command(subcommand)]
        family: BenchFamily,
    },
}

#[derive(Args)]
struct Input {
    /// Problem file in DCOP-Text format.
    #[arg(long = "in")]
    path: PathBuf,
    /// Reinterpret the problem's utilities under another mode.
    #[arg(long, value_enum)]
    mode_override: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Max,
    Min,
}

#[derive(Args)]
struct EngineArgs {
    /// `auto` or an agent id.
    #[arg(long, default_value = "auto")]
    root: String,
    /// Abort when an agent's table grows past this many rows.
    #[arg(long)]
    max_rows: Option<usize>,
}

#[derive(Args, Clone)]
struct RandomArgs {
    #[arg(long, default_value_t = 5)]
    agents: usize,
    /// Number of variables.
    #[arg(long, default_value_t = 15)]
    n: usize,
    /// Domain size.
    #[arg(long, default_value_t = 6)]
    d: usize,
    #[arg(long, default_value_t = 0.6)]
    p1: f64,
    #[arg(long, default_value_t = 0.6)]
    p2: f64,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    min_utility: i64,
    #[arg(long, default_value_t = 100, allow_negative_numbers = true)]
    max_utility: i64,
}

impl RandomArgs {
    fn params(&self, seed: u64) -> RandomGraphParams {
        RandomGraphParams {
            n_agents: self.agents,
            n_variables: self.n,
            domain_size: self.d,
            p1: self.p1,
            p2: self.p2,
            utility_range: (self.min_utility, self.max_utility),
            seed,
        }
    }
}

#[derive(Args, Clone)]
struct PowerArgs {
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    cap: i64,
    #[arg(long, default_value_t = 2)]
    generation: i64,
    #[arg(long, default_value_t = 1)]
    consumption: i64,
    #[arg(long, default_value_t = 2)]
    loss_factor: i64,
    /// Charge for line losses instead of forbidding them.
    #[arg(long)]
    soft: bool,
}

impl PowerArgs {
    fn params(&self, seed: u64) -> PowerNetParams {
        PowerNetParams {
            n_nodes: self.nodes,
            line_capacity: self.cap,
            generation_limit: self.generation,
            consumption_limit: self.consumption,
            loss_cost_factor: self.loss_factor,
            hard_no_loss: !self.soft,
            seed,
        }
    }
}

#[derive(Subcommand)]
enum BenchFamily {
    /// Random graphs, one table row per tightness value.
    Random {
        #[command(flatten)]
        params: RandomArgs,
        /// Tightness values to sweep.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
        sweep_p2: Vec<f64>,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Power networks, one table row per line capacity.
    Power {
        #[command(flatten)]
        params: PowerArgs,
        /// Line capacities to sweep.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        sweep_cap: Vec<i64>,
        #[command(flatten)]
        bench: BenchArgs,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Instances per table row.
    #[arg(long, default_value_t = 20)]
    instances: u64,
    /// Seed of the first instance; the rest follow consecutively.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Runs whose tables grow past this many rows count as unsolved.
    #[arg(long, default_value_t = 1_000_000)]
    max_rows: usize,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve {
            input,
            engine,
            report,
            log,
            facts,
            timing,
        } => {
            let problem = load(&input)?;
            let config = engine.config(&problem)?;
            let start = Instant::now();
            let result = dpop_core::solve(&problem, &config)?;
            let elapsed = start.elapsed();
            if let Some(path) = log {
                write(&path, &harness::dump_log(&problem, &result.log))?;
            }
            if let Some(path) = facts {
                let text: String = result.log.iter().map(|m| harness::render_facts(&problem, m)).collect();
                write(&path, &text)?;
            }
            let text = result.to_text(&problem, timing.then_some(elapsed.as_micros()));
            match report {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(status_code(&result))
        }
        Command::Oracle { input } => {
            let problem = load(&input)?;
            let result = oracle::brute_force(&problem)?;
            match &result {
                OracleResult::Optimal {
                    utility,
                    assignment,
                    optima,
                } => {
                    println!("status optimal");
                    println!("utility {utility}");
                    println!("assignment {}", render_assignment(&problem, assignment));
                    println!("optima {optima}");
                    Ok(0)
                }
                OracleResult::Infeasible => {
                    println!("status infeasible");
                    Ok(EXIT_INFEASIBLE)
                }
            }
        }
        Command::Verify { input, engine } => {
            let problem = load(&input)?;
            let config = engine.config(&problem)?;
            let solved = dpop_core::solve(&problem, &config)?;
            let expected = oracle::brute_force(&problem)?;
            match compare(&problem, &solved.status, &expected) {
                Ok(()) => {
                    println!("MATCH");
                    Ok(0)
                }
                Err(why) => {
                    println!("MISMATCH {why}");
                    Ok(EXIT_FAILURE)
                }
            }
        }
        Command::Tree { input, engine } => {
            let problem = load(&input)?;
            let result = dpop_core::solve(&problem, &engine.config(&problem)?)?;
            print!("{}", pseudotree::report(&result.tree, &problem));
            Ok(0)
        }
        Command::GenRandom { params, seed, out } => {
            let params = params.params(seed);
            let problem = generators::gen_random(&params)?;
            emit(&problem, &params.describe(), out.as_deref())
        }
        Command::GenPower { params, seed, out } => {
            let params = params.params(seed);
            let problem = generators::gen_power_net(&params)?;
            emit(&problem, &params.describe(), out.as_deref())
        }
        Command::Bench { family } => {
            let table = match family {
                BenchFamily::Random {
                    params,
                    sweep_p2,
                    bench,
                } => {
                    let rows = sweep_p2.iter().map(|&p2| {
                        let args = RandomArgs { p2, ..params.clone() };
                        let label = format!("p2={p2}");
                        bench_row(label, &bench, |seed| Ok(generators::gen_random(&args.params(seed))?))
                    });
                    rows.collect::<Result<Vec<_>>>()?
                }
                BenchFamily::Power {
                    params,
                    sweep_cap,
                    bench,
                } => {
                    let rows = sweep_cap.iter().map(|&cap| {
                        let args = PowerArgs { cap, ..params.clone() };
                        let label = format!("cap={cap}");
                        bench_row(label, &bench, |seed| Ok(generators::gen_power_net(&args.params(seed))?))
                    });
                    rows.collect::<Result<Vec<_>>>()?
                }
            };
            print!("{}", render_table(&table));
            Ok(0)
        }
    }
}

impl EngineArgs {
    fn config(&self, problem: &Dcop) -> Result<EngineConfig> {
        let root = match self.root.as_str() {
            "auto" => RootChoice::Auto,
            name => RootChoice::Agent(
                problem
                    .agent_id(name)
                    .with_context(|| format!("unknown agent `{name}`"))?,
            ),
        };
        Ok(EngineConfig {
            root,
            max_table_rows: self.max_rows,
        })
    }
}

fn load(input: &Input) -> Result<Dcop> {
    let text = fs::read_to_string(&input.path).with_context(|| format!("reading {}", input.path.display()))?;
    let mut problem = format::parse(&text).with_context(|| format!("{}", input.path.display()))?;
    if let Some(m) = input.mode_override {
        problem.mode = match m {
            ModeArg::Max => Mode::Maximize,
            ModeArg::Min => Mode::Minimize,
        };
    }
    let defects = problem.validate();
    if !defects.is_empty() {
        let list: Vec<String> = defects.iter().map(|d| d.to_string()).collect();
        bail!("{}: {}", input.path.display(), list.join("; "));
    }
    Ok(problem)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(problem: &Dcop, header: &str, out: Option<&Path>) -> Result<u8> {
    let text = format::print(problem, &[header.to_string()]);
    match out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn status_code(report: &RunReport) -> u8 {
    match report.status {
        Status::Optimal { .. } => 0,
        Status::Infeasible => EXIT_INFEASIBLE,
    }
}

fn render_assignment(problem: &Dcop, x: &dpop_core::Assignment) -> String {
    let pairs: Vec<String> = x
        .iter()
        .map(|(v, val)| format!("{}={val}", problem.var(v).name))
        .collect();
    pairs.join(" ")
}

fn compare(problem: &Dcop, engine: &Status, oracle: &OracleResult) -> Result<(), String> {
    match (engine, oracle) {
        (Status::Infeasible, OracleResult::Infeasible) => Ok(()),
        (
            Status::Optimal { utility, assignment },
            OracleResult::Optimal {
                utility: best,
                assignment: reference,
                optima,
            },
        ) => {
            if utility != best {
                return Err(format!("utility {utility} vs oracle {best}"));
            }
            if *optima == 1 && assignment != reference {
                return Err(format!(
                    "assignment {} vs oracle {}",
                    render_assignment(problem, assignment),
                    render_assignment(problem, reference)
                ));
            }
            Ok(())
        }
        (Status::Infeasible, _) => Err("engine infeasible, oracle found a solution".into()),
        (_, OracleResult::Infeasible) => Err("oracle infeasible, engine found a solution".into()),
    }
}

struct BenchRow {
    label: String,
    instances: u64,
    solved: u64,
    infeasible: u64,
    time: Duration,
    sim_runtime: u64,
    largest_util: u64,
    largest_dense: u64,
    total_util: u64,
}

fn bench_row(label: String, args: &BenchArgs, make: impl Fn(u64) -> Result<Dcop>) -> Result<BenchRow> {
    let mut row = BenchRow {
        label,
        instances: args.instances,
        solved: 0,
        infeasible: 0,
        time: Duration::ZERO,
        sim_runtime: 0,
        largest_util: 0,
        largest_dense: 0,
        total_util: 0,
    };
    let config = EngineConfig {
        max_table_rows: Some(args.max_rows),
        ..Default::default()
    };
    for seed in args.seed..args.seed + args.instances {
        let problem = make(seed)?;
        let start = Instant::now();
        match dpop_core::solve(&problem, &config) {
            Ok(report) => {
                row.time += start.elapsed();
                row.solved += 1;
                row.infeasible += (report.status == Status::Infeasible) as u64;
                let m = &report.metrics;
                row.sim_runtime += m.simulated_runtime;
                row.largest_util = row.largest_util.max(m.largest_util_size_units);
                row.largest_dense = row.largest_dense.max(m.largest_dense_util_size_units);
                row.total_util += m.total_util_size_units;
            }
            Err(SolveError::TableLimit { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(row)
}

fn render_table(rows: &[BenchRow]) -> String {
    let header = [
        "params",
        "solved%",
        "infeasible",
        "avg_ms",
        "avg_sim_runtime",
        "largest_util",
        "largest_dense",
        "avg_total_util",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for r in rows {
        let avg = |x: f64| {
            if r.solved == 0 {
                "-".to_string()
            } else {
                format!("{:.1}", x / r.solved as f64)
            }
        };
        cells.push(vec![
            r.label.clone(),
            format!("{:.0}", 100.0 * r.solved as f64 / r.instances.max(1) as f64),
            r.infeasible.to_string(),
            avg(r.time.as_secs_f64() * 1000.0),
            avg(r.sim_runtime as f64),
            r.largest_util.to_string(),
            r.largest_dense.to_string(),
            avg(r.total_util as f64),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|row| row[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
