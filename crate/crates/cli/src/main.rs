use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phia_core::bench::{self, ExperimentSpec, ReferencePolicy, ResultRow};
use phia_core::fixedpoint::{cycle_estimate, state_machine_trace};
use phia_core::model::{load_problem, to_text};
use phia_core::problems::cut_value;
use phia_core::rng::derive_seed;
use phia_core::{anneal, generate, AnnealConfig, Error, Family, GenSpec, ProblemMeta, Solver};
use serde_json::json;

mod config;

use config::SolverFlags;

#[derive(Parser, Debug)]
#[command(name = "phia", version, about = "Parallel Ising annealing with gradient-based HMC")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark instance.
    Gen {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Edge probability (maxcut_dense).
        #[arg(long)]
        edge_prob: Option<f64>,
        /// Clauses per variable (nae_3_sat).
        #[arg(long)]
        clause_ratio: Option<f64>,
        /// Probability of a zero coupling (sk_uniform).
        #[arg(long)]
        sparsity: Option<f64>,
        /// Problem file to write; metadata goes to `<out>.meta.json`. Stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Solve a problem file and print a result record.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// phia | phia-fixed | sa | gahmc
        #[arg(long, default_value = "phia")]
        solver: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        flags: SolverFlags,
        /// Write the record here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a time-to-solution experiment over a grid of sizes.
    Bench {
        #[arg(long)]
        family: Family,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        instances: usize,
        #[arg(long)]
        runs: usize,
        /// Comma-separated solver ids.
        #[arg(long, value_delimiter = ',', required = true)]
        solver: Vec<String>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        flags: SolverFlags,
        /// Largest n solved exactly for the reference energy.
        #[arg(long, default_value_t = ReferencePolicy::default().brute_force_max_n)]
        brute_force_max_n: usize,
        /// SA runs behind a best-of-SA reference.
        #[arg(long, default_value_t = ReferencePolicy::default().sa_runs)]
        reference_runs: usize,
        /// Reference SA sweeps as a multiple of the largest solver budget.
        #[arg(long, default_value_t = ReferencePolicy::default().budget_factor)]
        reference_factor: usize,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Check the annealer against exhaustive ground states.
    Verify {
        /// Instance size (at most 24).
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value = "sk_ising")]
        family: Family,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Annealer seeds per instance.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        outer_steps: usize,
        /// Exit non-zero below this success fraction.
        #[arg(long, default_value_t = 0.95)]
        min_fraction: f64,
    },
    /// Print the controller cycle ledger and closed-form estimate.
    Cycles {
        #[arg(long)]
        n: u64,
        /// Inner steps per trajectory.
        #[arg(long, short = 'l', default_value_t = 10)]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        outer_steps: u64,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Median TTS per (family, n, solver) from a bench JSONL file, plus scaling fits.
    Summary {
        input: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

/// Exit codes: 2 is clap's usage error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } => 3,
        Error::Io { .. } => 4,
        Error::InvalidConfig(_) => 5,
        Error::InvalidProblem(_) | Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => 6,
        Error::Unsupported(_) => 7,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Writes to `out` or stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable value")
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Gen { family, n, seed, edge_prob, clause_ratio, sparsity, out } => {
            let mut spec = GenSpec::new(family, n, seed);
            spec.edge_prob = edge_prob.unwrap_or(spec.edge_prob);
            spec.clause_ratio = clause_ratio.unwrap_or(spec.clause_ratio);
            spec.sparsity = sparsity.unwrap_or(spec.sparsity);
            let problem = generate(&spec)?;
            eprintln!("gen: {}", to_json(&spec));
            match out {
                Some(path) => {
                    emit(Some(&path), &to_text(&problem))?;
                    let mut meta_path = path.into_os_string();
                    meta_path.push(".meta.json");
                    let meta_path = PathBuf::from(meta_path);
                    let meta = json!({ "generator": spec, "meta": problem.meta() });
                    emit(Some(&meta_path), &(serde_json::to_string_pretty(&meta).unwrap() + "\n"))?;
                }
                None => emit(None, &to_text(&problem))?,
            }
        }
        Command::Solve { problem, solver, seed, flags, out } => {
            let p = load_problem(&problem)?;
            let spec = flags.resolve(&solver, seed)?;
            eprintln!("solve: seed={seed} config={}", to_json(&spec));
            let result = spec.solve(&p, seed)?;
            let meta = load_meta(&problem);
            let cut = meta.as_ref().and_then(|m| cut_value(&p.clone().with_meta(m.clone()), &result.best_spins).ok());
            let record = json!({
                "problem": problem,
                "n": p.n(),
                "seed": seed,
                "config": spec,
                "result": result,
                "cut_value": cut,
            });
            if verbose {
                eprintln!("best energy {} after {:.3} s", result.best_energy, result.wall_time);
            }
            emit(out.as_deref(), &(to_json(&record) + "\n"))?;
        }
        Command::Bench {
            family,
            n,
            instances,
            runs,
            solver,
            seed,
            flags,
            brute_force_max_n,
            reference_runs,
            reference_factor,
            format,
            out,
        } => {
            let solvers = solver.iter().map(|s| flags.resolve(s, seed)).collect::<Result<Vec<_>, _>>()?;
            let spec = ExperimentSpec {
                family,
                n_grid: n,
                instances,
                runs,
                solvers,
                reference: ReferencePolicy {
                    brute_force_max_n,
                    sa_runs: reference_runs,
                    budget_factor: reference_factor,
                },
                seed,
            };
            let header = to_json(&json!({ "experiment": spec }));
            eprintln!("bench: {header}");
            let rows = bench::run_experiment(&spec)?;
            let mut buf = Vec::new();
            match format {
                Format::Jsonl => {
                    writeln!(buf, "{header}").unwrap();
                    bench::write_json_lines(&rows, &mut buf)?;
                }
                Format::Csv => {
                    writeln!(buf, "# {header}").unwrap();
                    bench::write_csv(&rows, &mut buf)?;
                }
            }
            emit(out.as_deref(), &String::from_utf8(buf).expect("utf-8 output"))?;
        }
        Command::Verify { n_max, family, instances, seeds, seed, outer_steps, min_fraction } => {
            let config = AnnealConfig { outer_steps, ..AnnealConfig::default() };
            eprintln!(
                "verify: family={family} n={n_max} instances={instances} seeds={seeds} seed={seed} config={}",
                to_json(&config)
            );
            let mut hits = 0;
            let mut total = 0;
            for k in 0..instances {
                let p = generate(&GenSpec::new(family, n_max, derive_seed(seed, k as u64)))?;
                let ground = bench::brute_force_ground(&p)?;
                let tol = bench::success_tolerance(&p, ground.energy);
                for s in 0..seeds {
                    let run_seed = derive_seed(derive_seed(seed, k as u64), s as u64 + 1);
                    let r = anneal(&p, &AnnealConfig { seed: run_seed, ..config })?;
                    total += 1;
                    if r.best_energy <= ground.energy + tol {
                        hits += 1;
                    } else if verbose {
                        eprintln!("instance {k} seed {run_seed}: {} vs ground {}", r.best_energy, ground.energy);
                    }
                }
            }
            let fraction = hits as f64 / total.max(1) as f64;
            println!("{}", to_json(&json!({ "n": n_max, "family": family, "pairs": total, "hits": hits, "fraction": fraction })));
            if fraction < min_fraction {
                eprintln!("error: success fraction {fraction:.3} is below {min_fraction}");
                return Ok(ExitCode::from(8));
            }
        }
        Command::Cycles { n, steps, outer_steps, json } => {
            let estimate = cycle_estimate(n, steps)?;
            let ledger = state_machine_trace(n, steps, outer_steps)?;
            if json {
                for entry in &ledger.entries {
                    println!("{}", to_json(entry));
                }
                println!("{}", to_json(&json!({ "estimate": estimate, "ledger_total": ledger.total() })));
            } else {
                print_ledger(&ledger, &estimate);
            }
        }
        Command::Summary { input } => {
            let text = fs::read_to_string(&input).map_err(io_err(&input))?;
            let body: String = text.lines().filter(|l| !l.starts_with("{\"experiment\"")).map(|l| format!("{l}\n")).collect();
            let rows: Vec<ResultRow> = bench::read_json_lines(&body)?;
            let summary = bench::summary(&rows);
            println!("{:<14} {:>6} {:<11} {:>9} {:>9} {:>14}", "family", "n", "solver", "instances", "median_p", "median_tts_s");
            for s in &summary {
                println!(
                    "{:<14} {:>6} {:<11} {:>9} {:>9.3} {:>14.6e}",
                    s.family, s.n, s.solver, s.instances, s.median_p, s.median_tts
                );
            }
            match bench::scaling_report(&summary) {
                Ok(fits) => {
                    for f in fits {
                        println!(
                            "fit {}: exponent {:.3} (95% CI {:.3} .. {:.3})",
                            f.solver, f.exponent, f.ci_low, f.ci_high
                        );
                    }
                }
                Err(e) => println!("fit: not available ({e})"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Reads `<problem>.meta.json` if it exists.
fn load_meta(problem: &Path) -> Option<ProblemMeta> {
    let mut p = problem.as_os_str().to_owned();
    p.push(".meta.json");
    let text = fs::read_to_string(PathBuf::from(p)).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(value.get("meta")?.clone()).ok()
}

fn print_ledger(ledger: &phia_core::fixedpoint::CycleLedger, estimate: &phia_core::fixedpoint::CycleEstimate) {
    println!("n = {}, L = {}", ledger.n, ledger.inner_steps);
    println!("{:>5} {:>5}  {:<28} {:>12}", "outer", "state", "label", "cycles");
    for e in &ledger.entries {
        println!("{:>5} {:>5}  {:<28} {:>12}", e.outer_step, e.state, e.label, e.total.to_string());
    }
    println!();
    println!("T_s1  = {}", estimate.t_s1);
    println!("T_s2  = {}", estimate.t_s2);
    println!("T_d   = {}", estimate.t_d);
    println!("T_s3  = {}", estimate.t_s3);
    println!("T_est = {} Clk = {:.2} us per run", estimate.t_est, estimate.nanoseconds() / 1000.0);
    println!("ledger total over {} outer steps = {} Clk", ledger.entries.last().map_or(0, |e| e.outer_step), ledger.total());
}
