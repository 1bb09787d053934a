use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zerostealth::attack::AttackPlan;
use zerostealth::scenario::{run_batch, write_artifacts, Scenario, TStarSpec};
use zerostealth::sim::intermittent_probe;
use zerostealth::{Error, Result};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NEGATIVE: u8 = 2;

/// Synthesize and verify zero-stealthy actuator attacks on multirate
/// sampled-data LTI systems.
#[derive(Parser, Debug)]
#[command(name = "zerostealth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long, env = "ZEROSTEALTH_SCENARIO", conflicts_with = "demo")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name instead of a file.
    #[arg(long, env = "ZEROSTEALTH_DEMO")]
    demo: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, env = "ZEROSTEALTH_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "ZEROSTEALTH_TOL_RANK")]
    tol_rank: Option<f64>,
    #[arg(long, env = "ZEROSTEALTH_TOL_RESIDUAL")]
    tol_residual: Option<f64>,
    #[arg(long, env = "ZEROSTEALTH_STEALTH_TOL")]
    stealth_tol: Option<f64>,
    /// Relative rounding floor for the stealth verdict (0 = absolute only).
    #[arg(long, env = "ZEROSTEALTH_STEALTH_RTOL")]
    stealth_rtol: Option<f64>,
    #[arg(long, env = "ZEROSTEALTH_FINE_STEPS")]
    fine_steps: Option<usize>,
    #[arg(long, env = "ZEROSTEALTH_CLUSTERS")]
    clusters: Option<usize>,
    /// "auto" or a rational such as 1/2.
    #[arg(long, env = "ZEROSTEALTH_T_STAR")]
    t_star: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the redundancy conditions and print the report.
    Analyze(ScenarioArgs),
    /// Build the attack plan (plan.json, plan.csv).
    Synthesize(ScenarioArgs),
    /// Simulate a plan (synthesized on the fly unless --plan is given).
    Simulate {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Simulate and verify; exits 0 only if stealthy and disruptive.
    Verify {
        #[command(flatten)]
        sc: ScenarioArgs,
        #[arg(long, conflicts_with = "zero_plan")]
        plan: Option<PathBuf>,
        /// Verify the all-zero attack instead.
        #[arg(long)]
        zero_plan: bool,
    },
    /// Run a built-in scenario end to end.
    Demo {
        /// One of: three-state, transfer-1x3, transfer-1x3-mismatch, x38-placeholder.
        name: String,
        #[arg(long, env = "ZEROSTEALTH_OUT")]
        out: Option<PathBuf>,
    },
    /// Evaluate the output error at arbitrary instants.
    Probe {
        #[command(flatten)]
        sc: ScenarioArgs,
        /// Comma-separated times in seconds.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Run several scenario files concurrently.
    Batch {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, env = "ZEROSTEALTH_OUT")]
        out: Option<PathBuf>,
    },
    /// Print a random scenario.
    Random {
        #[arg(long, env = "ZEROSTEALTH_SEED", default_value_t = 0)]
        seed: u64,
    },
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut sc = match (&self.scenario, &self.demo) {
            (Some(path), _) => Scenario::load(path)?,
            (None, Some(name)) => Scenario::demo(name)?,
            (None, None) => {
                return Err(Error::scenario(
                    "--scenario",
                    "one of --scenario or --demo is required",
                ))
            }
        };
        if let Some(v) = self.tol_rank {
            sc.tolerances.rank_rtol = v;
        }
        if let Some(v) = self.tol_residual {
            sc.tolerances.residual_atol = v;
        }
        if let Some(v) = self.stealth_tol {
            sc.stealth_tol = v;
        }
        if let Some(v) = self.stealth_rtol {
            sc.stealth_rtol = v;
        }
        if let Some(v) = self.fine_steps {
            sc.fine_steps = v;
        }
        if let Some(v) = self.clusters {
            sc.clusters = v;
        }
        if let Some(v) = &self.t_star {
            sc.t_star = TStarSpec::Single(v.clone());
        }
        sc.validate()?;
        Ok(sc)
    }
}

fn write_file(dir: &Option<PathBuf>, name: &str, body: &str) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn load_plan(path: &Path) -> Result<AttackPlan> {
    let plan: AttackPlan = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    plan.validate()?;
    Ok(plan)
}

fn plan_for(
    sc: &Scenario,
    prep: &zerostealth::scenario::Prepared,
    plan: &Option<PathBuf>,
) -> Result<AttackPlan> {
    match plan {
        Some(path) => load_plan(path),
        None => Ok(sc.synthesize(prep)?.1),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze(args) => {
            let sc = args.load()?;
            let report = sc.analyze(&sc.prepare()?)?;
            let json = serde_json::to_string_pretty(&report)?;
            write_file(&args.out, "report.json", &json)?;
            println!("{json}");
            Ok(if report.feasible() {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            })
        }
        Command::Synthesize(args) => {
            let sc = args.load()?;
            let (report, plan) = sc.synthesize(&sc.prepare()?)?;
            write_file(
                &args.out,
                "report.json",
                &serde_json::to_string_pretty(&report)?,
            )?;
            write_file(
                &args.out,
                "plan.json",
                &serde_json::to_string_pretty(&plan)?,
            )?;
            write_file(&args.out, "plan.csv", &plan.to_csv())?;
            if args.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&plan)?);
            } else {
                eprintln!(
                    "synthesized {} clusters, kernel dim {}",
                    plan.clusters, plan.kernel_dim
                );
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { sc: args, plan } => {
            let sc = args.load()?;
            let prep = sc.prepare()?;
            let plan = plan_for(&sc, &prep, &plan)?;
            let trace = sc.simulate(&prep, &plan)?;
            let csv = trace.to_csv();
            if args.out.is_some() {
                write_file(&args.out, "trace.csv", &csv)?;
            } else {
                print!("{csv}");
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            sc: args,
            plan,
            zero_plan,
        } => {
            let sc = args.load()?;
            let prep = sc.prepare()?;
            let plan = if zero_plan {
                AttackPlan::zero(&prep.grid, prep.system.n(), prep.system.p(), sc.clusters)
            } else {
                plan_for(&sc, &prep, &plan)?
            };
            let trace = sc.simulate(&prep, &plan)?;
            let v = sc.verify(&trace, &plan);
            let json = serde_json::to_string_pretty(&v)?;
            write_file(&args.out, "verification.json", &json)?;
            write_file(&args.out, "trace.csv", &trace.to_csv())?;
            println!("{json}");
            Ok(if v.passed() { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Demo { name, out } => {
            let sc = Scenario::demo(&name)?;
            let run = sc.run()?;
            if let Some(dir) = &out {
                write_file(&out, "scenario.json", &sc.to_json())?;
                write_artifacts(&run, dir)?;
            }
            println!("{}", summary(&sc.name, &Ok(run.clone())));
            Ok(match run.verification {
                Some(v) if v.passed() => EXIT_OK,
                _ => EXIT_NEGATIVE,
            })
        }
        Command::Probe { sc: args, times } => {
            let sc = args.load()?;
            let prep = sc.prepare()?;
            let (_, plan) = sc.synthesize(&prep)?;
            let trace = sc.simulate(&prep, &plan)?;
            let ys = intermittent_probe(&trace, &times)?;
            let rows: Vec<_> = times
                .iter()
                .zip(&ys)
                .map(|(t, y)| serde_json::json!({ "t": t, "y": y.as_slice(), "norm": y.norm() }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows)?);
            Ok(EXIT_OK)
        }
        Command::Batch { scenarios, out } => {
            let loaded: Vec<Scenario> = scenarios
                .iter()
                .map(|p| Scenario::load(p))
                .collect::<Result<_>>()?;
            let results = run_batch(&loaded);
            let mut all_passed = true;
            for (sc, res) in loaded.iter().zip(&results) {
                println!("{}", summary(&sc.name, res));
                match res {
                    Ok(run) => {
                        all_passed &= run.verification.as_ref().is_some_and(|v| v.passed());
                        if let Some(dir) = &out {
                            write_artifacts(run, &dir.join(&sc.name))?;
                        }
                    }
                    Err(_) => all_passed = false,
                }
            }
            Ok(if all_passed { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Random { seed } => {
            println!("{}", Scenario::random(seed).to_json());
            Ok(EXIT_OK)
        }
    }
}

fn summary(name: &str, res: &Result<zerostealth::scenario::ScenarioRun>) -> String {
    match res {
        Err(e) => format!("{name}: error: {e}"),
        Ok(run) => match &run.verification {
            None => format!(
                "{name}: infeasible: {}",
                run.report.failing_condition().unwrap_or("unknown")
            ),
            Some(v) => format!(
                "{name}: stealthy={} disruptive={} max_sampled_residual={:.3e} clusters={}{}",
                v.stealthy,
                v.disruptive,
                v.max_sampled_residual,
                v.clusters.len(),
                v.first_detection_time
                    .map(|t| format!(" first_detection_t={t:.4}"))
                    .unwrap_or_default()
            ),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Error::Infeasible(cond)) => {
            eprintln!("error: infeasible: {cond}");
            ExitCode::from(EXIT_NEGATIVE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
