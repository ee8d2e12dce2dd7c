//! Command-line front end. Exit codes: 0 success, 1 runtime error, 2 usage
//! error, 3 time limit reached.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spsched::bench::{self, ExperimentGrid, MethodSpec};
use spsched::drivers::{
    build_witness, check_witness, CutKind, Dispersion, MasterConfig, ObjectiveMode, SolveStatus, Witness,
};
use spsched::instance::{generate_with, GeneratorConfig, Instance, InstanceVariant};

#[derive(Parser)]
#[command(name = "spsched", version, about = "Exact solvers for stochastic planning and scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate {
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Makespan)]
        objective: ObjectiveArg,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an instance file, or a generated one.
    Solve {
        /// Instance JSON; generated from the size flags when absent.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, value_enum, default_value_t = MethodArg::Bcheck)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = CutsArg::Analytic)]
        cuts: CutsArg,
        #[command(flatten)]
        run: RunArgs,
        /// Write the assignment and schedules as a JSON witness.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid and write CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "10")]
        tasks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        facilities: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,5")]
        scenarios: Vec<usize>,
        /// Instances per cell; instance k uses seed `seed + k`.
        #[arg(long, default_value_t = 3)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Methods such as `bcheck-analytic`, `lbbd-nogood`, `ilshaped-cp`.
        #[arg(long, value_delimiter = ',', default_value = "bcheck-analytic,bcheck-nogood")]
        methods: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
        /// Leave wall-clock columns empty so the output is byte-stable.
        #[arg(long)]
        no_times: bool,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Check an instance file, and optionally a witness against it.
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Makespan)]
        objective: ObjectiveArg,
    },
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long, default_value_t = 10)]
    tasks: usize,
    #[arg(long, default_value_t = 2)]
    facilities: usize,
    #[arg(long, default_value_t = 1)]
    scenarios: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Makespan)]
    objective: ObjectiveArg,
    /// Seconds per run.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0.0)]
    risk_lambda: f64,
    #[arg(long, value_enum, default_value_t = DispersionArg::None)]
    dispersion: DispersionArg,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Deq,
    Lbbd,
    Bcheck,
    Ilshaped,
    IlshapedCp,
    IlshapedInt,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutsArg {
    Nogood,
    Strengthened,
    Analytic,
    AnalyticWeak,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Makespan,
    Cost,
    Tardiness,
}

#[derive(Clone, Copy, ValueEnum)]
enum DispersionArg {
    None,
    Max,
}

impl ObjectiveArg {
    fn mode(self) -> ObjectiveMode {
        match self {
            ObjectiveArg::Makespan => ObjectiveMode::Makespan,
            ObjectiveArg::Cost => ObjectiveMode::Cost,
            ObjectiveArg::Tardiness => ObjectiveMode::Tardiness,
        }
    }

    fn variant(self) -> InstanceVariant {
        match self {
            ObjectiveArg::Makespan => InstanceVariant::Makespan,
            ObjectiveArg::Cost => InstanceVariant::Cost,
            ObjectiveArg::Tardiness => InstanceVariant::Tardiness,
        }
    }
}

impl RunArgs {
    fn time_limit(&self) -> Result<Duration, String> {
        Duration::try_from_secs_f64(self.time_limit).map_err(|_| format!("bad --time-limit {}", self.time_limit))
    }

    fn dispersion(&self) -> Dispersion {
        match self.dispersion {
            DispersionArg::None => Dispersion::None,
            DispersionArg::Max => Dispersion::Max,
        }
    }

    fn config(&self, cuts: CutKind) -> Result<MasterConfig, String> {
        Ok(MasterConfig {
            lambda: self.risk_lambda,
            dispersion: self.dispersion(),
            time_limit: self.time_limit()?,
            workers: self.workers.max(1),
            ..MasterConfig::new(self.objective.mode(), cuts)
        })
    }
}

fn method_spec(method: MethodArg, cuts: CutsArg) -> MethodSpec {
    let cuts = match cuts {
        CutsArg::Nogood => "nogood",
        CutsArg::Strengthened => "strengthened",
        CutsArg::Analytic => "analytic",
        CutsArg::AnalyticWeak => "analytic-weak",
    };
    let name = match method {
        MethodArg::Deq => "deq".to_string(),
        MethodArg::Lbbd => format!("lbbd-{cuts}"),
        MethodArg::Bcheck => format!("bcheck-{cuts}"),
        MethodArg::Ilshaped => "ilshaped".to_string(),
        MethodArg::IlshapedCp => "ilshaped-cp".to_string(),
        MethodArg::IlshapedInt => "ilshaped-int".to_string(),
    };
    name.parse().expect("method names are fixed")
}

fn generated(size: &SizeArgs, objective: ObjectiveArg) -> Instance {
    let mut cfg = GeneratorConfig::new(size.facilities, size.tasks, size.scenarios, size.seed);
    cfg.variant = objective.variant();
    generate_with(cfg)
}

/// Failure with its exit code.
struct Failure(u8, String);

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure(2, msg.into())
    }

    fn runtime(msg: impl ToString) -> Self {
        Failure(1, msg.to_string())
    }
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Generate { size, objective, out } => {
            if size.tasks == 0 || size.facilities == 0 || size.scenarios == 0 {
                return Err(Failure::usage("--tasks, --facilities and --scenarios must be positive"));
            }
            let inst = generated(&size, objective);
            write_output(out.as_ref(), &inst.to_json_string())?;
            Ok(0)
        }
        Command::Solve {
            instance,
            size,
            method,
            cuts,
            run,
            out,
        } => {
            let inst = match &instance {
                Some(path) => Instance::from_file(path).map_err(Failure::runtime)?,
                None => {
                    if size.tasks == 0 || size.facilities == 0 || size.scenarios == 0 {
                        return Err(Failure::usage("--tasks, --facilities and --scenarios must be positive"));
                    }
                    generated(&size, run.objective)
                }
            };
            let spec = method_spec(method, cuts);
            let cfg = run.config(spec.cuts).map_err(Failure::usage)?;
            let res = spec.solve(&inst, &cfg).map_err(|e| match e {
                spsched::drivers::DriverError::Config(m) => Failure::usage(m),
                other => Failure::runtime(other),
            })?;
            let st = &res.stats;
            println!("method      {spec}");
            println!("status      {:?}", res.status);
            println!("objective   {}", res.objective);
            println!("lower bound {}", st.lb);
            println!("gap         {}", st.gap());
            println!("time        {:.3} s (cp {:.3} s, lp {:.3} s)", st.total_time, st.cp_time, st.lp_time);
            println!("cuts        {}", st.cuts);
            println!("calls       {}", st.calls);
            println!("nodes       {}", st.nodes);
            if let Some(a) = &res.assignment {
                println!("assignment  {:?}", a.facility_of);
                if out.is_some() {
                    let witness = build_witness(&inst, a, &cfg).map_err(Failure::runtime)?;
                    let text = serde_json::to_string_pretty(&witness).map_err(Failure::runtime)?;
                    write_output(out.as_ref(), &text)?;
                }
            }
            Ok(match res.status {
                SolveStatus::Feasible | SolveStatus::TimeLimit => 3,
                _ => 0,
            })
        }
        Command::Bench {
            tasks,
            facilities,
            scenarios,
            instances,
            seed,
            methods,
            run,
            no_times,
            out,
        } => {
            let methods = methods
                .iter()
                .map(|m| m.parse::<MethodSpec>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::usage(e.to_string()))?;
            if tasks.contains(&0) || facilities.contains(&0) || scenarios.contains(&0) || instances == 0 {
                return Err(Failure::usage("grid sizes must be positive"));
            }
            let grid = ExperimentGrid {
                tasks,
                facilities,
                scenarios,
                instances_per_cell: instances,
                methods,
                base_seed: seed,
                time_limit: run.time_limit().map_err(Failure::usage)?,
                objective: run.objective.mode(),
                lambda: run.risk_lambda,
                dispersion: run.dispersion(),
                workers: run.workers.max(1),
                record_times: !no_times,
            };
            let rows = bench::run_grid(&grid, &out).map_err(|e| match e {
                bench::BenchError::Driver(spsched::drivers::DriverError::Config(m)) => Failure::usage(m),
                other => Failure::runtime(other),
            })?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            let limited = rows.iter().any(|r| r.kind == "run" && !r.flag.is_empty());
            Ok(if limited { 3 } else { 0 })
        }
        Command::Validate {
            instance,
            witness,
            objective,
        } => {
            let inst = Instance::from_file(&instance).map_err(Failure::runtime)?;
            println!(
                "instance ok: {} facilities, {} tasks, {} scenarios",
                inst.num_facilities,
                inst.num_tasks,
                inst.num_scenarios()
            );
            if let Some(path) = witness {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
                let w: Witness = serde_json::from_str(&text).map_err(Failure::runtime)?;
                let value = check_witness(&inst, &w, objective.mode())
                    .map_err(|e| Failure::runtime(format!("witness rejected: {e}")))?;
                println!("witness ok: objective {value}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version exit 0, usage errors exit 2.
            e.exit();
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
