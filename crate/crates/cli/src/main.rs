use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;
use sitl_planner::abstraction::AbstractionConfig;
use sitl_planner::pipeline::{compile_stage, plan_satisfies, plan_stage, Compiled, PipelineError, PipelineOptions};
use sitl_planner::plan::{ControllerSchedule, TimedPlan};
use sitl_planner::predicates::{Oracle, PredicateConfig};
use sitl_planner::rat;
use sitl_planner::semantics::{eval_formula, BooleanSignal};
use sitl_planner::sim::{check_trajectory, simulate, SimConfig};

#[derive(Parser)]
#[command(name = "sitlplan", version, about = "Timed planning for signal interval temporal logic")]
struct Cli {
    /// Project file naming the formula, predicate and abstraction files.
    #[arg(long, global = true, default_value = "project.json")]
    config: PathBuf,
    /// Output directory (overrides the project file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    lasso_bound: Option<usize>,
    /// Upper bound on the timing slack, e.g. `1` or `1/2`.
    #[arg(long, global = true)]
    eps_cap: Option<String>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile and prune; writes transducers and the pruning report.
    Compile,
    /// Search, time and check a plan; writes lasso, timings, plans and schedule.
    Plan,
    /// Run the planned schedule on the single integrator and check conformance.
    Simulate,
    /// Evaluate the formula on the plan's Boolean signal, or on a given signal.
    Monitor {
        /// Boolean signal (JSON) over the propositions `p1, p2, …`.
        #[arg(long)]
        signal: Option<PathBuf>,
    },
    /// Write DOT files for the transducers, the abstraction and the region automaton.
    ExportDot,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Project {
    formula: PathBuf,
    predicates: PathBuf,
    abstraction: Option<PathBuf>,
    #[serde(default = "default_out")]
    out: PathBuf,
    #[serde(default)]
    lasso_bound: Option<usize>,
    #[serde(default, with = "rat::serde_str_opt")]
    eps_cap: Option<rat::Rat>,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    u_max: Option<f64>,
    #[serde(default)]
    periods: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Failure with its exit code.
struct Fail(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(2, e.into())
    }
}

fn pipeline_fail(e: PipelineError) -> Fail {
    let code = match e {
        PipelineError::Parse(_) | PipelineError::Input(_) => 2,
        PipelineError::Unrealizable(_) | PipelineError::Exhausted { .. } => 3,
        PipelineError::Internal(_) => 1,
    };
    Fail(code, e.into())
}

struct Ctx {
    project: Project,
    base: PathBuf,
    out: PathBuf,
    oracle: Oracle,
    opts: PipelineOptions,
    sim: SimConfig,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Ctx, Fail> {
        let text = fs::read_to_string(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
        let project: Project = serde_json::from_str(&text).with_context(|| format!("parsing {}", cli.config.display()))?;
        let base = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = cli.out.clone().unwrap_or_else(|| base.join(&project.out));
        let pred_path = base.join(&project.predicates);
        let cfg: PredicateConfig = serde_json::from_str(
            &fs::read_to_string(&pred_path).with_context(|| format!("reading {}", pred_path.display()))?,
        )
        .with_context(|| format!("parsing {}", pred_path.display()))?;
        let seed = cli.seed.or(project.seed).unwrap_or(0);
        let oracle = Oracle::new(cfg, seed)?;
        let mut opts = PipelineOptions::default();
        if let Some(b) = cli.lasso_bound.or(project.lasso_bound) {
            opts.lasso_bound = b;
        }
        if let Some(e) = &cli.eps_cap {
            opts.eps_cap = rat::parse(e).with_context(|| format!("bad --eps-cap `{e}`"))?;
        } else if let Some(e) = &project.eps_cap {
            opts.eps_cap = e.clone();
        }
        let mut sim = SimConfig::default();
        if let Some(dt) = cli.dt.or(project.dt) {
            if dt <= 0.0 {
                return Err(anyhow::anyhow!("dt must be positive").into());
            }
            sim.dt = dt;
        }
        if let Some(u) = project.u_max {
            if u <= 0.0 {
                return Err(anyhow::anyhow!("u_max must be positive").into());
            }
            sim.u_max = u;
        }
        if let Some(p) = project.periods {
            sim.periods = p;
        }
        Ok(Ctx {
            project,
            base,
            out,
            oracle,
            opts,
            sim,
        })
    }

    fn abstraction(&self) -> Result<AbstractionConfig, Fail> {
        Ok(match &self.project.abstraction {
            Some(p) => {
                let p = self.base.join(p);
                serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => AbstractionConfig::default(),
        })
    }

    fn formula(&self) -> Result<String, Fail> {
        let p = self.base.join(&self.project.formula);
        Ok(fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
    }

    fn compile(&self) -> Result<Compiled, Fail> {
        compile_stage(&self.formula()?, &self.oracle, &self.abstraction()?).map_err(pipeline_fail)
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Fail> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let p = self.out.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }

    fn write_json<T: serde::Serialize>(&self, name: &str, v: &T) -> Result<(), Fail> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T, Fail> {
        let p = self.out.join(name);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {} (run `plan` first)", p.display()))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
    }
}

fn cmd_compile(ctx: &Ctx) -> Result<(), Fail> {
    let c = ctx.compile()?;
    ctx.write_json("tst_raw.json", &c.raw)?;
    ctx.write_json("tst_phi.json", &c.phi)?;
    ctx.write_json("tst_s.json", &c.tsts)?;
    ctx.write_json("tst_m.json", &c.product)?;
    ctx.write_json("prune_report.json", &[&c.o12, &c.o34])?;
    println!("transducer of Pr(phi): {} states, {} transitions", c.raw.states.len(), c.raw.transitions.len());
    println!("after O1/O2: {} states, {} transitions", c.phi.states.len(), c.phi.transitions.len());
    println!("abstraction: {} locations, {} transitions", c.tsts.states.len(), c.tsts.transitions.len());
    println!(
        "after O3-O5: {} states, {} transitions",
        c.product.states.len(),
        c.product.transitions.len()
    );
    Ok(())
}

fn cmd_plan(ctx: &Ctx) -> Result<(), Fail> {
    let c = ctx.compile()?;
    let p = plan_stage(&c, &ctx.oracle, &ctx.opts).map_err(pipeline_fail)?;
    ctx.write_json("lasso.json", &p.report)?;
    ctx.write_json("timing_problem.json", &p.problem)?;
    ctx.write_json("timing.json", &p.solution)?;
    ctx.write_json("plan.json", &p.plan)?;
    ctx.write_json("plan_mu.json", &p.plan_mu)?;
    ctx.write_json("run.json", &p.run)?;
    ctx.write_json("schedule.json", &p.schedule)?;
    ctx.write_json("attempts.json", &p.attempts)?;
    println!("region automaton: {} states, {} edges", p.ra.states.len(), p.ra.edges.len());
    println!("lasso {} after {} attempt(s)", p.attempts.len() - 1, p.attempts.len());
    for e in p.plan_mu.entries() {
        println!("  t = {:>6}  {}", rat::show(&e.t), e.interval_label);
    }
    println!("  period {}", rat::show(&p.plan_mu.period));
    Ok(())
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), Fail> {
    let plan: TimedPlan = ctx.read_json("plan_mu.json")?;
    let sched: ControllerSchedule = ctx.read_json("schedule.json")?;
    let traj = simulate(&plan, &sched, &ctx.oracle, &ctx.sim).map_err(|e| Fail(4, e.into()))?;
    ctx.write("trajectory.csv", &traj.to_csv(&plan, ctx.sim.dt))?;
    let chk = check_trajectory(&traj, &plan, &ctx.oracle, ctx.sim.dt).map_err(|e| Fail(4, e.into()))?;
    ctx.write_json("conformance.json", &chk)?;
    println!("checked {} samples (dt = {}), {} violations", chk.samples, ctx.sim.dt, chk.violations.len());
    if let Some(v) = chk.violations.first() {
        return Err(Fail(
            4,
            anyhow::anyhow!("first violation at t = {}: {} label `{}`", v.t, if v.instant { "instant" } else { "interval" }, v.label),
        ));
    }
    Ok(())
}

fn cmd_monitor(ctx: &Ctx, signal: Option<&Path>) -> Result<(), Fail> {
    let c = ctx.compile()?;
    let ok = match signal {
        Some(p) => {
            let sig: BooleanSignal = serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
            let v = eval_formula(&sig, &c.mitl.0, &rat::int(0))?;
            println!("Pr(phi) at 0: {v:?}");
            v == sitl_planner::semantics::Truth::True
        }
        None => {
            let plan: TimedPlan = ctx.read_json("plan.json")?;
            let ok = plan_satisfies(&plan, &c.mitl, &c.map).map_err(pipeline_fail)?;
            println!("plan satisfies Pr(phi): {ok}");
            ok
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Fail(4, anyhow::anyhow!("formula violated")))
    }
}

fn cmd_export_dot(ctx: &Ctx) -> Result<(), Fail> {
    let c = ctx.compile()?;
    ctx.write("tst_raw.dot", &c.raw.to_dot())?;
    ctx.write("tst_phi.dot", &c.phi.to_dot())?;
    ctx.write("tst_s.dot", &c.tsts.to_dot())?;
    ctx.write("tst_m.dot", &c.product.to_dot())?;
    let ra = sitl_planner::region::build_ra(&c.product);
    ctx.write("ra.dot", &ra.to_dot(&c.product))?;
    println!("wrote 5 DOT files to {}", ctx.out.display());
    Ok(())
}

/// Error chain without causes already spelled out by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = Ctx::load(&cli).and_then(|ctx| match &cli.cmd {
        Cmd::Compile => cmd_compile(&ctx),
        Cmd::Plan => cmd_plan(&ctx),
        Cmd::Simulate => cmd_simulate(&ctx),
        Cmd::Monitor { signal } => cmd_monitor(&ctx, signal.as_deref()),
        Cmd::ExportDot => cmd_export_dot(&ctx),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, e)) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(code)
        }
    }
}
