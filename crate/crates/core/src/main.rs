use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sggle::harness::{convergence_sweep_resumable, tail_probability, SweepCell};
use sggle::output::{
    read_json_lines, write_events_csv, write_fields_bin, write_json, write_json_lines,
    write_trajectory_csv, Provenance,
};
use sggle::{
    calibrate_constants, estimate_rate, parse_config, run_audit, solve_controlled_spde,
    solve_skeleton, solve_spde, verify, Error, FittedConstants, LoadedConfig, Trajectory,
};

#[derive(Parser)]
#[command(name = "sggle", version, about = "Stochastic generalized Ginzburg-Landau simulator and LDP workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run specification
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this
    #[arg(long, env = "SGGLE_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic controlled skeleton
    Skeleton(Common),
    /// Uncontrolled SPDE path at noise.eps
    Simulate(Common),
    /// Controlled SPDE path at noise.eps
    Controlled(Common),
    /// Rate-function estimate of the [event] ball
    Rate(Common),
    /// ε-convergence sweep of the controlled SPDE to the skeleton
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Continue from the per-ε checkpoint in --out
        #[arg(long)]
        resume: bool,
    },
    /// Monte Carlo tail probabilities of the [event] ball
    Tail(Common),
    /// Energy-bound audit over random controls in S^level
    Audit {
        #[command(flatten)]
        common: Common,
        /// Refit C_F and C_G on independent desk runs instead of using the config values
        #[arg(long)]
        calibrate: bool,
    },
    /// Run the invariant suite; exits 1 on any failed check
    Verify {
        #[command(flatten)]
        common: Common,
        /// Include the Monte Carlo tail checks
        #[arg(long)]
        tail: bool,
    },
}

/// Run failures split into configuration problems (exit 2) and
/// module or invariant failures (exit 1).
enum Failure {
    Usage(Error),
    Run(Error),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": kind, "message": message });
    let _ = writeln!(std::io::stderr(), "{body}");
}

struct Ctx {
    cfg: LoadedConfig,
    prov: Provenance,
    out: PathBuf,
    workers: Option<usize>,
}

impl Ctx {
    fn open(c: &Common) -> Result<Self, Failure> {
        let cfg = parse_config(&c.config).map_err(Failure::Usage)?;
        if c.workers == Some(0) {
            return Err(Failure::Usage(Error::Config("--workers must be >= 1".into())));
        }
        std::fs::create_dir_all(&c.out).map_err(|e| Failure::Usage(e.into()))?;
        let seed = cfg.seed(c.seed);
        Ok(Self {
            prov: Provenance {
                config_sha256: cfg.sha256.clone(),
                seed,
            },
            cfg,
            out: c.out.clone(),
            workers: c.workers,
        })
    }

    fn seed(&self) -> u64 {
        self.prov.seed
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, payload: &T) -> Result<(), Failure> {
        Ok(write_json(&self.path(name), &self.prov, payload)?)
    }

    fn trajectory(&self, tr: &Trajectory) -> Result<(), Failure> {
        write_trajectory_csv(&self.path("trajectory.csv"), &self.prov, tr)?;
        write_events_csv(&self.path("events.csv"), &self.prov, tr)?;
        write_fields_bin(&self.path("fields.bin"), &self.prov, tr)?;
        Ok(())
    }

    fn csv(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<(), Failure> {
        let mut text = format!("{}\n{header}\n", self.prov.comment_line());
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        std::fs::write(&tmp, text).map_err(Error::from)?;
        std::fs::rename(&tmp, path).map_err(Error::from)?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn skeleton(ctx: &Ctx) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let ctrl = c.control()?;
    let tr = solve_skeleton(&c.params, &c.basis, &c.u0, &c.jm, &ctrl, &c.grid, &c.config.solver)?;
    ctx.trajectory(&tr)
}

fn simulate(ctx: &Ctx, controlled: bool) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let eps = c.eps().map_err(Failure::Usage)?;
    let o = &c.config.solver;
    let tr = if controlled {
        let ctrl = c.control()?;
        solve_controlled_spde(&c.params, &c.basis, &c.u0, &c.jm, eps, &ctrl, &c.grid, ctx.seed(), o)?
    } else {
        solve_spde(&c.params, &c.basis, &c.u0, &c.jm, eps, &c.grid, ctx.seed(), o)?
    };
    ctx.trajectory(&tr)
}

fn rate(ctx: &Ctx) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let (event, _) = c.event().map_err(Failure::Usage)?;
    let r = estimate_rate(&event, &c.params, &c.basis, &c.jm, &c.u0, &c.grid, &c.config.rate)?;
    ctx.json("rate.json", &r)
}

const CHECKPOINT: &str = "sweep.ckpt";

fn sweep(ctx: &Ctx, resume: bool) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let ctrl = c.control()?;
    let ckpt = ctx.path(CHECKPOINT);
    let mut done: Vec<SweepCell> = Vec::new();
    if resume && ckpt.exists() {
        let (prov, cells) = read_json_lines(&ckpt)?;
        if prov != ctx.prov {
            return Err(Failure::Usage(Error::Config(
                "checkpoint was written for a different config or seed".into(),
            )));
        }
        done = cells;
    }
    let mut written = done.clone();
    let mut on_cell = |cell: &SweepCell| {
        written.push(cell.clone());
        write_json_lines(&ckpt, &ctx.prov, &written)
    };
    let rep = convergence_sweep_resumable(
        &c.params,
        &c.basis,
        &c.jm,
        &c.u0,
        &ctrl,
        &c.grid,
        &c.config.noise.sweep_eps,
        c.config.run.sweep_samples,
        ctx.seed(),
        ctx.workers,
        &done,
        &mut on_cell,
    )?;
    ctx.csv(
        "sweep.csv",
        "eps,n_samples,sup_sq,sup_sq_se,grad_sq,grad_sq_se,lp,lp_se",
        rep.cells.iter().map(|r| {
            format!(
                "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.eps, r.n_samples, r.sup_sq, r.sup_sq_se, r.grad_sq, r.grad_sq_se, r.lp, r.lp_se
            )
        }),
    )?;
    ctx.json("sweep.json", &rep)
}

fn tail(ctx: &Ctx) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let (event, _) = c.event().map_err(Failure::Usage)?;
    let rep = tail_probability(
        &c.params,
        &c.basis,
        &c.jm,
        &c.u0,
        &c.grid,
        &event,
        &c.config.noise.tail_eps,
        c.config.run.tail_samples,
        ctx.seed(),
        &c.config.rate,
        ctx.workers,
    )?;
    ctx.csv(
        "tail.csv",
        "eps,n_samples,hits,p_hat,eps_log_p,se,band_lo,band_hi,censored",
        rep.cells.iter().map(|r| {
            format!(
                "{:e},{},{},{:e},{},{},{},{:e},{}",
                r.eps,
                r.n_samples,
                r.hits,
                r.p_hat,
                opt(r.eps_log_p),
                opt(r.se),
                opt(r.band_lo),
                r.band_hi,
                r.censored
            )
        }),
    )?;
    ctx.json("tail.json", &rep)
}

fn audit(ctx: &Ctx, calibrate: bool) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let constants = if calibrate {
        let k = calibrate_constants(c, ctx.seed(), ctx.workers)?;
        ctx.json("constants.json", &k)?;
        k
    } else {
        FittedConstants {
            c_f: c.config.audit.c_f,
            c_g: c.config.audit.c_g,
        }
    };
    let cases = run_audit(c, constants, ctx.seed(), ctx.workers)?;
    ctx.csv(
        "audit.csv",
        "case,cost,item,value,bound,violated",
        cases.iter().flat_map(|case| {
            case.report.items.iter().map(move |it| {
                format!("{},{:e},{},{:e},{:e},{}", case.index, case.cost, it.name, it.value, it.bound, it.violated)
            })
        }),
    )?;
    ctx.json("audit.json", &cases)?;
    let v: usize = cases.iter().map(|c| c.report.violations()).sum();
    if v > 0 {
        return Err(Failure::Invariant(format!("{v} energy-bound violations")));
    }
    Ok(())
}

fn run_verify(ctx: &Ctx, with_tail: bool) -> Result<(), Failure> {
    let checks = verify(&ctx.cfg, ctx.seed(), ctx.workers, with_tail)?;
    ctx.json("verify.json", &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}

fn dispatch(cmd: &Command) -> Result<(), Failure> {
    let common = match cmd {
        Command::Skeleton(c) | Command::Simulate(c) | Command::Controlled(c) | Command::Rate(c) | Command::Tail(c) => c,
        Command::Sweep { common, .. } | Command::Audit { common, .. } | Command::Verify { common, .. } => common,
    };
    let ctx = Ctx::open(common)?;
    match cmd {
        Command::Skeleton(_) => skeleton(&ctx),
        Command::Simulate(_) => simulate(&ctx, false),
        Command::Controlled(_) => simulate(&ctx, true),
        Command::Rate(_) => rate(&ctx),
        Command::Sweep { resume, .. } => sweep(&ctx, *resume),
        Command::Tail(_) => tail(&ctx),
        Command::Audit { calibrate, .. } => audit(&ctx, *calibrate),
        Command::Verify { tail, .. } => run_verify(&ctx, *tail),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.render().to_string().trim());
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            report_error("invariant", &msg);
            ExitCode::from(1)
        }
    }
}
