use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use eventkeyed_core::analysis::{draw_index_audit, placebo_experiment, sobol_first_order, variance_comparison, Check};
use eventkeyed_core::config::{ExperimentConfig, ModelKind};
use eventkeyed_core::counterfactual::{estimate_ate, run_paired, strata_census, EventFilter, PairedSpec};
use eventkeyed_core::models::{RunOptions, RunOutcome};
use eventkeyed_core::report::{
    read_report_for_world, write_ate_csv, write_json, write_replicates_csv, write_strata_csv, Report,
};

#[derive(Parser, Debug)]
#[command(name = "eventkeyed", version, about = "Event-keyed counterfactual simulation experiments")]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out`, default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fail on any duplicate event key in keyed runs.
    #[arg(long, global = true)]
    strict_ledger: bool,
    /// Record draw traces in run outputs.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One run of one scenario.
    Run,
    /// Paired replicates over the scenario pair.
    Paired,
    /// Baseline against a placebo intervention.
    Placebo,
    /// Independent, stateful-CRN and keyed-CRN estimator variances.
    Variance,
    /// First-order Sobol index of one parameter.
    Sobol,
    /// Draw-index alignment of one world under both scenarios.
    Audit {
        /// Two `run.json` files of the configured world to align instead
        /// of running it.
        #[arg(long, num_args = 2, value_names = ["RUN0", "RUN1"])]
        inputs: Option<Vec<PathBuf>>,
    },
    /// Principal-strata census over paired replicates.
    Strata,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Paired => "paired",
            Command::Placebo => "placebo",
            Command::Variance => "variance",
            Command::Sobol => "sobol",
            Command::Audit { .. } => "audit",
            Command::Strata => "strata",
        }
    }
}

struct Ctx {
    config: ExperimentConfig,
    out: PathBuf,
    command: &'static str,
}

impl Ctx {
    fn options(&self) -> RunOptions {
        RunOptions { strict_ledger: self.config.strict_ledger, trace: self.config.trace, noise: true }
    }

    fn write<T: Serialize>(&self, file: &str, checks: Vec<Check>, result: T) -> anyhow::Result<bool> {
        let report = Report::new(self.command, &self.config, checks, result);
        write_json(&self.path(file), &report)?;
        for c in report.checks.iter().filter(|c| !c.passed) {
            eprintln!("check failed: {}", c.name);
        }
        Ok(report.passed())
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn require_infection(&self) -> anyhow::Result<()> {
        if self.config.model != ModelKind::Infection {
            bail!("{} runs on the infection model only", self.command);
        }
        Ok(())
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.strict_ledger |= cli.strict_ledger;
    config.trace |= cli.trace;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    let config = load_config(&cli)?;
    let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { config, out, command: cli.command.name() };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building thread pool")?;
    pool.install(|| dispatch(&ctx, &cli.command))
}

fn create_out(ctx: &Ctx) -> anyhow::Result<()> {
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))
}

fn dispatch(ctx: &Ctx, command: &Command) -> anyhow::Result<bool> {
    let cfg = &ctx.config;
    let model = cfg.model_spec();
    match command {
        Command::Run => {
            let outcome = model.run(cfg.seed, cfg.scenario, cfg.mode, &ctx.options())?;
            create_out(ctx)?;
            let passed = ctx.write("run.json", Vec::new(), &outcome)?;
            println!("cases={} seed={} mode={}", outcome.cases, outcome.seed, outcome.mode);
            Ok(passed)
        }
        Command::Paired => {
            let spec = PairedSpec::new(&model, cfg.scenario_pair, cfg.mode)
                .with_options(RunOptions { strict_ledger: cfg.strict_ledger, ..RunOptions::outcomes_only() })
                .with_observable(cfg.observable);
            let reps = run_paired(cfg.m, &spec, cfg.seed_stream)?;
            let ate = estimate_ate(&reps)?;
            create_out(ctx)?;
            let checks = vec![Check { name: "variance identity holds".into(), passed: ate.identity_gap() <= 1e-9 }];
            let passed = ctx.write("paired.json", checks, &ate)?;
            write_replicates_csv(&ctx.path("paired.csv"), &cfg.digest(), &reps)?;
            println!(
                "m={} delta_hat={} var_delta_hat={} cov={} mode={}",
                ate.m, ate.delta_hat, ate.var_delta_hat, ate.cov, cfg.mode
            );
            Ok(passed)
        }
        Command::Placebo => {
            ctx.require_infection()?;
            let r = placebo_experiment(cfg.n_seeds, &cfg.infection, cfg.mode, cfg.seed_stream)?;
            create_out(ctx)?;
            let passed = ctx.write("placebo.json", r.checks(), &r)?;
            println!(
                "n_seeds={} n_divergent={} n_latent_divergent={} mode={}",
                r.n_seeds, r.n_divergent, r.n_latent_divergent, r.mode
            );
            Ok(passed)
        }
        Command::Variance => {
            let r = variance_comparison(cfg.m, &model, cfg.scenario_pair, cfg.observable, cfg.seed_stream)?;
            create_out(ctx)?;
            let passed = ctx.write("variance.json", r.checks(), &r)?;
            let a = &r.arms;
            write_ate_csv(
                &ctx.path("variance.csv"),
                &cfg.digest(),
                &[("independent", &a.independent), ("crn_stateful", &a.crn_stateful), ("crn_keyed", &a.crn_keyed)],
            )?;
            println!(
                "m={} var_delta_hat independent={} crn_stateful={} crn_keyed={}",
                r.m, a.independent.var_delta_hat, a.crn_stateful.var_delta_hat, a.crn_keyed.var_delta_hat
            );
            Ok(passed)
        }
        Command::Sobol => {
            ctx.require_infection()?;
            let s = &cfg.sobol;
            let r = sobol_first_order(&cfg.infection, s.parameter, &s.grid, s.m_inner, cfg.mode, cfg.seed_stream)?;
            create_out(ctx)?;
            let passed = ctx.write("sobol.json", r.checks(), &r)?;
            let s_i = r.s_i.map_or_else(|| "undefined".to_owned(), |s| s.to_string());
            println!("v_i={} total_variance={} s_i={} mode={}", r.v_i, r.total_variance, s_i, r.mode);
            Ok(passed)
        }
        Command::Audit { inputs } => {
            let (o0, o1) = match inputs {
                Some(paths) => (read_run(&paths[0], cfg)?, read_run(&paths[1], cfg)?),
                None => {
                    let opts = RunOptions { trace: true, ..ctx.options() };
                    let [s0, s1] = cfg.scenario_pair;
                    (model.run(cfg.seed, s0, cfg.mode, &opts)?, model.run(cfg.seed, s1, cfg.mode, &opts)?)
                }
            };
            let table = draw_index_audit(&o0, &o1)?;
            create_out(ctx)?;
            let passed = ctx.write("audit.json", Vec::new(), &table)?;
            println!(
                "shared={} mismatched={} shifted={} only0={} only1={} mode={}",
                table.n_shared,
                table.n_mismatched,
                table.n_shifted,
                table.only0.len(),
                table.only1.len(),
                cfg.mode
            );
            Ok(passed)
        }
        Command::Strata => {
            let spec = PairedSpec::new(&model, cfg.scenario_pair, cfg.mode)
                .with_options(RunOptions { strict_ledger: cfg.strict_ledger, trace: false, noise: true })
                .with_observable(cfg.observable);
            let reps = run_paired(cfg.m, &spec, cfg.seed_stream)?;
            let census = strata_census(&reps, &EventFilter::default())?;
            create_out(ctx)?;
            let checks = vec![
                Check { name: "observed outcomes match stratum predictions".into(), passed: census.mismatches == 0 },
                Check { name: "shared events share noise".into(), passed: census.noise_mismatches == 0 },
            ];
            let passed = ctx.write("strata.json", checks, &census)?;
            write_strata_csv(&ctx.path("strata.csv"), &cfg.digest(), &census)?;
            println!(
                "events={} always_infected={} preventable={} never_infected={} mismatches={} unmatched={}",
                census.events,
                census.always_infected,
                census.preventable,
                census.never_infected,
                census.mismatches,
                census.unmatched
            );
            Ok(passed)
        }
    }
}

/// Loads a `run.json`, refusing runs of a different world than the config's.
fn read_run(path: &Path, cfg: &ExperimentConfig) -> anyhow::Result<RunOutcome> {
    let report = read_report_for_world::<RunOutcome>(path, &cfg.world_digest())
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(report.result)
}
