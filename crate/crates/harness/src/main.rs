//! `fdeh` command-line interface.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fdeh::config::{Config, Method};
use fdeh::montecarlo::{compare_methods, gains_csv, results_csv, run_monte_carlo, RunOptions, Scenario};
use fdeh::output::{write_file, write_with_sidecar};
use fdeh::{exit, HarnessError, MonteCarloReport};
use fdeh_core::allocation::{allocate_antennas_traced, AllocationStep};
use fdeh_core::units::dbm_to_watts;
use fdeh_core::{partition, sample_channel, sca_precoding, ChannelRealization, Execution, PrecodingError, SubsystemConfig};
use fdeh_drl::{curve_csv, train, DrlError, PolicyArtifact, TrainOptions};

#[derive(Parser, Debug)]
#[command(name = "fdeh", version, about = "Full-duplex MIMO energy-harvesting simulator")]
struct Cli {
    /// Master seed (channel seed for allocate, precode and train).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML scenario file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Monte-Carlo trials per power point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Scenario overrides shared by every subcommand.
#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// Antennas at the power station P1.
    #[arg(long)]
    m: Option<usize>,
    /// Antennas at the harvesting device P2.
    #[arg(long)]
    n: Option<usize>,
    /// Transmit power sweep in dBm, comma separated.
    #[arg(long, value_delimiter = ',')]
    ps_dbm: Vec<f64>,
    #[arg(long)]
    si_attenuation_db: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// normalized | raw
    #[arg(long)]
    mixing: Option<String>,
    #[arg(long)]
    p_q_dbm: Option<f64>,
    /// Power levels per antenna for the exhaustive method.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Policy file for the drl_policy method.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Record wall-clock milliseconds per row (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// Run trials on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo sweep of one or more methods; writes results.csv.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Methods, comma separated (default: the config's list).
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
    },
    /// Paired comparison of the first method against the others; writes results.csv and gains.csv.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Greedy antenna allocation on one channel.
    Allocate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Channel file to use instead of a seeded draw.
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Write the channel used to this file.
        #[arg(long)]
        save_channel: Option<PathBuf>,
    },
    /// SCA precoding on one channel; writes sca_trace.csv.
    Precode {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Antenna partition such as `p1_eh=1;p2_eh=2,3` (default: greedy allocation).
        #[arg(long)]
        partition: Option<String>,
    },
    /// Trains the hybrid agent; writes policy.txt and training_curve.csv.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Train on the channel drawn from --seed only.
        #[arg(long)]
        frozen_channel: bool,
    },
    /// Monte-Carlo rollouts of a trained policy; writes results.csv.
    EvalPolicy {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        eval_steps: Option<usize>,
    },
}

struct Ctx {
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn load_config(cli: &Cli, s: &ScenarioArgs) -> Result<Config, HarnessError> {
    let mut c = match &cli.config {
        Some(path) => Config::from_toml(&fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?)?,
        None => Config::default(),
    };
    if let Some(v) = cli.seed {
        c.experiment.seed = v;
    }
    if let Some(v) = cli.trials {
        c.experiment.trials = v;
    }
    if let Some(v) = s.m {
        c.system.m = v;
    }
    if let Some(v) = s.n {
        c.system.n = v;
    }
    if !s.ps_dbm.is_empty() {
        c.experiment.ps_dbm = s.ps_dbm.clone();
    }
    if let Some(v) = s.si_attenuation_db {
        c.system.si_attenuation_db = v;
    }
    if let Some(v) = s.alpha {
        c.budget.alpha = v;
    }
    if let Some(v) = s.tau {
        c.budget.tau = v;
    }
    if let Some(v) = &s.mixing {
        c.budget.mixing = v.clone();
    }
    if s.p_q_dbm.is_some() {
        c.budget.p_q_dbm = s.p_q_dbm;
    }
    if let Some(v) = s.grid {
        c.solver.exhaustive_grid = v;
    }
    Ok(c)
}

fn run_options(run: &RunArgs) -> RunOptions {
    RunOptions { execution: if run.sequential { Execution::Sequential } else { Execution::Parallel }, timing: run.timing }
}

fn load_policy(config: &Config) -> Result<Option<PolicyArtifact>, HarnessError> {
    let Some(path) = &config.drl.policy else { return Ok(None) };
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    PolicyArtifact::from_text(&text).map(Some).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn print_rows(ctx: &Ctx, reports: &[MonteCarloReport]) {
    for r in reports {
        for p in &r.points {
            let row = &p.row;
            ctx.say(format!(
                "{:<26} {:>6.1} dBm  rate {:>9.4} (std {:.4})  harvest {:.4e} W  trials {}",
                row.method, row.ps_dbm, row.mean_rate, row.std_rate, row.mean_harvested_w, row.trials
            ));
        }
    }
}

fn finish(reports: &[MonteCarloReport]) -> u8 {
    if reports.iter().any(MonteCarloReport::degraded) {
        eprintln!("warning: more than 1% of the trials failed at some power point; see the sidecar file");
        exit::DEGRADED
    } else {
        exit::SUCCESS
    }
}

fn all_rows(reports: &[MonteCarloReport]) -> Vec<fdeh::ResultRow> {
    reports.iter().flat_map(MonteCarloReport::rows).collect()
}

fn simulate(ctx: &Ctx, mut config: Config, run: &RunArgs, methods: Vec<Method>) -> Result<u8, HarnessError> {
    if !methods.is_empty() {
        config.experiment.methods = methods;
    }
    if run.policy.is_some() {
        config.drl.policy = run.policy.clone();
    }
    config.validate()?;
    let policy = load_policy(&config)?;
    let options = run_options(run);
    let reports = config
        .experiment
        .methods
        .iter()
        .map(|&method| run_monte_carlo(&Scenario { config: config.clone(), method }, policy.as_ref(), &options))
        .collect::<Result<Vec<_>, _>>()?;
    let path = ctx.out.join("results.csv");
    write_with_sidecar(&path, &results_csv(&all_rows(&reports)), &config, "simulate", &reports)?;
    print_rows(ctx, &reports);
    ctx.say(format!("wrote {}", path.display()));
    Ok(finish(&reports))
}

fn compare(ctx: &Ctx, mut config: Config, run: &RunArgs, methods: Vec<Method>) -> Result<u8, HarnessError> {
    if !methods.is_empty() {
        config.experiment.methods = methods;
    }
    if run.policy.is_some() {
        config.drl.policy = run.policy.clone();
    }
    config.validate()?;
    let policy = load_policy(&config)?;
    let scenarios: Vec<Scenario> = config.experiment.methods.iter().map(|&method| Scenario { config: config.clone(), method }).collect();
    let cmp = compare_methods(&scenarios, policy.as_ref(), &run_options(run))?;
    let results = ctx.out.join("results.csv");
    let gains = ctx.out.join("gains.csv");
    write_with_sidecar(&results, &results_csv(&all_rows(&cmp.reports)), &config, "compare", &cmp.reports)?;
    write_with_sidecar(&gains, &gains_csv(&cmp.gains), &config, "compare", &cmp.reports)?;
    print_rows(ctx, &cmp.reports);
    for g in &cmp.gains {
        ctx.say(format!(
            "{} - {} at {:.1} dBm: {:+.4} bps/Hz (stderr {:.4}, {:.1} sigma, {} pairs)",
            g.method_a,
            g.method_b,
            g.ps_dbm,
            g.mean_gain,
            g.stderr_gain,
            g.significance(),
            g.pairs
        ));
    }
    ctx.say(format!("wrote {} and {}", results.display(), gains.display()));
    Ok(finish(&cmp.reports))
}

fn load_channel(config: &Config, channel: &Option<PathBuf>) -> Result<ChannelRealization, HarnessError> {
    let chan = match channel {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            ChannelRealization::from_text(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        }
        None => sample_channel(&config.channel_params(), config.experiment.seed),
    };
    if (chan.m(), chan.n()) != (config.system.m, config.system.n) {
        return Err(HarnessError::Config(format!(
            "channel is {}x{} but the scenario is {}x{} (pass --m/--n)",
            chan.m(),
            chan.n(),
            config.system.m,
            config.system.n
        )));
    }
    Ok(chan)
}

fn first_power(config: &Config) -> f64 {
    config.experiment.ps_dbm[0]
}

fn allocate(ctx: &Ctx, config: Config, channel: &Option<PathBuf>, save: &Option<PathBuf>) -> Result<u8, HarnessError> {
    config.validate()?;
    let chan = load_channel(&config, channel)?;
    if let Some(path) = save {
        write_file(path, &chan.to_text())?;
    }
    let ps_dbm = first_power(&config);
    let p_s = dbm_to_watts(ps_dbm);
    let p_q = config.budget.p_q_dbm.map_or(p_s, dbm_to_watts);
    let (cfg, steps) = allocate_antennas_traced(&chan, p_s, p_q, config.allocation_rule()?);
    for step in &steps {
        match step {
            AllocationStep::Seed { m, n, gain } => ctx.say(format!("seed pair P1 antenna {} / P2 antenna {} (gain {gain:.4e})", m + 1, n + 1)),
            AllocationStep::MoveP1 { m, z1, z2 } => ctx.say(format!("P1 antenna {} -> EH (z1 {z1:.4e} <= z2 {z2:.4e})", m + 1)),
            AllocationStep::MoveP2 { n, z1, z2 } => ctx.say(format!("P2 antenna {} -> EH (z1 {z1:.4e} > z2 {z2:.4e})", n + 1)),
        }
    }
    println!("{cfg}");
    Ok(exit::SUCCESS)
}

fn precoding_error(e: PrecodingError) -> HarnessError {
    match e {
        PrecodingError::InvalidSettings(msg) => HarnessError::Config(msg),
        other => HarnessError::Numerical(other.to_string()),
    }
}

fn precode(ctx: &Ctx, config: Config, channel: &Option<PathBuf>, partition_text: &Option<String>) -> Result<u8, HarnessError> {
    config.validate()?;
    let chan = load_channel(&config, channel)?;
    let ps_dbm = first_power(&config);
    let pipeline = fdeh::Pipeline::new(&config, Method::AntennaSplitSca, None)?;
    let budget = pipeline.budget(ps_dbm).map_err(HarnessError::Config)?;
    let cfg = match partition_text {
        Some(text) => SubsystemConfig::parse(text, chan.m(), chan.n()).map_err(|e| HarnessError::Config(e.to_string()))?,
        None => fdeh_core::allocate_antennas(&chan, budget.p_s, budget.p_q, pipeline.rule),
    };
    let sub = partition(&chan, &cfg, pipeline.sigma2).map_err(|e| HarnessError::Config(e.to_string()))?;
    let path = ctx.out.join("sca_trace.csv");
    let outcome = match sca_precoding(&sub, &budget, &pipeline.settings) {
        Ok(o) => o,
        Err(PrecodingError::NonFinite { iteration, trace }) => {
            write_with_sidecar(&path, &trace.to_csv(), &config, "precode", &[])?;
            return Err(HarnessError::Numerical(format!("non-finite objective at outer iteration {iteration}; partial trace in {}", path.display())));
        }
        Err(e) => return Err(precoding_error(e)),
    };
    write_with_sidecar(&path, &outcome.trace.to_csv(), &config, "precode", &[])?;
    let e = outcome.evaluation;
    ctx.say(format!("partition {cfg}"));
    ctx.say(format!("{} outer iterations, rate {:.6} bps/Hz, harvest {:.6e} W, objective {:.6}", outcome.trace.steps.len(), e.rate, e.harvested, e.objective));
    ctx.say(format!("wrote {}", path.display()));
    Ok(exit::SUCCESS)
}

fn drl_error(e: DrlError) -> HarnessError {
    match e {
        DrlError::NonFinite { .. } => HarnessError::Numerical(e.to_string()),
        other => HarnessError::Config(other.to_string()),
    }
}

fn train_cmd(ctx: &Ctx, mut config: Config, episodes: Option<usize>, steps: Option<usize>, frozen: bool) -> Result<u8, HarnessError> {
    if let Some(v) = episodes {
        config.drl.episodes = v;
    }
    if let Some(v) = steps {
        config.drl.steps_per_episode = v;
    }
    config.drl.frozen_channel |= frozen;
    config.validate()?;
    let params = config.channel_params();
    let ps_dbm = config.drl.train_ps_dbm.unwrap_or_else(|| first_power(&config));
    let pipeline = fdeh::Pipeline::new(&config, Method::AntennaSplitSca, None)?;
    let budget = pipeline.budget(ps_dbm).map_err(HarnessError::Config)?;
    let seed = config.experiment.seed;
    let options = TrainOptions { frozen_channel: config.drl.frozen_channel.then(|| sample_channel(&params, seed)) };
    let policy_path = ctx.out.join("policy.txt");
    let curve_path = ctx.out.join("training_curve.csv");
    match train(&params, &budget, &config.hyperparams(), seed, &options) {
        Ok(outcome) => {
            write_file(&policy_path, &outcome.artifact.to_text())?;
            write_with_sidecar(&curve_path, &curve_csv(&outcome.curve), &config, "train", &[])?;
            if let Some(last) = outcome.curve.last() {
                ctx.say(format!("episode {}: mean reward {:.4} bps/Hz, harvest {:.4e} W", last.episode, last.mean_reward, last.mean_harvested_w));
            }
            ctx.say(format!("wrote {} and {}", policy_path.display(), curve_path.display()));
            Ok(exit::SUCCESS)
        }
        Err(failure) => {
            write_with_sidecar(&curve_path, &curve_csv(&failure.curve), &config, "train", &[])?;
            if let Some(checkpoint) = &failure.checkpoint {
                let path = ctx.out.join("policy.checkpoint.txt");
                write_file(&path, &checkpoint.to_text())?;
                eprintln!("last good policy saved to {}", path.display());
            }
            let err = drl_error(failure.error);
            Err(match err {
                HarnessError::Numerical(msg) => HarnessError::Numerical(format!("episode {}: {msg}", failure.episode)),
                other => other,
            })
        }
    }
}

fn eval_policy(ctx: &Ctx, mut config: Config, run: &RunArgs, eval_steps: Option<usize>) -> Result<u8, HarnessError> {
    config.experiment.methods = vec![Method::DrlPolicy];
    if run.policy.is_some() {
        config.drl.policy = run.policy.clone();
    }
    if let Some(v) = eval_steps {
        config.drl.eval_steps = v;
    }
    simulate(ctx, config, run, Vec::new())
}

fn dispatch(cli: Cli) -> Result<u8, HarnessError> {
    let ctx = Ctx { out: cli.out.clone(), quiet: cli.quiet };
    match &cli.command {
        Command::Simulate { scenario, run, method } => simulate(&ctx, load_config(&cli, scenario)?, run, method.clone()),
        Command::Compare { scenario, run, methods } => compare(&ctx, load_config(&cli, scenario)?, run, methods.clone()),
        Command::Allocate { scenario, channel, save_channel } => allocate(&ctx, load_config(&cli, scenario)?, channel, save_channel),
        Command::Precode { scenario, channel, partition } => precode(&ctx, load_config(&cli, scenario)?, channel, partition),
        Command::Train { scenario, episodes, steps, frozen_channel } => {
            train_cmd(&ctx, load_config(&cli, scenario)?, *episodes, *steps, *frozen_channel)
        }
        Command::EvalPolicy { scenario, run, eval_steps } => eval_policy(&ctx, load_config(&cli, scenario)?, run, *eval_steps),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

