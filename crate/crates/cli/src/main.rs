//! `ope`: estimate policy values from logged data, run benchmark tables,
//! compute ground truths and generate datasets.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ope_core::bandit::{fit_reward_models, BanditProblem, BanditSetup};
use ope_core::cb;
use ope_core::control::{ControlFunction, LinearControl, LogisticControl};
use ope_core::envs::{rollout_value, CliffWalking, Environment, MountainCar, WindyGridworld};
use ope_core::envs::generate_trajectories;
use ope_core::harness::{
    bandit_dataset, rl_base_policy, run_replications, run_replications_with_threads, BanditSection, EnvKind,
    ExperimentConfig, Experiment, RlSection, TableFormat,
};
use ope_core::io::{self, DatasetMeta};
use ope_core::models::{td_off_policy_evaluate, QLearningConfig, TdConfig, TdInit};
use ope_core::optim::logistic::{LogisticConfig, Penalty};
use ope_core::optim::sgd::SgdConfig;
use ope_core::qmodel::{Featurizer, TabularQ};
use ope_core::rl;
use ope_core::{AnyQ, EstimatorReport, LoggedDataset, MixturePolicy, OpeError, Policy, QModel, TabularPolicy};

const CB_METHODS: &str = "\
Estimators:
  dm      direct method: mean of the model's value under the evaluation policy
  is      importance sampling
  snis    self-normalised importance sampling
  dr      doubly robust with the given Q-model
  sndr    self-normalised doubly robust
  mdr     doubly robust with a control function fitted by SGD
  reg     control-variate coefficients chosen by least squares on (1, q...)
  snreg   self-normalised REG
  emp     empirical-likelihood reweighting over the same control variates";

const RL_METHODS: &str = "\
Estimators:
  dm      direct method from the initial states
  is      trajectory-wise importance sampling
  sis     step-wise importance sampling
  snis    self-normalised trajectory-wise IS
  snsis   self-normalised step-wise IS
  sn2sis  step-wise IS normalised by the final-step weight mean
  dr      step-wise doubly robust
  sndr    self-normalised step-wise doubly robust
  mdr     doubly robust with a linear control fitted by SGD
  reg     least-squares control variates with k step-specific blocks
  emp     empirical-likelihood estimator with k step-specific blocks";

#[derive(Parser)]
#[command(name = "ope", version, about = "Off-policy evaluation toolkit", after_help = "Run `ope estimate --help` or `ope estimate-rl --help` for the estimator list.\nSet OPE_BENCH_THREADS to cap benchmark parallelism.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a policy value from logged bandit data (horizon 1).
    #[command(after_help = CB_METHODS)]
    Estimate {
        #[arg(long, value_enum)]
        method: CbMethod,
        #[command(flatten)]
        io: EstimateIo,
        #[command(flatten)]
        sgd: SgdArgs,
    },
    /// Estimate a policy value from logged trajectories.
    #[command(name = "estimate-rl", after_help = RL_METHODS)]
    EstimateRl {
        #[arg(long, value_enum)]
        method: RlMethod,
        /// Step-specific coefficient blocks for reg and emp.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[command(flatten)]
        io: EstimateIo,
        /// TD epochs for the default Q-model (one-hot, started at the mean
        /// logged return-to-go).
        #[arg(long, default_value_t = 10)]
        td_epochs: usize,
        #[command(flatten)]
        sgd: SgdArgs,
    },
    /// Run a replication experiment and print its RMSE table.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply the config's [paper_scale] overrides.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Print the true value of the evaluation policy.
    Oracle {
        #[arg(long, value_enum, conflicts_with = "config")]
        env: Option<EnvArg>,
        /// Weight of the learned deterministic policy in the evaluation policy.
        #[arg(long, default_value_t = 0.9)]
        policy_alpha: f64,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Q-learning seed for the deterministic policy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte Carlo rollouts (mountain car only).
        #[arg(long, default_value_t = 20_000)]
        rollouts: usize,
        /// Take everything from a benchmark config instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Log a dataset under a behavior policy and write it as CSV.
    #[command(name = "gen-data")]
    GenData {
        #[arg(long, value_enum, required_unless_present = "dataset", conflicts_with = "dataset")]
        env: Option<EnvArg>,
        /// `synthetic:<classes>:<rows>` or a classification CSV (label last).
        #[arg(long)]
        dataset: Option<String>,
        /// Trajectories to log (environments only; bandit data logs every
        /// evaluation row).
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        behavior_alpha: f64,
        #[arg(long, default_value_t = 0.9)]
        eval_alpha: f64,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
        /// Write the evaluation policy table here.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct EstimateIo {
    /// Dataset CSV; its `.meta.json` sidecar must sit next to it.
    #[arg(long)]
    data: PathBuf,
    /// Evaluation policy table (JSON).
    #[arg(long)]
    policy: PathBuf,
    /// Q-model JSON; repeat to give reg/snreg/emp several basis models.
    #[arg(long)]
    q: Vec<PathBuf>,
}

#[derive(clap::Args)]
struct SgdArgs {
    #[arg(long, default_value_t = 200)]
    sgd_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    sgd_step: f64,
    #[arg(long, default_value_t = 64)]
    sgd_batch: usize,
    #[arg(long, default_value_t = 0)]
    sgd_seed: u64,
}

impl SgdArgs {
    fn config(&self) -> SgdConfig {
        SgdConfig { step: self.sgd_step, epochs: self.sgd_epochs, batch: self.sgd_batch, seed: self.sgd_seed }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CbMethod {
    Dm,
    Is,
    Snis,
    Dr,
    Sndr,
    Mdr,
    Reg,
    Snreg,
    Emp,
}

#[derive(Clone, Copy, ValueEnum)]
enum RlMethod {
    Dm,
    Is,
    Sis,
    Snis,
    Snsis,
    Sn2sis,
    Dr,
    Sndr,
    Mdr,
    Reg,
    Emp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Windy,
    Cliff,
    MountainCar,
}

impl EnvArg {
    fn kind(self) -> EnvKind {
        match self {
            EnvArg::Windy => EnvKind::Windy,
            EnvArg::Cliff => EnvKind::Cliff,
            EnvArg::MountainCar => EnvKind::MountainCar,
        }
    }

    fn build(self) -> Box<dyn Environment> {
        match self {
            EnvArg::Windy => Box::new(WindyGridworld),
            EnvArg::Cliff => Box::new(CliffWalking::default()),
            EnvArg::MountainCar => Box::new(MountainCar::default()),
        }
    }
}

fn rl_section(env: EnvArg, horizon: usize, gamma: f64, seed: u64, rollouts: usize) -> RlSection {
    RlSection {
        env: env.kind(),
        horizon,
        gamma,
        cliff_step_cost: false,
        oracle_rollouts: rollouts,
        features: None,
        q_learning: QLearningConfig { seed, ..QLearningConfig::default() },
        td: TdConfig::default(),
        mdr: SgdConfig::default(),
    }
}

/// Dataset, evaluation policy and any user-supplied Q-models.
struct Inputs {
    data: LoggedDataset,
    meta: DatasetMeta,
    pi_e: TabularPolicy,
    qs: Vec<AnyQ>,
}

fn load_inputs(args: &EstimateIo) -> Result<Inputs> {
    let (data, meta) = io::read_dataset_with_meta(&args.data)?;
    let pi_e = io::read_policy(&args.policy)?;
    if pi_e.n_actions() != meta.n_actions {
        return Err(OpeError::InvalidData(format!(
            "policy has {} actions, data has {}",
            pi_e.n_actions(),
            meta.n_actions
        ))
        .into());
    }
    if pi_e.n_states() < meta.behavior.n_states() {
        return Err(OpeError::InvalidData(format!(
            "policy covers {} states, data uses {}",
            pi_e.n_states(),
            meta.behavior.n_states()
        ))
        .into());
    }
    let qs = args.q.iter().map(|p| io::read_qmodel(p)).collect::<ope_core::Result<Vec<_>>>()?;
    for q in &qs {
        if q.n_actions() != meta.n_actions {
            return Err(OpeError::InvalidData("Q-model action count disagrees with the data".into()).into());
        }
    }
    Ok(Inputs { data, meta, pi_e, qs })
}

fn has_features(data: &LoggedDataset) -> bool {
    data.trajectories().iter().all(|t| t.steps.iter().all(|s| !s.state.features.is_empty()))
}

fn binary_rewards(data: &LoggedDataset) -> bool {
    data.trajectories().iter().all(|t| t.steps.iter().all(|s| s.reward == 0.0 || s.reward == 1.0))
}

/// Per-(state, action) mean logged reward, falling back to the action's
/// mean and then to the overall mean where a pair was never logged.
fn empirical_reward_table(data: &LoggedDataset, n_states: usize) -> TabularQ {
    let n_actions = data.n_actions();
    let mut sum = vec![0.0; n_states * n_actions];
    let mut count = vec![0usize; n_states * n_actions];
    let mut a_sum = vec![0.0; n_actions];
    let mut a_count = vec![0usize; n_actions];
    for t in data.trajectories() {
        let s = &t.steps[0];
        sum[s.state.id * n_actions + s.action] += s.reward;
        count[s.state.id * n_actions + s.action] += 1;
        a_sum[s.action] += s.reward;
        a_count[s.action] += 1;
    }
    let overall = a_sum.iter().sum::<f64>() / a_count.iter().sum::<usize>().max(1) as f64;
    let table = (0..n_states * n_actions)
        .map(|i| {
            let a = i % n_actions;
            if count[i] > 0 {
                sum[i] / count[i] as f64
            } else if a_count[a] > 0 {
                a_sum[a] / a_count[a] as f64
            } else {
                overall
            }
        })
        .collect();
    TabularQ { n_actions, table, clip: None }
}

/// Q-models used when none were given: logistic reward models for binary
/// rewards with features, otherwise logged reward means.
fn default_cb_q(inputs: &Inputs) -> Result<AnyQ> {
    let data = &inputs.data;
    if has_features(data) && binary_rewards(data) {
        let q = fit_reward_models(data, &LogisticConfig::new(Penalty::L2, 1.0))?;
        return Ok(AnyQ::Logistic(q));
    }
    Ok(AnyQ::Tabular(empirical_reward_table(data, inputs.meta.behavior.n_states())))
}

fn cb_control(inputs: &Inputs) -> Box<dyn ControlFunction> {
    let data = &inputs.data;
    if has_features(data) {
        let dim = data.trajectories()[0].steps[0].state.features.len();
        Box::new(LogisticControl { dim, n_actions: data.n_actions() })
    } else {
        Box::new(LinearControl {
            featurizer: Featurizer::OneHot { n_states: inputs.meta.behavior.n_states() },
            n_actions: data.n_actions(),
        })
    }
}

fn run_estimate(method: CbMethod, args: &EstimateIo, sgd: &SgdArgs) -> Result<EstimatorReport> {
    let inputs = load_inputs(args)?;
    let (data, pi_e) = (&inputs.data, &inputs.pi_e);
    let qs: Vec<AnyQ> = if inputs.qs.is_empty() && !matches!(method, CbMethod::Is | CbMethod::Snis | CbMethod::Mdr) {
        vec![default_cb_q(&inputs)?]
    } else {
        inputs.qs.clone()
    };
    let basis: Vec<&dyn QModel> = qs.iter().map(|q| q as &dyn QModel).collect();
    let report = match method {
        CbMethod::Dm => cb::dm_estimate(data, &qs[0], pi_e)?,
        CbMethod::Is => cb::is_estimate(data, pi_e)?,
        CbMethod::Snis => cb::snis_estimate(data, pi_e)?,
        CbMethod::Dr => cb::dr_estimate(data, &qs[0], pi_e)?,
        CbMethod::Sndr => cb::sndr_estimate(data, &qs[0], pi_e)?,
        CbMethod::Mdr => cb::mdr_estimate(data, cb_control(&inputs).as_ref(), pi_e, &sgd.config())?,
        CbMethod::Reg => cb::reg_estimate(data, &basis, pi_e)?,
        CbMethod::Snreg => cb::snreg_estimate(data, &basis, pi_e)?,
        CbMethod::Emp => cb::emp_estimate(data, &basis, pi_e)?,
    };
    Ok(report)
}

fn run_estimate_rl(method: RlMethod, k: usize, args: &EstimateIo, td_epochs: usize, sgd: &SgdArgs) -> Result<EstimatorReport> {
    let inputs = load_inputs(args)?;
    let (data, pi_e) = (&inputs.data, &inputs.pi_e);
    let one_hot = Featurizer::OneHot { n_states: inputs.meta.behavior.n_states() };
    let needs_q = matches!(method, RlMethod::Dm | RlMethod::Dr | RlMethod::Sndr | RlMethod::Reg | RlMethod::Emp);
    let q: AnyQ = match inputs.qs.first() {
        Some(q) => q.clone(),
        None if needs_q => {
            let cfg = TdConfig { epochs: td_epochs, init: TdInit::MeanReturn, ..TdConfig::default() };
            AnyQ::Linear(td_off_policy_evaluate(data, pi_e, one_hot.clone(), &cfg)?)
        }
        None => AnyQ::zero(data.n_actions()),
    };
    let report = match method {
        RlMethod::Dm => rl::rl_dm_estimate(data, &q, pi_e)?,
        RlMethod::Is => rl::rl_is_family(data, pi_e, false, false)?,
        RlMethod::Sis => rl::rl_is_family(data, pi_e, true, false)?,
        RlMethod::Snis => rl::rl_is_family(data, pi_e, false, true)?,
        RlMethod::Snsis => rl::rl_is_family(data, pi_e, true, true)?,
        RlMethod::Sn2sis => rl::sn2sis_estimate(data, pi_e)?,
        RlMethod::Dr => rl::rl_dr_estimate(data, &q, pi_e)?,
        RlMethod::Sndr => rl::rl_sndr_estimate(data, &q, pi_e)?,
        RlMethod::Mdr => {
            let control = LinearControl { featurizer: one_hot, n_actions: data.n_actions() };
            rl::rl_mdr_estimate(data, &control, pi_e, &sgd.config())?
        }
        RlMethod::Reg => rl::rl_reg_estimate(data, &q, pi_e, k)?,
        RlMethod::Emp => rl::rl_emp_estimate(data, &q, pi_e, k)?,
    };
    Ok(report)
}

fn bench_threads() -> Result<Option<usize>> {
    match std::env::var("OPE_BENCH_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("OPE_BENCH_THREADS={v:?} is not a count"))?;
            Ok(Some(n.max(1)))
        }
        Err(_) => Ok(None),
    }
}

/// Returns the number of failed replications.
fn run_bench(config: &Path, format: Format, out: Option<&Path>, paper_scale: bool) -> Result<usize> {
    let mut cfg = ExperimentConfig::load(config)?;
    if paper_scale {
        cfg = cfg.at_paper_scale()?;
    }
    let start = Instant::now();
    let table = match bench_threads()? {
        Some(n) => run_replications_with_threads(&cfg, n)?,
        None => run_replications(&cfg)?,
    };
    let text = table.emit(match format {
        Format::Csv => TableFormat::Csv,
        Format::Markdown => TableFormat::Markdown,
    });
    write_stdout(&text)?;
    if let Some(path) = out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("runtime: {:.1}s", start.elapsed().as_secs_f64());
    Ok(table.total_failures())
}

fn run_oracle(
    env: Option<EnvArg>,
    alpha: f64,
    horizon: usize,
    gamma: f64,
    seed: u64,
    rollouts: usize,
    config: Option<&Path>,
) -> Result<f64> {
    if let Some(path) = config {
        let cfg = ExperimentConfig::load(path)?;
        return Ok(Experiment::prepare(&cfg)?.truth());
    }
    let Some(env) = env else { bail!("give --env or --config") };
    let section = rl_section(env, horizon, gamma, seed, rollouts);
    let pi_d = rl_base_policy(&section)?;
    let pi_e = MixturePolicy::new(pi_d, alpha)?;
    let value = match env {
        EnvArg::Windy => WindyGridworld.to_tabular().exact_policy_value(&pi_e, horizon, gamma),
        EnvArg::Cliff => CliffWalking::default().to_tabular().exact_policy_value(&pi_e, horizon, gamma),
        EnvArg::MountainCar => {
            let v = rollout_value(&MountainCar::default(), &pi_e, rollouts, horizon, gamma, seed)?;
            eprintln!("std error: {}", v.std_error);
            v.mean
        }
    };
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn run_gen_data(
    env: Option<EnvArg>,
    dataset: Option<&str>,
    n: usize,
    seed: u64,
    behavior_alpha: f64,
    eval_alpha: f64,
    horizon: usize,
    gamma: f64,
    out: &Path,
    policy_out: Option<&Path>,
) -> Result<()> {
    let (data, pi_e, n_states): (LoggedDataset, Arc<dyn Policy>, usize) = match (env, dataset) {
        (Some(env), _) => {
            let section = rl_section(env, horizon, gamma, seed, 0);
            let pi_d = rl_base_policy(&section)?;
            let pi_b = Arc::new(MixturePolicy::new(pi_d.clone(), behavior_alpha)?);
            let pi_e = Arc::new(MixturePolicy::new(pi_d, eval_alpha)?);
            let e = env.build();
            let data = generate_trajectories(e.as_ref(), pi_b, n, horizon, gamma, seed)?;
            (data, pi_e, e.n_states())
        }
        (None, Some(spec)) => {
            let section = BanditSection {
                dataset: spec.to_string(),
                dim: 36,
                separation: 0.6,
                data_seed: seed,
                train_frac: 0.3,
                split_seed: seed,
                classifier: LogisticConfig::new(Penalty::L2, 1.0),
                q1: LogisticConfig::new(Penalty::L1, 1.0),
                q2: LogisticConfig::new(Penalty::L2, 1.0),
                q_folds: 1,
                mdr: SgdConfig::default(),
            };
            let rows = bandit_dataset(&section)?;
            let setup = BanditSetup { split_seed: seed, eval_alpha, ..BanditSetup::default() };
            let problem = BanditProblem::prepare(&rows, &setup)?;
            let data = problem.log(problem.behavior(behavior_alpha)?, seed)?;
            let n_states = problem.eval.len();
            (data, problem.pi_e.clone(), n_states)
        }
        (None, None) => bail!("give --env or --dataset"),
    };
    io::write_dataset(&data, n_states, out)?;
    if let Some(p) = policy_out {
        io::write_json(p, &io::policy_table(pi_e.as_ref(), n_states))?;
    }
    eprintln!("wrote {} trajectories to {}", data.n(), out.display());
    Ok(())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json(value: &EstimatorReport) -> Result<()> {
    write_stdout(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Estimate { method, io, sgd } => print_json(&run_estimate(method, &io, &sgd)?)?,
        Command::EstimateRl { method, k, io, td_epochs, sgd } => {
            print_json(&run_estimate_rl(method, k, &io, td_epochs, &sgd)?)?
        }
        Command::Bench { config, format, out, paper_scale } => {
            let failures = run_bench(&config, format, out.as_deref(), paper_scale)?;
            if failures > 0 {
                eprintln!("ReplicationFailures: {failures} estimator runs failed (see the failures lines)");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Oracle { env, policy_alpha, horizon, gamma, seed, rollouts, config } => {
            let value = run_oracle(env, policy_alpha, horizon, gamma, seed, rollouts, config.as_deref())?;
            write_stdout(&format!("{value}\n"))?;
        }
        Command::GenData { env, dataset, n, seed, behavior_alpha, eval_alpha, horizon, gamma, out, policy_out } => {
            run_gen_data(env, dataset.as_deref(), n, seed, behavior_alpha, eval_alpha, horizon, gamma, &out, policy_out.as_deref())?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            match e.downcast_ref::<OpeError>() {
                Some(ope) => eprintln!("{}: {ope}", ope.name()),
                None => eprintln!("Error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
