//! Seeded replications of generate → fit → estimate, reduced to RMSE.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bandit::{load_classification_csv, synthetic_clusters, BanditProblem, BanditSetup, fit_reward_models_cross};
use crate::cb;
use crate::control::{LinearControl, LogisticControl};
use crate::data::{LoggedDataset, State};
use crate::envs::{derive_seed, generate_trajectories, rollout_value, CliffWalking, Environment, MountainCar, WindyGridworld};
use crate::error::{OpeError, Result};
use crate::harness::config::{BanditSection, DatasetSource, Domain, EnvKind, ExperimentConfig, FeatureKind, Method, RlSection};
use crate::harness::table::{rmse, FailureRecord, RmseTable, TableRow};
use crate::models::{q_learning, td_off_policy_evaluate, RbfFeaturizer, TdConfig};
use crate::optim::sgd::SgdConfig;
use crate::policy::{MixturePolicy, Policy, TableSelector};
use crate::qmodel::{AnyQ, Featurizer, LinearQ, QModel};
use crate::rl;

/// Seed stream tags below a replication seed.
const MODEL_STREAM: u64 = 1;
const MDR_STREAM: u64 = 2;
/// Seed tag for the Monte Carlo truth, far from any setting index.
const ORACLE_STREAM: u64 = u64::MAX;

/// One table row: a behavior policy and (RL) a sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub behavior_alpha: f64,
    pub n: Option<usize>,
    pub label: String,
}

struct RlContext {
    section: RlSection,
    env: Box<dyn Environment>,
    pi_d: Arc<TableSelector>,
    pi_e: Arc<MixturePolicy>,
    featurizer: Featurizer,
    truth_std_error: Option<f64>,
}

enum Context {
    Rl(RlContext),
    Bandit { section: BanditSection, problem: BanditProblem },
}

/// A configured experiment with its policies and ground truth in place.
pub struct Experiment {
    cfg: ExperimentConfig,
    context: Context,
    truth: f64,
}

/// Per-method outcomes of one replication, in `cfg.methods` order.
pub type Replication = Vec<Result<f64>>;

fn make_env(rl: &RlSection) -> Box<dyn Environment> {
    match rl.env {
        EnvKind::Windy => Box::new(WindyGridworld),
        EnvKind::Cliff if rl.cliff_step_cost => Box::new(CliffWalking::with_step_cost_on_cliff()),
        EnvKind::Cliff => Box::new(CliffWalking::default()),
        EnvKind::MountainCar => Box::new(MountainCar::default()),
    }
}

fn exact_value(rl: &RlSection, pi: &dyn Policy) -> Option<f64> {
    let mdp = match rl.env {
        EnvKind::Windy => WindyGridworld.to_tabular(),
        EnvKind::Cliff if rl.cliff_step_cost => CliffWalking::with_step_cost_on_cliff().to_tabular(),
        EnvKind::Cliff => CliffWalking::default().to_tabular(),
        EnvKind::MountainCar => return None,
    };
    Some(mdp.exact_policy_value(pi, rl.horizon, rl.gamma))
}

/// The deterministic policy `π_d` for an RL config: greedy in the
/// Q-learning table.
pub fn rl_base_policy(rl: &RlSection) -> Result<Arc<TableSelector>> {
    let env = make_env(rl);
    let q = q_learning(env.as_ref(), &rl.q_learning)?;
    Ok(Arc::new(TableSelector { n_actions: env.n_actions(), actions: q.greedy_actions() }))
}

/// Builds the classification data a bandit config refers to.
pub fn bandit_dataset(b: &BanditSection) -> Result<crate::bandit::ClassificationDataset> {
    match DatasetSource::parse(&b.dataset)? {
        DatasetSource::Synthetic { classes, rows } => synthetic_clusters(classes, rows, b.dim, b.separation, b.data_seed),
        DatasetSource::File(path) => load_classification_csv(Path::new(&path)),
    }
}

impl Experiment {
    /// Trains `π_d`, builds `π_e` and computes the ground truth.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        match cfg.domain {
            Domain::Rl => {
                let section = cfg.rl.clone().expect("validated");
                let env = make_env(&section);
                let pi_d = rl_base_policy(&section)?;
                let pi_e = Arc::new(MixturePolicy::new(pi_d.clone(), cfg.eval_alpha)?);
                let (truth, truth_std_error) = match exact_value(&section, pi_e.as_ref()) {
                    Some(v) => (v, None),
                    None => {
                        let seed = derive_seed(cfg.master_seed, ORACLE_STREAM);
                        let v = rollout_value(env.as_ref(), pi_e.as_ref(), section.oracle_rollouts, section.horizon, section.gamma, seed)?;
                        (v.mean, Some(v.std_error))
                    }
                };
                let featurizer = match section.features() {
                    FeatureKind::OneHot => Featurizer::OneHot { n_states: env.n_states() },
                    FeatureKind::Rbf => Featurizer::Rbf(RbfFeaturizer::mountain_car()),
                };
                let context = Context::Rl(RlContext { section, env, pi_d, pi_e, featurizer, truth_std_error });
                Ok(Experiment { cfg: cfg.clone(), context, truth })
            }
            Domain::Bandit => {
                let section = cfg.bandit.clone().expect("validated");
                let data = bandit_dataset(&section)?;
                let setup = BanditSetup {
                    train_frac: section.train_frac,
                    split_seed: section.split_seed,
                    eval_alpha: cfg.eval_alpha,
                    classifier: section.classifier,
                };
                let problem = BanditProblem::prepare(&data, &setup)?;
                let truth = problem.truth;
                Ok(Experiment { cfg: cfg.clone(), context: Context::Bandit { section, problem }, truth })
            }
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// `β*` of the evaluation policy.
    pub fn truth(&self) -> f64 {
        self.truth
    }

    pub fn evaluation_policy(&self) -> Arc<dyn Policy> {
        match &self.context {
            Context::Rl(c) => c.pi_e.clone(),
            Context::Bandit { problem, .. } => problem.pi_e.clone(),
        }
    }

    pub fn behavior_policy(&self, alpha: f64) -> Result<Arc<MixturePolicy>> {
        let base = match &self.context {
            Context::Rl(c) => c.pi_d.clone(),
            Context::Bandit { problem, .. } => problem.pi_d.clone(),
        };
        Ok(Arc::new(MixturePolicy::new(base, alpha)?))
    }

    pub fn settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for &alpha in &self.cfg.behavior_alphas {
            match self.cfg.domain {
                Domain::Rl => {
                    for &n in &self.cfg.sample_sizes {
                        out.push(Setting { behavior_alpha: alpha, n: Some(n), label: format!("pi_b={alpha} n={n}") });
                    }
                }
                Domain::Bandit => out.push(Setting { behavior_alpha: alpha, n: None, label: format!("pi_b={alpha}") }),
            }
        }
        out
    }

    /// Seed of replication `rep` in setting `setting`.
    pub fn replication_seed(&self, setting: usize, rep: usize) -> u64 {
        derive_seed(derive_seed(self.cfg.master_seed, setting as u64), rep as u64)
    }

    /// The logged data of one replication.
    pub fn replication_data(&self, setting: &Setting, seed: u64) -> Result<LoggedDataset> {
        let pi_b = self.behavior_policy(setting.behavior_alpha)?;
        match &self.context {
            Context::Rl(c) => {
                let n = setting.n.expect("rl settings carry a sample size");
                generate_trajectories(c.env.as_ref(), pi_b, n, c.section.horizon, c.section.gamma, seed)
            }
            Context::Bandit { problem, .. } => problem.log(pi_b, seed),
        }
    }

    /// Runs every configured method on one freshly generated dataset.
    pub fn replicate(&self, setting_index: usize, rep: usize) -> Replication {
        let settings = self.settings();
        let setting = &settings[setting_index];
        let seed = self.replication_seed(setting_index, rep);
        let data = match self.replication_data(setting, seed) {
            Ok(d) => d,
            Err(e) => return self.cfg.methods.iter().map(|_| Err(e.clone())).collect(),
        };
        self.estimate_all(&data, seed)
    }

    /// Every configured method on `data`; model-fitting randomness is drawn
    /// from `seed`.
    pub fn estimate_all(&self, data: &LoggedDataset, seed: u64) -> Replication {
        match &self.context {
            Context::Rl(c) => self.estimate_rl(c, data, seed),
            Context::Bandit { section, problem } => self.estimate_bandit(section, problem, data, seed),
        }
    }

    fn estimate_rl(&self, c: &RlContext, data: &LoggedDataset, seed: u64) -> Replication {
        let pi_e = c.pi_e.as_ref();
        let methods = &self.cfg.methods;
        // RBF features are evaluated once per logged state; the models then
        // read them verbatim.
        let cached;
        let (data, featurizer) = match &c.featurizer {
            Featurizer::Rbf(f) => match data.map_states(|s| State::with_features(s.id, f.featurize_clamped(&s.features))) {
                Ok(d) => {
                    cached = d;
                    (&cached, Featurizer::Identity { dim: f.dim() })
                }
                Err(e) => return methods.iter().map(|_| Err(e.clone())).collect(),
            },
            other => (data, other.clone()),
        };
        let needs_q = methods.iter().any(|m| matches!(m, Method::Dm | Method::Dr | Method::Sndr | Method::Reg | Method::Emp));
        let q: Result<LinearQ> = if needs_q {
            let td = TdConfig { seed: derive_seed(seed, MODEL_STREAM), ..c.section.td };
            td_off_policy_evaluate(data, pi_e, featurizer.clone(), &td)
        } else {
            Ok(LinearQ::zeros(Featurizer::OneHot { n_states: 1 }, data.n_actions()))
        };
        let k = self.cfg.k;
        methods
            .iter()
            .map(|m| {
                let with_q = |f: &dyn Fn(&LinearQ) -> Result<f64>| q.as_ref().map_err(OpeError::clone).and_then(f);
                match m {
                    Method::Dm => with_q(&|q| Ok(rl::rl_dm_estimate(data, q, pi_e)?.estimate)),
                    Method::Is => rl::rl_is_family(data, pi_e, false, false).map(|r| r.estimate),
                    Method::Sis => rl::rl_is_family(data, pi_e, true, false).map(|r| r.estimate),
                    Method::Snis => rl::rl_is_family(data, pi_e, false, true).map(|r| r.estimate),
                    Method::Snsis => rl::rl_is_family(data, pi_e, true, true).map(|r| r.estimate),
                    Method::Sn2sis => rl::sn2sis_estimate(data, pi_e).map(|r| r.estimate),
                    Method::Dr => with_q(&|q| Ok(rl::rl_dr_estimate(data, q, pi_e)?.estimate)),
                    Method::Sndr => with_q(&|q| Ok(rl::rl_sndr_estimate(data, q, pi_e)?.estimate)),
                    Method::Mdr => {
                        let control = LinearControl { featurizer: featurizer.clone(), n_actions: data.n_actions() };
                        let sgd = SgdConfig { seed: derive_seed(seed, MDR_STREAM), ..c.section.mdr };
                        rl::rl_mdr_estimate(data, &control, pi_e, &sgd).map(|r| r.estimate)
                    }
                    Method::Reg => with_q(&|q| Ok(rl::rl_reg_estimate(data, q, pi_e, k)?.estimate)),
                    Method::Emp => with_q(&|q| Ok(rl::rl_emp_estimate(data, q, pi_e, k)?.estimate)),
                    Method::Oracle => Ok(self.truth),
                    Method::Dm1 | Method::Dm2 | Method::Snreg => unreachable!("rejected by validation"),
                }
            })
            .collect()
    }

    fn estimate_bandit(&self, b: &BanditSection, problem: &BanditProblem, data: &LoggedDataset, seed: u64) -> Replication {
        let pi_e = problem.pi_e.as_ref();
        let methods = &self.cfg.methods;
        let uses_both = |m: &Method| matches!(m, Method::Dr | Method::Sndr | Method::Reg | Method::Snreg | Method::Emp);
        let fold_seed = derive_seed(seed, MODEL_STREAM);
        let unused = || AnyQ::zero(data.n_actions());
        let q1: Result<AnyQ> = if methods.iter().any(|m| *m == Method::Dm1 || uses_both(m)) {
            fit_reward_models_cross(data, &b.q1, b.q_folds, fold_seed)
        } else {
            Ok(unused())
        };
        let q2: Result<AnyQ> = if methods.iter().any(|m| *m == Method::Dm2 || uses_both(m)) {
            fit_reward_models_cross(data, &b.q2, b.q_folds, fold_seed)
        } else {
            Ok(unused())
        };
        let both = q1.clone().and_then(|a| q2.clone().map(|b| (a, b)));
        let blend: Result<AnyQ> = match &both {
            Ok((a, b)) => Ok(AnyQ::Blend {
                parts: vec![(0.5, a.clone()), (0.5, b.clone())],
            }),
            Err(e) => Err(e.clone()),
        };
        let basis = |f: &dyn Fn(&[&dyn QModel]) -> Result<f64>| match &both {
            Ok((a, b)) => f(&[a as &dyn QModel, b as &dyn QModel]),
            Err(e) => Err(e.clone()),
        };
        let blended = |f: &dyn Fn(&AnyQ) -> Result<f64>| blend.as_ref().map_err(OpeError::clone).and_then(f);
        methods
            .iter()
            .map(|m| match m {
                Method::Dm1 => q1.as_ref().map_err(OpeError::clone).and_then(|q| Ok(cb::dm_estimate(data, q, pi_e)?.estimate)),
                Method::Dm2 => q2.as_ref().map_err(OpeError::clone).and_then(|q| Ok(cb::dm_estimate(data, q, pi_e)?.estimate)),
                Method::Is => cb::is_estimate(data, pi_e).map(|r| r.estimate),
                Method::Snis => cb::snis_estimate(data, pi_e).map(|r| r.estimate),
                Method::Dr => blended(&|q| Ok(cb::dr_estimate(data, q, pi_e)?.estimate)),
                Method::Sndr => blended(&|q| Ok(cb::sndr_estimate(data, q, pi_e)?.estimate)),
                Method::Mdr => {
                    let dim = problem.eval.dim();
                    let control = LogisticControl { dim, n_actions: data.n_actions() };
                    let sgd = SgdConfig { seed: derive_seed(seed, MDR_STREAM), ..b.mdr };
                    cb::mdr_estimate(data, &control, pi_e, &sgd).map(|r| r.estimate)
                }
                Method::Reg => basis(&|qs| Ok(cb::reg_estimate(data, qs, pi_e)?.estimate)),
                Method::Snreg => basis(&|qs| Ok(cb::snreg_estimate(data, qs, pi_e)?.estimate)),
                Method::Emp => basis(&|qs| Ok(cb::emp_estimate(data, qs, pi_e)?.estimate)),
                Method::Oracle => Ok(self.truth),
                Method::Dm | Method::Sis | Method::Snsis | Method::Sn2sis => unreachable!("rejected by validation"),
            })
            .collect()
    }

    /// All replications of one setting, run in parallel and returned in
    /// replication order.
    pub fn run_setting(&self, setting_index: usize) -> Vec<Replication> {
        (0..self.cfg.replications).into_par_iter().map(|r| self.replicate(setting_index, r)).collect()
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let cfg = &self.cfg;
        let mut m: Vec<(String, String)> = vec![
            ("config_hash".into(), cfg.hash()),
            ("master_seed".into(), cfg.master_seed.to_string()),
            ("replications".into(), cfg.replications.to_string()),
            ("eval_alpha".into(), cfg.eval_alpha.to_string()),
        ];
        let mut push = |k: &str, v: String| m.push((k.to_string(), v));
        match &self.context {
            Context::Rl(c) => {
                let s = &c.section;
                push("env", format!("{:?}", s.env));
                push("horizon", s.horizon.to_string());
                push("gamma", s.gamma.to_string());
                push("k", cfg.k.to_string());
                push("features", format!("{:?}", s.features()));
                push(
                    "q_learning",
                    format!("episodes={} alpha={} epsilon={} max_steps={}", s.q_learning.episodes, s.q_learning.alpha, s.q_learning.epsilon, s.q_learning.max_steps),
                );
                push("td", format!("epochs={} alpha={}", s.td.epochs, s.td.alpha));
                push("mdr_sgd", format!("step={} epochs={} batch={}", s.mdr.step, s.mdr.epochs, s.mdr.batch));
                match c.truth_std_error {
                    Some(se) => push("truth", format!("{} rollouts, std error {se}", s.oracle_rollouts)),
                    None => push("truth", "exact dynamic programming".into()),
                }
            }
            Context::Bandit { section: b, problem } => {
                push("dataset", b.dataset.clone());
                push("eval_rows", problem.eval.len().to_string());
                push("classifier_accuracy", problem.classifier_accuracy().to_string());
                push("q1", format!("{:?} strength={} max_iter={}", b.q1.penalty, b.q1.strength, b.q1.max_iter));
                push("q2", format!("{:?} strength={} max_iter={}", b.q2.penalty, b.q2.strength, b.q2.max_iter));
                push("q_folds", b.q_folds.to_string());
                push("mdr_sgd", format!("step={} epochs={} batch={}", b.mdr.step, b.mdr.epochs, b.mdr.batch));
            }
        }
        m
    }

    /// Runs every setting and reduces to RMSE. Failed replications are left
    /// out of their method's RMSE and counted in the failure records.
    pub fn run(&self) -> RmseTable {
        let methods = self.cfg.methods.clone();
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for (si, setting) in self.settings().iter().enumerate() {
            let reps = self.run_setting(si);
            let mut rmse_row = Vec::with_capacity(methods.len());
            for (c, method) in methods.iter().enumerate() {
                let mut ok = Vec::with_capacity(reps.len());
                let mut errors: BTreeMap<&'static str, usize> = BTreeMap::new();
                for rep in &reps {
                    match &rep[c] {
                        Ok(v) => ok.push(*v),
                        Err(e) => *errors.entry(e.name()).or_default() += 1,
                    }
                }
                if !errors.is_empty() {
                    failures.push(FailureRecord {
                        setting: setting.label.clone(),
                        method: *method,
                        count: errors.values().sum(),
                        errors: errors.keys().map(|s| s.to_string()).collect(),
                    });
                }
                rmse_row.push(rmse(&ok, self.truth).ok());
            }
            rows.push(TableRow { label: setting.label.clone(), truth: self.truth, rmse: rmse_row });
        }
        RmseTable { name: self.cfg.name.clone(), methods, rows, scale: self.cfg.scale, metadata: self.metadata(), failures }
    }
}

/// Prepares and runs `cfg` on the global thread pool.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<RmseTable> {
    Ok(Experiment::prepare(cfg)?.run())
}

/// Like [`run_replications`] on a dedicated pool of `threads` workers.
pub fn run_replications_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<RmseTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| OpeError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_replications(cfg))
}
