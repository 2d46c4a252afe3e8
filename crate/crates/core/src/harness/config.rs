//! Declarative experiment configuration, read from TOML or JSON.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OpeError, Result};
use crate::models::{QLearningConfig, TdConfig};
use crate::optim::logistic::{LogisticConfig, Penalty};
use crate::optim::sgd::SgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Bandit,
    Rl,
}

/// Estimator columns, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dm,
    Dm1,
    Dm2,
    Is,
    Sis,
    Snis,
    Snsis,
    Sn2sis,
    Dr,
    Sndr,
    Mdr,
    Reg,
    Snreg,
    Emp,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 15] = [
        Method::Dm,
        Method::Dm1,
        Method::Dm2,
        Method::Is,
        Method::Sis,
        Method::Snis,
        Method::Snsis,
        Method::Sn2sis,
        Method::Dr,
        Method::Sndr,
        Method::Mdr,
        Method::Reg,
        Method::Snreg,
        Method::Emp,
        Method::Oracle,
    ];

    /// Column header.
    pub fn label(self) -> &'static str {
        match self {
            Method::Dm => "DM",
            Method::Dm1 => "DM1",
            Method::Dm2 => "DM2",
            Method::Is => "IS",
            Method::Sis => "SIS",
            Method::Snis => "SNIS",
            Method::Snsis => "SNSIS",
            Method::Sn2sis => "SN2SIS",
            Method::Dr => "DR",
            Method::Sndr => "SNDR",
            Method::Mdr => "MDR",
            Method::Reg => "REG",
            Method::Snreg => "SNREG",
            Method::Emp => "EMP",
            Method::Oracle => "Oracle",
        }
    }

    pub fn supports(self, domain: Domain) -> bool {
        match domain {
            Domain::Bandit => !matches!(self, Method::Dm | Method::Sis | Method::Snsis | Method::Sn2sis),
            Domain::Rl => !matches!(self, Method::Dm1 | Method::Dm2 | Method::Snreg),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| OpeError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Windy,
    Cliff,
    MountainCar,
}

impl FromStr for EnvKind {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "windy" => Ok(EnvKind::Windy),
            "cliff" => Ok(EnvKind::Cliff),
            "mountain_car" | "mountain-car" | "mountaincar" => Ok(EnvKind::MountainCar),
            _ => Err(OpeError::InvalidConfig(format!("unknown environment {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    OneHot,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    pub env: EnvKind,
    pub horizon: usize,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Cliff only: charge the step cost on top of the cliff penalty.
    #[serde(default)]
    pub cliff_step_cost: bool,
    /// Rollouts for the Monte Carlo truth (Mountain Car). Tabular
    /// environments use dynamic programming and ignore this.
    #[serde(default = "default_rollouts")]
    pub oracle_rollouts: usize,
    /// Featurisation for the TD model and the MDR control.
    #[serde(default)]
    pub features: Option<FeatureKind>,
    #[serde(default)]
    pub q_learning: QLearningConfig,
    #[serde(default)]
    pub td: TdConfig,
    #[serde(default)]
    pub mdr: SgdConfig,
}

impl RlSection {
    pub fn features(&self) -> FeatureKind {
        self.features.unwrap_or(match self.env {
            EnvKind::MountainCar => FeatureKind::Rbf,
            _ => FeatureKind::OneHot,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSection {
    /// `synthetic:<classes>:<rows>` or a path to a CSV with the label last.
    pub dataset: String,
    /// Feature dimension of synthetic data.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Spread of synthetic class means.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_classifier")]
    pub classifier: LogisticConfig,
    /// Reward model behind DM1 (and the first control-variate basis term).
    #[serde(default = "default_q_l1")]
    pub q1: LogisticConfig,
    /// Reward model behind DM2 (and the second basis term).
    #[serde(default = "default_q_l2")]
    pub q2: LogisticConfig,
    /// Cross-fitting folds for both reward models; 1 fits them on all
    /// logged rounds.
    #[serde(default = "default_q_folds")]
    pub q_folds: usize,
    #[serde(default)]
    pub mdr: SgdConfig,
}

fn default_q_folds() -> usize {
    1
}

/// Overrides applied by `--paper-scale`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperScale {
    pub replications: Option<usize>,
    pub sample_sizes: Option<Vec<usize>>,
    pub horizon: Option<usize>,
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: Domain,
    pub master_seed: u64,
    pub replications: usize,
    pub methods: Vec<Method>,
    /// Trajectories per replication (RL). Bandit runs log every row of the
    /// evaluation split and leave this empty.
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
    /// `π_d` weights of the behavior policies, one table row each.
    pub behavior_alphas: Vec<f64>,
    /// `π_d` weight of the evaluation policy.
    #[serde(default = "default_eval_alpha")]
    pub eval_alpha: f64,
    /// Number of step-specific coefficient blocks for RL REG and EMP.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Multiplier applied to every RMSE when printing.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub rl: Option<RlSection>,
    #[serde(default)]
    pub bandit: Option<BanditSection>,
    #[serde(default)]
    pub paper_scale: Option<PaperScale>,
}

fn one() -> f64 {
    1.0
}
fn default_rollouts() -> usize {
    20_000
}
fn default_dim() -> usize {
    36
}
fn default_separation() -> f64 {
    0.6
}
fn default_train_frac() -> f64 {
    0.3
}
fn default_eval_alpha() -> f64 {
    0.9
}
fn default_k() -> usize {
    2
}
fn default_classifier() -> LogisticConfig {
    LogisticConfig::new(Penalty::L2, 1.0)
}
fn default_q_l1() -> LogisticConfig {
    LogisticConfig { max_iter: 500, ..LogisticConfig::new(Penalty::L1, 1.0) }
}
fn default_q_l2() -> LogisticConfig {
    LogisticConfig { max_iter: 500, ..LogisticConfig::new(Penalty::L2, 1.0) }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| OpeError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| OpeError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `.json` files as JSON and everything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OpeError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OpeError::InvalidConfig(msg));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if let Some(m) = self.methods.iter().find(|m| !m.supports(self.domain)) {
            return bad(format!("method {m} is not available for this domain"));
        }
        if self.behavior_alphas.is_empty() {
            return bad("behavior_alphas is empty".into());
        }
        for a in self.behavior_alphas.iter().chain(std::iter::once(&self.eval_alpha)) {
            if !(0.0..=1.0).contains(a) {
                return bad(format!("policy weight {a} outside [0, 1]"));
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be positive".into());
        }
        match self.domain {
            Domain::Rl => {
                let Some(rl) = &self.rl else { return bad("rl domain needs an [rl] section".into()) };
                if self.bandit.is_some() {
                    return bad("rl domain takes no [bandit] section".into());
                }
                if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
                    return bad("sample_sizes must be nonempty and positive".into());
                }
                if rl.horizon == 0 || !(0.0..=1.0).contains(&rl.gamma) {
                    return bad("horizon must be positive and gamma in [0, 1]".into());
                }
                let uses_k = self.methods.iter().any(|m| matches!(m, Method::Reg | Method::Emp));
                if uses_k && self.k >= rl.horizon {
                    return bad(format!("k = {} must be below the horizon", self.k));
                }
                if rl.env == EnvKind::MountainCar && rl.oracle_rollouts == 0 {
                    return bad("mountain car needs oracle_rollouts > 0".into());
                }
                rl.mdr.validate()?;
            }
            Domain::Bandit => {
                let Some(b) = &self.bandit else { return bad("bandit domain needs a [bandit] section".into()) };
                if self.rl.is_some() {
                    return bad("bandit domain takes no [rl] section".into());
                }
                if !self.sample_sizes.is_empty() {
                    return bad("bandit runs log the whole evaluation split; drop sample_sizes".into());
                }
                DatasetSource::parse(&b.dataset)?;
                if b.q_folds == 0 {
                    return bad("q_folds must be at least 1".into());
                }
                b.mdr.validate()?;
            }
        }
        Ok(())
    }

    /// Applies the `[paper_scale]` overrides.
    pub fn at_paper_scale(&self) -> Result<Self> {
        let mut cfg = self.clone();
        if let Some(p) = self.paper_scale.clone() {
            if let Some(r) = p.replications {
                cfg.replications = r;
            }
            if let Some(s) = p.sample_sizes {
                cfg.sample_sizes = s;
            }
            if let (Some(h), Some(rl)) = (p.horizon, cfg.rl.as_mut()) {
                rl.horizon = h;
            }
            if let (Some(d), Some(b)) = (p.dataset, cfg.bandit.as_mut()) {
                b.dataset = d;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&canonical).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Where bandit rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic { classes: usize, rows: usize },
    File(String),
}

impl DatasetSource {
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(rest) = spec.strip_prefix("synthetic:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let parsed: Option<(usize, usize)> = match parts.as_slice() {
                [c, n] => c.parse().ok().zip(n.parse().ok()),
                _ => None,
            };
            return match parsed {
                Some((classes, rows)) if classes >= 2 && rows > 0 => Ok(DatasetSource::Synthetic { classes, rows }),
                _ => Err(OpeError::InvalidConfig(format!("expected synthetic:<classes>:<rows>, got {spec:?}"))),
            };
        }
        Ok(DatasetSource::File(spec.to_string()))
    }
}
