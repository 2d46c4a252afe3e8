//! File formats: logged datasets, policies and Q-models.
//!
//! A dataset is a CSV with one row per step,
//! `traj_id,t,state,action,reward`, optionally followed by feature columns
//! `x0,x1,…`, plus a JSON sidecar `<stem>.meta.json` holding the horizon,
//! discount, reward bound and the behavior policy as a table over state ids.
//! Policies are stored as [`TabularPolicy`] JSON and Q-models as
//! [`AnyQ`] JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{LoggedDataset, State, Step, Trajectory};
use crate::error::{OpeError, Result};
use crate::policy::{Policy, TabularPolicy};
use crate::qmodel::AnyQ;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub horizon: usize,
    pub gamma: f64,
    pub r_max: f64,
    pub n_actions: usize,
    pub behavior: TabularPolicy,
}

/// `data.csv` → `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> OpeError {
    OpeError::Io(format!("{}: {e}", path.display()))
}

/// Tabulates `policy` over state ids `0..n_states`.
pub fn policy_table(policy: &dyn Policy, n_states: usize) -> TabularPolicy {
    let rows = (0..n_states).map(|s| policy.probs(&State::discrete(s))).collect();
    TabularPolicy::new(rows).expect("a valid policy tabulates to a valid table")
}

/// Writes the step CSV and its sidecar. The behavior policy is tabulated
/// over `n_states` state ids.
pub fn write_dataset(data: &LoggedDataset, n_states: usize, path: &Path) -> Result<()> {
    let dim = data
        .trajectories()
        .iter()
        .flat_map(|t| t.steps.iter())
        .map(|s| s.state.features.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header: Vec<String> = ["traj_id", "t", "state", "action", "reward"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (i, traj) in data.trajectories().iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            let mut rec = vec![
                i.to_string(),
                t.to_string(),
                step.state.id.to_string(),
                step.action.to_string(),
                step.reward.to_string(),
            ];
            rec.extend(step.state.features.iter().map(|v| v.to_string()));
            rec.resize(5 + dim, String::new());
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    let meta = DatasetMeta {
        horizon: data.horizon(),
        gamma: data.gamma(),
        r_max: data.r_max(),
        n_actions: data.n_actions(),
        behavior: policy_table(data.behavior(), n_states),
    };
    write_json(&sidecar_path(path), &meta)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| OpeError::Parse { row, msg: format!("missing column {name}") })?;
    raw.trim().parse().map_err(|_| OpeError::Parse { row, msg: format!("bad {name}: {raw:?}") })
}

/// Reads a dataset written by [`write_dataset`] (or by hand in the same
/// format). Rows must be grouped by trajectory with `t = 0, 1, …`.
pub fn read_dataset(path: &Path) -> Result<LoggedDataset> {
    Ok(read_dataset_with_meta(path)?.0)
}

/// [`read_dataset`] plus the parsed sidecar.
pub fn read_dataset_with_meta(path: &Path) -> Result<(LoggedDataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    let behavior = meta.behavior.clone().validated()?;
    if behavior.n_actions() != meta.n_actions {
        return Err(OpeError::InvalidData("sidecar action count disagrees with its behavior table".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| io_err(path, e))?;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut current_id: Option<String> = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| OpeError::Parse { row, msg: e.to_string() })?;
        let traj_id = rec.get(0).unwrap_or("").trim().to_string();
        let t: usize = field(&rec, 1, row, "t")?;
        let state: usize = field(&rec, 2, row, "state")?;
        let action: usize = field(&rec, 3, row, "action")?;
        let reward: f64 = field(&rec, 4, row, "reward")?;
        let mut features = Vec::new();
        for j in 5..rec.len() {
            if !rec[j].trim().is_empty() {
                features.push(field::<f64>(&rec, j, row, "feature")?);
            }
        }
        if state >= behavior.n_states() {
            return Err(OpeError::Parse { row, msg: format!("state {state} not covered by the behavior table") });
        }
        if current_id.as_deref() != Some(traj_id.as_str()) {
            current_id = Some(traj_id);
            trajectories.push(Trajectory::default());
        }
        let traj = trajectories.last_mut().expect("pushed above");
        if t != traj.len() {
            return Err(OpeError::Parse { row, msg: format!("expected t = {}, found {t}", traj.len()) });
        }
        traj.steps.push(Step::new(State::with_features(state, features), action, reward));
    }
    let data = LoggedDataset::new(trajectories, Arc::new(behavior), meta.horizon, meta.gamma, meta.r_max)?;
    Ok((data, meta))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    f.write_all(b"\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| OpeError::Parse { row: e.line(), msg: format!("{}: {e}", path.display()) })
}

pub fn read_policy(path: &Path) -> Result<TabularPolicy> {
    read_json::<TabularPolicy>(path)?.validated()
}

pub fn read_qmodel(path: &Path) -> Result<AnyQ> {
    read_json(path)
}
