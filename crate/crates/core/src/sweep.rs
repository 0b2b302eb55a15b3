//! Experiment matrix enumeration and the ledger state machine.
//!
//! A sweep is the cartesian product of models x tasks x frameworks x
//! hyper-parameter combinations, minus pairs where the framework cannot
//! score the task's label kind. Experiment ids are a stable hash of the axis
//! values, so re-enumerating an extended sweep never re-runs completed work.
//! Scheduling itself lives in the companion crate; the pure event-fold over
//! the append-only ledger is here so resume logic and the capacity-proof
//! replay in the tests share one implementation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::eval::Framework;
use crate::splits::LabelKind;

/// The task facts enumeration needs (parsed from the task YAML upstream).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskInfo {
    pub task_id: String,
    pub path: String,
    pub label_kind: LabelKind,
    pub n_folds: usize,
}

/// Hyper-parameter assignment in canonical string form.
pub type HyperAssignment = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Experiment {
    pub exp_id: String,
    pub model: String,
    pub task_id: String,
    pub task_path: String,
    pub framework: Framework,
    pub hyper: HyperAssignment,
    pub n_folds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentMatrix {
    pub experiments: Vec<Experiment>,
    /// (framework, label_kind) pairs dropped during enumeration.
    pub filtered_incompatible: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SweepError {
    #[error("empty sweep axis: {0}")]
    EmptyAxis(&'static str),
    #[error("every experiment was filtered out by framework/label compatibility")]
    EmptyMatrix,
    #[error("experiment id collision between {0} and {1}")]
    IdCollision(String, String),
}

/// FNV-1a 64-bit, hex-formatted: the stable experiment id hash.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    alloc::format!("{hash:016x}")
}

fn exp_id(model: &str, task_id: &str, framework: Framework, hyper: &HyperAssignment) -> String {
    let mut key = String::new();
    key.push_str(model);
    key.push('\x1f');
    key.push_str(task_id);
    key.push('\x1f');
    key.push_str(framework.as_str());
    for (k, v) in hyper {
        key.push('\x1f');
        key.push_str(k);
        key.push('=');
        key.push_str(v);
    }
    fnv1a_hex(key.as_bytes())
}

/// Cartesian hyper combinations of a per-parameter value grid, in
/// deterministic order (sorted parameter names, declared value order).
pub fn hyper_combinations(grid: &BTreeMap<String, Vec<String>>) -> Vec<HyperAssignment> {
    let mut combos: Vec<HyperAssignment> = alloc::vec![BTreeMap::new()];
    for (param, values) in grid {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for value in values {
                let mut extended = combo.clone();
                extended.insert(param.clone(), value.clone());
                next.push(extended);
            }
        }
        combos = next;
    }
    combos
}

/// Enumerate the full matrix in axis order: models, then tasks, then
/// frameworks, then hyper combinations.
pub fn enumerate_matrix(
    models: &[String],
    tasks: &[TaskInfo],
    frameworks: &[Framework],
    hyper_grids: &BTreeMap<Framework, BTreeMap<String, Vec<String>>>,
) -> Result<ExperimentMatrix, SweepError> {
    if models.is_empty() {
        return Err(SweepError::EmptyAxis("models"));
    }
    if tasks.is_empty() {
        return Err(SweepError::EmptyAxis("tasks"));
    }
    if frameworks.is_empty() {
        return Err(SweepError::EmptyAxis("frameworks"));
    }
    let empty = BTreeMap::new();
    let mut experiments = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut filtered = 0usize;
    for model in models {
        for task in tasks {
            for &framework in frameworks {
                if !framework.compatible_with(task.label_kind) {
                    filtered += 1;
                    continue;
                }
                let grid = hyper_grids.get(&framework).unwrap_or(&empty);
                for hyper in hyper_combinations(grid) {
                    let id = exp_id(model, &task.task_id, framework, &hyper);
                    if let Some(&prev) = seen.get(&id) {
                        let prev_exp: &Experiment = &experiments[prev];
                        return Err(SweepError::IdCollision(
                            alloc::format!(
                                "{}/{}/{}",
                                prev_exp.model,
                                prev_exp.task_id,
                                prev_exp.framework.as_str()
                            ),
                            alloc::format!("{}/{}/{}", model, task.task_id, framework.as_str()),
                        ));
                    }
                    seen.insert(id.clone(), experiments.len());
                    experiments.push(Experiment {
                        exp_id: id,
                        model: model.clone(),
                        task_id: task.task_id.clone(),
                        task_path: task.path.clone(),
                        framework,
                        hyper,
                        n_folds: task.n_folds,
                    });
                }
            }
        }
    }
    if experiments.is_empty() {
        return Err(SweepError::EmptyMatrix);
    }
    Ok(ExperimentMatrix { experiments, filtered_incompatible: filtered })
}

// ---------------------------------------------------------------------------
// Ledger state machine
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "transition", rename_all = "snake_case")]
pub enum Transition {
    Started { slot: u32 },
    Done,
    Failed { reason: String },
}

/// One append-only ledger line.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LedgerEvent {
    /// Milliseconds since the Unix epoch.
    #[serde(rename = "ts")]
    pub ts_ms: u64,
    pub exp_id: String,
    #[serde(flatten)]
    pub transition: Transition,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExpStatus {
    Pending,
    Running { slot: u32 },
    Done,
    Failed { reason: String },
}

/// Fold of a ledger event stream.
#[derive(Clone, Debug, Default)]
pub struct LedgerReplay {
    pub statuses: BTreeMap<String, ExpStatus>,
    /// Highest simultaneous occupancy ever seen per slot.
    pub peak_occupancy: BTreeMap<u32, usize>,
    /// Current occupancy per slot.
    pub occupancy: BTreeMap<u32, usize>,
    /// Transitions that violated the pending -> running -> done/failed order.
    pub violations: Vec<String>,
    pub durations_ms: Vec<u64>,
    started_at: BTreeMap<String, u64>,
}

impl LedgerReplay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, event: &LedgerEvent) {
        let current = self.statuses.get(&event.exp_id).cloned().unwrap_or(ExpStatus::Pending);
        match (&event.transition, current) {
            (Transition::Started { slot }, ExpStatus::Pending) => {
                self.statuses.insert(event.exp_id.clone(), ExpStatus::Running { slot: *slot });
                let occ = self.occupancy.entry(*slot).or_insert(0);
                *occ += 1;
                let peak = self.peak_occupancy.entry(*slot).or_insert(0);
                *peak = (*peak).max(*occ);
                self.started_at.insert(event.exp_id.clone(), event.ts_ms);
            }
            (Transition::Done, ExpStatus::Running { slot }) => {
                self.statuses.insert(event.exp_id.clone(), ExpStatus::Done);
                if let Some(occ) = self.occupancy.get_mut(&slot) {
                    *occ = occ.saturating_sub(1);
                }
                if let Some(started) = self.started_at.remove(&event.exp_id) {
                    self.durations_ms.push(event.ts_ms.saturating_sub(started));
                }
            }
            (Transition::Failed { reason }, ExpStatus::Running { slot }) => {
                self.statuses
                    .insert(event.exp_id.clone(), ExpStatus::Failed { reason: reason.clone() });
                if let Some(occ) = self.occupancy.get_mut(&slot) {
                    *occ = occ.saturating_sub(1);
                }
                self.started_at.remove(&event.exp_id);
            }
            (transition, state) => {
                self.violations.push(alloc::format!(
                    "{}: {:?} while {:?}",
                    event.exp_id,
                    transition,
                    state
                ));
            }
        }
    }

    pub fn replay(events: &[LedgerEvent]) -> LedgerReplay {
        let mut state = LedgerReplay::new();
        for e in events {
            state.apply(e);
        }
        state
    }

    /// Experiments recorded as done.
    pub fn done_ids(&self) -> Vec<&str> {
        self.statuses
            .iter()
            .filter(|(_, s)| matches!(s, ExpStatus::Done))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn count(&self, want: fn(&ExpStatus) -> bool) -> usize {
        self.statuses.values().filter(|s| want(s)).count()
    }
}
