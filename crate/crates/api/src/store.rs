//! File-backed trial store.
//!
//! Each trial lives in `<root>/<id>/`:
//!
//! * `config.json`: the [`TrialConfig`], written once.
//! * `events.jsonl`: append-only [`Event`] log. Outcome submissions are the
//!   inputs; iteration records are the design's output for each refit and
//!   are checked again on replay.
//! * `snapshot.json`: the latest [`TrialSnapshot`], rewritten after every
//!   change.
//!
//! Opening a store replays every log from its config and refuses trials whose
//! replayed state differs from the stored records or snapshot.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use arc_swap::ArcSwap;
use bayesdose_core::design::{IterationRecord, Outcome, SubmitProgress, Trial, TrialSnapshot, TrialStatus};
use bayesdose_core::DesignError;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::schema::{FieldProblem, SignConvention, TrialConfig, SCHEMA_VERSION};

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Outcomes {
        seq: u64,
        cohort_id: Option<String>,
        outcomes: Vec<Outcome>,
    },
    Iteration {
        record: Box<IterationRecord>,
    },
}

/// Immutable state published to readers after each change.
#[derive(Debug, Clone)]
pub struct TrialState {
    pub config: TrialConfig,
    pub trial: Trial,
}

struct Writer {
    trial: Trial,
    events: File,
    seq: u64,
    cohorts: HashMap<String, Vec<Outcome>>,
}

struct Entry {
    dir: PathBuf,
    config: TrialConfig,
    writer: Mutex<Writer>,
    published: ArcSwap<TrialState>,
}

pub struct TrialStore {
    root: PathBuf,
    trials: RwLock<BTreeMap<String, Arc<Entry>>>,
}

pub struct Submission {
    pub duplicate: bool,
    pub progress: SubmitProgress,
    pub state: Arc<TrialState>,
}

fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

fn json_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut line = serde_json::to_vec(value).expect("event serializes");
    line.push(b'\n');
    line
}

fn pending_total(trial: &Trial) -> usize {
    trial.pending().iter().map(|a| a.remaining()).sum()
}

impl TrialStore {
    /// Opens (creating if needed) a store rooted at `root` and replays every
    /// trial found there.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut trials = BTreeMap::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("config.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let entry = Self::load(&dir)?;
            trials.insert(entry.config.id.clone(), Arc::new(entry));
        }
        Ok(Self {
            root,
            trials: RwLock::new(trials),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> Vec<String> {
        self.trials.read().keys().cloned().collect()
    }

    fn load(dir: &Path) -> Result<Entry, ApiError> {
        let config: TrialConfig = serde_json::from_slice(&fs::read(dir.join("config.json"))?)?;
        let events_path = dir.join("events.jsonl");
        let events = if events_path.exists() {
            read_events(&events_path)?
        } else {
            Vec::new()
        };
        let replayed = replay(&config, &events)?;
        let snapshot_path = dir.join("snapshot.json");
        if snapshot_path.exists() {
            let stored: serde_json::Value = serde_json::from_slice(&fs::read(&snapshot_path)?)?;
            if stored != serde_json::to_value(replayed.trial.snapshot())? {
                return Err(ApiError::Replay(format!(
                    "trial `{}`: replayed state differs from snapshot.json",
                    config.id
                )));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&events_path)?;
        let state = TrialState {
            config: config.clone(),
            trial: replayed.trial.clone(),
        };
        Ok(Entry {
            dir: dir.to_path_buf(),
            config,
            writer: Mutex::new(Writer {
                trial: replayed.trial,
                events: file,
                seq: replayed.seq,
                cohorts: replayed.cohorts,
            }),
            published: ArcSwap::from_pointee(state),
        })
    }

    /// Creates and persists a trial; the id must be new.
    pub fn create(
        &self,
        id: Option<String>,
        design: bayesdose_core::design::DesignConfig,
    ) -> Result<Arc<TrialState>, ApiError> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        if !valid_id(&id) {
            return Err(ApiError::invalid_field(
                "id",
                "must be 1 to 64 ASCII letters, digits, '-' or '_'",
            ));
        }
        let problems = design.problems();
        if !problems.is_empty() {
            return Err(ApiError::InvalidRequest {
                message: "invalid design configuration".into(),
                fields: problems
                    .into_iter()
                    .map(|p| FieldProblem {
                        field: format!("design.{}", p.field),
                        message: p.message,
                    })
                    .collect(),
            });
        }
        let trial = Trial::new(design.clone())?;
        let config = TrialConfig {
            schema_version: SCHEMA_VERSION,
            id: id.clone(),
            sign_convention: SignConvention::NegatedEfficacy,
            design,
        };
        let mut trials = self.trials.write();
        let dir = self.root.join(&id);
        if trials.contains_key(&id) || dir.exists() {
            return Err(ApiError::Conflict(format!("trial `{id}` already exists")));
        }
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("config.json"), &serde_json::to_vec_pretty(&config)?)?;
        let events = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("events.jsonl"))?;
        write_atomic(&dir.join("snapshot.json"), &serde_json::to_vec(&trial.snapshot())?)?;
        let state = Arc::new(TrialState {
            config: config.clone(),
            trial: trial.clone(),
        });
        let entry = Entry {
            dir,
            config,
            writer: Mutex::new(Writer {
                trial,
                events,
                seq: 0,
                cohorts: HashMap::new(),
            }),
            published: ArcSwap::new(state.clone()),
        };
        trials.insert(id, Arc::new(entry));
        Ok(state)
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.trials
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no trial `{id}`")))
    }

    /// Latest published state; never blocks on a writer.
    pub fn get(&self, id: &str) -> Result<Arc<TrialState>, ApiError> {
        Ok(self.entry(id)?.published.load_full())
    }

    /// Applies a submission under the trial's writer lock. Either every
    /// outcome is logged and applied or nothing changes.
    pub fn submit(&self, id: &str, cohort_id: Option<String>, outcomes: Vec<Outcome>) -> Result<Submission, ApiError> {
        let entry = self.entry(id)?;
        let mut w = entry.writer.lock();
        if let Some(cid) = &cohort_id {
            if let Some(previous) = w.cohorts.get(cid) {
                if *previous != outcomes {
                    return Err(ApiError::Conflict(format!(
                        "cohort id `{cid}` was already used for different outcomes"
                    )));
                }
                return Ok(Submission {
                    duplicate: true,
                    progress: SubmitProgress {
                        accepted: 0,
                        cohort_complete: false,
                        remaining: pending_total(&w.trial),
                    },
                    state: entry.published.load_full(),
                });
            }
        }
        let mut next = w.trial.clone();
        let before = next.history().len();
        let progress = next.submit(&outcomes)?;
        let seq = w.seq + 1;
        let mut lines = json_line(&Event::Outcomes {
            seq,
            cohort_id: cohort_id.clone(),
            outcomes: outcomes.clone(),
        });
        for record in &next.history()[before..] {
            lines.extend(json_line(&Event::Iteration {
                record: Box::new(record.clone()),
            }));
        }
        w.events.write_all(&lines)?;
        w.events.sync_data()?;
        write_atomic(&entry.dir.join("snapshot.json"), &serde_json::to_vec(&next.snapshot())?)?;
        w.seq = seq;
        if let Some(cid) = cohort_id {
            w.cohorts.insert(cid, outcomes);
        }
        let state = Arc::new(TrialState {
            config: entry.config.clone(),
            trial: next.clone(),
        });
        w.trial = next;
        entry.published.store(state.clone());
        Ok(Submission {
            duplicate: false,
            progress,
            state,
        })
    }

    /// Rewrites every snapshot and syncs every log.
    pub fn flush(&self) -> Result<(), ApiError> {
        for entry in self.trials.read().values() {
            let w = entry.writer.lock();
            w.events.sync_all()?;
            write_atomic(
                &entry.dir.join("snapshot.json"),
                &serde_json::to_vec(&w.trial.snapshot())?,
            )?;
        }
        Ok(())
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, ApiError> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event =
            serde_json::from_str(&line).map_err(|e| ApiError::Replay(format!("{}:{}: {e}", path.display(), i + 1)))?;
        events.push(event);
    }
    Ok(events)
}

pub struct Replayed {
    pub trial: Trial,
    pub seq: u64,
    pub cohorts: HashMap<String, Vec<Outcome>>,
}

/// Rebuilds a trial from its config and event log, checking that every
/// logged iteration record is reproduced exactly and in order.
pub fn replay(config: &TrialConfig, events: &[Event]) -> Result<Replayed, ApiError> {
    let mut trial = Trial::new(config.design.clone())?;
    let mut seq = 0;
    let mut cohorts = HashMap::new();
    let mut checked = 0;
    for event in events {
        match event {
            Event::Outcomes {
                seq: s,
                cohort_id,
                outcomes,
            } => {
                if *s != seq + 1 {
                    return Err(ApiError::Replay(format!("event sequence jumps from {seq} to {s}")));
                }
                if checked != trial.history().len() {
                    return Err(ApiError::Replay(format!(
                        "log is missing iteration records before submission {s}"
                    )));
                }
                trial
                    .submit(outcomes)
                    .map_err(|e| ApiError::Replay(format!("submission {s}: {e}")))?;
                seq = *s;
                if let Some(cid) = cohort_id {
                    cohorts.insert(cid.clone(), outcomes.clone());
                }
            }
            Event::Iteration { record } => {
                let produced = trial.history().get(checked);
                if produced != Some(record.as_ref()) {
                    return Err(ApiError::Replay(format!(
                        "iteration record {checked} (iteration {}, stratum {}) is not reproduced",
                        record.iteration, record.stratum
                    )));
                }
                checked += 1;
            }
        }
    }
    if checked != trial.history().len() {
        return Err(ApiError::Replay("log ends before the last iteration records".into()));
    }
    Ok(Replayed { trial, seq, cohorts })
}

impl TrialState {
    pub fn snapshot(&self) -> TrialSnapshot {
        self.trial.snapshot()
    }

    pub fn status(&self) -> TrialStatus {
        self.trial.status()
    }
}

impl From<DesignError> for ApiError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::InvalidConfig(m) | DesignError::InvalidArgument(m) => ApiError::InvalidRequest {
                message: m,
                fields: Vec::new(),
            },
            DesignError::Conflict(m) => ApiError::Conflict(m),
            DesignError::NotEnrolling(m) => ApiError::InvalidState(m),
            DesignError::Fit(e) => ApiError::Internal(format!("surrogate fit failed: {e}")),
        }
    }
}
