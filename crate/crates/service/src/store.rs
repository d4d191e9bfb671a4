//! Append-only JSON-lines event log, offline replay and snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use dmlab_core::env::{Event, EventRecord, RewardSpec};
use dmlab_core::metrics::{scenario_metrics, ScenarioMetrics};
use dmlab_core::Level;
use serde::{Deserialize, Serialize};

use crate::model::Role;

pub const LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    SessionCreated {
        session_id: String,
        role: Role,
        created_at: u64,
        sampler_seed: u64,
    },
    Action {
        session_id: String,
        scenario_index: usize,
        is_training: bool,
        level: Level,
        /// Canonical slot (gather is 4 on every level).
        slot: usize,
        event: Event,
        reward: f64,
        record_id: String,
    },
    ScenarioCompleted {
        session_id: String,
        scenario_index: usize,
        is_training: bool,
    },
    SessionFinished {
        session_id: String,
        finished_at: u64,
    },
}

impl LogEntry {
    pub fn session_id(&self) -> &str {
        match self {
            LogEntry::SessionCreated { session_id, .. }
            | LogEntry::Action { session_id, .. }
            | LogEntry::ScenarioCompleted { session_id, .. }
            | LogEntry::SessionFinished { session_id, .. } => session_id,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    v: u32,
    #[serde(flatten)]
    entry: LogEntry,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("event log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Single-writer sink. Without a path, entries are only kept in memory.
#[derive(Debug, Default)]
pub struct EventLog {
    writer: Option<BufWriter<File>>,
    path: Option<PathBuf>,
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog::default()
    }

    /// Opens `path` for appending and returns the entries already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            read_log(io::BufReader::new(File::open(&path)?))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventLog {
            writer: Some(BufWriter::new(file)),
            path: Some(path),
            entries,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Writes and flushes one line before returning.
    pub fn append(&mut self, entry: LogEntry) -> Result<(), StoreError> {
        if let Some(w) = self.writer.as_mut() {
            let line = LogLine {
                v: LOG_VERSION,
                entry: entry.clone(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }
}

pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogEntry>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        if parsed.v != LOG_VERSION {
            return Err(StoreError::Corrupt {
                line: i + 1,
                message: format!("unsupported log version {}", parsed.v),
            });
        }
        out.push(parsed.entry);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub index: usize,
    pub is_training: bool,
    pub completed: bool,
    pub events: Vec<EventRecord>,
}

/// One participant's session as reconstructed from the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub role: Role,
    pub created_at: u64,
    pub scenarios: Vec<ScenarioLog>,
    pub finished: bool,
    pub training_completed: bool,
}

impl SessionRecord {
    /// Metrics of completed, scored scenarios in play order.
    pub fn scored_metrics(&self, rewards: &RewardSpec) -> dmlab_core::Result<Vec<ScenarioMetrics>> {
        self.scenarios
            .iter()
            .filter(|s| s.completed && !s.is_training)
            .map(|s| scenario_metrics(&s.events, rewards))
            .collect()
    }
}

/// Rebuilds session records from log entries, in creation order.
pub fn replay(entries: &[LogEntry]) -> Result<Vec<SessionRecord>, StoreError> {
    let mut sessions: Vec<SessionRecord> = Vec::new();
    let find = |sessions: &mut Vec<SessionRecord>, id: &str, line: usize| -> Result<usize, StoreError> {
        sessions
            .iter()
            .position(|s| s.session_id == id)
            .ok_or_else(|| StoreError::Corrupt {
                line,
                message: format!("entry for unknown session {id}"),
            })
    };
    for (i, entry) in entries.iter().enumerate() {
        let line = i + 1;
        match entry {
            LogEntry::SessionCreated {
                session_id,
                role,
                created_at,
                ..
            } => sessions.push(SessionRecord {
                session_id: session_id.clone(),
                role: *role,
                created_at: *created_at,
                scenarios: Vec::new(),
                finished: false,
                training_completed: false,
            }),
            LogEntry::Action {
                session_id,
                scenario_index,
                is_training,
                level,
                slot,
                event,
                reward,
                record_id,
            } => {
                let s = find(&mut sessions, session_id, line)?;
                let scenarios = &mut sessions[s].scenarios;
                if scenarios.last().is_none_or(|sc| sc.index != *scenario_index) {
                    scenarios.push(ScenarioLog {
                        index: *scenario_index,
                        is_training: *is_training,
                        completed: false,
                        events: Vec::new(),
                    });
                }
                scenarios.last_mut().expect("pushed above").events.push(EventRecord {
                    level: *level,
                    slot: *slot,
                    event: *event,
                    reward: *reward,
                    record_id: record_id.clone(),
                });
            }
            LogEntry::ScenarioCompleted {
                session_id,
                scenario_index,
                is_training,
            } => {
                let s = find(&mut sessions, session_id, line)?;
                let record = &mut sessions[s];
                match record.scenarios.last_mut() {
                    Some(sc) if sc.index == *scenario_index => sc.completed = true,
                    _ => {
                        return Err(StoreError::Corrupt {
                            line,
                            message: format!("completion of unplayed scenario {scenario_index}"),
                        })
                    }
                }
                if *is_training {
                    record.training_completed = true;
                }
            }
            LogEntry::SessionFinished { session_id, .. } => {
                let s = find(&mut sessions, session_id, line)?;
                sessions[s].finished = true;
            }
        }
    }
    Ok(sessions)
}

/// Writes `records` as pretty JSON through a temporary file and rename.
pub fn write_snapshot(path: impl AsRef<Path>, records: &[SessionRecord]) -> Result<(), StoreError> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer_pretty(&mut w, records).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Vec<SessionRecord>, StoreError> {
    let file = File::open(path)?;
    serde_json::from_reader(io::BufReader::new(file)).map_err(|e| StoreError::Corrupt {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn action(id: &str, idx: usize, event: Event, reward: f64) -> LogEntry {
        LogEntry::Action {
            session_id: id.into(),
            scenario_index: idx,
            is_training: idx == 0,
            level: Level::FIRST,
            slot: 0,
            event,
            reward,
            record_id: "r".into(),
        }
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let created = LogEntry::SessionCreated {
            session_id: "a".into(),
            role: Role::Victim,
            created_at: 1,
            sampler_seed: 9,
        };
        {
            let mut log = EventLog::open(&path).unwrap();
            log.append(created.clone()).unwrap();
            log.append(action("a", 0, Event::Correct, 1.0)).unwrap();
        }
        let log = EventLog::open(&path).unwrap();
        assert_eq!(log.entries().len(), 2);
        assert_eq!(log.entries()[0], created);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.starts_with("{\"v\":1,\"type\":")));
    }

    #[test]
    fn replay_groups_scenarios() {
        let entries = vec![
            LogEntry::SessionCreated {
                session_id: "a".into(),
                role: Role::Volunteer,
                created_at: 0,
                sampler_seed: 0,
            },
            action("a", 0, Event::Correct, 1.0),
            LogEntry::ScenarioCompleted {
                session_id: "a".into(),
                scenario_index: 0,
                is_training: true,
            },
            action("a", 1, Event::Gathered, -1.0),
            action("a", 1, Event::Wrong, -5.0),
            LogEntry::SessionFinished {
                session_id: "a".into(),
                finished_at: 3,
            },
        ];
        let records = replay(&entries).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert!(r.training_completed && r.finished);
        assert_eq!(r.scenarios.len(), 2);
        assert!(!r.scenarios[1].completed);
        // the open scenario is not scored
        assert!(r.scored_metrics(&RewardSpec::default()).unwrap().is_empty());
    }

    #[test]
    fn corrupt_lines_are_located() {
        let err = read_log(
            "{\"v\":1,\"type\":\"session_finished\",\"session_id\":\"x\",\"finished_at\":0}\nnot json\n".as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, StoreError::Corrupt { line: 2, .. }));
        let unknown = vec![action("ghost", 1, Event::Correct, 1.0)];
        assert!(replay(&unknown).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.json");
        let records = vec![SessionRecord {
            session_id: "s".into(),
            role: Role::Stakeholder,
            created_at: 5,
            scenarios: vec![],
            finished: false,
            training_completed: false,
        }];
        write_snapshot(&path, &records).unwrap();
        assert_eq!(read_snapshot(&path).unwrap(), records);
    }
}
