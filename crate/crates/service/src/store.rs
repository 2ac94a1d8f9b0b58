// SPDX-License-Identifier: MIT OR Apache-2.0

//! Append-only JSON-lines event log with periodic state snapshots.
//!
//! An event is written and flushed before it is applied, so the state
//! rebuilt from the log after a crash is the state last acknowledged. A
//! torn final line (partial write) is ignored on replay.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::ServiceError;
use crate::state::{Event, State};

const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

pub struct Store {
    dir: Option<PathBuf>,
    log: Option<File>,
    snapshot_every: u64,
}

impl Store {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            log: None,
            snapshot_every: 0,
        }
    }

    /// Opens (or creates) a store directory and rebuilds the state.
    pub fn open(dir: impl AsRef<Path>, snapshot_every: u64) -> Result<(Self, State), ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ServiceError::storage(&dir, e))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = if snap_path.exists() {
            let text = fs::read_to_string(&snap_path).map_err(|e| ServiceError::storage(&snap_path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| ServiceError::Storage(format!("{}: {e}", snap_path.display())))?
        } else {
            State::default()
        };

        let log_path = dir.join(LOG_FILE);
        if log_path.exists() {
            let file = File::open(&log_path).map_err(|e| ServiceError::storage(&log_path, e))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| ServiceError::storage(&log_path, e))?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate().skip(state.events_applied as usize) {
                match serde_json::from_str::<Event>(line) {
                    Ok(ev) => state.apply(&ev),
                    Err(_) if i + 1 == last => {
                        log::warn!("ignoring torn final line in {}", log_path.display());
                    }
                    Err(e) => {
                        return Err(ServiceError::Storage(format!(
                            "{} line {}: {e}",
                            log_path.display(),
                            i + 1
                        )))
                    }
                }
            }
        }

        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| ServiceError::storage(&log_path, e))?;
        Ok((
            Self {
                dir: Some(dir),
                log: Some(log),
                snapshot_every,
            },
            state,
        ))
    }

    /// Persists `event`; the caller applies it only after this succeeds.
    pub fn append(&mut self, event: &Event) -> Result<(), ServiceError> {
        if let Some(log) = &mut self.log {
            let mut line = serde_json::to_vec(event).expect("events serialize");
            line.push(b'\n');
            log.write_all(&line)
                .and_then(|_| log.sync_data())
                .map_err(|e| ServiceError::Storage(format!("appending event: {e}")))?;
        }
        Ok(())
    }

    /// Writes a snapshot when due. Snapshots are an optimisation; the log
    /// alone is sufficient to rebuild the state.
    pub fn maybe_snapshot(&self, state: &State) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        if self.snapshot_every == 0 || !state.events_applied.is_multiple_of(self.snapshot_every) {
            return Ok(());
        }
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let text = serde_json::to_string(state).expect("state serializes");
        fs::write(&tmp, text).map_err(|e| ServiceError::storage(&tmp, e))?;
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE)).map_err(|e| ServiceError::storage(dir, e))
    }
}
