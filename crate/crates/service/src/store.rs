//! Append-only event log with periodic snapshots.
//!
//! Layout of a data directory:
//!
//! ```text
//! events.jsonl              one Envelope per line
//! snapshots/<seq>.json      canonical State after event <seq>
//! templates/*.toml          scheme templates loaded at startup
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::state::{ApplyError, Envelope, State};

pub const EVENT_LOG: &str = "events.jsonl";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const TEMPLATE_DIR: &str = "templates";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every complete event. A trailing line without its newline is the
/// remains of an interrupted append and is reported separately.
fn read_events(path: &Path) -> Result<(Vec<Envelope>, u64), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io(path)(e)),
    };
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut good_bytes = 0u64;
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io(path))?;
        if n == 0 {
            break;
        }
        number += 1;
        if !line.ends_with('\n') {
            break;
        }
        let envelope: Envelope = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: number,
            reason: e.to_string(),
        })?;
        events.push(envelope);
        good_bytes += n as u64;
    }
    Ok((events, good_bytes))
}

/// All complete events of a data directory.
pub fn read_log(dir: &Path) -> Result<Vec<Envelope>, StoreError> {
    Ok(read_events(&dir.join(EVENT_LOG))?.0)
}

/// State rebuilt from the event log alone, ignoring snapshots.
pub fn replay(dir: &Path) -> Result<State, StoreError> {
    replay_until(dir, u64::MAX)
}

/// State after the events with `seq ≤ until`.
pub fn replay_until(dir: &Path, until: u64) -> Result<State, StoreError> {
    let mut state = State::default();
    for envelope in read_log(dir)? {
        if envelope.seq > until {
            break;
        }
        state.apply(&envelope)?;
    }
    Ok(state)
}

/// Snapshot files as `(seq, path)`, ascending.
pub fn snapshots(dir: &Path) -> Result<Vec<(u64, PathBuf)>, StoreError> {
    let sdir = dir.join(SNAPSHOT_DIR);
    let entries = match fs::read_dir(&sdir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(&sdir)(e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(io(&sdir))?.path();
        let seq = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(seq) = seq {
            out.push((seq, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Where events go.
#[derive(Debug)]
pub struct Store {
    dir: Option<PathBuf>,
    log: Option<File>,
    snapshot_every: u64,
}

impl Store {
    /// A store that keeps nothing on disk.
    pub fn memory() -> Self {
        Store {
            dir: None,
            log: None,
            snapshot_every: 0,
        }
    }

    /// Opens (creating if needed) a data directory and rebuilds the state
    /// from the newest snapshot plus the events after it. A torn final line
    /// is cut off.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(Store, State), StoreError> {
        fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(io(dir))?;
        let path = dir.join(EVENT_LOG);
        let (events, good_bytes) = read_events(&path)?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        if log.metadata().map_err(io(&path))?.len() != good_bytes {
            log.set_len(good_bytes).map_err(io(&path))?;
            log.sync_all().map_err(io(&path))?;
        }

        let mut state = State::default();
        for (seq, snap) in snapshots(dir)?.into_iter().rev() {
            if events.last().is_some_and(|e| e.seq < seq) {
                continue;
            }
            let bytes = fs::read(&snap).map_err(io(&snap))?;
            if let Ok(s) = serde_json::from_slice::<State>(&bytes) {
                if s.seq == seq {
                    state = s;
                    break;
                }
            }
        }
        let base = state.seq;
        for envelope in events.iter().filter(|e| e.seq > base) {
            state.apply(envelope)?;
        }
        let store = Store {
            dir: Some(dir.to_path_buf()),
            log: Some(log),
            snapshot_every,
        };
        Ok((store, state))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Appends one event and flushes it to disk before returning.
    pub fn append(&mut self, envelope: &Envelope) -> Result<(), StoreError> {
        let (Some(log), Some(dir)) = (self.log.as_mut(), self.dir.as_ref()) else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(envelope).expect("events serialize");
        line.push(b'\n');
        let path = dir.join(EVENT_LOG);
        log.write_all(&line).map_err(io(&path))?;
        log.sync_data().map_err(io(&path))?;
        Ok(())
    }

    /// Writes a snapshot when `state.seq` is a multiple of the interval.
    pub fn maybe_snapshot(&self, state: &State) -> Result<(), StoreError> {
        if self.snapshot_every > 0 && state.seq.is_multiple_of(self.snapshot_every) {
            self.snapshot(state)?;
        }
        Ok(())
    }

    pub fn snapshot(&self, state: &State) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let sdir = dir.join(SNAPSHOT_DIR);
        let tmp = sdir.join(format!("{:012}.json.tmp", state.seq));
        let path = sdir.join(format!("{:012}.json", state.seq));
        let mut file = File::create(&tmp).map_err(io(&tmp))?;
        file.write_all(&state.snapshot_bytes()).map_err(io(&tmp))?;
        file.sync_all().map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))?;
        Ok(())
    }
}

/// True when `dir` is absent or has no entries.
pub fn is_empty_dir(dir: &Path) -> Result<bool, StoreError> {
    match fs::read_dir(dir) {
        Ok(mut entries) => Ok(entries.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(io(dir)(e)),
    }
}
