//! Line-delimited JSON transcripts, one file per session.
//!
//! ```text
//! {"record":"new","format":"examforge-transcript","version":1,"session_id":"…","base_seed":"42","bank_ref":"sha256:…","blueprint":{…}}
//! {"record":"step","step_number":1,"seed":"…","bank_ref":"…","decision_vector":["R","M:P7"],"outcome":{"status":"draft","draft":{…}}}
//! {"record":"accept","step_number":1}
//! {"record":"abandon"}
//! ```
//!
//! Records are only ever appended. Writers hold an exclusive lock on the file
//! for the whole read-modify-append cycle.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Session, SessionError, SessionStatus, Step};
use crate::selector::Blueprint;

pub const TRANSCRIPT_FORMAT: &str = "examforge-transcript";
pub const TRANSCRIPT_VERSION: u32 = 1;
const EXTENSION: &str = "jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TranscriptRecord {
    New {
        format: String,
        version: u32,
        session_id: String,
        #[serde(with = "crate::wire::u64_string")]
        base_seed: u64,
        bank_ref: String,
        blueprint: Blueprint,
    },
    Step(Step),
    Accept {
        step_number: u32,
    },
    Abandon {},
}

impl Session {
    /// The transcript that reproduces this session.
    pub fn records(&self) -> Vec<TranscriptRecord> {
        let mut out = vec![TranscriptRecord::New {
            format: TRANSCRIPT_FORMAT.into(),
            version: TRANSCRIPT_VERSION,
            session_id: self.id.clone(),
            base_seed: self.base_seed,
            bank_ref: self.bank_ref.clone(),
            blueprint: self.blueprint.clone(),
        }];
        out.extend(self.steps.iter().cloned().map(TranscriptRecord::Step));
        match self.status {
            SessionStatus::Active => {}
            SessionStatus::Accepted => out.push(TranscriptRecord::Accept {
                step_number: self.steps.len() as u32,
            }),
            SessionStatus::Abandoned => out.push(TranscriptRecord::Abandon {}),
        }
        out
    }

    /// Folds records into a session, enforcing the state machine.
    pub fn from_records(
        records: impl IntoIterator<Item = TranscriptRecord>,
    ) -> Result<Self, SessionError> {
        let bad = |line: usize, message: String| SessionError::Transcript { line, message };
        let mut iter = records.into_iter();
        let mut session = match iter.next() {
            Some(TranscriptRecord::New {
                format,
                version,
                session_id,
                base_seed,
                bank_ref,
                blueprint,
            }) => {
                if format != TRANSCRIPT_FORMAT || version != TRANSCRIPT_VERSION {
                    return Err(bad(
                        1,
                        format!("unsupported transcript {format} v{version}"),
                    ));
                }
                Session {
                    id: session_id,
                    blueprint,
                    bank_ref,
                    steps: Vec::new(),
                    status: SessionStatus::Active,
                    base_seed,
                }
            }
            _ => return Err(bad(1, "transcript must start with a \"new\" record".into())),
        };
        for (i, record) in iter.enumerate() {
            let line = i + 2;
            if session.status != SessionStatus::Active {
                return Err(bad(
                    line,
                    format!("record after session became {}", session.status),
                ));
            }
            match record {
                TranscriptRecord::New { .. } => {
                    return Err(bad(line, "duplicate \"new\" record".into()))
                }
                TranscriptRecord::Step(step) => {
                    let expected = session.steps.len() as u32 + 1;
                    if step.step_number != expected {
                        return Err(bad(
                            line,
                            format!(
                                "step {} out of order (expected {expected})",
                                step.step_number
                            ),
                        ));
                    }
                    if step.decision_vector.len() != session.blueprint.slots.len() {
                        return Err(bad(line, "decision vector length mismatch".into()));
                    }
                    session.steps.push(step);
                }
                TranscriptRecord::Accept { step_number } => {
                    if session.latest_draft().is_none() || step_number != session.steps.len() as u32
                    {
                        return Err(bad(line, "accept without a latest draft".into()));
                    }
                    session.status = SessionStatus::Accepted;
                }
                TranscriptRecord::Abandon {} => session.status = SessionStatus::Abandoned,
            }
        }
        Ok(session)
    }

    pub fn to_transcript(&self) -> String {
        self.records().iter().map(line_of).collect()
    }

    pub fn from_transcript(text: &str) -> Result<Self, SessionError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<TranscriptRecord>(l).map_err(|e| SessionError::Transcript {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_records(records)
    }
}

fn line_of(record: &TranscriptRecord) -> String {
    let mut s = serde_json::to_string(record).expect("transcript record serializes");
    s.push('\n');
    s
}

/// Directory of transcript files, `<dir>/<session id>.jsonl`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

fn io_err(path: &Path, source: io::Error) -> SessionError {
    SessionError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Default id for a session: the exam date plus a digest of the blueprint
/// and base seed, e.g. `exam-2025-06-15-3f9a0c1b`.
pub fn default_session_id(blueprint: &Blueprint, base_seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(blueprint).expect("blueprint serializes"));
    h.update(base_seed.to_be_bytes());
    let digest = h.finalize();
    let tag: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
    format!("exam-{}-{tag}", blueprint.exam_date.format("%Y-%m-%d"))
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Transcripts live in `sessions/` next to the bank manifest.
    pub fn for_bank(bank_dir: &Path) -> Self {
        Self::new(bank_dir.join("sessions"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> Result<PathBuf, SessionError> {
        if !valid_session_id(id) {
            return Err(SessionError::InvalidId(id.to_owned()));
        }
        Ok(self.dir.join(format!("{id}.{EXTENSION}")))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.path(id).is_ok_and(|p| p.exists())
    }

    /// Writes the transcript of a new session; fails if the id is taken.
    pub fn create(&self, session: &Session) -> Result<(), SessionError> {
        let path = self.path(&session.id)?;
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(SessionError::AlreadyExists(session.id.clone()))
            }
            Err(e) => return Err(io_err(&path, e)),
        };
        file.lock().map_err(|e| io_err(&path, e))?;
        file.write_all(session.to_transcript().as_bytes())
            .and_then(|_| file.sync_all())
            .map_err(|e| io_err(&path, e))
    }

    /// Like [`create`](Self::create), but when the id is taken appends
    /// `-2`, `-3`, … until a free one is found. Returns the id used.
    pub fn create_unique(&self, session: &mut Session) -> Result<String, SessionError> {
        let base = session.id.clone();
        for n in 1u32.. {
            if n > 1 {
                session.id = format!("{base}-{n}");
            }
            match self.create(session) {
                Err(SessionError::AlreadyExists(_)) if n < 10_000 => continue,
                other => return other.map(|()| session.id.clone()),
            }
        }
        unreachable!("loop returns")
    }

    pub fn load(&self, id: &str) -> Result<Session, SessionError> {
        let path = self.path(id)?;
        let mut file = open_existing(&path, id, false)?;
        file.lock_shared().map_err(|e| io_err(&path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|e| io_err(&path, e))?;
        Session::from_transcript(&text)
    }

    /// Runs `change` on the current session under an exclusive file lock and
    /// appends whatever records it produced. Nothing is written on error.
    pub fn update<T>(
        &self,
        id: &str,
        change: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let path = self.path(id)?;
        let mut file = open_existing(&path, id, true)?;
        file.lock().map_err(|e| io_err(&path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|e| io_err(&path, e))?;
        let mut session = Session::from_transcript(&text)?;
        let before = session.records().len();

        let value = change(&mut session)?;

        let records = session.records();
        let appended: String = records[before..].iter().map(line_of).collect();
        if !appended.is_empty() {
            file.seek(SeekFrom::End(0)).map_err(|e| io_err(&path, e))?;
            file.write_all(appended.as_bytes())
                .and_then(|_| file.sync_all())
                .map_err(|e| io_err(&path, e))?;
        }
        Ok(value)
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, SessionError> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.dir, e)),
        };
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let path = e.path();
                (path.extension()? == EXTENSION)
                    .then(|| path.file_stem()?.to_str().map(str::to_owned))
                    .flatten()
            })
            .filter(|id| valid_session_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

fn open_existing(path: &Path, id: &str, write: bool) -> Result<File, SessionError> {
    OpenOptions::new()
        .read(true)
        .write(write)
        .open(path)
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => SessionError::NotFound(id.to_owned()),
            _ => io_err(path, e),
        })
}
