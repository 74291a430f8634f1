//! Sessions in memory, backed by a directory per session:
//!
//! - `meta.json`: algorithm, constraints and the resolved engine config (seed included)
//! - `events.jsonl`: one feedback event per line, append-only
//! - `report.json`: written once when the user reports the target
//! - `state.json`: a snapshot rewritten after every change, for inspection only
//!
//! A session that is not in memory is rebuilt by replaying its event log.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use relfeed::corpus::{AttributeFilter, Corpus};
use relfeed::engine::{Algorithm, BaseEmbeddings, EngineConfig, FeedbackEvent, FeedbackOutcome, Session, SessionStatus};
use serde::{Deserialize, Serialize};

use crate::{Result, ServiceError};

const META: &str = "meta.json";
const EVENTS: &str = "events.jsonl";
const REPORT: &str = "report.json";
const STATE: &str = "state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub algorithm: Algorithm,
    pub constraints: AttributeFilter,
    pub engine: EngineConfig,
    pub created_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub image_id: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub similar: usize,
    pub dissimilar: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub status: SessionStatus,
    pub iteration: usize,
    pub counts: Counts,
    pub last_batch: Vec<String>,
    pub updated_ms: u64,
}

pub struct SessionRecord {
    pub meta: SessionMeta,
    pub session: Session,
    pub updated_ms: u64,
    dir: PathBuf,
    last_access: Instant,
}

impl SessionRecord {
    pub fn log_path(&self) -> PathBuf {
        self.dir.join(EVENTS)
    }

    pub fn counts(&self) -> Counts {
        Counts {
            similar: self.session.similar().len(),
            dissimilar: self.session.dissimilar().len(),
            remaining: self.session.remaining(),
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            status: self.session.status(),
            iteration: self.session.iteration(),
            counts: self.counts(),
            last_batch: self.session.batch_ids(),
            updated_ms: self.updated_ms,
        }
    }

    /// Apply feedback and append the resulting event to the log before returning.
    pub fn feedback(&mut self, similar_ids: &[String]) -> Result<FeedbackOutcome> {
        let outcome = self.session.submit_feedback(similar_ids)?;
        let event = self.session.events().last().expect("feedback appends an event");
        append_line(&self.log_path(), event)?;
        self.touch()?;
        Ok(outcome)
    }

    pub fn report(&mut self, image_id: &str) -> Result<usize> {
        let n = self.session.report_target(image_id)?;
        write_json(
            &self.dir.join(REPORT),
            &Report {
                image_id: image_id.to_string(),
                iteration: n,
            },
        )?;
        self.touch()?;
        Ok(n)
    }

    fn touch(&mut self) -> Result<()> {
        self.updated_ms = now_ms();
        self.last_access = Instant::now();
        write_json(&self.dir.join(STATE), &self.snapshot())
    }
}

pub type SharedRecord = Arc<Mutex<SessionRecord>>;

pub struct SessionStore {
    corpus: Arc<Corpus>,
    root: PathBuf,
    defaults: EngineConfig,
    algorithm: Algorithm,
    max_iterations: usize,
    default_base: Arc<BaseEmbeddings>,
    live: Mutex<HashMap<String, SharedRecord>>,
}

/// Session ids are 32 lowercase hex digits.
pub fn is_session_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

fn new_session_id() -> String {
    hex::encode(rand::rng().random::<[u8; 16]>())
}

impl SessionStore {
    pub fn open(
        corpus: Arc<Corpus>,
        root: impl Into<PathBuf>,
        defaults: EngineConfig,
        algorithm: Algorithm,
        max_iterations: usize,
    ) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ServiceError::Io(root.clone(), e))?;
        let default_base = Arc::new(BaseEmbeddings::from_corpus(&corpus, &defaults)?);
        Ok(Self {
            corpus,
            root,
            defaults,
            algorithm,
            max_iterations,
            default_base,
            live: Mutex::new(HashMap::new()),
        })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    /// Resolve the engine config for a new session: defaults, then JSON overrides,
    /// then the service clip unless the overrides set their own, then the seed.
    pub fn resolve_config(&self, overrides: Option<&serde_json::Value>, seed: Option<u64>) -> Result<EngineConfig> {
        let mut value = serde_json::to_value(EngineConfig {
            max_iterations: self.max_iterations,
            ..self.defaults.clone()
        })
        .expect("config serializes");
        if let Some(o) = overrides {
            let obj = o
                .as_object()
                .ok_or_else(|| ServiceError::BadRequest("config_overrides must be an object".into()))?;
            let target = value.as_object_mut().expect("config is an object");
            for (k, v) in obj {
                if !target.contains_key(k) {
                    return Err(ServiceError::BadRequest(format!("unknown config field {k:?}")));
                }
                target.insert(k.clone(), v.clone());
            }
        }
        let mut cfg: EngineConfig =
            serde_json::from_value(value).map_err(|e| ServiceError::BadRequest(format!("config_overrides: {e}")))?;
        cfg.seed = seed.unwrap_or_else(|| rand::rng().random());
        cfg.validate()?;
        Ok(cfg)
    }

    fn start(&self, meta: &SessionMeta) -> Result<Session> {
        let same_base = meta.engine.view == self.defaults.view && meta.engine.view_weights == self.defaults.view_weights;
        let s = if same_base {
            Session::start_shared(
                self.corpus.clone(),
                self.default_base.clone(),
                meta.constraints.clone(),
                meta.engine.clone(),
                meta.algorithm,
                None,
            )
        } else {
            Session::start(self.corpus.clone(), meta.constraints.clone(), meta.engine.clone(), meta.algorithm)
        };
        Ok(s?)
    }

    pub fn create(
        &self,
        constraints: AttributeFilter,
        overrides: Option<&serde_json::Value>,
        seed: Option<u64>,
        algorithm: Option<Algorithm>,
    ) -> Result<(String, SharedRecord)> {
        let engine = self.resolve_config(overrides, seed)?;
        let mut meta = SessionMeta {
            id: String::new(),
            algorithm: algorithm.unwrap_or(self.algorithm),
            constraints,
            engine,
            created_ms: now_ms(),
        };
        let session = self.start(&meta)?;

        let mut live = self.live.lock().expect("store lock");
        let id = loop {
            let id = new_session_id();
            if !live.contains_key(&id) && !self.root.join(&id).exists() {
                break id;
            }
        };
        meta.id = id.clone();
        let dir = self.root.join(&id);
        fs::create_dir_all(&dir).map_err(|e| ServiceError::Io(dir.clone(), e))?;
        write_json(&dir.join(META), &meta)?;
        fs::File::create(dir.join(EVENTS)).map_err(|e| ServiceError::Io(dir.join(EVENTS), e))?;
        let mut rec = SessionRecord {
            updated_ms: meta.created_ms,
            meta,
            session,
            dir,
            last_access: Instant::now(),
        };
        rec.touch()?;
        let shared = Arc::new(Mutex::new(rec));
        live.insert(id.clone(), shared.clone());
        Ok((id, shared))
    }

    /// Look up a session, replaying it from disk when it is not in memory.
    pub fn get(&self, id: &str) -> Result<SharedRecord> {
        if !is_session_id(id) {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let mut live = self.live.lock().expect("store lock");
        if let Some(r) = live.get(id) {
            return Ok(r.clone());
        }
        let dir = self.root.join(id);
        if !dir.join(META).is_file() {
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        let rec = self.load(&dir)?;
        tracing::info!(session = id, iteration = rec.session.iteration(), "replayed session from its event log");
        let shared = Arc::new(Mutex::new(rec));
        live.insert(id.to_string(), shared.clone());
        Ok(shared)
    }

    fn load(&self, dir: &Path) -> Result<SessionRecord> {
        let meta: SessionMeta = read_json(&dir.join(META))?;
        let events = read_events(&dir.join(EVENTS))?;
        let mut session = self.start(&meta)?;
        for e in &events {
            if e.iter != session.iteration() || e.shown != session.batch_ids() {
                return Err(ServiceError::Corrupt(format!(
                    "session {}: event log diverges from replay at iteration {}",
                    meta.id, e.iter
                )));
            }
            session.submit_feedback(&e.similar)?;
        }
        let report_path = dir.join(REPORT);
        if report_path.is_file() {
            let r: Report = read_json(&report_path)?;
            session.report_target(&r.image_id)?;
        }
        let updated_ms = read_json::<StateSnapshot>(&dir.join(STATE))
            .map(|s| s.updated_ms)
            .unwrap_or(meta.created_ms);
        Ok(SessionRecord {
            meta,
            session,
            updated_ms,
            dir: dir.to_path_buf(),
            last_access: Instant::now(),
        })
    }

    /// Drop sessions idle for longer than `timeout` from memory. Returns how many were dropped.
    pub fn evict_idle(&self, timeout: Duration) -> usize {
        let mut live = self.live.lock().expect("store lock");
        let before = live.len();
        live.retain(|_, r| match r.try_lock() {
            Ok(rec) => rec.last_access.elapsed() < timeout,
            Err(_) => true,
        });
        before - live.len()
    }

    /// Forget every in-memory session, as a restart would.
    pub fn clear_memory(&self) {
        self.live.lock().expect("store lock").clear();
    }

    pub fn live_count(&self) -> usize {
        self.live.lock().expect("store lock").len()
    }
}

/// Parse an event log. A torn final line (a crash mid-append) is dropped.
fn read_events(path: &Path) -> Result<Vec<FeedbackEvent>> {
    let text = fs::read_to_string(path).map_err(|e| ServiceError::Io(path.to_path_buf(), e))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(e) => out.push(e),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                tracing::warn!(path = %path.display(), "ignoring torn final event line");
            }
            Err(e) => return Err(ServiceError::Corrupt(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io = |e| ServiceError::Io(path.to_path_buf(), e);
    let mut line = serde_json::to_vec(value).expect("event serializes");
    line.push(b'\n');
    let mut f = OpenOptions::new().append(true).create(true).open(path).map_err(io)?;
    f.write_all(&line).map_err(io)?;
    f.sync_data().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    fs::write(&tmp, bytes).map_err(|e| ServiceError::Io(tmp.clone(), e))?;
    fs::rename(&tmp, path).map_err(|e| ServiceError::Io(path.to_path_buf(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ServiceError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt(format!("{}: {e}", path.display())))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
