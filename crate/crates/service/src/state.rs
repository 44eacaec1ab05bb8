//! In-memory dataset store, transform sessions and compute jobs.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use kanmat_core::dataset::{read_csv, CsvOptions, Dataset, DatasetError, TransformSpec};
use kanmat_core::matrix::{MatrixConfig, MatrixKind, MatrixRequest};
use kanmat_core::rng::derive_seed;
use serde::Serialize;

use crate::error::ApiError;

pub const DEFAULT_BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Uploaded datasets are written here and reloaded at startup.
    pub data_dir: Option<PathBuf>,
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub columns: Vec<String>,
    pub n_rows: usize,
}

impl DatasetInfo {
    fn of(id: &str, d: &Dataset) -> Self {
        Self {
            dataset_id: id.to_string(),
            columns: d.names(),
            n_rows: d.n_rows(),
        }
    }
}

pub struct Session {
    pub id: String,
    pub dataset_id: String,
    pub base: Arc<Dataset>,
    pub stack: Vec<TransformSpec>,
    pub current: Arc<Dataset>,
    pub created_at: u64,
    cache: HashMap<String, Arc<String>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SessionView {
    pub session_id: String,
    pub dataset_id: String,
    pub columns: Vec<String>,
    pub n_rows: usize,
    pub history: Vec<TransformSpec>,
    pub created_at: u64,
}

impl Session {
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            columns: self.current.names(),
            n_rows: self.current.n_rows(),
            history: self.stack.clone(),
            created_at: self.created_at,
        }
    }

    pub fn push(&mut self, t: TransformSpec) -> Result<(), DatasetError> {
        self.current = Arc::new(self.current.apply(&t)?);
        self.stack.push(t);
        self.cache.clear();
        Ok(())
    }

    /// Pops the last transform and rebuilds by replaying the rest.
    pub fn undo(&mut self) -> Result<bool, DatasetError> {
        if self.stack.pop().is_none() {
            return Ok(false);
        }
        self.current = Arc::new(self.base.replay(&self.stack)?);
        self.cache.clear();
        Ok(true)
    }

    pub fn stack_hash(&self) -> String {
        hash_json(&self.stack)
    }

    pub fn cached(&self, key: &str) -> Option<Arc<String>> {
        self.cache.get(key).cloned()
    }

    pub fn store(&mut self, key: String, body: Arc<String>) {
        self.cache.insert(key, body);
    }
}

/// Stable 64-bit hex hash of a value's canonical JSON (sorted keys).
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value)
        .map(|v| v.to_string())
        .unwrap_or_default();
    format!("{:016x}", derive_seed(0, &[canonical]))
}

/// Everything that determines a matrix for a given session stack.
#[derive(Debug, Clone, Serialize)]
pub struct ComputeKey {
    pub kind: MatrixKind,
    pub request: MatrixRequest,
    pub config: MatrixConfig,
}

impl ComputeKey {
    pub fn config_hash(&self) -> String {
        hash_json(&self.config)
    }

    /// Cache key within one session stack.
    pub fn cache_key(&self, stack_hash: &str) -> String {
        format!("{stack_hash}:{}", hash_json(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

pub struct Job {
    pub id: String,
    pub session_id: String,
    pub cache_key: String,
    pub config_hash: String,
    pub status: JobStatus,
    pub done: Arc<AtomicUsize>,
    pub total: Arc<AtomicUsize>,
    pub result: Option<Arc<String>>,
    pub error: Option<ApiError>,
}

pub struct AppState {
    pub config: ServiceConfig,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    sessions: RwLock<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
    pub jobs: Mutex<HashMap<String, Job>>,
    counter: AtomicU64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            datasets: RwLock::new(BTreeMap::new()),
            sessions: RwLock::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        }
    }

    /// Loads every `*.csv` under the data directory, keyed by file stem.
    pub fn load_data_dir(&self) -> Result<Vec<String>, DatasetError> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(vec![]);
        };
        let io = |e: std::io::Error| DatasetError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let mut loaded = Vec::new();
        for path in paths {
            let (d, _) = read_csv(&path, CsvOptions::default())?;
            let id = stem(&path);
            self.datasets.write().expect("dataset lock").insert(id.clone(), Arc::new(d));
            loaded.push(id);
        }
        Ok(loaded)
    }

    fn next_id(&self, prefix: &str) -> String {
        format!("{prefix}-{}", self.counter.fetch_add(1, Ordering::Relaxed) + 1)
    }

    pub fn add_dataset(&self, d: Dataset) -> Result<DatasetInfo, ApiError> {
        let mut store = self.datasets.write().expect("dataset lock");
        let id = loop {
            let id = self.next_id("ds");
            if !store.contains_key(&id) {
                break id;
            }
        };
        if let Some(dir) = &self.config.data_dir {
            d.write_csv(&dir.join(format!("{id}.csv")))
                .map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let info = DatasetInfo::of(&id, &d);
        store.insert(id, Arc::new(d));
        Ok(info)
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.datasets
            .read()
            .expect("dataset lock")
            .iter()
            .map(|(id, d)| DatasetInfo::of(id, d))
            .collect()
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<Dataset>> {
        self.datasets.read().expect("dataset lock").get(id).cloned()
    }

    pub fn create_session(&self, dataset_id: &str) -> Result<SessionView, ApiError> {
        let base = self
            .dataset(dataset_id)
            .ok_or_else(|| ApiError::not_found("dataset", dataset_id))?;
        let session = Session {
            id: self.next_id("s"),
            dataset_id: dataset_id.to_string(),
            current: base.clone(),
            base,
            stack: vec![],
            created_at: now(),
            cache: HashMap::new(),
        };
        let view = session.view();
        self.sessions
            .write()
            .expect("session lock")
            .insert(session.id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        Ok(view)
    }

    pub fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn new_job_id(&self) -> String {
        self.next_id("job")
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
