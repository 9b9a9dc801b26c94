//! File-per-scenario persistence.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use swr_core::analytics::{RouteSummary, SafetyWeighting};
use swr_core::router::{Polygon, Ship};

use crate::pipeline::ForecastRequest;

pub const EXPORT_FORMAT: &str = "swrviz-scenario/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioRole {
    Base,
    MinimumDistance,
    Rehearsal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRoute {
    pub route_id: String,
    pub role: ScenarioRole,
    /// Polygons this rehearsal added on top of the base constraints.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added_polygons: Vec<Polygon>,
    pub summary: RouteSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub created_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub forecast_id: String,
    pub ship: Ship,
    pub origin: [f64; 2],
    pub destination: [f64; 2],
    pub departure: f64,
    pub connectivity: u8,
    pub safety_weighting: SafetyWeighting,
    /// Constraints shared by every route of the scenario.
    pub constraints: Vec<Polygon>,
    /// Base route first, then its minimum-distance companion, then rehearsals.
    pub routes: Vec<ScenarioRoute>,
}

impl Scenario {
    pub fn rehearsal_count(&self) -> usize {
        self.routes.iter().filter(|r| r.role == ScenarioRole::Rehearsal).count()
    }

    pub fn base(&self) -> Option<&ScenarioRoute> {
        self.routes.iter().find(|r| r.role == ScenarioRole::Base)
    }
}

/// Portable scenario document: enough to rebuild every route elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioExport {
    pub format: String,
    pub scenario: Scenario,
    pub forecast_request: ForecastRequest,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown scenario {0:?}")]
    NotFound(String),
    #[error("corrupt scenario file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One JSON document per scenario under `dir`.
#[derive(Debug)]
pub struct ScenarioStore {
    dir: PathBuf,
    /// Highest id issued so far; ids of deleted scenarios are never reused
    /// within a process.
    last: Mutex<u64>,
}

fn valid_id(id: &str) -> bool {
    id.starts_with("sc-") && id[3..].chars().all(|c| c.is_ascii_digit()) && id.len() > 3
}

impl ScenarioStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            last: Mutex::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn ids(&self) -> std::io::Result<Vec<String>> {
        if !self.dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for e in std::fs::read_dir(&self.dir)? {
            let name = e?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json").filter(|id| valid_id(id)) {
                out.push(id.to_string());
            }
        }
        out.sort();
        Ok(out)
    }

    /// Assign an id, stamp and persist.
    pub fn insert(&self, mut scenario: Scenario) -> Result<Scenario, StoreError> {
        let mut last = self.last.lock().expect("scenario lock");
        std::fs::create_dir_all(&self.dir)?;
        let on_disk = self.ids()?.iter().filter_map(|id| id[3..].parse::<u64>().ok()).max().unwrap_or(0);
        let next = on_disk.max(*last) + 1;
        *last = next;
        scenario.id = format!("sc-{next:06}");
        let text = serde_json::to_string_pretty(&scenario).expect("scenario serialises");
        let tmp = self.dir.join(format!(".{}.tmp", scenario.id));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, self.path(&scenario.id))?;
        Ok(scenario)
    }

    pub fn get(&self, id: &str) -> Result<Scenario, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::NotFound(id.into()));
        }
        let path = self.path(id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.into())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path,
            detail: e.to_string(),
        })
    }

    pub fn delete(&self, id: &str) -> Result<(), StoreError> {
        let _g = self.last.lock().expect("scenario lock");
        if !valid_id(id) {
            return Err(StoreError::NotFound(id.into()));
        }
        match std::fs::remove_file(self.path(id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(id.into())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn list(&self) -> Result<Vec<Scenario>, StoreError> {
        self.ids()?.iter().map(|id| self.get(id)).collect()
    }
}
