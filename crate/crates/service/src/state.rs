//! In-memory artifact stores and the operations behind each endpoint.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use swr_core::analytics::{segment_filter, RouteSummary, SafetyWeighting};
use swr_core::gridio::{write_field_stack, Channel, FieldStack, GeoGrid};
use swr_core::router::{Polygon, Ship};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::pipeline::{
    compare, compute_routes, content_hash, rehearse, report, row_label, validate_polygons, ArtifactDirs, ForecastRequest,
    Comparison, Place, RouteReport, RouteSpec, ShipRef, DEFAULT_CONNECTIVITY,
};
use crate::scenario::{Scenario, ScenarioExport, ScenarioRole, ScenarioRoute, ScenarioStore, StoreError, EXPORT_FORMAT};

pub const REHEARSAL_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Forecast,
    Route,
    Rehearsal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobHandle {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_id: Option<String>,
}

#[derive(Debug)]
pub struct ForecastEntry {
    pub id: String,
    pub request: ForecastRequest,
    pub stack: FieldStack,
}

#[derive(Debug)]
pub struct RouteEntry {
    pub id: String,
    pub forecast_id: String,
    pub spec: RouteSpec,
    pub weighting: SafetyWeighting,
    pub report: RouteReport,
    /// The other route of an optimized/minimum-distance pair.
    pub companion_id: Option<String>,
    /// For rehearsals: the base route and the polygons added to it.
    pub base_id: Option<String>,
    pub added_polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl From<&GeoGrid> for BBox {
    fn from(g: &GeoGrid) -> Self {
        Self {
            lat_min: g.lat_min,
            lat_max: g.lat_max,
            lon_min: g.lon_min,
            lon_max: g.lon_max,
        }
    }
}

pub const SLICE_ENCODING: &str = "f32-le-base64";

/// One channel plane of one forecast frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSlice {
    pub forecast_id: String,
    pub t_index: usize,
    pub timestamp: i64,
    pub step_seconds: u32,
    pub channel: Channel,
    pub nlat: usize,
    pub nlon: usize,
    pub bbox: BBox,
    /// Extremes over ocean cells; absent on an all-land grid.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub encoding: String,
    pub data: String,
    /// Base64 bytes, 1 for ocean and 0 for land, row-major.
    pub mask: String,
}

impl FieldSlice {
    pub fn decode_values(&self) -> Option<Vec<f32>> {
        let bytes = B64.decode(&self.data).ok()?;
        if bytes.len() != 4 * self.nlat * self.nlon {
            return None;
        }
        Some(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
    }

    pub fn decode_mask(&self) -> Option<Vec<bool>> {
        Some(B64.decode(&self.mask).ok()?.into_iter().map(|b| b != 0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMeta {
    pub forecast_id: String,
    pub nframes: usize,
    pub t0: i64,
    pub step_seconds: u32,
    pub grid: GeoGrid,
    pub request: ForecastRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCreated {
    pub job: JobHandle,
    pub cached: bool,
    #[serde(flatten)]
    pub meta: ForecastMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    pub forecast_id: String,
    #[serde(default)]
    pub ship: ShipRef,
    pub origin: Place,
    pub destination: Place,
    /// Epoch seconds; defaults to the forecast's first frame.
    #[serde(default)]
    pub departure: Option<f64>,
    #[serde(default)]
    pub connectivity: Option<u8>,
    #[serde(default)]
    pub constraint_id: Option<String>,
    #[serde(default)]
    pub polygons: Vec<Polygon>,
    #[serde(default)]
    pub safety_weighting: SafetyWeighting,
    /// Speed-loss model name; only `wave-height` is provided.
    #[serde(default)]
    pub model: Option<String>,
}

pub const SPEED_MODEL: &str = "wave-height";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutesCreated {
    pub job: JobHandle,
    pub forecast_id: String,
    pub optimized: RouteReport,
    pub min_distance: RouteReport,
    /// Comparison table of the two routes.
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteView {
    pub forecast_id: String,
    pub spec: RouteSpec,
    #[serde(flatten)]
    pub report: RouteReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub companion_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_route_id: Option<String>,
    pub rehearsal_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRequest {
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub constraint_id: String,
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RehearsalRequest {
    pub route_id: String,
    #[serde(default)]
    pub polygons: Vec<Polygon>,
    #[serde(default)]
    pub constraint_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RehearsalCreated {
    pub job: JobHandle,
    pub base_route_id: String,
    /// 1-based position among the base route's rehearsals.
    pub index: usize,
    pub report: RouteReport,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaveScenarioRequest {
    #[serde(default)]
    pub name: Option<String>,
    /// Base (optimized) route.
    pub route_id: String,
    /// Rehearsals to include; defaults to all of the base route's.
    #[serde(default)]
    pub rehearsal_ids: Option<Vec<String>>,
}

#[derive(Debug, Default)]
struct Slots {
    reserved: usize,
    ids: Vec<String>,
}

pub struct AppState {
    pub cfg: ServiceConfig,
    pub default_ship: Option<Ship>,
    dirs: ArtifactDirs,
    forecasts: RwLock<HashMap<String, Arc<ForecastEntry>>>,
    routes: RwLock<HashMap<String, Arc<RouteEntry>>>,
    constraints: RwLock<HashMap<String, ConstraintRecord>>,
    jobs: RwLock<HashMap<String, JobHandle>>,
    rehearsals: Mutex<HashMap<String, Slots>>,
    scenarios: ScenarioStore,
    seq: AtomicU64,
}

fn unix_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::NotFound(id) => ApiError::not_found("scenario", &id),
        other => ApiError::internal(other.to_string()),
    }
}

impl AppState {
    pub fn new(cfg: ServiceConfig, default_ship: Option<Ship>) -> Self {
        let dirs = ArtifactDirs {
            stacks: cfg.stacks_dir(),
            weights: cfg.weights_dir(),
        };
        let scenarios = ScenarioStore::new(cfg.scenarios_dir());
        Self {
            cfg,
            default_ship,
            dirs,
            forecasts: RwLock::default(),
            routes: RwLock::default(),
            constraints: RwLock::default(),
            jobs: RwLock::default(),
            rehearsals: Mutex::default(),
            scenarios,
            seq: AtomicU64::new(1),
        }
    }

    fn next_id(&self, prefix: &str) -> String {
        format!("{prefix}-{:06}", self.seq.fetch_add(1, Ordering::Relaxed))
    }

    fn start_job(&self, kind: JobKind) -> JobHandle {
        let job = JobHandle {
            id: self.next_id("job"),
            kind,
            status: JobStatus::Pending,
            error: None,
            result_id: None,
        };
        self.jobs.write().expect("jobs lock").insert(job.id.clone(), job.clone());
        job
    }

    /// Move a job to its terminal state; terminal jobs are never changed.
    fn finish_job(&self, job: &JobHandle, outcome: std::result::Result<&str, &ApiError>) -> JobHandle {
        let mut jobs = self.jobs.write().expect("jobs lock");
        let entry = jobs.entry(job.id.clone()).or_insert_with(|| job.clone());
        if entry.status == JobStatus::Pending {
            match outcome {
                Ok(id) => {
                    entry.status = JobStatus::Done;
                    entry.result_id = Some(id.to_string());
                }
                Err(e) => {
                    entry.status = JobStatus::Failed;
                    entry.error = Some(e.body.message.clone());
                }
            }
        }
        entry.clone()
    }

    fn run_job<T>(&self, kind: JobKind, f: impl FnOnce(&JobHandle) -> Result<(String, T), ApiError>) -> Result<(JobHandle, T), ApiError> {
        let job = self.start_job(kind);
        match f(&job) {
            Ok((id, v)) => Ok((self.finish_job(&job, Ok(&id)), v)),
            Err(e) => {
                let done = self.finish_job(&job, Err(&e));
                Err(e.with_detail("job", serde_json::to_value(done).expect("job serialises")))
            }
        }
    }

    pub fn job(&self, id: &str) -> Result<JobHandle, ApiError> {
        self.jobs
            .read()
            .expect("jobs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("job", id))
    }

    pub fn health(&self) -> Value {
        json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
            "forecasts": self.forecasts.read().expect("forecasts lock").len(),
            "routes": self.routes.read().expect("routes lock").len(),
        })
    }

    pub fn ships(&self) -> Vec<Ship> {
        let mut out: Vec<Ship> = self.default_ship.iter().cloned().collect();
        out.extend(swr_core::router::presets::ships());
        out
    }

    // forecasts

    pub fn forecast_id(request: &ForecastRequest) -> String {
        format!("fc-{}", &content_hash(request)[..16])
    }

    fn meta(e: &ForecastEntry) -> ForecastMeta {
        ForecastMeta {
            forecast_id: e.id.clone(),
            nframes: e.stack.len(),
            t0: e.stack.t0(),
            step_seconds: e.stack.step_seconds,
            grid: e.stack.grid.clone(),
            request: e.request.clone(),
        }
    }

    pub fn create_forecast(&self, request: ForecastRequest) -> Result<ForecastCreated, ApiError> {
        let id = Self::forecast_id(&request);
        let existing = self.forecasts.read().expect("forecasts lock").get(&id).cloned();
        let (job, (entry, cached)) = self.run_job(JobKind::Forecast, |_| {
            if let Some(e) = existing {
                return Ok((id.clone(), (e, true)));
            }
            let stack = request.run(&self.dirs)?;
            let entry = Arc::new(ForecastEntry {
                id: id.clone(),
                request: request.clone(),
                stack,
            });
            self.persist_forecast(&entry);
            let mut map = self.forecasts.write().expect("forecasts lock");
            // a concurrent identical request may have won the race
            let entry = map.entry(id.clone()).or_insert(entry).clone();
            Ok((id.clone(), (entry, false)))
        })?;
        Ok(ForecastCreated {
            job,
            cached,
            meta: Self::meta(&entry),
        })
    }

    fn persist_forecast(&self, entry: &ForecastEntry) {
        let dir = self.cfg.forecasts_dir();
        let res = std::fs::create_dir_all(&dir).and_then(|_| {
            write_field_stack(&entry.stack, dir.join(format!("{}.wgrid", entry.id)))
                .map_err(|e| std::io::Error::other(e.to_string()))
        });
        if let Err(e) = res {
            log::warn!("could not write forecast {}: {e}", entry.id);
        }
    }

    pub fn forecast(&self, id: &str) -> Result<Arc<ForecastEntry>, ApiError> {
        self.forecasts
            .read()
            .expect("forecasts lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("forecast", id))
    }

    pub fn forecast_meta(&self, id: &str) -> Result<ForecastMeta, ApiError> {
        Ok(Self::meta(&*self.forecast(id)?))
    }

    pub fn field_slice(&self, id: &str, t_index: usize, channel: Channel) -> Result<FieldSlice, ApiError> {
        let f = self.forecast(id)?;
        let stack = &f.stack;
        let Some(frame) = stack.frames.get(t_index) else {
            return Err(ApiError::new(
                axum::http::StatusCode::RANGE_NOT_SATISFIABLE,
                "index_out_of_range",
                format!("t_index {t_index} outside [0, {})", stack.len()),
                json!({ "t_index": t_index, "nframes": stack.len() }),
            ));
        };
        let plane = frame.channel(channel);
        let grid = &stack.grid;
        let mut bytes = Vec::with_capacity(4 * plane.len());
        let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
        for (&v, &ocean) in plane.iter().zip(&grid.mask) {
            let q = v as f32;
            bytes.extend_from_slice(&q.to_le_bytes());
            if ocean {
                let q = q as f64;
                lo = Some(lo.map_or(q, |m| m.min(q)));
                hi = Some(hi.map_or(q, |m| m.max(q)));
            }
        }
        let mask: Vec<u8> = grid.mask.iter().map(|&m| m as u8).collect();
        Ok(FieldSlice {
            forecast_id: id.into(),
            t_index,
            timestamp: frame.timestamp,
            step_seconds: stack.step_seconds,
            channel,
            nlat: grid.nlat,
            nlon: grid.nlon,
            bbox: grid.into(),
            min: lo,
            max: hi,
            encoding: SLICE_ENCODING.into(),
            data: B64.encode(bytes),
            mask: B64.encode(mask),
        })
    }

    // constraints

    pub fn create_constraint(&self, req: ConstraintRequest) -> Result<ConstraintRecord, ApiError> {
        validate_polygons(&req.polygons)?;
        let rec = ConstraintRecord {
            constraint_id: self.next_id("cn"),
            polygons: req.polygons,
        };
        self.constraints
            .write()
            .expect("constraints lock")
            .insert(rec.constraint_id.clone(), rec.clone());
        Ok(rec)
    }

    pub fn constraint(&self, id: &str) -> Result<ConstraintRecord, ApiError> {
        self.constraints
            .read()
            .expect("constraints lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("constraint", id))
    }

    // routes

    fn insert_route(&self, entry: RouteEntry) -> Arc<RouteEntry> {
        let e = Arc::new(entry);
        self.routes.write().expect("routes lock").insert(e.id.clone(), e.clone());
        e
    }

    pub fn route(&self, id: &str) -> Result<Arc<RouteEntry>, ApiError> {
        self.routes
            .read()
            .expect("routes lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("route", id))
    }

    pub fn rehearsal_ids(&self, base_id: &str) -> Vec<String> {
        self.rehearsals
            .lock()
            .expect("rehearsal lock")
            .get(base_id)
            .map(|s| s.ids.clone())
            .unwrap_or_default()
    }

    pub fn route_view(&self, id: &str) -> Result<RouteView, ApiError> {
        let e = self.route(id)?;
        Ok(RouteView {
            forecast_id: e.forecast_id.clone(),
            spec: e.spec.clone(),
            report: e.report.clone(),
            companion_id: e.companion_id.clone(),
            base_route_id: e.base_id.clone(),
            rehearsal_ids: self.rehearsal_ids(id),
        })
    }

    pub fn create_routes(&self, req: RouteRequest) -> Result<RoutesCreated, ApiError> {
        if let Some(m) = req.model.as_deref().filter(|m| *m != SPEED_MODEL) {
            return Err(ApiError::unprocessable(
                format!("unknown speed model {m:?}"),
                json!({ "available": [SPEED_MODEL] }),
            ));
        }
        let forecast = self.forecast(&req.forecast_id)?;
        let mut polygons = req.polygons.clone();
        if let Some(cid) = &req.constraint_id {
            polygons.extend(self.constraint(cid)?.polygons);
        }
        let origin = req.origin.resolve()?;
        let destination = req.destination.resolve()?;
        let spec = RouteSpec {
            ship: req.ship.resolve(self.default_ship.as_ref())?,
            origin,
            destination,
            departure: req.departure.unwrap_or(forecast.stack.t0() as f64),
            connectivity: req.connectivity.unwrap_or(DEFAULT_CONNECTIVITY),
            polygons,
        };
        self.routes_for_spec(&forecast, spec, req.safety_weighting)
    }

    fn routes_for_spec(
        &self,
        forecast: &ForecastEntry,
        spec: RouteSpec,
        weighting: SafetyWeighting,
    ) -> Result<RoutesCreated, ApiError> {
        let land_detail = |e: ApiError| {
            if e.body.code == "land_endpoint" {
                e.with_detail("origin", json!(spec.origin)).with_detail("destination", json!(spec.destination))
            } else {
                e
            }
        };
        let (job, (opt, md)) = self.run_job(JobKind::Route, |_| {
            let pair = compute_routes(&forecast.stack, &spec).map_err(|e| land_detail(e.into()))?;
            let (oid, mid) = (self.next_id("rt"), self.next_id("rt"));
            let md_report = report(&mid, pair.min_distance.clone(), &spec.ship, None, weighting);
            let opt_report = report(
                &oid,
                pair.optimized,
                &spec.ship,
                Some(("minimum-distance", &pair.min_distance)),
                weighting,
            );
            let opt = self.insert_route(RouteEntry {
                id: oid.clone(),
                forecast_id: forecast.id.clone(),
                spec: spec.clone(),
                weighting,
                report: opt_report,
                companion_id: Some(mid.clone()),
                base_id: None,
                added_polygons: Vec::new(),
            });
            let md = self.insert_route(RouteEntry {
                id: mid.clone(),
                forecast_id: forecast.id.clone(),
                spec: spec.clone(),
                weighting,
                report: md_report,
                companion_id: Some(oid.clone()),
                base_id: None,
                added_polygons: Vec::new(),
            });
            Ok((oid, (opt, md)))
        })?;
        let table = swr_core::analytics::emit_table(&[
            (row_label(opt.report.route.kind).into(), opt.report.summary.clone()),
            (row_label(md.report.route.kind).into(), md.report.summary.clone()),
        ]);
        Ok(RoutesCreated {
            job,
            forecast_id: forecast.id.clone(),
            optimized: opt.report.clone(),
            min_distance: md.report.clone(),
            table,
        })
    }

    pub fn segment(&self, id: &str, t_start: f64, t_end: f64) -> Result<RouteSummary, ApiError> {
        let e = self.route(id)?;
        segment_filter(&e.report.route, &e.report.legs, t_start, t_end, e.weighting)
            .map_err(|err| ApiError::unprocessable(err.to_string(), json!({ "t_start": t_start, "t_end": t_end })))
    }

    // rehearsals

    pub fn create_rehearsal(&self, req: RehearsalRequest) -> Result<RehearsalCreated, ApiError> {
        let base = self.route(&req.route_id)?;
        if base.base_id.is_some() || base.report.route.kind == swr_core::router::RouteKind::MinimumDistance {
            return Err(ApiError::unprocessable(
                "rehearsals start from an optimized base route",
                json!({ "route_id": req.route_id }),
            ));
        }
        let mut added = req.polygons.clone();
        if let Some(cid) = &req.constraint_id {
            added.extend(self.constraint(cid)?.polygons);
        }
        validate_polygons(&added)?;
        let forecast = self.forecast(&base.forecast_id)?;

        // reserve a slot before the expensive part so the limit holds under concurrency
        {
            let mut slots = self.rehearsals.lock().expect("rehearsal lock");
            let s = slots.entry(base.id.clone()).or_default();
            if s.reserved >= REHEARSAL_LIMIT {
                return Err(ApiError::rehearsal_limit(&base.id, REHEARSAL_LIMIT));
            }
            s.reserved += 1;
        }
        let result = self.run_job(JobKind::Rehearsal, |_| {
            let (spec, route) = rehearse(&forecast.stack, &base.spec, &added)?;
            let id = self.next_id("rt");
            let rep = report(
                &id,
                route,
                &spec.ship,
                Some(("base", &base.report.route)),
                base.weighting,
            );
            let entry = self.insert_route(RouteEntry {
                id: id.clone(),
                forecast_id: base.forecast_id.clone(),
                spec,
                weighting: base.weighting,
                report: rep,
                companion_id: None,
                base_id: Some(base.id.clone()),
                added_polygons: added.clone(),
            });
            Ok((id, entry))
        });
        let mut slots = self.rehearsals.lock().expect("rehearsal lock");
        let s = slots.entry(base.id.clone()).or_default();
        let (job, entry) = match result {
            Ok(v) => v,
            Err(e) => {
                s.reserved -= 1;
                return Err(e);
            }
        };
        s.ids.push(entry.id.clone());
        let index = s.ids.len();
        drop(slots);
        Ok(RehearsalCreated {
            job,
            base_route_id: base.id.clone(),
            index,
            report: entry.report.clone(),
            comparison: compare(&base.report.summary, &entry.report.summary, &format!("Rehearsal {index}")),
        })
    }

    // scenarios

    pub fn save_scenario(&self, req: SaveScenarioRequest) -> Result<Scenario, ApiError> {
        let dangling = |what: &str, id: &str| {
            ApiError::unprocessable(format!("dangling reference to {what} {id:?}"), json!({ "kind": what, "id": id }))
        };
        let base = self.route(&req.route_id).map_err(|_| dangling("route", &req.route_id))?;
        if base.base_id.is_some() || base.report.route.kind == swr_core::router::RouteKind::MinimumDistance {
            return Err(ApiError::unprocessable(
                "scenario base must be an optimized route",
                json!({ "route_id": req.route_id }),
            ));
        }
        self.forecast(&base.forecast_id).map_err(|_| dangling("forecast", &base.forecast_id))?;
        let own = self.rehearsal_ids(&base.id);
        let ids = req.rehearsal_ids.clone().unwrap_or_else(|| own.clone());
        if ids.len() > REHEARSAL_LIMIT {
            return Err(ApiError::rehearsal_limit(&base.id, REHEARSAL_LIMIT));
        }
        let mut routes = vec![ScenarioRoute {
            route_id: base.id.clone(),
            role: ScenarioRole::Base,
            added_polygons: Vec::new(),
            summary: base.report.summary.clone(),
        }];
        if let Some(cid) = &base.companion_id {
            let c = self.route(cid).map_err(|_| dangling("route", cid))?;
            routes.push(ScenarioRoute {
                route_id: c.id.clone(),
                role: ScenarioRole::MinimumDistance,
                added_polygons: Vec::new(),
                summary: c.report.summary.clone(),
            });
        }
        for id in &ids {
            if !own.contains(id) {
                return Err(dangling("rehearsal", id));
            }
            let r = self.route(id).map_err(|_| dangling("route", id))?;
            routes.push(ScenarioRoute {
                route_id: r.id.clone(),
                role: ScenarioRole::Rehearsal,
                added_polygons: r.added_polygons.clone(),
                summary: r.report.summary.clone(),
            });
        }
        let scenario = Scenario {
            id: String::new(),
            created_at: unix_now(),
            name: req.name,
            forecast_id: base.forecast_id.clone(),
            ship: base.spec.ship.clone(),
            origin: base.spec.origin,
            destination: base.spec.destination,
            departure: base.spec.departure,
            connectivity: base.spec.connectivity,
            safety_weighting: base.weighting,
            constraints: base.spec.polygons.clone(),
            routes,
        };
        self.scenarios.insert(scenario).map_err(store_error)
    }

    pub fn scenario(&self, id: &str) -> Result<Scenario, ApiError> {
        self.scenarios.get(id).map_err(store_error)
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>, ApiError> {
        self.scenarios.list().map_err(store_error)
    }

    pub fn delete_scenario(&self, id: &str) -> Result<(), ApiError> {
        self.scenarios.delete(id).map_err(store_error)
    }

    pub fn export_scenario(&self, id: &str) -> Result<ScenarioExport, ApiError> {
        let scenario = self.scenario(id)?;
        let forecast_request = self
            .forecast(&scenario.forecast_id)
            .map(|f| f.request.clone())
            .map_err(|_| {
                ApiError::unprocessable(
                    "scenario forecast is no longer loaded",
                    json!({ "forecast_id": scenario.forecast_id }),
                )
            })?;
        Ok(ScenarioExport {
            format: EXPORT_FORMAT.into(),
            scenario,
            forecast_request,
        })
    }

    /// Rebuild the forecast and every route of an exported scenario, then
    /// save it under a new id.
    pub fn import_scenario(&self, doc: ScenarioExport) -> Result<Scenario, ApiError> {
        if doc.format != EXPORT_FORMAT {
            return Err(ApiError::unprocessable(
                format!("unsupported export format {:?}", doc.format),
                json!({ "expected": EXPORT_FORMAT }),
            ));
        }
        let sc = &doc.scenario;
        if sc.rehearsal_count() > REHEARSAL_LIMIT {
            return Err(ApiError::rehearsal_limit(&sc.id, REHEARSAL_LIMIT));
        }
        let fc = self.create_forecast(doc.forecast_request.clone())?;
        let forecast = self.forecast(&fc.meta.forecast_id)?;
        let spec = RouteSpec {
            ship: sc.ship.clone(),
            origin: sc.origin,
            destination: sc.destination,
            departure: sc.departure,
            connectivity: sc.connectivity,
            polygons: sc.constraints.clone(),
        };
        let created = self.routes_for_spec(&forecast, spec, sc.safety_weighting)?;
        let mut rehearsal_ids = Vec::new();
        for r in sc.routes.iter().filter(|r| r.role == ScenarioRole::Rehearsal) {
            let made = self.create_rehearsal(RehearsalRequest {
                route_id: created.optimized.route_id.clone(),
                polygons: r.added_polygons.clone(),
                constraint_id: None,
            })?;
            rehearsal_ids.push(made.report.route_id);
        }
        self.save_scenario(SaveScenarioRequest {
            name: sc.name.clone(),
            route_id: created.optimized.route_id,
            rehearsal_ids: Some(rehearsal_ids),
        })
    }
}
