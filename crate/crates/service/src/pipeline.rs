//! Request documents and the forecast/route pipeline shared by the HTTP
//! handlers and the command-line driver.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use swr_core::analytics::{analyze_route, emit_table, route_summary, AnalyticsError, EmissionFactors, LegAnalytics, RouteSummary, SafetyWeighting};
use swr_core::assimilate::{sample_observations, AssimConfig, AssimError, Observation};
use swr_core::forecast::{read_weights, rollout, rollout_with, ForecastError, PecOptions, RolloutConfig, SurrogateWeights};
use swr_core::gridio::{gen_synthetic, read_field_stack, regrid, FieldStack, GeoGrid, GridError, SynthParams};
use swr_core::router::{
    build_mesh, min_distance_route, optimize_route, presets, rasterize_constraints, Polygon, Route, RouteError,
    RouteKind, RouteQuery, Ship,
};
use thiserror::Error;

pub const MAX_HORIZON: usize = 2000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown {kind} {name:?}")]
    NotFound { kind: &'static str, name: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Assimilation(#[from] AssimError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PipelineError::Invalid(msg.into()))
}

/// Grid description in request documents; every cell is ocean unless
/// listed in `land`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub nlat: usize,
    pub nlon: usize,
    /// Row-major indices of land cells.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub land: Vec<usize>,
}

impl GridSpec {
    pub fn to_grid(&self) -> Result<GeoGrid> {
        let n = self.nlat * self.nlon;
        let mut mask = vec![true; n];
        for &c in &self.land {
            if c >= n {
                return invalid(format!("land cell {c} outside a {}x{} grid", self.nlat, self.nlon));
            }
            mask[c] = false;
        }
        Ok(GeoGrid::new(self.lat_min, self.lat_max, self.lon_min, self.lon_max, self.nlat, self.nlon, mask)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSource {
    /// Seeded synthetic dynamics; `frame` selects the initial condition.
    Synthetic {
        grid: GridSpec,
        #[serde(default)]
        params: SynthParams,
        #[serde(default)]
        frame: usize,
    },
    /// A stored `.wgrid` stack by name.
    File {
        name: String,
        #[serde(default)]
        frame: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Zero tendency: the initial state carried forward.
    #[default]
    Persistence,
    /// Frames of the source itself, for reference runs.
    Truth,
    /// A stored `.wgts` file by name.
    Weights { name: String },
}

/// Observations sampled from the source truth every `every` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaSpec {
    pub every: usize,
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledObs {
    pub step: usize,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub init: InitSource,
    pub horizon: usize,
    /// Regrid the source to `[nlat, nlon]` before forecasting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub da: Option<DaSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduledObs>,
    #[serde(default)]
    pub pec: PecOptions,
    #[serde(default)]
    pub assim: AssimConfig,
}

/// Tendency used by [`forecast_from_stack`].
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Persistence,
    Truth,
    Surrogate(&'a SurrogateWeights),
}

#[derive(Debug, Clone)]
pub struct ForecastOptions<'a> {
    pub horizon: usize,
    pub model: Model<'a>,
    pub da: Option<DaSpec>,
    pub schedule: Vec<(usize, Vec<Observation>)>,
    pub pec: PecOptions,
    pub assim: AssimConfig,
}

impl<'a> ForecastOptions<'a> {
    pub fn new(horizon: usize, model: Model<'a>) -> Self {
        Self {
            horizon,
            model,
            da: None,
            schedule: Vec::new(),
            pec: PecOptions::default(),
            assim: AssimConfig::default(),
        }
    }
}

fn check_da(da: &DaSpec, horizon: usize) -> Result<()> {
    if da.every == 0 {
        return invalid("da.every must be >= 1");
    }
    if !(da.fraction > 0.0 && da.fraction <= 1.0) {
        return invalid("da.fraction must be in (0, 1]");
    }
    if da.every > horizon {
        return invalid(format!("da.every {} exceeds horizon {horizon}", da.every));
    }
    Ok(())
}

/// Forecast `opts.horizon` steps from `source.frames[init]`. Later frames of
/// `source` serve as truth for sampled observations and for [`Model::Truth`].
/// Output frames are rounded to `f32`, matching the on-disk precision.
pub fn forecast_from_stack(source: &FieldStack, init: usize, opts: &ForecastOptions) -> Result<FieldStack> {
    let grid = &source.grid;
    let Some(x0) = source.frames.get(init) else {
        return invalid(format!("init frame {init} outside a {}-frame source", source.len()));
    };
    if opts.horizon > MAX_HORIZON {
        return invalid(format!("horizon {} exceeds {MAX_HORIZON}", opts.horizon));
    }
    let truth_needed = matches!(opts.model, Model::Truth) || opts.da.is_some();
    if truth_needed && init + opts.horizon >= source.len() {
        return invalid(format!(
            "source has {} frames after the init, {} needed",
            source.len() - init - 1,
            opts.horizon
        ));
    }
    let mut by_step: BTreeMap<usize, Vec<Observation>> = BTreeMap::new();
    for (step, obs) in &opts.schedule {
        if *step == 0 || *step > opts.horizon {
            return invalid(format!("schedule step {step} outside [1, {}]", opts.horizon));
        }
        by_step.entry(*step).or_default().extend(obs.iter().cloned());
    }
    if let Some(da) = &opts.da {
        check_da(da, opts.horizon)?;
        for step in (da.every..=opts.horizon).step_by(da.every) {
            let obs = sample_observations(&source.frames[init + step], grid, da.fraction, da.seed ^ step as u64)?;
            by_step.entry(step).or_default().extend(obs);
        }
    }
    let cfg = RolloutConfig {
        steps: opts.horizon,
        pec: opts.pec,
        assimilation_schedule: by_step.into_iter().collect(),
        assim: opts.assim,
    };
    let mut out = match opts.model {
        Model::Truth => FieldStack {
            grid: grid.clone(),
            frames: source.frames[init..=init + opts.horizon].to_vec(),
            step_seconds: source.step_seconds,
        },
        Model::Persistence => rollout_with(x0, grid, source.step_seconds, &cfg, |_, x| vec![0.0; x.len()])?,
        Model::Surrogate(w) => rollout(x0, grid, source.step_seconds, &cfg, w)?,
    };
    for f in &mut out.frames {
        f.quantize();
    }
    Ok(out)
}

/// Guard against names escaping their directory.
pub fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.contains(['/', '\\'])
        && name != "."
        && name != ".."
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        invalid(format!("bad artifact name {name:?}"))
    }
}

/// Where named stacks and weights live.
#[derive(Debug, Clone)]
pub struct ArtifactDirs {
    pub stacks: PathBuf,
    pub weights: PathBuf,
}

impl ArtifactDirs {
    fn resolve(&self, dir: &Path, kind: &'static str, name: &str, ext: &str) -> Result<PathBuf> {
        check_name(name)?;
        let direct = dir.join(name);
        let path = if direct.is_file() { direct } else { dir.join(format!("{name}.{ext}")) };
        if path.is_file() {
            Ok(path)
        } else {
            Err(PipelineError::NotFound {
                kind,
                name: name.into(),
            })
        }
    }

    pub fn stack(&self, name: &str) -> Result<FieldStack> {
        Ok(read_field_stack(self.resolve(&self.stacks, "stack", name, "wgrid")?)?)
    }

    pub fn weights(&self, name: &str) -> Result<SurrogateWeights> {
        Ok(read_weights(self.resolve(&self.weights, "weights", name, "wgts")?)?)
    }
}

impl ForecastRequest {
    /// Source stack (already regridded) and the init frame index within it.
    pub fn source(&self, dirs: &ArtifactDirs) -> Result<(FieldStack, usize)> {
        let extra = if self.da.is_some() || self.model == ModelSpec::Truth { self.horizon } else { 0 };
        if self.horizon > MAX_HORIZON {
            return invalid(format!("horizon {} exceeds {MAX_HORIZON}", self.horizon));
        }
        let (stack, frame) = match &self.init {
            InitSource::Synthetic { grid, params, frame } => {
                let g = grid.to_grid()?;
                (gen_synthetic(&g, params, frame + 1 + extra)?, *frame)
            }
            InitSource::File { name, frame } => (dirs.stack(name)?, *frame),
        };
        let stack = match self.resolution {
            Some([nlat, nlon]) => regrid(&stack, nlat, nlon)?,
            None => stack,
        };
        Ok((stack, frame))
    }

    pub fn run(&self, dirs: &ArtifactDirs) -> Result<FieldStack> {
        let (source, init) = self.source(dirs)?;
        let weights = match &self.model {
            ModelSpec::Weights { name } => Some(dirs.weights(name)?),
            _ => None,
        };
        let model = match (&self.model, &weights) {
            (ModelSpec::Persistence, _) => Model::Persistence,
            (ModelSpec::Truth, _) => Model::Truth,
            (ModelSpec::Weights { .. }, Some(w)) => Model::Surrogate(w),
            (ModelSpec::Weights { .. }, None) => unreachable!("weights resolved above"),
        };
        let opts = ForecastOptions {
            horizon: self.horizon,
            model,
            da: self.da.clone(),
            schedule: self.schedule.iter().map(|s| (s.step, s.observations.clone())).collect(),
            pec: self.pec,
            assim: self.assim,
        };
        forecast_from_stack(&source, init, &opts)
    }
}

/// Sorts object keys, giving one byte string per logical document.
pub fn canonical_json(value: &impl Serialize) -> String {
    // serde_json's default map is ordered, so a Value round trip sorts keys
    let v: Value = serde_json::to_value(value).expect("request serialises");
    serde_json::to_string(&v).expect("value serialises")
}

pub fn content_hash(value: &impl Serialize) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

/// A ship given by preset name or inline record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShipRef {
    Name(String),
    Inline(Ship),
}

impl ShipRef {
    /// `default` names the configured default ship when present, else the
    /// first preset.
    pub fn resolve(&self, configured_default: Option<&Ship>) -> Result<Ship> {
        let ship = match self {
            ShipRef::Name(n) if n == "default" => configured_default.cloned().unwrap_or_else(presets::default_ship),
            ShipRef::Name(n) => presets::ship(n).ok_or_else(|| PipelineError::NotFound {
                kind: "ship",
                name: n.clone(),
            })?,
            ShipRef::Inline(s) => s.clone(),
        };
        ship.validate()?;
        Ok(ship)
    }
}

impl Default for ShipRef {
    fn default() -> Self {
        ShipRef::Name("default".into())
    }
}

/// A position given as `[lat, lon]`, `{lat, lon}` or a preset port name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Place {
    Coords([f64; 2]),
    Object { lat: f64, lon: f64 },
    Port(String),
}

impl Place {
    pub fn resolve(&self) -> Result<[f64; 2]> {
        let p = match self {
            Place::Coords(c) => *c,
            Place::Object { lat, lon } => [*lat, *lon],
            Place::Port(name) => {
                let p = presets::port(name).ok_or_else(|| PipelineError::NotFound {
                    kind: "port",
                    name: name.clone(),
                })?;
                [p.lat, p.lon]
            }
        };
        if !(p[0].is_finite() && p[1].is_finite()) {
            return invalid("coordinates must be finite");
        }
        Ok(p)
    }
}

/// Fully resolved routing inputs; enough to recompute a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub ship: Ship,
    pub origin: [f64; 2],
    pub destination: [f64; 2],
    pub departure: f64,
    pub connectivity: u8,
    #[serde(default)]
    pub polygons: Vec<Polygon>,
}

pub const DEFAULT_CONNECTIVITY: u8 = 16;

pub fn validate_polygons(polygons: &[Polygon]) -> Result<()> {
    for (k, p) in polygons.iter().enumerate() {
        if p.len() < 3 {
            return invalid(format!("polygon {k} has {} vertices, need >= 3", p.len()));
        }
        if p.iter().flatten().any(|v| !v.is_finite()) {
            return invalid(format!("polygon {k} has non-finite vertices"));
        }
    }
    Ok(())
}

/// Optimized and minimum-distance routes for one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePair {
    pub optimized: Route,
    pub min_distance: Route,
}

fn query(spec: &RouteSpec) -> RouteQuery {
    RouteQuery {
        origin: spec.origin,
        destination: spec.destination,
        departure: spec.departure,
    }
}

pub fn compute_routes(fields: &FieldStack, spec: &RouteSpec) -> Result<RoutePair> {
    validate_polygons(&spec.polygons)?;
    let mesh = build_mesh(&fields.grid, spec.connectivity)?;
    let constraint = if spec.polygons.is_empty() {
        None
    } else {
        Some(rasterize_constraints(&fields.grid, &spec.polygons)?)
    };
    let q = query(spec);
    let optimized = optimize_route(&mesh, fields, &spec.ship, &q, constraint.as_ref())?;
    let min_distance = min_distance_route(&mesh, fields, &spec.ship, &q, constraint.as_ref())?;
    Ok(RoutePair { optimized, min_distance })
}

/// Re-optimise `base` avoiding `base.polygons` plus `extra`.
pub fn rehearse(fields: &FieldStack, base: &RouteSpec, extra: &[Polygon]) -> Result<(RouteSpec, Route)> {
    validate_polygons(extra)?;
    let mut spec = base.clone();
    spec.polygons.extend(extra.iter().cloned());
    let mesh = build_mesh(&fields.grid, spec.connectivity)?;
    let constraint = rasterize_constraints(&fields.grid, &spec.polygons)?;
    let mut route = optimize_route(&mesh, fields, &spec.ship, &query(&spec), Some(&constraint))?;
    route.kind = RouteKind::Rehearsal;
    Ok((spec, route))
}

/// A route with its per-leg analytics and totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub route_id: String,
    pub route: Route,
    pub summary: RouteSummary,
    pub legs: Vec<LegAnalytics>,
}

pub fn report(
    route_id: impl Into<String>,
    route: Route,
    ship: &Ship,
    baseline: Option<(&str, &Route)>,
    weighting: SafetyWeighting,
) -> RouteReport {
    let factors = EmissionFactors::default();
    RouteReport {
        route_id: route_id.into(),
        summary: route_summary(&route, ship, &factors, baseline, weighting),
        legs: analyze_route(&route, ship, &factors),
        route,
    }
}

/// Base and rehearsal totals side by side; `rehearsal.reduction_pct` holds
/// the per-quantity deltas against the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub base: RouteSummary,
    pub rehearsal: RouteSummary,
    /// Percent change in voyage hours, positive when the rehearsal is longer.
    pub hours_change_pct: Option<f64>,
    pub table: String,
}

pub fn compare(base: &RouteSummary, rehearsal: &RouteSummary, label: &str) -> Comparison {
    let (b, r) = (base, rehearsal);
    let hours_change_pct = (b.voyage_hours != 0.0).then(|| 100.0 * (r.voyage_hours - b.voyage_hours) / b.voyage_hours);
    let mut plain = b.clone();
    plain.baseline = None;
    plain.reduction_pct = None;
    let table = emit_table(&[("Base".into(), plain), (label.into(), r.clone())]);
    Comparison {
        base: b.clone(),
        rehearsal: r.clone(),
        hours_change_pct,
        table,
    }
}

pub fn row_label(kind: RouteKind) -> &'static str {
    match kind {
        RouteKind::MinimumDistance => "Minimum distance",
        RouteKind::Optimized => "Optimized",
        RouteKind::Rehearsal => "Rehearsal",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use swr_core::gridio::Channel;

    fn synth_request(horizon: usize) -> ForecastRequest {
        ForecastRequest {
            init: InitSource::Synthetic {
                grid: GridSpec {
                    lat_min: 35.0,
                    lat_max: 42.0,
                    lon_min: 140.0,
                    lon_max: 147.0,
                    nlat: 16,
                    nlon: 16,
                    land: vec![],
                },
                params: SynthParams::default(),
                frame: 2,
            },
            horizon,
            resolution: None,
            model: ModelSpec::Persistence,
            da: None,
            schedule: vec![],
            pec: PecOptions::default(),
            assim: AssimConfig::default(),
        }
    }

    fn dirs() -> ArtifactDirs {
        ArtifactDirs {
            stacks: PathBuf::from("/nonexistent"),
            weights: PathBuf::from("/nonexistent"),
        }
    }

    #[test]
    fn horizon_zero_is_the_init_frame() {
        let req = synth_request(0);
        let out = req.run(&dirs()).unwrap();
        let (src, init) = req.source(&dirs()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.frames[0], src.frames[init]);
    }

    #[test]
    fn truth_model_returns_source_frames() {
        let mut req = synth_request(3);
        req.model = ModelSpec::Truth;
        let out = req.run(&dirs()).unwrap();
        let (src, init) = req.source(&dirs()).unwrap();
        assert_eq!(out.frames, src.frames[init..=init + 3].to_vec());
    }

    #[test]
    fn full_sampling_every_step_tracks_truth() {
        let mut req = synth_request(4);
        req.da = Some(DaSpec {
            every: 1,
            fraction: 1.0,
            seed: 3,
        });
        let out = req.run(&dirs()).unwrap();
        let mut truth_req = synth_request(4);
        truth_req.model = ModelSpec::Truth;
        let truth = truth_req.run(&dirs()).unwrap();
        let persist = synth_request(4).run(&dirs()).unwrap();
        let err = |a: &FieldStack| -> f64 {
            let (x, y) = (a.frames[4].channel(Channel::Vhm0), truth.frames[4].channel(Channel::Vhm0));
            x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>()
        };
        assert!(err(&out) < 0.5 * err(&persist));
    }

    #[test]
    fn hashing_is_canonical() {
        let a = synth_request(3);
        let text = canonical_json(&a);
        let b: ForecastRequest = serde_json::from_str(&text).unwrap();
        assert_eq!(content_hash(&a), content_hash(&b));
        assert_ne!(content_hash(&a), content_hash(&synth_request(4)));
    }

    #[test]
    fn validation_and_lookup_errors() {
        let mut req = synth_request(2);
        req.schedule = vec![ScheduledObs {
            step: 3,
            observations: vec![],
        }];
        assert!(matches!(req.run(&dirs()), Err(PipelineError::Invalid(_))));
        let f = ForecastRequest {
            init: InitSource::File {
                name: "missing".into(),
                frame: 0,
            },
            ..synth_request(1)
        };
        assert!(matches!(f.run(&dirs()), Err(PipelineError::NotFound { .. })));
        assert!(check_name("../etc").is_err() && check_name("a/b").is_err() && check_name("ok.wgrid").is_ok());
    }

    #[test]
    fn refs_resolve() {
        assert_eq!(ShipRef::Name("default".into()).resolve(None).unwrap(), presets::default_ship());
        assert!(ShipRef::Name("nope".into()).resolve(None).is_err());
        let p: Place = serde_json::from_str("\"Tokyo\"").unwrap();
        assert_eq!(p.resolve().unwrap(), [35.62, 139.78]);
        let c: Place = serde_json::from_str("[1.0, 2.0]").unwrap();
        assert_eq!(c.resolve().unwrap(), [1.0, 2.0]);
        let o: Place = serde_json::from_str("{\"lat\": 1.0, \"lon\": 2.0}").unwrap();
        assert_eq!(o.resolve().unwrap(), [1.0, 2.0]);
    }
}
