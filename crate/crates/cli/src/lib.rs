//! `swrviz`: headless driver for the forecasting, routing and analytics
//! pipeline. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use swr_core::analytics::{emit_table, SafetyWeighting};
use swr_core::forecast::{read_weights, train, write_weights, ForecastError, TrainConfig};
use swr_core::gridio::{gen_synthetic, read_field_stack, write_field_stack, FieldStack, GridError, SynthParams};
use swr_core::metrics::{climatology, score_forecast, MetricsError};
use swr_core::router::{Polygon, Ship};
use swr_service::pipeline::{
    compare, compute_routes, forecast_from_stack, rehearse, report, row_label, Comparison, DaSpec, ForecastOptions,
    GridSpec, Model, PipelineError, Place, RouteReport, RouteSpec, ShipRef, DEFAULT_CONNECTIVITY,
};
use swr_service::{ConfigError, ServeError, ServiceConfig};
use thiserror::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "swrviz", version, about = "Sea-state forecasting, weather routing and emissions analytics")]
pub struct Cli {
    /// Print structured JSON instead of text tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    /// Service configuration file (TOML); also supplies the default ship.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic wave-field stack (.wgrid).
    GenSynth(GenSynthArgs),
    /// Train surrogate weights (.wgts) on a stack.
    Train(TrainArgs),
    /// Roll a forecast out from one frame of a stack.
    Forecast(ForecastArgs),
    /// Optimized and minimum-distance routes through a forecast.
    Route(RouteArgs),
    /// Re-route a saved route around extra no-go polygons.
    Rehearse(RehearseArgs),
    /// Score a forecast stack against truth (skill CSV).
    Metrics(MetricsArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    /// Grid description as JSON (bounds, size, land cells).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["bbox", "size"])]
    pub grid: Option<PathBuf>,
    #[arg(long, value_parser = parse_bbox, default_value = "30,45,135,150", allow_hyphen_values = true,
          value_name = "LAT_MIN,LAT_MAX,LON_MIN,LON_MAX")]
    pub bbox: [f64; 4],
    #[arg(long, value_parser = parse_size, default_value = "64,64", value_name = "NLAT,NLON")]
    pub size: [usize; 2],
    /// Synthetic dynamics parameters as JSON; `--seed` replaces its seed.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub stack: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Training settings as TOML or JSON; flags below override it.
    #[arg(long, value_name = "FILE")]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Source stack; later frames serve as truth for assimilation.
    #[arg(long, value_name = "FILE")]
    pub init: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Surrogate weights; persistence when absent.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub steps: usize,
    /// Assimilate sampled observations every N steps.
    #[arg(long, value_name = "N", requires_all = ["da_frac", "seed"])]
    pub da_every: Option<usize>,
    /// Fraction of ocean cells observed per assimilation.
    #[arg(long, value_name = "F", requires = "da_every")]
    pub da_frac: Option<f64>,
    /// Observation sampling seed.
    #[arg(long, requires = "da_every")]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Weighting {
    Legs,
    Time,
}

impl From<Weighting> for SafetyWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Legs => SafetyWeighting::Legs,
            Weighting::Time => SafetyWeighting::Time,
        }
    }
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long, value_name = "FILE")]
    pub forecast: PathBuf,
    /// Preset ship name, or `default`.
    #[arg(long, default_value = "default", conflicts_with = "ship_file")]
    pub ship: String,
    /// Ship record as JSON.
    #[arg(long, value_name = "FILE")]
    pub ship_file: Option<PathBuf>,
    /// `LAT,LON` or a preset port name.
    #[arg(long, value_parser = parse_place, allow_hyphen_values = true)]
    pub from: Place,
    #[arg(long, value_parser = parse_place, allow_hyphen_values = true)]
    pub to: Place,
    /// Departure time, Unix seconds; the forecast start when absent.
    #[arg(long)]
    pub departure: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CONNECTIVITY)]
    pub connectivity: u8,
    /// No-go polygons as a JSON array of `[[lat, lon], ...]` rings.
    #[arg(long, value_name = "FILE")]
    pub polygons: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "legs")]
    pub safety: Weighting,
    /// Route document for later `rehearse` runs.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RehearseArgs {
    #[arg(long, value_name = "FILE")]
    pub forecast: PathBuf,
    /// Route document written by `route --out`.
    #[arg(long, value_name = "FILE")]
    pub route: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub polygons: PathBuf,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub forecast: PathBuf,
    /// Stack whose per-cell mean is the climatology; the truth when absent.
    #[arg(long, value_name = "FILE")]
    pub climatology: Option<PathBuf>,
    #[arg(long, default_value = "forecast")]
    pub label: String,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> std::result::Result<[T; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated values, got {}", parts.len()));
    }
    let vals: Vec<T> = parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| format!("invalid number {p:?}")))
        .collect::<std::result::Result<_, _>>()?;
    vals.try_into().map_err(|_| "length checked above".to_string())
}

fn parse_bbox(s: &str) -> std::result::Result<[f64; 4], String> {
    parse_list(s)
}

fn parse_size(s: &str) -> std::result::Result<[usize; 2], String> {
    parse_list(s)
}

fn parse_place(s: &str) -> std::result::Result<Place, String> {
    match parse_list::<f64, 2>(s) {
        Ok(c) => Ok(Place::Coords(c)),
        Err(_) if s.contains(',') => Err(format!("invalid coordinates {s:?}; expected LAT,LON")),
        Err(_) => Ok(Place::Port(s.to_string())),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0} exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Stack {
        path: PathBuf,
        #[source]
        source: GridError,
    },
    #[error("{path}: {source}")]
    Weights {
        path: PathBuf,
        #[source]
        source: ForecastError,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_stack(path: &Path) -> Result<FieldStack> {
    read_field_stack(path).map_err(|source| CliError::Stack {
        path: path.to_path_buf(),
        source,
    })
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CliError::Exists(path.to_path_buf()));
    }
    Ok(())
}

fn write_text(path: &Path, force: bool, text: &str) -> Result<()> {
    guard(path, force)?;
    fs::write(path, text)?;
    Ok(())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("output serialises")
}

/// Document written by `route --out` and read by `rehearse`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteDocument {
    pub spec: RouteSpec,
    pub safety_weighting: SafetyWeighting,
    pub optimized: RouteReport,
    pub min_distance: RouteReport,
}

#[derive(Debug, Serialize)]
struct RehearsalDocument<'a> {
    spec: &'a RouteSpec,
    report: &'a RouteReport,
    comparison: &'a Comparison,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::GenSynth(a) => gen_synth(cli, a, out),
        Command::Train(a) => train_cmd(cli, a, out),
        Command::Forecast(a) => forecast_cmd(cli, a, out),
        Command::Route(a) => route_cmd(cli, a, out),
        Command::Rehearse(a) => rehearse_cmd(cli, a, out),
        Command::Metrics(a) => metrics_cmd(cli, a, out),
        Command::Serve(a) => serve_cmd(cli, a),
    }
}

fn gen_synth(cli: &Cli, a: &GenSynthArgs, out: &mut dyn Write) -> Result<()> {
    guard(&a.out, cli.force)?;
    let spec = match &a.grid {
        Some(p) => read_json::<GridSpec>(p)?,
        None => GridSpec {
            lat_min: a.bbox[0],
            lat_max: a.bbox[1],
            lon_min: a.bbox[2],
            lon_max: a.bbox[3],
            nlat: a.size[0],
            nlon: a.size[1],
            land: Vec::new(),
        },
    };
    let mut params: SynthParams = match &a.params {
        Some(p) => read_json(p)?,
        None => SynthParams::default(),
    };
    params.seed = a.seed;
    let grid = spec.to_grid()?;
    let stack = gen_synthetic(&grid, &params, a.frames)?;
    write_field_stack(&stack, &a.out)?;
    if cli.json {
        let info = json!({ "path": a.out, "frames": stack.len(), "nlat": grid.nlat, "nlon": grid.nlon, "t0": stack.t0() });
        writeln!(out, "{}", to_json(&info))?;
    } else {
        writeln!(out, "wrote {}: {} frames on a {}x{} grid", a.out.display(), stack.len(), grid.nlat, grid.nlon)?;
    }
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    guard(&a.out, cli.force)?;
    let mut cfg: TrainConfig = match &a.train_config {
        Some(p) if p.extension().is_some_and(|e| e == "json") => read_json(p)?,
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::Parse {
            path: p.clone(),
            message: e.to_string(),
        })?,
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.width = a.width.unwrap_or(cfg.width);
    cfg.kmax = a.kmax.unwrap_or(cfg.kmax);
    cfg.step_size = a.lr.unwrap_or(cfg.step_size);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    let stack = load_stack(&a.stack)?;
    let outcome = train(&stack, &cfg)?;
    write_weights(&outcome.weights, &a.out)?;
    let last = outcome.epoch_loss.last().copied();
    if cli.json {
        writeln!(out, "{}", to_json(&json!({ "path": a.out, "config": cfg, "epoch_loss": outcome.epoch_loss })))?;
    } else {
        let loss = last.map_or("n/a".to_string(), |l| format!("{l:.6e}"));
        writeln!(out, "wrote {}: {} epochs, final loss {loss}", a.out.display(), outcome.epoch_loss.len())?;
    }
    Ok(())
}

fn forecast_cmd(cli: &Cli, a: &ForecastArgs, out: &mut dyn Write) -> Result<()> {
    guard(&a.out, cli.force)?;
    let source = load_stack(&a.init)?;
    let weights = match &a.weights {
        Some(p) => Some(read_weights(p).map_err(|source| CliError::Weights {
            path: p.clone(),
            source,
        })?),
        None => None,
    };
    let model = weights.as_ref().map_or(Model::Persistence, Model::Surrogate);
    let mut opts = ForecastOptions::new(a.steps, model);
    if let (Some(every), Some(fraction), Some(seed)) = (a.da_every, a.da_frac, a.seed) {
        opts.da = Some(DaSpec { every, fraction, seed });
    }
    let fc = forecast_from_stack(&source, a.frame, &opts)?;
    write_field_stack(&fc, &a.out)?;
    if cli.json {
        writeln!(out, "{}", to_json(&json!({ "path": a.out, "frames": fc.len(), "t0": fc.t0() })))?;
    } else {
        writeln!(out, "wrote {}: {} frames from t={}", a.out.display(), fc.len(), fc.t0())?;
    }
    Ok(())
}

fn resolve_ship(cli: &Cli, a: &RouteArgs) -> Result<Ship> {
    if let Some(p) = &a.ship_file {
        return Ok(ShipRef::Inline(read_json(p)?).resolve(None)?);
    }
    let configured = match &cli.config {
        Some(p) => ServiceConfig::load(Some(p))?.load_default_ship()?,
        None => None,
    };
    Ok(ShipRef::Name(a.ship.clone()).resolve(configured.as_ref())?)
}

fn route_cmd(cli: &Cli, a: &RouteArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.out {
        guard(p, cli.force)?;
    }
    let fields = load_stack(&a.forecast)?;
    let polygons: Vec<Polygon> = match &a.polygons {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let spec = RouteSpec {
        ship: resolve_ship(cli, a)?,
        origin: a.from.resolve()?,
        destination: a.to.resolve()?,
        departure: a.departure.unwrap_or(fields.t0() as f64),
        connectivity: a.connectivity,
        polygons,
    };
    let pair = compute_routes(&fields, &spec)?;
    let weighting = a.safety.into();
    let md = report("min-distance", pair.min_distance, &spec.ship, None, weighting);
    let opt = report(
        "optimized",
        pair.optimized,
        &spec.ship,
        Some(("minimum-distance", &md.route)),
        weighting,
    );
    let doc = RouteDocument {
        spec,
        safety_weighting: weighting,
        optimized: opt,
        min_distance: md,
    };
    if let Some(p) = &a.out {
        write_text(p, cli.force, &to_json(&doc))?;
    }
    if cli.json {
        writeln!(out, "{}", to_json(&doc))?;
    } else {
        let rows = [&doc.optimized, &doc.min_distance].map(|r| (row_label(r.route.kind).to_string(), r.summary.clone()));
        write!(out, "{}", emit_table(&rows))?;
    }
    Ok(())
}

fn rehearse_cmd(cli: &Cli, a: &RehearseArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.out {
        guard(p, cli.force)?;
    }
    let fields = load_stack(&a.forecast)?;
    let base: RouteDocument = read_json(&a.route)?;
    let extra: Vec<Polygon> = read_json(&a.polygons)?;
    let (spec, route) = rehearse(&fields, &base.spec, &extra)?;
    let rep = report(
        "rehearsal",
        route,
        &spec.ship,
        Some(("base", &base.optimized.route)),
        base.safety_weighting,
    );
    let cmp = compare(&base.optimized.summary, &rep.summary, "Rehearsal");
    let doc = RehearsalDocument {
        spec: &spec,
        report: &rep,
        comparison: &cmp,
    };
    if let Some(p) = &a.out {
        write_text(p, cli.force, &to_json(&doc))?;
    }
    if cli.json {
        writeln!(out, "{}", to_json(&doc))?;
    } else {
        write!(out, "{}", cmp.table)?;
        if let Some(h) = cmp.hours_change_pct {
            writeln!(out, "voyage hours change: {h:+.2}%")?;
        }
    }
    Ok(())
}

fn metrics_cmd(cli: &Cli, a: &MetricsArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.out {
        guard(p, cli.force)?;
    }
    let truth = load_stack(&a.truth)?;
    let fc = load_stack(&a.forecast)?;
    let clim = match &a.climatology {
        Some(p) => climatology(&load_stack(p)?)?,
        None => climatology(&truth)?,
    };
    let rep = score_forecast(&fc, &truth, &clim, &a.label)?;
    let csv = rep.to_csv();
    if let Some(p) = &a.out {
        write_text(p, cli.force, &csv)?;
    }
    if cli.json {
        writeln!(out, "{}", rep.to_json())?;
    } else if a.out.is_none() {
        write!(out, "{csv}")?;
    }
    Ok(())
}

fn serve_cmd(cli: &Cli, a: &ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(b) = &a.bind {
        cfg.bind = b.clone();
    }
    if let Some(d) = &a.data_dir {
        cfg.data_dir = d.clone();
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(swr_service::serve(cfg))?;
    Ok(())
}

fn report_error(e: &CliError) {
    let mut msg = format!("error: {e}");
    let mut last = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        let text = s.to_string();
        if !last.contains(&text) {
            msg.push_str(&format!("\n  caused by: {text}"));
        }
        last = text;
        src = s.source();
    }
    eprintln!("{msg}");
}

/// Parse `args` and run; maps outcomes onto the exit-code contract.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let stdout = io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsers() {
        assert_eq!(parse_bbox("30,45,-10,5").unwrap(), [30.0, 45.0, -10.0, 5.0]);
        assert!(parse_bbox("1,2,3").is_err());
        assert_eq!(parse_size("16, 32").unwrap(), [16, 32]);
        assert!(parse_size("16,x").is_err());
    }

    #[test]
    fn places() {
        assert_eq!(parse_place("35.5,-140").unwrap(), Place::Coords([35.5, -140.0]));
        assert_eq!(parse_place("Tokyo").unwrap(), Place::Port("Tokyo".into()));
        assert!(parse_place("35,abc").is_err());
    }

    #[test]
    fn da_flags_travel_together() {
        let base = ["swrviz", "forecast", "--init", "a", "--steps", "2", "-o", "b"];
        assert!(Cli::try_parse_from(base).is_ok());
        let with = |extra: &[&str]| Cli::try_parse_from(base.iter().chain(extra).copied());
        assert!(with(&["--da-every", "2"]).is_err());
        assert!(with(&["--da-frac", "0.2"]).is_err());
        assert!(with(&["--da-every", "2", "--da-frac", "0.2", "--seed", "1"]).is_ok());
    }

    #[test]
    fn randomized_commands_need_a_seed() {
        assert!(Cli::try_parse_from(["swrviz", "gen-synth", "-o", "x"]).is_err());
        assert!(Cli::try_parse_from(["swrviz", "gen-synth", "-o", "x", "--seed", "3"]).is_ok());
        assert!(Cli::try_parse_from(["swrviz", "train", "--stack", "s", "-o", "x"]).is_err());
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, "keep").unwrap();
        assert!(matches!(write_text(&p, false, "new"), Err(CliError::Exists(_))));
        assert_eq!(fs::read_to_string(&p).unwrap(), "keep");
        write_text(&p, true, "new").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "new");
    }
}
