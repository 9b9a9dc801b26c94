use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use swr_core::analytics::{route_summary, EmissionFactors, RouteSummary, SafetyWeighting};
use swr_core::gridio::Channel;
use swr_core::router::{presets, Route};
use swr_service::pipeline::{ArtifactDirs, ForecastRequest};
use swr_service::state::FieldSlice;
use swr_service::{Server, ServiceConfig};

struct Svc {
    base: String,
    client: Client,
    _dir: tempfile::TempDir,
}

impl Svc {
    async fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        Self::start_in(dir).await
    }

    async fn start_in(dir: tempfile::TempDir) -> Self {
        let cfg = ServiceConfig {
            data_dir: dir.path().to_path_buf(),
            bind: "127.0.0.1:0".into(),
            default_ship: None,
        };
        let (addr, _task) = Server::bind(cfg).await.unwrap().spawn();
        Self {
            base: format!("http://{addr}/api/v1"),
            client: Client::new(),
            _dir: dir,
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status();
        let text = r.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn post(&self, path: &str, body: &Value) -> (StatusCode, Value) {
        let r = self.client.post(format!("{}{path}", self.base)).json(body).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }
}

fn grid_spec(land: &[usize]) -> Value {
    json!({ "lat_min": 35.0, "lat_max": 42.5, "lon_min": 140.0, "lon_max": 147.5, "nlat": 16, "nlon": 16, "land": land })
}

fn forecast_body(horizon: usize, params: Value) -> Value {
    json!({
        "init": { "synthetic": { "grid": grid_spec(&[]), "params": params, "frame": 0 } },
        "horizon": horizon,
        "model": "truth",
    })
}

fn assert_error_shape(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].is_string() && v.get("detail").is_some(), "{v}");
}

async fn forecast(svc: &Svc, horizon: usize, params: Value) -> String {
    let (s, v) = svc.post("/forecasts", &forecast_body(horizon, params)).await;
    assert!(s.is_success(), "{s} {v}");
    v["forecast_id"].as_str().unwrap().to_string()
}

async fn routes(svc: &Svc, fid: &str, extra: Value) -> Value {
    let mut body = json!({
        "forecast_id": fid,
        "ship": "feeder-24kn",
        "origin": [35.5, 140.5],
        "destination": [41.5, 146.5],
    });
    body.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    let (s, v) = svc.post("/routes", &body).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn health_and_presets() {
    let svc = Svc::start().await;
    let (s, v) = svc.get("/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    let (_, v) = svc.get("/ships").await;
    assert_eq!(v["ships"].as_array().unwrap().len(), presets::ships().len());
    let (_, v) = svc.get("/ports").await;
    assert!(v["ports"].as_array().unwrap().iter().any(|p| p["name"] == "Hakodate"));
    let (s, v) = svc.get("/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error_shape(&v, "not_found");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn forecast_creation_contract() {
    let svc = Svc::start().await;
    let body = json!({
        "init": { "synthetic": { "grid": grid_spec(&[]), "frame": 1 } },
        "horizon": 0,
    });
    let (s, v) = svc.post("/forecasts", &body).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["nframes"], 1);
    assert_eq!(v["job"]["status"], "done");
    assert_eq!(v["job"]["kind"], "forecast");
    let id = v["forecast_id"].clone();
    let (s2, v2) = svc.post("/forecasts", &body).await;
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(v2["forecast_id"], id);
    assert_eq!(v2["cached"], true);
    let (s, job) = svc.get(&format!("/jobs/{}", v["job"]["id"].as_str().unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(job["result_id"], id);

    let bad = json!({
        "init": { "synthetic": { "grid": grid_spec(&[]) } },
        "horizon": 2,
        "schedule": [{ "step": 3, "observations": [] }],
    });
    let (s, v) = svc.post("/forecasts", &bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v, "invalid_request");
    assert_eq!(v["detail"]["job"]["status"], "failed");

    let missing = json!({ "init": { "file": { "name": "absent" } }, "horizon": 1 });
    let (s, v) = svc.post("/forecasts", &missing).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error_shape(&v, "not_found");
    let weights = json!({
        "init": { "synthetic": { "grid": grid_spec(&[]) } },
        "horizon": 1,
        "model": { "weights": { "name": "absent" } },
    });
    assert_eq!(svc.post("/forecasts", &weights).await.0, StatusCode::NOT_FOUND);
    let (s, _) = svc.client.post(format!("{}/forecasts", svc.base)).body("{").send().await.map(|r| (r.status(), ())).unwrap();
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(svc.get("/forecasts/fc-unknown").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn field_slices_are_bit_identical() {
    let svc = Svc::start().await;
    let body = json!({
        "init": { "synthetic": { "grid": grid_spec(&[0, 1, 17]), "frame": 0 } },
        "horizon": 3,
        "da": { "every": 2, "fraction": 0.3, "seed": 4 },
    });
    let (s, v) = svc.post("/forecasts", &body).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let id = v["forecast_id"].as_str().unwrap();
    let req: ForecastRequest = serde_json::from_value(body).unwrap();
    let dirs = ArtifactDirs {
        stacks: "/nonexistent".into(),
        weights: "/nonexistent".into(),
    };
    let expected = req.run(&dirs).unwrap();
    for t in 0..expected.len() {
        for ch in Channel::ALL {
            let (s, v) = svc.get(&format!("/forecasts/{id}/fields/{t}/{}", ch.name())).await;
            assert_eq!(s, StatusCode::OK);
            let slice: FieldSlice = serde_json::from_value(v).unwrap();
            let vals = slice.decode_values().unwrap();
            let want = expected.frames[t].channel(ch);
            assert!(vals.iter().zip(want).all(|(a, b)| a.to_bits() == (*b as f32).to_bits()));
            assert!(want.iter().all(|&b| b as f32 as f64 == b), "stored frames hold f32 values");
            assert_eq!(slice.decode_mask().unwrap(), expected.grid.mask);
            let ocean: Vec<f64> = want.iter().zip(&expected.grid.mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect();
            assert_eq!(slice.min, ocean.iter().cloned().reduce(f64::min));
            assert_eq!(slice.max, ocean.iter().cloned().reduce(f64::max));
            assert_eq!(slice.timestamp, expected.frames[t].timestamp);
        }
    }
    let (s, v) = svc.get(&format!("/forecasts/{id}/fields/{}/VHM0", expected.len())).await;
    assert_eq!(s, StatusCode::RANGE_NOT_SATISFIABLE);
    assert_error_shape(&v, "index_out_of_range");
    assert_eq!(svc.get(&format!("/forecasts/{id}/fields/-1/VHM0")).await.0, StatusCode::RANGE_NOT_SATISFIABLE);
    assert_eq!(svc.get(&format!("/forecasts/{id}/fields/0/XYZ")).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(svc.get("/forecasts/fc-x/fields/0/VHM0").await.0, StatusCode::NOT_FOUND);
}

fn summary_of(v: &Value) -> RouteSummary {
    serde_json::from_value(v["summary"].clone()).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn calm_routes_and_single_source_of_truth() {
    let svc = Svc::start().await;
    let fid = forecast(&svc, 8, json!({ "base_height": 0.0, "height_amplitude": 0.0 })).await;
    let v = routes(&svc, &fid, json!({})).await;
    let (opt, md) = (&v["optimized"], &v["min_distance"]);
    let (a, b) = (summary_of(opt), summary_of(md));
    assert_eq!(a.voyage_hours, b.voyage_hours);
    assert_eq!(a.fuel_mt, b.fuel_mt);
    assert!(v["table"].as_str().unwrap().contains("| Optimized |"));
    let route: Route = serde_json::from_value(opt["route"].clone()).unwrap();
    let local = route_summary(
        &route,
        &presets::ship("feeder-24kn").unwrap(),
        &EmissionFactors::default(),
        Some(("minimum-distance", &serde_json::from_value(md["route"].clone()).unwrap())),
        SafetyWeighting::Legs,
    );
    assert_eq!(local, a);

    let id = opt["route_id"].as_str().unwrap();
    let (s, view) = svc.get(&format!("/routes/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["companion_id"], md["route_id"]);
    let (_, g) = svc.get(&format!("/routes/{id}/geojson")).await;
    assert_eq!(g["geometry"]["type"], "LineString");
    let (t0, t1) = (route.departure, route.arrival());
    let mid = 0.5 * (t0 + t1);
    let (_, first) = svc.get(&format!("/routes/{id}/segment?t_start={t0}&t_end={mid}")).await;
    let (_, second) = svc.get(&format!("/routes/{id}/segment?t_start={mid}&t_end={}", t1 + 1.0)).await;
    let sum = first["fuel_mt"].as_f64().unwrap() + second["fuel_mt"].as_f64().unwrap();
    assert!((sum - a.fuel_mt).abs() <= 1e-9 * a.fuel_mt);
    let (s, v) = svc.get(&format!("/routes/{id}/segment?t_start=5&t_end=5")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v, "invalid_request");
    assert_eq!(svc.get(&format!("/routes/{id}/segment")).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn route_errors() {
    let svc = Svc::start().await;
    let fid = forecast(&svc, 8, json!({})).await;
    let base = json!({ "forecast_id": fid, "origin": [35.5, 140.5], "destination": [41.5, 146.5] });
    let mut blocked = base.clone();
    blocked["polygons"] = json!([[[41.0, 146.0], [41.0, 147.4], [42.4, 147.4], [42.4, 146.0]]]);
    let (s, v) = svc.post("/routes", &blocked).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error_shape(&v, "unreachable");
    let mut unknown = base.clone();
    unknown["forecast_id"] = json!("fc-missing");
    assert_eq!(svc.post("/routes", &unknown).await.0, StatusCode::NOT_FOUND);
    let mut outside = base.clone();
    outside["origin"] = json!([10.0, 10.0]);
    let (s, v) = svc.post("/routes", &outside).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v, "outside_grid");
    let mut model = base.clone();
    model["model"] = json!("other");
    assert_eq!(svc.post("/routes", &model).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    // a land block larger than the snap radius around the origin
    let land: Vec<usize> = (0..8).flat_map(|i| (0..8).map(move |j| i * 16 + j)).collect();
    let body = json!({
        "init": { "synthetic": { "grid": grid_spec(&land) } },
        "horizon": 2,
        "model": "truth",
    });
    let (_, v) = svc.post("/forecasts", &body).await;
    let mut on_land = base.clone();
    on_land["forecast_id"] = v["forecast_id"].clone();
    on_land["origin"] = json!([35.0, 140.0]);
    let (s, v) = svc.post("/routes", &on_land).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v, "land_endpoint");
    assert_eq!(v["detail"]["origin"], json!([35.0, 140.0]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn constraints_round_trip() {
    let svc = Svc::start().await;
    let poly = json!([[36.0, 141.0], [36.0, 142.0], [37.0, 142.0]]);
    let (s, v) = svc.post("/constraints", &json!({ "polygons": [poly] })).await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, back) = svc.get(&format!("/constraints/{}", v["constraint_id"].as_str().unwrap())).await;
    assert_eq!(back["polygons"][0], poly);
    let (s, _) = svc.post("/constraints", &json!({ "polygons": [[[1.0, 2.0]]] })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn rehearsal_limit_under_concurrency() {
    let svc = std::sync::Arc::new(Svc::start().await);
    let fid = forecast(&svc, 8, json!({})).await;
    let v = routes(&svc, &fid, json!({})).await;
    let rid = v["optimized"]["route_id"].as_str().unwrap().to_string();
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let svc = svc.clone();
        let rid = rid.clone();
        tasks.push(tokio::spawn(async move { svc.post("/rehearsals", &json!({ "route_id": rid })).await }));
    }
    let mut ok = 0;
    let mut limited = 0;
    for t in tasks {
        let (s, v) = t.await.unwrap();
        match s {
            StatusCode::CREATED => ok += 1,
            StatusCode::CONFLICT => {
                assert_eq!(v["message"], "rehearsal limit reached");
                limited += 1;
            }
            other => panic!("unexpected {other}: {v}"),
        }
    }
    assert_eq!((ok, limited), (5, 3));
    let (_, list) = svc.get(&format!("/routes/{rid}/rehearsals")).await;
    assert_eq!(list["rehearsals"].as_array().unwrap().len(), 5);
    let (s, v) = svc.post("/rehearsals", &json!({ "route_id": rid })).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error_shape(&v, "rehearsal_limit");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn rehearsal_deltas() {
    let svc = Svc::start().await;
    let fid = forecast(&svc, 8, json!({ "height_amplitude": 2.0, "base_height": 3.0 })).await;
    let v = routes(&svc, &fid, json!({})).await;
    let base = &v["optimized"];
    let rid = base["route_id"].as_str().unwrap();
    let (s, r) = svc.post("/rehearsals", &json!({ "route_id": rid, "polygons": [] })).await;
    assert_eq!(s, StatusCode::CREATED, "{r}");
    assert_eq!(r["report"]["route"]["kind"], "rehearsal");
    assert_eq!(r["report"]["route"]["legs"], base["route"]["legs"]);
    for k in ["fuel", "co2", "sox", "nox", "pm"] {
        assert_eq!(r["comparison"]["rehearsal"]["reduction_pct"][k], 0.0, "{k}");
    }
    // a polygon in a far corner away from the corridor changes nothing
    let (_, off) = svc
        .post(
            "/rehearsals",
            &json!({ "route_id": rid, "polygons": [[[41.6, 140.0], [41.6, 140.8], [42.5, 140.8], [42.5, 140.0]]] }),
        )
        .await;
    let base_nodes: Vec<u64> = base["route"]["legs"].as_array().unwrap().iter().map(|l| l["to"].as_u64().unwrap()).collect();
    let on_path = base_nodes.iter().any(|&n| n / 16 >= 14 && n % 16 <= 1);
    if !on_path {
        assert_eq!(off["report"]["route"]["legs"], base["route"]["legs"]);
    }
    // rehearsals must start from an optimized route
    let md = v["min_distance"]["route_id"].as_str().unwrap();
    assert_eq!(svc.post("/rehearsals", &json!({ "route_id": md })).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(svc.post("/rehearsals", &json!({ "route_id": "rt-x" })).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn scenario_lifecycle_and_reimport() {
    let svc = Svc::start().await;
    let fid = forecast(&svc, 8, json!({ "seed": 3 })).await;
    let v = routes(&svc, &fid, json!({})).await;
    let rid = v["optimized"]["route_id"].as_str().unwrap();
    let poly = json!([[37.0, 142.0], [37.0, 144.0], [39.0, 144.0], [39.0, 142.0]]);
    let (s, _) = svc.post("/rehearsals", &json!({ "route_id": rid, "polygons": [poly] })).await;
    assert!(s == StatusCode::CREATED || s == StatusCode::CONFLICT);

    let (s, saved) = svc.post("/scenarios", &json!({ "name": "trial", "route_id": rid })).await;
    assert_eq!(s, StatusCode::CREATED, "{saved}");
    let sid = saved["id"].as_str().unwrap();
    let (_, loaded) = svc.get(&format!("/scenarios/{sid}")).await;
    assert_eq!(loaded, saved);
    let (_, list) = svc.get("/scenarios").await;
    assert_eq!(list["scenarios"][0]["id"], sid);

    let (s, export) = svc.get(&format!("/scenarios/{sid}/export")).await;
    assert_eq!(s, StatusCode::OK);
    let fresh = Svc::start().await;
    let (s, imported) = fresh.post("/scenarios/import", &export).await;
    assert_eq!(s, StatusCode::CREATED, "{imported}");
    let sums = |v: &Value| -> Vec<Value> { v["routes"].as_array().unwrap().iter().map(|r| r["summary"].clone()).collect() };
    assert_eq!(sums(&imported), sums(&saved));
    assert_eq!(imported["forecast_id"], saved["forecast_id"]);

    let (s, v) = svc.post("/scenarios", &json!({ "route_id": "rt-missing" })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["message"].as_str().unwrap().contains("dangling"));

    let r = svc.client.delete(format!("{}/scenarios/{sid}", svc.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    let (s, v) = svc.get(&format!("/scenarios/{sid}")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error_shape(&v, "not_found");
}
