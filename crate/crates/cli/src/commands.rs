//! One function per subcommand. Each returns the JSON summary it prints.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::{json, Value};

use latentroute::dataset::{Dataset, DatasetError, DatasetMeta};
use latentroute::metrics::stability_across_bins;
use latentroute::replanner::{Lineage, PlanError, Planner, Status, Trace};
use latentroute::roadmap::{build_roadmap, Roadmap, RoadmapError};
use latentroute::scenario::{builtin, Scenario, ScenarioError};
use latentroute::util::content_hash;
use latentroute::vae::{train, VaeError, VaeModel};
use latentroute::verify::{verify_trace, Tolerances};
use latentroute::RobotModel;

use crate::{CliError, OutDir, RunConfig, TOOL_VERSION};

pub const DATASET_STEM: &str = "dataset";
pub const MODEL_FILE: &str = "model.bin";
pub const ROADMAP_FILE: &str = "roadmap.txt";

fn dataset_error(path: &Path, e: DatasetError) -> CliError {
    match e {
        DatasetError::InvalidArgument(m) => CliError::Config(m),
        e => CliError::Input(format!("{}: {e}", path.display())),
    }
}

fn vae_error(e: VaeError) -> CliError {
    match e {
        VaeError::InvalidSetup(m) => CliError::Config(m),
        e => CliError::Internal(e.to_string()),
    }
}

fn plan_error(e: PlanError) -> CliError {
    match e {
        PlanError::Config(m) => CliError::Config(m),
        e => CliError::Internal(e.to_string()),
    }
}

fn json_file(out: &OutDir, name: &str, v: &Value) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    out.write(name, text.as_bytes())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(content_hash(&bytes))
}

pub fn load_dataset(path: &Path, robot: &RobotModel) -> Result<(Dataset, DatasetMeta), CliError> {
    Dataset::load(path, robot).map_err(|e| dataset_error(path, e))
}

pub fn load_model(path: &Path) -> Result<(VaeModel, String), CliError> {
    let m = VaeModel::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((m, file_hash(path)?))
}

pub fn load_roadmap(path: &Path) -> Result<Roadmap, CliError> {
    Roadmap::load(path)
        .map(|r| r.0)
        .map_err(|e| match e {
            RoadmapError::Io(e) => CliError::Input(format!("cannot read {}: {e}", path.display())),
            e => CliError::Input(format!("{}: {e}", path.display())),
        })
}

/// A scenario file path, or the name of a builtin scenario.
pub fn load_scenario(source: &str, robot: &RobotModel) -> Result<Scenario, CliError> {
    let p = Path::new(source);
    let s = if p.is_file() {
        let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("cannot read {source}: {e}")))?;
        Scenario::parse(&text).map_err(|e| CliError::Input(format!("{source}: {e}")))?
    } else {
        builtin(source).map_err(|e| match e {
            ScenarioError::UnknownBuiltin(_) => {
                CliError::Input(format!("`{source}` is neither a scenario file nor a builtin scenario"))
            }
            e => CliError::Internal(e.to_string()),
        })?
    };
    s.validate(robot)
        .map_err(|e| CliError::Input(format!("scenario {source}: {e}")))?;
    Ok(s)
}

pub fn generate(cfg: &RunConfig, out: &OutDir) -> Result<Value, CliError> {
    let d = &cfg.dataset;
    let pool = d.count * d.pool_factor;
    info!("drawing {pool} raw samples");
    let raw = Dataset::generate(&cfg.robot, pool, &d.workspace, d.seed).map_err(|e| match e {
        DatasetError::InvalidArgument(m) => CliError::Config(m),
        e => CliError::Internal(e.to_string()),
    })?;
    let ds = raw
        .rebalance_to(d.rebalance, d.count, d.seed)
        .map_err(|e| CliError::Config(format!("cannot rebalance the raw pool: {e}")))?;
    let (csv, meta) = ds
        .save(out.root(), DATASET_STEM, &cfg.hash(), TOOL_VERSION)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(json!({
        "command": "generate",
        "tool_version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "raw_samples": pool,
        "raw_colliding_fraction": raw.collision_fraction(),
        "samples": ds.len(),
        "colliding_fraction": ds.collision_fraction(),
        "dataset": file_name(&csv),
        "metadata": file_name(&meta),
    }))
}

pub fn train_model(cfg: &RunConfig, out: &OutDir, dataset: &Path) -> Result<Value, CliError> {
    let (ds, meta) = load_dataset(dataset, &cfg.robot)?;
    info!("training on {} samples", ds.len());
    let (mut model, report) = train(&ds, &cfg.train).map_err(vae_error)?;
    model.dataset_hash = meta.csv_hash.clone();
    model.config_hash = cfg.hash();
    model.tool_version = TOOL_VERSION.into();
    let bytes = model.to_bytes();
    let path = out.write(MODEL_FILE, &bytes)?;
    let epochs: Vec<Value> = report
        .epochs
        .iter()
        .map(|e| {
            json!({
                "epoch": e.epoch,
                "kl_weight": e.kl_weight,
                "reconstruction": e.reconstruction,
                "kl": e.kl,
                "total": e.total,
            })
        })
        .collect();
    let summary = json!({
        "command": "train",
        "tool_version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "dataset_hash": meta.csv_hash,
        "model_hash": content_hash(&bytes),
        "model": file_name(&path),
        "train_samples": report.train_samples,
        "heldout_samples": report.heldout_samples,
        "heldout_reconstruction": report.heldout_reconstruction,
        "flag_accuracy": report.flag_accuracy,
    });
    let mut full = summary.clone();
    full["epochs"] = Value::Array(epochs);
    json_file(out, "train_report.json", &full)?;
    Ok(summary)
}

pub fn build_graph(cfg: &RunConfig, out: &OutDir, model_path: &Path, dataset: &Path) -> Result<Value, CliError> {
    let (model, model_hash) = load_model(model_path)?;
    let (ds, meta) = load_dataset(dataset, &cfg.robot)?;
    if model.dataset_hash != meta.csv_hash {
        return Err(CliError::Input(format!(
            "{} was trained on a different dataset than {}",
            model_path.display(),
            dataset.display()
        )));
    }
    let (mut roadmap, report) = build_roadmap(&model, &cfg.robot, &ds, &cfg.roadmap).map_err(|e| match e {
        RoadmapError::InvalidParams(m) => CliError::Config(m),
        e => CliError::Internal(e.to_string()),
    })?;
    roadmap.model_hash = model_hash.clone();
    roadmap.dataset_hash = meta.csv_hash.clone();
    roadmap.config_hash = cfg.hash();
    let path = out.path(ROADMAP_FILE)?;
    roadmap
        .save(&path, TOOL_VERSION)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    let m = &cfg.metrics;
    let size = m.subsample.min(ds.len());
    let emb = stability_across_bins(&ds, &model, &[size], m.k, m.seed)
        .map_err(|e| CliError::Config(e.to_string()))?[0];

    let (_, mu, labels) = latentroute::metrics::embed(&ds, &model).map_err(|e| CliError::Internal(e.to_string()))?;
    let lineage = format!("# tool_version {TOOL_VERSION}\n# config_hash {}\n", cfg.hash());
    let mut cloud = format!("{lineage}x,y,collision\n");
    for (z, l) in mu.outer_iter().zip(labels) {
        cloud.push_str(&format!("{},{},{}\n", z[0], z[1], u8::from(l)));
    }
    out.write("latent_points.csv", cloud.as_bytes())?;
    let mut nodes = format!("{lineage}x,y,origin,flag_score\n");
    for n in &roadmap.nodes {
        nodes.push_str(&format!("{},{},{},{}\n", n.coords[0], n.coords[1], n.origin.name(), n.flag_score));
    }
    out.write("roadmap_nodes.csv", nodes.as_bytes())?;

    let summary = json!({
        "command": "build-graph",
        "tool_version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "model_hash": model_hash,
        "dataset_hash": meta.csv_hash,
        "roadmap_hash": roadmap.content_hash(),
        "roadmap": file_name(&path),
        "nodes": report.nodes,
        "edges": report.edges,
        "median_edge": report.median_edge,
        "dataset_nodes": report.dataset_nodes,
        "grid_label_agreement": report.grid.as_ref().map(|g| g.label_agreement),
        "components_before_repair": report.connect.components_before,
        "bridges": report.connect.bridges.len(),
        "dropped_nodes": report.connect.dropped_nodes,
        "embedding": {
            "subsample": emb.subsample_size,
            "k": emb.k,
            "trustworthiness": emb.trustworthiness,
            "continuity": emb.continuity,
            "silhouette": emb.silhouette,
            "spearman": emb.spearman,
        },
    });
    json_file(out, "embedding_report.json", &summary)?;
    Ok(summary)
}

pub fn simulate(
    cfg: &RunConfig,
    out: &OutDir,
    roadmap_path: &Path,
    model_path: &Path,
    scenario: &str,
) -> Result<Value, CliError> {
    let (model, model_hash) = load_model(model_path)?;
    let roadmap = load_roadmap(roadmap_path)?;
    if roadmap.model_hash != model_hash {
        return Err(CliError::Input(format!(
            "{} was built from a different model than {}",
            roadmap_path.display(),
            model_path.display()
        )));
    }
    let s = load_scenario(scenario, &cfg.robot)?;
    let planner = Planner::new(&cfg.robot, &roadmap, Some(&model), cfg.safety).map_err(plan_error)?;
    let lineage = Lineage {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        model_hash,
        roadmap_hash: roadmap.content_hash(),
    };
    let sim = &cfg.simulate;
    let max_ticks = sim.max_ticks.unwrap_or(s.max_ticks);
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for seed in sim.seed..sim.seed + sim.runs {
        let (p, trace) = planner
            .simulate(&s, seed, max_ticks, &lineage)
            .map_err(plan_error)?;
        let name = format!("trace_{}_s{seed}.jsonl", s.id);
        let path = out.write(&name, trace.to_jsonl().as_bytes())?;
        let sm = trace.summary.as_ref().expect("finished traces carry a summary");
        info!("seed {seed}: {} after {} ticks", sm.status, sm.ticks);
        if let Status::Failed(r) = p.status {
            failures.push(format!("seed {seed}: {}", r.name()));
        }
        runs.push(json!({
            "seed": seed,
            "trace": file_name(&path),
            "status": sm.status,
            "reason": sm.reason,
            "ticks": sm.ticks,
            "reroutes": sm.reroutes,
            "halts": sm.halts,
            "min_clearance": sm.min_clearance,
            "final_ee_error": sm.final_ee_error,
        }));
    }
    let summary = json!({
        "command": "simulate",
        "tool_version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "scenario": s.id,
        "scenario_hash": s.content_hash(),
        "roadmap_hash": lineage.roadmap_hash,
        "model_hash": lineage.model_hash,
        "runs": runs,
    });
    json_file(out, &format!("simulate_{}.json", s.id), &summary)?;
    if failures.is_empty() {
        Ok(summary)
    } else {
        println!("{summary}");
        Err(CliError::Planning(failures.join(", ")))
    }
}

pub fn verify(cfg: &RunConfig, out: &OutDir, trace_path: &Path, scenario: &str) -> Result<Value, CliError> {
    let text = fs::read_to_string(trace_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", trace_path.display())))?;
    let trace = Trace::parse_jsonl(&text).map_err(|e| CliError::Input(format!("{}: {e}", trace_path.display())))?;
    let s = load_scenario(scenario, &cfg.robot)?;
    let report = verify_trace(&trace, &s, &cfg.robot, &Tolerances::default());
    let mismatches: Vec<Value> = report
        .mismatches
        .iter()
        .map(|m| json!({"tick": m.tick, "field": m.field, "message": m.message}))
        .collect();
    let stem = trace_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace");
    let summary = json!({
        "command": "verify",
        "tool_version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "trace": file_name(trace_path),
        "trace_tool_version": trace.header.tool_version,
        "scenario": s.id,
        "ok": report.ok(),
        "ticks": report.ticks,
        "arrivals": report.arrivals,
        "min_clearance": report.min_clearance,
        "min_arrival_clearance": report.min_arrival_clearance,
        "max_clearance_error": report.max_clearance_error,
        "mismatches": mismatches,
    });
    json_file(out, &format!("verify_{stem}.json"), &summary)?;
    if report.ok() {
        Ok(summary)
    } else {
        for m in &report.mismatches {
            eprintln!("{m}");
        }
        println!("{summary}");
        Err(CliError::Verification(format!(
            "{} mismatch(es), first at {}",
            report.mismatches.len(),
            report.mismatches[0]
        )))
    }
}
