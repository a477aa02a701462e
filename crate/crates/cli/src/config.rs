//! Plain-text `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use latentroute::dataset::{parse_key_values, WorkspaceBox};
use latentroute::replanner::SafetyConfig;
use latentroute::roadmap::BuildParams;
use latentroute::util::content_hash;
use latentroute::vae::TrainConfig;
use latentroute::RobotModel;

use crate::error::CliError;

/// Every recognised key with its default, in canonical order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("robot", "panda", "`panda` or a robot description file"),
    ("out_dir", "out", "directory that receives every output file"),
    ("dataset.count", "20000", "samples kept after rebalancing"),
    ("dataset.pool_factor", "40", "raw draws per kept sample"),
    ("dataset.rebalance", "0.3", "colliding share after rebalancing"),
    ("dataset.seed", "1", "sampling seed"),
    ("dataset.workspace_min", "-0.85 -0.85 0", "obstacle box lower corner (m)"),
    ("dataset.workspace_max", "0.85 0.85 1.2", "obstacle box upper corner (m)"),
    ("vae.hidden", "300 200 75", "encoder widths (decoder mirrors them)"),
    ("vae.epochs", "40", ""),
    ("vae.batch_size", "256", ""),
    ("vae.learning_rate", "0.001", ""),
    ("vae.momentum", "0.9", ""),
    ("vae.kl_weight", "0.001", ""),
    ("vae.flag_weight", "10", "weight of the flag's squared error"),
    ("vae.warmup_fraction", "0.1", "share of epochs over which the KL weight ramps up"),
    ("vae.train_fraction", "0.8", ""),
    ("vae.seed", "0", ""),
    ("roadmap.k", "8", "nearest latent neighbours per node"),
    ("roadmap.grid_resolution", "100", "decoded mesh size per axis, 0 disables it"),
    ("roadmap.margin", "0.05", ""),
    ("roadmap.flag_threshold", "0.5", ""),
    ("roadmap.bridge_factor", "3", "bridge cap as a multiple of the median edge"),
    ("metrics.k", "12", "neighbourhood size for trustworthiness and continuity"),
    ("metrics.subsample", "2000", "points used for the embedding report"),
    ("metrics.seed", "0", ""),
    ("safety.clearance_threshold", "0.08", "metres"),
    ("safety.check_period", "1", "ticks between clearance checks"),
    ("safety.relabel_radius", "auto", "latent radius; auto is 5x the median edge"),
    ("safety.max_joint_step", "0.05", "rad per tick"),
    ("safety.goal_tolerance", "0.03", "metres"),
    ("safety.lookahead", "10", "poses re-checked ahead of the arm"),
    ("simulate.seed", "0", "first scenario seed"),
    ("simulate.runs", "1", "consecutive seeds to run"),
    ("simulate.max_ticks", "scenario", "tick cap; `scenario` uses the file's value"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub count: usize,
    pub pool_factor: usize,
    pub rebalance: f64,
    pub seed: u64,
    pub workspace: WorkspaceBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsParams {
    pub k: usize,
    pub subsample: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateParams {
    pub seed: u64,
    pub runs: u64,
    pub max_ticks: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub robot: RobotModel,
    pub out_dir: PathBuf,
    pub dataset: DatasetParams,
    pub train: TrainConfig,
    pub roadmap: BuildParams,
    pub metrics: MetricsParams,
    pub safety: SafetyConfig,
    pub simulate: SimulateParams,
    values: BTreeMap<String, String>,
}

fn value<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, CliError> {
    let raw = &map[key];
    raw.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{raw}`")))
}

fn list<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<T>, CliError> {
    map[key]
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{t}`"))))
        .collect()
}

fn vec3(map: &BTreeMap<String, String>, key: &str) -> Result<[f64; 3], CliError> {
    list::<f64>(map, key)?
        .try_into()
        .map_err(|_| CliError::Config(format!("`{key}` needs three numbers")))
}

fn check(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

impl RunConfig {
    /// Defaults, then the optional file, then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut map: BTreeMap<String, String> =
            KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        let mut set = |k: &str, v: &str, origin: &str| {
            if !map.contains_key(k) {
                return Err(CliError::Config(format!("unknown key `{k}` in {origin}")));
            }
            map.insert(k.to_string(), v.to_string());
            Ok(())
        };
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let parsed = parse_key_values(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for (k, v) in &parsed {
                set(k, v, &path.display().to_string())?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
            set(k.trim(), v.trim(), "--set")?;
        }
        RunConfig::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<RunConfig, CliError> {
        let robot = match map["robot"].as_str() {
            "panda" => RobotModel::panda(),
            path => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("cannot read robot file {path}: {e}")))?;
                text.parse()
                    .map_err(|e| CliError::Input(format!("robot file {path}: {e}")))?
            }
        };
        let dataset = DatasetParams {
            count: value(&map, "dataset.count")?,
            pool_factor: value(&map, "dataset.pool_factor")?,
            rebalance: value(&map, "dataset.rebalance")?,
            seed: value(&map, "dataset.seed")?,
            workspace: WorkspaceBox {
                min: vec3(&map, "dataset.workspace_min")?,
                max: vec3(&map, "dataset.workspace_max")?,
            },
        };
        check(dataset.count >= 10, "dataset.count must be at least 10")?;
        check(dataset.pool_factor >= 1, "dataset.pool_factor must be at least 1")?;
        check(
            dataset.rebalance > 0.0 && dataset.rebalance < 1.0,
            "dataset.rebalance must lie in (0, 1)",
        )?;
        check(
            (0..3).all(|i| dataset.workspace.min[i] < dataset.workspace.max[i]),
            "dataset.workspace_min must be below dataset.workspace_max on every axis",
        )?;

        let train = TrainConfig {
            hidden: list(&map, "vae.hidden")?,
            epochs: value(&map, "vae.epochs")?,
            batch_size: value(&map, "vae.batch_size")?,
            learning_rate: value(&map, "vae.learning_rate")?,
            momentum: value(&map, "vae.momentum")?,
            kl_weight: value(&map, "vae.kl_weight")?,
            flag_weight: value(&map, "vae.flag_weight")?,
            warmup_fraction: value(&map, "vae.warmup_fraction")?,
            train_fraction: value(&map, "vae.train_fraction")?,
            seed: value(&map, "vae.seed")?,
        };
        check(
            !train.hidden.is_empty() && !train.hidden.contains(&0),
            "vae.hidden needs positive widths",
        )?;
        check(train.epochs > 0 && train.batch_size > 0, "vae.epochs and vae.batch_size must be positive")?;
        check(
            train.learning_rate > 0.0 && (0.0..1.0).contains(&train.momentum),
            "vae.learning_rate must be positive and vae.momentum in [0, 1)",
        )?;
        check(train.flag_weight > 0.0 && train.kl_weight >= 0.0, "vae weights must be non-negative")?;
        check(
            (0.0..=1.0).contains(&train.warmup_fraction) && train.train_fraction > 0.0 && train.train_fraction < 1.0,
            "vae.warmup_fraction must lie in [0, 1] and vae.train_fraction in (0, 1)",
        )?;

        let roadmap = BuildParams {
            k: value(&map, "roadmap.k")?,
            grid_resolution: value(&map, "roadmap.grid_resolution")?,
            margin: value(&map, "roadmap.margin")?,
            flag_threshold: value(&map, "roadmap.flag_threshold")?,
            bridge_factor: value(&map, "roadmap.bridge_factor")?,
        };
        roadmap
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        let metrics = MetricsParams {
            k: value(&map, "metrics.k")?,
            subsample: value(&map, "metrics.subsample")?,
            seed: value(&map, "metrics.seed")?,
        };
        check(metrics.k >= 1, "metrics.k must be positive")?;
        check(metrics.subsample > metrics.k + 1, "metrics.subsample must exceed metrics.k + 1")?;

        let safety = SafetyConfig {
            clearance_threshold: value(&map, "safety.clearance_threshold")?,
            check_period: value(&map, "safety.check_period")?,
            relabel_radius: match map["safety.relabel_radius"].as_str() {
                "auto" => None,
                _ => Some(value(&map, "safety.relabel_radius")?),
            },
            max_joint_step: value(&map, "safety.max_joint_step")?,
            goal_tolerance: value(&map, "safety.goal_tolerance")?,
            lookahead: value(&map, "safety.lookahead")?,
        };
        safety
            .validate(0.0)
            .map_err(|e| CliError::Config(e.to_string()))?;

        let simulate = SimulateParams {
            seed: value(&map, "simulate.seed")?,
            runs: value(&map, "simulate.runs")?,
            max_ticks: match map["simulate.max_ticks"].as_str() {
                "scenario" => None,
                _ => Some(value(&map, "simulate.max_ticks")?),
            },
        };
        check(simulate.runs >= 1, "simulate.runs must be at least 1")?;
        check(simulate.max_ticks != Some(0), "simulate.max_ticks must be positive")?;

        Ok(RunConfig {
            robot,
            out_dir: PathBuf::from(&map["out_dir"]),
            dataset,
            train,
            roadmap,
            metrics,
            safety,
            simulate,
            values: map,
        })
    }

    /// Every setting except `out_dir`, in key order; the robot appears as
    /// its content hash.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, _, _) in KEYS {
            let v = match *k {
                "out_dir" => continue,
                "robot" => self.robot.content_hash(),
                _ => self.values[*k].clone(),
            };
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn hash(&self) -> String {
        content_hash(self.canonical().as_bytes())
    }
}

/// Config file listing every key at its default.
pub fn default_file() -> String {
    let mut s = String::new();
    for (k, v, note) in KEYS {
        if !note.is_empty() {
            let _ = writeln!(s, "# {note}");
        }
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_match_the_library() {
        let c = RunConfig::load(None, &[]).unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.roadmap, BuildParams::default());
        assert_eq!(c.safety, SafetyConfig::default());
        assert_eq!(c.dataset.workspace, WorkspaceBox::panda_default());
    }

    #[test]
    fn overrides_win_and_change_the_hash() {
        let a = RunConfig::load(None, &[]).unwrap();
        let b = RunConfig::load(None, &["vae.epochs=3".into()]).unwrap();
        assert_eq!(b.train.epochs, 3);
        assert_ne!(a.hash(), b.hash());
        let c = RunConfig::load(None, &["out_dir=elsewhere".into()]).unwrap();
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn bad_keys_and_values_are_config_errors() {
        for o in ["nope=1", "vae.epochs=x", "dataset.rebalance=1.5", "roadmap.k=0", "safety.check_period=0"] {
            assert!(matches!(RunConfig::load(None, &[o.into()]), Err(CliError::Config(_))), "{o}");
        }
    }

    #[test]
    fn default_file_round_trips() {
        let map = parse_key_values(&default_file()).unwrap();
        assert_eq!(map.len(), KEYS.len());
    }
}
