//! Collision-labelled configuration samples.
//!
//! Every sample flattens to 18 numbers in a fixed order:
//! `theta0..theta6, x, y, z, qw, qx, qy, qz, ox, oy, oz, collision`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::collision::{is_collision, CollisionError, ConvexShape};
use crate::robot::{JointVector, Pose, RobotModel, DOF};
use crate::util::content_hash;

/// Number of flattened fields per sample.
pub const FIELDS: usize = 18;
/// Index of the collision flag in the flattened vector.
pub const FLAG_INDEX: usize = 17;
/// Radius of the sphere standing in for a point obstacle.
pub const POINT_OBSTACLE_RADIUS: f64 = 0.02;

pub const COLUMNS: [&str; FIELDS] = [
    "theta0", "theta1", "theta2", "theta3", "theta4", "theta5", "theta6", "x", "y", "z", "qw", "qx",
    "qy", "qz", "ox", "oy", "oz", "collision",
];

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset needs both collision classes ({colliding} colliding of {total})")]
    SingleClass { colliding: usize, total: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("split would leave a class empty in one part")]
    EmptySplitClass,
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub joints: JointVector,
    pub ee_pose: Pose,
    pub obstacle_pos: Vector3<f64>,
    pub collision: bool,
}

impl Sample {
    pub fn to_row(&self) -> [f64; FIELDS] {
        let mut r = [0.0; FIELDS];
        r[..DOF].copy_from_slice(&self.joints.0);
        r[7] = self.ee_pose.position.x;
        r[8] = self.ee_pose.position.y;
        r[9] = self.ee_pose.position.z;
        r[10..14].copy_from_slice(&self.ee_pose.quat_wxyz());
        r[14] = self.obstacle_pos.x;
        r[15] = self.obstacle_pos.y;
        r[16] = self.obstacle_pos.z;
        r[FLAG_INDEX] = if self.collision { 1.0 } else { 0.0 };
        r
    }

    pub fn from_row(row: &[f64; FIELDS]) -> Result<Sample, String> {
        let collision = match row[FLAG_INDEX] {
            f if f == 0.0 => false,
            f if f == 1.0 => true,
            f => return Err(format!("collision flag must be 0 or 1, got {f}")),
        };
        let mut joints = [0.0; DOF];
        joints.copy_from_slice(&row[..DOF]);
        let q = Quaternion::new(row[10], row[11], row[12], row[13]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("quaternion norm {} is not 1", q.norm()));
        }
        Ok(Sample {
            joints: JointVector(joints),
            ee_pose: Pose {
                position: Vector3::new(row[7], row[8], row[9]),
                orientation: UnitQuaternion::new_unchecked(q),
            },
            obstacle_pos: Vector3::new(row[14], row[15], row[16]),
            collision,
        })
    }
}

/// Axis-aligned region for obstacle placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkspaceBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorkspaceBox {
    /// Encloses the Panda's reachable envelope above the table.
    pub fn panda_default() -> Self {
        WorkspaceBox {
            min: [-0.85, -0.85, 0.0],
            max: [0.85, 0.85, 1.2],
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        for i in 0..3 {
            if !(self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i]) {
                return Err(DatasetError::InvalidArgument(format!(
                    "workspace box axis {i} is degenerate"
                )));
            }
        }
        Ok(())
    }
}

/// Per-field affine scaling; the collision flag is never scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: [f64; FIELDS],
    pub scale: [f64; FIELDS],
    /// Fields whose variance was zero (scale clamped to 1).
    pub clamped: Vec<usize>,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            mean: [0.0; FIELDS],
            scale: [1.0; FIELDS],
            clamped: Vec::new(),
        }
    }

    pub fn fit(samples: &[Sample]) -> Self {
        let n = samples.len().max(1) as f64;
        let rows: Vec<[f64; FIELDS]> = samples.iter().map(Sample::to_row).collect();
        let mut mean = [0.0; FIELDS];
        let mut scale = [1.0; FIELDS];
        let mut clamped = Vec::new();
        for f in 0..FLAG_INDEX {
            let m = rows.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / n;
            mean[f] = m;
            if var > 0.0 && var.is_finite() {
                scale[f] = var.sqrt();
            } else {
                log::warn!("field {} has zero variance; scale clamped to 1", COLUMNS[f]);
                clamped.push(f);
            }
        }
        Normalization {
            mean,
            scale,
            clamped,
        }
    }

    pub fn normalize(&self, x: &[f64; FIELDS]) -> [f64; FIELDS] {
        let mut out = *x;
        for f in 0..FLAG_INDEX {
            out[f] = (x[f] - self.mean[f]) / self.scale[f];
        }
        out
    }

    pub fn denormalize(&self, x: &[f64; FIELDS]) -> [f64; FIELDS] {
        let mut out = *x;
        for f in 0..FLAG_INDEX {
            out[f] = x[f] * self.scale[f] + self.mean[f];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub normalization: Option<Normalization>,
    pub seed: u64,
    pub model_hash: String,
}

fn sample_at(model: &RobotModel, bounds: &WorkspaceBox, seed: u64, index: u64) -> Result<Sample, CollisionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let joints = model.sample_configuration(&mut rng);
    let mut o = [0.0; 3];
    for (i, v) in o.iter_mut().enumerate() {
        *v = rng.random_range(bounds.min[i]..bounds.max[i]);
    }
    let obstacle_pos = Vector3::from(o);
    let obstacle = ConvexShape::sphere(obstacle_pos, POINT_OBSTACLE_RADIUS)?;
    let collision = is_collision(model, &joints, &obstacle, 0.0)?;
    Ok(Sample {
        joints,
        ee_pose: model.forward_kinematics_unchecked(&joints),
        obstacle_pos,
        collision,
    })
}

impl Dataset {
    /// Draws `count` random configurations and point-obstacle positions and
    /// labels them with the touching-is-collision flag. Sample `i` depends
    /// only on `(seed, i)`.
    pub fn generate(
        model: &RobotModel,
        count: usize,
        bounds: &WorkspaceBox,
        seed: u64,
    ) -> Result<Dataset, DatasetError> {
        if count == 0 {
            return Err(DatasetError::InvalidArgument("count must be at least 1".into()));
        }
        bounds.validate()?;
        let samples = (0..count as u64)
            .map(|i| sample_at(model, bounds, seed, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            samples,
            normalization: None,
            seed,
            model_hash: model.content_hash(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn colliding_count(&self) -> usize {
        self.samples.iter().filter(|s| s.collision).count()
    }

    pub fn collision_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.colliding_count() as f64 / self.samples.len() as f64
        }
    }

    fn require_both_classes(&self) -> Result<(), DatasetError> {
        let c = self.colliding_count();
        if c == 0 || c == self.len() {
            Err(DatasetError::SingleClass {
                colliding: c,
                total: self.len(),
            })
        } else {
            Ok(())
        }
    }

    fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset {
            samples,
            normalization: self.normalization.clone(),
            seed: self.seed,
            model_hash: self.model_hash.clone(),
        }
    }

    /// Resamples to the same size with `round(target * n)` colliding
    /// samples: classes are subsampled when they have enough members and
    /// topped up with duplicates otherwise.
    pub fn rebalance(&self, target: f64, seed: u64) -> Result<Dataset, DatasetError> {
        self.rebalance_to(target, self.len(), seed)
    }

    /// Like [`Dataset::rebalance`] but with an explicit output size, so a
    /// large raw pool can be thinned without duplicating rare collisions.
    pub fn rebalance_to(&self, target: f64, size: usize, seed: u64) -> Result<Dataset, DatasetError> {
        if size < 2 {
            return Err(DatasetError::InvalidArgument("rebalanced size must be at least 2".into()));
        }
        if !(target > 0.0 && target < 1.0) {
            return Err(DatasetError::InvalidArgument(format!(
                "target fraction {target} must lie in (0, 1)"
            )));
        }
        self.require_both_classes()?;
        let n = size;
        let want_col = ((target * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (col, safe): (Vec<&Sample>, Vec<&Sample>) = self.samples.iter().partition(|s| s.collision);
        let mut pick = |pool: Vec<&Sample>, k: usize| -> Vec<Sample> {
            let mut pool: Vec<Sample> = pool.into_iter().copied().collect();
            pool.shuffle(&mut rng);
            if k <= pool.len() {
                pool.truncate(k);
                pool
            } else {
                let extra: Vec<Sample> = (0..k - pool.len())
                    .map(|_| pool[rng.random_range(0..pool.len())])
                    .collect();
                pool.extend(extra);
                pool
            }
        };
        let mut out = pick(col, want_col);
        out.extend(pick(safe, n - want_col));
        out.shuffle(&mut rng);
        Ok(self.with_samples(out))
    }

    /// Stratified split. The training part keeps `round(fraction * n)`
    /// samples, distributed across classes by largest remainder.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::InvalidArgument(format!(
                "train fraction {train_fraction} must lie in (0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, s) in self.samples.iter().enumerate() {
            classes[s.collision as usize].push(i);
        }
        let n = self.len();
        let total_train = (train_fraction * n as f64).round() as usize;
        let exact: Vec<f64> = classes
            .iter()
            .map(|c| train_fraction * c.len() as f64)
            .collect();
        let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = vec![0, 1];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut assigned: usize = take.iter().sum();
        for &c in order.iter().cycle().take(4) {
            if assigned >= total_train {
                break;
            }
            if take[c] < classes[c].len() {
                take[c] += 1;
                assigned += 1;
            }
        }
        for (c, members) in classes.iter().enumerate() {
            if !members.is_empty() && (take[c] == 0 || take[c] == members.len()) {
                return Err(DatasetError::EmptySplitClass);
            }
        }
        let mut train = Vec::with_capacity(total_train);
        let mut test = Vec::with_capacity(n - total_train);
        for (c, members) in classes.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            for (k, &i) in members.iter().enumerate() {
                if k < take[c] {
                    train.push(i);
                } else {
                    test.push(i);
                }
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        let pick = |idx: &[usize]| idx.iter().map(|&i| self.samples[i]).collect::<Vec<_>>();
        Ok((self.with_samples(pick(&train)), self.with_samples(pick(&test))))
    }

    /// Fits normalization statistics on this (training) dataset.
    pub fn fit_normalization(&mut self) -> &Normalization {
        self.normalization = Some(Normalization::fit(&self.samples));
        self.normalization.as_ref().unwrap()
    }

    /// Checks the stored end-effector pose against forward kinematics.
    pub fn check_consistency(&self, model: &RobotModel, tol: f64) -> Result<(), DatasetError> {
        for (row, s) in self.samples.iter().enumerate() {
            let fk = model.forward_kinematics_unchecked(&s.joints);
            let dp = (fk.position - s.ee_pose.position).norm();
            let a = fk.quat_wxyz();
            let b = s.ee_pose.quat_wxyz();
            let dq = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if dp > tol || dq > tol {
                return Err(DatasetError::Row {
                    row,
                    message: format!("end-effector pose disagrees with kinematics ({dp:e} m)"),
                });
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String, DatasetError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for s in &self.samples {
            let row = s.to_row();
            let mut rec: Vec<String> = row[..FLAG_INDEX].iter().map(|v| v.to_string()).collect();
            rec.push(if s.collision { "1".into() } else { "0".into() });
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| DatasetError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii csv"))
    }

    fn parse_csv(text: &str) -> Result<Vec<Sample>, DatasetError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != COLUMNS {
            return Err(DatasetError::Row {
                row: 0,
                message: "header does not match the 18 expected columns".into(),
            });
        }
        let mut out = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row_no = i + 1;
            if rec.len() != FIELDS {
                return Err(DatasetError::Row {
                    row: row_no,
                    message: format!("expected {FIELDS} fields, got {}", rec.len()),
                });
            }
            let mut row = [0.0; FIELDS];
            for (v, field) in row.iter_mut().zip(rec.iter()) {
                *v = field.parse().map_err(|_| DatasetError::Row {
                    row: row_no,
                    message: format!("invalid number `{field}`"),
                })?;
            }
            out.push(Sample::from_row(&row).map_err(|message| DatasetError::Row { row: row_no, message })?);
        }
        Ok(out)
    }

    pub fn metadata(&self, config_hash: &str, tool_version: &str, csv_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(s, "tool_version = {tool_version}");
        let _ = writeln!(s, "config_hash = {config_hash}");
        let _ = writeln!(s, "model_hash = {}", self.model_hash);
        let _ = writeln!(s, "csv_hash = {csv_hash}");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "count = {}", self.len());
        let _ = writeln!(s, "colliding_fraction = {}", self.collision_fraction());
        if let Some(n) = &self.normalization {
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(s, "normalization_mean = {}", join(&n.mean));
            let _ = writeln!(s, "normalization_scale = {}", join(&n.scale));
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.meta` into `dir`; returns the paths.
    pub fn save(
        &self,
        dir: &Path,
        stem: &str,
        config_hash: &str,
        tool_version: &str,
    ) -> Result<(PathBuf, PathBuf), DatasetError> {
        let csv_text = self.to_csv()?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta_path = dir.join(format!("{stem}.meta"));
        fs::write(&csv_path, &csv_text)?;
        fs::write(
            &meta_path,
            self.metadata(config_hash, tool_version, &content_hash(csv_text.as_bytes())),
        )?;
        Ok((csv_path, meta_path))
    }

    /// Loads a CSV file and its sidecar, validating the sidecar hash and
    /// the kinematic consistency of every row.
    pub fn load(csv_path: &Path, model: &RobotModel) -> Result<(Dataset, DatasetMeta), DatasetError> {
        let text = fs::read_to_string(csv_path)?;
        let meta_path = csv_path.with_extension("meta");
        let meta = DatasetMeta::parse(&fs::read_to_string(&meta_path)?)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(DatasetError::Metadata(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        if meta.csv_hash != content_hash(text.as_bytes()) {
            return Err(DatasetError::Metadata("csv content does not match its sidecar hash".into()));
        }
        if meta.model_hash != model.content_hash() {
            return Err(DatasetError::Metadata(
                "dataset was generated for a different robot model".into(),
            ));
        }
        let samples = Dataset::parse_csv(&text)?;
        let ds = Dataset {
            samples,
            normalization: None,
            seed: meta.seed,
            model_hash: meta.model_hash.clone(),
        };
        ds.check_consistency(model, 1e-6)?;
        Ok((ds, meta))
    }
}

/// Parsed dataset sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub model_hash: String,
    pub csv_hash: String,
    pub seed: u64,
    pub count: usize,
}

/// Parses `key = value` lines, ignoring blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl DatasetMeta {
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let map = parse_key_values(text).map_err(DatasetError::Metadata)?;
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| DatasetError::Metadata(format!("missing key `{k}`")))
        };
        let num = |k: &str| -> Result<u64, DatasetError> {
            get(k)?
                .parse()
                .map_err(|_| DatasetError::Metadata(format!("invalid `{k}`")))
        };
        Ok(DatasetMeta {
            format_version: num("format_version")? as u32,
            tool_version: get("tool_version")?,
            config_hash: get("config_hash")?,
            model_hash: get("model_hash")?,
            csv_hash: get("csv_hash")?,
            seed: num("seed")?,
            count: num("count")? as usize,
        })
    }
}
