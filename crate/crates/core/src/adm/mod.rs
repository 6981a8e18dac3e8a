//! Load-measurement anomaly detection: per-bus DBSCAN clusters over windows
//! of consecutive loads, linearized as convex hulls, plus the deviation-rule
//! bad-data detector used as a baseline.

pub mod dbscan;
pub mod hull;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::BusId;
use crate::par::{self, Execution};

pub use hull::{hull_from_points, ClusterHull, MEMBERSHIP_TOL};

#[derive(Debug, Error)]
pub enum AdmError {
    #[error("series too short: {len} samples for lookback {lookback} and min_pts {min_pts}")]
    InsufficientData { len: usize, lookback: usize, min_pts: usize },
    #[error("no core point found (eps/min_pts too strict){0}")]
    AllNoise(String),
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmConfig {
    pub lookback: usize,
    pub eps: f64,
    pub min_pts: usize,
    /// Thickening margin for clusters that span less than full dimension.
    pub tau: f64,
}

impl Default for AdmConfig {
    fn default() -> Self {
        Self {
            lookback: 1,
            eps: 0.01,
            min_pts: 4,
            tau: 1e-6,
        }
    }
}

impl AdmConfig {
    pub fn validate(&self) -> Result<(), AdmError> {
        if self.lookback == 0 || !(self.eps > 0.0) || self.min_pts == 0 || !(self.tau > 0.0) {
            return Err(AdmError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Consecutive windows `(x[t-l], ..., x[t])`.
pub fn windows(series: &[f64], lookback: usize) -> Vec<Vec<f64>> {
    series.windows(lookback + 1).map(|w| w.to_vec()).collect()
}

/// DBSCAN over the load windows of one bus; noise points are dropped.
pub fn train_dbscan(
    series: &[f64],
    eps: f64,
    min_pts: usize,
    lookback: usize,
) -> Result<Vec<Vec<Vec<f64>>>, AdmError> {
    if series.len() <= lookback + min_pts {
        return Err(AdmError::InsufficientData {
            len: series.len(),
            lookback,
            min_pts,
        });
    }
    let pts = windows(series, lookback);
    let labels = dbscan::dbscan(&pts, eps, min_pts);
    let clusters = dbscan::clusters_from_labels(&pts, &labels);
    if clusters.is_empty() {
        return Err(AdmError::AllNoise(String::new()));
    }
    Ok(clusters)
}

pub fn hulls_from_clusters(clusters: &[Vec<Vec<f64>>], tau: f64) -> Result<Vec<ClusterHull>, AdmError> {
    clusters.iter().map(|c| hull_from_points(c, tau)).collect()
}

/// Trained detector: hulls per bus in (previous..., current) load space.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmModel {
    pub config: AdmConfig,
    pub per_bus: BTreeMap<BusId, Vec<ClusterHull>>,
}

impl AdmModel {
    /// Trains one model per bus (`series[i]` belongs to bus i+1). Buses whose
    /// series is identically zero get a thickened hull at the origin.
    pub fn train(series: &[Vec<f64>], config: AdmConfig, exec: Execution) -> Result<Self, AdmError> {
        config.validate()?;
        let results = par::map(exec, series, |s| -> Result<Vec<ClusterHull>, AdmError> {
            if s.iter().all(|&v| v == 0.0) {
                let origin = vec![vec![0.0; config.lookback + 1]];
                return Ok(vec![hull_from_points(&origin, config.tau)?]);
            }
            let clusters = train_dbscan(s, config.eps, config.min_pts, config.lookback)?;
            hulls_from_clusters(&clusters, config.tau)
        });
        let mut per_bus = BTreeMap::new();
        for (i, r) in results.into_iter().enumerate() {
            let hulls = r.map_err(|e| match e {
                AdmError::AllNoise(_) => AdmError::AllNoise(format!(" on bus {}", i + 1)),
                other => other,
            })?;
            per_bus.insert(BusId::from_index(i), hulls);
        }
        Ok(Self { config, per_bus })
    }

    pub fn lookback(&self) -> usize {
        self.config.lookback
    }

    pub fn hulls(&self, bus: BusId) -> &[ClusterHull] {
        self.per_bus.get(&bus).map_or(&[], |v| v.as_slice())
    }

    /// Inside at least one hull of the bus. Buses without a model accept
    /// everything.
    pub fn is_benign(&self, bus: BusId, window: &[f64]) -> bool {
        assert_eq!(window.len(), self.config.lookback + 1, "window length");
        match self.per_bus.get(&bus) {
            None => true,
            Some(hulls) => hulls.iter().any(|h| h.contains(window)),
        }
    }

    /// Benign iff every bus window is benign (`windows[i]` for bus i+1).
    pub fn is_benign_all(&self, windows: &[Vec<f64>]) -> bool {
        windows
            .iter()
            .enumerate()
            .all(|(i, w)| self.is_benign(BusId::from_index(i), w))
    }

    /// Buses whose window is flagged.
    pub fn flagged(&self, windows: &[Vec<f64>]) -> Vec<BusId> {
        windows
            .iter()
            .enumerate()
            .filter(|(i, w)| !self.is_benign(BusId::from_index(*i), w))
            .map(|(i, _)| BusId::from_index(i))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file: BTreeMap<String, BusModelFile> = self
            .per_bus
            .iter()
            .map(|(b, hulls)| {
                (
                    b.0.to_string(),
                    BusModelFile {
                        lookback: self.config.lookback,
                        clusters: hulls.clone(),
                        dbscan: DbscanFile {
                            eps: self.config.eps,
                            min_pts: self.config.min_pts,
                        },
                        tau: self.config.tau,
                    },
                )
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&file).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AdmError> {
        let file: BTreeMap<String, BusModelFile> = serde_json::from_str(text)?;
        let mut per_bus = BTreeMap::new();
        let mut config: Option<AdmConfig> = None;
        for (k, v) in file {
            let id: usize = k
                .parse()
                .map_err(|_| AdmError::Config(format!("bus key {k:?} is not a number")))?;
            let c = AdmConfig {
                lookback: v.lookback,
                eps: v.dbscan.eps,
                min_pts: v.dbscan.min_pts,
                tau: v.tau,
            };
            if config.is_some_and(|prev| prev.lookback != c.lookback) {
                return Err(AdmError::Config("mixed lookbacks".into()));
            }
            for h in &v.clusters {
                if h.hyperplanes.iter().any(|r| r.len() != c.lookback + 2) {
                    return Err(AdmError::Config(format!("bus {id}: hyperplane length")));
                }
            }
            config = Some(c);
            per_bus.insert(BusId(id), v.clusters);
        }
        Ok(Self {
            config: config.unwrap_or_default(),
            per_bus,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AdmError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DbscanFile {
    eps: f64,
    min_pts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BusModelFile {
    lookback: usize,
    clusters: Vec<ClusterHull>,
    dbscan: DbscanFile,
    #[serde(default = "default_tau")]
    tau: f64,
}

fn default_tau() -> f64 {
    1e-6
}

/// Cycle-to-cycle deviation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BddRule {
    pub max_deviation: f64,
}

impl Default for BddRule {
    fn default() -> Self {
        Self { max_deviation: 0.04 }
    }
}

impl BddRule {
    pub fn check(&self, prev: f64, curr: f64) -> bool {
        bdd_check(self, prev, curr)
    }
}

/// True iff `|curr - prev| <= max_deviation`. A relative slack of 1e-12
/// absorbs rounding in the subtraction so boundary values stay accepted.
pub fn bdd_check(rule: &BddRule, prev: f64, curr: f64) -> bool {
    (curr - prev).abs() <= rule.max_deviation * (1.0 + 1e-12)
}
