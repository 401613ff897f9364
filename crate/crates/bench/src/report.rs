//! Versioned JSON report schemas. Reports contain no timestamps, so
//! identical inputs and seeds produce byte-identical files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dyntree::maintain::{MaintStats, RebuildCause};
use dyntree::opcount::OpSnapshot;
use dyntree::oracle::Violation;
use dyntree::tree::DecisionTree;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsReport {
    pub total: u64,
    pub cmp: u64,
    pub map_accesses: u64,
    pub arith: u64,
    /// Map accesses weighted by log2 of the container size at access
    /// time, for comparison against the logarithmic cost model.
    pub map_log_weighted: f64,
    pub max_per_update: u64,
    pub mean_per_update: f64,
    /// Bucket `b` counts updates whose charge had bit length `b`.
    pub histogram: Vec<u64>,
}

impl OpsReport {
    pub fn from_stats(snapshot: OpSnapshot, stats: &MaintStats) -> Self {
        OpsReport {
            total: snapshot.total(),
            cmp: snapshot.cmp,
            map_accesses: snapshot.map,
            arith: snapshot.arith,
            map_log_weighted: snapshot.map_log_weighted,
            max_per_update: stats.max_ops_per_update,
            mean_per_update: if stats.updates == 0 {
                0.0
            } else {
                stats.total_ops as f64 / stats.updates as f64
            },
            histogram: stats.ops_histogram.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RebuildEntry {
    pub update_index: u64,
    pub depth: u32,
    pub new_size: u64,
    pub cause: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RebuildReport {
    pub total: usize,
    pub eager: u64,
    pub instance_completions: u64,
    pub instances_created: u64,
    pub log: Vec<RebuildEntry>,
}

impl RebuildReport {
    pub fn from_stats(stats: &MaintStats, max_log: usize) -> Self {
        RebuildReport {
            total: stats.rebuilds.len(),
            eager: stats.eager_rebuilds,
            instance_completions: stats.instance_completions,
            instances_created: stats.instances_created,
            log: stats
                .rebuilds
                .iter()
                .take(max_log)
                .map(|e| RebuildEntry {
                    update_index: e.update_index,
                    depth: e.depth,
                    new_size: e.new_size,
                    cause: match e.cause {
                        RebuildCause::Instance => "instance".into(),
                        RebuildCause::Eager => "eager".into(),
                    },
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationEntry {
    pub update_index: u64,
    pub path: Vec<u8>,
    pub condition: String,
    pub detail: String,
}

pub fn violation_entries(update_index: u64, violations: &[Violation]) -> Vec<ViolationEntry> {
    violations
        .iter()
        .map(|v| ViolationEntry {
            update_index,
            path: v.path.clone(),
            condition: format!("{:?}", v.condition),
            detail: v.detail.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub command: String,
    pub input: String,
    pub gain: String,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub verify_every: u64,
    pub updates: u64,
    pub final_active_size: u64,
    pub final_height: u32,
    pub max_active_size: u64,
    pub ops: OpsReport,
    pub rebuilds: RebuildReport,
    pub budget_violations: u64,
    pub feasibility_checks: u64,
    pub violations: Vec<ViolationEntry>,
    pub tree_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u64,
    pub trial: u64,
    pub max_ops_per_update: u64,
    pub mean_ops_per_update: f64,
    pub baseline_max_ops_per_update: Option<u64>,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub version: u32,
    pub generator: String,
    pub gain: String,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub sizes: Vec<u64>,
    pub rows: Vec<ScalingRow>,
    /// Worst max-ops ratio between the largest and smallest size.
    pub maintained_ratio: f64,
    pub baseline_ratio: Option<f64>,
    /// Frozen acceptance bound on `maintained_ratio`.
    pub ratio_bound: f64,
    pub pass: bool,
}

/// Hex SHA-256 of the canonical JSON tree dump.
pub fn tree_digest(tree: &DecisionTree) -> String {
    let dump = serde_json::to_vec(&tree.to_dump()).expect("tree dump serializes");
    let mut h = Sha256::new();
    h.update(&dump);
    hex_string(&h.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
