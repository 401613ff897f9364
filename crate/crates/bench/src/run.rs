//! Stream-driving logic shared by the CLI and the acceptance suite.

use anyhow::{anyhow, bail};

use dyntree::gain::GainKind;
use dyntree::maintain::TreeMaintainer;
use dyntree::opcount::OpCounter;
use dyntree::oracle::{check_feasibility, FeasibilityParams};
use dyntree::rule::ThresholdRule;

use crate::report::{
    tree_digest, violation_entries, OpsReport, RebuildReport, RunReport, ViolationEntry,
    REPORT_VERSION,
};
use crate::stream::{LabelType, StreamHeader, StreamLine};

/// How many rebuild-log entries a report keeps.
const MAX_REBUILD_LOG: usize = 4096;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub gain_name: String,
    pub kind: GainKind,
    pub alpha: f64,
    pub beta: f64,
    /// Approximation parameter; derive via [`derive_epsilon`] when the
    /// caller does not pin it.
    pub epsilon: f64,
    pub k_star: u64,
    pub h_star: Option<u32>,
    /// Run the feasibility oracle every this many updates (0 = only after
    /// the last update).
    pub verify_every: u64,
    pub tau_override: Option<u64>,
    pub n_max: u64,
}

/// Kind from its CLI name plus the stream header (the variance gain needs
/// the header's half-range).
pub fn gain_kind(name: &str, header: &StreamHeader) -> anyhow::Result<GainKind> {
    match name {
        "gini" => Ok(GainKind::Gini),
        "info" => Ok(GainKind::Info),
        "var" | "variance" => {
            let c = header
                .c
                .ok_or_else(|| anyhow!("variance gain requires the header to declare c"))?;
            if header.label_type != LabelType::Real {
                bail!("variance gain requires real labels");
            }
            Ok(GainKind::Variance { half_range: c })
        }
        other => bail!("unknown gain {other:?} (expected gini, info, or var)"),
    }
}

pub fn derive_epsilon(kind: GainKind, alpha: f64, beta: f64, n_max: u64) -> f64 {
    FeasibilityParams {
        alpha,
        beta,
        kind,
        n_max,
    }
    .derived_epsilon()
}

/// The maintained decision rule: max-gain with threshold `alpha / 2`, so
/// that an epsilon-approximate tree is `(alpha, beta)`-feasible.
pub fn maintained_rule(cfg: &RunConfig) -> anyhow::Result<ThresholdRule> {
    Ok(ThresholdRule::new(cfg.kind, cfg.alpha / 2.0)?
        .with_min_leaf(cfg.k_star)
        .with_max_depth(cfg.h_star))
}

pub struct RunOutcome {
    pub report: RunReport,
    pub feasibility_violations: usize,
    pub budget_violations: u64,
}

/// Drive a maintainer over the stream, verifying on the configured
/// cadence. A delete of an absent example fails with its line number.
pub fn drive_stream(
    input_name: &str,
    lines: &[StreamLine],
    cfg: &RunConfig,
) -> anyhow::Result<RunOutcome> {
    let rule = maintained_rule(cfg)?;
    let ops = OpCounter::new();
    let mut maintainer = TreeMaintainer::new(rule, cfg.epsilon, ops.clone())?;
    maintainer.set_tau_override(cfg.tau_override);
    let params = FeasibilityParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        kind: cfg.kind,
        n_max: cfg.n_max,
    };

    let mut violations: Vec<ViolationEntry> = Vec::new();
    let mut checks = 0u64;
    let total = lines.len() as u64;
    for (i, line) in lines.iter().enumerate() {
        maintainer
            .apply(line.request.clone())
            .map_err(|e| anyhow!("line {}: {e}", line.line))?;
        let idx = i as u64 + 1;
        let due = (cfg.verify_every > 0 && idx % cfg.verify_every == 0) || idx == total;
        if due && maintainer.active_size() > 0 {
            checks += 1;
            let found = check_feasibility(maintainer.tree(), maintainer.active_set(), &params)?;
            violations.extend(violation_entries(idx, &found));
        }
    }

    let stats = maintainer.stats();
    let report = RunReport {
        version: REPORT_VERSION,
        command: "run-stream".into(),
        input: input_name.into(),
        gain: cfg.gain_name.clone(),
        alpha: cfg.alpha,
        beta: cfg.beta,
        epsilon: cfg.epsilon,
        verify_every: cfg.verify_every,
        updates: stats.updates,
        final_active_size: maintainer.active_size(),
        final_height: maintainer.height(),
        max_active_size: maintainer.max_active_size(),
        ops: OpsReport::from_stats(ops.snapshot(), &stats),
        rebuilds: RebuildReport::from_stats(&stats, MAX_REBUILD_LOG),
        budget_violations: stats.budget_violations,
        feasibility_checks: checks,
        violations: violations.clone(),
        tree_digest: tree_digest(maintainer.tree()),
    };
    Ok(RunOutcome {
        feasibility_violations: violations.len(),
        budget_violations: stats.budget_violations,
        report,
    })
}
