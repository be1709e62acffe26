//! Empirical checks of the per-node regret guarantees.

use rand::Rng;
use serde::Serialize;

use super::{ExperimentResult, PolicyKind, RunConfig, RunOptions};
use crate::env::Environment;
use crate::error::Result;
use crate::rng::{substream, Purpose};
use crate::tree::NodeId;
use crate::types::{best_gft, Context};

/// Cap on the GFT anywhere in a node's region once its reduce phase is
/// over: `6 L 2^-l` for the known-L policy, `10 L 2^-l` for unknown-L.
pub fn lemma_bound(policy: PolicyKind, lipschitz: f64, level: u32) -> f64 {
    let c = match policy {
        PolicyKind::KnownL => 6.0,
        PolicyKind::UnknownL => 10.0,
    };
    c * lipschitz * 0.5f64.powi(level as i32)
}

/// Cap on the regret of one node's reduce phase, `24 L 2^-l`.
pub fn reduce_regret_bound(lipschitz: f64, level: u32) -> f64 {
    24.0 * lipschitz * 0.5f64.powi(level as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaViolation {
    pub repetition: u32,
    pub node: NodeId,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LemmaReport {
    pub nodes_checked: usize,
    pub samples_per_node: usize,
    /// Largest observed/bound ratio over all checked nodes.
    pub max_ratio: f64,
    pub violations: Vec<LemmaViolation>,
}

impl LemmaReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    fn merge(&mut self, other: LemmaReport) {
        self.nodes_checked += other.nodes_checked;
        self.samples_per_node = self.samples_per_node.max(other.samples_per_node);
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        self.violations.extend(other.violations);
    }
}

/// Largest GFT over `samples` uniform points of the node's region plus its
/// corners.
fn max_region_gft(
    env: &dyn Environment,
    node: &NodeId,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let side = node.side();
    let z = node.reference_point();
    let d = z.len();
    let mut best: f64 = 0.0;
    let mut eval = |coords: Vec<f64>| -> Result<()> {
        let v = env.valuations(&Context::new(coords)?)?;
        best = best.max(best_gft(&v));
        Ok(())
    };
    for corner in 0..(1u32 << d.min(16)) {
        eval(
            (0..d)
                .map(|i| z[i] + if corner >> i & 1 == 1 { side } else { 0.0 })
                .map(|c| c.min(1.0))
                .collect(),
        )?;
    }
    for _ in 0..samples {
        eval(
            z.iter()
                .map(|&zi| (zi + side * rng.random::<f64>()).min(1.0))
                .collect(),
        )?;
    }
    Ok(best)
}

/// Samples every reduce-completed node of every repetition.
pub fn check_lemma_bounds(exp: &ExperimentResult, samples: usize) -> Result<LemmaReport> {
    let cfg = &exp.config;
    let mut report = LemmaReport {
        samples_per_node: samples,
        ..LemmaReport::default()
    };
    for rep in &exp.repetitions {
        let mut rng = substream(cfg.seed, u64::from(rep.repetition), Purpose::Validation);
        let mut part = LemmaReport::default();
        for node in &rep.reduce_completed {
            let bound = lemma_bound(cfg.policy, cfg.lipschitz, node.level());
            let observed = max_region_gft(&*rep.env, node, samples, &mut rng)?;
            part.nodes_checked += 1;
            part.max_ratio = part.max_ratio.max(observed / bound);
            if observed > bound {
                part.violations.push(LemmaViolation {
                    repetition: rep.repetition,
                    node: node.clone(),
                    observed,
                    bound,
                });
            }
        }
        report.merge(part);
    }
    Ok(report)
}

/// Runs `cfg` and checks the post-reduce GFT cap with `samples` points per node.
pub fn validate_lemma_bounds(cfg: &RunConfig, samples: usize) -> Result<LemmaReport> {
    let exp = super::run_experiment(cfg, RunOptions::default())?;
    check_lemma_bounds(&exp, samples)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReduceRegretReport {
    pub nodes_checked: usize,
    pub max_ratio: f64,
    pub violations: Vec<LemmaViolation>,
}

/// Compares every non-root node's reduce-phase regret with `24 L 2^-l`.
pub fn check_reduce_regret(exp: &ExperimentResult) -> ReduceRegretReport {
    let mut report = ReduceRegretReport::default();
    for rep in &exp.repetitions {
        for (node, regret) in &rep.node_regret {
            if node.level() == 0 {
                continue;
            }
            let bound = reduce_regret_bound(exp.config.lipschitz, node.level());
            report.nodes_checked += 1;
            report.max_ratio = report.max_ratio.max(regret.reduce / bound);
            if regret.reduce > bound {
                report.violations.push(LemmaViolation {
                    repetition: rep.repetition,
                    node: node.clone(),
                    observed: regret.reduce,
                    bound,
                });
            }
        }
    }
    report
}
