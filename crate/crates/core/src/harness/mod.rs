//! Experiment orchestration: rounds, repetitions, regret accounting.
//!
//! A [`Runner`] binds one policy to one [`Market`]. Each round it posts a
//! price, answers it with the trade bit, and asks the oracle for the true
//! valuations to book instantaneous regret against the visited node.

mod config;
mod lemma;
mod markov;
mod results;
mod stats;

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::env::{
    ConstantEnv, ContextGenerator, Environment, GridOrdering, HardInstance, Market, QuadraticEnv,
};
use crate::error::{Error, Result};
use crate::policy::{
    KnownLConfig, KnownLPolicy, PhaseTag, PricingPolicy, UnknownLConfig, UnknownLPolicy,
};
use crate::rng::{substream, Purpose, SimRng};
use crate::tree::{NodeId, Tree, TreeParams};
use crate::types::{best_gft, gft, Context, Price};

pub use config::{default_tail_len, CheckpointMode, EnvSpec, PolicyKind, RunConfig};
pub use lemma::{
    check_lemma_bounds, check_reduce_regret, lemma_bound, reduce_regret_bound,
    validate_lemma_bounds, LemmaReport, LemmaViolation, ReduceRegretReport,
};
pub use markov::{
    expected_hitting_time, validate_markov, validate_markov_variant, ChainVariant, MarkovReport,
};
pub use results::{emit_results, read_meta, read_results, sidecar_path, write_meta};
pub use stats::{aggregate, fit_tail_slope, mean_ci, AggregateResult, ResultRow};

/// One round of play.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub t: u64,
    pub context: Vec<f64>,
    pub node: NodeId,
    pub phase: PhaseTag,
    pub price: Price,
    pub accepted: bool,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

/// Regret booked at one node, split by the phase that posted the price.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NodeRegret {
    pub reduce: f64,
    pub guess: f64,
    pub leaf: f64,
    pub rounds: u64,
}

impl NodeRegret {
    pub fn total(&self) -> f64 {
        self.reduce + self.guess + self.leaf
    }
}

pub type BoxedPolicy = Box<dyn PricingPolicy + Send>;

pub fn build_policy(cfg: &RunConfig) -> Result<BoxedPolicy> {
    let params = TreeParams::new(cfg.d, cfg.horizon)?;
    Ok(match cfg.policy {
        PolicyKind::KnownL => {
            let mut pc = KnownLConfig::new(cfg.lipschitz, params)?;
            if let Some(eps) = cfg.eps {
                pc = pc.with_eps(eps)?;
            }
            Box::new(KnownLPolicy::new(pc))
        }
        PolicyKind::UnknownL => {
            let mut pc = UnknownLConfig::new(params);
            if let Some(eps) = cfg.eps {
                pc = pc.with_eps(eps)?;
            }
            Box::new(UnknownLPolicy::new(pc))
        }
    })
}

/// The guess-grid step the known-L policy uses under `cfg`.
pub fn known_l_eps(cfg: &RunConfig) -> f64 {
    cfg.eps
        .unwrap_or_else(|| cfg.lipschitz * (cfg.horizon as f64).powf(-1.0 / cfg.d as f64))
}

/// Environment and context source of repetition `rep`.
pub fn build_environment(
    cfg: &RunConfig,
    rep: u32,
) -> Result<(Arc<dyn Environment>, ContextGenerator)> {
    let mut rng = substream(cfg.seed, u64::from(rep), Purpose::Environment);
    let uniform = ContextGenerator::UniformRandom { seed: cfg.seed };
    let source = |file: &Option<std::path::PathBuf>| match file {
        Some(path) => ContextGenerator::FileReplay { path: path.clone() },
        None => uniform.clone(),
    };
    match &cfg.env {
        EnvSpec::Quadratic {
            resample,
            seller,
            buyer,
            contexts,
        } => {
            let env = match (seller, buyer) {
                (Some(a), Some(b)) => {
                    QuadraticEnv::new(cfg.d, flatten(a, cfg.d)?, flatten(b, cfg.d)?)?
                }
                _ if *resample => QuadraticEnv::random(cfg.d, &mut rng)?,
                _ => {
                    QuadraticEnv::random(cfg.d, &mut substream(cfg.seed, 0, Purpose::Environment))?
                }
            };
            Ok((Arc::new(env), source(contexts)))
        }
        EnvSpec::Constant {
            seller,
            buyer,
            contexts,
        } => Ok((
            Arc::new(ConstantEnv::new(cfg.d, *seller, *buyer)?),
            source(contexts),
        )),
        EnvSpec::Hard { shuffle } => {
            let inst = HardInstance::sample(cfg.hard_params(), &mut rng)?;
            let ordering = if *shuffle {
                GridOrdering::Shuffled(rng.random())
            } else {
                GridOrdering::Lexicographic
            };
            let contexts = inst.context_generator(ordering);
            Ok((Arc::new(inst), contexts))
        }
    }
}

fn flatten(m: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidConfig(format!("matrix must be {d}x{d}")));
    }
    Ok(m.concat())
}

/// Geometric checkpoints (ratio about 1.05) plus every round of the final
/// `tail_len`, or every round when `mode` asks for it.
pub fn checkpoint_schedule(rounds: u64, tail_len: usize, mode: CheckpointMode) -> Vec<u64> {
    let all = match mode {
        CheckpointMode::All => true,
        CheckpointMode::Geometric => false,
        CheckpointMode::Auto => rounds <= 100_000,
    };
    if all {
        return (1..=rounds).collect();
    }
    let tail_start = rounds.saturating_sub(tail_len as u64) + 1;
    let mut out = Vec::new();
    let mut t = 1u64;
    while t < tail_start {
        out.push(t);
        t = (t + 1).max((t as f64 * 1.05).ceil() as u64);
    }
    out.extend(tail_start.max(1)..=rounds);
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub keep_records: bool,
    /// Brute-force scan of the guess grid on every guess round whose
    /// oracle GFT exceeds the grid step (known-L only).
    pub check_guess_feasibility: bool,
}

/// Drives one policy against one market.
pub struct Runner<E> {
    policy: BoxedPolicy,
    market: Market<E>,
    rng: SimRng,
    t: u64,
    cum_regret: f64,
    node_index: HashMap<NodeId, usize>,
    nodes: Vec<(NodeId, NodeRegret)>,
    feasibility_eps: Option<f64>,
    guess_checks: u64,
    guess_violations: u64,
}

impl<E: Environment> Runner<E> {
    pub fn new(policy: BoxedPolicy, market: Market<E>, rng: SimRng) -> Self {
        Runner {
            policy,
            market,
            rng,
            t: 0,
            cum_regret: 0.0,
            node_index: HashMap::new(),
            nodes: Vec::new(),
            feasibility_eps: None,
            guess_checks: 0,
            guess_violations: 0,
        }
    }

    /// Enables the guess-feasibility scan for grids of step `eps`.
    pub fn check_guess_feasibility(mut self, eps: f64) -> Self {
        self.feasibility_eps = Some(eps);
        self
    }

    pub fn step(&mut self, x: &Context) -> Result<RunRecord> {
        let posting = self.policy.post_price(x, &mut self.rng)?;
        let fb = self.market.feedback(x, posting.price)?;
        let v = self.market.oracle(x)?;
        if let (Some(eps), PhaseTag::Guess) = (self.feasibility_eps, posting.phase) {
            if best_gft(&v) > eps {
                self.guess_checks += 1;
                let ok = self
                    .policy
                    .guess_grid(&posting.node)
                    .is_some_and(|g| g.has_accepting_price(&v));
                if !ok {
                    self.guess_violations += 1;
                }
            }
        }
        self.policy
            .observe(&posting.node, posting.phase, posting.price, fb)?;

        let inst = best_gft(&v) - gft(posting.price, &v);
        self.t += 1;
        self.cum_regret += inst;
        let idx = match self.node_index.get(&posting.node) {
            Some(&i) => i,
            None => {
                self.nodes
                    .push((posting.node.clone(), NodeRegret::default()));
                self.node_index
                    .insert(posting.node.clone(), self.nodes.len() - 1);
                self.nodes.len() - 1
            }
        };
        let acc = &mut self.nodes[idx].1;
        acc.rounds += 1;
        match posting.phase {
            PhaseTag::Reduce => acc.reduce += inst,
            PhaseTag::Guess => acc.guess += inst,
            PhaseTag::Leaf => acc.leaf += inst,
        }
        Ok(RunRecord {
            t: self.t,
            context: x.coords().to_vec(),
            node: posting.node,
            phase: posting.phase,
            price: posting.price,
            accepted: fb.accepted,
            inst_regret: inst,
            cum_regret: self.cum_regret,
        })
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn cum_regret(&self) -> f64 {
        self.cum_regret
    }

    /// `|sum of per-node regret - cumulative regret|`.
    pub fn decomposition_error(&self) -> f64 {
        let by_node: f64 = self.nodes.iter().map(|(_, r)| r.total()).sum();
        (by_node - self.cum_regret).abs()
    }

    /// Per-node regret in first-visit order.
    pub fn node_regret(&self) -> &[(NodeId, NodeRegret)] {
        &self.nodes
    }

    pub fn policy(&self) -> &dyn PricingPolicy {
        &*self.policy
    }

    pub fn market(&self) -> &Market<E> {
        &self.market
    }

    pub fn guess_checks(&self) -> (u64, u64) {
        (self.guess_checks, self.guess_violations)
    }
}

/// Everything one repetition produced.
pub struct RepetitionResult {
    pub repetition: u32,
    pub rounds: u64,
    /// Cumulative regret at each checkpoint of the experiment's schedule.
    pub checkpoint_regret: Vec<f64>,
    pub final_regret: f64,
    pub decomposition_max_error: f64,
    pub node_regret: Vec<(NodeId, NodeRegret)>,
    pub reduce_completed: Vec<NodeId>,
    pub tree: Tree,
    pub env: Arc<dyn Environment>,
    pub oracle_calls: u64,
    pub guess_checks: u64,
    pub guess_violations: u64,
    pub records: Vec<RunRecord>,
}

pub struct ExperimentResult {
    pub config: RunConfig,
    pub schedule: Vec<u64>,
    pub repetitions: Vec<RepetitionResult>,
}

impl ExperimentResult {
    pub fn aggregate(&self) -> Result<AggregateResult> {
        let paths: Vec<&[f64]> = self
            .repetitions
            .iter()
            .map(|r| r.checkpoint_regret.as_slice())
            .collect();
        let mut agg = aggregate(&self.schedule, &paths, self.config.tail_len())?;
        let n = self.repetitions.len() as f64;
        for rep in &self.repetitions {
            for (node, r) in &rep.node_regret {
                *agg.level_regret.entry(node.level()).or_insert(0.0) += r.total() / n;
            }
        }
        Ok(agg)
    }

    /// Configuration and fitted quantities as `key=value` pairs.
    pub fn metadata(&self, agg: &AggregateResult) -> Vec<(String, String)> {
        let mut kv = self.config.key_values();
        kv.push((
            "rounds".into(),
            agg.rows.last().map_or(0, |r| r.t).to_string(),
        ));
        kv.push(("tail_len".into(), agg.tail_len.to_string()));
        kv.push((
            "tail_slope".into(),
            agg.tail_slope
                .map_or_else(|| "undefined".to_string(), |s| s.to_string()),
        ));
        if let Some(last) = agg.rows.last() {
            kv.push((
                "final_mean_cum_regret".into(),
                last.mean_cum_regret.to_string(),
            ));
            kv.push(("final_ci_halfwidth".into(), last.ci_halfwidth.to_string()));
        }
        for (level, r) in &agg.level_regret {
            kv.push((format!("level_regret.{level}"), r.to_string()));
        }
        kv
    }
}

pub fn run_repetition(
    cfg: &RunConfig,
    schedule: &[u64],
    rep: u32,
    opts: RunOptions,
) -> Result<RepetitionResult> {
    let (env, contexts) = build_environment(cfg, rep)?;
    let policy = build_policy(cfg)?;
    let rng = substream(cfg.seed, u64::from(rep), Purpose::Policy);
    let mut runner = Runner::new(policy, Market::new(Arc::clone(&env)), rng);
    if opts.check_guess_feasibility && cfg.policy == PolicyKind::KnownL {
        runner = runner.check_guess_feasibility(known_l_eps(cfg));
    }

    let mut checkpoint_regret = Vec::with_capacity(schedule.len());
    let mut records = Vec::new();
    let mut decomposition_max_error: f64 = 0.0;
    let mut next = schedule.iter().peekable();
    for x in contexts.stream(cfg.d, cfg.horizon, u64::from(rep))? {
        let record = runner.step(&x)?;
        if next.peek() == Some(&&record.t) {
            next.next();
            checkpoint_regret.push(record.cum_regret);
            decomposition_max_error = decomposition_max_error.max(runner.decomposition_error());
        }
        if opts.keep_records {
            records.push(record);
        }
    }
    if checkpoint_regret.len() != schedule.len() {
        return Err(Error::InvalidConfig(format!(
            "context source ended after {} rounds, expected {}",
            runner.rounds(),
            schedule.last().copied().unwrap_or(0)
        )));
    }

    let (guess_checks, guess_violations) = runner.guess_checks();
    Ok(RepetitionResult {
        repetition: rep,
        rounds: runner.rounds(),
        final_regret: runner.cum_regret(),
        checkpoint_regret,
        decomposition_max_error,
        node_regret: runner.node_regret().to_vec(),
        reduce_completed: runner.policy().reduce_completed().to_vec(),
        tree: runner.policy().tree().clone(),
        oracle_calls: runner.market().oracle_calls(),
        env,
        guess_checks,
        guess_violations,
        records,
    })
}

/// Runs every repetition of `cfg`, in parallel, collected in repetition order.
pub fn run_experiment(cfg: &RunConfig, opts: RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let schedule = checkpoint_schedule(cfg.run_length(), cfg.tail_len(), cfg.checkpoints);
    let repetitions = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, &schedule, rep, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        schedule,
        repetitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Price;

    #[test]
    fn schedule_shapes() {
        assert_eq!(
            checkpoint_schedule(5, 2, CheckpointMode::Auto),
            vec![1, 2, 3, 4, 5]
        );
        let s = checkpoint_schedule(1_000_000, 10_000, CheckpointMode::Auto);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*s.last().unwrap(), 1_000_000);
        assert!(s.contains(&990_001));
        assert!(!s.contains(&990_000) || s.len() < 20_000);
        assert!(s.len() < 10_000 + 400);
        let g = checkpoint_schedule(100, 10, CheckpointMode::Geometric);
        assert_eq!(&g[g.len() - 10..], &(91..=100).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn round_regret_examples() {
        let cases = [(0.3, 0.7, 0.5, 0.0, true), (0.3, 0.7, 0.8, 0.4, false)];
        for (s, b, p, regret, accepted) in cases {
            let v = crate::types::ValuationPair::new(s, b).unwrap();
            let p = Price::new(p).unwrap();
            let inst = best_gft(&v) - gft(p, &v);
            assert!((inst - regret).abs() < 1e-12);
            assert_eq!(v.accepts(p), accepted);
        }
        let v = crate::types::ValuationPair::new(0.7, 0.3).unwrap();
        for p in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(best_gft(&v) - gft(Price::new(p).unwrap(), &v), 0.0);
        }
    }

    #[test]
    fn constant_env_plateaus() {
        let mut cfg = RunConfig::new(
            PolicyKind::KnownL,
            EnvSpec::Constant {
                seller: 0.3,
                buyer: 0.7,
                contexts: None,
            },
            1,
            1000,
            1.0,
        );
        cfg.seed = 3;
        let exp = run_experiment(&cfg, RunOptions::default()).unwrap();
        let path = &exp.repetitions[0].checkpoint_regret;
        assert!(path.windows(2).all(|w| w[0] <= w[1]));
        // once every leaf on the path is marked the regret stops growing
        assert_eq!(path[999], path[899]);
        assert_eq!(exp.repetitions[0].oracle_calls, 1000);
    }

    #[test]
    fn inverted_env_has_zero_regret() {
        for policy in [PolicyKind::KnownL, PolicyKind::UnknownL] {
            let cfg = RunConfig::new(
                policy,
                EnvSpec::Constant {
                    seller: 0.7,
                    buyer: 0.3,
                    contexts: None,
                },
                2,
                500,
                1.0,
            );
            let exp = run_experiment(&cfg, RunOptions::default()).unwrap();
            assert!(exp.repetitions[0]
                .checkpoint_regret
                .iter()
                .all(|&r| r == 0.0));
        }
    }
}
