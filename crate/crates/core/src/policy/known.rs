//! Reduce/guess routine for a known Lipschitz constant.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{NodeRoutine, PhaseTag, RoutineStats, Transition};
use crate::error::{Error, Result};
use crate::tree::TreeParams;
use crate::types::{capped_grid, Feedback, Price, PriceGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownLConfig {
    lipschitz: f64,
    eps: f64,
    params: TreeParams,
}

impl KnownLConfig {
    /// Guess-grid step defaults to `L T^(-1/d)`.
    pub fn new(lipschitz: f64, params: TreeParams) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz constant {lipschitz} must be positive"
            )));
        }
        let eps = lipschitz * (params.horizon() as f64).powf(-1.0 / params.dim() as f64);
        Ok(KnownLConfig {
            lipschitz,
            eps,
            params,
        })
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps {eps} must be positive")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReduceStage {
    PostingLow,
    PostingHigh,
    Done,
}

/// Posts `p_low` until rejected, then `p_high` until rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReduceState {
    pub p_low: Price,
    pub p_high: Price,
    pub stage: ReduceStage,
    pub rejections: u32,
    pub rounds: u64,
}

impl ReduceState {
    /// Prices at distance `radius` on either side of the parent price.
    pub fn new(parent_price: Price, radius: f64) -> Self {
        let c = parent_price.value();
        ReduceState {
            p_low: Price::clamped(c - radius),
            p_high: Price::clamped(c + radius),
            stage: ReduceStage::PostingLow,
            rejections: 0,
            rounds: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.stage == ReduceStage::Done
    }

    pub fn current_price(&self) -> Option<Price> {
        match self.stage {
            ReduceStage::PostingLow => Some(self.p_low),
            ReduceStage::PostingHigh => Some(self.p_high),
            ReduceStage::Done => None,
        }
    }

    /// Advances on a rejection; acceptances repeat the same price.
    pub fn record(&mut self, fb: Feedback) {
        self.rounds += 1;
        if fb.accepted {
            return;
        }
        self.stage = match self.stage {
            ReduceStage::PostingLow => ReduceStage::PostingHigh,
            ReduceStage::PostingHigh | ReduceStage::Done => ReduceStage::Done,
        };
        self.rejections += 1;
    }
}

/// Node-level state of the known-`L` policy.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownLRoutine {
    center: f64,
    radius: f64,
    eps: f64,
    /// `None` at the root, which goes straight to guessing.
    reduce: Option<ReduceState>,
    grid: Option<PriceGrid>,
    guess_rounds: u64,
}

impl KnownLRoutine {
    pub fn reduce_state(&self) -> Option<&ReduceState> {
        self.reduce.as_ref()
    }

    fn build_grid(&mut self) -> &PriceGrid {
        let (a, b) = (self.center - self.radius, self.center + self.radius);
        let eps = self.eps;
        self.grid
            .get_or_insert_with(|| capped_grid(a, b, eps).expect("radius and eps are positive"))
    }
}

impl NodeRoutine for KnownLRoutine {
    type Config = KnownLConfig;

    fn tree_params(cfg: &KnownLConfig) -> TreeParams {
        cfg.params
    }

    fn root(cfg: &KnownLConfig) -> Result<Self> {
        // virtual parent at 1/2 with radius 1/2: the grid [0, 1]_eps
        let mut r = KnownLRoutine {
            center: 0.5,
            radius: 0.5,
            eps: cfg.eps,
            reduce: None,
            grid: None,
            guess_rounds: 0,
        };
        r.build_grid();
        Ok(r)
    }

    fn child(cfg: &KnownLConfig, level: u32, parent_price: Price) -> Result<Self> {
        let radius = cfg.lipschitz * (1.0 - level as f64).exp2();
        Ok(KnownLRoutine {
            center: parent_price.value(),
            radius,
            eps: cfg.eps,
            reduce: Some(ReduceState::new(parent_price, radius)),
            grid: None,
            guess_rounds: 0,
        })
    }

    fn next_price(&mut self, rng: &mut dyn RngCore) -> (Price, PhaseTag) {
        if let Some(p) = self.reduce.as_ref().and_then(ReduceState::current_price) {
            return (p, PhaseTag::Reduce);
        }
        let grid = self.build_grid();
        let i = rng.random_range(0..grid.len());
        (grid.points()[i], PhaseTag::Guess)
    }

    fn feedback(&mut self, phase: PhaseTag, _price: Price, fb: Feedback) -> Transition {
        match phase {
            PhaseTag::Reduce => {
                let Some(reduce) = self.reduce.as_mut() else {
                    return Transition::Stay;
                };
                reduce.record(fb);
                if reduce.is_done() {
                    self.build_grid();
                    Transition::ReduceCompleted
                } else {
                    Transition::Stay
                }
            }
            PhaseTag::Guess => {
                self.guess_rounds += 1;
                if fb.accepted {
                    Transition::Mark
                } else {
                    Transition::Stay
                }
            }
            PhaseTag::Leaf => Transition::Stay,
        }
    }

    fn guess_grid(&self) -> Option<&PriceGrid> {
        self.grid.as_ref()
    }

    fn stats(&self) -> RoutineStats {
        RoutineStats {
            reduce_rounds: self.reduce.map_or(0, |r| r.rounds),
            reduce_rejections: self.reduce.map_or(0, |r| r.rejections),
            reduce_completed: self.reduce.is_some_and(|r| r.is_done()),
            guess_rounds: self.guess_rounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{KnownLPolicy, PricingPolicy, TreePolicy};
    use crate::tree::NodeId;
    use crate::types::Context;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn price(v: f64) -> Price {
        Price::new(v).unwrap()
    }

    fn policy(d: usize, t: u64) -> KnownLPolicy {
        let params = TreeParams::new(d, t).unwrap();
        TreePolicy::new(KnownLConfig::new(1.0, params).unwrap())
    }

    const ACCEPT: Feedback = Feedback { accepted: true };
    const REJECT: Feedback = Feedback { accepted: false };

    #[test]
    fn default_eps() {
        let cfg = KnownLConfig::new(2.0, TreeParams::new(2, 10_000).unwrap()).unwrap();
        assert!((cfg.eps() - 0.02).abs() < 1e-15);
        assert!(KnownLConfig::new(0.0, TreeParams::new(2, 10).unwrap()).is_err());
        assert!(cfg.with_eps(-1.0).is_err());
    }

    #[test]
    fn fresh_policy_guesses_at_root() {
        let mut pol = policy(2, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Context::new(vec![0.2, 0.9]).unwrap();
        let post = pol.post_price(&x, &mut rng).unwrap();
        assert_eq!(post.phase, PhaseTag::Guess);
        assert!(post.node.is_root());
        let grid = pol.guess_grid(&post.node).unwrap();
        assert_eq!(grid.len(), 101);
        assert!(grid.points().contains(&post.price));
    }

    #[test]
    fn reduce_low_price_arithmetic() {
        let cfg = KnownLConfig::new(1.0, TreeParams::new(2, 10_000).unwrap()).unwrap();
        let mut r = KnownLRoutine::child(&cfg, 2, price(0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(r.next_price(&mut rng), (price(0.0), PhaseTag::Reduce));
        assert_eq!(r.reduce_state().unwrap().p_high, price(1.0));
    }

    #[test]
    fn reduce_transitions() {
        let cfg = KnownLConfig::new(0.1, TreeParams::new(2, 10_000).unwrap()).unwrap();
        let mut r = KnownLRoutine::child(&cfg, 1, price(0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, tag) = r.next_price(&mut rng);
        assert_eq!(tag, PhaseTag::Reduce);
        assert!((p.value() - 0.4).abs() < 1e-12);

        // accepted: same price again
        assert_eq!(r.feedback(tag, p, ACCEPT), Transition::Stay);
        assert_eq!(r.next_price(&mut rng), (p, PhaseTag::Reduce));
        assert_eq!(r.reduce_state().unwrap().stage, ReduceStage::PostingLow);

        assert_eq!(r.feedback(tag, p, REJECT), Transition::Stay);
        assert_eq!(r.reduce_state().unwrap().stage, ReduceStage::PostingHigh);
        let (p, _) = r.next_price(&mut rng);
        assert!((p.value() - 0.6).abs() < 1e-12);
        assert_eq!(r.feedback(tag, p, REJECT), Transition::ReduceCompleted);
        assert_eq!(r.stats().reduce_rejections, 2);
        assert!(r.stats().reduce_completed);

        let (p, tag) = r.next_price(&mut rng);
        assert_eq!(tag, PhaseTag::Guess);
        assert!(p.value() >= 0.4 - 1e-12 && p.value() <= 0.6 + 1e-12);
        assert_eq!(r.feedback(tag, p, REJECT), Transition::Stay);
        assert_eq!(r.feedback(tag, p, ACCEPT), Transition::Mark);
    }

    #[test]
    fn degenerate_reduce_still_needs_two_rejections() {
        // radius 4 clamps both prices to the unit interval ends from any centre
        let cfg = KnownLConfig::new(2.0, TreeParams::new(1, 1 << 10).unwrap()).unwrap();
        let mut r = KnownLRoutine::child(&cfg, 1, price(1.0)).unwrap();
        let st = r.reduce_state().unwrap();
        assert_eq!((st.p_low, st.p_high), (price(0.0), price(1.0)));
        let mut r2 = KnownLRoutine::child(&cfg, 2, price(1.0)).unwrap();
        let st = r2.reduce_state().unwrap();
        assert_eq!(st.p_high, price(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for r in [&mut r, &mut r2] {
            let (p, tag) = r.next_price(&mut rng);
            assert_eq!(r.feedback(tag, p, REJECT), Transition::Stay);
            let (p, tag) = r.next_price(&mut rng);
            assert_eq!(tag, PhaseTag::Reduce);
            assert_eq!(r.feedback(tag, p, REJECT), Transition::ReduceCompleted);
        }
    }

    #[test]
    fn guess_acceptance_marks_node_and_leaf_replays() {
        let mut pol = policy(1, 4);
        assert_eq!(pol.tree().params().height(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Context::new(vec![0.9]).unwrap();

        let post = pol.post_price(&x, &mut rng).unwrap();
        pol.observe(&post.node, post.phase, post.price, ACCEPT)
            .unwrap();
        assert_eq!(pol.tree().marking_price(&post.node), Some(post.price));

        // level 1: reduce needs two rejections, then guess
        let mut last = None;
        for fb in [REJECT, REJECT, ACCEPT] {
            let post = pol.post_price(&x, &mut rng).unwrap();
            assert_eq!(post.node.level(), 1);
            pol.observe(&post.node, post.phase, post.price, fb).unwrap();
            last = Some(post);
        }
        let last = last.unwrap();
        assert_eq!(last.phase, PhaseTag::Guess);
        assert!(pol.tree().is_marked(&last.node));
        assert_eq!(pol.reduce_completed(), std::slice::from_ref(&last.node));

        for fb in [REJECT, REJECT, ACCEPT] {
            let post = pol.post_price(&x, &mut rng).unwrap();
            assert_eq!(post.node.level(), 2);
            pol.observe(&post.node, post.phase, post.price, fb).unwrap();
        }
        let leaf = NodeId::containing(&x, 2);
        let marked = pol.tree().marking_price(&leaf).unwrap();
        for _ in 0..3 {
            let post = pol.post_price(&x, &mut rng).unwrap();
            assert_eq!(post.phase, PhaseTag::Leaf);
            assert_eq!(post.price, marked);
            pol.observe(&post.node, post.phase, post.price, REJECT)
                .unwrap();
        }
    }

    #[test]
    fn out_of_order_feedback_is_rejected() {
        let mut pol = policy(2, 100);
        let root = NodeId::root(2);
        assert!(matches!(
            pol.observe(&root, PhaseTag::Guess, price(0.5), ACCEPT),
            Err(Error::UnexpectedFeedback)
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Context::new(vec![0.1, 0.1]).unwrap();
        let post = pol.post_price(&x, &mut rng).unwrap();
        assert!(pol
            .observe(&post.node, PhaseTag::Reduce, post.price, ACCEPT)
            .is_err());
        pol.observe(&post.node, post.phase, post.price, REJECT)
            .unwrap();
        assert!(pol
            .observe(&post.node, post.phase, post.price, REJECT)
            .is_err());
    }
}
