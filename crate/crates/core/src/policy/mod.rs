//! Posting policies driven by the hierarchical partition.
//!
//! Both policies share one driver, [`TreePolicy`]: traverse the tree to the
//! active node (or a marked leaf), let that node's routine propose a price,
//! and feed the single trade bit back to the same routine. A routine only
//! ever sees `(phase, price, feedback)`; valuations never reach it.

mod known;
mod unknown;

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{NodeId, Tree, TreeParams};
use crate::types::{Context, Feedback, Price, PriceGrid};

pub use known::{KnownLConfig, KnownLRoutine, ReduceStage, ReduceState};
pub use unknown::{GeoGuessState, GeoReduceState, ScaleLadder, UnknownLConfig, UnknownLRoutine};

pub type KnownLPolicy = TreePolicy<KnownLRoutine>;
pub type UnknownLPolicy = TreePolicy<UnknownLRoutine>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseTag {
    Reduce,
    Guess,
    Leaf,
}

impl PhaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseTag::Reduce => "reduce",
            PhaseTag::Guess => "guess",
            PhaseTag::Leaf => "leaf",
        }
    }
}

/// A price posted at a node, together with the phase that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Posting {
    pub price: Price,
    pub node: NodeId,
    pub phase: PhaseTag,
}

/// What a routine asks the driver to do after a feedback bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Stay,
    ReduceCompleted,
    /// Mark the node with the price just accepted.
    Mark,
}

/// Per-node state machine of an unmarked node.
pub trait NodeRoutine: Sized {
    type Config;

    fn tree_params(cfg: &Self::Config) -> TreeParams;

    /// State for the root, which has no parent price.
    fn root(cfg: &Self::Config) -> Result<Self>;

    /// State for a node at `level >= 1` whose parent is marked at `parent_price`.
    fn child(cfg: &Self::Config, level: u32, parent_price: Price) -> Result<Self>;

    fn next_price(&mut self, rng: &mut dyn RngCore) -> (Price, PhaseTag);

    fn feedback(&mut self, phase: PhaseTag, price: Price, fb: Feedback) -> Transition;

    /// Grid the latest guess price was drawn from.
    fn guess_grid(&self) -> Option<&PriceGrid>;

    fn stats(&self) -> RoutineStats;
}

/// Phase durations of one node, for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutineStats {
    pub reduce_rounds: u64,
    pub reduce_rejections: u32,
    pub reduce_completed: bool,
    pub guess_rounds: u64,
}

/// The surface a simulation harness needs from a policy.
pub trait PricingPolicy {
    fn post_price(&mut self, x: &Context, rng: &mut dyn RngCore) -> Result<Posting>;

    fn observe(&mut self, node: &NodeId, phase: PhaseTag, price: Price, fb: Feedback)
        -> Result<()>;

    fn tree(&self) -> &Tree;

    /// Nodes whose reduce phase finished, in completion order.
    fn reduce_completed(&self) -> &[NodeId];

    fn guess_grid(&self, node: &NodeId) -> Option<&PriceGrid>;

    fn node_stats(&self, node: &NodeId) -> Option<RoutineStats>;
}

#[derive(Debug, Clone)]
struct Pending {
    posting: Posting,
    context: Context,
}

#[derive(Debug, Clone)]
pub struct TreePolicy<R: NodeRoutine> {
    cfg: R::Config,
    tree: Tree,
    routines: HashMap<NodeId, R>,
    pending: Option<Pending>,
    reduce_completed: Vec<NodeId>,
}

impl<R: NodeRoutine> TreePolicy<R> {
    pub fn new(cfg: R::Config) -> Self {
        TreePolicy {
            tree: Tree::new(R::tree_params(&cfg)),
            cfg,
            routines: HashMap::new(),
            pending: None,
            reduce_completed: Vec::new(),
        }
    }

    pub fn config(&self) -> &R::Config {
        &self.cfg
    }

    pub fn routine(&self, node: &NodeId) -> Option<&R> {
        self.routines.get(node)
    }

    fn routine_for(&mut self, node: &NodeId) -> Result<&mut R> {
        if !self.routines.contains_key(node) {
            let state = if node.is_root() {
                R::root(&self.cfg)?
            } else {
                let parent = node.parent()?;
                let price = self
                    .tree
                    .marking_price(&parent)
                    .ok_or_else(|| Error::ParentNotMarked(node.clone()))?;
                R::child(&self.cfg, node.level(), price)?
            };
            self.routines.insert(node.clone(), state);
        }
        Ok(self.routines.get_mut(node).expect("inserted above"))
    }
}

impl<R: NodeRoutine> PricingPolicy for TreePolicy<R> {
    fn post_price(&mut self, x: &Context, rng: &mut dyn RngCore) -> Result<Posting> {
        let node = self.tree.traverse(x)?;
        let posting = match self.tree.marking_price(&node) {
            // traversal only stops on a marked node at the leaf level
            Some(price) => Posting {
                price,
                node,
                phase: PhaseTag::Leaf,
            },
            None => {
                let (price, phase) = self.routine_for(&node)?.next_price(rng);
                Posting { price, node, phase }
            }
        };
        self.pending = Some(Pending {
            posting: posting.clone(),
            context: x.clone(),
        });
        Ok(posting)
    }

    fn observe(
        &mut self,
        node: &NodeId,
        phase: PhaseTag,
        price: Price,
        fb: Feedback,
    ) -> Result<()> {
        let pending = match self.pending.take() {
            Some(p)
                if p.posting.node == *node
                    && p.posting.phase == phase
                    && p.posting.price == price =>
            {
                p
            }
            other => {
                self.pending = other;
                return Err(Error::UnexpectedFeedback);
            }
        };
        if phase == PhaseTag::Leaf {
            return Ok(());
        }
        let routine = self
            .routines
            .get_mut(node)
            .ok_or(Error::UnexpectedFeedback)?;
        match routine.feedback(phase, price, fb) {
            Transition::Stay => {}
            Transition::ReduceCompleted => self.reduce_completed.push(node.clone()),
            Transition::Mark => self.tree.mark(node, price, &pending.context)?,
        }
        Ok(())
    }

    fn tree(&self) -> &Tree {
        &self.tree
    }

    fn reduce_completed(&self) -> &[NodeId] {
        &self.reduce_completed
    }

    fn guess_grid(&self, node: &NodeId) -> Option<&PriceGrid> {
        self.routines.get(node).and_then(R::guess_grid)
    }

    fn node_stats(&self, node: &NodeId) -> Option<RoutineStats> {
        self.routines.get(node).map(R::stats)
    }
}
