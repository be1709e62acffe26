//! Hierarchical `2^d`-ary partition of the unit hypercube.
//!
//! A node at level `l` with lattice vector `k` covers the cell
//! `prod_i [k_i 2^-l, (k_i + 1) 2^-l)`, with the upper face closed when it
//! touches 1. Cells of one level therefore partition `[0, 1]^d` exactly and
//! membership reduces to integer arithmetic on `floor(x_i 2^l)`.
//!
//! Nodes are materialised lazily: only nodes that were visited or marked
//! are stored.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::types::{Context, Price};

pub type Lattice = SmallVec<[u32; 4]>;

/// Deepest level supported; lattice coordinates are stored as `u32`.
pub const MAX_LEVEL: u32 = 31;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    level: u32,
    lattice: Lattice,
}

impl NodeId {
    pub fn root(d: usize) -> Self {
        NodeId {
            level: 0,
            lattice: SmallVec::from_elem(0, d),
        }
    }

    pub fn new(level: u32, lattice: impl Into<Lattice>) -> Result<Self> {
        let lattice = lattice.into();
        if lattice.is_empty() {
            return Err(Error::InvalidTreeParams("lattice must be non-empty".into()));
        }
        if level > MAX_LEVEL {
            return Err(Error::InvalidTreeParams(format!(
                "level {level} exceeds {MAX_LEVEL}"
            )));
        }
        if lattice.iter().any(|&k| u64::from(k) >= 1u64 << level) {
            return Err(Error::InvalidTreeParams(format!(
                "lattice {lattice:?} out of range for level {level}"
            )));
        }
        Ok(NodeId { level, lattice })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn lattice(&self) -> &[u32] {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    /// Side length `2^-l` of the cell.
    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Reference (lower) corner `z = k 2^-l`.
    pub fn reference_point(&self) -> Vec<f64> {
        let side = self.side();
        self.lattice.iter().map(|&k| k as f64 * side).collect()
    }

    pub fn region_contains(&self, x: &Context) -> Result<bool> {
        self.check_dim(x)?;
        Ok(x.iter()
            .zip(&self.lattice)
            .all(|(&xi, &k)| cell_index(xi, self.level) == k))
    }

    /// The child whose cell contains `x`.
    pub fn child_containing(&self, x: &Context) -> Result<NodeId> {
        if !self.region_contains(x)? {
            return Err(Error::OutsideRegion(self.clone()));
        }
        let level = self.level + 1;
        if level > MAX_LEVEL {
            return Err(Error::InvalidTreeParams(format!(
                "level {level} exceeds {MAX_LEVEL}"
            )));
        }
        let lattice = x.iter().map(|&xi| cell_index(xi, level)).collect();
        Ok(NodeId { level, lattice })
    }

    pub fn parent(&self) -> Result<NodeId> {
        if self.is_root() {
            return Err(Error::RootHasNoParent);
        }
        Ok(NodeId {
            level: self.level - 1,
            lattice: self.lattice.iter().map(|k| k / 2).collect(),
        })
    }

    /// The node at `level` containing `x`.
    pub fn containing(x: &Context, level: u32) -> NodeId {
        NodeId {
            level,
            lattice: x.iter().map(|&xi| cell_index(xi, level)).collect(),
        }
    }

    fn check_dim(&self, x: &Context) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.level)?;
        for (i, k) in self.lattice.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

/// Index of the half-open dyadic interval of width `2^-level` containing
/// `x`, with `x == 1` assigned to the last interval. Scaling by a power of
/// two is exact, so no tolerance is involved.
fn cell_index(x: f64, level: u32) -> u32 {
    let cells = 1u64 << level;
    let i = (x * cells as f64).floor() as u64;
    i.min(cells - 1) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    d: usize,
    horizon: u64,
    height: u32,
}

impl TreeParams {
    /// Height is the largest `H` with `2^(dH) <= T`.
    pub fn new(d: usize, horizon: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidTreeParams(
                "dimension must be positive".into(),
            ));
        }
        if horizon == 0 {
            return Err(Error::InvalidTreeParams("horizon must be positive".into()));
        }
        let bits = 63 - horizon.leading_zeros(); // floor(log2 T)
        let height = (bits as usize / d) as u32;
        if height > MAX_LEVEL {
            return Err(Error::InvalidTreeParams(format!(
                "height {height} exceeds {MAX_LEVEL}"
            )));
        }
        Ok(TreeParams { d, horizon, height })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct NodeInfo {
    marking_price: Option<Price>,
    visit_rounds: u64,
}

/// One row of a tree dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub level: u32,
    pub lattice: Vec<u32>,
    pub marking_price: Option<f64>,
    pub visit_rounds: u64,
}

/// Marking state and visit counts over the lazily materialised partition.
#[derive(Debug, Clone)]
pub struct Tree {
    params: TreeParams,
    nodes: HashMap<NodeId, NodeInfo>,
    traversals: u64,
}

impl Tree {
    pub fn new(params: TreeParams) -> Self {
        Tree {
            params,
            nodes: HashMap::new(),
            traversals: 0,
        }
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn root(&self) -> NodeId {
        NodeId::root(self.params.d)
    }

    pub fn is_leaf(&self, node: &NodeId) -> bool {
        node.level >= self.params.height
    }

    pub fn marking_price(&self, node: &NodeId) -> Option<Price> {
        self.nodes.get(node).and_then(|n| n.marking_price)
    }

    pub fn is_marked(&self, node: &NodeId) -> bool {
        self.marking_price(node).is_some()
    }

    pub fn visit_rounds(&self, node: &NodeId) -> u64 {
        self.nodes.get(node).map_or(0, |n| n.visit_rounds)
    }

    pub fn traversals(&self) -> u64 {
        self.traversals
    }

    /// Descends from the root through marked nodes until reaching an
    /// unmarked node or a leaf, and records the visit there.
    pub fn traverse(&mut self, x: &Context) -> Result<NodeId> {
        if x.dim() != self.params.d {
            return Err(Error::DimensionMismatch {
                expected: self.params.d,
                got: x.dim(),
            });
        }
        let mut node = self.root();
        while self.is_marked(&node) && !self.is_leaf(&node) {
            node = NodeId::containing(x, node.level + 1);
        }
        self.nodes.entry(node.clone()).or_default().visit_rounds += 1;
        self.traversals += 1;
        Ok(node)
    }

    /// Marks `node` with `price`. `witness` is the context whose trade was
    /// accepted at `price`; it must lie in the node's region.
    pub fn mark(&mut self, node: &NodeId, price: Price, witness: &Context) -> Result<()> {
        if node.dim() != self.params.d {
            return Err(Error::DimensionMismatch {
                expected: self.params.d,
                got: node.dim(),
            });
        }
        if node.level > self.params.height {
            return Err(Error::InvalidTreeParams(format!(
                "node {node} is below the leaf level {}",
                self.params.height
            )));
        }
        if !node.region_contains(witness)? {
            return Err(Error::OutsideRegion(node.clone()));
        }
        if !node.is_root() && !self.is_marked(&node.parent()?) {
            return Err(Error::ParentNotMarked(node.clone()));
        }
        let info = self.nodes.entry(node.clone()).or_default();
        if info.marking_price.is_some() {
            return Err(Error::AlreadyMarked(node.clone()));
        }
        info.marking_price = Some(price);
        Ok(())
    }

    /// Visited or marked nodes, ordered by (level, lattice).
    pub fn dump(&self) -> Vec<NodeDump> {
        let mut ids: Vec<&NodeId> = self.nodes.keys().collect();
        ids.sort();
        ids.into_iter()
            .map(|id| {
                let info = &self.nodes[id];
                NodeDump {
                    level: id.level,
                    lattice: id.lattice.to_vec(),
                    marking_price: info.marking_price.map(Price::value),
                    visit_rounds: info.visit_rounds,
                }
            })
            .collect()
    }

    pub fn marked_nodes(&self) -> impl Iterator<Item = (&NodeId, Price)> {
        self.nodes
            .iter()
            .filter_map(|(id, n)| n.marking_price.map(|p| (id, p)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    fn node(level: u32, k: &[u32]) -> NodeId {
        NodeId::new(level, Lattice::from_slice(k)).unwrap()
    }

    #[test]
    fn region_examples() {
        assert!(node(1, &[1, 0]).region_contains(&ctx(&[0.6, 0.2])).unwrap());
        assert!(!node(1, &[0, 0]).region_contains(&ctx(&[0.5, 0.2])).unwrap());
        assert!(node(1, &[1, 1]).region_contains(&ctx(&[1.0, 1.0])).unwrap());
        assert!(matches!(
            node(1, &[1, 1]).region_contains(&ctx(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn child_examples() {
        assert_eq!(
            NodeId::root(2).child_containing(&ctx(&[0.3, 0.8])).unwrap(),
            node(1, &[0, 1])
        );
        assert_eq!(
            NodeId::root(1).child_containing(&ctx(&[0.5])).unwrap(),
            node(1, &[1])
        );
        assert_eq!(
            node(1, &[1, 1])
                .child_containing(&ctx(&[1.0, 1.0]))
                .unwrap(),
            node(2, &[3, 3])
        );
        assert!(node(1, &[0, 0])
            .child_containing(&ctx(&[0.9, 0.1]))
            .is_err());
    }

    #[test]
    fn parent_examples() {
        assert_eq!(node(2, &[3, 1]).parent().unwrap(), node(1, &[1, 0]));
        assert_eq!(node(1, &[0, 0]).parent().unwrap(), NodeId::root(2));
        assert_eq!(node(1, &[1, 1]).parent().unwrap(), NodeId::root(2));
        assert!(matches!(
            NodeId::root(2).parent(),
            Err(Error::RootHasNoParent)
        ));
    }

    #[test]
    fn lattice_bounds_are_checked() {
        assert!(NodeId::new(1, Lattice::from_slice(&[2])).is_err());
        assert!(NodeId::new(0, Lattice::from_slice(&[0, 0])).is_ok());
    }

    #[test]
    fn height_is_integer_log() {
        assert_eq!(TreeParams::new(2, 1_000_000).unwrap().height(), 9);
        assert_eq!(TreeParams::new(2, 100_000).unwrap().height(), 8);
        assert_eq!(TreeParams::new(2, 10_000).unwrap().height(), 6);
        assert_eq!(TreeParams::new(1, 1).unwrap().height(), 0);
        assert_eq!(TreeParams::new(3, 8).unwrap().height(), 1);
        assert_eq!(TreeParams::new(3, 7).unwrap().height(), 0);
        for d in 1..5usize {
            for t in [1u64, 2, 3, 15, 16, 17, 1000, 65536, 999_999] {
                let h = TreeParams::new(d, t).unwrap().height();
                let dh = d as u32 * h;
                assert!(1u64 << dh <= t);
                assert!((1u128 << (dh + d as u32)) > t as u128);
            }
        }
    }

    #[test]
    fn traverse_examples() {
        let mut tree = Tree::new(TreeParams::new(2, 10_000).unwrap());
        let x = ctx(&[0.3, 0.8]);
        assert_eq!(tree.traverse(&x).unwrap(), tree.root());

        let root = tree.root();
        tree.mark(&root, Price::new(0.5).unwrap(), &x).unwrap();
        assert_eq!(tree.traverse(&x).unwrap(), node(1, &[0, 1]));

        // mark the whole path down to the leaf
        let mut n = node(1, &[0, 1]);
        loop {
            tree.mark(&n, Price::new(0.41).unwrap(), &x).unwrap();
            if tree.is_leaf(&n) {
                break;
            }
            n = n.child_containing(&x).unwrap();
        }
        let leaf = tree.traverse(&x).unwrap();
        assert_eq!(leaf.level(), 6);
        assert_eq!(leaf, n);
        assert!(tree.is_marked(&leaf));
    }

    #[test]
    fn mark_errors() {
        let mut tree = Tree::new(TreeParams::new(2, 10_000).unwrap());
        let x = ctx(&[0.3, 0.8]);
        let p = Price::new(0.5).unwrap();
        let child = node(1, &[0, 1]);
        assert!(matches!(
            tree.mark(&child, p, &x),
            Err(Error::ParentNotMarked(_))
        ));
        let root = tree.root();
        tree.mark(&root, p, &x).unwrap();
        assert!(matches!(
            tree.mark(&root, p, &x),
            Err(Error::AlreadyMarked(_))
        ));
        assert!(matches!(
            tree.mark(&node(1, &[1, 1]), p, &x),
            Err(Error::OutsideRegion(_))
        ));
        tree.mark(&child, p, &x).unwrap();
        assert_eq!(tree.marked_nodes().count(), 2);
    }

    #[test]
    fn partition_exhaustive() {
        // every context lies in exactly one cell per level
        let samples = [0.0, 0.125, 0.25, 0.3, 0.5, 0.74, 0.75, 0.999, 1.0];
        for d in 1..=3usize {
            for level in 0..=3u32 {
                let cells = 1u32 << level;
                let all: Vec<NodeId> = (0..cells.pow(d as u32))
                    .map(|mut idx| {
                        let mut k = Lattice::new();
                        for _ in 0..d {
                            k.push(idx % cells);
                            idx /= cells;
                        }
                        NodeId::new(level, k).unwrap()
                    })
                    .collect();
                let mut coords = vec![0usize; d];
                loop {
                    let x = ctx(&coords.iter().map(|&i| samples[i]).collect::<Vec<_>>());
                    let hits = all
                        .iter()
                        .filter(|n| n.region_contains(&x).unwrap())
                        .count();
                    assert_eq!(hits, 1, "x={x:?} level={level}");
                    let mut i = 0;
                    while i < d {
                        coords[i] += 1;
                        if coords[i] < samples.len() {
                            break;
                        }
                        coords[i] = 0;
                        i += 1;
                    }
                    if i == d {
                        break;
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn nesting_and_partition(xs in proptest::collection::vec(0.0..=1.0f64, 1..4), level in 1u32..12) {
            let x = ctx(&xs);
            let n = NodeId::containing(&x, level);
            prop_assert!(n.region_contains(&x).unwrap());
            prop_assert!(n.parent().unwrap().region_contains(&x).unwrap());
            prop_assert_eq!(n.parent().unwrap().child_containing(&x).unwrap(), n.clone());
            // the cell bounds agree with the lattice encoding
            let z = n.reference_point();
            for (i, &xi) in xs.iter().enumerate() {
                prop_assert!(z[i] <= xi);
                prop_assert!(xi < z[i] + n.side() || (xi == 1.0 && z[i] + n.side() == 1.0));
            }
        }

        #[test]
        fn traversal_bookkeeping(points in proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..200),
                                 marks in proptest::collection::vec(0usize..200, 0..60)) {
            let mut tree = Tree::new(TreeParams::new(2, 4096).unwrap());
            let price = Price::new(0.5).unwrap();
            for (i, &(a, b)) in points.iter().enumerate() {
                let x = ctx(&[a, b]);
                let n = tree.traverse(&x).unwrap();
                prop_assert!(n.level() <= tree.params().height());
                // levels along the path are strictly increasing and all marked above n
                let mut cur = n.clone();
                while !cur.is_root() {
                    cur = cur.parent().unwrap();
                    prop_assert!(tree.is_marked(&cur));
                }
                if marks.contains(&i) && !tree.is_marked(&n) {
                    tree.mark(&n, price, &x).unwrap();
                }
                // marked set is a rooted subtree
                for (id, _) in tree.marked_nodes() {
                    if !id.is_root() {
                        prop_assert!(tree.is_marked(&id.parent().unwrap()));
                    }
                }
            }
            let total: u64 = tree.dump().iter().map(|n| n.visit_rounds).sum();
            prop_assert_eq!(total, points.len() as u64);
            prop_assert_eq!(tree.traversals(), points.len() as u64);
        }
    }
}
