//! Domain vocabulary shared by every module: contexts, prices, valuations,
//! the one-bit trade signal and the gain-from-trade functional.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the unit hypercube `[0, 1]^d` observed before each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidContext("dimension must be positive".into()));
        }
        if let Some((i, c)) = coords
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::InvalidContext(format!(
                "coordinate {i} = {c} is outside [0, 1]"
            )));
        }
        Ok(Context(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Sup-norm distance, the metric valuations are Lipschitz under.
    pub fn sup_distance(&self, other: &Context) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

impl Deref for Context {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Context {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Context::new(coords)
    }
}

impl From<Context> for Vec<f64> {
    fn from(c: Context) -> Self {
        c.0
    }
}

/// A posted price in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Price(f64);

impl Price {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Price(value))
        } else {
            Err(Error::InvalidPrice(value))
        }
    }

    /// Projection onto `[0, 1]`.
    pub fn clamped(value: f64) -> Self {
        Price(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl TryFrom<f64> for Price {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Price::new(v)
    }
}

impl From<Price> for f64 {
    fn from(p: Price) -> f64 {
        p.0
    }
}

/// Hidden seller and buyer valuations for one round. No ordering between
/// `s` and `b` is required; when `b < s` no price trades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuationPair {
    s: f64,
    b: f64,
}

impl ValuationPair {
    pub fn new(s: f64, b: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&b) {
            Ok(ValuationPair { s, b })
        } else {
            Err(Error::InvalidValuation { s, b })
        }
    }

    pub fn seller(&self) -> f64 {
        self.s
    }

    pub fn buyer(&self) -> f64 {
        self.b
    }

    /// The trade indicator `s <= p <= b`, compared exactly.
    pub fn accepts(&self, p: Price) -> bool {
        self.s <= p.0 && p.0 <= self.b
    }
}

/// The single bit a learner observes after posting a price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Feedback {
    pub accepted: bool,
}

impl Feedback {
    pub fn from_valuations(p: Price, v: &ValuationPair) -> Self {
        Feedback {
            accepted: v.accepts(p),
        }
    }
}

/// Gain from trade realised by posting `p`.
pub fn gft(p: Price, v: &ValuationPair) -> f64 {
    if v.accepts(p) {
        v.b - v.s
    } else {
        0.0
    }
}

/// The per-round benchmark `[b - s]^+`.
pub fn best_gft(v: &ValuationPair) -> f64 {
    (v.b - v.s).max(0.0)
}

/// A uniform price grid over `[a, b]` with step `eps`, projected onto `[0, 1]`.
/// Points are sorted and distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceGrid {
    points: Vec<Price>,
    a: f64,
    b: f64,
    eps: f64,
}

impl PriceGrid {
    pub fn points(&self) -> &[Price] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn step(&self) -> f64 {
        self.eps
    }

    /// Whether some grid price trades under `v`.
    pub fn has_accepting_price(&self, v: &ValuationPair) -> bool {
        // points are sorted: find the first point >= s and test it against b
        let i = self.points.partition_point(|p| p.0 < v.s);
        self.points.get(i).is_some_and(|p| p.0 <= v.b)
    }
}

/// Builds `{a, a + eps, ..., a + k eps, b}` with `k = floor((b - a) / eps)`,
/// projected onto `[0, 1]` and deduplicated.
pub fn capped_grid(a: f64, b: f64, eps: f64) -> Result<PriceGrid> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite bounds [{a}, {b}]")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidGrid(format!("step {eps} must be positive")));
    }
    if a > b {
        return Err(Error::InvalidGrid(format!(
            "lower bound {a} exceeds upper {b}"
        )));
    }
    let k = ((b - a) / eps).floor() as u64;
    let mut raw: Vec<f64> = Vec::with_capacity(k as usize + 2);
    for i in 0..=k {
        // a + i * eps rather than repeated addition keeps rounding error flat
        let v = a + i as f64 * eps;
        if v <= b {
            raw.push(v);
        }
    }
    raw.push(b);
    let mut points: Vec<Price> = raw.into_iter().map(Price::clamped).collect();
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    points.dedup_by(|x, y| x.0 == y.0);
    Ok(PriceGrid { points, a, b, eps })
}
