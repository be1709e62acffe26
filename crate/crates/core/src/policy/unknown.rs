//! Multi-scale routine that does not need the Lipschitz constant.
//!
//! The reduce phase is repeated over a ladder of trial constants
//! `L0 2^j`, `j = 0..=j_bar`; the guess phase draws from the grid of the
//! largest scale whose size does not exceed the routine's internal clock.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{NodeRoutine, PhaseTag, RoutineStats, Transition};
use crate::error::{Error, Result};
use crate::tree::TreeParams;
use crate::types::{capped_grid, Feedback, Price, PriceGrid};

pub const DEFAULT_BASE_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnknownLConfig {
    base_scale: f64,
    eps: f64,
    params: TreeParams,
}

impl UnknownLConfig {
    /// Base scale 1/2 and guess-grid step `T^(-1/d)`.
    pub fn new(params: TreeParams) -> Self {
        UnknownLConfig {
            base_scale: DEFAULT_BASE_SCALE,
            eps: (params.horizon() as f64).powf(-1.0 / params.dim() as f64),
            params,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps {eps} must be positive")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn with_base_scale(mut self, base_scale: f64) -> Result<Self> {
        if !(base_scale > 0.0 && base_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "base scale {base_scale} must be positive"
            )));
        }
        self.base_scale = base_scale;
        Ok(self)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn base_scale(&self) -> f64 {
        self.base_scale
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }
}

/// Trial Lipschitz constants `L0 2^j` for `j = 0..=j_bar`, with
/// `j_bar = ceil(level + log2(2 L0))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    level: u32,
    base: f64,
    j_bar: u32,
}

impl ScaleLadder {
    pub fn new(level: u32, base: f64) -> Self {
        let j_bar = (level as f64 + (2.0 * base).log2()).ceil().max(0.0) as u32;
        ScaleLadder { level, base, j_bar }
    }

    pub fn j_bar(&self) -> u32 {
        self.j_bar
    }

    pub fn scale(&self, j: u32) -> f64 {
        self.base * (j as f64).exp2()
    }

    pub fn scales(&self) -> Vec<f64> {
        (0..=self.j_bar).map(|j| self.scale(j)).collect()
    }

    /// Half-width `L0 2^j 2^-(level-1)` of the price window at scale `j`.
    pub fn radius(&self, j: u32) -> f64 {
        self.scale(j) * (1.0 - self.level as f64).exp2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeoStage {
    PostingLow,
    PostingHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoReduceState {
    pub j: u32,
    pub stage: GeoStage,
    pub done: bool,
    pub rejections: u32,
    pub rounds: u64,
}

impl GeoReduceState {
    pub fn new() -> Self {
        GeoReduceState {
            j: 0,
            stage: GeoStage::PostingLow,
            done: false,
            rejections: 0,
            rounds: 0,
        }
    }

    /// Price to post at the current scale, or `None` once every scale is done.
    pub fn price(&self, ladder: &ScaleLadder, parent_price: Price) -> Option<Price> {
        if self.done {
            return None;
        }
        let r = ladder.radius(self.j);
        let c = parent_price.value();
        Some(match self.stage {
            GeoStage::PostingLow => Price::clamped(c - r),
            GeoStage::PostingHigh => Price::clamped(c + r),
        })
    }

    pub fn record(&mut self, ladder: &ScaleLadder, fb: Feedback) {
        self.rounds += 1;
        if fb.accepted || self.done {
            return;
        }
        self.rejections += 1;
        match self.stage {
            GeoStage::PostingLow => self.stage = GeoStage::PostingHigh,
            GeoStage::PostingHigh => {
                if self.j >= ladder.j_bar() {
                    self.done = true;
                } else {
                    self.j += 1;
                    self.stage = GeoStage::PostingLow;
                }
            }
        }
    }
}

impl Default for GeoReduceState {
    fn default() -> Self {
        Self::new()
    }
}

/// One grid per scale, sampled according to the internal clock `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoGuessState {
    pub tau: u64,
    grids: Vec<PriceGrid>,
    last: usize,
}

impl GeoGuessState {
    pub fn new(grids: Vec<PriceGrid>) -> Self {
        assert!(!grids.is_empty(), "at least one scale");
        GeoGuessState {
            tau: 0,
            grids,
            last: 0,
        }
    }

    pub fn grids(&self) -> &[PriceGrid] {
        &self.grids
    }

    /// Largest scale whose grid has at most `tau` points; 0 when none does.
    pub fn scale_index(&self, tau: u64) -> usize {
        self.grids
            .iter()
            .rposition(|g| g.len() as u64 <= tau)
            .unwrap_or(0)
    }

    pub fn draw(&mut self, rng: &mut dyn RngCore) -> Price {
        let j = self.scale_index(self.tau);
        self.last = j;
        self.tau += 1;
        let grid = &self.grids[j];
        grid.points()[rng.random_range(0..grid.len())]
    }

    pub fn last_grid(&self) -> &PriceGrid {
        &self.grids[self.last]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnknownLRoutine {
    parent_price: Price,
    eps: f64,
    ladder: ScaleLadder,
    /// `None` at the root.
    reduce: Option<GeoReduceState>,
    guess: Option<GeoGuessState>,
    guess_rounds: u64,
}

impl UnknownLRoutine {
    pub fn ladder(&self) -> &ScaleLadder {
        &self.ladder
    }

    pub fn reduce_state(&self) -> Option<&GeoReduceState> {
        self.reduce.as_ref()
    }

    pub fn guess_state(&self) -> Option<&GeoGuessState> {
        self.guess.as_ref()
    }

    fn start_guess(&mut self) {
        let c = self.parent_price.value();
        let grids = (0..=self.ladder.j_bar())
            .map(|j| {
                let r = self.ladder.radius(j);
                capped_grid(c - r, c + r, self.eps).expect("radius and eps are positive")
            })
            .collect();
        self.guess = Some(GeoGuessState::new(grids));
    }
}

impl NodeRoutine for UnknownLRoutine {
    type Config = UnknownLConfig;

    fn tree_params(cfg: &UnknownLConfig) -> TreeParams {
        cfg.params
    }

    fn root(cfg: &UnknownLConfig) -> Result<Self> {
        let grid = capped_grid(0.0, 1.0, cfg.eps)?;
        Ok(UnknownLRoutine {
            parent_price: Price::clamped(0.5),
            eps: cfg.eps,
            ladder: ScaleLadder::new(0, cfg.base_scale),
            reduce: None,
            guess: Some(GeoGuessState::new(vec![grid])),
            guess_rounds: 0,
        })
    }

    fn child(cfg: &UnknownLConfig, level: u32, parent_price: Price) -> Result<Self> {
        Ok(UnknownLRoutine {
            parent_price,
            eps: cfg.eps,
            ladder: ScaleLadder::new(level, cfg.base_scale),
            reduce: Some(GeoReduceState::new()),
            guess: None,
            guess_rounds: 0,
        })
    }

    fn next_price(&mut self, rng: &mut dyn RngCore) -> (Price, PhaseTag) {
        if let Some(p) = self
            .reduce
            .as_ref()
            .and_then(|r| r.price(&self.ladder, self.parent_price))
        {
            return (p, PhaseTag::Reduce);
        }
        if self.guess.is_none() {
            self.start_guess();
        }
        let guess = self.guess.as_mut().expect("started above");
        (guess.draw(rng), PhaseTag::Guess)
    }

    fn feedback(&mut self, phase: PhaseTag, _price: Price, fb: Feedback) -> Transition {
        match phase {
            PhaseTag::Reduce => {
                let Some(reduce) = self.reduce.as_mut() else {
                    return Transition::Stay;
                };
                let was_done = reduce.done;
                reduce.record(&self.ladder, fb);
                if reduce.done && !was_done {
                    self.start_guess();
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
        self.guess.as_ref().map(GeoGuessState::last_grid)
    }

    fn stats(&self) -> RoutineStats {
        RoutineStats {
            reduce_rounds: self.reduce.map_or(0, |r| r.rounds),
            reduce_rejections: self.reduce.map_or(0, |r| r.rejections),
            reduce_completed: self.reduce.is_some_and(|r| r.done),
            guess_rounds: self.guess_rounds,
        }
    }
}
