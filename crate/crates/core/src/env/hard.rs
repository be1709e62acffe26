//! Hard instances for the regret lower bound.
//!
//! Contexts live on the `delta`-grid of the cube. Each grid point is
//! assigned, by a uniformly random bit, one of two valuation pairs whose
//! trading intervals `[1/2 - gamma, 1/2 - eps]` and `[1/2 + eps, 1/2 + gamma]`
//! are disjoint, so the past says nothing about which price wins next.

use rand::{Rng, RngCore};

use super::contexts::{ContextGenerator, GridOrdering};
use super::mcshane::LipschitzExtension;
use super::{check_dim, Environment};
use crate::error::{Error, Result};
use crate::types::{Context, ValuationPair};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceParams {
    pub lipschitz: f64,
    pub horizon: u64,
    pub d: usize,
}

/// Largest `m` with `m^d <= t`.
fn integer_root(t: u64, d: usize) -> u64 {
    let mut m = (t as f64).powf(1.0 / d as f64).round() as u64;
    let pow = |m: u64| (m as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    while m > 0 && pow(m) > t as u128 {
        m -= 1;
    }
    while pow(m + 1) <= t as u128 {
        m += 1;
    }
    m
}

impl HardInstanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz constant {} must be positive",
                self.lipschitz
            )));
        }
        if self.horizon as f64 <= (4.0 * self.lipschitz).powi(self.d as i32) {
            return Err(Error::InvalidConfig(format!(
                "hard instance needs T > (4L)^d, got T={} L={} d={}",
                self.horizon, self.lipschitz, self.d
            )));
        }
        if 0.5 + self.gamma() > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "grid pitch {} too coarse: valuations would leave [0, 1]",
                self.delta()
            )));
        }
        Ok(())
    }

    /// Points per axis minus one, `floor(T^(1/d))`.
    pub fn grid_divisions(&self) -> u64 {
        integer_root(self.horizon, self.d)
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.grid_divisions() as f64
    }

    pub fn gamma(&self) -> f64 {
        2.0 * self.lipschitz * self.delta()
    }

    pub fn eps_lb(&self) -> f64 {
        self.gamma() / 2.0
    }

    /// Valuation pair selected by bit 0 or 1.
    pub fn pair(&self, bit: bool) -> ValuationPair {
        let (g, e) = (self.gamma(), self.eps_lb());
        let (s, b) = if bit {
            (0.5 + e, 0.5 + g)
        } else {
            (0.5 - g, 0.5 - e)
        };
        ValuationPair::new(s, b).expect("validated parameters keep pairs in [0, 1]")
    }

    /// Lipschitz constant of the grid assignment: neighbouring values differ
    /// by up to `gamma + eps = 3 L delta` at distance `delta`.
    pub fn effective_lipschitz(&self) -> f64 {
        3.0 * self.lipschitz
    }

    pub fn grid_points(&self) -> Vec<Context> {
        let m = self.grid_divisions();
        let n = (m + 1).pow(self.d as u32);
        (0..n)
            .map(|mut idx| {
                let mut coords = vec![0.0; self.d];
                // last coordinate varies fastest
                for c in coords.iter_mut().rev() {
                    *c = (idx % (m + 1)) as f64 / m as f64;
                    idx /= m + 1;
                }
                Context::new(coords).expect("grid coordinates lie in [0, 1]")
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct HardInstance {
    params: HardInstanceParams,
    grid: Vec<Context>,
    bits: Vec<bool>,
    seller: LipschitzExtension,
    buyer: LipschitzExtension,
}

impl HardInstance {
    /// Samples the assignment bits uniformly.
    pub fn sample(params: HardInstanceParams, rng: &mut dyn RngCore) -> Result<Self> {
        params.validate()?;
        let n = params.grid_points().len();
        let bits = (0..n).map(|_| rng.random::<bool>()).collect();
        Self::with_bits(params, bits)
    }

    pub fn with_bits(params: HardInstanceParams, bits: Vec<bool>) -> Result<Self> {
        params.validate()?;
        let grid = params.grid_points();
        if bits.len() != grid.len() {
            return Err(Error::InvalidConfig(format!(
                "{} bits for {} grid points",
                bits.len(),
                grid.len()
            )));
        }
        let coords: Vec<Vec<f64>> = grid.iter().map(|c| c.coords().to_vec()).collect();
        let pairs: Vec<ValuationPair> = bits.iter().map(|&h| params.pair(h)).collect();
        let s: Vec<f64> = pairs.iter().map(ValuationPair::seller).collect();
        let b: Vec<f64> = pairs.iter().map(ValuationPair::buyer).collect();
        // two-valued data with spread 3 L delta on a delta-separated grid is
        // 3L-Lipschitz, so the pairwise check can be skipped
        let l = params.effective_lipschitz();
        Ok(HardInstance {
            seller: LipschitzExtension::build(&coords, &s, l)?,
            buyer: LipschitzExtension::build(&coords, &b, l)?,
            params,
            grid,
            bits,
        })
    }

    pub fn params(&self) -> &HardInstanceParams {
        &self.params
    }

    pub fn grid(&self) -> &[Context] {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Replays the grid once, truncated to the horizon.
    pub fn context_generator(&self, ordering: GridOrdering) -> ContextGenerator {
        ContextGenerator::grid(self.grid.clone(), ordering)
    }

    /// Horizon-many grid points are replayed; `min(T, |G|)` rounds.
    pub fn run_length(&self) -> u64 {
        self.params.horizon.min(self.grid.len() as u64)
    }
}

impl Environment for HardInstance {
    fn dim(&self) -> usize {
        self.params.d
    }

    fn lipschitz(&self) -> f64 {
        self.params.effective_lipschitz()
    }

    fn valuations(&self, x: &Context) -> Result<ValuationPair> {
        check_dim(self.params.d, x)?;
        ValuationPair::new(
            self.seller.eval(x).clamp(0.0, 1.0),
            self.buyer.eval(x).clamp(0.0, 1.0),
        )
    }
}
