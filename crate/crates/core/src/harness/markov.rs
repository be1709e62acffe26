use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Which transition is the rare one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainVariant {
    /// Move up with probability `1 / (2^k N)`, otherwise absorb.
    #[default]
    Stated,
    /// Absorb with probability `1 / (2^k N)`, otherwise move up. Its mean
    /// hitting time tends to `N (e - 1) / (e - 2)`.
    Swapped,
}

impl ChainVariant {
    fn advance(self, s: u64, n: u64) -> f64 {
        let q = block_probability(s, n);
        match self {
            ChainVariant::Stated => q,
            ChainVariant::Swapped => 1.0 - q,
        }
    }
}

/// Monte Carlo summary of the hitting time of state 0 from state `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkovReport {
    pub variant: ChainVariant,
    pub n: u64,
    pub trials: u64,
    pub mean: f64,
    pub stderr: f64,
    /// `4N`.
    pub bound: f64,
}

impl MarkovReport {
    /// Whether the mean stays within `bound + 3 stderr`.
    pub fn passes(&self) -> bool {
        self.mean <= self.bound + 3.0 * self.stderr
    }
}

/// `1 / (2^k N)` for `s` in `[2^k N, 2^{k+1} N)`.
fn block_probability(s: u64, n: u64) -> f64 {
    let mut block = n;
    while s >= 2 * block {
        block *= 2;
    }
    1.0 / block as f64
}

/// Steps from `N` until the chain is absorbed at 0, averaged over `trials`.
pub fn validate_markov(n: u64, trials: u64, seed: u64) -> Result<MarkovReport> {
    validate_markov_variant(n, trials, seed, ChainVariant::Stated)
}

pub fn validate_markov_variant(
    n: u64,
    trials: u64,
    seed: u64,
    variant: ChainVariant,
) -> Result<MarkovReport> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidConfig("N and trials must be positive".into()));
    }
    let mut rng = substream(seed, n, Purpose::Markov);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let mut s = n;
        let mut steps = 0u64;
        loop {
            steps += 1;
            if rng.random::<f64>() < variant.advance(s, n) {
                s += 1;
            } else {
                break;
            }
        }
        let x = steps as f64;
        sum += x;
        sum_sq += x * x;
    }
    let k = trials as f64;
    let mean = sum / k;
    let var = if trials > 1 {
        ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MarkovReport {
        variant,
        n,
        trials,
        mean,
        stderr: (var / k).sqrt(),
        bound: 4.0 * n as f64,
    })
}

/// Exact mean hitting time, `sum_m P(more than m steps)`, summed in closed
/// form over each block `[2^k N, 2^{k+1} N)` where the step probability is
/// constant.
pub fn expected_hitting_time(n: u64, variant: ChainVariant) -> f64 {
    let mut total = 0.0f64;
    let mut survive = 1.0;
    let mut block = n as f64;
    while survive > 1e-17 * total.max(1.0) {
        let q = 1.0 / block;
        // per-step absorption b, and the chance of crossing the whole block
        let (b, cross) = match variant {
            ChainVariant::Stated => (1.0 - q, (block * q.ln()).exp()),
            ChainVariant::Swapped => (q, (block * (-q).ln_1p()).exp()),
        };
        total += if b == 0.0 {
            survive * block
        } else {
            survive * (1.0 - cross) / b
        };
        survive *= cross;
        block *= 2.0;
    }
    total
}
