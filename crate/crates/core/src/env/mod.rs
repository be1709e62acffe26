//! Valuation-generating environments.
//!
//! An [`Environment`] maps contexts to hidden valuations. Policies never
//! touch it directly: the harness talks to it through a [`Market`], which
//! answers posted prices with one bit and keeps a separate, counted oracle
//! channel for regret accounting.

mod contexts;
mod hard;
mod mcshane;
mod quadratic;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{Context, Feedback, Price, ValuationPair};

pub use contexts::{ContextGenerator, GridOrdering};
pub use hard::{HardInstance, HardInstanceParams};
pub use mcshane::{mcshane_extend, LipschitzExtension};
pub use quadratic::QuadraticEnv;

pub trait Environment: Send + Sync {
    fn dim(&self) -> usize;

    /// Declared sup-norm Lipschitz bound of both valuation functions.
    fn lipschitz(&self) -> f64;

    /// The hidden valuations at `x`. Harness-side only.
    fn valuations(&self, x: &Context) -> Result<ValuationPair>;
}

impl<E: Environment + ?Sized> Environment for Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }

    fn valuations(&self, x: &Context) -> Result<ValuationPair> {
        (**self).valuations(x)
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }

    fn valuations(&self, x: &Context) -> Result<ValuationPair> {
        (**self).valuations(x)
    }
}

pub(crate) fn check_dim(expected: usize, x: &Context) -> Result<()> {
    if x.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.dim(),
        });
    }
    Ok(())
}

/// The one-bit trade indicator at `x` for price `p`.
pub fn env_feedback(env: &(impl Environment + ?Sized), x: &Context, p: Price) -> Result<Feedback> {
    Ok(Feedback::from_valuations(p, &env.valuations(x)?))
}

/// Per-run view of an environment with oracle-call accounting.
pub struct Market<E> {
    env: E,
    oracle: Option<Box<dyn Environment>>,
    oracle_calls: u64,
}

impl<E: Environment> Market<E> {
    pub fn new(env: E) -> Self {
        Market {
            env,
            oracle: None,
            oracle_calls: 0,
        }
    }

    /// Answers feedback from `env` but regret queries from `oracle`. Used to
    /// show that posted prices never depend on oracle answers.
    pub fn with_separate_oracle(env: E, oracle: Box<dyn Environment>) -> Self {
        Market {
            env,
            oracle: Some(oracle),
            oracle_calls: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.env.dim()
    }

    pub fn feedback(&self, x: &Context, p: Price) -> Result<Feedback> {
        env_feedback(&self.env, x, p)
    }

    /// True valuations, for regret accounting only.
    pub fn oracle(&mut self, x: &Context) -> Result<ValuationPair> {
        self.oracle_calls += 1;
        match &self.oracle {
            Some(o) => o.valuations(x),
            None => self.env.valuations(x),
        }
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls
    }

    pub fn env(&self) -> &E {
        &self.env
    }
}

/// Valuations that do not depend on the context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEnv {
    d: usize,
    pair: ValuationPair,
}

impl ConstantEnv {
    pub fn new(d: usize, seller: f64, buyer: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        Ok(ConstantEnv {
            d,
            pair: ValuationPair::new(seller, buyer)?,
        })
    }
}

impl Environment for ConstantEnv {
    fn dim(&self) -> usize {
        self.d
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn valuations(&self, x: &Context) -> Result<ValuationPair> {
        check_dim(self.d, x)?;
        Ok(self.pair)
    }
}

type ValuationFn = dyn Fn(&[f64]) -> (f64, f64) + Send + Sync;

/// User-supplied valuation functions `x -> (f_s(x), f_b(x))`.
pub struct FnEnv {
    d: usize,
    lipschitz: f64,
    f: Box<ValuationFn>,
}

impl FnEnv {
    pub fn new<F>(d: usize, lipschitz: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> (f64, f64) + Send + Sync + 'static,
    {
        FnEnv {
            d,
            lipschitz,
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnEnv")
            .field("d", &self.d)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl Environment for FnEnv {
    fn dim(&self) -> usize {
        self.d
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn valuations(&self, x: &Context) -> Result<ValuationPair> {
        check_dim(self.d, x)?;
        let (s, b) = (self.f)(x.coords());
        ValuationPair::new(s, b)
    }
}
