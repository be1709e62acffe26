//! Run configuration and its TOML file form.
//!
//! ```toml
//! policy = "known-l"
//! d = 2
//! T = 100000
//! L = 1.0
//! seed = 7
//! repetitions = 10
//! out_path = "results/quadratic-d2.csv"
//! checkpoints = "auto"
//!
//! [env]
//! kind = "quadratic"
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::HardInstanceParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    KnownL,
    UnknownL,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::KnownL => "known-l",
            PolicyKind::UnknownL => "unknown-l",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-l" => Ok(PolicyKind::KnownL),
            "unknown-l" => Ok(PolicyKind::UnknownL),
            other => Err(Error::InvalidConfig(format!("unknown policy {other:?}"))),
        }
    }
}

/// Which environment each repetition runs against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Quadratic valuations; random matrices unless both are given inline.
    Quadratic {
        #[serde(default = "default_true")]
        resample: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seller: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        buyer: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contexts: Option<PathBuf>,
    },
    Constant {
        seller: f64,
        buyer: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contexts: Option<PathBuf>,
    },
    /// Lower-bound instance built from `T`, `L` and `d`; a fresh assignment
    /// per repetition.
    Hard {
        #[serde(default)]
        shuffle: bool,
    },
}

fn default_true() -> bool {
    true
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Quadratic { .. } => "quadratic",
            EnvSpec::Constant { .. } => "constant",
            EnvSpec::Hard { .. } => "hard",
        }
    }

    pub fn quadratic() -> Self {
        EnvSpec::Quadratic {
            resample: true,
            seller: None,
            buyer: None,
            contexts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointMode {
    /// Every round up to 10^5 rounds, geometric spacing beyond.
    #[default]
    Auto,
    All,
    Geometric,
}

impl CheckpointMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckpointMode::Auto => "auto",
            CheckpointMode::All => "all",
            CheckpointMode::Geometric => "geometric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub env: EnvSpec,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_path: Option<PathBuf>,
    #[serde(default)]
    pub checkpoints: CheckpointMode,
}

fn default_repetitions() -> u32 {
    1
}

impl RunConfig {
    pub fn new(policy: PolicyKind, env: EnvSpec, d: usize, horizon: u64, lipschitz: f64) -> Self {
        RunConfig {
            policy,
            env,
            d,
            horizon,
            lipschitz,
            eps: None,
            seed: 0,
            repetitions: 1,
            out_path: None,
            checkpoints: CheckpointMode::Auto,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if self.horizon == 0 {
            return bad("T must be positive".into());
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return bad(format!("L = {} must be positive", self.lipschitz));
        }
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("eps = {eps} must be positive"));
            }
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        match &self.env {
            EnvSpec::Hard { .. } => self.hard_params().validate()?,
            EnvSpec::Quadratic { seller, buyer, .. } => {
                if seller.is_some() != buyer.is_some() {
                    return bad("give both seller and buyer matrices or neither".into());
                }
            }
            EnvSpec::Constant { .. } => {}
        }
        Ok(())
    }

    /// Non-fatal issues worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.d < 64 && self.horizon <= 1u64 << self.d {
            w.push(format!(
                "T = {} does not exceed 2^d = {}; regret guarantees are vacuous",
                self.horizon,
                1u64 << self.d
            ));
        }
        w
    }

    pub fn hard_params(&self) -> HardInstanceParams {
        HardInstanceParams {
            lipschitz: self.lipschitz,
            horizon: self.horizon,
            d: self.d,
        }
    }

    /// Rounds actually played: the horizon, or the grid size for hard
    /// instances if that is smaller.
    pub fn run_length(&self) -> u64 {
        match self.env {
            EnvSpec::Hard { .. } => {
                let p = self.hard_params();
                let side = p.grid_divisions() + 1;
                let n = (side as u128)
                    .checked_pow(self.d as u32)
                    .unwrap_or(u128::MAX);
                (self.horizon as u128).min(n) as u64
            }
            _ => self.horizon,
        }
    }

    /// Slope-fit window: the last `min(10^4, T/10)` rounds.
    pub fn tail_len(&self) -> usize {
        default_tail_len(self.run_length())
    }

    /// `key=value` lines describing the configuration, in fixed order.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("policy".to_string(), self.policy.as_str().to_string()),
            ("env.kind".to_string(), self.env.kind().to_string()),
        ];
        let fmt_matrix = |m: &Vec<Vec<f64>>| {
            let mut s = String::new();
            for (i, row) in m.iter().enumerate() {
                if i > 0 {
                    s.push(';');
                }
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        s.push(' ');
                    }
                    let _ = write!(s, "{v}");
                }
            }
            s
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        match &self.env {
            EnvSpec::Quadratic {
                resample,
                seller,
                buyer,
                contexts,
            } => {
                kv.push(("env.resample".into(), resample.to_string()));
                if let (Some(a), Some(b)) = (seller, buyer) {
                    kv.push(("env.seller".into(), fmt_matrix(a)));
                    kv.push(("env.buyer".into(), fmt_matrix(b)));
                }
                if let Some(p) = path(contexts) {
                    kv.push(("env.contexts".into(), p));
                }
            }
            EnvSpec::Constant {
                seller,
                buyer,
                contexts,
            } => {
                kv.push(("env.seller".into(), seller.to_string()));
                kv.push(("env.buyer".into(), buyer.to_string()));
                if let Some(p) = path(contexts) {
                    kv.push(("env.contexts".into(), p));
                }
            }
            EnvSpec::Hard { shuffle } => kv.push(("env.shuffle".into(), shuffle.to_string())),
        }
        kv.push(("d".into(), self.d.to_string()));
        kv.push(("T".into(), self.horizon.to_string()));
        kv.push(("L".into(), self.lipschitz.to_string()));
        kv.push((
            "eps".into(),
            self.eps
                .map_or_else(|| "default".to_string(), |e| e.to_string()),
        ));
        kv.push(("seed".into(), self.seed.to_string()));
        kv.push(("repetitions".into(), self.repetitions.to_string()));
        kv.push((
            "out_path".into(),
            self.out_path
                .as_ref()
                .map_or_else(String::new, |p| p.display().to_string()),
        ));
        kv.push(("checkpoints".into(), self.checkpoints.as_str().to_string()));
        kv
    }
}

pub fn default_tail_len(rounds: u64) -> usize {
    (rounds / 10).clamp(2, 10_000) as usize
}
