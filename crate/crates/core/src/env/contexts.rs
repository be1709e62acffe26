use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::types::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridOrdering {
    Lexicographic,
    Shuffled(u64),
}

/// Oblivious context sequences, fixed before a run starts.
#[derive(Debug, Clone)]
pub enum ContextGenerator {
    /// Independent uniform draws; repetition `r` uses its own sub-stream.
    UniformRandom { seed: u64 },
    /// A fixed list replayed once, truncated to the horizon.
    GridSequence { points: Arc<[Context]> },
    /// One context per line, `d` whitespace-separated decimals in `[0, 1]`.
    FileReplay { path: PathBuf },
}

pub type ContextStream = Box<dyn Iterator<Item = Context> + Send>;

impl ContextGenerator {
    pub fn grid(points: Vec<Context>, ordering: GridOrdering) -> Self {
        let mut points = points;
        if let GridOrdering::Shuffled(seed) = ordering {
            points.shuffle(&mut substream(seed, 0, Purpose::Contexts));
        }
        ContextGenerator::GridSequence {
            points: points.into(),
        }
    }

    /// The context sequence of one repetition. Uniform and file sources
    /// yield exactly `horizon` contexts; a grid yields `min(horizon, |grid|)`.
    pub fn stream(&self, d: usize, horizon: u64, repetition: u64) -> Result<ContextStream> {
        match self {
            ContextGenerator::UniformRandom { seed } => {
                let mut rng = substream(*seed, repetition, Purpose::Contexts);
                Ok(Box::new((0..horizon).map(move |_| {
                    Context::new((0..d).map(|_| rng.random::<f64>()).collect())
                        .expect("uniform draws lie in [0, 1)")
                })))
            }
            ContextGenerator::GridSequence { points } => {
                if let Some(p) = points.first() {
                    if p.dim() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: p.dim(),
                        });
                    }
                }
                let points = Arc::clone(points);
                let n = (horizon as usize).min(points.len());
                Ok(Box::new((0..n).map(move |i| points[i].clone())))
            }
            ContextGenerator::FileReplay { path } => {
                let mut contexts = read_context_file(path, d)?;
                if (contexts.len() as u64) < horizon {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: contexts.len() + 1,
                        message: format!("expected {horizon} contexts, found {}", contexts.len()),
                    });
                }
                contexts.truncate(horizon as usize);
                Ok(Box::new(contexts.into_iter()))
            }
        }
    }
}

/// Parses a context replay file. Blank lines are skipped; any other line
/// must hold exactly `d` decimals in `[0, 1]`.
pub fn read_context_file(path: &Path, d: usize) -> Result<Vec<Context>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_contexts(&text, d).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

fn parse_contexts(text: &str, d: usize) -> std::result::Result<Vec<Context>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let coords = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| (lineno, format!("bad number {tok:?}: {e}")))
            })
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        if coords.len() != d {
            return Err((
                lineno,
                format!("expected {d} coordinates, found {}", coords.len()),
            ));
        }
        out.push(Context::new(coords).map_err(|e| (lineno, e.to_string()))?);
    }
    Ok(out)
}
