//! Per-iteration timing of the training objective across model kinds.

use std::time::Instant;

use crate::corpus::{LabelSet, Sentence};
use crate::error::{Error, Result};
use crate::lattice::{Mode, ModelKind};
use crate::training::{objective_and_gradient, prepare};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: ModelKind,
    /// Seconds per objective-and-gradient pass, one entry per timed pass.
    pub samples: Vec<f64>,
}

impl BenchRow {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation; 0 for a single sample.
    pub fn stddev(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub max_len: usize,
    pub dep_features: bool,
    pub warmup: usize,
    pub iterations: usize,
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            max_len: 8,
            dep_features: true,
            warmup: 1,
            iterations: 5,
            workers: 1,
        }
    }
}

/// Times one full pass of the objective and its gradient over `corpus`
/// for each kind, at zero weights. Passes of different kinds are
/// interleaved so drift in machine load hits all of them alike.
pub fn benchmark(corpus: &[Sentence], kinds: &[ModelKind], config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if corpus.is_empty() || config.iterations == 0 {
        return Err(Error::InvalidInput("benchmark needs a non-empty corpus and at least one iteration".into()));
    }
    let labels = LabelSet::from_sentences(corpus)?;
    let prepared = kinds
        .iter()
        .map(|&kind| prepare(corpus, &labels, Mode::new(kind, config.max_len), config.dep_features))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<Vec<f64>> = prepared.iter().map(|(space, _, _)| vec![0.0; space.num_features()]).collect();
    let mut rows: Vec<BenchRow> = kinds.iter().map(|&kind| BenchRow { kind, samples: Vec::new() }).collect();
    for round in 0..config.warmup + config.iterations {
        for (((space, instances, _), w), row) in prepared.iter().zip(&weights).zip(rows.iter_mut()) {
            let started = Instant::now();
            objective_and_gradient(space, instances, w, 0.0, config.workers)?;
            let secs = started.elapsed().as_secs_f64();
            if round >= config.warmup {
                row.samples.push(secs);
            }
        }
    }
    Ok(rows)
}

pub fn csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("mode,iterations,mean_seconds,stddev_seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.kind, r.samples.len(), r.mean(), r.stddev()));
    }
    out
}
