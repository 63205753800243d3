//! Log-space dynamic programming over a scored segment lattice.
//!
//! A segmentation covers positions `1..=n` with contiguous spans from the
//! lattice, each carrying a label. Its score is the sum of factor scores
//! `score(span, y_prev, y)`, where `y_prev` is the label of the preceding
//! segment or the begin sentinel for the first one. Factors scored
//! `-inf` are forbidden.

use crate::error::{Error, Result};
use crate::lattice::{Span, SpanLattice};

/// Streaming log-sum-exp with max shifting.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Factor scores for every `(span, y_prev, y)` of a lattice.
///
/// `y_prev` is `None` for the begin sentinel; it is only consulted for spans
/// starting at position 1, and real previous labels only for the others.
#[derive(Debug, Clone)]
pub struct ScoredLattice<'a> {
    lattice: &'a SpanLattice,
    num_labels: usize,
    // [span][y_prev in 0..=K, K = begin][y]
    scores: Vec<f64>,
}

impl<'a> ScoredLattice<'a> {
    pub fn new(
        lattice: &'a SpanLattice,
        num_labels: usize,
        mut score: impl FnMut(usize, Option<usize>, usize) -> f64,
    ) -> Self {
        let k = num_labels;
        let mut scores = vec![f64::NEG_INFINITY; lattice.len() * (k + 1) * k];
        for (idx, span) in lattice.spans().iter().enumerate() {
            let base = idx * (k + 1) * k;
            if span.start == 1 {
                for y in 0..k {
                    scores[base + k * k + y] = score(idx, None, y);
                }
            } else {
                for yp in 0..k {
                    for y in 0..k {
                        scores[base + yp * k + y] = score(idx, Some(yp), y);
                    }
                }
            }
        }
        ScoredLattice {
            lattice,
            num_labels,
            scores,
        }
    }

    pub fn lattice(&self) -> &SpanLattice {
        self.lattice
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    fn slot(&self, span: usize, y_prev: Option<usize>, y: usize) -> usize {
        let k = self.num_labels;
        span * (k + 1) * k + y_prev.unwrap_or(k) * k + y
    }

    #[inline]
    pub fn score(&self, span: usize, y_prev: Option<usize>, y: usize) -> f64 {
        self.scores[self.slot(span, y_prev, y)]
    }

    fn check(&self) -> Result<()> {
        if self.lattice.sentence_len() == 0 {
            return Err(Error::Invariant("lattice over an empty sentence".into()));
        }
        if self.num_labels == 0 {
            return Err(Error::Invariant("empty label set".into()));
        }
        if self.scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
            return Err(Error::Invariant("non-finite factor score".into()));
        }
        Ok(())
    }

    /// Previous-label choices for a span: the begin sentinel at position 1.
    fn prev_labels(&self, span: &Span) -> PrevLabels {
        if span.start == 1 {
            PrevLabels::Begin
        } else {
            PrevLabels::Labels(self.num_labels)
        }
    }
}

#[derive(Clone, Copy)]
enum PrevLabels {
    Begin,
    Labels(usize),
}

impl IntoIterator for PrevLabels {
    type Item = Option<usize>;
    type IntoIter = Box<dyn Iterator<Item = Option<usize>>>;

    fn into_iter(self) -> Self::IntoIter {
        match self {
            PrevLabels::Begin => Box::new(std::iter::once(None)),
            PrevLabels::Labels(k) => Box::new((0..k).map(Some)),
        }
    }
}

/// Forward table: `alpha[j * K + y]` is the log-sum of all partial
/// segmentations of `1..=j` whose last segment has label `y`. Row 0 is unused.
pub fn forward(scored: &ScoredLattice) -> Vec<f64> {
    let lat = scored.lattice;
    let n = lat.sentence_len();
    let k = scored.num_labels;
    let mut alpha = vec![f64::NEG_INFINITY; (n + 1) * k];
    for j in 1..=n {
        for y in 0..k {
            let mut acc = LogSumExp::new();
            for idx in lat.ending_at(j) {
                let span = lat.spans()[idx];
                if span.start == 1 {
                    acc.add(scored.score(idx, None, y));
                } else {
                    let prev = (span.start - 1) * k;
                    for yp in 0..k {
                        acc.add(alpha[prev + yp] + scored.score(idx, Some(yp), y));
                    }
                }
            }
            alpha[j * k + y] = acc.value();
        }
    }
    alpha
}

/// Backward table: `beta[j * K + y]` is the log-sum of all completions of
/// `j+1..=n` given that the segment ending at `j` has label `y`.
pub fn backward(scored: &ScoredLattice) -> Vec<f64> {
    let lat = scored.lattice;
    let n = lat.sentence_len();
    let k = scored.num_labels;
    let mut acc = vec![LogSumExp::new(); (n + 1) * k];
    let mut beta = vec![f64::NEG_INFINITY; (n + 1) * k];
    for y in 0..k {
        beta[n * k + y] = 0.0;
    }
    for j in (1..=n).rev() {
        if j < n {
            for y in 0..k {
                beta[j * k + y] = acc[j * k + y].value();
            }
        }
        for idx in lat.ending_at(j) {
            let span = lat.spans()[idx];
            if span.start == 1 {
                continue;
            }
            let prev = span.start - 1;
            for y in 0..k {
                let tail = beta[j * k + y];
                if tail == f64::NEG_INFINITY {
                    continue;
                }
                for yp in 0..k {
                    acc[prev * k + yp].add(scored.score(idx, Some(yp), y) + tail);
                }
            }
        }
    }
    beta
}

/// log Z: log-sum over all complete segmentations.
pub fn log_partition(scored: &ScoredLattice) -> Result<f64> {
    scored.check()?;
    let n = scored.lattice.sentence_len();
    let k = scored.num_labels;
    let alpha = forward(scored);
    let z = log_sum_exp(alpha[n * k..].iter().copied());
    if !z.is_finite() {
        return Err(Error::Invariant("no complete segmentation has finite score".into()));
    }
    Ok(z)
}

/// Posterior probabilities of every factor, in the layout of the scores.
#[derive(Debug, Clone)]
pub struct Marginals {
    num_labels: usize,
    values: Vec<f64>,
    log_z: f64,
}

impl Marginals {
    pub fn get(&self, span: usize, y_prev: Option<usize>, y: usize) -> f64 {
        let k = self.num_labels;
        self.values[span * (k + 1) * k + y_prev.unwrap_or(k) * k + y]
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// Posterior of `(span, y)` summed over previous labels.
    pub fn span_label(&self, span: usize, y: usize) -> f64 {
        let k = self.num_labels;
        let base = span * (k + 1) * k;
        (0..=k).map(|yp| self.values[base + yp * k + y]).sum()
    }
}

pub fn marginals(scored: &ScoredLattice) -> Result<Marginals> {
    let log_z = log_partition(scored)?;
    let lat = scored.lattice;
    let k = scored.num_labels;
    let alpha = forward(scored);
    let beta = backward(scored);
    let mut values = vec![0.0; scored.scores.len()];
    for (idx, span) in lat.spans().iter().enumerate() {
        for y in 0..k {
            let tail = beta[span.end * k + y];
            if tail == f64::NEG_INFINITY {
                continue;
            }
            for yp in scored.prev_labels(span) {
                let head = match yp {
                    None => 0.0,
                    Some(yp) => alpha[(span.start - 1) * k + yp],
                };
                let s = scored.score(idx, yp, y);
                let v = head + s + tail - log_z;
                if v > f64::NEG_INFINITY {
                    values[scored.slot(idx, yp, y)] = v.exp();
                }
            }
        }
    }
    Ok(Marginals {
        num_labels: k,
        values,
        log_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub span: Span,
    pub label: usize,
}

/// Labelled spans partitioning `1..=n`, in order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation(pub Vec<Segment>);

impl Segmentation {
    pub fn segments(&self) -> &[Segment] {
        &self.0
    }

    pub fn covers(&self, n: usize) -> bool {
        let mut next = 1;
        for seg in &self.0 {
            if seg.span.start != next || seg.span.end < seg.span.start {
                return false;
            }
            next = seg.span.end + 1;
        }
        next == n + 1
    }

    /// Total score of this segmentation under `scored`, or `None` if a
    /// segment is not in the lattice.
    pub fn score(&self, scored: &ScoredLattice) -> Option<f64> {
        let mut total = 0.0;
        let mut prev = None;
        for seg in &self.0 {
            let idx = scored.lattice.index_of(seg.span.start, seg.span.end)?;
            total += scored.score(idx, prev, seg.label);
            prev = Some(seg.label);
        }
        Some(total)
    }
}

#[derive(Clone, Copy)]
struct Back {
    span: usize,
    prev: Option<usize>,
}

/// Highest-scoring segmentation.
///
/// Ties prefer the shorter last segment, then the smaller label id (for the
/// segment's own label at the end of the sentence, and for the previous
/// label inside the recursion).
pub fn viterbi(scored: &ScoredLattice) -> Result<(Segmentation, f64)> {
    scored.check()?;
    let lat = scored.lattice;
    let n = lat.sentence_len();
    let k = scored.num_labels;
    let mut delta = vec![f64::NEG_INFINITY; (n + 1) * k];
    let mut back: Vec<Option<Back>> = vec![None; (n + 1) * k];
    for j in 1..=n {
        for y in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = None;
            // shortest span first, previous label ascending: strict > keeps the first
            for idx in lat.ending_at(j) {
                let span = lat.spans()[idx];
                for yp in scored.prev_labels(&span) {
                    let head = match yp {
                        None => 0.0,
                        Some(yp) => delta[(span.start - 1) * k + yp],
                    };
                    let v = head + scored.score(idx, yp, y);
                    if v > best {
                        best = v;
                        arg = Some(Back { span: idx, prev: yp });
                    }
                }
            }
            delta[j * k + y] = best;
            back[j * k + y] = arg;
        }
    }
    let mut best_y = None;
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for y in 0..k {
        let v = delta[n * k + y];
        if v == f64::NEG_INFINITY {
            continue;
        }
        let len = back[n * k + y].map(|b| lat.spans()[b.span].len()).unwrap_or(usize::MAX);
        if v > best.0 || (v == best.0 && len < best.1) {
            best = (v, len);
            best_y = Some(y);
        }
    }
    let Some(mut y) = best_y else {
        return Err(Error::Invariant("no complete segmentation has finite score".into()));
    };
    let mut segments = Vec::new();
    let mut j = n;
    loop {
        let b = back[j * k + y].ok_or_else(|| Error::Invariant("broken Viterbi back-pointer".into()))?;
        let span = lat.spans()[b.span];
        segments.push(Segment { span, label: y });
        match b.prev {
            None => break,
            Some(yp) => {
                j = span.start - 1;
                y = yp;
            }
        }
    }
    segments.reverse();
    Ok((Segmentation(segments), best.0))
}
