//! Segment lattices: which `(start, end)` spans a model may label.
//!
//! A span `(u, v)` with `u < v` is *valid* for a dependency tree when the
//! tree contains a chain of undirected arcs `u = u1 < u2 < ... < uk = v`.
//! Single tokens are always valid. DGM uses all valid spans, DGM-S only those
//! formed by a single arc, the semi-Markov CRF every span up to `max_len`
//! and the linear-chain CRF singletons only.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::corpus::{DependencyTree, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    Semi,
    DgmS,
    Dgm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Linear, ModelKind::Semi, ModelKind::DgmS, ModelKind::Dgm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Semi => "semi",
            ModelKind::DgmS => "dgm-s",
            ModelKind::Dgm => "dgm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "linear" => Ok(ModelKind::Linear),
            "semi" => Ok(ModelKind::Semi),
            "dgm-s" | "dgms" => Ok(ModelKind::DgmS),
            "dgm" => Ok(ModelKind::Dgm),
            other => Err(Error::InvalidInput(format!("unknown mode {other:?}"))),
        }
    }
}

/// Model kind together with the maximum span length `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub kind: ModelKind,
    pub max_len: usize,
}

impl Mode {
    pub fn new(kind: ModelKind, max_len: usize) -> Self {
        assert!(max_len >= 1, "maximum span length must be positive");
        Mode { kind, max_len }
    }

    pub fn is_linear(&self) -> bool {
        self.kind == ModelKind::Linear
    }

    /// Longest span the lattice can contain.
    pub fn effective_max_len(&self) -> usize {
        if self.is_linear() {
            1
        } else {
            self.max_len
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The allowed spans of a sentence of length `n`.
///
/// Spans are stored grouped by end position, and within a group by
/// increasing length, so forward recursions can walk them in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanLattice {
    n: usize,
    spans: Vec<Span>,
    // spans ending at j occupy spans[end_offsets[j]..end_offsets[j + 1]]
    end_offsets: Vec<usize>,
}

impl SpanLattice {
    /// Builds a lattice from arbitrary spans; singletons are always added.
    pub fn from_spans(n: usize, spans: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut all: Vec<Span> = (1..=n).map(|i| Span::new(i, i)).collect();
        for (u, v) in spans {
            if u < 1 || u > v || v > n {
                return Err(Error::OutOfRange(format!("span ({u},{v}) for n = {n}")));
            }
            all.push(Span::new(u, v));
        }
        // by end, then by length ascending (= start descending)
        all.sort_unstable_by(|a, b| a.end.cmp(&b.end).then(b.start.cmp(&a.start)));
        all.dedup();
        let mut end_offsets = vec![0; n + 2];
        for s in &all {
            end_offsets[s.end + 1] += 1;
        }
        for j in 1..end_offsets.len() {
            end_offsets[j] += end_offsets[j - 1];
        }
        Ok(SpanLattice {
            n,
            spans: all,
            end_offsets,
        })
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    /// Number of allowed spans.
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Indices (into [`spans`](Self::spans)) of spans ending at `end`, shortest first.
    pub fn ending_at(&self, end: usize) -> std::ops::Range<usize> {
        self.end_offsets[end]..self.end_offsets[end + 1]
    }

    pub fn index_of(&self, start: usize, end: usize) -> Option<usize> {
        if end == 0 || end > self.n || start == 0 || start > end {
            return None;
        }
        let range = self.ending_at(end);
        let group = &self.spans[range.clone()];
        group
            .binary_search_by(|s| start.cmp(&s.start))
            .ok()
            .map(|k| range.start + k)
    }

    pub fn contains(&self, start: usize, end: usize) -> bool {
        self.index_of(start, end).is_some()
    }

    pub fn is_subset_of(&self, other: &SpanLattice) -> bool {
        self.n == other.n && self.spans.iter().all(|s| other.contains(s.start, s.end))
    }
}

/// Multi-word DGM spans over an undirected adjacency list (1-based).
///
/// From each start `u` the search only follows arcs to larger positions, so
/// every reached `v` is the end of an increasing arc chain from `u`.
pub fn dgm_multiword_spans(adjacency: &[Vec<usize>], max_len: usize) -> Vec<(usize, usize)> {
    let n = adjacency.len().saturating_sub(1);
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for u in 1..=n {
        stack.clear();
        stack.push(u);
        while let Some(w) = stack.pop() {
            for &x in &adjacency[w] {
                if x > w && x + 1 - u <= max_len {
                    out.push((u, x));
                    stack.push(x);
                }
            }
        }
    }
    out
}

/// Multi-word DGM-S spans: the arcs themselves, up to `max_len` long.
pub fn single_arc_multiword_spans(adjacency: &[Vec<usize>], max_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (u, neighbours) in adjacency.iter().enumerate().skip(1) {
        for &v in neighbours {
            if v > u && v + 1 - u <= max_len {
                out.push((u, v));
            }
        }
    }
    out
}

/// DGM lattice: singletons plus every span covered by an increasing arc chain.
pub fn valid_spans(tree: &DependencyTree, max_len: usize) -> SpanLattice {
    let spans = dgm_multiword_spans(&tree.adjacency(), max_len);
    SpanLattice::from_spans(tree.len(), spans).expect("tree spans are in range")
}

/// DGM-S lattice: singletons plus spans that are a single arc.
pub fn single_arc_spans(tree: &DependencyTree, max_len: usize) -> SpanLattice {
    let spans = single_arc_multiword_spans(&tree.adjacency(), max_len);
    SpanLattice::from_spans(tree.len(), spans).expect("tree spans are in range")
}

/// Every span of length at most `max_len`.
pub fn all_spans(n: usize, max_len: usize) -> SpanLattice {
    let spans = (1..=n).flat_map(|u| (u + 1..=n.min(u + max_len - 1)).map(move |v| (u, v)));
    SpanLattice::from_spans(n, spans).expect("spans are in range")
}

pub fn build_lattice(sentence: &Sentence, mode: Mode) -> SpanLattice {
    build_tree_lattice(&sentence.tree, mode)
}

pub fn build_tree_lattice(tree: &DependencyTree, mode: Mode) -> SpanLattice {
    match mode.kind {
        ModelKind::Linear => all_spans(tree.len(), 1),
        ModelKind::Semi => all_spans(tree.len(), mode.max_len),
        ModelKind::DgmS => single_arc_spans(tree, mode.max_len),
        ModelKind::Dgm => valid_spans(tree, mode.max_len),
    }
}

/// Lattice edges: every allowed span paired with every `(y', y)` label pair.
pub fn edge_count(lattice: &SpanLattice, num_labels: usize) -> u64 {
    assert!(num_labels >= 1, "label set must be non-empty");
    lattice.len() as u64 * (num_labels as u64).pow(2)
}

/// Mean over sentences of `edge_count / n`, as an exact rational.
pub fn average_edges_per_token(corpus: &[Sentence], mode: Mode, num_labels: usize) -> Result<BigRational> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("average edges per token of an empty corpus".into()));
    }
    let mut sum = BigRational::from_integer(BigInt::from(0));
    for s in corpus {
        if s.is_empty() {
            return Err(Error::InvalidInput("sentence without tokens".into()));
        }
        let edges = edge_count(&build_lattice(s, mode), num_labels);
        sum += BigRational::new(BigInt::from(edges), BigInt::from(s.len()));
    }
    Ok(sum / BigInt::from(corpus.len()))
}

/// One row of lattice statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeStats {
    pub sentence_id: usize,
    pub n: usize,
    pub spans: usize,
    pub edges: u64,
    pub edges_per_token: f64,
}

pub fn lattice_stats(corpus: &[Sentence], mode: Mode, num_labels: usize) -> Vec<LatticeStats> {
    corpus
        .iter()
        .enumerate()
        .map(|(id, s)| {
            let lat = build_lattice(s, mode);
            let edges = edge_count(&lat, num_labels);
            LatticeStats {
                sentence_id: id + 1,
                n: s.len(),
                spans: lat.len(),
                edges,
                edges_per_token: edges as f64 / s.len().max(1) as f64,
            }
        })
        .collect()
}
