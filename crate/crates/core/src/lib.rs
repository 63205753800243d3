//! Named entity recognition with dependency-guided semi-Markov CRFs.
//!
//! Four lattices share one inference and training stack: a linear-chain
//! CRF over IOB tags, a semi-Markov CRF over all spans up to length `L`,
//! and two variants restricted to spans that follow dependency arcs.

pub mod bench;
pub mod combinatorics;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod inference;
pub mod lattice;
pub mod lbfgs;
pub mod synth;
pub mod training;

pub use corpus::{DependencyTree, EntitySpan, LabelSet, Sentence, Token};
pub use error::{Error, Result};
pub use evaluation::{bootstrap_test, score, BootstrapResult, EvalReport};
pub use lattice::{Mode, ModelKind, SpanLattice};
pub use training::{Model, TrainConfig};
