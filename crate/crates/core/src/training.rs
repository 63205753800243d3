//! L2-regularized conditional log-likelihood training and decoding.
//!
//! The objective over a corpus is
//! `sum_i (log Z(x_i) - w . f(x_i, y_i)) + lambda * ||w||^2`
//! with gradient `sum_i (E[f] - f(x_i, y_i)) + 2 lambda w`.

use std::fs;
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{iob_to_spans, spans_to_iob, EntitySpan, LabelSet, Sentence, OUTSIDE};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::features::{CompiledSentence, FeatureSpace, LabelScheme, OutputLabels};
use crate::inference::{self, Marginals, ScoredLattice, Segment, Segmentation};
use crate::lattice::{self, Mode, ModelKind, SpanLattice};
use crate::lbfgs::{self, IterationLog, LbfgsConfig, StopReason};

pub const MODEL_VERSION: u32 = 1;

/// Regularization values tried by cross-validation by default.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0001, 0.001, 0.01, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub history: usize,
    pub workers: usize,
    pub dep_features: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            folds: 10,
            max_iterations: 200,
            rel_tol: 1e-6,
            grad_tol: 1e-6,
            history: 10,
            workers: 1,
            dep_features: true,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.rel_tol > 0.0 && self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.history == 0 || self.workers == 0 {
            return Err(Error::InvalidInput("history and worker count must be positive".into()));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            history: self.history,
            max_iterations: self.max_iterations,
            rel_tol: self.rel_tol,
            grad_tol: self.grad_tol,
        }
    }
}

/// Output labels of a model kind over an entity label set.
pub fn output_labels(labels: &LabelSet, kind: ModelKind) -> OutputLabels {
    match LabelScheme::for_kind(kind) {
        LabelScheme::Iob => OutputLabels::new(labels.iob_labels(), LabelScheme::Iob),
        LabelScheme::Segment => OutputLabels::new(labels.segment_labels(), LabelScheme::Segment),
    }
}

/// Maps gold entities onto a segmentation of `lattice`.
///
/// Entities whose span is not in the lattice are split into single-token
/// segments of the same type; uncovered tokens become `O` singletons.
/// Returns the segmentation and the number of split entities.
pub fn project_gold(sentence: &Sentence, lattice: &SpanLattice, labels: &OutputLabels) -> Result<(Segmentation, usize)> {
    let n = sentence.len();
    let label_id = |name: &str| {
        labels
            .id(name)
            .ok_or_else(|| Error::InvalidInput(format!("label {name:?} is not in the model's label set")))
    };
    let mut segments = Vec::with_capacity(n);
    let mut splits = 0;
    match labels.scheme() {
        LabelScheme::Iob => {
            let tags = spans_to_iob(&sentence.gold, n)?;
            for (i, tag) in tags.iter().enumerate() {
                segments.push(Segment {
                    span: lattice::Span::new(i + 1, i + 1),
                    label: label_id(tag)?,
                });
            }
        }
        LabelScheme::Segment => {
            let outside = label_id(OUTSIDE)?;
            let mut next = 1;
            for e in &sentence.gold {
                for p in next..e.start {
                    segments.push(Segment {
                        span: lattice::Span::new(p, p),
                        label: outside,
                    });
                }
                let y = label_id(&e.etype)?;
                if lattice.contains(e.start, e.end) {
                    segments.push(Segment {
                        span: lattice::Span::new(e.start, e.end),
                        label: y,
                    });
                } else {
                    splits += 1;
                    for p in e.start..=e.end {
                        segments.push(Segment {
                            span: lattice::Span::new(p, p),
                            label: y,
                        });
                    }
                }
                next = e.end + 1;
            }
            for p in next..=n {
                segments.push(Segment {
                    span: lattice::Span::new(p, p),
                    label: outside,
                });
            }
        }
    }
    Ok((Segmentation(segments), splits))
}

/// Converts a decoded segmentation back into entity spans.
pub fn segmentation_to_spans(seg: &Segmentation, labels: &OutputLabels) -> Vec<EntitySpan> {
    match labels.scheme() {
        LabelScheme::Segment => seg
            .segments()
            .iter()
            .filter(|s| s.label != 0)
            .map(|s| EntitySpan::new(s.span.start, s.span.end, labels.name(s.label)))
            .collect(),
        LabelScheme::Iob => {
            let tags: Vec<&str> = seg.segments().iter().map(|s| labels.name(s.label)).collect();
            iob_to_spans(&tags).map(|(spans, _)| spans).unwrap_or_default()
        }
    }
}

/// A compiled sentence together with its gold segmentation.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: usize,
    pub compiled: CompiledSentence,
    pub gold: Segmentation,
}

/// Per-span label scores `w . f_emission`, `-inf` where a label is not admitted.
fn emission_scores(space: &FeatureSpace, compiled: &CompiledSentence, weights: &[f64]) -> Vec<f64> {
    let labels = space.labels();
    let k = labels.len();
    let n = compiled.lattice.sentence_len();
    let mut out = vec![f64::NEG_INFINITY; compiled.lattice.len() * k];
    for (idx, span) in compiled.lattice.spans().iter().enumerate() {
        for y in 0..k {
            if !labels.allows_span(y, span.len()) {
                continue;
            }
            let mut s = 0.0;
            for &(obs, count) in &compiled.observations[idx] {
                if let Some(id) = space.emission_id(obs, y) {
                    s += weights[id as usize] * count as f64;
                }
            }
            if span.end == n {
                if let Some(id) = space.transition_id(Some(y), None) {
                    s += weights[id as usize];
                }
            }
            out[idx * k + y] = s;
        }
    }
    out
}

/// Scores every factor of a compiled sentence under `weights`.
pub fn score_sentence<'a>(space: &FeatureSpace, compiled: &'a CompiledSentence, weights: &[f64]) -> ScoredLattice<'a> {
    let labels = space.labels();
    let k = labels.len();
    let emission = emission_scores(space, compiled, weights);
    ScoredLattice::new(&compiled.lattice, k, |idx, yp, y| {
        let e = emission[idx * k + y];
        if e == f64::NEG_INFINITY || !labels.allows_transition(yp, y) {
            return f64::NEG_INFINITY;
        }
        match space.transition_id(yp, Some(y)) {
            Some(id) => e + weights[id as usize],
            None => e,
        }
    })
}

/// Adds `scale` times the feature counts of factor `(span, y_prev, y)`.
fn add_factor_features(
    space: &FeatureSpace,
    compiled: &CompiledSentence,
    span_idx: usize,
    y_prev: Option<usize>,
    y: usize,
    scale: f64,
    out: &mut [f64],
) {
    add_emission_features(space, compiled, span_idx, y, scale, out);
    if let Some(id) = space.transition_id(y_prev, Some(y)) {
        out[id as usize] += scale;
    }
}

/// Label-dependent but previous-label-independent part of a factor,
/// including the end transition for spans ending the sentence.
fn add_emission_features(space: &FeatureSpace, compiled: &CompiledSentence, span_idx: usize, y: usize, scale: f64, out: &mut [f64]) {
    for &(obs, count) in &compiled.observations[span_idx] {
        if let Some(id) = space.emission_id(obs, y) {
            out[id as usize] += scale * count as f64;
        }
    }
    if compiled.lattice.spans()[span_idx].end == compiled.lattice.sentence_len() {
        if let Some(id) = space.transition_id(Some(y), None) {
            out[id as usize] += scale;
        }
    }
}

/// Feature counts of a whole segmentation.
pub fn segmentation_features(space: &FeatureSpace, compiled: &CompiledSentence, seg: &Segmentation) -> Result<Vec<f64>> {
    let mut out = vec![0.0; space.num_features()];
    let mut prev = None;
    for s in seg.segments() {
        let idx = compiled
            .lattice
            .index_of(s.span.start, s.span.end)
            .ok_or_else(|| Error::Invariant(format!("segment ({},{}) not in lattice", s.span.start, s.span.end)))?;
        add_factor_features(space, compiled, idx, prev, s.label, 1.0, &mut out);
        prev = Some(s.label);
    }
    Ok(out)
}

/// Model expectation of the feature counts, from factor marginals.
pub fn expected_features(space: &FeatureSpace, compiled: &CompiledSentence, marg: &Marginals, out: &mut [f64]) {
    let k = space.labels().len();
    for (idx, span) in compiled.lattice.spans().iter().enumerate() {
        for y in 0..k {
            let p = marg.span_label(idx, y);
            if p == 0.0 {
                continue;
            }
            add_emission_features(space, compiled, idx, y, p, out);
            if span.start == 1 {
                if let Some(id) = space.transition_id(None, Some(y)) {
                    out[id as usize] += p;
                }
            } else {
                for yp in 0..k {
                    let m = marg.get(idx, Some(yp), y);
                    if m != 0.0 {
                        if let Some(id) = space.transition_id(Some(yp), Some(y)) {
                            out[id as usize] += m;
                        }
                    }
                }
            }
        }
    }
}

/// Adds sentence `inst`'s contribution (`log Z - w . f(gold)`) and its
/// gradient to `grad`; returns the value.
fn accumulate_sentence(space: &FeatureSpace, inst: &Instance, weights: &[f64], grad: &mut [f64]) -> Result<f64> {
    let scored = score_sentence(space, &inst.compiled, weights);
    let gold_score = inst.gold.score(&scored).ok_or_else(|| Error::Invariant(format!("gold of sentence {} left the lattice", inst.id)))?;
    if !gold_score.is_finite() {
        return Err(Error::Training(format!(
            "gold segmentation of sentence {} violates the labelling rules",
            inst.id
        )));
    }
    let marg = inference::marginals(&scored)?;
    expected_features(space, &inst.compiled, &marg, grad);
    let mut prev = None;
    for s in inst.gold.segments() {
        let idx = inst.compiled.lattice.index_of(s.span.start, s.span.end).expect("checked above");
        add_factor_features(space, &inst.compiled, idx, prev, s.label, -1.0, grad);
        prev = Some(s.label);
    }
    Ok(marg.log_partition() - gold_score)
}

/// Sentences per reduction chunk. Chunk sums are added in chunk order, so
/// results do not depend on the worker count.
const CHUNK: usize = 32;

/// Objective value and gradient over `instances`; chunks are spread over
/// `workers` threads a wave at a time.
pub fn objective_and_gradient(
    space: &FeatureSpace,
    instances: &[Instance],
    weights: &[f64],
    lambda: f64,
    workers: usize,
) -> Result<(f64, Vec<f64>)> {
    let dim = space.num_features();
    if weights.len() != dim {
        return Err(Error::Invariant(format!("{} weights for {dim} features", weights.len())));
    }
    let chunks: Vec<&[Instance]> = instances.chunks(CHUNK).collect();
    let workers = workers.max(1).min(chunks.len().max(1));
    let mut buffers: Vec<Vec<f64>> = (0..workers).map(|_| vec![0.0; dim]).collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; dim];
    for wave in chunks.chunks(workers) {
        let values: Vec<Result<f64>> = if wave.len() == 1 {
            vec![chunk_objective(space, wave[0], weights, &mut buffers[0])]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .zip(buffers.iter_mut())
                    .map(|(chunk, buf)| scope.spawn(move || chunk_objective(space, chunk, weights, buf)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invariant("worker panicked".into()))))
                    .collect()
            })
        };
        for (v, buf) in values.into_iter().zip(&buffers) {
            value += v?;
            for (a, b) in grad.iter_mut().zip(buf) {
                *a += b;
            }
        }
    }
    for (g, w) in grad.iter_mut().zip(weights) {
        value += lambda * w * w;
        *g += 2.0 * lambda * w;
    }
    if !value.is_finite() {
        return Err(Error::Training(format!("objective became non-finite ({value})")));
    }
    Ok((value, grad))
}

fn chunk_objective(space: &FeatureSpace, instances: &[Instance], weights: &[f64], grad: &mut [f64]) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut value = 0.0;
    for inst in instances {
        value += accumulate_sentence(space, inst, weights, grad)?;
    }
    Ok(value)
}

/// Builds the feature space and training instances for `corpus`.
pub fn prepare(corpus: &[Sentence], labels: &LabelSet, mode: Mode, dep_features: bool) -> Result<(FeatureSpace, Vec<Instance>, usize)> {
    let out_labels = output_labels(labels, mode.kind);
    let mut space = FeatureSpace::new(out_labels, mode.kind, dep_features);
    let mut instances = Vec::with_capacity(corpus.len());
    let mut splits = 0;
    for (id, sentence) in corpus.iter().enumerate() {
        let lat = lattice::build_lattice(sentence, mode);
        let (gold, s) = project_gold(sentence, &lat, space.labels())?;
        splits += s;
        let compiled = space.compile(sentence, lat)?;
        instances.push(Instance { id, compiled, gold });
    }
    space.freeze();
    Ok((space, instances, splits))
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations: Vec<IterationLog>,
    pub reason: StopReason,
    pub objective: f64,
    /// Gold entities split into singletons because their span was not allowed.
    pub splits: usize,
}

impl FitReport {
    pub fn mean_iteration_time(&self) -> Duration {
        if self.iterations.is_empty() {
            return Duration::ZERO;
        }
        self.iterations.iter().map(|l| l.elapsed).sum::<Duration>() / self.iterations.len() as u32
    }
}

/// A trained model: feature space, weights and hyperparameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub mode: Mode,
    pub lambda: f64,
    pub label_set: LabelSet,
    pub space: FeatureSpace,
    pub weights: Vec<f64>,
}

pub fn fit(corpus: &[Sentence], config: &TrainConfig, mode: Mode) -> Result<Model> {
    fit_with_report(corpus, config, mode, |_| {}).map(|(m, _)| m)
}

/// Trains from `w = 0` with L-BFGS; `on_iter` observes every iteration.
pub fn fit_with_report(
    corpus: &[Sentence],
    config: &TrainConfig,
    mode: Mode,
    on_iter: impl FnMut(&IterationLog),
) -> Result<(Model, FitReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty corpus".into()));
    }
    let labels = LabelSet::from_sentences(corpus)?;
    let (space, instances, splits) = prepare(corpus, &labels, mode, config.dep_features)?;
    if splits > 0 {
        log::info!("{splits} gold entities are not valid spans under {}; split into single tokens", mode.kind);
    }
    let objective = |w: &[f64]| objective_and_gradient(&space, &instances, w, config.lambda, config.workers);
    let min = lbfgs::minimize(objective, vec![0.0; space.num_features()], &config.lbfgs(), on_iter)?;
    let report = FitReport {
        iterations: min.iterations,
        reason: min.reason,
        objective: min.value,
        splits,
    };
    let model = Model {
        mode,
        lambda: config.lambda,
        label_set: labels,
        space,
        weights: min.x,
    };
    Ok((model, report))
}

impl Model {
    pub fn output_labels(&self) -> &OutputLabels {
        self.space.labels()
    }

    pub fn dep_features(&self) -> bool {
        self.space.dep_features()
    }

    /// Highest-scoring entity spans for one sentence.
    pub fn predict(&self, sentence: &Sentence) -> Result<Vec<EntitySpan>> {
        if sentence.is_empty() {
            return Ok(Vec::new());
        }
        let lat = lattice::build_lattice(sentence, self.mode);
        let compiled = self.space.compile_frozen(sentence, lat)?;
        let scored = score_sentence(&self.space, &compiled, &self.weights);
        let (seg, _) = inference::viterbi(&scored)?;
        Ok(segmentation_to_spans(&seg, self.space.labels()))
    }

    pub fn predict_all(&self, sentences: &[Sentence]) -> Result<Vec<Vec<EntitySpan>>> {
        sentences.iter().map(|s| self.predict(s)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            version: MODEL_VERSION,
            mode: self.mode.kind,
            max_len: self.mode.max_len,
            lambda: self.lambda,
            labels: self.label_set.entity_types().to_vec(),
            dep_features: self.dep_features(),
            features: self.space.features().names().to_vec(),
            weights: self.weights.clone(),
        };
        serde_json::to_string(&doc).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if doc.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        if doc.features.len() != doc.weights.len() {
            return Err(Error::Model(format!(
                "{} features but {} weights",
                doc.features.len(),
                doc.weights.len()
            )));
        }
        if doc.max_len == 0 || !(doc.lambda >= 0.0) {
            return Err(Error::Model("invalid hyperparameters".into()));
        }
        let label_set = LabelSet::new(doc.labels)?;
        let out = output_labels(&label_set, doc.mode);
        let space = FeatureSpace::from_feature_names(out, doc.mode, doc.dep_features, doc.features)?;
        Ok(Model {
            mode: Mode::new(doc.mode, doc.max_len),
            lambda: doc.lambda,
            label_set,
            space,
            weights: doc.weights,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    mode: ModelKind,
    #[serde(rename = "L")]
    max_len: usize,
    lambda: f64,
    labels: Vec<String>,
    dep_features: bool,
    features: Vec<String>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub best_lambda: f64,
    /// `(lambda, mean held-out F1)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Splits `0..len` into `folds` contiguous folds after a seeded shuffle.
pub fn fold_assignment(len: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = len / folds;
    let extra = len % folds;
    let mut out = Vec::with_capacity(folds);
    let mut at = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(order[at..at + size].to_vec());
        at += size;
    }
    out
}

/// k-fold cross-validation of the regularization strength. Returns the
/// grid value with the highest mean held-out F1; ties go to the smaller value.
pub fn cross_validate(corpus: &[Sentence], config: &TrainConfig, mode: Mode) -> Result<CrossValidation> {
    if config.lambda_grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    if config.folds < 2 || config.folds > corpus.len() {
        return Err(Error::InvalidInput(format!(
            "need 2 <= folds <= corpus size, got {} folds for {} sentences",
            config.folds,
            corpus.len()
        )));
    }
    let folds = fold_assignment(corpus.len(), config.folds, config.seed);
    let mut scores = Vec::with_capacity(config.lambda_grid.len());
    for &lambda in &config.lambda_grid {
        let mut total = 0.0;
        for (f, held) in folds.iter().enumerate() {
            let train: Vec<Sentence> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().map(|&i| corpus[i].clone()))
                .collect();
            let test: Vec<&Sentence> = held.iter().map(|&i| &corpus[i]).collect();
            let cfg = TrainConfig { lambda, ..config.clone() };
            let model = fit(&train, &cfg, mode)?;
            let gold: Vec<Vec<EntitySpan>> = test.iter().map(|s| s.gold.clone()).collect();
            let pred: Vec<Vec<EntitySpan>> = test.iter().map(|s| model.predict(s)).collect::<Result<_>>()?;
            total += evaluation::score(&gold, &pred)?.f1();
        }
        let mean = total / folds.len() as f64;
        log::info!("lambda {lambda}: mean F1 {mean:.2}");
        scores.push((lambda, mean));
    }
    let mut best = scores[0];
    for &(lambda, f1) in &scores[1..] {
        if f1 > best.1 || (f1 == best.1 && lambda < best.0) {
            best = (lambda, f1);
        }
    }
    Ok(CrossValidation {
        best_lambda: best.0,
        scores,
    })
}
