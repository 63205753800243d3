//! Sparse feature extraction.
//!
//! Observation templates are label independent strings such as `w=Ami`.
//! A factor's feature vector conjoins each observation with the output
//! label (`w=Ami|PER`) and adds the transition template `tr=O+PER`. Every
//! template carries a distinct name prefix so strings never collide across
//! templates.

use std::collections::HashMap;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::lattice::{ModelKind, Span, SpanLattice};

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
pub const ROOT: &str = "<ROOT>";

/// Sentinel for "no feature" in dense lookup tables.
const NONE: u32 = u32::MAX;

/// Character-class shape, truncated to four characters.
pub fn word_shape(surface: &str) -> String {
    surface
        .chars()
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_ascii_digit() {
                'd'
            } else {
                c
            }
        })
        .take(4)
        .collect()
}

/// String to dense id dictionary. A frozen index never allocates.
#[derive(Debug, Clone, Default)]
pub struct FeatureIndex {
    ids: HashMap<String, u32>,
    names: Vec<String>,
    frozen: bool,
}

impl FeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), i as u32).is_some() {
                return Err(Error::Model(format!("duplicate feature {name:?}")));
            }
        }
        Ok(FeatureIndex {
            ids,
            names,
            frozen: true,
        })
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    /// Looks up `name`, allocating the next id unless the index is frozen.
    pub fn intern(&mut self, name: &str) -> Option<u32> {
        if let Some(&id) = self.ids.get(name) {
            return Some(id);
        }
        if self.frozen {
            return None;
        }
        let id = u32::try_from(self.names.len()).expect("feature index overflow");
        self.ids.insert(name.to_string(), id);
        self.names.push(name.to_string());
        Some(id)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Sparse `(id, count)` pairs with unique ascending ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector(Vec<(u32, u32)>);

impl FeatureVector {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        ids.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(ids.len());
        for id in ids {
            match out.last_mut() {
                Some((last, count)) if *last == id => *count += 1,
                _ => out.push((id, 1)),
            }
        }
        FeatureVector(out)
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.0.iter().map(|&(id, c)| weights[id as usize] * c as f64).sum()
    }
}

fn prefixes(word: &str) -> impl Iterator<Item = &str> {
    word.char_indices()
        .skip(1)
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .take(3)
        .map(move |end| &word[..end])
}

fn suffixes(word: &str) -> impl Iterator<Item = &str> {
    word.char_indices().rev().take(3).map(move |(i, _)| &word[i..])
}

fn dependency_templates(sentence: &Sentence, i: usize, out: &mut Vec<String>) {
    let tok = sentence.token(i);
    let head = sentence.tree.head(i);
    let (hw, hp) = if head == 0 {
        (ROOT, ROOT)
    } else {
        let h = sentence.token(head);
        (h.surface.as_str(), h.pos.as_str())
    };
    let rel = sentence.tree.label(i);
    out.push(format!("wh={}+{hw}", tok.surface));
    out.push(format!("whl={}+{hw}+{rel}", tok.surface));
    out.push(format!("ph={}+{hp}", tok.pos));
    out.push(format!("phl={}+{hp}+{rel}", tok.pos));
}

fn check_position(sentence: &Sentence, start: usize, end: usize) -> Result<()> {
    if start < 1 || start > end || end > sentence.len() {
        return Err(Error::OutOfRange(format!(
            "({start},{end}) in sentence of length {}",
            sentence.len()
        )));
    }
    Ok(())
}

/// Label-independent observation templates at token `i` (1-based).
pub fn linear_templates(sentence: &Sentence, i: usize, dep_on: bool) -> Result<Vec<String>> {
    check_position(sentence, i, i)?;
    let tok = sentence.token(i);
    let (pw, pp, psh) = if i == 1 {
        (BOS.to_string(), BOS.to_string(), BOS.to_string())
    } else {
        let p = sentence.token(i - 1);
        (p.surface.clone(), p.pos.clone(), word_shape(&p.surface))
    };
    let mut out = vec![
        format!("w={}", tok.surface),
        format!("p={}", tok.pos),
        format!("pw={pw}"),
        format!("pp={pp}"),
        format!("sh={}", word_shape(&tok.surface)),
        format!("psh={psh}"),
    ];
    for (k, pre) in prefixes(&tok.surface).enumerate() {
        out.push(format!("pre{}={pre}", k + 1));
    }
    for (k, suf) in suffixes(&tok.surface).enumerate() {
        out.push(format!("suf{}={suf}", k + 1));
    }
    if dep_on {
        dependency_templates(sentence, i, &mut out);
    }
    Ok(out)
}

/// Label-independent observation templates of segment `start..=end`.
pub fn segment_templates(sentence: &Sentence, start: usize, end: usize, dep_on: bool) -> Result<Vec<String>> {
    check_position(sentence, start, end)?;
    let n = sentence.len();
    let mut out = Vec::with_capacity(24 + 4 * (end - start + 1));
    if start == 1 {
        out.push(format!("bw={BOS}"));
        out.push(format!("bp={BOS}"));
        out.push(format!("bsh={BOS}"));
    } else {
        let b = sentence.token(start - 1);
        out.push(format!("bw={}", b.surface));
        out.push(format!("bp={}", b.pos));
        out.push(format!("bsh={}", word_shape(&b.surface)));
    }
    if end == n {
        out.push(format!("aw={EOS}"));
        out.push(format!("ap={EOS}"));
        out.push(format!("ash={EOS}"));
    } else {
        let a = sentence.token(end + 1);
        out.push(format!("aw={}", a.surface));
        out.push(format!("ap={}", a.pos));
        out.push(format!("ash={}", word_shape(&a.surface)));
    }
    let first = sentence.token(start);
    let last = sentence.token(end);
    for (k, pre) in prefixes(&first.surface).enumerate() {
        out.push(format!("spre{}={pre}", k + 1));
    }
    for (k, suf) in suffixes(&last.surface).enumerate() {
        out.push(format!("ssuf{}={suf}", k + 1));
    }
    out.push(format!("sw={}", first.surface));
    out.push(format!("ew={}", last.surface));
    out.push(format!("sp={}", first.pos));
    out.push(format!("ep={}", last.pos));
    out.push(format!("len={}", end - start + 1));
    let mut whole = String::new();
    for (offset, i) in (start..=end).enumerate() {
        let tok = sentence.token(i);
        out.push(format!("iw={}:{}", offset + 1, tok.surface));
        out.push(format!("ip={}:{}", offset + 1, tok.pos));
        out.push(format!("ish={}:{}", offset + 1, word_shape(&tok.surface)));
        if offset > 0 {
            whole.push(' ');
        }
        whole.push_str(&tok.surface);
    }
    out.push(format!("seg={whole}"));
    if dep_on {
        for i in start..=end {
            dependency_templates(sentence, i, &mut out);
        }
    }
    Ok(out)
}

pub fn transition_template(y_prev: &str, y: &str) -> String {
    format!("tr={y_prev}+{y}")
}

pub fn emission_template(observation: &str, y: &str) -> String {
    format!("{observation}|{y}")
}

fn factor_strings(observations: Vec<String>, y_prev: &str, y: &str, at_end: bool) -> Vec<String> {
    let mut out: Vec<String> = observations.iter().map(|o| emission_template(o, y)).collect();
    out.push(transition_template(y_prev, y));
    if at_end {
        out.push(transition_template(y, EOS));
    }
    out
}

fn vectorize(index: &mut FeatureIndex, strings: &[String]) -> FeatureVector {
    FeatureVector::from_ids(strings.iter().filter_map(|s| index.intern(s)))
}

/// Feature vector of the linear-chain factor at token `i` with labels
/// `(y_prev, y)`. Pass [`BOS`] as `y_prev` at position 1.
pub fn linear_features(
    index: &mut FeatureIndex,
    sentence: &Sentence,
    i: usize,
    y_prev: &str,
    y: &str,
    dep_on: bool,
) -> Result<FeatureVector> {
    let obs = linear_templates(sentence, i, dep_on)?;
    let strings = factor_strings(obs, y_prev, y, i == sentence.len());
    Ok(vectorize(index, &strings))
}

/// Feature vector of the segment factor over `span` with labels `(y_prev, y)`.
pub fn segment_features(
    index: &mut FeatureIndex,
    sentence: &Sentence,
    span: Span,
    y_prev: &str,
    y: &str,
    dep_on: bool,
) -> Result<FeatureVector> {
    let obs = segment_templates(sentence, span.start, span.end, dep_on)?;
    let strings = factor_strings(obs, y_prev, y, span.end == sentence.len());
    Ok(vectorize(index, &strings))
}

/// Which label combinations a model admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelScheme {
    /// IOB2 tags over singletons: `I-X` only after `B-X` or `I-X`.
    Iob,
    /// Segment labels: `O` (id 0) on single tokens only.
    Segment,
}

impl LabelScheme {
    pub fn for_kind(kind: ModelKind) -> Self {
        if kind == ModelKind::Linear {
            LabelScheme::Iob
        } else {
            LabelScheme::Segment
        }
    }
}

/// Output labels plus the constraints of their scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLabels {
    names: Vec<String>,
    scheme: LabelScheme,
}

impl OutputLabels {
    pub fn new(names: Vec<String>, scheme: LabelScheme) -> Self {
        OutputLabels { names, scheme }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    /// May label `y` sit on a span of length `len`?
    pub fn allows_span(&self, y: usize, len: usize) -> bool {
        match self.scheme {
            LabelScheme::Iob => len == 1,
            LabelScheme::Segment => y != 0 || len == 1,
        }
    }

    /// May `y` follow `y_prev` (`None` = sentence start)?
    pub fn allows_transition(&self, y_prev: Option<usize>, y: usize) -> bool {
        match self.scheme {
            LabelScheme::Segment => true,
            LabelScheme::Iob => match self.names[y].strip_prefix("I-") {
                None => true,
                Some(t) => match y_prev {
                    None => false,
                    Some(p) => {
                        let p = &self.names[p];
                        p.strip_prefix("B-") == Some(t) || p.strip_prefix("I-") == Some(t)
                    }
                },
            },
        }
    }
}

/// Observation ids of one span, with occurrence counts.
pub type SpanObservations = Vec<(u32, u32)>;

/// A sentence with its lattice and per-span observation ids, ready for
/// repeated scoring.
#[derive(Debug, Clone)]
pub struct CompiledSentence {
    pub lattice: SpanLattice,
    pub observations: Vec<SpanObservations>,
}

/// The feature space of a model: observation strings, conjoined feature
/// strings (the weight dimension) and dense lookup tables between them.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    labels: OutputLabels,
    kind: ModelKind,
    dep_on: bool,
    observations: FeatureIndex,
    features: FeatureIndex,
    // observation id * K + y -> feature id
    emission: Vec<u32>,
    // (K + 1) x (K + 1), index K = BOS as previous / EOS as next
    transition: Vec<u32>,
}

impl FeatureSpace {
    pub fn new(labels: OutputLabels, kind: ModelKind, dep_on: bool) -> Self {
        let k = labels.len();
        FeatureSpace {
            labels,
            kind,
            dep_on,
            observations: FeatureIndex::new(),
            features: FeatureIndex::new(),
            emission: Vec::new(),
            transition: vec![NONE; (k + 1) * (k + 1)],
        }
    }

    /// Rebuilds a frozen space from the conjoined feature names of a model.
    pub fn from_feature_names(labels: OutputLabels, kind: ModelKind, dep_on: bool, names: Vec<String>) -> Result<Self> {
        let mut space = FeatureSpace::new(labels, kind, dep_on);
        let k = space.labels.len();
        space.features = FeatureIndex::from_names(names)?;
        for id in 0..space.features.len() as u32 {
            let name = space.features.name(id).to_string();
            if let Some(pair) = name.strip_prefix("tr=") {
                let (a, b) = pair
                    .split_once('+')
                    .ok_or_else(|| Error::Model(format!("malformed transition feature {name:?}")))?;
                let a = if a == BOS { Some(k) } else { space.labels.id(a) };
                let b = if b == EOS { Some(k) } else { space.labels.id(b) };
                match (a, b) {
                    (Some(a), Some(b)) => space.transition[a * (k + 1) + b] = id,
                    _ => return Err(Error::Model(format!("unknown label in {name:?}"))),
                }
            } else {
                let (obs, y) = name
                    .rsplit_once('|')
                    .ok_or_else(|| Error::Model(format!("malformed feature {name:?}")))?;
                let y = space
                    .labels
                    .id(y)
                    .ok_or_else(|| Error::Model(format!("unknown label in {name:?}")))?;
                space.observations.frozen = false;
                let o = space.observations.intern(obs).expect("unfrozen") as usize;
                if space.emission.len() < (o + 1) * k {
                    space.emission.resize((o + 1) * k, NONE);
                }
                space.emission[o * k + y] = id;
            }
        }
        space.freeze();
        Ok(space)
    }

    pub fn labels(&self) -> &OutputLabels {
        &self.labels
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dep_features(&self) -> bool {
        self.dep_on
    }

    pub fn features(&self) -> &FeatureIndex {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn freeze(&mut self) {
        self.observations.freeze();
        self.features.freeze();
    }

    pub fn is_frozen(&self) -> bool {
        self.features.is_frozen()
    }

    fn observation_strings(&self, sentence: &Sentence, span: Span) -> Result<Vec<String>> {
        if self.kind == ModelKind::Linear {
            if span.len() != 1 {
                return Err(Error::OutOfRange(format!(
                    "linear model factor over ({},{})",
                    span.start, span.end
                )));
            }
            linear_templates(sentence, span.start, self.dep_on)
        } else {
            segment_templates(sentence, span.start, span.end, self.dep_on)
        }
    }

    fn intern_emission(&mut self, obs_id: u32, obs: &str, y: usize) -> u32 {
        let k = self.labels.len();
        let slot = obs_id as usize * k + y;
        if self.emission.len() <= slot {
            self.emission.resize((obs_id as usize + 1) * k, NONE);
        }
        if self.emission[slot] == NONE {
            let name = emission_template(obs, &self.labels.names[y]);
            if let Some(id) = self.features.intern(&name) {
                self.emission[slot] = id;
            }
        }
        self.emission[slot]
    }

    fn intern_transition(&mut self, prev: usize, next: usize) -> u32 {
        let k = self.labels.len();
        let slot = prev * (k + 1) + next;
        if self.transition[slot] == NONE {
            let a = if prev == k { BOS } else { self.labels.names[prev].as_str() };
            let b = if next == k { EOS } else { self.labels.names[next].as_str() };
            let name = transition_template(a, b);
            if let Some(id) = self.features.intern(&name) {
                self.transition[slot] = id;
            }
        }
        self.transition[slot]
    }

    /// Extracts observations for every span of `lattice`. Unless the space
    /// is frozen, features are allocated for every admissible
    /// `(observation, label)` and transition pair.
    pub fn compile(&mut self, sentence: &Sentence, lattice: SpanLattice) -> Result<CompiledSentence> {
        if self.is_frozen() {
            return self.compile_frozen(sentence, lattice);
        }
        let k = self.labels.len();
        let mut observations = Vec::with_capacity(lattice.len());
        for &span in lattice.spans() {
            let strings = self.observation_strings(sentence, span)?;
            let mut ids = Vec::with_capacity(strings.len());
            for s in &strings {
                if let Some(o) = self.observations.intern(s) {
                    ids.push(o);
                    for y in 0..k {
                        if self.labels.allows_span(y, span.len()) {
                            self.intern_emission(o, s, y);
                        }
                    }
                }
            }
            observations.push(FeatureVector::from_ids(ids).0);
        }
        for y in 0..k {
            if self.labels.allows_transition(None, y) {
                self.intern_transition(k, y);
            }
            self.intern_transition(y, k);
            for yp in 0..k {
                if self.labels.allows_transition(Some(yp), y) {
                    self.intern_transition(yp, y);
                }
            }
        }
        Ok(CompiledSentence { lattice, observations })
    }

    /// Like [`compile`](Self::compile) but never allocates; unseen
    /// observations are dropped.
    pub fn compile_frozen(&self, sentence: &Sentence, lattice: SpanLattice) -> Result<CompiledSentence> {
        let mut observations = Vec::with_capacity(lattice.len());
        for &span in lattice.spans() {
            let strings = self.observation_strings(sentence, span)?;
            let ids = strings.iter().filter_map(|s| self.observations.get(s));
            observations.push(FeatureVector::from_ids(ids).0);
        }
        Ok(CompiledSentence { lattice, observations })
    }

    /// Feature id of `(observation, y)`, if allocated.
    #[inline]
    pub fn emission_id(&self, obs: u32, y: usize) -> Option<u32> {
        let k = self.labels.len();
        match self.emission.get(obs as usize * k + y) {
            Some(&id) if id != NONE => Some(id),
            _ => None,
        }
    }

    /// Feature id of the transition `y_prev -> y`; `None` labels are the
    /// begin and end sentinels.
    #[inline]
    pub fn transition_id(&self, y_prev: Option<usize>, y: Option<usize>) -> Option<u32> {
        let k = self.labels.len();
        let id = self.transition[y_prev.unwrap_or(k) * (k + 1) + y.unwrap_or(k)];
        (id != NONE).then_some(id)
    }

    /// Feature vector of one factor, assembled through the string templates.
    pub fn factor_features(
        &mut self,
        sentence: &Sentence,
        span: Span,
        y_prev: Option<usize>,
        y: usize,
    ) -> Result<FeatureVector> {
        let prev = y_prev.map_or(BOS.to_string(), |p| self.labels.names[p].clone());
        let label = self.labels.names[y].clone();
        let dep_on = self.dep_on;
        if self.kind == ModelKind::Linear {
            linear_features(&mut self.features, sentence, span.start, &prev, &label, dep_on)
        } else {
            segment_features(&mut self.features, sentence, span, &prev, &label, dep_on)
        }
    }
}
