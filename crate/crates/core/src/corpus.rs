//! Annotated sentences, CoNLL-style I/O and dataset statistics.
//!
//! The on-disk format is one token per line with at least six tab-separated
//! columns: `index surface pos head deprel ner`. NER tags use IOB2. Sentences
//! are separated by blank lines and lines starting with `#` are skipped. A
//! seventh column, when present, holds predicted tags.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, Mode};

/// The non-entity label.
pub const OUTSIDE: &str = "O";

/// Strings reserved for feature boundary sentinels.
pub const RESERVED_SURFACES: [&str; 3] = ["<BOS>", "<EOS>", "<ROOT>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: String,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            pos: pos.into(),
        }
    }
}

/// A dependency tree over tokens `1..=n`. Head `0` is the artificial root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyTree {
    heads: Vec<usize>,
    labels: Vec<String>,
}

impl DependencyTree {
    /// Validates that `heads` describes a single tree rooted at exactly one
    /// token. Non-projective trees are accepted.
    pub fn new(heads: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let n = heads.len();
        if labels.len() != n {
            return Err(Error::Tree(format!(
                "{} heads but {} labels",
                n,
                labels.len()
            )));
        }
        let roots = heads.iter().filter(|&&h| h == 0).count();
        if n > 0 && roots != 1 {
            return Err(Error::Tree(format!(
                "expected exactly one root token, found {roots}"
            )));
        }
        for (i, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(Error::Tree(format!(
                    "head {h} of token {} is out of range 0..={n}",
                    i + 1
                )));
            }
            if h == i + 1 {
                return Err(Error::Tree(format!("token {h} is its own head")));
            }
        }
        // Every token must reach the root by following heads.
        let mut state = vec![0u8; n + 1]; // 0 unvisited, 1 on stack, 2 done
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while cur != 0 && state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = heads[cur - 1];
            }
            if cur != 0 && state[cur] == 1 {
                return Err(Error::Tree(format!(
                    "cycle through token {cur}; heads are not connected to the root"
                )));
            }
            for p in path {
                state[p] = 2;
            }
        }
        Ok(DependencyTree { heads, labels })
    }

    /// Builds a tree from undirected edges over `1..=n` by orienting every
    /// edge away from `root`. Relation labels are all `label`.
    pub fn from_undirected(n: usize, edges: &[(usize, usize)], root: usize, label: &str) -> Result<Self> {
        let mut adj = vec![Vec::new(); n + 1];
        for &(a, b) in edges {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::Tree(format!("edge ({a},{b}) out of range")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut heads = vec![usize::MAX; n];
        let mut stack = vec![root];
        heads[root - 1] = 0;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if heads[v - 1] == usize::MAX {
                    heads[v - 1] = u;
                    stack.push(v);
                }
            }
        }
        if heads.iter().any(|&h| h == usize::MAX) {
            return Err(Error::Tree("edges do not connect all nodes".into()));
        }
        let mut labels = vec![label.to_string(); n];
        labels[root - 1] = "root".into();
        DependencyTree::new(heads, labels)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of token `i` (1-based); 0 for the root.
    pub fn head(&self, i: usize) -> usize {
        self.heads[i - 1]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i - 1]
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Undirected arcs as `(min, max)` pairs.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.heads
            .iter()
            .enumerate()
            .filter(|(_, &h)| h != 0)
            .map(|(i, &h)| ((i + 1).min(h), (i + 1).max(h)))
    }

    /// Neighbour lists indexed by 1-based token position; slot 0 is empty.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len() + 1];
        for (a, b) in self.arcs() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// An entity over tokens `start..=end`, 1-based and inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub etype: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, etype: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            etype: etype.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub tree: DependencyTree,
    pub gold: Vec<EntitySpan>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>, tree: DependencyTree, mut gold: Vec<EntitySpan>) -> Result<Self> {
        if tokens.len() != tree.len() {
            return Err(Error::Sentence(format!(
                "{} tokens but tree over {} nodes",
                tokens.len(),
                tree.len()
            )));
        }
        for t in &tokens {
            if t.surface.is_empty() || t.pos.is_empty() {
                return Err(Error::Sentence("empty surface or POS".into()));
            }
            if RESERVED_SURFACES.contains(&t.surface.as_str()) {
                return Err(Error::Sentence(format!("reserved surface form {}", t.surface)));
            }
        }
        gold.sort();
        check_spans(&gold, tokens.len())?;
        Ok(Sentence { tokens, tree, gold })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at 1-based position `i`.
    pub fn token(&self, i: usize) -> &Token {
        &self.tokens[i - 1]
    }
}

/// Checks that spans are in range, typed, sorted and non-overlapping.
pub fn check_spans(spans: &[EntitySpan], n: usize) -> Result<()> {
    let mut last_end = 0;
    for s in spans {
        if s.start < 1 || s.start > s.end || s.end > n {
            return Err(Error::OutOfRange(format!(
                "span ({},{}) in sentence of length {n}",
                s.start, s.end
            )));
        }
        if s.etype.is_empty() || s.etype == OUTSIDE {
            return Err(Error::Sentence(format!("invalid entity type {:?}", s.etype)));
        }
        if s.start <= last_end {
            return Err(Error::Sentence(format!(
                "span ({},{}) overlaps a previous span",
                s.start, s.end
            )));
        }
        last_end = s.end;
    }
    Ok(())
}

/// Entity types plus the distinguished `O` label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    entity_types: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entity_types = Vec::new();
        for t in types {
            let t = t.into();
            if t.is_empty() || t == OUTSIDE || t.contains(['|', '+', '\t', ' ']) {
                return Err(Error::InvalidInput(format!("invalid entity type {t:?}")));
            }
            if !entity_types.contains(&t) {
                entity_types.push(t);
            }
        }
        Ok(LabelSet { entity_types })
    }

    /// Collects the entity types seen in gold spans, sorted.
    pub fn from_sentences(sentences: &[Sentence]) -> Result<Self> {
        let types: BTreeSet<&str> = sentences
            .iter()
            .flat_map(|s| s.gold.iter().map(|e| e.etype.as_str()))
            .collect();
        LabelSet::new(types)
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    /// |T|: entity types plus `O`.
    pub fn num_labels(&self) -> usize {
        self.entity_types.len() + 1
    }

    /// Segment-level output labels: `O` first, then entity types.
    pub fn segment_labels(&self) -> Vec<String> {
        std::iter::once(OUTSIDE.to_string())
            .chain(self.entity_types.iter().cloned())
            .collect()
    }

    /// Token-level IOB2 labels: `O`, then `B-X`, `I-X` per type.
    pub fn iob_labels(&self) -> Vec<String> {
        let mut out = vec![OUTSIDE.to_string()];
        for t in &self.entity_types {
            out.push(format!("B-{t}"));
            out.push(format!("I-{t}"));
        }
        out
    }

    pub fn type_id(&self, etype: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == etype)
    }
}

/// Decodes IOB2 tags into spans. An `I-X` that does not continue an `X`
/// entity is promoted to `B-X`; the number of repairs is returned.
pub fn iob_to_spans<S: AsRef<str>>(tags: &[S]) -> Result<(Vec<EntitySpan>, usize)> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open: Option<EntitySpan> = None;
    let mut repairs = 0;
    for (i, tag) in tags.iter().enumerate() {
        let pos = i + 1;
        let tag = tag.as_ref();
        if tag == OUTSIDE {
            spans.extend(open.take());
        } else if let Some(t) = tag.strip_prefix("B-") {
            spans.extend(open.take());
            open = Some(EntitySpan::new(pos, pos, check_type(t, tag)?));
        } else if let Some(t) = tag.strip_prefix("I-") {
            let t = check_type(t, tag)?;
            match open.as_mut() {
                Some(e) if e.etype == t => e.end = pos,
                _ => {
                    repairs += 1;
                    spans.extend(open.take());
                    open = Some(EntitySpan::new(pos, pos, t));
                }
            }
        } else {
            return Err(Error::InvalidInput(format!("malformed IOB2 tag {tag:?}")));
        }
    }
    spans.extend(open);
    Ok((spans, repairs))
}

fn check_type<'a>(t: &'a str, tag: &str) -> Result<&'a str> {
    if t.is_empty() || t == OUTSIDE {
        Err(Error::InvalidInput(format!("malformed IOB2 tag {tag:?}")))
    } else {
        Ok(t)
    }
}

/// Encodes spans as IOB2 tags over `n` tokens.
pub fn spans_to_iob(spans: &[EntitySpan], n: usize) -> Result<Vec<String>> {
    let mut tags = vec![OUTSIDE.to_string(); n];
    for s in spans {
        if s.start < 1 || s.start > s.end || s.end > n {
            return Err(Error::Serialize(format!(
                "span ({},{}) out of range for {n} tokens",
                s.start, s.end
            )));
        }
        for p in s.start..=s.end {
            if tags[p - 1] != OUTSIDE {
                return Err(Error::Serialize(format!(
                    "span ({},{}) overlaps another span",
                    s.start, s.end
                )));
            }
            let prefix = if p == s.start { "B" } else { "I" };
            tags[p - 1] = format!("{prefix}-{}", s.etype);
        }
    }
    Ok(tags)
}

/// Column (0-based) holding the tags read into `Sentence::gold`.
pub const GOLD_COLUMN: usize = 5;
/// Column (0-based) written by [`write_conll`] for predictions.
pub const PREDICTION_COLUMN: usize = 6;

pub fn read_conll(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    read_conll_column(path, GOLD_COLUMN)
}

/// Reads a CoNLL file taking entity tags from `tag_column` (0-based).
pub fn read_conll_column(path: impl AsRef<Path>, tag_column: usize) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, tag_column)
}

pub fn parse_conll(text: &str, tag_column: usize) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, Vec<&str>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !block.is_empty() {
                sentences.push(build_sentence(&block, tag_column)?);
                block.clear();
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let needed = (tag_column + 1).max(6);
        if cols.len() < needed {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected at least {needed} tab-separated columns, found {}", cols.len()),
            });
        }
        if let Some((first_line, first)) = block.first() {
            if first.len() != cols.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "inconsistent column count: {} here but {} on line {first_line}",
                        cols.len(),
                        first.len()
                    ),
                });
            }
        }
        block.push((lineno, cols));
    }
    if !block.is_empty() {
        sentences.push(build_sentence(&block, tag_column)?);
    }
    Ok(sentences)
}

fn build_sentence(block: &[(usize, Vec<&str>)], tag_column: usize) -> Result<Sentence> {
    let n = block.len();
    let first_line = block[0].0;
    let mut tokens = Vec::with_capacity(n);
    let mut heads = Vec::with_capacity(n);
    let mut deprels = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    for (k, (line, cols)) in block.iter().enumerate() {
        let parse_err = |message: String| Error::Parse { line: *line, message };
        match cols[0].trim().parse::<usize>() {
            Ok(idx) if idx == k + 1 => {}
            _ => return Err(parse_err(format!("token index {:?}, expected {}", cols[0], k + 1))),
        }
        let surface = cols[1];
        let pos = cols[2];
        if surface.is_empty() || pos.is_empty() {
            return Err(parse_err("empty surface or POS column".into()));
        }
        if RESERVED_SURFACES.contains(&surface) {
            return Err(parse_err(format!("reserved surface form {surface}")));
        }
        let head: usize = cols[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("non-integer head {:?}", cols[3])))?;
        if head > n {
            return Err(parse_err(format!("head {head} out of range 0..={n}")));
        }
        tokens.push(Token::new(surface, pos));
        heads.push(head);
        deprels.push(cols[4].to_string());
        tags.push(cols[tag_column].trim());
    }
    let tree = DependencyTree::new(heads, deprels).map_err(|e| Error::Parse {
        line: first_line,
        message: e.to_string(),
    })?;
    let (gold, repairs) = iob_to_spans(&tags).map_err(|e| Error::Parse {
        line: first_line,
        message: e.to_string(),
    })?;
    if repairs > 0 {
        log::warn!("sentence at line {first_line}: promoted {repairs} stray I- tag(s) to B-");
    }
    Sentence::new(tokens, tree, gold).map_err(|e| Error::Parse {
        line: first_line,
        message: e.to_string(),
    })
}

/// Renders sentences with their gold tags and a prediction column.
pub fn format_conll(sentences: &[Sentence], predictions: &[Vec<EntitySpan>]) -> Result<String> {
    if sentences.len() != predictions.len() {
        return Err(Error::Serialize(format!(
            "{} sentences but {} prediction lists",
            sentences.len(),
            predictions.len()
        )));
    }
    let mut out = String::new();
    for (sent, pred) in sentences.iter().zip(predictions) {
        let gold_tags = spans_to_iob(&sent.gold, sent.len())?;
        let pred_tags = spans_to_iob(pred, sent.len())?;
        for i in 1..=sent.len() {
            let tok = sent.token(i);
            writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{}\t{}\t{}",
                tok.surface,
                tok.pos,
                sent.tree.head(i),
                sent.tree.label(i),
                gold_tags[i - 1],
                pred_tags[i - 1]
            )
            .expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_conll(sentences: &[Sentence], predictions: &[Vec<EntitySpan>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_conll(sentences, predictions)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Representability {
    pub total: usize,
    pub representable: usize,
}

impl Representability {
    /// Share of representable entities in percent; 100 for an empty corpus.
    pub fn percentage(&self) -> f64 {
        if self.total == 0 {
            100.0
        } else {
            100.0 * self.representable as f64 / self.total as f64
        }
    }
}

/// Counts gold entities whose span is allowed by the lattice of `mode`.
pub fn representability_stats(sentences: &[Sentence], mode: Mode) -> Representability {
    let mut stats = Representability {
        total: 0,
        representable: 0,
    };
    for s in sentences {
        let lat = lattice::build_lattice(s, mode);
        for e in &s.gold {
            stats.total += 1;
            if mode.is_linear() || lat.contains(e.start, e.end) {
                stats.representable += 1;
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ModelKind;

    fn conll(rows: &[(&str, &str, usize, &str, &str)]) -> String {
        let mut s = String::new();
        for (i, (w, p, h, d, t)) in rows.iter().enumerate() {
            s.push_str(&format!("{}\t{w}\t{p}\t{h}\t{d}\t{t}\n", i + 1));
        }
        s.push('\n');
        s
    }

    #[test]
    fn reads_award_sentence_prefix() {
        let text = conll(&[
            ("Foreign", "NNP", 2, "compound", "O"),
            ("Minister", "NNP", 4, "compound", "O"),
            ("Shlomo", "NNP", 4, "compound", "B-PER"),
            ("Ben", "NNP", 0, "root", "I-PER"),
        ]);
        let sents = parse_conll(&text, GOLD_COLUMN).unwrap();
        assert_eq!(sents.len(), 1);
        assert_eq!(sents[0].gold, vec![EntitySpan::new(3, 4, "PER")]);
    }

    #[test]
    fn empty_input_gives_no_sentences() {
        assert!(parse_conll("", GOLD_COLUMN).unwrap().is_empty());
        assert!(parse_conll("# only a comment\n\n\n", GOLD_COLUMN).unwrap().is_empty());
    }

    #[test]
    fn stray_inside_tag_is_promoted() {
        let (spans, repairs) = iob_to_spans(&["B-PER", "I-ORG"]).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(1, 1, "PER"), EntitySpan::new(2, 2, "ORG")]);
        assert_eq!(repairs, 1);
        let (spans, repairs) = iob_to_spans(&["O", "I-LOC", "I-LOC"]).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(2, 3, "LOC")]);
        assert_eq!(repairs, 1);
    }

    #[test]
    fn iob_encoding() {
        let tags = spans_to_iob(&[EntitySpan::new(1, 3, "PER")], 4).unwrap();
        assert_eq!(tags, ["B-PER", "I-PER", "I-PER", "O"]);
        assert_eq!(spans_to_iob(&[], 3).unwrap(), ["O", "O", "O"]);
        assert!(matches!(
            spans_to_iob(&[EntitySpan::new(2, 5, "PER")], 4),
            Err(Error::Serialize(_))
        ));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad_head = "1\ta\tDT\tx\tdet\tO\n";
        match parse_conll(bad_head, GOLD_COLUMN) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let out_of_range = "1\ta\tDT\t0\troot\tO\n2\tb\tNN\t7\tdep\tO\n";
        match parse_conll(out_of_range, GOLD_COLUMN) {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("out of range")),
            other => panic!("unexpected {other:?}"),
        }
        let cyclic = "# c\n1\ta\tDT\t2\tdet\tO\n2\tb\tNN\t1\tdep\tO\n3\tc\tVB\t0\troot\tO\n";
        match parse_conll(cyclic, GOLD_COLUMN) {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("root") || message.contains("cycle")),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "1\ta\tDT\t0\troot\tO\n2\tb\tNN\t1\tdep\tO\textra\n";
        assert!(matches!(parse_conll(ragged, GOLD_COLUMN), Err(Error::Parse { line: 2, .. })));
        let short = "1\ta\tDT\t0\troot\n";
        assert!(matches!(parse_conll(short, GOLD_COLUMN), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tree_validation() {
        assert!(DependencyTree::new(vec![0, 1, 2], vec!["a".into(); 3]).is_ok());
        assert!(DependencyTree::new(vec![0, 0], vec!["a".into(); 2]).is_err());
        assert!(DependencyTree::new(vec![2, 3, 2], vec!["a".into(); 3]).is_err());
        assert!(DependencyTree::new(vec![0, 3, 2], vec!["a".into(); 3]).is_err());
        assert!(DependencyTree::new(vec![0, 2], vec!["a".into(); 2]).is_err());
    }

    #[test]
    fn seventh_column_is_tolerated_and_selectable() {
        let text = "1\tA\tNNP\t0\troot\tB-PER\tO\n\n";
        let gold = parse_conll(text, GOLD_COLUMN).unwrap();
        assert_eq!(gold[0].gold.len(), 1);
        let pred = parse_conll(text, PREDICTION_COLUMN).unwrap();
        assert!(pred[0].gold.is_empty());
    }

    #[test]
    fn empty_corpus_is_fully_representable() {
        let r = representability_stats(&[], Mode::new(ModelKind::Dgm, 8));
        assert_eq!((r.total, r.representable), (0, 0));
        assert_eq!(r.percentage(), 100.0);
    }
}
