//! Exhaustive counting of valid spans over all labelled trees.
//!
//! Brute force over Prüfer sequences is the ground truth here. The closed
//! forms are evaluated in exact rational arithmetic and compared against it;
//! mismatches are reported as [`Discrepancy`] records.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice;

/// Largest tree size accepted by the exhaustive routines.
pub const MAX_ENUMERATION_N: usize = 8;

/// An undirected tree on nodes `1..=n`, edges stored as sorted `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledTree {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl LabeledTree {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        edges.dedup();
        if n == 0 || edges.len() != n - 1 || edges.iter().any(|&(a, b)| a == 0 || b > n || a == b) {
            return Err(Error::Tree(format!("{} edges do not form a tree on {n} nodes", edges.len())));
        }
        let tree = LabeledTree { n, edges };
        let adj = tree.adjacency();
        let mut seen = vec![false; n + 1];
        let mut stack = vec![1];
        seen[1] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(Error::Tree("edges are not connected".into()));
        }
        Ok(tree)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbour lists indexed by node; slot 0 is empty.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + 1];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Multi-word valid spans with no length limit.
    pub fn valid_multiword_spans(&self) -> Vec<(usize, usize)> {
        lattice::dgm_multiword_spans(&self.adjacency(), self.n)
    }
}

/// Decodes a Prüfer sequence (entries in `1..=n`) into a tree on `n` nodes.
pub fn prufer_decode(seq: &[usize], n: usize) -> Result<LabeledTree> {
    if n < 2 || seq.len() != n - 2 || seq.iter().any(|&x| x == 0 || x > n) {
        return Err(Error::InvalidInput(format!("invalid Prüfer sequence {seq:?} for n = {n}")));
    }
    let mut degree = vec![1usize; n + 1];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        let leaf = (1..=n).find(|&v| degree[v] == 1).expect("a tree always has a leaf");
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (1..=n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    LabeledTree::new(n, edges)
}

/// Prüfer sequence of a tree: repeatedly remove the smallest leaf.
pub fn prufer_encode(tree: &LabeledTree) -> Vec<usize> {
    let n = tree.n;
    let mut adj: Vec<Vec<usize>> = tree.adjacency();
    let mut removed = vec![false; n + 1];
    let mut seq = Vec::with_capacity(n.saturating_sub(2));
    for _ in 0..n.saturating_sub(2) {
        let leaf = (1..=n)
            .find(|&v| !removed[v] && adj[v].iter().filter(|&&w| !removed[w]).count() == 1)
            .expect("a tree always has a leaf");
        let parent = *adj[leaf].iter().find(|&&w| !removed[w]).expect("leaf has a neighbour");
        seq.push(parent);
        removed[leaf] = true;
        adj[leaf].clear();
    }
    seq
}

fn check_n(n: usize) -> Result<()> {
    if !(2..=MAX_ENUMERATION_N).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "tree size {n} outside the supported range 2..={MAX_ENUMERATION_N}"
        )));
    }
    Ok(())
}

/// Iterates over all `n^(n-2)` Prüfer sequences in lexicographic order.
pub struct PruferSequences {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for PruferSequences {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n {
                next[i] += 1;
                self.current = Some(next);
                break;
            }
            next[i] = 1;
        }
        Some(out)
    }
}

pub fn prufer_sequences(n: usize) -> PruferSequences {
    PruferSequences {
        n,
        current: Some(vec![1; n.saturating_sub(2)]),
    }
}

/// Every labelled tree on `n` nodes exactly once.
pub fn enumerate_trees(n: usize) -> Result<impl Iterator<Item = LabeledTree>> {
    check_n(n)?;
    Ok(prufer_sequences(n).map(move |seq| prufer_decode(&seq, n).expect("generated sequences are valid")))
}

/// A uniformly random labelled tree on `n >= 2` nodes.
pub fn random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LabeledTree {
    assert!(n >= 1);
    if n == 1 {
        return LabeledTree { n: 1, edges: Vec::new() };
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(1..=n)).collect();
    prufer_decode(&seq, n).expect("random sequence is valid")
}

/// Brute-force span counts over all trees on `n` nodes.
#[derive(Debug, Clone)]
pub struct SpanCensus {
    pub n: usize,
    pub trees: u64,
    /// `pair_counts[u][v]`: number of trees in which `(u, v)`, `u < v`, is valid.
    pub pair_counts: Vec<Vec<u64>>,
}

impl SpanCensus {
    pub fn compute(n: usize) -> Result<Self> {
        let mut pair_counts = vec![vec![0u64; n + 1]; n + 1];
        let mut trees = 0;
        for tree in enumerate_trees(n)? {
            trees += 1;
            for (u, v) in tree.valid_multiword_spans() {
                pair_counts[u][v] += 1;
            }
        }
        Ok(SpanCensus { n, trees, pair_counts })
    }

    /// Valid spans of every length summed over all trees, singletons included.
    pub fn total_valid_spans(&self) -> u64 {
        self.trees * self.n as u64 + self.multiword_spans(self.n)
    }

    /// Multi-word valid spans of length at most `max_len` over all trees.
    pub fn multiword_spans(&self, max_len: usize) -> u64 {
        let mut total = 0;
        for u in 1..=self.n {
            for v in u + 1..=self.n {
                if v - u < max_len {
                    total += self.pair_counts[u][v];
                }
            }
        }
        total
    }
}

pub fn total_valid_spans(n: usize) -> Result<u64> {
    Ok(SpanCensus::compute(n)?.total_valid_spans())
}

fn int(x: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(x.into())
}

fn pow(base: &BigRational, exp: i64) -> BigRational {
    if exp >= 0 {
        num_traits::pow(base.clone(), exp as usize)
    } else {
        num_traits::pow(base.recip(), (-exp) as usize)
    }
}

/// `(n+1)^(n-1)`: number of labelled trees on `n + 1` nodes.
pub fn trees_on_successor(n: usize) -> BigInt {
    num_traits::pow(BigInt::from(n + 1), n - 1)
}

/// Closed form for the number of multi-word valid spans of length at most
/// `max_len`, summed over all trees on `n` nodes:
/// `n^(n-2)/(n+1) * [(n^2 + L(n-L+1))(1+1/n)^(L-1) - n(n+1)]`.
pub fn closed_form_f(n: usize, max_len: usize) -> Result<BigRational> {
    if n < 2 || max_len == 0 || max_len > n {
        return Err(Error::InvalidInput(format!("closed form needs 1 <= L <= n, n >= 2 (n = {n}, L = {max_len})")));
    }
    if max_len == 1 {
        return Ok(BigRational::zero());
    }
    let nn = int(n as i64);
    let l = int(max_len as i64);
    let ratio = BigRational::one() + nn.recip();
    let lead = pow(&nn, n as i64 - 2) / (nn.clone() + BigRational::one());
    let bracket = (nn.clone() * nn.clone() + l.clone() * (nn.clone() - l + BigRational::one())) * pow(&ratio, max_len as i64 - 1)
        - nn.clone() * (nn + BigRational::one());
    Ok(lead * bracket)
}

/// Closed form for the number of trees in which `(u, v)` is a valid span:
/// `n^(n-3) * (2n+1+v-u)/(n+1) * (1+1/n)^(v-u-1)`.
pub fn closed_form_f_n(n: usize, u: usize, v: usize) -> Result<BigRational> {
    if n < 3 || !(1 <= u && u < v && v <= n) {
        return Err(Error::InvalidInput(format!("need n >= 3 and 1 <= u < v <= n (n = {n}, u = {u}, v = {v})")));
    }
    let nn = int(n as i64);
    let d = (v - u) as i64;
    let ratio = BigRational::one() + nn.recip();
    Ok(pow(&nn, n as i64 - 3) * (int(2 * n as i64 + 1 + d) / int(n as i64 + 1)) * pow(&ratio, d - 1))
}

/// The `f_n(u, v)` closed form as an integer; a non-integer value signals
/// a transcription error in the formula.
pub fn f_n_count(n: usize, u: usize, v: usize) -> Result<u64> {
    let value = closed_form_f_n(n, u, v)?;
    if !value.is_integer() {
        return Err(Error::Invariant(format!("f_{n}({u},{v}) evaluates to non-integer {value}")));
    }
    value
        .to_integer()
        .to_u64()
        .ok_or_else(|| Error::Invariant(format!("f_{n}({u},{v}) = {value} does not fit a count")))
}

/// Mean number of valid spans per tree, from brute force.
pub fn average_valid_spans(n: usize) -> Result<BigRational> {
    let census = SpanCensus::compute(n)?;
    Ok(BigRational::new(BigInt::from(census.total_valid_spans()), BigInt::from(census.trees)))
}

/// `n (1 + 1/n)^(n-1)`.
pub fn average_valid_spans_closed_form(n: usize) -> BigRational {
    let nn = int(n as i64);
    let ratio = BigRational::one() + nn.recip();
    nn * pow(&ratio, n as i64 - 1)
}

/// Maps valid span `(u, v)` of `tree` to a tree on `n + 1` nodes: the
/// chain edges from `u` to `v` are removed and every chain node is attached
/// to node `n + 1` instead.
pub fn span_to_tree(tree: &LabeledTree, u: usize, v: usize) -> Result<LabeledTree> {
    let n = tree.n;
    let chain = increasing_chain(tree, u, v).ok_or_else(|| Error::InvalidInput(format!("({u},{v}) is not a valid span")))?;
    let chain_edges: Vec<(usize, usize)> = chain.windows(2).map(|w| (w[0], w[1])).collect();
    let edges = tree
        .edges
        .iter()
        .copied()
        .filter(|e| !chain_edges.contains(e))
        .chain(chain.iter().map(|&c| (c, n + 1)));
    LabeledTree::new(n + 1, edges)
}

/// Inverse of [`span_to_tree`].
pub fn tree_to_span(big: &LabeledTree) -> Result<(LabeledTree, usize, usize)> {
    let m = big.n;
    if m < 2 {
        return Err(Error::InvalidInput("need at least two nodes".into()));
    }
    let mut attached: Vec<usize> = big
        .edges
        .iter()
        .filter(|&&(_, b)| b == m)
        .map(|&(a, _)| a)
        .collect();
    attached.sort_unstable();
    let edges = big
        .edges
        .iter()
        .copied()
        .filter(|&(_, b)| b != m)
        .chain(attached.windows(2).map(|w| (w[0], w[1])));
    let tree = LabeledTree::new(m - 1, edges)?;
    Ok((tree, attached[0], *attached.last().expect("node m has a neighbour")))
}

fn increasing_chain(tree: &LabeledTree, u: usize, v: usize) -> Option<Vec<usize>> {
    if u == v {
        return Some(vec![u]);
    }
    let adj = tree.adjacency();
    // the tree path is unique, so follow increasing arcs depth-first
    let mut stack = vec![vec![u]];
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty");
        if last == v {
            return Some(path);
        }
        for &x in &adj[last] {
            if x > last && x <= v {
                let mut p = path.clone();
                p.push(x);
                stack.push(p);
            }
        }
    }
    None
}

/// A closed form that disagrees with brute force.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub identity: String,
    pub params: String,
    pub closed_form: BigRational,
    pub brute_force: BigRational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub identity: &'static str,
    pub params: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<IdentityCheck>,
    pub discrepancies: Vec<Discrepancy>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn record(&mut self, identity: &'static str, params: String, closed: BigRational, brute: BigRational) {
        let pass = closed == brute;
        if !pass {
            self.discrepancies.push(Discrepancy {
                identity: identity.to_string(),
                params: params.clone(),
                closed_form: closed.clone(),
                brute_force: brute.clone(),
            });
        }
        self.checks.push(IdentityCheck {
            identity,
            params,
            expected: closed.to_string(),
            actual: brute.to_string(),
            pass,
        });
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<28} {:<14} {:>22} {:>22}  result\n", "identity", "params", "closed form", "brute force");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<28} {:<14} {:>22} {:>22}  {}\n",
                c.identity,
                c.params,
                c.expected,
                c.actual,
                if c.pass { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Runs every counting identity for `2 <= n <= max_n`.
pub fn verify_identities(max_n: usize) -> Result<VerificationReport> {
    check_n(max_n)?;
    let mut report = VerificationReport::default();
    let e = std::f64::consts::E;
    for n in 2..=max_n {
        let census = SpanCensus::compute(n)?;
        report.record(
            "total = (n+1)^(n-1)",
            format!("n={n}"),
            BigRational::from_integer(trees_on_successor(n)),
            int(census.total_valid_spans() as i64),
        );
        for l in 2..=n {
            report.record(
                "F(n,L)",
                format!("n={n} L={l}"),
                closed_form_f(n, l)?,
                int(census.multiword_spans(l) as i64),
            );
        }
        report.record(
            "F(n,n) = (n+1)^(n-1)-n^(n-1)",
            format!("n={n}"),
            BigRational::from_integer(trees_on_successor(n) - num_traits::pow(BigInt::from(n), n - 1)),
            int(census.multiword_spans(n) as i64),
        );
        let average = BigRational::new(BigInt::from(census.total_valid_spans()), BigInt::from(census.trees));
        report.record("average = n(1+1/n)^(n-1)", format!("n={n}"), average_valid_spans_closed_form(n), average.clone());
        let avg = average.to_f64().unwrap_or(f64::INFINITY);
        report.checks.push(IdentityCheck {
            identity: "average < e*n",
            params: format!("n={n}"),
            expected: format!("< {:.6}", e * n as f64),
            actual: format!("{avg:.6}"),
            pass: avg < e * n as f64,
        });
        if n >= 3 {
            for u in 1..n {
                for v in u + 1..=n {
                    report.record(
                        "f_n(u,v)",
                        format!("n={n} u={u} v={v}"),
                        closed_form_f_n(n, u, v)?,
                        int(census.pair_counts[u][v] as i64),
                    );
                }
            }
        }
    }
    Ok(report)
}

/// One row of the average-valid-span curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub average_closed_form: f64,
    /// Brute-force average, for `n` within the enumeration range.
    pub average_brute_force: Option<f64>,
    pub e_times_n: f64,
    pub semi_spans: usize,
}

pub fn edges_curve(max_n: usize, brute_force_up_to: usize) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for n in 2..=max_n {
        let brute = if n <= brute_force_up_to.min(MAX_ENUMERATION_N) {
            average_valid_spans(n)?.to_f64()
        } else {
            None
        };
        out.push(CurvePoint {
            n,
            average_closed_form: average_valid_spans_closed_form(n).to_f64().unwrap_or(f64::NAN),
            average_brute_force: brute,
            e_times_n: std::f64::consts::E * n as f64,
            semi_spans: n * (n + 1) / 2,
        });
    }
    Ok(out)
}
