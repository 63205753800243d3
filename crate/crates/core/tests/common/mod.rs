//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use dgner::corpus::{DependencyTree, EntitySpan, Sentence, Token};
use dgner::inference::ScoredLattice;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random tree by attaching nodes in shuffled order to an earlier node.
pub fn random_heads<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        heads[order[k] - 1] = parent;
    }
    heads
}

pub fn tree_from_heads(heads: &[usize]) -> DependencyTree {
    let labels = heads.iter().map(|&h| if h == 0 { "root" } else { "dep" }.to_string()).collect();
    DependencyTree::new(heads.to_vec(), labels).unwrap()
}

/// Sentence with random surfaces over a tiny vocabulary and no entities.
pub fn random_sentence<R: Rng>(n: usize, rng: &mut R) -> Sentence {
    let heads = random_heads(n, rng);
    let tokens = (0..n)
        .map(|_| {
            let k = rng.gen_range(0..4);
            if rng.gen_bool(0.4) {
                Token::new(format!("Cap{k}"), "NNP")
            } else {
                Token::new(format!("w{k}"), "NN")
            }
        })
        .collect();
    Sentence::new(tokens, tree_from_heads(&heads), Vec::new()).unwrap()
}

/// Adds random non-touching entities drawn from `spans`.
pub fn plant<R: Rng>(sentence: &mut Sentence, spans: &[(usize, usize)], types: &[&str], rng: &mut R) {
    let n = sentence.len();
    let mut used = vec![false; n + 2];
    let mut gold = Vec::new();
    let mut spans = spans.to_vec();
    spans.shuffle(rng);
    for (u, v) in spans {
        if used[u - 1..=v + 1].iter().any(|&b| b) || !rng.gen_bool(0.5) {
            continue;
        }
        used[u..=v].iter_mut().for_each(|b| *b = true);
        gold.push(EntitySpan::new(u, v, *types.choose(rng).unwrap()));
    }
    gold.sort();
    sentence.gold = gold;
}

/// `valid[u][v]`: an increasing chain of tree arcs leads from `u` to `v`.
/// Plain cubic dynamic program over an adjacency matrix.
pub fn increasing_chain_table(heads: &[usize]) -> Vec<Vec<bool>> {
    let n = heads.len();
    let mut adj = vec![vec![false; n + 1]; n + 1];
    for (i, &h) in heads.iter().enumerate() {
        if h != 0 {
            adj[i + 1][h] = true;
            adj[h][i + 1] = true;
        }
    }
    let mut reach = vec![vec![false; n + 1]; n + 1];
    for u in 1..=n {
        reach[u][u] = true;
        for v in u + 1..=n {
            reach[u][v] = adj[u][v] || (u + 1..v).any(|c| reach[u][c] && adj[c][v]);
        }
    }
    reach
}

pub fn oracle_dgm_spans(heads: &[usize], max_len: usize) -> BTreeSet<(usize, usize)> {
    let reach = increasing_chain_table(heads);
    let n = heads.len();
    let mut out = BTreeSet::new();
    for u in 1..=n {
        for v in u..=n {
            if v - u < max_len && reach[u][v] {
                out.insert((u, v));
            }
        }
    }
    out
}

pub fn oracle_single_arc_spans(heads: &[usize], max_len: usize) -> BTreeSet<(usize, usize)> {
    let n = heads.len();
    let mut out: BTreeSet<(usize, usize)> = (1..=n).map(|i| (i, i)).collect();
    for (i, &h) in heads.iter().enumerate() {
        if h != 0 {
            let (a, b) = ((i + 1).min(h), (i + 1).max(h));
            if b - a < max_len {
                out.insert((a, b));
            }
        }
    }
    out
}

pub fn oracle_semi_spans(n: usize, max_len: usize) -> BTreeSet<(usize, usize)> {
    (1..=n).flat_map(|u| (u..=n.min(u + max_len - 1)).map(move |v| (u, v))).collect()
}

/// One labelled segmentation: `(span index, label)` per segment.
pub type Path = Vec<(usize, usize)>;

/// Every labelled segmentation with a finite score.
pub fn enumerate(scored: &ScoredLattice) -> Vec<(Path, f64)> {
    let lat = scored.lattice();
    let n = lat.sentence_len();
    let k = scored.num_labels();
    let mut out = Vec::new();
    let mut stack: Vec<(usize, Option<usize>, Path, f64)> = vec![(1, None, Vec::new(), 0.0)];
    while let Some((pos, prev, path, score)) = stack.pop() {
        if pos == n + 1 {
            out.push((path, score));
            continue;
        }
        for (idx, span) in lat.spans().iter().enumerate() {
            if span.start != pos {
                continue;
            }
            for y in 0..k {
                let s = scored.score(idx, prev, y);
                if s == f64::NEG_INFINITY {
                    continue;
                }
                let mut p = path.clone();
                p.push((idx, y));
                stack.push((span.end + 1, Some(y), p, score + s));
            }
        }
    }
    out
}

pub fn log_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Factor marginals keyed by `(span index, previous label, label)`.
pub fn brute_marginals(paths: &[(Path, f64)]) -> HashMap<(usize, Option<usize>, usize), f64> {
    let log_z = log_sum(paths.iter().map(|p| p.1));
    let mut out = HashMap::new();
    for (path, score) in paths {
        let w = (score - log_z).exp();
        let mut prev = None;
        for &(idx, y) in path {
            *out.entry((idx, prev, y)).or_insert(0.0) += w;
            prev = Some(y);
        }
    }
    out
}

/// First-order chain forward pass over per-token scores, reading
/// `score(token, prev, y)` from the singleton spans of a linear lattice.
pub fn chain_log_partition(scored: &ScoredLattice) -> f64 {
    let lat = scored.lattice();
    let n = lat.sentence_len();
    let k = scored.num_labels();
    let idx = |i: usize| lat.index_of(i, i).unwrap();
    let mut alpha: Vec<f64> = (0..k).map(|y| scored.score(idx(1), None, y)).collect();
    for i in 2..=n {
        alpha = (0..k)
            .map(|y| log_sum((0..k).map(|yp| alpha[yp] + scored.score(idx(i), Some(yp), y))))
            .collect();
    }
    log_sum(alpha)
}

/// Largest componentwise relative error between the analytic gradient and
/// central differences with step `h`; denominators are floored at `floor`.
pub fn gradient_check(
    space: &dgner::features::FeatureSpace,
    instances: &[dgner::training::Instance],
    weights: &[f64],
    lambda: f64,
    h: f64,
    floor: f64,
) -> f64 {
    use dgner::training::objective_and_gradient;
    let (_, grad) = objective_and_gradient(space, instances, weights, lambda, 1).unwrap();
    let mut w = weights.to_vec();
    let mut worst = 0.0f64;
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + h;
        let up = objective_and_gradient(space, instances, &w, lambda, 1).unwrap().0;
        w[i] = orig - h;
        let down = objective_and_gradient(space, instances, &w, lambda, 1).unwrap().0;
        w[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

/// A small random corpus with entities on spans every model can represent.
pub fn small_corpus<R: Rng>(sentences: usize, max_n: usize, types: &[&str], rng: &mut R) -> Vec<Sentence> {
    (0..sentences)
        .map(|_| {
            let n = rng.gen_range(1..=max_n);
            let mut s = random_sentence(n, rng);
            let spans: Vec<(usize, usize)> = oracle_single_arc_spans(s.tree.heads(), 3).into_iter().collect();
            plant(&mut s, &spans, types, rng);
            s
        })
        .collect()
}
