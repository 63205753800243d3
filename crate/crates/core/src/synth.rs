//! Seeded synthetic corpora: random trees with entities planted on spans
//! that a chosen lattice can represent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combinatorics::random_tree;
use crate::corpus::{DependencyTree, EntitySpan, Sentence, Token};
use crate::error::{Error, Result};
use crate::lattice::{build_tree_lattice, Mode, ModelKind};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub mean_len: usize,
    /// Sentence lengths are uniform in `mean_len ± len_spread`, at least 1.
    pub len_spread: usize,
    pub entity_types: Vec<String>,
    /// Chance of accepting each candidate entity span.
    pub entity_rate: f64,
    pub max_entity_len: usize,
    /// Entities sit on spans of this lattice.
    pub planting: ModelKind,
    /// Chance that a token's surface is drawn from the wrong vocabulary.
    pub leak: f64,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 100,
            mean_len: 25,
            len_spread: 10,
            entity_types: ["PER", "ORG", "GPE", "MISC"].iter().map(|s| s.to_string()).collect(),
            entity_rate: 0.3,
            max_entity_len: 4,
            planting: ModelKind::DgmS,
            leak: 0.0,
            vocab_size: 40,
            seed: 1,
        }
    }
}

const OUTSIDE_TAGS: [&str; 5] = ["NN", "VB", "DT", "IN", "JJ"];

fn entity_word(etype: &str, k: usize) -> String {
    let mut chars = etype.chars();
    let head: String = chars.next().map(|c| c.to_ascii_uppercase()).into_iter().collect();
    let tail: String = chars.map(|c| c.to_ascii_lowercase()).collect();
    format!("{head}{tail}{k}")
}

fn outside_word(k: usize) -> String {
    format!("w{k}")
}

pub fn generate(config: &SynthConfig) -> Result<Vec<Sentence>> {
    if config.mean_len == 0 || config.entity_types.is_empty() || config.max_entity_len == 0 || config.vocab_size == 0 {
        return Err(Error::InvalidInput("synthetic corpus needs positive lengths, vocabulary and entity types".into()));
    }
    if !(0.0..=1.0).contains(&config.entity_rate) || !(0.0..=1.0).contains(&config.leak) {
        return Err(Error::InvalidInput("entity rate and leak must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.sentences).map(|_| sentence(config, &mut rng)).collect()
}

fn sentence(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Sentence> {
    let lo = config.mean_len.saturating_sub(config.len_spread).max(1);
    let hi = config.mean_len + config.len_spread;
    let n = rng.gen_range(lo..=hi);
    let shape = random_tree(n, rng);
    let root = rng.gen_range(1..=n);
    let plain = DependencyTree::from_undirected(n, shape.edges(), root, "dep")?;

    let mode = Mode::new(config.planting, config.max_entity_len);
    let lattice = build_tree_lattice(&plain, mode);
    let (mut candidates, mut singles): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
        lattice.spans().iter().map(|s| (s.start, s.end)).partition(|(u, v)| u < v);
    candidates.shuffle(rng);
    singles.shuffle(rng);
    candidates.extend(singles);
    // entities never touch, so boundaries stay visible to every model
    let mut blocked = vec![false; n + 2];
    let mut gold = Vec::new();
    for (u, v) in candidates {
        if blocked[u - 1..=v + 1].iter().any(|&b| b) || !rng.gen_bool(config.entity_rate) {
            continue;
        }
        blocked[u..=v].iter_mut().for_each(|b| *b = true);
        let etype = config.entity_types.choose(rng).expect("non-empty").clone();
        gold.push(EntitySpan::new(u, v, etype));
    }
    gold.sort();

    let mut type_of = vec![None; n + 1];
    for e in &gold {
        for t in type_of.iter_mut().take(e.end + 1).skip(e.start) {
            *t = Some(e.etype.clone());
        }
    }
    let mut tokens = Vec::with_capacity(n);
    for t in type_of.iter().skip(1) {
        let leaked = config.leak > 0.0 && rng.gen_bool(config.leak);
        let k = rng.gen_range(0..config.vocab_size);
        let token = match (t, leaked) {
            (Some(et), false) => Token::new(entity_word(et, k), "NNP"),
            (Some(_), true) => Token::new(outside_word(k), "NN"),
            (None, false) => Token::new(outside_word(k), *OUTSIDE_TAGS.choose(rng).expect("non-empty")),
            (None, true) => {
                let et = config.entity_types.choose(rng).expect("non-empty");
                Token::new(entity_word(et, k), "NNP")
            }
        };
        tokens.push(token);
    }

    let labels: Vec<String> = (1..=n)
        .map(|i| {
            let h = plain.head(i);
            if h == 0 {
                "root".to_string()
            } else if type_of[i].is_some() && type_of[i] == type_of[h] {
                "compound".to_string()
            } else {
                "dep".to_string()
            }
        })
        .collect();
    let tree = DependencyTree::new(plain.heads().to_vec(), labels)?;
    Sentence::new(tokens, tree, gold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, ModelKind};

    #[test]
    fn deterministic_and_representable() {
        let cfg = SynthConfig {
            sentences: 30,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let mut entities = 0;
        for s in &a {
            for kind in [ModelKind::DgmS, ModelKind::Dgm, ModelKind::Semi] {
                let lat = build_lattice(s, Mode::new(kind, cfg.max_entity_len));
                assert!(s.gold.iter().all(|e| lat.contains(e.start, e.end)));
            }
            for w in s.gold.windows(2) {
                assert!(w[1].start > w[0].end + 1);
            }
            entities += s.gold.len();
        }
        assert!(entities > 30);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&SynthConfig { sentences: 5, seed: 1, ..Default::default() }).unwrap();
        let b = generate(&SynthConfig { sentences: 5, seed: 2, ..Default::default() }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn surfaces_follow_vocabularies() {
        assert_eq!(entity_word("PER", 12), "Per12");
        assert_eq!(entity_word("MISC", 0), "Misc0");
        let corpus = generate(&SynthConfig { sentences: 10, ..Default::default() }).unwrap();
        for s in &corpus {
            for e in &s.gold {
                for i in e.start..=e.end {
                    assert_eq!(s.token(i).pos, "NNP");
                }
            }
        }
    }
}
