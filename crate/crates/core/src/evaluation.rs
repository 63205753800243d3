//! Exact-match span precision/recall/F1 and paired bootstrap significance.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::EntitySpan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

/// Micro-averaged overall counts plus per-type rows. Scores are percentages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub overall: Counts,
    pub per_type: BTreeMap<String, Counts>,
}

impl EvalReport {
    pub fn precision(&self) -> f64 {
        self.overall.precision()
    }

    pub fn recall(&self) -> f64 {
        self.overall.recall()
    }

    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }

    /// Fixed-width table, one row per type and an `Overall` row.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "type", "gold", "pred", "correct", "P", "R", "F"
        );
        let rows = self
            .per_type
            .iter()
            .map(|(t, c)| (t.as_str(), c))
            .chain(std::iter::once(("Overall", &self.overall)));
        for (name, c) in rows {
            out.push_str(&format!(
                "{:<12} {:>7} {:>7} {:>7} {:>7.2} {:>7.2} {:>7.2}\n",
                name,
                c.gold,
                c.predicted,
                c.correct,
                c.precision(),
                c.recall(),
                c.f1()
            ));
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("type,gold,predicted,correct,precision,recall,f1\n");
        let rows = self
            .per_type
            .iter()
            .map(|(t, c)| (t.as_str(), c))
            .chain(std::iter::once(("Overall", &self.overall)));
        for (name, c) in rows {
            out.push_str(&format!(
                "{name},{},{},{},{:.4},{:.4},{:.4}\n",
                c.gold,
                c.predicted,
                c.correct,
                c.precision(),
                c.recall(),
                c.f1()
            ));
        }
        out
    }
}

fn sentence_counts(gold: &[EntitySpan], pred: &[EntitySpan]) -> Counts {
    let gold_set: HashSet<&EntitySpan> = gold.iter().collect();
    let pred_set: HashSet<&EntitySpan> = pred.iter().collect();
    Counts {
        gold: gold_set.len(),
        predicted: pred_set.len(),
        correct: pred_set.intersection(&gold_set).count(),
    }
}

fn check_aligned(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// A predicted span is correct iff start, end and type match a gold span.
pub fn score(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<EvalReport> {
    check_aligned(gold, pred)?;
    let mut report = EvalReport::default();
    for (g, p) in gold.iter().zip(pred) {
        report.overall.add(sentence_counts(g, p));
        for e in g {
            report.per_type.entry(e.etype.clone()).or_default().gold += 1;
        }
        for e in p {
            let row = report.per_type.entry(e.etype.clone()).or_default();
            row.predicted += 1;
            if g.contains(e) {
                row.correct += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapResult {
    pub p_value: f64,
    /// Both systems have exactly the same F1 on the full set.
    pub tie: bool,
    pub f1_a: f64,
    pub f1_b: f64,
    pub samples: usize,
}

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 10_000;

/// Paired bootstrap over sentences. With system A ahead on the full set,
/// `p` is the fraction of resamples where B scores at least as well as A.
/// If B is ahead the roles are swapped, so `p` always measures how often
/// the full-set winner fails to win.
pub fn bootstrap_test(
    gold: &[Vec<EntitySpan>],
    pred_a: &[Vec<EntitySpan>],
    pred_b: &[Vec<EntitySpan>],
    samples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    check_aligned(gold, pred_a)?;
    check_aligned(gold, pred_b)?;
    if samples < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 bootstrap samples, got {samples}")));
    }
    let counts_a: Vec<Counts> = gold.iter().zip(pred_a).map(|(g, p)| sentence_counts(g, p)).collect();
    let counts_b: Vec<Counts> = gold.iter().zip(pred_b).map(|(g, p)| sentence_counts(g, p)).collect();
    let total = |cs: &[Counts]| {
        let mut t = Counts::default();
        cs.iter().for_each(|c| t.add(*c));
        t
    };
    let f1_a = total(&counts_a).f1();
    let f1_b = total(&counts_b).f1();
    if f1_a == f1_b {
        return Ok(BootstrapResult {
            p_value: 1.0,
            tie: true,
            f1_a,
            f1_b,
            samples,
        });
    }
    let (winner, loser) = if f1_a > f1_b {
        (&counts_a, &counts_b)
    } else {
        (&counts_b, &counts_a)
    };
    let m = gold.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reversals = 0usize;
    for _ in 0..samples {
        let mut w = Counts::default();
        let mut l = Counts::default();
        for _ in 0..m {
            let i = rng.gen_range(0..m);
            w.add(winner[i]);
            l.add(loser[i]);
        }
        if l.f1() >= w.f1() {
            reversals += 1;
        }
    }
    Ok(BootstrapResult {
        p_value: reversals as f64 / samples as f64,
        tie: false,
        f1_a,
        f1_b,
        samples,
    })
}
