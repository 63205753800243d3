//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use dgner::bench::{benchmark, BenchConfig};
use dgner::combinatorics::{
    average_valid_spans, average_valid_spans_closed_form, closed_form_f, random_tree, trees_on_successor, Discrepancy,
    SpanCensus,
};
use dgner::corpus::{DependencyTree, LabelSet};
use dgner::evaluation::score;
use dgner::inference::{log_partition, marginals, viterbi, ScoredLattice};
use dgner::lattice::{average_edges_per_token, build_tree_lattice, single_arc_spans, valid_spans, Mode, ModelKind};
use dgner::synth::{generate, SynthConfig};
use dgner::training::{fit_with_report, output_labels, prepare, TrainConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn bijection_identity() -> Outcome {
    let mut worst = Duration::ZERO;
    for n in 2..=7 {
        let started = Instant::now();
        let total = SpanCensus::compute(n).unwrap().total_valid_spans();
        worst = worst.max(started.elapsed());
        if BigInt::from(total) != trees_on_successor(n) {
            return outcome(false, format!("n = {n}: {total} spans, expected {}", trees_on_successor(n)));
        }
    }
    outcome(worst.as_secs_f64() < 60.0, format!("n = 2..7 exact; slowest census {:.2}s", worst.as_secs_f64()))
}

fn closed_form() -> Outcome {
    let mut discrepancies: Vec<Discrepancy> = Vec::new();
    let mut checked = 0;
    for n in 2..=7 {
        let census = SpanCensus::compute(n).unwrap();
        for l in 2..=n {
            let closed = closed_form_f(n, l).unwrap();
            let brute = BigRational::from_integer(census.multiword_spans(l).into());
            checked += 1;
            if closed != brute {
                discrepancies.push(Discrepancy {
                    identity: "F(n,L)".into(),
                    params: format!("n={n} L={l}"),
                    closed_form: closed,
                    brute_force: brute,
                });
            }
        }
        let full = trees_on_successor(n) - num_traits::pow(BigInt::from(n), n - 1);
        checked += 1;
        if BigInt::from(census.multiword_spans(n)) != full {
            discrepancies.push(Discrepancy {
                identity: "F(n,n)".into(),
                params: format!("n={n}"),
                closed_form: BigRational::from_integer(full),
                brute_force: BigRational::from_integer(census.multiword_spans(n).into()),
            });
        }
    }
    for d in &discrepancies {
        println!("    discrepancy {} {}: closed form {} vs brute force {}", d.identity, d.params, d.closed_form, d.brute_force);
    }
    outcome(discrepancies.is_empty(), format!("{checked} exact comparisons, {} discrepancies", discrepancies.len()))
}

fn average_bound() -> Outcome {
    for n in 2..=7 {
        let avg = average_valid_spans(n).unwrap();
        if avg != average_valid_spans_closed_form(n) {
            return outcome(false, format!("n = {n}: average {avg} differs from closed form"));
        }
        if avg.to_f64().unwrap() >= std::f64::consts::E * n as f64 {
            return outcome(false, format!("n = {n}: average {avg} not below e*n"));
        }
    }
    outcome(true, "exact for n = 2..7, all below e*n")
}

fn dp_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=7);
        let types = rng.gen_range(1..=3);
        let l = rng.gen_range(1..=n);
        let tree = tree_from_heads(&random_heads(n, &mut rng));
        let labels = LabelSet::new(["PER", "ORG", "LOC"].into_iter().take(types)).unwrap();
        for kind in ModelKind::ALL {
            let lat = build_tree_lattice(&tree, Mode::new(kind, l));
            let out = output_labels(&labels, kind);
            let scored = ScoredLattice::new(&lat, out.len(), |idx, yp, y| {
                let s = rng.gen_range(-3.0..3.0);
                if out.allows_span(y, lat.spans()[idx].len()) && out.allows_transition(yp, y) {
                    s
                } else {
                    f64::NEG_INFINITY
                }
            });
            let paths = enumerate(&scored);
            let z = log_partition(&scored).unwrap();
            worst = worst.max((z - log_sum(paths.iter().map(|p| p.1))).abs());
            let m = marginals(&scored).unwrap();
            let brute = brute_marginals(&paths);
            let k = out.len();
            for (idx, span) in lat.spans().iter().enumerate() {
                let prevs: Vec<Option<usize>> = if span.start == 1 { vec![None] } else { (0..k).map(Some).collect() };
                for yp in prevs {
                    for y in 0..k {
                        let expect = brute.get(&(idx, yp, y)).copied().unwrap_or(0.0);
                        worst = worst.max((m.get(idx, yp, y) - expect).abs());
                    }
                }
            }
            let (_, best) = viterbi(&scored).unwrap();
            let brute_best = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((best - brute_best).abs());
        }
    }
    outcome(worst < 1e-8, format!("200 instances x 4 modes, max abs error {worst:.2e}"))
}

fn gradient_check_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let all_types = ["PER", "ORG", "LOC"];
    for i in 0..50 {
        let kind = ModelKind::ALL[i % 4];
        let types = &all_types[..rng.gen_range(1..=3)];
        let corpus = small_corpus(rng.gen_range(1..=3), 6, types, &mut rng);
        let labels = LabelSet::new(types.iter().copied()).unwrap();
        let (space, instances, _) = prepare(&corpus, &labels, Mode::new(kind, rng.gen_range(1..=4)), rng.gen_bool(0.5)).unwrap();
        let lambda = rng.gen_range(0.0..1.0);
        let w: Vec<f64> = (0..space.num_features()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(gradient_check(&space, &instances, &w, lambda, 1e-5, 1e-3));
    }
    outcome(worst < 1e-5, format!("50 models, max relative error {worst:.2e}"))
}

fn lattice_containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=30);
        let shape = random_tree(n, &mut rng);
        let root = rng.gen_range(1..=n);
        let tree = DependencyTree::from_undirected(n, shape.edges(), root, "dep").unwrap();
        let l = rng.gen_range(1..=10);
        let lat = |kind, l| build_tree_lattice(&tree, Mode::new(kind, l));
        let (dgms, dgm, semi) = (lat(ModelKind::DgmS, l), lat(ModelKind::Dgm, l), lat(ModelKind::Semi, l));
        if !dgms.is_subset_of(&dgm) || !dgm.is_subset_of(&semi) {
            return outcome(false, format!("containment fails on heads {:?}, L = {l}", tree.heads()));
        }
        for kind in ModelKind::ALL {
            let small = lat(kind, l);
            if !small.is_subset_of(&lat(kind, l + 1)) || !(1..=n).all(|i| small.contains(i, i)) {
                return outcome(false, format!("{kind}: monotonicity or singletons fail on {:?}", tree.heads()));
            }
        }
    }
    outcome(true, "1000 trees, n <= 30")
}

fn overfit() -> Outcome {
    let corpus = generate(&SynthConfig { sentences: 20, seed: 7, ..Default::default() }).unwrap();
    let gold: Vec<_> = corpus.iter().map(|s| s.gold.clone()).collect();
    let cfg = TrainConfig { lambda: 0.0, max_iterations: 200, ..Default::default() };
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in ModelKind::ALL {
        let (model, report) = fit_with_report(&corpus, &cfg, Mode::new(kind, 8), |_| {}).unwrap();
        let f1 = score(&gold, &model.predict_all(&corpus).unwrap()).unwrap().f1();
        pass &= f1 == 100.0 && report.iterations.len() <= 200;
        parts.push(format!("{kind} F1 {f1:.1} in {} it", report.iterations.len()));
    }
    outcome(pass, parts.join(", "))
}

fn award_sentence_oracle() -> Outcome {
    let tree = tree_from_heads(&[3, 3, 4, 0, 9, 5, 8, 6, 4]);
    let dgm = valid_spans(&tree, 9);
    let dgms = single_arc_spans(&tree, 9);
    let pass = dgm.contains(1, 3) && dgm.contains(2, 4) && !dgm.contains(2, 5) && dgm.contains(5, 8) && !dgms.contains(5, 8);
    let expected = oracle_dgm_spans(tree.heads(), 9);
    let got: std::collections::BTreeSet<_> = dgm.spans().iter().map(|s| (s.start, s.end)).collect();
    outcome(pass && got == expected, format!("{} valid spans, memberships as stated", got.len()))
}

fn speed_direction() -> Outcome {
    let corpus = generate(&SynthConfig { sentences: 500, mean_len: 25, seed: 9, ..Default::default() }).unwrap();
    let cfg = BenchConfig { max_len: 8, ..Default::default() };
    let mut ratios = Vec::new();
    for _ in 0..3 {
        let rows = benchmark(&corpus, &[ModelKind::Semi, ModelKind::Dgm], &cfg).unwrap();
        ratios.push(rows[1].mean() / rows[0].mean());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(mean <= 0.8, format!("dgm/semi per-iteration time {mean:.3} (runs {})", shown.join(", ")))
}

fn edge_accounting() -> Outcome {
    let corpus = generate(&SynthConfig { sentences: 300, seed: 10, ..Default::default() }).unwrap();
    let k = LabelSet::from_sentences(&corpus).unwrap().num_labels();
    let l = 8;
    let mut averages = Vec::new();
    for kind in [ModelKind::DgmS, ModelKind::Dgm, ModelKind::Semi] {
        let got = average_edges_per_token(&corpus, Mode::new(kind, l), k).unwrap();
        let mut sum = BigRational::zero();
        for s in &corpus {
            let heads = s.tree.heads();
            let spans = match kind {
                ModelKind::DgmS => oracle_single_arc_spans(heads, l).len(),
                ModelKind::Dgm => oracle_dgm_spans(heads, l).len(),
                _ => oracle_semi_spans(s.len(), l).len(),
            };
            sum += BigRational::new(BigInt::from(spans * k * k), BigInt::from(s.len()));
        }
        let recount = sum / BigInt::from(corpus.len());
        if got != recount {
            return outcome(false, format!("{kind}: {got} vs recount {recount}"));
        }
        averages.push(got.to_f64().unwrap());
    }
    let pass = averages[0] < averages[1] && averages[1] < averages[2];
    outcome(pass, format!("dgm-s {:.1} < dgm {:.1} < semi {:.1}", averages[0], averages[1], averages[2]))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bijection identity", bijection_identity),
        ("closed form F(n,L)", closed_form),
        ("average bound", average_bound),
        ("DP correctness", dp_correctness),
        ("gradient check", gradient_check_criterion),
        ("lattice containment", lattice_containment),
        ("overfit property", overfit),
        ("valid-span oracle", award_sentence_oracle),
        ("speed direction", speed_direction),
        ("edge accounting", edge_accounting),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = run();
        println!(
            "criterion {:>2} {:<22} {}  {} [{:.1}s]",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            started.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
