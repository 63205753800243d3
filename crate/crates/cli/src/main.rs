use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgner::bench::{self, BenchConfig};
use dgner::combinatorics::{edges_curve, verify_identities, MAX_ENUMERATION_N};
use dgner::corpus::{self, EntitySpan, LabelSet, Sentence, GOLD_COLUMN, PREDICTION_COLUMN};
use dgner::evaluation::{bootstrap_test, score, DEFAULT_BOOTSTRAP_SAMPLES};
use dgner::lattice::{average_edges_per_token, lattice_stats, Mode, ModelKind};
use dgner::synth::{self, SynthConfig};
use dgner::training::{self, Model, TrainConfig};
use num_traits::ToPrimitive;

#[derive(Parser)]
#[command(name = "dgner", version, about = "Dependency-guided named entity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Tag a CoNLL file; gold tags are kept and predictions appended.
    Predict(PredictArgs),
    /// Score the prediction column of a tagged CoNLL file.
    Evaluate(EvaluateArgs),
    /// Paired bootstrap test between two tagged files over the same gold.
    Significance(SignificanceArgs),
    /// Per-sentence lattice sizes as CSV.
    Stats(StatsArgs),
    /// Check the span-counting identities against brute force.
    Verify(VerifyArgs),
    /// Average valid spans per tree as a function of n, as CSV.
    EdgesCurve(EdgesCurveArgs),
    /// Per-iteration training time of all four models on one corpus.
    Bench(BenchArgs),
    /// Write a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Choose lambda by k-fold cross-validation.
    Cv(CvArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// linear, semi, dgm-s or dgm
    #[arg(long, default_value = "dgm")]
    mode: ModelKind,
    /// Maximum segment length.
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    #[arg(long)]
    no_dep_features: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl ModelArgs {
    fn mode(&self) -> Result<Mode, Failure> {
        if self.max_len == 0 {
            return Err(Failure::Usage("--max-len must be at least 1".into()));
        }
        Ok(Mode::new(self.mode, self.max_len))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    model_args: ModelArgs,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CoNLL input; `-` reads standard input.
    #[arg(long, default_value = "-")]
    input: PathBuf,
    /// `-` writes standard output.
    #[arg(long, default_value = "-")]
    output: PathBuf,
    /// Assert the model was trained without dependency features.
    #[arg(long)]
    no_dep_features: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SignificanceArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model_args: ModelArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 7)]
    max_n: usize,
}

#[derive(Args)]
struct EdgesCurveArgs {
    #[arg(long, default_value_t = 50)]
    max_n: usize,
    /// Also enumerate all trees up to this size.
    #[arg(long, default_value_t = 7)]
    brute_force_up_to: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    #[arg(long)]
    no_dep_features: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 100)]
    sentences: usize,
    #[arg(long, default_value_t = 25)]
    mean_len: usize,
    #[arg(long, default_value_t = 10)]
    len_spread: usize,
    #[arg(long, default_value_t = 0.3)]
    entity_rate: f64,
    #[arg(long, default_value_t = 4)]
    max_entity_len: usize,
    /// Lattice whose spans carry the planted entities.
    #[arg(long, default_value = "dgm-s")]
    planting: ModelKind,
    #[arg(long, default_value_t = 0.0)]
    leak: f64,
    #[arg(long, default_value = "PER,ORG,GPE,MISC", value_delimiter = ',')]
    types: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model_args: ModelArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_values_t = training::DEFAULT_LAMBDA_GRID)]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Lib(dgner::Error),
    /// Output already printed; only the exit status remains.
    Silent(u8),
}

impl From<dgner::Error> for Failure {
    fn from(e: dgner::Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path) -> CmdResult {
    if path.as_os_str() != "-" && !path.is_file() {
        return Err(Failure::Usage(format!("{}: no such file", path.display())));
    }
    Ok(())
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).map_err(|e| io_failure(path, e))?;
        Ok(text)
    } else {
        fs::read_to_string(path).map_err(|e| io_failure(path, e))
    }
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if path.as_os_str() == "-" {
        emit(text)
    } else {
        fs::write(path, text).map_err(|e| io_failure(path, e))
    }
}

/// Writes to standard output; a closed pipe is not an error.
fn emit(text: &str) -> CmdResult {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::Usage(format!("standard output: {e}"))),
        _ => Ok(()),
    }
}

fn read_corpus(path: &Path, column: usize) -> Result<Vec<Sentence>, Failure> {
    let text = read_text(path)?;
    corpus::parse_conll(&text, column).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn train(args: TrainArgs) -> CmdResult {
    require_file(&args.input)?;
    let mode = args.model_args.mode()?;
    let sentences = read_corpus(&args.input, GOLD_COLUMN)?;
    let config = TrainConfig {
        lambda: args.lambda,
        max_iterations: args.max_iterations,
        workers: args.model_args.workers,
        dep_features: !args.model_args.no_dep_features,
        seed: args.seed,
        ..Default::default()
    };
    println!("iteration,objective,grad_inf_norm,evaluations,seconds");
    let (model, report) = training::fit_with_report(&sentences, &config, mode, |log| {
        println!(
            "{},{:.6},{:.3e},{},{:.6}",
            log.iteration,
            log.value,
            log.grad_inf_norm,
            log.evaluations,
            log.elapsed.as_secs_f64()
        );
    })?;
    model.save(&args.model)?;
    eprintln!(
        "{} iterations ({:?}), objective {:.6}, mean {:.6}s per iteration, {} features, {} split entities",
        report.iterations.len(),
        report.reason,
        report.objective,
        report.mean_iteration_time().as_secs_f64(),
        model.weights.len(),
        report.splits
    );
    Ok(())
}

fn predict(args: PredictArgs) -> CmdResult {
    require_file(&args.model)?;
    require_file(&args.input)?;
    let model = Model::load(&args.model)?;
    if args.no_dep_features && model.dep_features() {
        return Err(Failure::Usage(format!(
            "{} was trained with dependency features but --no-dep-features was given",
            args.model.display()
        )));
    }
    let sentences = read_corpus(&args.input, GOLD_COLUMN)?;
    let predictions = model.predict_all(&sentences)?;
    write_text(&args.output, &corpus::format_conll(&sentences, &predictions)?)
}

fn gold_and_predictions(path: &Path) -> Result<(Vec<Vec<EntitySpan>>, Vec<Vec<EntitySpan>>), Failure> {
    require_file(path)?;
    let text = read_text(path)?;
    let column = |c| -> Result<Vec<Vec<EntitySpan>>, Failure> {
        let sentences = corpus::parse_conll(&text, c).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        Ok(sentences.into_iter().map(|s| s.gold).collect())
    };
    Ok((column(GOLD_COLUMN)?, column(PREDICTION_COLUMN)?))
}

fn evaluate(args: EvaluateArgs) -> CmdResult {
    let (gold, pred) = gold_and_predictions(&args.input)?;
    let report = score(&gold, &pred)?;
    emit(&report.table())?;
    if let Some(path) = &args.csv {
        write_text(path, &report.csv())?;
    }
    Ok(())
}

fn significance(args: SignificanceArgs) -> CmdResult {
    let (gold_a, pred_a) = gold_and_predictions(&args.a)?;
    let (gold_b, pred_b) = gold_and_predictions(&args.b)?;
    if gold_a != gold_b {
        return Err(Failure::Usage("the two files do not share the same gold annotation".into()));
    }
    let r = bootstrap_test(&gold_a, &pred_a, &pred_b, args.samples, args.seed)?;
    emit(&format!(
        "f1_a,f1_b,p_value,tie,samples\n{:.4},{:.4},{:.6},{},{}\n",
        r.f1_a, r.f1_b, r.p_value, r.tie, r.samples
    ))
}

fn stats(args: StatsArgs) -> CmdResult {
    require_file(&args.input)?;
    let mode = args.model_args.mode()?;
    let sentences = read_corpus(&args.input, GOLD_COLUMN)?;
    let k = LabelSet::from_sentences(&sentences)?.num_labels();
    let rows = lattice_stats(&sentences, mode, k);
    let mut out = String::from("sentence_id,n,spans,edges,edges_per_token\n");
    for r in &rows {
        out.push_str(&format!("{},{},{},{},{:.6}\n", r.sentence_id, r.n, r.spans, r.edges, r.edges_per_token));
    }
    if !sentences.is_empty() {
        let average = average_edges_per_token(&sentences, mode, k)?;
        let tokens: usize = rows.iter().map(|r| r.n).sum();
        let spans: usize = rows.iter().map(|r| r.spans).sum();
        let edges: u64 = rows.iter().map(|r| r.edges).sum();
        out.push_str(&format!("all,{tokens},{spans},{edges},{:.6}\n", average.to_f64().unwrap_or(f64::NAN)));
        let rep = corpus::representability_stats(&sentences, mode);
        eprintln!(
            "{}: {} of {} entities representable ({:.2}%)",
            mode.kind,
            rep.representable,
            rep.total,
            rep.percentage()
        );
    }
    emit(&out)
}

fn verify(args: VerifyArgs) -> CmdResult {
    if !(2..=MAX_ENUMERATION_N).contains(&args.max_n) {
        return Err(Failure::Usage(format!("--max-n must lie in 2..={MAX_ENUMERATION_N}")));
    }
    let report = verify_identities(args.max_n)?;
    let mut out = report.table();
    for d in &report.discrepancies {
        out.push_str(&format!(
            "discrepancy: {} at {}: closed form {} but brute force {}\n",
            d.identity, d.params, d.closed_form, d.brute_force
        ));
    }
    emit(&out)?;
    if report.all_pass() {
        Ok(())
    } else {
        Err(Failure::Silent(1))
    }
}

fn curve(args: EdgesCurveArgs) -> CmdResult {
    if args.max_n < 2 {
        return Err(Failure::Usage("--max-n must be at least 2".into()));
    }
    let mut out = String::from("n,average_closed_form,average_brute_force,e_times_n,semi_spans\n");
    for p in edges_curve(args.max_n, args.brute_force_up_to)? {
        let brute = p.average_brute_force.map(|b| format!("{b:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{:.6},{brute},{:.6},{}\n", p.n, p.average_closed_form, p.e_times_n, p.semi_spans));
    }
    emit(&out)
}

fn run_bench(args: BenchArgs) -> CmdResult {
    require_file(&args.input)?;
    let sentences = read_corpus(&args.input, GOLD_COLUMN)?;
    let config = BenchConfig {
        max_len: args.max_len,
        dep_features: !args.no_dep_features,
        warmup: args.warmup,
        iterations: args.iterations,
        workers: args.workers,
    };
    let rows = bench::benchmark(&sentences, &ModelKind::ALL, &config)?;
    emit(&bench::csv(&rows))?;
    let mean = |kind| rows.iter().find(|r| r.kind == kind).map(|r| r.mean()).unwrap_or(f64::NAN);
    eprintln!("dgm/semi time ratio {:.3}", mean(ModelKind::Dgm) / mean(ModelKind::Semi));
    Ok(())
}

fn run_synth(args: SynthArgs) -> CmdResult {
    let config = SynthConfig {
        sentences: args.sentences,
        mean_len: args.mean_len,
        len_spread: args.len_spread,
        entity_types: args.types,
        entity_rate: args.entity_rate,
        max_entity_len: args.max_entity_len,
        planting: args.planting,
        leak: args.leak,
        seed: args.seed,
        ..Default::default()
    };
    LabelSet::new(config.entity_types.iter().map(String::as_str))?;
    let sentences = synth::generate(&config)?;
    let gold: Vec<Vec<EntitySpan>> = sentences.iter().map(|s| s.gold.clone()).collect();
    write_text(&args.output, &corpus::format_conll(&sentences, &gold)?)
}

fn cv(args: CvArgs) -> CmdResult {
    require_file(&args.input)?;
    let mode = args.model_args.mode()?;
    let sentences = read_corpus(&args.input, GOLD_COLUMN)?;
    let config = TrainConfig {
        lambda_grid: args.lambdas,
        folds: args.folds,
        max_iterations: args.max_iterations,
        workers: args.model_args.workers,
        dep_features: !args.model_args.no_dep_features,
        seed: args.seed,
        ..Default::default()
    };
    let result = training::cross_validate(&sentences, &config, mode)?;
    let mut out = String::from("lambda,mean_f1\n");
    for (lambda, f1) in &result.scores {
        out.push_str(&format!("{lambda},{f1:.4}\n"));
    }
    emit(&out)?;
    eprintln!("best lambda {}", result.best_lambda);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Significance(a) => significance(a),
        Command::Stats(a) => stats(a),
        Command::Verify(a) => verify(a),
        Command::EdgesCurve(a) => curve(a),
        Command::Bench(a) => run_bench(a),
        Command::Synth(a) => run_synth(a),
        Command::Cv(a) => cv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Silent(code)) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { 1 } else { 2 })
        }
    }
}
