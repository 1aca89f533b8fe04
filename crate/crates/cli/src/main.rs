//! `endorhythm`: file-staged pipeline driver. Each subcommand consumes
//! files written by earlier stages plus config, so any stage can be rerun
//! and audited on its own. Exit codes: 0 success, 1 usage error, 2
//! runtime error.

mod config;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use endorhythm_core::bench::{BenchContext, DatasetSpec, Judge, RunPlan, TextMatchMode};
use endorhythm_core::dataset::DatasetKind;
use endorhythm_core::gateway::{http_provider, ChatProvider};
use endorhythm_core::lexi::{
    self, EmotionLexicon, FemalenessBackend, LexiconGenderBackend, RemoteGenderBackend,
    ValenceLexicon,
};
use endorhythm_core::prompt::{self, Condition, PromptRecord};
use endorhythm_core::report::{self, Grouping};
use endorhythm_core::rhythm::{self, CycleKind, CycleParams, Signal};
use endorhythm_core::stats;

use config::GlobalConfig;

#[derive(Parser)]
#[command(
    name = "endorhythm",
    about = "Simulate hormone cycles, render conditioned prompts, analyze them, and benchmark LLMs",
    version
)]
struct Cli {
    /// Config file (TOML): providers, default seed, lexicon/band paths.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a hormone cycle onto a grid and write it as CSV.
    GenHormones(GenHormonesArgs),
    /// Render a prompt corpus from a hormone CSV.
    GenPrompts(GenPromptsArgs),
    /// Linguistic analysis of a prompt corpus.
    Analyze(AnalyzeArgs),
    /// Run the benchmark described by a plan file or flags.
    Bench(BenchArgs),
    /// Aggregate a result log into tables, charts, and a stat summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenHormonesArgs {
    /// Cycle kind: menstrual or circadian.
    #[arg(long)]
    cycle: String,
    /// Number of grid points.
    #[arg(long)]
    resolution: usize,
    /// Gaussian noise sigma.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Wake hour for the circadian model.
    #[arg(long, default_value_t = 7.0)]
    wake_hour: f64,
    /// Menstrual cycle length in days.
    #[arg(long, default_value_t = 28)]
    cycle_length: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; "-" for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct GenPromptsArgs {
    /// Hormone CSV produced by gen-hormones.
    #[arg(long)]
    hormones: PathBuf,
    /// Output corpus path (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Context file, one scenario per line (default: built-in scenarios).
    #[arg(long)]
    contexts: Option<PathBuf>,
    /// Tone band file (TOML, [[bands]] entries; default: built-in bands).
    #[arg(long)]
    bands: Option<PathBuf>,
    /// Also emit one baseline record with this text (default from config).
    #[arg(long)]
    with_baseline: bool,
    /// Rewrite each prompt through the named provider from the config.
    #[arg(long)]
    elaborate_with: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Corpus file from gen-prompts.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for analysis.csv, keywords.txt, phase tables.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Keywords per phase in the TF-IDF table.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Remote femaleness classifier URL (default: bundled lexicon ratio).
    #[arg(long)]
    gender_url: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Plan file (TOML mirroring the run-plan fields); flags override it.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Dataset as kind=path or kind=path:limit; repeatable.
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Provider name from the config; repeatable.
    #[arg(long = "model")]
    models: Vec<String>,
    /// Comma-separated conditions (baseline is always included).
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<String>,
    /// Corpus file providing the conditioned prompts.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Hormone CSV to rejoin hormone snapshots onto corpus records.
    #[arg(long)]
    hormones: Vec<PathBuf>,
    /// "exact" or a provider name to use as LLM judge.
    #[arg(long, default_value = "exact")]
    judge: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Result log path (append-only; reruns resume).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    baseline_text: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result log from bench.
    #[arg(long)]
    results: PathBuf,
    /// Output directory for CSV tables, SVG charts, and the summary.
    #[arg(long)]
    out_dir: PathBuf,
    /// Hormone signals to bin into quintiles; repeatable.
    #[arg(long = "signal", default_values_t = [String::from("cortisol")])]
    signals: Vec<String>,
    /// Restrict comparisons to one model.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let config = match GlobalConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::GenHormones(args) => gen_hormones(&args, &config),
        Command::GenPrompts(args) => gen_prompts(&args, &config),
        Command::Analyze(args) => analyze(&args, &config),
        Command::Bench(args) => bench(&args, &config),
        Command::Report(args) => report_cmd(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn pick_seed(flag: Option<u64>, config: &GlobalConfig) -> u64 {
    flag.unwrap_or(config.seed)
}

fn gen_hormones(args: &GenHormonesArgs, config: &GlobalConfig) -> Result<(), CliError> {
    let kind = CycleKind::parse(&args.cycle)
        .ok_or_else(|| usage(format!("unknown cycle kind '{}'", args.cycle)))?;
    let seed = pick_seed(args.seed, config);
    let params = CycleParams {
        wake_hour: args.wake_hour,
        cycle_length_days: args.cycle_length,
        noise_sigma: args.noise,
        seed,
    };
    let samples = rhythm::sample_cycle(kind, args.resolution, &params).map_err(runtime)?;
    if args.out == "-" {
        rhythm::write_sample_csv(std::io::stdout().lock(), &samples, seed).map_err(runtime)?;
    } else {
        let f = std::fs::File::create(&args.out).map_err(runtime)?;
        rhythm::write_sample_csv(f, &samples, seed).map_err(runtime)?;
        eprintln!("wrote {} samples to {}", samples.len(), args.out);
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(std::fs::read_to_string(path)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn load_bands(path: Option<&Path>, config: &GlobalConfig) -> Result<Vec<prompt::ToneBand>, CliError> {
    let path = match path.or(config.bands_path.as_deref()) {
        Some(p) => p,
        None => return Ok(prompt::default_bands()),
    };
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    #[derive(serde::Deserialize)]
    struct BandFile {
        bands: Vec<prompt::ToneBand>,
    }
    let parsed: BandFile = toml::from_str(&text).map_err(runtime)?;
    for b in &parsed.bands {
        b.validate().map_err(runtime)?;
    }
    Ok(parsed.bands)
}

fn find_provider(config: &GlobalConfig, name: &str) -> Result<Arc<dyn ChatProvider>, CliError> {
    let pc = config
        .providers
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| usage(format!("no provider named '{name}' in config")))?;
    Ok(Arc::new(http_provider(pc).map_err(runtime)?))
}

fn gen_prompts(args: &GenPromptsArgs, config: &GlobalConfig) -> Result<(), CliError> {
    let seed = pick_seed(args.seed, config);
    let file = std::fs::File::open(&args.hormones)
        .map_err(|e| runtime(format!("{}: {e}", args.hormones.display())))?;
    let samples = rhythm::read_sample_csv(file).map_err(runtime)?;
    let contexts = match &args.contexts {
        Some(p) => read_lines(p)?,
        None => match &config.contexts_path {
            Some(p) => read_lines(p)?,
            None => prompt::default_contexts(),
        },
    };
    let bands = load_bands(args.bands.as_deref(), config)?;
    let mut records = prompt::build_corpus(&samples, &contexts, &bands, seed).map_err(runtime)?;
    if args.with_baseline {
        records.push(PromptRecord::baseline(&config.baseline_text));
    }
    if let Some(name) = &args.elaborate_with {
        let provider = find_provider(config, name)?;
        records = records
            .iter()
            .map(|r| prompt::elaborate_prompt(r, provider.as_ref()))
            .collect();
    }
    let f = std::fs::File::create(&args.out)
        .map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    prompt::write_corpus(f, &records).map_err(runtime)?;
    eprintln!("wrote {} prompt records to {}", records.len(), args.out.display());
    Ok(())
}

const ANALYSIS_METRICS: [&str; 8] = [
    "happy", "sad", "fear", "anger", "surprise", "sentiment", "avg_word_len", "femaleness",
];

fn metric_value(r: &lexi::LexiReport, metric: &str) -> f64 {
    match metric {
        "happy" => r.emotions.happy,
        "sad" => r.emotions.sad,
        "fear" => r.emotions.fear,
        "anger" => r.emotions.anger,
        "surprise" => r.emotions.surprise,
        "sentiment" => r.sentiment,
        "avg_word_len" => r.avg_word_length,
        "femaleness" => r.femaleness,
        _ => unreachable!("unknown metric {metric}"),
    }
}

fn analyze(args: &AnalyzeArgs, config: &GlobalConfig) -> Result<(), CliError> {
    let seed = pick_seed(args.seed, config);
    let file = std::fs::File::open(&args.corpus)
        .map_err(|e| runtime(format!("{}: {e}", args.corpus.display())))?;
    let records = prompt::read_corpus(file).map_err(runtime)?;
    if records.is_empty() {
        return Err(runtime("corpus is empty"));
    }

    let emotions = match &config.emotion_lexicon_path {
        Some(p) => EmotionLexicon::parse(
            &std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        )
        .map_err(runtime)?,
        None => EmotionLexicon::bundled(),
    };
    let valence = match &config.valence_lexicon_path {
        Some(p) => ValenceLexicon::parse(
            &std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        )
        .map_err(runtime)?,
        None => ValenceLexicon::bundled(),
    };
    let gender: Box<dyn FemalenessBackend> = match &args.gender_url {
        Some(url) => Box::new(RemoteGenderBackend::new(
            url.clone(),
            std::time::Duration::from_secs(30),
        )),
        None => Box::new(LexiconGenderBackend::bundled()),
    };

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| runtime(format!("{}: {e}", args.out_dir.display())))?;

    // per-record metrics
    let mut rows: Vec<(String, String, String, lexi::LexiReport)> = Vec::new();
    for rec in &records {
        let phase = rec.phase.map(|p| p.name().to_string()).unwrap_or_else(|| "none".into());
        let report = lexi::analyze_text(&rec.text, &emotions, &valence, gender.as_ref())
            .map_err(|e| runtime(format!("record {}: {e}", rec.id)))?;
        rows.push((rec.id.clone(), rec.condition.to_string(), phase, report));
    }
    let csv_path = args.out_dir.join("analysis.csv");
    let mut csv = std::fs::File::create(&csv_path).map_err(runtime)?;
    writeln!(csv, "{}", lexi::ANALYSIS_CSV_HEADER).map_err(runtime)?;
    for (id, condition, phase, report) in &rows {
        lexi::write_analysis_row(&mut csv, id, condition, phase, report).map_err(runtime)?;
    }

    // TF-IDF keywords per phase
    let mut by_phase: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for rec in &records {
        if let Some(p) = rec.phase {
            by_phase.entry(p.name().to_string()).or_default().push(rec.text.clone());
        }
    }
    let mut kw = String::from(&format!("# seed={seed}\n"));
    if by_phase.len() >= 2 {
        for (phase, terms) in lexi::tfidf_keywords(&by_phase, args.top_k).map_err(runtime)? {
            kw.push_str(&format!("{phase}:"));
            for (term, score) in terms {
                kw.push_str(&format!(" {term}={score:.6}"));
            }
            kw.push('\n');
        }
    } else {
        kw.push_str("fewer than 2 phases; no tf-idf table\n");
    }
    std::fs::write(args.out_dir.join("keywords.txt"), kw).map_err(runtime)?;

    // per-phase means and ANOVA across phases for each metric
    let mut means = String::from(&format!("# seed={seed}\nmetric,phase,n,mean\n"));
    let mut tests = String::from(&format!("# seed={seed}\nmetric,kind,statistic,df1,df2,p_value\n"));
    for metric in ANALYSIS_METRICS {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (_, _, phase, report) in &rows {
            if phase != "none" {
                groups.entry(phase).or_default().push(metric_value(report, metric));
            }
        }
        for (phase, vals) in &groups {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            means.push_str(&format!("{metric},{phase},{},{m:.6}\n", vals.len()));
        }
        if groups.len() >= 2 {
            let gs: Vec<Vec<f64>> = groups.values().cloned().collect();
            match stats::one_way_anova(&gs) {
                Ok(t) => tests.push_str(&format!(
                    "{metric},{},{:.6},{},{},{:.6}\n",
                    t.kind, t.statistic, t.df1, t.df2, t.p_value
                )),
                Err(e) => tests.push_str(&format!("{metric},skipped,,,,\"{e}\"\n")),
            }
        }
    }
    std::fs::write(args.out_dir.join("phase_means.csv"), means).map_err(runtime)?;
    std::fs::write(args.out_dir.join("phase_tests.csv"), tests).map_err(runtime)?;
    eprintln!("analyzed {} records into {}", rows.len(), args.out_dir.display());
    Ok(())
}

fn parse_dataset_flag(s: &str) -> Result<DatasetSpec, CliError> {
    let (kind_s, rest) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("dataset '{s}' is not kind=path[:limit]")))?;
    let kind = DatasetKind::parse(kind_s)
        .ok_or_else(|| usage(format!("unknown dataset kind '{kind_s}'")))?;
    let (path, limit) = match rest.rsplit_once(':') {
        Some((p, l)) if l.chars().all(|c| c.is_ascii_digit()) && !l.is_empty() => {
            (p.to_string(), Some(l.parse::<usize>().map_err(runtime)?))
        }
        _ => (rest.to_string(), None),
    };
    Ok(DatasetSpec {
        kind,
        path: PathBuf::from(path),
        limit,
    })
}

fn bench(args: &BenchArgs, config: &GlobalConfig) -> Result<(), CliError> {
    // plan file first, flags override
    let mut plan: RunPlan = match &args.plan {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("bad plan file: {e}")))?
        }
        None => RunPlan {
            datasets: Vec::new(),
            conditions: Vec::new(),
            baseline_text: config.baseline_text.clone(),
            seed: config.seed,
            output_path: PathBuf::new(),
            text_match: TextMatchMode::Contains,
            workers: 4,
        },
    };
    for d in &args.datasets {
        plan.datasets.push(parse_dataset_flag(d)?);
    }
    for c in &args.conditions {
        let cond =
            Condition::parse(c).ok_or_else(|| usage(format!("unknown condition '{c}'")))?;
        if !plan.conditions.contains(&cond) {
            plan.conditions.push(cond);
        }
    }
    if let Some(s) = args.seed {
        plan.seed = s;
    }
    if let Some(t) = &args.baseline_text {
        plan.baseline_text = t.clone();
    }
    if let Some(w) = args.workers {
        plan.workers = w;
    }
    if let Some(o) = &args.out {
        plan.output_path = o.clone();
    }
    if plan.output_path.as_os_str().is_empty() {
        return Err(usage("no result log path: pass --out or set output_path in the plan"));
    }
    if plan.datasets.is_empty() {
        return Err(usage("no datasets: pass --dataset kind=path[:limit]"));
    }
    if args.models.is_empty() {
        return Err(usage("no models: pass --model <provider-name>"));
    }

    let mut models: Vec<(String, Arc<dyn ChatProvider>)> = Vec::new();
    for name in &args.models {
        models.push((name.clone(), find_provider(config, name)?));
    }
    let judge = if args.judge == "exact" {
        Judge::Exact
    } else {
        Judge::Llm(find_provider(config, &args.judge)?)
    };

    let mut corpora: BTreeMap<Condition, Vec<PromptRecord>> = BTreeMap::new();
    let hormonal: Vec<Condition> = plan
        .conditions_with_baseline()
        .into_iter()
        .filter(|c| *c != Condition::Baseline)
        .collect();
    if !hormonal.is_empty() {
        let corpus_path = args
            .corpus
            .as_ref()
            .ok_or_else(|| usage("hormonal conditions need --corpus <file>"))?;
        let f = std::fs::File::open(corpus_path)
            .map_err(|e| runtime(format!("{}: {e}", corpus_path.display())))?;
        let mut records = prompt::read_corpus(f).map_err(runtime)?;
        for path in &args.hormones {
            let f = std::fs::File::open(path)
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            let samples = rhythm::read_sample_csv(f).map_err(runtime)?;
            let kind = samples
                .first()
                .map(|(pt, _)| pt.cycle_kind)
                .ok_or_else(|| runtime(format!("{}: empty hormone CSV", path.display())))?;
            let mut subset: Vec<PromptRecord> = records
                .iter()
                .filter(|r| {
                    (kind == CycleKind::Menstrual && r.condition == Condition::Menstrual)
                        || (kind == CycleKind::Circadian && r.condition == Condition::Circadian)
                })
                .cloned()
                .collect();
            prompt::join_hormones(&mut subset, &samples).map_err(runtime)?;
            let by_id: BTreeMap<String, PromptRecord> =
                subset.into_iter().map(|r| (r.id.clone(), r)).collect();
            for r in records.iter_mut() {
                if let Some(joined) = by_id.get(&r.id) {
                    r.hormones = joined.hormones;
                }
            }
        }
        for cond in hormonal {
            let subset: Vec<PromptRecord> = records
                .iter()
                .filter(|r| r.condition == cond)
                .cloned()
                .collect();
            if subset.is_empty() {
                return Err(usage(format!("corpus has no records for condition {cond}")));
            }
            corpora.insert(cond, subset);
        }
    }

    let ctx = BenchContext {
        models,
        judge,
        corpora,
    };
    let summary = endorhythm_core::bench::run_benchmark(&plan, &ctx).map_err(runtime)?;
    println!(
        "new={} resumed={} errors={}",
        summary.new_results, summary.skipped_existing, summary.errors
    );
    for (cond, s) in &summary.per_condition {
        println!("{cond}: n={} mean_score={:.4}", s.n, s.mean_score);
    }
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> Result<(), CliError> {
    let results = endorhythm_core::bench::read_results(&args.results).map_err(runtime)?;
    if results.is_empty() {
        return Err(runtime("result log is empty"));
    }

    let mut groupings = vec![
        (
            Grouping::ByCondition,
            report::aggregate(&results, Grouping::ByCondition).map_err(runtime)?,
        ),
        (
            Grouping::ByPhase,
            report::aggregate(&results, Grouping::ByPhase).map_err(runtime)?,
        ),
    ];
    for s in &args.signals {
        let signal =
            Signal::parse(s).ok_or_else(|| usage(format!("unknown hormone signal '{s}'")))?;
        let g = Grouping::ByHormoneQuintile(signal);
        match report::aggregate(&results, g) {
            Ok(cells) => groupings.push((g, cells)),
            Err(e) => eprintln!("skipping {s} quintiles: {e}"),
        }
    }

    let mut datasets: Vec<String> = results.iter().map(|r| r.dataset.to_string()).collect();
    datasets.sort();
    datasets.dedup();
    let mut tests = Vec::new();
    for d in &datasets {
        match report::compare_conditions(&results, d, args.model.as_deref()) {
            Ok(mut t) => tests.append(&mut t),
            Err(e) => eprintln!("skipping comparisons for {d}: {e}"),
        }
    }

    let files = report::emit_report(&groupings, &tests, &args.out_dir).map_err(runtime)?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}
