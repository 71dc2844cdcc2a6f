//! `resgrow`: grow graphs from genomes, evaluate them as reservoirs, evolve
//! genomes, run experiment batches, and post-process records.
//!
//! File formats: genomes are JSON `{"s","hidden","mlp","slp"}`, graphs are
//! JSON `{"S","nodes","edges"}`, reservoir dumps are JSON
//! `{"n","W","act","W_in","alpha","beta"}`; configs load from TOML or JSON
//! by extension, with every omitted field taking its default.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resgrow::dgca::{grow, Genome, GrowthConfig};
use resgrow::experiment::{control_esn, run_experiment, ExperimentConfig};
use resgrow::metrics::{metric_fitness, metric_suite, MetricConfig, MetricKind};
use resgrow::mga::{mga_run, FitnessSpec, MgaConfig, TRIAL_CSV_HEADER};
use resgrow::narma::{narma_series, NarmaParams};
use resgrow::reservoir::{build_reservoir, evaluate_task, EvalConfig};
use resgrow::stats::{bonferroni, mann_whitney_u, summarize, Alternative};
use resgrow::{classify, seeds, StateGraph};
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "resgrow", version, about = "Grow echo state reservoirs with graph cellular automata")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a graph from a genome.
    Grow(GrowArgs),
    /// Score a graph on a task.
    Evaluate(EvaluateArgs),
    /// Reservoir-quality metrics of a graph.
    Metrics(MetricsArgs),
    /// Structural classification of a graph.
    Classify(ClassifyArgs),
    /// One evolutionary run.
    Evolve(EvolveArgs),
    /// A batch of independent evolutionary runs.
    Experiment(ExperimentArgs),
    /// Summary tables and pairwise U tests over records files.
    Stats(StatsArgs),
    /// Random control graph.
    Control(ControlArgs),
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Command::Grow(a) => cmd_grow(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Evolve(a) => cmd_evolve(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Control(a) => cmd_control(a),
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

/// TOML or JSON by extension; anything but `.json` is tried as TOML.
fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content).with_context(|| format!("writing {}", path.display()))?,
        None => write_stdout(content)?,
    }
    Ok(())
}

/// A closed pipe (`resgrow ... | head`) ends the command cleanly instead of
/// panicking mid-print.
fn write_stdout(content: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(content.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.context("writing to stdout"),
    }
}

#[derive(Args)]
struct GrowArgs {
    /// Genome JSON file.
    #[arg(long)]
    genome: PathBuf,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed_state: u8,
    /// Grown graph JSON destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-step growth trace destination (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn cmd_grow(a: GrowArgs) -> Result<()> {
    let genome: Genome = load_json(&a.genome, "genome")?;
    let cfg = GrowthConfig { steps: a.steps, budget: a.budget, seed_state: a.seed_state };
    let result = grow(&genome, &cfg)?;
    if let Some(path) = &a.trace {
        fs::write(path, result.trace_jsonl())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "grew {} nodes in {} steps (extinct: {}, overgrown: {})",
        result.graph.node_count(),
        result.steps_run,
        result.extinct,
        result.overgrown
    );
    let mut json = serde_json::to_string(&result.graph)?;
    json.push('\n');
    emit(a.out.as_deref(), &json)
}

#[derive(Args)]
struct EvaluateArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,
    /// Task family; only `narma`.
    #[arg(long, default_value = "narma")]
    task: String,
    #[arg(long, default_value_t = 10)]
    order: usize,
    #[arg(long)]
    washout: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Node budget; exceeding it scores 0.
    #[arg(long)]
    budget: Option<usize>,
    /// Dump the repeat-0 reservoir as JSON.
    #[arg(long)]
    dump_reservoir: Option<PathBuf>,
    /// Dump the repeat-0 task series as CSV (t,u,y).
    #[arg(long)]
    dump_series: Option<PathBuf>,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    if a.task != "narma" {
        bail!("unknown task {:?}; only narma is implemented", a.task);
    }
    let g: StateGraph = load_json(&a.graph, "graph")?;
    let mut eval = EvalConfig { rng_seed: a.seed, ..EvalConfig::default() };
    if let Some(v) = a.washout {
        eval.washout = v;
    }
    if let Some(v) = a.train {
        eval.train_len = v;
    }
    if let Some(v) = a.test {
        eval.test_len = v;
    }
    if let Some(v) = a.repeats {
        eval.repeats = v;
    }
    let params = NarmaParams::for_order(a.order);
    if let Some(path) = &a.dump_reservoir {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            eval.rng_seed,
            seeds::stream::INPUT_WEIGHTS,
            0,
        ));
        let sys = build_reservoir(&g, &eval, &mut rng)?;
        fs::write(path, serde_json::to_string(&sys)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.dump_series {
        let total = eval.washout + eval.train_len + eval.test_len + 1;
        let series =
            narma_series(&params, total, seeds::derive(eval.rng_seed, seeds::stream::TASK_DATA, 0))?;
        let mut csv = String::from("t,u,y\n");
        for (t, (u, y)) in series.u.iter().zip(&series.y).enumerate() {
            csv.push_str(&format!("{t},{u},{y}\n"));
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    let fit = evaluate_task(&g, &params, &eval, a.budget)?;
    let report = serde_json::json!({
        "fitness": fit.fitness,
        "nrmse_median": fit.nrmse_median,
        "nrmse_repeats": fit.nrmse_repeats,
        "failure": fit.failure.map(|f| f.to_string()),
    });
    write_stdout(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    Ok(())
}

#[derive(Args)]
struct MetricsArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,
    /// Full suite as one-row CSV (the default).
    #[arg(long)]
    all: bool,
    /// Single metric fitness instead: kr|gr|lmc|sr|all.
    #[arg(long, conflicts_with = "all")]
    kind: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_metric_kind(s: &str) -> Result<MetricKind> {
    Ok(match s {
        "kr" => MetricKind::Kr,
        "gr" => MetricKind::Gr,
        "lmc" => MetricKind::Lmc,
        "sr" => MetricKind::Sr,
        "all" => MetricKind::All,
        other => bail!("unknown metric kind {other:?}; expected kr|gr|lmc|sr|all"),
    })
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let g: StateGraph = load_json(&a.graph, "graph")?;
    let eval = EvalConfig { rng_seed: a.seed, ..EvalConfig::default() };
    let metric = MetricConfig { rng_seed: a.seed, ..MetricConfig::default() };
    if let Some(kind) = &a.kind {
        let kind = parse_metric_kind(kind)?;
        let (fitness, failure) = metric_fitness(&g, kind, &eval, &metric, None)?;
        if let Some(reason) = failure {
            eprintln!("scored 0: {reason}");
        }
        emit(a.out.as_deref(), &format!("{fitness}\n"))
    } else {
        let s = metric_suite(&g, &eval, &metric)?;
        let csv = format!(
            "n,kr,gr,lmc,sr,kr_norm,gr_norm,lmc_norm\n{},{},{},{},{},{},{},{}\n",
            s.n, s.kr, s.gr, s.lmc, s.sr, s.kr_norm, s.gr_norm, s.lmc_norm
        );
        if s.diverged {
            eprintln!("reservoir diverged; rank and memory metrics are zeroed");
        }
        emit(a.out.as_deref(), &csv)
    }
}

#[derive(Args)]
struct ClassifyArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let g: StateGraph = load_json(&a.graph, "graph")?;
    let mut json = serde_json::to_string_pretty(&classify::classify(&g))?;
    json.push('\n');
    emit(a.out.as_deref(), &json)
}

#[derive(Args)]
struct EvolveArgs {
    /// Evolution config (TOML or JSON); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// narma:<order> or metric:<kr|gr|lmc|sr|all>.
    #[arg(long)]
    fitness: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    run_id: u64,
    /// Receives best_genome.json, best_graph.json, trials.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

fn cmd_evolve(a: EvolveArgs) -> Result<()> {
    let mut cfg: MgaConfig = match &a.config {
        Some(path) => load_config(path)?,
        None => MgaConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.rng_seed = seed;
    }
    if let Some(iters) = a.iterations {
        cfg.iterations = iters;
    }
    if let Some(spec) = &a.fitness {
        cfg.fitness = FitnessSpec::from_str(spec).map_err(anyhow::Error::msg)?;
    }
    if let Some(budget) = a.budget {
        cfg.growth.budget = budget;
    }
    fs::create_dir_all(&a.out_dir)?;
    let result = mga_run(a.run_id, &cfg)?;
    let mut trials = String::from(TRIAL_CSV_HEADER);
    trials.push('\n');
    for r in &result.history {
        trials.push_str(&r.csv_row());
        trials.push('\n');
    }
    fs::write(a.out_dir.join("trials.csv"), trials)?;
    if let Some(genome) = &result.best_genome {
        fs::write(a.out_dir.join("best_genome.json"), serde_json::to_string(genome)? + "\n")?;
    }
    let mut nodes = 0;
    let mut class = None;
    if let Some(graph) = &result.best_graph {
        fs::write(a.out_dir.join("best_graph.json"), serde_json::to_string(graph)? + "\n")?;
        nodes = graph.node_count();
        if !graph.is_empty() {
            class = Some(classify::classify(graph).class);
        }
    }
    let report = serde_json::json!({
        "best_fitness": result.best_fitness,
        "best_trial": result.best_trial,
        "nodes": nodes,
        "class": class,
    });
    write_stdout(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    Ok(())
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML or JSON); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; required so a batch is reproducible on purpose.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// narma:<order> or metric:<kr|gr|lmc|sr|all>.
    #[arg(long)]
    fitness: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &a.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.rng_seed = a.seed;
    if let Some(dir) = a.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(runs) = a.runs {
        cfg.runs = runs;
    }
    if let Some(iters) = a.iterations {
        cfg.mga.iterations = iters;
    }
    if let Some(spec) = &a.fitness {
        cfg.mga.fitness = FitnessSpec::from_str(spec).map_err(anyhow::Error::msg)?;
    }
    if let Some(budget) = a.budget {
        cfg.mga.growth.budget = budget;
    }
    let records = run_experiment(&cfg)?;
    let best: Vec<f64> = records.iter().map(|r| r.best_fitness).collect();
    let report = serde_json::json!({
        "runs": records.len(),
        "out_dir": cfg.out_dir,
        "median_best_fitness": resgrow::stats::median(&best).ok(),
    });
    write_stdout(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    Ok(())
}

#[derive(Args)]
struct StatsArgs {
    /// records.csv files, one group per file; repeat the flag.
    #[arg(long = "records", required = true)]
    records: Vec<PathBuf>,
    /// Group labels in --records order; file stems by default.
    #[arg(long = "label")]
    labels: Vec<String>,
    /// Record columns to analyze; repeat the flag.
    #[arg(long = "column", default_values_t = vec![String::from("best_fitness")])]
    columns: Vec<String>,
    /// two-sided | greater | less (first group vs second).
    #[arg(long, default_value = "two-sided")]
    alternative: String,
    /// Family-wise significance level for the Bonferroni matrix.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_alternative(s: &str) -> Result<Alternative> {
    Ok(match s {
        "two-sided" => Alternative::TwoSided,
        "greater" => Alternative::Greater,
        "less" => Alternative::Less,
        other => bail!("unknown alternative {other:?}; expected two-sided|greater|less"),
    })
}

/// Finite values of one named column; `nan` cells are skipped.
fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading records {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header = lines.next().with_context(|| format!("{} is empty", path.display()))?;
    let idx = header
        .split(',')
        .position(|name| name == column)
        .with_context(|| format!("{} has no column {column:?}", path.display()))?;
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let cell = line
            .split(',')
            .nth(idx)
            .with_context(|| format!("{} row {} is short", path.display(), lineno + 2))?;
        let v: f64 = cell.parse().with_context(|| {
            format!("{} row {}: {cell:?} is not numeric", path.display(), lineno + 2)
        })?;
        if v.is_finite() {
            values.push(v);
        }
    }
    Ok(values)
}

fn matrix_csv(labels: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut csv = String::from("group");
    for l in labels {
        csv.push(',');
        csv.push_str(l);
    }
    csv.push('\n');
    for (i, l) in labels.iter().enumerate() {
        csv.push_str(l);
        for j in 0..labels.len() {
            csv.push(',');
            csv.push_str(&cell(i, j));
        }
        csv.push('\n');
    }
    csv
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    if !a.labels.is_empty() && a.labels.len() != a.records.len() {
        bail!("{} labels for {} records files", a.labels.len(), a.records.len());
    }
    let alternative = parse_alternative(&a.alternative)?;
    let labels: Vec<String> = if a.labels.is_empty() {
        a.records
            .iter()
            .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
            .collect()
    } else {
        a.labels.clone()
    };
    fs::create_dir_all(&a.out_dir)?;
    for column in &a.columns {
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        for (path, label) in a.records.iter().zip(&labels) {
            let values = read_column(path, column)?;
            if values.is_empty() {
                eprintln!("group {label} has no finite {column} values; omitted");
                continue;
            }
            groups.push((label.clone(), values));
        }
        if groups.is_empty() {
            bail!("no group has finite {column} values");
        }

        let by_name: BTreeMap<String, Vec<f64>> = groups.iter().cloned().collect();
        let mut summary = String::from(
            "# quartiles: linear interpolation between closest ranks\ngroup,n,median,iqr\n",
        );
        for row in summarize(&by_name)? {
            summary.push_str(&format!(
                "{},{},{:.3},{:.3}\n",
                row.group,
                row.n,
                row.median,
                row.iqr()
            ));
        }
        fs::write(a.out_dir.join(format!("summary_{column}.csv")), summary)?;

        let k = groups.len();
        let glabels: Vec<String> = groups.iter().map(|(l, _)| l.clone()).collect();
        let mut p = vec![vec![1.0; k]; k];
        let mut u = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let r = mann_whitney_u(&groups[i].1, &groups[j].1, alternative)?;
                p[i][j] = r.p;
                u[i][j] = r.u;
            }
        }
        fs::write(
            a.out_dir.join(format!("utest_p_{column}.csv")),
            matrix_csv(&glabels, |i, j| format!("{}", p[i][j])),
        )?;
        fs::write(
            a.out_dir.join(format!("utest_u_{column}.csv")),
            matrix_csv(&glabels, |i, j| format!("{}", u[i][j])),
        )?;
        if k > 1 {
            let mut off_diag = Vec::with_capacity(k * k - k);
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        off_diag.push(p[i][j]);
                    }
                }
            }
            let bonf = bonferroni(&off_diag, a.alpha)?;
            let mut flags = vec![vec![false; k]; k];
            let mut it = bonf.flags.iter();
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        flags[i][j] = *it.next().expect("one flag per off-diagonal cell");
                    }
                }
            }
            let header = format!(
                "# significant under bonferroni threshold {} (alpha {} over {} comparisons)\n",
                bonf.threshold,
                a.alpha,
                off_diag.len()
            );
            let body = matrix_csv(&glabels, |i, j| String::from(if flags[i][j] { "1" } else { "0" }));
            fs::write(a.out_dir.join(format!("utest_sig_{column}.csv")), header + &body)?;
        }
    }
    Ok(())
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long)]
    n: usize,
    /// Edge probability over all ordered pairs, self-loops included.
    #[arg(long)]
    density: f64,
    /// Number of node states.
    #[arg(long, default_value_t = 3)]
    s: u8,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_control(a: ControlArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(a.seed, seeds::stream::CONTROL, 0));
    let g = control_esn(a.n, a.density, a.s, &mut rng)?;
    let mut json = serde_json::to_string(&g)?;
    json.push('\n');
    emit(a.out.as_deref(), &json)
}
