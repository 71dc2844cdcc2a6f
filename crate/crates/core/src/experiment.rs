//! Experiment orchestration: many independent evolutionary runs, each with a
//! derived seed, post-processed into one records table plus per-run trial
//! logs and best-graph dumps.
//!
//! Runs execute in parallel but append to `records.csv` strictly in run-id
//! order through a shared buffer, so the file is byte-identical for a given
//! seed regardless of thread timing, and a crash leaves a valid prefix.
//! Timestamps live only in `manifest.json`.

use crate::classify::{classify, StructureClass};
use crate::graph::StateGraph;
use crate::metrics::{metric_suite, MetricSuite};
use crate::mga::{mga_run, MgaConfig, MgaError, MgaRunResult, TRIAL_CSV_HEADER};
use crate::narma::NarmaParams;
use crate::reservoir::evaluate_task;
use crate::seeds;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// NARMA orders evaluated for every best reservoir; these back the fixed
/// `nrmse_10,nrmse_20,nrmse_30` record columns.
pub const RECORD_NARMA_ORDERS: [usize; 3] = [10, 20, 30];

pub const RECORDS_CSV_HEADER: &str =
    "run_id,best_fitness,nrmse_10,nrmse_20,nrmse_30,nodes,budget_pct,class,kr,gr,lmc,sr";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Mga(#[from] MgaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub mga: MgaConfig,
    pub out_dir: PathBuf,
    pub rng_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            runs: 150,
            mga: MgaConfig::default(),
            out_dir: PathBuf::from("experiment-out"),
            rng_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs == 0 {
            return Err(ExperimentError::BadConfig("at least one run required".into()));
        }
        self.mga.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: u64,
    pub best_fitness: f64,
    /// Median NRMSE of the best reservoir per order in
    /// [`RECORD_NARMA_ORDERS`]; NaN where evaluation failed.
    pub nrmse: [f64; 3],
    pub nodes: usize,
    pub budget_pct: f64,
    pub class: Option<StructureClass>,
    pub suite: Option<MetricSuite>,
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        let class = self.class.map_or_else(|| "none".to_string(), |c| c.to_string());
        let (kr, gr, lmc, sr) = match &self.suite {
            Some(s) => (s.kr_norm, s.gr_norm, s.lmc_norm, s.sr),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            fmt_num(self.best_fitness),
            fmt_num(self.nrmse[0]),
            fmt_num(self.nrmse[1]),
            fmt_num(self.nrmse[2]),
            self.nodes,
            fmt_num(self.budget_pct),
            class,
            fmt_num(kr),
            fmt_num(gr),
            fmt_num(lmc),
            fmt_num(sr),
        )
    }
}

/// Random directed graph: every ordered pair, self-loops included, carries
/// an edge with probability `density`; states are uniform.
pub fn control_esn(
    n: usize,
    density: f64,
    s: u8,
    rng: &mut impl Rng,
) -> Result<StateGraph, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::BadConfig("control graph needs at least one node".into()));
    }
    if !(0.0..=1.0).contains(&density) || density == 0.0 {
        return Err(ExperimentError::BadConfig(format!("density {density} outside (0, 1]")));
    }
    let mut g = StateGraph::new(s).map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
    for i in 0..n as u64 {
        let state = rng.gen_range(0..s);
        g.add_node(crate::graph::NodeId(i), state)
            .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
    }
    for i in 0..n as u64 {
        for j in 0..n as u64 {
            if rng.gen_bool(density) {
                g.add_edge(crate::graph::NodeId(i), crate::graph::NodeId(j))
                    .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
            }
        }
    }
    Ok(g)
}

/// Scores one finished run: task NRMSE at the three record orders, metric
/// suite, and structure class of the best graph. A run without a usable
/// graph records zeros and NaNs.
fn post_process(run_id: u64, run_seed: u64, result: &MgaRunResult, cfg: &ExperimentConfig) -> ExperimentRecord {
    let graph = match &result.best_graph {
        Some(g) if !g.is_empty() => g,
        _ => {
            return ExperimentRecord {
                run_id,
                best_fitness: result.best_fitness,
                nrmse: [f64::NAN; 3],
                nodes: 0,
                budget_pct: f64::NAN,
                class: None,
                suite: None,
            }
        }
    };
    let mut nrmse = [f64::NAN; 3];
    for (slot, order) in RECORD_NARMA_ORDERS.iter().enumerate() {
        let mut eval = cfg.mga.eval.clone();
        eval.rng_seed = seeds::derive(run_seed, seeds::stream::TASK_DATA, *order as u64);
        if let Ok(t) = evaluate_task(graph, &NarmaParams::for_order(*order), &eval, None) {
            if let Some(m) = t.nrmse_median {
                nrmse[slot] = m;
            }
        }
    }
    let mut metric = cfg.mga.metric.clone();
    metric.rng_seed = run_seed;
    let suite = metric_suite(graph, &cfg.mga.eval, &metric).ok();
    let nodes = graph.node_count();
    ExperimentRecord {
        run_id,
        best_fitness: result.best_fitness,
        nrmse,
        nodes,
        budget_pct: 100.0 * nodes as f64 / cfg.mga.growth.budget as f64,
        class: Some(classify(graph).class),
        suite,
    }
}

/// Appends rows in run-id order no matter the completion order.
struct OrderedAppender {
    file: File,
    next: u64,
    pending: BTreeMap<u64, String>,
}

impl OrderedAppender {
    fn push(&mut self, run_id: u64, row: String) -> std::io::Result<()> {
        self.pending.insert(run_id, row);
        while let Some(row) = self.pending.remove(&self.next) {
            writeln!(self.file, "{row}")?;
            self.file.flush()?;
            self.next += 1;
        }
        Ok(())
    }
}

fn write_manifest(cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    let started_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = serde_json::json!({
        "config": cfg,
        "records_header": RECORDS_CSV_HEADER,
        "narma_orders": RECORD_NARMA_ORDERS,
        "started_unix": started_unix,
    });
    fs::write(cfg.out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn write_run_files(
    dir: &Path,
    run_id: u64,
    result: &MgaRunResult,
) -> Result<(), ExperimentError> {
    let mut trial_csv = String::with_capacity(result.history.len() * 48);
    trial_csv.push_str(TRIAL_CSV_HEADER);
    trial_csv.push('\n');
    for r in &result.history {
        trial_csv.push_str(&r.csv_row());
        trial_csv.push('\n');
    }
    fs::write(dir.join("trials").join(format!("run_{run_id}.csv")), trial_csv)?;
    if let Some(graph) = &result.best_graph {
        if !graph.is_empty() {
            fs::write(
                dir.join("graphs").join(format!("run_{run_id}.json")),
                serde_json::to_string(graph)? + "\n",
            )?;
        }
    }
    Ok(())
}

/// Runs the full experiment; returns the records in run order. Everything on
/// disk under `cfg.out_dir`: records.csv, manifest.json, trials/run_*.csv,
/// graphs/run_*.json.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(cfg.out_dir.join("trials"))?;
    fs::create_dir_all(cfg.out_dir.join("graphs"))?;
    write_manifest(cfg)?;
    let mut records_file = File::create(cfg.out_dir.join("records.csv"))?;
    writeln!(records_file, "{RECORDS_CSV_HEADER}")?;
    records_file.flush()?;
    let appender = Mutex::new(OrderedAppender {
        file: records_file,
        next: 0,
        pending: BTreeMap::new(),
    });
    let records = Mutex::new(BTreeMap::<u64, ExperimentRecord>::new());
    let first_error = Mutex::new(None::<ExperimentError>);

    (0..cfg.runs as u64).into_par_iter().for_each(|run_id| {
        let run_one = || -> Result<(), ExperimentError> {
            let run_seed = seeds::derive(cfg.rng_seed, seeds::stream::RUN, run_id);
            let mga_cfg = MgaConfig { rng_seed: run_seed, ..cfg.mga.clone() };
            let result = mga_run(run_id, &mga_cfg)?;
            write_run_files(&cfg.out_dir, run_id, &result)?;
            let record = post_process(run_id, run_seed, &result, cfg);
            let row = record.csv_row();
            records.lock().expect("record store poisoned").insert(run_id, record);
            appender.lock().expect("appender poisoned").push(run_id, row)?;
            Ok(())
        };
        if let Err(e) = run_one() {
            let mut slot = first_error.lock().expect("error slot poisoned");
            if slot.is_none() {
                *slot = Some(e);
            }
        }
    });

    if let Some(e) = first_error.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    let records = records.into_inner().expect("record store poisoned");
    Ok(records.into_values().collect())
}
