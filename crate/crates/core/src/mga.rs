//! Microbial genetic algorithm over automaton genomes.
//!
//! The population is two pools of chromosomes (action MLP and state SLP); a
//! composite individual is an (mlp, slp) index pair, coupled only at
//! evaluation time. Each trial samples two distinct pairs, grows and scores
//! both, and rewrites the loser in place: every gene is taken from the
//! winner with the transfer probability, then perturbed with the mutation
//! probability. The winner is never modified — a chromosome slot shared
//! with the winner is left alone entirely.
//!
//! Fitness evaluation is deterministic given an evaluation seed, so scores
//! are cached per index pair together with that seed; rewriting a
//! chromosome invalidates every cached entry that referenced its slot. The
//! cache can be disabled to force re-evaluation on every trial.

use crate::classify::{classify, StructureClass};
use crate::dgca::{grow, DgcaError, Genome, GrowthConfig};
use crate::graph::StateGraph;
use crate::metrics::{metric_fitness, MetricConfig, MetricKind};
use crate::narma::NarmaParams;
use crate::reservoir::{evaluate_task, EvalConfig};
use crate::seeds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MgaError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Dgca(#[from] DgcaError),
}

/// What a grown graph is scored on: a NARMA order or a reservoir metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessSpec {
    Narma { order: usize },
    Metric(MetricKind),
}

impl fmt::Display for FitnessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitnessSpec::Narma { order } => write!(f, "narma:{order}"),
            FitnessSpec::Metric(kind) => write!(f, "metric:{kind}"),
        }
    }
}

impl FromStr for FitnessSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, tail) = s
            .split_once(':')
            .ok_or_else(|| format!("fitness spec {s:?} is not of the form kind:value"))?;
        match head {
            "narma" => {
                let order: usize =
                    tail.parse().map_err(|_| format!("bad NARMA order {tail:?}"))?;
                if order == 0 {
                    return Err("NARMA order must be at least 1".into());
                }
                Ok(FitnessSpec::Narma { order })
            }
            "metric" => {
                let kind = match tail {
                    "kr" => MetricKind::Kr,
                    "gr" => MetricKind::Gr,
                    "lmc" => MetricKind::Lmc,
                    "sr" => MetricKind::Sr,
                    "all" => MetricKind::All,
                    other => return Err(format!("unknown metric {other:?}")),
                };
                Ok(FitnessSpec::Metric(kind))
            }
            other => Err(format!("unknown fitness kind {other:?}")),
        }
    }
}

impl Serialize for FitnessSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FitnessSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MgaConfig {
    pub s: u8,
    pub hidden: usize,
    pub mlp_pool: usize,
    pub slp_pool: usize,
    pub iterations: usize,
    pub transfer_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub init_scale: f64,
    pub fitness: FitnessSpec,
    pub growth: GrowthConfig,
    pub eval: EvalConfig,
    pub metric: MetricConfig,
    pub cache: bool,
    pub rng_seed: u64,
}

impl Default for MgaConfig {
    fn default() -> Self {
        Self {
            s: 3,
            hidden: 64,
            mlp_pool: 10,
            slp_pool: 10,
            iterations: 1000,
            transfer_rate: 0.5,
            mutation_rate: 0.02,
            mutation_sigma: 0.1,
            init_scale: 1.0,
            fitness: FitnessSpec::Narma { order: 10 },
            growth: GrowthConfig::default(),
            eval: EvalConfig::default(),
            metric: MetricConfig::default(),
            cache: true,
            rng_seed: 0,
        }
    }
}

impl MgaConfig {
    pub fn validate(&self) -> Result<(), MgaError> {
        let bad = |msg: String| Err(MgaError::BadConfig(msg));
        if self.s == 0 {
            return bad("zero states".into());
        }
        if self.hidden == 0 {
            return bad("zero hidden units".into());
        }
        if self.mlp_pool.max(self.slp_pool) < 2 || self.mlp_pool.min(self.slp_pool) < 1 {
            return bad("pools must allow two distinct composite individuals".into());
        }
        if self.iterations == 0 {
            return bad("at least one iteration required".into());
        }
        for (name, rate) in
            [("transfer_rate", self.transfer_rate), ("mutation_rate", self.mutation_rate)]
        {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if !self.mutation_sigma.is_finite() || self.mutation_sigma < 0.0 {
            return bad(format!("bad mutation sigma {}", self.mutation_sigma));
        }
        if self.growth.seed_state >= self.s {
            return bad(format!("seed state {} out of range", self.growth.seed_state));
        }
        if self.eval.activation_map.len() < self.s as usize {
            return bad("activation map does not cover all states".into());
        }
        if self.growth.budget == 0 {
            return bad("zero budget".into());
        }
        Ok(())
    }
}

/// One evaluation outcome, reusable while both chromosomes stay untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedEval {
    pub fitness: f64,
    pub eval_seed: u64,
    pub nodes: usize,
    pub class: Option<StructureClass>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub mlp_pool: Vec<Vec<f64>>,
    pub slp_pool: Vec<Vec<f64>>,
    pub fitness_cache: BTreeMap<(usize, usize), CachedEval>,
}

pub fn init_population(cfg: &MgaConfig, rng: &mut impl Rng) -> Population {
    let scale = cfg.init_scale;
    let mut chromosome = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
    };
    let mlp_len = Genome::mlp_len(cfg.s, cfg.hidden);
    let slp_len = Genome::slp_len(cfg.s);
    Population {
        mlp_pool: (0..cfg.mlp_pool).map(|_| chromosome(mlp_len)).collect(),
        slp_pool: (0..cfg.slp_pool).map(|_| chromosome(slp_len)).collect(),
        fitness_cache: BTreeMap::new(),
    }
}

/// Grows and scores one composite individual under `eval_seed`.
pub(crate) fn evaluate_chromosomes(
    cfg: &MgaConfig,
    mlp: &[f64],
    slp: &[f64],
    eval_seed: u64,
) -> CachedEval {
    let failed = |nodes: usize, class: Option<StructureClass>, reason: &str| CachedEval {
        fitness: 0.0,
        eval_seed,
        nodes,
        class,
        reason: Some(reason.to_string()),
    };
    let genome = Genome::from_chromosomes(cfg.s, cfg.hidden, mlp.to_vec(), slp.to_vec())
        .expect("pool chromosomes have validated lengths");
    let grown = match grow(&genome, &cfg.growth) {
        Ok(g) => g,
        Err(_) => return failed(0, None, "error"),
    };
    if grown.extinct {
        return failed(0, None, "extinct");
    }
    let class = Some(classify(&grown.graph).class);
    let nodes = grown.graph.node_count();
    if grown.overgrown {
        return failed(nodes, class, "overgrown");
    }
    let budget = Some(cfg.growth.budget);
    let outcome = match cfg.fitness {
        FitnessSpec::Narma { order } => {
            let mut eval = cfg.eval.clone();
            eval.rng_seed = eval_seed;
            evaluate_task(&grown.graph, &NarmaParams::for_order(order), &eval, budget)
                .map(|t| (t.fitness, t.failure.map(|f| f.to_string())))
        }
        FitnessSpec::Metric(kind) => {
            let mut metric = cfg.metric.clone();
            metric.rng_seed = eval_seed;
            metric_fitness(&grown.graph, kind, &cfg.eval, &metric, budget)
                .map(|(f, why)| (f, why.map(|w| w.to_string())))
        }
    };
    match outcome {
        Ok((fitness, reason)) => {
            CachedEval { fitness: if reason.is_some() { 0.0 } else { fitness }, eval_seed, nodes, class, reason }
        }
        Err(_) => failed(nodes, class, "error"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub run_id: u64,
    pub trial: usize,
    pub winner_pair: (usize, usize),
    pub loser_pair: (usize, usize),
    pub winner_fitness: f64,
    pub loser_fitness: f64,
    pub winner_nodes: usize,
    pub structure_class: Option<StructureClass>,
    pub reason_flags: String,
}

pub const TRIAL_CSV_HEADER: &str =
    "run_id,trial,winner_fitness,loser_fitness,winner_nodes,structure_class,reason_flags";

impl TrialRecord {
    pub fn csv_row(&self) -> String {
        let class = self.structure_class.map_or_else(|| "none".to_string(), |c| c.to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.run_id,
            self.trial,
            self.winner_fitness,
            self.loser_fitness,
            self.winner_nodes,
            class,
            self.reason_flags
        )
    }
}

fn sample_pair(cfg: &MgaConfig, rng: &mut impl Rng) -> (usize, usize) {
    (rng.gen_range(0..cfg.mlp_pool), rng.gen_range(0..cfg.slp_pool))
}

fn lookup_or_evaluate(
    pop: &mut Population,
    cfg: &MgaConfig,
    pair: (usize, usize),
    rng: &mut impl Rng,
) -> CachedEval {
    if cfg.cache {
        if let Some(hit) = pop.fitness_cache.get(&pair) {
            return hit.clone();
        }
    }
    let eval_seed = rng.gen::<u64>();
    let eval = evaluate_chromosomes(cfg, &pop.mlp_pool[pair.0], &pop.slp_pool[pair.1], eval_seed);
    if cfg.cache {
        pop.fitness_cache.insert(pair, eval.clone());
    }
    eval
}

/// One tournament: evaluate two sampled pairs, rewrite the loser. Ties go to
/// the first-sampled pair.
pub fn trial(
    pop: &mut Population,
    cfg: &MgaConfig,
    run_id: u64,
    trial_idx: usize,
    rng: &mut impl Rng,
) -> TrialRecord {
    let a = sample_pair(cfg, rng);
    let b = loop {
        let b = sample_pair(cfg, rng);
        if b != a {
            break b;
        }
    };
    let eval_a = lookup_or_evaluate(pop, cfg, a, rng);
    let eval_b = lookup_or_evaluate(pop, cfg, b, rng);
    let (winner, loser, win_eval, lose_eval) = if eval_b.fitness > eval_a.fitness {
        (b, a, &eval_b, &eval_a)
    } else {
        (a, b, &eval_a, &eval_b)
    };

    let normal = Normal::new(0.0, cfg.mutation_sigma).expect("validated sigma");
    let mut rewrite = |loser_c: usize, winner_c: usize, pool: &mut Vec<Vec<f64>>| -> bool {
        if loser_c == winner_c {
            // Shared slot: rewriting it would also rewrite the winner.
            return false;
        }
        let winner_genes = pool[winner_c].clone();
        for (gene, &w) in pool[loser_c].iter_mut().zip(&winner_genes) {
            if rng.gen_bool(cfg.transfer_rate) {
                *gene = w;
            }
            if rng.gen_bool(cfg.mutation_rate) {
                *gene += normal.sample(rng);
            }
        }
        true
    };
    let mlp_rewritten = rewrite(loser.0, winner.0, &mut pop.mlp_pool);
    let slp_rewritten = rewrite(loser.1, winner.1, &mut pop.slp_pool);
    if mlp_rewritten {
        pop.fitness_cache.retain(|&(mi, _), _| mi != loser.0);
    }
    if slp_rewritten {
        pop.fitness_cache.retain(|&(_, si), _| si != loser.1);
    }

    let reason_flags: String = [win_eval.reason.as_deref(), lose_eval.reason.as_deref()]
        .iter()
        .flatten()
        .copied()
        .collect::<Vec<_>>()
        .join("|");
    TrialRecord {
        run_id,
        trial: trial_idx,
        winner_pair: winner,
        loser_pair: loser,
        winner_fitness: win_eval.fitness,
        loser_fitness: lose_eval.fitness,
        winner_nodes: win_eval.nodes,
        structure_class: win_eval.class,
        reason_flags,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgaRunResult {
    pub best_fitness: f64,
    pub best_trial: usize,
    pub best_genome: Option<Genome>,
    pub best_graph: Option<StateGraph>,
    pub history: Vec<TrialRecord>,
}

/// Runs `cfg.iterations` trials from a fresh population. The best-so-far
/// individual advances only on strictly greater fitness; its graph is
/// regrown from the winning genome at that moment, which is exact because
/// growth is deterministic.
pub fn mga_run(run_id: u64, cfg: &MgaConfig) -> Result<MgaRunResult, MgaError> {
    cfg.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds::derive(
        cfg.rng_seed,
        seeds::stream::POPULATION_INIT,
        0,
    ));
    let mut pop = init_population(cfg, &mut init_rng);
    let mut rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(cfg.rng_seed, seeds::stream::TRIALS, 0));
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(f64, usize, Genome, StateGraph)> = None;
    for t in 0..cfg.iterations {
        // The loser rewrite inside `trial` never touches the winner's
        // chromosomes, so the winner can be rebuilt from the pools after.
        let record = trial(&mut pop, cfg, run_id, t, &mut rng);
        let improved = match &best {
            None => true,
            Some((f, _, _, _)) => record.winner_fitness > *f,
        };
        if improved {
            let genome = Genome::from_chromosomes(
                cfg.s,
                cfg.hidden,
                pop.mlp_pool[record.winner_pair.0].clone(),
                pop.slp_pool[record.winner_pair.1].clone(),
            )
            .expect("pool chromosomes have validated lengths");
            let graph = grow(&genome, &cfg.growth)?.graph;
            best = Some((record.winner_fitness, t, genome, graph));
        }
        history.push(record);
    }
    let (best_fitness, best_trial, best_genome, best_graph) = match best {
        Some((f, t, g, gr)) => (f, t, Some(g), Some(gr)),
        None => (0.0, 0, None, None),
    };
    Ok(MgaRunResult { best_fitness, best_trial, best_genome, best_graph, history })
}
