//! Graph-to-reservoir conversion and NARMA task evaluation.
//!
//! An edge u->v becomes weight +1 when the endpoint states match and -1
//! when they differ, stored at W[v][u] (row = target node). Node states
//! select activations through a configurable map. Input weights are drawn
//! i.i.d. from {-1, 0, +1} with equal probability.
//!
//! Update rule, x(0) = 0:
//!   x(t+1)[i] = f_i( feedback_gain * sum_j W[i][j] x(t)[j]
//!                  + input_gain * W_in[i] u(t) )

use crate::graph::StateGraph;
use crate::narma::{narma_series, NarmaError, NarmaParams};
use crate::ridge::{RidgeBasis, RidgeConfig, RidgeError};
use crate::seeds;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReservoirError {
    #[error("cannot build a reservoir from an empty graph")]
    EmptyGraph,
    #[error("no activation mapped for state {state}")]
    StateNotMapped { state: u8 },
    #[error("reservoir state exceeded {limit} at step {step}")]
    Diverged { step: usize, limit: f64 },
    #[error("prediction length {pred} does not match truth length {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("target series has zero variance")]
    ZeroVariance,
    #[error("evaluation needs at least one repeat")]
    ZeroRepeats,
    #[error(transparent)]
    Ridge(#[from] RidgeError),
    #[error(transparent)]
    Narma(#[from] NarmaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }
}

/// Evaluation protocol parameters. Defaults: washout 100, train 2000,
/// test 1000, 5 repeats, input gain 0.1, feedback gain 0.95, states 0 and 1
/// tanh, state 2 linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub washout: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub repeats: usize,
    pub input_gain: f64,
    pub feedback_gain: f64,
    pub activation_map: Vec<Activation>,
    pub ridge: RidgeConfig,
    pub divergence_limit: f64,
    pub rng_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            washout: 100,
            train_len: 2000,
            test_len: 1000,
            repeats: 5,
            input_gain: 0.1,
            feedback_gain: 0.95,
            activation_map: vec![Activation::Tanh, Activation::Tanh, Activation::Linear],
            ridge: RidgeConfig::default(),
            divergence_limit: 1e6,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirSystem {
    w: DMatrix<f64>,
    act: Vec<Activation>,
    w_in: DVector<f64>,
    input_gain: f64,
    feedback_gain: f64,
}

/// Signed adjacency matrix of the graph: W[v][u] = +1 for an edge u->v
/// between equal states, -1 between different states, 0 otherwise.
pub fn bipolarize(g: &StateGraph) -> Result<DMatrix<f64>, ReservoirError> {
    if g.is_empty() {
        return Err(ReservoirError::EmptyGraph);
    }
    let ids: Vec<_> = g.node_ids().collect();
    let index: std::collections::BTreeMap<_, _> =
        ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = ids.len();
    let mut w = DMatrix::zeros(n, n);
    for (src, dst) in g.edges() {
        let sign = if g.state_of(src) == g.state_of(dst) { 1.0 } else { -1.0 };
        w[(index[&dst], index[&src])] = sign;
    }
    Ok(w)
}

/// Converts a grown graph into a runnable reservoir, drawing input weights
/// from `rng`. Node order is ascending id.
pub fn build_reservoir(
    g: &StateGraph,
    cfg: &EvalConfig,
    rng: &mut impl Rng,
) -> Result<ReservoirSystem, ReservoirError> {
    let w = bipolarize(g)?;
    let mut act = Vec::with_capacity(g.node_count());
    for (_, state) in g.nodes() {
        let f = cfg
            .activation_map
            .get(state as usize)
            .copied()
            .ok_or(ReservoirError::StateNotMapped { state })?;
        act.push(f);
    }
    let w_in = DVector::from_fn(g.node_count(), |_, _| match rng.gen_range(0..3u8) {
        0 => -1.0,
        1 => 0.0,
        _ => 1.0,
    });
    Ok(ReservoirSystem { w, act, w_in, input_gain: cfg.input_gain, feedback_gain: cfg.feedback_gain })
}

impl ReservoirSystem {
    /// Assembles a reservoir from explicit parts, e.g. one loaded from a dump
    /// or constructed for a controlled experiment.
    pub fn new(
        w: DMatrix<f64>,
        act: Vec<Activation>,
        w_in: DVector<f64>,
        input_gain: f64,
        feedback_gain: f64,
    ) -> Result<Self, ReservoirError> {
        let n = act.len();
        if n == 0 {
            return Err(ReservoirError::EmptyGraph);
        }
        if w.nrows() != n || w.ncols() != n || w_in.len() != n {
            return Err(ReservoirError::LengthMismatch { pred: w.nrows(), truth: n });
        }
        Ok(Self { w, act, w_in, input_gain, feedback_gain })
    }

    pub fn n(&self) -> usize {
        self.act.len()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn input_weights(&self) -> &DVector<f64> {
        &self.w_in
    }

    /// Drives the reservoir over `inputs`; returns one state row per input
    /// with the first `washout` rows dropped.
    pub fn run(
        &self,
        inputs: &[f64],
        washout: usize,
        divergence_limit: f64,
    ) -> Result<DMatrix<f64>, ReservoirError> {
        let n = self.n();
        let kept = inputs.len().saturating_sub(washout);
        let mut states = DMatrix::zeros(kept, n);
        let mut x = DVector::zeros(n);
        let mut pre = DVector::zeros(n);
        for (t, &u) in inputs.iter().enumerate() {
            pre.gemv(self.feedback_gain, &self.w, &x, 0.0);
            for i in 0..n {
                let drive = pre[i] + self.input_gain * self.w_in[i] * u;
                let next = self.act[i].apply(drive);
                if !next.is_finite() || next.abs() > divergence_limit {
                    return Err(ReservoirError::Diverged { step: t, limit: divergence_limit });
                }
                x[i] = next;
            }
            if t >= washout {
                states.row_mut(t - washout).copy_from(&x.transpose());
            }
        }
        Ok(states)
    }
}

// Dump format: W row-major, activations as strings, alpha = feedback gain,
// beta = input gain.
#[derive(Serialize, Deserialize)]
struct ReservoirJson {
    n: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    act: Vec<Activation>,
    #[serde(rename = "W_in")]
    w_in: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl Serialize for ReservoirSystem {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let n = self.n();
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                w.push(self.w[(i, j)]);
            }
        }
        ReservoirJson {
            n,
            w,
            act: self.act.clone(),
            w_in: self.w_in.iter().copied().collect(),
            alpha: self.feedback_gain,
            beta: self.input_gain,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ReservoirSystem {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = ReservoirJson::deserialize(deserializer)?;
        if raw.w.len() != raw.n * raw.n || raw.act.len() != raw.n || raw.w_in.len() != raw.n {
            return Err(D::Error::custom("inconsistent reservoir dimensions"));
        }
        let w = DMatrix::from_row_slice(raw.n, raw.n, &raw.w);
        Ok(ReservoirSystem {
            w,
            act: raw.act,
            w_in: DVector::from_vec(raw.w_in),
            input_gain: raw.beta,
            feedback_gain: raw.alpha,
        })
    }
}

/// Root-mean-square error normalized by the truth's population variance.
pub fn nrmse(pred: &[f64], truth: &[f64]) -> Result<f64, ReservoirError> {
    if pred.len() != truth.len() {
        return Err(ReservoirError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(ReservoirError::ZeroVariance);
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    Ok((mse / var).sqrt())
}

/// Why an evaluation scored zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessFailure {
    Empty,
    Extinct,
    Overgrown,
    OverBudget,
    Diverged,
}

impl std::fmt::Display for FitnessFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            FitnessFailure::Empty => "empty",
            FitnessFailure::Extinct => "extinct",
            FitnessFailure::Overgrown => "overgrown",
            FitnessFailure::OverBudget => "over_budget",
            FitnessFailure::Diverged => "diverged",
        };
        f.write_str(tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskFitness {
    /// Median over repeats of 1 / (1 + NRMSE); 0 on failure.
    pub fitness: f64,
    pub nrmse_median: Option<f64>,
    pub nrmse_repeats: Vec<f64>,
    pub failure: Option<FitnessFailure>,
}

impl TaskFitness {
    fn failed(failure: FitnessFailure) -> Self {
        Self { fitness: 0.0, nrmse_median: None, nrmse_repeats: Vec::new(), failure: Some(failure) }
    }
}

/// Scores a graph on a NARMA task: per repeat, fresh input weights and a
/// fresh series; train a Bayesian ridge readout, measure test NRMSE.
/// Over-budget and empty graphs score 0 with a reason instead of erroring;
/// a diverging reservoir short-circuits the whole evaluation to 0.
pub fn evaluate_task(
    g: &StateGraph,
    params: &NarmaParams,
    cfg: &EvalConfig,
    budget: Option<usize>,
) -> Result<TaskFitness, ReservoirError> {
    if cfg.repeats == 0 {
        return Err(ReservoirError::ZeroRepeats);
    }
    if g.is_empty() {
        return Ok(TaskFitness::failed(FitnessFailure::Empty));
    }
    if let Some(budget) = budget {
        if g.node_count() > budget {
            return Ok(TaskFitness::failed(FitnessFailure::OverBudget));
        }
    }
    let total = cfg.washout + cfg.train_len + cfg.test_len + 1;
    let mut nrmses = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
            cfg.rng_seed,
            seeds::stream::INPUT_WEIGHTS,
            r as u64,
        ));
        let sys = build_reservoir(g, cfg, &mut rng)?;
        let series =
            narma_series(params, total, seeds::derive(cfg.rng_seed, seeds::stream::TASK_DATA, r as u64))?;
        let states = match sys.run(&series.u[..total - 1], cfg.washout, cfg.divergence_limit) {
            Ok(states) => states,
            Err(ReservoirError::Diverged { .. }) => {
                return Ok(TaskFitness::failed(FitnessFailure::Diverged))
            }
            Err(other) => return Err(other),
        };
        // State row i sits at absolute time washout + i and predicts y one
        // step ahead.
        let x_train = states.rows(0, cfg.train_len).into_owned();
        let x_test = states.rows(cfg.train_len, cfg.test_len).into_owned();
        let y_train = &series.y[cfg.washout + 1..cfg.washout + 1 + cfg.train_len];
        let y_test =
            &series.y[cfg.washout + 1 + cfg.train_len..cfg.washout + 1 + cfg.train_len + cfg.test_len];
        let basis = RidgeBasis::new(&x_train)?;
        let fit = basis.fit(y_train, &cfg.ridge)?;
        let pred: Vec<f64> = fit.predict(&x_test).iter().copied().collect();
        nrmses.push(nrmse(&pred, y_test)?);
    }
    let fitnesses: Vec<f64> = nrmses.iter().map(|e| 1.0 / (1.0 + e)).collect();
    let fitness = crate::stats::median(&fitnesses).expect("repeats >= 1");
    let nrmse_median = crate::stats::median(&nrmses).expect("repeats >= 1");
    Ok(TaskFitness { fitness, nrmse_median: Some(nrmse_median), nrmse_repeats: nrmses, failure: None })
}
