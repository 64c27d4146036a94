//! Pure-state fitting by gradient descent with step halving and restarts.

use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{
    cost_value, cost_value_and_gradient, orthonormalize, CostSpec, NegativePhase, NqsGradient,
};
use crate::error::{Error, Result};
use crate::measurement::MeasurementDataset;
use crate::nqs::{NqsState, RbmParams, DEFAULT_INIT_SCALE};
use crate::quantum::StateVector;
use crate::rng;

/// Residual overlap with earlier eigenstates above which a run is flagged.
pub const ORTHOGONALITY_TARGET: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub cost: CostSpec,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stochastic mode: number of bases drawn (without replacement) per epoch.
    pub batch_bases: Option<usize>,
    pub seed: u64,
    /// Epochs without relative improvement above `tol_rel` before stopping.
    pub patience: usize,
    pub tol_rel: f64,
    pub restarts: usize,
    pub max_halvings: usize,
    pub init_scale: f64,
    /// Hidden units per machine; `None` means as many as qubits.
    pub n_hidden: Option<usize>,
    pub negative_phase: NegativePhase,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cost: CostSpec::default(),
            learning_rate: 0.05,
            max_epochs: 20_000,
            batch_bases: None,
            seed: 0,
            patience: 200,
            tol_rel: 1e-6,
            restarts: 1,
            max_halvings: 20,
            init_scale: DEFAULT_INIT_SCALE,
            n_hidden: None,
            negative_phase: NegativePhase::Exact,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.restarts == 0 {
            return bad("max_epochs, patience and restarts must be at least 1");
        }
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return bad("tol_rel must lie in (0, 1)");
        }
        if self.batch_bases == Some(0) || self.n_hidden == Some(0) {
            return bad("batch_bases and n_hidden must be at least 1");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and ≥ 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub restart: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No relative improvement above `tol_rel` for `patience` epochs.
    Converged,
    /// Every halved step increased the cost.
    Stalled,
    MaxEpochs,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    pub epochs: usize,
    pub final_cost: f64,
    pub stop: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    pub restarts: Vec<RestartSummary>,
    pub winner: usize,
    /// `Σ_k |⟨prev_k|ψ⟩|²` for the returned state, when earlier states were given.
    pub orthogonality: Option<f64>,
    pub orthogonality_reached: bool,
}

impl TrainingLog {
    pub fn final_cost(&self) -> f64 {
        self.restarts[self.winner].final_cost
    }

    /// `epoch,cost,grad_norm,learning_rate,restart`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,cost,grad_norm,learning_rate,restart")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.epoch,
                crate::json::format_f64(e.cost),
                crate::json::format_f64(e.grad_norm),
                crate::json::format_f64(e.learning_rate),
                e.restart
            )?;
        }
        Ok(())
    }
}

/// Fits an [`NqsState`] to `data`; returns the lowest-cost restart.
pub fn train_pure_state(data: &MeasurementDataset, config: &TrainConfig) -> Result<(NqsState, TrainingLog)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidDataset("cannot train on an empty dataset".into()));
    }
    let runs: Vec<(Option<NqsState>, Vec<LogEntry>, RestartSummary)> = (0..config.restarts)
        .into_par_iter()
        .map(|k| run_restart(data, config, k))
        .collect();

    let mut winner: Option<usize> = None;
    for (k, (state, _, summary)) in runs.iter().enumerate() {
        if state.is_none() {
            continue;
        }
        if winner.is_none_or(|w| summary.final_cost < runs[w].2.final_cost) {
            winner = Some(k);
        }
    }
    let Some(winner) = winner else {
        let reasons: Vec<String> = runs
            .iter()
            .map(|(_, _, s)| format!("restart {}: {:?}", s.restart, s.stop))
            .collect();
        return Err(Error::TrainingFailed(reasons.join("; ")));
    };
    let mut entries = Vec::new();
    let mut restarts = Vec::new();
    let mut best = None;
    for (k, (state, log, summary)) in runs.into_iter().enumerate() {
        entries.extend(log);
        restarts.push(summary);
        if k == winner {
            best = state;
        }
    }
    Ok((
        best.expect("winner has a state"),
        TrainingLog {
            entries,
            restarts,
            winner,
            orthogonality: None,
            orthogonality_reached: true,
        },
    ))
}

/// As [`train_pure_state`] with the orthogonality penalty active against `previous`
/// (orthonormalized first).
pub fn train_next_eigenstate(
    data: &MeasurementDataset,
    previous: &[StateVector],
    config: &TrainConfig,
) -> Result<(NqsState, TrainingLog)> {
    let mut cfg = config.clone();
    cfg.cost = config.cost.clone().with_orth_states(orthonormalize(previous)?)?;
    let (state, mut log) = train_pure_state(data, &cfg)?;
    if !previous.is_empty() {
        let psi = state.to_state_vector()?;
        let mut total = 0.0;
        for p in previous {
            total += p.overlap(&psi)?;
        }
        log.orthogonality = Some(total);
        log.orthogonality_reached = total <= ORTHOGONALITY_TARGET;
    }
    Ok((state, log))
}

fn step(state: &NqsState, grad: &NqsGradient, lr: f64) -> Result<NqsState> {
    let apply = |p: &RbmParams, g: &RbmParams| {
        let flat: Vec<f64> = p.flatten().iter().zip(g.flatten()).map(|(x, d)| x - lr * d).collect();
        p.with_flat(&flat)
    };
    NqsState::new(apply(&state.lambda, &grad.lambda), apply(&state.mu, &grad.mu))
}

fn run_restart(
    data: &MeasurementDataset,
    config: &TrainConfig,
    restart: usize,
) -> (Option<NqsState>, Vec<LogEntry>, RestartSummary) {
    let seed = config.seed.wrapping_add(restart as u64);
    let mut log = Vec::new();
    let mut summary = RestartSummary {
        restart,
        seed,
        epochs: 0,
        final_cost: f64::INFINITY,
        stop: StopReason::MaxEpochs,
    };
    match descend(data, config, restart, seed, &mut log, &mut summary) {
        Ok(state) => (Some(state), log, summary),
        Err(e) => {
            summary.stop = StopReason::Failed(e.to_string());
            summary.final_cost = f64::INFINITY;
            (None, log, summary)
        }
    }
}

fn descend(
    data: &MeasurementDataset,
    config: &TrainConfig,
    restart: usize,
    seed: u64,
    log: &mut Vec<LogEntry>,
    summary: &mut RestartSummary,
) -> Result<NqsState> {
    let n = data.n_qubits();
    let m = config.n_hidden.unwrap_or(n);
    let mut init_rng = rng::seeded(seed);
    let lambda = RbmParams::random(n, m, config.init_scale, &mut init_rng);
    let mu = RbmParams::random(n, m, config.init_scale, &mut init_rng);
    let mut state = NqsState::new(lambda, mu)?;

    let bases = data.bases();
    let mut batch_rng = rng::stream(seed, 1);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..config.max_epochs {
        let batch;
        let view = match config.batch_bases {
            Some(k) if k < bases.len() => {
                let chosen: Vec<_> = sample(&mut batch_rng, bases.len(), k)
                    .into_iter()
                    .map(|i| bases[i].clone())
                    .collect();
                batch = data.restricted_to(&chosen);
                &batch
            }
            _ => data,
        };
        let phase = match config.negative_phase {
            NegativePhase::Sampled { samples, burn_in, thin, seed: s } => NegativePhase::Sampled {
                samples,
                burn_in,
                thin,
                seed: s.wrapping_add(epoch as u64),
            },
            NegativePhase::Exact => NegativePhase::Exact,
        };
        let (cost, grad) = cost_value_and_gradient(&config.cost, &state, view, phase)?;
        let grad_norm = grad.norm();
        if !cost.is_finite() || !grad.is_finite() {
            return Err(Error::TrainingFailed(format!("non-finite cost or gradient at epoch {epoch}")));
        }

        let mut lr = config.learning_rate;
        let mut accepted = None;
        if grad_norm > 0.0 {
            for _ in 0..=config.max_halvings {
                let trial = step(&state, &grad, lr)?;
                let c = cost_value(&config.cost, &trial, view)?;
                if c.is_finite() && c <= cost {
                    accepted = Some(trial);
                    break;
                }
                lr *= 0.5;
            }
        }
        log.push(LogEntry {
            epoch,
            cost,
            grad_norm,
            learning_rate: if accepted.is_some() { lr } else { 0.0 },
            restart,
        });
        summary.epochs = epoch + 1;

        if cost < best && (best - cost) > config.tol_rel * best.abs() {
            stale = 0;
        } else {
            stale += 1;
        }
        best = best.min(cost);
        match accepted {
            Some(next) => state = next,
            None if config.batch_bases.is_none() => {
                summary.stop = StopReason::Stalled;
                break;
            }
            None => {}
        }
        if stale >= config.patience {
            summary.stop = StopReason::Converged;
            break;
        }
    }
    summary.final_cost = cost_value(&config.cost, &state, data)?;
    if !summary.final_cost.is_finite() {
        return Err(Error::TrainingFailed("non-finite final cost".into()));
    }
    Ok(state)
}
