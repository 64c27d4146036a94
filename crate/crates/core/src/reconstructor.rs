//! Iterative mixed-state reconstruction.
//!
//! Each step fits the dominant eigenstate of the current statistics, bounds
//! its eigenvalue from below by `min_m p_m / q_m`, and removes its
//! contribution, `p′ = (p − p̂ q)/(1 − p̂)`, so the next step sees the
//! statistics of the remaining spectrum. A step beyond the first is kept only
//! if it raises the likelihood of the original data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    projector_probabilities, pure_probabilities, rotate_into_basis, BasisLabel, DatasetMode, MeasurementDataset,
    Record,
};
use crate::quantum::{eigendecompose, fidelity, DensityMatrix, StateVector, C64};
use crate::trainer::{train_next_eigenstate, TrainConfig, TrainingLog};

/// Default detection threshold on `q_m` (and `p_m`) in the eigenvalue estimate.
pub const DEFAULT_FLOOR: f64 = 1e-6;
/// Probability floor inside the likelihood logarithm.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;
/// Deflated probabilities down to this value are clamped to zero.
pub const NEGATIVITY_TOL: f64 = 1e-9;
/// An eigenvalue estimate this close to one leaves nothing to deflate.
pub const EXHAUSTION_TOL: f64 = 1e-9;
/// Seed offset between consecutive extraction steps.
pub const STEP_SEED_STRIDE: u64 = 1000;

/// Eigenvalue–eigenvector pairs in extraction order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralApprox {
    pub pairs: Vec<EigenPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub p: f64,
    pub state: StateVector,
}

impl SpectralApprox {
    pub fn new(pairs: Vec<EigenPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidSpectrum("approximation has no pairs".into()));
        }
        let n = pairs[0].state.n_qubits();
        let mut total = 0.0;
        for pair in &pairs {
            if !(0.0..=1.0).contains(&pair.p) {
                return Err(Error::InvalidSpectrum(format!("eigenvalue {} outside [0, 1]", pair.p)));
            }
            if pair.state.n_qubits() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: pair.state.n_qubits(),
                });
            }
            total += pair.p;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidSpectrum(format!("eigenvalues sum to {total} > 1")));
        }
        if total <= 0.0 {
            return Err(Error::InvalidSpectrum("eigenvalues sum to zero".into()));
        }
        Ok(Self { pairs })
    }

    pub fn rank(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.pairs[0].state.n_qubits()
    }

    fn weights(&self) -> Vec<f64> {
        let total: f64 = self.pairs.iter().map(|p| p.p).sum();
        self.pairs.iter().map(|p| p.p / total).collect()
    }

    /// `Σ p̂_i |ψ̂_i⟩⟨ψ̂_i| / Σ p̂_i`.
    pub fn density(&self) -> Result<DensityMatrix> {
        let states: Vec<StateVector> = self.pairs.iter().map(|p| p.state.clone()).collect();
        DensityMatrix::mixture(&self.weights(), &states)
    }

    /// Largest pairwise `|⟨ψ̂_i|ψ̂_j⟩|²`.
    pub fn max_overlap(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                worst = worst.max(a.state.overlap(&b.state).unwrap_or(1.0));
            }
        }
        worst
    }

    /// Outcome probabilities of the normalized mixture in `basis`.
    pub fn probabilities(&self, basis: &BasisLabel) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 1 << self.n_qubits()];
        for (w, pair) in self.weights().iter().zip(&self.pairs) {
            for (o, q) in out.iter_mut().zip(pure_probabilities(&pair.state, basis)?) {
                *o += w * q;
            }
        }
        Ok(out)
    }
}

/// Result of the lower-bound eigenvalue estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueEstimate {
    pub p_b: f64,
    /// Index (in dataset order) of the minimizing record.
    pub argmin: usize,
    /// Records that entered the minimum.
    pub retained: Vec<bool>,
}

impl EigenvalueEstimate {
    pub fn discarded(&self) -> usize {
        self.retained.iter().filter(|r| !**r).count()
    }
}

fn model_probabilities(data: &MeasurementDataset, psi: &StateVector) -> Result<Vec<f64>> {
    if psi.n_qubits() != data.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: data.n_qubits(),
            found: psi.n_qubits(),
        });
    }
    let mut q = Vec::with_capacity(data.len());
    let mut phi = vec![C64::new(0.0, 0.0); psi.dim()];
    for block in data.blocks() {
        phi.copy_from_slice(psi.amplitudes());
        rotate_into_basis(&mut phi, &block.basis);
        q.extend(data.records()[block.range.clone()].iter().map(|r| phi[r.outcome.index()].norm_sqr()));
    }
    Ok(q)
}

/// `min p_m / q_m` over records with `q_m ≥ floor` and `p_m ≥ floor`, clamped to `[0, 1]`.
///
/// Ties go to the smallest record index.
pub fn estimate_dominant_eigenvalue(
    data: &MeasurementDataset,
    psi_hat: &StateVector,
    floor: f64,
) -> Result<EigenvalueEstimate> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::InvalidConfig("floor must be positive".into()));
    }
    let q = model_probabilities(data, psi_hat)?;
    let mut best: Option<(f64, usize)> = None;
    let mut retained = Vec::with_capacity(q.len());
    for (m, (r, &qm)) in data.records().iter().zip(&q).enumerate() {
        let keep = qm >= floor && r.probability >= floor;
        retained.push(keep);
        if !keep {
            continue;
        }
        let ratio = r.probability / qm;
        if best.is_none_or(|(b, _)| ratio < b) {
            best = Some((ratio, m));
        }
    }
    let (ratio, argmin) = best.ok_or(Error::FloorTooHigh(floor))?;
    Ok(EigenvalueEstimate {
        p_b: ratio.clamp(0.0, 1.0),
        argmin,
        retained,
    })
}

fn deflate_records(
    data: &MeasurementDataset,
    q: &[f64],
    p_hat: f64,
    retained: Option<&[bool]>,
) -> Result<(MeasurementDataset, usize)> {
    if !(0.0..1.0).contains(&p_hat) {
        return Err(Error::DegenerateDeflation(p_hat));
    }
    if p_hat == 0.0 {
        return Ok((data.clone(), 0));
    }
    let scale = 1.0 / (1.0 - p_hat);
    let mut out = Vec::with_capacity(data.len());
    let mut clamped = 0usize;
    for block in data.blocks() {
        let mut values = Vec::with_capacity(block.range.len());
        for m in block.range.clone() {
            let r = &data.records()[m];
            let v = (r.probability - p_hat * q[m]) * scale;
            let protected = retained.is_none_or(|keep| keep[m]);
            if v < -NEGATIVITY_TOL && protected {
                return Err(Error::NegativeDeflation {
                    record: m,
                    value: v,
                });
            }
            if v < 0.0 {
                if v < -NEGATIVITY_TOL {
                    clamped += 1;
                }
                values.push(0.0);
            } else {
                values.push(v);
            }
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateDeflation(p_hat));
        }
        for (m, v) in block.range.clone().zip(values) {
            out.push(Record {
                probability: v / sum,
                shots: None,
                ..data.records()[m].clone()
            });
        }
    }
    let deflated = MeasurementDataset::new(data.n_qubits(), DatasetMode::Exact, data.seed(), out)?;
    Ok((deflated, clamped))
}

/// Record-wise `p′ = (p − p̂ q)/(1 − p̂)`; values in `[−1e-9, 0)` are clamped,
/// anything more negative is an error, and each basis is renormalized.
pub fn deflate(data: &MeasurementDataset, psi_hat: &StateVector, p_hat: f64) -> Result<MeasurementDataset> {
    let q = model_probabilities(data, psi_hat)?;
    deflate_records(data, &q, p_hat, None).map(|(d, _)| d)
}

/// As [`deflate`], but records excluded from the eigenvalue estimate are
/// clamped at zero instead of rejected. Returns the number so clamped.
pub fn deflate_retained(
    data: &MeasurementDataset,
    psi_hat: &StateVector,
    estimate: &EigenvalueEstimate,
) -> Result<(MeasurementDataset, usize)> {
    let q = model_probabilities(data, psi_hat)?;
    deflate_records(data, &q, estimate.p_b, Some(&estimate.retained))
}

/// `Σ_m w_m log max(q_m, 1e-12)` with `q_m` from the normalized mixture and
/// `w_m` the shot count when every record has one, the probability otherwise.
pub fn log_likelihood(approx: &SpectralApprox, data: &MeasurementDataset) -> Result<f64> {
    if approx.n_qubits() != data.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: data.n_qubits(),
            found: approx.n_qubits(),
        });
    }
    let weights = approx.weights();
    let per_state: Vec<Vec<f64>> = approx
        .pairs
        .iter()
        .map(|p| model_probabilities(data, &p.state))
        .collect::<Result<_>>()?;
    let use_shots = data.has_shots();
    let mut total = 0.0;
    for (m, r) in data.records().iter().enumerate() {
        let q: f64 = weights.iter().zip(&per_state).map(|(w, qs)| w * qs[m]).sum();
        let w = if use_shots {
            r.shots.unwrap_or(0) as f64
        } else {
            r.probability
        };
        if w > 0.0 {
            total += w * q.max(LIKELIHOOD_FLOOR).ln();
        }
    }
    Ok(total)
}

/// `F(ρ, ρ̂) / κ(r)` with `r` the number of pairs.
pub fn relative_fidelity(rho: &DensityMatrix, approx: &SpectralApprox) -> Result<f64> {
    let f = fidelity(rho, &approx.density()?)?;
    let kappa = eigendecompose(rho).kappa(approx.rank().min(rho.dim()));
    Ok(f / kappa)
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Absolute eigenvalue estimate.
    pub p_hat: f64,
    /// Estimate in the deflated frame of this step.
    pub p_raw: f64,
    /// `basis outcome` of the record attaining the minimum ratio.
    pub argmin_record: String,
    pub eigenstate_fidelity: Option<f64>,
    /// `‖p̂ ψ̂ − p ψ‖` after phase alignment, against the next true eigenvalue.
    pub accuracy_gap: Option<f64>,
    pub next_true_eigenvalue: Option<f64>,
    pub likelihood_before: Option<f64>,
    pub likelihood_after: f64,
    pub accepted: bool,
    pub records_discarded_by_floor: usize,
    pub training_cost: f64,
    pub training_epochs: usize,
    pub orthogonality: Option<f64>,
    pub orthogonality_reached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub steps: Vec<StepRecord>,
    pub stop: String,
    #[serde(skip)]
    pub training_logs: Vec<TrainingLog>,
}

/// Output file layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub pairs: Vec<EigenPair>,
    pub report: Vec<StepRecord>,
    pub stop: String,
}

impl ReconstructionResult {
    pub fn new(approx: &SpectralApprox, report: &IterationReport) -> Self {
        Self {
            pairs: approx.pairs.clone(),
            report: report.steps.clone(),
            stop: report.stop.clone(),
        }
    }

    pub fn approx(&self) -> Result<SpectralApprox> {
        SpectralApprox::new(self.pairs.clone())
    }
}

pub fn reconstruct(
    data: &MeasurementDataset,
    max_rank: usize,
    config: &TrainConfig,
    floor: f64,
) -> Result<(SpectralApprox, IterationReport)> {
    reconstruct_with_truth(data, max_rank, config, floor, None)
}

/// [`reconstruct`] with per-step comparisons against a known state.
pub fn reconstruct_with_truth(
    data: &MeasurementDataset,
    max_rank: usize,
    config: &TrainConfig,
    floor: f64,
    truth: Option<&DensityMatrix>,
) -> Result<(SpectralApprox, IterationReport)> {
    if max_rank == 0 {
        return Err(Error::InvalidConfig("max_rank must be at least 1".into()));
    }
    if let Some(t) = truth {
        if t.n_qubits() != data.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: data.n_qubits(),
                found: t.n_qubits(),
            });
        }
    }
    let spectrum = truth.map(eigendecompose);
    let mut current = data.clone();
    let mut pairs: Vec<EigenPair> = Vec::new();
    let mut previous: Vec<StateVector> = Vec::new();
    let mut steps = Vec::new();
    let mut logs = Vec::new();
    let mut chain = 1.0;
    let mut discarded_into_step = 0usize;
    let mut stop = format!("reached max_rank {max_rank}");

    for step in 1..=max_rank {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(STEP_SEED_STRIDE * (step as u64 - 1));
        let (nqs, log) = train_next_eigenstate(&current, &previous, &cfg)?;
        let psi = nqs.to_state_vector()?;
        let estimate = estimate_dominant_eigenvalue(&current, &psi, floor)?;
        let p_hat = estimate.p_b * chain;

        let mut candidate = pairs.clone();
        candidate.push(EigenPair {
            p: p_hat,
            state: psi.clone(),
        });
        let (accepted, before, after) = if step == 1 {
            if p_hat <= 0.0 {
                return Err(Error::InvalidSpectrum(
                    "dominant eigenvalue estimate is zero; lower the floor or check the data".into(),
                ));
            }
            (true, None, log_likelihood(&SpectralApprox::new(candidate.clone())?, data)?)
        } else {
            let before = log_likelihood(&SpectralApprox::new(pairs.clone())?, data)?;
            let after = if p_hat > 0.0 {
                log_likelihood(&SpectralApprox::new(candidate.clone())?, data)?
            } else {
                before
            };
            (after > before, Some(before), after)
        };

        let (fid, gap, next_p) = match &spectrum {
            Some(s) if step <= s.eigenvalues.len() => {
                let truth_vec = &s.eigenvectors[step - 1];
                let inner = truth_vec.inner(&psi)?;
                let phase = if inner.norm() > 0.0 { inner.conj() / inner.norm() } else { C64::new(1.0, 0.0) };
                let p_true = s.eigenvalues[step - 1];
                let gap: f64 = psi
                    .amplitudes()
                    .iter()
                    .zip(truth_vec.amplitudes())
                    .map(|(a, b)| (a * phase * p_hat - b * p_true).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                (Some(inner.norm_sqr()), Some(gap), s.eigenvalues.get(step).copied())
            }
            _ => (None, None, None),
        };

        let record = &current.records()[estimate.argmin];
        steps.push(StepRecord {
            step,
            p_hat,
            p_raw: estimate.p_b,
            argmin_record: format!("{} {}", record.basis, record.outcome),
            eigenstate_fidelity: fid,
            accuracy_gap: gap,
            next_true_eigenvalue: next_p,
            likelihood_before: before,
            likelihood_after: after,
            accepted,
            records_discarded_by_floor: discarded_into_step,
            training_cost: log.final_cost(),
            training_epochs: log.restarts[log.winner].epochs,
            orthogonality: log.orthogonality,
            orthogonality_reached: log.orthogonality_reached,
        });
        logs.push(log);

        if !accepted {
            stop = format!("step {step} did not improve the likelihood");
            break;
        }
        pairs = candidate;
        previous.push(psi.clone());
        if step == max_rank {
            break;
        }
        if estimate.p_b >= 1.0 - EXHAUSTION_TOL {
            stop = format!("spectrum exhausted at step {step}");
            break;
        }
        match deflate_retained(&current, &psi, &estimate) {
            Ok((next, clamped)) => {
                current = next;
                discarded_into_step = clamped;
            }
            Err(e) => {
                stop = format!("deflation after step {step} failed: {e}");
                break;
            }
        }
        chain *= 1.0 - estimate.p_b;
    }

    Ok((
        SpectralApprox::new(pairs)?,
        IterationReport {
            steps,
            stop,
            training_logs: logs,
        },
    ))
}

/// Where the mixed-state statistics come from.
#[derive(Clone, Copy, Debug)]
pub enum StatisticsSource<'a> {
    Data(&'a MeasurementDataset),
    State(&'a DensityMatrix),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub basis: String,
    pub entropy_mixed: f64,
    pub entropy_pure: f64,
}

/// Shannon entropy (natural log).
pub fn shannon_entropy(probabilities: &[f64]) -> f64 {
    -probabilities.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Per-basis entropies of the mixed statistics and of `psi`'s statistics.
pub fn eigenstate_entropy_profile(
    source: StatisticsSource<'_>,
    psi: &StateVector,
    bases: &[BasisLabel],
) -> Result<Vec<EntropyRow>> {
    bases
        .iter()
        .map(|b| {
            let mixed = match source {
                StatisticsSource::State(rho) => projector_probabilities(rho, b)?,
                StatisticsSource::Data(data) => {
                    let block = data
                        .blocks()
                        .iter()
                        .find(|blk| &blk.basis == b)
                        .ok_or_else(|| Error::InvalidBasis(format!("basis {b} not in dataset")))?;
                    data.records()[block.range.clone()].iter().map(|r| r.probability).collect()
                }
            };
            Ok(EntropyRow {
                basis: b.to_string(),
                entropy_mixed: shannon_entropy(&mixed),
                entropy_pure: shannon_entropy(&pure_probabilities(psi, b)?),
            })
        })
        .collect()
}
