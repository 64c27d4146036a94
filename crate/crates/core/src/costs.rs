//! Costs comparing the measurement statistics of a pure state with a dataset.
//!
//! Every record `m = (basis, outcome)` contributes a term in `p_m` (data) and
//! `q_m = |⟨outcome|U_b|ψ⟩|²` (model). An orthogonality penalty
//! `w · Σ_k |⟨o_k|ψ⟩|²` keeps later eigenstates away from earlier ones.
//!
//! Gradients are exact. For a real cost `C(ψ)`, collect
//! `G(σ) = ∂C/∂ψ(σ)` (Wirtinger, conjugate-free part) by rotating the per-record
//! sensitivities back to the computational basis, then chain through
//! `∂ψ(σ)/∂θ`, which for the amplitude machine carries the `−½ E[∂ log p_λ]`
//! correction from the partition function.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{rotate_from_basis, rotate_into_basis, MeasurementDataset};
use crate::nqs::{gibbs_sample, spins_of, NqsState, RbmParams};
use crate::quantum::StateVector;

pub const DEFAULT_DENOM_FLOOR: f64 = 1e-12;
pub const DEFAULT_ORTH_WEIGHT: f64 = 1.0;
const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    L1,
    L15,
    L2,
    KL1,
    KL2,
}

impl CostKind {
    pub const ALL: [CostKind; 5] = [CostKind::L1, CostKind::L15, CostKind::L2, CostKind::KL1, CostKind::KL2];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::L1 => "l1",
            CostKind::L15 => "l15",
            CostKind::L2 => "l2",
            CostKind::KL1 => "kl1",
            CostKind::KL2 => "kl2",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown cost kind '{s}'")))
    }
}

/// Per-record term.
pub fn record_term(kind: CostKind, p: f64, q: f64, floor: f64) -> f64 {
    match kind {
        CostKind::L1 => (p - q).abs(),
        CostKind::L15 => (p - q).abs().powf(1.5),
        CostKind::L2 => (p - q) * (p - q),
        CostKind::KL1 => {
            if p <= 0.0 {
                0.0
            } else {
                p * (p / q.max(floor)).ln()
            }
        }
        CostKind::KL2 => {
            if q <= 0.0 {
                0.0
            } else {
                q * (q.max(floor) / p.max(floor)).ln()
            }
        }
    }
}

/// `∂ term / ∂q`. Subgradient 0 at `p = q` for L1; clamped regions are flat.
pub fn record_term_derivative(kind: CostKind, p: f64, q: f64, floor: f64) -> f64 {
    let d = q - p;
    match kind {
        CostKind::L1 => {
            if d == 0.0 {
                0.0
            } else {
                d.signum()
            }
        }
        CostKind::L15 => 1.5 * d.abs().sqrt() * d.signum(),
        CostKind::L2 => 2.0 * d,
        CostKind::KL1 => {
            if p <= 0.0 || q <= floor {
                0.0
            } else {
                -p / q
            }
        }
        CostKind::KL2 => {
            if q <= 0.0 {
                0.0
            } else if q <= floor {
                (floor / p.max(floor)).ln()
            } else {
                (q / p.max(floor)).ln() + 1.0
            }
        }
    }
}

/// Cost kind, orthogonality penalty and probability floor.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub orth_weight: f64,
    orth_states: Vec<StateVector>,
    pub denom_floor: f64,
}

impl CostSpec {
    pub fn new(kind: CostKind) -> Self {
        Self {
            kind,
            orth_weight: DEFAULT_ORTH_WEIGHT,
            orth_states: Vec::new(),
            denom_floor: DEFAULT_DENOM_FLOOR,
        }
    }

    /// Sets the penalized states, which must be pairwise orthonormal within 1e-8.
    pub fn with_orth_states(mut self, states: Vec<StateVector>) -> Result<Self> {
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate().skip(i) {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = a.inner(b)?;
                if (got - C64::new(want, 0.0)).norm() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidConfig(format!(
                        "orthogonality states {i} and {j} are not orthonormal (⟨a|b⟩ = {got})"
                    )));
                }
            }
        }
        self.orth_states = states;
        Ok(self)
    }

    pub fn orth_states(&self) -> &[StateVector] {
        &self.orth_states
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.orth_weight >= 0.0 && self.orth_weight.is_finite()) {
            return Err(Error::InvalidConfig("orth_weight must be finite and ≥ 0".into()));
        }
        if !(self.denom_floor > 0.0 && self.denom_floor.is_finite()) {
            return Err(Error::InvalidConfig("denom_floor must be positive".into()));
        }
        Ok(())
    }
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::new(CostKind::L15)
    }
}

/// Gram–Schmidt orthonormalization; directions whose residual norm falls
/// below 1e-10 are dropped.
pub fn orthonormalize(states: &[StateVector]) -> Result<Vec<StateVector>> {
    let mut out: Vec<StateVector> = Vec::new();
    for s in states {
        let mut v = s.amplitudes().to_vec();
        for _ in 0..2 {
            for e in &out {
                let c: C64 = e.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(e.amplitudes()).for_each(|(x, a)| *x -= c * a);
            }
        }
        let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-10 {
            out.push(StateVector::normalized(s.n_qubits(), v)?);
        }
    }
    Ok(out)
}

fn check_sizes(n_state: usize, data: &MeasurementDataset, spec: &CostSpec) -> Result<()> {
    if !data.is_empty() && data.n_qubits() != n_state {
        return Err(Error::DimensionMismatch {
            expected: n_state,
            found: data.n_qubits(),
        });
    }
    if let Some(o) = spec.orth_states.iter().find(|o| o.n_qubits() != n_state) {
        return Err(Error::DimensionMismatch {
            expected: n_state,
            found: o.n_qubits(),
        });
    }
    spec.validate()
}

fn orth_overlaps(spec: &CostSpec, amps: &[C64]) -> Vec<C64> {
    spec.orth_states
        .iter()
        .map(|o| o.amplitudes().iter().zip(amps).map(|(a, b)| a.conj() * b).sum())
        .collect()
}

/// Cost of an explicit amplitude vector (assumed normalized).
pub fn cost_of_amplitudes(spec: &CostSpec, n_qubits: usize, amps: &[C64], data: &MeasurementDataset) -> Result<f64> {
    check_sizes(n_qubits, data, spec)?;
    if amps.len() != 1usize << n_qubits {
        return Err(Error::DimensionMismatch {
            expected: 1 << n_qubits,
            found: amps.len(),
        });
    }
    let records = data.records();
    let mut total = 0.0;
    let mut phi = vec![C64::new(0.0, 0.0); amps.len()];
    for block in data.blocks() {
        phi.copy_from_slice(amps);
        rotate_into_basis(&mut phi, &block.basis);
        for r in &records[block.range.clone()] {
            let q = phi[r.outcome.index()].norm_sqr();
            total += record_term(spec.kind, r.probability, q, spec.denom_floor);
        }
    }
    let penalty: f64 = orth_overlaps(spec, amps).iter().map(|c| c.norm_sqr()).sum();
    Ok(total + spec.orth_weight * penalty)
}

pub fn cost_for_state(spec: &CostSpec, psi: &StateVector, data: &MeasurementDataset) -> Result<f64> {
    cost_of_amplitudes(spec, psi.n_qubits(), psi.amplitudes(), data)
}

pub fn cost_value(spec: &CostSpec, state: &NqsState, data: &MeasurementDataset) -> Result<f64> {
    cost_of_amplitudes(spec, state.n_qubits(), &state.amplitudes()?, data)
}

/// Derivatives with the same shapes as the two machines.
#[derive(Clone, Debug, PartialEq)]
pub struct NqsGradient {
    pub lambda: RbmParams,
    pub mu: RbmParams,
}

impl NqsGradient {
    pub fn norm(&self) -> f64 {
        self.lambda
            .flatten()
            .iter()
            .chain(self.mu.flatten().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.flatten().iter().chain(self.mu.flatten().iter()).all(|g| g.is_finite())
    }
}

/// How the partition-function term `E_{p_λ/Z}[∂ log p_λ]` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum NegativePhase {
    /// Exhaustive sum over all configurations.
    #[default]
    Exact,
    /// Average over block-Gibbs samples of `p_λ`.
    Sampled {
        samples: usize,
        burn_in: usize,
        thin: usize,
        seed: u64,
    },
}

pub fn cost_gradient(spec: &CostSpec, state: &NqsState, data: &MeasurementDataset) -> Result<NqsGradient> {
    cost_value_and_gradient(spec, state, data, NegativePhase::Exact).map(|(_, g)| g)
}

/// Cost and its gradient from one pass over the data.
pub fn cost_value_and_gradient(
    spec: &CostSpec,
    state: &NqsState,
    data: &MeasurementDataset,
    negative_phase: NegativePhase,
) -> Result<(f64, NqsGradient)> {
    let n = state.n_qubits();
    check_sizes(n, data, spec)?;
    let dim = 1usize << n;
    let psi = state.amplitudes()?;

    // G(σ): sensitivity of the cost to ψ(σ), so that dC = 2 Re Σ G dψ.
    let mut g = vec![C64::new(0.0, 0.0); dim];
    let mut cost = 0.0;
    let mut phi = vec![C64::new(0.0, 0.0); dim];
    let records = data.records();
    for block in data.blocks() {
        phi.copy_from_slice(&psi);
        rotate_into_basis(&mut phi, &block.basis);
        let mut w = vec![C64::new(0.0, 0.0); dim];
        for r in &records[block.range.clone()] {
            let k = r.outcome.index();
            let q = phi[k].norm_sqr();
            cost += record_term(spec.kind, r.probability, q, spec.denom_floor);
            w[k] = phi[k] * record_term_derivative(spec.kind, r.probability, q, spec.denom_floor);
        }
        rotate_from_basis(&mut w, &block.basis);
        g.iter_mut().zip(&w).for_each(|(gs, ws)| *gs += ws.conj());
    }
    let overlaps = orth_overlaps(spec, &psi);
    cost += spec.orth_weight * overlaps.iter().map(|c| c.norm_sqr()).sum::<f64>();
    for (o, c) in spec.orth_states.iter().zip(&overlaps) {
        let scale = c.conj() * spec.orth_weight;
        g.iter_mut()
            .zip(o.amplitudes())
            .for_each(|(gs, a)| *gs += scale * a.conj());
    }

    // ∂ψ/∂θ_λ = ψ·½(D − E[D]), ∂ψ/∂θ_μ = ψ·(i/2)D, with D = ∂ log p.
    let gpsi: Vec<C64> = g.iter().zip(&psi).map(|(a, b)| a * b).collect();
    let total_re: f64 = gpsi.iter().map(|z| z.re).sum();
    let mut grad_lambda = vec![0.0; state.lambda.n_params()];
    let mut grad_mu = vec![0.0; state.mu.n_params()];
    let exact_negative = matches!(negative_phase, NegativePhase::Exact);
    for idx in 0..dim {
        let s = spins_of(n, idx);
        let tanh_l: Vec<f64> = state.lambda.hidden_fields(&s).into_iter().map(f64::tanh).collect();
        let tanh_m: Vec<f64> = state.mu.hidden_fields(&s).into_iter().map(f64::tanh).collect();
        let mut c_lambda = gpsi[idx].re;
        if exact_negative {
            c_lambda -= total_re * psi[idx].norm_sqr();
        }
        state
            .lambda
            .accumulate_log_marginal_grad(&s, &tanh_l, c_lambda, &mut grad_lambda);
        state
            .mu
            .accumulate_log_marginal_grad(&s, &tanh_m, -gpsi[idx].im, &mut grad_mu);
    }
    if let NegativePhase::Sampled {
        samples,
        burn_in,
        thin,
        seed,
    } = negative_phase
    {
        let draws = gibbs_sample(&state.lambda, samples, burn_in, thin, seed)?;
        let weight = -total_re / draws.len() as f64;
        for o in &draws {
            let s = spins_of(n, o.index());
            let tanh_l: Vec<f64> = state.lambda.hidden_fields(&s).into_iter().map(f64::tanh).collect();
            state
                .lambda
                .accumulate_log_marginal_grad(&s, &tanh_l, weight, &mut grad_lambda);
        }
    }
    Ok((
        cost,
        NqsGradient {
            lambda: state.lambda.with_flat(&grad_lambda),
            mu: state.mu.with_flat(&grad_mu),
        },
    ))
}
