//! Neural quantum state built from two real restricted Boltzmann machines.
//!
//! `Ψ(σ) = √(p_λ(σ)/Z_λ) · exp(i·log p_μ(σ)/2)` where each `p_κ` is the
//! hidden-marginalized RBM weight
//! `p_κ(σ) = exp(Σ a_i s_i) · Π_j 2cosh(Σ_i W_ij s_i + b_j)`.
//!
//! Everything here works in log space. Normalizations are exhaustive sums up
//! to [`EXACT_MODE_CAP`] visible units; block Gibbs sampling covers the
//! sampled negative phase.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{rotate_into_basis, BasisLabel, Outcome};
use crate::quantum::StateVector;
use crate::rng;

/// Largest visible layer for which exhaustive sums are allowed.
pub const EXACT_MODE_CAP: usize = 12;

/// Half-width of the uniform parameter initialization.
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

/// `log(2·cosh x)` without overflow.
#[inline]
pub fn log_2cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Spins `±1` of visible configuration `index` over `n` units (unit 0 is the MSB).
pub fn spins_of(n: usize, index: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if index >> (n - 1 - i) & 1 == 0 { 1.0 } else { -1.0 })
        .collect()
}

/// Parameters of one RBM: `W` (N×M, row-major), visible bias `a`, hidden bias `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    #[serde(rename = "W")]
    pub weights: Vec<Vec<f64>>,
    #[serde(rename = "a")]
    pub visible_bias: Vec<f64>,
    #[serde(rename = "b")]
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: vec![vec![0.0; n_hidden]; n_visible],
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
        }
    }

    /// I.i.d. uniform entries in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = || rng.random_range(-scale..=scale);
        let weights = (0..n_visible)
            .map(|_| (0..n_hidden).map(|_| draw()).collect())
            .collect();
        let visible_bias = (0..n_visible).map(|_| draw()).collect();
        let hidden_bias = (0..n_hidden).map(|_| draw()).collect();
        Self {
            weights,
            visible_bias,
            hidden_bias,
        }
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_visible() * self.n_hidden() + self.n_visible() + self.n_hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_visible(), self.n_hidden());
        if n == 0 || self.weights.len() != n || self.weights.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidConfig("RBM weight matrix has wrong shape".into()));
        }
        if !self.flatten().iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("RBM parameters must be finite".into()));
        }
        Ok(())
    }

    /// Flat layout `[W row-major, a, b]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.weights.iter().for_each(|r| out.extend_from_slice(r));
        out.extend_from_slice(&self.visible_bias);
        out.extend_from_slice(&self.hidden_bias);
        out
    }

    /// Inverse of [`flatten`](Self::flatten) for the same shape.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.n_params());
        let (n, m) = (self.n_visible(), self.n_hidden());
        let weights = flat[..n * m].chunks(m).map(|c| c.to_vec()).collect();
        Self {
            weights,
            visible_bias: flat[n * m..n * m + n].to_vec(),
            hidden_bias: flat[n * m + n..].to_vec(),
        }
    }

    /// Hidden pre-activations `θ_j = Σ_i W_ij s_i + b_j`.
    pub fn hidden_fields(&self, spins: &[f64]) -> Vec<f64> {
        let mut theta = self.hidden_bias.clone();
        for (s, row) in spins.iter().zip(&self.weights) {
            theta.iter_mut().zip(row).for_each(|(t, w)| *t += w * s);
        }
        theta
    }

    /// Visible pre-activations `Σ_j W_ij h_j + a_i`.
    pub fn visible_fields(&self, hidden: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.visible_bias)
            .map(|(row, a)| a + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>())
            .collect()
    }

    /// `log p(σ)` with the hidden layer summed out.
    pub fn log_marginal_spins(&self, spins: &[f64]) -> f64 {
        let vis: f64 = self.visible_bias.iter().zip(spins).map(|(a, s)| a * s).sum();
        vis + self.hidden_fields(spins).into_iter().map(log_2cosh).sum::<f64>()
    }

    /// Accumulates `weight · ∂ log p(σ)/∂θ` into `out` (flat layout).
    pub(crate) fn accumulate_log_marginal_grad(&self, spins: &[f64], tanh: &[f64], weight: f64, out: &mut [f64]) {
        let (n, m) = (self.n_visible(), self.n_hidden());
        for i in 0..n {
            let ws = weight * spins[i];
            let row = &mut out[i * m..(i + 1) * m];
            row.iter_mut().zip(tanh).for_each(|(g, t)| *g += ws * t);
            out[n * m + i] += ws;
        }
        out[n * m + n..].iter_mut().zip(tanh).for_each(|(g, t)| *g += weight * t);
    }
}

/// `log p(σ)` for an outcome.
pub fn rbm_log_marginal(params: &RbmParams, sigma: &Outcome) -> Result<f64> {
    if sigma.n_qubits() != params.n_visible() {
        return Err(Error::DimensionMismatch {
            expected: params.n_visible(),
            found: sigma.n_qubits(),
        });
    }
    Ok(params.log_marginal_spins(&spins_of(params.n_visible(), sigma.index())))
}

/// `log Σ_σ p(σ)` by streaming log-sum-exp over all visible configurations.
pub fn log_partition(params: &RbmParams) -> Result<f64> {
    let n = params.n_visible();
    if n > EXACT_MODE_CAP {
        return Err(Error::ExactModeCap {
            n,
            cap: EXACT_MODE_CAP,
        });
    }
    let mut acc = LogSumExp::default();
    for idx in 0..1usize << n {
        acc.push(params.log_marginal_spins(&spins_of(n, idx)));
    }
    Ok(acc.value())
}

#[derive(Default)]
struct LogSumExp {
    max: f64,
    sum: f64,
    started: bool,
}

impl LogSumExp {
    fn push(&mut self, x: f64) {
        if !self.started {
            self.max = x;
            self.sum = 1.0;
            self.started = true;
        } else if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Amplitude network `λ` and phase network `μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NqsState {
    pub lambda: RbmParams,
    pub mu: RbmParams,
    cached_log_partition: Option<f64>,
}

impl NqsState {
    /// Builds a state, caching `log Z_λ` when the visible layer is within the exact-mode cap.
    pub fn new(lambda: RbmParams, mu: RbmParams) -> Result<Self> {
        lambda.validate()?;
        mu.validate()?;
        if lambda.n_visible() != mu.n_visible() {
            return Err(Error::DimensionMismatch {
                expected: lambda.n_visible(),
                found: mu.n_visible(),
            });
        }
        let cached_log_partition = log_partition(&lambda).ok();
        Ok(Self {
            lambda,
            mu,
            cached_log_partition,
        })
    }

    /// Seeded uniform initialization with `M = N` hidden units.
    pub fn random(n_qubits: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut r = rng::seeded(seed);
        let lambda = RbmParams::random(n_qubits, n_qubits, scale, &mut r);
        let mu = RbmParams::random(n_qubits, n_qubits, scale, &mut r);
        Self::new(lambda, mu)
    }

    pub fn n_qubits(&self) -> usize {
        self.lambda.n_visible()
    }

    pub fn log_partition(&self) -> Result<f64> {
        match self.cached_log_partition {
            Some(z) => Ok(z),
            None => log_partition(&self.lambda),
        }
    }

    pub fn cached_log_partition(&self) -> Option<f64> {
        self.cached_log_partition
    }

    /// `Ψ(σ)` in exact mode.
    pub fn amplitude(&self, sigma: &Outcome) -> Result<Complex64> {
        let log_z = self.log_partition()?;
        let l = rbm_log_marginal(&self.lambda, sigma)?;
        let m = rbm_log_marginal(&self.mu, sigma)?;
        Ok(Complex64::from_polar((0.5 * (l - log_z)).exp(), 0.5 * m))
    }

    /// All amplitudes in computational-index order (not renormalized).
    pub fn amplitudes(&self) -> Result<Vec<Complex64>> {
        let n = self.n_qubits();
        let log_z = self.log_partition()?;
        Ok((0..1usize << n)
            .map(|idx| {
                let s = spins_of(n, idx);
                let l = self.lambda.log_marginal_spins(&s);
                let m = self.mu.log_marginal_spins(&s);
                Complex64::from_polar((0.5 * (l - log_z)).exp(), 0.5 * m)
            })
            .collect())
    }

    pub fn to_state_vector(&self) -> Result<StateVector> {
        StateVector::normalized(self.n_qubits(), self.amplitudes()?)
    }

    /// Outcome probabilities in `basis`, indexed by outcome index.
    pub fn rotated_probabilities(&self, basis: &BasisLabel) -> Result<Vec<f64>> {
        if basis.n_qubits() != self.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits(),
                found: basis.n_qubits(),
            });
        }
        let mut amps = self.amplitudes()?;
        rotate_into_basis(&mut amps, basis);
        Ok(amps.iter().map(|a| a.norm_sqr()).collect())
    }

    /// `|⟨outcome|U_b|Ψ⟩|²`.
    pub fn rotated_probability(&self, basis: &BasisLabel, outcome: &Outcome) -> Result<f64> {
        if outcome.n_qubits() != self.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits(),
                found: outcome.n_qubits(),
            });
        }
        Ok(self.rotated_probabilities(basis)?[outcome.index()])
    }

    pub fn to_checkpoint(&self, seed: u64) -> NqsCheckpoint {
        NqsCheckpoint {
            n: self.lambda.n_visible(),
            m: self.lambda.n_hidden(),
            lambda: self.lambda.clone(),
            mu: self.mu.clone(),
            seed,
        }
    }
}

/// On-disk form of an [`NqsState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NqsCheckpoint {
    pub n: usize,
    pub m: usize,
    pub lambda: RbmParams,
    pub mu: RbmParams,
    pub seed: u64,
}

impl NqsCheckpoint {
    pub fn into_state(self) -> Result<NqsState> {
        let shape_ok = |p: &RbmParams| p.n_visible() == self.n && p.n_hidden() == self.m;
        if !shape_ok(&self.lambda) || !shape_ok(&self.mu) {
            return Err(Error::Format("checkpoint shapes disagree with n/m".into()));
        }
        NqsState::new(self.lambda, self.mu)
    }
}

/// `P(h_j = +1 | σ) = 1/(1 + exp(−2(Σ_i W_ij s_i + b_j)))`.
pub fn gibbs_conditional_hidden(params: &RbmParams, sigma: &Outcome) -> Vec<f64> {
    let spins = spins_of(params.n_visible(), sigma.index());
    params
        .hidden_fields(&spins)
        .into_iter()
        .map(|t| logistic(2.0 * t))
        .collect()
}

/// `P(s_i = +1 | h) = 1/(1 + exp(−2(Σ_j W_ij h_j + a_i)))`.
pub fn gibbs_conditional_visible(params: &RbmParams, hidden: &Outcome) -> Vec<f64> {
    let h = spins_of(params.n_hidden(), hidden.index());
    params
        .visible_fields(&h)
        .into_iter()
        .map(|t| logistic(2.0 * t))
        .collect()
}

fn sample_layer<R: Rng + ?Sized>(fields: &[f64], rng: &mut R, out: &mut [f64]) {
    for (o, f) in out.iter_mut().zip(fields) {
        *o = if rng.random::<f64>() < logistic(2.0 * f) {
            1.0
        } else {
            -1.0
        };
    }
}

fn spins_to_index(spins: &[f64]) -> usize {
    spins
        .iter()
        .fold(0, |acc, &s| (acc << 1) | usize::from(s < 0.0))
}

/// Block Gibbs chain: from a random visible configuration, alternately
/// resample the hidden and visible layers. After `burn_in` sweeps every
/// `thin`-th visible configuration is emitted.
pub fn gibbs_sample(
    params: &RbmParams,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<Outcome>> {
    if n_samples == 0 || thin == 0 {
        return Err(Error::InvalidConfig("n_samples and thin must be at least 1".into()));
    }
    let mut r = rng::seeded(seed);
    Ok(run_chain(params, n_samples, burn_in, thin, &mut r)
        .into_iter()
        .map(|idx| Outcome::from_index(params.n_visible(), idx))
        .collect())
}

/// Independent chains seeded from streams of `seed`, concatenated in chain order.
pub fn gibbs_sample_chains(
    params: &RbmParams,
    n_chains: usize,
    samples_per_chain: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<Outcome>> {
    use rayon::prelude::*;
    if n_chains == 0 || samples_per_chain == 0 || thin == 0 {
        return Err(Error::InvalidConfig("chain counts must be at least 1".into()));
    }
    let chains: Vec<Vec<usize>> = (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            run_chain(params, samples_per_chain, burn_in, thin, &mut r)
        })
        .collect();
    Ok(chains
        .into_iter()
        .flatten()
        .map(|idx| Outcome::from_index(params.n_visible(), idx))
        .collect())
}

fn run_chain<R: Rng + ?Sized>(
    params: &RbmParams,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    rng: &mut R,
) -> Vec<usize> {
    let (n, m) = (params.n_visible(), params.n_hidden());
    let mut visible: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut hidden = vec![0.0; m];
    let mut out = Vec::with_capacity(n_samples);
    let mut sweep = 0usize;
    while out.len() < n_samples {
        sample_layer(&params.hidden_fields(&visible), rng, &mut hidden);
        sample_layer(&params.visible_fields(&hidden), rng, &mut visible);
        sweep += 1;
        if sweep > burn_in && (sweep - burn_in).is_multiple_of(thin) {
            out.push(spins_to_index(&visible));
        }
    }
    out
}
