//! Tabular data behind the cost-comparison, entropy and reconstruction tables.
//!
//! Everything here returns rows; writing CSV is left to the caller.

use serde::{Deserialize, Serialize};

use crate::costs::{cost_for_state, CostKind, CostSpec};
use crate::error::{Error, Result};
use crate::measurement::{projector_probabilities, pure_probabilities, BasisLabel, MeasurementDataset, Outcome};
use crate::quantum::{eigendecompose, fidelity, random_hermitian, unitary_from_hermitian, DensityMatrix, StateVector};
use crate::reconstructor::{
    eigenstate_entropy_profile, estimate_dominant_eigenvalue, relative_fidelity, EntropyRow, IterationReport,
    SpectralApprox, StatisticsSource,
};
use crate::rng;

/// Display scale for `1 − F`.
pub const FIDELITY_SCALE: f64 = 6000.0;
/// Display scale for the relative eigenvalue error.
pub const EIGENVALUE_SCALE: f64 = 10.0;

/// Spearman rank correlation with average ranks for ties. `NaN` when either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j - 1) as f64 / 2.0 + 1.0;
        idx[i..j].iter().for_each(|&k| out[k] = avg);
        i = j;
    }
    out
}

/// One perturbed dominant eigenstate and its costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostGridRow {
    pub strength: f64,
    /// `|⟨φ|Ψ₁⟩|²`.
    pub fidelity: f64,
    /// `6000·(1 − F)`.
    pub eps_fidelity: f64,
    pub p1b: f64,
    /// `10·(p₁ − p₁ᵇ)/p₁`.
    pub eps_eigenvalue: f64,
    /// Costs in [`CostKind::ALL`] order.
    pub costs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostGridConfig {
    pub n_perturbations: usize,
    /// Largest perturbation strength `ε` in `exp(iεH)Ψ₁`.
    pub max_strength: f64,
    pub floor: f64,
    pub seed: u64,
}

impl Default for CostGridConfig {
    fn default() -> Self {
        Self {
            n_perturbations: 50,
            max_strength: 0.1,
            floor: crate::reconstructor::DEFAULT_FLOOR,
            seed: 0,
        }
    }
}

/// Rows for `Ψ₁` and `n_perturbations` states `exp(iεH)Ψ₁`, with `ε` evenly
/// spaced up to `max_strength` and `H` from the GUE normalized to unit
/// operator norm. Rows are sorted by decreasing fidelity.
pub fn cost_grid(rho: &DensityMatrix, data: &MeasurementDataset, config: &CostGridConfig) -> Result<Vec<CostGridRow>> {
    if rho.n_qubits() != data.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: data.n_qubits(),
            found: rho.n_qubits(),
        });
    }
    let spec = eigendecompose(rho);
    let p1 = spec.eigenvalues[0];
    let dominant = &spec.eigenvectors[0];
    let mut r = rng::seeded(config.seed);
    let mut rows = Vec::with_capacity(config.n_perturbations + 1);
    for k in 0..=config.n_perturbations {
        let strength = config.max_strength * k as f64 / config.n_perturbations.max(1) as f64;
        let phi = if k == 0 {
            dominant.clone()
        } else {
            let h = random_hermitian(rho.dim(), &mut r);
            let (vals, _) = crate::quantum::hermitian_eigen(&h);
            let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            dominant.transformed(&unitary_from_hermitian(&h, strength / norm))?
        };
        let f = phi.overlap(dominant)?;
        let p1b = estimate_dominant_eigenvalue(data, &phi, config.floor)?.p_b;
        let costs = CostKind::ALL
            .iter()
            .map(|k| cost_for_state(&CostSpec::new(*k), &phi, data))
            .collect::<Result<Vec<_>>>()?;
        rows.push(CostGridRow {
            strength,
            fidelity: f,
            eps_fidelity: FIDELITY_SCALE * (1.0 - f),
            p1b,
            eps_eigenvalue: EIGENVALUE_SCALE * (p1 - p1b) / p1,
            costs,
        });
    }
    rows.sort_by(|a, b| b.fidelity.total_cmp(&a.fidelity));
    Ok(rows)
}

/// Spearman correlation of each cost kind with `1 − F` over the grid.
pub fn cost_rank_correlations(rows: &[CostGridRow]) -> Vec<(CostKind, f64)> {
    let infidelity: Vec<f64> = rows.iter().map(|r| 1.0 - r.fidelity).collect();
    CostKind::ALL
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let c: Vec<f64> = rows.iter().map(|r| r.costs[i]).collect();
            (*k, spearman(&c, &infidelity))
        })
        .collect()
}

/// Per-projector probabilities of the mixed state and of a pure state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub basis: String,
    pub outcome: String,
    pub p_mixed: f64,
    pub p_pure: f64,
}

/// Entropy pairs and the full probability scatter over every Pauli basis.
pub fn entropy_data(rho: &DensityMatrix, psi: &StateVector) -> Result<(Vec<EntropyRow>, Vec<ProbabilityRow>)> {
    let n = rho.n_qubits();
    let bases: Vec<BasisLabel> = (0..3usize.pow(n as u32)).map(|k| BasisLabel::from_index(n, k)).collect();
    let entropies = eigenstate_entropy_profile(StatisticsSource::State(rho), psi, &bases)?;
    let mut scatter = Vec::with_capacity(bases.len() << n);
    for b in &bases {
        let mixed = projector_probabilities(rho, b)?;
        let pure = pure_probabilities(psi, b)?;
        for (k, (pm, pp)) in mixed.iter().zip(&pure).enumerate() {
            scatter.push(ProbabilityRow {
                basis: b.to_string(),
                outcome: Outcome::from_index(n, k).to_string(),
                p_mixed: *pm,
                p_pure: *pp,
            });
        }
    }
    Ok((entropies, scatter))
}

/// Fraction of bases in which the pure-state entropy does not exceed the mixed one.
pub fn entropy_reduction_fraction(rows: &[EntropyRow]) -> f64 {
    let hits = rows.iter().filter(|r| r.entropy_pure <= r.entropy_mixed + 1e-12).count();
    hits as f64 / rows.len().max(1) as f64
}

/// One reconstruction summarized in the layout of the rank-2 results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub p1: f64,
    pub p2: f64,
    pub kappa2: f64,
    pub p3: f64,
    pub psi1_fidelity: f64,
    pub p1b: f64,
    pub psi2_fidelity: Option<f64>,
    pub p2b: Option<f64>,
    pub fidelity: f64,
    pub relative_fidelity: f64,
    pub target_fidelity: Option<f64>,
    pub psi1_target_overlap: Option<f64>,
}

impl TableRow {
    pub const HEADER: &'static str =
        "N,p1,p2,kappa2,p3,psi1_fidelity,p1b,psi2_fidelity,p2b,F,RF,F_target,psi1_target_overlap";

    pub fn new(
        rho: &DensityMatrix,
        approx: &SpectralApprox,
        report: &IterationReport,
        target: Option<&StateVector>,
    ) -> Result<Self> {
        let spec = eigendecompose(rho);
        let p = |i: usize| spec.eigenvalues.get(i).copied().unwrap_or(0.0);
        let step = |i: usize| report.steps.get(i).filter(|s| s.accepted);
        let psi1 = &approx.pairs[0].state;
        Ok(Self {
            n: rho.n_qubits(),
            p1: p(0),
            p2: p(1),
            kappa2: spec.kappa(2.min(rho.dim())),
            p3: p(2),
            psi1_fidelity: psi1.overlap(&spec.eigenvectors[0])?,
            p1b: approx.pairs[0].p,
            psi2_fidelity: match (approx.pairs.get(1), spec.eigenvectors.get(1)) {
                (Some(pair), Some(v)) => Some(pair.state.overlap(v)?),
                _ => None,
            },
            p2b: step(1).map(|s| s.p_hat),
            fidelity: fidelity(rho, &approx.density()?)?,
            relative_fidelity: relative_fidelity(rho, approx)?,
            target_fidelity: target.map(|t| rho.expectation(t)).transpose()?,
            psi1_target_overlap: target.map(|t| psi1.overlap(t)).transpose()?,
        })
    }

    pub fn csv_line(&self) -> String {
        let f = |x: f64| crate::json::format_f64(x);
        let o = |x: Option<f64>| x.map(f).unwrap_or_default();
        [
            self.n.to_string(),
            f(self.p1),
            f(self.p2),
            f(self.kappa2),
            f(self.p3),
            f(self.psi1_fidelity),
            f(self.p1b),
            o(self.psi2_fidelity),
            o(self.p2b),
            f(self.fidelity),
            f(self.relative_fidelity),
            o(self.target_fidelity),
            o(self.psi1_target_overlap),
        ]
        .join(",")
    }
}
