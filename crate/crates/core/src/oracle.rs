//! Brute-force checks of the low-rank approximation statements.
//!
//! * closest pure state: no pure state beats `p₁` in fidelity with `ρ`;
//! * trace distance to pure states lies in `[1 − p₁, 1 − p_n]`;
//! * no rank-r state beats `κ(r) = p₁ + … + p_r` in fidelity;
//! * every `τ = Σ q_i |Ψ_i⟩⟨Ψ_i|` with `q_i ≥ p_i` sits at trace distance `1 − κ(r)`;
//! * the Weyl sandwich `q_j + p_k ≤ m_i ≤ q_r + p_s` for `M = Q + P`.
//!
//! Challengers are random; the checks report the worst violation seen.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{bell_mixture, make_w_mixture};
use crate::quantum::{
    complex_gaussian, eigendecompose, fidelity_matrices, hermitian_eigen, optimal_rank_r, random_density,
    random_hermitian, trace_distance_matrices, CMatrix, DensityMatrix, Spectrum, StateVector, C64,
};
use crate::rng;

pub const PROP1_TOL: f64 = 1e-10;
pub const PROP2_TOL: f64 = 1e-10;
pub const PROP3_TOL: f64 = 1e-9;
pub const PROP4_TOL: f64 = 1e-10;
pub const WEYL_TOL: f64 = 1e-10;
/// Dominant eigenvalue gaps at or below this are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Leading eigenvalues of the approximate W states used as named corpus members.
pub const TABLE_SPECTRA: [(usize, [f64; 3]); 3] = [
    (4, [0.860, 0.063, 0.037]),
    (5, [0.824, 0.073, 0.042]),
    (6, [0.813, 0.070, 0.042]),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub rho: DensityMatrix,
    pub challenger: DensityMatrix,
}

/// Inner quantities of one rank-r challenger: `Tr(DρD)` for the projector `D`
/// onto its support and `k_j = Σ_i |⟨Φ_i|Ψ_j⟩|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSample {
    pub fidelity: f64,
    pub projected_weight: f64,
    pub k: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    /// `"1"` … `"4"`, `"weyl"` or `"weyl-chain"`.
    pub proposition: String,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub skipped: usize,
    pub notes: Vec<String>,
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub samples: Vec<SubspaceSample>,
}

impl PropositionReport {
    fn new(proposition: &str, tolerance: f64) -> Self {
        Self {
            proposition: proposition.into(),
            trials: 0,
            max_violation: 0.0,
            tolerance,
            passed: true,
            skipped: 0,
            notes: Vec::new(),
            witness: None,
            samples: Vec::new(),
        }
    }

    fn skip(mut self, note: String) -> Self {
        self.skipped = 1;
        self.notes.push(note);
        self
    }

    /// Records `amount` by which an inequality failed (non-positive means it held).
    fn observe(&mut self, amount: f64, witness: impl FnOnce() -> Option<Witness>) {
        self.trials += 1;
        if amount > self.max_violation || amount.is_nan() {
            self.max_violation = if amount.is_nan() { f64::INFINITY } else { amount };
            if amount > self.tolerance || amount.is_nan() {
                self.witness = witness();
            }
        }
        self.passed = self.max_violation <= self.tolerance;
    }

    /// Combines reports for the same proposition, keeping the worst witness.
    pub fn merge(mut self, other: PropositionReport) -> Self {
        self.trials += other.trials;
        self.skipped += other.skipped;
        if other.max_violation > self.max_violation {
            self.max_violation = other.max_violation;
            if other.witness.is_some() {
                self.witness = other.witness;
            }
        }
        self.notes.extend(other.notes);
        self.samples.extend(other.samples);
        self.passed = self.passed && other.passed && self.max_violation <= self.tolerance;
        self
    }
}

/// Check runner. `fidelity_bias` is added to every fidelity the checks
/// compute; it exists only so negative controls can plant a fault.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Oracle {
    pub fidelity_bias: f64,
}

fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<C64> {
    let v = DVector::from_fn(dim, |_, _| complex_gaussian(rng));
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Orthonormal basis of a Haar-random `r`-dimensional subspace.
fn random_subspace<R: Rng + ?Sized>(dim: usize, r: usize, rng: &mut R) -> Vec<DVector<C64>> {
    let mut out: Vec<DVector<C64>> = Vec::with_capacity(r);
    while out.len() < r {
        let mut v = gaussian_vector(dim, rng);
        for _ in 0..2 {
            for e in &out {
                let c = e.dotc(&v);
                v -= e * c;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            out.push(v / C64::new(n, 0.0));
        }
    }
    out
}

/// Uniform point on the probability simplex.
fn random_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn mixture_matrix(weights: &[f64], vectors: &[DVector<C64>]) -> CMatrix {
    let dim = vectors[0].len();
    let mut m = CMatrix::zeros(dim, dim);
    for (w, v) in weights.iter().zip(vectors) {
        m += (v * v.adjoint()) * C64::new(*w, 0.0);
    }
    m
}

fn as_density(m: CMatrix) -> Option<DensityMatrix> {
    DensityMatrix::from_hermitian_part(m).ok()
}

/// Haar-random and near-dominant pure challengers, alternating.
fn pure_challenger<R: Rng + ?Sized>(dominant: &StateVector, t: usize, rng: &mut R) -> DVector<C64> {
    let dim = dominant.dim();
    if t.is_multiple_of(2) {
        return gaussian_vector(dim, rng);
    }
    let strength = 10f64.powf(rng.random_range(-6.0..0.0));
    let v = dominant.to_dvector() + gaussian_vector(dim, rng) * C64::new(strength, 0.0);
    let n = v.norm();
    v / C64::new(n, 0.0)
}

fn dominant_gap(spec: &Spectrum) -> f64 {
    if spec.eigenvalues.len() < 2 {
        f64::INFINITY
    } else {
        spec.eigenvalues[0] - spec.eigenvalues[1]
    }
}

impl Oracle {
    pub fn new(fidelity_bias: f64) -> Self {
        Self { fidelity_bias }
    }

    fn fidelity(&self, a: &CMatrix, b: &CMatrix) -> Result<f64> {
        Ok(fidelity_matrices(a, b)? + self.fidelity_bias)
    }

    fn pure_fidelity(&self, rho: &DensityMatrix, v: &DVector<C64>) -> f64 {
        (v.adjoint() * rho.matrix() * v)[(0, 0)].re + self.fidelity_bias
    }

    /// No pure state exceeds fidelity `p₁`; the dominant eigenvector attains it.
    pub fn check_prop1(&self, rho: &DensityMatrix, n_challengers: usize, seed: u64) -> Result<PropositionReport> {
        let mut report = PropositionReport::new("1", PROP1_TOL);
        let spec = eigendecompose(rho);
        let gap = dominant_gap(&spec);
        if gap <= DEGENERACY_GAP {
            return Ok(report.skip(format!("dominant eigenvalue degenerate (gap {gap:.3e})")));
        }
        let p1 = spec.eigenvalues[0];
        let dominant = &spec.eigenvectors[0];
        let attained = self.pure_fidelity(rho, &dominant.to_dvector());
        report.observe((attained - p1).abs(), || {
            Some(Witness {
                rho: rho.clone(),
                challenger: dominant.projector(),
            })
        });
        let probe_uniqueness = gap >= 1e-2;
        let mut r = rng::seeded(seed);
        for t in 0..n_challengers {
            let phi = pure_challenger(dominant, t, &mut r);
            let f = self.pure_fidelity(rho, &phi);
            report.observe(f - p1, || as_density(&phi * phi.adjoint()).map(|c| Witness { rho: rho.clone(), challenger: c }));
            if probe_uniqueness && f >= p1 - 1e-4 {
                let overlap = dominant.to_dvector().dotc(&phi).norm_sqr();
                report.observe(0.99 - overlap, || {
                    as_density(&phi * phi.adjoint()).map(|c| Witness { rho: rho.clone(), challenger: c })
                });
            }
        }
        Ok(report)
    }

    /// `1 − p₁ ≤ T(ρ, |φ⟩⟨φ|) ≤ 1 − p_n`, with the lower bound attained by the dominant eigenvector.
    pub fn check_prop2(&self, rho: &DensityMatrix, n_challengers: usize, seed: u64) -> Result<PropositionReport> {
        let mut report = PropositionReport::new("2", PROP2_TOL);
        let spec = eigendecompose(rho);
        let gap = dominant_gap(&spec);
        if gap <= DEGENERACY_GAP {
            return Ok(report.skip(format!("dominant eigenvalue degenerate (gap {gap:.3e})")));
        }
        let p1 = spec.eigenvalues[0];
        let pn = *spec.eigenvalues.last().expect("nonempty spectrum");
        let dominant = &spec.eigenvectors[0];
        let t_dom = trace_distance_matrices(rho.matrix(), dominant.projector().matrix())?;
        report.observe((t_dom - (1.0 - p1)).abs(), || {
            Some(Witness {
                rho: rho.clone(),
                challenger: dominant.projector(),
            })
        });
        let probe_uniqueness = gap >= 1e-2;
        let mut r = rng::seeded(seed);
        for t in 0..n_challengers {
            let phi = pure_challenger(dominant, t, &mut r);
            let proj = &phi * phi.adjoint();
            let dist = trace_distance_matrices(rho.matrix(), &proj)?;
            let worst = ((1.0 - p1) - dist).max(dist - (1.0 - pn));
            report.observe(worst, || as_density(proj.clone()).map(|c| Witness { rho: rho.clone(), challenger: c }));
            if probe_uniqueness && self.pure_fidelity(rho, &phi) >= p1 - 1e-4 {
                let overlap = dominant.to_dvector().dotc(&phi).norm_sqr();
                report.observe(0.99 - overlap, || as_density(proj).map(|c| Witness { rho: rho.clone(), challenger: c }));
            }
        }
        Ok(report)
    }

    /// Random rank-`r` states stay at or below fidelity `κ(r)`; the truncated
    /// spectrum attains it.
    pub fn check_prop3(
        &self,
        rho: &DensityMatrix,
        r: usize,
        n_challengers: usize,
        seed: u64,
    ) -> Result<PropositionReport> {
        let dim = rho.dim();
        if r == 0 || r > dim {
            return Err(Error::RankOutOfRange { rank: r, dim });
        }
        let mut report = PropositionReport::new("3", PROP3_TOL);
        let spec = eigendecompose(rho);
        let kappa = spec.kappa(r);
        let best = optimal_rank_r(rho, r)?;
        let attained = self.fidelity(rho.matrix(), best.matrix())?;
        report.observe((attained - kappa).abs(), || {
            Some(Witness {
                rho: rho.clone(),
                challenger: best.clone(),
            })
        });
        if r == dim {
            let f = self.fidelity(rho.matrix(), rho.matrix())?;
            report.observe((f - 1.0).abs(), || None);
        }
        let eig: Vec<DVector<C64>> = spec.eigenvectors.iter().map(|v| v.to_dvector()).collect();
        let mut rg = rng::seeded(seed);
        for _ in 0..n_challengers {
            let phis = random_subspace(dim, r, &mut rg);
            let weights = random_simplex(r, &mut rg);
            let tau = mixture_matrix(&weights, &phis);
            let f = self.fidelity(rho.matrix(), &tau)?;
            let k: Vec<f64> = eig
                .iter()
                .map(|psi| phis.iter().map(|phi| phi.dotc(psi).norm_sqr()).sum())
                .collect();
            let projected: f64 = phis.iter().map(|phi| (phi.adjoint() * rho.matrix() * phi)[(0, 0)].re).sum();
            let via_k: f64 = spec.eigenvalues.iter().zip(&k).map(|(p, kj)| p * kj).sum();
            let k_total: f64 = k.iter().sum();
            report.observe(f - kappa, || as_density(tau.clone()).map(|c| Witness { rho: rho.clone(), challenger: c }));
            report.observe((projected - via_k).abs(), || None);
            report.observe((k_total - r as f64).abs(), || None);
            report.observe(projected - kappa, || None);
            report.samples.push(SubspaceSample {
                fidelity: f,
                projected_weight: projected,
                k,
            });
        }
        Ok(report)
    }

    /// `τ = Σ_{i≤r} q_i |Ψ_i⟩⟨Ψ_i|` with `q_i ≥ p_i`, `Σ q_i = 1`, all at trace distance `1 − κ(r)`.
    ///
    /// Also records (never asserts) the smallest margin `T − (1 − κ)` found over
    /// random rank-r challengers.
    pub fn check_prop4(&self, rho: &DensityMatrix, r: usize, n_family: usize, seed: u64) -> Result<PropositionReport> {
        let dim = rho.dim();
        if r == 0 || r > dim {
            return Err(Error::RankOutOfRange { rank: r, dim });
        }
        let mut report = PropositionReport::new("4", PROP4_TOL);
        let spec = eigendecompose(rho);
        let kappa = spec.kappa(r);
        let eig: Vec<DVector<C64>> = spec.eigenvectors[..r].iter().map(|v| v.to_dvector()).collect();
        let mut rg = rng::seeded(seed);
        let mut family: Vec<Vec<f64>> = vec![spec.eigenvalues[..r].iter().map(|p| p / kappa).collect()];
        for _ in 0..n_family {
            let slack = random_simplex(r, &mut rg);
            family.push(
                spec.eigenvalues[..r]
                    .iter()
                    .zip(&slack)
                    .map(|(p, s)| p + (1.0 - kappa) * s)
                    .collect(),
            );
        }
        for q in &family {
            let tau = mixture_matrix(q, &eig);
            let dist = trace_distance_matrices(rho.matrix(), &tau)?;
            report.observe((dist - (1.0 - kappa)).abs(), || as_density(tau).map(|c| Witness { rho: rho.clone(), challenger: c }));
        }
        let mut margin = f64::INFINITY;
        for _ in 0..n_family {
            let phis = random_subspace(dim, r, &mut rg);
            let tau = mixture_matrix(&random_simplex(r, &mut rg), &phis);
            margin = margin.min(trace_distance_matrices(rho.matrix(), &tau)? - (1.0 - kappa));
        }
        if n_family > 0 {
            report.notes.push(format!("r={r}: smallest random-challenger margin over 1-κ: {margin:.3e}"));
        }
        Ok(report)
    }

    /// Weyl sandwich for `M = Q' + P` with `Q' = U Q U†`; trial 0 uses `U = 1`.
    pub fn check_weyl(&self, q: &CMatrix, p: &CMatrix, n_trials: usize, seed: u64) -> Result<PropositionReport> {
        if q.shape() != p.shape() || q.nrows() != q.ncols() {
            return Err(Error::DimensionMismatch {
                expected: p.nrows(),
                found: q.nrows(),
            });
        }
        let mut report = PropositionReport::new("weyl", WEYL_TOL);
        let dim = q.nrows();
        let mut rg = rng::seeded(seed);
        let (qv, _) = hermitian_eigen(q);
        let (pv, _) = hermitian_eigen(p);
        for trial in 0..n_trials.max(1) {
            let rotated = if trial == 0 {
                q.clone()
            } else {
                let u = haar_unitary(dim, &mut rg);
                &u * q * u.adjoint()
            };
            let (mv, _) = hermitian_eigen(&(rotated + p));
            report.observe(weyl_violation(&qv, &pv, &mv), || None);
        }
        Ok(report)
    }

    /// `M = ρ − |φ⟩⟨φ|` for random pure `φ`: `p_{i+1} ≤ m_i ≤ p_i` and
    /// `1 − p₁ ≤ |m_n| ≤ 1 − p_n`.
    pub fn check_pure_chain(&self, rho: &DensityMatrix, n_trials: usize, seed: u64) -> Result<PropositionReport> {
        let mut report = PropositionReport::new("weyl-chain", WEYL_TOL);
        let spec = eigendecompose(rho);
        let p = &spec.eigenvalues;
        let n = p.len();
        let mut rg = rng::seeded(seed);
        for t in 0..n_trials {
            let phi = pure_challenger(&spec.eigenvectors[0], t, &mut rg);
            let (m, _) = hermitian_eigen(&(rho.matrix() - &phi * phi.adjoint()));
            let mut worst = f64::NEG_INFINITY;
            for i in 0..n - 1 {
                worst = worst.max(p[i + 1] - m[i]).max(m[i] - p[i]);
            }
            let last = m[n - 1].abs();
            worst = worst.max((1.0 - p[0]) - last).max(last - (1.0 - p[n - 1]));
            report.observe(worst, || None);
        }
        Ok(report)
    }
}

/// Largest amount by which `q_j + p_k ≤ m_i` (for `j + k − n ≥ i`) or
/// `m_i ≤ q_r + p_s` (for `i ≥ r + s − 1`) fails, all 1-indexed and sorted descending.
pub fn weyl_violation(q: &[f64], p: &[f64], m: &[f64]) -> f64 {
    let n = m.len();
    let mut worst = f64::NEG_INFINITY;
    for i in 1..=n {
        for j in 1..=n {
            for k in 1..=n {
                if j + k >= n + i {
                    worst = worst.max(q[j - 1] + p[k - 1] - m[i - 1]);
                }
                if j + k <= i + 1 {
                    worst = worst.max(m[i - 1] - q[j - 1] - p[k - 1]);
                }
            }
        }
    }
    worst
}

/// Haar-random unitary from Gram–Schmidt on a complex Gaussian matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let cols = random_subspace(dim, dim, rng);
    CMatrix::from_columns(&cols)
}

/// A named member of the verification corpus.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub label: String,
    pub rho: DensityMatrix,
}

/// Settings for [`run_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    /// Matrix dimensions of the random members (powers of two).
    pub dims: Vec<usize>,
    /// Total random members, spread evenly over `dims`.
    pub n_random: usize,
    /// Challengers per check.
    pub trials: usize,
    pub seed: u64,
    /// Add the Bell mixture and the approximate W states.
    pub include_named: bool,
    pub oracle: Oracle,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 4, 8, 16],
            n_random: 100,
            trials: 200,
            seed: 0,
            include_named: true,
            oracle: Oracle::default(),
        }
    }
}

/// Random Ginibre states (member `k` drawn from stream `k` of `seed`) plus,
/// optionally, the Bell mixture and approximate W states.
pub fn corpus(config: &SuiteConfig) -> Result<Vec<CorpusEntry>> {
    let mut out = Vec::new();
    if config.dims.is_empty() && config.n_random > 0 {
        return Err(Error::InvalidConfig("no corpus dimensions given".into()));
    }
    for k in 0..config.n_random {
        let dim = config.dims[k % config.dims.len()];
        let n = crate::quantum::qubits_for_dim(dim)
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("corpus dimension {dim} is not a power of two ≥ 2")))?;
        let mut r = rng::stream(config.seed, k as u64);
        out.push(CorpusEntry {
            label: format!("random-{k}-dim{dim}"),
            rho: random_density(n, &mut r),
        });
    }
    if config.include_named {
        out.push(CorpusEntry {
            label: "bell-mixture".into(),
            rho: bell_mixture(),
        });
        for (n, spectrum) in TABLE_SPECTRA {
            out.push(CorpusEntry {
                label: format!("w-mixture-{n}"),
                rho: make_w_mixture(n, &spectrum, config.seed)?,
            });
        }
    }
    Ok(out)
}

/// Merged reports for the whole corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub reports: Vec<PropositionReport>,
    pub states: usize,
    pub passed: bool,
}

fn ranks_for(dim: usize) -> Vec<usize> {
    let mut r = vec![1, 2, dim.div_ceil(2), dim];
    r.retain(|&x| x >= 1 && x <= dim);
    r.sort_unstable();
    r.dedup();
    r
}

fn check_entry(oracle: &Oracle, rho: &DensityMatrix, trials: usize, seed: u64) -> Result<Vec<PropositionReport>> {
    let dim = rho.dim();
    let mut p3 = PropositionReport::new("3", PROP3_TOL);
    let mut p4 = PropositionReport::new("4", PROP4_TOL);
    for (i, r) in ranks_for(dim).into_iter().enumerate() {
        p3 = p3.merge(oracle.check_prop3(rho, r, trials, seed ^ (0x30 + i as u64))?);
        p4 = p4.merge(oracle.check_prop4(rho, r, trials / 4 + 1, seed ^ (0x40 + i as u64))?);
    }
    let mut weyl = PropositionReport::new("weyl", WEYL_TOL);
    let mut hr = rng::seeded(seed ^ 0x50);
    weyl = weyl.merge(oracle.check_weyl(&random_hermitian(dim, &mut hr), rho.matrix(), trials / 10 + 1, seed ^ 0x51)?);
    Ok(vec![
        oracle.check_prop1(rho, trials, seed ^ 0x10)?,
        oracle.check_prop2(rho, trials, seed ^ 0x20)?,
        p3,
        p4,
        weyl,
        oracle.check_pure_chain(rho, trials / 2 + 1, seed ^ 0x60)?,
    ])
}

/// Runs every check on every corpus member (in parallel) and merges by proposition.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let entries = corpus(config)?;
    let per_state: Vec<Vec<PropositionReport>> = entries
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let seed = rng::stream(config.seed, 1_000_000 + k as u64).random::<u64>();
            check_entry(&config.oracle, &e.rho, config.trials, seed).map(|reports| {
                reports
                    .into_iter()
                    .map(|mut r| {
                        r.notes.iter_mut().for_each(|n| *n = format!("{}: {n}", e.label));
                        r.samples.clear();
                        r
                    })
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    let mut merged: Vec<PropositionReport> = Vec::new();
    for reports in per_state {
        for r in reports {
            match merged.iter().position(|m| m.proposition == r.proposition) {
                Some(i) => {
                    let m = merged.remove(i);
                    merged.insert(i, m.merge(r));
                }
                None => merged.push(r),
            }
        }
    }
    let passed = merged.iter().all(|r| r.passed);
    Ok(SuiteReport {
        reports: merged,
        states: entries.len(),
        passed,
    })
}

/// Random weakly-structured pair for stand-alone Weyl runs.
pub fn random_weyl_pair(dim: usize, seed: u64) -> (CMatrix, CMatrix) {
    let mut r = rng::seeded(seed);
    (random_hermitian(dim, &mut r), random_hermitian(dim, &mut r))
}
