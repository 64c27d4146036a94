//! Dense complex linear algebra for small registers of qubits.
//!
//! Pure states are [`StateVector`]s, mixed states are [`DensityMatrix`]es.
//! Hermitian eigendecompositions are phase-fixed (largest-magnitude component
//! real and positive) and sorted by descending eigenvalue so that repeated runs
//! produce bit-identical spectra.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Norm tolerance for [`StateVector`].
pub const NORM_TOL: f64 = 1e-12;
/// Hermiticity and trace tolerance for [`DensityMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues above `-PSD_TOL` count as non-negative.
pub const PSD_TOL: f64 = 1e-10;
/// Eigenvalues of a matrix-square-root argument down to `-SQRT_CLAMP_TOL`
/// are clamped to zero; anything lower is an error.
pub const SQRT_CLAMP_TOL: f64 = 1e-8;
/// Eigenvalues below this fraction of the largest are treated as zero when taking matrix square roots.
pub const SQRT_ZERO_REL: f64 = 1e-14;
/// Eigenvalue gap below which two eigenvalues are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-12;

/// Number of qubits for a given Hilbert-space dimension, if it is a power of two.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim >= 2).then(|| dim.trailing_zeros() as usize)
}

/// A normalized pure state over the computational basis.
///
/// Index `i` corresponds to the bit string of `i` with qubit 0 as the most
/// significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps `amplitudes`, checking length `2^n_qubits` and unit norm.
    pub fn new(n_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_len(n_qubits, amplitudes.len())?;
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wraps `amplitudes` after dividing by their norm.
    pub fn normalized(n_qubits: usize, mut amplitudes: Vec<C64>) -> Result<Self> {
        check_len(n_qubits, amplitudes.len())?;
        let norm = l2_norm(&amplitudes);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized(norm));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amplitudes })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { n_qubits, amplitudes }
    }

    /// The n-qubit W state: equal superposition of all single-excitation states.
    pub fn w_state(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let amp = C64::new(1.0 / (n_qubits as f64).sqrt(), 0.0);
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        for k in 0..n_qubits {
            amplitudes[1 << k] = amp;
        }
        Self { n_qubits, amplitudes }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Multiplies every amplitude by a unit-modulus scalar.
    pub fn with_global_phase(&self, phase: C64) -> Self {
        let phase = phase / phase.norm();
        Self {
            n_qubits: self.n_qubits,
            amplitudes: self.amplitudes.iter().map(|a| a * phase).collect(),
        }
    }

    pub fn to_dvector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.amplitudes)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(&self) -> DensityMatrix {
        let v = self.to_dvector();
        DensityMatrix {
            n_qubits: self.n_qubits,
            entries: &v * v.adjoint(),
        }
    }

    /// Applies a unitary (or any square matrix) and renormalizes.
    pub fn transformed(&self, unitary: &CMatrix) -> Result<Self> {
        check_dims(self.dim(), unitary.nrows())?;
        let v = unitary * self.to_dvector();
        Self::normalized(self.n_qubits, v.iter().copied().collect())
    }
}

/// A Hermitian, unit-trace, positive semi-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let n_qubits = square_qubits(&entries)?;
        let dev = hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let min = hermitian_eigen(&entries)
            .0
            .last()
            .copied()
            .unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::NotPsd(min));
        }
        Ok(Self { n_qubits, entries })
    }

    /// Symmetrizes and rescales to unit trace before validating.
    ///
    /// Use this for matrices assembled by floating-point arithmetic whose
    /// Hermiticity or trace has drifted by rounding.
    pub fn from_hermitian_part(entries: CMatrix) -> Result<Self> {
        square_qubits(&entries)?;
        let herm = (&entries + entries.adjoint()) * C64::new(0.5, 0.0);
        let tr = herm.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::InvalidTrace(tr));
        }
        Self::new(herm / C64::new(tr, 0.0))
    }

    /// Convex mixture `Σ w_i |ψ_i⟩⟨ψ_i|` of pure states, normalized by `Σ w_i`.
    pub fn mixture(weights: &[f64], states: &[StateVector]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidSpectrum("empty mixture".into()))?;
        if weights.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidSpectrum("negative mixture weight".into()));
        }
        let dim = first.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for (w, s) in weights.iter().zip(states) {
            check_dims(dim, s.dim())?;
            let v = s.to_dvector();
            m += (&v * v.adjoint()) * C64::new(*w, 0.0);
        }
        Self::from_hermitian_part(m)
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self {
            n_qubits,
            entries: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        check_dims(self.dim(), psi.dim())?;
        let v = psi.to_dvector();
        Ok((v.adjoint() * &self.entries * &v)[(0, 0)].re)
    }

    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }
}

/// Eigenvalues sorted in descending order with matching phase-fixed eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<StateVector>,
}

impl Spectrum {
    /// `κ(r)`: sum of the `r` largest eigenvalues.
    pub fn kappa(&self, r: usize) -> f64 {
        self.eigenvalues.iter().take(r).sum()
    }

    /// `Σ p_i |ψ_i⟩⟨ψ_i|`.
    pub fn reassemble(&self) -> CMatrix {
        let dim = self.eigenvalues.len();
        let mut m = CMatrix::zeros(dim, dim);
        for (p, psi) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let v = psi.to_dvector();
            m += (&v * v.adjoint()) * C64::new(*p, 0.0);
        }
        m
    }
}

/// Eigendecomposition of a density matrix.
pub fn eigendecompose(rho: &DensityMatrix) -> Spectrum {
    let (eigenvalues, vectors) = hermitian_eigen(rho.matrix());
    let eigenvectors = vectors
        .into_iter()
        .map(|v| StateVector {
            n_qubits: rho.n_qubits,
            amplitudes: v,
        })
        .collect();
    Spectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// Deterministic Hermitian eigensolver.
///
/// Returns eigenvalues in descending order and unit eigenvectors whose
/// largest-magnitude component is real and positive. Within a degenerate
/// cluster (gap below [`DEGENERACY_GAP`]) vectors are ordered lexicographically.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, Vec<Vec<C64>>) {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<C64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &val)| {
            let col: Vec<C64> = eig.eigenvectors.column(k).iter().copied().collect();
            (val, fix_phase(col))
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end - 1].0 - pairs[end].0 < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            // reorder the vectors only; the values stay non-increasing
            let mut values: Vec<f64> = pairs[start..end].iter().map(|p| p.0).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            pairs[start..end].sort_by(|a, b| lex_cmp(&a.1, &b.1));
            pairs[start..end].iter_mut().zip(values).for_each(|(p, v)| p.0 = v);
        }
        start = end;
    }
    pairs.into_iter().unzip()
}

fn fix_phase(mut v: Vec<C64>) -> Vec<C64> {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, a) in v.iter().enumerate() {
        let mag = a.norm();
        // first index wins ties up to rounding
        if mag > best_mag + 1e-14 {
            best = i;
            best_mag = mag;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / best_mag;
        v.iter_mut().for_each(|a| *a *= phase);
        v[best] = C64::new(v[best].norm(), 0.0);
    }
    v
}

fn lex_cmp(a: &[C64], b: &[C64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Matrix square root of a positive semi-definite Hermitian matrix.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(m);
    let dim = m.nrows();
    let cutoff = SQRT_ZERO_REL * vals.first().copied().unwrap_or(0.0).max(0.0);
    let mut out = CMatrix::zeros(dim, dim);
    for (val, vec) in vals.iter().zip(&vecs) {
        let root = clamped_sqrt(*val)?;
        if root == 0.0 || *val <= cutoff {
            continue;
        }
        let v = DVector::from_column_slice(vec);
        out += (&v * v.adjoint()) * C64::new(root, 0.0);
    }
    Ok(out)
}

fn clamped_sqrt(val: f64) -> Result<f64> {
    if val < -SQRT_CLAMP_TOL {
        return Err(Error::NotPsd(val));
    }
    Ok(val.max(0.0).sqrt())
}

/// Uhlmann fidelity `[Tr √(√σ ρ √σ)]²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    fidelity_matrices(rho.matrix(), sigma.matrix())
}

/// [`fidelity`] on raw matrices, for callers holding unvalidated PSD matrices.
pub fn fidelity_matrices(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    check_dims(rho.nrows(), sigma.nrows())?;
    // Tr √(√σ ρ √σ) is the nuclear norm of √ρ √σ; singular values avoid
    // square roots of eigenvalue noise when either state is rank-deficient.
    let product = psd_sqrt(rho)? * psd_sqrt(sigma)?;
    let root_trace: f64 = product.singular_values().iter().sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// Fidelity between a mixed state and a pure state, `⟨ψ|ρ|ψ⟩`.
pub fn pure_fidelity(rho: &DensityMatrix, psi: &StateVector) -> Result<f64> {
    Ok(rho.expectation(psi)?.clamp(0.0, 1.0))
}

/// Trace distance `½ Σ |λ_i|` over the eigenvalues of `ρ − σ`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    trace_distance_matrices(rho.matrix(), sigma.matrix())
}

/// [`trace_distance`] for arbitrary Hermitian matrices (σ need not be PSD).
pub fn trace_distance_matrices(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    check_dims(rho.nrows(), sigma.nrows())?;
    let diff = rho - sigma;
    let (vals, _) = hermitian_eigen(&diff);
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Renormalized truncation of the spectrum to its `r` largest eigenpairs.
pub fn optimal_rank_r(rho: &DensityMatrix, r: usize) -> Result<DensityMatrix> {
    let dim = rho.dim();
    if r == 0 || r > dim {
        return Err(Error::RankOutOfRange { rank: r, dim });
    }
    if r == dim {
        return Ok(rho.clone());
    }
    let spec = eigendecompose(rho);
    let weights: Vec<f64> = spec.eigenvalues[..r].iter().map(|p| p.max(0.0)).collect();
    DensityMatrix::mixture(&weights, &spec.eigenvectors[..r])
}

/// Largest `|m − m†|` entry.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest entry-wise modulus of `a − b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub(crate) fn l2_norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn check_len(n_qubits: usize, len: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits >= usize::BITS as usize || len != 1usize << n_qubits {
        return Err(Error::DimensionMismatch {
            expected: 1usize.checked_shl(n_qubits as u32).unwrap_or(0),
            found: len,
        });
    }
    Ok(())
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn square_qubits(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    qubits_for_dim(m.nrows()).ok_or(Error::DimensionMismatch {
        expected: m.nrows().next_power_of_two().max(2),
        found: m.nrows(),
    })
}

// ---------------------------------------------------------------------------
// Random ensembles

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state (normalized complex Gaussian vector).
pub fn haar_state<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> StateVector {
    let amps = (0..1usize << n_qubits)
        .map(|_| complex_gaussian(rng))
        .collect();
    StateVector::normalized(n_qubits, amps).expect("gaussian vector is nonzero")
}

/// Random density matrix `GG† / Tr(GG†)` with complex Gaussian `G` (Ginibre ensemble).
pub fn random_density<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> DensityMatrix {
    let dim = 1usize << n_qubits;
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    DensityMatrix::from_hermitian_part(&g * g.adjoint()).expect("Ginibre matrix is a state")
}

/// Random Hermitian matrix from the Gaussian unitary ensemble.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

/// `exp(i·t·H)` for Hermitian `H`.
pub fn unitary_from_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(h);
    let dim = h.nrows();
    let mut u = CMatrix::zeros(dim, dim);
    for (val, vec) in vals.iter().zip(&vecs) {
        let v = DVector::from_column_slice(vec);
        u += (&v * v.adjoint()) * C64::from_polar(1.0, t * val);
    }
    u
}

/// A random unitary close to the identity, `exp(i·ε·H)` with `H` from the
/// GUE scaled to unit spectral radius on average.
pub fn random_near_identity<R: Rng + ?Sized>(dim: usize, epsilon: f64, rng: &mut R) -> CMatrix {
    let h = random_hermitian(dim, rng);
    let scale = (dim as f64).sqrt() * 2.0;
    unitary_from_hermitian(&h, epsilon / scale)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    n_qubits: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct VectorFile {
    n_qubits: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = self.dim();
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|i| (0..dim).map(|j| f(&self.entries[(i, j)])).collect())
                .collect()
        };
        MatrixFile {
            n_qubits: self.n_qubits,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = MatrixFile::deserialize(d)?;
        let dim = f.re.len();
        if f.im.len() != dim || f.re.iter().chain(&f.im).any(|r| r.len() != dim) {
            return Err(D::Error::custom("density matrix rows are ragged"));
        }
        let m = CMatrix::from_fn(dim, dim, |i, j| C64::new(f.re[i][j], f.im[i][j]));
        let rho = DensityMatrix::new(m).map_err(D::Error::custom)?;
        if rho.n_qubits != f.n_qubits {
            return Err(D::Error::custom("n_qubits does not match matrix size"));
        }
        Ok(rho)
    }
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VectorFile {
            n_qubits: self.n_qubits,
            re: self.amplitudes.iter().map(|a| a.re).collect(),
            im: self.amplitudes.iter().map(|a| a.im).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = VectorFile::deserialize(d)?;
        if f.re.len() != f.im.len() {
            return Err(D::Error::custom("re and im lengths differ"));
        }
        let amps = f.re.iter().zip(&f.im).map(|(&r, &i)| C64::new(r, i)).collect();
        StateVector::new(f.n_qubits, amps).map_err(D::Error::custom)
    }
}
