//! Pauli-basis measurements: basis labels, exact and finite-shot statistics,
//! synthetic test states, and the JSON-lines dataset format.
//!
//! Conventions: qubit 0 is the leftmost axis character and the most
//! significant bit of a computational index. Outcome `+1` is bit 0 and is the
//! first row of the axis' local rotation.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    random_near_identity, CMatrix, DensityMatrix, StateVector, C64,
};
use crate::rng;

/// Per-basis normalization tolerance for datasets.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Default perturbation strength for [`make_w_mixture`].
pub const DEFAULT_W_PERTURBATION: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'x' | 'X' => Ok(Axis::X),
            'y' | 'Y' => Ok(Axis::Y),
            'z' | 'Z' => Ok(Axis::Z),
            other => Err(Error::InvalidAxis(other)),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    /// Unitary `U` whose rows are the bras of the axis eigenstates in the
    /// order (+1, −1), stored row-major as `[u00, u01, u10, u11]`.
    pub fn rotation(self) -> [C64; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            Axis::Z => [r(1.0), r(0.0), r(0.0), r(1.0)],
            Axis::X => [r(h), r(h), r(h), r(-h)],
            Axis::Y => [r(h), C64::new(0.0, -h), r(h), C64::new(0.0, h)],
        }
    }
}

/// Local rotation for a single axis character as a 2×2 matrix.
pub fn local_rotation(axis: char) -> Result<CMatrix> {
    let u = Axis::from_char(axis)?.rotation();
    Ok(CMatrix::from_row_slice(2, 2, &u))
}

/// One Pauli axis per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel(Vec<Axis>);

impl BasisLabel {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidBasis(String::new()));
        }
        Ok(Self(axes))
    }

    pub fn all_z(n_qubits: usize) -> Self {
        Self(vec![Axis::Z; n_qubits])
    }

    /// The `k`-th basis in lexicographic order over {x, y, z}^n.
    pub fn from_index(n_qubits: usize, mut k: usize) -> Self {
        let mut axes = vec![Axis::X; n_qubits];
        for slot in axes.iter_mut().rev() {
            *slot = Axis::ALL[k % 3];
            k /= 3;
        }
        Self(axes)
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, a| acc * 3 + *a as usize)
    }

    pub fn n_qubits(&self) -> usize {
        self.0.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.0
    }

    pub fn is_all_z(&self) -> bool {
        self.0.iter().all(|a| *a == Axis::Z)
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .chars()
            .map(Axis::from_char)
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::InvalidBasis(s.to_owned()))?;
        Self::new(axes).map_err(|_| Error::InvalidBasis(s.to_owned()))
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|a| write!(f, "{}", a.as_char()))
    }
}

/// A measurement outcome `(s_1, …, s_n)`, `s_i = ±1`, stored as its
/// computational index (`s_i = +1` ↔ bit 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    n_qubits: usize,
    index: usize,
}

impl Outcome {
    pub fn from_index(n_qubits: usize, index: usize) -> Self {
        debug_assert!(index < 1 << n_qubits);
        Self { n_qubits, index }
    }

    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut index = 0;
        for &s in spins {
            index <<= 1;
            match s {
                1 => {}
                -1 => index |= 1,
                _ => return Err(Error::InvalidOutcome(format!("{spins:?}"))),
            }
        }
        if spins.is_empty() {
            return Err(Error::InvalidOutcome(String::new()));
        }
        Ok(Self {
            n_qubits: spins.len(),
            index,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn spins(&self) -> Vec<i8> {
        (0..self.n_qubits)
            .map(|q| {
                if self.index >> (self.n_qubits - 1 - q) & 1 == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spins = s
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(Error::InvalidOutcome(s.to_owned())),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::from_spins(&spins)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.spins() {
            f.write_str(if s == 1 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// Applies `U_b = ⊗_q U_{axis_q}` to a state vector in place, one qubit at a time.
pub fn rotate_into_basis(amps: &mut [C64], basis: &BasisLabel) {
    let n = basis.n_qubits();
    for (q, axis) in basis.axes().iter().enumerate() {
        if *axis != Axis::Z {
            apply_local(amps, n, q, &axis.rotation());
        }
    }
}

/// Applies `U_b†` in place.
pub fn rotate_from_basis(amps: &mut [C64], basis: &BasisLabel) {
    let n = basis.n_qubits();
    for (q, axis) in basis.axes().iter().enumerate() {
        if *axis != Axis::Z {
            let [a, b, c, d] = axis.rotation();
            apply_local(amps, n, q, &[a.conj(), c.conj(), b.conj(), d.conj()]);
        }
    }
}

fn apply_local(amps: &mut [C64], n: usize, qubit: usize, u: &[C64; 4]) {
    let mask = 1usize << (n - 1 - qubit);
    for i0 in 0..amps.len() {
        if i0 & mask != 0 {
            continue;
        }
        let i1 = i0 | mask;
        let (v0, v1) = (amps[i0], amps[i1]);
        amps[i0] = u[0] * v0 + u[1] * v1;
        amps[i1] = u[2] * v0 + u[3] * v1;
    }
}

/// Applies a single-qubit operator to the rows (left) of `m`.
fn apply_local_left(m: &mut CMatrix, n: usize, qubit: usize, u: &[C64; 4]) {
    let mask = 1usize << (n - 1 - qubit);
    let dim = m.nrows();
    for col in 0..dim {
        for i0 in 0..dim {
            if i0 & mask != 0 {
                continue;
            }
            let i1 = i0 | mask;
            let (v0, v1) = (m[(i0, col)], m[(i1, col)]);
            m[(i0, col)] = u[0] * v0 + u[1] * v1;
            m[(i1, col)] = u[2] * v0 + u[3] * v1;
        }
    }
}

/// Outcome probabilities `⟨o|U_b ρ U_b†|o⟩`, indexed by outcome index.
pub fn projector_probabilities(rho: &DensityMatrix, basis: &BasisLabel) -> Result<Vec<f64>> {
    let n = rho.n_qubits();
    if basis.n_qubits() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: basis.n_qubits(),
        });
    }
    // U ρ U† = U (U ρ)†, since ρ is Hermitian.
    let mut m = rho.matrix().clone();
    for (q, axis) in basis.axes().iter().enumerate() {
        if *axis != Axis::Z {
            apply_local_left(&mut m, n, q, &axis.rotation());
        }
    }
    let mut m = m.adjoint();
    for (q, axis) in basis.axes().iter().enumerate() {
        if *axis != Axis::Z {
            apply_local_left(&mut m, n, q, &axis.rotation());
        }
    }
    Ok((0..m.nrows()).map(|i| m[(i, i)].re.max(0.0)).collect())
}

/// Outcome probabilities of a pure state in a basis.
pub fn pure_probabilities(psi: &StateVector, basis: &BasisLabel) -> Result<Vec<f64>> {
    if basis.n_qubits() != psi.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: psi.n_qubits(),
            found: basis.n_qubits(),
        });
    }
    let mut amps = psi.amplitudes().to_vec();
    rotate_into_basis(&mut amps, basis);
    Ok(amps.iter().map(|a| a.norm_sqr()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisMode {
    Full,
    Compressed,
}

impl FromStr for BasisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(BasisMode::Full),
            "compressed" => Ok(BasisMode::Compressed),
            other => Err(Error::InvalidConfig(format!("unknown basis mode {other:?}"))),
        }
    }
}

/// Size of the compressed basis set, `min(3^n, round(3·n·(3/2)^n))`.
pub fn compressed_basis_count(n_qubits: usize) -> usize {
    let full = 3usize.pow(n_qubits as u32);
    let target = (3.0 * n_qubits as f64 * 1.5f64.powi(n_qubits as i32)).round() as usize;
    full.min(target)
}

/// Pauli bases in lexicographic order. The compressed set is a seeded
/// uniform draw without replacement that always contains the all-z basis.
pub fn generate_basis_set(n_qubits: usize, mode: BasisMode, seed: u64) -> Vec<BasisLabel> {
    let full = 3usize.pow(n_qubits as u32);
    match mode {
        BasisMode::Full => (0..full)
            .map(|k| BasisLabel::from_index(n_qubits, k))
            .collect(),
        BasisMode::Compressed => {
            let count = compressed_basis_count(n_qubits);
            let all_z = full - 1;
            let mut rng = rng::seeded(seed);
            let mut picked: Vec<usize> = index::sample(&mut rng, all_z, count - 1).into_vec();
            picked.push(all_z);
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|k| BasisLabel::from_index(n_qubits, k))
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Exact,
    Sampled,
}

/// One `(basis, outcome)` projector and its observed probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub basis: BasisLabel,
    pub outcome: Outcome,
    pub probability: f64,
    pub shots: Option<u64>,
}

/// Contiguous run of records sharing a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisBlock {
    pub basis: BasisLabel,
    pub range: std::ops::Range<usize>,
}

/// Measurement records sorted by basis, then outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementDataset {
    n_qubits: usize,
    mode: DatasetMode,
    seed: Option<u64>,
    records: Vec<Record>,
    blocks: Vec<BasisBlock>,
}

impl MeasurementDataset {
    /// Sorts and validates `records`: consistent qubit count, no duplicate
    /// projectors, non-negative probabilities summing to one per basis.
    pub fn new(
        n_qubits: usize,
        mode: DatasetMode,
        seed: Option<u64>,
        mut records: Vec<Record>,
    ) -> Result<Self> {
        for r in &records {
            if r.basis.n_qubits() != n_qubits || r.outcome.n_qubits() != n_qubits {
                return Err(Error::InvalidDataset(format!(
                    "record {}/{} does not have {n_qubits} qubits",
                    r.basis, r.outcome
                )));
            }
            if !(r.probability >= 0.0) || !r.probability.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "record {}/{} has probability {}",
                    r.basis, r.outcome, r.probability
                )));
            }
        }
        records.sort_by(|a, b| (&a.basis, a.outcome).cmp(&(&b.basis, b.outcome)));
        let mut blocks: Vec<BasisBlock> = Vec::new();
        for (i, r) in records.iter().enumerate() {
            match blocks.last_mut() {
                Some(b) if b.basis == r.basis => {
                    if records[i - 1].outcome == r.outcome {
                        return Err(Error::InvalidDataset(format!(
                            "duplicate record {}/{}",
                            r.basis, r.outcome
                        )));
                    }
                    b.range.end = i + 1;
                }
                _ => blocks.push(BasisBlock {
                    basis: r.basis.clone(),
                    range: i..i + 1,
                }),
            }
        }
        for b in &blocks {
            let sum: f64 = records[b.range.clone()].iter().map(|r| r.probability).sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidDataset(format!(
                    "basis {} sums to {sum}",
                    b.basis
                )));
            }
        }
        Ok(Self {
            n_qubits,
            mode,
            seed,
            records,
            blocks,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn mode(&self) -> DatasetMode {
        self.mode
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn bases(&self) -> Vec<BasisLabel> {
        self.blocks.iter().map(|b| b.basis.clone()).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.probability).collect()
    }

    pub fn has_shots(&self) -> bool {
        self.records.iter().all(|r| r.shots.is_some()) && !self.records.is_empty()
    }

    /// Same projectors with replaced probabilities; shot counts are dropped.
    pub fn with_probabilities(&self, probabilities: &[f64]) -> Result<Self> {
        if probabilities.len() != self.records.len() {
            return Err(Error::DimensionMismatch {
                expected: self.records.len(),
                found: probabilities.len(),
            });
        }
        let records = self
            .records
            .iter()
            .zip(probabilities)
            .map(|(r, &p)| Record {
                probability: p,
                shots: None,
                ..r.clone()
            })
            .collect();
        Self::new(self.n_qubits, DatasetMode::Exact, self.seed, records)
    }

    /// Keeps only the listed bases (in dataset order).
    pub fn restricted_to(&self, bases: &[BasisLabel]) -> Self {
        let keep: HashSet<&BasisLabel> = bases.iter().collect();
        let mut records = Vec::new();
        let mut blocks = Vec::new();
        for b in &self.blocks {
            if keep.contains(&b.basis) {
                let start = records.len();
                records.extend_from_slice(&self.records[b.range.clone()]);
                blocks.push(BasisBlock {
                    basis: b.basis.clone(),
                    range: start..records.len(),
                });
            }
        }
        Self {
            n_qubits: self.n_qubits,
            mode: self.mode,
            seed: self.seed,
            records,
            blocks,
        }
    }

    /// Writes the JSON-lines format: a header line then one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = HeaderLine {
            n_qubits: self.n_qubits,
            mode: self.mode,
            seed: self.seed,
        };
        writeln!(w, "{}", crate::json::to_string(&header)?)?;
        for r in &self.records {
            let line = RecordLine {
                basis: r.basis.to_string(),
                outcome: r.outcome.to_string(),
                p: r.probability,
                shots: r.shots,
            };
            writeln!(w, "{}", crate::json::to_string(&line)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: HeaderLine = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break serde_json::from_str(&line)?;
                    }
                }
                None => return Err(Error::Format("dataset file is empty".into())),
            }
        };
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine = serde_json::from_str(&line)?;
            records.push(Record {
                basis: rec.basis.parse()?,
                outcome: rec.outcome.parse()?,
                probability: rec.p,
                shots: rec.shots,
            });
        }
        Self::new(header.n_qubits, header.mode, header.seed, records)
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    n_qubits: usize,
    mode: DatasetMode,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    basis: String,
    outcome: String,
    p: f64,
    shots: Option<u64>,
}

fn check_bases(n_qubits: usize, bases: &[BasisLabel]) -> Result<()> {
    let mut seen = HashSet::new();
    for b in bases {
        if b.n_qubits() != n_qubits {
            return Err(Error::DimensionMismatch {
                expected: n_qubits,
                found: b.n_qubits(),
            });
        }
        if !seen.insert(b) {
            return Err(Error::InvalidBasis(format!("duplicate basis {b}")));
        }
    }
    Ok(())
}

/// Exact probabilities for every outcome of every basis, zeros included.
pub fn exact_dataset(rho: &DensityMatrix, bases: &[BasisLabel]) -> Result<MeasurementDataset> {
    let n = rho.n_qubits();
    check_bases(n, bases)?;
    let per_basis: Vec<Vec<f64>> = bases
        .par_iter()
        .map(|b| projector_probabilities(rho, b))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(bases.len() << n);
    for (b, probs) in bases.iter().zip(per_basis) {
        let total: f64 = probs.iter().sum();
        for (k, p) in probs.into_iter().enumerate() {
            records.push(Record {
                basis: b.clone(),
                outcome: Outcome::from_index(n, k),
                probability: p / total,
                shots: None,
            });
        }
    }
    MeasurementDataset::new(n, DatasetMode::Exact, None, records)
}

/// Multinomial counts of `shots_per_basis` draws per basis, stored as
/// frequencies with their counts. Basis `k` draws from stream `k` of `seed`.
pub fn sample_dataset(
    rho: &DensityMatrix,
    bases: &[BasisLabel],
    shots_per_basis: u64,
    seed: u64,
) -> Result<MeasurementDataset> {
    if shots_per_basis == 0 {
        return Err(Error::InvalidConfig("shots_per_basis must be at least 1".into()));
    }
    let n = rho.n_qubits();
    check_bases(n, bases)?;
    let per_basis: Vec<Vec<u64>> = bases
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let probs = projector_probabilities(rho, b)?;
            let mut rng = rng::stream(seed, k as u64);
            Ok(multinomial(&probs, shots_per_basis, &mut rng))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(bases.len() << n);
    for (b, counts) in bases.iter().zip(per_basis) {
        for (k, c) in counts.into_iter().enumerate() {
            records.push(Record {
                basis: b.clone(),
                outcome: Outcome::from_index(n, k),
                probability: c as f64 / shots_per_basis as f64,
                shots: Some(c),
            });
        }
    }
    MeasurementDataset::new(n, DatasetMode::Sampled, Some(seed), records)
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(probs: &[f64], trials: u64, rng: &mut R) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let mut remaining_n = trials;
    let mut remaining_p = 1.0;
    let mut counts = vec![0u64; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        let p = p / total;
        if k + 1 == probs.len() {
            counts[k] = remaining_n;
            break;
        }
        let cond = if remaining_p > 0.0 {
            (p / remaining_p).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let c = Binomial::new(remaining_n, cond)
            .expect("conditional probability is in [0, 1]")
            .sample(rng);
        counts[k] = c;
        remaining_n -= c;
        remaining_p -= p;
    }
    counts
}

/// The four Bell states `(Φ+, Φ−, Ψ+, Ψ−)`.
pub fn bell_states() -> [StateVector; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mk = |a: [f64; 4]| {
        StateVector::normalized(2, a.iter().map(|&x| C64::new(x * h, 0.0)).collect())
            .expect("Bell state")
    };
    [
        mk([1.0, 0.0, 0.0, 1.0]),
        mk([1.0, 0.0, 0.0, -1.0]),
        mk([0.0, 1.0, 1.0, 0.0]),
        mk([0.0, 1.0, -1.0, 0.0]),
    ]
}

/// Eigenvalues of the two-qubit Bell mixture demonstration state.
pub const BELL_MIXTURE_SPECTRUM: [f64; 4] = [0.9, 0.09, 0.009, 0.001];

/// `0.9 Φ+ + 0.09 Φ− + 0.009 Ψ+ + 0.001 Ψ−`.
pub fn bell_mixture() -> DensityMatrix {
    DensityMatrix::mixture(&BELL_MIXTURE_SPECTRUM, &bell_states()).expect("valid mixture")
}

/// Completes `spectrum` to `dim` eigenvalues by spreading the remaining weight uniformly.
pub fn complete_spectrum(spectrum: &[f64], dim: usize) -> Result<Vec<f64>> {
    if spectrum.is_empty() || spectrum.len() > dim {
        return Err(Error::InvalidSpectrum(format!(
            "need between 1 and {dim} eigenvalues, got {}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidSpectrum("eigenvalues must be non-negative".into()));
    }
    if spectrum.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidSpectrum("eigenvalues must be non-increasing".into()));
    }
    let sum: f64 = spectrum.iter().sum();
    let remainder = 1.0 - sum;
    if remainder < -1e-12 {
        return Err(Error::InvalidSpectrum(format!("eigenvalues sum to {sum} > 1")));
    }
    let remainder = remainder.max(0.0);
    let free = dim - spectrum.len();
    let mut full = spectrum.to_vec();
    if free == 0 {
        if remainder > 1e-9 {
            return Err(Error::InvalidSpectrum(format!(
                "eigenvalues sum to {sum} with no room for the remainder"
            )));
        }
    } else {
        let fill = remainder / free as f64;
        if fill > spectrum[spectrum.len() - 1] + 1e-12 {
            return Err(Error::InvalidSpectrum(format!(
                "uniform remainder {fill} exceeds the smallest requested eigenvalue"
            )));
        }
        full.extend(std::iter::repeat_n(fill, free));
    }
    Ok(full)
}

/// Orthonormal basis starting with the W state, completed by Gram–Schmidt
/// over the computational basis in index order.
fn w_adapted_basis(n_qubits: usize) -> Vec<Vec<C64>> {
    let dim = 1usize << n_qubits;
    let mut basis: Vec<Vec<C64>> = vec![StateVector::w_state(n_qubits).into_amplitudes()];
    for k in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[k] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let c: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                v.iter_mut().zip(b).for_each(|(y, x)| *y -= c * x);
            }
        }
        let norm = crate::quantum::l2_norm(&v);
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Synthetic approximate W state with [`DEFAULT_W_PERTURBATION`].
pub fn make_w_mixture(n_qubits: usize, spectrum: &[f64], seed: u64) -> Result<DensityMatrix> {
    make_w_mixture_with(n_qubits, spectrum, DEFAULT_W_PERTURBATION, seed)
}

/// Synthetic approximate W state with a prescribed spectrum.
///
/// The eigenbasis is the W state followed by its Gram–Schmidt completion over
/// the computational basis (so the second eigenvector is `|0…0⟩`, the
/// excitation-loss direction), all rotated by one seeded unitary
/// `exp(i·ε·H)` close to the identity. `perturbation = 0` gives the exact W
/// state as dominant eigenvector.
pub fn make_w_mixture_with(
    n_qubits: usize,
    spectrum: &[f64],
    perturbation: f64,
    seed: u64,
) -> Result<DensityMatrix> {
    if n_qubits == 0 {
        return Err(Error::InvalidSpectrum("need at least one qubit".into()));
    }
    if !(perturbation.is_finite() && perturbation >= 0.0) {
        return Err(Error::InvalidConfig(format!("perturbation {perturbation}")));
    }
    let dim = 1usize << n_qubits;
    let full = complete_spectrum(spectrum, dim)?;
    let u = random_near_identity(dim, perturbation, &mut rng::seeded(seed));
    let mut m = CMatrix::zeros(dim, dim);
    for (p, v) in full.iter().zip(w_adapted_basis(n_qubits)) {
        let v = &u * nalgebra::DVector::from_vec(v);
        m += (&v * v.adjoint()) * C64::new(*p, 0.0);
    }
    DensityMatrix::from_hermitian_part(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{eigendecompose, haar_state, max_abs_diff, random_density};

    #[test]
    fn local_rotations_match_known_matrices() {
        let z = local_rotation('z').unwrap();
        assert!(max_abs_diff(&z, &CMatrix::identity(2, 2)) < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = local_rotation('x').unwrap();
        let expect = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)],
        );
        assert!(max_abs_diff(&x, &expect) < 1e-15);
        assert!(matches!(local_rotation('w'), Err(Error::InvalidAxis('w'))));
    }

    #[test]
    fn y_rotation_diagonalizes_sigma_y() {
        let u = local_rotation('y').unwrap();
        let sy = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
        );
        let d = &u * sy * u.adjoint();
        let expect = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
        );
        assert!(max_abs_diff(&d, &expect) < 1e-15);
    }

    #[test]
    fn labels_parse_and_print() {
        let b: BasisLabel = "xzy".parse().unwrap();
        assert_eq!(b.to_string(), "xzy");
        assert_eq!(BasisLabel::from_index(3, b.index()), b);
        assert!("xaz".parse::<BasisLabel>().is_err());
        let o: Outcome = "+-+".parse().unwrap();
        assert_eq!(o.index(), 0b010);
        assert_eq!(o.spins(), vec![1, -1, 1]);
        assert_eq!(o.to_string(), "+-+");
        assert!("+0".parse::<Outcome>().is_err());
    }

    #[test]
    fn ground_state_in_z_basis() {
        let rho = StateVector::basis(3, 0).projector();
        let p = projector_probabilities(&rho, &BasisLabel::all_z(3)).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1..].iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn maximally_mixed_is_uniform_in_every_basis() {
        let rho = DensityMatrix::maximally_mixed(2);
        for b in generate_basis_set(2, BasisMode::Full, 0) {
            let p = projector_probabilities(&rho, &b).unwrap();
            assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-12), "{b}");
        }
    }

    #[test]
    fn bell_state_in_xx_basis() {
        // Dense oracle: |<o| (H⊗H) |Φ+>|² from the explicit 4×4 Kronecker product.
        let h = local_rotation('x').unwrap();
        let hh = h.kronecker(&h);
        let phi = bell_states()[0].to_dvector();
        let rotated = hh * phi;
        let oracle: Vec<f64> = rotated.iter().map(|a| a.norm_sqr()).collect();
        let p = projector_probabilities(&bell_states()[0].projector(), &"xx".parse().unwrap())
            .unwrap();
        for (a, b) in p.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[3] - 0.5).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12 && p[2].abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(projector_probabilities(&rho, &BasisLabel::all_z(3)).is_err());
    }

    #[test]
    fn basis_set_sizes() {
        let full = generate_basis_set(2, BasisMode::Full, 0);
        let names: Vec<String> = full.iter().map(|b| b.to_string()).collect();
        assert_eq!(names, ["xx", "xy", "xz", "yx", "yy", "yz", "zx", "zy", "zz"]);
        assert_eq!(generate_basis_set(4, BasisMode::Compressed, 3).len(), 61);
        assert_eq!(generate_basis_set(1, BasisMode::Compressed, 3).len(), 3);
    }

    #[test]
    fn exact_dataset_shapes() {
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ])))
        .unwrap();
        let ds = exact_dataset(&rho, &[BasisLabel::all_z(1)]).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records()[0].probability, 1.0);
        assert_eq!(ds.records()[1].probability, 0.0);

        let bell = bell_mixture();
        let ds = exact_dataset(&bell, &generate_basis_set(2, BasisMode::Full, 0)).unwrap();
        assert_eq!(ds.len(), 36);
        assert_eq!(ds.blocks().len(), 9);

        let w = make_w_mixture(4, &[0.860, 0.063, 0.037], 1).unwrap();
        let ds = exact_dataset(&w, &generate_basis_set(4, BasisMode::Compressed, 1)).unwrap();
        assert_eq!(ds.len(), 61 * 16);
    }

    #[test]
    fn duplicate_bases_are_rejected() {
        let rho = DensityMatrix::maximally_mixed(1);
        let b = BasisLabel::all_z(1);
        assert!(exact_dataset(&rho, &[b.clone(), b]).is_err());
    }

    #[test]
    fn sampled_certain_outcome_and_determinism() {
        let rho = StateVector::basis(1, 0).projector();
        let ds = sample_dataset(&rho, &[BasisLabel::all_z(1)], 100, 9).unwrap();
        assert_eq!(ds.records()[0].probability, 1.0);
        assert_eq!(ds.records()[0].shots, Some(100));

        let mut r = crate::rng::seeded(4);
        let rho = random_density(2, &mut r);
        let bases = generate_basis_set(2, BasisMode::Full, 0);
        let a = sample_dataset(&rho, &bases, 1000, 77).unwrap();
        let b = sample_dataset(&rho, &bases, 1000, 77).unwrap();
        assert_eq!(a, b);
        assert!(sample_dataset(&rho, &bases, 0, 77).is_err());
    }

    #[test]
    fn large_sample_matches_exact_probabilities() {
        let mut r = crate::rng::seeded(8);
        let rho = random_density(2, &mut r);
        let bases = generate_basis_set(2, BasisMode::Full, 0);
        let exact = exact_dataset(&rho, &bases).unwrap();
        let sampled = sample_dataset(&rho, &bases, 1_000_000, 5).unwrap();
        for (e, s) in exact.records().iter().zip(sampled.records()) {
            assert!((e.probability - s.probability).abs() < 5e-3);
        }
    }

    #[test]
    fn w_mixture_spectrum_and_pure_limit() {
        let rho = make_w_mixture(4, &[0.860, 0.063, 0.037], 11).unwrap();
        let spec = eigendecompose(&rho);
        for (got, want) in spec.eigenvalues.iter().zip([0.860, 0.063, 0.037]) {
            assert!((got - want).abs() < 1e-10);
        }
        let w = StateVector::w_state(4);
        let overlap = spec.eigenvectors[0].overlap(&w).unwrap();
        assert!(overlap > 0.9 && overlap < 1.0, "{overlap}");

        let pure = make_w_mixture_with(3, &[1.0], 0.0, 5).unwrap();
        assert!(max_abs_diff(pure.matrix(), StateVector::w_state(3).projector().matrix()) < 1e-12);
        let one = make_w_mixture_with(1, &[1.0], 0.0, 5).unwrap();
        assert!((one.matrix()[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w_mixture_rejects_bad_spectra() {
        assert!(make_w_mixture(2, &[0.6, 0.6], 0).is_err());
        assert!(make_w_mixture(2, &[-0.1], 0).is_err());
        assert!(make_w_mixture(2, &[0.1, 0.5], 0).is_err());
        assert!(make_w_mixture(1, &[0.5, 0.3], 0).is_err());
        assert!(make_w_mixture(2, &[0.5, 0.05], 0).is_err());
    }

    #[test]
    fn jsonl_roundtrip() {
        let rho = bell_mixture();
        let bases = generate_basis_set(2, BasisMode::Full, 0);
        let ds = sample_dataset(&rho, &bases, 500, 3).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"n_qubits":2,"mode":"sampled","seed":3}"#);
        assert!(text.lines().nth(1).unwrap().starts_with(r#"{"basis":"xx","outcome":"++","p":"#));
        let back = MeasurementDataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rotations_are_inverse() {
        let mut r = crate::rng::seeded(2);
        let psi = haar_state(3, &mut r);
        let b: BasisLabel = "xyz".parse().unwrap();
        let mut v = psi.amplitudes().to_vec();
        rotate_into_basis(&mut v, &b);
        rotate_from_basis(&mut v, &b);
        for (a, c) in v.iter().zip(psi.amplitudes()) {
            assert!((a - c).norm() < 1e-14);
        }
    }
}
