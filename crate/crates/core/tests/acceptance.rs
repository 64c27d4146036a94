//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release -p eigentomo --test acceptance`. The process
//! exits non-zero when any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::Rng;

use eigentomo::costs::{cost_gradient, cost_value, CostKind, CostSpec};
use eigentomo::figures::{cost_grid, cost_rank_correlations, entropy_data, entropy_reduction_fraction, CostGridConfig};
use eigentomo::json;
use eigentomo::measurement::{
    bell_mixture, exact_dataset, generate_basis_set, make_w_mixture, pure_probabilities, BasisMode,
    MeasurementDataset, BELL_MIXTURE_SPECTRUM,
};
use eigentomo::nqs::{gibbs_sample, rbm_log_marginal, spins_of, NqsState, RbmParams};
use eigentomo::oracle::{self, haar_unitary, SuiteConfig};
use eigentomo::quantum::{fidelity, haar_state, optimal_rank_r, random_density, CMatrix, DensityMatrix, StateVector};
use eigentomo::reconstructor::{
    deflate, deflate_retained, estimate_dominant_eigenvalue, reconstruct, ReconstructionResult, SpectralApprox,
    DEFAULT_FLOOR,
};
use eigentomo::rng;
use eigentomo::trainer::TrainConfig;

const W4_SPECTRUM: [f64; 3] = [0.860, 0.063, 0.037];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

// ---------------------------------------------------------------------------
// Independent oracles (plain nalgebra, no library spectral code)

/// Eigenvalues (descending) and matching eigenvectors of a Hermitian matrix.
fn oracle_eigen(m: &CMatrix) -> (Vec<f64>, Vec<DVector<C64>>) {
    let e = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    (
        idx.iter().map(|&i| e.eigenvalues[i]).collect(),
        idx.iter().map(|&i| e.eigenvectors.column(i).into_owned()).collect(),
    )
}

fn oracle_sqrt(m: &CMatrix) -> CMatrix {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| C64::new(v.max(0.0).sqrt(), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// `(Tr √(√ρ σ √ρ))²`.
fn oracle_fidelity(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    let s = oracle_sqrt(rho);
    let inner = &s * sigma * &s;
    let inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
    let t: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    t * t
}

fn overlap(a: &StateVector, b: &DVector<C64>) -> f64 {
    a.amplitudes().iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

fn kappa(vals: &[f64], r: usize) -> f64 {
    vals.iter().take(r).sum()
}

/// `Σ_h exp(Σ_i a_i σ_i + Σ_j b_j h_j + Σ_ij W_ij σ_i h_j)` over all `h ∈ {±1}^M`.
fn oracle_marginal(p: &RbmParams, sigma: &[f64]) -> f64 {
    let m = p.hidden_bias.len();
    (0..1usize << m)
        .map(|k| {
            let h = spins_of(m, k);
            let mut e: f64 = p.visible_bias.iter().zip(sigma).map(|(a, s)| a * s).sum();
            e += p.hidden_bias.iter().zip(&h).map(|(b, h)| b * h).sum::<f64>();
            for (i, s) in sigma.iter().enumerate() {
                for (j, hj) in h.iter().enumerate() {
                    e += p.weights[i][j] * s * hj;
                }
            }
            e.exp()
        })
        .sum()
}

fn mixture_matrix(weights: &[f64], vectors: &[DVector<C64>]) -> CMatrix {
    let dim = vectors[0].len();
    let mut m = CMatrix::zeros(dim, dim);
    for (w, v) in weights.iter().zip(vectors) {
        m += (v * v.adjoint()) * C64::new(*w, 0.0);
    }
    m
}

fn full_exact(rho: &DensityMatrix) -> MeasurementDataset {
    exact_dataset(rho, &generate_basis_set(rho.n_qubits(), BasisMode::Full, 0)).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria

fn criterion_bell() -> Verdict {
    let start = Instant::now();
    let rho = bell_mixture();
    let (vals, vecs) = oracle_eigen(rho.matrix());
    let (approx, report) = reconstruct(&full_exact(&rho), 2, &TrainConfig::default(), DEFAULT_FLOOR).unwrap();
    let elapsed = start.elapsed();
    let f1 = overlap(&approx.pairs[0].state, &vecs[0]);
    let p1b = approx.pairs[0].p;
    let f2 = approx.pairs.get(1).map(|p| overlap(&p.state, &vecs[1])).unwrap_or(0.0);
    let p2b = report.steps.get(1).filter(|s| s.accepted).map(|s| s.p_hat).unwrap_or(f64::NAN);
    let f = oracle_fidelity(rho.matrix(), approx.density().unwrap().matrix());
    let ok = f1 >= 0.999
        && (0.895..=0.905).contains(&p1b)
        && f2 >= 0.999
        && (0.065..=0.090).contains(&p2b)
        && f >= 0.95
        && elapsed <= Duration::from_secs(300)
        && (vals[0] - BELL_MIXTURE_SPECTRUM[0]).abs() < 1e-12;
    verdict(
        ok,
        format!(
            "|<psi1|Psi1>|^2={f1:.6} p1b={p1b:.5} |<psi2|Psi2>|^2={f2:.6} p2b={p2b:.5} F={f:.5} ({:.1}s)",
            elapsed.as_secs_f64()
        ),
    )
}

/// Runs the rank-2 W reconstruction; the approximation is reused for the entropy criterion.
fn criterion_w4(slot: &mut Option<(DensityMatrix, SpectralApprox)>) -> Verdict {
    let start = Instant::now();
    let rho = make_w_mixture(4, &W4_SPECTRUM, 0).unwrap();
    let (vals, vecs) = oracle_eigen(rho.matrix());
    let (approx, _) = reconstruct(&full_exact(&rho), 2, &TrainConfig::default(), DEFAULT_FLOOR).unwrap();
    let elapsed = start.elapsed();
    let f1 = overlap(&approx.pairs[0].state, &vecs[0]);
    let rf = oracle_fidelity(rho.matrix(), approx.density().unwrap().matrix()) / kappa(&vals, 2);
    let ok = f1 >= 0.98 && rf >= 0.95 && approx.rank() == 2 && elapsed <= Duration::from_secs(1800);
    *slot = Some((rho, approx));
    verdict(ok, format!("|<psi1|Psi1>|^2={f1:.5} RF={rf:.5} ({:.1}s)", elapsed.as_secs_f64()))
}

fn criterion_oracle() -> Verdict {
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let config = SuiteConfig::default();
    let suite = oracle::run_suite(&config).unwrap();
    let worst = suite.reports.iter().map(|r| r.max_violation).fold(0.0, f64::max);
    let props_seen = ["1", "2", "3", "4", "weyl"]
        .iter()
        .all(|p| suite.reports.iter().any(|r| r.proposition == *p && r.trials > 0));

    let mut attain: f64 = 0.0;
    for e in oracle::corpus(&config).unwrap() {
        let (vals, _) = oracle_eigen(e.rho.matrix());
        for r in 1..=e.rho.dim() {
            let sigma = optimal_rank_r(&e.rho, r).unwrap();
            attain = attain.max((fidelity(&e.rho, &sigma).unwrap() - kappa(&vals, r)).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = suite.passed && props_seen && worst <= TOL && attain <= TOL && elapsed <= Duration::from_secs(600);
    let per: Vec<String> = suite
        .reports
        .iter()
        .map(|r| format!("{}:{:.1e}", r.proposition, r.max_violation))
        .collect();
    verdict(
        ok,
        format!(
            "{} states, max violation {worst:.2e} [{}], kappa attainment {attain:.2e} ({:.1}s)",
            suite.states,
            per.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn marginalization_error() -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let mut r = rng::stream(41, k);
        let n = 1 + (k as usize % 6);
        let p = RbmParams::random(n, n, 1.0, &mut r);
        for idx in 0..1usize << n {
            let sigma = eigentomo::measurement::Outcome::from_index(n, idx);
            let ours = rbm_log_marginal(&p, &sigma).unwrap().exp();
            let brute = oracle_marginal(&p, &spins_of(n, idx));
            worst = worst.max(((ours - brute) / brute).abs());
        }
    }
    worst
}

fn gibbs_tv() -> f64 {
    let n = 4;
    let p = RbmParams::random(n, n, 0.5, &mut rng::seeded(43));
    let exact: Vec<f64> = (0..1usize << n).map(|i| oracle_marginal(&p, &spins_of(n, i))).collect();
    let z: f64 = exact.iter().sum();
    let samples = gibbs_sample(&p, 1_000_000, 100, 5, 44).unwrap();
    let mut counts = vec![0usize; 1 << n];
    for s in &samples {
        counts[s.index()] += 1;
    }
    0.5 * counts
        .iter()
        .zip(&exact)
        .map(|(c, e)| (*c as f64 / samples.len() as f64 - e / z).abs())
        .sum::<f64>()
}

fn gradient_error() -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let mut r = rng::stream(45, k);
        let n = 1 + (k as usize % 3);
        let rho = random_density(n, &mut r);
        let data = full_exact(&rho);
        let state = NqsState::random(n, 0.5, 1000 + k).unwrap();
        for kind in CostKind::ALL {
            let mut spec = CostSpec::new(kind);
            if k % 2 == 1 {
                spec = spec.with_orth_states(vec![haar_state(n, &mut r)]).unwrap();
            }
            let g = cost_gradient(&spec, &state, &data).unwrap();
            let analytic: Vec<f64> = g.lambda.flatten().into_iter().chain(g.mu.flatten()).collect();
            let (lam, mu) = (state.lambda.flatten(), state.mu.flatten());
            let eval = |l: &[f64], m: &[f64]| {
                let s = NqsState::new(state.lambda.with_flat(l), state.mu.with_flat(m)).unwrap();
                cost_value(&spec, &s, &data).unwrap()
            };
            let mut numeric = Vec::with_capacity(analytic.len());
            for i in 0..lam.len() + mu.len() {
                let (mut lp, mut lm, mut mp, mut mm) = (lam.clone(), lam.clone(), mu.clone(), mu.clone());
                if i < lam.len() {
                    lp[i] += h;
                    lm[i] -= h;
                } else {
                    mp[i - lam.len()] += h;
                    mm[i - lam.len()] -= h;
                }
                numeric.push((eval(&lp, &mp) - eval(&lm, &mm)) / (2.0 * h));
            }
            let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
            let err = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err / scale);
        }
    }
    worst
}

fn criterion_rbm() -> Verdict {
    let marg = marginalization_error();
    let tv = gibbs_tv();
    let grad = gradient_error();
    verdict(
        marg <= 1e-9 && tv <= 0.01 && grad <= 1e-5,
        format!("marginal rel err {marg:.2e}, Gibbs TV {tv:.4}, gradient rel err {grad:.2e}"),
    )
}

fn criterion_estimator() -> Verdict {
    // exactness: diagonal state with the computational basis present
    let mut exact_err: f64 = 0.0;
    for k in 0..20u64 {
        let mut r = rng::stream(51, k);
        let n = 1 + (k as usize % 3);
        let dim = 1usize << n;
        let mut w: Vec<f64> = (0..dim).map(|_| r.random::<f64>() + 0.01).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let top = (0..dim).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        let rho = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            w.iter().map(|x| C64::new(*x, 0.0)),
        )))
        .unwrap();
        let est = estimate_dominant_eigenvalue(&full_exact(&rho), &StateVector::basis(n, top), DEFAULT_FLOOR).unwrap();
        exact_err = exact_err.max((est.p_b - w[top]).abs());
    }

    // nonnegativity: raw p − p_b q over retained records, then the deflated output
    let mut worst_raw: f64 = 0.0;
    let mut min_out = f64::INFINITY;
    for k in 0..100u64 {
        let mut r = rng::stream(52, k);
        let n = 1 + (k as usize % 4);
        let rho = random_density(n, &mut r);
        let data = full_exact(&rho);
        let (_, vecs) = oracle_eigen(rho.matrix());
        let psi = if k % 2 == 0 {
            haar_state(n, &mut r)
        } else {
            let u = eigentomo::quantum::random_near_identity(1 << n, 0.05, &mut r);
            StateVector::normalized(n, (u * &vecs[0]).iter().copied().collect()).unwrap()
        };
        let est = estimate_dominant_eigenvalue(&data, &psi, DEFAULT_FLOOR).unwrap();
        let mut offset = 0;
        for block in data.blocks() {
            let q = pure_probabilities(&psi, &block.basis).unwrap();
            for (j, qj) in q.iter().enumerate() {
                let idx = offset + j;
                if est.retained[idx] {
                    worst_raw = worst_raw.min(data.records()[idx].probability - est.p_b * qj);
                }
            }
            offset += q.len();
        }
        if est.p_b < 1.0 {
            let (out, _) = deflate_retained(&data, &psi, &est).unwrap();
            min_out = min_out.min(out.probabilities().into_iter().fold(f64::INFINITY, f64::min));
        }
    }

    // consistency with the directly built deflated state
    let mut consist: f64 = 0.0;
    for k in 0..20u64 {
        let mut r = rng::stream(53, k);
        let n = 1 + (k as usize % 3);
        let dim = 1usize << n;
        let u = haar_unitary(dim, &mut r);
        let cols: Vec<DVector<C64>> = (0..dim).map(|j| u.column(j).into_owned()).collect();
        let mut w: Vec<f64> = (0..dim).map(|_| r.random::<f64>()).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let rho = DensityMatrix::new(mixture_matrix(&w, &cols)).unwrap();
        let rest: Vec<f64> = w[1..].iter().map(|x| x / (1.0 - w[0])).collect();
        let rho_prime = DensityMatrix::new(mixture_matrix(&rest, &cols[1..])).unwrap();
        let psi = StateVector::normalized(n, cols[0].iter().copied().collect()).unwrap();
        let deflated = deflate(&full_exact(&rho), &psi, w[0]).unwrap();
        let direct = full_exact(&rho_prime);
        for (a, b) in deflated.probabilities().iter().zip(direct.probabilities()) {
            consist = consist.max((a - b).abs());
        }
    }
    verdict(
        exact_err <= 1e-10 && worst_raw >= -1e-12 && min_out >= 0.0 && consist <= 1e-9,
        format!(
            "exactness err {exact_err:.2e}, min retained p-p_b*q {worst_raw:.2e}, min deflated p {min_out:.2e}, consistency {consist:.2e}"
        ),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion_determinism() -> Verdict {
    let mut checks = Vec::new();
    let bell = bell_mixture();
    let w = make_w_mixture(3, &[0.8, 0.1], 5).unwrap();

    let ds = |rho: &DensityMatrix| {
        let mut buf = Vec::new();
        full_exact(rho).write_jsonl(&mut buf).unwrap();
        buf
    };
    let text = ds(&w);
    checks.push(("dataset", text == ds(&w)));
    let back = MeasurementDataset::read_jsonl(&text[..]).unwrap();
    let bits = |d: &MeasurementDataset| d.probabilities().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    checks.push(("dataset round trip", bits(&back) == bits(&full_exact(&w))));

    let cfg = TrainConfig {
        restarts: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = |threads: usize| {
        in_pool(threads, || {
            let (a, r) = reconstruct(&full_exact(&bell), 2, &cfg, DEFAULT_FLOOR).unwrap();
            json::to_string(&ReconstructionResult::new(&a, &r)).unwrap()
        })
    };
    let one = run(1);
    checks.push(("reconstruct", one == run(4) && one == run(1)));

    let suite = SuiteConfig {
        dims: vec![2, 4],
        n_random: 8,
        trials: 20,
        seed: 3,
        ..SuiteConfig::default()
    };
    let s = |t| in_pool(t, || json::to_string(&oracle::run_suite(&suite).unwrap()).unwrap());
    checks.push(("oracle", s(1) == s(4)));

    let grid = || json::to_string(&cost_grid(&w, &full_exact(&w), &CostGridConfig::default()).unwrap()).unwrap();
    checks.push(("cost grid", grid() == grid()));

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} bit-identical comparisons", checks.len())
        } else {
            format!("differs: {}", failed.join(", "))
        },
    )
}

fn criterion_entropy(slot: &Option<(DensityMatrix, SpectralApprox)>) -> Verdict {
    let (rho, approx) = slot.as_ref().expect("W reconstruction ran");
    let (rows, scatter) = entropy_data(rho, &approx.pairs[0].state).unwrap();
    let frac = entropy_reduction_fraction(&rows);
    let (_, vecs) = oracle_eigen(rho.matrix());
    let truth = StateVector::normalized(4, vecs[0].iter().copied().collect()).unwrap();
    let frac_true = entropy_reduction_fraction(&entropy_data(rho, &truth).unwrap().0);
    verdict(
        rows.len() == 81 && scatter.len() == 1296 && frac >= 0.95,
        format!(
            "reconstructed eigenstate: {:.1}% of {} bases (true eigenvector: {:.1}%)",
            100.0 * frac,
            rows.len(),
            100.0 * frac_true
        ),
    )
}

fn criterion_cost_ranking() -> Verdict {
    let rho = make_w_mixture(4, &W4_SPECTRUM, 0).unwrap();
    let rows = cost_grid(&rho, &full_exact(&rho), &CostGridConfig::default()).unwrap();
    // oracle: recompute each fidelity and the Spearman coefficient from scratch
    let (_, vecs) = oracle_eigen(rho.matrix());
    let corr = cost_rank_correlations(&rows);
    let get = |k: CostKind| corr.iter().find(|(c, _)| *c == k).unwrap().1;
    let infid: Vec<f64> = rows.iter().map(|r| 1.0 - r.fidelity).collect();
    let idx = CostKind::ALL.iter().position(|k| *k == CostKind::L15).unwrap();
    let l15: Vec<f64> = rows.iter().map(|r| r.costs[idx]).collect();
    let rho_s = oracle_spearman(&l15, &infid);
    let (l15c, kl1c) = (get(CostKind::L15), get(CostKind::KL1));
    let fid_ok = rows[0].fidelity > 1.0 - 1e-12 && vecs[0].len() == 16;
    verdict(
        fid_ok && (rho_s - l15c).abs() < 1e-12 && l15c >= 0.8 && l15c > kl1c,
        format!(
            "{} states, Spearman L1.5 {l15c:.4}, KL1 {kl1c:.4}, L1 {:.4}, L2 {:.4}, KL2 {:.4}",
            rows.len(),
            get(CostKind::L1),
            get(CostKind::L2),
            get(CostKind::KL2)
        ),
    )
}

/// Pearson correlation of average ranks, computed by counting.
fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn main() {
    let mut w4 = None;
    let results = [
        ("1 Bell mixture end-to-end", criterion_bell()),
        ("2 synthetic 4-qubit W mixture", criterion_w4(&mut w4)),
        ("3 proposition oracle suite", criterion_oracle()),
        ("4 RBM correctness", criterion_rbm()),
        ("5 eigenvalue estimator contracts", criterion_estimator()),
        ("6 determinism", criterion_determinism()),
        ("7 entropy reduction", criterion_entropy(&w4)),
        ("8 cost ranking", criterion_cost_ranking()),
    ];
    let mut failures = 0;
    for (name, v) in &results {
        println!("{} [{name}] {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        failures += usize::from(!v.passed);
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
