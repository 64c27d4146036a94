use proptest::prelude::*;

use eigentomo::costs::orthonormalize;
use eigentomo::figures::spearman;
use eigentomo::measurement::{
    exact_dataset, generate_basis_set, sample_dataset, BasisLabel, BasisMode, MeasurementDataset, Outcome,
};
use eigentomo::nqs::{log_partition, NqsState, RbmParams};
use eigentomo::oracle::{weyl_violation, Oracle};
use eigentomo::quantum::{
    eigendecompose, fidelity, haar_state, hermitian_deviation, max_abs_diff, pure_fidelity, random_density,
    random_hermitian, CMatrix, DensityMatrix, StateVector,
};
use eigentomo::reconstructor::{deflate, deflate_retained, estimate_dominant_eigenvalue, reconstruct, DEFAULT_FLOOR};
use eigentomo::rng;
use eigentomo::trainer::TrainConfig;

fn state(n: usize, seed: u64) -> DensityMatrix {
    random_density(n, &mut rng::seeded(seed))
}

fn basis_sums(d: &MeasurementDataset) -> Vec<f64> {
    d.blocks()
        .iter()
        .map(|b| d.records()[b.range.clone()].iter().map(|r| r.probability).sum())
        .collect()
}

fn full(rho: &DensityMatrix) -> MeasurementDataset {
    exact_dataset(rho, &generate_basis_set(rho.n_qubits(), BasisMode::Full, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_density_is_a_state(n in 1usize..=4, seed in any::<u64>()) {
        let rho = state(n, seed);
        prop_assert!(hermitian_deviation(rho.matrix()) <= 1e-12);
        prop_assert!((rho.matrix().trace().re - 1.0).abs() <= 1e-12);
        let spec = eigendecompose(&rho);
        prop_assert!(spec.eigenvalues.iter().all(|p| *p >= -1e-10 && *p <= 1.0 + 1e-10));
        prop_assert!((spec.eigenvalues.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvectors_orthonormal_and_reassemble(n in 1usize..=4, seed in any::<u64>()) {
        let rho = state(n, seed);
        let spec = eigendecompose(&rho);
        for (i, a) in spec.eigenvectors.iter().enumerate() {
            for (j, b) in spec.eigenvectors.iter().enumerate() {
                let ip = a.inner(b).unwrap().norm();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() <= 1e-10);
            }
        }
        prop_assert!(max_abs_diff(&spec.reassemble(), rho.matrix()) <= 1e-10);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(n in 1usize..=3, s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (state(n, s1), state(n, s2));
        let fab = fidelity(&a, &b).unwrap();
        let fba = fidelity(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&fab));
        prop_assert!((fab - fba).abs() <= 1e-9);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
        let psi = haar_state(n, &mut rng::seeded(s2));
        let f = fidelity(&a, &psi.projector()).unwrap();
        prop_assert!((f - pure_fidelity(&a, &psi).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn labels_round_trip(n in 1usize..=6, b in any::<usize>(), o in any::<usize>()) {
        let basis = BasisLabel::from_index(n, b % 3usize.pow(n as u32));
        prop_assert_eq!(basis.to_string().len(), n);
        prop_assert_eq!(basis.to_string().parse::<BasisLabel>().unwrap(), basis.clone());
        let outcome = Outcome::from_index(n, o % (1 << n));
        prop_assert_eq!(outcome.to_string().parse::<Outcome>().unwrap(), outcome);
        prop_assert_eq!(outcome.spins().len(), n);
    }

    #[test]
    fn datasets_are_normalized(n in 1usize..=3, seed in any::<u64>(), shots in 1u64..2000) {
        let rho = state(n, seed);
        let bases = generate_basis_set(n, BasisMode::Compressed, seed);
        let exact = exact_dataset(&rho, &bases).unwrap();
        prop_assert!(exact.probabilities().iter().all(|p| *p >= 0.0));
        prop_assert!(basis_sums(&exact).iter().all(|s| (s - 1.0).abs() <= 1e-9));
        let sampled = sample_dataset(&rho, &bases, shots, seed).unwrap();
        for b in sampled.blocks() {
            let counts: u64 = sampled.records()[b.range.clone()].iter().map(|r| r.shots.unwrap()).sum();
            prop_assert_eq!(counts, shots);
        }
    }

    #[test]
    fn files_round_trip_bitwise(n in 1usize..=3, seed in any::<u64>()) {
        let rho = state(n, seed);
        let text = eigentomo::json::to_string(&rho).unwrap();
        let back: DensityMatrix = serde_json::from_str(&text).unwrap();
        prop_assert!(back.matrix().iter().zip(rho.matrix().iter())
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
        let data = full(&rho);
        let mut buf = Vec::new();
        data.write_jsonl(&mut buf).unwrap();
        prop_assert_eq!(MeasurementDataset::read_jsonl(&buf[..]).unwrap(), data);
    }

    #[test]
    fn rbm_flat_layout_round_trips(n in 1usize..=5, m in 1usize..=5, seed in any::<u64>()) {
        let p = RbmParams::random(n, m, 1.0, &mut rng::seeded(seed));
        prop_assert_eq!(p.flatten().len(), p.n_params());
        prop_assert_eq!(p.with_flat(&p.flatten()), p);
    }

    #[test]
    fn nqs_state_is_normalized(n in 1usize..=5, seed in any::<u64>(), scale in 0.0f64..1.5) {
        let s = NqsState::random(n, scale, seed).unwrap();
        let cached = s.cached_log_partition().unwrap();
        prop_assert!((cached - log_partition(&s.lambda).unwrap()).abs() <= 1e-9);
        let norm: f64 = s.amplitudes().unwrap().iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn orthonormalize_yields_orthonormal_set(n in 1usize..=3, k in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let states: Vec<StateVector> = (0..k.min(1 << n)).map(|_| haar_state(n, &mut r)).collect();
        let out = orthonormalize(&states).unwrap();
        for (i, a) in out.iter().enumerate() {
            for (j, b) in out.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((a.inner(b).unwrap().norm() - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn estimate_and_deflation_contracts(n in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let rho = random_density(n, &mut r);
        let data = full(&rho);
        let psi = haar_state(n, &mut r);
        let est = estimate_dominant_eigenvalue(&data, &psi, DEFAULT_FLOOR).unwrap();
        prop_assert!((0.0..=1.0).contains(&est.p_b));
        prop_assert!(est.retained[est.argmin]);
        if est.p_b < 1.0 {
            let (d, _) = deflate_retained(&data, &psi, &est).unwrap();
            prop_assert!(d.probabilities().iter().all(|p| *p >= 0.0));
            prop_assert!(basis_sums(&d).iter().all(|s| (s - 1.0).abs() <= 1e-9));
        }
        prop_assert_eq!(deflate(&data, &psi, 0.0).unwrap().probabilities(), data.probabilities());
    }

    #[test]
    fn spearman_is_rank_invariant(xs in prop::collection::vec(-1e3f64..1e3, 3..40), seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let ys: Vec<f64> = xs.iter().map(|_| rand::Rng::random::<f64>(&mut r)).collect();
        let rho = spearman(&xs, &ys);
        if rho.is_finite() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
            let cubed: Vec<f64> = xs.iter().map(|x| x.powi(3)).collect();
            prop_assert!((spearman(&cubed, &ys) - rho).abs() <= 1e-12);
            prop_assert!((spearman(&xs, &xs) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn weyl_sandwich_holds_for_random_pairs(dim in 2usize..=6, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let (q, p) = (random_hermitian(dim, &mut r), random_hermitian(dim, &mut r));
        let sum: CMatrix = &q + &p;
        let vals = |m: &CMatrix| eigentomo::quantum::hermitian_eigen(m).0;
        prop_assert!(weyl_violation(&vals(&q), &vals(&p), &vals(&sum)) <= 1e-10);
    }

    #[test]
    fn passing_reports_respect_tolerance(n in 1usize..=3, seed in any::<u64>()) {
        let rho = state(n, seed);
        let oracle = Oracle::default();
        for rep in [oracle.check_prop1(&rho, 20, seed).unwrap(), oracle.check_prop4(&rho, 1, 5, seed).unwrap()] {
            prop_assert!(rep.passed);
            prop_assert!(rep.max_violation <= rep.tolerance);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reconstruction_output_invariants(n in 1usize..=2, seed in any::<u64>()) {
        let rho = state(n, seed);
        let cfg = TrainConfig { max_epochs: 1500, seed, ..TrainConfig::default() };
        let (approx, report) = reconstruct(&full(&rho), 3, &cfg, DEFAULT_FLOOR).unwrap();
        prop_assert!(approx.pairs.iter().all(|p| (0.0..=1.0).contains(&p.p)));
        prop_assert!(approx.pairs.iter().map(|p| p.p).sum::<f64>() <= 1.0 + 1e-9);
        for s in report.steps.iter().filter(|s| s.accepted && s.step > 1) {
            prop_assert!(s.likelihood_after > s.likelihood_before.unwrap());
        }
        prop_assert_eq!(approx.rank(), report.steps.iter().filter(|s| s.accepted).count());
    }
}
