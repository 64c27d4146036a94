use eigentomo::measurement::{bell_mixture, exact_dataset, generate_basis_set, make_w_mixture, sample_dataset, BasisMode};
use eigentomo::quantum::{eigendecompose, fidelity};
use eigentomo::reconstructor::{log_likelihood, reconstruct_with_truth, ReconstructionResult, DEFAULT_FLOOR};
use eigentomo::trainer::TrainConfig;

#[test]
fn sampled_bell_data_still_reconstructs() {
    let rho = bell_mixture();
    let data = sample_dataset(&rho, &generate_basis_set(2, BasisMode::Full, 0), 100_000, 11).unwrap();
    let (approx, report) = reconstruct_with_truth(&data, 2, &TrainConfig::default(), DEFAULT_FLOOR, Some(&rho)).unwrap();
    assert!(report.steps[0].eigenstate_fidelity.unwrap() > 0.99);
    assert!(fidelity(&rho, &approx.density().unwrap()).unwrap() > 0.9);
    // shot-weighted likelihood is finite and negative
    let ll = log_likelihood(&approx, &data).unwrap();
    assert!(ll.is_finite() && ll < 0.0);
}

#[test]
fn compressed_bases_recover_w_dominant_state() {
    let rho = make_w_mixture(4, &[0.85, 0.08], 2).unwrap();
    let bases = generate_basis_set(4, BasisMode::Compressed, 2);
    assert!(bases.len() < 81);
    let data = exact_dataset(&rho, &bases).unwrap();
    let (approx, _) = reconstruct_with_truth(&data, 1, &TrainConfig::default(), DEFAULT_FLOOR, Some(&rho)).unwrap();
    let spec = eigendecompose(&rho);
    assert!(approx.pairs[0].state.overlap(&spec.eigenvectors[0]).unwrap() > 0.98);
    assert!(approx.pairs[0].p <= spec.eigenvalues[0] + 0.05);
}

#[test]
fn result_file_round_trips() {
    let rho = bell_mixture();
    let data = exact_dataset(&rho, &generate_basis_set(2, BasisMode::Full, 0)).unwrap();
    let cfg = TrainConfig {
        max_epochs: 500,
        ..TrainConfig::default()
    };
    let (approx, report) = reconstruct_with_truth(&data, 2, &cfg, DEFAULT_FLOOR, None).unwrap();
    let res = ReconstructionResult::new(&approx, &report);
    let text = eigentomo::json::to_string(&res).unwrap();
    let back: ReconstructionResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back, res);
    assert_eq!(back.approx().unwrap(), approx);
}
