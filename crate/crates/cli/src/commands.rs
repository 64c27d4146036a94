use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;

use eigentomo::costs::{CostKind, CostSpec};
use eigentomo::figures::{self, CostGridConfig, TableRow};
use eigentomo::json::format_f64;
use eigentomo::measurement::{
    bell_mixture, exact_dataset, generate_basis_set, make_w_mixture_with, sample_dataset, BasisMode,
    MeasurementDataset,
};
use eigentomo::oracle::{self, Oracle, SuiteConfig};
use eigentomo::quantum::{eigendecompose, DensityMatrix, StateVector};
use eigentomo::reconstructor::{reconstruct_with_truth, ReconstructionResult};
use eigentomo::trainer::TrainConfig;

use crate::manifest::RunManifest;
use crate::{
    Cli, Command, FigdataArgs, Figure, Preset, ReconstructArgs, SynthArgs, VerifyArgs, EXIT_RUNTIME,
    EXIT_USAGE, EXIT_VERIFY,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(eigentomo::Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(eigentomo::Error::InvalidSpectrum(_) | eigentomo::Error::InvalidConfig(_)) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<eigentomo::Error> for CliError {
    fn from(e: eigentomo::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Files read and written by one command.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    out_dir: PathBuf,
}

impl Io {
    fn input(&mut self, path: &Path) -> Result<PathBuf> {
        let abs = fs::canonicalize(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        self.inputs.push(abs.clone());
        Ok(abs)
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.output(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::Io(p, e))
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        eigentomo::json::to_writer(&mut w, value)?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(self.out_dir.join(name), e))
    }

    fn write_lines(&mut self, name: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
        let mut w = self.create(name)?;
        let path = self.out_dir.join(name);
        for l in lines {
            writeln!(w, "{l}").map_err(|e| CliError::Io(path.clone(), e))?;
        }
        w.flush().map_err(|e| CliError::Io(path, e))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|e| CliError::Core(eigentomo::Error::Format(format!("{}: {e}", path.display()))))
}

fn read_dataset(path: &Path) -> Result<MeasurementDataset> {
    let f = File::open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(MeasurementDataset::read_jsonl(BufReader::new(f))?)
}

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

/// Runs one parsed invocation and writes its manifest. Returns the exit code.
pub fn run(cli: Cli) -> Result<u8> {
    if let Command::Replay(r) = &cli.command {
        let m = RunManifest::read(&r.manifest)?;
        if matches!(m.cli.command, Command::Replay(_)) {
            return Err(CliError::Usage("a manifest cannot record a replay".into()));
        }
        let inner = Cli {
            out_dir: cli.out_dir.clone(),
            threads: cli.threads,
            ..m.cli
        };
        println!("replaying {} (seed {})", m.command, inner.seed);
        return run(inner);
    }

    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::Io(cli.out_dir.clone(), e))?;
    let start = Instant::now();
    let mut io = Io {
        out_dir: cli.out_dir.clone(),
        ..Io::default()
    };
    let mut recorded = cli.clone();
    let (name, code) = match &mut recorded.command {
        Command::Synth(a) => ("synth", synth(a, cli.seed, &mut io)?),
        Command::Reconstruct(a) => ("reconstruct", reconstruct(a, cli.seed, &mut io)?),
        Command::Verify(a) => ("verify", verify(a, cli.seed, &mut io)?),
        Command::Figdata(a) => ("figdata", figdata(a, cli.seed, &mut io)?),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let manifest = RunManifest {
        command: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cli.seed,
        cli: recorded,
        inputs: io.inputs,
        outputs: io.outputs,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.write(&cli.out_dir.join(RunManifest::file_name(name)))?;
    Ok(code)
}

fn synth(a: &mut SynthArgs, seed: u64, io: &mut Io) -> Result<u8> {
    let (rho, target, label) = match (a.preset, a.w) {
        (Some(Preset::BellMixture), None) => (bell_mixture(), None, "bell mixture".to_string()),
        (None, Some(n)) => {
            if n == 0 {
                return Err(CliError::Usage("--w needs at least one qubit".into()));
            }
            let rho = make_w_mixture_with(n, &a.spectrum, a.perturbation, seed)?;
            (rho, Some(StateVector::w_state(n)), format!("{n}-qubit W mixture"))
        }
        _ => return Err(CliError::Usage("give exactly one of --preset and --w".into())),
    };
    let n = rho.n_qubits();
    let mode: BasisMode = a.bases.into();
    let bases = generate_basis_set(n, mode, seed);
    let data = match a.shots {
        None => exact_dataset(&rho, &bases)?,
        Some(shots) => sample_dataset(&rho, &bases, shots, seed)?,
    };
    io.write_json("state.json", &rho)?;
    if let Some(t) = &target {
        io.write_json("target.json", t)?;
    }
    let mut w = io.create("dataset.jsonl")?;
    data.write_jsonl(&mut w)?;
    w.flush().map_err(|e| CliError::Io(io.out_dir.join("dataset.jsonl"), e))?;
    println!("{label}: {} bases, {} records", bases.len(), data.len());
    Ok(0)
}

fn train_config(a: &ReconstructArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        cost: CostSpec::new(CostKind::from(a.train.cost)),
        learning_rate: a.train.lr,
        max_epochs: a.train.epochs,
        batch_bases: a.train.batch_bases,
        seed,
        patience: a.train.patience,
        restarts: a.train.restarts,
        n_hidden: a.train.hidden,
        ..TrainConfig::default()
    }
}

const STEPS_HEADER: &str = "step,p_hat,p_raw,argmin_record,eigenstate_fidelity,likelihood_before,likelihood_after,accepted,records_discarded_by_floor,training_cost,training_epochs,orthogonality";

fn reconstruct(a: &mut ReconstructArgs, seed: u64, io: &mut Io) -> Result<u8> {
    a.dataset = io.input(&a.dataset)?;
    let data = read_dataset(&a.dataset)?;
    let truth: Option<DensityMatrix> = match &mut a.truth {
        Some(p) => {
            *p = io.input(p)?;
            Some(read_json(p)?)
        }
        None => None,
    };
    let target: Option<StateVector> = match &mut a.target {
        Some(p) => {
            *p = io.input(p)?;
            Some(read_json(p)?)
        }
        None => None,
    };
    let cfg = train_config(a, seed);
    let (approx, report) = reconstruct_with_truth(&data, a.max_rank, &cfg, a.floor, truth.as_ref())?;

    io.write_json("result.json", &ReconstructionResult::new(&approx, &report))?;
    let steps = report.steps.iter().map(|s| {
        [
            s.step.to_string(),
            format_f64(s.p_hat),
            format_f64(s.p_raw),
            s.argmin_record.clone(),
            opt(s.eigenstate_fidelity),
            opt(s.likelihood_before),
            format_f64(s.likelihood_after),
            s.accepted.to_string(),
            s.records_discarded_by_floor.to_string(),
            format_f64(s.training_cost),
            s.training_epochs.to_string(),
            opt(s.orthogonality),
        ]
        .join(",")
    });
    io.write_lines("steps.csv", std::iter::once(STEPS_HEADER.to_string()).chain(steps))?;
    for (k, log) in report.training_logs.iter().enumerate() {
        let name = format!("training-step{}.csv", k + 1);
        let mut w = io.create(&name)?;
        log.write_csv(&mut w)?;
        w.flush().map_err(|e| CliError::Io(io.out_dir.join(&name), e))?;
    }

    for s in &report.steps {
        println!(
            "step {}: p_hat {:.6} ({}){}",
            s.step,
            s.p_hat,
            if s.accepted { "accepted" } else { "rejected" },
            s.eigenstate_fidelity
                .map(|f| format!(", eigenstate fidelity {f:.6}"))
                .unwrap_or_default()
        );
    }
    println!("stop: {}", report.stop);
    if let Some(rho) = &truth {
        let row = TableRow::new(rho, &approx, &report, target.as_ref())?;
        println!("F = {:.6}, RF = {:.6}", row.fidelity, row.relative_fidelity);
        io.write_lines("table.csv", [TableRow::HEADER.to_string(), row.csv_line()])?;
    }
    Ok(0)
}

fn verify(a: &mut VerifyArgs, seed: u64, io: &mut Io) -> Result<u8> {
    let config = SuiteConfig {
        dims: a.dims.clone(),
        n_random: a.n_random,
        trials: a.trials,
        seed,
        include_named: !a.no_named,
        oracle: Oracle::new(a.inject_fault),
    };
    let suite = oracle::run_suite(&config)?;
    for r in &suite.reports {
        println!(
            "{} proposition {}: {} checks, max violation {:.3e} (tolerance {:.0e}), {} skipped",
            if r.passed { "PASS" } else { "FAIL" },
            r.proposition,
            r.trials,
            r.max_violation,
            r.tolerance,
            r.skipped
        );
        io.write_json(&format!("oracle-prop{}.json", r.proposition), r)?;
    }
    io.write_json("oracle-report.json", &suite)?;
    println!("{} states, {}", suite.states, if suite.passed { "all passed" } else { "FAILED" });
    Ok(if suite.passed { 0 } else { EXIT_VERIFY })
}

fn figdata(a: &mut FigdataArgs, seed: u64, io: &mut Io) -> Result<u8> {
    a.state = io.input(&a.state)?;
    let rho: DensityMatrix = read_json(&a.state)?;
    match a.figure {
        Figure::Fig3 => {
            let data = match &mut a.dataset {
                Some(p) => {
                    *p = io.input(p)?;
                    read_dataset(p)?
                }
                None => exact_dataset(&rho, &generate_basis_set(rho.n_qubits(), BasisMode::Full, 0))?,
            };
            let cfg = CostGridConfig {
                n_perturbations: a.perturbations,
                max_strength: a.max_strength,
                floor: a.floor,
                seed,
            };
            let rows = figures::cost_grid(&rho, &data, &cfg)?;
            let kinds: Vec<&str> = CostKind::ALL.iter().map(|k| k.name()).collect();
            let header = format!("strength,fidelity,eps_F,p1b,eps_p1b,{}", kinds.join(","));
            let lines = rows.iter().map(|r| {
                let mut cols = vec![
                    format_f64(r.strength),
                    format_f64(r.fidelity),
                    format_f64(r.eps_fidelity),
                    format_f64(r.p1b),
                    format_f64(r.eps_eigenvalue),
                ];
                cols.extend(r.costs.iter().map(|c| format_f64(*c)));
                cols.join(",")
            });
            io.write_lines("fig3.csv", std::iter::once(header).chain(lines))?;
            let corr = figures::cost_rank_correlations(&rows);
            io.write_lines(
                "fig3-spearman.csv",
                std::iter::once("cost,spearman".to_string())
                    .chain(corr.iter().map(|(k, c)| format!("{},{}", k.name(), format_f64(*c)))),
            )?;
            let summary: Vec<String> = corr.iter().map(|(k, c)| format!("{}={c:.4}", k.name())).collect();
            println!("spearman(cost, 1-F): {}", summary.join(" "));
        }
        Figure::Fig4 => {
            let psi = match &mut a.result {
                Some(p) => {
                    *p = io.input(p)?;
                    let res: ReconstructionResult = read_json(p)?;
                    res.pairs
                        .into_iter()
                        .next()
                        .ok_or_else(|| CliError::Usage("result file has no eigenstates".into()))?
                        .state
                }
                None => eigendecompose(&rho).eigenvectors.swap_remove(0),
            };
            let (entropies, scatter) = figures::entropy_data(&rho, &psi)?;
            io.write_lines(
                "fig4-entropy.csv",
                std::iter::once("basis,entropy_mixed,entropy_pure".to_string()).chain(
                    entropies
                        .iter()
                        .map(|e| format!("{},{},{}", e.basis, format_f64(e.entropy_mixed), format_f64(e.entropy_pure))),
                ),
            )?;
            io.write_lines(
                "fig4-probabilities.csv",
                std::iter::once("basis,outcome,p_mixed,p_pure".to_string()).chain(
                    scatter
                        .iter()
                        .map(|s| format!("{},{},{},{}", s.basis, s.outcome, format_f64(s.p_mixed), format_f64(s.p_pure))),
                ),
            )?;
            println!(
                "{} bases, {} projectors, pure entropy lower in {:.1}% of bases",
                entropies.len(),
                scatter.len(),
                100.0 * figures::entropy_reduction_fraction(&entropies)
            );
        }
    }
    Ok(0)
}
