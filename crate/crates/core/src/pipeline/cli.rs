//! Command-line front end.
//!
//! Exit codes: 0 success, 1 unexpected I/O failure, 2 unreadable or
//! inconsistent input, 3 calibration failure, 4 output written but degraded
//! (some maps fell back to the prior).

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use super::formats::{self, FormatError};
use super::model_file::{load_model, save_model};
use super::synthetic::{SyntheticSpec, GENERATOR};
use super::SCHEMA;
use crate::calibrate::{calibrate_full, CalibrationError};
use crate::d4::{D4Element, Map2D};
use crate::grid::{bind_predictions, group_by_cosmology, CalibrationConfig, GridError, PredictionKind};
use crate::posterior::{infer_batch, PosteriorError};
use crate::scattering::{
    build_bank, isotropic_reduce, pca_fit_transform, scattering_cov, ScatteringVector, WaveletBank,
};
use crate::scoring::{evaluate, tune_calibration, ScoreError, SearchSpace, DEFAULT_LAMBDA};

pub const ENV_PREFIX: &str = "LENSLIKE_";

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CALIBRATION: u8 = 3;
pub const EXIT_DEGRADED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "lenslike", version, about = "Calibrated grid-likelihood inference pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true, env = "LENSLIKE_SEED")]
    pub seed: Option<u64>,
    /// Weight of the squared-error term in the score.
    #[arg(long, global = true, env = "LENSLIKE_LAMBDA", default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Calibration config file (TOML, or JSON by extension).
    #[arg(long, global = true, env = "LENSLIKE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "LENSLIKE_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw synthetic validation and test predictions.
    Simulate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit calibrated likelihood moments from validation predictions.
    Calibrate {
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid posteriors for test predictions.
    Infer {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score posterior results against truths.
    Score {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search over calibration hyperparameters.
    Tune {
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        search: PathBuf,
        #[arg(long)]
        out_config: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
    },
    /// Write the eight dihedral transforms of a map.
    D4 {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Scattering-covariance features for one or more maps.
    ScExtract {
        #[arg(long, num_args = 1.., required = true)]
        maps: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        scales: usize,
        #[arg(long, default_value_t = 4)]
        orientations: usize,
        /// Reduce to rotation-averaged coefficients.
        #[arg(long)]
        iso: bool,
        /// Keep imaginary parts of the isotropic cross terms.
        #[arg(long)]
        keep_imaginary: bool,
        /// Project onto the top-k principal components across maps.
        #[arg(long)]
        pca: Option<usize>,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl ToString) -> Self {
        Self { code: EXIT_INPUT, message: message.to_string() }
    }

    fn calibration(message: impl ToString) -> Self {
        Self { code: EXIT_CALIBRATION, message: message.to_string() }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        let code = if matches!(e, FormatError::Io { .. }) { EXIT_IO } else { EXIT_INPUT };
        Self { code, message: e.to_string() }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::LabelNotOnGrid { .. } => Self::calibration(e),
            _ => Self::input(e),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        Self::calibration(e)
    }
}

impl From<PosteriorError> for CliError {
    fn from(e: PosteriorError) -> Self {
        match e {
            PosteriorError::InconsistentMembers { .. } | PosteriorError::Empty => Self::input(e),
            _ => Self::calibration(e),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::AllCandidatesFailed(_) | ScoreError::DegenerateFolds => Self::calibration(e),
            _ => Self::input(e),
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    if !(g.lambda >= 0.0 && g.lambda.is_finite()) {
        return Err(CliError::input(format!("--lambda must be finite and non-negative, got {}", g.lambda)));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError { code: EXIT_IO, message: e.to_string() })?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { spec, out_dir } => simulate(spec.as_deref(), out_dir, g.seed),
        Command::Calibrate { validation, grid, out } => calibrate(validation, grid, out, g.config.as_deref()),
        Command::Infer { test, model, out } => infer(test, model, out),
        Command::Score { results, truth, grid, out } => score(results, truth, grid, out, g.lambda),
        Command::Tune { validation, grid, search, out_config, out_report } => {
            tune(validation, grid, search, out_config, out_report, g.lambda)
        }
        Command::D4 { map, out_dir } => d4(map, out_dir),
        Command::ScExtract { maps, out, scales, orientations, iso, keep_imaginary, pca } => {
            sc_extract(maps, out, *scales, *orientations, *iso, *keep_imaginary, *pca)
        }
    }
}

fn header(kind: &str) -> Vec<String> {
    vec![format!("{SCHEMA} {kind}")]
}

fn load_config(path: Option<&Path>) -> Result<CalibrationConfig, CliError> {
    let cfg = match path {
        Some(p) => formats::read_structured::<CalibrationConfig>(p)?,
        None => CalibrationConfig::default(),
    };
    cfg.validate().map_err(CliError::input)?;
    Ok(cfg)
}

fn simulate(spec: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<u8, CliError> {
    let mut spec = match spec {
        Some(p) => formats::read_structured::<SyntheticSpec>(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = spec.generate().map_err(CliError::input)?;
    let mut comments = header("synthetic");
    comments.push(format!("generator {GENERATOR} seed {}", spec.seed));
    formats::write_atomic(&out_dir.join("grid.csv"), &formats::grid_bytes(&data.grid, &comments))?;
    formats::write_atomic(
        &out_dir.join("validation.csv"),
        &formats::prediction_bytes(&data.validation, &comments),
    )?;
    formats::write_atomic(&out_dir.join("test.csv"), &formats::prediction_bytes(&data.test, &comments))?;
    formats::write_atomic(&out_dir.join("truth.csv"), &formats::truth_bytes(&data.truths, &comments))?;
    println!(
        "grid points {}  validation rows {}  test rows {}  seed {}",
        data.grid.len(),
        data.validation.len(),
        data.test.len(),
        spec.seed
    );
    Ok(EXIT_OK)
}

fn calibrate(validation: &Path, grid: &Path, out: &Path, config: Option<&Path>) -> Result<u8, CliError> {
    let cfg = load_config(config)?;
    let grid = formats::read_grid(grid)?;
    let raw = formats::read_predictions(validation)?;
    let val = bind_predictions(&grid, raw, PredictionKind::Validation)?;
    let model = calibrate_full(&val, &cfg)?;
    save_model(out, &model)?;

    let counts: Vec<usize> = group_by_cosmology(&val).values().map(Vec::len).collect();
    let min = counts.iter().min().copied().unwrap_or(0);
    let max = counts.iter().max().copied().unwrap_or(0);
    println!("tau {:?}", model.temperature);
    println!("grid points {}  samples per point min {min} max {max}", grid.len());
    if let Some(w) = model.provenance.get("warnings") {
        println!("warnings: {w}");
    }
    Ok(EXIT_OK)
}

fn infer(test: &Path, model_path: &Path, out: &Path) -> Result<u8, CliError> {
    let model = load_model(model_path)?;
    let raw = formats::read_predictions(test)?;
    let set = bind_predictions(&model.grid, raw, PredictionKind::Test)?;
    let batch = infer_batch(&set, &model)?;
    let comments = header("posterior");
    formats::write_atomic(out, &formats::result_bytes(&batch.results, &comments))?;
    formats::write_atomic(&ensemble_path(out), &formats::ensemble_bytes(&batch, &header("ensemble")))?;
    let flagged = batch.results.iter().filter(|r| r.underflow).count();
    println!("maps {}  members {}  underflow {flagged}", batch.results.len(), batch.members.len());
    if flagged > 0 {
        eprintln!("warning: {flagged} maps had every grid likelihood underflow; rows flagged and set to the prior");
        return Ok(EXIT_DEGRADED);
    }
    Ok(EXIT_OK)
}

/// `results.csv` → `results.ensemble.csv`.
pub fn ensemble_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    results.with_file_name(format!("{stem}.ensemble.csv"))
}

fn score(results: &Path, truth: &Path, grid: &Path, out: &Path, lambda: f64) -> Result<u8, CliError> {
    let grid = formats::read_grid(grid)?;
    let results = formats::read_results(results)?;
    let truths = formats::read_truths(truth)?;
    let result_ids: HashSet<&str> = results.iter().map(|r| r.map_id.as_str()).collect();
    let truth_ids: HashSet<&str> = truths.iter().map(|t| t.map_id.as_str()).collect();
    if result_ids.len() != results.len() || truth_ids.len() != truths.len() {
        return Err(CliError::input("duplicate map ids"));
    }
    if let Some(missing) = truth_ids.iter().filter(|id| !result_ids.contains(*id)).min() {
        return Err(CliError::input(format!("no result for map '{missing}'")));
    }
    let report = evaluate(&results, &truths, &grid, lambda)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    formats::write_atomic(out, text.as_bytes())?;
    println!(
        "mean score {:?}  mse {:?}  coverage {:?}  maps {}",
        report.mean_score, report.mse, report.coverage, report.n_maps
    );
    Ok(EXIT_OK)
}

fn tune(
    validation: &Path,
    grid: &Path,
    search: &Path,
    out_config: &Path,
    out_report: &Path,
    lambda: f64,
) -> Result<u8, CliError> {
    let space: SearchSpace = formats::read_structured(search)?;
    let grid = formats::read_grid(grid)?;
    let raw = formats::read_predictions(validation)?;
    let val = bind_predictions(&grid, raw, PredictionKind::Validation)?;
    let candidates = space.candidates();
    let outcome = tune_calibration(&val, &candidates, lambda)?;

    let cfg_text = toml::to_string(&outcome.best).map_err(|e| CliError { code: EXIT_IO, message: e.to_string() })?;
    formats::write_atomic(out_config, cfg_text.as_bytes())?;
    let mut report = BTreeMap::new();
    report.insert("best", serde_json::to_value(outcome.best).expect("serializes"));
    report.insert("best_score", serde_json::to_value(outcome.best_score).expect("serializes"));
    report.insert("report", serde_json::to_value(&outcome.report).expect("serializes"));
    report.insert("table", serde_json::to_value(&outcome.table).expect("serializes"));
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    formats::write_atomic(out_report, text.as_bytes())?;
    println!("candidates {}  best score {:?}", outcome.table.len(), outcome.best_score);
    Ok(EXIT_OK)
}

fn d4(map: &Path, out_dir: &Path) -> Result<u8, CliError> {
    let input = formats::read_map(map)?;
    let stem = map.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "map".into());
    for e in D4Element::ALL {
        let out = e.apply(&input);
        let path = out_dir.join(format!("{stem}.{}.csv", e.name()));
        formats::write_atomic(&path, &formats::map_bytes(&out, &[format!("transform {}", e.name())]))?;
    }
    Ok(EXIT_OK)
}

fn sc_extract(
    maps: &[PathBuf],
    out: &Path,
    scales: usize,
    orientations: usize,
    iso: bool,
    keep_imaginary: bool,
    pca: Option<usize>,
) -> Result<u8, CliError> {
    let fields: Vec<Map2D> = maps.iter().map(|p| formats::read_map(p)).collect::<Result<_, _>>()?;
    let mut banks: BTreeMap<(usize, usize), WaveletBank> = BTreeMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(fields.len());
    let mut names: Vec<String> = Vec::new();
    let mut family = String::new();
    for (field, path) in fields.iter().zip(maps) {
        let shape = field.shape();
        if let std::collections::btree_map::Entry::Vacant(slot) = banks.entry(shape) {
            let bank = build_bank(shape, scales, orientations)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            slot.insert(bank);
        }
        let sv: ScatteringVector = scattering_cov(field, &banks[&shape])
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        family = sv.family.to_string();
        let row = if iso { isotropic_reduce(&sv, keep_imaginary) } else { sv.flatten() };
        if names.is_empty() {
            names = if iso { (0..row.len()).map(|i| format!("iso_{i}")).collect() } else { sv.flat_names() };
        }
        rows.push(row);
    }

    let mut index_order = if iso { "isotropic" } else { "s1,s2,s3,s4 by (j,l)" }.to_string();
    if let Some(k) = pca {
        let d = names.len();
        let data = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);
        let (_, scores) = pca_fit_transform(&data, k).map_err(CliError::input)?;
        rows = scores.rows().into_iter().map(|r| r.to_vec()).collect();
        names = (0..k).map(|i| format!("pc_{i}")).collect();
        index_order = format!("{index_order}; pca k={k}");
    }

    let mut text = String::new();
    text.push_str(&format!("# {SCHEMA} scattering\n"));
    text.push_str(&format!(
        "# scales {scales} orientations {orientations} family {family} mask zero-fill-valid-mean order {index_order}\n"
    ));
    text.push_str("map");
    for n in &names {
        text.push(',');
        text.push_str(n);
    }
    text.push('\n');
    for (row, path) in rows.iter().zip(maps) {
        text.push_str(&path.display().to_string().replace(',', "_"));
        for v in row {
            text.push(',');
            text.push_str(&format!("{v:?}"));
        }
        text.push('\n');
    }
    formats::write_atomic(out, text.as_bytes())?;
    Ok(EXIT_OK)
}
