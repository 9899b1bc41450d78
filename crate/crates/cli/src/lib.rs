//! Command-line front end: simulation, estimation, verification and matrix
//! dumps. Every command is a pure function of its input files and flags.

pub mod config;
pub mod error;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use qmatrix::estimator::{
    estimate, split_estimate, verify, EstimatorMode, IdentifiabilityOptions, SearchOptions, DEFAULT_TIE_TOL,
};
use qmatrix::qmatrix::DEFAULT_BUDGET;
use qmatrix::simulator::{compute_alpha, profiles_to_text, simulate, ResponseData, SimConfig};
use qmatrix::tmatrix::{build_t, build_t_tilde, build_tc, build_tcg};
use qmatrix::{ComboOrder, DinaParams, QMatrix};

use config::{parse_combos, Groups, Mode, Numbers, PStar, Settings, VariantArg};
pub use error::{exit, CliError};
use report::{EstimateReport, SimulateMeta, VerifyJson, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "qmatrix", version, about = "Learn DINA Q-matrices from binary response data")]
pub struct Cli {
    /// JSON file with default settings; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate DINA responses.
    Simulate(SimulateArgs),
    /// Estimate the Q-matrix from a response file.
    Estimate(EstimateArgs),
    /// Run rank, D-matrix and identifiability checks for a Q-matrix.
    Verify(VerifyArgs),
    /// Dump a T-matrix as TSV.
    Tmatrix(TmatrixArgs),
    /// Dump the alpha-vector of a response file as TSV.
    Alpha(AlphaArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Q-matrix file.
    #[arg(long)]
    q: Option<PathBuf>,
    /// Profile distribution: `uniform`, a JSON file, or inline JSON keyed by profile label.
    #[arg(long)]
    pstar: Option<String>,
    /// Slipping complements c = 1 - s: one value or one per item (default 1).
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    /// Guessing probabilities: one value or one per item (default 0).
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Response file to write; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the drawn attribute profiles here.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Number of attributes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// Item groups for split estimation, 1-based: `1,2,3,4;3,4,5,6`.
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Report file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on the number of candidate matrices.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    tie_tol: Option<f64>,
    /// Recorded in the report.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock time in the report (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    q: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    #[arg(long)]
    pstar: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TmatrixArgs {
    #[arg(long)]
    q: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// `saturated`, `singles`, or combos such as `1;2;3;1,2`.
    #[arg(long)]
    combos: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    combos: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn flags(&self) -> Settings {
        let text = |v: &Option<String>| v.clone().map(Numbers::Text);
        match self {
            Command::Simulate(a) => Settings {
                q: a.q.clone(),
                pstar: a.pstar.clone().map(PStar::Text),
                c: text(&a.c),
                g: text(&a.g),
                n: a.n,
                seed: a.seed,
                out: a.out.clone(),
                profiles: a.profiles.clone(),
                ..Default::default()
            },
            Command::Estimate(a) => Settings {
                responses: a.responses.clone(),
                k: a.k,
                mode: a.mode,
                c: text(&a.c),
                g: text(&a.g),
                groups: a.groups.clone().map(Groups::Text),
                workers: a.workers,
                out: a.out.clone(),
                budget: a.budget,
                tie_tol: a.tie_tol,
                seed: a.seed,
                timing: a.timing.then_some(true),
                ..Default::default()
            },
            Command::Verify(a) => Settings {
                q: a.q.clone(),
                c: text(&a.c),
                g: text(&a.g),
                pstar: a.pstar.clone().map(PStar::Text),
                workers: a.workers,
                budget: a.budget,
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Tmatrix(a) => Settings {
                q: a.q.clone(),
                variant: a.variant,
                c: text(&a.c),
                g: text(&a.g),
                combos: a.combos.clone(),
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Alpha(a) => Settings {
                responses: a.responses.clone(),
                combos: a.combos.clone(),
                out: a.out.clone(),
                ..Default::default()
            },
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Writes to `out`, or returns the text for standard output.
fn emit(out: &Option<PathBuf>, contents: String) -> Result<Option<String>, CliError> {
    match out {
        Some(path) => write_file(path, &contents).map(|_| None),
        None => Ok(Some(contents)),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn load_q(settings: &Settings) -> Result<QMatrix, CliError> {
    let path = Settings::require(&settings.q, "q")?;
    read_file(path)?.parse().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_responses(settings: &Settings) -> Result<ResponseData, CliError> {
    let path = Settings::require(&settings.responses, "responses")?;
    read_file(path)?.parse().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// `c` and `g` with noiseless defaults.
fn params_or_noiseless(settings: &Settings, m: usize) -> Result<DinaParams, CliError> {
    let c = settings.c.as_ref().map(|c| c.resolve("c", m)).transpose()?.unwrap_or_else(|| vec![1.0; m]);
    let g = settings.g.as_ref().map(|g| g.resolve("g", m)).transpose()?.unwrap_or_else(|| vec![0.0; m]);
    Ok(DinaParams::new(c, g)?)
}

fn pstar(settings: &Settings, k: usize) -> Result<qmatrix::estimator::ProfileDistribution, CliError> {
    settings.pstar.clone().unwrap_or(PStar::Text("uniform".into())).resolve(k)
}

/// Result of a successful command: text for standard output, warnings for
/// standard error, and the exit status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: Option<String>,
    pub warnings: Vec<String>,
    pub status: i32,
}

fn cmd_simulate(s: &Settings) -> Result<Outcome, CliError> {
    let q = load_q(s)?;
    let n = *Settings::require(&s.n, "n")?;
    let seed = *Settings::require(&s.seed, "seed")?;
    let out = Settings::require(&s.out, "out")?;
    let params = params_or_noiseless(s, q.m())?;
    let p_star = pstar(s, q.k())?;
    let config = SimConfig { q: q.clone(), p_star: p_star.clone(), params: params.clone(), n, seed };
    let sim = simulate(&config)?;
    write_file(out, &sim.responses.to_text())?;
    if let Some(path) = &s.profiles {
        write_file(path, &profiles_to_text(&sim.profiles, q.k()))?;
    }
    let meta = SimulateMeta {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        version: report::version(),
        q: q.row_strings(),
        pstar: p_star.labelled(),
        c: params.c,
        g: params.g,
        n,
        seed,
        responses: out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        warnings: sim.warnings.clone(),
    };
    let mut meta_path = out.clone().into_os_string();
    meta_path.push(".meta.json");
    write_file(Path::new(&meta_path), &to_json(&meta))?;
    Ok(Outcome { stdout: None, warnings: sim.warnings, status: exit::OK })
}

fn estimator_mode(s: &Settings, m: usize) -> Result<EstimatorMode, CliError> {
    match s.mode.unwrap_or(Mode::Noiseless) {
        Mode::Noiseless => {
            if s.c.is_some() || s.g.is_some() {
                return Err(CliError::Validation("mode noiseless takes no --c or --g".into()));
            }
            Ok(EstimatorMode::Noiseless)
        }
        Mode::KnownCg => {
            let c = Settings::require(&s.c, "c")?.resolve("c", m)?;
            let g = Settings::require(&s.g, "g")?.resolve("g", m)?;
            let params = DinaParams::new(c, g)?;
            params.check_distinct()?;
            Ok(EstimatorMode::KnownCg(params))
        }
        Mode::KnownG => {
            if s.c.is_some() {
                return Err(CliError::Validation("mode known-g estimates c; do not pass --c".into()));
            }
            Ok(EstimatorMode::KnownG(Settings::require(&s.g, "g")?.resolve("g", m)?))
        }
    }
}

fn cmd_estimate(s: &Settings) -> Result<Outcome, CliError> {
    let responses = load_responses(s)?;
    let k = *Settings::require(&s.k, "k")?;
    let mode = estimator_mode(s, responses.m())?;
    let mode_name = s.mode.unwrap_or(Mode::Noiseless).name();
    let opts = SearchOptions {
        budget: s.budget.map_or(DEFAULT_BUDGET, u128::from),
        tie_tol: s.tie_tol.unwrap_or(DEFAULT_TIE_TOL),
        workers: s.workers,
        keep_table: false,
    };
    if opts.tie_tol.is_nan() || opts.tie_tol < 0.0 {
        return Err(CliError::Validation("--tie-tol must be nonnegative".into()));
    }
    let started = Instant::now();
    let (mut report, tied) = match &s.groups {
        Some(groups) => {
            let groups = groups.resolve()?;
            let result = split_estimate(&responses, k, &groups, &mode, &opts)?;
            (EstimateReport::from_split(mode_name, k, responses.n_subjects(), responses.m(), &result), result.has_ties())
        }
        None => {
            let alpha = compute_alpha(&responses, &ComboOrder::saturated(responses.m())?)?;
            let result = estimate(&alpha, k, &mode, &opts)?;
            (EstimateReport::from_full(mode_name, k, responses.n_subjects(), &result), result.has_ties())
        }
    };
    report.seed = s.seed;
    if s.timing == Some(true) {
        report.wall_time = Some(started.elapsed().as_secs_f64());
    }
    let warnings = if tied { vec!["several inequivalent Q-matrices attain the best score".to_string()] } else { vec![] };
    Ok(Outcome {
        stdout: emit(&s.out, to_json(&report))?,
        warnings,
        status: if tied { exit::FLAGGED } else { exit::OK },
    })
}

fn cmd_verify(s: &Settings) -> Result<Outcome, CliError> {
    let q = load_q(s)?;
    let params = params_or_noiseless(s, q.m())?;
    let p_star = pstar(s, q.k())?;
    let opts = IdentifiabilityOptions {
        budget: s.budget.map_or(DEFAULT_BUDGET, u128::from),
        workers: s.workers,
        ..Default::default()
    };
    let result = verify(&q, &params, &p_star, &opts)?;
    let json = VerifyJson::new(&q, params.c.clone(), params.g.clone(), &p_star, &result);
    Ok(Outcome {
        stdout: emit(&s.out, to_json(&json))?,
        warnings: result.warnings.clone(),
        status: if result.all_passed() { exit::OK } else { exit::FLAGGED },
    })
}

fn cmd_tmatrix(s: &Settings) -> Result<Outcome, CliError> {
    let q = load_q(s)?;
    let order = parse_combos(s.combos.as_deref().unwrap_or("saturated"), q.m())?;
    let variant = s.variant.unwrap_or(VariantArg::Plain);
    let need = |v: &Option<Numbers>, name: &str| -> Result<Vec<f64>, CliError> {
        v.as_ref()
            .ok_or_else(|| CliError::Validation(format!("variant {variant:?} needs --{name}").to_lowercase()))?
            .resolve(name, q.m())
    };
    let tsv = match variant {
        VariantArg::Plain => build_t::<f64>(&q, &order)?.to_tsv(),
        VariantArg::Slip => build_tc(&q, &need(&s.c, "c")?, &order)?.to_tsv(),
        VariantArg::SlipGuess => {
            build_tcg(&q, &DinaParams::new(need(&s.c, "c")?, need(&s.g, "g")?)?, &order)?.to_tsv()
        }
        VariantArg::Augmented => {
            build_t_tilde(&q, &DinaParams::new(need(&s.c, "c")?, need(&s.g, "g")?)?, &order)?.to_tsv()
        }
    };
    Ok(Outcome { stdout: emit(&s.out, tsv)?, ..Default::default() })
}

fn cmd_alpha(s: &Settings) -> Result<Outcome, CliError> {
    let responses = load_responses(s)?;
    let order = parse_combos(s.combos.as_deref().unwrap_or("saturated"), responses.m())?;
    let alpha = compute_alpha(&responses, &order)?;
    Ok(Outcome { stdout: emit(&s.out, alpha.to_tsv())?, ..Default::default() })
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let base = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let settings = base.overlay(cli.command.flags());
    if let Some(0) = settings.workers {
        return Err(CliError::Validation("--workers must be positive".into()));
    }
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&settings),
        Command::Estimate(_) => cmd_estimate(&settings),
        Command::Verify(_) => cmd_verify(&settings),
        Command::Tmatrix(_) => cmd_tmatrix(&settings),
        Command::Alpha(_) => cmd_alpha(&settings),
    }
}
