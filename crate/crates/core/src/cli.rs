//! Command-line front end: config loading, the four subcommands and output
//! emission.
//!
//! Exit codes: 0 ok, 1 config or usage error, 2 no convergence (including a
//! limit cycle that fails to close), 3 degenerate fixed point, 4 rank
//! deficient state, 5 any other numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::chain::{build_hamiltonian, ChainSpec, HamiltonianParts};
use crate::engine::{simulate, Cycle, CycleParams, CycleRecord};
use crate::error::Error;
use crate::limitcycle::{
    channel_matrix, fixed_point_iterate, fixed_point_spectral, limit_cycle_states, make_phi_ac,
    make_phi_cb, Channel, FixedPointResult, DEFAULT_MAX_ITER, DEFAULT_TOL, DEGENERACY_THRESHOLD,
};
use crate::linalg::{max_abs, partial_trace, trace_distance, ComplexMatrix, DensityMatrix};
use crate::random::random_density_matrix;
use crate::report::{Document, Table, Value};
use crate::reversal::{
    choi_input_marginal, choi_matrix, detailed_balance_violation, kraus_from_choi, reverse_channel,
    superoperator_distance, DEFAULT_RANK_TOL,
};
use crate::thermo::{limit_cycle_report, LimitCycleReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_RANK_DEFICIENT: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

/// Largest chain for which superoperator matrices (`4^{n-1}` square) are
/// built: spectral solver, Choi matrix, reversal and spectrum.
pub const MAX_SUPEROPERATOR_QUBITS: usize = 6;

/// Two-step index pairs sampled for the detailed-balance check.
pub const DETAILED_BALANCE_PAIRS: usize = 50;

pub const SIMULATE_COLUMNS: [&str; 13] = [
    "cycle",
    "delta_prev",
    "q_c",
    "q_h",
    "w1",
    "w2",
    "w3",
    "w4",
    "w_total",
    "w_ledger",
    "first_law_residual_paper",
    "first_law_residual_ledger",
    "energy_change",
];

#[derive(Debug, Parser)]
#[command(
    name = "qcycle",
    version,
    about = "Four-stroke spin-chain quantum engine toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the cycle from a random or supplied state and write a per-cycle trace.
    Simulate(CommonArgs),
    /// Solve the limit cycle and write its thermodynamic report.
    Report(CommonArgs),
    /// Build the time-reversed cycle channel and write its diagnostics.
    Reverse(CommonArgs),
    /// Write the spectra of both cycle superoperators.
    Spectrum(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output path; overrides `output.path`. Standard output when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Treat the config file as an array of configs and run them in parallel.
    #[arg(long)]
    sweep: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Iterate,
    Spectral,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            method: Method::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: Format,
    pub path: Option<PathBuf>,
}

/// Full-chain starting state as real and imaginary parts, row by row.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chain: ChainSpec,
    pub cycle: CycleParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. }
        | Error::NegativeBeta(_)
        | Error::CriteriaViolated { .. }
        | Error::SiteOutOfRange { .. } => EXIT_CONFIG,
        Error::NoConvergence(_) | Error::ClosureViolation { .. } | Error::NotFixedPoint { .. } => {
            EXIT_NO_CONVERGENCE
        }
        Error::DegenerateFixedPoint { .. } => EXIT_DEGENERATE,
        Error::RankDeficient { .. } => EXIT_RANK_DEFICIENT,
        _ => EXIT_NUMERICAL,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::DegenerateFixedPoint { near_unit, .. } => {
                let listed: Vec<String> = near_unit
                    .iter()
                    .map(|z| format!("{:.12}{:+.12}i", z.re, z.im))
                    .collect();
                format!("{e}; near-unit eigenvalues: [{}]", listed.join(", "))
            }
            _ => e.to_string(),
        };
        CliError {
            code: exit_code(&e),
            message,
        }
    }
}

fn prefixed(prefix: &str, e: Error) -> CliError {
    match e {
        Error::InvalidParameter { field, message } => {
            CliError::config(format!("{prefix}{field}: {message}"))
        }
        other => CliError::config(format!("{}: {other}", prefix.trim_end_matches('.'))),
    }
}

impl RunConfig {
    /// Re-checks every invariant; messages start with the field path.
    pub fn validate(&mut self) -> Result<(), CliError> {
        self.validate_at("")
    }

    fn validate_at(&mut self, root: &str) -> Result<(), CliError> {
        self.chain.fill_default_bonds();
        self.chain
            .validate()
            .map_err(|e| prefixed(&format!("{root}chain."), e))?;
        self.cycle
            .validate()
            .map_err(|e| prefixed(&format!("{root}cycle."), e))?;
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(CliError::config(format!(
                "{root}solver.tol: must be finite and > 0, got {}",
                self.solver.tol
            )));
        }
        if self.solver.max_iter == 0 {
            return Err(CliError::config(format!(
                "{root}solver.max_iter: must be >= 1"
            )));
        }
        if self.initial_state.is_some() {
            self.initial_density()
                .map_err(|e| CliError::config(format!("{root}initial_state: {}", e.message)))?;
        }
        Ok(())
    }

    /// The supplied full-chain initial state, if any.
    pub fn initial_density(&self) -> Result<Option<DensityMatrix>, CliError> {
        let Some(init) = &self.initial_state else {
            return Ok(None);
        };
        let d = self.chain.dim();
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if !shape_ok(&init.re) || init.im.as_ref().is_some_and(|im| !shape_ok(im)) {
            return Err(CliError::config(format!("expected {d}x{d} matrices")));
        }
        let m = ComplexMatrix::from_fn(d, d, |i, j| {
            let im = init.im.as_ref().map_or(0.0, |im| im[i][j]);
            num_complex::Complex64::new(init.re[i][j], im)
        });
        DensityMatrix::new(m, vec![2; self.chain.n])
            .map(Some)
            .map_err(|e| CliError::config(e.to_string()))
    }

    fn needs_superoperator(&self, what: &str) -> Result<(), CliError> {
        if self.chain.n > MAX_SUPEROPERATOR_QUBITS {
            return Err(CliError::config(format!(
                "chain.n: {what} builds superoperator matrices and supports n <= {MAX_SUPEROPERATOR_QUBITS}, got {}",
                self.chain.n
            )));
        }
        Ok(())
    }
}

fn deserialize_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> CliError {
    let path = e.path().to_string();
    if path == "." {
        CliError::config(format!("config: {}", e.inner()))
    } else {
        CliError::config(format!("{path}: {}", e.inner()))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(deserialize_error)?;
    cfg.validate()?;
    Ok(cfg)
}

/// A JSON array of configs; error paths start with the array index.
pub fn parse_sweep(text: &str) -> Result<Vec<RunConfig>, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfgs: Vec<RunConfig> =
        serde_path_to_error::deserialize(de).map_err(deserialize_error)?;
    for (i, cfg) in cfgs.iter_mut().enumerate() {
        cfg.validate_at(&format!("[{i}]."))?;
    }
    Ok(cfgs)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    parse_config(&read_text(path)?)
}

fn random_state(cfg: &RunConfig, factor_dims: &[usize]) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    random_density_matrix(factor_dims, &mut rng)
}

/// Starting point for the `CB` fixed-point iteration: `Tr_A` of the supplied
/// state, or a seeded random state.
fn cb_start(cfg: &RunConfig) -> Result<DensityMatrix, CliError> {
    let rest: Vec<usize> = (1..cfg.chain.n).collect();
    match cfg.initial_density()? {
        Some(full) => Ok(partial_trace(&full, &rest)?),
        None => Ok(random_state(cfg, &vec![2; cfg.chain.n - 1])),
    }
}

/// Result of a `simulate` run: the trace is written even when the run fails
/// to converge.
pub struct SimulateOutcome {
    pub trace: Table,
    pub converged: bool,
    pub cycles: usize,
}

fn record_row(index: usize, r: &CycleRecord) -> Vec<Value> {
    vec![
        Value::from(index),
        Value::from(r.delta_prev),
        Value::from(r.q_c),
        Value::from(r.q_h),
        Value::from(r.w1),
        Value::from(r.w2),
        Value::from(r.w3),
        Value::from(r.w4),
        Value::from(r.w_total),
        Value::from(r.w_ledger),
        Value::from(r.first_law_residual_paper),
        Value::from(r.first_law_residual_ledger),
        Value::from(r.energy_change),
    ]
}

pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateOutcome, CliError> {
    let parts = build_hamiltonian(&cfg.chain)?;
    let cycle = Cycle::new(&parts, &cfg.cycle)?;
    let start = match cfg.initial_density()? {
        Some(rho) => rho,
        None => random_state(cfg, &parts.factor_dims()),
    };
    let (records, converged) = simulate(&cycle, &start, cfg.solver.tol, cfg.solver.max_iter)?;
    let mut trace = Table::new(&SIMULATE_COLUMNS);
    for (i, r) in records.iter().enumerate() {
        trace.push_row(record_row(i, r));
    }
    Ok(SimulateOutcome {
        trace,
        converged,
        cycles: records.len(),
    })
}

/// Fixed point of `Φ_CB` by the configured method.
pub struct SolvedCycle {
    pub parts: HamiltonianParts,
    pub channel: Channel,
    pub fixed_point: FixedPointResult,
}

fn iterate_from(
    cfg: &RunConfig,
    ch: &Channel,
    start: &DensityMatrix,
) -> Result<FixedPointResult, CliError> {
    Ok(fixed_point_iterate(
        ch,
        start,
        cfg.solver.tol,
        cfg.solver.max_iter,
    )?)
}

pub fn solve_cycle(cfg: &RunConfig) -> Result<SolvedCycle, CliError> {
    let parts = build_hamiltonian(&cfg.chain)?;
    let channel = make_phi_cb(&parts, &cfg.cycle)?;
    let small = cfg.chain.n <= MAX_SUPEROPERATOR_QUBITS;
    if cfg.solver.method == Method::Spectral {
        cfg.needs_superoperator("the spectral solver")?;
    }
    // The spectrum is the only reliable degeneracy test, so every method
    // computes it when the superoperator fits in memory.
    let spectral = if small {
        Some(fixed_point_spectral(
            &channel_matrix(&channel),
            DEGENERACY_THRESHOLD,
        )?)
    } else {
        None
    };
    let fixed_point = match (cfg.solver.method, spectral) {
        (Method::Spectral, Some(s)) => s,
        (Method::Iterate, Some(s)) => {
            let mut it = iterate_from(cfg, &channel, &cb_start(cfg)?)?;
            it.spectral_gap = s.spectral_gap;
            it.eigenvalues = s.eigenvalues;
            it
        }
        (Method::Both, Some(s)) => {
            let it = iterate_from(cfg, &channel, &cb_start(cfg)?)?;
            let gap = trace_distance(&it.rho_star, &s.rho_star)?;
            if gap > (10.0 * cfg.solver.tol).max(1e-9) && s.spectral_gap.is_some_and(|g| g > 1e-6) {
                eprintln!("warning: iterative and spectral fixed points differ by {gap:.3e}");
            }
            s
        }
        (_, None) => {
            // Two independent starts must land on the same state.
            let first = iterate_from(cfg, &channel, &cb_start(cfg)?)?;
            let mixed = DensityMatrix::maximally_mixed(vec![2; cfg.chain.n - 1]);
            let second = iterate_from(cfg, &channel, &mixed)?;
            if trace_distance(&first.rho_star, &second.rho_star)? > 100.0 * cfg.solver.tol {
                return Err(Error::DegenerateFixedPoint {
                    near_unit: Vec::new(),
                    candidate: Box::new(first),
                }
                .into());
            }
            first
        }
    };
    Ok(SolvedCycle {
        parts,
        channel,
        fixed_point,
    })
}

pub fn report_document(r: &LimitCycleReport) -> Document {
    let mut doc = Document::new();
    doc.push("q_c_star", r.q_c_star)
        .push("q_h_star", r.q_h_star)
        .push("w_star_paper", r.w_star_paper)
        .push("w_star_ledger", r.w_star_ledger)
        .push("eta", r.eta)
        .push("eta_predicted", r.eta_predicted)
        .push("carnot_eta", r.carnot_eta)
        .push("eq18_residual", r.eq18_residual)
        .push("first_law_residual", r.first_law_residual)
        .push("ansatz_distance", r.ansatz_distance)
        .push("spectral_gap", r.spectral_gap);
    doc
}

pub fn run_report(cfg: &RunConfig) -> Result<Document, CliError> {
    let solved = solve_cycle(cfg)?;
    let state = limit_cycle_states(
        &solved.fixed_point.rho_star,
        &solved.parts,
        &cfg.cycle,
        cfg.solver.tol,
    )?;
    let report = match limit_cycle_report(
        &state,
        &solved.parts,
        &cfg.chain,
        &cfg.cycle,
        solved.fixed_point.spectral_gap,
    ) {
        Ok(r) => r,
        Err(Error::ZeroHeat(r)) => {
            eprintln!("note: hot-bath heat vanishes; eta is undefined");
            *r
        }
        Err(e) => return Err(e.into()),
    };
    Ok(report_document(&report))
}

pub fn run_reverse(cfg: &RunConfig) -> Result<Document, CliError> {
    cfg.needs_superoperator("reverse")?;
    let solved = solve_cycle(cfg)?;
    let ch = &solved.channel;
    let d = ch.dim();
    let choi = choi_matrix(ch)?;
    let kraus = kraus_from_choi(&choi, DEFAULT_RANK_TOL)?;
    let choi_marginal_residual =
        max_abs(&(choi_input_marginal(&choi, d) - crate::linalg::identity(d)));
    let reconstruction_residual =
        superoperator_distance(&kraus.superoperator(), &channel_matrix(ch));
    let reversed = reverse_channel(
        &kraus,
        &solved.fixed_point.rho_star,
        DEFAULT_RANK_TOL,
        cfg.solver.tol,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..DETAILED_BALANCE_PAIRS {
        let pair = (
            rng.random_range(0..kraus.len()),
            rng.random_range(0..kraus.len()),
        );
        worst = worst.max(detailed_balance_violation(&kraus, &reversed, pair)?);
    }

    let mut doc = Document::new();
    doc.push("kraus_count", kraus.len())
        .push("discarded_weight", kraus.discarded_weight)
        .push("choi_marginal_residual", choi_marginal_residual)
        .push("completeness_residual", kraus.completeness_residual())
        .push("reconstruction_residual", reconstruction_residual)
        .push(
            "reversed_completeness_residual",
            reversed.trace_preservation_residual,
        )
        .push(
            "reversed_fixed_point_distance",
            reversed.fixed_point_distance()?,
        )
        .push(
            "forward_fixed_point_residual",
            reversed.forward_fixed_point_residual,
        )
        .push("route_agreement", reversed.route_agreement)
        .push("detailed_balance_pairs", DETAILED_BALANCE_PAIRS)
        .push("max_detailed_balance_violation", worst)
        .push("spectral_gap", solved.fixed_point.spectral_gap);
    Ok(doc)
}

pub fn run_spectrum(cfg: &RunConfig) -> Result<Document, CliError> {
    cfg.needs_superoperator("spectrum")?;
    let parts = build_hamiltonian(&cfg.chain)?;
    let mut doc = Document::new();
    for (name, ch) in [
        ("phi_cb", make_phi_cb(&parts, &cfg.cycle)?),
        ("phi_ac", make_phi_ac(&parts, &cfg.cycle)?),
    ] {
        let ev = channel_matrix(&ch).eigenvalues()?;
        let near_unit = ev
            .iter()
            .filter(|z| (z.norm() - 1.0).abs() <= DEGENERACY_THRESHOLD)
            .count();
        let gap = 1.0 - ev.get(1).map_or(0.0, |z| z.norm());
        doc.push(&format!("{name}_spectral_gap"), gap)
            .push(&format!("{name}_near_unit_count"), near_unit)
            .push(&format!("{name}_eigenvalues"), Value::Complexes(ev));
    }
    Ok(doc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Which {
    Simulate,
    Report,
    Reverse,
    Spectrum,
}

fn run_document(which: Which, cfg: &RunConfig) -> Result<Document, CliError> {
    match which {
        Which::Report => run_report(cfg),
        Which::Reverse => run_reverse(cfg),
        Which::Spectrum => run_spectrum(cfg),
        Which::Simulate => unreachable!("simulate emits a table"),
    }
}

fn render_document(doc: &Document, format: Format) -> String {
    match format {
        Format::Json => doc.to_json(),
        Format::Csv => doc.to_csv(),
    }
}

fn render_table(table: &Table, format: Format) -> String {
    match format {
        Format::Json => table.to_json(),
        Format::Csv => table.to_csv(),
    }
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError {
            code: EXIT_CONFIG,
            message: format!("{}: {e}", p.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sweep_threads() -> Result<Option<usize>, CliError> {
    match std::env::var("QCYCLE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| {
                CliError::config(format!(
                    "QCYCLE_THREADS: expected a positive integer, got {v:?}"
                ))
            }),
        Err(_) => Ok(None),
    }
}

/// Runs every config, merging results in config order. Returns the merged
/// table and the exit code of the first failing entry.
fn run_sweep(which: Which, cfgs: &[RunConfig]) -> Result<(Table, i32), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = sweep_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Document, CliError>> = pool.install(|| {
        cfgs.par_iter()
            .map(|cfg| run_document(which, cfg))
            .collect()
    });

    let keys: Vec<String> = results
        .iter()
        .find_map(|r| r.as_ref().ok())
        .map(|d| d.keys().map(str::to_string).collect())
        .unwrap_or_default();
    let mut header = vec!["index", "status", "message"];
    header.extend(keys.iter().map(String::as_str));
    let mut table = Table::new(&header);
    let mut code = EXIT_OK;
    for (i, r) in results.iter().enumerate() {
        let mut row = vec![Value::from(i)];
        match r {
            Ok(doc) => {
                row.push(Value::Int(EXIT_OK as i64));
                row.push(Value::Null);
                row.extend(
                    keys.iter()
                        .map(|k| doc.get(k).cloned().unwrap_or(Value::Null)),
                );
            }
            Err(e) => {
                if code == EXIT_OK {
                    code = e.code;
                }
                eprintln!("[{i}] {}", e.message);
                row.push(Value::Int(e.code as i64));
                row.push(Value::from(e.message.as_str()));
                row.extend(keys.iter().map(|_| Value::Null));
            }
        }
        table.push_row(row);
    }
    Ok((table, code))
}

fn execute(which: Which, args: &CommonArgs) -> Result<i32, CliError> {
    let text = read_text(&args.config)?;
    if args.sweep {
        if which == Which::Simulate {
            return Err(CliError::config("--sweep is not supported by simulate"));
        }
        let mut cfgs = parse_sweep(&text)?;
        if cfgs.is_empty() {
            return Err(CliError::config("config: sweep array is empty"));
        }
        if let Some(seed) = args.seed {
            cfgs.iter_mut().for_each(|c| c.seed = seed);
        }
        let (table, code) = run_sweep(which, &cfgs)?;
        let first = &cfgs[0].output;
        let path = args.out.as_deref().or(first.path.as_deref());
        emit(&render_table(&table, first.format), path)?;
        return Ok(code);
    }

    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let path = args.out.clone().or_else(|| cfg.output.path.clone());
    match which {
        Which::Simulate => {
            let outcome = run_simulate(&cfg)?;
            emit(
                &render_table(&outcome.trace, cfg.output.format),
                path.as_deref(),
            )?;
            if outcome.converged {
                Ok(EXIT_OK)
            } else {
                Err(CliError {
                    code: EXIT_NO_CONVERGENCE,
                    message: format!("no convergence after {} cycles", outcome.cycles),
                })
            }
        }
        _ => {
            let doc = run_document(which, &cfg)?;
            emit(&render_document(&doc, cfg.output.format), path.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (which, args) = match &cli.command {
        Command::Simulate(a) => (Which::Simulate, a),
        Command::Report(a) => (Which::Report, a),
        Command::Reverse(a) => (Which::Reverse, a),
        Command::Spectrum(a) => (Which::Spectrum, a),
    };
    match execute(which, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "chain": {"n": 3, "E": [1.0, 0.8, 1.6], "J": [0.9, 0.7], "K": [0.3, -0.2], "F": [0.25, 0.4]},
        "cycle": {"beta1": 1.8, "beta2": 0.6, "tau1": 0.8, "tau2": 1.3},
        "seed": 7
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = parse_config(BASE).unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.output.format, Format::Json);
        let cfg =
            parse_config(&BASE.replace(r#", "K": [0.3, -0.2], "F": [0.25, 0.4]"#, "")).unwrap();
        assert_eq!(cfg.chain.k, vec![0.0, 0.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_config(&BASE.replace("[0.9, 0.7]", "[0.9, 0.7, 0.1]")).unwrap_err();
        assert_eq!(e.code, EXIT_CONFIG);
        assert!(e.message.starts_with("chain.J"), "{}", e.message);

        let e = parse_config(&BASE.replace("\"beta2\": 0.6", "\"beta2\": -0.6")).unwrap_err();
        assert!(e.message.starts_with("cycle.beta2"), "{}", e.message);

        let e = parse_config(&BASE.replace("[0.9, 0.7]", "[0.9, \"x\"]")).unwrap_err();
        assert!(e.message.starts_with("chain.J"), "{}", e.message);

        let e =
            parse_config(&BASE.replace("\"seed\": 7", "\"seed\": 7, \"extra\": 1")).unwrap_err();
        assert!(e.message.contains("extra"), "{}", e.message);

        let e = parse_config(&BASE.replace("\"seed\": 7", "\"seed\": 7, \"solver\": {\"tol\": 0}"))
            .unwrap_err();
        assert!(e.message.starts_with("solver.tol"), "{}", e.message);

        let sweep = format!(
            "[{BASE}, {}]",
            BASE.replace("\"tau1\": 0.8", "\"tau1\": -1")
        );
        let e = parse_sweep(&sweep).unwrap_err();
        assert!(e.message.starts_with("[1].cycle.tau1"), "{}", e.message);
    }

    #[test]
    fn initial_state_is_checked() {
        let mut diag = vec![vec![0.0; 8]; 8];
        for (i, row) in diag.iter_mut().enumerate() {
            row[i] = 0.125;
        }
        let with = |re: &Vec<Vec<f64>>| {
            BASE.replace(
                "\"seed\": 7",
                &format!(
                    "\"seed\": 7, \"initial_state\": {{\"re\": {}}}",
                    serde_json::to_string(re).unwrap()
                ),
            )
        };
        let cfg = parse_config(&with(&diag)).unwrap();
        assert!(cfg.initial_density().unwrap().is_some());
        diag[0][0] = 0.5;
        let e = parse_config(&with(&diag)).unwrap_err();
        assert!(e.message.starts_with("initial_state"), "{}", e.message);
    }

    #[test]
    fn error_families_map_to_distinct_codes() {
        let codes = [
            exit_code(&Error::InvalidParameter {
                field: "x".into(),
                message: String::new(),
            }),
            exit_code(&Error::ClosureViolation {
                distance: 1.0,
                allowed: 0.0,
            }),
            exit_code(&Error::RankDeficient { rank: 1, dim: 2 }),
            exit_code(&Error::ReversalMismatch(1.0)),
        ];
        assert_eq!(
            codes,
            [
                EXIT_CONFIG,
                EXIT_NO_CONVERGENCE,
                EXIT_RANK_DEFICIENT,
                EXIT_NUMERICAL
            ]
        );
    }

    #[test]
    fn report_and_reverse_documents() {
        let cfg = parse_config(BASE).unwrap();
        let doc = run_report(&cfg).unwrap();
        let keys: Vec<&str> = doc.keys().collect();
        assert_eq!(keys[0], "q_c_star");
        assert_eq!(keys.len(), 11);
        match doc.get("eq18_residual") {
            Some(Value::Float(x)) => assert!(*x < 1e-8),
            other => panic!("{other:?}"),
        }
        let doc = run_reverse(&cfg).unwrap();
        match doc.get("reversed_fixed_point_distance") {
            Some(Value::Float(x)) => assert!(*x < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let cfg = parse_config(BASE).unwrap();
        let a = run_simulate(&cfg).unwrap();
        let b = run_simulate(&cfg).unwrap();
        assert!(a.converged);
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert!(a.trace.to_csv().starts_with(&SIMULATE_COLUMNS.join(",")));
    }
}
