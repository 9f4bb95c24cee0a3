//! Config-driven experiment runs backing the `qviterbi` binary.
//!
//! Every command takes an [`ExperimentConfig`] and returns an [`Outcome`]
//! holding a CSV results table and a self-describing [`ExperimentRecord`].
//! Identical configs produce byte-identical CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::circuit::{
    chain_g_phi, code_gate_counts, embed_path_state, max_abs_diff, printed_v00_circuit, u_psi, v00_circuit, v_block,
    MATRIX_TOL,
};
use crate::code::{bits_label, pack_bits, parse_bits, unpack_bits, BscChannel, ConvCode, EncoderState};
use crate::error::{Error, Result};
use crate::numfmt::fmt_g12;
use crate::probabilistic::{amplitude_loaded_state, block_rng, required_trials, run_trials, DEFAULT_E0};
use crate::qva::{
    adaptive_decode_space, amplify, error_class_schedule, grover_iterations, mode_of, run_qva, sample_indices,
    single_iteration_prob, sweep_omega, ErrorClass, PathSpace, PathStatevector, QvaParams,
};
use crate::reference::reference_table;
use crate::viterbi::{brute_force_decode, path_metric_multiset, viterbi_decode, CodeTrellis};

pub const DEFAULT_CODE: &str = "1,2,2;5,7";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Path-count range accepted by the table command.
pub const TABLE_STEPS: (usize, usize) = (3, 12);

const DEFAULT_QVA_TRIALS: u64 = 7;

/// Which experiment (or which decoder, for `decode`) a config describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Classical,
    IteratedQva,
    /// Iterated QVA over a schedule of error classes, each with its own phase.
    AdaptiveQva,
    ProbabilisticQva,
    TableReproduction,
    OmegaSweep,
    CircuitVerify,
    Circuit,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Classical,
        Mode::IteratedQva,
        Mode::AdaptiveQva,
        Mode::ProbabilisticQva,
        Mode::TableReproduction,
        Mode::OmegaSweep,
        Mode::CircuitVerify,
        Mode::Circuit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::IteratedQva => "iterated-qva",
            Mode::AdaptiveQva => "adaptive-qva",
            Mode::ProbabilisticQva => "probabilistic-qva",
            Mode::TableReproduction => "table-reproduction",
            Mode::OmegaSweep => "omega-sweep",
            Mode::CircuitVerify => "circuit-verify",
            Mode::Circuit => "circuit",
        }
    }

    pub fn is_decoder(self) -> bool {
        matches!(self, Mode::Classical | Mode::IteratedQva | Mode::AdaptiveQva | Mode::ProbabilisticQva)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// Deliberate defects for exercising the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Diffusion computes `-(2/L) sum - a_i` instead of `(2/L) sum - a_i`.
    DiffusionSign,
    /// Path-level marking uses `e^{-i omega e}`.
    PhaseConjugate,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion-sign" => Ok(Fault::DiffusionSign),
            "phase-conjugate" => Ok(Fault::PhaseConjugate),
            _ => Err(Error::Config(format!("unknown fault {s:?}"))),
        }
    }
}

/// Inclusive range of trellis depths, written `N` or `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StepRange {
    pub start: usize,
    pub end: usize,
}

impl StepRange {
    pub fn single(n: usize) -> Self {
        StepRange { start: n, end: n }
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    /// The depth of a single-valued range.
    pub fn only(&self) -> Result<usize> {
        if self.start != self.end {
            return Err(Error::Config(format!("expected a single N, got {self}")));
        }
        Ok(self.start)
    }
}

impl fmt::Display for StepRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.end {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}..{}", self.start, self.end)
        }
    }
}

impl FromStr for StepRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad step count {s:?}")));
        match s.split_once("..") {
            Some((a, b)) => Ok(StepRange { start: num(a)?, end: num(b.trim_start_matches('='))? }),
            None => Ok(StepRange::single(num(s)?)),
        }
    }
}

impl TryFrom<String> for StepRange {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StepRange> for String {
    fn from(r: StepRange) -> String {
        r.to_string()
    }
}

/// One run's settings. Unset optional parameters are resolved per mode and
/// the resolved values are echoed in the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Code in `k,n,m;g1,g2,...` form with octal generators.
    pub code: String,
    pub n_steps: StepRange,
    /// Binary symmetric channel crossover probability.
    pub epsilon: f64,
    pub mode: Mode,
    pub omega: Option<f64>,
    pub iterations: Option<usize>,
    /// Shots per block (QVA modes) or `r` (probabilistic mode).
    pub trials: Option<u64>,
    /// Campaign size for `decode`.
    pub blocks: u64,
    pub seed: u64,
    /// Omega grid step for sweeps.
    pub grid: f64,
    /// Received word for `sweep` or block for `circuit`, as a bit string.
    pub received: Option<String>,
    /// Per-step no-error probability for the trial-count formula.
    pub e0: f64,
    pub target_failure: f64,
    /// Largest error class in the adaptive schedule.
    pub max_errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<Fault>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            code: DEFAULT_CODE.into(),
            n_steps: StepRange::single(4),
            epsilon: 0.0,
            mode: Mode::default(),
            omega: None,
            iterations: None,
            trials: None,
            blocks: 100,
            seed: 0,
            grid: crate::qva::DEFAULT_GRID,
            received: None,
            e0: DEFAULT_E0,
            target_failure: (-2.0f64).exp(),
            max_errors: 2,
            inject_fault: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config document, or the `config` member of a saved record.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let doc = match value.get("config") {
            Some(inner) if value.get("results_csv").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn parsed_code(&self) -> Result<ConvCode> {
        ConvCode::parse(&self.code).map_err(|e| Error::Config(format!("code {:?}: {e}", self.code)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.parsed_code()?;
        if !(0.0..0.5).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 0.5)", self.epsilon));
        }
        if let Some(w) = self.omega {
            if !(0.0..=std::f64::consts::PI).contains(&w) {
                return bad(format!("omega {w} outside [0, pi]"));
            }
        }
        if self.iterations == Some(0) {
            return bad("iterations must be at least 1".into());
        }
        if self.trials == Some(0) {
            return bad("trials must be at least 1".into());
        }
        if !(self.grid > 0.0 && self.grid < 1.0) {
            return bad(format!("grid step {} outside (0, 1)", self.grid));
        }
        if !(self.e0 > 0.0 && self.e0 < 1.0) {
            return bad(format!("e0 {} outside (0, 1)", self.e0));
        }
        if !(self.target_failure > 0.0 && self.target_failure <= 1.0) {
            return bad(format!("target failure {} outside (0, 1]", self.target_failure));
        }
        if let Some(rx) = &self.received {
            parse_bits(rx).map_err(|e| Error::Config(format!("received word: {e}")))?;
        }
        Ok(())
    }

    fn received_bits(&self) -> Result<Option<Vec<u8>>> {
        self.received.as_deref().map(parse_bits).transpose()
    }
}

/// Self-describing result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved config; running it again reproduces `results_csv`.
    pub config: ExperimentConfig,
    pub summary: serde_json::Value,
    /// Per-block generator seeds: block `i` draws from stream `i` of `config.seed`
    /// and passes the listed seed to its channel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_seeds: Vec<u64>,
    pub elapsed_ms: f64,
    pub results_csv: String,
}

/// CSV, record and a short human-readable report.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub record: ExperimentRecord,
    pub report: String,
    /// False when a verification check failed.
    pub passed: bool,
}

impl Outcome {
    /// Writes the CSV to `path` and the record beside it as `<stem>.record.json`,
    /// creating missing parent directories.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, &self.csv)?;
        let record_path = record_path(path);
        std::fs::write(&record_path, serde_json::to_string_pretty(&self.record)? + "\n")?;
        Ok(record_path)
    }
}

pub fn record_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.record.json"))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    command: &str,
    config: ExperimentConfig,
    csv: String,
    summary: serde_json::Value,
    block_seeds: Vec<u64>,
    started: Instant,
    report: String,
    passed: bool,
) -> Outcome {
    let record = ExperimentRecord {
        tool: "qviterbi".into(),
        version: VERSION.into(),
        command: command.into(),
        config,
        summary,
        block_seeds,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        results_csv: csv.clone(),
    };
    Outcome { csv, record, report, passed }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g12).unwrap_or_default()
}

fn paper_reference(code: &ConvCode, n: usize) -> Option<crate::reference::ReferenceRow> {
    let table = reference_table();
    let ref_code = ConvCode::parse(&table.code).ok()?;
    (ref_code == *code).then(|| table.row(n).copied()).flatten()
}

fn zero_space(code: &ConvCode, n: usize) -> Result<PathSpace> {
    PathSpace::from_code(code, &vec![0; n * code.n()], EncoderState(0))
}

/// Iterations and phase unit for the iterated QVA at depth `n`: explicit
/// values first, then the published table for its code, then the Grover
/// count with a sweep on the zero-error word.
fn resolve_qva_params(cfg: &ExperimentConfig, code: &ConvCode, n: usize) -> Result<QvaParams> {
    let reference = paper_reference(code, n);
    let iterations = match (cfg.iterations, reference) {
        (Some(i), _) => i,
        (None, Some(r)) => r.iterations,
        (None, None) => grover_iterations(zero_space(code, n)?.len()),
    };
    let omega = match (cfg.omega, reference) {
        (Some(w), _) => w,
        (None, Some(r)) if r.iterations == iterations => r.omega,
        _ => sweep_omega(&zero_space(code, n)?, iterations, cfg.grid)?.omega_star,
    };
    QvaParams::new(omega, iterations)
}

/// One row per depth: the sweep at the published iteration count (or the
/// Grover count when none is published), the published values, the
/// probability at the published phase, and the sweep at the Grover count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub n: usize,
    pub iterations: usize,
    pub omega_star: f64,
    pub prob: f64,
    pub reference_omega: Option<f64>,
    pub reference_prob: Option<f64>,
    pub prob_at_reference_omega: Option<f64>,
    pub formula_iterations: usize,
    pub formula_omega_star: f64,
    pub formula_prob: f64,
}

pub const TABLE_HEADER: &str = "n,iterations,omega_star,prob,reference_omega,reference_prob,prob_at_reference_omega,formula_iterations,formula_omega_star,formula_prob";

pub fn table_rows(cfg: &ExperimentConfig) -> Result<Vec<TableRow>> {
    let code = cfg.parsed_code()?;
    let range = cfg.n_steps;
    if !range.is_empty() && (range.start < TABLE_STEPS.0 || range.end > TABLE_STEPS.1) {
        return Err(Error::Config(format!("table range {range} not within {}..{}", TABLE_STEPS.0, TABLE_STEPS.1)));
    }
    range
        .iter()
        .map(|n| {
            let ps = zero_space(&code, n)?;
            let reference = paper_reference(&code, n);
            let formula_iterations = grover_iterations(ps.len());
            let iterations = reference.map_or(formula_iterations, |r| r.iterations);
            let sweep = sweep_omega(&ps, iterations, cfg.grid)?;
            let prob_at_reference_omega = reference
                .map(|r| run_qva(&ps, &QvaParams::new(r.omega, iterations)?).map(|run| run.prob_top))
                .transpose()?;
            let formula = if formula_iterations == iterations {
                sweep.clone()
            } else {
                sweep_omega(&ps, formula_iterations, cfg.grid)?
            };
            Ok(TableRow {
                n,
                iterations,
                omega_star: sweep.omega_star,
                prob: sweep.prob_at_star,
                reference_omega: reference.map(|r| r.omega),
                reference_prob: reference.map(|r| r.prob),
                prob_at_reference_omega,
                formula_iterations,
                formula_omega_star: formula.omega_star,
                formula_prob: formula.prob_at_star,
            })
        })
        .collect()
}

pub fn cmd_table(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    cfg.validate()?;
    let rows = table_rows(cfg)?;
    let mut csv = format!("{TABLE_HEADER}\n");
    for r in &rows {
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.iterations,
            fmt_g12(r.omega_star),
            fmt_g12(r.prob),
            opt(r.reference_omega),
            opt(r.reference_prob),
            opt(r.prob_at_reference_omega),
            r.formula_iterations,
            fmt_g12(r.formula_omega_star),
            fmt_g12(r.formula_prob),
        );
    }
    let report = rows
        .iter()
        .map(|r| format!("N={:2} iterations={:2} omega*={:.3} Pr={:.4}", r.n, r.iterations, r.omega_star, r.prob))
        .collect::<Vec<_>>()
        .join("\n");
    let config = ExperimentConfig { mode: Mode::TableReproduction, ..cfg.clone() };
    Ok(finish("table", config, csv, json!({ "rows": rows }), vec![], started, report, true))
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    cfg.validate()?;
    let code = cfg.parsed_code()?;
    let n = cfg.n_steps.only()?;
    let received = cfg.received_bits()?.unwrap_or_else(|| vec![0; n * code.n()]);
    if received.len() != n * code.n() {
        return Err(Error::Config(format!("received word must be {} bits for N={n}", n * code.n())));
    }
    let ps = PathSpace::from_code(&code, &received, EncoderState(0))?;
    let iterations = cfg
        .iterations
        .or_else(|| paper_reference(&code, n).map(|r| r.iterations))
        .unwrap_or_else(|| grover_iterations(ps.len()));
    let sweep = sweep_omega(&ps, iterations, cfg.grid)?;
    let mut csv = String::from("omega,prob_top,top_index\n");
    for p in &sweep.curve {
        csv += &format!("{},{},{}\n", fmt_g12(p.omega), fmt_g12(p.prob_top), p.top_index);
    }
    let target = ps.optimal_index();
    let summary = json!({
        "omega_star": sweep.omega_star,
        "prob_at_star": sweep.prob_at_star,
        "iterations": iterations,
        "num_paths": ps.len(),
        "target_index": target,
    });
    let report = format!(
        "N={n} L={} iterations={iterations} omega*={:.4} Pr={:.4}",
        ps.len(),
        sweep.omega_star,
        sweep.prob_at_star
    );
    let config = ExperimentConfig {
        mode: Mode::OmegaSweep,
        iterations: Some(iterations),
        received: Some(bits_label(pack_bits(&received), received.len())),
        ..cfg.clone()
    };
    Ok(finish("sweep", config, csv, summary, vec![], started, report, true))
}

/// One decoded block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodeRow {
    pub campaign_id: u64,
    pub seed: u64,
    /// Shots spent on the block.
    pub r: u64,
    /// Decoded message bits; empty on a decode failure.
    pub mode: String,
    pub mode_count: u64,
    pub correct: bool,
    pub message: String,
    pub received: String,
    pub channel_errors: usize,
    pub decode_failure: bool,
}

pub const DECODE_HEADER: &str =
    "campaign_id,seed,r,mode,mode_count,correct,message,received,channel_errors,decode_failure";

enum Decoder {
    Classical,
    Iterated { phases_omega: f64, iterations: usize, trials: u64 },
    Adaptive(Vec<ErrorClass>),
    Probabilistic { r: u64 },
}

fn label(bits: &[u8]) -> String {
    bits.iter().map(|&b| char::from(b'0' + b)).collect()
}

fn decode_block(
    code: &ConvCode,
    n: usize,
    cfg: &ExperimentConfig,
    decoder: &Decoder,
    block: u64,
) -> Result<(DecodeRow, u64)> {
    let mut rng = block_rng(cfg.seed, block);
    let message: Vec<u8> = (0..code.k() * n).map(|_| rng.gen_range(0..2u8)).collect();
    let codeword = code.encode(&message, EncoderState(0))?;
    let channel_seed: u64 = rng.gen();
    let (received, channel_errors) = BscChannel::new(cfg.epsilon, channel_seed)?.transmit(&codeword);
    let (decoded, r, mode_count): (Option<Vec<u8>>, u64, u64) = match decoder {
        Decoder::Classical => {
            let res = viterbi_decode(&CodeTrellis::new(code, &received)?, 0)?;
            (Some(res.message_bits(code.k())), 1, 1)
        }
        Decoder::Iterated { phases_omega, iterations, trials } => {
            let ps = PathSpace::from_code(code, &received, EncoderState(0))?;
            let state = amplify(&ps.phases(*phases_omega), *iterations);
            let samples = sample_indices(&state, &mut rng, *trials as usize)?;
            let (mode, count) = mode_of(&samples).expect("trials >= 1");
            (ps.message(mode), *trials, count)
        }
        Decoder::Adaptive(schedule) => {
            let ps = PathSpace::from_code(code, &received, EncoderState(0))?;
            match adaptive_decode_space(&ps, schedule, &mut rng) {
                Ok(out) => (Some(out.message), out.trials_used as u64, out.mode_count),
                Err(Error::DecodeFailure { .. }) => (None, schedule.iter().map(|c| c.trials as u64).sum(), 0),
                Err(e) => return Err(e),
            }
        }
        Decoder::Probabilistic { r } => {
            let ps = PathSpace::from_code(code, &received, EncoderState(0))?;
            let state = amplitude_loaded_state(&ps, cfg.epsilon)?;
            let out = run_trials(&state, *r, &mut rng)?;
            (ps.message(out.mode), *r, out.mode_count)
        }
    };
    let row = DecodeRow {
        campaign_id: block,
        seed: cfg.seed,
        r,
        mode: decoded.as_deref().map(label).unwrap_or_default(),
        mode_count,
        correct: decoded.as_deref() == Some(&message[..]),
        message: label(&message),
        received: label(&received),
        channel_errors,
        decode_failure: decoded.is_none(),
    };
    Ok((row, channel_seed))
}

pub fn decode_rows(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Vec<DecodeRow>, Vec<u64>)> {
    cfg.validate()?;
    if !cfg.mode.is_decoder() {
        return Err(Error::Config(format!("mode {} is not a decoder", cfg.mode)));
    }
    let code = cfg.parsed_code()?;
    let n = cfg.n_steps.only()?;
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    let mut resolved = cfg.clone();
    let decoder = match cfg.mode {
        Mode::Classical => Decoder::Classical,
        Mode::IteratedQva => {
            let p = resolve_qva_params(cfg, &code, n)?;
            let trials = cfg.trials.unwrap_or(DEFAULT_QVA_TRIALS);
            resolved.omega = Some(p.omega);
            resolved.iterations = Some(p.iterations);
            resolved.trials = Some(trials);
            Decoder::Iterated { phases_omega: p.omega, iterations: p.iterations, trials }
        }
        Mode::AdaptiveQva => {
            let iterations = match cfg.iterations {
                Some(i) => i,
                None => resolve_qva_params(cfg, &code, n)?.iterations,
            };
            let trials = cfg.trials.unwrap_or(DEFAULT_QVA_TRIALS);
            resolved.iterations = Some(iterations);
            resolved.trials = Some(trials);
            Decoder::Adaptive(error_class_schedule(
                &code,
                n,
                cfg.epsilon,
                cfg.max_errors,
                iterations,
                trials as usize,
                cfg.grid,
            )?)
        }
        Mode::ProbabilisticQva => {
            let r = match cfg.trials {
                Some(r) => r,
                None => required_trials(n, cfg.e0, cfg.target_failure)?,
            };
            resolved.trials = Some(r);
            Decoder::Probabilistic { r }
        }
        _ => unreachable!("checked is_decoder"),
    };
    let results = (0..cfg.blocks)
        .into_par_iter()
        .map(|b| decode_block(&code, n, cfg, &decoder, b))
        .collect::<Result<Vec<_>>>()?;
    let (rows, seeds) = results.into_iter().unzip();
    Ok((resolved, rows, seeds))
}

pub fn decode_csv(rows: &[DecodeRow]) -> String {
    let mut csv = format!("{DECODE_HEADER}\n");
    for r in rows {
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.campaign_id,
            r.seed,
            r.r,
            r.mode,
            r.mode_count,
            u8::from(r.correct),
            r.message,
            r.received,
            r.channel_errors,
            u8::from(r.decode_failure),
        );
    }
    csv
}

pub fn cmd_decode(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    let (resolved, rows, seeds) = decode_rows(cfg)?;
    let csv = decode_csv(&rows);
    let errors = rows.iter().filter(|r| !r.correct).count();
    let failures = rows.iter().filter(|r| r.decode_failure).count();
    let rate = if rows.is_empty() { 0.0 } else { errors as f64 / rows.len() as f64 };
    let shots: u64 = rows.iter().map(|r| r.r).sum();
    let summary = json!({
        "blocks": rows.len(),
        "block_errors": errors,
        "block_error_rate": rate,
        "decode_failures": failures,
        "total_shots": shots,
    });
    let report = format!(
        "mode={} blocks={} block_errors={errors} rate={} decode_failures={failures}",
        resolved.mode,
        rows.len(),
        fmt_g12(rate)
    );
    Ok(finish("decode", resolved, csv, summary, seeds, started, report, true))
}

/// Result of one verification check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Tolerance as printed, `exact` for integer comparisons.
    pub tolerance: String,
    /// Worst observed deviation or mismatch count.
    pub value: f64,
    pub pass: bool,
}

fn check(name: &str, tol: f64, value: f64) -> CheckResult {
    CheckResult { name: name.into(), tolerance: fmt_g12(tol), value, pass: value <= tol }
}

fn exact(name: &str, mismatches: usize) -> CheckResult {
    CheckResult { name: name.into(), tolerance: "exact".into(), value: mismatches as f64, pass: mismatches == 0 }
}

fn path_diffusion(v: &mut [Complex64], fault: Option<Fault>) {
    let l = v.len() as f64;
    let mean2 = v.iter().sum::<Complex64>() * (2.0 / l);
    let mean2 = if fault == Some(Fault::DiffusionSign) { -mean2 } else { mean2 };
    for a in v.iter_mut() {
        *a = mean2 - *a;
    }
}

/// Path-level amplification under test; the unfaulted branch is the library's.
fn path_amplify(phases: &[Complex64], iterations: usize, fault: Option<Fault>) -> PathStatevector {
    if fault != Some(Fault::DiffusionSign) {
        return amplify(phases, iterations);
    }
    let mut v = PathStatevector::uniform(phases.len()).amplitudes().to_vec();
    for _ in 0..iterations {
        for (a, g) in v.iter_mut().zip(phases) {
            *a *= g;
        }
        path_diffusion(&mut v, fault);
    }
    PathStatevector::from_amplitudes(v)
}

fn path_phases(ps: &PathSpace, omega: f64, fault: Option<Fault>) -> Vec<Complex64> {
    let p = ps.phases(omega);
    if fault == Some(Fault::PhaseConjugate) {
        p.iter().map(|z| z.conj()).collect()
    } else {
        p
    }
}

fn random_unit_phases(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))).collect()
}

/// Register-level amplification: marking is the ratio of the chained
/// preparation at `omega` to the one at zero, diffusion is `2|s><s| - I`
/// about the zero-phase preparation.
fn register_amplify(code: &ConvCode, received: &[u8], omega: f64, iterations: usize) -> Result<Vec<Complex64>> {
    let s = chain_g_phi(code, received, 0.0)?;
    let g = chain_g_phi(code, received, omega)?;
    let mark: Vec<Complex64> =
        s.iter().zip(&g).map(|(a, b)| if a.norm() > 1e-12 { b / a } else { Complex64::new(1.0, 0.0) }).collect();
    let mut v = s.clone();
    for _ in 0..iterations {
        for (a, m) in v.iter_mut().zip(&mark) {
            *a *= m;
        }
        let overlap: Complex64 = s.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
        for (a, x) in v.iter_mut().zip(&s) {
            *a = x * overlap * 2.0 - *a;
        }
    }
    Ok(v)
}

/// Received words of the paper-size chain for every depth whose registers
/// fit the chain simulator.
fn chain_words(code: &ConvCode, max_steps: usize) -> Vec<Vec<u8>> {
    let mut words = Vec::new();
    for n in 1..=max_steps {
        if (n + 1) * code.state_bits() > crate::circuit::CHAIN_QUBIT_LIMIT {
            break;
        }
        let bits = n * code.n();
        for w in 0..1u32 << bits {
            words.push(unpack_bits(w, bits).collect());
        }
    }
    words
}

pub fn verify_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>> {
    cfg.validate()?;
    let code = cfg.parsed_code()?;
    let fault = cfg.inject_fault;
    let omega = cfg.omega.unwrap_or(reference_table().point_value.omega);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    // classical oracle equivalence
    let mut mismatches = 0;
    for _ in 0..300 {
        let n = rng.gen_range(1..=8);
        let eps = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
        let msg: Vec<u8> = (0..code.k() * n).map(|_| rng.gen_range(0..2)).collect();
        let (rx, _) = BscChannel::new(eps, rng.gen())?.transmit(&code.encode(&msg, EncoderState(0))?);
        let t = CodeTrellis::new(&code, &rx)?;
        if viterbi_decode(&t, 0)?.metric != brute_force_decode(&t, 0)?.metric {
            mismatches += 1;
        }
    }
    out.push(exact("viterbi-vs-brute-force", mismatches));

    // exponent multiset of the marking on the zero word
    let rx0 = vec![0u8; 4 * code.n()];
    let ps0 = PathSpace::from_code(&code, &rx0, EncoderState(0))?;
    let from_paths = ps0.error_multiset().expect("code path space");
    let from_trellis = path_metric_multiset(&CodeTrellis::new(&code, &rx0)?, 0)?;
    let mut diff = usize::from(from_paths != from_trellis);
    if code == ConvCode::paper_code() {
        let published: BTreeMap<u32, u64> = [(0, 1), (2, 1), (3, 3), (4, 5), (5, 4), (6, 1), (7, 1)].into();
        diff += usize::from(from_paths != published);
    }
    out.push(exact("g-phi-multiset-n4", diff));

    // unitarity
    let mut dev: f64 = 0.0;
    if 2 * code.state_bits() <= crate::circuit::DENSE_QUBIT_LIMIT {
        for y in 0..1u32 << code.n() {
            let block: Vec<u8> = unpack_bits(y, code.n()).collect();
            dev = dev.max(v_block(&code, &block, omega)?.unitarity_deviation());
        }
    }
    out.push(check("v-block-unitarity", MATRIX_TOL, dev));

    let mut dev: f64 = 0.0;
    for len in [4, 16, 64] {
        let mut v: Vec<Complex64> =
            random_unit_phases(&mut rng, len).iter().map(|z| z * rng.gen_range(0.1..1.0)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= norm);
        path_diffusion(&mut v, fault);
        dev = dev.max((v.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs());
    }
    out.push(check("diffusion-unitarity", 1e-12, dev));

    // gate-level V_00 against its block
    let paper = ConvCode::paper_code();
    let mut dev: f64 = 0.0;
    for _ in 0..20 {
        let w = rng.gen_range(0.0..std::f64::consts::PI);
        dev = dev.max(v00_circuit(w)?.global_phase_distance(&v_block(&paper, &[0, 0], w)?));
    }
    out.push(check("v00-circuit-vs-block", MATRIX_TOL, dev));

    // chained preparation against path-level marking, then amplification
    let words = chain_words(&code, 3);
    let mut prep_dev: f64 = 0.0;
    let mut amp_dev: f64 = 0.0;
    for rx in &words {
        let ps = PathSpace::from_code(&code, rx, EncoderState(0))?;
        let q = code.num_states();
        let l = (ps.len() as f64).sqrt();
        let marked: Vec<Complex64> = path_phases(&ps, omega, fault).iter().map(|z| z / l).collect();
        let chain = chain_g_phi(&code, rx, omega)?;
        prep_dev = prep_dev.max(max_abs_diff(&chain, &embed_path_state(&ps, &marked, q)?));
        for t in 1..=3 {
            let path = path_amplify(&path_phases(&ps, omega, fault), t, fault);
            let reg = register_amplify(&code, rx, omega, t)?;
            amp_dev = amp_dev.max(max_abs_diff(&reg, &embed_path_state(&ps, path.amplitudes(), q)?));
        }
    }
    out.push(check("chain-vs-path-marking", MATRIX_TOL, prep_dev));
    out.push(check("circuit-vs-path-amplification", MATRIX_TOL, amp_dev));

    // closed-form single iteration
    let mut dev: f64 = 0.0;
    for i in 0..100 {
        let len = [4, 8, 16, 32][i % 4];
        let g = random_unit_phases(&mut rng, len);
        let t = rng.gen_range(0..len);
        dev = dev.max((single_iteration_prob(&g, t)? - path_amplify(&g, 1, fault).probability(t)).abs());
    }
    out.push(check("single-iteration-formula", 1e-12, dev));

    // state preparation blocks
    let mut dev: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let raw: Vec<f64> = (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let target: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let (u, _) = u_psi(&target)?;
        let col = u.column(0);
        let d = target.iter().zip(&col).map(|(t, c)| (c - t).norm()).fold(0.0, f64::max);
        dev = dev.max(d).max(u.unitarity_deviation());
    }
    out.push(check("u-psi-targets", MATRIX_TOL, dev));
    Ok(out)
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    let checks = verify_checks(cfg)?;
    let mut csv = String::from("check,tolerance,value,pass\n");
    let mut report = Vec::new();
    for c in &checks {
        csv += &format!("{},{},{},{}\n", c.name, c.tolerance, fmt_g12(c.value), u8::from(c.pass));
        report.push(format!(
            "{} {} (tolerance {}, observed {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.tolerance,
            fmt_g12(c.value)
        ));
    }
    let passed = checks.iter().all(|c| c.pass);
    let config = ExperimentConfig { mode: Mode::CircuitVerify, ..cfg.clone() };
    let summary = json!({ "passed": passed, "checks": checks });
    Ok(finish("verify", config, csv, summary, vec![], started, report.join("\n"), passed))
}

pub fn cmd_circuit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    cfg.validate()?;
    let code = cfg.parsed_code()?;
    let omega = cfg.omega.unwrap_or(reference_table().point_value.omega);
    let block = cfg.received_bits()?.unwrap_or_else(|| vec![0; code.n()]);
    let v = v_block(&code, &block, omega)?;
    let unitarity = v.unitarity_deviation();
    let mut passed = unitarity <= MATRIX_TOL;
    let mut report = vec![format!(
        "V_{} for code {} at omega={}: dimension {}, unitarity deviation {}",
        label(&block),
        code.spec_string(),
        fmt_g12(omega),
        v.dim(),
        fmt_g12(unitarity)
    )];
    let mut summary = json!({ "dimension": v.dim(), "unitarity_deviation": unitarity });
    if code == ConvCode::paper_code() && block == [0, 0] {
        let d = v00_circuit(omega)?.global_phase_distance(&v);
        let printed = printed_v00_circuit(omega)?.global_phase_distance(&v);
        passed &= d <= MATRIX_TOL;
        report.push(format!("gate circuit vs block: {} (printed sequence: {})", fmt_g12(d), fmt_g12(printed)));
        summary["circuit_distance"] = json!(d);
        summary["printed_circuit_distance"] = json!(printed);
    }
    let counts: Vec<_> = cfg.n_steps.iter().map(|n| (n, code_gate_counts(&code, n))).collect();
    for (n, g) in &counts {
        report.push(format!("N={n}: rotations={} control_logic={} total={}", g.rotations, g.control_logic, g.total));
    }
    summary["gate_counts"] = json!(counts.iter().map(|(n, g)| json!({ "n": n, "counts": g })).collect::<Vec<_>>());
    let config =
        ExperimentConfig { mode: Mode::Circuit, omega: Some(omega), received: Some(label(&block)), ..cfg.clone() };
    Ok(finish("circuit", config, v.to_csv(), summary, vec![], started, report.join("\n"), passed))
}

/// Dispatches on `cfg.mode`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.mode {
        Mode::TableReproduction => cmd_table(cfg),
        Mode::OmegaSweep => cmd_sweep(cfg),
        Mode::CircuitVerify => cmd_verify(cfg),
        Mode::Circuit => cmd_circuit(cfg),
        _ => cmd_decode(cfg),
    }
}
