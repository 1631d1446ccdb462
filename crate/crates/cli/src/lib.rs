//! The `ambqc` command line: instance checks, exact analysis, sampling runs, bound evaluation and
//! experiment orchestration.
//!
//! Results go to the data stream in the chosen [`Format`]; diagnostics go to the error stream.

mod error;
mod output;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ambqc::bounds::{self, LogBound};
use ambqc::dump::{read_state, write_operator, write_state};
use ambqc::engine::{
    build_accepting_operator, enumerate_histories, estimate_acceptance, sample_output_distribution, AcceptanceEstimate,
    DecisionTree, Enumeration, Source, MAX_DENSE_OPERATOR_QUBITS,
};
use ambqc::experiments::{
    compare_with_bounds, load_report, run_experiment_with, save_report, ComparisonRow, ExperimentConfig, RunOptions,
    TailReport,
};
use ambqc::instance::{parse_instance, Task};
use ambqc::randstates::{
    estimate_geometric_entanglement, sample_haar_state, sample_schmidt_state, LocalMeasure, SchmidtEnsembleSpec,
};
use ambqc::{InstanceF64, PureStateF64};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use error::{CliError, ExitKind};
pub use output::{Format, Output, Table};
use output::{num, opt_num};

/// Largest `q` for which `instance validate` checks completeness by building the decision tree.
pub const MAX_VALIDATE_TREE_QUBITS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "ambqc", version, about = "Measurement-based computation on random resource states")]
pub struct Cli {
    /// Output format for results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect an instance file.
    #[command(subcommand)]
    Instance(InstanceCommand),
    /// Sample a random state and write it as a state dump.
    #[command(subcommand)]
    State(StateCommand),
    /// Estimate the acceptance probability from sampled runs.
    Run(RunArgs),
    /// Certify an upper estimate of the geometric measure of entanglement.
    Eg(EgArgs),
    /// Evaluate a closed-form tail bound.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Run a concentration experiment.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Work with saved experiment reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
pub enum InstanceCommand {
    /// Check the instance invariants and, when feasible, completeness.
    Validate { file: PathBuf },
    /// List every history with its exact probability.
    Enumerate {
        file: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Write the accepting operator as a dense dump (q <= 10).
    Operator {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// State dump to measure.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Use the maximally mixed surrogate.
    #[arg(long)]
    pub mixed: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MeasureArg {
    Haar,
    PauliEigenstates,
}

impl From<MeasureArg> for LocalMeasure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Haar => LocalMeasure::Haar,
            MeasureArg::PauliEigenstates => LocalMeasure::PauliEigenstates,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum StateCommand {
    Haar {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Schmidt {
        #[arg(long)]
        q: usize,
        #[arg(long = "K")]
        rank: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MeasureArg::Haar)]
        local_measure: MeasureArg,
        /// Also write the product vectors and coefficients as JSON.
        #[arg(long)]
        factors: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of runs.
    #[arg(short = 'N', long = "trials")]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EgArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum BoundsCommand {
    /// Some controller deviates by more than eps on a Haar-random state.
    Thm1 {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        q: u32,
        #[arg(long)]
        w: u64,
        #[arg(long)]
        v: u64,
    },
    /// Same for a random Schmidt-rank-K state.
    Thm2 {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        q: u32,
        #[arg(long)]
        w: u64,
        #[arg(long)]
        v: u64,
        #[arg(long = "K")]
        rank: u64,
    },
    /// l1 deviation of t-bit output distributions.
    Sampling {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        q: u32,
        #[arg(long)]
        w: u64,
        #[arg(long)]
        v: u64,
        #[arg(long)]
        t: u32,
    },
    /// Tail of the largest eigenvalue of R above 2K/2^k.
    LemmaR {
        #[arg(long)]
        q: u32,
        #[arg(long = "K")]
        rank: u64,
        #[arg(long)]
        k: u32,
    },
    /// Mean of K variables in [0, 1].
    Hoeffding {
        #[arg(long)]
        eps: f64,
        #[arg(long = "K")]
        rank: u64,
    },
    /// Lipschitz function on the unit sphere of R^d.
    Levy {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    Run {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Worker threads; the result does not depend on this.
        #[arg(long, env = "AMBQC_THREADS")]
        threads: Option<usize>,
        /// Report path; overrides the config's output field.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Bound-comparison table of a saved report.
    Summarize { report: PathBuf },
}

/// `instance validate` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub q: usize,
    pub n: usize,
    pub w: usize,
    pub v: usize,
    pub outcome_bits: usize,
    pub povms: Vec<String>,
    pub task: String,
    /// `None` when `q` is too large to build the decision tree.
    pub complete: Option<bool>,
    pub histories: Option<usize>,
}

/// `instance enumerate` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    #[serde(flatten)]
    pub enumeration: Enumeration,
    /// `C` for a decision task.
    pub acceptance: Option<f64>,
    pub output_distribution: Vec<f64>,
}

/// `instance operator` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub q: usize,
    pub trace_p: f64,
    pub mixed_acceptance: f64,
    pub resolution_error: f64,
    pub out: PathBuf,
}

/// `state haar|schmidt` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub ensemble: String,
    pub q: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub seed: u64,
    pub norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_infinity_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity_tr_r2: Option<f64>,
    pub out: PathBuf,
}

/// `run` result for a sampling task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingEstimate {
    pub distribution: Vec<f64>,
    pub trials: u64,
}

/// `eg` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgReport {
    pub eg_bits: f64,
    pub overlap: f64,
    /// Witness factors, qubit 1 first, as `[[re, im], [re, im]]`.
    pub witness: Vec<[[f64; 2]; 2]>,
    pub restarts: usize,
    pub converged_restarts: usize,
    pub sweeps: Vec<usize>,
}

/// `bounds` result. Parses as a [`LogBound`] too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub evaluator: String,
    #[serde(flatten)]
    pub bound: LogBound,
}

/// `report summarize` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub kind: String,
    pub statistic: String,
    pub trials: usize,
    pub summary: std::collections::BTreeMap<String, f64>,
    pub comparison: Vec<ComparisonRow>,
    pub violations: usize,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli, err) {
        Ok(output) => match output.write(cli.format, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: writing output: {e}");
                ExitKind::Io as u8
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

pub fn execute(cli: &Cli, err: &mut dyn Write) -> Result<Output, CliError> {
    match &cli.command {
        Command::Instance(c) => instance_command(c),
        Command::State(c) => state_command(c),
        Command::Run(a) => run_command(a),
        Command::Eg(a) => eg_command(a),
        Command::Bounds(c) => bounds_command(c),
        Command::Experiment(c) => experiment_command(c, err),
        Command::Report(c) => report_command(c, err),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_instance(path: &Path) -> Result<InstanceF64, CliError> {
    parse_instance(&read_text(path)?).map_err(|e| CliError::validation(format!("{}: invalid instance at {e}", path.display())))
}

fn load_state(path: &Path) -> Result<PureStateF64, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    read_state(&bytes[..]).map_err(|e| error::dump_error(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn task_name(task: &Task) -> String {
    match task {
        Task::Decision => "decision".into(),
        Task::Sampling { t, .. } => format!("sampling (t = {t})"),
    }
}

fn step_list(h: &ambqc::engine::History) -> String {
    h.steps
        .iter()
        .map(|s| format!("{}:{}={}", s.qubit, s.povm, s.outcome))
        .collect::<Vec<_>>()
        .join(" ")
}

fn instance_command(cmd: &InstanceCommand) -> Result<Output, CliError> {
    match cmd {
        InstanceCommand::Validate { file } => {
            let inst = load_instance(file)?;
            let (complete, histories) = if inst.q() <= MAX_VALIDATE_TREE_QUBITS {
                let tree = DecisionTree::build(&inst)?;
                (Some(true), Some(tree.num_leaves()))
            } else {
                (None, None)
            };
            let c = &inst.circuit;
            let report = ValidationReport {
                q: inst.q(),
                n: c.n(),
                w: c.w(),
                v: c.v(),
                outcome_bits: c.outcome_bits(),
                povms: inst.povm_table.povms().iter().map(|p| p.label().to_string()).collect(),
                task: task_name(&inst.task),
                complete,
                histories,
            };
            let table = Table::pairs(vec![
                ("q", report.q.to_string()),
                ("n", report.n.to_string()),
                ("w", report.w.to_string()),
                ("v", report.v.to_string()),
                ("outcome_bits", report.outcome_bits.to_string()),
                ("povms", report.povms.join(", ")),
                ("task", report.task.clone()),
                (
                    "complete",
                    complete.map_or("not checked (q too large)".into(), |b| b.to_string()),
                ),
                ("histories", histories.map_or("-".into(), |h| h.to_string())),
            ]);
            Ok(Output::new(&report, vec![table]))
        }
        InstanceCommand::Enumerate { file, source } => {
            let inst = load_instance(file)?;
            let state;
            let src = match &source.state {
                Some(p) => {
                    state = load_state(p)?;
                    Source::State(&state)
                }
                None => Source::MixedSurrogate,
            };
            let enumeration = enumerate_histories(&inst, src)?;
            let acceptance = (inst.task == Task::Decision).then(|| enumeration.acceptance());
            let output_distribution = enumeration.output_distribution(inst.task.output_bits());
            let mut histories = Table::new(&["history", "output", "probability"]).titled("histories (qubit:povm=outcome)");
            for h in &enumeration.histories {
                histories.push(vec![step_list(h), h.output.to_string(), opt_num(h.probability)]);
            }
            let mut totals = vec![("histories", enumeration.histories.len().to_string())];
            totals.push(("total_probability", num(enumeration.total_probability)));
            if let Some(c) = acceptance {
                totals.push(("acceptance", num(c)));
            }
            let report = EnumerationReport {
                enumeration,
                acceptance,
                output_distribution,
            };
            Ok(Output::new(&report, vec![histories, Table::pairs(totals)]))
        }
        InstanceCommand::Operator { file, out } => {
            let inst = load_instance(file)?;
            if inst.q() > MAX_DENSE_OPERATOR_QUBITS {
                return Err(CliError::validation(format!(
                    "dense operators are limited to q <= {MAX_DENSE_OPERATOR_QUBITS}, the instance has q = {}",
                    inst.q()
                )));
            }
            let ops = build_accepting_operator(&inst)?;
            write_operator(&ops.accept, create(out)?).map_err(|e| CliError::io(out, e))?;
            let trace_p = ops.accept.trace().re;
            let report = OperatorReport {
                q: inst.q(),
                trace_p,
                mixed_acceptance: ops.mixed_acceptance(),
                resolution_error: ops.resolution_error(),
                out: out.clone(),
            };
            let table = Table::pairs(vec![
                ("q", report.q.to_string()),
                ("trace_p", num(report.trace_p)),
                ("mixed_acceptance", num(report.mixed_acceptance)),
                ("resolution_error", num(report.resolution_error)),
                ("written", out.display().to_string()),
            ]);
            Ok(Output::new(&report, vec![table]))
        }
    }
}

fn state_table(r: &StateReport) -> Table {
    let mut pairs = vec![("ensemble", r.ensemble.clone()), ("q", r.q.to_string())];
    if let Some(k) = r.rank {
        pairs.push(("K", k.to_string()));
    }
    pairs.push(("seed", r.seed.to_string()));
    pairs.push(("norm", num(r.norm)));
    if let Some(x) = r.r_infinity_norm {
        pairs.push(("r_infinity_norm", num(x)));
    }
    if let Some(x) = r.purity_tr_r2 {
        pairs.push(("purity_tr_r2", num(x)));
    }
    pairs.push(("written", r.out.display().to_string()));
    Table::pairs(pairs)
}

fn state_command(cmd: &StateCommand) -> Result<Output, CliError> {
    let report = match cmd {
        StateCommand::Haar { q, seed, out } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let state: PureStateF64 = sample_haar_state(*q, &mut rng)?;
            write_state(&state, create(out)?).map_err(|e| CliError::io(out, e))?;
            StateReport {
                ensemble: "haar".into(),
                q: *q,
                rank: None,
                seed: *seed,
                norm: state.norm_sqr().sqrt(),
                r_infinity_norm: None,
                purity_tr_r2: None,
                out: out.clone(),
            }
        }
        StateCommand::Schmidt {
            q,
            rank,
            seed,
            out,
            local_measure,
            factors,
        } => {
            let spec = SchmidtEnsembleSpec {
                q: *q,
                rank: *rank,
                local_measure: (*local_measure).into(),
                seed: *seed,
            };
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let sample = sample_schmidt_state::<f64, _>(&spec, &mut rng)?;
            let state = sample.realize()?;
            write_state(&state, create(out)?).map_err(|e| CliError::io(out, e))?;
            if let Some(path) = factors {
                let mut text = serde_json::to_string_pretty(&sample.to_dump(Some(*seed))).expect("dump serializes");
                text.push('\n');
                fs::write(path, text).map_err(|e| CliError::io(path, e))?;
            }
            StateReport {
                ensemble: "schmidt".into(),
                q: *q,
                rank: Some(*rank),
                seed: *seed,
                norm: state.norm_sqr().sqrt(),
                r_infinity_norm: Some(sample.r_infinity_norm()),
                purity_tr_r2: Some(sample.purity_tr_r2()),
                out: out.clone(),
            }
        }
    };
    let table = state_table(&report);
    Ok(Output::new(&report, vec![table]))
}

fn run_command(a: &RunArgs) -> Result<Output, CliError> {
    let inst = load_instance(&a.instance)?;
    let state;
    let src = match &a.source.state {
        Some(p) => {
            state = load_state(p)?;
            Source::State(&state)
        }
        None => Source::MixedSurrogate,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    if inst.task == Task::Decision {
        let est: AcceptanceEstimate = estimate_acceptance(&inst, src, a.trials, &mut rng)?;
        let table = Table::pairs(vec![
            ("p_hat", num(est.p_hat)),
            ("stderr", num(est.stderr)),
            ("accepted", est.accepted.to_string()),
            ("trials", est.trials.to_string()),
        ]);
        Ok(Output::new(&est, vec![table]))
    } else {
        let distribution = sample_output_distribution(&inst, src, a.trials, &mut rng)?;
        let mut table = Table::new(&["output", "frequency"]);
        for (y, p) in distribution.iter().enumerate() {
            table.push(vec![y.to_string(), num(*p)]);
        }
        Ok(Output::new(
            &SamplingEstimate {
                distribution,
                trials: a.trials,
            },
            vec![table],
        ))
    }
}

fn eg_command(a: &EgArgs) -> Result<Output, CliError> {
    let state = load_state(&a.state)?;
    if a.restarts == 0 {
        return Err(CliError::validation("--restarts must be at least 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let eg = estimate_geometric_entanglement(&state, a.restarts, a.iters, a.tol, &mut rng)?;
    let report = EgReport {
        eg_bits: eg.eg_bits,
        overlap: eg.overlap,
        witness: eg.witness.iter().map(|f| f.map(|z| [z.re, z.im])).collect(),
        restarts: eg.traces.len(),
        converged_restarts: eg.traces.iter().filter(|t| t.converged).count(),
        sweeps: eg.traces.iter().map(|t| t.sweeps).collect(),
    };
    let summary = Table::pairs(vec![
        ("eg_bits", num(report.eg_bits)),
        ("overlap", num(report.overlap)),
        ("restarts", report.restarts.to_string()),
        ("converged_restarts", report.converged_restarts.to_string()),
    ]);
    let mut witness = Table::new(&["qubit", "amp0", "amp1"]).titled("witness product state");
    for (l, f) in eg.witness.iter().enumerate() {
        witness.push(vec![
            (l + 1).to_string(),
            format!("{:.6}{:+.6}i", f[0].re, f[0].im),
            format!("{:.6}{:+.6}i", f[1].re, f[1].im),
        ]);
    }
    Ok(Output::new(&report, vec![summary, witness]))
}

fn bounds_command(cmd: &BoundsCommand) -> Result<Output, CliError> {
    let (evaluator, bound) = match *cmd {
        BoundsCommand::Thm1 { eps, q, w, v } => ("thm1", bounds::thm1_log_bound(eps, q, w, v)?),
        BoundsCommand::Thm2 { eps, q, w, v, rank } => ("thm2", bounds::thm2_log_bound(eps, q, w, v, rank)?),
        BoundsCommand::Sampling { eps, q, w, v, t } => ("sampling", bounds::sampling_log_bound(eps, q, w, v, t)?),
        BoundsCommand::LemmaR { q, rank, k } => ("lemma-r", bounds::lemma_r_log_bound(q, rank, k)?),
        BoundsCommand::Hoeffding { eps, rank } => ("hoeffding", bounds::hoeffding_log_bound(eps, rank)?),
        BoundsCommand::Levy { eps, d, lambda } => ("levy", bounds::levy_log_tail(eps, d, lambda)?),
    };
    let report = BoundReport {
        evaluator: evaluator.into(),
        bound,
    };
    let table = Table::pairs(vec![
        ("evaluator", evaluator.into()),
        ("ln_bound", format!("{:.10e}", bound.ln)),
        ("log10_bound", format!("{:.10e}", bound.log10)),
        ("probability", format!("{:.6e}", bound.probability)),
        ("vacuous", bound.vacuous.to_string()),
    ]);
    Ok(Output::new(&report, vec![table]))
}

fn comparison_table(rows: &[ComparisonRow]) -> Table {
    let mut t = Table::new(&[
        "threshold",
        "empirical",
        "ci_lower",
        "ci_upper",
        "ln_bound",
        "bound",
        "vacuous",
        "status",
    ])
    .titled("tail vs bound (95% Clopper-Pearson)");
    for r in rows {
        t.push(vec![
            num(r.threshold),
            num(r.empirical),
            num(r.ci_lower),
            num(r.ci_upper),
            opt_num(r.bound_ln),
            opt_num(r.bound_probability),
            r.vacuous.to_string(),
            if r.violation { "VIOLATION" } else { "ok" }.into(),
        ]);
    }
    t
}

fn summarize(report: &TailReport, err: &mut dyn Write) -> Result<Output, CliError> {
    let comparison = if report.config.kind.has_bound() && !report.rows.is_empty() {
        compare_with_bounds(report)?
    } else {
        vec![]
    };
    let violations = comparison.iter().filter(|r| r.violation).count();
    if violations > 0 {
        let _ = writeln!(err, "warning: {violations} threshold(s) exceed a non-vacuous bound");
    }
    let failed = report.trials.iter().filter(|t| t.error.is_some()).count();
    if failed > 0 {
        let _ = writeln!(err, "warning: {failed} trial(s) failed; see the report for messages");
    }
    let summary = ReportSummary {
        kind: report.config.kind.to_string(),
        statistic: report.statistic.clone(),
        trials: report.trials.len(),
        summary: report.summary.clone(),
        comparison,
        violations,
    };
    let mut head = vec![
        ("kind", summary.kind.clone()),
        ("statistic", summary.statistic.clone()),
        ("trials", summary.trials.to_string()),
    ];
    let keys: Vec<(String, String)> = summary.summary.iter().map(|(k, v)| (k.clone(), num(*v))).collect();
    let mut tables = vec![];
    for (k, v) in &keys {
        head.push((k.as_str(), v.clone()));
    }
    tables.push(Table::pairs(head));
    if !summary.comparison.is_empty() {
        tables.push(comparison_table(&summary.comparison));
    }
    Ok(Output::new(&summary, tables))
}

/// Thread count from `--threads` (or the environment), then the config's hint.
fn experiment_command(cmd: &ExperimentCommand, err: &mut dyn Write) -> Result<Output, CliError> {
    let ExperimentCommand::Run { config, threads, out } = cmd;
    let text = read_text(config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let base_dir = config.parent().map(Path::to_path_buf).filter(|p| !p.as_os_str().is_empty());
    if *threads == Some(0) {
        return Err(CliError::validation("--threads must be at least 1"));
    }
    let options = RunOptions {
        base_dir: base_dir.clone(),
        workers: threads.or(cfg.workers),
    };
    let report = run_experiment_with(&cfg, &options)?;
    let target = out.clone().or_else(|| {
        cfg.output.as_ref().map(|p| match &base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        })
    });
    if let Some(path) = &target {
        let csv = save_report(&report, path)?;
        let _ = writeln!(err, "wrote {} and {}", path.display(), csv.display());
    }
    let mut output = summarize(&report, err)?;
    output.json = serde_json::to_value(&report).expect("report serializes");
    Ok(output)
}

fn report_command(cmd: &ReportCommand, err: &mut dyn Write) -> Result<Output, CliError> {
    let ReportCommand::Summarize { report } = cmd;
    let r = load_report(report)?;
    summarize(&r, err)
}
