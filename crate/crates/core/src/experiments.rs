//! Concentration experiments: sample random states, evaluate a deviation statistic per trial and
//! tabulate its empirical tail against the matching closed-form bound.
//!
//! Trial `i` draws all of its randomness from a ChaCha20 stream selected by `(master_seed, i)`,
//! and results are collected in trial order, so a report does not depend on the worker count.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    hoeffding_log_bound, lemma_r_log_bound, lemma_r_threshold, levy_log_tail, sampling_log_bound, thm2_log_bound,
    LogBound,
};
use crate::engine::{
    build_accepting_diagonal, build_accepting_operator, enumerate_histories, enumerate_on_tree, estimate_acceptance,
    l1_distance, mixed_acceptance, product_acceptance, run_surrogate_trajectory, sample_output_distribution,
    AcceptingOperators, DecisionTree, EngineError, Source, MAX_DENSE_OPERATOR_QUBITS,
};
use crate::families::FamilySpec;
use crate::instance::{parse_instance, AmbqcInstance, InstanceError, Task};
use crate::randstates::{
    gram_matrix, hermitian_lambda_max, sample_haar_state, sample_local_vectors, sample_schmidt_state, LocalMeasure,
    SchmidtEnsembleSpec, MAX_STATE_QUBITS,
};
use crate::statevector::PureState;
use crate::stats::{chi_square_test, clopper_pearson, mean_and_stderr, sample_std};

pub const REPORT_SCHEMA: &str = "ambqc-report/1";
pub const CONFIDENCE: f64 = 0.95;
pub const DEFAULT_MONTE_CARLO_TRIALS: u64 = 10_000;
/// Largest `q` for which the exact output distribution of a state is enumerated.
pub const MAX_EXACT_STATE_QUBITS: usize = 12;
/// Largest `q` for which a decision tree is built.
pub const MAX_TREE_QUBITS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    HaarConcentration,
    SchmidtConcentration,
    LemmaRTail,
    HoeffdingTail,
    SurrogateCheck,
    SamplingL1,
    PurityMean,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::HaarConcentration => "haar-concentration",
            Self::SchmidtConcentration => "schmidt-concentration",
            Self::LemmaRTail => "lemma-r-tail",
            Self::HoeffdingTail => "hoeffding-tail",
            Self::SurrogateCheck => "surrogate-check",
            Self::SamplingL1 => "sampling-l1",
            Self::PurityMean => "purity-mean",
        }
    }

    /// Whether reports of this kind carry tail rows with a bound.
    pub fn has_bound(self) -> bool {
        !matches!(self, Self::SurrogateCheck | Self::PurityMean)
    }

    fn uses_epsilons(self) -> bool {
        !matches!(self, Self::SurrogateCheck | Self::PurityMean | Self::LemmaRTail)
    }

    fn uses_instance(self) -> bool {
        !matches!(self, Self::LemmaRTail | Self::PurityMean)
    }

    fn statistic_name(self) -> &'static str {
        match self {
            Self::HaarConcentration | Self::SchmidtConcentration => "abs_acceptance_deviation",
            Self::LemmaRTail => "r_infinity_norm",
            Self::HoeffdingTail => "abs_product_mean_deviation",
            Self::SurrogateCheck => "history_index",
            Self::SamplingL1 => "l1_distance",
            Self::PurityMean => "purity_tr_r2",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
    /// Instance file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub local_measure: LocalMeasure,
    /// Trajectories per state when no exact evaluation is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo_trials: Option<u64>,
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub record_timestamp: bool,
}

impl ExperimentConfig {
    /// A config with every optional field unset.
    pub fn new(kind: ExperimentKind, trials: u64, master_seed: u64) -> Self {
        Self {
            kind,
            q: None,
            rank: None,
            k: None,
            epsilons: vec![],
            trials,
            master_seed,
            instance: None,
            family: None,
            local_measure: LocalMeasure::Haar,
            monte_carlo_trials: None,
            workers: None,
            output: None,
            record_timestamp: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ExperimentError::Config {
                field,
                message: e.into_inner().to_string(),
            }
        })
    }

    /// Checks that do not need the instance.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        for (i, &e) in self.epsilons.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(config_error(format!("epsilons[{i}]"), format!("{e} is outside (0, 1]")));
            }
            if i > 0 && e <= self.epsilons[i - 1] {
                return Err(config_error(format!("epsilons[{i}]"), "grid must be strictly increasing"));
            }
        }
        if !self.kind.uses_epsilons() && !self.epsilons.is_empty() {
            return Err(config_error("epsilons", format!("{} takes no epsilon grid", self.kind)));
        }
        if self.monte_carlo_trials == Some(0) {
            return Err(config_error("monte_carlo_trials", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers", "must be at least 1"));
        }
        if self.kind.uses_instance() {
            match (&self.instance, &self.family) {
                (Some(_), Some(_)) => return Err(config_error("instance", "give either instance or family, not both")),
                (None, None) => return Err(config_error("instance", format!("{} needs an instance or family", self.kind))),
                _ => {}
            }
        } else if self.instance.is_some() || self.family.is_some() {
            return Err(config_error("instance", format!("{} takes no instance", self.kind)));
        }
        let needs_rank = matches!(
            self.kind,
            ExperimentKind::SchmidtConcentration
                | ExperimentKind::LemmaRTail
                | ExperimentKind::HoeffdingTail
                | ExperimentKind::PurityMean
        );
        if needs_rank && self.rank.unwrap_or(0) == 0 {
            return Err(config_error("K", format!("{} needs K >= 1", self.kind)));
        }
        if !self.kind.uses_instance() {
            match self.q {
                None | Some(0) => return Err(config_error("q", format!("{} needs q >= 1", self.kind))),
                Some(q) if q > 63 => return Err(config_error("q", "q must be at most 63")),
                _ => {}
            }
        }
        if self.kind == ExperimentKind::LemmaRTail && self.k.is_none() {
            return Err(config_error("k", "lemma-r-tail needs k"));
        }
        Ok(())
    }
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("instance {0}")]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("report is not valid JSON: {0}")]
    Json(String),
    #[error("report schema `{found}` is not supported (expected `{REPORT_SCHEMA}`)")]
    SchemaMismatch { found: String },
    #[error("{0} reports have no associated bound")]
    NoBound(ExperimentKind),
    #[error("report has no tail rows to compare")]
    EmptyGrid,
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub statistic: Option<f64>,
    /// Underlying quantity before taking the deviation, when the kind has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub threshold: f64,
    pub exceedances: u64,
    pub successful_trials: u64,
    pub frequency: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub bound: Option<LogBound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub statistic: String,
    pub trials: Vec<TrialRecord>,
    pub rows: Vec<TailRow>,
    pub summary: BTreeMap<String, f64>,
    pub environment: Environment,
}

impl TailReport {
    pub fn statistics(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.statistic).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.value).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory that relative instance paths are resolved against.
    pub base_dir: Option<PathBuf>,
    /// Overrides the config's worker hint.
    pub workers: Option<usize>,
}

/// The RNG for trial `index`: stream `index` of the ChaCha20 generator keyed by `master_seed`.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

struct TrialValue {
    statistic: f64,
    value: Option<f64>,
}

impl TrialValue {
    fn plain(statistic: f64) -> Self {
        Self { statistic, value: None }
    }
}

/// `<Psi|P|Psi>` by the cheapest available route.
enum Evaluator {
    Diagonal(Vec<f64>),
    Dense(AcceptingOperators<f64>),
    MonteCarlo(u64),
}

impl Evaluator {
    fn choose(instance: &AmbqcInstance<f64>, mc_trials: u64) -> Result<Self, ExperimentError> {
        match build_accepting_diagonal(instance) {
            Ok(d) => return Ok(Self::Diagonal(d)),
            Err(EngineError::NotDiagonal | EngineError::DenseLimit { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        if instance.q() <= MAX_DENSE_OPERATOR_QUBITS {
            return Ok(Self::Dense(build_accepting_operator(instance)?));
        }
        Ok(Self::MonteCarlo(mc_trials))
    }

    fn acceptance(
        &self,
        instance: &AmbqcInstance<f64>,
        state: &PureState<f64>,
        rng: &mut ChaCha20Rng,
    ) -> Result<f64, EngineError> {
        match self {
            Self::Diagonal(d) => Ok(crate::engine::diagonal_expectation(d, state)),
            Self::Dense(ops) => ops.acceptance(state),
            Self::MonteCarlo(n) => Ok(estimate_acceptance(instance, Source::State(state), *n, rng)?.p_hat),
        }
    }

    fn label(&self) -> f64 {
        match self {
            Self::Diagonal(_) => 0.0,
            Self::Dense(_) => 1.0,
            Self::MonteCarlo(_) => 2.0,
        }
    }
}

enum StateSampler {
    Haar,
    Schmidt(SchmidtEnsembleSpec),
}

enum Plan {
    Deviation {
        instance: AmbqcInstance<f64>,
        evaluator: Evaluator,
        mixed: f64,
        sampler: StateSampler,
    },
    LemmaR {
        q: usize,
        rank: usize,
        measure: LocalMeasure,
        threshold: f64,
    },
    Hoeffding {
        instance: AmbqcInstance<f64>,
        tree: DecisionTree,
        mixed: f64,
        rank: usize,
        measure: LocalMeasure,
    },
    Surrogate {
        instance: AmbqcInstance<f64>,
        index: HashMap<Vec<usize>, usize>,
        expected: Vec<f64>,
        accepting: Vec<bool>,
        mixed: f64,
    },
    SamplingL1 {
        instance: AmbqcInstance<f64>,
        mixed: Vec<f64>,
        mc_trials: u64,
    },
    Purity {
        spec: SchmidtEnsembleSpec,
    },
}

fn load_instance(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<AmbqcInstance<f64>, ExperimentError> {
    if let Some(family) = &config.family {
        return Ok(family.build()?);
    }
    let rel = config.instance.as_ref().expect("validated");
    let path = match base_dir {
        Some(dir) if rel.is_relative() => dir.join(rel),
        _ => rel.clone(),
    };
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    Ok(parse_instance(&text)?)
}

fn check_q(config: &ExperimentConfig, instance: &AmbqcInstance<f64>, max: usize) -> Result<(), ExperimentError> {
    if let Some(q) = config.q {
        if q != instance.q() {
            return Err(config_error("q", format!("q = {q} but the instance has q = {}", instance.q())));
        }
    }
    if instance.q() > max {
        return Err(config_error(
            "instance",
            format!("{} supports q <= {max}, the instance has q = {}", config.kind, instance.q()),
        ));
    }
    Ok(())
}

fn need_decision(config: &ExperimentConfig, instance: &AmbqcInstance<f64>) -> Result<(), ExperimentError> {
    if instance.task != Task::Decision {
        return Err(config_error("instance", format!("{} needs a decision instance", config.kind)));
    }
    Ok(())
}

impl Plan {
    fn prepare(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<Self, ExperimentError> {
        config.validate()?;
        let mc_trials = config.monte_carlo_trials.unwrap_or(DEFAULT_MONTE_CARLO_TRIALS);
        let rank = config.rank.unwrap_or(0);
        Ok(match config.kind {
            ExperimentKind::HaarConcentration | ExperimentKind::SchmidtConcentration => {
                let instance = load_instance(config, base_dir)?;
                check_q(config, &instance, MAX_TREE_QUBITS.min(MAX_STATE_QUBITS))?;
                need_decision(config, &instance)?;
                let tree = DecisionTree::build(&instance)?;
                let mixed = mixed_acceptance(&tree, &instance)?;
                let evaluator = Evaluator::choose(&instance, mc_trials)?;
                let sampler = if config.kind == ExperimentKind::HaarConcentration {
                    StateSampler::Haar
                } else {
                    if rank == 0 {
                        return Err(config_error("K", "schmidt-concentration needs K >= 1"));
                    }
                    StateSampler::Schmidt(SchmidtEnsembleSpec {
                        q: instance.q(),
                        rank,
                        local_measure: config.local_measure,
                        seed: config.master_seed,
                    })
                };
                Plan::Deviation {
                    instance,
                    evaluator,
                    mixed,
                    sampler,
                }
            }
            ExperimentKind::LemmaRTail => Plan::LemmaR {
                q: config.q.expect("validated"),
                rank,
                measure: config.local_measure,
                threshold: lemma_r_threshold(rank as u64, config.k.expect("validated")),
            },
            ExperimentKind::HoeffdingTail => {
                let instance = load_instance(config, base_dir)?;
                check_q(config, &instance, MAX_TREE_QUBITS)?;
                need_decision(config, &instance)?;
                let tree = DecisionTree::build(&instance)?;
                let mixed = mixed_acceptance(&tree, &instance)?;
                Plan::Hoeffding {
                    instance,
                    tree,
                    mixed,
                    rank,
                    measure: config.local_measure,
                }
            }
            ExperimentKind::SurrogateCheck => {
                let instance = load_instance(config, base_dir)?;
                check_q(config, &instance, MAX_TREE_QUBITS)?;
                let exact = enumerate_histories(&instance, Source::MixedSurrogate)?;
                let mut index = HashMap::new();
                let mut expected = Vec::new();
                let mut accepting = Vec::new();
                for (i, h) in exact.histories.iter().enumerate() {
                    index.insert(h.outcomes(), i);
                    expected.push(h.probability.unwrap_or(0.0));
                    accepting.push(h.accepted());
                }
                let mixed = if instance.task == Task::Decision { exact.acceptance() } else { f64::NAN };
                Plan::Surrogate {
                    instance,
                    index,
                    expected,
                    accepting,
                    mixed,
                }
            }
            ExperimentKind::SamplingL1 => {
                let instance = load_instance(config, base_dir)?;
                check_q(config, &instance, MAX_TREE_QUBITS.min(MAX_STATE_QUBITS))?;
                if !matches!(instance.task, Task::Sampling { .. }) {
                    return Err(config_error("instance", "sampling-l1 needs a sampling instance"));
                }
                let tree = DecisionTree::build(&instance)?;
                let mixed = enumerate_on_tree(&tree, &instance, Source::MixedSurrogate, &Default::default())?
                    .output_distribution(instance.task.output_bits());
                Plan::SamplingL1 {
                    instance,
                    mixed,
                    mc_trials,
                }
            }
            ExperimentKind::PurityMean => Plan::Purity {
                spec: SchmidtEnsembleSpec {
                    q: config.q.expect("validated"),
                    rank,
                    local_measure: config.local_measure,
                    seed: config.master_seed,
                },
            },
        })
    }

    fn trial(&self, rng: &mut ChaCha20Rng) -> Result<TrialValue, String> {
        let err = |e: &dyn std::fmt::Display| e.to_string();
        match self {
            Plan::Deviation {
                instance,
                evaluator,
                mixed,
                sampler,
            } => {
                let state: PureState<f64> = match sampler {
                    StateSampler::Haar => sample_haar_state(instance.q(), rng).map_err(|e| err(&e))?,
                    StateSampler::Schmidt(spec) => sample_schmidt_state(spec, rng)
                        .and_then(|s| s.realize())
                        .map_err(|e| err(&e))?,
                };
                let c = evaluator.acceptance(instance, &state, rng).map_err(|e| err(&e))?;
                Ok(TrialValue {
                    statistic: (c - mixed).abs(),
                    value: Some(c),
                })
            }
            Plan::LemmaR { q, rank, measure, .. } => {
                let locals = sample_local_vectors::<f64, _>(*q, *rank, *measure, rng).map_err(|e| err(&e))?;
                Ok(TrialValue::plain(hermitian_lambda_max(&gram_matrix(&locals))))
            }
            Plan::Hoeffding {
                instance,
                tree,
                mixed,
                rank,
                measure,
            } => {
                let locals = sample_local_vectors::<f64, _>(instance.q(), *rank, *measure, rng).map_err(|e| err(&e))?;
                let mut sum = 0.0;
                for product in locals.iter() {
                    sum += product_acceptance(tree, instance, product).map_err(|e| err(&e))?;
                }
                let mean = sum / *rank as f64;
                Ok(TrialValue {
                    statistic: (mean - mixed).abs(),
                    value: Some(mean),
                })
            }
            Plan::Surrogate {
                instance,
                index,
                accepting,
                ..
            } => {
                let h = run_surrogate_trajectory(instance, rng).map_err(|e| err(&e))?;
                let i = *index
                    .get(&h.outcomes())
                    .ok_or_else(|| format!("history {:?} missing from the enumeration", h.outcomes()))?;
                Ok(TrialValue {
                    statistic: i as f64,
                    value: Some(f64::from(u8::from(accepting[i]))),
                })
            }
            Plan::SamplingL1 {
                instance,
                mixed,
                mc_trials,
            } => {
                let state: PureState<f64> = sample_haar_state(instance.q(), rng).map_err(|e| err(&e))?;
                let dist = if instance.q() <= MAX_EXACT_STATE_QUBITS {
                    crate::engine::output_distribution(instance, Source::State(&state))
                } else {
                    sample_output_distribution(instance, Source::State(&state), *mc_trials, rng)
                }
                .map_err(|e| err(&e))?;
                Ok(TrialValue::plain(l1_distance(&dist, mixed).map_err(|e| err(&e))?))
            }
            Plan::Purity { spec } => {
                let s = sample_schmidt_state::<f64, _>(spec, rng).map_err(|e| err(&e))?;
                Ok(TrialValue::plain(s.purity_tr_r2()))
            }
        }
    }

    fn bound(&self, config: &ExperimentConfig, eps: f64) -> Option<LogBound> {
        match self {
            Plan::Deviation {
                instance, sampler, ..
            } => match sampler {
                StateSampler::Haar => levy_log_tail(eps, 2f64.powi(instance.q() as i32), 1.0).ok(),
                StateSampler::Schmidt(spec) => thm2_log_bound(
                    eps,
                    instance.q() as u32,
                    instance.circuit.w() as u64,
                    instance.circuit.v() as u64,
                    spec.rank as u64,
                )
                .ok(),
            },
            Plan::Hoeffding { rank, .. } => hoeffding_log_bound(eps, *rank as u64).ok(),
            Plan::SamplingL1 { instance, .. } => sampling_log_bound(
                eps,
                instance.q() as u32,
                instance.circuit.w() as u64,
                instance.circuit.v() as u64,
                instance.task.output_bits() as u32,
            )
            .ok(),
            Plan::LemmaR { q, rank, .. } => lemma_r_log_bound(*q as u32, *rank as u64, config.k?).ok(),
            Plan::Surrogate { .. } | Plan::Purity { .. } => None,
        }
    }

    fn thresholds(&self, config: &ExperimentConfig) -> Vec<f64> {
        match self {
            Plan::LemmaR { threshold, .. } => vec![*threshold],
            Plan::Surrogate { .. } | Plan::Purity { .. } => vec![],
            _ => config.epsilons.clone(),
        }
    }

    fn summary(&self, trials: &[TrialRecord], summary: &mut BTreeMap<String, f64>) {
        let stats: Vec<f64> = trials.iter().filter_map(|t| t.statistic).collect();
        let values: Vec<f64> = trials.iter().filter_map(|t| t.value).collect();
        let mut put = |key: &str, x: f64| {
            if x.is_finite() {
                summary.insert(key.to_string(), x);
            }
        };
        if !values.is_empty() && !matches!(self, Plan::Surrogate { .. }) {
            let (m, se) = mean_and_stderr(&values);
            put("value_mean", m);
            put("value_stderr", se);
            put("value_std", sample_std(&values));
        }
        match self {
            Plan::Deviation {
                instance,
                evaluator,
                mixed,
                ..
            } => {
                put("mixed_acceptance", *mixed);
                put("trace_p", mixed * 2f64.powi(instance.q() as i32));
                put("evaluator", evaluator.label());
                if values.len() > 1 {
                    let (m, se) = mean_and_stderr(&values);
                    put("value_z_score", (m - mixed) / se);
                }
            }
            Plan::LemmaR { threshold, .. } => put("threshold", *threshold),
            Plan::Hoeffding { instance, mixed, .. } => {
                put("mixed_acceptance", *mixed);
                put("trace_p", mixed * 2f64.powi(instance.q() as i32));
            }
            Plan::Surrogate {
                expected,
                mixed,
                ..
            } => {
                let mut counts = vec![0u64; expected.len()];
                for &s in &stats {
                    counts[s as usize] += 1;
                }
                if let Some(chi) = chi_square_test(&counts, expected) {
                    put("chi_square", chi.statistic);
                    put("chi_square_dof", chi.dof as f64);
                    put("chi_square_p_value", chi.p_value);
                }
                put("histories", expected.len() as f64);
                if mixed.is_finite() && !values.is_empty() {
                    let n = values.len() as f64;
                    let p = values.iter().sum::<f64>() / n;
                    let se = (p * (1.0 - p) / n).sqrt();
                    put("mixed_acceptance", *mixed);
                    put("acceptance_frequency", p);
                    put("acceptance_stderr", se);
                    put("acceptance_z_score", (p - mixed) / se);
                }
            }
            Plan::SamplingL1 { instance, .. } => put("t", instance.task.output_bits() as f64),
            Plan::Purity { spec } => {
                let k = spec.rank as f64;
                let expected = k + k * (k - 1.0) * 2f64.powi(-(spec.q as i32));
                put("expected_mean", expected);
                if !stats.is_empty() {
                    let (m, se) = mean_and_stderr(&stats);
                    put("z_score", (m - expected) / se);
                }
            }
        }
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<TailReport, ExperimentError> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<TailReport, ExperimentError> {
    let plan = Plan::prepare(config, options.base_dir.as_deref())?;
    let workers = options.workers.or(config.workers);
    if workers == Some(0) {
        return Err(config_error("workers", "must be at least 1"));
    }
    let run_all = || {
        (0..config.trials)
            .into_par_iter()
            .map(|index| {
                let mut rng = trial_rng(config.master_seed, index);
                match plan.trial(&mut rng) {
                    Ok(v) => TrialRecord {
                        index,
                        statistic: Some(v.statistic),
                        value: v.value,
                        error: None,
                    },
                    Err(e) => TrialRecord {
                        index,
                        statistic: None,
                        value: None,
                        error: Some(e),
                    },
                }
            })
            .collect::<Vec<_>>()
    };
    let trials = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };
    Ok(assemble(config, &plan, trials))
}

fn assemble(config: &ExperimentConfig, plan: &Plan, trials: Vec<TrialRecord>) -> TailReport {
    let stats: Vec<f64> = trials.iter().filter_map(|t| t.statistic).collect();
    let n = stats.len() as u64;
    let rows = plan
        .thresholds(config)
        .into_iter()
        .map(|threshold| {
            let exceedances = stats.iter().filter(|&&s| s > threshold).count() as u64;
            let (frequency, ci) = if n == 0 {
                (0.0, crate::stats::Interval { lower: 0.0, upper: 1.0 })
            } else {
                (exceedances as f64 / n as f64, clopper_pearson(exceedances, n, CONFIDENCE))
            };
            TailRow {
                threshold,
                exceedances,
                successful_trials: n,
                frequency,
                ci_lower: ci.lower,
                ci_upper: ci.upper,
                bound: plan.bound(config, threshold),
            }
        })
        .collect();

    let mut summary = BTreeMap::new();
    summary.insert("successful_trials".into(), n as f64);
    summary.insert("failed_trials".into(), (trials.len() as u64 - n) as f64);
    if !stats.is_empty() && !matches!(plan, Plan::Surrogate { .. }) {
        let (m, se) = mean_and_stderr(&stats);
        for (key, x) in [
            ("mean", m),
            ("stderr", se),
            ("std", sample_std(&stats)),
            ("max", stats.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        ] {
            if x.is_finite() {
                summary.insert(key.into(), x);
            }
        }
    }
    plan.summary(&trials, &mut summary);

    let timestamp = config.record_timestamp.then(|| {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("unix:{secs}")
    });
    TailReport {
        schema: REPORT_SCHEMA.into(),
        config: config.clone(),
        statistic: config.kind.statistic_name().into(),
        trials,
        rows,
        summary,
        environment: Environment {
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: config.master_seed,
            timestamp,
        },
    }
}

/// One line of the bound comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub threshold: f64,
    pub empirical: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub bound_ln: Option<f64>,
    pub bound_probability: Option<f64>,
    /// No bound applies, or the bound is at least 1.
    pub vacuous: bool,
    /// The lower confidence limit lies above a non-vacuous bound.
    pub violation: bool,
}

pub fn compare_with_bounds(report: &TailReport) -> Result<Vec<ComparisonRow>, ExperimentError> {
    if !report.config.kind.has_bound() {
        return Err(ExperimentError::NoBound(report.config.kind));
    }
    if report.rows.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    Ok(report
        .rows
        .iter()
        .map(|r| {
            let vacuous = r.bound.is_none_or(|b| b.vacuous);
            ComparisonRow {
                threshold: r.threshold,
                empirical: r.frequency,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                bound_ln: r.bound.map(|b| b.ln),
                bound_probability: r.bound.map(|b| b.probability),
                vacuous,
                violation: !vacuous && r.ci_lower > r.bound.map_or(1.0, |b| b.probability),
            }
        })
        .collect())
}

/// Companion CSV path: the report path with extension `csv`.
pub fn csv_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

const CSV_HEADER: [&str; 14] = [
    "section",
    "index",
    "threshold",
    "statistic",
    "value",
    "error",
    "exceedances",
    "successful_trials",
    "frequency",
    "ci_lower",
    "ci_upper",
    "bound_ln",
    "bound_probability",
    "vacuous",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn write_csv<W: std::io::Write>(report: &TailReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for t in &report.trials {
        w.write_record([
            "trial".to_string(),
            t.index.to_string(),
            String::new(),
            opt(t.statistic),
            opt(t.value),
            t.error.clone().unwrap_or_default(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    for (i, r) in report.rows.iter().enumerate() {
        w.write_record([
            "tail".to_string(),
            i.to_string(),
            format!("{:e}", r.threshold),
            String::new(),
            String::new(),
            String::new(),
            r.exceedances.to_string(),
            r.successful_trials.to_string(),
            format!("{:e}", r.frequency),
            format!("{:e}", r.ci_lower),
            format!("{:e}", r.ci_upper),
            opt(r.bound.map(|b| b.ln)),
            opt(r.bound.map(|b| b.probability)),
            r.bound.map_or(String::new(), |b| b.vacuous.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the JSON report to `path` and the CSV table next to it; returns the CSV path.
pub fn save_report(report: &TailReport, path: &Path) -> Result<PathBuf, ExperimentError> {
    fs::write(path, report.to_json()).map_err(|e| io_error(path, e))?;
    let csv = csv_path(path);
    let file = fs::File::create(&csv).map_err(|e| io_error(&csv, e))?;
    write_csv(report, std::io::BufWriter::new(file)).map_err(|e| io_error(&csv, e))?;
    Ok(csv)
}

pub fn parse_report(text: &str) -> Result<TailReport, ExperimentError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ExperimentError::Json(e.to_string()))?;
    let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
    if schema != REPORT_SCHEMA {
        return Err(ExperimentError::SchemaMismatch { found: schema.into() });
    }
    serde_json::from_value(value).map_err(|e| ExperimentError::Json(e.to_string()))
}

pub fn load_report(path: &Path) -> Result<TailReport, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_report(&text)
}
