//! Execution of AMBQC instances.
//!
//! Two independent paths are provided. Trajectories drive the control circuit step by step
//! and collapse a state vector. The exact path first unrolls the controller into a
//! [`DecisionTree`] (one node per reachable control run) and then sums over its leaves, either
//! with a state vector, with the maximally mixed surrogate, or with a product state. The same
//! tree assembles the accepting operator `P` in `O(4^q)` time by inserting one single-qubit
//! factor per level.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{check_enumerable, ControlDecision, ControlError, Step};
use crate::instance::{AmbqcInstance, Task};
use crate::scalar::{cone, czero, Complex, Real};
use crate::statevector::{DenseOperator, LocalOperator, PureState, StateError};

/// Largest `q` for which [`build_accepting_operator`] forms a dense matrix.
pub const MAX_DENSE_OPERATOR_QUBITS: usize = 10;
/// Largest `q` for the diagonal accepting operator.
pub const MAX_DIAGONAL_OPERATOR_QUBITS: usize = 20;
/// Joint probability below which a branch of the exact state enumeration is dropped.
pub const PRUNE_PROBABILITY: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("incomplete model: qubit {qubit} requested again after history {witness:?}")]
    IncompleteModel { qubit: usize, witness: Vec<Step> },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("state has {found} qubits but the instance has q = {expected}")]
    StateSize { expected: usize, found: usize },
    #[error("dense accepting operator is limited to q <= {max}, got q = {q}")]
    DenseLimit { q: usize, max: usize },
    #[error("the diagonal accepting operator needs a POVM table of diagonal elements")]
    NotDiagonal,
    #[error("acceptance needs a decision task, the instance has a sampling task")]
    NotDecision,
    #[error("at least one trial is required")]
    NoTrials,
    #[error("product state has {found} factors, expected {expected}")]
    ProductSize { expected: usize, found: usize },
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("Kraus rule has no operator for povm {povm}, outcome {outcome}")]
    MissingKraus { povm: usize, outcome: usize },
}

/// One run of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Step `k` of the run is `steps[k]`.
    pub steps: Vec<Step>,
    /// The `y` bit for a decision task; the `t`-bit sample (bit `i` from `output_wires[i]`)
    /// for a sampling task.
    pub output: u64,
    #[serde(default)]
    pub probability: Option<f64>,
}

impl History {
    pub fn accepted(&self) -> bool {
        self.output == 1
    }

    pub fn outcomes(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.outcome).collect()
    }
}

/// Where measurement statistics come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a, T: Real> {
    State(&'a PureState<T>),
    /// The maximally mixed state `2^{-q} 1`: outcomes independent with probability `tr L / 2`.
    MixedSurrogate,
    /// A product state given by its factors, qubit 1 first.
    Product(&'a [[Complex<T>; 2]]),
}

/// Post-measurement operator used by the exact state enumeration.
#[derive(Clone, Debug, Default)]
pub enum KrausRule<T: Real> {
    /// `sqrt(L_mu)`.
    #[default]
    Canonical,
    /// `U_{alpha,mu} sqrt(L_mu)` with `unitaries[alpha][mu]` unitary.
    Rotated(Vec<Vec<LocalOperator<T>>>),
}

impl<T: Real> KrausRule<T> {
    fn operator(&self, instance: &AmbqcInstance<T>, povm: usize, outcome: usize) -> Result<LocalOperator<T>, EngineError> {
        let root = instance.povm_table.povms()[povm].kraus(outcome);
        match self {
            KrausRule::Canonical => Ok(root),
            KrausRule::Rotated(u) => u
                .get(povm)
                .and_then(|row| row.get(outcome))
                .map(|u| u.mul(&root))
                .ok_or(EngineError::MissingKraus { povm, outcome }),
        }
    }
}

fn check_state<T: Real>(instance: &AmbqcInstance<T>, state: &PureState<T>) -> Result<(), EngineError> {
    if state.num_qubits() != instance.q() {
        return Err(EngineError::StateSize {
            expected: instance.q(),
            found: state.num_qubits(),
        });
    }
    Ok(())
}

fn check_product<T: Real>(instance: &AmbqcInstance<T>, factors: &[[Complex<T>; 2]]) -> Result<(), EngineError> {
    if factors.len() != instance.q() {
        return Err(EngineError::ProductSize {
            expected: instance.q(),
            found: factors.len(),
        });
    }
    Ok(())
}

/// Control run for step `steps.len()`, rejecting repeated qubits.
fn next_measurement<T: Real>(
    instance: &AmbqcInstance<T>,
    steps: &[Step],
    outcomes: &[u32],
) -> Result<(usize, usize), EngineError> {
    match instance.circuit.run(&instance.input_x, steps.len(), outcomes)? {
        ControlDecision::Measure { qubit, povm } => {
            if steps.iter().any(|s| s.qubit == qubit) {
                return Err(EngineError::IncompleteModel {
                    qubit,
                    witness: steps.to_vec(),
                });
            }
            Ok((qubit, povm))
        }
        ControlDecision::Output { .. } => unreachable!("control only outputs once count = q"),
    }
}

/// Final control run: the `y` bit or the sampled output bits.
fn final_output<T: Real>(instance: &AmbqcInstance<T>, outcomes: &[u32]) -> Result<u64, EngineError> {
    let bits = instance.circuit.execute(&instance.input_x, instance.q(), outcomes)?;
    Ok(match &instance.task {
        Task::Decision => u64::from(bits[instance.circuit.layout().y.offset]),
        Task::Sampling { output_wires, .. } => output_wires
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &w)| acc | (u64::from(bits[w]) << i)),
    })
}

fn sample_index<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// One Monte Carlo run on `state`: measure, sample, collapse, until the controller outputs.
pub fn run_trajectory<T: Real, R: Rng + ?Sized>(
    instance: &AmbqcInstance<T>,
    state: &PureState<T>,
    rng: &mut R,
) -> Result<History, EngineError> {
    check_state(instance, state)?;
    let q = instance.q();
    let mut current = state.clone();
    let mut steps = Vec::with_capacity(q);
    let mut outcomes = Vec::with_capacity(q);
    let mut probability = 1.0;
    for _ in 0..q {
        let (qubit, povm_index) = next_measurement(instance, &steps, &outcomes)?;
        let povm = &instance.povm_table.povms()[povm_index];
        let probs = current.outcome_probabilities(qubit, povm)?;
        let outcome = sample_index(&probs, rng);
        let (next, p) = current.collapse(qubit, povm, outcome)?;
        current = next;
        probability *= p.as_f64();
        steps.push(Step {
            qubit,
            povm: povm_index,
            outcome,
        });
        outcomes.push(outcome as u32);
    }
    let output = final_output(instance, &outcomes)?;
    Ok(History {
        steps,
        output,
        probability: Some(probability),
    })
}

/// One run against the maximally mixed state: each outcome is an independent draw from
/// `tr L_mu / 2`, no state involved.
pub fn run_surrogate_trajectory<T: Real, R: Rng + ?Sized>(
    instance: &AmbqcInstance<T>,
    rng: &mut R,
) -> Result<History, EngineError> {
    let q = instance.q();
    let mut steps = Vec::with_capacity(q);
    let mut outcomes = Vec::with_capacity(q);
    let mut probability = 1.0;
    for _ in 0..q {
        let (qubit, povm_index) = next_measurement(instance, &steps, &outcomes)?;
        let probs = instance.povm_table.povms()[povm_index].mixed_outcome_distribution();
        let outcome = sample_index(&probs, rng);
        probability *= probs[outcome].as_f64();
        steps.push(Step {
            qubit,
            povm: povm_index,
            outcome,
        });
        outcomes.push(outcome as u32);
    }
    let output = final_output(instance, &outcomes)?;
    Ok(History {
        steps,
        output,
        probability: Some(probability),
    })
}

/// Trajectory for any source; product states are expanded to a state vector.
pub fn run_source_trajectory<T: Real, R: Rng + ?Sized>(
    instance: &AmbqcInstance<T>,
    source: Source<'_, T>,
    rng: &mut R,
) -> Result<History, EngineError> {
    match source {
        Source::State(s) => run_trajectory(instance, s, rng),
        Source::MixedSurrogate => run_surrogate_trajectory(instance, rng),
        Source::Product(f) => {
            check_product(instance, f)?;
            run_trajectory(instance, &PureState::product(f), rng)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub accepted: u64,
    pub trials: u64,
}

impl AcceptanceEstimate {
    pub fn from_counts(accepted: u64, trials: u64) -> Self {
        let p = accepted as f64 / trials as f64;
        Self {
            p_hat: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            accepted,
            trials,
        }
    }
}

/// Fraction of `trials` runs that accept, with the binomial standard error.
pub fn estimate_acceptance<T: Real, R: Rng + ?Sized>(
    instance: &AmbqcInstance<T>,
    source: Source<'_, T>,
    trials: u64,
    rng: &mut R,
) -> Result<AcceptanceEstimate, EngineError> {
    if trials == 0 {
        return Err(EngineError::NoTrials);
    }
    if instance.task != Task::Decision {
        return Err(EngineError::NotDecision);
    }
    let product_state;
    let source = match source {
        Source::Product(f) => {
            check_product(instance, f)?;
            product_state = PureState::product(f);
            Source::State(&product_state)
        }
        s => s,
    };
    let mut accepted = 0;
    for _ in 0..trials {
        if run_source_trajectory(instance, source, rng)?.accepted() {
            accepted += 1;
        }
    }
    Ok(AcceptanceEstimate::from_counts(accepted, trials))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Node {
    Leaf { output: u64 },
    Measure { qubit: usize, povm: usize, first_child: usize, arity: usize },
}

/// Every reachable control decision of an instance, as a tree over outcome sequences.
///
/// Construction runs the controller once per node and fails with
/// [`EngineError::IncompleteModel`] on the first history that repeats a qubit.
#[derive(Clone, Debug)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    q: usize,
    leaves: usize,
}

impl DecisionTree {
    pub fn build<T: Real>(instance: &AmbqcInstance<T>) -> Result<Self, EngineError> {
        let q = instance.q();
        check_enumerable(instance.povm_table.max_arity(), q)?;
        let mut tree = Self {
            nodes: vec![Node::Leaf { output: 0 }],
            q,
            leaves: 0,
        };
        let mut steps = Vec::with_capacity(q);
        let mut outcomes = Vec::with_capacity(q);
        tree.expand(instance, 0, &mut steps, &mut outcomes)?;
        Ok(tree)
    }

    fn expand<T: Real>(
        &mut self,
        instance: &AmbqcInstance<T>,
        index: usize,
        steps: &mut Vec<Step>,
        outcomes: &mut Vec<u32>,
    ) -> Result<(), EngineError> {
        if steps.len() == self.q {
            self.nodes[index] = Node::Leaf {
                output: final_output(instance, outcomes)?,
            };
            self.leaves += 1;
            return Ok(());
        }
        let (qubit, povm) = next_measurement(instance, steps, outcomes)?;
        let arity = instance.povm_table.povms()[povm].arity();
        let first_child = self.nodes.len();
        self.nodes[index] = Node::Measure {
            qubit,
            povm,
            first_child,
            arity,
        };
        self.nodes.extend((0..arity).map(|_| Node::Leaf { output: 0 }));
        for outcome in 0..arity {
            steps.push(Step { qubit, povm, outcome });
            outcomes.push(outcome as u32);
            self.expand(instance, first_child + outcome, steps, outcomes)?;
            steps.pop();
            outcomes.pop();
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.q
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Calls `visit(steps, output)` for every leaf, in lexicographic outcome order.
    pub fn for_each_leaf(&self, mut visit: impl FnMut(&[Step], u64)) {
        let mut steps = Vec::with_capacity(self.q);
        self.visit_from(0, &mut steps, &mut visit);
    }

    fn visit_from(&self, index: usize, steps: &mut Vec<Step>, visit: &mut impl FnMut(&[Step], u64)) {
        match self.nodes[index] {
            Node::Leaf { output } => visit(steps, output),
            Node::Measure {
                qubit,
                povm,
                first_child,
                arity,
            } => {
                for outcome in 0..arity {
                    steps.push(Step { qubit, povm, outcome });
                    self.visit_from(first_child + outcome, steps, visit);
                    steps.pop();
                }
            }
        }
    }

    /// Probability of `event(output)` when each outcome is independent with probability
    /// `weight(qubit, povm, outcome)`. Children are stored after their parent, so one reverse
    /// pass over the nodes contracts the tree.
    pub fn event_probability_local(
        &self,
        weight: impl Fn(usize, usize, usize) -> f64,
        event: impl Fn(u64) -> bool,
    ) -> f64 {
        let mut value = vec![0.0; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            value[i] = match self.nodes[i] {
                Node::Leaf { output } => f64::from(u8::from(event(output))),
                Node::Measure {
                    qubit,
                    povm,
                    first_child,
                    arity,
                } => (0..arity).map(|m| weight(qubit, povm, m) * value[first_child + m]).sum(),
            };
        }
        value[0]
    }

    /// Leaf probabilities when every outcome is independent with weight `weight(step)`.
    fn local_weights(&self, weight: &dyn Fn(&Step) -> f64) -> Vec<History> {
        let mut out = Vec::with_capacity(self.leaves);
        self.for_each_leaf(|steps, output| {
            let p = steps.iter().map(weight).product();
            out.push(History {
                steps: steps.to_vec(),
                output,
                probability: Some(p),
            });
        });
        out
    }

    /// Leaf probabilities on a state vector, carrying unnormalized post-measurement vectors.
    fn state_weights<T: Real>(
        &self,
        instance: &AmbqcInstance<T>,
        state: &PureState<T>,
        kraus: &KrausRule<T>,
    ) -> Result<Vec<History>, EngineError> {
        let mut out = Vec::with_capacity(self.leaves);
        let mut steps = Vec::with_capacity(self.q);
        self.state_from(0, instance, state, kraus, &mut steps, &mut out)?;
        Ok(out)
    }

    fn state_from<T: Real>(
        &self,
        index: usize,
        instance: &AmbqcInstance<T>,
        vector: &PureState<T>,
        kraus: &KrausRule<T>,
        steps: &mut Vec<Step>,
        out: &mut Vec<History>,
    ) -> Result<(), EngineError> {
        match self.nodes[index] {
            Node::Leaf { output } => out.push(History {
                steps: steps.clone(),
                output,
                probability: Some(vector.norm_sqr().as_f64()),
            }),
            Node::Measure {
                qubit,
                povm,
                first_child,
                arity,
            } => {
                for outcome in 0..arity {
                    let k = kraus.operator(instance, povm, outcome)?;
                    let next = vector.apply_single_qubit(qubit, &k)?;
                    if next.norm_sqr().as_f64() <= PRUNE_PROBABILITY {
                        continue;
                    }
                    steps.push(Step { qubit, povm, outcome });
                    self.state_from(first_child + outcome, instance, &next, kraus, steps, out)?;
                    steps.pop();
                }
            }
        }
        Ok(())
    }

    /// Builds `sum_{leaves with accept(output)} (x)_k L_{m_k}` on the measured qubits.
    ///
    /// `combine(local, child, position)` inserts the single-qubit factor `local` at tensor
    /// position `position` of `child`; leaves map to `unit`.
    fn assemble<M, F, A>(&self, index: usize, remaining: &[usize], accept: &A, unit: &M, combine: &F) -> Option<M>
    where
        M: Clone + AddAssign,
        F: Fn(usize, usize, &M, usize) -> M,
        A: Fn(u64) -> bool,
    {
        match self.nodes[index] {
            Node::Leaf { output } => accept(output).then(|| unit.clone()),
            Node::Measure {
                qubit,
                povm,
                first_child,
                arity,
            } => {
                let position = remaining.iter().position(|&l| l == qubit).expect("complete tree");
                let rest: Vec<usize> = remaining.iter().copied().filter(|&l| l != qubit).collect();
                let mut total: Option<M> = None;
                for outcome in 0..arity {
                    if let Some(child) = self.assemble(first_child + outcome, &rest, accept, unit, combine) {
                        let term = combine(povm, outcome, &child, position);
                        match &mut total {
                            Some(t) => t.add_assign(&term),
                            None => total = Some(term),
                        }
                    }
                }
                total
            }
        }
    }
}

/// In-place addition for the operator representations used by [`DecisionTree::assemble`].
trait AddAssign {
    fn add_assign(&mut self, other: &Self);
}

impl<T: Real> AddAssign for DMatrix<Complex<T>> {
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
}

impl<T: Real> AddAssign for Vec<T> {
    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b;
        }
    }
}

/// Result of an exact enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    /// Histories with nonzero probability, in lexicographic outcome order.
    pub histories: Vec<History>,
    pub total_probability: f64,
}

impl Enumeration {
    /// Probability that the output equals 1; for a decision task this is `C`.
    pub fn acceptance(&self) -> f64 {
        self.histories
            .iter()
            .filter(|h| h.accepted())
            .map(|h| h.probability.unwrap_or(0.0))
            .sum()
    }

    pub fn as_map(&self) -> BTreeMap<Vec<Step>, f64> {
        self.histories
            .iter()
            .map(|h| (h.steps.clone(), h.probability.unwrap_or(0.0)))
            .collect()
    }

    /// Distribution over the `bits`-bit output.
    pub fn output_distribution(&self, bits: usize) -> Vec<f64> {
        let mut d = vec![0.0; 1 << bits];
        for h in &self.histories {
            d[h.output as usize] += h.probability.unwrap_or(0.0);
        }
        d
    }
}

/// Exact history distribution with the canonical Kraus operators.
pub fn enumerate_histories<T: Real>(instance: &AmbqcInstance<T>, source: Source<'_, T>) -> Result<Enumeration, EngineError> {
    enumerate_histories_with(instance, source, &KrausRule::Canonical)
}

/// Exact history distribution with a chosen Kraus rule (only state sources use it).
pub fn enumerate_histories_with<T: Real>(
    instance: &AmbqcInstance<T>,
    source: Source<'_, T>,
    kraus: &KrausRule<T>,
) -> Result<Enumeration, EngineError> {
    let tree = DecisionTree::build(instance)?;
    enumerate_on_tree(&tree, instance, source, kraus)
}

/// Enumeration over a prebuilt tree; lets callers reuse one tree for many sources.
pub fn enumerate_on_tree<T: Real>(
    tree: &DecisionTree,
    instance: &AmbqcInstance<T>,
    source: Source<'_, T>,
    kraus: &KrausRule<T>,
) -> Result<Enumeration, EngineError> {
    let povms = instance.povm_table.povms();
    let histories = match source {
        Source::State(state) => {
            check_state(instance, state)?;
            tree.state_weights(instance, state, kraus)?
        }
        Source::MixedSurrogate => {
            let mixed: Vec<Vec<f64>> = povms
                .iter()
                .map(|p| p.mixed_outcome_distribution().iter().map(|x| x.as_f64()).collect())
                .collect();
            tree.local_weights(&|s: &Step| mixed[s.povm][s.outcome])
        }
        Source::Product(factors) => {
            check_product(instance, factors)?;
            tree.local_weights(&|s: &Step| {
                povms[s.povm].element(s.outcome).sandwich(factors[s.qubit - 1]).re.as_f64()
            })
        }
    };
    let histories: Vec<History> = histories
        .into_iter()
        .filter(|h| h.probability.unwrap_or(0.0) > 0.0)
        .collect();
    let total_probability = histories.iter().map(|h| h.probability.unwrap_or(0.0)).sum();
    Ok(Enumeration {
        histories,
        total_probability,
    })
}

/// Exact `C` for a decision task.
pub fn exact_acceptance<T: Real>(instance: &AmbqcInstance<T>, source: Source<'_, T>) -> Result<f64, EngineError> {
    if instance.task != Task::Decision {
        return Err(EngineError::NotDecision);
    }
    Ok(enumerate_histories(instance, source)?.acceptance())
}

/// `<phi|P|phi>` for a product state `phi` (factors qubit 1 first), contracting the tree once.
pub fn product_acceptance<T: Real>(
    tree: &DecisionTree,
    instance: &AmbqcInstance<T>,
    factors: &[[Complex<T>; 2]],
) -> Result<f64, EngineError> {
    decision_only(instance)?;
    check_product(instance, factors)?;
    let povms = instance.povm_table.povms();
    // weights[(qubit - 1)][povm][outcome]
    let weights: Vec<Vec<Vec<f64>>> = factors
        .iter()
        .map(|f| {
            povms
                .iter()
                .map(|p| p.elements().iter().map(|l| l.sandwich(*f).re.as_f64()).collect())
                .collect()
        })
        .collect();
    Ok(tree.event_probability_local(|qubit, povm, m| weights[qubit - 1][povm][m], |y| y == 1))
}

/// `C(2^{-q} 1)` from the tree, without listing histories.
pub fn mixed_acceptance<T: Real>(tree: &DecisionTree, instance: &AmbqcInstance<T>) -> Result<f64, EngineError> {
    decision_only(instance)?;
    let mixed: Vec<Vec<f64>> = instance
        .povm_table
        .povms()
        .iter()
        .map(|p| p.mixed_outcome_distribution().iter().map(|x| x.as_f64()).collect())
        .collect();
    Ok(tree.event_probability_local(|_, povm, m| mixed[povm][m], |y| y == 1))
}

/// `P` (accepting) and `Q` (rejecting), each summed from its own histories.
#[derive(Clone, Debug)]
pub struct AcceptingOperators<T: Real> {
    pub accept: DenseOperator<T>,
    pub reject: DenseOperator<T>,
}

impl<T: Real> AcceptingOperators<T> {
    /// `max |P + Q - 1|` entrywise.
    pub fn resolution_error(&self) -> T {
        let mut sum = self.accept.clone();
        sum.add_assign(&self.reject);
        let id = DenseOperator::identity(sum.num_qubits()).expect("same size as P");
        sum.max_abs_diff(&id)
    }

    /// `C(2^{-q} 1) = 2^{-q} tr P`.
    pub fn mixed_acceptance(&self) -> T {
        self.accept.trace().re / T::from_usize(self.accept.dim()).unwrap()
    }

    /// `C(Psi) = <Psi|P|Psi>`.
    pub fn acceptance(&self, state: &PureState<T>) -> Result<T, EngineError> {
        Ok(self.accept.expectation(state)?.re)
    }
}

fn decision_only<T: Real>(instance: &AmbqcInstance<T>) -> Result<(), EngineError> {
    if instance.task != Task::Decision {
        return Err(EngineError::NotDecision);
    }
    Ok(())
}

/// Inserts the 2x2 factor `l` at tensor position `pos` of the `dim x dim` matrix `child`.
fn insert_factor<T: Real>(l: &LocalOperator<T>, child: &DMatrix<Complex<T>>, pos: usize, remaining: usize) -> DMatrix<Complex<T>> {
    let child_dim = child.nrows();
    let dim = child_dim * 2;
    // position 0 is the most significant of the `remaining` qubits
    let stride = 1usize << (remaining - 1 - pos);
    let split = |i: usize| -> (usize, usize) {
        let bit = (i / stride) & 1;
        let high = i / (2 * stride);
        let low = i % stride;
        (bit, high * stride + low)
    };
    DMatrix::from_fn(dim, dim, |i, j| {
        let (bi, ri) = split(i);
        let (bj, rj) = split(j);
        let f = l.m[bi][bj];
        if f == czero() {
            czero()
        } else {
            f * child[(ri, rj)]
        }
    })
}

fn event_operator<T: Real>(
    tree: &DecisionTree,
    instance: &AmbqcInstance<T>,
    accept: impl Fn(u64) -> bool,
) -> Result<DenseOperator<T>, EngineError> {
    let q = tree.num_qubits();
    let povms = instance.povm_table.povms();
    let all: Vec<usize> = (1..=q).collect();
    let unit = DMatrix::from_element(1, 1, cone::<T>());
    let combine = |povm: usize, outcome: usize, child: &DMatrix<Complex<T>>, pos: usize| {
        let remaining = child.nrows().trailing_zeros() as usize + 1;
        insert_factor(povms[povm].element(outcome), child, pos, remaining)
    };
    let matrix = tree
        .assemble(0, &all, &accept, &unit, &combine)
        .unwrap_or_else(|| DMatrix::from_element(1 << q, 1 << q, czero()));
    Ok(DenseOperator::from_matrix(matrix)?)
}

/// The accepting operator `P = sum_{accepting histories} (x)_k (L^{(alpha_k)}_{m_k})^{l_k}`
/// together with the rejecting operator `Q`.
pub fn build_accepting_operator<T: Real>(instance: &AmbqcInstance<T>) -> Result<AcceptingOperators<T>, EngineError> {
    decision_only(instance)?;
    let q = instance.q();
    if q > MAX_DENSE_OPERATOR_QUBITS {
        return Err(EngineError::DenseLimit {
            q,
            max: MAX_DENSE_OPERATOR_QUBITS,
        });
    }
    let tree = DecisionTree::build(instance)?;
    Ok(AcceptingOperators {
        accept: event_operator(&tree, instance, |y| y == 1)?,
        reject: event_operator(&tree, instance, |y| y != 1)?,
    })
}

/// Operator for the event "sampled output equals `value`", for sampling tasks at small `q`.
pub fn build_output_operator<T: Real>(instance: &AmbqcInstance<T>, value: u64) -> Result<DenseOperator<T>, EngineError> {
    let q = instance.q();
    if q > MAX_DENSE_OPERATOR_QUBITS {
        return Err(EngineError::DenseLimit {
            q,
            max: MAX_DENSE_OPERATOR_QUBITS,
        });
    }
    let tree = DecisionTree::build(instance)?;
    event_operator(&tree, instance, |o| o == value)
}

/// Diagonal of `P` when every POVM element is diagonal in the computational basis.
///
/// Reaches `q = 20` since only `2^q` numbers are stored.
pub fn build_accepting_diagonal<T: Real>(instance: &AmbqcInstance<T>) -> Result<Vec<T>, EngineError> {
    decision_only(instance)?;
    let q = instance.q();
    if q > MAX_DIAGONAL_OPERATOR_QUBITS {
        return Err(EngineError::DenseLimit {
            q,
            max: MAX_DIAGONAL_OPERATOR_QUBITS,
        });
    }
    if !instance.povm_table.is_diagonal(T::lit(1e-14)) {
        return Err(EngineError::NotDiagonal);
    }
    let tree = DecisionTree::build(instance)?;
    let povms = instance.povm_table.povms();
    let all: Vec<usize> = (1..=q).collect();
    let combine = |povm: usize, outcome: usize, child: &Vec<T>, pos: usize| {
        let l = povms[povm].element(outcome);
        let remaining = child.len().trailing_zeros() as usize + 1;
        let stride = 1usize << (remaining - 1 - pos);
        (0..child.len() * 2)
            .map(|i| {
                let bit = (i / stride) & 1;
                let rest = (i / (2 * stride)) * stride + i % stride;
                l.m[bit][bit].re * child[rest]
            })
            .collect::<Vec<T>>()
    };
    Ok(tree
        .assemble(0, &all, &|y| y == 1, &vec![T::one()], &combine)
        .unwrap_or_else(|| vec![T::zero(); 1 << q]))
}

/// `<Psi|P|Psi>` for a diagonal `P`.
pub fn diagonal_expectation<T: Real>(diagonal: &[T], state: &PureState<T>) -> T {
    diagonal
        .iter()
        .zip(state.amplitudes())
        .fold(T::zero(), |acc, (d, a)| acc + *d * a.norm_sqr())
}

/// Exact output distribution over the `t` output bits (`t = 1` for a decision task).
pub fn output_distribution<T: Real>(instance: &AmbqcInstance<T>, source: Source<'_, T>) -> Result<Vec<f64>, EngineError> {
    Ok(enumerate_histories(instance, source)?.output_distribution(instance.task.output_bits()))
}

/// Empirical output distribution from `trials` trajectories, for instances too large to enumerate.
pub fn sample_output_distribution<T: Real, R: Rng + ?Sized>(
    instance: &AmbqcInstance<T>,
    source: Source<'_, T>,
    trials: u64,
    rng: &mut R,
) -> Result<Vec<f64>, EngineError> {
    if trials == 0 {
        return Err(EngineError::NoTrials);
    }
    let mut counts = vec![0u64; 1 << instance.task.output_bits()];
    for _ in 0..trials {
        counts[run_source_trajectory(instance, source, rng)?.output as usize] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

/// `sum_y |d1[y] - d2[y]|`.
pub fn l1_distance(d1: &[f64], d2: &[f64]) -> Result<f64, EngineError> {
    if d1.len() != d2.len() {
        return Err(EngineError::LengthMismatch(d1.len(), d2.len()));
    }
    Ok(d1.iter().zip(d2).map(|(a, b)| (a - b).abs()).sum())
}

/// Total variation distance, half the l1 distance.
pub fn total_variation(d1: &[f64], d2: &[f64]) -> Result<f64, EngineError> {
    Ok(l1_distance(d1, d2)? / 2.0)
}
