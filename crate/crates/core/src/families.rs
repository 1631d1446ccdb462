//! Ready-made control circuits: sweeps, fixed-order permutations and random complete controllers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::control::{ControlCircuit, Gate, LayoutRequirements, Region, RegisterLayout};
use crate::instance::{AmbqcInstance, InstanceError, InstanceErrorKind, Task};
use crate::povm::{builtin, PovmTable};
use crate::scalar::Real;

/// How the output bit `y` is computed from the outcome register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    Reject,
    Accept,
    /// XOR of the low bit of every outcome.
    Parity,
    /// Complement of [`Acceptance::Parity`]: accepts when the low bits have even parity.
    EvenParity,
    /// Low bit of outcome slot `j` (0-based).
    Outcome(usize),
}

fn invariant(location: &str, msg: impl Into<String>) -> InstanceError {
    InstanceError {
        location: location.into(),
        kind: InstanceErrorKind::Invariant(msg.into()),
    }
}

/// `k <- k + 1` on a little-endian register, with `k.width - 2` zeroed ancillas for carries.
pub fn increment_gates(k: Region, ancillas: &[usize]) -> Vec<Gate> {
    let kw = k.width;
    let kbit = |j: usize| k.offset + j;
    let needed = kw.saturating_sub(2);
    assert!(ancillas.len() >= needed, "increment needs {needed} ancillas");
    let mut gates = Vec::new();
    // carry c_j = k_0 & ... & k_{j-1}; c_1 is k_0 itself, c_j (j >= 2) lives in ancillas[j - 2]
    let carry = |j: usize| if j == 1 { kbit(0) } else { ancillas[j - 2] };
    for j in 2..kw {
        gates.push(Gate::toffoli(carry(j - 1), kbit(j - 1), carry(j)));
    }
    for j in (1..kw).rev() {
        gates.push(Gate::cnot(carry(j), kbit(j)));
    }
    if kw > 0 {
        gates.push(Gate::not(kbit(0)));
    }
    gates
}

fn acceptance_gates(layout: &RegisterLayout, q: usize, b: usize, acceptance: Acceptance) -> Vec<Gate> {
    let y = layout.y.offset;
    let slot = |j: usize| layout.m.offset + j * b;
    match acceptance {
        Acceptance::Reject => vec![],
        Acceptance::Accept => vec![Gate::not(y)],
        Acceptance::Parity => (0..q).map(|j| Gate::cnot(slot(j), y)).collect(),
        Acceptance::EvenParity => {
            let mut gates: Vec<Gate> = (0..q).map(|j| Gate::cnot(slot(j), y)).collect();
            gates.push(Gate::not(y));
            gates
        }
        Acceptance::Outcome(j) => vec![Gate::cnot(slot(j), y)],
    }
}

fn requirements<T: Real>(q: usize, table: &PovmTable<T>) -> LayoutRequirements {
    LayoutRequirements {
        n: 0,
        q,
        outcome_bits: table.outcome_bits(),
        num_povms: table.len(),
    }
}

fn assemble<T: Real>(
    layout: RegisterLayout,
    gates: Vec<Gate>,
    q: usize,
    table: PovmTable<T>,
    task: Task,
    v: Option<usize>,
) -> Result<AmbqcInstance<T>, InstanceError> {
    let v = v.unwrap_or(gates.len());
    let circuit = ControlCircuit::new(
        layout,
        gates,
        0,
        q,
        v,
        layout.span(),
        table.outcome_bits(),
        table.len(),
    )
    .map_err(|e| InstanceError {
        location: "circuit".into(),
        kind: e.into(),
    })?;
    AmbqcInstance::new(circuit, table, vec![], task)
}

/// Measures qubits `1, 2, ..., q` in order with POVM 0, then computes `y` per `acceptance`.
pub fn sweep_instance<T: Real>(
    q: usize,
    table: PovmTable<T>,
    acceptance: Acceptance,
) -> Result<AmbqcInstance<T>, InstanceError> {
    sweep_with_task(q, table, acceptance, None)
}

/// Sweep whose final run reports the low bits of the first `t` outcomes as a sample.
pub fn sampling_sweep_instance<T: Real>(
    q: usize,
    table: PovmTable<T>,
    t: usize,
) -> Result<AmbqcInstance<T>, InstanceError> {
    sweep_with_task(q, table, Acceptance::Reject, Some(t))
}

fn sweep_with_task<T: Real>(
    q: usize,
    table: PovmTable<T>,
    acceptance: Acceptance,
    sample_bits: Option<usize>,
) -> Result<AmbqcInstance<T>, InstanceError> {
    if q == 0 {
        return Err(invariant("q", "q must be at least 1"));
    }
    if let Acceptance::Outcome(j) = acceptance {
        if j >= q {
            return Err(invariant("acceptance", format!("outcome slot {j} >= q = {q}")));
        }
    }
    let req = requirements(q, &table);
    let layout = RegisterLayout::packed(req, req.k_bits().saturating_sub(2));
    let ancillas: Vec<usize> = layout.a.wires().collect();
    let mut gates = increment_gates(layout.k, &ancillas);
    gates.extend(acceptance_gates(&layout, q, req.outcome_bits, acceptance));
    let task = match sample_bits {
        None => Task::Decision,
        Some(t) => Task::Sampling {
            t,
            output_wires: AmbqcInstance::<T>::default_output_wires(&layout, req.outcome_bits, t),
        },
    };
    assemble(layout, gates, q, table, task, None)
}

/// Measures qubits in the fixed order `order` (1-based), using one gate on the k register.
///
/// Needs the k register to fit a single gate, i.e. `q <= 7`.
pub fn permuted_sweep_instance<T: Real>(
    order: &[usize],
    table: PovmTable<T>,
    acceptance: Acceptance,
) -> Result<AmbqcInstance<T>, InstanceError> {
    let q = order.len();
    let req = requirements(q, &table);
    if req.k_bits() > 3 {
        return Err(invariant("q", format!("permuted sweep supports q <= 7, got {q}")));
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (1..=q).collect::<Vec<_>>() {
        return Err(invariant("order", "order must be a permutation of 1..=q"));
    }
    let layout = RegisterLayout::packed(req, 0);
    let mut gates = acceptance_gates(&layout, q, req.outcome_bits, acceptance);
    gates.push(order_gate(&layout, order));
    assemble(layout, gates, q, table, Task::Decision, None)
}

fn order_gate(layout: &RegisterLayout, order: &[usize]) -> Gate {
    let kw = layout.k.width;
    let table = (0..1usize << kw)
        .map(|count| order.get(count).copied().unwrap_or(count) as u8)
        .collect();
    Gate::new(layout.k.wires().collect(), table)
}

/// Random controller that is complete by construction.
///
/// `gates - 1` random gates read anything and write `y`, `m`, `alpha` and the workspace
/// (the k and x wires pass through unchanged); a final gate maps the count in `k` to a random
/// measurement order. `alpha` is adaptive, so the table length must be a power of two.
pub fn random_complete_instance<T: Real, R: Rng + ?Sized>(
    q: usize,
    gates: usize,
    table: PovmTable<T>,
    rng: &mut R,
) -> Result<AmbqcInstance<T>, InstanceError> {
    if gates == 0 {
        return Err(invariant("v", "at least one gate is needed for the order"));
    }
    if !table.len().is_power_of_two() {
        return Err(invariant("povm_table", "random controllers need a power-of-two table"));
    }
    let req = requirements(q, &table);
    if q == 0 || req.k_bits() > 3 {
        return Err(invariant("q", format!("random complete controllers support 1 <= q <= 7, got {q}")));
    }
    let layout = RegisterLayout::packed(req, 2);
    // a one-entry table still gets a one-bit alpha register, which must then stay at 0
    let alpha_writable = table.len() > 1;
    let writable: Vec<usize> = [layout.y, layout.m, layout.a]
        .iter()
        .flat_map(|r| r.wires())
        .chain(layout.alpha.wires().filter(|_| alpha_writable))
        .collect();
    let readonly: Vec<usize> = layout
        .k
        .wires()
        .chain(layout.x.wires())
        .chain(layout.alpha.wires().filter(|_| !alpha_writable))
        .collect();
    let mut body: Vec<Gate> = (0..gates - 1)
        .map(|_| random_gate(&writable, &readonly, rng))
        .collect();
    let mut order: Vec<usize> = (1..=q).collect();
    order.shuffle(rng);
    body.push(order_gate(&layout, &order));
    assemble(layout, body, q, table, Task::Decision, None)
}

fn random_gate<R: Rng + ?Sized>(writable: &[usize], readonly: &[usize], rng: &mut R) -> Gate {
    let arity = rng.random_range(1..=3usize);
    let mut wires = vec![writable[rng.random_range(0..writable.len())]];
    let pool: Vec<usize> = writable.iter().chain(readonly).copied().collect();
    while wires.len() < arity {
        let w = pool[rng.random_range(0..pool.len())];
        if !wires.contains(&w) {
            wires.push(w);
        }
    }
    let keep: u8 = wires
        .iter()
        .enumerate()
        .filter(|(_, w)| readonly.contains(w))
        .fold(0, |acc, (i, _)| acc | (1 << i));
    let table = (0..1u8 << arity)
        .map(|p| {
            let fresh: u8 = rng.random_range(0..1u8 << arity);
            (fresh & !keep) | (p & keep)
        })
        .collect();
    Gate::new(wires, table)
}

/// Fully random gates over every wire; usually incomplete.
pub fn random_circuit_instance<T: Real, R: Rng + ?Sized>(
    q: usize,
    gates: usize,
    table: PovmTable<T>,
    workspace: usize,
    rng: &mut R,
) -> Result<AmbqcInstance<T>, InstanceError> {
    let req = requirements(q, &table);
    let layout = RegisterLayout::packed(req, workspace);
    let all: Vec<usize> = (0..layout.span()).collect();
    let body = (0..gates).map(|_| random_gate(&all, &[], rng)).collect();
    assemble(layout, body, q, table, Task::Decision, None)
}

/// Controller that measures qubit 1 over and over: incomplete for every `q >= 2`.
pub fn repeat_first_qubit_instance<T: Real>(q: usize, table: PovmTable<T>) -> Result<AmbqcInstance<T>, InstanceError> {
    let req = requirements(q, &table);
    let layout = RegisterLayout::packed(req, 0);
    let kw = layout.k.width;
    let gate = Gate::new(layout.k.wires().collect(), vec![1; 1 << kw]);
    assemble(layout, vec![gate], q, table, Task::Decision, None)
}

/// A built-in POVM by name, as referenced from configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmChoice {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
}

impl PovmChoice {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            params: vec![],
        }
    }
}

pub fn table_from_choices<T: Real>(choices: &[PovmChoice]) -> Result<PovmTable<T>, InstanceError> {
    let povms = choices
        .iter()
        .enumerate()
        .map(|(i, c)| {
            builtin(&c.name, &c.params).map_err(|e| InstanceError {
                location: format!("povms[{i}]"),
                kind: e.into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PovmTable::new(povms).map_err(|e| InstanceError {
        location: "povms".into(),
        kind: e.into(),
    })
}

/// Declarative description of an instance family, used by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Sweep {
        q: usize,
        povms: Vec<PovmChoice>,
        acceptance: Acceptance,
    },
    SamplingSweep {
        q: usize,
        povms: Vec<PovmChoice>,
        t: usize,
    },
    RandomComplete {
        q: usize,
        gates: usize,
        povms: Vec<PovmChoice>,
        seed: u64,
    },
}

impl FamilySpec {
    pub fn build<T: Real>(&self) -> Result<AmbqcInstance<T>, InstanceError> {
        match self {
            FamilySpec::Sweep { q, povms, acceptance } => {
                sweep_instance(*q, table_from_choices(povms)?, *acceptance)
            }
            FamilySpec::SamplingSweep { q, povms, t } => {
                sampling_sweep_instance(*q, table_from_choices(povms)?, *t)
            }
            FamilySpec::RandomComplete { q, gates, povms, seed } => {
                let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(*seed);
                random_complete_instance(*q, *gates, table_from_choices(povms)?, &mut rng)
            }
        }
    }
}
