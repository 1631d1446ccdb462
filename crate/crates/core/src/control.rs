//! Classical control: register layout, truth-table gates, the per-step decision
//! decoder, exhaustive completeness checking, and circuit counting.
//!
//! Before each run the bit array is laid out as `[x, y=0, k=count, m=m_1..m_count 0.., alpha=0, a=0]`.
//! Registers are little-endian within their region. Outcome `m_j` (1-based `j`) occupies
//! `outcome_bits` bits starting at `m.offset + (j-1) * outcome_bits`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::AmbqcInstance;
use crate::povm::ceil_log2;
use crate::scalar::Real;

/// Upper limit on `max_arity^q` for exhaustive decision-tree walks.
pub const MAX_EXHAUSTIVE_HISTORIES: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("register {region} [{offset}, +{width}) exceeds circuit width {w}")]
    RegionOutOfBounds {
        region: &'static str,
        offset: usize,
        width: usize,
        w: usize,
    },
    #[error("registers {first} and {second} overlap")]
    LayoutOverlap {
        first: &'static str,
        second: &'static str,
    },
    #[error("register {region} has width {width}, needs {required}")]
    RegisterTooNarrow {
        region: &'static str,
        width: usize,
        required: usize,
    },
    #[error("register y must be exactly 1 bit wide, found {0}")]
    OutputRegisterWidth(usize),
    #[error("gate {gate}: wire {wire} outside circuit width {w}")]
    GateWireOutOfRange { gate: usize, wire: usize, w: usize },
    #[error("gate {gate}: repeated wire")]
    GateDuplicateWire { gate: usize },
    #[error("gate {gate}: arity {arity} not in 1..=3")]
    GateArity { gate: usize, arity: usize },
    #[error("gate {gate}: table has {found} entries, expected {expected}")]
    GateTableLength {
        gate: usize,
        expected: usize,
        found: usize,
    },
    #[error("gate {gate}: table entry {index} = {value} does not fit the gate arity")]
    GateTableEntry { gate: usize, index: usize, value: u8 },
    #[error("{count} gates exceed the declared budget v = {declared}")]
    TooManyGates { count: usize, declared: usize },
    #[error("input x has {found} bits, circuit expects {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("measurement count {count} outside [0, {q}]")]
    CountOutOfRange { count: usize, q: usize },
    #[error("{found} outcomes supplied for count {expected}")]
    OutcomeCount { expected: usize, found: usize },
    #[error("outcome {index} = {value} does not fit in {bits} bits")]
    OutcomeOutOfRange { index: usize, value: u32, bits: usize },
    #[error("control emitted qubit index {qubit}, valid range is 1..={q}")]
    InvalidQubitIndex { qubit: usize, q: usize },
    #[error("control emitted POVM index {alpha}, table has {table_len} entries")]
    InvalidPovmIndex { alpha: usize, table_len: usize },
    #[error("circuit width {0} is below 3")]
    WidthTooSmall(usize),
    #[error("exhaustive enumeration needs up to {histories} histories, limit is {limit}")]
    TooLargeForExhaustive { histories: u128, limit: u64 },
}

/// `[offset, width)` slice of the wire array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Region {
    pub offset: usize,
    pub width: usize,
}

impl From<[usize; 2]> for Region {
    fn from([offset, width]: [usize; 2]) -> Self {
        Self { offset, width }
    }
}

impl From<Region> for [usize; 2] {
    fn from(r: Region) -> Self {
        [r.offset, r.width]
    }
}

impl Region {
    pub fn new(offset: usize, width: usize) -> Self {
        Self { offset, width }
    }

    pub fn end(&self) -> usize {
        self.offset + self.width
    }

    fn overlaps(&self, other: &Region) -> bool {
        self.width > 0 && other.width > 0 && self.offset < other.end() && other.offset < self.end()
    }

    pub fn wires(&self) -> std::ops::Range<usize> {
        self.offset..self.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub x: Region,
    pub y: Region,
    pub k: Region,
    pub m: Region,
    pub alpha: Region,
    pub a: Region,
}

/// Register sizes a layout has to accommodate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutRequirements {
    pub n: usize,
    pub q: usize,
    pub outcome_bits: usize,
    pub num_povms: usize,
}

impl LayoutRequirements {
    pub fn k_bits(&self) -> usize {
        ceil_log2(self.q + 1).max(1)
    }

    pub fn alpha_bits(&self) -> usize {
        ceil_log2(self.num_povms).max(1)
    }
}

impl RegisterLayout {
    /// Packs `x, y, k, m, alpha, a` consecutively with minimal widths plus `workspace` ancillas.
    pub fn packed(req: LayoutRequirements, workspace: usize) -> Self {
        let mut offset = 0;
        let mut next = |width: usize| {
            let r = Region::new(offset, width);
            offset += width;
            r
        };
        Self {
            x: next(req.n),
            y: next(1),
            k: next(req.k_bits()),
            m: next(req.q * req.outcome_bits),
            alpha: next(req.alpha_bits()),
            a: next(workspace),
        }
    }

    /// Smallest circuit width containing every register.
    pub fn span(&self) -> usize {
        self.regions().iter().map(|(_, r)| r.end()).max().unwrap_or(0)
    }

    pub fn regions(&self) -> [(&'static str, Region); 6] {
        [
            ("x", self.x),
            ("y", self.y),
            ("k", self.k),
            ("m", self.m),
            ("alpha", self.alpha),
            ("a", self.a),
        ]
    }

    pub fn validate(&self, w: usize, req: LayoutRequirements) -> Result<(), ControlError> {
        let regions = self.regions();
        for (name, r) in regions {
            if r.end() > w {
                return Err(ControlError::RegionOutOfBounds {
                    region: name,
                    offset: r.offset,
                    width: r.width,
                    w,
                });
            }
        }
        for (i, (first, a)) in regions.iter().enumerate() {
            for (second, b) in &regions[i + 1..] {
                if a.overlaps(b) {
                    return Err(ControlError::LayoutOverlap { first, second });
                }
            }
        }
        if self.y.width != 1 {
            return Err(ControlError::OutputRegisterWidth(self.y.width));
        }
        let needs = [
            ("x", self.x.width, req.n),
            ("k", self.k.width, req.k_bits()),
            ("m", self.m.width, req.q * req.outcome_bits),
            ("alpha", self.alpha.width, req.alpha_bits()),
        ];
        for (region, width, required) in needs {
            let ok = if region == "x" { width == required } else { width >= required };
            if !ok {
                return Err(ControlError::RegisterTooNarrow {
                    region,
                    width,
                    required,
                });
            }
        }
        Ok(())
    }
}

/// Gate on 1 to 3 wires given by its full truth table.
///
/// Input pattern bit `i` is the value of `wires[i]`; output bit `i` is written back to `wires[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub wires: Vec<usize>,
    pub table: Vec<u8>,
}

impl Gate {
    pub fn new(wires: Vec<usize>, table: Vec<u8>) -> Self {
        Self { wires, table }
    }

    pub fn not(wire: usize) -> Self {
        Self::new(vec![wire], vec![1, 0])
    }

    /// `target ^= control`.
    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(vec![control, target], vec![0, 3, 2, 1])
    }

    /// `target ^= c0 & c1`.
    pub fn toffoli(c0: usize, c1: usize, target: usize) -> Self {
        let table = (0u8..8).map(|p| if p & 3 == 3 { p ^ 4 } else { p }).collect();
        Self::new(vec![c0, c1, target], table)
    }

    pub fn arity(&self) -> usize {
        self.wires.len()
    }

    pub fn validate(&self, index: usize, w: usize) -> Result<(), ControlError> {
        let arity = self.wires.len();
        if !(1..=3).contains(&arity) {
            return Err(ControlError::GateArity { gate: index, arity });
        }
        for (i, &wire) in self.wires.iter().enumerate() {
            if wire >= w {
                return Err(ControlError::GateWireOutOfRange { gate: index, wire, w });
            }
            if self.wires[..i].contains(&wire) {
                return Err(ControlError::GateDuplicateWire { gate: index });
            }
        }
        let expected = 1 << arity;
        if self.table.len() != expected {
            return Err(ControlError::GateTableLength {
                gate: index,
                expected,
                found: self.table.len(),
            });
        }
        if let Some((i, &value)) = self.table.iter().enumerate().find(|(_, &v)| v as usize >= expected) {
            return Err(ControlError::GateTableEntry {
                gate: index,
                index: i,
                value,
            });
        }
        Ok(())
    }

    #[inline]
    fn apply(&self, bits: &mut [bool]) {
        let pattern = self
            .wires
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &w)| acc | (usize::from(bits[w]) << i));
        let out = self.table[pattern];
        for (i, &w) in self.wires.iter().enumerate() {
            bits[w] = (out >> i) & 1 == 1;
        }
    }
}

/// The control circuit `C` with its register layout and size metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlCircuit {
    layout: RegisterLayout,
    gates: Vec<Gate>,
    n: usize,
    q: usize,
    v: usize,
    w: usize,
    outcome_bits: usize,
    num_povms: usize,
}

/// What the control asks for after a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlDecision {
    /// Measure qubit `qubit` (1-based) with POVM table entry `povm`.
    Measure { qubit: usize, povm: usize },
    Output { y: bool },
}

impl ControlCircuit {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layout: RegisterLayout,
        gates: Vec<Gate>,
        n: usize,
        q: usize,
        v: usize,
        w: usize,
        outcome_bits: usize,
        num_povms: usize,
    ) -> Result<Self, ControlError> {
        let req = LayoutRequirements {
            n,
            q,
            outcome_bits,
            num_povms,
        };
        layout.validate(w, req)?;
        if gates.len() > v {
            return Err(ControlError::TooManyGates {
                count: gates.len(),
                declared: v,
            });
        }
        for (i, g) in gates.iter().enumerate() {
            g.validate(i, w)?;
        }
        Ok(Self {
            layout,
            gates,
            n,
            q,
            v,
            w,
            outcome_bits,
            num_povms,
        })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn outcome_bits(&self) -> usize {
        self.outcome_bits
    }

    pub fn num_povms(&self) -> usize {
        self.num_povms
    }

    /// Prepares the wire array, applies every gate and returns the final wires.
    pub fn execute(&self, x: &[bool], count: usize, outcomes: &[u32]) -> Result<Vec<bool>, ControlError> {
        if x.len() != self.n {
            return Err(ControlError::InputLength {
                expected: self.n,
                found: x.len(),
            });
        }
        if count > self.q {
            return Err(ControlError::CountOutOfRange { count, q: self.q });
        }
        if outcomes.len() != count {
            return Err(ControlError::OutcomeCount {
                expected: count,
                found: outcomes.len(),
            });
        }
        let b = self.outcome_bits;
        let mut bits = vec![false; self.w];
        let l = &self.layout;
        for (i, &xi) in x.iter().enumerate() {
            bits[l.x.offset + i] = xi;
        }
        write_le(&mut bits, l.k, count as u64);
        for (j, &m) in outcomes.iter().enumerate() {
            if (m as u64) >> b != 0 {
                return Err(ControlError::OutcomeOutOfRange {
                    index: j,
                    value: m,
                    bits: b,
                });
            }
            write_le(&mut bits, Region::new(l.m.offset + j * b, b), m as u64);
        }
        for g in &self.gates {
            g.apply(&mut bits);
        }
        Ok(bits)
    }

    /// One control step: decode the next measurement, or the output bit once `count == q`.
    pub fn run(&self, x: &[bool], count: usize, outcomes: &[u32]) -> Result<ControlDecision, ControlError> {
        let bits = self.execute(x, count, outcomes)?;
        self.decode(&bits, count)
    }

    fn decode(&self, bits: &[bool], count: usize) -> Result<ControlDecision, ControlError> {
        if count == self.q {
            return Ok(ControlDecision::Output {
                y: bits[self.layout.y.offset],
            });
        }
        let qubit = read_le(bits, self.layout.k) as usize;
        if qubit == 0 || qubit > self.q {
            return Err(ControlError::InvalidQubitIndex { qubit, q: self.q });
        }
        let alpha = read_le(bits, self.layout.alpha) as usize;
        if alpha >= self.num_povms {
            return Err(ControlError::InvalidPovmIndex {
                alpha,
                table_len: self.num_povms,
            });
        }
        Ok(ControlDecision::Measure { qubit, povm: alpha })
    }
}

/// Free-function form of [`ControlCircuit::run`].
pub fn run_control(
    circuit: &ControlCircuit,
    x: &[bool],
    count: usize,
    outcomes: &[u32],
) -> Result<ControlDecision, ControlError> {
    circuit.run(x, count, outcomes)
}

pub(crate) fn read_le(bits: &[bool], region: Region) -> u64 {
    region
        .wires()
        .enumerate()
        .take(64)
        .fold(0u64, |acc, (i, w)| acc | (u64::from(bits[w]) << i))
}

fn write_le(bits: &mut [bool], region: Region, value: u64) {
    for (i, w) in region.wires().enumerate() {
        bits[w] = i < 64 && (value >> i) & 1 == 1;
    }
}

/// One measurement in a history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub qubit: usize,
    pub povm: usize,
    pub outcome: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletenessFailureKind {
    /// The control asked for a qubit measured earlier in the same history.
    RepeatedQubit { qubit: usize, first_step: usize },
    ControlError { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessFailure {
    pub kind: CompletenessFailureKind,
    /// The steps leading up to the failure.
    pub witness: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub complete: bool,
    pub histories_checked: u64,
    pub failure: Option<CompletenessFailure>,
}

/// `max_arity^q`, the worst-case number of leaves of the decision tree.
pub fn history_bound(max_arity: usize, q: usize) -> u128 {
    (max_arity as u128).saturating_pow(q as u32)
}

pub(crate) fn check_enumerable(max_arity: usize, q: usize) -> Result<(), ControlError> {
    let histories = history_bound(max_arity, q);
    if histories > MAX_EXHAUSTIVE_HISTORIES as u128 {
        return Err(ControlError::TooLargeForExhaustive {
            histories,
            limit: MAX_EXHAUSTIVE_HISTORIES,
        });
    }
    Ok(())
}

/// Walks every outcome sequence and checks that each history measures every qubit exactly once.
///
/// Stops at the first failing history and returns it as the witness.
pub fn verify_completeness<T: Real>(instance: &AmbqcInstance<T>) -> Result<CompletenessReport, ControlError> {
    let circuit = &instance.circuit;
    let q = circuit.q();
    check_enumerable(instance.povm_table.max_arity(), q)?;
    let x = &instance.input_x;
    let mut checked = 0u64;
    let mut stack: Vec<Vec<Step>> = vec![Vec::new()];
    while let Some(steps) = stack.pop() {
        let outcomes: Vec<u32> = steps.iter().map(|s| s.outcome as u32).collect();
        let decision = match circuit.run(x, steps.len(), &outcomes) {
            Ok(d) => d,
            Err(e) => {
                return Ok(CompletenessReport {
                    complete: false,
                    histories_checked: checked,
                    failure: Some(CompletenessFailure {
                        kind: CompletenessFailureKind::ControlError {
                            message: e.to_string(),
                        },
                        witness: steps,
                    }),
                })
            }
        };
        match decision {
            ControlDecision::Output { .. } => checked += 1,
            ControlDecision::Measure { qubit, povm } => {
                if let Some(first_step) = steps.iter().position(|s| s.qubit == qubit) {
                    let mut witness = steps;
                    witness.push(Step {
                        qubit,
                        povm,
                        outcome: 0,
                    });
                    return Ok(CompletenessReport {
                        complete: false,
                        histories_checked: checked,
                        failure: Some(CompletenessFailure {
                            kind: CompletenessFailureKind::RepeatedQubit { qubit, first_step },
                            witness,
                        }),
                    });
                }
                let arity = instance.povm_table.get(povm).map_or(0, |p| p.arity());
                for outcome in (0..arity).rev() {
                    let mut next = steps.clone();
                    next.push(Step {
                        qubit,
                        povm,
                        outcome,
                    });
                    stack.push(next);
                }
            }
        }
    }
    Ok(CompletenessReport {
        complete: true,
        histories_checked: checked,
        failure: None,
    })
}

/// Natural logs of the number of width-`w` circuits with `v` gates on up to 3 wires:
/// the count `(8^8 * C(w,3))^v` and its relaxation `(8^8 w)^{3v} / 6`.
pub fn circuit_count_log(w: usize, v: usize) -> Result<(f64, f64), ControlError> {
    if w < 3 {
        return Err(ControlError::WidthTooSmall(w));
    }
    let wf = w as f64;
    let ln_tables = 8.0 * 8f64.ln();
    let ln_choose3 = wf.ln() + (wf - 1.0).ln() + (wf - 2.0).ln() - 6f64.ln();
    let vf = v as f64;
    let exact = vf * (ln_tables + ln_choose3);
    let relaxed = 3.0 * vf * (ln_tables + wf.ln()) - 6f64.ln();
    Ok((exact, relaxed))
}
