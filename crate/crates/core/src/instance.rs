//! AMBQC instances and their JSON file format.
//!
//! ```text
//! {version, n, q, w, v, outcome_bits,
//!  layout: {x, y, k, m, alpha, a: [offset, width]},
//!  gates: [{wires: [..], table: [..]}],
//!  povm_table: [{label, elements}],
//!  input_x: "0101",
//!  task: {kind: "decision"} | {kind: "sampling", t, output_wires}}
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlCircuit, ControlError, Gate, RegisterLayout};
use crate::povm::{Povm, PovmError, PovmSpec, PovmTable};
use crate::scalar::Real;

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceErrorKind {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("unsupported instance version {0} (expected {INSTANCE_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Povm(#[from] PovmError),
    #[error("{0}")]
    Invariant(String),
}

/// Instance parse or validation failure, with a JSON path to the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{location}: {kind}")]
pub struct InstanceError {
    pub location: String,
    pub kind: InstanceErrorKind,
}

impl InstanceError {
    fn at(location: impl Into<String>, kind: impl Into<InstanceErrorKind>) -> Self {
        Self {
            location: location.into(),
            kind: kind.into(),
        }
    }
}

/// What the final control run produces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Accept/reject read from the y register.
    Decision,
    /// A `t`-bit sample read from `output_wires` (bit `i` of the sample is wire `output_wires[i]`).
    Sampling { t: usize, output_wires: Vec<usize> },
}

impl Task {
    pub fn output_bits(&self) -> usize {
        match self {
            Task::Decision => 1,
            Task::Sampling { t, .. } => *t,
        }
    }
}

/// A control circuit together with its measurement table, input and task.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbqcInstance<T: Real> {
    pub circuit: ControlCircuit,
    pub povm_table: PovmTable<T>,
    pub input_x: Vec<bool>,
    pub task: Task,
}

impl<T: Real> AmbqcInstance<T> {
    pub fn new(
        circuit: ControlCircuit,
        povm_table: PovmTable<T>,
        input_x: Vec<bool>,
        task: Task,
    ) -> Result<Self, InstanceError> {
        if circuit.num_povms() != povm_table.len() {
            return Err(InstanceError::at(
                "povm_table",
                InstanceErrorKind::Invariant(format!(
                    "circuit expects {} POVMs, table has {}",
                    circuit.num_povms(),
                    povm_table.len()
                )),
            ));
        }
        if circuit.outcome_bits() != povm_table.outcome_bits() {
            return Err(InstanceError::at(
                "outcome_bits",
                InstanceErrorKind::Invariant(format!(
                    "outcome_bits = {} but the POVM table needs {}",
                    circuit.outcome_bits(),
                    povm_table.outcome_bits()
                )),
            ));
        }
        if input_x.len() != circuit.n() {
            return Err(InstanceError::at(
                "input_x",
                ControlError::InputLength {
                    expected: circuit.n(),
                    found: input_x.len(),
                },
            ));
        }
        if let Task::Sampling { t, output_wires } = &task {
            if *t == 0 || *t > circuit.q() || *t > 63 {
                return Err(InstanceError::at(
                    "task.t",
                    InstanceErrorKind::Invariant(format!("t = {t} must lie in 1..=min(q, 63)")),
                ));
            }
            if output_wires.len() != *t {
                return Err(InstanceError::at(
                    "task.output_wires",
                    InstanceErrorKind::Invariant(format!(
                        "{} output wires listed for t = {t}",
                        output_wires.len()
                    )),
                ));
            }
            if let Some((i, &wire)) = output_wires.iter().enumerate().find(|(_, &w)| w >= circuit.w()) {
                return Err(InstanceError::at(
                    format!("task.output_wires[{i}]"),
                    InstanceErrorKind::Invariant(format!("wire {wire} outside circuit width {}", circuit.w())),
                ));
            }
        }
        Ok(Self {
            circuit,
            povm_table,
            input_x,
            task,
        })
    }

    pub fn q(&self) -> usize {
        self.circuit.q()
    }

    /// Default sampling readout: the low bit of each of the first `t` outcome slots.
    pub fn default_output_wires(layout: &RegisterLayout, outcome_bits: usize, t: usize) -> Vec<usize> {
        (0..t).map(|j| layout.m.offset + j * outcome_bits).collect()
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            version: INSTANCE_FORMAT_VERSION,
            n: self.circuit.n(),
            q: self.circuit.q(),
            w: self.circuit.w(),
            v: self.circuit.v(),
            outcome_bits: self.circuit.outcome_bits(),
            layout: *self.circuit.layout(),
            gates: self.circuit.gates().to_vec(),
            povm_table: self.povm_table.povms().iter().map(Povm::to_spec).collect(),
            input_x: self.input_x.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            task: self.task.clone(),
        }
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self, InstanceError> {
        if file.version != INSTANCE_FORMAT_VERSION {
            return Err(InstanceError::at(
                "version",
                InstanceErrorKind::UnsupportedVersion(file.version),
            ));
        }
        let mut povms = Vec::with_capacity(file.povm_table.len());
        for (i, spec) in file.povm_table.iter().enumerate() {
            povms.push(Povm::from_spec(spec).map_err(|e| InstanceError::at(format!("povm_table[{i}]"), e))?);
        }
        let povm_table = PovmTable::new(povms).map_err(|e| InstanceError::at("povm_table", e))?;
        let input_x = file
            .input_x
            .chars()
            .enumerate()
            .map(|(i, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(InstanceError::at(
                    format!("input_x[{i}]"),
                    InstanceErrorKind::Invariant(format!("{other:?} is not a bit")),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let circuit = ControlCircuit::new(
            file.layout,
            file.gates.clone(),
            file.n,
            file.q,
            file.v,
            file.w,
            file.outcome_bits,
            povm_table.len(),
        )
        .map_err(|e| {
            let location = match &e {
                ControlError::GateWireOutOfRange { gate, .. }
                | ControlError::GateDuplicateWire { gate }
                | ControlError::GateArity { gate, .. }
                | ControlError::GateTableLength { gate, .. }
                | ControlError::GateTableEntry { gate, .. } => format!("gates[{gate}]"),
                ControlError::TooManyGates { .. } => "gates".to_string(),
                ControlError::RegionOutOfBounds { region, .. }
                | ControlError::RegisterTooNarrow { region, .. } => format!("layout.{region}"),
                ControlError::LayoutOverlap { first, second } => format!("layout.{first}/{second}"),
                ControlError::OutputRegisterWidth(_) => "layout.y".to_string(),
                _ => String::new(),
            };
            InstanceError::at(location, e)
        })?;
        if file.q == 0 {
            return Err(InstanceError::at(
                "q",
                InstanceErrorKind::Invariant("q must be at least 1".into()),
            ));
        }
        Self::new(circuit, povm_table, input_x, file.task.clone())
    }
}

/// Serialized instance, field-for-field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    pub n: usize,
    pub q: usize,
    pub w: usize,
    pub v: usize,
    pub outcome_bits: usize,
    pub layout: RegisterLayout,
    pub gates: Vec<Gate>,
    pub povm_table: Vec<PovmSpec>,
    pub input_x: String,
    pub task: Task,
}

pub fn parse_instance<T: Real>(text: &str) -> Result<AmbqcInstance<T>, InstanceError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let location = if path == "." {
            format!("line {} column {}", inner.line(), inner.column())
        } else {
            path
        };
        InstanceError::at(location, InstanceErrorKind::Malformed(inner.to_string()))
    })?;
    AmbqcInstance::from_file(&file)
}

pub fn serialize_instance<T: Real>(instance: &AmbqcInstance<T>) -> String {
    let mut s = serde_json::to_string_pretty(&instance.to_file()).expect("instance serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{sweep_instance, Acceptance};
    use crate::povm::builtin;
    use proptest::prelude::*;

    fn sweep() -> AmbqcInstance<f64> {
        let table = PovmTable::new(vec![builtin("z", &[]).unwrap()]).unwrap();
        sweep_instance(3, table, Acceptance::Parity).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let text = serialize_instance(&sweep());
        let parsed: AmbqcInstance<f64> = parse_instance(&text).unwrap();
        assert_eq!(parsed, sweep());
        assert_eq!(serialize_instance(&parsed), text);
    }

    #[test]
    fn overlapping_registers_rejected() {
        let mut file = sweep().to_file();
        file.layout.m.offset = file.layout.k.offset + 1;
        let text = serde_json::to_string(&file).unwrap();
        let err = parse_instance::<f64>(&text).unwrap_err();
        assert!(
            matches!(
                err.kind,
                InstanceErrorKind::Control(ControlError::LayoutOverlap { first: "k", second: "m" })
            ),
            "{err}"
        );
        assert_eq!(err.location, "layout.k/m");
    }

    #[test]
    fn malformed_fields_carry_paths() {
        let mut value: serde_json::Value = serde_json::from_str(&serialize_instance(&sweep())).unwrap();
        value["gates"][1]["wires"] = serde_json::json!("nope");
        let err = parse_instance::<f64>(&value.to_string()).unwrap_err();
        assert!(matches!(err.kind, InstanceErrorKind::Malformed(_)));
        assert_eq!(err.location, "gates[1].wires");
    }

    #[test]
    fn semantic_errors_carry_paths() {
        let mut file = sweep().to_file();
        file.gates[0].table[0] = 9;
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "gates[0]");

        let mut file = sweep().to_file();
        file.version = 2;
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.kind, InstanceErrorKind::UnsupportedVersion(2));

        let mut file = sweep().to_file();
        file.povm_table[0].elements[0][0][0] = [0.5, 0.0];
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "povm_table[0]");

        let mut file = sweep().to_file();
        file.input_x = "2".into();
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "input_x[0]");

        let mut file = sweep().to_file();
        file.input_x = "0".repeat(file.n + 1);
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert!(matches!(err.kind, InstanceErrorKind::Control(ControlError::InputLength { .. })));

        let mut file = sweep().to_file();
        file.outcome_bits = 2;
        file.layout.m.width = 6;
        file.layout.alpha.offset += 3;
        file.w += 3;
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "outcome_bits");
    }

    #[test]
    fn sampling_task_validation() {
        let base = sweep();
        let mut file = base.to_file();
        file.task = Task::Sampling {
            t: 2,
            output_wires: vec![file.layout.m.offset],
        };
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "task.output_wires");
        file.task = Task::Sampling {
            t: 4,
            output_wires: vec![0; 4],
        };
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "task.t");
        file.task = Task::Sampling {
            t: 1,
            output_wires: vec![999],
        };
        let err = parse_instance::<f64>(&serde_json::to_string(&file).unwrap()).unwrap_err();
        assert_eq!(err.location, "task.output_wires[0]");
    }

    #[test]
    fn every_truncation_yields_a_structured_error() {
        let text = serialize_instance(&sweep());
        for cut in 0..text.len() - 1 {
            if !text.is_char_boundary(cut) {
                continue;
            }
            let err = parse_instance::<f64>(&text[..cut]).unwrap_err();
            assert!(matches!(err.kind, InstanceErrorKind::Malformed(_)));
        }
    }

    proptest! {
        #[test]
        fn byte_mutations_never_panic(pos in 0usize..2000, byte in any::<u8>()) {
            let mut bytes = serialize_instance(&sweep()).into_bytes();
            let i = pos % bytes.len();
            bytes[i] = byte;
            if let Ok(text) = String::from_utf8(bytes) {
                let _ = parse_instance::<f64>(&text);
            }
        }
    }
}
