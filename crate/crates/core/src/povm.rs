//! Single-qubit POVMs, their validation, the built-in families, and the
//! outcome distribution they induce on the maximally mixed qubit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{c, cone, czero, Complex, Real};
use crate::statevector::LocalOperator;

/// Entrywise tolerance for `sum_mu L_mu = 1` and for Hermiticity.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-12;
/// Smallest eigenvalue tolerated for an element to count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PovmError {
    #[error("unknown built-in POVM {0:?} (expected z, x, y, basis, trine)")]
    UnknownName(String),
    #[error("POVM {name:?} takes {expected} parameter(s), got {found}")]
    InvalidParams {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite parameter for POVM {0:?}")]
    NonFiniteParam(String),
    #[error("{0}")]
    Invalid(ValidationReport),
    #[error("POVM {label:?} declares dimension {dimension}; only qubits (2) are supported")]
    UnsupportedDimension { label: String, dimension: usize },
    #[error("POVM table is empty")]
    EmptyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewOutcomes { arity: usize },
    NotHermitian { element: usize, deviation: f64 },
    NotPositive { element: usize, min_eigenvalue: f64 },
    /// `1 - sum_mu L_mu`, as `[[re, im]; 2]; 2]`.
    Incomplete {
        deficit: [[[f64; 2]; 2]; 2],
        max_deviation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub label: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "POVM {:?} is valid", self.label);
        }
        write!(f, "POVM {:?} is invalid:", self.label)?;
        for v in &self.violations {
            match v {
                Violation::TooFewOutcomes { arity } => write!(f, " only {arity} outcome(s);")?,
                Violation::NotHermitian { element, deviation } => {
                    write!(f, " element {element} not Hermitian (deviation {deviation:e});")?
                }
                Violation::NotPositive {
                    element,
                    min_eigenvalue,
                } => write!(f, " element {element} has eigenvalue {min_eigenvalue:e};")?,
                Violation::Incomplete { max_deviation, .. } => {
                    write!(f, " elements do not sum to identity (max deviation {max_deviation:e});")?
                }
            }
        }
        Ok(())
    }
}

/// A qubit POVM `(L_mu)_mu`. Constructed through [`Povm::new`] it is always valid.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm<T: Real> {
    label: String,
    elements: Vec<LocalOperator<T>>,
    kraus: Vec<LocalOperator<T>>,
}

impl<T: Real> Povm<T> {
    pub fn new(label: impl Into<String>, elements: Vec<LocalOperator<T>>) -> Result<Self, PovmError> {
        let povm = Self::unchecked(label, elements);
        let report = povm.validate();
        if report.is_valid() {
            Ok(povm)
        } else {
            Err(PovmError::Invalid(report))
        }
    }

    /// Builds without validation so that [`Povm::validate`] can report on arbitrary input.
    pub fn unchecked(label: impl Into<String>, elements: Vec<LocalOperator<T>>) -> Self {
        let kraus = elements.iter().map(LocalOperator::sqrt_psd).collect();
        Self {
            label: label.into(),
            elements,
            kraus,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn elements(&self) -> &[LocalOperator<T>] {
        &self.elements
    }

    pub fn element(&self, outcome: usize) -> &LocalOperator<T> {
        &self.elements[outcome]
    }

    pub fn arity(&self) -> usize {
        self.elements.len()
    }

    /// Canonical Kraus operator `sqrt(L_outcome)`.
    pub fn kraus(&self, outcome: usize) -> LocalOperator<T> {
        self.kraus[outcome]
    }

    pub fn validate(&self) -> ValidationReport {
        let tol = T::lit(COMPLETENESS_TOLERANCE);
        let mut violations = Vec::new();
        if self.elements.len() < 2 {
            violations.push(Violation::TooFewOutcomes {
                arity: self.elements.len(),
            });
        }
        let mut sum = LocalOperator::zero();
        for (i, e) in self.elements.iter().enumerate() {
            sum = sum.add(e);
            let deviation = e.hermiticity_deviation();
            if deviation > tol {
                violations.push(Violation::NotHermitian {
                    element: i,
                    deviation: deviation.as_f64(),
                });
            }
            let min = e.hermitian_eigenvalues()[0];
            if min < -T::lit(PSD_TOLERANCE) {
                violations.push(Violation::NotPositive {
                    element: i,
                    min_eigenvalue: min.as_f64(),
                });
            }
        }
        let mut deficit = [[[0.0; 2]; 2]; 2];
        let mut max_deviation = T::zero();
        let id = LocalOperator::<T>::identity();
        for r in 0..2 {
            for col in 0..2 {
                let d = id.m[r][col] - sum.m[r][col];
                deficit[r][col] = [d.re.as_f64(), d.im.as_f64()];
                max_deviation = max_deviation.max(d.norm_sqr().sqrt());
            }
        }
        if max_deviation > tol {
            violations.push(Violation::Incomplete {
                deficit,
                max_deviation: max_deviation.as_f64(),
            });
        }
        ValidationReport {
            label: self.label.clone(),
            violations,
        }
    }

    /// Outcome distribution on the maximally mixed qubit, `p_mu = tr(L_mu) / 2`.
    pub fn mixed_outcome_distribution(&self) -> Vec<T> {
        let half = T::lit(0.5);
        self.elements.iter().map(|e| e.trace().re * half).collect()
    }

    /// True when every element is a rank-one projector (a von Neumann measurement).
    pub fn is_rank_one_projective(&self, tol: T) -> bool {
        self.elements.iter().all(|e| {
            e.mul(e).max_abs_diff(e) <= tol && (e.trace().re - T::one()).abs() <= tol
        })
    }

    pub fn is_diagonal(&self, tol: T) -> bool {
        self.elements.iter().all(|e| e.is_diagonal(tol))
    }

    pub fn to_spec(&self) -> PovmSpec {
        PovmSpec {
            label: self.label.clone(),
            dimension: None,
            elements: self
                .elements
                .iter()
                .map(|e| e.m.map(|row| row.map(|z| [z.re.as_f64(), z.im.as_f64()])))
                .collect(),
        }
    }

    pub fn from_spec(spec: &PovmSpec) -> Result<Self, PovmError> {
        if let Some(dimension) = spec.dimension {
            if dimension != 2 {
                return Err(PovmError::UnsupportedDimension {
                    label: spec.label.clone(),
                    dimension,
                });
            }
        }
        let elements = spec
            .elements
            .iter()
            .map(|m| LocalOperator::new(m.map(|row| row.map(|[re, im]| c(re, im)))))
            .collect();
        Self::new(spec.label.clone(), elements)
    }
}

/// Serialized form: `{label, dimension?, elements: [[[re, im] x 2] x 2, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmSpec {
    pub label: String,
    /// Local dimension; only 2 is accepted, the field is reserved for qudits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub elements: Vec<[[[f64; 2]; 2]; 2]>,
}

fn expect_params(name: &str, params: &[f64], expected: usize) -> Result<(), PovmError> {
    if params.len() != expected {
        return Err(PovmError::InvalidParams {
            name: name.to_string(),
            expected,
            found: params.len(),
        });
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(PovmError::NonFiniteParam(name.to_string()));
    }
    Ok(())
}

/// Projective measurement onto `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>` and its orthogonal.
fn bloch_basis<T: Real>(label: String, theta: f64, phi: f64) -> Result<Povm<T>, PovmError> {
    let (s, co) = (theta / 2.0).sin_cos();
    let up = [c(co, 0.0), c(s * phi.cos(), s * phi.sin())];
    let down = [c(-s, 0.0), c(co * phi.cos(), co * phi.sin())];
    Povm::new(
        label,
        vec![LocalOperator::projector(up), LocalOperator::projector(down)],
    )
}

/// Built-in POVMs: `z`, `x`, `y`, `basis` (params `theta, phi`) and the three-outcome `trine`.
pub fn builtin<T: Real>(name: &str, params: &[f64]) -> Result<Povm<T>, PovmError> {
    use std::f64::consts::{FRAC_PI_2, PI};
    match name {
        "z" => {
            expect_params(name, params, 0)?;
            Povm::new(
                "z",
                vec![
                    LocalOperator::projector([cone(), czero()]),
                    LocalOperator::projector([czero(), cone()]),
                ],
            )
        }
        "x" => {
            expect_params(name, params, 0)?;
            bloch_basis("x".into(), FRAC_PI_2, 0.0)
        }
        "y" => {
            expect_params(name, params, 0)?;
            bloch_basis("y".into(), FRAC_PI_2, FRAC_PI_2)
        }
        "basis" => {
            expect_params(name, params, 2)?;
            bloch_basis(format!("basis({}, {})", params[0], params[1]), params[0], params[1])
        }
        "trine" => {
            expect_params(name, params, 0)?;
            let elements = (0..3)
                .map(|j| {
                    let angle = 2.0 * PI * j as f64 / 3.0;
                    let v: [Complex<T>; 2] = [c(angle.cos(), 0.0), c(angle.sin(), 0.0)];
                    LocalOperator::projector(v).scale(T::lit(2.0 / 3.0))
                })
                .collect();
            Povm::new("trine", elements)
        }
        other => Err(PovmError::UnknownName(other.to_string())),
    }
}

/// The measurements a control circuit may select, indexed by `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmTable<T: Real> {
    povms: Vec<Povm<T>>,
}

impl<T: Real> PovmTable<T> {
    pub fn new(povms: Vec<Povm<T>>) -> Result<Self, PovmError> {
        if povms.is_empty() {
            return Err(PovmError::EmptyTable);
        }
        Ok(Self { povms })
    }

    pub fn len(&self) -> usize {
        self.povms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.povms.is_empty()
    }

    pub fn get(&self, alpha: usize) -> Option<&Povm<T>> {
        self.povms.get(alpha)
    }

    pub fn povms(&self) -> &[Povm<T>] {
        &self.povms
    }

    pub fn max_arity(&self) -> usize {
        self.povms.iter().map(Povm::arity).max().unwrap_or(0)
    }

    /// Bits per outcome in the m-register: `ceil(log2(max arity))`.
    pub fn outcome_bits(&self) -> usize {
        ceil_log2(self.max_arity()).max(1)
    }

    /// Width needed for the alpha register: `ceil(log2(len))`, at least 1.
    pub fn alpha_bits(&self) -> usize {
        ceil_log2(self.len()).max(1)
    }

    pub fn is_diagonal(&self, tol: T) -> bool {
        self.povms.iter().all(|p| p.is_diagonal(tol))
    }
}

pub(crate) fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}
