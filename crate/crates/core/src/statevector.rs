//! Dense pure states over `q` qubits and the single-qubit operations the engine needs.
//!
//! Amplitude index `i` encodes qubit 1 as its most significant bit, so qubit `l`
//! (1-based) lives at bit position `q - l`. Qubit arguments are 1-based throughout.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::povm::Povm;
use crate::scalar::{c, cone, czero, Complex, Real};

/// Largest register for which [`DenseOperator`] may be built.
pub const MAX_DENSE_QUBITS: usize = 12;

/// Probabilities below this (in magnitude) are rounding noise and get clamped.
pub const NEGATIVE_PROBABILITY_SLACK: f64 = 1e-12;

/// Outcomes with probability at or below this cannot be collapsed onto.
pub const MIN_COLLAPSE_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("amplitude count {0} is not a power of two >= 2")]
    InvalidLength(usize),
    #[error("{num_qubits} qubits exceeds the limit of {max} for this operation")]
    TooManyQubits { num_qubits: usize, max: usize },
    #[error("outcome {outcome} has probability {probability:e}, too small to collapse onto")]
    ZeroProbabilityOutcome { outcome: usize, probability: f64 },
    #[error("outcome {outcome} has negative probability {value:e}")]
    NegativeProbability { outcome: usize, value: f64 },
    #[error("outcome {outcome} out of range for a POVM with {arity} outcomes")]
    OutcomeOutOfRange { outcome: usize, arity: usize },
    #[error("qubit {0} assigned more than one operator")]
    DuplicateQubit(usize),
    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A 2x2 complex matrix acting on one qubit, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalOperator<T: Real> {
    pub m: [[Complex<T>; 2]; 2],
}

impl<T: Real> LocalOperator<T> {
    pub fn new(m: [[Complex<T>; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        Self::new([[cone(), czero()], [czero(), cone()]])
    }

    pub fn zero() -> Self {
        Self::new([[czero(); 2]; 2])
    }

    /// `|v><v|` for a (not necessarily normalized) single-qubit vector.
    pub fn projector(v: [Complex<T>; 2]) -> Self {
        let mut m = [[czero(); 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (col, e) in row.iter_mut().enumerate() {
                *e = v[r] * v[col].conj();
            }
        }
        Self::new(m)
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Self::new([
            [c(m[0][0], 0.0), c(m[0][1], 0.0)],
            [c(m[1][0], 0.0), c(m[1][1], 0.0)],
        ])
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|e| *e = e.scale(s));
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = *self;
        for r in 0..2 {
            for col in 0..2 {
                out.m[r][col] += rhs.m[r][col];
            }
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = [[czero(); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (col, e) in row.iter_mut().enumerate() {
                *e = self.m[r][0] * rhs.m[0][col] + self.m[r][1] * rhs.m[1][col];
            }
        }
        Self::new(out)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> Complex<T> {
        self.m[0][0] + self.m[1][1]
    }

    pub fn apply(&self, v: [Complex<T>; 2]) -> [Complex<T>; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    /// `<v|A|v>`.
    pub fn sandwich(&self, v: [Complex<T>; 2]) -> Complex<T> {
        let av = self.apply(v);
        v[0].conj() * av[0] + v[1].conj() * av[1]
    }

    /// Largest entrywise distance from the adjoint.
    pub fn hermiticity_deviation(&self) -> T {
        let adj = self.adjoint();
        let mut worst = T::zero();
        for r in 0..2 {
            for col in 0..2 {
                worst = worst.max((self.m[r][col] - adj.m[r][col]).norm_sqr().sqrt());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for r in 0..2 {
            for col in 0..2 {
                worst = worst.max((self.m[r][col] - other.m[r][col]).norm_sqr().sqrt());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> [T; 2] {
        let two = T::lit(2.0);
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = (self.m[0][1] + self.m[1][0].conj()).unscale(two);
        let mean = (a + d) / two;
        let half_gap = ((a - d) / two).hypot(b.norm_sqr().sqrt());
        [mean - half_gap, mean + half_gap]
    }

    /// Principal square root of a PSD operator.
    ///
    /// For 2x2 PSD `A`, `sqrt(A) = (A + s I) / sqrt(tr A + 2 s)` with `s = sqrt(det A)`.
    pub fn sqrt_psd(&self) -> Self {
        let [lo, hi] = self.hermitian_eigenvalues();
        let lo = lo.max(T::zero());
        let hi = hi.max(T::zero());
        let s = (lo * hi).sqrt();
        let denom_sq = lo + hi + T::lit(2.0) * s;
        if denom_sq <= T::zero() {
            return Self::zero();
        }
        let denom = denom_sq.sqrt();
        let mut out = *self;
        out.m[0][0] += Complex::new(s, T::zero());
        out.m[1][1] += Complex::new(s, T::zero());
        // symmetrize to keep the result exactly Hermitian
        let off = (out.m[0][1] + out.m[1][0].conj()).unscale(T::lit(2.0));
        out.m[0][1] = off;
        out.m[1][0] = off.conj();
        out.m[0][0].im = T::zero();
        out.m[1][1].im = T::zero();
        out.scale(T::one() / denom)
    }

    pub fn is_diagonal(&self, tol: T) -> bool {
        self.m[0][1].norm_sqr().sqrt() <= tol && self.m[1][0].norm_sqr().sqrt() <= tol
    }

    /// Single-qubit rotation `exp(-i theta/2 n.sigma)`, handy for building unitaries in tests.
    pub fn rotation(theta: T, axis: [T; 3]) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [nx, ny, nz] = axis.map(|a| a / norm);
        let half = theta / T::lit(2.0);
        let (s, co) = (half.sin(), half.cos());
        Self::new([
            [Complex::new(co, -s * nz), Complex::new(-s * ny, -s * nx)],
            [Complex::new(s * ny, -s * nx), Complex::new(co, s * nz)],
        ])
    }
}

/// Normalized (or, after a raw operator application, sub-normalized) amplitude vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T: Real> {
    num_qubits: usize,
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> PureState<T> {
    pub fn new(amplitudes: Vec<Complex<T>>) -> Result<Self, StateError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(StateError::InvalidLength(len));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    /// `|0...0>`.
    pub fn zero(num_qubits: usize) -> Self {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        assert!(num_qubits >= 1 && index < (1 << num_qubits));
        let mut amplitudes = vec![czero(); 1 << num_qubits];
        amplitudes[index] = cone();
        Self {
            num_qubits,
            amplitudes,
        }
    }

    /// Tensor product of single-qubit vectors, qubit 1 first.
    pub fn product(locals: &[[Complex<T>; 2]]) -> Self {
        assert!(!locals.is_empty());
        let mut amplitudes = vec![cone::<T>()];
        for v in locals {
            let mut next = Vec::with_capacity(amplitudes.len() * 2);
            for a in &amplitudes {
                next.push(*a * v[0]);
                next.push(*a * v[1]);
            }
            amplitudes = next;
        }
        Self {
            num_qubits: locals.len(),
            amplitudes,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes
            .iter()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn is_normalized(&self, tol: T) -> bool {
        (self.norm_sqr() - T::one()).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self, StateError> {
        let n = self.norm_sqr().sqrt();
        if n <= T::zero() {
            return Err(StateError::ZeroNorm);
        }
        Ok(Self {
            num_qubits: self.num_qubits,
            amplitudes: self.amplitudes.iter().map(|a| a.unscale(n)).collect(),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>, StateError> {
        if self.dim() != other.dim() {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b))
    }

    pub fn scaled(&self, z: Complex<T>) -> Self {
        Self {
            num_qubits: self.num_qubits,
            amplitudes: self.amplitudes.iter().map(|a| a * z).collect(),
        }
    }

    fn check_qubit(&self, qubit: usize) -> Result<usize, StateError> {
        if qubit == 0 || qubit > self.num_qubits {
            return Err(StateError::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(1 << (self.num_qubits - qubit))
    }

    /// `(op)_qubit |self>`; the result is not renormalized.
    pub fn apply_single_qubit(&self, qubit: usize, op: &LocalOperator<T>) -> Result<Self, StateError> {
        let mut out = self.clone();
        out.apply_single_qubit_in_place(qubit, op)?;
        Ok(out)
    }

    pub fn apply_single_qubit_in_place(
        &mut self,
        qubit: usize,
        op: &LocalOperator<T>,
    ) -> Result<(), StateError> {
        let stride = self.check_qubit(qubit)?;
        let m = &op.m;
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x0, x1) = (*a0, *a1);
                *a0 = m[0][0] * x0 + m[0][1] * x1;
                *a1 = m[1][0] * x0 + m[1][1] * x1;
            }
        }
        Ok(())
    }

    /// Reduced density matrix of one qubit, `rho[a][b] = sum_rest psi(a,rest) conj(psi(b,rest))`.
    pub fn reduced_density(&self, qubit: usize) -> Result<LocalOperator<T>, StateError> {
        let stride = self.check_qubit(qubit)?;
        let mut rho = [[czero::<T>(); 2]; 2];
        for block in self.amplitudes.chunks_exact(2 * stride) {
            let (lo, hi) = block.split_at(stride);
            for (a0, a1) in lo.iter().zip(hi) {
                rho[0][0] += a0 * a0.conj();
                rho[0][1] += a0 * a1.conj();
                rho[1][0] += a1 * a0.conj();
                rho[1][1] += a1 * a1.conj();
            }
        }
        Ok(LocalOperator::new(rho))
    }

    /// Born-rule probabilities `p_mu = <psi|(L_mu)_qubit|psi>`, clamped into `[0, 1]`.
    pub fn outcome_probabilities(&self, qubit: usize, povm: &Povm<T>) -> Result<Vec<T>, StateError> {
        let rho = self.reduced_density(qubit)?;
        povm.elements()
            .iter()
            .enumerate()
            .map(|(mu, l)| clamp_probability(mu, l.mul(&rho).trace().re))
            .collect()
    }

    /// Measures `qubit` with the canonical Kraus operator `sqrt(L_outcome)`.
    pub fn collapse(
        &self,
        qubit: usize,
        povm: &Povm<T>,
        outcome: usize,
    ) -> Result<(Self, T), StateError> {
        let arity = povm.arity();
        if outcome >= arity {
            return Err(StateError::OutcomeOutOfRange { outcome, arity });
        }
        let kraus = povm.kraus(outcome);
        self.collapse_with_kraus(qubit, povm, outcome, &kraus)
    }

    /// Measures with an arbitrary Kraus operator `K` satisfying `K^dag K = L_outcome`.
    pub fn collapse_with_kraus(
        &self,
        qubit: usize,
        povm: &Povm<T>,
        outcome: usize,
        kraus: &LocalOperator<T>,
    ) -> Result<(Self, T), StateError> {
        let arity = povm.arity();
        if outcome >= arity {
            return Err(StateError::OutcomeOutOfRange { outcome, arity });
        }
        let rho = self.reduced_density(qubit)?;
        let p = clamp_probability(outcome, povm.element(outcome).mul(&rho).trace().re)?;
        if p <= T::lit(MIN_COLLAPSE_PROBABILITY) {
            return Err(StateError::ZeroProbabilityOutcome {
                outcome,
                probability: p.as_f64(),
            });
        }
        let post = self.apply_single_qubit(qubit, kraus)?;
        let n = post.norm_sqr().sqrt();
        if n <= T::zero() {
            return Err(StateError::ZeroProbabilityOutcome {
                outcome,
                probability: 0.0,
            });
        }
        Ok((
            Self {
                num_qubits: self.num_qubits,
                amplitudes: post.amplitudes.into_iter().map(|a| a.unscale(n)).collect(),
            },
            p,
        ))
    }

    /// `<psi| (x)_l A_l |psi>` with identity on unassigned qubits, never forming a dense operator.
    pub fn product_expectation(&self, assignment: &[(usize, LocalOperator<T>)]) -> Result<T, StateError> {
        Ok(self.product_expectation_complex(assignment)?.re)
    }

    pub fn product_expectation_complex(
        &self,
        assignment: &[(usize, LocalOperator<T>)],
    ) -> Result<Complex<T>, StateError> {
        let mut seen = vec![false; self.num_qubits + 1];
        let mut acted = self.clone();
        for (qubit, op) in assignment {
            self.check_qubit(*qubit)?;
            if std::mem::replace(&mut seen[*qubit], true) {
                return Err(StateError::DuplicateQubit(*qubit));
            }
            acted.apply_single_qubit_in_place(*qubit, op)?;
        }
        self.inner(&acted)
    }
}

fn clamp_probability<T: Real>(outcome: usize, p: T) -> Result<T, StateError> {
    if p < -T::lit(NEGATIVE_PROBABILITY_SLACK) {
        return Err(StateError::NegativeProbability {
            outcome,
            value: p.as_f64(),
        });
    }
    Ok(p.max(T::zero()).min(T::one()))
}

/// Full `2^q x 2^q` operator, only for small registers.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator<T: Real> {
    num_qubits: usize,
    matrix: DMatrix<Complex<T>>,
}

fn dense_guard(num_qubits: usize) -> Result<usize, StateError> {
    if num_qubits > MAX_DENSE_QUBITS {
        return Err(StateError::TooManyQubits {
            num_qubits,
            max: MAX_DENSE_QUBITS,
        });
    }
    Ok(1 << num_qubits)
}

impl<T: Real> DenseOperator<T> {
    pub fn zeros(num_qubits: usize) -> Result<Self, StateError> {
        let dim = dense_guard(num_qubits)?;
        Ok(Self {
            num_qubits,
            matrix: DMatrix::from_element(dim, dim, czero()),
        })
    }

    pub fn identity(num_qubits: usize) -> Result<Self, StateError> {
        let dim = dense_guard(num_qubits)?;
        Ok(Self {
            num_qubits,
            matrix: DMatrix::identity(dim, dim),
        })
    }

    pub fn from_matrix(matrix: DMatrix<Complex<T>>) -> Result<Self, StateError> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() || dim < 2 || !dim.is_power_of_two() {
            return Err(StateError::InvalidLength(dim));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        dense_guard(num_qubits)?;
        Ok(Self { num_qubits, matrix })
    }

    /// `|psi><psi|`.
    pub fn projector(state: &PureState<T>) -> Result<Self, StateError> {
        dense_guard(state.num_qubits())?;
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self::from_matrix(&v * v.adjoint())
    }

    /// Kronecker product of one factor per qubit, qubit 1 first.
    pub fn tensor_product(factors: &[LocalOperator<T>]) -> Result<Self, StateError> {
        dense_guard(factors.len())?;
        let mut m = DMatrix::from_element(1, 1, cone::<T>());
        for f in factors {
            let n = m.nrows();
            let mut next = DMatrix::from_element(2 * n, 2 * n, czero());
            for i in 0..n {
                for j in 0..n {
                    let a = m[(i, j)];
                    if a == czero() {
                        continue;
                    }
                    for r in 0..2 {
                        for s in 0..2 {
                            next[(2 * i + r, 2 * j + s)] = a * f.m[r][s];
                        }
                    }
                }
            }
            m = next;
        }
        Self::from_matrix(m)
    }

    /// `op` on `qubit`, identity elsewhere.
    pub fn embed(num_qubits: usize, qubit: usize, op: &LocalOperator<T>) -> Result<Self, StateError> {
        if qubit == 0 || qubit > num_qubits {
            return Err(StateError::QubitOutOfRange { qubit, num_qubits });
        }
        let factors: Vec<_> = (1..=num_qubits)
            .map(|l| if l == qubit { *op } else { LocalOperator::identity() })
            .collect();
        Self::tensor_product(&factors)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.matrix += &other.matrix;
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            num_qubits: self.num_qubits,
            matrix: &self.matrix - &other.matrix,
        }
    }

    pub fn trace(&self) -> Complex<T> {
        self.matrix.trace()
    }

    pub fn apply(&self, state: &PureState<T>) -> Result<PureState<T>, StateError> {
        if state.dim() != self.dim() {
            return Err(StateError::DimensionMismatch {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        PureState::new((&self.matrix * v).as_slice().to_vec())
    }

    /// `<psi|A|psi>`.
    pub fn expectation(&self, state: &PureState<T>) -> Result<Complex<T>, StateError> {
        let av = self.apply(state)?;
        state.inner(&av)
    }

    pub fn hermiticity_deviation(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm_sqr().sqrt());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max((a - b).norm_sqr().sqrt()))
    }

    /// Eigen-decomposition of a Hermitian operator, eigenvalues descending with matching columns.
    pub fn hermitian_eigen(&self) -> Result<(Vec<T>, DMatrix<Complex<T>>), StateError> {
        let deviation = self.hermiticity_deviation();
        if deviation > T::lit(1e-10) {
            return Err(StateError::NotHermitian {
                deviation: deviation.as_f64(),
            });
        }
        let eig = nalgebra::SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, col| eig.eigenvectors[(r, order[col])]);
        Ok((values, vectors))
    }

    /// Spectrum of a Hermitian operator, sorted descending.
    pub fn eigenvalues(&self) -> Result<Vec<T>, StateError> {
        self.hermitian_eigen().map(|(v, _)| v)
    }

    /// Relabels qubits: qubit `l` of `self` becomes qubit `perm[l-1]` of the result.
    pub fn permute_qubits(&self, perm: &[usize]) -> Self {
        let q = self.num_qubits;
        assert_eq!(perm.len(), q);
        let map = |i: usize| -> usize {
            let mut out = 0;
            for l in 1..=q {
                let bit = (i >> (q - l)) & 1;
                out |= bit << (q - perm[l - 1]);
            }
            out
        };
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, czero());
        for i in 0..n {
            for j in 0..n {
                m[(map(i), map(j))] = self.matrix[(i, j)];
            }
        }
        Self {
            num_qubits: q,
            matrix: m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{builtin, Povm};
    use crate::randstates::sample_haar_state;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type S = PureState<f64>;
    type Op = LocalOperator<f64>;

    fn random_op(rng: &mut ChaCha8Rng) -> Op {
        use rand::Rng;
        let mut m = [[czero::<f64>(); 2]; 2];
        m.iter_mut()
            .flatten()
            .for_each(|e| *e = Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        Op::new(m)
    }

    fn plus() -> [Complex<f64>; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        [c(h, 0.0), c(h, 0.0)]
    }

    #[test]
    fn identity_application_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: S = sample_haar_state(3, &mut rng).unwrap();
        for q in 1..=3 {
            assert_eq!(s.apply_single_qubit(q, &Op::identity()).unwrap(), s);
        }
    }

    #[test]
    fn projector_halves_plus_state() {
        let s = S::product(&[plus(), [cone(), czero()]]);
        let p0 = Op::projector([cone(), czero()]);
        let out = s.apply_single_qubit(1, &p0).unwrap();
        assert!((out.norm_sqr() - 0.5).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amplitudes()[0] - c(h, 0.0)).norm() < 1e-15);
        assert!(out.amplitudes()[1..].iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn single_qubit_application_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let s: S = sample_haar_state(3, &mut rng).unwrap();
            let op = random_op(&mut rng);
            for q in 1..=3 {
                let dense = DenseOperator::embed(3, q, &op).unwrap();
                let want = dense.apply(&s).unwrap();
                let got = s.apply_single_qubit(q, &op).unwrap();
                for (a, b) in got.amplitudes().iter().zip(want.amplitudes()) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn qubit_index_validation() {
        let s = S::zero(2);
        assert!(matches!(
            s.apply_single_qubit(0, &Op::identity()),
            Err(StateError::QubitOutOfRange { .. })
        ));
        assert!(matches!(
            s.apply_single_qubit(3, &Op::identity()),
            Err(StateError::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn z_probabilities_on_zero_state() {
        let z: Povm<f64> = builtin("z", &[]).unwrap();
        let p = S::zero(1).outcome_probabilities(1, &z).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn bell_state_x_measurement_is_balanced() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = S::new(vec![c(h, 0.0), czero(), czero(), c(h, 0.0)]).unwrap();
        let x: Povm<f64> = builtin("x", &[]).unwrap();
        let p = bell.outcome_probabilities(1, &x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn haar_average_of_z_probabilities_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z: Povm<f64> = builtin("z", &[]).unwrap();
        let samples: Vec<f64> = (0..1000)
            .map(|_| {
                let s: S = sample_haar_state(2, &mut rng).unwrap();
                s.outcome_probabilities(1, &z).unwrap()[0]
            })
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.5).abs() < 4.0 * (var / n).sqrt());
    }

    #[test]
    fn collapse_plus_onto_zero() {
        let z: Povm<f64> = builtin("z", &[]).unwrap();
        let (post, p) = S::product(&[plus()]).collapse(1, &z, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((post.amplitudes()[0] - cone()).norm() < 1e-15);
    }

    #[test]
    fn collapse_rejects_impossible_outcome() {
        let z: Povm<f64> = builtin("z", &[]).unwrap();
        assert!(matches!(
            S::zero(1).collapse(1, &z, 1),
            Err(StateError::ZeroProbabilityOutcome { .. })
        ));
    }

    #[test]
    fn trivial_element_leaves_state_unchanged() {
        let trivial = Povm::new("trivial", vec![Op::identity(), Op::zero()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: S = sample_haar_state(3, &mut rng).unwrap();
        let (post, p) = s.collapse(2, &trivial, 0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        for (a, b) in post.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn sequential_collapse_reproduces_product_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let povms: Vec<Povm<f64>> = vec![
            builtin("z", &[]).unwrap(),
            builtin("trine", &[]).unwrap(),
            builtin("basis", &[0.7, 1.3]).unwrap(),
            builtin("x", &[]).unwrap(),
        ];
        let s: S = sample_haar_state(4, &mut rng).unwrap();
        let order = [3usize, 1, 4, 2];
        let outcomes = [1usize, 2, 0, 1];
        let mut cur = s.clone();
        let mut joint = 1.0;
        let mut assignment = Vec::new();
        for ((&q, &m), povm) in order.iter().zip(&outcomes).zip(&povms) {
            let (post, p) = cur.collapse(q, povm, m).unwrap();
            assert!(post.is_normalized(1e-10));
            joint *= p;
            cur = post;
            assignment.push((q, *povm.element(m)));
        }
        let want = s.product_expectation(&assignment).unwrap();
        assert!((joint - want).abs() < 1e-12, "{joint} vs {want}");
    }

    #[test]
    fn product_expectation_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s: S = sample_haar_state(4, &mut rng).unwrap();
        let ids: Vec<_> = (1..=4).map(|q| (q, Op::identity())).collect();
        assert!((s.product_expectation(&ids).unwrap() - 1.0).abs() < 1e-12);
        let p0 = Op::projector([cone(), czero()]);
        let all0: Vec<_> = (1..=4).map(|q| (q, p0)).collect();
        assert_eq!(S::zero(4).product_expectation(&all0).unwrap(), 1.0);
        assert!(matches!(
            s.product_expectation(&[(1, p0), (1, p0)]),
            Err(StateError::DuplicateQubit(1))
        ));
    }

    #[test]
    fn product_expectation_matches_dense_tensor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for q in 1..=6 {
            let s: S = sample_haar_state(q, &mut rng).unwrap();
            let ops: Vec<Op> = (0..q).map(|_| random_op(&mut rng)).collect();
            let dense = DenseOperator::tensor_product(&ops).unwrap();
            let want = dense.expectation(&s).unwrap();
            let assignment: Vec<_> = ops.iter().enumerate().map(|(i, o)| (i + 1, *o)).collect();
            let got = s.product_expectation_complex(&assignment).unwrap();
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn dense_eigenvalues_trivial_spectra() {
        let id = DenseOperator::<f64>::identity(2).unwrap();
        assert_eq!(id.eigenvalues().unwrap(), vec![1.0; 4]);
        let proj = DenseOperator::projector(&S::zero(2)).unwrap();
        let ev = proj.eigenvalues().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-12 && ev[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn dense_eigenpairs_have_small_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::from_fn(16, 16, |_, _| {
            use rand::Rng;
            Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = DenseOperator::from_matrix(&a + a.adjoint()).unwrap();
        let (values, vectors) = h.hermitian_eigen().unwrap();
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
        for (k, &lambda) in values.iter().enumerate() {
            let v = vectors.column(k);
            let r = h.matrix() * v - v * Complex::new(lambda, 0.0);
            assert!(r.norm() <= 1e-8);
        }
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let mut m = DMatrix::from_element(2, 2, czero::<f64>());
        m[(0, 1)] = cone();
        let op = DenseOperator::from_matrix(m).unwrap();
        assert!(matches!(op.eigenvalues(), Err(StateError::NotHermitian { .. })));
    }

    #[test]
    fn dense_guard_rejects_large_registers() {
        assert!(matches!(
            DenseOperator::<f64>::identity(13),
            Err(StateError::TooManyQubits { .. })
        ));
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let a = random_op(&mut rng);
            let psd = a.adjoint().mul(&a);
            let r = psd.sqrt_psd();
            assert!(r.mul(&r).max_abs_diff(&psd) < 1e-12);
            assert!(r.hermiticity_deviation() < 1e-15);
        }
        let rank_one = Op::projector(plus());
        assert!(rank_one.sqrt_psd().max_abs_diff(&rank_one) < 1e-12);
    }

    #[test]
    fn qubit_permutation_of_tensor_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ops: Vec<Op> = (0..3).map(|_| random_op(&mut rng)).collect();
        let a = DenseOperator::tensor_product(&ops).unwrap();
        // qubit 1 -> 2, 2 -> 3, 3 -> 1
        let b = DenseOperator::tensor_product(&[ops[2], ops[0], ops[1]]).unwrap();
        assert!(a.permute_qubits(&[2, 3, 1]).max_abs_diff(&b) < 1e-14);
    }

    proptest! {
        #[test]
        fn collapse_sequences_preserve_norm(seed in 0u64..10_000, q in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trine: Povm<f64> = builtin("trine", &[]).unwrap();
            let mut s: S = sample_haar_state(q, &mut rng).unwrap();
            for qubit in 1..=q {
                let p = s.outcome_probabilities(qubit, &trine).unwrap();
                let mu = p.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
                s = s.collapse(qubit, &trine, mu).unwrap().0;
                prop_assert!(s.is_normalized(1e-10));
            }
        }

        #[test]
        fn rotated_kraus_gives_same_joint_probability(seed in 0u64..10_000) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trine: Povm<f64> = builtin("trine", &[]).unwrap();
            let s: S = sample_haar_state(3, &mut rng).unwrap();
            let (mut a, mut b) = (s.clone(), s.clone());
            let (mut pa, mut pb) = (1.0, 1.0);
            for qubit in [2usize, 3, 1] {
                let mu = rng.random_range(0..3);
                let u = Op::rotation(rng.random_range(0.0..6.0), [rng.random(), rng.random(), 0.3]);
                let (na, xa) = a.collapse(qubit, &trine, mu).unwrap();
                let k = u.mul(&trine.kraus(mu));
                let (nb, xb) = b.collapse_with_kraus(qubit, &trine, mu, &k).unwrap();
                pa *= xa;
                pb *= xb;
                a = na;
                b = nb;
            }
            prop_assert!((pa - pb).abs() < 1e-10);
        }
    }
}
