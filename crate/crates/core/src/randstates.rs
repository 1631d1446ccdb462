//! Random resource states: Haar-random states, random Schmidt-rank-K states, and the
//! geometric measure of entanglement.
//!
//! The Schmidt-rank-K operator `R = sum_j |phi_j><phi_j|` (with product vectors
//! `phi_j = psi_j^(1) (x) ... (x) psi_j^(q)`) is never formed at scale. Writing `Phi` for the
//! `2^q x K` matrix with columns `phi_j`, we have `R = Phi Phi^dag` and the Gram matrix is
//! `G = Phi^dag Phi`. If `G v = lambda v` then `R (Phi v) = lambda (Phi v)`, so the nonzero
//! spectra of `R` and `G` coincide, and `u = Phi v / sqrt(lambda)` is an orthonormal eigenbasis of
//! the support of `R`. A state `sum_k c_k u_k` in the support maps under `sqrt(R)` to
//! `sum_k c_k Phi v_k`, i.e. to coefficients `d = V c` on the product vectors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{complex_gaussian, cone, czero, Complex, Real};
use crate::statevector::{DenseOperator, LocalOperator, PureState, StateError};

/// Memory guard for full amplitude vectors.
pub const MAX_STATE_QUBITS: usize = 24;
/// Size guard for the geometric-measure optimizer.
pub const MAX_EG_QUBITS: usize = 16;
/// Eigenvalues of G above `K * SUPPORT_TOLERANCE * lambda_max` count as support.
pub const SUPPORT_TOLERANCE: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandStateError {
    #[error("{q} qubits exceeds the limit of {max}")]
    TooManyQubits { q: usize, max: usize },
    #[error("need at least one qubit")]
    NoQubits,
    #[error("rank K must be at least 1")]
    ZeroRank,
    #[error("rank K = {rank} outside [64, 2^q] for q = {q}")]
    RankOutsideBoundRange { rank: u64, q: usize },
    #[error("Gram matrix has no eigenvalue above the support tolerance")]
    DegenerateSupport,
    #[error("{coeffs} coefficients for {rank} product vectors")]
    CoefficientCount { coeffs: usize, rank: usize },
    #[error("malformed state dump: {0}")]
    Dump(String),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Haar-random pure state: i.i.d. complex Gaussian amplitudes, normalized.
pub fn sample_haar_state<T: Real, R: Rng + ?Sized>(q: usize, rng: &mut R) -> Result<PureState<T>, RandStateError> {
    if q == 0 {
        return Err(RandStateError::NoQubits);
    }
    if q > MAX_STATE_QUBITS {
        return Err(RandStateError::TooManyQubits {
            q,
            max: MAX_STATE_QUBITS,
        });
    }
    let amps = (0..1usize << q).map(|_| complex_gaussian(rng)).collect();
    Ok(PureState::new(amps)?.normalized()?)
}

/// Distribution of the single-qubit vectors in the Schmidt-rank-K ensemble.
///
/// Both choices average to `1/2` as a projector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalMeasure {
    #[default]
    Haar,
    /// Uniform over the six Pauli eigenstates.
    PauliEigenstates,
}

impl LocalMeasure {
    pub fn sample<T: Real, R: Rng + ?Sized>(self, rng: &mut R) -> [Complex<T>; 2] {
        match self {
            LocalMeasure::Haar => loop {
                let v = [complex_gaussian::<T, _>(rng), complex_gaussian(rng)];
                let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
                if n > T::zero() {
                    return [v[0].unscale(n), v[1].unscale(n)];
                }
            },
            LocalMeasure::PauliEigenstates => {
                let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
                let r = Complex::new(h, T::zero());
                let i = Complex::new(T::zero(), h);
                match rng.random_range(0..6) {
                    0 => [cone(), czero()],
                    1 => [czero(), cone()],
                    2 => [r, r],
                    3 => [r, -r],
                    4 => [r, i],
                    _ => [r, -i],
                }
            }
        }
    }
}

/// The `q K` single-qubit vectors `psi_j^(l)`, stored product by product.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalVectors<T: Real> {
    q: usize,
    rank: usize,
    vectors: Vec<[Complex<T>; 2]>,
}

impl<T: Real> LocalVectors<T> {
    /// `vectors[j * q + (l - 1)]` is `psi_j^(l)`.
    pub fn new(q: usize, rank: usize, vectors: Vec<[Complex<T>; 2]>) -> Result<Self, RandStateError> {
        if q == 0 {
            return Err(RandStateError::NoQubits);
        }
        if rank == 0 {
            return Err(RandStateError::ZeroRank);
        }
        if vectors.len() != q * rank {
            return Err(RandStateError::Dump(format!(
                "{} local vectors for q = {q}, K = {rank}",
                vectors.len()
            )));
        }
        Ok(Self { q, rank, vectors })
    }

    pub fn num_qubits(&self) -> usize {
        self.q
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The factors of product vector `j` (0-based), qubit 1 first.
    pub fn product(&self, j: usize) -> &[[Complex<T>; 2]] {
        &self.vectors[j * self.q..(j + 1) * self.q]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[[Complex<T>; 2]]> {
        self.vectors.chunks_exact(self.q)
    }

    pub fn all_vectors(&self) -> &[[Complex<T>; 2]] {
        &self.vectors
    }

    pub fn product_state(&self, j: usize) -> Result<PureState<T>, RandStateError> {
        guard_state(self.q)?;
        Ok(PureState::product(self.product(j)))
    }
}

fn guard_state(q: usize) -> Result<(), RandStateError> {
    if q > MAX_STATE_QUBITS {
        return Err(RandStateError::TooManyQubits {
            q,
            max: MAX_STATE_QUBITS,
        });
    }
    Ok(())
}

pub fn sample_local_vectors<T: Real, R: Rng + ?Sized>(
    q: usize,
    rank: usize,
    measure: LocalMeasure,
    rng: &mut R,
) -> Result<LocalVectors<T>, RandStateError> {
    let vectors = (0..q * rank).map(|_| measure.sample(rng)).collect();
    LocalVectors::new(q, rank, vectors)
}

fn local_inner<T: Real>(a: &[Complex<T>; 2], b: &[Complex<T>; 2]) -> Complex<T> {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// `G_ij = prod_l <psi_i^(l)|psi_j^(l)>`, in `O(K^2 q)` and exactly Hermitian.
pub fn gram_matrix<T: Real>(locals: &LocalVectors<T>) -> DMatrix<Complex<T>> {
    let k = locals.rank;
    let mut g = DMatrix::from_element(k, k, czero());
    for i in 0..k {
        let pi = locals.product(i);
        let diag = pi
            .iter()
            .fold(T::one(), |acc, v| acc * (v[0].norm_sqr() + v[1].norm_sqr()));
        g[(i, i)] = Complex::new(diag, T::zero());
        for j in i + 1..k {
            let pj = locals.product(j);
            let z = pi
                .iter()
                .zip(pj)
                .fold(cone::<T>(), |acc, (a, b)| acc * local_inner(a, b));
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    g
}

/// Largest eigenvalue of a Hermitian matrix.
///
/// Small matrices use a full eigendecomposition. Larger ones run Lanczos with full
/// reorthogonalization from a fixed start vector, stopping when the top Ritz pair's residual
/// `beta_j |s_j|` falls below `1e-12 * max(theta, 1)`.
pub fn hermitian_lambda_max<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    let n = m.nrows();
    if n <= 48 {
        return nalgebra::SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .fold(T::lit(f64::NEG_INFINITY), |a, &b| a.max(b));
    }
    let tol = T::lit(1e-12);
    let start = DVector::from_fn(n, |i, _| Complex::new(T::one() + T::lit(0.5 * (0.618_033_988_7 * i as f64).sin()), T::zero()));
    let mut basis: Vec<DVector<Complex<T>>> = vec![start.unscale(start.norm())];
    let (mut alpha, mut beta): (Vec<T>, Vec<T>) = (Vec::new(), Vec::new());
    let mut theta = T::zero();
    for j in 0..n {
        let qj = &basis[j];
        let mut w = m * qj;
        alpha.push(qj.dotc(&w).re);
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dotc(&w);
                w.axpy(-overlap, b, Complex::new(T::one(), T::zero()));
            }
        }
        let b = w.norm();
        let size = j + 1;
        let check = size % 4 == 0 || b <= tol || size == n;
        if check {
            let t = DMatrix::from_fn(size, size, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    T::zero()
                }
            });
            let eig = nalgebra::SymmetricEigen::new(t);
            let (top, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .fold((0, T::lit(f64::NEG_INFINITY)), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
            theta = eig.eigenvalues[top];
            let residual = b * eig.eigenvectors[(size - 1, top)].abs();
            if residual <= tol * theta.abs().max(T::one()) || b <= tol || size == n {
                return theta;
            }
        }
        beta.push(b);
        basis.push(w.unscale(b));
    }
    theta
}

/// Dense `R = sum_j |phi_j><phi_j|` built from explicit tensor products; small `q` only.
pub fn dense_r_operator<T: Real>(locals: &LocalVectors<T>) -> Result<DenseOperator<T>, RandStateError> {
    let mut r = DenseOperator::zeros(locals.q)?;
    for j in 0..locals.rank {
        let factors: Vec<_> = locals.product(j).iter().map(|v| LocalOperator::projector(*v)).collect();
        r.add_assign(&DenseOperator::tensor_product(&factors)?);
    }
    Ok(r)
}

/// Ensemble parameters for random Schmidt-rank-K states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchmidtEnsembleSpec {
    pub q: usize,
    #[serde(rename = "K")]
    pub rank: usize,
    #[serde(default)]
    pub local_measure: LocalMeasure,
    #[serde(default)]
    pub seed: u64,
}

impl SchmidtEnsembleSpec {
    pub fn validate(&self) -> Result<(), RandStateError> {
        if self.q == 0 {
            return Err(RandStateError::NoQubits);
        }
        if self.rank == 0 {
            return Err(RandStateError::ZeroRank);
        }
        Ok(())
    }

    /// Extra condition `64 <= K <= 2^q` for the rank-K concentration bound.
    pub fn validate_for_rank_bound(&self) -> Result<(), RandStateError> {
        self.validate()?;
        let rank = self.rank as u64;
        let fits = self.q >= 64 || rank <= 1u64 << self.q;
        if rank < 64 || !fits {
            return Err(RandStateError::RankOutsideBoundRange { rank, q: self.q });
        }
        Ok(())
    }
}

/// One draw from the Schmidt-rank-K ensemble, held in coefficient space.
#[derive(Clone, Debug)]
pub struct SchmidtSample<T: Real> {
    pub locals: LocalVectors<T>,
    pub gram: DMatrix<Complex<T>>,
    /// Eigenvalues of `G`, descending.
    pub eigenvalues: Vec<T>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: DMatrix<Complex<T>>,
    pub support_rank: usize,
    /// `|Psi> = sum_j coeffs[j] |phi_j>`.
    pub coeffs: Vec<Complex<T>>,
}

/// Draws locals, then a uniformly random support vector, then applies `sqrt(R)` and normalizes.
pub fn sample_schmidt_state<T: Real, R: Rng + ?Sized>(
    spec: &SchmidtEnsembleSpec,
    rng: &mut R,
) -> Result<SchmidtSample<T>, RandStateError> {
    spec.validate()?;
    let locals = sample_local_vectors(spec.q, spec.rank, spec.local_measure, rng)?;
    schmidt_from_locals(locals, rng)
}

/// Second half of [`sample_schmidt_state`] for caller-supplied local vectors.
pub fn schmidt_from_locals<T: Real, R: Rng + ?Sized>(
    locals: LocalVectors<T>,
    rng: &mut R,
) -> Result<SchmidtSample<T>, RandStateError> {
    let gram = gram_matrix(&locals);
    let k = locals.rank;
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let lambda_max = eigenvalues[0];
    let cutoff = T::from_usize(k).unwrap() * T::lit(SUPPORT_TOLERANCE) * lambda_max;
    let support_rank = eigenvalues.iter().take_while(|&&l| l > cutoff).count();
    if support_rank == 0 || lambda_max <= T::zero() {
        return Err(RandStateError::DegenerateSupport);
    }
    // uniform point in the support: Gaussian coordinates in the orthonormal basis u_k
    let c: Vec<Complex<T>> = (0..support_rank).map(|_| complex_gaussian(rng)).collect();
    let mut d = DVector::from_element(k, czero::<T>());
    for (col, ck) in c.iter().enumerate() {
        d += eigenvectors.column(col) * *ck;
    }
    let norm_sqr = (d.adjoint() * &gram * &d)[(0, 0)].re;
    let coeffs = d.iter().map(|z| z.unscale(norm_sqr.sqrt())).collect();
    Ok(SchmidtSample {
        locals,
        gram,
        eigenvalues,
        eigenvectors,
        support_rank,
        coeffs,
    })
}

impl<T: Real> SchmidtSample<T> {
    pub fn num_qubits(&self) -> usize {
        self.locals.q
    }

    pub fn rank(&self) -> usize {
        self.locals.rank
    }

    /// `<Psi|Psi> = d^dag G d`.
    pub fn norm_sqr(&self) -> T {
        quadratic_form(&self.gram, &self.coeffs).re
    }

    pub fn realize(&self) -> Result<PureState<T>, RandStateError> {
        expand_to_statevector(&self.locals, &self.coeffs)
    }

    pub fn r_infinity_norm(&self) -> T {
        self.eigenvalues[0]
    }

    /// `tr R^2 = sum_ij |G_ij|^2`.
    pub fn purity_tr_r2(&self) -> T {
        self.gram.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn trace_r(&self) -> T {
        self.gram.trace().re
    }

    /// `<Psi| (x)_l A_l |Psi>` in coefficient space, `O(K^2 q)`.
    pub fn product_expectation(&self, assignment: &[(usize, LocalOperator<T>)]) -> Result<Complex<T>, RandStateError> {
        let q = self.num_qubits();
        let mut ops = vec![LocalOperator::identity(); q];
        let mut seen = vec![false; q];
        for (qubit, op) in assignment {
            if *qubit == 0 || *qubit > q {
                return Err(StateError::QubitOutOfRange {
                    qubit: *qubit,
                    num_qubits: q,
                }
                .into());
            }
            if std::mem::replace(&mut seen[qubit - 1], true) {
                return Err(StateError::DuplicateQubit(*qubit).into());
            }
            ops[qubit - 1] = *op;
        }
        let k = self.rank();
        let m = DMatrix::from_fn(k, k, |i, j| {
            self.locals
                .product(i)
                .iter()
                .zip(self.locals.product(j))
                .zip(&ops)
                .fold(cone::<T>(), |acc, ((a, b), op)| acc * local_inner(a, &op.apply(*b)))
        });
        Ok(quadratic_form(&m, &self.coeffs))
    }

    /// `<Psi|M|Psi>` for a dense `M`, via the `K x K` matrix `phi_i^dag M phi_j`.
    pub fn expectation_dense(&self, m: &DenseOperator<T>) -> Result<Complex<T>, RandStateError> {
        let phis = (0..self.rank())
            .map(|j| self.locals.product_state(j))
            .collect::<Result<Vec<_>, _>>()?;
        let applied = phis.iter().map(|p| m.apply(p)).collect::<Result<Vec<_>, _>>()?;
        let k = self.rank();
        let mut reduced = DMatrix::from_element(k, k, czero());
        for i in 0..k {
            for j in 0..k {
                reduced[(i, j)] = phis[i].inner(&applied[j])?;
            }
        }
        Ok(quadratic_form(&reduced, &self.coeffs))
    }

    pub fn to_dump(&self, seed: Option<u64>) -> SchmidtDump {
        SchmidtDump {
            q: self.num_qubits(),
            rank: self.rank(),
            locals: self
                .locals
                .vectors
                .iter()
                .map(|v| v.map(|z| [z.re.as_f64(), z.im.as_f64()]))
                .collect(),
            coeffs: self.coeffs.iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect(),
            seed,
        }
    }
}

fn quadratic_form<T: Real>(m: &DMatrix<Complex<T>>, d: &[Complex<T>]) -> Complex<T> {
    let v = DVector::from_column_slice(d);
    (v.adjoint() * m * &v)[(0, 0)]
}

/// Free-function form of [`SchmidtSample::r_infinity_norm`].
pub fn r_infinity_norm<T: Real>(sample: &SchmidtSample<T>) -> T {
    sample.r_infinity_norm()
}

/// Free-function form of [`SchmidtSample::purity_tr_r2`].
pub fn purity_tr_r2<T: Real>(sample: &SchmidtSample<T>) -> T {
    sample.purity_tr_r2()
}

/// Amplitudes of `sum_j d_j phi_j`, one accumulation pass over `2^q` entries per product.
pub fn expand_to_statevector<T: Real>(
    locals: &LocalVectors<T>,
    coeffs: &[Complex<T>],
) -> Result<PureState<T>, RandStateError> {
    guard_state(locals.q)?;
    if coeffs.len() != locals.rank {
        return Err(RandStateError::CoefficientCount {
            coeffs: coeffs.len(),
            rank: locals.rank,
        });
    }
    let dim = 1usize << locals.q;
    let mut amps = vec![czero::<T>(); dim];
    let mut scratch = vec![czero::<T>(); dim];
    for (j, d) in coeffs.iter().enumerate() {
        // build d * phi_j in place: after processing l qubits the first 2^l entries are filled
        scratch[0] = *d;
        let mut len = 1;
        for v in locals.product(j) {
            for i in (0..len).rev() {
                let a = scratch[i];
                scratch[2 * i] = a * v[0];
                scratch[2 * i + 1] = a * v[1];
            }
            len *= 2;
        }
        for (acc, s) in amps.iter_mut().zip(&scratch) {
            *acc += s;
        }
    }
    Ok(PureState::new(amps)?)
}

/// Serialized Schmidt-rank-K state: `{q, K, locals, coeffs, seed}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchmidtDump {
    pub q: usize,
    #[serde(rename = "K")]
    pub rank: usize,
    /// `psi_j^(l)` at index `j * q + (l - 1)`, each as `[[re, im], [re, im]]`.
    pub locals: Vec<[[f64; 2]; 2]>,
    pub coeffs: Vec<[f64; 2]>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SchmidtDump {
    pub fn to_parts<T: Real>(&self) -> Result<(LocalVectors<T>, Vec<Complex<T>>), RandStateError> {
        let locals = LocalVectors::new(
            self.q,
            self.rank,
            self.locals
                .iter()
                .map(|v| v.map(|[re, im]| Complex::new(T::lit(re), T::lit(im))))
                .collect(),
        )?;
        if self.coeffs.len() != self.rank {
            return Err(RandStateError::CoefficientCount {
                coeffs: self.coeffs.len(),
                rank: self.rank,
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|[re, im]| Complex::new(T::lit(*re), T::lit(*im)))
            .collect();
        Ok((locals, coeffs))
    }

    pub fn realize<T: Real>(&self) -> Result<PureState<T>, RandStateError> {
        let (locals, coeffs) = self.to_parts::<T>()?;
        expand_to_statevector(&locals, &coeffs)
    }
}

/// Result of the alternating product-state optimization.
#[derive(Clone, Debug)]
pub struct GeometricEntanglement<T: Real> {
    /// `-log2` of the best squared overlap found. The witness certifies `E_g <= eg_bits`.
    pub eg_bits: T,
    pub overlap: T,
    /// Factors of the best product state, qubit 1 first.
    pub witness: Vec<[Complex<T>; 2]>,
    pub traces: Vec<OverlapTrace<T>>,
}

/// Overlap after every single-site update of one restart.
#[derive(Clone, Debug)]
pub struct OverlapTrace<T: Real> {
    pub overlaps: Vec<T>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Contracts every qubit except `site` against `conj(factors)`, leaving a 2-vector.
fn environment<T: Real>(amps: &[Complex<T>], factors: &[[Complex<T>; 2]], site: usize, buf: &mut Vec<Complex<T>>) -> [Complex<T>; 2] {
    let q = factors.len();
    buf.clear();
    buf.extend_from_slice(amps);
    let mut len = buf.len();
    // least significant qubits first: q, q-1, ..., site+1
    for l in (site + 1..=q).rev() {
        let [c0, c1] = factors[l - 1].map(|z| z.conj());
        for i in 0..len / 2 {
            buf[i] = buf[2 * i] * c0 + buf[2 * i + 1] * c1;
        }
        len /= 2;
    }
    // then from the most significant end: 1, 2, ..., site-1
    for l in 1..site {
        let [c0, c1] = factors[l - 1].map(|z| z.conj());
        let half = len / 2;
        for i in 0..half {
            buf[i] = buf[i] * c0 + buf[i + half] * c1;
        }
        len = half;
    }
    debug_assert_eq!(len, 2);
    [buf[0], buf[1]]
}

/// Heuristic estimate of `E_g = -log2 max_phi |<phi|Psi>|^2` over product states `phi`.
///
/// Each restart starts from a Haar-random product state and sweeps the sites, replacing one
/// factor at a time with its normalized environment vector; this never decreases the overlap.
/// A restart stops once a full sweep gains less than `tol`, or after `max_iters` sweeps.
pub fn estimate_geometric_entanglement<T: Real, R: Rng + ?Sized>(
    state: &PureState<T>,
    restarts: usize,
    max_iters: usize,
    tol: T,
    rng: &mut R,
) -> Result<GeometricEntanglement<T>, RandStateError> {
    let q = state.num_qubits();
    if q > MAX_EG_QUBITS {
        return Err(RandStateError::TooManyQubits { q, max: MAX_EG_QUBITS });
    }
    let norm_sqr = state.norm_sqr();
    if norm_sqr <= T::zero() {
        return Err(StateError::ZeroNorm.into());
    }
    let amps = state.amplitudes();
    let mut buf = Vec::with_capacity(amps.len());
    let mut best: Option<(T, Vec<[Complex<T>; 2]>)> = None;
    let mut traces = Vec::with_capacity(restarts.max(1));
    for _ in 0..restarts.max(1) {
        let mut factors: Vec<[Complex<T>; 2]> = (0..q).map(|_| LocalMeasure::Haar.sample(rng)).collect();
        let mut overlaps = Vec::new();
        let mut previous = T::zero();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < max_iters.max(1) {
            sweeps += 1;
            for site in 1..=q {
                let e = environment(amps, &factors, site, &mut buf);
                let en = (e[0].norm_sqr() + e[1].norm_sqr()).sqrt();
                if en > T::zero() {
                    factors[site - 1] = [e[0].unscale(en), e[1].unscale(en)];
                }
                overlaps.push(en * en / norm_sqr);
            }
            let current = *overlaps.last().unwrap();
            if current - previous < tol {
                converged = true;
                break;
            }
            previous = current;
        }
        let final_overlap = *overlaps.last().unwrap();
        if best.as_ref().is_none_or(|(o, _)| final_overlap > *o) {
            best = Some((final_overlap, factors));
        }
        traces.push(OverlapTrace {
            overlaps,
            sweeps,
            converged,
        });
    }
    let (overlap, witness) = best.expect("at least one restart");
    Ok(GeometricEntanglement {
        eg_bits: -overlap.log2(),
        overlap,
        witness,
        traces,
    })
}
