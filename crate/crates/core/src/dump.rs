//! Binary dumps of state vectors and dense operators.
//!
//! State files start with the 8 bytes `AMBQCSV1` followed by `2^q` little-endian `(re, im)`
//! pairs of `f64`; `q` is implied by the length. Operator files start with `AMBQCOP1`, then `q`
//! as a little-endian `u32`, then the `2^q x 2^q` entries in row-major order.

use std::io::{self, Read, Write};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::scalar::{Complex, Real};
use crate::statevector::{DenseOperator, PureState, StateError, MAX_DENSE_QUBITS};

pub const STATE_MAGIC: &[u8; 8] = b"AMBQCSV1";
pub const OPERATOR_MAGIC: &[u8; 8] = b"AMBQCOP1";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a {expected} file (bad header)")]
    BadMagic { expected: &'static str },
    #[error("payload of {0} bytes is not a whole number of complex entries")]
    Truncated(usize),
    #[error("operator header claims q = {0}, beyond the dense limit")]
    TooLarge(u32),
    #[error(transparent)]
    State(#[from] StateError),
}

fn write_complex<T: Real, W: Write>(z: &Complex<T>, w: &mut W) -> io::Result<()> {
    w.write_all(&z.re.as_f64().to_le_bytes())?;
    w.write_all(&z.im.as_f64().to_le_bytes())
}

fn parse_complex<T: Real>(chunk: &[u8]) -> Complex<T> {
    let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
    let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
    Complex::new(T::lit(re), T::lit(im))
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 8], expected: &'static str) -> Result<(), DumpError> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head).map_err(|_| DumpError::BadMagic { expected })?;
    if &head != magic {
        return Err(DumpError::BadMagic { expected });
    }
    Ok(())
}

pub fn write_state<T: Real, W: Write>(state: &PureState<T>, mut w: W) -> io::Result<()> {
    w.write_all(STATE_MAGIC)?;
    for a in state.amplitudes() {
        write_complex(a, &mut w)?;
    }
    w.flush()
}

pub fn read_state<T: Real, R: Read>(mut r: R) -> Result<PureState<T>, DumpError> {
    read_magic(&mut r, STATE_MAGIC, "state")?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() % 16 != 0 {
        return Err(DumpError::Truncated(payload.len()));
    }
    let amps = payload.chunks_exact(16).map(parse_complex).collect();
    Ok(PureState::new(amps)?)
}

/// True when `bytes` begins with the state header.
pub fn is_state_dump(bytes: &[u8]) -> bool {
    bytes.starts_with(STATE_MAGIC)
}

pub fn write_operator<T: Real, W: Write>(op: &DenseOperator<T>, mut w: W) -> io::Result<()> {
    w.write_all(OPERATOR_MAGIC)?;
    w.write_all(&(op.num_qubits() as u32).to_le_bytes())?;
    let m = op.matrix();
    for i in 0..op.dim() {
        for j in 0..op.dim() {
            write_complex(&m[(i, j)], &mut w)?;
        }
    }
    w.flush()
}

pub fn read_operator<T: Real, R: Read>(mut r: R) -> Result<DenseOperator<T>, DumpError> {
    read_magic(&mut r, OPERATOR_MAGIC, "operator")?;
    let mut qb = [0u8; 4];
    r.read_exact(&mut qb)?;
    let q = u32::from_le_bytes(qb);
    if q as usize > MAX_DENSE_QUBITS {
        return Err(DumpError::TooLarge(q));
    }
    let dim = 1usize << q;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != dim * dim * 16 {
        return Err(DumpError::Truncated(payload.len()));
    }
    let entries: Vec<Complex<T>> = payload.chunks_exact(16).map(parse_complex).collect();
    Ok(DenseOperator::from_matrix(DMatrix::from_row_slice(dim, dim, &entries))?)
}
