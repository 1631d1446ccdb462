//! Scalar abstraction shared by the numerical modules.
//!
//! Everything that touches amplitudes or matrices is generic over [`Real`], which is
//! implemented for `f32` and `f64`. The crate root exports `f64` aliases for the
//! common types; the tolerances used throughout assume double precision.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use num_complex::Complex;

/// Real scalar usable as the component type of amplitudes and operators.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + std::fmt::Display + Send + Sync + 'static
{
    /// Draws a standard normal variate.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws uniformly from `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` literal, rounding if the target is narrower.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar converts to f64")
    }
}

impl Real for f32 {
    #[inline]
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}

impl Real for f64 {
    #[inline]
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

/// Standard complex Gaussian with `E|z|^2 = 1`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let half = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    Complex::new(
        T::sample_standard_normal(rng) * half,
        T::sample_standard_normal(rng) * half,
    )
}

#[inline]
pub(crate) fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}

#[inline]
pub(crate) fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cone<T: Real>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complex_gaussian_has_unit_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let m: f64 = (0..n)
            .map(|_| complex_gaussian::<f64, _>(&mut rng).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((m - 1.0).abs() < 0.05, "{m}");
    }

    #[test]
    fn f32_and_f64_both_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: f32 = Real::sample_unit(&mut rng);
        let b: f64 = Real::sample_unit(&mut rng);
        assert!((0.0..1.0).contains(&a) && (0.0..1.0).contains(&b));
    }
}
