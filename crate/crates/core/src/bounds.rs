//! Closed-form tail bounds, evaluated in natural-log space.
//!
//! Desk-scale parameters give exponents far below the smallest `f64`, so every evaluator
//! returns a [`LogBound`]: the natural log, its base-10 form, and the probability clipped
//! into `[0, 1]`. A bound whose log is nonnegative says nothing and is flagged vacuous.

use std::f64::consts::{LN_10, LN_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `c = 1 / (9 pi^3)`, the concentration constant for Lipschitz functions on the sphere.
pub fn levy_constant() -> f64 {
    1.0 / (9.0 * PI.powi(3))
}

/// `c' = 1 / (1296 pi^3)`, the constant of the rank-K bound.
pub fn rank_constant() -> f64 {
    1.0 / (1296.0 * PI.powi(3))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("epsilon = {0} must lie in [0, 1]")]
    Epsilon(f64),
    #[error("sphere dimension d = {0} must be at least 1")]
    Dimension(f64),
    #[error("Lipschitz constant {0} must be positive")]
    Lipschitz(f64),
    #[error("circuit width w = {0} must be at least 3")]
    Width(u64),
    #[error("rank K = {0} must be at least 1")]
    ZeroRank(u64),
    #[error("rank K = {rank} is below 64")]
    RankBelow64 { rank: u64 },
    #[error("rank K = {rank} exceeds 2^q = 2^{q}")]
    RankAboveDimension { rank: u64, q: u32 },
    #[error("reduction size k = {0} must be at least 2")]
    ReductionTooSmall(u32),
    #[error("reduction size k = {k} exceeds q = {q}")]
    ReductionAboveQ { k: u32, q: u32 },
    #[error("rank K = {rank} is below 4 * 2^k = {needed}")]
    RankBelowReduction { rank: u64, needed: u128 },
}

/// A bound given by its natural log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogBound {
    pub ln: f64,
    pub log10: f64,
    /// `min(1, exp(ln))`.
    pub probability: f64,
    /// True when the bound is at least 1.
    pub vacuous: bool,
}

impl LogBound {
    pub fn from_ln(ln: f64) -> Self {
        Self {
            ln,
            log10: ln / LN_10,
            probability: ln.exp().min(1.0),
            vacuous: ln >= 0.0,
        }
    }
}

fn check_eps(eps: f64) -> Result<(), BoundError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(BoundError::Epsilon(eps));
    }
    Ok(())
}

fn check_width(w: u64) -> Result<(), BoundError> {
    if w < 3 {
        return Err(BoundError::Width(w));
    }
    Ok(())
}

/// `ln` of the number of circuits, relaxed to `(8^8 w)^{3v}`.
fn circuit_term(w: u64, v: u64) -> f64 {
    3.0 * v as f64 * (8.0 * 8f64.ln() + (w as f64).ln())
}

/// `4 exp(-c eps^2 d / Lambda^2)` for a `Lambda`-Lipschitz function on the unit sphere in `R^d`.
pub fn levy_log_tail(eps: f64, d: f64, lambda: f64) -> Result<LogBound, BoundError> {
    check_eps(eps)?;
    if d.is_nan() || d < 1.0 {
        return Err(BoundError::Dimension(d));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(BoundError::Lipschitz(lambda));
    }
    Ok(LogBound::from_ln(4f64.ln() - levy_constant() * eps * eps * d / (lambda * lambda)))
}

/// `(8^8 w)^{3v} exp(-c eps^2 2^q)`: some width-`w`, `v`-gate controller deviates by more than
/// `eps` from the mixed-state acceptance.
pub fn thm1_log_bound(eps: f64, q: u32, w: u64, v: u64) -> Result<LogBound, BoundError> {
    sampling_log_bound(eps, q, w, v, 0)
}

/// `2^t (8^8 w)^{3v} exp(-c eps^2 2^{q - 2t})` for `t`-bit samples in l1 distance.
pub fn sampling_log_bound(eps: f64, q: u32, w: u64, v: u64, t: u32) -> Result<LogBound, BoundError> {
    check_eps(eps)?;
    check_width(w)?;
    let exponent = q as i32 - 2 * t as i32;
    Ok(LogBound::from_ln(
        t as f64 * LN_2 + circuit_term(w, v) - levy_constant() * eps * eps * 2f64.powi(exponent),
    ))
}

/// `(2^q + (8^8 w)^{3v}) exp(-c' eps^2 K^{1/3})` for random Schmidt-rank-K states.
pub fn thm2_log_bound(eps: f64, q: u32, w: u64, v: u64, rank: u64) -> Result<LogBound, BoundError> {
    check_eps(eps)?;
    check_width(w)?;
    if rank < 64 {
        return Err(BoundError::RankBelow64 { rank });
    }
    if q < 64 && rank > 1u64 << q {
        return Err(BoundError::RankAboveDimension { rank, q });
    }
    let a = q as f64 * LN_2;
    let b = circuit_term(w, v);
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let lse = hi + (lo - hi).exp().ln_1p();
    Ok(LogBound::from_ln(lse - rank_constant() * eps * eps * (rank as f64).cbrt()))
}

/// `k = floor((2/3) log2 K)`, the largest `k` with `2^{3k} <= K^2`.
pub fn thm2_k_choice(rank: u64) -> Result<u32, BoundError> {
    if rank == 0 {
        return Err(BoundError::ZeroRank(0));
    }
    let square = (rank as u128) * (rank as u128);
    let mut k = 0u32;
    while 3 * (k + 1) < 128 && (1u128 << (3 * (k + 1))) <= square {
        k += 1;
    }
    Ok(k)
}

/// `2^q exp(-K 2^{-k} / 3)`: tail of `||R||_inf` above `2 K 2^{-k}`.
pub fn lemma_r_log_bound(q: u32, rank: u64, k: u32) -> Result<LogBound, BoundError> {
    if k < 2 {
        return Err(BoundError::ReductionTooSmall(k));
    }
    if k > q {
        return Err(BoundError::ReductionAboveQ { k, q });
    }
    let needed = 4u128 << k;
    if (rank as u128) < needed {
        return Err(BoundError::RankBelowReduction { rank, needed });
    }
    Ok(LogBound::from_ln(q as f64 * LN_2 - rank as f64 * 2f64.powi(-(k as i32)) / 3.0))
}

/// Threshold `2 K 2^{-k}` on `||R||_inf` that pairs with [`lemma_r_log_bound`].
pub fn lemma_r_threshold(rank: u64, k: u32) -> f64 {
    2.0 * rank as f64 * 2f64.powi(-(k as i32))
}

/// `2 exp(-2 eps^2 K)`, the two-sided Hoeffding bound for a mean of `K` variables in `[0, 1]`.
pub fn hoeffding_log_bound(eps: f64, rank: u64) -> Result<LogBound, BoundError> {
    check_eps(eps)?;
    if rank == 0 {
        return Err(BoundError::ZeroRank(rank));
    }
    Ok(LogBound::from_ln(LN_2 - 2.0 * eps * eps * rank as f64))
}

/// Operator-norm cap `4 K^{1/3}` and the resulting Lipschitz constant `8 K^{1/3}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBudget {
    pub r_norm_cap: f64,
    pub lipschitz: f64,
}

pub fn thm2_lipschitz_budget(rank: u64) -> Result<LipschitzBudget, BoundError> {
    if rank == 0 {
        return Err(BoundError::ZeroRank(rank));
    }
    let c = (rank as f64).cbrt();
    Ok(LipschitzBudget {
        r_norm_cap: 4.0 * c,
        lipschitz: 8.0 * c,
    })
}

/// The rank-K argument chains three deviations of size `eps`; to reach a total of `eps`,
/// each step uses `eps / 3`.
pub fn per_step_epsilon(eps: f64) -> f64 {
    eps / 3.0
}

/// Total deviation of the three chained steps at per-step size `step`.
pub fn composed_deviation(step: f64) -> f64 {
    3.0 * step
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants() {
        assert!((levy_constant() - 3.583_503_825_911_055e-3).abs() < 1e-17);
        assert!((levy_constant() / rank_constant() - 144.0).abs() < 1e-12);
    }

    #[test]
    fn levy_examples() {
        let b = levy_log_tail(0.05, 8192.0, 1.0).unwrap();
        assert!((b.ln - 1.3129).abs() < 1e-4);
        assert_eq!(b.probability, 1.0);
        assert!(b.vacuous);
        let inf = levy_log_tail(0.5, 100.0, f64::INFINITY).unwrap();
        assert!((inf.ln - 4f64.ln()).abs() < 1e-15);
        let a = levy_log_tail(0.3, 1000.0, 2.0).unwrap().ln;
        let b = levy_log_tail(0.3, 2000.0, 2.0).unwrap().ln;
        let c = levy_log_tail(0.3, 3000.0, 2.0).unwrap().ln;
        assert!(((a - b) - (b - c)).abs() < 1e-12);
        assert!(levy_log_tail(0.1, 0.5, 1.0).is_err());
        assert!(levy_log_tail(0.1, 10.0, 0.0).is_err());
    }

    #[test]
    fn thm1_examples() {
        let b = thm1_log_bound(0.0, 10, 64, 0).unwrap();
        assert_eq!(b.ln, 0.0);
        assert_eq!(b.probability, 1.0);
        assert!(b.vacuous);
        let b = thm1_log_bound(0.1, 30, 64, 100).unwrap();
        assert!((b.ln + 3.224e4).abs() < 5.0, "{}", b.ln);
        assert_eq!(b.probability, 0.0);
        assert!(!b.vacuous);
        assert!(thm1_log_bound(0.1, 10, 2, 1).is_err());
    }

    #[test]
    fn sampling_algebra() {
        let base = sampling_log_bound(0.1, 40, 64, 10, 3).unwrap().ln;
        let next = sampling_log_bound(0.1, 40, 64, 10, 4).unwrap().ln;
        let neg = |t: u32| levy_constant() * 0.01 * 2f64.powi(40 - 2 * t as i32);
        assert!((next - base - (LN_2 + neg(3) - neg(4))).abs() < 1e-9 * neg(3));
        assert!((neg(4) * 4.0 - neg(3)).abs() < 1e-6);
    }

    #[test]
    fn thm2_range() {
        assert!(thm2_log_bound(0.1, 6, 64, 1, 64).is_ok());
        assert_eq!(thm2_log_bound(0.1, 6, 64, 1, 63), Err(BoundError::RankBelow64 { rank: 63 }));
        assert_eq!(
            thm2_log_bound(0.1, 6, 64, 1, 65),
            Err(BoundError::RankAboveDimension { rank: 65, q: 6 })
        );
    }

    #[test]
    fn k_choice() {
        assert_eq!(thm2_k_choice(4096).unwrap(), 8);
        assert_eq!(thm2_k_choice(1).unwrap(), 0);
        assert_eq!(thm2_k_choice(7).unwrap(), 1);
        assert_eq!(thm2_k_choice(8).unwrap(), 2);
        for rank in [64u64, 100, 1000, 1 << 20, 123_456_789] {
            let k = thm2_k_choice(rank).unwrap();
            assert_eq!(k, ((2.0 / 3.0) * (rank as f64).log2()).floor() as u32);
        }
    }

    #[test]
    fn lemma_r_examples() {
        let b = lemma_r_log_bound(10, 1024, 2).unwrap();
        assert!((b.ln - (10.0 * LN_2 - 1024.0 / 12.0)).abs() < 1e-12);
        assert!((b.ln + 78.40).abs() < 0.01);
        assert!(lemma_r_log_bound(10, 4 << 3, 3).is_ok());
        assert_eq!(
            lemma_r_log_bound(10, (4 << 3) - 1, 3),
            Err(BoundError::RankBelowReduction { rank: 31, needed: 32 })
        );
        assert_eq!(lemma_r_log_bound(10, 1024, 1), Err(BoundError::ReductionTooSmall(1)));
        assert_eq!(lemma_r_log_bound(3, 1024, 4), Err(BoundError::ReductionAboveQ { k: 4, q: 3 }));
        assert_eq!(lemma_r_threshold(1024, 2), 512.0);
    }

    #[test]
    fn hoeffding_examples() {
        let b = hoeffding_log_bound(0.1, 256).unwrap();
        assert!((b.ln - (LN_2 - 5.12)).abs() < 1e-14);
        assert!((b.probability - 1.19e-2).abs() < 1e-4);
        let zero = hoeffding_log_bound(0.0, 10).unwrap();
        assert!((zero.ln - LN_2).abs() < 1e-15 && zero.probability == 1.0);
        let a = hoeffding_log_bound(0.2, 100).unwrap().ln - LN_2;
        let d = hoeffding_log_bound(0.2, 200).unwrap().ln - LN_2;
        assert!((d - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_budget() {
        let b = thm2_lipschitz_budget(64).unwrap();
        assert!((b.r_norm_cap - 16.0).abs() < 1e-12 && (b.lipschitz - 32.0).abs() < 1e-12);
        let b = thm2_lipschitz_budget(1000).unwrap();
        assert!((b.r_norm_cap - 40.0).abs() < 1e-12 && (b.lipschitz - 80.0).abs() < 1e-12);
        assert!((composed_deviation(per_step_epsilon(0.3)) - 0.3).abs() < 1e-16);
    }

    proptest! {
        #[test]
        fn probabilities_are_clipped(eps in 0.0f64..=1.0, q in 1u32..80, w in 3u64..1000, v in 0u64..50, t in 0u32..10) {
            let b = sampling_log_bound(eps, q, w, v, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&b.probability));
            prop_assert_eq!(b.vacuous, b.ln >= 0.0);
        }

        #[test]
        fn thm1_is_sampling_at_zero_bits(eps in 0.0f64..=1.0, q in 1u32..80, w in 3u64..1000, v in 0u64..50) {
            prop_assert_eq!(thm1_log_bound(eps, q, w, v).unwrap(), sampling_log_bound(eps, q, w, v, 0).unwrap());
        }

        #[test]
        fn thm1_decreases_in_q(eps in 0.01f64..=1.0, q in 1u32..60, w in 3u64..100, v in 0u64..20) {
            prop_assert!(thm1_log_bound(eps, q + 1, w, v).unwrap().ln < thm1_log_bound(eps, q, w, v).unwrap().ln);
        }

        #[test]
        fn thm2_decreases_in_rank(eps in 0.01f64..=1.0, rank in 64u64..1_000_000) {
            prop_assert!(thm2_log_bound(eps, 40, 64, 10, rank + 1).unwrap().ln < thm2_log_bound(eps, 40, 64, 10, rank).unwrap().ln);
        }
    }
}
