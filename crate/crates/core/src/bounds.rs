//! Closed-form sample-size calculator for mask recovery.
//!
//! Recovering a k-dimensional mask space from n-bit addresses needs the
//! difference matrix to reach rank n - k. Randomly generated pairs land in
//! the right bucket with probability 2^-k and survive mislabeling with
//! probability 1 - theta, which gives the pair counts computed here: enough
//! samples to reach full rank except with probability epsilon.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("address bits n={0} out of range (expected 2..=64)")]
    InvalidN(usize),
    #[error("k={k} must satisfy 1 <= k < n={n}")]
    InvalidK { k: usize, n: usize },
    #[error("k'={k_prime} must satisfy 1 <= k' and k + k' < n (k={k}, n={n})")]
    InvalidKPrime { k_prime: usize, k: usize, n: usize },
    #[error("theta={0} out of range [0, 1)")]
    InvalidTheta(f64),
    #[error("epsilon={0} out of range (0, 1)")]
    InvalidEpsilon(f64),
}

/// Inputs to the sample bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Physical address bits.
    pub n: usize,
    /// Bank/channel space dimension.
    pub k: usize,
    /// Row space dimension; only the row bound reads it.
    pub k_prime: usize,
    /// Fraction of mislabeled pairs, in [0, 1).
    pub theta: f64,
    /// Accepted failure probability, in (0, 1).
    pub epsilon: f64,
}

impl BoundParams {
    fn validate_common(&self) -> Result<(), BoundsError> {
        if !(2..=64).contains(&self.n) {
            return Err(BoundsError::InvalidN(self.n));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(BoundsError::InvalidK { k: self.k, n: self.n });
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(BoundsError::InvalidTheta(self.theta));
        }
        if self.epsilon <= 0.0 || self.epsilon >= 1.0 {
            return Err(BoundsError::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// `2^exp - 1` in floating point. Exact for exp <= 52; above that the -1 is
/// below the representable granularity and is absorbed.
fn pow2_minus_one(exp: usize) -> f64 {
    if exp <= 52 {
        (1u64 << exp) as f64 - 1.0
    } else {
        (exp as f64).exp2()
    }
}

fn bound(k: usize, unknown_dims: usize, theta: f64, epsilon: f64) -> u64 {
    let factor = (k as f64).exp2() / (1.0 - theta);
    let samples = factor * (pow2_minus_one(unknown_dims) / epsilon).log2();
    samples.ceil() as u64
}

/// Random address pairs needed to pin down the bank/channel masks:
/// `ceil( 2^k / (1 - theta) * log2((2^(n-k) - 1) / epsilon) )`.
pub fn bank_sample_bound(p: &BoundParams) -> Result<u64, BoundsError> {
    p.validate_common()?;
    Ok(bound(p.k, p.n - p.k, p.theta, p.epsilon))
}

/// Same-bank address pairs needed to pin down the row masks, with the k
/// bank dimensions already known:
/// `ceil( 2^k' / (1 - theta) * log2((2^(n-k-k') - 1) / epsilon) )`.
pub fn row_sample_bound(p: &BoundParams) -> Result<u64, BoundsError> {
    p.validate_common()?;
    if p.k_prime == 0 || p.k + p.k_prime >= p.n {
        return Err(BoundsError::InvalidKPrime {
            k_prime: p.k_prime,
            k: p.k,
            n: p.n,
        });
    }
    Ok(bound(p.k_prime, p.n - p.k - p.k_prime, p.theta, p.epsilon))
}
