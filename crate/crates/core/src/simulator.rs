//! Synthetic trace generation under a bimodal latency model.
//!
//! Access latencies are drawn from two normal distributions, row hits low
//! and row conflicts high, with an optional label-swap noise term: with
//! probability `mislabel_rate` a pair samples from the wrong distribution,
//! which is exactly a misclassified measurement after thresholding. A
//! closed-page controller is modeled by forcing every access onto the high
//! distribution, collapsing the bimodality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::gf2::{BitMatrix, BitVector};
use crate::mapping::{MappingError, MappingSpec};
use crate::traces::TraceRecord;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid latency model: {0}")]
    InvalidModel(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("config address_bits {cfg} does not match spec address_bits {spec}")]
    AddressBitsMismatch { cfg: usize, spec: usize },
    #[error("same-bank generation infeasible: every aligned bit flip changes the bank index")]
    SameBankInfeasible,
    #[error("oracle unusable: closed-page latencies carry no row-conflict signal")]
    OracleUnusable,
    #[error("oracle trials must be odd and >= 1, got {0}")]
    InvalidTrials(usize),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// Bimodal access-latency model, in cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub low_mean: f64,
    pub low_std: f64,
    pub high_mean: f64,
    pub high_std: f64,
    /// Probability of sampling from the wrong distribution.
    pub mislabel_rate: f64,
    /// Model a controller that closes the row after every access.
    pub closed_page: bool,
}

impl Default for LatencyModel {
    /// Defaults match a typical DDR histogram: row hits around 170-180
    /// cycles, conflicts around 220-240.
    fn default() -> Self {
        Self {
            low_mean: 175.0,
            low_std: 3.0,
            high_mean: 230.0,
            high_std: 5.0,
            mislabel_rate: 0.0,
            closed_page: false,
        }
    }
}

impl LatencyModel {
    pub fn with_noise(mislabel_rate: f64) -> Self {
        Self {
            mislabel_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.mislabel_rate) {
            return Err(SimError::InvalidModel(format!(
                "mislabel_rate {} out of range [0, 1)",
                self.mislabel_rate
            )));
        }
        if self.low_std <= 0.0 || self.high_std <= 0.0 {
            return Err(SimError::InvalidModel("standard deviations must be positive".into()));
        }
        if !self.closed_page
            && self.low_mean + 3.0 * self.low_std >= self.high_mean - 3.0 * self.high_std
        {
            return Err(SimError::InvalidModel(
                "latency distributions overlap within 3 sigma; not separable".into(),
            ));
        }
        Ok(())
    }

    /// Classification threshold halfway between the two means.
    pub fn midpoint(&self) -> f64 {
        (self.low_mean + self.high_mean) / 2.0
    }
}

/// How the two addresses of a generated pair relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairConstraint {
    /// Both addresses uniform over the aligned address space.
    AnyPair,
    /// The second address differs only in directions that keep the bank
    /// index fixed.
    SameBank,
}

/// Trace generation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub pair_count: usize,
    pub seed: u64,
    /// Low address bits forced to zero (cache-line granularity of real
    /// probers). These bits are never exercised, so solvers must report
    /// them as undetermined.
    pub alignment_bits: usize,
    pub constraint: PairConstraint,
    pub address_bits: usize,
}

impl GenConfig {
    pub fn new(address_bits: usize, pair_count: usize, seed: u64) -> Self {
        Self {
            pair_count,
            seed,
            alignment_bits: 6,
            constraint: PairConstraint::AnyPair,
            address_bits,
        }
    }

    pub fn same_bank(mut self) -> Self {
        self.constraint = PairConstraint::SameBank;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.pair_count == 0 {
            return Err(SimError::InvalidConfig("pair_count must be >= 1".into()));
        }
        if self.alignment_bits >= self.address_bits {
            return Err(SimError::InvalidConfig(format!(
                "alignment_bits {} must be below address_bits {}",
                self.alignment_bits, self.address_bits
            )));
        }
        Ok(())
    }
}

/// Draws one access latency. Conflicts sample the high distribution, hits
/// the low one; with probability `mislabel_rate` the sides are swapped, and
/// a closed-page model always samples high.
pub fn sample_latency(model: &LatencyModel, conflict: bool, rng: &mut impl Rng) -> u64 {
    let swapped = model.mislabel_rate > 0.0 && rng.random_bool(model.mislabel_rate);
    let high = model.closed_page || (conflict ^ swapped);
    let (mean, std) = if high {
        (model.high_mean, model.high_std)
    } else {
        (model.low_mean, model.low_std)
    };
    let normal = Normal::new(mean, std).expect("validated std");
    normal.sample(rng).round().max(0.0) as u64
}

fn aligned_mask(cfg: &GenConfig) -> u64 {
    let full = if cfg.address_bits == 64 {
        u64::MAX
    } else {
        (1u64 << cfg.address_bits) - 1
    };
    full & !((1u64 << cfg.alignment_bits) - 1)
}

/// Basis of address differences that preserve the index of `preserve` and
/// respect the alignment, i.e. the nullspace of that matrix stacked with one
/// single-bit row per alignment bit.
fn index_preserving_basis(preserve: &BitMatrix, cfg: &GenConfig) -> Result<Vec<u64>, SimError> {
    let mut constrained = preserve.clone();
    for bit in 0..cfg.alignment_bits {
        constrained
            .push_row(BitVector::single_bit(bit, cfg.address_bits).expect("validated bit"))
            .expect("width fixed");
    }
    let basis = constrained.nullspace_basis();
    if basis.is_empty() {
        return Err(SimError::SameBankInfeasible);
    }
    Ok(basis.row_bits().to_vec())
}

fn per_record_rng(base: &ChaCha8Rng, index: usize) -> ChaCha8Rng {
    // Independent substream per record, so generation order (or a parallel
    // split) cannot change the output for a given seed.
    let mut rng = base.clone();
    rng.set_stream(index as u64 + 1);
    rng
}

struct PairGen {
    base: ChaCha8Rng,
    mask: u64,
    width: usize,
    diff_basis: Option<Vec<u64>>,
}

impl PairGen {
    fn new(spec: &MappingSpec, cfg: &GenConfig) -> Result<Self, SimError> {
        let preserve = match cfg.constraint {
            PairConstraint::AnyPair => None,
            PairConstraint::SameBank => Some(spec.bank_matrix()),
        };
        Self::with_preserved(spec, cfg, preserve)
    }

    fn with_preserved(
        spec: &MappingSpec,
        cfg: &GenConfig,
        preserve: Option<&BitMatrix>,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if cfg.address_bits != spec.address_bits() {
            return Err(SimError::AddressBitsMismatch {
                cfg: cfg.address_bits,
                spec: spec.address_bits(),
            });
        }
        let diff_basis = match preserve {
            None => None,
            Some(matrix) => Some(index_preserving_basis(matrix, cfg)?),
        };
        Ok(Self {
            base: ChaCha8Rng::seed_from_u64(cfg.seed),
            mask: aligned_mask(cfg),
            width: cfg.address_bits,
            diff_basis,
        })
    }

    fn pair(&self, index: usize) -> (BitVector, BitVector, ChaCha8Rng) {
        let mut rng = per_record_rng(&self.base, index);
        let a_bits = rng.random::<u64>() & self.mask;
        let b_bits = match &self.diff_basis {
            None => rng.random::<u64>() & self.mask,
            Some(basis) => {
                let coefficients = rng.random::<u64>();
                let mut diff = 0u64;
                for (j, &row) in basis.iter().enumerate() {
                    if (coefficients >> j) & 1 == 1 {
                        diff ^= row;
                    }
                }
                a_bits ^ diff
            }
        };
        let a = BitVector::new(a_bits, self.width).expect("masked to width");
        let b = BitVector::new(b_bits, self.width).expect("masked to width");
        (a, b, rng)
    }
}

/// Generates a timing-labeled trace: `pair_count` records, addresses uniform
/// over the aligned space, one latency draw per pair. Deterministic for a
/// fixed seed.
pub fn generate_trace(
    spec: &MappingSpec,
    model: &LatencyModel,
    cfg: &GenConfig,
) -> Result<Vec<TraceRecord>, SimError> {
    model.validate()?;
    let gen = PairGen::new(spec, cfg)?;
    let mut records = Vec::with_capacity(cfg.pair_count);
    for i in 0..cfg.pair_count {
        let (a, b, mut rng) = gen.pair(i);
        let conflict = spec.is_conflict(&a, &b)?;
        let latency = sample_latency(model, conflict, &mut rng);
        records.push(TraceRecord::with_latency(a, b, latency));
    }
    Ok(records)
}

/// Like `generate_trace` with the same-bank constraint, but preserving the
/// index of an arbitrary mask matrix (typically a recovered bank basis, which
/// is all a real prober would have). Latencies still come from the true spec.
pub fn generate_trace_preserving(
    spec: &MappingSpec,
    model: &LatencyModel,
    cfg: &GenConfig,
    preserve: &BitMatrix,
) -> Result<Vec<TraceRecord>, SimError> {
    model.validate()?;
    let gen = PairGen::with_preserved(spec, cfg, Some(preserve))?;
    let mut records = Vec::with_capacity(cfg.pair_count);
    for i in 0..cfg.pair_count {
        let (a, b, mut rng) = gen.pair(i);
        let conflict = spec.is_conflict(&a, &b)?;
        let latency = sample_latency(model, conflict, &mut rng);
        records.push(TraceRecord::with_latency(a, b, latency));
    }
    Ok(records)
}

/// Generates ground-truth-labeled pairs with no latency sampling. Useful for
/// datasets where noise is injected directly into the labels.
pub fn generate_labeled_pairs(
    spec: &MappingSpec,
    cfg: &GenConfig,
) -> Result<Vec<TraceRecord>, SimError> {
    let gen = PairGen::new(spec, cfg)?;
    let mut records = Vec::with_capacity(cfg.pair_count);
    for i in 0..cfg.pair_count {
        let (a, b, _) = gen.pair(i);
        let conflict = spec.is_conflict(&a, &b)?;
        records.push(TraceRecord::with_label(a, b, conflict));
    }
    Ok(records)
}

/// Simulates `trials` timed accesses of the pair and returns the majority
/// verdict against the midpoint threshold. With no label noise this equals
/// the ground-truth conflict predicate.
pub fn oracle_is_conflict(
    spec: &MappingSpec,
    model: &LatencyModel,
    a: &BitVector,
    b: &BitVector,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<bool, SimError> {
    if model.closed_page {
        return Err(SimError::OracleUnusable);
    }
    if trials == 0 || trials % 2 == 0 {
        return Err(SimError::InvalidTrials(trials));
    }
    model.validate()?;
    let conflict = spec.is_conflict(a, b)?;
    let midpoint = model.midpoint();
    let mut high_votes = 0usize;
    for _ in 0..trials {
        if sample_latency(model, conflict, rng) as f64 > midpoint {
            high_votes += 1;
        }
    }
    Ok(2 * high_votes > trials)
}
