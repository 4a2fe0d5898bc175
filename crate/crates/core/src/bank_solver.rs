//! Bank/channel mask recovery from conflict-labeled address pairs.
//!
//! Every conflicting pair shares a bank, so its XOR difference has even
//! overlap with every bank mask: stack the differences into a matrix D and
//! the mask set is exactly the nullspace of D. Address bits never exercised
//! by the data (an all-zero column in D) are vacuously in the nullspace and
//! carry no information; they are reported separately as undetermined
//! instead of being passed off as masks.
//!
//! Mislabeled pairs add spurious rows that eat nullspace dimensions. The
//! subsampling vote solves on disjoint subsets, lets each subset's solution
//! space vote on candidate masks, keeps candidates that reach a quorum or
//! explain nearly all differences, drops the rows that contradict them, and
//! repeats until stable.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bank_sample_bound, BoundParams};
use crate::gf2::{BitMatrix, BitVector, GaussBasis, Gf2Error};
use crate::traces::TraceRecord;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no pairs provided")]
    EmptyInput,
    #[error("pair widths differ: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("all pairs have identical addresses; no difference rows to solve")]
    EmptyDifferenceMatrix,
    #[error("invalid vote config: {0}")]
    InvalidVoteConfig(String),
    #[error("subsample count q={q} exceeds the {pairs} usable conflict pairs")]
    QTooLarge { q: usize, pairs: usize },
    #[error(
        "no mask reached the vote quorum; the data is too noisy or too small. \
         Collect more pairs: with k={assumed_k} assumed mask bits, theta=0.05 \
         and epsilon=0.01 the sample bound suggests m >= {suggested_pairs}"
    )]
    QuorumFailure {
        assumed_k: usize,
        suggested_pairs: u64,
    },
    #[error("record {index} lacks a label")]
    MissingLabel { index: usize },
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// Deduplicated difference matrix plus bookkeeping about what was dropped.
#[derive(Debug, Clone)]
pub struct DifferenceMatrix {
    pub matrix: BitMatrix,
    /// Pairs that contributed (zero differences excluded).
    pub pairs_used: usize,
    /// Pairs with identical addresses. A true conflict cannot have a zero
    /// difference, so these indicate degenerate input.
    pub zero_pairs_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Stacks the XOR differences of conflict pairs, dropping zero rows and
/// exact duplicates.
pub fn build_difference_matrix(
    pairs: &[(BitVector, BitVector)],
) -> Result<DifferenceMatrix, SolveError> {
    let diffs = raw_differences(pairs)?;
    let width = pairs[0].0.width();
    let mut seen = HashSet::with_capacity(diffs.len());
    let mut rows = Vec::new();
    let mut duplicates = 0usize;
    for &d in &diffs {
        if seen.insert(d) {
            rows.push(d);
        } else {
            duplicates += 1;
        }
    }
    Ok(DifferenceMatrix {
        matrix: BitMatrix::from_row_bits(width, &rows)?,
        pairs_used: diffs.len(),
        zero_pairs_dropped: pairs.len() - diffs.len(),
        duplicates_dropped: duplicates,
    })
}

/// Nonzero differences with multiplicity, width-checked.
fn raw_differences(pairs: &[(BitVector, BitVector)]) -> Result<Vec<u64>, SolveError> {
    if pairs.is_empty() {
        return Err(SolveError::EmptyInput);
    }
    let width = pairs[0].0.width();
    let mut diffs = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        if a.width() != width || b.width() != width {
            return Err(SolveError::WidthMismatch {
                left: width,
                right: a.width().max(b.width()),
            });
        }
        let d = a.bits() ^ b.bits();
        if d != 0 {
            diffs.push(d);
        }
    }
    Ok(diffs)
}

/// Vote bookkeeping for one recovered mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteEntry {
    pub mask: String,
    pub votes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteDetail {
    pub subsamples: usize,
    pub quorum_votes: usize,
    pub rounds: usize,
    /// Final-round appearance counts for the recovered masks.
    pub entries: Vec<VoteEntry>,
}

/// Result of bank-mask recovery.
#[derive(Debug, Clone)]
pub struct BankRecovery {
    /// Canonical mask basis; rows have no support on undetermined bits.
    pub basis: BitMatrix,
    /// Bit positions never set in any retained difference row, ascending.
    pub undetermined_bits: Vec<usize>,
    /// Recovered mask-space dimension.
    pub k: usize,
    /// Rank of the retained difference matrix.
    pub rank_d: usize,
    /// Conflict pairs consumed.
    pub pairs_used: usize,
    pub vote_detail: Option<VoteDetail>,
}

impl BankRecovery {
    pub fn width(&self) -> usize {
        self.basis.width()
    }

    /// Observed bit positions: everything except the undetermined ones.
    pub fn observed_mask(&self) -> BitVector {
        let width = self.basis.width();
        let mut bits = if width == 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        };
        for &b in &self.undetermined_bits {
            bits &= !(1u64 << b);
        }
        BitVector::new(bits, width).expect("subset of width mask")
    }
}

/// Union of the bit support of all addresses in the pair set: the bits the
/// trace actually exercised.
pub fn address_support(pairs: &[(BitVector, BitVector)]) -> u64 {
    pairs
        .iter()
        .fold(0u64, |acc, (a, b)| acc | a.bits() | b.bits())
}

/// Recovers the mask basis as the nullspace of the difference matrix, with
/// no knowledge of which address bits the trace exercised.
///
/// Every all-zero column of D is treated as undetermined: with nothing but
/// D, a bit nobody ever varied is indistinguishable from a single-bit mask.
/// When the trace addresses are available, use
/// [`recover_bank_masks_with_support`], which keeps exercised zero columns
/// as the single-bit masks they are.
pub fn recover_bank_masks(d: &BitMatrix) -> Result<BankRecovery, SolveError> {
    let dark = !d.column_support();
    recover_with_dark_bits(d, dark)
}

/// Recovers the mask basis, reporting as undetermined only the bits outside
/// `support` (the OR of all trace addresses).
///
/// A zero column of D at a bit the addresses did vary is a real finding:
/// conflicting pairs always agree there, so the single-bit mask on that
/// position belongs to the basis. Alignment bits, by contrast, are never
/// exercised at all and stay undetermined.
pub fn recover_bank_masks_with_support(
    d: &BitMatrix,
    support: u64,
) -> Result<BankRecovery, SolveError> {
    recover_with_dark_bits(d, !support)
}

fn recover_with_dark_bits(d: &BitMatrix, dark: u64) -> Result<BankRecovery, SolveError> {
    if d.is_empty() {
        return Err(SolveError::EmptyDifferenceMatrix);
    }
    let width = d.width();
    let width_mask = if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    // Dark bits cannot appear in any difference row.
    let undetermined_mask = dark & width_mask & !d.column_support();
    let undetermined_bits: Vec<usize> =
        (0..width).filter(|&b| (undetermined_mask >> b) & 1 == 1).collect();
    let rref = d.rref();
    let nullspace = d.nullspace_basis();
    let mut basis = BitMatrix::new(width)?;
    for row in nullspace.rows() {
        if row.bits() & undetermined_mask != 0 {
            // In canonical form the vectors touching unexercised columns are
            // exactly the single-bit vectors on those columns.
            debug_assert_eq!(row.hamming_weight(), 1);
            continue;
        }
        basis.push_row(row)?;
    }
    let k = basis.row_count();
    debug_assert_eq!(rref.rank + k + undetermined_bits.len(), width);
    Ok(BankRecovery {
        basis,
        undetermined_bits,
        k,
        rank_d: rref.rank,
        pairs_used: d.row_count(),
        vote_detail: None,
    })
}

/// Subsampling vote parameters.
#[derive(Debug, Clone, Copy)]
pub struct VoteConfig {
    /// Number of disjoint subsamples; odd, at least 3.
    pub q: usize,
    /// Fraction of subsamples that must contain a mask, in [0.5, 1].
    pub quorum: f64,
    pub seed: u64,
    /// Retain a candidate regardless of votes when it is orthogonal to at
    /// least this fraction of all difference rows.
    pub retain_score: f64,
    /// Cap on vote/trim iterations.
    pub max_rounds: usize,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            q: 5,
            quorum: 0.6,
            seed: 0,
            retain_score: 0.85,
            max_rounds: 6,
        }
    }
}

/// Noise-robust bank recovery by subsampling and majority vote.
///
/// The pairs are partitioned into `q` disjoint subsamples and each is solved
/// independently. A candidate mask gets one vote per subsample whose
/// solution space contains it (span membership, not string equality).
/// Candidates that reach the quorum or that are orthogonal to at least
/// `retain_score` of all difference rows are retained; rows contradicting a
/// retained mask are certified mislabels and are dropped, and the process
/// repeats on the cleaned set until it stabilizes. The final basis is
/// re-solved from the retained rows, so its rank bookkeeping is exact.
pub fn subsample_vote(
    pairs: &[(BitVector, BitVector)],
    cfg: &VoteConfig,
) -> Result<BankRecovery, SolveError> {
    if cfg.q < 3 || cfg.q % 2 == 0 {
        return Err(SolveError::InvalidVoteConfig(format!(
            "q must be odd and >= 3, got {}",
            cfg.q
        )));
    }
    if !(0.5..=1.0).contains(&cfg.quorum) {
        return Err(SolveError::InvalidVoteConfig(format!(
            "quorum must lie in [0.5, 1], got {}",
            cfg.quorum
        )));
    }
    if cfg.max_rounds == 0 {
        return Err(SolveError::InvalidVoteConfig("max_rounds must be >= 1".into()));
    }
    let diffs = raw_differences(pairs)?;
    if diffs.is_empty() {
        return Err(SolveError::EmptyDifferenceMatrix);
    }
    if cfg.q > diffs.len() {
        return Err(SolveError::QTooLarge {
            q: cfg.q,
            pairs: diffs.len(),
        });
    }
    let width = pairs[0].0.width();
    let support = address_support(pairs);
    let quorum_votes = (cfg.quorum * cfg.q as f64).ceil() as usize;
    let total = diffs.len() as f64;

    let orthogonal = |rows: &[u64], v: u64| rows.iter().all(|&r| (r & v).count_ones() & 1 == 0);

    let mut retained = GaussBasis::new(width)?;
    let mut active: Vec<u64> = diffs.clone();
    let mut rounds = 0usize;
    let mut last_votes: Vec<(u64, usize)> = Vec::new();
    loop {
        rounds += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(rounds as u64);
        let mut shuffled = active.clone();
        shuffled.shuffle(&mut rng);
        let chunk = shuffled.len().div_ceil(cfg.q);
        let parts: Vec<&[u64]> = shuffled.chunks(chunk.max(1)).collect();

        // Candidate pool: canonical solutions of each subsample, of the full
        // active set, and everything already retained.
        let mut pool: HashSet<u64> = HashSet::new();
        for part in &parts {
            if let Ok(diff) = BitMatrix::from_row_bits(width, part) {
                if let Ok(recovery) = recover_bank_masks_with_support(&diff, support) {
                    pool.extend(recovery.basis.row_bits().iter().copied());
                }
            }
        }
        if let Ok(full) = BitMatrix::from_row_bits(width, &active) {
            if let Ok(recovery) = recover_bank_masks_with_support(&full, support) {
                pool.extend(recovery.basis.row_bits().iter().copied());
            }
        }
        pool.extend(retained.rows().iter().copied());
        let mut pool: Vec<u64> = pool.into_iter().collect();
        pool.sort_unstable();

        last_votes.clear();
        let mut added = false;
        for &candidate in &pool {
            let votes = parts.iter().filter(|part| orthogonal(part, candidate)).count();
            let score =
                diffs.iter().filter(|&&r| (r & candidate).count_ones() & 1 == 0).count() as f64
                    / total;
            last_votes.push((candidate, votes));
            if votes >= quorum_votes || score >= cfg.retain_score {
                added |= retained.insert(candidate);
            }
        }
        let before = active.len();
        let masks = retained.rows().to_vec();
        active.retain(|&r| orthogonal(&masks, r));
        let trimmed = before - active.len();
        if (!added && trimmed == 0) || rounds >= cfg.max_rounds {
            break;
        }
    }

    if retained.rank() == 0 || active.is_empty() {
        let full = BitMatrix::from_row_bits(width, &diffs)?;
        let assumed_k = (width.saturating_sub(full.rank())).max(1);
        let suggested = bank_sample_bound(&BoundParams {
            n: width,
            k: assumed_k.min(width - 1),
            k_prime: 0,
            theta: 0.05,
            epsilon: 0.01,
        })
        .unwrap_or(0);
        return Err(SolveError::QuorumFailure {
            assumed_k,
            suggested_pairs: suggested,
        });
    }

    // Final solve on the retained rows keeps the rank identity exact.
    let mut seen = HashSet::with_capacity(active.len());
    let final_rows: Vec<u64> = active.iter().copied().filter(|&d| seen.insert(d)).collect();
    let final_matrix = BitMatrix::from_row_bits(width, &final_rows)?;
    let mut recovery = recover_bank_masks_with_support(&final_matrix, support)?;
    recovery.pairs_used = pairs.len();
    let entries = recovery
        .basis
        .rows()
        .map(|mask| {
            let votes = last_votes
                .iter()
                .find(|(candidate, _)| *candidate == mask.bits())
                .map(|(_, v)| *v)
                .unwrap_or(0);
            VoteEntry {
                mask: mask.to_hex(),
                votes,
            }
        })
        .collect();
    recovery.vote_detail = Some(VoteDetail {
        subsamples: cfg.q,
        quorum_votes,
        rounds,
        entries,
    });
    Ok(recovery)
}

/// Fraction of conflict-labeled records whose difference is orthogonal to
/// every basis row. An empty basis imposes no constraints and scores 1.0,
/// as does a record set with no conflicts.
pub fn explain_fraction(
    basis: &BitMatrix,
    records: &[TraceRecord],
) -> Result<f64, SolveError> {
    let mut conflicts = 0usize;
    let mut explained = 0usize;
    for (index, record) in records.iter().enumerate() {
        let label = record
            .label
            .ok_or(SolveError::MissingLabel { index })?;
        if !label.is_conflict() {
            continue;
        }
        conflicts += 1;
        let d = record.addr_a.bits() ^ record.addr_b.bits();
        if basis.row_bits().iter().all(|&m| (m & d).count_ones() & 1 == 0) {
            explained += 1;
        }
    }
    if conflicts == 0 {
        return Ok(1.0);
    }
    Ok(explained as f64 / conflicts as f64)
}

/// Conflict-labeled pairs from a record set.
pub fn conflict_pairs(records: &[TraceRecord]) -> Vec<(BitVector, BitVector)> {
    records
        .iter()
        .filter(|r| r.is_labeled_conflict())
        .map(|r| (r.addr_a, r.addr_b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::load_preset;
    use crate::simulator::{generate_labeled_pairs, GenConfig};
    use crate::traces::TraceRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec4(bits: u64) -> BitVector {
        BitVector::new(bits, 4).unwrap()
    }

    fn toy_pairs() -> Vec<(BitVector, BitVector)> {
        [
            (0b0000, 0b0001),
            (0b1000, 0b1001),
            (0b0100, 0b0101),
            (0b1110, 0b1111),
            (0b0000, 0b0010),
            (0b1100, 0b1110),
            (0b0011, 0b0001),
            (0b1010, 0b1001),
        ]
        .into_iter()
        .map(|(a, b)| (vec4(a), vec4(b)))
        .collect()
    }

    #[test]
    fn toy_difference_matrix() {
        let diff = build_difference_matrix(&toy_pairs()).unwrap();
        assert_eq!(diff.matrix.row_bits(), &[0b0001, 0b0010, 0b0011]);
        assert_eq!(diff.pairs_used, 8);
        assert_eq!(diff.zero_pairs_dropped, 0);
        assert_eq!(diff.duplicates_dropped, 5);
        assert_eq!(diff.matrix.rank(), 2);
    }

    #[test]
    fn identical_pair_is_dropped() {
        let a = vec4(0b1010);
        let diff = build_difference_matrix(&[(a, a), (a, vec4(0b1011))]).unwrap();
        assert_eq!(diff.zero_pairs_dropped, 1);
        assert_eq!(diff.pairs_used, 1);
        assert!(build_difference_matrix(&[]).is_err());
    }

    #[test]
    fn toy_recovery_reports_unexercised_bits_as_undetermined() {
        let diff = build_difference_matrix(&toy_pairs()).unwrap();
        let recovery = recover_bank_masks(&diff.matrix).unwrap();
        // The toy data never exercises bits 2 and 3, so the two nullspace
        // dimensions there are undetermined rather than masks.
        assert_eq!(recovery.basis.row_count(), 0);
        assert_eq!(recovery.undetermined_bits, vec![2, 3]);
        assert_eq!(recovery.rank_d, 2);
        assert_eq!(recovery.rank_d + recovery.k + recovery.undetermined_bits.len(), 4);
    }

    #[test]
    fn full_rank_difference_matrix_leaves_nothing() {
        let d = BitMatrix::identity(6).unwrap();
        let recovery = recover_bank_masks(&d).unwrap();
        assert_eq!(recovery.basis.row_count(), 0);
        assert!(recovery.undetermined_bits.is_empty());
        assert_eq!(recovery.rank_d, 6);
    }

    fn preset_conflicts(
        preset: &str,
        pairs: usize,
        seed: u64,
    ) -> (crate::mapping::MappingSpec, Vec<(BitVector, BitVector)>) {
        let spec = load_preset(preset).unwrap();
        let cfg = GenConfig::new(spec.address_bits(), pairs, seed);
        let records = generate_labeled_pairs(&spec, &cfg).unwrap();
        let pairs = conflict_pairs(&records);
        (spec, pairs)
    }

    #[test]
    fn noiseless_preset_recovery_matches_ground_truth() {
        let (spec, pairs) = preset_conflicts("rpi3b+", 5000, 1);
        let diff = build_difference_matrix(&pairs).unwrap();
        // Every difference row is orthogonal to every true bank mask.
        for &row in diff.matrix.row_bits() {
            for mask in spec.bank_matrix().rows() {
                assert_eq!((row & mask.bits()).count_ones() % 2, 0);
            }
        }
        let recovery =
            recover_bank_masks_with_support(&diff.matrix, address_support(&pairs)).unwrap();
        assert!(recovery
            .basis
            .row_space_equal(spec.bank_matrix())
            .unwrap());
        assert_eq!(recovery.undetermined_bits, (0..6).collect::<Vec<_>>());
        // Without the address support, single-bit masks are conservatively
        // reported as undetermined: the data alone cannot tell them apart
        // from bits nobody varied.
        let bare = recover_bank_masks(&diff.matrix).unwrap();
        assert_eq!(bare.basis.row_count(), 0);
        assert_eq!(bare.undetermined_bits, vec![0, 1, 2, 3, 4, 5, 13, 14, 15]);
    }

    #[test]
    fn vote_equals_full_recovery_without_noise() {
        let (_, pairs) = preset_conflicts("rpi3b+", 4000, 2);
        let diff = build_difference_matrix(&pairs).unwrap();
        let plain =
            recover_bank_masks_with_support(&diff.matrix, address_support(&pairs)).unwrap();
        let voted = subsample_vote(&pairs, &VoteConfig::default()).unwrap();
        assert!(voted.basis.row_space_equal(&plain.basis).unwrap());
        assert_eq!(voted.undetermined_bits, plain.undetermined_bits);
        let detail = voted.vote_detail.unwrap();
        assert!(detail.entries.iter().all(|e| e.votes >= detail.quorum_votes));
    }

    #[test]
    fn vote_discards_subsample_local_masks() {
        // Three subsamples, each individually rank-deficient: spurious masks
        // appear in single subsamples only and must not survive the vote.
        let (spec, pairs) = preset_conflicts("rpi3b+", 700, 3);
        let voted = subsample_vote(
            &pairs,
            &VoteConfig {
                q: 3,
                quorum: 2.0 / 3.0,
                seed: 5,
                ..VoteConfig::default()
            },
        )
        .unwrap();
        assert!(voted.basis.row_space_equal(spec.bank_matrix()).unwrap());
    }

    #[test]
    fn vote_survives_conflict_set_contamination() {
        // Inject label noise so ~5% of the conflict-labeled set is wrong,
        // then require exact recovery across seeds.
        let spec = load_preset("rpi3b+").unwrap();
        let mut exact = 0usize;
        let trials = 20usize;
        for seed in 0..trials as u64 {
            let cfg = GenConfig::new(30, 4000, 100 + seed);
            let records = generate_labeled_pairs(&spec, &cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(999 + seed);
            let mut pairs = conflict_pairs(&records);
            let n_false = (pairs.len() as f64 * 0.05).round() as usize;
            // Replace a twentieth of the set with mislabeled non-conflicts.
            let non_conflicts: Vec<(BitVector, BitVector)> = records
                .iter()
                .filter(|r| !r.is_labeled_conflict())
                .map(|r| (r.addr_a, r.addr_b))
                .collect();
            for _ in 0..n_false {
                pairs.push(non_conflicts[rng.random_range(0..non_conflicts.len())]);
            }
            let voted = subsample_vote(
                &pairs,
                &VoteConfig {
                    seed: seed * 7 + 1,
                    ..VoteConfig::default()
                },
            );
            if let Ok(v) = voted {
                if v.basis.row_space_equal(spec.bank_matrix()).unwrap() {
                    exact += 1;
                }
            }
        }
        assert!(exact >= trials - 1, "exact recoveries: {exact}/{trials}");
    }

    #[test]
    fn noise_only_raises_difference_rank() {
        // Mislabeled rows only add constraints; the rank under noise is at
        // least the noiseless rank, checked in the mean over seeds.
        let spec = load_preset("rpi3b+").unwrap();
        let mut clean_total = 0usize;
        let mut noisy_total = 0usize;
        for seed in 0..20u64 {
            let cfg = GenConfig::new(30, 1500, 200 + seed);
            let records = generate_labeled_pairs(&spec, &cfg).unwrap();
            let clean = build_difference_matrix(&conflict_pairs(&records)).unwrap();
            clean_total += clean.matrix.rank();
            let mut noisy_pairs = conflict_pairs(&records);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let extras: Vec<(BitVector, BitVector)> = records
                .iter()
                .filter(|r| !r.is_labeled_conflict())
                .map(|r| (r.addr_a, r.addr_b))
                .collect();
            for _ in 0..noisy_pairs.len() / 20 {
                noisy_pairs.push(extras[rng.random_range(0..extras.len())]);
            }
            noisy_total += build_difference_matrix(&noisy_pairs).unwrap().matrix.rank();
        }
        assert!(noisy_total >= clean_total);
    }

    #[test]
    fn vote_rejects_bad_configs() {
        let (_, pairs) = preset_conflicts("rpi3b+", 600, 4);
        let bad_q = VoteConfig {
            q: 4,
            ..VoteConfig::default()
        };
        assert!(matches!(
            subsample_vote(&pairs, &bad_q),
            Err(SolveError::InvalidVoteConfig(_))
        ));
        let too_many = VoteConfig {
            q: pairs.len() * 2 + 1,
            ..VoteConfig::default()
        };
        assert!(matches!(
            subsample_vote(&pairs, &too_many),
            Err(SolveError::QTooLarge { .. })
        ));
        let bad_quorum = VoteConfig {
            quorum: 0.3,
            ..VoteConfig::default()
        };
        assert!(matches!(
            subsample_vote(&pairs, &bad_quorum),
            Err(SolveError::InvalidVoteConfig(_))
        ));
    }

    #[test]
    fn quorum_failure_reports_a_sample_bound() {
        // Pure random noise: nothing consistent to retain.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let pairs: Vec<(BitVector, BitVector)> = (0..200)
            .map(|_| {
                (
                    BitVector::new(rng.random::<u64>() & 0xffff, 16).unwrap(),
                    BitVector::new(rng.random::<u64>() & 0xffff, 16).unwrap(),
                )
            })
            .collect();
        match subsample_vote(&pairs, &VoteConfig::default()) {
            Err(SolveError::QuorumFailure { suggested_pairs, .. }) => {
                assert!(suggested_pairs > 0);
            }
            other => panic!("expected quorum failure, got {other:?}"),
        }
    }

    #[test]
    fn explain_fraction_edges() {
        let spec = load_preset("rpi3b+").unwrap();
        let cfg = GenConfig::new(30, 2000, 6);
        let records = generate_labeled_pairs(&spec, &cfg).unwrap();
        let truth = spec.bank_matrix();
        assert_eq!(explain_fraction(truth, &records).unwrap(), 1.0);
        let empty = BitMatrix::new(30).unwrap();
        assert_eq!(explain_fraction(&empty, &records).unwrap(), 1.0);
        // Corrupt 5% of the conflict labels: the truth basis now explains
        // roughly 95% of what claims to be a conflict.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let corrupted: Vec<TraceRecord> = records
            .iter()
            .map(|r| {
                let mut out = *r;
                if !r.is_labeled_conflict() && rng.random_bool(0.012) {
                    out.label = Some(crate::traces::ConflictLabel::Conflict);
                }
                out
            })
            .collect();
        let fraction = explain_fraction(truth, &corrupted).unwrap();
        assert!(fraction > 0.88 && fraction < 0.99, "fraction {fraction}");
    }
}
