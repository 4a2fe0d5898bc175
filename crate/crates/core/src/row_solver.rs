//! Row-mask recovery from same-bank address pairs.
//!
//! Same-row pairs (same bank, low latency) yield a difference matrix whose
//! nullspace contains both the bank and row mask spaces. Candidate row masks
//! are enumerated as low-weight combinations of that nullspace basis, tested
//! by flipping them on live addresses and watching for row conflicts, and
//! assembled into a basis by a backtracking search that enforces three
//! conditions: each basis row carries its own pivot bit, the stacked
//! `[bank; row]` matrix reaches full rank, and the total Hamming weight is
//! minimal (hardware spends as few XOR gates as possible on addressing).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bank_solver::{build_difference_matrix, BankRecovery, DifferenceMatrix, SolveError};
use crate::gf2::{BitMatrix, BitVector, GaussBasis, Gf2Error};
use crate::oracle::{ConflictOracle, OracleError};
use crate::traces::TraceRecord;

#[derive(Debug, Error)]
pub enum RowError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(
        "inconsistent data: observed={observed} bits, rank(D_row)={rank_d_row}, \
         k={k} leaves no row dimensions"
    )]
    InconsistentData {
        observed: usize,
        rank_d_row: usize,
        k: usize,
    },
    #[error(
        "no candidate row masks: nullspace dimension {nullspace_dim}, \
         combo_max={combo_max}, weight_max={weight_max}"
    )]
    EmptyCandidates {
        nullspace_dim: usize,
        combo_max: usize,
        weight_max: usize,
    },
    #[error("only {found} flip-positive pivot positions for {needed} row dimensions")]
    InsufficientPivots { found: usize, needed: usize },
    #[error("no rank-increasing candidate found for pivot bit {position}")]
    PivotUnsatisfiable { position: usize },
    #[error("search budget exhausted before any complete basis was found")]
    SearchBudgetExhausted,
    #[error("{} pair verdicts missing; emit a probe request and re-measure", .0.len())]
    NeedsMoreData(Vec<(BitVector, BitVector)>),
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

impl From<OracleError> for RowError {
    fn from(err: OracleError) -> Self {
        match err {
            OracleError::PairsNotInTrace(pairs) => RowError::NeedsMoreData(pairs),
            other => RowError::Oracle(other),
        }
    }
}

/// Knobs for candidate enumeration and the basis search.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    /// Maximum number of nullspace basis vectors XORed into one candidate.
    pub combo_max: usize,
    /// Maximum Hamming weight of a candidate.
    pub weight_max: usize,
    /// Timed accesses per oracle query; odd.
    pub oracle_trials: usize,
    /// Base addresses per flip test; odd.
    pub base_count: usize,
    /// Backtracking node cutoff.
    pub node_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            combo_max: 3,
            weight_max: 6,
            oracle_trials: 15,
            base_count: 9,
            node_budget: 200_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), RowError> {
        if self.combo_max == 0 || self.weight_max == 0 || self.node_budget == 0 {
            return Err(RowError::InvalidConfig(
                "combo_max, weight_max and node_budget must be >= 1".into(),
            ));
        }
        if self.oracle_trials == 0 || self.oracle_trials % 2 == 0 {
            return Err(RowError::InvalidConfig(format!(
                "oracle_trials must be odd, got {}",
                self.oracle_trials
            )));
        }
        if self.base_count == 0 || self.base_count % 2 == 0 {
            return Err(RowError::InvalidConfig(format!(
                "base_count must be odd, got {}",
                self.base_count
            )));
        }
        Ok(())
    }
}

/// Result of row-mask recovery.
#[derive(Debug, Clone)]
pub struct RowRecovery {
    /// Bits identical across every same-row pair.
    pub coarse_mask: BitVector,
    /// Flip-verified candidate masks, ascending weight.
    pub candidate_set: BitMatrix,
    /// Recovered row basis, one row per pivot.
    pub row_basis: BitMatrix,
    /// Pivot bit positions, ascending; row `j` has bit `pivot_positions[j]`.
    pub pivot_positions: Vec<usize>,
    pub k_prime: usize,
    /// Sum of Hamming weights of the basis rows.
    pub total_weight: usize,
    /// True when the node budget cut the search short; the basis is then the
    /// best found, not necessarily weight-minimal.
    pub search_exhausted: bool,
}

/// Bits that never differ within any same-row pair: the AND over pairs of
/// bitwise equality. Bits cleared here vary inside a row, so they cannot
/// feed the row index.
pub fn coarse_row_mask(pairs: &[(BitVector, BitVector)]) -> Result<BitVector, RowError> {
    if pairs.is_empty() {
        return Err(RowError::Solve(SolveError::EmptyInput));
    }
    let width = pairs[0].0.width();
    let full = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut mask = full;
    for (a, b) in pairs {
        if a.width() != width || b.width() != width {
            return Err(RowError::Solve(SolveError::WidthMismatch {
                left: width,
                right: a.width().max(b.width()),
            }));
        }
        mask &= !(a.bits() ^ b.bits());
    }
    Ok(BitVector::new(mask & full, width).expect("masked to width"))
}

/// Difference matrix over same-row pairs; same dedup/zero-drop rules as the
/// bank-side difference matrix.
pub fn build_row_difference_matrix(
    pairs: &[(BitVector, BitVector)],
) -> Result<DifferenceMatrix, RowError> {
    Ok(build_difference_matrix(pairs)?)
}

/// Same-row pairs from a same-bank-constrained labeled trace: the records
/// labeled as non-conflicts. Only valid when every pair shares a bank.
pub fn row_hit_pairs(records: &[TraceRecord]) -> Vec<(BitVector, BitVector)> {
    records
        .iter()
        .filter(|r| matches!(r.label, Some(l) if !l.is_conflict()))
        .map(|r| (r.addr_a, r.addr_b))
        .collect()
}

/// Enumerates candidate row masks: XOR combinations of up to `combo_max`
/// nullspace basis rows, filtered to weight <= `weight_max`, excluding zero,
/// vectors inside the bank span, and vectors supported only on undetermined
/// bits. Sorted by ascending weight, then value.
pub fn enumerate_candidates(
    d_row: &BitMatrix,
    bank_basis: &BitMatrix,
    undetermined_bits: &[usize],
    cfg: &SearchConfig,
) -> Result<BitMatrix, RowError> {
    cfg.validate()?;
    if d_row.is_empty() {
        return Err(RowError::Solve(SolveError::EmptyDifferenceMatrix));
    }
    let width = d_row.width();
    let nullspace = d_row.nullspace_basis();
    let basis_rows = nullspace.row_bits();
    let undetermined_mask: u64 = undetermined_bits.iter().fold(0u64, |acc, &b| acc | (1u64 << b));
    let mut bank_span = GaussBasis::new(width)?;
    for &row in bank_basis.row_bits() {
        bank_span.insert(row);
    }
    let mut out: Vec<(usize, u64)> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    enumerate_combos(
        basis_rows,
        cfg.combo_max,
        0,
        0u64,
        &mut chosen,
        &mut |value| {
            if value == 0 {
                return;
            }
            let weight = value.count_ones() as usize;
            if weight > cfg.weight_max {
                return;
            }
            if value & !undetermined_mask == 0 {
                return;
            }
            if bank_span.contains(value) {
                return;
            }
            out.push((weight, value));
        },
    );
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(RowError::EmptyCandidates {
            nullspace_dim: basis_rows.len(),
            combo_max: cfg.combo_max,
            weight_max: cfg.weight_max,
        });
    }
    let rows: Vec<u64> = out.into_iter().map(|(_, v)| v).collect();
    Ok(BitMatrix::from_row_bits(width, &rows)?)
}

fn enumerate_combos(
    rows: &[u64],
    remaining: usize,
    start: usize,
    acc: u64,
    chosen: &mut Vec<usize>,
    emit: &mut impl FnMut(u64),
) {
    if !chosen.is_empty() {
        emit(acc);
    }
    if remaining == 0 {
        return;
    }
    for i in start..rows.len() {
        chosen.push(i);
        enumerate_combos(rows, remaining - 1, i + 1, acc ^ rows[i], chosen, emit);
        chosen.pop();
    }
}

/// Random aligned base addresses for flip tests, restricted to observed bits.
pub fn random_bases(
    observed: &BitVector,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<BitVector> {
    let width = observed.width();
    (0..count)
        .map(|_| {
            BitVector::new(rng.random::<u64>() & observed.bits(), width)
                .expect("masked to observed bits")
        })
        .collect()
}

/// Tests whether flipping `candidate` changes the row index: queries the
/// oracle on `(A, A ^ candidate)` for each base address and reports the
/// majority verdict. Candidates that also flip the bank index never produce
/// a row conflict and test negative.
pub fn flip_test(
    candidate: &BitVector,
    oracle: &mut dyn ConflictOracle,
    bases: &[BitVector],
) -> Result<bool, RowError> {
    let mut conflicts = 0usize;
    for base in bases {
        if oracle.query(base, &base.xor(candidate))? {
            conflicts += 1;
        }
    }
    Ok(2 * conflicts > bases.len())
}

/// Outcome of the rank-aware basis search.
#[derive(Debug, Clone)]
pub struct BacktrackOutcome {
    pub basis: BitMatrix,
    pub total_weight: usize,
    pub nodes_visited: usize,
    /// Budget ran out; the result is best-so-far rather than proven minimal.
    pub exhausted: bool,
}

struct SearchState {
    best: Option<(Vec<u64>, usize)>,
    min_weight: usize,
    nodes: usize,
    budget: usize,
    exhausted: bool,
    deepest: usize,
}

/// Backtracking search for a row basis of `k_prime` rows over the candidate
/// set, with row `j` drawn from the candidates carrying bit `pivots[j]`.
///
/// Skips candidates that do not increase the rank of the stacked
/// `[bank; partial]` matrix, abandons branches that can no longer reach full
/// rank or that already weigh as much as the best complete basis, and
/// returns the minimum-total-weight basis reachable within `node_budget`.
pub fn rank_aware_backtrack(
    bank_basis: &BitMatrix,
    candidates: &BitMatrix,
    k_prime: usize,
    pivots: &[usize],
    cfg: &SearchConfig,
) -> Result<BacktrackOutcome, RowError> {
    cfg.validate()?;
    if pivots.len() != k_prime || k_prime == 0 {
        return Err(RowError::InvalidConfig(format!(
            "need {} pivot positions, got {}",
            k_prime,
            pivots.len()
        )));
    }
    let width = candidates.width();
    // Partition by pivot bit, each class sorted by ascending weight.
    let mut classes: Vec<Vec<u64>> = Vec::with_capacity(k_prime);
    for &pivot in pivots {
        let mut class: Vec<u64> = candidates
            .row_bits()
            .iter()
            .copied()
            .filter(|&v| (v >> pivot) & 1 == 1)
            .collect();
        class.sort_unstable_by_key(|&v| (v.count_ones(), v));
        if class.is_empty() {
            return Err(RowError::PivotUnsatisfiable { position: pivot });
        }
        classes.push(class);
    }
    // Lower bound on the weight any completion of level j must add: the sum
    // of the lightest candidate of every deeper class.
    let mut suffix_min = vec![0usize; k_prime + 1];
    for j in (0..k_prime).rev() {
        let lightest = classes[j][0].count_ones() as usize;
        suffix_min[j] = suffix_min[j + 1] + lightest;
    }
    let mut base = GaussBasis::new(width)?;
    for &row in bank_basis.row_bits() {
        base.insert(row);
    }
    let rank_init = base.rank();
    let mut state = SearchState {
        best: None,
        min_weight: usize::MAX,
        nodes: 0,
        budget: cfg.node_budget,
        exhausted: false,
        deepest: 0,
    };
    let mut chosen: Vec<u64> = Vec::with_capacity(k_prime);
    search(
        0,
        &base,
        rank_init,
        0,
        &classes,
        &suffix_min,
        rank_init,
        k_prime,
        &mut chosen,
        &mut state,
    );
    match state.best {
        Some((rows, total_weight)) => Ok(BacktrackOutcome {
            basis: BitMatrix::from_row_bits(width, &rows)?,
            total_weight,
            nodes_visited: state.nodes,
            exhausted: state.exhausted,
        }),
        None if state.exhausted => Err(RowError::SearchBudgetExhausted),
        None => Err(RowError::PivotUnsatisfiable {
            position: pivots[state.deepest],
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn search(
    j: usize,
    basis: &GaussBasis,
    rank: usize,
    weight: usize,
    classes: &[Vec<u64>],
    rank_init: usize,
    k_prime: usize,
    chosen: &mut Vec<u64>,
    state: &mut SearchState,
) {
    state.nodes += 1;
    if state.nodes > state.budget {
        state.exhausted = true;
        return;
    }
    // Branch cannot restore full rank with the rows that remain.
    if rank + (k_prime - j) < rank_init + k_prime {
        return;
    }
    if j == k_prime {
        if weight < state.min_weight {
            state.min_weight = weight;
            state.best = Some((chosen.clone(), weight));
        }
        return;
    }
    state.deepest = state.deepest.max(j);
    for &candidate in &classes[j] {
        if state.exhausted {
            return;
        }
        if basis.contains(candidate) {
            continue; // would not increase rank
        }
        let next_weight = weight + candidate.count_ones() as usize;
        if next_weight >= state.min_weight {
            break; // class is weight-sorted; nothing lighter follows
        }
        let mut next = basis.clone();
        next.insert(candidate);
        chosen.push(candidate);
        search(
            j + 1,
            &next,
            rank + 1,
            next_weight,
            classes,
            rank_init,
            k_prime,
            chosen,
            state,
        );
        chosen.pop();
    }
}

/// End-to-end row recovery over same-row pairs.
///
/// Coarse mask and row difference matrix come first; the row dimension is
/// inferred as `observed - rank(D_row) - k`; candidates are enumerated and
/// flip-tested; pivots are the lowest flip-positive bit positions (preferring
/// bits the coarse mask marks stable); the backtracking search finishes the
/// basis. With a replay oracle, the full query plan is checked up front so a
/// single probe-request round trip suffices.
pub fn recover_row_masks(
    same_row_pairs: &[(BitVector, BitVector)],
    bank: &BankRecovery,
    oracle: &mut dyn ConflictOracle,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<RowRecovery, RowError> {
    cfg.validate()?;
    let width = bank.width();
    let coarse = coarse_row_mask(same_row_pairs)?;
    let d_row = build_row_difference_matrix(same_row_pairs)?;
    if d_row.matrix.is_empty() {
        return Err(RowError::Solve(SolveError::EmptyDifferenceMatrix));
    }
    let observed = width - bank.undetermined_bits.len();
    let rank_d_row = d_row.matrix.rank();
    if observed <= rank_d_row + bank.k {
        return Err(RowError::InconsistentData {
            observed,
            rank_d_row,
            k: bank.k,
        });
    }
    let k_prime = observed - rank_d_row - bank.k;
    let candidates = enumerate_candidates(&d_row.matrix, &bank.basis, &bank.undetermined_bits, cfg)?;

    let observed_mask = bank.observed_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = random_bases(&observed_mask, cfg.base_count, &mut rng);

    // Full query plan up front, so replay oracles can report every missing
    // pair in one pass.
    let single_positions: Vec<usize> = (0..width).filter(|&b| observed_mask.bit(b)).collect();
    let mut plan: Vec<(BitVector, BitVector)> = Vec::new();
    for &bit in &single_positions {
        let flip = BitVector::single_bit(bit, width)?;
        for base in &bases {
            plan.push((*base, base.xor(&flip)));
        }
    }
    for candidate in candidates.rows() {
        for base in &bases {
            plan.push((*base, base.xor(&candidate)));
        }
    }
    oracle.ensure_available(&plan)?;

    // Pivot discovery: single-bit flips that move the row index.
    let mut flip_positive: Vec<usize> = Vec::new();
    for &bit in &single_positions {
        let flip = BitVector::single_bit(bit, width)?;
        if flip_test(&flip, oracle, &bases)? {
            flip_positive.push(bit);
        }
    }
    let stable_positive: Vec<usize> = flip_positive
        .iter()
        .copied()
        .filter(|&b| coarse.bit(b))
        .collect();
    let pivot_pool = if stable_positive.len() >= k_prime {
        stable_positive
    } else {
        flip_positive
    };
    if pivot_pool.len() < k_prime {
        return Err(RowError::InsufficientPivots {
            found: pivot_pool.len(),
            needed: k_prime,
        });
    }
    let pivots: Vec<usize> = pivot_pool.into_iter().take(k_prime).collect();

    // Keep only candidates that actually move the row index.
    let mut verified = BitMatrix::new(width)?;
    for candidate in candidates.rows() {
        if flip_test(&candidate, oracle, &bases)? {
            verified.push_row(candidate)?;
        }
    }
    if verified.is_empty() {
        return Err(RowError::EmptyCandidates {
            nullspace_dim: d_row.matrix.nullspace_basis().row_count(),
            combo_max: cfg.combo_max,
            weight_max: cfg.weight_max,
        });
    }
    let outcome = rank_aware_backtrack(&bank.basis, &verified, k_prime, &pivots, cfg)?;
    Ok(RowRecovery {
        coarse_mask: coarse,
        candidate_set: verified,
        row_basis: outcome.basis,
        pivot_positions: pivots,
        k_prime,
        total_weight: outcome.total_weight,
        search_exhausted: outcome.exhausted,
    })
}
