//! Dense bit-vector and bit-matrix algebra over GF(2).
//!
//! Addresses, parity masks and difference matrices are all vectors over the
//! two-element field: addition is XOR, the inner product of `a` and `b` is
//! `parity(a & b)`. Widths are capped at 64 bits so a vector is a single
//! machine word and the hot loops (parity checks over ~10^5 rows) stay
//! branch-free.

use std::fmt;

use thiserror::Error;

/// Errors from vector/matrix construction and cross-width operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Gf2Error {
    #[error("width {0} out of range (expected 1..=64)")]
    InvalidWidth(usize),
    #[error("bits {bits:#x} do not fit in width {width}")]
    BitsOutOfRange { bits: u64, width: usize },
    #[error("bit position {pos} out of range for width {width}")]
    PositionOutOfRange { pos: usize, width: usize },
    #[error("cannot parse '{0}' as a hex mask")]
    BadHex(String),
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("operation requires a non-empty matrix")]
    EmptyMatrix,
}

/// All-ones word of the given width.
#[inline]
pub(crate) fn width_mask(width: usize) -> u64 {
    debug_assert!((1..=64).contains(&width));
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A vector over GF(2), at most 64 bits wide. Bit `i` of `bits` is
/// coordinate `i`; bits at positions >= `width` are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    bits: u64,
    width: u8,
}

impl BitVector {
    /// Builds a vector from a packed word, rejecting bits outside `width`.
    pub fn new(bits: u64, width: usize) -> Result<Self, Gf2Error> {
        if !(1..=64).contains(&width) {
            return Err(Gf2Error::InvalidWidth(width));
        }
        if bits & !width_mask(width) != 0 {
            return Err(Gf2Error::BitsOutOfRange { bits, width });
        }
        Ok(Self {
            bits,
            width: width as u8,
        })
    }

    /// The zero vector.
    pub fn zero(width: usize) -> Result<Self, Gf2Error> {
        Self::new(0, width)
    }

    /// A vector with exactly one bit set.
    pub fn single_bit(pos: usize, width: usize) -> Result<Self, Gf2Error> {
        if !(1..=64).contains(&width) {
            return Err(Gf2Error::InvalidWidth(width));
        }
        if pos >= width {
            return Err(Gf2Error::PositionOutOfRange { pos, width });
        }
        Self::new(1u64 << pos, width)
    }

    /// A vector with the given bit positions set.
    pub fn from_positions(positions: &[usize], width: usize) -> Result<Self, Gf2Error> {
        let mut bits = 0u64;
        for &pos in positions {
            if pos >= width {
                return Err(Gf2Error::PositionOutOfRange { pos, width });
            }
            bits |= 1u64 << pos;
        }
        Self::new(bits, width)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn bit(&self, pos: usize) -> bool {
        debug_assert!(pos < self.width());
        (self.bits >> pos) & 1 == 1
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn hamming_weight(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// XOR of all coordinates: 1 iff an odd number of bits is set.
    #[inline]
    pub fn parity(&self) -> bool {
        self.bits.count_ones() & 1 == 1
    }

    /// Parity of `self AND mask`, the GF(2) inner product of the two vectors.
    pub fn masked_parity(&self, mask: &BitVector) -> Result<bool, Gf2Error> {
        if self.width != mask.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width(),
                right: mask.width(),
            });
        }
        Ok((self.bits & mask.bits).count_ones() & 1 == 1)
    }

    /// Component-wise XOR. Panics on width mismatch; use on vectors that are
    /// structurally guaranteed to share a width.
    #[inline]
    pub fn xor(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.width, other.width, "xor width mismatch");
        BitVector {
            bits: self.bits ^ other.bits,
            width: self.width,
        }
    }

    /// Component-wise AND. Panics on width mismatch.
    #[inline]
    pub fn and(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.width, other.width, "and width mismatch");
        BitVector {
            bits: self.bits & other.bits,
            width: self.width,
        }
    }

    /// Bit positions that are set, ascending.
    pub fn positions(&self) -> Vec<usize> {
        (0..self.width()).filter(|&i| self.bit(i)).collect()
    }

    /// Lowercase hex rendering with a `0x` prefix, e.g. `0x2000`.
    pub fn to_hex(&self) -> String {
        format!("{:#x}", self.bits)
    }

    /// Parses `0x`-prefixed hex into a vector of the given width.
    pub fn from_hex(text: &str, width: usize) -> Result<Self, Gf2Error> {
        let trimmed = text.trim();
        let digits = trimmed
            .strip_prefix("0x")
            .or_else(|| trimmed.strip_prefix("0X"))
            .unwrap_or(trimmed);
        let bits = u64::from_str_radix(digits, 16)
            .map_err(|_| Gf2Error::BadHex(text.to_string()))?;
        Self::new(bits, width)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.bits)
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({:#x}/{})", self.bits, self.width)
    }
}

/// Incrementally maintained reduced row-echelon basis.
///
/// Rows are kept fully reduced with pivots at the highest set bit, so the
/// stored basis is the canonical form of the span at every point. Insertion
/// and membership tests are O(rank) word operations.
#[derive(Clone, Debug)]
pub struct GaussBasis {
    width: usize,
    rows: Vec<u64>, // sorted by descending pivot, mutually reduced
}

impl GaussBasis {
    pub fn new(width: usize) -> Result<Self, Gf2Error> {
        if !(1..=64).contains(&width) {
            return Err(Gf2Error::InvalidWidth(width));
        }
        Ok(Self {
            width,
            rows: Vec::new(),
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `word` against the basis; zero means it is in the span.
    #[inline]
    pub fn reduce(&self, mut word: u64) -> u64 {
        for &row in &self.rows {
            let pivot = 63 - row.leading_zeros();
            if (word >> pivot) & 1 == 1 {
                word ^= row;
            }
        }
        word
    }

    /// True iff `word` lies in the span of the inserted rows.
    #[inline]
    pub fn contains(&self, word: u64) -> bool {
        self.reduce(word) == 0
    }

    /// Inserts a row, returning true iff it increased the rank.
    pub fn insert(&mut self, word: u64) -> bool {
        debug_assert_eq!(word & !width_mask(self.width), 0);
        let reduced = self.reduce(word);
        if reduced == 0 {
            return false;
        }
        let pivot = 63 - reduced.leading_zeros();
        // Back-substitute so existing rows stay clear of the new pivot.
        for row in &mut self.rows {
            if (*row >> pivot) & 1 == 1 {
                *row ^= reduced;
            }
        }
        let at = self
            .rows
            .partition_point(|&r| (63 - r.leading_zeros()) > pivot);
        self.rows.insert(at, reduced);
        true
    }

    /// True iff inserting `word` would increase the rank.
    #[inline]
    pub fn would_increase(&self, word: u64) -> bool {
        !self.contains(word)
    }

    /// Basis rows by descending pivot.
    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    /// Pivot positions by descending bit order.
    pub fn pivots(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|&r| (63 - r.leading_zeros()) as usize)
            .collect()
    }

    pub fn into_matrix(self) -> BitMatrix {
        BitMatrix {
            width: self.width,
            rows: self.rows,
        }
    }
}

/// Result of reduced row-echelon form computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rref {
    /// Canonical form: zero rows dropped, rows sorted by descending pivot,
    /// every pivot column cleared in all other rows.
    pub reduced: BitMatrix,
    /// Number of linearly independent rows.
    pub rank: usize,
    /// Pivot bit positions, descending.
    pub pivots: Vec<usize>,
}

/// An ordered list of equal-width rows over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    width: usize,
    rows: Vec<u64>,
}

impl BitMatrix {
    /// An empty matrix (no rows) of the given width. Zero widths are
    /// rejected; empty row lists are fine.
    pub fn new(width: usize) -> Result<Self, Gf2Error> {
        if !(1..=64).contains(&width) {
            return Err(Gf2Error::InvalidWidth(width));
        }
        Ok(Self {
            width,
            rows: Vec::new(),
        })
    }

    pub fn from_rows(width: usize, rows: &[BitVector]) -> Result<Self, Gf2Error> {
        let mut matrix = Self::new(width)?;
        for row in rows {
            matrix.push_row(*row)?;
        }
        Ok(matrix)
    }

    /// Builds from packed words, validating each against the width.
    pub fn from_row_bits(width: usize, rows: &[u64]) -> Result<Self, Gf2Error> {
        let mut matrix = Self::new(width)?;
        for &bits in rows {
            if bits & !width_mask(width) != 0 {
                return Err(Gf2Error::BitsOutOfRange { bits, width });
            }
            matrix.rows.push(bits);
        }
        Ok(matrix)
    }

    /// The identity map: row `i` selects exactly bit `i`.
    pub fn identity(width: usize) -> Result<Self, Gf2Error> {
        let rows: Vec<u64> = (0..width).map(|i| 1u64 << i).collect();
        Self::from_row_bits(width, &rows)
    }

    pub fn push_row(&mut self, row: BitVector) -> Result<(), Gf2Error> {
        if row.width() != self.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width,
                right: row.width(),
            });
        }
        self.rows.push(row.bits());
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn row(&self, index: usize) -> BitVector {
        BitVector {
            bits: self.rows[index],
            width: self.width as u8,
        }
    }

    #[inline]
    pub fn row_bits(&self) -> &[u64] {
        &self.rows
    }

    pub fn rows(&self) -> impl Iterator<Item = BitVector> + '_ {
        let width = self.width as u8;
        self.rows.iter().map(move |&bits| BitVector { bits, width })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &BitMatrix) -> Result<BitMatrix, Gf2Error> {
        if self.width != other.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        let mut rows = self.rows.clone();
        rows.extend_from_slice(&other.rows);
        Ok(BitMatrix {
            width: self.width,
            rows,
        })
    }

    /// Hex rendering of every row, in order.
    pub fn to_hex_rows(&self) -> Vec<String> {
        self.rows().map(|r| r.to_hex()).collect()
    }

    /// Union of the supports of all rows.
    pub fn column_support(&self) -> u64 {
        self.rows.iter().fold(0u64, |acc, &r| acc | r)
    }

    /// Unique reduced row-echelon form of the row space. Zero rows are
    /// dropped, rows come out sorted by descending pivot position.
    pub fn rref(&self) -> Rref {
        let mut basis = GaussBasis::new(self.width).expect("matrix width already validated");
        for &row in &self.rows {
            basis.insert(row);
        }
        let pivots = basis.pivots();
        let rank = basis.rank();
        Rref {
            reduced: basis.into_matrix(),
            rank,
            pivots,
        }
    }

    /// Number of linearly independent rows.
    pub fn rank(&self) -> usize {
        let mut basis = GaussBasis::new(self.width).expect("matrix width already validated");
        for &row in &self.rows {
            basis.insert(row);
        }
        basis.rank()
    }

    /// Canonical basis of `{ v | self . v^T = 0 }`.
    ///
    /// Row count is always `width - rank` (rank-nullity), and every returned
    /// row has even overlap with every row of `self`. An empty matrix is
    /// unconstrained, so its nullspace is the identity basis.
    pub fn nullspace_basis(&self) -> BitMatrix {
        let rref = self.rref();
        let pivot_mask: u64 = rref.pivots.iter().fold(0u64, |acc, &p| acc | (1u64 << p));
        let mut basis = GaussBasis::new(self.width).expect("matrix width already validated");
        for free in (0..self.width).rev() {
            if (pivot_mask >> free) & 1 == 1 {
                continue;
            }
            // Solve for the pivot coordinates that cancel this free column.
            let mut vector = 1u64 << free;
            for (row, &pivot) in rref.reduced.rows.iter().zip(&rref.pivots) {
                if (row >> free) & 1 == 1 {
                    vector |= 1u64 << pivot;
                }
            }
            basis.insert(vector);
        }
        debug_assert_eq!(basis.rank(), self.width - rref.rank);
        basis.into_matrix()
    }

    /// True iff both matrices span the same row space.
    pub fn row_space_equal(&self, other: &BitMatrix) -> Result<bool, Gf2Error> {
        if self.width != other.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        let r1 = self.rank();
        let r2 = other.rank();
        if r1 != r2 {
            return Ok(false);
        }
        Ok(self.stack(other)?.rank() == r1)
    }

    /// True iff `v` lies in the span of the rows.
    pub fn contains_in_span(&self, v: &BitVector) -> Result<bool, Gf2Error> {
        if v.width() != self.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width,
                right: v.width(),
            });
        }
        let mut basis = GaussBasis::new(self.width).expect("matrix width already validated");
        for &row in &self.rows {
            basis.insert(row);
        }
        Ok(basis.contains(v.bits()))
    }

    /// Applies the linear map: output bit `i` is the parity of
    /// `a AND row[i]`. Output width equals the row count.
    pub fn apply_map(&self, a: &BitVector) -> Result<BitVector, Gf2Error> {
        if a.width() != self.width {
            return Err(Gf2Error::WidthMismatch {
                left: self.width,
                right: a.width(),
            });
        }
        if self.rows.is_empty() {
            return Err(Gf2Error::EmptyMatrix);
        }
        if self.rows.len() > 64 {
            return Err(Gf2Error::InvalidWidth(self.rows.len()));
        }
        let mut out = 0u64;
        for (i, &row) in self.rows.iter().enumerate() {
            out |= u64::from((a.bits() & row).count_ones() & 1) << i;
        }
        BitVector::new(out, self.rows.len())
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitMatrix(width={}, rows=[", self.width)?;
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{row:#x}")?;
        }
        write!(f, "])")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(width: usize, rows: &[u64]) -> BitMatrix {
        BitMatrix::from_row_bits(width, rows).unwrap()
    }

    /// Exhaustive span of a row set, for cross-checking rank and membership.
    fn brute_span(width: usize, rows: &[u64]) -> std::collections::HashSet<u64> {
        let mut span = std::collections::HashSet::from([0u64]);
        for &row in rows {
            let masked = row & width_mask(width);
            let existing: Vec<u64> = span.iter().copied().collect();
            for v in existing {
                span.insert(v ^ masked);
            }
        }
        span
    }

    #[test]
    fn parity_basics() {
        assert!(!BitVector::new(0b0, 4).unwrap().parity());
        assert!(!BitVector::new(0b101, 4).unwrap().parity());
        assert!(BitVector::new(0b1110, 4).unwrap().parity());
    }

    #[test]
    fn masked_parity_basics() {
        let m = BitVector::new(0b0011, 4).unwrap();
        assert!(!BitVector::new(0b1111, 4).unwrap().masked_parity(&m).unwrap());
        assert!(BitVector::new(0b1010, 4).unwrap().masked_parity(&m).unwrap());
        let zero_mask = BitVector::zero(4).unwrap();
        for bits in 0..16u64 {
            let a = BitVector::new(bits, 4).unwrap();
            assert!(!a.masked_parity(&zero_mask).unwrap());
        }
        let narrow = BitVector::new(0b1, 3).unwrap();
        assert!(matches!(
            BitVector::new(0b1, 4).unwrap().masked_parity(&narrow),
            Err(Gf2Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn vector_construction_limits() {
        assert!(matches!(BitVector::new(0, 0), Err(Gf2Error::InvalidWidth(0))));
        assert!(matches!(BitVector::new(0, 65), Err(Gf2Error::InvalidWidth(65))));
        assert!(matches!(
            BitVector::new(0b10000, 4),
            Err(Gf2Error::BitsOutOfRange { .. })
        ));
        assert_eq!(BitVector::new(u64::MAX, 64).unwrap().hamming_weight(), 64);
    }

    #[test]
    fn hex_round_trip() {
        let v = BitVector::new(0x2000, 16).unwrap();
        assert_eq!(v.to_hex(), "0x2000");
        assert_eq!(BitVector::from_hex("0x2000", 16).unwrap(), v);
        assert_eq!(BitVector::from_hex("0X2000", 16).unwrap(), v);
        assert!(BitVector::from_hex("0xzz", 16).is_err());
    }

    #[test]
    fn rref_identity_is_full_rank() {
        let idy = BitMatrix::identity(4).unwrap();
        let rref = idy.rref();
        assert_eq!(rref.rank, 4);
        assert_eq!(rref.pivots, vec![3, 2, 1, 0]);
        // Canonical form lists rows by descending pivot; same row set.
        assert_eq!(rref.reduced, matrix(4, &[0b1000, 0b0100, 0b0010, 0b0001]));
        assert!(rref.reduced.row_space_equal(&idy).unwrap());
    }

    #[test]
    fn rref_drops_duplicates() {
        let rref = matrix(4, &[0b0001, 0b0001, 0b0010, 0b0011]).rref();
        assert_eq!(rref.reduced, matrix(4, &[0b0010, 0b0001]));
        assert_eq!(rref.rank, 2);
        assert_eq!(rref.pivots, vec![1, 0]);
    }

    #[test]
    fn rref_rank_matches_brute_force_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let width = 12;
            let rows: Vec<u64> = (0..rng.random_range(1..=10))
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let rank = matrix(width, &rows).rank();
            let span = brute_span(width, &rows);
            assert_eq!(1usize << rank, span.len());
        }
    }

    #[test]
    fn rref_is_canonical_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..40 {
            let width = rng.random_range(2..=32);
            let mut rows: Vec<u64> = (0..rng.random_range(1..=12))
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let base = matrix(width, &rows).rref();
            // Idempotent.
            assert_eq!(base.reduced.rref().reduced, base.reduced);
            // Permutation-invariant.
            for _ in 0..4 {
                let i = rng.random_range(0..rows.len());
                let j = rng.random_range(0..rows.len());
                rows.swap(i, j);
            }
            assert_eq!(matrix(width, &rows).rref().reduced, base.reduced);
        }
    }

    #[test]
    fn nullspace_of_toy_difference_matrix() {
        let basis = matrix(4, &[0b0001, 0b0010, 0b0011]).nullspace_basis();
        assert_eq!(basis, matrix(4, &[0b1000, 0b0100]));
    }

    #[test]
    fn nullspace_of_empty_matrix_is_identity() {
        for width in [1usize, 5, 64] {
            let empty = BitMatrix::new(width).unwrap();
            let basis = empty.nullspace_basis();
            assert_eq!(basis.row_count(), width);
            assert!(basis.row_space_equal(&BitMatrix::identity(width).unwrap()).unwrap());
        }
    }

    #[test]
    fn nullspace_matches_exhaustive_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let width = 10;
            let rows: Vec<u64> = (0..8)
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let mat = matrix(width, &rows);
            let basis = mat.nullspace_basis();
            let spanned = brute_span(width, basis.row_bits());
            let expected: std::collections::HashSet<u64> = (0..1u64 << width)
                .filter(|&v| rows.iter().all(|&r| (r & v).count_ones() & 1 == 0))
                .collect();
            assert_eq!(spanned, expected);
        }
    }

    #[test]
    fn rank_nullity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..60 {
            let width = rng.random_range(1..=64);
            let rows: Vec<u64> = (0..rng.random_range(0..=20))
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let mat = matrix(width, &rows);
            assert_eq!(mat.rank() + mat.nullspace_basis().row_count(), width);
        }
    }

    #[test]
    fn nullspace_rows_are_orthogonal_to_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..40 {
            let width = rng.random_range(2..=64);
            let rows: Vec<u64> = (0..rng.random_range(1..=16))
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let mat = matrix(width, &rows);
            for v in mat.nullspace_basis().rows() {
                for r in mat.rows() {
                    assert!(!r.masked_parity(&v).unwrap());
                }
            }
        }
    }

    #[test]
    fn rank_edge_cases() {
        assert_eq!(matrix(6, &[0, 0, 0]).rank(), 0);
        assert_eq!(BitMatrix::identity(6).unwrap().rank(), 6);
        let b = matrix(8, &[0b1010, 0b0110, 0b1100]);
        assert_eq!(b.stack(&b).unwrap().rank(), b.rank());
    }

    #[test]
    fn row_space_equal_basics() {
        let b1 = matrix(2, &[0b01, 0b10]);
        let b2 = matrix(2, &[0b11, 0b01]);
        assert!(b1.row_space_equal(&b2).unwrap());
        let c1 = matrix(2, &[0b01]);
        let c2 = matrix(2, &[0b10]);
        assert!(!c1.row_space_equal(&c2).unwrap());
        assert!(matrix(3, &[0b1]).row_space_equal(&matrix(2, &[0b1])).is_err());
    }

    #[test]
    fn row_space_equal_under_invertible_recombination() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..25 {
            let width = rng.random_range(4..=24);
            let k = rng.random_range(1..=4usize);
            let rows: Vec<u64> = (0..k)
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let b = matrix(width, &rows);
            let k = b.rank().max(1);
            let b = b.rref().reduced; // independent rows
            if b.row_count() == 0 {
                continue;
            }
            // Rejection-sample an invertible k x k matrix P.
            let p = loop {
                let rows: Vec<u64> = (0..k).map(|_| rng.random::<u64>() & width_mask(k)).collect();
                let cand = matrix(k, &rows);
                if cand.rank() == k {
                    break cand;
                }
            };
            // P . B
            let recombined: Vec<u64> = p
                .rows()
                .map(|coeffs| {
                    let mut acc = 0u64;
                    for (i, row) in b.rows().enumerate() {
                        if coeffs.bit(i) {
                            acc ^= row.bits();
                        }
                    }
                    acc
                })
                .collect();
            let pb = matrix(width, &recombined);
            assert!(b.row_space_equal(&pb).unwrap());
        }
    }

    #[test]
    fn row_space_equal_is_an_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let width = 10;
            let gen = |rng: &mut ChaCha8Rng| {
                let rows: Vec<u64> = (0..rng.random_range(1..=4))
                    .map(|_| rng.random::<u64>() & width_mask(width))
                    .collect();
                matrix(width, &rows)
            };
            let a = gen(&mut rng);
            let b = gen(&mut rng);
            let c = gen(&mut rng);
            assert!(a.row_space_equal(&a).unwrap());
            assert_eq!(
                a.row_space_equal(&b).unwrap(),
                b.row_space_equal(&a).unwrap()
            );
            if a.row_space_equal(&b).unwrap() && b.row_space_equal(&c).unwrap() {
                assert!(a.row_space_equal(&c).unwrap());
            }
        }
    }

    #[test]
    fn apply_map_identity_and_zero() {
        let idy = BitMatrix::identity(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..16 {
            let a = BitVector::new(rng.random::<u64>() & 0xff, 8).unwrap();
            assert_eq!(idy.apply_map(&a).unwrap(), a);
        }
        let zeros = matrix(8, &[0, 0, 0]);
        let a = BitVector::new(0xa5, 8).unwrap();
        assert_eq!(zeros.apply_map(&a).unwrap(), BitVector::zero(3).unwrap());
        assert!(matches!(
            BitMatrix::new(8).unwrap().apply_map(&a),
            Err(Gf2Error::EmptyMatrix)
        ));
    }

    #[test]
    fn apply_map_matches_hand_evaluated_xor_network() {
        // b0 = p0 ^ p1 ^ p3, b1 = p2 ^ p4, b2 = p5.
        let map = matrix(6, &[0b001011, 0b010100, 0b100000]);
        let cases = [
            (0b000000u64, 0b000u64),
            (0b001011, 0b001),
            (0b000001, 0b001),
            (0b010100, 0b000),
            (0b100000, 0b100),
            (0b111111, 0b101),
            (0b101010, 0b100),
        ];
        for (addr, want) in cases {
            let a = BitVector::new(addr, 6).unwrap();
            assert_eq!(map.apply_map(&a).unwrap().bits(), want, "addr {addr:#b}");
        }
    }

    #[test]
    fn apply_map_matches_popcount_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..40 {
            let width = rng.random_range(2..=64);
            let rows: Vec<u64> = (0..rng.random_range(1..=12))
                .map(|_| rng.random::<u64>() & width_mask(width))
                .collect();
            let map = matrix(width, &rows);
            let a = BitVector::new(rng.random::<u64>() & width_mask(width), width).unwrap();
            let out = map.apply_map(&a).unwrap();
            for (i, &row) in rows.iter().enumerate() {
                assert_eq!(out.bit(i), (row & a.bits()).count_ones() % 2 == 1);
            }
        }
    }

    #[test]
    fn gauss_basis_incremental_membership() {
        let mut basis = GaussBasis::new(8).unwrap();
        assert!(basis.insert(0b1100));
        assert!(basis.insert(0b0110));
        assert!(!basis.insert(0b1010)); // 1100 ^ 0110
        assert!(basis.contains(0b1010));
        assert!(!basis.contains(0b1000));
        assert_eq!(basis.rank(), 2);
    }
}
