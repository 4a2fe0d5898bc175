//! Complete addressing functions: bank/channel and row parity-mask matrices
//! over the physical address bits, plus presets for surveyed platforms.
//!
//! A mapping takes an n-bit physical address to a (bank, row) location pair.
//! Each output bit is the parity of the address masked by one row of the
//! corresponding matrix. Channel, rank and bank bits are not distinguished:
//! the bank matrix covers the combined "same bank and channel" predicate,
//! which is exactly what the row-buffer side channel observes. Column bits
//! are implicit: they are the address bits outside every mask's support.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{BitMatrix, BitVector, GaussBasis, Gf2Error};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("address_bits {0} out of range (expected 1..=64)")]
    InvalidAddressBits(usize),
    #[error("{which} mask list is empty")]
    EmptyMaskList { which: &'static str },
    #[error("{which} mask #{index} is zero")]
    ZeroMask { which: &'static str, index: usize },
    #[error("{which} mask {mask} does not fit in {address_bits} address bits")]
    MaskTooWide {
        which: &'static str,
        mask: String,
        address_bits: usize,
    },
    #[error("bank mask {mask} is linearly dependent on the masks before it")]
    DependentBankMask { mask: String },
    #[error("row mask {mask} lies in the span of the bank masks and earlier row masks")]
    RankViolation { mask: String },
    #[error("malformed mapping document: {0}")]
    Document(String),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

/// A physical-to-DRAM addressing function `[bank_matrix; row_matrix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingSpec {
    address_bits: usize,
    bank_matrix: BitMatrix,
    row_matrix: BitMatrix,
    row_masks_synthetic: bool,
    label: String,
}

/// The observable location of an address: combined channel/rank/bank index
/// and row index. Widths match the producing spec's mask counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DramLocation {
    pub bank_index: BitVector,
    pub row_index: BitVector,
}

impl MappingSpec {
    /// Validates and builds a spec. The bank masks must be linearly
    /// independent and the stacked `[bank; row]` matrix must have rank
    /// `k + k'` so the row function adds genuinely new index bits.
    pub fn new(
        address_bits: usize,
        bank_matrix: BitMatrix,
        row_matrix: BitMatrix,
        row_masks_synthetic: bool,
        label: impl Into<String>,
    ) -> Result<Self, MappingError> {
        if !(1..=64).contains(&address_bits) {
            return Err(MappingError::InvalidAddressBits(address_bits));
        }
        for (which, matrix) in [("bank", &bank_matrix), ("row", &row_matrix)] {
            if matrix.width() != address_bits {
                return Err(MappingError::MaskTooWide {
                    which,
                    mask: format!("(matrix width {})", matrix.width()),
                    address_bits,
                });
            }
            if matrix.is_empty() {
                return Err(MappingError::EmptyMaskList { which });
            }
            for (index, row) in matrix.rows().enumerate() {
                if row.is_zero() {
                    return Err(MappingError::ZeroMask { which, index });
                }
            }
        }
        let mut basis = GaussBasis::new(address_bits)?;
        for row in bank_matrix.rows() {
            if !basis.insert(row.bits()) {
                return Err(MappingError::DependentBankMask { mask: row.to_hex() });
            }
        }
        for row in row_matrix.rows() {
            if !basis.insert(row.bits()) {
                return Err(MappingError::RankViolation { mask: row.to_hex() });
            }
        }
        Ok(Self {
            address_bits,
            bank_matrix,
            row_matrix,
            row_masks_synthetic,
            label: label.into(),
        })
    }

    #[inline]
    pub fn address_bits(&self) -> usize {
        self.address_bits
    }

    pub fn bank_matrix(&self) -> &BitMatrix {
        &self.bank_matrix
    }

    pub fn row_matrix(&self) -> &BitMatrix {
        &self.row_matrix
    }

    /// Number of bank/channel index bits.
    pub fn bank_bits(&self) -> usize {
        self.bank_matrix.row_count()
    }

    /// Number of row index bits.
    pub fn row_bits(&self) -> usize {
        self.row_matrix.row_count()
    }

    pub fn row_masks_synthetic(&self) -> bool {
        self.row_masks_synthetic
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Maps an address to its DRAM location.
    pub fn locate(&self, a: &BitVector) -> Result<DramLocation, MappingError> {
        Ok(DramLocation {
            bank_index: self.bank_matrix.apply_map(a)?,
            row_index: self.row_matrix.apply_map(a)?,
        })
    }

    /// True iff the pair hits the same bank but different rows, i.e. the
    /// access pattern that forces a row-buffer conflict.
    pub fn is_conflict(&self, a: &BitVector, b: &BitVector) -> Result<bool, MappingError> {
        let la = self.locate(a)?;
        let lb = self.locate(b)?;
        Ok(la.bank_index == lb.bank_index && la.row_index != lb.row_index)
    }
}

/// On-disk mapping document (TOML key/value text).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MappingSpecDoc {
    label: String,
    address_bits: usize,
    bank_masks: Vec<String>,
    row_masks: Vec<String>,
    row_masks_synthetic: bool,
}

/// Parses a mapping document, enforcing all spec invariants.
pub fn parse_spec(text: &str) -> Result<MappingSpec, MappingError> {
    let doc: MappingSpecDoc =
        toml::from_str(text).map_err(|e| MappingError::Document(e.to_string()))?;
    if !(1..=64).contains(&doc.address_bits) {
        return Err(MappingError::InvalidAddressBits(doc.address_bits));
    }
    let parse_masks = |which: &'static str, masks: &[String]| -> Result<BitMatrix, MappingError> {
        let mut matrix = BitMatrix::new(doc.address_bits)?;
        for text in masks {
            let mask = BitVector::from_hex(text, doc.address_bits).map_err(|_| {
                MappingError::MaskTooWide {
                    which,
                    mask: text.clone(),
                    address_bits: doc.address_bits,
                }
            })?;
            matrix.push_row(mask)?;
        }
        Ok(matrix)
    };
    let bank = parse_masks("bank", &doc.bank_masks)?;
    let row = parse_masks("row", &doc.row_masks)?;
    MappingSpec::new(
        doc.address_bits,
        bank,
        row,
        doc.row_masks_synthetic,
        doc.label,
    )
}

/// Renders a spec as a mapping document. `parse_spec(serialize_spec(s)) == s`.
pub fn serialize_spec(spec: &MappingSpec) -> String {
    let doc = MappingSpecDoc {
        label: spec.label.clone(),
        address_bits: spec.address_bits,
        bank_masks: spec.bank_matrix.to_hex_rows(),
        row_masks: spec.row_matrix.to_hex_rows(),
        row_masks_synthetic: spec.row_masks_synthetic,
    };
    toml::to_string(&doc).expect("mapping document serialization cannot fail")
}

/// Bank/channel mask sets measured on surveyed platforms. Address widths
/// cover both the installed DRAM and the highest mask bit.
struct Preset {
    name: &'static str,
    label: &'static str,
    address_bits: usize,
    bank_masks: &'static [u64],
}

const PRESETS: &[Preset] = &[
    Preset {
        name: "rpi3b+",
        label: "Raspberry Pi 3B+ (BCM2837B0, 1 GB LPDDR2)",
        address_bits: 30,
        bank_masks: &[0x2000, 0x4000, 0x8000],
    },
    Preset {
        name: "pixel3a",
        label: "Google Pixel 3a (Snapdragon 670, 4 GB LPDDR4)",
        address_bits: 32,
        bank_masks: &[0x274e9000, 0x69d3a000, 0x53a74000, 0x80000000],
    },
    Preset {
        name: "switch-p4",
        label: "Switch P4 (Pentium D1517, 8 GB DDR4)",
        address_bits: 34,
        bank_masks: &[0x100040, 0x220000, 0x440000, 0x880000, 0x300000000],
    },
    Preset {
        name: "tower-5810",
        label: "Dell Precision Tower 5810 (Xeon E5-1650 v3, 32 GB DDR4)",
        address_bits: 35,
        bank_masks: &[
            0x8000,
            0x100000000,
            0x200000000,
            0x400000000,
            0x800040,
            0x1100000,
            0x2200000,
            0x4400000,
            0x55080,
            0x88a2100,
        ],
    },
    Preset {
        name: "tower-7875",
        label: "Dell Precision Tower 7875 (Threadripper PRO 7955WX, 64 GB DDR5)",
        address_bits: 37,
        bank_masks: &[
            0x84201000,
            0x40214100,
            0x188400200,
            0x1421002000,
            0x310800400,
            0x1842100800,
            0xff80000,
            0xd6f700440,
        ],
    },
    Preset {
        name: "poweredge-r630",
        label: "Dell PowerEdge R630 (Xeon E5-2630 v3, 128 GB DDR4)",
        address_bits: 38,
        bank_masks: &[
            0x800040,
            0xa00000000,
            0xc00000000,
            0x3000000000,
            0x4408000,
            0x2820000000,
            0x5500000,
            0x6600000,
            0x88a2100,
            0x4455080,
        ],
    },
    Preset {
        name: "dl360-gen10plus",
        label: "HPE ProLiant DL360 Gen10 Plus (Xeon Silver 4314, 256 GB DDR4)",
        address_bits: 38,
        bank_masks: &[
            0x8000,
            0x800000000,
            0x1000000000,
            0x2000000000,
            0x800040,
            0x1100000,
            0x2200000,
            0x4400000,
            0x4004100,
            0x6024800,
        ],
    },
    Preset {
        name: "sr630-v2",
        label: "Lenovo ThinkSystem SR630 V2 (Xeon Gold 5318Y, 256 GB DDR4)",
        address_bits: 38,
        bank_masks: &[
            0x10000,
            0x800000000,
            0x1000000000,
            0x2000000000,
            0x1000040,
            0x2200000,
            0x4400000,
            0x8800000,
            0x4004100,
            0x8008200,
            0x6024800,
        ],
    },
    Preset {
        name: "dgx-1",
        label: "Nvidia DGX-1 (Xeon E5-2698 v4, 512 GB DDR4)",
        address_bits: 39,
        bank_masks: &[
            0x2000000000,
            0x4000000000,
            0x10000,
            0x8000,
            0x2200000,
            0x1000040,
            0x20080,
            0x8800000,
            0x4400000,
            0x1145100,
        ],
    },
    Preset {
        name: "powernv-s822lc",
        label: "IBM PowerNV S822LC (POWER8NVL, 128 GB DDR4)",
        address_bits: 37,
        bank_masks: &[
            0x80, 0x100, 0x200, 0x400, 0x800, 0x1000, 0x2000, 0x4000, 0x8000, 0x500000000,
            0x600000000,
        ],
    },
];

/// Names of all built-in presets, in listing order.
pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// Loads a platform preset by name.
///
/// Only bank/channel masks were measured on hardware; row matrices are
/// synthesized (single-bit masks on free address bits, preferring bits above
/// the highest bank-mask bit) and flagged `row_masks_synthetic` so they are
/// never mistaken for ground truth.
pub fn load_preset(name: &str) -> Result<MappingSpec, MappingError> {
    let preset = PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| MappingError::UnknownPreset(name.to_string()))?;
    let bank = BitMatrix::from_row_bits(preset.address_bits, preset.bank_masks)?;
    let row_positions = synthetic_row_positions(preset.address_bits, &bank);
    let rows: Vec<u64> = row_positions.iter().map(|&p| 1u64 << p).collect();
    let row = BitMatrix::from_row_bits(preset.address_bits, &rows)?;
    MappingSpec::new(preset.address_bits, bank, row, true, preset.label)
}

/// Picks single-bit row mask positions on address bits untouched by any bank
/// mask. Bits above the highest bank bit come first; bits 0..5 are skipped
/// (sub-cache-line offsets) and at least two free bits are left over to act
/// as column bits so that same-row address pairs can still differ.
fn synthetic_row_positions(address_bits: usize, bank: &BitMatrix) -> Vec<usize> {
    let support = bank.column_support();
    let highest = 63 - support.leading_zeros() as usize;
    let free: Vec<usize> = (6..address_bits)
        .filter(|&b| (support >> b) & 1 == 0)
        .collect();
    let mut candidates: Vec<usize> = free.iter().copied().filter(|&b| b > highest).collect();
    candidates.extend(free.iter().copied().filter(|&b| b < highest));
    let k_prime = candidates.len().saturating_sub(2).clamp(1, 12);
    candidates.truncate(k_prime);
    candidates
}
