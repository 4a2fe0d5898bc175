//! Orchestration of the full recovery pipeline and its report documents.
//!
//! Phase 1: a random-pair trace is thresholded, classified, optionally
//! re-verified against an oracle (repeat measurements expose mislabeled
//! pairs), and fed to the bank solver. Phase 2: a same-bank trace generated
//! with the recovered masks goes through the analogous steps for the row
//! solver. The end-to-end runner wires both phases together against a
//! simulated target and scores the result on fresh labeled pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank_solver::{
    conflict_pairs, explain_fraction, subsample_vote, BankRecovery, SolveError, VoteConfig,
    VoteDetail,
};
use crate::bounds::{bank_sample_bound, row_sample_bound, BoundParams, BoundsError};
use crate::gf2::{BitMatrix, BitVector, Gf2Error};
use crate::mapping::{serialize_spec, MappingError, MappingSpec};
use crate::metrics::{compare_bases, evaluate, EvaluationReport, MetricsError};
use crate::oracle::{ConflictOracle, OracleError, SimulatorOracle};
use crate::row_solver::{
    recover_row_masks, row_hit_pairs, RowError, RowRecovery, SearchConfig,
};
use crate::simulator::{
    generate_labeled_pairs, generate_trace, generate_trace_preserving, GenConfig, LatencyModel,
    SimError,
};
use crate::traces::{
    classify, find_threshold_with, ConflictLabel, ThresholdOptions, ThresholdReport, TraceError,
    TraceRecord,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Staged {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("trace has no records")]
    EmptyTrace,
    #[error("records carry neither latencies nor labels")]
    NoUsableSignal,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Row(#[from] RowError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

impl PipelineError {
    fn staged(stage: &'static str) -> impl FnOnce(PipelineError) -> PipelineError {
        move |source| PipelineError::Staged {
            stage,
            source: Box::new(source),
        }
    }

    /// Innermost non-wrapper error, for exit-code mapping.
    pub fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Staged { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Bank-phase report document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankReport {
    pub source: String,
    pub address_bits: usize,
    pub bank_masks: Vec<String>,
    pub undetermined_bits: Vec<usize>,
    #[serde(rename = "rank_D")]
    pub rank_d: usize,
    pub pairs_used: usize,
    pub explain_fraction: f64,
    pub vote_detail: Option<VoteDetail>,
    /// Latency threshold used for classification, if one was derived.
    pub threshold: Option<u64>,
    pub threshold_detail: Option<ThresholdReport>,
    /// Conflict labels flipped by oracle re-verification.
    pub verified_flips: usize,
}

/// Row-phase report document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowReport {
    pub source: String,
    pub address_bits: usize,
    pub coarse_mask: String,
    pub row_masks: Vec<String>,
    pub pivots: Vec<usize>,
    pub k_prime: usize,
    pub total_weight: usize,
    pub search_exhausted: bool,
    pub verified_flips: usize,
}

/// Combined end-to-end report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct E2eReport {
    pub bank: BankReport,
    pub rows: RowReport,
    pub evaluation: EvaluationReport,
    pub basis_match: bool,
    /// Recovered mapping, as a mapping document.
    pub recovered_spec: String,
}

#[derive(Debug, Clone, Copy)]
pub struct BankSolveOptions {
    pub vote: VoteConfig,
    pub threshold_override: Option<u64>,
    pub threshold_opts: ThresholdOptions,
    /// Overwrite labels already present in the trace.
    pub relabel: bool,
}

impl Default for BankSolveOptions {
    fn default() -> Self {
        Self {
            vote: VoteConfig::default(),
            threshold_override: None,
            threshold_opts: ThresholdOptions::default(),
            relabel: false,
        }
    }
}

#[derive(Debug)]
pub struct BankSolveOutput {
    pub labeled: Vec<TraceRecord>,
    pub threshold: Option<u64>,
    pub threshold_detail: Option<ThresholdReport>,
    pub recovery: BankRecovery,
    pub explain_fraction: f64,
    pub verified_flips: usize,
    pub report: BankReport,
}

fn label_records(
    records: &[TraceRecord],
    threshold_override: Option<u64>,
    threshold_opts: &ThresholdOptions,
    relabel: bool,
) -> Result<(Vec<TraceRecord>, Option<u64>, Option<ThresholdReport>), PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyTrace);
    }
    if let Some(t) = threshold_override {
        return Ok((classify(records, t, relabel)?, Some(t), None));
    }
    let latencies: Vec<u64> = records.iter().filter_map(|r| r.latency).collect();
    if latencies.is_empty() {
        if records.iter().all(|r| r.label.is_some()) {
            return Ok((records.to_vec(), None, None));
        }
        return Err(PipelineError::NoUsableSignal);
    }
    let detail = find_threshold_with(&latencies, threshold_opts)?;
    let labeled = classify(records, detail.threshold, relabel)?;
    Ok((labeled, Some(detail.threshold), Some(detail)))
}

/// Re-measures records of the given label class through the oracle and flips
/// the ones it contradicts. Returns the number of flips.
fn verify_labels(
    records: &mut [TraceRecord],
    oracle: &mut dyn ConflictOracle,
    class: ConflictLabel,
) -> Result<usize, PipelineError> {
    let mut flips = 0usize;
    for record in records.iter_mut() {
        if record.label != Some(class) {
            continue;
        }
        let verdict = oracle.query(&record.addr_a, &record.addr_b)?;
        if verdict != class.is_conflict() {
            record.label = Some(if verdict {
                ConflictLabel::Conflict
            } else {
                ConflictLabel::NoConflict
            });
            flips += 1;
        }
    }
    Ok(flips)
}

/// Phase 1: threshold detection, classification, optional oracle
/// verification of the conflict set, then the subsampling vote.
pub fn solve_banks(
    records: &[TraceRecord],
    opts: &BankSolveOptions,
    mut oracle: Option<&mut dyn ConflictOracle>,
    source: &str,
) -> Result<BankSolveOutput, PipelineError> {
    let (mut labeled, threshold, threshold_detail) = label_records(
        records,
        opts.threshold_override,
        &opts.threshold_opts,
        opts.relabel,
    )?;
    let mut verified_flips = 0usize;
    if let Some(oracle) = oracle.as_deref_mut() {
        verified_flips = verify_labels(&mut labeled, oracle, ConflictLabel::Conflict)?;
    }
    let pairs = conflict_pairs(&labeled);
    let recovery = subsample_vote(&pairs, &opts.vote)?;
    let explain = explain_fraction(&recovery.basis, &labeled)?;
    let report = BankReport {
        source: source.to_string(),
        address_bits: recovery.width(),
        bank_masks: recovery.basis.to_hex_rows(),
        undetermined_bits: recovery.undetermined_bits.clone(),
        rank_d: recovery.rank_d,
        pairs_used: recovery.pairs_used,
        explain_fraction: explain,
        vote_detail: recovery.vote_detail.clone(),
        threshold,
        threshold_detail: threshold_detail.clone(),
        verified_flips,
    };
    Ok(BankSolveOutput {
        labeled,
        threshold,
        threshold_detail,
        recovery,
        explain_fraction: explain,
        verified_flips,
        report,
    })
}

/// Rebuilds a `BankRecovery` from its report document.
pub fn bank_recovery_from_report(report: &BankReport) -> Result<BankRecovery, PipelineError> {
    let mut basis = BitMatrix::new(report.address_bits)?;
    for mask in &report.bank_masks {
        basis.push_row(BitVector::from_hex(mask, report.address_bits)?)?;
    }
    Ok(BankRecovery {
        k: basis.row_count(),
        basis,
        undetermined_bits: report.undetermined_bits.clone(),
        rank_d: report.rank_d,
        pairs_used: report.pairs_used,
        vote_detail: report.vote_detail.clone(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RowSolveOptions {
    pub search: SearchConfig,
    pub seed: u64,
    pub threshold_override: Option<u64>,
    pub threshold_opts: ThresholdOptions,
    pub relabel: bool,
}

impl Default for RowSolveOptions {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            seed: 0,
            threshold_override: None,
            threshold_opts: ThresholdOptions::default(),
            relabel: false,
        }
    }
}

#[derive(Debug)]
pub struct RowSolveOutput {
    pub labeled: Vec<TraceRecord>,
    pub recovery: RowRecovery,
    pub verified_flips: usize,
    pub report: RowReport,
}

/// Phase 2: classify the same-bank trace (usually with the phase-1
/// threshold), verify the row-hit set against the oracle, and recover the
/// row basis. The trace must consist of same-bank pairs.
pub fn solve_rows(
    records: &[TraceRecord],
    bank: &BankRecovery,
    opts: &RowSolveOptions,
    oracle: &mut dyn ConflictOracle,
    source: &str,
) -> Result<RowSolveOutput, PipelineError> {
    // A same-bank trace is nearly all conflicts, so its latency histogram is
    // not reliably bimodal; prefer an explicit threshold from phase 1 and
    // fall back to labels or local detection.
    let (mut labeled, _, _) = label_records(
        records,
        opts.threshold_override,
        &opts.threshold_opts,
        opts.relabel,
    )?;
    // Row hits are rare under wide row functions, so mislabeled conflicts
    // flood the hit set unless each claimed hit is re-verified.
    let verified_flips = verify_labels(&mut labeled, oracle, ConflictLabel::NoConflict)?;
    let hits = row_hit_pairs(&labeled);
    let recovery = recover_row_masks(&hits, bank, oracle, &opts.search, opts.seed)?;
    let report = RowReport {
        source: source.to_string(),
        address_bits: bank.width(),
        coarse_mask: recovery.coarse_mask.to_hex(),
        row_masks: recovery.row_basis.to_hex_rows(),
        pivots: recovery.pivot_positions.clone(),
        k_prime: recovery.k_prime,
        total_weight: recovery.total_weight,
        search_exhausted: recovery.search_exhausted,
        verified_flips,
    };
    Ok(RowSolveOutput {
        labeled,
        recovery,
        verified_flips,
        report,
    })
}

/// Builds a full mapping spec from the two recovery phases.
pub fn assemble_recovered_spec(
    bank: &BankRecovery,
    rows: &RowRecovery,
    label: &str,
) -> Result<MappingSpec, PipelineError> {
    Ok(MappingSpec::new(
        bank.width(),
        bank.basis.clone(),
        rows.row_basis.clone(),
        false,
        label,
    )?)
}

#[derive(Debug, Clone, Copy)]
pub struct E2eOptions {
    pub seed: u64,
    /// Phase-1 random pairs; default 4x the bank sample bound.
    pub phase1_pairs: Option<usize>,
    /// Phase-2 same-bank pairs; default 4x the row sample bound.
    pub phase2_pairs: Option<usize>,
    pub eval_pairs: usize,
    pub alignment_bits: usize,
    pub vote: VoteConfig,
    pub search: SearchConfig,
    /// Re-verify suspicious labels through the simulated oracle.
    pub verify: bool,
    /// Label the evaluation pairs with noisy latencies at this rate instead
    /// of ground truth.
    pub eval_mislabel_rate: Option<f64>,
}

impl Default for E2eOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            phase1_pairs: None,
            phase2_pairs: None,
            eval_pairs: 10_000,
            alignment_bits: 6,
            vote: VoteConfig::default(),
            search: SearchConfig::default(),
            verify: true,
            eval_mislabel_rate: None,
        }
    }
}

#[derive(Debug)]
pub struct E2eOutput {
    pub recovered: MappingSpec,
    pub bank: BankSolveOutput,
    pub rows: RowSolveOutput,
    pub evaluation: EvaluationReport,
    pub basis_match: bool,
    pub report: E2eReport,
}

fn default_pair_counts(
    spec: &MappingSpec,
    model: &LatencyModel,
    opts: &E2eOptions,
) -> Result<(usize, usize), PipelineError> {
    let n = spec.address_bits();
    let params = BoundParams {
        n,
        k: spec.bank_bits(),
        k_prime: spec.row_bits(),
        theta: model.mislabel_rate,
        epsilon: 0.01,
    };
    let phase1 = match opts.phase1_pairs {
        Some(m) => m,
        None => 4 * bank_sample_bound(&params)? as usize,
    };
    let phase2 = match opts.phase2_pairs {
        Some(m) => m,
        None => 4 * row_sample_bound(&params)? as usize,
    };
    Ok((phase1, phase2))
}

/// Full pipeline against a simulated target: generate, solve banks, generate
/// same-bank pairs with the *recovered* masks, solve rows, evaluate on fresh
/// ground-truth-labeled pairs.
pub fn run_e2e(
    spec: &MappingSpec,
    model: &LatencyModel,
    opts: &E2eOptions,
) -> Result<E2eOutput, PipelineError> {
    let n = spec.address_bits();
    let (phase1_pairs, phase2_pairs) = default_pair_counts(spec, model, opts)?;

    let mut cfg1 = GenConfig::new(n, phase1_pairs, opts.seed);
    cfg1.alignment_bits = opts.alignment_bits;
    let trace1 = generate_trace(spec, model, &cfg1).map_err(PipelineError::from)
        .map_err(PipelineError::staged("simulate"))?;

    // The oracle mirrors a prober re-measuring pairs on the live target; it
    // sees the same noisy latencies, not ground truth.
    let mut oracle = if opts.verify && !model.closed_page {
        Some(
            SimulatorOracle::new(
                spec.clone(),
                *model,
                SearchConfig::default().oracle_trials,
                opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(17),
            )
            .map_err(PipelineError::from)
            .map_err(PipelineError::staged("simulate"))?,
        )
    } else {
        None
    };

    let bank_opts = BankSolveOptions {
        vote: VoteConfig {
            seed: opts.seed ^ 0x5eed,
            ..opts.vote
        },
        ..BankSolveOptions::default()
    };
    let bank = solve_banks(
        &trace1,
        &bank_opts,
        oracle.as_mut().map(|o| o as &mut dyn ConflictOracle),
        spec.label(),
    )
    .map_err(PipelineError::staged("solve-banks"))?;

    let mut cfg2 = GenConfig::new(n, phase2_pairs, opts.seed.wrapping_add(1));
    cfg2.alignment_bits = opts.alignment_bits;
    let trace2 = generate_trace_preserving(spec, model, &cfg2, &bank.recovery.basis)
        .map_err(PipelineError::from)
        .map_err(PipelineError::staged("simulate-same-bank"))?;

    let row_opts = RowSolveOptions {
        search: opts.search,
        seed: opts.seed ^ 0x0515,
        threshold_override: bank.threshold,
        ..RowSolveOptions::default()
    };
    let mut row_oracle = SimulatorOracle::new(
        spec.clone(),
        *model,
        opts.search.oracle_trials,
        opts.seed.wrapping_mul(0x85eb_ca6b).wrapping_add(29),
    )
    .map_err(PipelineError::from)
    .map_err(PipelineError::staged("solve-rows"))?;
    let rows = solve_rows(&trace2, &bank.recovery, &row_opts, &mut row_oracle, spec.label())
        .map_err(PipelineError::staged("solve-rows"))?;

    let recovered = assemble_recovered_spec(
        &bank.recovery,
        &rows.recovery,
        &format!("recovered: {}", spec.label()),
    )
    .map_err(PipelineError::staged("solve-rows"))?;

    // Fresh validation pairs, never seen by the solvers.
    let mut eval_cfg = GenConfig::new(n, opts.eval_pairs, opts.seed.wrapping_add(0xe7a1));
    eval_cfg.alignment_bits = opts.alignment_bits;
    let eval_records = match opts.eval_mislabel_rate {
        None => generate_labeled_pairs(spec, &eval_cfg),
        Some(rate) => {
            let eval_model = LatencyModel {
                mislabel_rate: rate,
                ..*model
            };
            let raw = generate_trace(spec, &eval_model, &eval_cfg)?;
            let threshold = bank.threshold.unwrap_or(eval_model.midpoint() as u64);
            Ok(classify(&raw, threshold, false)?)
        }
    }
    .map_err(PipelineError::from)
    .map_err(PipelineError::staged("evaluate"))?;
    let mut evaluation =
        evaluate(&recovered, &eval_records).map_err(PipelineError::from)
            .map_err(PipelineError::staged("evaluate"))?;

    let observed = bank.recovery.observed_mask();
    let bank_match = compare_bases(&bank.recovery.basis, spec.bank_matrix(), &observed)
        .map_err(PipelineError::from)?;
    let full_recovered = bank.recovery.basis.stack(&rows.recovery.row_basis)?;
    let full_truth = spec.bank_matrix().stack(spec.row_matrix())?;
    let full_match = compare_bases(&full_recovered, &full_truth, &observed)?;
    let basis_match = bank_match && full_match;
    evaluation.basis_match = Some(basis_match);

    let report = E2eReport {
        bank: bank.report.clone(),
        rows: rows.report.clone(),
        evaluation: evaluation.clone(),
        basis_match,
        recovered_spec: serialize_spec(&recovered),
    };
    Ok(E2eOutput {
        recovered,
        bank,
        rows,
        evaluation,
        basis_match,
        report,
    })
}
