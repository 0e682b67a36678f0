//! End-to-end evaluation pipeline: seeded stream construction, scoring,
//! single-group and per-class metrics, calibration, and mean +/- std
//! aggregation over OoD datasets and seeds.
//!
//! This is what the CLI's `eval` and `sweep-tau` commands call; it is kept
//! in the library so the same path is exercisable from tests.

use serde::{Deserialize, Serialize};

use crate::detector::{score_stream, DetectorConfig, ScoreKind, ScoredSample};
use crate::error::{Error, Result};
use crate::ingest::{build_test_stream, SHUFFLE_ALGORITHM};
use crate::metrics::{
    aggregate, ece_from_predictions, multi_threshold_eval, single_eval, Aggregate,
    BinaryScoreSet, EvalReport, ReliabilityBins,
};
use crate::record::{LogitRecord, Origin};
use crate::stats::{self, ClassStats};

/// Default reliability bin count.
pub const DEFAULT_BINS: usize = 15;

/// In-memory evaluation inputs: one train set, one in-distribution test
/// set, one or more named OoD test sets.
#[derive(Debug, Clone)]
pub struct EvalInputs {
    pub train: Vec<LogitRecord>,
    pub in_test: Vec<LogitRecord>,
    pub ood_sets: Vec<(String, Vec<LogitRecord>)>,
}

impl EvalInputs {
    pub fn validate(&self) -> Result<()> {
        let width = self
            .train
            .first()
            .ok_or_else(|| Error::Fit("empty training set".into()))?
            .width();
        let all = self
            .train
            .iter()
            .chain(&self.in_test)
            .chain(self.ood_sets.iter().flat_map(|(_, s)| s.iter()));
        for r in all {
            if r.width() != width {
                return Err(Error::Shape {
                    expected: width,
                    actual: r.width(),
                });
            }
        }
        if self.in_test.is_empty() {
            return Err(Error::InvalidParam("empty in-distribution test set".into()));
        }
        if self.ood_sets.is_empty() || self.ood_sets.iter().any(|(_, s)| s.is_empty()) {
            return Err(Error::InvalidParam("need at least one non-empty OoD set".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.train.first().map(|r| r.width()).unwrap_or(0)
    }
}

/// Detection metrics without curve payloads, as written to the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ece: Option<f64>,
    pub n_in: usize,
    pub n_out: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups_used: Option<usize>,
}

impl MetricsBlock {
    fn from_report(r: &EvalReport) -> Self {
        Self {
            auroc: r.auroc,
            aupr: r.aupr,
            fpr95: r.fpr95,
            ece: r.ece,
            n_in: r.n_in,
            n_out: r.n_out,
            groups_used: r.groups_used,
        }
    }

    fn to_report(&self, grouping: crate::metrics::Grouping) -> EvalReport {
        EvalReport {
            auroc: self.auroc,
            aupr: self.aupr,
            fpr95: self.fpr95,
            ece: self.ece,
            grouping,
            n_in: self.n_in,
            n_out: self.n_out,
            groups_used: self.groups_used,
            roc_curve: None,
            pr_curve: None,
        }
    }
}

/// Per-(seed, OoD dataset) result block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBlock {
    pub name: String,
    pub single: MetricsBlock,
    pub per_class: MetricsBlock,
}

/// All results for one seed, with aggregates over the OoD datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBlock {
    pub seed: u64,
    pub datasets: Vec<DatasetBlock>,
    pub aggregate_single: Aggregate,
    pub aggregate_per_class: Aggregate,
}

/// Report metadata pinning everything needed to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub shuffle_algorithm: String,
    /// Seeds drive stream shuffling (and synthetic generation); model
    /// training is out of scope for this toolkit.
    pub seed_semantics: String,
    pub aupr_flavor: String,
    pub detector: DetectorConfig,
    pub reliability_bins: usize,
    pub num_classes: usize,
}

/// The full report file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: ReportMetadata,
    pub seeds: Vec<SeedBlock>,
    /// Over seeds, of each seed's OoD-dataset aggregate means.
    pub aggregate: FinalAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAggregate {
    pub single: Aggregate,
    pub per_class: Aggregate,
}

/// Curve points for one (seed, dataset) evaluation, for CSV emission.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub seed: u64,
    pub dataset: String,
    pub roc: Vec<(f64, f64)>,
    pub pr: Vec<(f64, f64)>,
    pub reliability: Option<ReliabilityBins>,
}

/// Everything one `eval` run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub curves: Vec<CurveSet>,
}

/// MSP confidence/correctness pairs for the in-distribution samples of a
/// scored stream. Only meaningful for MSP scores (energy is unbounded).
fn calibration_pairs(scored: &[ScoredSample]) -> (Vec<f64>, Vec<bool>) {
    let mut confs = Vec::new();
    let mut correct = Vec::new();
    for s in scored {
        if s.origin == Origin::InTest {
            if let Some(label) = s.label {
                confs.push(s.score);
                correct.push(s.predicted_class == label);
            }
        }
    }
    (confs, correct)
}

/// Run the full evaluation protocol: for each seed and each OoD set, build
/// a shuffled stream, score it, and compute single-group and per-class
/// metrics; aggregate over OoD sets per seed, then over seeds.
pub fn run_eval(
    inputs: &EvalInputs,
    train_stats: &ClassStats,
    detector: &DetectorConfig,
    seeds: &[u64],
    bins: usize,
) -> Result<RunOutput> {
    inputs.validate()?;
    detector.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidParam("need at least one seed".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidParam("bin count must be >= 1".into()));
    }
    if train_stats.num_classes != inputs.num_classes() {
        return Err(Error::Shape {
            expected: inputs.num_classes(),
            actual: train_stats.num_classes,
        });
    }

    let mut seed_blocks = Vec::new();
    let mut curves = Vec::new();
    for &seed in seeds {
        let mut blocks = Vec::new();
        let mut singles = Vec::new();
        let mut per_classes = Vec::new();
        for (name, ood) in &inputs.ood_sets {
            let stream = build_test_stream(&inputs.in_test, &[ood.as_slice()], seed)?;
            let scored = score_stream(&stream, train_stats, detector)?;
            let set = BinaryScoreSet::from_scored(&scored)?;
            let mut single = single_eval(&set)?;
            let per_class = multi_threshold_eval(&scored, train_stats.num_classes)?;

            let mut reliability_bins = None;
            if detector.score_kind == ScoreKind::Msp {
                let (confs, correct) = calibration_pairs(&scored);
                if !confs.is_empty() {
                    let rb = crate::metrics::reliability(&confs, &correct, bins)?;
                    single.ece = Some(crate::metrics::ece(&rb, confs.len())?);
                    reliability_bins = Some(rb);
                }
            }

            curves.push(CurveSet {
                seed,
                dataset: name.clone(),
                roc: single.roc_curve.take().unwrap_or_default(),
                pr: single.pr_curve.take().unwrap_or_default(),
                reliability: reliability_bins,
            });
            singles.push(single.clone());
            per_classes.push(per_class.clone());
            blocks.push(DatasetBlock {
                name: name.clone(),
                single: MetricsBlock::from_report(&single),
                per_class: MetricsBlock::from_report(&per_class),
            });
        }
        seed_blocks.push(SeedBlock {
            seed,
            aggregate_single: aggregate(&singles)?,
            aggregate_per_class: aggregate(&per_classes)?,
            datasets: blocks,
        });
    }

    // Seed-level aggregation runs over each seed's OoD-dataset means.
    let over_seeds = |pick: fn(&SeedBlock) -> &Aggregate| -> Result<Aggregate> {
        let reports: Vec<EvalReport> = seed_blocks
            .iter()
            .map(|b| {
                let a = pick(b);
                MetricsBlock {
                    auroc: a.auroc.mean,
                    aupr: a.aupr.mean,
                    fpr95: a.fpr95.mean,
                    ece: a.ece.map(|e| e.mean),
                    n_in: 0,
                    n_out: 0,
                    groups_used: None,
                }
                .to_report(crate::metrics::Grouping::Single)
            })
            .collect();
        aggregate(&reports)
    };

    let report = RunReport {
        metadata: ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            shuffle_algorithm: SHUFFLE_ALGORITHM.to_string(),
            seed_semantics: "stream-shuffle".to_string(),
            aupr_flavor: "in".to_string(),
            detector: detector.clone(),
            reliability_bins: bins,
            num_classes: train_stats.num_classes,
        },
        aggregate: FinalAggregate {
            single: over_seeds(|b| &b.aggregate_single)?,
            per_class: over_seeds(|b| &b.aggregate_per_class)?,
        },
        seeds: seed_blocks,
    };
    Ok(RunOutput { report, curves })
}

/// One row of a temperature sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub ece_norm: f64,
    pub ece_temp: f64,
}

/// Default sweep grid: log-spaced points covering several orders of
/// magnitude around tau = 1.
pub fn default_tau_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.1f64, 100.0f64, 24usize);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// ECE of tau-parameterized norm-scaling and of plain temperature scaling
/// over a labeled in-distribution test set, one row per grid point.
///
/// Matches the `eval` calibration path: the predicted label comes from the
/// unscaled logits (scaling is a calibration map here, not a classifier
/// change) and the confidence is the scaled max softmax probability, so a
/// sweep over `[1.0]` reproduces `eval`'s ECE under norm scaling exactly.
pub fn sweep_tau(
    in_test: &[LogitRecord],
    train_stats: &ClassStats,
    grid: &[f64],
    bins: usize,
    epsilon: f64,
) -> Result<Vec<SweepRow>> {
    if in_test.is_empty() {
        return Err(Error::InvalidParam("empty in-distribution test set".into()));
    }
    if in_test.iter().any(|r| r.label().is_none()) {
        return Err(Error::InvalidParam(
            "temperature sweep needs ground-truth labels on every in-distribution sample".into(),
        ));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &tau in grid {
        if !(tau > 0.0) {
            return Err(Error::InvalidParam(format!("tau must be > 0, got {tau}")));
        }
        let mut conf_norm = Vec::with_capacity(in_test.len());
        let mut conf_temp = Vec::with_capacity(in_test.len());
        let mut correct = Vec::with_capacity(in_test.len());
        for r in in_test {
            let raw = r.logits_f64();
            let pred = crate::detector::argmax(&raw);
            correct.push(pred == r.label().unwrap());
            let scaled = stats::tau_norm_scale(&raw, train_stats, tau, epsilon)?;
            conf_norm.push(crate::detector::msp_score(&scaled)?.1);
            let scaled = stats::temperature_scale(&raw, tau)?;
            conf_temp.push(crate::detector::msp_score(&scaled)?.1);
        }
        rows.push(SweepRow {
            tau,
            ece_norm: ece_from_predictions(&conf_norm, &correct, bins)?,
            ece_temp: ece_from_predictions(&conf_temp, &correct, bins)?,
        });
    }
    Ok(rows)
}
