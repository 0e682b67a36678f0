//! Detection and calibration metrics: ROC/PR curves, AUROC, AUPR, FPR95,
//! per-predicted-class multi-threshold evaluation, reliability bins, ECE,
//! and multi-run aggregation.
//!
//! Convention throughout: the positive class is in-distribution, so "TPR
//! 95%" means retaining 95% of in-distribution samples. A sample counts as
//! predicted positive when its score is `>=` the threshold.

use serde::{Deserialize, Serialize};

use crate::detector::ScoredSample;
use crate::error::{Error, Result};
use crate::record::Origin;

/// Scores split into positives (in-distribution) and negatives (OoD).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryScoreSet {
    pub in_scores: Vec<f64>,
    pub out_scores: Vec<f64>,
}

impl BinaryScoreSet {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self> {
        for (name, side) in [("in", &in_scores), ("out", &out_scores)] {
            if let Some(pos) = side.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("{name}_scores[{pos}]"),
                });
            }
        }
        Ok(Self {
            in_scores,
            out_scores,
        })
    }

    /// Collect the scores of a sample sequence by origin tag.
    pub fn from_scored(samples: &[ScoredSample]) -> Result<Self> {
        let mut in_scores = Vec::new();
        let mut out_scores = Vec::new();
        for s in samples {
            match s.origin {
                Origin::InTest => in_scores.push(s.score),
                Origin::OodTest => out_scores.push(s.score),
                Origin::Train => {
                    return Err(Error::Consistency(
                        "training samples have no place in a test score set".into(),
                    ))
                }
            }
        }
        Self::new(in_scores, out_scores)
    }

    fn check_non_empty(&self) -> Result<()> {
        if self.in_scores.is_empty() || self.out_scores.is_empty() {
            return Err(Error::Metric(
                "curve metrics need at least one score on each side".into(),
            ));
        }
        Ok(())
    }
}

/// Unique score values, descending. Used as the threshold sweep.
fn unique_thresholds(s: &BinaryScoreSet) -> Vec<f64> {
    let mut all: Vec<f64> = s
        .in_scores
        .iter()
        .chain(s.out_scores.iter())
        .copied()
        .collect();
    all.sort_by(|a, b| b.total_cmp(a));
    all.dedup();
    all
}

fn count_ge(sorted_desc: &[f64], threshold: f64) -> usize {
    // sorted descending: first index where value < threshold
    sorted_desc.partition_point(|&v| v >= threshold)
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// ROC curve: one point per unique threshold, anchored at (0,0) and (1,1).
pub fn roc_points(s: &BinaryScoreSet) -> Result<Vec<(f64, f64)>> {
    s.check_non_empty()?;
    let ins = sorted_desc(&s.in_scores);
    let outs = sorted_desc(&s.out_scores);
    let n_in = ins.len() as f64;
    let n_out = outs.len() as f64;
    let mut points = vec![(0.0, 0.0)];
    for theta in unique_thresholds(s) {
        let tpr = count_ge(&ins, theta) as f64 / n_in;
        let fpr = count_ge(&outs, theta) as f64 / n_out;
        points.push((fpr, tpr));
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }
    Ok(points)
}

/// Trapezoidal area under the ROC curve.
///
/// Equals the Mann-Whitney statistic (fraction of (in, out) pairs with
/// in > out, ties counting one half).
pub fn auroc(s: &BinaryScoreSet) -> Result<f64> {
    let points = roc_points(s)?;
    let mut area = 0.0;
    for w in points.windows(2) {
        let (f0, t0) = w[0];
        let (f1, t1) = w[1];
        area += (f1 - f0) * (t0 + t1) / 2.0;
    }
    Ok(area)
}

/// Average-precision AUPR: sum of (delta recall x precision) over the
/// descending threshold sweep, positives = in-distribution.
pub fn aupr(s: &BinaryScoreSet) -> Result<f64> {
    s.check_non_empty()?;
    let ins = sorted_desc(&s.in_scores);
    let outs = sorted_desc(&s.out_scores);
    let n_in = ins.len() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for theta in unique_thresholds(s) {
        let tp = count_ge(&ins, theta) as f64;
        let fp = count_ge(&outs, theta) as f64;
        let recall = tp / n_in;
        if tp + fp > 0.0 {
            ap += (recall - prev_recall) * (tp / (tp + fp));
        }
        prev_recall = recall;
    }
    Ok(ap)
}

/// Minimum FPR over thresholds achieving TPR >= `target`, no interpolation.
pub fn fpr_at_tpr(s: &BinaryScoreSet, target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "target TPR must be in (0, 1], got {target}"
        )));
    }
    s.check_non_empty()?;
    let ins = sorted_desc(&s.in_scores);
    let outs = sorted_desc(&s.out_scores);
    let n_in = ins.len() as f64;
    let n_out = outs.len() as f64;
    // TPR and FPR both grow as the threshold drops, so the first threshold
    // reaching the target gives the minimum FPR.
    for theta in unique_thresholds(s) {
        let tpr = count_ge(&ins, theta) as f64 / n_in;
        if tpr >= target {
            return Ok(count_ge(&outs, theta) as f64 / n_out);
        }
    }
    Ok(1.0)
}

/// Default FPR95 operating point.
pub fn fpr95(s: &BinaryScoreSet) -> Result<f64> {
    fpr_at_tpr(s, 0.95)
}

/// One confidence bin of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub count: usize,
    /// Empirical accuracy; absent for empty bins.
    pub acc: Option<f64>,
    /// Mean confidence; absent for empty bins.
    pub conf: Option<f64>,
}

/// Reliability diagram data: `M` equal-width confidence bins, where bin m
/// covers the interval ((m-1)/M, m/M].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub num_bins: usize,
    pub bins: Vec<Bin>,
}

impl ReliabilityBins {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Assign each sample to bin ceil(p * M); a confidence of exactly 0 goes to
/// bin 1 (unreachable for softmax outputs, guards degenerate input).
pub fn reliability(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<ReliabilityBins> {
    if num_bins == 0 {
        return Err(Error::InvalidParam("bin count must be >= 1".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::Shape {
            expected: confidences.len(),
            actual: correct.len(),
        });
    }
    if let Some(pos) = confidences
        .iter()
        .position(|&p| !(0.0..=1.0).contains(&p))
    {
        return Err(Error::InvalidParam(format!(
            "confidence[{pos}] = {} outside [0, 1]",
            confidences[pos]
        )));
    }
    let m = num_bins as f64;
    let mut counts = vec![0usize; num_bins];
    let mut hits = vec![0usize; num_bins];
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); num_bins];
    for (&p, &ok) in confidences.iter().zip(correct) {
        let idx = ((p * m).ceil() as usize).clamp(1, num_bins) - 1;
        counts[idx] += 1;
        members[idx].push(p);
        if ok {
            hits[idx] += 1;
        }
    }
    let bins = (0..num_bins)
        .map(|i| {
            if counts[i] == 0 {
                Bin {
                    count: 0,
                    acc: None,
                    conf: None,
                }
            } else {
                // summed in sorted order so the result does not depend on
                // the order the samples arrived in
                members[i].sort_by(f64::total_cmp);
                let sum: f64 = members[i].iter().sum();
                Bin {
                    count: counts[i],
                    acc: Some(hits[i] as f64 / counts[i] as f64),
                    conf: Some(sum / counts[i] as f64),
                }
            }
        })
        .collect();
    Ok(ReliabilityBins { num_bins, bins })
}

/// Expected calibration error: bin-weighted |acc - conf|. Empty bins
/// contribute zero.
pub fn ece(bins: &ReliabilityBins, n: usize) -> Result<f64> {
    if bins.total_count() != n {
        return Err(Error::Consistency(format!(
            "bin counts sum to {}, expected {n}",
            bins.total_count()
        )));
    }
    if n == 0 {
        return Err(Error::Consistency("ECE over zero samples".into()));
    }
    let mut e = 0.0;
    for b in &bins.bins {
        if let (Some(acc), Some(conf)) = (b.acc, b.conf) {
            e += (b.count as f64 / n as f64) * (acc - conf).abs();
        }
    }
    Ok(e)
}

/// Convenience: reliability + ECE in one call.
pub fn ece_from_predictions(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<f64> {
    let bins = reliability(confidences, correct, num_bins)?;
    ece(&bins, confidences.len())
}

/// How a report's detection metrics were grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Single,
    PerClass,
}

/// Detection metrics for one evaluation, optionally with curve points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ece: Option<f64>,
    pub grouping: Grouping,
    pub n_in: usize,
    pub n_out: usize,
    /// Number of class groups contributing to a per-class average.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_curve: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_curve: Option<Vec<(f64, f64)>>,
}

/// Single-group metrics over the whole score set, with curves.
pub fn single_eval(s: &BinaryScoreSet) -> Result<EvalReport> {
    Ok(EvalReport {
        auroc: auroc(s)?,
        aupr: aupr(s)?,
        fpr95: fpr95(s)?,
        ece: None,
        grouping: Grouping::Single,
        n_in: s.in_scores.len(),
        n_out: s.out_scores.len(),
        groups_used: None,
        roc_curve: Some(roc_points(s)?),
        pr_curve: Some(pr_points(s)?),
    })
}

/// PR curve points (recall, precision) over the descending threshold sweep.
pub fn pr_points(s: &BinaryScoreSet) -> Result<Vec<(f64, f64)>> {
    s.check_non_empty()?;
    let ins = sorted_desc(&s.in_scores);
    let outs = sorted_desc(&s.out_scores);
    let n_in = ins.len() as f64;
    let mut points = Vec::new();
    for theta in unique_thresholds(s) {
        let tp = count_ge(&ins, theta) as f64;
        let fp = count_ge(&outs, theta) as f64;
        if tp + fp > 0.0 {
            points.push((tp / n_in, tp / (tp + fp)));
        }
    }
    Ok(points)
}

/// Per-predicted-class evaluation: split samples into class groups, compute
/// detection metrics per group, and average with uniform class weights.
///
/// Groups missing either origin are skipped; zero usable groups is an error.
pub fn multi_threshold_eval(scored: &[ScoredSample], num_classes: usize) -> Result<EvalReport> {
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); num_classes];
    let mut n_in = 0;
    let mut n_out = 0;
    for s in scored {
        if s.predicted_class >= num_classes {
            return Err(Error::Consistency(format!(
                "predicted class {} out of range for {num_classes} classes",
                s.predicted_class
            )));
        }
        match s.origin {
            Origin::InTest => {
                groups[s.predicted_class].0.push(s.score);
                n_in += 1;
            }
            Origin::OodTest => {
                groups[s.predicted_class].1.push(s.score);
                n_out += 1;
            }
            Origin::Train => {
                return Err(Error::Consistency(
                    "training samples have no place in a test score set".into(),
                ))
            }
        }
    }
    let mut sums = (0.0, 0.0, 0.0);
    let mut used = 0usize;
    for (ins, outs) in groups {
        if ins.is_empty() || outs.is_empty() {
            continue;
        }
        let set = BinaryScoreSet::new(ins, outs)?;
        sums.0 += auroc(&set)?;
        sums.1 += aupr(&set)?;
        sums.2 += fpr95(&set)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Metric(
            "no class group contains both in-distribution and OoD samples".into(),
        ));
    }
    let k = used as f64;
    Ok(EvalReport {
        auroc: sums.0 / k,
        aupr: sums.1 / k,
        fpr95: sums.2 / k,
        ece: None,
        grouping: Grouping::PerClass,
        n_in,
        n_out,
        groups_used: Some(used),
        roc_curve: None,
        pr_curve: None,
    })
}

/// Mean and population standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.max(0.0).sqrt(),
        }
    }
}

/// Mean +/- std aggregates across a sequence of reports (over OoD datasets
/// or over seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub auroc: MeanStd,
    pub aupr: MeanStd,
    pub fpr95: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ece: Option<MeanStd>,
}

pub fn aggregate(reports: &[EvalReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::InvalidParam("cannot aggregate zero reports".into()));
    }
    let collect = |f: fn(&EvalReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let eces: Vec<f64> = reports.iter().filter_map(|r| r.ece).collect();
    Ok(Aggregate {
        auroc: MeanStd::from_values(&collect(|r| r.auroc)),
        aupr: MeanStd::from_values(&collect(|r| r.aupr)),
        fpr95: MeanStd::from_values(&collect(|r| r.fpr95)),
        ece: if eces.len() == reports.len() {
            Some(MeanStd::from_values(&eces))
        } else {
            None
        },
    })
}
