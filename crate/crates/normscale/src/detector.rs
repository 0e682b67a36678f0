//! Detectors: turn (possibly scaled) logits into predicted classes,
//! in-distribution scores, and binary in/out decisions.
//!
//! Both score kinds are oriented so that higher means more in-distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{LogitRecord, Origin};
use crate::stats::{self, ClassStats, StreamMode, StreamState, DEFAULT_EPSILON};

/// OoD score family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Maximum softmax probability of the predicted class.
    Msp,
    /// Log-sum-exp of the logits (energy with the sign flipped so that
    /// higher = more in-distribution).
    Energy,
}

/// Which scaling is applied to the logits before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    Norm,
    TauNorm,
    Temp,
}

/// Frozen training statistics vs running statistics at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    Frozen,
    RunningLiteral,
    RunningStandard,
}

impl StatsMode {
    pub fn stream_mode(self) -> Option<StreamMode> {
        match self {
            StatsMode::Frozen => None,
            StatsMode::RunningLiteral => Some(StreamMode::Literal),
            StatsMode::RunningStandard => Some(StreamMode::Standard),
        }
    }
}

/// Which logits the predicted class is read from.
///
/// Per-class scaling can move the argmax. Scaling is meant as a score
/// map, not a change to the classifier, so the default takes the label
/// from the raw logits while the OoD score comes from the scaled ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    UnscaledLogits,
    ScaledLogits,
}

/// Full detector configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub score_kind: ScoreKind,
    pub scaling: Scaling,
    pub tau: f64,
    pub stats_mode: StatsMode,
    pub prediction_source: PredictionSource,
    pub epsilon: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            score_kind: ScoreKind::Msp,
            scaling: Scaling::None,
            tau: 1.0,
            stats_mode: StatsMode::Frozen,
            prediction_source: PredictionSource::UnscaledLogits,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.scaling, Scaling::TauNorm | Scaling::Temp) && !(self.tau > 0.0) {
            return Err(Error::InvalidParam(format!(
                "tau must be > 0 for tau-norm/temp scaling, got {}",
                self.tau
            )));
        }
        if self.stats_mode != StatsMode::Frozen
            && !matches!(self.scaling, Scaling::Norm | Scaling::TauNorm)
        {
            return Err(Error::InvalidParam(
                "running statistics require norm or tau-norm scaling".into(),
            ));
        }
        Ok(())
    }
}

/// Detector output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub predicted_class: usize,
    pub score: f64,
    pub score_kind: ScoreKind,
    pub origin: Origin,
    /// Ground-truth label when known; carried through for calibration.
    pub label: Option<usize>,
}

/// Binary in/out decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    InDistribution,
    OutOfDistribution,
}

fn check_finite(logits: &[f64]) -> Result<()> {
    if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("logit column {pos}"),
        });
    }
    Ok(())
}

/// Argmax with ties broken by the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-subtraction), invariant under adding a
/// constant to every logit.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits)?;
    if logits.is_empty() {
        return Err(Error::InvalidParam("softmax of an empty vector".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Maximum softmax probability and predicted class.
pub fn msp_score(logits: &[f64]) -> Result<(usize, f64)> {
    let probs = softmax(logits)?;
    let class = argmax(&probs);
    Ok((class, probs[class]))
}

/// Log-sum-exp score: `tau * ln sum_j exp(z_j / tau)`.
///
/// This is the energy score with the sign flipped so higher means more
/// in-distribution, matching the MSP orientation. Computed with
/// max-subtraction; no overflow for |z| up to 1e4.
pub fn energy_score(logits: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParam(format!("tau must be > 0, got {tau}")));
    }
    check_finite(logits)?;
    if logits.is_empty() {
        return Err(Error::InvalidParam("energy score of an empty vector".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max) / tau;
    let sum: f64 = logits.iter().map(|&z| (z / tau - max).exp()).sum();
    Ok(tau * (max + sum.ln()))
}

/// Threshold rule: scores strictly below the threshold are flagged OoD.
pub fn decide(score: f64, threshold: f64) -> Decision {
    if score < threshold {
        Decision::OutOfDistribution
    } else {
        Decision::InDistribution
    }
}

fn scale_logits(
    raw: &[f64],
    stats: &ClassStats,
    config: &DetectorConfig,
    stream: Option<&StreamState>,
) -> Result<Vec<f64>> {
    let effective;
    let stats_ref = match stream {
        Some(state) => {
            effective = state.snapshot();
            &effective
        }
        None => stats,
    };
    match config.scaling {
        Scaling::None => Ok(raw.to_vec()),
        Scaling::Norm => stats::norm_scale(raw, stats_ref, config.epsilon),
        Scaling::TauNorm => stats::tau_norm_scale(raw, stats_ref, config.tau, config.epsilon),
        Scaling::Temp => stats::temperature_scale(raw, config.tau),
    }
}

/// Score a single record against fixed (already-updated) statistics.
fn score_one(
    record: &LogitRecord,
    stats: &ClassStats,
    config: &DetectorConfig,
    stream: Option<&StreamState>,
) -> Result<ScoredSample> {
    let raw = record.logits_f64();
    let scaled = scale_logits(&raw, stats, config, stream)?;
    let predicted_class = match config.prediction_source {
        PredictionSource::UnscaledLogits => argmax(&raw),
        PredictionSource::ScaledLogits => argmax(&scaled),
    };
    let score = match config.score_kind {
        ScoreKind::Msp => {
            let probs = softmax(&scaled)?;
            probs[argmax(&probs)]
        }
        // Temperature effects come in through the scaling step, so the
        // log-sum-exp itself runs at tau = 1.
        ScoreKind::Energy => energy_score(&scaled, 1.0)?,
    };
    Ok(ScoredSample {
        predicted_class,
        score,
        score_kind: config.score_kind,
        origin: record.origin(),
        label: record.label(),
    })
}

/// Score an ordered test stream.
///
/// With frozen statistics each record is scored independently. With a
/// running mode the sample is first folded into the running statistics and
/// then scaled with the updated mean/variance, strictly in stream order.
pub fn score_stream(
    records: &[LogitRecord],
    stats: &ClassStats,
    config: &DetectorConfig,
) -> Result<Vec<ScoredSample>> {
    config.validate()?;
    let mut stream = config.stats_mode.stream_mode().map(|m| StreamState::init(stats, m));
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        if let Some(state) = stream.as_mut() {
            state.update(&record.logits_f64())?;
        }
        out.push(score_one(record, stats, config, stream.as_ref())?);
    }
    Ok(out)
}
